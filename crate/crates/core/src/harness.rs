//! Monte Carlo experiments: Δ sweeps, scheme comparisons and scaled worlds.
//!
//! Every run `r` draws its true occupancy from `stream(seed, "eval", [r])`,
//! so all channels evaluated in one experiment see bit-equal true counts.
//! Reports are drawn from `stream(seed, "channel", [r])` whatever the
//! channel, so neighbouring channels see the same uniforms (common random
//! numbers). Cells are computed in parallel and reduced in (Δ, run) order.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{constant_outside_attack, inference_accuracy, map_infer_beam, AttackConfig};
use crate::distortion::design::log_spaced;
use crate::distortion::{
    build_constraint_tables, default_delta_bracket, design_distortion_from, fixed_schedule_series,
    multinomial_scheme, mutual_information, uniform_scheme, ConstraintTables, DesignConfig,
    DesignResult, DistortionMatrix, WorkingHours,
};
use crate::error::{Error, Result};
use crate::occupancy::{
    occupancy_from_traces, occupancy_marginal, sample_traces, FhmmModel, LocationTrace,
    OccupancySeries, TransitionMatrix, ZoneSet,
};
use crate::rng::{derive_seed, stream};
use crate::thermal::{closed_loop_simulate, run_closed_loop, ClosedLoopLog, MpcConfig, MpcProblem};

/// Settings shared by every harness experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub problem: MpcProblem,
    pub mpc: MpcConfig,
    pub design: DesignConfig,
    pub beam_width: usize,
    /// Steps per Monte Carlo run.
    pub eval_steps: usize,
    pub runs: usize,
    pub t_init: f64,
    pub calendar: WorkingHours,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            problem: MpcProblem::default(),
            mpc: MpcConfig::default(),
            design: DesignConfig::default(),
            beam_width: AttackConfig::default().beam_width,
            eval_steps: 1440,
            runs: 10,
            t_init: 25.0,
            calendar: WorkingHours::default(),
        }
    }
}

impl Experiment {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.mpc.validate()?;
        self.design.validate()?;
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        if self.eval_steps == 0 {
            return Err(Error::invalid("eval_steps must be at least 1"));
        }
        if self.beam_width == 0 {
            return Err(Error::invalid("beam_width must be at least 1"));
        }
        if !self.t_init.is_finite() {
            return Err(Error::invalid("t_init must be finite"));
        }
        Ok(())
    }

    fn attack(&self) -> AttackConfig {
        AttackConfig {
            beam_width: self.beam_width,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffRecord {
    pub delta: f64,
    /// Summed over zones.
    pub mi_bits: f64,
    pub cost_diff_mean: f64,
    pub cost_diff_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    pub feasible: bool,
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Baseline {
    pub name: String,
    pub acc_mean: f64,
    pub acc_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub records: Vec<TradeoffRecord>,
    /// Clean-data attack and the constant-outside guess.
    pub baselines: Vec<Baseline>,
    /// Per Δ, the designed channel of each zone (`None` when infeasible).
    pub designs: Vec<Vec<Option<DesignResult>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Optimal { delta: f64 },
    Uniform,
    Multinomial { acc: f64 },
    Identity,
    FixedSchedule,
}

impl Scheme {
    pub fn name(&self) -> String {
        match self {
            Scheme::Optimal { delta } => format!("optimal({delta:.6e})"),
            Scheme::Uniform => "uniform".into(),
            Scheme::Multinomial { acc } => format!("multinomial({acc})"),
            Scheme::Identity => "identity".into(),
            Scheme::FixedSchedule => "fixed_schedule".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeComparison {
    pub scheme: String,
    pub mi_bits: f64,
    pub cost_mean: f64,
    pub cost_std: f64,
    pub acc_mean: f64,
    pub acc_std: f64,
    /// No other scheme has both lower-or-equal MI and cost, one strictly.
    pub pareto: bool,
    /// Total closed-loop cost of each run.
    #[serde(skip)]
    pub costs: Vec<f64>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with tied values given their average rank.
/// NaN when either side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::DimensionMismatch(format!(
            "spearman needs two equal series of length ≥ 2, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, _) = mean_std(&ra);
    let (mb, _) = mean_std(&rb);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Evaluates `f(0..n)` in parallel; results come back in index order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(&f).collect()
}

/// A synthetic office building: occupant `m` works in zone `(m mod N) + 1`,
/// visits the other zones briefly and is outside about three quarters of
/// the time. Rates vary by up to ±30% per occupant.
pub fn office_world(occupants: usize, zones: usize, seed: u64) -> Result<FhmmModel> {
    if occupants == 0 || zones == 0 {
        return Err(Error::invalid("need at least one occupant and one zone"));
    }
    let d = zones + 1;
    let mut chains = Vec::with_capacity(occupants);
    for m in 0..occupants {
        let mut rng = stream(seed, "office", &[m as u64]);
        let mut jitter = |base: f64| base * rng.gen_range(0.7..1.3);
        let office = m % zones + 1;
        let mut rows = vec![vec![0.0; d]; d];
        rows[0][office] = jitter(0.01);
        rows[office][0] = jitter(0.03);
        for z in 1..d {
            if z == office {
                continue;
            }
            rows[office][z] = jitter(0.01);
            rows[z][office] = jitter(0.1);
            rows[z][0] = jitter(0.02);
        }
        for (i, row) in rows.iter_mut().enumerate() {
            let off: f64 = row.iter().sum();
            row[i] = 1.0 - off;
        }
        chains.push(TransitionMatrix::new(rows)?);
    }
    let names = (0..occupants).map(|m| format!("occupant{m}")).collect();
    FhmmModel::stationary(ZoneSet::with_interior(zones), names, chains)
}

/// Draws `occupants` profiles uniformly with replacement from `base`.
pub fn synthesize_scaled_world(base: &FhmmModel, occupants: usize, seed: u64) -> Result<FhmmModel> {
    if base.chains.is_empty() {
        return Err(Error::invalid("base model has no occupant profiles"));
    }
    if occupants == 0 {
        return Err(Error::invalid("need at least one occupant"));
    }
    let mut rng = stream(seed, "synth", &[]);
    let mut chains = Vec::with_capacity(occupants);
    let mut initial = Vec::with_capacity(occupants);
    for _ in 0..occupants {
        let i = rng.gen_range(0..base.chains.len());
        chains.push(base.chains[i].clone());
        initial.push(base.initial[i].clone());
    }
    let names = (0..occupants).map(|m| format!("synthetic{m}")).collect();
    FhmmModel::new(base.zone_set.clone(), names, chains, initial)
}

struct Run {
    traces: Vec<LocationTrace>,
    series: OccupancySeries,
    identity: ClosedLoopLog,
}

/// Per-zone tables and count laws for one world, built once per experiment.
pub struct DesignContext {
    pub tables: Vec<ConstraintTables>,
    pub p_y: Vec<Vec<f64>>,
}

impl DesignContext {
    pub fn new(world: &FhmmModel, exp: &Experiment) -> Result<Self> {
        let zones = world.zone_count();
        let m = world.occupant_count();
        // every zone runs the same problem, so one table serves them all
        let tables = vec![build_constraint_tables(&exp.problem, &exp.design, &exp.mpc, m)?; zones];
        let p_y = occupancy_marginal(world)?.per_zone;
        Ok(Self { tables, p_y })
    }

    /// Largest lower and upper bracket ends over the zones.
    pub fn bracket(&self, delta_t: f64) -> Result<(f64, f64)> {
        let mut lo = 0.0_f64;
        let mut hi = 0.0_f64;
        for t in &self.tables {
            let (a, b) = default_delta_bracket(t, delta_t)?;
            lo = lo.max(a);
            hi = hi.max(b);
        }
        Ok((lo, hi))
    }

    /// One design per zone, each warm-started from `warm` when given.
    pub fn design(
        &self,
        delta: f64,
        base: &DesignConfig,
        warm: Option<&[Option<DistortionMatrix>]>,
    ) -> Result<Vec<DesignResult>> {
        let cfg = DesignConfig {
            delta,
            ..base.clone()
        };
        (0..self.tables.len())
            .map(|n| {
                let w = warm.and_then(|w| w[n].as_ref());
                design_distortion_from(&self.tables[n], &self.p_y[n], &cfg, w)
            })
            .collect()
    }
}

/// The default sweep: `count` log-spaced values across the feasibility bracket.
pub fn default_deltas(ctx: &DesignContext, exp: &Experiment, count: usize) -> Result<Vec<f64>> {
    let (lo, hi) = ctx.bracket(exp.design.delta_t)?;
    Ok(log_spaced(lo, hi, count))
}

fn zones_of(world: &FhmmModel) -> Result<usize> {
    match world.zone_count() {
        0 => Err(Error::invalid("world has no interior zones")),
        n => Ok(n),
    }
}

fn prepare_runs(world: &FhmmModel, exp: &Experiment, seed: u64) -> Result<Vec<Run>> {
    let zones = zones_of(world)?;
    let problems = vec![exp.problem.clone(); zones];
    let t0 = vec![exp.t_init; zones];
    par_map(exp.runs, |r| {
        let traces = sample_traces(
            world,
            exp.eval_steps,
            derive_seed(seed, "eval", &[r as u64]),
        )?;
        let series = occupancy_from_traces(&traces, &world.zone_set)?;
        let identity = run_closed_loop(&series.counts, &series.counts, &problems, &exp.mpc, &t0)?;
        Ok(Run {
            traces,
            series,
            identity,
        })
    })
}

fn iteration_costs(log: &ClosedLoopLog, penalty: f64) -> Vec<Vec<f64>> {
    log.zones
        .iter()
        .map(|z| {
            let mut out = vec![0.0; z.iterations.len()];
            for s in &z.steps {
                out[s.iter] += s.energy_cost + penalty * s.violation;
            }
            out
        })
        .collect()
}

/// Mean over zones and controller iterations of distorted minus identity cost.
pub fn per_iteration_cost_diff(
    distorted: &ClosedLoopLog,
    identity: &ClosedLoopLog,
    penalty: f64,
) -> f64 {
    let a = iteration_costs(distorted, penalty);
    let b = iteration_costs(identity, penalty);
    let mut sum = 0.0;
    let mut n = 0usize;
    for (za, zb) in a.iter().zip(&b) {
        for (x, y) in za.iter().zip(zb) {
            sum += x - y;
            n += 1;
        }
    }
    sum / n as f64
}

fn attack_accuracy(
    reported: &[Vec<u32>],
    world: &FhmmModel,
    channels: &[DistortionMatrix],
    truth: &[LocationTrace],
    cfg: &AttackConfig,
) -> Result<f64> {
    let inferred = map_infer_beam(reported, world, channels, cfg)?;
    inference_accuracy(&inferred.traces, truth)
}

fn run_error(index: usize, e: Error) -> Error {
    Error::invalid(format!("run {index} failed: {e}"))
}

/// Designs a channel per zone for every Δ (warm-starting each from the
/// previous Δ) and evaluates it over `exp.runs` closed-loop runs paired
/// with identity-channel runs on the same true occupancy.
pub fn run_tradeoff_sweep(
    world: &FhmmModel,
    exp: &Experiment,
    deltas: &[f64],
    seed: u64,
) -> Result<SweepReport> {
    exp.validate()?;
    let ctx = DesignContext::new(world, exp)?;
    run_tradeoff_sweep_with(world, exp, &ctx, deltas, seed)
}

pub fn run_tradeoff_sweep_with(
    world: &FhmmModel,
    exp: &Experiment,
    ctx: &DesignContext,
    deltas: &[f64],
    seed: u64,
) -> Result<SweepReport> {
    exp.validate()?;
    if deltas.is_empty() {
        return Err(Error::invalid("the Δ sweep is empty"));
    }
    if deltas.windows(2).any(|w| !(w[0] < w[1])) || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::invalid(
            "Δ values must be nonnegative and strictly ascending",
        ));
    }
    let zones = zones_of(world)?;
    let m = world.occupant_count();
    let problems = vec![exp.problem.clone(); zones];
    let t0 = vec![exp.t_init; zones];
    let attack = exp.attack();

    let mut designs = Vec::with_capacity(deltas.len());
    let mut warm: Vec<Option<DistortionMatrix>> = vec![None; zones];
    for &delta in deltas {
        let results = ctx.design(delta, &exp.design, Some(&warm))?;
        if results.iter().all(|r| r.feasible) {
            warm = results.iter().map(|r| r.matrix.clone()).collect();
            designs.push(results.into_iter().map(Some).collect::<Vec<_>>());
        } else {
            designs.push(vec![None; zones]);
        }
    }

    let runs = prepare_runs(world, exp, seed)?;
    let ident = vec![DistortionMatrix::identity(m); zones];
    let clean = par_map(exp.runs, |r| {
        let run = &runs[r];
        attack_accuracy(&run.series.counts, world, &ident, &run.traces, &attack)
            .map_err(|e| run_error(r, e))
    })?;
    let constant: Vec<f64> = runs
        .iter()
        .map(|run| inference_accuracy(&constant_outside_attack(world, exp.eval_steps), &run.traces))
        .collect::<Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..deltas.len())
        .filter(|&d| designs[d][0].is_some())
        .flat_map(|d| (0..exp.runs).map(move |r| (d, r)))
        .collect();
    let outcomes = par_map(cells.len(), |c| {
        let (d, r) = cells[c];
        let channels: Vec<DistortionMatrix> = designs[d]
            .iter()
            .map(|x| {
                x.as_ref()
                    .and_then(|x| x.matrix.clone())
                    .expect("feasible design has a matrix")
            })
            .collect();
        let run = &runs[r];
        let cell = || -> Result<(f64, f64)> {
            let log = closed_loop_simulate(
                &run.series,
                &channels,
                &problems,
                &exp.mpc,
                &t0,
                derive_seed(seed, "channel", &[r as u64]),
            )?;
            let diff = per_iteration_cost_diff(&log, &run.identity, exp.mpc.comfort_penalty);
            let acc = attack_accuracy(&log.reported(), world, &channels, &run.traces, &attack)?;
            Ok((diff, acc))
        };
        cell().map_err(|e| run_error(r, e))
    })?;

    let mut records = Vec::with_capacity(deltas.len());
    let mut next = outcomes.into_iter();
    for (d, &delta) in deltas.iter().enumerate() {
        match &designs[d][0] {
            None => records.push(TradeoffRecord {
                delta,
                mi_bits: f64::NAN,
                cost_diff_mean: f64::NAN,
                cost_diff_std: f64::NAN,
                acc_mean: f64::NAN,
                acc_std: f64::NAN,
                feasible: false,
                runs: exp.runs,
            }),
            Some(_) => {
                let cell: Vec<(f64, f64)> = next.by_ref().take(exp.runs).collect();
                let diffs: Vec<f64> = cell.iter().map(|c| c.0).collect();
                let accs: Vec<f64> = cell.iter().map(|c| c.1).collect();
                let (cost_diff_mean, cost_diff_std) = mean_std(&diffs);
                let (acc_mean, acc_std) = mean_std(&accs);
                let mi_bits = designs[d].iter().flatten().map(|r| r.mi_bits).sum();
                records.push(TradeoffRecord {
                    delta,
                    mi_bits,
                    cost_diff_mean,
                    cost_diff_std,
                    acc_mean,
                    acc_std,
                    feasible: true,
                    runs: exp.runs,
                });
            }
        }
    }
    let (ca, cs) = mean_std(&clean);
    let (ka, ks) = mean_std(&constant);
    Ok(SweepReport {
        records,
        baselines: vec![
            Baseline {
                name: "clean".into(),
                acc_mean: ca,
                acc_std: cs,
            },
            Baseline {
                name: "constant_outside".into(),
                acc_mean: ka,
                acc_std: ks,
            },
        ],
        designs,
    })
}

/// Finds Δ whose optimal design leaks `target_bits` (summed over zones),
/// by bisection in log Δ over `bracket`. Returns the closest design found.
pub fn match_mi(
    ctx: &DesignContext,
    base: &DesignConfig,
    target_bits: f64,
    bracket: (f64, f64),
    tolerance_bits: f64,
) -> Result<(f64, Vec<DesignResult>)> {
    let total = |r: &[DesignResult]| -> f64 { r.iter().map(|x| x.mi_bits).sum() };
    let (mut lo, mut hi) = bracket;
    let at_lo = ctx.design(lo, base, None)?;
    if !at_lo.iter().all(|r| r.feasible) {
        return Err(Error::invalid(format!("Δ = {lo} is infeasible")));
    }
    let mut best = (lo, (total(&at_lo) - target_bits).abs(), at_lo);
    if total(&best.2) <= target_bits {
        return Ok((best.0, best.2));
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        let r = ctx.design(mid, base, None)?;
        let mi = total(&r);
        let err = (mi - target_bits).abs();
        if err < best.1 {
            best = (mid, err, r);
        }
        if best.1 <= tolerance_bits {
            break;
        }
        if mi > target_bits {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((best.0, best.2))
}

/// Closed-loop cost, leakage and attack accuracy of each scheme over the
/// same `exp.runs` true-occupancy draws.
pub fn compare_schemes(
    world: &FhmmModel,
    exp: &Experiment,
    schemes: &[Scheme],
    seed: u64,
) -> Result<Vec<SchemeComparison>> {
    exp.validate()?;
    let ctx = DesignContext::new(world, exp)?;
    compare_schemes_with(world, exp, &ctx, schemes, seed)
}

pub fn compare_schemes_with(
    world: &FhmmModel,
    exp: &Experiment,
    ctx: &DesignContext,
    schemes: &[Scheme],
    seed: u64,
) -> Result<Vec<SchemeComparison>> {
    exp.validate()?;
    if schemes.is_empty() {
        return Err(Error::invalid("no schemes to compare"));
    }
    let zones = zones_of(world)?;
    let m = world.occupant_count();
    let problems = vec![exp.problem.clone(); zones];
    let t0 = vec![exp.t_init; zones];
    let attack = exp.attack();

    // per scheme: channels driving the reports (None = fixed schedule),
    // the channels the attacker assumes, and the leakage
    let mut setups = Vec::with_capacity(schemes.len());
    for s in schemes {
        let (channels, mi_bits) = match s {
            Scheme::Optimal { delta } => {
                let r = ctx.design(*delta, &exp.design, None)?;
                if let Some(bad) = r.iter().position(|x| !x.feasible) {
                    return Err(Error::invalid(format!(
                        "{} is infeasible in zone {}",
                        s.name(),
                        bad + 1
                    )));
                }
                let mi = r.iter().map(|x| x.mi_bits).sum();
                (
                    Some(
                        r.into_iter()
                            .map(|x| x.matrix.expect("feasible"))
                            .collect::<Vec<_>>(),
                    ),
                    mi,
                )
            }
            Scheme::Uniform => (Some(vec![uniform_scheme(m); zones]), f64::NAN),
            Scheme::Multinomial { acc } => {
                (Some(vec![multinomial_scheme(*acc, m)?; zones]), f64::NAN)
            }
            Scheme::Identity => (Some(vec![DistortionMatrix::identity(m); zones]), f64::NAN),
            Scheme::FixedSchedule => (None, 0.0),
        };
        let mi_bits = match &channels {
            Some(c) if mi_bits.is_nan() => c
                .iter()
                .zip(&ctx.p_y)
                .map(|(ch, p)| mutual_information(p, ch))
                .sum::<Result<f64>>()?,
            _ => mi_bits,
        };
        setups.push((channels, mi_bits));
    }

    let schedule = fixed_schedule_series(&exp.calendar, m, exp.eval_steps)?;
    let schedule: Vec<Vec<u32>> = schedule.iter().map(|&v| vec![v; zones]).collect();
    let blind = vec![uniform_scheme(m); zones];
    let traces: Vec<(Vec<LocationTrace>, OccupancySeries)> = par_map(exp.runs, |r| {
        let t = sample_traces(
            world,
            exp.eval_steps,
            derive_seed(seed, "eval", &[r as u64]),
        )?;
        let s = occupancy_from_traces(&t, &world.zone_set)?;
        Ok((t, s))
    })?;

    let cells: Vec<(usize, usize)> = (0..schemes.len())
        .flat_map(|s| (0..exp.runs).map(move |r| (s, r)))
        .collect();
    let outcomes = par_map(cells.len(), |c| {
        let (s, r) = cells[c];
        let (truth, series) = &traces[r];
        let cell = || -> Result<(f64, f64)> {
            let (log, assumed) = match &setups[s].0 {
                Some(ch) => (
                    closed_loop_simulate(
                        series,
                        ch,
                        &problems,
                        &exp.mpc,
                        &t0,
                        derive_seed(seed, "channel", &[r as u64]),
                    )?,
                    ch,
                ),
                None => (
                    run_closed_loop(&series.counts, &schedule, &problems, &exp.mpc, &t0)?,
                    &blind,
                ),
            };
            let acc = attack_accuracy(&log.reported(), world, assumed, truth, &attack)?;
            Ok((log.total_cost(), acc))
        };
        cell().map_err(|e| run_error(r, e))
    })?;

    let mut out: Vec<SchemeComparison> = schemes
        .iter()
        .enumerate()
        .map(|(s, scheme)| {
            let cell = &outcomes[s * exp.runs..(s + 1) * exp.runs];
            let costs: Vec<f64> = cell.iter().map(|c| c.0).collect();
            let accs: Vec<f64> = cell.iter().map(|c| c.1).collect();
            let (cost_mean, cost_std) = mean_std(&costs);
            let (acc_mean, acc_std) = mean_std(&accs);
            SchemeComparison {
                scheme: scheme.name(),
                mi_bits: setups[s].1,
                cost_mean,
                cost_std,
                acc_mean,
                acc_std,
                pareto: true,
                costs,
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = out.iter().map(|c| (c.mi_bits, c.cost_mean)).collect();
    for (i, c) in out.iter_mut().enumerate() {
        let (mi, cost) = points[i];
        c.pareto = !points
            .iter()
            .enumerate()
            .any(|(j, &(m2, c2))| j != i && m2 <= mi && c2 <= cost && (m2 < mi || c2 < cost));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_handles_ties() {
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let r = spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).unwrap().is_nan());
        assert!(spearman(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn mean_std_is_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn par_map_keeps_order() {
        let v = par_map(50, |i| Ok(i * i)).unwrap();
        assert_eq!(v, (0..50).map(|i| i * i).collect::<Vec<_>>());
        let e = par_map(5, |i| {
            if i == 3 {
                Err(Error::invalid("boom"))
            } else {
                Ok(i)
            }
        });
        assert!(e.is_err());
    }

    #[test]
    fn office_world_is_mostly_outside() {
        let w = office_world(4, 3, 1).unwrap();
        let laws = w.stationary_laws().unwrap();
        for l in &laws {
            assert!(l[0] > 0.5 && l[0] < 0.9, "outside share {}", l[0]);
        }
        assert_eq!(w, office_world(4, 3, 1).unwrap());
        assert_ne!(w, office_world(4, 3, 2).unwrap());
    }

    #[test]
    fn scaled_world_reuses_base_profiles() {
        let base = office_world(4, 3, 5).unwrap();
        let big = synthesize_scaled_world(&base, 15, 9).unwrap();
        assert_eq!(big.occupant_count(), 15);
        for c in &big.chains {
            assert!(base.chains.contains(c));
        }
        let marg = occupancy_marginal(&big).unwrap();
        assert_eq!(marg.per_zone[0].len(), 16);
        assert_eq!(big, synthesize_scaled_world(&base, 15, 9).unwrap());
        assert!(synthesize_scaled_world(&base, 0, 9).is_err());
    }

    #[test]
    fn rejects_unsorted_sweeps() {
        let w = office_world(1, 1, 0).unwrap();
        let exp = Experiment {
            runs: 1,
            eval_steps: 30,
            ..Default::default()
        };
        let ctx = DesignContext::new(&w, &exp).unwrap();
        assert!(run_tradeoff_sweep_with(&w, &exp, &ctx, &[], 0).is_err());
        assert!(run_tradeoff_sweep_with(&w, &exp, &ctx, &[1.0, 0.5], 0).is_err());
    }

    #[test]
    fn sweep_spans_identity_to_independence() {
        let w = office_world(2, 2, 3).unwrap();
        let exp = Experiment {
            runs: 2,
            eval_steps: 60,
            ..Default::default()
        };
        let ctx = DesignContext::new(&w, &exp).unwrap();
        let (lo, _) = ctx.bracket(exp.design.delta_t).unwrap();
        let rep = run_tradeoff_sweep_with(&w, &exp, &ctx, &[lo, 1e3], 11).unwrap();
        let huge = &rep.records[1];
        assert!(huge.feasible);
        assert!(huge.mi_bits < 1e-6);
        assert!(rep.records[0].mi_bits >= huge.mi_bits);
        let again = run_tradeoff_sweep_with(&w, &exp, &ctx, &[lo, 1e3], 11).unwrap();
        assert_eq!(rep.records, again.records);
    }
}
