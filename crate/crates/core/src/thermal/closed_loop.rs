//! Receding-horizon operation of all zones against true occupancy.
//!
//! Each zone's controller replans every `update_steps` from its current
//! temperature and the reported count at that step, then applies the
//! head of the plan. The plant always evolves under the true counts.

use super::{solve_mpc_at, stage_cost, step_dynamics_with, MpcConfig, MpcProblem};
use crate::distortion::{apply_distortion, DistortionMatrix};
use crate::error::{Error, Result};
use crate::occupancy::{occupancy_from_traces, sample_traces, FhmmModel, OccupancySeries};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    /// Controller iteration that produced this step's input.
    pub iter: usize,
    pub step: usize,
    /// Temperature at the end of the step.
    pub t: f64,
    pub y: u32,
    pub v: u32,
    pub m_dot: f64,
    pub t_s: f64,
    pub energy_cost: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub start_step: usize,
    pub t_init: f64,
    pub reported: u32,
    pub planned_cost: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZoneLog {
    /// 1-based interior zone index.
    pub zone: usize,
    pub steps: Vec<StepRecord>,
    pub iterations: Vec<IterationRecord>,
    pub energy_cost: f64,
    pub violation: f64,
    /// Energy plus comfort penalty.
    pub realized_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoopLog {
    pub zones: Vec<ZoneLog>,
}

impl ClosedLoopLog {
    pub fn total_cost(&self) -> f64 {
        self.zones.iter().map(|z| z.realized_cost).sum()
    }

    /// Reported counts as a series with zones in columns.
    pub fn reported(&self) -> Vec<Vec<u32>> {
        let k = self.zones.first().map_or(0, |z| z.steps.len());
        (0..k)
            .map(|i| self.zones.iter().map(|z| z.steps[i].v).collect())
            .collect()
    }
}

fn check_shapes(series: &[Vec<u32>], zones: usize, what: &str) -> Result<()> {
    if series.is_empty() {
        return Err(Error::invalid(format!("{what} series is empty")));
    }
    if let Some(r) = series.iter().find(|r| r.len() != zones) {
        return Err(Error::DimensionMismatch(format!(
            "{what} series has a step with {} zones, expected {zones}",
            r.len()
        )));
    }
    Ok(())
}

/// Runs every zone for `true_counts.len()` steps. Both series are indexed
/// `[step][zone − 1]`; `problems` and `t_init` have one entry per zone.
pub fn run_closed_loop(
    true_counts: &[Vec<u32>],
    reported: &[Vec<u32>],
    problems: &[MpcProblem],
    config: &MpcConfig,
    t_init: &[f64],
) -> Result<ClosedLoopLog> {
    config.validate()?;
    let zones = problems.len();
    if zones == 0 || t_init.len() != zones {
        return Err(Error::DimensionMismatch(format!(
            "{zones} zone problems but {} initial temperatures",
            t_init.len()
        )));
    }
    check_shapes(true_counts, zones, "true occupancy")?;
    check_shapes(reported, zones, "reported occupancy")?;
    if reported.len() != true_counts.len() {
        return Err(Error::LengthMismatch {
            expected: true_counts.len(),
            found: reported.len(),
        });
    }
    for p in problems {
        p.validate()?;
        if !p.zone.r_neighbors.is_empty() && p.zone.r_neighbors.len() != zones {
            return Err(Error::DimensionMismatch(format!(
                "r_neighbors has {} entries for {zones} zones",
                p.zone.r_neighbors.len()
            )));
        }
    }

    let steps = true_counts.len();
    let mut temps = t_init.to_vec();
    let mut logs: Vec<ZoneLog> = (0..zones)
        .map(|n| ZoneLog {
            zone: n + 1,
            steps: Vec::with_capacity(steps),
            iterations: Vec::new(),
            energy_cost: 0.0,
            violation: 0.0,
            realized_cost: 0.0,
        })
        .collect();
    let mut plans = vec![Vec::new(); zones];
    let external = |temps: &[f64], n: usize| -> f64 {
        problems[n]
            .zone
            .r_neighbors
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != n)
            .map(|(j, r)| r * temps[j])
            .sum()
    };

    for k in 0..steps {
        let iter = k / config.update_steps;
        if k % config.update_steps == 0 {
            for n in 0..zones {
                let v = reported[k][n];
                let sol = solve_mpc_at(
                    temps[n],
                    v as f64,
                    &problems[n],
                    config,
                    k,
                    external(&temps, n),
                )?;
                logs[n].iterations.push(IterationRecord {
                    iter,
                    start_step: k,
                    t_init: temps[n],
                    reported: v,
                    planned_cost: sol.planned_cost,
                    converged: sol.converged,
                });
                plans[n] = sol.controls.steps;
            }
        }
        let before = temps.clone();
        for n in 0..zones {
            let p = &problems[n];
            let c = plans[n][k % config.update_steps];
            let energy = stage_cost(c, p.tariff.at(k), &p.hvac, p.zone.c_p, config.dt);
            let y = true_counts[k][n];
            let t = step_dynamics_with(
                before[n],
                c,
                y as f64,
                &p.zone,
                config.dt,
                external(&before, n),
            )?;
            let violation = p.comfort.violation(t);
            temps[n] = t;
            let log = &mut logs[n];
            log.energy_cost += energy;
            log.violation += violation;
            log.steps.push(StepRecord {
                iter,
                step: k,
                t,
                y,
                v: reported[k][n],
                m_dot: c.m_dot,
                t_s: c.t_s,
                energy_cost: energy,
                violation,
            });
        }
    }
    for log in &mut logs {
        log.realized_cost = log.energy_cost + config.comfort_penalty * log.violation;
    }
    Ok(ClosedLoopLog { zones: logs })
}

/// Draws reported counts through each zone's channel at every step, using
/// one random stream per zone, then runs [`run_closed_loop`].
pub fn closed_loop_simulate(
    true_occupancy: &OccupancySeries,
    distortions: &[DistortionMatrix],
    problems: &[MpcProblem],
    config: &MpcConfig,
    t_init: &[f64],
    seed: u64,
) -> Result<ClosedLoopLog> {
    let zones = true_occupancy.zones();
    if distortions.len() != zones {
        return Err(Error::DimensionMismatch(format!(
            "{} channels for {zones} zones",
            distortions.len()
        )));
    }
    for d in distortions {
        if d.max_count() < true_occupancy.occupants {
            return Err(Error::DimensionMismatch(format!(
                "channel covers counts up to {}, world has {} occupants",
                d.max_count(),
                true_occupancy.occupants
            )));
        }
    }
    let mut rngs: Vec<_> = (0..zones)
        .map(|n| stream(seed, "distort", &[n as u64]))
        .collect();
    let mut reported = Vec::with_capacity(true_occupancy.len());
    for row in &true_occupancy.counts {
        let mut out = Vec::with_capacity(zones);
        for (n, &y) in row.iter().enumerate() {
            out.push(apply_distortion(&distortions[n], y as usize, &mut rngs[n])? as u32);
        }
        reported.push(out);
    }
    run_closed_loop(&true_occupancy.counts, &reported, problems, config, t_init)
}

/// Samples a world of `steps` steps from `model` and runs it closed loop.
/// Returns the sampled true occupancy alongside the log.
pub fn closed_loop_from_model(
    model: &FhmmModel,
    distortions: &[DistortionMatrix],
    problems: &[MpcProblem],
    config: &MpcConfig,
    t_init: &[f64],
    steps: usize,
    seed: u64,
) -> Result<(OccupancySeries, ClosedLoopLog)> {
    let traces = sample_traces(model, steps, derive_seed(seed, "world", &[]))?;
    let series = occupancy_from_traces(&traces, &model.zone_set)?;
    let log = closed_loop_simulate(
        &series,
        distortions,
        problems,
        config,
        t_init,
        derive_seed(seed, "channel", &[]),
    )?;
    Ok((series, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{simulate_trajectory, solve_mpc_at, ControlSequence};

    fn series(rows: Vec<Vec<u32>>, occupants: usize) -> OccupancySeries {
        OccupancySeries {
            occupants,
            counts: rows,
        }
    }

    #[test]
    fn single_zone_matches_manual_replanning() {
        let p = MpcProblem::default();
        let cfg = MpcConfig::default();
        let counts: Vec<Vec<u32>> = (0..30).map(|k| vec![if k < 15 { 2 } else { 0 }]).collect();
        let log =
            run_closed_loop(&counts, &counts, std::slice::from_ref(&p), &cfg, &[25.0]).unwrap();
        let z = &log.zones[0];
        assert_eq!(z.steps.len(), 30);
        assert_eq!(z.iterations.len(), 2);

        let first = solve_mpc_at(25.0, 2.0, &p, &cfg, 0, 0.0).unwrap();
        let head = first.controls.truncated(15);
        let r = simulate_trajectory(25.0, &head, &[2.0; 15], &p, &cfg, 0).unwrap();
        assert_eq!(z.steps[14].t, r.end_temperature());
        assert_eq!(z.iterations[1].t_init, r.end_temperature());
        let second = solve_mpc_at(r.end_temperature(), 0.0, &p, &cfg, 15, 0.0).unwrap();
        let tail = ControlSequence {
            steps: second.controls.steps[..15].to_vec(),
        };
        let r2 = simulate_trajectory(r.end_temperature(), &tail, &[0.0; 15], &p, &cfg, 15).unwrap();
        let total = r.realized_cost + r2.realized_cost;
        assert!((z.realized_cost - total).abs() <= 1e-12 * total.abs());
    }

    #[test]
    fn identity_channel_reports_truth() {
        let p = MpcProblem::default();
        let cfg = MpcConfig::default();
        let s = series((0..20).map(|k| vec![(k % 3) as u32, 1]).collect(), 2);
        let ident = vec![DistortionMatrix::identity(2); 2];
        let log =
            closed_loop_simulate(&s, &ident, &[p.clone(), p], &cfg, &[25.0, 24.5], 9).unwrap();
        assert_eq!(log.reported(), s.counts);
    }

    #[test]
    fn same_seed_same_log() {
        let p = MpcProblem::default();
        let cfg = MpcConfig::default();
        let s = series((0..20).map(|k| vec![(k % 3) as u32]).collect(), 2);
        let u = vec![crate::distortion::uniform_scheme(2)];
        let a = closed_loop_simulate(&s, &u, std::slice::from_ref(&p), &cfg, &[25.0], 4).unwrap();
        let b = closed_loop_simulate(&s, &u, std::slice::from_ref(&p), &cfg, &[25.0], 4).unwrap();
        let c = closed_loop_simulate(&s, &u, &[p], &cfg, &[25.0], 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.reported(), c.reported());
    }

    #[test]
    fn neighbour_heat_enters_the_plant() {
        let mut p = MpcProblem::default();
        p.zone.r_neighbors = vec![0.0, 0.05];
        let mut q = MpcProblem::default();
        q.zone.r_neighbors = vec![0.05, 0.0];
        let cfg = MpcConfig::default();
        let counts = vec![vec![0, 0]; 15];
        let coupled = run_closed_loop(&counts, &counts, &[p, q], &cfg, &[25.0, 25.0]).unwrap();
        let plain = MpcProblem::default();
        let alone = run_closed_loop(
            &counts,
            &counts,
            &[plain.clone(), plain],
            &cfg,
            &[25.0, 25.0],
        )
        .unwrap();
        assert!(coupled.zones[0].steps[0].t > alone.zones[0].steps[0].t);
    }

    #[test]
    fn shape_errors() {
        let p = MpcProblem::default();
        let cfg = MpcConfig::default();
        assert!(run_closed_loop(
            &[vec![1]],
            &[vec![1], vec![1]],
            std::slice::from_ref(&p),
            &cfg,
            &[25.0]
        )
        .is_err());
        assert!(run_closed_loop(
            &[vec![1, 2]],
            &[vec![1, 2]],
            std::slice::from_ref(&p),
            &cfg,
            &[25.0]
        )
        .is_err());
        assert!(run_closed_loop(&[], &[], &[p], &cfg, &[25.0]).is_err());
    }
}
