//! Mutual-information-minimizing channel design.
//!
//! The feasible set is a product over true counts `y` of small polytopes
//! (simplex ∩ cost rows ∩ temperature rows). The solver is an away-step
//! Frank–Wolfe method run block by block: every outer iteration solves one
//! LP per row for the linear minimizer, reports the summed duality gap,
//! and then moves each row along its better of the toward-vertex and
//! away-from-atom directions with an exact line search.

use serde::{Deserialize, Serialize};

use super::{exact_row, mi_nats, ConstraintTables, DistortionMatrix, GRAD_CLIP};
use crate::error::{Error, Result};
use crate::info::LN2;
use crate::lp::{LinearProgram, LpOutcome, Relation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    /// Cost-difference tolerance ($).
    pub delta: f64,
    /// End-temperature tolerance (°C).
    pub delta_t: f64,
    /// Pairing radius for initial temperatures (°C).
    pub delta_t_prime: f64,
    pub temp_grid_step: f64,
    /// Stop once every row's duality gap, divided by p(y), is below this (bits).
    pub fw_tolerance: f64,
    pub fw_max_iters: usize,
    /// Exact line search; when off the classic `2/(k+2)` step is used.
    pub line_search: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            delta_t: 0.5,
            delta_t_prime: 0.5,
            temp_grid_step: 0.5,
            fw_tolerance: 1e-6,
            fw_max_iters: 10_000,
            line_search: true,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("delta must be nonnegative"));
        }
        if !(self.delta_t > 0.0) || !(self.delta_t_prime > 0.0) || !(self.temp_grid_step > 0.0) {
            return Err(Error::invalid(
                "delta_t, delta_t_prime and temp_grid_step must be positive",
            ));
        }
        if !(self.fw_tolerance > 0.0) || self.fw_max_iters == 0 {
            return Err(Error::invalid("need fw_tolerance > 0 and fw_max_iters ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DesignResult {
    /// `None` exactly when the constraints are infeasible.
    pub matrix: Option<DistortionMatrix>,
    pub mi_bits: f64,
    pub fw_gap: f64,
    pub feasible: bool,
    /// First true count whose polytope is empty.
    pub infeasible_row: Option<usize>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest constraint violation of the returned matrix.
    pub max_residual: f64,
    /// Objective (bits) after the start point and after each outer iteration.
    pub objective_trace: Vec<f64>,
    /// Duality gap (bits) at the start of each outer iteration.
    pub gap_trace: Vec<f64>,
}

impl DesignResult {
    fn infeasible(row: usize) -> Self {
        Self {
            matrix: None,
            mi_bits: f64::NAN,
            fw_gap: f64::NAN,
            feasible: false,
            infeasible_row: Some(row),
            iterations: 0,
            converged: false,
            max_residual: f64::NAN,
            objective_trace: Vec::new(),
            gap_trace: Vec::new(),
        }
    }
}

/// `{p : a·p ≤ b}` restricted to the simplex, with rows that the simplex
/// already satisfies removed.
struct RowPolytope {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl RowPolytope {
    fn build(tables: &ConstraintTables, y: usize, delta: f64, delta_t: f64) -> Self {
        let n = tables.max_count() + 1;
        let mut a: Vec<Vec<f64>> = Vec::new();
        let mut b = Vec::new();
        for pair in 0..tables.pairs().len() {
            let cost: Vec<f64> = (0..n).map(|v| tables.cost(y, v, pair)).collect();
            let temp: Vec<f64> = (0..n).map(|v| tables.temp(y, v, pair)).collect();
            for (row, rhs) in [(cost, delta), (temp, delta_t)] {
                if row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) <= rhs {
                    continue;
                }
                if a.iter().zip(&b).any(|(r, &s)| *r == row && s == rhs) {
                    continue;
                }
                a.push(row);
                b.push(rhs);
            }
        }
        Self { a, b }
    }

    fn lp(&self, objective: Vec<f64>) -> LinearProgram {
        let n = objective.len();
        let mut lp = LinearProgram::new(objective);
        for (row, &rhs) in self.a.iter().zip(&self.b) {
            lp.add(row.clone(), Relation::Le, rhs);
        }
        lp.add(vec![1.0; n], Relation::Eq, 1.0);
        lp
    }

    fn residual(&self, p: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(row, &rhs)| dot(row, p) - rhs)
            .fold(0.0, f64::max)
    }

    /// Vertex minimizing `g·p`; `None` if the polytope is empty.
    fn minimize(&self, g: &[f64]) -> Result<Option<Vec<f64>>> {
        let scale = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let objective = if scale > 0.0 {
            g.iter().map(|v| v / scale).collect()
        } else {
            vec![0.0; g.len()]
        };
        match self.lp(objective).solve() {
            LpOutcome::Optimal { x, .. } => Ok(Some(clean(x))),
            LpOutcome::Infeasible => Ok(None),
            LpOutcome::Unbounded => {
                Err(Error::Lp("bounded row polytope reported unbounded".into()))
            }
            LpOutcome::IterationLimit => Err(Error::Lp("simplex iteration limit".into())),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Entries below this are treated as rounding debris and zeroed. Left in
/// place they open columns with almost no mass, where the gradient is
/// dominated by round-off and the duality gap stops meaning anything.
const SNAP: f64 = 1e-10;

fn clean(mut p: Vec<f64>) -> Vec<f64> {
    for v in p.iter_mut() {
        if *v < SNAP {
            *v = 0.0;
        }
    }
    let s: f64 = p.iter().sum();
    for v in p.iter_mut() {
        *v /= s;
    }
    exact_row(p)
}

fn check_law(p_y: &[f64], n: usize) -> Result<()> {
    if p_y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "count law has {} entries, tables cover {n} counts",
            p_y.len()
        )));
    }
    if p_y.iter().any(|&p| !(p >= 0.0)) || (p_y.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("count law must be a probability vector"));
    }
    Ok(())
}

pub fn design_distortion(
    tables: &ConstraintTables,
    p_y: &[f64],
    config: &DesignConfig,
) -> Result<DesignResult> {
    design_distortion_from(tables, p_y, config, None)
}

/// `∂I/∂P(v|y)` in nats for one row, with `x_y` replaced by `row`.
///
/// Unlike the public clipped gradient this keeps boundary behaviour
/// faithful: a zero entry whose column carries mass elsewhere has slope
/// `−∞`, and a column carried by this row alone has the finite limit
/// `−p(y)·ln p(y)`.
fn row_gradient(p_y: &[f64], x: &[Vec<f64>], y: usize, row: &[f64], out: &mut [f64]) {
    let py = p_y[y];
    for (v, o) in out.iter_mut().enumerate() {
        let others: f64 = x
            .iter()
            .enumerate()
            .filter(|&(yy, _)| yy != y)
            .map(|(yy, r)| p_y[yy] * r[v])
            .sum();
        let c = row[v];
        *o = if py <= 0.0 {
            0.0
        } else if c > 0.0 {
            py * (c / (py * c + others)).ln()
        } else if others > 0.0 {
            f64::NEG_INFINITY
        } else {
            -py * py.ln()
        };
    }
}

/// The same gradient for every row, with `−∞` replaced by the clipped
/// value so that it can feed a linear program.
fn full_gradient(p_y: &[f64], x: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let n = x.len();
    let mut p_v = vec![0.0; n];
    for (py, row) in p_y.iter().zip(x) {
        for (pv, &c) in p_v.iter_mut().zip(row) {
            *pv += py * c;
        }
    }
    for y in 0..n {
        row_gradient(p_y, x, y, &x[y], &mut out[y]);
        for (g, pv) in out[y].iter_mut().zip(&p_v) {
            if *g == f64::NEG_INFINITY {
                *g = p_y[y] * (GRAD_CLIP / pv).ln();
            }
        }
    }
}

/// `Σ_v g_v d_v` skipping coordinates the direction leaves alone.
fn slope_along(g: &[f64], d: &[f64]) -> f64 {
    g.iter()
        .zip(d)
        .filter(|&(_, &dv)| dv != 0.0)
        .map(|(gv, dv)| gv * dv)
        .sum()
}

/// Largest `γ ∈ [0, γ_max]` where the directional derivative is ≤ 0.
fn line_search(p_y: &[f64], x: &[Vec<f64>], y: usize, d: &[f64], gamma_max: f64) -> f64 {
    let n = d.len();
    let mut buf = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let mut slope = |gamma: f64| {
        for v in 0..n {
            probe[v] = (x[y][v] + gamma * d[v]).max(0.0);
        }
        row_gradient(p_y, x, y, &probe, &mut buf);
        slope_along(&buf, d)
    };
    if slope(gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Backtracks from `gamma` until the objective does not increase and the
/// row stays feasible.
/// Returns the new row, the step taken and the new objective.
fn try_step(
    poly: &RowPolytope,
    p_y: &[f64],
    x: &mut [Vec<f64>],
    y: usize,
    d: &[f64],
    mut gamma: f64,
    f: f64,
) -> Option<(Vec<f64>, f64, f64)> {
    let old = std::mem::take(&mut x[y]);
    let mut out = None;
    for _ in 0..30 {
        if !(gamma > 0.0) {
            break;
        }
        x[y] = clean(old.iter().zip(d).map(|(a, b)| a + gamma * b).collect());
        let f_new = mi_nats(p_y, x);
        if f_new <= f && x[y] != old && poly.residual(&x[y]) <= WARM_SLACK {
            out = Some((std::mem::take(&mut x[y]), gamma, f_new));
            break;
        }
        gamma *= 0.5;
    }
    x[y] = old;
    out
}

/// Constraint slack tolerated in a warm start (snapping can leave this much).
const WARM_SLACK: f64 = 1e-9;

enum Move {
    Toward(Vec<f64>),
    Away(usize),
}

struct Atom {
    point: Vec<f64>,
    weight: f64,
}

/// Solves the design problem, starting from `warm` when it is feasible.
///
/// Starting a larger-Δ solve from a smaller-Δ optimum makes the reported
/// information non-increasing in Δ exactly, because the accepted objective
/// never goes up.
pub fn design_distortion_from(
    tables: &ConstraintTables,
    p_y: &[f64],
    config: &DesignConfig,
    warm: Option<&DistortionMatrix>,
) -> Result<DesignResult> {
    config.validate()?;
    let n = tables.max_count() + 1;
    check_law(p_y, n)?;
    if let Some(w) = warm {
        if w.max_count() + 1 != n {
            return Err(Error::DimensionMismatch(
                "warm start has the wrong size".into(),
            ));
        }
    }

    let polys: Vec<RowPolytope> = (0..n)
        .map(|y| RowPolytope::build(tables, y, config.delta, config.delta_t))
        .collect();

    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    for (y, poly) in polys.iter().enumerate() {
        let start = match warm {
            Some(w) if poly.residual(w.row(y)) <= WARM_SLACK => w.row(y).to_vec(),
            _ => match poly.minimize(&vec![0.0; n])? {
                Some(p) => p,
                None => return Ok(DesignResult::infeasible(y)),
            },
        };
        x.push(start);
    }
    let mut atoms: Vec<Vec<Atom>> = x
        .iter()
        .map(|r| {
            vec![Atom {
                point: r.clone(),
                weight: 1.0,
            }]
        })
        .collect();

    let mut f = mi_nats(p_y, &x);
    let mut objective_trace = vec![f / LN2];
    let mut gap_trace = Vec::new();
    let mut grad = vec![vec![0.0; n]; n];
    let mut g_row = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.fw_max_iters {
        full_gradient(p_y, &x, &mut grad);
        let mut targets = Vec::with_capacity(n);
        let mut total = 0.0;
        let mut worst = 0.0_f64;
        for y in 0..n {
            if p_y[y] <= 0.0 {
                targets.push(None);
                continue;
            }
            let s = polys[y]
                .minimize(&grad[y])?
                .ok_or_else(|| Error::Lp(format!("row {y} polytope became empty")))?;
            let row_gap: f64 = grad[y]
                .iter()
                .zip(&x[y])
                .zip(&s)
                .map(|((g, a), b)| g * (a - b))
                .sum();
            total += row_gap.max(0.0);
            worst = worst.max(row_gap / p_y[y]);
            targets.push(Some(s));
        }
        gap = total / LN2;
        gap_trace.push(gap);
        if worst / LN2 <= config.fw_tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let mut moved = false;
        for y in 0..n {
            let Some(s) = targets[y].as_ref() else {
                continue;
            };
            row_gradient(p_y, &x, y, &x[y], &mut g_row);
            let d_fw: Vec<f64> = s.iter().zip(&x[y]).map(|(a, b)| a - b).collect();
            let slope_fw = slope_along(&g_row, &d_fw);
            let (ai, _) = atoms[y]
                .iter()
                .enumerate()
                .map(|(i, a)| (i, slope_along(&g_row, &a.point)))
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, c| if c.1 > best.1 { c } else { best },
                );
            let alpha = atoms[y][ai].weight;
            let d_aw: Vec<f64> = x[y]
                .iter()
                .zip(&atoms[y][ai].point)
                .map(|(a, b)| a - b)
                .collect();
            let slope_aw = slope_along(&g_row, &d_aw);

            let aw_max = if alpha < 1.0 {
                alpha / (1.0 - alpha)
            } else {
                0.0
            };
            let fw = (Move::Toward(s.clone()), d_fw, slope_fw, 1.0);
            let aw = (Move::Away(ai), d_aw, slope_aw, aw_max);
            let candidates = if slope_aw < slope_fw {
                [aw, fw]
            } else {
                [fw, aw]
            };
            let mut step: Option<(Move, Vec<f64>, f64, f64, f64)> = None;
            for (kind, d, slope, gamma_max) in candidates {
                if !(slope < 0.0) || !(gamma_max > 0.0) {
                    continue;
                }
                let gamma = if config.line_search {
                    line_search(p_y, &x, y, &d, gamma_max)
                } else {
                    (2.0 / (iterations as f64 + 2.0)).min(gamma_max)
                };
                if let Some((row, gamma, f_new)) = try_step(&polys[y], p_y, &mut x, y, &d, gamma, f)
                {
                    step = Some((kind, row, gamma, gamma_max, f_new));
                    break;
                }
            }
            let Some((kind, row, gamma, gamma_max, f_new)) = step else {
                continue;
            };
            x[y] = row;
            f = f_new;
            moved = true;

            let set = &mut atoms[y];
            match kind {
                Move::Away(ai) => {
                    for a in set.iter_mut() {
                        a.weight *= 1.0 + gamma;
                    }
                    set[ai].weight -= gamma;
                    if gamma >= gamma_max || set[ai].weight <= SNAP {
                        set.swap_remove(ai);
                    }
                }
                Move::Toward(target) => {
                    for a in set.iter_mut() {
                        a.weight *= 1.0 - gamma;
                    }
                    if gamma >= 1.0 {
                        set.clear();
                    }
                    match set.iter_mut().find(|a| a.point == target) {
                        Some(a) => a.weight += gamma,
                        None => set.push(Atom {
                            point: target,
                            weight: gamma,
                        }),
                    }
                    set.retain(|a| a.weight > SNAP);
                }
            }
            let total_w: f64 = set.iter().map(|a| a.weight).sum();
            for a in set.iter_mut() {
                a.weight /= total_w;
            }
        }
        objective_trace.push(f / LN2);
        if !moved {
            break;
        }
    }

    let max_residual = polys
        .iter()
        .zip(&x)
        .map(|(poly, row)| poly.residual(row))
        .fold(0.0, f64::max);
    if max_residual > 1e-8 {
        return Err(Error::Lp(format!(
            "design violates constraints by {max_residual:e}"
        )));
    }
    let matrix = DistortionMatrix::new(x)?;
    Ok(DesignResult {
        mi_bits: f / LN2,
        matrix: Some(matrix),
        fw_gap: gap.max(0.0),
        feasible: true,
        infeasible_row: None,
        iterations,
        converged,
        max_residual,
        objective_trace,
        gap_trace,
    })
}

/// Minimal `t` such that some simplex point `p` satisfies
/// `Σ_v p_v·cost ≤ t` for every listed row and all temperature rows;
/// `rows` chooses which true counts share the single point `p`.
fn min_shared_delta(
    tables: &ConstraintTables,
    rows: &[usize],
    delta_t: f64,
) -> Result<Option<f64>> {
    let n = tables.max_count() + 1;
    let mut objective = vec![0.0; n + 2];
    // t = t⁺ − t⁻ keeps the LP in standard nonnegative form.
    objective[n] = 1.0;
    objective[n + 1] = -1.0;
    let mut lp = LinearProgram::new(objective);
    for &y in rows {
        for pair in 0..tables.pairs().len() {
            let mut c: Vec<f64> = (0..n).map(|v| tables.cost(y, v, pair)).collect();
            c.extend([-1.0, 1.0]);
            lp.add(c, Relation::Le, 0.0);
            let mut t: Vec<f64> = (0..n).map(|v| tables.temp(y, v, pair)).collect();
            t.extend([0.0, 0.0]);
            lp.add(t, Relation::Le, delta_t);
        }
    }
    let mut simplex = vec![1.0; n];
    simplex.extend([0.0, 0.0]);
    lp.add(simplex, Relation::Eq, 1.0);
    match lp.solve() {
        LpOutcome::Optimal { objective, .. } => Ok(Some(objective)),
        LpOutcome::Infeasible => Ok(None),
        other => Err(Error::Lp(format!("bracket probe failed: {other:?}"))),
    }
}

fn pad(v: f64) -> f64 {
    (v + 1e-6 * v.abs() + 1e-12).max(1e-12)
}

/// `(Δ_lo, Δ_hi)`: the smallest Δ for which every row is feasible, and the
/// largest cost entry, past which no cost constraint binds at all.
pub fn default_delta_bracket(tables: &ConstraintTables, delta_t: f64) -> Result<(f64, f64)> {
    let n = tables.max_count() + 1;
    let mut lo = f64::NEG_INFINITY;
    for y in 0..n {
        match min_shared_delta(tables, &[y], delta_t)? {
            Some(t) => lo = lo.max(t),
            None => {
                return Err(Error::invalid(format!(
                    "temperature tolerance {delta_t} leaves row {y} infeasible for every delta"
                )))
            }
        }
    }
    let hi = (0..n)
        .flat_map(|y| (0..n).flat_map(move |v| (0..tables.pairs().len()).map(move |p| (y, v, p))))
        .map(|(y, v, p)| tables.cost(y, v, p))
        .fold(f64::NEG_INFINITY, f64::max);
    let lo = pad(lo);
    let hi = pad(hi);
    let hi = if hi > lo { hi } else { lo * 10.0 };
    Ok((lo, hi))
}

/// Smallest Δ admitting one row shared by all counts (zero information),
/// or `None` when the temperature rows rule that out for every Δ.
pub fn independence_threshold(tables: &ConstraintTables, delta_t: f64) -> Result<Option<f64>> {
    let all: Vec<usize> = (0..=tables.max_count()).collect();
    min_shared_delta(tables, &all, delta_t)
}

/// `count` values spaced evenly in log scale over `[lo, hi]`.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i + 1 == count {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::mutual_information;
    use crate::info::entropy_bits;

    /// Tables with a single pair whose cost row for `y` is `cost[y]` and
    /// whose temperature entries are zero.
    fn tables(cost: Vec<Vec<f64>>) -> ConstraintTables {
        let n = cost.len();
        let flat: Vec<f64> = cost.into_iter().flatten().collect();
        ConstraintTables::new(n - 1, vec![(25.0, 25.0)], flat, vec![0.0; n * n]).unwrap()
    }

    fn cfg(delta: f64) -> DesignConfig {
        DesignConfig {
            delta,
            ..Default::default()
        }
    }

    #[test]
    fn loose_constraints_give_independence() {
        let t = tables(vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.0],
            vec![2.0, 1.0, 0.0],
        ]);
        let p = [0.5, 0.3, 0.2];
        let r = design_distortion(&t, &p, &cfg(10.0)).unwrap();
        assert!(r.feasible && r.converged);
        assert!(r.mi_bits <= 1e-6, "{}", r.mi_bits);
        assert!(r.matrix.unwrap().max_row_distance() <= 1e-3);
    }

    #[test]
    fn singleton_rows_force_identity() {
        let t = tables(vec![
            vec![0.0, 5.0, 5.0],
            vec![5.0, 0.0, 5.0],
            vec![5.0, 5.0, 0.0],
        ]);
        let p = [0.5, 0.3, 0.2];
        let r = design_distortion(&t, &p, &cfg(0.0)).unwrap();
        let m = r.matrix.unwrap();
        assert_eq!(m, DistortionMatrix::identity(2));
        assert!((r.mi_bits - entropy_bits(&p)).abs() < 1e-12);
    }

    #[test]
    fn infeasible_row_is_reported() {
        let t = tables(vec![vec![0.0, 1.0], vec![2.0, 3.0]]);
        let r = design_distortion(&t, &[0.5, 0.5], &cfg(1.0)).unwrap();
        assert!(!r.feasible);
        assert_eq!(r.infeasible_row, Some(1));
        assert!(r.matrix.is_none());
    }

    #[test]
    fn binding_constraint_is_respected() {
        // Row 0 may move at most 0.3 of its mass to v = 1.
        let t = tables(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let p = [0.5, 0.5];
        let r = design_distortion(&t, &p, &cfg(0.3)).unwrap();
        let m = r.matrix.unwrap();
        assert!(r.max_residual <= 1e-12);
        assert!((m.prob(0, 1) - 0.3).abs() < 1e-6, "{:?}", m);
        assert!((m.prob(1, 0) - 0.3).abs() < 1e-6, "{:?}", m);
        let mi = mutual_information(&p, &m).unwrap();
        assert_eq!(mi, r.mi_bits);
    }

    #[test]
    fn traces_are_monotone_and_gaps_nonnegative() {
        let t = tables(vec![
            vec![0.0, 0.4, 0.9, 1.3],
            vec![0.5, 0.0, 0.2, 0.8],
            vec![0.7, 0.1, 0.0, 0.3],
            vec![1.5, 0.9, 0.4, 0.0],
        ]);
        let p = [0.4, 0.3, 0.2, 0.1];
        for line_search in [true, false] {
            let c = DesignConfig {
                delta: 0.35,
                line_search,
                fw_max_iters: 300,
                ..Default::default()
            };
            let r = design_distortion(&t, &p, &c).unwrap();
            assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
            assert!(r.gap_trace.iter().all(|&g| g >= 0.0));
        }
    }

    #[test]
    fn warm_start_keeps_sweep_monotone() {
        let t = tables(vec![
            vec![0.0, 0.4, 0.9],
            vec![0.5, 0.0, 0.2],
            vec![0.7, 0.1, 0.0],
        ]);
        let p = [0.6, 0.3, 0.1];
        let (lo, hi) = default_delta_bracket(&t, 0.5).unwrap();
        let mut prev: Option<DesignResult> = None;
        for d in log_spaced(lo, hi, 8) {
            let warm = prev.as_ref().and_then(|r| r.matrix.as_ref());
            let r = design_distortion_from(&t, &p, &cfg(d), warm).unwrap();
            assert!(r.feasible);
            if let Some(q) = &prev {
                assert!(r.mi_bits <= q.mi_bits);
            }
            prev = Some(r);
        }
        assert!(prev.unwrap().mi_bits <= 1e-5);
    }

    #[test]
    fn bracket_ends_match_their_definitions() {
        let t = tables(vec![vec![0.0, 1.0], vec![2.0, 0.5]]);
        let (lo, hi) = default_delta_bracket(&t, 0.5).unwrap();
        // Row 1 alone needs Δ ≥ 0.5; a shared row needs max(q, 2 − 1.5q) minimal → q = 0.8.
        assert!((lo - 0.5).abs() < 1e-5);
        assert!((hi - 2.0).abs() < 1e-5);
        let shared = independence_threshold(&t, 0.5).unwrap().unwrap();
        assert!((shared - 0.8).abs() < 1e-9);
    }

    #[test]
    fn log_spacing_hits_both_ends() {
        let v = log_spaced(1e-4, 1e-1, 4);
        assert_eq!(v.len(), 4);
        assert!((v[0] - 1e-4).abs() < 1e-18);
        assert_eq!(v[3], 1e-1);
        assert!((v[1] - 1e-3).abs() < 1e-15);
    }
}
