//! Precomputed controller-performance tables for the design constraints.
//!
//! For a true count `y`, a reported count `v` and a pair of initial
//! temperatures `(t1, t2)`, the tables hold
//!
//! * the realized cost of the plan made from `(t1, v)` minus that of the
//!   plan made from `(t2, y)`, both run under the true count `y`;
//! * the absolute gap between the two end-of-interval temperatures.
//!
//! Only the applied part of each plan (the first `update_steps`) is run,
//! since its end temperature seeds the next controller iteration.

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::DesignConfig;
use crate::error::{Error, Result};
use crate::thermal::{simulate_trajectory, solve_mpc, MpcConfig, MpcProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintTables {
    max_count: usize,
    pairs: Vec<(f64, f64)>,
    cost_diff: Vec<f64>,
    temp_diff: Vec<f64>,
}

impl ConstraintTables {
    /// Entries are laid out as `[(y·(M+1) + v)·|pairs| + pair]`.
    pub fn new(
        max_count: usize,
        pairs: Vec<(f64, f64)>,
        cost_diff: Vec<f64>,
        temp_diff: Vec<f64>,
    ) -> Result<Self> {
        let n = (max_count + 1) * (max_count + 1) * pairs.len();
        if pairs.is_empty() {
            return Err(Error::invalid("tables need at least one temperature pair"));
        }
        if cost_diff.len() != n || temp_diff.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} entries, got {} cost and {} temperature entries",
                cost_diff.len(),
                temp_diff.len()
            )));
        }
        if cost_diff.iter().chain(&temp_diff).any(|v| !v.is_finite()) {
            return Err(Error::invalid("table entries must be finite"));
        }
        Ok(Self {
            max_count,
            pairs,
            cost_diff,
            temp_diff,
        })
    }

    pub fn max_count(&self) -> usize {
        self.max_count
    }

    pub fn pairs(&self) -> &[(f64, f64)] {
        &self.pairs
    }

    fn idx(&self, y: usize, v: usize, pair: usize) -> usize {
        (y * (self.max_count + 1) + v) * self.pairs.len() + pair
    }

    pub fn cost(&self, y: usize, v: usize, pair: usize) -> f64 {
        self.cost_diff[self.idx(y, v, pair)]
    }

    pub fn temp(&self, y: usize, v: usize, pair: usize) -> f64 {
        self.temp_diff[self.idx(y, v, pair)]
    }

    pub fn len(&self) -> usize {
        self.cost_diff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cost_diff.is_empty()
    }

    /// Largest violation of the cost and temperature constraints by `row`
    /// as the channel row for true count `y`.
    pub fn row_residual(&self, y: usize, row: &[f64], delta: f64, delta_t: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for pair in 0..self.pairs.len() {
            let c: f64 = row
                .iter()
                .enumerate()
                .map(|(v, p)| p * self.cost(y, v, pair))
                .sum();
            let t: f64 = row
                .iter()
                .enumerate()
                .map(|(v, p)| p * self.temp(y, v, pair))
                .sum();
            worst = worst.max(c - delta).max(t - delta_t);
        }
        worst.max(0.0)
    }
}

/// Comfort-band grid `{T_low, T_low + step, …}` up to `T_high`.
pub fn temperature_grid(t_low: f64, t_high: f64, step: f64) -> Vec<f64> {
    let n = ((t_high - t_low) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| t_low + i as f64 * step).collect()
}

pub fn build_constraint_tables(
    problem: &MpcProblem,
    design: &DesignConfig,
    mpc: &MpcConfig,
    max_count: usize,
) -> Result<ConstraintTables> {
    problem.validate()?;
    mpc.validate()?;
    design.validate()?;
    if max_count < 1 {
        return Err(Error::invalid("need M ≥ 1"));
    }
    let grid = temperature_grid(
        problem.comfort.t_low,
        problem.comfort.t_high,
        design.temp_grid_step,
    );
    let counts = max_count + 1;
    let applied = mpc.update_steps;

    // outcome[t][plan_count][true_count] = (realized cost, end temperature)
    let mut outcome = vec![vec![vec![(0.0, 0.0); counts]; counts]; grid.len()];
    for (ti, &t) in grid.iter().enumerate() {
        for c in 0..counts {
            let sol = solve_mpc(t, c as u32, problem, mpc)?;
            let head = sol.controls.truncated(applied);
            for y in 0..counts {
                let r = simulate_trajectory(t, &head, &vec![y as f64; applied], problem, mpc, 0)?;
                outcome[ti][c][y] = (r.realized_cost, r.end_temperature());
            }
        }
    }

    let mut pairs = Vec::new();
    let mut pair_idx = Vec::new();
    for (i, &t1) in grid.iter().enumerate() {
        for (j, &t2) in grid.iter().enumerate() {
            if (t1 - t2).abs() <= design.delta_t_prime + 1e-9 {
                pairs.push((t1, t2));
                pair_idx.push((i, j));
            }
        }
    }
    let n = counts * counts * pairs.len();
    let mut cost_diff = Vec::with_capacity(n);
    let mut temp_diff = Vec::with_capacity(n);
    for y in 0..counts {
        for v in 0..counts {
            for &(i, j) in &pair_idx {
                let (c1, e1) = outcome[i][v][y];
                let (c2, e2) = outcome[j][y][y];
                cost_diff.push(c1 - c2);
                temp_diff.push((e1 - e2).abs());
            }
        }
    }
    ConstraintTables::new(max_count, pairs, cost_diff, temp_diff)
}

#[derive(Serialize)]
struct KeyMaterial<'a> {
    problem: &'a MpcProblem,
    mpc: &'a MpcConfig,
    temp_grid_step: f64,
    delta_t_prime: f64,
    max_count: usize,
}

/// Stable hex key identifying the inputs that determine a table.
pub fn tables_key(
    problem: &MpcProblem,
    design: &DesignConfig,
    mpc: &MpcConfig,
    max_count: usize,
) -> String {
    let material = KeyMaterial {
        problem,
        mpc,
        temp_grid_step: design.temp_grid_step,
        delta_t_prime: design.delta_t_prime,
        max_count,
    };
    let json = serde_json::to_vec(&material).expect("plain data serializes");
    let digest = Sha256::digest(&json);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
