//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min c·x` subject to linear rows and `x ≥ 0`. Problems here are
//! small (tens to a few hundred rows), so a full tableau is used.

const EPS: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-9;
const HARRIS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `min objective·x` s.t. constraints, `x ≥ 0`.
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LinearProgram {
    pub fn new(objective: Vec<f64>) -> Self {
        Self {
            objective,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.objective.len());
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> LpOutcome {
        let t = Tableau::build(self);
        let cap = 20 * (t.rows + t.cols).max(100);
        t.run(self, cap)
    }

    /// Phase one only: is the feasible set nonempty?
    pub fn is_feasible(&self) -> bool {
        let mut t = Tableau::build(self);
        t.phase_one(50_000) == PhaseOne::Feasible
    }
}

#[derive(PartialEq)]
enum PhaseOne {
    Feasible,
    Infeasible,
    Limit,
}

struct Tableau {
    rows: usize,
    cols: usize,
    // rows × (cols + 1); last column is the rhs
    data: Vec<f64>,
    basis: Vec<usize>,
    n_orig: usize,
    // columns at or beyond this index are artificial
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let mut n_slack = 0;
        let mut n_art = 0;
        let mut normalized = Vec::with_capacity(m);
        for c in &lp.constraints {
            let (coeffs, rel, rhs) = if c.rhs < 0.0 {
                let flipped = match c.relation {
                    Relation::Le => Relation::Ge,
                    Relation::Ge => Relation::Le,
                    Relation::Eq => Relation::Eq,
                };
                (
                    c.coeffs.iter().map(|v| -v).collect::<Vec<_>>(),
                    flipped,
                    -c.rhs,
                )
            } else {
                (c.coeffs.clone(), c.relation, c.rhs)
            };
            match rel {
                Relation::Le => n_slack += 1,
                Relation::Ge => {
                    n_slack += 1;
                    n_art += 1
                }
                Relation::Eq => n_art += 1,
            }
            normalized.push((coeffs, rel, rhs));
        }
        let cols = n + n_slack + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut next_slack = n;
        let mut next_art = n + n_slack;
        for (i, (coeffs, rel, rhs)) in normalized.into_iter().enumerate() {
            let row = &mut data[i * width..(i + 1) * width];
            row[..n].copy_from_slice(&coeffs);
            row[cols] = rhs;
            match rel {
                Relation::Le => {
                    row[next_slack] = 1.0;
                    basis[i] = next_slack;
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -1.0;
                    next_slack += 1;
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
                Relation::Eq => {
                    row[next_art] = 1.0;
                    basis[i] = next_art;
                    next_art += 1;
                }
            }
        }
        Self {
            rows: m,
            cols,
            data,
            basis,
            n_orig: n,
            first_artificial: n + n_slack,
        }
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let width = self.cols + 1;
        let p = self.data[pr * width + pc];
        for v in &mut self.data[pr * width..(pr + 1) * width] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[pr * width..(pr + 1) * width].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * width + pc];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.data[r * width..(r + 1) * width];
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            row[pc] = 0.0;
            if row[width - 1] < 0.0 && row[width - 1] > -HARRIS {
                row[width - 1] = 0.0;
            }
        }
        self.basis[pr] = pc;
    }

    /// Reduced costs for cost vector `cost` over allowed columns.
    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut d: Vec<f64> = cost[..allowed].to_vec();
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (c, dc) in d.iter_mut().enumerate() {
                *dc -= cb * self.at(r, c);
            }
        }
        d
    }

    /// Harris two-pass ratio test: the bound is relaxed by a small
    /// tolerance, then the largest pivot within it is taken (the lowest
    /// basic index under Bland's rule). Tiny pivots are never used.
    fn ratio_test(&self, col: usize, bland: bool) -> Option<(usize, f64)> {
        let scale = (0..self.rows)
            .map(|r| self.at(r, col).abs())
            .fold(0.0, f64::max);
        let tol = PIVOT_TOL * scale.max(1.0);
        let mut bound = f64::INFINITY;
        for r in 0..self.rows {
            let a = self.at(r, col);
            if a > tol {
                bound = bound.min((self.rhs(r).max(0.0) + HARRIS) / a);
            }
        }
        if bound == f64::INFINITY {
            return None;
        }
        let mut pick: Option<usize> = None;
        for r in 0..self.rows {
            let a = self.at(r, col);
            if a > tol && self.rhs(r).max(0.0) / a <= bound {
                let better = match pick {
                    None => true,
                    Some(p) if bland => self.basis[r] < self.basis[p],
                    Some(p) => a > self.at(p, col),
                };
                if better {
                    pick = Some(r);
                }
            }
        }
        pick.map(|r| (r, self.rhs(r).max(0.0) / self.at(r, col)))
    }

    /// Primal simplex on columns `< allowed`. Returns Ok(true) at optimum,
    /// Ok(false) when unbounded, Err on the iteration cap. Prices by the
    /// most negative reduced cost and switches to Bland's rule after a run
    /// of degenerate pivots.
    fn optimize(&mut self, cost: &[f64], allowed: usize, max_iter: usize) -> Result<bool, ()> {
        let width = self.cols + 1;
        let mut d = self.reduced_costs(cost, allowed);
        let mut degenerate = 0;
        let mut bland = false;
        for it in 0..max_iter {
            if it % 64 == 63 {
                d = self.reduced_costs(cost, allowed);
            }
            let entering = if bland {
                d.iter().position(|&v| v < -EPS)
            } else {
                d.iter()
                    .enumerate()
                    .filter(|(_, &v)| v < -EPS)
                    .min_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(c, _)| c)
            };
            let Some(entering) = entering else {
                return Ok(true);
            };
            let Some((r, ratio)) = self.ratio_test(entering, bland) else {
                return Ok(false);
            };
            if ratio <= EPS {
                degenerate += 1;
                bland |= degenerate > 50;
            } else {
                degenerate = 0;
            }
            self.pivot(r, entering);
            let f = d[entering];
            for (c, dc) in d.iter_mut().enumerate() {
                *dc -= f * self.data[r * width + c];
            }
            d[entering] = 0.0;
        }
        Err(())
    }

    fn phase_one(&mut self, max_iter: usize) -> PhaseOne {
        if self.first_artificial == self.cols {
            return PhaseOne::Feasible;
        }
        let mut cost = vec![0.0; self.cols];
        for c in cost.iter_mut().skip(self.first_artificial) {
            *c = 1.0;
        }
        if let Err(()) = self.optimize(&cost, self.cols, max_iter) {
            return PhaseOne::Limit;
        }
        let infeas: f64 = (0..self.rows)
            .filter(|&r| self.basis[r] >= self.first_artificial)
            .map(|r| self.rhs(r))
            .sum();
        let scale = 1.0
            + (0..self.rows)
                .map(|r| self.rhs(r).abs())
                .fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return PhaseOne::Infeasible;
        }
        // drive remaining (zero-level) artificials out of the basis
        let mut r = 0;
        while r < self.rows {
            if self.basis[r] >= self.first_artificial {
                match (0..self.first_artificial).find(|&c| self.at(r, c).abs() > 1e-9) {
                    Some(c) => self.pivot(r, c),
                    None => {
                        // redundant row
                        self.remove_row(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        PhaseOne::Feasible
    }

    fn remove_row(&mut self, r: usize) {
        let width = self.cols + 1;
        self.data.drain(r * width..(r + 1) * width);
        self.basis.remove(r);
        self.rows -= 1;
    }

    fn run(mut self, lp: &LinearProgram, max_iter: usize) -> LpOutcome {
        match self.phase_one(max_iter) {
            PhaseOne::Feasible => {}
            PhaseOne::Infeasible => return LpOutcome::Infeasible,
            PhaseOne::Limit => return LpOutcome::IterationLimit,
        }
        let mut cost = vec![0.0; self.cols];
        cost[..self.n_orig].copy_from_slice(&lp.objective);
        match self.optimize(&cost, self.first_artificial, max_iter) {
            Err(()) => LpOutcome::IterationLimit,
            Ok(false) => LpOutcome::Unbounded,
            Ok(true) => {
                let mut x = vec![0.0; self.n_orig];
                for r in 0..self.rows {
                    let b = self.basis[r];
                    if b < self.n_orig {
                        x[b] = self.rhs(r).max(0.0);
                    }
                }
                let objective = x.iter().zip(&lp.objective).map(|(a, b)| a * b).sum();
                LpOutcome::Optimal { x, objective }
            }
        }
    }
}
