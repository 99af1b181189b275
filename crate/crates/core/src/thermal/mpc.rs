//! Successive-linearization MPC.
//!
//! Decision variables per control block are the flow rate `m` and the
//! reheat power `q = m·c_p·(T_s − T_a)`; in these variables the supply
//! temperature limits are linear (`0 ≤ q ≤ m·c_p·(T_h_max − T_a)`) and the
//! only bilinear term left is `m·T`. Each iteration freezes that product
//! around the incumbent trajectory, solves the resulting LP under a trust
//! region on `m`, and keeps the candidate only if the true simulated
//! objective improves.
//!
//! Comfort is checked at block boundaries: with constant inputs the
//! trajectory inside a block is monotone, so its extremes sit at the ends.
//! Steps whose temperature has left the band in any evaluated plan also
//! get their own slack, so the LP sees the per-step violation there.

use super::{stage_cost, step_dynamics_with, Control, ControlSequence, MpcConfig, MpcProblem};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOutcome, Relation};

#[derive(Clone, Debug, PartialEq)]
pub struct MpcSolution {
    pub controls: ControlSequence,
    /// Energy plus comfort penalty of `controls` under the observed occupancy.
    pub planned_cost: f64,
    pub energy_cost: f64,
    pub violation: f64,
    pub iterations: usize,
    /// False when the iteration cap stopped the solver.
    pub converged: bool,
    /// Objective of each accepted incumbent, starting with the initial guess.
    pub objective_trace: Vec<f64>,
}

pub fn solve_mpc(
    t_init: f64,
    observed_occupancy: u32,
    problem: &MpcProblem,
    config: &MpcConfig,
) -> Result<MpcSolution> {
    solve_mpc_at(t_init, observed_occupancy as f64, problem, config, 0, 0.0)
}

/// Band overshoot (°C) below which a step is not flagged.
const FLAG_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Default)]
struct Flag {
    high: bool,
    low: bool,
}

impl Flag {
    fn any(self) -> bool {
        self.high || self.low
    }
}

struct Plan {
    m: Vec<f64>,
    controls: ControlSequence,
    temps: Vec<f64>,
    energy: f64,
    violation: f64,
    objective: f64,
}

struct Ctx<'a> {
    t_init: f64,
    occupancy: f64,
    problem: &'a MpcProblem,
    config: &'a MpcConfig,
    start_step: usize,
    external_kw: f64,
    blocks: usize,
}

impl Ctx<'_> {
    fn evaluate(&self, m: Vec<f64>, q: Vec<f64>) -> Result<Plan> {
        let h = &self.problem.hvac;
        let cp = self.problem.zone.c_p;
        let block_controls: Vec<Control> = m
            .iter()
            .zip(&q)
            .map(|(&m, &q)| {
                let m_dot = m.clamp(h.m_min, h.m_max);
                let t_s = (h.t_a + q / (m_dot * cp)).clamp(h.t_a, h.t_h_max);
                Control { m_dot, t_s }
            })
            .collect();
        let l = self.config.block_steps;
        let steps: Vec<Control> = block_controls
            .iter()
            .flat_map(|&c| std::iter::repeat_n(c, l))
            .collect();
        let mut temps = Vec::with_capacity(steps.len() + 1);
        let mut t = self.t_init;
        temps.push(t);
        let mut energy = 0.0;
        let mut violation = 0.0;
        for (k, &c) in steps.iter().enumerate() {
            energy += stage_cost(
                c,
                self.problem.tariff.at(self.start_step + k),
                h,
                cp,
                self.config.dt,
            );
            t = step_dynamics_with(
                t,
                c,
                self.occupancy,
                &self.problem.zone,
                self.config.dt,
                self.external_kw,
            )?;
            violation += self.problem.comfort.violation(t);
            temps.push(t);
        }
        Ok(Plan {
            m,
            controls: ControlSequence { steps },
            temps,
            energy,
            violation,
            objective: energy + self.config.comfort_penalty * violation,
        })
    }

    /// LP around `inc` with trust radius `rho` on the flow rates.
    /// Variables: [μ_0..μ_B, q_0..q_B, s_0..s_B, flagged-step slacks] with
    /// m_b = lo_b + μ_b.
    /// `flagged[k]` adds a slack on the temperature after step `k`.
    fn linearized_step(
        &self,
        inc: &Plan,
        rho: f64,
        flagged: &[Flag],
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let p = self.problem;
        let h = &p.hvac;
        let z = &p.zone;
        let cp = z.c_p;
        let b_count = self.blocks;
        let l = self.config.block_steps;
        let dt = self.config.dt;
        let step_slack: Vec<usize> = (0..flagged.len()).filter(|&k| flagged[k].any()).collect();
        let nv = 3 * b_count + step_slack.len();
        let konst = nv;

        let lo: Vec<f64> = inc.m.iter().map(|&m| (m - rho).max(h.m_min)).collect();
        let hi: Vec<f64> = inc.m.iter().map(|&m| (m + rho).min(h.m_max)).collect();

        let mut objective = vec![0.0; nv];
        for b in 0..b_count {
            for k in b * l..(b + 1) * l {
                let (r_e, r_h) = p.tariff.at(self.start_step + k);
                objective[b] += dt * r_e * (h.beta + cp / h.eta_c * (h.t_out - h.t_a));
                objective[b_count + b] += dt * r_h / h.eta_h;
            }
            let unflagged = (b * l..(b + 1) * l).filter(|&k| !flagged[k].any()).count();
            objective[2 * b_count + b] = self.config.comfort_penalty * unflagged as f64;
        }
        for i in 0..step_slack.len() {
            objective[3 * b_count + i] = self.config.comfort_penalty;
        }
        let mut lp = LinearProgram::new(objective);

        let inertia = z.capacity / dt;
        let cap = cp * (h.t_h_max - h.t_a);
        let mut t_expr = vec![0.0; nv + 1];
        t_expr[konst] = self.t_init;
        for b in 0..b_count {
            let m0 = inc.m[b];
            let a = inertia + 0.5 * cp * m0;
            let decay = (inertia - 0.5 * cp * m0 + z.r_self) / a;
            for k in b * l..(b + 1) * l {
                let s0 = 0.5 * (inc.temps[k] + inc.temps[k + 1]);
                for v in t_expr.iter_mut() {
                    *v *= decay;
                }
                t_expr[konst] += (z.c_o * self.occupancy
                    + self.external_kw
                    + cp * m0 * s0
                    + lo[b] * cp * (h.t_a - s0))
                    / a;
                t_expr[b] += cp * (h.t_a - s0) / a;
                t_expr[b_count + b] += 1.0 / a;
                let i = 3 * b_count + step_slack.partition_point(|&j| j < k);
                if flagged[k].high {
                    let mut upper = t_expr[..nv].to_vec();
                    upper[i] = -1.0;
                    lp.add(upper, Relation::Le, p.comfort.t_high - t_expr[konst]);
                }
                if flagged[k].low {
                    let mut lower: Vec<f64> = t_expr[..nv].iter().map(|v| -v).collect();
                    lower[i] = -1.0;
                    lp.add(lower, Relation::Le, t_expr[konst] - p.comfort.t_low);
                }
            }
            let mut upper = t_expr[..nv].to_vec();
            upper[2 * b_count + b] = -1.0;
            lp.add(upper, Relation::Le, p.comfort.t_high - t_expr[konst]);
            let mut lower: Vec<f64> = t_expr[..nv].iter().map(|v| -v).collect();
            lower[2 * b_count + b] = -1.0;
            lp.add(lower, Relation::Le, t_expr[konst] - p.comfort.t_low);

            let mut width = vec![0.0; nv];
            width[b] = 1.0;
            lp.add(width, Relation::Le, hi[b] - lo[b]);

            let mut heat = vec![0.0; nv];
            heat[b_count + b] = 1.0;
            heat[b] = -cap;
            lp.add(heat, Relation::Le, cap * lo[b]);
        }
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => {
                let m = (0..b_count)
                    .map(|b| (lo[b] + x[b]).clamp(lo[b], hi[b]))
                    .collect();
                let q = (0..b_count).map(|b| x[b_count + b]).collect();
                Some((m, q))
            }
            _ => None,
        }
    }
}

/// Full solver entry point. `start_step` offsets time-varying tariffs;
/// `external_kw` is neighbour heat flow held constant over the horizon.
pub fn solve_mpc_at(
    t_init: f64,
    observed_occupancy: f64,
    problem: &MpcProblem,
    config: &MpcConfig,
    start_step: usize,
    external_kw: f64,
) -> Result<MpcSolution> {
    config.validate()?;
    problem.validate()?;
    if !t_init.is_finite() {
        return Err(Error::invalid("initial temperature must be finite"));
    }
    if !(observed_occupancy >= 0.0) {
        return Err(Error::invalid("occupancy must be nonnegative"));
    }
    let ctx = Ctx {
        t_init,
        occupancy: observed_occupancy,
        problem,
        config,
        start_step,
        external_kw,
        blocks: config.horizon_steps / config.block_steps,
    };
    let h = &problem.hvac;
    let range = h.m_max - h.m_min;
    let mut inc = ctx.evaluate(vec![h.m_min; ctx.blocks], vec![0.0; ctx.blocks])?;
    let mut flagged = vec![Flag::default(); ctx.blocks * config.block_steps];
    let flag = |plan: &Plan, flagged: &mut [Flag]| {
        for (f, &t) in flagged.iter_mut().zip(&plan.temps[1..]) {
            f.high |= t > problem.comfort.t_high + FLAG_MARGIN;
            f.low |= t < problem.comfort.t_low - FLAG_MARGIN;
        }
    };
    flag(&inc, &mut flagged);
    let mut trace = vec![inc.objective];
    let mut rho = range.max(1e-12);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let Some((m, q)) = ctx.linearized_step(&inc, rho, &flagged) else {
            rho *= 0.25;
            if rho < 1e-9 * range.max(1e-12) {
                converged = true;
                break;
            }
            continue;
        };
        let cand = ctx.evaluate(m, q)?;
        flag(&cand, &mut flagged);
        let scale = inc.objective.abs().max(1e-12);
        if cand.objective < inc.objective {
            let gain = inc.objective - cand.objective;
            inc = cand;
            trace.push(inc.objective);
            if gain <= config.tolerance * scale {
                converged = true;
                break;
            }
            rho = (rho * 2.0).min(range.max(1e-12));
        } else {
            rho *= 0.25;
            if rho < 1e-9 * range.max(1e-12) {
                converged = true;
                break;
            }
        }
    }
    Ok(MpcSolution {
        controls: inc.controls,
        planned_cost: inc.objective,
        energy_cost: inc.energy,
        violation: inc.violation,
        iterations,
        converged,
        objective_trace: trace,
    })
}
