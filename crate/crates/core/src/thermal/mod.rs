//! Zone thermal dynamics, HVAC energy cost, and the receding-horizon
//! controller that plans supply-air flow and temperature.

mod closed_loop;
mod mpc;

pub use closed_loop::{
    closed_loop_from_model, closed_loop_simulate, run_closed_loop, ClosedLoopLog, IterationRecord,
    StepRecord, ZoneLog,
};
pub use mpc::{solve_mpc, solve_mpc_at, MpcSolution};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZoneThermalParams {
    /// Thermal capacity of the zone (kJ/K).
    pub capacity: f64,
    /// Heat-transfer coefficient on the zone's own temperature (kW/K).
    pub r_self: f64,
    /// Heat-transfer coefficients on the other zones' temperatures (kW/K).
    /// Empty means decoupled.
    pub r_neighbors: Vec<f64>,
    /// Thermal load per occupant (kW).
    pub c_o: f64,
    /// Heat capacity of air (kJ/(kg·K)).
    pub c_p: f64,
}

impl Default for ZoneThermalParams {
    fn default() -> Self {
        Self {
            capacity: 1000.0,
            r_self: 0.0,
            r_neighbors: Vec::new(),
            c_o: 0.1,
            c_p: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HvacParams {
    pub eta_h: f64,
    pub eta_c: f64,
    /// Fan constant (kW·s/kg).
    pub beta: f64,
    /// AHU outlet temperature (°C).
    pub t_a: f64,
    /// Heating coil cap on supply temperature (°C).
    pub t_h_max: f64,
    pub m_min: f64,
    pub m_max: f64,
    /// Outside air temperature used by the cooling-power term (°C).
    pub t_out: f64,
}

impl Default for HvacParams {
    fn default() -> Self {
        Self {
            eta_h: 0.9,
            eta_c: 4.0,
            beta: 0.5,
            t_a: 12.8,
            t_h_max: 40.0,
            m_min: 0.0084,
            m_max: 1.5,
            t_out: 30.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComfortBand {
    pub t_low: f64,
    pub t_high: f64,
}

impl Default for ComfortBand {
    fn default() -> Self {
        Self {
            t_low: 24.0,
            t_high: 26.0,
        }
    }
}

impl ComfortBand {
    pub fn violation(&self, t: f64) -> f64 {
        (t - self.t_high).max(0.0) + (self.t_low - t).max(0.0)
    }
}

/// Energy prices ($/kJ). Optional per-step series override the constants
/// and repeat cyclically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    pub r_e: f64,
    pub r_h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_e_series: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_h_series: Option<Vec<f64>>,
}

impl Default for Tariff {
    fn default() -> Self {
        Self {
            r_e: 1.5e-4,
            r_h: 5e-6,
            r_e_series: None,
            r_h_series: None,
        }
    }
}

impl Tariff {
    pub fn at(&self, step: usize) -> (f64, f64) {
        let pick = |s: &Option<Vec<f64>>, c: f64| match s {
            Some(v) if !v.is_empty() => v[step % v.len()],
            _ => c,
        };
        (
            pick(&self.r_e_series, self.r_e),
            pick(&self.r_h_series, self.r_h),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Discretization step (s).
    pub dt: f64,
    pub horizon_steps: usize,
    pub update_steps: usize,
    pub block_steps: usize,
    /// $ per (°C · step) of comfort-band violation.
    pub comfort_penalty: f64,
    /// Relative objective change that stops successive linearization.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            dt: 60.0,
            horizon_steps: 120,
            update_steps: 15,
            block_steps: 15,
            comfort_penalty: 10.0,
            tolerance: 1e-9,
            max_iters: 60,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if self.update_steps == 0 || self.horizon_steps < self.update_steps {
            return Err(Error::invalid("need horizon_steps ≥ update_steps ≥ 1"));
        }
        if self.block_steps == 0 || !self.horizon_steps.is_multiple_of(self.block_steps) {
            return Err(Error::invalid("block_steps must divide horizon_steps"));
        }
        if !(self.comfort_penalty >= 0.0) {
            return Err(Error::invalid("comfort_penalty must be nonnegative"));
        }
        Ok(())
    }
}

/// Everything the controller of one zone needs besides its inputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MpcProblem {
    pub zone: ZoneThermalParams,
    pub hvac: HvacParams,
    pub comfort: ComfortBand,
    pub tariff: Tariff,
}

impl MpcProblem {
    pub fn validate(&self) -> Result<()> {
        let z = &self.zone;
        let h = &self.hvac;
        if !(z.capacity > 0.0) || !(z.c_p > 0.0) || !(z.c_o >= 0.0) {
            return Err(Error::invalid("need capacity > 0, c_p > 0, c_o ≥ 0"));
        }
        if !(h.m_min > 0.0) || !(h.m_min <= h.m_max) {
            return Err(Error::invalid("need 0 < m_min ≤ m_max"));
        }
        if !(h.t_a <= h.t_h_max) {
            return Err(Error::invalid("need T_a ≤ T_h_max"));
        }
        if !(h.eta_h > 0.0) || !(h.eta_c > 0.0) || !(h.beta >= 0.0) {
            return Err(Error::invalid("need eta_h, eta_c > 0 and beta ≥ 0"));
        }
        if !(self.comfort.t_low < self.comfort.t_high) {
            return Err(Error::invalid("need T_low < T_high"));
        }
        let t = &self.tariff;
        let series_ok =
            |s: &Option<Vec<f64>>| s.as_ref().is_none_or(|v| v.iter().all(|&x| x >= 0.0));
        if !(t.r_e >= 0.0)
            || !(t.r_h >= 0.0)
            || !series_ok(&t.r_e_series)
            || !series_ok(&t.r_h_series)
        {
            return Err(Error::invalid("prices must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub m_dot: f64,
    pub t_s: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSequence {
    pub steps: Vec<Control>,
}

impl ControlSequence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn truncated(&self, n: usize) -> Self {
        Self {
            steps: self.steps[..n.min(self.steps.len())].to_vec(),
        }
    }

    pub fn within_bounds(&self, hvac: &HvacParams) -> bool {
        self.steps.iter().all(|c| {
            c.m_dot >= hvac.m_min
                && c.m_dot <= hvac.m_max
                && c.t_s >= hvac.t_a
                && c.t_s <= hvac.t_h_max
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    /// `T_init` followed by the temperature after every step.
    pub temperatures: Vec<f64>,
    pub energy_cost: f64,
    /// Σ_k distance of T_{k+1} from the comfort band (°C·step).
    pub violation: f64,
    /// `energy_cost + comfort_penalty · violation`.
    pub realized_cost: f64,
}

impl TrajectoryResult {
    pub fn end_temperature(&self) -> f64 {
        *self.temperatures.last().expect("nonempty")
    }
}

/// One trapezoidal step with no neighbour coupling.
pub fn step_dynamics(
    t: f64,
    control: Control,
    occupancy: f64,
    zone: &ZoneThermalParams,
    dt: f64,
) -> Result<f64> {
    step_dynamics_with(t, control, occupancy, zone, dt, 0.0)
}

/// One trapezoidal step; `external_kw` is the heat flow from neighbouring
/// zones (Σ_j R_j T_j), treated as known over the step.
pub fn step_dynamics_with(
    t: f64,
    control: Control,
    occupancy: f64,
    zone: &ZoneThermalParams,
    dt: f64,
    external_kw: f64,
) -> Result<f64> {
    let half_flow = 0.5 * control.m_dot * zone.c_p;
    let inertia = zone.capacity / dt;
    let denom = inertia + half_flow;
    if !(denom > 0.0) {
        return Err(Error::Unphysical(denom));
    }
    let num = t * (inertia - half_flow + zone.r_self)
        + external_kw
        + zone.c_o * occupancy
        + control.m_dot * zone.c_p * control.t_s;
    Ok(num / denom)
}

/// Energy cost of one step ($): fan and cooling at the electricity price,
/// reheat at the heating-fuel price.
pub fn stage_cost(
    control: Control,
    tariff: (f64, f64),
    hvac: &HvacParams,
    c_p: f64,
    dt: f64,
) -> f64 {
    let (r_e, r_h) = tariff;
    let fan = hvac.beta * control.m_dot;
    let cooling = c_p / hvac.eta_c * control.m_dot * (hvac.t_out - hvac.t_a);
    let heating = c_p / hvac.eta_h * control.m_dot * (control.t_s - hvac.t_a);
    (r_e * (fan + cooling) + r_h * heating) * dt
}

/// Folds [`step_dynamics`] over the sequence; `start_step` offsets tariff lookup.
pub fn simulate_trajectory(
    t_init: f64,
    controls: &ControlSequence,
    occupancy: &[f64],
    problem: &MpcProblem,
    config: &MpcConfig,
    start_step: usize,
) -> Result<TrajectoryResult> {
    if controls.len() != occupancy.len() {
        return Err(Error::LengthMismatch {
            expected: controls.len(),
            found: occupancy.len(),
        });
    }
    let mut temperatures = Vec::with_capacity(controls.len() + 1);
    temperatures.push(t_init);
    let mut t = t_init;
    let mut energy = 0.0;
    let mut violation = 0.0;
    for (k, (&c, &occ)) in controls.steps.iter().zip(occupancy).enumerate() {
        energy += stage_cost(
            c,
            problem.tariff.at(start_step + k),
            &problem.hvac,
            problem.zone.c_p,
            config.dt,
        );
        t = step_dynamics(t, c, occ, &problem.zone, config.dt)?;
        violation += problem.comfort.violation(t);
        temperatures.push(t);
    }
    Ok(TrajectoryResult {
        temperatures,
        energy_cost: energy,
        violation,
        realized_cost: energy + config.comfort_penalty * violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctl(m_dot: f64, t_s: f64) -> Control {
        Control { m_dot, t_s }
    }

    #[test]
    fn no_input_no_load_is_equilibrium() {
        let z = ZoneThermalParams::default();
        assert_eq!(
            step_dynamics(25.0, ctl(0.0, 12.8), 0.0, &z, 60.0).unwrap(),
            25.0
        );
    }

    #[test]
    fn occupant_heat_only() {
        // 25 + 5 · 0.1 kW · 60 s / 1000 kJ/K
        let z = ZoneThermalParams::default();
        let t = step_dynamics(25.0, ctl(0.0, 12.8), 5.0, &z, 60.0).unwrap();
        assert!((t - 25.03).abs() < 1e-12);
    }

    #[test]
    fn supply_air_cools_by_closed_form() {
        // (25 · (1000/60 − 0.05) + 0.1 · 12.8) / (1000/60 + 0.05)
        let z = ZoneThermalParams::default();
        let t = step_dynamics(25.0, ctl(0.1, 12.8), 0.0, &z, 60.0).unwrap();
        let expected = (25.0 * (1000.0 / 60.0 - 0.05) + 1.28) / (1000.0 / 60.0 + 0.05);
        assert!((t - expected).abs() < 1e-12);
        assert!((t - 24.927).abs() < 5e-5);
    }

    #[test]
    fn unphysical_parameters_are_rejected() {
        let z = ZoneThermalParams {
            capacity: -100.0,
            ..Default::default()
        };
        assert!(matches!(
            step_dynamics(25.0, ctl(0.1, 20.0), 0.0, &z, 60.0),
            Err(Error::Unphysical(_))
        ));
    }

    #[test]
    fn stage_cost_by_hand() {
        let h = HvacParams::default();
        assert_eq!(
            stage_cost(ctl(0.0, 30.0), (1.5e-4, 5e-6), &h, 1.0, 60.0),
            0.0
        );
        // P_f = 0.05, P_c = 0.43, P_h = 1.9111 kW
        let c = stage_cost(ctl(0.1, 30.0), (1.5e-4, 5e-6), &h, 1.0, 60.0);
        assert!((c - 0.004893).abs() < 5e-7, "{c}");
        let fan_cool = (1.5e-4 * (0.05 + 0.43)) * 60.0;
        assert!(
            (stage_cost(ctl(0.1, h.t_a), (1.5e-4, 5e-6), &h, 1.0, 60.0) - fan_cool).abs() < 1e-15
        );
    }

    #[test]
    fn empty_sequence_costs_nothing() {
        let p = MpcProblem::default();
        let r = simulate_trajectory(
            25.0,
            &ControlSequence::default(),
            &[],
            &p,
            &MpcConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.temperatures, vec![25.0]);
        assert_eq!(r.realized_cost, 0.0);
    }

    #[test]
    fn min_ventilation_at_ahu_temperature_cools_monotonically() {
        let p = MpcProblem::default();
        let c = ControlSequence {
            steps: vec![ctl(p.hvac.m_min, p.hvac.t_a); 200],
        };
        let r =
            simulate_trajectory(25.0, &c, &vec![0.0; 200], &p, &MpcConfig::default(), 0).unwrap();
        assert!(r
            .temperatures
            .windows(2)
            .all(|w| w[1] < w[0] && w[1] > p.hvac.t_a));
    }

    #[test]
    fn realized_cost_adds_penalty_for_violations() {
        let p = MpcProblem::default();
        let cfg = MpcConfig::default();
        let c = ControlSequence {
            steps: vec![ctl(p.hvac.m_min, p.hvac.t_a); 10],
        };
        let r = simulate_trajectory(30.0, &c, &[0.0; 10], &p, &cfg, 0).unwrap();
        assert!(r.violation > 0.0);
        assert!(
            (r.realized_cost - r.energy_cost - cfg.comfort_penalty * r.violation).abs() < 1e-12
        );
    }

    #[test]
    fn time_varying_tariff_cycles() {
        let t = Tariff {
            r_e_series: Some(vec![1.0, 2.0]),
            ..Default::default()
        };
        assert_eq!(t.at(0).0, 1.0);
        assert_eq!(t.at(3).0, 2.0);
        assert_eq!(t.at(3).1, 5e-6);
    }

    #[test]
    fn validation_catches_bad_parameters() {
        let mut p = MpcProblem::default();
        assert!(p.validate().is_ok());
        p.hvac.m_min = 0.0;
        assert!(p.validate().is_err());
        let cfg = MpcConfig {
            block_steps: 7,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
