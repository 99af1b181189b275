//! Occupancy distortion mechanisms and their information leakage.
//!
//! A [`DistortionMatrix`] is the channel `P(V = v | Y = y)` from the true
//! head count of a zone to the count reported to the controller. This
//! module holds the information measures and the fixed baseline schemes;
//! [`tables`] and [`design`] build the optimal mechanism.

pub mod design;
pub mod tables;

pub use design::{
    default_delta_bracket, design_distortion, design_distortion_from, independence_threshold,
    DesignConfig, DesignResult,
};
pub use tables::{build_constraint_tables, ConstraintTables};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::LN2;
use crate::occupancy::draw;
use crate::rng::Rng;

const ROW_TOL: f64 = 1e-10;
pub(crate) const GRAD_CLIP: f64 = 1e-12;

/// Row-stochastic `(M+1)×(M+1)` channel; row `y`, column `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DistortionMatrix {
    rows: Vec<Vec<f64>>,
}

impl DistortionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::invalid(
                "a distortion matrix needs at least two count values",
            ));
        }
        for (y, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "row {y} has {} entries, expected {n}",
                    r.len()
                )));
            }
            if r.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!(
                    "row {y} has a negative or non-finite entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid(format!("row {y} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity(max_count: usize) -> Self {
        let n = max_count + 1;
        let rows = (0..n)
            .map(|y| (0..n).map(|v| if v == y { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    /// Every row equal to `row`.
    pub fn constant(row: Vec<f64>) -> Result<Self> {
        let n = row.len();
        Self::new(vec![row; n])
    }

    /// Largest count M.
    pub fn max_count(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn prob(&self, y: usize, v: usize) -> f64 {
        self.rows[y][v]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.rows[y]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `p(v) = Σ_y p(y) P(v|y)`
    pub fn output_law(&self, p_y: &[f64]) -> Vec<f64> {
        let mut p_v = vec![0.0; self.rows.len()];
        for (py, row) in p_y.iter().zip(&self.rows) {
            for (pv, &c) in p_v.iter_mut().zip(row) {
                *pv += py * c;
            }
        }
        p_v
    }

    /// `self` followed by `next`: `(self · next)[y][v] = Σ_w self[y][w] next[w][v]`.
    pub fn compose(&self, next: &DistortionMatrix) -> Result<DistortionMatrix> {
        if self.rows.len() != next.rows.len() {
            return Err(Error::DimensionMismatch(
                "channels are not composable".into(),
            ));
        }
        let rows = self.rows.iter().map(|r| next.output_law(r)).collect();
        Ok(Self { rows })
    }

    pub fn mean_diagonal(&self) -> f64 {
        (0..self.rows.len()).map(|y| self.rows[y][y]).sum::<f64>() / self.rows.len() as f64
    }

    /// Largest L1 distance between any two rows.
    pub fn max_row_distance(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in &self.rows {
            for b in &self.rows {
                worst = worst.max(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum());
            }
        }
        worst
    }
}

impl TryFrom<Vec<Vec<f64>>> for DistortionMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DistortionMatrix> for Vec<Vec<f64>> {
    fn from(d: DistortionMatrix) -> Self {
        d.rows
    }
}

fn check_dims(p_y: &[f64], channel: &DistortionMatrix) -> Result<()> {
    if p_y.len() != channel.rows.len() {
        return Err(Error::DimensionMismatch(format!(
            "count law has {} entries, channel has {} rows",
            p_y.len(),
            channel.rows.len()
        )));
    }
    Ok(())
}

/// I(Y;V) in nats without validation; the optimizer's inner objective.
pub(crate) fn mi_nats(p_y: &[f64], rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    let mut p_v = vec![0.0; n];
    for (py, row) in p_y.iter().zip(rows) {
        for (pv, &c) in p_v.iter_mut().zip(row) {
            *pv += py * c;
        }
    }
    let mut mi = 0.0;
    for (py, row) in p_y.iter().zip(rows) {
        if *py <= 0.0 {
            continue;
        }
        for (&c, &pv) in row.iter().zip(&p_v) {
            if c > 0.0 {
                mi += py * c * (c / pv).ln();
            }
        }
    }
    mi.max(0.0)
}

pub(crate) fn mi_gradient_into(p_y: &[f64], rows: &[Vec<f64>], out: &mut [Vec<f64>]) {
    let n = rows.len();
    let mut p_v = vec![0.0; n];
    for (py, row) in p_y.iter().zip(rows) {
        for (pv, &c) in p_v.iter_mut().zip(row) {
            *pv += py * c;
        }
    }
    for ((py, row), g) in p_y.iter().zip(rows).zip(out.iter_mut()) {
        for ((gv, &c), &pv) in g.iter_mut().zip(row).zip(&p_v) {
            *gv = if *py > 0.0 {
                py * (c.max(GRAD_CLIP) / pv.max(GRAD_CLIP)).ln()
            } else {
                0.0
            };
        }
    }
}

/// I(Y;V) in bits for count law `p_y` through `channel`.
pub fn mutual_information(p_y: &[f64], channel: &DistortionMatrix) -> Result<f64> {
    check_dims(p_y, channel)?;
    Ok(mi_nats(p_y, &channel.rows) / LN2)
}

/// ∂I/∂P(v|y) in nats, `p(y)·ln(P(v|y)/p(v))`, with both probabilities
/// clipped below at 1e-12.
pub fn mi_gradient(p_y: &[f64], channel: &DistortionMatrix) -> Result<Vec<Vec<f64>>> {
    check_dims(p_y, channel)?;
    let n = channel.rows.len();
    let mut g = vec![vec![0.0; n]; n];
    mi_gradient_into(p_y, &channel.rows, &mut g);
    Ok(g)
}

// Nudges the largest entry so that `row.iter().sum()` is exactly 1.
fn exact_row(mut row: Vec<f64>) -> Vec<f64> {
    let imax = (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b });
    for _ in 0..8 {
        let s: f64 = row.iter().sum();
        if s == 1.0 {
            break;
        }
        row[imax] += 1.0 - s;
    }
    row
}

/// Reports every count in `0..=M` with equal probability.
pub fn uniform_scheme(max_count: usize) -> DistortionMatrix {
    let n = max_count + 1;
    let rows = (0..n).map(|_| exact_row(vec![1.0 / n as f64; n])).collect();
    DistortionMatrix { rows }
}

/// Sensor-like noise: keep the count with probability `acc`, otherwise
/// report a neighbouring count. Row 0 spreads to 1 and 2; row M mirrors it
/// and spreads to M−1 and M−2.
pub fn multinomial_scheme(acc: f64, max_count: usize) -> Result<DistortionMatrix> {
    if !(0.0..=1.0).contains(&acc) {
        return Err(Error::invalid("accuracy must lie in [0, 1]"));
    }
    if max_count < 2 {
        return Err(Error::invalid("the multinomial scheme needs M ≥ 2"));
    }
    let n = max_count + 1;
    let side = (1.0 - acc) / 2.0;
    let rows = (0..n)
        .map(|y| {
            let mut row = vec![0.0; n];
            row[y] = acc;
            let (a, b) = if y == 0 {
                (1, 2)
            } else if y == max_count {
                (y - 1, y - 2)
            } else {
                (y - 1, y + 1)
            };
            row[a] += side;
            row[b] += side;
            exact_row(row)
        })
        .collect();
    Ok(DistortionMatrix { rows })
}

/// Office-hours calendar for the fixed-schedule baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkingHours {
    pub step_seconds: f64,
    /// Seconds since Monday 00:00 at step 0.
    pub start_offset_seconds: f64,
    pub start_hour: f64,
    pub end_hour: f64,
    /// Working days counted from Monday (5 = Mon–Fri).
    pub work_days: u32,
}

impl Default for WorkingHours {
    fn default() -> Self {
        Self {
            step_seconds: 60.0,
            start_offset_seconds: 0.0,
            start_hour: 8.0,
            end_hour: 18.0,
            work_days: 5,
        }
    }
}

impl WorkingHours {
    pub fn is_working(&self, step: usize) -> bool {
        let t = self.start_offset_seconds + step as f64 * self.step_seconds;
        let day = (t / 86_400.0).floor() as u64 % 7;
        let hour = (t % 86_400.0) / 3600.0;
        day < self.work_days as u64 && hour >= self.start_hour && hour < self.end_hour
    }
}

/// `M` during working hours, 0 otherwise, regardless of the true counts.
pub fn fixed_schedule_series(
    calendar: &WorkingHours,
    max_count: usize,
    steps: usize,
) -> Result<Vec<u32>> {
    if steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    Ok((0..steps)
        .map(|k| {
            if calendar.is_working(k) {
                max_count as u32
            } else {
                0
            }
        })
        .collect())
}

/// Samples a reported count from row `y`.
pub fn apply_distortion(matrix: &DistortionMatrix, y: usize, rng: &mut Rng) -> Result<usize> {
    if y > matrix.max_count() {
        return Err(Error::invalid(format!(
            "count {y} exceeds M = {}",
            matrix.max_count()
        )));
    }
    Ok(draw(&matrix.rows[y], rng))
}

/// Leakage along `Y → W → V` where `sensor` is `P(W|Y)` and `design` is
/// `P(V|W)`. Returns `(I(Y;V), I(W;V))`; the first never exceeds the second.
pub fn dpi_check(
    p_y: &[f64],
    sensor: &DistortionMatrix,
    design: &DistortionMatrix,
) -> Result<(f64, f64)> {
    check_dims(p_y, sensor)?;
    let composed = sensor.compose(design)?;
    let p_w = sensor.output_law(p_y);
    let i_yv = mi_nats(p_y, &composed.rows) / LN2;
    let i_wv = mi_nats(&p_w, &design.rows) / LN2;
    if i_yv > i_wv + 1e-12 {
        return Err(Error::invalid(format!(
            "data processing inequality violated: I(Y;V) = {i_yv} > I(W;V) = {i_wv}"
        )));
    }
    Ok((i_yv, i_wv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::binary_entropy;
    use crate::rng;

    #[test]
    fn lossless_channel_carries_the_entropy() {
        let i = mutual_information(&[0.5, 0.5], &DistortionMatrix::identity(1)).unwrap();
        assert!((i - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_rows_carry_nothing() {
        let ch = DistortionMatrix::constant(vec![0.1, 0.6, 0.3]).unwrap();
        assert_eq!(mutual_information(&[0.2, 0.3, 0.5], &ch).unwrap(), 0.0);
        let g = mi_gradient(&[0.2, 0.3, 0.5], &ch).unwrap();
        assert!(g.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn binary_symmetric_channel() {
        let ch = DistortionMatrix::new(vec![vec![0.89, 0.11], vec![0.11, 0.89]]).unwrap();
        let i = mutual_information(&[0.5, 0.5], &ch).unwrap();
        assert!((i - (1.0 - binary_entropy(0.11))).abs() < 1e-12);
        assert!((i - 0.5).abs() < 1e-3);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(mutual_information(&[1.0], &DistortionMatrix::identity(2)).is_err());
    }

    #[test]
    fn zero_probability_rows_have_zero_gradient() {
        let ch = DistortionMatrix::new(vec![vec![0.7, 0.3], vec![0.2, 0.8]]).unwrap();
        let g = mi_gradient(&[1.0, 0.0], &ch).unwrap();
        assert_eq!(g[1], vec![0.0, 0.0]);
    }

    #[test]
    fn uniform_rows_are_exact() {
        for m in 1..12 {
            let u = uniform_scheme(m);
            for r in u.rows() {
                assert_eq!(r.iter().sum::<f64>(), 1.0);
            }
        }
        assert!(uniform_scheme(2)
            .rows()
            .iter()
            .flatten()
            .all(|&p| (p - 1.0 / 3.0).abs() < 1e-16));
    }

    #[test]
    fn multinomial_rows() {
        let m = multinomial_scheme(0.8, 2).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15);
        assert!(close(m.row(0), &[0.8, 0.1, 0.1]));
        assert!(close(m.row(1), &[0.1, 0.8, 0.1]));
        assert!(close(m.row(2), &[0.1, 0.1, 0.8]));
        assert_eq!(
            multinomial_scheme(1.0, 4).unwrap(),
            DistortionMatrix::identity(4)
        );
        assert!(multinomial_scheme(0.8, 1).is_err());
        for acc in [0.6, 0.7, 0.8, 0.9, 0.33] {
            for r in multinomial_scheme(acc, 5).unwrap().rows() {
                assert_eq!(r.iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn schedule_follows_office_hours() {
        let cal = WorkingHours::default();
        let s = fixed_schedule_series(&cal, 4, 7 * 1440).unwrap();
        assert_eq!(s[10 * 60], 4); // Monday 10:00
        assert_eq!(s[3 * 60], 0); // Monday 03:00
        assert_eq!(s[5 * 1440 + 10 * 60], 0); // Saturday 10:00
    }

    #[test]
    fn sampling_matches_the_row() {
        let ch = DistortionMatrix::new(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.2, 0.5, 0.3],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let mut r = rng::from_seed(5);
        assert_eq!(apply_distortion(&ch, 0, &mut r).unwrap(), 0);
        let mut hist = [0usize; 3];
        for _ in 0..100_000 {
            hist[apply_distortion(&ch, 1, &mut r).unwrap()] += 1;
        }
        for v in 0..3 {
            assert!((hist[v] as f64 / 1e5 - ch.prob(1, v)).abs() < 0.01);
        }
        let a: Vec<usize> = {
            let mut r = rng::from_seed(9);
            (0..50)
                .map(|_| apply_distortion(&ch, 1, &mut r).unwrap())
                .collect()
        };
        let b: Vec<usize> = {
            let mut r = rng::from_seed(9);
            (0..50)
                .map(|_| apply_distortion(&ch, 1, &mut r).unwrap())
                .collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn dpi_edge_cases() {
        let p = [0.3, 0.5, 0.2];
        let design = DistortionMatrix::new(vec![
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.6, 0.2],
            vec![0.1, 0.2, 0.7],
        ])
        .unwrap();
        let (a, b) = dpi_check(&p, &DistortionMatrix::identity(2), &design).unwrap();
        assert!((a - b).abs() < 1e-15);
        let flat = DistortionMatrix::constant(vec![0.2, 0.3, 0.5]).unwrap();
        // W is independent of Y, so nothing about Y reaches V; I(W;V) is
        // whatever the design leaks about W itself.
        let (a, b) = dpi_check(&p, &flat, &design).unwrap();
        assert!(a.abs() < 1e-15);
        assert!(b > 0.0);
    }
}
