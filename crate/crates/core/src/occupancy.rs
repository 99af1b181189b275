//! Occupant mobility and zone occupancy.
//!
//! Each occupant moves between zones as an independent Markov chain; the
//! building only sees per-zone head counts. Zone index 0 is always the
//! outside of the building and is never reported as a zone count.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::distortion::DistortionMatrix;
use crate::error::{Error, Result};
use crate::info::{entropy_bits, mi_from_joint_bits};
use crate::rng;

pub const OUTSIDE: &str = "outside";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ZoneSet {
    zones: Vec<String>,
}

impl ZoneSet {
    /// `zones[0]` is taken as the outside zone.
    pub fn new(zones: Vec<String>) -> Result<Self> {
        if zones.len() < 2 {
            return Err(Error::invalid(
                "a zone set needs the outside zone and at least one interior zone",
            ));
        }
        let mut seen = HashSet::new();
        for z in &zones {
            if !seen.insert(z.as_str()) {
                return Err(Error::invalid(format!("duplicate zone identifier {z:?}")));
            }
        }
        Ok(Self { zones })
    }

    /// `outside, z1, …, zN`.
    pub fn with_interior(n: usize) -> Self {
        let mut zones = vec![OUTSIDE.to_string()];
        zones.extend((1..=n).map(|i| format!("z{i}")));
        Self::new(zones).expect("n ≥ 1")
    }

    /// Number of states including outside (N + 1).
    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of interior zones N.
    pub fn interior(&self) -> usize {
        self.zones.len() - 1
    }

    pub fn ids(&self) -> &[String] {
        &self.zones
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.zones.iter().position(|z| z == id)
    }
}

impl TryFrom<Vec<String>> for ZoneSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ZoneSet> for Vec<String> {
    fn from(z: ZoneSet) -> Self {
        z.zones
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationTrace {
    pub occupant: String,
    pub steps: Vec<usize>,
}

impl LocationTrace {
    pub fn new(occupant: impl Into<String>, steps: Vec<usize>) -> Self {
        Self {
            occupant: occupant.into(),
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

/// Row-stochastic matrix `a[i][j] = P(next = j | current = i)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("empty transition matrix"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "transition row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            if r.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "transition row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("transition row {i} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            rows: vec![vec![1.0 / n as f64; n]; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// `π ↦ πA`
    pub fn left_mul(&self, pi: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, &p) in pi.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (o, &a) in out.iter_mut().zip(&self.rows[i]) {
                *o += p * a;
            }
        }
        out
    }

    /// Number of closed communicating classes of the positive-transition graph.
    pub fn closed_classes(&self) -> usize {
        let n = self.dim();
        let reach: Vec<Vec<bool>> = (0..n)
            .map(|s| {
                let mut seen = vec![false; n];
                let mut stack = vec![s];
                seen[s] = true;
                while let Some(i) = stack.pop() {
                    for j in 0..n {
                        if self.rows[i][j] > 0.0 && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
                seen
            })
            .collect();
        let mut counted = vec![false; n];
        let mut classes = 0;
        for i in 0..n {
            if counted[i] {
                continue;
            }
            let closed = (0..n).all(|j| !reach[i][j] || reach[j][i]);
            if closed {
                classes += 1;
                for j in 0..n {
                    if reach[i][j] {
                        counted[j] = true;
                    }
                }
            }
        }
        classes
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;
    fn try_from(v: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(t: TransitionMatrix) -> Self {
        t.rows
    }
}

/// Independent per-occupant Markov chains over a shared zone set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FhmmModel {
    pub zone_set: ZoneSet,
    pub occupants: Vec<String>,
    pub chains: Vec<TransitionMatrix>,
    pub initial: Vec<Vec<f64>>,
}

impl FhmmModel {
    /// Builds a model whose initial laws are the chains' stationary laws.
    pub fn stationary(
        zone_set: ZoneSet,
        occupants: Vec<String>,
        chains: Vec<TransitionMatrix>,
    ) -> Result<Self> {
        let initial = chains
            .iter()
            .map(|c| stationary_distribution(c, DEFAULT_STATIONARY_TOL))
            .collect::<Result<Vec<_>>>()?;
        Self::new(zone_set, occupants, chains, initial)
    }

    pub fn new(
        zone_set: ZoneSet,
        occupants: Vec<String>,
        chains: Vec<TransitionMatrix>,
        initial: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let model = Self {
            zone_set,
            occupants,
            chains,
            initial,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains.is_empty() {
            return Err(Error::invalid("model has no occupants"));
        }
        if self.occupants.len() != self.chains.len() || self.initial.len() != self.chains.len() {
            return Err(Error::DimensionMismatch(
                "occupants, chains and initial laws must have equal length".into(),
            ));
        }
        let d = self.zone_set.len();
        for (m, (c, init)) in self.chains.iter().zip(&self.initial).enumerate() {
            if c.dim() != d || init.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "occupant {m} has dimension {} but the zone set has {d} states",
                    c.dim()
                )));
            }
            let s: f64 = init.iter().sum();
            if (s - 1.0).abs() > 1e-9 || init.iter().any(|&p| p < 0.0) {
                return Err(Error::invalid(format!(
                    "initial law of occupant {m} is not a distribution"
                )));
            }
        }
        Ok(())
    }

    pub fn occupant_count(&self) -> usize {
        self.chains.len()
    }

    pub fn zone_count(&self) -> usize {
        self.zone_set.interior()
    }

    /// Stationary location law per occupant.
    pub fn stationary_laws(&self) -> Result<Vec<Vec<f64>>> {
        self.chains
            .iter()
            .map(|c| stationary_distribution(c, DEFAULT_STATIONARY_TOL))
            .collect()
    }
}

/// `counts[k][n-1]` = occupants in interior zone `n` at step `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccupancySeries {
    pub occupants: usize,
    pub counts: Vec<Vec<u32>>,
}

impl OccupancySeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn zones(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    /// The count sequence of one interior zone (1-based zone index).
    pub fn zone(&self, n: usize) -> Vec<u32> {
        self.counts.iter().map(|r| r[n - 1]).collect()
    }
}

/// Per interior zone, the law of its head count over `0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupancyMarginal {
    pub per_zone: Vec<Vec<f64>>,
}

pub const DEFAULT_STATIONARY_TOL: f64 = 1e-13;
const STATIONARY_MAX_ITERS: usize = 2_000_000;

/// Maximum-likelihood transition counts with additive smoothing.
///
/// Rows never visited (and no smoothing) fall back to uniform.
pub fn learn_transitions(
    traces: &[LocationTrace],
    zone_set: &ZoneSet,
    smoothing: f64,
) -> Result<Vec<TransitionMatrix>> {
    if traces.is_empty() {
        return Err(Error::EmptyTraces);
    }
    if !(smoothing >= 0.0) {
        return Err(Error::invalid("smoothing must be nonnegative"));
    }
    let d = zone_set.len();
    traces
        .iter()
        .map(|t| {
            if let Some(&z) = t.steps.iter().find(|&&z| z >= d) {
                return Err(Error::ZoneOutOfRange {
                    occupant: t.occupant.clone(),
                    zone: z,
                    zones: d,
                });
            }
            let mut counts = vec![vec![0.0f64; d]; d];
            for w in t.steps.windows(2) {
                counts[w[0]][w[1]] += 1.0;
            }
            let rows = counts
                .into_iter()
                .map(|row| {
                    let total: f64 = row.iter().sum::<f64>() + d as f64 * smoothing;
                    if total == 0.0 || smoothing.is_infinite() {
                        vec![1.0 / d as f64; d]
                    } else {
                        normalize(row.iter().map(|c| (c + smoothing) / total).collect())
                    }
                })
                .collect();
            TransitionMatrix::new(rows)
        })
        .collect()
}

// Pushes the rounding residue into the largest entry so the row sum is as
// close to one as floating point allows.
fn normalize(mut row: Vec<f64>) -> Vec<f64> {
    let s: f64 = row.iter().sum();
    for v in row.iter_mut() {
        *v /= s;
    }
    let s: f64 = row.iter().sum();
    let (imax, _) =
        row.iter().enumerate().fold(
            (0, f64::MIN),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    row[imax] += 1.0 - s;
    row
}

/// Stationary law by power iteration on the lazy chain `(A + I)/2`,
/// started from the uniform vector.
pub fn stationary_distribution(a: &TransitionMatrix, tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    if a.closed_classes() != 1 {
        return Err(Error::NoStationaryDistribution {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    let residual = |pi: &[f64]| -> f64 {
        a.left_mul(pi)
            .iter()
            .zip(pi)
            .map(|(x, y)| (x - y).abs())
            .sum()
    };
    let mut pi = vec![1.0 / n as f64; n];
    for it in 0..STATIONARY_MAX_ITERS {
        let r = residual(&pi);
        if r <= tol {
            return Ok(pi);
        }
        let next = a.left_mul(&pi);
        let mut lazy: Vec<f64> = pi.iter().zip(&next).map(|(p, q)| 0.5 * (p + q)).collect();
        let s: f64 = lazy.iter().sum();
        lazy.iter_mut().for_each(|v| *v /= s);
        pi = lazy;
        if it + 1 == STATIONARY_MAX_ITERS {
            return Err(Error::NoStationaryDistribution {
                iterations: STATIONARY_MAX_ITERS,
                residual: residual(&pi),
            });
        }
    }
    unreachable!()
}

pub fn occupancy_from_traces(
    traces: &[LocationTrace],
    zone_set: &ZoneSet,
) -> Result<OccupancySeries> {
    let Some(first) = traces.first() else {
        return Err(Error::EmptyTraces);
    };
    let k = first.len();
    let d = zone_set.len();
    let n = zone_set.interior();
    let mut counts = vec![vec![0u32; n]; k];
    for t in traces {
        if t.len() != k {
            return Err(Error::LengthMismatch {
                expected: k,
                found: t.len(),
            });
        }
        for (row, &z) in counts.iter_mut().zip(&t.steps) {
            if z >= d {
                return Err(Error::ZoneOutOfRange {
                    occupant: t.occupant.clone(),
                    zone: z,
                    zones: d,
                });
            }
            if z > 0 {
                row[z - 1] += 1;
            }
        }
    }
    Ok(OccupancySeries {
        occupants: traces.len(),
        counts,
    })
}

/// Law of a sum of independent Bernoulli(p_i), by folding one trial at a time.
pub fn poisson_binomial(probs: &[f64]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for &p in probs {
        let mut next = vec![0.0; dist.len() + 1];
        for (c, &w) in dist.iter().enumerate() {
            next[c] += w * (1.0 - p);
            next[c + 1] += w * p;
        }
        dist = next;
    }
    dist
}

pub fn occupancy_marginal(model: &FhmmModel) -> Result<OccupancyMarginal> {
    let laws = model.stationary_laws()?;
    Ok(marginal_from_laws(&laws, model.zone_count()))
}

/// Per-zone count laws given each occupant's location law.
pub fn marginal_from_laws(laws: &[Vec<f64>], zones: usize) -> OccupancyMarginal {
    let per_zone = (1..=zones)
        .map(|n| {
            let presence: Vec<f64> = laws.iter().map(|l| l[n]).collect();
            poisson_binomial(&presence)
        })
        .collect();
    OccupancyMarginal { per_zone }
}

/// Samples one trace per occupant; occupant `m` draws from its own stream.
pub fn sample_traces(model: &FhmmModel, steps: usize, seed: u64) -> Result<Vec<LocationTrace>> {
    if steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    model.validate()?;
    Ok(model
        .chains
        .iter()
        .zip(&model.initial)
        .zip(&model.occupants)
        .enumerate()
        .map(|(m, ((chain, init), name))| {
            let mut rng = rng::stream(seed, "occupant", &[m as u64]);
            let mut state = draw(init, &mut rng);
            let mut out = Vec::with_capacity(steps);
            out.push(state);
            for _ in 1..steps {
                state = draw(chain.row(state), &mut rng);
                out.push(state);
            }
            LocationTrace::new(name.clone(), out)
        })
        .collect())
}

pub(crate) fn draw(p: &[f64], rng: &mut rng::Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding gap at the top; take the last positive entry
    p.iter().rposition(|&w| w > 0.0).unwrap_or(p.len() - 1)
}

/// Exact single-step mutual informations at stationarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointMiCheck {
    /// I(X^{1:M}; V^{1:N})
    pub location_mi: f64,
    /// I(Y^{1:N}; V^{1:N})
    pub occupancy_mi: f64,
    /// Σ_n I(Y^n; V^n)
    pub zone_sum_mi: f64,
}

pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// Full enumeration of one time step: joint locations X, per-zone counts Y
/// and reported counts V (one channel per interior zone).
pub fn exact_joint_mi_check(
    model: &FhmmModel,
    distortion: &[DistortionMatrix],
    cap: u128,
) -> Result<JointMiCheck> {
    let m = model.occupant_count();
    let n = model.zone_count();
    let d = model.zone_set.len();
    if distortion.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} distortion matrices for {n} zones",
            distortion.len()
        )));
    }
    for (z, ch) in distortion.iter().enumerate() {
        if ch.max_count() != m {
            return Err(Error::DimensionMismatch(format!(
                "distortion for zone {} covers counts 0..={} but there are {m} occupants",
                z + 1,
                ch.max_count()
            )));
        }
    }
    let x_size = (d as u128).pow(m as u32);
    let v_size = ((m + 1) as u128).pow(n as u32);
    if x_size * v_size > cap {
        return Err(Error::StateSpaceTooLarge {
            size: x_size * v_size,
            cap,
        });
    }
    let laws = model.stationary_laws()?;
    let (x_size, v_size) = (x_size as usize, v_size as usize);

    let decode_v = |mut idx: usize| -> Vec<usize> {
        let mut v = vec![0; n];
        for slot in v.iter_mut() {
            *slot = idx % (m + 1);
            idx /= m + 1;
        }
        v
    };
    let encode_y = |y: &[usize]| -> usize { y.iter().rev().fold(0, |acc, &c| acc * (m + 1) + c) };

    let mut joint_xv = vec![vec![0.0; v_size]; x_size];
    let mut joint_yv = vec![vec![0.0; v_size]; v_size];
    let v_tuples: Vec<Vec<usize>> = (0..v_size).map(decode_v).collect();
    for (xi, row) in joint_xv.iter_mut().enumerate() {
        let mut rest = xi;
        let mut px = 1.0;
        let mut y = vec![0usize; n];
        for law in &laws {
            let z = rest % d;
            rest /= d;
            px *= law[z];
            if z > 0 {
                y[z - 1] += 1;
            }
        }
        if px == 0.0 {
            continue;
        }
        let yi = encode_y(&y);
        for (vi, v) in v_tuples.iter().enumerate() {
            let pv: f64 = (0..n).map(|z| distortion[z].prob(y[z], v[z])).product();
            row[vi] = px * pv;
            joint_yv[yi][vi] += px * pv;
        }
    }
    let location_mi = mi_from_joint_bits(&joint_xv);
    let occupancy_mi = mi_from_joint_bits(&joint_yv);

    let marginal = marginal_from_laws(&laws, n);
    let zone_sum_mi = marginal
        .per_zone
        .iter()
        .zip(distortion)
        .map(|(py, ch)| crate::distortion::mutual_information(py, ch))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum();
    Ok(JointMiCheck {
        location_mi,
        occupancy_mi,
        zone_sum_mi,
    })
}

/// Entropy of a zone's count law, in bits.
pub fn count_entropy(p_y: &[f64]) -> f64 {
    entropy_bits(p_y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zones(n: usize) -> ZoneSet {
        ZoneSet::with_interior(n)
    }

    #[test]
    fn learn_counts_transitions_by_hand() {
        let t = LocationTrace::new("a", vec![1, 1, 0, 1]);
        let a = &learn_transitions(&[t], &zones(1), 0.0).unwrap()[0];
        assert_eq!(a.get(1, 1), 0.5);
        assert_eq!(a.get(1, 0), 0.5);
        assert_eq!(a.get(0, 1), 1.0);
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn unvisited_rows_become_uniform() {
        let t = LocationTrace::new("a", vec![0, 0, 0]);
        let a = &learn_transitions(&[t], &zones(1), 0.0).unwrap()[0];
        assert_eq!(a.row(0), &[1.0, 0.0]);
        assert_eq!(a.row(1), &[0.5, 0.5]);
    }

    #[test]
    fn heavy_smoothing_tends_to_uniform() {
        let t = LocationTrace::new("a", vec![0, 1, 2, 2, 2, 1, 0]);
        let a = &learn_transitions(&[t], &zones(2), 1e9).unwrap()[0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.get(i, j) - 1.0 / 3.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn learn_rejects_bad_input() {
        assert!(matches!(
            learn_transitions(&[], &zones(1), 0.1),
            Err(Error::EmptyTraces)
        ));
        let t = LocationTrace::new("a", vec![0, 3]);
        assert!(matches!(
            learn_transitions(&[t], &zones(1), 0.1),
            Err(Error::ZoneOutOfRange { zone: 3, .. })
        ));
    }

    #[test]
    fn stationary_of_two_state_chains() {
        let sym = TransitionMatrix::new(vec![vec![0.8, 0.2], vec![0.2, 0.8]]).unwrap();
        let pi = stationary_distribution(&sym, 1e-13).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-12);

        // πA = π with π0 + π1 = 1: 0.1 π0 = 0.3 π1 ⇒ π = (0.75, 0.25)
        let a = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let pi = stationary_distribution(&a, 1e-13).unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn reducible_chain_is_reported() {
        let id = TransitionMatrix::identity(3);
        assert!(matches!(
            stationary_distribution(&id, 1e-12),
            Err(Error::NoStationaryDistribution { .. })
        ));
    }

    #[test]
    fn periodic_chain_still_converges() {
        let flip = TransitionMatrix::new(vec![
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let pi = stationary_distribution(&flip, 1e-12).unwrap();
        assert!(pi.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn aggregation_counts_heads() {
        let zs = zones(2);
        let t = vec![
            LocationTrace::new("a", vec![1, 0, 1]),
            LocationTrace::new("b", vec![1, 0, 2]),
            LocationTrace::new("c", vec![0, 0, 2]),
        ];
        let occ = occupancy_from_traces(&t, &zs).unwrap();
        assert_eq!(occ.counts, vec![vec![2, 0], vec![0, 0], vec![1, 2]]);
        let short = vec![
            LocationTrace::new("a", vec![1]),
            LocationTrace::new("b", vec![1, 0]),
        ];
        assert!(matches!(
            occupancy_from_traces(&short, &zs),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn poisson_binomial_small_cases() {
        assert_eq!(poisson_binomial(&[0.5, 0.5]), vec![0.25, 0.5, 0.25]);
        assert_eq!(poisson_binomial(&[0.75]), vec![0.25, 0.75]);
    }

    #[test]
    fn poisson_binomial_matches_enumeration() {
        let p = [0.2, 0.5, 0.9];
        let mut brute = [0.0; 4];
        for mask in 0u32..8 {
            let mut w = 1.0;
            for (i, &pi) in p.iter().enumerate() {
                w *= if mask & (1 << i) != 0 { pi } else { 1.0 - pi };
            }
            brute[mask.count_ones() as usize] += w;
        }
        let dp = poisson_binomial(&p);
        for c in 0..4 {
            assert!((dp[c] - brute[c]).abs() < 1e-15);
        }
    }

    #[test]
    fn absorbing_state_gives_constant_trace() {
        let a = TransitionMatrix::new(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let model =
            FhmmModel::new(zones(1), vec!["a".into()], vec![a], vec![vec![0.0, 1.0]]).unwrap();
        let t = sample_traces(&model, 50, 3).unwrap();
        assert!(t[0].steps.iter().all(|&z| z == 1));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let a = TransitionMatrix::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap();
        let model =
            FhmmModel::stationary(zones(1), vec!["a".into(), "b".into()], vec![a.clone(), a])
                .unwrap();
        assert_eq!(
            sample_traces(&model, 200, 9).unwrap(),
            sample_traces(&model, 200, 9).unwrap()
        );
        assert_ne!(
            sample_traces(&model, 200, 9).unwrap(),
            sample_traces(&model, 200, 10).unwrap()
        );
    }

    #[test]
    fn empirical_transitions_follow_the_chain() {
        let a = TransitionMatrix::new(vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.5, 0.3],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let model = FhmmModel::stationary(zones(2), vec!["a".into()], vec![a.clone()]).unwrap();
        let t = sample_traces(&model, 100_000, 1).unwrap();
        let learned = &learn_transitions(&t, &zones(2), 0.0).unwrap()[0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((learned.get(i, j) - a.get(i, j)).abs() < 0.01, "({i},{j})");
            }
        }
    }

    #[test]
    fn identity_channel_single_occupant_gives_count_entropy() {
        let a = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
        let model = FhmmModel::stationary(zones(1), vec!["a".into()], vec![a]).unwrap();
        let chk = exact_joint_mi_check(
            &model,
            &[DistortionMatrix::identity(1)],
            DEFAULT_ENUMERATION_CAP,
        )
        .unwrap();
        let h = count_entropy(&[0.75, 0.25]);
        assert!((chk.location_mi - h).abs() < 1e-12);
        assert!((chk.zone_sum_mi - h).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_leaks_nothing() {
        let a = TransitionMatrix::new(vec![
            vec![0.6, 0.3, 0.1],
            vec![0.2, 0.5, 0.3],
            vec![0.25, 0.25, 0.5],
        ])
        .unwrap();
        let model =
            FhmmModel::stationary(zones(2), vec!["a".into(), "b".into()], vec![a.clone(), a])
                .unwrap();
        let ch = DistortionMatrix::new(vec![vec![0.2, 0.5, 0.3]; 3]).unwrap();
        let chk = exact_joint_mi_check(&model, &[ch.clone(), ch], DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(chk.location_mi.abs() < 1e-12 && chk.zone_sum_mi.abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let a = TransitionMatrix::uniform(3);
        let model =
            FhmmModel::stationary(zones(2), vec!["a".into(), "b".into()], vec![a.clone(), a])
                .unwrap();
        let ch = DistortionMatrix::identity(2);
        assert!(matches!(
            exact_joint_mi_check(&model, &[ch.clone(), ch], 10),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }
}
