//! MAP reconstruction of individual location traces from reported counts.
//!
//! The attacker knows every occupant's transition matrix and the channel
//! each zone's counts passed through. Joint states are tuples of occupant
//! locations, encoded as base-`(N+1)` integers with occupant 0 as the most
//! significant digit, so numeric order is lexicographic order.
//!
//! The beam search runs the max-product recursion one occupant at a time:
//! maximizing over occupant `m`'s previous location while the others stay
//! put costs `(N+1)` candidates per kept state instead of `(N+1)^M`. Every
//! sub-step keeps the best `beam_width` partial states; once the width
//! covers the whole joint space nothing is pruned and the result is the
//! exact Viterbi path.

use crate::distortion::DistortionMatrix;
use crate::error::{Error, Result};
use crate::occupancy::{FhmmModel, LocationTrace};

#[derive(Clone, Debug, PartialEq)]
pub struct AttackConfig {
    pub beam_width: usize,
    /// Largest number of joint trajectories the brute-force oracle will enumerate.
    pub bruteforce_cap: u128,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            beam_width: 1000,
            bruteforce_cap: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceResult {
    pub traces: Vec<LocationTrace>,
    /// Log prior of the traces plus log likelihood of the reports.
    pub log_posterior: f64,
}

struct Tables {
    /// `log_init[m][x]`
    log_init: Vec<Vec<f64>>,
    /// `log_trans[m][from][to]`
    log_trans: Vec<Vec<Vec<f64>>>,
    /// `log_emit[n][y][v]` for interior zone `n + 1`.
    log_emit: Vec<Vec<Vec<f64>>>,
    states: usize,
    occupants: usize,
}

fn ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

impl Tables {
    fn new(
        reported: &[Vec<u32>],
        model: &FhmmModel,
        distortions: &[DistortionMatrix],
    ) -> Result<Self> {
        model.validate()?;
        let zones = model.zone_count();
        let occupants = model.occupant_count();
        if reported.is_empty() {
            return Err(Error::invalid("reported series is empty"));
        }
        if distortions.len() != zones {
            return Err(Error::DimensionMismatch(format!(
                "{} channels for {zones} zones",
                distortions.len()
            )));
        }
        for d in distortions {
            if d.max_count() != occupants {
                return Err(Error::DimensionMismatch(format!(
                    "channel covers counts 0..={}, model has {occupants} occupants",
                    d.max_count()
                )));
            }
        }
        for (k, row) in reported.iter().enumerate() {
            if row.len() != zones {
                return Err(Error::DimensionMismatch(format!(
                    "step {k} reports {} zones, model has {zones}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| v as usize > occupants) {
                return Err(Error::ImpossibleObservation { step: k });
            }
        }
        Ok(Self {
            log_init: model
                .initial
                .iter()
                .map(|p| p.iter().map(|&x| ln(x)).collect())
                .collect(),
            log_trans: model
                .chains
                .iter()
                .map(|c| {
                    c.rows()
                        .iter()
                        .map(|r| r.iter().map(|&x| ln(x)).collect())
                        .collect()
                })
                .collect(),
            log_emit: distortions
                .iter()
                .map(|d| {
                    d.rows()
                        .iter()
                        .map(|r| r.iter().map(|&x| ln(x)).collect())
                        .collect()
                })
                .collect(),
            states: model.zone_set.len(),
            occupants,
        })
    }

    fn emission(&self, locations: &[usize], reported: &[u32], counts: &mut [usize]) -> f64 {
        counts.iter_mut().for_each(|c| *c = 0);
        for &x in locations {
            if x > 0 {
                counts[x - 1] += 1;
            }
        }
        self.log_emit
            .iter()
            .zip(counts.iter())
            .zip(reported)
            .map(|((e, &y), &v)| e[y][v as usize])
            .sum()
    }
}

/// Log prior of `traces` plus the log likelihood of `reported` given them,
/// summed in a fixed order so equal traces always give equal values.
pub fn trace_log_posterior(
    traces: &[LocationTrace],
    reported: &[Vec<u32>],
    model: &FhmmModel,
    distortions: &[DistortionMatrix],
) -> Result<f64> {
    let t = Tables::new(reported, model, distortions)?;
    check_traces(traces, &t, reported.len())?;
    Ok(score_traces(traces, reported, &t))
}

fn check_traces(traces: &[LocationTrace], t: &Tables, steps: usize) -> Result<()> {
    if traces.len() != t.occupants {
        return Err(Error::DimensionMismatch(format!(
            "{} traces for {} occupants",
            traces.len(),
            t.occupants
        )));
    }
    for tr in traces {
        if tr.len() != steps {
            return Err(Error::LengthMismatch {
                expected: steps,
                found: tr.len(),
            });
        }
        if let Some(&z) = tr.steps.iter().find(|&&z| z >= t.states) {
            return Err(Error::ZoneOutOfRange {
                occupant: tr.occupant.clone(),
                zone: z,
                zones: t.states,
            });
        }
    }
    Ok(())
}

fn score_traces(traces: &[LocationTrace], reported: &[Vec<u32>], t: &Tables) -> f64 {
    let mut prior = 0.0;
    for (m, tr) in traces.iter().enumerate() {
        prior += t.log_init[m][tr.steps[0]];
        for w in tr.steps.windows(2) {
            prior += t.log_trans[m][w[0]][w[1]];
        }
    }
    let mut counts = vec![0; t.log_emit.len()];
    let mut locations = vec![0; traces.len()];
    let mut like = 0.0;
    for (k, rep) in reported.iter().enumerate() {
        for (l, tr) in locations.iter_mut().zip(traces) {
            *l = tr.steps[k];
        }
        like += t.emission(&locations, rep, &mut counts);
    }
    prior + like
}

struct Codec {
    base: u64,
    weights: Vec<u64>,
}

impl Codec {
    fn new(states: usize, occupants: usize) -> Result<Self> {
        let base = states as u64;
        let mut weights = vec![1u64; occupants];
        let mut size: u128 = 1;
        for m in (0..occupants).rev() {
            weights[m] = size as u64;
            size *= base as u128;
            if size > u64::MAX as u128 {
                return Err(Error::StateSpaceTooLarge {
                    size,
                    cap: u64::MAX as u128,
                });
            }
        }
        Ok(Self { base, weights })
    }

    fn digit(&self, key: u64, m: usize) -> usize {
        ((key / self.weights[m]) % self.base) as usize
    }

    fn with_digit(&self, key: u64, m: usize, x: usize) -> u64 {
        key - self.digit(key, m) as u64 * self.weights[m] + x as u64 * self.weights[m]
    }

    fn decode(&self, key: u64, out: &mut [usize]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = self.digit(key, m);
        }
    }
}

#[derive(Clone, Copy)]
struct Entry {
    key: u64,
    score: f64,
    /// Previous location of the occupant updated in this sub-step.
    back: u32,
}

/// Keeps, per key, the best entry (ties: smaller back-pointer), then the
/// best `width` keys (ties: smaller key). Output is sorted by key.
fn reduce(mut cands: Vec<Entry>, width: usize) -> Vec<Entry> {
    cands.retain(|e| e.score > f64::NEG_INFINITY);
    cands.sort_unstable_by(|a, b| {
        a.key
            .cmp(&b.key)
            .then(b.score.total_cmp(&a.score))
            .then(a.back.cmp(&b.back))
    });
    cands.dedup_by_key(|e| e.key);
    if cands.len() > width {
        cands.sort_unstable_by(|a, b| b.score.total_cmp(&a.score).then(a.key.cmp(&b.key)));
        cands.truncate(width);
        cands.sort_unstable_by_key(|e| e.key);
    }
    cands
}

/// Beam-limited joint Viterbi. `reported` is indexed `[step][zone − 1]`;
/// `distortions` holds one channel per interior zone.
pub fn map_infer_beam(
    reported: &[Vec<u32>],
    model: &FhmmModel,
    distortions: &[DistortionMatrix],
    cfg: &AttackConfig,
) -> Result<InferenceResult> {
    if cfg.beam_width == 0 {
        return Err(Error::invalid("beam_width must be at least 1"));
    }
    let t = Tables::new(reported, model, distortions)?;
    let codec = Codec::new(t.states, t.occupants)?;
    let width = cfg.beam_width;
    let mm = t.occupants;
    let mut locations = vec![0; mm];
    let mut counts = vec![0; t.log_emit.len()];

    // Step 0: build the joint initial state digit by digit.
    let mut beam = vec![Entry {
        key: 0,
        score: 0.0,
        back: 0,
    }];
    for m in 0..mm {
        let mut cands = Vec::with_capacity(beam.len() * t.states);
        for e in &beam {
            for x in 0..t.states {
                cands.push(Entry {
                    key: e.key + x as u64 * codec.weights[m],
                    score: e.score + t.log_init[m][x],
                    back: 0,
                });
            }
        }
        beam = reduce(cands, width);
    }
    let emit = |beam: Vec<Entry>, k: usize, locations: &mut Vec<usize>, counts: &mut Vec<usize>| {
        let cands = beam
            .into_iter()
            .map(|mut e| {
                codec.decode(e.key, locations);
                e.score += t.emission(locations, &reported[k], counts);
                e
            })
            .collect();
        reduce(cands, width)
    };
    beam = emit(beam, 0, &mut locations, &mut counts);
    if beam.is_empty() {
        return Err(Error::ImpossibleObservation { step: 0 });
    }

    // history[k - 1][m]: (key, back) after updating occupant m at step k.
    let mut history: Vec<Vec<Vec<(u64, u32)>>> =
        Vec::with_capacity(reported.len().saturating_sub(1));
    for k in 1..reported.len() {
        let mut subs = Vec::with_capacity(mm);
        for m in 0..mm {
            let mut cands = Vec::with_capacity(beam.len() * t.states);
            for e in &beam {
                let from = codec.digit(e.key, m);
                for to in 0..t.states {
                    cands.push(Entry {
                        key: codec.with_digit(e.key, m, to),
                        score: e.score + t.log_trans[m][from][to],
                        back: from as u32,
                    });
                }
            }
            beam = reduce(cands, width);
            subs.push(beam.iter().map(|e| (e.key, e.back)).collect());
        }
        history.push(subs);
        beam = emit(beam, k, &mut locations, &mut counts);
        if beam.is_empty() {
            return Err(Error::ImpossibleObservation { step: k });
        }
    }

    let best = beam
        .iter()
        .fold(None::<&Entry>, |b, e| match b {
            Some(b) if b.score > e.score || (b.score == e.score && b.key < e.key) => Some(b),
            _ => Some(e),
        })
        .expect("nonempty beam");
    let steps = reported.len();
    let mut paths = vec![vec![0usize; steps]; mm];
    let mut key = best.key;
    for k in (0..steps).rev() {
        codec.decode(key, &mut locations);
        for m in 0..mm {
            paths[m][k] = locations[m];
        }
        if k == 0 {
            break;
        }
        for m in (0..mm).rev() {
            let subs = &history[k - 1][m];
            let i = subs
                .binary_search_by_key(&key, |&(k, _)| k)
                .expect("back-pointer chain is complete");
            key = codec.with_digit(key, m, subs[i].1 as usize);
        }
    }
    let traces: Vec<LocationTrace> = paths
        .into_iter()
        .zip(&model.occupants)
        .map(|(p, name)| LocationTrace::new(name.clone(), p))
        .collect();
    let log_posterior = score_traces(&traces, reported, &t);
    Ok(InferenceResult {
        traces,
        log_posterior,
    })
}

/// Exhaustive MAP over all joint trajectories; ties go to the trajectory
/// that is lexicographically smallest in step-major order.
pub fn map_infer_bruteforce(
    reported: &[Vec<u32>],
    model: &FhmmModel,
    distortions: &[DistortionMatrix],
    cap: u128,
) -> Result<InferenceResult> {
    let t = Tables::new(reported, model, distortions)?;
    let steps = reported.len();
    let digits = steps * t.occupants;
    let size = (t.states as u128)
        .checked_pow(digits as u32)
        .unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::StateSpaceTooLarge { size, cap });
    }
    let mut odometer = vec![0usize; digits];
    let mut traces: Vec<LocationTrace> = model
        .occupants
        .iter()
        .map(|n| LocationTrace::new(n.clone(), vec![0; steps]))
        .collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        for (i, &x) in odometer.iter().enumerate() {
            traces[i % t.occupants].steps[i / t.occupants] = x;
        }
        let s = score_traces(&traces, reported, &t);
        if s > f64::NEG_INFINITY && best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, odometer.clone()));
        }
        // Advance in lexicographic order (last digit fastest).
        let mut i = digits;
        loop {
            if i == 0 {
                let (score, digits_best) = best.ok_or(Error::ImpossibleObservation { step: 0 })?;
                for (i, &x) in digits_best.iter().enumerate() {
                    traces[i % t.occupants].steps[i / t.occupants] = x;
                }
                return Ok(InferenceResult {
                    traces,
                    log_posterior: score,
                });
            }
            i -= 1;
            odometer[i] += 1;
            if odometer[i] < t.states {
                break;
            }
            odometer[i] = 0;
        }
    }
}

/// Fraction of (occupant, step) cells where the prediction is right.
pub fn inference_accuracy(predicted: &[LocationTrace], truth: &[LocationTrace]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} predicted traces, {} true traces",
            predicted.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        if p.len() != t.len() {
            return Err(Error::LengthMismatch {
                expected: t.len(),
                found: p.len(),
            });
        }
        hits += p.steps.iter().zip(&t.steps).filter(|(a, b)| a == b).count();
        total += t.len();
    }
    if total == 0 {
        return Err(Error::invalid("traces are empty"));
    }
    Ok(hits as f64 / total as f64)
}

/// The trivial attacker that always guesses "outside".
pub fn constant_outside_attack(model: &FhmmModel, steps: usize) -> Vec<LocationTrace> {
    model
        .occupants
        .iter()
        .map(|n| LocationTrace::new(n.clone(), vec![0; steps]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::uniform_scheme;
    use crate::occupancy::{TransitionMatrix, ZoneSet};
    use crate::rng::stream;
    use rand::Rng as _;

    fn model(chains: Vec<Vec<Vec<f64>>>, zones: usize) -> FhmmModel {
        let names = (0..chains.len()).map(|m| format!("p{m}")).collect();
        let chains = chains
            .into_iter()
            .map(|c| TransitionMatrix::new(c).unwrap())
            .collect();
        FhmmModel::stationary(ZoneSet::with_interior(zones), names, chains).unwrap()
    }

    fn random_model(m: usize, zones: usize, seed: u64) -> FhmmModel {
        let mut rng = stream(seed, "test-model", &[]);
        let s = zones + 1;
        let chains = (0..m)
            .map(|_| {
                (0..s)
                    .map(|_| {
                        let r: Vec<f64> = (0..s).map(|_| rng.gen_range(0.05..1.0)).collect();
                        let t: f64 = r.iter().sum();
                        r.iter().map(|x| x / t).collect()
                    })
                    .collect()
            })
            .collect();
        model(chains, zones)
    }

    fn random_channel(mc: usize, rng: &mut crate::rng::Rng) -> DistortionMatrix {
        let rows = (0..=mc)
            .map(|_| {
                let r: Vec<f64> = (0..=mc).map(|_| rng.gen_range(0.01..1.0)).collect();
                let t: f64 = r.iter().sum();
                let mut r: Vec<f64> = r.iter().map(|x| x / t).collect();
                let s: f64 = r[1..].iter().sum();
                r[0] = 1.0 - s;
                r
            })
            .collect();
        DistortionMatrix::new(rows).unwrap()
    }

    #[test]
    fn identity_single_occupant_reads_location_off_counts() {
        let m = model(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]], 1);
        let reported = vec![vec![1], vec![1], vec![0]];
        let ident = [DistortionMatrix::identity(1)];
        let r = map_infer_beam(&reported, &m, &ident, &AttackConfig::default()).unwrap();
        assert_eq!(r.traces[0].steps, vec![1, 1, 0]);
        let b = map_infer_bruteforce(&reported, &m, &ident, 1 << 20).unwrap();
        assert_eq!(b.traces[0].steps, vec![1, 1, 0]);
    }

    #[test]
    fn uninformative_channel_returns_prior_path() {
        // Sticky chain with stationary law favouring zone 2.
        let a = vec![
            vec![0.6, 0.1, 0.3],
            vec![0.1, 0.6, 0.3],
            vec![0.05, 0.05, 0.9],
        ];
        let m = model(vec![a], 2);
        let reported = vec![vec![0, 0]; 4];
        let u = [uniform_scheme(1), uniform_scheme(1)];
        let r = map_infer_beam(&reported, &m, &u, &AttackConfig::default()).unwrap();
        assert_eq!(r.traces[0].steps, vec![2, 2, 2, 2]);
    }

    #[test]
    fn beam_matches_bruteforce_on_small_worlds() {
        let mut rng = stream(11, "test-beam", &[]);
        for case in 0..20 {
            let occupants = 1 + case % 2;
            let zones = 1 + (case / 2) % 2;
            let steps = 2 + case % 3;
            let m = random_model(occupants, zones, case as u64);
            let channels: Vec<_> = (0..zones)
                .map(|_| random_channel(occupants, &mut rng))
                .collect();
            let reported: Vec<Vec<u32>> = (0..steps)
                .map(|_| {
                    (0..zones)
                        .map(|_| rng.gen_range(0..=occupants as u32))
                        .collect()
                })
                .collect();
            let full = AttackConfig {
                beam_width: 1 << 12,
                ..Default::default()
            };
            let beam = map_infer_beam(&reported, &m, &channels, &full).unwrap();
            let brute = map_infer_bruteforce(&reported, &m, &channels, 1 << 20).unwrap();
            assert!((beam.log_posterior - brute.log_posterior).abs() < 1e-10);
            let again = trace_log_posterior(&beam.traces, &reported, &m, &channels).unwrap();
            assert_eq!(again, beam.log_posterior);
        }
    }

    #[test]
    fn impossible_reports_are_rejected() {
        let m = model(vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]], 1);
        let ident = [DistortionMatrix::identity(1)];
        let err = map_infer_beam(&[vec![2]], &m, &ident, &AttackConfig::default());
        assert!(matches!(err, Err(Error::ImpossibleObservation { step: 0 })));
        // A chain that cannot leave zone 1 contradicts a later report of 0.
        let stuck = model(vec![vec![vec![0.5, 0.5], vec![0.0, 1.0]]], 1);
        let err = map_infer_beam(
            &[vec![1], vec![0]],
            &stuck,
            &ident,
            &AttackConfig::default(),
        );
        assert!(matches!(err, Err(Error::ImpossibleObservation { step: 1 })));
        let err = map_infer_bruteforce(&[vec![1], vec![0]], &stuck, &ident, 1 << 10);
        assert!(matches!(err, Err(Error::ImpossibleObservation { .. })));
    }

    #[test]
    fn bruteforce_cap_is_enforced() {
        let m = random_model(2, 2, 1);
        let ident = [DistortionMatrix::identity(2), DistortionMatrix::identity(2)];
        let reported = vec![vec![0, 0]; 8];
        assert!(matches!(
            map_infer_bruteforce(&reported, &m, &ident, 1000),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn accuracy_counts_cells() {
        let t = vec![
            LocationTrace::new("a", vec![0, 1, 1, 0, 2]),
            LocationTrace::new("b", vec![1; 5]),
        ];
        assert_eq!(inference_accuracy(&t, &t).unwrap(), 1.0);
        let mut p = t.clone();
        p[1].steps[3] = 0;
        assert!((inference_accuracy(&p, &t).unwrap() - 0.9).abs() < 1e-15);
        let wrong = vec![
            LocationTrace::new("a", vec![3; 5]),
            LocationTrace::new("b", vec![3; 5]),
        ];
        assert_eq!(inference_accuracy(&wrong, &t).unwrap(), 0.0);
        assert!(inference_accuracy(&t[..1], &t).is_err());
    }
}
