//! Experiment configuration, dataset ingestion, CSV formats and SVG plots.
//!
//! CSV layouts:
//!
//! | file | header |
//! |------|--------|
//! | traces | `step,occupant,zone` |
//! | occupancy | `step,zone_0,…,zone_N` (`zone_0` counts outside) |
//! | distortion | `y,p_0,…,p_M` |
//! | constraint tables | `y,v,t1,t2,cost_diff,temp_diff` |
//! | closed-loop log | `iter,step,T,y,v,m_dot,T_s,energy_cost,violation` |
//!
//! Floats are written in Rust's shortest round-trip form, so anything
//! written and read back is bit-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::tables::tables_key;
use crate::distortion::{
    build_constraint_tables, ConstraintTables, DesignConfig, DistortionMatrix, WorkingHours,
};
use crate::error::{Error, Result};
use crate::harness::{Baseline, Experiment, SchemeComparison, TradeoffRecord};
use crate::occupancy::{
    learn_transitions, stationary_distribution, FhmmModel, LocationTrace, OccupancySeries, ZoneSet,
    DEFAULT_STATIONARY_TOL, OUTSIDE,
};
use crate::thermal::{
    ClosedLoopLog, ComfortBand, HvacParams, MpcConfig, MpcProblem, Tariff, ZoneThermalParams,
};

/// Building and HVAC parameters under their usual symbols.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Zone thermal capacity (kJ/K).
    #[serde(rename = "C")]
    pub capacity: f64,
    /// Self heat-transfer coefficient (kW/K).
    #[serde(rename = "R")]
    pub r: f64,
    /// Coefficients on the other zones' temperatures (kW/K); empty = decoupled.
    #[serde(rename = "R_neighbors")]
    pub r_neighbors: Vec<f64>,
    pub c_o: f64,
    pub c_p: f64,
    pub eta_h: f64,
    pub eta_c: f64,
    pub beta: f64,
    #[serde(rename = "T_a")]
    pub t_a: f64,
    #[serde(rename = "T_h_max")]
    pub t_h_max: f64,
    pub m_min: f64,
    pub m_max: f64,
    #[serde(rename = "T_low")]
    pub t_low: f64,
    #[serde(rename = "T_high")]
    pub t_high: f64,
    pub r_e: f64,
    pub r_h: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_e_series: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_h_series: Option<Vec<f64>>,
    #[serde(rename = "T_out")]
    pub t_out: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        let p = MpcProblem::default();
        Self {
            capacity: p.zone.capacity,
            r: p.zone.r_self,
            r_neighbors: p.zone.r_neighbors,
            c_o: p.zone.c_o,
            c_p: p.zone.c_p,
            eta_h: p.hvac.eta_h,
            eta_c: p.hvac.eta_c,
            beta: p.hvac.beta,
            t_a: p.hvac.t_a,
            t_h_max: p.hvac.t_h_max,
            m_min: p.hvac.m_min,
            m_max: p.hvac.m_max,
            t_low: p.comfort.t_low,
            t_high: p.comfort.t_high,
            r_e: p.tariff.r_e,
            r_h: p.tariff.r_h,
            r_e_series: None,
            r_h_series: None,
            t_out: p.hvac.t_out,
        }
    }
}

impl PlantParams {
    pub fn problem(&self) -> MpcProblem {
        MpcProblem {
            zone: ZoneThermalParams {
                capacity: self.capacity,
                r_self: self.r,
                r_neighbors: self.r_neighbors.clone(),
                c_o: self.c_o,
                c_p: self.c_p,
            },
            hvac: HvacParams {
                eta_h: self.eta_h,
                eta_c: self.eta_c,
                beta: self.beta,
                t_a: self.t_a,
                t_h_max: self.t_h_max,
                m_min: self.m_min,
                m_max: self.m_max,
                t_out: self.t_out,
            },
            comfort: ComfortBand {
                t_low: self.t_low,
                t_high: self.t_high,
            },
            tariff: Tariff {
                r_e: self.r_e,
                r_h: self.r_h,
                r_e_series: self.r_e_series.clone(),
                r_h_series: self.r_h_series.clone(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("C", self.capacity),
            ("c_p", self.c_p),
            ("eta_h", self.eta_h),
            ("eta_c", self.eta_c),
            ("beta", self.beta),
            ("m_min", self.m_min),
            ("m_max", self.m_max),
            ("r_e", self.r_e),
            ("r_h", self.r_h),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let nonneg = [("R", self.r), ("c_o", self.c_o)];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        self.problem().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldSource {
    /// Office world from [`crate::harness::office_world`]; `seed`
    /// defaults to the master seed.
    Synthetic {
        occupants: usize,
        zones: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Transition matrices learned from the training split of a dataset.
    Dataset {
        manifest: PathBuf,
        #[serde(default = "default_smoothing")]
        smoothing: f64,
    },
    /// A model file written by `learn` or `synth`.
    Model { path: PathBuf },
}

fn default_smoothing() -> f64 {
    0.1
}

impl Default for WorldSource {
    fn default() -> Self {
        WorldSource::Synthetic {
            occupants: 4,
            zones: 3,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Explicit ascending Δ values; when absent, `count` log-spaced values
    /// across the automatic bracket.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    pub count: usize,
    pub runs: usize,
    pub eval_steps: usize,
    pub t_init: f64,
    pub beam_width: usize,
    pub multinomial_acc: Vec<f64>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let e = Experiment::default();
        Self {
            deltas: None,
            count: 8,
            runs: e.runs,
            eval_steps: e.eval_steps,
            t_init: e.t_init,
            beam_width: e.beam_width,
            multinomial_acc: vec![0.6, 0.7, 0.8, 0.9],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: WorldSource,
    pub params: PlantParams,
    pub mpc: MpcConfig,
    pub design: DesignConfig,
    pub sweep: SweepSpec,
    pub calendar: WorkingHours,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            world: WorldSource::default(),
            params: PlantParams::default(),
            mpc: MpcConfig::default(),
            design: DesignConfig::default(),
            sweep: SweepSpec::default(),
            calendar: WorkingHours::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.mpc.validate()?;
        self.design.validate()?;
        if self.sweep.count == 0 {
            return Err(Error::invalid("sweep.count must be at least 1"));
        }
        if let Some(d) = &self.sweep.deltas {
            if d.is_empty()
                || d.windows(2).any(|w| !(w[0] < w[1]))
                || d.iter().any(|x| !(*x >= 0.0))
            {
                return Err(Error::invalid(
                    "sweep.deltas must be nonempty, nonnegative and ascending",
                ));
            }
        }
        if self
            .sweep
            .multinomial_acc
            .iter()
            .any(|a| !(0.0..=1.0).contains(a))
        {
            return Err(Error::invalid("multinomial accuracies must lie in [0, 1]"));
        }
        match &self.world {
            WorldSource::Synthetic {
                occupants, zones, ..
            } if *occupants == 0 || *zones == 0 => {
                return Err(Error::invalid(
                    "synthetic world needs occupants ≥ 1 and zones ≥ 1",
                ))
            }
            WorldSource::Dataset {
                manifest: p,
                smoothing,
            } => {
                if !(*smoothing >= 0.0) {
                    return Err(Error::invalid("smoothing must be nonnegative"));
                }
                require_file(p)?;
            }
            WorldSource::Model { path } => require_file(path)?,
            _ => {}
        }
        self.experiment().validate()
    }

    /// Harness settings with the plant parameters turned into a problem.
    pub fn experiment(&self) -> Experiment {
        Experiment {
            problem: self.params.problem(),
            mpc: self.mpc.clone(),
            design: self.design.clone(),
            beam_width: self.sweep.beam_width,
            eval_steps: self.sweep.eval_steps,
            runs: self.sweep.runs,
            t_init: self.sweep.t_init,
            calendar: self.calendar.clone(),
        }
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.world {
            WorldSource::Dataset { manifest, .. } => fix(manifest),
            WorldSource::Model { path } => fix(path),
            WorldSource::Synthetic { .. } => {}
        }
        fix(&mut self.output_dir);
    }
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "referenced file {} does not exist",
            p.display()
        )))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })
}

/// Reads and validates a configuration; an empty file gives all defaults.
/// Relative paths are taken relative to the configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = read_text(path)?;
    let mut cfg: ExperimentConfig = if text.trim().is_empty() {
        ExperimentConfig::default()
    } else {
        parse_json(path, &text)?
    };
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    cfg.validate()?;
    Ok(cfg)
}

/// The world a configuration describes.
pub fn load_world(cfg: &ExperimentConfig) -> Result<FhmmModel> {
    match &cfg.world {
        WorldSource::Synthetic {
            occupants,
            zones,
            seed,
        } => crate::harness::office_world(*occupants, *zones, seed.unwrap_or(cfg.seed)),
        WorldSource::Dataset {
            manifest,
            smoothing,
        } => {
            let m = load_manifest(manifest)?;
            let (train, _, zone_set) = ingest_traces(&m)?;
            learn_model(&train, zone_set, *smoothing)
        }
        WorldSource::Model { path } => read_model(path),
    }
}

/// Learned chains, each started from its stationary law, or from the
/// trace's empirical zone frequencies when the chain has none.
pub fn learn_model(
    traces: &[LocationTrace],
    zone_set: ZoneSet,
    smoothing: f64,
) -> Result<FhmmModel> {
    let chains = learn_transitions(traces, &zone_set, smoothing)?;
    let names = traces.iter().map(|t| t.occupant.clone()).collect();
    let initial = chains
        .iter()
        .zip(traces)
        .map(
            |(c, t)| match stationary_distribution(c, DEFAULT_STATIONARY_TOL) {
                Ok(pi) => pi,
                Err(_) => {
                    let mut freq = vec![0.0; zone_set.len()];
                    for &z in &t.steps {
                        freq[z] += 1.0 / t.len() as f64;
                    }
                    freq
                }
            },
        )
        .collect();
    FhmmModel::new(zone_set, names, chains, initial)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    /// Canonical trace files, concatenated.
    pub traces: Vec<PathBuf>,
    /// Seconds between consecutive input steps.
    #[serde(default = "one")]
    pub sample_period_s: f64,
    /// Seconds between retained steps.
    #[serde(default = "sixty")]
    pub period_s: f64,
    /// Retained steps `[0, train_steps)` form the training split.
    pub train_steps: usize,
    /// Length of the evaluation split after training; the rest of the data
    /// when absent.
    #[serde(default)]
    pub eval_steps: Option<usize>,
    pub roster: Vec<String>,
    /// Zone identifiers, outside first; inferred from the data when absent.
    #[serde(default)]
    pub zones: Option<Vec<String>>,
}

fn one() -> f64 {
    1.0
}

fn sixty() -> f64 {
    60.0
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let mut m: DatasetManifest = parse_json(path, &read_text(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    for p in &mut m.traces {
        if p.is_relative() {
            *p = base.join(&*p);
        }
        require_file(p)?;
    }
    Ok(m)
}

#[derive(Debug, Deserialize)]
struct RawRow {
    step: u64,
    occupant: String,
    zone: String,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        location: format!("{}:{line}", path.display()),
        message: e.to_string(),
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        location: format!("{}:{line}", path.display()),
        message: message.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let h = rdr.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = h.iter().collect();
    if got != expected {
        return Err(parse_error(
            path,
            1,
            format!(
                "expected header {}, found {}",
                expected.join(","),
                got.join(",")
            ),
        ));
    }
    Ok(())
}

/// `(line, step, occupant, zone)` rows of a canonical trace file.
fn read_raw(path: &Path) -> Result<Vec<(u64, u64, String, String)>> {
    let mut rdr = csv_reader(path)?;
    check_header(path, &mut rdr, &["step", "occupant", "zone"])?;
    let mut out = Vec::new();
    for rec in rdr.deserialize::<RawRow>() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        out.push((0, rec.step, rec.occupant, rec.zone));
    }
    // line numbers: header is line 1
    for (i, r) in out.iter_mut().enumerate() {
        r.0 = i as u64 + 2;
    }
    Ok(out)
}

fn infer_zones(explicit: Option<&[String]>, seen: &BTreeSet<String>) -> Result<ZoneSet> {
    match explicit {
        Some(z) => ZoneSet::new(z.to_vec()),
        None => {
            let mut zones = vec![OUTSIDE.to_string()];
            zones.extend(seen.iter().filter(|z| z.as_str() != OUTSIDE).cloned());
            ZoneSet::new(zones)
        }
    }
}

/// Reads the dataset, keeps the sample at each `period_s` boundary and
/// splits it into training and evaluation traces.
pub fn ingest_traces(
    manifest: &DatasetManifest,
) -> Result<(Vec<LocationTrace>, Vec<LocationTrace>, ZoneSet)> {
    if !(manifest.sample_period_s > 0.0) || !(manifest.period_s > 0.0) {
        return Err(Error::invalid("sampling periods must be positive"));
    }
    let ratio = manifest.period_s / manifest.sample_period_s;
    if (ratio - ratio.round()).abs() > 1e-9 || ratio < 1.0 {
        return Err(Error::invalid(
            "period_s must be a whole multiple of sample_period_s",
        ));
    }
    let stride = ratio.round() as u64;
    if manifest.roster.is_empty() {
        return Err(Error::invalid("the roster is empty"));
    }

    let mut per: BTreeMap<&str, Vec<(u64, String)>> = BTreeMap::new();
    for r in &manifest.roster {
        per.insert(r.as_str(), Vec::new());
    }
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for path in &manifest.traces {
        for (line, step, occ, zone) in read_raw(path)? {
            rows.push((path.clone(), line, step, occ, zone));
        }
    }
    for (path, line, step, occ, zone) in &rows {
        let Some(list) = per.get_mut(occ.as_str()) else {
            return Err(parse_error(
                path,
                *line,
                format!("occupant {occ:?} is not in the roster"),
            ));
        };
        if let Some(&(prev, _)) = list.last() {
            if *step <= prev {
                return Err(parse_error(
                    path,
                    *line,
                    format!("steps of {occ:?} are not increasing ({step} after {prev})"),
                ));
            }
        }
        list.push((*step, zone.clone()));
        seen.insert(zone.clone());
    }
    let zone_set = infer_zones(manifest.zones.as_deref(), &seen)?;
    for (path, line, _, _, zone) in &rows {
        if zone_set.index_of(zone).is_none() {
            return Err(parse_error(path, *line, format!("unknown zone {zone:?}")));
        }
    }

    let first = per.values().filter_map(|l| l.first().map(|r| r.0)).max();
    let last = per.values().filter_map(|l| l.last().map(|r| r.0)).min();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(Error::invalid("some roster occupant has no rows"));
    };
    let start = first.div_ceil(stride) * stride;
    if start > last {
        return Err(Error::invalid("the occupants' recordings do not overlap"));
    }
    let boundaries: Vec<u64> = (start..=last).step_by(stride as usize).collect();

    let mut full = Vec::with_capacity(manifest.roster.len());
    for name in &manifest.roster {
        let list = &per[name.as_str()];
        let mut j = 0;
        let mut steps = Vec::with_capacity(boundaries.len());
        for &b in &boundaries {
            while j + 1 < list.len() && list[j + 1].0 <= b {
                j += 1;
            }
            let z = zone_set.index_of(&list[j].1).expect("zones checked above");
            steps.push(z);
        }
        full.push(LocationTrace::new(name.clone(), steps));
    }

    let total = boundaries.len();
    let train = manifest.train_steps;
    let eval_end = match manifest.eval_steps {
        Some(e) => train + e,
        None => total,
    };
    if train == 0 || train > total || eval_end > total || eval_end < train {
        return Err(Error::invalid(format!(
            "split [0, {train}) + [{train}, {eval_end}) does not fit {total} retained steps"
        )));
    }
    let cut = |lo: usize, hi: usize| -> Vec<LocationTrace> {
        full.iter()
            .map(|t| LocationTrace::new(t.occupant.clone(), t.steps[lo..hi].to_vec()))
            .collect()
    };
    Ok((cut(0, train), cut(train, eval_end), zone_set))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(f))
}

fn write_rows(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut w = csv_writer(path)?;
    let map = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(map)?;
    for r in rows {
        w.write_record(&r).map_err(map)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn f(v: f64) -> String {
    format!("{v}")
}

/// Writes traces step by step, occupants in order within each step.
pub fn write_traces(path: &Path, traces: &[LocationTrace], zone_set: &ZoneSet) -> Result<()> {
    let k = traces.first().map_or(0, |t| t.len());
    if traces.iter().any(|t| t.len() != k) {
        return Err(Error::invalid("traces must have equal length"));
    }
    let ids = zone_set.ids();
    let mut rows = Vec::with_capacity(k * traces.len());
    for step in 0..k {
        for t in traces {
            let z = t.steps[step];
            let id = ids.get(z).ok_or_else(|| Error::ZoneOutOfRange {
                occupant: t.occupant.clone(),
                zone: z,
                zones: ids.len(),
            })?;
            rows.push(vec![step.to_string(), t.occupant.clone(), id.clone()]);
        }
    }
    write_rows(path, &header(&["step", "occupant", "zone"]), rows)
}

/// Reads a canonical trace file whose steps run `0, 1, …` for every
/// occupant. Occupants keep their order of first appearance.
pub fn read_traces(path: &Path, zones: Option<&ZoneSet>) -> Result<(Vec<LocationTrace>, ZoneSet)> {
    let raw = read_raw(path)?;
    let seen: BTreeSet<String> = raw.iter().map(|r| r.3.clone()).collect();
    let zone_set = match zones {
        Some(z) => z.clone(),
        None => infer_zones(None, &seen)?,
    };
    let mut order: Vec<String> = Vec::new();
    let mut steps: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (line, step, occ, zone) in &raw {
        let z = zone_set
            .index_of(zone)
            .ok_or_else(|| parse_error(path, *line, format!("unknown zone {zone:?}")))?;
        let list = steps.entry(occ.clone()).or_insert_with(|| {
            order.push(occ.clone());
            Vec::new()
        });
        if *step != list.len() as u64 {
            return Err(parse_error(
                path,
                *line,
                format!("expected step {} for {occ:?}, found {step}", list.len()),
            ));
        }
        list.push(z);
    }
    if order.is_empty() {
        return Err(Error::EmptyTraces);
    }
    let traces = order
        .into_iter()
        .map(|o| {
            let s = steps.remove(&o).expect("recorded");
            LocationTrace::new(o, s)
        })
        .collect::<Vec<_>>();
    let k = traces[0].len();
    if let Some(t) = traces.iter().find(|t| t.len() != k) {
        return Err(Error::LengthMismatch {
            expected: k,
            found: t.len(),
        });
    }
    Ok((traces, zone_set))
}

pub fn write_occupancy(path: &Path, series: &OccupancySeries) -> Result<()> {
    let n = series.zones();
    let mut cols = vec!["step".to_string()];
    cols.extend((0..=n).map(|i| format!("zone_{i}")));
    let rows = series.counts.iter().enumerate().map(|(k, row)| {
        let inside: u32 = row.iter().sum();
        let mut r = vec![
            k.to_string(),
            (series.occupants as u32).saturating_sub(inside).to_string(),
        ];
        r.extend(row.iter().map(|c| c.to_string()));
        r
    });
    write_rows(path, &cols, rows)
}

pub fn read_occupancy(path: &Path) -> Result<OccupancySeries> {
    let mut rdr = csv_reader(path)?;
    let h = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let n =
        h.len().checked_sub(2).filter(|&n| n >= 1).ok_or_else(|| {
            parse_error(path, 1, "need step, zone_0 and at least one interior zone")
        })?;
    let mut expected = vec!["step".to_string()];
    expected.extend((0..=n).map(|i| format!("zone_{i}")));
    if h.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_error(
            path,
            1,
            format!("expected header {}", expected.join(",")),
        ));
    }
    let mut counts = Vec::new();
    let mut occupants = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let vals: Vec<u64> = rec
            .iter()
            .map(|s| {
                s.parse::<u64>()
                    .map_err(|e| parse_error(path, line, format!("{s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals[0] != i as u64 {
            return Err(parse_error(
                path,
                line,
                format!("expected step {i}, found {}", vals[0]),
            ));
        }
        let total: u64 = vals[1..].iter().sum();
        match occupants {
            None => occupants = Some(total),
            Some(m) if m != total => {
                return Err(parse_error(
                    path,
                    line,
                    format!("row counts {total} occupants, earlier rows {m}"),
                ))
            }
            _ => {}
        }
        counts.push(vals[2..].iter().map(|&c| c as u32).collect());
    }
    if counts.is_empty() {
        return Err(parse_error(path, 2, "no rows"));
    }
    Ok(OccupancySeries {
        occupants: occupants.unwrap_or(0) as usize,
        counts,
    })
}

pub fn write_distortion(path: &Path, m: &DistortionMatrix) -> Result<()> {
    let n = m.max_count() + 1;
    let mut cols = vec!["y".to_string()];
    cols.extend((0..n).map(|v| format!("p_{v}")));
    let rows = m.rows().iter().enumerate().map(|(y, r)| {
        let mut out = vec![y.to_string()];
        out.extend(r.iter().map(|&p| f(p)));
        out
    });
    write_rows(path, &cols, rows)
}

pub fn read_distortion(path: &Path) -> Result<DistortionMatrix> {
    let mut rdr = csv_reader(path)?;
    let h = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let n = h.len().saturating_sub(1);
    let mut expected = vec!["y".to_string()];
    expected.extend((0..n).map(|v| format!("p_{v}")));
    if n < 2 || h.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_error(path, 1, "expected header y,p_0,…,p_M"));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.get(0) != Some(i.to_string().as_str()) {
            return Err(parse_error(path, line, format!("expected row y = {i}")));
        }
        let row = rec
            .iter()
            .skip(1)
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| parse_error(path, line, format!("{s:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    DistortionMatrix::new(rows)
}

pub fn write_tables(path: &Path, t: &ConstraintTables) -> Result<()> {
    let n = t.max_count() + 1;
    let mut rows = Vec::with_capacity(t.len());
    for y in 0..n {
        for v in 0..n {
            for (p, &(t1, t2)) in t.pairs().iter().enumerate() {
                rows.push(vec![
                    y.to_string(),
                    v.to_string(),
                    f(t1),
                    f(t2),
                    f(t.cost(y, v, p)),
                    f(t.temp(y, v, p)),
                ]);
            }
        }
    }
    write_rows(
        path,
        &header(&["y", "v", "t1", "t2", "cost_diff", "temp_diff"]),
        rows,
    )
}

pub fn read_tables(path: &Path) -> Result<ConstraintTables> {
    let mut rdr = csv_reader(path)?;
    check_header(
        path,
        &mut rdr,
        &["y", "v", "t1", "t2", "cost_diff", "temp_diff"],
    )?;
    let mut entries = Vec::new();
    for (i, rec) in rdr
        .deserialize::<(usize, usize, f64, f64, f64, f64)>()
        .enumerate()
    {
        entries.push((i as u64 + 2, rec.map_err(|e| csv_error(path, e))?));
    }
    let Some(&(_, last)) = entries.last() else {
        return Err(parse_error(path, 2, "no rows"));
    };
    let m = last.0;
    let n = m + 1;
    if entries.len() % (n * n) != 0 {
        return Err(parse_error(path, 2, "row count is not (M+1)²·pairs"));
    }
    let np = entries.len() / (n * n);
    let pairs: Vec<(f64, f64)> = entries[..np].iter().map(|(_, e)| (e.2, e.3)).collect();
    let mut cost = Vec::with_capacity(entries.len());
    let mut temp = Vec::with_capacity(entries.len());
    for (i, (line, e)) in entries.iter().enumerate() {
        let (y, v, p) = (i / (n * np), (i / np) % n, i % np);
        if e.0 != y || e.1 != v || (e.2, e.3) != pairs[p] {
            return Err(parse_error(
                path,
                *line,
                format!("expected entry y={y}, v={v}, pair {p}"),
            ));
        }
        cost.push(e.4);
        temp.push(e.5);
    }
    ConstraintTables::new(m, pairs, cost, temp)
}

/// Loads the tables for these inputs from `dir`, building and saving them
/// on a miss. Files are named by [`tables_key`].
pub fn cached_tables(
    dir: &Path,
    problem: &MpcProblem,
    design: &DesignConfig,
    mpc: &MpcConfig,
    max_count: usize,
) -> Result<ConstraintTables> {
    let path = dir.join(format!(
        "tables_{}.csv",
        tables_key(problem, design, mpc, max_count)
    ));
    if path.is_file() {
        return read_tables(&path);
    }
    let t = build_constraint_tables(problem, design, mpc, max_count)?;
    write_tables(&path, &t)?;
    Ok(t)
}

/// One `closed_loop_zone{n}.csv` per zone in `dir`; returns the paths.
pub fn write_closed_loop(dir: &Path, log: &ClosedLoopLog) -> Result<Vec<PathBuf>> {
    let cols = header(&[
        "iter",
        "step",
        "T",
        "y",
        "v",
        "m_dot",
        "T_s",
        "energy_cost",
        "violation",
    ]);
    let mut paths = Vec::new();
    for z in &log.zones {
        let path = dir.join(format!("closed_loop_zone{}.csv", z.zone));
        let rows = z.steps.iter().map(|s| {
            vec![
                s.iter.to_string(),
                s.step.to_string(),
                f(s.t),
                s.y.to_string(),
                s.v.to_string(),
                f(s.m_dot),
                f(s.t_s),
                f(s.energy_cost),
                f(s.violation),
            ]
        });
        write_rows(&path, &cols, rows)?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn write_tradeoff(path: &Path, records: &[TradeoffRecord]) -> Result<()> {
    let cols = header(&[
        "delta",
        "mi_bits",
        "cost_diff_mean",
        "cost_diff_std",
        "acc_mean",
        "acc_std",
        "feasible",
    ]);
    let rows = records.iter().map(|r| {
        vec![
            f(r.delta),
            f(r.mi_bits),
            f(r.cost_diff_mean),
            f(r.cost_diff_std),
            f(r.acc_mean),
            f(r.acc_std),
            r.feasible.to_string(),
        ]
    });
    write_rows(path, &cols, rows)
}

pub fn write_baselines(path: &Path, baselines: &[Baseline]) -> Result<()> {
    let rows = baselines
        .iter()
        .map(|b| vec![b.name.clone(), f(b.acc_mean), f(b.acc_std)]);
    write_rows(path, &header(&["baseline", "acc_mean", "acc_std"]), rows)
}

pub fn write_schemes(path: &Path, schemes: &[SchemeComparison]) -> Result<()> {
    let cols = header(&[
        "scheme",
        "mi_bits",
        "cost_mean",
        "cost_std",
        "acc_mean",
        "acc_std",
        "pareto",
    ]);
    let rows = schemes.iter().map(|s| {
        vec![
            s.scheme.clone(),
            f(s.mi_bits),
            f(s.cost_mean),
            f(s.cost_std),
            f(s.acc_mean),
            f(s.acc_std),
            s.pareto.to_string(),
        ]
    });
    write_rows(path, &cols, rows)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<FhmmModel> {
    let m: FhmmModel = parse_json(path, &read_text(path)?)?;
    m.validate()?;
    Ok(m)
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// A standalone SVG line chart. Non-finite points are skipped; with
/// `log_x` the x axis is logarithmic and nonpositive x are skipped.
pub fn write_line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    log_x: bool,
) -> Result<()> {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 55.0);
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_x || *x > 0.0))
                .map(|&(x, y)| (tx(x), y))
                .collect()
        })
        .collect();
    let all: Vec<&(f64, f64)> = pts.iter().flatten().collect();
    let span = |v: Vec<f64>| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        match (lo.is_finite(), hi > lo) {
            (false, _) => (0.0, 1.0),
            (true, true) => (lo, hi),
            (true, false) => (lo - 0.5, lo + 0.5),
        }
    };
    let (x0, x1) = span(all.iter().map(|p| p.0).collect());
    let (y0, y1) = span(all.iter().map(|p| p.1).collect());
    let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        (left + w - right) / 2.0,
        esc(title)
    ));
    s.push_str(&format!(
        "<path d=\"M{left} {top} V{} H{}\" fill=\"none\" stroke=\"black\"/>\n",
        h - bottom,
        w - right
    ));
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let xl = if log_x { 10f64.powf(fx) } else { fx };
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{:.3e}</text>\n",
            px(fx),
            h - bottom + 16.0,
            xl
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3e}</text>\n",
            left - 6.0,
            py(fy) + 4.0,
            fy
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        (left + w - right) / 2.0,
        h - 12.0,
        esc(x_label)
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        esc(y_label)
    ));
    for (i, (ser, p)) in series.iter().zip(&pts).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !p.is_empty() {
            let d: Vec<String> = p
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                d.join(" ")
            ));
            for &(x, y) in p {
                s.push_str(&format!(
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                    px(x),
                    py(y)
                ));
            }
        }
        let ly = top + 16.0 * i as f64;
        s.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"3\" fill=\"{color}\"/><text x=\"{}\" y=\"{}\">{}</text>\n",
            w - right + 12.0,
            ly,
            w - right + 28.0,
            ly + 5.0,
            esc(ser.name)
        ));
    }
    s.push_str("</svg>\n");
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
