//! Windowed featurization and labeling of validated traces.
//!
//! At each prediction tick `t` a DIMM's trailing history is summarized into
//! a fixed-order feature vector, and the label says whether a UE falls in
//! the closed future window `[t + lead, t + lead + prediction]`. Ticks are
//! spaced `prediction_interval` apart and start after the DIMM's first CE.
//!
//! Batch and stream builders are contractually bit-identical: all dynamic
//! features accumulate integers before a single division by a constant
//! window length, so evaluation order cannot perturb the floats.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fault::{
    aggregate_bit_patterns, classify_faults, events_in_window, FaultThresholds, IntervalMode,
};
use crate::trace::{
    CeEvent, DimmHistory, DimmId, DimmMeta, Platform, TraceEvent, ValidatedTrace, WindowConfig,
};
use crate::{Error, Result, DAY_MS, HOUR_MS, MINUTE_MS};

/// A named trailing sub-window over which CE activity is counted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubWindow {
    /// Suffix used in feature names, e.g. `1h` -> `ce_count_1h`.
    pub name: String,
    pub seconds: u64,
}

impl SubWindow {
    fn new(name: &str, seconds: u64) -> Self {
        SubWindow {
            name: name.to_string(),
            seconds,
        }
    }

    fn ms(&self) -> i64 {
        self.seconds as i64 * 1000
    }

    fn days(&self) -> f64 {
        self.seconds as f64 / 86_400.0
    }
}

/// Everything that shapes the feature vector. Two runs with equal configs
/// produce equal schemas (and hence equal schema hashes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturizerConfig {
    pub window: WindowConfig,
    pub thresholds: FaultThresholds,
    pub interval_mode: IntervalMode,
    /// CE occurrences within one hour that raise the storm flag.
    pub storm_threshold: u64,
    pub sub_windows: Vec<SubWindow>,
    /// Known manufacturer names; anything else lands in the `other` bucket.
    pub manufacturers: Vec<String>,
    /// Known chip process nodes; anything else lands in the `other` bucket.
    pub chip_processes: Vec<String>,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            window: WindowConfig::default(),
            thresholds: FaultThresholds::default(),
            interval_mode: IntervalMode::MaxMinSpan,
            storm_threshold: 10,
            sub_windows: vec![
                SubWindow::new("1min", 60),
                SubWindow::new("1h", 3_600),
                SubWindow::new("24h", 86_400),
                SubWindow::new("5d", 5 * 86_400),
            ],
            manufacturers: vec!["vendor_a".into(), "vendor_b".into(), "vendor_c".into()],
            chip_processes: vec!["1x".into(), "1y".into(), "1z".into()],
        }
    }
}

impl FeaturizerConfig {
    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        self.thresholds.validate()?;
        if self.sub_windows.is_empty() {
            return Err(Error::InvalidConfig("sub_windows must not be empty".into()));
        }
        let mut names: Vec<&str> = self.sub_windows.iter().map(|w| w.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.sub_windows.len() {
            return Err(Error::InvalidConfig("duplicate sub-window names".into()));
        }
        if self.sub_windows.iter().any(|w| w.seconds == 0) {
            return Err(Error::InvalidConfig("sub-window of zero length".into()));
        }
        if self.storm_threshold == 0 {
            return Err(Error::InvalidConfig("storm_threshold must be >= 1".into()));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::for_config(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Count,
    Rate,
    CategoricalEncoded,
    Flag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    CeStats,
    FaultModes,
    BitPatterns,
    StaticMeta,
    Events,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureColumn {
    pub name: String,
    pub kind: FeatureKind,
    pub source: FeatureSource,
}

/// Ordered feature columns plus a content hash. The hash is embedded in
/// exported matrices and trained models so that training and scoring can
/// refuse to mix incompatible feature layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub columns: Vec<FeatureColumn>,
}

impl FeatureSchema {
    fn push(cols: &mut Vec<FeatureColumn>, name: String, kind: FeatureKind, source: FeatureSource) {
        cols.push(FeatureColumn { name, kind, source });
    }

    pub fn for_config(cfg: &FeaturizerConfig) -> FeatureSchema {
        use FeatureKind::*;
        use FeatureSource::*;
        let mut cols = Vec::new();
        for w in &cfg.sub_windows {
            Self::push(&mut cols, format!("ce_count_{}", w.name), Count, CeStats);
        }
        for w in &cfg.sub_windows {
            Self::push(&mut cols, format!("ce_rate_{}", w.name), Rate, CeStats);
        }
        Self::push(&mut cols, "ce_total".into(), Count, CeStats);
        Self::push(&mut cols, "ce_rate_lifetime".into(), Rate, CeStats);
        for mode in ["cell", "row", "column", "bank"] {
            Self::push(&mut cols, format!("fault_{mode}_count"), Count, FaultModes);
        }
        Self::push(&mut cols, "fault_single_device".into(), Flag, FaultModes);
        Self::push(&mut cols, "fault_multi_device".into(), Flag, FaultModes);
        for name in ["dq_count", "beat_count", "dq_interval", "beat_interval"] {
            Self::push(&mut cols, name.into(), Count, BitPatterns);
        }
        Self::push(&mut cols, "ce_storm".into(), Flag, Events);
        Self::push(&mut cols, "data_width".into(), CategoricalEncoded, StaticMeta);
        Self::push(&mut cols, "frequency_mts".into(), Rate, StaticMeta);
        for m in &cfg.manufacturers {
            Self::push(&mut cols, format!("manufacturer_{m}"), CategoricalEncoded, StaticMeta);
        }
        Self::push(&mut cols, "manufacturer_other".into(), CategoricalEncoded, StaticMeta);
        for p in &cfg.chip_processes {
            Self::push(&mut cols, format!("process_{p}"), CategoricalEncoded, StaticMeta);
        }
        Self::push(&mut cols, "process_other".into(), CategoricalEncoded, StaticMeta);
        for p in Platform::ALL {
            Self::push(
                &mut cols,
                format!("platform_{}", p.name()),
                CategoricalEncoded,
                StaticMeta,
            );
        }
        FeatureSchema { columns: cols }
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Hex SHA-256 over the ordered `name|kind|source` column triples.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.columns {
            let kind = serde_json::to_string(&c.kind).unwrap();
            let source = serde_json::to_string(&c.source).unwrap();
            hasher.update(c.name.as_bytes());
            hasher.update(b"|");
            hasher.update(kind.as_bytes());
            hasher.update(b"|");
            hasher.update(source.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Label::Negative => 0.0,
            Label::Positive => 1.0,
        }
    }
}

/// One labeled observation: a DIMM at a prediction tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub dimm: DimmId,
    pub t_ms: i64,
    pub features: Vec<f64>,
    pub label: Label,
}

/// Positive iff some UE time falls in the closed window
/// `[t + lead, t + lead + prediction]`. `ue_times` must be sorted.
pub fn label(t_ms: i64, ue_times: &[i64], cfg: &WindowConfig) -> Label {
    let lo = t_ms + cfg.lead_ms();
    let hi = lo + cfg.prediction_ms();
    let idx = ue_times.partition_point(|&u| u < lo);
    if idx < ue_times.len() && ue_times[idx] <= hi {
        Label::Positive
    } else {
        Label::Negative
    }
}

fn sum_counts(events: &[CeEvent]) -> u64 {
    events.iter().map(|e| u64::from(e.count)).sum()
}

/// Feature vector for one DIMM at time `t`, in schema column order.
///
/// Only events with `ts_ms <= t` influence the result; later events are
/// truncated away here, so callers may pass full histories.
pub fn featurize(history: &DimmHistory, t_ms: i64, cfg: &FeaturizerConfig) -> Vec<f64> {
    let visible = &history.ces[..history.ces.partition_point(|e| e.ts_ms <= t_ms)];
    let meta = &history.meta;
    let schema_len = cfg.schema().len();
    let mut v = Vec::with_capacity(schema_len);

    // Trailing sub-window counts, then their rates per day. Counts sum the
    // CE `count` field (repeat corrections), not log lines.
    let window_counts: Vec<u64> = cfg
        .sub_windows
        .iter()
        .map(|w| sum_counts(events_in_window(visible, t_ms, w.ms())))
        .collect();
    for &n in &window_counts {
        v.push(n as f64);
    }
    for (w, &n) in cfg.sub_windows.iter().zip(&window_counts) {
        v.push(n as f64 / w.days());
    }

    let total = sum_counts(visible);
    v.push(total as f64);
    let lifetime_ms = match visible.first() {
        Some(first) => (t_ms - first.ts_ms).max(MINUTE_MS),
        None => MINUTE_MS,
    };
    v.push(total as f64 / (lifetime_ms as f64 / DAY_MS as f64));

    let diagnosis = classify_faults(&meta.dimm, visible, &cfg.thresholds, t_ms);
    v.push(diagnosis.cell_faults as f64);
    v.push(diagnosis.row_faults as f64);
    v.push(diagnosis.column_faults as f64);
    v.push(diagnosis.bank_faults as f64);
    v.push(f64::from(diagnosis.device_scope == crate::fault::DeviceScope::SingleDevice));
    v.push(f64::from(diagnosis.device_scope == crate::fault::DeviceScope::MultiDevice));

    let stats = aggregate_bit_patterns(
        visible,
        t_ms,
        cfg.thresholds.analysis_window_ms(),
        cfg.interval_mode,
    );
    v.push(f64::from(stats.dq_count));
    v.push(f64::from(stats.beat_count));
    v.push(f64::from(stats.dq_interval));
    v.push(f64::from(stats.beat_interval));

    let hour_count = sum_counts(events_in_window(visible, t_ms, HOUR_MS));
    v.push(f64::from(hour_count >= cfg.storm_threshold));

    v.push(f64::from(meta.data_width.dq_width()));
    v.push(f64::from(meta.frequency_mts));
    one_hot(&mut v, &cfg.manufacturers, &meta.manufacturer);
    one_hot(&mut v, &cfg.chip_processes, &meta.chip_process);
    for p in Platform::ALL {
        v.push(f64::from(meta.platform == p));
    }

    debug_assert_eq!(v.len(), schema_len);
    v
}

fn one_hot(v: &mut Vec<f64>, vocab: &[String], value: &str) {
    let mut hit = false;
    for known in vocab {
        let is = known == value;
        hit |= is;
        v.push(f64::from(is));
    }
    v.push(f64::from(!hit));
}

/// DIMMs whose manufacturer or chip process fall outside the schema
/// vocabulary (encoded as `other`); surfaced in featurize reports.
pub fn unknown_categoricals(
    metas: &BTreeMap<DimmId, DimmMeta>,
    cfg: &FeaturizerConfig,
) -> Vec<(DimmId, String)> {
    let mut out = Vec::new();
    for (id, meta) in metas {
        if !cfg.manufacturers.contains(&meta.manufacturer) {
            out.push((id.clone(), format!("manufacturer {:?}", meta.manufacturer)));
        }
        if !cfg.chip_processes.contains(&meta.chip_process) {
            out.push((id.clone(), format!("chip_process {:?}", meta.chip_process)));
        }
    }
    out
}

fn dimm_ticks(first_ce: i64, trace_end: i64, interval_ms: i64) -> impl Iterator<Item = i64> {
    let mut t = first_ce;
    std::iter::from_fn(move || {
        t += interval_ms;
        (t <= trace_end).then_some(t)
    })
}

fn samples_for_dimm(history: &DimmHistory, trace_end: i64, cfg: &FeaturizerConfig) -> Vec<Sample> {
    let Some(first_ce) = history.first_ce_ms() else {
        return Vec::new();
    };
    let ue_times = history.ue_times();
    dimm_ticks(first_ce, trace_end, cfg.window.prediction_interval_ms())
        .map(|t| Sample {
            dimm: history.meta.dimm.clone(),
            t_ms: t,
            features: featurize(history, t, cfg),
            label: label(t, &ue_times, &cfg.window),
        })
        .collect()
}

/// Batch sample construction: one sample per DIMM per prediction tick,
/// ordered by (DIMM, tick). DIMMs without CEs produce nothing.
pub fn build_samples(trace: &ValidatedTrace, cfg: &FeaturizerConfig) -> Vec<Sample> {
    use rayon::prelude::*;
    let Some((_, trace_end)) = trace.span() else {
        return Vec::new();
    };
    let histories: Vec<&DimmHistory> = trace.dimms.values().collect();
    let mut per_dimm: Vec<Vec<Sample>> = histories
        .par_iter()
        .map(|h| samples_for_dimm(h, trace_end, cfg))
        .collect();
    per_dimm.drain(..).flatten().collect()
}

/// Incremental featurizer: feed time-ordered events, then [`finish`] to
/// collect samples identical to [`build_samples`] on the same data.
///
/// Events at a tick's exact timestamp are part of that tick's history, so a
/// tick is only emitted once a strictly later event arrives (or at finish).
///
/// [`finish`]: StreamFeaturizer::finish
pub struct StreamFeaturizer {
    cfg: FeaturizerConfig,
    states: BTreeMap<DimmId, DimmHistory>,
    /// Next pending tick per DIMM with at least one CE.
    next_tick: BTreeMap<DimmId, i64>,
    emitted: Vec<Sample>,
    last_ts: Option<i64>,
}

impl StreamFeaturizer {
    pub fn new(metas: &BTreeMap<DimmId, DimmMeta>, cfg: FeaturizerConfig) -> StreamFeaturizer {
        let states = metas
            .iter()
            .map(|(id, meta)| {
                (
                    id.clone(),
                    DimmHistory {
                        meta: meta.clone(),
                        ces: Vec::new(),
                        ues: Vec::new(),
                    },
                )
            })
            .collect();
        StreamFeaturizer {
            cfg,
            states,
            next_tick: BTreeMap::new(),
            emitted: Vec::new(),
            last_ts: None,
        }
    }

    pub fn push(&mut self, event: &TraceEvent) -> Result<()> {
        let ts = event.ts_ms();
        if self.last_ts.is_some_and(|prev| ts < prev) {
            return Err(Error::Data(format!(
                "stream events must be time-ordered; got {ts} after {}",
                self.last_ts.unwrap()
            )));
        }
        self.last_ts = Some(ts);
        self.drain_ticks_before(ts);
        let dimm = event.dimm();
        let state = self
            .states
            .get_mut(dimm)
            .ok_or_else(|| Error::Data(format!("event for unknown DIMM {dimm}")))?;
        match event {
            TraceEvent::Ce(ce) => {
                if state.ces.is_empty() {
                    self.next_tick.insert(
                        dimm.clone(),
                        ce.ts_ms + self.cfg.window.prediction_interval_ms(),
                    );
                }
                state.ces.push(ce.clone());
            }
            TraceEvent::Ue(ue) => state.ues.push(ue.clone()),
        }
        Ok(())
    }

    fn drain_ticks_before(&mut self, ts: i64) {
        self.drain_while(|tick| tick < ts);
    }

    fn drain_while(&mut self, keep: impl Fn(i64) -> bool) {
        // Repeatedly emit the globally earliest pending tick so interleaved
        // DIMMs come out in deterministic (tick, DIMM) order.
        loop {
            let Some((dimm, tick)) = self
                .next_tick
                .iter()
                .min_by_key(|&(d, &t)| (t, d.clone()))
                .map(|(d, &t)| (d.clone(), t))
            else {
                return;
            };
            if !keep(tick) {
                return;
            }
            let state = &self.states[&dimm];
            // Labels are attached in finish(); UEs labeling this tick may
            // not have arrived yet.
            self.emitted.push(Sample {
                dimm: dimm.clone(),
                t_ms: tick,
                features: featurize(state, tick, &self.cfg),
                label: Label::Negative,
            });
            self.next_tick
                .insert(dimm, tick + self.cfg.window.prediction_interval_ms());
        }
    }

    /// Emit remaining ticks up to `trace_end`, attach labels, and return
    /// samples in (DIMM, tick) order.
    pub fn finish(mut self, trace_end_ms: i64) -> Vec<Sample> {
        self.drain_while(|tick| tick <= trace_end_ms);
        let mut ue_times: BTreeMap<&DimmId, Vec<i64>> = BTreeMap::new();
        for (id, state) in &self.states {
            ue_times.insert(id, state.ue_times());
        }
        let mut out: Vec<Sample> = self
            .emitted
            .into_iter()
            .filter(|s| s.t_ms <= trace_end_ms)
            .collect();
        for s in &mut out {
            s.label = label(s.t_ms, &ue_times[&s.dimm], &self.cfg.window);
        }
        out.sort_by(|a, b| (&a.dimm, a.t_ms).cmp(&(&b.dimm, b.t_ms)));
        out
    }
}

/// Keep all positives and a seeded `keep_fraction` of negatives. Intended
/// for training-time class rebalancing only; never use on evaluation data.
pub fn downsample_negatives(samples: Vec<Sample>, keep_fraction: f64, seed: u64) -> Vec<Sample> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    samples
        .into_iter()
        .filter(|s| {
            s.label.is_positive() || rng.random_range(0.0..1.0) < keep_fraction
        })
        .collect()
}

const MATRIX_ID_COLUMNS: [&str; 5] = ["server_id", "socket", "channel", "slot", "timestamp_ms"];

/// Write the labeled feature matrix as CSV: identity columns, features in
/// schema order, then the label.
pub fn write_matrix_csv<W: Write>(
    writer: W,
    schema: &FeatureSchema,
    samples: &[Sample],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = MATRIX_ID_COLUMNS
        .iter()
        .copied()
        .chain(schema.columns.iter().map(|c| c.name.as_str()))
        .chain(["label"])
        .collect();
    w.write_record(&header)?;
    for s in samples {
        if s.features.len() != schema.len() {
            return Err(Error::Data(format!(
                "sample at {} has {} features, schema has {}",
                s.t_ms,
                s.features.len(),
                schema.len()
            )));
        }
        let mut record = Vec::with_capacity(header.len());
        record.push(s.dimm.server_id.clone());
        record.push(s.dimm.socket.to_string());
        record.push(s.dimm.channel.to_string());
        record.push(s.dimm.slot.to_string());
        record.push(s.t_ms.to_string());
        for &f in &s.features {
            if !f.is_finite() {
                return Err(Error::Data(format!("non-finite feature value at {}", s.t_ms)));
            }
            record.push(format!("{f}"));
        }
        record.push(if s.label.is_positive() { "1" } else { "0" }.to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a matrix written by [`write_matrix_csv`], returning the feature
/// names found in the header alongside the samples.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Sample>)> {
    let mut r = csv::Reader::from_reader(reader);
    let headers = r.headers()?.clone();
    let n = headers.len();
    if n < MATRIX_ID_COLUMNS.len() + 1 {
        return Err(Error::Data("matrix header too short".into()));
    }
    for (i, expected) in MATRIX_ID_COLUMNS.iter().enumerate() {
        if headers.get(i) != Some(*expected) {
            return Err(Error::Data(format!(
                "matrix header column {i} is {:?}, expected {expected:?}",
                headers.get(i).unwrap_or("")
            )));
        }
    }
    if headers.get(n - 1) != Some("label") {
        return Err(Error::Data("matrix missing trailing label column".into()));
    }
    let names: Vec<String> = headers
        .iter()
        .skip(MATRIX_ID_COLUMNS.len())
        .take(n - MATRIX_ID_COLUMNS.len() - 1)
        .map(str::to_string)
        .collect();

    let mut samples = Vec::new();
    for (idx, record) in r.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        if record.len() != n {
            return Err(Error::Data(format!("matrix line {line}: wrong column count")));
        }
        let field = |i: usize| record.get(i).unwrap_or("");
        let parse_err =
            |col: &str| Error::Data(format!("matrix line {line}: cannot parse {col}"));
        let dimm = DimmId {
            server_id: field(0).to_string(),
            socket: field(1).parse().map_err(|_| parse_err("socket"))?,
            channel: field(2).parse().map_err(|_| parse_err("channel"))?,
            slot: field(3).parse().map_err(|_| parse_err("slot"))?,
        };
        let t_ms = field(4).parse().map_err(|_| parse_err("timestamp_ms"))?;
        let mut features = Vec::with_capacity(names.len());
        for i in MATRIX_ID_COLUMNS.len()..n - 1 {
            let v: f64 = field(i).parse().map_err(|_| parse_err(&headers[i]))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("matrix line {line}: non-finite value")));
            }
            features.push(v);
        }
        let label = match field(n - 1) {
            "0" => Label::Negative,
            "1" => Label::Positive,
            other => return Err(Error::Data(format!("matrix line {line}: bad label {other:?}"))),
        };
        samples.push(Sample {
            dimm,
            t_ms,
            features,
            label,
        });
    }
    Ok((names, samples))
}

/// Schema descriptor persisted next to each exported matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub format_version: u32,
    pub schema_hash: String,
    pub schema: FeatureSchema,
}

pub const SCHEMA_FORMAT_VERSION: u32 = 1;

pub fn write_schema_json(path: &Path, schema: &FeatureSchema) -> Result<()> {
    let file = SchemaFile {
        format_version: SCHEMA_FORMAT_VERSION,
        schema_hash: schema.hash(),
        schema: schema.clone(),
    };
    let mut buf = serde_json::to_vec_pretty(&file)?;
    buf.push(b'\n');
    Ok(std::fs::write(path, buf)?)
}

/// Load a schema descriptor, recomputing and checking its hash.
pub fn read_schema_json(path: &Path) -> Result<SchemaFile> {
    let data = std::fs::read(path)?;
    let file: SchemaFile = serde_json::from_slice(&data)?;
    let actual = file.schema.hash();
    if actual != file.schema_hash {
        return Err(Error::SchemaMismatch {
            expected: file.schema_hash,
            found: actual,
        });
    }
    Ok(file)
}
