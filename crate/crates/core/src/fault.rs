//! Per-DIMM fault-mode diagnosis and error-bit pattern statistics.
//!
//! A *fault* is repeat CE evidence concentrated in one structure of the DRAM
//! hierarchy: a cell whose accumulated CE count crosses a threshold, a row
//! (column) touched in several distinct columns (rows), or a bank showing
//! both a row and a column fault. Device scope records whether CEs are
//! confined to one chip. Bit-pattern statistics summarize which DQ lines and
//! burst beats carry error bits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::trace::{CeEvent, DimmId, ErrorBitmap, BEATS};
use crate::{Error, Result, DAY_MS};

/// Minimum evidence to call each fault mode, plus the trailing analysis
/// window over which evidence is gathered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultThresholds {
    /// Accumulated CE count (summing repeats) that makes a cell faulty.
    pub cell_min_ces: u64,
    /// Distinct erroneous columns that make a row faulty.
    pub row_min_distinct_columns: u32,
    /// Distinct erroneous rows that make a column faulty.
    pub column_min_distinct_rows: u32,
    /// Length of the trailing window considered by [`classify_faults`].
    pub analysis_window_days: f64,
}

impl Default for FaultThresholds {
    fn default() -> Self {
        FaultThresholds {
            cell_min_ces: 2,
            row_min_distinct_columns: 2,
            column_min_distinct_rows: 2,
            analysis_window_days: 5.0,
        }
    }
}

impl FaultThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.cell_min_ces < 1 || self.row_min_distinct_columns < 1 || self.column_min_distinct_rows < 1
        {
            return Err(Error::InvalidConfig(
                "fault thresholds must all be >= 1".into(),
            ));
        }
        if !(self.analysis_window_days > 0.0) {
            return Err(Error::InvalidConfig(
                "analysis_window_days must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn analysis_window_ms(&self) -> i64 {
        (self.analysis_window_days * DAY_MS as f64).round() as i64
    }
}

/// How many distinct devices of the DIMM have logged CEs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceScope {
    None,
    SingleDevice,
    MultiDevice,
}

/// Fault evidence found on one DIMM within the analysis window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultDiagnosis {
    #[serde(flatten)]
    pub dimm: DimmId,
    pub cell_faults: usize,
    pub row_faults: usize,
    pub column_faults: usize,
    pub bank_faults: usize,
    pub device_scope: DeviceScope,
}

impl FaultDiagnosis {
    pub fn has_any_fault(&self) -> bool {
        self.cell_faults > 0 || self.row_faults > 0 || self.column_faults > 0 || self.bank_faults > 0
    }
}

/// Interval semantics for [`BitPatternStats`]: the spread between the
/// outermost erroneous indices, or the largest gap between neighbours.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMode {
    #[default]
    MaxMinSpan,
    AdjacentGap,
}

/// Counts and spreads of erroneous DQ lines and burst beats.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitPatternStats {
    pub dq_count: u32,
    pub beat_count: u32,
    pub dq_interval: u32,
    pub beat_interval: u32,
}

fn interval(sorted_indices: &[u32], mode: IntervalMode) -> u32 {
    match sorted_indices {
        [] | [_] => 0,
        many => match mode {
            IntervalMode::MaxMinSpan => many[many.len() - 1] - many[0],
            IntervalMode::AdjacentGap => many.windows(2).map(|w| w[1] - w[0]).max().unwrap(),
        },
    }
}

/// DQ/beat statistics of a single bitmap under the given interval semantics.
pub fn bit_pattern_stats_with(bitmap: &ErrorBitmap, mode: IntervalMode) -> BitPatternStats {
    let mut dq_mask = 0u8;
    let mut beat_indices = Vec::with_capacity(BEATS);
    for (i, &b) in bitmap.beats().iter().enumerate() {
        if b != 0 {
            beat_indices.push(i as u32);
            dq_mask |= b;
        }
    }
    let dq_indices: Vec<u32> = (0..8).filter(|i| dq_mask & (1 << i) != 0).collect();
    BitPatternStats {
        dq_count: dq_indices.len() as u32,
        beat_count: beat_indices.len() as u32,
        dq_interval: interval(&dq_indices, mode),
        beat_interval: interval(&beat_indices, mode),
    }
}

/// DQ/beat statistics with the default max−min interval semantics.
pub fn bit_pattern_stats(bitmap: &ErrorBitmap) -> BitPatternStats {
    bit_pattern_stats_with(bitmap, IntervalMode::MaxMinSpan)
}

/// Slice of time-sorted events falling in `(end − duration, end]`.
pub(crate) fn events_in_window(ces: &[CeEvent], window_end_ms: i64, window_ms: i64) -> &[CeEvent] {
    let start = window_end_ms.saturating_sub(window_ms);
    let lo = ces.partition_point(|e| e.ts_ms <= start);
    let hi = ces.partition_point(|e| e.ts_ms <= window_end_ms);
    &ces[lo..hi.max(lo)]
}

/// OR together every bitmap in the trailing window, then take its stats.
pub fn aggregate_bit_patterns(
    ces: &[CeEvent],
    window_end_ms: i64,
    window_ms: i64,
    mode: IntervalMode,
) -> BitPatternStats {
    let mut acc = ErrorBitmap::default();
    for e in events_in_window(ces, window_end_ms, window_ms) {
        acc.or_with(&e.bitmap);
    }
    bit_pattern_stats_with(&acc, mode)
}

// Grouping keys. Rank is part of every key: equal device/bank/row indices on
// different ranks are distinct physical structures.
type RowKey = (u16, u16, u16, u16, u32);
type ColumnKey = (u16, u16, u16, u16, u32);
type BankKey = (u16, u16, u16, u16);

fn classify_slice(dimm: &DimmId, ces: &[CeEvent], thresholds: &FaultThresholds) -> FaultDiagnosis {
    let mut cell_counts: BTreeMap<(RowKey, u32), u64> = BTreeMap::new();
    let mut row_columns: BTreeMap<RowKey, BTreeSet<u32>> = BTreeMap::new();
    let mut column_rows: BTreeMap<ColumnKey, BTreeSet<u32>> = BTreeMap::new();
    let mut devices: BTreeSet<(u16, u16)> = BTreeSet::new();

    for e in ces {
        let c = e.cell;
        let row_key = (c.rank, c.device, c.bank_group, c.bank, c.row);
        let col_key = (c.rank, c.device, c.bank_group, c.bank, c.column);
        *cell_counts.entry((row_key, c.column)).or_default() += u64::from(e.count);
        row_columns.entry(row_key).or_default().insert(c.column);
        column_rows.entry(col_key).or_default().insert(c.row);
        devices.insert((c.rank, c.device));
    }

    let cell_faults = cell_counts
        .values()
        .filter(|&&n| n >= thresholds.cell_min_ces)
        .count();
    let faulty_rows: BTreeSet<&RowKey> = row_columns
        .iter()
        .filter(|(_, cols)| cols.len() >= thresholds.row_min_distinct_columns as usize)
        .map(|(k, _)| k)
        .collect();
    let faulty_columns: BTreeSet<&ColumnKey> = column_rows
        .iter()
        .filter(|(_, rows)| rows.len() >= thresholds.column_min_distinct_rows as usize)
        .map(|(k, _)| k)
        .collect();

    let row_banks: BTreeSet<BankKey> = faulty_rows.iter().map(|k| (k.0, k.1, k.2, k.3)).collect();
    let column_banks: BTreeSet<BankKey> =
        faulty_columns.iter().map(|k| (k.0, k.1, k.2, k.3)).collect();
    let bank_faults = row_banks.intersection(&column_banks).count();

    let device_scope = match devices.len() {
        0 => DeviceScope::None,
        1 => DeviceScope::SingleDevice,
        _ => DeviceScope::MultiDevice,
    };

    FaultDiagnosis {
        dimm: dimm.clone(),
        cell_faults,
        row_faults: faulty_rows.len(),
        column_faults: faulty_columns.len(),
        bank_faults,
        device_scope,
    }
}

/// Diagnose fault modes from CEs in the trailing analysis window ending at
/// `window_end_ms`. Events must be time-sorted (as produced by validation).
pub fn classify_faults(
    dimm: &DimmId,
    ces: &[CeEvent],
    thresholds: &FaultThresholds,
    window_end_ms: i64,
) -> FaultDiagnosis {
    let slice = events_in_window(ces, window_end_ms, thresholds.analysis_window_ms());
    classify_slice(dimm, slice, thresholds)
}

/// Diagnose fault modes over a DIMM's entire CE history.
pub fn classify_faults_full(
    dimm: &DimmId,
    ces: &[CeEvent],
    thresholds: &FaultThresholds,
) -> FaultDiagnosis {
    classify_slice(dimm, ces, thresholds)
}

/// Fault categories a DIMM population can be split by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultMode {
    Cell,
    Row,
    Column,
    Bank,
    SingleDevice,
    MultiDevice,
}

impl FaultMode {
    pub const ALL: [FaultMode; 6] = [
        FaultMode::Cell,
        FaultMode::Row,
        FaultMode::Column,
        FaultMode::Bank,
        FaultMode::SingleDevice,
        FaultMode::MultiDevice,
    ];

    fn applies_to(self, d: &FaultDiagnosis) -> bool {
        match self {
            FaultMode::Cell => d.cell_faults > 0,
            FaultMode::Row => d.row_faults > 0,
            FaultMode::Column => d.column_faults > 0,
            FaultMode::Bank => d.bank_faults > 0,
            FaultMode::SingleDevice => d.device_scope == DeviceScope::SingleDevice,
            FaultMode::MultiDevice => d.device_scope == DeviceScope::MultiDevice,
        }
    }
}

/// Fraction of DIMMs in a fault category that later saw a UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeUeRate {
    pub rate: f64,
    pub ue_dimms: usize,
    pub population: usize,
}

/// Per-mode UE rate over a diagnosed population. Modes nobody exhibits are
/// absent from the result rather than reported as 0/0.
pub fn relative_ue_rate(
    diagnoses: &[FaultDiagnosis],
    ue_dimms: &BTreeSet<DimmId>,
) -> BTreeMap<FaultMode, ModeUeRate> {
    let mut out = BTreeMap::new();
    for mode in FaultMode::ALL {
        let affected: Vec<&FaultDiagnosis> =
            diagnoses.iter().filter(|d| mode.applies_to(d)).collect();
        if affected.is_empty() {
            continue;
        }
        let hit = affected.iter().filter(|d| ue_dimms.contains(&d.dimm)).count();
        out.insert(
            mode,
            ModeUeRate {
                rate: hit as f64 / affected.len() as f64,
                ue_dimms: hit,
                population: affected.len(),
            },
        );
    }
    out
}
