//! Canonical data model for DRAM error traces.
//!
//! A trace is a sequence of timestamped CE/UE observations keyed by DIMM,
//! carried as JSON Lines on disk (field `kind` is `"ce"` or `"ue"`), plus a
//! JSON array of per-DIMM static attributes ([`DimmMeta`]). All timestamps
//! are integer milliseconds UTC.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result, HOUR_MS};

/// Identifies one DIMM slot within the fleet.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DimmId {
    pub server_id: String,
    pub socket: u16,
    pub channel: u16,
    pub slot: u16,
}

impl fmt::Display for DimmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}:{}",
            self.server_id, self.socket, self.channel, self.slot
        )
    }
}

/// Location of an error within the DRAM hierarchy of one DIMM.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct CellAddress {
    pub rank: u16,
    /// DRAM chip index within the rank.
    pub device: u16,
    pub bank_group: u16,
    pub bank: u16,
    pub row: u32,
    pub column: u32,
}

/// Device data-bus width. Determines how many DQ bits each burst beat carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataWidth {
    #[serde(rename = "x4")]
    X4,
    #[serde(rename = "x8")]
    X8,
}

impl DataWidth {
    pub fn dq_width(self) -> u8 {
        match self {
            DataWidth::X4 => 4,
            DataWidth::X8 => 8,
        }
    }

    /// Data + ECC devices per rank for a 72-bit DDR4 channel.
    pub fn devices_per_rank(self) -> u16 {
        match self {
            DataWidth::X4 => 18,
            DataWidth::X8 => 9,
        }
    }
}

/// Number of beats in one DDR4 burst.
pub const BEATS: usize = 8;

/// Per-burst error-bit map: one DQ mask per beat.
///
/// The wire encoding is a 16-hex-digit string interpreted beat-major with
/// beat 0 in the most significant byte. Within a byte, bit `d` corresponds
/// to DQ line `d` of the device; x4 devices may only set bits 0..=3.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ErrorBitmap {
    beats: [u8; BEATS],
}

/// Decode failure for the hex wire form of an [`ErrorBitmap`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitmapError {
    #[error("bitmap must be exactly 16 hex digits, got {0}")]
    BadLength(usize),
    #[error("bitmap contains non-hex character {0:?}")]
    BadHex(char),
    #[error("bit {bit} of beat {beat} is outside the {width} DQ width")]
    OutOfWidth { beat: usize, bit: u8, width: u8 },
}

impl ErrorBitmap {
    pub fn new(beats: [u8; BEATS]) -> Self {
        ErrorBitmap { beats }
    }

    pub fn empty() -> Self {
        ErrorBitmap { beats: [0; BEATS] }
    }

    /// Parse the canonical 16-hex-digit form. Width constraints are not
    /// checked here; see [`ErrorBitmap::check_width`].
    pub fn from_hex(s: &str) -> std::result::Result<Self, BitmapError> {
        if s.len() != 16 {
            return Err(BitmapError::BadLength(s.len()));
        }
        let mut beats = [0u8; BEATS];
        for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
            let hi = hex_val(chunk[0] as char)?;
            let lo = hex_val(chunk[1] as char)?;
            beats[i] = (hi << 4) | lo;
        }
        Ok(ErrorBitmap { beats })
    }

    /// Canonical lowercase hex encoding, beat 0 first.
    pub fn to_hex(self) -> String {
        let mut s = String::with_capacity(16);
        for b in self.beats {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }

    /// True when every set bit lies within `width`'s DQ range.
    pub fn check_width(self, width: DataWidth) -> bool {
        let mask = match width {
            DataWidth::X4 => 0xf0u8,
            DataWidth::X8 => 0x00u8,
        };
        self.beats.iter().all(|b| b & mask == 0)
    }

    /// Validating decode: hex parse plus width enforcement.
    pub fn from_hex_checked(s: &str, width: DataWidth) -> std::result::Result<Self, BitmapError> {
        let bm = Self::from_hex(s)?;
        for (beat, b) in bm.beats.iter().enumerate() {
            let hi = 8 - b.leading_zeros() as u8; // index of highest set bit + 1
            if hi > width.dq_width() {
                return Err(BitmapError::OutOfWidth {
                    beat,
                    bit: hi - 1,
                    width: width.dq_width(),
                });
            }
        }
        Ok(bm)
    }

    pub fn beats(&self) -> &[u8; BEATS] {
        &self.beats
    }

    pub fn beat(&self, i: usize) -> u8 {
        self.beats[i]
    }

    pub fn is_empty(self) -> bool {
        self.beats.iter().all(|&b| b == 0)
    }

    pub fn set(&mut self, beat: usize, dq: u8) {
        self.beats[beat] |= 1 << dq;
    }

    pub fn or_with(&mut self, other: &ErrorBitmap) {
        for (a, b) in self.beats.iter_mut().zip(other.beats.iter()) {
            *a |= b;
        }
    }
}

fn hex_val(c: char) -> std::result::Result<u8, BitmapError> {
    c.to_digit(16).map(|d| d as u8).ok_or(BitmapError::BadHex(c))
}

impl Serialize for ErrorBitmap {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ErrorBitmap {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        ErrorBitmap::from_hex(&s).map_err(D::Error::custom)
    }
}

/// One correctable-error log record. `count` carries corrections coalesced
/// at this address within a single log entry (BMC logs often aggregate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeEvent {
    pub ts_ms: i64,
    #[serde(flatten)]
    pub dimm: DimmId,
    #[serde(flatten)]
    pub cell: CellAddress,
    pub bitmap: ErrorBitmap,
    #[serde(default = "default_count")]
    pub count: u32,
}

fn default_count() -> u32 {
    1
}

/// One uncorrectable-error record. `sudden` means no CE preceded it on this
/// DIMM; the flag is recomputed during validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeEvent {
    pub ts_ms: i64,
    #[serde(flatten)]
    pub dimm: DimmId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellAddress>,
    #[serde(default)]
    pub sudden: bool,
}

/// Wire form of a trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceEvent {
    Ce(CeEvent),
    Ue(UeEvent),
}

impl TraceEvent {
    pub fn ts_ms(&self) -> i64 {
        match self {
            TraceEvent::Ce(e) => e.ts_ms,
            TraceEvent::Ue(e) => e.ts_ms,
        }
    }

    pub fn dimm(&self) -> &DimmId {
        match self {
            TraceEvent::Ce(e) => &e.dimm,
            TraceEvent::Ue(e) => &e.dimm,
        }
    }
}

/// CPU platform hosting the DIMM. ECC strength differs per platform, which
/// shapes the observable failure patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Purley,
    Whitley,
    K920,
    Custom,
}

impl Platform {
    pub const ALL: [Platform; 4] = [
        Platform::Purley,
        Platform::Whitley,
        Platform::K920,
        Platform::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Platform::Purley => "purley",
            Platform::Whitley => "whitley",
            Platform::K920 => "k920",
            Platform::Custom => "custom",
        }
    }
}

/// Static attributes of one DIMM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimmMeta {
    #[serde(flatten)]
    pub dimm: DimmId,
    pub manufacturer: String,
    pub data_width: DataWidth,
    pub frequency_mts: u32,
    pub chip_process: String,
    pub platform: Platform,
}

/// Windowing parameters shared by labeling, featurization, and evaluation.
///
/// `observation_days` is the trailing history summarized into features;
/// a prediction at tick `t` is validated against UEs in
/// `[t + lead, t + lead + prediction]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub observation_days: f64,
    pub lead_seconds: u32,
    pub prediction_days: f64,
    pub sample_interval_secs: u32,
    pub prediction_interval_secs: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            observation_days: 5.0,
            lead_seconds: 3 * 3600,
            prediction_days: 30.0,
            sample_interval_secs: 60,
            prediction_interval_secs: 300,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.observation_days > 0.0) || !(self.prediction_days > 0.0) {
            return Err(Error::InvalidConfig(
                "observation and prediction windows must be positive".into(),
            ));
        }
        if self.lead_seconds == 0 || i64::from(self.lead_seconds) * 1000 > 3 * HOUR_MS {
            return Err(Error::InvalidConfig(
                "lead time must lie in (0, 3h]".into(),
            ));
        }
        if self.sample_interval_secs == 0 || self.prediction_interval_secs == 0 {
            return Err(Error::InvalidConfig("intervals must be positive".into()));
        }
        if self.sample_interval_secs > self.prediction_interval_secs {
            return Err(Error::InvalidConfig(
                "sample interval must not exceed prediction interval".into(),
            ));
        }
        Ok(())
    }

    pub fn observation_ms(&self) -> i64 {
        (self.observation_days * 86_400_000.0).round() as i64
    }

    pub fn lead_ms(&self) -> i64 {
        i64::from(self.lead_seconds) * 1000
    }

    pub fn prediction_ms(&self) -> i64 {
        (self.prediction_days * 86_400_000.0).round() as i64
    }

    pub fn sample_interval_ms(&self) -> i64 {
        i64::from(self.sample_interval_secs) * 1000
    }

    pub fn prediction_interval_ms(&self) -> i64 {
        i64::from(self.prediction_interval_secs) * 1000
    }
}

/// Per-DIMM slice of a validated trace. Event vectors are sorted by
/// timestamp (ties broken by address) and immutable after validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimmHistory {
    pub meta: DimmMeta,
    pub ces: Vec<CeEvent>,
    pub ues: Vec<UeEvent>,
}

impl DimmHistory {
    pub fn first_ce_ms(&self) -> Option<i64> {
        self.ces.first().map(|e| e.ts_ms)
    }

    pub fn last_event_ms(&self) -> Option<i64> {
        let ce = self.ces.last().map(|e| e.ts_ms);
        let ue = self.ues.last().map(|e| e.ts_ms);
        ce.into_iter().chain(ue).max()
    }

    pub fn has_ue(&self) -> bool {
        !self.ues.is_empty()
    }

    /// Sorted UE timestamps, used by labeling and outcome matching.
    pub fn ue_times(&self) -> Vec<i64> {
        self.ues.iter().map(|u| u.ts_ms).collect()
    }
}

/// Records dropped during validation, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    /// Event referenced a DIMM absent from the meta set.
    pub missing_meta: usize,
    /// CE bitmap empty or with bits outside the DIMM's DQ width.
    pub malformed_bitmap: usize,
    /// Cell address outside DDR4 limits or device range.
    pub invalid_address: usize,
}

impl RejectCounts {
    pub fn total(&self) -> usize {
        self.missing_meta + self.malformed_bitmap + self.invalid_address
    }
}

/// A trace whose events are sorted, width-checked, and joined with metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedTrace {
    /// Every DIMM in the meta set, including ones without events.
    pub dimms: BTreeMap<DimmId, DimmHistory>,
    pub rejects: RejectCounts,
}

impl ValidatedTrace {
    pub fn ce_event_count(&self) -> usize {
        self.dimms.values().map(|h| h.ces.len()).sum()
    }

    pub fn ue_event_count(&self) -> usize {
        self.dimms.values().map(|h| h.ues.len()).sum()
    }

    /// `(min, max)` event timestamp over all events, or `None` if empty.
    pub fn span(&self) -> Option<(i64, i64)> {
        let mut span: Option<(i64, i64)> = None;
        for h in self.dimms.values() {
            for ts in h
                .ces
                .iter()
                .map(|e| e.ts_ms)
                .chain(h.ues.iter().map(|e| e.ts_ms))
            {
                span = Some(match span {
                    None => (ts, ts),
                    Some((lo, hi)) => (lo.min(ts), hi.max(ts)),
                });
            }
        }
        span
    }

    /// DIMMs with at least one UE.
    pub fn ue_dimms(&self) -> Vec<DimmId> {
        self.dimms
            .iter()
            .filter(|(_, h)| h.has_ue())
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Drop DIMMs whose only failure evidence is a sudden UE (a UE with no
    /// CE anywhere on the DIMM). Such DIMMs carry no predictive signal.
    /// Idempotent.
    pub fn filter_predictable_population(mut self) -> ValidatedTrace {
        self.dimms
            .retain(|_, h| !(h.has_ue() && h.ces.is_empty()));
        self
    }
}

fn address_ok(cell: &CellAddress, width: DataWidth) -> bool {
    cell.device < width.devices_per_rank() && cell.bank_group <= 3 && cell.bank <= 3
}

/// Sort events by (DIMM, timestamp), join them with metadata, recompute
/// sudden flags, and drop records that fail the width/address/meta checks.
pub fn validate_trace(events: Vec<TraceEvent>, metas: Vec<DimmMeta>) -> ValidatedTrace {
    let mut dimms: BTreeMap<DimmId, DimmHistory> = metas
        .into_iter()
        .map(|m| {
            (
                m.dimm.clone(),
                DimmHistory {
                    meta: m,
                    ces: Vec::new(),
                    ues: Vec::new(),
                },
            )
        })
        .collect();

    let mut rejects = RejectCounts::default();
    for event in events {
        let Some(hist) = dimms.get_mut(event.dimm()) else {
            rejects.missing_meta += 1;
            continue;
        };
        let width = hist.meta.data_width;
        match event {
            TraceEvent::Ce(ce) => {
                if ce.bitmap.is_empty() || !ce.bitmap.check_width(width) {
                    rejects.malformed_bitmap += 1;
                } else if !address_ok(&ce.cell, width) {
                    rejects.invalid_address += 1;
                } else {
                    hist.ces.push(ce);
                }
            }
            TraceEvent::Ue(ue) => {
                if ue.cell.is_some_and(|c| !address_ok(&c, width)) {
                    rejects.invalid_address += 1;
                } else {
                    hist.ues.push(ue);
                }
            }
        }
    }

    for hist in dimms.values_mut() {
        // Full keys make the order independent of input permutation.
        hist.ces
            .sort_by_key(|e| (e.ts_ms, e.cell, e.bitmap, e.count));
        hist.ues.sort_by_key(|e| (e.ts_ms, e.cell));
        let first_ce = hist.first_ce_ms();
        for ue in &mut hist.ues {
            ue.sudden = match first_ce {
                Some(t0) => t0 >= ue.ts_ms,
                None => true,
            };
        }
    }

    ValidatedTrace { dimms, rejects }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{ce, cell, dimm, meta, ue};
    use proptest::prelude::*;

    #[test]
    fn bitmap_hex_round_trip_examples() {
        let bm = ErrorBitmap::from_hex("8000000000000000").unwrap();
        assert_eq!(bm.beat(0), 0x80);
        assert!(bm.beats()[1..].iter().all(|&b| b == 0));
        assert_eq!(bm.to_hex(), "8000000000000000");

        assert!(ErrorBitmap::from_hex("0000000000000000").unwrap().is_empty());
        assert_eq!(
            ErrorBitmap::from_hex("123"),
            Err(BitmapError::BadLength(3))
        );
        assert_eq!(
            ErrorBitmap::from_hex("g000000000000000"),
            Err(BitmapError::BadHex('g'))
        );
    }

    #[test]
    fn bitmap_width_checks() {
        // Bit 7 on beat 0 is valid for x8, out of range for x4.
        let hex = "8000000000000000";
        assert!(ErrorBitmap::from_hex_checked(hex, DataWidth::X8).is_ok());
        assert_eq!(
            ErrorBitmap::from_hex_checked(hex, DataWidth::X4),
            Err(BitmapError::OutOfWidth {
                beat: 0,
                bit: 7,
                width: 4
            })
        );
        // Highest x4 DQ on beat 0.
        let bm = ErrorBitmap::from_hex_checked("0800000000000000", DataWidth::X4).unwrap();
        assert_eq!(bm.beat(0), 0x08);
    }

    proptest! {
        #[test]
        fn bitmap_round_trip(bytes in prop::array::uniform8(0u8..=255)) {
            let bm = ErrorBitmap::new(bytes);
            let hex = bm.to_hex();
            prop_assert_eq!(ErrorBitmap::from_hex(&hex).unwrap(), bm);
            // encode(decode(hex)) == hex on canonical lowercase input
            prop_assert_eq!(ErrorBitmap::from_hex(&hex).unwrap().to_hex(), hex);
        }
    }

    #[test]
    fn validate_empty() {
        let out = validate_trace(Vec::new(), Vec::new());
        assert!(out.dimms.is_empty());
        assert_eq!(out.rejects.total(), 0);
        assert_eq!(out.span(), None);
    }

    #[test]
    fn validate_recomputes_sudden_flags() {
        let d = dimm(1);
        let mut only_ue = ue(&d, 100);
        only_ue.sudden = false; // wrong on purpose
        let out = validate_trace(
            vec![TraceEvent::Ue(only_ue)],
            vec![meta(&d)],
        );
        assert!(out.dimms[&d].ues[0].sudden);

        // A CE at the same timestamp does not precede the UE.
        let out = validate_trace(
            vec![
                TraceEvent::Ue(ue(&d, 100)),
                TraceEvent::Ce(ce(&d, 100, cell(0, 1, 1))),
            ],
            vec![meta(&d)],
        );
        assert!(out.dimms[&d].ues[0].sudden);

        let out = validate_trace(
            vec![
                TraceEvent::Ue(ue(&d, 100)),
                TraceEvent::Ce(ce(&d, 99, cell(0, 1, 1))),
            ],
            vec![meta(&d)],
        );
        assert!(!out.dimms[&d].ues[0].sudden);
    }

    #[test]
    fn validate_rejects() {
        let known = dimm(1);
        let unknown = dimm(2);
        let mut bad_bitmap = ce(&known, 5, cell(0, 1, 1));
        bad_bitmap.bitmap = ErrorBitmap::empty();
        let mut wide_bitmap = ce(&known, 6, cell(0, 1, 1));
        wide_bitmap.bitmap = ErrorBitmap::from_hex("8000000000000000").unwrap();
        let bad_addr = ce(&known, 7, cell(40, 1, 1));
        let events = vec![
            TraceEvent::Ce(ce(&unknown, 1, cell(0, 1, 1))),
            TraceEvent::Ce(bad_bitmap),
            TraceEvent::Ce(wide_bitmap),
            TraceEvent::Ce(bad_addr),
            TraceEvent::Ce(ce(&known, 8, cell(0, 1, 1))),
        ];
        let out = validate_trace(events, vec![meta(&known)]);
        assert_eq!(out.rejects.missing_meta, 1);
        assert_eq!(out.rejects.malformed_bitmap, 2);
        assert_eq!(out.rejects.invalid_address, 1);
        assert_eq!(out.dimms[&known].ces.len(), 1);
    }

    /// Brute-force oracle: independently sort and flag, then compare.
    #[test]
    fn validate_matches_sort_flag_oracle_on_shuffled_input() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut events = Vec::new();
        let mut metas = Vec::new();
        for n in 0..20u16 {
            let d = dimm(n);
            metas.push(meta(&d));
            for k in 0..45 {
                use rand::Rng;
                let ts = rng.random_range(0..500_000i64);
                if k % 9 == 0 {
                    events.push(TraceEvent::Ue(ue(&d, ts)));
                } else {
                    let c = cell(
                        rng.random_range(0..18),
                        rng.random_range(0..64),
                        rng.random_range(0..64),
                    );
                    events.push(TraceEvent::Ce(ce(&d, ts, c)));
                }
            }
        }
        assert_eq!(events.len(), 900);

        let sorted = validate_trace(events.clone(), metas.clone());
        events.shuffle(&mut rng);
        let shuffled = validate_trace(events, metas.clone());
        assert_eq!(sorted, shuffled);

        // Oracle: per DIMM, timestamps non-decreasing and sudden flags match
        // a linear scan.
        for (id, hist) in &sorted.dimms {
            for w in hist.ces.windows(2) {
                assert!(w[0].ts_ms <= w[1].ts_ms, "unsorted CE on {id}");
            }
            let first_ce = hist.ces.first().map(|e| e.ts_ms);
            for u in &hist.ues {
                let expect = first_ce.map_or(true, |t0| t0 >= u.ts_ms);
                assert_eq!(u.sudden, expect);
            }
        }
    }

    #[test]
    fn filter_keeps_dimms_with_ces() {
        let a = dimm(1); // CE then UE: retained
        let b = dimm(2); // UE only: removed
        let c = dimm(3); // no events: retained
        let events = vec![
            TraceEvent::Ce(ce(&a, 1, cell(0, 1, 1))),
            TraceEvent::Ue(ue(&a, 2)),
            TraceEvent::Ue(ue(&b, 2)),
        ];
        let out = validate_trace(events, vec![meta(&a), meta(&b), meta(&c)]);
        let filtered = out.filter_predictable_population();
        assert!(filtered.dimms.contains_key(&a));
        assert!(!filtered.dimms.contains_key(&b));
        assert!(filtered.dimms.contains_key(&c));

        // Idempotent.
        let again = filtered.clone().filter_predictable_population();
        assert_eq!(again, filtered);
    }

    #[test]
    fn filter_matches_per_dimm_scan_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut events = Vec::new();
        let mut metas = Vec::new();
        for n in 0..100u16 {
            let d = dimm(n);
            metas.push(meta(&d));
            let n_ce = rng.random_range(0..4);
            let n_ue = rng.random_range(0..3);
            for _ in 0..n_ce {
                events.push(TraceEvent::Ce(ce(
                    &d,
                    rng.random_range(0..1000),
                    cell(0, 1, 1),
                )));
            }
            for _ in 0..n_ue {
                events.push(TraceEvent::Ue(ue(&d, rng.random_range(0..1000))));
            }
        }
        let trace = validate_trace(events, metas);
        let expected: Vec<DimmId> = trace
            .dimms
            .iter()
            .filter(|(_, h)| !(h.ues.len() > 0 && h.ces.is_empty()))
            .map(|(id, _)| id.clone())
            .collect();
        let filtered = trace.filter_predictable_population();
        let got: Vec<DimmId> = filtered.dimms.keys().cloned().collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn window_config_validation() {
        assert!(WindowConfig::default().validate().is_ok());
        let mut w = WindowConfig::default();
        w.lead_seconds = 3 * 3600 + 1;
        assert!(w.validate().is_err());
        w = WindowConfig::default();
        w.sample_interval_secs = 600;
        assert!(w.validate().is_err());
        w = WindowConfig::default();
        w.observation_days = 0.0;
        assert!(w.validate().is_err());
    }

    #[test]
    fn trace_event_jsonl_round_trip() {
        let d = dimm(4);
        let event = TraceEvent::Ce(ce(&d, 42, cell(2, 10, 11)));
        let line = serde_json::to_string(&event).unwrap();
        assert!(line.contains("\"kind\":\"ce\""));
        assert!(line.contains("\"bitmap\":\"0200000000000000\""));
        let back: TraceEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, event);

        let u = TraceEvent::Ue(ue(&d, 43));
        let line = serde_json::to_string(&u).unwrap();
        assert!(!line.contains("cell"));
        let back: TraceEvent = serde_json::from_str(&line).unwrap();
        assert_eq!(back, u);
    }
}
