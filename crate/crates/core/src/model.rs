//! Domain types: uniformly sampled waveforms, beat feature series,
//! interval annotations and recording sessions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which physical channel a waveform carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum SignalLabel {
    Bp,
    Ppg,
}

impl SignalLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalLabel::Bp => "BP",
            SignalLabel::Ppg => "PPG",
        }
    }
}

/// Evenly sampled waveform. BP values are in mmHg, PPG values in device units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSignal {
    sample_rate_hz: f64,
    t0_s: f64,
    values: Vec<f64>,
    label: SignalLabel,
}

impl UniformSignal {
    pub fn new(sample_rate_hz: f64, t0_s: f64, values: Vec<f64>, label: SignalLabel) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidSignal(format!(
                "sample rate must be positive and finite, got {sample_rate_hz}"
            )));
        }
        if !t0_s.is_finite() {
            return Err(Error::InvalidSignal("t0 must be finite".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidSignal("no samples".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSignal(format!("non-finite value at sample {i}")));
        }
        Ok(Self {
            sample_rate_hz,
            t0_s,
            values,
            label,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn label(&self) -> SignalLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of sample `m`.
    pub fn time_at(&self, m: usize) -> f64 {
        self.t0_s + m as f64 / self.sample_rate_hz
    }

    /// End of the covered span: one sample period past the last sample.
    pub fn end_s(&self) -> f64 {
        self.time_at(self.values.len())
    }

    /// Nearest sample index for time `t`, if it falls inside the signal.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let m = ((t - self.t0_s) * self.sample_rate_hz).round();
        if m < 0.0 || m >= self.values.len() as f64 {
            None
        } else {
            Some(m as usize)
        }
    }

    /// First sample index whose time is `>= t`.
    pub fn first_index_at_or_after(&self, t: f64) -> usize {
        let x = (t - self.t0_s) * self.sample_rate_hz;
        let mut m = x.ceil().max(0.0) as usize;
        // guard against ceil() of a value a hair above an integer
        if m > 0 && self.time_at(m - 1) >= t {
            m -= 1;
        }
        m.min(self.values.len())
    }
}

/// Beat-level feature kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Feature {
    Sbp,
    Dbp,
    Map,
    PpgPeak,
    PpgTrough,
}

impl Feature {
    pub const BP_FEATURES: [Feature; 3] = [Feature::Sbp, Feature::Dbp, Feature::Map];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Sbp => "SBP",
            Feature::Dbp => "DBP",
            Feature::Map => "MAP",
            Feature::PpgPeak => "PPG_PEAK",
            Feature::PpgTrough => "PPG_TROUGH",
        }
    }

    /// Row name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            Feature::Sbp => "Systolic",
            Feature::Dbp => "Diastolic",
            Feature::Map => "MAP",
            Feature::PpgPeak => "PPG peak",
            Feature::PpgTrough => "PPG trough",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SBP" => Ok(Feature::Sbp),
            "DBP" => Ok(Feature::Dbp),
            "MAP" => Ok(Feature::Map),
            "PPG_PEAK" => Ok(Feature::PpgPeak),
            "PPG_TROUGH" => Ok(Feature::PpgTrough),
            other => Err(Error::InvalidSeries(format!("unknown feature `{other}`"))),
        }
    }
}

/// Mean arterial pressure from a diastolic/systolic pair.
#[inline]
pub fn mean_arterial_pressure(dbp: f64, sbp: f64) -> f64 {
    (2.0 * dbp + sbp) / 3.0
}

/// Non-uniform event series: one value per detected beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatFeatureSeries {
    feature: Feature,
    times_s: Vec<f64>,
    values: Vec<f64>,
}

impl BeatFeatureSeries {
    pub fn new(feature: Feature, times_s: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times_s.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} times but {} values",
                times_s.len(),
                values.len()
            )));
        }
        if times_s.iter().chain(&values).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSeries("non-finite entry".into()));
        }
        if times_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries("times not strictly increasing".into()));
        }
        Ok(Self {
            feature,
            times_s,
            values,
        })
    }

    pub fn empty(feature: Feature) -> Self {
        Self {
            feature,
            times_s: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn feature(&self) -> Feature {
        self.feature
    }

    pub fn times_s(&self) -> &[f64] {
        &self.times_s
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times_s.iter().copied().zip(self.values.iter().copied())
    }
}

/// Uniformly resampled feature track (output of spline resampling).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTrack {
    pub feature: Feature,
    pub start_s: f64,
    pub sample_rate_hz: f64,
    pub values: Vec<f64>,
}

impl FeatureTrack {
    pub fn time_at(&self, j: usize) -> f64 {
        self.start_s + j as f64 / self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Respiratory condition of an annotated window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IntervalKind {
    #[serde(rename = "NB")]
    NormalBreathing,
    #[serde(rename = "BH")]
    BreathHold,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::NormalBreathing => "NB",
            IntervalKind::BreathHold => "BH",
        }
    }
}

impl fmt::Display for IntervalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for IntervalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NB" => Ok(IntervalKind::NormalBreathing),
            "BH" => Ok(IntervalKind::BreathHold),
            other => Err(Error::InvalidAnnotation(format!("unknown kind `{other}`"))),
        }
    }
}

/// Labeled half-open time window `[start_s, end_s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalAnnotation {
    pub label: String,
    pub kind: IntervalKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl IntervalAnnotation {
    pub fn new(label: impl Into<String>, kind: IntervalKind, start_s: f64, end_s: f64) -> Result<Self> {
        let label = label.into();
        if !(start_s.is_finite() && end_s.is_finite() && end_s > start_s) {
            return Err(Error::InvalidAnnotation(format!(
                "{label}: need finite start < end, got [{start_s}, {end_s})"
            )));
        }
        Ok(Self {
            label,
            kind,
            start_s,
            end_s,
        })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    fn overlaps(&self, other: &IntervalAnnotation) -> bool {
        self.start_s < other.end_s && other.start_s < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSession {
    pub subject_id: String,
    pub bp: UniformSignal,
    pub ppg: UniformSignal,
    pub annotations: Vec<IntervalAnnotation>,
}

/// An invariant breach found by [`validate_session`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RateMismatch { bp: f64, ppg: f64 },
    StartMismatch { bp: f64, ppg: f64 },
    LengthMismatch { bp: usize, ppg: usize },
    WrongLabel { channel: &'static str },
    EmptyWindow { label: String },
    Overlap { first: String, second: String },
    OutOfSpan { label: String },
    DuplicateLabel { label: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RateMismatch { bp, ppg } => {
                write!(f, "sample rate mismatch: bp {bp} Hz, ppg {ppg} Hz")
            }
            Violation::StartMismatch { bp, ppg } => {
                write!(f, "start time mismatch: bp {bp} s, ppg {ppg} s")
            }
            Violation::LengthMismatch { bp, ppg } => {
                write!(f, "length mismatch: bp {bp} samples, ppg {ppg} samples")
            }
            Violation::WrongLabel { channel } => write!(f, "wrong label on {channel} channel"),
            Violation::EmptyWindow { label } => write!(f, "annotation {label}: end <= start"),
            Violation::Overlap { first, second } => write!(f, "overlap between {first} and {second}"),
            Violation::OutOfSpan { label } => write!(f, "annotation {label} outside signal span"),
            Violation::DuplicateLabel { label } => write!(f, "duplicate annotation label {label}"),
        }
    }
}

/// Checks every session invariant and returns all violations found.
pub fn validate_session(session: &RecordingSession) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let (bp, ppg) = (&session.bp, &session.ppg);

    if bp.label() != SignalLabel::Bp {
        out.push(Violation::WrongLabel { channel: "bp" });
    }
    if ppg.label() != SignalLabel::Ppg {
        out.push(Violation::WrongLabel { channel: "ppg" });
    }
    if bp.sample_rate_hz() != ppg.sample_rate_hz() {
        out.push(Violation::RateMismatch {
            bp: bp.sample_rate_hz(),
            ppg: ppg.sample_rate_hz(),
        });
    }
    if bp.t0_s() != ppg.t0_s() {
        out.push(Violation::StartMismatch {
            bp: bp.t0_s(),
            ppg: ppg.t0_s(),
        });
    }
    if bp.len() != ppg.len() {
        out.push(Violation::LengthMismatch {
            bp: bp.len(),
            ppg: ppg.len(),
        });
    }

    let span_start = bp.t0_s().max(ppg.t0_s());
    let span_end = bp.end_s().min(ppg.end_s());
    let anns = &session.annotations;
    for (i, a) in anns.iter().enumerate() {
        if !(a.end_s > a.start_s) {
            out.push(Violation::EmptyWindow {
                label: a.label.clone(),
            });
        }
        if a.start_s < span_start || a.end_s > span_end {
            out.push(Violation::OutOfSpan {
                label: a.label.clone(),
            });
        }
        for b in &anns[i + 1..] {
            if a.label == b.label {
                out.push(Violation::DuplicateLabel {
                    label: a.label.clone(),
                });
            }
            if a.overlaps(b) {
                out.push(Violation::Overlap {
                    first: a.label.clone(),
                    second: b.label.clone(),
                });
            }
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(bp_len: usize, ppg_len: usize, anns: Vec<IntervalAnnotation>) -> RecordingSession {
        RecordingSession {
            subject_id: "S01".into(),
            bp: UniformSignal::new(100.0, 0.0, vec![80.0; bp_len], SignalLabel::Bp).unwrap(),
            ppg: UniformSignal::new(100.0, 0.0, vec![1.0; ppg_len], SignalLabel::Ppg).unwrap(),
            annotations: anns,
        }
    }

    fn ann(label: &str, kind: IntervalKind, a: f64, b: f64) -> IntervalAnnotation {
        IntervalAnnotation::new(label, kind, a, b).unwrap()
    }

    #[test]
    fn valid_session_passes() {
        let s = session(
            1000,
            1000,
            vec![
                ann("NB1", IntervalKind::NormalBreathing, 0.0, 4.0),
                ann("BH1", IntervalKind::BreathHold, 4.0, 10.0),
            ],
        );
        assert_eq!(validate_session(&s), Ok(()));
    }

    #[test]
    fn length_mismatch_reported() {
        let s = session(1000, 999, vec![]);
        let v = validate_session(&s).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("length mismatch"));
    }

    #[test]
    fn overlapping_windows_reported() {
        let s = session(
            1000,
            1000,
            vec![
                ann("BH1", IntervalKind::BreathHold, 1.0, 5.0),
                ann("NB2", IntervalKind::NormalBreathing, 4.5, 8.0),
            ],
        );
        let v = validate_session(&s).unwrap_err();
        assert!(v.iter().any(|x| x.to_string().contains("overlap")));
    }

    #[test]
    fn annotation_past_end_reported() {
        let s = session(1000, 1000, vec![ann("NB1", IntervalKind::NormalBreathing, 0.0, 10.01)]);
        let v = validate_session(&s).unwrap_err();
        assert!(matches!(v[0], Violation::OutOfSpan { .. }));
    }

    #[test]
    fn signal_constructor_rejects_bad_input() {
        assert!(UniformSignal::new(0.0, 0.0, vec![1.0], SignalLabel::Bp).is_err());
        assert!(UniformSignal::new(100.0, 0.0, vec![], SignalLabel::Bp).is_err());
        assert!(UniformSignal::new(100.0, 0.0, vec![f64::NAN], SignalLabel::Bp).is_err());
    }

    #[test]
    fn series_requires_increasing_times() {
        assert!(BeatFeatureSeries::new(Feature::Sbp, vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(BeatFeatureSeries::new(Feature::Sbp, vec![0.0], vec![1.0, 2.0]).is_err());
        assert!(BeatFeatureSeries::new(Feature::Sbp, vec![0.0, 0.5], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn index_lookup() {
        let s = UniformSignal::new(100.0, 2.0, vec![0.0; 10], SignalLabel::Bp).unwrap();
        assert_eq!(s.index_at(2.03), Some(3));
        assert_eq!(s.index_at(1.99), None);
        assert_eq!(s.first_index_at_or_after(2.03), 3);
        assert_eq!(s.first_index_at_or_after(2.031), 4);
        assert_eq!(s.first_index_at_or_after(0.0), 0);
        assert_eq!(s.first_index_at_or_after(50.0), 10);
    }

    #[test]
    fn map_of_thirds() {
        assert_eq!(mean_arterial_pressure(60.0, 120.0), 80.0);
    }
}
