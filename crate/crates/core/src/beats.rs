//! Beat detection and SBP / DBP / MAP / PPG feature extraction.
//!
//! Peak semantics follow the classic `findpeaks` procedure:
//!
//! 1. candidates are local maxima: a sample, or a run of equal samples,
//!    whose neighbours on both sides are strictly lower. A flat run reports
//!    its first index. Edge samples never qualify;
//! 2. candidates below `min_peak_height` or with topographic prominence below
//!    `min_peak_prominence` are dropped;
//! 3. survivors are accepted in descending value order (ties: earlier index
//!    first), discarding any candidate closer than `min_peak_distance_samples`
//!    to an already accepted peak.
//!
//! Prominence is the peak value minus the higher of the two reference minima,
//! each taken between the peak and the nearest strictly higher sample on that
//! side (or the signal edge when there is none).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mean_arterial_pressure, BeatFeatureSeries, Feature, SignalLabel, UniformSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakDetectionParams {
    pub min_peak_height: f64,
    pub min_peak_prominence: f64,
    pub min_peak_distance_samples: usize,
}

impl PeakDetectionParams {
    pub fn new(min_peak_height: f64, min_peak_prominence: f64, min_peak_distance_samples: usize) -> Result<Self> {
        let p = Self {
            min_peak_height,
            min_peak_prominence,
            min_peak_distance_samples,
        };
        p.validate()?;
        Ok(p)
    }

    /// BP defaults: 15 mmHg height, 15 mmHg prominence, 20 samples apart.
    pub fn bp_default() -> Self {
        Self {
            min_peak_height: 15.0,
            min_peak_prominence: 15.0,
            min_peak_distance_samples: 20,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_peak_distance_samples < 1 {
            return Err(Error::InvalidConfig {
                field: "distance_samples".into(),
                reason: "must be >= 1".into(),
            });
        }
        if !self.min_peak_height.is_finite() {
            return Err(Error::InvalidConfig {
                field: "height".into(),
                reason: "must be finite".into(),
            });
        }
        if !self.min_peak_prominence.is_finite() {
            return Err(Error::InvalidConfig {
                field: "prominence".into(),
                reason: "must be finite".into(),
            });
        }
        Ok(())
    }
}

/// How PPG height / prominence thresholds are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "value", rename_all = "kebab-case")]
pub enum PpgThreshold {
    /// Segment median (height only).
    Median,
    /// Fraction of the segment's interquartile range (prominence only).
    IqrFraction(f64),
    Absolute(f64),
}

/// PPG thresholds are device-relative, so they are resolved per segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpgDetectionParams {
    pub height: PpgThreshold,
    pub prominence: PpgThreshold,
    pub distance_samples: usize,
}

impl Default for PpgDetectionParams {
    fn default() -> Self {
        Self {
            height: PpgThreshold::Median,
            prominence: PpgThreshold::IqrFraction(0.5),
            distance_samples: 20,
        }
    }
}

impl PpgDetectionParams {
    pub fn resolve(&self, signal: &[f64]) -> Result<PeakDetectionParams> {
        let mut sorted = signal.to_vec();
        sorted.sort_by(f64::total_cmp);
        let value = |rule: PpgThreshold| match rule {
            PpgThreshold::Median => quantile_sorted(&sorted, 0.5),
            PpgThreshold::IqrFraction(f) => f * (quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25)),
            PpgThreshold::Absolute(v) => v,
        };
        PeakDetectionParams::new(value(self.height), value(self.prominence), self.distance_samples)
    }
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Sparse table for O(1) range-minimum queries.
struct RangeMin {
    levels: Vec<Vec<f64>>,
}

impl RangeMin {
    fn new(x: &[f64]) -> Self {
        let mut levels = vec![x.to_vec()];
        let mut width = 1;
        while 2 * width <= x.len() {
            let prev = levels.last().unwrap();
            let next: Vec<f64> = (0..=x.len() - 2 * width)
                .map(|i| prev[i].min(prev[i + width]))
                .collect();
            levels.push(next);
            width *= 2;
        }
        Self { levels }
    }

    /// Minimum of `x[lo..=hi]`.
    fn query(&self, lo: usize, hi: usize) -> f64 {
        let len = hi - lo + 1;
        let k = (usize::BITS - 1 - len.leading_zeros()) as usize;
        self.levels[k][lo].min(self.levels[k][hi + 1 - (1 << k)])
    }
}

/// Indices of local maxima; a flat top reports its first sample.
pub fn local_maxima(x: &[f64]) -> Vec<usize> {
    let n = x.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        if x[i - 1] < x[i] {
            let mut j = i;
            while j + 1 < n && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < n && x[j + 1] < x[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of each index in `peaks`.
pub fn prominences(x: &[f64], peaks: &[usize]) -> Vec<f64> {
    let n = x.len();
    if peaks.is_empty() {
        return Vec::new();
    }
    // nearest strictly greater sample to the left / right of every index
    let mut prev_greater = vec![usize::MAX; n];
    let mut stack: Vec<usize> = Vec::new();
    for i in 0..n {
        while let Some(&top) = stack.last() {
            if x[top] > x[i] {
                break;
            }
            stack.pop();
        }
        if let Some(&top) = stack.last() {
            prev_greater[i] = top;
        }
        stack.push(i);
    }
    let mut next_greater = vec![usize::MAX; n];
    stack.clear();
    for i in (0..n).rev() {
        while let Some(&top) = stack.last() {
            if x[top] > x[i] {
                break;
            }
            stack.pop();
        }
        if let Some(&top) = stack.last() {
            next_greater[i] = top;
        }
        stack.push(i);
    }
    let rmq = RangeMin::new(x);
    peaks
        .iter()
        .map(|&p| {
            let left = if prev_greater[p] == usize::MAX { 0 } else { prev_greater[p] + 1 };
            let right = if next_greater[p] == usize::MAX { n - 1 } else { next_greater[p] - 1 };
            let base = rmq.query(left, p).max(rmq.query(p, right));
            x[p] - base
        })
        .collect()
}

/// Accepted peak indices (ascending) under the module-level semantics.
pub fn find_peak_indices(x: &[f64], params: &PeakDetectionParams) -> Vec<usize> {
    let candidates = local_maxima(x);
    let proms = prominences(x, &candidates);
    let mut kept: Vec<usize> = candidates
        .iter()
        .zip(&proms)
        .filter(|&(&i, &p)| x[i] >= params.min_peak_height && p >= params.min_peak_prominence)
        .map(|(&i, _)| i)
        .collect();

    let d = params.min_peak_distance_samples;
    if d <= 1 || kept.len() < 2 {
        return kept;
    }
    // stable sort keeps the earlier index first among equal values
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| x[kept[b]].total_cmp(&x[kept[a]]));
    let mut removed = vec![false; kept.len()];
    for &o in &order {
        if removed[o] {
            continue;
        }
        let centre = kept[o];
        // kept is ascending, so neighbours within distance are contiguous
        let mut j = o;
        while j > 0 && centre - kept[j - 1] < d {
            j -= 1;
            removed[j] = true;
        }
        let mut j = o + 1;
        while j < kept.len() && kept[j] - centre < d {
            removed[j] = true;
            j += 1;
        }
    }
    let mut idx = 0;
    kept.retain(|_| {
        let keep = !removed[idx];
        idx += 1;
        keep
    });
    kept
}

pub fn detect_peaks(signal: &UniformSignal, params: &PeakDetectionParams) -> Result<BeatFeatureSeries> {
    if signal.len() < 3 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            min: 3,
        });
    }
    params.validate()?;
    let idx = find_peak_indices(signal.values(), params);
    let feature = match signal.label() {
        SignalLabel::Bp => Feature::Sbp,
        SignalLabel::Ppg => Feature::PpgPeak,
    };
    series_at(signal, feature, &idx)
}

fn series_at(signal: &UniformSignal, feature: Feature, idx: &[usize]) -> Result<BeatFeatureSeries> {
    BeatFeatureSeries::new(
        feature,
        idx.iter().map(|&m| signal.time_at(m)).collect(),
        idx.iter().map(|&m| signal.values()[m]).collect(),
    )
}

/// Index of the minimum strictly between consecutive peaks, earliest on ties.
pub fn trough_indices_between(x: &[f64], peak_idx: &[usize]) -> Vec<usize> {
    peak_idx
        .windows(2)
        .filter(|w| w[1] > w[0] + 1)
        .map(|w| {
            let mut best = w[0] + 1;
            for i in w[0] + 2..w[1] {
                if x[i] < x[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

pub fn detect_troughs_between_peaks(signal: &UniformSignal, peaks: &BeatFeatureSeries) -> Result<BeatFeatureSeries> {
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            required: 2,
        });
    }
    let idx = peaks
        .times_s()
        .iter()
        .map(|&t| {
            signal
                .index_at(t)
                .ok_or_else(|| Error::InvalidSeries(format!("peak time {t} outside signal")))
        })
        .collect::<Result<Vec<_>>>()?;
    if idx.windows(2).any(|w| w[1] <= w[0] + 1) {
        return Err(Error::InvalidSeries("adjacent peaks leave no room for a trough".into()));
    }
    let feature = match signal.label() {
        SignalLabel::Bp => Feature::Dbp,
        SignalLabel::Ppg => Feature::PpgTrough,
    };
    series_at(signal, feature, &trough_indices_between(signal.values(), &idx))
}

/// SBP, DBP and MAP beat series from a BP waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct BpFeatures {
    pub sbp: BeatFeatureSeries,
    pub dbp: BeatFeatureSeries,
    pub map: BeatFeatureSeries,
}

pub fn extract_bp_features(bp: &UniformSignal, params: &PeakDetectionParams) -> Result<BpFeatures> {
    if bp.label() != SignalLabel::Bp {
        return Err(Error::WrongLabel {
            expected: "BP",
            got: bp.label().as_str(),
        });
    }
    let sbp = detect_peaks(bp, params)?;
    if sbp.len() < 2 {
        return Err(Error::TooFewPeaks {
            found: sbp.len(),
            required: 2,
        });
    }
    let dbp = detect_troughs_between_peaks(bp, &sbp)?;
    // each DBP pairs with the SBP that precedes it
    let map_values = dbp
        .values()
        .iter()
        .zip(sbp.values())
        .map(|(&d, &s)| mean_arterial_pressure(d, s))
        .collect();
    let map = BeatFeatureSeries::new(Feature::Map, dbp.times_s().to_vec(), map_values)?;
    Ok(BpFeatures { sbp, dbp, map })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpgFeatures {
    pub peaks: BeatFeatureSeries,
    pub troughs: BeatFeatureSeries,
}

pub fn extract_ppg_features(ppg: &UniformSignal, params: &PeakDetectionParams) -> Result<PpgFeatures> {
    if ppg.label() != SignalLabel::Ppg {
        return Err(Error::WrongLabel {
            expected: "PPG",
            got: ppg.label().as_str(),
        });
    }
    let peaks = detect_peaks(ppg, params)?;
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks {
            found: peaks.len(),
            required: 2,
        });
    }
    let troughs = detect_troughs_between_peaks(ppg, &peaks)?;
    Ok(PpgFeatures { peaks, troughs })
}
