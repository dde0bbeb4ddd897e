//! Session to per-interval tracks, and per-interval model fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arx::{grid_search, ArxModel, ModelSelectionResult, OrderBounds, Selection};
use crate::beats::{extract_bp_features, extract_ppg_features, PeakDetectionParams, PpgDetectionParams};
use crate::error::{Error, Result};
use crate::model::{BeatFeatureSeries, Feature, IntervalKind, RecordingSession};
use crate::spline::{spline_resample, ResampleGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub bp: PeakDetectionParams,
    pub ppg: PpgDetectionParams,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            bp: PeakDetectionParams::bp_default(),
            ppg: PpgDetectionParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectFeatures {
    pub sbp: BeatFeatureSeries,
    pub dbp: BeatFeatureSeries,
    pub map: BeatFeatureSeries,
    pub ppg_peak: BeatFeatureSeries,
    pub ppg_trough: BeatFeatureSeries,
}

pub fn extract_features(session: &RecordingSession, detection: &DetectionConfig) -> Result<SubjectFeatures> {
    let bp = extract_bp_features(&session.bp, &detection.bp)?;
    let ppg_params = detection.ppg.resolve(session.ppg.values())?;
    let ppg = extract_ppg_features(&session.ppg, &ppg_params)?;
    Ok(SubjectFeatures {
        sbp: bp.sbp,
        dbp: bp.dbp,
        map: bp.map,
        ppg_peak: ppg.peaks,
        ppg_trough: ppg.troughs,
    })
}

/// One annotation window cut from the full-record tracks. All tracks share
/// the sample range `start_index..start_index + len` of the recording.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalTracks {
    pub label: String,
    pub kind: IntervalKind,
    pub start_index: usize,
    pub sample_rate_hz: f64,
    pub sbp: Vec<f64>,
    pub dbp: Vec<f64>,
    pub map: Vec<f64>,
    pub ppg_peak: Vec<f64>,
    pub ppg_trough: Vec<f64>,
    /// Local indices of SBP beats inside the window.
    pub sbp_beats: Vec<usize>,
    /// Local indices of DBP (and MAP) beats inside the window.
    pub dbp_beats: Vec<usize>,
}

impl IntervalTracks {
    pub fn len(&self) -> usize {
        self.sbp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sbp.is_empty()
    }

    /// `(y, u)` pair modelled for a BP feature. MAP has no direct model.
    pub fn pair(&self, feature: Feature) -> Option<(&[f64], &[f64])> {
        match feature {
            Feature::Sbp => Some((&self.sbp, &self.ppg_peak)),
            Feature::Dbp => Some((&self.dbp, &self.ppg_trough)),
            _ => None,
        }
    }

    pub fn beats(&self, feature: Feature) -> &[usize] {
        match feature {
            Feature::Sbp => &self.sbp_beats,
            _ => &self.dbp_beats,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSubject {
    pub subject_id: String,
    pub features: SubjectFeatures,
    pub intervals: Vec<IntervalTracks>,
    /// Windows with no samples inside the common track span.
    pub skipped: Vec<String>,
}

impl PreparedSubject {
    pub fn interval(&self, label: &str) -> Option<&IntervalTracks> {
        self.intervals.iter().find(|t| t.label == label)
    }
}

/// Extracts features, resamples each series over the whole recording once,
/// and cuts every annotation window to the span covered by all five tracks.
pub fn prepare_subject(session: &RecordingSession, detection: &DetectionConfig) -> Result<PreparedSubject> {
    let features = extract_features(session, detection)?;
    let sig = &session.bp;
    let (rate, t0) = (sig.sample_rate_hz(), sig.t0_s());
    let grid = ResampleGrid::new(rate, t0, sig.end_s())?;
    let series = [
        &features.sbp,
        &features.dbp,
        &features.map,
        &features.ppg_peak,
        &features.ppg_trough,
    ];
    let tracks = series
        .iter()
        .map(|s| spline_resample(s, &grid))
        .collect::<Result<Vec<_>>>()?;

    // knots sit on sample times, so every track starts on the sample lattice
    let to_index = |t: f64| ((t - t0) * rate).round() as usize;
    let offsets: Vec<usize> = tracks.iter().map(|t| to_index(t.start_s)).collect();
    let lo = *offsets.iter().max().unwrap_or(&0);
    let hi = tracks
        .iter()
        .zip(&offsets)
        .map(|(t, o)| o + t.len())
        .min()
        .unwrap_or(0);

    let boundary = |t: f64| ((t - t0) * rate - 1e-9).ceil().max(0.0) as usize;
    let beats_in = |s: &BeatFeatureSeries, a: usize, b: usize| -> Vec<usize> {
        s.times_s()
            .iter()
            .map(|&t| to_index(t))
            .filter(|&m| m >= a && m < b)
            .map(|m| m - a)
            .collect()
    };

    let mut intervals = Vec::new();
    let mut skipped = Vec::new();
    for ann in &session.annotations {
        let a = boundary(ann.start_s).max(lo);
        let b = boundary(ann.end_s).min(hi);
        if b <= a {
            skipped.push(ann.label.clone());
            continue;
        }
        let cut = |k: usize| tracks[k].values[a - offsets[k]..b - offsets[k]].to_vec();
        intervals.push(IntervalTracks {
            label: ann.label.clone(),
            kind: ann.kind,
            start_index: a,
            sample_rate_hz: rate,
            sbp: cut(0),
            dbp: cut(1),
            map: cut(2),
            ppg_peak: cut(3),
            ppg_trough: cut(4),
            sbp_beats: beats_in(&features.sbp, a, b),
            dbp_beats: beats_in(&features.dbp, a, b),
        });
    }
    Ok(PreparedSubject {
        subject_id: session.subject_id.clone(),
        features,
        intervals,
        skipped,
    })
}

/// Grid-search outcomes of one interval; a failed fit keeps its error text.
#[derive(Debug, Clone)]
pub struct IntervalFit {
    pub label: String,
    pub kind: IntervalKind,
    pub sbp: std::result::Result<ModelSelectionResult, String>,
    pub dbp: std::result::Result<ModelSelectionResult, String>,
}

impl IntervalFit {
    pub fn models(&self, selection: Selection) -> IntervalModels {
        IntervalModels {
            label: self.label.clone(),
            kind: self.kind,
            sbp: self.sbp.as_ref().ok().map(|r| r.best(selection).clone()),
            dbp: self.dbp.as_ref().ok().map(|r| r.best(selection).clone()),
        }
    }
}

pub fn fit_interval(tracks: &IntervalTracks, bounds: &OrderBounds) -> IntervalFit {
    let fit = |y: &[f64], u: &[f64]| grid_search(y, u, bounds).map_err(|e| e.to_string());
    IntervalFit {
        label: tracks.label.clone(),
        kind: tracks.kind,
        sbp: fit(&tracks.sbp, &tracks.ppg_peak),
        dbp: fit(&tracks.dbp, &tracks.ppg_trough),
    }
}

/// Fits every interval of a subject; order follows the annotations.
pub fn fit_subject(prepared: &PreparedSubject, bounds: &OrderBounds) -> Result<Vec<IntervalFit>> {
    bounds.validate()?;
    Ok(prepared
        .intervals
        .par_iter()
        .map(|t| fit_interval(t, bounds))
        .collect())
}

/// Selected models of one interval, as consumed by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalModels {
    pub label: String,
    pub kind: IntervalKind,
    pub sbp: Option<ArxModel>,
    pub dbp: Option<ArxModel>,
}

impl IntervalModels {
    pub fn get(&self, feature: Feature) -> Option<&ArxModel> {
        match feature {
            Feature::Sbp => self.sbp.as_ref(),
            Feature::Dbp => self.dbp.as_ref(),
            _ => None,
        }
    }
}

/// Fails with a named error when a model needed for `label` is missing.
pub fn require_model<'a>(models: &'a [IntervalModels], label: &str, feature: Feature) -> Result<&'a ArxModel> {
    models
        .iter()
        .find(|m| m.label == label)
        .and_then(|m| m.get(feature))
        .ok_or_else(|| Error::InvalidConfig {
            field: "models".into(),
            reason: format!("no {feature} model for interval {label}"),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_session, ProtocolConfig};

    fn short() -> ProtocolConfig {
        ProtocolConfig {
            baseline_nb_s: 20.0,
            n_breath_holds: 2,
            bh_duration_range_s: (15.0, 25.0),
            inter_bh_recovery_s: 30.0,
            final_nb_s: 20.0,
            ..ProtocolConfig::default()
        }
    }

    #[test]
    fn windows_are_cut_from_common_span() {
        let (s, truth) = generate_session(&short(), "S01").unwrap();
        let p = prepare_subject(&s, &DetectionConfig::default()).unwrap();
        assert_eq!(p.intervals.len(), s.annotations.len());
        assert!(p.skipped.is_empty());
        // interior windows keep their full sample range
        let nb2 = p.interval("NB2").unwrap();
        let ann = s.annotations.iter().find(|a| a.label == "NB2").unwrap();
        assert_eq!(nb2.start_index, (ann.start_s * 100.0).round() as usize);
        assert_eq!(nb2.len(), (ann.duration_s() * 100.0).round() as usize);
        // first window is trimmed to the first DBP knot (later than first SBP)
        let nb1 = &p.intervals[0];
        assert_eq!(nb1.start_index, truth.trough_indices[0]);
        // tracks pass through the knots
        for &j in &nb2.sbp_beats {
            let k = truth.peak_indices.iter().position(|&q| q == nb2.start_index + j).unwrap();
            assert!((nb2.sbp[j] - truth.sbp[k]).abs() < 1e-9);
        }
        // consecutive windows tile the span without gaps
        for w in p.intervals.windows(2) {
            assert_eq!(w[0].start_index + w[0].len(), w[1].start_index);
        }
    }

    #[test]
    fn every_interval_gets_two_models() {
        let (s, _) = generate_session(&short(), "S01").unwrap();
        let p = prepare_subject(&s, &DetectionConfig::default()).unwrap();
        let fits = fit_subject(&p, &OrderBounds::default()).unwrap();
        assert_eq!(fits.len(), 5);
        for f in &fits {
            let m = f.models(Selection::Mse);
            assert!(m.sbp.is_some() && m.dbp.is_some(), "{}", f.label);
            assert_eq!(f.sbp.as_ref().unwrap().grid.len(), 150);
        }
        let models: Vec<_> = fits.iter().map(|f| f.models(Selection::Aic)).collect();
        assert!(require_model(&models, "BH2", Feature::Dbp).is_ok());
        assert!(require_model(&models, "BH9", Feature::Sbp).unwrap_err().to_string().contains("BH9"));
    }
}
