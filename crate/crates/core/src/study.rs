//! End-to-end runs: sessions in, error report out.

use rayon::prelude::*;

use crate::arx::{OrderBounds, Selection};
use crate::error::Result;
use crate::eval::{evaluate_subject, summarize, ErrorMetric, ErrorReport, ErrorSeries};
use crate::model::RecordingSession;
use crate::pipeline::{fit_subject, prepare_subject, DetectionConfig, IntervalFit, PreparedSubject};
use crate::synth::{generate_session, subject_config, GroundTruth, ProtocolConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub detection: DetectionConfig,
    pub bounds: OrderBounds,
    pub selection: Selection,
    pub metric: ErrorMetric,
    pub alpha: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            detection: DetectionConfig::default(),
            bounds: OrderBounds::default(),
            selection: Selection::Mse,
            metric: ErrorMetric::FreeRun,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubjectRun {
    pub prepared: PreparedSubject,
    pub fits: Vec<IntervalFit>,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub subjects: Vec<SubjectRun>,
    pub series: Vec<ErrorSeries>,
    pub report: ErrorReport,
    pub warnings: Vec<String>,
}

/// `S01`, `S02`, ...
pub fn subject_id(index: usize) -> String {
    format!("S{:02}", index + 1)
}

/// Sessions for `n` subjects derived from one base config.
pub fn synthetic_cohort(base: &ProtocolConfig, n: usize) -> Result<Vec<(RecordingSession, GroundTruth)>> {
    (0..n)
        .into_par_iter()
        .map(|i| generate_session(&subject_config(base, i), &subject_id(i)))
        .collect()
}

/// Extract, fit and evaluate every session; subject order is preserved.
pub fn run_study(sessions: &[RecordingSession], cfg: &StudyConfig) -> Result<StudyOutcome> {
    let runs: Vec<(SubjectRun, Vec<ErrorSeries>, Vec<String>)> = sessions
        .par_iter()
        .map(|s| -> Result<_> {
            let prepared = prepare_subject(s, &cfg.detection)?;
            let fits = fit_subject(&prepared, &cfg.bounds)?;
            let mut warnings: Vec<String> = prepared
                .skipped
                .iter()
                .map(|l| format!("{} {l}: window outside the feature span", s.subject_id))
                .collect();
            for f in &fits {
                for (name, r) in [("SBP", &f.sbp), ("DBP", &f.dbp)] {
                    if let Err(e) = r {
                        warnings.push(format!("{} {name} {}: {e}", s.subject_id, f.label));
                    }
                }
            }
            let models: Vec<_> = fits.iter().map(|f| f.models(cfg.selection)).collect();
            let ev = evaluate_subject(&prepared, &models, cfg.metric);
            warnings.extend(ev.warnings);
            Ok((SubjectRun { prepared, fits }, ev.series, warnings))
        })
        .collect::<Result<_>>()?;
    let mut subjects = Vec::with_capacity(runs.len());
    let mut series = Vec::new();
    let mut warnings = Vec::new();
    for (run, s, w) in runs {
        subjects.push(run);
        series.extend(s);
        warnings.extend(w);
    }
    let report = summarize(&series, cfg.metric, cfg.alpha)?;
    Ok(StudyOutcome {
        subjects,
        series,
        report,
        warnings,
    })
}
