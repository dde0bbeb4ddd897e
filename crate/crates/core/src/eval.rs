//! Model and prediction errors, pooled summary tables and subject consistency.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arx::{one_step_predict, simulate_free_run, ArxModel};
use crate::error::{Error, Result};
use crate::model::{mean_arterial_pressure, Feature, IntervalKind};
use crate::pipeline::{IntervalModels, IntervalTracks, PreparedSubject};
use crate::stats::{tukey_kramer, Anova, ResidualSummary};

/// How a model produces its estimate of the output track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// Output simulated from the input alone, seeded with the first `m0` measured samples.
    #[default]
    FreeRun,
    /// Each sample predicted from measured past outputs.
    OneStep,
}

impl ErrorMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorMetric::FreeRun => "free-run",
            ErrorMetric::OneStep => "one-step",
        }
    }
}

impl std::str::FromStr for ErrorMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free-run" => Ok(Self::FreeRun),
            "one-step" => Ok(Self::OneStep),
            _ => Err(Error::InvalidConfig {
                field: "error_metric".into(),
                reason: format!("expected free-run or one-step, got {s:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    /// Model applied to the interval it was fitted on.
    Model,
    /// Model applied to another interval of the same kind.
    Prediction,
}

impl ErrorType {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorType::Model => "model",
            ErrorType::Prediction => "prediction",
        }
    }
}

/// `(m0, estimates for samples m0..N)`.
pub fn estimate(model: &ArxModel, y: &[f64], u: &[f64], metric: ErrorMetric) -> Result<(usize, Vec<f64>)> {
    let m0 = model.warmup();
    if y.len() != u.len() {
        return Err(Error::LengthMismatch(format!("y has {} samples, u has {}", y.len(), u.len())));
    }
    if y.len() <= m0 {
        return Err(Error::SignalTooShort {
            len: y.len(),
            min: m0 + 1,
        });
    }
    let values = match metric {
        ErrorMetric::OneStep => one_step_predict(model, y, u)?,
        ErrorMetric::FreeRun => {
            let run = simulate_free_run(model, &y[..m0], u)?;
            if run.diverged {
                return Err(Error::Diverged { steps: run.values.len() });
            }
            run.values
        }
    };
    Ok((m0, values))
}

/// `y - y_hat` over samples `m0..N`.
pub fn residuals(model: &ArxModel, y: &[f64], u: &[f64], metric: ErrorMetric) -> Result<Vec<f64>> {
    let (m0, est) = estimate(model, y, u, metric)?;
    Ok(y[m0..].iter().zip(&est).map(|(a, b)| a - b).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub subject_id: String,
    pub kind: IntervalKind,
    pub feature: Feature,
    pub error_type: ErrorType,
    /// Interval the residuals were measured on.
    pub interval_label: String,
    /// Interval whose model produced the estimate.
    pub source_model_label: String,
    /// Every sample after warm-up.
    pub residuals: Vec<f64>,
    /// Residuals at the beat positions of the feature.
    pub beat_residuals: Vec<f64>,
}

fn missing(label: &str, feature: Feature) -> Error {
    Error::InvalidConfig {
        field: "models".into(),
        reason: format!("no {feature} model for interval {label}"),
    }
}

/// Residuals of `feature` on `target` using the models of `source`. MAP is
/// estimated from the SBP and DBP estimates, aligned at the later warm-up.
pub fn error_series(
    subject_id: &str,
    source: &IntervalModels,
    target: &IntervalTracks,
    feature: Feature,
    metric: ErrorMetric,
) -> Result<ErrorSeries> {
    let get = |f: Feature| source.get(f).ok_or_else(|| missing(&source.label, f));
    let (start, residuals) = match feature {
        Feature::Sbp | Feature::Dbp => {
            let (y, u) = target.pair(feature).expect("BP feature");
            let (m0, est) = estimate(get(feature)?, y, u, metric)?;
            (m0, y[m0..].iter().zip(&est).map(|(a, b)| a - b).collect::<Vec<_>>())
        }
        Feature::Map => {
            let (ms, s) = estimate(get(Feature::Sbp)?, &target.sbp, &target.ppg_peak, metric)?;
            let (md, d) = estimate(get(Feature::Dbp)?, &target.dbp, &target.ppg_trough, metric)?;
            let start = ms.max(md);
            let r = (start..target.len())
                .map(|m| target.map[m] - mean_arterial_pressure(d[m - md], s[m - ms]))
                .collect();
            (start, r)
        }
        other => {
            return Err(Error::InvalidSeries(format!("{other} is not a modelled feature")));
        }
    };
    if residuals.is_empty() {
        return Err(Error::EmptyResiduals);
    }
    let beat_residuals = target
        .beats(feature)
        .iter()
        .filter(|&&b| b >= start)
        .map(|&b| residuals[b - start])
        .collect();
    Ok(ErrorSeries {
        subject_id: subject_id.to_string(),
        kind: target.kind,
        feature,
        error_type: if source.label == target.label {
            ErrorType::Model
        } else {
            ErrorType::Prediction
        },
        interval_label: target.label.clone(),
        source_model_label: source.label.clone(),
        residuals,
        beat_residuals,
    })
}

/// Model error of an interval's own models on its own tracks.
pub fn model_error_series(
    subject_id: &str,
    models: &IntervalModels,
    tracks: &IntervalTracks,
    feature: Feature,
    metric: ErrorMetric,
) -> Result<ErrorSeries> {
    if models.label != tracks.label {
        return Err(Error::InvalidConfig {
            field: "models".into(),
            reason: format!("models of {} applied to {}", models.label, tracks.label),
        });
    }
    error_series(subject_id, models, tracks, feature, metric)
}

/// Every source model of `kind` applied to every other interval of `kind`.
/// Pairs that cannot be evaluated are skipped and reported as warnings.
pub fn cross_prediction_matrix(
    subject_id: &str,
    models: &[IntervalModels],
    tracks: &[IntervalTracks],
    kind: IntervalKind,
    feature: Feature,
    metric: ErrorMetric,
) -> (Vec<ErrorSeries>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for target in tracks.iter().filter(|t| t.kind == kind) {
        for source in models.iter().filter(|m| m.kind == kind && m.label != target.label) {
            match error_series(subject_id, source, target, feature, metric) {
                Ok(s) => out.push(s),
                Err(e) => warnings.push(format!(
                    "{subject_id} {feature} {} -> {}: {e}",
                    source.label, target.label
                )),
            }
        }
    }
    (out, warnings)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SubjectEvaluation {
    pub series: Vec<ErrorSeries>,
    pub warnings: Vec<String>,
}

/// Model and prediction errors of all BP features for one subject.
pub fn evaluate_subject(prepared: &PreparedSubject, models: &[IntervalModels], metric: ErrorMetric) -> SubjectEvaluation {
    let id = prepared.subject_id.as_str();
    let mut ev = SubjectEvaluation::default();
    for kind in [IntervalKind::NormalBreathing, IntervalKind::BreathHold] {
        for feature in Feature::BP_FEATURES {
            for tracks in prepared.intervals.iter().filter(|t| t.kind == kind) {
                let Some(m) = models.iter().find(|m| m.label == tracks.label) else {
                    ev.warnings.push(format!("{id} {feature} {}: no models", tracks.label));
                    continue;
                };
                match model_error_series(id, m, tracks, feature, metric) {
                    Ok(s) => ev.series.push(s),
                    Err(e) => ev.warnings.push(format!("{id} {feature} {}: {e}", tracks.label)),
                }
            }
            let (s, w) = cross_prediction_matrix(id, models, &prepared.intervals, kind, feature, metric);
            ev.series.extend(s);
            ev.warnings.extend(w);
        }
    }
    ev
}

/// Orders labels like `NB2` before `NB10`.
pub fn label_order(a: &str, b: &str) -> Ordering {
    let split = |s: &str| {
        let digits = s.len() - s.bytes().rev().take_while(u8::is_ascii_digit).count();
        let (p, n) = s.split_at(digits);
        (p.to_string(), n.parse::<u64>().ok())
    };
    split(a).cmp(&split(b)).then_with(|| a.cmp(b))
}

/// Summary of the concatenation of `parts` (two passes, fixed order).
pub fn pooled_summary(parts: &[&[f64]]) -> Result<ResidualSummary> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    if n == 0 {
        return Err(Error::EmptyResiduals);
    }
    let (mut sum, mut ss) = (0.0, 0.0);
    for p in parts {
        for r in *p {
            sum += r;
            ss += r * r;
        }
    }
    let mean = sum / n as f64;
    let mut dev = 0.0;
    for p in parts {
        for r in *p {
            dev += (r - mean) * (r - mean);
        }
    }
    Ok(ResidualSummary {
        n,
        rmse: (ss / n as f64).sqrt(),
        mean,
        std: if n > 1 { (dev / (n - 1) as f64).sqrt() } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub feature: Feature,
    pub interval_label: String,
    pub n_series: usize,
    #[serde(flatten)]
    pub summary: ResidualSummary,
}

/// Features x intervals. Model tables are keyed by the interval; prediction
/// tables by the source model's interval, pooling all its targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub kind: IntervalKind,
    pub error_type: ErrorType,
    pub columns: Vec<String>,
    pub cells: Vec<TableCell>,
}

impl ErrorTable {
    pub fn cell(&self, feature: Feature, label: &str) -> Option<&TableCell> {
        self.cells
            .iter()
            .find(|c| c.feature == feature && c.interval_label == label)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["feature".to_string()];
        header.extend(self.columns.iter().cloned());
        wr.write_record(&header)?;
        for f in Feature::BP_FEATURES {
            let mut row = vec![f.as_str().to_string()];
            for c in &self.columns {
                row.push(self.cell(f, c).map(|c| c.summary.rmse.to_string()).unwrap_or_default());
            }
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCount {
    pub subjects: usize,
    pub comparisons: usize,
    pub significant: usize,
    pub anova: Anova,
    pub significant_pairs: Vec<(String, String)>,
}

/// One-way ANOVA across subjects followed by Tukey-Kramer at `alpha`.
pub fn subject_consistency(groups: &[(String, Vec<f64>)], alpha: f64) -> Result<ConsistencyCount> {
    for (name, g) in groups {
        if g.len() < 2 {
            return Err(Error::GroupTooSmall {
                group: name.clone(),
                len: g.len(),
            });
        }
    }
    let slices: Vec<&[f64]> = groups.iter().map(|(_, g)| g.as_slice()).collect();
    let (anova, pairs) = tukey_kramer(&slices, alpha)?;
    let significant_pairs: Vec<(String, String)> = pairs
        .iter()
        .filter(|p| p.significant)
        .map(|p| (groups[p.first].0.clone(), groups[p.second].0.clone()))
        .collect();
    Ok(ConsistencyCount {
        subjects: groups.len(),
        comparisons: pairs.len(),
        significant: significant_pairs.len(),
        anova,
        significant_pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCell {
    pub kind: IntervalKind,
    pub error_type: ErrorType,
    pub feature: Feature,
    #[serde(flatten)]
    pub count: ConsistencyCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub alpha: f64,
    pub cells: Vec<ConsistencyCell>,
    pub comparisons: usize,
    pub significant: usize,
    pub fraction: f64,
}

impl ConsistencyReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "kind",
            "error_type",
            "feature",
            "subjects",
            "comparisons",
            "significant",
            "anova_f",
            "anova_p",
        ])?;
        for c in &self.cells {
            wr.write_record([
                c.kind.as_str().to_string(),
                c.error_type.as_str().to_string(),
                c.feature.as_str().to_string(),
                c.count.subjects.to_string(),
                c.count.comparisons.to_string(),
                c.count.significant.to_string(),
                c.count.anova.f.to_string(),
                c.count.anova.p_value.to_string(),
            ])?;
        }
        let subjects = self.cells.first().map(|c| c.count.subjects).unwrap_or(0);
        wr.write_record([
            "all".to_string(),
            "all".to_string(),
            "all".to_string(),
            subjects.to_string(),
            self.comparisons.to_string(),
            self.significant.to_string(),
            String::new(),
            String::new(),
        ])?;
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub metric: ErrorMetric,
    pub subjects: Vec<String>,
    /// NB model, BH model, NB prediction, BH prediction.
    pub tables: Vec<ErrorTable>,
    pub consistency: Option<ConsistencyReport>,
    pub consistency_note: Option<String>,
}

impl ErrorReport {
    pub fn table(&self, kind: IntervalKind, error_type: ErrorType) -> Option<&ErrorTable> {
        self.tables
            .iter()
            .find(|t| t.kind == kind && t.error_type == error_type)
    }

    /// Long format: kind, error_type, feature, interval, statistic, value.
    pub fn write_plot_data<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["kind", "error_type", "feature", "interval", "statistic", "value"])?;
        for t in &self.tables {
            for c in &t.cells {
                let s = &c.summary;
                for (name, v) in [
                    ("rmse", s.rmse),
                    ("mean", s.mean),
                    ("std", s.std),
                    ("n", s.n as f64),
                ] {
                    wr.write_record([
                        t.kind.as_str(),
                        t.error_type.as_str(),
                        c.feature.as_str(),
                        c.interval_label.as_str(),
                        name,
                        &v.to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}

const KINDS: [IntervalKind; 2] = [IntervalKind::NormalBreathing, IntervalKind::BreathHold];
const ERROR_TYPES: [ErrorType; 2] = [ErrorType::Model, ErrorType::Prediction];

fn column_label(s: &ErrorSeries) -> &str {
    match s.error_type {
        ErrorType::Model => &s.interval_label,
        ErrorType::Prediction => &s.source_model_label,
    }
}

/// Pools residuals across subjects (and prediction targets) per cell. The
/// input order does not matter: series are sorted before any reduction.
pub fn summarize(series: &[ErrorSeries], metric: ErrorMetric, alpha: f64) -> Result<ErrorReport> {
    let mut sorted: Vec<&ErrorSeries> = series.iter().collect();
    sorted.sort_by(|a, b| {
        (a.kind, a.error_type, a.feature)
            .cmp(&(b.kind, b.error_type, b.feature))
            .then_with(|| label_order(column_label(a), column_label(b)))
            .then_with(|| label_order(&a.subject_id, &b.subject_id))
            .then_with(|| label_order(&a.interval_label, &b.interval_label))
    });
    let mut subjects: Vec<String> = series.iter().map(|s| s.subject_id.clone()).collect();
    subjects.sort_by(|a, b| label_order(a, b));
    subjects.dedup();

    let mut tables = Vec::new();
    for error_type in ERROR_TYPES {
        for kind in KINDS {
            let in_table: Vec<&ErrorSeries> = sorted
                .iter()
                .copied()
                .filter(|s| s.kind == kind && s.error_type == error_type)
                .collect();
            let mut columns: Vec<String> = in_table.iter().map(|s| column_label(s).to_string()).collect();
            columns.sort_by(|a, b| label_order(a, b));
            columns.dedup();
            let mut cells = Vec::new();
            for feature in Feature::BP_FEATURES {
                for col in &columns {
                    let parts: Vec<&[f64]> = in_table
                        .iter()
                        .filter(|s| s.feature == feature && column_label(s) == col)
                        .map(|s| s.residuals.as_slice())
                        .collect();
                    if parts.is_empty() {
                        continue;
                    }
                    cells.push(TableCell {
                        feature,
                        interval_label: col.clone(),
                        n_series: parts.len(),
                        summary: pooled_summary(&parts)?,
                    });
                }
            }
            tables.push(ErrorTable {
                kind,
                error_type,
                columns,
                cells,
            });
        }
    }

    let (consistency, consistency_note) = if subjects.len() < 2 {
        (
            None,
            Some(format!(
                "subject consistency needs at least 2 subjects, got {}",
                subjects.len()
            )),
        )
    } else {
        let mut cells = Vec::new();
        for kind in KINDS {
            for error_type in ERROR_TYPES {
                for feature in Feature::BP_FEATURES {
                    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                    for s in sorted
                        .iter()
                        .filter(|s| s.kind == kind && s.error_type == error_type && s.feature == feature)
                    {
                        groups
                            .entry(s.subject_id.as_str())
                            .or_default()
                            .extend_from_slice(&s.beat_residuals);
                    }
                    let mut groups: Vec<(String, Vec<f64>)> =
                        groups.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
                    groups.sort_by(|a, b| label_order(&a.0, &b.0));
                    if groups.len() < 2 {
                        continue;
                    }
                    cells.push(ConsistencyCell {
                        kind,
                        error_type,
                        feature,
                        count: subject_consistency(&groups, alpha)?,
                    });
                }
            }
        }
        let comparisons = cells.iter().map(|c| c.count.comparisons).sum::<usize>();
        let significant = cells.iter().map(|c| c.count.significant).sum::<usize>();
        (
            Some(ConsistencyReport {
                alpha,
                comparisons,
                significant,
                fraction: if comparisons > 0 {
                    significant as f64 / comparisons as f64
                } else {
                    0.0
                },
                cells,
            }),
            None,
        )
    };

    Ok(ErrorReport {
        metric,
        subjects,
        tables,
        consistency,
        consistency_note,
    })
}

/// Persists residuals as little-endian f64 in `data`, indexed by a CSV row
/// per series giving the byte-free element offsets into that stream.
pub fn write_residuals<I: Write, D: Write>(series: &[ErrorSeries], index: I, mut data: D) -> Result<()> {
    let mut wr = csv::Writer::from_writer(index);
    wr.write_record([
        "subject",
        "kind",
        "error_type",
        "feature",
        "interval",
        "source_model",
        "offset",
        "len",
        "beat_offset",
        "beat_len",
    ])?;
    let mut offset = 0usize;
    for s in series {
        let beat_offset = offset + s.residuals.len();
        wr.write_record([
            s.subject_id.clone(),
            s.kind.as_str().to_string(),
            s.error_type.as_str().to_string(),
            s.feature.as_str().to_string(),
            s.interval_label.clone(),
            s.source_model_label.clone(),
            offset.to_string(),
            s.residuals.len().to_string(),
            beat_offset.to_string(),
            s.beat_residuals.len().to_string(),
        ])?;
        for v in s.residuals.iter().chain(&s.beat_residuals) {
            data.write_all(&v.to_le_bytes())?;
        }
        offset = beat_offset + s.beat_residuals.len();
    }
    wr.flush()?;
    data.flush()?;
    Ok(())
}
