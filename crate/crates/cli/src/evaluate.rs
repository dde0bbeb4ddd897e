use std::path::Path;

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::Serialize;

use ppgbp_core::eval::{evaluate_subject, summarize, write_residuals};
use ppgbp_core::pipeline::prepare_subject;
use ppgbp_core::{
    ArxModel, ErrorReport, ErrorType, Feature, IntervalKind, IntervalModels, ModelFile, RecordingSession,
};

use crate::config::FileConfig;
use crate::fit::{model_file_name, UNFITTED_FILE};
use crate::sessions::{create, load_all, subject_dir, write_text};
use crate::EvaluateArgs;

const TABLES: [(IntervalKind, ErrorType, &str); 4] = [
    (IntervalKind::NormalBreathing, ErrorType::Model, "table1_nb_model.csv"),
    (IntervalKind::BreathHold, ErrorType::Model, "table2_bh_model.csv"),
    (IntervalKind::NormalBreathing, ErrorType::Prediction, "table3_nb_prediction.csv"),
    (IntervalKind::BreathHold, ErrorType::Prediction, "table4_bh_prediction.csv"),
];

#[derive(Serialize)]
struct ReportFile<'a> {
    #[serde(flatten)]
    report: &'a ErrorReport,
    alpha: f64,
    warnings: &'a [String],
}

pub fn run(args: &EvaluateArgs) -> anyhow::Result<Vec<String>> {
    let file = FileConfig::load(args.config.as_deref())?;
    let detection = file.detection()?;
    let metric = args.error_metric.unwrap_or(file.eval.error_metric);
    let alpha = file.alpha(args.alpha)?;
    let (sessions, mut warnings) = load_all(&args.sessions)?;

    let per_subject = sessions
        .par_iter()
        .map(|s| -> anyhow::Result<_> {
            let (models, mut w) = load_models(&args.models, s)?;
            let prepared = prepare_subject(s, &detection)?;
            let ev = evaluate_subject(&prepared, &models, metric);
            w.extend(ev.warnings.into_iter().map(|m| format!("{}: {m}", s.subject_id)));
            Ok((ev.series, w))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut series = Vec::new();
    for (s, w) in per_subject {
        series.extend(s);
        warnings.extend(w);
    }
    let report = summarize(&series, metric, alpha)?;

    let out = &args.out;
    for (kind, et, name) in TABLES {
        let table = report
            .table(kind, et)
            .with_context(|| format!("report has no {} {} table", kind.as_str(), et.as_str()))?;
        table.write_csv(create(&out.join(name))?)?;
    }
    match (&report.consistency, &report.consistency_note) {
        (Some(c), _) => c.write_csv(create(&out.join("table5_counts.csv"))?)?,
        (None, note) => {
            let note = note.clone().unwrap_or_else(|| "consistency counts not computed".into());
            write_text(&out.join("table5_note.txt"), &format!("{note}\n"))?;
            warnings.push(note);
        }
    }
    report.write_plot_data(create(&out.join("plot_data.csv"))?)?;
    write_residuals(
        &series,
        create(&out.join("residuals_index.csv"))?,
        create(&out.join("residuals.bin"))?,
    )?;
    let rf = ReportFile {
        report: &report,
        alpha,
        warnings: &warnings,
    };
    write_text(&out.join("report.json"), &serde_json::to_string_pretty(&rf)?)?;
    println!(
        "{} error series from {} subjects ({} metric) written to {}",
        series.len(),
        sessions.len(),
        metric.as_str(),
        out.display()
    );
    Ok(warnings)
}

/// Models for every annotated interval. A file that the fit step recorded as
/// unfittable is tolerated with a warning; any other missing file is an error.
fn load_models(root: &Path, session: &RecordingSession) -> anyhow::Result<(Vec<IntervalModels>, Vec<String>)> {
    let id = &session.subject_id;
    let dir = subject_dir(root, id);
    if !dir.is_dir() {
        bail!("no models for subject {id}: {} does not exist", dir.display());
    }
    let unfitted = std::fs::read_to_string(dir.join(UNFITTED_FILE)).unwrap_or_default();
    let mut warnings = Vec::new();
    let mut models = Vec::with_capacity(session.annotations.len());
    for ann in &session.annotations {
        let mut get = |feature: Feature| -> anyhow::Result<Option<ArxModel>> {
            let path = dir.join(model_file_name(feature, &ann.label));
            if !path.exists() {
                let key = format!("{} {}:", feature.as_str(), ann.label);
                if unfitted.lines().any(|l| l.starts_with(&key)) {
                    warnings.push(format!("{id}: no {} model for {} (fit failed)", feature.as_str(), ann.label));
                    return Ok(None);
                }
                bail!("missing model file {}", path.display());
            }
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let mf = ModelFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            if mf.feature != feature || mf.interval_label != ann.label {
                bail!(
                    "{} holds a {} model for {}",
                    path.display(),
                    mf.feature.as_str(),
                    mf.interval_label
                );
            }
            Ok(Some(mf.to_model().with_context(|| format!("{}", path.display()))?))
        };
        let sbp = get(Feature::Sbp)?;
        let dbp = get(Feature::Dbp)?;
        models.push(IntervalModels {
            label: ann.label.clone(),
            kind: ann.kind,
            sbp,
            dbp,
        });
    }
    Ok((models, warnings))
}
