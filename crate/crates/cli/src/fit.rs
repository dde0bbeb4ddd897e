use std::path::Path;

use rayon::prelude::*;

use ppgbp_core::arx::{CellOutcome, ModelSelectionResult};
use ppgbp_core::pipeline::{fit_subject, prepare_subject, IntervalFit};
use ppgbp_core::{Feature, ModelFile, Selection};

use crate::config::FileConfig;
use crate::sessions::{create, load_all, subject_dir, write_text};
use crate::FitArgs;

/// Lists `<FEATURE> <label>: reason` for every model the fit could not produce.
pub const UNFITTED_FILE: &str = "unfitted.txt";

pub fn model_file_name(feature: Feature, label: &str) -> String {
    format!("{}_{label}.json", feature.as_str())
}

pub fn run(args: &FitArgs) -> anyhow::Result<Vec<String>> {
    let file = FileConfig::load(args.config.as_deref())?;
    let detection = file.detection()?;
    let bounds = file.bounds()?;
    let selection = args.selection.unwrap_or(file.fit.selection);
    let (sessions, mut warnings) = load_all(&args.sessions)?;

    let fitted: Vec<(String, Vec<IntervalFit>, Vec<String>)> = sessions
        .par_iter()
        .map(|s| -> anyhow::Result<_> {
            let prepared = prepare_subject(s, &detection)?;
            let fits = fit_subject(&prepared, &bounds)?;
            Ok((s.subject_id.clone(), fits, prepared.skipped))
        })
        .collect::<anyhow::Result<_>>()?;

    let models_root = args.out.join("models");
    let grids_root = args.out.join("grids");
    let mut summary = csv::Writer::from_writer(create(&args.out.join("fit_summary.csv"))?);
    summary.write_record(["subject", "feature", "interval", "kind", "n_a", "n_b", "n_k", "fit_mse", "status"])?;
    let mut written = 0usize;
    for (id, fits, skipped) in &fitted {
        let mdir = subject_dir(&models_root, id);
        std::fs::create_dir_all(&mdir)?;
        let mut unfitted = String::new();
        for label in skipped {
            for f in [Feature::Sbp, Feature::Dbp] {
                let msg = format!("{} {label}: window outside the feature span", f.as_str());
                warnings.push(format!("{id} {msg}"));
                unfitted.push_str(&msg);
                unfitted.push('\n');
            }
        }
        for fit in fits {
            for (feature, outcome) in [(Feature::Sbp, &fit.sbp), (Feature::Dbp, &fit.dbp)] {
                let mut row = vec![
                    id.clone(),
                    feature.as_str().to_string(),
                    fit.label.clone(),
                    fit.kind.as_str().to_string(),
                ];
                match outcome {
                    Ok(result) => {
                        let model = result.best(selection);
                        let mf = ModelFile::new(feature, &fit.label, model);
                        write_text(&mdir.join(model_file_name(feature, &fit.label)), &mf.to_json()?)?;
                        let gpath = subject_dir(&grids_root, id).join(format!("{}_{}.csv", feature.as_str(), fit.label));
                        write_grid(&gpath, result)?;
                        written += 1;
                        row.extend([
                            model.orders.n_a.to_string(),
                            model.orders.n_b.to_string(),
                            model.orders.n_k.to_string(),
                            model.fit_mse.to_string(),
                            "ok".into(),
                        ]);
                    }
                    Err(e) => {
                        let msg = format!("{} {}: {e}", feature.as_str(), fit.label);
                        warnings.push(format!("{id} {msg}"));
                        unfitted.push_str(&msg);
                        unfitted.push('\n');
                        row.extend([String::new(), String::new(), String::new(), String::new(), format!("failed: {e}")]);
                    }
                }
                summary.write_record(&row)?;
            }
        }
        if !unfitted.is_empty() {
            write_text(&mdir.join(UNFITTED_FILE), &unfitted)?;
        }
    }
    summary.flush()?;
    let sel = match selection {
        Selection::Mse => "mse",
        Selection::Aic => "aic",
    };
    println!(
        "wrote {written} models ({sel} selection) for {} subjects to {}",
        fitted.len(),
        models_root.display()
    );
    Ok(warnings)
}

/// Every grid cell with its fit statistics and which cells each criterion picked.
fn write_grid(path: &Path, result: &ModelSelectionResult) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record(["n_a", "n_b", "n_k", "status", "fit_mse", "aic", "n_samples_used", "best_mse", "best_aic"])?;
    for cell in &result.grid {
        let o = cell.orders;
        let (status, mse, aic, n) = match &cell.outcome {
            CellOutcome::Fitted { model, aic } => (
                "fitted".to_string(),
                model.fit_mse.to_string(),
                aic.to_string(),
                model.n_samples_used.to_string(),
            ),
            CellOutcome::TooShort { rows } => (format!("too-short ({rows} rows)"), String::new(), String::new(), String::new()),
            CellOutcome::RankDeficient { rank } => (format!("rank-deficient ({rank})"), String::new(), String::new(), String::new()),
        };
        let flag = |b: bool| if b { "1" } else { "0" }.to_string();
        wr.write_record([
            o.n_a.to_string(),
            o.n_b.to_string(),
            o.n_k.to_string(),
            status,
            mse,
            aic,
            n,
            flag(result.best_by_mse.orders == o),
            flag(result.best_by_aic.orders == o),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
