use std::io::Write;

use anyhow::Context;
use serde::Serialize;

use ppgbp_core::io::{write_annotations_csv, write_recording_csv};
use ppgbp_core::study::synthetic_cohort;
use ppgbp_core::synth::subject_config;
use ppgbp_core::{Coupling, GroundTruth, ProtocolConfig};

use crate::config::FileConfig;
use crate::sessions::{create, write_text, ANNOTATIONS_SUFFIX, RECORDING_SUFFIX};
use crate::SynthArgs;

#[derive(Serialize)]
struct Manifest<'a> {
    subjects: Vec<ManifestEntry>,
    noise_free: bool,
    config: &'a ProtocolConfig,
}

#[derive(Serialize)]
struct ManifestEntry {
    id: String,
    rng_seed: u64,
    recording: String,
    annotations: String,
    truth: String,
    coupling: String,
    n_beats: usize,
    bh_durations_s: Vec<f64>,
}

#[derive(Serialize)]
struct CouplingFile<'a> {
    sbp: &'a Coupling,
    dbp: &'a Coupling,
}

pub fn run(args: &SynthArgs) -> anyhow::Result<Vec<String>> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut cfg = file.synth;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    if let Some(sd) = args.noise_sd {
        cfg.noise_sd_mmhg = sd;
    }
    cfg.validate()?;
    anyhow::ensure!(args.subjects >= 1, "--subjects must be >= 1");

    let cohort = synthetic_cohort(&cfg, args.subjects)?;
    let mut entries = Vec::with_capacity(cohort.len());
    for (i, (session, truth)) in cohort.iter().enumerate() {
        let id = &session.subject_id;
        let names = [
            format!("{id}{RECORDING_SUFFIX}"),
            format!("{id}{ANNOTATIONS_SUFFIX}"),
            format!("{id}_truth.csv"),
            format!("{id}_coupling.json"),
        ];
        let path = |k: usize| args.out.join(&names[k]);

        let mut w = create(&path(0))?;
        write_recording_csv(&session.ppg, &session.bp, &mut w)?;
        w.flush()?;
        let mut w = create(&path(1))?;
        write_annotations_csv(&session.annotations, &mut w)?;
        w.flush()?;
        write_truth(&path(2), truth, session.bp.sample_rate_hz())?;
        let coupling = CouplingFile {
            sbp: &truth.sbp_coupling,
            dbp: &truth.dbp_coupling,
        };
        write_text(&path(3), &serde_json::to_string_pretty(&coupling)?)?;

        let [recording, annotations, truth_name, coupling] = names;
        entries.push(ManifestEntry {
            id: id.clone(),
            rng_seed: subject_config(&cfg, i).rng_seed,
            recording,
            annotations,
            truth: truth_name,
            coupling,
            n_beats: truth.peak_indices.len(),
            bh_durations_s: truth.bh_durations_s.clone(),
        });
    }
    let manifest = Manifest {
        subjects: entries,
        noise_free: cfg.noise_sd_mmhg == 0.0,
        config: &cfg,
    };
    write_text(&args.out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    println!("wrote {} sessions to {}", cohort.len(), args.out.display());
    Ok(Vec::new())
}

/// One row per beat; the trough columns describe the trough after that peak
/// and are empty on the last beat.
fn write_truth(path: &std::path::Path, t: &GroundTruth, rate: f64) -> anyhow::Result<()> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record([
        "beat",
        "peak_index",
        "peak_time_s",
        "sbp",
        "sbp_clean",
        "ppg_peak",
        "trough_index",
        "trough_time_s",
        "dbp",
        "dbp_clean",
        "map",
        "ppg_trough",
    ])?;
    for (k, &p) in t.peak_indices.iter().enumerate() {
        let mut row = vec![
            k.to_string(),
            p.to_string(),
            (p as f64 / rate).to_string(),
            t.sbp[k].to_string(),
            t.sbp_clean[k].to_string(),
            t.ppg_peak[k].to_string(),
        ];
        match t.trough_indices.get(k) {
            Some(&q) => row.extend([
                q.to_string(),
                (q as f64 / rate).to_string(),
                t.dbp[k].to_string(),
                t.dbp_clean[k].to_string(),
                t.map[k].to_string(),
                t.ppg_trough[k].to_string(),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        wr.write_record(&row)?;
    }
    wr.flush().context("writing truth table")?;
    Ok(())
}
