//! Session directory layout: `<id>_recording.csv` plus `<id>_annotations.csv`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use ppgbp_core::io::{read_annotations_csv, read_recording_csv};
use ppgbp_core::model::validate_session;
use ppgbp_core::RecordingSession;

pub const RECORDING_SUFFIX: &str = "_recording.csv";
pub const ANNOTATIONS_SUFFIX: &str = "_annotations.csv";
const EXPECTED_RATE_HZ: f64 = 100.0;

/// Subject ids found in `dir`, sorted.
pub fn discover(dir: &Path) -> anyhow::Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading sessions directory {}", dir.display()))? {
        let name = entry?.file_name();
        if let Some(id) = name.to_str().and_then(|n| n.strip_suffix(RECORDING_SUFFIX)) {
            ids.push(id.to_string());
        }
    }
    if ids.is_empty() {
        bail!("no *{RECORDING_SUFFIX} files in {}", dir.display());
    }
    ids.sort();
    Ok(ids)
}

pub fn load(dir: &Path, id: &str) -> anyhow::Result<RecordingSession> {
    let rec = dir.join(format!("{id}{RECORDING_SUFFIX}"));
    let ann = dir.join(format!("{id}{ANNOTATIONS_SUFFIX}"));
    let (ppg, bp) = read_recording_csv(BufReader::new(open(&rec)?)).with_context(|| format!("{}", rec.display()))?;
    let annotations = read_annotations_csv(BufReader::new(open(&ann)?)).with_context(|| format!("{}", ann.display()))?;
    let session = RecordingSession {
        subject_id: id.to_string(),
        bp,
        ppg,
        annotations,
    };
    if let Err(v) = validate_session(&session) {
        let list: Vec<String> = v.iter().map(|v| v.to_string()).collect();
        bail!("session {id} is invalid: {}", list.join("; "));
    }
    Ok(session)
}

/// Loads every session, plus a warning per session not sampled at 100 Hz.
pub fn load_all(dir: &Path) -> anyhow::Result<(Vec<RecordingSession>, Vec<String>)> {
    let mut sessions = Vec::new();
    let mut warnings = Vec::new();
    for id in discover(dir)? {
        let s = load(dir, &id)?;
        let rate = s.bp.sample_rate_hz();
        if rate != EXPECTED_RATE_HZ {
            warnings.push(format!(
                "{id}: sample rate {rate} Hz; detection defaults assume {EXPECTED_RATE_HZ} Hz"
            ));
        }
        sessions.push(s);
    }
    Ok((sessions, warnings))
}

fn open(path: &Path) -> anyhow::Result<File> {
    File::open(path).with_context(|| format!("opening {}", path.display()))
}

pub fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn subject_dir(root: &Path, id: &str) -> PathBuf {
    root.join(id)
}
