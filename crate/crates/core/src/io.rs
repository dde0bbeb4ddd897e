//! Recording / annotation CSV and model JSON formats.
//!
//! Recording CSV: header `t_s,ppg,bp`, one row per sample.
//! Annotation CSV: header `label,kind,start_s,end_s`.
//! Floats are written with the shortest representation that parses back to
//! the identical `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize, Serializer};

use crate::arx::{ArxModel, ArxOrders};
use crate::error::{Error, Result};
use crate::model::{Feature, IntervalAnnotation, IntervalKind, SignalLabel, UniformSignal};

pub const RECORDING_HEADER: [&str; 3] = ["t_s", "ppg", "bp"];
pub const ANNOTATION_HEADER: [&str; 4] = ["label", "kind", "start_s", "end_s"];

pub fn write_recording_csv<W: Write>(ppg: &UniformSignal, bp: &UniformSignal, out: W) -> Result<()> {
    if ppg.len() != bp.len() || ppg.sample_rate_hz() != bp.sample_rate_hz() || ppg.t0_s() != bp.t0_s() {
        return Err(Error::LengthMismatch("bp and ppg must share rate, start and length".into()));
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(RECORDING_HEADER)?;
    let mut row = [String::new(), String::new(), String::new()];
    for m in 0..bp.len() {
        row[0] = bp.time_at(m).to_string();
        row[1] = ppg.values()[m].to_string();
        row[2] = bp.values()[m].to_string();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a recording CSV into `(ppg, bp)` signals.
pub fn read_recording_csv<R: Read>(input: R) -> Result<(UniformSignal, UniformSignal)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(RECORDING_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `t_s,ppg,bp`, got `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let (mut t, mut ppg, mut bp) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 3 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        t.push(parse_f64(&rec[0], line)?);
        ppg.push(parse_f64(&rec[1], line)?);
        bp.push(parse_f64(&rec[2], line)?);
    }
    let rate = infer_sample_rate(&t)?;
    let t0 = t[0];
    Ok((
        UniformSignal::new(rate, t0, ppg, SignalLabel::Ppg)?,
        UniformSignal::new(rate, t0, bp, SignalLabel::Bp)?,
    ))
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        line,
        msg: format!("`{s}`: {e}"),
    })
}

fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mag = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - mag);
    (x * scale).round() / scale
}

/// Recovers the sample rate from a time column. The shortest decimal rate that
/// regenerates every timestamp bit-exactly wins; otherwise the least-squares
/// estimate is accepted if all timestamps agree to within 1e-6 of a period.
fn infer_sample_rate(t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(Error::InvalidSignal("need at least 2 samples to infer the sample rate".into()));
    }
    let n = t.len();
    let span = t[n - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::InvalidSignal("time column not increasing".into()));
    }
    let estimate = (n - 1) as f64 / span;
    let regenerates = |rate: f64| t.iter().enumerate().all(|(m, &tm)| t[0] + m as f64 / rate == tm);
    for digits in 1..=17 {
        let cand = round_sig(estimate, digits);
        if cand > 0.0 && regenerates(cand) {
            return Ok(cand);
        }
    }
    let period = 1.0 / estimate;
    if let Some(m) = t
        .iter()
        .enumerate()
        .position(|(m, &tm)| (t[0] + m as f64 / estimate - tm).abs() > 1e-6 * period)
    {
        return Err(Error::Parse {
            line: m + 2,
            msg: "non-uniform sampling".into(),
        });
    }
    Ok(estimate)
}

pub fn write_annotations_csv<W: Write>(annotations: &[IntervalAnnotation], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(ANNOTATION_HEADER)?;
    for a in annotations {
        w.write_record([
            a.label.clone(),
            a.kind.as_str().to_string(),
            a.start_s.to_string(),
            a.end_s.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_annotations_csv<R: Read>(input: R) -> Result<Vec<IntervalAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(ANNOTATION_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header `label,kind,start_s,end_s`".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let kind: IntervalKind = rec[1].trim().parse()?;
        out.push(IntervalAnnotation::new(
            rec[0].trim(),
            kind,
            parse_f64(&rec[2], line)?,
            parse_f64(&rec[3], line)?,
        )?);
    }
    Ok(out)
}

/// Serializes an `f64` as a JSON number with 17 significant digits.
fn ser_f64_17<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::Error as _;
    let raw = serde_json::value::RawValue::from_string(format!("{x:.16e}")).map_err(S::Error::custom)?;
    raw.serialize(s)
}

fn ser_vec_17<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct F(f64);
    impl Serialize for F {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_f64_17(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&F(x))?;
    }
    seq.end()
}

/// On-disk form of an identified model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub feature: Feature,
    pub interval_label: String,
    pub n_a: usize,
    pub n_b: usize,
    pub n_k: usize,
    #[serde(serialize_with = "ser_vec_17")]
    pub a: Vec<f64>,
    #[serde(serialize_with = "ser_vec_17")]
    pub b: Vec<f64>,
    #[serde(serialize_with = "ser_f64_17")]
    pub fit_mse: f64,
    pub n_samples_used: usize,
}

impl ModelFile {
    pub fn new(feature: Feature, interval_label: impl Into<String>, model: &ArxModel) -> Self {
        Self {
            feature,
            interval_label: interval_label.into(),
            n_a: model.orders.n_a,
            n_b: model.orders.n_b,
            n_k: model.orders.n_k,
            a: model.a.clone(),
            b: model.b.clone(),
            fit_mse: model.fit_mse,
            n_samples_used: model.n_samples_used,
        }
    }

    pub fn to_model(&self) -> Result<ArxModel> {
        let orders = ArxOrders::new(self.n_a, self.n_b, self.n_k)?;
        ArxModel::new(orders, self.a.clone(), self.b.clone(), self.fit_mse, self.n_samples_used)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signals(rate: f64, t0: f64, n: usize) -> (UniformSignal, UniformSignal) {
        let ppg: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin() * 1e3 / 7.0).collect();
        let bp: Vec<f64> = (0..n).map(|i| 90.0 + (i as f64 * 0.11).cos() / 3.0).collect();
        (
            UniformSignal::new(rate, t0, ppg, SignalLabel::Ppg).unwrap(),
            UniformSignal::new(rate, t0, bp, SignalLabel::Bp).unwrap(),
        )
    }

    #[test]
    fn recording_round_trip_is_exact() {
        for &(rate, t0) in &[(100.0, 0.0), (125.0, 3.25), (256.0, -1.5), (99.7, 0.1)] {
            let (ppg, bp) = signals(rate, t0, 777);
            let mut buf = Vec::new();
            write_recording_csv(&ppg, &bp, &mut buf).unwrap();
            let (p2, b2) = read_recording_csv(buf.as_slice()).unwrap();
            assert_eq!(p2, ppg, "rate {rate}");
            assert_eq!(b2, bp);
        }
    }

    #[test]
    fn header_and_line_endings() {
        let (ppg, bp) = signals(100.0, 0.0, 3);
        let mut buf = Vec::new();
        write_recording_csv(&ppg, &bp, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,ppg,bp\n0,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn non_uniform_times_rejected() {
        let text = "t_s,ppg,bp\n0,1,2\n0.01,1,2\n0.05,1,2\n";
        assert!(read_recording_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn bad_header_rejected() {
        let text = "time,ppg,bp\n0,1,2\n0.01,1,2\n";
        assert!(matches!(read_recording_csv(text.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn annotations_round_trip() {
        let anns = vec![
            IntervalAnnotation::new("NB1", IntervalKind::NormalBreathing, 0.0, 60.0).unwrap(),
            IntervalAnnotation::new("BH1", IntervalKind::BreathHold, 60.0, 93.37).unwrap(),
        ];
        let mut buf = Vec::new();
        write_annotations_csv(&anns, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("label,kind,start_s,end_s\nNB1,NB,0,60\n"));
        assert_eq!(read_annotations_csv(buf.as_slice()).unwrap(), anns);
    }

    #[test]
    fn unknown_kind_rejected() {
        let text = "label,kind,start_s,end_s\nX1,ZZ,0,1\n";
        assert!(read_annotations_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn model_json_has_17_digits_and_round_trips() {
        let orders = ArxOrders::new(2, 1, 3).unwrap();
        let model = ArxModel::new(orders, vec![-1.0 / 3.0, 0.1], vec![0.5], 2.0 / 7.0, 412).unwrap();
        let file = ModelFile::new(Feature::Sbp, "BH2", &model);
        let json = file.to_json().unwrap();
        assert!(json.contains("-3.3333333333333331e-1"), "{json}");
        assert!(json.contains("1.0000000000000001e-1"));
        let back = ModelFile::from_json(&json).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_model().unwrap(), model);
    }
}
