//! Synthetic breath-hold protocol recordings with a known PPG to BP coupling.
//!
//! Timeline: baseline NB, then `n_breath_holds` holds separated by fixed
//! recovery NB windows, then a final NB window. A PPG peak envelope (and a
//! trough envelope) carries respiratory, Mayer-wave, drift and breath-hold
//! components; SBP and DBP are the exact outputs of the configured ARX
//! coupling driven by those envelopes at the sample rate. Beats sample the
//! tracks, beat noise is added, and waveforms are drawn as monotone
//! raised-cosine strokes so peaks and troughs land exactly on beat samples.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arx::{spectral_radius, ArxOrders};
use crate::error::{Error, Result};
use crate::model::{
    mean_arterial_pressure, IntervalAnnotation, IntervalKind, RecordingSession, SignalLabel, UniformSignal,
};

/// An ARX relation `y <- u` with explicit coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pub orders: ArxOrders,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl Coupling {
    /// Double pole at 0.95 (0.2 s time constant at 100 Hz), 30 ms delay, DC gain 1.2.
    pub fn default_sbp() -> Self {
        Self {
            orders: ArxOrders { n_a: 2, n_b: 2, n_k: 3 },
            a: vec![-1.9, 0.9025],
            b: vec![0.0018, 0.0012],
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a.iter().sum::<f64>())
    }

    pub fn scaled_input(&self, k: f64) -> Self {
        Self {
            orders: self.orders,
            a: self.a.clone(),
            b: self.b.iter().map(|b| b * k).collect(),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.a.len() != self.orders.n_a || self.b.len() != self.orders.n_b {
            return Err(Error::InvalidConfig {
                field: field.into(),
                reason: "coefficient lengths do not match orders".into(),
            });
        }
        if self.a.iter().chain(&self.b).any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig {
                field: field.into(),
                reason: "coefficients must be finite".into(),
            });
        }
        let rho = spectral_radius(&self.a);
        if rho >= 1.0 {
            return Err(Error::UnstableCoupling(rho));
        }
        if self.b.iter().sum::<f64>() == 0.0 {
            return Err(Error::InvalidConfig {
                field: field.into(),
                reason: "input coefficients sum to zero (no DC gain)".into(),
            });
        }
        Ok(())
    }

    /// Runs the recursion from the steady state of `u[0]`.
    pub fn simulate(&self, u: &[f64]) -> Vec<f64> {
        let n = u.len();
        let y0 = self.dc_gain() * u.first().copied().unwrap_or(0.0);
        let u0 = u.first().copied().unwrap_or(0.0);
        let mut y = vec![0.0; n];
        for m in 0..n {
            let mut s = 0.0;
            for (i, ai) in self.a.iter().enumerate() {
                let past = if m > i { y[m - 1 - i] } else { y0 };
                s -= ai * past;
            }
            for (j, bj) in self.b.iter().enumerate() {
                let lag = self.orders.n_k + j;
                let past = if m >= lag { u[m - lag] } else { u0 };
                s += bj * past;
            }
            y[m] = s;
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub baseline_nb_s: f64,
    pub n_breath_holds: usize,
    pub bh_duration_range_s: (f64, f64),
    pub inter_bh_recovery_s: f64,
    pub final_nb_s: f64,
    pub sample_rate_hz: f64,
    pub heart_rate_hz: f64,
    /// Relative SD of beat-to-beat intervals.
    pub heart_rate_variability: f64,
    /// SBP rise a long hold settles to.
    pub bh_bp_rise_mmhg: f64,
    /// DBP rise as a fraction of the SBP rise.
    pub dbp_rise_fraction: f64,
    /// Total beat-level noise SD on SBP and DBP.
    pub noise_sd_mmhg: f64,
    /// Share of the noise variance that is slow (AR(1) across beats).
    pub slow_noise_fraction: f64,
    /// Beat-to-beat correlation of the slow noise component.
    pub slow_noise_ar: f64,
    /// Correlation between SBP and DBP noise.
    pub sbp_dbp_noise_correlation: f64,
    pub sbp_baseline_mmhg: f64,
    pub dbp_baseline_mmhg: f64,
    pub respiratory_mmhg: f64,
    pub respiratory_rate_hz: f64,
    pub mayer_mmhg: f64,
    pub drift_sd_mmhg: f64,
    pub coupling: Coupling,
    /// DBP coupling is the SBP coupling with `b` scaled by this ratio.
    pub dbp_gain_ratio: f64,
    /// Scale of between-subject variation applied by [`subject_config`].
    pub subject_spread: f64,
    pub rng_seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            baseline_nb_s: 60.0,
            n_breath_holds: 5,
            bh_duration_range_s: (20.0, 60.0),
            inter_bh_recovery_s: 90.0,
            final_nb_s: 60.0,
            sample_rate_hz: 100.0,
            heart_rate_hz: 1.2,
            heart_rate_variability: 0.03,
            bh_bp_rise_mmhg: 20.0,
            dbp_rise_fraction: 0.6,
            noise_sd_mmhg: 2.0,
            slow_noise_fraction: 0.9,
            slow_noise_ar: 0.7,
            sbp_dbp_noise_correlation: 0.95,
            sbp_baseline_mmhg: 126.8,
            dbp_baseline_mmhg: 74.8,
            respiratory_mmhg: 3.0,
            respiratory_rate_hz: 0.25,
            mayer_mmhg: 2.5,
            drift_sd_mmhg: 2.0,
            coupling: Coupling::default_sbp(),
            dbp_gain_ratio: 0.9,
            subject_spread: 1.0,
            rng_seed: 1,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: format!("synth.{field}"),
        reason: reason.into(),
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("baseline_nb_s", self.baseline_nb_s),
            ("inter_bh_recovery_s", self.inter_bh_recovery_s),
            ("final_nb_s", self.final_nb_s),
            ("sample_rate_hz", self.sample_rate_hz),
            ("heart_rate_hz", self.heart_rate_hz),
            ("sbp_baseline_mmhg", self.sbp_baseline_mmhg),
            ("dbp_baseline_mmhg", self.dbp_baseline_mmhg),
            ("dbp_gain_ratio", self.dbp_gain_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("heart_rate_variability", self.heart_rate_variability),
            ("bh_bp_rise_mmhg", self.bh_bp_rise_mmhg),
            ("dbp_rise_fraction", self.dbp_rise_fraction),
            ("noise_sd_mmhg", self.noise_sd_mmhg),
            ("respiratory_mmhg", self.respiratory_mmhg),
            ("respiratory_rate_hz", self.respiratory_rate_hz),
            ("mayer_mmhg", self.mayer_mmhg),
            ("drift_sd_mmhg", self.drift_sd_mmhg),
            ("subject_spread", self.subject_spread),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("slow_noise_fraction", self.slow_noise_fraction),
            ("slow_noise_ar", self.slow_noise_ar),
        ] {
            if !(0.0..=1.0).contains(&v) || (name == "slow_noise_ar" && v >= 1.0) {
                return Err(invalid(name, format!("must be in [0, 1), got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.sbp_dbp_noise_correlation) {
            return Err(invalid("sbp_dbp_noise_correlation", "must be in [-1, 1]"));
        }
        if self.n_breath_holds < 1 {
            return Err(invalid("n_breath_holds", "must be >= 1"));
        }
        let (lo, hi) = self.bh_duration_range_s;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(invalid(
                "bh_duration_range_s",
                format!("need 0 < min <= max, got ({lo}, {hi})"),
            ));
        }
        let beat_samples = self.sample_rate_hz / self.heart_rate_hz;
        if beat_samples < 40.0 {
            return Err(invalid(
                "heart_rate_hz",
                format!("beat period of {beat_samples:.1} samples is too short to render (need >= 40)"),
            ));
        }
        if self.dbp_baseline_mmhg >= self.sbp_baseline_mmhg {
            return Err(invalid("dbp_baseline_mmhg", "must be below sbp_baseline_mmhg"));
        }
        self.coupling.validate("synth.coupling")?;
        Ok(())
    }

    fn samples(&self, s: f64) -> usize {
        (s * self.sample_rate_hz).round() as usize
    }
}

/// Per-subject config: derived seed plus heart-rate and baseline variation.
pub fn subject_config(base: &ProtocolConfig, subject_index: usize) -> ProtocolConfig {
    let seed = splitmix64(base.rng_seed ^ splitmix64(subject_index as u64 + 1));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    let mut z = || -> f64 { rng.sample::<f64, _>(StandardNormal).clamp(-2.5, 2.5) };
    let s = base.subject_spread;
    let mut cfg = base.clone();
    cfg.rng_seed = seed;
    cfg.heart_rate_hz = base.heart_rate_hz * (1.0 + 0.08 * s * z());
    cfg.sbp_baseline_mmhg = base.sbp_baseline_mmhg + 6.0 * s * z();
    cfg.dbp_baseline_mmhg = base.dbp_baseline_mmhg + 4.0 * s * z();
    cfg
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Everything the generator knows about a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub peak_indices: Vec<usize>,
    /// `trough_indices[k]` lies between peaks `k` and `k + 1`.
    pub trough_indices: Vec<usize>,
    /// Emitted beat values (noise included).
    pub sbp: Vec<f64>,
    pub dbp: Vec<f64>,
    pub map: Vec<f64>,
    pub sbp_clean: Vec<f64>,
    pub dbp_clean: Vec<f64>,
    pub ppg_peak: Vec<f64>,
    pub ppg_trough: Vec<f64>,
    /// Sample-rate tracks; SBP/DBP are exact coupling outputs of the PPG tracks.
    pub sbp_track: Vec<f64>,
    pub dbp_track: Vec<f64>,
    pub ppg_peak_track: Vec<f64>,
    pub ppg_trough_track: Vec<f64>,
    pub sbp_coupling: Coupling,
    pub dbp_coupling: Coupling,
    pub annotations: Vec<IntervalAnnotation>,
    pub bh_durations_s: Vec<f64>,
}

/// Window boundaries in samples: `(label, kind, start, end)`.
fn schedule(cfg: &ProtocolConfig, rng: &mut ChaCha8Rng) -> (Vec<(String, IntervalKind, usize, usize)>, Vec<f64>) {
    let mut out = Vec::new();
    let mut durations = Vec::new();
    let mut t = 0;
    let push = |out: &mut Vec<_>, label: String, kind, len: usize, t: &mut usize| {
        out.push((label, kind, *t, *t + len));
        *t += len;
    };
    push(&mut out, "NB1".into(), IntervalKind::NormalBreathing, cfg.samples(cfg.baseline_nb_s), &mut t);
    let (lo, hi) = cfg.bh_duration_range_s;
    for i in 1..=cfg.n_breath_holds {
        let d = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let len = cfg.samples(d).max(1);
        durations.push(len as f64 / cfg.sample_rate_hz);
        push(&mut out, format!("BH{i}"), IntervalKind::BreathHold, len, &mut t);
        if i < cfg.n_breath_holds {
            let len = cfg.samples(cfg.inter_bh_recovery_s);
            push(&mut out, format!("NB{}", i + 1), IntervalKind::NormalBreathing, len, &mut t);
        }
    }
    let len = cfg.samples(cfg.final_nb_s);
    push(&mut out, format!("NB{}", cfg.n_breath_holds + 1), IntervalKind::NormalBreathing, len, &mut t);
    (out, durations)
}

/// Ornstein-Uhlenbeck path with stationary SD `sd` and time constant `tau_s`.
fn ou_path(n: usize, fs: f64, sd: f64, tau_s: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let phi = (-1.0 / (fs * tau_s)).exp();
    let innov = sd * (1.0 - phi * phi).sqrt();
    let mut x = sd * rng.sample::<f64, _>(StandardNormal);
    (0..n)
        .map(|_| {
            let v = x;
            x = phi * x + innov * rng.sample::<f64, _>(StandardNormal);
            v
        })
        .collect()
}

/// Breath-hold response in [0, 1]: first-order rise during holds, slower
/// decay afterwards, then a further first-order lag.
fn bh_response(n: usize, fs: f64, holds: &[(usize, usize)]) -> Vec<f64> {
    let (tau_up, tau_down, tau_lag) = (10.0, 12.0, 3.0);
    let (k_up, k_down, k_lag) = (
        1.0 - (-1.0 / (fs * tau_up)).exp(),
        1.0 - (-1.0 / (fs * tau_down)).exp(),
        1.0 - (-1.0 / (fs * tau_lag)).exp(),
    );
    let mut in_hold = vec![false; n];
    for &(s, e) in holds {
        in_hold[s..e.min(n)].iter_mut().for_each(|h| *h = true);
    }
    let (mut r, mut lagged) = (0.0, 0.0);
    in_hold
        .iter()
        .map(|&h| {
            if h {
                r += k_up * (1.0 - r);
            } else {
                r -= k_down * r;
            }
            lagged += k_lag * (r - lagged);
            lagged
        })
        .collect()
}

/// Breathing gate: 1 while breathing, 0 during holds, 2 s cosine ramps.
fn breathing_gate(n: usize, fs: f64, holds: &[(usize, usize)]) -> Vec<f64> {
    let ramp = (2.0 * fs) as usize;
    let mut g: Vec<f64> = vec![1.0; n];
    for &(s, e) in holds {
        for (m, gm) in g.iter_mut().enumerate() {
            let d = if m < s {
                s - m
            } else if m >= e {
                m + 1 - e
            } else {
                0
            };
            if d < ramp {
                let w = 0.5 - 0.5 * (PI * d as f64 / ramp as f64).cos();
                *gm = f64::min(*gm, w);
            }
        }
    }
    g
}

fn raised_cosine(out: &mut [f64], i0: usize, v0: f64, i1: usize, v1: f64) {
    let len = (i1 - i0) as f64;
    for i in i0..=i1 {
        let s = 0.5 - 0.5 * (PI * (i - i0) as f64 / len).cos();
        out[i] = v0 + (v1 - v0) * s;
    }
    out[i0] = v0;
    out[i1] = v1;
}

/// Monotone strokes through `(index, value)` vertices, alternating trough and peak.
fn render(n: usize, vertices: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for w in vertices.windows(2) {
        raised_cosine(&mut out, w[0].0, w[0].1, w[1].0, w[1].1);
    }
    out
}

pub fn generate_session(cfg: &ProtocolConfig, subject_id: &str) -> Result<(RecordingSession, GroundTruth)> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);

    let (windows, bh_durations_s) = schedule(cfg, &mut rng);
    let n = windows.last().map(|w| w.3).unwrap_or(0);
    let holds: Vec<(usize, usize)> = windows
        .iter()
        .filter(|w| w.1 == IntervalKind::BreathHold)
        .map(|w| (w.2, w.3))
        .collect();

    // envelopes, expressed in mmHg and mapped to PPG units through the gains
    let sbp_coupling = cfg.coupling.clone();
    let dbp_coupling = cfg.coupling.scaled_input(cfg.dbp_gain_ratio);
    let (g_s, g_d) = (sbp_coupling.dc_gain(), dbp_coupling.dc_gain());
    let response = bh_response(n, fs, &holds);
    let gate = breathing_gate(n, fs, &holds);
    let resp_phase = rng.random_range(0.0..2.0 * PI);
    let mayer_phase = rng.random_range(0.0..2.0 * PI);
    let mayer_hz = 0.1;
    let drift_common = ou_path(n, fs, cfg.drift_sd_mmhg, 15.0, &mut rng);
    let drift_s = ou_path(n, fs, 0.5 * cfg.drift_sd_mmhg, 8.0, &mut rng);
    let drift_d = ou_path(n, fs, 0.5 * cfg.drift_sd_mmhg, 8.0, &mut rng);

    let mut ppg_peak_track = Vec::with_capacity(n);
    let mut ppg_trough_track = Vec::with_capacity(n);
    for m in 0..n {
        let t = m as f64 / fs;
        let resp = gate[m] * (2.0 * PI * cfg.respiratory_rate_hz * t + resp_phase).sin();
        let mayer = (2.0 * PI * mayer_hz * t + mayer_phase).sin();
        let s = cfg.sbp_baseline_mmhg
            + cfg.bh_bp_rise_mmhg * response[m]
            + cfg.respiratory_mmhg * resp
            + cfg.mayer_mmhg * mayer
            + drift_common[m]
            + drift_s[m];
        let d = cfg.dbp_baseline_mmhg
            + cfg.dbp_rise_fraction * cfg.bh_bp_rise_mmhg * response[m]
            + 0.6 * cfg.respiratory_mmhg * resp
            + 0.8 * cfg.mayer_mmhg * mayer
            + 0.7 * drift_common[m]
            + drift_d[m];
        ppg_peak_track.push(s / g_s);
        ppg_trough_track.push(d / g_d);
    }
    let sbp_track = sbp_coupling.simulate(&ppg_peak_track);
    let dbp_track = dbp_coupling.simulate(&ppg_trough_track);

    // beat schedule on whole samples
    let period = fs / cfg.heart_rate_hz;
    let mut peaks = Vec::new();
    let mut p = (0.25 * fs).round() as usize + rng.random_range(0..(0.3 * period) as usize);
    let tail = (0.5 * period) as usize;
    while p + tail < n {
        peaks.push(p);
        let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * cfg.heart_rate_variability;
        p += (period * (1.0 + jitter.clamp(-0.25, 0.25))).round() as usize;
    }
    if peaks.len() < 2 {
        return Err(invalid("final_nb_s", "recording too short for two beats"));
    }
    let troughs: Vec<usize> = peaks
        .windows(2)
        .map(|w| w[1] - ((0.18 * (w[1] - w[0]) as f64).round() as usize).max(2))
        .collect();

    // beat noise: white + slow AR(1) parts, correlated between SBP and DBP
    let rho = cfg.sbp_dbp_noise_correlation;
    let ar = cfg.slow_noise_ar;
    let (w_white, w_slow) = (
        (1.0 - cfg.slow_noise_fraction).sqrt(),
        cfg.slow_noise_fraction.sqrt(),
    );
    let pair = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        (z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2)
    };
    let (mut slow_s, mut slow_d) = pair(&mut rng);
    let mut noise = Vec::with_capacity(peaks.len());
    for _ in 0..peaks.len() {
        let (ws, wd) = pair(&mut rng);
        noise.push((
            cfg.noise_sd_mmhg * (w_white * ws + w_slow * slow_s),
            cfg.noise_sd_mmhg * (w_white * wd + w_slow * slow_d),
        ));
        let (is, id) = pair(&mut rng);
        let k = (1.0 - ar * ar).sqrt();
        slow_s = ar * slow_s + k * is;
        slow_d = ar * slow_d + k * id;
    }

    let sbp_clean: Vec<f64> = peaks.iter().map(|&p| sbp_track[p]).collect();
    let dbp_clean: Vec<f64> = troughs.iter().map(|&q| dbp_track[q]).collect();
    let sbp: Vec<f64> = sbp_clean.iter().zip(&noise).map(|(v, e)| v + e.0).collect();
    let dbp: Vec<f64> = dbp_clean.iter().zip(&noise).map(|(v, e)| v + e.1).collect();
    let map: Vec<f64> = dbp.iter().zip(&sbp).map(|(&d, &s)| mean_arterial_pressure(d, s)).collect();
    let ppg_peak: Vec<f64> = peaks.iter().map(|&p| ppg_peak_track[p]).collect();
    let ppg_trough: Vec<f64> = troughs.iter().map(|&q| ppg_trough_track[q]).collect();

    let vertices = |first: f64, last: f64, hi: &[f64], lo: &[f64]| {
        let mut v = vec![(0, first)];
        for k in 0..peaks.len() {
            v.push((peaks[k], hi[k]));
            if k < troughs.len() {
                v.push((troughs[k], lo[k]));
            }
        }
        v.push((n - 1, last));
        v
    };
    let bp_wave = render(n, &vertices(dbp_track[0], dbp_track[n - 1], &sbp, &dbp));
    let ppg_wave = render(
        n,
        &vertices(ppg_trough_track[0], ppg_trough_track[n - 1], &ppg_peak, &ppg_trough),
    );

    let annotations = windows
        .iter()
        .map(|(label, kind, s, e)| IntervalAnnotation::new(label.clone(), *kind, *s as f64 / fs, *e as f64 / fs))
        .collect::<Result<Vec<_>>>()?;
    let session = RecordingSession {
        subject_id: subject_id.to_string(),
        bp: UniformSignal::new(fs, 0.0, bp_wave, SignalLabel::Bp)?,
        ppg: UniformSignal::new(fs, 0.0, ppg_wave, SignalLabel::Ppg)?,
        annotations: annotations.clone(),
    };
    let truth = GroundTruth {
        peak_indices: peaks,
        trough_indices: troughs,
        sbp,
        dbp,
        map,
        sbp_clean,
        dbp_clean,
        ppg_peak,
        ppg_trough,
        sbp_track,
        dbp_track,
        ppg_peak_track,
        ppg_trough_track,
        sbp_coupling,
        dbp_coupling,
        annotations,
        bh_durations_s,
    };
    Ok((session, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arx::{fit_arx, grid_search, OrderBounds};
    use crate::beats::{extract_bp_features, extract_ppg_features, PeakDetectionParams, PpgDetectionParams};
    use crate::model::validate_session;

    fn quick() -> ProtocolConfig {
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
    fn default_timeline() {
        let cfg = ProtocolConfig::default();
        let (s, truth) = generate_session(&cfg, "S01").unwrap();
        assert_eq!(s.annotations.len(), 11);
        let nb = s.annotations.iter().filter(|a| a.kind == IntervalKind::NormalBreathing).count();
        assert_eq!(nb, 6);
        let total = 60.0 + truth.bh_durations_s.iter().sum::<f64>() + 4.0 * 90.0 + 60.0;
        assert!((s.bp.end_s() - total).abs() < 1e-9);
        assert_eq!(s.annotations.last().unwrap().end_s, s.bp.end_s());
        assert!(truth.bh_durations_s.iter().all(|d| (20.0..=60.0).contains(d)));
        let labels: Vec<&str> = s.annotations.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(
            labels,
            ["NB1", "BH1", "NB2", "BH2", "NB3", "BH3", "NB4", "BH4", "NB5", "BH5", "NB6"]
        );
        assert!(validate_session(&s).is_ok());
    }

    #[test]
    fn extraction_recovers_beats() {
        let (s, truth) = generate_session(&quick(), "S01").unwrap();
        let bp = extract_bp_features(&s.bp, &PeakDetectionParams::bp_default()).unwrap();
        assert_eq!(bp.sbp.len(), truth.peak_indices.len());
        for (k, (t, v)) in bp.sbp.iter().enumerate() {
            assert!((t * 100.0 - truth.peak_indices[k] as f64).abs() <= 1.0 + 1e-9);
            assert!((v - truth.sbp[k]).abs() < 0.1);
        }
        for (k, (_, v)) in bp.dbp.iter().enumerate() {
            assert!((v - truth.dbp[k]).abs() < 0.1);
        }
        let params = PpgDetectionParams::default().resolve(s.ppg.values()).unwrap();
        let ppg = extract_ppg_features(&s.ppg, &params).unwrap();
        assert_eq!(ppg.peaks.len(), truth.peak_indices.len());
        assert_eq!(ppg.troughs.len(), truth.trough_indices.len());
    }

    #[test]
    fn noise_free_tracks_recover_coupling() {
        let cfg = ProtocolConfig {
            noise_sd_mmhg: 0.0,
            ..quick()
        };
        let (s, truth) = generate_session(&cfg, "S01").unwrap();
        for a in &s.annotations {
            let (i0, i1) = ((a.start_s * 100.0).round() as usize, (a.end_s * 100.0).round() as usize);
            let (y, u) = (&truth.sbp_track[i0..i1], &truth.ppg_peak_track[i0..i1]);
            let m = fit_arx(y, u, truth.sbp_coupling.orders).unwrap();
            for (p, q) in m.a.iter().chain(&m.b).zip(truth.sbp_coupling.a.iter().chain(&truth.sbp_coupling.b)) {
                assert!((p - q).abs() <= 1e-6 * q.abs(), "{}: {p} vs {q}", a.label);
            }
        }
        let a = &s.annotations[1];
        let (i0, i1) = ((a.start_s * 100.0).round() as usize, (a.end_s * 100.0).round() as usize);
        let res = grid_search(
            &truth.dbp_track[i0..i1],
            &truth.ppg_trough_track[i0..i1],
            &OrderBounds::default(),
        )
        .unwrap();
        let cell = res.cell(truth.dbp_coupling.orders).and_then(|c| c.model()).unwrap();
        for (p, q) in cell.a.iter().chain(&cell.b).zip(truth.dbp_coupling.a.iter().chain(&truth.dbp_coupling.b)) {
            assert!((p - q).abs() <= 1e-6 * q.abs());
        }
    }

    #[test]
    fn breath_holds_raise_sbp() {
        for seed in 1..=5 {
            let cfg = subject_config(&ProtocolConfig::default(), seed);
            let (s, truth) = generate_session(&cfg, "S").unwrap();
            let mean_in = |a: &IntervalAnnotation| {
                let v: Vec<f64> = truth
                    .peak_indices
                    .iter()
                    .zip(&truth.sbp)
                    .filter(|(p, _)| a.contains(**p as f64 / 100.0))
                    .map(|(_, v)| *v)
                    .collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            for w in s.annotations.windows(2) {
                if w[1].kind == IntervalKind::BreathHold {
                    assert!(mean_in(&w[1]) > mean_in(&w[0]), "seed {seed} {}", w[1].label);
                }
            }
        }
    }

    #[test]
    fn seeded_determinism() {
        let a = generate_session(&quick(), "S01").unwrap();
        let b = generate_session(&quick(), "S01").unwrap();
        assert_eq!(a, b);
        let other = ProtocolConfig {
            rng_seed: 2,
            ..quick()
        };
        assert_ne!(a.0.bp.values(), generate_session(&other, "S01").unwrap().0.bp.values());
    }

    #[test]
    fn invalid_configs_name_the_field() {
        let bad = ProtocolConfig {
            inter_bh_recovery_s: -1.0,
            ..ProtocolConfig::default()
        };
        let msg = generate_session(&bad, "S").unwrap_err().to_string();
        assert!(msg.contains("synth.inter_bh_recovery_s"), "{msg}");
        let unstable = ProtocolConfig {
            coupling: Coupling {
                orders: ArxOrders::new(1, 1, 0).unwrap(),
                a: vec![-1.5],
                b: vec![1.0],
            },
            ..ProtocolConfig::default()
        };
        assert!(matches!(generate_session(&unstable, "S"), Err(Error::UnstableCoupling(_))));
    }

    #[test]
    fn beat_noise_has_requested_sd() {
        let (_, truth) = generate_session(&ProtocolConfig::default(), "S").unwrap();
        let e: Vec<f64> = truth.sbp.iter().zip(&truth.sbp_clean).map(|(a, b)| a - b).collect();
        let sd = (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt();
        assert!((1.5..2.5).contains(&sd), "sd {sd}");
    }
}
