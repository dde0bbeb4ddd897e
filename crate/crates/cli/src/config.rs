//! TOML run configuration. Flags given on the command line win over the file.

use std::path::Path;

use serde::Deserialize;

use ppgbp_core::{
    DetectionConfig, Error, ErrorMetric, OrderBounds, PeakDetectionParams, PpgDetectionParams, PpgThreshold,
    ProtocolConfig, Selection,
};

pub const CONFIG_HELP: &str = "\
CONFIG FILE (--config FILE, TOML; every key optional, flags override):

  [detection]
  bp.height_mmhg         = 15.0      minimum SBP peak height (absolute mmHg)
  bp.prominence_mmhg     = 15.0      minimum SBP peak prominence
  bp.distance_samples    = 20        minimum samples between SBP peaks
  ppg.height_mode        = \"median\"  \"median\" of the PPG record, or \"absolute\"
  ppg.height             = 0.0       threshold used when height_mode = \"absolute\"
  ppg.prominence_mode    = \"iqr-fraction\"  \"iqr-fraction\" or \"absolute\"
  ppg.prominence         = 0.5       IQR fraction, or absolute prominence
  ppg.distance_samples   = 20        minimum samples between PPG peaks

  [fit]
  selection = \"mse\"          \"mse\" (lowest fit MSE) or \"aic\"
  n_a = [1, 5]               inclusive autoregressive order range (within 1..5)
  n_b = [1, 5]               inclusive input order range (within 1..5)
  n_k = [0, 5]               inclusive input delay range (within 0..5)

  [eval]
  error_metric = \"free-run\"  \"free-run\" (simulate from PPG) or \"one-step\"
  alpha        = 0.05        Tukey-Kramer significance level

  [synth]
  baseline_nb_s = 60.0             n_breath_holds = 5
  bh_duration_range_s = [20.0, 60.0]
  inter_bh_recovery_s = 90.0       final_nb_s = 60.0
  sample_rate_hz = 100.0           heart_rate_hz = 1.2
  heart_rate_variability = 0.03    relative SD of beat intervals
  bh_bp_rise_mmhg = 20.0           SBP rise reached by a long hold
  dbp_rise_fraction = 0.6          DBP rise relative to SBP rise
  noise_sd_mmhg = 2.0              beat-level noise SD (0 = noise free)
  slow_noise_fraction = 0.9        share of noise variance that is slow
  slow_noise_ar = 0.7              beat-to-beat correlation of slow noise
  sbp_dbp_noise_correlation = 0.95
  sbp_baseline_mmhg = 126.8        dbp_baseline_mmhg = 74.8
  respiratory_mmhg = 3.0           respiratory_rate_hz = 0.25
  mayer_mmhg = 2.5                 drift_sd_mmhg = 2.0
  dbp_gain_ratio = 0.9             subject_spread = 1.0
  rng_seed = 1
  coupling = { orders = { n_a = 2, n_b = 2, n_k = 3 }, a = [-1.9, 0.9025], b = [0.0018, 0.0012] }

EXIT CODES: 0 success, 1 finished with warnings, 2 invalid input or I/O failure.";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub detection: DetectionSection,
    pub fit: FitSection,
    pub eval: EvalSection,
    pub synth: ProtocolConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub bp: BpSection,
    pub ppg: PpgSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpSection {
    pub height_mmhg: f64,
    pub prominence_mmhg: f64,
    pub distance_samples: usize,
}

impl Default for BpSection {
    fn default() -> Self {
        let d = PeakDetectionParams::bp_default();
        Self {
            height_mmhg: d.min_peak_height,
            prominence_mmhg: d.min_peak_prominence,
            distance_samples: d.min_peak_distance_samples,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeightMode {
    Median,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProminenceMode {
    IqrFraction,
    Absolute,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpgSection {
    pub height_mode: HeightMode,
    pub height: f64,
    pub prominence_mode: ProminenceMode,
    pub prominence: f64,
    pub distance_samples: usize,
}

impl Default for PpgSection {
    fn default() -> Self {
        Self {
            height_mode: HeightMode::Median,
            height: 0.0,
            prominence_mode: ProminenceMode::IqrFraction,
            prominence: 0.5,
            distance_samples: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub selection: Selection,
    pub n_a: (usize, usize),
    pub n_b: (usize, usize),
    pub n_k: (usize, usize),
}

impl Default for FitSection {
    fn default() -> Self {
        let b = OrderBounds::default();
        Self {
            selection: Selection::Mse,
            n_a: b.n_a,
            n_b: b.n_b,
            n_k: b.n_k,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub error_metric: ErrorMetric,
    pub alpha: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            error_metric: ErrorMetric::FreeRun,
            alpha: 0.05,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> ppgbp_core::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))
    }

    pub fn detection(&self) -> ppgbp_core::Result<DetectionConfig> {
        let bp = &self.detection.bp;
        let bp = PeakDetectionParams::new(bp.height_mmhg, bp.prominence_mmhg, bp.distance_samples).map_err(|e| match e {
            Error::InvalidConfig { field, reason } => invalid(&format!("detection.bp.{field}"), reason),
            other => other,
        })?;
        let p = &self.detection.ppg;
        if !p.height.is_finite() {
            return Err(invalid("detection.ppg.height", "must be finite"));
        }
        if !(p.prominence.is_finite() && p.prominence >= 0.0) {
            return Err(invalid("detection.ppg.prominence", "must be finite and >= 0"));
        }
        if p.distance_samples < 1 {
            return Err(invalid("detection.ppg.distance_samples", "must be >= 1"));
        }
        let ppg = PpgDetectionParams {
            height: match p.height_mode {
                HeightMode::Median => PpgThreshold::Median,
                HeightMode::Absolute => PpgThreshold::Absolute(p.height),
            },
            prominence: match p.prominence_mode {
                ProminenceMode::IqrFraction => PpgThreshold::IqrFraction(p.prominence),
                ProminenceMode::Absolute => PpgThreshold::Absolute(p.prominence),
            },
            distance_samples: p.distance_samples,
        };
        Ok(DetectionConfig { bp, ppg })
    }

    pub fn bounds(&self) -> ppgbp_core::Result<OrderBounds> {
        OrderBounds::new(self.fit.n_a, self.fit.n_b, self.fit.n_k).map_err(|e| invalid("fit.n_a/n_b/n_k", e.to_string()))
    }

    pub fn alpha(&self, flag: Option<f64>) -> ppgbp_core::Result<f64> {
        let a = flag.unwrap_or(self.eval.alpha);
        if !(a > 0.0 && a < 1.0) {
            return Err(invalid("eval.alpha", format!("must be in (0, 1), got {a}")));
        }
        Ok(a)
    }
}
