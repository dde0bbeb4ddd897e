//! Beat-to-beat SBP, DBP and MAP estimation from PPG with per-interval ARX models.
//!
//! The pipeline runs waveform -> beat features ([`beats`]) -> 100 Hz tracks
//! ([`spline`]) -> per-interval order/delay grid search ([`arx`]) -> model and
//! cross-interval prediction errors ([`eval`]). [`synth`] generates breath-hold
//! protocol recordings with a known coupling, and [`study`] runs the whole
//! chain over a cohort.

pub mod arx;
pub mod beats;
pub mod error;
pub mod eval;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pipeline;
pub mod ptukey;
pub mod spline;
pub mod stats;
pub mod study;
pub mod synth;

pub use arx::{ArxModel, ArxOrders, ModelSelectionResult, OrderBounds, Selection};
pub use beats::{PeakDetectionParams, PpgDetectionParams, PpgThreshold};
pub use error::{Error, Result};
pub use eval::{ErrorMetric, ErrorReport, ErrorSeries, ErrorType};
pub use io::ModelFile;
pub use model::{
    BeatFeatureSeries, Feature, FeatureTrack, IntervalAnnotation, IntervalKind, RecordingSession, SignalLabel,
    UniformSignal,
};
pub use pipeline::{DetectionConfig, IntervalModels, IntervalTracks};
pub use spline::ResampleGrid;
pub use synth::{Coupling, GroundTruth, ProtocolConfig};
