//! FMCW radar-altimeter simulation with a convolution-only denoising autoencoder
//! for RF interference mitigation.
//!
//! The pipeline is: [`waveform`] builds the triangular chirp, [`channel`]
//! corrupts it, [`dataset`] stores (clean, dirty) pairs, [`nn`] and
//! [`autoencoder`] train the denoiser, and [`rangeproc`], [`metrics`] and
//! [`altsim`] judge the result through stretch processing. [`config`] ties the
//! settings of every stage into one TOML file.

pub mod altsim;
pub mod autoencoder;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fft;
pub mod metrics;
pub mod nn;
pub mod rangeproc;
pub mod waveform;

pub use altsim::{run_landing_sim, SimConfig, SimResult, Trajectory};
pub use autoencoder::{build_model, Denoiser, ModelConfig, ModelWeights};
pub use channel::{FadingParams, QpskSpec, ToneSpec};
pub use config::RunConfig;
pub use dataset::{Dataset, DatasetReader, GenerationConfig, PairSource};
pub use error::{Error, Result};
pub use metrics::{run_sweep, spectrogram, EvalRow, EvalSweepConfig, Spectrogram};
pub use nn::Tensor;
pub use rangeproc::{estimate_range, stretch_process, RangeEstimate, RangeProfile};
pub use waveform::{ChirpParams, IqSignal};

/// Propagation speed used for every delay/range conversion.
pub const SPEED_OF_LIGHT_M_S: f64 = 3.0e8;
