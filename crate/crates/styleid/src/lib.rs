//! Few-shot portrait stylization toolkit.
//!
//! The pipeline: invert a handful of style references and an input photo
//! into a generator's extended latent space, repeatedly blend the style
//! rows of the reference latents with freshly sampled ones, and fine-tune
//! the generator so the blended latents reproduce the references while a
//! weighted identity term keeps the photo recognizable. Everything runs
//! end-to-end on a built-in deterministic toy generator; externally
//! trained checkpoints plug in through the flat-weights container format.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod inversion;
pub mod io;
pub mod latent;
pub mod metrics;
pub mod numeric;
pub mod seeds;

pub mod generator;
pub mod perceptual;
pub mod trainer;

pub use error::{Error, Result};
pub use generator::{mean_latent, Generator, Image, ToyConfig, ToyGenerator};
pub use inversion::{invert, InversionOpts, InversionResult};
pub use latent::{decouple, mix, sample_random_style, LatentCode, MixParams, SwapList};
pub use metrics::{fid_score, fit_gaussian, frechet_distance, ssim, GaussianStats, SsimOpts};
pub use perceptual::FeatureStack;
pub use trainer::{fine_tune, stylize, EpochRecord, TrainConfig, TrainOutcome};
