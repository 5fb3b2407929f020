//! Sensor-fingerprint forensics: estimate photo-response non-uniformity
//! (PRNU) reference patterns from training images, attribute test images to
//! sensors by normalized cross-correlation, and attack the attribution by
//! perturbing an image until a classifier assigns it to a chosen target
//! sensor.
//!
//! The pipeline is organized as:
//!
//! * [`image`] / [`imageio`] — grayscale image container, PGM/PNG codecs,
//!   bilinear resizing;
//! * [`wavelet`] / [`denoise`] — Daubechies-8 decomposition and the locally
//!   adaptive Wiener filter behind noise-residual extraction;
//! * [`fingerprint`] — maximum-likelihood reference patterns, normalized
//!   cross-correlation scoring, and gallery classification;
//! * [`spoof`] — candidate selection, the iterative patch perturbation
//!   attack, and the injection/substitution baselines;
//! * [`synth`] — a seed-deterministic synthetic sensor simulator providing
//!   ground truth;
//! * [`harness`] — experiment runners: confusion matrices, spoof success
//!   rates, iteration studies, fidelity metrics.

pub mod denoise;
pub mod error;
pub mod fingerprint;
pub mod harness;
pub mod image;
pub mod imageio;
pub mod report;
pub mod seeds;
pub mod spoof;
pub mod synth;
pub mod wavelet;

pub use denoise::{denoise, dwt2, idwt2, residual, DenoiseParams, NoiseResidual, WaveletKind};
pub use error::{Error, Result};
pub use harness::{
    materialize, psnr, run_identification, run_iteration_study, run_spoof_experiment,
    ConfusionMatrix, ExperimentConfig, SSRReport, SensorDataset, SensorKind, SensorSpec,
    SpoofMethod,
};
pub use fingerprint::{
    classify, classify_residual, estimate_reference, load_pattern, mle_accumulate, ncc,
    ncc_arrays, save_pattern, zero_mean, NCCScore, PostprocessMode, ReferencePattern,
    SensorGallery,
};
pub use image::{clamp_intensity, Image};
pub use imageio::{load_dir, load_image, save_pgm};
pub use spoof::{
    baseline1_inject, baseline2_substitute, baseline_denoised_inject, perturb, select_candidate,
    PatchSpec, PerturbParams, SpoofOptions, SpoofResult, TrajectoryPoint,
};
pub use synth::{make_scene_bank, SyntheticSensor};
pub use wavelet::{DetailBands, WaveletPyramid};
