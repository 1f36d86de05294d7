//! Training-data recovery from overparameterized autoencoders.
//!
//! A trained autoencoder `f` that fits its training set to numerical
//! precision has every training image as a fixed point. Given a training
//! image with an unknown subset of pixels erased (and possibly noise
//! added), the [`recovery`] module estimates both the image and the erasure
//! mask by alternating between an ADMM solver, which uses `f` as a
//! plug-and-play prior, and a closed-form per-pixel mask update.
//!
//! Supporting modules train such autoencoders ([`trainer`]), degrade images
//! ([`degradation`]), score recoveries ([`metrics`]), and numerically check
//! when a tied two-layer autoencoder is a Moreau proximity operator
//! ([`proxcheck`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod degradation;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod numerics;
pub mod parallel;
pub mod proxcheck;
pub mod recovery;
pub mod synth;
pub mod trainer;

pub use autoencoder::{
    tied_jacobian, Activation, Autoencoder, AutoencoderModel, DenseLayer, FcArchitecture,
    FnAutoencoder, Model, TiedAutoencoder,
};
pub use degradation::{degrade, generate_mask, DegradationSpec, ErasureMask, MaskPattern};
pub use error::{Error, Result};
pub use geometry::Geometry;
pub use metrics::{mse, psnr, summarize, EvalSummary, EvalThresholds};
pub use numerics::{Matrix, Rng, Vector};
pub use proxcheck::{check_moreau, numeric_jacobian, ProxReport, Verdict};
pub use recovery::{
    admm_solve, baseline_iterate, data_fidelity_update, mask_update, recover_known_h,
    recover_unknown_h, MaskInit, RecoveryConfig, RecoveryResult,
};
pub use trainer::{mse_loss, project_spectral_norm, train, TrainConfig, TrainOutcome};
