//! A variable-rate lossy image codec built around a single scalar knob:
//! a quantization regulator `a` that rescales the effective quantization
//! bin of every transform coefficient. One codec covers a continuous range
//! of bitrates; side information is coded once and never depends on the
//! operating point.
//!
//! The crate splits into:
//!
//! * [`entropy`] — the Gaussian conditional probability model under the
//!   regulator, in direct and reparameterized forms, and fixed-point
//!   symbol tables;
//! * [`range_coder`] — a bit-exact integer range coder over those tables;
//! * [`transform`] — blockwise orthonormal DCT analysis/synthesis and the
//!   per-band scale (side information) path;
//! * [`codec`] — the container format and the end-to-end pipeline;
//! * [`rate_control`] — lambda ladders, per-lambda regulator search and
//!   the `a` versus `sqrt(lambda)` line fit for continuous rate selection;
//! * [`metrics`] — PSNR, multi-scale structural similarity, and RD-curve
//!   average bitrate comparison;
//! * [`pnm`] — PGM/PPM input and PGM output;
//! * [`synth`] — deterministic synthetic test content.

pub mod codec;
pub mod entropy;
pub mod error;
pub mod metrics;
pub mod pnm;
pub mod range_coder;
pub mod rate_control;
pub mod synth;
pub mod transform;

pub use codec::{account_bits, decode_image, encode_image, BitBreakdown, EncodeOutcome};
pub use entropy::{GaussianParams, Regulator, SymbolDistribution, A_MAX, A_MIN, SIGMA_MIN};
pub use error::{Error, Result};
pub use metrics::{bd_rate, ms_ssim, psnr, RdCurve};
pub use rate_control::{
    fit_sqrt_lambda_line, init_regulators, lambda_to_regulator, optimize_regulator,
    optimize_vector, rd_cost, FitConfig, LambdaSet, LinearFit, RegulatorVector, SearchConfig,
};
pub use transform::Image;
