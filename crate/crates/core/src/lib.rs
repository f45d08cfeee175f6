//! Identification of functional brain networks from wide-field calcium
//! imaging data matrices.
//!
//! Three methods are provided, all operating on T×N matrices of frames ×
//! brain pixels ([`DataMatrix`]):
//!
//! - seed-based correlation ([`sbc`]),
//! - spatial FastICA ([`ica`]),
//! - an LSTM autoencoder ([`lstm`]) whose latent time courses are regressed
//!   against the data to obtain spatial maps ([`decompose`]).
//!
//! [`synth`] generates cohorts with known ground-truth sources, [`preprocess`]
//! implements the imaging chain, and [`eval`] holds the evaluation battery
//! (Dice overlap, t-SNE + silhouette, reproducibility, epoch stability).

pub mod cli;
pub mod decompose;
pub mod error;
pub mod eval;
pub mod ica;
pub mod io;
pub mod linalg;
pub mod lstm;
pub mod preprocess;
pub mod sbc;
pub mod stats;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    AffineTransform, AtlasFrame, BrainMask, DataMatrix, FcMatrix, LatentEmbedding, MaskId, Point,
    SpatialMap,
};
