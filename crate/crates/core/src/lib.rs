//! Drug–target affinity regression with a graph contrastive drug encoder.
//!
//! Drugs are SMILES strings encoded by a GCN with global max pooling;
//! targets are amino-acid strings encoded by a three-layer 1D CNN. The two
//! vectors feed a three-layer MLP. Training minimizes
//!
//! ```text
//! L = L_mse + α·L_gcl + β·(L_uniform_d + L_uniform_t)
//! ```
//!
//! where `L_gcl` is InfoNCE between two noisy views of each drug embedding
//! (the noise stays in the embedding's hyperoctant with norm ε) and the
//! uniformity terms spread drug and target embeddings apart.
//!
//! Everything runs on the tape from `graphcl-autodiff`, generic over
//! `f32`/`f64`.

pub mod ablation;
pub mod config;
pub mod data;
pub mod drug;
mod error;
pub mod gradcheck;
mod init;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod protein;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
