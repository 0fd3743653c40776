//! Correlation-filter visual tracking with background-aware filter learning.
//!
//! The filter is trained over a search window that is several times larger
//! than the target, while the filter support itself stays small: a centered
//! crop operator ties the two grids together, so the surrounding background
//! enters the least-squares fit as negative evidence without any periodic
//! wrap-around artifacts. A spatial penalization mask keeps filter energy
//! concentrated near the window center.
//!
//! The solver works in the frequency domain with an ADMM split between the
//! spatial filter and its spectrum; the per-frequency subproblems are
//! rank-one systems solved in closed form. Tracking adds multi-scale
//! detection, a consensus score that compares each frame's response map
//! against a learned ideal map, and gated model updates driven by that score.
//!
//! Crates built on top of this one get:
//!
//! - [`spectral`]: unitary 2-D transforms, circular shifts, crop/embed.
//! - [`features`]: patch extraction and feature backends (grayscale,
//!   gradient cells, externally computed channel files).
//! - [`solver`]: the ADMM filter learner and its configuration.
//! - [`tracker`]: per-frame detection, consensus verification, model update.
//! - [`eval`]: sequence I/O, synthetic sequences, precision/success metrics.
//! - [`oracle`] / [`selftest`]: dense reference implementations and the
//!   self-check suites built from them.
//!
//! With the default `parallel` feature the per-bin solver and the per-scale
//! detection loop run on rayon; results are bit-identical to the sequential
//! fallback.
//!
//! # Example
//!
//! ```
//! use cftrack_core::eval::{generate_synthetic, run_ope, SynthSpec};
//! use cftrack_core::tracker::TrackerConfig;
//!
//! let spec = SynthSpec { frames: 4, ..SynthSpec::default() };
//! let seq = generate_synthetic(&spec, 7).unwrap();
//! let (result, metrics) = run_ope(&seq, &TrackerConfig::default(), None).unwrap();
//! assert_eq!(result.boxes.len(), 4);
//! assert!(metrics.mean_cle < 5.0);
//! ```

pub mod error;
pub mod eval;
pub mod features;
pub mod oracle;
pub mod rng;
pub mod selftest;
pub mod solver;
pub mod spectral;
pub mod tracker;

pub use error::{Error, Result};
