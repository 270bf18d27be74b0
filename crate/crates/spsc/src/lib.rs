//! Simulation lab for piecewise-stationary low-rank linear contextual bandits.
//!
//! The environment draws rewards `y = x'theta_t + eps` where `theta_t = B_k w_t`
//! lives in an r-dimensional subspace that switches at segment boundaries while
//! the latent state `w_t` follows a stable linear dynamical system. The library
//! provides:
//!
//! * [`env`] — the piecewise low-rank LDS world (segments, latent dynamics,
//!   unit-sphere action sets, noisy scalar rewards);
//! * [`ident`] — the probe-side identification chain: scaled-sphere probes,
//!   the lifted-moment operator and its inverse, streaming subspace tracking,
//!   plug-in variance estimation, and rank thresholding;
//! * [`policy`] — the SPSC policy (known segment boundaries) and its adaptive
//!   variant (online change detection with recovery phases);
//! * [`baselines`] — ambient LinUCB and its sliding-window / discounted /
//!   restart / oracle variants, plus reward-outer-product PCA policies;
//! * [`harness`] — costed-regret accounting, seeded episode/grid/ablation
//!   runners, detector calibration, and CSV/JSON emission.
//!
//! All randomness flows through per-run seeded ChaCha streams; a fixed
//! `(config, seed)` pair replays bit-identically.

pub mod baselines;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod ident;
pub mod linalg;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
