//! A desk-scale laboratory for diffusion-guided source-free domain
//! adaptation, with the generative prior replaced by a closed-form Gaussian
//! mixture so every quantity in the loop is exact and testable.
//!
//! The pieces, bottom up:
//!
//! - [`grid`]: square f64 grids, the only data shape in the crate;
//! - [`rng`]: named deterministic substreams derived from one run seed;
//! - [`freq`]: FFT band split/merge with hard radial masks;
//! - [`schedule`]: the forward-noise schedule and inference level ladder;
//! - [`oracle`]: the mixture world with closed-form posterior mean, noise
//!   prediction, and Bayes classifier;
//! - [`sampler`]: guidance blending, deterministic reverse steps, inversion;
//! - [`manipulate`]: the progressive anchor-spliced manipulation pipeline;
//! - [`classifier`]: softmax heads, entropy, SGD training, nuclear-norm
//!   scoring;
//! - [`synthdata`]: the band-separated two-domain benchmark;
//! - [`adapt`]: the trust-partition refinement loop;
//! - [`config`], [`artifacts`], [`runner`]: TOML configs, on-disk formats,
//!   and the end-to-end driver behind the `dptm` binary.
//!
//! Each major capability has a runnable walkthrough under `examples/`:
//!
//! ```text
//! cargo run --example band_mixing       # split a grid into spectral bands
//! cargo run --example denoising_oracle  # posterior mean and score, exactly
//! cargo run --example guided_sampling   # class-guided generation
//! cargo run --example ddim_roundtrip    # inversion error vs step count
//! cargo run --example manipulate_sample # one sample pulled to a class
//! cargo run --example adapt_run         # a small end-to-end adaptation
//! cargo run --example select_checkpoint # nuclear-norm model selection
//! ```

pub mod adapt;
pub mod artifacts;
pub mod classifier;
pub mod config;
pub mod error;
pub mod freq;
pub mod grid;
pub mod manipulate;
pub mod oracle;
pub mod rng;
pub mod runner;
pub mod sampler;
pub mod schedule;
pub mod synthdata;

pub use error::{Error, Result};
