//! Multi-task regularization networks over vector-valued reproducing kernel
//! Hilbert spaces.
//!
//! * [`kernels`]: matrix-valued kernels `K: X × X → R^{m×m}` and their checks.
//! * [`rkhs`]: the regularization network `f_{z,λ}` and its RKHS geometry.
//! * [`spectral`]: the integral operator `L_K` on a finite input space, solved
//!   exactly by eigendecomposition.
//! * [`synth`]: targets with a known source condition and bounded noisy samples.
//! * [`rates`]: closed-form learning-rate bounds and the Monte Carlo experiment.

pub mod config;
pub mod error;
pub mod io;
pub mod kernels;
pub mod rates;
pub mod rkhs;
pub mod rng;
pub mod spectral;
pub mod synth;

pub use config::{KernelSpec, SpaceSpec};
pub use error::{Error, Result};
pub use kernels::{CouplingMatrix, MatrixKernel, ScalarKernel};
pub use rates::{run_rate_experiment, RateExperimentConfig, RateReport};
pub use rkhs::{solve_regularization_network, RidgeModel, SampleSet};
pub use spectral::{eigendecompose, DiscreteSpace, RhoFunction, SpectralDecomposition};
pub use synth::{build_source_target, NoiseSpec, SourceTarget};
