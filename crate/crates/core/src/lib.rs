//! Semi-supervised squared-loss mutual information (SMI) estimation.
//!
//! A density-ratio model `r(x, y) = sum_l alpha_l K(x~_l, x) L(y~_l, y)` is
//! fitted jointly with an entropic transport plan that softly pairs unpaired
//! `x` and `y` samples. See [`estimator::fit`] for the entry point.

pub mod benchmark;
pub mod data;
pub mod density_ratio;
pub mod error;
pub mod estimator;
pub mod kernels;
pub mod matching;
pub mod model_selection;
pub mod transport;

pub use density_ratio::{RatioModel, QuadTerm, LinTerm};
pub use error::{Error, Result};
pub use estimator::{fit, smi_estimate, smi_estimate_paired, EstimatorConfig, FitResult, Problem, SampleSet};
pub use kernels::{Bandwidth, BasisSet};
pub use transport::{SinkhornParams, TransportPlan};
