//! Randomization-only prediction intervals for attributable treatment
//! effects under unmodeled interference.
//!
//! The pipeline: build an estimand weight vector `w(X)`, compute its
//! randomization moments (`E[w]`, `Q = Cov(w)`, centering weights `b̄`),
//! split `Q` into a concave part plus a diagonal, and bound
//! `b̄ᵀϑ ± z·√(ϑᵀQϑ)` over binary counterfactuals `ϑ`.

pub mod data;
pub mod design;
pub mod error;
pub mod estimands;
pub mod exposure;
pub mod intervals;
pub mod linalg;
pub mod moments;
pub mod report;
pub mod sim;
pub mod solver;
pub mod split;

pub use data::{
    expand_aggregate, load_experiment, reaggregate, write_experiment, AggregateRow, AggregateTable, Arm,
    ExperimentData, Network, Schema,
};
pub use design::{DesignDescriptor, DesignKind};
pub use error::{Error, Result};
pub use estimands::{Estimand, RegressorSpec, Term, WeightScheme};
pub use exposure::{
    build_propensity_classes, cap_degree, compute_exposure, threshold_exposure, ClassKey,
    PropensityClasses,
};
pub use intervals::IntervalResult;
pub use moments::{CovarianceMatrix, WeightMoments};
pub use solver::{BoundProblem, LinearConstraint, Sense, SolveResult, SolveStatus, SolverConfig};
pub use split::{SplitCertificate, SplitMethod};
