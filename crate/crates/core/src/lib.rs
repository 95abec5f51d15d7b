//! Numerical laboratory for Dirichlet-to-Neumann maps on conformally
//! Stackel toric cylinders `[0,A] x T^2`.
//!
//! The crate builds the DN map of such a metric two independent ways — an
//! R-separated construction assembled from two-parameter Weyl-Titchmarsh
//! data over the joint spectrum of the commuting angular operators, and a
//! direct finite-difference solve of the Laplace-Beltrami Dirichlet problem
//! — and ships verification suites for the structural identities, gauge
//! invariances and asymptotic bounds that connect them.

pub mod angular;
pub mod conformal;
pub mod curve;
pub mod dn;
pub mod error;
pub mod expr;
pub mod fd3;
pub mod flow;
pub mod grid;
pub mod liouville;
pub mod logc;
pub mod oracle;
pub mod radial;
pub mod stackel;
pub mod suites;

pub use curve::{constant, parse_curve, Curve, UnivariateFn};
pub use stackel::{
    column_gauge, first_column_shift, fixture_from_json, load_fixture, metric_eval,
    radial_normal_form, reparam, validate_stackel, ConformalFactor, ConformalMetric, Fixture,
    MetricEval, RadialNormalForm, StackelMatrix, ValidationReport,
};
