//! Angular-margin softmax losses on the unit hypersphere.
//!
//! - [`geometry`]: unit vectors, clamped angles, stable softmax cross-entropy.
//! - [`loss`]: NormFace / CosFace / ArcFace / X2-Softmax logits and the
//!   shared margin-softmax loss with analytic gradients.
//! - [`gradcheck`]: finite-difference verification of those gradients.
//! - [`margin`]: decision-boundary geometry, i.e. the angular margin `Δθ` as
//!   a function of the angle `θ` between two class prototypes.
//! - [`synthetic`]: seeded toy datasets on the sphere.
//! - [`trainer`]: a small SGD harness comparing losses on toy data.
//! - [`verification`]: pair scores, best-threshold accuracy, TAR@FAR and
//!   score histograms.
//! - [`report`]: CSV/JSON writers and run manifests.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod loss;
pub mod margin;
pub mod report;
pub mod synthetic;
pub mod trainer;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::{angle_between, normalize, softmax_cross_entropy, Angle, Matrix, UnitVector};
pub use loss::{
    forward_backward, sweep_hyperparameters, ClassWeights, EmbeddingBatch, LossConfig, LossKind,
    LossResult,
};
pub use margin::{
    hyperparameter_effect, margin_at_angle, monotonicity_report, trace_margin_curve, MarginCurve,
    Monotonicity, ThetaGrid,
};
