//! Learning-path recommendation engine: a bipartite graph-attention policy
//! over document–keyword corpora, trained with REINFORCE against simulated
//! learners, plus the experiment harness around it.

pub mod autodiff;
pub mod corpus;
pub mod experiment;
pub mod learner;
pub mod policy;
pub mod scalar;
pub mod trainer;

/// Scalar type used by everything above the autodiff layer. The model is
/// tiny and gradient checks need the precision, so this is `f64`.
pub type Real = f64;

/// Concrete tensor aliases over the generic autodiff core.
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type Graph32 = autodiff::Graph<f32>;
