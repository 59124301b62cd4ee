pub mod bnb;
pub mod feasibility;
pub mod heuristics;
pub mod instance;
pub mod lp;
pub mod model;
pub mod network;
pub mod oracle;
pub mod preprocess;
pub mod priority;
pub mod report;

/// Double-precision simplex.
pub type Lp = lp::Simplex<f64>;
pub type LpF32 = lp::Simplex<f32>;
/// Simplex over exact rationals, for verification.
pub type ExactLp = lp::Simplex<num_rational::BigRational>;
pub type PrefixTree = feasibility::PrefixTree<i64>;
pub type DisplacementIndex = feasibility::DisplacementIndex<i64>;
