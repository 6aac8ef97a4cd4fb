//! Most-influential-subset selection for least-squares and logistic models.
//!
//! Given a fitted model and a quantity of interest (for example the
//! prediction at a test point), the library finds small subsets of training
//! samples whose removal moves that quantity the most. It provides exact
//! closed-form removal effects for least squares, influence-based
//! approximations, a family of greedy and relaxation-based selectors, brute
//! force ground truth, synthetic instance generators that provably defeat
//! the one-shot heuristics, and an evaluation harness.

pub mod counterexamples;
pub mod dataset;
pub mod effects;
pub mod error;
pub mod glm;
pub mod harness;
pub mod ols;
pub mod selectors;

pub use dataset::{ClusterConfig, Dataset, SyntheticConfig};
pub use effects::{EffectReport, TargetFunction};
pub use error::{MissError, Result};
pub use glm::GlmFit;
pub use harness::{Algorithm, EvalReport};
pub use ols::OlsFit;
pub use selectors::{ModelKind, Scoring, SubsetTrace};
