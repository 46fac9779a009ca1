//! Process models with closed-form marginal and bivariate laws, and the
//! weight / score catalogue.

mod grid;
mod process;
mod weights;

pub use grid::TimeGrid;
pub use process::{Copula, Marginal, ModelSpec};
pub use weights::{ScoreFn, ScoreSpec, Threshold, WeightFn, WeightSpec};
