//! Effect estimation from the unit table via the embedded adjustment
//! formula: fit an outcome model, then average counterfactual plug-in
//! predictions over the empirical covariate distribution.

mod baseline;
mod contrast;
mod effects;
mod fitting;

pub use baseline::answer_universal_baseline;
pub use contrast::{contrast_counts, realize_fraction, validate_condition};
pub use effects::{answer_ate, answer_effects, estimate_adjusted_mean, EffectResult};
pub use fitting::{EstimatorConfig, EstimatorMethod};
