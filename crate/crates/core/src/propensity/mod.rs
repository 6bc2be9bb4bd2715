//! Propensity scores from binary and multinomial logit models.
//!
//! The total contrasts use a binary logit of policy receipt on the design;
//! the exclusive contrasts share one multinomial logit over all lattice
//! cells with `NoPolicy` as the baseline.

mod design;
mod logit;

pub use design::{
    build_design, build_design_with, design_row, DesignMatrix, DesignOptions, DESIGN_COLUMNS,
};
pub(crate) use logit::sigmoid;
pub use logit::{
    binary_gradient, binary_log_likelihood, fit_binary_logit, fit_multinomial_logit,
    generalized_score, multinomial_gradient, multinomial_log_likelihood, PropensityModel, Scores,
    MAX_ITERATIONS, SEPARATION_BOUND, TOLERANCE,
};
