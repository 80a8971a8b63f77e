//! Nuisance models: the logging propensity `π̂₀`, the dual field `θ̂(·)` and
//! the conditional-mean regression `ĝ(·)`.

pub mod basis;
pub mod dual_field;
pub mod propensity;
pub mod regression;
pub mod tree;

pub use basis::{BasisSpec, FeatureMap};
pub use dual_field::{
    eval_dual_field, fit_dual_field, fit_dual_field_xy, g_hat_target, DualFieldConfig, DualFieldModel, FieldOptimizer,
    Selector,
};
pub use propensity::{clip_probabilities, fit_propensity, PropensityConfig, PropensityKind, PropensityModel};
pub use regression::{fit_regression, RegressionConfig, RegressionKind, RegressionModel};

use crate::data::Dataset;

/// `π̂₀(a | x)` for the propensity model.
pub fn predict_propensity(model: &PropensityModel, x: &[f64], a: usize) -> f64 {
    model.predict(x, a)
}

/// Covariates and `Ĝ` targets of the rows picked by `selector`, ready for
/// [`fit_regression`].
pub fn regression_targets(
    data: &Dataset,
    selector: Selector<'_>,
    field: &DualFieldModel,
    delta: crate::dual::RadiusDelta<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::new();
    let mut t = Vec::new();
    for i in 0..data.len() {
        if selector.selects(data, i) {
            x.extend_from_slice(data.row(i));
            t.push(g_hat_target(data.row(i), data.reward(i), field, delta));
        }
    }
    (x, t)
}
