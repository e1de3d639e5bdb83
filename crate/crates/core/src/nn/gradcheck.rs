//! Central finite-difference gradient checking in `f64`.

use super::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`. The floor keeps entries whose true
/// gradient is numerically zero from dominating the comparison.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst disagreement found by [`check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare `analytic` against central differences of `loss` at `params`,
/// perturbing every entry. `loss` must be a deterministic function of the
/// parameters.
pub fn check(
    params: &mut [Tensor<f64>],
    analytic: &[Tensor<f64>],
    eps: f64,
    floor: f64,
    mut loss: impl FnMut(&[Tensor<f64>]) -> f64,
) -> GradCheck {
    assert_eq!(params.len(), analytic.len(), "gradcheck: tensor count");
    let mut worst =
        GradCheck { max_relative_error: 0.0, tensor: 0, index: 0, analytic: 0.0, numeric: 0.0, checked: 0 };
    for t in 0..params.len() {
        assert_eq!(params[t].shape(), analytic[t].shape(), "gradcheck: shape of tensor {t}");
        for i in 0..params[t].len() {
            let orig = params[t].data()[i];
            params[t].data_mut()[i] = orig + eps;
            let up = loss(params);
            params[t].data_mut()[i] = orig - eps;
            let down = loss(params);
            params[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[t].data()[i];
            let err = relative_error(a, numeric, floor);
            worst.checked += 1;
            if err > worst.max_relative_error {
                worst = GradCheck { max_relative_error: err, tensor: t, index: i, analytic: a, numeric, ..worst };
            }
        }
    }
    worst
}
