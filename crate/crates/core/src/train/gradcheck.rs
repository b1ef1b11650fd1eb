use crate::adapters::AdapterState;
use crate::densela::Matrix;
use crate::error::Result;

/// Step used by [`check_adapter_gradient`].
pub const FD_STEP: f64 = 1e-5;

/// Central differences `(f(p + h·e_i) − f(p − h·e_i)) / 2h` for every
/// coordinate of `at`.
pub fn central_difference(mut f: impl FnMut(&[f64]) -> Result<f64>, at: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut p = at.to_vec();
    let mut out = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        p[i] = at[i] + h;
        let plus = f(&p)?;
        p[i] = at[i] - h;
        let minus = f(&p)?;
        p[i] = at[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_abs_error: f64,
    /// `max|analytic − numeric| / max(max|numeric|, 1e-12)`.
    pub rel_error: f64,
}

impl GradCheck {
    pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheck {
        let max_abs_error = analytic
            .iter()
            .zip(numeric)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let scale = numeric.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
        GradCheck {
            max_abs_error,
            rel_error: max_abs_error / scale,
        }
    }
}

/// Checks `param_gradients` against central differences of the linear
/// probe loss `L = <upstream, forward(x)>`.
pub fn check_adapter_gradient(state: &AdapterState, x: &Matrix, upstream: &Matrix) -> Result<GradCheck> {
    let analytic = state.param_gradients(x, upstream)?;
    let numeric = central_difference(
        |p| {
            let y = state.with_params(p)?.forward(x)?;
            Ok(y.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum())
        },
        &state.params(),
        FD_STEP,
    )?;
    Ok(GradCheck::compare(&analytic, &numeric))
}
