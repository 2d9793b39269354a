//! Penalized maximum likelihood with second-order difference penalties on spline coefficients.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dropout::NoiseSpec;
use crate::error::{Error, Result};
use crate::model::{loglik, score, GlmSpec};
use crate::optim::{fit_penalized, FitResult, OptimConfig, Penalty};
use crate::scalar::Scalar;

/// `D₂`, the `(d − 2) × d` second-difference operator. Empty for `d < 3`.
pub fn second_difference_matrix<S: Scalar>(d: usize) -> Array2<S> {
    let rows = d.saturating_sub(2);
    let mut m = Array2::zeros((rows, d));
    for r in 0..rows {
        m[[r, r]] = S::one();
        m[[r, r + 1]] = S::lit(-2.0);
        m[[r, r + 2]] = S::one();
    }
    m
}

/// `βᵀD₂ᵀD₂β = Σ_j (β_{j+2} − 2β_{j+1} + β_j)²`.
pub fn difference_penalty<S: Scalar>(coef: &[S]) -> S {
    coef.windows(3)
        .map(|w| {
            let d = w[2] - S::lit(2.0) * w[1] + w[0];
            d * d
        })
        .sum()
}

/// Adds `scale · D₂ᵀD₂ v` to `out`.
fn add_penalty_product<S: Scalar>(v: &[S], scale: S, out: &mut [S]) {
    let two = S::lit(2.0);
    for j in 0..v.len().saturating_sub(2) {
        let d = scale * (v[j + 2] - two * v[j + 1] + v[j]);
        out[j] += d;
        out[j + 1] -= two * d;
        out[j + 2] += d;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffPenalty {
    pub lambda_mean: f64,
    pub lambda_disp: f64,
}

impl DiffPenalty {
    pub fn new(lambda_mean: f64, lambda_disp: f64) -> Result<Self> {
        if !(lambda_mean >= 0.0 && lambda_disp >= 0.0) || !lambda_mean.is_finite() || !lambda_disp.is_finite() {
            return Err(Error::Config(format!(
                "smoothing parameters must be finite and non-negative, got ({lambda_mean}, {lambda_disp})"
            )));
        }
        Ok(Self { lambda_mean, lambda_disp })
    }

    /// `P = D₂ᵀD₂` for a coefficient vector of length `d`.
    pub fn matrix<S: Scalar>(d: usize) -> Array2<S> {
        let dm = second_difference_matrix::<S>(d);
        dm.t().dot(&dm)
    }
}

impl<S: Scalar> Penalty<S> for DiffPenalty {
    fn value(&self, beta: &[S], alpha: &[S]) -> S {
        S::lit(self.lambda_mean) * difference_penalty(beta)
            + S::lit(self.lambda_disp) * difference_penalty(alpha)
    }

    fn add_gradient(&self, beta: &[S], alpha: &[S], grad_beta: &mut [S], grad_alpha: &mut [S]) {
        add_penalty_product(beta, S::lit(2.0 * self.lambda_mean), grad_beta);
        add_penalty_product(alpha, S::lit(2.0 * self.lambda_disp), grad_alpha);
    }
}

/// `−Σ ℓ_i(β, α) + λ_μ βᵀPβ + λ_γ αᵀPα`.
pub fn pmle_objective<S: Scalar>(spec: &GlmSpec<S>, y: &[S], penalty: &DiffPenalty) -> Result<S> {
    let pen = Penalty::<S>::value(penalty, spec.beta.as_slice().unwrap(), spec.alpha.as_slice().unwrap());
    Ok(pen - loglik(spec, y)?)
}

/// Gradient of [`pmle_objective`] with respect to `β` and `α`.
pub fn pmle_gradient<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    penalty: &DiffPenalty,
) -> Result<(Array1<S>, Array1<S>)> {
    let report = score(spec, y)?;
    let mut gb = -report.score_beta;
    let mut ga = -report.score_alpha;
    penalty.add_gradient(
        spec.beta.as_slice().unwrap(),
        spec.alpha.as_slice().unwrap(),
        gb.as_slice_mut().unwrap(),
        ga.as_slice_mut().unwrap(),
    );
    Ok((gb, ga))
}

/// Minimizes [`pmle_objective`] with the shared SGD engine and no dropout noise.
pub fn pmle_fit<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    penalty: &DiffPenalty,
    config: &OptimConfig,
) -> Result<FitResult<S>> {
    DiffPenalty::new(penalty.lambda_mean, penalty.lambda_disp)?;
    fit_penalized(spec, y, &NoiseSpec::none(), config, penalty)
}
