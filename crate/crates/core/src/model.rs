//! The extended GLM: canonical link in the mean, log link in the dispersion.
//!
//! Per observation, with `η = xᵀβ`, `log γ = zᵀα`, `s = φ/ν` and `T(y) = yθ(y) − b(θ(y))`:
//!
//! ```text
//! ℓ(β, α) = ½ zᵀα + γ (yη − b(η))/s + (1 − γ) T(y)/s
//! ```
//!
//! This is the DEF log density with `C = 1` and the base-measure term dropped.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_len, Error, Result};
use crate::families::FamilyKernel;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GlmSpec<S> {
    pub kernel: FamilyKernel,
    /// Mean design, `n × d_μ`.
    pub x: Array2<S>,
    /// Dispersion design, `n × d_γ`.
    pub z: Array2<S>,
    pub beta: Array1<S>,
    pub alpha: Array1<S>,
    pub phi: S,
    /// Known per-observation weights `ν_i`.
    pub weights: Array1<S>,
}

impl<S: Scalar> GlmSpec<S> {
    pub fn new(
        kernel: FamilyKernel,
        x: Array2<S>,
        z: Array2<S>,
        beta: Array1<S>,
        alpha: Array1<S>,
        phi: S,
        weights: Array1<S>,
    ) -> Result<Self> {
        let n = x.nrows();
        check_len("dispersion design rows", n, z.nrows())?;
        check_len("weights", n, weights.len())?;
        check_len("mean coefficients", x.ncols(), beta.len())?;
        check_len("dispersion coefficients", z.ncols(), alpha.len())?;
        if !(phi > S::zero()) {
            return Err(Error::Domain(format!("scale φ must be positive, got {phi}")));
        }
        if weights.iter().any(|&w| !(w > S::zero())) {
            return Err(Error::Domain("weights ν_i must be positive".into()));
        }
        // ndarray rows are used as contiguous slices in the hot loops
        let x = x.as_standard_layout().into_owned();
        let z = z.as_standard_layout().into_owned();
        Ok(Self { kernel, x, z, beta, alpha, phi, weights })
    }

    /// Unit weights, zero coefficients.
    pub fn with_designs(kernel: FamilyKernel, x: Array2<S>, z: Array2<S>, phi: S) -> Result<Self> {
        let (n, dm, dg) = (x.nrows(), x.ncols(), z.ncols());
        Self::new(kernel, x, z, Array1::zeros(dm), Array1::zeros(dg), phi, Array1::ones(n))
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_mean(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_disp(&self) -> usize {
        self.z.ncols()
    }

    #[inline]
    pub fn scale(&self, i: usize) -> S {
        self.phi / self.weights[i]
    }

    #[inline]
    pub fn x_row(&self, i: usize) -> &[S] {
        row_slice(&self.x, i)
    }

    #[inline]
    pub fn z_row(&self, i: usize) -> &[S] {
        row_slice(&self.z, i)
    }

    /// `θ_i = x_iᵀβ`.
    pub fn eta(&self, i: usize) -> S {
        dot(self.x_row(i), slice(&self.beta))
    }

    /// `log γ_i = z_iᵀα`.
    pub fn log_gamma(&self, i: usize) -> S {
        dot(self.z_row(i), slice(&self.alpha))
    }

    pub fn set_coefficients(&mut self, beta: &[S], alpha: &[S]) -> Result<()> {
        check_len("mean coefficients", self.d_mean(), beta.len())?;
        check_len("dispersion coefficients", self.d_disp(), alpha.len())?;
        self.beta.as_slice_mut().expect("owned coefficients").copy_from_slice(beta);
        self.alpha.as_slice_mut().expect("owned coefficients").copy_from_slice(alpha);
        Ok(())
    }

    /// Restriction of the model to a subset of observations.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick = |m: &Array2<S>| {
            let mut out = Array2::zeros((rows.len(), m.ncols()));
            for (k, &i) in rows.iter().enumerate() {
                out.row_mut(k).assign(&m.row(i));
            }
            out
        };
        Self {
            kernel: self.kernel,
            x: pick(&self.x),
            z: pick(&self.z),
            beta: self.beta.clone(),
            alpha: self.alpha.clone(),
            phi: self.phi,
            weights: rows.iter().map(|&i| self.weights[i]).collect(),
        }
    }

    pub(crate) fn check_responses(&self, y: &[S]) -> Result<()> {
        check_len("responses", self.n(), y.len())?;
        y.iter().try_for_each(|&v| self.kernel.check_support(v))
    }
}

#[inline]
pub(crate) fn row_slice<S>(m: &Array2<S>, i: usize) -> &[S] {
    let cols = m.ncols();
    &m.as_slice().expect("standard layout")[i * cols..(i + 1) * cols]
}

#[inline]
pub(crate) fn slice<S>(v: &Array1<S>) -> &[S] {
    v.as_slice().expect("contiguous vector")
}

/// Single-observation log-likelihood term in terms of its linear predictors.
/// `saturated` is `yθ(y) − b(θ(y))`.
#[inline]
pub fn obs_loglik<S: Scalar>(
    kernel: &FamilyKernel,
    eta: S,
    log_gamma: S,
    y: S,
    saturated: S,
    scale: S,
) -> S {
    let g = log_gamma.exp();
    S::lit(0.5) * log_gamma + g * (y * eta - kernel.b(eta)) / scale
        + (S::one() - g) * saturated / scale
}

/// Derivatives of [`obs_loglik`] with respect to `η` and `log γ`.
#[inline]
pub fn obs_score<S: Scalar>(
    kernel: &FamilyKernel,
    eta: S,
    log_gamma: S,
    y: S,
    saturated: S,
    scale: S,
) -> (S, S) {
    let g = log_gamma.exp() / scale;
    let d_eta = g * (y - kernel.mean(eta));
    let d_lg = S::lit(0.5) + g * (y * eta - kernel.b(eta) - saturated);
    (d_eta, d_lg)
}

/// Per-observation unit deviance `2{T(y) − yη + b(η)}/s`.
pub fn unit_deviance<S: Scalar>(kernel: &FamilyKernel, y: S, eta: S, scale: S) -> S {
    S::lit(2.0) * (kernel.saturated_term(y) - y * eta + kernel.b(eta)) / scale
}

/// `Σ_i ℓ_i(β, α)` with `C = 1` and without base-measure terms.
pub fn loglik<S: Scalar>(spec: &GlmSpec<S>, y: &[S]) -> Result<S> {
    spec.check_responses(y)?;
    Ok(loglik_unchecked(spec, y))
}

pub(crate) fn loglik_unchecked<S: Scalar>(spec: &GlmSpec<S>, y: &[S]) -> S {
    let kernel = &spec.kernel;
    (0..spec.n())
        .map(|i| {
            obs_loglik(
                kernel,
                spec.eta(i),
                spec.log_gamma(i),
                y[i],
                kernel.saturated_term(y[i]),
                spec.scale(i),
            )
        })
        .sum()
}

/// Log-likelihood including the base-measure terms `c(y_i, φ/ν_i)`; still `C = 1`.
/// Used for held-out evaluation where values are compared across fits.
pub fn loglik_with_base<S: Scalar>(spec: &GlmSpec<S>, y: &[S]) -> Result<S> {
    let base: S = (0..spec.n())
        .map(|i| spec.kernel.log_base_measure(y[i], spec.scale(i)))
        .sum();
    Ok(loglik(spec, y)? + base)
}

/// Gradients, Hessian blocks and Fisher weights at the spec's coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport<S> {
    pub score_beta: Array1<S>,
    pub score_alpha: Array1<S>,
    pub hess_beta_beta: Array2<S>,
    pub hess_beta_alpha: Array2<S>,
    pub hess_alpha_alpha: Array2<S>,
    /// `w_β(x_i, z_i) = γ_i b″(η_i)/s_i`.
    pub w_beta: Array1<S>,
    /// Observed analogue of `w_α`: `γ_i {b(η_i) − b′(η_i)η_i + T(y_i)}/s_i`.
    pub w_alpha: Array1<S>,
}

impl<S: Scalar> ScoreReport<S> {
    pub fn hess_alpha_beta(&self) -> Array2<S> {
        self.hess_beta_alpha.t().to_owned()
    }
}

fn add_outer<S: Scalar>(acc: &mut Array2<S>, u: ArrayView1<S>, v: ArrayView1<S>, w: S) {
    for (a, &ua) in u.iter().enumerate() {
        if ua == S::zero() {
            continue;
        }
        let f = w * ua;
        for (b, &vb) in v.iter().enumerate() {
            acc[[a, b]] += f * vb;
        }
    }
}

pub fn score<S: Scalar>(spec: &GlmSpec<S>, y: &[S]) -> Result<ScoreReport<S>> {
    spec.check_responses(y)?;
    let (n, dm, dg) = (spec.n(), spec.d_mean(), spec.d_disp());
    let kernel = &spec.kernel;
    let mut report = ScoreReport {
        score_beta: Array1::zeros(dm),
        score_alpha: Array1::zeros(dg),
        hess_beta_beta: Array2::zeros((dm, dm)),
        hess_beta_alpha: Array2::zeros((dm, dg)),
        hess_alpha_alpha: Array2::zeros((dg, dg)),
        w_beta: Array1::zeros(n),
        w_alpha: Array1::zeros(n),
    };
    for i in 0..n {
        let (eta, lg, s) = (spec.eta(i), spec.log_gamma(i), spec.scale(i));
        let sat = kernel.saturated_term(y[i]);
        let (d_eta, d_lg) = obs_score(kernel, eta, lg, y[i], sat, s);
        let g = lg.exp() / s;
        let x = spec.x.row(i);
        let z = spec.z.row(i);
        report.score_beta.scaled_add(d_eta, &x);
        report.score_alpha.scaled_add(d_lg, &z);
        let w_beta = g * kernel.variance(eta);
        add_outer(&mut report.hess_beta_beta, x, x, -w_beta);
        add_outer(&mut report.hess_beta_alpha, x, z, d_eta);
        add_outer(&mut report.hess_alpha_alpha, z, z, d_lg - S::lit(0.5));
        report.w_beta[i] = w_beta;
        report.w_alpha[i] = g * (kernel.b(eta) - kernel.mean(eta) * eta + sat);
    }
    Ok(report)
}

/// Diagonal of `W`: `γ_i b″(x_iᵀβ)/(φ/ν_i)`.
pub fn curvature_weights<S: Scalar>(spec: &GlmSpec<S>) -> Array1<S> {
    (0..spec.n())
        .map(|i| spec.log_gamma(i).exp() * spec.kernel.variance(spec.eta(i)) / spec.scale(i))
        .collect()
}

/// Observed Fisher information blocks `Î(β) = XᵀWX/n` and `Î(α) ≈ ZᵀZ/n`.
pub fn fisher_blocks<S: Scalar>(spec: &GlmSpec<S>) -> (Array2<S>, Array2<S>) {
    let n = S::from_usize_lossy(spec.n().max(1));
    let w = curvature_weights(spec);
    let mut info_beta = Array2::zeros((spec.d_mean(), spec.d_mean()));
    let mut info_alpha = Array2::zeros((spec.d_disp(), spec.d_disp()));
    for i in 0..spec.n() {
        add_outer(&mut info_beta, spec.x.row(i), spec.x.row(i), w[i] / n);
        add_outer(&mut info_alpha, spec.z.row(i), spec.z.row(i), S::one() / n);
    }
    (info_beta, info_alpha)
}
