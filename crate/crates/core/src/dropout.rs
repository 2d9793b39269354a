//! Multiplicative dropout noise and the penalties it induces.
//!
//! Perturbing features `x̃ = x ⊙ ξ` with unit-mean noise turns the expected negative
//! log-likelihood into the plain one plus a data-dependent Tikhonov penalty. This module holds
//! the noise generators, Monte-Carlo estimates of the exact noisy objective, and the closed-form
//! second-order approximations with their weight and penalty matrices.

use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::families::FamilyKernel;
use crate::model::{obs_loglik, GlmSpec};
use crate::rng::{substream, Moments};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    None,
    Bernoulli,
    Gaussian,
}

/// Dropout family with one parameter per side.
///
/// For Bernoulli noise the parameters are dropout probabilities `δ ∈ [0, 1)` and
/// `ξ = Bernoulli(1 − δ)/(1 − δ)`, so `V[ξ] = δ/(1 − δ)`. For Gaussian noise they are standard
/// deviations and `ξ ~ N(1, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub mean: f64,
    pub disp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Mean,
    Dispersion,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self { kind: NoiseKind::None, mean: 0.0, disp: 0.0 }
    }

    pub fn gaussian(sigma_mean: f64, sigma_disp: f64) -> Result<Self> {
        let spec = Self { kind: NoiseKind::Gaussian, mean: sigma_mean, disp: sigma_disp };
        spec.validate().map(|_| spec)
    }

    pub fn bernoulli(delta_mean: f64, delta_disp: f64) -> Result<Self> {
        let spec = Self { kind: NoiseKind::Bernoulli, mean: delta_mean, disp: delta_disp };
        spec.validate().map(|_| spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (side, p) in [("mean", self.mean), ("dispersion", self.disp)] {
            let ok = match self.kind {
                NoiseKind::None => true,
                NoiseKind::Bernoulli => (0.0..1.0).contains(&p),
                NoiseKind::Gaussian => p.is_finite() && p >= 0.0,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "invalid {side}-side {:?} noise parameter {p}",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    pub fn param(&self, side: Side) -> f64 {
        match side {
            Side::Mean => self.mean,
            Side::Dispersion => self.disp,
        }
    }

    /// `σ²` of the noise on one side.
    pub fn variance(&self, side: Side) -> f64 {
        let p = self.param(side);
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Bernoulli => p / (1.0 - p),
            NoiseKind::Gaussian => p * p,
        }
    }

    /// The same noise with the dispersion side switched off.
    pub fn mean_only(&self) -> Self {
        Self { disp: 0.0, ..*self }
    }

    pub fn sampler(&self, side: Side) -> NoiseSampler {
        let p = self.param(side);
        match self.kind {
            _ if p == 0.0 => NoiseSampler::One,
            NoiseKind::None => NoiseSampler::One,
            NoiseKind::Bernoulli => NoiseSampler::Bernoulli { keep: 1.0 - p, scale: 1.0 / (1.0 - p) },
            NoiseKind::Gaussian => NoiseSampler::Gaussian { sd: p },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSampler {
    One,
    Bernoulli { keep: f64, scale: f64 },
    Gaussian { sd: f64 },
}

impl NoiseSampler {
    pub fn is_degenerate(&self) -> bool {
        matches!(self, NoiseSampler::One)
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSampler::One => 1.0,
            NoiseSampler::Bernoulli { keep, scale } => {
                if rng.random::<f64>() < keep {
                    scale
                } else {
                    0.0
                }
            }
            NoiseSampler::Gaussian { sd } => 1.0 + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = self.draw(rng));
    }
}

/// Elementwise `x ⊙ ξ`.
pub fn perturb<S: Scalar>(features: &[S], noise: &[S]) -> Result<Vec<S>> {
    check_len("noise draw", features.len(), noise.len())?;
    Ok(features.iter().zip(noise).map(|(&x, &e)| x * e).collect())
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub se: f64,
    pub draws: u64,
}

impl From<Moments> for McEstimate {
    fn from(m: Moments) -> Self {
        Self { mean: m.mean, se: m.std_error(), draws: m.count }
    }
}

impl McEstimate {
    /// `|mean − target|` in units of the standard error.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = (self.mean - target).abs();
        if diff == 0.0 {
            0.0
        } else {
            diff / self.se
        }
    }
}

const MC_CHUNK: usize = 8192;

/// Runs `draws` independent evaluations of `per_draw`, each writing `outputs` values, over
/// fixed-size chunks with their own random streams. The reduction order is fixed.
fn mc_run<F>(draws: usize, seed: u64, outputs: usize, per_draw: F) -> Vec<Moments>
where
    F: Fn(&mut crate::rng::Rng, &mut [f64]) + Sync,
{
    let chunks = draws.div_ceil(MC_CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let count = MC_CHUNK.min(draws - c * MC_CHUNK);
            let mut acc = vec![Moments::default(); outputs];
            let mut buf = vec![0.0; outputs];
            for _ in 0..count {
                per_draw(&mut rng, &mut buf);
                acc.iter_mut().zip(&buf).for_each(|(m, &v)| m.push(v));
            }
            acc
        })
        .collect();
    let mut total = vec![Moments::default(); outputs];
    for chunk in &partial {
        total.iter_mut().zip(chunk).for_each(|(t, m)| t.merge(m));
    }
    total
}

fn check_draws(draws: usize) -> Result<()> {
    if draws == 0 {
        return Err(Error::Config("at least one Monte-Carlo draw is required".into()));
    }
    Ok(())
}

/// The model's inputs in double precision, laid out row-major.
struct Flat {
    kernel: FamilyKernel,
    n: usize,
    dm: usize,
    dg: usize,
    x: Vec<f64>,
    z: Vec<f64>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    scale: Vec<f64>,
}

impl Flat {
    fn new<S: Scalar>(spec: &GlmSpec<S>) -> Self {
        let f = |v: &S| v.as_f64();
        Self {
            kernel: spec.kernel,
            n: spec.n(),
            dm: spec.d_mean(),
            dg: spec.d_disp(),
            x: spec.x.iter().map(f).collect(),
            z: spec.z.iter().map(f).collect(),
            beta: spec.beta.iter().map(f).collect(),
            alpha: spec.alpha.iter().map(f).collect(),
            scale: (0..spec.n()).map(|i| spec.scale(i).as_f64()).collect(),
        }
    }

    #[inline]
    fn noisy_eta<R: Rng + ?Sized>(&self, i: usize, xi: &NoiseSampler, rng: &mut R) -> f64 {
        let row = &self.x[i * self.dm..(i + 1) * self.dm];
        row.iter().zip(&self.beta).fold(0.0, |acc, (&x, &b)| acc + x * b * xi.draw(rng))
    }

    #[inline]
    fn noisy_log_gamma<R: Rng + ?Sized>(&self, i: usize, zeta: &NoiseSampler, rng: &mut R) -> f64 {
        let row = &self.z[i * self.dg..(i + 1) * self.dg];
        row.iter().zip(&self.alpha).fold(0.0, |acc, (&z, &a)| acc + z * a * zeta.draw(rng))
    }
}

/// Monte-Carlo estimate of `Σ_i −E[ℓ_i(β ⊙ ξ_i, α ⊙ ζ_i)]` with fresh noise for every
/// observation in every draw.
pub fn mc_dropout_objective<S: Scalar, R: Rng + ?Sized>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
    draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    spec.check_responses(y)?;
    noise.validate()?;
    check_draws(draws)?;
    let flat = Flat::new(spec);
    let y: Vec<f64> = y.iter().map(|v| v.as_f64()).collect();
    let sat: Vec<f64> = y.iter().map(|&v| flat.kernel.saturated_term(v)).collect();
    let xi = noise.sampler(Side::Mean);
    let zeta = noise.sampler(Side::Dispersion);
    let seed = rng.next_u64();
    let m = mc_run(draws, seed, 1, |rng, out| {
        let mut total = 0.0;
        for i in 0..flat.n {
            let eta = flat.noisy_eta(i, &xi, rng);
            let lg = flat.noisy_log_gamma(i, &zeta, rng);
            total -= obs_loglik(&flat.kernel, eta, lg, y[i], sat[i], flat.scale[i]);
        }
        out[0] = total;
    });
    Ok(m[0].into())
}

/// Per-observation Monte-Carlo estimates of `γ_i {E[b(x_iᵀ(β ⊙ ξ))] − b(x_iᵀβ)}/(φ/ν_i)`.
pub fn exact_penalty_gap<S: Scalar, R: Rng + ?Sized>(
    spec: &GlmSpec<S>,
    noise: &NoiseSpec,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<McEstimate>> {
    noise.validate()?;
    check_draws(draws)?;
    if !noise.sampler(Side::Dispersion).is_degenerate() {
        return Err(Error::Config("the exact penalty gap takes mean-side noise only".into()));
    }
    let flat = Flat::new(spec);
    let weight: Vec<f64> =
        (0..flat.n).map(|i| spec.log_gamma(i).as_f64().exp() / flat.scale[i]).collect();
    let base: Vec<f64> = (0..flat.n).map(|i| flat.kernel.b(spec.eta(i).as_f64())).collect();
    let xi = noise.sampler(Side::Mean);
    let seed = rng.next_u64();
    let m = mc_run(draws, seed, flat.n, |rng, out| {
        for i in 0..flat.n {
            let eta = flat.noisy_eta(i, &xi, rng);
            out[i] = weight[i] * (flat.kernel.b(eta) - base[i]);
        }
    });
    Ok(m.into_iter().map(McEstimate::from).collect())
}

/// Monte-Carlo estimate of the remainder of the quadratic expansion,
/// `E[b(x̃ᵀβ)] − b(xᵀβ) − ½ b″(xᵀβ) σ² Σ_j (x_j β_j)²`.
pub fn mc_remainder<R: Rng + ?Sized>(
    kernel: &FamilyKernel,
    x: &[f64],
    beta: &[f64],
    noise: &NoiseSpec,
    draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_len("coefficients", x.len(), beta.len())?;
    noise.validate()?;
    check_draws(draws)?;
    let eta: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
    let s2: f64 = x.iter().zip(beta).map(|(a, b)| (a * b).powi(2)).sum();
    let quadratic = kernel.b(eta) + 0.5 * kernel.variance(eta) * noise.variance(Side::Mean) * s2;
    let xi = noise.sampler(Side::Mean);
    let seed = rng.next_u64();
    let m = mc_run(draws, seed, 1, |rng, out| {
        let noisy = x.iter().zip(beta).fold(0.0, |acc, (&a, &b)| acc + a * b * xi.draw(rng));
        out[0] = kernel.b(noisy) - quadratic;
    });
    Ok(m[0].into())
}

/// Monte-Carlo estimate of `E[γ̃] = E[exp(zᵀ(α ⊙ ζ))]`.
pub fn mc_dispersion_expectation<R: Rng + ?Sized>(
    z: &[f64],
    alpha: &[f64],
    noise: &NoiseSpec,
    draws: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    check_len("coefficients", z.len(), alpha.len())?;
    noise.validate()?;
    check_draws(draws)?;
    let zeta = noise.sampler(Side::Dispersion);
    let seed = rng.next_u64();
    let m = mc_run(draws, seed, 1, |rng, out| {
        out[0] = z.iter().zip(alpha).fold(0.0, |acc, (&a, &b)| acc + a * b * zeta.draw(rng)).exp();
    });
    Ok(m[0].into())
}

/// Lognormal approximation `E[γ̃] = exp(zᵀα + ½σ²_γ ‖z ⊙ α‖²)`.
pub fn expected_dispersion<S: Scalar>(z: &[S], alpha: &[S], disp_variance: S) -> S {
    let (lin, quad) = z.iter().zip(alpha).fold((S::zero(), S::zero()), |(l, q), (&a, &b)| {
        (l + a * b, q + (a * b) * (a * b))
    });
    (lin + S::lit(0.5) * disp_variance * quad).exp()
}

/// Diagonal weight and penalty matrices, stored as vectors of their diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySnapshot<S> {
    pub w: Array1<S>,
    pub theta: Array1<S>,
    pub gamma: Array1<S>,
    pub lambda: Array1<S>,
    pub w_tilde: Array1<S>,
    pub theta_tilde: Array1<S>,
    /// Mean-design columns that are identically zero and so receive no penalty.
    pub degenerate_mean: Vec<usize>,
    pub degenerate_disp: Vec<usize>,
}

pub fn penalty_matrices<S: Scalar>(spec: &GlmSpec<S>, noise: &NoiseSpec) -> PenaltySnapshot<S> {
    let var_disp = S::lit(noise.variance(Side::Dispersion));
    let (n, dm, dg) = (spec.n(), spec.d_mean(), spec.d_disp());
    let mut w = Array1::zeros(n);
    let mut lambda = Array1::zeros(n);
    let mut theta2 = vec![S::zero(); dm];
    let mut theta_tilde2 = vec![S::zero(); dm];
    let mut gamma2 = vec![S::zero(); dg];
    for i in 0..n {
        let eta = spec.eta(i);
        w[i] = spec.log_gamma(i).exp() * spec.kernel.variance(eta) / spec.scale(i);
        let q = spec
            .z_row(i)
            .iter()
            .zip(spec.alpha.iter())
            .fold(S::zero(), |acc, (&z, &a)| acc + (z * a) * (z * a));
        lambda[i] = (S::lit(0.5) * var_disp * q).exp();
        for (j, &x) in spec.x_row(i).iter().enumerate() {
            theta2[j] += w[i] * x * x;
            theta_tilde2[j] += lambda[i] * w[i] * x * x;
        }
        for (j, &z) in spec.z_row(i).iter().enumerate() {
            gamma2[j] += z * z;
        }
    }
    let degenerate_mean = zero_columns(&theta2);
    let degenerate_disp = zero_columns(&gamma2);
    for &j in &degenerate_mean {
        log::warn!("mean design column {j} is identically zero and is left unpenalized");
    }
    for &j in &degenerate_disp {
        log::warn!("dispersion design column {j} is identically zero and is left unpenalized");
    }
    let w_tilde = &lambda * &w;
    PenaltySnapshot {
        w,
        theta: theta2.into_iter().map(|v| v.sqrt()).collect(),
        gamma: gamma2.into_iter().map(|v| v.sqrt()).collect(),
        lambda,
        w_tilde,
        theta_tilde: theta_tilde2.into_iter().map(|v| v.sqrt()).collect(),
        degenerate_mean,
        degenerate_disp,
    }
}

fn zero_columns<S: Scalar>(sq: &[S]) -> Vec<usize> {
    sq.iter().enumerate().filter(|(_, &v)| v == S::zero()).map(|(j, _)| j).collect()
}

/// Value and gradient of the closed-form noisy objective
/// `Σ −ℓ̃_i + ½σ²_μ ‖Θ̃β‖² + ¼σ²_γ ‖Γα‖²`, where `ℓ̃_i` is the log-likelihood with `γ_i`
/// replaced by `E[γ̃_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedValue<S> {
    pub value: S,
    pub grad_beta: Array1<S>,
    pub grad_alpha: Array1<S>,
}

pub fn penalized_objective<S: Scalar>(spec: &GlmSpec<S>, y: &[S], noise: &NoiseSpec) -> Result<S> {
    penalized_value(spec, y, noise).map(|v| v.value)
}

pub fn penalized_value<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
) -> Result<PenalizedValue<S>> {
    spec.check_responses(y)?;
    noise.validate()?;
    let half = S::lit(0.5);
    let vm = S::lit(noise.variance(Side::Mean));
    let vg = S::lit(noise.variance(Side::Dispersion));
    let kernel = &spec.kernel;
    let (dm, dg) = (spec.d_mean(), spec.d_disp());
    let mut value = S::zero();
    let mut grad_beta = Array1::zeros(dm);
    let mut grad_alpha = Array1::zeros(dg);
    let mut gamma2 = vec![S::zero(); dg];
    for i in 0..spec.n() {
        let (x, z) = (spec.x_row(i), spec.z_row(i));
        let eta = spec.eta(i);
        let s = spec.scale(i);
        let sat = kernel.saturated_term(y[i]);
        let q = z.iter().zip(spec.alpha.iter()).fold(S::zero(), |acc, (&z, &a)| acc + (z * a) * (z * a));
        let r = x.iter().zip(spec.beta.iter()).fold(S::zero(), |acc, (&x, &b)| acc + (x * b) * (x * b));
        let log_g = spec.log_gamma(i) + half * vg * q;
        let g = log_g.exp();
        let (b, b1, b2, b3) =
            (kernel.b(eta), kernel.mean(eta), kernel.variance(eta), kernel.third_derivative(eta));

        value -= obs_loglik(kernel, eta, log_g, y[i], sat, s);
        value += half * vm * g * b2 / s * r;

        // ∂/∂η and ∂/∂log g of the per-observation terms
        let d_eta = -g * (y[i] - b1) / s + half * vm * g * b3 / s * r;
        let d_log_g = -(half + g * (y[i] * eta - b - sat) / s) + half * vm * g * b2 / s * r;
        let wt = g * b2 / s;
        for k in 0..dm {
            grad_beta[k] += d_eta * x[k] + vm * wt * x[k] * x[k] * spec.beta[k];
        }
        for k in 0..dg {
            grad_alpha[k] += d_log_g * (z[k] + vg * z[k] * z[k] * spec.alpha[k]);
            gamma2[k] += z[k] * z[k];
        }
    }
    let quarter = S::lit(0.25);
    for k in 0..dg {
        value += quarter * vg * spec.alpha[k] * spec.alpha[k] * gamma2[k];
        grad_alpha[k] += half * vg * spec.alpha[k] * gamma2[k];
    }
    Ok(PenalizedValue { value, grad_beta, grad_alpha })
}

fn mean_side_spread<S: Scalar>(x: &[S], beta: &[S], sigma: S) -> S {
    let s2 = x.iter().zip(beta).fold(S::zero(), |acc, (&a, &b)| acc + (a * b) * (a * b));
    sigma * sigma * s2
}

fn exp_tail<S: Scalar>(t: S) -> S {
    // e^t − t − 1 without cancellation for small t
    t.exp_m1() - t
}

/// Expected remainder of the quadratic expansion for Poisson data under Gaussian noise with
/// standard deviation `sigma`: `exp(xᵀβ){exp(v/2) − v/2 − 1}`, `v = σ² Σ_j (x_j β_j)²`.
pub fn remainder_poisson<S: Scalar>(x: &[S], beta: &[S], sigma: S) -> S {
    let eta = x.iter().zip(beta).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    let v = mean_side_spread(x, beta, sigma);
    eta.exp() * exp_tail(S::lit(0.5) * v)
}

/// The remainder with `v²` in place of `v`, as it is sometimes stated.
pub fn remainder_poisson_as_printed<S: Scalar>(x: &[S], beta: &[S], sigma: S) -> S {
    let eta = x.iter().zip(beta).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
    let v = mean_side_spread(x, beta, sigma);
    eta.exp() * exp_tail(S::lit(0.5) * v * v)
}

/// Upper bound on the absolute expected remainder for binomial data with `trials` trials:
/// `N{exp(v/2) − v/2 − 1}`.
pub fn remainder_binomial_bound<S: Scalar>(x: &[S], beta: &[S], sigma: S, trials: u32) -> S {
    let v = mean_side_spread(x, beta, sigma);
    S::lit(trials as f64) * exp_tail(S::lit(0.5) * v)
}
