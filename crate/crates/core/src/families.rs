//! Exponential-family kernels and the double exponential family (DEF) built on them.
//!
//! A DEF density with base kernel `b` is
//!
//! ```text
//! f(y) = C(γ, θ) · γ^½ · f_θ(y)^γ · f_θ(y)(y)^(1−γ)
//! ```
//!
//! where `θ(y) = (b′)⁻¹(y)` is the saturated natural parameter. On the log scale this is
//! `log C + ½ log γ + γ (yθ − b(θ))/s + (1 − γ)(yθ(y) − b(θ(y)))/s + c(y, s)` with `s = φ/ν`.
//! Fitting code uses `C = 1`; the exact constant is only computed when asked for.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};
use crate::scalar::{logistic, softplus, xlogx, Scalar};

/// Tail tolerance used when a normalized density is requested without an explicit one.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// Base natural exponential family. Binomial carries its trial count in `b`, so `φ = ν = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "family")]
pub enum FamilyKernel {
    Gaussian,
    Poisson,
    Binomial { trials: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    Real,
    Counts,
    UpTo(u32),
}

impl FamilyKernel {
    pub fn name(&self) -> &'static str {
        match self {
            FamilyKernel::Gaussian => "gaussian",
            FamilyKernel::Poisson => "poisson",
            FamilyKernel::Binomial { .. } => "binomial",
        }
    }

    pub fn support(&self) -> Support {
        match *self {
            FamilyKernel::Gaussian => Support::Real,
            FamilyKernel::Poisson => Support::Counts,
            FamilyKernel::Binomial { trials } => Support::UpTo(trials),
        }
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self, FamilyKernel::Gaussian)
    }

    /// Partition function `b(θ)`.
    #[inline]
    pub fn b<S: Scalar>(&self, theta: S) -> S {
        match *self {
            FamilyKernel::Gaussian => S::lit(0.5) * theta * theta,
            FamilyKernel::Poisson => theta.exp(),
            FamilyKernel::Binomial { trials } => S::lit(trials as f64) * softplus(theta),
        }
    }

    /// Mean map `b′(θ)`.
    #[inline]
    pub fn mean<S: Scalar>(&self, theta: S) -> S {
        match *self {
            FamilyKernel::Gaussian => theta,
            FamilyKernel::Poisson => theta.exp(),
            FamilyKernel::Binomial { trials } => S::lit(trials as f64) * logistic(theta),
        }
    }

    /// Variance map `b″(θ)`.
    #[inline]
    pub fn variance<S: Scalar>(&self, theta: S) -> S {
        match *self {
            FamilyKernel::Gaussian => S::one(),
            FamilyKernel::Poisson => theta.exp(),
            FamilyKernel::Binomial { trials } => {
                let p = logistic(theta);
                S::lit(trials as f64) * p * (S::one() - p)
            }
        }
    }

    /// Third derivative `b‴(θ)`, needed for gradients of the curvature-weighted penalties.
    #[inline]
    pub fn third_derivative<S: Scalar>(&self, theta: S) -> S {
        match *self {
            FamilyKernel::Gaussian => S::zero(),
            FamilyKernel::Poisson => theta.exp(),
            FamilyKernel::Binomial { trials } => {
                let p = logistic(theta);
                S::lit(trials as f64) * p * (S::one() - p) * (S::one() - S::lit(2.0) * p)
            }
        }
    }

    /// Inverse mean map `(b′)⁻¹(μ)`; the canonical link.
    pub fn theta_from_mean<S: Scalar>(&self, mu: S) -> Result<S> {
        match *self {
            FamilyKernel::Gaussian => Ok(mu),
            FamilyKernel::Poisson => {
                if mu > S::zero() && mu.is_finite() {
                    Ok(mu.ln())
                } else {
                    Err(Error::Domain(format!("poisson mean must be positive, got {mu}")))
                }
            }
            FamilyKernel::Binomial { trials } => {
                let n = S::lit(trials as f64);
                if mu > S::zero() && mu < n {
                    Ok((mu / (n - mu)).ln())
                } else {
                    Err(Error::Domain(format!("binomial mean must lie in (0, {trials}), got {mu}")))
                }
            }
        }
    }

    /// Variance function `V(μ)` of the base family.
    pub fn variance_function<S: Scalar>(&self, mu: S) -> S {
        match *self {
            FamilyKernel::Gaussian => S::one(),
            FamilyKernel::Poisson => mu,
            FamilyKernel::Binomial { trials } => {
                let n = S::lit(trials as f64);
                mu * (n - mu) / n
            }
        }
    }

    /// `yθ(y) − b(θ(y))`, evaluated by its limit where `θ(y)` is infinite (`0·log 0 = 0`).
    #[inline]
    pub fn saturated_term<S: Scalar>(&self, y: S) -> S {
        match *self {
            FamilyKernel::Gaussian => S::lit(0.5) * y * y,
            FamilyKernel::Poisson => xlogx(y) - y,
            FamilyKernel::Binomial { trials } => {
                let n = S::lit(trials as f64);
                xlogx(y) + xlogx(n - y) - n * n.ln()
            }
        }
    }

    /// Base measure term `c(y, φ/ν)`.
    pub fn log_base_measure<S: Scalar>(&self, y: S, scale: S) -> S {
        match *self {
            FamilyKernel::Gaussian => {
                -y * y / (S::lit(2.0) * scale) - S::lit(0.5) * (S::lit(2.0) * S::PI() * scale).ln()
            }
            FamilyKernel::Poisson => S::lit(-ln_factorial(y.to_u64().unwrap_or(0))),
            FamilyKernel::Binomial { trials } => {
                S::lit(ln_binomial(trials as u64, y.to_u64().unwrap_or(0)))
            }
        }
    }

    pub fn check_support<S: Scalar>(&self, y: S) -> Result<()> {
        let ok = match self.support() {
            Support::Real => y.is_finite(),
            Support::Counts => y >= S::zero() && y.fract() == S::zero() && y.is_finite(),
            Support::UpTo(n) => {
                y >= S::zero() && y <= S::lit(n as f64) && y.fract() == S::zero()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("response {y} outside the {} support", self.name())))
        }
    }
}

/// Per-observation DEF parameters: natural parameter, dispersion, scale and known weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefParams<S> {
    pub theta: S,
    pub gamma: S,
    pub phi: S,
    pub weight: S,
}

impl<S: Scalar> DefParams<S> {
    pub fn new(theta: S, gamma: S, phi: S, weight: S) -> Result<Self> {
        if !(gamma > S::zero()) || !gamma.is_finite() {
            return Err(Error::Domain(format!("dispersion must be positive, got {gamma}")));
        }
        if !(phi > S::zero()) || !(weight > S::zero()) {
            return Err(Error::Domain(format!("φ/ν must be positive, got φ={phi}, ν={weight}")));
        }
        if !theta.is_finite() {
            return Err(Error::Domain(format!("natural parameter must be finite, got {theta}")));
        }
        Ok(Self { theta, gamma, phi, weight })
    }

    /// Unit scale and weight, as used for the count families.
    pub fn unit(theta: S, gamma: S) -> Result<Self> {
        Self::new(theta, gamma, S::one(), S::one())
    }

    #[inline]
    pub fn scale(&self) -> S {
        self.phi / self.weight
    }
}

/// Exact normalizing constant of a DEF together with the truncation that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefNormalization<S> {
    pub constant: S,
    /// Largest support point summed over (discrete families only).
    pub truncation: Option<u64>,
    /// Estimated unnormalized mass beyond the truncation, relative to the summed mass.
    pub tail_mass: S,
}

fn log_unnormalized<S: Scalar>(kernel: &FamilyKernel, params: &DefParams<S>, y: S) -> S {
    let s = params.scale();
    let g = params.gamma;
    let theta = params.theta;
    S::lit(0.5) * g.ln()
        + g * (y * theta - kernel.b(theta)) / s
        + (S::one() - g) * kernel.saturated_term(y) / s
        + kernel.log_base_measure(y, s)
}

/// Log density (or log pmf) of the DEF at `y`. With `normalized` off the constant `C` is
/// taken as 1, the convention used by all fitting objectives.
pub fn def_log_density<S: Scalar>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    y: S,
    normalized: bool,
) -> Result<S> {
    kernel.check_support(y)?;
    let raw = log_unnormalized(kernel, params, y);
    if normalized {
        let norm = def_normalizer(kernel, params, S::lit(DEFAULT_TAIL_TOL))?;
        Ok(raw + norm.constant.ln())
    } else {
        Ok(raw)
    }
}

/// Log unnormalized pmf over the (possibly truncated) support, plus the truncation report.
fn discrete_log_terms<S: Scalar>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    tail_tol: S,
) -> Result<(Vec<S>, S)> {
    match *kernel {
        FamilyKernel::Gaussian => Err(Error::Domain("gaussian DEF has continuous support".into())),
        FamilyKernel::Binomial { trials } => {
            let terms = (0..=trials)
                .map(|y| log_unnormalized(kernel, params, S::lit(y as f64)))
                .collect();
            Ok((terms, S::zero()))
        }
        FamilyKernel::Poisson => {
            let mean = params.theta.exp().as_f64();
            let cap = (10.0 * mean + 100.0).max(200.0).ceil() as u64;
            let mut terms: Vec<S> = Vec::with_capacity(cap as usize + 1);
            let mut lse = S::neg_infinity();
            let mut last_tail = S::infinity();
            for y in 0..=cap {
                let l = log_unnormalized(kernel, params, S::lit(y as f64));
                lse = log_add(lse, l);
                if let Some(&prev) = terms.last() {
                    let ratio = (l - prev).exp();
                    if (y as f64) > mean && ratio < S::one() {
                        // successive-term ratios are decreasing past the mode, so the tail is
                        // dominated by a geometric series
                        last_tail = (l - lse).exp() * ratio / (S::one() - ratio);
                        if last_tail < tail_tol {
                            terms.push(l);
                            return Ok((terms, last_tail));
                        }
                    }
                }
                terms.push(l);
            }
            Err(Error::Numeric(format!(
                "poisson DEF truncation did not converge: θ={}, γ={}, cap={cap}, tail estimate {} ≥ {}",
                params.theta, params.gamma, last_tail, tail_tol
            )))
        }
    }
}

#[inline]
fn log_add<S: Scalar>(a: S, b: S) -> S {
    if a == S::neg_infinity() {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Exact normalizing constant `C(γ, θ)`.
///
/// Poisson sums until the geometric tail bound falls below `tail_tol`, capped at
/// `max(10·mean + 100, 200)`; binomial sums its full support; the double Gaussian is exactly
/// normal with variance `φ/(νγ)`, so `C = 1`.
pub fn def_normalizer<S: Scalar>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    tail_tol: S,
) -> Result<DefNormalization<S>> {
    if !kernel.is_discrete() {
        return Ok(DefNormalization { constant: S::one(), truncation: None, tail_mass: S::zero() });
    }
    let (terms, tail) = discrete_log_terms(kernel, params, tail_tol)?;
    let lse = terms.iter().fold(S::neg_infinity(), |acc, &l| log_add(acc, l));
    Ok(DefNormalization {
        constant: (-lse).exp(),
        truncation: Some(terms.len() as u64 - 1),
        tail_mass: tail,
    })
}

/// Exactly normalized pmf over the truncated support `0..=truncation`.
pub fn def_pmf<S: Scalar>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    tail_tol: S,
) -> Result<(Vec<S>, DefNormalization<S>)> {
    let (terms, tail) = discrete_log_terms(kernel, params, tail_tol)?;
    let lse = terms.iter().fold(S::neg_infinity(), |acc, &l| log_add(acc, l));
    let pmf = terms.iter().map(|&l| (l - lse).exp()).collect::<Vec<_>>();
    let norm = DefNormalization {
        constant: (-lse).exp(),
        truncation: Some(pmf.len() as u64 - 1),
        tail_mass: tail,
    };
    Ok((pmf, norm))
}

/// I.i.d. draws from the exactly normalized DEF.
///
/// Discrete families use inverse-CDF sampling over the truncated support; the double Gaussian
/// is sampled from its closed-form normal.
pub fn def_sample<S: Scalar, R: Rng + ?Sized>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    rng: &mut R,
    count: usize,
) -> Result<Vec<S>> {
    if !kernel.is_discrete() {
        let sd = (params.scale() / params.gamma).sqrt();
        return Ok((0..count)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                params.theta + sd * S::lit(z)
            })
            .collect());
    }
    let (pmf, _) = def_pmf(kernel, params, S::lit(DEFAULT_TAIL_TOL))?;
    let mut cdf = Vec::with_capacity(pmf.len());
    let mut acc = 0.0f64;
    for p in &pmf {
        acc += p.as_f64();
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(last);
            S::lit(k as f64)
        })
        .collect())
}

/// Exact mean and variance of the normalized DEF.
pub fn def_moments<S: Scalar>(
    kernel: &FamilyKernel,
    params: &DefParams<S>,
    tail_tol: S,
) -> Result<(S, S)> {
    if !kernel.is_discrete() {
        return Ok((params.theta, params.scale() / params.gamma));
    }
    let (pmf, _) = def_pmf(kernel, params, tail_tol)?;
    let mut mean = S::zero();
    for (y, &p) in pmf.iter().enumerate() {
        mean += S::lit(y as f64) * p;
    }
    let mut var = S::zero();
    for (y, &p) in pmf.iter().enumerate() {
        let d = S::lit(y as f64) - mean;
        var += d * d * p;
    }
    Ok((mean, var))
}
