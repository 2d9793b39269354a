//! Mini-batch stochastic gradient ascent on the dropout-perturbed log-likelihood with
//! ADADELTA step sizes.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dropout::{penalty_matrices, NoiseSampler, NoiseSpec, PenaltySnapshot, Side};
use crate::error::{check_len, Error, Result};
use crate::families::FamilyKernel;
use crate::model::{obs_loglik, obs_score, GlmSpec};
use crate::rng::substream;
use crate::scalar::Scalar;

/// Bound on `|z_iᵀα|` while fitting.
pub const LOG_GAMMA_CLAMP: f64 = 15.0;

/// Bound on `|x_iᵀβ|` while fitting.
pub fn eta_clamp(kernel: &FamilyKernel) -> f64 {
    match kernel {
        FamilyKernel::Gaussian => f64::MAX,
        FamilyKernel::Poisson => 30.0,
        FamilyKernel::Binomial { .. } => 35.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    /// `α = 0` and `β` from a ridge least-squares fit of the link-transformed response.
    #[default]
    Ridge,
    Zero,
    /// Start from the coefficients already stored in the model.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub batch_size: usize,
    pub max_iter: usize,
    /// Full-data log-likelihood is recorded every this many iterations.
    pub trace_every: usize,
    /// Stationarity window, in iterations.
    pub window: usize,
    pub tol: f64,
    pub rho: f64,
    pub eps: f64,
    pub seed: u64,
    pub init: InitMode,
    pub ridge: f64,
    pub fix_alpha: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            batch_size: 30,
            max_iter: 200_000,
            trace_every: 100,
            window: 200,
            tol: 1e-6,
            rho: 0.95,
            eps: 1e-6,
            seed: 0,
            init: InitMode::Ridge,
            ridge: 1e-3,
            fix_alpha: false,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_iter == 0 || self.trace_every == 0 || self.window == 0 {
            return bad("max_iter, trace_every and window must be positive");
        }
        if !(self.tol > 0.0) || !(self.eps > 0.0) {
            return bad("tol and eps must be positive");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.ridge >= 0.0) {
            return bad("ridge must be non-negative");
        }
        Ok(())
    }
}

/// Running averages of squared gradients and squared updates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState<S> {
    pub sq_grad: Vec<S>,
    pub sq_update: Vec<S>,
}

impl<S: Scalar> AdadeltaState<S> {
    pub fn new(dim: usize) -> Self {
        Self { sq_grad: vec![S::zero(); dim], sq_update: vec![S::zero(); dim] }
    }

    fn step_into(&mut self, grad: &[S], rho: S, eps: S, update: &mut [S]) {
        let keep = S::one() - rho;
        for k in 0..grad.len() {
            let g = grad[k];
            self.sq_grad[k] = rho * self.sq_grad[k] + keep * g * g;
            let delta = -((self.sq_update[k] + eps).sqrt() / (self.sq_grad[k] + eps).sqrt()) * g;
            self.sq_update[k] = rho * self.sq_update[k] + keep * delta * delta;
            update[k] = delta;
        }
    }
}

/// One ADADELTA update for a gradient of the objective being minimized.
pub fn adadelta_step<S: Scalar>(
    state: &mut AdadeltaState<S>,
    grad: &[S],
    rho: S,
    eps: S,
) -> Result<Vec<S>> {
    check_len("gradient", state.sq_grad.len(), grad.len())?;
    let mut update = vec![S::zero(); grad.len()];
    state.step_into(grad, rho, eps, &mut update);
    Ok(update)
}

/// An additive penalty on the coefficients, minimized together with `−loglik`.
/// The fitter works with the per-observation objective `(−loglik + penalty)/n`.
pub trait Penalty<S>: Sync {
    fn value(&self, beta: &[S], alpha: &[S]) -> S;
    fn add_gradient(&self, beta: &[S], alpha: &[S], grad_beta: &mut [S], grad_alpha: &mut [S]);
}

pub struct NoPenalty;

impl<S: Scalar> Penalty<S> for NoPenalty {
    fn value(&self, _: &[S], _: &[S]) -> S {
        S::zero()
    }

    fn add_gradient(&self, _: &[S], _: &[S], _: &mut [S], _: &mut [S]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    MaxIter,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<S> {
    pub beta: Array1<S>,
    pub alpha: Array1<S>,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    pub termination: Termination,
    /// Steps discarded because the batch gradient was not finite.
    pub rejected_steps: usize,
    pub penalties: PenaltySnapshot<S>,
}

impl<S: Scalar> FitResult<S> {
    /// The model with the fitted coefficients.
    pub fn apply_to(&self, spec: &GlmSpec<S>) -> GlmSpec<S> {
        let mut out = spec.clone();
        out.beta = self.beta.clone();
        out.alpha = self.alpha.clone();
        out
    }
}

/// Starting values for `β`: ridge least squares of the link-transformed response on `X`.
pub fn ridge_start<S: Scalar>(spec: &GlmSpec<S>, y: &[S], ridge: f64) -> Result<Array1<S>> {
    check_len("responses", spec.n(), y.len())?;
    let (n, d) = (spec.n(), spec.d_mean());
    let target = |v: f64| match spec.kernel {
        FamilyKernel::Gaussian => v,
        FamilyKernel::Poisson => (v + 0.5).ln(),
        FamilyKernel::Binomial { trials } => {
            let p = (v + 0.5) / (trials as f64 + 1.0);
            (p / (1.0 - p)).ln()
        }
    };
    let x = DMatrix::from_fn(n, d, |i, j| spec.x[[i, j]].as_f64());
    let t = DVector::from_fn(n, |i, _| target(y[i].as_f64()));
    let mut gram = x.transpose() * &x;
    let scale = (gram.trace() / d.max(1) as f64).max(1e-12);
    for j in 0..d {
        gram[(j, j)] += ridge * scale;
    }
    let rhs = x.transpose() * t;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numeric("ridge start: normal equations are not positive definite".into()))?;
    let sol = chol.solve(&rhs);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("ridge start produced non-finite coefficients".into()));
    }
    Ok(sol.iter().map(|&v| S::lit(v)).collect())
}

/// Per-fit constants and scratch buffers.
struct Engine<'a, S> {
    spec: &'a GlmSpec<S>,
    y: &'a [S],
    saturated: Vec<S>,
    scale: Vec<S>,
    eta_bound: S,
    lg_bound: S,
    xi: NoiseSampler,
    zeta: NoiseSampler,
    x_noisy: Vec<S>,
    z_noisy: Vec<S>,
}

impl<'a, S: Scalar> Engine<'a, S> {
    fn new(spec: &'a GlmSpec<S>, y: &'a [S], noise: &NoiseSpec) -> Self {
        let kernel = spec.kernel;
        Self {
            spec,
            y,
            saturated: y.iter().map(|&v| kernel.saturated_term(v)).collect(),
            scale: (0..spec.n()).map(|i| spec.scale(i)).collect(),
            eta_bound: S::from_f64(eta_clamp(&kernel)).unwrap_or_else(S::max_value),
            lg_bound: S::lit(LOG_GAMMA_CLAMP),
            xi: noise.sampler(Side::Mean),
            zeta: noise.sampler(Side::Dispersion),
            x_noisy: vec![S::zero(); spec.d_mean()],
            z_noisy: vec![S::zero(); spec.d_disp()],
        }
    }

    fn clamp(v: S, bound: S) -> S {
        v.max(-bound).min(bound)
    }

    /// Gradient of `−Σ_{i∈rows} ℓ_i` at noisy features, scaled by `factor`, added into the buffers.
    #[allow(clippy::too_many_arguments)]
    fn accumulate<R: Rng + ?Sized>(
        &mut self,
        rows: &[usize],
        beta: &[S],
        alpha: &[S],
        factor: S,
        rng: &mut R,
        grad_beta: &mut [S],
        grad_alpha: &mut [S],
    ) {
        let kernel = self.spec.kernel;
        for &i in rows {
            let mut eta = S::zero();
            for (k, &x) in self.spec.x_row(i).iter().enumerate() {
                let xt = x * S::lit(self.xi.draw(rng));
                self.x_noisy[k] = xt;
                eta += xt * beta[k];
            }
            let mut lg = S::zero();
            for (k, &z) in self.spec.z_row(i).iter().enumerate() {
                let zt = z * S::lit(self.zeta.draw(rng));
                self.z_noisy[k] = zt;
                lg += zt * alpha[k];
            }
            let eta = Self::clamp(eta, self.eta_bound);
            let lg = Self::clamp(lg, self.lg_bound);
            let (d_eta, d_lg) =
                obs_score(&kernel, eta, lg, self.y[i], self.saturated[i], self.scale[i]);
            for (g, &xt) in grad_beta.iter_mut().zip(&self.x_noisy) {
                *g -= factor * d_eta * xt;
            }
            for (g, &zt) in grad_alpha.iter_mut().zip(&self.z_noisy) {
                *g -= factor * d_lg * zt;
            }
        }
    }

    /// Mean log-likelihood over all observations with clamped linear predictors.
    fn mean_loglik(&self, beta: &[S], alpha: &[S]) -> f64 {
        let kernel = self.spec.kernel;
        let mut total = 0.0;
        for i in 0..self.spec.n() {
            let eta = self.spec.x_row(i).iter().zip(beta).fold(S::zero(), |a, (&x, &b)| a + x * b);
            let lg = self.spec.z_row(i).iter().zip(alpha).fold(S::zero(), |a, (&z, &c)| a + z * c);
            let eta = Self::clamp(eta, self.eta_bound);
            let lg = Self::clamp(lg, self.lg_bound);
            total += obs_loglik(&kernel, eta, lg, self.y[i], self.saturated[i], self.scale[i]).as_f64();
        }
        total / self.spec.n() as f64
    }
}

/// Unbiased estimate of the gradient of the mean negative log-likelihood `−loglik/n` from one
/// batch of rows.
pub fn batch_gradient<S: Scalar, R: Rng + ?Sized>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
    rows: &[usize],
    rng: &mut R,
) -> Result<(Vec<S>, Vec<S>)> {
    spec.check_responses(y)?;
    let mut engine = Engine::new(spec, y, noise);
    let mut gb = vec![S::zero(); spec.d_mean()];
    let mut ga = vec![S::zero(); spec.d_disp()];
    let factor = S::one() / S::from_usize_lossy(rows.len().max(1));
    let (beta, alpha) = (spec.beta.to_vec(), spec.alpha.to_vec());
    engine.accumulate(rows, &beta, &alpha, factor, rng, &mut gb, &mut ga);
    Ok((gb, ga))
}

/// Fits `(β, α)` with the stream given by `config.seed`.
pub fn fit<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
    config: &OptimConfig,
) -> Result<FitResult<S>> {
    fit_penalized(spec, y, noise, config, &NoPenalty)
}

pub fn fit_penalized<S: Scalar, P: Penalty<S> + ?Sized>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
    config: &OptimConfig,
    penalty: &P,
) -> Result<FitResult<S>> {
    let mut rng = substream(config.seed, 0);
    fit_with_rng(spec, y, noise, config, penalty, &mut rng)
}

pub fn fit_with_rng<S: Scalar, P: Penalty<S> + ?Sized, R: Rng + ?Sized>(
    spec: &GlmSpec<S>,
    y: &[S],
    noise: &NoiseSpec,
    config: &OptimConfig,
    penalty: &P,
    rng: &mut R,
) -> Result<FitResult<S>> {
    spec.check_responses(y)?;
    noise.validate()?;
    config.validate()?;
    let n = spec.n();
    if config.batch_size > n {
        return Err(Error::Config(format!(
            "batch size {} exceeds the number of observations {n}",
            config.batch_size
        )));
    }
    let (dm, dg) = (spec.d_mean(), spec.d_disp());
    let (mut beta, mut alpha) = match config.init {
        InitMode::Ridge => (ridge_start(spec, y, config.ridge)?.to_vec(), vec![S::zero(); dg]),
        InitMode::Zero => (vec![S::zero(); dm], vec![S::zero(); dg]),
        InitMode::Current => (spec.beta.to_vec(), spec.alpha.to_vec()),
    };

    let mut engine = Engine::new(spec, y, noise);
    let (rho, eps) = (S::lit(config.rho), S::lit(config.eps));
    let factor = S::one() / S::from_usize_lossy(config.batch_size);
    let inv_n = S::one() / S::from_usize_lossy(n);
    let (mut pb, mut pa) = (vec![S::zero(); dm], vec![S::zero(); dg]);
    let mut state_beta = AdadeltaState::new(dm);
    let mut state_alpha = AdadeltaState::new(dg);
    let (mut gb, mut ga) = (vec![S::zero(); dm], vec![S::zero(); dg]);
    let (mut ub, mut ua) = (vec![S::zero(); dm], vec![S::zero(); dg]);
    let mut perm: Vec<usize> = (0..n).collect();

    let lag = config.window.div_ceil(config.trace_every).max(1);
    let mut trace = vec![TracePoint { iteration: 0, mean_loglik: engine.mean_loglik(&beta, &alpha) }];
    let mut termination = Termination::MaxIter;
    let mut rejected = 0;
    let mut iterations = 0;

    for it in 1..=config.max_iter {
        iterations = it;
        let (batch, _) = perm.partial_shuffle(rng, config.batch_size);
        gb.fill(S::zero());
        ga.fill(S::zero());
        engine.accumulate(batch, &beta, &alpha, factor, rng, &mut gb, &mut ga);
        pb.fill(S::zero());
        pa.fill(S::zero());
        penalty.add_gradient(&beta, &alpha, &mut pb, &mut pa);
        gb.iter_mut().zip(&pb).for_each(|(g, &p)| *g += inv_n * p);
        ga.iter_mut().zip(&pa).for_each(|(g, &p)| *g += inv_n * p);
        if config.fix_alpha {
            ga.fill(S::zero());
        }
        if gb.iter().chain(&ga).all(|v| v.is_finite()) {
            state_beta.step_into(&gb, rho, eps, &mut ub);
            beta.iter_mut().zip(&ub).for_each(|(b, &u)| *b += u);
            if !config.fix_alpha {
                state_alpha.step_into(&ga, rho, eps, &mut ua);
                alpha.iter_mut().zip(&ua).for_each(|(a, &u)| *a += u);
            }
        } else {
            rejected += 1;
            log::debug!("iteration {it}: non-finite batch gradient, step rejected");
        }

        if it % config.trace_every == 0 {
            let value = engine.mean_loglik(&beta, &alpha);
            if !value.is_finite() {
                return Err(Error::Numeric(format!("log-likelihood is not finite at iteration {it}")));
            }
            trace.push(TracePoint { iteration: it, mean_loglik: value });
            if stationary(&trace, lag, config.tol) {
                termination = Termination::Stationary;
                break;
            }
        }
    }

    let beta = Array1::from(beta);
    let alpha = Array1::from(alpha);
    if beta.iter().chain(alpha.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("fitted coefficients are not finite".into()));
    }
    let mut fitted = spec.clone();
    fitted.beta = beta.clone();
    fitted.alpha = alpha.clone();
    Ok(FitResult {
        penalties: penalty_matrices(&fitted, noise),
        beta,
        alpha,
        iterations,
        trace,
        termination,
        rejected_steps: rejected,
    })
}

/// Relative change between the mean of the last `lag` trace values and the mean of the `lag`
/// values before them.
fn stationary(trace: &[TracePoint], lag: usize, tol: f64) -> bool {
    if trace.len() < 2 * lag + 1 {
        return false;
    }
    let avg = |s: &[TracePoint]| s.iter().map(|p| p.mean_loglik).sum::<f64>() / s.len() as f64;
    let m = trace.len();
    let now = avg(&trace[m - lag..]);
    let before = avg(&trace[m - 2 * lag..m - lag]);
    (now - before).abs() <= tol * before.abs().max(1e-12)
}

/// Warm start: continue fitting from the coefficients of an earlier fit.
pub fn warm_start<S: Scalar>(
    spec: &GlmSpec<S>,
    previous: &FitResult<S>,
    y: &[S],
    noise: &NoiseSpec,
    config: &OptimConfig,
) -> Result<FitResult<S>> {
    let start = previous.apply_to(spec);
    let config = OptimConfig { init: InitMode::Current, ..config.clone() };
    fit(&start, y, noise, &config)
}
