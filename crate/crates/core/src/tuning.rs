//! Random-search k-fold cross-validation over a rectangle of hyperparameter pairs.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dropout::NoiseSpec;
use crate::error::{Error, Result};
use crate::model::{loglik_with_base, GlmSpec};
use crate::optim::{fit_with_rng, FitResult, NoPenalty, OptimConfig};
use crate::pmle::DiffPenalty;
use crate::rng::{stream_id, substream};
use crate::scalar::Scalar;

const SAMPLE_STREAM: u64 = 0;
const FOLD_STREAM: u64 = 1;
const FIT_STREAM_BASE: u64 = 1 << 40;

/// Fold label for each observation; labels are `0..k` and fold sizes differ by at most one.
pub fn make_folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::Config(format!("cannot split {n} observations into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bernoulli,
    Gaussian,
    Pmle,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Bernoulli => "bernoulli",
            Method::Gaussian => "gaussian",
            Method::Pmle => "pmle",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(Method::Bernoulli),
            "gaussian" => Ok(Method::Gaussian),
            "pmle" => Ok(Method::Pmle),
            other => Err(Error::Config(format!(
                "unknown method `{other}` (expected bernoulli, gaussian or pmle)"
            ))),
        }
    }

    /// Search rectangle used in the simulation study.
    pub fn simulation_rectangle(&self) -> Rectangle {
        match self {
            Method::Bernoulli => Rectangle::new([0.0, 0.0], [1.0, 1.0]),
            Method::Gaussian => Rectangle::new([0.0, 0.0], [3.0, 6.0]),
            Method::Pmle => Rectangle::new([0.0, 0.0], [15_000.0, 15_000.0]),
        }
    }

    /// Labels of the two hyperparameters.
    pub fn param_names(&self) -> [&'static str; 2] {
        match self {
            Method::Bernoulli => ["delta_mean", "delta_disp"],
            Method::Gaussian => ["sigma_mean", "sigma_disp"],
            Method::Pmle => ["lambda_mean", "lambda_disp"],
        }
    }

    /// Fits the model with hyperparameters `params` using the given random stream.
    pub fn fit_with<S: Scalar, R: Rng + ?Sized>(
        &self,
        spec: &GlmSpec<S>,
        y: &[S],
        params: [f64; 2],
        config: &OptimConfig,
        rng: &mut R,
    ) -> Result<FitResult<S>> {
        match self {
            Method::Bernoulli => {
                let noise = NoiseSpec::bernoulli(params[0], params[1])?;
                fit_with_rng(spec, y, &noise, config, &NoPenalty, rng)
            }
            Method::Gaussian => {
                let noise = NoiseSpec::gaussian(params[0], params[1])?;
                fit_with_rng(spec, y, &noise, config, &NoPenalty, rng)
            }
            Method::Pmle => {
                let penalty = DiffPenalty::new(params[0], params[1])?;
                fit_with_rng(spec, y, &NoiseSpec::none(), config, &penalty, rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl Rectangle {
    pub fn new(lower: [f64; 2], upper: [f64; 2]) -> Self {
        Self { lower, upper }
    }

    pub fn validate(&self) -> Result<()> {
        for d in 0..2 {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
                return Err(Error::Config(format!("invalid search interval [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|d| p[d] >= self.lower[d] && p[d] <= self.upper[d])
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        let u: [f64; 2] = [rng.random(), rng.random()];
        [0, 1].map(|d| self.lower[d] + u[d] * (self.upper[d] - self.lower[d]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvPlan {
    pub rectangle: Rectangle,
    pub samples: usize,
    pub folds: usize,
    pub seed: u64,
}

impl CvPlan {
    pub fn validate(&self) -> Result<()> {
        self.rectangle.validate()?;
        if self.samples == 0 {
            return Err(Error::Config("at least one hyperparameter sample is required".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("cross-validation needs at least two folds".into()));
        }
        Ok(())
    }

    /// The `s` hyperparameter pairs, in sample order.
    pub fn draw_samples(&self) -> Vec<[f64; 2]> {
        let mut rng = substream(self.seed, SAMPLE_STREAM);
        (0..self.samples).map(|_| self.rectangle.sample(&mut rng)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub sample_index: usize,
    pub params: [f64; 2],
    /// Held-out log-likelihood per fold; `-inf` for a fold whose fit diverged.
    pub fold_loglik: Vec<f64>,
    pub mean_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvTable {
    pub method: Method,
    pub rows: Vec<CvRow>,
    pub selected: usize,
    pub diverged_folds: usize,
}

impl CvTable {
    pub fn selected_params(&self) -> [f64; 2] {
        self.rows[self.selected].params
    }
}

/// Index of the largest value; ties go to the smallest index. `None` if no value is finite.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        if best.is_none_or(|b| v > values[b]) {
            best = Some(j);
        }
    }
    best
}

/// Held-out log-likelihood (with base-measure terms) of `fit` on `rows`.
pub fn held_out_loglik<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    fit: &FitResult<S>,
    rows: &[usize],
) -> Result<f64> {
    let test = fit.apply_to(spec).subset(rows);
    let y_test: Vec<S> = rows.iter().map(|&i| y[i]).collect();
    Ok(loglik_with_base(&test, &y_test)?.as_f64())
}

pub fn random_search_cv<S: Scalar>(
    spec: &GlmSpec<S>,
    y: &[S],
    method: Method,
    plan: &CvPlan,
    config: &OptimConfig,
) -> Result<CvTable> {
    plan.validate()?;
    config.validate()?;
    spec.check_responses(y)?;
    let n = spec.n();
    let folds = make_folds(n, plan.folds, &mut substream(plan.seed, FOLD_STREAM))?;
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..plan.folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            (train, test)
        })
        .collect();
    let train_sets: Vec<(GlmSpec<S>, Vec<S>)> = splits
        .iter()
        .map(|(train, _)| (spec.subset(train), train.iter().map(|&i| y[i]).collect()))
        .collect();
    let samples = plan.draw_samples();

    let tasks: Vec<(usize, usize)> =
        (0..samples.len()).flat_map(|j| (0..plan.folds).map(move |f| (j, f))).collect();
    let results: Vec<Result<f64>> = tasks
        .par_iter()
        .map(|&(j, f)| {
            let (train_spec, train_y) = &train_sets[f];
            let mut rng = substream(plan.seed, FIT_STREAM_BASE + stream_id(j as u64, f as u64));
            match method.fit_with(train_spec, train_y, samples[j], config, &mut rng) {
                Ok(fit) => {
                    let v = held_out_loglik(spec, y, &fit, &splits[f].1)?;
                    Ok(if v.is_finite() { v } else { f64::NEG_INFINITY })
                }
                Err(Error::Numeric(msg)) => {
                    log::warn!("{} sample {j} fold {f} diverged: {msg}", method.name());
                    Ok(f64::NEG_INFINITY)
                }
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut values = Vec::with_capacity(results.len());
    for r in results {
        values.push(r?);
    }
    let diverged_folds = values.iter().filter(|v| !v.is_finite()).count();
    let rows: Vec<CvRow> = samples
        .iter()
        .enumerate()
        .map(|(j, &params)| {
            let fold_loglik = values[j * plan.folds..(j + 1) * plan.folds].to_vec();
            let mean_loglik = fold_loglik.iter().sum::<f64>() / plan.folds as f64;
            CvRow { sample_index: j, params, fold_loglik, mean_loglik }
        })
        .collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_loglik).collect();
    let selected = argmax(&means).ok_or_else(|| {
        Error::Numeric(format!("every {} cross-validation sample diverged", method.name()))
    })?;
    Ok(CvTable { method, rows, selected, diverged_folds })
}
