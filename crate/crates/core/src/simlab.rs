//! Simulation study: test functions, data generation, replicate fits and RMSE summaries.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::basis::{uniform_grid, BoundaryMode, SplineBasis};
use crate::error::{Error, Result};
use crate::families::{def_sample, DefParams, FamilyKernel};
use crate::model::GlmSpec;
use crate::optim::{FitResult, OptimConfig};
use crate::rng::{derive_seed, stream_id, substream};
use crate::tuning::{random_search_cv, CvPlan, CvTable, Method, Rectangle};

const DATA_TAG: u64 = 1;
const CV_TAG: u64 = 2;
const FIT_TAG: u64 = 3;

/// Density of `N(mu, sd²)` at `x`.
pub fn normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanFunction {
    F1,
    F2,
}

impl MeanFunction {
    pub fn eval(&self, x: f64) -> f64 {
        let bump = (4.0 * std::f64::consts::PI * x).sin() * normal_pdf(x, 0.5, 0.05);
        match self {
            MeanFunction::F1 => 2.0 * bump,
            MeanFunction::F2 => 40.0 + 10.0 * bump,
        }
    }
}

/// Dispersion functions `g₁..g₃`, indexed by scenario; scenario 0 is `g ≡ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersionFunction {
    One,
    G1,
    G2,
    G3,
}

impl DispersionFunction {
    pub fn for_scenario(scenario: u8) -> Result<Self> {
        match scenario {
            0 => Ok(Self::One),
            1 => Ok(Self::G1),
            2 => Ok(Self::G2),
            3 => Ok(Self::G3),
            s => Err(Error::Config(format!("scenario must be 0, 1, 2 or 3, got {s}"))),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::G1 => (-0.08 * normal_pdf(x, 0.4, 0.04) - 0.08 * normal_pdf(x, 0.7, 0.02)).exp(),
            Self::G2 => (-0.08 * normal_pdf(x, 0.4, 0.03) + 0.08 * normal_pdf(x, 0.7, 0.03)).exp(),
            Self::G3 => {
                let z = (x - 0.8) / 0.15;
                (2.0 / 0.15 * normal_pdf(z, 0.0, 1.0) * normal_cdf(-4.0 * z)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimFamily {
    Gaussian,
    Dpoisson,
    Dbinomial,
}

impl SimFamily {
    pub fn name(&self) -> &'static str {
        match self {
            SimFamily::Gaussian => "gaussian",
            SimFamily::Dpoisson => "dpoisson",
            SimFamily::Dbinomial => "dbinomial",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RectangleOverrides {
    pub bernoulli: Option<Rectangle>,
    pub gaussian: Option<Rectangle>,
    pub pmle: Option<Rectangle>,
}

impl RectangleOverrides {
    pub fn get(&self, method: Method) -> Rectangle {
        let chosen = match method {
            Method::Bernoulli => self.bernoulli,
            Method::Gaussian => self.gaussian,
            Method::Pmle => self.pmle,
        };
        chosen.unwrap_or_else(|| method.simulation_rectangle())
    }
}

fn default_replicates() -> usize {
    100
}
fn default_sigma2() -> f64 {
    0.64
}
fn default_trials() -> u32 {
    70
}
fn default_grid() -> usize {
    500
}
fn default_knots_mean() -> usize {
    30
}
fn default_knots_disp() -> usize {
    20
}
fn default_folds() -> usize {
    5
}
fn default_samples() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub family: SimFamily,
    /// Index of the dispersion function; 0 means `g ≡ 1`.
    pub scenario: u8,
    pub n: usize,
    #[serde(default)]
    pub mean_function: Option<MeanFunction>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Gaussian scale `σ²`.
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_trials")]
    pub trials: u32,
    /// Number of grid intervals for RMSE evaluation.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_knots_mean")]
    pub knots_mean: usize,
    #[serde(default = "default_knots_disp")]
    pub knots_disp: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub rectangles: RectangleOverrides,
    #[serde(default)]
    pub optim: OptimConfig,
}

impl ScenarioConfig {
    pub fn new(family: SimFamily, scenario: u8, n: usize) -> Self {
        Self {
            family,
            scenario,
            n,
            mean_function: None,
            replicates: default_replicates(),
            sigma2: default_sigma2(),
            trials: default_trials(),
            grid: default_grid(),
            knots_mean: default_knots_mean(),
            knots_disp: default_knots_disp(),
            folds: default_folds(),
            samples: default_samples(),
            rectangles: RectangleOverrides::default(),
            optim: OptimConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        DispersionFunction::for_scenario(self.scenario)?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.replicates == 0 || self.grid == 0 || self.samples == 0 {
            return bad("n, replicates, grid and samples must be positive".into());
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.folds < 2 || self.folds > self.n {
            return bad(format!("folds must lie in [2, n], got {}", self.folds));
        }
        let train = self.n - self.n.div_ceil(self.folds);
        if self.optim.batch_size > train {
            return bad(format!(
                "batch size {} exceeds the smallest training set ({train} observations)",
                self.optim.batch_size
            ));
        }
        for m in [Method::Bernoulli, Method::Gaussian, Method::Pmle] {
            self.rectangles.get(m).validate()?;
        }
        self.optim.validate()?;
        self.mean_basis()?;
        self.disp_basis()?;
        Ok(())
    }

    pub fn kernel(&self) -> FamilyKernel {
        match self.family {
            SimFamily::Gaussian => FamilyKernel::Gaussian,
            SimFamily::Dpoisson => FamilyKernel::Poisson,
            SimFamily::Dbinomial => FamilyKernel::Binomial { trials: self.trials },
        }
    }

    pub fn phi(&self) -> f64 {
        match self.family {
            SimFamily::Gaussian => self.sigma2,
            _ => 1.0,
        }
    }

    pub fn mean_fn(&self) -> MeanFunction {
        self.mean_function.unwrap_or(match self.family {
            SimFamily::Gaussian => MeanFunction::F1,
            _ => MeanFunction::F2,
        })
    }

    pub fn disp_fn(&self) -> DispersionFunction {
        DispersionFunction::for_scenario(self.scenario).unwrap_or(DispersionFunction::One)
    }

    pub fn mean_basis(&self) -> Result<SplineBasis<f64>> {
        SplineBasis::build(0.0, 1.0, self.knots_mean, BoundaryMode::Natural)
    }

    pub fn disp_basis(&self) -> Result<SplineBasis<f64>> {
        SplineBasis::build(0.0, 1.0, self.knots_disp, BoundaryMode::Natural)
    }

    /// Evaluation grid `Π` with `grid + 1` equidistant points.
    pub fn eval_grid(&self) -> Vec<f64> {
        uniform_grid(0.0, 1.0, self.grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Replicate `replicate` of the scenario: `x ~ U[0, 1]`, `y ~ DEF(θ = (b′)⁻¹(f(x)), γ = g(x))`.
pub fn generate_dataset(config: &ScenarioConfig, replicate: usize, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = substream(derive_seed(seed, DATA_TAG), replicate as u64);
    generate_with(config, config.n, &mut rng)
}

/// Draws `n` observations from the scenario's data-generating process.
pub fn generate_with<R: Rng + ?Sized>(config: &ScenarioConfig, n: usize, rng: &mut R) -> Result<Dataset> {
    let kernel = config.kernel();
    let (f, g) = (config.mean_fn(), config.disp_fn());
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut y = Vec::with_capacity(n);
    for &xk in &x {
        let theta = kernel
            .theta_from_mean(f.eval(xk))
            .map_err(|e| Error::Domain(format!("at x = {xk}: {e}")))?;
        let params = DefParams::new(theta, g.eval(xk), config.phi(), 1.0)?;
        y.push(def_sample(&kernel, &params, rng, 1)?[0]);
    }
    Ok(Dataset { x, y })
}

/// The extended GLM on the scenario's spline bases, with zero coefficients.
pub fn build_model(config: &ScenarioConfig, x: &[f64]) -> Result<GlmSpec<f64>> {
    let xm = config.mean_basis()?.design_matrix(x)?;
    let zm = config.disp_basis()?.design_matrix(x)?;
    GlmSpec::with_designs(config.kernel(), xm, zm, config.phi())
}

/// `(Σ_k (a_k − b_k)²)^{1/2}`, a root of the unnormalized sum over the grid.
pub fn rmse(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "rmse: {} estimates against {} truth values",
            estimate.len(),
            truth.len()
        )));
    }
    Ok(estimate.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

/// Fitted mean `b′(B_μ(x)ᵀβ̂)` and dispersion `exp(B_γ(x)ᵀα̂)` on `grid`.
pub fn fitted_curves(
    config: &ScenarioConfig,
    fit: &FitResult<f64>,
    grid: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let kernel = config.kernel();
    let eta = config.mean_basis()?.evaluate_effect(fit.beta.as_slice().unwrap(), grid)?;
    let lg = config.disp_basis()?.evaluate_effect(fit.alpha.as_slice().unwrap(), grid)?;
    Ok((eta.iter().map(|&t| kernel.mean(t)).collect(), lg.iter().map(|v| v.exp()).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub disp: Vec<f64>,
}

pub fn truth_curves(config: &ScenarioConfig) -> Truth {
    let x = config.eval_grid();
    let (f, g) = (config.mean_fn(), config.disp_fn());
    Truth {
        mean: x.iter().map(|&v| f.eval(v)).collect(),
        disp: x.iter().map(|&v| g.eval(v)).collect(),
        x,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub family: SimFamily,
    pub scenario: u8,
    pub n: usize,
    pub method: Method,
    pub replicate: usize,
    /// `None` when the fit diverged.
    pub rmse_mean: Option<f64>,
    pub rmse_disp: Option<f64>,
    pub params: [f64; 2],
}

impl ResultRow {
    pub fn diverged(&self) -> bool {
        self.rmse_mean.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub rows: Vec<ResultRow>,
    pub cv: Vec<CvTable>,
    pub truth: Truth,
}

impl ScenarioResult {
    pub fn diverged_count(&self) -> usize {
        self.rows.iter().filter(|r| r.diverged()).count()
    }
}

/// The cross-validation plan the scenario runner uses for `method` under `seed`.
pub fn cv_plan(config: &ScenarioConfig, method: Method, seed: u64) -> CvPlan {
    CvPlan {
        rectangle: config.rectangles.get(method),
        samples: config.samples,
        folds: config.folds,
        seed: derive_seed(seed, CV_TAG ^ ((method as u64) << 8)),
    }
}

/// Random stream for the fit of `method` on replicate `replicate`.
pub fn fit_stream(seed: u64, method: Method, replicate: usize) -> crate::rng::Rng {
    substream(derive_seed(seed, FIT_TAG), stream_id(method as u64, replicate as u64))
}

/// Runs the protocol: cross-validate each method on replicate 0, then fit replicates
/// `1..=R` with the selected hyperparameters and score them against the truth on the grid.
pub fn run_scenario(config: &ScenarioConfig, methods: &[Method], seed: u64) -> Result<ScenarioResult> {
    config.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("at least one method is required".into()));
    }
    let truth = truth_curves(config);

    let cv_data = generate_dataset(config, 0, seed)?;
    let cv_spec = build_model(config, &cv_data.x)?;
    let mut cv = Vec::with_capacity(methods.len());
    for &method in methods {
        cv.push(random_search_cv(&cv_spec, &cv_data.y, method, &cv_plan(config, method, seed), &config.optim)?);
    }

    let datasets: Vec<Dataset> = (1..=config.replicates)
        .into_par_iter()
        .map(|r| generate_dataset(config, r, seed))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..methods.len())
        .flat_map(|m| (0..config.replicates).map(move |r| (m, r)))
        .collect();
    let rows: Vec<ResultRow> = tasks
        .par_iter()
        .map(|&(m, r)| {
            let method = methods[m];
            let params = cv[m].selected_params();
            let data = &datasets[r];
            let spec = build_model(config, &data.x)?;
            let mut rng = fit_stream(seed, method, r + 1);
            let row = |rmse_mean, rmse_disp| ResultRow {
                family: config.family,
                scenario: config.scenario,
                n: config.n,
                method,
                replicate: r + 1,
                rmse_mean,
                rmse_disp,
                params,
            };
            match method.fit_with(&spec, &data.y, params, &config.optim, &mut rng) {
                Ok(fit) => {
                    let (mean, disp) = fitted_curves(config, &fit, &truth.x)?;
                    let a = rmse(&mean, &truth.mean)?;
                    let b = rmse(&disp, &truth.disp)?;
                    if a.is_finite() && b.is_finite() {
                        Ok(row(Some(a), Some(b)))
                    } else {
                        Ok(row(None, None))
                    }
                }
                Err(Error::Numeric(msg)) => {
                    log::warn!("{} replicate {} diverged: {msg}", method.name(), r + 1);
                    Ok(row(None, None))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok(ScenarioResult { rows, cv, truth })
}

/// Sample quantile of sorted data with linear interpolation between order statistics
/// (Hyndman and Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    RmseMean,
    RmseDisp,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::RmseMean => "rmse_mean",
            Metric::RmseDisp => "rmse_disp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub family: SimFamily,
    pub scenario: u8,
    pub n: usize,
    pub method: Method,
    pub metric: Metric,
    pub count: usize,
    pub diverged: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Boxplot statistics per `(n, method, metric)`. With `cut_disp` the dispersion values above
/// their own 95th percentile are dropped first.
pub fn summarize(rows: &[ResultRow], cut_disp: bool) -> Vec<SummaryRow> {
    let mut keys: Vec<(SimFamily, u8, usize, Method)> =
        rows.iter().map(|r| (r.family, r.scenario, r.n, r.method)).collect();
    keys.dedup();
    let mut seen = Vec::new();
    for k in keys {
        if !seen.contains(&k) {
            seen.push(k);
        }
    }
    let mut out = Vec::new();
    for (family, scenario, n, method) in seen {
        let group: Vec<&ResultRow> = rows
            .iter()
            .filter(|r| r.family == family && r.scenario == scenario && r.n == n && r.method == method)
            .collect();
        let diverged = group.iter().filter(|r| r.diverged()).count();
        for metric in [Metric::RmseMean, Metric::RmseDisp] {
            let mut v: Vec<f64> = group
                .iter()
                .filter_map(|r| match metric {
                    Metric::RmseMean => r.rmse_mean,
                    Metric::RmseDisp => r.rmse_disp,
                })
                .collect();
            v.sort_by(f64::total_cmp);
            if cut_disp && metric == Metric::RmseDisp && !v.is_empty() {
                let cut = quantile_sorted(&v, 0.95);
                v.retain(|&x| x <= cut);
            }
            out.push(SummaryRow {
                family,
                scenario,
                n,
                method,
                metric,
                count: v.len(),
                diverged,
                min: quantile_sorted(&v, 0.0),
                q25: quantile_sorted(&v, 0.25),
                median: quantile_sorted(&v, 0.5),
                q75: quantile_sorted(&v, 0.75),
                max: quantile_sorted(&v, 1.0),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_function_values() {
        assert!(MeanFunction::F1.eval(0.5).abs() < 1e-14);
        assert!((MeanFunction::F2.eval(0.5) - 40.0).abs() < 1e-13);
        assert!((DispersionFunction::G1.eval(0.0) - 1.0).abs() < 1e-12);
        assert!(DispersionFunction::G3.eval(0.0) >= 1.0);
        assert_eq!(DispersionFunction::One.eval(0.3), 1.0);
        assert!(DispersionFunction::for_scenario(4).is_err());
    }

    #[test]
    fn rmse_examples() {
        let a = vec![0.3; 501];
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|v| v + 1.0).collect();
        assert!((rmse(&b, &a).unwrap() - 501f64.sqrt()).abs() < 1e-12);
        assert!((rmse(&b, &a).unwrap() - 22.383).abs() < 1e-3);
        let mut c = a.clone();
        c[17] += 1.0;
        assert!((rmse(&c, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(rmse(&a[..3], &a).is_err());
    }

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        assert_eq!(median(&[3.0, f64::NAN, 1.0, 2.0]), 2.0);
    }

    #[test]
    fn config_defaults_and_validation() {
        let json = r#"{"family": "dbinomial", "scenario": 1, "n": 100}"#;
        let c: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.trials, 70);
        assert_eq!(c.knots_mean, 30);
        assert_eq!(c.mean_fn(), MeanFunction::F2);
        assert!(c.validate().is_ok());
        let mut bad = c.clone();
        bad.folds = 1;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.n = 20;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let json = r#"{"family": "gaussian", "scenario": 1, "n": 100, "knots": 3}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(json).is_err());
        let json = r#"{"family": "gaussian", "scenario": 1, "n": 100, "optim": {"batch": 3}}"#;
        assert!(serde_json::from_str::<ScenarioConfig>(json).is_err());
        let json = r#"{"family": "gaussian", "scenario": 1, "n": 100, "optim": {"max_iter": 7}}"#;
        let c: ScenarioConfig = serde_json::from_str(json).unwrap();
        assert_eq!(c.optim.max_iter, 7);
        assert_eq!(c.optim.batch_size, 30);
    }

    #[test]
    fn binomial_data_stay_in_support() {
        let c = ScenarioConfig::new(SimFamily::Dbinomial, 1, 100);
        let d = generate_dataset(&c, 3, 11).unwrap();
        assert_eq!(d.y.len(), 100);
        assert!(d.y.iter().all(|&v| (0.0..=70.0).contains(&v) && v.fract() == 0.0));
        assert_eq!(d, generate_dataset(&c, 3, 11).unwrap());
        assert_ne!(d, generate_dataset(&c, 4, 11).unwrap());
    }

    #[test]
    fn summary_cut_drops_the_top() {
        let rows: Vec<ResultRow> = (0..20)
            .map(|r| ResultRow {
                family: SimFamily::Gaussian,
                scenario: 1,
                n: 50,
                method: Method::Pmle,
                replicate: r + 1,
                rmse_mean: Some(r as f64),
                rmse_disp: Some(if r == 19 { 1e6 } else { r as f64 }),
                params: [0.0, 0.0],
            })
            .collect();
        let plain = summarize(&rows, false);
        let cut = summarize(&rows, true);
        assert_eq!(plain[1].max, 1e6);
        assert_eq!(cut[1].count, 19);
        assert_eq!(cut[1].max, 18.0);
        assert_eq!(cut[0], plain[0]);
    }
}
