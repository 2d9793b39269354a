//! Command execution. Every command writes its CSV files into an output directory together
//! with a `manifest.json` from which the run can be repeated.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use defglm::simlab::{
    build_model, cv_plan, fit_stream, fitted_curves, generate_dataset, run_scenario, summarize,
    ResultRow, ScenarioConfig, SummaryRow,
};
use defglm::tuning::{random_search_cv, CvTable, Method};

use crate::error::{CliError, CliResult};
use crate::io::{ensure_dir, file_digest, num, opt_num, read_xy, Table};
use crate::manifest::{FileDigest, Invocation, RunManifest};
use crate::traffic::{fit_traffic, read_traffic, select};

const PMLE_NOTE: &str =
    "pmle: second-difference penalized likelihood fitted with the same SGD/ADADELTA engine as dropout";

/// Files produced by one execution, in the order they were written.
#[derive(Debug, Default)]
struct Produced {
    files: Vec<(String, Table)>,
    notes: Vec<String>,
}

impl Produced {
    fn add(&mut self, name: impl Into<String>, table: Table) {
        self.files.push((name.into(), table));
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn cv_table(cv: &CvTable) -> Table {
    let k = cv.rows.first().map_or(0, |r| r.fold_loglik.len());
    let mut header = vec!["sample_index".to_string(), "param1".into(), "param2".into()];
    header.extend((1..=k).map(|f| format!("fold_loglik_{f}")));
    header.extend(["mean_loglik".to_string(), "selected_flag".into()]);
    let mut t = Table::new(header);
    for (j, r) in cv.rows.iter().enumerate() {
        let mut row = vec![r.sample_index.to_string(), num(r.params[0]), num(r.params[1])];
        row.extend(r.fold_loglik.iter().map(|&v| num(v)));
        row.push(num(r.mean_loglik));
        row.push(u8::from(j == cv.selected).to_string());
        t.push(row);
    }
    t
}

pub fn results_table(rows: &[ResultRow]) -> Table {
    let mut t = Table::new([
        "family", "scenario", "n", "method", "replicate", "rmse_mean", "rmse_disp", "param1", "param2", "diverged",
    ]);
    for r in rows {
        t.push(vec![
            r.family.name().into(),
            r.scenario.to_string(),
            r.n.to_string(),
            r.method.name().into(),
            r.replicate.to_string(),
            opt_num(r.rmse_mean),
            opt_num(r.rmse_disp),
            num(r.params[0]),
            num(r.params[1]),
            u8::from(r.diverged()).to_string(),
        ]);
    }
    t
}

pub fn summary_table(rows: &[SummaryRow]) -> Table {
    let mut t = Table::new([
        "family", "scenario", "n", "method", "metric", "count", "diverged", "min", "q25", "median", "q75", "max",
    ]);
    let finite = |v: f64| opt_num(Some(v).filter(|v| v.is_finite()));
    for r in rows {
        t.push(vec![
            r.family.name().into(),
            r.scenario.to_string(),
            r.n.to_string(),
            r.method.name().into(),
            r.metric.name().into(),
            r.count.to_string(),
            r.diverged.to_string(),
            finite(r.min),
            finite(r.q25),
            finite(r.median),
            finite(r.q75),
            finite(r.max),
        ]);
    }
    t
}

fn xy_table(x: &[f64], y: &[f64], names: [&str; 2]) -> Table {
    let mut t = Table::new(names);
    for (a, b) in x.iter().zip(y) {
        t.push(vec![num(*a), num(*b)]);
    }
    t
}

fn curves_table(x: &[f64], mean: &[f64], gamma: &[f64], names: [&str; 3]) -> Table {
    let mut t = Table::new(names);
    for ((a, b), c) in x.iter().zip(mean).zip(gamma) {
        t.push(vec![num(*a), num(*b), num(*c)]);
    }
    t
}

fn selected_table(tables: &[CvTable]) -> Table {
    let mut t = Table::new(["method", "param1", "param2", "mean_loglik", "diverged_folds"]);
    for cv in tables {
        let r = &cv.rows[cv.selected];
        t.push(vec![
            cv.method.name().into(),
            num(r.params[0]),
            num(r.params[1]),
            num(r.mean_loglik),
            cv.diverged_folds.to_string(),
        ]);
    }
    t
}

fn load_data(config: &ScenarioConfig, data: &Option<PathBuf>, seed: u64) -> CliResult<(Vec<f64>, Vec<f64>)> {
    match data {
        Some(path) => read_xy(path),
        None => {
            let d = generate_dataset(config, 0, seed)?;
            Ok((d.x, d.y))
        }
    }
}

fn execute(inv: &Invocation) -> CliResult<Produced> {
    let mut out = Produced::default();
    match inv {
        Invocation::Simulate { config, replicate, seed } => {
            let d = generate_dataset(config, *replicate, *seed)?;
            out.add("data.csv", xy_table(&d.x, &d.y, ["x", "y"]));
        }
        Invocation::Scenario { config, methods, cut_disp, seed } => {
            let res = run_scenario(config, methods, *seed)?;
            out.add("results.csv", results_table(&res.rows));
            out.add("summary.csv", summary_table(&summarize(&res.rows, *cut_disp)));
            out.add("truth.csv", curves_table(&res.truth.x, &res.truth.mean, &res.truth.disp, ["x", "f", "g"]));
            out.add("selected.csv", selected_table(&res.cv));
            for cv in &res.cv {
                out.add(format!("cv_{}.csv", cv.method.name()), cv_table(cv));
            }
            let diverged = res.diverged_count();
            if diverged > 0 {
                out.notes.push(format!("{diverged} replicate fits diverged and carry no RMSE"));
            }
        }
        Invocation::Cv { config, methods, data, seed } => {
            config.validate()?;
            let (x, y) = load_data(config, data, *seed)?;
            let spec = build_model(config, &x)?;
            let mut tables = Vec::new();
            for &m in methods {
                tables.push(random_search_cv(&spec, &y, m, &cv_plan(config, m, *seed), &config.optim)?);
            }
            out.add("selected.csv", selected_table(&tables));
            for cv in &tables {
                out.add(format!("cv_{}.csv", cv.method.name()), cv_table(cv));
            }
        }
        Invocation::Fit { config, method, params, data, seed } => {
            config.validate()?;
            let (x, y) = load_data(config, data, *seed)?;
            let spec = build_model(config, &x)?;
            let fit = method.fit_with(&spec, &y, *params, &config.optim, &mut fit_stream(*seed, *method, 0))?;
            let grid = config.eval_grid();
            let (mean, gamma) = fitted_curves(config, &fit, &grid)?;
            out.add("curves.csv", curves_table(&grid, &mean, &gamma, ["x", "mean", "gamma"]));
            let mut coef = Table::new(["block", "index", "value"]);
            for (block, v) in [("beta", &fit.beta), ("alpha", &fit.alpha)] {
                for (j, c) in v.iter().enumerate() {
                    coef.push(vec![block.into(), j.to_string(), num(*c)]);
                }
            }
            out.add("coefficients.csv", coef);
            let mut trace = Table::new(["iteration", "mean_loglik"]);
            for p in &fit.trace {
                trace.push(vec![p.iteration.to_string(), num(p.mean_loglik)]);
            }
            out.add("trace.csv", trace);
            out.notes.push(format!(
                "{:?} after {} iterations, {} rejected steps",
                fit.termination, fit.iterations, fit.rejected_steps
            ));
        }
        Invocation::Traffic { config, input, sensor, direction, method, samples, summer_2019, seed } => {
            let ing = read_traffic(input, *summer_2019)?;
            let (hours, counts) = select(&ing.records, sensor, *direction)?;
            let res = fit_traffic(&hours, &counts, *method, *samples, config, *seed)?;
            out.add("fitted.csv", curves_table(&res.hours, &res.mean, &res.gamma, ["hour", "mean", "gamma"]));
            out.add("cv.csv", cv_table(&res.cv));
            out.notes.push(format!(
                "{} observations used; rejected {} malformed and {} duplicate rows; {} outside the date filter",
                hours.len(),
                ing.malformed,
                ing.duplicates,
                ing.filtered
            ));
        }
    }
    let uses_pmle = match inv {
        Invocation::Scenario { methods, .. } | Invocation::Cv { methods, .. } => methods.contains(&Method::Pmle),
        Invocation::Fit { method, .. } => *method == Method::Pmle,
        _ => false,
    };
    if uses_pmle {
        out.notes.push(PMLE_NOTE.into());
    }
    Ok(out)
}

fn inputs_of(inv: &Invocation) -> Vec<PathBuf> {
    match inv {
        Invocation::Cv { data: Some(p), .. } | Invocation::Fit { data: Some(p), .. } => vec![p.clone()],
        Invocation::Traffic { input, .. } => vec![input.clone()],
        _ => Vec::new(),
    }
}

/// Executes `inv`, writes every output into `dir` and finishes with the manifest.
pub fn run(inv: &Invocation, dir: &Path) -> CliResult<RunManifest> {
    let started = now();
    let mut inputs = Vec::new();
    for p in inputs_of(inv) {
        inputs.push(FileDigest { path: p.display().to_string(), sha256: file_digest(&p)? });
    }
    let produced = execute(inv)?;
    ensure_dir(dir)?;
    let mut outputs = Vec::new();
    for (name, table) in &produced.files {
        let bytes = table.to_bytes()?;
        crate::io::write_file(&dir.join(name), &bytes)?;
        outputs.push(FileDigest { path: name.clone(), sha256: crate::io::sha256_hex(&bytes) });
    }
    let manifest = RunManifest {
        command: inv.name().into(),
        config_digest: inv.config_digest(),
        seed: inv.seed(),
        software_version: env!("CARGO_PKG_VERSION").into(),
        started,
        finished: now(),
        invocation: inv.clone(),
        inputs,
        outputs,
        notes: produced.notes,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Repeats the run recorded in `manifest_path` into `dir` and checks every output digest.
pub fn rerun(manifest_path: &Path, dir: &Path) -> CliResult<RunManifest> {
    let old = RunManifest::load(manifest_path)?;
    for input in &old.inputs {
        let now = file_digest(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Data(format!("input {} changed since the recorded run", input.path)));
        }
    }
    let new = run(&old.invocation, dir)?;
    let mismatched: Vec<&str> = old
        .outputs
        .iter()
        .filter(|o| !new.outputs.contains(o))
        .map(|o| o.path.as_str())
        .collect();
    if !mismatched.is_empty() || old.outputs.len() != new.outputs.len() {
        return Err(CliError::Data(format!("rerun differs from the recorded run: {}", mismatched.join(", "))));
    }
    Ok(new)
}
