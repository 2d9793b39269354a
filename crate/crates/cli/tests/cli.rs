use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use defglm::families::def_sample;
use defglm::rng::substream;
use defglm::simlab::quantile_sorted;
use defglm::{DefParams, FamilyKernel};
use defglm_cli::io::Table;
use tempfile::TempDir;

fn defglm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_defglm")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = defglm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"{"family": "gaussian", "scenario": 1, "n": 100, "replicates": 3, "samples": 2, "folds": 2,
  "optim": {"max_iter": 1500}}"#;

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"family": "gaussian", "scenario": 1, "n": 250}"#);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["simulate", "--config", s(&cfg), "--seed", "7", "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--seed", "7", "--out", s(&b)]);
    let data = fs::read(a.join("data.csv")).unwrap();
    assert_eq!(data, fs::read(b.join("data.csv")).unwrap());
    let t = Table::read(&a.join("data.csv")).unwrap();
    assert_eq!(t.header, ["x", "y"]);
    assert_eq!(t.rows.len(), 250);
}

#[test]
fn binomial_counts_stay_within_trials() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", r#"{"family": "dbinomial", "scenario": 1, "n": 100}"#);
    let out = tmp.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let t = Table::read(&out.join("data.csv")).unwrap();
    for row in &t.rows {
        let y: f64 = row[1].parse().unwrap();
        assert!(y.fract() == 0.0 && (0.0..=70.0).contains(&y), "{y}");
    }
}

#[test]
fn config_errors_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.json", r#"{"family": "gauss", "scenario": 1, "n": 10}"#);
    let out = defglm(&["simulate", "--config", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("family"));

    let extra = write(tmp.path(), "extra.json", r#"{"family": "gaussian", "scenario": 1, "n": 10, "knots": 3}"#);
    let out = defglm(&["simulate", "--config", s(&extra), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("knots"));

    let cfg = write(tmp.path(), "c.json", TINY);
    let out = defglm(&["scenario", "--config", s(&cfg), "--methods", "lasso", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_outputs_rerun_and_summary() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let out = tmp.path().join("run");
    ok(&["scenario", "--config", s(&cfg), "--seed", "3", "--methods", "bernoulli,pmle", "--out", s(&out)]);
    for f in ["results.csv", "summary.csv", "truth.csv", "selected.csv", "cv_bernoulli.csv", "cv_pmle.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let cv = Table::read(&out.join("cv_pmle.csv")).unwrap();
    assert_eq!(
        cv.header,
        ["sample_index", "param1", "param2", "fold_loglik_1", "fold_loglik_2", "mean_loglik", "selected_flag"]
    );
    assert_eq!(cv.rows.iter().filter(|r| r[6] == "1").count(), 1);

    // summary quantiles recomputed from results.csv
    let results = Table::read(&out.join("results.csv")).unwrap();
    let summary = Table::read(&out.join("summary.csv")).unwrap();
    let col = |t: &Table, name: &str| t.column(name).unwrap();
    for row in &summary.rows {
        let (method, metric) = (&row[col(&summary, "method")], &row[col(&summary, "metric")]);
        let mut v: Vec<f64> = results
            .rows
            .iter()
            .filter(|r| &r[col(&results, "method")] == method)
            .map(|r| r[col(&results, metric)].parse().unwrap())
            .collect();
        v.sort_by(f64::total_cmp);
        for (name, p) in [("min", 0.0), ("q25", 0.25), ("median", 0.5), ("q75", 0.75), ("max", 1.0)] {
            let h = (v.len() - 1) as f64 * p;
            let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
            let expect = v[lo] + (h - lo as f64) * (v[hi] - v[lo]);
            let got: f64 = row[col(&summary, name)].parse().unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{method} {metric} {name}");
            assert_eq!(quantile_sorted(&v, p), got);
        }
    }

    let again = tmp.path().join("again");
    ok(&["rerun", "--manifest", s(&out.join("manifest.json")), "--out", s(&again)]);
    for f in ["results.csv", "summary.csv", "truth.csv", "cv_pmle.csv"] {
        assert_eq!(fs::read(out.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn emitted_csv_round_trips() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let out = tmp.path().join("run");
    ok(&["cv", "--config", s(&cfg), "--methods", "gaussian", "--out", s(&out)]);
    for f in ["cv_gaussian.csv", "selected.csv"] {
        let bytes = fs::read(out.join(f)).unwrap();
        assert_eq!(Table::read(&out.join(f)).unwrap().to_bytes().unwrap(), bytes);
    }
}

#[test]
fn fit_from_data_file() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "c.json", TINY);
    let sim = tmp.path().join("sim");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&sim)]);
    let out = tmp.path().join("fit");
    let data = sim.join("data.csv");
    ok(&["fit", "--config", s(&cfg), "--methods", "bernoulli", "--params", "0.2,0.3", "--data", s(&data), "--out", s(&out)]);
    let curves = Table::read(&out.join("curves.csv")).unwrap();
    assert_eq!(curves.header, ["x", "mean", "gamma"]);
    assert_eq!(curves.rows.len(), 501);
    assert!(curves.rows.iter().all(|r| r[2].parse::<f64>().unwrap() > 0.0));

    fs::write(&data, "x,y\n0.5,oops\n").unwrap();
    let bad = defglm(&["fit", "--config", s(&cfg), "--methods", "bernoulli", "--params", "0.2,0.3", "--data", s(&data), "--out", s(&out)]);
    assert_eq!(bad.status.code(), Some(3));
}

/// Synthetic counts with rush-hour peaks at 7.5 and 17 and overdispersion around 6am.
fn log_mean(t: f64) -> f64 {
    50f64.ln() + 2.5 * (-(t - 7.5).powi(2) / (2.0 * 1.2f64.powi(2))).exp()
        + 2.0 * (-(t - 17.0).powi(2) / (2.0 * 1.5f64.powi(2))).exp()
}

fn log_gamma(t: f64) -> f64 {
    -1.2 * (-(t - 6.0).powi(2) / 2.0).exp()
}

fn synthetic_traffic(days: u32, hour_zero_as_24: bool) -> String {
    let mut rng = substream(99, 0);
    let mut text = String::from("sensor,direction,date,hour,count\n");
    for day in 0..days {
        let date = summer_date(day);
        for h in 0..24u32 {
            let t = h as f64;
            let p = DefParams::new(log_mean(t), log_gamma(t).exp(), 1.0, 1.0).unwrap();
            let y = def_sample(&FamilyKernel::Poisson, &p, &mut rng, 1).unwrap()[0];
            let hour = if h == 0 && hour_zero_as_24 { 24 } else { h };
            text.push_str(&format!("west,inbound,{date},{hour},{y}\n"));
        }
    }
    text
}

/// Dates from 2019-06-01 onwards; all test data stay within June and July.
fn summer_date(day: u32) -> String {
    if day < 30 {
        format!("2019-06-{:02}", day + 1)
    } else {
        format!("2019-07-{:02}", day - 29)
    }
}

const TRAFFIC_CFG: &str = r#"{"optim": {"max_iter": 20000}}"#;

#[test]
fn traffic_recovers_rush_hours() {
    let tmp = TempDir::new().unwrap();
    let input = write(tmp.path(), "t.csv", &(synthetic_traffic(45, false) + "west,inbound,2019-06-02,31,5\n"));
    let cfg = write(tmp.path(), "m.json", TRAFFIC_CFG);
    let out = tmp.path().join("o");
    ok(&[
        "traffic", "--input", s(&input), "--sensor", "west", "--direction", "inbound", "--samples", "3",
        "--config", s(&cfg), "--summer-2019", "--out", s(&out),
    ]);
    let t = Table::read(&out.join("fitted.csv")).unwrap();
    assert_eq!(t.rows.len(), 241);
    let hours: Vec<f64> = t.rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let mean: Vec<f64> = t.rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let peak = |lo: f64, hi: f64| {
        let (mut best, mut at) = (f64::MIN, 0.0);
        for (h, m) in hours.iter().zip(&mean) {
            if (lo..=hi).contains(h) && *m > best {
                best = *m;
                at = *h;
            }
        }
        at
    };
    let morning = peak(4.0, 12.0);
    let evening = peak(12.0, 21.0);
    assert!((morning - 7.5).abs() <= 1.0, "morning peak at {morning}");
    assert!((evening - 17.0).abs() <= 1.0, "evening peak at {evening}");
    let manifest = fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("rejected 1 malformed"), "{manifest}");
}

#[test]
fn traffic_wraps_hour_24_and_single_sample() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "m.json", r#"{"optim": {"max_iter": 3000}}"#);
    let a = write(tmp.path(), "a.csv", &synthetic_traffic(10, true));
    let b = write(tmp.path(), "b.csv", &synthetic_traffic(10, false));
    let run = |input: &Path, out: &Path| {
        ok(&[
            "traffic", "--input", s(input), "--sensor", "west", "--direction", "inbound", "--samples", "1",
            "--methods", "gaussian", "--config", s(&cfg), "--out", s(out),
        ]);
    };
    let (oa, ob) = (tmp.path().join("oa"), tmp.path().join("ob"));
    run(&a, &oa);
    run(&b, &ob);
    assert_eq!(fs::read(oa.join("fitted.csv")).unwrap(), fs::read(ob.join("fitted.csv")).unwrap());
    let cv = Table::read(&oa.join("cv.csv")).unwrap();
    assert_eq!(cv.rows.len(), 1);
    assert_eq!(cv.rows[0].last().unwrap(), "1");
}

#[test]
fn traffic_unknown_sensor_is_a_data_error() {
    let tmp = TempDir::new().unwrap();
    let input = write(
        tmp.path(),
        "t.csv",
        "sensor,direction,date,hour,count\nnorth,outbound,2019-07-01,3,10\nnorth,outbound,2019-07-01,4,12\n",
    );
    let out = defglm(&[
        "traffic", "--input", s(&input), "--sensor", "east", "--direction", "inbound", "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("north/outbound"));

    let missing = write(tmp.path(), "m.csv", "sensor,date,hour,count\nnorth,2019-07-01,3,10\n");
    let out = defglm(&[
        "traffic", "--input", s(&missing), "--sensor", "north", "--direction", "inbound", "--out", s(&tmp.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
