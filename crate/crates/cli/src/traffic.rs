//! Hourly traffic counts: ingestion, selection and the cyclic double Poisson model.
//!
//! Input schema (comma-separated, header required, column order free):
//!
//! | column      | content                                   |
//! |-------------|-------------------------------------------|
//! | `sensor`    | sensor identifier                         |
//! | `direction` | `inbound` or `outbound`                   |
//! | `date`      | calendar date, `YYYY-MM-DD`               |
//! | `hour`      | hour of day, 0 to 23 (24 is read as 0)    |
//! | `count`     | number of vehicles, nonnegative integer   |

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use defglm::basis::{uniform_grid, BoundaryMode};
use defglm::optim::{FitResult, OptimConfig};
use defglm::tuning::{random_search_cv, CvPlan, CvTable, Method, Rectangle};
use defglm::{FamilyKernel, GlmSpec, SplineBasis};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::Table;

pub const COLUMNS: [&str; 5] = ["sensor", "direction", "date", "hour", "count"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Inbound,
    Outbound,
}

impl Direction {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inbound" => Some(Direction::Inbound),
            "outbound" => Some(Direction::Outbound),
            _ => None,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Inbound => "inbound",
            Direction::Outbound => "outbound",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficRecord {
    pub sensor: String,
    pub direction: Direction,
    pub date: NaiveDate,
    pub hour: u8,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub records: Vec<TrafficRecord>,
    pub malformed: usize,
    pub duplicates: usize,
    pub filtered: usize,
}

/// June to August 2019.
pub fn in_summer_2019(date: NaiveDate) -> bool {
    let start = NaiveDate::from_ymd_opt(2019, 6, 1).unwrap();
    let end = NaiveDate::from_ymd_opt(2019, 8, 31).unwrap();
    (start..=end).contains(&date)
}

fn parse_record(row: &[String], cols: &[usize; 5]) -> Option<TrafficRecord> {
    let sensor = row[cols[0]].trim();
    if sensor.is_empty() {
        return None;
    }
    let direction = Direction::parse(&row[cols[1]])?;
    let date = NaiveDate::parse_from_str(row[cols[2]].trim(), "%Y-%m-%d").ok()?;
    let hour: u8 = row[cols[3]].trim().parse().ok()?;
    let count: u64 = row[cols[4]].trim().parse().ok()?;
    let hour = match hour {
        0..=23 => hour,
        24 => 0,
        _ => return None,
    };
    Some(TrafficRecord { sensor: sensor.to_string(), direction, date, hour, count })
}

/// Reads a traffic CSV. Malformed and duplicate rows are dropped and counted.
pub fn read_traffic(path: &Path, summer_2019: bool) -> CliResult<Ingested> {
    let table = Table::read(path)?;
    let mut cols = [0usize; 5];
    for (slot, name) in cols.iter_mut().zip(COLUMNS) {
        *slot = table.column(name).ok_or_else(|| {
            CliError::Data(format!(
                "{}: missing column `{name}` (expected {})",
                path.display(),
                COLUMNS.join(",")
            ))
        })?;
    }
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for row in &table.rows {
        let Some(rec) = parse_record(row, &cols) else {
            out.malformed += 1;
            continue;
        };
        if summer_2019 && !in_summer_2019(rec.date) {
            out.filtered += 1;
            continue;
        }
        if !seen.insert((rec.sensor.clone(), rec.direction, rec.date, rec.hour)) {
            out.duplicates += 1;
            continue;
        }
        out.records.push(rec);
    }
    if out.malformed > 0 {
        log::warn!("{}: rejected {} malformed rows", path.display(), out.malformed);
    }
    if out.duplicates > 0 {
        log::warn!("{}: rejected {} duplicate rows", path.display(), out.duplicates);
    }
    Ok(out)
}

/// Hours and counts for one sensor and direction, in file order.
pub fn select(records: &[TrafficRecord], sensor: &str, direction: Direction) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let (x, y): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.sensor == sensor && r.direction == direction)
        .map(|r| (r.hour as f64, r.count as f64))
        .unzip();
    if x.is_empty() {
        let keys: BTreeSet<String> = records.iter().map(|r| format!("{}/{}", r.sensor, r.direction)).collect();
        let listing = if keys.is_empty() { "none".to_string() } else { keys.into_iter().collect::<Vec<_>>().join(", ") };
        return Err(CliError::Data(format!(
            "no records for sensor `{sensor}` direction `{direction}`; available: {listing}"
        )));
    }
    Ok((x, y))
}

fn default_knots_mean() -> usize {
    24
}
fn default_knots_disp() -> usize {
    12
}
fn default_folds() -> usize {
    5
}
fn default_grid() -> usize {
    240
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    #[serde(default = "default_knots_mean")]
    pub knots_mean: usize,
    #[serde(default = "default_knots_disp")]
    pub knots_disp: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    /// Number of intervals of the output hour grid on `[0, 24]`.
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub optim: OptimConfig,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            knots_mean: default_knots_mean(),
            knots_disp: default_knots_disp(),
            folds: default_folds(),
            grid: default_grid(),
            optim: OptimConfig::default(),
        }
    }
}

/// Search rectangles for the traffic application.
pub fn traffic_rectangle(method: Method) -> CliResult<Rectangle> {
    match method {
        Method::Bernoulli => Ok(Rectangle::new([0.0, 0.0], [1.0, 1.0])),
        Method::Gaussian => Ok(Rectangle::new([0.0, 0.0], [2.0, 2.0])),
        Method::Pmle => Err(CliError::Config("traffic models use bernoulli or gaussian noise".into())),
    }
}

#[derive(Debug, Clone)]
pub struct TrafficFit {
    pub cv: CvTable,
    pub fit: FitResult<f64>,
    pub hours: Vec<f64>,
    pub mean: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl TrafficConfig {
    pub fn bases(&self) -> CliResult<(SplineBasis, SplineBasis)> {
        Ok((
            SplineBasis::build(0.0, 24.0, self.knots_mean, BoundaryMode::Cyclic)?,
            SplineBasis::build(0.0, 24.0, self.knots_disp, BoundaryMode::Cyclic)?,
        ))
    }

    pub fn model(&self, hours: &[f64]) -> CliResult<GlmSpec> {
        let (bm, bg) = self.bases()?;
        Ok(GlmSpec::with_designs(
            FamilyKernel::Poisson,
            bm.design_matrix(hours)?,
            bg.design_matrix(hours)?,
            1.0,
        )?)
    }
}

/// Cross-validates the noise rates, refits on all data and evaluates the curves on the hour grid.
pub fn fit_traffic(
    hours: &[f64],
    counts: &[f64],
    method: Method,
    samples: usize,
    config: &TrafficConfig,
    seed: u64,
) -> CliResult<TrafficFit> {
    let spec = config.model(hours)?;
    let plan = CvPlan { rectangle: traffic_rectangle(method)?, samples, folds: config.folds, seed };
    let cv = random_search_cv(&spec, counts, method, &plan, &config.optim)?;
    let mut rng = defglm::rng::substream(defglm::rng::derive_seed(seed, 3), 0);
    let fit = method.fit_with(&spec, counts, cv.selected_params(), &config.optim, &mut rng)?;
    let (bm, bg) = config.bases()?;
    let grid = uniform_grid(0.0, 24.0, config.grid);
    let eta = bm.evaluate_effect(fit.beta.as_slice().unwrap(), &grid)?;
    let lg = bg.evaluate_effect(fit.alpha.as_slice().unwrap(), &grid)?;
    Ok(TrafficFit {
        cv,
        mean: eta.iter().map(|v| v.exp()).collect(),
        gamma: lg.iter().map(|v| v.exp()).collect(),
        fit,
        hours: grid,
    })
}
