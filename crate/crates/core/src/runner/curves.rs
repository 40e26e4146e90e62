//! Plot-ready per-metric curve files.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{load_report, MetricsReport};
use crate::persist;

/// One metric value of one completed cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub method_tag: String,
    pub pr: f64,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

impl CurvePoint {
    fn order(&self, other: &Self) -> Ordering {
        self.metric
            .cmp(&other.metric)
            .then_with(|| self.method_tag.cmp(&other.method_tag))
            .then_with(|| self.pr.total_cmp(&other.pr))
            .then_with(|| self.seed.cmp(&other.seed))
    }
}

/// All `report.json` files under `run_dir`, in path order.
pub fn completed_reports(run_dir: &Path) -> Result<Vec<(std::path::PathBuf, MetricsReport)>> {
    let mut out = Vec::new();
    let mut stack = vec![run_dir.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "report.json") {
                let report = load_report(&path)?;
                out.push((path, report));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn points_of(report: &MetricsReport, path: &Path) -> Result<Vec<CurvePoint>> {
    let field = |k: &str| {
        report
            .config
            .get(k)
            .ok_or_else(|| Error::invalid(format!("{} lacks config.{k}", path.display())))
    };
    let method = field("method")?.clone();
    let pr: f64 = field("pruning_ratio")?
        .parse()
        .map_err(|_| Error::invalid(format!("{} has a malformed pruning_ratio", path.display())))?;
    report
        .values()
        .into_iter()
        .map(|(metric, value)| {
            if !value.is_finite() {
                return Err(Error::numeric(format!(
                    "{metric} in {} is not finite",
                    path.display()
                )));
            }
            Ok(CurvePoint {
                method_tag: method.clone(),
                pr,
                metric: metric.to_string(),
                value,
                seed: report.seed,
            })
        })
        .collect()
}

/// Collect every completed cell of `run_dir` into `curves/<metric>.csv`
/// (columns `method,pr,value,seed`, rows sorted by method, PR, seed) and
/// return the points sorted by metric, method, PR and seed.
pub fn emit_curves(run_dir: &Path) -> Result<Vec<CurvePoint>> {
    if !run_dir.is_dir() {
        return Err(Error::invalid(format!(
            "run directory {} does not exist",
            run_dir.display()
        )));
    }
    let mut points = Vec::new();
    for (path, report) in completed_reports(run_dir)? {
        points.extend(points_of(&report, &path)?);
    }
    if points.is_empty() {
        return Err(Error::invalid(format!(
            "no completed cells under {}",
            run_dir.display()
        )));
    }
    points.sort_by(CurvePoint::order);
    let curves_dir = run_dir.join("curves");
    for metric in points
        .iter()
        .map(|p| p.metric.clone())
        .collect::<std::collections::BTreeSet<_>>()
    {
        let mut text = String::from("method,pr,value,seed\n");
        for p in points.iter().filter(|p| p.metric == metric) {
            text.push_str(&format!(
                "{},{},{},{}\n",
                p.method_tag, p.pr, p.value, p.seed
            ));
        }
        persist::write_atomic(&curves_dir.join(format!("{metric}.csv")), text.as_bytes())?;
    }
    Ok(points)
}

/// Parse the curve files written by [`emit_curves`].
pub fn load_curves(run_dir: &Path) -> Result<Vec<CurvePoint>> {
    let dir = run_dir.join("curves");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut points = Vec::new();
    for path in files {
        let metric = path
            .file_stem()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        for (i, row) in reader.records().enumerate() {
            let line = i as u64 + 2;
            let row = row.map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            let parse_err = |what: &str| Error::Parse {
                line,
                message: format!("{}: malformed {what}", path.display()),
            };
            if row.len() != 4 {
                return Err(parse_err("row"));
            }
            points.push(CurvePoint {
                method_tag: row[0].to_string(),
                pr: row[1].parse().map_err(|_| parse_err("pr"))?,
                metric: metric.clone(),
                value: row[2].parse().map_err(|_| parse_err("value"))?,
                seed: row[3].parse().map_err(|_| parse_err("seed"))?,
            });
        }
    }
    points.sort_by(CurvePoint::order);
    Ok(points)
}

/// Mean value per `(method, pr)` for one metric, in curve order.
pub fn mean_curve(points: &[CurvePoint], metric: &str) -> Vec<(String, f64, f64)> {
    let mut out: Vec<(String, f64, f64, usize)> = Vec::new();
    for p in points.iter().filter(|p| p.metric == metric) {
        match out.last_mut() {
            Some(last) if last.0 == p.method_tag && last.1 == p.pr => {
                last.2 += p.value;
                last.3 += 1;
            }
            _ => out.push((p.method_tag.clone(), p.pr, p.value, 1)),
        }
    }
    out.into_iter()
        .map(|(m, pr, sum, n)| (m, pr, sum / n as f64))
        .collect()
}
