use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::method::Method;

use super::eval::SeedResult;
use super::HarnessError;

#[derive(Debug, Deserialize)]
struct EvalRow {
    cost: f64,
    sp_cost: f64,
    road_energy: f64,
    charging: f64,
    drive_time: f64,
    wait_time: f64,
    stranding: f64,
}

/// One method's results across training seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub ratio_mean: f64,
    pub ratio_std: f64,
    pub cost_mean: f64,
    pub road_energy: f64,
    pub charging: f64,
    pub drive_time: f64,
    pub wait_time: f64,
    pub stranding: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates per-run evaluation rows, one `Vec<SeedResult>` per training seed.
pub fn summarize(method: Method, runs: &[Vec<SeedResult>]) -> Option<MethodSummary> {
    let runs: Vec<&Vec<SeedResult>> = runs.iter().filter(|r| !r.is_empty()).collect();
    if runs.is_empty() {
        return None;
    }
    let ratios: Vec<f64> = runs
        .iter()
        .map(|r| r.iter().map(|s| s.sp_cost).sum::<f64>() / r.iter().map(|s| s.cost).sum::<f64>())
        .collect();
    let (ratio_mean, ratio_std) = mean_std(&ratios);
    let all: Vec<&SeedResult> = runs.iter().flat_map(|r| r.iter()).collect();
    let n = all.len() as f64;
    let avg = |f: fn(&SeedResult) -> f64| all.iter().map(|s| f(s)).sum::<f64>() / n;
    Some(MethodSummary {
        method,
        runs: runs.len(),
        ratio_mean,
        ratio_std,
        cost_mean: avg(|s| s.cost),
        road_energy: avg(|s| s.road_energy),
        charging: avg(|s| s.charging),
        drive_time: avg(|s| s.drive_time),
        wait_time: avg(|s| s.wait_time),
        stranding: avg(|s| s.stranding),
    })
}

fn read_eval(path: &Path) -> Result<Vec<SeedResult>, HarnessError> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rd.deserialize::<EvalRow>() {
        let r = row?;
        out.push(SeedResult {
            seed: 0,
            cost: r.cost,
            sp_cost: r.sp_cost,
            ratio: r.sp_cost / r.cost,
            road_energy: r.road_energy,
            charging: r.charging,
            drive_time: r.drive_time,
            wait_time: r.wait_time,
            stranding: r.stranding,
            stranded: 0,
        });
    }
    Ok(out)
}

/// Reads every `<root>/<method>/<seed>/eval.csv` and summarizes each method.
pub fn build_report(root: &Path) -> Result<Vec<MethodSummary>, HarnessError> {
    let mut by_method: BTreeMap<Method, Vec<Vec<SeedResult>>> = BTreeMap::new();
    let entries = fs::read_dir(root).map_err(|e| HarnessError::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| HarnessError::io(root, e))?;
        let Ok(method) = entry.file_name().to_string_lossy().parse::<Method>() else {
            continue;
        };
        let mut seeds: Vec<_> = fs::read_dir(entry.path())
            .map_err(|e| HarnessError::io(&entry.path(), e))?
            .filter_map(Result::ok)
            .map(|e| e.path().join("eval.csv"))
            .filter(|p| p.is_file())
            .collect();
        seeds.sort();
        for path in seeds {
            by_method.entry(method).or_default().push(read_eval(&path)?);
        }
    }
    Ok(by_method
        .into_iter()
        .filter_map(|(m, runs)| summarize(m, &runs))
        .collect())
}

/// Fixed-width text table of cost ratios and cost breakdowns.
pub fn render_table(rows: &[MethodSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<18} {:>4} {:>15} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "method", "runs", "cost ratio", "cost", "energy", "charge", "drive", "wait", "strand"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<18} {:>4} {:>7.3} ± {:<5.3} {:>9.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            r.method.name(),
            r.runs,
            r.ratio_mean,
            r.ratio_std,
            r.cost_mean,
            r.road_energy,
            r.charging,
            r.drive_time,
            r.wait_time,
            r.stranding
        );
    }
    s
}

pub fn write_report_csv(path: &Path, rows: &[MethodSummary]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(cost: f64, sp: f64) -> SeedResult {
        SeedResult {
            seed: 0,
            cost,
            sp_cost: sp,
            ratio: sp / cost,
            road_energy: cost,
            charging: 0.0,
            drive_time: 0.0,
            wait_time: 0.0,
            stranding: 0.0,
            stranded: 0,
        }
    }

    #[test]
    fn ratio_is_total_baseline_over_total_method_per_run() {
        let runs = vec![vec![row(10.0, 20.0), row(30.0, 20.0)], vec![row(20.0, 20.0)]];
        let s = summarize(Method::Iql, &runs).unwrap();
        assert_eq!(s.runs, 2);
        assert!((s.ratio_mean - 1.0).abs() < 1e-12);
        assert!((s.cost_mean - 20.0).abs() < 1e-12);
        assert!(summarize(Method::Iql, &[]).is_none());
        assert!(render_table(&[s]).contains("IQL"));
    }
}
