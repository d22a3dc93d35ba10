//! Per-run reports and the aggregate mean ± std table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunRecord;
use crate::checkpoint::Checkpoint;
use crate::data::{load_image, save_image};
use crate::error::{Error, Result};
use crate::fit::FitLog;
use crate::inr::{hidden_features, make_coord_grid};
use crate::metrics::{feature_pca_map, radial_power_spectrum};

/// A run directory loaded for reporting.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub record: RunRecord,
    pub logs: Vec<FitLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMetrics {
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub best_iteration: Option<usize>,
}

impl RunReport {
    /// Final PSNR/SSIM averaged over the run's FitLogs (one per image).
    pub fn metrics(&self) -> RunMetrics {
        let finals: Vec<_> = self.logs.iter().filter_map(FitLog::last).collect();
        let psnr = mean(finals.iter().map(|r| r.psnr_db)).or(self.record.summary.psnr);
        let ssim = mean(finals.iter().filter_map(|r| r.ssim)).or(self.record.summary.ssim);
        let best_iteration = self
            .record
            .summary
            .best_iteration
            .or_else(|| self.logs.first().and_then(FitLog::best).map(|r| r.iteration));
        RunMetrics {
            psnr,
            ssim,
            best_iteration,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Population standard deviation (a single run has std 0).
fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    let m = mean(values.iter().copied())?;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    Some((m, var.sqrt()))
}

pub fn load_run(dir: &Path) -> Result<RunReport> {
    let record = RunRecord::load(&dir.join("run.json"))?;
    let logs = record
        .fitlogs
        .iter()
        .map(|name| FitLog::read_csv(&dir.join(name)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunReport {
        dir: dir.to_path_buf(),
        record,
        logs,
    })
}

/// Writes `report.json`, plus `spectrum.csv`, `pca.png` and
/// `histograms.csv` when the run has the inputs they need.
pub fn write_run_report(run: &RunReport, out: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&run.metrics())?;
    text.push('\n');
    let path = out.join("report.json");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let image = ["recon.png", "restored.png"]
        .iter()
        .map(|n| run.dir.join(n))
        .find(|p| p.exists());
    if let Some(p) = &image {
        let img = load_image(p)?;
        let path = out.join("spectrum.csv");
        std::fs::write(&path, radial_power_spectrum(&img).to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    let ckpt = run.dir.join("fitted.strn");
    if ckpt.exists() {
        let ck = Checkpoint::load(&ckpt)?;
        let (h, w) = match &image {
            Some(p) => {
                let img = load_image(p)?;
                (img.height(), img.width())
            }
            None => (run.record.config.preprocess.size, run.record.config.preprocess.size),
        };
        let grid = make_coord_grid(h, w)?;
        let depth = ck.params.depth();
        if depth >= 2 {
            let features = hidden_features(&ck.params, &grid, &ck.config.activation, depth - 1)?;
            let pca = feature_pca_map(&features, h, w)?;
            save_image(&out.join("pca.png"), &pca.map)?;
        }
    }
    let hist = run.dir.join("histograms.csv");
    if hist.exists() {
        let dest = out.join("histograms.csv");
        std::fs::copy(&hist, &dest).map_err(|e| Error::io(&dest, e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: String,
    pub runs: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_std: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_std: Option<f64>,
}

/// Groups runs by method; std is the population std over runs.
pub fn aggregate(runs: &[RunReport]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<&str, Vec<RunMetrics>> = BTreeMap::new();
    for r in runs {
        groups.entry(&r.record.method).or_default().push(r.metrics());
    }
    groups
        .into_iter()
        .map(|(method, ms)| {
            let psnr: Vec<f64> = ms.iter().filter_map(|m| m.psnr).collect();
            let ssim: Vec<f64> = ms.iter().filter_map(|m| m.ssim).collect();
            let p = mean_std(&psnr);
            let s = mean_std(&ssim);
            AggregateRow {
                method: method.to_string(),
                runs: ms.len(),
                psnr_mean: p.map(|x| x.0),
                psnr_std: p.map(|x| x.1),
                ssim_mean: s.map(|x| x.0),
                ssim_std: s.map(|x| x.1),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("method,runs,psnr_mean,psnr_std,ssim_mean,ssim_std\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.runs,
            opt(r.psnr_mean),
            opt(r.psnr_std),
            opt(r.ssim_mean),
            opt(r.ssim_std)
        );
    }
    out
}

pub fn aggregate_table(rows: &[AggregateRow]) -> String {
    let pm = |m: Option<f64>, s: Option<f64>, digits: usize| match (m, s) {
        (Some(m), Some(s)) => format!("{m:.digits$} ± {s:.digits$}"),
        _ => "-".into(),
    };
    let mut out = format!("{:<20} {:>5} {:>18} {:>18}\n", "method", "runs", "PSNR (dB)", "SSIM");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<20} {:>5} {:>18} {:>18}",
            r.method,
            r.runs,
            pm(r.psnr_mean, r.psnr_std, 2),
            pm(r.ssim_mean, r.ssim_std, 4)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{build_id, RunConfig, Summary};
    use crate::fit::FitRecord;

    fn run(method: &str, psnr: f64, ssim: f64) -> RunReport {
        RunReport {
            dir: PathBuf::new(),
            record: RunRecord {
                command: "fit".into(),
                method: method.into(),
                build_id: build_id(),
                config: RunConfig::default(),
                fitlogs: vec!["fitlog.csv".into()],
                summary: Summary::default(),
                total_wall_ms: None,
            },
            logs: vec![FitLog {
                records: vec![FitRecord {
                    iteration: 0,
                    loss: 0.1,
                    psnr_db: psnr,
                    ssim: Some(ssim),
                    wall_ms: 0.0,
                }],
                gradient_histograms: vec![],
            }],
        }
    }

    #[test]
    fn single_run_has_zero_std() {
        let rows = aggregate(&[run("siren", 30.0, 0.9)]);
        assert_eq!(rows[0].psnr_std, Some(0.0));
        assert_eq!(rows[0].ssim_std, Some(0.0));
    }

    #[test]
    fn two_runs_hand_computed() {
        let rows = aggregate(&[run("a", 30.0, 0.8), run("a", 34.0, 0.9), run("b", 20.0, 0.5)]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].method, "a");
        assert_eq!(rows[0].psnr_mean, Some(32.0));
        assert_eq!(rows[0].psnr_std, Some(2.0));
        assert!((rows[0].ssim_mean.unwrap() - 0.85).abs() < 1e-15);
        assert!((rows[0].ssim_std.unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(rows[1].runs, 1);
    }
}
