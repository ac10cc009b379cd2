use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mean_std;
use crate::error::{Error, Result};

/// One (variant, fraction, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub variant: String,
    pub fraction: f64,
    pub seed: u64,
    pub lr: Option<f64>,
    pub patience: Option<usize>,
    pub layers: Option<usize>,
    pub threshold: Option<f64>,
    pub best_epoch: Option<usize>,
    pub epochs_run: Option<usize>,
    pub val_macro_f1: f64,
    pub test_macro_f1: f64,
}

impl SeedResult {
    pub fn new(variant: &str, fraction: f64, seed: u64, val: f64, test: f64) -> Self {
        SeedResult {
            variant: variant.to_string(),
            fraction,
            seed,
            lr: None,
            patience: None,
            layers: None,
            threshold: None,
            best_epoch: None,
            epochs_run: None,
            val_macro_f1: val,
            test_macro_f1: test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    pub fraction: f64,
    pub seeds: usize,
    pub mean_test_macro_f1: f64,
    pub std_test_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub fingerprint: String,
    pub config: serde_json::Value,
    pub summaries: Vec<GroupSummary>,
    pub runs: Vec<SeedResult>,
    /// Absent from the metrics-only serialization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_secs: Option<f64>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    experiment: &'a str,
    fingerprint: &'a str,
    variant: &'a str,
    fraction: f64,
    seed: u64,
    lr: Option<f64>,
    patience: Option<usize>,
    layers: Option<usize>,
    threshold: Option<f64>,
    best_epoch: Option<usize>,
    epochs_run: Option<usize>,
    val_macro_f1: f64,
    test_macro_f1: f64,
}

pub(crate) fn summarize(runs: &[SeedResult]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|(v, f)| *v == r.variant && *f == r.fraction) {
            keys.push((r.variant.clone(), r.fraction));
        }
    }
    keys.into_iter()
        .map(|(variant, fraction)| {
            let scores: Vec<f64> = runs
                .iter()
                .filter(|r| r.variant == variant && r.fraction == fraction)
                .map(|r| r.test_macro_f1)
                .collect();
            let (mean, std) = mean_std(&scores);
            GroupSummary {
                variant,
                fraction,
                seeds: scores.len(),
                mean_test_macro_f1: mean,
                std_test_macro_f1: std,
            }
        })
        .collect()
}

impl ExperimentReport {
    pub fn new(experiment: &str, fingerprint: &str, config: serde_json::Value, runs: Vec<SeedResult>) -> Self {
        ExperimentReport {
            experiment: experiment.to_string(),
            fingerprint: fingerprint.to_string(),
            config,
            summaries: summarize(&runs),
            runs,
            wall_time_secs: None,
        }
    }

    pub fn summary(&self, variant: &str, fraction: f64) -> Option<&GroupSummary> {
        self.summaries.iter().find(|s| s.variant == variant && s.fraction == fraction)
    }

    /// True when stored aggregates equal a recomputation from the runs.
    pub fn aggregates_consistent(&self) -> bool {
        summarize(&self.runs) == self.summaries
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Everything except timing, so reruns compare byte for byte.
    pub fn metrics_json(&self) -> Result<String> {
        let mut m = self.clone();
        m.wall_time_secs = None;
        m.to_json()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.runs {
            w.serialize(CsvRow {
                experiment: &self.experiment,
                fingerprint: &self.fingerprint,
                variant: &r.variant,
                fraction: r.fraction,
                seed: r.seed,
                lr: r.lr,
                patience: r.patience,
                layers: r.layers,
                threshold: r.threshold,
                best_epoch: r.best_epoch,
                epochs_run: r.epochs_run,
                val_macro_f1: r.val_macro_f1,
                test_macro_f1: r.test_macro_f1,
            })?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Write `report.json`, `metrics.json` and `metrics.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        put("report.json", self.to_json()?)?;
        put("metrics.json", self.metrics_json()?)?;
        put("metrics.csv", self.to_csv()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summaries_group_in_first_seen_order() {
        let runs = vec![
            SeedResult::new("full", 1.0, 0, 0.9, 0.8),
            SeedResult::new("no_text", 1.0, 0, 0.7, 0.6),
            SeedResult::new("full", 1.0, 1, 0.9, 1.0),
        ];
        let r = ExperimentReport::new("ablate", "abc", serde_json::Value::Null, runs);
        assert_eq!(r.summaries[0].variant, "full");
        assert_eq!(r.summaries[0].mean_test_macro_f1, 0.9);
        assert!((r.summaries[0].std_test_macro_f1 - 0.1).abs() < 1e-12);
        assert!(r.aggregates_consistent());
        let back: ExperimentReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert_eq!(r.to_csv().unwrap().lines().count(), 4);
    }
}
