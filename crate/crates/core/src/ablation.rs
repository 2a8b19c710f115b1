//! Loss-weight ablations: contrastive term on/off and the uniformity weight sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use graphcl_autodiff::Real;
use serde::Serialize;

use crate::config::{Precision, RunConfig};
use crate::data::{make_split, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::train::{load_configured, Trainer};

/// Uniformity weights of the sweep.
pub const BETA_GRID: [f64; 5] = [0.0, 0.01, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationMode {
    AlphaOff,
    BetaSweep,
}

impl FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "alpha-off" => Ok(AblationMode::AlphaOff),
            "beta-sweep" => Ok(AblationMode::BetaSweep),
            other => Err(format!("unknown ablation mode {other:?}; expected alpha-off or beta-sweep")),
        }
    }
}

impl AblationMode {
    pub fn name(self) -> &'static str {
        match self {
            AblationMode::AlphaOff => "alpha-off",
            AblationMode::BetaSweep => "beta-sweep",
        }
    }

    /// `(label, alpha, beta)` for every grid point.
    pub fn settings(self, base: &RunConfig) -> Vec<(String, f64, f64)> {
        match self {
            AblationMode::AlphaOff => vec![
                ("alpha=0".into(), 0.0, base.beta),
                (format!("alpha={}", base.alpha), base.alpha, base.beta),
            ],
            AblationMode::BetaSweep => BETA_GRID
                .iter()
                .map(|&b| (format!("value={b}"), base.alpha, b))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRun {
    pub setting: String,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub best_epoch: usize,
    /// Best-validation metrics, carrying the run's config digest.
    pub report: MetricsReport,
}

/// Per-setting means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub setting: String,
    pub alpha: f64,
    pub beta: f64,
    pub seeds: usize,
    pub mse: f64,
    pub ci: Option<f64>,
    pub r2m: Option<f64>,
    /// Digest of the base config with this setting applied.
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub mode: AblationMode,
    pub dataset: String,
    pub runs: Vec<AblationRun>,
    pub rows: Vec<AblationRow>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

impl AblationTable {
    /// One row per setting: dataset, weights, mean MSE, CI and r2m.
    pub fn summary_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let mut out = String::from("dataset\tsetting\talpha\tbeta\tseeds\tMSE\tCI\tr2m\tconfig_digest\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t{}",
                self.dataset,
                r.setting,
                r.alpha,
                r.beta,
                r.seeds,
                r.mse,
                opt(r.ci),
                opt(r.r2m),
                r.config_digest
            );
        }
        out
    }

    pub fn runs_tsv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let mut out = String::from("setting\talpha\tbeta\tseed\tbest_epoch\tmse\tci\tr2m\tn\tcomparable_pairs\tconfig_digest\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.setting,
                r.alpha,
                r.beta,
                r.seed,
                r.best_epoch,
                r.report.mse,
                opt(r.report.ci),
                opt(r.report.r2m),
                r.report.n,
                r.report.comparable_pairs,
                r.report.config_digest.as_deref().unwrap_or("")
            );
        }
        out
    }

    pub fn row(&self, setting: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }
}

/// Trains every grid point for every seed on one fold and collects the
/// best-validation reports. The split stays fixed; seeds vary initialization,
/// batch order and noise.
pub fn ablate<S: Real>(
    base: &RunConfig,
    dataset: &Dataset,
    split: &SplitPlan,
    fold: usize,
    mode: AblationMode,
    seeds: &[u64],
) -> Result<AblationTable> {
    if seeds.is_empty() {
        return Err(Error::Invalid("ablation needs at least one seed".into()));
    }
    let (train, validation) = (split.train(fold), split.validation(fold).to_vec());
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for (label, alpha, beta) in mode.settings(base) {
        let mut setting = base.clone();
        setting.alpha = alpha;
        setting.beta = beta;
        let first = runs.len();
        for &seed in seeds {
            let mut cfg = setting.clone();
            cfg.seed = seed;
            log::info!("{} {label} seed {seed}", mode.name());
            let mut trainer = Trainer::<S>::new(&cfg)?;
            trainer.fit(dataset, &train, &validation, None)?;
            let best = trainer
                .best
                .ok_or_else(|| Error::Invalid("validation fold is empty".into()))?;
            runs.push(AblationRun {
                setting: label.clone(),
                alpha,
                beta,
                seed,
                best_epoch: best.epoch,
                report: best.report.with_digest(cfg.digest()),
            });
        }
        let mine = &runs[first..];
        rows.push(AblationRow {
            setting: label,
            alpha,
            beta,
            seeds: mine.len(),
            mse: mine.iter().map(|r| r.report.mse).sum::<f64>() / mine.len() as f64,
            ci: mean(mine.iter().map(|r| r.report.ci)),
            r2m: mean(mine.iter().map(|r| r.report.r2m)),
            config_digest: setting.digest(),
        });
    }
    Ok(AblationTable {
        mode,
        dataset: dataset.name.clone(),
        runs,
        rows,
    })
}

/// `ablate` subcommand: runs the grid and writes
/// `ablation_<mode>.tsv`, `ablation_<mode>_runs.tsv` and `ablation_<mode>.jsonl`.
pub fn run_ablation(config: &RunConfig, mode: AblationMode, seeds: &[u64], fold: usize) -> Result<(AblationTable, Vec<PathBuf>)> {
    let out = config.out_dir.clone();
    let (dataset, _) = load_configured(config, Some(&out))?;
    let split = make_split(dataset.samples.len(), config.seed)?;
    if fold >= split.folds.len() {
        return Err(crate::config::ConfigError::Invalid(format!("fold must be below {}", split.folds.len())).into());
    }
    let table = match config.precision {
        Precision::F32 => ablate::<f32>(config, &dataset, &split, fold, mode, seeds)?,
        Precision::F64 => ablate::<f64>(config, &dataset, &split, fold, mode, seeds)?,
    };
    let stem = format!("ablation_{}", mode.name().replace('-', "_"));
    let jsonl: String = table.runs.iter().map(|r| serde_json::to_string(r).expect("serializes") + "\n").collect();
    let files = [
        (out.join(format!("{stem}.tsv")), table.summary_tsv()),
        (out.join(format!("{stem}_runs.tsv")), table.runs_tsv()),
        (out.join(format!("{stem}.jsonl")), jsonl),
    ];
    let mut written = Vec::new();
    for (path, text) in files {
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok((table, written))
}
