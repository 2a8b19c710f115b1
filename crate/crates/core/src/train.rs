//! Training loop, evaluation and train-state checkpoints.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use graphcl_autodiff::{Checkpoint, Real, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, Precision, RunConfig};
use crate::data::{batch_iter, load_dataset, make_split, Dataset, RejectReport, SplitPlan};
use crate::drug::encode_drug;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{Model, ModelVars};
use crate::objective::{
    contrastive_loss, joint_loss, mse_loss, predict_affinity, sample_noise_pair, uniformity_loss, LossTerms,
    LossWeights,
};
use crate::optim::Adam;
use crate::protein::protein_encode;
use crate::rng;

pub const LOG_FILE: &str = "epochs.tsv";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.ckpt";
const STATE_KIND: &str = "graphcl-dta/train-state";

/// Tape handles of one batch's objective.
#[derive(Debug, Clone, Copy)]
pub struct BatchGraph {
    pub joint: Var,
    pub terms: LossTerms,
    pub predictions: Var,
}

/// Supplies the two noise vectors for one drug embedding row.
pub type NoiseFn<'a> = dyn FnMut(&[f64]) -> (Vec<f64>, Vec<f64>) + 'a;

/// Records the joint objective of one batch on `tape`.
///
/// Each distinct drug and target in the batch is encoded once. The
/// contrastive and uniformity terms run over those distinct entities, in
/// order of first appearance.
pub fn build_batch_loss<S: Real>(
    tape: &mut Tape<S>,
    vars: &ModelVars,
    dataset: &Dataset,
    batch: &[usize],
    weights: &LossWeights,
    cosine: bool,
    noise: &mut NoiseFn<'_>,
) -> Result<BatchGraph> {
    if batch.is_empty() {
        return Err(Error::Invalid("empty batch".into()));
    }
    let (drugs, drug_pos) = distinct(batch.iter().map(|&i| dataset.samples[i].drug));
    let (targets, target_pos) = distinct(batch.iter().map(|&i| dataset.samples[i].target));

    let mut rows = Vec::with_capacity(drugs.len());
    for &d in &drugs {
        let drug = &dataset.drugs[d];
        rows.push(encode_drug(tape, &drug.graph, &drug.adjacency, &vars.gcn)?);
    }
    let d_all = tape.concat(&rows, 0)?;
    let mut rows = Vec::with_capacity(targets.len());
    for &t in &targets {
        rows.push(protein_encode(tape, &dataset.targets[t].tokens.tokens, &vars.protein)?);
    }
    let t_all = tape.concat(&rows, 0)?;

    let d_batch = tape.gather_rows(d_all, &drug_pos)?;
    let t_batch = tape.gather_rows(t_all, &target_pos)?;
    let predictions = predict_affinity(tape, d_batch, t_batch, &vars.head)?;
    let labels: Vec<S> = batch.iter().map(|&i| S::of(dataset.samples[i].affinity)).collect();
    let mse = mse_loss(tape, predictions, &labels)?;

    let d_value = tape.value(d_all).clone();
    let (m, h) = (drugs.len(), d_value.shape()[1]);
    let (mut n1, mut n2) = (Vec::with_capacity(m * h), Vec::with_capacity(m * h));
    for r in 0..m {
        let row: Vec<f64> = d_value.row(r).iter().map(|v| v.as_f64()).collect();
        let (a, b) = noise(&row);
        n1.extend(a.into_iter().map(S::of));
        n2.extend(b.into_iter().map(S::of));
    }
    let n1 = tape.constant(Tensor::new(vec![m, h], n1)?);
    let n2 = tape.constant(Tensor::new(vec![m, h], n2)?);
    let view1 = tape.add(d_all, n1)?;
    let view2 = tape.add(d_all, n2)?;
    let gcl = contrastive_loss(tape, view1, view2, weights.tau, cosine)?;

    let uniform_drug = uniformity_loss(tape, d_all)?;
    if uniform_drug.is_none() {
        log::warn!("batch has a single distinct drug; drug uniformity term is 0");
    }
    let uniform_target = uniformity_loss(tape, t_all)?;
    if uniform_target.is_none() {
        log::warn!("batch has a single distinct target; target uniformity term is 0");
    }
    let terms = LossTerms {
        mse,
        gcl,
        uniform_drug,
        uniform_target,
    };
    let joint = joint_loss(tape, &terms, weights)?;
    Ok(BatchGraph {
        joint,
        terms,
        predictions,
    })
}

/// Distinct values in order of first appearance, plus each item's position among them.
fn distinct(items: impl Iterator<Item = usize>) -> (Vec<usize>, Vec<usize>) {
    let mut order = Vec::new();
    let mut seen = std::collections::HashMap::new();
    let pos = items
        .map(|x| {
            *seen.entry(x).or_insert_with(|| {
                order.push(x);
                order.len() - 1
            })
        })
        .collect();
    (order, pos)
}

/// One row of the per-epoch log. Loss terms are sample-weighted means over
/// the epoch's batches; an absent uniformity term counts as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_mse: f64,
    pub l_gcl: f64,
    pub l_uniform_d: f64,
    pub l_uniform_t: f64,
    pub l_joint: f64,
    pub val_mse: Option<f64>,
    pub val_ci: Option<f64>,
    pub val_r2m: Option<f64>,
}

pub const LOG_HEADER: &str = "epoch\tL_mse\tL_gcl\tL_uniform_d\tL_uniform_t\tL_joint\tval_mse\tval_ci\tval_r2m";

impl EpochRecord {
    pub fn tsv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.epoch,
            self.l_mse,
            self.l_gcl,
            self.l_uniform_d,
            self.l_uniform_t,
            self.l_joint,
            opt(self.val_mse),
            opt(self.val_ci),
            opt(self.val_r2m)
        )
    }
}

pub fn log_tsv(records: &[EpochRecord]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.tsv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSnapshot<S> {
    pub epoch: usize,
    pub report: MetricsReport,
    pub model: Model<S>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateMeta {
    kind: String,
    next_epoch: usize,
    adam_step: u64,
    trajectory_digest: String,
    precision: Precision,
    best: Option<(usize, MetricsReport)>,
    log: Vec<EpochRecord>,
}

/// Everything needed to continue a run: parameters, optimizer moments, the
/// epoch counter, the best-validation snapshot and the log so far. Random
/// streams are derived from `(seed, epoch, batch)` and need no state.
#[derive(Debug, Clone)]
pub struct Trainer<S: Real> {
    pub config: RunConfig,
    pub model: Model<S>,
    pub adam: Adam<S>,
    /// 0-based index of the next epoch to run.
    pub next_epoch: usize,
    pub best: Option<BestSnapshot<S>>,
    pub log: Vec<EpochRecord>,
}

impl<S: Real> Trainer<S> {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let model = Model::from_config(config)?;
        let adam = Adam::new(config.learning_rate, &model.named_parameters().iter().map(|(_, t)| *t).collect::<Vec<_>>());
        Ok(Self {
            config: config.clone(),
            model,
            adam,
            next_epoch: 0,
            best: None,
            log: Vec::new(),
        })
    }

    pub fn is_done(&self) -> bool {
        self.next_epoch >= self.config.epochs
    }

    /// Runs one epoch over `train`, then scores `validation` if non-empty.
    pub fn train_epoch(&mut self, dataset: &Dataset, train: &[usize], validation: &[usize]) -> Result<EpochRecord> {
        let cfg = &self.config;
        let e = self.next_epoch;
        let weights = cfg.loss_weights();
        let batches = batch_iter(train, cfg.batch_size, cfg.seed, e);
        let mut sums = [0.0f64; 5];
        let mut seen = 0usize;
        for (b, batch) in batches.iter().enumerate() {
            let context = |err: Error| match err {
                Error::NonFinite { term, .. } => Error::NonFinite {
                    term,
                    context: format!(" at epoch {}, batch {b}", e + 1),
                },
                other => other,
            };
            let mut tape = Tape::new();
            let vars = self.model.bind(&mut tape, true)?;
            let mut noise_rng = rng::noise(cfg.seed, e, b);
            let epsilon = weights.epsilon;
            let mut noise = |d: &[f64]| sample_noise_pair(d, epsilon, &mut noise_rng);
            let graph = build_batch_loss(
                &mut tape,
                &vars,
                dataset,
                batch,
                &weights,
                cfg.cosine_similarity,
                &mut noise,
            )
            .map_err(context)?;
            let joint = tape.scalar(graph.joint).as_f64();
            if !joint.is_finite() {
                return Err(context(Error::NonFinite {
                    term: "L_joint",
                    context: String::new(),
                }));
            }
            tape.backward(graph.joint)?;
            let grads: Vec<Option<Tensor<S>>> = vars.all.iter().map(|&v| tape.grad(v)).collect();
            if grads.iter().flatten().any(|g| !g.all_finite()) {
                return Err(context(Error::NonFinite {
                    term: "gradient",
                    context: String::new(),
                }));
            }
            self.adam.update(self.model.parameters_mut(), &grads)?;

            let value = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v).as_f64());
            let t = graph.terms;
            let c = batch.len() as f64;
            for (acc, x) in sums.iter_mut().zip([
                value(Some(t.mse)),
                value(Some(t.gcl)),
                value(t.uniform_drug),
                value(t.uniform_target),
                joint,
            ]) {
                *acc += c * x;
            }
            seen += batch.len();
        }
        self.next_epoch += 1;
        let n = seen.max(1) as f64;
        let report = if validation.is_empty() {
            None
        } else {
            Some(evaluate(&self.model, dataset, validation)?)
        };
        if let Some(r) = &report {
            let better = self.best.as_ref().map_or(true, |b| r.mse < b.report.mse);
            if better {
                self.best = Some(BestSnapshot {
                    epoch: self.next_epoch,
                    report: r.clone(),
                    model: self.model.clone(),
                });
            }
        }
        let record = EpochRecord {
            epoch: self.next_epoch,
            l_mse: sums[0] / n,
            l_gcl: sums[1] / n,
            l_uniform_d: sums[2] / n,
            l_uniform_t: sums[3] / n,
            l_joint: sums[4] / n,
            val_mse: report.as_ref().map(|r| r.mse),
            val_ci: report.as_ref().and_then(|r| r.ci),
            val_r2m: report.as_ref().and_then(|r| r.r2m),
        };
        self.log.push(record.clone());
        Ok(record)
    }

    /// Trains until the configured epoch budget is spent.
    ///
    /// With `out` set, the log is rewritten after every epoch and the full
    /// state is checkpointed every `checkpoint_every` epochs and at the end.
    /// A non-finite loss stops the run after saving the pre-step state as
    /// `last_good.ckpt`.
    pub fn fit(&mut self, dataset: &Dataset, train: &[usize], validation: &[usize], out: Option<&Path>) -> Result<()> {
        if let Some(dir) = out {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        while !self.is_done() {
            match self.train_epoch(dataset, train, validation) {
                Ok(record) => {
                    log::info!(
                        "epoch {} joint {:.5} mse {:.5} val_mse {}",
                        record.epoch,
                        record.l_joint,
                        record.l_mse,
                        record.val_mse.map_or("NA".into(), |v| format!("{v:.5}"))
                    );
                }
                Err(e @ Error::NonFinite { .. }) => {
                    if let Some(dir) = out {
                        self.save(&dir.join(LAST_GOOD_CHECKPOINT))?;
                    }
                    return Err(e);
                }
                Err(e) => return Err(e),
            }
            if let Some(dir) = out {
                write_file(&dir.join(LOG_FILE), &log_tsv(&self.log))?;
                if self.next_epoch % self.config.checkpoint_every == 0 || self.is_done() {
                    self.save(&dir.join(LAST_CHECKPOINT))?;
                }
            }
        }
        if let (Some(dir), Some(best)) = (out, &self.best) {
            let mut ckpt = Checkpoint::new(
                serde_json::json!({ "kind": "graphcl-dta/model", "epoch": best.epoch, "validation": best.report })
                    .to_string(),
            );
            best.model.write_into(&mut ckpt, "model.");
            write_checkpoint(&dir.join(BEST_CHECKPOINT), &ckpt)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = StateMeta {
            kind: STATE_KIND.into(),
            next_epoch: self.next_epoch,
            adam_step: self.adam.step,
            trajectory_digest: self.config.trajectory_digest(),
            precision: self.config.precision,
            best: self.best.as_ref().map(|b| (b.epoch, b.report.clone())),
            log: self.log.clone(),
        };
        let mut ckpt = Checkpoint::new(serde_json::to_string(&meta).expect("metadata serializes"));
        self.model.write_into(&mut ckpt, "model.");
        for ((name, _), (m, v)) in self
            .model
            .named_parameters()
            .iter()
            .zip(self.adam.m.iter().zip(&self.adam.v))
        {
            ckpt.push(format!("adam.m.{name}"), m);
            ckpt.push(format!("adam.v.{name}"), v);
        }
        if let Some(best) = &self.best {
            best.model.write_into(&mut ckpt, "best.");
        }
        ckpt
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(path, &self.checkpoint())
    }

    /// Restores a state written by [`Trainer::save`]. The config may differ
    /// only in epoch budget, output directory and checkpoint interval.
    pub fn restore(config: &RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        let meta: StateMeta = serde_json::from_str(&ckpt.metadata)
            .map_err(|e| Error::Invalid(format!("checkpoint metadata: {e}")))?;
        if meta.kind != STATE_KIND {
            return Err(Error::Invalid(format!("checkpoint holds {:?}, not a train state", meta.kind)));
        }
        if meta.trajectory_digest != config.trajectory_digest() {
            return Err(ConfigError::Invalid(format!(
                "checkpoint was written under config digest {} but this config has {}",
                meta.trajectory_digest,
                config.trajectory_digest()
            ))
            .into());
        }
        let mut t = Self::new(config)?;
        t.model.read_from(ckpt, "model.")?;
        let shapes: Vec<(String, Vec<usize>)> = t
            .model
            .named_parameters()
            .into_iter()
            .map(|(n, p)| (n, p.shape().to_vec()))
            .collect();
        for (i, (name, shape)) in shapes.iter().enumerate() {
            let read = |key: String| {
                ckpt.tensor::<S>(&key, shape).map_err(|source| Error::Checkpoint {
                    path: key.into(),
                    source,
                })
            };
            t.adam.m[i] = read(format!("adam.m.{name}"))?;
            t.adam.v[i] = read(format!("adam.v.{name}"))?;
        }
        t.adam.step = meta.adam_step;
        t.next_epoch = meta.next_epoch;
        t.log = meta.log;
        if let Some((epoch, report)) = meta.best {
            let mut model = t.model.clone();
            model.read_from(ckpt, "best.")?;
            t.best = Some(BestSnapshot { epoch, report, model });
        }
        Ok(t)
    }

    pub fn resume(config: &RunConfig, path: &Path) -> Result<Self> {
        Self::restore(config, &read_checkpoint(path)?)
    }
}

/// Noise-free metrics of `model` on the given samples.
pub fn evaluate<S: Real>(model: &Model<S>, dataset: &Dataset, indices: &[usize]) -> Result<MetricsReport> {
    if indices.is_empty() {
        return Err(Error::Invalid("evaluation set is empty".into()));
    }
    let predictions = model.predict(dataset, indices)?;
    Ok(MetricsReport::compute(&predictions, &dataset.affinities(indices))?)
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    // write then rename, so an interrupted save never clobbers the previous file
    let tmp = path.with_extension("ckpt.tmp");
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = std::io::BufWriter::new(file);
    ckpt.write_to(&mut w).map_err(|source| Error::Checkpoint {
        path: tmp.clone(),
        source,
    })?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::read_from(std::io::BufReader::new(file)).map_err(|source| Error::Checkpoint {
        path: path.to_path_buf(),
        source,
    })
}

/// Model parameters from either a train-state or a best-model checkpoint.
pub fn load_model<S: Real>(config: &RunConfig, path: &Path) -> Result<Model<S>> {
    let ckpt = read_checkpoint(path)?;
    let mut model = Model::from_config(config)?;
    model.read_from(&ckpt, "model.")?;
    Ok(model)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads the configured dataset and writes its reject report into `out`.
pub fn load_configured(config: &RunConfig, out: Option<&Path>) -> Result<(Dataset, RejectReport)> {
    let (d, t, a) = config.data_paths()?;
    let (dataset, report) = load_dataset(d, t, a, &config.load_options())?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        report.write_tsv(dir)?;
    }
    if dataset.samples.is_empty() {
        return Err(Error::Data(crate::data::DataError::Split("dataset has no usable samples".into())));
    }
    Ok((dataset, report))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub epochs_run: usize,
    pub last: Option<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_validation: Option<MetricsReport>,
    pub rejects: usize,
}

/// `train` subcommand: load, split, fit one fold, write every artifact.
pub fn run_training(config: &RunConfig, fold: usize, resume: Option<&Path>) -> Result<TrainSummary> {
    match config.precision {
        Precision::F32 => run_training_as::<f32>(config, fold, resume),
        Precision::F64 => run_training_as::<f64>(config, fold, resume),
    }
}

fn run_training_as<S: Real>(config: &RunConfig, fold: usize, resume: Option<&Path>) -> Result<TrainSummary> {
    if fold >= crate::data::FOLDS {
        return Err(ConfigError::Invalid(format!("fold must be below {}, got {fold}", crate::data::FOLDS)).into());
    }
    let out = config.out_dir.clone();
    let (dataset, report) = load_configured(config, Some(&out))?;
    let split = make_split(dataset.samples.len(), config.seed)?;
    write_file(&out.join("split.json"), &serde_json::to_string(&split).expect("split serializes"))?;
    write_file(&out.join("config.toml"), &config.to_toml())?;
    let mut trainer = match resume {
        Some(path) => Trainer::<S>::resume(config, path)?,
        None => Trainer::<S>::new(config)?,
    };
    let started = trainer.next_epoch;
    trainer.fit(&dataset, &split.train(fold), split.validation(fold), Some(&out))?;
    let best_validation = trainer
        .best
        .as_ref()
        .map(|b| b.report.clone().with_digest(config.digest()));
    if let Some(r) = &best_validation {
        write_file(&out.join("validation.json"), &r.to_json())?;
    }
    Ok(TrainSummary {
        out_dir: out,
        epochs_run: trainer.next_epoch - started,
        last: trainer.log.last().cloned(),
        best_epoch: trainer.best.as_ref().map(|b| b.epoch),
        best_validation,
        rejects: report.len(),
    })
}

/// Which samples `eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSet {
    Test,
    Validation(usize),
    Train(usize),
}

/// `eval` subcommand: metrics of a checkpoint on one part of the split.
pub fn run_evaluation(config: &RunConfig, checkpoint: &Path, set: EvalSet) -> Result<MetricsReport> {
    let (dataset, _) = load_configured(config, None)?;
    let split = make_split(dataset.samples.len(), config.seed)?;
    let indices = eval_indices(&split, set)?;
    let report = match config.precision {
        Precision::F32 => evaluate(&load_model::<f32>(config, checkpoint)?, &dataset, &indices)?,
        Precision::F64 => evaluate(&load_model::<f64>(config, checkpoint)?, &dataset, &indices)?,
    };
    Ok(report.with_digest(config.digest()))
}

fn eval_indices(split: &SplitPlan, set: EvalSet) -> Result<Vec<usize>> {
    match set {
        EvalSet::Test => Ok(split.test.clone()),
        EvalSet::Validation(k) | EvalSet::Train(k) if k >= split.folds.len() => {
            Err(ConfigError::Invalid(format!("fold must be below {}, got {k}", split.folds.len())).into())
        }
        EvalSet::Validation(k) => Ok(split.validation(k).to_vec()),
        EvalSet::Train(k) => Ok(split.train(k)),
    }
}
