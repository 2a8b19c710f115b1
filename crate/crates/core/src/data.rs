//! Three-file TSV datasets, the held-out split and per-epoch batching.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use graphcl_smiles::{parse_smiles, MolecularGraph};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drug::{normalize_graph, NormalizedAdjacency};
use crate::protein::{tokenize_protein, TokenizedProtein};
use crate::rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: PathBuf, line: u64, message: String },
    #[error("{path}:1: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: &'static str },
    #[error("{path}:{line}: duplicate {kind} id {id:?}")]
    DuplicateId {
        path: PathBuf,
        line: u64,
        kind: &'static str,
        id: String,
    },
    #[error("{path}:{line}: unknown {kind} id {id:?}")]
    DanglingId {
        path: PathBuf,
        line: u64,
        kind: &'static str,
        id: String,
    },
    #[error("{path}:{line}: duplicate pair ({drug:?}, {target:?})")]
    DuplicatePair {
        path: PathBuf,
        line: u64,
        drug: String,
        target: String,
    },
    #[error("{path}:{line}: affinity {value:?} is not a finite number")]
    BadAffinity { path: PathBuf, line: u64, value: String },
    #[error("{path}:{line}: {message}")]
    BadSequence { path: PathBuf, line: u64, message: String },
    #[error("{0}")]
    Split(String),
}

/// Interpretation of the affinity column.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AffinityTransform {
    /// Values are used as written (pKd, KIBA score).
    #[default]
    None,
    /// Raw Kd in nM, mapped to `−log10(Kd / 1e9)`.
    Pkd,
}

impl std::str::FromStr for AffinityTransform {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" => Ok(AffinityTransform::None),
            "pkd" => Ok(AffinityTransform::Pkd),
            other => Err(format!("unknown affinity transform {other:?}; expected none or pkd")),
        }
    }
}

impl AffinityTransform {
    pub fn apply(self, value: f64) -> Option<f64> {
        match self {
            AffinityTransform::None => Some(value),
            AffinityTransform::Pkd if value > 0.0 => Some(-(value / 1e9).log10()),
            AffinityTransform::Pkd => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drug {
    pub id: String,
    pub smiles: String,
    pub graph: MolecularGraph,
    pub adjacency: NormalizedAdjacency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub id: String,
    pub sequence: String,
    pub tokens: TokenizedProtein,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinitySample {
    /// Index into [`Dataset::drugs`].
    pub drug: usize,
    /// Index into [`Dataset::targets`].
    pub target: usize,
    pub affinity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub drugs: Vec<Drug>,
    pub targets: Vec<Target>,
    pub samples: Vec<AffinitySample>,
}

impl Dataset {
    pub fn affinities(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.samples[i].affinity).collect()
    }

    /// Restricts to the given samples, keeping only referenced drugs and targets.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut drug_map = HashMap::new();
        let mut target_map = HashMap::new();
        let mut out = Dataset {
            name: self.name.clone(),
            drugs: Vec::new(),
            targets: Vec::new(),
            samples: Vec::new(),
        };
        for &i in indices {
            let s = self.samples[i];
            let drug = *drug_map.entry(s.drug).or_insert_with(|| {
                out.drugs.push(self.drugs[s.drug].clone());
                out.drugs.len() - 1
            });
            let target = *target_map.entry(s.target).or_insert_with(|| {
                out.targets.push(self.targets[s.target].clone());
                out.targets.len() - 1
            });
            out.samples.push(AffinitySample {
                drug,
                target,
                affinity: s.affinity,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub file: PathBuf,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectReport {
    pub rejects: Vec<Reject>,
    /// Affinity rows skipped because their drug was rejected.
    pub orphaned_samples: usize,
}

impl RejectReport {
    pub fn len(&self) -> usize {
        self.rejects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejects.is_empty()
    }

    /// Writes `<input file name>.rejects.tsv` with columns `line`, `reason`
    /// into `dir` for every input that had rejects.
    pub fn write_tsv(&self, dir: &Path) -> Result<Vec<PathBuf>, DataError> {
        let mut by_file: Vec<(&Path, Vec<&Reject>)> = Vec::new();
        for r in &self.rejects {
            match by_file.iter_mut().find(|(f, _)| *f == r.file.as_path()) {
                Some((_, list)) => list.push(r),
                None => by_file.push((&r.file, vec![r])),
            }
        }
        let mut written = Vec::new();
        for (file, list) in by_file {
            let name = file.file_name().map_or_else(|| "input".into(), |n| n.to_string_lossy().into_owned());
            let path = dir.join(format!("{name}.rejects.tsv"));
            let io = |source| DataError::Io {
                path: path.clone(),
                source,
            };
            let mut out = File::create(&path).map_err(io)?;
            writeln!(out, "line\treason").map_err(io)?;
            for r in list {
                writeln!(out, "{}\t{}", r.line, r.reason.replace(['\t', '\n'], " ")).map_err(io)?;
            }
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub max_protein_len: usize,
    pub transform: AffinityTransform,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_protein_len: 1000,
            transform: AffinityTransform::None,
        }
    }
}

struct Table {
    path: PathBuf,
    /// (1-based line, fields in the requested column order)
    rows: Vec<(u64, Vec<String>)>,
}

fn read_table(path: &Path, columns: &[&'static str]) -> Result<Table, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut index = Vec::new();
    for &c in columns {
        match headers.iter().position(|h| h.trim() == c) {
            Some(i) => index.push(i),
            None => {
                return Err(DataError::MissingColumn {
                    path: path.to_path_buf(),
                    column: c,
                })
            }
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = index.iter().map(|&i| record.get(i).unwrap_or("").trim().to_string()).collect();
        rows.push((line, fields));
    }
    Ok(Table {
        path: path.to_path_buf(),
        rows,
    })
}

fn csv_error(path: &Path, e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: path.to_path_buf(),
            source,
        },
        kind => DataError::Malformed {
            path: path.to_path_buf(),
            line,
            message: match kind {
                csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                    format!("expected {expected_len} fields, found {len}")
                }
                other => format!("{other:?}"),
            },
        },
    }
}

/// Reads the drug, target and affinity tables.
///
/// Drugs whose SMILES does not parse are dropped and reported, along with
/// the count of affinity rows that referenced them. Every other problem is
/// a hard error carrying the file and line.
pub fn load_dataset(
    drugs_path: &Path,
    targets_path: &Path,
    affinities_path: &Path,
    opts: &LoadOptions,
) -> Result<(Dataset, RejectReport), DataError> {
    let mut report = RejectReport::default();

    let table = read_table(drugs_path, &["drug_id", "smiles"])?;
    let mut drugs = Vec::new();
    let mut drug_index = HashMap::new();
    let mut rejected_drugs = HashSet::new();
    for (line, f) in table.rows {
        let (id, smiles) = (&f[0], &f[1]);
        if drug_index.contains_key(id) || rejected_drugs.contains(id) {
            return Err(DataError::DuplicateId {
                path: table.path,
                line,
                kind: "drug",
                id: id.clone(),
            });
        }
        let parsed = parse_smiles(smiles)
            .map_err(|e| e.to_string())
            .and_then(|g| normalize_graph(&g).map(|a| (g, a)).map_err(|e| e.to_string()));
        match parsed {
            Ok((graph, adjacency)) => {
                drug_index.insert(id.clone(), drugs.len());
                drugs.push(Drug {
                    id: id.clone(),
                    smiles: smiles.clone(),
                    graph,
                    adjacency,
                });
            }
            Err(reason) => {
                log::warn!("{}:{line}: dropping drug {id}: {reason}", table.path.display());
                rejected_drugs.insert(id.clone());
                report.rejects.push(Reject {
                    file: table.path.clone(),
                    line,
                    reason: format!("{id}: {reason}"),
                });
            }
        }
    }

    let table = read_table(targets_path, &["target_id", "sequence"])?;
    let mut targets = Vec::new();
    let mut target_index = HashMap::new();
    for (line, f) in table.rows {
        let (id, sequence) = (&f[0], &f[1]);
        if target_index.contains_key(id) {
            return Err(DataError::DuplicateId {
                path: table.path,
                line,
                kind: "target",
                id: id.clone(),
            });
        }
        let tokens = tokenize_protein(sequence, opts.max_protein_len).map_err(|e| DataError::BadSequence {
            path: table.path.clone(),
            line,
            message: format!("{id}: {e}"),
        })?;
        target_index.insert(id.clone(), targets.len());
        targets.push(Target {
            id: id.clone(),
            sequence: sequence.clone(),
            tokens,
        });
    }

    let table = read_table(affinities_path, &["drug_id", "target_id", "affinity"])?;
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (line, f) in table.rows {
        let (drug_id, target_id, raw) = (&f[0], &f[1], &f[2]);
        let bad_affinity = || DataError::BadAffinity {
            path: table.path.clone(),
            line,
            value: raw.clone(),
        };
        let value: f64 = raw.parse().map_err(|_| bad_affinity())?;
        let affinity = opts
            .transform
            .apply(value)
            .filter(|v| v.is_finite())
            .ok_or_else(bad_affinity)?;
        let target = *target_index.get(target_id).ok_or_else(|| DataError::DanglingId {
            path: table.path.clone(),
            line,
            kind: "target",
            id: target_id.clone(),
        })?;
        if !seen.insert((drug_id.clone(), target_id.clone())) {
            return Err(DataError::DuplicatePair {
                path: table.path,
                line,
                drug: drug_id.clone(),
                target: target_id.clone(),
            });
        }
        let drug = match drug_index.get(drug_id) {
            Some(&d) => d,
            None if rejected_drugs.contains(drug_id) => {
                report.orphaned_samples += 1;
                continue;
            }
            None => {
                return Err(DataError::DanglingId {
                    path: table.path,
                    line,
                    kind: "drug",
                    id: drug_id.clone(),
                })
            }
        };
        samples.push(AffinitySample { drug, target, affinity });
    }
    if report.orphaned_samples > 0 {
        log::warn!(
            "{}: skipped {} affinity rows of rejected drugs",
            affinities_path.display(),
            report.orphaned_samples
        );
    }

    let name = affinities_path
        .file_stem()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    Ok((
        Dataset {
            name,
            drugs,
            targets,
            samples,
        },
        report,
    ))
}

pub const FOLDS: usize = 5;

/// Held-out sixth plus five cross-validation folds over the rest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub test: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

/// Seeded shuffle of `0..n`; the first `⌈n/6⌉` indices are the test set and
/// the remainder is dealt into five contiguous folds.
pub fn make_split(n: usize, seed: u64) -> Result<SplitPlan, DataError> {
    if n < 6 {
        return Err(DataError::Split(format!("need at least 6 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::split(seed));
    let test_len = n.div_ceil(6);
    let test = order[..test_len].to_vec();
    let pool = &order[test_len..];
    let (base, extra) = (pool.len() / FOLDS, pool.len() % FOLDS);
    let mut folds = Vec::with_capacity(FOLDS);
    let mut start = 0;
    for k in 0..FOLDS {
        let len = base + usize::from(k < extra);
        folds.push(pool[start..start + len].to_vec());
        start += len;
    }
    Ok(SplitPlan { seed, test, folds })
}

impl SplitPlan {
    /// Every non-test index, fold by fold.
    pub fn pool(&self) -> Vec<usize> {
        self.folds.concat()
    }

    pub fn validation(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect()
    }
}

/// Reshuffles `indices` with a generator keyed on `seed ⊕ epoch` and cuts
/// batches of `batch_size`, keeping the short final batch.
pub fn batch_iter(indices: &[usize], batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order = indices.to_vec();
    order.shuffle(&mut rng::epoch(seed, epoch));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
