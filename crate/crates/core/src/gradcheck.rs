//! Finite-difference check of the whole joint objective on a tiny synthetic batch.

use std::time::Instant;

use graphcl_autodiff::{finite_diff_check, Tape};
use rand::Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{AffinitySample, Dataset, Drug, Target};
use crate::drug::normalize_graph;
use crate::error::{Error, Result};
use crate::model::{Model, ParamGroup};
use crate::objective::sample_noise_pair;
use crate::protein::{tokenize_protein, CnnShape};
use crate::rng;
use crate::train::build_batch_loss;

const DRUGS: [&str; 4] = ["CCO", "Oc1ccccc1", "CC(=O)Nc1ccc(O)cc1", "C1CCNCC1"];
const TARGETS: [&str; 2] = [
    "MKTAYIAKQRQISFVKSHFSRQLEERLGLIEVQAPILSRVGDGTQDNLSGAEK",
    "GSHMLEDPVAGKWRCV",
];

/// Shape of the synthetic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckSettings {
    pub hidden: usize,
    pub max_len: usize,
    pub embed_dim: usize,
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            hidden: 8,
            max_len: 32,
            embed_dim: 8,
            channels: vec![8, 8, 8],
            kernel: 8,
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupResult {
    pub group: &'static str,
    pub tensors: usize,
    pub coordinates: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub step: f64,
    pub groups: Vec<GroupResult>,
    pub max_rel_error: f64,
    pub worst: Option<String>,
    pub seconds: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("group\ttensors\tcoordinates\tmax_rel_error\tpassed\n");
        for g in &self.groups {
            out.push_str(&format!(
                "{}\t{}\t{}\t{:e}\t{}\n",
                g.group, g.tensors, g.coordinates, g.max_rel_error, g.passed
            ));
        }
        out
    }
}

/// Four drugs, two targets, every pairing once.
pub fn micro_dataset(max_len: usize) -> Result<Dataset> {
    let drugs = DRUGS
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let graph = graphcl_smiles::parse_smiles(s).map_err(|e| Error::Invalid(e.to_string()))?;
            let adjacency = normalize_graph(&graph)?;
            Ok(Drug {
                id: format!("d{i}"),
                smiles: s.to_string(),
                graph,
                adjacency,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets = TARGETS
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(Target {
                id: format!("t{i}"),
                sequence: s.to_string(),
                tokens: tokenize_protein(s, max_len)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::new();
    for d in 0..DRUGS.len() {
        for t in 0..TARGETS.len() {
            samples.push(AffinitySample {
                drug: d,
                target: t,
                affinity: 5.0 + 0.4 * d as f64 + 0.3 * t as f64,
            });
        }
    }
    Ok(Dataset {
        name: "gradcheck".into(),
        drugs,
        targets,
        samples,
    })
}

/// Checks every parameter coordinate of the joint loss with the config's
/// loss weights, GCN depth and similarity, at double precision.
pub fn gradcheck(config: &RunConfig, settings: &GradcheckSettings) -> Result<GradcheckReport> {
    let started = Instant::now();
    let shape = CnnShape {
        embed_dim: settings.embed_dim,
        channels: settings.channels.clone(),
        kernel: settings.kernel,
        max_len: settings.max_len,
        out_dim: settings.hidden,
    };
    let mut init = rng::init(config.seed);
    let mut model: Model<f64> = Model::new(config.gcn_layers, settings.hidden, &shape, &mut init)?;
    // Zero biases put every all-padding conv window exactly on the ReLU kink,
    // where central differences are meaningless. Move off it.
    let names: Vec<String> = model.named_parameters().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.iter().zip(model.parameters_mut()) {
        if name.ends_with("bias") || name.starts_with("head.b") {
            p.data_mut().iter_mut().for_each(|b| *b = init.gen_range(-0.1..0.1));
        }
    }
    let dataset = micro_dataset(settings.max_len)?;
    let batch: Vec<usize> = (0..dataset.samples.len()).collect();
    let weights = config.loss_weights();
    let cosine = config.cosine_similarity;

    // draw the views once so every perturbed evaluation sees the same noise
    let mut recorded = Vec::new();
    {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape, true)?;
        let mut noise_rng = rng::noise(config.seed, 0, 0);
        let mut noise = |d: &[f64]| {
            let pair = sample_noise_pair(d, weights.epsilon, &mut noise_rng);
            recorded.push(pair.clone());
            pair
        };
        build_batch_loss(&mut tape, &vars, &dataset, &batch, &weights, cosine, &mut noise)?;
    }

    let params = model.parameters();
    let report = finite_diff_check(
        |tape: &mut Tape<f64>, vars| -> Result<_> {
            let bound = model.attach(tape, vars)?;
            let mut next = recorded.iter().cloned();
            let mut noise = |_: &[f64]| next.next().expect("one pair per drug");
            Ok(build_batch_loss(tape, &bound, &dataset, &batch, &weights, cosine, &mut noise)?.joint)
        },
        &params,
        settings.step,
        settings.tolerance,
    )?;

    let groups = ParamGroup::ALL
        .iter()
        .map(|&g| {
            let members: Vec<usize> = (0..names.len()).filter(|&i| ParamGroup::of(&names[i]) == g).collect();
            let max = members.iter().map(|&i| report.per_param[i]).fold(0.0, f64::max);
            GroupResult {
                group: g.name(),
                tensors: members.len(),
                coordinates: members.iter().map(|&i| params[i].len()).sum(),
                max_rel_error: max,
                passed: max.is_finite() && max <= settings.tolerance,
            }
        })
        .collect();
    let worst = report.worst.map(|c| {
        format!(
            "{}[{}]: analytic {:e}, numeric {:e}",
            names[c.param], c.index, c.analytic, c.numeric
        )
    });
    Ok(GradcheckReport {
        tolerance: settings.tolerance,
        step: settings.step,
        groups,
        max_rel_error: report.max_rel_error,
        worst,
        seconds: started.elapsed().as_secs_f64(),
    })
}
