//! The full network: GCN drug encoder, CNN target encoder and prediction head.

use graphcl_autodiff::{Checkpoint, Real, Tape, Tensor, Var};
use graphcl_smiles::ATOM_FEATURES;
use rand::Rng;

use crate::config::RunConfig;
use crate::data::Dataset;
use crate::drug::{encode_drug, GcnStack};
use crate::error::{Error, Result};
use crate::objective::{predict_affinity, HeadVars, PredictionHead};
use crate::protein::{protein_encode, CnnEncoder, CnnShape, CnnVars, ConvLayer};
use crate::rng;

/// Parameter families reported separately by the gradient check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Gcn,
    Embedding,
    Conv,
    Head,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 4] = [ParamGroup::Gcn, ParamGroup::Embedding, ParamGroup::Conv, ParamGroup::Head];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Gcn => "gcn",
            ParamGroup::Embedding => "embedding",
            ParamGroup::Conv => "conv",
            ParamGroup::Head => "head",
        }
    }

    /// The target projection after pooling counts as part of `conv`.
    pub fn of(name: &str) -> ParamGroup {
        if name.starts_with("gcn.") {
            ParamGroup::Gcn
        } else if name == "protein.embedding" {
            ParamGroup::Embedding
        } else if name.starts_with("protein.") {
            ParamGroup::Conv
        } else {
            ParamGroup::Head
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub gcn: GcnStack<S>,
    pub protein: CnnEncoder<S>,
    pub head: PredictionHead<S>,
}

/// Tape handles for every parameter, plus the flat list in registry order.
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub gcn: Vec<Var>,
    pub protein: CnnVars,
    pub head: HeadVars,
    pub all: Vec<Var>,
}

impl<S: Real> Model<S> {
    pub fn new(gcn_layers: usize, hidden: usize, cnn: &CnnShape, rng: &mut impl Rng) -> Result<Self> {
        let gcn = GcnStack::new(ATOM_FEATURES, hidden, gcn_layers, rng)?;
        let protein = CnnEncoder::new(&CnnShape { out_dim: hidden, ..cnn.clone() }, rng)?;
        let head = PredictionHead::new(hidden, rng);
        Ok(Self { gcn, protein, head })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg.gcn_layers, cfg.drug_dim, &cfg.cnn_shape(), &mut rng::init(cfg.seed))
    }

    pub fn hidden(&self) -> usize {
        self.gcn.hidden()
    }

    /// `(name, tensor)` in a fixed registry order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out: Vec<(String, &Tensor<S>)> = Vec::new();
        for (l, w) in self.gcn.weights.iter().enumerate() {
            out.push((format!("gcn.w{l}"), w));
        }
        out.push(("protein.embedding".into(), &self.protein.embedding));
        for (i, c) in self.protein.convs.iter().enumerate() {
            out.push((format!("protein.conv{i}.weight"), &c.weight));
            out.push((format!("protein.conv{i}.bias"), &c.bias));
        }
        out.push(("protein.proj.weight".into(), &self.protein.proj_weight));
        out.push(("protein.proj.bias".into(), &self.protein.proj_bias));
        let h = &self.head;
        for (name, t) in [("v1", &h.v1), ("b1", &h.b1), ("v2", &h.v2), ("b2", &h.b2), ("v3", &h.v3), ("b3", &h.b3)] {
            out.push((format!("head.{name}"), t));
        }
        out
    }

    /// Mutable tensors in the same order as [`Model::named_parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = self.gcn.weights.iter_mut().collect();
        out.push(&mut self.protein.embedding);
        for c in &mut self.protein.convs {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.protein.proj_weight);
        out.push(&mut self.protein.proj_bias);
        let h = &mut self.head;
        out.extend([&mut h.v1, &mut h.b1, &mut h.v2, &mut h.b2, &mut h.v3, &mut h.b3]);
        out
    }

    pub fn parameters(&self) -> Vec<Tensor<S>> {
        self.named_parameters().into_iter().map(|(_, t)| t.clone()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Places every parameter on the tape, as leaves when `trainable`.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> Result<ModelVars> {
        let vars: Vec<Var> = self
            .named_parameters()
            .into_iter()
            .map(|(_, t)| {
                if trainable {
                    tape.leaf(t.clone())
                } else {
                    tape.constant(t.clone())
                }
            })
            .collect();
        self.attach(tape, &vars)
    }

    /// Interprets existing tape vars (registry order) as this model's parameters.
    pub fn attach(&self, tape: &mut Tape<S>, vars: &[Var]) -> Result<ModelVars> {
        let expected = self.named_parameters().len();
        if vars.len() != expected {
            return Err(Error::Invalid(format!("{} vars for {expected} parameters", vars.len())));
        }
        let layers = self.gcn.layers();
        let convs = self.protein.convs.len();
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let gcn: Vec<Var> = (0..layers).map(|_| next()).collect();
        let embedding = next();
        let conv_vars = (0..convs).map(|_| (next(), next())).collect();
        let (proj_w, proj_b) = (next(), next());
        let head = HeadVars {
            v1: next(),
            b1: next(),
            v2: next(),
            b2: next(),
            v3: next(),
            b3: next(),
        };
        let protein = CnnVars::new(tape, embedding, conv_vars, proj_w, proj_b)?;
        Ok(ModelVars {
            gcn,
            protein,
            head,
            all: vars.to_vec(),
        })
    }

    pub fn write_into(&self, ckpt: &mut Checkpoint, prefix: &str) {
        for (name, t) in self.named_parameters() {
            ckpt.push(format!("{prefix}{name}"), t);
        }
    }

    /// Replaces every parameter with the checkpoint's, checking shapes and dtype.
    pub fn read_from(&mut self, ckpt: &Checkpoint, prefix: &str) -> Result<()> {
        let names: Vec<(String, Vec<usize>)> = self
            .named_parameters()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        for ((name, shape), slot) in names.into_iter().zip(self.parameters_mut()) {
            let full = format!("{prefix}{name}");
            *slot = ckpt.tensor::<S>(&full, &shape).map_err(|source| Error::Checkpoint {
                path: full.clone().into(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> Model<T> {
        Model {
            gcn: GcnStack {
                weights: self.gcn.weights.iter().map(Tensor::cast).collect(),
            },
            protein: CnnEncoder {
                embedding: self.protein.embedding.cast(),
                convs: self
                    .protein
                    .convs
                    .iter()
                    .map(|c| ConvLayer {
                        weight: c.weight.cast(),
                        bias: c.bias.cast(),
                    })
                    .collect(),
                proj_weight: self.protein.proj_weight.cast(),
                proj_bias: self.protein.proj_bias.cast(),
                max_len: self.protein.max_len,
            },
            head: PredictionHead {
                v1: self.head.v1.cast(),
                b1: self.head.b1.cast(),
                v2: self.head.v2.cast(),
                b2: self.head.b2.cast(),
                v3: self.head.v3.cast(),
                b3: self.head.b3.cast(),
            },
        }
    }

    /// Drug embedding `1×h` with parameters held constant.
    pub fn embed_drug(&self, dataset: &Dataset, drug: usize) -> Result<Vec<S>> {
        let mut tape = Tape::new();
        let weights: Vec<Var> = self.gcn.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let d = &dataset.drugs[drug];
        let out = encode_drug(&mut tape, &d.graph, &d.adjacency, &weights)?;
        Ok(tape.value(out).data().to_vec())
    }

    pub fn embed_target(&self, dataset: &Dataset, target: usize) -> Result<Vec<S>> {
        let mut tape = Tape::new();
        let p = &self.protein;
        let embedding = tape.constant(p.embedding.clone());
        let convs = p
            .convs
            .iter()
            .map(|c| (tape.constant(c.weight.clone()), tape.constant(c.bias.clone())))
            .collect();
        let proj_w = tape.constant(p.proj_weight.clone());
        let proj_b = tape.constant(p.proj_bias.clone());
        let vars = CnnVars::new(&mut tape, embedding, convs, proj_w, proj_b)?;
        let out = protein_encode(&mut tape, &dataset.targets[target].tokens.tokens, &vars)?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Deterministic predictions for the given samples; no noise is involved.
    pub fn predict(&self, dataset: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        let h = self.hidden();
        let mut drug_cache: Vec<Option<Vec<S>>> = vec![None; dataset.drugs.len()];
        let mut target_cache: Vec<Option<Vec<S>>> = vec![None; dataset.targets.len()];
        for &i in indices {
            let s = dataset.samples[i];
            if drug_cache[s.drug].is_none() {
                drug_cache[s.drug] = Some(self.embed_drug(dataset, s.drug)?);
            }
            if target_cache[s.target].is_none() {
                target_cache[s.target] = Some(self.embed_target(dataset, s.target)?);
            }
        }
        let mut out = Vec::with_capacity(indices.len());
        for chunk in indices.chunks(CHUNK) {
            let mut d = Vec::with_capacity(chunk.len() * h);
            let mut t = Vec::with_capacity(chunk.len() * h);
            for &i in chunk {
                let s = dataset.samples[i];
                d.extend_from_slice(drug_cache[s.drug].as_ref().expect("cached"));
                t.extend_from_slice(target_cache[s.target].as_ref().expect("cached"));
            }
            let mut tape = Tape::new();
            let h_ = &self.head;
            let head = HeadVars {
                v1: tape.constant(h_.v1.clone()),
                b1: tape.constant(h_.b1.clone()),
                v2: tape.constant(h_.v2.clone()),
                b2: tape.constant(h_.b2.clone()),
                v3: tape.constant(h_.v3.clone()),
                b3: tape.constant(h_.b3.clone()),
            };
            let dv = tape.constant(Tensor::new(vec![chunk.len(), h], d)?);
            let tv = tape.constant(Tensor::new(vec![chunk.len(), h], t)?);
            let p = predict_affinity(&mut tape, dv, tv, &head)?;
            out.extend(tape.value(p).data().iter().map(|v| v.as_f64()));
        }
        Ok(out)
    }
}
