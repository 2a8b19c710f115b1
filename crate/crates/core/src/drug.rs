//! Graph convolution over the heavy-atom graph followed by a column-wise max.

use graphcl_autodiff::{Real, Tape, Tensor, Var};
use graphcl_smiles::MolecularGraph;
use rand::Rng;

use crate::error::{Error, Result};
use crate::init::glorot;

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` for one molecule, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    data: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn to_tensor<S: Real>(&self) -> Tensor<S> {
        Tensor::new(vec![self.n, self.n], self.data.iter().map(|&x| S::of(x)).collect())
            .expect("adjacency length is n²")
    }
}

/// Symmetric normalization with self loops. `adjacency` is a row-major 0/1
/// matrix with an empty diagonal.
pub fn normalize_adjacency(adjacency: &[u8], n: usize) -> Result<NormalizedAdjacency> {
    if adjacency.len() != n * n {
        return Err(Error::Invalid(format!(
            "adjacency has {} entries, expected {n}×{n}",
            adjacency.len()
        )));
    }
    for i in 0..n {
        if adjacency[i * n + i] != 0 {
            return Err(Error::Invalid(format!("adjacency diagonal entry {i} is nonzero")));
        }
        for j in i + 1..n {
            let (a, b) = (adjacency[i * n + j], adjacency[j * n + i]);
            if a != b {
                return Err(Error::Invalid(format!("adjacency is asymmetric at ({i}, {j})")));
            }
            if a > 1 {
                return Err(Error::Invalid(format!("adjacency entry ({i}, {j}) is not 0/1")));
            }
        }
    }
    let inv_sqrt_degree: Vec<f64> = (0..n)
        .map(|i| {
            let d = 1 + adjacency[i * n..(i + 1) * n].iter().map(|&x| x as usize).sum::<usize>();
            1.0 / (d as f64).sqrt()
        })
        .collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { adjacency[i * n + j] as f64 };
            if a != 0.0 {
                data[i * n + j] = inv_sqrt_degree[i] * a * inv_sqrt_degree[j];
            }
        }
    }
    Ok(NormalizedAdjacency { n, data })
}

pub fn normalize_graph(graph: &MolecularGraph) -> Result<NormalizedAdjacency> {
    normalize_adjacency(graph.adjacency(), graph.atom_count())
}

/// Bias-free GCN layers: `W⁰` is `k×h`, the rest `h×h`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnStack<S> {
    pub weights: Vec<Tensor<S>>,
}

impl<S: Real> GcnStack<S> {
    pub fn new(in_features: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> Result<Self> {
        if layers == 0 || hidden == 0 || in_features == 0 {
            return Err(Error::Invalid(format!(
                "GCN needs at least one layer and nonzero widths (k={in_features}, h={hidden}, L={layers})"
            )));
        }
        let weights = (0..layers)
            .map(|l| glorot(if l == 0 { in_features } else { hidden }, hidden, rng))
            .collect();
        Ok(Self { weights })
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    pub fn in_features(&self) -> usize {
        self.weights[0].shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.weights[0].shape()[1]
    }
}

/// Node representations `Z^L`. Every layer is `relu(Â · Z · W)`.
pub fn gcn_forward<S: Real>(tape: &mut Tape<S>, features: Var, adjacency: Var, weights: &[Var]) -> Result<Var> {
    let k = tape.value(features).shape()[1];
    let expected = weights.first().map(|&w| tape.value(w).shape()[0]);
    if expected != Some(k) {
        return Err(Error::Invalid(format!(
            "atom features have {k} columns but the first GCN weight expects {expected:?}"
        )));
    }
    let mut z = features;
    for &w in weights {
        let zw = tape.matmul(z, w)?;
        let propagated = tape.matmul(adjacency, zw)?;
        z = tape.relu(propagated)?;
    }
    Ok(z)
}

/// Column-wise max over atoms, `n×h → 1×h`.
pub fn global_max_pool<S: Real>(tape: &mut Tape<S>, nodes: Var) -> Result<Var> {
    Ok(tape.max_cols(nodes)?)
}

/// Full drug path: features and normalized adjacency enter as constants.
pub fn encode_drug<S: Real>(
    tape: &mut Tape<S>,
    graph: &MolecularGraph,
    adjacency: &NormalizedAdjacency,
    weights: &[Var],
) -> Result<Var> {
    let n = graph.atom_count();
    let x = Tensor::new(
        vec![n, graph.features().len() / n.max(1)],
        graph.features().iter().map(|&v| S::of(v)).collect(),
    )?;
    let x = tape.constant(x);
    let a = tape.constant(adjacency.to_tensor());
    let z = gcn_forward(tape, x, a, weights)?;
    global_max_pool(tape, z)
}
