use crate::atom::{Atom, Bond};
use crate::features::ATOM_FEATURES;

/// Heavy-atom molecular graph: atom feature matrix plus symmetric 0/1
/// adjacency with an empty diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct MolecularGraph {
    smiles: String,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<u8>,
    features: Vec<f64>,
    stereo_skipped: usize,
}

impl MolecularGraph {
    pub(crate) fn from_parts(
        smiles: String,
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        adjacency: Vec<u8>,
        features: Vec<f64>,
        stereo_skipped: usize,
    ) -> Self {
        debug_assert_eq!(adjacency.len(), atoms.len() * atoms.len());
        debug_assert_eq!(features.len(), atoms.len() * ATOM_FEATURES);
        Self {
            smiles,
            atoms,
            bonds,
            adjacency,
            features,
            stereo_skipped,
        }
    }

    pub fn smiles(&self) -> &str {
        &self.smiles
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn stereo_skipped(&self) -> usize {
        self.stereo_skipped
    }

    /// Row-major `n × n` adjacency.
    pub fn adjacency(&self) -> &[u8] {
        &self.adjacency
    }

    pub fn is_bonded(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.atoms.len() + j] == 1
    }

    /// Row-major `n × ATOM_FEATURES` feature matrix.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, atom: usize) -> &[f64] {
        &self.features[atom * ATOM_FEATURES..(atom + 1) * ATOM_FEATURES]
    }
}
