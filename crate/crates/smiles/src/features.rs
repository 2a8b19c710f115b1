//! Fixed 30-column atom feature scheme.
//!
//! | columns | group                                               |
//! |---------|-----------------------------------------------------|
//! | 0..11   | element one-hot: C N O S F P Cl Br I B, other      |
//! | 11..18  | heavy-atom degree one-hot 0..=6 (clamped)           |
//! | 18..23  | formal charge one-hot −2..=+2 (clamped)             |
//! | 23      | aromatic flag                                       |
//! | 24..30  | total hydrogen count one-hot 0..=5 (clamped)        |

use crate::atom::{Atom, Element};

pub const ELEMENT_SLOTS: [Element; 10] = [
    Element::C,
    Element::N,
    Element::O,
    Element::S,
    Element::F,
    Element::P,
    Element::Cl,
    Element::Br,
    Element::I,
    Element::B,
];

pub const ELEMENT_OFFSET: usize = 0;
pub const ELEMENT_WIDTH: usize = ELEMENT_SLOTS.len() + 1;
pub const DEGREE_OFFSET: usize = ELEMENT_OFFSET + ELEMENT_WIDTH;
pub const DEGREE_WIDTH: usize = 7;
pub const CHARGE_OFFSET: usize = DEGREE_OFFSET + DEGREE_WIDTH;
pub const CHARGE_WIDTH: usize = 5;
pub const AROMATIC_COLUMN: usize = CHARGE_OFFSET + CHARGE_WIDTH;
pub const HCOUNT_OFFSET: usize = AROMATIC_COLUMN + 1;
pub const HCOUNT_WIDTH: usize = 6;

/// Number of feature columns per atom.
pub const ATOM_FEATURES: usize = HCOUNT_OFFSET + HCOUNT_WIDTH;

const _: () = assert!(ATOM_FEATURES == 30);

/// One-hot groups as `(offset, width)`, excluding the aromatic flag.
pub const ONE_HOT_GROUPS: [(usize, usize); 4] = [
    (ELEMENT_OFFSET, ELEMENT_WIDTH),
    (DEGREE_OFFSET, DEGREE_WIDTH),
    (CHARGE_OFFSET, CHARGE_WIDTH),
    (HCOUNT_OFFSET, HCOUNT_WIDTH),
];

pub fn featurize_atom(atom: &Atom) -> [f64; ATOM_FEATURES] {
    let mut row = [0.0; ATOM_FEATURES];
    let element = ELEMENT_SLOTS
        .iter()
        .position(|&e| e == atom.element)
        .unwrap_or(ELEMENT_SLOTS.len());
    row[ELEMENT_OFFSET + element] = 1.0;
    row[DEGREE_OFFSET + (atom.degree as usize).min(DEGREE_WIDTH - 1)] = 1.0;
    let charge = atom.charge.clamp(-2, 2) + 2;
    row[CHARGE_OFFSET + charge as usize] = 1.0;
    if atom.aromatic {
        row[AROMATIC_COLUMN] = 1.0;
    }
    row[HCOUNT_OFFSET + (atom.total_h() as usize).min(HCOUNT_WIDTH - 1)] = 1.0;
    row
}

/// Row-major `n × ATOM_FEATURES` matrix for atoms whose degree and hydrogen
/// counts are already computed.
pub fn featurize_atoms(atoms: &[Atom]) -> Vec<f64> {
    atoms.iter().flat_map(featurize_atom).collect()
}
