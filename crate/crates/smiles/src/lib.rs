//! SMILES subset parser producing heavy-atom molecular graphs.
//!
//! See `GRAMMAR.md` in this crate for the accepted language.

mod atom;
pub mod features;
mod graph;
mod parser;

pub use atom::{Atom, Bond, BondOrder, Element};
pub use features::{featurize_atoms, ATOM_FEATURES};
pub use graph::MolecularGraph;
pub use parser::{parse_smiles, ParseError, ParseErrorKind};

#[cfg(test)]
mod tests {
    use super::features::*;
    use super::*;

    #[test]
    fn single_atom() {
        let g = parse_smiles("C").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.bond_count(), 0);
        assert_eq!(g.adjacency(), &[0]);
    }

    #[test]
    fn ethane() {
        let g = parse_smiles("CC").unwrap();
        assert_eq!(g.atom_count(), 2);
        assert_eq!(g.bond_count(), 1);
        assert_eq!(g.adjacency(), &[0, 1, 1, 0]);
    }

    #[test]
    fn benzene() {
        let g = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.bond_count(), 6);
        assert!(g.atoms().iter().all(|a| a.aromatic));
        assert!(g.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
        for i in 0..6 {
            let row = g.feature_row(i);
            assert_eq!(row[AROMATIC_COLUMN], 1.0);
            assert_eq!(row[DEGREE_OFFSET + 2], 1.0);
            assert_eq!(row[HCOUNT_OFFSET + 1], 1.0);
        }
    }

    #[test]
    fn aspirin() {
        let g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        assert_eq!(g.atom_count(), 13);
        assert_eq!(g.bond_count(), 13);
    }

    #[test]
    fn methane_features() {
        let g = parse_smiles("C").unwrap();
        let row = g.feature_row(0);
        let mut expected = [0.0; ATOM_FEATURES];
        expected[ELEMENT_OFFSET] = 1.0; // C
        expected[DEGREE_OFFSET] = 1.0; // degree 0
        expected[CHARGE_OFFSET + 2] = 1.0; // charge 0
        expected[HCOUNT_OFFSET + 4] = 1.0; // CH4
        assert_eq!(row, expected);
    }

    #[test]
    fn feature_rows_sum_to_four_or_five() {
        let g = parse_smiles("CC(=O)Oc1ccccc1C(=O)O").unwrap();
        for i in 0..g.atom_count() {
            let row = g.feature_row(i);
            let sum: f64 = row.iter().sum();
            let expected = 4.0 + row[AROMATIC_COLUMN];
            assert_eq!(sum, expected);
            for (off, width) in ONE_HOT_GROUPS {
                assert_eq!(row[off..off + width].iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_smiles("[NH4+]").unwrap();
        let a = &g.atoms()[0];
        assert_eq!((a.element, a.charge, a.explicit_h, a.implicit_h), (Element::N, 1, 4, 0));

        let g = parse_smiles("[13CH3][O-]").unwrap();
        assert_eq!(g.atoms()[0].total_h(), 3);
        assert_eq!(g.atoms()[1].charge, -1);

        let g = parse_smiles("c1cc[nH]c1").unwrap();
        assert_eq!(g.atoms()[3].total_h(), 1);
        assert!(g.atoms()[3].aromatic);

        let g = parse_smiles("[Fe++]").unwrap();
        assert_eq!(g.atoms()[0].charge, 2);
        let g = parse_smiles("[Cu+2:7]").unwrap();
        assert_eq!(g.atoms()[0].charge, 2);
        let g = parse_smiles("c1cc[se]c1").unwrap();
        assert_eq!(g.atoms()[3].element, Element::Se);
    }

    #[test]
    fn explicit_hydrogen_atoms_are_folded() {
        let g = parse_smiles("[H]C([H])([H])[H]").unwrap();
        assert_eq!(g.atom_count(), 1);
        assert_eq!(g.atoms()[0].total_h(), 4);
    }

    #[test]
    fn stereo_is_skipped() {
        let g = parse_smiles("C/C=C\\C").unwrap();
        assert_eq!(g.atom_count(), 4);
        assert_eq!(g.stereo_skipped(), 2);
        let g = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(g.atom_count(), 6);
        assert_eq!(g.atoms()[1].total_h(), 1);
        let g = parse_smiles("F[C@TH2H](Cl)Br").unwrap();
        assert_eq!(g.atom_count(), 4);
    }

    #[test]
    fn ring_closures() {
        let g = parse_smiles("C1CC2CCC1CC2").unwrap();
        assert_eq!((g.atom_count(), g.bond_count()), (8, 9));
        let g = parse_smiles("C%10CCCCC%10").unwrap();
        assert_eq!((g.atom_count(), g.bond_count()), (6, 6));
        let g = parse_smiles("C=1CCCCC1").unwrap();
        assert_eq!(g.bonds().iter().filter(|b| b.order == BondOrder::Double).count(), 1);
        // closure label reuse
        let g = parse_smiles("C1CC1C1CC1").unwrap();
        assert_eq!((g.atom_count(), g.bond_count()), (6, 7));
    }

    fn kind(s: &str) -> (usize, ParseErrorKind) {
        let e = parse_smiles(s).unwrap_err();
        (e.offset, e.kind)
    }

    #[test]
    fn errors_name_offset_and_construct() {
        assert_eq!(kind(""), (0, ParseErrorKind::Empty));
        assert_eq!(kind("CC.O"), (2, ParseErrorKind::Disconnected));
        assert_eq!(kind("C1CC"), (1, ParseErrorKind::UnmatchedRing(1)));
        assert_eq!(kind("CC(C"), (2, ParseErrorKind::UnclosedBranch));
        assert_eq!(kind("CC)C"), (2, ParseErrorKind::UnopenedBranch));
        assert_eq!(kind("C()C"), (2, ParseErrorKind::EmptyBranch));
        assert_eq!(kind("C[Xx]"), (2, ParseErrorKind::UnknownElement("Xx".into())));
        assert_eq!(kind("C[CH3"), (1, ParseErrorKind::UnclosedBracket));
        assert_eq!(kind("=C"), (0, ParseErrorKind::MissingAtom));
        assert_eq!(kind("CC="), (2, ParseErrorKind::DanglingBond));
        assert_eq!(kind("C*"), (1, ParseErrorKind::Unsupported("*".into())));
        assert_eq!(kind("[C+5]"), (2, ParseErrorKind::ChargeOutOfRange(5)));
        assert_eq!(kind("C11"), (2, ParseErrorKind::SelfBond));
        assert_eq!(kind("C12CC12"), (6, ParseErrorKind::DuplicateBond));
        assert_eq!(kind("C=1CCC#1"), (7, ParseErrorKind::RingBondConflict(1)));
        assert_eq!(kind("Cx"), (1, ParseErrorKind::UnexpectedChar('x')));
        assert_eq!(kind("[f]"), (1, ParseErrorKind::UnknownElement("f".into())));
        let msg = parse_smiles("CC.O").unwrap_err().to_string();
        assert!(msg.contains("byte 2"), "{msg}");
    }
}
