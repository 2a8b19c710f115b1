/// Element of an atom. Covers the organic subset plus the bracket-only
/// elements that show up in kinase-inhibitor and screening libraries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Na,
    Mg,
    Al,
    Si,
    P,
    S,
    Cl,
    K,
    Ca,
    Mn,
    Fe,
    Co,
    Ni,
    Cu,
    Zn,
    Ga,
    Ge,
    As,
    Se,
    Br,
    Li,
    Ru,
    Rh,
    Pd,
    Ag,
    Sn,
    Sb,
    Te,
    I,
    Pt,
    Au,
    Hg,
    Gd,
    Bi,
}

const ALL: &[(Element, &str)] = &[
    (Element::H, "H"),
    (Element::B, "B"),
    (Element::C, "C"),
    (Element::N, "N"),
    (Element::O, "O"),
    (Element::F, "F"),
    (Element::Na, "Na"),
    (Element::Mg, "Mg"),
    (Element::Al, "Al"),
    (Element::Si, "Si"),
    (Element::P, "P"),
    (Element::S, "S"),
    (Element::Cl, "Cl"),
    (Element::K, "K"),
    (Element::Ca, "Ca"),
    (Element::Mn, "Mn"),
    (Element::Fe, "Fe"),
    (Element::Co, "Co"),
    (Element::Ni, "Ni"),
    (Element::Cu, "Cu"),
    (Element::Zn, "Zn"),
    (Element::Ga, "Ga"),
    (Element::Ge, "Ge"),
    (Element::As, "As"),
    (Element::Se, "Se"),
    (Element::Br, "Br"),
    (Element::Li, "Li"),
    (Element::Ru, "Ru"),
    (Element::Rh, "Rh"),
    (Element::Pd, "Pd"),
    (Element::Ag, "Ag"),
    (Element::Sn, "Sn"),
    (Element::Sb, "Sb"),
    (Element::Te, "Te"),
    (Element::I, "I"),
    (Element::Pt, "Pt"),
    (Element::Au, "Au"),
    (Element::Hg, "Hg"),
    (Element::Gd, "Gd"),
    (Element::Bi, "Bi"),
];

impl Element {
    pub fn from_symbol(symbol: &str) -> Option<Self> {
        ALL.iter().find(|(_, s)| *s == symbol).map(|(e, _)| *e)
    }

    pub fn symbol(self) -> &'static str {
        ALL.iter().find(|(e, _)| *e == self).map(|(_, s)| *s).unwrap()
    }

    /// Elements allowed as lowercase aromatic atoms.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S | Element::Se | Element::As
        )
    }

    /// Default valences used to derive implicit hydrogens, lowest first.
    /// Empty for elements that only appear in brackets.
    pub fn default_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's valence sum; aromatic bonds count as 1.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    pub charge: i8,
    /// Hydrogens written inside a bracket atom, plus folded `[H]` neighbours.
    pub explicit_h: u8,
    /// Mass number written in a bracket atom.
    pub isotope: Option<u16>,
    /// Bracket atoms never receive implicit hydrogens.
    pub bracket: bool,
    /// Heavy-atom neighbour count.
    pub degree: u8,
    pub implicit_h: u8,
}

impl Atom {
    pub fn total_h(&self) -> u8 {
        self.explicit_h.saturating_add(self.implicit_h)
    }
}

/// Implicit hydrogens from the default valence table.
///
/// `bond_sum` is the sum of bond valences to heavy atoms. Aromatic atoms add
/// one to their own accounting and only use their lowest valence.
pub(crate) fn implicit_hydrogens(atom: &Atom, bond_sum: u8) -> u8 {
    if atom.bracket {
        return 0;
    }
    let valences = atom.element.default_valences();
    if atom.aromatic {
        let used = bond_sum.saturating_add(1);
        return valences.first().map_or(0, |&v| v.saturating_sub(used));
    }
    valences
        .iter()
        .find(|&&v| v >= bond_sum)
        .map_or(0, |&v| v - bond_sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn organic(element: Element, aromatic: bool) -> Atom {
        Atom {
            element,
            aromatic,
            charge: 0,
            explicit_h: 0,
            isotope: None,
            bracket: false,
            degree: 0,
            implicit_h: 0,
        }
    }

    #[test]
    fn valence_rules() {
        assert_eq!(implicit_hydrogens(&organic(Element::C, false), 0), 4);
        assert_eq!(implicit_hydrogens(&organic(Element::C, true), 2), 1);
        assert_eq!(implicit_hydrogens(&organic(Element::N, true), 2), 0);
        assert_eq!(implicit_hydrogens(&organic(Element::S, false), 3), 1);
        assert_eq!(implicit_hydrogens(&organic(Element::S, false), 6), 0);
        assert_eq!(implicit_hydrogens(&organic(Element::S, true), 2), 0);
        assert_eq!(implicit_hydrogens(&organic(Element::P, false), 4), 1);
        assert_eq!(implicit_hydrogens(&organic(Element::Cl, false), 1), 0);
        // over-valent nitrogen just gets no hydrogens
        assert_eq!(implicit_hydrogens(&organic(Element::N, false), 5), 0);
        let mut bracket = organic(Element::C, false);
        bracket.bracket = true;
        assert_eq!(implicit_hydrogens(&bracket, 1), 0);
    }

    #[test]
    fn symbols_round_trip() {
        for (e, s) in ALL {
            assert_eq!(Element::from_symbol(s), Some(*e));
            assert_eq!(e.symbol(), *s);
        }
        assert_eq!(Element::from_symbol("Xx"), None);
    }
}
