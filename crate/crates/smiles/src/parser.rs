use std::collections::BTreeMap;

use thiserror::Error;

use crate::atom::{implicit_hydrogens, Atom, Bond, BondOrder, Element};
use crate::features::featurize_atoms;
use crate::graph::MolecularGraph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("empty input")]
    Empty,
    #[error("unexpected character {0:?}")]
    UnexpectedChar(char),
    #[error("unsupported construct {0:?}")]
    Unsupported(String),
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("element {0:?} cannot be aromatic")]
    NotAromatic(String),
    #[error("'.' disconnected fragments are not supported")]
    Disconnected,
    #[error("ring bond {0} is never closed")]
    UnmatchedRing(u32),
    #[error("ring bond {0} has conflicting bond symbols")]
    RingBondConflict(u32),
    #[error("unmatched '('")]
    UnclosedBranch,
    #[error("unmatched ')'")]
    UnopenedBranch,
    #[error("empty branch")]
    EmptyBranch,
    #[error("unclosed bracket atom")]
    UnclosedBracket,
    #[error("bond or branch with no preceding atom")]
    MissingAtom,
    #[error("bond symbol not followed by an atom")]
    DanglingBond,
    #[error("formal charge {0} outside [-4, 4]")]
    ChargeOutOfRange(i32),
    #[error("atom bonded to itself")]
    SelfBond,
    #[error("duplicate bond between the same two atoms")]
    DuplicateBond,
}

/// Parse failure with the byte offset of the offending construct.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
}

fn err<T>(offset: usize, kind: ParseErrorKind) -> Result<T, ParseError> {
    Err(ParseError { offset, kind })
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(usize, usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
    stereo_skipped: usize,
}

/// Parses a SMILES string into a heavy-atom graph.
///
/// Supported: organic-subset and bracket atoms (isotope, charge, hydrogen
/// count, atom class), bonds `- = # :`, aromatic lowercase atoms, branches,
/// ring closures `0-9` and `%nn`. Stereo marks `/ \ @` are skipped.
/// Dot-separated fragments are rejected.
pub fn parse_smiles(smiles: &str) -> Result<MolecularGraph, ParseError> {
    if smiles.is_empty() {
        return err(0, ParseErrorKind::Empty);
    }
    let mut p = Parser {
        src: smiles.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
        stereo_skipped: 0,
    };
    p.run()?;
    if p.stereo_skipped > 0 {
        log::warn!("{smiles}: skipped {} stereo marker(s)", p.stereo_skipped);
    }
    let (atoms, bonds) = fold_hydrogens(p.atoms, p.bonds);
    Ok(build_graph(smiles, atoms, bonds, p.stereo_skipped))
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, off: usize) -> Option<u8> {
        self.src.get(self.pos + off).copied()
    }

    fn run(&mut self) -> Result<(), ParseError> {
        while let Some(c) = self.peek() {
            let start = self.pos;
            match c {
                b'B' | b'C' | b'N' | b'O' | b'P' | b'S' | b'F' | b'I' => {
                    let two = match (c, self.peek_at(1)) {
                        (b'C', Some(b'l')) => Some(Element::Cl),
                        (b'B', Some(b'r')) => Some(Element::Br),
                        _ => None,
                    };
                    let element = match two {
                        Some(e) => {
                            self.pos += 2;
                            e
                        }
                        None => {
                            self.pos += 1;
                            Element::from_symbol(std::str::from_utf8(&[c]).unwrap()).unwrap()
                        }
                    };
                    self.add_atom(start, organic(element, false))?;
                }
                b'b' | b'c' | b'n' | b'o' | b'p' | b's' => {
                    self.pos += 1;
                    let upper = (c as char).to_ascii_uppercase().to_string();
                    let element = Element::from_symbol(&upper).unwrap();
                    self.add_atom(start, organic(element, true))?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(start, atom)?;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.prev.is_none() {
                        return err(start, ParseErrorKind::MissingAtom);
                    }
                    if self.pending.is_some() {
                        return err(start, ParseErrorKind::UnexpectedChar(c as char));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, start));
                    self.pos += 1;
                }
                b'/' | b'\\' => {
                    if self.prev.is_none() {
                        return err(start, ParseErrorKind::MissingAtom);
                    }
                    self.stereo_skipped += 1;
                    self.pos += 1;
                }
                b'(' => {
                    let Some(prev) = self.prev else {
                        return err(start, ParseErrorKind::MissingAtom);
                    };
                    if let Some((_, at)) = self.pending {
                        return err(at, ParseErrorKind::DanglingBond);
                    }
                    self.branches.push((prev, start, self.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _, atoms_before)) = self.branches.pop() else {
                        return err(start, ParseErrorKind::UnopenedBranch);
                    };
                    if let Some((_, at)) = self.pending {
                        return err(at, ParseErrorKind::DanglingBond);
                    }
                    if self.atoms.len() == atoms_before {
                        return err(start, ParseErrorKind::EmptyBranch);
                    }
                    self.prev = Some(anchor);
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_bond(start, (c - b'0') as u32)?;
                }
                b'%' => {
                    let (Some(d1), Some(d2)) = (self.peek_at(1), self.peek_at(2)) else {
                        return err(start, ParseErrorKind::Unsupported("%".into()));
                    };
                    if !d1.is_ascii_digit() || !d2.is_ascii_digit() {
                        return err(start, ParseErrorKind::Unsupported("%".into()));
                    }
                    self.pos += 3;
                    self.ring_bond(start, ((d1 - b'0') * 10 + (d2 - b'0')) as u32)?;
                }
                b'.' => return err(start, ParseErrorKind::Disconnected),
                b'*' | b'$' => return err(start, ParseErrorKind::Unsupported((c as char).to_string())),
                _ => {
                    let ch = std::str::from_utf8(&self.src[start..])
                        .ok()
                        .and_then(|s| s.chars().next())
                        .unwrap_or(char::REPLACEMENT_CHARACTER);
                    return err(start, ParseErrorKind::UnexpectedChar(ch));
                }
            }
        }
        if let Some((_, at)) = self.pending {
            return err(at, ParseErrorKind::DanglingBond);
        }
        if let Some(&(_, at, _)) = self.branches.last() {
            return err(at, ParseErrorKind::UnclosedBranch);
        }
        if let Some((&label, open)) = self.rings.iter().next() {
            return err(open.offset, ParseErrorKind::UnmatchedRing(label));
        }
        if self.atoms.is_empty() {
            return err(0, ParseErrorKind::Empty);
        }
        Ok(())
    }

    fn add_atom(&mut self, offset: usize, atom: Atom) -> Result<(), ParseError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((o, _)) => o,
                None => self.default_order(prev, idx),
            };
            self.add_bond(offset, prev, idx, order)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn add_bond(&mut self, offset: usize, a: usize, b: usize, order: BondOrder) -> Result<(), ParseError> {
        if a == b {
            return err(offset, ParseErrorKind::SelfBond);
        }
        if self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return err(offset, ParseErrorKind::DuplicateBond);
        }
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn ring_bond(&mut self, offset: usize, label: u32) -> Result<(), ParseError> {
        let Some(atom) = self.prev else {
            return err(offset, ParseErrorKind::MissingAtom);
        };
        let bond = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            Some(open) => {
                let order = match (open.bond, bond) {
                    (Some(x), Some(y)) if x != y => {
                        return err(offset, ParseErrorKind::RingBondConflict(label));
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => self.default_order(open.atom, atom),
                };
                self.add_bond(offset, open.atom, atom, order)
            }
            None => {
                self.rings.insert(label, RingOpen { atom, bond, offset });
                Ok(())
            }
        }
    }

    /// `[` isotope? symbol chirality? hcount? charge? class? `]`
    fn bracket_atom(&mut self) -> Result<Atom, ParseError> {
        let open = self.pos;
        self.pos += 1;
        let close = match self.src[self.pos..].iter().position(|&b| b == b']') {
            Some(i) => self.pos + i,
            None => return err(open, ParseErrorKind::UnclosedBracket),
        };
        let iso_start = self.pos;
        while self.pos < close && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        // absurdly long mass numbers saturate rather than fail
        let isotope = (self.pos > iso_start).then(|| {
            self.src[iso_start..self.pos]
                .iter()
                .fold(0u16, |acc, d| acc.saturating_mul(10).saturating_add(u16::from(d - b'0')))
        });

        let sym_start = self.pos;
        let (element, aromatic) = self.bracket_symbol(close)?;

        if self.pos < close && self.src[self.pos] == b'@' {
            self.stereo_skipped += 1;
            self.pos += 1;
            if self.pos < close && self.src[self.pos] == b'@' {
                self.pos += 1;
            } else if self.pos + 1 < close {
                let tag = &self.src[self.pos..self.pos + 2];
                if matches!(tag, b"TH" | b"AL" | b"SP" | b"TB" | b"OH") {
                    self.pos += 2;
                    while self.pos < close && self.src[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                }
            }
        }

        let mut explicit_h = 0u8;
        if self.pos < close && self.src[self.pos] == b'H' {
            self.pos += 1;
            explicit_h = 1;
            if self.pos < close && self.src[self.pos].is_ascii_digit() {
                explicit_h = self.src[self.pos] - b'0';
                self.pos += 1;
            }
        }

        let mut charge: i32 = 0;
        if self.pos < close && matches!(self.src[self.pos], b'+' | b'-') {
            let charge_at = self.pos;
            let sign_char = self.src[self.pos];
            let sign = if sign_char == b'+' { 1 } else { -1 };
            self.pos += 1;
            let mut magnitude = 1;
            if self.pos < close && self.src[self.pos].is_ascii_digit() {
                let mut value = 0i32;
                while self.pos < close && self.src[self.pos].is_ascii_digit() {
                    value = value.saturating_mul(10).saturating_add((self.src[self.pos] - b'0') as i32);
                    self.pos += 1;
                }
                magnitude = value;
            } else {
                while self.pos < close && self.src[self.pos] == sign_char {
                    magnitude += 1;
                    self.pos += 1;
                }
            }
            charge = sign * magnitude;
            if !(-4..=4).contains(&charge) {
                return err(charge_at, ParseErrorKind::ChargeOutOfRange(charge));
            }
        }

        if self.pos < close && self.src[self.pos] == b':' {
            self.pos += 1;
            let digits = self.pos;
            while self.pos < close && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                return err(self.pos, ParseErrorKind::UnexpectedChar(':'));
            }
        }

        if self.pos != close {
            let ch = self.src[self.pos] as char;
            return err(self.pos, ParseErrorKind::UnexpectedChar(ch));
        }
        self.pos = close + 1;
        if aromatic && !element.can_be_aromatic() {
            let sym = String::from_utf8_lossy(&self.src[sym_start..close]).into_owned();
            return err(sym_start, ParseErrorKind::NotAromatic(sym));
        }
        Ok(Atom {
            element,
            aromatic,
            charge: charge as i8,
            explicit_h,
            isotope,
            bracket: true,
            degree: 0,
            implicit_h: 0,
        })
    }

    fn bracket_symbol(&mut self, close: usize) -> Result<(Element, bool), ParseError> {
        let start = self.pos;
        let first = match self.src.get(self.pos) {
            Some(&c) if self.pos < close => c,
            _ => return err(start, ParseErrorKind::UnknownElement(String::new())),
        };
        if first == b'*' {
            return err(start, ParseErrorKind::Unsupported("*".into()));
        }
        if first.is_ascii_lowercase() {
            // aromatic: se, as, or single letter
            for len in [2, 1] {
                if start + len <= close {
                    let s = std::str::from_utf8(&self.src[start..start + len]).unwrap_or("");
                    let mut up = s.to_string();
                    up[..1].make_ascii_uppercase();
                    if let Some(e) = Element::from_symbol(&up) {
                        if e.can_be_aromatic() && (len == 1 || matches!(e, Element::Se | Element::As)) {
                            self.pos += len;
                            return Ok((e, true));
                        }
                    }
                }
            }
            let sym = String::from_utf8_lossy(&self.src[start..start + 1]).into_owned();
            return err(start, ParseErrorKind::UnknownElement(sym));
        }
        if !first.is_ascii_uppercase() {
            return err(start, ParseErrorKind::UnexpectedChar(first as char));
        }
        if start + 2 <= close && self.src[start + 1].is_ascii_lowercase() {
            let s = std::str::from_utf8(&self.src[start..start + 2]).unwrap();
            if let Some(e) = Element::from_symbol(s) {
                self.pos += 2;
                return Ok((e, false));
            }
        }
        let s = std::str::from_utf8(&self.src[start..start + 1]).unwrap();
        match Element::from_symbol(s) {
            Some(e) => {
                self.pos += 1;
                Ok((e, false))
            }
            None => {
                let end = if start + 2 <= close && self.src[start + 1].is_ascii_lowercase() {
                    start + 2
                } else {
                    start + 1
                };
                let sym = String::from_utf8_lossy(&self.src[start..end]).into_owned();
                err(start, ParseErrorKind::UnknownElement(sym))
            }
        }
    }
}

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

/// Removes neutral, non-isotopic `[H]` atoms bonded to exactly one heavy atom, counting
/// them as explicit hydrogens on that neighbour.
fn fold_hydrogens(mut atoms: Vec<Atom>, bonds: Vec<Bond>) -> (Vec<Atom>, Vec<Bond>) {
    let n = atoms.len();
    let mut neighbours = vec![Vec::new(); n];
    for b in &bonds {
        neighbours[b.a].push(b.b);
        neighbours[b.b].push(b.a);
    }
    let mut removed = vec![false; n];
    for i in 0..n {
        let a = &atoms[i];
        if a.element == Element::H && a.charge == 0 && a.isotope.is_none() && a.explicit_h == 0 && neighbours[i].len() == 1 {
            let j = neighbours[i][0];
            if atoms[j].element != Element::H && !removed[j] {
                removed[i] = true;
                atoms[j].explicit_h = atoms[j].explicit_h.saturating_add(1);
            }
        }
    }
    if !removed.iter().any(|&r| r) {
        return (atoms, bonds);
    }
    let mut remap = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for (i, atom) in atoms.into_iter().enumerate() {
        if !removed[i] {
            remap[i] = kept.len();
            kept.push(atom);
        }
    }
    let bonds = bonds
        .into_iter()
        .filter(|b| !removed[b.a] && !removed[b.b])
        .map(|b| Bond {
            a: remap[b.a],
            b: remap[b.b],
            order: b.order,
        })
        .collect();
    (kept, bonds)
}

fn build_graph(smiles: &str, mut atoms: Vec<Atom>, bonds: Vec<Bond>, stereo_skipped: usize) -> MolecularGraph {
    let n = atoms.len();
    let mut adjacency = vec![0u8; n * n];
    let mut bond_sum = vec![0u8; n];
    for b in &bonds {
        adjacency[b.a * n + b.b] = 1;
        adjacency[b.b * n + b.a] = 1;
        for i in [b.a, b.b] {
            atoms[i].degree = atoms[i].degree.saturating_add(1);
            bond_sum[i] = bond_sum[i].saturating_add(b.order.valence());
        }
    }
    for (atom, &sum) in atoms.iter_mut().zip(&bond_sum) {
        // folded [H] neighbours still occupy valence
        atom.implicit_h = implicit_hydrogens(atom, sum.saturating_add(atom.explicit_h));
    }
    let features = featurize_atoms(&atoms);
    MolecularGraph::from_parts(smiles.to_string(), atoms, bonds, adjacency, features, stereo_skipped)
}
