//! Ladder-operator polynomials: construction, normal ordering and algebra.
//!
//! A word is a product of letters written left to right; the rightmost
//! letter acts first on a vector. Letters on different slots commute, so the
//! canonical form groups letters by slot (sorted) and orders each slot on its
//! own:
//!
//! * physical letters (`a`, `a⁺` or `b`, `b⁺`) become `(a⁺)^k a^l`;
//! * clean letters (`c`, `c⁺`) and number operators become `N^p (c⁺)^k c^l`;
//! * a slot mixing clean and physical letters is left exactly as written.

mod parse;
mod rewrite;
mod reduce;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::hash::Hash;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{apply_elementary, Elementary, FockBasis, FockMatrix, Layout, MatrixKind, C64};

pub use parse::{parse_momentum_op, parse_op};
pub use reduce::{
    interior_pairing, interior_trace, is_null, null_basis, null_residual, reduce, NullReport, Pairing,
};
pub use rewrite::{apply_rewrite, verify_similarity, RewriteRule, SimilarityReport, StageReport};

/// Coefficients below this magnitude are treated as zero.
pub const ZERO_TOL: f64 = 1e-12;

/// Slot labels: plain indices or symbolic momenta.
pub trait Label: Clone + Ord + Eq + Hash + fmt::Debug + Send + Sync {
    /// The label under momentum negation; plain indices are fixed points.
    fn negated(&self) -> Self;
    /// Writes the label as it follows a species name.
    fn write_label(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result;
    /// Parses a label starting at byte `pos`; returns it and the end offset.
    fn parse_label(text: &str, pos: usize) -> Result<(Self, usize)>;
}

impl Label for usize {
    fn negated(&self) -> Self {
        *self
    }

    fn write_label(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }

    fn parse_label(text: &str, pos: usize) -> Result<(Self, usize)> {
        let digits = text[pos..].bytes().take_while(u8::is_ascii_digit).count();
        if digits == 0 {
            return Err(Error::Parse { position: pos, message: "expected a slot index".into() });
        }
        let end = pos + digits;
        let v = text[pos..end]
            .parse()
            .map_err(|_| Error::Parse { position: pos, message: "slot index out of range".into() })?;
        Ok((v, end))
    }
}

/// An integer combination of named momentum atoms, e.g. `p-q`.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Momentum(BTreeMap<String, i64>);

impl Momentum {
    pub fn zero() -> Self {
        Momentum(BTreeMap::new())
    }

    pub fn atom(name: &str) -> Self {
        Momentum(BTreeMap::from([(name.to_string(), 1)]))
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    /// Leading nonzero coefficient (by atom name) is positive.
    pub fn is_positive(&self) -> bool {
        self.0.values().next().is_some_and(|&c| c > 0)
    }

    pub fn add(&self, other: &Momentum) -> Momentum {
        let mut m = self.0.clone();
        for (k, v) in &other.0 {
            *m.entry(k.clone()).or_insert(0) += v;
        }
        m.retain(|_, v| *v != 0);
        Momentum(m)
    }

    pub fn sub(&self, other: &Momentum) -> Momentum {
        self.add(&other.negated())
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&str, i64)> {
        self.0.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

impl fmt::Display for Momentum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "0");
        }
        for (i, (name, &c)) in self.0.iter().enumerate() {
            let sign = if c < 0 { "-" } else if i > 0 { "+" } else { "" };
            let mag = c.unsigned_abs();
            if mag == 1 {
                write!(f, "{sign}{name}")?;
            } else {
                write!(f, "{sign}{mag}{name}")?;
            }
        }
        Ok(())
    }
}

impl Label for Momentum {
    fn negated(&self) -> Self {
        Momentum(self.0.iter().map(|(k, v)| (k.clone(), -v)).collect())
    }

    fn write_label(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({self})")
    }

    fn parse_label(text: &str, pos: usize) -> Result<(Self, usize)> {
        parse::parse_momentum_label(text, pos)
    }
}

/// Which ladder family a letter belongs to on its label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Species {
    Ad,
    A,
    Bd,
    B,
    N,
    Cd,
    C,
}

impl Species {
    pub fn channel(self) -> Channel {
        match self {
            Species::Bd | Species::B => Channel::B,
            _ => Channel::A,
        }
    }

    pub fn is_creation(self) -> bool {
        matches!(self, Species::Ad | Species::Bd | Species::Cd)
    }

    pub fn is_physical(self) -> bool {
        matches!(self, Species::Ad | Species::A | Species::Bd | Species::B)
    }

    pub fn is_clean(self) -> bool {
        matches!(self, Species::Cd | Species::C)
    }

    pub fn dagger(self) -> Species {
        match self {
            Species::Ad => Species::A,
            Species::A => Species::Ad,
            Species::Bd => Species::B,
            Species::B => Species::Bd,
            Species::Cd => Species::C,
            Species::C => Species::Cd,
            Species::N => Species::N,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::Ad => "ad",
            Species::A => "a",
            Species::Bd => "bd",
            Species::B => "b",
            Species::Cd => "cd",
            Species::C => "c",
            Species::N => "N",
        }
    }

    pub fn from_name(name: &str) -> Option<Species> {
        Some(match name {
            "a" => Species::A,
            "ad" | "a†" => Species::Ad,
            "b" => Species::B,
            "bd" | "b†" => Species::Bd,
            "c" => Species::C,
            "cd" | "c†" => Species::Cd,
            "N" => Species::N,
            _ => return None,
        })
    }

    /// Physical creation and annihilation species of a channel.
    pub fn physical(ch: Channel) -> (Species, Species) {
        match ch {
            Channel::A => (Species::Ad, Species::A),
            Channel::B => (Species::Bd, Species::B),
        }
    }

    fn elementary(self) -> Elementary {
        match self {
            Species::Ad | Species::Bd => Elementary::Ad,
            Species::A | Species::B => Elementary::A,
            Species::Cd => Elementary::Cd,
            Species::C => Elementary::C,
            Species::N => Elementary::N,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Letter<L> {
    pub label: L,
    pub species: Species,
}

impl<L: Label> Letter<L> {
    pub fn new(species: Species, label: L) -> Self {
        Letter { label, species }
    }

    pub fn slot(&self) -> (L, Channel) {
        (self.label.clone(), self.species.channel())
    }
}

impl<L: Label> fmt::Display for Letter<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.species.name())?;
        self.label.write_label(f)
    }
}

pub type Word<L> = Vec<Letter<L>>;

/// A sum of scalar-weighted words.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorPoly<L = usize> {
    terms: Vec<(Word<L>, C64)>,
    canonical: bool,
}

pub type Poly = OperatorPoly<usize>;

impl<L: Label> Default for OperatorPoly<L> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<L: Label> OperatorPoly<L> {
    pub fn zero() -> Self {
        OperatorPoly { terms: Vec::new(), canonical: true }
    }

    pub fn scalar(c: impl Into<C64>) -> Self {
        Self::from_terms(vec![(Vec::new(), c.into())]).normal_order()
    }

    pub fn letter(species: Species, label: L) -> Self {
        Self::from_terms(vec![(vec![Letter::new(species, label)], C64::new(1.0, 0.0))])
    }

    /// A single word with coefficient one.
    pub fn word(letters: Word<L>) -> Self {
        Self::from_terms(vec![(letters, C64::new(1.0, 0.0))])
    }

    /// Terms as given; not normal-ordered.
    pub fn from_terms(terms: Vec<(Word<L>, C64)>) -> Self {
        OperatorPoly { terms, canonical: false }
    }

    pub fn terms(&self) -> &[(Word<L>, C64)] {
        &self.terms
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical
    }

    /// True if every coefficient is below [`ZERO_TOL`].
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(_, c)| c.norm() <= ZERO_TOL)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_word_len(&self) -> usize {
        self.terms.iter().map(|(w, _)| w.len()).max().unwrap_or(0)
    }

    /// Coefficient of the empty word.
    pub fn constant(&self) -> C64 {
        self.terms.iter().filter(|(w, _)| w.is_empty()).map(|(_, c)| *c).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self::from_terms(terms).normal_order()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: impl Into<C64>) -> Self {
        let s = s.into();
        let terms = self.terms.iter().map(|(w, c)| (w.clone(), c * s)).collect();
        OperatorPoly { terms, canonical: false }.normal_order()
    }

    /// Raw product: words concatenated, not normal-ordered.
    pub fn mul_raw(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for (w1, c1) in &self.terms {
            for (w2, c2) in &other.terms {
                let mut w = w1.clone();
                w.extend(w2.iter().cloned());
                terms.push((w, c1 * c2));
            }
        }
        Self::from_terms(terms)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.mul_raw(other).normal_order()
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::scalar(1.0), |acc, _| acc.mul(self))
    }

    /// Letters reversed, daggers swapped, coefficients conjugated.
    pub fn adjoint(&self) -> Self {
        self.reversed(true)
    }

    /// Letters reversed and daggers swapped, coefficients unchanged.
    pub fn transpose(&self) -> Self {
        self.reversed(false)
    }

    fn reversed(&self, conj: bool) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(w, c)| {
                let w = w.iter().rev().map(|l| Letter::new(l.species.dagger(), l.label.clone())).collect();
                (w, if conj { c.conj() } else { *c })
            })
            .collect();
        Self::from_terms(terms).normal_order()
    }

    /// Maps every letter; the result is normal-ordered.
    pub fn map_letters<M: Label>(&self, f: impl Fn(&Letter<L>) -> Letter<M>) -> OperatorPoly<M> {
        let terms = self.terms.iter().map(|(w, c)| (w.iter().map(&f).collect(), *c)).collect();
        OperatorPoly::from_terms(terms).normal_order()
    }

    /// Drops terms whose coefficient is below `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let terms = self.terms.iter().filter(|(_, c)| c.norm() > tol).cloned().collect();
        OperatorPoly { terms, canonical: self.canonical }
    }

    /// Canonical form: per-slot normal order, like words merged, terms in
    /// print order, coefficients below [`ZERO_TOL`] removed.
    pub fn normal_order(&self) -> Self {
        if self.canonical {
            return self.clone();
        }
        let mut acc: HashMap<Word<L>, C64> = HashMap::new();
        let mut order: Vec<Word<L>> = Vec::new();
        for (w, c) in &self.terms {
            if *c == C64::new(0.0, 0.0) {
                continue;
            }
            for (nw, f) in normal_order_word(w) {
                match acc.get_mut(&nw) {
                    Some(v) => *v += c * f,
                    None => {
                        acc.insert(nw.clone(), c * f);
                        order.push(nw);
                    }
                }
            }
        }
        let mut terms: Vec<(Word<L>, C64)> = order
            .into_iter()
            .filter_map(|w| {
                let c = acc[&w];
                (c.norm() > ZERO_TOL).then_some((w, c))
            })
            .collect();
        terms.sort_by(|x, y| print_order(&x.0, &y.0));
        OperatorPoly { terms, canonical: true }
    }

    /// Exact structural equality of canonical forms up to [`ZERO_TOL`].
    pub fn approx_eq(&self, other: &Self) -> bool {
        self.sub(other).is_zero()
    }

    /// Distinct slots appearing in the polynomial, sorted.
    pub fn slots(&self) -> Vec<(L, Channel)> {
        let mut s: Vec<_> = self.terms.iter().flat_map(|(w, _)| w.iter().map(Letter::slot)).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// `normal_order(P Q − Q P)`.
pub fn commutator<L: Label>(p: &OperatorPoly<L>, q: &OperatorPoly<L>) -> OperatorPoly<L> {
    let pq = p.mul_raw(q);
    let qp = q.mul_raw(p).scale_raw(-1.0);
    let mut terms = pq.terms;
    terms.extend(qp.terms);
    OperatorPoly::from_terms(terms).normal_order()
}

impl<L: Label> OperatorPoly<L> {
    fn scale_raw(&self, s: f64) -> Self {
        let terms = self.terms.iter().map(|(w, c)| (w.clone(), c * s)).collect();
        Self::from_terms(terms)
    }
}

fn creations<L>(w: &Word<L>) -> usize {
    w.iter().filter(|l| l.species.is_creation()).count()
}

// Empty word last; then by slot list, creation count (descending), length,
// and finally the letters themselves.
fn print_order<L: Label>(x: &Word<L>, y: &Word<L>) -> Ordering {
    let slots = |w: &Word<L>| {
        let mut s: Vec<(L, Channel)> = w.iter().map(Letter::slot).collect();
        s.dedup();
        s
    };
    x.is_empty()
        .cmp(&y.is_empty())
        .then_with(|| slots(x).cmp(&slots(y)))
        .then_with(|| creations(y).cmp(&creations(x)))
        .then_with(|| x.len().cmp(&y.len()))
        .then_with(|| x.cmp(y))
}

fn normal_order_word<L: Label>(w: &Word<L>) -> Vec<(Word<L>, f64)> {
    let mut slots: BTreeMap<(L, Channel), Vec<Species>> = BTreeMap::new();
    for l in w {
        slots.entry(l.slot()).or_default().push(l.species);
    }
    let mut out: Vec<(Word<L>, f64)> = vec![(Vec::new(), 1.0)];
    for ((label, ch), species) in slots {
        let local = order_slot(ch, &species);
        let mut next = Vec::with_capacity(out.len() * local.len());
        for (prefix, c0) in &out {
            for (sp, c1) in &local {
                let mut word = prefix.clone();
                word.extend(sp.iter().map(|&s| Letter::new(s, label.clone())));
                next.push((word, c0 * c1));
            }
        }
        out = next;
    }
    out
}

// Normal order of letters sharing one slot. Coefficients are integers.
fn order_slot(ch: Channel, species: &[Species]) -> Vec<(Vec<Species>, f64)> {
    let physical = species.iter().any(|s| s.is_physical());
    let clean = species.iter().any(|s| s.is_clean());
    if physical && clean {
        return vec![(species.to_vec(), 1.0)];
    }
    if physical {
        let (cre, ann) = Species::physical(ch);
        // (k, l) ↦ coefficient of (a⁺)^k a^l.
        let mut cur: BTreeMap<(usize, usize), f64> = BTreeMap::from([((0, 0), 1.0)]);
        let right_mul = |cur: &BTreeMap<(usize, usize), f64>, s: Species| {
            let mut next = BTreeMap::new();
            for (&(k, l), &c) in cur {
                if s.is_creation() {
                    // a^l a⁺ = a⁺ a^l + l a^{l−1}
                    *next.entry((k + 1, l)).or_insert(0.0) += c;
                    if l > 0 {
                        *next.entry((k, l - 1)).or_insert(0.0) += l as f64 * c;
                    }
                } else {
                    *next.entry((k, l + 1)).or_insert(0.0) += c;
                }
            }
            next
        };
        for &s in species {
            cur = if s == Species::N {
                let t = right_mul(&cur, cre);
                right_mul(&t, ann)
            } else {
                right_mul(&cur, s)
            };
        }
        return cur
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|((k, l), c)| {
                let mut w = vec![cre; k];
                w.extend(std::iter::repeat(ann).take(l));
                (w, c)
            })
            .collect();
    }
    // (p, k, l) ↦ coefficient of N^p (c⁺)^k c^l.
    let mut cur: BTreeMap<(usize, usize, usize), f64> = BTreeMap::from([((0, 0, 0), 1.0)]);
    for &s in species {
        let mut next = BTreeMap::new();
        for (&(p, k, l), &c) in &cur {
            match s {
                Species::C => *next.entry((p, k, l + 1)).or_insert(0.0) += c,
                // c c⁺ = 1.
                Species::Cd if l > 0 => *next.entry((p, k, l - 1)).or_insert(0.0) += c,
                Species::Cd => *next.entry((p, k + 1, 0)).or_insert(0.0) += c,
                // (c⁺)^k c^l N = (N + l − k)(c⁺)^k c^l.
                _ => {
                    *next.entry((p + 1, k, l)).or_insert(0.0) += c;
                    let shift = l as f64 - k as f64;
                    if shift != 0.0 {
                        *next.entry((p, k, l)).or_insert(0.0) += shift * c;
                    }
                }
            }
        }
        cur = next;
    }
    cur.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|((p, k, l), c)| {
            let mut w = vec![Species::N; p];
            w.extend(std::iter::repeat(Species::Cd).take(k));
            w.extend(std::iter::repeat(Species::C).take(l));
            (w, c)
        })
        .collect()
}

fn fmt_real(x: f64) -> String {
    format!("{x}")
}

fn fmt_coefficient(c: C64, has_word: bool) -> (bool, String) {
    if c.im == 0.0 {
        let mag = c.re.abs();
        let s = if has_word && mag == 1.0 { String::new() } else { fmt_real(mag) };
        (c.re < 0.0, s)
    } else if c.re == 0.0 {
        let mag = c.im.abs();
        let s = if mag == 1.0 { "i".to_string() } else { format!("{}i", fmt_real(mag)) };
        (c.im < 0.0, s)
    } else {
        let sign = if c.im < 0.0 { '-' } else { '+' };
        (false, format!("({}{sign}{}i)", fmt_real(c.re), fmt_real(c.im.abs())))
    }
}

impl<L: Label> fmt::Display for OperatorPoly<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (w, c)) in self.terms.iter().enumerate() {
            let (neg, mag) = fmt_coefficient(*c, !w.is_empty());
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            write!(f, "{mag}")?;
            for (j, l) in w.iter().enumerate() {
                if j > 0 || !mag.is_empty() {
                    write!(f, " ")?;
                }
                write!(f, "{l}")?;
            }
        }
        Ok(())
    }
}

/// Basis slot of a letter, given the basis layout.
pub fn basis_slot(basis: &FockBasis, label: usize, ch: Channel) -> Result<usize> {
    let modes = basis.modes();
    match (basis.layout(), ch) {
        (Layout::Plain, Channel::A) if label < basis.n() => Ok(label),
        (Layout::Plain, Channel::B) => {
            Err(Error::Slot(format!("b-letters need a paired basis, got b{label} on a plain one")))
        }
        (_, Channel::A) if label < modes => Ok(label),
        (_, Channel::B) if label < modes => Ok(modes + label),
        _ => Err(Error::Slot(format!("label {label} out of range for a basis with {modes} modes"))),
    }
}

// Moves creation letters left past letters of other slots, which commute
// with them, so every annihilator acts before any creator can push an
// intermediate image past the cutoff. Same-slot order is untouched.
fn creations_first<L: Label>(w: &Word<L>) -> Word<L> {
    let mut w = w.clone();
    let mut swapped = true;
    while swapped {
        swapped = false;
        for i in 1..w.len() {
            let (x, y) = (&w[i - 1], &w[i]);
            if y.species.is_creation() && !x.species.is_creation() && x.slot() != y.slot() {
                w.swap(i - 1, i);
                swapped = true;
            }
        }
    }
    w
}

/// Sum of the matrices of each word, letters applied right to left after
/// annihilators are moved to the right of other slots' creators.
///
/// Consequently a normal-ordered word and its adjoint materialize to exact
/// adjoints of each other at any cutoff.
pub fn materialize(p: &Poly, basis: &Arc<FockBasis>) -> Result<FockMatrix> {
    let mut trip = Vec::new();
    let mut e = vec![0u8; basis.n()];
    for (w, coef) in p.terms() {
        let letters = creations_first(w)
            .iter()
            .rev()
            .map(|l| Ok((basis_slot(basis, l.label, l.species.channel())?, l.species.elementary())))
            .collect::<Result<Vec<_>>>()?;
        'col: for col in 0..basis.size() {
            e.copy_from_slice(basis.exponents(col));
            let mut deg = basis.degree(col);
            // Ladder factors multiply under one square root, so that e.g.
            // a⁺a yields exact integers.
            let (mut lin, mut sq) = (1.0, 1.0);
            for &(slot, op) in &letters {
                match apply_elementary(&mut e, &mut deg, basis.cutoff(), slot, op) {
                    Some((x, true)) => sq *= x,
                    Some((x, false)) => lin *= x,
                    None => continue 'col,
                }
            }
            let row = basis.position(&e).expect("degree tracked within cutoff");
            trip.push((row, col, coef * (lin * sq.sqrt())));
        }
    }
    Ok(FockMatrix::from_triplets(basis.clone(), MatrixKind::Operator, trip))
}

/// `Σ_k coef_k · slot_k` with every letter on channel `A`: convenient for
/// linear forms such as `Σ s_k a_k`.
pub fn linear_form(species: Species, coefs: &[f64]) -> Poly {
    let terms = coefs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(k, &c)| (vec![Letter::new(species, k)], C64::new(c, 0.0)))
        .collect();
    Poly::from_terms(terms).normal_order()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Poly {
        parse_op(s).unwrap()
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(p("a0 ad0").normal_order().to_string(), "ad0 a0 + 1");
        assert_eq!(p("ad0 a0").normal_order().to_string(), "ad0 a0");
        let lhs = commutator(&p("ad0 ad0 ad0"), &p("a0"));
        assert_eq!(lhs.to_string(), "-3 ad0 ad0");
        assert_eq!(commutator(&p("a0"), &p("ad0")).to_string(), "1");
        assert_eq!(commutator(&p("ad0 a0"), &p("ad0 a0")).to_string(), "0");
        assert_eq!(commutator(&p("a0 a0"), &p("ad0")).to_string(), "2 a0");
    }

    #[test]
    fn clean_letters_and_number_operators() {
        assert_eq!(p("c0 cd0").normal_order().to_string(), "1");
        assert_eq!(p("c0 N0").normal_order().to_string(), "c0 + N0 c0");
        assert_eq!(p("N0 a0").normal_order().to_string(), "ad0 a0 a0");
        assert_eq!(p("c0 a0").normal_order().to_string(), "c0 a0");
    }

    #[test]
    fn slots_commute() {
        assert_eq!(p("a1 ad0").normal_order().to_string(), "ad0 a1");
        assert_eq!(p("b0 a0").normal_order().to_string(), "a0 b0");
    }

    #[test]
    fn adjoint_and_transpose() {
        let x = p("2i ad0 a1 a1");
        assert_eq!(x.adjoint().to_string(), "-2i a0 ad1 ad1");
        assert_eq!(x.transpose().to_string(), "2i a0 ad1 ad1");
    }

    #[test]
    fn materialize_examples() {
        let b = Arc::new(crate::fock::enumerate_basis(1, 3).unwrap());
        for s in ["N0", "ad0 a0"] {
            let m = materialize(&p(s), &b).unwrap();
            for i in 0..4 {
                assert_eq!(m.get(i, i).re, i as f64);
            }
            assert_eq!(m.nnz(), 3);
        }
        assert_eq!(materialize(&Poly::zero(), &b).unwrap().nnz(), 0);
        assert!(matches!(materialize(&p("a1"), &b), Err(Error::Slot(_))));
    }

    #[test]
    fn momentum_printing() {
        let pm = Momentum::atom("p").sub(&Momentum::atom("q"));
        assert_eq!(pm.to_string(), "p-q");
        assert_eq!(pm.negated().to_string(), "-p+q");
        let w = OperatorPoly::letter(Species::A, pm);
        assert_eq!(w.normal_order().to_string(), "a(p-q)");
    }
}
