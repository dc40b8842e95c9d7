//! Null operators: the reduced form and its numeric counterparts.
//!
//! For a pure state `w(y)` the pairing `w^T (a⁺)^k a^l w` depends only on
//! `y^{k+l}`, so replacing each per-slot factor `(a⁺)^k a^l` by `a^{k+l}`
//! decides whether an operator pairs to zero with every pure state.

use super::{materialize, Label, Letter, OperatorPoly, Poly, Species, Word};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockMatrix, FockVector, C64};

/// How a state is paired with itself.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// `w^T M w` with real slot coordinates: `a⁺` pairs like `a`.
    Real,
    /// `w^H M w` with conjugate-pair coordinates: `a⁺` pairs like `b` and
    /// `b⁺` like `a`.
    Conjugate,
}

/// Normal-orders, then replaces each slot's `(a⁺)^k a^l` by its paired
/// annihilation-only form. Number operators count as `a⁺a`.
pub fn reduce<L: Label>(p: &OperatorPoly<L>, pairing: Pairing) -> Result<OperatorPoly<L>> {
    let p = expand_number_ops(p).normal_order();
    let mut terms = Vec::with_capacity(p.len());
    for (w, c) in p.terms() {
        let mut out: Word<L> = Vec::with_capacity(w.len());
        for l in w {
            if l.species.is_clean() {
                return Err(Error::Invalid(format!("cannot reduce clean letter {l}")));
            }
            let species = match (pairing, l.species) {
                (Pairing::Real, s) => Species::physical(s.channel()).1,
                (Pairing::Conjugate, Species::Ad) => Species::B,
                (Pairing::Conjugate, Species::Bd) => Species::A,
                (Pairing::Conjugate, s) => s,
            };
            out.push(Letter::new(species, l.label.clone()));
        }
        terms.push((out, *c));
    }
    Ok(OperatorPoly::from_terms(terms).normal_order())
}

pub(super) fn expand_number_ops<L: Label>(p: &OperatorPoly<L>) -> OperatorPoly<L> {
    let terms = p
        .terms()
        .iter()
        .map(|(w, c)| {
            let mut out = Vec::with_capacity(w.len());
            for l in w {
                if l.species == Species::N && !w.iter().any(|x| x.label == l.label && x.species.is_clean()) {
                    out.push(Letter::new(Species::Ad, l.label.clone()));
                    out.push(Letter::new(Species::A, l.label.clone()));
                } else {
                    out.push(l.clone());
                }
            }
            (out, *c)
        })
        .collect();
    OperatorPoly::from_terms(terms)
}

/// `reduce(P) ≡ 0` up to the coefficient threshold.
pub fn is_null<L: Label>(p: &OperatorPoly<L>, pairing: Pairing) -> Result<bool> {
    Ok(reduce(p, pairing)?.is_zero())
}

/// Symbolic and numeric null verdict for one operator.
#[derive(Clone, Debug)]
pub struct NullReport {
    pub reduced: Poly,
    pub is_null: bool,
    /// Largest `|interior pairing|` over the probe states, if any were given.
    pub residual: Option<f64>,
    /// Largest interior norm `Σ w_γ²` over the probe states, for scale.
    pub pairing_scale: Option<f64>,
}

// Splits a normal-ordered physical word into its creation letters (returned
// already transposed to annihilators) and its annihilation letters.
fn split_word(w: &Word<usize>) -> Result<(Word<usize>, Word<usize>)> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for l in w {
        if !l.species.is_physical() {
            return Err(Error::Invalid(format!("interior pairing needs physical letters, got {l}")));
        }
        if l.species.is_creation() {
            left.push(Letter::new(l.species.dagger(), l.label));
        } else {
            right.push(l.clone());
        }
    }
    Ok((left, right))
}

/// The pairing of `w` with itself through `P`, restricted to the interior.
///
/// Each normal-ordered term `(a⁺)^k a^l` is evaluated as
/// `Σ_γ (a^k w)_γ (a^l w)_γ` over `deg γ ≤ cutoff − p`, where `p` is the
/// longest word. For a pure state this equals `reduce(P)(y) · Σ_γ w_γ²`
/// exactly, so null operators pair to rounding error regardless of the
/// truncation tail.
pub fn interior_pairing(p: &Poly, w: &FockVector, pairing: Pairing) -> Result<C64> {
    let p = expand_number_ops(p).normal_order();
    let basis = &w.basis;
    let int = basis.interior_len(p.max_word_len());
    let mut total = C64::new(0.0, 0.0);
    for (word, c) in p.terms() {
        let (left, right) = split_word(word)?;
        let lv = materialize(&Poly::word(left), basis)?.matvec(&w.coeffs);
        let rv = materialize(&Poly::word(right), basis)?.matvec(&w.coeffs);
        let mut s = C64::new(0.0, 0.0);
        for g in 0..int {
            let l = if pairing == Pairing::Conjugate { lv[g].conj() } else { lv[g] };
            s += l * rv[g];
        }
        total += c * s;
    }
    Ok(total)
}

/// The trace form of [`interior_pairing`] against a density matrix
/// `ρ = Σ p_s w_s w_s^H`: the mixture average of the pure pairings.
pub fn interior_trace(p: &Poly, rho: &FockMatrix, pairing: Pairing) -> Result<C64> {
    let p = expand_number_ops(p).normal_order();
    let basis = &rho.basis;
    let int = basis.interior_len(p.max_word_len());
    let mut total = C64::new(0.0, 0.0);
    for (word, c) in p.terms() {
        let (left, right) = split_word(word)?;
        let lm = materialize(&Poly::word(left), basis)?;
        let rm = materialize(&Poly::word(right), basis)?;
        // Σ_γ Σ_r (R ρ)[γ, r] · L̄[γ, r]; with real coordinates ρ is
        // symmetric and no conjugate is needed.
        let x = rm.mul(rho);
        let mut s = C64::new(0.0, 0.0);
        for g in 0..int {
            for (r, v) in x.row(g) {
                let l = lm.get(g, r);
                s += v * if pairing == Pairing::Conjugate { l.conj() } else { l };
            }
        }
        total += c * s;
    }
    Ok(total)
}

/// Symbolic verdict plus the largest interior pairing over `states`.
pub fn null_residual(p: &Poly, states: &[FockVector], pairing: Pairing) -> Result<NullReport> {
    let reduced = reduce(p, pairing)?;
    let is_null = reduced.is_zero();
    let mut residual: Option<f64> = None;
    let mut scale: Option<f64> = None;
    for w in states {
        let r = interior_pairing(p, w, pairing)?.norm();
        residual = Some(residual.map_or(r, |m: f64| m.max(r)));
        let int = w.basis.interior_len(p.max_word_len());
        let norm: f64 = w.coeffs[..int].iter().map(|c| c.norm_sqr()).sum();
        scale = Some(scale.map_or(norm, |m: f64| m.max(norm)));
    }
    Ok(NullReport { reduced, is_null, residual, pairing_scale: scale })
}

/// A spanning set of null operators on `n` plain slots whose words have
/// total length `≤ max_degree`.
///
/// For each annihilation-only target `a^α`, the words
/// `Π_k (a_k⁺)^{β_k} a_k^{α_k−β_k}` with `β ≤ α` all reduce to `a^α`;
/// their differences from the `β = 0` word span the null operators over
/// that target. Linear independence within a target follows from distinct
/// normal-ordered words; completeness over all cutoffs is not claimed.
pub fn null_basis(n: usize, max_degree: usize) -> Result<Vec<Poly>> {
    let basis = FockBasis::new(n, max_degree, crate::fock::Layout::Plain)?;
    let mut out = Vec::new();
    for pos in 0..basis.size() {
        let alpha = basis.exponents(pos).to_vec();
        let base = word_for(&alpha, &vec![0; n]);
        let mut beta = vec![0u8; n];
        loop {
            // Advance β through the box β ≤ α (odometer order).
            let mut k = 0;
            while k < n {
                if beta[k] < alpha[k] {
                    beta[k] += 1;
                    break;
                }
                beta[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
            out.push(Poly::word(word_for(&alpha, &beta)).sub(&Poly::word(base.clone())));
        }
    }
    Ok(out)
}

fn word_for(alpha: &[u8], beta: &[u8]) -> Word<usize> {
    let mut w = Vec::new();
    for k in 0..alpha.len() {
        w.extend(std::iter::repeat(Letter::new(Species::Ad, k)).take(beta[k] as usize));
        w.extend(std::iter::repeat(Letter::new(Species::A, k)).take((alpha[k] - beta[k]) as usize));
    }
    w
}
