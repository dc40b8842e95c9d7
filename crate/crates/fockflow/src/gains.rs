//! Gain operators of every representation, built symbolically.
//!
//! Slot conventions:
//!
//! * order-1 systems use plain slots `0..n`;
//! * order-2 systems in the real pair layout use `a_i` for `X_i` and `b_i`
//!   for `X'_i / m_i`; moment (`u`) kinds instead use the plain first-order
//!   system over `(X, X'/m)` because clean letters carry no second channel;
//! * order-2 systems in the conjugate pair layout use `a_i` for
//!   `sqrt(m_i) X⁺_i` and `b_i` for `sqrt(m_i) X⁻_i`.
//!
//! "Lowering" means no word raises total degree, so in the graded order the
//! materialized matrix never maps a degree to a higher one; "raising" is the
//! reverse. The ladder letters make this a property of the words alone.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{pure_w, FockBasis, FockMatrix, FockVector, Layout, MatrixKind, VectorKind, C64};
use crate::ops::{
    apply_rewrite, null_residual, reduce, Channel, Letter, NullReport, Pairing, Poly, RewriteRule,
    Species,
};
use crate::sysspec::{real_form, Potential, SystemSpec};

/// Representation selected on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepKind {
    U,
    V,
    W,
    Z,
    Bu,
    Bv,
    Bw,
    Su,
    Sv,
    Sw,
    Sz,
}

impl RepKind {
    pub fn from_name(s: &str) -> Option<RepKind> {
        Some(match s {
            "u" => RepKind::U,
            "v" => RepKind::V,
            "w" => RepKind::W,
            "z" => RepKind::Z,
            "bu" => RepKind::Bu,
            "bv" => RepKind::Bv,
            "bw" => RepKind::Bw,
            "Su" => RepKind::Su,
            "Sv" => RepKind::Sv,
            "Sw" => RepKind::Sw,
            "Sz" => RepKind::Sz,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            RepKind::U => "u",
            RepKind::V => "v",
            RepKind::W => "w",
            RepKind::Z => "z",
            RepKind::Bu => "bu",
            RepKind::Bv => "bv",
            RepKind::Bw => "bw",
            RepKind::Su => "Su",
            RepKind::Sv => "Sv",
            RepKind::Sw => "Sw",
            RepKind::Sz => "Sz",
        }
    }

    /// The primal representation whose gain this one is built from.
    pub fn primal(self) -> RepKind {
        match self {
            RepKind::U | RepKind::Bu | RepKind::Su => RepKind::U,
            RepKind::V | RepKind::Bv | RepKind::Sv => RepKind::V,
            RepKind::W | RepKind::Bw | RepKind::Sw => RepKind::W,
            RepKind::Z | RepKind::Sz => RepKind::Z,
        }
    }

    pub fn is_dual(self) -> bool {
        matches!(self, RepKind::Bu | RepKind::Bv | RepKind::Bw)
    }

    pub fn is_entropy_matrix(self) -> bool {
        matches!(self, RepKind::Su | RepKind::Sv | RepKind::Sw | RepKind::Sz)
    }

    pub fn vector_kind(self) -> VectorKind {
        match self {
            RepKind::U => VectorKind::U,
            RepKind::V => VectorKind::V,
            RepKind::W => VectorKind::W,
            RepKind::Z => VectorKind::Z,
            RepKind::Bu => VectorKind::Bu,
            RepKind::Bv => VectorKind::Bv,
            RepKind::Bw => VectorKind::Bw,
            _ => VectorKind::Generic,
        }
    }

    pub fn matrix_kind(self) -> MatrixKind {
        match self {
            RepKind::Su => MatrixKind::Su,
            RepKind::Sv => MatrixKind::Sv,
            RepKind::Sw => MatrixKind::Sw,
            RepKind::Sz => MatrixKind::Sz,
            _ => MatrixKind::Gain,
        }
    }
}

impl fmt::Display for RepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Triangularity {
    /// No word raises degree (and some word lowers it).
    Lowering,
    /// No word lowers degree (and some word raises it).
    Raising,
    /// Every word preserves degree.
    Preserving,
    /// `P + P^†` normal-orders to zero.
    Skew,
    Mixed,
}

/// Classifies from the normal-ordered words; skewness is checked first.
pub fn classify(p: &Poly) -> Triangularity {
    let p = p.normal_order();
    if p.add(&p.adjoint()).is_zero() && !p.is_zero() {
        return Triangularity::Skew;
    }
    let shifts: Vec<isize> = p
        .terms()
        .iter()
        .map(|(w, _)| {
            w.iter()
                .map(|l| match l.species {
                    s if s.is_creation() => 1,
                    Species::N => 0,
                    _ => -1,
                })
                .sum()
        })
        .collect();
    let lo = shifts.iter().copied().min().unwrap_or(0);
    let hi = shifts.iter().copied().max().unwrap_or(0);
    match (lo, hi) {
        (0, 0) => Triangularity::Preserving,
        (_, h) if h <= 0 => Triangularity::Lowering,
        (l, _) if l >= 0 => Triangularity::Raising,
        _ => Triangularity::Mixed,
    }
}

/// Exogenous source terms of dual and entropy flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum Source {
    Zero,
    /// The polynomial `div f(X)` placed on the monomials it touches.
    Moments { divergence: String },
    /// `e^{½|X|²} div f(X)`, expanded in scaled moments and truncated.
    Damped { divergence: String },
    /// `k|0⟩⟨0| + |0⟩s^H + s⟨0|` with `s` the moment vector of `−div f`
    /// minus its constant.
    Matrix { k: f64, divergence: String },
    /// No closed-form source is implemented for this case.
    NotComputed,
}

/// Everything needed to evolve one representation.
#[derive(Clone, Debug)]
pub struct GainBundle {
    pub kind: RepKind,
    pub layout: Layout,
    /// For `b` kinds: the entropy vector (log-density) rather than the
    /// density dual.
    pub entropy: bool,
    /// The system whose slots the gain refers to (the first-order form for
    /// moment kinds of order-2 systems).
    pub spec: SystemSpec,
    /// Vector flows use `∂_t x = G x − src`; entropy matrices use
    /// `∂_t S = G S + S G^H − src` with `G` already negated and adjointed.
    pub gain: Poly,
    pub source: Source,
    /// Divergence polynomial in the representation's annihilators.
    pub divergence: Poly,
    pub triangularity: Triangularity,
    pub diagnostics: Diagnostics,
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    /// `P + P^†`, for reified gains.
    pub skew_defect: Option<Poly>,
    /// `λ` with `reduce(P + P^†) = λ · div f` in slot variables.
    pub compression_multiple: Option<f64>,
    /// `|reduce(P + P^†) − λ div f|`, largest coefficient.
    pub compression_residual: Option<f64>,
}

impl GainBundle {
    pub fn materialize(&self, basis: &Arc<FockBasis>) -> Result<FockMatrix> {
        Ok(crate::ops::materialize(&self.gain, basis)?.with_kind(MatrixKind::Gain))
    }

    /// The basis layout the gain's slots address.
    pub fn basis(&self, cutoff: usize) -> Result<Arc<FockBasis>> {
        let n = if self.layout == Layout::Plain { self.spec.n } else { 2 * self.spec.n };
        Ok(Arc::new(FockBasis::new(n, cutoff, self.layout)?))
    }

    pub fn source_vector(&self, basis: &Arc<FockBasis>) -> Result<Option<FockVector>> {
        let scaled = self.kind.primal() != RepKind::U;
        let coeffs = match &self.source {
            Source::Zero => return Ok(Some(FockVector::zeros(basis.clone(), self.kind.vector_kind()))),
            Source::Moments { .. } => moment_coefficients(&self.divergence, basis, scaled, false)?,
            Source::Damped { .. } => moment_coefficients(&self.divergence, basis, true, true)?,
            _ => return Ok(None),
        };
        Ok(Some(FockVector { basis: basis.clone(), coeffs, kind: self.kind.vector_kind() }))
    }

    pub fn source_matrix(&self, basis: &Arc<FockBasis>) -> Result<Option<FockMatrix>> {
        match &self.source {
            Source::Zero => Ok(Some(FockMatrix::zeros(basis.clone(), self.kind.matrix_kind()))),
            Source::Matrix { k, .. } => {
                let scaled = self.kind.primal() != RepKind::U;
                let s = moment_coefficients(&self.divergence, basis, scaled, false)?;
                let mut trip = vec![(0, 0, C64::new(*k, 0.0))];
                for (pos, v) in s.iter().enumerate().skip(1) {
                    if *v != C64::new(0.0, 0.0) {
                        trip.push((0, pos, -v.conj()));
                        trip.push((pos, 0, -*v));
                    }
                }
                Ok(Some(FockMatrix::from_triplets(basis.clone(), self.kind.matrix_kind(), trip)))
            }
            _ => Ok(None),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind.name(),
            "entropy": self.entropy,
            "layout": self.layout,
            "gain": self.gain.to_string(),
            "source": self.source,
            "triangularity": self.triangularity,
            "diagnostics": {
                "skew_defect": self.diagnostics.skew_defect.as_ref().map(|p| p.to_string()),
                "compression_multiple": self.diagnostics.compression_multiple,
                "compression_residual": self.diagnostics.compression_residual,
            },
        })
    }
}

// Coefficients of a polynomial in the annihilators `a_k` as a moment vector:
// the coefficient of X^α at position α, times sqrt(α!) for scaled moments,
// optionally after multiplying by e^{½|X|²}.
fn moment_coefficients(p: &Poly, basis: &Arc<FockBasis>, scaled: bool, damped: bool) -> Result<Vec<C64>> {
    let n = basis.n();
    let mut coeffs = vec![C64::new(0.0, 0.0); basis.size()];
    let mut e = vec![0u8; n];
    for (w, c) in p.terms() {
        e.iter_mut().for_each(|x| *x = 0);
        for l in w {
            let slot = crate::ops::basis_slot(basis, l.label, l.species.channel())?;
            e[slot] += 1;
        }
        if let Some(pos) = basis.position(&e) {
            coeffs[pos] += c;
        }
    }
    if damped {
        // Multiply by Π_k Σ_j X_k^{2j} / (2^j j!), one slot at a time.
        for k in 0..n {
            let mut next = vec![C64::new(0.0, 0.0); basis.size()];
            for pos in 0..basis.size() {
                if coeffs[pos] == C64::new(0.0, 0.0) {
                    continue;
                }
                e.copy_from_slice(basis.exponents(pos));
                let mut f = 1.0;
                let mut j = 0;
                loop {
                    match basis.position(&e) {
                        Some(q) => next[q] += coeffs[pos] * f,
                        None => break,
                    }
                    j += 1;
                    f /= 2.0 * j as f64;
                    e[k] += 2;
                }
            }
            coeffs = next;
        }
    }
    if scaled {
        for (pos, c) in coeffs.iter_mut().enumerate() {
            let fact: f64 = basis.exponents(pos).iter().map(|&x| (1..=x as u32).map(f64::from).product::<f64>()).product();
            *c *= fact.sqrt();
        }
    }
    Ok(coeffs)
}

fn letter(s: Species, k: usize) -> Letter<usize> {
    Letter::new(s, k)
}

fn term(word: Vec<Letter<usize>>, c: f64) -> (Vec<Letter<usize>>, C64) {
    (word, C64::new(c, 0.0))
}

/// `Σ A_ij x_i y_j + Σ B_ijk x_i y_j y_k + Σ C_ijkl x_i y_j y_k y_l` with
/// `x_i` the given prefix word and `y` a single letter species.
fn tensor_sum(spec: &SystemSpec, prefix: &dyn Fn(usize) -> Vec<(Vec<Letter<usize>>, f64)>, y: Species) -> Poly {
    let n = spec.n;
    let mut terms = Vec::new();
    for i in 0..n {
        for (pw, pc) in prefix(i) {
            let push = |terms: &mut Vec<_>, idx: &[usize], coef: f64| {
                if coef != 0.0 {
                    let mut w = pw.clone();
                    w.extend(idx.iter().map(|&j| letter(y, j)));
                    terms.push(term(w, pc * coef));
                }
            };
            for j in 0..n {
                push(&mut terms, &[j], spec.a(i, j));
                for k in 0..n {
                    push(&mut terms, &[j, k], spec.b(i, j, k));
                    if spec.has_cubic() {
                        for l in 0..n {
                            push(&mut terms, &[j, k, l], spec.c(i, j, k, l));
                        }
                    }
                }
            }
        }
    }
    Poly::from_terms(terms).normal_order()
}

/// `div f` as a polynomial in `op_k`, for an order-1 system.
pub fn divergence_poly(spec: &SystemSpec, op: Species) -> Result<Poly> {
    if spec.order != 1 {
        return Err(Error::Order("divergence needs an order-1 system".into()));
    }
    let n = spec.n;
    let mut terms = vec![term(Vec::new(), (0..n).map(|i| spec.a(i, i)).sum())];
    for k in 0..n {
        let s: f64 = (0..n).map(|i| spec.b(i, i, k) + spec.b(i, k, i)).sum();
        terms.push(term(vec![letter(op, k)], s));
        if spec.has_cubic() {
            for l in 0..n {
                let s: f64 = (0..n).map(|i| spec.c(i, i, k, l) + spec.c(i, k, i, l) + spec.c(i, k, l, i)).sum();
                terms.push(term(vec![letter(op, k), letter(op, l)], s));
            }
        }
    }
    Ok(Poly::from_terms(terms).normal_order())
}

fn require_order1(spec: &SystemSpec) -> Result<()> {
    if spec.order != 1 {
        return Err(Error::Order(format!("system `{}` has order {}; expected order 1", spec.name, spec.order)));
    }
    Ok(())
}

/// `Σ A_ij N_i c_i⁺ c_j + Σ B_ijk N_i c_i⁺ c_j c_k (+ cubic)` on an order-1
/// system.
pub fn gain_u_poly(spec: &SystemSpec) -> Result<Poly> {
    require_order1(spec)?;
    Ok(tensor_sum(spec, &|i| vec![(vec![letter(Species::N, i), letter(Species::Cd, i)], 1.0)], Species::C))
}

/// `Σ A_ij a_i⁺ a_j + Σ B_ijk a_i⁺ a_j a_k (+ cubic)` on an order-1 system.
pub fn gain_v_poly(spec: &SystemSpec) -> Result<Poly> {
    require_order1(spec)?;
    Ok(tensor_sum(spec, &|i| vec![(vec![letter(Species::Ad, i)], 1.0)], Species::A))
}

/// `Σ A_ij (a_i⁺ − a_i) a_j + …`, built directly.
pub fn gain_w_poly(spec: &SystemSpec) -> Result<Poly> {
    require_order1(spec)?;
    Ok(tensor_sum(
        spec,
        &|i| vec![(vec![letter(Species::Ad, i)], 1.0), (vec![letter(Species::A, i)], -1.0)],
        Species::A,
    ))
}

/// Conjugate-pair scaled-moment gain of an order-2 system:
/// `i Σ m_k (a_k⁺a_k − b_k⁺b_k) − (i/2) Σ ((a_k⁺ − b_k⁺)/√m_k) f_k({(a_j + b_j)/√m_j})`
/// with `f` the interaction part (the `B` and `C` tensors).
pub fn conjugate_gain_v(spec: &SystemSpec) -> Result<Poly> {
    if spec.order != 2 || spec.masses.is_none() {
        return Err(Error::Order("the conjugate pair form needs an order-2 system with masses".into()));
    }
    let n = spec.n;
    let i1 = C64::new(0.0, 1.0);
    let mut terms = Vec::new();
    for k in 0..n {
        let m = spec.mass(k);
        terms.push((vec![letter(Species::Ad, k), letter(Species::A, k)], i1 * m));
        terms.push((vec![letter(Species::Bd, k), letter(Species::B, k)], -i1 * m));
    }
    let x = |j: usize| {
        let s = 1.0 / spec.mass(j).sqrt();
        vec![(letter(Species::A, j), s), (letter(Species::B, j), s)]
    };
    let mut push_product = |coef: C64, prefix_k: usize, idx: &[usize]| {
        if coef == C64::new(0.0, 0.0) {
            return;
        }
        let s = 1.0 / spec.mass(prefix_k).sqrt();
        let mut partial: Vec<(Vec<Letter<usize>>, C64)> = vec![
            (vec![letter(Species::Ad, prefix_k)], coef * s),
            (vec![letter(Species::Bd, prefix_k)], -coef * s),
        ];
        for &j in idx {
            let mut next = Vec::with_capacity(partial.len() * 2);
            for (w, c) in &partial {
                for (l, f) in x(j) {
                    let mut w2 = w.clone();
                    w2.push(l);
                    next.push((w2, c * f));
                }
            }
            partial = next;
        }
        terms.extend(partial);
    };
    let half_i = -0.5 * i1;
    for k in 0..n {
        for j in 0..n {
            for l in 0..n {
                push_product(half_i * spec.b(k, j, l), k, &[j, l]);
                if spec.has_cubic() {
                    for q in 0..n {
                        push_product(half_i * spec.c(k, j, l, q), k, &[j, l, q]);
                    }
                }
            }
        }
    }
    Ok(Poly::from_terms(terms).normal_order())
}

/// Moves plain slots `n..2n` to the `b` channel of labels `0..n`.
pub fn to_pair_labels(p: &Poly, n: usize) -> Result<Poly> {
    for (w, _) in p.terms() {
        if let Some(l) = w.iter().find(|l| !l.species.is_physical() || l.species.channel() != Channel::A) {
            return Err(Error::Slot(format!("cannot move letter {l} to a paired label")));
        }
    }
    Ok(p.map_letters(|l| {
        if l.label >= n {
            let s = if l.species == Species::Ad { Species::Bd } else { Species::B };
            Letter::new(s, l.label - n)
        } else {
            l.clone()
        }
    }))
}

/// The layout a representation uses by default for a system.
pub fn default_layout(spec: &SystemSpec, kind: RepKind) -> Layout {
    match (spec.order, kind.primal()) {
        (1, _) | (_, RepKind::U) => Layout::Plain,
        _ if spec.masses.is_some() => Layout::ConjugatePairs,
        _ => Layout::RealPairs,
    }
}

/// The system and primal gain for one representation and layout.
fn primal_gain(spec: &SystemSpec, primal: RepKind, layout: Layout) -> Result<(SystemSpec, Poly)> {
    match (spec.order, layout) {
        (1, Layout::Plain) => {
            let g = match primal {
                RepKind::U => gain_u_poly(spec)?,
                RepKind::V => gain_v_poly(spec)?,
                RepKind::W => gain_w_poly(spec)?,
                _ => apply_rewrite(&gain_v_poly(spec)?, &RewriteRule::Reify1)?,
            };
            Ok((spec.clone(), g))
        }
        (1, _) => Err(Error::Order("paired layouts need an order-2 system".into())),
        (_, Layout::Plain) => {
            if primal != RepKind::U {
                return Err(Error::Invalid(
                    "order-2 systems use a paired layout for scaled kinds; plain slots are for moments".into(),
                ));
            }
            let first = real_form(spec);
            let g = gain_u_poly(&first)?;
            Ok((first, g))
        }
        (_, Layout::RealPairs) => {
            if primal == RepKind::U {
                return Err(Error::Invalid("moment kinds of order-2 systems use the plain layout".into()));
            }
            let first = real_form(spec);
            let v = to_pair_labels(&gain_v_poly(&first)?, spec.n)?;
            let g = match primal {
                RepKind::V => v,
                RepKind::W => apply_rewrite(&v, &RewriteRule::SHalf)?,
                _ => apply_rewrite(&v, &RewriteRule::Reify1)?,
            };
            Ok((spec.clone(), g))
        }
        (_, Layout::ConjugatePairs) => {
            if primal == RepKind::U {
                return Err(Error::Invalid("moment kinds of order-2 systems use the plain layout".into()));
            }
            let v = conjugate_gain_v(spec)?;
            let mix = if spec.lattice.is_some() { RewriteRule::Kg } else { RewriteRule::Mix2 };
            let g = match primal {
                RepKind::V => v,
                RepKind::W => apply_rewrite(&v, &RewriteRule::MixRaise)?,
                _ => apply_rewrite(&v, &mix)?,
            };
            Ok((spec.clone(), g))
        }
    }
}

// div f in the annihilators of the layout: `c` for moment kinds, `a` (and,
// in the real pair layout, `b` for the velocity block) otherwise.
fn layout_divergence(spec: &SystemSpec, slots_spec: &SystemSpec, kind: RepKind, layout: Layout) -> Result<Poly> {
    let op = if kind.primal() == RepKind::U { Species::C } else { Species::A };
    match (spec.order, layout) {
        (1, _) | (_, Layout::Plain) => divergence_poly(slots_spec, op),
        (_, Layout::RealPairs) => to_pair_labels(&divergence_poly(&real_form(spec), Species::A)?, spec.n),
        // Order-2 systems are divergence-free.
        _ => Ok(Poly::zero()),
    }
}

/// The bundle for one representation; `b` kinds are density duals.
pub fn gain(spec: &SystemSpec, kind: RepKind, layout: Layout) -> Result<GainBundle> {
    build(spec, kind, layout, false)
}

/// Entropy flows: `b` kinds as log-density vectors, `S` kinds as matrices.
pub fn entropy_gain(spec: &SystemSpec, kind: RepKind, layout: Layout) -> Result<GainBundle> {
    if !kind.is_dual() && !kind.is_entropy_matrix() {
        return Err(Error::Invalid(format!("`{kind}` is not an entropy representation")));
    }
    build(spec, kind, layout, true)
}

fn build(spec: &SystemSpec, kind: RepKind, layout: Layout, entropy: bool) -> Result<GainBundle> {
    let (slots_spec, primal) = primal_gain(spec, kind.primal(), layout)?;
    let divergence = layout_divergence(spec, &slots_spec, kind, layout)?;
    let compressive = !divergence.is_zero();
    let mut diagnostics = Diagnostics::default();
    let (gain, source) = match kind {
        RepKind::U | RepKind::V | RepKind::W => (primal, Source::Zero),
        RepKind::Z => {
            let defect = primal.add(&primal.adjoint());
            let pairing = if layout == Layout::ConjugatePairs { Pairing::Conjugate } else { Pairing::Real };
            let reduced = reduce(&defect, pairing)?;
            let div_reduced = reduce(&divergence, pairing)?;
            let (lambda, resid) = best_multiple(&reduced, &div_reduced);
            diagnostics.skew_defect = Some(defect);
            diagnostics.compression_multiple = lambda;
            diagnostics.compression_residual = Some(resid);
            (primal, Source::Zero)
        }
        RepKind::Bu | RepKind::Bv | RepKind::Bw if !entropy => {
            (primal.add(&divergence).adjoint().scale(-1.0), Source::Zero)
        }
        RepKind::Bu | RepKind::Bv | RepKind::Bw => {
            let src = if !compressive {
                Source::Zero
            } else if kind == RepKind::Bw {
                Source::Damped { divergence: divergence.to_string() }
            } else {
                Source::Moments { divergence: divergence.to_string() }
            };
            (primal.adjoint().scale(-1.0), src)
        }
        RepKind::Su | RepKind::Sv | RepKind::Sw | RepKind::Sz => {
            if kind == RepKind::Sz && compressive {
                return Err(Error::Invalid(
                    "the reified entropy matrix is only defined for noncompressive systems".into(),
                ));
            }
            let src = if !compressive {
                Source::Zero
            } else if kind == RepKind::Su {
                Source::Matrix { k: -2.0 * divergence.constant().re, divergence: divergence.to_string() }
            } else {
                Source::NotComputed
            };
            (primal.adjoint().scale(-1.0), src)
        }
    };
    let triangularity = classify(&gain);
    Ok(GainBundle { kind, layout, entropy, spec: slots_spec, gain, source, divergence, triangularity, diagnostics })
}

/// `λ` minimizing `|p − λ q|` over coefficients, and the residual.
fn best_multiple(p: &Poly, q: &Poly) -> (Option<f64>, f64) {
    if q.is_zero() {
        let r = p.terms().iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        return (None, r);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, c) in q.terms() {
        let pc: C64 = p.terms().iter().filter(|(pw, _)| pw == w).map(|(_, c)| *c).sum();
        num += (pc * c.conj()).re;
        den += c.norm_sqr();
    }
    let lambda = num / den;
    let r = p.sub(&q.scale(lambda)).terms().iter().map(|(_, c)| c.norm()).fold(0.0, f64::max);
    (Some(lambda), r)
}

pub fn gain_u(spec: &SystemSpec) -> Result<GainBundle> {
    gain(spec, RepKind::U, default_layout(spec, RepKind::U))
}

pub fn gain_v(spec: &SystemSpec) -> Result<GainBundle> {
    gain(spec, RepKind::V, default_layout(spec, RepKind::V))
}

pub fn gain_w(spec: &SystemSpec) -> Result<GainBundle> {
    gain(spec, RepKind::W, default_layout(spec, RepKind::W))
}

pub fn gain_z(spec: &SystemSpec) -> Result<GainBundle> {
    gain(spec, RepKind::Z, default_layout(spec, RepKind::Z))
}

pub fn gain_dual(spec: &SystemSpec, kind: RepKind) -> Result<GainBundle> {
    if !kind.is_dual() {
        return Err(Error::Invalid(format!("`{kind}` is not a dual representation")));
    }
    gain(spec, kind, default_layout(spec, kind))
}

pub fn entropy_dynamics(spec: &SystemSpec, kind: RepKind) -> Result<GainBundle> {
    entropy_gain(spec, kind, default_layout(spec, kind))
}

/// Energy operators of a gradient order-2 system in the real pair layout.
#[derive(Clone, Debug)]
pub struct HamiltonianOps {
    /// `½ Σ m_k² b_k² + g(a)`.
    pub annihilation: Poly,
    /// `½ Σ m_k² b_k⁺ b_k + g(a)`.
    pub number: Poly,
    /// `½ (H + H^T)` of the first variant.
    pub symmetrized: Poly,
}

impl HamiltonianOps {
    pub fn variants(&self) -> [(&'static str, &Poly); 3] {
        [("annihilation", &self.annihilation), ("number", &self.number), ("symmetrized", &self.symmetrized)]
    }
}

pub fn hamiltonian_ops(spec: &SystemSpec) -> Result<HamiltonianOps> {
    let pot = Potential::of(spec)?;
    let n = spec.n;
    let mut g_terms = Vec::new();
    for i in 0..n {
        for j in 0..n {
            g_terms.push(term(vec![letter(Species::A, i), letter(Species::A, j)], pot.quadratic()[i * n + j]));
            for k in 0..n {
                let c = pot.cubic()[(i * n + j) * n + k];
                g_terms.push(term(vec![letter(Species::A, i), letter(Species::A, j), letter(Species::A, k)], c));
                if let Some(q) = pot.quartic() {
                    for l in 0..n {
                        let w = vec![letter(Species::A, i), letter(Species::A, j), letter(Species::A, k), letter(Species::A, l)];
                        g_terms.push(term(w, q[((i * n + j) * n + k) * n + l]));
                    }
                }
            }
        }
    }
    let g = Poly::from_terms(g_terms).normal_order();
    let kinetic = |cre: bool| {
        let terms = (0..n)
            .map(|k| {
                let first = if cre { Species::Bd } else { Species::B };
                term(vec![letter(first, k), letter(Species::B, k)], 0.5 * spec.mass(k).powi(2))
            })
            .collect();
        Poly::from_terms(terms).normal_order()
    };
    let annihilation = kinetic(false).add(&g);
    let number = kinetic(true).add(&g);
    let symmetrized = annihilation.add(&annihilation.transpose()).scale(0.5);
    Ok(HamiltonianOps { annihilation, number, symmetrized })
}

/// Symbolic and numeric verdict on `G^T H + H G` being null, probing with
/// `probes` random pure states with entries in `[−1, 1]`.
pub fn conservation_check(
    h: &Poly,
    g: &Poly,
    spec: &SystemSpec,
    basis: &Arc<FockBasis>,
    probes: usize,
    seed: u64,
) -> Result<NullReport> {
    let k = g.transpose().mul(h).add(&h.mul(g));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = Vec::with_capacity(probes);
    for _ in 0..probes {
        let y: Vec<f64> = (0..spec.state_len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        states.push(pure_w(&y, basis, spec)?);
    }
    null_residual(&k, &states, Pairing::Real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::parse_op;

    fn logistic() -> SystemSpec {
        SystemSpec::first_order("logistic", 1, vec![1.0], vec![-1.0], None).unwrap()
    }

    fn oscillator(c: f64) -> SystemSpec {
        SystemSpec::second_order("osc", vec![1.0], vec![c], None).unwrap()
    }

    #[test]
    fn logistic_gains_print_as_expected() {
        let s = logistic();
        assert_eq!(gain_u(&s).unwrap().gain.to_string(), "N0 cd0 c0 - N0 cd0 c0 c0");
        assert_eq!(gain_v(&s).unwrap().gain.to_string(), "ad0 a0 - ad0 a0 a0");
        let w = gain_w(&s).unwrap().gain;
        let by_hand = parse_op("ad0 a0 - a0 a0 - ad0 a0 a0 + a0 a0 a0").unwrap().normal_order();
        assert!(w.approx_eq(&by_hand), "{w}");
        let via_rule = apply_rewrite(&gain_v(&s).unwrap().gain, &RewriteRule::SHalf).unwrap();
        assert!(w.approx_eq(&via_rule));
        assert_eq!(gain_u(&s).unwrap().triangularity, Triangularity::Lowering);
        assert_eq!(gain_dual(&s, RepKind::Bu).unwrap().triangularity, Triangularity::Raising);
    }

    #[test]
    fn zero_system_has_zero_gain() {
        let s = SystemSpec::first_order("zero", 2, vec![0.0; 4], vec![0.0; 8], None).unwrap();
        assert!(gain_w(&s).unwrap().gain.is_zero());
    }

    #[test]
    fn oscillator_conjugate_gain() {
        let g = gain_v(&oscillator(0.0)).unwrap().gain;
        assert_eq!(g.to_string(), "i ad0 a0 - i bd0 b0");
    }

    #[test]
    fn reified_cubic_oscillator_matches_substitution() {
        let z = gain_z(&oscillator(0.3)).unwrap();
        assert_eq!(z.triangularity, Triangularity::Skew);
        // i(a⁺a − b⁺b) − (0.3 i/2)(a⁺ − b − b⁺ + a)((a + b⁺ + b + a⁺)/2)².
        let s = parse_op("0.5 a0 + 0.5 bd0 + 0.5 b0 + 0.5 ad0").unwrap();
        let want = parse_op("i ad0 a0 - i bd0 b0")
            .unwrap()
            .sub(&parse_op("ad0 - b0 - bd0 + a0").unwrap().mul(&s).mul(&s).scale(C64::new(0.0, 0.15)));
        assert!(z.gain.approx_eq(&want));
    }

    #[test]
    fn logistic_reified_defect_is_the_divergence() {
        let z = gain_z(&logistic()).unwrap();
        assert_eq!(z.triangularity, Triangularity::Mixed);
        assert!((z.diagnostics.compression_multiple.unwrap() + 1.0).abs() < 1e-12);
        assert!(z.diagnostics.compression_residual.unwrap() < 1e-12);
    }

    #[test]
    fn entropy_sources() {
        let b = entropy_gain(&logistic(), RepKind::Bu, Layout::Plain).unwrap();
        let basis = b.basis(4).unwrap();
        let s = b.source_vector(&basis).unwrap().unwrap();
        assert_eq!(s.real(), vec![1.0, -2.0, 0.0, 0.0, 0.0]);
        let o = entropy_gain(&oscillator(0.3), RepKind::Sw, Layout::RealPairs).unwrap();
        assert_eq!(o.source, Source::Zero);
    }

    #[test]
    fn hamiltonian_and_conservation() {
        let spec = oscillator(0.3);
        let h = hamiltonian_ops(&spec).unwrap();
        let gw = gain(&spec, RepKind::W, Layout::RealPairs).unwrap().gain;
        let basis = Arc::new(FockBasis::new(2, 14, Layout::RealPairs).unwrap());
        for (_, hv) in h.variants() {
            let r = conservation_check(hv, &gw, &spec, &basis, 5, 7).unwrap();
            assert!(r.is_null, "{}", r.reduced);
            assert!(r.residual.unwrap() < 1e-8);
        }
        let curl = SystemSpec::second_order("curl", vec![1.0, 1.0], vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], None)
            .unwrap();
        assert!(matches!(hamiltonian_ops(&curl), Err(Error::NonGradient(_))));
    }
}
