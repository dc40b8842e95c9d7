//! Similarity transforms as letter substitutions, with a matrix oracle.
//!
//! A transform `X ↦ L X L⁻¹` is an algebra automorphism, so it is fully
//! described by the images of the individual letters. Composite transforms
//! apply their parts in sequence: `Sequence([r1, r2])` is `L = L2 L1`.

use std::sync::Arc;

use super::reduce::expand_number_ops;
use super::{materialize, Channel, Label, Letter, OperatorPoly, Poly, Species};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockMatrix, Layout, MatrixKind, C64};

#[derive(Clone, Debug, PartialEq)]
pub enum RewriteRule {
    Identity,
    /// `a⁺ → a⁺ − a`, `a` fixed; both channels.
    SHalf,
    /// `a⁺ → a⁺ − a`, `a → ½(a + a⁺)`; both channels.
    Reify1,
    /// `a⁺ → a⁺ − b`, `b⁺ → b⁺ − a`, `a → ½(a + b⁺)`, `b → ½(b + a⁺)`.
    Mix2,
    /// [`RewriteRule::Mix2`] with every image label negated.
    Kg,
    /// `a(p) → a(p) − 2c a⁺(−p)`, `a⁺` fixed.
    FourDPlus(f64),
    /// `a⁺(p) → a⁺(p) + 2c a(±p)`, `a` fixed; `negate` selects `−p`.
    FourDMinus { c: f64, negate: bool },
    /// `a → a + ½a⁺`: conjugation by `exp(−¼ a⁺a⁺)`.
    ReifyLower,
    /// `a → a + ½b⁺`, `b → b + ½a⁺`: conjugation by `exp(−½ a⁺b⁺)`.
    MixLower,
    /// `a⁺ → a⁺ − b`, `b⁺ → b⁺ − a`: conjugation by `exp(−a b)`.
    MixRaise,
    /// Applies the rules in order.
    Sequence(Vec<RewriteRule>),
}

impl RewriteRule {
    pub fn name(&self) -> String {
        match self {
            RewriteRule::Identity => "identity".into(),
            RewriteRule::SHalf => "shalf".into(),
            RewriteRule::Reify1 => "reify1".into(),
            RewriteRule::Mix2 => "mix2".into(),
            RewriteRule::Kg => "kg".into(),
            RewriteRule::FourDPlus(c) => format!("4d-plus({c})"),
            RewriteRule::FourDMinus { c, negate } => {
                format!("4d-minus({c}{})", if *negate { ", negated" } else { "" })
            }
            RewriteRule::ReifyLower => "reify-lower".into(),
            RewriteRule::MixLower => "mix-lower".into(),
            RewriteRule::MixRaise => "mix-raise".into(),
            RewriteRule::Sequence(rs) => rs.iter().map(|r| r.name()).collect::<Vec<_>>().join(" then "),
        }
    }

    /// Rules selectable by name on the command line.
    pub fn from_name(name: &str) -> Option<RewriteRule> {
        Some(match name {
            "identity" => RewriteRule::Identity,
            "shalf" | "s-half" => RewriteRule::SHalf,
            "reify1" => RewriteRule::Reify1,
            "mix2" => RewriteRule::Mix2,
            "kg" => RewriteRule::Kg,
            "reify-lower" => RewriteRule::ReifyLower,
            "mix-lower" => RewriteRule::MixLower,
            "mix-raise" => RewriteRule::MixRaise,
            _ => return None,
        })
    }

    // Image of one letter; `None` leaves it unchanged.
    fn image<L: Label>(&self, l: &Letter<L>) -> Result<Option<OperatorPoly<L>>> {
        use Species::*;
        if l.species.is_clean() && *self != RewriteRule::Identity {
            return Err(Error::UnmatchedSpecies { rule: self.name(), species: l.species.name().into() });
        }
        let p = &l.label;
        let one = |s: Species, lab: &L, c: f64| (vec![Letter::new(s, lab.clone())], C64::new(c, 0.0));
        let poly = |terms: Vec<_>| Ok(Some(OperatorPoly::from_terms(terms)));
        let (cre, ann) = Species::physical(l.species.channel());
        let other = match l.species.channel() {
            Channel::A => Species::physical(Channel::B),
            Channel::B => Species::physical(Channel::A),
        };
        match (self, l.species) {
            (RewriteRule::Identity, _) => Ok(None),
            (RewriteRule::SHalf, Ad | Bd) => poly(vec![one(cre, p, 1.0), one(ann, p, -1.0)]),
            (RewriteRule::SHalf, _) => Ok(None),
            (RewriteRule::Reify1, Ad | Bd) => poly(vec![one(cre, p, 1.0), one(ann, p, -1.0)]),
            (RewriteRule::Reify1, A | B) => poly(vec![one(ann, p, 0.5), one(cre, p, 0.5)]),
            (RewriteRule::Mix2 | RewriteRule::Kg, s) => {
                let q = if *self == RewriteRule::Kg { p.negated() } else { p.clone() };
                if s.is_creation() {
                    poly(vec![one(cre, p, 1.0), one(other.1, &q, -1.0)])
                } else {
                    poly(vec![one(ann, p, 0.5), one(other.0, &q, 0.5)])
                }
            }
            (RewriteRule::FourDPlus(c), A | B) => poly(vec![one(ann, p, 1.0), one(cre, &p.negated(), -2.0 * c)]),
            (RewriteRule::FourDPlus(_), _) => Ok(None),
            (RewriteRule::FourDMinus { c, negate }, Ad | Bd) => {
                let q = if *negate { p.negated() } else { p.clone() };
                poly(vec![one(cre, p, 1.0), one(ann, &q, 2.0 * c)])
            }
            (RewriteRule::FourDMinus { .. }, _) => Ok(None),
            (RewriteRule::ReifyLower, A | B) => poly(vec![one(ann, p, 1.0), one(cre, p, 0.5)]),
            (RewriteRule::ReifyLower, _) => Ok(None),
            (RewriteRule::MixLower, A | B) => poly(vec![one(ann, p, 1.0), one(other.0, p, 0.5)]),
            (RewriteRule::MixLower, _) => Ok(None),
            (RewriteRule::MixRaise, Ad | Bd) => poly(vec![one(cre, p, 1.0), one(other.1, p, -1.0)]),
            (RewriteRule::MixRaise, _) => Ok(None),
            (RewriteRule::Sequence(_), _) => unreachable!("sequences are unrolled by apply_rewrite"),
            (_, N | Cd | C) => unreachable!("number operators are expanded and clean letters rejected"),
        }
    }

    // The conjugations this rule is built from, as (generator, rule) pairs.
    fn stages(&self, basis: &FockBasis) -> Result<Vec<(Poly, RewriteRule)>> {
        let slots = all_slots(basis);
        let sum = |f: &dyn Fn(usize, Channel) -> Vec<Letter<usize>>, c: f64, chans: &[Channel]| {
            let terms = slots
                .iter()
                .filter(|(_, ch)| chans.contains(ch))
                .map(|&(k, ch)| (f(k, ch), C64::new(c, 0.0)))
                .collect();
            Poly::from_terms(terms).normal_order()
        };
        let both = [Channel::A, Channel::B];
        let pair = |s: Species| move |k: usize, ch: Channel| {
            let sp = if ch == Channel::A { s } else { Species::physical(Channel::B).1 };
            vec![Letter::new(sp, k), Letter::new(sp, k)]
        };
        Ok(match self {
            RewriteRule::Identity => vec![(Poly::zero(), RewriteRule::Identity)],
            RewriteRule::SHalf => vec![(sum(&pair(Species::A), -0.5, &both), RewriteRule::SHalf)],
            RewriteRule::ReifyLower => vec![(sum(&creation_pair, -0.25, &both), RewriteRule::ReifyLower)],
            RewriteRule::Reify1 => vec![
                (sum(&creation_pair, -0.25, &both), RewriteRule::ReifyLower),
                (sum(&pair(Species::A), -0.5, &both), RewriteRule::SHalf),
            ],
            RewriteRule::Mix2 | RewriteRule::Kg | RewriteRule::MixLower | RewriteRule::MixRaise => {
                if basis.layout() == Layout::Plain {
                    return Err(Error::Slot(format!("rule {} needs a paired basis", self.name())));
                }
                let lower = sum(
                    &|k, _| vec![Letter::new(Species::Ad, k), Letter::new(Species::Bd, k)],
                    -0.5,
                    &[Channel::A],
                );
                let raise = sum(&|k, _| vec![Letter::new(Species::A, k), Letter::new(Species::B, k)], -1.0, &[Channel::A]);
                match self {
                    RewriteRule::MixLower => vec![(lower, RewriteRule::MixLower)],
                    RewriteRule::MixRaise => vec![(raise, RewriteRule::MixRaise)],
                    _ => vec![(lower, RewriteRule::MixLower), (raise, RewriteRule::MixRaise)],
                }
            }
            RewriteRule::FourDPlus(_) | RewriteRule::FourDMinus { .. } => {
                return Err(Error::Invalid(format!("rule {} is symbolic only", self.name())))
            }
            RewriteRule::Sequence(rs) => {
                let mut out = Vec::new();
                for r in rs {
                    out.extend(r.stages(basis)?);
                }
                out
            }
        })
    }
}

fn creation_pair(k: usize, ch: Channel) -> Vec<Letter<usize>> {
    let s = Species::physical(ch).0;
    vec![Letter::new(s, k), Letter::new(s, k)]
}

fn all_slots(basis: &FockBasis) -> Vec<(usize, Channel)> {
    let mut out: Vec<_> = (0..basis.modes()).map(|k| (k, Channel::A)).collect();
    if basis.layout() != Layout::Plain {
        out.extend((0..basis.modes()).map(|k| (k, Channel::B)));
    }
    out
}

/// Substitutes every letter by its image, then normal-orders.
pub fn apply_rewrite<L: Label>(p: &OperatorPoly<L>, rule: &RewriteRule) -> Result<OperatorPoly<L>> {
    if let RewriteRule::Sequence(rs) = rule {
        let mut cur = p.normal_order();
        for r in rs {
            cur = apply_rewrite(&cur, r)?;
        }
        return Ok(cur);
    }
    let p = expand_number_ops(p);
    let mut terms = Vec::new();
    for (w, c) in p.terms() {
        let mut acc = OperatorPoly::from_terms(vec![(Vec::new(), *c)]);
        for l in w {
            let img = rule.image(l)?.unwrap_or_else(|| OperatorPoly::word(vec![l.clone()]));
            acc = acc.mul_raw(&img);
        }
        terms.extend(acc.terms().iter().cloned());
    }
    Ok(OperatorPoly::from_terms(terms).normal_order())
}

#[derive(Clone, Debug)]
pub struct StageReport {
    pub generator: String,
    pub rule: String,
    /// Positions compared: degree `≤ cutoff − longest word`.
    pub interior_len: usize,
    /// `max |L M L⁻¹ − M'|` on the interior block.
    pub mismatch: f64,
    /// `max |L L⁻¹ − I|` on the interior block.
    pub inverse_defect: f64,
}

#[derive(Clone, Debug)]
pub struct SimilarityReport {
    pub rule: String,
    pub stages: Vec<StageReport>,
}

impl SimilarityReport {
    pub fn max_mismatch(&self) -> f64 {
        self.stages.iter().map(|s| s.mismatch).fold(0.0, f64::max)
    }
}

// Largest tolerated interior defect of L·L⁻¹ before the conjugation is
// considered meaningless at this cutoff.
const INVERSE_TOL: f64 = 1e-9;

/// Compares each stage of `rule` with conjugation by the truncated matrix
/// exponential of its generator.
///
/// Every stage generator is built from same-direction ladder pairs, so its
/// truncated matrix is nilpotent and the series for `L` and `L⁻¹ = exp(−G)`
/// terminate.
pub fn verify_similarity(rule: &RewriteRule, p: &Poly, basis: &Arc<FockBasis>) -> Result<SimilarityReport> {
    let mut stages = Vec::new();
    let mut cur = p.normal_order();
    for (gen, stage_rule) in rule.stages(basis)? {
        let out = apply_rewrite(&cur, &stage_rule)?;
        let g = materialize(&gen, basis)?;
        let l = expm_nilpotent(&g)?;
        let linv = expm_nilpotent(&g.scale(C64::new(-1.0, 0.0)))?;
        let depth = cur.max_word_len().max(out.max_word_len());
        let int = basis.interior_len(depth);
        let ident = FockMatrix::identity(basis.clone(), MatrixKind::Operator);
        let inverse_defect = l.mul(&linv).max_diff_block(&ident, int);
        if inverse_defect > INVERSE_TOL {
            return Err(Error::Singular(format!(
                "truncated exp({gen}) has |L L⁻¹ − I| = {inverse_defect:e} on the interior"
            )));
        }
        let conj = l.mul(&materialize(&cur, basis)?).mul(&linv);
        let mismatch = conj.max_diff_block(&materialize(&out, basis)?, int);
        stages.push(StageReport {
            generator: gen.to_string(),
            rule: stage_rule.name(),
            interior_len: int,
            mismatch,
            inverse_defect,
        });
        cur = out;
    }
    Ok(SimilarityReport { rule: rule.name(), stages })
}

// Σ G^k / k! until a term vanishes identically.
fn expm_nilpotent(g: &FockMatrix) -> Result<FockMatrix> {
    let mut sum = FockMatrix::identity(g.basis.clone(), MatrixKind::Operator);
    let mut term = sum.clone();
    for k in 1..=4 * g.basis.cutoff() + 8 {
        term = term.mul(g).scale(C64::new(1.0 / k as f64, 0.0));
        if term.nnz() == 0 {
            return Ok(sum);
        }
        sum = sum.add(&term);
    }
    Err(Error::Singular("generator is not nilpotent on this basis".into()))
}
