use std::sync::Arc;

use fockflow::fock::{mix_matrix, pure_w, FockBasis, Layout, PureKind};
use fockflow::ops::{
    apply_rewrite, interior_trace, null_basis, null_residual, parse_op, reduce, Letter, Pairing, Poly, RewriteRule,
    Species,
};
use fockflow::sysspec::SystemSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PHYSICAL: [Species; 2] = [Species::A, Species::Ad];

fn word_strategy(slots: usize, max_len: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..2usize, 0..slots), 0..=max_len)
}

fn poly_strategy(slots: usize) -> impl Strategy<Value = Poly> {
    prop::collection::vec((word_strategy(slots, 4), -3i32..=3), 1..4).prop_map(|terms| {
        terms.into_iter().fold(Poly::zero(), |acc, (w, c)| {
            let word = w.into_iter().map(|(s, l)| Letter::new(PHYSICAL[s], l)).collect();
            acc.add(&Poly::word(word).scale(c as f64))
        })
    })
}

// Creations minus annihilations on each slot, per word.
fn shifts(p: &Poly) -> Vec<Vec<i32>> {
    let mut out: Vec<Vec<i32>> = p
        .terms()
        .iter()
        .map(|(w, _)| {
            let mut s = vec![0; 3];
            for l in w {
                s[l.label] += if l.species.is_creation() { 1 } else { -1 };
            }
            s
        })
        .collect();
    out.sort();
    out.dedup();
    out
}

fn plain(n: usize) -> SystemSpec {
    SystemSpec::first_order("plain", n, vec![0.0; n * n], vec![0.0; n * n * n], None).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normal_order_is_idempotent_and_keeps_shifts(p in poly_strategy(3)) {
        let once = p.normal_order();
        prop_assert!(once.is_canonical());
        prop_assert_eq!(once.normal_order(), once.clone());
        // Every reordered word keeps the shift of some original word.
        let before = shifts(&p);
        for s in shifts(&once) {
            prop_assert!(before.contains(&s), "{:?} not among {:?}", s, before);
        }
    }

    #[test]
    fn rewrite_respects_products(p in poly_strategy(2), q in poly_strategy(2)) {
        for rule in [RewriteRule::SHalf, RewriteRule::Reify1, RewriteRule::ReifyLower] {
            let lhs = apply_rewrite(&p.mul(&q), &rule).unwrap();
            let rhs = apply_rewrite(&p, &rule).unwrap().mul(&apply_rewrite(&q, &rule).unwrap());
            prop_assert!(lhs.approx_eq(&rhs), "{}: {} vs {}", rule.name(), lhs, rhs);
        }
    }

    #[test]
    fn null_combinations_pair_to_zero(weights in prop::collection::vec(-2.0f64..2.0, 1..6), seed in 0u64..1000) {
        let basis_ops = null_basis(2, 3).unwrap();
        let d = weights
            .iter()
            .enumerate()
            .fold(Poly::zero(), |acc, (i, &w)| acc.add(&basis_ops[(i * 7 + seed as usize) % basis_ops.len()].scale(w)));
        prop_assert!(reduce(&d, Pairing::Real).unwrap().is_zero());
        let spec = plain(2);
        let basis = Arc::new(FockBasis::new(2, d.max_word_len() + 8, Layout::Plain).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<_> = (0..20)
            .map(|_| pure_w(&[rng.gen_range(-2.0..=2.0), rng.gen_range(-2.0..=2.0)], &basis, &spec).unwrap())
            .collect();
        let r = null_residual(&d, &states, Pairing::Real).unwrap();
        prop_assert!(r.residual.unwrap() <= 1e-8);
        let samples: Vec<Vec<f64>> = (0..5).map(|_| vec![rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)]).collect();
        let rho = mix_matrix(&samples, &[0.2; 5], &basis, &spec, PureKind::W).unwrap();
        prop_assert!(interior_trace(&d, &rho, Pairing::Real).unwrap().norm() <= 1e-8);
    }
}

#[test]
fn printed_examples() {
    let p = parse_op("ad0 ad0 - 2 ad0 a0 + a0 a0").unwrap();
    assert!(reduce(&p, Pairing::Real).unwrap().is_zero());
    assert_eq!(parse_op("a0 ad0").unwrap().normal_order().to_string(), "ad0 a0 + 1");
    assert_eq!(apply_rewrite(&parse_op("ad0").unwrap(), &RewriteRule::Reify1).unwrap().to_string(), "ad0 - a0");
    assert!(!reduce(&parse_op("ad0 a0").unwrap(), Pairing::Real).unwrap().is_zero());
}
