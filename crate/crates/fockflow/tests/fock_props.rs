use std::sync::Arc;

use fockflow::fock::{elementary_ops, pure_u, pure_v, pure_w, Elementary, FockBasis, FockMatrix, FockVector, Layout};
use fockflow::sysspec::SystemSpec;
use fockflow::C64;
use proptest::prelude::*;

fn plain(n: usize) -> SystemSpec {
    SystemSpec::first_order("plain", n, vec![0.0; n * n], vec![0.0; n * n * n], None).unwrap()
}

fn basis(n: usize, cutoff: usize) -> Arc<FockBasis> {
    Arc::new(FockBasis::new(n, cutoff, Layout::Plain).unwrap())
}

fn interior_diff(x: &[C64], y: &[C64], len: usize) -> f64 {
    x[..len].iter().zip(&y[..len]).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
}

fn norm(v: &FockVector) -> f64 {
    v.norm().max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ladder_eigenrelation(n in 1usize..=3, cutoff in 2usize..=8, seed in prop::collection::vec(-1.5f64..1.5, 3)) {
        let b = basis(n, cutoff);
        let x = &seed[..n];
        let spec = plain(n);
        let u = pure_u(x, &b).unwrap();
        let v = pure_v(x, &b, &spec).unwrap();
        let w = pure_w(x, &b, &spec).unwrap();
        let len = b.interior_len(1);
        for k in 0..n {
            let c = elementary_ops(&b, k, Elementary::C).unwrap();
            let a = elementary_ops(&b, k, Elementary::A).unwrap();
            for (op, p) in [(&c, &u), (&a, &v), (&a, &w)] {
                let img = op.matvec(&p.coeffs);
                let scaled: Vec<C64> = p.coeffs.iter().map(|z| z * x[k]).collect();
                prop_assert!(interior_diff(&img, &scaled, len) <= 1e-10 * norm(p));
            }
        }
    }

    #[test]
    fn derivative_relations(n in 1usize..=2, cutoff in 2usize..=8, seed in prop::collection::vec(-1.0f64..1.0, 2)) {
        let b = basis(n, cutoff);
        let spec = plain(n);
        let x = seed[..n].to_vec();
        let h = 1e-5;
        let len = b.interior_len(1);
        for i in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = |f: &dyn Fn(&[f64]) -> FockVector| -> Vec<C64> {
                f(&xp).coeffs.iter().zip(&f(&xm).coeffs).map(|(a, c)| (a - c) / (2.0 * h)).collect()
            };
            let num = elementary_ops(&b, i, Elementary::N).unwrap();
            let cd = elementary_ops(&b, i, Elementary::Cd).unwrap();
            let ad = elementary_ops(&b, i, Elementary::Ad).unwrap();
            let a = elementary_ops(&b, i, Elementary::A).unwrap();
            let du = num.mul(&cd).matvec(&pure_u(&x, &b).unwrap().coeffs);
            prop_assert!(interior_diff(&fd(&|y| pure_u(y, &b).unwrap()), &du, len) < 1e-6);
            let dv = ad.matvec(&pure_v(&x, &b, &spec).unwrap().coeffs);
            prop_assert!(interior_diff(&fd(&|y| pure_v(y, &b, &spec).unwrap()), &dv, len) < 1e-6);
            let dw = ad.sub(&a).matvec(&pure_w(&x, &b, &spec).unwrap().coeffs);
            prop_assert!(interior_diff(&fd(&|y| pure_w(y, &b, &spec).unwrap()), &dw, len) < 1e-6);
        }
    }
}

#[test]
fn ladder_identities_up_to_four_slots() {
    for n in 1..=4 {
        for cutoff in 1..=8 {
            let b = basis(n, cutoff);
            let id = FockMatrix::identity(b.clone(), fockflow::fock::MatrixKind::Operator);
            let len = b.interior_len(1);
            for k in 0..n {
                let c = elementary_ops(&b, k, Elementary::C).unwrap();
                let cd = elementary_ops(&b, k, Elementary::Cd).unwrap();
                let a = elementary_ops(&b, k, Elementary::A).unwrap();
                let ad = elementary_ops(&b, k, Elementary::Ad).unwrap();
                let num = elementary_ops(&b, k, Elementary::N).unwrap();
                assert_eq!(cd.max_diff_block(&c.transpose(), b.size()), 0.0);
                assert_eq!(num.max_diff_block(&num.transpose(), b.size()), 0.0);
                assert!(ad.mul(&a).max_diff_block(&num, b.size()) < 1e-12);
                assert!(a.mul(&ad).max_diff_block(&num.add(&id), len) < 1e-12);
                let comm = ad.mul(&a).sub(&a.mul(&ad));
                assert!(comm.max_diff_block(&id.scale(C64::new(-1.0, 0.0)), len) < 1e-12);
            }
        }
    }
}

#[test]
fn graded_structure_of_elementary_operators() {
    let b = basis(3, 6);
    for k in 0..3 {
        for (op, lo, hi) in [
            (Elementary::C, -1, -1),
            (Elementary::A, -1, -1),
            (Elementary::Cd, 1, 1),
            (Elementary::Ad, 1, 1),
            (Elementary::N, 0, 0),
        ] {
            let m = elementary_ops(&b, k, op).unwrap();
            assert_eq!(m.degree_shift_range(), Some((lo, hi)), "{op:?}");
        }
    }
}

#[test]
fn basis_rank_is_a_bijection() {
    let b = basis(3, 7);
    for pos in 0..b.size() {
        assert_eq!(b.position(b.exponents(pos)), Some(pos));
    }
    assert_eq!(b.size() as u128, fockflow::fock::basis_size(3, 7));
}
