use std::sync::Arc;

use fockflow::dynamics::{
    first_variance_violation, integrate_matrix, integrate_vector, Flow, Plan, Snapshots, TrajectoryReport,
};
use fockflow::fock::{mix_matrix, pure_u, pure_w, FockBasis, FockVector, Layout, PureKind, VectorKind};
use fockflow::gains::{default_layout, entropy_gain, gain, gain_dual, gain_u, gain_v, gain_z, RepKind, Source};
use fockflow::oracle::simulate_one;
use fockflow::sysspec::SystemSpec;
use fockflow::C64;
use proptest::prelude::*;

fn one(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn logistic() -> SystemSpec {
    SystemSpec::first_order("logistic", 1, vec![1.0], vec![-1.0], None).unwrap()
}

fn vectors(r: &TrajectoryReport) -> &[FockVector] {
    match &r.snapshots {
        Snapshots::Vectors(v) => v,
        Snapshots::Matrices(_) => panic!("expected vectors"),
    }
}

fn first_order_system() -> impl Strategy<Value = SystemSpec> {
    (1usize..=2).prop_flat_map(|n| {
        (prop::collection::vec(-1.0f64..1.0, n * n), prop::collection::vec(-1.0f64..1.0, n * n * n))
            .prop_map(move |(a, b)| SystemSpec::first_order("random", n, a, b, None).unwrap())
    })
}

fn second_order_system() -> impl Strategy<Value = SystemSpec> {
    (0.5f64..2.0, prop::collection::vec(-0.5f64..0.5, 1))
        .prop_map(|(m, b)| SystemSpec::second_order("random", vec![m], b, None).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn primal_gains_lower_and_dual_gains_raise(spec in first_order_system()) {
        for kind in [RepKind::U, RepKind::V, RepKind::W] {
            let b = gain(&spec, kind, default_layout(&spec, kind)).unwrap();
            prop_assert!(b.materialize(&b.basis(5).unwrap()).unwrap().is_block_lowering());
        }
        for kind in [RepKind::Bu, RepKind::Bv, RepKind::Bw] {
            let b = gain_dual(&spec, kind).unwrap();
            prop_assert!(b.materialize(&b.basis(5).unwrap()).unwrap().is_block_raising());
            let e = entropy_gain(&spec, kind, default_layout(&spec, kind)).unwrap();
            prop_assert!(e.materialize(&e.basis(5).unwrap()).unwrap().is_block_raising());
        }
    }

    #[test]
    fn reified_gains_of_noncompressive_systems_are_skew(spec in second_order_system()) {
        let z = gain_z(&spec).unwrap();
        let basis = z.basis(9).unwrap();
        let m = z.materialize(&basis).unwrap();
        prop_assert!(m.skew_defect_block(basis.interior_len(3)) < 1e-8);
    }
}

#[test]
fn density_dual_pairing_follows_the_divergence() {
    // P(t) = b(t)ᵀ u(X(t)) obeys dP/dt = −P div f(X(t)), with div f = 1 − 2X.
    let spec = logistic();
    let b = gain_dual(&spec, RepKind::Bu).unwrap();
    let basis = b.basis(14).unwrap();
    let g = b.materialize(&basis).unwrap();
    let mut coeffs = vec![one(0.0); basis.size()];
    coeffs[0] = one(1.0);
    coeffs[1] = one(0.5);
    let init = FockVector { basis: basis.clone(), coeffs, kind: b.kind.vector_kind() };
    let dt = 1e-3;
    let plan = Plan::new(0.0, 0.5, dt, 500).unwrap();
    let dual = integrate_vector(&g, None, &init, &plan).unwrap();
    let path = simulate_one(&spec, &[0.3], &plan, 0).unwrap();
    let pairing = |k: usize| -> f64 {
        let u = pure_u(&path[k], &basis).unwrap();
        vectors(&dual)[k].coeffs.iter().zip(&u.coeffs).map(|(x, y)| (x * y).re).sum()
    };
    let mut integral = 0.0;
    let mut worst = 0.0f64;
    for k in 1..path.len() {
        integral += 0.5 * dt * ((1.0 - 2.0 * path[k - 1][0]) + (1.0 - 2.0 * path[k][0]));
        worst = worst.max((pairing(k) - pairing(0) * (-integral).exp()).abs());
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn entropy_pairing_is_constant_for_noncompressive_flow() {
    let spec = SystemSpec::second_order("cubic", vec![1.0], vec![0.3], None).unwrap();
    let e = entropy_gain(&spec, RepKind::Bw, Layout::RealPairs).unwrap();
    assert_eq!(e.source, Source::Zero);
    let basis = e.basis(16).unwrap();
    let g = e.materialize(&basis).unwrap();
    let mut coeffs = vec![one(0.0); basis.size()];
    coeffs[0] = one(1.0);
    coeffs[1] = one(-0.4);
    coeffs[2] = one(0.25);
    let init = FockVector { basis: basis.clone(), coeffs, kind: e.kind.vector_kind() };
    let plan = Plan::new(0.0, 1.0, 1e-3, 10).unwrap();
    let dual = integrate_vector(&g, None, &init, &plan).unwrap();
    let path = simulate_one(&spec, &[0.4, -0.2], &plan, 0).unwrap();
    let pairing = |k: usize| -> f64 {
        let w = pure_w(&path[k], &basis, &e.spec).unwrap();
        vectors(&dual)[k].coeffs.iter().zip(&w.coeffs).map(|(x, y)| (x * y).re).sum()
    };
    let p0 = pairing(0);
    for k in 1..path.len() {
        assert!((pairing(k) - p0).abs() < 1e-7, "{} vs {p0}", pairing(k));
    }
}

#[test]
fn matrix_flow_matches_outer_products() {
    let spec = logistic();
    let g = gain(&spec, RepKind::W, Layout::Plain).unwrap();
    let basis = g.basis(8).unwrap();
    let m = g.materialize(&basis).unwrap();
    let samples = vec![vec![0.2], vec![0.5], vec![0.9]];
    let weights = [0.25, 0.5, 0.25];
    let rho = mix_matrix(&samples, &weights, &basis, &spec, PureKind::W).unwrap();
    let plan = Plan::new(0.0, 0.3, 1e-4, 3).unwrap();
    let flow = integrate_matrix(&m, None, &rho, &plan, Flow::Primal).unwrap();
    let singles: Vec<TrajectoryReport> = samples
        .iter()
        .map(|s| integrate_vector(&m, None, &pure_w(s, &basis, &spec).unwrap(), &plan).unwrap())
        .collect();
    let Snapshots::Matrices(mats) = &flow.snapshots else { panic!() };
    for (t, mat) in mats.iter().enumerate() {
        let n = basis.size();
        for r in 0..n {
            for c in 0..n {
                let want: C64 = singles
                    .iter()
                    .zip(&weights)
                    .map(|(s, &w)| vectors(s)[t].coeffs[r] * vectors(s)[t].coeffs[c].conj() * w)
                    .sum();
                assert!((mat.get(r, c) - want).norm() < 1e-12, "{r} {c} {} {}", mat.get(r, c), want);
            }
        }
    }
}

#[test]
fn rescaling_commutes_with_the_flow() {
    let spec = logistic();
    let bu = gain_u(&spec).unwrap();
    let bv = gain_v(&spec).unwrap();
    let basis = bu.basis(8).unwrap();
    let plan = Plan::new(0.0, 0.2, 1e-3, 2).unwrap();
    let u0 = pure_u(&[0.4], &basis).unwrap();
    let fact = |k: usize| (1..=k).map(|i| i as f64).product::<f64>().sqrt();
    let scale = |x: &FockVector| -> Vec<C64> {
        x.coeffs.iter().enumerate().map(|(i, c)| c / fact(basis.degree(i))).collect()
    };
    let v0 = FockVector { basis: basis.clone(), coeffs: scale(&u0), kind: VectorKind::V };
    let ru = integrate_vector(&bu.materialize(&basis).unwrap(), None, &u0, &plan).unwrap();
    let rv = integrate_vector(&bv.materialize(&basis).unwrap(), None, &v0, &plan).unwrap();
    for (x, y) in vectors(&ru).iter().zip(vectors(&rv)) {
        for (a, b) in scale(x).iter().zip(&y.coeffs) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}

#[test]
fn skew_flows_are_isometries() {
    let spec = SystemSpec::second_order("cubic", vec![1.0], vec![0.3], None).unwrap();
    let z = gain_z(&spec).unwrap();
    let basis = z.basis(8).unwrap();
    let m = z.materialize(&basis).unwrap();
    let w = pure_w(&[0.5, 0.1], &Arc::new(FockBasis::new(2, 8, Layout::ConjugatePairs).unwrap()), &spec).unwrap();
    let x0 = FockVector { basis: basis.clone(), coeffs: w.coeffs.clone(), kind: VectorKind::Z };
    let plan = Plan::new(0.0, 10.0, 1e-3, 1).unwrap();
    let run = integrate_vector(&m, None, &x0, &plan).unwrap();
    let n1 = run.final_vector().unwrap().norm();
    assert!((n1 - x0.norm()).abs() < 1e-7 * x0.norm(), "{n1} {}", x0.norm());
    let rho = mix_matrix(&[vec![0.5, 0.1]], &[1.0], &basis, &spec, PureKind::W).unwrap();
    let mplan = Plan::new(0.0, 1.0, 1e-3, 1).unwrap();
    let mrun = integrate_matrix(&m, None, &rho, &mplan, Flow::Primal).unwrap();
    let Snapshots::Matrices(mats) = &mrun.snapshots else { panic!() };
    let fro = |d: Vec<C64>| d.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let (f0, f1) = (fro(mats[0].to_dense()), fro(mats[1].to_dense()));
    assert!((f1 - f0).abs() < 1e-7 * f0);
}

#[test]
fn variance_check_flags_truncation_failure_only_late() {
    let spec = logistic();
    let b = gain_u(&spec).unwrap();
    let basis = b.basis(6).unwrap();
    let m = b.materialize(&basis).unwrap();
    let moments = [1.0, 0.5, 0.26, 0.14, 0.0776, 0.0440, 0.025496];
    let init = FockVector { basis: basis.clone(), coeffs: moments.iter().map(|&x| one(x)).collect(), kind: VectorKind::U };
    let early = integrate_vector(&m, None, &init, &Plan::new(0.0, 0.25, 1e-3, 25).unwrap()).unwrap();
    assert_eq!(first_variance_violation(&early), None);
    let late = integrate_vector(&m, None, &init, &Plan::new(0.0, 1.5, 1e-3, 150).unwrap()).unwrap();
    let (t, slot) = first_variance_violation(&late).expect("cutoff 6 fails by t = 1.5");
    assert!(t > 0.25 && slot == 0);
}
