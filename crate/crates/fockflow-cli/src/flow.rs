//! `gain`, `evolve`, `oracle` and `compare`.

use std::path::Path;
use std::sync::Arc;

use fockflow::dynamics::{integrate_matrix, integrate_vector, moment_scale, Flow, Plan, TrajectoryReport};
use fockflow::fock::{FockBasis, FockMatrix, FockVector, Layout, VectorKind, C64};
use fockflow::gains::{default_layout, entropy_gain, gain as build_gain, GainBundle, RepKind, Source};
use fockflow::oracle::{
    compare as compare_reports, empirical_moments, estimates_from_json, estimates_to_csv, estimates_to_json,
    simulate_ensemble, ComparisonReport, Distribution, EnsembleSpec, Estimate, EstimatorKind, SampleSet,
};
use fockflow::sysspec::{parse_system, SystemSpec};
use serde_json::json;

use crate::manifest::{Inputs, OutDir};
use crate::{
    input_err, CmdResult, CompareArgs, EnsembleArgs, EvolveArgs, Failure, GainArgs, GridArgs, OracleArgs, RepArgs,
};

struct Loaded {
    spec: SystemSpec,
    kind: RepKind,
    bundle: GainBundle,
    basis: Arc<FockBasis>,
}

fn load(rep: &RepArgs, inputs: &mut Inputs) -> CmdResult<Loaded> {
    let spec = parse_system(&inputs.read(&rep.system)?)?;
    let kind = RepKind::from_name(&rep.rep).ok_or_else(|| {
        input_err(format!("unknown representation `{}`; expected one of u v w z bu bv bw Su Sv Sw Sz", rep.rep))
    })?;
    let layout = rep.layout.map(Layout::from).unwrap_or_else(|| default_layout(&spec, kind));
    let bundle = if kind.is_entropy_matrix() || (kind.is_dual() && rep.entropy) {
        entropy_gain(&spec, kind, layout)?
    } else if rep.entropy {
        return Err(input_err("--entropy applies only to bu, bv and bw"));
    } else {
        build_gain(&spec, kind, layout)?
    };
    let basis = bundle.basis(rep.cutoff)?;
    Ok(Loaded { spec, kind, bundle, basis })
}

fn plan_of(grid: &GridArgs) -> CmdResult<Plan> {
    if !grid.times.is_empty() {
        return Ok(Plan::at_times(grid.t0, grid.dt, &grid.times)?);
    }
    let t1 = grid.t1.ok_or_else(|| input_err("give --t1 or --times"))?;
    Ok(Plan::new(grid.t0, t1, grid.dt, grid.snapshots)?)
}

fn ensemble_of(e: &EnsembleArgs, inputs: &mut Inputs) -> CmdResult<EnsembleSpec> {
    let text = e.dist.as_deref().ok_or_else(|| input_err("this command needs --dist"))?;
    let raw = if text.trim_start().starts_with('{') { text.to_string() } else { inputs.read(Path::new(text))? };
    let distribution: Distribution =
        serde_json::from_str(&raw).map_err(|err| input_err(format!("--dist: {err}")))?;
    Ok(EnsembleSpec { distribution, samples: e.samples, seed: e.seed })
}

fn estimator(kind: RepKind) -> CmdResult<EstimatorKind> {
    match kind {
        RepKind::U => Ok(EstimatorKind::U),
        RepKind::V => Ok(EstimatorKind::V),
        RepKind::W => Ok(EstimatorKind::W),
        k => Err(input_err(format!("no Monte Carlo estimator for `{k}`; use u, v or w"))),
    }
}

fn config(args: &impl serde::Serialize, extra: serde_json::Value) -> serde_json::Value {
    json!({ "args": args, "resolved": extra })
}

// ---------------------------------------------------------------------------

pub fn gain(a: &GainArgs, argv: &[String]) -> CmdResult {
    let mut inputs = Inputs::new();
    let l = load(&a.rep, &mut inputs)?;
    let m = l.bundle.materialize(&l.basis)?;
    let size = m.size();
    let mut out = OutDir::create(&a.out)?;
    out.write("gain.txt", format!("{}\n", l.bundle.gain))?;
    out.write_json("gain_matrix.json", &m.to_json())?;
    let source_file = match l.bundle.source {
        Source::Moments { .. } | Source::Damped { .. } => {
            let s = l.bundle.source_vector(&l.basis)?.expect("vector source");
            out.write_json("source.json", &s.to_json())?;
            Some("source.json")
        }
        Source::Matrix { .. } => {
            let s = l.bundle.source_matrix(&l.basis)?.expect("matrix source");
            out.write_json("source.json", &s.to_json())?;
            Some("source.json")
        }
        _ => None,
    };
    let mut report = l.bundle.to_json();
    report["basis"] = json!(l.basis.descriptor());
    report["matrix"] = json!({
        "size": size,
        "nnz": m.nnz(),
        "degree_shift_range": m.degree_shift_range(),
        "block_lowering": m.is_block_lowering(),
        "block_raising": m.is_block_raising(),
        "skew_defect": m.skew_defect_block(size),
    });
    out.write_json("gain.json", &report)?;

    println!("gain: {}", l.bundle.gain);
    println!("triangularity: {}", report["triangularity"].as_str().unwrap_or("?"));
    println!("source: {}", source_summary(&l.bundle.source));
    if let Some(d) = &l.bundle.diagnostics.skew_defect {
        println!("skew defect: {d}");
        if let Some(lambda) = l.bundle.diagnostics.compression_multiple {
            println!("reduced defect = {lambda} * div f (residual {:e})", l.bundle.diagnostics.compression_residual.unwrap_or(0.0));
        }
    }
    println!("matrix: {size}x{size}, {} nonzeros, max |M + M^H| = {:.3e}", m.nnz(), m.skew_defect_block(size));
    if let Some(f) = source_file {
        println!("source vector written to {}", a.out.join(f).display());
    }
    let resolved = json!({ "layout": l.bundle.layout, "entropy": l.bundle.entropy, "kind": l.kind.name() });
    out.finish("gain", argv, config(a, resolved), inputs, None)
}

fn source_summary(s: &Source) -> String {
    match s {
        Source::Zero => "zero".into(),
        Source::Moments { divergence } => format!("moments of div f = {divergence}"),
        Source::Damped { divergence } => format!("damped moments of div f = {divergence}"),
        Source::Matrix { k, divergence } => format!("matrix, k = {k}, div f = {divergence}"),
        Source::NotComputed => "not computed".into(),
    }
}

// ---------------------------------------------------------------------------

/// Per-slot scale taking a state to slot coordinates: 1 for positions and
/// `1/m` for velocities (plain and real-pair layouts only).
fn slot_scales(spec: &SystemSpec) -> Vec<f64> {
    let n = spec.n;
    if spec.order == 1 {
        vec![1.0; n]
    } else {
        (0..2 * n).map(|k| if k < n { 1.0 } else { 1.0 / spec.mass(k - n) }).collect()
    }
}

fn gaussian_raw_moments(mean: f64, sd: f64, k: usize) -> Vec<f64> {
    let mut m = vec![1.0; k + 1];
    if k >= 1 {
        m[1] = mean;
    }
    for j in 2..=k {
        m[j] = mean * m[j - 1] + (j - 1) as f64 * sd * sd * m[j - 2];
    }
    m
}

fn power_table(x: f64, k: usize) -> Vec<f64> {
    (0..=k).map(|j| x.powi(j as i32)).collect()
}

/// Exact `u` or `v` coefficients of the initial distribution, for layouts
/// whose slots are real state coordinates.
fn exact_initial(spec: &SystemSpec, basis: &Arc<FockBasis>, dist: &Distribution, kind: VectorKind) -> Option<FockVector> {
    if !matches!(kind, VectorKind::U | VectorKind::V) || basis.layout() == Layout::ConjugatePairs {
        return None;
    }
    let scales = slot_scales(spec);
    if scales.len() != basis.n() {
        return None;
    }
    let d = basis.cutoff();
    // Independent atoms: (weight, per-slot raw moment tables).
    let atoms: Vec<(f64, Vec<Vec<f64>>)> = match dist {
        Distribution::Point { at } => {
            vec![(1.0, at.iter().zip(&scales).map(|(x, s)| power_table(x * s, d)).collect())]
        }
        Distribution::Gaussian { mean, stddev } => vec![(
            1.0,
            mean.iter().zip(stddev).zip(&scales).map(|((m, sd), s)| gaussian_raw_moments(m * s, sd * s, d)).collect(),
        )],
        Distribution::TwoPoint { a, b, p } => vec![
            (*p, a.iter().zip(&scales).map(|(x, s)| power_table(x * s, d)).collect()),
            (1.0 - p, b.iter().zip(&scales).map(|(x, s)| power_table(x * s, d)).collect()),
        ],
    };
    let coeffs = (0..basis.size())
        .map(|pos| {
            let e = basis.exponents(pos);
            let m: f64 =
                atoms.iter().map(|(w, t)| w * e.iter().enumerate().map(|(k, &j)| t[k][j as usize]).product::<f64>()).sum();
            C64::new(m / moment_scale(kind, e).unwrap_or(1.0), 0.0)
        })
        .collect();
    Some(FockVector { basis: basis.clone(), coeffs, kind })
}

enum Init {
    Vector(FockVector),
    Matrix(FockMatrix),
}

fn initial_state(
    l: &Loaded,
    a: &EvolveArgs,
    plan: &Plan,
    inputs: &mut Inputs,
) -> CmdResult<(Init, &'static str)> {
    if let Some(path) = &a.init {
        let v = inputs.read_json(path)?;
        let init = if v.get("entries").is_some() {
            Init::Matrix(FockMatrix::from_json(&v)?)
        } else {
            Init::Vector(FockVector::from_json(&v)?)
        };
        let desc = match &init {
            Init::Vector(x) => x.basis.descriptor(),
            Init::Matrix(x) => x.basis.descriptor(),
        };
        if desc != l.basis.descriptor() {
            return Err(Failure::Input(format!(
                "initial state basis {desc:?} differs from the gain basis {:?}",
                l.basis.descriptor()
            )));
        }
        return Ok((init, "file"));
    }
    if !matches!(l.kind, RepKind::U | RepKind::V | RepKind::W) {
        return Err(input_err(format!("`{}` trajectories need an initial state from --init", l.kind)));
    }
    let ens = ensemble_of(&a.ensemble, inputs)?;
    ens.validate(l.spec.state_len())?;
    if let Some(x) = exact_initial(&l.spec, &l.basis, &ens.distribution, l.kind.vector_kind()) {
        return Ok((Init::Vector(x), "exact"));
    }
    // The sample mean of pure states at t0: the same draws the oracle uses.
    let states: Vec<Vec<f64>> = (0..ens.samples).map(|i| ens.draw(i)).collect();
    let set = SampleSet { plan: Plan::at_times(plan.t0, plan.dt, &[])?, states: vec![states] };
    let est = empirical_moments(&set, &l.basis, &l.spec, estimator(l.kind)?)?;
    match est.into_iter().next() {
        Some(Estimate::Vector { mean, .. }) => Ok((Init::Vector(mean), "ensemble")),
        _ => Err(Failure::Input("no initial estimate".into())),
    }
}

fn trajectory(l: &Loaded, a: &EvolveArgs, inputs: &mut Inputs) -> CmdResult<(TrajectoryReport, &'static str)> {
    let plan = plan_of(&a.grid)?;
    let (init, method) = initial_state(l, a, &plan, inputs)?;
    let mut g = l.bundle.materialize(&l.basis)?;
    if a.negate_gain {
        g = g.scale(C64::new(-1.0, 0.0));
    }
    let mut report = match init {
        Init::Vector(x) => {
            if l.kind.is_entropy_matrix() {
                return Err(input_err(format!("`{}` needs a matrix initial state", l.kind)));
            }
            let src = match l.bundle.source {
                Source::Zero => None,
                _ => Some(l.bundle.source_vector(&l.basis)?.ok_or_else(|| {
                    input_err(format!("the source of `{}` is not computed; it cannot be evolved", l.kind))
                })?),
            };
            integrate_vector(&g, src.as_ref(), &x, &plan)?
        }
        Init::Matrix(m) => {
            if !l.kind.is_entropy_matrix() {
                return Err(input_err(format!("`{}` needs a vector initial state", l.kind)));
            }
            let src = match l.bundle.source {
                Source::Zero => None,
                _ => Some(l.bundle.source_matrix(&l.basis)?.ok_or_else(|| {
                    input_err(format!("the source of `{}` is not computed; it cannot be evolved", l.kind))
                })?),
            };
            integrate_matrix(&g, src.as_ref(), &m, &plan, Flow::Entropy)?
        }
    };
    if matches!(l.kind, RepKind::U | RepKind::V) {
        let mut exps = Vec::new();
        for &d in &a.degrees {
            if d > l.basis.cutoff() {
                return Err(input_err(format!("degree {d} exceeds the cutoff {}", l.basis.cutoff())));
            }
            exps.extend(l.basis.degree_range(d).map(|p| l.basis.exponents(p).to_vec()));
        }
        report.add_moments(&exps)?;
    }
    Ok((report, method))
}

pub fn evolve(a: &EvolveArgs, argv: &[String]) -> CmdResult {
    let mut inputs = Inputs::new();
    let l = load(&a.rep, &mut inputs)?;
    let (report, method) = trajectory(&l, a, &mut inputs)?;
    let mut out = OutDir::create(&a.out)?;
    out.write_json("trajectory.json", &report.to_json())?;
    out.write("trajectory.csv", report.to_csv())?;
    println!(
        "{} snapshots to t = {}, max local error {:e}",
        report.snapshots.len(),
        report.times().last().copied().unwrap_or(a.grid.t0),
        report.meta.max_local_error
    );
    let seed = (method != "file" && method != "exact").then_some(a.ensemble.seed);
    let resolved = json!({ "layout": l.bundle.layout, "init": method, "basis": l.basis.descriptor() });
    out.finish("evolve", argv, config(a, resolved), inputs, seed)
}

// ---------------------------------------------------------------------------

fn estimates(l: &Loaded, plan: &Plan, ens: &EnsembleSpec) -> CmdResult<(Vec<f64>, Vec<Estimate>)> {
    let kind = estimator(l.kind)?;
    let samples = simulate_ensemble(&l.spec, ens, plan)?;
    let est = empirical_moments(&samples, &l.basis, &l.spec, kind)?;
    Ok((samples.times(), est))
}

pub fn oracle(a: &OracleArgs, argv: &[String]) -> CmdResult {
    let mut inputs = Inputs::new();
    let l = load(&a.rep, &mut inputs)?;
    let plan = plan_of(&a.grid)?;
    let ens = ensemble_of(&a.ensemble, &mut inputs)?;
    let (times, est) = estimates(&l, &plan, &ens)?;
    let mut out = OutDir::create(&a.out)?;
    out.write_json("estimates.json", &estimates_to_json(&times, &est))?;
    out.write("estimates.csv", estimates_to_csv(&times, &est))?;
    println!("{} samples at {} times", ens.samples, times.len());
    let resolved = json!({ "layout": l.bundle.layout, "basis": l.basis.descriptor() });
    out.finish("oracle", argv, config(a, resolved), inputs, Some(ens.seed))
}

// ---------------------------------------------------------------------------

fn check_times(analytic: &[f64], empirical: &[f64]) -> CmdResult {
    let same = analytic.len() == empirical.len()
        && analytic.iter().zip(empirical).all(|(a, e)| (a - e).abs() <= 1e-9 * a.abs().max(1.0));
    if same {
        Ok(())
    } else {
        Err(Failure::Input(format!("grid mismatch: analytic times {analytic:?} against empirical times {empirical:?}")))
    }
}

pub fn compare(a: &CompareArgs, argv: &[String]) -> CmdResult {
    let mut inputs = Inputs::new();
    let mut out_files: Vec<(&str, serde_json::Value)> = Vec::new();
    let (traj, times, est, resolved) = match (&a.analytic, &a.empirical) {
        (Some(ap), Some(ep)) => {
            let traj = TrajectoryReport::from_json(&inputs.read_json(ap)?)?;
            let (times, est) = estimates_from_json(&inputs.read_json(ep)?)?;
            (traj, times, est, json!({ "mode": "files" }))
        }
        _ => {
            let need = |what: &str| input_err(format!("compare without --analytic/--empirical needs --{what}"));
            let rep = RepArgs {
                system: a.system.clone().ok_or_else(|| need("system"))?,
                rep: a.rep.clone().ok_or_else(|| need("rep"))?,
                cutoff: a.cutoff.ok_or_else(|| need("cutoff"))?,
                layout: a.layout,
                entropy: false,
            };
            let grid = GridArgs {
                t0: a.t0,
                t1: a.t1,
                dt: a.dt.ok_or_else(|| need("dt"))?,
                times: a.times.clone(),
                snapshots: a.snapshots,
            };
            let ev = EvolveArgs {
                rep: rep.clone(),
                grid: grid.clone(),
                ensemble: a.ensemble.clone(),
                init: None,
                degrees: a.degrees.clone(),
                negate_gain: a.negate_gain,
                out: a.out.clone(),
            };
            let l = load(&rep, &mut inputs)?;
            estimator(l.kind)?;
            let (traj, method) = trajectory(&l, &ev, &mut inputs)?;
            let ens = ensemble_of(&a.ensemble, &mut Inputs::new())?;
            let (times, est) = estimates(&l, &plan_of(&grid)?, &ens)?;
            out_files.push(("trajectory.json", traj.to_json()));
            out_files.push(("estimates.json", estimates_to_json(&times, &est)));
            let resolved = json!({ "mode": "run", "layout": l.bundle.layout, "init": method, "basis": l.basis.descriptor() });
            (traj, times, est, resolved)
        }
    };
    check_times(&traj.times(), &times)?;
    let report = compare_reports(&traj, &est, &a.degrees, a.rel_tol)?;
    let mut out = OutDir::create(&a.out)?;
    for (name, v) in &out_files {
        out.write_json(name, v)?;
    }
    out.write_json("comparison.json", &report.to_json())?;
    out.write("comparison.csv", report.to_csv())?;
    print_summary(&report);
    let seed = a.analytic.is_none().then_some(a.ensemble.seed);
    out.finish("compare", argv, config(a, resolved), inputs, seed)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Verdict("analytic and Monte Carlo moments disagree".into()))
    }
}

pub fn print_summary(report: &ComparisonReport) {
    for (d, rel) in &report.max_rel_error {
        println!("degree {d}: max relative error {rel:.3e}, max absolute error {:.3e}", report.max_abs_error[d]);
    }
    println!("{}", if report.passed { "PASS" } else { "FAIL" });
}
