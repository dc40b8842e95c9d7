//! `fockflow ecs`: coupling-series moments against the oracle, and the
//! symbolic four-dimensional comparison.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fockflow::dynamics::{fmt12, Plan};
use fockflow::ecs::{
    compare_printed, compare_series, creation_census, default_offsets, effective_source, g_derivatives, label_set,
    symbolic_g4, toy_parameters, volterra_solve, w_series_moments, EcsGrid, G4Kind, G4Options, LabelConstraint,
    Theory,
};
use fockflow::oracle::{simulate_ensemble, Distribution, EnsembleSpec};
use fockflow::sysspec::{parse_system, SystemSpec};
use serde::Serialize;
use serde_json::json;

use crate::flow::print_summary;
use crate::manifest::{Inputs, OutDir};
use crate::{input_err, CmdResult, Failure};

/// Largest series-versus-oracle difference accepted as exact at `g = 0`.
const EXACT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintArg {
    All,
    Positive,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EcsArgs {
    /// One-mode order-2 system `X'' = −m²X + b X²`; the oracle integrates it
    /// with `b` scaled by `g`.
    #[arg(long)]
    pub system: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub g: f64,
    /// Series order K.
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    /// Time of the initial condition.
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 2.0)]
    pub t1: f64,
    /// Series quadrature step.
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    /// RK4 step of the oracle.
    #[arg(long, default_value_t = 1e-3)]
    pub oracle_dt: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 1.5, 2.0])]
    pub times: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2])]
    pub degrees: Vec<usize>,
    /// Initial (X, X') distribution as inline JSON or a path; defaults to a
    /// Gaussian at (1, 0) with standard deviations 0.05.
    #[arg(long)]
    pub dist: Option<String>,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub rel_tol: f64,
    /// Also (or, without --system, only) compare the reified operator of
    /// phi3 or phi4 with its printed closed form.
    #[arg(long)]
    pub symbolic: Option<String>,
    /// Momentum labels for --symbolic, closed under negation.
    #[arg(long, default_value = "p, q, p-q")]
    pub labels: String,
    /// Negate the momentum in the lowering substitution.
    #[arg(long)]
    pub negate: bool,
    #[arg(long, value_enum, default_value = "positive")]
    pub constraint: ConstraintArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn ensemble(a: &EcsArgs, inputs: &mut Inputs) -> CmdResult<EnsembleSpec> {
    let distribution = match &a.dist {
        None => Distribution::Gaussian { mean: vec![1.0, 0.0], stddev: vec![0.05, 0.05] },
        Some(t) => {
            let raw = if t.trim_start().starts_with('{') { t.clone() } else { inputs.read(std::path::Path::new(t))? };
            serde_json::from_str(&raw).map_err(|e| input_err(format!("--dist: {e}")))?
        }
    };
    Ok(EnsembleSpec { distribution, samples: a.samples, seed: a.seed })
}

// A representative initial state for the coefficient table.
fn center(d: &Distribution) -> Vec<f64> {
    match d {
        Distribution::Point { at } => at.clone(),
        Distribution::Gaussian { mean, .. } => mean.clone(),
        Distribution::TwoPoint { a, .. } => a.clone(),
    }
}

fn coefficient_table(spec: &SystemSpec, a: &EcsArgs, grid: &EcsGrid, x: &[f64]) -> CmdResult<String> {
    let (m, _) = toy_parameters(spec)?;
    let src = effective_source(x[0], x[1], m, grid.t_minus, default_offsets(m))?;
    let series = g_derivatives(spec, &src, a.order, grid)?;
    let (direct, _) = volterra_solve(spec, &src, a.g, grid)?;
    let mut csv = String::from("time");
    for k in 0..=a.order {
        write!(csv, ",d{k}").unwrap();
    }
    csv.push_str(",series,direct\n");
    for (i, d) in direct.iter().enumerate() {
        csv.push_str(&fmt12(grid.time(i)));
        for c in &series.coeffs {
            write!(csv, ",{}", fmt12(c[i])).unwrap();
        }
        writeln!(csv, ",{},{}", fmt12(series.resum(a.g, i)), fmt12(*d)).unwrap();
    }
    Ok(csv)
}

fn symbolic(a: &EcsArgs, name: &str, out: &mut OutDir) -> CmdResult {
    let theory = Theory::from_name(name).ok_or_else(|| input_err(format!("unknown theory `{name}`; use phi3 or phi4")))?;
    let labels = label_set(&a.labels)?;
    let constraint = match a.constraint {
        ConstraintArg::All => LabelConstraint::All,
        ConstraintArg::Positive => LabelConstraint::Positive,
    };
    let options = G4Options { constraint, negate: a.negate };
    let report = compare_printed(theory, &labels, options)?;
    let census = creation_census(&symbolic_g4(theory, G4Kind::Z, &labels, G4Options { constraint: LabelConstraint::All, negate: a.negate })?);
    let derived = symbolic_g4(theory, G4Kind::Z, &labels, options)?;
    out.write_json(
        "symbolic.json",
        &json!({ "match": report, "creation_census": census, "derived": derived.to_json() }),
    )?;
    let verdict = if report.residuals.is_empty() { "MATCH" } else { "RESIDUAL" };
    println!(
        "{name}: {verdict} over {} assignments, scalar {}, relabeled {}, max residual {:e}",
        report.assignments, report.scalar, report.relabeled, report.max_residual
    );
    for (labels, r) in &report.residuals {
        println!("  [{labels}] {r}");
    }
    println!(
        "creation counts {:?}, {} terms with non-positive labels dropped, {} violations",
        census.histogram,
        census.dropped,
        census.violations.len()
    );
    Ok(())
}

pub fn run(a: &EcsArgs, argv: &[String]) -> CmdResult {
    if a.system.is_none() && a.symbolic.is_none() {
        return Err(input_err("ecs needs --system, --symbolic, or both"));
    }
    let mut inputs = Inputs::new();
    let mut out = OutDir::create(&a.out)?;
    if let Some(name) = &a.symbolic {
        symbolic(a, name, &mut out)?;
    }
    let mut verdict = None;
    let mut seed = None;
    if let Some(path) = &a.system {
        let spec = parse_system(&inputs.read(path)?)?;
        let (m, b) = toy_parameters(&spec)?;
        let ens = ensemble(a, &mut inputs)?;
        ens.validate(2)?;
        let grid = EcsGrid::new(a.t0, a.t1 - a.t0, a.dt)?;
        let series = w_series_moments(&ens, &spec, a.order, a.g, &grid, &a.times, &a.degrees)?;
        let oracle_spec = SystemSpec::second_order(&spec.name, vec![m], vec![a.g * b], None)?;
        let samples = simulate_ensemble(&oracle_spec, &ens, &Plan::at_times(a.t0, a.oracle_dt, &a.times)?)?;
        let report = compare_series(&series, &samples, a.rel_tol)?;

        out.write("gseries.csv", coefficient_table(&spec, a, &grid, &center(&ens.distribution))?)?;
        out.write_json("w_series.json", &serde_json::to_value(&series).map_err(|e| Failure::Resource(e.to_string()))?)?;
        out.write_json("comparison.json", &report.to_json())?;
        out.write("comparison.csv", report.to_csv())?;
        print_summary(&report);
        println!("tail ratio {:.3e}{}", series.tail_ratio, if series.diverging { " (diverging)" } else { "" });
        seed = Some(a.seed);

        if a.g == 0.0 {
            let worst = report.max_abs_error.values().copied().fold(0.0, f64::max);
            let exact = worst <= EXACT_TOL;
            out.write_json("exact.json", &json!({ "g": 0.0, "max_abs_error": worst, "tolerance": EXACT_TOL, "exact": exact }))?;
            println!("g = 0: {} (max abs error {worst:e})", if exact { "exact match" } else { "NOT exact" });
            if !exact {
                verdict = Some(format!("g = 0 series differs from the oracle by {worst:e}"));
            }
        }
        if series.diverging {
            verdict = Some(format!("series tail ratio {:.3e} at g = {} exceeds 0.1", series.tail_ratio, a.g));
        } else if !report.passed && verdict.is_none() {
            verdict = Some("series moments disagree with the oracle".into());
        }
    }
    out.finish("ecs", argv, json!({ "args": a }), inputs, seed)?;
    match verdict {
        Some(v) => Err(Failure::Verdict(v)),
        None => Ok(()),
    }
}
