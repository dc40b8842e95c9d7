//! Monte Carlo ground truth: integrate the ODE per sample, average pure
//! states, and compare with a Fock trajectory.
//!
//! Each sample draws from its own ChaCha stream `(seed, index)` and every
//! reduction is a fixed pairwise tree, so results do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt12, moment_name, moment_scale, Plan, Snapshots, TrajectoryReport};
use crate::error::{Error, Result};
use crate::fock::{pure_u, pure_u_state, pure_v, pure_w, FockBasis, FockMatrix, FockVector, Layout, MatrixKind, C64};
use crate::sysspec::{Potential, SystemSpec};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Samples per leaf of the pairwise reduction tree.
const LEAF: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Distribution {
    Point { at: Vec<f64> },
    Gaussian { mean: Vec<f64>, stddev: Vec<f64> },
    /// `a` with probability `p`, else `b`.
    TwoPoint { a: Vec<f64>, b: Vec<f64>, p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub distribution: Distribution,
    pub samples: usize,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self, state_len: usize) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::Invalid("an ensemble needs at least one sample".into()));
        }
        let lens: Vec<usize> = match &self.distribution {
            Distribution::Point { at } => vec![at.len()],
            Distribution::Gaussian { mean, stddev } => {
                if stddev.iter().any(|&s| !(s >= 0.0)) {
                    return Err(Error::Invalid("standard deviations must be non-negative".into()));
                }
                vec![mean.len(), stddev.len()]
            }
            Distribution::TwoPoint { a, b, p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::Invalid(format!("mixture weight {p} outside [0, 1]")));
                }
                vec![a.len(), b.len()]
            }
        };
        if lens.iter().any(|&l| l != state_len) {
            return Err(Error::Dimension(format!("ensemble states must have {state_len} entries")));
        }
        Ok(())
    }

    /// The initial state of sample `index`.
    pub fn draw(&self, index: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        match &self.distribution {
            Distribution::Point { at } => at.clone(),
            Distribution::Gaussian { mean, stddev } => mean
                .iter()
                .zip(stddev)
                .map(|(&m, &s)| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + s * z
                })
                .collect(),
            Distribution::TwoPoint { a, b, p } => {
                let u: f64 = rand::Rng::gen(&mut rng);
                if u < *p {
                    a.clone()
                } else {
                    b.clone()
                }
            }
        }
    }
}

/// Sample states at each snapshot time: `states[t][sample]`.
#[derive(Clone, Debug)]
pub struct SampleSet {
    pub plan: Plan,
    pub states: Vec<Vec<Vec<f64>>>,
}

impl SampleSet {
    pub fn times(&self) -> Vec<f64> {
        self.plan.times()
    }

    pub fn len(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn rk4_state(spec: &SystemSpec, x: &mut [f64], dt: f64, k: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = k;
    let n = x.len();
    spec.rhs(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k1[i];
    }
    spec.rhs(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * dt * k2[i];
    }
    spec.rhs(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + dt * k3[i];
    }
    spec.rhs(tmp, k4);
    for i in 0..n {
        x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// One sample's trajectory at the plan's snapshot steps.
pub fn simulate_one(spec: &SystemSpec, init: &[f64], plan: &Plan, index: usize) -> Result<Vec<Vec<f64>>> {
    let mut x = init.to_vec();
    let mut k: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; x.len()]);
    let mut out = Vec::with_capacity(plan.sample_steps.len());
    let mut next = plan.sample_steps.iter().peekable();
    if next.peek() == Some(&&0) {
        out.push(x.clone());
        next.next();
    }
    for step in 1..=plan.steps {
        rk4_state(spec, &mut x, plan.dt, &mut k);
        if x.iter().any(|v| !(v.abs() <= plan.blowup)) {
            return Err(Error::Escape { sample: index, step });
        }
        if next.peek() == Some(&&step) {
            out.push(x.clone());
            next.next();
        }
    }
    Ok(out)
}

/// RK4 on every sample; the first escaping sample (lowest index) is reported.
pub fn simulate_ensemble(spec: &SystemSpec, ens: &EnsembleSpec, plan: &Plan) -> Result<SampleSet> {
    ens.validate(spec.state_len())?;
    let per_sample: Vec<Result<Vec<Vec<f64>>>> =
        (0..ens.samples).into_par_iter().map(|i| simulate_one(spec, &ens.draw(i), plan, i)).collect();
    let mut states = vec![Vec::with_capacity(ens.samples); plan.sample_steps.len()];
    for traj in per_sample {
        for (t, s) in traj?.into_iter().enumerate() {
            states[t].push(s);
        }
    }
    Ok(SampleSet { plan: plan.clone(), states })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    U,
    V,
    W,
    RhoW,
}

/// A sample mean with per-component standard errors.
#[derive(Clone, Debug)]
pub enum Estimate {
    Vector { mean: FockVector, stderr: Vec<f64> },
    Matrix { mean: FockMatrix, stderr: Vec<f64> },
}

impl Estimate {
    pub fn stderr(&self) -> &[f64] {
        match self {
            Estimate::Vector { stderr, .. } | Estimate::Matrix { stderr, .. } => stderr,
        }
    }
}

/// Estimates beside their snapshot times.
pub fn estimates_to_json(times: &[f64], estimates: &[Estimate]) -> serde_json::Value {
    let items: Vec<serde_json::Value> = estimates
        .iter()
        .map(|e| match e {
            Estimate::Vector { mean, stderr } => serde_json::json!({ "mean": mean.to_json(), "stderr": stderr }),
            Estimate::Matrix { mean, stderr } => serde_json::json!({ "mean": mean.to_json(), "stderr": stderr }),
        })
        .collect();
    serde_json::json!({ "times": times, "estimates": items })
}

/// Inverse of [`estimates_to_json`].
pub fn estimates_from_json(v: &serde_json::Value) -> Result<(Vec<f64>, Vec<Estimate>)> {
    let bad = |what: &str| Error::Invalid(format!("estimate JSON: {what}"));
    let times: Vec<f64> = v
        .get("times")
        .and_then(|t| serde_json::from_value(t.clone()).ok())
        .ok_or_else(|| bad("missing or malformed `times`"))?;
    let items = v.get("estimates").and_then(|e| e.as_array()).ok_or_else(|| bad("missing `estimates`"))?;
    if items.len() != times.len() {
        return Err(bad(&format!("{} estimates for {} times", items.len(), times.len())));
    }
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let mean = item.get("mean").ok_or_else(|| bad("estimate without `mean`"))?;
        let stderr: Vec<f64> = item
            .get("stderr")
            .and_then(|s| serde_json::from_value(s.clone()).ok())
            .ok_or_else(|| bad("estimate without `stderr`"))?;
        let est = if mean.get("entries").is_some() {
            Estimate::Matrix { mean: FockMatrix::from_json(mean)?, stderr }
        } else {
            Estimate::Vector { mean: FockVector::from_json(mean)?, stderr }
        };
        let expect = match &est {
            Estimate::Vector { mean, .. } => mean.basis.size(),
            Estimate::Matrix { mean, .. } => mean.size() * mean.size(),
        };
        if est.stderr().len() != expect {
            return Err(bad(&format!("{} standard errors for {expect} components", est.stderr().len())));
        }
        out.push(est);
    }
    Ok((times, out))
}

/// One row per vector component and time; matrix estimates are skipped.
pub fn estimates_to_csv(times: &[f64], estimates: &[Estimate]) -> String {
    let mut out = String::from("time,component,mean,mean_im,stderr\n");
    for (t, e) in times.iter().zip(estimates) {
        let Estimate::Vector { mean, stderr } = e else { continue };
        for (pos, (c, s)) in mean.coeffs.iter().zip(stderr).enumerate() {
            let name = moment_name(mean.basis.exponents(pos));
            writeln!(out, "{},{name},{},{},{}", fmt12(*t), fmt12(c.re), fmt12(c.im), fmt12(*s)).unwrap();
        }
    }
    out
}

fn pure_coeffs(kind: EstimatorKind, state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec) -> Result<FockVector> {
    match kind {
        EstimatorKind::U if basis.layout() == Layout::Plain && spec.order == 2 => {
            // Plain slots over (X, X'/m).
            let n = spec.n;
            let y: Vec<f64> = (0..2 * n).map(|k| if k < n { state[k] } else { state[k] / spec.mass(k - n) }).collect();
            pure_u(&y, basis)
        }
        EstimatorKind::U => pure_u_state(state, basis, spec),
        EstimatorKind::V => pure_v(state, basis, spec),
        EstimatorKind::W | EstimatorKind::RhoW => pure_w(state, basis, spec),
    }
}

// Σ x and Σ |x|² over a sample range, by a fixed binary tree.
fn pairwise(
    states: &[Vec<f64>],
    len: usize,
    f: &(dyn Fn(&[f64]) -> Result<Vec<C64>> + Sync),
) -> Result<(Vec<C64>, Vec<f64>)> {
    if states.len() <= LEAF {
        let mut s = vec![ZERO; len];
        let mut q = vec![0.0; len];
        for x in states {
            let v = f(x)?;
            for i in 0..len {
                s[i] += v[i];
                q[i] += v[i].norm_sqr();
            }
        }
        return Ok((s, q));
    }
    let mid = states.len() / 2;
    let (l, r) = rayon::join(|| pairwise(&states[..mid], len, f), || pairwise(&states[mid..], len, f));
    let (mut s, mut q) = l?;
    let (s2, q2) = r?;
    for i in 0..len {
        s[i] += s2[i];
        q[i] += q2[i];
    }
    Ok((s, q))
}

fn finish(sum: Vec<C64>, sq: Vec<f64>, n: usize) -> (Vec<C64>, Vec<f64>) {
    let nf = n as f64;
    let mean: Vec<C64> = sum.iter().map(|s| s / nf).collect();
    let stderr = if n < 2 {
        vec![0.0; mean.len()]
    } else {
        mean.iter()
            .zip(&sq)
            .map(|(m, q)| {
                let var = ((q - nf * m.norm_sqr()) / (nf - 1.0)).max(0.0);
                (var / nf).sqrt()
            })
            .collect()
    };
    (mean, stderr)
}

/// Sample means of pure states (or outer products for `RhoW`) at every
/// snapshot time.
pub fn empirical_moments(
    samples: &SampleSet,
    basis: &Arc<FockBasis>,
    spec: &SystemSpec,
    kind: EstimatorKind,
) -> Result<Vec<Estimate>> {
    let size = basis.size();
    let mut out = Vec::with_capacity(samples.states.len());
    for states in &samples.states {
        if states.is_empty() {
            return Err(Error::Invalid("no samples".into()));
        }
        if kind == EstimatorKind::RhoW {
            let f = |x: &[f64]| -> Result<Vec<C64>> {
                let w = pure_coeffs(kind, x, basis, spec)?.coeffs;
                let mut m = vec![ZERO; size * size];
                for r in 0..size {
                    for c in 0..size {
                        m[r * size + c] = w[r] * w[c].conj();
                    }
                }
                Ok(m)
            };
            let (s, q) = pairwise(states, size * size, &f)?;
            let (mean, stderr) = finish(s, q, states.len());
            out.push(Estimate::Matrix { mean: FockMatrix::from_dense(basis.clone(), MatrixKind::RhoW, &mean), stderr });
        } else {
            let f = |x: &[f64]| Ok(pure_coeffs(kind, x, basis, spec)?.coeffs);
            let (s, q) = pairwise(states, size, &f)?;
            let (coeffs, stderr) = finish(s, q, states.len());
            let vkind = pure_coeffs(kind, &states[0], basis, spec)?.kind;
            out.push(Estimate::Vector { mean: FockVector { basis: basis.clone(), coeffs, kind: vkind }, stderr });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    /// Outside the model tolerance but within three standard errors.
    Indistinguishable,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub time: f64,
    pub component: String,
    pub degree: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub stderr: f64,
    pub error: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rel_tol: f64,
    pub degrees: Vec<usize>,
    pub rows: Vec<ComparisonRow>,
    /// Largest `|analytic − empirical| / |empirical|` per degree.
    pub max_rel_error: BTreeMap<usize, f64>,
    /// Largest absolute error per degree.
    pub max_abs_error: BTreeMap<usize, f64>,
    pub passed: bool,
}

impl ComparisonReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,component,analytic,empirical,stderr,verdict\n");
        for r in &self.rows {
            let v = match r.verdict {
                Verdict::Pass => "pass",
                Verdict::Indistinguishable => "indistinguishable",
                Verdict::Fail => "fail",
            };
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt12(r.time),
                r.component,
                fmt12(r.analytic),
                fmt12(r.empirical),
                fmt12(r.stderr),
                v
            )
            .unwrap();
        }
        out
    }
}

/// Component-wise verdicts for the moments of the requested degrees.
///
/// Moment components of `u` and `v` trajectories are compared as raw
/// moments; other vector kinds compare coefficients. A component passes
/// when its error is within `rel_tol · |empirical|` or three standard
/// errors.
pub fn compare(
    analytic: &TrajectoryReport,
    empirical: &[Estimate],
    degrees: &[usize],
    rel_tol: f64,
) -> Result<ComparisonReport> {
    let Snapshots::Vectors(snaps) = &analytic.snapshots else {
        return Err(Error::Invalid("comparison needs a vector trajectory".into()));
    };
    if snaps.len() != empirical.len() {
        return Err(Error::GridMismatch(format!(
            "{} analytic snapshots against {} empirical ones",
            snaps.len(),
            empirical.len()
        )));
    }
    let times = analytic.times();
    let mut rows = Vec::new();
    let mut max_rel = BTreeMap::new();
    let mut max_abs = BTreeMap::new();
    for &d in degrees {
        max_rel.insert(d, 0.0f64);
        max_abs.insert(d, 0.0f64);
    }
    for ((snap, est), &t) in snaps.iter().zip(empirical).zip(&times) {
        let Estimate::Vector { mean, stderr } = est else {
            return Err(Error::Invalid("comparison needs vector estimates".into()));
        };
        if mean.basis.descriptor() != snap.basis.descriptor() || mean.kind != snap.kind {
            return Err(Error::GridMismatch("analytic and empirical bases or kinds differ".into()));
        }
        let basis = &snap.basis;
        for &d in degrees {
            if d > basis.cutoff() {
                return Err(Error::Dimension(format!("degree {d} exceeds the cutoff {}", basis.cutoff())));
            }
            for pos in basis.degree_range(d) {
                let e = basis.exponents(pos);
                let scale = moment_scale(snap.kind, e).unwrap_or(1.0);
                let (a, m, s) = (snap.coeffs[pos] * scale, mean.coeffs[pos] * scale, stderr[pos] * scale);
                let err = (a - m).norm();
                let model = rel_tol * m.norm();
                let tolerance = model.max(3.0 * s);
                let verdict = if err <= model {
                    Verdict::Pass
                } else if err <= 3.0 * s {
                    Verdict::Indistinguishable
                } else {
                    Verdict::Fail
                };
                let rel = err / m.norm().max(f64::MIN_POSITIVE);
                let r = max_rel.get_mut(&d).unwrap();
                *r = f64::max(*r, rel);
                let ab = max_abs.get_mut(&d).unwrap();
                *ab = f64::max(*ab, err);
                rows.push(ComparisonRow {
                    time: t,
                    component: moment_name(e),
                    degree: d,
                    analytic: a.re,
                    empirical: m.re,
                    stderr: s,
                    error: err,
                    tolerance,
                    verdict,
                });
            }
        }
    }
    let passed = rows.iter().all(|r| r.verdict != Verdict::Fail);
    Ok(ComparisonReport { rel_tol, degrees: degrees.to_vec(), rows, max_rel_error: max_rel, max_abs_error: max_abs, passed })
}

/// Largest `|H(t) − H(0)| / |H(0)|` over samples and snapshot times.
pub fn energy_drift(spec: &SystemSpec, samples: &SampleSet) -> Result<f64> {
    let pot = Potential::of(spec)?;
    let first = &samples.states[0];
    let mut worst = 0.0f64;
    for states in &samples.states[1..] {
        for (s0, s) in first.iter().zip(states) {
            let h0 = pot.energy(s0);
            let h = pot.energy(s);
            worst = worst.max((h - h0).abs() / h0.abs().max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}
