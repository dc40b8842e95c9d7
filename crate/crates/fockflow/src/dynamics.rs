//! Fixed-step RK4 integration of vector and matrix flows, expectations by
//! trace, and dense spectra.
//!
//! Time points are `t0 + k·dt` computed by multiplication, never by
//! accumulation, so grids built from the same plan agree bitwise.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{scalar_from_json, scalar_json, FockBasis, FockMatrix, FockVector, Layout, VectorKind, C64};
use crate::ops::{materialize, Poly, Species};
use crate::sysspec::SystemSpec;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Default coefficient magnitude treated as blow-up.
pub const DEFAULT_BLOWUP: f64 = 1e12;

/// Largest basis accepted by [`spectrum`].
pub const SPECTRUM_LIMIT: usize = 2000;

/// A fixed RK4 grid and the steps at which snapshots are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
    /// Step indices of the snapshots, ascending, always including 0.
    pub sample_steps: Vec<usize>,
    pub blowup: f64,
}

impl Plan {
    /// `samples` evenly spaced snapshots after the initial one.
    pub fn new(t0: f64, t1: f64, dt: f64, samples: usize) -> Result<Plan> {
        let steps = grid_steps(t0, t1, dt)?;
        let samples = samples.clamp(1, steps.max(1));
        let mut sample_steps: Vec<usize> = (0..=samples).map(|k| (k * steps + samples / 2) / samples).collect();
        sample_steps.dedup();
        Ok(Plan { t0, dt, steps, sample_steps, blowup: DEFAULT_BLOWUP })
    }

    /// Snapshots at the given times, each of which must lie on the grid.
    pub fn at_times(t0: f64, dt: f64, times: &[f64]) -> Result<Plan> {
        let mut sample_steps = vec![0];
        for &t in times {
            let k = grid_steps(t0, t, dt)?;
            sample_steps.push(k);
        }
        sample_steps.sort_unstable();
        sample_steps.dedup();
        let steps = *sample_steps.last().unwrap();
        Ok(Plan { t0, dt, steps, sample_steps, blowup: DEFAULT_BLOWUP })
    }

    pub fn time(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        self.sample_steps.iter().map(|&k| self.time(k)).collect()
    }
}

fn grid_steps(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !t0.is_finite() || !t1.is_finite() || t1 < t0 {
        return Err(Error::Invalid(format!("bad time grid t0={t0} t1={t1} dt={dt}")));
    }
    let x = (t1 - t0) / dt;
    let k = x.round();
    if (x - k).abs() > 1e-6 * k.max(1.0) {
        return Err(Error::GridMismatch(format!("({t1} − {t0}) is not a multiple of dt={dt}")));
    }
    Ok(k as usize)
}

/// `0.1 / ‖G‖₁`, the step heuristic for explicit RK4.
pub fn suggested_dt(gain: &FockMatrix) -> f64 {
    let mut col = vec![0.0f64; gain.size()];
    for (_, c, v) in gain.triplets() {
        col[c] += v.norm();
    }
    let norm = col.into_iter().fold(0.0, f64::max);
    if norm == 0.0 {
        f64::INFINITY
    } else {
        0.1 / norm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    /// `∂ρ = Gρ + ρG^H`.
    Primal,
    /// `∂S = ΓS + SΓ^H − src` with `Γ` the entropy gain (already `−G^H`).
    Entropy,
}

#[derive(Clone, Debug)]
pub enum Snapshots {
    Vectors(Vec<FockVector>),
    Matrices(Vec<FockMatrix>),
}

impl Snapshots {
    pub fn len(&self) -> usize {
        match self {
            Snapshots::Vectors(v) => v.len(),
            Snapshots::Matrices(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegratorMeta {
    pub scheme: String,
    pub dt: f64,
    pub steps: usize,
    /// Largest step-doubling difference over the snapshot times, divided by 15.
    pub max_local_error: f64,
    /// Largest `|M − M^H|` seen at snapshots, for matrix flows.
    pub max_hermitian_defect: Option<f64>,
}

/// A named expectation series over the snapshot times.
#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub values: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryReport {
    pub plan: Plan,
    pub kind: String,
    pub snapshots: Snapshots,
    pub expectations: Vec<Series>,
    pub meta: IntegratorMeta,
}

impl TrajectoryReport {
    pub fn times(&self) -> Vec<f64> {
        self.plan.times()
    }

    pub fn final_vector(&self) -> Option<&FockVector> {
        match &self.snapshots {
            Snapshots::Vectors(v) => v.last(),
            Snapshots::Matrices(_) => None,
        }
    }

    pub fn final_matrix(&self) -> Option<&FockMatrix> {
        match &self.snapshots {
            Snapshots::Matrices(m) => m.last(),
            Snapshots::Vectors(_) => None,
        }
    }

    /// Adds one series per observable, evaluated at every snapshot.
    pub fn add_expectations(&mut self, observables: &[(String, Poly)]) -> Result<()> {
        for (name, obs) in observables {
            let values = match &self.snapshots {
                Snapshots::Vectors(v) => v.iter().map(|x| expectation_vector(x, obs)).collect::<Result<_>>()?,
                Snapshots::Matrices(m) => m.iter().map(|x| expectation(x, obs)).collect::<Result<_>>()?,
            };
            self.expectations.push(Series { name: name.clone(), values });
        }
        Ok(())
    }

    /// Adds raw-moment series read directly from moment coefficients.
    pub fn add_moments(&mut self, exps: &[Vec<u8>]) -> Result<()> {
        let Snapshots::Vectors(v) = &self.snapshots else {
            return Err(Error::Invalid("moment series need a vector trajectory".into()));
        };
        for e in exps {
            let values = v.iter().map(|x| moment(x, e)).collect::<Result<_>>()?;
            self.expectations.push(Series { name: moment_name(e), values });
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let snaps: Vec<serde_json::Value> = match &self.snapshots {
            Snapshots::Vectors(v) => v.iter().map(|x| x.to_json()).collect(),
            Snapshots::Matrices(m) => m.iter().map(|x| x.to_json()).collect(),
        };
        let ex: Vec<serde_json::Value> = self
            .expectations
            .iter()
            .map(|s| {
                serde_json::json!({
                    "name": s.name,
                    "values": s.values.iter().map(|&c| scalar_json(c)).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "kind": self.kind,
            "plan": self.plan,
            "times": self.times(),
            "integrator": self.meta,
            "expectations": ex,
            "snapshots": snaps,
        })
    }

    /// Inverse of [`TrajectoryReport::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Result<TrajectoryReport> {
        let bad = |what: &str| Error::Invalid(format!("trajectory JSON: {what}"));
        let get = |name: &str| v.get(name).ok_or_else(|| bad(&format!("missing `{name}`")));
        let plan: Plan = serde_json::from_value(get("plan")?.clone()).map_err(|e| bad(&e.to_string()))?;
        let meta: IntegratorMeta = serde_json::from_value(get("integrator")?.clone()).map_err(|e| bad(&e.to_string()))?;
        let kind = get("kind")?.as_str().ok_or_else(|| bad("`kind` must be a string"))?.to_string();
        let raw = get("snapshots")?.as_array().ok_or_else(|| bad("`snapshots` must be a list"))?;
        if raw.len() != plan.sample_steps.len() {
            return Err(bad(&format!("{} snapshots for {} plan times", raw.len(), plan.sample_steps.len())));
        }
        let snapshots = if raw.first().is_some_and(|s| s.get("entries").is_some()) {
            Snapshots::Matrices(raw.iter().map(FockMatrix::from_json).collect::<Result<_>>()?)
        } else {
            Snapshots::Vectors(raw.iter().map(FockVector::from_json).collect::<Result<_>>()?)
        };
        let mut expectations = Vec::new();
        for s in get("expectations")?.as_array().ok_or_else(|| bad("`expectations` must be a list"))? {
            let name = s.get("name").and_then(|n| n.as_str()).ok_or_else(|| bad("series without a name"))?;
            let values = s
                .get("values")
                .and_then(|x| x.as_array())
                .ok_or_else(|| bad("series without values"))?
                .iter()
                .map(scalar_from_json)
                .collect::<Result<_>>()?;
            expectations.push(Series { name: name.to_string(), values });
        }
        Ok(TrajectoryReport { plan, kind, snapshots, expectations, meta })
    }

    /// One row per snapshot time; complex series get an `_im` column when
    /// any imaginary part is nonzero.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        let complex: Vec<bool> = self.expectations.iter().map(|s| s.values.iter().any(|c| c.im != 0.0)).collect();
        for (s, &cx) in self.expectations.iter().zip(&complex) {
            write!(out, ",{}", s.name).unwrap();
            if cx {
                write!(out, ",{}_im", s.name).unwrap();
            }
        }
        out.push('\n');
        for (row, t) in self.times().iter().enumerate() {
            out.push_str(&fmt12(*t));
            for (s, &cx) in self.expectations.iter().zip(&complex) {
                write!(out, ",{}", fmt12(s.values[row].re)).unwrap();
                if cx {
                    write!(out, ",{}", fmt12(s.values[row].im)).unwrap();
                }
            }
            out.push('\n');
        }
        out
    }
}

/// 12 significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn moment_name(e: &[u8]) -> String {
    let mut s = String::from("m");
    for (k, x) in e.iter().enumerate() {
        if k > 0 {
            s.push('_');
        }
        write!(s, "{x}").unwrap();
    }
    s
}

fn check_same_basis(a: &Arc<FockBasis>, b: &Arc<FockBasis>) -> Result<()> {
    if a.descriptor() != b.descriptor() {
        return Err(Error::Dimension("gain and state live on different bases".into()));
    }
    Ok(())
}

fn max_abs(x: &[C64]) -> f64 {
    x.iter().fold(0.0, |m, c| m.max(c.norm()))
}

fn blew_up(x: &[C64], bound: f64) -> Option<f64> {
    let m = max_abs(x);
    (!(m <= bound)).then_some(m)
}

// One RK4 step of dx/dt = f(x), written into `out`.
fn rk4_step(f: &dyn Fn(&[C64], &mut [C64]), x: &[C64], dt: f64, out: &mut [C64], scratch: &mut [Vec<C64>; 5]) {
    let [k1, k2, k3, k4, tmp] = scratch;
    f(x, k1);
    for i in 0..x.len() {
        tmp[i] = x[i] + k1[i] * (0.5 * dt);
    }
    f(tmp, k2);
    for i in 0..x.len() {
        tmp[i] = x[i] + k2[i] * (0.5 * dt);
    }
    f(tmp, k3);
    for i in 0..x.len() {
        tmp[i] = x[i] + k3[i] * dt;
    }
    f(tmp, k4);
    let w = dt / 6.0;
    for i in 0..x.len() {
        out[i] = x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * w;
    }
}

// Drives the fixed grid, keeping snapshots and a step-doubling error estimate.
fn drive(
    f: &dyn Fn(&[C64], &mut [C64]),
    init: Vec<C64>,
    plan: &Plan,
    mut keep: impl FnMut(&[C64]),
) -> Result<f64> {
    let len = init.len();
    let mut scratch: [Vec<C64>; 5] = std::array::from_fn(|_| vec![ZERO; len]);
    let mut x = init;
    let mut next = vec![ZERO; len];
    let mut half = vec![ZERO; len];
    let mut two = vec![ZERO; len];
    let mut err = 0.0f64;
    let mut sample = plan.sample_steps.iter().peekable();
    if sample.peek() == Some(&&0) {
        keep(&x);
        sample.next();
    }
    for step in 1..=plan.steps {
        let at_sample = sample.peek() == Some(&&(step - 1));
        rk4_step(f, &x, plan.dt, &mut next, &mut scratch);
        if at_sample || step == 1 {
            rk4_step(f, &x, 0.5 * plan.dt, &mut half, &mut scratch);
            rk4_step(f, &half, 0.5 * plan.dt, &mut two, &mut scratch);
            let d = next.iter().zip(&two).fold(0.0f64, |m, (a, b)| m.max((a - b).norm()));
            err = err.max(d / 15.0);
        }
        std::mem::swap(&mut x, &mut next);
        if let Some(m) = blew_up(&x, plan.blowup) {
            return Err(Error::Unstable { step, magnitude: m });
        }
        if sample.peek() == Some(&&step) {
            keep(&x);
            sample.next();
        }
    }
    Ok(err)
}

/// `∂x = G x − src`.
pub fn integrate_vector(
    gain: &FockMatrix,
    source: Option<&FockVector>,
    init: &FockVector,
    plan: &Plan,
) -> Result<TrajectoryReport> {
    check_same_basis(&gain.basis, &init.basis)?;
    if let Some(s) = source {
        check_same_basis(&gain.basis, &s.basis)?;
    }
    let src = source.map(|s| s.coeffs.clone());
    let f = |x: &[C64], out: &mut [C64]| {
        gain.matvec_into(x, out);
        if let Some(s) = &src {
            for (o, v) in out.iter_mut().zip(s) {
                *o -= v;
            }
        }
    };
    let mut snaps = Vec::with_capacity(plan.sample_steps.len());
    let err = drive(&f, init.coeffs.clone(), plan, |x| {
        snaps.push(FockVector { basis: init.basis.clone(), coeffs: x.to_vec(), kind: init.kind });
    })?;
    Ok(TrajectoryReport {
        plan: plan.clone(),
        kind: format!("{:?}", init.kind).to_lowercase(),
        snapshots: Snapshots::Vectors(snaps),
        expectations: Vec::new(),
        meta: IntegratorMeta {
            scheme: "rk4".into(),
            dt: plan.dt,
            steps: plan.steps,
            max_local_error: err,
            max_hermitian_defect: None,
        },
    })
}

/// `∂M = G M + M G^H − src` on a dense state.
pub fn integrate_matrix(
    gain: &FockMatrix,
    source: Option<&FockMatrix>,
    init: &FockMatrix,
    plan: &Plan,
    flow: Flow,
) -> Result<TrajectoryReport> {
    check_same_basis(&gain.basis, &init.basis)?;
    if flow == Flow::Primal && source.is_some() {
        return Err(Error::Invalid("primal matrix flows take no source".into()));
    }
    let size = gain.size();
    let src = match source {
        Some(s) => {
            check_same_basis(&gain.basis, &s.basis)?;
            Some(s.to_dense())
        }
        None => None,
    };
    let trip: Vec<(usize, usize, C64)> = gain.triplets().collect();
    let f = |m: &[C64], out: &mut [C64]| {
        out.iter_mut().for_each(|o| *o = ZERO);
        for &(r, k, g) in &trip {
            // (G M)[r, :] += g M[k, :]
            let (dst, srow) = (r * size, k * size);
            for c in 0..size {
                out[dst + c] += g * m[srow + c];
            }
            // (M G^H)[:, r] += M[:, k] conj(g)
            let gc = g.conj();
            for row in 0..size {
                out[row * size + r] += m[row * size + k] * gc;
            }
        }
        if let Some(s) = &src {
            for (o, v) in out.iter_mut().zip(s) {
                *o -= v;
            }
        }
    };
    let mut snaps = Vec::with_capacity(plan.sample_steps.len());
    let mut herm = 0.0f64;
    let check_herm = init.kind.is_hermitian();
    let err = drive(&f, init.to_dense(), plan, |x| {
        if check_herm {
            for r in 0..size {
                for c in r..size {
                    herm = herm.max((x[r * size + c] - x[c * size + r].conj()).norm());
                }
            }
        }
        snaps.push(FockMatrix::from_dense(init.basis.clone(), init.kind, x));
    })?;
    Ok(TrajectoryReport {
        plan: plan.clone(),
        kind: format!("{:?}", init.kind).to_lowercase(),
        snapshots: Snapshots::Matrices(snaps),
        expectations: Vec::new(),
        meta: IntegratorMeta {
            scheme: "rk4".into(),
            dt: plan.dt,
            steps: plan.steps,
            max_local_error: err,
            max_hermitian_defect: check_herm.then_some(herm),
        },
    })
}

/// `Tr(M ρ)` with `M` the materialized observable.
pub fn expectation(rho: &FockMatrix, observable: &Poly) -> Result<C64> {
    let m = materialize(observable, &rho.basis)?;
    let mut s = ZERO;
    for (r, c, v) in m.triplets() {
        s += v * rho.get(c, r);
    }
    Ok(s)
}

/// `x^H M x`: the pure-state pairing of a `w`-kind vector.
pub fn expectation_vector(x: &FockVector, observable: &Poly) -> Result<C64> {
    let m = materialize(observable, &x.basis)?;
    let mx = m.matvec(&x.coeffs);
    Ok(x.coeffs.iter().zip(&mx).map(|(a, b)| a.conj() * b).sum())
}

/// Factor turning a coefficient into the raw moment `⟨Π y^α⟩`: 1 for
/// `u`, `sqrt(α!)` for `v`, none for kinds that are not linear in moments.
pub fn moment_scale(kind: VectorKind, exps: &[u8]) -> Option<f64> {
    match kind {
        VectorKind::U => Some(1.0),
        VectorKind::V => {
            let f: f64 = exps.iter().map(|&e| (1..=e as u32).map(f64::from).product::<f64>()).product();
            Some(f.sqrt())
        }
        _ => None,
    }
}

/// The moment `⟨Π y^α⟩` read from a `u` or `v` coefficient vector.
pub fn moment(x: &FockVector, exps: &[u8]) -> Result<C64> {
    let pos = x
        .basis
        .position(exps)
        .ok_or_else(|| Error::Dimension(format!("moment {exps:?} lies outside the basis")))?;
    let s = moment_scale(x.kind, exps)
        .ok_or_else(|| Error::Invalid(format!("moments are linear only in u and v vectors, not {:?}", x.kind)))?;
    Ok(x.coeffs[pos] * s)
}

/// The position observable `X_k` in the basis layout's ladder letters.
pub fn position_observable(spec: &SystemSpec, layout: Layout, k: usize) -> Poly {
    match layout {
        Layout::ConjugatePairs => {
            let s = 1.0 / spec.mass(k).sqrt();
            Poly::letter(Species::A, k).add(&Poly::letter(Species::B, k)).scale(s)
        }
        _ => Poly::letter(Species::A, k),
    }
}

/// Dense eigenvalues sorted by real then imaginary part.
pub fn spectrum(gain: &FockMatrix) -> Result<Vec<C64>> {
    let n = gain.size();
    if n > SPECTRUM_LIMIT {
        return Err(Error::SizeLimit { size: n as u128, limit: SPECTRUM_LIMIT });
    }
    let m = DMatrix::from_row_slice(n, n, &gain.to_dense());
    let schur = nalgebra::linalg::Schur::try_new(m, 1e-14, 0)
        .ok_or_else(|| Error::Divergence("Schur iteration did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut ev: Vec<C64> = t.diagonal().iter().copied().collect();
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(ev)
}

/// First snapshot time at which `u_2 − u_1² < −1e-9` for some slot of a
/// plain `u` trajectory.
pub fn first_variance_violation(report: &TrajectoryReport) -> Option<(f64, usize)> {
    let Snapshots::Vectors(v) = &report.snapshots else { return None };
    let times = report.times();
    for (x, t) in v.iter().zip(times) {
        if x.kind != VectorKind::U || x.basis.cutoff() < 2 {
            return None;
        }
        let n = x.basis.n();
        for k in 0..n {
            let mut e = vec![0u8; n];
            e[k] = 1;
            let m1 = x.coeffs[x.basis.position(&e).unwrap()].re;
            e[k] = 2;
            let m2 = x.coeffs[x.basis.position(&e).unwrap()].re;
            if m2 - m1 * m1 < -1e-9 {
                return Some((t, k));
            }
        }
    }
    None
}
