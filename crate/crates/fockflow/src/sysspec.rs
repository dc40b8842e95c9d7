//! Declarative polynomial dynamical systems.
//!
//! An order-1 system is `dX/dt = f(X)` and an order-2 system is
//! `d²X/dt² = f(X)`, where
//!
//! ```text
//! f_i(X) = Σ_j A_ij X_j + Σ_jk B_ijk X_j X_k + Σ_jkl C_ijkl X_j X_k X_l
//! ```
//!
//! and, when `masses` are given (order 2 only), the linear part is
//! `−m_i² X_i` instead of `A`. Tensors are stored exactly as written: `B_ijk`
//! and `B_ikj` jointly define the coefficient of `X_j X_k`, and the
//! divergence needs the two placements separately.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice parameters for a periodic nonlinear Klein-Gordon discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub points: usize,
    pub mass: f64,
    pub coupling: f64,
    pub power: u32,
    pub spacing: f64,
}

impl LatticeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::Invalid(format!(
                "lattice needs at least 2 points, got {}",
                self.points
            )));
        }
        if !(self.mass > 0.0) {
            return Err(Error::Invalid(format!("lattice mass must be positive, got {}", self.mass)));
        }
        if !(self.spacing > 0.0) {
            return Err(Error::Invalid(format!(
                "lattice spacing must be positive, got {}",
                self.spacing
            )));
        }
        if self.power != 2 && self.power != 3 {
            return Err(Error::Invalid(format!("lattice power must be 2 or 3, got {}", self.power)));
        }
        if !self.coupling.is_finite() {
            return Err(Error::Invalid("lattice coupling must be finite".into()));
        }
        Ok(())
    }
}

/// A validated polynomial system. Tensors are flat, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem", into = "RawSystem")]
pub struct SystemSpec {
    pub name: String,
    pub order: u8,
    pub n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Option<Vec<f64>>,
    pub masses: Option<Vec<f64>>,
    pub lattice: Option<LatticeSpec>,
    pub meta: Option<serde_json::Value>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(default)]
    name: String,
    order: u8,
    n: usize,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    masses: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lattice: Option<LatticeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<serde_json::Value>,
}

fn flatten2(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Vec<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        let shape: Vec<usize> = rows.iter().map(Vec::len).collect();
        return Err(Error::Dimension(format!("{what} must be {n}×{n}, got rows of lengths {shape:?}")));
    }
    Ok(rows.iter().flatten().copied().collect())
}

fn flatten3(t: &[Vec<Vec<f64>>], n: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != n {
        return Err(Error::Dimension(format!("{what} must have {n} slices, got {}", t.len())));
    }
    let mut out = Vec::with_capacity(n * n * n);
    for slice in t {
        out.extend(flatten2(slice, n, what)?);
    }
    Ok(out)
}

fn flatten4(t: &[Vec<Vec<Vec<f64>>>], n: usize, what: &str) -> Result<Vec<f64>> {
    if t.len() != n {
        return Err(Error::Dimension(format!("{what} must have {n} blocks, got {}", t.len())));
    }
    let mut out = Vec::with_capacity(n.pow(4));
    for block in t {
        out.extend(flatten3(block, n, what)?);
    }
    Ok(out)
}

fn nest2(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n).map(<[f64]>::to_vec).collect()
}

fn nest3(flat: &[f64], n: usize) -> Vec<Vec<Vec<f64>>> {
    flat.chunks(n * n).map(|s| nest2(s, n)).collect()
}

fn nest4(flat: &[f64], n: usize) -> Vec<Vec<Vec<Vec<f64>>>> {
    flat.chunks(n * n * n).map(|s| nest3(s, n)).collect()
}

impl TryFrom<RawSystem> for SystemSpec {
    type Error = Error;

    fn try_from(raw: RawSystem) -> Result<Self> {
        let n = raw.n;
        let a = match &raw.a {
            Some(rows) => flatten2(rows, n, "A")?,
            None => vec![0.0; n * n],
        };
        let b = flatten3(&raw.b, n, "B")?;
        let c = raw.c.as_deref().map(|t| flatten4(t, n, "C")).transpose()?;
        SystemSpec::new(raw.name, raw.order, n, a, b, c, raw.masses, raw.lattice, raw.meta)
    }
}

impl From<SystemSpec> for RawSystem {
    fn from(s: SystemSpec) -> Self {
        let n = s.n;
        RawSystem {
            name: s.name,
            order: s.order,
            n,
            a: Some(nest2(&s.a, n)),
            b: nest3(&s.b, n),
            c: s.c.as_deref().map(|c| nest4(c, n)),
            masses: s.masses,
            lattice: s.lattice,
            meta: s.meta,
        }
    }
}

/// Parses and validates a system document.
pub fn parse_system(text: &str) -> Result<SystemSpec> {
    serde_json::from_str::<SystemSpec>(text).map_err(|e| {
        // serde_json reports validation failures from `try_from` as data
        // errors; surface ours unchanged.
        let msg = e.to_string();
        match e.classify() {
            serde_json::error::Category::Data => classify_data_error(&msg, e.line(), e.column()),
            _ => Error::Syntax {
                line: e.line(),
                column: e.column(),
                message: msg,
            },
        }
    })
}

fn classify_data_error(msg: &str, line: usize, column: usize) -> Error {
    let body = msg.split(" at line ").next().unwrap_or(msg).to_string();
    for (prefix, make) in [
        ("dimension mismatch: ", Error::Dimension as fn(String) -> Error),
        ("unsupported system order: ", Error::Order as fn(String) -> Error),
        ("invalid input: ", Error::Invalid as fn(String) -> Error),
    ] {
        if let Some(rest) = body.strip_prefix(prefix) {
            return make(rest.to_string());
        }
    }
    Error::Syntax { line, column, message: msg.to_string() }
}

/// Serializes at full double precision.
pub fn to_json(spec: &SystemSpec) -> String {
    serde_json::to_string_pretty(spec).expect("SystemSpec serialization cannot fail")
}

impl SystemSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        order: u8,
        n: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Option<Vec<f64>>,
        masses: Option<Vec<f64>>,
        lattice: Option<LatticeSpec>,
        meta: Option<serde_json::Value>,
    ) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(Error::Order(format!("order must be 1 or 2, got {order}")));
        }
        if n == 0 {
            return Err(Error::Dimension("n must be positive".into()));
        }
        if a.len() != n * n {
            return Err(Error::Dimension(format!("A must have {} entries, got {}", n * n, a.len())));
        }
        if b.len() != n * n * n {
            return Err(Error::Dimension(format!("B must have {} entries, got {}", n.pow(3), b.len())));
        }
        if let Some(c) = &c {
            if c.len() != n.pow(4) {
                return Err(Error::Dimension(format!("C must have {} entries, got {}", n.pow(4), c.len())));
            }
        }
        let all = a.iter().chain(&b).chain(c.iter().flatten());
        if all.clone().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("coefficients must be finite".into()));
        }
        if let Some(m) = &masses {
            if order != 2 {
                return Err(Error::Invalid("masses are only meaningful for order-2 systems".into()));
            }
            if m.len() != n {
                return Err(Error::Dimension(format!("masses must have {n} entries, got {}", m.len())));
            }
            if let Some(bad) = m.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::Invalid(format!("masses must be positive, got {bad}")));
            }
            if a.iter().any(|&x| x != 0.0) {
                return Err(Error::Invalid(
                    "A must be zero when masses carry the linear part".into(),
                ));
            }
        }
        if let Some(l) = &lattice {
            l.validate()?;
        }
        Ok(SystemSpec { name, order, n, a, b, c, masses, lattice, meta })
    }

    /// `dX/dt = A X + B X X (+ C X X X)`.
    pub fn first_order(name: &str, n: usize, a: Vec<f64>, b: Vec<f64>, c: Option<Vec<f64>>) -> Result<Self> {
        Self::new(name.into(), 1, n, a, b, c, None, None, None)
    }

    /// `d²X/dt² = −m² X + B X X (+ C X X X)`.
    pub fn second_order(name: &str, masses: Vec<f64>, b: Vec<f64>, c: Option<Vec<f64>>) -> Result<Self> {
        let n = masses.len();
        Self::new(name.into(), 2, n, vec![0.0; n * n], b, c, Some(masses), None, None)
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn b(&self, i: usize, j: usize, k: usize) -> f64 {
        self.b[(i * self.n + j) * self.n + k]
    }

    pub fn c(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        match &self.c {
            Some(c) => c[((i * self.n + j) * self.n + k) * self.n + l],
            None => 0.0,
        }
    }

    pub fn has_cubic(&self) -> bool {
        self.c.as_ref().is_some_and(|c| c.iter().any(|&x| x != 0.0))
    }

    pub fn a_flat(&self) -> &[f64] {
        &self.a
    }

    pub fn b_flat(&self) -> &[f64] {
        &self.b
    }

    pub fn c_flat(&self) -> Option<&[f64]> {
        self.c.as_deref()
    }

    /// Mass of mode `i`; 1 when the system carries no masses.
    pub fn mass(&self, i: usize) -> f64 {
        self.masses.as_ref().map_or(1.0, |m| m[i])
    }

    /// The full polynomial `f(X)`, including `−m² X` when masses are present.
    pub fn force(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.force_into(x, &mut out);
        out
    }

    /// [`SystemSpec::force`] into a caller-provided buffer of length `n`.
    pub fn force_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.a[i * n + j] * x[j];
            }
            if let Some(m) = &self.masses {
                acc -= m[i] * m[i] * x[i];
            }
            for j in 0..n {
                let row = &self.b[(i * n + j) * n..(i * n + j + 1) * n];
                let mut inner = 0.0;
                for k in 0..n {
                    inner += row[k] * x[k];
                }
                acc += inner * x[j];
            }
            if let Some(c) = &self.c {
                for j in 0..n {
                    for k in 0..n {
                        let row = &c[((i * n + j) * n + k) * n..((i * n + j) * n + k + 1) * n];
                        let mut inner = 0.0;
                        for l in 0..n {
                            inner += row[l] * x[l];
                        }
                        acc += inner * x[j] * x[k];
                    }
                }
            }
            *o = acc;
        }
    }

    /// Length of the ODE state: `n` for order 1, `2n` (positions then
    /// velocities) for order 2.
    pub fn state_len(&self) -> usize {
        self.n * self.order as usize
    }

    /// Right-hand side of the equivalent first-order ODE on the raw state.
    pub fn rhs(&self, state: &[f64], out: &mut [f64]) {
        let n = self.n;
        if self.order == 1 {
            self.force_into(state, out);
        } else {
            out[..n].copy_from_slice(&state[n..]);
            self.force_into(&state[..n], &mut out[n..]);
        }
    }
}

/// Rewrites `X'' = f(X)` as `Y' = F(Y)` with `Y = (X, X')`.
pub fn to_first_order(spec: &SystemSpec) -> Result<SystemSpec> {
    if spec.order != 2 {
        return Err(Error::Order("to_first_order needs an order-2 system".into()));
    }
    lift(spec, &vec![1.0; spec.n], "first-order")
}

/// The first-order system over `Y = (X, X'/m)`, with `m = 1` when the system
/// has no masses. Order-1 input is returned unchanged.
///
/// This is the real coordinate system in which the second slot block is
/// annihilated by `b`, so `m_i X_i` and `X'_i / m_i` appear symmetrically.
pub fn real_form(spec: &SystemSpec) -> SystemSpec {
    if spec.order == 1 {
        return spec.clone();
    }
    let scale: Vec<f64> = (0..spec.n).map(|i| spec.mass(i)).collect();
    lift(spec, &scale, "real-form").expect("order-2 input is valid by construction")
}

// Y_i = X_i, Y_{n+i} = X'_i / s_i.
fn lift(spec: &SystemSpec, s: &[f64], tag: &str) -> Result<SystemSpec> {
    let n = spec.n;
    let big = 2 * n;
    let mut a = vec![0.0; big * big];
    for i in 0..n {
        a[i * big + n + i] = s[i];
        for j in 0..n {
            let mut lin = spec.a(i, j);
            if i == j {
                if let Some(m) = &spec.masses {
                    lin -= m[i] * m[i];
                }
            }
            a[(n + i) * big + j] = lin / s[i];
        }
    }
    let mut b = vec![0.0; big.pow(3)];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                b[((n + i) * big + j) * big + k] = spec.b(i, j, k) / s[i];
            }
        }
    }
    let c = spec.c.as_ref().map(|_| {
        let mut c = vec![0.0; big.pow(4)];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        c[(((n + i) * big + j) * big + k) * big + l] = spec.c(i, j, k, l) / s[i];
                    }
                }
            }
        }
        c
    });
    SystemSpec::new(
        format!("{}-{tag}", spec.name),
        1,
        big,
        a,
        b,
        c,
        None,
        None,
        spec.meta.clone(),
    )
}

/// `(Tr A, v)` with `v_k = Σ_i (B_iik + B_iki)`, so that
/// `div f(X) = Tr A + v·X`.
pub fn divergence_coefficients(spec: &SystemSpec) -> Result<(f64, Vec<f64>)> {
    if spec.order != 1 {
        return Err(Error::Order("divergence needs an order-1 system".into()));
    }
    let n = spec.n;
    let trace = (0..n).map(|i| spec.a(i, i)).sum();
    let lin = (0..n)
        .map(|k| (0..n).map(|i| spec.b(i, i, k) + spec.b(i, k, i)).sum())
        .collect();
    Ok((trace, lin))
}

/// Cubic terms contribute `Σ_i (C_iikl + C_ikil + C_ikli) X_k X_l` to the
/// divergence; they vanish for every system the gains support as
/// noncompressive.
fn cubic_divergence_is_zero(spec: &SystemSpec) -> bool {
    let n = spec.n;
    if !spec.has_cubic() {
        return true;
    }
    for k in 0..n {
        for l in 0..n {
            let s: f64 = (0..n)
                .map(|i| spec.c(i, i, k, l) + spec.c(i, k, i, l) + spec.c(i, k, l, i))
                .sum();
            if s.abs() > 1e-14 {
                return false;
            }
        }
    }
    true
}

/// Zero divergence everywhere. Order-2 systems are tested in first-order form.
pub fn is_noncompressive(spec: &SystemSpec) -> bool {
    let first = if spec.order == 2 { to_first_order(spec).expect("order 2") } else { spec.clone() };
    let (t, v) = divergence_coefficients(&first).expect("order 1");
    t == 0.0 && v.iter().all(|&x| x == 0.0) && cubic_divergence_is_zero(&first)
}

/// Real orthonormal Fourier modes of a `p`-site periodic lattice, ordered by
/// `(eigenvalue, basis index)`; basis index order is constant, then
/// `cos k, sin k` for increasing `k`, then the alternating mode when `p` is
/// even. Returns `(eigenvalues, Q)` with `Q[s * p + mode]`.
pub fn lattice_modes(p: usize, spacing: f64) -> (Vec<f64>, Vec<f64>) {
    let pf = p as f64;
    let h2 = spacing * spacing;
    let eig = |k: usize| (2.0 - 2.0 * (2.0 * PI * k as f64 / pf).cos()) / h2;
    let mut funcs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(p);
    funcs.push((eig(0), vec![1.0 / pf.sqrt(); p]));
    let half = (p - 1) / 2;
    let norm = (2.0 / pf).sqrt();
    for k in 1..=half {
        let theta = |s: usize| 2.0 * PI * (k * s) as f64 / pf;
        funcs.push((eig(k), (0..p).map(|s| norm * theta(s).cos()).collect()));
        funcs.push((eig(k), (0..p).map(|s| norm * theta(s).sin()).collect()));
    }
    if p % 2 == 0 {
        let alt = (0..p)
            .map(|s| if s % 2 == 0 { 1.0 } else { -1.0 } / pf.sqrt())
            .collect();
        funcs.push((4.0 / h2, alt));
    }
    // Stable sort keeps basis-index order among equal eigenvalues.
    funcs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let eigenvalues = funcs.iter().map(|f| f.0).collect();
    let mut q = vec![0.0; p * p];
    for (mode, (_, v)) in funcs.iter().enumerate() {
        for s in 0..p {
            q[s * p + mode] = v[s];
        }
    }
    (eigenvalues, q)
}

/// Nonlinear Klein-Gordon on a periodic lattice, in normal-mode coordinates.
pub fn kg_lattice(lat: &LatticeSpec) -> Result<SystemSpec> {
    lat.validate()?;
    let p = lat.points;
    let (lambda, q) = lattice_modes(p, lat.spacing);
    let masses: Vec<f64> = lambda.iter().map(|l| (l + lat.mass * lat.mass).sqrt()).collect();
    let g = lat.coupling;
    let mut b = vec![0.0; p.pow(3)];
    let mut c = None;
    if g != 0.0 {
        if lat.power == 2 {
            for i in 0..p {
                for j in 0..p {
                    for k in 0..p {
                        let s: f64 = (0..p).map(|s| q[s * p + i] * q[s * p + j] * q[s * p + k]).sum();
                        b[(i * p + j) * p + k] = g * s;
                    }
                }
            }
        } else {
            let mut t = vec![0.0; p.pow(4)];
            for i in 0..p {
                for j in 0..p {
                    for k in 0..p {
                        for l in 0..p {
                            let s: f64 = (0..p)
                                .map(|s| q[s * p + i] * q[s * p + j] * q[s * p + k] * q[s * p + l])
                                .sum();
                            t[((i * p + j) * p + k) * p + l] = g * s;
                        }
                    }
                }
            }
            c = Some(t);
        }
    }
    SystemSpec::new(
        format!("kg-lattice-p{p}"),
        2,
        p,
        vec![0.0; p * p],
        b,
        c,
        Some(masses),
        Some(lat.clone()),
        None,
    )
}

/// The potential `g` of a gradient order-2 system `X'' = −∇g(X)`.
#[derive(Clone, Debug)]
pub struct Potential {
    n: usize,
    quad: Vec<f64>,
    cubic: Vec<f64>,
    quartic: Option<Vec<f64>>,
}

impl Potential {
    /// Checks the force field is curl-free and builds `g`.
    pub fn of(spec: &SystemSpec) -> Result<Self> {
        if spec.order != 2 {
            return Err(Error::Order("a potential needs an order-2 system".into()));
        }
        let n = spec.n;
        let tol = 1e-12;
        // Linear part: −∂g/∂X = (A − diag m²) X needs a symmetric matrix.
        let mut quad = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if (spec.a(i, j) - spec.a(j, i)).abs() > tol {
                    return Err(Error::NonGradient(format!("A is not symmetric at ({i},{j})")));
                }
                quad[i * n + j] = -0.5 * spec.a(i, j);
            }
            quad[i * n + i] += 0.5 * spec.mass(i).powi(2) * f64::from(spec.masses.is_some());
        }
        let bs = |i: usize, j: usize, k: usize| 0.5 * (spec.b(i, j, k) + spec.b(i, k, j));
        let mut cubic = vec![0.0; n.pow(3)];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if (bs(i, j, k) - bs(j, i, k)).abs() > tol {
                        return Err(Error::NonGradient(format!(
                            "quadratic force is not a gradient at ({i},{j},{k})"
                        )));
                    }
                    cubic[(i * n + j) * n + k] = -bs(i, j, k) / 3.0;
                }
            }
        }
        let quartic = if spec.has_cubic() {
            let cs = |i: usize, j: usize, k: usize, l: usize| {
                (spec.c(i, j, k, l)
                    + spec.c(i, j, l, k)
                    + spec.c(i, k, j, l)
                    + spec.c(i, k, l, j)
                    + spec.c(i, l, j, k)
                    + spec.c(i, l, k, j))
                    / 6.0
            };
            let mut t = vec![0.0; n.pow(4)];
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            if (cs(i, j, k, l) - cs(j, i, k, l)).abs() > tol {
                                return Err(Error::NonGradient(format!(
                                    "cubic force is not a gradient at ({i},{j},{k},{l})"
                                )));
                            }
                            t[((i * n + j) * n + k) * n + l] = -cs(i, j, k, l) / 4.0;
                        }
                    }
                }
            }
            Some(t)
        } else {
            None
        };
        Ok(Potential { n, quad, cubic, quartic })
    }

    /// Coefficients of `X_i X_j` (symmetric).
    pub fn quadratic(&self) -> &[f64] {
        &self.quad
    }

    /// Coefficients of `X_i X_j X_k` (fully symmetric).
    pub fn cubic(&self) -> &[f64] {
        &self.cubic
    }

    /// Coefficients of `X_i X_j X_k X_l` (fully symmetric), if any.
    pub fn quartic(&self) -> Option<&[f64]> {
        self.quartic.as_deref()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut g = 0.0;
        for i in 0..n {
            for j in 0..n {
                g += self.quad[i * n + j] * x[i] * x[j];
                for k in 0..n {
                    g += self.cubic[(i * n + j) * n + k] * x[i] * x[j] * x[k];
                    if let Some(t) = &self.quartic {
                        for l in 0..n {
                            g += t[((i * n + j) * n + k) * n + l] * x[i] * x[j] * x[k] * x[l];
                        }
                    }
                }
            }
        }
        g
    }

    /// `H = ½|X'|² + g(X)` on an order-2 state `(X, X')`.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let n = self.n;
        0.5 * state[n..].iter().map(|v| v * v).sum::<f64>() + self.eval(&state[..n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_logistic_and_oscillator() {
        let s = parse_system(r#"{"name":"logistic","order":1,"n":1,"A":[[1]],"B":[[[-1]]]}"#).unwrap();
        assert_eq!(s.force(&[0.5]), vec![0.25]);
        let o = parse_system(r#"{"order":2,"n":1,"masses":[1],"B":[[[0]]]}"#).unwrap();
        assert_eq!(o.force(&[2.0]), vec![-2.0]);
    }

    #[test]
    fn rejects_bad_documents() {
        let e = parse_system(r#"{"order":1,"n":2,"A":[[1,0,0],[0,1,0]],"B":[[[0,0],[0,0]],[[0,0],[0,0]]]}"#);
        assert!(matches!(e, Err(Error::Dimension(_))), "{e:?}");
        let e = parse_system(r#"{"order":3,"n":1,"A":[[1]],"B":[[[0]]]}"#);
        assert!(matches!(e, Err(Error::Order(_))), "{e:?}");
        let e = parse_system(r#"{"order":2,"n":1,"masses":[-1],"B":[[[0]]]}"#);
        assert!(matches!(e, Err(Error::Invalid(_))), "{e:?}");
        let e = parse_system(r#"{"order":1,"n":1,"A":[[1]],"B":[[[0]]],"extra":1}"#);
        assert!(matches!(e, Err(Error::Syntax { .. })), "{e:?}");
        let e = parse_system("{\"order\":1,\n \"n\":1,,}");
        assert!(matches!(e, Err(Error::Syntax { line: 2, .. })), "{e:?}");
    }

    #[test]
    fn first_order_forms() {
        let s = SystemSpec::second_order("cubic", vec![1.0], vec![0.3], None).unwrap();
        let f = to_first_order(&s).unwrap();
        assert_eq!(f.a_flat(), &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(f.b(1, 0, 0), 0.3);
        assert_eq!(divergence_coefficients(&f).unwrap(), (0.0, vec![0.0, 0.0]));
        assert!(to_first_order(&f).is_err());

        let m = SystemSpec::second_order("m2", vec![2.0], vec![0.4], None).unwrap();
        let r = real_form(&m);
        // Y = (X, X'/2): Y0' = 2 Y1, Y1' = (−4 X + 0.4 X²)/2.
        assert_eq!(r.a_flat(), &[0.0, 2.0, -2.0, 0.0]);
        assert_eq!(r.b(1, 0, 0), 0.2);
    }

    #[test]
    fn logistic_divergence() {
        let s = SystemSpec::first_order("logistic", 1, vec![1.0], vec![-1.0], None).unwrap();
        assert_eq!(divergence_coefficients(&s).unwrap(), (1.0, vec![-2.0]));
        assert!(!is_noncompressive(&s));
    }

    #[test]
    fn potential_of_cubic_oscillator() {
        let s = SystemSpec::second_order("cubic", vec![1.0], vec![0.3], None).unwrap();
        let g = Potential::of(&s).unwrap();
        let x = 0.7;
        assert!((g.eval(&[x]) - (0.5 * x * x - 0.1 * x * x * x)).abs() < 1e-15);

        // f = (X2, −X1) is a pure rotation field with no potential.
        let mut a = vec![0.0; 4];
        a[1] = 1.0;
        a[2] = -1.0;
        let curl = SystemSpec::new("curl".into(), 2, 2, a, vec![0.0; 8], None, None, None, None).unwrap();
        assert!(matches!(Potential::of(&curl), Err(Error::NonGradient(_))));
    }

    #[test]
    fn lattice_masses_match_circulant_closed_form() {
        for p in 2..=8 {
            let lat = LatticeSpec { points: p, mass: 1.0, coupling: 0.0, power: 2, spacing: 1.0 };
            let s = kg_lattice(&lat).unwrap();
            let mut expected: Vec<f64> = (0..p)
                .map(|k| (1.0 + 2.0 - 2.0 * (2.0 * PI * k as f64 / p as f64).cos()).sqrt())
                .collect();
            expected.sort_by(f64::total_cmp);
            let got = s.masses.clone().unwrap();
            for (g, e) in got.iter().zip(&expected) {
                assert!((g - e).abs() < 1e-12, "p={p}: {got:?} vs {expected:?}");
            }
            assert!(s.b_flat().iter().all(|&x| x == 0.0));
        }
        let lat = LatticeSpec { points: 2, mass: 1.0, coupling: 0.0, power: 2, spacing: 0.5 };
        let m = kg_lattice(&lat).unwrap().masses.unwrap();
        assert_eq!(m, vec![1.0, (1.0f64 + 16.0).sqrt()]);
    }

    #[test]
    fn lattice_nonlinearity_round_trips_to_sites() {
        for (p, power) in [(2, 2), (4, 2), (3, 3), (4, 3)] {
            let g = 0.1;
            let lat = LatticeSpec { points: p, mass: 1.0, coupling: g, power, spacing: 1.0 };
            let s = kg_lattice(&lat).unwrap();
            let (_, q) = lattice_modes(p, 1.0);
            let phi: Vec<f64> = (0..p).map(|s| 0.3 + 0.17 * s as f64 - 0.05 * (s * s) as f64).collect();
            let psi: Vec<f64> = (0..p).map(|m| (0..p).map(|s| q[s * p + m] * phi[s]).sum()).collect();
            // Nonlinear part only: remove the mass term from the force.
            let mut fm = s.force(&psi);
            for (m, f) in fm.iter_mut().enumerate() {
                *f += s.mass(m).powi(2) * psi[m];
            }
            for site in 0..p {
                let back: f64 = (0..p).map(|m| q[site * p + m] * fm[m]).sum();
                let want = g * phi[site].powi(power as i32);
                assert!((back - want).abs() < 1e-12, "p={p} power={power}");
            }
        }
    }
}
