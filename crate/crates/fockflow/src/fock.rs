//! Graded truncated Fock basis, coefficient containers and pure states.
//!
//! Multi-indices of total degree `≤ cutoff` are laid out by degree, and
//! within a degree in descending lexicographic order of the exponent tuple:
//! for two slots and cutoff 2 the order is
//! `(0,0) (1,0) (0,1) (2,0) (1,1) (0,2)`. Position 0 is always the vacuum,
//! so "raising" and "lowering" are literally block statements about matrices.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sysspec::SystemSpec;

pub type C64 = Complex64;

pub const DEFAULT_SIZE_LIMIT: usize = 5_000_000;

/// How the slots of a basis map onto physical coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    /// One slot per state variable of an order-1 system.
    Plain,
    /// Order 2: slots `0..n` carry `X`, slots `n..2n` carry `X'/m`.
    RealPairs,
    /// Order 2: slots `0..n` carry `X⁺`, slots `n..2n` carry `X⁻`.
    ConjugatePairs,
}

impl Layout {
    pub fn is_paired(self) -> bool {
        self != Layout::Plain
    }
}

/// An exponent tuple.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// Graded enumeration of all multi-indices up to a total-degree cutoff.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    n: usize,
    cutoff: usize,
    layout: Layout,
    exps: Vec<u8>,
    degree_start: Vec<usize>,
    binom: Vec<Vec<usize>>,
}

/// Number of multi-indices with `n` slots and degree `≤ d`, i.e. `C(n+d, n)`.
pub fn basis_size(n: usize, d: usize) -> u128 {
    let mut c: u128 = 1;
    for k in 1..=n as u128 {
        c = c.saturating_mul(d as u128 + k) / k;
    }
    c
}

/// `enumerate_basis` with the default size limit.
pub fn enumerate_basis(n: usize, cutoff: usize) -> Result<FockBasis> {
    FockBasis::new(n, cutoff, Layout::Plain)
}

impl FockBasis {
    pub fn new(n: usize, cutoff: usize, layout: Layout) -> Result<Self> {
        Self::with_limit(n, cutoff, layout, DEFAULT_SIZE_LIMIT)
    }

    pub fn with_limit(n: usize, cutoff: usize, layout: Layout, limit: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Dimension("a basis needs at least one slot".into()));
        }
        if layout.is_paired() && n % 2 != 0 {
            return Err(Error::Dimension(format!("paired layout needs an even slot count, got {n}")));
        }
        if cutoff > u8::MAX as usize {
            return Err(Error::Invalid(format!("cutoff {cutoff} exceeds {}", u8::MAX)));
        }
        let size = basis_size(n, cutoff);
        if size > limit as u128 {
            return Err(Error::SizeLimit { size, limit });
        }
        let size = size as usize;
        let top = n + cutoff + 1;
        let mut binom = vec![vec![0usize; n + 1]; top + 1];
        for (a, row) in binom.iter_mut().enumerate() {
            row[0] = 1;
            for b in 1..=n.min(a) {
                row[b] = 0;
            }
        }
        for a in 1..=top {
            for b in 1..=n.min(a) {
                binom[a][b] = binom[a - 1][b - 1] + if b <= a - 1 { binom[a - 1][b] } else { 0 };
            }
        }
        let mut exps = Vec::with_capacity(size * n);
        let mut degree_start = Vec::with_capacity(cutoff + 2);
        let mut cur = vec![0u8; n];
        for d in 0..=cutoff {
            degree_start.push(exps.len() / n);
            push_compositions(&mut exps, &mut cur, 0, d);
        }
        degree_start.push(exps.len() / n);
        debug_assert_eq!(exps.len(), size * n);
        Ok(FockBasis { n, cutoff, layout, exps, degree_start, binom })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    /// Number of modes: `n` for plain layouts, `n/2` for paired ones.
    pub fn modes(&self) -> usize {
        if self.layout.is_paired() {
            self.n / 2
        } else {
            self.n
        }
    }

    pub fn size(&self) -> usize {
        self.exps.len() / self.n
    }

    pub fn exponents(&self, pos: usize) -> &[u8] {
        &self.exps[pos * self.n..(pos + 1) * self.n]
    }

    pub fn multi_index(&self, pos: usize) -> MultiIndex {
        MultiIndex(self.exponents(pos).iter().map(|&e| e as u32).collect())
    }

    pub fn degree(&self, pos: usize) -> usize {
        // degree_start is sorted; positions are grouped by degree.
        self.degree_start.partition_point(|&s| s <= pos) - 1
    }

    /// Positions holding multi-indices of exactly degree `d`.
    pub fn degree_range(&self, d: usize) -> Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }

    /// Number of positions of degree `≤ d` (clamped to the basis).
    pub fn prefix_len(&self, d: usize) -> usize {
        self.degree_start[(d + 1).min(self.cutoff + 1)]
    }

    /// Number of positions of degree `≤ cutoff − k`: the block on which
    /// `k`-th order expressions are unaffected by truncation.
    pub fn interior_len(&self, k: usize) -> usize {
        if k > self.cutoff {
            0
        } else {
            self.prefix_len(self.cutoff - k)
        }
    }

    /// Position of an exponent tuple, if it lies in the basis.
    pub fn position(&self, e: &[u8]) -> Option<usize> {
        debug_assert_eq!(e.len(), self.n);
        let d: usize = e.iter().map(|&x| x as usize).sum();
        if d > self.cutoff {
            return None;
        }
        Some(self.degree_start[d] + self.rank_within(e, d))
    }

    pub fn position_of(&self, m: &MultiIndex) -> Option<usize> {
        if m.0.len() != self.n || m.0.iter().any(|&x| x > u8::MAX as u32) {
            return None;
        }
        let e: Vec<u8> = m.0.iter().map(|&x| x as u8).collect();
        self.position(&e)
    }

    // Rank among degree-d tuples ordered by descending first exponent, then
    // descending second, and so on. Tuples with a larger exponent in slot i
    // (same prefix) come first; there are C(r − e_i − 1 + m, m) of them where
    // r is the remaining degree and m the number of later slots.
    fn rank_within(&self, e: &[u8], d: usize) -> usize {
        let mut rank = 0;
        let mut r = d;
        for (i, &ei) in e.iter().enumerate().take(self.n - 1) {
            let ei = ei as usize;
            let m = self.n - i - 1;
            if r > ei {
                rank += self.binom[r - ei - 1 + m][m];
            }
            r -= ei;
        }
        rank
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor { n: self.n, cutoff: self.cutoff, slots: self.layout }
    }
}

fn push_compositions(out: &mut Vec<u8>, cur: &mut [u8], slot: usize, remaining: usize) {
    if slot + 1 == cur.len() {
        cur[slot] = remaining as u8;
        out.extend_from_slice(cur);
        return;
    }
    for v in (0..=remaining).rev() {
        cur[slot] = v as u8;
        push_compositions(out, cur, slot + 1, remaining - v);
    }
    cur[slot] = 0;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub n: usize,
    pub cutoff: usize,
    pub slots: Layout,
}

/// Elementary single-slot operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Elementary {
    /// Clean annihilation: `(c v)_α = v_{α+e_k}`.
    C,
    /// Clean creation: `(c⁺ v)_α = v_{α−e_k}`.
    Cd,
    /// Physical annihilation: `(a v)_α = sqrt(α_k + 1) v_{α+e_k}`.
    A,
    /// Physical creation, the transpose of `A`.
    Ad,
    /// Number operator: `(N v)_α = α_k v_α`.
    N,
}

/// Applies one elementary operator to the basis element with exponents `e`
/// and total degree `deg`, in place. Returns `(f, squared)`: the scalar
/// factor is `f`, or `sqrt(f)` when `squared` is set, so products of ladder
/// factors can be accumulated exactly as integers. `None` means the image is
/// zero or leaves the basis.
#[inline]
pub fn apply_elementary(
    e: &mut [u8],
    deg: &mut usize,
    cutoff: usize,
    slot: usize,
    op: Elementary,
) -> Option<(f64, bool)> {
    match op {
        Elementary::C | Elementary::A => {
            if e[slot] == 0 {
                return None;
            }
            let f = e[slot] as f64;
            e[slot] -= 1;
            *deg -= 1;
            Some(if op == Elementary::A { (f, true) } else { (1.0, false) })
        }
        Elementary::Cd | Elementary::Ad => {
            if *deg >= cutoff {
                return None;
            }
            e[slot] += 1;
            *deg += 1;
            Some(if op == Elementary::Ad { (e[slot] as f64, true) } else { (1.0, false) })
        }
        Elementary::N => {
            if e[slot] == 0 {
                None
            } else {
                Some((e[slot] as f64, false))
            }
        }
    }
}

/// The sparse matrix of one elementary operator on `slot`.
pub fn elementary_ops(basis: &Arc<FockBasis>, slot: usize, which: Elementary) -> Result<FockMatrix> {
    if slot >= basis.n() {
        return Err(Error::Slot(format!("slot {slot} out of range for {} slots", basis.n())));
    }
    let mut trip = Vec::new();
    let mut e = vec![0u8; basis.n()];
    for col in 0..basis.size() {
        e.copy_from_slice(basis.exponents(col));
        let mut deg = basis.degree(col);
        if let Some((f, squared)) = apply_elementary(&mut e, &mut deg, basis.cutoff(), slot, which) {
            let row = basis.position(&e).expect("image stays within the cutoff");
            trip.push((row, col, C64::new(if squared { f.sqrt() } else { f }, 0.0)));
        }
    }
    Ok(FockMatrix::from_triplets(basis.clone(), MatrixKind::Operator, trip))
}

/// What a coefficient vector represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorKind {
    U,
    V,
    W,
    Z,
    Bu,
    Bv,
    Bw,
    Bz,
    EntropyU,
    EntropyV,
    EntropyW,
    Generic,
}

/// What a matrix represents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    RhoU,
    RhoV,
    RhoW,
    RhoZ,
    Su,
    Sv,
    Sw,
    Sz,
    Bw,
    Gain,
    Operator,
}

impl MatrixKind {
    pub fn is_hermitian(self) -> bool {
        !matches!(self, MatrixKind::Gain | MatrixKind::Operator | MatrixKind::Bw)
    }
}

/// Dense coefficients over a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    pub basis: Arc<FockBasis>,
    pub coeffs: Vec<C64>,
    pub kind: VectorKind,
}

impl FockVector {
    pub fn zeros(basis: Arc<FockBasis>, kind: VectorKind) -> Self {
        let coeffs = vec![C64::new(0.0, 0.0); basis.size()];
        FockVector { basis, coeffs, kind }
    }

    pub fn vacuum(basis: Arc<FockBasis>, kind: VectorKind) -> Self {
        let mut v = Self::zeros(basis, kind);
        v.coeffs[0] = C64::new(1.0, 0.0);
        v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Coefficient at a multi-index (zero outside the basis).
    pub fn get(&self, m: &MultiIndex) -> C64 {
        self.basis.position_of(m).map_or(C64::new(0.0, 0.0), |p| self.coeffs[p])
    }

    /// Conjugate-linear inner product `⟨self, other⟩`.
    pub fn dot(&self, other: &FockVector) -> C64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a.conj() * b).sum()
    }

    /// Real parts, for representations that are real by construction.
    pub fn real(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.re).collect()
    }

    /// Entries of degree `≤ d`, restricted to a basis with the same slots but
    /// a smaller cutoff. Positions coincide, so this is a prefix copy.
    pub fn truncated(&self, d: usize) -> Result<FockVector> {
        let basis = Arc::new(FockBasis::new(self.basis.n(), d.min(self.basis.cutoff()), self.basis.layout())?);
        let coeffs = self.coeffs[..basis.size()].to_vec();
        Ok(FockVector { basis, coeffs, kind: self.kind })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coefficients: Vec<serde_json::Value> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(p, c)| serde_json::json!([self.basis.multi_index(p), scalar_json(*c)]))
            .collect();
        serde_json::json!({
            "basis": self.basis.descriptor(),
            "kind": self.kind,
            "coefficients": coefficients,
        })
    }
}

/// Real values serialize as numbers, complex ones as `[re, im]`.
pub fn scalar_json(c: C64) -> serde_json::Value {
    if c.im == 0.0 {
        serde_json::json!(c.re)
    } else {
        serde_json::json!([c.re, c.im])
    }
}

/// Inverse of [`scalar_json`].
pub fn scalar_from_json(v: &serde_json::Value) -> Result<C64> {
    let bad = || Error::Invalid(format!("expected a number or [re, im], got {v}"));
    if let Some(x) = v.as_f64() {
        return Ok(C64::new(x, 0.0));
    }
    match v.as_array().map(Vec::as_slice) {
        Some([re, im]) => Ok(C64::new(re.as_f64().ok_or_else(bad)?, im.as_f64().ok_or_else(bad)?)),
        _ => Err(bad()),
    }
}

fn field<'a>(v: &'a serde_json::Value, name: &str) -> Result<&'a serde_json::Value> {
    v.get(name).ok_or_else(|| Error::Invalid(format!("missing field `{name}`")))
}

fn parse_field<T: serde::de::DeserializeOwned>(v: &serde_json::Value, name: &str) -> Result<T> {
    serde_json::from_value(field(v, name)?.clone()).map_err(|e| Error::Invalid(format!("field `{name}`: {e}")))
}

fn basis_from_json(v: &serde_json::Value) -> Result<Arc<FockBasis>> {
    let d: BasisDescriptor = parse_field(v, "basis")?;
    Ok(Arc::new(FockBasis::new(d.n, d.cutoff, d.slots)?))
}

fn position_from_json(basis: &FockBasis, v: &serde_json::Value) -> Result<usize> {
    let m: MultiIndex =
        serde_json::from_value(v.clone()).map_err(|e| Error::Invalid(format!("multi-index {v}: {e}")))?;
    basis.position_of(&m).ok_or_else(|| Error::Dimension(format!("multi-index {m} is not in the basis")))
}

impl FockVector {
    /// Inverse of [`FockVector::to_json`]; absent coefficients are zero.
    pub fn from_json(v: &serde_json::Value) -> Result<FockVector> {
        let basis = basis_from_json(v)?;
        let kind: VectorKind = parse_field(v, "kind")?;
        let mut coeffs = vec![C64::new(0.0, 0.0); basis.size()];
        let entries = field(v, "coefficients")?.as_array().ok_or_else(|| Error::Invalid("`coefficients` must be a list".into()))?;
        for e in entries {
            let [m, c] = e.as_array().map(Vec::as_slice).unwrap_or_default() else {
                return Err(Error::Invalid(format!("coefficient entry {e} is not [multi-index, value]")));
            };
            coeffs[position_from_json(&basis, m)?] = scalar_from_json(c)?;
        }
        Ok(FockVector { basis, coeffs, kind })
    }
}

impl FockMatrix {
    /// Inverse of [`FockMatrix::to_json`].
    pub fn from_json(v: &serde_json::Value) -> Result<FockMatrix> {
        let basis = basis_from_json(v)?;
        let kind: MatrixKind = parse_field(v, "kind")?;
        let entries = field(v, "entries")?.as_array().ok_or_else(|| Error::Invalid("`entries` must be a list".into()))?;
        let mut trip = Vec::with_capacity(entries.len());
        for e in entries {
            let [r, c, x] = e.as_array().map(Vec::as_slice).unwrap_or_default() else {
                return Err(Error::Invalid(format!("matrix entry {e} is not [row, column, value]")));
            };
            trip.push((position_from_json(&basis, r)?, position_from_json(&basis, c)?, scalar_from_json(x)?));
        }
        Ok(FockMatrix::from_triplets(basis, kind, trip))
    }
}

/// Sparse matrix over a basis, stored row-compressed with sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct FockMatrix {
    pub basis: Arc<FockBasis>,
    pub kind: MatrixKind,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl FockMatrix {
    pub fn zeros(basis: Arc<FockBasis>, kind: MatrixKind) -> Self {
        let size = basis.size();
        FockMatrix { basis, kind, row_ptr: vec![0; size + 1], cols: Vec::new(), vals: Vec::new() }
    }

    pub fn identity(basis: Arc<FockBasis>, kind: MatrixKind) -> Self {
        let size = basis.size();
        let trip = (0..size).map(|i| (i, i, C64::new(1.0, 0.0))).collect();
        Self::from_triplets(basis, kind, trip)
    }

    /// Duplicates are summed in input order; exact zeros are dropped.
    pub fn from_triplets(basis: Arc<FockBasis>, kind: MatrixKind, mut trip: Vec<(usize, usize, C64)>) -> Self {
        let size = basis.size();
        trip.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; size + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<C64> = Vec::with_capacity(trip.len());
        let mut rows = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            assert!(r < size && c < size, "triplet ({r},{c}) outside a basis of size {size}");
            if rows.last() == Some(&r) && cols.last() == Some(&c) {
                *vals.last_mut().unwrap() += v;
            } else {
                rows.push(r);
                cols.push(c);
                vals.push(v);
            }
        }
        let mut keep_cols = Vec::with_capacity(cols.len());
        let mut keep_vals = Vec::with_capacity(vals.len());
        for ((r, c), v) in rows.into_iter().zip(cols).zip(vals) {
            if v != C64::new(0.0, 0.0) {
                row_ptr[r + 1] += 1;
                keep_cols.push(c);
                keep_vals.push(v);
            }
        }
        for i in 0..size {
            row_ptr[i + 1] += row_ptr[i];
        }
        FockMatrix { basis, kind, row_ptr, cols: keep_cols, vals: keep_vals }
    }

    /// Row-major dense input.
    pub fn from_dense(basis: Arc<FockBasis>, kind: MatrixKind, dense: &[C64]) -> Self {
        let size = basis.size();
        assert_eq!(dense.len(), size * size);
        let mut trip = Vec::new();
        for r in 0..size {
            for c in 0..size {
                let v = dense[r * size + c];
                if v != C64::new(0.0, 0.0) {
                    trip.push((r, c, v));
                }
            }
        }
        Self::from_triplets(basis, kind, trip)
    }

    pub fn size(&self) -> usize {
        self.basis.size()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn with_kind(mut self, kind: MatrixKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.size()).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[span.clone()].binary_search(&c) {
            Ok(i) => self.vals[span.start + i],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    /// `y = M x`, summing each row in column order.
    pub fn matvec_into(&self, x: &[C64], y: &mut [C64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for i in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[i] * x[self.cols[i]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![C64::new(0.0, 0.0); self.size()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn apply(&self, v: &FockVector) -> FockVector {
        FockVector { basis: v.basis.clone(), coeffs: self.matvec(&v.coeffs), kind: v.kind }
    }

    pub fn to_dense(&self) -> Vec<C64> {
        let size = self.size();
        let mut d = vec![C64::new(0.0, 0.0); size * size];
        for (r, c, v) in self.triplets() {
            d[r * size + c] = v;
        }
        d
    }

    pub fn transpose(&self) -> FockMatrix {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v)).collect();
        FockMatrix::from_triplets(self.basis.clone(), self.kind, trip)
    }

    pub fn adjoint(&self) -> FockMatrix {
        let trip = self.triplets().map(|(r, c, v)| (c, r, v.conj())).collect();
        FockMatrix::from_triplets(self.basis.clone(), self.kind, trip)
    }

    pub fn scale(&self, s: C64) -> FockMatrix {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn add(&self, other: &FockMatrix) -> FockMatrix {
        let trip = self.triplets().chain(other.triplets()).collect();
        FockMatrix::from_triplets(self.basis.clone(), self.kind, trip)
    }

    pub fn sub(&self, other: &FockMatrix) -> FockMatrix {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Sparse product `self · other`.
    pub fn mul(&self, other: &FockMatrix) -> FockMatrix {
        let size = self.size();
        let mut acc = vec![C64::new(0.0, 0.0); size];
        let mut touched = vec![false; size];
        let mut list = Vec::new();
        let mut trip = Vec::new();
        for r in 0..size {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !touched[c] {
                        touched[c] = true;
                        list.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            list.sort_unstable();
            for &c in &list {
                trip.push((r, c, acc[c]));
                acc[c] = C64::new(0.0, 0.0);
                touched[c] = false;
            }
            list.clear();
        }
        FockMatrix::from_triplets(self.basis.clone(), MatrixKind::Operator, trip)
    }

    /// Largest entry magnitude over rows and columns of position `< len`.
    pub fn max_abs_block(&self, len: usize) -> f64 {
        let mut m = 0.0f64;
        for r in 0..len.min(self.size()) {
            for (c, v) in self.row(r) {
                if c < len {
                    m = m.max(v.norm());
                }
            }
        }
        m
    }

    /// `max |self − other|` on the leading `len × len` block.
    pub fn max_diff_block(&self, other: &FockMatrix, len: usize) -> f64 {
        self.sub(other).max_abs_block(len)
    }

    /// Smallest and largest `deg(row) − deg(col)` over stored entries.
    pub fn degree_shift_range(&self) -> Option<(isize, isize)> {
        let mut out: Option<(isize, isize)> = None;
        for (r, c, _) in self.triplets() {
            let s = self.basis.degree(r) as isize - self.basis.degree(c) as isize;
            out = Some(match out {
                None => (s, s),
                Some((lo, hi)) => (lo.min(s), hi.max(s)),
            });
        }
        out
    }

    /// No entry maps a degree to a higher one.
    pub fn is_block_lowering(&self) -> bool {
        self.degree_shift_range().map_or(true, |(_, hi)| hi <= 0)
    }

    /// No entry maps a degree to a lower one.
    pub fn is_block_raising(&self) -> bool {
        self.degree_shift_range().map_or(true, |(lo, _)| lo >= 0)
    }

    /// `max |M + M^H|` on the leading block, relative to `max |M|` there.
    pub fn skew_defect_block(&self, len: usize) -> f64 {
        let scale = self.max_abs_block(len).max(f64::MIN_POSITIVE);
        self.add(&self.adjoint()).max_abs_block(len) / scale
    }

    pub fn trace(&self) -> C64 {
        (0..self.size()).map(|i| self.get(i, i)).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .triplets()
            .map(|(r, c, v)| {
                serde_json::json!([self.basis.multi_index(r), self.basis.multi_index(c), scalar_json(v)])
            })
            .collect();
        serde_json::json!({
            "basis": self.basis.descriptor(),
            "kind": self.kind,
            "entries": entries,
        })
    }
}

/// Slot coordinates of a state, for moment (`u`) or scaled (`v`, `w`) kinds.
///
/// `state` is `X` for plain layouts and `(X, X')` for paired ones.
pub fn coordinates(basis: &FockBasis, spec: &SystemSpec, state: &[f64], scaled: bool) -> Result<Vec<C64>> {
    let n = spec.n;
    match basis.layout() {
        Layout::Plain => {
            if spec.order != 1 || state.len() != basis.n() || n != basis.n() {
                return Err(Error::Dimension(format!(
                    "plain basis with {} slots needs an order-1 state of that length, got order {} and {} values",
                    basis.n(),
                    spec.order,
                    state.len()
                )));
            }
            Ok(state.iter().map(|&x| C64::new(x, 0.0)).collect())
        }
        layout => {
            if spec.order != 2 || basis.modes() != n || state.len() != 2 * n {
                return Err(Error::Dimension(format!(
                    "paired basis with {} modes needs an order-2 state (X, X') of length {}, got order {} and {} values",
                    basis.modes(),
                    2 * basis.modes(),
                    spec.order,
                    state.len()
                )));
            }
            if layout == Layout::ConjugatePairs && spec.masses.is_none() {
                return Err(Error::Invalid("conjugate-pair coordinates need masses".into()));
            }
            let mut y = vec![C64::new(0.0, 0.0); 2 * n];
            for k in 0..n {
                let m = spec.mass(k);
                let (x, v) = (state[k], state[n + k]);
                if layout == Layout::RealPairs {
                    y[k] = C64::new(x, 0.0);
                    y[n + k] = C64::new(v / m, 0.0);
                } else {
                    // X± = ½(X ± X'/(i m)).
                    let s = if scaled { m.sqrt() } else { 1.0 };
                    y[k] = C64::new(0.5 * x, -0.5 * v / m) * s;
                    y[n + k] = C64::new(0.5 * x, 0.5 * v / m) * s;
                }
            }
            Ok(y)
        }
    }
}

/// `Π y_k^{α_k}`, optionally divided by `sqrt(Π α_k!)`.
pub fn monomial_vector(basis: &Arc<FockBasis>, y: &[C64], scaled: bool) -> Vec<C64> {
    let n = basis.n();
    let d = basis.cutoff();
    let inv_sqrt_fact: Vec<f64> = (0..=d)
        .scan(1.0f64, |f, k| {
            if k > 0 {
                *f *= k as f64;
            }
            Some(1.0 / f.sqrt())
        })
        .collect();
    let mut pow = vec![C64::new(1.0, 0.0); n * (d + 1)];
    for k in 0..n {
        for e in 1..=d {
            pow[k * (d + 1) + e] = pow[k * (d + 1) + e - 1] * y[k];
        }
    }
    (0..basis.size())
        .map(|p| {
            let mut acc = C64::new(1.0, 0.0);
            for (k, &e) in basis.exponents(p).iter().enumerate() {
                acc *= pow[k * (d + 1) + e as usize];
                if scaled {
                    acc *= inv_sqrt_fact[e as usize];
                }
            }
            acc
        })
        .collect()
}

/// Raw moments of the point mass at `x`: `Π x_k^{α_k}`.
pub fn pure_u(x: &[f64], basis: &Arc<FockBasis>) -> Result<FockVector> {
    if x.len() != basis.n() {
        return Err(Error::Dimension(format!("state has {} entries, basis has {} slots", x.len(), basis.n())));
    }
    let y: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    Ok(FockVector { basis: basis.clone(), coeffs: monomial_vector(basis, &y, false), kind: VectorKind::U })
}

/// Raw moments in the coordinates the basis layout selects.
pub fn pure_u_state(state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec) -> Result<FockVector> {
    let y = coordinates(basis, spec, state, false)?;
    Ok(FockVector { basis: basis.clone(), coeffs: monomial_vector(basis, &y, false), kind: VectorKind::U })
}

/// Scaled moments `Π y^α / sqrt(α!)`.
pub fn pure_v(state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec) -> Result<FockVector> {
    let y = coordinates(basis, spec, state, true)?;
    Ok(FockVector { basis: basis.clone(), coeffs: monomial_vector(basis, &y, true), kind: VectorKind::V })
}

/// `e^{−½|y|²} v`: unit norm before truncation.
pub fn pure_w(state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec) -> Result<FockVector> {
    let y = coordinates(basis, spec, state, true)?;
    Ok(FockVector { basis: basis.clone(), coeffs: damped(basis, &y), kind: VectorKind::W })
}

pub(crate) fn damped(basis: &Arc<FockBasis>, y: &[C64]) -> Vec<C64> {
    let damp = (-0.5 * y.iter().map(|c| c.norm_sqr()).sum::<f64>()).exp();
    monomial_vector(basis, y, true).into_iter().map(|c| c * damp).collect()
}

/// Which exponential constructor to use in [`exp_pure`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpKind {
    /// `exp(Σ y_k a_k⁺)|0⟩`.
    V,
    /// `exp(Σ (y_k a_k⁺ − ȳ_k a_k))|0⟩`.
    W,
}

/// Pure states from the exponential of a ladder operator acting on the
/// vacuum, summed as a truncated power series.
///
/// The series runs at least `cutoff + 2` terms and continues until the terms
/// are negligible; for `ExpKind::V` the generator is nilpotent and the sum
/// is exact.
pub fn exp_pure(state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec, kind: ExpKind) -> Result<FockVector> {
    let y = coordinates(basis, spec, state, true)?;
    let mut trip = Vec::new();
    for (k, &yk) in y.iter().enumerate() {
        for (r, c, v) in elementary_ops(basis, k, Elementary::Ad)?.triplets() {
            trip.push((r, c, v * yk));
        }
        if kind == ExpKind::W {
            for (r, c, v) in elementary_ops(basis, k, Elementary::A)?.triplets() {
                trip.push((r, c, -v * yk.conj()));
            }
        }
    }
    let gen = FockMatrix::from_triplets(basis.clone(), MatrixKind::Operator, trip);
    let coeffs = exp_series_on_vacuum(&gen, basis.cutoff() + 2)?;
    let vkind = if kind == ExpKind::V { VectorKind::V } else { VectorKind::W };
    Ok(FockVector { basis: basis.clone(), coeffs, kind: vkind })
}

fn exp_series_on_vacuum(gen: &FockMatrix, min_terms: usize) -> Result<Vec<C64>> {
    let size = gen.size();
    let mut term = vec![C64::new(0.0, 0.0); size];
    term[0] = C64::new(1.0, 0.0);
    let mut sum = term.clone();
    let mut next = term.clone();
    let max_terms = 4 * min_terms + 64;
    let mut peak = 1.0f64;
    for k in 1..=max_terms {
        gen.matvec_into(&term, &mut next);
        let inv = 1.0 / k as f64;
        let mut tmax = 0.0f64;
        for (t, nx) in term.iter_mut().zip(&next) {
            *t = nx * inv;
            tmax = tmax.max(t.norm());
        }
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        peak = peak.max(tmax);
        let smax = sum.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if peak > 1e12 * smax.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence(format!(
                "series terms reached {peak:e} against a sum of size {smax:e}; state too large for this cutoff"
            )));
        }
        if k >= min_terms && tmax <= 1e-18 * smax {
            return Ok(sum);
        }
    }
    Err(Error::Divergence(format!("exponential series did not settle within {max_terms} terms")))
}

/// Which average [`mix_vector`] and [`mix_matrix`] build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PureKind {
    U,
    V,
    W,
}

fn pure_of(kind: PureKind, state: &[f64], basis: &Arc<FockBasis>, spec: &SystemSpec) -> Result<FockVector> {
    match kind {
        PureKind::U => pure_u_state(state, basis, spec),
        PureKind::V => pure_v(state, basis, spec),
        PureKind::W => pure_w(state, basis, spec),
    }
}

fn check_weights(samples: &[Vec<f64>], weights: &[f64]) -> Result<()> {
    if samples.len() != weights.len() || samples.is_empty() {
        return Err(Error::Dimension(format!(
            "{} samples with {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::Invalid("weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Invalid(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Weighted average of pure vectors.
pub fn mix_vector(
    samples: &[Vec<f64>],
    weights: &[f64],
    basis: &Arc<FockBasis>,
    spec: &SystemSpec,
    kind: PureKind,
) -> Result<FockVector> {
    check_weights(samples, weights)?;
    let mut acc = vec![C64::new(0.0, 0.0); basis.size()];
    let mut vkind = VectorKind::U;
    for (s, &w) in samples.iter().zip(weights) {
        let p = pure_of(kind, s, basis, spec)?;
        vkind = p.kind;
        for (a, c) in acc.iter_mut().zip(&p.coeffs) {
            *a += c * w;
        }
    }
    Ok(FockVector { basis: basis.clone(), coeffs: acc, kind: vkind })
}

/// Weighted average of outer products `x x^H`.
pub fn mix_matrix(
    samples: &[Vec<f64>],
    weights: &[f64],
    basis: &Arc<FockBasis>,
    spec: &SystemSpec,
    kind: PureKind,
) -> Result<FockMatrix> {
    check_weights(samples, weights)?;
    let size = basis.size();
    let mut acc = vec![C64::new(0.0, 0.0); size * size];
    for (s, &w) in samples.iter().zip(weights) {
        let p = pure_of(kind, s, basis, spec)?;
        for r in 0..size {
            let pr = p.coeffs[r] * w;
            for c in 0..size {
                acc[r * size + c] += pr * p.coeffs[c].conj();
            }
        }
    }
    let mkind = match kind {
        PureKind::U => MatrixKind::RhoU,
        PureKind::V => MatrixKind::RhoV,
        PureKind::W => MatrixKind::RhoW,
    };
    Ok(FockMatrix::from_dense(basis.clone(), mkind, &acc))
}
