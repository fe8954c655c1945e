//! Counting matrix-vector oracle boundary.
//!
//! Every access to the payoff matrix goes through a [`Meter`], which charges
//! each product to a [`Phase`] counter.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MgameError, Result};
use crate::geometry::{Kind, Point, Setup};

/// Read-only access to an `m x n` matrix through products only.
pub trait MatvecOracle: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `out = A v` with `v` of length `cols()`.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);
    /// `out = A^T w` with `w` of length `rows()`.
    fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]);
    /// Explicit entries, when the backing has them (audits only).
    fn dense(&self) -> Option<&DenseMatrix> {
        None
    }
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("matrix dimensions must be positive");
        }
        if data.len() != m * n {
            return invalid(format!("expected {} entries, got {}", m * n, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("matrix entries must be finite");
        }
        Ok(Self { m, n, data })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { m, n, data: vec![0.0; m * n] }
    }

    pub fn identity(k: usize) -> Self {
        Self::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(m: usize, n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { m, n, data }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.m];
        self.matvec_into(v, &mut out);
        out
    }

    pub fn matvec_t(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_t_into(w, &mut out);
        out
    }

    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.n)) {
            *o = dot(row, v);
        }
    }

    pub fn matvec_t_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&wi, row) in w.iter().zip(self.data.chunks_exact(self.n)) {
            if wi != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += wi * a;
                }
            }
        }
    }

    /// `<w, A v>`.
    pub fn bilinear(&self, w: &[f64], v: &[f64]) -> f64 {
        w.iter()
            .zip(self.data.chunks_exact(self.n))
            .map(|(&wi, row)| if wi == 0.0 { 0.0 } else { wi * dot(row, v) })
            .sum()
    }

    /// `A += s * l r^T`.
    pub fn add_rank_one(&mut self, s: f64, l: &[f64], r: &[f64]) {
        for (&li, row) in l.iter().zip(self.data.chunks_exact_mut(self.n)) {
            let c = s * li;
            if c != 0.0 {
                for (a, &rj) in row.iter_mut().zip(r) {
                    *a += c * rj;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &DenseMatrix) -> DenseMatrix {
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        DenseMatrix { m: self.m, n: self.n, data }
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }

    /// `diag(left) A diag(right)`.
    pub fn scaled(&self, left: &[f64], right: &[f64]) -> DenseMatrix {
        Self::from_fn(self.m, self.n, |i, j| left[i] * self.get(i, j) * right[j])
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|a| a * a).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, a| acc.max(a.abs()))
    }

    pub fn max_row_norm(&self) -> f64 {
        self.data.chunks_exact(self.n).map(|r| dot(r, r).sqrt()).fold(0.0, f64::max)
    }

    /// Checks the normalization each setup assumes: `max|A_ij| <= 1` for
    /// l1-l1 and unit-bounded row 2-norms for l2-l1.
    pub fn check_normalization(&self, kind: Kind) -> Result<()> {
        let tol = 1.0 + 1e-12;
        match kind {
            Kind::L1L1 if self.max_abs() > tol => {
                invalid(format!("l1l1 instances need max |A_ij| <= 1, found {}", self.max_abs()))
            }
            Kind::L2L1 if self.max_row_norm() > tol => {
                invalid(format!("l2l1 instances need row 2-norms <= 1, found {}", self.max_row_norm()))
            }
            _ => Ok(()),
        }
    }
}

impl MatvecOracle for DenseMatrix {
    fn rows(&self) -> usize {
        self.m
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.matvec_into(v, out)
    }
    fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]) {
        self.matvec_t_into(w, out)
    }
    fn dense(&self) -> Option<&DenseMatrix> {
        Some(self)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Wraps a dense matrix, hides its entries, and counts calls on its own.
///
/// Used to check that the solver ledger agrees with an independent count.
pub struct CallCountingOracle {
    inner: DenseMatrix,
    calls: AtomicU64,
}

impl CallCountingOracle {
    pub fn new(inner: DenseMatrix) -> Self {
        Self { inner, calls: AtomicU64::new(0) }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl MatvecOracle for CallCountingOracle {
    fn rows(&self) -> usize {
        self.inner.m
    }
    fn cols(&self) -> usize {
        self.inner.n
    }
    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.matvec_into(v, out)
    }
    fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]) {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.matvec_t_into(w, out)
    }
}

/// Accounting bucket for a matrix-vector product.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Outer,
    Bisection,
    SupgProgress,
    SupgGuilty,
    MapAndCenter,
    Verification,
}

impl Phase {
    pub const ALL: [Phase; 6] = [
        Phase::Outer,
        Phase::Bisection,
        Phase::SupgProgress,
        Phase::SupgGuilty,
        Phase::MapAndCenter,
        Phase::Verification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Outer => "outer",
            Phase::Bisection => "bisection",
            Phase::SupgProgress => "supg_progress",
            Phase::SupgGuilty => "supg_guilty",
            Phase::MapAndCenter => "map_and_center",
            Phase::Verification => "verification",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Per-phase matvec counters owned by one solver instance.
#[derive(Debug, Default)]
pub struct Ledger {
    counts: [Cell<u64>; 6],
}

/// Immutable copy of a [`Ledger`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LedgerSnapshot {
    counts: [u64; 6],
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&self, phase: Phase, k: u64) {
        let c = &self.counts[phase.index()];
        c.set(c.get() + k);
    }

    pub fn get(&self, phase: Phase) -> u64 {
        self.counts[phase.index()].get()
    }

    /// Moves `k` already-charged products from one phase to another.
    pub fn transfer(&self, from: Phase, to: Phase, k: u64) {
        let f = &self.counts[from.index()];
        debug_assert!(f.get() >= k);
        f.set(f.get() - k);
        self.charge(to, k);
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        LedgerSnapshot { counts: std::array::from_fn(|i| self.counts[i].get()) }
    }

    /// Moves everything charged since `since` (except verification) into `to`.
    pub fn reassign_since(&self, since: &LedgerSnapshot, to: Phase) {
        for p in Phase::ALL {
            if p == Phase::Verification || p == to {
                continue;
            }
            let delta = self.get(p) - since.get(p);
            if delta > 0 {
                self.transfer(p, to, delta);
            }
        }
    }
}

impl LedgerSnapshot {
    pub fn get(&self, phase: Phase) -> u64 {
        self.counts[phase.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Total excluding verification products.
    pub fn algorithmic(&self) -> u64 {
        self.total() - self.get(Phase::Verification)
    }

    pub fn to_map(&self) -> BTreeMap<String, u64> {
        Phase::ALL.iter().map(|p| (p.name().to_string(), self.get(*p))).collect()
    }
}

/// A matrix oracle paired with the ledger that meters it.
pub struct Meter<'a> {
    oracle: &'a dyn MatvecOracle,
    ledger: Ledger,
}

impl<'a> Meter<'a> {
    pub fn new(oracle: &'a dyn MatvecOracle) -> Self {
        Self { oracle, ledger: Ledger::new() }
    }

    pub fn oracle(&self) -> &'a dyn MatvecOracle {
        self.oracle
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn dense(&self) -> Option<&'a DenseMatrix> {
        self.oracle.dense()
    }

    pub fn rows(&self) -> usize {
        self.oracle.rows()
    }

    pub fn cols(&self) -> usize {
        self.oracle.cols()
    }

    /// `A v`, charged once to `phase`.
    pub fn counted_matvec(&self, phase: Phase, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return invalid(format!("matvec input has length {}, expected {}", v.len(), self.cols()));
        }
        let mut out = vec![0.0; self.rows()];
        self.oracle.apply_into(v, &mut out);
        self.ledger.charge(phase, 1);
        Ok(out)
    }

    /// `A^T w`, charged once to `phase`.
    pub fn counted_matvec_t(&self, phase: Phase, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.rows() {
            return invalid(format!("matvec input has length {}, expected {}", w.len(), self.rows()));
        }
        let mut out = vec![0.0; self.cols()];
        self.oracle.apply_transpose_into(w, &mut out);
        self.ledger.charge(phase, 1);
        Ok(out)
    }

    /// `(A)_basis v`: one counted product wrapped in diagonal scalings.
    pub fn grounded_matvec(&self, setup: &Setup, basis: &Point, phase: Phase, v: &[f64]) -> Result<Vec<f64>> {
        let s = crate::geometry::ground_scalings(setup, basis)?;
        let scaled: Vec<f64> = v.iter().zip(&s.right).map(|(a, b)| a * b).collect();
        let mut out = self.counted_matvec(phase, &scaled)?;
        out.iter_mut().zip(&s.left).for_each(|(o, l)| *o *= l);
        Ok(out)
    }

    /// `(A)_basis^T w`.
    pub fn grounded_matvec_t(&self, setup: &Setup, basis: &Point, phase: Phase, w: &[f64]) -> Result<Vec<f64>> {
        let s = crate::geometry::ground_scalings(setup, basis)?;
        let scaled: Vec<f64> = w.iter().zip(&s.left).map(|(a, b)| a * b).collect();
        let mut out = self.counted_matvec_t(phase, &scaled)?;
        out.iter_mut().zip(&s.right).for_each(|(o, r)| *o *= r);
        Ok(out)
    }

    /// `Delta v` for `Delta = (A)_head - (A)_tail`, with a missing tail meaning zero.
    pub fn segment_delta_matvec(
        &self,
        setup: &Setup,
        tail: Option<&Point>,
        head: &Point,
        phase: Phase,
        v: &[f64],
    ) -> Result<Vec<f64>> {
        let mut out = self.grounded_matvec(setup, head, phase, v)?;
        if let Some(t) = tail {
            let sub = self.grounded_matvec(setup, t, phase, v)?;
            out.iter_mut().zip(sub).for_each(|(o, s)| *o -= s);
        }
        Ok(out)
    }
}

const MAGIC: &str = "MGAME v1";

/// Writes the binary matrix format: a text header line followed by
/// little-endian row-major `f64` entries.
pub fn write_matrix(path: &Path, kind: Kind, a: &DenseMatrix) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path)?);
    writeln!(f, "{} {} {} {}", MAGIC, kind, a.m, a.n)?;
    for v in &a.data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a matrix file and validates the normalization for its kind.
pub fn read_matrix(path: &Path) -> Result<(Kind, DenseMatrix)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = String::new();
    r.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || format!("{} {}", parts[0], parts[1]) != MAGIC {
        return invalid(format!("bad matrix header: {:?}", header.trim_end()));
    }
    let kind: Kind = parts[2].parse()?;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| MgameError::InvalidInput(format!("bad dimension {s:?}")));
    let (m, n) = (parse(parts[3])?, parse(parts[4])?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != m * n * 8 {
        return invalid(format!("payload has {} bytes, expected {}", bytes.len(), m * n * 8));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
    let a = DenseMatrix::new(m, n, data)?;
    a.check_normalization(kind)?;
    Ok((kind, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Setup;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DenseMatrix {
        DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_matvec_counts_once() {
        let a = DenseMatrix::identity(3);
        let meter = Meter::new(&a);
        let out = meter.counted_matvec(Phase::Outer, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(out, vec![1.0, 0.0, 0.0]);
        assert_eq!(meter.ledger().get(Phase::Outer), 1);
        meter.counted_matvec(Phase::Outer, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(meter.ledger().get(Phase::Outer), 2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DenseMatrix::identity(3);
        let meter = Meter::new(&a);
        assert!(matches!(meter.counted_matvec(Phase::Outer, &[1.0]), Err(MgameError::InvalidInput(_))));
        assert_eq!(meter.snapshot_total(), 0);
    }

    impl Meter<'_> {
        fn snapshot_total(&self) -> u64 {
            self.ledger().snapshot().total()
        }
    }

    #[test]
    fn adjointness_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 5, 7);
        let meter = Meter::new(&a);
        for _ in 0..20 {
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let av = meter.counted_matvec(Phase::Verification, &v).unwrap();
            let atw = meter.counted_matvec_t(Phase::Verification, &w).unwrap();
            let lhs = dot(&w, &av);
            let rhs = dot(&atw, &v);
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        }
        assert_eq!(meter.ledger().get(Phase::Verification), 40);
    }

    #[test]
    fn grounded_matvec_uniform_l2l1() {
        let setup = Setup::with_nu(Kind::L2L1, 2, 2, 0.01).unwrap();
        let a = DenseMatrix::identity(2);
        let meter = Meter::new(&a);
        let basis = Point::new(vec![0.0, 0.0], vec![0.5, 0.5]);
        let out = meter.grounded_matvec(&setup, &basis, Phase::Outer, &[1.0, 0.0]).unwrap();
        let s = 0.5f64.sqrt();
        assert!((out[0] - s).abs() < 1e-15 && out[1].abs() < 1e-15);
        let zero = meter.grounded_matvec(&setup, &basis, Phase::Outer, &[0.0, 0.0]).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        assert_eq!(meter.ledger().get(Phase::Outer), 2);
    }

    #[test]
    fn grounded_matvec_matches_dense_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let setup = Setup::with_nu(Kind::L1L1, 4, 3, 0.01).unwrap();
        let a = random_matrix(&mut rng, 4, 3);
        let basis = Point::new(vec![0.2, 0.3, 0.5], vec![0.1, 0.2, 0.3, 0.4]);
        let meter = Meter::new(&a);
        let dense = a.scaled(
            &basis.y.iter().map(|v| v.sqrt()).collect::<Vec<_>>(),
            &basis.x.iter().map(|v| v.sqrt()).collect::<Vec<_>>(),
        );
        let v = vec![0.3, -1.0, 2.0];
        let w = vec![1.0, 0.5, -0.5, 0.25];
        let g = meter.grounded_matvec(&setup, &basis, Phase::Outer, &v).unwrap();
        let gt = meter.grounded_matvec_t(&setup, &basis, Phase::Outer, &w).unwrap();
        for (a, b) in g.iter().zip(dense.matvec(&v)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in gt.iter().zip(dense.matvec_t(&w)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_delta_matches_dense_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let setup = Setup::with_nu(Kind::L1L1, 3, 3, 0.01).unwrap();
        let a = random_matrix(&mut rng, 3, 3);
        let meter = Meter::new(&a);
        let head = Point::new(vec![0.2, 0.3, 0.5], vec![0.6, 0.2, 0.2]);
        let tail = Point::new(vec![0.4, 0.4, 0.2], vec![0.1, 0.1, 0.8]);
        let v = vec![0.7, -0.1, 0.4];
        let d = meter.segment_delta_matvec(&setup, Some(&tail), &head, Phase::Outer, &v).unwrap();
        assert_eq!(meter.ledger().get(Phase::Outer), 2);
        let sq = |p: &[f64]| p.iter().map(|v| v.sqrt()).collect::<Vec<_>>();
        let dh = a.scaled(&sq(&head.y), &sq(&head.x));
        let dt = a.scaled(&sq(&tail.y), &sq(&tail.x));
        let expect = dh.sub(&dt).matvec(&v);
        for (x, y) in d.iter().zip(expect) {
            assert!((x - y).abs() < 1e-10);
        }
        let same = meter.segment_delta_matvec(&setup, Some(&head), &head, Phase::Outer, &v).unwrap();
        assert!(same.iter().all(|v| *v == 0.0));
        let null = meter.segment_delta_matvec(&setup, None, &head, Phase::Outer, &v).unwrap();
        assert_eq!(meter.ledger().get(Phase::Outer), 5);
        for (x, y) in null.iter().zip(dh.matvec(&v)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn ledger_transfer_and_reassign() {
        let l = Ledger::new();
        l.charge(Phase::SupgProgress, 4);
        l.transfer(Phase::SupgProgress, Phase::SupgGuilty, 3);
        assert_eq!(l.get(Phase::SupgProgress), 1);
        assert_eq!(l.get(Phase::SupgGuilty), 3);
        let snap = l.snapshot();
        l.charge(Phase::MapAndCenter, 2);
        l.charge(Phase::Verification, 2);
        l.reassign_since(&snap, Phase::Bisection);
        let s = l.snapshot();
        assert_eq!(s.get(Phase::Bisection), 2);
        assert_eq!(s.get(Phase::Verification), 2);
        assert_eq!(s.total(), 8);
        assert_eq!(s.algorithmic(), 6);
    }

    #[test]
    fn call_counting_oracle_agrees_with_ledger() {
        let mock = CallCountingOracle::new(DenseMatrix::identity(4));
        let meter = Meter::new(&mock);
        assert!(meter.dense().is_none());
        for _ in 0..3 {
            meter.counted_matvec(Phase::Outer, &[1.0; 4]).unwrap();
            meter.counted_matvec_t(Phase::SupgGuilty, &[1.0; 4]).unwrap();
        }
        assert_eq!(meter.ledger().snapshot().total(), mock.calls());
    }

    #[test]
    fn matrix_file_roundtrip_and_validation() {
        let dir = std::env::temp_dir().join(format!("mgame-oracle-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.mgame");
        let a = DenseMatrix::new(2, 3, vec![1.0, -1.0, 0.5, 0.0, 0.25, -0.75]).unwrap();
        write_matrix(&p, Kind::L1L1, &a).unwrap();
        let (k, b) = read_matrix(&p).unwrap();
        assert_eq!(k, Kind::L1L1);
        assert_eq!(a, b);
        let bad = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        write_matrix(&p, Kind::L2L1, &bad).unwrap();
        assert!(matches!(read_matrix(&p), Err(MgameError::InvalidInput(_))));
        std::fs::remove_dir_all(&dir).ok();
    }
}
