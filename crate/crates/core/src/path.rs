//! Matrix-approximation paths: telescoping segments `Delta_l = (A)_head - (A)_tail`
//! given implicitly by their anchors, each paired with an explicit model `M_l`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use serde_json::{json, Value};

use crate::error::{invalid, MgameError, Result};
use crate::geometry::{ground_matrix, ground_scalings, Point, Setup};
use crate::oracle::{dot, DenseMatrix, Meter, Phase};

/// Shared, immutable path anchor.
pub type Anchor = Arc<Point>;

/// Rank-one terms with `|sigma|` below this are discarded.
pub const TERM_DROP: f64 = 1e-15;

/// One rank-one term `sigma * left * right^T` with unit `left` and `right`.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub sigma: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Explicit model `M = sum sigma_i left_i right_i^T`.
///
/// Terms are kept as a list while that is cheaper than a dense `m x n`
/// array; afterwards the model is folded into dense form.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneModel {
    m: usize,
    n: usize,
    terms: Vec<Term>,
    dense: Option<DenseMatrix>,
    total_terms: usize,
}

impl RankOneModel {
    pub fn zero(m: usize, n: usize) -> Self {
        Self { m, n, terms: Vec::new(), dense: None, total_terms: 0 }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Number of rank-one terms ever accepted.
    pub fn num_terms(&self) -> usize {
        self.total_terms
    }

    pub fn is_zero(&self) -> bool {
        self.total_terms == 0
    }

    pub fn is_folded(&self) -> bool {
        self.dense.is_some()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Adds `sigma * left * right^T`. Returns whether the term was kept.
    pub fn add_term(&mut self, sigma: f64, left: &[f64], right: &[f64]) -> bool {
        if sigma.abs() < TERM_DROP || !sigma.is_finite() {
            return false;
        }
        debug_assert_eq!(left.len(), self.m);
        debug_assert_eq!(right.len(), self.n);
        self.total_terms += 1;
        match &mut self.dense {
            Some(d) => d.add_rank_one(sigma, left, right),
            None => {
                self.terms.push(Term { sigma, left: left.to_vec(), right: right.to_vec() });
                if self.terms.len() * (self.m + self.n) >= self.m * self.n {
                    let d = self.to_dense();
                    self.terms.clear();
                    self.dense = Some(d);
                }
            }
        }
        true
    }

    /// `M v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.dense {
            return d.matvec(v);
        }
        let mut out = vec![0.0; self.m];
        for t in &self.terms {
            let c = t.sigma * dot(&t.right, v);
            out.iter_mut().zip(&t.left).for_each(|(o, l)| *o += c * l);
        }
        out
    }

    /// `M^T w`.
    pub fn apply_t(&self, w: &[f64]) -> Vec<f64> {
        if let Some(d) = &self.dense {
            return d.matvec_t(w);
        }
        let mut out = vec![0.0; self.n];
        for t in &self.terms {
            let c = t.sigma * dot(&t.left, w);
            out.iter_mut().zip(&t.right).for_each(|(o, r)| *o += c * r);
        }
        out
    }

    /// `<w, M v>`.
    pub fn bilinear(&self, w: &[f64], v: &[f64]) -> f64 {
        match &self.dense {
            Some(d) => d.bilinear(w, v),
            None => self.terms.iter().map(|t| t.sigma * dot(&t.left, w) * dot(&t.right, v)).sum(),
        }
    }

    /// Dense `M`.
    pub fn to_dense(&self) -> DenseMatrix {
        if let Some(d) = &self.dense {
            return d.clone();
        }
        let mut d = DenseMatrix::zeros(self.m, self.n);
        for t in &self.terms {
            d.add_rank_one(t.sigma, &t.left, &t.right);
        }
        d
    }

    /// `target += diag(left) M diag(right)`.
    pub fn add_scaled_into(&self, target: &mut DenseMatrix, left: &[f64], right: &[f64]) {
        match &self.dense {
            Some(d) => target.add_assign(&d.scaled(left, right)),
            None => {
                for t in &self.terms {
                    let l: Vec<f64> = t.left.iter().zip(left).map(|(a, b)| a * b).collect();
                    let r: Vec<f64> = t.right.iter().zip(right).map(|(a, b)| a * b).collect();
                    target.add_rank_one(t.sigma, &l, &r);
                }
            }
        }
    }
}

/// One telescoping segment `Delta = (A)_head - (A)_tail` with its model.
#[derive(Clone, Debug)]
pub struct PathSegment {
    /// `None` stands for the zero matrix and is allowed only on the first segment.
    pub tail: Option<Anchor>,
    pub head: Anchor,
    pub model: RankOneModel,
}

/// Ordered chain of segments whose implicit differences sum to `(A)_terminal`.
#[derive(Clone, Debug)]
pub struct MatrixApproxPath {
    segments: Vec<PathSegment>,
}

impl MatrixApproxPath {
    /// Path whose anchors are `heads` in order, with the first tail `None`.
    pub fn from_anchors(heads: &[Anchor], models: Vec<RankOneModel>) -> Result<Self> {
        if heads.is_empty() || heads.len() != models.len() {
            return invalid("path needs one model per anchor and at least one anchor");
        }
        let segments = heads
            .iter()
            .zip(models)
            .enumerate()
            .map(|(i, (h, model))| PathSegment {
                tail: if i == 0 { None } else { Some(heads[i - 1].clone()) },
                head: h.clone(),
                model,
            })
            .collect();
        Ok(Self { segments })
    }

    /// Single-segment path to `z` with a zero model.
    pub fn single(setup: &Setup, z: Anchor) -> Self {
        Self { segments: vec![PathSegment { tail: None, head: z, model: RankOneModel::zero(setup.m, setup.n) }] }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [PathSegment] {
        &mut self.segments
    }

    pub fn terminal(&self) -> &Anchor {
        &self.segments.last().expect("paths are nonempty").head
    }

    /// Gives the models back, consuming the path.
    pub fn into_models(self) -> Vec<RankOneModel> {
        self.segments.into_iter().map(|s| s.model).collect()
    }

    /// Appends `(A)_new_head - (A)_terminal` with a zero model.
    pub fn append_head(&mut self, new_head: Anchor) {
        let tail = self.terminal().clone();
        let (m, n) = (self.segments[0].model.rows(), self.segments[0].model.cols());
        self.segments.push(PathSegment { tail: Some(tail), head: new_head, model: RankOneModel::zero(m, n) });
    }

    /// Removes the last segment and drops its model.
    pub fn pop_head(&mut self) -> Result<PathSegment> {
        if self.segments.len() <= 1 {
            return Err(MgameError::InternalInvariant("cannot pop the only path segment".into()));
        }
        Ok(self.segments.pop().expect("checked length"))
    }

    /// First tail is `None`, later tails equal the preceding heads.
    pub fn chain_ok(&self) -> bool {
        self.segments.first().is_some_and(|s| s.tail.is_none())
            && self.segments.windows(2).all(|w| match &w[1].tail {
                Some(t) => Arc::ptr_eq(t, &w[0].head) || t.approx_eq(&w[0].head),
                None => false,
            })
    }

    /// Total number of rank-one terms across models.
    pub fn total_terms(&self) -> usize {
        self.segments.iter().map(|s| s.model.num_terms()).sum()
    }

    /// `sum_l (Delta_l - M_l) v` using one counted product at the terminal.
    pub fn residual_sum_matvec(&self, setup: &Setup, meter: &Meter<'_>, phase: Phase, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = meter.grounded_matvec(setup, self.terminal(), phase, v)?;
        for s in &self.segments {
            if !s.model.is_zero() {
                out.iter_mut().zip(s.model.apply(v)).for_each(|(o, a)| *o -= a);
            }
        }
        Ok(out)
    }

    /// `sum_l (Delta_l - M_l)^T w`.
    pub fn residual_sum_matvec_t(&self, setup: &Setup, meter: &Meter<'_>, phase: Phase, w: &[f64]) -> Result<Vec<f64>> {
        let mut out = meter.grounded_matvec_t(setup, self.terminal(), phase, w)?;
        for s in &self.segments {
            if !s.model.is_zero() {
                out.iter_mut().zip(s.model.apply_t(w)).for_each(|(o, a)| *o -= a);
            }
        }
        Ok(out)
    }

    /// `<v, (Delta_l - M_l) u>` for every segment, with one counted product
    /// per distinct anchor.
    pub fn per_segment_residual_bilinear(
        &self,
        setup: &Setup,
        meter: &Meter<'_>,
        phase: Phase,
        v: &[f64],
        u: &[f64],
    ) -> Result<Vec<f64>> {
        let mut cache: Vec<(Anchor, f64)> = Vec::new();
        let mut anchor_value = |a: &Anchor| -> Result<f64> {
            if let Some((_, val)) = cache.iter().find(|(b, _)| Arc::ptr_eq(a, b)) {
                return Ok(*val);
            }
            let val = dot(v, &meter.grounded_matvec(setup, a, phase, u)?);
            cache.push((a.clone(), val));
            Ok(val)
        };
        let mut out = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            let delta = match &s.tail {
                Some(t) if Arc::ptr_eq(t, &s.head) => 0.0,
                Some(t) => anchor_value(&s.head)? - anchor_value(t)?,
                None => anchor_value(&s.head)?,
            };
            out.push(delta - s.model.bilinear(v, u));
        }
        Ok(out)
    }

    /// Dense `Delta_l` for segment `l`.
    pub fn delta_dense(&self, setup: &Setup, a: &DenseMatrix, l: usize) -> Result<DenseMatrix> {
        let s = &self.segments[l];
        let head = ground_matrix(setup, &s.head, a)?;
        Ok(match &s.tail {
            Some(t) => head.sub(&ground_matrix(setup, t, a)?),
            None => head,
        })
    }

    /// Dense `Delta_l - M_l` for every segment.
    pub fn residuals_dense(&self, setup: &Setup, a: &DenseMatrix) -> Result<Vec<DenseMatrix>> {
        (0..self.segments.len())
            .map(|l| Ok(self.delta_dense(setup, a, l)?.sub(&self.segments[l].model.to_dense())))
            .collect()
    }

    /// `sum_l |Delta_l - M_l|_F^2`, computed from dense entries without oracle calls.
    pub fn size_dense(&self, setup: &Setup, a: Option<&DenseMatrix>) -> Result<f64> {
        let a = a.ok_or_else(|| MgameError::Unsupported("path size needs a dense backing".into()))?;
        Ok(self.residuals_dense(setup, a)?.iter().map(|r| r.frobenius_sq()).sum())
    }

    /// `|sum_l Delta_l - (A)_terminal|_F`.
    pub fn telescoping_error(&self, setup: &Setup, a: &DenseMatrix) -> Result<f64> {
        let mut sum = DenseMatrix::zeros(setup.m, setup.n);
        for l in 0..self.segments.len() {
            sum.add_assign(&self.delta_dense(setup, a, l)?);
        }
        Ok(sum.sub(&ground_matrix(setup, self.terminal(), a)?).frobenius_sq().sqrt())
    }

    /// Dense `sum_l M_l`, ungrounded at `basis`.
    pub fn ungrounded_model_sum(&self, setup: &Setup, basis: &Point) -> Result<DenseMatrix> {
        let s = ground_scalings(setup, basis)?;
        let inv_l: Vec<f64> = s.left.iter().map(|v| 1.0 / v).collect();
        let inv_r: Vec<f64> = s.right.iter().map(|v| 1.0 / v).collect();
        let mut c = DenseMatrix::zeros(setup.m, setup.n);
        for seg in &self.segments {
            seg.model.add_scaled_into(&mut c, &inv_l, &inv_r);
        }
        Ok(c)
    }

    /// JSON debug dump with anchor hashes, term counts and, given a dense
    /// backing, per-segment Frobenius residuals.
    pub fn debug_dump(&self, setup: &Setup, a: Option<&DenseMatrix>) -> Result<Value> {
        let residuals = match a {
            Some(a) => Some(self.residuals_dense(setup, a)?),
            None => None,
        };
        let segs: Vec<Value> = self
            .segments
            .iter()
            .enumerate()
            .map(|(l, s)| {
                let mut v = json!({
                    "tail": s.tail.as_ref().map(|t| anchor_hash(t)),
                    "head": anchor_hash(&s.head),
                    "terms": s.model.num_terms(),
                    "folded": s.model.is_folded(),
                });
                if let Some(r) = &residuals {
                    v["residual_frobenius"] = json!(r[l].frobenius_sq().sqrt());
                }
                v
            })
            .collect();
        Ok(json!({ "segments": segs, "terminal": anchor_hash(self.terminal()) }))
    }
}

/// Stable hex digest of a point's coordinates.
pub fn anchor_hash(p: &Point) -> String {
    let mut h = DefaultHasher::new();
    for v in p.x.iter().chain(&p.y) {
        v.to_bits().hash(&mut h);
    }
    format!("{:016x}", h.finish())
}
