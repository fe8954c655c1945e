//! Game setups, Bregman divergences, grounding transforms, stable balls,
//! collapsed centers and duality-gap evaluation.
//!
//! A joint point `z = (x, y)` has `x` of length `n` and `y` of length `m`.
//! The `y` block always lives on the simplex with negative entropy. The `x`
//! block lives on the simplex (l1-l1) or on the Euclidean unit ball with
//! `r(x) = |x|^2 / 2` (l2-l1). The payoff is `f(x, y) = y^T A x`; `x`
//! minimizes and `y` maximizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, MgameError, Result};
use crate::oracle::{dot, DenseMatrix, Meter, Phase};

/// Which matrix-game geometry is in use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Both players on simplices (zero-sum game).
    L1L1,
    /// `x` on the unit ball, `y` on the simplex (hard-margin SVM type).
    L2L1,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::L1L1 => "l1l1",
            Kind::L2L1 => "l2l1",
        })
    }
}

impl FromStr for Kind {
    type Err = MgameError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "l1l1" => Ok(Kind::L1L1),
            "l2l1" => Ok(Kind::L2L1),
            _ => invalid(format!("unknown game kind {s:?} (expected l1l1 or l2l1)")),
        }
    }
}

/// Geometry of one block of a joint point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Simplex,
    Ball,
}

/// Game geometry together with its truncation level and dgf range bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub kind: Kind,
    pub m: usize,
    pub n: usize,
    /// Lower bound on every simplex coordinate of the truncated domain.
    pub nu: f64,
    /// Range bound of the dgf, in nats.
    pub gamma: f64,
}

impl Setup {
    /// Setup whose truncation level suits a target accuracy `eps_target`.
    pub fn new(kind: Kind, m: usize, n: usize, eps_target: f64) -> Result<Self> {
        if !(eps_target > 0.0) || !eps_target.is_finite() {
            return invalid(format!("target accuracy must be positive, got {eps_target}"));
        }
        if m == 0 || n == 0 {
            return invalid("dimensions must be positive");
        }
        let d = (m + n) as f64;
        let nu = (eps_target.min(1.0) / (8.0 * m.max(n) as f64)).min(1.0 / d);
        Self::with_nu(kind, m, n, nu)
    }

    /// Setup with an explicit truncation level `0 < nu <= 1/(m+n)`.
    pub fn with_nu(kind: Kind, m: usize, n: usize, nu: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return invalid("dimensions must be positive");
        }
        let d = (m + n) as f64;
        if !(nu > 0.0) || nu > 1.0 / d * (1.0 + 1e-12) {
            return invalid(format!("truncation level {nu} outside (0, 1/d]"));
        }
        Ok(Self { kind, m, n, nu, gamma: Self::range_bound(kind, m, n) })
    }

    /// `log(mn)` for l1-l1 and `1/2 + log m` for l2-l1.
    pub fn range_bound(kind: Kind, m: usize, n: usize) -> f64 {
        match kind {
            Kind::L1L1 => ((m * n) as f64).ln(),
            Kind::L2L1 => 0.5 + (m as f64).ln(),
        }
    }

    pub fn d(&self) -> usize {
        self.m + self.n
    }

    pub fn x_kind(&self) -> BlockKind {
        match self.kind {
            Kind::L1L1 => BlockKind::Simplex,
            Kind::L2L1 => BlockKind::Ball,
        }
    }
}

/// Joint iterate `z = (x, y)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Point {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self { x: vec![0.0; n], y: vec![0.0; m] }
    }

    /// Minimizer of the dgf over the (truncated) domain: uniform simplex
    /// blocks and the origin for ball blocks.
    pub fn dgf_center(setup: &Setup) -> Self {
        let x = match setup.x_kind() {
            BlockKind::Simplex => vec![1.0 / setup.n as f64; setup.n],
            BlockKind::Ball => vec![0.0; setup.n],
        };
        Self { x, y: vec![1.0 / setup.m as f64; setup.m] }
    }

    pub fn dims_match(&self, setup: &Setup) -> bool {
        self.x.len() == setup.n && self.y.len() == setup.m
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &Point) -> f64 {
        self.x.iter().zip(&other.x).chain(self.y.iter().zip(&other.y)).fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// Equality up to `1e-12` per coordinate.
    pub fn approx_eq(&self, other: &Point) -> bool {
        self.x.len() == other.x.len() && self.y.len() == other.y.len() && self.max_abs_diff(other) <= 1e-12
    }

    /// `self - other`.
    pub fn sub(&self, other: &Point) -> Point {
        Point {
            x: self.x.iter().zip(&other.x).map(|(a, b)| a - b).collect(),
            y: self.y.iter().zip(&other.y).map(|(a, b)| a - b).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Point) {
        self.x.iter_mut().zip(&other.x).for_each(|(a, b)| *a += s * b);
        self.y.iter_mut().zip(&other.y).for_each(|(a, b)| *a += s * b);
    }

    pub fn scale(&mut self, s: f64) {
        self.x.iter_mut().chain(self.y.iter_mut()).for_each(|a| *a *= s);
    }

    pub fn dot(&self, other: &Point) -> f64 {
        dot(&self.x, &other.x) + dot(&self.y, &other.y)
    }

    /// Checks membership in the truncated domain (`truncated`) or the full domain.
    pub fn check_domain(&self, setup: &Setup, truncated: bool) -> Result<()> {
        if !self.dims_match(setup) {
            return invalid(format!(
                "point has blocks ({}, {}), setup expects ({}, {})",
                self.x.len(),
                self.y.len(),
                setup.n,
                setup.m
            ));
        }
        let floor = if truncated { setup.nu * (1.0 - 1e-9) } else { 0.0 };
        let check_simplex = |v: &[f64], name: &str| -> Result<()> {
            if v.iter().any(|&a| !(a >= floor) || !a.is_finite()) {
                return invalid(format!("{name} block has an entry below {floor}"));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return invalid(format!("{name} block sums to {s}, not 1"));
            }
            Ok(())
        };
        match setup.x_kind() {
            BlockKind::Simplex => check_simplex(&self.x, "x")?,
            BlockKind::Ball => {
                let nrm = dot(&self.x, &self.x).sqrt();
                if !(nrm <= 1.0 + 1e-9) {
                    return invalid(format!("x block has norm {nrm} > 1"));
                }
            }
        }
        check_simplex(&self.y, "y")
    }
}

/// `h(r) = r ln r - r + 1`, accurate near `r = 1`.
fn kl_kernel(r: f64) -> f64 {
    let d = r - 1.0;
    if d.abs() < 1e-3 {
        d * d * (0.5 - d * (1.0 / 6.0 - d * (1.0 / 12.0 - d * (1.0 / 20.0 - d / 30.0))))
    } else if r > 0.0 {
        r * r.ln() - r + 1.0
    } else {
        1.0
    }
}

/// `KL(p || q)` for probability vectors, summed as `sum q_i h(p_i / q_i)`
/// so every term is nonnegative and nearby points lose no precision.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            if b > 0.0 {
                b * kl_kernel(a / b)
            } else if a > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum()
}

/// Squared Hellinger distance `sum (sqrt p_i - sqrt q_i)^2`.
pub fn hellinger_sq(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum()
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

fn block_divergence(kind: BlockKind, from: &[f64], to: &[f64]) -> f64 {
    match kind {
        BlockKind::Simplex => kl(to, from),
        BlockKind::Ball => half_sq_dist(to, from),
    }
}

/// Bregman divergence `V_from(to)` without domain checks.
pub(crate) fn breg(setup: &Setup, from: &Point, to: &Point) -> f64 {
    block_divergence(setup.x_kind(), &from.x, &to.x) + kl(&to.y, &from.y)
}

/// Bregman divergence `V_from(to)` of the setup's dgf.
pub fn bregman(setup: &Setup, from: &Point, to: &Point) -> Result<f64> {
    if !from.dims_match(setup) || !to.dims_match(setup) {
        return invalid("point dimensions do not match the setup");
    }
    let bad = |v: &[f64]| v.iter().any(|&a| !(a > 0.0));
    if bad(&from.y) || (setup.x_kind() == BlockKind::Simplex && bad(&from.x)) {
        return invalid("reference point has a nonpositive simplex coordinate");
    }
    Ok(breg(setup, from, to))
}

/// Finite multiset of regularization centers with cached collapsed point.
#[derive(Clone, Debug)]
pub struct CenterSet {
    members: Vec<Point>,
    collapsed: Point,
    mean: Point,
}

impl CenterSet {
    pub fn new(setup: &Setup, members: Vec<Point>) -> Result<Self> {
        if members.is_empty() {
            return invalid("center set must be nonempty");
        }
        if members.iter().any(|p| !p.dims_match(setup)) {
            return invalid("center dimensions do not match the setup");
        }
        let collapsed = collapse(setup, &members)?;
        let k = members.len() as f64;
        let mut mean = Point::zeros(setup.n, setup.m);
        for p in &members {
            mean.axpy(1.0 / k, p);
        }
        Ok(Self { members, collapsed, mean })
    }

    pub fn members(&self) -> &[Point] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Single point `q` with `V_U(z) = |U| V_q(z) + C(U)`.
    pub fn collapsed(&self) -> &Point {
        &self.collapsed
    }

    /// Arithmetic mean of the members.
    pub fn mean(&self) -> &Point {
        &self.mean
    }
}

/// Normalized geometric mean on simplex blocks, arithmetic mean on ball blocks.
pub fn collapse(setup: &Setup, members: &[Point]) -> Result<Point> {
    if members.is_empty() {
        return invalid("cannot collapse an empty center set");
    }
    let k = members.len() as f64;
    let geo = |get: &dyn Fn(&Point) -> &[f64], len: usize| -> Result<Vec<f64>> {
        let mut l = vec![0.0; len];
        for p in members {
            for (acc, &v) in l.iter_mut().zip(get(p)) {
                if !(v > 0.0) {
                    return invalid("collapse needs strictly positive simplex coordinates");
                }
                *acc += v.ln() / k;
            }
        }
        let mx = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut g: Vec<f64> = l.iter().map(|v| (v - mx).exp()).collect();
        let s: f64 = g.iter().sum();
        g.iter_mut().for_each(|v| *v /= s);
        Ok(g)
    };
    let x = match setup.x_kind() {
        BlockKind::Simplex => geo(&|p: &Point| &p.x, setup.n)?,
        BlockKind::Ball => {
            let mut x = vec![0.0; setup.n];
            for p in members {
                x.iter_mut().zip(&p.x).for_each(|(a, b)| *a += b / k);
            }
            x
        }
    };
    let y = geo(&|p: &Point| &p.y, setup.m)?;
    Ok(Point { x, y })
}

/// `V_U(z) = sum_{u in U} V_u(z)`.
pub fn bregman_sum(setup: &Setup, centers: &CenterSet, z: &Point) -> Result<f64> {
    centers.members().iter().map(|u| bregman(setup, u, z)).sum()
}

/// Diagonal factors with `(B)_z = diag(left) B diag(right)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalings {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// Grounding factors at `basis`: `sqrt(y)` on the left, `sqrt(x)` (simplex)
/// or ones (ball) on the right.
pub fn ground_scalings(setup: &Setup, basis: &Point) -> Result<Scalings> {
    if !basis.dims_match(setup) {
        return invalid("basis dimensions do not match the setup");
    }
    let root =
        |v: &[f64]| -> Result<Vec<f64>> {
            v.iter()
                .map(|&a| {
                    if a > 0.0 {
                        Ok(a.sqrt())
                    } else {
                        invalid("grounding basis has a nonpositive simplex coordinate")
                    }
                })
                .collect()
        };
    let right = match setup.x_kind() {
        BlockKind::Simplex => root(&basis.x)?,
        BlockKind::Ball => vec![1.0; setup.n],
    };
    Ok(Scalings { left: root(&basis.y)?, right })
}

/// `(z)_basis`: simplex coordinates divided by `sqrt(basis)`, ball blocks unchanged.
pub fn ground_point(setup: &Setup, basis: &Point, z: &Point) -> Result<Point> {
    let s = ground_scalings(setup, basis)?;
    Ok(Point {
        x: z.x.iter().zip(&s.right).map(|(a, r)| a / r).collect(),
        y: z.y.iter().zip(&s.left).map(|(a, l)| a / l).collect(),
    })
}

/// Squared local norm `|z|^2_basis`.
pub fn local_norm_sq(setup: &Setup, basis: &Point, z: &Point) -> f64 {
    let sx: f64 = match setup.x_kind() {
        BlockKind::Simplex => z.x.iter().zip(&basis.x).map(|(a, b)| a * a / b).sum(),
        BlockKind::Ball => dot(&z.x, &z.x),
    };
    sx + z.y.iter().zip(&basis.y).map(|(a, b)| a * a / b).sum::<f64>()
}

/// Dense `(A)_basis`.
pub fn ground_matrix(setup: &Setup, basis: &Point, a: &DenseMatrix) -> Result<DenseMatrix> {
    let s = ground_scalings(setup, basis)?;
    Ok(a.scaled(&s.left, &s.right))
}

/// Dense `(B)_{basis,*}`, the inverse of [`ground_matrix`].
pub fn unground_matrix(setup: &Setup, basis: &Point, b: &DenseMatrix) -> Result<DenseMatrix> {
    let s = ground_scalings(setup, basis)?;
    let inv = |v: &[f64]| v.iter().map(|a| 1.0 / a).collect::<Vec<_>>();
    Ok(b.scaled(&inv(&s.left), &inv(&s.right)))
}

/// Stability and local-boundedness functions of the matrix-game setups.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct StabilityProfile {
    /// Replaces `pi(c)` by a constant; used only for fault injection.
    pub pi_override: Option<f64>,
}

impl StabilityProfile {
    /// Exponent of the kinetic power law.
    pub const RHO: f64 = 2.0;
    /// Compatibility constant.
    pub const ZETA: f64 = 2.0;
    /// Kinetic movement constant.
    pub const GAMMA: f64 = 2.0;

    /// `iota(c) = exp(2 sqrt(2c))`.
    pub fn iota(&self, c: f64) -> f64 {
        (2.0 * (2.0 * c).sqrt()).exp()
    }

    /// `pi(c) = 1/(2c)`, paired with the squared local norm.
    pub fn pi(&self, c: f64) -> f64 {
        self.pi_override.unwrap_or(1.0 / (2.0 * c))
    }
}

/// Box constraints intersected with the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    log_lo: Vec<f64>,
    log_hi: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return invalid("box bounds must be nonempty and of equal length");
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(*l >= 0.0) || !(l <= h)) {
            return invalid("box bounds need 0 <= lo <= hi");
        }
        let (sl, sh): (f64, f64) = (lo.iter().sum(), hi.iter().sum());
        if sl > 1.0 + 1e-12 || sh < 1.0 - 1e-12 {
            return Err(MgameError::InternalInvariant(format!(
                "box does not meet the simplex: sum lo = {sl}, sum hi = {sh}"
            )));
        }
        let log_lo = lo.iter().map(|v| v.ln()).collect();
        let log_hi = hi.iter().map(|v| v.ln()).collect();
        Ok(Self { lo, hi, log_lo, log_hi })
    }

    pub fn contains(&self, v: &[f64], rel_tol: f64) -> bool {
        v.len() == self.lo.len()
            && v.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(a, (l, h))| *a >= l * (1.0 - rel_tol) && *a <= h * (1.0 + rel_tol))
    }
}

/// Feasible set of one block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockRegion {
    /// Simplex intersected with a coordinate box.
    Simplex(BoxBounds),
    /// Euclidean unit ball.
    UnitBall,
}

/// Product feasible region for a joint point.
#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub x: BlockRegion,
    pub y: BlockRegion,
}

impl Region {
    /// The truncated domain: simplex entries in `[nu, 1]`.
    pub fn truncated(setup: &Setup) -> Region {
        Self::with_floor(setup, setup.nu)
    }

    /// The untruncated domain.
    pub fn full(setup: &Setup) -> Region {
        Self::with_floor(setup, 0.0)
    }

    fn with_floor(setup: &Setup, floor: f64) -> Region {
        let simplex = |k: usize| {
            BlockRegion::Simplex(
                BoxBounds::new(vec![floor; k], vec![1.0; k]).expect("floor <= 1/d keeps the box feasible"),
            )
        };
        let x = match setup.x_kind() {
            BlockKind::Simplex => simplex(setup.n),
            BlockKind::Ball => BlockRegion::UnitBall,
        };
        Region { x, y: simplex(setup.m) }
    }

    pub fn contains(&self, z: &Point) -> bool {
        let block = |r: &BlockRegion, v: &[f64]| match r {
            BlockRegion::Simplex(b) => b.contains(v, 1e-12) && (v.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            BlockRegion::UnitBall => dot(v, v).sqrt() <= 1.0 + 1e-12,
        };
        block(&self.x, &z.x) && block(&self.y, &z.y)
    }
}

/// Multiplicative box `{z : c^{-1} grad^2 r(center) <= grad^2 r(z) <= c grad^2 r(center)}`
/// intersected with the truncated domain.
#[derive(Clone, Debug, PartialEq)]
pub struct StableBall {
    pub center: Point,
    pub c: f64,
    region: Region,
}

impl StableBall {
    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn contains(&self, z: &Point) -> bool {
        self.region.contains(z)
    }
}

/// Builds the `c`-stable ball about `center`.
pub fn stable_ball(setup: &Setup, center: &Point, c: f64) -> Result<StableBall> {
    if !(c > 1.0) {
        return invalid(format!("stable-ball factor must exceed 1, got {c}"));
    }
    if !center.dims_match(setup) {
        return invalid("center dimensions do not match the setup");
    }
    let boxed = |v: &[f64]| -> Result<BlockRegion> {
        if v.iter().any(|&a| !(a > 0.0)) {
            return invalid("stable-ball center has a nonpositive simplex coordinate");
        }
        let lo = v.iter().map(|&a| setup.nu.max(a / c)).collect::<Vec<_>>();
        let hi = v.iter().map(|&a| (c * a).min(1.0)).collect::<Vec<_>>();
        Ok(BlockRegion::Simplex(BoxBounds::new(lo, hi)?))
    };
    let x = match setup.x_kind() {
        BlockKind::Simplex => boxed(&center.x)?,
        BlockKind::Ball => BlockRegion::UnitBall,
    };
    let region = Region { x, y: boxed(&center.y)? };
    Ok(StableBall { center: center.clone(), c, region })
}

/// `grad r(p)`: `log p` on simplex blocks (up to an additive constant), `p` on ball blocks.
pub fn grad_r(setup: &Setup, p: &Point) -> Point {
    let x = match setup.x_kind() {
        BlockKind::Simplex => p.x.iter().map(|v| v.ln()).collect(),
        BlockKind::Ball => p.x.clone(),
    };
    Point { x, y: p.y.iter().map(|v| v.ln()).collect() }
}

/// `argmin_{u in region} lambda r(u) - <theta, u>`.
///
/// Every prox step with a constant operator reduces to this map with
/// `theta = sum_j lambda_j grad r(c_j) - g` and `lambda = sum_j lambda_j`.
pub fn mirror_map(region: &Region, theta: &Point, lambda: f64) -> Result<Point> {
    if !(lambda > 0.0) {
        return Err(MgameError::InternalInvariant(format!("mirror map weight must be positive, got {lambda}")));
    }
    Ok(Point { x: block_map(&region.x, &theta.x, lambda)?, y: block_map(&region.y, &theta.y, lambda)? })
}

fn block_map(region: &BlockRegion, theta: &[f64], lambda: f64) -> Result<Vec<f64>> {
    match region {
        BlockRegion::Simplex(b) => {
            let s: Vec<f64> = theta.iter().map(|t| t / lambda).collect();
            box_simplex_exp(&s, b)
        }
        BlockRegion::UnitBall => {
            let mut u: Vec<f64> = theta.iter().map(|t| t / lambda).collect();
            project_unit_ball(&mut u);
            Ok(u)
        }
    }
}

pub(crate) fn project_unit_ball(u: &mut [f64]) {
    let nrm = dot(u, u).sqrt();
    if nrm > 1.0 {
        u.iter_mut().for_each(|v| *v /= nrm);
    }
}

/// Solves `u_i = clip(exp(s_i + mu), lo_i, hi_i)` with `sum u = 1`.
///
/// The sum is nondecreasing and piecewise smooth in `mu`; the breakpoints are
/// swept in sorted order in log space, which locates `mu` exactly without
/// underflow.
#[allow(clippy::needless_range_loop)]
pub fn box_simplex_exp(s: &[f64], b: &BoxBounds) -> Result<Vec<f64>> {
    let k = s.len();
    if k != b.lo.len() {
        return invalid("box and exponent lengths differ");
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(MgameError::InternalInvariant("NaN exponent in box-simplex map".into()));
    }
    let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = s.iter().map(|v| (v - smax).exp()).collect();
    let total: f64 = e.iter().sum();
    let mut u: Vec<f64> = e.iter().map(|v| v / total).collect();
    if u.iter().zip(b.lo.iter().zip(&b.hi)).all(|(v, (l, h))| v >= l && v <= h) {
        return Ok(u);
    }

    let sum_lo: f64 = b.lo.iter().sum();
    if sum_lo >= 1.0 - 1e-15 {
        return Ok(b.lo.clone());
    }
    if let Some(v) = box_simplex_active_set(&e, b) {
        return Ok(v);
    }
    let mut events: Vec<(f64, usize, bool)> = Vec::with_capacity(2 * k);
    for i in 0..k {
        if b.hi[i] <= 0.0 {
            continue;
        }
        if b.lo[i] > 0.0 {
            events.push((b.log_lo[i] - s[i], i, true));
        }
        events.push((b.log_hi[i] - s[i], i, false));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.2.cmp(&a.2)));
    if events.is_empty() {
        return Err(MgameError::InternalInvariant("box-simplex map has no free coordinate".into()));
    }
    let mut lam_ref = events[0].0;
    let mut fixed = 0.0;
    let mut free = 0.0;
    let mut n_free = 0usize;
    for i in 0..k {
        if b.lo[i] > 0.0 || b.hi[i] <= 0.0 {
            fixed += b.lo[i];
        } else {
            free += (s[i] + lam_ref).exp();
            n_free += 1;
        }
    }
    let mut lam_star = None;
    for &(lam_e, i, enter) in &events {
        let grown = if free > 0.0 { free * (lam_e - lam_ref).exp() } else { 0.0 };
        if fixed + grown >= 1.0 {
            lam_star = Some(if free > 0.0 { lam_ref + ((1.0 - fixed) / free).ln() } else { lam_e });
            break;
        }
        free = grown;
        lam_ref = lam_e;
        if enter {
            fixed -= b.lo[i];
            free += b.lo[i];
            n_free += 1;
        } else {
            n_free -= 1;
            free = if n_free == 0 { 0.0 } else { (free - b.hi[i]).max(0.0) };
            fixed += b.hi[i];
        }
    }
    let lam = match lam_star {
        Some(l) => l,
        None if fixed >= 1.0 - 1e-12 => lam_ref,
        None => return Err(MgameError::InternalInvariant(format!("box-simplex map failed to bracket: mass {fixed}"))),
    };
    for i in 0..k {
        u[i] = (s[i] + lam).exp().clamp(b.lo[i], b.hi[i]);
    }
    // Polish the free coordinates so the block sums to one to rounding.
    for _ in 0..4 {
        let (mut sf, mut sx) = (0.0, 0.0);
        for i in 0..k {
            if u[i] > b.lo[i] && u[i] < b.hi[i] {
                sf += u[i];
            } else {
                sx += u[i];
            }
        }
        if sf <= 0.0 {
            break;
        }
        let scale = (1.0 - sx) / sf;
        if (scale - 1.0).abs() <= 1e-16 {
            break;
        }
        for i in 0..k {
            if u[i] > b.lo[i] && u[i] < b.hi[i] {
                u[i] = (u[i] * scale).clamp(b.lo[i], b.hi[i]);
            }
        }
    }
    Ok(u)
}

/// Active-set solve of the box-simplex map from shifted exponentials `e`.
/// Returns `None` when the iteration does not settle on a KKT point, in which
/// case the caller falls back to the sorted breakpoint sweep.
fn box_simplex_active_set(e: &[f64], b: &BoxBounds) -> Option<Vec<f64>> {
    #[derive(Clone, Copy, PartialEq)]
    enum State {
        Lo,
        Free,
        Hi,
    }
    let k = e.len();
    let mut st: Vec<State> = (0..k).map(|i| if b.hi[i] <= 0.0 { State::Lo } else { State::Free }).collect();
    for _ in 0..(2 * k + 8) {
        let (mut fixed, mut z) = (0.0, 0.0);
        for i in 0..k {
            match st[i] {
                State::Lo => fixed += b.lo[i],
                State::Hi => fixed += b.hi[i],
                State::Free => z += e[i],
            }
        }
        if z < 1e-280 || fixed >= 1.0 {
            return None;
        }
        let c = (1.0 - fixed) / z;
        let mut clamped = false;
        for i in 0..k {
            if st[i] == State::Free {
                let v = e[i] * c;
                if v < b.lo[i] {
                    st[i] = State::Lo;
                    clamped = true;
                } else if v > b.hi[i] {
                    st[i] = State::Hi;
                    clamped = true;
                }
            }
        }
        if clamped {
            continue;
        }
        let mut released = false;
        for i in 0..k {
            if b.hi[i] <= 0.0 {
                continue;
            }
            let v = e[i] * c;
            let release = match st[i] {
                State::Lo => v > b.lo[i],
                State::Hi => v < b.hi[i],
                State::Free => false,
            };
            if release {
                st[i] = State::Free;
                released = true;
            }
        }
        if !released {
            return Some(
                (0..k)
                    .map(|i| match st[i] {
                        State::Lo => b.lo[i],
                        State::Hi => b.hi[i],
                        State::Free => (e[i] * c).clamp(b.lo[i], b.hi[i]),
                    })
                    .collect(),
            );
        }
    }
    None
}

/// `min_{u in region} <g, u>`, solved exactly per block.
pub fn linear_min(region: &Region, g: &Point) -> f64 {
    block_linear_min(&region.x, &g.x) + block_linear_min(&region.y, &g.y)
}

fn block_linear_min(region: &BlockRegion, g: &[f64]) -> f64 {
    match region {
        BlockRegion::UnitBall => -dot(g, g).sqrt(),
        BlockRegion::Simplex(b) => {
            let mut order: Vec<usize> = (0..g.len()).collect();
            order.sort_by(|&i, &j| g[i].total_cmp(&g[j]));
            let mut rest = 1.0 - b.lo.iter().sum::<f64>();
            let mut val: f64 = b.lo.iter().zip(g).map(|(l, gi)| l * gi).sum();
            for i in order {
                if rest <= 0.0 {
                    break;
                }
                let add = (b.hi[i] - b.lo[i]).min(rest);
                val += add * g[i];
                rest -= add;
            }
            val
        }
    }
}

/// `max_{u in region} <g, z - u>`: the exact VI residual of `z` for the
/// constant operator value `g`.
pub fn vi_residual(region: &Region, g: &Point, z: &Point) -> f64 {
    g.dot(z) - linear_min(region, g)
}

/// Residual of `g` after removing a normal vector of `region` at `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalResidual {
    /// `|g + n|_2` for the chosen `n`.
    pub norm: f64,
    /// Bound on `<n, u - z>` over `u` in the region; nonzero only when a
    /// ball point within rounding of the sphere is treated as on it.
    pub slack: f64,
}

/// Splits `g = R - n` with `n` a normal vector of `region` at `z` chosen to
/// make `|R|_2` small, so that `<g, z - u> <= |R|_2 |z - u|_2 + slack` for
/// every `u` in the region. The simplex multiplier is located by bisection.
pub fn normal_residual(region: &Region, g: &Point, z: &Point) -> NormalResidual {
    let (sx, ex) = block_normal_residual(&region.x, &g.x, &z.x);
    let (sy, ey) = block_normal_residual(&region.y, &g.y, &z.y);
    NormalResidual { norm: (sx + sy).sqrt(), slack: ex + ey }
}

fn block_normal_residual(region: &BlockRegion, g: &[f64], z: &[f64]) -> (f64, f64) {
    match region {
        BlockRegion::UnitBall => {
            // Normal cone at the sphere is {mu z : mu >= 0}.
            let nz = dot(z, z).sqrt();
            let mu = if nz >= 1.0 - 1e-9 { (-dot(g, z) / (nz * nz)).max(0.0) } else { 0.0 };
            let sq = g.iter().zip(z).map(|(a, b)| (a + mu * b).powi(2)).sum();
            (sq, mu * nz * (1.0 - nz).max(0.0))
        }
        BlockRegion::Simplex(b) => {
            // Normal cone: lambda 1 plus nonpositive entries at lower bounds
            // and nonnegative entries at upper bounds.
            let comp = |i: usize, lam: f64| {
                let v = g[i] + lam;
                match (z[i] <= b.lo[i], z[i] >= b.hi[i]) {
                    (true, true) => 0.0,
                    (true, false) => v.min(0.0),
                    (false, true) => v.max(0.0),
                    (false, false) => v,
                }
            };
            let slope = |lam: f64| (0..g.len()).map(|i| comp(i, lam)).sum::<f64>();
            let (mut lo, mut hi) =
                g.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(-v), h.max(-v)));
            if !(lo < hi) {
                hi = lo;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let lam = 0.5 * (lo + hi);
            ((0..g.len()).map(|i| comp(i, lam).powi(2)).sum(), 0.0)
        }
    }
}

/// Duality gap of `z` over the untruncated domain, metered as verification.
pub fn gap(setup: &Setup, meter: &Meter<'_>, z: &Point) -> Result<f64> {
    if !z.dims_match(setup) {
        return invalid("point dimensions do not match the setup");
    }
    let ax = meter.counted_matvec(Phase::Verification, &z.x)?;
    let aty = meter.counted_matvec_t(Phase::Verification, &z.y)?;
    let best_y = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let g = match setup.kind {
        Kind::L1L1 => best_y - aty.iter().cloned().fold(f64::INFINITY, f64::min),
        Kind::L2L1 => best_y + dot(&aty, &aty).sqrt(),
    };
    Ok(g.max(0.0))
}

/// Seeded simplex point with every entry at least `floor` and a heavy tail
/// toward small coordinates.
pub fn random_simplex<R: rand::Rng + ?Sized>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.0f64..1.0).powi(3) + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    let spare = 1.0 - floor * k as f64;
    raw.iter().map(|v| floor + spare * v / s).collect()
}

/// Seeded point of the truncated domain.
pub fn random_point<R: rand::Rng + ?Sized>(rng: &mut R, setup: &Setup) -> Point {
    let x = match setup.x_kind() {
        BlockKind::Simplex => random_simplex(rng, setup.n, setup.nu),
        BlockKind::Ball => {
            let mut v: Vec<f64> = (0..setup.n).map(|_| rng.random_range(-1.0..1.0)).collect();
            project_unit_ball(&mut v);
            v
        }
    };
    Point::new(x, random_simplex(rng, setup.m, setup.nu))
}
