//! Smooth-until-proven-guilty inner solver: the composite prox subsolver,
//! the Judge, the two-step composite mirror-prox Step and the solver loop.

use serde_json::json;

use crate::error::{MgameError, Result};
use crate::geometry::{
    breg, grad_r, ground_scalings, local_norm_sq, mirror_map, normal_residual, stable_ball, vi_residual, CenterSet,
    Point, Region, Scalings, Setup, StabilityProfile,
};
use crate::oracle::{dot, DenseMatrix, Meter, Phase};
use crate::path::{Anchor, MatrixApproxPath};
use crate::trace::Tracer;

/// Outcome of one Judge call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Smooth,
    Guilty,
}

/// Tunables of the inner solver.
#[derive(Clone, Debug, PartialEq)]
pub struct SupgConfig {
    /// Smoothness threshold.
    pub tau: f64,
    /// Stopping tolerance of the composite subsolver, in squared local norm.
    pub inner_tol: f64,
    /// Iteration cap of the composite subsolver.
    pub max_inner_iters: usize,
    /// Hard cap on guilty steps within one solve.
    pub max_guilty_steps: u64,
}

impl SupgConfig {
    pub fn new(tau: f64, inner_tol: f64) -> Self {
        Self { tau, inner_tol, max_inner_iters: 500, max_guilty_steps: 1_000_000 }
    }
}

/// `J = ceil((1 + tau/alpha) log(gamma/eps))`, at least 1.
pub fn progress_cap(tau: f64, alpha: f64, gamma: f64, eps: f64) -> u64 {
    let j = ((1.0 + tau / alpha) * (gamma / eps).ln()).ceil();
    if j.is_finite() && j >= 1.0 {
        j as u64
    } else {
        1
    }
}

/// Strongly monotone VI over `region` with operator
/// `F(u) = g0 + (C^T u_y, -C u_x) + sum_j lambda_j (grad r(u) - grad r(c_j))`.
#[derive(Clone, Debug)]
pub struct CompositeProxProblem<'a> {
    pub region: &'a Region,
    pub g0: Point,
    /// Explicit bilinear coupling; `None` means the operator is constant plus Bregman terms.
    pub coupling: Option<&'a DenseMatrix>,
    /// `(lambda_j, grad r(c_j))` pairs.
    pub anchors: Vec<(f64, Point)>,
    /// Basis of the local norm used in the stopping test.
    pub basis: &'a Point,
}

/// Result of the composite subsolver.
#[derive(Clone, Debug)]
pub struct CompositeSolution {
    pub point: Point,
    pub iterations: usize,
    /// Final squared local-norm fixed-point residual.
    pub residual: f64,
}

fn skew(c: &DenseMatrix, u: &Point) -> Point {
    let mut y = c.matvec(&u.x);
    y.iter_mut().for_each(|v| *v = -*v);
    Point { x: c.matvec_t(&u.y), y }
}

impl CompositeProxProblem<'_> {
    fn theta_base(&self) -> (Point, f64) {
        let (n, m) = (self.g0.x.len(), self.g0.y.len());
        let mut theta = Point::zeros(n, m);
        theta.axpy(-1.0, &self.g0);
        let mut lam = 0.0;
        for (l, g) in &self.anchors {
            theta.axpy(*l, g);
            lam += l;
        }
        (theta, lam)
    }

    /// Operator value `F(u)`.
    pub fn operator(&self, setup: &Setup, u: &Point) -> Point {
        let mut f = self.g0.clone();
        if let Some(c) = self.coupling {
            f.axpy(1.0, &skew(c, u));
        }
        let gu = grad_r(setup, u);
        for (l, g) in &self.anchors {
            f.axpy(*l, &gu);
            f.axpy(-*l, g);
        }
        f
    }
}

/// Solves a [`CompositeProxProblem`].
///
/// Without coupling the answer is one closed-form mirror map. Otherwise a
/// composite mirror-prox loop with backtracking treats the coupling
/// explicitly and the Bregman terms exactly; it stops once the squared
/// local-norm step falls below `tol`, at `max_iters`, or when the step stalls.
/// `eta` carries the step size between calls.
pub fn solve_composite_prox(
    setup: &Setup,
    problem: &CompositeProxProblem<'_>,
    warm: &Point,
    tol: f64,
    max_iters: usize,
    eta: &mut f64,
) -> Result<CompositeSolution> {
    let (theta, lam) = problem.theta_base();
    let c = match problem.coupling {
        None => {
            let point = mirror_map(problem.region, &theta, lam)?;
            return Ok(CompositeSolution { point, iterations: 0, residual: 0.0 });
        }
        Some(c) => c,
    };
    if !(*eta > 0.0) || !eta.is_finite() {
        *eta = 1.0;
    }
    let mut u = {
        let mut t = theta.clone();
        t.axpy(-1.0, &skew(c, warm));
        mirror_map(problem.region, &t, lam)?
    };
    let mut residual = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut stall = 0usize;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let cu = skew(c, &u);
        let gu = grad_r(setup, &u);
        let (half, plus) = loop {
            let inv = 1.0 / *eta;
            let mut t = theta.clone();
            t.axpy(inv, &gu);
            let base = t.clone();
            t.axpy(-1.0, &cu);
            let half = mirror_map(problem.region, &t, lam + inv)?;
            let ch = skew(c, &half);
            let mut t2 = base;
            t2.axpy(-1.0, &ch);
            let plus = mirror_map(problem.region, &t2, lam + inv)?;
            let lhs = *eta * ch.sub(&cu).dot(&half.sub(&plus));
            let rhs = breg(setup, &u, &half) + breg(setup, &half, &plus);
            if lhs <= rhs + 1e-300 || *eta < 1e-12 {
                break (half, plus);
            }
            *eta *= 0.5;
        };
        let _ = half;
        residual = local_norm_sq(setup, problem.basis, &plus.sub(&u));
        u = plus;
        if residual <= tol {
            break;
        }
        if residual < 0.5 * best {
            best = residual;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 25 {
                break;
            }
        }
        *eta = (*eta * 1.5).min(1e12);
    }
    Ok(CompositeSolution { point: u, iterations, residual })
}

/// Applies one guilty update along grounded unit directions `(v, u)`:
/// every segment model gains `<v, (Delta_l - M_l) u> v u^T`. Returns the
/// sum of accepted coefficients.
fn guilty_update(
    setup: &Setup,
    meter: &Meter<'_>,
    path: &mut MatrixApproxPath,
    v: &[f64],
    u: &[f64],
) -> Result<(f64, f64)> {
    let sig = path.per_segment_residual_bilinear(setup, meter, Phase::SupgGuilty, v, u)?;
    let (mut total, mut drop) = (0.0, 0.0);
    for (seg, s) in path.segments_mut().iter_mut().zip(&sig) {
        if seg.model.add_term(*s, v, u) {
            total += s;
            drop += s * s;
        }
    }
    Ok((total, drop))
}

fn unit(v: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = dot(v, v).sqrt();
    if n > 0.0 && n.is_finite() {
        Some((v.iter().map(|a| a / n).collect(), n))
    } else {
        None
    }
}

/// Judge on grounded candidates: the first candidate with
/// `<zbar_y, R zbar_x> > tau_eff |zbar_x| |zbar_y|`, where `R` is the path
/// residual sum, triggers a rank-one update of every model.
pub fn judge(
    setup: &Setup,
    meter: &Meter<'_>,
    path: &mut MatrixApproxPath,
    tau_eff: f64,
    z1: &Point,
    z2: &Point,
) -> Result<Verdict> {
    for cand in [z1, z2] {
        let (ux, nx) = match unit(&cand.x) {
            Some(p) => p,
            None => continue,
        };
        let (vy, ny) = match unit(&cand.y) {
            Some(p) => p,
            None => continue,
        };
        let r = path.residual_sum_matvec(setup, meter, Phase::SupgProgress, &cand.x)?;
        if dot(&cand.y, &r) > tau_eff * nx * ny {
            guilty_update(setup, meter, path, &vy, &ux)?;
            return Ok(Verdict::Guilty);
        }
    }
    Ok(Verdict::Smooth)
}

/// Largest `pi` with `V(z -> w) >= pi |w - z|^2_basis` and
/// `V(w -> z') >= pi |z' - w|^2_basis`, the two inequalities the smooth
/// case of a Step relies on. Local boundedness makes it at least `pi(c)`
/// whenever all points lie in the `c`-stable ball about `basis`.
pub fn certified_pi(setup: &Setup, basis: &Point, z: &Point, w: &Point, zp: &Point) -> f64 {
    let mut pi = f64::INFINITY;
    for (from, to) in [(z, w), (w, zp)] {
        let norm = local_norm_sq(setup, basis, &to.sub(from));
        if norm > 0.0 {
            pi = pi.min(breg(setup, from, to) / norm);
        }
    }
    pi
}

/// Judge threshold for one Step: the largest `t` such that
/// `t * sum_k |x_k| |y_k| <= tau (V(z -> w) + V(w -> z'))` over the two
/// grounded candidate norms. Smooth verdicts then bound the bilinear
/// residual by the divergence terms the smooth case discards. It is at
/// least `2 certified_pi tau`.
pub fn certified_threshold(setup: &Setup, tau: f64, z: &Point, w: &Point, zp: &Point, norms: &[(f64, f64)]) -> f64 {
    let cross: f64 = norms.iter().map(|(a, b)| a * b).sum();
    if cross > 0.0 {
        tau * (breg(setup, z, w) + breg(setup, w, zp)) / cross
    } else {
        f64::INFINITY
    }
}

/// Counters of one [`supg_solve`] call.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SupgStats {
    pub progress_steps: u64,
    pub guilty_steps: u64,
    pub inner_iterations: u64,
    pub max_inner_residual: f64,
    pub cap: u64,
    /// Smooth verdicts whose residual test exceeds the certified per-step threshold.
    pub threshold_violations: u64,
    /// Set when the residual certificate ended the loop before the cap.
    pub certified: bool,
}

/// Output of [`supg_solve`].
#[derive(Clone, Debug)]
pub struct SupgOutcome {
    pub point: Point,
    pub stats: SupgStats,
}

/// Per-call state shared by the Steps of one solve.
pub struct StepContext<'a> {
    pub setup: &'a Setup,
    pub meter: &'a Meter<'a>,
    pub region: Region,
    pub z_center: Anchor,
    /// `alpha |U|`.
    pub reg: f64,
    pub alpha: f64,
    pub tau: f64,
    /// Worst-case threshold `2 pi(c) tau`, used for the guilty budget.
    pub tau_eff: f64,
    /// Replaces the certified per-step constant; used only for fault injection.
    pub pi_override: Option<f64>,
    pub grad_q: Point,
    /// Ungrounded model sum at `z_center`.
    pub coupling: DenseMatrix,
    scal: Scalings,
    warm_w: Option<Point>,
    eta: f64,
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    pub inner_iterations: u64,
    pub max_inner_residual: f64,
    pub threshold_violations: u64,
    /// Sum of model size decreases from guilty updates.
    pub size_drop: f64,
    /// Largest `lhs / (|x| |y|)` of the last judged candidates.
    pub last_ratio: f64,
    pub last_threshold: f64,
}

/// `(A z_x, A^T z_y)` for a point `z`, cached between Steps.
#[derive(Clone, Debug)]
pub struct Products {
    pub ax: Vec<f64>,
    pub aty: Vec<f64>,
}

impl Products {
    pub fn compute(meter: &Meter<'_>, phase: Phase, z: &Point) -> Result<Self> {
        Ok(Self { ax: meter.counted_matvec(phase, &z.x)?, aty: meter.counted_matvec_t(phase, &z.y)? })
    }
}

impl<'a> StepContext<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        setup: &'a Setup,
        meter: &'a Meter<'a>,
        centers: &CenterSet,
        c: f64,
        alpha: f64,
        z_center: Anchor,
        path: &MatrixApproxPath,
        cfg: &SupgConfig,
        profile: &StabilityProfile,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !(cfg.tau > 0.0) {
            return Err(MgameError::InvalidInput("alpha and tau must be positive".into()));
        }
        let ball = stable_ball(setup, &z_center, c)?;
        let coupling = path.ungrounded_model_sum(setup, &z_center)?;
        let scal = ground_scalings(setup, &z_center)?;
        Ok(Self {
            setup,
            meter,
            region: ball.region().clone(),
            reg: alpha * centers.len() as f64,
            alpha,
            tau: cfg.tau,
            tau_eff: 2.0 * profile.pi(c) * cfg.tau,
            pi_override: profile.pi_override,
            grad_q: grad_r(setup, centers.collapsed()),
            coupling,
            scal,
            z_center,
            warm_w: None,
            eta: 1.0,
            inner_tol: cfg.inner_tol,
            max_inner_iters: cfg.max_inner_iters,
            inner_iterations: 0,
            max_inner_residual: 0.0,
            threshold_violations: 0,
            size_drop: 0.0,
            last_ratio: 0.0,
            last_threshold: 0.0,
        })
    }

    /// Upper bound on `V(z* -> z)` for the exact subproblem solution `z*`.
    ///
    /// The operator `F` is `alpha |U|`-strongly monotone with respect to the
    /// symmetrized divergence, which dominates `|z - z*|_2^2` on the domain.
    /// With `d = z - z*` this gives `alpha |U| V(z* -> z) <= <F(z), d>`, and
    /// `<F(z), d> <= min(res(z), |R| |d| + e)` where `res` is the VI residual
    /// over the stable ball, `R = F(z) + n` for a normal vector `n` at `z`, and
    /// `e` is the split's slack. Since `alpha |U| |d|^2` is also at most
    /// `<F(z), d>`, `|d|` is bounded by the root of that quadratic.
    pub fn divergence_certificate(&self, z: &Point, pz: &Products) -> f64 {
        let gr = grad_r(self.setup, z);
        let f = Point {
            x: pz.aty.iter().zip(gr.x.iter().zip(&self.grad_q.x)).map(|(a, (g, q))| a + self.reg * (g - q)).collect(),
            y: pz.ax.iter().zip(gr.y.iter().zip(&self.grad_q.y)).map(|(a, (g, q))| -a + self.reg * (g - q)).collect(),
        };
        let round = 16.0 * f64::EPSILON;
        let l1: f64 = f.x.iter().chain(&f.y).map(|v| v.abs()).sum();
        let linear = (vi_residual(&self.region, &f, z).max(0.0) + round * l1) / self.reg;
        let split = normal_residual(&self.region, &f, z);
        let rho = split.norm + round * f.dot(&f).sqrt();
        let e = split.slack;
        let d = (rho + (rho * rho + 4.0 * self.reg * e).sqrt()) / (2.0 * self.reg);
        linear.min((rho * d + e) / self.reg)
    }

    /// `argmin r` over the stable ball.
    pub fn initial_point(&self) -> Result<Point> {
        mirror_map(&self.region, &Point::zeros(self.setup.n, self.setup.m), 1.0)
    }

    fn ground(&self, p: &Point) -> Point {
        Point {
            x: p.x.iter().zip(&self.scal.right).map(|(a, r)| a / r).collect(),
            y: p.y.iter().zip(&self.scal.left).map(|(a, l)| a / l).collect(),
        }
    }

    /// One Step from `z` with cached products `pz`. On a smooth verdict
    /// returns the new point and its products; on guilty the path and the
    /// coupling have absorbed one rank-one update.
    pub fn step(
        &mut self,
        path: &mut MatrixApproxPath,
        z: &Point,
        pz: &Products,
    ) -> Result<(Verdict, Option<(Point, Products)>)> {
        let setup = self.setup;
        let c = &self.coupling;
        // B = A - C, so grad f_B(z) = (A^T z_y - C^T z_y, -(A z_x - C z_x)).
        let ctz = c.matvec_t(&z.y);
        let cz = c.matvec(&z.x);
        let g0 = Point {
            x: pz.aty.iter().zip(&ctz).map(|(a, b)| a - b).collect(),
            y: pz.ax.iter().zip(&cz).map(|(a, b)| b - a).collect(),
        };
        let grad_z = grad_r(setup, z);
        let problem = CompositeProxProblem {
            region: &self.region,
            g0,
            coupling: Some(c),
            anchors: vec![(self.reg, self.grad_q.clone()), (self.tau, grad_z.clone())],
            basis: &self.z_center,
        };
        let warm = self.warm_w.clone().unwrap_or_else(|| z.clone());
        let sol = solve_composite_prox(setup, &problem, &warm, self.inner_tol, self.max_inner_iters, &mut self.eta)?;
        self.inner_iterations += sol.iterations as u64;
        self.max_inner_residual = self.max_inner_residual.max(sol.residual);
        let w = sol.point;

        let aw_x = self.meter.counted_matvec(Phase::SupgProgress, &w.x)?;
        let atw_y = self.meter.counted_matvec_t(Phase::SupgProgress, &w.y)?;
        // g1 = grad f_A(w) + alpha |U| (grad r(w) - grad r(q)).
        let grad_w = grad_r(setup, &w);
        let mut theta = Point { x: atw_y, y: aw_x.clone() };
        theta.scale(-1.0);
        theta.y.iter_mut().for_each(|v| *v = -*v);
        theta.axpy(-self.reg, &grad_w);
        theta.axpy(self.reg, &self.grad_q);
        theta.axpy(self.tau, &grad_z);
        theta.axpy(self.alpha, &grad_w);
        let zp = mirror_map(&self.region, &theta, self.tau + self.alpha)?;
        let azp_x = self.meter.counted_matvec(Phase::SupgProgress, &zp.x)?;

        let z1 = Point {
            x: w.x.iter().zip(&zp.x).map(|(a, b)| a - b).collect(),
            y: w.y.iter().zip(&z.y).map(|(a, b)| a - b).collect(),
        };
        let a1: Vec<f64> = aw_x.iter().zip(&azp_x).map(|(a, b)| a - b).collect();
        let z2 = Point {
            x: z.x.iter().zip(&w.x).map(|(a, b)| a - b).collect(),
            y: w.y.iter().zip(&zp.y).map(|(a, b)| a - b).collect(),
        };
        let a2: Vec<f64> = pz.ax.iter().zip(&aw_x).map(|(a, b)| a - b).collect();

        let cands = [(&z1, &a1, self.ground(&z1)), (&z2, &a2, self.ground(&z2))];
        let norms: Vec<(f64, f64)> =
            cands.iter().map(|(_, _, g)| (dot(&g.x, &g.x).sqrt(), dot(&g.y, &g.y).sqrt())).collect();
        let nominal = certified_threshold(setup, self.tau, z, &w, &zp, &norms);
        self.warm_w = Some(w);
        let threshold = match self.pi_override {
            Some(pi) => 2.0 * pi * self.tau,
            None => nominal,
        };
        self.last_threshold = threshold;
        let mut violated = false;
        self.last_ratio = 0.0;
        for ((cand, a_cand, g), &(nx, ny)) in cands.iter().zip(&norms) {
            if !(nx > 0.0 && ny > 0.0) {
                continue;
            }
            let lhs = dot(&cand.y, a_cand) - self.coupling.bilinear(&cand.y, &cand.x);
            self.last_ratio = self.last_ratio.max(lhs / (nx * ny));
            if lhs > threshold * nx * ny {
                let u: Vec<f64> = g.x.iter().map(|a| a / nx).collect();
                let v: Vec<f64> = g.y.iter().map(|a| a / ny).collect();
                let (total, drop) = guilty_update(setup, self.meter, path, &v, &u)?;
                self.size_drop += drop;
                if total != 0.0 {
                    let l: Vec<f64> = v.iter().zip(&self.scal.left).map(|(a, s)| a / s).collect();
                    let r: Vec<f64> = u.iter().zip(&self.scal.right).map(|(a, s)| a / s).collect();
                    self.coupling.add_rank_one(total, &l, &r);
                }
                return Ok((Verdict::Guilty, None));
            }
            violated |= lhs > nominal * nx * ny;
        }
        if violated {
            self.threshold_violations += 1;
        }
        let atzp_y = self.meter.counted_matvec_t(Phase::SupgProgress, &zp.y)?;
        Ok((Verdict::Smooth, Some((zp, Products { ax: azp_x, aty: atzp_y }))))
    }
}

/// `L size_0 / tau_eff^2 + 16`, capped by the configured maximum.
fn guilty_step_budget(
    setup: &Setup,
    meter: &Meter<'_>,
    path: &MatrixApproxPath,
    ctx: &StepContext<'_>,
    cfg: &SupgConfig,
) -> Result<u64> {
    let Some(a) = meter.dense() else { return Ok(cfg.max_guilty_steps) };
    let size = path.size_dense(setup, Some(a))? + ctx.size_drop;
    let b = path.len() as f64 * size / (ctx.tau_eff * ctx.tau_eff) + 16.0;
    Ok(if b.is_finite() && b < cfg.max_guilty_steps as f64 { b.floor() as u64 } else { cfg.max_guilty_steps })
}

/// Divergence-bounded solution of the constrained prox problem
/// `prox_U^alpha(grad f_A; B_{c, z_center})` to tolerance `eps_db`.
///
/// The path must lead to `z_center`; its models are updated in place.
#[allow(clippy::too_many_arguments)]
pub fn supg_solve(
    setup: &Setup,
    meter: &Meter<'_>,
    centers: &CenterSet,
    c: f64,
    alpha: f64,
    z_center: &Anchor,
    path: &mut MatrixApproxPath,
    eps_db: f64,
    cfg: &SupgConfig,
    profile: &StabilityProfile,
    tracer: &Tracer,
) -> Result<SupgOutcome> {
    if !(eps_db > 0.0) {
        return Err(MgameError::InvalidInput("divergence tolerance must be positive".into()));
    }
    if !path.terminal().approx_eq(z_center) {
        return Err(MgameError::InternalInvariant("path does not lead to the stable-ball center".into()));
    }
    let mut ctx = StepContext::new(setup, meter, centers, c, alpha, z_center.clone(), path, cfg, profile)?;
    let cap = progress_cap(cfg.tau, alpha, setup.gamma, eps_db);
    // The budget is at least 16, so the dense size is only needed past that;
    // the initial size is then the current size plus the drops recorded so far.
    let mut guilty_budget: Option<u64> = None;
    // Start at the ball center when its certified divergence is within the
    // bound the progress cap assumes for argmin r; otherwise at argmin r.
    let mut stats = SupgStats { cap, ..Default::default() };
    let mut z = (**z_center).clone();
    let mut pz = Products::compute(meter, Phase::SupgProgress, &z)?;
    let cert = ctx.divergence_certificate(&z, &pz);
    if cert <= eps_db {
        stats.certified = true;
        return Ok(SupgOutcome { point: z, stats });
    }
    if !(cert <= setup.gamma) {
        z = ctx.initial_point()?;
        pz = Products::compute(meter, Phase::SupgProgress, &z)?;
    }
    while stats.progress_steps <= cap {
        let before = meter.ledger().get(Phase::SupgProgress);
        let (verdict, next) = ctx.step(path, &z, &pz)?;
        let spent = meter.ledger().get(Phase::SupgProgress) - before;
        match next {
            Some((zp, pzp)) => {
                z = zp;
                pz = pzp;
                stats.progress_steps += 1;
                if ctx.divergence_certificate(&z, &pz) <= eps_db {
                    stats.certified = true;
                }
            }
            None => {
                meter.ledger().transfer(Phase::SupgProgress, Phase::SupgGuilty, spent);
                stats.guilty_steps += 1;
                let budget = match guilty_budget {
                    Some(b) => b,
                    None if stats.guilty_steps <= 16 => 16,
                    None => {
                        let b = guilty_step_budget(setup, meter, path, &ctx, cfg)?;
                        guilty_budget = Some(b);
                        b
                    }
                };
                if stats.guilty_steps > budget {
                    return Err(MgameError::InternalInvariant(format!(
                        "guilty steps exceeded the size budget of {budget}"
                    )));
                }
            }
        }
        let done = stats.certified;
        tracer.emit(|| {
            json!({
                "event": "supg_step",
                "verdict": if verdict == Verdict::Smooth { "smooth" } else { "guilty" },
                "progress": stats.progress_steps,
                "guilty": stats.guilty_steps,
                "matvecs": meter.ledger().snapshot().algorithmic(),
                "inner_iterations": ctx.inner_iterations,
                "ratio": ctx.last_ratio,
                "threshold": ctx.last_threshold,
                "certified": done,
            })
        });
        if done {
            break;
        }
    }
    stats.inner_iterations = ctx.inner_iterations;
    stats.max_inner_residual = ctx.max_inner_residual;
    stats.threshold_violations = ctx.threshold_violations;
    Ok(SupgOutcome { point: z, stats })
}

/// Long-horizon fixed-step extragradient for the constrained prox problem on
/// a dense matrix; an independent reference for audits and tests.
pub fn reference_prox(
    setup: &Setup,
    a: &DenseMatrix,
    centers: &CenterSet,
    alpha: f64,
    region: &Region,
    iterations: usize,
) -> Result<Point> {
    let reg = alpha * centers.len() as f64;
    let grad_q = grad_r(setup, centers.collapsed());
    let eta = 0.5;
    let op = |u: &Point| {
        let mut y = a.matvec(&u.x);
        y.iter_mut().for_each(|v| *v = -*v);
        Point { x: a.matvec_t(&u.y), y }
    };
    let mut theta0 = grad_q.clone();
    theta0.scale(reg);
    let mut u = mirror_map(region, &theta0, reg)?;
    for _ in 0..iterations {
        let gu = grad_r(setup, &u);
        let mut t = theta0.clone();
        t.axpy(1.0 / eta, &gu);
        let base = t.clone();
        t.axpy(-1.0, &op(&u));
        let half = mirror_map(region, &t, reg + 1.0 / eta)?;
        let mut t2 = base;
        t2.axpy(-1.0, &op(&half));
        u = mirror_map(region, &t2, reg + 1.0 / eta)?;
    }
    Ok(u)
}
