//! Cautious bisection search and the matrix-games multiprox oracle built on it:
//! best-response map, center selection and the constrained solve.

use std::sync::Arc;

use serde::Serialize;
use serde_json::json;

use crate::error::{MgameError, Result};
use crate::geometry::{
    bregman_sum, grad_r, mirror_map, stable_ball, CenterSet, Point, Region, Setup, StabilityProfile,
};
use crate::oracle::{Meter, Phase};
use crate::path::MatrixApproxPath;
use crate::supg::{supg_solve, SupgConfig, SupgStats};
use crate::trace::Tracer;

/// Outcome flag of a search-oracle query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    Success,
    Failure,
}

/// Search-oracle answer; a success always carries a point.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchOracleResult<P> {
    pub point: Option<P>,
    pub flag: Flag,
}

impl<P> SearchOracleResult<P> {
    pub fn success(p: P) -> Self {
        Self { point: Some(p), flag: Flag::Success }
    }

    pub fn failure() -> Self {
        Self { point: None, flag: Flag::Failure }
    }
}

/// Result of [`cautious_bisection`] with its query trace.
#[derive(Clone, Debug)]
pub struct BisectionOutcome<P> {
    pub point: P,
    pub alpha: f64,
    /// `(alpha, success)` for every oracle call, in order.
    pub queries: Vec<(f64, bool)>,
}

/// Doubling search from `theta_l` followed by bisection to width `eps`.
///
/// The failed query at `theta_l` is reused as the first doubling probe
/// rather than repeated.
pub fn cautious_bisection<P>(
    eps: f64,
    theta_l: f64,
    theta_r: f64,
    mut oracle: impl FnMut(f64) -> Result<SearchOracleResult<P>>,
) -> Result<BisectionOutcome<P>> {
    if !(theta_l > 0.0 && theta_l < theta_r) || !(eps > 0.0) {
        return Err(MgameError::InvalidInput(format!(
            "bisection needs 0 < theta_l < theta_r and eps > 0, got {theta_l}, {theta_r}, {eps}"
        )));
    }
    let mut queries = Vec::new();
    let mut ask = |a: f64, queries: &mut Vec<(f64, bool)>| -> Result<Option<P>> {
        let r = oracle(a)?;
        let ok = r.flag == Flag::Success;
        queries.push((a, ok));
        if ok {
            match r.point {
                Some(p) => Ok(Some(p)),
                None => Err(MgameError::ContractViolation("search oracle reported success without a point".into())),
            }
        } else {
            Ok(None)
        }
    };
    if let Some(p) = ask(theta_l, &mut queries)? {
        return Ok(BisectionOutcome { point: p, alpha: theta_l, queries });
    }
    let mut lower = theta_l;
    let (mut upper, mut point) = loop {
        if lower >= theta_r {
            return Err(MgameError::ContractViolation(format!("search oracle failed at the upper end {theta_r}")));
        }
        let next = (2.0 * lower).min(theta_r);
        match ask(next, &mut queries)? {
            Some(p) => break (next, p),
            None => lower = next,
        }
    };
    let steps = ((upper - lower) / eps).log2().ceil().max(1.0) as usize;
    for _ in 0..steps {
        let mid = 0.5 * (upper + lower);
        match ask(mid, &mut queries)? {
            Some(p) => {
                upper = mid;
                point = p;
            }
            None => lower = mid,
        }
    }
    Ok(BisectionOutcome { point, alpha: upper, queries })
}

/// Parameters of the matrix-games multiprox search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MdmpParams {
    pub eps_alg: f64,
    pub beta: f64,
    pub rho: f64,
    pub gamma: f64,
    pub delta: f64,
    pub nu: f64,
    pub d: usize,
    /// Absolute constant of the Lipschitz bound.
    pub m_const: f64,
    /// Absolute constant of the robustness tolerance.
    pub c_kappa: f64,
    pub profile: StabilityProfile,
}

impl MdmpParams {
    pub fn new(setup: &Setup, eps_alg: f64, profile: StabilityProfile) -> Result<Self> {
        if !(eps_alg > 0.0) {
            return Err(MgameError::InvalidInput("accuracy must be positive".into()));
        }
        let delta = 0.5 * ((2.0 * 10f64.sqrt() - 4.0 * 2f64.sqrt()).exp() - 1.0);
        let p = Self {
            eps_alg,
            beta: eps_alg.cbrt(),
            rho: 2.0,
            gamma: 2.0,
            delta,
            nu: setup.nu,
            d: setup.d(),
            m_const: 1.0,
            c_kappa: 1e-2,
            profile,
        };
        let (i3, i4, i5) = (p.iota(3.0), p.iota(4.0), p.iota(5.0));
        let ok_order = (1.0 + delta).powi(2) * i3 < (1.0 + delta) * i4 && (1.0 + delta) * i4 < i5;
        let ok_mid = ((1.0 + delta) * i4 - 0.5 * (i4 + i5)).abs() <= 1e-9 * i5;
        if !ok_order || !ok_mid {
            return Err(MgameError::InternalInvariant("approximation parameter delta violates its constraints".into()));
        }
        Ok(p)
    }

    pub fn iota(&self, c: f64) -> f64 {
        self.profile.iota(c)
    }

    pub fn theta_l(&self) -> f64 {
        self.beta
    }

    /// `theta_r = sqrt(12 |U| log(1/(nu d))) / 2`.
    pub fn theta_r(&self, u_len: usize) -> f64 {
        let r = 0.5 * (12.0 * u_len as f64 * (1.0 / (self.nu * self.d as f64)).ln()).sqrt();
        r.max(2.0 * self.beta)
    }

    /// Lipschitz bound of `alpha -> V_U(z*_alpha)` on `[beta, theta_r]`.
    pub fn lipschitz(&self, u_len: usize) -> f64 {
        let u = u_len as f64;
        let l = (1.0 / self.nu).ln();
        self.m_const * u.powi(3) * ((1.0 + l) / (self.nu * self.theta_l()) + u * self.theta_r(u_len))
    }

    /// Bisection width `min{(1 - (14/15)^(1/rho)) beta, beta^rho / (15 M)}`.
    pub fn eps_prime(&self, u_len: usize) -> f64 {
        let a = (1.0 - (14.0f64 / 15.0).powf(1.0 / self.rho)) * self.beta;
        let b = self.beta.powf(self.rho) / (15.0 * self.lipschitz(u_len));
        a.min(b)
    }

    /// Divergence tolerance handed to the inner solver.
    pub fn kappa(&self, alpha: f64, u_len: usize) -> f64 {
        let u = u_len as f64;
        let l = (1.0 / self.nu).ln();
        let t1 = self.delta * self.delta * self.nu * self.nu;
        let t2 = alpha.powi(4) / (u * u * (1.0 + l * l));
        let t3 = self.eps_alg * self.eps_alg / (1.0 + (alpha * u / self.nu).powi(2));
        self.c_kappa * t1.min(t2).min(t3)
    }
}

/// `map(alpha, U)`: best responses to the mean of `U`, regularized toward
/// `U`, over the truncated domain. Two counted products.
pub fn best_response_map(setup: &Setup, meter: &Meter<'_>, alpha: f64, centers: &CenterSet) -> Result<Point> {
    if !(alpha > 0.0) {
        return Err(MgameError::InvalidInput("alpha must be positive".into()));
    }
    let mean = centers.mean();
    let a_mean_x = meter.counted_matvec(Phase::MapAndCenter, &mean.x)?;
    let at_mean_y = meter.counted_matvec_t(Phase::MapAndCenter, &mean.y)?;
    let reg = alpha * centers.len() as f64;
    let mut theta = grad_r(setup, centers.collapsed());
    theta.scale(reg);
    theta.x.iter_mut().zip(&at_mean_y).for_each(|(t, g)| *t -= g);
    theta.y.iter_mut().zip(&a_mean_x).for_each(|(t, g)| *t += g);
    mirror_map(&Region::truncated(setup), &theta, reg)
}

/// `argmin V_U` over the `iota(5)`-stable ball about `z_tilde`.
pub fn select_center(setup: &Setup, z_tilde: &Point, centers: &CenterSet, profile: &StabilityProfile) -> Result<Point> {
    let ball = stable_ball(setup, z_tilde, profile.iota(5.0))?;
    mirror_map(ball.region(), &grad_r(setup, centers.collapsed()), 1.0)
}

/// Record of one constrained solve.
#[derive(Clone, Debug, Serialize)]
pub struct ProbeRecord {
    pub alpha: f64,
    pub flag: Flag,
    pub early_exit: bool,
    pub matvecs: u64,
    pub v_center: f64,
    pub v_out: Option<f64>,
    pub kappa: f64,
    pub supg_progress_steps: u64,
    pub supg_guilty_steps: u64,
    pub supg_inner_iterations: u64,
    pub supg_threshold_violations: u64,
}

/// Shared configuration of the matrix-games multiprox oracle.
#[derive(Clone)]
pub struct SearchContext<'a> {
    pub setup: &'a Setup,
    pub meter: &'a Meter<'a>,
    pub params: MdmpParams,
    /// Inner solver settings; `inner_tol` is recomputed per probe.
    pub supg: SupgConfig,
    pub tracer: Tracer,
}

/// One probe of the bisection: build the stable-ball subproblem at `alpha`,
/// solve it on the path extended by a head segment and validate the result.
pub fn constrained_solve(
    ctx: &SearchContext<'_>,
    centers: &CenterSet,
    path: &mut MatrixApproxPath,
    alpha: f64,
) -> Result<(SearchOracleResult<Point>, ProbeRecord)> {
    let setup = ctx.setup;
    let profile = &ctx.params.profile;
    let before = ctx.meter.ledger().snapshot().algorithmic();
    let z_tilde = best_response_map(setup, ctx.meter, alpha, centers)?;
    let z_center = select_center(setup, &z_tilde, centers, profile)?;
    let v_center = bregman_sum(setup, centers, &z_center)?;
    let alpha_sq = alpha.powf(ctx.params.rho);
    let kappa = ctx.params.kappa(alpha, centers.len());
    let mut rec = ProbeRecord {
        alpha,
        flag: Flag::Failure,
        early_exit: false,
        matvecs: 0,
        v_center,
        v_out: None,
        kappa,
        supg_progress_steps: 0,
        supg_guilty_steps: 0,
        supg_inner_iterations: 0,
        supg_threshold_violations: 0,
    };
    let finish = |mut rec: ProbeRecord, res: SearchOracleResult<Point>| {
        rec.flag = res.flag;
        rec.matvecs = ctx.meter.ledger().snapshot().algorithmic() - before;
        ctx.tracer.emit(|| json!({ "event": "constrained_solve", "probe": &rec }));
        Ok((res, rec))
    };
    if v_center > 3.0 * alpha_sq {
        rec.early_exit = true;
        return finish(rec, SearchOracleResult::failure());
    }
    let zc = Arc::new(z_center);
    path.append_head(zc.clone());
    let mut cfg = ctx.supg.clone();
    cfg.inner_tol = kappa / 100.0;
    let c = profile.iota(5.0).powi(2);
    let solved = supg_solve(setup, ctx.meter, centers, c, alpha, &zc, path, kappa, &cfg, profile, &ctx.tracer);
    path.pop_head()?;
    let out = solved?;
    let stats: &SupgStats = &out.stats;
    rec.supg_progress_steps = stats.progress_steps;
    rec.supg_guilty_steps = stats.guilty_steps;
    rec.supg_inner_iterations = stats.inner_iterations;
    rec.supg_threshold_violations = stats.threshold_violations;
    let z = out.point;
    if !stable_ball(setup, &zc, profile.iota(4.0) * profile.iota(5.0))?.contains(&z) {
        return finish(rec, SearchOracleResult::failure());
    }
    let v_out = bregman_sum(setup, centers, &z)?;
    rec.v_out = Some(v_out);
    if v_out > 2.5 * alpha_sq {
        return finish(rec, SearchOracleResult::failure());
    }
    finish(rec, SearchOracleResult::success(z))
}

/// Output of [`mdmp_search`].
#[derive(Clone, Debug)]
pub struct MdmpResult {
    pub point: Point,
    pub alpha: f64,
    pub probes: Vec<ProbeRecord>,
}

/// Multiprox oracle for matrix games: cautious bisection over `alpha` with
/// [`constrained_solve`] as the search oracle. Products spent on failed
/// probes are charged to the bisection phase.
pub fn mdmp_search(ctx: &SearchContext<'_>, centers: &CenterSet, path: &mut MatrixApproxPath) -> Result<MdmpResult> {
    if !centers.members().iter().any(|u| u.approx_eq(path.terminal())) {
        return Err(MgameError::InternalInvariant("path must lead to a member of the center set".into()));
    }
    let k = centers.len();
    let p = &ctx.params;
    let mut probes = Vec::new();
    let out = cautious_bisection(p.eps_prime(k), p.theta_l(), p.theta_r(k), |alpha| {
        let snap = ctx.meter.ledger().snapshot();
        let (res, rec) = constrained_solve(ctx, centers, path, alpha)?;
        if res.flag == Flag::Failure {
            ctx.meter.ledger().reassign_since(&snap, Phase::Bisection);
        }
        probes.push(rec);
        Ok(res)
    })?;
    Ok(MdmpResult { point: out.point, alpha: out.alpha, probes })
}
