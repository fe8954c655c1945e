//! Prox multi-point outer loops: the generic loop over any dynamic multiprox
//! oracle, and the dyadic matrix-games solver with model bookkeeping.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{MgameError, Result};
use crate::geometry::{
    breg, bregman_sum, gap, grad_r, ground_matrix, vi_residual, CenterSet, Kind, Point, Region, Setup, StabilityProfile,
};
use crate::oracle::{DenseMatrix, MatvecOracle, Meter, Phase};
use crate::path::{Anchor, MatrixApproxPath, RankOneModel};
use crate::search::{mdmp_search, MdmpParams, ProbeRecord, SearchContext};
use crate::supg::SupgConfig;
use crate::trace::Tracer;

/// Active center indices `{k in [K] : 2^(K-k) divides t}`, 1-based and ascending.
pub fn active_indices(t: u64, k: usize) -> Vec<usize> {
    assert!(t >= 1 && k >= 1, "active_indices needs t >= 1 and K >= 1");
    let tz = t.trailing_zeros() as usize;
    let first = k.saturating_sub(tz).max(1);
    (first..=k).collect()
}

/// Largest multiple of `2^(K-k)` that is at most `t`.
pub fn anchor_iteration(t: u64, k_total: usize, k: usize) -> u64 {
    let shift = k_total - k;
    if shift >= 64 {
        0
    } else {
        t - (t % (1u64 << shift))
    }
}

/// `K Gamma (beta/eps + gamma^(-1/(rho+1)) eps^(-rho/(rho+1))) + 2`.
pub fn iteration_bound(k: usize, gamma_s: f64, beta: f64, gamma: f64, rho: f64, eps: f64) -> f64 {
    k as f64 * gamma_s * (beta / eps + gamma.powf(-1.0 / (rho + 1.0)) * eps.powf(-rho / (rho + 1.0))) + 2.0
}

/// `ceil(5 log2(Gamma (beta/eps + 2^(-1/3) eps^(-2/3)) + 2)) + 5`.
pub fn center_count(gamma_s: f64, beta: f64, eps: f64) -> usize {
    let inner = gamma_s * (beta / eps + 2f64.powf(-1.0 / 3.0) * eps.powf(-2.0 / 3.0)) + 2.0;
    (5.0 * inner.log2()).ceil() as usize + 5
}

/// Oracle interface of the generic loop.
pub trait DynamicMultiprox {
    type Point: Clone;

    /// Answers iteration `t` given all centers `w_k^(t-1)` (index `k-1`) and
    /// the active set; the regularization multiset is the active centers.
    fn query(&mut self, t: u64, active: &[usize], centers: &[Self::Point]) -> Result<(Self::Point, f64)>;

    /// Bregman divergence `V(from -> to)`.
    fn divergence(&self, from: &Self::Point, to: &Self::Point) -> f64;
}

/// Settings of [`multiprox_generic`].
#[derive(Clone, Debug, PartialEq)]
pub struct MultiproxConfig {
    pub eps: f64,
    pub k: usize,
    pub gamma_s: f64,
    /// Kinetic floor, used for the iteration bound and the fuse.
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub fuse_factor: f64,
}

impl MultiproxConfig {
    pub fn t_bound(&self) -> f64 {
        iteration_bound(self.k, self.gamma_s, self.beta, self.gamma, self.rho, self.eps)
    }

    pub fn threshold(&self) -> f64 {
        self.k as f64 * self.gamma_s / self.eps
    }
}

/// Summary of a generic run.
#[derive(Clone, Debug)]
pub struct MultiproxRun<P> {
    pub t: u64,
    pub inv_alpha_sum: f64,
    pub alpha_history: Vec<f64>,
    /// `sum_t sum_k V(w_k^(t-1) -> w_k^(t))`.
    pub movement: f64,
    /// `sum_t sum_{k in I(t)} V(w_{k-1}^(t) -> w_k^(t))` with `w_0 = z0`.
    pub dyadic_movement: f64,
    pub centers: Vec<P>,
    pub t_bound: f64,
}

/// One iteration as seen by the observer of [`multiprox_generic`].
pub struct IterationView<'a, P> {
    pub t: u64,
    pub active: &'a [usize],
    pub z: &'a P,
    pub alpha: f64,
    pub previous: &'a [P],
    pub centers: &'a [P],
}

/// Prox multi-point loop with an arbitrary active-set policy.
///
/// Stops once `sum 1/alpha >= K Gamma / eps`; exceeding `fuse_factor` times
/// the kinetic iteration bound is a contract violation.
pub fn multiprox_generic<O, F, G>(
    oracle: &mut O,
    z0: O::Point,
    cfg: &MultiproxConfig,
    mut policy: F,
    mut observe: G,
) -> Result<MultiproxRun<O::Point>>
where
    O: DynamicMultiprox,
    F: FnMut(u64, usize) -> Vec<usize>,
    G: FnMut(&IterationView<'_, O::Point>) -> Result<()>,
{
    if !(cfg.eps > 0.0) || cfg.k == 0 || !(cfg.gamma_s > 0.0) {
        return Err(MgameError::InvalidInput("multiprox needs eps > 0, K >= 1 and Gamma > 0".into()));
    }
    let t_bound = cfg.t_bound();
    let fuse = cfg.fuse_factor * t_bound;
    let threshold = cfg.threshold();
    let mut centers = vec![z0.clone(); cfg.k];
    let mut run = MultiproxRun {
        t: 0,
        inv_alpha_sum: 0.0,
        alpha_history: Vec::new(),
        movement: 0.0,
        dyadic_movement: 0.0,
        centers: Vec::new(),
        t_bound,
    };
    while run.inv_alpha_sum < threshold {
        run.t += 1;
        if run.t as f64 > fuse {
            return Err(MgameError::ContractViolation(format!(
                "outer loop exceeded {} iterations ({}x the bound {t_bound:.1})",
                fuse.floor(),
                cfg.fuse_factor
            )));
        }
        let active = policy(run.t, cfg.k);
        if active.is_empty() || active.iter().any(|&k| k == 0 || k > cfg.k) {
            return Err(MgameError::InvalidInput(format!("active set {active:?} is not a nonempty subset of [K]")));
        }
        let (z, alpha) = oracle.query(run.t, &active, &centers)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(MgameError::ContractViolation(format!("oracle returned alpha = {alpha}")));
        }
        let previous = centers.clone();
        for &k in &active {
            run.movement += oracle.divergence(&centers[k - 1], &z);
            centers[k - 1] = z.clone();
        }
        for &k in &active {
            let tail = if k == 1 { &z0 } else { &centers[k - 2] };
            run.dyadic_movement += oracle.divergence(tail, &centers[k - 1]);
        }
        run.inv_alpha_sum += 1.0 / alpha;
        run.alpha_history.push(alpha);
        observe(&IterationView { t: run.t, active: &active, z: &z, alpha, previous: &previous, centers: &centers })?;
    }
    run.centers = centers;
    Ok(run)
}

/// Pass/fail of one audited invariant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
}

impl InvariantCheck {
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self { name: name.into(), pass: value <= bound, value, bound }
    }
}

/// Dense-audit measurements of one matrix-games solve.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub movement: f64,
    pub dyadic_movement: f64,
    pub movement_bound: f64,
    pub max_telescoping_error: f64,
    pub size_decrease_sum: f64,
    pub size_decrease_bound: f64,
    pub alpha_sq_sum: f64,
    pub alpha_sq_bound: f64,
    pub t_bound: f64,
    pub fuse_factor: f64,
    /// Smallest `V_U(z) - 2 alpha^2` over calls with `alpha > beta`.
    pub min_kinetic_slack: f64,
    pub kinetic_violations: u64,
    pub max_vi_residual: f64,
    pub vi_tolerance: f64,
    pub judge_threshold_violations: u64,
    pub anchor_identity_violations: u64,
    pub center_tracking_violations: u64,
    pub checks: Vec<InvariantCheck>,
}

impl AuditReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn finalize(&mut self, t: u64) {
        let count = |name: &str, v: u64| InvariantCheck::at_most(name, v as f64, 0.0);
        self.checks = vec![
            InvariantCheck::at_most("movement", self.movement, self.movement_bound),
            InvariantCheck::at_most("dyadic_movement", self.dyadic_movement, self.movement_bound),
            InvariantCheck::at_most("telescoping", self.max_telescoping_error, 1e-9),
            InvariantCheck::at_most("amortized_size", self.size_decrease_sum, self.size_decrease_bound),
            InvariantCheck::at_most("alpha_power_sum", self.alpha_sq_sum, self.alpha_sq_bound),
            InvariantCheck::at_most("iteration_fuse", t as f64, self.fuse_factor * self.t_bound),
            count("kineticness", self.kinetic_violations),
            InvariantCheck::at_most("vi_residual", self.max_vi_residual, self.vi_tolerance),
            count("judge_threshold", self.judge_threshold_violations),
            count("anchor_identity", self.anchor_identity_violations),
            count("center_tracking", self.center_tracking_violations),
        ];
    }
}

/// Aggregate counters of the inner machinery.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub probes: u64,
    pub failed_probes: u64,
    pub early_exits: u64,
    pub supg_progress_steps: u64,
    pub supg_guilty_steps: u64,
    pub inner_iterations: u64,
}

/// Result of a solve, shared by all solvers.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub solver: String,
    pub kind: Kind,
    pub m: usize,
    pub n: usize,
    pub eps_final: f64,
    pub eps_alg: f64,
    pub nu: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: u64,
    pub gap_certified: f64,
    pub matvecs: BTreeMap<String, u64>,
    pub alpha_history: Vec<f64>,
    pub wallclock_ms: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stats: Option<SolveStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    #[serde(skip)]
    pub z_bar: Point,
}

impl SolveReport {
    /// Matvecs of every phase except verification.
    pub fn algorithmic_matvecs(&self) -> u64 {
        self.matvecs.iter().filter(|(k, _)| k.as_str() != Phase::Verification.name()).map(|(_, v)| v).sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("reports serialize")
    }
}

/// Settings of [`solve_game`].
#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Run the dense invariant audits; requires a dense backing.
    pub audit: bool,
    /// Keep every iterate to check center tracking; implied by `audit`.
    pub track_centers: bool,
    pub profile: StabilityProfile,
    pub max_inner_iters: usize,
    pub fuse_factor: f64,
    pub tracer: Tracer,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            audit: false,
            track_centers: false,
            profile: StabilityProfile::default(),
            max_inner_iters: 500,
            fuse_factor: 10.0,
            tracer: Tracer::disabled(),
        }
    }
}

struct AuditState<'a> {
    a: &'a DenseMatrix,
    report: AuditReport,
}

/// Matrix-games multiprox oracle: owns the `K` models and answers each outer
/// iteration with one [`mdmp_search`] call on the path through the centers.
struct MatrixGameOracle<'a> {
    ctx: SearchContext<'a>,
    models: Vec<RankOneModel>,
    audit: Option<AuditState<'a>>,
    stats: SolveStats,
}

impl<'a> MatrixGameOracle<'a> {
    fn audit_call(&mut self, centers: &CenterSet, z: &Point, alpha: f64) -> Result<()> {
        let Some(st) = self.audit.as_mut() else { return Ok(()) };
        let setup = self.ctx.setup;
        let beta = self.ctx.params.beta;
        if alpha > beta {
            let slack = bregman_sum(setup, centers, z)? - 2.0 * alpha * alpha;
            st.report.min_kinetic_slack = st.report.min_kinetic_slack.min(slack);
            if slack < -1e-8 {
                st.report.kinetic_violations += 1;
            }
        }
        let ax = st.a.matvec(&z.x);
        let aty = st.a.matvec_t(&z.y);
        self.ctx.meter.ledger().charge(Phase::Verification, 2);
        let reg = alpha * centers.len() as f64;
        let mut g = Point { x: aty, y: ax.iter().map(|v| -v).collect() };
        g.axpy(reg, &grad_r(setup, z));
        g.axpy(-reg, &grad_r(setup, centers.collapsed()));
        let r = vi_residual(&Region::truncated(setup), &g, z);
        st.report.max_vi_residual = st.report.max_vi_residual.max(r);
        Ok(())
    }
}

impl DynamicMultiprox for MatrixGameOracle<'_> {
    type Point = Anchor;

    fn query(&mut self, t: u64, active: &[usize], centers: &[Anchor]) -> Result<(Anchor, f64)> {
        let setup = self.ctx.setup;
        let models = std::mem::take(&mut self.models);
        let mut path = MatrixApproxPath::from_anchors(centers, models)?;
        let size_before = match &mut self.audit {
            Some(st) => {
                let err = path.telescoping_error(setup, st.a)?;
                st.report.max_telescoping_error = st.report.max_telescoping_error.max(err);
                Some(path.size_dense(setup, Some(st.a))?)
            }
            None => None,
        };
        let members: Vec<Point> = active.iter().map(|&k| (*centers[k - 1]).clone()).collect();
        let set = CenterSet::new(setup, members)?;
        let out = mdmp_search(&self.ctx, &set, &mut path)?;
        if let (Some(before), Some(st)) = (size_before, &mut self.audit) {
            st.report.size_decrease_sum += before - path.size_dense(setup, Some(st.a))?;
        }
        self.record_probes(&out.probes);
        self.audit_call(&set, &out.point, out.alpha)?;
        self.models = path.into_models();
        for &k in active {
            self.models[k - 1] = RankOneModel::zero(setup.m, setup.n);
        }
        let tracer = &self.ctx.tracer;
        tracer.emit(|| {
            json!({
                "event": "outer_iteration",
                "t": t,
                "alpha": out.alpha,
                "active": active.len(),
                "probes": out.probes.len(),
                "matvecs": self.ctx.meter.ledger().snapshot().algorithmic(),
            })
        });
        Ok((Arc::new(out.point), out.alpha))
    }

    fn divergence(&self, from: &Anchor, to: &Anchor) -> f64 {
        if Arc::ptr_eq(from, to) {
            0.0
        } else {
            breg(self.ctx.setup, from, to)
        }
    }
}

impl MatrixGameOracle<'_> {
    fn record_probes(&mut self, probes: &[ProbeRecord]) {
        for p in probes {
            self.stats.probes += 1;
            if p.flag == crate::search::Flag::Failure {
                self.stats.failed_probes += 1;
            }
            self.stats.early_exits += p.early_exit as u64;
            self.stats.supg_progress_steps += p.supg_progress_steps;
            self.stats.supg_guilty_steps += p.supg_guilty_steps;
            self.stats.inner_iterations += p.supg_inner_iterations;
            if let Some(st) = self.audit.as_mut() {
                st.report.judge_threshold_violations += p.supg_threshold_violations;
            }
        }
    }
}

/// Solves the matrix game behind `oracle` to duality gap `eps_final` with the
/// dyadic prox multi-point method.
pub fn solve_game(kind: Kind, oracle: &dyn MatvecOracle, eps_final: f64, cfg: &SolveConfig) -> Result<SolveReport> {
    let start = Instant::now();
    if !(eps_final > 0.0 && eps_final <= 1.0) {
        return Err(MgameError::InvalidInput(format!("eps_final must lie in (0, 1], got {eps_final}")));
    }
    let setup = Setup::new(kind, oracle.rows(), oracle.cols(), eps_final)?;
    if let Some(a) = oracle.dense() {
        a.check_normalization(kind)?;
    }
    if cfg.audit && oracle.dense().is_none() {
        return Err(MgameError::Unsupported("audits need a dense backing".into()));
    }
    let meter = Meter::new(oracle);
    let eps_alg = eps_final / 4.0;
    let params = MdmpParams::new(&setup, eps_alg, cfg.profile)?;
    let beta = params.beta;
    let k = center_count(setup.gamma, beta, eps_alg);
    let mcfg = MultiproxConfig {
        eps: eps_alg,
        k,
        gamma_s: setup.gamma,
        beta,
        gamma: params.gamma,
        rho: params.rho,
        fuse_factor: cfg.fuse_factor,
    };
    let mut supg = SupgConfig::new(beta, 0.0);
    supg.max_inner_iters = cfg.max_inner_iters;
    let z0: Anchor = Arc::new(Point::dgf_center(&setup));
    let audit = match (cfg.audit, oracle.dense()) {
        (true, Some(a)) => {
            let size0 = ground_matrix(&setup, &z0, a)?.frobenius_sq();
            let kg = k as f64 * setup.gamma;
            Some(AuditState {
                a,
                report: AuditReport {
                    movement_bound: kg,
                    size_decrease_bound: size0 + 2.0 * kg,
                    t_bound: mcfg.t_bound(),
                    fuse_factor: cfg.fuse_factor,
                    min_kinetic_slack: f64::INFINITY,
                    vi_tolerance: eps_alg,
                    ..Default::default()
                },
            })
        }
        _ => None,
    };
    let mut mg = MatrixGameOracle {
        ctx: SearchContext { setup: &setup, meter: &meter, params, supg, tracer: cfg.tracer.clone() },
        models: (0..k).map(|_| RankOneModel::zero(setup.m, setup.n)).collect(),
        audit,
        stats: SolveStats::default(),
    };
    let track = cfg.track_centers || cfg.audit;
    let mut history: Vec<Anchor> = vec![z0.clone()];
    let mut weighted = Point::zeros(setup.n, setup.m);
    let mut anchor_violations = 0u64;
    let mut tracking_violations = 0u64;
    let run = multiprox_generic(&mut mg, z0.clone(), &mcfg, active_indices, |view| {
        weighted.axpy(1.0 / view.alpha, view.z);
        for kk in 2..=k {
            if view.active.contains(&kk) {
                continue;
            }
            let same = Arc::ptr_eq(&view.previous[kk - 2], &view.centers[kk - 2])
                && Arc::ptr_eq(&view.previous[kk - 1], &view.centers[kk - 1]);
            anchor_violations += (!same) as u64;
        }
        if track {
            history.push(view.z.clone());
            for kk in 1..=k {
                let a = anchor_iteration(view.t, k, kk) as usize;
                tracking_violations += (!Arc::ptr_eq(&view.centers[kk - 1], &history[a])) as u64;
            }
        }
        Ok(())
    })?;
    weighted.scale(1.0 / run.inv_alpha_sum);
    let z_bar = weighted;
    let gap_certified = gap(&setup, &meter, &z_bar)?;
    let audit = mg.audit.take().map(|st| {
        let mut r = st.report;
        r.movement = run.movement;
        r.dyadic_movement = run.dyadic_movement;
        r.alpha_sq_sum = run.alpha_history.iter().map(|a| a * a).sum();
        r.alpha_sq_bound = k as f64 * setup.gamma / mcfg.gamma + run.t as f64 * beta * beta;
        r.anchor_identity_violations = anchor_violations;
        r.center_tracking_violations = tracking_violations;
        if r.min_kinetic_slack == f64::INFINITY {
            r.min_kinetic_slack = 0.0;
        }
        r.finalize(run.t);
        r
    });
    Ok(SolveReport {
        solver: "multiprox".into(),
        kind,
        m: setup.m,
        n: setup.n,
        eps_final,
        eps_alg,
        nu: setup.nu,
        k,
        t: run.t,
        gap_certified,
        matvecs: meter.ledger().snapshot().to_map(),
        alpha_history: run.alpha_history,
        wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        stats: Some(mg.stats),
        audit,
        z_bar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::linear_min;

    #[test]
    fn active_sets_match_divisibility() {
        assert_eq!(active_indices(8, 5), vec![2, 3, 4, 5]);
        assert_eq!(active_indices(13, 5), vec![5]);
        assert_eq!(active_indices(32, 5), vec![1, 2, 3, 4, 5]);
        for t in 1..200u64 {
            for k in 1..8usize {
                let direct: Vec<usize> = (1..=k).filter(|&j| t % (1u64 << (k - j)) == 0).collect();
                assert_eq!(active_indices(t, k), direct);
            }
        }
    }

    #[test]
    fn center_tracking_worked_example() {
        // Simulate the center updates with labels z^(t) = t.
        let k = 20;
        let mut w = vec![0u64; k];
        for t in 1..=9u64 {
            for j in active_indices(t, k) {
                w[j - 1] = t;
            }
        }
        assert_eq!(w[19], 9);
        assert_eq!((w[18], w[17], w[16]), (8, 8, 8));
        assert!(w[..16].iter().all(|&v| v == 0));
        for (j, &v) in w.iter().enumerate() {
            assert_eq!(v, anchor_iteration(9, k, j + 1));
        }
    }

    /// Exact prox of a constant operator on `[-1, 1]` with the kinetic choice
    /// of `alpha`.
    struct ConstantOracle {
        c: f64,
        beta: f64,
        gamma: f64,
    }

    impl ConstantOracle {
        fn prox(&self, u: &[f64], alpha: f64) -> f64 {
            let mean = u.iter().sum::<f64>() / u.len() as f64;
            (mean - self.c / (alpha * u.len() as f64)).clamp(-1.0, 1.0)
        }

        fn v(u: &[f64], z: f64) -> f64 {
            u.iter().map(|w| 0.5 * (z - w) * (z - w)).sum()
        }
    }

    impl DynamicMultiprox for ConstantOracle {
        type Point = f64;

        fn query(&mut self, _t: u64, active: &[usize], centers: &[f64]) -> Result<(f64, f64)> {
            let u: Vec<f64> = active.iter().map(|&k| centers[k - 1]).collect();
            let z = self.prox(&u, self.beta);
            if Self::v(&u, z) <= self.gamma * self.beta * self.beta {
                return Ok((z, self.beta));
            }
            // V_U(prox_alpha) - gamma alpha^2 is decreasing in alpha.
            let (mut lo, mut hi) = (self.beta, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if Self::v(&u, self.prox(&u, mid)) >= self.gamma * mid * mid {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok((self.prox(&u, lo), lo))
        }

        fn divergence(&self, from: &f64, to: &f64) -> f64 {
            0.5 * (to - from) * (to - from)
        }
    }

    fn line_cfg(eps: f64, k: usize, beta: f64) -> MultiproxConfig {
        MultiproxConfig { eps, k, gamma_s: 0.5, beta, gamma: 2.0, rho: 2.0, fuse_factor: 10.0 }
    }

    #[test]
    fn zero_operator_takes_ceil_steps_without_movement() {
        let mut o = ConstantOracle { c: 0.0, beta: 0.3, gamma: 2.0 };
        let cfg = line_cfg(0.01, 6, 0.3);
        let run = multiprox_generic(&mut o, 0.0, &cfg, active_indices, |_| Ok(())).unwrap();
        assert_eq!(run.t as f64, (cfg.threshold() * 0.3).ceil());
        assert_eq!(run.movement, 0.0);
        assert_eq!(run.dyadic_movement, 0.0);
    }

    #[test]
    fn kinetic_constant_operator_meets_bounds() {
        for (c, beta) in [(1.0, 0.05), (0.3, 0.1), (-2.0, 0.02)] {
            let mut o = ConstantOracle { c, beta, gamma: 2.0 };
            let cfg = line_cfg(0.01, 8, beta);
            let mut weighted = 0.0;
            let run = multiprox_generic(&mut o, 0.0, &cfg, active_indices, |v| {
                weighted += v.z / v.alpha;
                Ok(())
            })
            .unwrap();
            let kg = cfg.k as f64 * cfg.gamma_s;
            assert!(run.movement <= kg + 1e-12);
            assert!(run.dyadic_movement <= run.movement + 1e-12);
            assert!(run.t as f64 <= run.t_bound);
            let sq: f64 = run.alpha_history.iter().map(|a| a * a).sum();
            assert!(sq <= kg / 2.0 + run.t as f64 * beta * beta + 1e-12);
            // Regret of a constant operator: <c, zbar - u> maximized at u = -sign(c).
            let zbar = weighted / run.inv_alpha_sum;
            let regret = c * zbar + c.abs();
            assert!(regret <= 2.0 * cfg.eps + 1e-12, "regret {regret}");
        }
    }

    /// Exact prox of a 2x2 bilinear game on the product of 2-simplices.
    struct BilinearOracle {
        a: [[f64; 2]; 2],
        alpha: f64,
    }

    fn logit(p: f64) -> f64 {
        (p / (1.0 - p)).ln()
    }

    fn sigmoid(s: f64) -> f64 {
        1.0 / (1.0 + (-s).exp())
    }

    impl BilinearOracle {
        /// Solves `g(z) + lam (grad r(z) - grad r(qbar)) = 0` in the coordinates
        /// `x = (p, 1-p)`, `y = (q, 1-q)`.
        fn prox(&self, lam: f64, qx: f64, qy: f64) -> (f64, f64) {
            let a = &self.a;
            let p_of = |q: f64| {
                let gx = (a[0][0] - a[0][1]) * q + (a[1][0] - a[1][1]) * (1.0 - q);
                sigmoid(logit(qx) - gx / lam)
            };
            let resid = |s: f64| {
                let q = sigmoid(s);
                let p = p_of(q);
                let gy = -((a[0][0] - a[1][0]) * p + (a[0][1] - a[1][1]) * (1.0 - p));
                gy + lam * (s - logit(qy))
            };
            let (mut lo, mut hi) = (-60.0, 60.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if resid(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let q = sigmoid(0.5 * (lo + hi));
            (p_of(q), q)
        }
    }

    impl DynamicMultiprox for BilinearOracle {
        type Point = (f64, f64);

        fn query(&mut self, _t: u64, active: &[usize], centers: &[(f64, f64)]) -> Result<((f64, f64), f64)> {
            let n = active.len() as f64;
            // Collapsed center of two-point simplices: normalized geometric mean.
            let gm = |f: &dyn Fn(&(f64, f64)) -> f64| {
                let l1: f64 = active.iter().map(|&k| f(&centers[k - 1]).ln()).sum::<f64>() / n;
                let l2: f64 = active.iter().map(|&k| (1.0 - f(&centers[k - 1])).ln()).sum::<f64>() / n;
                sigmoid(l1 - l2)
            };
            let qx = gm(&|c| c.0);
            let qy = gm(&|c| c.1);
            Ok((self.prox(self.alpha * n, qx, qy), self.alpha))
        }

        fn divergence(&self, from: &(f64, f64), to: &(f64, f64)) -> f64 {
            let kl = |p: f64, q: f64| p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
            kl(to.0, from.0) + kl(to.1, from.1)
        }
    }

    #[test]
    fn bilinear_exact_prox_regret_and_movement() {
        for a in [[[1.0, -1.0], [-1.0, 1.0]], [[0.5, -0.2], [0.1, 0.3]], [[0.9, 0.4], [-0.7, 0.2]]] {
            let mut o = BilinearOracle { a, alpha: 0.4 };
            let gamma_s = (4.0f64).ln();
            let cfg = MultiproxConfig { eps: 0.02, k: 10, gamma_s, beta: 0.4, gamma: 2.0, rho: 2.0, fuse_factor: 10.0 };
            let mut sx = [0.0; 2];
            let mut sy = [0.0; 2];
            let run = multiprox_generic(&mut o, (0.5, 0.5), &cfg, active_indices, |v| {
                let (p, q) = *v.z;
                sx[0] += p / v.alpha;
                sx[1] += (1.0 - p) / v.alpha;
                sy[0] += q / v.alpha;
                sy[1] += (1.0 - q) / v.alpha;
                Ok(())
            })
            .unwrap();
            let s = run.inv_alpha_sum;
            let x = [sx[0] / s, sx[1] / s];
            let y = [sy[0] / s, sy[1] / s];
            // Bilinear operators have <g(z), z> = 0, so regret is the gap of the average.
            let ax: Vec<f64> = (0..2).map(|i| a[i][0] * x[0] + a[i][1] * x[1]).collect();
            let aty: Vec<f64> = (0..2).map(|j| a[0][j] * y[0] + a[1][j] * y[1]).collect();
            let g = Point::new(aty, ax.iter().map(|v| -v).collect());
            let s2 = Setup::with_nu(Kind::L1L1, 2, 2, 1e-300).unwrap();
            let regret = -linear_min(&Region::full(&s2), &g);
            assert!(regret <= 2.0 * cfg.eps + 1e-9, "regret {regret}");
            let kg = cfg.k as f64 * gamma_s;
            assert!(run.movement <= kg && run.dyadic_movement <= run.movement + 1e-12);
        }
    }

    #[test]
    fn fuse_trips_on_non_terminating_oracle() {
        struct Stuck;
        impl DynamicMultiprox for Stuck {
            type Point = f64;
            fn query(&mut self, _: u64, _: &[usize], _: &[f64]) -> Result<(f64, f64)> {
                Ok((0.0, 1e12))
            }
            fn divergence(&self, _: &f64, _: &f64) -> f64 {
                0.0
            }
        }
        let cfg = line_cfg(0.1, 3, 0.5);
        let r = multiprox_generic(&mut Stuck, 0.0, &cfg, active_indices, |_| Ok(()));
        assert!(matches!(r, Err(MgameError::ContractViolation(_))));
    }

    #[test]
    fn zero_matrix_solves_with_zero_gap() {
        let a = DenseMatrix::zeros(3, 4);
        let rep = solve_game(Kind::L1L1, &a, 0.5, &SolveConfig::default()).unwrap();
        assert_eq!(rep.gap_certified, 0.0);
        assert!(rep.alpha_history.iter().all(|&al| al == (0.5f64 / 4.0).cbrt()));
        assert_eq!(rep.matvecs["verification"], 2);
    }

    #[test]
    fn matching_pennies_certified_with_audit() {
        let a = DenseMatrix::new(2, 2, vec![1.0, -1.0, -1.0, 1.0]).unwrap();
        let cfg = SolveConfig { audit: true, ..Default::default() };
        let rep = solve_game(Kind::L1L1, &a, 0.1, &cfg).unwrap();
        assert!(rep.gap_certified <= 0.1, "gap {}", rep.gap_certified);
        let audit = rep.audit.as_ref().unwrap();
        for c in &audit.checks {
            assert!(c.pass, "{c:?}");
        }
        let json = rep.to_json();
        for key in [
            "kind",
            "m",
            "n",
            "eps_final",
            "eps_alg",
            "nu",
            "K",
            "T",
            "gap_certified",
            "matvecs",
            "alpha_history",
            "wallclock_ms",
        ] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        assert!(matches!(solve_game(Kind::L1L1, &a, 0.1, &SolveConfig::default()), Err(MgameError::InvalidInput(_))));
        let b = DenseMatrix::zeros(2, 2);
        assert!(matches!(solve_game(Kind::L1L1, &b, 0.0, &SolveConfig::default()), Err(MgameError::InvalidInput(_))));
        assert!(matches!(solve_game(Kind::L1L1, &b, 1.5, &SolveConfig::default()), Err(MgameError::InvalidInput(_))));
    }
}
