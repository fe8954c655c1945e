//! Classical two-step mirror prox with the setup's distance-generating
//! function and fixed step `1/2`.

use std::time::Instant;

use crate::error::{MgameError, Result};
use crate::geometry::{gap, project_unit_ball, BlockKind, Kind, Point, Setup};
use crate::oracle::{MatvecOracle, Meter, Phase};
use crate::outer::SolveReport;

/// Step size `1 / (2 Lip)` with `Lip = 1` under the setup normalization.
pub const STEP: f64 = 0.5;

/// Iterate in the mirror coordinates: log-weights on simplex blocks, the
/// point itself on ball blocks.
#[derive(Clone, Debug)]
struct Dual {
    x: Vec<f64>,
    y: Vec<f64>,
}

fn log_normalize(v: &mut [f64]) {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + v.iter().map(|a| (a - mx).exp()).sum::<f64>().ln();
    v.iter_mut().for_each(|a| *a -= lse);
}

impl Dual {
    fn center(setup: &Setup) -> Self {
        let x = match setup.x_kind() {
            BlockKind::Simplex => vec![-(setup.n as f64).ln(); setup.n],
            BlockKind::Ball => vec![0.0; setup.n],
        };
        Dual { x, y: vec![-(setup.m as f64).ln(); setup.m] }
    }

    fn primal(&self, setup: &Setup) -> Point {
        let x = match setup.x_kind() {
            BlockKind::Simplex => self.x.iter().map(|a| a.exp()).collect(),
            BlockKind::Ball => self.x.clone(),
        };
        Point::new(x, self.y.iter().map(|a| a.exp()).collect())
    }

    /// `argmin_u <eta g, u> + V(self -> u)` for `g = (A^T y, -A x)`.
    fn step(&self, setup: &Setup, aty: &[f64], ax: &[f64]) -> Dual {
        let mut x: Vec<f64> = self.x.iter().zip(aty).map(|(a, g)| a - STEP * g).collect();
        match setup.x_kind() {
            BlockKind::Simplex => log_normalize(&mut x),
            BlockKind::Ball => project_unit_ball(&mut x),
        }
        let mut y: Vec<f64> = self.y.iter().zip(ax).map(|(a, g)| a + STEP * g).collect();
        log_normalize(&mut y);
        Dual { x, y }
    }
}

/// Iteration cap `ceil(2 Gamma / eps)` from the `Gamma / (eta T)` rate.
pub fn iteration_cap(setup: &Setup, eps: f64) -> u64 {
    (setup.gamma / (STEP * eps)).ceil().max(1.0) as u64
}

/// Runs mirror prox until the running average certifies gap `<= eps`.
///
/// The gap is checked at iterations `1, 2, 4, ...` and at the cap; those
/// products are charged to verification.
pub fn mirror_prox_baseline(kind: Kind, oracle: &dyn MatvecOracle, eps: f64) -> Result<SolveReport> {
    let start = Instant::now();
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(MgameError::InvalidInput(format!("eps must lie in (0, 1], got {eps}")));
    }
    let setup = Setup::new(kind, oracle.rows(), oracle.cols(), eps)?;
    if let Some(a) = oracle.dense() {
        a.check_normalization(kind)?;
    }
    let meter = Meter::new(oracle);
    let cap = iteration_cap(&setup, eps);
    let mut z = Dual::center(&setup);
    let mut avg = Point::zeros(setup.n, setup.m);
    let mut t = 0u64;
    let mut next_check = 1u64;
    let mut certified;
    loop {
        let p = z.primal(&setup);
        let ax = meter.counted_matvec(Phase::Outer, &p.x)?;
        let aty = meter.counted_matvec_t(Phase::Outer, &p.y)?;
        let w = z.step(&setup, &aty, &ax);
        let pw = w.primal(&setup);
        let wx = meter.counted_matvec(Phase::Outer, &pw.x)?;
        let wty = meter.counted_matvec_t(Phase::Outer, &pw.y)?;
        z = z.step(&setup, &wty, &wx);
        t += 1;
        avg.axpy(1.0, &pw);
        if t == next_check || t == cap {
            let mut mean = avg.clone();
            mean.scale(1.0 / t as f64);
            certified = gap(&setup, &meter, &mean)?;
            if certified <= eps {
                avg = mean;
                break;
            }
            if t == cap {
                return Err(MgameError::ContractViolation(format!(
                    "mirror prox reached its iteration cap {cap} with gap {certified} above {eps}"
                )));
            }
            next_check = (2 * next_check).min(cap);
        }
    }
    Ok(SolveReport {
        solver: "mirror_prox_baseline".into(),
        kind,
        m: setup.m,
        n: setup.n,
        eps_final: eps,
        eps_alg: eps,
        nu: 0.0,
        k: 0,
        t,
        gap_certified: certified,
        matvecs: meter.ledger().snapshot().to_map(),
        alpha_history: Vec::new(),
        wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        stats: None,
        audit: None,
        z_bar: avg,
    })
}
