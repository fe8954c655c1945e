//! Invariant suites on one seeded instance: an audited solve plus the
//! geometry lemmas evaluated on the instance's matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bench::generate::{generate, InstanceSpec};
use crate::error::{MgameError, Result};
use crate::geometry::{bregman_sum, ground_matrix, hellinger_sq, kl, random_point, CenterSet, Setup, StabilityProfile};
use crate::oracle::DenseMatrix;
use crate::outer::{solve_game, InvariantCheck, SolveConfig};

/// Randomized cases per geometry lemma.
pub const GEOMETRY_CASES: usize = 200;

/// Slack allowed on the geometry inequalities.
pub const GEOMETRY_SLACK: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct VerifySpec {
    pub instance: InstanceSpec,
    pub eps: f64,
    /// Fault injection: replaces the per-step stability constant.
    pub pi_override: Option<f64>,
}

impl VerifySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(MgameError::InvalidInput(format!("eps {} outside (0, 1]", self.eps)));
        }
        if let Some(p) = self.pi_override {
            if !(p > 0.0) || !p.is_finite() {
                return Err(MgameError::InvalidInput(format!("pi override must be positive, got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub kind: String,
    pub m: usize,
    pub n: usize,
    pub generator: String,
    pub seed: u64,
    pub eps: f64,
    pub pi_override: Option<f64>,
    pub solve_error: Option<String>,
    pub gap_certified: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<u64>,
    pub checks: Vec<InvariantCheck>,
    pub all_pass: bool,
}

impl VerifyReport {
    fn empty(spec: &VerifySpec) -> Self {
        let inst = &spec.instance;
        Self {
            kind: inst.kind.to_string(),
            m: inst.m,
            n: inst.n,
            generator: inst.generator.to_string(),
            seed: inst.seed,
            eps: spec.eps,
            pi_override: spec.pi_override,
            solve_error: None,
            gap_certified: None,
            t: None,
            checks: Vec::new(),
            all_pass: false,
        }
    }
}

/// Runs the suites; failures are report content, never errors.
pub fn verify(spec: &VerifySpec) -> VerifyReport {
    match spec.validate().and_then(|_| generate(&spec.instance)) {
        Ok(a) => verify_matrix(spec, &a),
        Err(e) => {
            let mut report = VerifyReport::empty(spec);
            report.solve_error = Some(e.to_string());
            report.checks.push(InvariantCheck::at_most("instance", f64::INFINITY, 0.0));
            report
        }
    }
}

/// Runs the suites on an explicit matrix in place of the generated one.
pub fn verify_matrix(spec: &VerifySpec, a: &DenseMatrix) -> VerifyReport {
    let inst = &spec.instance;
    let mut report = VerifyReport::empty(spec);
    let cfg = SolveConfig {
        audit: true,
        profile: StabilityProfile { pi_override: spec.pi_override },
        ..SolveConfig::default()
    };
    match solve_game(inst.kind, a, spec.eps, &cfg) {
        Ok(r) => {
            report.gap_certified = Some(r.gap_certified);
            report.t = Some(r.t);
            report.checks.push(InvariantCheck::at_most("gap", r.gap_certified, spec.eps));
            if let Some(audit) = r.audit {
                report.checks.extend(audit.checks);
            }
        }
        Err(e) => {
            report.solve_error = Some(e.to_string());
            report.checks.push(InvariantCheck::at_most("solve", f64::INFINITY, 0.0));
        }
    }
    match Setup::new(inst.kind, inst.m, inst.n, spec.eps) {
        Ok(setup) => report.checks.extend(geometry_checks(&setup, a, inst.seed)),
        Err(e) => report.solve_error = Some(e.to_string()),
    }
    report.all_pass = report.checks.iter().all(|c| c.pass);
    report
}

/// Worst excess of each geometry inequality over seeded truncated points:
/// 2-compatibility, the uniform grounding bound, Hellinger below KL, and the
/// collapsing identity.
pub fn geometry_checks(setup: &Setup, a: &DenseMatrix, seed: u64) -> Vec<InvariantCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (mut compat, mut uniform, mut hell, mut collapse) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut failed = false;
    for i in 0..GEOMETRY_CASES {
        let z = random_point(&mut rng, setup);
        let zp = random_point(&mut rng, setup);
        let (gz, gzp) = match (ground_matrix(setup, &z, a), ground_matrix(setup, &zp, a)) {
            (Ok(g), Ok(h)) => (g, h),
            _ => {
                failed = true;
                break;
            }
        };
        let v = crate::geometry::breg(setup, &zp, &z);
        compat = compat.max(gz.sub(&gzp).frobenius_sq() - 2.0 * v);
        uniform = uniform.max(gz.frobenius_sq() - 1.0);
        hell = hell.max(hellinger_sq(&z.y, &zp.y) - kl(&z.y, &zp.y));
        let members: Vec<_> = (0..1 + i % 6).map(|_| random_point(&mut rng, setup)).collect();
        let k = members.len() as f64;
        let Ok(set) = CenterSet::new(setup, members) else {
            failed = true;
            break;
        };
        let w = random_point(&mut rng, setup);
        let c = |p| bregman_sum(setup, &set, p).map(|s| s - k * crate::geometry::breg(setup, set.collapsed(), p));
        match (c(&z), c(&w)) {
            (Ok(cz), Ok(cw)) => collapse = collapse.max((cz - cw).abs()),
            _ => {
                failed = true;
                break;
            }
        }
    }
    let bad = if failed { f64::INFINITY } else { f64::NEG_INFINITY };
    vec![
        InvariantCheck::at_most("two_compatibility", compat.max(bad), GEOMETRY_SLACK),
        InvariantCheck::at_most("uniform_grounding", uniform.max(bad), GEOMETRY_SLACK),
        InvariantCheck::at_most("hellinger_below_kl", hell.max(bad), GEOMETRY_SLACK),
        InvariantCheck::at_most("collapsing_identity", collapse.max(bad), GEOMETRY_SLACK),
    ]
}
