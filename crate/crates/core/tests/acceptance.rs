//! Acceptance suite. Each criterion prints one pass/fail line; the binary
//! exits nonzero when any criterion fails. Criteria run sequentially so the
//! wall-clock budgets are measured without contention.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use mgame_core::geometry::{bregman_sum, grad_r, random_point, stable_ball, Region};
use mgame_core::search::BisectionOutcome;
use mgame_core::supg::{reference_prox, solve_composite_prox, CompositeProxProblem};
use mgame_core::{
    cautious_bisection, generate, mirror_prox_baseline, solve_game, supg_solve, Anchor, CenterSet, DenseMatrix,
    Generator, InstanceSpec, Kind, MatrixApproxPath, Meter, Phase, Point, RankOneModel, SearchOracleResult, Setup,
    SolveConfig, SolveReport, StabilityProfile, SupgConfig, Tracer, Verdict,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = (bool, String);

// Independent dense oracles.

fn matvec(a: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| (0..a.cols()).map(|j| a.get(i, j) * v[j]).sum()).collect()
}

fn matvec_t(a: &DenseMatrix, w: &[f64]) -> Vec<f64> {
    (0..a.cols()).map(|j| (0..a.rows()).map(|i| a.get(i, j) * w[i]).sum()).collect()
}

fn dense_gap(kind: Kind, a: &DenseMatrix, z: &Point) -> f64 {
    let ax = matvec(a, &z.x);
    let aty = matvec_t(a, &z.y);
    let best_y = ax.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    match kind {
        Kind::L1L1 => best_y - aty.iter().cloned().fold(f64::INFINITY, f64::min),
        Kind::L2L1 => best_y + aty.iter().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

fn grounded(kind: Kind, p: &Point, a: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.rows(), a.cols(), |i, j| {
        let right = match kind {
            Kind::L1L1 => p.x[j].sqrt(),
            Kind::L2L1 => 1.0,
        };
        a.get(i, j) * p.y[i].sqrt() * right
    })
}

fn frob_sq(a: &DenseMatrix) -> f64 {
    a.data().iter().map(|v| v * v).sum()
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| if *a > 0.0 { a * (a / b).ln() } else { 0.0 }).sum()
}

/// `V(from -> to)` for the product setup.
fn divergence(kind: Kind, from: &Point, to: &Point) -> f64 {
    let vx = match kind {
        Kind::L1L1 => kl(&to.x, &from.x),
        Kind::L2L1 => 0.5 * to.x.iter().zip(&from.x).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
    };
    vx + kl(&to.y, &from.y)
}

/// `sum_l |Delta_l - M_l|_F^2` computed from the anchors.
fn dense_size(kind: Kind, path: &MatrixApproxPath, a: &DenseMatrix) -> f64 {
    path.segments()
        .iter()
        .map(|s| {
            let mut d = grounded(kind, &s.head, a);
            if let Some(t) = &s.tail {
                d = d.sub(&grounded(kind, t, a));
            }
            frob_sq(&d.sub(&s.model.to_dense()))
        })
        .sum()
}

fn random_matrix(rng: &mut ChaCha8Rng, kind: Kind, m: usize, n: usize) -> DenseMatrix {
    let mut a = DenseMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let s = match kind {
        Kind::L1L1 => a.max_abs(),
        Kind::L2L1 => a.max_row_norm(),
    };
    a.scale(1.0 / s);
    a
}

fn unit(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter().map(|a| a / n).collect()
}

fn kind_of(i: usize) -> Kind {
    if i.is_multiple_of(2) {
        Kind::L1L1
    } else {
        Kind::L2L1
    }
}

fn correctness(kind: Kind, generator: Generator) -> Outcome {
    let mut worst_ratio = 0.0f64;
    let mut slowest = 0.0f64;
    let mut failures = Vec::new();
    for m in [16, 64] {
        for seed in 0..10 {
            let a = generate(&InstanceSpec { kind, m, n: m, generator, seed }).unwrap();
            let start = Instant::now();
            for eps in [0.1, 0.05] {
                match solve_game(kind, &a, eps, &SolveConfig::default()) {
                    Ok(r) => {
                        let g = dense_gap(kind, &a, &r.z_bar);
                        worst_ratio = worst_ratio.max(g / eps);
                        if g.is_nan() || g > eps {
                            failures.push(format!("m={m} seed={seed} eps={eps} gap={g:.4e}"));
                        }
                    }
                    Err(e) => failures.push(format!("m={m} seed={seed} eps={eps}: {e}")),
                }
            }
            let secs = start.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            if secs >= 60.0 {
                failures.push(format!("m={m} seed={seed} took {secs:.1} s"));
            }
        }
    }
    let detail = format!("40 solves, max gap/eps {worst_ratio:.3}, slowest instance {slowest:.1} s");
    if failures.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; failures: {}", failures.join(", ")))
    }
}

fn criterion_1() -> Outcome {
    correctness(Kind::L1L1, Generator::Rademacher)
}

fn criterion_2() -> Outcome {
    correctness(Kind::L2L1, Generator::GaussianRownorm)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut guilty, mut smooth, mut bad) = (0, 0, Vec::new());
    let mut min_margin = f64::INFINITY;
    for case in 0..1000 {
        let kind = kind_of(case);
        let (m, n) = (rng.random_range(2..7), rng.random_range(2..7));
        let s = Setup::with_nu(kind, m, n, 1e-3).unwrap();
        let a = random_matrix(&mut rng, kind, m, n);
        let l = rng.random_range(1..=8);
        let heads: Vec<Anchor> = (0..l).map(|_| Arc::new(random_point(&mut rng, &s))).collect();
        let models = (0..l)
            .map(|_| {
                let mut model = RankOneModel::zero(m, n);
                for _ in 0..rng.random_range(0..3) {
                    model.add_term(rng.random_range(-0.5..0.5), &unit(&mut rng, m), &unit(&mut rng, n));
                }
                model
            })
            .collect();
        let mut path = MatrixApproxPath::from_anchors(&heads, models).unwrap();
        let before: Vec<DenseMatrix> = path.segments().iter().map(|s| s.model.to_dense()).collect();
        let size0 = dense_size(kind, &path, &a);
        let tau = rng.random_range(0.005..0.5);
        let cand = |rng: &mut ChaCha8Rng| {
            Point::new(
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
                (0..m).map(|_| rng.random_range(-1.0..1.0)).collect(),
            )
        };
        let (z1, z2) = (cand(&mut rng), cand(&mut rng));
        let meter = Meter::new(&a);
        match mgame_core::supg::judge(&s, &meter, &mut path, tau, &z1, &z2).unwrap() {
            Verdict::Guilty => {
                guilty += 1;
                let drop = size0 - dense_size(kind, &path, &a);
                let need = tau * tau / l as f64;
                min_margin = min_margin.min(drop - need);
                if drop < need - 1e-9 {
                    bad.push(format!("case {case}: drop {drop:.3e} < {need:.3e}"));
                }
            }
            Verdict::Smooth => {
                smooth += 1;
                let same = path.segments().iter().zip(&before).all(|(s, b)| s.model.to_dense() == *b);
                if !same {
                    bad.push(format!("case {case}: smooth verdict changed the path"));
                }
            }
        }
    }
    let detail = format!("{guilty} guilty, {smooth} smooth, min drop margin {min_margin:.3e}");
    let ok = bad.is_empty() && guilty > 0 && smooth > 0;
    (ok, if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join(", ")) })
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let profile = StabilityProfile::default();
    let (tau, eps_db) = (0.5, 1e-6);
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut guilty_total = 0;
    for case in 0..100 {
        let kind = kind_of(case);
        let (m, n) = (rng.random_range(4..=8), rng.random_range(4..=8));
        let s = Setup::with_nu(kind, m, n, 1e-3).unwrap();
        let a = random_matrix(&mut rng, kind, m, n);
        let zc: Anchor = Arc::new(random_point(&mut rng, &s));
        let members: Vec<Point> =
            (0..rng.random_range(0..3)).map(|_| random_point(&mut rng, &s)).chain([(*zc).clone()]).collect();
        let centers = CenterSet::new(&s, members).unwrap();
        let l = rng.random_range(1..=3);
        let mut heads: Vec<Anchor> = (1..l).map(|_| Arc::new(random_point(&mut rng, &s))).collect();
        heads.push(zc.clone());
        let mut path = MatrixApproxPath::from_anchors(&heads, vec![RankOneModel::zero(m, n); l]).unwrap();
        let c = if case % 3 == 0 { 16.0 } else { 4.0 };
        let alpha = rng.random_range(0.2..1.0);
        let size0 = dense_size(kind, &path, &a);
        let meter = Meter::new(&a);
        let cfg = SupgConfig::new(tau, eps_db / 100.0);
        let out = match supg_solve(
            &s,
            &meter,
            &centers,
            c,
            alpha,
            &zc,
            &mut path,
            eps_db,
            &cfg,
            &profile,
            &Tracer::disabled(),
        ) {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("case {case}: {e}"));
                continue;
            }
        };
        let region = stable_ball(&s, &zc, c).unwrap().region().clone();
        let star = reference_prox(&s, &a, &centers, alpha, &region, 20_000).unwrap();
        let v = divergence(kind, &star, &out.point);
        worst = worst.max(v);
        if v > eps_db + 1e-8 {
            bad.push(format!("case {case}: V = {v:.3e}"));
        }
        let delta = size0 - dense_size(kind, &path, &a);
        let thr = 2.0 * profile.pi(c) * tau;
        let bound = (l * l) as f64 / (thr * thr) * delta + 16.0;
        let spent = meter.ledger().get(Phase::SupgGuilty);
        guilty_total += out.stats.guilty_steps;
        if spent as f64 > bound {
            bad.push(format!("case {case}: guilty matvecs {spent} > {bound:.1}"));
        }
    }
    let detail = format!("100 subproblems, max V(z*->z_out) {worst:.3e}, {guilty_total} guilty steps");
    (bad.is_empty(), if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join(", ")) })
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    let mut max_queries = 0;
    for case in 0..1000 {
        let theta_l = 10f64.powf(rng.random_range(-3.0..-0.3));
        let theta_r = theta_l * 10f64.powf(rng.random_range(0.3..3.0));
        let eps = theta_l * 10f64.powf(rng.random_range(-4.0..0.0));
        let threshold =
            if case % 10 == 0 { theta_l * rng.random_range(0.0..1.0) } else { rng.random_range(theta_l..theta_r) };
        let oracle = |alpha: f64| -> mgame_core::Result<SearchOracleResult<f64>> {
            Ok(if alpha >= threshold { SearchOracleResult::success(alpha) } else { SearchOracleResult::failure() })
        };
        let BisectionOutcome { point, alpha, queries } = cautious_bisection(eps, theta_l, theta_r, oracle).unwrap();
        max_queries = max_queries.max(queries.len());
        let success_at_alpha = point == alpha && alpha >= threshold && queries.contains(&(alpha, true));
        let in_range = (theta_l..=theta_r).contains(&alpha);
        let witness =
            alpha == theta_l || queries.iter().any(|&(q, ok)| !ok && q >= (alpha - eps).max(theta_l) && q < alpha);
        let count_bound = 64.0 * (theta_r / eps.min(theta_l)).log2();
        let query_range = queries.iter().all(|&(q, _)| q >= theta_l && q <= (2.0 * alpha).min(theta_r));
        if !(success_at_alpha && in_range && witness && (queries.len() as f64) <= count_bound && query_range) {
            bad.push(format!(
                "case {case}: success {success_at_alpha} range {in_range} witness {witness} queries {} range {query_range}",
                queries.len()
            ));
        }
    }
    let detail = format!("1000 simulations, at most {max_queries} queries");
    (bad.is_empty(), if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join(", ")) })
}

/// Audited 16x16 solves shared by criteria 6 and 7.
fn audited_runs() -> Vec<(String, mgame_core::Result<SolveReport>)> {
    let mut runs = Vec::new();
    for (kind, generator) in [(Kind::L1L1, Generator::Rademacher), (Kind::L2L1, Generator::GaussianRownorm)] {
        for seed in 0..3 {
            for eps in [0.2, 0.1] {
                let a = generate(&InstanceSpec { kind, m: 16, n: 16, generator, seed }).unwrap();
                let cfg = SolveConfig { audit: true, ..SolveConfig::default() };
                runs.push((format!("{kind} seed={seed} eps={eps}"), solve_game(kind, &a, eps, &cfg)));
            }
        }
    }
    runs
}

fn criterion_6(runs: &[(String, mgame_core::Result<SolveReport>)]) -> Outcome {
    let mut bad = Vec::new();
    let mut min_slack = f64::INFINITY;
    for (name, r) in runs {
        match r {
            Ok(r) => {
                let audit = r.audit.as_ref().unwrap();
                min_slack = min_slack.min(audit.min_kinetic_slack);
                if audit.kinetic_violations > 0 || audit.min_kinetic_slack < -1e-8 {
                    bad.push(format!("{name}: {} violations", audit.kinetic_violations));
                }
            }
            Err(e) => bad.push(format!("{name}: {e}")),
        }
    }
    let detail = format!("{} audited solves, min V_U(z*) - 2 alpha^2 over alpha > beta {min_slack:.3e}", runs.len());
    (bad.is_empty(), if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join(", ")) })
}

fn criterion_7(runs: &[(String, mgame_core::Result<SolveReport>)]) -> Outcome {
    const CHECKS: [&str; 6] =
        ["movement", "dyadic_movement", "telescoping", "amortized_size", "alpha_power_sum", "iteration_fuse"];
    let mut bad = Vec::new();
    let mut worst = [0.0f64; 6];
    for (name, r) in runs {
        let Ok(r) = r else {
            bad.push(format!("{name}: solve failed"));
            continue;
        };
        let audit = r.audit.as_ref().unwrap();
        for (k, check) in CHECKS.iter().enumerate() {
            match audit.checks.iter().find(|c| c.name == *check) {
                Some(c) => {
                    if c.bound > 0.0 {
                        worst[k] = worst[k].max(c.value / c.bound);
                    }
                    if !c.pass {
                        bad.push(format!("{name}: {check} {:.3e} > {:.3e}", c.value, c.bound));
                    }
                }
                None => bad.push(format!("{name}: {check} missing")),
            }
        }
    }
    let ratios: Vec<String> = CHECKS.iter().zip(worst).map(|(c, w)| format!("{c} {w:.3}")).collect();
    let detail = format!("worst value/bound: {}", ratios.join(", "));
    (bad.is_empty(), if bad.is_empty() { detail } else { format!("{detail}; {}", bad.join(", ")) })
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let slack = 1e-8;
    let mut worst = [f64::NEG_INFINITY; 5];
    for case in 0..1000 {
        let kind = kind_of(case);
        let (m, n) = (rng.random_range(2..12), rng.random_range(2..12));
        let s = Setup::new(kind, m, n, 0.1).unwrap();
        let generator = if kind == Kind::L1L1 { Generator::Rademacher } else { Generator::GaussianRownorm };
        let a = generate(&InstanceSpec { kind, m, n, generator, seed: case as u64 }).unwrap();
        let z = random_point(&mut rng, &s);
        let zp = random_point(&mut rng, &s);
        let (gz, gzp) = (grounded(kind, &z, &a), grounded(kind, &zp, &a));
        worst[0] = worst[0].max(frob_sq(&gz.sub(&gzp)) - 2.0 * divergence(kind, &zp, &z));
        worst[1] = worst[1].max(frob_sq(&gz) - 1.0);
        let hell: f64 = z.y.iter().zip(&zp.y).map(|(p, q)| (p.sqrt() - q.sqrt()).powi(2)).sum();
        worst[2] = worst[2].max(hell - kl(&z.y, &zp.y));
        let members: Vec<Point> = (0..rng.random_range(1..6)).map(|_| random_point(&mut rng, &s)).collect();
        let k = members.len() as f64;
        let set = CenterSet::new(&s, members).unwrap();
        let w = random_point(&mut rng, &s);
        let excess = |p: &Point| bregman_sum(&s, &set, p).unwrap() - k * divergence(kind, set.collapsed(), p);
        worst[3] = worst[3].max((excess(&z) - excess(&w)).abs());
        // Prox monotonicity: V_U(prox^alpha) is nonincreasing in alpha.
        let ps = Setup::with_nu(kind, m.min(5), n.min(5), 1e-3).unwrap();
        let pa = random_matrix(&mut rng, kind, ps.m, ps.n);
        let pm: Vec<Point> = (0..rng.random_range(1..4)).map(|_| random_point(&mut rng, &ps)).collect();
        let pset = CenterSet::new(&ps, pm).unwrap();
        let region = Region::truncated(&ps);
        let a1 = 10f64.powf(rng.random_range(-1.0..0.5));
        let a2 = a1 * rng.random_range(1.05..3.0);
        let prox = |alpha: f64| {
            let problem = CompositeProxProblem {
                region: &region,
                g0: Point::zeros(ps.n, ps.m),
                coupling: Some(&pa),
                anchors: vec![(alpha * pset.len() as f64, grad_r(&ps, pset.collapsed()))],
                basis: pset.collapsed(),
            };
            let mut eta = 1.0;
            solve_composite_prox(&ps, &problem, pset.collapsed(), 1e-30, 20_000, &mut eta).unwrap().point
        };
        let (v1, v2) = (bregman_sum(&ps, &pset, &prox(a1)).unwrap(), bregman_sum(&ps, &pset, &prox(a2)).unwrap());
        worst[4] = worst[4].max(v2 - v1);
    }
    let names =
        ["two_compatibility", "uniform_grounding", "hellinger_below_kl", "collapsing_identity", "prox_monotonicity"];
    let ok = worst.iter().all(|w| *w <= slack);
    let parts: Vec<String> = names.iter().zip(worst).map(|(n, w)| format!("{n} {w:.2e}")).collect();
    (ok, format!("1000 cases each, worst excess: {}", parts.join(", ")))
}

/// Least-squares slope of `ln y` against `ln(1/eps)`.
fn slope(eps: &[f64], y: &[f64]) -> f64 {
    let xs: Vec<f64> = eps.iter().map(|e| (1.0 / e).ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let grid = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let a =
        generate(&InstanceSpec { kind: Kind::L1L1, m: 64, n: 64, generator: Generator::Rademacher, seed: 1 }).unwrap();
    let mut multiprox = Vec::new();
    let mut baseline = Vec::new();
    for eps in grid {
        let r = solve_game(Kind::L1L1, &a, eps, &SolveConfig::default()).unwrap();
        multiprox.push(r.algorithmic_matvecs() as f64);
        let b = mirror_prox_baseline(Kind::L1L1, &a, eps).unwrap();
        baseline.push(b.algorithmic_matvecs() as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    let (sm, sb) = (slope(&grid, &multiprox), slope(&grid, &baseline));
    let ok = sm <= 0.85 && sb >= 0.9 && secs < 1800.0;
    let counts: Vec<String> = multiprox.iter().zip(&baseline).map(|(m, b)| format!("{m:.0}/{b:.0}")).collect();
    (
        ok,
        format!(
            "slope multiprox {sm:.3}, baseline {sb:.3}, {secs:.0} s; matvecs multiprox/baseline {}",
            counts.join(" ")
        ),
    )
}

fn report(number: usize, name: &str, run: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let (ok, detail) = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        (false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("criterion {number} ({name}): {verdict} [{:.1} s] {detail}", start.elapsed().as_secs_f64());
    ok
}

fn main() -> ExitCode {
    let mut all = true;
    all &= report(1, "l1l1 correctness", criterion_1);
    all &= report(2, "l2l1 correctness", criterion_2);
    all &= report(3, "judge contract", criterion_3);
    all &= report(4, "supg contract", criterion_4);
    all &= report(5, "bisection contract", criterion_5);
    let runs = audited_runs();
    all &= report(6, "kineticness", || criterion_6(&runs));
    all &= report(7, "outer-loop invariants", || criterion_7(&runs));
    all &= report(8, "geometry lemmas", criterion_8);
    all &= report(9, "scaling trend", criterion_9);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
