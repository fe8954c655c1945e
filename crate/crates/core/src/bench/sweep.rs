//! Sweep orchestration over an epsilon grid, solvers and repetitions.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::baseline::mirror_prox_baseline;
use crate::bench::generate::{generate, InstanceSpec};
use crate::error::{MgameError, Result};
use crate::oracle::Phase;
use crate::outer::{solve_game, SolveConfig, SolveReport};

/// Version of the sweep record layout, shared by CSV and JSON lines.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable capping the number of parallel cells.
pub const THREADS_ENV: &str = "MGAME_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Multiprox,
    MirrorProxBaseline,
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Multiprox => "multiprox",
            Solver::MirrorProxBaseline => "mirror_prox_baseline",
        })
    }
}

impl FromStr for Solver {
    type Err = MgameError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "multiprox" => Ok(Solver::Multiprox),
            "mirror_prox_baseline" => Ok(Solver::MirrorProxBaseline),
            other => Err(MgameError::InvalidInput(format!("unknown solver {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub instance: InstanceSpec,
    pub eps_grid: Vec<f64>,
    /// Repetition `r` uses generator seed `instance.seed + r`.
    pub repetitions: usize,
    pub solvers: Vec<Solver>,
    pub audit: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.eps_grid.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(MgameError::InvalidInput(format!("eps grid entry {e} outside (0, 1]")));
        }
        if self.repetitions == 0 {
            return Err(MgameError::InvalidInput("repetitions must be at least 1".into()));
        }
        if self.solvers.is_empty() {
            return Err(MgameError::InvalidInput("solver set is empty".into()));
        }
        if self.instance.m == 0 || self.instance.n == 0 {
            return Err(MgameError::InvalidInput("dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// One sweep cell. Columns are fixed; failed runs carry `status = "error"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub solver: Solver,
    pub kind: String,
    pub m: usize,
    pub n: usize,
    pub generator: String,
    pub seed: u64,
    pub rep: usize,
    pub eps: f64,
    pub status: String,
    pub error: Option<String>,
    pub gap_certified: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<u64>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub matvecs_outer: Option<u64>,
    pub matvecs_bisection: Option<u64>,
    pub matvecs_supg_progress: Option<u64>,
    pub matvecs_supg_guilty: Option<u64>,
    pub matvecs_map_and_center: Option<u64>,
    pub matvecs_verification: Option<u64>,
    pub matvecs_algorithmic: Option<u64>,
    pub wallclock_ms: Option<f64>,
    pub audit_pass: Option<bool>,
    pub audit_failed: Option<String>,
    pub movement: Option<f64>,
    pub dyadic_movement: Option<f64>,
    pub movement_bound: Option<f64>,
    pub telescoping_error: Option<f64>,
    pub size_decrease: Option<f64>,
    pub size_decrease_bound: Option<f64>,
    pub alpha_sq_sum: Option<f64>,
    pub alpha_sq_bound: Option<f64>,
}

impl SweepRecord {
    fn blank(spec: &InstanceSpec, solver: Solver, seed: u64, rep: usize, eps: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            solver,
            kind: spec.kind.to_string(),
            m: spec.m,
            n: spec.n,
            generator: spec.generator.to_string(),
            seed,
            rep,
            eps,
            status: "ok".into(),
            error: None,
            gap_certified: None,
            t: None,
            k: None,
            matvecs_outer: None,
            matvecs_bisection: None,
            matvecs_supg_progress: None,
            matvecs_supg_guilty: None,
            matvecs_map_and_center: None,
            matvecs_verification: None,
            matvecs_algorithmic: None,
            wallclock_ms: None,
            audit_pass: None,
            audit_failed: None,
            movement: None,
            dyadic_movement: None,
            movement_bound: None,
            telescoping_error: None,
            size_decrease: None,
            size_decrease_bound: None,
            alpha_sq_sum: None,
            alpha_sq_bound: None,
        }
    }

    fn fill(&mut self, r: &SolveReport) {
        let phase = |p: Phase| Some(r.matvecs.get(p.name()).copied().unwrap_or(0));
        self.gap_certified = Some(r.gap_certified);
        self.t = Some(r.t);
        self.k = Some(r.k);
        self.matvecs_outer = phase(Phase::Outer);
        self.matvecs_bisection = phase(Phase::Bisection);
        self.matvecs_supg_progress = phase(Phase::SupgProgress);
        self.matvecs_supg_guilty = phase(Phase::SupgGuilty);
        self.matvecs_map_and_center = phase(Phase::MapAndCenter);
        self.matvecs_verification = phase(Phase::Verification);
        self.matvecs_algorithmic = Some(r.algorithmic_matvecs());
        self.wallclock_ms = Some(r.wallclock_ms);
        if let Some(a) = &r.audit {
            let failed: Vec<&str> = a.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            self.audit_pass = Some(a.all_pass());
            self.audit_failed = Some(failed.join(";"));
            self.movement = Some(a.movement);
            self.dyadic_movement = Some(a.dyadic_movement);
            self.movement_bound = Some(a.movement_bound);
            self.telescoping_error = Some(a.max_telescoping_error);
            self.size_decrease = Some(a.size_decrease_sum);
            self.size_decrease_bound = Some(a.size_decrease_bound);
            self.alpha_sq_sum = Some(a.alpha_sq_sum);
            self.alpha_sq_bound = Some(a.alpha_sq_bound);
        }
    }
}

/// Number of worker threads: `MGAME_THREADS` when set and positive, else
/// the available parallelism.
pub fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn run_cell(spec: &SweepSpec, solver: Solver, rep: usize, eps: f64) -> SweepRecord {
    let seed = spec.instance.seed.wrapping_add(rep as u64);
    let mut rec = SweepRecord::blank(&spec.instance, solver, seed, rep, eps);
    let inst = InstanceSpec { seed, ..spec.instance.clone() };
    let outcome = generate(&inst).and_then(|a| match solver {
        Solver::Multiprox => {
            let cfg = SolveConfig { audit: spec.audit, ..SolveConfig::default() };
            solve_game(inst.kind, &a, eps, &cfg)
        }
        Solver::MirrorProxBaseline => mirror_prox_baseline(inst.kind, &a, eps),
    });
    match outcome {
        Ok(r) => rec.fill(&r),
        Err(e) => {
            rec.status = "error".into();
            rec.error = Some(e.to_string());
        }
    }
    rec
}

/// Runs every `(solver, eps, rep)` cell; per-cell errors are recorded in the
/// row. Records come back in grid order regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let cells: Vec<(Solver, f64, usize)> = spec
        .solvers
        .iter()
        .flat_map(|&s| spec.eps_grid.iter().flat_map(move |&e| (0..spec.repetitions).map(move |r| (s, e, r))))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap())
        .build()
        .map_err(|e| MgameError::InternalInvariant(format!("thread pool: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(|&(s, e, r)| run_cell(spec, s, r, e)).collect()))
}

pub fn write_jsonl(records: &[SweepRecord], out: &mut dyn Write) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| MgameError::InternalInvariant(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// CSV with a header row; the header is written even for an empty table.
pub fn write_csv(records: &[SweepRecord], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| MgameError::Io(std::io::Error::other(e));
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV column names in field order.
pub const COLUMNS: [&str; 32] = [
    "schema_version",
    "solver",
    "kind",
    "m",
    "n",
    "generator",
    "seed",
    "rep",
    "eps",
    "status",
    "error",
    "gap_certified",
    "T",
    "K",
    "matvecs_outer",
    "matvecs_bisection",
    "matvecs_supg_progress",
    "matvecs_supg_guilty",
    "matvecs_map_and_center",
    "matvecs_verification",
    "matvecs_algorithmic",
    "wallclock_ms",
    "audit_pass",
    "audit_failed",
    "movement",
    "dyadic_movement",
    "movement_bound",
    "telescoping_error",
    "size_decrease",
    "size_decrease_bound",
    "alpha_sq_sum",
    "alpha_sq_bound",
];

/// Least-squares slope of `ln y` against `ln x`; `None` with fewer than two
/// distinct abscissae or a nonpositive value.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return None;
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Slope of algorithmic matvecs against `1/eps` for one solver's successful rows.
pub fn matvec_slope(records: &[SweepRecord], solver: Solver) -> Option<f64> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.solver == solver && r.status == "ok")
        .filter_map(|r| r.matvecs_algorithmic.map(|mv| (1.0 / r.eps, mv as f64)))
        .collect();
    loglog_slope(&pts)
}
