//! Seeded instance generators with exact post-scaling normalization.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{MgameError, Result};
use crate::geometry::Kind;
use crate::oracle::DenseMatrix;

/// Matrix family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Rademacher,
    GaussianRownorm,
    LowRankPlusNoise { rank: usize, sigma: f64 },
    DiagDominant,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Rademacher => write!(f, "rademacher"),
            Generator::GaussianRownorm => write!(f, "gaussian_rownorm"),
            Generator::LowRankPlusNoise { rank, sigma } => write!(f, "low_rank_plus_noise({rank},{sigma})"),
            Generator::DiagDominant => write!(f, "diag_dominant"),
        }
    }
}

impl FromStr for Generator {
    type Err = MgameError;

    /// Accepts `rademacher`, `gaussian_rownorm`, `diag_dominant` and
    /// `low_rank_plus_noise(r, sigma)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "rademacher" => return Ok(Generator::Rademacher),
            "gaussian_rownorm" => return Ok(Generator::GaussianRownorm),
            "diag_dominant" => return Ok(Generator::DiagDominant),
            _ => {}
        }
        let bad = || MgameError::InvalidInput(format!("unknown generator {s:?}"));
        let args = s.strip_prefix("low_rank_plus_noise(").and_then(|r| r.strip_suffix(')')).ok_or_else(bad)?;
        let (r, sigma) = args.split_once(',').ok_or_else(bad)?;
        let rank: usize = r.trim().parse().map_err(|_| bad())?;
        let sigma: f64 = sigma.trim().parse().map_err(|_| bad())?;
        if rank == 0 || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(MgameError::InvalidInput(format!(
                "low_rank_plus_noise needs rank >= 1 and sigma >= 0, got {s:?}"
            )));
        }
        Ok(Generator::LowRankPlusNoise { rank, sigma })
    }
}

/// Seeded instance description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub kind: Kind,
    pub m: usize,
    pub n: usize,
    pub generator: Generator,
    pub seed: u64,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Deterministic matrix for `spec`, scaled to the normalization of its kind.
pub fn generate(spec: &InstanceSpec) -> Result<DenseMatrix> {
    let (m, n) = (spec.m, spec.n);
    if m == 0 || n == 0 {
        return Err(MgameError::InvalidInput(format!("dimensions must be positive, got {m}x{n}")));
    }
    if let Generator::LowRankPlusNoise { rank, sigma } = spec.generator {
        if rank == 0 || !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(MgameError::InvalidInput(format!(
                "low_rank_plus_noise needs rank >= 1 and sigma >= 0, got ({rank}, {sigma})"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a = match spec.generator {
        Generator::Rademacher => DenseMatrix::from_fn(m, n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 }),
        Generator::GaussianRownorm => {
            let mut a = DenseMatrix::from_fn(m, n, |_, _| gauss(&mut rng));
            for i in 0..m {
                let norm = a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                for j in 0..n {
                    a.set(i, j, if norm > 0.0 { a.get(i, j) / norm } else { 0.0 });
                }
            }
            a
        }
        Generator::LowRankPlusNoise { rank, sigma } => {
            let u: Vec<f64> = (0..m * rank).map(|_| gauss(&mut rng)).collect();
            let v: Vec<f64> = (0..rank * n).map(|_| gauss(&mut rng)).collect();
            let noise: Vec<f64> = (0..m * n).map(|_| gauss(&mut rng)).collect();
            DenseMatrix::from_fn(m, n, |i, j| {
                let low: f64 = (0..rank).map(|r| u[i * rank + r] * v[r * n + j]).sum();
                low + sigma * noise[i * n + j]
            })
        }
        Generator::DiagDominant => {
            DenseMatrix::from_fn(m, n, |i, j| 0.1 * gauss(&mut rng) + if i == j { 1.0 } else { 0.0 })
        }
    };
    normalize(&mut a, spec.kind, spec.generator);
    a.check_normalization(spec.kind)?;
    Ok(a)
}

fn normalize(a: &mut DenseMatrix, kind: Kind, generator: Generator) {
    let scale = match (kind, generator) {
        (Kind::L1L1, Generator::Rademacher) => 1.0,
        (Kind::L1L1, _) => a.max_abs(),
        (Kind::L2L1, Generator::GaussianRownorm) => 1.0,
        (Kind::L2L1, _) => a.max_row_norm(),
    };
    if scale > 0.0 && scale != 1.0 {
        a.scale(1.0 / scale);
    }
}
