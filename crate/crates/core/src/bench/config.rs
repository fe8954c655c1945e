//! Flat `key = value` configuration files with `#` comments.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::bench::generate::{Generator, InstanceSpec};
use crate::bench::sweep::{Solver, SweepSpec};
use crate::bench::verify::VerifySpec;
use crate::error::{MgameError, Result};
use crate::geometry::Kind;

/// Parsed key-value pairs; every lookup marks its key as used.
#[derive(Clone, Debug, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl FromStr for KeyValues {
    type Err = MgameError;

    fn from_str(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MgameError::InvalidInput(format!("line {}: expected key = value", no + 1)))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(MgameError::InvalidInput(format!("line {}: empty key", no + 1)));
            }
            if entries.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(MgameError::InvalidInput(format!("line {}: duplicate key {key}", no + 1)));
            }
        }
        Ok(Self { entries })
    }
}

impl KeyValues {
    pub fn read(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| MgameError::InvalidInput(format!("cannot parse {key} = {v}"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| MgameError::InvalidInput(format!("missing key {key}")))
    }

    /// Comma-separated list; an empty value is an empty list.
    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| MgameError::InvalidInput(format!("cannot parse {key} entry {s}"))))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.entries.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(MgameError::InvalidInput(format!("unknown key {k}"))),
            None => Ok(()),
        }
    }
}

const INSTANCE_KEYS: [&str; 5] = ["kind", "m", "n", "generator", "seed"];

fn instance(kv: &KeyValues) -> Result<InstanceSpec> {
    let kind: Kind = kv.require("kind")?;
    let m: usize = kv.require("m")?;
    let n: usize = kv.get_or("n", m)?;
    let generator = match kv.get::<Generator>("generator")? {
        Some(g) => g,
        None => match kind {
            Kind::L1L1 => Generator::Rademacher,
            Kind::L2L1 => Generator::GaussianRownorm,
        },
    };
    Ok(InstanceSpec { kind, m, n, generator, seed: kv.get_or("seed", 0)? })
}

/// Geometric grid `start, start r, ..., ` with `count` entries.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| start * ratio.powi(i as i32)).collect()
}

/// Sweep keys: the instance keys, `eps` (explicit list) or
/// `eps_start`/`eps_ratio`/`eps_count`, `reps`, `solvers`, `audit`.
pub fn sweep_spec(kv: &KeyValues) -> Result<SweepSpec> {
    let mut allowed = INSTANCE_KEYS.to_vec();
    allowed.extend(["eps", "eps_start", "eps_ratio", "eps_count", "reps", "solvers", "audit"]);
    kv.check_keys(&allowed)?;
    let eps_grid = match kv.list::<f64>("eps")? {
        Some(list) => list,
        None => {
            let count: usize = kv.get_or("eps_count", 0)?;
            if count == 0 {
                Vec::new()
            } else {
                geometric_grid(kv.require("eps_start")?, kv.get_or("eps_ratio", 0.5)?, count)
            }
        }
    };
    let solvers = kv.list::<Solver>("solvers")?.unwrap_or_else(|| vec![Solver::Multiprox, Solver::MirrorProxBaseline]);
    let spec = SweepSpec {
        instance: instance(kv)?,
        eps_grid,
        repetitions: kv.get_or("reps", 1)?,
        solvers,
        audit: kv.get_or("audit", false)?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Verify keys: the instance keys, `eps`, and the fault-injection override `pi`.
pub fn verify_spec(kv: &KeyValues) -> Result<VerifySpec> {
    let mut allowed = INSTANCE_KEYS.to_vec();
    allowed.extend(["eps", "pi"]);
    kv.check_keys(&allowed)?;
    let spec = VerifySpec { instance: instance(kv)?, eps: kv.require("eps")?, pi_override: kv.get("pi")? };
    spec.validate()?;
    Ok(spec)
}
