//! Power models, the cost table, and failure-injection campaigns.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::oracle::{verify_result, Divergence, EquivalenceOptions};
use crate::runtime::{run, Outcome, RunConfig, RunResult, RunStats};
use crate::transform::{InstrumentedProgram, Mode};

/// Environment variable naming a default cost-table file.
pub const COST_TABLE_ENV: &str = "INTERMIT_COST_TABLE";

/// Energy price of each simulated operation, in cost units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTable {
    pub compute: u64,
    pub volatile: u64,
    pub nv: u64,
    /// One word copied NV to NV by privatization, commit, checkpoint, or restore.
    pub commit_copy: u64,
    /// One word copied NV to NV into or out of the undo log.
    pub backup_copy: u64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            compute: 1,
            volatile: 1,
            nv: 3,
            commit_copy: 6,
            backup_copy: 6,
        }
    }
}

impl CostTable {
    /// Parses `key=value` lines; `#` starts a comment; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, Error> {
        let mut t = CostTable::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("cost table line {}: `{raw}`", n + 1));
            let (k, v) = line.split_once('=').ok_or_else(bad)?;
            let v: u64 = v.trim().parse().map_err(|_| bad())?;
            match k.trim() {
                "compute" => t.compute = v,
                "volatile" => t.volatile = v,
                "nv" => t.nv = v,
                "commit_copy" => t.commit_copy = v,
                "backup_copy" => t.backup_copy = v,
                _ => return Err(bad()),
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// The table named by [`COST_TABLE_ENV`], or the defaults.
    pub fn from_env() -> Result<Self, Error> {
        match std::env::var_os(COST_TABLE_ENV) {
            Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
            _ => Ok(Self::default()),
        }
    }
}

/// When the simulated supply cuts out.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerModel {
    Continuous,
    /// Fails when the cost spent since the last boot would exceed `capacity`; recharges fully.
    Budget { capacity: u64 },
    /// Fails just before executing each listed global step index (strictly increasing).
    Schedule(Vec<u64>),
    /// One run per single failure point; see [`run_exhaustive`].
    Exhaustive,
}

impl PowerModel {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            PowerModel::Budget { capacity: 0 } => Err(Error::Config("budget capacity must be positive".into())),
            PowerModel::Schedule(s) if s.windows(2).any(|w| w[0] >= w[1]) => {
                Err(Error::Config("schedule step indices must be strictly increasing".into()))
            }
            _ => Ok(()),
        }
    }

    /// Reads a schedule file: one step index per line, blank lines and `#` comments ignored.
    pub fn parse_schedule(text: &str) -> Result<Self, Error> {
        let mut steps = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            steps.push(
                line.parse()
                    .map_err(|_| Error::Config(format!("schedule line {}: `{raw}`", n + 1)))?,
            );
        }
        let m = PowerModel::Schedule(steps);
        m.validate()?;
        Ok(m)
    }
}

impl PowerModel {
    /// `continuous`, `budget=N`, `schedule=FILE` or `exhaustive`.
    pub fn parse_spec(spec: &str) -> Result<Self, Error> {
        let m = match spec.split_once('=') {
            None if spec == "continuous" => PowerModel::Continuous,
            None if spec == "exhaustive" => PowerModel::Exhaustive,
            Some(("budget", n)) => PowerModel::Budget {
                capacity: n
                    .parse()
                    .map_err(|_| Error::Config(format!("power `{spec}`: capacity must be a non-negative integer")))?,
            },
            Some(("schedule", f)) => {
                let text =
                    std::fs::read_to_string(f).map_err(|e| Error::Config(format!("schedule file {f}: {e}")))?;
                PowerModel::parse_schedule(&text)?
            }
            _ => {
                return Err(Error::Config(format!(
                    "power `{spec}`: expected continuous, budget=N, schedule=FILE or exhaustive"
                )))
            }
        };
        m.validate()?;
        Ok(m)
    }
}

impl fmt::Display for PowerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerModel::Continuous => write!(f, "continuous"),
            PowerModel::Budget { capacity } => write!(f, "budget={capacity}"),
            PowerModel::Schedule(s) => write!(f, "schedule({} failures)", s.len()),
            PowerModel::Exhaustive => write!(f, "exhaustive"),
        }
    }
}

impl FromStr for PowerModel {
    type Err = Error;

    /// `continuous`, `budget=N`, `schedule=FILE`, or `exhaustive`.
    fn from_str(s: &str) -> Result<Self, Error> {
        let m = match s.split_once('=') {
            None if s == "continuous" => PowerModel::Continuous,
            None if s == "exhaustive" => PowerModel::Exhaustive,
            Some(("budget", n)) => PowerModel::Budget {
                capacity: n
                    .parse()
                    .map_err(|_| Error::Config(format!("bad budget capacity `{n}`")))?,
            },
            Some(("schedule", path)) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.to_string(), e))?;
                PowerModel::parse_schedule(&text)?
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown power model `{s}` (expected continuous, budget=N, schedule=FILE or exhaustive)"
                )))
            }
        };
        m.validate()?;
        Ok(m)
    }
}

/// Result of injecting exactly one failure at every step of a continuous run.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ExhaustiveReport {
    /// Steps of the failure-free run; one run per failure point below this.
    pub steps: u64,
    /// `(failure step, divergence)` in step order.
    pub divergent: Vec<(u64, Divergence)>,
    /// Runs that stopped with something other than halt or a divergence.
    pub errors: Vec<(u64, String)>,
}

impl ExhaustiveReport {
    pub fn passed(&self) -> bool {
        self.divergent.is_empty() && self.errors.is_empty()
    }
}

/// Runs `ip` once under `cfg` with its power model replaced.
pub fn run_intermittent(ip: &InstrumentedProgram, cfg: &RunConfig, power: PowerModel) -> RunResult {
    run(
        ip,
        &RunConfig {
            power,
            ..cfg.clone()
        },
    )
}

/// For every k in `[0, S)`, fails just before step k, then runs to completion
/// on continuous power and compares with the replayed continuous oracle.
pub fn run_exhaustive(ip: &InstrumentedProgram, cfg: &RunConfig, opts: EquivalenceOptions) -> ExhaustiveReport {
    let reference = run_intermittent(ip, cfg, PowerModel::Continuous);
    if reference.outcome != Outcome::Halted {
        return ExhaustiveReport {
            steps: reference.stats.steps,
            divergent: Vec::new(),
            errors: vec![(0, reference.outcome.to_string())],
        };
    }
    let steps = reference.stats.steps;
    let verdicts: Vec<(u64, Result<(), Divergence>)> = (0..steps)
        .into_par_iter()
        .map(|k| {
            let r = run_intermittent(ip, cfg, PowerModel::Schedule(vec![k]));
            (k, verify_result(&ip.base, &r, opts))
        })
        .collect();
    let mut report = ExhaustiveReport {
        steps,
        ..ExhaustiveReport::default()
    };
    for (k, v) in verdicts {
        match v {
            Ok(()) => {}
            Err(Divergence::NotHalted { outcome }) | Err(Divergence::OracleFailed { outcome }) => {
                report.errors.push((k, outcome))
            }
            Err(d) => report.divergent.push((k, d)),
        }
    }
    report
}

/// Global step index of every program-statement step of the failure-free run.
/// Failing at the i-th entry interrupts the same source statement in any mode.
pub fn statement_points(ip: &InstrumentedProgram, cfg: &RunConfig) -> Vec<u64> {
    let traced = RunConfig {
        trace: true,
        power: PowerModel::Continuous,
        ..cfg.clone()
    };
    run(ip, &traced)
        .trace
        .iter()
        .filter(|e| e.kind.is_program())
        .map(|e| e.step)
        .collect()
}

/// Energy figures of a program measured on continuous power.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Calibration {
    /// Upper bound on one reboot: init block, version bump, and the largest recovery the mode can need.
    pub boot_bound: u64,
    /// Most expensive task attempt, first statement to end of transition.
    pub max_attempt: u64,
    /// Cheapest task attempt, first statement to commit point.
    pub min_commit: u64,
}

impl Calibration {
    /// Smallest capacity that lets every attempt finish on a fresh charge.
    pub fn safe_capacity(&self) -> u64 {
        self.boot_bound + self.max_attempt
    }
}

pub fn calibrate(ip: &InstrumentedProgram, cfg: &RunConfig) -> Calibration {
    let r = run_intermittent(ip, cfg, PowerModel::Continuous);
    let c = &cfg.costs;
    let control = c.compute + 2 * c.nv;
    let cap = ip.log_capacity() as u64;
    let recovery = match ip.mode {
        Mode::None => 0,
        Mode::Redo => cap * c.commit_copy + 6 * control,
        Mode::Undo => cap * c.backup_copy + 6 * control,
        Mode::Ckpt => {
            (ip.program.user_footprint() + cfg.reg_words) as u64 * c.commit_copy + 2 * control
        }
    };
    Calibration {
        boot_bound: r.stats.max_boot_cost + control + recovery,
        max_attempt: r.stats.max_attempt_cost,
        min_commit: r.stats.min_commit_cost,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub runs: u64,
    pub seed: u64,
    /// Capacities are drawn from `[low, high] × safe capacity`.
    pub low: f64,
    pub high: f64,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            runs: 1000,
            seed: 0,
            low: 1.25,
            high: 4.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FuzzFailure {
    pub run: u64,
    pub capacity: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FuzzReport {
    pub runs: u64,
    pub reboots: u64,
    pub capacity_range: (u64, u64),
    pub failures: Vec<FuzzFailure>,
    pub max_commit_occupancy: u64,
    pub vbm_mismatches: u64,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Seeded budget-mode runs with random capacities above the safe capacity and
/// reseeded random inputs, each checked against its replayed oracle.
pub fn fuzz(ip: &InstrumentedProgram, cfg: &RunConfig, fc: &FuzzConfig, opts: EquivalenceOptions) -> FuzzReport {
    let safe = calibrate(ip, cfg).safe_capacity().max(1) as f64;
    let (lo, hi) = ((safe * fc.low).ceil() as u64, (safe * fc.high).ceil() as u64);
    let results: Vec<(RunStats, Option<FuzzFailure>)> = (0..fc.runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(fc.seed ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let capacity = rng.random_range(lo..=hi.max(lo));
            let run_cfg = RunConfig {
                power: PowerModel::Budget { capacity },
                inputs: cfg.inputs.reseeded(rng.random()),
                ..cfg.clone()
            };
            let r = run(ip, &run_cfg);
            let failure = verify_result(&ip.base, &r, opts).err().map(|d| FuzzFailure {
                run: i,
                capacity,
                reason: d.to_string(),
            });
            (r.stats, failure)
        })
        .collect();
    let mut report = FuzzReport {
        runs: fc.runs,
        capacity_range: (lo, hi),
        ..FuzzReport::default()
    };
    for (stats, f) in results {
        report.reboots += stats.reboots;
        report.max_commit_occupancy = report.max_commit_occupancy.max(stats.max_commit_occupancy);
        report.vbm_mismatches += stats.vbm_mismatches;
        report.failures.extend(f);
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_table_keeps_defaults_for_missing_keys() {
        let t = CostTable::parse("# cheaper nv\nnv = 2\n\ncommit_copy=4 # inline\n").unwrap();
        assert_eq!(t.nv, 2);
        assert_eq!(t.commit_copy, 4);
        assert_eq!(t.compute, CostTable::default().compute);
        assert!(CostTable::parse("nv 2").is_err());
        assert!(CostTable::parse("flux = 2").is_err());
        assert!(CostTable::parse("nv = -1").is_err());
    }

    #[test]
    fn power_specs() {
        assert_eq!(PowerModel::parse_spec("continuous").unwrap(), PowerModel::Continuous);
        assert_eq!(PowerModel::parse_spec("exhaustive").unwrap(), PowerModel::Exhaustive);
        assert_eq!(PowerModel::parse_spec("budget=40").unwrap(), PowerModel::Budget { capacity: 40 });
        for bad in ["budget=0", "budget=x", "solar", "schedule=/nonexistent/file"] {
            assert!(PowerModel::parse_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn schedules_must_increase() {
        assert_eq!(
            PowerModel::parse_schedule("3\n# gap\n\n9\n").unwrap(),
            PowerModel::Schedule(vec![3, 9])
        );
        assert!(PowerModel::parse_schedule("9\n3\n").is_err());
        assert!(PowerModel::parse_schedule("4\n4\n").is_err());
        assert!(PowerModel::parse_schedule("four\n").is_err());
    }
}
