//! Benchmark corpus, parameter sweeps, and CSV/SVG reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::analyze;
use crate::error::Error;
use crate::inputs::{ChannelSource, InputStreams};
use crate::lang::{parse_program, Program, Word};
use crate::oracle::{run_continuous, verify_result, EquivalenceOptions, Observation};
use crate::power::{calibrate, run_exhaustive, PowerModel};
use crate::runtime::{run, Outcome, RunConfig, RunResult};
use crate::transform::{instrument, InstrumentedProgram, Mode};

/// Whether a corpus program is expected to survive failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expect {
    Equivalent,
    /// A deliberate hazard: some failure point must make it diverge.
    Diverges,
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: String,
    pub source: String,
    pub inputs: InputStreams,
    pub initial_version: Word,
    pub expect: Expect,
    /// Included in the timing tables (as opposed to unit fixtures).
    pub suite: bool,
}

impl Benchmark {
    fn new(name: &str, source: &str) -> Self {
        Benchmark {
            name: name.to_string(),
            source: source.to_string(),
            inputs: InputStreams::new(),
            initial_version: 1,
            expect: Expect::Equivalent,
            suite: false,
        }
    }

    pub fn program(&self) -> Program {
        parse_program(&self.source).unwrap_or_else(|d| panic!("corpus program `{}`: {d}", self.name))
    }

    pub fn config(&self) -> RunConfig {
        RunConfig {
            inputs: self.inputs.clone(),
            initial_version: self.initial_version,
            ..RunConfig::default()
        }
    }

    pub fn instrument(&self, mode: Mode) -> InstrumentedProgram {
        let p = self.program();
        instrument(&p, &analyze(&p, Default::default()), mode)
    }
}

/// Task sizes of the read-modify-write sweep.
pub const RMW_TASK_SIZES: [usize; 7] = [1, 2, 5, 10, 50, 100, 200];
/// Read-modify-write operations per sweep program, whatever the task size.
pub const RMW_TOTAL: usize = 200;

/// `total` increments of an 8-element array, `task_size` of them per task.
pub fn rmw_source(task_size: usize, total: usize) -> String {
    assert!(task_size > 0 && total.is_multiple_of(task_size), "task size must divide the total");
    format!(
        "TS int x[8];
TS int done = 0;

entry task rmw {{
    int i = 0;
    while (i < {task_size}) bound {task_size} {{
        x[(done + i) & 7] = x[(done + i) & 7] + 1;
        i = i + 1;
    }}
    done = done + {task_size};
    if (done < {total}) {{
        transition_to(rmw);
    }} else {{
        output(x[0]);
        halt;
    }}
}}
"
    )
}

pub fn rmw_benchmark(task_size: usize) -> Benchmark {
    Benchmark::new(&format!("rmw{task_size}"), &rmw_source(task_size, RMW_TOTAL))
}

/// Every shipped program with its inputs.
pub fn corpus() -> Vec<Benchmark> {
    let temp = || InputStreams::new().with("temp", ChannelSource::Sequence(vec![20, 80]));
    let mut v = vec![
        Benchmark::new("partial_war", include_str!("../corpus/partial_war.at")),
        Benchmark::new("pair_update", include_str!("../corpus/pair_update.at")),
        Benchmark {
            suite: true,
            ..Benchmark::new("rsa", include_str!("../corpus/rsa.at"))
        },
        Benchmark {
            expect: Expect::Diverges,
            ..Benchmark::new("rsa_unprotected", include_str!("../corpus/rsa_unprotected.at"))
        },
        Benchmark {
            suite: true,
            inputs: InputStreams::new().with(
                "bits",
                ChannelSource::Random {
                    seed: 11,
                    lo: 0,
                    hi: 255,
                },
            ),
            ..Benchmark::new("bc", include_str!("../corpus/bc.at"))
        },
        Benchmark {
            suite: true,
            ..Benchmark::new("cf", include_str!("../corpus/cf.at"))
        },
        Benchmark {
            suite: true,
            ..Benchmark::new("lzw", include_str!("../corpus/lzw.at"))
        },
        Benchmark {
            inputs: temp(),
            expect: Expect::Diverges,
            ..Benchmark::new("heater_naive", include_str!("../corpus/heater_naive.at"))
        },
        Benchmark {
            inputs: temp(),
            ..Benchmark::new("heater_safe_task", include_str!("../corpus/heater_safe_task.at"))
        },
        Benchmark {
            inputs: temp(),
            ..Benchmark::new("heater_safe_balanced", include_str!("../corpus/heater_safe_balanced.at"))
        },
        Benchmark::new("full_array_write", include_str!("../corpus/full_array_write.at")),
        Benchmark {
            initial_version: crate::runtime::layout::MAX_VERSION - 1,
            ..Benchmark::new("vbm_overflow", include_str!("../corpus/vbm_overflow.at"))
        },
    ];
    v.push(rmw_benchmark(10));
    v
}

pub fn find(name: &str) -> Option<Benchmark> {
    corpus()
        .into_iter()
        .find(|b| b.name == name)
        .or_else(|| name.strip_prefix("rmw")?.parse().ok().filter(|n| RMW_TOTAL.is_multiple_of(*n)).map(rmw_benchmark))
}

/// SHA-256 of the observation's canonical JSON, hex encoded.
pub fn digest(obs: &Observation) -> String {
    let json = serde_json::to_vec(obs).expect("observations serialize");
    hex::encode(Sha256::digest(&json))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    /// Every mode on continuous power.
    None,
    /// Read-modify-write programs across [`RMW_TASK_SIZES`].
    TaskSize,
    /// Budget mode at multiples of each program's safe capacity.
    Capacity,
}

impl std::str::FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "none" => Ok(Sweep::None),
            "tasksize" => Ok(Sweep::TaskSize),
            "capacity" => Ok(Sweep::Capacity),
            _ => Err(Error::Config(format!("unknown sweep `{s}` (expected none, tasksize or capacity)"))),
        }
    }
}

/// Multiples of the safe capacity visited by the capacity sweep.
pub const CAPACITY_FACTORS: [f64; 5] = [1.25, 1.5, 2.0, 3.0, 4.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub benchmark: String,
    pub mode: String,
    pub sweep: String,
    pub point: String,
    pub capacity: u64,
    pub outcome: String,
    pub steps: u64,
    pub transitions: u64,
    pub reboots: u64,
    pub reexecuted_statements: u64,
    pub privatize_copies: u64,
    pub commit_copies: u64,
    pub backup_copies: u64,
    pub rollback_copies: u64,
    pub checkpoint_copies: u64,
    pub restore_copies: u64,
    pub total_copies: u64,
    pub logging_cost: u64,
    pub transition_cost: u64,
    pub reboot_cost: u64,
    pub useful_cost: u64,
    pub wasted_cost: u64,
    pub total_cost: u64,
    /// Cost above the uninstrumented continuous run, per program operation (task-size sweep).
    pub overhead_per_op: f64,
    pub nv_words: usize,
    pub max_commit_occupancy: u64,
    pub commit_list_bound: usize,
    pub oracle_digest: String,
}

impl BenchRow {
    fn new(b: &Benchmark, ip: &InstrumentedProgram, sweep: Sweep, point: String, capacity: u64, r: &RunResult) -> Self {
        let s = &r.stats;
        BenchRow {
            benchmark: b.name.clone(),
            mode: ip.mode.to_string(),
            sweep: serde_json::to_value(sweep).unwrap().as_str().unwrap().to_string(),
            point,
            capacity,
            outcome: r.outcome.to_string(),
            steps: s.steps,
            transitions: s.transitions,
            reboots: s.reboots,
            reexecuted_statements: s.reexecuted_statements,
            privatize_copies: s.privatize_copies,
            commit_copies: s.commit_copies,
            backup_copies: s.backup_copies,
            rollback_copies: s.rollback_copies,
            checkpoint_copies: s.checkpoint_copies,
            restore_copies: s.restore_copies,
            total_copies: s.total_copies(),
            logging_cost: s.cost.logging,
            transition_cost: s.cost.transition,
            reboot_cost: s.cost.reboot,
            useful_cost: s.cost.useful,
            wasted_cost: s.cost.wasted,
            total_cost: s.total_cost(),
            overhead_per_op: 0.0,
            nv_words: r.nv_words,
            max_commit_occupancy: s.max_commit_occupancy,
            commit_list_bound: ip.report.max_commit_list_size,
            oracle_digest: String::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub modes: Vec<Mode>,
    pub sweep: Sweep,
    /// Exhaustively verify each program in redo and undo before emitting rows.
    pub verify: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            modes: vec![Mode::Redo, Mode::Undo, Mode::Ckpt],
            sweep: Sweep::None,
            verify: true,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Rows dropped because the run failed or diverged.
    pub diagnostics: Vec<String>,
}

/// Runs `suite` under `opts`. Rows are sorted by (benchmark, mode, point).
pub fn run_bench(suite: &[Benchmark], opts: &BenchOptions) -> Result<BenchReport, Error> {
    let suite: Vec<Benchmark> = match opts.sweep {
        Sweep::TaskSize => RMW_TASK_SIZES.iter().map(|&n| rmw_benchmark(n)).collect(),
        _ => suite.to_vec(),
    };
    if opts.verify {
        for b in &suite {
            for mode in [Mode::Redo, Mode::Undo] {
                let ip = b.instrument(mode);
                let rep = run_exhaustive(&ip, &b.config(), EquivalenceOptions::default());
                if !rep.passed() {
                    let why = rep
                        .divergent
                        .first()
                        .map(|(k, d)| format!("failure at step {k}: {d}"))
                        .or_else(|| rep.errors.first().map(|(k, e)| format!("failure at step {k}: {e}")))
                        .unwrap_or_default();
                    return Err(Error::Config(format!("`{}` failed exhaustive verification in {mode}: {why}", b.name)));
                }
            }
        }
    }
    let mut jobs = Vec::new();
    for b in &suite {
        for &mode in &opts.modes {
            match opts.sweep {
                Sweep::None | Sweep::TaskSize => jobs.push((b, mode, None)),
                Sweep::Capacity => jobs.extend(CAPACITY_FACTORS.iter().map(|&f| (b, mode, Some(f)))),
            }
        }
    }
    let results: Vec<Result<BenchRow, String>> = jobs
        .into_par_iter()
        .map(|(b, mode, factor)| bench_point(b, mode, opts.sweep, factor))
        .collect();
    let mut report = BenchReport::default();
    for r in results {
        match r {
            Ok(row) => report.rows.push(row),
            Err(d) => report.diagnostics.push(d),
        }
    }
    report.rows.sort_by(|a, b| {
        (&a.benchmark, &a.mode, a.capacity, &a.point).cmp(&(&b.benchmark, &b.mode, b.capacity, &b.point))
    });
    Ok(report)
}

fn bench_point(b: &Benchmark, mode: Mode, sweep: Sweep, factor: Option<f64>) -> Result<BenchRow, String> {
    let ip = b.instrument(mode);
    let mut cfg = b.config();
    let mut capacity = 0;
    if let Some(f) = factor {
        capacity = (calibrate(&ip, &cfg).safe_capacity() as f64 * f).ceil() as u64;
        cfg.power = PowerModel::Budget { capacity };
    }
    let r = run(&ip, &cfg);
    if r.outcome != Outcome::Halted {
        return Err(format!("{} [{mode}]: {}", b.name, r.outcome));
    }
    verify_result(&ip.base, &r, EquivalenceOptions::default())
        .map_err(|d| format!("{} [{mode}]: diverged: {d}", b.name))?;
    let oracle = run_continuous(&ip.base, &InputStreams::replay(&r.observation.samples));
    let point = match (sweep, factor) {
        (_, Some(f)) => format!("{f}x"),
        (Sweep::TaskSize, _) => b.name.trim_start_matches("rmw").to_string(),
        _ => "continuous".to_string(),
    };
    let mut row = BenchRow::new(b, &ip, sweep, point, capacity, &r);
    row.oracle_digest = digest(&oracle.observation);
    if sweep == Sweep::TaskSize {
        let plain = run(&b.instrument(Mode::None), &b.config());
        row.overhead_per_op = (r.stats.total_cost() as f64 - plain.stats.total_cost() as f64) / RMW_TOTAL as f64;
    }
    Ok(row)
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Io("csv".into(), e))?;
    Ok(())
}

/// Line chart of per-operation overhead against task size, one line per mode.
pub fn overhead_svg(rows: &[BenchRow]) -> String {
    let mut series: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.sweep == "tasksize") {
        if let Ok(x) = r.point.parse::<f64>() {
            series.entry(&r.mode).or_default().push((x, r.overhead_per_op));
        }
    }
    for pts in series.values_mut() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let (w, h, m) = (640.0, 400.0, 60.0);
    let xmax = series.values().flatten().map(|p| p.0).fold(1.0, f64::max).max(2.0);
    let ymax = series.values().flatten().map(|p| p.1).fold(0.0, f64::max).max(1.0);
    let px = |x: f64| m + x.ln() / xmax.ln() * (w - 2.0 * m);
    let py = |y: f64| h - m - y / ymax * (h - 2.0 * m);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for x in RMW_TASK_SIZES {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{x}</text>"#,
            px(x as f64),
            h - m + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">operations per task</text>"#,
        w / 2.0,
        h - 15.0
    );
    let _ = writeln!(s, r#"<text x="{m}" y="{}">{ymax:.1}</text>"#, m - 8.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">overhead per operation (cost units)</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (mode, pts)) in series.iter().enumerate() {
        let c = colors[i % colors.len()];
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{c}" stroke-width="2"/>"#,
            d.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{c}">{mode}</text>"#,
            w - m - 40.0,
            m + 16.0 * i as f64
        );
    }
    s.push_str("</svg>\n");
    s
}
