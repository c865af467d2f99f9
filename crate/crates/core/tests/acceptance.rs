//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use intermit_core::analysis::{analyze, find_war_vars, CallPolicy};
use intermit_core::bench::{self, corpus, BenchOptions, Benchmark, Expect, Sweep, RMW_TASK_SIZES};
use intermit_core::lang::parse_program;
use intermit_core::oracle::{verify_result, EquivalenceOptions};
use intermit_core::power::{self, calibrate, run_exhaustive, run_intermittent, statement_points, FuzzConfig, PowerModel};
use intermit_core::runtime::layout::MAX_VERSION;
use intermit_core::runtime::{Outcome, RunStats};
use intermit_core::transform::Mode;
use rayon::prelude::*;

const RANDOM_TASKS: u64 = 1000;
const WAR_TIME_LIMIT: Duration = Duration::from_secs(60);
const EXHAUSTIVE_TIME_LIMIT: Duration = Duration::from_secs(300);
const FUZZ_RUNS: u64 = 10_000;
const SATURATION_RATIO: f64 = 0.10;
const PROGRESS_ATTEMPTS: u32 = 3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

/// Per-failure-point facts gathered once and shared by several criteria.
struct PointRun {
    k: u64,
    diverged: Option<String>,
    stats: RunStats,
    final_version: i64,
}

struct Sweep1 {
    program: String,
    mode: Mode,
    elapsed: Duration,
    runs: Vec<PointRun>,
    bound: usize,
}

fn sweep(b: &Benchmark, mode: Mode) -> Sweep1 {
    let start = Instant::now();
    let ip = b.instrument(mode);
    let cfg = b.config();
    let steps = run_intermittent(&ip, &cfg, PowerModel::Continuous).stats.steps;
    let mut runs: Vec<PointRun> = (0..=steps)
        .into_par_iter()
        .map(|k| {
            // k == steps is the failure-free run.
            let power = if k == steps {
                PowerModel::Continuous
            } else {
                PowerModel::Schedule(vec![k])
            };
            let r = run_intermittent(&ip, &cfg, power);
            PointRun {
                k,
                diverged: verify_result(&ip.base, &r, EquivalenceOptions::default())
                    .err()
                    .map(|d| d.to_string()),
                final_version: r.nv_dump["cur_version"][0],
                stats: r.stats,
            }
        })
        .collect();
    runs.sort_by_key(|r| r.k);
    Sweep1 {
        program: b.name.clone(),
        mode,
        elapsed: start.elapsed(),
        runs,
        bound: ip.report.max_commit_list_size,
    }
}

fn war_exactness() -> Verdict {
    let start = Instant::now();
    let partial_war = bench::find("partial_war").unwrap().program();
    let report = analyze(&partial_war, CallPolicy::OnDemand);
    let names: Vec<Vec<&str>> = report
        .tasks
        .iter()
        .map(|s| s.iter().map(|v| partial_war.shared(*v).name.as_str()).collect())
        .collect();
    let partial_ok = names == vec![vec!["c"], vec![]];
    let mut mismatches = 0;
    let mut stmts_max = 0;
    for seed in 0..RANDOM_TASKS {
        let src = common::Gen::new(seed).task_program(20, 5);
        let p = parse_program(&src).unwrap_or_else(|d| panic!("generated program {seed}: {d}\n{src}"));
        let mut n = 0;
        intermit_core::lang::walk_stmts(&p.tasks[0].body, &mut |_| n += 1);
        stmts_max = stmts_max.max(n);
        let t = p.entry;
        if find_war_vars(&p, t, CallPolicy::OnDemand) != common::brute_force_war(&p, t) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        partial_ok && mismatches == 0 && elapsed < WAR_TIME_LIMIT,
        format!(
            "partial_war sets {names:?}; {RANDOM_TASKS} random tasks (<= {stmts_max} statements), {mismatches} mismatches vs path enumeration; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn exhaustive_consistency(progs: &[Benchmark]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut slowest = Duration::ZERO;
    for b in progs.iter().filter(|b| b.expect == Expect::Equivalent) {
        for mode in [Mode::Redo, Mode::Undo] {
            let start = Instant::now();
            let rep = run_exhaustive(&b.instrument(mode), &b.config(), EquivalenceOptions::default());
            let el = start.elapsed();
            slowest = slowest.max(el);
            if !rep.passed() || el > EXHAUSTIVE_TIME_LIMIT {
                pass = false;
                parts.push(format!(
                    "{} {mode}: {} divergent, {} errors of {} points",
                    b.name,
                    rep.divergent.len(),
                    rep.errors.len(),
                    rep.steps
                ));
            }
        }
    }
    let rsa = bench::find("rsa_unprotected").unwrap();
    let rep = run_exhaustive(&rsa.instrument(Mode::Redo), &rsa.config(), EquivalenceOptions::default());
    let found = rep.divergent.len();
    if found == 0 {
        pass = false;
    }
    let first = rep
        .divergent
        .first()
        .map(|(k, d)| format!("first at step {k}: {d}"))
        .unwrap_or_default();
    parts.push(format!("rsa_unprotected: {found}/{} points diverge ({first})", rep.steps));
    verdict(
        pass,
        format!("slowest program/mode {:.1}s; {}", slowest.as_secs_f64(), parts.join("; ")),
    )
}

fn fuzzing(progs: &[Benchmark]) -> Verdict {
    let mut failures = 0;
    let mut reboots = 0;
    let mut detail = Vec::new();
    for b in progs.iter().filter(|b| b.expect == Expect::Equivalent) {
        for mode in [Mode::Redo, Mode::Undo] {
            let fc = FuzzConfig {
                runs: FUZZ_RUNS,
                seed: 0xA11CE,
                ..FuzzConfig::default()
            };
            let rep = power::fuzz(&b.instrument(mode), &b.config(), &fc, EquivalenceOptions::default());
            failures += rep.failures.len();
            reboots += rep.reboots;
            if let Some(f) = rep.failures.first() {
                detail.push(format!("{} {mode} run {} cap {}: {}", b.name, f.run, f.capacity, f.reason));
            }
        }
    }
    verdict(
        failures == 0,
        format!("{FUZZ_RUNS} runs per program and mode, {reboots} reboots total, {failures} failures {detail:?}"),
    )
}

/// Undo copies each protected location once per completion and twice per
/// failure (backup, rollback); redo copies it twice per completion and at most
/// once per failure. Completions and failures are counted over the attempts of
/// tasks that protect something, which is where the copies happen.
fn copy_law(progs: &[Benchmark]) -> Verdict {
    let mut compared = 0;
    let mut strict_needed = 0;
    let mut whole_run_ties = 0;
    let mut bad = Vec::new();
    for b in progs.iter().filter(|b| b.expect == Expect::Equivalent) {
        let (redo, undo) = (b.instrument(Mode::Redo), b.instrument(Mode::Undo));
        let cfg = b.config();
        let protecting: Vec<String> = redo
            .program
            .task_ids()
            .filter(|t| !redo.report.task(*t).is_empty())
            .map(|t| redo.program.task(t).name.clone())
            .collect();
        let (pr, pu) = (statement_points(&redo, &cfg), statement_points(&undo, &cfg));
        if pr.len() != pu.len() {
            bad.push(format!("{}: statement counts differ", b.name));
            continue;
        }
        let schedules: Vec<(PowerModel, PowerModel)> = std::iter::once((PowerModel::Continuous, PowerModel::Continuous))
            .chain(
                pr.iter()
                    .zip(&pu)
                    .map(|(&r, &u)| (PowerModel::Schedule(vec![r]), PowerModel::Schedule(vec![u]))),
            )
            .collect();
        let count = |m: &std::collections::BTreeMap<String, u64>| -> u64 {
            protecting.iter().map(|t| m.get(t).copied().unwrap_or(0)).sum()
        };
        let results: Vec<[u64; 6]> = schedules
            .into_par_iter()
            .map(|(r, u)| {
                let (a, b) = (run_intermittent(&redo, &cfg, r), run_intermittent(&undo, &cfg, u));
                [
                    a.stats.total_copies(),
                    b.stats.total_copies(),
                    a.stats.failed_attempts.max(b.stats.failed_attempts),
                    a.stats.transitions.min(b.stats.transitions),
                    count(&a.stats.failed_by_task).max(count(&b.stats.failed_by_task)),
                    count(&a.stats.committed_by_task).min(count(&b.stats.committed_by_task)),
                ]
            })
            .collect();
        for (i, [rc, uc, failures, completions, pf, pc]) in results.into_iter().enumerate() {
            if failures > completions {
                continue;
            }
            compared += 1;
            let strict = !protecting.is_empty() && pf < pc;
            strict_needed += strict as u64;
            if !protecting.is_empty() && failures < completions && uc == rc {
                whole_run_ties += 1;
            }
            if uc > rc || (strict && uc >= rc) {
                bad.push(format!("{} point {i}: undo {uc} vs redo {rc}", b.name));
            }
        }
    }
    let shown: Vec<_> = bad.iter().take(3).collect();
    verdict(
        bad.is_empty(),
        format!(
            "{compared} statement-aligned run pairs, {strict_needed} requiring strict <, {} violations {shown:?}; \
             {whole_run_ties} ties where a failure hit the only protecting attempt",
            bad.len()
        ),
    )
}

fn zero_cost_recovery(sweeps: &[Sweep1]) -> Verdict {
    let (mut redo_rec, mut undo_rec, mut rolled) = (0, 0, 0);
    let mut bad = Vec::new();
    for s in sweeps {
        for r in &s.runs {
            for rec in &r.stats.recoveries {
                match s.mode {
                    Mode::Redo => {
                        redo_rec += 1;
                        if rec.restore_copies != 0 || rec.rollback_copies != 0 {
                            bad.push(format!("{} redo k={}", s.program, r.k));
                        }
                    }
                    Mode::Undo => {
                        undo_rec += 1;
                        rolled += rec.rollback_copies;
                        if rec.rollback_copies != rec.live_backups {
                            bad.push(format!(
                                "{} undo k={}: {} rolled back, {} live",
                                s.program, r.k, rec.rollback_copies, rec.live_backups
                            ));
                        }
                    }
                    _ => {}
                }
            }
        }
    }
    verdict(
        bad.is_empty() && redo_rec > 0 && undo_rec > 0,
        format!(
            "{redo_rec} redo recoveries with 0 restores; {undo_rec} undo recoveries, {rolled} rollback copies all equal to live entries; {} violations {:?}",
            bad.len(),
            bad.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn commit_list_sizing(sweeps: &[Sweep1]) -> Verdict {
    let mut over = Vec::new();
    let mut equal = Vec::new();
    for s in sweeps.iter().filter(|s| s.mode == Mode::Redo) {
        let max = s.runs.iter().map(|r| r.stats.max_commit_occupancy).max().unwrap_or(0);
        if max > s.bound as u64 {
            over.push(format!("{}: {max} > {}", s.program, s.bound));
        }
        if max == s.bound as u64 && s.bound > 0 {
            equal.push(format!("{} ({max})", s.program));
        }
    }
    for s in sweeps.iter().filter(|s| s.mode == Mode::Undo) {
        let max = s.runs.iter().map(|r| r.stats.max_backup_occupancy).max().unwrap_or(0);
        if max > s.bound as u64 {
            over.push(format!("{} backup: {max} > {}", s.program, s.bound));
        }
    }
    let full = equal.iter().any(|e| e.starts_with("full_array_write"));
    verdict(
        over.is_empty() && full,
        format!("occupancy within bound everywhere ({} overruns); bound reached by {equal:?}", over.len()),
    )
}

fn bitmask_semantics(sweeps: &[Sweep1]) -> Verdict {
    let mut runs = 0;
    let mut mismatches = 0;
    let mut tests = 0;
    for s in sweeps {
        for r in &s.runs {
            runs += 1;
            mismatches += r.stats.vbm_mismatches;
            tests += r.stats.vbm_tests;
        }
    }
    let overflowed = sweeps
        .iter()
        .filter(|s| s.program == "vbm_overflow")
        .all(|s| s.runs.iter().all(|r| r.final_version < MAX_VERSION - 1 && r.diverged.is_none()));
    let has_fixture = sweeps.iter().any(|s| s.program == "vbm_overflow");
    verdict(
        mismatches == 0 && overflowed && has_fixture,
        format!(
            "{runs} runs, {tests} vbm_test calls, {mismatches} shadow mismatches; overflow fixture started at {} and wrapped in every run: {overflowed}",
            MAX_VERSION - 1
        ),
    )
}

fn amortization() -> Verdict {
    let rows = bench::run_bench(
        &[],
        &BenchOptions {
            modes: vec![Mode::Redo, Mode::Undo],
            sweep: Sweep::TaskSize,
            verify: false,
        },
    )
    .expect("task-size sweep");
    let mut by_mode: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    for r in &rows.rows {
        by_mode
            .entry(r.mode.clone())
            .or_default()
            .insert(r.point.parse().unwrap(), r.overhead_per_op);
    }
    let redo = &by_mode["redo"];
    let ys: Vec<f64> = RMW_TASK_SIZES.iter().map(|n| redo[n]).collect();
    let monotone = ys.windows(2).all(|w| w[1] <= w[0]);
    let early = redo[&1] - redo[&2];
    let late = redo[&100] - redo[&200];
    let saturated = early > 0.0 && late < SATURATION_RATIO * early;
    let undo: Vec<String> = RMW_TASK_SIZES.iter().map(|n| format!("{:.2}", by_mode["undo"][n])).collect();
    verdict(
        monotone && saturated,
        format!(
            "redo overhead/op over sizes {RMW_TASK_SIZES:?}: {:?}; 100->200 drop {late:.3} vs 1->2 drop {early:.3} (limit {:.0}%); undo {undo:?}",
            ys.iter().map(|y| format!("{y:.2}")).collect::<Vec<_>>(),
            SATURATION_RATIO * 100.0
        ),
    )
}

fn mode_ordering(progs: &[Benchmark]) -> Verdict {
    let mut pass = true;
    let (mut parts, mut other) = (Vec::new(), Vec::new());
    for b in progs {
        let cost = |m: Mode| run_intermittent(&b.instrument(m), &b.config(), PowerModel::Continuous).stats.total_cost();
        let (u, r, c) = (cost(Mode::Undo), cost(Mode::Redo), cost(Mode::Ckpt));
        if b.suite {
            pass &= u <= r && r < c;
            parts.push(format!("{} {u}/{r}/{c}", b.name));
        } else if !(u <= r && r < c) {
            other.push(format!("{} {u}/{r}/{c}", b.name));
        }
    }
    verdict(
        pass,
        format!(
            "undo/redo/ckpt cost units on the benchmarks: {}; fixtures outside the order (not benchmarks): {}",
            parts.join(", "),
            other.join(", ")
        ),
    )
}

fn io_hazard(progs: &[Benchmark]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["heater_naive", "heater_safe_task", "heater_safe_balanced"] {
        let b = progs.iter().find(|b| b.name == name).unwrap();
        for mode in [Mode::Redo, Mode::Undo] {
            let ip = b.instrument(mode);
            let cfg = b.config();
            let steps = run_intermittent(&ip, &cfg, PowerModel::Continuous).stats.steps;
            let (mut both, mut diverged) = (0, 0);
            for k in 0..steps {
                let r = run_intermittent(&ip, &cfg, PowerModel::Schedule(vec![k]));
                let violated = r
                    .observation
                    .snapshots
                    .iter()
                    .any(|s| s[0] == 1 && s[1] == 1);
                both += violated as u32;
                diverged += verify_result(&ip.base, &r, EquivalenceOptions::default()).is_err() as u32;
            }
            let ok = if b.expect == Expect::Diverges {
                both > 0 && diverged > 0
            } else {
                both == 0 && diverged == 0
            };
            pass &= ok;
            parts.push(format!("{name} {mode}: both-on at {both}/{steps} points, {diverged} divergent"));
        }
    }
    verdict(pass, parts.join("; "))
}

fn forward_progress(progs: &[Benchmark]) -> Verdict {
    let mut pass = true;
    let mut bad = Vec::new();
    let mut checked = 0;
    for b in progs {
        for mode in [Mode::Redo, Mode::Undo, Mode::Ckpt] {
            let ip = b.instrument(mode);
            let cfg = b.config();
            let cal = calibrate(&ip, &cfg);
            checked += 1;
            let low = run_intermittent(&ip, &cfg, PowerModel::Budget {
                capacity: cal.min_commit - 1,
            });
            match &low.outcome {
                Outcome::ForwardProgress { attempts, .. }
                    if *attempts <= PROGRESS_ATTEMPTS && low.stats.failed_attempts <= PROGRESS_ATTEMPTS as u64 => {}
                o => {
                    pass = false;
                    bad.push(format!("{} {mode} cap {}: {o}", b.name, cal.min_commit - 1));
                }
            }
            let high = run_intermittent(&ip, &cfg, PowerModel::Budget {
                capacity: cal.safe_capacity(),
            });
            if high.outcome != Outcome::Halted {
                pass = false;
                bad.push(format!("{} {mode} cap {}: {}", b.name, cal.safe_capacity(), high.outcome));
            }
        }
    }
    verdict(
        pass,
        format!("{checked} program/mode pairs: violation within {PROGRESS_ATTEMPTS} attempts below the cheapest task, halt at full task cost; {bad:?}"),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Verdict + 'a>);

fn main() {
    let progs = corpus();
    let mut sweeps = Vec::new();
    for b in &progs {
        if b.expect == Expect::Equivalent {
            sweeps.push(sweep(b, Mode::Redo));
            sweeps.push(sweep(b, Mode::Undo));
        }
    }
    let sweep_failures: Vec<String> = sweeps
        .iter()
        .flat_map(|s| {
            s.runs
                .iter()
                .filter_map(move |r| r.diverged.as_ref().map(|d| format!("{} {} k={}: {d}", s.program, s.mode, r.k)))
        })
        .collect();
    if !sweep_failures.is_empty() {
        eprintln!("note: {} sweep divergences, first: {}", sweep_failures.len(), sweep_failures[0]);
    }
    for s in &sweeps {
        eprintln!(
            "  swept {:<22} {:<4} {:>6} points in {:>6.2}s",
            s.program,
            s.mode,
            s.runs.len(),
            s.elapsed.as_secs_f64()
        );
    }

    let criteria: Vec<Criterion> = vec![
        ("war-analysis-exactness", Box::new(war_exactness)),
        ("exhaustive-crash-consistency", Box::new(|| exhaustive_consistency(&progs))),
        ("multi-failure-fuzzing", Box::new(|| fuzzing(&progs))),
        ("copy-count-law", Box::new(|| copy_law(&progs))),
        ("zero-cost-recovery", Box::new(|| zero_cost_recovery(&sweeps))),
        ("commit-list-sizing", Box::new(|| commit_list_sizing(&sweeps))),
        ("version-bitmask-semantics", Box::new(|| bitmask_semantics(&sweeps))),
        ("task-size-amortization", Box::new(amortization)),
        ("mode-ordering", Box::new(|| mode_ordering(&progs))),
        ("io-hazard-reproduction", Box::new(|| io_hazard(&progs))),
        ("forward-progress-detection", Box::new(|| forward_progress(&progs))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        failed += !v.pass as u32;
        println!(
            "{} {:>2} {name} ({:.1}s): {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() as u32 - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
