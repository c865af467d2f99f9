use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use intermit_core::analysis::{analyze, CallPolicy};
use intermit_core::bench::{self, BenchOptions, Benchmark, Sweep};
use intermit_core::inputs::ChannelSource;
use intermit_core::lang::{parse_program, print_program, Program, Word};
use intermit_core::oracle::{verify_result, EquivalenceOptions};
use intermit_core::power::{fuzz, run_exhaustive, CostTable, FuzzConfig, PowerModel};
use intermit_core::runtime::{run, trace, Outcome, RunConfig};
use intermit_core::transform::{instrument, InstrumentedProgram, Mode};
use intermit_core::Error;

/// Version of the JSON, CSV and trace layouts written by this tool.
const FORMAT_VERSION: u32 = 1;
const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (report format 1, trace format 1)");

const EXIT_PROGRAM: u8 = 1;
const EXIT_DIVERGED: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "intermit", version = VERSION, about = "Analyze, instrument and simulate task programs on intermittent power")]
struct Cli {
    /// Cost-table file (key=value lines); overrides $INTERMIT_COST_TABLE.
    #[arg(long, global = true, value_name = "FILE")]
    cost_table: Option<PathBuf>,
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print each task's W-A-R set as JSON.
    Analyze {
        #[command(flatten)]
        src: Source,
        /// Let every variable a callee touches join the caller's set.
        #[arg(long)]
        strict_calls: bool,
    },
    /// Print the instrumented program.
    Transform {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "redo")]
        mode: Mode,
        /// Write the instrumentation manifest (JSON) here.
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Print `{source, manifest}` as one JSON object instead of source text.
        #[arg(long)]
        json: bool,
    },
    /// Simulate one run and print its statistics as JSON.
    Run {
        #[command(flatten)]
        src: Source,
        #[arg(long, default_value = "redo")]
        mode: Mode,
        /// continuous | budget=N | schedule=FILE | exhaustive
        #[arg(long, default_value = "continuous")]
        power: String,
        /// Write the step trace as JSON lines here.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        progress_limit: u32,
    },
    /// Exhaustive and randomized failure injection against the continuous oracle.
    Verify {
        #[command(flatten)]
        src: Source,
        /// Modes to verify (repeatable); defaults to redo and undo.
        #[arg(long)]
        mode: Vec<Mode>,
        /// Run the single-failure sweep (default: both campaigns when neither is given).
        #[arg(long)]
        exhaustive: bool,
        /// Run this many seeded budget-mode runs.
        #[arg(long, value_name = "RUNS")]
        fuzz: Option<u64>,
        /// Treat output repeated by failed attempts as a divergence.
        #[arg(long)]
        strict_outputs: bool,
        #[arg(long, value_name = "FILE")]
        junit: Option<PathBuf>,
        /// Write the JSON summary here instead of stdout.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Cost tables over the benchmark corpus.
    Bench {
        /// `all` or a corpus program name.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value = "none")]
        sweep: Sweep,
        /// Modes to measure (repeatable); defaults to redo, undo and ckpt.
        #[arg(long)]
        mode: Vec<Mode>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Overhead-per-operation chart (task-size sweep).
        #[arg(long, value_name = "FILE")]
        plot: Option<PathBuf>,
        /// Skip the exhaustive check that precedes the measurements.
        #[arg(long)]
        no_verify: bool,
    },
}

#[derive(Args)]
struct Source {
    /// Program file, or the name of a bundled corpus program.
    program: String,
    /// Input channel values, repeated forever: `--input temp=20,80`.
    #[arg(long, value_name = "CH=V,...")]
    input: Vec<String>,
    /// Seeds random input channels and fuzz campaigns.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Program(String),
    Diverged(String),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            e => Failure::Program(e.to_string()),
        }
    }
}

type Res = Result<(), Failure>;

struct Loaded {
    program: Program,
    cfg: RunConfig,
}

impl Source {
    fn load(&self, costs: CostTable) -> Result<Loaded, Failure> {
        let path = Path::new(&self.program);
        let (program, base) = if path.exists() {
            let text = fs::read_to_string(path).map_err(|e| Failure::Program(format!("{}: {e}", path.display())))?;
            let p = parse_program(&text).map_err(|d| Failure::Program(format!("{}:{d}", path.display())))?;
            (p, None)
        } else if let Some(b) = bench::find(&self.program) {
            (b.program(), Some(b))
        } else {
            return Err(Failure::Usage(format!("no such file or corpus program `{}`", self.program)));
        };
        let mut inputs = base.as_ref().map(|b| b.inputs.clone()).unwrap_or_default();
        for spec in &self.input {
            let (ch, vals) = spec
                .split_once('=')
                .ok_or_else(|| Failure::Usage(format!("--input `{spec}`: expected CH=V,...")))?;
            let vals: Vec<Word> = vals
                .split(',')
                .map(|v| v.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| Failure::Usage(format!("--input `{spec}`: values must be integers")))?;
            inputs = inputs.with(ch.trim(), ChannelSource::Sequence(vals));
        }
        let mut inputs = inputs.fill_random(&program, self.seed);
        if self.seed != 0 {
            inputs = inputs.reseeded(self.seed);
        }
        let cfg = RunConfig {
            inputs,
            initial_version: base.as_ref().map_or(1, |b: &Benchmark| b.initial_version),
            costs,
            ..RunConfig::default()
        };
        Ok(Loaded { program, cfg })
    }
}

fn instrumented(p: &Program, mode: Mode) -> InstrumentedProgram {
    instrument(p, &analyze(p, CallPolicy::OnDemand), mode)
}

fn write_file(path: &Path, data: &[u8]) -> Res {
    fs::write(path, data).map_err(|e| Failure::Program(format!("{}: {e}", path.display())))
}

fn emit_json(v: &serde_json::Value, to: Option<&Path>) -> Res {
    let mut text = serde_json::to_string_pretty(v).expect("json values serialize");
    text.push('\n');
    match to {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let _ = io::stdout().lock().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let costs = match &cli.cost_table {
        Some(p) => CostTable::load(p),
        None => CostTable::from_env(),
    };
    let result = match costs {
        Ok(costs) => dispatch(&cli, costs),
        Err(e) => Err(Failure::Usage(e.to_string())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Program(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_PROGRAM)
        }
        Err(Failure::Diverged(m)) => {
            eprintln!("divergence: {m}");
            ExitCode::from(EXIT_DIVERGED)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(cli: &Cli, costs: CostTable) -> Res {
    match &cli.cmd {
        Cmd::Analyze { src, strict_calls } => {
            let l = src.load(costs)?;
            let policy = if *strict_calls { CallPolicy::Strict } else { CallPolicy::OnDemand };
            let mut v = analyze(&l.program, policy).to_json(&l.program);
            v["formatVersion"] = json!(FORMAT_VERSION);
            emit_json(&v, None)
        }
        Cmd::Transform {
            src,
            mode,
            manifest,
            json,
        } => {
            let l = src.load(costs)?;
            let ip = instrumented(&l.program, *mode);
            let source = print_program(&ip.program);
            let m = ip.manifest();
            if let Some(path) = manifest {
                let mut text = serde_json::to_string_pretty(&m).expect("json values serialize");
                text.push('\n');
                write_file(path, text.as_bytes())?;
            }
            if *json {
                emit_json(&json!({"formatVersion": FORMAT_VERSION, "source": source, "manifest": m}), None)
            } else {
                let _ = io::stdout().lock().write_all(source.as_bytes());
                Ok(())
            }
        }
        Cmd::Run {
            src,
            mode,
            power,
            trace: trace_path,
            progress_limit,
        } => {
            let l = src.load(costs)?;
            let power = PowerModel::parse_spec(power)?;
            let ip = instrumented(&l.program, *mode);
            if power == PowerModel::Exhaustive {
                return exhaustive_summary(&ip, &l.cfg, cli.verbose);
            }
            let cfg = RunConfig {
                power: power.clone(),
                trace: trace_path.is_some(),
                progress_limit: *progress_limit,
                ..l.cfg
            };
            let r = run(&ip, &cfg);
            if let Some(p) = trace_path {
                write_file(p, trace::to_json_lines(&r.trace).as_bytes())?;
            }
            let verdict = (r.outcome == Outcome::Halted && power != PowerModel::Continuous)
                .then(|| verify_result(&ip.base, &r, EquivalenceOptions::default()));
            emit_json(
                &json!({
                    "formatVersion": FORMAT_VERSION,
                    "mode": mode.as_str(),
                    "power": power.to_string(),
                    "outcome": r.outcome.to_string(),
                    "observation": r.observation,
                    "stats": r.stats,
                    "nvWords": r.nv_words,
                    "equivalence": verdict.as_ref().map(|v| match v {
                        Ok(()) => "pass".to_string(),
                        Err(d) => d.to_string(),
                    }),
                }),
                None,
            )?;
            match (&r.outcome, verdict) {
                (Outcome::Halted, Some(Err(d))) => Err(Failure::Diverged(d.to_string())),
                (Outcome::Halted, _) => Ok(()),
                (o, _) => Err(Failure::Program(o.to_string())),
            }
        }
        Cmd::Verify {
            src,
            mode,
            exhaustive,
            fuzz: fuzz_runs,
            strict_outputs,
            junit,
            json: json_path,
        } => {
            let l = src.load(costs)?;
            let modes = if mode.is_empty() { vec![Mode::Redo, Mode::Undo] } else { mode.clone() };
            let (do_exh, runs) = match (*exhaustive, *fuzz_runs) {
                (false, None) => (true, Some(1000)),
                (e, f) => (e, f),
            };
            let opts = EquivalenceOptions {
                strict_outputs: *strict_outputs,
            };
            verify(&src.program, &l, &modes, do_exh, runs, src.seed, opts, junit.as_deref(), json_path.as_deref(), cli.verbose)
        }
        Cmd::Bench {
            suite,
            sweep,
            mode,
            out,
            plot,
            no_verify,
        } => {
            let programs: Vec<Benchmark> = if suite == "all" {
                bench::corpus().into_iter().filter(|b| b.suite).collect()
            } else {
                vec![bench::find(suite).ok_or_else(|| Failure::Usage(format!("unknown benchmark `{suite}`")))?]
            };
            let opts = BenchOptions {
                modes: if mode.is_empty() { BenchOptions::default().modes } else { mode.clone() },
                sweep: *sweep,
                verify: !no_verify,
            };
            if costs != CostTable::default() {
                eprintln!("note: bench uses the default cost table");
            }
            let report = bench::run_bench(&programs, &opts)?;
            for d in &report.diagnostics {
                eprintln!("dropped row: {d}");
            }
            let mut csv = Vec::new();
            bench::write_csv(&report.rows, &mut csv)?;
            match out {
                Some(p) => write_file(p, &csv)?,
                None => {
                    let _ = io::stdout().lock().write_all(&csv);
                }
            }
            if let Some(p) = plot {
                write_file(p, bench::overhead_svg(&report.rows).as_bytes())?;
            }
            if cli.verbose {
                eprintln!("{} rows", report.rows.len());
            }
            Ok(())
        }
    }
}

fn exhaustive_summary(ip: &InstrumentedProgram, cfg: &RunConfig, verbose: bool) -> Res {
    check_reference(&ip.base, cfg)?;
    let rep = run_exhaustive(ip, cfg, EquivalenceOptions::default());
    if verbose {
        eprintln!("{} failure points", rep.steps);
    }
    emit_json(
        &json!({
            "formatVersion": FORMAT_VERSION,
            "mode": ip.mode.as_str(),
            "power": "exhaustive",
            "failurePoints": rep.steps,
            "divergent": rep.divergent.iter().map(|(k, d)| json!({"step": k, "divergence": d.to_string()})).collect::<Vec<_>>(),
            "errors": rep.errors.iter().map(|(k, e)| json!({"step": k, "error": e})).collect::<Vec<_>>(),
        }),
        None,
    )?;
    first_problem(&rep.divergent, &rep.errors).map_or(Ok(()), Err)
}

fn first_problem(
    divergent: &[(u64, intermit_core::oracle::Divergence)],
    errors: &[(u64, String)],
) -> Option<Failure> {
    if let Some((k, d)) = divergent.first() {
        return Some(Failure::Diverged(format!(
            "first divergent failure point is step {k}: {d} ({} divergent points)",
            divergent.len()
        )));
    }
    errors
        .first()
        .map(|(k, e)| Failure::Diverged(format!("failure at step {k}: {e}")))
}

/// A program that cannot halt on continuous power has nothing to verify against.
fn check_reference(p: &Program, cfg: &RunConfig) -> Res {
    let r = run(&instrumented(p, Mode::None), cfg);
    match r.outcome {
        Outcome::Halted => Ok(()),
        o => Err(Failure::Program(format!("continuous run: {o}"))),
    }
}

struct Case {
    name: String,
    failure: Option<String>,
}

#[allow(clippy::too_many_arguments)]
fn verify(
    label: &str,
    l: &Loaded,
    modes: &[Mode],
    exhaustive: bool,
    fuzz_runs: Option<u64>,
    seed: u64,
    opts: EquivalenceOptions,
    junit: Option<&Path>,
    json_path: Option<&Path>,
    verbose: bool,
) -> Res {
    check_reference(&l.program, &l.cfg)?;
    let mut cases = Vec::new();
    let mut summary = Vec::new();
    let mut first: Option<Failure> = None;
    for &mode in modes {
        let ip = instrumented(&l.program, mode);
        if exhaustive {
            let rep = run_exhaustive(&ip, &l.cfg, opts);
            if verbose {
                eprintln!("{mode} exhaustive: {} points, {} divergent", rep.steps, rep.divergent.len());
            }
            let problem = first_problem(&rep.divergent, &rep.errors);
            cases.push(Case {
                name: format!("{mode}.exhaustive"),
                failure: problem.as_ref().map(describe),
            });
            summary.push(json!({
                "mode": mode.as_str(),
                "campaign": "exhaustive",
                "failurePoints": rep.steps,
                "divergent": rep.divergent.len(),
                "errors": rep.errors.len(),
                "firstDivergentStep": rep.divergent.first().map(|(k, _)| k).or(rep.errors.first().map(|(k, _)| k)),
                "firstDivergence": rep.divergent.first().map(|(_, d)| d.to_string()).or(rep.errors.first().map(|(_, e)| e.clone())),
            }));
            first = first.or(problem);
        }
        if let Some(runs) = fuzz_runs {
            let fc = FuzzConfig {
                runs,
                seed,
                ..FuzzConfig::default()
            };
            let rep = fuzz(&ip, &l.cfg, &fc, opts);
            if verbose {
                eprintln!("{mode} fuzz: {runs} runs, {} reboots, {} failures", rep.reboots, rep.failures.len());
            }
            let problem = rep.failures.first().map(|f| {
                Failure::Diverged(format!(
                    "fuzz run {} (capacity {}): {} ({} failing runs)",
                    f.run,
                    f.capacity,
                    f.reason,
                    rep.failures.len()
                ))
            });
            cases.push(Case {
                name: format!("{mode}.fuzz"),
                failure: problem.as_ref().map(describe),
            });
            summary.push(json!({
                "mode": mode.as_str(),
                "campaign": "fuzz",
                "runs": rep.runs,
                "seed": seed,
                "reboots": rep.reboots,
                "capacityRange": rep.capacity_range,
                "failures": rep.failures,
                "maxCommitOccupancy": rep.max_commit_occupancy,
                "vbmMismatches": rep.vbm_mismatches,
            }));
            first = first.or(problem);
        }
    }
    if let Some(p) = junit {
        write_file(p, junit_xml(label, &cases).as_bytes())?;
    }
    let passed = first.is_none();
    let v = json!({
        "formatVersion": FORMAT_VERSION,
        "program": label,
        "passed": passed,
        "campaigns": summary,
    });
    emit_json(&v, json_path)?;
    first.map_or(Ok(()), Err)
}

fn describe(f: &Failure) -> String {
    match f {
        Failure::Program(m) | Failure::Diverged(m) | Failure::Usage(m) => m.clone(),
    }
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn junit_xml(suite: &str, cases: &[Case]) -> String {
    let failures = cases.iter().filter(|c| c.failure.is_some()).count();
    let mut s = String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    s += &format!(
        "<testsuite name=\"{}\" tests=\"{}\" failures=\"{failures}\">\n",
        xml_escape(suite),
        cases.len()
    );
    for c in cases {
        s += &format!("  <testcase classname=\"{}\" name=\"{}\"", xml_escape(suite), xml_escape(&c.name));
        match &c.failure {
            None => s += "/>\n",
            Some(m) => {
                s += &format!(">\n    <failure message=\"{}\"/>\n  </testcase>\n", xml_escape(m));
            }
        }
    }
    s += "</testsuite>\n";
    s
}
