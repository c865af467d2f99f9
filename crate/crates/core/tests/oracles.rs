//! Corpus results checked against independent computations.

use std::collections::HashMap;

use intermit_core::bench::{self, Benchmark};
use intermit_core::inputs::{ChannelSource, InputStreams};
use intermit_core::lang::{parse_program, Word};
use intermit_core::oracle::{run_continuous, run_continuous_instrumented, EquivalenceOptions};
use intermit_core::power::run_exhaustive;
use intermit_core::runtime::{run, Outcome, RunConfig, StepKind};
use intermit_core::transform::Mode;

fn corpus(name: &str) -> Benchmark {
    bench::find(name).unwrap()
}

fn outputs(b: &Benchmark) -> Vec<Word> {
    let r = run_continuous(&b.program(), &b.config().inputs);
    assert_eq!(r.outcome, Outcome::Halted, "{}", b.name);
    r.observation.outputs
}

#[test]
fn rsa_product_matches_integer_multiply() {
    let digits = |n: u64| -> Vec<Word> { format!("{n:08}").bytes().map(|c| (c - b'0') as Word).collect() };
    assert_eq!(outputs(&corpus("rsa")), digits(13 * 11));
}

#[test]
fn bit_counts_match_count_ones() {
    let mut b = corpus("bc");
    b.inputs = InputStreams::new().with("bits", ChannelSource::Sequence(vec![11, 1]));
    assert_eq!(outputs(&b), vec![3, 1, 3, 1, 3, 1, 12]);

    let b = corpus("bc");
    let r = run_continuous(&b.program(), &b.config().inputs);
    let mut expected: Vec<Word> = r.observation.samples.iter().map(|(_, v)| v.count_ones() as Word).collect();
    expected.push(expected.iter().sum());
    assert_eq!(r.observation.outputs, expected);
}

/// The corpus filter's hashing, kick loop, and key sequence, in plain Rust.
fn cuckoo_found(inserts: usize) -> Word {
    let mut filter = [0i64; 64];
    let next = |k: i64| (k * 75 + 74) % 65537;
    let mut key = 7;
    for _ in 0..inserts {
        let mut fp = key % 255 + 1;
        let mut i = (key & 63) as usize;
        let mut done = false;
        if filter[i] == 0 {
            filter[i] = fp;
            done = true;
        } else {
            i ^= ((fp * 37) & 63) as usize;
            if filter[i] == 0 {
                filter[i] = fp;
                done = true;
            }
        }
        let mut kicks = 0;
        while !done && kicks < 8 {
            std::mem::swap(&mut filter[i], &mut fp);
            i ^= ((fp * 37) & 63) as usize;
            if filter[i] == 0 {
                filter[i] = fp;
                done = true;
            }
            kicks += 1;
        }
        key = next(key);
    }
    key = 7;
    let mut found = 0;
    for _ in 0..inserts {
        let fp = key % 255 + 1;
        let i1 = (key & 63) as usize;
        let i2 = i1 ^ ((fp * 37) & 63) as usize;
        if filter[i1] == fp || filter[i2] == fp {
            found += 1;
        }
        key = next(key);
    }
    found
}

#[test]
fn cuckoo_lookups_match_model() {
    let found = cuckoo_found(24);
    assert!(found > 0);
    assert_eq!(outputs(&corpus("cf")), vec![found]);
}

#[test]
fn lzw_round_trips_and_emits_the_model_codes() {
    let b = corpus("lzw");
    let p = b.program();
    let text = p.shared(p.shared_id("text").unwrap()).init.clone();
    let r = run_continuous(&p, &InputStreams::new());
    assert_eq!(r.observation.outputs, text);

    // Dictionary-map LZW over the same alphabet.
    let mut dict: HashMap<(Word, Word), Word> = HashMap::new();
    let mut codes = Vec::new();
    let mut cur = text[0];
    for &c in &text[1..] {
        match dict.get(&(cur, c)) {
            Some(&hit) => cur = hit,
            None => {
                codes.push(cur);
                let n = 4 + dict.len() as Word;
                if n < 48 {
                    dict.insert((cur, c), n);
                }
                cur = c;
            }
        }
    }
    codes.push(cur);
    let fin = &r.observation.final_ts;
    assert_eq!(fin["ncodes"], vec![codes.len() as Word]);
    assert_eq!(&fin["codes"][..codes.len()], &codes[..]);
    assert!(codes.len() < text.len());
}

#[test]
fn partial_war_outputs_updated_values() {
    assert_eq!(outputs(&corpus("partial_war")), vec![1, 2, 5]);
}

#[test]
fn instrumentation_preserves_continuous_behaviour() {
    for b in bench::corpus() {
        let plain = run_continuous(&b.program(), &b.config().inputs);
        for mode in Mode::ALL {
            let ip = b.instrument(mode);
            let r = run(&ip, &b.config());
            assert_eq!(r.outcome, plain.outcome, "{} {mode}", b.name);
            assert_eq!(r.observation, plain.observation, "{} {mode}", b.name);
            assert_eq!(r.stats.reboots, 0);
        }
        let ip = b.instrument(Mode::Redo);
        assert_eq!(run_continuous_instrumented(&ip, &b.config().inputs).observation, plain.observation);
    }
}

#[test]
fn output_free_program_observes_no_output() {
    let p = parse_program("TS int a; entry task t { a = 4; halt; }").unwrap();
    let r = run_continuous(&p, &InputStreams::new());
    assert!(r.observation.outputs.is_empty());
    assert_eq!(r.observation.final_ts["a"], vec![4]);
}

#[test]
fn trivial_program_has_no_divergence() {
    let p = parse_program("entry task t { halt; }").unwrap();
    for mode in [Mode::Redo, Mode::Undo] {
        let ip = intermit_core::transform::instrument(&p, &intermit_core::analysis::analyze(&p, Default::default()), mode);
        let rep = run_exhaustive(&ip, &RunConfig::default(), EquivalenceOptions::default());
        assert!(rep.passed());
    }
}

#[test]
fn disabling_privatization_of_c_breaks_partial_war() {
    let b = corpus("partial_war");
    let src = b.source.replace("TS int c = 3;", "unprotected TS int c = 3;");
    let p = parse_program(&src).unwrap();
    let ip = intermit_core::transform::instrument(&p, &intermit_core::analysis::analyze(&p, Default::default()), Mode::Redo);
    assert!(ip.report.max_commit_list_size == 0);
    let rep = run_exhaustive(&ip, &RunConfig::default(), EquivalenceOptions::default());
    assert!(!rep.divergent.is_empty());
}

/// Kinds of the executed steps, with runs of one kind (a multi-word log entry) collapsed.
fn runtime_steps(src: &str, mode: Mode) -> Vec<StepKind> {
    let p = parse_program(src).unwrap();
    let ip = intermit_core::transform::instrument(&p, &intermit_core::analysis::analyze(&p, Default::default()), mode);
    let cfg = RunConfig {
        trace: true,
        ..RunConfig::default()
    };
    let mut kinds: Vec<StepKind> = run(&ip, &cfg)
        .trace
        .into_iter()
        .map(|e| e.kind)
        .filter(|k| !matches!(k, StepKind::Control | StepKind::Init | StepKind::Commit | StepKind::Condition))
        .collect();
    kinds.dedup();
    kinds
}

#[test]
fn redo_array_update_gates_then_writes_the_buffer() {
    use StepKind::*;
    let steps = runtime_steps("TS int A[4]; entry task t { A[1] = A[1] + 1; halt; }", Mode::Redo);
    assert_eq!(steps, vec![VbmTest, GateCopy, VbmTest, VbmSet, PreCommit, Statement]);
}

#[test]
fn undo_backs_up_once_for_repeated_writes() {
    let src = "TS int A[4]; TS int x; entry task t { x = x + 1; x = x + 2; A[2] = A[2] + 1; A[2] = A[2] + 1; halt; }";
    let steps = runtime_steps(src, Mode::Undo);
    use StepKind::*;
    assert_eq!(steps, vec![Backup, Statement, VbmTest, VbmSet, Backup, Statement, VbmTest, Statement]);
    let p = parse_program(src).unwrap();
    let ip = intermit_core::transform::instrument(&p, &intermit_core::analysis::analyze(&p, Default::default()), Mode::Undo);
    assert_eq!(run(&ip, &RunConfig::default()).stats.backup_copies, 2);
}
