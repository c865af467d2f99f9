//! Continuous-power reference runs and equivalence checking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::inputs::InputStreams;
use crate::lang::{Program, Word};
use crate::runtime::{run, Outcome, RunConfig, RunResult};
use crate::transform::InstrumentedProgram;

/// What an execution is judged by.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Final values of programmer-declared variables.
    pub final_ts: BTreeMap<String, Vec<Word>>,
    /// Outputs of attempts that committed, in order.
    pub outputs: Vec<Word>,
    /// Programmer-declared state after each committed transition, flattened in declaration order.
    pub snapshots: Vec<Vec<Word>>,
    /// `(channel, value)` consumed by attempts that committed, in order.
    pub samples: Vec<(String, Word)>,
    /// Outputs of attempts that were cut short and re-executed.
    pub discarded_outputs: Vec<Word>,
    pub halted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Divergence {
    NotHalted { outcome: String },
    OracleFailed { outcome: String },
    SnapshotCount { expected: usize, actual: usize },
    Snapshot { transition: usize, var: String, expected: Vec<Word>, actual: Vec<Word> },
    Output { index: usize, expected: Option<Word>, actual: Option<Word> },
    FinalState { var: String, expected: Vec<Word>, actual: Vec<Word> },
    DuplicateOutput { values: Vec<Word> },
}

impl std::fmt::Display for Divergence {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Divergence::NotHalted { outcome } => write!(f, "intermittent run did not halt: {outcome}"),
            Divergence::OracleFailed { outcome } => write!(f, "continuous replay did not halt: {outcome}"),
            Divergence::SnapshotCount { expected, actual } => {
                write!(f, "{actual} committed transitions, continuous run had {expected}")
            }
            Divergence::Snapshot {
                transition,
                var,
                expected,
                actual,
            } => write!(
                f,
                "after transition {transition}: `{var}` = {actual:?}, continuous run had {expected:?}"
            ),
            Divergence::Output {
                index,
                expected,
                actual,
            } => write!(f, "output #{index} = {actual:?}, continuous run had {expected:?}"),
            Divergence::FinalState { var, expected, actual } => {
                write!(f, "final `{var}` = {actual:?}, continuous run had {expected:?}")
            }
            Divergence::DuplicateOutput { values } => {
                write!(f, "outputs {values:?} were emitted by attempts that did not commit")
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    /// Treat output emitted by failed attempts as a divergence.
    pub strict_outputs: bool,
}

/// Failure-free run of `program` (uninstrumented) on `inputs`.
pub fn run_continuous(program: &Program, inputs: &InputStreams) -> RunResult {
    let ip = crate::transform::instrument(
        program,
        &crate::analysis::analyze(program, Default::default()),
        crate::transform::Mode::None,
    );
    run_continuous_instrumented(&ip, inputs)
}

pub fn run_continuous_instrumented(ip: &InstrumentedProgram, inputs: &InputStreams) -> RunResult {
    let cfg = RunConfig {
        inputs: inputs.clone(),
        ..RunConfig::default()
    };
    run(ip, &cfg)
}

/// Runs the uninstrumented program on the inputs an intermittent run actually consumed.
pub fn replay_oracle(base: &Program, intermittent: &Observation) -> RunResult {
    run_continuous(base, &InputStreams::replay(&intermittent.samples))
}

pub fn check_equivalence(
    actual: &Observation,
    oracle: &RunResult,
    opts: EquivalenceOptions,
) -> Result<(), Divergence> {
    if !actual.halted {
        return Err(Divergence::NotHalted {
            outcome: "stopped before halt".into(),
        });
    }
    if oracle.outcome != Outcome::Halted {
        return Err(Divergence::OracleFailed {
            outcome: oracle.outcome.to_string(),
        });
    }
    let expected = &oracle.observation;
    for (t, (e, a)) in expected.snapshots.iter().zip(&actual.snapshots).enumerate() {
        if e != a {
            let (var, ev, av) = first_diff(&oracle.user_layout, e, a);
            return Err(Divergence::Snapshot {
                transition: t,
                var,
                expected: ev,
                actual: av,
            });
        }
    }
    if expected.snapshots.len() != actual.snapshots.len() {
        return Err(Divergence::SnapshotCount {
            expected: expected.snapshots.len(),
            actual: actual.snapshots.len(),
        });
    }
    let n = expected.outputs.len().max(actual.outputs.len());
    for i in 0..n {
        let (e, a) = (expected.outputs.get(i).copied(), actual.outputs.get(i).copied());
        if e != a {
            return Err(Divergence::Output {
                index: i,
                expected: e,
                actual: a,
            });
        }
    }
    for (var, e) in &expected.final_ts {
        let a = actual.final_ts.get(var).cloned().unwrap_or_default();
        if &a != e {
            return Err(Divergence::FinalState {
                var: var.clone(),
                expected: e.clone(),
                actual: a,
            });
        }
    }
    if opts.strict_outputs && !actual.discarded_outputs.is_empty() {
        return Err(Divergence::DuplicateOutput {
            values: actual.discarded_outputs.clone(),
        });
    }
    Ok(())
}

/// `(name, expected, actual)` of the first variable whose words differ.
fn first_diff(layout: &[(String, usize)], e: &[Word], a: &[Word]) -> (String, Vec<Word>, Vec<Word>) {
    let mut off = 0;
    for (name, len) in layout {
        let (es, as_) = (&e[off..off + len], &a[off..off + len]);
        if es != as_ {
            return (name.clone(), es.to_vec(), as_.to_vec());
        }
        off += len;
    }
    (String::from("?"), e.to_vec(), a.to_vec())
}

/// Runs the intermittent execution's replayed oracle and compares.
pub fn verify_result(base: &Program, result: &RunResult, opts: EquivalenceOptions) -> Result<(), Divergence> {
    if result.outcome != Outcome::Halted {
        return Err(Divergence::NotHalted {
            outcome: result.outcome.to_string(),
        });
    }
    let oracle = replay_oracle(base, &result.observation);
    check_equivalence(&result.observation, &oracle, opts)
}
