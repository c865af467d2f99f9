//! Simulated intermittently-powered device executing instrumented programs.

pub mod layout;
mod machine;
pub mod stats;
pub mod trace;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ProgramError;
use crate::inputs::InputStreams;
use crate::lang::Word;
use crate::oracle::Observation;
use crate::power::{CostTable, PowerModel};
use crate::transform::InstrumentedProgram;

pub use layout::Layout;
pub use stats::{CostBuckets, Recovery, RunStats};
pub use trace::{StepKind, TraceEvent};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub power: PowerModel,
    pub costs: CostTable,
    pub inputs: InputStreams,
    /// Global step budget; runs that reach it stop with [`Outcome::StepLimit`].
    pub max_steps: u64,
    /// Consecutive failed attempts of one task (budget mode) before giving up.
    pub progress_limit: u32,
    pub initial_version: Word,
    pub trace: bool,
    /// Track reads of values left behind by failed attempts (costs some speed).
    pub track_hazards: bool,
    /// Synthetic register/stack words saved by each checkpoint.
    pub reg_words: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            power: PowerModel::Continuous,
            costs: CostTable::default(),
            inputs: InputStreams::default(),
            max_steps: 50_000_000,
            progress_limit: 3,
            initial_version: 1,
            trace: false,
            track_hazards: false,
            reg_words: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Halted,
    /// The same task failed `attempts` times in a row on a full charge.
    ForwardProgress { task: String, attempts: u32 },
    StepLimit { steps: u64 },
    ProgramError(String),
    Fault(String),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Halted => write!(f, "halted"),
            Outcome::ForwardProgress { task, attempts } => write!(
                f,
                "forward-progress violation: task `{task}` failed {attempts} consecutive attempts on a full charge"
            ),
            Outcome::StepLimit { steps } => write!(f, "step limit of {steps} reached"),
            Outcome::ProgramError(e) => write!(f, "program error: {e}"),
            Outcome::Fault(e) => write!(f, "simulator fault: {e}"),
        }
    }
}

impl From<ProgramError> for Outcome {
    fn from(e: ProgramError) -> Self {
        Outcome::ProgramError(e.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub outcome: Outcome,
    pub observation: Observation,
    pub stats: RunStats,
    /// Control words and every symbol, by name.
    pub nv_dump: BTreeMap<String, Vec<Word>>,
    pub trace: Vec<TraceEvent>,
    /// `(name, words)` of programmer-declared variables, in snapshot order.
    pub user_layout: Vec<(String, usize)>,
    /// Total NV words the mode allocates.
    pub nv_words: usize,
}

/// Executes `ip` under `cfg`. Deterministic for a given configuration.
pub fn run(ip: &InstrumentedProgram, cfg: &RunConfig) -> RunResult {
    machine::Machine::new(ip, cfg).run()
}
