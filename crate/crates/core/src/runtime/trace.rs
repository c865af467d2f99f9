use serde::{Deserialize, Serialize};

use crate::lang::Word;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Statement,
    Condition,
    Call,
    Output,
    Sample,
    Init,
    Privatize,
    PreCommit,
    VbmTest,
    VbmSet,
    GateCopy,
    Backup,
    Control,
    Commit,
    Rollback,
    Checkpoint,
    Restore,
    VersionReset,
    /// Not a step: marks a power failure.
    PowerFail,
}

impl StepKind {
    /// Steps that execute a statement of a task or function body.
    pub fn is_program(self) -> bool {
        matches!(
            self,
            StepKind::Statement | StepKind::Condition | StepKind::Call | StepKind::Output | StepKind::Sample
        )
    }
}

/// One JSON-lines trace record. `addr`/`old`/`new` describe the step's NV write, if any.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub step: u64,
    pub kind: StepKind,
    pub addr: Option<usize>,
    pub old: Option<Word>,
    pub new: Option<Word>,
    pub task: Option<String>,
    pub version: Word,
}

pub fn to_json_lines(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
        out.push('\n');
    }
    out
}
