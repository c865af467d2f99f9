use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Cost units spent, by what the energy was spent on.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostBuckets {
    /// Privatization, pre-commit, backups, and bitmask upkeep.
    pub logging: u64,
    /// Commit copies, checkpoints, and task-switch bookkeeping (including first boot).
    pub transition: u64,
    /// Recovery after a power failure: version bump, rollback, restore, init block.
    pub reboot: u64,
    /// Program statements of attempts that committed.
    pub useful: u64,
    /// Program statements of attempts cut short by a failure.
    pub wasted: u64,
}

impl CostBuckets {
    pub fn total(&self) -> u64 {
        self.logging + self.transition + self.reboot + self.useful + self.wasted
    }
}

/// What one completed recovery did, next to what was pending when power failed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recovery {
    /// Backup-list entries that were live (undo) at the failure point.
    pub live_backups: u64,
    pub rollback_copies: u64,
    pub restore_copies: u64,
    /// Commit copies re-run because the failure hit after the commit point.
    pub commit_copies: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: u64,
    pub privatize_copies: u64,
    pub pre_commit_entries: u64,
    pub commit_copies: u64,
    pub backup_copies: u64,
    pub rollback_copies: u64,
    pub checkpoint_copies: u64,
    pub restore_copies: u64,
    pub vbm_tests: u64,
    pub vbm_sets: u64,
    pub transitions: u64,
    pub reboots: u64,
    pub failed_attempts: u64,
    /// Program statements executed by attempts that later failed.
    pub reexecuted_statements: u64,
    /// Program statements executed by attempts that committed.
    pub committed_statements: u64,
    pub cost: CostBuckets,
    pub max_commit_occupancy: u64,
    pub max_backup_occupancy: u64,
    /// Most expensive task attempt seen, from first statement to end of its transition.
    pub max_attempt_cost: u64,
    /// Cheapest completed attempt, from first statement to its commit point.
    pub min_commit_cost: u64,
    /// Most expensive boot sequence seen.
    pub max_boot_cost: u64,
    /// `vbm_test` answers that disagreed with the tracer's shadow set.
    pub vbm_mismatches: u64,
    /// Writes to a privatized variable's original slot outside commit (redo).
    pub original_slot_writes: u64,
    /// Committed attempts of each task.
    pub committed_by_task: BTreeMap<String, u64>,
    /// Attempts of each task cut short by a failure.
    pub failed_by_task: BTreeMap<String, u64>,
    /// Most expensive attempt of each task.
    pub attempt_cost_by_task: BTreeMap<String, u64>,
    pub recoveries: Vec<Recovery>,
    /// Task-shared variables observed read after re-execution while still
    /// holding a value written by a failed attempt of the same task.
    pub observed_hazards: Vec<String>,
}

impl RunStats {
    /// Every word copied for crash consistency.
    pub fn total_copies(&self) -> u64 {
        self.privatize_copies
            + self.commit_copies
            + self.backup_copies
            + self.rollback_copies
            + self.checkpoint_copies
            + self.restore_copies
    }

    pub fn total_cost(&self) -> u64 {
        self.cost.total()
    }
}
