//! Word addresses of everything the simulated device keeps in non-volatile memory.

use crate::lang::{Program, SharedId, Word};

pub const CUR_TASK: usize = 0;
pub const CUR_VERSION: usize = 1;
pub const COMMIT_READY: usize = 2;
pub const PENDING_TASK: usize = 3;
pub const END_INDEX: usize = 4;
pub const NEED_ROLLBACK: usize = 5;
pub const BACKUP_INDEX: usize = 6;
pub const BOOTED: usize = 7;
pub const SNAP_ACTIVE: usize = 8;
pub const CONTROL_WORDS: usize = 9;

pub const CONTROL_NAMES: [&str; CONTROL_WORDS] = [
    "cur_task",
    "cur_version",
    "commit_ready",
    "pending_task",
    "end_index",
    "need_rollback",
    "backup_index",
    "booted",
    "snap_active",
];

/// Value of `cur_task` once the program has halted.
pub const HALTED: Word = -1;
pub const MAX_VERSION: Word = 0xFFFF;
/// Words per commit-list or backup-list entry.
pub const ENTRY_WORDS: usize = 3;

#[derive(Clone, Debug)]
pub struct Layout {
    pub shared_base: Vec<usize>,
    pub commit_base: usize,
    pub commit_cap: usize,
    pub backup_base: usize,
    pub backup_cap: usize,
    /// Two checkpoint snapshots of `snap_words` each.
    pub snap_base: usize,
    pub snap_words: usize,
    /// Programmer-declared variables, in declaration order, with their flattened offset in a snapshot.
    pub user: Vec<(SharedId, usize)>,
    pub user_words: usize,
    pub reg_words: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(p: &Program, commit_cap: usize, backup_cap: usize, snapshots: bool, reg_words: usize) -> Self {
        let mut next = CONTROL_WORDS;
        let mut shared_base = Vec::with_capacity(p.shared.len());
        for s in &p.shared {
            shared_base.push(next);
            next += s.shape.words();
        }
        let mut user = Vec::new();
        let mut user_words = 0;
        for id in p.user_shared() {
            user.push((id, user_words));
            user_words += p.shared(id).shape.words();
        }
        let commit_base = next;
        next += commit_cap * ENTRY_WORDS;
        let backup_base = next;
        next += backup_cap * ENTRY_WORDS;
        let snap_base = next;
        let snap_words = if snapshots { user_words + reg_words + 1 } else { 0 };
        next += 2 * snap_words;
        Layout {
            shared_base,
            commit_base,
            commit_cap,
            backup_base,
            backup_cap,
            snap_base,
            snap_words,
            user,
            user_words,
            reg_words,
            total: next,
        }
    }

    pub fn shared(&self, id: SharedId) -> usize {
        self.shared_base[id.index()]
    }

    pub fn commit_entry(&self, i: usize) -> usize {
        self.commit_base + i * ENTRY_WORDS
    }

    pub fn backup_entry(&self, i: usize) -> usize {
        self.backup_base + i * ENTRY_WORDS
    }

    pub fn snapshot(&self, which: usize) -> usize {
        self.snap_base + which * self.snap_words
    }

    /// NV words beyond the programmer's own variables.
    pub fn overhead_words(&self) -> usize {
        self.total - CONTROL_WORDS - self.user_words
    }
}
