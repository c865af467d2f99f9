use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::layout::*;
use super::stats::{Recovery, RunStats};
use super::trace::{StepKind, TraceEvent};
use super::{Outcome, RunConfig, RunResult};
use crate::error::ProgramError;
use crate::inputs::InputState;
use crate::lang::*;
use crate::oracle::Observation;
use crate::power::PowerModel;
use crate::transform::{InstrumentedProgram, Mode};

enum Stop {
    PowerFail,
    StepLimit,
    Program(ProgramError),
    Fault(String),
}

impl From<ProgramError> for Stop {
    fn from(e: ProgramError) -> Self {
        Stop::Program(e)
    }
}

type Res<T> = Result<T, Stop>;

fn fault<T>(msg: impl Into<String>) -> Res<T> {
    Err(Stop::Fault(msg.into()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bucket {
    Logging,
    Transition,
    Reboot,
    Attempt,
}

#[derive(Clone, Copy)]
enum Loc {
    Nv(usize),
    V(usize),
}

/// Accesses and operators of the step being assembled.
#[derive(Default)]
struct Acc {
    ops: u64,
    v: u64,
    nv: u64,
    reads: Vec<usize>,
}

#[derive(Default)]
struct Attempt {
    cost: u64,
    stmts: u64,
    outputs: Vec<Word>,
    samples: Vec<(String, Word)>,
    start_total: Option<u64>,
    task: Option<TaskId>,
    committed: bool,
}

struct BodyLayout {
    offsets: Vec<usize>,
    words: usize,
}

impl BodyLayout {
    fn new(locals: &[LocalDecl]) -> Self {
        let mut offsets = Vec::with_capacity(locals.len());
        let mut words = 0;
        for l in locals {
            offsets.push(words);
            words += l.shape.words();
        }
        BodyLayout { offsets, words }
    }
}

pub(super) struct Machine<'a> {
    ip: &'a InstrumentedProgram,
    p: &'a Program,
    mode: Mode,
    cfg: &'a RunConfig,
    lay: Layout,
    nv: Vec<Word>,
    vmem: Vec<Word>,
    frames: Vec<(BodyRef, usize)>,
    task_layouts: Vec<BodyLayout>,
    func_layouts: Vec<BodyLayout>,
    init_layout: BodyLayout,
    inputs: InputState,
    schedule_at: usize,
    energy: u64,
    acc: Acc,
    bucket: Bucket,
    kind: StepKind,
    in_task: bool,
    booting: bool,
    stats: RunStats,
    obs: Observation,
    attempt: Attempt,
    trace: Vec<TraceEvent>,
    /// Bitmask entries set since the last version change.
    shadow: HashSet<usize>,
    /// Owner of each word in the shared-symbol region.
    owner: Vec<SharedId>,
    /// Redo: variables privatized by the running task.
    privatized: Vec<bool>,
    written_attempt: HashSet<usize>,
    tainted: HashSet<usize>,
    hazards: BTreeSet<SharedId>,
    streak: Option<(Word, u32)>,
    live_at_failure: u64,
    recovery: Recovery,
    attempt_cost_by_task: BTreeMap<String, u64>,
}

impl<'a> Machine<'a> {
    pub(super) fn new(ip: &'a InstrumentedProgram, cfg: &'a RunConfig) -> Self {
        let p = &ip.program;
        let cap = ip.log_capacity();
        let lay = Layout::new(
            p,
            if ip.mode == Mode::Redo { cap } else { 0 },
            if ip.mode == Mode::Undo { cap } else { 0 },
            ip.mode == Mode::Ckpt,
            cfg.reg_words,
        );
        let mut nv = vec![0; lay.total];
        nv[CUR_TASK] = p.entry.0 as Word;
        nv[CUR_VERSION] = cfg.initial_version;
        let mut owner = Vec::new();
        for (i, s) in p.shared.iter().enumerate() {
            let base = lay.shared_base[i];
            nv[base..base + s.shape.words()].copy_from_slice(&s.init);
            owner.extend(std::iter::repeat_n(SharedId(i as u32), s.shape.words()));
        }
        if lay.snap_words > 0 {
            for which in 0..2 {
                let snap = lay.snapshot(which);
                for &(id, off) in &lay.user {
                    let s = p.shared(id);
                    nv[snap + off..snap + off + s.shape.words()].copy_from_slice(&s.init);
                }
                nv[snap + lay.snap_words - 1] = p.entry.0 as Word;
            }
        }
        Machine {
            ip,
            p,
            mode: ip.mode,
            cfg,
            nv,
            vmem: Vec::new(),
            frames: Vec::new(),
            task_layouts: p.tasks.iter().map(|t| BodyLayout::new(&t.locals)).collect(),
            func_layouts: p.functions.iter().map(|f| BodyLayout::new(&f.locals)).collect(),
            init_layout: BodyLayout::new(p.init.as_ref().map(|i| i.locals.as_slice()).unwrap_or(&[])),
            inputs: cfg.inputs.open(p),
            schedule_at: 0,
            energy: 0,
            acc: Acc::default(),
            bucket: Bucket::Transition,
            kind: StepKind::Control,
            in_task: false,
            booting: false,
            stats: RunStats {
                min_commit_cost: u64::MAX,
                ..RunStats::default()
            },
            obs: Observation::default(),
            attempt: Attempt::default(),
            trace: Vec::new(),
            shadow: HashSet::new(),
            owner,
            privatized: vec![false; p.shared.len()],
            written_attempt: HashSet::new(),
            tainted: HashSet::new(),
            hazards: BTreeSet::new(),
            streak: None,
            live_at_failure: 0,
            recovery: Recovery::default(),
            attempt_cost_by_task: BTreeMap::new(),
            lay,
        }
    }

    pub(super) fn run(mut self) -> RunResult {
        let outcome = loop {
            match self.power_cycle() {
                Ok(()) => break Outcome::Halted,
                Err(Stop::PowerFail) => {
                    if let Some(o) = self.on_failure() {
                        break o;
                    }
                }
                Err(Stop::StepLimit) => break Outcome::StepLimit { steps: self.stats.steps },
                Err(Stop::Program(e)) => break e.into(),
                Err(Stop::Fault(f)) => break Outcome::Fault(f),
            }
        };
        self.finish(outcome)
    }

    fn finish(mut self, outcome: Outcome) -> RunResult {
        let p = self.p;
        for &(id, _) in &self.lay.user {
            let s = p.shared(id);
            let base = self.lay.shared(id);
            self.obs
                .final_ts
                .insert(s.name.clone(), self.nv[base..base + s.shape.words()].to_vec());
        }
        self.obs.halted = outcome == Outcome::Halted;
        if self.stats.min_commit_cost == u64::MAX {
            self.stats.min_commit_cost = 0;
        }
        self.stats.observed_hazards = self.hazards.iter().map(|id| p.shared(*id).name.clone()).collect();
        self.stats.attempt_cost_by_task = std::mem::take(&mut self.attempt_cost_by_task);
        let mut nv_dump = BTreeMap::new();
        for (i, name) in CONTROL_NAMES.iter().enumerate() {
            nv_dump.insert(name.to_string(), vec![self.nv[i]]);
        }
        for (i, s) in p.shared.iter().enumerate() {
            let base = self.lay.shared_base[i];
            nv_dump.insert(s.name.clone(), self.nv[base..base + s.shape.words()].to_vec());
        }
        let user_layout = self
            .lay
            .user
            .iter()
            .map(|&(id, _)| (p.shared(id).name.clone(), p.shared(id).shape.words()))
            .collect();
        RunResult {
            outcome,
            observation: self.obs,
            stats: self.stats,
            nv_dump,
            trace: self.trace,
            user_layout,
            nv_words: self.lay.total,
        }
    }

    // ---- step accounting -------------------------------------------------

    fn total_cost(&self) -> u64 {
        self.stats.cost.total() + self.attempt.cost
    }

    /// Starts one atomic step: the failure-injection point. `flat` overrides the itemized price.
    fn begin(&mut self, kind: StepKind, flat: Option<u64>) -> Res<()> {
        let kind = if self.booting && kind.is_program() { StepKind::Init } else { kind };
        let c = &self.cfg.costs;
        let cost = flat.unwrap_or(c.compute * (1 + self.acc.ops) + c.volatile * self.acc.v + c.nv * self.acc.nv);
        self.acc.ops = 0;
        self.acc.v = 0;
        self.acc.nv = 0;
        if self.stats.steps >= self.cfg.max_steps {
            return Err(Stop::StepLimit);
        }
        match &self.cfg.power {
            PowerModel::Schedule(s) => {
                if s.get(self.schedule_at) == Some(&self.stats.steps) {
                    self.schedule_at += 1;
                    self.acc.reads.clear();
                    return Err(Stop::PowerFail);
                }
            }
            PowerModel::Budget { capacity } => {
                if self.energy + cost > *capacity {
                    self.acc.reads.clear();
                    return Err(Stop::PowerFail);
                }
            }
            PowerModel::Continuous | PowerModel::Exhaustive => {}
        }
        self.stats.steps += 1;
        self.energy += cost;
        self.kind = kind;
        match self.bucket {
            Bucket::Logging => self.stats.cost.logging += cost,
            Bucket::Transition => self.stats.cost.transition += cost,
            Bucket::Reboot => self.stats.cost.reboot += cost,
            Bucket::Attempt => {
                self.attempt.cost += cost;
                if kind.is_program() {
                    self.attempt.stmts += 1;
                }
            }
        }
        if self.cfg.track_hazards && self.in_task {
            for &a in &self.acc.reads {
                if let Some(id) = self.user_owner(a) {
                    if self.tainted.contains(&a) && !self.written_attempt.contains(&a) {
                        self.hazards.insert(id);
                    }
                }
            }
        }
        self.acc.reads.clear();
        if self.cfg.trace {
            let cur = self.nv[CUR_TASK];
            self.trace.push(TraceEvent {
                step: self.stats.steps - 1,
                kind,
                addr: None,
                old: None,
                new: None,
                task: self.task_name(cur),
                version: self.nv[CUR_VERSION],
            });
        }
        Ok(())
    }

    fn task_name(&self, t: Word) -> Option<String> {
        usize::try_from(t)
            .ok()
            .and_then(|i| self.p.tasks.get(i))
            .map(|t| t.name.clone())
    }

    fn user_owner(&self, addr: usize) -> Option<SharedId> {
        let id = *self.owner.get(addr.checked_sub(CONTROL_WORDS)?)?;
        (self.p.shared(id).role == SharedRole::User).then_some(id)
    }

    fn nv_read(&mut self, addr: usize) -> Word {
        self.acc.nv += 1;
        if self.cfg.track_hazards {
            self.acc.reads.push(addr);
        }
        self.nv[addr]
    }

    fn write_nv(&mut self, addr: usize, val: Word) {
        let old = self.nv[addr];
        self.nv[addr] = val;
        if addr == CUR_VERSION {
            self.shadow.clear();
        }
        if self.in_task {
            if let Some(id) = self.user_owner(addr) {
                self.written_attempt.insert(addr);
                if self.mode == Mode::Redo && self.privatized[id.index()] && self.kind != StepKind::Commit {
                    self.stats.original_slot_writes += 1;
                }
            }
        }
        if self.cfg.trace {
            if let Some(e) = self.trace.last_mut() {
                e.addr = Some(addr);
                e.old = Some(old);
                e.new = Some(val);
            }
        }
    }

    /// One step writing a single NV word.
    fn step_write(&mut self, kind: StepKind, addr: usize, val: Word) -> Res<()> {
        self.acc.nv += 1;
        self.begin(kind, None)?;
        self.write_nv(addr, val);
        Ok(())
    }

    /// One step copying an NV word at the given price.
    fn step_copy(&mut self, kind: StepKind, price: u64, dst: usize, src: usize) -> Res<()> {
        let v = self.nv_read(src);
        self.begin(kind, Some(price))?;
        self.write_nv(dst, v);
        Ok(())
    }

    fn with_bucket<T>(&mut self, b: Bucket, f: impl FnOnce(&mut Self) -> Res<T>) -> Res<T> {
        let saved = self.bucket;
        self.bucket = b;
        let r = f(self);
        self.bucket = saved;
        r
    }

    // ---- power cycle -----------------------------------------------------

    fn on_failure(&mut self) -> Option<Outcome> {
        self.stats.reboots += 1;
        self.stats.cost.wasted += self.attempt.cost;
        self.stats.reexecuted_statements += self.attempt.stmts;
        let a = std::mem::take(&mut self.attempt);
        if let Some(t) = a.task.filter(|_| !a.committed) {
            self.stats.failed_attempts += 1;
            *self.stats.failed_by_task.entry(self.p.task(t).name.clone()).or_default() += 1;
        }
        self.obs.discarded_outputs.extend(a.outputs);
        self.tainted.extend(self.written_attempt.drain());
        self.live_at_failure = if self.mode == Mode::Undo && self.nv[NEED_ROLLBACK] == 1 && self.nv[COMMIT_READY] == 0 {
            self.nv[BACKUP_INDEX].max(0) as u64
        } else {
            0
        };
        if self.cfg.trace {
            let cur = self.nv[CUR_TASK];
            self.trace.push(TraceEvent {
                step: self.stats.steps,
                kind: StepKind::PowerFail,
                addr: None,
                old: None,
                new: None,
                task: self.task_name(cur),
                version: self.nv[CUR_VERSION],
            });
        }
        let task = self.nv[CUR_TASK];
        let count = match self.streak {
            Some((t, n)) if t == task => n + 1,
            _ => 1,
        };
        self.streak = Some((task, count));
        if matches!(self.cfg.power, PowerModel::Budget { .. }) && count >= self.cfg.progress_limit {
            return Some(Outcome::ForwardProgress {
                task: self.task_name(task).unwrap_or_else(|| "<none>".into()),
                attempts: count,
            });
        }
        None
    }

    fn power_cycle(&mut self) -> Res<()> {
        self.boot()?;
        loop {
            let t = self.nv[CUR_TASK];
            if t == HALTED {
                return Ok(());
            }
            if t < 0 || t as usize >= self.p.tasks.len() {
                return fault(format!("cur_task holds invalid task index {t}"));
            }
            self.run_task(TaskId(t as u32))?;
        }
    }

    fn boot(&mut self) -> Res<()> {
        self.vmem.clear();
        self.frames.clear();
        self.energy = 0;
        self.in_task = false;
        self.acc = Acc::default();
        let first = self.nv[BOOTED] == 0;
        self.bucket = if first { Bucket::Transition } else { Bucket::Reboot };
        self.booting = true;
        let start = self.total_cost();
        self.recovery = Recovery {
            live_backups: self.live_at_failure,
            ..Recovery::default()
        };
        if first {
            self.step_write(StepKind::Control, BOOTED, 1)?;
        } else if matches!(self.mode, Mode::Redo | Mode::Undo) {
            self.version_increment()?;
        }
        let p = self.p;
        if let Some(init) = &p.init {
            self.frames.push((BodyRef::Init, 0));
            self.vmem.resize(self.init_layout.words, 0);
            self.exec_block(&init.body)?;
            self.frames.clear();
            self.vmem.clear();
        }
        match self.mode {
            Mode::Redo | Mode::Undo if self.nv[COMMIT_READY] == 1 => {
                self.bucket = Bucket::Transition;
                self.finish_transition()?;
            }
            Mode::Redo => {
                if self.nv[END_INDEX] != 0 {
                    self.step_write(StepKind::Control, END_INDEX, 0)?;
                }
            }
            Mode::Undo => {
                if self.nv[NEED_ROLLBACK] == 1 {
                    self.rollback()?;
                }
            }
            Mode::Ckpt if !first => self.restore()?,
            _ => {}
        }
        self.booting = false;
        if !first {
            self.stats.recoveries.push(std::mem::take(&mut self.recovery));
        }
        self.live_at_failure = 0;
        self.stats.max_boot_cost = self.stats.max_boot_cost.max(self.total_cost() - start);
        Ok(())
    }

    fn version_increment(&mut self) -> Res<()> {
        let v = self.nv_read(CUR_VERSION);
        if !(1..=MAX_VERSION).contains(&v) {
            return fault(format!("cur_version out of range: {v}"));
        }
        if v < MAX_VERSION {
            return self.step_write(StepKind::Control, CUR_VERSION, v + 1);
        }
        // Rollover: zero every bitmask entry (idempotent), then restart at 1.
        self.acc = Acc::default();
        for (i, s) in self.p.shared.iter().enumerate() {
            if let SharedRole::Bitmask(_) = s.role {
                let base = self.lay.shared_base[i];
                for a in base..base + s.shape.words() {
                    if self.nv[a] != 0 {
                        self.step_write(StepKind::VersionReset, a, 0)?;
                    }
                }
            }
        }
        self.step_write(StepKind::Control, CUR_VERSION, 1)
    }

    fn restore(&mut self) -> Res<()> {
        let active = self.nv[SNAP_ACTIVE];
        if !(0..=1).contains(&active) {
            return fault(format!("snap_active out of range: {active}"));
        }
        let snap = self.lay.snapshot(active as usize);
        let price = self.cfg.costs.commit_copy;
        for i in 0..self.lay.user.len() {
            let (id, off) = self.lay.user[i];
            let base = self.lay.shared(id);
            for w in 0..self.p.shared(id).shape.words() {
                self.step_copy(StepKind::Restore, price, base + w, snap + off + w)?;
                self.tainted.remove(&(base + w));
                self.stats.restore_copies += 1;
                self.recovery.restore_copies += 1;
            }
        }
        for _ in 0..self.lay.reg_words {
            self.begin(StepKind::Restore, Some(price))?;
        }
        let task = self.nv_read(snap + self.lay.snap_words - 1);
        self.step_write(StepKind::Control, CUR_TASK, task)
    }

    fn rollback(&mut self) -> Res<()> {
        let n = self.nv[BACKUP_INDEX];
        if n < 0 || n as usize > self.lay.backup_cap {
            return fault(format!("backup_index out of range: {n}"));
        }
        let price = self.cfg.costs.backup_copy;
        for i in 0..n as usize {
            let e = self.lay.backup_entry(i);
            let (addr, size) = (self.nv[e], self.nv[e + 2]);
            if size != 1 || addr < CONTROL_WORDS as Word || addr as usize >= self.lay.commit_base {
                return fault(format!("corrupt backup entry {i}: addr {addr}, size {size}"));
            }
            self.step_copy(StepKind::Rollback, price, addr as usize, e + 1)?;
            self.tainted.remove(&(addr as usize));
            self.stats.rollback_copies += 1;
            self.recovery.rollback_copies += 1;
        }
        if n != 0 {
            self.step_write(StepKind::Control, BACKUP_INDEX, 0)?;
        }
        self.step_write(StepKind::Control, NEED_ROLLBACK, 0)
    }

    // ---- transitions -----------------------------------------------------

    /// Commit point: the attempt's outputs and inputs become part of the run.
    fn commit_attempt(&mut self) {
        if let Some(t) = self.attempt.task {
            *self.stats.committed_by_task.entry(self.p.task(t).name.clone()).or_default() += 1;
        }
        self.attempt.committed = true;
        if let Some(start) = self.attempt.start_total {
            let cost = self.total_cost() - start;
            self.stats.min_commit_cost = self.stats.min_commit_cost.min(cost);
        }
        self.stats.cost.useful += self.attempt.cost;
        self.stats.committed_statements += self.attempt.stmts;
        self.attempt.cost = 0;
        self.attempt.stmts = 0;
        self.obs.outputs.append(&mut self.attempt.outputs);
        self.obs.samples.append(&mut self.attempt.samples);
        self.tainted.clear();
        self.written_attempt.clear();
        self.streak = None;
        self.in_task = false;
    }

    /// The transition is complete: record the committed state.
    fn record_transition(&mut self) {
        self.stats.transitions += 1;
        let mut snap = Vec::with_capacity(self.lay.user_words);
        for &(id, _) in &self.lay.user {
            let base = self.lay.shared(id);
            snap.extend_from_slice(&self.nv[base..base + self.p.shared(id).shape.words()]);
        }
        self.obs.snapshots.push(snap);
    }

    fn attempt_finished(&mut self) {
        if let (Some(start), Some(t)) = (self.attempt.start_total.take(), self.attempt.task.take()) {
            let cost = self.total_cost() - start;
            self.stats.max_attempt_cost = self.stats.max_attempt_cost.max(cost);
            let e = self.attempt_cost_by_task.entry(self.p.task(t).name.clone()).or_default();
            *e = (*e).max(cost);
        }
    }

    fn transition(&mut self, next: Word) -> Res<()> {
        self.bucket = Bucket::Transition;
        match self.mode {
            Mode::None => {
                self.step_write(StepKind::Control, CUR_TASK, next)?;
                self.commit_attempt();
                self.record_transition();
                self.attempt_finished();
            }
            Mode::Redo | Mode::Undo => {
                self.step_write(StepKind::Control, PENDING_TASK, next)?;
                self.step_write(StepKind::Control, COMMIT_READY, 1)?;
                self.commit_attempt();
                self.finish_transition()?;
            }
            Mode::Ckpt => {
                let inactive = 1 - self.nv[SNAP_ACTIVE];
                let snap = self.lay.snapshot(inactive as usize);
                self.step_write(StepKind::Checkpoint, snap + self.lay.snap_words - 1, next)?;
                self.step_write(StepKind::Control, SNAP_ACTIVE, inactive)?;
                self.commit_attempt();
                self.record_transition();
                self.step_write(StepKind::Control, CUR_TASK, next)?;
                self.attempt_finished();
            }
        }
        Ok(())
    }

    /// Everything after the commit point; safe to re-run from any failure.
    fn finish_transition(&mut self) -> Res<()> {
        if self.mode == Mode::Redo {
            let n = self.nv[END_INDEX];
            if n < 0 || n as usize > self.lay.commit_cap {
                return fault(format!("end_index out of range: {n}"));
            }
            let price = self.cfg.costs.commit_copy;
            for i in 0..n as usize {
                let e = self.lay.commit_entry(i);
                let (orig, buf, size) = (self.nv[e], self.nv[e + 1], self.nv[e + 2]);
                let region = CONTROL_WORDS as Word..self.lay.commit_base as Word;
                if size < 1 || !region.contains(&orig) || !region.contains(&(orig + size - 1)) || !region.contains(&buf) {
                    return fault(format!("corrupt commit entry {i}: {orig} <- {buf} x{size}"));
                }
                for w in 0..size as usize {
                    self.step_copy(StepKind::Commit, price, orig as usize + w, buf as usize + w)?;
                    self.stats.commit_copies += 1;
                    if self.booting {
                        self.recovery.commit_copies += 1;
                    }
                }
            }
            if n != 0 {
                self.step_write(StepKind::Control, END_INDEX, 0)?;
            }
        } else {
            if self.nv[BACKUP_INDEX] != 0 {
                self.step_write(StepKind::Control, BACKUP_INDEX, 0)?;
            }
            if self.nv[NEED_ROLLBACK] != 0 {
                self.step_write(StepKind::Control, NEED_ROLLBACK, 0)?;
            }
        }
        let next = self.nv_read(PENDING_TASK);
        if next != HALTED && (next < 0 || next as usize >= self.p.tasks.len()) {
            return fault(format!("pending_task holds invalid task index {next}"));
        }
        self.step_write(StepKind::Control, CUR_TASK, next)?;
        self.version_increment()?;
        self.step_write(StepKind::Control, COMMIT_READY, 0)?;
        self.record_transition();
        self.attempt_finished();
        Ok(())
    }

    // ---- task execution --------------------------------------------------

    fn run_task(&mut self, t: TaskId) -> Res<()> {
        self.in_task = true;
        self.bucket = Bucket::Attempt;
        self.attempt.start_total = Some(self.total_cost());
        self.attempt.task = Some(t);
        self.attempt.committed = false;
        self.written_attempt.clear();
        if self.mode == Mode::Redo {
            self.privatized.iter_mut().for_each(|b| *b = false);
            for v in self.ip.report.task(t) {
                self.privatized[v.index()] = true;
            }
        }
        self.vmem.clear();
        self.vmem.resize(self.task_layouts[t.index()].words, 0);
        self.frames.clear();
        self.frames.push((BodyRef::Task(t), 0));
        let p = self.p;
        self.exec_block(&p.task(t).body)?;
        self.frames.clear();
        Ok(())
    }

    fn body_name(&self) -> String {
        match self.frames.last().map(|f| f.0) {
            Some(BodyRef::Task(t)) => format!("task `{}`", self.p.task(t).name),
            Some(BodyRef::Function(f)) => format!("function `{}`", self.p.function(f).name),
            _ => "init block".to_string(),
        }
    }

    fn local_slot(&self, id: LocalId) -> usize {
        let (body, base) = *self.frames.last().expect("active frame");
        let lay = match body {
            BodyRef::Task(t) => &self.task_layouts[t.index()],
            BodyRef::Function(f) => &self.func_layouts[f.index()],
            BodyRef::Init => &self.init_layout,
        };
        base + lay.offsets[id.index()]
    }

    fn local_decl(&self, id: LocalId) -> &LocalDecl {
        let (body, _) = *self.frames.last().expect("active frame");
        &self.p.locals(body)[id.index()]
    }

    fn elem(&self, place: Place, i: Word) -> Res<Loc> {
        let (len, name, loc): (usize, &str, fn(usize) -> Loc) = match place {
            Place::Shared(id) => (self.p.shared(id).shape.words(), &self.p.shared(id).name, Loc::Nv),
            Place::Local(id) => {
                let d = self.local_decl(id);
                (d.shape.words(), &d.name, Loc::V)
            }
        };
        if i < 0 || i as usize >= len {
            return Err(Stop::Program(ProgramError::IndexOutOfBounds {
                body: self.body_name(),
                name: name.to_string(),
                index: i,
                len,
            }));
        }
        let base = match place {
            Place::Shared(id) => self.lay.shared(id),
            Place::Local(id) => self.local_slot(id),
        };
        Ok(loc(base + i as usize))
    }

    fn read(&mut self, loc: Loc) -> Word {
        match loc {
            Loc::Nv(a) => self.nv_read(a),
            Loc::V(a) => {
                self.acc.v += 1;
                self.vmem[a]
            }
        }
    }

    fn eval(&mut self, e: &Expr) -> Res<Word> {
        Ok(match e {
            Expr::Const(v) => *v,
            Expr::Load(Place::Shared(id)) => {
                let a = self.lay.shared(*id);
                self.nv_read(a)
            }
            Expr::Load(Place::Local(id)) => {
                let a = self.local_slot(*id);
                self.read(Loc::V(a))
            }
            Expr::Elem(place, idx) => {
                let i = self.eval(idx)?;
                let loc = self.elem(*place, i)?;
                self.read(loc)
            }
            Expr::Unary(op, inner) => {
                let x = self.eval(inner)?;
                self.acc.ops += 1;
                match op {
                    UnOp::Neg => x.wrapping_neg(),
                    UnOp::Not => (x == 0) as Word,
                    UnOp::BitNot => !x,
                }
            }
            Expr::Binary(op, l, r) => {
                let a = self.eval(l)?;
                let b = self.eval(r)?;
                self.acc.ops += 1;
                match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::Mul => a.wrapping_mul(b),
                    BinOp::Div | BinOp::Rem if b == 0 => {
                        return Err(ProgramError::DivisionByZero(self.body_name()).into())
                    }
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Rem => a.wrapping_rem(b),
                    BinOp::And => a & b,
                    BinOp::Or => a | b,
                    BinOp::Xor => a ^ b,
                    BinOp::Shl => a.wrapping_shl((b & 63) as u32),
                    BinOp::Shr => a.wrapping_shr((b & 63) as u32),
                    BinOp::Eq => (a == b) as Word,
                    BinOp::Ne => (a != b) as Word,
                    BinOp::Lt => (a < b) as Word,
                    BinOp::Le => (a <= b) as Word,
                    BinOp::Gt => (a > b) as Word,
                    BinOp::Ge => (a >= b) as Word,
                    BinOp::LogicAnd => (a != 0 && b != 0) as Word,
                    BinOp::LogicOr => (a != 0 || b != 0) as Word,
                }
            }
        })
    }

    fn target(&mut self, lv: &LValue) -> Res<Loc> {
        match lv {
            LValue::Var(Place::Shared(id)) => Ok(Loc::Nv(self.lay.shared(*id))),
            LValue::Var(Place::Local(id)) => Ok(Loc::V(self.local_slot(*id))),
            LValue::Elem(place, idx) => {
                let i = self.eval(idx)?;
                self.elem(*place, i)
            }
        }
    }

    /// Charges the write of `loc`, starts the step, and stores `val`.
    fn store(&mut self, kind: StepKind, loc: Loc, val: Word) -> Res<()> {
        match loc {
            Loc::Nv(a) => {
                self.acc.nv += 1;
                self.begin(kind, None)?;
                self.write_nv(a, val);
            }
            Loc::V(a) => {
                self.acc.v += 1;
                self.begin(kind, None)?;
                self.vmem[a] = val;
            }
        }
        Ok(())
    }

    /// Returns `true` once a transition or halt has run.
    fn exec_block(&mut self, body: &[Stmt]) -> Res<bool> {
        for s in body {
            if self.exec(s)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    fn exec(&mut self, s: &Stmt) -> Res<bool> {
        match s {
            Stmt::Local { id, init } => {
                let slot = self.local_slot(*id);
                match (self.local_decl(*id).shape, init) {
                    (Shape::Array(n), _) => {
                        self.acc.v += n as u64;
                        self.begin(StepKind::Statement, None)?;
                        self.vmem[slot..slot + n].fill(0);
                    }
                    (Shape::Scalar, Some(e)) => {
                        let v = self.eval(e)?;
                        self.store(StepKind::Statement, Loc::V(slot), v)?;
                    }
                    (Shape::Scalar, None) => {}
                }
            }
            Stmt::Assign { target, value } => {
                let v = self.eval(value)?;
                let loc = self.target(target)?;
                self.store(StepKind::Statement, loc, v)?;
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                let c = self.eval(cond)?;
                self.begin(StepKind::Condition, None)?;
                let branch = if c != 0 { then_body } else { else_body };
                return self.exec_block(branch);
            }
            Stmt::While {
                cond,
                bound,
                body,
                cond_guards,
            } => {
                let mut iterations = 0u32;
                loop {
                    for g in cond_guards {
                        self.exec(g)?;
                    }
                    let c = self.eval(cond)?;
                    self.begin(StepKind::Condition, None)?;
                    if c == 0 {
                        break;
                    }
                    if iterations == *bound {
                        return Err(ProgramError::LoopBound {
                            body: self.body_name(),
                            bound: *bound,
                        }
                        .into());
                    }
                    iterations += 1;
                    if self.exec_block(body)? {
                        return Ok(true);
                    }
                }
            }
            Stmt::Call(f) => {
                self.begin(StepKind::Call, None)?;
                let base = self.vmem.len();
                self.vmem.resize(base + self.func_layouts[f.index()].words, 0);
                self.frames.push((BodyRef::Function(*f), base));
                let p = self.p;
                self.exec_block(&p.function(*f).body)?;
                self.frames.pop();
                self.vmem.truncate(base);
            }
            Stmt::Sample { target, channel } => {
                let loc = self.target(target)?;
                match loc {
                    Loc::Nv(_) => self.acc.nv += 1,
                    Loc::V(_) => self.acc.v += 1,
                }
                self.begin(StepKind::Sample, None)?;
                let name = &self.p.channels[channel.index()];
                let v = self
                    .inputs
                    .next(channel.index())
                    .ok_or_else(|| ProgramError::InputExhausted(name.clone()))?;
                self.attempt.samples.push((name.clone(), v));
                match loc {
                    Loc::Nv(a) => self.write_nv(a, v),
                    Loc::V(a) => self.vmem[a] = v,
                }
            }
            Stmt::Output(e) => {
                let v = self.eval(e)?;
                self.begin(StepKind::Output, None)?;
                self.attempt.outputs.push(v);
            }
            Stmt::Transition(t) => {
                self.transition(t.0 as Word)?;
                return Ok(true);
            }
            Stmt::Halt => {
                self.transition(HALTED)?;
                return Ok(true);
            }
            Stmt::Runtime(call) => self.with_bucket(Bucket::Logging, |m| m.runtime(call))?,
        }
        Ok(false)
    }

    // ---- runtime library -------------------------------------------------

    fn runtime(&mut self, call: &RuntimeCall) -> Res<()> {
        let copy = self.cfg.costs.commit_copy;
        match call {
            RuntimeCall::Privatize { var, buffer } => {
                let (dst, src) = (self.lay.shared(*buffer), self.lay.shared(*var));
                self.step_copy(StepKind::Privatize, copy, dst, src)?;
                self.stats.privatize_copies += 1;
            }
            RuntimeCall::PreCommit { var, buffer } => {
                let (orig, buf) = (self.lay.shared(*var), self.lay.shared(*buffer));
                self.pre_commit(orig, buf)?;
            }
            RuntimeCall::ReadGate {
                array,
                buffer,
                bitmask,
                index,
            } => {
                let (i, set) = self.vbm_test(*array, *bitmask, index)?;
                if !set {
                    let (dst, src) = (self.lay.shared(*buffer) + i, self.lay.shared(*array) + i);
                    self.step_copy(StepKind::GateCopy, copy, dst, src)?;
                    self.stats.privatize_copies += 1;
                }
            }
            RuntimeCall::WriteGate {
                array,
                buffer,
                bitmask,
                index,
            } => {
                let (i, set) = self.vbm_test(*array, *bitmask, index)?;
                if !set {
                    self.vbm_set(self.lay.shared(*bitmask) + i)?;
                    self.pre_commit(self.lay.shared(*array) + i, self.lay.shared(*buffer) + i)?;
                }
            }
            RuntimeCall::Backup { var } => self.backup(self.lay.shared(*var))?,
            RuntimeCall::BackupGate { array, bitmask, index } => {
                let (i, set) = self.vbm_test(*array, *bitmask, index)?;
                if !set {
                    self.vbm_set(self.lay.shared(*bitmask) + i)?;
                    self.backup(self.lay.shared(*array) + i)?;
                }
            }
            RuntimeCall::Checkpoint => {
                self.bucket = Bucket::Transition;
                let inactive = (1 - self.nv[SNAP_ACTIVE]) as usize;
                let snap = self.lay.snapshot(inactive);
                for k in 0..self.lay.user.len() {
                    let (id, off) = self.lay.user[k];
                    let base = self.lay.shared(id);
                    for w in 0..self.p.shared(id).shape.words() {
                        self.step_copy(StepKind::Checkpoint, copy, snap + off + w, base + w)?;
                        self.stats.checkpoint_copies += 1;
                    }
                }
                let regs = snap + self.lay.user_words;
                for r in 0..self.lay.reg_words {
                    self.begin(StepKind::Checkpoint, Some(copy))?;
                    self.write_nv(regs + r, 0);
                }
            }
        }
        Ok(())
    }

    /// Evaluates the gate index and tests the element's bitmask entry.
    fn vbm_test(&mut self, array: SharedId, bitmask: SharedId, index: &Expr) -> Res<(usize, bool)> {
        let i = self.eval(index)?;
        let Loc::Nv(elem) = self.elem(Place::Shared(array), i)? else {
            unreachable!("task-shared arrays live in NV")
        };
        let i = elem - self.lay.shared(array);
        let entry = self.lay.shared(bitmask) + i;
        let cur = self.nv_read(CUR_VERSION);
        let v = self.nv_read(entry);
        self.acc.ops += 1;
        self.begin(StepKind::VbmTest, None)?;
        self.stats.vbm_tests += 1;
        let set = v == cur;
        if set != self.shadow.contains(&entry) {
            self.stats.vbm_mismatches += 1;
        }
        Ok((i, set))
    }

    fn vbm_set(&mut self, entry: usize) -> Res<()> {
        let cur = self.nv_read(CUR_VERSION);
        self.step_write(StepKind::VbmSet, entry, cur)?;
        self.shadow.insert(entry);
        self.stats.vbm_sets += 1;
        Ok(())
    }

    fn pre_commit(&mut self, orig: usize, buf: usize) -> Res<()> {
        let i = self.nv_read(END_INDEX);
        if i < 0 || i as usize >= self.lay.commit_cap {
            return fault(format!("commit list overflow: {} entries", self.lay.commit_cap));
        }
        let e = self.lay.commit_entry(i as usize);
        self.step_write(StepKind::PreCommit, e, orig as Word)?;
        self.step_write(StepKind::PreCommit, e + 1, buf as Word)?;
        self.step_write(StepKind::PreCommit, e + 2, 1)?;
        self.step_write(StepKind::PreCommit, END_INDEX, i + 1)?;
        self.stats.pre_commit_entries += 1;
        self.stats.max_commit_occupancy = self.stats.max_commit_occupancy.max(i as u64 + 1);
        Ok(())
    }

    fn backup(&mut self, addr: usize) -> Res<()> {
        if self.nv_read(NEED_ROLLBACK) == 0 {
            self.step_write(StepKind::Backup, NEED_ROLLBACK, 1)?;
        }
        let i = self.nv_read(BACKUP_INDEX);
        if i < 0 || i as usize >= self.lay.backup_cap {
            return fault(format!("backup list overflow: {} entries", self.lay.backup_cap));
        }
        let e = self.lay.backup_entry(i as usize);
        self.step_write(StepKind::Backup, e, addr as Word)?;
        self.step_copy(StepKind::Backup, self.cfg.costs.backup_copy, e + 1, addr)?;
        self.stats.backup_copies += 1;
        self.step_write(StepKind::Backup, e + 2, 1)?;
        self.step_write(StepKind::Backup, BACKUP_INDEX, i + 1)?;
        self.stats.max_backup_occupancy = self.stats.max_backup_occupancy.max(i as u64 + 1);
        Ok(())
    }
}
