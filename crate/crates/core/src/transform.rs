//! Instrumentation passes: redo (privatization + two-phase commit), undo
//! (in-place update with a backup log), and a full-state checkpoint baseline.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{VarSet, WarReport};
use crate::lang::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Uninstrumented; transitions only update the current task.
    None,
    Redo,
    Undo,
    Ckpt,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::None, Mode::Redo, Mode::Undo, Mode::Ckpt];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Redo => "redo",
            Mode::Undo => "undo",
            Mode::Ckpt => "ckpt",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "none" | "plain" => Ok(Mode::None),
            "redo" => Ok(Mode::Redo),
            "undo" => Ok(Mode::Undo),
            "ckpt" | "checkpoint" => Ok(Mode::Ckpt),
            other => Err(format!("unknown mode `{other}` (expected none, redo, undo or ckpt)")),
        }
    }
}

/// Generated storage attached to one protected variable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub var: SharedId,
    pub buffer: Option<SharedId>,
    pub bitmask: Option<SharedId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentedProgram {
    pub mode: Mode,
    /// The source program before instrumentation.
    pub base: Program,
    /// Instrumented program; its `shared` extends `base.shared` with generated symbols.
    pub program: Program,
    pub report: WarReport,
    pub bindings: Vec<Binding>,
}

impl InstrumentedProgram {
    pub fn binding(&self, var: SharedId) -> Option<&Binding> {
        self.bindings.iter().find(|b| b.var == var)
    }

    /// Commit-list (redo) or backup-list (undo) capacity in entries.
    pub fn log_capacity(&self) -> usize {
        match self.mode {
            Mode::Redo | Mode::Undo => self.report.max_commit_list_size,
            Mode::None | Mode::Ckpt => 0,
        }
    }

    /// Buffers, bitmasks, and every inserted runtime call in program order.
    pub fn manifest(&self) -> serde_json::Value {
        let p = &self.program;
        let name = |id: SharedId| p.shared(id).name.clone();
        let buffers: Vec<_> = self
            .bindings
            .iter()
            .map(|b| {
                serde_json::json!({
                    "var": name(b.var),
                    "shape": p.shared(b.var).shape.to_string(),
                    "buffer": b.buffer.map(name),
                    "bitmask": b.bitmask.map(name),
                })
            })
            .collect();
        let mut sites = Vec::new();
        let mut bodies: Vec<(String, &[Stmt])> = Vec::new();
        for t in p.task_ids() {
            bodies.push((format!("task {}", p.task(t).name), &p.task(t).body));
        }
        for f in p.function_ids() {
            bodies.push((format!("function {}", p.function(f).name), &p.function(f).body));
        }
        for (body, stmts) in bodies {
            walk_stmts(stmts, &mut |s| {
                if let Stmt::Runtime(call) = s {
                    let (kind, target) = match call {
                        RuntimeCall::Privatize { var, .. } => ("privatize", Some(*var)),
                        RuntimeCall::PreCommit { var, .. } => ("pre_commit", Some(*var)),
                        RuntimeCall::ReadGate { array, .. } => ("read_gate", Some(*array)),
                        RuntimeCall::WriteGate { array, .. } => ("write_gate", Some(*array)),
                        RuntimeCall::Backup { var } => ("backup", Some(*var)),
                        RuntimeCall::BackupGate { array, .. } => ("backup_gate", Some(*array)),
                        RuntimeCall::Checkpoint => ("checkpoint", None),
                    };
                    sites.push(serde_json::json!({
                        "body": body,
                        "call": kind,
                        "target": target.map(name),
                    }));
                }
            });
        }
        serde_json::json!({
            "mode": self.mode.as_str(),
            "buffers": buffers,
            "maxLogEntries": self.log_capacity(),
            "callSites": sites,
        })
    }
}

fn fresh_name(p: &Program, base: &str) -> String {
    if p.shared_id(base).is_none() {
        return base.to_string();
    }
    (1..)
        .map(|i| format!("{base}_{i}"))
        .find(|n| p.shared_id(n).is_none())
        .expect("unbounded")
}

fn add_shared(p: &mut Program, name: &str, shape: Shape, role: SharedRole) -> SharedId {
    let name = fresh_name(p, name);
    p.shared.push(SharedDecl {
        name,
        shape,
        init: vec![0; shape.words()],
        unprotected: false,
        role,
    });
    SharedId(p.shared.len() as u32 - 1)
}

fn all_protected(report: &WarReport) -> VarSet {
    report.tasks.iter().chain(&report.functions).flatten().copied().collect()
}

/// Dispatches on `mode`; `Mode::None` returns the program unchanged.
pub fn instrument(program: &Program, report: &WarReport, mode: Mode) -> InstrumentedProgram {
    match mode {
        Mode::None => InstrumentedProgram {
            mode,
            base: program.clone(),
            program: program.clone(),
            report: report.clone(),
            bindings: Vec::new(),
        },
        Mode::Redo => transform_redo(program, report),
        Mode::Undo => transform_undo(program, report),
        Mode::Ckpt => transform_checkpoint_baseline(program, report),
    }
}

pub fn transform_redo(program: &Program, report: &WarReport) -> InstrumentedProgram {
    let mut p = program.clone();
    let mut bindings = Vec::new();
    for v in all_protected(report) {
        let decl = program.shared(v).clone();
        let buffer = add_shared(&mut p, &format!("{}_priv", decl.name), decl.shape, SharedRole::Buffer(v));
        let bitmask = decl
            .shape
            .is_array()
            .then(|| add_shared(&mut p, &format!("{}_vbm", decl.name), decl.shape, SharedRole::Bitmask(v)));
        bindings.push(Binding {
            var: v,
            buffer: Some(buffer),
            bitmask,
        });
    }
    let map: HashMap<SharedId, Binding> = bindings.iter().map(|b| (b.var, b.clone())).collect();
    for t in program.task_ids() {
        let set = report.task(t);
        let mut rw = Rewriter {
            mode: Mode::Redo,
            set,
            map: &map,
        };
        let mut body: Vec<Stmt> = set
            .iter()
            .filter(|v| !program.shared(**v).shape.is_array())
            .map(|v| {
                Stmt::Runtime(RuntimeCall::Privatize {
                    var: *v,
                    buffer: map[v].buffer.expect("redo buffer"),
                })
            })
            .collect();
        body.extend(rw.block(&program.task(t).body));
        p.tasks[t.index()].body = body;
    }
    for f in program.function_ids() {
        let mut rw = Rewriter {
            mode: Mode::Redo,
            set: report.function(f),
            map: &map,
        };
        p.functions[f.index()].body = rw.block(&program.function(f).body);
    }
    InstrumentedProgram {
        mode: Mode::Redo,
        base: program.clone(),
        program: p,
        report: report.clone(),
        bindings,
    }
}

pub fn transform_undo(program: &Program, report: &WarReport) -> InstrumentedProgram {
    let mut p = program.clone();
    let mut bindings = Vec::new();
    for v in all_protected(report) {
        let decl = program.shared(v).clone();
        let bitmask = decl
            .shape
            .is_array()
            .then(|| add_shared(&mut p, &format!("{}_vbm", decl.name), decl.shape, SharedRole::Bitmask(v)));
        bindings.push(Binding {
            var: v,
            buffer: None,
            bitmask,
        });
    }
    let map: HashMap<SharedId, Binding> = bindings.iter().map(|b| (b.var, b.clone())).collect();
    for t in program.task_ids() {
        let set = report.task(t);
        let mut rw = Rewriter {
            mode: Mode::Undo,
            set,
            map: &map,
        };
        let mut body: Vec<Stmt> = set
            .iter()
            .filter(|v| !program.shared(**v).shape.is_array())
            .map(|v| Stmt::Runtime(RuntimeCall::Backup { var: *v }))
            .collect();
        body.extend(rw.block(&program.task(t).body));
        p.tasks[t.index()].body = body;
    }
    for f in program.function_ids() {
        let mut rw = Rewriter {
            mode: Mode::Undo,
            set: report.function(f),
            map: &map,
        };
        p.functions[f.index()].body = rw.block(&program.function(f).body);
    }
    InstrumentedProgram {
        mode: Mode::Undo,
        base: program.clone(),
        program: p,
        report: report.clone(),
        bindings,
    }
}

/// Inserts a full task-shared snapshot before every task boundary.
pub fn transform_checkpoint_baseline(program: &Program, report: &WarReport) -> InstrumentedProgram {
    fn insert(body: &[Stmt]) -> Vec<Stmt> {
        let mut out = Vec::with_capacity(body.len() + 1);
        for s in body {
            match s {
                Stmt::Transition(_) | Stmt::Halt => {
                    out.push(Stmt::Runtime(RuntimeCall::Checkpoint));
                    out.push(s.clone());
                }
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => out.push(Stmt::If {
                    cond: cond.clone(),
                    then_body: insert(then_body),
                    else_body: insert(else_body),
                }),
                Stmt::While {
                    cond,
                    bound,
                    body,
                    cond_guards,
                } => out.push(Stmt::While {
                    cond: cond.clone(),
                    bound: *bound,
                    body: insert(body),
                    cond_guards: cond_guards.clone(),
                }),
                other => out.push(other.clone()),
            }
        }
        out
    }
    let mut p = program.clone();
    for t in &mut p.tasks {
        t.body = insert(&t.body);
    }
    InstrumentedProgram {
        mode: Mode::Ckpt,
        base: program.clone(),
        program: p,
        report: report.clone(),
        bindings: Vec::new(),
    }
}

struct Rewriter<'a> {
    mode: Mode,
    /// Protected variables in the body being rewritten.
    set: &'a VarSet,
    map: &'a HashMap<SharedId, Binding>,
}

impl Rewriter<'_> {
    fn covered(&self, place: Place) -> Option<&Binding> {
        match place {
            Place::Shared(id) if self.set.contains(&id) => self.map.get(&id),
            _ => None,
        }
    }

    fn block(&mut self, body: &[Stmt]) -> Vec<Stmt> {
        let mut out = Vec::with_capacity(body.len());
        for s in body {
            self.stmt(s, &mut out);
        }
        out
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) {
        match s {
            Stmt::Local { id, init } => {
                let init = init.as_ref().map(|e| self.expr(e, out));
                out.push(Stmt::Local { id: *id, init });
            }
            Stmt::Assign { target, value } => {
                let value = self.expr(value, out);
                let target = self.lvalue(target, out);
                out.push(Stmt::Assign { target, value });
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                let cond = self.expr(cond, out);
                out.push(Stmt::If {
                    cond,
                    then_body: self.block(then_body),
                    else_body: self.block(else_body),
                });
            }
            Stmt::While {
                cond,
                bound,
                body,
                cond_guards,
            } => {
                let mut guards = cond_guards.clone();
                let cond = self.expr(cond, &mut guards);
                out.push(Stmt::While {
                    cond,
                    bound: *bound,
                    body: self.block(body),
                    cond_guards: guards,
                });
            }
            Stmt::Sample { target, channel } => {
                let target = self.lvalue(target, out);
                out.push(Stmt::Sample {
                    target,
                    channel: *channel,
                });
            }
            Stmt::Output(e) => {
                let e = self.expr(e, out);
                out.push(Stmt::Output(e));
            }
            Stmt::Transition(_) | Stmt::Halt => {
                if self.mode == Mode::Redo {
                    for v in self.set {
                        let b = &self.map[v];
                        if b.bitmask.is_none() {
                            out.push(Stmt::Runtime(RuntimeCall::PreCommit {
                                var: *v,
                                buffer: b.buffer.expect("redo buffer"),
                            }));
                        }
                    }
                }
                out.push(s.clone());
            }
            Stmt::Call(_) | Stmt::Runtime(_) => out.push(s.clone()),
        }
    }

    /// Rewrites reads, emitting gates into `gates` in evaluation order.
    fn expr(&self, e: &Expr, gates: &mut Vec<Stmt>) -> Expr {
        match e {
            Expr::Const(_) => e.clone(),
            Expr::Load(place) => match (self.mode, self.covered(*place)) {
                (Mode::Redo, Some(b)) => Expr::Load(Place::Shared(b.buffer.expect("redo buffer"))),
                _ => e.clone(),
            },
            Expr::Elem(place, idx) => {
                let idx = self.expr(idx, gates);
                match (self.mode, self.covered(*place)) {
                    (Mode::Redo, Some(b)) => {
                        let buffer = b.buffer.expect("redo buffer");
                        gates.push(Stmt::Runtime(RuntimeCall::ReadGate {
                            array: b.var,
                            buffer,
                            bitmask: b.bitmask.expect("array bitmask"),
                            index: idx.clone(),
                        }));
                        Expr::Elem(Place::Shared(buffer), Box::new(idx))
                    }
                    _ => Expr::Elem(*place, Box::new(idx)),
                }
            }
            Expr::Unary(op, inner) => Expr::Unary(*op, Box::new(self.expr(inner, gates))),
            Expr::Binary(op, l, r) => {
                let l = self.expr(l, gates);
                let r = self.expr(r, gates);
                Expr::Binary(*op, Box::new(l), Box::new(r))
            }
        }
    }

    fn lvalue(&self, lv: &LValue, gates: &mut Vec<Stmt>) -> LValue {
        match lv {
            LValue::Var(place) => match (self.mode, self.covered(*place)) {
                (Mode::Redo, Some(b)) => LValue::Var(Place::Shared(b.buffer.expect("redo buffer"))),
                _ => lv.clone(),
            },
            LValue::Elem(place, idx) => {
                let idx = self.expr(idx, gates);
                match (self.mode, self.covered(*place)) {
                    (Mode::Redo, Some(b)) => {
                        let buffer = b.buffer.expect("redo buffer");
                        gates.push(Stmt::Runtime(RuntimeCall::WriteGate {
                            array: b.var,
                            buffer,
                            bitmask: b.bitmask.expect("array bitmask"),
                            index: idx.clone(),
                        }));
                        LValue::Elem(Place::Shared(buffer), idx)
                    }
                    (Mode::Undo, Some(b)) => {
                        gates.push(Stmt::Runtime(RuntimeCall::BackupGate {
                            array: b.var,
                            bitmask: b.bitmask.expect("array bitmask"),
                            index: idx.clone(),
                        }));
                        LValue::Elem(*place, idx)
                    }
                    _ => LValue::Elem(*place, idx),
                }
            }
        }
    }
}

/// Counts of inserted runtime calls by kind, for tests and reports.
pub fn call_histogram(p: &Program) -> BTreeMap<&'static str, usize> {
    let mut h = BTreeMap::new();
    let mut bodies: Vec<&[Stmt]> = p.tasks.iter().map(|t| t.body.as_slice()).collect();
    bodies.extend(p.functions.iter().map(|f| f.body.as_slice()));
    for body in bodies {
        walk_stmts(body, &mut |s| {
            if let Stmt::Runtime(c) = s {
                let k = match c {
                    RuntimeCall::Privatize { .. } => "privatize",
                    RuntimeCall::PreCommit { .. } => "pre_commit",
                    RuntimeCall::ReadGate { .. } => "read_gate",
                    RuntimeCall::WriteGate { .. } => "write_gate",
                    RuntimeCall::Backup { .. } => "backup",
                    RuntimeCall::BackupGate { .. } => "backup_gate",
                    RuntimeCall::Checkpoint => "checkpoint",
                };
                *h.entry(k).or_default() += 1;
            }
        });
    }
    h
}
