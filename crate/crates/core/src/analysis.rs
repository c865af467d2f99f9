//! Write-after-read detection over task CFGs, contagious privatization
//! through shared functions, and commit-list sizing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::lang::cfg::{Cfg, Terminator};
use crate::lang::{Expr, FuncId, LValue, Place, Program, SharedId, Stmt, TaskId};

pub type VarSet = BTreeSet<SharedId>;

/// How calls contribute to the caller's W-A-R set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CallPolicy {
    /// Only W-A-R dependences that exist along some path through the callee,
    /// widened afterwards by contagion.
    #[default]
    OnDemand,
    /// Every task-shared variable a callee touches joins the caller's set.
    Strict,
}

/// Reads then writes of protected task-shared variables performed by one statement.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AccessSets {
    pub reads: VarSet,
    pub writes: VarSet,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarReport {
    pub policy: CallPolicy,
    /// Final W-A-R set per task, indexed by [`TaskId`].
    pub tasks: Vec<VarSet>,
    /// Variables redirected inside each function, indexed by [`FuncId`].
    pub functions: Vec<VarSet>,
    /// Variables that some task privatizes only because a shared function needs it.
    pub contagious: VarSet,
    pub max_commit_list_size: usize,
}

impl WarReport {
    pub fn task(&self, t: TaskId) -> &VarSet {
        &self.tasks[t.index()]
    }

    pub fn function(&self, f: FuncId) -> &VarSet {
        &self.functions[f.index()]
    }

    /// `{tasks: {name: [var]}, contagious: [var], maxCommitListSize}` with sorted names.
    pub fn to_json(&self, p: &Program) -> serde_json::Value {
        let names = |s: &VarSet| {
            let mut v: Vec<&str> = s.iter().map(|id| p.shared(*id).name.as_str()).collect();
            v.sort_unstable();
            v
        };
        let tasks: BTreeMap<&str, Vec<&str>> = p
            .task_ids()
            .map(|t| (p.task(t).name.as_str(), names(self.task(t))))
            .collect();
        serde_json::json!({
            "tasks": tasks,
            "contagious": names(&self.contagious),
            "maxCommitListSize": self.max_commit_list_size,
        })
    }
}

fn protected(p: &Program, place: Place) -> Option<SharedId> {
    match place {
        Place::Shared(id) if !p.shared(id).unprotected => Some(id),
        _ => None,
    }
}

fn expr_reads(p: &Program, e: &Expr, out: &mut VarSet) {
    e.for_each_read(&mut |r| match r {
        Expr::Load(pl) | Expr::Elem(pl, _) => out.extend(protected(p, *pl)),
        _ => {}
    });
}

/// Direct accesses of a non-call, non-compound statement. Calls and nested
/// blocks contribute nothing here.
pub fn statement_accesses(p: &Program, s: &Stmt) -> AccessSets {
    let mut a = AccessSets::default();
    let target = |lv: &LValue, a: &mut AccessSets| {
        if let LValue::Elem(_, idx) = lv {
            expr_reads(p, idx, &mut a.reads);
        }
        a.writes.extend(protected(p, lv.place()));
    };
    match s {
        Stmt::Local { init: Some(e), .. } | Stmt::Output(e) => expr_reads(p, e, &mut a.reads),
        Stmt::Assign { target: lv, value } => {
            expr_reads(p, value, &mut a.reads);
            target(lv, &mut a);
        }
        Stmt::Sample { target: lv, .. } => target(lv, &mut a),
        _ => {}
    }
    a
}

#[derive(Clone, Debug, Default)]
struct Summary {
    reads: VarSet,
    writes: VarSet,
    war: VarSet,
    /// Variables accessed directly in this body (not via callees).
    direct: VarSet,
    /// All functions reachable by calls, transitively.
    callees: BTreeSet<FuncId>,
}

struct Analyzer<'p> {
    p: &'p Program,
    policy: CallPolicy,
    funcs: Vec<Option<Summary>>,
}

impl<'p> Analyzer<'p> {
    fn new(p: &'p Program, policy: CallPolicy) -> Self {
        Analyzer {
            p,
            policy,
            funcs: vec![None; p.functions.len()],
        }
    }

    fn function(&mut self, f: FuncId) -> Summary {
        if let Some(s) = &self.funcs[f.index()] {
            return s.clone();
        }
        let body = &self.p.function(f).body;
        let s = self.body(body);
        self.funcs[f.index()] = Some(s.clone());
        s
    }

    /// May-read dataflow over the body's CFG.
    fn body(&mut self, body: &'p [Stmt]) -> Summary {
        let cfg = Cfg::build(body);
        let n = cfg.blocks.len();
        let mut succ: Vec<Vec<usize>> = (0..n).map(|b| cfg.successors(b)).collect();
        // A loop that runs at most once has no repeating path.
        for &(latch, header) in &cfg.back_edges {
            if let Terminator::Loop { bound: 1, exit, .. } = cfg.blocks[header].term {
                succ[latch] = vec![exit];
            }
        }
        let mut sum = Summary::default();
        let mut inn: Vec<Option<VarSet>> = vec![None; n];
        inn[Cfg::ENTRY] = Some(VarSet::new());
        let mut work = vec![Cfg::ENTRY];
        while let Some(b) = work.pop() {
            let mut s = inn[b].clone().unwrap_or_default();
            for stmt in &cfg.blocks[b].stmts {
                self.transfer(stmt, &mut s, &mut sum);
            }
            match cfg.blocks[b].term {
                Terminator::Branch { cond, .. } | Terminator::Loop { cond, .. } => {
                    let mut r = VarSet::new();
                    expr_reads(self.p, cond, &mut r);
                    sum.reads.extend(r.iter().copied());
                    sum.direct.extend(r.iter().copied());
                    s.extend(r);
                }
                _ => {}
            }
            for &t in &succ[b] {
                let changed = match &mut inn[t] {
                    None => {
                        inn[t] = Some(s.clone());
                        true
                    }
                    Some(cur) => {
                        let before = cur.len();
                        cur.extend(s.iter().copied());
                        cur.len() != before
                    }
                };
                if changed && !work.contains(&t) {
                    work.push(t);
                }
            }
        }
        sum
    }

    fn transfer(&mut self, stmt: &Stmt, s: &mut VarSet, sum: &mut Summary) {
        if let Stmt::Call(f) = stmt {
            let callee = self.function(*f);
            for w in &callee.writes {
                if s.contains(w) {
                    sum.war.insert(*w);
                }
            }
            sum.war.extend(callee.war.iter().copied());
            if self.policy == CallPolicy::Strict {
                sum.war.extend(callee.reads.iter().copied());
                sum.war.extend(callee.writes.iter().copied());
            }
            s.extend(callee.reads.iter().copied());
            sum.reads.extend(callee.reads.iter().copied());
            sum.writes.extend(callee.writes.iter().copied());
            sum.callees.insert(*f);
            sum.callees.extend(callee.callees.iter().copied());
            return;
        }
        let a = statement_accesses(self.p, stmt);
        s.extend(a.reads.iter().copied());
        for w in &a.writes {
            if s.contains(w) {
                sum.war.insert(*w);
            }
        }
        sum.direct.extend(a.reads.iter().chain(&a.writes).copied());
        sum.reads.extend(a.reads);
        sum.writes.extend(a.writes);
    }
}

/// Variables with a read followed by a write along some path of the task,
/// before contagion.
pub fn find_war_vars(p: &Program, task: TaskId, policy: CallPolicy) -> VarSet {
    Analyzer::new(p, policy).body(&p.task(task).body).war
}

/// Widens per-task sets until every caller of a function privatizes whatever
/// that function redirects.
pub fn mark_contagious(p: &Program, mut war: Vec<VarSet>, policy: CallPolicy) -> WarReport {
    let mut an = Analyzer::new(p, policy);
    let task_callees: Vec<BTreeSet<FuncId>> = p
        .task_ids()
        .map(|t| an.body(&p.task(t).body).callees)
        .collect();
    let direct: Vec<VarSet> = p.function_ids().map(|f| an.function(f).direct).collect();
    let original = war.clone();
    let mut redirected = vec![VarSet::new(); p.functions.len()];
    loop {
        let mut changed = false;
        for f in p.function_ids() {
            for (t, callees) in task_callees.iter().enumerate() {
                if callees.contains(&f) {
                    let add: Vec<SharedId> = direct[f.index()].intersection(&war[t]).copied().collect();
                    for v in add {
                        changed |= redirected[f.index()].insert(v);
                    }
                }
            }
        }
        for (t, callees) in task_callees.iter().enumerate() {
            for f in callees {
                for v in &redirected[f.index()] {
                    changed |= war[t].insert(*v);
                }
            }
        }
        if !changed {
            break;
        }
    }
    let contagious = war
        .iter()
        .zip(&original)
        .flat_map(|(after, before)| after.difference(before).copied().collect::<Vec<_>>())
        .collect();
    let mut report = WarReport {
        policy,
        tasks: war,
        functions: redirected,
        contagious,
        max_commit_list_size: 0,
    };
    report.max_commit_list_size = size_commit_list(&report, p);
    report
}

/// Largest number of commit entries any single task attempt can need.
pub fn size_commit_list(report: &WarReport, p: &Program) -> usize {
    report
        .tasks
        .iter()
        .map(|s| s.iter().map(|v| p.shared(*v).shape.words()).sum::<usize>())
        .max()
        .unwrap_or(0)
}

pub fn analyze(p: &Program, policy: CallPolicy) -> WarReport {
    let war = p.task_ids().map(|t| find_war_vars(p, t, policy)).collect();
    mark_contagious(p, war, policy)
}
