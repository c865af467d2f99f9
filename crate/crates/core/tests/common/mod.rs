//! Shared test helpers: a seeded random-program generator and a brute-force
//! W-A-R oracle that enumerates execution paths instead of running dataflow.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;

use intermit_core::lang::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Gen {
    rng: ChaCha8Rng,
    vars: Vec<(String, Option<usize>)>,
    funcs: Vec<String>,
    budget: usize,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            vars: Vec::new(),
            funcs: Vec::new(),
            budget: 0,
        }
    }

    fn atom(&mut self) -> String {
        match self.rng.random_range(0..5) {
            0 => self.rng.random_range(0..10).to_string(),
            1 => format!("l{}", self.rng.random_range(0..2)),
            _ => {
                let (name, len) = self.vars[self.rng.random_range(0..self.vars.len())].clone();
                match len {
                    None => name,
                    Some(n) => format!("{name}[{}]", self.index(n)),
                }
            }
        }
    }

    fn index(&mut self, n: usize) -> String {
        if self.rng.random_bool(0.5) {
            self.rng.random_range(0..n).to_string()
        } else {
            format!("(l{} & {})", self.rng.random_range(0..2), n - 1)
        }
    }

    fn expr(&mut self, depth: u32) -> String {
        if depth == 0 || self.rng.random_bool(0.4) {
            return self.atom();
        }
        let op = ["+", "-", "*", "&", "|", "^", "<", "==", "!="][self.rng.random_range(0..9)];
        format!("({} {op} {})", self.expr(depth - 1), self.expr(depth - 1))
    }

    fn target(&mut self) -> String {
        if self.rng.random_bool(0.2) {
            return format!("l{}", self.rng.random_range(0..2));
        }
        let (name, len) = self.vars[self.rng.random_range(0..self.vars.len())].clone();
        match len {
            None => name,
            Some(n) => format!("{name}[{}]", self.index(n)),
        }
    }

    fn block(&mut self, out: &mut String, indent: usize, max: usize, in_function: bool) {
        let pad = " ".repeat(indent);
        let n = self.rng.random_range(1..=max.max(1));
        for _ in 0..n {
            if self.budget == 0 {
                return;
            }
            self.budget -= 1;
            match self.rng.random_range(0..10) {
                0..=3 => {
                    let (t, e) = (self.target(), self.expr(2));
                    let _ = writeln!(out, "{pad}{t} = {e};");
                }
                4 if indent < 12 => {
                    let c = self.expr(1);
                    let _ = writeln!(out, "{pad}if ({c}) {{");
                    self.block(out, indent + 4, 3, in_function);
                    if self.rng.random_bool(0.5) {
                        let _ = writeln!(out, "{pad}}} else {{");
                        self.block(out, indent + 4, 3, in_function);
                    }
                    let _ = writeln!(out, "{pad}}}");
                }
                5 if indent < 12 => {
                    let c = self.expr(1);
                    let bound = self.rng.random_range(1..=3);
                    let _ = writeln!(out, "{pad}while ({c}) bound {bound} {{");
                    self.block(out, indent + 4, 3, in_function);
                    let _ = writeln!(out, "{pad}}}");
                }
                6 if !in_function && !self.funcs.is_empty() => {
                    let f = self.funcs[self.rng.random_range(0..self.funcs.len())].clone();
                    let _ = writeln!(out, "{pad}{f}();");
                }
                7 => {
                    let e = self.expr(1);
                    let _ = writeln!(out, "{pad}output({e});");
                }
                8 => {
                    let t = self.target();
                    let _ = writeln!(out, "{pad}sample({t}, ch);");
                }
                _ => {
                    let (t, e) = (self.target(), self.expr(1));
                    let _ = writeln!(out, "{pad}{t} = {e};");
                }
            }
        }
    }

    /// One entry task of at most `max_stmts` statements over at most `max_vars`
    /// task-shared variables, possibly calling up to two helper functions.
    pub fn task_program(&mut self, max_stmts: usize, max_vars: usize) -> String {
        let nvars = self.rng.random_range(1..=max_vars);
        self.vars = (0..nvars)
            .map(|i| {
                let len = self.rng.random_bool(0.3).then_some(4);
                (format!("v{i}"), len)
            })
            .collect();
        let mut src = String::new();
        for (name, len) in &self.vars {
            match len {
                None => {
                    let _ = writeln!(src, "TS int {name} = 1;");
                }
                Some(n) => {
                    let _ = writeln!(src, "TS int {name}[{n}];");
                }
            }
        }
        self.funcs.clear();
        for i in 0..self.rng.random_range(0..=2) {
            self.budget = 3;
            let mut body = String::new();
            self.block(&mut body, 4, 3, true);
            let _ = writeln!(src, "void f{i}() {{\n    int l0 = 0;\n    int l1 = 2;\n{body}}}");
            self.funcs.push(format!("f{i}"));
        }
        self.budget = max_stmts.saturating_sub(3);
        let mut body = String::new();
        self.block(&mut body, 4, max_stmts, false);
        let _ = writeln!(src, "entry task t {{\n    int l0 = 0;\n    int l1 = 3;\n{body}    halt;\n}}");
        src
    }
}

fn reads(p: &Program, e: &Expr, out: &mut Vec<SharedId>) {
    e.for_each_read(&mut |r| match r {
        Expr::Load(Place::Shared(id)) | Expr::Elem(Place::Shared(id), _) => out.push(*id),
        _ => {}
    });
    out.retain(|id| !p.shared(*id).unprotected);
}

/// Path enumeration: `states` are the read sets of every distinct path prefix
/// reaching this point; loops are unrolled up to twice (or their bound).
fn walk(p: &Program, body: &[Stmt], states: BTreeSet<BTreeSet<SharedId>>, war: &mut BTreeSet<SharedId>) -> BTreeSet<BTreeSet<SharedId>> {
    let mut states = states;
    for s in body {
        states = step(p, s, states, war);
    }
    states
}

fn access(p: &Program, rs: Vec<SharedId>, w: Option<SharedId>, states: BTreeSet<BTreeSet<SharedId>>, war: &mut BTreeSet<SharedId>) -> BTreeSet<BTreeSet<SharedId>> {
    states
        .into_iter()
        .map(|mut st| {
            st.extend(rs.iter().copied());
            if let Some(w) = w.filter(|w| !p.shared(*w).unprotected) {
                if st.contains(&w) {
                    war.insert(w);
                }
            }
            st
        })
        .collect()
}

fn step(p: &Program, s: &Stmt, states: BTreeSet<BTreeSet<SharedId>>, war: &mut BTreeSet<SharedId>) -> BTreeSet<BTreeSet<SharedId>> {
    let target = |lv: &LValue, rs: &mut Vec<SharedId>| {
        if let LValue::Elem(_, idx) = lv {
            reads(p, idx, rs);
        }
        match lv.place() {
            Place::Shared(id) => Some(id),
            Place::Local(_) => None,
        }
    };
    match s {
        Stmt::Local { init, .. } => {
            let mut rs = Vec::new();
            if let Some(e) = init {
                reads(p, e, &mut rs);
            }
            access(p, rs, None, states, war)
        }
        Stmt::Assign { target: lv, value } => {
            let mut rs = Vec::new();
            reads(p, value, &mut rs);
            let w = target(lv, &mut rs);
            access(p, rs, w, states, war)
        }
        Stmt::Sample { target: lv, .. } => {
            let mut rs = Vec::new();
            let w = target(lv, &mut rs);
            access(p, rs, w, states, war)
        }
        Stmt::Output(e) => {
            let mut rs = Vec::new();
            reads(p, e, &mut rs);
            access(p, rs, None, states, war)
        }
        Stmt::If {
            cond,
            then_body,
            else_body,
        } => {
            let mut rs = Vec::new();
            reads(p, cond, &mut rs);
            let after = access(p, rs, None, states, war);
            let mut out = walk(p, then_body, after.clone(), war);
            out.extend(walk(p, else_body, after, war));
            out
        }
        Stmt::While { cond, bound, body, .. } => {
            let mut rs = Vec::new();
            reads(p, cond, &mut rs);
            let mut cur = access(p, rs.clone(), None, states, war);
            let mut out = cur.clone();
            for _ in 0..(*bound).min(2) {
                cur = walk(p, body, cur, war);
                cur = access(p, rs.clone(), None, cur, war);
                out.extend(cur.iter().cloned());
            }
            out
        }
        Stmt::Call(f) => walk(p, &p.function(*f).body, states, war),
        Stmt::Transition(_) | Stmt::Halt | Stmt::Runtime(_) => states,
    }
}

/// Task-shared variables some path of `task` reads and later writes.
pub fn brute_force_war(p: &Program, task: TaskId) -> BTreeSet<SharedId> {
    let mut war = BTreeSet::new();
    walk(p, &p.task(task).body, BTreeSet::from([BTreeSet::new()]), &mut war);
    war
}
