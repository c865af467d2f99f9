//! Name resolution and static validation: surface tree to [`Program`].

use std::collections::{BTreeSet, HashMap};

use super::error::{Diagnostic, DiagnosticKind, Pos};
use super::ir::*;
use super::parser::{SBody, SExpr, SExprKind, SLValue, SProgram, SStmt, SStmtKind};

type RResult<T> = Result<T, Diagnostic>;

fn err<T>(pos: Pos, kind: DiagnosticKind) -> RResult<T> {
    Err(Diagnostic::new(pos, kind))
}

fn invalid<T>(pos: Pos, msg: impl Into<String>) -> RResult<T> {
    err(pos, DiagnosticKind::Invalid(msg.into()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum BodyKind {
    Task,
    Function,
    Init,
}

struct Globals {
    shared: HashMap<String, SharedId>,
    shapes: Vec<Shape>,
    tasks: HashMap<String, TaskId>,
    functions: HashMap<String, FuncId>,
    channels: Vec<String>,
}

pub(crate) fn resolve(sp: SProgram) -> RResult<Program> {
    let mut shared = Vec::new();
    let mut shared_ids = HashMap::new();
    for d in &sp.decls {
        let id = SharedId(shared.len() as u32);
        if shared_ids.insert(d.name.clone(), id).is_some() {
            return err(d.pos, DiagnosticKind::Duplicate("task-shared variable", d.name.clone()));
        }
        shared.push(SharedDecl {
            name: d.name.clone(),
            shape: d.len.map(Shape::Array).unwrap_or(Shape::Scalar),
            init: d.init.clone(),
            unprotected: d.unprotected,
            role: SharedRole::User,
        });
    }

    let mut tasks = HashMap::new();
    let mut entry: Option<(TaskId, &str)> = None;
    for (i, t) in sp.tasks.iter().enumerate() {
        if tasks.insert(t.name.clone(), TaskId(i as u32)).is_some() {
            return err(t.pos, DiagnosticKind::Duplicate("task", t.name.clone()));
        }
        if t.is_entry {
            if let Some((_, first)) = entry {
                return err(
                    t.pos,
                    DiagnosticKind::MultipleEntry(first.to_string(), t.name.clone()),
                );
            }
            entry = Some((TaskId(i as u32), &t.name));
        }
    }
    let Some((entry, _)) = entry else {
        return err(Pos { line: 1, col: 1 }, DiagnosticKind::MissingEntry);
    };

    let mut functions = HashMap::new();
    for (i, f) in sp.functions.iter().enumerate() {
        if functions.insert(f.name.clone(), FuncId(i as u32)).is_some() {
            return err(f.pos, DiagnosticKind::Duplicate("function", f.name.clone()));
        }
    }

    let mut channels = BTreeSet::new();
    let mut collect = |body: &[SStmt]| walk_surface(body, &mut |s| {
        if let SStmtKind::Sample { channel, .. } = &s.kind {
            channels.insert(channel.clone());
        }
    });
    sp.tasks.iter().for_each(|t| collect(&t.body));
    sp.functions.iter().for_each(|f| collect(&f.body));

    let globals = Globals {
        shapes: shared.iter().map(|s: &SharedDecl| s.shape).collect(),
        shared: shared_ids,
        tasks,
        functions,
        channels: channels.into_iter().collect(),
    };

    let mut out_tasks = Vec::new();
    for t in &sp.tasks {
        let (locals, body) = BodyResolver::run(&globals, t, BodyKind::Task)?;
        out_tasks.push(Task {
            name: t.name.clone(),
            is_entry: t.is_entry,
            locals,
            body,
        });
    }
    let mut out_functions = Vec::new();
    for f in &sp.functions {
        let (locals, body) = BodyResolver::run(&globals, f, BodyKind::Function)?;
        out_functions.push(Function {
            name: f.name.clone(),
            locals,
            body,
        });
    }
    let init = match &sp.init {
        Some(b) => {
            let (locals, body) = BodyResolver::run(&globals, b, BodyKind::Init)?;
            Some(InitBlock { locals, body })
        }
        None => None,
    };

    let program = Program {
        shared,
        tasks: out_tasks,
        functions: out_functions,
        entry,
        init,
        channels: globals.channels,
    };
    check_recursion(&program, &sp)?;
    Ok(program)
}

fn walk_surface<'a>(body: &'a [SStmt], f: &mut impl FnMut(&'a SStmt)) {
    for s in body {
        f(s);
        match &s.kind {
            SStmtKind::If {
                then_body,
                else_body,
                ..
            } => {
                walk_surface(then_body, f);
                walk_surface(else_body, f);
            }
            SStmtKind::While { body, .. } => walk_surface(body, f),
            _ => {}
        }
    }
}

fn check_recursion(program: &Program, sp: &SProgram) -> RResult<()> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(p: &Program, f: FuncId, state: &mut [u8], stack: &mut Vec<FuncId>) -> Option<Vec<FuncId>> {
        match state[f.index()] {
            1 => {
                let start = stack.iter().position(|&g| g == f).unwrap_or(0);
                let mut cycle = stack[start..].to_vec();
                cycle.push(f);
                return Some(cycle);
            }
            2 => return None,
            _ => {}
        }
        state[f.index()] = 1;
        stack.push(f);
        let mut callees = Vec::new();
        walk_stmts(&p.function(f).body, &mut |s| {
            if let Stmt::Call(g) = s {
                callees.push(*g);
            }
        });
        for g in callees {
            if let Some(c) = visit(p, g, state, stack) {
                return Some(c);
            }
        }
        stack.pop();
        state[f.index()] = 2;
        None
    }
    let mut state = vec![0u8; program.functions.len()];
    for f in program.function_ids() {
        if let Some(cycle) = visit(program, f, &mut state, &mut Vec::new()) {
            let names: Vec<&str> = cycle.iter().map(|g| program.function(*g).name.as_str()).collect();
            return err(
                sp.functions[cycle[0].index()].pos,
                DiagnosticKind::Recursion(names.join(" -> ")),
            );
        }
    }
    Ok(())
}

/// Definitely-assigned scalar locals; `None` means the point is unreachable.
type Assigned = Option<Vec<bool>>;

fn meet(a: Assigned, b: Assigned) -> Assigned {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| *x && *y).collect()),
    }
}

struct BodyResolver<'g> {
    g: &'g Globals,
    kind: BodyKind,
    name: &'g str,
    locals: Vec<LocalDecl>,
    scopes: Vec<HashMap<String, LocalId>>,
}

impl<'g> BodyResolver<'g> {
    fn run(g: &'g Globals, body: &'g SBody, kind: BodyKind) -> RResult<(Vec<LocalDecl>, Vec<Stmt>)> {
        let mut r = BodyResolver {
            g,
            kind,
            name: &body.name,
            locals: Vec::new(),
            scopes: Vec::new(),
        };
        let mut assigned = Some(Vec::new());
        let (stmts, terminates) = r.block(&body.body, &mut assigned)?;
        if kind == BodyKind::Task && !terminates {
            let pos = body.body.last().map(|s| s.pos).unwrap_or(body.pos);
            return err(pos, DiagnosticKind::PathWithoutTransition(body.name.clone()));
        }
        Ok((r.locals, stmts))
    }

    fn lookup_local(&self, name: &str) -> Option<LocalId> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn place(&self, pos: Pos, name: &str) -> RResult<(Place, Shape)> {
        if let Some(id) = self.lookup_local(name) {
            return Ok((Place::Local(id), self.locals[id.index()].shape));
        }
        if let Some(&id) = self.g.shared.get(name) {
            if self.kind == BodyKind::Init {
                return invalid(pos, format!("init block may not access task-shared `{name}`"));
            }
            return Ok((Place::Shared(id), self.g.shapes[id.index()]));
        }
        err(pos, DiagnosticKind::UnknownIdentifier(name.to_string()))
    }

    /// Resolves a block; returns the statements and whether every path through it terminates.
    fn block(&mut self, body: &[SStmt], assigned: &mut Assigned) -> RResult<(Vec<Stmt>, bool)> {
        self.scopes.push(HashMap::new());
        let mut out = Vec::with_capacity(body.len());
        let mut terminates = false;
        for s in body {
            if terminates {
                return err(s.pos, DiagnosticKind::Unreachable);
            }
            let (stmt, t) = self.stmt(s, assigned)?;
            out.push(stmt);
            terminates = t;
        }
        self.scopes.pop();
        Ok((out, terminates))
    }

    fn mark(&self, assigned: &mut Assigned, target: &LValue) {
        if let (LValue::Var(Place::Local(id)), Some(a)) = (target, assigned.as_mut()) {
            if a.len() <= id.index() {
                a.resize(id.index() + 1, false);
            }
            a[id.index()] = true;
        }
    }

    fn stmt(&mut self, s: &SStmt, assigned: &mut Assigned) -> RResult<(Stmt, bool)> {
        let pos = s.pos;
        let stmt = match &s.kind {
            SStmtKind::Local { name, len, init } => {
                if self.locals.iter().any(|l| &l.name == name) {
                    return err(pos, DiagnosticKind::Duplicate("local", name.clone()));
                }
                if self.g.shared.contains_key(name) {
                    return invalid(pos, format!("local `{name}` shadows a task-shared variable"));
                }
                let init = init.as_ref().map(|e| self.expr(e, assigned)).transpose()?;
                let id = LocalId(self.locals.len() as u32);
                let shape = len.map(Shape::Array).unwrap_or(Shape::Scalar);
                self.locals.push(LocalDecl {
                    name: name.clone(),
                    shape,
                });
                self.scopes.last_mut().expect("scope").insert(name.clone(), id);
                if let Some(a) = assigned.as_mut() {
                    a.resize(id.index() + 1, false);
                    a[id.index()] = init.is_some() || shape.is_array();
                }
                Stmt::Local { id, init }
            }
            SStmtKind::Assign { target, value } => {
                let value = self.expr(value, assigned)?;
                let target = self.lvalue(target, assigned)?;
                self.mark(assigned, &target);
                Stmt::Assign { target, value }
            }
            SStmtKind::If {
                cond,
                then_body,
                else_body,
            } => {
                let cond = self.expr(cond, assigned)?;
                let mut a_then = assigned.clone();
                let mut a_else = assigned.clone();
                let (then_body, t1) = self.block(then_body, &mut a_then)?;
                let (else_body, t2) = self.block(else_body, &mut a_else)?;
                *assigned = meet(a_then, a_else).map(|mut v| {
                    v.resize(self.locals.len(), false);
                    v
                });
                let stmt = Stmt::If {
                    cond,
                    then_body,
                    else_body,
                };
                return Ok((stmt, t1 && t2));
            }
            SStmtKind::While { cond, bound, body } => {
                let cond = self.expr(cond, assigned)?;
                let mut a_body = assigned.clone();
                let (body, _) = self.block(body, &mut a_body)?;
                if let Some(a) = assigned.as_mut() {
                    a.resize(self.locals.len(), false);
                }
                Stmt::While {
                    cond,
                    bound: *bound,
                    body,
                    cond_guards: Vec::new(),
                }
            }
            SStmtKind::Call(name) => {
                if self.kind == BodyKind::Init {
                    return invalid(pos, "init block may not call functions");
                }
                match self.g.functions.get(name) {
                    Some(&f) => Stmt::Call(f),
                    None => return err(pos, DiagnosticKind::UnknownIdentifier(name.clone())),
                }
            }
            SStmtKind::Transition(name) => {
                self.no_terminator(pos, "transition_to")?;
                let Some(&t) = self.g.tasks.get(name) else {
                    return err(pos, DiagnosticKind::UnknownIdentifier(name.clone()));
                };
                *assigned = None;
                return Ok((Stmt::Transition(t), true));
            }
            SStmtKind::Halt => {
                self.no_terminator(pos, "halt")?;
                *assigned = None;
                return Ok((Stmt::Halt, true));
            }
            SStmtKind::Sample { target, channel } => {
                if self.kind == BodyKind::Init {
                    return invalid(pos, "init block may not sample inputs");
                }
                let target = self.lvalue(target, assigned)?;
                self.mark(assigned, &target);
                let idx = self
                    .g
                    .channels
                    .binary_search(channel)
                    .expect("channels collected before resolution");
                Stmt::Sample {
                    target,
                    channel: ChannelId(idx as u32),
                }
            }
            SStmtKind::Output(e) => {
                if self.kind == BodyKind::Init {
                    return invalid(pos, "init block may not produce output");
                }
                Stmt::Output(self.expr(e, assigned)?)
            }
        };
        Ok((stmt, false))
    }

    fn no_terminator(&self, pos: Pos, what: &str) -> RResult<()> {
        match self.kind {
            BodyKind::Task => Ok(()),
            BodyKind::Function => invalid(pos, format!("{what} is not allowed in function `{}`", self.name)),
            BodyKind::Init => invalid(pos, format!("{what} is not allowed in the init block")),
        }
    }

    fn lvalue(&mut self, lv: &SLValue, assigned: &Assigned) -> RResult<LValue> {
        let (place, shape) = self.place(lv.pos, &lv.name)?;
        match (&lv.index, shape) {
            (None, Shape::Scalar) => Ok(LValue::Var(place)),
            (Some(i), Shape::Array(_)) => Ok(LValue::Elem(place, self.expr(i, assigned)?)),
            (None, Shape::Array(_)) => invalid(lv.pos, format!("array `{}` must be indexed", lv.name)),
            (Some(_), Shape::Scalar) => invalid(lv.pos, format!("scalar `{}` cannot be indexed", lv.name)),
        }
    }

    fn expr(&mut self, e: &SExpr, assigned: &Assigned) -> RResult<Expr> {
        Ok(match &e.kind {
            SExprKind::Int(v) => Expr::Const(*v),
            SExprKind::Name(name) => {
                let (place, shape) = self.place(e.pos, name)?;
                if shape.is_array() {
                    return invalid(e.pos, format!("array `{name}` must be indexed"));
                }
                if let (Place::Local(id), Some(a)) = (place, assigned) {
                    if !a.get(id.index()).copied().unwrap_or(false) {
                        return err(e.pos, DiagnosticKind::ReadBeforeWrite(name.clone()));
                    }
                }
                Expr::Load(place)
            }
            SExprKind::Index(name, idx) => {
                let (place, shape) = self.place(e.pos, name)?;
                if !shape.is_array() {
                    return invalid(e.pos, format!("scalar `{name}` cannot be indexed"));
                }
                Expr::Elem(place, Box::new(self.expr(idx, assigned)?))
            }
            SExprKind::Unary(op, inner) => Expr::Unary(*op, Box::new(self.expr(inner, assigned)?)),
            SExprKind::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(self.expr(l, assigned)?),
                Box::new(self.expr(r, assigned)?),
            ),
        })
    }
}
