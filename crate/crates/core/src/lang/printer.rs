//! Pretty-printer. Plain programs print back to parseable source; runtime
//! calls in instrumented programs print as pseudo-calls for inspection.

use std::fmt::Write;

use super::ir::*;

pub fn print_program(p: &Program) -> String {
    let mut pr = Printer {
        p,
        out: String::new(),
        body: BodyRef::Init,
    };
    pr.program();
    pr.out
}

pub fn print_expr(p: &Program, body: BodyRef, e: &Expr) -> String {
    let pr = Printer {
        p,
        out: String::new(),
        body,
    };
    pr.expr(e)
}

struct Printer<'a> {
    p: &'a Program,
    out: String,
    body: BodyRef,
}

impl Printer<'_> {
    fn program(&mut self) {
        for s in &self.p.shared {
            let prefix = if s.unprotected { "unprotected " } else { "" };
            let _ = match s.shape {
                Shape::Scalar => write!(self.out, "{prefix}TS int {} = {};", s.name, s.init[0]),
                Shape::Array(n) => {
                    let vals: Vec<String> = s.init.iter().map(|v| v.to_string()).collect();
                    write!(self.out, "{prefix}TS int {}[{n}] = {{{}}};", s.name, vals.join(", "))
                }
            };
            match s.role {
                SharedRole::User => {}
                SharedRole::Buffer(v) => {
                    let _ = write!(self.out, " // privatization buffer of {}", self.p.shared(v).name);
                }
                SharedRole::Bitmask(v) => {
                    let _ = write!(self.out, " // version bitmask of {}", self.p.shared(v).name);
                }
            }
            self.out.push('\n');
        }
        if let Some(init) = &self.p.init {
            self.body = BodyRef::Init;
            self.out.push_str("\ninit ");
            self.block(&init.body, 0);
            self.out.push('\n');
        }
        for f in self.p.function_ids() {
            self.body = BodyRef::Function(f);
            let _ = write!(self.out, "\nvoid {}() ", self.p.function(f).name);
            self.block(&self.p.function(f).body, 0);
            self.out.push('\n');
        }
        for t in self.p.task_ids() {
            self.body = BodyRef::Task(t);
            let task = self.p.task(t);
            let entry = if task.is_entry { "entry " } else { "" };
            let _ = write!(self.out, "\n{entry}task {} ", task.name);
            self.block(&task.body, 0);
            self.out.push('\n');
        }
    }

    fn indent(&mut self, depth: usize) {
        for _ in 0..depth {
            self.out.push_str("    ");
        }
    }

    fn block(&mut self, body: &[Stmt], depth: usize) {
        self.out.push_str("{\n");
        for s in body {
            self.stmt(s, depth + 1);
        }
        self.indent(depth);
        self.out.push('}');
    }

    fn place(&self, place: Place) -> &str {
        match place {
            Place::Shared(id) => &self.p.shared(id).name,
            Place::Local(id) => &self.p.locals(self.body)[id.index()].name,
        }
    }

    fn lvalue(&self, lv: &LValue) -> String {
        match lv {
            LValue::Var(p) => self.place(*p).to_string(),
            LValue::Elem(p, i) => format!("{}[{}]", self.place(*p), self.expr(i)),
        }
    }

    fn expr(&self, e: &Expr) -> String {
        match e {
            Expr::Const(v) => v.to_string(),
            Expr::Load(p) => self.place(*p).to_string(),
            Expr::Elem(p, i) => format!("{}[{}]", self.place(*p), self.expr(i)),
            Expr::Unary(op, inner) => {
                let sym = match op {
                    UnOp::Neg => "-",
                    UnOp::Not => "!",
                    UnOp::BitNot => "~",
                };
                match **inner {
                    Expr::Const(_) | Expr::Unary(..) => format!("{sym}({})", self.expr(inner)),
                    _ => format!("{sym}{}", self.expr(inner)),
                }
            }
            Expr::Binary(op, l, r) => format!("({} {} {})", self.expr(l), op.symbol(), self.expr(r)),
        }
    }

    fn line(&mut self, depth: usize, text: &str) {
        self.indent(depth);
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn stmt(&mut self, s: &Stmt, depth: usize) {
        match s {
            Stmt::Local { id, init } => {
                let decl = &self.p.locals(self.body)[id.index()];
                let text = match (decl.shape, init) {
                    (Shape::Array(n), _) => format!("int {}[{n}];", decl.name),
                    (Shape::Scalar, Some(e)) => format!("int {} = {};", decl.name, self.expr(e)),
                    (Shape::Scalar, None) => format!("int {};", decl.name),
                };
                self.line(depth, &text);
            }
            Stmt::Assign { target, value } => {
                let text = format!("{} = {};", self.lvalue(target), self.expr(value));
                self.line(depth, &text);
            }
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => {
                self.indent(depth);
                let _ = write!(self.out, "if ({}) ", self.expr(cond));
                self.block(then_body, depth);
                if !else_body.is_empty() {
                    self.out.push_str(" else ");
                    self.block(else_body, depth);
                }
                self.out.push('\n');
            }
            Stmt::While {
                cond,
                bound,
                body,
                cond_guards,
            } => {
                if !cond_guards.is_empty() {
                    self.line(depth, "// before each loop test:");
                    for g in cond_guards {
                        let mut sub = Printer {
                            p: self.p,
                            out: String::new(),
                            body: self.body,
                        };
                        sub.stmt(g, 0);
                        for l in sub.out.lines() {
                            self.line(depth, &format!("//   {l}"));
                        }
                    }
                }
                self.indent(depth);
                let _ = write!(self.out, "while ({}) bound {bound} ", self.expr(cond));
                self.block(body, depth);
                self.out.push('\n');
            }
            Stmt::Call(f) => {
                let text = format!("{}();", self.p.function(*f).name);
                self.line(depth, &text);
            }
            Stmt::Transition(t) => {
                let text = format!("transition_to({});", self.p.task(*t).name);
                self.line(depth, &text);
            }
            Stmt::Sample { target, channel } => {
                let text = format!(
                    "sample({}, {});",
                    self.lvalue(target),
                    self.p.channels[channel.index()]
                );
                self.line(depth, &text);
            }
            Stmt::Output(e) => {
                let text = format!("output({});", self.expr(e));
                self.line(depth, &text);
            }
            Stmt::Halt => self.line(depth, "halt;"),
            Stmt::Runtime(call) => self.runtime(call, depth),
        }
    }

    fn runtime(&mut self, call: &RuntimeCall, depth: usize) {
        let name = |id: SharedId| self.p.shared(id).name.clone();
        match call {
            RuntimeCall::Privatize { var, buffer } => {
                self.line(depth, &format!("{} = {}; // privatize", name(*buffer), name(*var)))
            }
            RuntimeCall::PreCommit { var, buffer } => {
                self.line(depth, &format!("pre_commit(&{}, &{}, 1);", name(*var), name(*buffer)))
            }
            RuntimeCall::ReadGate {
                array,
                buffer,
                bitmask,
                index,
            } => {
                let i = self.expr(index);
                self.line(depth, &format!("if (!vbm_test({}, {i})) {{", name(*bitmask)));
                self.line(depth + 1, &format!("{}[{i}] = {}[{i}];", name(*buffer), name(*array)));
                self.line(depth, "}");
            }
            RuntimeCall::WriteGate {
                array,
                buffer,
                bitmask,
                index,
            } => {
                let i = self.expr(index);
                self.line(depth, &format!("if (!vbm_test({}, {i})) {{", name(*bitmask)));
                self.line(depth + 1, &format!("vbm_set({}, {i});", name(*bitmask)));
                self.line(
                    depth + 1,
                    &format!("pre_commit(&{}[{i}], &{}[{i}], 1);", name(*array), name(*buffer)),
                );
                self.line(depth, "}");
            }
            RuntimeCall::Backup { var } => self.line(depth, &format!("backup(&{}, 1);", name(*var))),
            RuntimeCall::BackupGate {
                array,
                bitmask,
                index,
            } => {
                let i = self.expr(index);
                self.line(depth, &format!("if (!vbm_test({}, {i})) {{", name(*bitmask)));
                self.line(depth + 1, &format!("vbm_set({}, {i});", name(*bitmask)));
                self.line(depth + 1, &format!("backup(&{}[{i}], 1);", name(*array)));
                self.line(depth, "}");
            }
            RuntimeCall::Checkpoint => self.line(depth, "checkpoint();"),
        }
    }
}
