//! Recursive-descent parser producing a position-annotated surface tree.
//! Name resolution and validation happen in [`super::resolve`].

use super::error::{Diagnostic, DiagnosticKind, Pos};
use super::ir::{BinOp, UnOp, Word};
use super::lexer::{tokenize, Tok, Token};

pub(crate) const KEYWORDS: &[&str] = &[
    "TS",
    "int",
    "task",
    "entry",
    "void",
    "init",
    "if",
    "else",
    "while",
    "bound",
    "transition_to",
    "sample",
    "output",
    "halt",
    "unprotected",
];

#[derive(Debug, Clone)]
pub(crate) struct SDecl {
    pub pos: Pos,
    pub name: String,
    pub len: Option<usize>,
    pub init: Vec<Word>,
    pub unprotected: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct SBody {
    pub pos: Pos,
    pub name: String,
    pub is_entry: bool,
    pub body: Vec<SStmt>,
}

#[derive(Debug, Clone)]
pub(crate) struct SProgram {
    pub decls: Vec<SDecl>,
    pub tasks: Vec<SBody>,
    pub functions: Vec<SBody>,
    pub init: Option<SBody>,
}

#[derive(Debug, Clone)]
pub(crate) struct SStmt {
    pub pos: Pos,
    pub kind: SStmtKind,
}

#[derive(Debug, Clone)]
pub(crate) enum SStmtKind {
    Local {
        name: String,
        len: Option<usize>,
        init: Option<SExpr>,
    },
    Assign {
        target: SLValue,
        value: SExpr,
    },
    If {
        cond: SExpr,
        then_body: Vec<SStmt>,
        else_body: Vec<SStmt>,
    },
    While {
        cond: SExpr,
        bound: u32,
        body: Vec<SStmt>,
    },
    Call(String),
    Transition(String),
    Sample {
        target: SLValue,
        channel: String,
    },
    Output(SExpr),
    Halt,
}

#[derive(Debug, Clone)]
pub(crate) struct SLValue {
    pub pos: Pos,
    pub name: String,
    pub index: Option<SExpr>,
}

#[derive(Debug, Clone)]
pub(crate) struct SExpr {
    pub pos: Pos,
    pub kind: SExprKind,
}

#[derive(Debug, Clone)]
pub(crate) enum SExprKind {
    Int(Word),
    Name(String),
    Index(String, Box<SExpr>),
    Unary(UnOp, Box<SExpr>),
    Binary(BinOp, Box<SExpr>, Box<SExpr>),
}

type PResult<T> = Result<T, Diagnostic>;

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

pub(crate) fn parse_surface(src: &str) -> PResult<SProgram> {
    let mut p = Parser {
        toks: tokenize(src)?,
        at: 0,
    };
    p.program()
}

fn syntax(pos: Pos, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::new(pos, DiagnosticKind::Syntax(msg.into()))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.at + n).min(self.toks.len() - 1)].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<()> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{p}`, found {}", describe(self.peek()))))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.is_kw(kw) {
            self.bump();
            Ok(())
        } else {
            Err(syntax(self.pos(), format!("expected `{kw}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> PResult<(Pos, String)> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.bump();
                Ok((pos, s))
            }
            other => Err(syntax(pos, format!("expected identifier, found {}", describe(&other)))),
        }
    }

    fn int(&mut self) -> PResult<Word> {
        let pos = self.pos();
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            ref other => Err(syntax(pos, format!("expected integer, found {}", describe(other)))),
        }
    }

    fn signed_int(&mut self) -> PResult<Word> {
        if self.eat_punct("-") {
            Ok(self.int()?.wrapping_neg())
        } else {
            self.int()
        }
    }

    fn count(&mut self, what: &str) -> PResult<usize> {
        let pos = self.pos();
        let v = self.int()?;
        if v < 1 {
            return Err(Diagnostic::new(
                pos,
                DiagnosticKind::Invalid(format!("{what} must be positive, got {v}")),
            ));
        }
        Ok(v as usize)
    }

    fn program(&mut self) -> PResult<SProgram> {
        let mut prog = SProgram {
            decls: Vec::new(),
            tasks: Vec::new(),
            functions: Vec::new(),
            init: None,
        };
        while *self.peek() != Tok::Eof {
            let pos = self.pos();
            if self.is_kw("TS") || self.is_kw("unprotected") {
                prog.decls.push(self.ts_decl()?);
            } else if self.is_kw("entry") || self.is_kw("task") {
                let is_entry = self.is_kw("entry");
                if is_entry {
                    self.bump();
                }
                self.expect_kw("task")?;
                let (pos, name) = self.ident()?;
                let body = self.block()?;
                prog.tasks.push(SBody {
                    pos,
                    name,
                    is_entry,
                    body,
                });
            } else if self.is_kw("void") {
                self.bump();
                let (pos, name) = self.ident()?;
                self.expect_punct("(")?;
                self.expect_punct(")")?;
                let body = self.block()?;
                prog.functions.push(SBody {
                    pos,
                    name,
                    is_entry: false,
                    body,
                });
            } else if self.is_kw("init") {
                self.bump();
                if prog.init.is_some() {
                    return Err(Diagnostic::new(pos, DiagnosticKind::Duplicate("init block", "init".into())));
                }
                let body = self.block()?;
                prog.init = Some(SBody {
                    pos,
                    name: "init".into(),
                    is_entry: false,
                    body,
                });
            } else {
                return Err(syntax(
                    pos,
                    format!("expected `TS`, `task`, `void` or `init`, found {}", describe(self.peek())),
                ));
            }
        }
        Ok(prog)
    }

    fn ts_decl(&mut self) -> PResult<SDecl> {
        let unprotected = if self.is_kw("unprotected") {
            self.bump();
            true
        } else {
            false
        };
        self.expect_kw("TS")?;
        self.expect_kw("int")?;
        let (pos, name) = self.ident()?;
        let len = if self.eat_punct("[") {
            let n = self.count("array length")?;
            self.expect_punct("]")?;
            Some(n)
        } else {
            None
        };
        let mut init = Vec::new();
        if self.eat_punct("=") {
            if self.eat_punct("{") {
                if !self.is_punct("}") {
                    loop {
                        init.push(self.signed_int()?);
                        if !self.eat_punct(",") || self.is_punct("}") {
                            break;
                        }
                    }
                }
                self.expect_punct("}")?;
                if len.is_none() {
                    return Err(Diagnostic::new(
                        pos,
                        DiagnosticKind::Invalid(format!("scalar `{name}` given a list initializer")),
                    ));
                }
            } else {
                init.push(self.signed_int()?);
                if len.is_some() {
                    return Err(Diagnostic::new(
                        pos,
                        DiagnosticKind::Invalid(format!("array `{name}` needs a `{{...}}` initializer")),
                    ));
                }
            }
        }
        self.expect_punct(";")?;
        let words = len.unwrap_or(1);
        if init.len() > words {
            return Err(Diagnostic::new(
                pos,
                DiagnosticKind::Invalid(format!(
                    "`{name}` has {} initial values but only {words} elements",
                    init.len()
                )),
            ));
        }
        init.resize(words, 0);
        Ok(SDecl {
            pos,
            name,
            len,
            init,
            unprotected,
        })
    }

    fn block(&mut self) -> PResult<Vec<SStmt>> {
        self.expect_punct("{")?;
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if *self.peek() == Tok::Eof {
                return Err(syntax(self.pos(), "unexpected end of input, expected `}`"));
            }
            out.push(self.stmt()?);
        }
        self.bump();
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<SStmt> {
        let pos = self.pos();
        let kind = if self.is_kw("int") {
            self.bump();
            let (_, name) = self.ident()?;
            let len = if self.eat_punct("[") {
                let n = self.count("array length")?;
                self.expect_punct("]")?;
                Some(n)
            } else {
                None
            };
            let init = if self.eat_punct("=") {
                if len.is_some() {
                    return Err(syntax(pos, "local arrays cannot have an initializer"));
                }
                Some(self.expr()?)
            } else {
                None
            };
            self.expect_punct(";")?;
            SStmtKind::Local { name, len, init }
        } else if self.is_kw("if") {
            return self.if_stmt();
        } else if self.is_kw("while") {
            self.bump();
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            self.expect_kw("bound")?;
            let bpos = self.pos();
            let bound = self.count("loop bound")?;
            let bound = u32::try_from(bound)
                .map_err(|_| Diagnostic::new(bpos, DiagnosticKind::Invalid("loop bound too large".into())))?;
            let body = self.block()?;
            SStmtKind::While { cond, bound, body }
        } else if self.is_kw("transition_to") {
            self.bump();
            self.expect_punct("(")?;
            let (_, name) = self.ident()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            SStmtKind::Transition(name)
        } else if self.is_kw("sample") {
            self.bump();
            self.expect_punct("(")?;
            let target = self.lvalue()?;
            self.expect_punct(",")?;
            let (_, channel) = self.ident()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            SStmtKind::Sample { target, channel }
        } else if self.is_kw("output") {
            self.bump();
            self.expect_punct("(")?;
            let e = self.expr()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            SStmtKind::Output(e)
        } else if self.is_kw("halt") {
            self.bump();
            self.expect_punct(";")?;
            SStmtKind::Halt
        } else if matches!(self.peek(), Tok::Ident(_)) && matches!(self.peek_at(1), Tok::Punct("(")) {
            let (_, name) = self.ident()?;
            self.expect_punct("(")?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            SStmtKind::Call(name)
        } else {
            let target = self.lvalue()?;
            self.expect_punct("=")?;
            let value = self.expr()?;
            self.expect_punct(";")?;
            SStmtKind::Assign { target, value }
        };
        Ok(SStmt { pos, kind })
    }

    fn if_stmt(&mut self) -> PResult<SStmt> {
        let pos = self.pos();
        self.expect_kw("if")?;
        self.expect_punct("(")?;
        let cond = self.expr()?;
        self.expect_punct(")")?;
        let then_body = self.block()?;
        let else_body = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                vec![self.if_stmt()?]
            } else {
                self.block()?
            }
        } else {
            Vec::new()
        };
        Ok(SStmt {
            pos,
            kind: SStmtKind::If {
                cond,
                then_body,
                else_body,
            },
        })
    }

    fn lvalue(&mut self) -> PResult<SLValue> {
        let (pos, name) = self.ident()?;
        let index = if self.eat_punct("[") {
            let e = self.expr()?;
            self.expect_punct("]")?;
            Some(e)
        } else {
            None
        };
        Ok(SLValue { pos, name, index })
    }

    fn expr(&mut self) -> PResult<SExpr> {
        self.binary(0)
    }

    fn binary(&mut self, level: usize) -> PResult<SExpr> {
        const LEVELS: &[&[(&str, BinOp)]] = &[
            &[("||", BinOp::LogicOr)],
            &[("&&", BinOp::LogicAnd)],
            &[("|", BinOp::Or)],
            &[("^", BinOp::Xor)],
            &[("&", BinOp::And)],
            &[("==", BinOp::Eq), ("!=", BinOp::Ne)],
            &[("<=", BinOp::Le), (">=", BinOp::Ge), ("<", BinOp::Lt), (">", BinOp::Gt)],
            &[("<<", BinOp::Shl), (">>", BinOp::Shr)],
            &[("+", BinOp::Add), ("-", BinOp::Sub)],
            &[("*", BinOp::Mul), ("/", BinOp::Div), ("%", BinOp::Rem)],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        'scan: loop {
            for (sym, op) in LEVELS[level] {
                if self.is_punct(sym) {
                    let pos = self.pos();
                    self.bump();
                    let rhs = self.binary(level + 1)?;
                    lhs = SExpr {
                        pos,
                        kind: SExprKind::Binary(*op, Box::new(lhs), Box::new(rhs)),
                    };
                    continue 'scan;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> PResult<SExpr> {
        let pos = self.pos();
        // `-7` is a literal; `-(7)` and `-x` are negations.
        if self.is_punct("-") {
            if let Tok::Int(v) = *self.peek_at(1) {
                self.bump();
                self.bump();
                return Ok(SExpr {
                    pos,
                    kind: SExprKind::Int(v.wrapping_neg()),
                });
            }
        }
        for (sym, op) in [("-", UnOp::Neg), ("!", UnOp::Not), ("~", UnOp::BitNot)] {
            if self.eat_punct(sym) {
                let inner = self.unary()?;
                return Ok(SExpr {
                    pos,
                    kind: SExprKind::Unary(op, Box::new(inner)),
                });
            }
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<SExpr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(SExpr {
                    pos,
                    kind: SExprKind::Int(v),
                })
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(_) => {
                let (pos, name) = self.ident()?;
                if self.eat_punct("[") {
                    let idx = self.expr()?;
                    self.expect_punct("]")?;
                    Ok(SExpr {
                        pos,
                        kind: SExprKind::Index(name, Box::new(idx)),
                    })
                } else {
                    Ok(SExpr {
                        pos,
                        kind: SExprKind::Name(name),
                    })
                }
            }
            other => Err(syntax(pos, format!("expected expression, found {}", describe(&other)))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Eof => "end of input".into(),
    }
}
