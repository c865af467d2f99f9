//! Resolved program representation shared by every later stage.
//!
//! Names are resolved to dense ids at parse time. Instrumentation reuses the
//! same tree: generated buffers are appended to [`Program::shared`] and
//! runtime calls appear as [`Stmt::Runtime`] statements.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Machine word of the simulated device.
pub type Word = i64;

macro_rules! id_type {
    ($(#[$m:meta])* $name:ident) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

id_type!(
    /// Index into [`Program::shared`].
    SharedId
);
id_type!(
    /// Index into [`Program::tasks`].
    TaskId
);
id_type!(
    /// Index into [`Program::functions`].
    FuncId
);
id_type!(
    /// Index into the locals table of the enclosing body.
    LocalId
);
id_type!(
    /// Index into [`Program::channels`].
    ChannelId
);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Array(usize),
}

impl Shape {
    pub fn words(self) -> usize {
        match self {
            Shape::Scalar => 1,
            Shape::Array(n) => n,
        }
    }

    pub fn is_array(self) -> bool {
        matches!(self, Shape::Array(_))
    }
}

/// Why a non-volatile symbol exists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SharedRole {
    /// Declared by the programmer with `TS`.
    User,
    /// Privatization buffer of the given variable (redo mode).
    Buffer(SharedId),
    /// Version-backed bitmask guarding the given array.
    Bitmask(SharedId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedDecl {
    pub name: String,
    pub shape: Shape,
    /// One value per word; always `shape.words()` long.
    pub init: Vec<Word>,
    /// Excluded from W-A-R protection (hazard demonstrations).
    pub unprotected: bool,
    pub role: SharedRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalDecl {
    pub name: String,
    pub shape: Shape,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub is_entry: bool,
    pub locals: Vec<LocalDecl>,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub locals: Vec<LocalDecl>,
    pub body: Vec<Stmt>,
}

/// Code run on every boot before resumption; touches volatile state only.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InitBlock {
    pub locals: Vec<LocalDecl>,
    pub body: Vec<Stmt>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub shared: Vec<SharedDecl>,
    pub tasks: Vec<Task>,
    pub functions: Vec<Function>,
    pub entry: TaskId,
    pub init: Option<InitBlock>,
    /// Input channel names, sorted.
    pub channels: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Place {
    Shared(SharedId),
    Local(LocalId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LValue {
    Var(Place),
    Elem(Place, Expr),
}

impl LValue {
    pub fn place(&self) -> Place {
        match self {
            LValue::Var(p) | LValue::Elem(p, _) => *p,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnOp {
    Neg,
    Not,
    BitNot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    LogicAnd,
    LogicOr,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
            BinOp::Shl => "<<",
            BinOp::Shr => ">>",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::LogicAnd => "&&",
            BinOp::LogicOr => "||",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expr {
    Const(Word),
    Load(Place),
    Elem(Place, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Visits every memory read in evaluation order (index reads before the element read).
    pub fn for_each_read(&self, f: &mut impl FnMut(&Expr)) {
        match self {
            Expr::Const(_) => {}
            Expr::Load(_) => f(self),
            Expr::Elem(_, idx) => {
                idx.for_each_read(f);
                f(self);
            }
            Expr::Unary(_, e) => e.for_each_read(f),
            Expr::Binary(_, l, r) => {
                l.for_each_read(f);
                r.for_each_read(f);
            }
        }
    }
}

/// Runtime-library calls inserted by instrumentation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RuntimeCall {
    /// Redo: copy a scalar into its privatization buffer at task entry.
    Privatize { var: SharedId, buffer: SharedId },
    /// Redo: append a scalar's commit entry before a transition.
    PreCommit { var: SharedId, buffer: SharedId },
    /// Redo: `if !vbm_test(bitmask, i) { buffer[i] = array[i] }` before an element read.
    ReadGate {
        array: SharedId,
        buffer: SharedId,
        bitmask: SharedId,
        index: Expr,
    },
    /// Redo: `if !vbm_test(bitmask, i) { vbm_set; pre_commit(array[i], buffer[i]) }` before an element write.
    WriteGate {
        array: SharedId,
        buffer: SharedId,
        bitmask: SharedId,
        index: Expr,
    },
    /// Undo: log a scalar's current value at task entry.
    Backup { var: SharedId },
    /// Undo: `if !vbm_test(bitmask, i) { vbm_set; backup(array[i]) }` before an element write.
    BackupGate {
        array: SharedId,
        bitmask: SharedId,
        index: Expr,
    },
    /// Checkpoint baseline: copy all task-shared state into the inactive snapshot.
    Checkpoint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stmt {
    /// Local declaration. Arrays are zero-filled; scalars without an initializer stay unset.
    Local { id: LocalId, init: Option<Expr> },
    Assign { target: LValue, value: Expr },
    If {
        cond: Expr,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
    While {
        cond: Expr,
        bound: u32,
        body: Vec<Stmt>,
        /// Instrumentation run before every evaluation of `cond`.
        cond_guards: Vec<Stmt>,
    },
    Call(FuncId),
    Transition(TaskId),
    Sample { target: LValue, channel: ChannelId },
    Output(Expr),
    Halt,
    Runtime(RuntimeCall),
}

impl Stmt {
    pub fn is_terminator(&self) -> bool {
        matches!(self, Stmt::Transition(_) | Stmt::Halt)
    }
}

/// Which code body a statement belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BodyRef {
    Task(TaskId),
    Function(FuncId),
    Init,
}

impl Program {
    pub fn shared(&self, id: SharedId) -> &SharedDecl {
        &self.shared[id.index()]
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn function(&self, id: FuncId) -> &Function {
        &self.functions[id.index()]
    }

    pub fn task_id(&self, name: &str) -> Option<TaskId> {
        self.tasks
            .iter()
            .position(|t| t.name == name)
            .map(|i| TaskId(i as u32))
    }

    pub fn shared_id(&self, name: &str) -> Option<SharedId> {
        self.shared
            .iter()
            .position(|s| s.name == name)
            .map(|i| SharedId(i as u32))
    }

    pub fn function_id(&self, name: &str) -> Option<FuncId> {
        self.functions
            .iter()
            .position(|f| f.name == name)
            .map(|i| FuncId(i as u32))
    }

    /// Ids of programmer-declared task-shared variables.
    pub fn user_shared(&self) -> impl Iterator<Item = SharedId> + '_ {
        self.shared
            .iter()
            .enumerate()
            .filter(|(_, s)| s.role == SharedRole::User)
            .map(|(i, _)| SharedId(i as u32))
    }

    /// Total words of programmer-declared task-shared state.
    pub fn user_footprint(&self) -> usize {
        self.user_shared().map(|id| self.shared(id).shape.words()).sum()
    }

    pub fn body(&self, body: BodyRef) -> &[Stmt] {
        match body {
            BodyRef::Task(t) => &self.task(t).body,
            BodyRef::Function(f) => &self.function(f).body,
            BodyRef::Init => self.init.as_ref().map(|i| i.body.as_slice()).unwrap_or(&[]),
        }
    }

    pub fn locals(&self, body: BodyRef) -> &[LocalDecl] {
        match body {
            BodyRef::Task(t) => &self.task(t).locals,
            BodyRef::Function(f) => &self.function(f).locals,
            BodyRef::Init => self.init.as_ref().map(|i| i.locals.as_slice()).unwrap_or(&[]),
        }
    }

    pub fn task_ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len() as u32).map(TaskId)
    }

    pub fn function_ids(&self) -> impl Iterator<Item = FuncId> {
        (0..self.functions.len() as u32).map(FuncId)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Array(n) => write!(f, "array[{n}]"),
        }
    }
}

/// Calls `f` on every statement in `body`, recursing into nested blocks and loop guards.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in body {
        f(stmt);
        match stmt {
            Stmt::If {
                then_body,
                else_body,
                ..
            } => {
                walk_stmts(then_body, f);
                walk_stmts(else_body, f);
            }
            Stmt::While {
                body, cond_guards, ..
            } => {
                walk_stmts(cond_guards, f);
                walk_stmts(body, f);
            }
            _ => {}
        }
    }
}
