//! Basic-block control-flow graphs over task and function bodies.

use super::ir::{Expr, Stmt};

pub type BlockId = usize;

#[derive(Debug, Clone, Copy)]
pub enum Terminator<'a> {
    Goto(BlockId),
    Branch {
        cond: &'a Expr,
        then_to: BlockId,
        else_to: BlockId,
    },
    /// Loop header test.
    Loop {
        cond: &'a Expr,
        bound: u32,
        body: BlockId,
        exit: BlockId,
    },
    /// `transition_to`, `halt`, or the end of a function body.
    Exit,
}

#[derive(Debug, Clone)]
pub struct Block<'a> {
    /// Straight-line statements; a trailing `transition_to`/`halt` is included here.
    pub stmts: Vec<&'a Stmt>,
    pub term: Terminator<'a>,
}

#[derive(Debug, Clone)]
pub struct Cfg<'a> {
    pub blocks: Vec<Block<'a>>,
    /// Latch-to-header edges, one per loop.
    pub back_edges: Vec<(BlockId, BlockId)>,
}

impl<'a> Cfg<'a> {
    pub const ENTRY: BlockId = 0;

    pub fn build(body: &'a [Stmt]) -> Self {
        let mut cfg = Cfg {
            blocks: vec![Block {
                stmts: Vec::new(),
                term: Terminator::Exit,
            }],
            back_edges: Vec::new(),
        };
        cfg.lower(body, Self::ENTRY);
        cfg
    }

    pub fn successors(&self, b: BlockId) -> Vec<BlockId> {
        match self.blocks[b].term {
            Terminator::Goto(t) => vec![t],
            Terminator::Branch { then_to, else_to, .. } => vec![then_to, else_to],
            Terminator::Loop { body, exit, .. } => vec![body, exit],
            Terminator::Exit => Vec::new(),
        }
    }

    pub fn is_back_edge(&self, from: BlockId, to: BlockId) -> bool {
        self.back_edges.contains(&(from, to))
    }

    fn new_block(&mut self) -> BlockId {
        self.blocks.push(Block {
            stmts: Vec::new(),
            term: Terminator::Exit,
        });
        self.blocks.len() - 1
    }

    /// Lowers `body` starting in block `cur`; returns the fall-through block, if any.
    fn lower(&mut self, body: &'a [Stmt], mut cur: BlockId) -> Option<BlockId> {
        for stmt in body {
            match stmt {
                Stmt::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let then_b = self.new_block();
                    let else_b = self.new_block();
                    self.blocks[cur].term = Terminator::Branch {
                        cond,
                        then_to: then_b,
                        else_to: else_b,
                    };
                    let then_end = self.lower(then_body, then_b);
                    let else_end = self.lower(else_body, else_b);
                    if then_end.is_none() && else_end.is_none() {
                        return None;
                    }
                    let join = self.new_block();
                    for end in [then_end, else_end].into_iter().flatten() {
                        self.blocks[end].term = Terminator::Goto(join);
                    }
                    cur = join;
                }
                Stmt::While {
                    cond, bound, body, ..
                } => {
                    let header = if self.blocks[cur].stmts.is_empty() && cur != Self::ENTRY {
                        cur
                    } else {
                        let h = self.new_block();
                        self.blocks[cur].term = Terminator::Goto(h);
                        h
                    };
                    let body_b = self.new_block();
                    let exit = self.new_block();
                    self.blocks[header].term = Terminator::Loop {
                        cond,
                        bound: *bound,
                        body: body_b,
                        exit,
                    };
                    if let Some(latch) = self.lower(body, body_b) {
                        self.blocks[latch].term = Terminator::Goto(header);
                        self.back_edges.push((latch, header));
                    }
                    cur = exit;
                }
                Stmt::Transition(_) | Stmt::Halt => {
                    self.blocks[cur].stmts.push(stmt);
                    self.blocks[cur].term = Terminator::Exit;
                    return None;
                }
                _ => self.blocks[cur].stmts.push(stmt),
            }
        }
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn task_cfg_len(src: &str) -> (usize, usize) {
        let p = parse_program(src).unwrap();
        let cfg = Cfg::build(&p.tasks[0].body);
        (cfg.blocks.len(), cfg.back_edges.len())
    }

    #[test]
    fn straight_line_is_one_block() {
        let src = "TS int c; entry task t { int x = c; c = x + 1; transition_to(t); }";
        assert_eq!(task_cfg_len(src), (1, 0));
    }

    #[test]
    fn if_else_is_a_diamond() {
        let src = "TS int c; entry task t { if (c) { c = 1; } else { c = 2; } halt; }";
        assert_eq!(task_cfg_len(src), (4, 0));
    }

    #[test]
    fn while_has_one_back_edge() {
        let src = "TS int c; entry task t { while (c < 3) bound 4 { c = c + 1; } halt; }";
        let p = parse_program(src).unwrap();
        let cfg = Cfg::build(&p.tasks[0].body);
        assert_eq!(cfg.back_edges.len(), 1);
        let (latch, header) = cfg.back_edges[0];
        assert!(matches!(cfg.blocks[header].term, Terminator::Loop { .. }));
        assert!(cfg.successors(latch).contains(&header));
    }
}
