use super::error::{Diagnostic, DiagnosticKind, Pos};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
    Eof,
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

const PUNCT: &[&str] = &[
    "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "{", "}", "(", ")", "[", "]", ";", ",", "=",
    "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if bytes[*i] == b'\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    'outer: while i < bytes.len() {
        let c = bytes[i];
        let pos = Pos { line, col };
        if c.is_ascii_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            out.push(Token {
                tok: Tok::Ident(src[start..i].to_string()),
                pos,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                advance(&mut i, &mut line, &mut col, 1);
            }
            let text = src[start..i].replace('_', "");
            let parsed = if let Some(h) = text.strip_prefix("0x").or(text.strip_prefix("0X")) {
                i64::from_str_radix(h, 16)
            } else if let Some(b) = text.strip_prefix("0b").or(text.strip_prefix("0B")) {
                i64::from_str_radix(b, 2)
            } else {
                text.parse::<i64>()
            };
            let value = parsed.map_err(|_| {
                Diagnostic::new(pos, DiagnosticKind::Syntax(format!("bad integer literal `{text}`")))
            })?;
            out.push(Token {
                tok: Tok::Int(value),
                pos,
            });
            continue;
        }
        for p in PUNCT {
            if src[i..].starts_with(p) {
                advance(&mut i, &mut line, &mut col, p.len());
                out.push(Token {
                    tok: Tok::Punct(p),
                    pos,
                });
                continue 'outer;
            }
        }
        let ch = src[i..].chars().next().unwrap_or('?');
        return Err(Diagnostic::new(
            pos,
            DiagnosticKind::Syntax(format!("unexpected character `{ch}`")),
        ));
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}
