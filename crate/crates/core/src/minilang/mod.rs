//! A small imperative language used as the source front end.
//!
//! One source text holds exactly one function:
//!
//! ```text
//! function := "fn" IDENT "(" [param {"," param}] ")" block
//! param    := IDENT ":" type
//! type     := ("int" | "bool" | "str") ["[" "]"]
//! block    := "{" {stmt} "}"
//! stmt     := "let" IDENT [":" type] "=" expr ";"
//!           | IDENT ["[" expr "]"] "=" expr ";"
//!           | "if" "(" expr ")" block ["else" (block | if-stmt)]
//!           | "while" "(" expr ")" block
//!           | "return" [expr] ";"
//!           | call ";"
//! expr     := or
//! or       := and {"||" and}
//! and      := cmp {"&&" cmp}
//! cmp      := sum {("==" | "!=" | "<" | "<=" | ">" | ">=") sum}
//! sum      := term {("+" | "-") term}
//! term     := unary {("*" | "/" | "%") unary}
//! unary    := ("!" | "-") unary | primary
//! primary  := INT | STRING | "true" | "false" | call | IDENT "[" expr "]"
//!           | IDENT | "(" expr ")"
//! call     := IDENT "(" [expr {"," expr}] ")"
//! ```
//!
//! `//` starts a comment running to end of line.

mod ast;
mod lexer;
mod parser;

use std::fmt;

pub use ast::{Ast, AstNode, NodeKind};
pub use lexer::{tokenize, Span, Token, TokenKind, KEYWORDS};
pub use parser::parse;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>) -> Self {
        ParseError {
            span,
            message: message.into(),
        }
    }

    pub(crate) fn expected(span: Span, expected: &str, found: &str) -> Self {
        ParseError::new(span, format!("expected {expected}, found {found}"))
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

/// Tokenizes and parses in one step.
pub fn parse_source(source: &str) -> Result<Ast, ParseError> {
    parse(&tokenize(source)?)
}

/// Token lexemes joined by single spaces. Comments and layout are dropped,
/// so two sources differing only in whitespace or comments normalize equal.
pub fn normalize(source: &str) -> Result<String, ParseError> {
    let toks = tokenize(source)?;
    Ok(toks
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_ignores_layout_and_comments() {
        let a = normalize("fn f() {\n  return 0; // done\n}").unwrap();
        let b = normalize("fn f(){return 0;}").unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn lexemes_and_trivia_reconstruct_source(
            parts in proptest::collection::vec(
                prop_oneof![
                    Just("x"), Just("foo_1"), Just("42"), Just("\"s\""), Just("<="),
                    Just("&&"), Just("("), Just(")"), Just(";"), Just("let"), Just("-"),
                ],
                0..20,
            ),
            seps in proptest::collection::vec(prop_oneof![Just(" "), Just("\n"), Just("  // c\n")], 20),
        ) {
            let mut src = String::new();
            for (i, p) in parts.iter().enumerate() {
                src.push_str(seps[i]);
                src.push_str(p);
            }
            let toks = tokenize(&src).unwrap();
            let mut rebuilt = String::new();
            let mut cursor = 0;
            for t in &toks {
                let trivia = &src[cursor..t.offset];
                prop_assert!(trivia.trim().is_empty() || trivia.trim_start().starts_with("//"));
                rebuilt.push_str(trivia);
                rebuilt.push_str(&t.text);
                cursor = t.offset + t.text.len();
            }
            rebuilt.push_str(&src[cursor..]);
            prop_assert_eq!(rebuilt, src);
        }
    }
}
