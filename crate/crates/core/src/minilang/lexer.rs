use super::ParseError;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Lexical category of a [`Token`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    IntLiteral,
    StringLiteral,
    Keyword,
    Operator,
    Punctuation,
}

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
    /// Byte offset of the first character in the source.
    pub offset: usize,
}

pub const KEYWORDS: &[&str] = &[
    "fn", "let", "if", "else", "while", "return", "true", "false", "int", "bool", "str",
];

const TWO_CHAR_OPS: &[&str] = &["==", "!=", "<=", ">=", "&&", "||"];
const ONE_CHAR_OPS: &[char] = &['+', '-', '*', '/', '%', '<', '>', '!', '='];
const PUNCTUATION: &[char] = &['(', ')', '{', '}', '[', ']', ',', ';', ':'];

/// Splits `source` into tokens. Whitespace and `//` line comments are
/// trivia and produce no tokens.
pub fn tokenize(source: &str) -> Result<Vec<Token>, ParseError> {
    let mut lexer = Lexer {
        src: source,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut tokens = Vec::new();
    while let Some(tok) = lexer.next_token()? {
        tokens.push(tok);
    }
    Ok(tokens)
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek() {
                Some(c) if c.is_whitespace() => {
                    self.bump();
                }
                Some('/') if self.peek2() == Some('/') => {
                    while let Some(c) = self.peek() {
                        if c == '\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                _ => return,
            }
        }
    }

    fn next_token(&mut self) -> Result<Option<Token>, ParseError> {
        self.skip_trivia();
        let start = self.pos;
        let span = Span {
            line: self.line,
            col: self.col,
        };
        let Some(c) = self.peek() else {
            return Ok(None);
        };
        let kind = if c.is_ascii_alphabetic() || c == '_' {
            while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                self.bump();
            }
            if KEYWORDS.contains(&&self.src[start..self.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if c.is_ascii_digit() {
            while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                self.bump();
            }
            TokenKind::IntLiteral
        } else if c == '"' {
            self.bump();
            loop {
                match self.bump() {
                    Some('"') => break,
                    Some('\\') => {
                        if self.bump().is_none() {
                            return Err(ParseError::new(span, "unterminated string literal"));
                        }
                    }
                    Some('\n') | None => {
                        return Err(ParseError::new(span, "unterminated string literal"));
                    }
                    Some(_) => {}
                }
            }
            TokenKind::StringLiteral
        } else if self.src[self.pos..].len() >= 2
            && TWO_CHAR_OPS.iter().any(|op| self.src[self.pos..].starts_with(op))
        {
            self.bump();
            self.bump();
            TokenKind::Operator
        } else if ONE_CHAR_OPS.contains(&c) {
            self.bump();
            TokenKind::Operator
        } else if PUNCTUATION.contains(&c) {
            self.bump();
            TokenKind::Punctuation
        } else {
            return Err(ParseError::new(
                span,
                format!("illegal character {c:?}"),
            ));
        };
        Ok(Some(Token {
            kind,
            text: self.src[start..self.pos].to_string(),
            span,
            offset: start,
        }))
    }
}
