use super::ast::{Ast, NodeKind, Tree};
use super::lexer::{Span, Token, TokenKind};
use super::ParseError;

/// Parses one function definition from a token stream.
pub fn parse(tokens: &[Token]) -> Result<Ast, ParseError> {
    let mut p = Parser { tokens, pos: 0 };
    let func = p.function()?;
    if let Some(t) = p.peek() {
        return Err(ParseError::expected(t.span, "end of input", &t.text));
    }
    Ok(func.into_ast())
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

const COMPARISONS: &[&str] = &["==", "!=", "<", "<=", ">", ">="];

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + offset)
    }

    fn at(&self, text: &str) -> bool {
        self.peek().is_some_and(|t| t.text == text && t.kind != TokenKind::StringLiteral)
    }

    fn eof_span(&self) -> Span {
        self.tokens.last().map(|t| t.span).unwrap_or(Span { line: 1, col: 1 })
    }

    fn error_here(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError::expected(t.span, expected, &t.text),
            None => ParseError::expected(self.eof_span(), expected, "end of input"),
        }
    }

    fn expect(&mut self, text: &str) -> Result<Token, ParseError> {
        if self.at(text) {
            self.pos += 1;
            Ok(self.tokens[self.pos - 1].clone())
        } else {
            Err(self.error_here(&format!("'{text}'")))
        }
    }

    fn expect_ident(&mut self) -> Result<Token, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => {
                self.pos += 1;
                Ok(t.clone())
            }
            _ => Err(self.error_here("identifier")),
        }
    }

    fn function(&mut self) -> Result<Tree, ParseError> {
        let mut f = Tree::new(NodeKind::Function);
        f.tokens.push(self.expect("fn")?);
        f.tokens.push(self.expect_ident()?);
        f.tokens.push(self.expect("(")?);
        if !self.at(")") {
            loop {
                f.children.push(self.param()?);
                if self.at(",") {
                    f.tokens.push(self.expect(",")?);
                } else {
                    break;
                }
            }
        }
        f.tokens.push(self.expect(")")?);
        f.children.push(self.block()?);
        Ok(f)
    }

    fn param(&mut self) -> Result<Tree, ParseError> {
        let mut p = Tree::new(NodeKind::Param);
        p.tokens.push(self.expect_ident()?);
        p.tokens.push(self.expect(":")?);
        self.type_name(&mut p.tokens)?;
        Ok(p)
    }

    fn type_name(&mut self, into: &mut Vec<Token>) -> Result<(), ParseError> {
        if ["int", "bool", "str"].iter().any(|t| self.at(t)) {
            into.push(self.tokens[self.pos].clone());
            self.pos += 1;
        } else {
            return Err(self.error_here("type"));
        }
        if self.at("[") {
            into.push(self.expect("[")?);
            into.push(self.expect("]")?);
        }
        Ok(())
    }

    fn block(&mut self) -> Result<Tree, ParseError> {
        let mut b = Tree::new(NodeKind::Block);
        b.tokens.push(self.expect("{")?);
        while !self.at("}") {
            if self.peek().is_none() {
                return Err(self.error_here("'}'"));
            }
            b.children.push(self.statement()?);
        }
        b.tokens.push(self.expect("}")?);
        Ok(b)
    }

    fn statement(&mut self) -> Result<Tree, ParseError> {
        if self.at("let") {
            let mut d = Tree::new(NodeKind::Decl);
            d.tokens.push(self.expect("let")?);
            d.tokens.push(self.expect_ident()?);
            if self.at(":") {
                d.tokens.push(self.expect(":")?);
                self.type_name(&mut d.tokens)?;
            }
            d.tokens.push(self.expect("=")?);
            d.children.push(self.expr()?);
            d.tokens.push(self.expect(";")?);
            return Ok(d);
        }
        if self.at("if") {
            return self.if_statement();
        }
        if self.at("while") {
            let mut w = Tree::new(NodeKind::While);
            w.tokens.push(self.expect("while")?);
            w.tokens.push(self.expect("(")?);
            w.children.push(self.expr()?);
            w.tokens.push(self.expect(")")?);
            w.children.push(self.block()?);
            return Ok(w);
        }
        if self.at("return") {
            let mut r = Tree::new(NodeKind::Return);
            r.tokens.push(self.expect("return")?);
            if !self.at(";") {
                r.children.push(self.expr()?);
            }
            r.tokens.push(self.expect(";")?);
            return Ok(r);
        }
        let next = self.peek_at(1).map(|t| t.text.as_str());
        match (self.peek(), next) {
            (Some(t), Some("(")) if t.kind == TokenKind::Identifier => {
                let mut call = self.call()?;
                call.tokens.push(self.expect(";")?);
                Ok(call)
            }
            (Some(t), Some("[")) if t.kind == TokenKind::Identifier => {
                let mut a = Tree::new(NodeKind::Assign);
                a.children.push(self.index()?);
                a.tokens.push(self.expect("=")?);
                a.children.push(self.expr()?);
                a.tokens.push(self.expect(";")?);
                Ok(a)
            }
            (Some(t), _) if t.kind == TokenKind::Identifier => {
                let mut a = Tree::new(NodeKind::Assign);
                a.tokens.push(self.expect_ident()?);
                a.tokens.push(self.expect("=")?);
                a.children.push(self.expr()?);
                a.tokens.push(self.expect(";")?);
                Ok(a)
            }
            _ => Err(self.error_here("statement")),
        }
    }

    fn if_statement(&mut self) -> Result<Tree, ParseError> {
        let mut i = Tree::new(NodeKind::If);
        i.tokens.push(self.expect("if")?);
        i.tokens.push(self.expect("(")?);
        i.children.push(self.expr()?);
        i.tokens.push(self.expect(")")?);
        i.children.push(self.block()?);
        if self.at("else") {
            i.tokens.push(self.expect("else")?);
            if self.at("if") {
                // `else if` nests the inner statement in a token-less block
                let mut wrapper = Tree::new(NodeKind::Block);
                wrapper.children.push(self.if_statement()?);
                i.children.push(wrapper);
            } else {
                i.children.push(self.block()?);
            }
        }
        Ok(i)
    }

    fn call(&mut self) -> Result<Tree, ParseError> {
        let mut c = Tree::new(NodeKind::Call);
        c.tokens.push(self.expect_ident()?);
        c.tokens.push(self.expect("(")?);
        if !self.at(")") {
            loop {
                c.children.push(self.expr()?);
                if self.at(",") {
                    c.tokens.push(self.expect(",")?);
                } else {
                    break;
                }
            }
        }
        c.tokens.push(self.expect(")")?);
        Ok(c)
    }

    fn index(&mut self) -> Result<Tree, ParseError> {
        let mut base = Tree::new(NodeKind::Var);
        base.tokens.push(self.expect_ident()?);
        let mut ix = Tree::new(NodeKind::Index);
        ix.tokens.push(self.expect("[")?);
        ix.children.push(base);
        ix.children.push(self.expr()?);
        ix.tokens.push(self.expect("]")?);
        Ok(ix)
    }

    fn expr(&mut self) -> Result<Tree, ParseError> {
        self.binary_level(0)
    }

    fn binary_level(&mut self, level: usize) -> Result<Tree, ParseError> {
        const LEVELS: [&[&str]; 5] = [&["||"], &["&&"], COMPARISONS, &["+", "-"], &["*", "/", "%"]];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary_level(level + 1)?;
        while let Some(t) = self.peek() {
            if t.kind != TokenKind::Operator || !LEVELS[level].contains(&t.text.as_str()) {
                break;
            }
            self.pos += 1;
            let rhs = self.binary_level(level + 1)?;
            let mut op = Tree::new(NodeKind::BinaryOp);
            op.tokens.push(t.clone());
            op.children = vec![lhs, rhs];
            lhs = op;
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Tree, ParseError> {
        if self.at("!") || self.at("-") {
            let mut u = Tree::new(NodeKind::UnaryOp);
            u.tokens.push(self.tokens[self.pos].clone());
            self.pos += 1;
            u.children.push(self.unary()?);
            return Ok(u);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Tree, ParseError> {
        let Some(t) = self.peek() else {
            return Err(self.error_here("expression"));
        };
        match t.kind {
            TokenKind::IntLiteral | TokenKind::StringLiteral => {
                self.pos += 1;
                let mut lit = Tree::new(NodeKind::Literal);
                lit.tokens.push(t.clone());
                Ok(lit)
            }
            TokenKind::Keyword if t.text == "true" || t.text == "false" => {
                self.pos += 1;
                let mut lit = Tree::new(NodeKind::Literal);
                lit.tokens.push(t.clone());
                Ok(lit)
            }
            TokenKind::Identifier => match self.peek_at(1).map(|t| t.text.as_str()) {
                Some("(") => self.call(),
                Some("[") => self.index(),
                _ => {
                    self.pos += 1;
                    let mut v = Tree::new(NodeKind::Var);
                    v.tokens.push(t.clone());
                    Ok(v)
                }
            },
            TokenKind::Punctuation if t.text == "(" => {
                let open = self.expect("(")?;
                let mut inner = self.expr()?;
                inner.tokens.push(open);
                inner.tokens.push(self.expect(")")?);
                Ok(inner)
            }
            _ => Err(self.error_here("expression")),
        }
    }
}
