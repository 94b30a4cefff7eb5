//! Recursive-descent parser for the C-style scripting profile.
//!
//! The parser recognizes an ECMAScript-like statement and expression
//! grammar (functions, arrows, classes, destructuring, template literals,
//! optional chaining) and records a flat [`SyntaxTree`]. It is a recognizer
//! first: no semantic checks beyond assignment-target validity.

use super::lexer::{tokenize, Token, TokenKind};
use super::tree::{ByteRange, NodeKind, SyntaxNode, SyntaxTree};
use super::ParseError;

const RESERVED: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete", "do",
    "else", "export", "extends", "finally", "for", "function", "if", "import", "in", "instanceof",
    "new", "return", "super", "switch", "this", "throw", "try", "typeof", "var", "void", "while",
    "with", "null", "true", "false", "enum",
];

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "**=", "<<=", ">>=", ">>>=", "&=", "|=", "^=", "&&=",
    "||=", "??=",
];

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "??" | "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" | "===" | "!==" => 6,
        "<" | ">" | "<=" | ">=" | "instanceof" | "in" => 7,
        "<<" | ">>" | ">>>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        "**" => 11,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Identifier,
    Member,
    Pattern,
    Other,
}

#[derive(Debug, Clone, Copy)]
struct Expr {
    range: ByteRange,
    shape: Shape,
}

pub fn parse_program(src: &str) -> Result<SyntaxTree, ParseError> {
    let mut p = Parser::new(src)?;
    let start = p.cur().start;
    while !p.at_eof() {
        p.statement()?;
    }
    p.push(NodeKind::Program, ByteRange::new(start.min(p.prev_end), p.prev_end.max(start)));
    Ok(SyntaxTree { nodes: p.nodes })
}

/// Parses `src` as exactly one expression (no trailing tokens).
pub fn parse_expression(src: &str) -> Result<SyntaxTree, ParseError> {
    let mut p = Parser::new(src)?;
    p.expression()?;
    if !p.at_eof() {
        return Err(p.unexpected());
    }
    Ok(SyntaxTree { nodes: p.nodes })
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
    prev_end: usize,
    no_in: bool,
    nodes: Vec<SyntaxNode>,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        Ok(Self { src, toks: tokenize(src)?, pos: 0, prev_end: 0, no_in: false, nodes: Vec::new() })
    }

    // ---- token helpers -------------------------------------------------

    fn cur(&self) -> Token {
        self.toks[self.pos]
    }

    fn peek(&self, n: usize) -> Token {
        self.toks[(self.pos + n).min(self.toks.len() - 1)]
    }

    fn text(&self) -> &'a str {
        self.cur().text(self.src)
    }

    fn at_eof(&self) -> bool {
        self.cur().kind == TokenKind::Eof
    }

    fn is_punct(&self, p: &str) -> bool {
        let t = self.cur();
        t.kind == TokenKind::Punct && t.text(self.src) == p
    }

    fn is_word(&self, w: &str) -> bool {
        let t = self.cur();
        t.kind == TokenKind::Ident && t.text(self.src) == w
    }

    fn peek_is_punct(&self, n: usize, p: &str) -> bool {
        let t = self.peek(n);
        t.kind == TokenKind::Punct && t.text(self.src) == p
    }

    fn peek_is_word(&self, n: usize, w: &str) -> bool {
        let t = self.peek(n);
        t.kind == TokenKind::Ident && t.text(self.src) == w
    }

    fn advance(&mut self) -> Token {
        let t = self.cur();
        if t.kind != TokenKind::Eof {
            self.pos += 1;
            self.prev_end = t.end;
        }
        t
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, w: &str) -> bool {
        if self.is_word(w) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<Token, ParseError> {
        if self.is_punct(p) {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected `{p}`")))
        }
    }

    fn expect_word(&mut self, w: &str) -> Result<Token, ParseError> {
        if self.is_word(w) {
            Ok(self.advance())
        } else {
            Err(self.error(format!("expected `{w}`")))
        }
    }

    fn error(&self, msg: impl Into<String>) -> ParseError {
        let t = self.cur();
        let found = if t.kind == TokenKind::Eof { "end of input".to_string() } else { format!("`{}`", t.text(self.src)) };
        ParseError::at(self.src, t.start, format!("{}, found {found}", msg.into()))
    }

    fn unexpected(&self) -> ParseError {
        self.error("unexpected token")
    }

    fn push(&mut self, kind: NodeKind, range: ByteRange) {
        self.nodes.push(SyntaxNode { kind, range });
    }

    fn range_from(&self, start: usize) -> ByteRange {
        ByteRange::new(start, self.prev_end.max(start))
    }

    fn finish(&mut self, kind: NodeKind, start: usize) -> ByteRange {
        let r = self.range_from(start);
        self.push(kind, r);
        r
    }

    fn is_identifier_token(&self, t: Token) -> bool {
        t.kind == TokenKind::Ident && !RESERVED.contains(&t.text(self.src))
    }

    fn with_in<T>(&mut self, allow: bool, f: impl FnOnce(&mut Self) -> T) -> T {
        let saved = self.no_in;
        self.no_in = !allow;
        let out = f(self);
        self.no_in = saved;
        out
    }

    /// Statement terminator with automatic semicolon insertion.
    fn semicolon(&mut self) -> Result<(), ParseError> {
        if self.eat_punct(";") || self.is_punct("}") || self.at_eof() || self.cur().newline_before {
            Ok(())
        } else {
            Err(self.error("expected `;`"))
        }
    }

    /// Index of the token matching the bracket at `open` (absolute index).
    fn matching_close(&self, open: usize) -> Option<usize> {
        let mut depth = 0usize;
        for (i, t) in self.toks.iter().enumerate().skip(open) {
            if t.kind != TokenKind::Punct {
                if t.kind == TokenKind::Eof {
                    return None;
                }
                continue;
            }
            match t.text(self.src) {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        None
    }

    // ---- statements ----------------------------------------------------

    fn statement(&mut self) -> Result<(), ParseError> {
        let start = self.cur().start;
        let t = self.cur();
        if t.kind == TokenKind::Punct {
            match self.text() {
                "{" => return self.block().map(|_| ()),
                ";" => {
                    self.advance();
                    self.finish(NodeKind::EmptyStatement, start);
                    return Ok(());
                }
                _ => {}
            }
        }
        if t.kind == TokenKind::Ident {
            match self.text() {
                "var" | "const" => {
                    self.var_declaration()?;
                    self.semicolon()?;
                    self.finish(NodeKind::VariableDeclaration, start);
                    return Ok(());
                }
                "let" if self.is_let_declaration() => {
                    self.var_declaration()?;
                    self.semicolon()?;
                    self.finish(NodeKind::VariableDeclaration, start);
                    return Ok(());
                }
                "function" => {
                    self.function(true)?;
                    return Ok(());
                }
                "async" if self.peek_is_word(1, "function") && !self.peek(1).newline_before => {
                    self.function(true)?;
                    return Ok(());
                }
                "class" => {
                    self.class(true)?;
                    return Ok(());
                }
                "if" => return self.if_statement(),
                "switch" => return self.switch_statement(),
                "while" => return self.while_statement(),
                "do" => return self.do_while_statement(),
                "for" => return self.for_statement(),
                "return" => {
                    self.advance();
                    if !(self.is_punct(";") || self.is_punct("}") || self.at_eof() || self.cur().newline_before) {
                        self.expression()?;
                    }
                    self.semicolon()?;
                    self.finish(NodeKind::ReturnStatement, start);
                    return Ok(());
                }
                "break" | "continue" => {
                    self.advance();
                    if self.is_identifier_token(self.cur()) && !self.cur().newline_before {
                        self.advance();
                    }
                    self.semicolon()?;
                    self.finish(NodeKind::JumpStatement, start);
                    return Ok(());
                }
                "throw" => {
                    self.advance();
                    if self.cur().newline_before {
                        return Err(self.error("line break after `throw`"));
                    }
                    self.expression()?;
                    self.semicolon()?;
                    self.finish(NodeKind::ThrowStatement, start);
                    return Ok(());
                }
                "try" => return self.try_statement(),
                "debugger" => {
                    self.advance();
                    self.semicolon()?;
                    self.finish(NodeKind::ExpressionStatement, start);
                    return Ok(());
                }
                _ => {}
            }
            if self.is_identifier_token(t) && self.peek_is_punct(1, ":") {
                self.advance();
                self.advance();
                self.statement()?;
                self.finish(NodeKind::LabeledStatement, start);
                return Ok(());
            }
        }
        self.expression()?;
        self.semicolon()?;
        self.finish(NodeKind::ExpressionStatement, start);
        Ok(())
    }

    fn is_let_declaration(&self) -> bool {
        let next = self.peek(1);
        (next.kind == TokenKind::Ident && !matches!(next.text(self.src), "in" | "of" | "instanceof"))
            || (next.kind == TokenKind::Punct && matches!(next.text(self.src), "[" | "{"))
    }

    fn block(&mut self) -> Result<ByteRange, ParseError> {
        let start = self.expect_punct("{")?.start;
        while !self.is_punct("}") {
            if self.at_eof() {
                return Err(self.error("expected `}`"));
            }
            self.statement()?;
        }
        self.advance();
        Ok(self.finish(NodeKind::Block, start))
    }

    /// `var|let|const` declarator list, without the terminator. Returns the
    /// range and the number of declarators.
    fn var_declaration(&mut self) -> Result<(ByteRange, usize), ParseError> {
        let start = self.advance().start;
        let mut count = 0;
        loop {
            self.binding_target()?;
            count += 1;
            if self.eat_punct("=") {
                self.assignment()?;
            }
            if !self.eat_punct(",") {
                break;
            }
        }
        Ok((self.range_from(start), count))
    }

    fn binding_target(&mut self) -> Result<(), ParseError> {
        if self.is_punct("[") || self.is_punct("{") {
            let e = self.with_in(true, |p| p.primary())?;
            debug_assert!(matches!(e.shape, Shape::Pattern));
            Ok(())
        } else if self.is_identifier_token(self.cur()) {
            let start = self.advance().start;
            self.finish(NodeKind::Identifier, start);
            Ok(())
        } else {
            Err(self.error("expected binding identifier or pattern"))
        }
    }

    fn paren_expression(&mut self) -> Result<ByteRange, ParseError> {
        self.expect_punct("(")?;
        let e = self.with_in(true, |p| p.expression())?;
        self.expect_punct(")")?;
        Ok(e.range)
    }

    fn if_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        let test = self.paren_expression()?;
        self.statement()?;
        if self.eat_word("else") {
            self.statement()?;
        }
        self.finish(NodeKind::If { test }, start);
        Ok(())
    }

    fn switch_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        let discriminant = self.paren_expression()?;
        self.expect_punct("{")?;
        let mut seen_default = false;
        while !self.eat_punct("}") {
            let case_start = self.cur().start;
            if self.eat_word("case") {
                self.with_in(true, |p| p.expression())?;
            } else if self.eat_word("default") {
                if seen_default {
                    return Err(self.error("duplicate `default` clause"));
                }
                seen_default = true;
            } else {
                return Err(self.error("expected `case`, `default` or `}`"));
            }
            self.expect_punct(":")?;
            while !(self.is_word("case") || self.is_word("default") || self.is_punct("}")) {
                if self.at_eof() {
                    return Err(self.error("expected `}`"));
                }
                self.statement()?;
            }
            self.finish(NodeKind::SwitchCase, case_start);
        }
        self.finish(NodeKind::Switch { discriminant }, start);
        Ok(())
    }

    fn while_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        let test = self.paren_expression()?;
        self.statement()?;
        self.finish(NodeKind::While { test }, start);
        Ok(())
    }

    fn do_while_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        self.statement()?;
        self.expect_word("while")?;
        let test = self.paren_expression()?;
        self.eat_punct(";");
        self.finish(NodeKind::DoWhile { test }, start);
        Ok(())
    }

    fn for_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        let is_await = self.eat_word("await");
        self.expect_punct("(")?;
        let header_start = self.cur().start;

        let mut init = None;
        let mut single_binding = false;
        if !self.is_punct(";") {
            let decl = self.is_word("var")
                || self.is_word("const")
                || (self.is_word("let") && self.is_let_declaration());
            if decl {
                let (r, count) = self.with_in(false, |p| p.var_declaration())?;
                self.push(NodeKind::VariableDeclaration, r);
                // for-in/of allow exactly one declarator
                single_binding = count == 1;
                init = Some((r, Shape::Other));
            } else {
                let e = self.with_in(false, |p| p.expression())?;
                init = Some((e.range, e.shape));
            }
        }

        let loop_kind = if self.is_word("in") || (self.is_word("of") && init.is_some()) {
            let (left, shape) = init.ok_or_else(|| self.unexpected())?;
            let is_decl = shape == Shape::Other && single_binding;
            if !is_decl && !matches!(shape, Shape::Identifier | Shape::Member | Shape::Pattern) {
                return Err(self.error("invalid left-hand side in for-in/of"));
            }
            let of = self.advance().text(self.src) == "of";
            let right = if of {
                self.with_in(true, |p| p.assignment())?.range
            } else {
                self.with_in(true, |p| p.expression())?.range
            };
            let header = self.range_from(header_start);
            self.expect_punct(")")?;
            if of {
                NodeKind::ForOf { left, right, header }
            } else {
                NodeKind::ForIn { left, right, header }
            }
        } else {
            if is_await {
                return Err(self.error("`for await` requires `of`"));
            }
            self.expect_punct(";")?;
            let test = if self.is_punct(";") { None } else { Some(self.with_in(true, |p| p.expression())?.range) };
            self.expect_punct(";")?;
            let update = if self.is_punct(")") { None } else { Some(self.with_in(true, |p| p.expression())?.range) };
            let header = self.range_from(header_start);
            self.expect_punct(")")?;
            NodeKind::For { init: init.map(|(r, _)| r), test, update, header }
        };
        self.statement()?;
        self.finish(loop_kind, start);
        Ok(())
    }

    fn try_statement(&mut self) -> Result<(), ParseError> {
        let start = self.advance().start;
        self.block()?;
        let mut handled = false;
        if self.eat_word("catch") {
            if self.eat_punct("(") {
                self.binding_target()?;
                self.expect_punct(")")?;
            }
            self.block()?;
            handled = true;
        }
        if self.eat_word("finally") {
            self.block()?;
            handled = true;
        }
        if !handled {
            return Err(self.error("expected `catch` or `finally`"));
        }
        self.finish(NodeKind::TryStatement, start);
        Ok(())
    }

    // ---- functions and classes ----------------------------------------

    fn function(&mut self, declaration: bool) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        self.eat_word("async");
        self.expect_word("function")?;
        self.eat_punct("*");
        if self.is_identifier_token(self.cur()) {
            self.advance();
        } else if declaration {
            return Err(self.error("expected function name"));
        }
        self.parameters()?;
        self.function_body()?;
        let kind = if declaration { NodeKind::FunctionDeclaration } else { NodeKind::Function };
        Ok(Expr { range: self.finish(kind, start), shape: Shape::Other })
    }

    fn parameters(&mut self) -> Result<(), ParseError> {
        self.expect_punct("(")?;
        self.with_in(true, |p| {
            while !p.is_punct(")") {
                if p.eat_punct("...") {
                    p.binding_target()?;
                    break;
                }
                p.binding_target()?;
                if p.eat_punct("=") {
                    p.assignment()?;
                }
                if !p.eat_punct(",") {
                    break;
                }
            }
            Ok::<_, ParseError>(())
        })?;
        self.expect_punct(")")?;
        Ok(())
    }

    fn function_body(&mut self) -> Result<(), ParseError> {
        self.with_in(true, |p| p.block()).map(|_| ())
    }

    fn class(&mut self, declaration: bool) -> Result<Expr, ParseError> {
        let start = self.advance().start;
        if self.is_identifier_token(self.cur()) {
            self.advance();
        } else if declaration {
            return Err(self.error("expected class name"));
        }
        if self.eat_word("extends") {
            self.left_hand_side()?;
        }
        self.expect_punct("{")?;
        while !self.eat_punct("}") {
            if self.at_eof() {
                return Err(self.error("expected `}`"));
            }
            if self.eat_punct(";") {
                continue;
            }
            if self.is_word("static") && self.peek_is_punct(1, "{") {
                self.advance();
                self.block()?;
                continue;
            }
            if self.is_word("static") && !self.peek_is_punct(1, "(") && !self.peek_is_punct(1, "=") {
                self.advance();
            }
            self.property_definition(true)?;
        }
        let kind = if declaration { NodeKind::ClassDeclaration } else { NodeKind::Class };
        Ok(Expr { range: self.finish(kind, start), shape: Shape::Other })
    }

    // ---- expressions ---------------------------------------------------

    fn expression(&mut self) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        let first = self.assignment()?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        while self.eat_punct(",") {
            self.assignment()?;
        }
        Ok(Expr { range: self.finish(NodeKind::Sequence, start), shape: Shape::Other })
    }

    fn arrow_ahead(&self) -> bool {
        let t = self.cur();
        if self.is_identifier_token(t) && self.peek_is_punct(1, "=>") && !self.peek(1).newline_before {
            return true;
        }
        if t.kind == TokenKind::Ident && t.text(self.src) == "async" && !self.peek(1).newline_before {
            let n = self.peek(1);
            if self.is_identifier_token(n) && self.peek_is_punct(2, "=>") {
                return true;
            }
            if n.kind == TokenKind::Punct && n.text(self.src) == "(" {
                if let Some(close) = self.matching_close(self.pos + 1) {
                    let after = self.toks[(close + 1).min(self.toks.len() - 1)];
                    return after.kind == TokenKind::Punct && after.text(self.src) == "=>" && !after.newline_before;
                }
            }
        }
        if self.is_punct("(") {
            if let Some(close) = self.matching_close(self.pos) {
                let after = self.toks[(close + 1).min(self.toks.len() - 1)];
                return after.kind == TokenKind::Punct && after.text(self.src) == "=>" && !after.newline_before;
            }
        }
        false
    }

    fn arrow(&mut self) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        if self.is_word("async") && !(self.peek_is_punct(1, "=>")) {
            self.advance();
        }
        if self.is_punct("(") {
            self.parameters()?;
        } else {
            self.binding_target()?;
        }
        self.expect_punct("=>")?;
        if self.is_punct("{") {
            self.function_body()?;
        } else {
            self.assignment()?;
        }
        Ok(Expr { range: self.finish(NodeKind::Arrow, start), shape: Shape::Other })
    }

    fn assignment(&mut self) -> Result<Expr, ParseError> {
        if self.arrow_ahead() {
            return self.arrow();
        }
        if self.is_word("yield") {
            let start = self.advance().start;
            self.eat_punct("*");
            if !(self.is_punct(")") || self.is_punct("]") || self.is_punct("}") || self.is_punct(",")
                || self.is_punct(";") || self.is_punct(":") || self.at_eof() || self.cur().newline_before)
            {
                self.assignment()?;
            }
            return Ok(Expr { range: self.finish(NodeKind::Unary, start), shape: Shape::Other });
        }
        let start = self.cur().start;
        let lhs = self.conditional()?;
        let t = self.cur();
        if t.kind == TokenKind::Punct && ASSIGN_OPS.contains(&t.text(self.src)) {
            let op = t.text(self.src);
            let valid = match lhs.shape {
                Shape::Identifier | Shape::Member => true,
                Shape::Pattern => op == "=",
                Shape::Other => false,
            };
            if !valid {
                return Err(self.error("invalid assignment target"));
            }
            self.advance();
            self.assignment()?;
            return Ok(Expr { range: self.finish(NodeKind::Assignment, start), shape: Shape::Other });
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        let test = self.binary(0)?;
        if !self.eat_punct("?") {
            return Ok(test);
        }
        self.with_in(true, |p| p.assignment())?;
        self.expect_punct(":")?;
        self.assignment()?;
        Ok(Expr { range: self.finish(NodeKind::Conditional, start), shape: Shape::Other })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        let mut left = self.unary()?;
        loop {
            let t = self.cur();
            if !matches!(t.kind, TokenKind::Punct | TokenKind::Ident) {
                break;
            }
            let op = t.text(self.src);
            if op == "in" && self.no_in {
                break;
            }
            let Some(prec) = binary_precedence(op) else { break };
            if t.kind == TokenKind::Ident && !matches!(op, "in" | "instanceof") {
                break;
            }
            if prec <= min_prec {
                break;
            }
            self.advance();
            // `**` is right-associative
            self.binary(if op == "**" { prec - 1 } else { prec })?;
            let kind = if matches!(op, "&&" | "||" | "??") { NodeKind::Logical } else { NodeKind::Binary };
            left = Expr { range: self.finish(kind, start), shape: Shape::Other };
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        let t = self.cur();
        let text = t.text(self.src);
        let is_prefix = match t.kind {
            TokenKind::Punct => matches!(text, "!" | "~" | "+" | "-"),
            TokenKind::Ident => matches!(text, "typeof" | "void" | "delete" | "await"),
            _ => false,
        };
        if is_prefix {
            self.advance();
            self.unary()?;
            return Ok(Expr { range: self.finish(NodeKind::Unary, start), shape: Shape::Other });
        }
        if t.kind == TokenKind::Punct && matches!(text, "++" | "--") {
            self.advance();
            let operand = self.unary()?;
            if !matches!(operand.shape, Shape::Identifier | Shape::Member) {
                return Err(self.error("invalid update target"));
            }
            return Ok(Expr { range: self.finish(NodeKind::Update, start), shape: Shape::Other });
        }
        let e = self.left_hand_side()?;
        if (self.is_punct("++") || self.is_punct("--")) && !self.cur().newline_before {
            if !matches!(e.shape, Shape::Identifier | Shape::Member) {
                return Err(self.error("invalid update target"));
            }
            self.advance();
            return Ok(Expr { range: self.finish(NodeKind::Update, start), shape: Shape::Other });
        }
        Ok(e)
    }

    fn arguments(&mut self) -> Result<Vec<ByteRange>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        self.with_in(true, |p| {
            while !p.is_punct(")") {
                let arg_start = p.cur().start;
                if p.eat_punct("...") {
                    p.assignment()?;
                    args.push(p.finish(NodeKind::Spread, arg_start));
                } else {
                    args.push(p.assignment()?.range);
                }
                if !p.eat_punct(",") {
                    break;
                }
            }
            Ok::<_, ParseError>(())
        })?;
        self.expect_punct(")")?;
        Ok(args)
    }

    fn member_name(&mut self) -> Result<(), ParseError> {
        self.eat_punct("#");
        if self.cur().kind == TokenKind::Ident {
            self.advance();
            Ok(())
        } else {
            Err(self.error("expected property name"))
        }
    }

    fn left_hand_side(&mut self) -> Result<Expr, ParseError> {
        let start = self.cur().start;
        let mut e = if self.is_word("new") {
            self.new_expression()?
        } else {
            self.primary()?
        };
        loop {
            if self.eat_punct(".") {
                self.member_name()?;
                e = Expr { range: self.finish(NodeKind::Member, start), shape: Shape::Member };
            } else if self.is_punct("?.") {
                self.advance();
                if self.is_punct("(") {
                    let arguments = self.arguments()?;
                    let callee = e.range;
                    e = Expr { range: self.finish(NodeKind::Call { callee, arguments }, start), shape: Shape::Other };
                } else if self.eat_punct("[") {
                    self.with_in(true, |p| p.expression())?;
                    self.expect_punct("]")?;
                    e = Expr { range: self.finish(NodeKind::Member, start), shape: Shape::Other };
                } else {
                    self.member_name()?;
                    e = Expr { range: self.finish(NodeKind::Member, start), shape: Shape::Other };
                }
            } else if self.eat_punct("[") {
                self.with_in(true, |p| p.expression())?;
                self.expect_punct("]")?;
                e = Expr { range: self.finish(NodeKind::Member, start), shape: Shape::Member };
            } else if self.is_punct("(") {
                let callee = e.range;
                let arguments = self.arguments()?;
                e = Expr { range: self.finish(NodeKind::Call { callee, arguments }, start), shape: Shape::Other };
            } else if self.cur().kind == TokenKind::Template {
                self.advance();
                e = Expr { range: self.finish(NodeKind::TaggedTemplate, start), shape: Shape::Other };
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn new_expression(&mut self) -> Result<Expr, ParseError> {
        let start = self.advance().start;
        if self.eat_punct(".") {
            self.member_name()?;
            return Ok(Expr { range: self.finish(NodeKind::Member, start), shape: Shape::Other });
        }
        let callee_start = self.cur().start;
        if self.is_word("new") {
            self.new_expression()?;
        } else {
            self.primary()?;
        }
        loop {
            if self.eat_punct(".") {
                self.member_name()?;
                self.finish(NodeKind::Member, callee_start);
            } else if self.eat_punct("[") {
                self.with_in(true, |p| p.expression())?;
                self.expect_punct("]")?;
                self.finish(NodeKind::Member, callee_start);
            } else {
                break;
            }
        }
        if self.is_punct("(") {
            self.arguments()?;
        }
        Ok(Expr { range: self.finish(NodeKind::New, start), shape: Shape::Other })
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let t = self.cur();
        let start = t.start;
        match t.kind {
            TokenKind::Number | TokenKind::String | TokenKind::Template | TokenKind::Regex => {
                self.advance();
                Ok(Expr { range: self.finish(NodeKind::Literal, start), shape: Shape::Other })
            }
            TokenKind::Ident => {
                let text = t.text(self.src);
                match text {
                    "this" | "null" | "true" | "false" | "super" => {
                        self.advance();
                        let kind = if text == "this" || text == "super" { NodeKind::Identifier } else { NodeKind::Literal };
                        Ok(Expr { range: self.finish(kind, start), shape: Shape::Other })
                    }
                    "function" => self.function(false),
                    "async" if self.peek_is_word(1, "function") && !self.peek(1).newline_before => self.function(false),
                    "class" => self.class(false),
                    _ if self.is_identifier_token(t) => {
                        self.advance();
                        Ok(Expr { range: self.finish(NodeKind::Identifier, start), shape: Shape::Identifier })
                    }
                    _ => Err(self.unexpected()),
                }
            }
            TokenKind::Punct => match t.text(self.src) {
                "(" => {
                    self.advance();
                    let inner = self.with_in(true, |p| p.expression())?;
                    self.expect_punct(")")?;
                    let range = self.finish(NodeKind::Parenthesized, start);
                    let shape = if matches!(inner.shape, Shape::Identifier | Shape::Member) { inner.shape } else { Shape::Other };
                    Ok(Expr { range, shape })
                }
                "[" => self.array(),
                "{" => self.object(),
                _ => Err(self.unexpected()),
            },
            TokenKind::Eof => Err(self.error("unexpected end of input")),
        }
    }

    fn array(&mut self) -> Result<Expr, ParseError> {
        let start = self.advance().start;
        self.with_in(true, |p| {
            while !p.is_punct("]") {
                if p.eat_punct(",") {
                    continue;
                }
                let el_start = p.cur().start;
                if p.eat_punct("...") {
                    p.assignment()?;
                    p.finish(NodeKind::Spread, el_start);
                } else {
                    p.assignment()?;
                }
                if !p.is_punct("]") {
                    p.expect_punct(",")?;
                }
            }
            Ok::<_, ParseError>(())
        })?;
        self.expect_punct("]")?;
        Ok(Expr { range: self.finish(NodeKind::Array, start), shape: Shape::Pattern })
    }

    fn object(&mut self) -> Result<Expr, ParseError> {
        let start = self.advance().start;
        self.with_in(true, |p| {
            while !p.is_punct("}") {
                let prop_start = p.cur().start;
                if p.eat_punct("...") {
                    p.assignment()?;
                    p.finish(NodeKind::Spread, prop_start);
                } else {
                    p.property_definition(false)?;
                }
                if !p.is_punct("}") {
                    p.expect_punct(",")?;
                }
            }
            Ok::<_, ParseError>(())
        })?;
        self.expect_punct("}")?;
        Ok(Expr { range: self.finish(NodeKind::Object, start), shape: Shape::Pattern })
    }

    fn property_key(&mut self) -> Result<(), ParseError> {
        let t = self.cur();
        match t.kind {
            TokenKind::Ident | TokenKind::String | TokenKind::Number => {
                self.advance();
                Ok(())
            }
            TokenKind::Punct if t.text(self.src) == "[" => {
                self.advance();
                self.with_in(true, |p| p.assignment())?;
                self.expect_punct("]")?;
                Ok(())
            }
            TokenKind::Punct if t.text(self.src) == "#" => {
                self.advance();
                self.member_name()
            }
            _ => Err(self.error("expected property key")),
        }
    }

    /// Object literal property or class member.
    fn property_definition(&mut self, in_class: bool) -> Result<(), ParseError> {
        let modifier_follows = |p: &Self| {
            let n = p.peek(1);
            !(n.kind == TokenKind::Punct && matches!(n.text(p.src), "," | ":" | "(" | "}" | "=" | ";"))
                && n.kind != TokenKind::Eof
        };
        if self.is_word("async") && modifier_follows(self) && !self.peek(1).newline_before {
            self.advance();
        }
        self.eat_punct("*");
        if (self.is_word("get") || self.is_word("set")) && modifier_follows(self) {
            self.advance();
        }
        let key = self.cur();
        self.property_key()?;
        if self.is_punct("(") {
            self.parameters()?;
            self.function_body()?;
            return Ok(());
        }
        if in_class {
            if self.eat_punct("=") {
                self.assignment()?;
            }
            return self.semicolon();
        }
        if self.eat_punct(":") {
            self.assignment()?;
            return Ok(());
        }
        if !self.is_identifier_token(key) {
            return Err(self.error("expected `:`"));
        }
        // shorthand, possibly with a default in a destructuring pattern
        if self.eat_punct("=") {
            self.assignment()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(src: &str) -> SyntaxTree {
        parse_program(src).unwrap_or_else(|e| panic!("{src:?} failed: {e}"))
    }

    fn bad(src: &str) {
        assert!(parse_program(src).is_err(), "{src:?} should not parse");
    }

    #[test]
    fn parses_statement_forms() {
        ok("if (x === y) { f(); } else if (z) g(); else { }");
        ok("switch (a) { case 1: b(); break; default: c(); }");
        ok("while (x) { x--; }\ndo { y++ } while (y < 3)\nfoo()");
        ok("for (let i = 0; i < n; i++) {}\nfor (;;) break;\nfor (const k in obj) {}\nfor (const v of list) {}");
        ok("for (x of xs) {}\nfor (a.b in o) ;\nfor (var i = 0, j = 1; i < j; i++, j--) {}");
        ok("try { a() } catch (e) { b() } finally { c() }\ntry {} catch { }");
        ok("label: for (;;) { continue label; }");
        ok("function f(a, b = 1, ...rest) { return a + b; }\nasync function g() { await h(); }");
        ok("class A extends B { constructor(x) { super(x); this.x = x; } static s() {} get v() { return 1 } y = 2; }");
    }

    #[test]
    fn parses_expression_forms() {
        ok("const {a, b: [c, d], ...e} = obj;\nlet [x, , y = 2] = arr;");
        ok("const f = (a, b) => a + b, g = x => ({x}), h = async () => { await 1 };");
        ok("a?.b?.(c)?.[d] ?? e;\nx = cond ? y : z;\nn = 2 ** 3 ** 2;");
        ok("s = `t ${a + `u${b}`}`; r = /a\\/b[/]/g.test(s); d = a / b / c;");
        ok("o = { get x() { return 1 }, set x(v) {}, async m() {}, *gen() {}, [k]: 1, 'q': 2, 3: 4, get: 5 };");
        ok("new Foo; new Foo(1).bar(); new a.b.C(); typeof x === 'undefined'; delete o[k]; void 0;");
        ok("x = a\n++b");
        ok("module.exports = { f, g };");
    }

    #[test]
    fn rejects_malformed_input() {
        bad("if (");
        bad("if (x) {");
        bad("while ((");
        bad("a + b = 3;");
        bad("for (let i = 0 i < 3; i++) {}");
        bad("x = if;");
        bad("f(a b);");
        bad("1++;");
        bad("a b");
        bad("return\n(");
        bad("for (a + b of c) {}");
    }

    #[test]
    fn records_loop_header_ranges() {
        let src = "for (let i=0; i < x; i++){ }";
        let tree = ok(src);
        let node = tree.nodes.iter().find(|n| matches!(n.kind, NodeKind::For { .. })).unwrap();
        let NodeKind::For { init, test, update, header } = &node.kind else { unreachable!() };
        assert_eq!(init.unwrap().slice(src), "let i=0");
        assert_eq!(test.unwrap().slice(src), "i < x");
        assert_eq!(update.unwrap().slice(src), "i++");
        assert_eq!(header.slice(src), "let i=0; i < x; i++");
        assert_eq!(node.range.slice(src), src);
    }

    #[test]
    fn records_call_ranges() {
        let src = "a.m(x,y)";
        let tree = parse_expression(src).unwrap();
        let node = tree.nodes.iter().find(|n| matches!(n.kind, NodeKind::Call { .. })).unwrap();
        let NodeKind::Call { callee, arguments } = &node.kind else { unreachable!() };
        assert_eq!(callee.slice(src), "a.m");
        let args: Vec<_> = arguments.iter().map(|r| r.slice(src)).collect();
        assert_eq!(args, vec!["x", "y"]);
    }

    #[test]
    fn expression_entry_rejects_trailing_tokens() {
        assert!(parse_expression("x !== y").is_ok());
        assert!(parse_expression("x y").is_err());
        assert!(parse_expression("").is_err());
    }
}
