//! Recursive-descent recognizer for Python 3 statements and expressions.
//!
//! The recognizer builds no tree; it only decides whether the token stream
//! is a well-formed module. Expression parsers return a coarse [`Shape`] so
//! assignment targets can be checked the way the real compiler does.

use super::token::{Token, TokenKind};
use super::SyntaxError;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if",
    "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try",
    "while", "with", "yield",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Name,
    Attribute,
    Subscript,
    Starred,
    /// Tuple or list display whose elements are all assignable.
    TargetSeq,
    Other,
}

impl Shape {
    fn assignable(self) -> bool {
        !matches!(self, Shape::Other)
    }
}

pub(super) struct Parser<'a> {
    src: &'a str,
    toks: &'a [Token],
    pos: usize,
}

type PResult<T> = Result<T, SyntaxError>;

impl<'a> Parser<'a> {
    pub(super) fn new(src: &'a str, toks: &'a [Token]) -> Self {
        Parser { src, toks, pos: 0 }
    }

    fn tok(&self) -> &Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn text(&self) -> &'a str {
        let t = &self.toks[self.pos.min(self.toks.len() - 1)];
        &self.src[t.span.clone()]
    }

    fn kind(&self) -> TokenKind {
        self.tok().kind
    }

    fn text_at(&self, off: usize) -> &'a str {
        match self.toks.get(self.pos + off) {
            Some(t) => &self.src[t.span.clone()],
            None => "",
        }
    }

    fn kind_at(&self, off: usize) -> TokenKind {
        self.toks
            .get(self.pos + off)
            .map(|t| t.kind)
            .unwrap_or(TokenKind::EndMarker)
    }

    fn bump(&mut self) {
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
    }

    fn fail<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(SyntaxError {
            line: self.tok().line,
            message: msg.into(),
        })
    }

    fn at_op(&self, op: &str) -> bool {
        self.kind() == TokenKind::Op && self.text() == op
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.kind() == TokenKind::Name && self.text() == kw
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> PResult<()> {
        if self.eat_op(op) {
            Ok(())
        } else {
            self.fail(format!("expected '{op}'"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.fail(format!("expected '{kw}'"))
        }
    }

    fn expect_name(&mut self) -> PResult<()> {
        if self.kind() == TokenKind::Name && !is_keyword(self.text()) {
            self.bump();
            Ok(())
        } else {
            self.fail("invalid syntax: expected a name")
        }
    }

    fn expect_newline(&mut self) -> PResult<()> {
        match self.kind() {
            TokenKind::Newline => {
                self.bump();
                Ok(())
            }
            TokenKind::EndMarker => Ok(()),
            _ => self.fail("invalid syntax"),
        }
    }

    /// True when the current token can begin an expression.
    fn starts_expr(&self) -> bool {
        match self.kind() {
            TokenKind::Number | TokenKind::String => true,
            TokenKind::Name => {
                let t = self.text();
                !is_keyword(t)
                    || matches!(t, "None" | "True" | "False" | "not" | "lambda" | "await" | "yield")
            }
            TokenKind::Op => matches!(
                self.text(),
                "(" | "[" | "{" | "-" | "+" | "~" | "..." | "*"
            ),
            _ => false,
        }
    }

    pub(super) fn module(&mut self) -> PResult<()> {
        loop {
            match self.kind() {
                TokenKind::EndMarker => return Ok(()),
                TokenKind::Newline => self.bump(),
                TokenKind::Indent => return self.fail("unexpected indent"),
                TokenKind::Dedent => self.bump(),
                _ => self.statement()?,
            }
        }
    }

    fn statement(&mut self) -> PResult<()> {
        if self.kind() == TokenKind::Name {
            match self.text() {
                "if" => return self.if_stmt(),
                "while" => return self.while_stmt(),
                "for" => return self.for_stmt(),
                "try" => return self.try_stmt(),
                "with" => return self.with_stmt(),
                "def" => return self.funcdef(),
                "class" => return self.classdef(),
                "async" => {
                    self.bump();
                    return match self.text() {
                        "def" => self.funcdef(),
                        "for" => self.for_stmt(),
                        "with" => self.with_stmt(),
                        _ => self.fail("invalid syntax after 'async'"),
                    };
                }
                "elif" | "else" | "except" | "finally" => {
                    return self.fail(format!("unexpected '{}'", self.text()))
                }
                _ => {}
            }
        }
        if self.at_op("@") {
            return self.decorated();
        }
        self.simple_statements()
    }

    fn simple_statements(&mut self) -> PResult<()> {
        self.simple_statement()?;
        while self.eat_op(";") {
            if matches!(self.kind(), TokenKind::Newline | TokenKind::EndMarker) {
                break;
            }
            self.simple_statement()?;
        }
        self.expect_newline()
    }

    fn block(&mut self) -> PResult<()> {
        self.expect_op(":")?;
        if self.kind() == TokenKind::Newline {
            self.bump();
            if self.kind() != TokenKind::Indent {
                return self.fail("expected an indented block");
            }
            self.bump();
            loop {
                match self.kind() {
                    TokenKind::Dedent => {
                        self.bump();
                        return Ok(());
                    }
                    TokenKind::EndMarker => return Ok(()),
                    TokenKind::Newline => self.bump(),
                    TokenKind::Indent => return self.fail("unexpected indent"),
                    _ => self.statement()?,
                }
            }
        }
        if self.kind() == TokenKind::EndMarker {
            return self.fail("expected an indented block");
        }
        self.simple_statements()
    }

    fn simple_statement(&mut self) -> PResult<()> {
        if self.kind() == TokenKind::Name {
            match self.text() {
                "pass" | "break" | "continue" => {
                    self.bump();
                    return Ok(());
                }
                "return" => {
                    self.bump();
                    if self.starts_expr() {
                        self.star_expressions()?;
                    }
                    return Ok(());
                }
                "raise" => {
                    self.bump();
                    if self.starts_expr() {
                        self.expression()?;
                        if self.eat_kw("from") {
                            self.expression()?;
                        }
                    }
                    return Ok(());
                }
                "global" | "nonlocal" => {
                    self.bump();
                    self.expect_name()?;
                    while self.eat_op(",") {
                        self.expect_name()?;
                    }
                    return Ok(());
                }
                "del" => {
                    self.bump();
                    let shape = self.star_expressions()?;
                    if !shape.assignable() {
                        return self.fail("cannot delete expression");
                    }
                    return Ok(());
                }
                "assert" => {
                    self.bump();
                    self.expression()?;
                    if self.eat_op(",") {
                        self.expression()?;
                    }
                    return Ok(());
                }
                "import" => return self.import_name(),
                "from" => return self.import_from(),
                _ => {}
            }
        }
        self.expression_statement()
    }

    fn dotted_name(&mut self) -> PResult<()> {
        self.expect_name()?;
        while self.eat_op(".") {
            self.expect_name()?;
        }
        Ok(())
    }

    fn import_name(&mut self) -> PResult<()> {
        self.expect_kw("import")?;
        loop {
            self.dotted_name()?;
            if self.eat_kw("as") {
                self.expect_name()?;
            }
            if !self.eat_op(",") {
                return Ok(());
            }
        }
    }

    fn import_from(&mut self) -> PResult<()> {
        self.expect_kw("from")?;
        let mut dots = 0;
        while self.at_op(".") || self.at_op("...") {
            dots += 1;
            self.bump();
        }
        if !self.at_kw("import") {
            self.dotted_name()?;
        } else if dots == 0 {
            return self.fail("invalid syntax: expected module name");
        }
        self.expect_kw("import")?;
        if self.eat_op("*") {
            return Ok(());
        }
        let paren = self.eat_op("(");
        loop {
            self.expect_name()?;
            if self.eat_kw("as") {
                self.expect_name()?;
            }
            if !self.eat_op(",") {
                break;
            }
            if paren && self.at_op(")") {
                break;
            }
        }
        if paren {
            self.expect_op(")")?;
        }
        Ok(())
    }

    fn expression_statement(&mut self) -> PResult<()> {
        if self.at_kw("yield") {
            return self.yield_expr().map(|_| ());
        }
        let first = self.star_expressions()?;
        if self.at_op("=") {
            let mut target = first;
            while self.eat_op("=") {
                if !target.assignable() {
                    return self.fail("cannot assign to expression");
                }
                target = if self.at_kw("yield") {
                    self.yield_expr()?
                } else {
                    self.star_expressions()?
                };
            }
            return Ok(());
        }
        if self.kind() == TokenKind::Op
            && self.text().len() >= 2
            && self.text().ends_with('=')
            && !matches!(self.text(), "==" | "!=" | "<=" | ">=")
        {
            if !matches!(first, Shape::Name | Shape::Attribute | Shape::Subscript) {
                return self.fail("illegal expression for augmented assignment");
            }
            self.bump();
            if self.at_kw("yield") {
                self.yield_expr()?;
            } else {
                self.star_expressions()?;
            }
            return Ok(());
        }
        if self.at_op(":") {
            if !matches!(first, Shape::Name | Shape::Attribute | Shape::Subscript) {
                return self.fail("illegal target for annotation");
            }
            self.bump();
            self.expression()?;
            if self.eat_op("=") {
                if self.at_kw("yield") {
                    self.yield_expr()?;
                } else {
                    self.star_expressions()?;
                }
            }
            return Ok(());
        }
        Ok(())
    }

    fn yield_expr(&mut self) -> PResult<Shape> {
        self.expect_kw("yield")?;
        if self.eat_kw("from") {
            self.expression()?;
        } else if self.starts_expr() {
            self.star_expressions()?;
        }
        Ok(Shape::Other)
    }

    fn if_stmt(&mut self) -> PResult<()> {
        self.expect_kw("if")?;
        self.named_expression()?;
        self.block()?;
        while self.eat_kw("elif") {
            self.named_expression()?;
            self.block()?;
        }
        if self.eat_kw("else") {
            self.block()?;
        }
        Ok(())
    }

    fn while_stmt(&mut self) -> PResult<()> {
        self.expect_kw("while")?;
        self.named_expression()?;
        self.block()?;
        if self.eat_kw("else") {
            self.block()?;
        }
        Ok(())
    }

    fn for_stmt(&mut self) -> PResult<()> {
        self.expect_kw("for")?;
        self.target_list()?;
        self.expect_kw("in")?;
        self.star_expressions()?;
        self.block()?;
        if self.eat_kw("else") {
            self.block()?;
        }
        Ok(())
    }

    fn target_list(&mut self) -> PResult<()> {
        loop {
            let shape = if self.eat_op("*") {
                self.bitwise_or()?;
                Shape::Starred
            } else {
                self.bitwise_or()?
            };
            if !shape.assignable() {
                return self.fail("cannot assign to expression");
            }
            if !self.eat_op(",") || self.at_kw("in") {
                return Ok(());
            }
        }
    }

    fn try_stmt(&mut self) -> PResult<()> {
        self.expect_kw("try")?;
        self.block()?;
        let mut handlers = 0;
        while self.eat_kw("except") {
            handlers += 1;
            self.eat_op("*");
            if !self.at_op(":") {
                self.expression()?;
                if self.eat_op(",") {
                    self.expression()?;
                }
                if self.eat_kw("as") {
                    self.expect_name()?;
                }
            }
            self.block()?;
        }
        if handlers > 0 && self.eat_kw("else") {
            self.block()?;
        }
        if self.eat_kw("finally") {
            self.block()?;
        } else if handlers == 0 {
            return self.fail("expected 'except' or 'finally' block");
        }
        Ok(())
    }

    fn with_stmt(&mut self) -> PResult<()> {
        self.expect_kw("with")?;
        loop {
            self.expression()?;
            if self.eat_kw("as") {
                let shape = self.bitwise_or()?;
                if !shape.assignable() {
                    return self.fail("cannot assign to expression");
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        self.block()
    }

    fn decorated(&mut self) -> PResult<()> {
        while self.eat_op("@") {
            self.named_expression()?;
            if self.kind() != TokenKind::Newline {
                return self.fail("invalid syntax after decorator");
            }
            self.bump();
        }
        match self.text() {
            "def" => self.funcdef(),
            "class" => self.classdef(),
            "async" => {
                self.bump();
                self.funcdef()
            }
            _ => self.fail("expected function or class after decorator"),
        }
    }

    fn funcdef(&mut self) -> PResult<()> {
        self.expect_kw("def")?;
        self.expect_name()?;
        self.expect_op("(")?;
        self.parameters(")")?;
        self.expect_op(")")?;
        if self.eat_op("->") {
            self.expression()?;
        }
        self.block()
    }

    /// Parameter list for `def` (annotations allowed) or `lambda` (closer ":").
    fn parameters(&mut self, closer: &str) -> PResult<()> {
        let annotated = closer == ")";
        while !self.at_op(closer) {
            if self.eat_op("/") {
            } else if self.eat_op("**") {
                self.expect_name()?;
                if annotated && self.eat_op(":") {
                    self.expression()?;
                }
            } else if self.eat_op("*") {
                if self.kind() == TokenKind::Name {
                    self.expect_name()?;
                    if annotated && self.eat_op(":") {
                        self.expression()?;
                    }
                }
            } else {
                self.expect_name()?;
                if annotated && self.eat_op(":") {
                    self.expression()?;
                }
                if self.eat_op("=") {
                    self.expression()?;
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(())
    }

    fn classdef(&mut self) -> PResult<()> {
        self.expect_kw("class")?;
        self.expect_name()?;
        if self.eat_op("(") {
            self.arguments()?;
            self.expect_op(")")?;
        }
        self.block()
    }

    // ---- expressions ----

    fn star_expressions(&mut self) -> PResult<Shape> {
        let first = self.star_expression()?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut all_assignable = first.assignable();
        while self.eat_op(",") {
            if !self.starts_expr() {
                break;
            }
            all_assignable &= self.star_expression()?.assignable();
        }
        Ok(if all_assignable {
            Shape::TargetSeq
        } else {
            Shape::Other
        })
    }

    fn star_expression(&mut self) -> PResult<Shape> {
        if self.eat_op("*") {
            self.bitwise_or()?;
            return Ok(Shape::Starred);
        }
        self.expression()
    }

    fn named_expression(&mut self) -> PResult<Shape> {
        if self.kind() == TokenKind::Name && self.kind_at(1) == TokenKind::Op && self.text_at(1) == ":="
        {
            self.expect_name()?;
            self.bump();
            self.expression()?;
            return Ok(Shape::Other);
        }
        self.expression()
    }

    fn expression(&mut self) -> PResult<Shape> {
        if self.at_kw("lambda") {
            self.bump();
            self.parameters(":")?;
            self.expect_op(":")?;
            self.expression()?;
            return Ok(Shape::Other);
        }
        let shape = self.disjunction()?;
        if self.eat_kw("if") {
            self.disjunction()?;
            self.expect_kw("else")?;
            self.expression()?;
            return Ok(Shape::Other);
        }
        Ok(shape)
    }

    fn disjunction(&mut self) -> PResult<Shape> {
        let shape = self.conjunction()?;
        if !self.at_kw("or") {
            return Ok(shape);
        }
        while self.eat_kw("or") {
            self.conjunction()?;
        }
        Ok(Shape::Other)
    }

    fn conjunction(&mut self) -> PResult<Shape> {
        let shape = self.inversion()?;
        if !self.at_kw("and") {
            return Ok(shape);
        }
        while self.eat_kw("and") {
            self.inversion()?;
        }
        Ok(Shape::Other)
    }

    fn inversion(&mut self) -> PResult<Shape> {
        if self.eat_kw("not") {
            self.inversion()?;
            return Ok(Shape::Other);
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Shape> {
        let mut shape = self.bitwise_or()?;
        loop {
            let is_cmp = match self.kind() {
                TokenKind::Op => matches!(self.text(), "<" | ">" | "==" | ">=" | "<=" | "!="),
                TokenKind::Name => {
                    matches!(self.text(), "in" | "is")
                        || (self.text() == "not" && self.text_at(1) == "in")
                }
                _ => false,
            };
            if !is_cmp {
                return Ok(shape);
            }
            if self.eat_kw("not") {
                self.expect_kw("in")?;
            } else if self.eat_kw("is") {
                self.eat_kw("not");
            } else {
                self.bump();
            }
            self.bitwise_or()?;
            shape = Shape::Other;
        }
    }

    fn binary(&mut self, ops: &[&str], next: fn(&mut Self) -> PResult<Shape>) -> PResult<Shape> {
        let mut shape = next(self)?;
        while self.kind() == TokenKind::Op && ops.contains(&self.text()) {
            self.bump();
            next(self)?;
            shape = Shape::Other;
        }
        Ok(shape)
    }

    fn bitwise_or(&mut self) -> PResult<Shape> {
        self.binary(&["|"], Self::bitwise_xor)
    }

    fn bitwise_xor(&mut self) -> PResult<Shape> {
        self.binary(&["^"], Self::bitwise_and)
    }

    fn bitwise_and(&mut self) -> PResult<Shape> {
        self.binary(&["&"], Self::shift_expr)
    }

    fn shift_expr(&mut self) -> PResult<Shape> {
        self.binary(&["<<", ">>"], Self::sum)
    }

    fn sum(&mut self) -> PResult<Shape> {
        self.binary(&["+", "-"], Self::term)
    }

    fn term(&mut self) -> PResult<Shape> {
        self.binary(&["*", "/", "//", "%", "@"], Self::factor)
    }

    fn factor(&mut self) -> PResult<Shape> {
        if self.kind() == TokenKind::Op && matches!(self.text(), "+" | "-" | "~") {
            self.bump();
            self.factor()?;
            return Ok(Shape::Other);
        }
        self.power()
    }

    fn power(&mut self) -> PResult<Shape> {
        let awaited = self.eat_kw("await");
        let shape = self.primary()?;
        if self.eat_op("**") {
            self.factor()?;
            return Ok(Shape::Other);
        }
        Ok(if awaited { Shape::Other } else { shape })
    }

    fn primary(&mut self) -> PResult<Shape> {
        let mut shape = self.atom()?;
        loop {
            if self.eat_op(".") {
                self.expect_name()?;
                shape = Shape::Attribute;
            } else if self.eat_op("(") {
                self.arguments()?;
                self.expect_op(")")?;
                shape = Shape::Other;
            } else if self.eat_op("[") {
                self.slices()?;
                self.expect_op("]")?;
                shape = Shape::Subscript;
            } else {
                return Ok(shape);
            }
        }
    }

    fn atom(&mut self) -> PResult<Shape> {
        match self.kind() {
            TokenKind::Number => {
                self.bump();
                Ok(Shape::Other)
            }
            TokenKind::String => {
                while self.kind() == TokenKind::String {
                    self.bump();
                }
                Ok(Shape::Other)
            }
            TokenKind::Name => match self.text() {
                "None" | "True" | "False" => {
                    self.bump();
                    Ok(Shape::Other)
                }
                t if is_keyword(t) => self.fail(format!("invalid syntax near '{t}'")),
                _ => {
                    self.bump();
                    Ok(Shape::Name)
                }
            },
            TokenKind::Op => match self.text() {
                "..." => {
                    self.bump();
                    Ok(Shape::Other)
                }
                "(" => self.paren_atom(),
                "[" => self.list_atom(),
                "{" => self.brace_atom(),
                t => self.fail(format!("invalid syntax near '{t}'")),
            },
            TokenKind::Newline | TokenKind::EndMarker => self.fail("unexpected end of statement"),
            TokenKind::Indent => self.fail("unexpected indent"),
            TokenKind::Dedent => self.fail("unexpected dedent"),
        }
    }

    fn paren_atom(&mut self) -> PResult<Shape> {
        self.expect_op("(")?;
        if self.eat_op(")") {
            return Ok(Shape::Other);
        }
        if self.at_kw("yield") {
            self.yield_expr()?;
            self.expect_op(")")?;
            return Ok(Shape::Other);
        }
        let first = if self.at_op("*") {
            self.star_expression()?
        } else {
            self.named_expression()?
        };
        if self.at_comp_for() {
            self.comp_for()?;
            self.expect_op(")")?;
            return Ok(Shape::Other);
        }
        if self.eat_op(")") {
            return Ok(if first == Shape::Starred { Shape::Other } else { first });
        }
        let mut all = first.assignable();
        while self.eat_op(",") {
            if self.at_op(")") {
                break;
            }
            all &= if self.at_op("*") {
                self.star_expression()?
            } else {
                self.named_expression()?
            }
            .assignable();
        }
        self.expect_op(")")?;
        Ok(if all { Shape::TargetSeq } else { Shape::Other })
    }

    fn list_atom(&mut self) -> PResult<Shape> {
        self.expect_op("[")?;
        if self.eat_op("]") {
            return Ok(Shape::TargetSeq);
        }
        let first = if self.at_op("*") {
            self.star_expression()?
        } else {
            self.named_expression()?
        };
        if self.at_comp_for() {
            self.comp_for()?;
            self.expect_op("]")?;
            return Ok(Shape::Other);
        }
        let mut all = first.assignable();
        while self.eat_op(",") {
            if self.at_op("]") {
                break;
            }
            all &= if self.at_op("*") {
                self.star_expression()?
            } else {
                self.named_expression()?
            }
            .assignable();
        }
        self.expect_op("]")?;
        Ok(if all { Shape::TargetSeq } else { Shape::Other })
    }

    fn brace_atom(&mut self) -> PResult<Shape> {
        self.expect_op("{")?;
        if self.eat_op("}") {
            return Ok(Shape::Other);
        }
        // Dict display when the first element is `k: v` or `**m`.
        let is_dict;
        if self.eat_op("**") {
            self.bitwise_or()?;
            is_dict = true;
        } else if self.eat_op("*") {
            self.bitwise_or()?;
            is_dict = false;
        } else {
            self.named_expression()?;
            is_dict = self.eat_op(":");
            if is_dict {
                self.expression()?;
            }
        }
        if self.at_comp_for() {
            self.comp_for()?;
            self.expect_op("}")?;
            return Ok(Shape::Other);
        }
        while self.eat_op(",") {
            if self.at_op("}") {
                break;
            }
            if is_dict {
                if self.eat_op("**") {
                    self.bitwise_or()?;
                } else {
                    self.expression()?;
                    self.expect_op(":")?;
                    self.expression()?;
                }
            } else if self.eat_op("*") {
                self.bitwise_or()?;
            } else {
                self.named_expression()?;
            }
        }
        self.expect_op("}")?;
        Ok(Shape::Other)
    }

    fn at_comp_for(&self) -> bool {
        self.at_kw("for") || (self.at_kw("async") && self.text_at(1) == "for")
    }

    fn comp_for(&mut self) -> PResult<()> {
        while self.at_comp_for() {
            self.eat_kw("async");
            self.expect_kw("for")?;
            self.target_list()?;
            self.expect_kw("in")?;
            self.disjunction()?;
            while self.eat_kw("if") {
                self.disjunction()?;
            }
        }
        Ok(())
    }

    fn arguments(&mut self) -> PResult<()> {
        let mut seen_keyword = false;
        while !self.at_op(")") {
            if self.eat_op("**") || self.eat_op("*") {
                self.expression()?;
            } else if self.kind() == TokenKind::Name
                && self.kind_at(1) == TokenKind::Op
                && self.text_at(1) == "="
            {
                self.expect_name()?;
                self.bump();
                self.expression()?;
                seen_keyword = true;
            } else {
                self.named_expression()?;
                if self.at_comp_for() {
                    self.comp_for()?;
                } else if seen_keyword {
                    return self.fail("positional argument follows keyword argument");
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(())
    }

    fn slices(&mut self) -> PResult<()> {
        loop {
            self.slice()?;
            if !self.eat_op(",") || self.at_op("]") {
                return Ok(());
            }
        }
    }

    fn slice(&mut self) -> PResult<()> {
        if self.at_op("*") {
            self.star_expression()?;
            return Ok(());
        }
        if !self.at_op(":") {
            self.named_expression()?;
            if !self.at_op(":") {
                return Ok(());
            }
        }
        self.expect_op(":")?;
        if self.starts_expr() {
            self.expression()?;
        }
        if self.eat_op(":") && self.starts_expr() {
            self.expression()?;
        }
        Ok(())
    }
}
