//! Tokenizer for Python source text.
//!
//! Produces the logical token stream the validator consumes, including
//! `Newline`, `Indent` and `Dedent` markers. Every token carries its byte
//! span in the original text so callers can splice replacements in place.

use std::ops::Range;

use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Name,
    Number,
    String,
    Op,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
    pub line: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.clone()]
    }
}

const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "==", "!=", "<=", ">=", "**", "//", "<<", ">>",
    "+=", "-=", "*=", "/=", "%=", "@=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "@", "&", "|",
    "^", "~", "<", ">", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";", "=",
];

const STRING_PREFIXES: &[&str] = &[
    "rb", "br", "fr", "rf", "r", "b", "u", "f",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer::new(src).run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
    indents: Vec<usize>,
    brackets: Vec<(u8, usize)>,
    tokens: Vec<Token>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            line: 1,
            indents: vec![0],
            brackets: Vec::new(),
            tokens: Vec::new(),
        }
    }

    fn err(&self, msg: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            message: msg.into(),
        }
    }

    fn push(&mut self, kind: TokenKind, span: Range<usize>) {
        self.tokens.push(Token {
            kind,
            span,
            line: self.line,
        });
    }

    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        let mut at_line_start = true;
        while self.pos < self.bytes.len() {
            if at_line_start && self.brackets.is_empty() {
                at_line_start = false;
                if self.handle_indentation()? {
                    continue;
                }
            }
            let c = self.bytes[self.pos];
            match c {
                b' ' | b'\t' | b'\x0c' => self.pos += 1,
                b'\r' if self.peek(1) == Some(b'\n') => self.pos += 1,
                b'\n' | b'\r' => {
                    if self.brackets.is_empty() && self.last_is_content() {
                        self.push(TokenKind::Newline, self.pos..self.pos + 1);
                    }
                    self.pos += 1;
                    self.line += 1;
                    at_line_start = true;
                }
                b'#' => self.skip_comment(),
                b'\\' => {
                    // Explicit line joining.
                    let mut p = self.pos + 1;
                    if self.bytes.get(p) == Some(&b'\r') {
                        p += 1;
                    }
                    if self.bytes.get(p) != Some(&b'\n') {
                        return Err(self.err("unexpected character after line continuation"));
                    }
                    self.pos = p + 1;
                    self.line += 1;
                }
                b'0'..=b'9' => self.lex_number()?,
                b'.' if matches!(self.peek(1), Some(b'0'..=b'9')) => self.lex_number()?,
                b'"' | b'\'' => self.lex_string(self.pos)?,
                _ if is_ident_start(self.src, self.pos) => self.lex_name_or_string()?,
                _ => self.lex_op()?,
            }
        }
        if let Some(&(open, line)) = self.brackets.last() {
            return Err(SyntaxError {
                line,
                message: format!("'{}' was never closed", open as char),
            });
        }
        if self.last_is_content() {
            let end = self.bytes.len();
            self.push(TokenKind::Newline, end..end);
        }
        while self.indents.len() > 1 {
            self.indents.pop();
            let end = self.bytes.len();
            self.push(TokenKind::Dedent, end..end);
        }
        let end = self.bytes.len();
        self.push(TokenKind::EndMarker, end..end);
        Ok(self.tokens)
    }

    fn last_is_content(&self) -> bool {
        matches!(
            self.tokens.last().map(|t| t.kind),
            Some(TokenKind::Name | TokenKind::Number | TokenKind::String | TokenKind::Op)
        )
    }

    fn skip_comment(&mut self) {
        while self.pos < self.bytes.len() && !matches!(self.bytes[self.pos], b'\n' | b'\r') {
            self.pos += 1;
        }
    }

    /// Measures leading whitespace of a physical line and emits indent or
    /// dedent tokens. Returns true when the line is blank or comment-only.
    fn handle_indentation(&mut self) -> Result<bool, SyntaxError> {
        let start = self.pos;
        let mut col = 0usize;
        while let Some(c) = self.peek(0) {
            match c {
                b' ' => col += 1,
                b'\t' => col = (col / 8 + 1) * 8,
                b'\x0c' => col = 0,
                _ => break,
            }
            self.pos += 1;
        }
        match self.peek(0) {
            None | Some(b'\n') | Some(b'\r') | Some(b'#') => return Ok(true),
            _ => {}
        }
        let current = *self.indents.last().unwrap_or(&0);
        if col > current {
            if self.tokens.is_empty() {
                return Err(self.err("unexpected indent"));
            }
            self.indents.push(col);
            self.push(TokenKind::Indent, start..self.pos);
        } else if col < current {
            while col < *self.indents.last().unwrap_or(&0) {
                self.indents.pop();
                self.push(TokenKind::Dedent, self.pos..self.pos);
            }
            if col != *self.indents.last().unwrap_or(&0) {
                return Err(self.err("unindent does not match any outer indentation level"));
            }
        }
        Ok(false)
    }

    fn lex_name_or_string(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        // String prefixes such as r"..." or fb'...'.
        for prefix in STRING_PREFIXES {
            let end = start + prefix.len();
            if end < self.bytes.len()
                && self
                    .src
                    .get(start..end)
                    .is_some_and(|p| p.eq_ignore_ascii_case(prefix))
                && matches!(self.bytes[end], b'"' | b'\'')
            {
                self.pos = end;
                return self.lex_string(start);
            }
        }
        let rest = &self.src[start..];
        let len = rest
            .char_indices()
            .find(|&(i, ch)| !(ch == '_' || ch.is_alphanumeric()) || (i == 0 && ch.is_numeric()))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        self.pos = start + len;
        self.push(TokenKind::Name, start..self.pos);
        Ok(())
    }

    fn lex_string(&mut self, start: usize) -> Result<(), SyntaxError> {
        let quote = self.bytes[self.pos];
        let triple = self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        let start_line = self.line;
        self.pos += if triple { 3 } else { 1 };
        loop {
            let Some(c) = self.peek(0) else {
                return Err(SyntaxError {
                    line: start_line,
                    message: if triple {
                        "unterminated triple-quoted string literal".into()
                    } else {
                        "unterminated string literal".into()
                    },
                });
            };
            match c {
                b'\\' => {
                    if matches!(self.peek(1), Some(b'\n')) {
                        self.line += 1;
                    }
                    self.pos += 2;
                }
                b'\n' | b'\r' if !triple => {
                    return Err(self.err("unterminated string literal"));
                }
                b'\n' => {
                    self.line += 1;
                    self.pos += 1;
                }
                _ if c == quote => {
                    if !triple {
                        self.pos += 1;
                        break;
                    }
                    if self.peek(1) == Some(quote) && self.peek(2) == Some(quote) {
                        self.pos += 3;
                        break;
                    }
                    self.pos += 1;
                }
                _ => self.pos += 1,
            }
        }
        self.pos = self.pos.min(self.bytes.len());
        let line = self.line;
        self.tokens.push(Token {
            kind: TokenKind::String,
            span: start..self.pos,
            line: start_line.min(line),
        });
        Ok(())
    }

    fn lex_number(&mut self) -> Result<(), SyntaxError> {
        let start = self.pos;
        let b = self.bytes;
        let digits = |p: &mut usize, pred: fn(u8) -> bool| {
            while *p < b.len() && (pred(b[*p]) || b[*p] == b'_') {
                *p += 1;
            }
        };
        let mut p = self.pos;
        if b[p] == b'0' && matches!(b.get(p + 1), Some(b'x' | b'X' | b'o' | b'O' | b'b' | b'B')) {
            p += 2;
            let pred: fn(u8) -> bool = match b[p - 1] {
                b'x' | b'X' => |c| c.is_ascii_hexdigit(),
                b'o' | b'O' => |c| (b'0'..=b'7').contains(&c),
                _ => |c| c == b'0' || c == b'1',
            };
            let before = p;
            digits(&mut p, pred);
            if p == before {
                return Err(self.err("invalid number literal"));
            }
        } else {
            digits(&mut p, |c| c.is_ascii_digit());
            if b.get(p) == Some(&b'.') {
                p += 1;
                digits(&mut p, |c| c.is_ascii_digit());
            }
            if matches!(b.get(p), Some(b'e' | b'E')) {
                let mut q = p + 1;
                if matches!(b.get(q), Some(b'+' | b'-')) {
                    q += 1;
                }
                if matches!(b.get(q), Some(b'0'..=b'9')) {
                    p = q;
                    digits(&mut p, |c| c.is_ascii_digit());
                } else {
                    return Err(self.err("invalid decimal literal"));
                }
            }
            if matches!(b.get(p), Some(b'j' | b'J')) {
                p += 1;
            }
        }
        if p < b.len() && is_ident_start(self.src, p) {
            return Err(self.err("invalid decimal literal"));
        }
        self.pos = p;
        self.push(TokenKind::Number, start..p);
        Ok(())
    }

    fn lex_op(&mut self) -> Result<(), SyntaxError> {
        let rest = &self.src[self.pos..];
        let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
            let ch = rest.chars().next().unwrap_or('?');
            return Err(self.err(format!("invalid character '{ch}'")));
        };
        let start = self.pos;
        self.pos += op.len();
        match op.as_bytes()[0] {
            c @ (b'(' | b'[' | b'{') if op.len() == 1 => self.brackets.push((c, self.line)),
            c @ (b')' | b']' | b'}') => {
                let expected = match c {
                    b')' => b'(',
                    b']' => b'[',
                    _ => b'{',
                };
                match self.brackets.pop() {
                    Some((open, _)) if open == expected => {}
                    Some((open, _)) => {
                        return Err(self.err(format!(
                            "closing parenthesis '{}' does not match opening parenthesis '{}'",
                            c as char, open as char
                        )))
                    }
                    None => return Err(self.err(format!("unmatched '{}'", c as char))),
                }
            }
            _ => {}
        }
        self.push(TokenKind::Op, start..self.pos);
        Ok(())
    }
}

fn is_ident_start(src: &str, pos: usize) -> bool {
    src[pos..]
        .chars()
        .next()
        .is_some_and(|ch| ch == '_' || ch.is_alphabetic())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn simple_assignment() {
        use TokenKind::*;
        assert_eq!(kinds("x = 1"), vec![Name, Op, Number, Newline, EndMarker]);
    }

    #[test]
    fn indentation_tokens() {
        use TokenKind::*;
        let k = kinds("if x:\n    y = 2\nz = 3\n");
        assert_eq!(
            k,
            vec![
                Name, Name, Op, Newline, Indent, Name, Op, Number, Newline, Dedent, Name, Op,
                Number, Newline, EndMarker
            ]
        );
    }

    #[test]
    fn brackets_join_lines() {
        let toks = tokenize("f(1,\n  2)\n").unwrap();
        assert_eq!(
            toks.iter().filter(|t| t.kind == TokenKind::Newline).count(),
            1
        );
    }

    #[test]
    fn spans_cover_literals() {
        let src = "pool(x, stride=2)";
        let toks = tokenize(src).unwrap();
        let num = toks.iter().find(|t| t.kind == TokenKind::Number).unwrap();
        assert_eq!(num.text(src), "2");
        assert_eq!(num.span, 15..16);
    }

    #[test]
    fn string_forms() {
        for src in [
            "s = 'a'",
            "s = \"a\\\"b\"",
            "s = r'\\d'",
            "s = f\"{x}\"",
            "s = b'\\x00'",
            "s = '''multi\nline'''",
            "s = Rb'x'",
        ] {
            let toks = tokenize(src).unwrap();
            assert_eq!(toks[2].kind, TokenKind::String, "{src}");
        }
    }

    #[test]
    fn numbers() {
        for src in ["1", "1_000", "0x1F", "0o17", "0b101", "1.5", ".5", "1e10", "2.5e-3", "3j"] {
            let toks = tokenize(src).unwrap();
            assert_eq!(toks[0].kind, TokenKind::Number, "{src}");
            assert_eq!(toks[0].text(src), src);
        }
        assert!(tokenize("1abc").is_err());
    }

    #[test]
    fn lexical_errors() {
        assert!(tokenize("x = 'open").is_err());
        assert!(tokenize("f(1, 2").is_err());
        assert!(tokenize("x = 1)").is_err());
        assert!(tokenize("x = $").is_err());
        assert!(tokenize("  x = 1").is_err());
        assert!(tokenize("if x:\n    a = 1\n  b = 2\n").is_err());
    }

    #[test]
    fn crlf_line_endings() {
        let toks = tokenize("x = 1\r\ny = 2\r\n").unwrap();
        assert_eq!(
            toks.iter().filter(|t| t.kind == TokenKind::Newline).count(),
            2
        );
    }
}
