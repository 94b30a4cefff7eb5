//! Tokenizer for the C-style scripting profile.
//!
//! Produces a flat token stream with byte offsets. Comments and whitespace
//! are dropped, but every token remembers whether a line terminator preceded
//! it so the parser can apply automatic semicolon insertion.

use super::ParseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Ident,
    Number,
    String,
    Template,
    Regex,
    Punct,
    Eof,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
    pub newline_before: bool,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

// Longest first.
const PUNCTUATORS: &[&str] = &[
    ">>>=", "...", "===", "!==", "**=", "<<=", ">>=", ">>>", "&&=", "||=", "??=", "=>", "==",
    "!=", "<=", ">=", "&&", "||", "??", "?.", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=",
    "|=", "^=", "**", "<<", ">>", "{", "}", "(", ")", "[", "]", ";", ",", "<", ">", "+", "-",
    "*", "/", "%", "&", "|", "^", "!", "~", "?", ":", "=", ".", "@", "#",
];

/// Keywords after which a `/` starts a regular expression rather than a division.
const REGEX_PREFIX_KEYWORDS: &[&str] = &[
    "return", "typeof", "case", "do", "else", "in", "of", "new", "delete", "void", "throw",
    "instanceof", "yield", "await",
];

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    Lexer { src, bytes: src.as_bytes(), pos: 0, tokens: Vec::new() }.run()
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    tokens: Vec<Token>,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_part(c: char) -> bool {
    is_ident_start(c) || c.is_ascii_digit() || c == '\u{200c}' || c == '\u{200d}'
}

impl<'a> Lexer<'a> {
    fn run(mut self) -> Result<Vec<Token>, ParseError> {
        loop {
            let newline = self.skip_trivia()?;
            if self.pos >= self.bytes.len() {
                self.tokens.push(Token {
                    kind: TokenKind::Eof,
                    start: self.pos,
                    end: self.pos,
                    newline_before: true,
                });
                return Ok(self.tokens);
            }
            let start = self.pos;
            let kind = self.next_token()?;
            self.tokens.push(Token { kind, start, end: self.pos, newline_before: newline });
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn error(&self, at: usize, msg: impl Into<String>) -> ParseError {
        ParseError::at(self.src, at, msg)
    }

    /// Skips whitespace and comments; reports whether a line break was seen.
    fn skip_trivia(&mut self) -> Result<bool, ParseError> {
        let mut newline = false;
        while let Some(c) = self.peek_char() {
            if c == '\n' || c == '\r' || c == '\u{2028}' || c == '\u{2029}' {
                newline = true;
                self.pos += c.len_utf8();
            } else if c.is_whitespace() || c == '\u{feff}' {
                self.pos += c.len_utf8();
            } else if self.src[self.pos..].starts_with("//") {
                while let Some(c) = self.peek_char() {
                    if c == '\n' || c == '\r' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
            } else if self.src[self.pos..].starts_with("/*") {
                let open = self.pos;
                match self.src[self.pos + 2..].find("*/") {
                    Some(rel) => {
                        let body = &self.src[self.pos + 2..self.pos + 2 + rel];
                        if body.contains('\n') || body.contains('\r') {
                            newline = true;
                        }
                        self.pos += rel + 4;
                    }
                    None => return Err(self.error(open, "unterminated block comment")),
                }
            } else if self.pos == 0 && self.src.starts_with("#!") {
                while let Some(c) = self.peek_char() {
                    if c == '\n' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
            } else {
                break;
            }
        }
        Ok(newline)
    }

    fn next_token(&mut self) -> Result<TokenKind, ParseError> {
        let c = self.peek_char().expect("caller checked for eof");
        if is_ident_start(c) || c == '\\' {
            self.ident();
            return Ok(TokenKind::Ident);
        }
        if c.is_ascii_digit()
            || (c == '.' && self.bytes.get(self.pos + 1).is_some_and(u8::is_ascii_digit))
        {
            return self.number();
        }
        match c {
            '"' | '\'' => self.string(c),
            '`' => self.template(),
            '/' if self.regex_allowed() => self.regex(),
            _ => self.punct(),
        }
    }

    fn ident(&mut self) {
        while let Some(c) = self.peek_char() {
            if is_ident_part(c) {
                self.pos += c.len_utf8();
            } else if c == '\\' {
                // \uXXXX escape inside an identifier
                self.pos += 1;
                while self.peek_char().is_some_and(|c| c.is_ascii_alphanumeric() || c == '{' || c == '}') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<TokenKind, ParseError> {
        let start = self.pos;
        let rest = &self.src[self.pos..];
        let lower = rest.get(..2).map(str::to_ascii_lowercase);
        if matches!(lower.as_deref(), Some("0x" | "0o" | "0b")) {
            self.pos += 2;
            while self.peek_char().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.pos += 1;
            }
        } else {
            while self.peek_char().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                self.pos += 1;
            }
            if self.peek_char() == Some('.') {
                self.pos += 1;
                while self.peek_char().is_some_and(|c| c.is_ascii_digit() || c == '_') {
                    self.pos += 1;
                }
            }
            if matches!(self.peek_char(), Some('e' | 'E')) {
                self.pos += 1;
                if matches!(self.peek_char(), Some('+' | '-')) {
                    self.pos += 1;
                }
                let digits = self.pos;
                while self.peek_char().is_some_and(|c| c.is_ascii_digit()) {
                    self.pos += 1;
                }
                if digits == self.pos {
                    return Err(self.error(start, "malformed exponent"));
                }
            }
        }
        if self.peek_char() == Some('n') {
            self.pos += 1;
        }
        if self.peek_char().is_some_and(is_ident_start) {
            return Err(self.error(self.pos, "identifier starts immediately after numeric literal"));
        }
        Ok(TokenKind::Number)
    }

    fn string(&mut self, quote: char) -> Result<TokenKind, ParseError> {
        let start = self.pos;
        self.pos += 1;
        while let Some(c) = self.peek_char() {
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    if let Some(n) = self.peek_char() {
                        self.pos += n.len_utf8();
                    }
                }
                '\n' | '\r' => break,
                c if c == quote => return Ok(TokenKind::String),
                _ => {}
            }
        }
        Err(self.error(start, "unterminated string literal"))
    }

    /// Template literals are kept as a single token; `${...}` substitutions
    /// are skipped with brace matching that understands nested strings.
    fn template(&mut self) -> Result<TokenKind, ParseError> {
        let start = self.pos;
        self.pos += 1;
        while let Some(c) = self.peek_char() {
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    if let Some(n) = self.peek_char() {
                        self.pos += n.len_utf8();
                    }
                }
                '`' => return Ok(TokenKind::Template),
                '$' if self.peek_char() == Some('{') => {
                    self.pos += 1;
                    self.skip_substitution(start)?;
                }
                _ => {}
            }
        }
        Err(self.error(start, "unterminated template literal"))
    }

    fn skip_substitution(&mut self, template_start: usize) -> Result<(), ParseError> {
        let mut depth = 1usize;
        while let Some(c) = self.peek_char() {
            match c {
                '{' => {
                    depth += 1;
                    self.pos += 1;
                }
                '}' => {
                    depth -= 1;
                    self.pos += 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                '"' | '\'' => {
                    self.string(c)?;
                }
                '`' => {
                    self.template()?;
                }
                _ => self.pos += c.len_utf8(),
            }
        }
        Err(self.error(template_start, "unterminated template substitution"))
    }

    fn regex_allowed(&self) -> bool {
        let Some(prev) = self.tokens.last() else {
            return true;
        };
        let text = prev.text(self.src);
        match prev.kind {
            TokenKind::Punct => !matches!(text, ")" | "]" | "}"),
            TokenKind::Ident => REGEX_PREFIX_KEYWORDS.contains(&text),
            _ => false,
        }
    }

    fn regex(&mut self) -> Result<TokenKind, ParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut in_class = false;
        loop {
            let Some(c) = self.peek_char() else {
                return Err(self.error(start, "unterminated regular expression"));
            };
            self.pos += c.len_utf8();
            match c {
                '\\' => {
                    if let Some(n) = self.peek_char() {
                        self.pos += n.len_utf8();
                    }
                }
                '[' => in_class = true,
                ']' => in_class = false,
                '/' if !in_class => break,
                '\n' | '\r' => return Err(self.error(start, "unterminated regular expression")),
                _ => {}
            }
        }
        while self.peek_char().is_some_and(is_ident_part) {
            self.pos += 1;
        }
        Ok(TokenKind::Regex)
    }

    fn punct(&mut self) -> Result<TokenKind, ParseError> {
        let rest = &self.src[self.pos..];
        for p in PUNCTUATORS {
            if rest.starts_with(p) {
                // `a?.5:1` is a conditional, not optional chaining
                if *p == "?." && rest.as_bytes().get(2).is_some_and(u8::is_ascii_digit) {
                    continue;
                }
                self.pos += p.len();
                return Ok(TokenKind::Punct);
            }
        }
        Err(self.error(self.pos, format!("unexpected character {:?}", self.peek_char().unwrap_or(' '))))
    }
}
