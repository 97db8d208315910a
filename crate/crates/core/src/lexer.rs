//! Java tokenizer.
//!
//! Used for metric token streams, for expression parsing, and for brace
//! matching when extracting methods from free-form completions. Comments
//! are dropped from the token stream.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Keyword,
    IntLit,
    FloatLit,
    StringLit,
    CharLit,
    Operator,
    Separator,
    At,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub kind: TokenKind,
    pub text: &'a str,
    /// Byte offset into the source.
    pub start: usize,
    /// 1-based line.
    pub line: u32,
}

impl Token<'_> {
    pub fn end(&self) -> usize {
        self.start + self.text.len()
    }

    pub fn is_op(&self, op: &str) -> bool {
        matches!(self.kind, TokenKind::Operator | TokenKind::Separator) && self.text == op
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub message: String,
}

impl fmt::Display for LexError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for LexError {}

/// Java reserved words. Also serves as the keyword list for the weighted
/// n-gram component of CodeBLEU.
pub const KEYWORDS: &[&str] = &[
    "abstract",
    "assert",
    "boolean",
    "break",
    "byte",
    "case",
    "catch",
    "char",
    "class",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extends",
    "final",
    "finally",
    "float",
    "for",
    "goto",
    "if",
    "implements",
    "import",
    "instanceof",
    "int",
    "interface",
    "long",
    "native",
    "new",
    "package",
    "private",
    "protected",
    "public",
    "return",
    "short",
    "static",
    "strictfp",
    "super",
    "switch",
    "synchronized",
    "this",
    "throw",
    "throws",
    "transient",
    "try",
    "void",
    "volatile",
    "while",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

const OPERATORS: &[&str] = &[
    ">>>=", "<<=", ">>=", ">>>", "...", "->", "::", "++", "--", "&&", "||", "==", "!=", "<=", ">=", "+=", "-=", "*=", "/=", "&=", "|=",
    "^=", "%=", "<<", ">>", "=", ">", "<", "!", "~", "?", ":", "+", "-", "*", "/", "&", "|", "^", "%",
];

const SEPARATORS: &[char] = &['(', ')', '{', '}', '[', ']', ';', ',', '.'];

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    lossy: bool,
}

impl<'a> Lexer<'a> {
    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek(0)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn err(&self, message: impl Into<String>) -> LexError {
        LexError { line: self.line, message: message.into() }
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(b), _) if b.is_ascii_whitespace() => {
                    self.bump();
                }
                (Some(b'/'), Some(b'/')) => {
                    while let Some(b) = self.peek(0) {
                        if b == b'\n' {
                            break;
                        }
                        self.bump();
                    }
                }
                (Some(b'/'), Some(b'*')) => {
                    self.pos += 2;
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some(b'*'), Some(b'/')) => {
                                self.pos += 2;
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) if self.lossy => return Ok(()),
                            (None, _) => return Err(self.err("unterminated block comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    fn quoted(&mut self, quote: u8) -> Result<(), LexError> {
        // text block
        if quote == b'"' && self.peek(1) == Some(b'"') && self.peek(2) == Some(b'"') {
            self.pos += 3;
            loop {
                match self.peek(0) {
                    Some(b'\\') => {
                        self.bump();
                        self.bump();
                    }
                    Some(b'"') if self.peek(1) == Some(b'"') && self.peek(2) == Some(b'"') => {
                        self.pos += 3;
                        return Ok(());
                    }
                    Some(_) => {
                        self.bump();
                    }
                    None if self.lossy => return Ok(()),
                    None => return Err(self.err("unterminated text block")),
                }
            }
        }
        self.bump();
        loop {
            match self.peek(0) {
                Some(b'\\') => {
                    self.bump();
                    self.bump();
                }
                Some(b) if b == quote => {
                    self.bump();
                    return Ok(());
                }
                Some(b'\n') | None if self.lossy => return Ok(()),
                Some(b'\n') | None => return Err(self.err("unterminated literal")),
                Some(_) => {
                    self.bump();
                }
            }
        }
    }

    fn number(&mut self) -> TokenKind {
        let mut kind = TokenKind::IntLit;
        if self.peek(0) == Some(b'0') && matches!(self.peek(1), Some(b'x' | b'X' | b'b' | b'B')) {
            self.pos += 2;
            while matches!(self.peek(0), Some(b) if b.is_ascii_hexdigit() || b == b'_') {
                self.pos += 1;
            }
        } else {
            while let Some(b) = self.peek(0) {
                match b {
                    b'0'..=b'9' | b'_' => self.pos += 1,
                    b'.' if kind == TokenKind::IntLit => match self.peek(1) {
                        Some(c) if c == b'.' || c.is_ascii_alphabetic() => break,
                        _ => {
                            kind = TokenKind::FloatLit;
                            self.pos += 1;
                        }
                    },
                    b'e' | b'E' => {
                        kind = TokenKind::FloatLit;
                        self.pos += 1;
                        if matches!(self.peek(0), Some(b'+' | b'-')) {
                            self.pos += 1;
                        }
                    }
                    _ => break,
                }
            }
        }
        match self.peek(0) {
            Some(b'l' | b'L') => self.pos += 1,
            Some(b'f' | b'F' | b'd' | b'D') => {
                kind = TokenKind::FloatLit;
                self.pos += 1;
            }
            _ => {}
        }
        kind
    }

    fn next_token(&mut self) -> Result<Option<Token<'a>>, LexError> {
        self.skip_trivia()?;
        let start = self.pos;
        let line = self.line;
        let Some(b) = self.peek(0) else {
            return Ok(None);
        };
        let kind = if b == b'_' || b == b'$' || b.is_ascii_alphabetic() || b >= 0x80 {
            while let Some(c) = self.peek(0) {
                if c == b'_' || c == b'$' || c.is_ascii_alphanumeric() || c >= 0x80 {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            if is_keyword(&self.src[start..self.pos]) {
                TokenKind::Keyword
            } else {
                TokenKind::Ident
            }
        } else if b.is_ascii_digit() || (b == b'.' && matches!(self.peek(1), Some(b'0'..=b'9'))) {
            self.number()
        } else if b == b'"' {
            self.quoted(b'"')?;
            TokenKind::StringLit
        } else if b == b'\'' {
            self.quoted(b'\'')?;
            TokenKind::CharLit
        } else if b == b'@' {
            self.pos += 1;
            TokenKind::At
        } else if let Some(op) = OPERATORS.iter().find(|op| self.src[start..].starts_with(**op)) {
            if *op == "..." {
                self.pos += 3;
                TokenKind::Separator
            } else {
                self.pos += op.len();
                TokenKind::Operator
            }
        } else if SEPARATORS.contains(&(b as char)) {
            self.pos += 1;
            TokenKind::Separator
        } else if self.lossy {
            // skip one full char
            let ch = self.src[start..].chars().next().map_or(1, char::len_utf8);
            self.pos += ch;
            return self.next_token();
        } else {
            return Err(self.err(format!("unexpected character {:?}", b as char)));
        };
        Ok(Some(Token { kind, text: &self.src[start..self.pos], start, line }))
    }
}

fn run(src: &str, lossy: bool) -> Result<Vec<Token<'_>>, LexError> {
    let mut lx = Lexer { src, bytes: src.as_bytes(), pos: 0, line: 1, lossy };
    let mut out = Vec::new();
    while let Some(tok) = lx.next_token()? {
        out.push(tok);
    }
    Ok(out)
}

/// Strict tokenization; fails on unterminated literals/comments or stray
/// characters.
pub fn tokenize(src: &str) -> Result<Vec<Token<'_>>, LexError> {
    run(src, false)
}

/// Best-effort tokenization that never fails. Unterminated constructs run
/// to end of line/input and unknown characters are skipped.
pub fn tokenize_lossy(src: &str) -> Vec<Token<'_>> {
    run(src, true).unwrap_or_default()
}

/// Token texts with comments and whitespace removed.
pub fn token_texts(src: &str) -> Vec<&str> {
    tokenize_lossy(src).into_iter().map(|t| t.text).collect()
}
