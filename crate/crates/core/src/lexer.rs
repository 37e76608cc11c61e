//! Scanner for Layers source text.
//!
//! Produces a flat token stream terminated by [`TokenKind::Eof`]. Comments
//! (`//` to end of line) and whitespace are dropped. Lexing stops at the
//! first error.

use std::fmt;

use thiserror::Error;

/// Location of a lexeme in the source buffer. Lines and columns are 1-based;
/// columns count characters, `offset` and `len` count bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
    pub len: usize,
}

impl Span {
    pub fn new(line: u32, col: u32, offset: usize, len: usize) -> Self {
        Span { line, col, offset, len }
    }

    pub fn end(&self) -> usize {
        self.offset + self.len
    }

    /// Smallest span covering both `self` and `other`; line/col come from
    /// whichever starts first.
    pub fn join(&self, other: Span) -> Span {
        let (first, _) = if self.offset <= other.offset { (*self, other) } else { (other, *self) };
        let end = self.end().max(other.end());
        Span { len: end - first.offset, ..first }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

macro_rules! keywords {
    ($($variant:ident => $text:literal,)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum TokenKind {
            $($variant,)*
            LBrace,
            RBrace,
            LBrack,
            RBrack,
            LParen,
            RParen,
            Dot,
            Comma,
            Eq,
            Arrow,
            Id,
            Cte,
            NFile,
            Eof,
        }

        impl TokenKind {
            /// Looks up a reserved word. Matching is exact, so `Batch` is not `batch`.
            pub fn keyword(text: &str) -> Option<TokenKind> {
                match text {
                    $($text => Some(TokenKind::$variant),)*
                    _ => None,
                }
            }

            pub const KEYWORDS: &'static [TokenKind] = &[$(TokenKind::$variant,)*];

            /// Human readable spelling used in diagnostics and by the pretty printer.
            pub fn as_str(&self) -> &'static str {
                match self {
                    $(TokenKind::$variant => $text,)*
                    TokenKind::LBrace => "{",
                    TokenKind::RBrace => "}",
                    TokenKind::LBrack => "[",
                    TokenKind::RBrack => "]",
                    TokenKind::LParen => "(",
                    TokenKind::RParen => ")",
                    TokenKind::Dot => ".",
                    TokenKind::Comma => ",",
                    TokenKind::Eq => "=",
                    TokenKind::Arrow => "->",
                    TokenKind::Id => "identifier",
                    TokenKind::Cte => "number",
                    TokenKind::NFile => "file name",
                    TokenKind::Eof => "end of file",
                }
            }
        }
    };
}

keywords! {
    Const => "const",
    Batch => "batch",
    Threads => "threads",
    Log => "log",
    Data => "data",
    Filename => "filename",
    Ascii => "ascii",
    Binary => "binary",
    Network => "network",
    Tr => "tr",
    Ts => "ts",
    Va => "va",
    FI => "FI",
    CI => "CI",
    F => "F",
    FO => "FO",
    C => "C",
    MP => "MP",
    CA => "CA",
    Nz => "nz",
    Nr => "nr",
    Nc => "nc",
    Cr => "cr",
    Cc => "cc",
    Numnodes => "numnodes",
    Local => "local",
    Classification => "classification",
    Regression => "regression",
    Autoencoder => "autoencoder",
    Nk => "nk",
    Kr => "kr",
    Kc => "kc",
    Rpad => "rpad",
    Cpad => "cpad",
    Stride => "stride",
    Sizer => "sizer",
    Sizec => "sizec",
    Script => "script",
    Mu => "mu",
    Mmu => "mmu",
    L2 => "l2",
    L1 => "l1",
    Maxn => "maxn",
    Drop => "drop",
    Noiser => "noiser",
    Noisesd => "noisesd",
    Brightness => "brightness",
    Contrast => "contrast",
    Lambda => "lambda",
    Noiseb => "noiseb",
    Bn => "bn",
    Act => "act",
    Shift => "shift",
    Flip => "flip",
    Balance => "balance",
    Printkernels => "printkernels",
    Train => "train",
    Load => "load",
    Save => "save",
    Testout => "testout",
    Zscore => "zscore",
    Yuv => "yuv",
    Center => "center",
    Div => "div",
    Test => "test",
}

impl TokenKind {
    pub fn is_keyword(&self) -> bool {
        Self::KEYWORDS.contains(self)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Id | TokenKind::Cte | TokenKind::NFile | TokenKind::Eof => f.write_str(self.as_str()),
            _ => write!(f, "`{}`", self.as_str()),
        }
    }
}

/// An unsigned decimal literal kept as written, so integer contexts can
/// reject fractions without going through floating point.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cte {
    pub int: String,
    pub frac: Option<String>,
}

impl Cte {
    pub fn integer(value: u64) -> Cte {
        Cte { int: value.to_string(), frac: None }
    }

    /// Parses `digits(.digits)?`; anything else yields `None`.
    pub fn parse(text: &str) -> Option<Cte> {
        let (int, frac) = match text.split_once('.') {
            Some((i, f)) => (i, Some(f)),
            None => (text, None),
        };
        let all_digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int) || frac.is_some_and(|f| !all_digits(f)) {
            return None;
        }
        Some(Cte { int: int.to_string(), frac: frac.map(str::to_string) })
    }

    pub fn as_f64(&self) -> f64 {
        self.to_string().parse().expect("cte is always a valid float literal")
    }

    /// True when a fraction part with a non-zero digit was written (`2.5`, not `2.0`).
    pub fn is_fractional(&self) -> bool {
        self.frac.as_deref().is_some_and(|f| f.bytes().any(|b| b != b'0'))
    }

    /// Integer value, or `None` when fractional or too large for `u64`.
    pub fn as_u64(&self) -> Option<u64> {
        if self.is_fractional() {
            return None;
        }
        self.int.parse().ok()
    }
}

impl fmt::Display for Cte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.frac {
            Some(frac) => write!(f, "{}.{}", self.int, frac),
            None => f.write_str(&self.int),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenValue {
    Number(Cte),
    Path(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub span: Span,
    pub value: Option<TokenValue>,
}

impl Token {
    pub fn cte(&self) -> Option<&Cte> {
        match &self.value {
            Some(TokenValue::Number(c)) => Some(c),
            _ => None,
        }
    }

    pub fn path(&self) -> Option<&str> {
        match &self.value {
            Some(TokenValue::Path(p)) => Some(p),
            _ => None,
        }
    }

    /// Short description for diagnostics: keywords and symbols by spelling,
    /// identifiers and literals with their text.
    pub fn describe(&self) -> String {
        match self.kind {
            TokenKind::Id => format!("identifier `{}`", self.lexeme),
            TokenKind::Cte => format!("number `{}`", self.lexeme),
            TokenKind::NFile => format!("file name {}", self.lexeme),
            TokenKind::Eof => "end of file".to_string(),
            k => k.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexErrorKind {
    UnexpectedChar(char),
    UnterminatedFile,
    EmptyFile,
    MalformedNumber,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{}", self.message())]
pub struct LexError {
    pub kind: LexErrorKind,
    pub span: Span,
}

impl LexError {
    pub fn code(&self) -> &'static str {
        match self.kind {
            LexErrorKind::UnexpectedChar(_) => "L001",
            LexErrorKind::UnterminatedFile => "L002",
            LexErrorKind::EmptyFile => "L003",
            LexErrorKind::MalformedNumber => "L004",
        }
    }

    pub fn message(&self) -> String {
        match self.kind {
            LexErrorKind::UnexpectedChar('\0') => "unexpected NUL character".to_string(),
            LexErrorKind::UnexpectedChar(c) if c.is_control() => {
                format!("unexpected character U+{:04X}", c as u32)
            }
            LexErrorKind::UnexpectedChar(c) => format!("unexpected character `{c}`"),
            LexErrorKind::UnterminatedFile => {
                "unterminated file name (a blank, newline or NUL appears before the closing quote)".to_string()
            }
            LexErrorKind::EmptyFile => "empty file name".to_string(),
            LexErrorKind::MalformedNumber => "malformed number".to_string(),
        }
    }
}

fn is_letter(b: u8) -> bool {
    b == b'_' || b.is_ascii_alphabetic()
}

fn is_blank(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r')
}

struct Scanner<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Scanner<'a> {
    fn peek_at(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    /// Advances over `n` bytes, keeping line/column in sync.
    fn bump(&mut self, n: usize) {
        let end = self.pos + n;
        for ch in self.src[self.pos..end].chars() {
            if ch == '\n' {
                self.line += 1;
                self.col = 1;
            } else {
                self.col += 1;
            }
        }
        self.pos = end;
    }

    fn span_from(&self, start: usize, len: usize) -> Span {
        Span::new(self.line, self.col, start, len)
    }

    fn skip_trivia(&mut self) {
        loop {
            match self.peek_at(0) {
                Some(b) if is_blank(b) => self.bump(1),
                Some(b'/') if self.peek_at(1) == Some(b'/') => {
                    let rest = &self.src[self.pos..];
                    let n = rest.find('\n').unwrap_or(rest.len());
                    self.bump(n);
                }
                _ => return,
            }
        }
    }

    fn token(&self, kind: TokenKind, start: usize, len: usize, value: Option<TokenValue>) -> Token {
        Token {
            kind,
            lexeme: self.src[start..start + len].to_string(),
            span: self.span_from(start, len),
            value,
        }
    }

    fn next_token(&mut self) -> Result<Token, LexError> {
        self.skip_trivia();
        let start = self.pos;
        let Some(b) = self.peek_at(0) else {
            return Ok(self.token(TokenKind::Eof, start, 0, None));
        };

        let simple = match b {
            b'{' => Some(TokenKind::LBrace),
            b'}' => Some(TokenKind::RBrace),
            b'[' => Some(TokenKind::LBrack),
            b']' => Some(TokenKind::RBrack),
            b'(' => Some(TokenKind::LParen),
            b')' => Some(TokenKind::RParen),
            b'.' => Some(TokenKind::Dot),
            b',' => Some(TokenKind::Comma),
            b'=' => Some(TokenKind::Eq),
            _ => None,
        };
        if let Some(kind) = simple {
            let tok = self.token(kind, start, 1, None);
            self.bump(1);
            return Ok(tok);
        }

        if b == b'-' && self.peek_at(1) == Some(b'>') {
            let tok = self.token(TokenKind::Arrow, start, 2, None);
            self.bump(2);
            return Ok(tok);
        }

        if is_letter(b) {
            let len = self.bytes[start..]
                .iter()
                .take_while(|&&c| is_letter(c) || c.is_ascii_digit())
                .count();
            let text = &self.src[start..start + len];
            let kind = TokenKind::keyword(text).unwrap_or(TokenKind::Id);
            let tok = self.token(kind, start, len, None);
            self.bump(len);
            return Ok(tok);
        }

        if b.is_ascii_digit() {
            return self.number(start);
        }

        if b == b'"' {
            return self.file_name(start);
        }

        let ch = self.src[start..].chars().next().expect("pos is on a char boundary");
        Err(LexError {
            kind: LexErrorKind::UnexpectedChar(ch),
            span: self.span_from(start, ch.len_utf8()),
        })
    }

    fn number(&mut self, start: usize) -> Result<Token, LexError> {
        let digits_from = |at: usize| self.bytes[at..].iter().take_while(|c| c.is_ascii_digit()).count();
        let mut len = digits_from(start);
        // a fraction needs at least one digit after the dot; `1.` is CTE DOT
        if self.bytes.get(start + len) == Some(&b'.') {
            let frac = digits_from(start + len + 1);
            if frac > 0 {
                len += 1 + frac;
            }
        }
        if let Some(&next) = self.bytes.get(start + len) {
            if is_letter(next) {
                let bad = len + self.bytes[start + len..]
                    .iter()
                    .take_while(|&&c| is_letter(c) || c.is_ascii_digit())
                    .count();
                return Err(LexError { kind: LexErrorKind::MalformedNumber, span: self.span_from(start, bad) });
            }
        }
        let text = &self.src[start..start + len];
        let cte = Cte::parse(text).expect("scanned digits form a cte");
        let tok = self.token(TokenKind::Cte, start, len, Some(TokenValue::Number(cte)));
        self.bump(len);
        Ok(tok)
    }

    /// A file name runs from the opening quote over non-blank, non-NUL
    /// bytes; the longest prefix of that run ending in a quote is the token.
    fn file_name(&mut self, start: usize) -> Result<Token, LexError> {
        let run = self.bytes[start + 1..]
            .iter()
            .take_while(|&&c| c != 0 && !is_blank(c))
            .count();
        let body = &self.bytes[start + 1..start + 1 + run];
        let Some(close) = body.iter().rposition(|&c| c == b'"') else {
            return Err(LexError {
                kind: LexErrorKind::UnterminatedFile,
                span: self.span_from(start, run + 1),
            });
        };
        if close == 0 {
            return Err(LexError { kind: LexErrorKind::EmptyFile, span: self.span_from(start, 2) });
        }
        let len = close + 2;
        let path = self.src[start + 1..start + 1 + close].to_string();
        let tok = self.token(TokenKind::NFile, start, len, Some(TokenValue::Path(path)));
        self.bump(len);
        Ok(tok)
    }
}

/// Splits `source` into tokens, ending with a single `Eof` token.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    if let Some(pos) = source.bytes().position(|b| b == 0) {
        let mut sc = Scanner { src: source, bytes: source.as_bytes(), pos: 0, line: 1, col: 1 };
        sc.bump(pos);
        return Err(LexError { kind: LexErrorKind::UnexpectedChar('\0'), span: sc.span_from(pos, 1) });
    }
    let mut sc = Scanner { src: source, bytes: source.as_bytes(), pos: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    loop {
        let tok = sc.next_token()?;
        let done = tok.kind == TokenKind::Eof;
        out.push(tok);
        if done {
            return Ok(out);
        }
    }
}
