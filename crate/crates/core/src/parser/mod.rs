//! Recursive-descent parser for Layers.
//!
//! Grammar (one-or-more lists written with `+`):
//!
//! ```text
//! experiment  -> constants? def+ EOF
//! constants   -> 'const' '{' const+ '}'
//! const       -> 'batch' '=' CTE | 'threads' '=' CTE | 'log' '=' NFILE
//! def         -> data | network | script
//! data        -> 'data' '{' datum+ '}'
//! datum       -> ID '[' datumpar (',' datumpar)* ']'
//! datumpar    -> 'filename' '=' NFILE | 'ascii' | 'binary'
//! network     -> 'network' ID '{' netdata statement+ '}'
//! netdata     -> 'data' 'tr' ID ('data' ('va' | 'ts') ID)*
//! statement   -> layer | namelayer '->' namelayer
//! layer       -> 'FI' ID | 'CA' ID
//!              | 'CI' ID '[' ciparam (',' ciparam)* ']'
//!              | 'F' ID '[' (fparam (',' fparam)*)? ']'
//!              | 'FO' ID '[' foparam+ ']'
//!              | 'C' ID '[' cparam (',' cparam)* ']'
//!              | 'MP' ID '[' mpparam (',' mpparam)* ']'
//! fparam      -> 'numnodes' '=' CTE | 'local'
//! namelayer   -> ID '.' ID | ID
//! script      -> 'script' '{' action+ '}'
//! action      -> 'train' '(' CTE ',' CTE (',' ID)* ')'
//!              | ID '.' ID '.' (param '=' CTE | 'printkernels' '(' NFILE ')')
//!              | ID '.' (param '=' CTE | netcmd)
//! netcmd      -> 'train' '(' CTE ')' | 'test' '(' ID? ')' | 'load' '(' NFILE ')'
//!              | 'save' '(' NFILE ')' | 'testout' '(' NFILE ')'
//!              | 'zscore' '(' ID? ')' | 'center' '(' ID? ')' | 'yuv' '(' ')'
//!              | 'div' '(' CTE ')'
//! ```

mod dump;

pub use dump::dump_ast;

use std::fmt;

use thiserror::Error;

use crate::ast::*;
use crate::lexer::{tokenize, Cte, LexError, Span, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseError {
    pub expected: Vec<TokenKind>,
    pub found: Token,
    pub span: Span,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.expected.as_slice() {
            [] => write!(f, "unexpected {}", self.found.describe()),
            [one] => write!(f, "expected {}, found {}", one, self.found.describe()),
            many => {
                let list: Vec<String> = many.iter().map(|k| k.to_string()).collect();
                write!(f, "expected one of {}; found {}", list.join(", "), self.found.describe())
            }
        }
    }
}

/// Either stage of the front end that halts on its first error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

impl SyntaxError {
    pub fn span(&self) -> Span {
        match self {
            SyntaxError::Lex(e) => e.span,
            SyntaxError::Parse(e) => e.span,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            SyntaxError::Lex(e) => e.code(),
            SyntaxError::Parse(_) => "P001",
        }
    }
}

/// Lexes and parses a whole program.
pub fn parse_source(source: &str) -> Result<Experiment, SyntaxError> {
    let tokens = tokenize(source)?;
    Ok(parse(&tokens)?)
}

/// Parses a token stream that ends with `Eof`.
pub fn parse(tokens: &[Token]) -> Result<Experiment, ParseError> {
    assert!(
        tokens.last().is_some_and(|t| t.kind == TokenKind::Eof),
        "token stream must end with EOF"
    );
    Parser { tokens, pos: 0 }.experiment()
}

const LAYER_KEYWORDS: [TokenKind; 7] = [
    TokenKind::FI,
    TokenKind::CI,
    TokenKind::F,
    TokenKind::FO,
    TokenKind::C,
    TokenKind::MP,
    TokenKind::CA,
];

const PARAM_KEYWORDS: [(TokenKind, ParamName); 17] = [
    (TokenKind::Mu, ParamName::Mu),
    (TokenKind::Mmu, ParamName::Mmu),
    (TokenKind::L2, ParamName::L2),
    (TokenKind::L1, ParamName::L1),
    (TokenKind::Maxn, ParamName::Maxn),
    (TokenKind::Drop, ParamName::Drop),
    (TokenKind::Noiser, ParamName::Noiser),
    (TokenKind::Noisesd, ParamName::Noisesd),
    (TokenKind::Noiseb, ParamName::Noiseb),
    (TokenKind::Brightness, ParamName::Brightness),
    (TokenKind::Contrast, ParamName::Contrast),
    (TokenKind::Lambda, ParamName::Lambda),
    (TokenKind::Bn, ParamName::Bn),
    (TokenKind::Act, ParamName::Act),
    (TokenKind::Shift, ParamName::Shift),
    (TokenKind::Flip, ParamName::Flip),
    (TokenKind::Balance, ParamName::Balance),
];

const NET_COMMANDS: [TokenKind; 9] = [
    TokenKind::Train,
    TokenKind::Test,
    TokenKind::Load,
    TokenKind::Save,
    TokenKind::Testout,
    TokenKind::Zscore,
    TokenKind::Center,
    TokenKind::Yuv,
    TokenKind::Div,
];

fn param_name(kind: TokenKind) -> Option<ParamName> {
    PARAM_KEYWORDS.iter().find(|(k, _)| *k == kind).map(|(_, p)| *p)
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

type PResult<T> = Result<T, ParseError>;

impl<'t> Parser<'t> {
    fn peek(&self) -> &'t Token {
        self.peek_nth(0)
    }

    fn peek_nth(&self, n: usize) -> &'t Token {
        let last = self.tokens.len() - 1;
        &self.tokens[(self.pos + n).min(last)]
    }

    fn at(&self, kind: TokenKind) -> bool {
        self.peek().kind == kind
    }

    fn bump(&mut self) -> &'t Token {
        let tok = self.peek();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn prev_span(&self) -> Span {
        self.tokens[self.pos.saturating_sub(1)].span
    }

    fn error(&self, expected: &[TokenKind]) -> ParseError {
        let found = self.peek().clone();
        let span = found.span;
        ParseError { expected: expected.to_vec(), found, span }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<&'t Token> {
        if self.at(kind) {
            Ok(self.bump())
        } else {
            Err(self.error(&[kind]))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        let tok = self.expect(TokenKind::Id)?;
        Ok(Ident::new(tok.lexeme.clone(), tok.span))
    }

    fn cte(&mut self) -> PResult<Cte> {
        let tok = self.expect(TokenKind::Cte)?;
        Ok(tok.cte().expect("CTE token carries a value").clone())
    }

    fn file(&mut self) -> PResult<String> {
        let tok = self.expect(TokenKind::NFile)?;
        Ok(tok.path().expect("NFILE token carries a path").to_string())
    }

    fn experiment(&mut self) -> PResult<Experiment> {
        let constants = if self.at(TokenKind::Const) { Some(self.const_block()?) } else { None };
        let mut definitions = Vec::new();
        loop {
            let def = match self.peek().kind {
                TokenKind::Data => Definition::Data(self.data_block()?),
                TokenKind::Network => Definition::Network(self.network()?),
                TokenKind::Script => Definition::Script(self.script()?),
                TokenKind::Eof if !definitions.is_empty() => break,
                _ => {
                    let mut expected = vec![TokenKind::Data, TokenKind::Network, TokenKind::Script];
                    if constants.is_none() && definitions.is_empty() {
                        expected.insert(0, TokenKind::Const);
                    }
                    if !definitions.is_empty() {
                        expected.push(TokenKind::Eof);
                    }
                    return Err(self.error(&expected));
                }
            };
            definitions.push(def);
        }
        Ok(Experiment { constants, definitions })
    }

    fn const_block(&mut self) -> PResult<ConstBlock> {
        let start = self.expect(TokenKind::Const)?.span;
        self.expect(TokenKind::LBrace)?;
        let mut entries = Vec::new();
        loop {
            let first = self.peek().span;
            let kind = match self.peek().kind {
                TokenKind::Batch => {
                    self.bump();
                    self.expect(TokenKind::Eq)?;
                    ConstKind::Batch(self.cte()?)
                }
                TokenKind::Threads => {
                    self.bump();
                    self.expect(TokenKind::Eq)?;
                    ConstKind::Threads(self.cte()?)
                }
                TokenKind::Log => {
                    self.bump();
                    self.expect(TokenKind::Eq)?;
                    ConstKind::Log(self.file()?)
                }
                TokenKind::RBrace if !entries.is_empty() => break,
                _ => {
                    let mut expected = vec![TokenKind::Batch, TokenKind::Threads, TokenKind::Log];
                    if !entries.is_empty() {
                        expected.push(TokenKind::RBrace);
                    }
                    return Err(self.error(&expected));
                }
            };
            entries.push(ConstEntry { kind, span: first.join(self.prev_span()) });
        }
        self.expect(TokenKind::RBrace)?;
        Ok(ConstBlock { entries, span: start.join(self.prev_span()) })
    }

    fn data_block(&mut self) -> PResult<DataBlock> {
        let start = self.expect(TokenKind::Data)?.span;
        self.expect(TokenKind::LBrace)?;
        let mut entries = vec![self.datum()?];
        while self.at(TokenKind::Id) {
            entries.push(self.datum()?);
        }
        if !self.at(TokenKind::RBrace) {
            return Err(self.error(&[TokenKind::Id, TokenKind::RBrace]));
        }
        self.bump();
        Ok(DataBlock { entries, span: start.join(self.prev_span()) })
    }

    fn datum(&mut self) -> PResult<DatumDef> {
        let name = self.ident()?;
        self.expect(TokenKind::LBrack)?;
        let mut params = Vec::new();
        loop {
            let tok = self.peek();
            let kind = match tok.kind {
                TokenKind::Filename => {
                    self.bump();
                    self.expect(TokenKind::Eq)?;
                    DatumParamKind::Filename(self.file()?)
                }
                TokenKind::Ascii => {
                    self.bump();
                    DatumParamKind::FileType(FileType::Ascii)
                }
                TokenKind::Binary => {
                    self.bump();
                    DatumParamKind::FileType(FileType::Binary)
                }
                _ => return Err(self.error(&[TokenKind::Filename, TokenKind::Ascii, TokenKind::Binary])),
            };
            params.push(DatumParam { kind, span: tok.span.join(self.prev_span()) });
            if !self.list_continues()? {
                break;
            }
        }
        Ok(DatumDef { span: name.span.join(self.prev_span()), name, params })
    }

    /// After a bracket-list element: consumes `,` and returns true, or
    /// consumes `]` and returns false.
    fn list_continues(&mut self) -> PResult<bool> {
        match self.peek().kind {
            TokenKind::Comma => {
                self.bump();
                Ok(true)
            }
            TokenKind::RBrack => {
                self.bump();
                Ok(false)
            }
            _ => Err(self.error(&[TokenKind::Comma, TokenKind::RBrack])),
        }
    }

    fn network(&mut self) -> PResult<NetworkDef> {
        let start = self.expect(TokenKind::Network)?.span;
        let name = self.ident()?;
        self.expect(TokenKind::LBrace)?;

        self.expect(TokenKind::Data)?;
        self.expect(TokenKind::Tr)?;
        let tr = self.ident()?;
        let mut extra = Vec::new();
        while self.at(TokenKind::Data) {
            let first = self.bump().span;
            let role = match self.peek().kind {
                TokenKind::Va => DataRole::Va,
                TokenKind::Ts => DataRole::Ts,
                _ => return Err(self.error(&[TokenKind::Va, TokenKind::Ts])),
            };
            self.bump();
            let id = self.ident()?;
            extra.push(ExtraData { role, span: first.join(id.span), id });
        }

        let mut statements = Vec::new();
        loop {
            let kind = self.peek().kind;
            if LAYER_KEYWORDS.contains(&kind) {
                statements.push(Statement::Layer(self.layer()?));
            } else if kind == TokenKind::Id {
                statements.push(Statement::Edge(self.edge()?));
            } else if kind == TokenKind::RBrace && !statements.is_empty() {
                break;
            } else {
                let mut expected = LAYER_KEYWORDS.to_vec();
                expected.push(TokenKind::Id);
                if statements.is_empty() {
                    if extra.is_empty() {
                        expected.insert(0, TokenKind::Data);
                    }
                } else {
                    expected.push(TokenKind::RBrace);
                }
                return Err(self.error(&expected));
            }
        }
        self.expect(TokenKind::RBrace)?;
        Ok(NetworkDef { name, netdata: NetData { tr, extra }, statements, span: start.join(self.prev_span()) })
    }

    fn settings<K: Copy>(&mut self, keys: &[(TokenKind, K)]) -> PResult<Vec<Setting<K>>> {
        self.expect(TokenKind::LBrack)?;
        let mut out = Vec::new();
        loop {
            let tok = self.peek();
            let Some(&(_, key)) = keys.iter().find(|(k, _)| *k == tok.kind) else {
                let expected: Vec<TokenKind> = keys.iter().map(|(k, _)| *k).collect();
                return Err(self.error(&expected));
            };
            self.bump();
            self.expect(TokenKind::Eq)?;
            let value = self.cte()?;
            out.push(Setting { key, value, span: tok.span.join(self.prev_span()) });
            if !self.list_continues()? {
                return Ok(out);
            }
        }
    }

    fn layer(&mut self) -> PResult<LayerDecl> {
        let kw = self.bump();
        let name = self.ident()?;
        let kind = match kw.kind {
            TokenKind::FI => LayerKindDecl::FI,
            TokenKind::CA => LayerKindDecl::CA,
            TokenKind::CI => LayerKindDecl::CI(self.settings(&[
                (TokenKind::Nz, CiKey::Nz),
                (TokenKind::Nr, CiKey::Nr),
                (TokenKind::Nc, CiKey::Nc),
                (TokenKind::Cr, CiKey::Cr),
                (TokenKind::Cc, CiKey::Cc),
            ])?),
            TokenKind::C => LayerKindDecl::C(self.settings(&[
                (TokenKind::Nk, ConvKey::Nk),
                (TokenKind::Kr, ConvKey::Kr),
                (TokenKind::Kc, ConvKey::Kc),
                (TokenKind::Rpad, ConvKey::Rpad),
                (TokenKind::Cpad, ConvKey::Cpad),
                (TokenKind::Stride, ConvKey::Stride),
            ])?),
            TokenKind::MP => LayerKindDecl::MP(
                self.settings(&[(TokenKind::Sizer, PoolKey::Sizer), (TokenKind::Sizec, PoolKey::Sizec)])?,
            ),
            TokenKind::F => {
                self.expect(TokenKind::LBrack)?;
                let mut params = Vec::new();
                if self.at(TokenKind::RBrack) {
                    self.bump();
                } else {
                    loop {
                        let tok = self.peek();
                        let param = match tok.kind {
                            TokenKind::Numnodes => {
                                self.bump();
                                self.expect(TokenKind::Eq)?;
                                FParam::Numnodes(self.cte()?)
                            }
                            TokenKind::Local => {
                                self.bump();
                                FParam::Local
                            }
                            _ => {
                                let mut expected = vec![TokenKind::Numnodes, TokenKind::Local];
                                if params.is_empty() {
                                    expected.push(TokenKind::RBrack);
                                }
                                return Err(self.error(&expected));
                            }
                        };
                        params.push((param, tok.span.join(self.prev_span())));
                        if !self.list_continues()? {
                            break;
                        }
                    }
                }
                LayerKindDecl::F(params)
            }
            TokenKind::FO => {
                self.expect(TokenKind::LBrack)?;
                let mut flags = Vec::new();
                loop {
                    let tok = self.peek();
                    let flag = match tok.kind {
                        TokenKind::Classification => FoFlag::Classification,
                        TokenKind::Regression => FoFlag::Regression,
                        TokenKind::Autoencoder => FoFlag::Autoencoder,
                        TokenKind::RBrack if !flags.is_empty() => break,
                        _ => {
                            let mut expected =
                                vec![TokenKind::Classification, TokenKind::Regression, TokenKind::Autoencoder];
                            if !flags.is_empty() {
                                expected.push(TokenKind::RBrack);
                            }
                            return Err(self.error(&expected));
                        }
                    };
                    self.bump();
                    flags.push((flag, tok.span));
                }
                self.expect(TokenKind::RBrack)?;
                LayerKindDecl::FO(flags)
            }
            _ => unreachable!("caller checked for a layer keyword"),
        };
        Ok(LayerDecl { kind, name, span: kw.span.join(self.prev_span()) })
    }

    fn name_layer(&mut self) -> PResult<NameLayer> {
        let first = self.ident()?;
        if self.at(TokenKind::Dot) {
            self.bump();
            let layer = self.ident()?;
            Ok(NameLayer { net: Some(first), layer })
        } else {
            Ok(NameLayer { net: None, layer: first })
        }
    }

    fn edge(&mut self) -> PResult<EdgeDecl> {
        let src = self.name_layer()?;
        if !self.at(TokenKind::Arrow) {
            let expected = if src.net.is_none() {
                vec![TokenKind::Dot, TokenKind::Arrow]
            } else {
                vec![TokenKind::Arrow]
            };
            return Err(self.error(&expected));
        }
        self.bump();
        let dst = self.name_layer()?;
        Ok(EdgeDecl { span: src.span().join(dst.span()), src, dst })
    }

    fn script(&mut self) -> PResult<ScriptBlock> {
        let start = self.expect(TokenKind::Script)?.span;
        self.expect(TokenKind::LBrace)?;
        let mut actions = Vec::new();
        loop {
            match self.peek().kind {
                TokenKind::Train | TokenKind::Id => actions.push(self.action()?),
                TokenKind::RBrace if !actions.is_empty() => break,
                _ => {
                    let mut expected = vec![TokenKind::Train, TokenKind::Id];
                    if !actions.is_empty() {
                        expected.push(TokenKind::RBrace);
                    }
                    return Err(self.error(&expected));
                }
            }
        }
        self.expect(TokenKind::RBrace)?;
        Ok(ScriptBlock { actions, span: start.join(self.prev_span()) })
    }

    fn action(&mut self) -> PResult<Action> {
        let start = self.peek().span;
        if self.at(TokenKind::Train) {
            self.bump();
            self.expect(TokenKind::LParen)?;
            let epochs = self.cte()?;
            self.expect(TokenKind::Comma)?;
            let batches = self.cte()?;
            let mut nets = Vec::new();
            while self.at(TokenKind::Comma) {
                self.bump();
                nets.push(self.ident()?);
            }
            if !self.at(TokenKind::RParen) {
                return Err(self.error(&[TokenKind::Comma, TokenKind::RParen]));
            }
            self.bump();
            let kind = CommandKind::JointTrain { epochs, batches, nets };
            return Ok(Action::Command(Command { kind, span: start.join(self.prev_span()) }));
        }

        let target = self.ident()?;
        self.expect(TokenKind::Dot)?;
        let next = self.peek().kind;

        // id . id . (param = cte | printkernels(nfile))
        if next == TokenKind::Id {
            let layer = self.ident()?;
            self.expect(TokenKind::Dot)?;
            if self.at(TokenKind::Printkernels) {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let file = self.file()?;
                self.expect(TokenKind::RParen)?;
                let kind = CommandKind::PrintKernels { net: target, layer, file };
                return Ok(Action::Command(Command { kind, span: start.join(self.prev_span()) }));
            }
            let Some(param) = param_name(self.peek().kind) else {
                let mut expected: Vec<TokenKind> = PARAM_KEYWORDS.iter().map(|(k, _)| *k).collect();
                expected.push(TokenKind::Printkernels);
                return Err(self.error(&expected));
            };
            self.bump();
            self.expect(TokenKind::Eq)?;
            let value = self.cte()?;
            return Ok(Action::Amend(Amendment {
                target,
                layer: Some(layer),
                param,
                value,
                span: start.join(self.prev_span()),
            }));
        }

        if let Some(param) = param_name(next) {
            self.bump();
            self.expect(TokenKind::Eq)?;
            let value = self.cte()?;
            return Ok(Action::Amend(Amendment { target, layer: None, param, value, span: start.join(self.prev_span()) }));
        }

        if !NET_COMMANDS.contains(&next) {
            let mut expected = vec![TokenKind::Id];
            expected.extend(PARAM_KEYWORDS.iter().map(|(k, _)| *k));
            expected.extend(NET_COMMANDS);
            return Err(self.error(&expected));
        }
        self.bump();
        self.expect(TokenKind::LParen)?;
        let kind = match next {
            TokenKind::Train => CommandKind::Train { net: target, epochs: self.cte()? },
            TokenKind::Test => CommandKind::Test { net: target, data: self.opt_ident()? },
            TokenKind::Load => CommandKind::Load { net: target, file: self.file()? },
            TokenKind::Save => CommandKind::Save { net: target, file: self.file()? },
            TokenKind::Testout => CommandKind::TestOut { net: target, file: self.file()? },
            TokenKind::Zscore => CommandKind::Zscore { data: target, reference: self.opt_ident()? },
            TokenKind::Center => CommandKind::Center { data: target, reference: self.opt_ident()? },
            TokenKind::Yuv => CommandKind::Yuv { data: target },
            TokenKind::Div => CommandKind::Div { data: target, value: self.cte()? },
            _ => unreachable!(),
        };
        self.expect(TokenKind::RParen)?;
        Ok(Action::Command(Command { kind, span: start.join(self.prev_span()) }))
    }

    fn opt_ident(&mut self) -> PResult<Option<Ident>> {
        match self.peek().kind {
            TokenKind::Id => Ok(Some(self.ident()?)),
            TokenKind::RParen => Ok(None),
            _ => Err(self.error(&[TokenKind::Id, TokenKind::RParen])),
        }
    }
}
