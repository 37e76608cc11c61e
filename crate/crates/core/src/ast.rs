//! Syntax tree for Layers programs. Mirrors the grammar one production at a
//! time; nothing here is resolved or defaulted.

use crate::lexer::{Cte, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident { name: name.into(), span }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Experiment {
    pub constants: Option<ConstBlock>,
    pub definitions: Vec<Definition>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstBlock {
    pub entries: Vec<ConstEntry>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstKind {
    Batch(Cte),
    Threads(Cte),
    Log(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstEntry {
    pub kind: ConstKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Definition {
    Data(DataBlock),
    Network(NetworkDef),
    Script(ScriptBlock),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataBlock {
    pub entries: Vec<DatumDef>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FileType {
    Ascii,
    Binary,
}

impl FileType {
    pub fn as_str(&self) -> &'static str {
        match self {
            FileType::Ascii => "ascii",
            FileType::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatumParamKind {
    Filename(String),
    FileType(FileType),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatumParam {
    pub kind: DatumParamKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatumDef {
    pub name: Ident,
    pub params: Vec<DatumParam>,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DataRole {
    Va,
    Ts,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtraData {
    pub role: DataRole,
    pub id: Ident,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetData {
    pub tr: Ident,
    pub extra: Vec<ExtraData>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkDef {
    pub name: Ident,
    pub netdata: NetData,
    pub statements: Vec<Statement>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Statement {
    Layer(LayerDecl),
    Edge(EdgeDecl),
}

/// `key = cte` inside a layer's bracket list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setting<K> {
    pub key: K,
    pub value: Cte,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CiKey {
    Nz,
    Nr,
    Nc,
    Cr,
    Cc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvKey {
    Nk,
    Kr,
    Kc,
    Rpad,
    Cpad,
    Stride,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKey {
    Sizer,
    Sizec,
}

/// The single optional parameter of an `F` layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FParam {
    Numnodes(Cte),
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FoFlag {
    Classification,
    Regression,
    Autoencoder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerKindDecl {
    FI,
    CI(Vec<Setting<CiKey>>),
    /// Empty list: the flattening `F name []` form.
    F(Vec<(FParam, Span)>),
    FO(Vec<(FoFlag, Span)>),
    C(Vec<Setting<ConvKey>>),
    MP(Vec<Setting<PoolKey>>),
    CA,
}

impl LayerKindDecl {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKindDecl::FI => "FI",
            LayerKindDecl::CI(_) => "CI",
            LayerKindDecl::F(_) => "F",
            LayerKindDecl::FO(_) => "FO",
            LayerKindDecl::C(_) => "C",
            LayerKindDecl::MP(_) => "MP",
            LayerKindDecl::CA => "CA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerDecl {
    pub kind: LayerKindDecl,
    pub name: Ident,
    pub span: Span,
}

/// `net.layer` or bare `layer`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameLayer {
    pub net: Option<Ident>,
    pub layer: Ident,
}

impl NameLayer {
    pub fn span(&self) -> Span {
        match &self.net {
            Some(n) => n.span.join(self.layer.span),
            None => self.layer.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeDecl {
    pub src: NameLayer,
    pub dst: NameLayer,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptBlock {
    pub actions: Vec<Action>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Amend(Amendment),
    Command(Command),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamName {
    Mu,
    Mmu,
    L2,
    L1,
    Maxn,
    Drop,
    Noiser,
    Noisesd,
    Noiseb,
    Brightness,
    Contrast,
    Lambda,
    Bn,
    Act,
    Shift,
    Flip,
    Balance,
}

impl ParamName {
    pub const ALL: [ParamName; 17] = [
        ParamName::Mu,
        ParamName::Mmu,
        ParamName::L2,
        ParamName::L1,
        ParamName::Maxn,
        ParamName::Drop,
        ParamName::Noiser,
        ParamName::Noisesd,
        ParamName::Noiseb,
        ParamName::Brightness,
        ParamName::Contrast,
        ParamName::Lambda,
        ParamName::Bn,
        ParamName::Act,
        ParamName::Shift,
        ParamName::Flip,
        ParamName::Balance,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Mu => "mu",
            ParamName::Mmu => "mmu",
            ParamName::L2 => "l2",
            ParamName::L1 => "l1",
            ParamName::Maxn => "maxn",
            ParamName::Drop => "drop",
            ParamName::Noiser => "noiser",
            ParamName::Noisesd => "noisesd",
            ParamName::Noiseb => "noiseb",
            ParamName::Brightness => "brightness",
            ParamName::Contrast => "contrast",
            ParamName::Lambda => "lambda",
            ParamName::Bn => "bn",
            ParamName::Act => "act",
            ParamName::Shift => "shift",
            ParamName::Flip => "flip",
            ParamName::Balance => "balance",
        }
    }

    pub fn from_str(s: &str) -> Option<ParamName> {
        ParamName::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Integer-class parameters only accept whole numbers.
    pub fn is_integer_class(&self) -> bool {
        matches!(
            self,
            ParamName::Bn | ParamName::Act | ParamName::Shift | ParamName::Flip | ParamName::Balance
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Amendment {
    pub target: Ident,
    pub layer: Option<Ident>,
    pub param: ParamName,
    pub value: Cte,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CommandKind {
    PrintKernels { net: Ident, layer: Ident, file: String },
    JointTrain { epochs: Cte, batches: Cte, nets: Vec<Ident> },
    Train { net: Ident, epochs: Cte },
    Test { net: Ident, data: Option<Ident> },
    Load { net: Ident, file: String },
    Save { net: Ident, file: String },
    TestOut { net: Ident, file: String },
    Zscore { data: Ident, reference: Option<Ident> },
    Center { data: Ident, reference: Option<Ident> },
    Yuv { data: Ident },
    Div { data: Ident, value: Cte },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Command {
    pub kind: CommandKind,
    pub span: Span,
}

/// Resets every span in a tree, so trees parsed from different texts can be
/// compared structurally.
pub trait StripSpans {
    fn strip_spans(&mut self);

    fn without_spans(&self) -> Self
    where
        Self: Clone,
    {
        let mut copy = self.clone();
        copy.strip_spans();
        copy
    }
}

impl StripSpans for Span {
    fn strip_spans(&mut self) {
        *self = Span::default();
    }
}

impl StripSpans for Ident {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
    }
}

impl<T: StripSpans> StripSpans for Option<T> {
    fn strip_spans(&mut self) {
        if let Some(x) = self {
            x.strip_spans();
        }
    }
}

impl<T: StripSpans> StripSpans for Vec<T> {
    fn strip_spans(&mut self) {
        self.iter_mut().for_each(StripSpans::strip_spans);
    }
}

impl<K> StripSpans for Setting<K> {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
    }
}

impl<T> StripSpans for (T, Span) {
    fn strip_spans(&mut self) {
        self.1.strip_spans();
    }
}

impl StripSpans for Experiment {
    fn strip_spans(&mut self) {
        self.constants.strip_spans();
        self.definitions.strip_spans();
    }
}

impl StripSpans for ConstBlock {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
        for e in &mut self.entries {
            e.span.strip_spans();
        }
    }
}

impl StripSpans for Definition {
    fn strip_spans(&mut self) {
        match self {
            Definition::Data(d) => d.strip_spans(),
            Definition::Network(n) => n.strip_spans(),
            Definition::Script(s) => s.strip_spans(),
        }
    }
}

impl StripSpans for DataBlock {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
        for d in &mut self.entries {
            d.span.strip_spans();
            d.name.strip_spans();
            for p in &mut d.params {
                p.span.strip_spans();
            }
        }
    }
}

impl StripSpans for NetworkDef {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
        self.name.strip_spans();
        self.netdata.tr.strip_spans();
        for e in &mut self.netdata.extra {
            e.span.strip_spans();
            e.id.strip_spans();
        }
        self.statements.strip_spans();
    }
}

impl StripSpans for NameLayer {
    fn strip_spans(&mut self) {
        self.net.strip_spans();
        self.layer.strip_spans();
    }
}

impl StripSpans for Statement {
    fn strip_spans(&mut self) {
        match self {
            Statement::Layer(l) => {
                l.span.strip_spans();
                l.name.strip_spans();
                match &mut l.kind {
                    LayerKindDecl::FI | LayerKindDecl::CA => {}
                    LayerKindDecl::CI(p) => p.strip_spans(),
                    LayerKindDecl::F(p) => p.strip_spans(),
                    LayerKindDecl::FO(p) => p.strip_spans(),
                    LayerKindDecl::C(p) => p.strip_spans(),
                    LayerKindDecl::MP(p) => p.strip_spans(),
                }
            }
            Statement::Edge(e) => {
                e.span.strip_spans();
                e.src.strip_spans();
                e.dst.strip_spans();
            }
        }
    }
}

impl StripSpans for ScriptBlock {
    fn strip_spans(&mut self) {
        self.span.strip_spans();
        self.actions.strip_spans();
    }
}

impl StripSpans for Action {
    fn strip_spans(&mut self) {
        match self {
            Action::Amend(a) => {
                a.span.strip_spans();
                a.target.strip_spans();
                a.layer.strip_spans();
            }
            Action::Command(c) => {
                c.span.strip_spans();
                match &mut c.kind {
                    CommandKind::PrintKernels { net, layer, .. } => {
                        net.strip_spans();
                        layer.strip_spans();
                    }
                    CommandKind::JointTrain { nets, .. } => nets.strip_spans(),
                    CommandKind::Train { net, .. }
                    | CommandKind::Load { net, .. }
                    | CommandKind::Save { net, .. }
                    | CommandKind::TestOut { net, .. } => net.strip_spans(),
                    CommandKind::Test { net, data } => {
                        net.strip_spans();
                        data.strip_spans();
                    }
                    CommandKind::Zscore { data, reference } | CommandKind::Center { data, reference } => {
                        data.strip_spans();
                        reference.strip_spans();
                    }
                    CommandKind::Yuv { data } | CommandKind::Div { data, .. } => data.strip_spans(),
                }
            }
        }
    }
}
