use std::fmt;

use crate::ast::{FileType, ParamName};
use crate::data_io::DataHeader;
use crate::lexer::Span;

/// General run constants.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constants {
    pub batch: usize,
    pub threads: usize,
    /// Log path when written in the program; `None` means not set there.
    pub log: Option<String>,
}

impl Constants {
    pub const DEFAULT_BATCH: usize = 100;
    pub const DEFAULT_THREADS: usize = 4;
    pub const DEFAULT_LOG: &'static str = "netparser.log";

    pub fn log_path(&self) -> &str {
        self.log.as_deref().unwrap_or(Self::DEFAULT_LOG)
    }
}

impl Default for Constants {
    fn default() -> Self {
        Constants { batch: Self::DEFAULT_BATCH, threads: Self::DEFAULT_THREADS, log: None }
    }
}

/// A declared data object, with the header of its file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataRef {
    pub name: String,
    pub path: String,
    pub format: FileType,
    pub header: DataHeader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Flat(usize),
    Map { z: usize, r: usize, c: usize },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Map { z, r, c } => z * r * c,
        }
    }

    pub fn is_map(&self) -> bool {
        matches!(self, Shape::Map { .. })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Flat(d) => write!(f, "{d}"),
            Shape::Map { z, r, c } => write!(f, "{z}x{r}x{c}"),
        }
    }
}

/// Layer address: owning network index and position in that network's
/// declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LayerId {
    pub net: usize,
    pub layer: usize,
}

impl LayerId {
    pub fn new(net: usize, layer: usize) -> Self {
        LayerId { net, layer }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    Classification,
    Regression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Activation {
    Linear,
    #[default]
    Relu,
    Sigmoid,
    Elu,
}

impl Activation {
    pub fn from_code(code: u64) -> Option<Activation> {
        match code {
            0 => Some(Activation::Linear),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            3 => Some(Activation::Elu),
            _ => None,
        }
    }

    pub fn code(&self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Elu => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// Fully connected input; `dim` is the training data dimension.
    FI { dim: usize },
    CI { nz: usize, nr: usize, nc: usize, cr: usize, cc: usize },
    F { numnodes: usize, local: bool },
    /// `F name []`: flattens its parent.
    Reshape,
    /// `autoencoder` holds the input layer whose clean output is the target.
    FO { criterion: Criterion, autoencoder: Option<LayerId> },
    C { nk: usize, kr: usize, kc: usize, rpad: usize, cpad: usize, stride: usize },
    MP { sizer: usize, sizec: usize },
    CA,
}

impl LayerKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            LayerKind::FI { .. } => "FI",
            LayerKind::CI { .. } => "CI",
            LayerKind::F { .. } | LayerKind::Reshape => "F",
            LayerKind::FO { .. } => "FO",
            LayerKind::C { .. } => "C",
            LayerKind::MP { .. } => "MP",
            LayerKind::CA => "CA",
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, LayerKind::FI { .. } | LayerKind::CI { .. })
    }

    pub fn is_output(&self) -> bool {
        matches!(self, LayerKind::FO { .. })
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, LayerKind::F { .. } | LayerKind::FO { .. } | LayerKind::C { .. })
    }

    /// Whether an amendment of `param` has any meaning for this layer kind.
    ///
    /// | param                               | layers          |
    /// |-------------------------------------|-----------------|
    /// | mu mmu l2 l1 maxn                   | F, FO, C        |
    /// | drop noiser noisesd bn act          | F, C            |
    /// | noiseb                              | FI, CI          |
    /// | brightness contrast shift flip      | CI              |
    /// | lambda                              | FO              |
    /// | balance                             | none (data)     |
    pub fn accepts(&self, param: ParamName) -> bool {
        use ParamName::*;
        let hidden = matches!(self, LayerKind::F { .. } | LayerKind::C { .. });
        match param {
            Mu | Mmu | L2 | L1 | Maxn => self.has_weights(),
            Drop | Noiser | Noisesd | Bn | Act => hidden,
            Noiseb => self.is_input(),
            Brightness | Contrast | Shift | Flip => matches!(self, LayerKind::CI { .. }),
            Lambda => self.is_output(),
            Balance => false,
        }
    }
}

/// Trainable-behaviour knobs of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub mu: f64,
    pub mmu: f64,
    pub l2: f64,
    pub l1: f64,
    pub maxn: f64,
    pub drop: f64,
    pub noiser: f64,
    pub noisesd: f64,
    pub noiseb: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub lambda: f64,
    pub bn: bool,
    pub act: Activation,
    pub shift: bool,
    pub flip: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            mu: 0.01,
            mmu: 0.9,
            l2: 0.0,
            l1: 0.0,
            maxn: 0.0,
            drop: 0.0,
            noiser: 0.0,
            noisesd: 0.0,
            noiseb: 0.0,
            brightness: 0.0,
            contrast: 0.0,
            lambda: 1.0,
            bn: false,
            act: Activation::Relu,
            shift: false,
            flip: false,
        }
    }
}

/// Why a value cannot be stored into a parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueError {
    Fractional,
    OutOfRange(&'static str),
}

impl fmt::Display for ValueError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueError::Fractional => f.write_str("expects an integer value"),
            ValueError::OutOfRange(r) => write!(f, "must be in {r}"),
        }
    }
}

/// Checks `value` against the class and range of `param`.
pub fn check_value(param: ParamName, value: f64) -> Result<(), ValueError> {
    use ParamName::*;
    if param.is_integer_class() && value.fract() != 0.0 {
        return Err(ValueError::Fractional);
    }
    let ok = match param {
        Bn | Shift | Flip | Balance => value == 0.0 || value == 1.0,
        Act => value <= 3.0,
        Drop => value < 1.0,
        Noiseb | Noiser => value <= 1.0,
        _ => true,
    };
    if ok {
        return Ok(());
    }
    Err(ValueError::OutOfRange(match param {
        Bn | Shift | Flip | Balance => "{0, 1}",
        Act => "{0, 1, 2, 3}",
        Drop => "[0, 1)",
        _ => "[0, 1]",
    }))
}

impl HyperParams {
    pub fn get(&self, param: ParamName) -> f64 {
        use ParamName::*;
        match param {
            Mu => self.mu,
            Mmu => self.mmu,
            L2 => self.l2,
            L1 => self.l1,
            Maxn => self.maxn,
            Drop => self.drop,
            Noiser => self.noiser,
            Noisesd => self.noisesd,
            Noiseb => self.noiseb,
            Brightness => self.brightness,
            Contrast => self.contrast,
            Lambda => self.lambda,
            Bn => self.bn as u8 as f64,
            Act => self.act.code() as f64,
            Shift => self.shift as u8 as f64,
            Flip => self.flip as u8 as f64,
            Balance => 0.0,
        }
    }

    /// Stores an already validated value (see [`check_value`]).
    pub fn set(&mut self, param: ParamName, value: f64) {
        use ParamName::*;
        debug_assert!(check_value(param, value).is_ok());
        match param {
            Mu => self.mu = value,
            Mmu => self.mmu = value,
            L2 => self.l2 = value,
            L1 => self.l1 = value,
            Maxn => self.maxn = value,
            Drop => self.drop = value,
            Noiser => self.noiser = value,
            Noisesd => self.noisesd = value,
            Noiseb => self.noiseb = value,
            Brightness => self.brightness = value,
            Contrast => self.contrast = value,
            Lambda => self.lambda = value,
            Bn => self.bn = value != 0.0,
            Act => self.act = Activation::from_code(value as u64).expect("validated act code"),
            Shift => self.shift = value != 0.0,
            Flip => self.flip = value != 0.0,
            Balance => {}
        }
    }
}

/// Writes `param = value` into every layer of `layers` that accepts it and
/// returns how many were changed.
pub fn apply_amendment<'a, I>(layers: I, param: ParamName, value: f64) -> usize
where
    I: IntoIterator<Item = (&'a LayerKind, &'a mut HyperParams)>,
{
    let mut changed = 0;
    for (kind, hyper) in layers {
        if kind.accepts(param) {
            hyper.set(param, value);
            changed += 1;
        }
    }
    changed
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedLayer {
    pub name: String,
    pub kind: LayerKind,
    pub hyper: HyperParams,
    pub shape: Shape,
    /// Parents in edge declaration order.
    pub parents: Vec<LayerId>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    pub name: String,
    pub tr: usize,
    pub va: Option<usize>,
    pub ts: Option<usize>,
    pub layers: Vec<ResolvedLayer>,
    /// Edges whose destination is in this network, in declaration order.
    pub edges: Vec<(LayerId, LayerId)>,
    /// Own layer indices in evaluation order.
    pub topo_order: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetTarget {
    Network(usize),
    Layer(LayerId),
    Data(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStep {
    Set { target: SetTarget, param: ParamName, value: f64 },
    Train { net: usize, epochs: u64 },
    JointTrain { epochs: u64, batches: u64, nets: Vec<usize> },
    /// `data` is the explicit operand or the network's `ts` binding.
    Test { net: usize, data: usize },
    Load { net: usize, path: String },
    Save { net: usize, path: String },
    TestOut { net: usize, path: String },
    PrintKernels { layer: LayerId, path: String },
    Zscore { data: usize, reference: Option<usize> },
    Center { data: usize, reference: Option<usize> },
    Yuv { data: usize },
    Div { data: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Code {
    /// Undefined data id (or no data bound where one is needed).
    E001,
    /// Undefined or ambiguous layer/network.
    E002,
    /// Duplicate name.
    E003,
    /// Missing mandatory parameter.
    E004,
    /// Duplicate or conflicting parameter.
    E005,
    /// Topology violation.
    E006,
    /// Shape mismatch or impossible layer geometry.
    E007,
    /// Invalid numeric value for the parameter's class or range.
    E008,
    /// Parameter or command not applicable to its target.
    E009,
    /// Autoencoder combined with classification.
    E010,
    /// Data file could not be read.
    E011,
    /// Accepted construct with no runtime effect.
    W001,
}

impl Code {
    pub fn is_warning(&self) -> bool {
        matches!(self, Code::W001)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: Code,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    pub fn new(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { code, message: message.into(), span }
    }

    /// `<file>:<line>:<col>: error E00N: <message>`
    pub fn render(&self, file: &str) -> String {
        let severity = if self.code.is_warning() { "warning" } else { "error" };
        format!("{file}:{}:{}: {severity} {}: {}", self.span.line, self.span.col, self.code, self.message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.span, self.code, self.message)
    }
}

/// Result of a successful analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub constants: Constants,
    pub data: Vec<DataRef>,
    pub networks: Vec<NetworkGraph>,
    pub plan: Vec<PlanStep>,
    pub warnings: Vec<Diagnostic>,
}

impl Analysis {
    pub fn layer(&self, id: LayerId) -> &ResolvedLayer {
        &self.networks[id.net].layers[id.layer]
    }

    pub fn network_index(&self, name: &str) -> Option<usize> {
        self.networks.iter().position(|n| n.name == name)
    }
}
