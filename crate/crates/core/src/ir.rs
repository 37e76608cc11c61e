//! Lowered, span-free program and its line-oriented text form (`.lir`).
//!
//! ```text
//! layers-ir 1
//! const batch=100 threads=4
//! data id=0 name="X" path="xor.dat" format=ascii samples=4 dim=2 classes=2 targets=0
//! net id=0 name="n" tr=0 va=- ts=0
//! layer net=0 id=0 name="i" kind=FI dim=2 shape=2 mu=0.01 ...
//! edge net=0 src=0:0 dst=0:1
//! topo net=0 order=0,1
//! TRAIN net=0 epochs=10
//! ```
//!
//! The full record grammar is in `docs/ir-format.md`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::ast::{FileType, ParamName};
use crate::data_io::DataHeader;
use crate::sema::{Activation, Analysis, Constants, Criterion, HyperParams, LayerId, LayerKind, PlanStep, SetTarget, Shape};

pub const IR_MAGIC: &str = "layers-ir";
pub const IR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct IrProgram {
    pub version: u32,
    pub constants: Constants,
    pub data: Vec<IrData>,
    pub networks: Vec<IrNetwork>,
    pub actions: Vec<Op>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrData {
    pub name: String,
    pub path: String,
    pub format: FileType,
    pub header: DataHeader,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrNetwork {
    pub name: String,
    pub tr: usize,
    pub va: Option<usize>,
    pub ts: Option<usize>,
    pub layers: Vec<IrLayer>,
    /// Edges ending in this network, in declaration order.
    pub edges: Vec<(LayerId, LayerId)>,
    pub topo: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrLayer {
    pub name: String,
    pub kind: LayerKind,
    pub hyper: HyperParams,
    pub shape: Shape,
    pub parents: Vec<LayerId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmendTarget {
    Network(usize),
    Layer(LayerId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Op {
    Train { net: usize, epochs: u64 },
    JTrain { epochs: u64, batches: u64, nets: Vec<usize> },
    Test { net: usize, data: usize },
    Save { net: usize, path: String },
    Load { net: usize, path: String },
    TestOut { net: usize, path: String },
    PrintK { layer: LayerId, path: String },
    Set { target: AmendTarget, param: ParamName, value: f64 },
    Balance { data: usize, on: bool },
    Zscore { data: usize, reference: Option<usize> },
    Center { data: usize, reference: Option<usize> },
    Yuv { data: usize },
    Div { data: usize, value: f64 },
}

impl Op {
    pub fn opcode(&self) -> &'static str {
        match self {
            Op::Train { .. } => "TRAIN",
            Op::JTrain { .. } => "JTRAIN",
            Op::Test { .. } => "TEST",
            Op::Save { .. } => "SAVE",
            Op::Load { .. } => "LOAD",
            Op::TestOut { .. } => "TESTOUT",
            Op::PrintK { .. } => "PRINTK",
            Op::Set { .. } => "SET",
            Op::Balance { .. } => "BALANCE",
            Op::Zscore { .. } => "ZSCORE",
            Op::Center { .. } => "CENTER",
            Op::Yuv { .. } => "YUV",
            Op::Div { .. } => "DIV",
        }
    }
}

impl IrProgram {
    pub fn layer(&self, id: LayerId) -> &IrLayer {
        &self.networks[id.net].layers[id.layer]
    }
}

/// Lowers an error-free analysis.
pub fn lower(a: &Analysis) -> IrProgram {
    let data = a
        .data
        .iter()
        .map(|d| IrData { name: d.name.clone(), path: d.path.clone(), format: d.format, header: d.header })
        .collect();
    let networks = a
        .networks
        .iter()
        .map(|g| IrNetwork {
            name: g.name.clone(),
            tr: g.tr,
            va: g.va,
            ts: g.ts,
            layers: g
                .layers
                .iter()
                .map(|l| IrLayer {
                    name: l.name.clone(),
                    kind: l.kind.clone(),
                    hyper: l.hyper.clone(),
                    shape: l.shape,
                    parents: l.parents.clone(),
                })
                .collect(),
            edges: g.edges.clone(),
            topo: g.topo_order.clone(),
        })
        .collect();
    let actions = a
        .plan
        .iter()
        .map(|step| match step.clone() {
            PlanStep::Set { target: SetTarget::Data(data), value, .. } => Op::Balance { data, on: value != 0.0 },
            PlanStep::Set { target: SetTarget::Network(n), param, value } => {
                Op::Set { target: AmendTarget::Network(n), param, value }
            }
            PlanStep::Set { target: SetTarget::Layer(l), param, value } => Op::Set { target: AmendTarget::Layer(l), param, value },
            PlanStep::Train { net, epochs } => Op::Train { net, epochs },
            PlanStep::JointTrain { epochs, batches, nets } => Op::JTrain { epochs, batches, nets },
            PlanStep::Test { net, data } => Op::Test { net, data },
            PlanStep::Load { net, path } => Op::Load { net, path },
            PlanStep::Save { net, path } => Op::Save { net, path },
            PlanStep::TestOut { net, path } => Op::TestOut { net, path },
            PlanStep::PrintKernels { layer, path } => Op::PrintK { layer, path },
            PlanStep::Zscore { data, reference } => Op::Zscore { data, reference },
            PlanStep::Center { data, reference } => Op::Center { data, reference },
            PlanStep::Yuv { data } => Op::Yuv { data },
            PlanStep::Div { data, value } => Op::Div { data, value },
        })
        .collect();
    IrProgram { version: IR_VERSION, constants: a.constants.clone(), data, networks, actions }
}

// ---------------------------------------------------------------- writing

fn quote(s: &str) -> String {
    let mut out = serde_json::to_string(s).expect("strings serialize");
    // keep the file printable ASCII
    if !out.is_ascii() {
        out = out.chars().fold(String::new(), |mut acc, ch| {
            if ch.is_ascii() {
                acc.push(ch);
            } else {
                let mut buf = [0u16; 2];
                for u in ch.encode_utf16(&mut buf) {
                    write!(acc, "\\u{u:04x}").unwrap();
                }
            }
            acc
        });
    }
    out
}

fn id(l: LayerId) -> String {
    format!("{}:{}", l.net, l.layer)
}

fn opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

fn kind_fields(kind: &LayerKind) -> String {
    match kind {
        LayerKind::FI { dim } => format!("kind=FI dim={dim}"),
        LayerKind::CI { nz, nr, nc, cr, cc } => format!("kind=CI nz={nz} nr={nr} nc={nc} cr={cr} cc={cc}"),
        LayerKind::F { numnodes, local } => format!("kind=F numnodes={numnodes} local={}", *local as u8),
        LayerKind::Reshape => "kind=RESHAPE".to_string(),
        LayerKind::FO { criterion, autoencoder } => {
            let c = match criterion {
                Criterion::Classification => "classification",
                Criterion::Regression => "regression",
            };
            let ae = autoencoder.map_or_else(|| "-".to_string(), id);
            format!("kind=FO criterion={c} autoencoder={ae}")
        }
        LayerKind::C { nk, kr, kc, rpad, cpad, stride } => {
            format!("kind=C nk={nk} kr={kr} kc={kc} rpad={rpad} cpad={cpad} stride={stride}")
        }
        LayerKind::MP { sizer, sizec } => format!("kind=MP sizer={sizer} sizec={sizec}"),
        LayerKind::CA => "kind=CA".to_string(),
    }
}

const HYPER: [ParamName; 16] = [
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
];

/// Renders the program as `.lir` text. The output is a pure function of
/// the program.
pub fn serialize(p: &IrProgram) -> String {
    let mut out = String::new();
    writeln!(out, "{IR_MAGIC} {}", p.version).unwrap();
    let c = &p.constants;
    write!(out, "const batch={} threads={}", c.batch, c.threads).unwrap();
    if let Some(log) = &c.log {
        write!(out, " log={}", quote(log)).unwrap();
    }
    out.push('\n');
    for (i, d) in p.data.iter().enumerate() {
        let h = d.header;
        writeln!(
            out,
            "data id={i} name={} path={} format={} samples={} dim={} classes={} targets={}",
            quote(&d.name),
            quote(&d.path),
            d.format.as_str(),
            h.samples,
            h.dim,
            h.classes,
            h.targets
        )
        .unwrap();
    }
    for (n, g) in p.networks.iter().enumerate() {
        writeln!(out, "net id={n} name={} tr={} va={} ts={}", quote(&g.name), g.tr, opt(g.va), opt(g.ts)).unwrap();
        for (i, l) in g.layers.iter().enumerate() {
            write!(out, "layer net={n} id={i} name={} {} shape={}", quote(&l.name), kind_fields(&l.kind), l.shape).unwrap();
            for param in HYPER {
                write!(out, " {}={}", param.as_str(), l.hyper.get(param)).unwrap();
            }
            out.push('\n');
        }
        for (s, d) in &g.edges {
            writeln!(out, "edge net={n} src={} dst={}", id(*s), id(*d)).unwrap();
        }
        let order: Vec<String> = g.topo.iter().map(|i| i.to_string()).collect();
        writeln!(out, "topo net={n} order={}", order.join(",")).unwrap();
    }
    for op in &p.actions {
        out.push_str(op.opcode());
        let fields = match op {
            Op::Train { net, epochs } => format!("net={net} epochs={epochs}"),
            Op::JTrain { epochs, batches, nets } => {
                let nets: Vec<String> = nets.iter().map(|n| n.to_string()).collect();
                format!("epochs={epochs} batches={batches} nets={}", nets.join(","))
            }
            Op::Test { net, data } => format!("net={net} data={data}"),
            Op::Save { net, path } | Op::Load { net, path } | Op::TestOut { net, path } => {
                format!("net={net} path={}", quote(path))
            }
            Op::PrintK { layer, path } => format!("layer={} path={}", id(*layer), quote(path)),
            Op::Set { target, param, value } => {
                let t = match target {
                    AmendTarget::Network(n) => format!("net={n}"),
                    AmendTarget::Layer(l) => format!("layer={}", id(*l)),
                };
                format!("{t} param={} value={value}", param.as_str())
            }
            Op::Balance { data, on } => format!("data={data} value={}", *on as u8),
            Op::Zscore { data, reference } | Op::Center { data, reference } => format!("data={data} ref={}", opt(*reference)),
            Op::Yuv { data } => format!("data={data}"),
            Op::Div { data, value } => format!("data={data} value={value}"),
        };
        writeln!(out, " {fields}").unwrap();
    }
    out
}

// ---------------------------------------------------------------- reading

#[derive(Debug, Error, PartialEq)]
pub enum IrError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported IR version {found} (this build reads version {expected})")]
    Version { found: String, expected: u32 },
    #[error("not a Layers IR file: missing `{IR_MAGIC}` header")]
    MissingHeader,
}

/// One record: the leading word and its `key=value` fields.
struct Record<'a> {
    line: usize,
    head: &'a str,
    fields: HashMap<&'a str, &'a str>,
}

fn split_fields(line: usize, text: &str) -> Result<(&str, Vec<(&str, &str)>), IrError> {
    let bad = |m: &str| IrError::Malformed { line, message: m.to_string() };
    let text = text.trim_start();
    let head_end = text.find(char::is_whitespace).unwrap_or(text.len());
    let head = &text[..head_end];
    let mut rest = &text[head_end..];
    let mut fields = Vec::new();
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            break;
        }
        let eq = rest.find('=').ok_or_else(|| bad("expected `key=value`"))?;
        let key = &rest[..eq];
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(bad("expected `key=value`"));
        }
        let after = &rest[eq + 1..];
        let len = if after.starts_with('"') {
            let bytes = after.as_bytes();
            let mut i = 1;
            loop {
                match bytes.get(i) {
                    None => return Err(bad("unterminated string")),
                    Some(b'\\') => i += 2,
                    Some(b'"') => break i + 1,
                    Some(_) => i += 1,
                }
            }
        } else {
            after.find(char::is_whitespace).unwrap_or(after.len())
        };
        fields.push((key, &after[..len]));
        rest = &after[len..];
        if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
            return Err(bad("expected whitespace after value"));
        }
    }
    Ok((head, fields))
}

impl<'a> Record<'a> {
    fn bad(&self, message: impl Into<String>) -> IrError {
        IrError::Malformed { line: self.line, message: message.into() }
    }

    fn raw(&self, key: &str) -> Result<&'a str, IrError> {
        self.fields.get(key).copied().ok_or_else(|| self.bad(format!("`{}` record is missing `{key}`", self.head)))
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T, IrError> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| self.bad(format!("invalid value `{v}` for `{key}`")))
    }

    fn opt(&self, key: &str) -> Result<Option<usize>, IrError> {
        match self.raw(key)? {
            "-" => Ok(None),
            _ => self.num(key).map(Some),
        }
    }

    fn string(&self, key: &str) -> Result<String, IrError> {
        let v = self.raw(key)?;
        if !v.starts_with('"') {
            return Err(self.bad(format!("`{key}` must be a quoted string")));
        }
        serde_json::from_str(v).map_err(|e| self.bad(format!("bad string for `{key}`: {e}")))
    }

    fn layer_id(&self, key: &str) -> Result<LayerId, IrError> {
        parse_id(self.raw(key)?).ok_or_else(|| self.bad(format!("`{key}` must be `net:layer`")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>, IrError> {
        let v = self.raw(key)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|x| x.parse().map_err(|_| self.bad(format!("invalid list `{v}` for `{key}`")))).collect()
    }

    fn param(&self) -> Result<ParamName, IrError> {
        let v = self.raw("param")?;
        ParamName::from_str(v).ok_or_else(|| self.bad(format!("unknown parameter `{v}`")))
    }
}

fn parse_id(s: &str) -> Option<LayerId> {
    let (n, l) = s.split_once(':')?;
    Some(LayerId::new(n.parse().ok()?, l.parse().ok()?))
}

fn parse_shape(s: &str) -> Option<Shape> {
    let parts: Vec<usize> = s.split('x').map(|p| p.parse().ok()).collect::<Option<_>>()?;
    match parts[..] {
        [d] => Some(Shape::Flat(d)),
        [z, r, c] => Some(Shape::Map { z, r, c }),
        _ => None,
    }
}

fn parse_kind(r: &Record) -> Result<LayerKind, IrError> {
    let u = |k: &str| r.num::<usize>(k);
    Ok(match r.raw("kind")? {
        "FI" => LayerKind::FI { dim: u("dim")? },
        "CI" => LayerKind::CI { nz: u("nz")?, nr: u("nr")?, nc: u("nc")?, cr: u("cr")?, cc: u("cc")? },
        "F" => LayerKind::F { numnodes: u("numnodes")?, local: r.num::<u8>("local")? != 0 },
        "RESHAPE" => LayerKind::Reshape,
        "FO" => {
            let criterion = match r.raw("criterion")? {
                "classification" => Criterion::Classification,
                "regression" => Criterion::Regression,
                other => return Err(r.bad(format!("unknown criterion `{other}`"))),
            };
            let autoencoder = match r.raw("autoencoder")? {
                "-" => None,
                _ => Some(r.layer_id("autoencoder")?),
            };
            LayerKind::FO { criterion, autoencoder }
        }
        "C" => LayerKind::C { nk: u("nk")?, kr: u("kr")?, kc: u("kc")?, rpad: u("rpad")?, cpad: u("cpad")?, stride: u("stride")? },
        "MP" => LayerKind::MP { sizer: u("sizer")?, sizec: u("sizec")? },
        "CA" => LayerKind::CA,
        other => return Err(r.bad(format!("unknown layer kind `{other}`"))),
    })
}

fn parse_hyper(r: &Record) -> Result<HyperParams, IrError> {
    let mut h = HyperParams::default();
    for param in HYPER {
        let v: f64 = r.num(param.as_str())?;
        if crate::sema::check_value(param, v).is_err() || (param == ParamName::Act && Activation::from_code(v as u64).is_none()) {
            return Err(r.bad(format!("invalid value `{v}` for `{}`", param.as_str())));
        }
        h.set(param, v);
    }
    Ok(h)
}

/// Parses `.lir` text. Blank lines and `#` comments are ignored.
pub fn deserialize(text: &str) -> Result<IrProgram, IrError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (_, first) = lines.next().ok_or(IrError::MissingHeader)?;
    let version = match first.split_whitespace().collect::<Vec<_>>()[..] {
        [IR_MAGIC, v] => v,
        _ => return Err(IrError::MissingHeader),
    };
    if version != IR_VERSION.to_string() {
        return Err(IrError::Version { found: version.to_string(), expected: IR_VERSION });
    }

    let mut prog =
        IrProgram { version: IR_VERSION, constants: Constants::default(), data: vec![], networks: vec![], actions: vec![] };
    let mut saw_const = false;
    for (line, text) in lines {
        let (head, fields) = split_fields(line, text)?;
        let mut map = HashMap::new();
        for (k, v) in fields {
            if map.insert(k, v).is_some() {
                return Err(IrError::Malformed { line, message: format!("field `{k}` given twice") });
            }
        }
        let r = Record { line, head, fields: map };
        let data_ref = |key: &str, prog: &IrProgram| -> Result<usize, IrError> {
            let d: usize = r.num(key)?;
            if d >= prog.data.len() {
                return Err(r.bad(format!("unknown data id {d}")));
            }
            Ok(d)
        };
        let net_ref = |key: &str, prog: &IrProgram| -> Result<usize, IrError> {
            let n: usize = r.num(key)?;
            if n >= prog.networks.len() {
                return Err(r.bad(format!("unknown network id {n}")));
            }
            Ok(n)
        };
        let layer_ref = |key: &str, prog: &IrProgram| -> Result<LayerId, IrError> {
            let l = r.layer_id(key)?;
            if prog.networks.get(l.net).is_none_or(|n| l.layer >= n.layers.len()) {
                return Err(r.bad(format!("unknown layer {}", id(l))));
            }
            Ok(l)
        };
        let op = match head {
            "const" => {
                if saw_const || !prog.data.is_empty() || !prog.networks.is_empty() {
                    return Err(r.bad("`const` must appear once, before any other record"));
                }
                saw_const = true;
                prog.constants.batch = r.num("batch")?;
                prog.constants.threads = r.num("threads")?;
                if prog.constants.batch == 0 || prog.constants.threads == 0 {
                    return Err(r.bad("batch and threads must be at least 1"));
                }
                prog.constants.log = if r.fields.contains_key("log") { Some(r.string("log")?) } else { None };
                continue;
            }
            "data" => {
                if r.num::<usize>("id")? != prog.data.len() {
                    return Err(r.bad("data ids must be consecutive from 0"));
                }
                let format = match r.raw("format")? {
                    "ascii" => FileType::Ascii,
                    "binary" => FileType::Binary,
                    other => return Err(r.bad(format!("unknown format `{other}`"))),
                };
                prog.data.push(IrData {
                    name: r.string("name")?,
                    path: r.string("path")?,
                    format,
                    header: DataHeader {
                        samples: r.num("samples")?,
                        dim: r.num("dim")?,
                        classes: r.num("classes")?,
                        targets: r.num("targets")?,
                    },
                });
                continue;
            }
            "net" => {
                if r.num::<usize>("id")? != prog.networks.len() {
                    return Err(r.bad("network ids must be consecutive from 0"));
                }
                let tr = data_ref("tr", &prog)?;
                let (va, ts) = (r.opt("va")?, r.opt("ts")?);
                if va.or(ts).is_some_and(|d| d >= prog.data.len()) {
                    return Err(r.bad("unknown data id"));
                }
                prog.networks.push(IrNetwork { name: r.string("name")?, tr, va, ts, layers: vec![], edges: vec![], topo: vec![] });
                continue;
            }
            "layer" => {
                let n = net_ref("net", &prog)?;
                if n + 1 != prog.networks.len() {
                    return Err(r.bad("layer records must follow their network"));
                }
                if r.num::<usize>("id")? != prog.networks[n].layers.len() {
                    return Err(r.bad("layer ids must be consecutive from 0"));
                }
                let shape = parse_shape(r.raw("shape")?).ok_or_else(|| r.bad("invalid shape"))?;
                let layer =
                    IrLayer { name: r.string("name")?, kind: parse_kind(&r)?, hyper: parse_hyper(&r)?, shape, parents: vec![] };
                prog.networks[n].layers.push(layer);
                continue;
            }
            "edge" => {
                let n = net_ref("net", &prog)?;
                let src = layer_ref("src", &prog)?;
                let dst = layer_ref("dst", &prog)?;
                if dst.net != n || n + 1 != prog.networks.len() {
                    return Err(r.bad("an edge must end in the network being defined"));
                }
                prog.networks[n].layers[dst.layer].parents.push(src);
                prog.networks[n].edges.push((src, dst));
                continue;
            }
            "topo" => {
                let n = net_ref("net", &prog)?;
                let order = r.list("order")?;
                let count = prog.networks[n].layers.len();
                let mut sorted = order.clone();
                sorted.sort();
                if sorted != (0..count).collect::<Vec<_>>() {
                    return Err(r.bad("topo order must list every layer exactly once"));
                }
                prog.networks[n].topo = order;
                continue;
            }
            "TRAIN" => Op::Train { net: net_ref("net", &prog)?, epochs: r.num("epochs")? },
            "JTRAIN" => {
                let nets = r.list("nets")?;
                if nets.is_empty() || nets.iter().any(|&n| n >= prog.networks.len()) {
                    return Err(r.bad("invalid network list"));
                }
                Op::JTrain { epochs: r.num("epochs")?, batches: r.num("batches")?, nets }
            }
            "TEST" => Op::Test { net: net_ref("net", &prog)?, data: data_ref("data", &prog)? },
            "SAVE" => Op::Save { net: net_ref("net", &prog)?, path: r.string("path")? },
            "LOAD" => Op::Load { net: net_ref("net", &prog)?, path: r.string("path")? },
            "TESTOUT" => Op::TestOut { net: net_ref("net", &prog)?, path: r.string("path")? },
            "PRINTK" => Op::PrintK { layer: layer_ref("layer", &prog)?, path: r.string("path")? },
            "SET" => {
                let target = if r.fields.contains_key("layer") {
                    AmendTarget::Layer(layer_ref("layer", &prog)?)
                } else {
                    AmendTarget::Network(net_ref("net", &prog)?)
                };
                let param = r.param()?;
                let value: f64 = r.num("value")?;
                if crate::sema::check_value(param, value).is_err() {
                    return Err(r.bad(format!("invalid value `{value}` for `{}`", param.as_str())));
                }
                Op::Set { target, param, value }
            }
            "BALANCE" => Op::Balance { data: data_ref("data", &prog)?, on: r.num::<u8>("value")? != 0 },
            "ZSCORE" | "CENTER" => {
                let data = data_ref("data", &prog)?;
                let reference = r.opt("ref")?;
                if reference.is_some_and(|d| d >= prog.data.len()) {
                    return Err(r.bad("unknown data id"));
                }
                if head == "ZSCORE" {
                    Op::Zscore { data, reference }
                } else {
                    Op::Center { data, reference }
                }
            }
            "YUV" => Op::Yuv { data: data_ref("data", &prog)? },
            "DIV" => {
                let value: f64 = r.num("value")?;
                if value == 0.0 || !value.is_finite() {
                    return Err(r.bad("division value must be finite and non-zero"));
                }
                Op::Div { data: data_ref("data", &prog)?, value }
            }
            other => return Err(r.bad(format!("unknown record `{other}`"))),
        };
        prog.actions.push(op);
    }
    for (n, g) in prog.networks.iter().enumerate() {
        if g.topo.len() != g.layers.len() {
            return Err(IrError::Malformed { line: 0, message: format!("network {n} has no complete `topo` record") });
        }
    }
    Ok(prog)
}
