//! Semantic analysis: name resolution, default injection, parameter and
//! topology validation, and shape inference.
//!
//! Unlike the lexer and parser, analysis keeps going after an error and
//! reports every diagnostic it finds, ordered by source position.

mod shapes;
mod types;

pub use shapes::{conv_out, infer_shapes, pool_out};
pub use types::*;

use std::collections::{HashMap, HashSet, VecDeque};
use std::hash::Hash;
use std::path::PathBuf;

use crate::ast::*;
use crate::data_io::{self, DataHeader};
use crate::lexer::{Cte, Span};

/// Supplies dataset headers for `data` declarations.
pub trait DataProvider {
    fn header(&self, path: &str, format: FileType) -> Result<DataHeader, String>;
}

/// Reads headers from files, resolving relative paths against `base`.
#[derive(Debug, Clone, Default)]
pub struct FsData {
    pub base: PathBuf,
}

impl FsData {
    pub fn new(base: impl Into<PathBuf>) -> Self {
        FsData { base: base.into() }
    }
}

impl DataProvider for FsData {
    fn header(&self, path: &str, format: FileType) -> Result<DataHeader, String> {
        data_io::read_header(&self.base.join(path), format).map_err(|e| e.to_string())
    }
}

/// In-memory headers keyed by path, for tools and tests that have no files.
impl DataProvider for HashMap<String, DataHeader> {
    fn header(&self, path: &str, _format: FileType) -> Result<DataHeader, String> {
        self.get(path).copied().ok_or_else(|| format!("no such data file `{path}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symbol {
    Data(usize),
    Network(usize),
}

struct Analyzer<'p> {
    provider: &'p dyn DataProvider,
    diags: Vec<Diagnostic>,
    constants: Constants,
    symbols: HashMap<String, Symbol>,
    data: Vec<DataRef>,
    data_ok: Vec<bool>,
    networks: Vec<NetworkGraph>,
    /// Per network: name → layer index.
    layer_names: Vec<HashMap<String, usize>>,
    /// Per network: shapes were inferred without error.
    net_ok: Vec<bool>,
    /// Per network: layers touched by an edge that failed to resolve; topology
    /// checks skip them to avoid follow-on errors.
    tainted: Vec<HashSet<usize>>,
    plan: Vec<PlanStep>,
}

/// Analyzes a parsed program. `provider` supplies data file headers.
pub fn analyze(exp: &Experiment, provider: &dyn DataProvider) -> Result<Analysis, Vec<Diagnostic>> {
    let mut a = Analyzer {
        provider,
        diags: Vec::new(),
        constants: Constants::default(),
        symbols: HashMap::new(),
        data: Vec::new(),
        data_ok: Vec::new(),
        networks: Vec::new(),
        layer_names: Vec::new(),
        net_ok: Vec::new(),
        tainted: Vec::new(),
        plan: Vec::new(),
    };
    if let Some(c) = &exp.constants {
        a.constants(c);
    }
    for def in &exp.definitions {
        match def {
            Definition::Data(d) => a.data_block(d),
            Definition::Network(n) => a.network(n),
            Definition::Script(s) => a.script(s),
        }
    }
    a.check_reachability();

    let mut diags = a.diags;
    diags.sort_by_key(|d| (d.span.offset, d.code));
    if diags.iter().any(|d| !d.code.is_warning()) {
        return Err(diags);
    }
    Ok(Analysis { constants: a.constants, data: a.data, networks: a.networks, plan: a.plan, warnings: diags })
}

/// Collects `key = value` settings into a map, reporting duplicates (E005)
/// and non-integer values (E008). Invalid values are kept as `None`.
fn collect_settings<K: Copy + Eq + Hash>(
    diags: &mut Vec<Diagnostic>,
    items: &[Setting<K>],
    name: impl Fn(K) -> &'static str,
) -> HashMap<K, Option<usize>> {
    let mut out = HashMap::new();
    for s in items {
        if out.contains_key(&s.key) {
            diags.push(Diagnostic::new(Code::E005, s.span, format!("parameter `{}` given more than once", name(s.key))));
            continue;
        }
        let v = integer(&s.value);
        if v.is_none() {
            diags.push(Diagnostic::new(
                Code::E008,
                s.span,
                format!("parameter `{}` expects an integer, found `{}`", name(s.key), s.value),
            ));
        }
        out.insert(s.key, v);
    }
    out
}

fn integer(c: &Cte) -> Option<usize> {
    c.as_u64().and_then(|v| usize::try_from(v).ok())
}

fn ci_name(k: CiKey) -> &'static str {
    match k {
        CiKey::Nz => "nz",
        CiKey::Nr => "nr",
        CiKey::Nc => "nc",
        CiKey::Cr => "cr",
        CiKey::Cc => "cc",
    }
}

fn conv_name(k: ConvKey) -> &'static str {
    match k {
        ConvKey::Nk => "nk",
        ConvKey::Kr => "kr",
        ConvKey::Kc => "kc",
        ConvKey::Rpad => "rpad",
        ConvKey::Cpad => "cpad",
        ConvKey::Stride => "stride",
    }
}

fn pool_name(k: PoolKey) -> &'static str {
    match k {
        PoolKey::Sizer => "sizer",
        PoolKey::Sizec => "sizec",
    }
}

impl<'p> Analyzer<'p> {
    fn error(&mut self, code: Code, span: Span, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, span, message));
    }

    fn constants(&mut self, block: &ConstBlock) {
        let mut seen = HashSet::new();
        for e in &block.entries {
            let key = std::mem::discriminant(&e.kind);
            let name = match e.kind {
                ConstKind::Batch(_) => "batch",
                ConstKind::Threads(_) => "threads",
                ConstKind::Log(_) => "log",
            };
            if !seen.insert(key) {
                self.error(Code::E005, e.span, format!("constant `{name}` given more than once"));
                continue;
            }
            match &e.kind {
                ConstKind::Batch(v) | ConstKind::Threads(v) => match integer(v) {
                    Some(n) if n >= 1 => {
                        if name == "batch" {
                            self.constants.batch = n;
                        } else {
                            self.constants.threads = n;
                        }
                    }
                    _ => self.error(Code::E008, e.span, format!("`{name}` must be a positive integer, found `{v}`")),
                },
                ConstKind::Log(p) => self.constants.log = Some(p.clone()),
            }
        }
    }

    fn declare(&mut self, ident: &Ident, symbol: Symbol) -> bool {
        if self.symbols.contains_key(&ident.name) {
            self.error(Code::E003, ident.span, format!("`{}` is already defined", ident.name));
            return false;
        }
        self.symbols.insert(ident.name.clone(), symbol);
        true
    }

    fn data_block(&mut self, block: &DataBlock) {
        for datum in &block.entries {
            let mut path: Option<&str> = None;
            let mut format: Option<FileType> = None;
            for p in &datum.params {
                match &p.kind {
                    DatumParamKind::Filename(f) => {
                        if path.is_some() {
                            self.error(Code::E005, p.span, "`filename` given more than once");
                        } else {
                            path = Some(f);
                        }
                    }
                    DatumParamKind::FileType(t) => {
                        if format.is_some() {
                            self.error(Code::E005, p.span, "file type given more than once");
                        } else {
                            format = Some(*t);
                        }
                    }
                }
            }
            let format = format.unwrap_or(FileType::Ascii);
            let idx = self.data.len();
            if !self.declare(&datum.name, Symbol::Data(idx)) {
                continue;
            }
            let mut ok = true;
            let header = match path {
                None => {
                    self.error(Code::E004, datum.span, format!("data `{}` needs a `filename`", datum.name.name));
                    ok = false;
                    DataHeader { samples: 0, dim: 0, classes: 0, targets: 0 }
                }
                Some(p) => match self.provider.header(p, format) {
                    Ok(h) => h,
                    Err(msg) => {
                        self.error(Code::E011, datum.span, format!("cannot read data `{}`: {msg}", datum.name.name));
                        ok = false;
                        DataHeader { samples: 0, dim: 0, classes: 0, targets: 0 }
                    }
                },
            };
            self.data.push(DataRef {
                name: datum.name.name.clone(),
                path: path.unwrap_or_default().to_string(),
                format,
                header,
            });
            self.data_ok.push(ok);
        }
    }

    /// Looks up a data object defined earlier in the program.
    fn resolve_data(&mut self, id: &Ident) -> Option<usize> {
        match self.symbols.get(&id.name) {
            Some(Symbol::Data(i)) => Some(*i),
            Some(Symbol::Network(_)) => {
                self.error(Code::E001, id.span, format!("`{}` is a network, not a data object", id.name));
                None
            }
            None => {
                self.error(Code::E001, id.span, format!("undefined data `{}`", id.name));
                None
            }
        }
    }

    fn resolve_network(&mut self, id: &Ident) -> Option<usize> {
        match self.symbols.get(&id.name) {
            Some(Symbol::Network(i)) => Some(*i),
            Some(Symbol::Data(_)) => {
                self.error(Code::E002, id.span, format!("`{}` is a data object, not a network", id.name));
                None
            }
            None => {
                self.error(Code::E002, id.span, format!("undefined network `{}`", id.name));
                None
            }
        }
    }

    fn network(&mut self, def: &NetworkDef) {
        let net = self.networks.len();
        let declared = self.declare(&def.name, Symbol::Network(net));

        let tr = self.resolve_data(&def.netdata.tr);
        let (mut va, mut ts) = (None, None);
        let mut va_seen = false;
        let mut ts_seen = false;
        for extra in &def.netdata.extra {
            let (seen, role) = match extra.role {
                DataRole::Va => (&mut va_seen, "va"),
                DataRole::Ts => (&mut ts_seen, "ts"),
            };
            if std::mem::replace(seen, true) {
                self.error(Code::E005, extra.span, format!("`data {role}` given more than once"));
                continue;
            }
            let resolved = self.resolve_data(&extra.id);
            match extra.role {
                DataRole::Va => va = resolved,
                DataRole::Ts => ts = resolved,
            }
        }
        let mut ok = tr.is_some() && [tr, va, ts].iter().flatten().all(|&d| self.data_ok[d]);

        // layers first; edges may mention layers declared after them
        let mut layers = Vec::new();
        let mut names = HashMap::new();
        for stmt in &def.statements {
            let Statement::Layer(decl) = stmt else { continue };
            if names.contains_key(&decl.name.name) {
                self.error(Code::E003, decl.name.span, format!("layer `{}` is already defined in `{}`", decl.name.name, def.name.name));
                ok = false;
                continue;
            }
            match self.layer_kind(decl) {
                Some(kind) => {
                    names.insert(decl.name.name.clone(), layers.len());
                    layers.push(ResolvedLayer {
                        name: decl.name.name.clone(),
                        kind,
                        hyper: HyperParams::default(),
                        shape: Shape::Flat(0),
                        parents: Vec::new(),
                        span: decl.span,
                    });
                }
                None => {
                    ok = false;
                    // keep the name resolvable to avoid follow-on E002s
                    names.insert(decl.name.name.clone(), usize::MAX);
                }
            }
        }

        let mut edges = Vec::new();
        let mut edge_spans = HashMap::new();
        let mut tainted = HashSet::new();
        for stmt in &def.statements {
            let Statement::Edge(edge) = stmt else { continue };
            let src = self.resolve_layer(&edge.src, &def.name.name, net, &names);
            let dst = self.resolve_layer(&edge.dst, &def.name.name, net, &names);
            let resolved = |id: Option<LayerId>| id.filter(|l| l.layer != usize::MAX);
            let (Some(src), Some(dst)) = (resolved(src), resolved(dst)) else {
                for id in [src, dst].into_iter().flatten() {
                    if id.net == net && id.layer != usize::MAX {
                        tainted.insert(id.layer);
                    }
                }
                ok = false;
                continue;
            };
            if dst.net != net {
                self.error(Code::E006, edge.dst.span(), "an edge must end at a layer of the network that declares it");
                ok = false;
                continue;
            }
            if edge_spans.contains_key(&(src, dst)) {
                self.error(Code::E006, edge.span, "duplicate edge");
                ok = false;
                continue;
            }
            edge_spans.insert((src, dst), edge.span);
            layers[dst.layer].parents.push(src);
            edges.push((src, dst));
        }

        let declares_output = def.statements.iter().any(|s| matches!(s, Statement::Layer(LayerDecl { kind: LayerKindDecl::FO(_), .. })));
        if !declares_output {
            self.error(Code::E006, def.name.span, format!("network `{}` has no output (FO) layer", def.name.name));
            ok = false;
        }

        let mut graph = NetworkGraph {
            name: def.name.name.clone(),
            tr: tr.unwrap_or(0),
            va,
            ts,
            layers,
            edges,
            topo_order: Vec::new(),
        };
        let topo_ok = self.check_topology(&mut graph, net, &edge_spans, &tainted);
        ok &= topo_ok;

        if topo_ok && tr.is_some() && ok {
            let tr_header = self.data[graph.tr].header;
            for (role, d, span) in def.netdata.extra.iter().filter_map(|e| {
                let d = match e.role {
                    DataRole::Va => va,
                    DataRole::Ts => ts,
                }?;
                Some((e.role, d, e.id.span))
            }) {
                let h = self.data[d].header;
                if h.dim != tr_header.dim || h.classes != tr_header.classes || h.targets != tr_header.targets {
                    let role = if role == DataRole::Va { "va" } else { "ts" };
                    self.error(
                        Code::E007,
                        span,
                        format!(
                            "{role} data `{}` ({}d, {} classes, {} targets) does not match training data ({}d, {} classes, {} targets)",
                            self.data[d].name, h.dim, h.classes, h.targets, tr_header.dim, tr_header.classes, tr_header.targets
                        ),
                    );
                    ok = false;
                }
            }
            let foreign_ok = graph.layers.iter().flat_map(|l| &l.parents).all(|p| p.net == net || self.net_ok[p.net]);
            if foreign_ok {
                if let Err(errs) = infer_shapes(&mut graph, net, &tr_header, &self.networks) {
                    self.diags.extend(errs);
                    ok = false;
                }
            } else {
                ok = false;
            }
        }

        for layer in &graph.layers {
            if let LayerKind::F { local: true, .. } = layer.kind {
                self.error(Code::W001, layer.span, format!("`local` on layer `{}` is accepted but has no effect", layer.name));
            }
        }

        if !declared {
            ok = false;
        }
        self.networks.push(graph);
        self.layer_names.push(names);
        self.net_ok.push(ok);
        self.tainted.push(tainted);
    }

    fn resolve_layer(
        &mut self,
        nl: &NameLayer,
        current_name: &str,
        current: usize,
        names: &HashMap<String, usize>,
    ) -> Option<LayerId> {
        let layer = &nl.layer;
        if let Some(net_id) = &nl.net {
            if net_id.name == current_name {
                return match names.get(&layer.name) {
                    Some(&i) => Some(LayerId::new(current, i)),
                    None => {
                        self.error(Code::E002, layer.span, format!("undefined layer `{}.{}`", net_id.name, layer.name));
                        None
                    }
                };
            }
            let net = self.resolve_network(net_id)?;
            return match self.layer_names[net].get(&layer.name) {
                Some(&i) => Some(LayerId::new(net, i)),
                None => {
                    self.error(Code::E002, layer.span, format!("undefined layer `{}.{}`", net_id.name, layer.name));
                    None
                }
            };
        }
        if let Some(&i) = names.get(&layer.name) {
            return Some(LayerId::new(current, i));
        }
        let matches: Vec<LayerId> = self
            .layer_names
            .iter()
            .enumerate()
            .filter_map(|(n, m)| m.get(&layer.name).map(|&i| LayerId::new(n, i)))
            .collect();
        match matches.as_slice() {
            [one] => Some(*one),
            [] => {
                self.error(Code::E002, layer.span, format!("undefined layer `{}`", layer.name));
                None
            }
            many => {
                let nets: Vec<&str> = many.iter().map(|id| self.networks[id.net].name.as_str()).collect();
                self.error(
                    Code::E002,
                    layer.span,
                    format!("ambiguous layer `{}` (defined in {}); qualify it as `net.{}`", layer.name, nets.join(", "), layer.name),
                );
                None
            }
        }
    }

    fn layer_kind(&mut self, decl: &LayerDecl) -> Option<LayerKind> {
        let name = &decl.name.name;
        let before = self.diags.len();
        let kind = match &decl.kind {
            LayerKindDecl::FI => LayerKind::FI { dim: 0 },
            LayerKindDecl::CA => LayerKind::CA,
            LayerKindDecl::CI(items) => {
                let m = collect_settings(&mut self.diags, items, ci_name);
                let req = |a: &mut Self, k: CiKey| a.required(&m, k, ci_name, decl);
                let (nz, nr, nc) = (req(self, CiKey::Nz), req(self, CiKey::Nr), req(self, CiKey::Nc));
                let (nz, nr, nc) = (nz?, nr?, nc?);
                let cr = m.get(&CiKey::Cr).copied().flatten().unwrap_or(nr);
                let cc = m.get(&CiKey::Cc).copied().flatten().unwrap_or(nc);
                if nz == 0 || nr == 0 || nc == 0 || cr == 0 || cc == 0 {
                    self.error(Code::E007, decl.span, format!("CI `{name}`: sizes must be at least 1"));
                }
                if cr > nr || cc > nc {
                    self.error(Code::E007, decl.span, format!("CI `{name}`: crop {cr}x{cc} exceeds image {nr}x{nc}"));
                }
                LayerKind::CI { nz, nr, nc, cr, cc }
            }
            LayerKindDecl::C(items) => {
                let m = collect_settings(&mut self.diags, items, conv_name);
                let req = |a: &mut Self, k: ConvKey| a.required(&m, k, conv_name, decl);
                let (nk, kr, kc) = (req(self, ConvKey::Nk), req(self, ConvKey::Kr), req(self, ConvKey::Kc));
                let (nk, kr, kc) = (nk?, kr?, kc?);
                let rpad = m.get(&ConvKey::Rpad).copied().flatten().unwrap_or(0);
                let cpad = m.get(&ConvKey::Cpad).copied().flatten().unwrap_or(0);
                let stride = m.get(&ConvKey::Stride).copied().flatten().unwrap_or(1);
                if nk == 0 || kr == 0 || kc == 0 || stride == 0 {
                    self.error(Code::E007, decl.span, format!("C `{name}`: nk, kr, kc and stride must be at least 1"));
                }
                LayerKind::C { nk, kr, kc, rpad, cpad, stride }
            }
            LayerKindDecl::MP(items) => {
                let m = collect_settings(&mut self.diags, items, pool_name);
                let sizer = self.required(&m, PoolKey::Sizer, pool_name, decl);
                let sizec = self.required(&m, PoolKey::Sizec, pool_name, decl);
                let (sizer, sizec) = (sizer?, sizec?);
                if sizer == 0 || sizec == 0 {
                    self.error(Code::E007, decl.span, format!("MP `{name}`: pooling sizes must be at least 1"));
                }
                LayerKind::MP { sizer, sizec }
            }
            LayerKindDecl::F(params) if params.is_empty() => LayerKind::Reshape,
            LayerKindDecl::F(params) => {
                let mut numnodes = None;
                let mut local = false;
                for (p, span) in params {
                    match p {
                        FParam::Numnodes(v) => {
                            if numnodes.is_some() {
                                self.error(Code::E005, *span, "parameter `numnodes` given more than once");
                            } else {
                                match integer(v) {
                                    Some(0) => self.error(Code::E007, *span, "`numnodes` must be at least 1"),
                                    Some(n) => numnodes = Some(n),
                                    None => self.error(
                                        Code::E008,
                                        *span,
                                        format!("parameter `numnodes` expects an integer, found `{v}`"),
                                    ),
                                }
                            }
                        }
                        FParam::Local => {
                            if local {
                                self.error(Code::E005, *span, "parameter `local` given more than once");
                            }
                            local = true;
                        }
                    }
                }
                if numnodes.is_none() && !params.iter().any(|(p, _)| matches!(p, FParam::Numnodes(_))) {
                    self.error(Code::E004, decl.span, format!("F `{name}` is missing mandatory parameter `numnodes`"));
                }
                LayerKind::F { numnodes: numnodes?, local }
            }
            LayerKindDecl::FO(flags) => {
                let mut seen: Vec<FoFlag> = Vec::new();
                for (flag, span) in flags {
                    let conflict = match flag {
                        FoFlag::Classification => seen.contains(&FoFlag::Regression),
                        FoFlag::Regression => seen.contains(&FoFlag::Classification),
                        FoFlag::Autoencoder => false,
                    };
                    if seen.contains(flag) {
                        self.error(Code::E005, *span, "output flag given more than once");
                    } else if conflict {
                        self.error(Code::E005, *span, "an output layer is either classification or regression");
                    } else {
                        seen.push(*flag);
                    }
                }
                let ae = seen.contains(&FoFlag::Autoencoder);
                let criterion = if seen.contains(&FoFlag::Classification) {
                    Some(Criterion::Classification)
                } else if seen.contains(&FoFlag::Regression) {
                    Some(Criterion::Regression)
                } else {
                    None
                };
                if ae && criterion == Some(Criterion::Classification) {
                    self.error(Code::E010, decl.span, format!("FO `{name}`: autoencoder requires the regression criterion"));
                }
                let Some(criterion) = criterion else {
                    self.error(Code::E004, decl.span, format!("FO `{name}` needs a criterion: classification or regression"));
                    return None;
                };
                let autoencoder = if ae { Some(LayerId::new(usize::MAX, usize::MAX)) } else { None };
                LayerKind::FO { criterion, autoencoder }
            }
        };
        if self.diags[before..].iter().any(|d| !d.code.is_warning()) {
            return None;
        }
        Some(kind)
    }

    fn required<K: Copy + Eq + Hash>(
        &mut self,
        m: &HashMap<K, Option<usize>>,
        key: K,
        name: fn(K) -> &'static str,
        decl: &LayerDecl,
    ) -> Option<usize> {
        match m.get(&key) {
            Some(v) => *v,
            None => {
                self.error(
                    Code::E004,
                    decl.span,
                    format!("{} `{}` is missing mandatory parameter `{}`", decl.kind.keyword(), decl.name.name, name(key)),
                );
                None
            }
        }
    }

    /// Parent-count rules and cycle detection. Fills `topo_order` on success.
    fn check_topology(
        &mut self,
        g: &mut NetworkGraph,
        net: usize,
        edge_spans: &HashMap<(LayerId, LayerId), Span>,
        tainted: &HashSet<usize>,
    ) -> bool {
        let mut ok = true;
        for (i, l) in g.layers.iter().enumerate() {
            if tainted.contains(&i) {
                continue;
            }
            let n = l.parents.len();
            let first_edge = |k: usize| edge_spans[&(l.parents[k], LayerId::new(net, i))];
            let problem = match &l.kind {
                LayerKind::FI { .. } | LayerKind::CI { .. } if n > 0 => {
                    Some((first_edge(0), format!("input layer `{}` cannot have a parent", l.name)))
                }
                LayerKind::C { .. } | LayerKind::MP { .. } | LayerKind::Reshape if n > 1 => Some((
                    first_edge(1),
                    format!("{} layer `{}` can only have one parent layer", l.kind.keyword(), l.name),
                )),
                LayerKind::CA if n < 2 => {
                    Some((l.span, format!("CA layer `{}` needs at least two parents, found {n}", l.name)))
                }
                k if !k.is_input() && n == 0 => Some((l.span, format!("layer `{}` has no parent", l.name))),
                _ => None,
            };
            if let Some((span, msg)) = problem {
                self.error(Code::E006, span, msg);
                ok = false;
            }
        }

        // Kahn's algorithm, FIFO, seeded in declaration order
        let count = g.layers.len();
        let mut indegree = vec![0usize; count];
        let mut children = vec![Vec::new(); count];
        for (src, dst) in &g.edges {
            if src.net == net {
                indegree[dst.layer] += 1;
                children[src.layer].push(dst.layer);
            }
        }
        let mut queue: VecDeque<usize> = (0..count).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(count);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &c in &children[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    queue.push_back(c);
                }
            }
        }
        if order.len() < count {
            let stuck: Vec<&str> = (0..count).filter(|i| indegree[*i] > 0).map(|i| g.layers[i].name.as_str()).collect();
            let first = (0..count).find(|i| indegree[*i] > 0).unwrap();
            self.error(Code::E006, g.layers[first].span, format!("cycle through layers {}", stuck.join(", ")));
            return false;
        }
        g.topo_order = order;
        ok
    }

    /// Every layer must lead to some output layer.
    fn check_reachability(&mut self) {
        let mut reaches: HashSet<LayerId> = HashSet::new();
        let mut stack: Vec<LayerId> = Vec::new();
        let mut children: HashMap<LayerId, Vec<LayerId>> = HashMap::new();
        for (n, g) in self.networks.iter().enumerate() {
            for (i, l) in g.layers.iter().enumerate() {
                let id = LayerId::new(n, i);
                for p in &l.parents {
                    children.entry(*p).or_default().push(id);
                }
                if l.kind.is_output() {
                    stack.push(id);
                }
            }
        }
        while let Some(id) = stack.pop() {
            if reaches.insert(id) {
                stack.extend(self.networks[id.net].layers[id.layer].parents.iter().copied());
            }
        }
        let mut found = Vec::new();
        for (n, g) in self.networks.iter().enumerate() {
            if !g.layers.iter().any(|l| l.kind.is_output()) {
                continue;
            }
            for (i, l) in g.layers.iter().enumerate() {
                if !reaches.contains(&LayerId::new(n, i)) && !self.tainted[n].contains(&i) {
                    found.push((n, l.span, format!("layer `{}.{}` does not lead to any output layer", g.name, l.name)));
                }
            }
        }
        for (n, span, msg) in found {
            self.net_ok[n] = false;
            self.error(Code::E006, span, msg);
        }
    }

    fn script(&mut self, block: &ScriptBlock) {
        for action in &block.actions {
            match action {
                Action::Amend(a) => self.amendment(a),
                Action::Command(c) => self.command(c),
            }
        }
    }

    fn amendment(&mut self, a: &Amendment) {
        let value = a.value.as_f64();
        let pname = a.param.as_str();
        let value_ok = match check_value(a.param, value) {
            Ok(()) => true,
            Err(e) => {
                self.error(Code::E008, a.span, format!("`{pname}` {e}, found `{}`", a.value));
                false
            }
        };
        let target = match &a.layer {
            Some(layer) => {
                let Some(net) = self.resolve_network(&a.target) else { return };
                let Some(&idx) = self.layer_names[net].get(&layer.name) else {
                    self.error(Code::E002, layer.span, format!("undefined layer `{}.{}`", a.target.name, layer.name));
                    return;
                };
                if idx == usize::MAX {
                    return;
                }
                let kind = &self.networks[net].layers[idx].kind;
                if !kind.accepts(a.param) {
                    let kw = kind.keyword();
                    self.error(Code::E009, a.span, format!("`{pname}` does not apply to {kw} layer `{}`", layer.name));
                    return;
                }
                SetTarget::Layer(LayerId::new(net, idx))
            }
            None => match self.symbols.get(&a.target.name).copied() {
                Some(Symbol::Network(net)) => {
                    if !self.networks[net].layers.iter().any(|l| l.kind.accepts(a.param)) {
                        self.error(
                            Code::E009,
                            a.span,
                            format!("`{pname}` does not apply to any layer of network `{}`", a.target.name),
                        );
                        return;
                    }
                    SetTarget::Network(net)
                }
                Some(Symbol::Data(d)) => {
                    if a.param != ParamName::Balance {
                        self.error(Code::E009, a.span, format!("`{pname}` does not apply to data `{}`", a.target.name));
                        return;
                    }
                    if self.data_ok[d] && self.data[d].header.classes == 0 {
                        self.error(Code::E009, a.span, format!("`balance` needs class labels; `{}` has targets", a.target.name));
                        return;
                    }
                    SetTarget::Data(d)
                }
                None => {
                    self.error(Code::E002, a.target.span, format!("undefined network or data `{}`", a.target.name));
                    return;
                }
            },
        };
        if value_ok {
            self.plan.push(PlanStep::Set { target, param: a.param, value });
        }
    }

    fn count(&mut self, c: &Cte, what: &str, span: Span) -> Option<u64> {
        let v = c.as_u64();
        if v.is_none() {
            self.error(Code::E008, span, format!("{what} must be a whole number, found `{c}`"));
        }
        v
    }

    fn command(&mut self, c: &Command) {
        if let Some(step) = self.command_step(c) {
            self.plan.push(step);
        }
    }

    fn command_step(&mut self, c: &Command) -> Option<PlanStep> {
        let span = c.span;
        let step = match &c.kind {
            CommandKind::Train { net, epochs } => {
                let net = self.resolve_network(net);
                let epochs = self.count(epochs, "epochs", span);
                PlanStep::Train { net: net?, epochs: epochs? }
            }
            CommandKind::JointTrain { epochs, batches, nets } => {
                let e = self.count(epochs, "epochs", span);
                let b = self.count(batches, "batches", span);
                if nets.is_empty() {
                    self.error(Code::E004, span, "joint train needs at least one network");
                }
                let mut resolved = Vec::new();
                let mut all = true;
                for n in nets {
                    match self.resolve_network(n) {
                        Some(i) if resolved.contains(&i) => {
                            self.error(Code::E005, n.span, format!("network `{}` listed twice", n.name));
                            all = false;
                        }
                        Some(i) => resolved.push(i),
                        None => all = false,
                    }
                }
                if !all || nets.is_empty() {
                    return None;
                }
                PlanStep::JointTrain { epochs: e?, batches: b?, nets: resolved }
            }
            CommandKind::Test { net, data } => {
                let n = self.resolve_network(net);
                let d = match data {
                    Some(d) => self.resolve_data(d),
                    None => {
                        let ts = n.and_then(|n| self.networks[n].ts);
                        if n.is_some() && ts.is_none() {
                            self.error(Code::E001, span, format!("network `{}` has no test data (`data ts`) bound", net.name));
                        }
                        ts
                    }
                };
                let (n, d) = (n?, d?);
                if data.is_some() && !self.compatible(self.networks[n].tr, d) {
                    let msg = format!("data `{}` does not match the training data of `{}`", self.data[d].name, net.name);
                    self.error(Code::E007, span, msg);
                    return None;
                }
                PlanStep::Test { net: n, data: d }
            }
            CommandKind::TestOut { net, file } => {
                let n = self.resolve_network(net)?;
                if self.networks[n].ts.is_none() {
                    self.error(Code::E001, span, format!("network `{}` has no test data (`data ts`) bound", net.name));
                    return None;
                }
                PlanStep::TestOut { net: n, path: file.clone() }
            }
            CommandKind::Load { net, file } => PlanStep::Load { net: self.resolve_network(net)?, path: file.clone() },
            CommandKind::Save { net, file } => PlanStep::Save { net: self.resolve_network(net)?, path: file.clone() },
            CommandKind::PrintKernels { net, layer, file } => {
                let n = self.resolve_network(net)?;
                let Some(&idx) = self.layer_names[n].get(&layer.name) else {
                    self.error(Code::E002, layer.span, format!("undefined layer `{}.{}`", net.name, layer.name));
                    return None;
                };
                if idx == usize::MAX {
                    return None;
                }
                let kind = &self.networks[n].layers[idx].kind;
                if !kind.has_weights() {
                    let kw = kind.keyword();
                    self.error(Code::E009, span, format!("{kw} layer `{}` has no kernels to print", layer.name));
                    return None;
                }
                PlanStep::PrintKernels { layer: LayerId::new(n, idx), path: file.clone() }
            }
            CommandKind::Zscore { data, reference } | CommandKind::Center { data, reference } => {
                let d = self.resolve_data(data);
                let r = reference.as_ref().map(|r| self.resolve_data(r));
                let d = d?;
                let reference = match r {
                    Some(r) => Some(r?),
                    None => None,
                };
                if let Some(r) = reference {
                    if self.data_ok[d] && self.data_ok[r] && self.data[d].header.dim != self.data[r].header.dim {
                        let msg = format!("reference `{}` has a different dimension than `{}`", self.data[r].name, data.name);
                        self.error(Code::E007, span, msg);
                        return None;
                    }
                }
                if matches!(c.kind, CommandKind::Zscore { .. }) {
                    PlanStep::Zscore { data: d, reference }
                } else {
                    PlanStep::Center { data: d, reference }
                }
            }
            CommandKind::Yuv { data } => {
                let d = self.resolve_data(data)?;
                if self.data_ok[d] && self.data[d].header.dim % 3 != 0 {
                    let msg = format!("yuv needs three colour planes; `{}` has dimension {}", data.name, self.data[d].header.dim);
                    self.error(Code::E007, span, msg);
                    return None;
                }
                PlanStep::Yuv { data: d }
            }
            CommandKind::Div { data, value } => {
                let d = self.resolve_data(data)?;
                let v = value.as_f64();
                if v == 0.0 {
                    self.error(Code::E008, span, "cannot divide data by zero");
                    return None;
                }
                PlanStep::Div { data: d, value: v }
            }
        };
        Some(step)
    }

    fn compatible(&self, a: usize, b: usize) -> bool {
        if !(self.data_ok[a] && self.data_ok[b]) {
            return true;
        }
        let (x, y) = (self.data[a].header, self.data[b].header);
        x.dim == y.dim && x.classes == y.classes && x.targets == y.targets
    }
}
