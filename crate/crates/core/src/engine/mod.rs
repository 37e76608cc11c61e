//! CPU interpreter for lowered programs.
//!
//! All arithmetic is `f64`. Randomness comes from ChaCha8 streams derived
//! from one seed: one stream per layer for initialization, one per layer for
//! augmentation, dropout and noise, and one per network for shuffling. Runs
//! with equal seeds are bit-identical regardless of the thread count.

pub mod check;
pub mod container;
pub mod model;
pub mod ops;
pub mod tensor;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use check::{gradient_check, GradCheck};
pub use container::{read_model, write_model, ContainerError, SavedLayer};
pub use model::{Grads, Mode, Model, OutputMetrics, Params, Pass, Targets};
pub use tensor::Tensor;

use crate::data_io::{self, DataError, DataSet, Labels};
use crate::ir::{AmendTarget, IrProgram, Op};
use crate::sema::{apply_amendment, Criterion, LayerKind};

pub const DEFAULT_SEED: u64 = 42;

const STREAM_INIT: u64 = 1 << 40;
const STREAM_NOISE: u64 = 2 << 40;
const STREAM_SHUFFLE: u64 = 3 << 40;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ContainerError },
    #[error("{path}: model does not match network `{net}`: {reason}")]
    ModelMismatch { path: PathBuf, net: String, reason: String },
    #[error("non-finite value in layer `{layer}`")]
    NonFinite { layer: String },
    #[error("cannot bind data `{data}` to network `{net}`: {reason}")]
    Bind { net: String, data: String, reason: String },
    #[error("network `{net}` uses layers of network `{owner}`; train them together with `train(epochs, batches, ...)`")]
    Foreign { net: String, owner: String },
    #[error("data `{data}` does not match its declaration: {reason}")]
    Header { data: String, reason: String },
    #[error("cannot create thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seed: u64,
    /// Overrides the program's `threads` constant.
    pub threads: Option<usize>,
    /// Relative data, model and output paths are resolved against this.
    pub base_dir: PathBuf,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { seed: DEFAULT_SEED, threads: None, base_dir: PathBuf::from(".") }
    }
}

/// Cost and error of a network over a data set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Sum over output layers of their lambda-scaled mean cost.
    pub cost: f64,
    /// First output layer: error rate for classification, mean squared
    /// error for regression.
    pub err: f64,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Loads every data set a program declares.
pub fn load_data(prog: &IrProgram, base_dir: &Path) -> Result<Vec<DataSet>, EngineError> {
    prog.data.iter().map(|d| Ok(data_io::load(&resolve(base_dir, &d.path), d.format)?)).collect()
}

pub struct Engine {
    pub prog: IrProgram,
    pub data: Vec<DataSet>,
    pub model: Model,
    batch: usize,
    base_dir: PathBuf,
    noise_rngs: Vec<ChaCha8Rng>,
    shuffle_rngs: Vec<ChaCha8Rng>,
    cursor: Vec<(Vec<usize>, usize)>,
    epochs_done: Vec<u64>,
    log: Box<dyn Write + Send>,
    out: Box<dyn Write + Send>,
    pool: rayon::ThreadPool,
}

impl Engine {
    /// `log` receives epoch and test lines; `out` receives test lines only.
    pub fn new(
        prog: IrProgram,
        data: Vec<DataSet>,
        opts: &RunOptions,
        log: Box<dyn Write + Send>,
        out: Box<dyn Write + Send>,
    ) -> Result<Engine, EngineError> {
        for (d, decl) in data.iter().zip(&prog.data) {
            let h = d.header();
            if (h.dim, h.classes, h.targets) != (decl.header.dim, decl.header.classes, decl.header.targets) {
                return Err(EngineError::Header {
                    data: decl.name.clone(),
                    reason: format!(
                        "expected {}d with {} classes and {} targets, file has {}d with {} classes and {} targets",
                        decl.header.dim, decl.header.classes, decl.header.targets, h.dim, h.classes, h.targets
                    ),
                });
            }
        }
        let seed = opts.seed;
        let model = Model::new(&prog, |g| rng(seed, STREAM_INIT + g as u64));
        let layers = model.ids.len();
        let nets = prog.networks.len();
        let threads = opts.threads.unwrap_or(prog.constants.threads).max(1);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| EngineError::Pool(e.to_string()))?;
        let mut e = Engine {
            batch: prog.constants.batch.max(1),
            prog,
            data,
            model,
            base_dir: opts.base_dir.clone(),
            noise_rngs: (0..layers).map(|g| rng(seed, STREAM_NOISE + g as u64)).collect(),
            shuffle_rngs: (0..nets).map(|n| rng(seed, STREAM_SHUFFLE + n as u64)).collect(),
            cursor: vec![(Vec::new(), 0); nets],
            epochs_done: vec![0; nets],
            log,
            out,
            pool,
        };
        e.log_line(&format!("# layers seed {seed}"))?;
        Ok(e)
    }

    /// Loads the program's data relative to `opts.base_dir` and builds an engine.
    pub fn from_program(
        prog: IrProgram,
        opts: &RunOptions,
        log: Box<dyn Write + Send>,
        out: Box<dyn Write + Send>,
    ) -> Result<Engine, EngineError> {
        let data = load_data(&prog, &opts.base_dir)?;
        Engine::new(prog, data, opts, log, out)
    }

    fn path(&self, p: &str) -> PathBuf {
        resolve(&self.base_dir, p)
    }

    fn log_line(&mut self, line: &str) -> Result<(), EngineError> {
        writeln!(self.log, "{line}").and_then(|_| self.log.flush()).map_err(|source| EngineError::Io { path: "<log>".into(), source })
    }

    pub fn network_name(&self, net: usize) -> &str {
        &self.prog.networks[net].name
    }

    /// Runs every action of the program in order.
    pub fn run(&mut self) -> Result<(), EngineError> {
        let actions = self.prog.actions.clone();
        for op in &actions {
            self.execute(op)?;
        }
        Ok(())
    }

    pub fn execute(&mut self, op: &Op) -> Result<(), EngineError> {
        match op {
            Op::Train { net, epochs } => self.train(*net, *epochs),
            Op::JTrain { epochs, batches, nets } => self.joint_train(*epochs, *batches, nets),
            Op::Test { net, data } => self.test(*net, *data).map(|_| ()),
            Op::Save { net, path } => self.save(*net, &self.path(path)),
            Op::Load { net, path } => self.load(*net, &self.path(path)),
            Op::TestOut { net, path } => {
                let ts = self.prog.networks[*net].ts.expect("testout requires ts");
                self.testout(*net, ts, &self.path(path))
            }
            Op::PrintK { layer, path } => self.printkernels(self.model.gid(*layer), &self.path(path)),
            Op::Set { target, param, value } => {
                let gids: Vec<usize> = match target {
                    AmendTarget::Network(n) => self.model.own[*n].clone(),
                    AmendTarget::Layer(l) => vec![self.model.gid(*l)],
                };
                let model = &mut self.model;
                let layers = model.kinds.iter().zip(model.hyper.iter_mut()).enumerate().filter(|(g, _)| gids.contains(g)).map(|(_, p)| p);
                apply_amendment(layers, *param, *value);
                Ok(())
            }
            Op::Balance { data, on } => {
                self.data[*data].balance = *on;
                Ok(())
            }
            Op::Zscore { data, reference } => {
                let stats = reference.map(|r| self.data[r].reference_stats());
                Ok(self.data[*data].zscore(stats.as_ref())?)
            }
            Op::Center { data, reference } => {
                let stats = reference.map(|r| self.data[r].reference_stats());
                Ok(self.data[*data].center(stats.as_ref())?)
            }
            Op::Yuv { data } => Ok(self.data[*data].yuv()?),
            Op::Div { data, value } => Ok(self.data[*data].div(*value)?),
        }
    }

    /// Checks that data set `d` can feed network `net`.
    fn bind(&self, net: usize, d: usize) -> Result<(), EngineError> {
        let ds = &self.data[d];
        let h = ds.header();
        let fail = |reason: String| EngineError::Bind {
            net: self.network_name(net).to_string(),
            data: self.prog.data[d].name.clone(),
            reason,
        };
        for &g in &self.model.active[net] {
            match &self.model.kinds[g] {
                LayerKind::FI { .. } | LayerKind::CI { .. } if self.model.input_dim(g) != h.dim => {
                    return Err(fail(format!("input `{}` expects {} values, samples have {}", self.model.names[g], self.model.input_dim(g), h.dim)));
                }
                LayerKind::FO { criterion: Criterion::Classification, .. } if h.classes != self.model.shapes[g].size() => {
                    return Err(fail(format!("output `{}` has {} classes, data has {}", self.model.names[g], self.model.shapes[g].size(), h.classes)));
                }
                LayerKind::FO { criterion: Criterion::Regression, autoencoder: None } if h.targets != self.model.shapes[g].size() => {
                    return Err(fail(format!("output `{}` has {} targets, data has {}", self.model.names[g], self.model.shapes[g].size(), h.targets)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Errors unless every layer `net` evaluates belongs to one of `allowed`.
    fn check_owners(&self, net: usize, allowed: &[usize]) -> Result<(), EngineError> {
        for &g in &self.model.active[net] {
            let owner = self.model.ids[g].net;
            if !allowed.contains(&owner) {
                return Err(EngineError::Foreign { net: self.network_name(net).into(), owner: self.network_name(owner).into() });
            }
        }
        Ok(())
    }

    fn gather(&self, d: usize, idx: &[usize]) -> (Vec<f64>, Vec<usize>, Vec<f64>) {
        let ds = &self.data[d];
        let mut x = Vec::with_capacity(idx.len() * ds.dim);
        let mut classes = Vec::new();
        let mut values = Vec::new();
        for &i in idx {
            x.extend_from_slice(ds.sample(i));
            match &ds.labels {
                Labels::Classes { index, .. } => classes.push(index[i] as usize),
                Labels::Targets { .. } => values.extend_from_slice(ds.target(i).expect("targets")),
            }
        }
        (x, classes, values)
    }

    fn check_finite(&self, layers: impl IntoIterator<Item = usize>, pass: Option<&model::Pass>) -> Result<(), EngineError> {
        for g in layers {
            let bad_out = pass.is_some_and(|p| p.caches[g].as_ref().is_some_and(|c| c.out.iter().any(|v| !v.is_finite())));
            let bad_param = self.model.params[g].as_ref().is_some_and(|p| p.tensors().iter().any(|t| !t.is_finite()));
            if bad_out || bad_param {
                return Err(EngineError::NonFinite { layer: self.model.names[g].clone() });
            }
        }
        Ok(())
    }

    /// One SGD step of network `net` on samples `idx` of data set `d`.
    pub fn step(&mut self, net: usize, d: usize, idx: &[usize]) -> Result<(), EngineError> {
        let (x, classes, values) = self.gather(d, idx);
        let targets = if classes.is_empty() { Targets::Values(&values) } else { Targets::Classes(&classes) };
        let active = self.model.active[net].clone();
        let outs = self.model.outputs[net].clone();
        let n = idx.len();
        let model = &mut self.model;
        let rngs = &mut self.noise_rngs;
        let (pass, grads) = self.pool.install(|| {
            let pass = model.forward(&active, &x, n, Mode::Train, rngs);
            let (_, dout) = model.loss(&pass, &outs, &targets);
            let grads = model.backward(&pass, &active, &outs, dout);
            (pass, grads)
        });
        self.check_finite(active.iter().copied(), Some(&pass))?;
        self.model.update(&grads);
        self.check_finite(active.iter().copied(), None)
    }

    /// Forward pass of `net` over all of data set `d` in evaluation mode, in
    /// chunks of the batch size. `each` sees every chunk's pass.
    fn sweep(&mut self, net: usize, d: usize, mut each: impl FnMut(&Model, &model::Pass, &Targets)) -> Result<(), EngineError> {
        self.bind(net, d)?;
        let active = self.model.active[net].clone();
        let all: Vec<usize> = (0..self.data[d].len()).collect();
        for idx in all.chunks(self.batch) {
            let (x, classes, values) = self.gather(d, idx);
            let targets = if classes.is_empty() { Targets::Values(&values) } else { Targets::Classes(&classes) };
            let model = &mut self.model;
            let rngs = &mut self.noise_rngs;
            let pass = self.pool.install(|| model.forward(&active, &x, idx.len(), Mode::Eval, rngs));
            self.check_finite(active.iter().copied(), Some(&pass))?;
            each(&self.model, &pass, &targets);
        }
        Ok(())
    }

    pub fn evaluate(&mut self, net: usize, d: usize) -> Result<Metrics, EngineError> {
        let outs = self.model.outputs[net].clone();
        let (mut cost, mut err, mut count) = (0.0, 0.0, 0usize);
        self.sweep(net, d, |model, pass, targets| {
            let (m, _) = model.loss(pass, &outs, targets);
            cost += m.iter().map(|o| o.cost).sum::<f64>() * pass.n as f64;
            err += m[0].err * pass.n as f64;
            count += pass.n;
        })?;
        Ok(Metrics { cost: cost / count as f64, err: err / count as f64 })
    }

    /// Concatenated output-layer values for every sample of `d`.
    pub fn outputs(&mut self, net: usize, d: usize) -> Result<Vec<Vec<f64>>, EngineError> {
        let outs = self.model.outputs[net].clone();
        let mut rows = Vec::new();
        self.sweep(net, d, |model, pass, _| {
            for i in 0..pass.n {
                let mut row = Vec::new();
                for &g in &outs {
                    let k = model.shapes[g].size();
                    row.extend_from_slice(&pass.out(g)[i * k..(i + 1) * k]);
                }
                rows.push(row);
            }
        })?;
        Ok(rows)
    }

    fn log_epoch(&mut self, net: usize) -> Result<(), EngineError> {
        let g = &self.prog.networks[net];
        let splits: Vec<(&str, usize)> =
            [("tr", Some(g.tr)), ("va", g.va), ("ts", g.ts)].into_iter().filter_map(|(s, d)| d.map(|d| (s, d))).collect();
        let k = self.epochs_done[net];
        for (split, d) in splits {
            let m = self.evaluate(net, d)?;
            let line = format!("epoch {k} net {} split {split} cost {:.6} err {:.6}", self.network_name(net), m.cost, m.err);
            self.log_line(&line)?;
        }
        Ok(())
    }

    pub fn train(&mut self, net: usize, epochs: u64) -> Result<(), EngineError> {
        let tr = self.prog.networks[net].tr;
        self.check_owners(net, &[net])?;
        self.bind(net, tr)?;
        let header = format!("train net {} epochs {epochs} batch {}", self.network_name(net), self.batch);
        self.log_line(&header)?;
        for _ in 0..epochs {
            let order = self.data[tr].epoch_indices(&mut self.shuffle_rngs[net]);
            for idx in order.chunks(self.batch) {
                self.step(net, tr, idx)?;
            }
            self.epochs_done[net] += 1;
            self.log_epoch(net)?;
        }
        self.cursor[net] = (Vec::new(), 0);
        Ok(())
    }

    /// `epochs` rounds; each round runs `batches` mini-batches of every
    /// network in turn. Each network keeps its place in its shuffled data
    /// between rounds and reshuffles when it runs out.
    pub fn joint_train(&mut self, epochs: u64, batches: u64, nets: &[usize]) -> Result<(), EngineError> {
        for &net in nets {
            self.check_owners(net, nets)?;
            self.bind(net, self.prog.networks[net].tr)?;
        }
        let names: Vec<&str> = nets.iter().map(|&n| self.network_name(n)).collect();
        let header = format!("train nets {} epochs {epochs} batches {batches} batch {}", names.join(","), self.batch);
        self.log_line(&header)?;
        for _ in 0..epochs {
            for &net in nets {
                let tr = self.prog.networks[net].tr;
                for _ in 0..batches {
                    if self.cursor[net].1 >= self.cursor[net].0.len() {
                        self.cursor[net] = (self.data[tr].epoch_indices(&mut self.shuffle_rngs[net]), 0);
                    }
                    let (order, pos) = &self.cursor[net];
                    let idx = order[*pos..(*pos + self.batch).min(order.len())].to_vec();
                    self.cursor[net].1 += idx.len();
                    self.step(net, tr, &idx)?;
                }
            }
            for &net in nets {
                self.epochs_done[net] += 1;
                self.log_epoch(net)?;
            }
        }
        Ok(())
    }

    pub fn test(&mut self, net: usize, d: usize) -> Result<Metrics, EngineError> {
        let m = self.evaluate(net, d)?;
        let line = format!("test net {} data {} cost {:.6} err {:.6}", self.network_name(net), self.prog.data[d].name, m.cost, m.err);
        self.log_line(&line)?;
        writeln!(self.out, "{line}").map_err(|source| EngineError::Io { path: "<stdout>".into(), source })?;
        Ok(m)
    }

    /// Writes one line per sample of `d`: the network's outputs, 9
    /// significant digits, space-separated.
    pub fn testout(&mut self, net: usize, d: usize, path: &Path) -> Result<(), EngineError> {
        let rows = self.outputs(net, d)?;
        let io = |source| EngineError::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for row in rows {
            let text: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{}", text.join(" ")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// State of the layers of `net` in container form.
    pub fn snapshot(&self, net: usize) -> Vec<SavedLayer> {
        self.model.own[net]
            .iter()
            .map(|&g| SavedLayer {
                name: self.prog.layer(self.model.ids[g]).name.clone(),
                tensors: self.model.params[g].as_ref().map_or_else(Vec::new, |p| p.tensors().into_iter().cloned().collect()),
            })
            .collect()
    }

    pub fn save(&self, net: usize, path: &Path) -> Result<(), EngineError> {
        let io = |source| EngineError::Io { path: path.to_path_buf(), source };
        let file = File::create(path).map_err(io)?;
        write_model(&self.snapshot(net), BufWriter::new(file)).map_err(io)
    }

    pub fn load(&mut self, net: usize, path: &Path) -> Result<(), EngineError> {
        let file = File::open(path).map_err(|source| EngineError::Io { path: path.to_path_buf(), source })?;
        let saved = read_model(io::BufReader::new(file)).map_err(|source| EngineError::Model { path: path.to_path_buf(), source })?;
        self.restore(net, saved).map_err(|reason| EngineError::ModelMismatch {
            path: path.to_path_buf(),
            net: self.network_name(net).to_string(),
            reason,
        })
    }

    /// Replaces the state of `net`'s layers; shapes and names must match.
    pub fn restore(&mut self, net: usize, saved: Vec<SavedLayer>) -> Result<(), String> {
        let own = self.model.own[net].clone();
        if saved.len() != own.len() {
            return Err(format!("{} layers saved, network has {}", saved.len(), own.len()));
        }
        for (&g, s) in own.iter().zip(&saved) {
            let name = &self.prog.layer(self.model.ids[g]).name;
            if &s.name != name {
                return Err(format!("saved layer `{}` where `{name}` was expected", s.name));
            }
            let current = self.model.params[g].as_ref().map_or(0, |p| p.tensors().len());
            if current != s.tensors.len() {
                return Err(format!("layer `{name}` has {} tensors saved, expected {current}", s.tensors.len()));
            }
            if let Some(p) = &self.model.params[g] {
                for (t, u) in p.tensors().iter().zip(&s.tensors) {
                    if t.shape != u.shape {
                        return Err(format!("layer `{name}`: saved shape {:?}, expected {:?}", u.shape, t.shape));
                    }
                }
            }
        }
        for (&g, s) in own.iter().zip(saved) {
            if let Some(p) = &mut self.model.params[g] {
                for (t, u) in p.tensors_mut().into_iter().zip(s.tensors) {
                    *t = u;
                }
            }
        }
        Ok(())
    }

    /// Writes the weight rows (one per unit or kernel) of layer `g`.
    pub fn printkernels(&self, g: usize, path: &Path) -> Result<(), EngineError> {
        let p = self.model.params[g].as_ref().expect("sema checked the layer has weights");
        let io = |source| EngineError::Io { path: path.to_path_buf(), source };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let cols = p.w.len() / p.rows();
        for row in p.w.data.chunks(cols) {
            let text: Vec<String> = row.iter().map(|v| format!("{v:.8e}")).collect();
            writeln!(w, "{}", text.join(" ")).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Concatenation of every weight tensor, for comparisons.
    pub fn flat_weights(&self) -> Vec<f64> {
        self.model.params.iter().flatten().flat_map(|p| p.tensors().into_iter().flat_map(|t| t.data.iter().copied())).collect()
    }
}
