#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use layers_core::data_io::DataHeader;
use layers_core::ir::IrProgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn header(samples: usize, dim: usize, classes: usize, targets: usize) -> DataHeader {
    DataHeader { samples, dim, classes, targets }
}

pub fn compile(src: &str, files: &[(&str, DataHeader)]) -> IrProgram {
    let provider: HashMap<String, DataHeader> = files.iter().map(|(p, h)| (p.to_string(), *h)).collect();
    match layers_core::compile(src, &provider) {
        Ok(p) => p,
        Err(e) => panic!("{}\n{src}", e.render("test").join("\n")),
    }
}

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

use std::io::Write;
use std::sync::{Arc, Mutex};

use layers_core::engine::{Engine, Model, RunOptions};
use layers_core::ir::{AmendTarget, Op};

/// In-memory log sink that can be read back after the engine is done.
#[derive(Clone, Default)]
pub struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl SharedBuf {
    pub fn text(&self) -> String {
        String::from_utf8(self.0.lock().unwrap().clone()).unwrap()
    }
}

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Copies fixture files into a fresh directory.
pub fn stage(files: &[&str]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in files {
        std::fs::copy(fixtures().join(f), dir.path().join(f)).unwrap();
    }
    dir
}

pub struct Run {
    pub engine: Engine,
    pub log: SharedBuf,
    pub out: SharedBuf,
}

pub fn engine_for(src: &str, dir: &Path, seed: u64, threads: Option<usize>) -> Run {
    let prog = match layers_core::compile_in(src, dir) {
        Ok(p) => p,
        Err(e) => panic!("{}", e.render("test").join("\n")),
    };
    let (log, out) = (SharedBuf::default(), SharedBuf::default());
    let opts = RunOptions { seed, threads, base_dir: dir.to_path_buf() };
    let engine = Engine::from_program(prog, &opts, Box::new(log.clone()), Box::new(out.clone())).unwrap();
    Run { engine, log, out }
}

/// Compiles and runs `src` inside `dir`.
pub fn run_in(src: &str, dir: &Path, seed: u64, threads: Option<usize>) -> Run {
    let mut r = engine_for(src, dir, seed, threads);
    r.engine.run().unwrap();
    r
}

/// Model with the program's amendments applied, initialized from `seed`.
pub fn model_for(prog: &IrProgram, seed: u64) -> Model {
    let mut prog = prog.clone();
    for op in std::mem::take(&mut prog.actions) {
        if let Op::Set { target, param, value } = op {
            let layers: Vec<_> = match target {
                AmendTarget::Network(n) => prog.networks[n].layers.iter_mut().collect(),
                AmendTarget::Layer(id) => vec![&mut prog.networks[id.net].layers[id.layer]],
            };
            layers_core::sema::apply_amendment(layers.into_iter().map(|l| (&l.kind, &mut l.hyper)), param, value);
        }
    }
    Model::new(&prog, |g| {
        let mut r = rng(seed);
        r.set_stream(g as u64);
        r
    })
}

pub fn streams(n: usize, seed: u64) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|g| {
            let mut r = rng(seed);
            r.set_stream(1000 + g as u64);
            r
        })
        .collect()
}

/// Registers plain check functions as tests of the including target.
macro_rules! tests {
    ($($name:ident),* $(,)?) => {
        #[cfg(test)]
        mod tests {
            $(
                #[test]
                fn $name() {
                    super::$name()
                }
            )*
        }
    };
}
