//! Python bindings: the compiler front end, the IR and the engine.
//!
//! ```python
//! import layers
//! prog = layers.compile(open("xor.lyr").read(), base_dir="fixtures")
//! eng = layers.Engine(prog, seed=42, base_dir="fixtures")
//! eng.train("xor", 200)
//! cost, err = eng.test("xor")
//! ```

use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use layers_core::engine::{Engine as CoreEngine, RunOptions};
use layers_core::ir::{self, IrProgram};
use layers_core::lexer::tokenize as lex;
use layers_core::parser::{dump_ast, parse_source, SyntaxError};
use layers_core::sema::{FsData, LayerKind};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError, PyValueError};
use pyo3::prelude::*;

create_exception!(layers, CompileError, PyException, "Lexical, syntax or semantic errors; args[0] lists the rendered diagnostics.");
create_exception!(layers, RunError, PyException, "Failure while executing a program.");

fn compile_error(e: layers_core::CompileError, file: &str) -> PyErr {
    CompileError::new_err(e.render(file))
}

fn run_error(e: impl std::fmt::Display) -> PyErr {
    RunError::new_err(e.to_string())
}

/// Tokens of `source` as `(kind, lexeme, line, col)` tuples, ending with EOF.
#[pyfunction]
fn tokenize(source: &str) -> PyResult<Vec<(String, String, usize, usize)>> {
    let tokens = lex(source).map_err(|e| compile_error(SyntaxError::from(e).into(), "<source>"))?;
    Ok(tokens.into_iter().map(|t| (format!("{:?}", t.kind), t.lexeme, t.span.line as usize, t.span.col as usize)).collect())
}

/// Canonical re-print of `source`.
#[pyfunction]
fn fmt(source: &str) -> PyResult<String> {
    let exp = parse_source(source).map_err(|e| compile_error(e.into(), "<source>"))?;
    Ok(dump_ast(&exp))
}

/// Rendered diagnostics for `source`; empty when it compiles. Data headers
/// are read relative to `base_dir`.
#[pyfunction]
#[pyo3(signature = (source, base_dir = ".", file = "<source>"))]
fn check(source: &str, base_dir: &str, file: &str) -> Vec<String> {
    match layers_core::check(source, &FsData::new(base_dir)) {
        Ok(a) => a.warnings.iter().map(|w| w.render(file)).collect(),
        Err(e) => e.render(file),
    }
}

#[pyfunction]
#[pyo3(signature = (source, base_dir = ".", file = "<source>"))]
fn compile(source: &str, base_dir: &str, file: &str) -> PyResult<Program> {
    layers_core::compile_in(source, base_dir.as_ref()).map(|inner| Program { inner }).map_err(|e| compile_error(e, file))
}

/// A compiled program.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Program {
    inner: IrProgram,
}

#[pymethods]
impl Program {
    #[staticmethod]
    fn from_ir(text: &str) -> PyResult<Program> {
        ir::deserialize(text).map(|inner| Program { inner }).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn to_ir(&self) -> String {
        ir::serialize(&self.inner)
    }

    fn to_dot(&self) -> String {
        layers_core::dot::to_dot(&self.inner)
    }

    #[getter]
    fn networks(&self) -> Vec<String> {
        self.inner.networks.iter().map(|n| n.name.clone()).collect()
    }

    #[getter]
    fn data(&self) -> Vec<String> {
        self.inner.data.iter().map(|d| d.name.clone()).collect()
    }

    /// `(name, kind, shape)` for each layer of network `net`.
    fn layers(&self, net: &str) -> PyResult<Vec<(String, String, Vec<usize>)>> {
        let n = network(&self.inner, net)?;
        Ok(self.inner.networks[n]
            .layers
            .iter()
            .map(|l| {
                let kind = match l.kind {
                    LayerKind::Reshape => "RESHAPE",
                    ref k => k.keyword(),
                };
                let shape = match l.shape {
                    layers_core::sema::Shape::Flat(d) => vec![d],
                    layers_core::sema::Shape::Map { z, r, c } => vec![z, r, c],
                };
                (l.name.clone(), kind.to_string(), shape)
            })
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("<Program networks={:?}>", self.networks())
    }
}

fn network(prog: &IrProgram, name: &str) -> PyResult<usize> {
    prog.networks.iter().position(|n| n.name == name).ok_or_else(|| PyKeyError::new_err(format!("no network `{name}`")))
}

fn data_set(prog: &IrProgram, name: &str) -> PyResult<usize> {
    prog.data.iter().position(|d| d.name == name).ok_or_else(|| PyKeyError::new_err(format!("no data `{name}`")))
}

#[derive(Clone, Default)]
struct Buffer(Arc<Mutex<Vec<u8>>>);

impl Write for Buffer {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().expect("log buffer").extend_from_slice(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Interpreter state for one program. Log and test lines are collected in
/// memory; read them with `log()` and `output()`.
#[pyclass(unsendable)]
struct Engine {
    inner: CoreEngine,
    log: Buffer,
    out: Buffer,
    base: PathBuf,
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (program, seed = 42, threads = None, base_dir = "."))]
    fn new(program: &Program, seed: u64, threads: Option<usize>, base_dir: &str) -> PyResult<Self> {
        let (log, out) = (Buffer::default(), Buffer::default());
        let opts = RunOptions { seed, threads, base_dir: base_dir.into() };
        let inner = CoreEngine::from_program(program.inner.clone(), &opts, Box::new(log.clone()), Box::new(out.clone()))
            .map_err(run_error)?;
        Ok(Engine { inner, log, out, base: base_dir.into() })
    }

    /// Executes the program's script.
    fn run(&mut self, py: Python<'_>) -> PyResult<()> {
        let inner = &mut self.inner;
        py.detach(|| inner.run()).map_err(run_error)
    }

    fn train(&mut self, py: Python<'_>, net: &str, epochs: u64) -> PyResult<()> {
        let n = network(&self.inner.prog, net)?;
        let inner = &mut self.inner;
        py.detach(|| inner.train(n, epochs)).map_err(run_error)
    }

    /// `(cost, err)` of `net` on data set `data` (its test set by default).
    #[pyo3(signature = (net, data = None))]
    fn test(&mut self, net: &str, data: Option<&str>) -> PyResult<(f64, f64)> {
        let n = network(&self.inner.prog, net)?;
        let d = match data {
            Some(name) => data_set(&self.inner.prog, name)?,
            None => self.inner.prog.networks[n].ts.ok_or_else(|| PyValueError::new_err(format!("network `{net}` has no test data")))?,
        };
        let m = self.inner.test(n, d).map_err(run_error)?;
        Ok((m.cost, m.err))
    }

    /// Output-layer values of `net` for every sample of `data`.
    fn outputs(&mut self, net: &str, data: &str) -> PyResult<Vec<Vec<f64>>> {
        let (n, d) = (network(&self.inner.prog, net)?, data_set(&self.inner.prog, data)?);
        self.inner.outputs(n, d).map_err(run_error)
    }

    fn save(&self, net: &str, path: &str) -> PyResult<()> {
        let n = network(&self.inner.prog, net)?;
        self.inner.save(n, &self.base.join(path)).map_err(run_error)
    }

    fn load(&mut self, net: &str, path: &str) -> PyResult<()> {
        let n = network(&self.inner.prog, net)?;
        let p = self.base.join(path);
        self.inner.load(n, &p).map_err(run_error)
    }

    /// Weight rows of layer `net.layer`.
    fn weights(&self, net: &str, layer: &str) -> PyResult<Vec<Vec<f64>>> {
        let n = network(&self.inner.prog, net)?;
        let l = self.inner.prog.networks[n]
            .layers
            .iter()
            .position(|x| x.name == layer)
            .ok_or_else(|| PyKeyError::new_err(format!("no layer `{net}.{layer}`")))?;
        let g = self.inner.model.offsets[n] + l;
        let p = self.inner.model.params[g].as_ref().ok_or_else(|| PyValueError::new_err(format!("`{net}.{layer}` has no weights")))?;
        let cols = p.w.len() / p.rows();
        Ok(p.w.data.chunks(cols).map(<[f64]>::to_vec).collect())
    }

    fn log(&self) -> String {
        String::from_utf8_lossy(&self.log.0.lock().expect("log buffer")).into_owned()
    }

    fn output(&self) -> String {
        String::from_utf8_lossy(&self.out.0.lock().expect("output buffer")).into_owned()
    }
}

#[pymodule]
fn layers(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CompileError", m.py().get_type::<CompileError>())?;
    m.add("RunError", m.py().get_type::<RunError>())?;
    m.add_class::<Program>()?;
    m.add_class::<Engine>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(fmt, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(compile, m)?)?;
    Ok(())
}
