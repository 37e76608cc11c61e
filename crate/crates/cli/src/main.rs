//! `layers`: check, compile, run and inspect Layers programs.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use layers_core::engine::{Engine, EngineError, RunOptions, DEFAULT_SEED};
use layers_core::ir::{self, IrError, IrProgram};
use layers_core::sema::{Constants, FsData};
use layers_core::{dot, parser, CompileError};
use thiserror::Error;

const LOG_ENV: &str = "LAYERS_LOG";

#[derive(Parser)]
#[command(name = "layers", version, about = "Compiler and CPU interpreter for the Layers language")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lex, parse and analyze a program; print diagnostics.
    Check { file: PathBuf },
    /// Write the intermediate representation of a program.
    Compile {
        file: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Execute a program or a compiled `.lir` file.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Worker threads; overrides the program's `threads` constant.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        threads: Option<u64>,
        /// Log file; overrides the program's `log` constant and LAYERS_LOG.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Directory that relative data, model and output paths are
        /// resolved against. Defaults to the directory of FILE.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Write the network topology as Graphviz DOT.
    Graph {
        file: PathBuf,
        #[arg(long)]
        dot: PathBuf,
    },
    /// Print a program in canonical form.
    Fmt { file: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{}", .0.join("\n"))]
    Compile(Vec<String>),
    #[error("{path}: {source}")]
    Input { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Ir { path: PathBuf, source: IrError },
    #[error("error: {0}")]
    Runtime(#[from] EngineError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Compile(_) | CliError::Ir { .. } => 1,
            CliError::Io { .. } | CliError::Runtime(_) => 2,
            CliError::Input { .. } => 3,
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Input { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn program_dir(file: &Path) -> PathBuf {
    match file.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn print_warnings(file: &Path, warnings: &[layers_core::sema::Diagnostic]) {
    for w in warnings {
        eprintln!("{}", w.render(&file.display().to_string()));
    }
}

fn compile_file(file: &Path) -> Result<IrProgram, CliError> {
    let source = read(file)?;
    let analysis = layers_core::check(&source, &FsData::new(program_dir(file)))
        .map_err(|e: CompileError| CliError::Compile(e.render(&file.display().to_string())))?;
    print_warnings(file, &analysis.warnings);
    Ok(ir::lower(&analysis))
}

fn is_ir(file: &Path, text: &str) -> bool {
    file.extension().is_some_and(|e| e == "lir") || text.starts_with("layers-ir ")
}

fn load_program(file: &Path) -> Result<IrProgram, CliError> {
    let text = read(file)?;
    if is_ir(file, &text) {
        ir::deserialize(&text).map_err(|source| CliError::Ir { path: file.to_path_buf(), source })
    } else {
        compile_file(file)
    }
}

/// `--log`, then the program's `log` constant (relative to the program),
/// then LAYERS_LOG, then the default name.
fn log_path(flag: Option<PathBuf>, constants: &Constants, base: &Path) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    if let Some(p) = &constants.log {
        return base.join(p);
    }
    match std::env::var_os(LOG_ENV) {
        Some(p) if !p.is_empty() => PathBuf::from(p),
        _ => PathBuf::from(Constants::DEFAULT_LOG),
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Check { file } => compile_file(&file).map(|_| ()),
        Command::Compile { file, output } => {
            let prog = compile_file(&file)?;
            write(&output, &ir::serialize(&prog))
        }
        Command::Run { file, seed, threads, log, data_dir } => {
            let prog = load_program(&file)?;
            let base = data_dir.unwrap_or_else(|| program_dir(&file));
            let log_file = log_path(log, &prog.constants, &base);
            let sink: File = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_file)
                .map_err(|source| CliError::Io { path: log_file.clone(), source })?;
            let opts = RunOptions { seed, threads: threads.map(|t| t as usize), base_dir: base };
            let mut engine = Engine::from_program(prog, &opts, Box::new(sink), Box::new(io::stdout()))?;
            engine.run()?;
            Ok(())
        }
        Command::Graph { file, dot: out } => {
            let prog = compile_file(&file)?;
            write(&out, &dot::to_dot(&prog))
        }
        Command::Fmt { file } => {
            let source = read(&file)?;
            let exp = parser::parse_source(&source)
                .map_err(|e| CliError::Compile(CompileError::from(e).render(&file.display().to_string())))?;
            print!("{}", parser::dump_ast(&exp));
            io::stdout().flush().map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 3 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
