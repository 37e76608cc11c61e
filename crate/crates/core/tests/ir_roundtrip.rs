#[macro_use]
mod common;

use std::fs;
use std::path::Path;

use layers_core::engine::{Engine, RunOptions};
use layers_core::ir;
use layers_core::sema::FsData;

/// Every fixture under `dir` that compiles, by file name.
fn compiled(dir: &Path) -> Vec<(String, ir::IrProgram)> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "lyr"))
        .collect();
    paths.sort();
    let data = FsData::new(dir);
    paths
        .into_iter()
        .filter_map(|p| {
            let src = fs::read_to_string(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            layers_core::compile(&src, &data).ok().map(|prog| (name, prog))
        })
        .collect()
}

fn serialize_then_deserialize_is_identity() {
    let progs = compiled(&common::fixtures());
    let names: Vec<&str> = progs.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["n1_fixed.lyr", "xor.lyr", "gauss2.lyr", "patterns8.lyr"] {
        assert!(names.contains(&want), "{want} did not compile");
    }
    for (name, prog) in &progs {
        let text = ir::serialize(prog);
        let back = ir::deserialize(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(&back, prog, "{name}");
        assert_eq!(ir::serialize(&back), text, "{name}");
    }
}

fn malformed_ir_is_rejected() {
    let (_, prog) = compiled(&common::fixtures()).into_iter().find(|(n, _)| n == "xor.lyr").unwrap();
    let text = ir::serialize(&prog);
    assert!(ir::deserialize("").is_err());
    assert!(ir::deserialize(&text.replacen("layers-ir ", "layers-ir 99", 1)).is_err());
    let truncated: String = text.lines().take(text.lines().count() / 2).map(|l| format!("{l}\n")).collect();
    assert!(ir::deserialize(&truncated).is_err() || ir::deserialize(&truncated).unwrap() != prog);
}

fn compiled_ir_runs_like_source() {
    let src = fs::read_to_string(common::fixtures().join("xor.lyr")).unwrap();
    let a = common::stage(&["xor.dat"]);
    let b = common::stage(&["xor.dat"]);
    let direct = common::run_in(&src, a.path(), 42, Some(1));

    let text = ir::serialize(&layers_core::compile_in(&src, b.path()).unwrap());
    let prog = ir::deserialize(&text).unwrap();
    let (log, out) = (common::SharedBuf::default(), common::SharedBuf::default());
    let opts = RunOptions { seed: 42, threads: Some(1), base_dir: b.path().to_path_buf() };
    let mut engine = Engine::from_program(prog, &opts, Box::new(log.clone()), Box::new(out.clone())).unwrap();
    engine.run().unwrap();

    assert_eq!(direct.log.text(), log.text());
    assert_eq!(direct.out.text(), out.text());
    assert_eq!(direct.engine.flat_weights(), engine.flat_weights());
    for f in ["xor.out", "xor.lyrm"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[allow(dead_code)]
pub fn criterion() {
    serialize_then_deserialize_is_identity();
    malformed_ir_is_rejected();
    compiled_ir_runs_like_source();
}

tests!(
    serialize_then_deserialize_is_identity,
    malformed_ir_is_rejected,
    compiled_ir_runs_like_source,
);
