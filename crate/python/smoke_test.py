#!/usr/bin/env python3
"""Smoke test for the `layers` Python module.

Uses an installed `layers` if there is one (e.g. after `maturin develop` in
crates/python); otherwise builds the extension with cargo and loads it from a
temporary directory.
"""

import importlib
import os
import shutil
import subprocess
import sys
import sysconfig
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"


def import_layers():
    try:
        return importlib.import_module("layers")
    except ImportError:
        pass
    subprocess.run(
        ["cargo", "build", "--release", "-p", "layers-python", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = {"darwin": "liblayers.dylib", "win32": "layers.dll"}.get(sys.platform, "liblayers.so")
    target = Path(os.environ.get("CARGO_TARGET_DIR", ROOT / "target"))
    out = Path(tempfile.mkdtemp())
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    shutil.copy(target / "release" / lib, out / f"layers{suffix}")
    sys.path.insert(0, str(out))
    return importlib.import_module("layers")


def main():
    layers = import_layers()

    toks = layers.tokenize("network n { FI i }")
    assert toks[0][:2] == ("Network", "network"), toks[0]
    assert toks[-1][0] == "Eof"

    src = (FIXTURES / "n1_fixed.lyr").read_text()
    assert layers.check(src, base_dir=str(FIXTURES)) == []
    prog = layers.compile(src, base_dir=str(FIXTURES))
    assert prog.networks == ["N1"]
    shapes = {name: shape for name, _, shape in prog.layers("N1")}
    assert shapes["cat"] == [48, 28, 28] and shapes["out"] == [10]
    assert layers.Program.from_ir(prog.to_ir()).to_ir() == prog.to_ir()
    assert prog.to_dot().count(" -> ") == 18

    bad = (FIXTURES / "figure2.lyr").read_text()
    diags = layers.check(bad, base_dir=str(FIXTURES), file="figure2.lyr")
    assert len(diags) == 1 and "E007" in diags[0], diags
    try:
        layers.compile(bad, base_dir=str(FIXTURES))
    except layers.CompileError as e:
        assert "E007" in e.args[0][0]
    else:
        raise AssertionError("unpadded N1 should not compile")

    assert layers.fmt(layers.fmt(src)) == layers.fmt(src)

    with tempfile.TemporaryDirectory() as tmp:
        for f in ("xor.lyr", "xor.dat"):
            shutil.copy(FIXTURES / f, tmp)
        xor = layers.compile((FIXTURES / "xor.lyr").read_text(), base_dir=tmp)
        eng = layers.Engine(xor, seed=42, base_dir=tmp)
        eng.run()
        cost, err = eng.test("xor")
        assert err == 0.0, (cost, err)
        assert eng.log().startswith("# layers seed 42\n")
        outs = eng.outputs("xor", "X")
        assert len(outs) == 4 and all(abs(sum(o) - 1.0) < 1e-9 for o in outs)
        assert len(eng.weights("xor", "hid")) == 4

        # hyperparameters come from the script, weights from the model file
        text = (FIXTURES / "xor.lyr").read_text()
        script = text[text.index("script"):]
        reload_src = text.replace(script, 'script {\n  xor.act = 2\n  xor.load("xor.lyrm")\n}\n')
        again = layers.Engine(layers.compile(reload_src, base_dir=tmp), seed=7, base_dir=tmp)
        again.run()
        assert again.outputs("xor", "X") == outs
        try:
            again.load("xor", "missing.lyrm")
        except layers.RunError:
            pass
        else:
            raise AssertionError("loading a missing model should fail")

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
