//! Graphviz rendering of network topologies: one cluster per network, one
//! node per layer, edges in declaration order. Cross-network edges point
//! from the layer in the earlier network's cluster.

use std::fmt::Write;

use crate::ir::IrProgram;
use crate::sema::LayerKind;

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' | '\\' => {
                out.push('\\');
                out.push(ch);
            }
            '\n' => out.push_str("\\n"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

fn node_shape(kind: &LayerKind) -> &'static str {
    match kind {
        LayerKind::FI { .. } | LayerKind::CI { .. } => "invhouse",
        LayerKind::FO { .. } => "house",
        LayerKind::CA => "trapezium",
        _ => "box",
    }
}

pub fn to_dot(prog: &IrProgram) -> String {
    let mut out = String::from("digraph layers {\n  rankdir=TB;\n  node [fontname=\"Helvetica\"];\n");
    for (n, net) in prog.networks.iter().enumerate() {
        writeln!(out, "  subgraph cluster_{n} {{").unwrap();
        writeln!(out, "    label={};", quote(&net.name)).unwrap();
        for l in &net.layers {
            let kind = match &l.kind {
                LayerKind::Reshape => "F []".to_string(),
                k => k.keyword().to_string(),
            };
            let label = format!("{}\n{kind} {}", l.name, l.shape);
            let id = quote(&format!("{}.{}", net.name, l.name));
            writeln!(out, "    {id} [label={}, shape={}];", quote(&label), node_shape(&l.kind)).unwrap();
        }
        out.push_str("  }\n");
    }
    for net in &prog.networks {
        for (src, dst) in &net.edges {
            let name = |id: crate::sema::LayerId| {
                let owner = &prog.networks[id.net];
                quote(&format!("{}.{}", owner.name, owner.layers[id.layer].name))
            };
            writeln!(out, "  {} -> {};", name(*src), name(*dst)).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::quote;

    #[test]
    fn quoting() {
        assert_eq!(quote(r#"a"b\c"#), r#""a\"b\\c""#);
        assert_eq!(quote("x\ny"), r#""x\ny""#);
    }
}
