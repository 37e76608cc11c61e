//! Canonical source rendering of a syntax tree. The output is valid Layers
//! and re-parses to the same tree (modulo spans); see `docs/ast-dump.md`.

use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "  ";

pub fn dump_ast(exp: &Experiment) -> String {
    let mut blocks = Vec::new();
    if let Some(c) = &exp.constants {
        blocks.push(dump_consts(c));
    }
    for def in &exp.definitions {
        blocks.push(match def {
            Definition::Data(d) => dump_data(d),
            Definition::Network(n) => dump_network(n),
            Definition::Script(s) => dump_script(s),
        });
    }
    blocks.join("\n")
}

fn quoted(path: &str) -> String {
    format!("\"{path}\"")
}

fn dump_consts(block: &ConstBlock) -> String {
    let mut out = String::from("const {\n");
    for e in &block.entries {
        let line = match &e.kind {
            ConstKind::Batch(v) => format!("batch = {v}"),
            ConstKind::Threads(v) => format!("threads = {v}"),
            ConstKind::Log(p) => format!("log = {}", quoted(p)),
        };
        writeln!(out, "{INDENT}{line}").unwrap();
    }
    out.push_str("}\n");
    out
}

fn dump_data(block: &DataBlock) -> String {
    let mut out = String::from("data {\n");
    for d in &block.entries {
        let params: Vec<String> = d
            .params
            .iter()
            .map(|p| match &p.kind {
                DatumParamKind::Filename(f) => format!("filename = {}", quoted(f)),
                DatumParamKind::FileType(t) => t.as_str().to_string(),
            })
            .collect();
        writeln!(out, "{INDENT}{} [{}]", d.name.name, params.join(", ")).unwrap();
    }
    out.push_str("}\n");
    out
}

fn settings<K>(items: &[Setting<K>], key: impl Fn(&K) -> &'static str) -> String {
    let parts: Vec<String> = items.iter().map(|s| format!("{} = {}", key(&s.key), s.value)).collect();
    format!("[{}]", parts.join(", "))
}

fn layer_line(l: &LayerDecl) -> String {
    let name = &l.name.name;
    match &l.kind {
        LayerKindDecl::FI => format!("FI {name}"),
        LayerKindDecl::CA => format!("CA {name}"),
        LayerKindDecl::CI(p) => format!(
            "CI {name} {}",
            settings(p, |k| match k {
                CiKey::Nz => "nz",
                CiKey::Nr => "nr",
                CiKey::Nc => "nc",
                CiKey::Cr => "cr",
                CiKey::Cc => "cc",
            })
        ),
        LayerKindDecl::C(p) => format!(
            "C {name} {}",
            settings(p, |k| match k {
                ConvKey::Nk => "nk",
                ConvKey::Kr => "kr",
                ConvKey::Kc => "kc",
                ConvKey::Rpad => "rpad",
                ConvKey::Cpad => "cpad",
                ConvKey::Stride => "stride",
            })
        ),
        LayerKindDecl::MP(p) => format!(
            "MP {name} {}",
            settings(p, |k| match k {
                PoolKey::Sizer => "sizer",
                PoolKey::Sizec => "sizec",
            })
        ),
        LayerKindDecl::F(params) => {
            let parts: Vec<String> = params
                .iter()
                .map(|(p, _)| match p {
                    FParam::Numnodes(n) => format!("numnodes = {n}"),
                    FParam::Local => "local".to_string(),
                })
                .collect();
            format!("F {name} [{}]", parts.join(", "))
        }
        LayerKindDecl::FO(flags) => {
            let parts: Vec<&str> = flags
                .iter()
                .map(|(f, _)| match f {
                    FoFlag::Classification => "classification",
                    FoFlag::Regression => "regression",
                    FoFlag::Autoencoder => "autoencoder",
                })
                .collect();
            format!("FO {name} [{}]", parts.join(" "))
        }
    }
}

fn name_layer(n: &NameLayer) -> String {
    match &n.net {
        Some(net) => format!("{}.{}", net.name, n.layer.name),
        None => n.layer.name.clone(),
    }
}

fn dump_network(net: &NetworkDef) -> String {
    let mut out = format!("network {} {{\n", net.name.name);
    writeln!(out, "{INDENT}data tr {}", net.netdata.tr.name).unwrap();
    for e in &net.netdata.extra {
        let role = match e.role {
            DataRole::Va => "va",
            DataRole::Ts => "ts",
        };
        writeln!(out, "{INDENT}data {role} {}", e.id.name).unwrap();
    }
    for s in &net.statements {
        let line = match s {
            Statement::Layer(l) => layer_line(l),
            Statement::Edge(e) => format!("{} -> {}", name_layer(&e.src), name_layer(&e.dst)),
        };
        writeln!(out, "{INDENT}{line}").unwrap();
    }
    out.push_str("}\n");
    out
}

fn opt(id: &Option<Ident>) -> &str {
    id.as_ref().map(|i| i.name.as_str()).unwrap_or("")
}

fn dump_script(script: &ScriptBlock) -> String {
    let mut out = String::from("script {\n");
    for a in &script.actions {
        let line = match a {
            Action::Amend(am) => {
                let target = match &am.layer {
                    Some(l) => format!("{}.{}", am.target.name, l.name),
                    None => am.target.name.clone(),
                };
                format!("{target}.{} = {}", am.param.as_str(), am.value)
            }
            Action::Command(c) => match &c.kind {
                CommandKind::PrintKernels { net, layer, file } => {
                    format!("{}.{}.printkernels({})", net.name, layer.name, quoted(file))
                }
                CommandKind::JointTrain { epochs, batches, nets } => {
                    let mut s = format!("train({epochs}, {batches}");
                    for n in nets {
                        write!(s, ", {}", n.name).unwrap();
                    }
                    s.push(')');
                    s
                }
                CommandKind::Train { net, epochs } => format!("{}.train({epochs})", net.name),
                CommandKind::Test { net, data } => format!("{}.test({})", net.name, opt(data)),
                CommandKind::Load { net, file } => format!("{}.load({})", net.name, quoted(file)),
                CommandKind::Save { net, file } => format!("{}.save({})", net.name, quoted(file)),
                CommandKind::TestOut { net, file } => format!("{}.testout({})", net.name, quoted(file)),
                CommandKind::Zscore { data, reference } => format!("{}.zscore({})", data.name, opt(reference)),
                CommandKind::Center { data, reference } => format!("{}.center({})", data.name, opt(reference)),
                CommandKind::Yuv { data } => format!("{}.yuv()", data.name),
                CommandKind::Div { data, value } => format!("{}.div({value})", data.name),
            },
        };
        writeln!(out, "{INDENT}{line}").unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_source;

    #[test]
    fn omits_missing_constants() {
        let exp = parse_source("data { D [ascii] }").unwrap();
        let text = dump_ast(&exp);
        assert!(!text.contains("const"));
        assert_eq!(text, "data {\n  D [ascii]\n}\n");
    }

    #[test]
    fn reparse_is_identity() {
        let src = "const{batch=10 log=\"l.txt\"} data{D[filename=\"d\",binary]} \
                   network N{data tr D data ts D CI i[nz=1,nr=4,nc=4] C c[nk=2,kr=3,kc=3] F r[] FO o[regression autoencoder] i->c c->r N.r->o} \
                   script{N.c.bn=1 train(1,2,N) N.test() D.div(2.5)}";
        let exp = parse_source(src).unwrap();
        let again = parse_source(&dump_ast(&exp)).unwrap();
        assert_eq!(exp.without_spans(), again.without_spans());
    }
}
