#[macro_use]
mod common;

use std::collections::BTreeSet;
use std::fs;

use layers_core::ast::{Definition, Statement};
use layers_core::parser::{dump_ast, parse_source, SyntaxError};
use proptest::prelude::*;

fn grammar_fixtures() -> Vec<(String, String)> {
    let dir = common::fixtures().join("grammar");
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "lyr"))
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn accepted_and_rejected_fixtures() {
    let all = grammar_fixtures();
    assert!(all.len() >= 80, "{} fixtures", all.len());
    let mut ok = BTreeSet::new();
    let mut bad = BTreeSet::new();
    let mut wrong = Vec::new();
    for (name, src) in &all {
        if let Some(rule) = name.strip_prefix("ok_") {
            ok.insert(rule.to_string());
            if let Err(e) = parse_source(src) {
                wrong.push(format!("{name}: rejected at {}: {e}", e.span()));
            }
        } else if let Some(rule) = name.strip_prefix("bad_") {
            bad.insert(rule.to_string());
            if parse_source(src).is_ok() {
                wrong.push(format!("{name}: accepted"));
            }
        } else {
            panic!("unexpected fixture {name}");
        }
    }
    assert_eq!(ok, bad, "every production needs both an accepted and a rejected fixture");
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

fn rejected_fixtures_fail_in_the_parser() {
    // the mutations are grammatical, not lexical, except where a symbol is broken
    let lexical = ["bad_edge"];
    for (name, src) in grammar_fixtures() {
        if let Some(Err(e)) = name.starts_with("bad_").then(|| parse_source(&src)) {
            let parse = matches!(e, SyntaxError::Parse(_));
            assert_eq!(parse, !lexical.contains(&name.as_str()), "{name}: {e}");
        }
    }
}

fn accepted_fixtures_survive_pretty_printing() {
    for (name, src) in grammar_fixtures() {
        if !name.starts_with("ok_") {
            continue;
        }
        let once = dump_ast(&parse_source(&src).unwrap());
        let twice = dump_ast(&parse_source(&once).unwrap_or_else(|e| panic!("{name}: {e}\n{once}")));
        assert_eq!(once, twice, "{name}");
    }
}

fn original_n1_listing_shape() {
    let src = fs::read_to_string(common::fixtures().join("figure2.lyr")).unwrap();
    let exp = parse_source(&src).unwrap();
    let nets: Vec<_> = exp
        .definitions
        .iter()
        .filter_map(|d| match d {
            Definition::Network(n) => Some(n),
            _ => None,
        })
        .collect();
    let data = exp.definitions.iter().filter(|d| matches!(d, Definition::Data(_))).count();
    let scripts = exp.definitions.iter().filter(|d| matches!(d, Definition::Script(_))).count();
    assert_eq!((data, nets.len(), scripts), (1, 1, 0));
    let net = nets[0];
    assert_eq!(net.name.name, "N1");
    let layers = net.statements.iter().filter(|s| matches!(s, Statement::Layer(_))).count();
    let edges = net.statements.iter().filter(|s| matches!(s, Statement::Edge(_))).count();
    assert_eq!((layers, edges), (17, 18));
}

// Sentences derived at random from the productions.

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9]{0,3}_".prop_map(|s| s)
}

fn cte() -> impl Strategy<Value = String> {
    "[0-9]{1,3}(\\.[0-9]{1,2})?"
}

fn nfile() -> impl Strategy<Value = String> {
    "\"[a-z0-9_./]{1,8}\""
}

fn comma_list(items: Vec<String>) -> String {
    items.join(", ")
}

fn setting(keys: &'static [&'static str]) -> impl Strategy<Value = String> {
    proptest::collection::vec((proptest::sample::select(keys), cte()), 1..4)
        .prop_map(|v| comma_list(v.into_iter().map(|(k, c)| format!("{k}={c}")).collect()))
}

fn layer() -> impl Strategy<Value = String> {
    prop_oneof![
        ident().prop_map(|i| format!("FI {i}")),
        (ident(), setting(&["nz", "nr", "nc", "cr", "cc"])).prop_map(|(i, s)| format!("CI {i} [{s}]")),
        (ident(), prop_oneof![cte().prop_map(|c| format!("numnodes={c}")), Just("local".to_string()), Just(String::new())])
            .prop_map(|(i, p)| format!("F {i} [{p}]")),
        (ident(), proptest::collection::vec(proptest::sample::select(&["classification", "regression", "autoencoder"][..]), 1..3))
            .prop_map(|(i, f)| format!("FO {i} [{}]", f.join(" "))),
        (ident(), setting(&["nk", "kr", "kc", "rpad", "cpad", "stride"])).prop_map(|(i, s)| format!("C {i} [{s}]")),
        (ident(), setting(&["sizer", "sizec"])).prop_map(|(i, s)| format!("MP {i} [{s}]")),
        ident().prop_map(|i| format!("CA {i}")),
    ]
}

fn namelayer() -> impl Strategy<Value = String> {
    prop_oneof![ident(), (ident(), ident()).prop_map(|(a, b)| format!("{a}.{b}"))]
}

fn statement() -> impl Strategy<Value = String> {
    prop_oneof![layer(), (namelayer(), namelayer()).prop_map(|(a, b)| format!("{a}->{b}"))]
}

fn network() -> impl Strategy<Value = String> {
    let fnetdata = (proptest::sample::select(&["va", "ts"][..]), ident()).prop_map(|(r, i)| format!("data {r} {i}"));
    (ident(), ident(), proptest::collection::vec(fnetdata, 0..3), proptest::collection::vec(statement(), 1..8))
        .prop_map(|(n, tr, extra, st)| format!("network {n} {{\n data tr {tr} {}\n {}\n}}", extra.join(" "), st.join("\n ")))
}

fn data() -> impl Strategy<Value = String> {
    let par = prop_oneof![
        nfile().prop_map(|f| format!("filename={f}")),
        Just("ascii".to_string()),
        Just("binary".to_string()),
    ];
    let datum = (ident(), proptest::collection::vec(par, 1..3)).prop_map(|(i, p)| format!("{i} [{}]", comma_list(p)));
    proptest::collection::vec(datum, 1..3).prop_map(|d| format!("data {{ {} }}", d.join(" ")))
}

const PARAMS: &[&str] = &[
    "mu", "mmu", "l2", "l1", "maxn", "drop", "noiser", "noisesd", "brightness", "contrast", "lambda", "noiseb", "bn",
    "act", "shift", "flip", "balance",
];

fn action() -> impl Strategy<Value = String> {
    let odata = prop_oneof![Just(String::new()), ident()];
    prop_oneof![
        (ident(), proptest::sample::select(PARAMS), cte()).prop_map(|(a, p, c)| format!("{a}.{p} = {c}")),
        (ident(), ident(), proptest::sample::select(PARAMS), cte()).prop_map(|(a, b, p, c)| format!("{a}.{b}.{p} = {c}")),
        (ident(), ident(), nfile()).prop_map(|(a, b, f)| format!("{a}.{b}.printkernels({f})")),
        (cte(), cte(), proptest::collection::vec(ident(), 0..3))
            .prop_map(|(e, b, n)| format!("train({e}, {b}{})", n.iter().map(|x| format!(", {x}")).collect::<String>())),
        (ident(), cte()).prop_map(|(a, c)| format!("{a}.train({c})")),
        (ident(), odata.clone()).prop_map(|(a, d)| format!("{a}.test({d})")),
        (ident(), proptest::sample::select(&["load", "save", "testout"][..]), nfile()).prop_map(|(a, c, f)| format!("{a}.{c}({f})")),
        (ident(), proptest::sample::select(&["zscore", "center"][..]), odata).prop_map(|(a, c, d)| format!("{a}.{c}({d})")),
        ident().prop_map(|a| format!("{a}.yuv()")),
        (ident(), cte()).prop_map(|(a, c)| format!("{a}.div({c})")),
    ]
}

fn script() -> impl Strategy<Value = String> {
    proptest::collection::vec(action(), 1..6).prop_map(|a| format!("script {{\n {}\n}}", a.join("\n ")))
}

fn program() -> impl Strategy<Value = String> {
    let konst = prop_oneof![
        cte().prop_map(|c| format!("batch = {c}")),
        cte().prop_map(|c| format!("threads = {c}")),
        nfile().prop_map(|f| format!("log = {f}")),
    ];
    let constants = proptest::option::of(proptest::collection::vec(konst, 1..4).prop_map(|c| format!("const {{ {} }}\n", c.join(" "))));
    let def = prop_oneof![data(), network(), script()];
    (constants, proptest::collection::vec(def, 1..5)).prop_map(|(c, d)| format!("{}{}", c.unwrap_or_default(), d.join("\n")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    fn derived_sentences_are_accepted(src in program()) {
        let exp = parse_source(&src);
        prop_assert!(exp.is_ok(), "{}\n{:?}", src, exp.err());
        let once = dump_ast(&exp.unwrap());
        let twice = dump_ast(&parse_source(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    fn dropping_a_bracket_is_rejected(src in program(), pick in any::<proptest::sample::Index>()) {
        // deleting one closing symbol unbalances the sentence
        let closers: Vec<usize> = src.match_indices(['}', ']', ')']).map(|(i, _)| i).collect();
        let at = closers[pick.index(closers.len())];
        let mutated = format!("{}{}", &src[..at], &src[at + 1..]);
        prop_assert!(parse_source(&mutated).is_err(), "{}", mutated);
    }
}

#[allow(dead_code)]
pub fn criterion() {
    accepted_and_rejected_fixtures();
    rejected_fixtures_fail_in_the_parser();
    accepted_fixtures_survive_pretty_printing();
    original_n1_listing_shape();
    derived_sentences_are_accepted();
    dropping_a_bracket_is_rejected();
}

tests!(
    accepted_and_rejected_fixtures,
    rejected_fixtures_fail_in_the_parser,
    accepted_fixtures_survive_pretty_printing,
    original_n1_listing_shape,
    derived_sentences_are_accepted,
    dropping_a_bracket_is_rejected,
);
