#[macro_use]
mod common;

use layers_core::lexer::{tokenize, LexErrorKind, Token, TokenKind, TokenValue};
use proptest::prelude::*;

fn render(t: &Token) -> String {
    match (&t.kind, &t.value) {
        (TokenKind::Id, _) => format!("ID({})", t.lexeme),
        (TokenKind::Cte, Some(TokenValue::Number(c))) => format!("CTE({c})"),
        (TokenKind::NFile, Some(TokenValue::Path(p))) => format!("NFILE({p})"),
        (k, _) => format!("{k:?}"),
    }
}

fn stream(src: &str) -> String {
    let toks = tokenize(src).unwrap_or_else(|e| panic!("{src:?}: {e}"));
    toks.iter().map(render).collect::<Vec<_>>().join(" ")
}

const GOLDEN: &[(&str, &str)] = &[
    ("const { batch = 100 }", "Const LBrace Batch Eq CTE(100) RBrace Eof"),
    ("// anything here\n", "Eof"),
    ("\"data/mnist.bin\"", "NFILE(data/mnist.bin) Eof"),
    ("Batch", "ID(Batch) Eof"),
    ("3.14", "CTE(3.14) Eof"),
    ("->", "Arrow Eof"),
    ("", "Eof"),
    ("   \t\r\n  ", "Eof"),
    ("{}[]().,=", "LBrace RBrace LBrack RBrack LParen RParen Dot Comma Eq Eof"),
    ("a->b", "ID(a) Arrow ID(b) Eof"),
    ("in1->c1", "ID(in1) Arrow ID(c1) Eof"),
    ("1.", "CTE(1) Dot Eof"),
    ("1.5.2", "CTE(1.5) Dot CTE(2) Eof"),
    ("007", "CTE(007) Eof"),
    ("0.000", "CTE(0.000) Eof"),
    ("10000000000", "CTE(10000000000) Eof"),
    (".5", "Dot CTE(5) Eof"),
    ("_x", "ID(_x) Eof"),
    ("x_1_", "ID(x_1_) Eof"),
    ("batches", "ID(batches) Eof"),
    ("batch_", "ID(batch_) Eof"),
    ("batch1", "ID(batch1) Eof"),
    ("FOO", "ID(FOO) Eof"),
    ("FO", "FO Eof"),
    ("fo", "ID(fo) Eof"),
    ("Fi", "ID(Fi) Eof"),
    ("FI CI F FO C MP CA", "FI CI F FO C MP CA Eof"),
    ("CONST", "ID(CONST) Eof"),
    ("Test test", "ID(Test) Test Eof"),
    ("printkernels printkernelss", "Printkernels ID(printkernelss) Eof"),
    ("threads log data filename ascii binary", "Threads Log Data Filename Ascii Binary Eof"),
    ("network tr ts va", "Network Tr Ts Va Eof"),
    ("nz nr nc cr cc numnodes local", "Nz Nr Nc Cr Cc Numnodes Local Eof"),
    ("classification regression autoencoder", "Classification Regression Autoencoder Eof"),
    ("nk kr kc rpad cpad stride sizer sizec", "Nk Kr Kc Rpad Cpad Stride Sizer Sizec Eof"),
    ("script mu mmu l2 l1 maxn drop", "Script Mu Mmu L2 L1 Maxn Drop Eof"),
    ("noiser noisesd brightness contrast lambda noiseb", "Noiser Noisesd Brightness Contrast Lambda Noiseb Eof"),
    ("bn act shift flip balance", "Bn Act Shift Flip Balance Eof"),
    ("train load save testout", "Train Load Save Testout Eof"),
    ("zscore yuv center div", "Zscore Yuv Center Div Eof"),
    ("l3", "ID(l3) Eof"),
    ("x // c\ny", "ID(x) ID(y) Eof"),
    ("x//c", "ID(x) Eof"),
    ("// a\n// b\n", "Eof"),
    ("a// b -> c\n->d", "ID(a) Arrow ID(d) Eof"),
    ("\"a\"\"b\"", "NFILE(a\"\"b) Eof"),
    ("\"a\" \"b\"", "NFILE(a) NFILE(b) Eof"),
    ("\"x\"]", "NFILE(x) RBrack Eof"),
    ("\"x\",", "NFILE(x) Comma Eof"),
    ("\"x\"),", "NFILE(x) RParen Comma Eof"),
    ("\"//x\"", "NFILE(//x) Eof"),
    ("\"C:\\d\\f.dat\"", "NFILE(C:\\d\\f.dat) Eof"),
    ("[filename=\"t.dat\", binary]", "LBrack Filename Eq NFILE(t.dat) Comma Binary RBrack Eof"),
    ("N1.c1.mu = 0.01", "ID(N1) Dot ID(c1) Dot Mu Eq CTE(0.01) Eof"),
    ("n.train(10)", "ID(n) Dot Train LParen CTE(10) RParen Eof"),
    ("n.test(D)", "ID(n) Dot Test LParen ID(D) RParen Eof"),
    ("n.save(\"m.lyrm\")", "ID(n) Dot Save LParen NFILE(m.lyrm) RParen Eof"),
    ("C c [nk=32,kr=5,kc=5]", "C ID(c) LBrack Nk Eq CTE(32) Comma Kr Eq CTE(5) Comma Kc Eq CTE(5) RBrack Eof"),
    ("F r []", "F ID(r) LBrack RBrack Eof"),
    ("FO out [classification]", "FO ID(out) LBrack Classification RBrack Eof"),
    ("D.zscore", "ID(D) Dot Zscore Eof"),
    ("x\r\ny", "ID(x) ID(y) Eof"),
];

fn golden_token_streams() {
    assert!(GOLDEN.len() >= 50);
    for (src, want) in GOLDEN {
        assert_eq!(stream(src), *want, "{src:?}");
    }
}

fn error(src: &str) -> (LexErrorKind, u32, u32) {
    let e = tokenize(src).expect_err(src);
    (e.kind, e.span.line, e.span.col)
}

fn lexical_errors() {
    use LexErrorKind::*;
    let cases: &[(&str, (LexErrorKind, u32, u32))] = &[
        ("a - b", (UnexpectedChar('-'), 1, 3)),
        ("a > b", (UnexpectedChar('>'), 1, 3)),
        ("x;", (UnexpectedChar(';'), 1, 2)),
        ("\n  #", (UnexpectedChar('#'), 2, 3)),
        ("é", (UnexpectedChar('é'), 1, 1)),
        ("a /b", (UnexpectedChar('/'), 1, 3)),
        ("a\0b", (UnexpectedChar('\0'), 1, 2)),
        ("-1", (UnexpectedChar('-'), 1, 1)),
        ("\"abc", (UnterminatedFile, 1, 1)),
        ("\"a b\"", (UnterminatedFile, 1, 1)),
        ("x \"a\nb\"", (UnterminatedFile, 1, 3)),
        ("\"\"", (EmptyFile, 1, 1)),
        ("1e10", (MalformedNumber, 1, 1)),
        ("2.5x", (MalformedNumber, 1, 1)),
        ("  12ab", (MalformedNumber, 1, 3)),
    ];
    for (src, want) in cases {
        assert_eq!(error(src), *want, "{src:?}");
    }
}

fn error_codes() {
    assert_eq!(tokenize("#").unwrap_err().code(), "L001");
    assert_eq!(tokenize("\"a").unwrap_err().code(), "L002");
    assert_eq!(tokenize("\"\"").unwrap_err().code(), "L003");
    assert_eq!(tokenize("1x").unwrap_err().code(), "L004");
}

fn spans_locate_lexemes() {
    let src = "network n {\n  FI in\n}";
    let toks = tokenize(src).unwrap();
    let at: Vec<_> = toks.iter().map(|t| (t.lexeme.as_str(), t.span.line, t.span.col)).collect();
    assert_eq!(
        at,
        [("network", 1, 1), ("n", 1, 9), ("{", 1, 11), ("FI", 2, 3), ("in", 2, 6), ("}", 3, 1), ("", 3, 2)]
    );
    for t in &toks[..toks.len() - 1] {
        assert_eq!(&src[t.span.offset..t.span.offset + t.span.len], t.lexeme);
    }
}

fn uppercased_keywords_are_identifiers() {
    for k in TokenKind::KEYWORDS {
        let text = k.as_str();
        if text.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()) {
            let up = text.to_ascii_uppercase();
            let toks = tokenize(&up).unwrap();
            assert_eq!(toks[0].kind, TokenKind::Id, "{up}");
        } else {
            assert_eq!(tokenize(text).unwrap()[0].kind, *k);
            assert_eq!(tokenize(&text.to_ascii_lowercase()).unwrap()[0].kind, TokenKind::Id);
        }
    }
}

fn lexeme() -> impl Strategy<Value = String> {
    let keyword = proptest::sample::select(TokenKind::KEYWORDS.to_vec()).prop_map(|k| k.as_str().to_string());
    let punct = proptest::sample::select(vec!["{", "}", "[", "]", "(", ")", ".", ",", "=", "->"]).prop_map(String::from);
    prop_oneof![
        keyword,
        punct,
        "[_a-zA-Z][_a-zA-Z0-9]{0,8}",
        "[0-9]{1,6}(\\.[0-9]{1,4})?",
        "\"[a-zA-Z0-9_./\\-]{1,12}\"",
    ]
}

fn blank() -> impl Strategy<Value = String> {
    prop_oneof![
        "[ \t\r\n]{1,3}",
        "[ \t]{0,2}//[a-z ]{0,10}\n[ \t]{0,2}",
    ]
}

fn kinds(src: &str) -> Vec<(TokenKind, Option<TokenValue>)> {
    tokenize(src).unwrap().into_iter().map(|t| (t.kind, t.value)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    fn relexing_with_other_whitespace_is_identity(
        parts in proptest::collection::vec((lexeme(), blank(), blank()), 0..40),
    ) {
        let a: String = parts.iter().map(|(l, s, _)| format!("{l}{s}")).collect();
        let b: String = parts.iter().map(|(l, _, s)| format!("{s}{l}")).collect();
        let first = tokenize(&a).unwrap();
        prop_assert_eq!(first.len(), parts.len() + 1);
        for (t, (l, _, _)) in first.iter().zip(&parts) {
            prop_assert_eq!(&t.lexeme, l);
        }
        // concatenated lexemes re-lex to the same kinds and values
        let again: String = first.iter().map(|t| format!("{} ", t.lexeme)).collect();
        prop_assert_eq!(kinds(&again), kinds(&a));
        prop_assert_eq!(kinds(&b), kinds(&a));
    }

    fn spans_are_increasing_and_disjoint(
        parts in proptest::collection::vec((lexeme(), blank()), 1..40),
    ) {
        let src: String = parts.iter().map(|(l, s)| format!("{l}{s}")).collect();
        let toks = tokenize(&src).unwrap();
        for w in toks.windows(2) {
            prop_assert!(w[0].span.offset + w[0].span.len <= w[1].span.offset);
        }
        for t in &toks[..toks.len() - 1] {
            prop_assert!(t.span.len > 0);
            prop_assert!(t.span.offset + t.span.len <= src.len());
        }
    }
}

#[allow(dead_code)]
pub fn criterion() {
    golden_token_streams();
    lexical_errors();
    error_codes();
    spans_locate_lexemes();
    uppercased_keywords_are_identifiers();
    relexing_with_other_whitespace_is_identity();
    spans_are_increasing_and_disjoint();
}

tests!(
    golden_token_streams,
    lexical_errors,
    error_codes,
    spans_locate_lexemes,
    uppercased_keywords_are_identifiers,
    relexing_with_other_whitespace_is_identity,
    spans_are_increasing_and_disjoint,
);
