#[macro_use]
mod common;

use std::time::Instant;

use common::{compile, engine_for, header, model_for, rng, run_in, stage, streams, uniform};
use layers_core::engine::{read_model, write_model, EngineError, Mode, Targets};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> String {
    std::fs::read_to_string(common::fixtures().join(name)).unwrap()
}

fn field(line: &str, key: &str) -> f64 {
    let mut it = line.split_whitespace();
    while let Some(w) = it.next() {
        if w == key {
            return it.next().unwrap().parse().unwrap();
        }
    }
    panic!("no `{key}` in `{line}`")
}

fn last_epoch_line(log: &str, split: &str) -> String {
    log.lines().filter(|l| l.starts_with("epoch ") && l.contains(&format!(" split {split} "))).last().unwrap().to_string()
}

fn two_gaussians_train_below_five_percent() {
    let dir = stage(&["gauss2.lyr", "gauss2.dat"]);
    let start = Instant::now();
    let r = run_in(&fixture("gauss2.lyr"), dir.path(), 42, None);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let out = r.out.text();
    let err = field(out.lines().next().unwrap(), "err");
    assert!(err < 0.05, "{out}");
    assert_eq!(r.log.text().lines().filter(|l| l.starts_with("epoch ")).count(), 50);
}

fn two_patterns_train_below_ten_percent() {
    let dir = stage(&["patterns8.lyr", "patterns8.dat"]);
    let start = Instant::now();
    let r = run_in(&fixture("patterns8.lyr"), dir.path(), 42, None);
    assert!(start.elapsed().as_secs_f64() < 60.0);
    let err = field(r.out.text().lines().next().unwrap(), "err");
    assert!(err < 0.10, "{}", r.log.text());
}

fn test_on_training_data_matches_last_epoch_line() {
    let dir = stage(&["gauss2.lyr", "gauss2.dat"]);
    let r = run_in(&fixture("gauss2.lyr"), dir.path(), 42, None);
    let log = r.log.text();
    let epoch = last_epoch_line(&log, "tr");
    let test = r.out.text();
    let test = test.lines().next().unwrap();
    assert_eq!(field(&epoch, "err"), field(test, "err"));
    assert_eq!(field(&epoch, "cost"), field(test, "cost"));
}

fn zero_epochs_change_nothing() {
    let dir = stage(&["xor.dat"]);
    let src = "data { X [filename=\"xor.dat\"] } network n { data tr X FI i F h [numnodes=3] FO o [classification] i->h h->o } script { n.train(0) }";
    let mut r = engine_for(src, dir.path(), 42, None);
    let before = r.engine.flat_weights();
    r.engine.run().unwrap();
    assert_eq!(before, r.engine.flat_weights());
    let log = r.log.text();
    assert_eq!(log.lines().filter(|l| l.starts_with("train ")).count(), 1);
    assert_eq!(log.lines().filter(|l| l.starts_with("epoch ")).count(), 0);
    assert!(log.starts_with("# layers seed 42\n"));
}

fn same_seed_gives_identical_artifacts() {
    let a = stage(&["xor.lyr", "xor.dat"]);
    let b = stage(&["xor.lyr", "xor.dat"]);
    let ra = run_in(&fixture("xor.lyr"), a.path(), 42, Some(1));
    let rb = run_in(&fixture("xor.lyr"), b.path(), 42, Some(1));
    assert_eq!(ra.log.text(), rb.log.text());
    for f in ["xor.out", "xor.lyrm"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    let c = stage(&["xor.lyr", "xor.dat"]);
    let rc = run_in(&fixture("xor.lyr"), c.path(), 7, Some(1));
    assert_ne!(ra.engine.flat_weights(), rc.engine.flat_weights());
}

fn xor_is_learned() {
    let dir = stage(&["xor.lyr", "xor.dat"]);
    let r = run_in(&fixture("xor.lyr"), dir.path(), 42, None);
    assert_eq!(field(r.out.text().lines().next().unwrap(), "err"), 0.0);
    let lines = std::fs::read_to_string(dir.path().join("xor.out")).unwrap();
    assert_eq!(lines.lines().count(), 4);
    for l in lines.lines() {
        let v: Vec<f64> = l.split(' ').map(|t| t.parse().unwrap()).collect();
        assert_eq!(v.len(), 2);
        assert!((v[0] + v[1] - 1.0).abs() < 1e-8);
    }
}

fn thread_count_does_not_change_results() {
    let src = fixture("patterns8.lyr").replace("p.train(100)", "p.train(5)");
    let a = stage(&["patterns8.dat"]);
    let b = stage(&["patterns8.dat"]);
    let one = run_in(&src, a.path(), 42, Some(1));
    let four = run_in(&src, b.path(), 42, Some(4));
    let (w1, w4) = (one.engine.flat_weights(), four.engine.flat_weights());
    assert_eq!(w1.len(), w4.len());
    let dev = w1.iter().zip(&w4).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(dev <= 1e-9, "{dev:e}");
    assert_eq!(one.log.text(), four.log.text());
}

fn save_load_testout_round_trip() {
    let dir = stage(&["xor.lyr", "xor.dat"]);
    let r = run_in(&fixture("xor.lyr"), dir.path(), 42, None);
    let trained = r.engine.flat_weights();
    let src = "const { batch = 3 } data { X [filename=\"xor.dat\"] }
               network xor { data tr X data ts X FI in F hid [numnodes=4] FO out [classification] in->hid hid->out }
               script { xor.act = 2 xor.load(\"xor.lyrm\") xor.testout(\"again.out\") xor.save(\"again.lyrm\") }";
    let r2 = run_in(src, dir.path(), 1234, None);
    assert_eq!(trained, r2.engine.flat_weights());
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("xor.out"), read("again.out"));
    assert_eq!(read("xor.lyrm"), read("again.lyrm"));
}

fn load_rejects_other_networks() {
    let dir = stage(&["xor.lyr", "xor.dat"]);
    run_in(&fixture("xor.lyr"), dir.path(), 42, None);
    let src = "data { X [filename=\"xor.dat\"] }
               network xor { data tr X FI in F hid [numnodes=5] FO out [classification] in->hid hid->out }
               script { xor.load(\"xor.lyrm\") }";
    let mut r = engine_for(src, dir.path(), 42, None);
    assert!(matches!(r.engine.run(), Err(EngineError::ModelMismatch { .. })));
}

fn joint_training_equals_sequential_training() {
    let net = |n: &str| format!("network {n} {{ data tr G FI i F h [numnodes=8] FO o [classification] i->h h->o }}");
    let head = format!("const {{ batch = 10 }} data {{ G [filename=\"gauss2.dat\"] }} {} {}", net("a"), net("b"));
    let joint = format!("{head} script {{ a.mu = 0.05 train(3, 20, a, b) }}");
    let seq = format!("{head} script {{ a.mu = 0.05 a.train(3) b.train(3) }}");
    let d1 = stage(&["gauss2.dat"]);
    let d2 = stage(&["gauss2.dat"]);
    let j = run_in(&joint, d1.path(), 42, None);
    let s = run_in(&seq, d2.path(), 42, None);
    assert_eq!(j.engine.flat_weights(), s.engine.flat_weights());
    let fresh = engine_for(&seq, d2.path(), 42, None);
    assert_ne!(fresh.engine.flat_weights(), s.engine.flat_weights());
}

fn shared_layers_need_joint_training() {
    let src = "data { X [filename=\"xor.dat\"] }
               network a { data tr X FI i F h [numnodes=3] FO o [classification] i->h h->o }
               network b { data tr X FO o [classification] a.h->o }
               script { b.train(1) }";
    let dir = stage(&["xor.dat"]);
    let mut r = engine_for(src, dir.path(), 42, None);
    assert!(matches!(r.engine.run(), Err(EngineError::Foreign { .. })));
    let ok = src.replace("b.train(1)", "train(2, 1, a, b)");
    let r = run_in(&ok, dir.path(), 42, None);
    assert_eq!(r.log.text().lines().filter(|l| l.starts_with("epoch ")).count(), 4);
}

fn divergence_names_the_layer() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("big.dat"), "2 1 0 1\n1e150 1\n-1e150 -1\n").unwrap();
    let src = "data { B [filename=\"big.dat\"] }
               network r { data tr B FI i FO o [regression] i->o }
               script { r.mu = 10000000000 r.train(5) }";
    let mut r = engine_for(src, dir.path(), 42, None);
    match r.engine.run() {
        Err(EngineError::NonFinite { layer }) => assert_eq!(layer, "r.o"),
        other => panic!("{other:?}"),
    }
}

fn glorot_row_text(seed: u64, gid: u64, rows: usize, cols: usize, fan_out: usize) -> String {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((1 << 40) + gid);
    let limit = (6.0 / (cols + fan_out) as f64).sqrt();
    let mut s = String::new();
    for _ in 0..rows {
        let row: Vec<String> = (0..cols).map(|_| format!("{:.8e}", r.random_range(-limit..limit))).collect();
        s += &row.join(" ");
        s.push('\n');
    }
    s
}

fn printkernels_matches_golden_for_seed_42() {
    let dir = stage(&["xor.dat"]);
    let src = "data { X [filename=\"xor.dat\"] }
               network xor { data tr X FI in F hid [numnodes=4] FO out [classification] in->hid hid->out }
               script { xor.hid.printkernels(\"k.txt\") }";
    run_in(src, dir.path(), 42, None);
    let got = std::fs::read_to_string(dir.path().join("k.txt")).unwrap();
    assert_eq!(got, glorot_row_text(42, 1, 4, 2, 4));
    let golden = common::fixtures().join("golden/xor_hid_seed42.txt");
    if std::env::var_os("LAYERS_BLESS").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(golden).unwrap());
}

const REG: &str = "data { D [filename=\"d.dat\"] } ";

fn single_step_matches_closed_form() {
    let src = format!("{REG} network n {{ data tr D FI i FO o [regression] i->o }} script {{ n.mu = 0.1 n.mmu = 0.5 }}");
    let prog = compile(&src, &[("d.dat", header(1, 3, 0, 1))]);
    let mut m = model_for(&prog, 5);
    let x = [0.3, -1.2, 0.7];
    let t = [0.25];
    let w0 = m.params[1].as_ref().unwrap().w.data.clone();
    let b0 = m.params[1].as_ref().unwrap().b.data[0];
    let y = w0.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + b0;
    let active = m.active[0].clone();
    let mut rngs = streams(2, 0);
    let pass = m.forward(&active, &x, 1, Mode::Train, &mut rngs);
    let (_, d) = m.loss(&pass, &[1], &Targets::Values(&t));
    let g = m.backward(&pass, &active, &[1], d);
    m.update(&g);
    let p = m.params[1].as_ref().unwrap();
    for k in 0..3 {
        assert!((p.w.data[k] - (w0[k] - 0.1 * 2.0 * (y - t[0]) * x[k])).abs() < 1e-12);
    }
    assert!((p.b.data[0] - (b0 - 0.1 * 2.0 * (y - t[0]))).abs() < 1e-12);
    // second step carries half of the first as momentum
    let v = p.vw.data.clone();
    let w1 = p.w.data.clone();
    let y1 = w1.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>() + p.b.data[0];
    let pass = m.forward(&active, &x, 1, Mode::Train, &mut rngs);
    let (_, d) = m.loss(&pass, &[1], &Targets::Values(&t));
    let g = m.backward(&pass, &active, &[1], d);
    m.update(&g);
    let p = m.params[1].as_ref().unwrap();
    for k in 0..3 {
        let expect = w1[k] + 0.5 * v[k] - 0.1 * 2.0 * (y1 - t[0]) * x[k];
        assert!((p.w.data[k] - expect).abs() < 1e-12);
    }
}

fn decay_terms_follow_the_update_rule() {
    let src = format!("{REG} network n {{ data tr D FI i FO o [regression] i->o }} script {{ n.mu = 0.1 n.mmu = 0 n.l2 = 0.01 n.l1 = 0.001 }}");
    let prog = compile(&src, &[("d.dat", header(1, 2, 0, 1))]);
    let mut m = model_for(&prog, 9);
    let x = [1.5, -0.5];
    let t = [2.0];
    let w0 = m.params[1].as_ref().unwrap().w.data.clone();
    let y = w0.iter().zip(&x).map(|(w, x)| w * x).sum::<f64>();
    let active = m.active[0].clone();
    let pass = m.forward(&active, &x, 1, Mode::Train, &mut streams(2, 0));
    let (_, d) = m.loss(&pass, &[1], &Targets::Values(&t));
    let g = m.backward(&pass, &active, &[1], d);
    m.update(&g);
    let w = &m.params[1].as_ref().unwrap().w.data;
    for k in 0..2 {
        let grad = 2.0 * (y - t[0]) * x[k] + 0.01 * w0[k] + 0.001 * w0[k].signum();
        assert!((w[k] - (w0[k] - 0.1 * grad)).abs() < 1e-12);
    }
}

fn zero_learning_rate_leaves_weights() {
    let src = format!("{REG} network n {{ data tr D FI i F h [numnodes=4] FO o [regression] i->h h->o }} script {{ n.mu = 0 n.bn = 1 }}");
    let prog = compile(&src, &[("d.dat", header(8, 3, 0, 1))]);
    let mut m = model_for(&prog, 2);
    let trainable = |m: &layers_core::engine::Model| -> Vec<f64> {
        m.params.iter().flatten().flat_map(|p| {
            let mut v = p.w.data.clone();
            v.extend(&p.b.data);
            if let Some(bn) = &p.bn {
                v.extend(&bn.gamma.data);
                v.extend(&bn.beta.data);
            }
            v
        }).collect()
    };
    let before = trainable(&m);
    let mut r = rng(3);
    let active = m.active[0].clone();
    let mut rngs = streams(3, 1);
    for _ in 0..5 {
        let x = uniform(&mut r, 8 * 3);
        let t = uniform(&mut r, 8);
        let pass = m.forward(&active, &x, 8, Mode::Train, &mut rngs);
        let (_, d) = m.loss(&pass, &[2], &Targets::Values(&t));
        let g = m.backward(&pass, &active, &[2], d);
        m.update(&g);
    }
    assert_eq!(before, trainable(&m));
}

fn maxnorm_bounds_every_row() {
    let src = format!("{REG} network n {{ data tr D FI i F h [numnodes=6] FO o [regression] i->h h->o }} script {{ n.mu = 0.5 n.maxn = 0.3 }}");
    let prog = compile(&src, &[("d.dat", header(8, 5, 0, 1))]);
    let mut m = model_for(&prog, 4);
    let mut r = rng(11);
    let active = m.active[0].clone();
    let mut rngs = streams(3, 2);
    for _ in 0..10 {
        let x = uniform(&mut r, 8 * 5).into_iter().map(|v| v * 10.0).collect::<Vec<_>>();
        let t = uniform(&mut r, 8).into_iter().map(|v| v * 10.0).collect::<Vec<_>>();
        let pass = m.forward(&active, &x, 8, Mode::Train, &mut rngs);
        let (_, d) = m.loss(&pass, &[2], &Targets::Values(&t));
        let g = m.backward(&pass, &active, &[2], d);
        m.update(&g);
        for p in m.params.iter().flatten() {
            let cols = p.w.len() / p.rows();
            for row in p.w.data.chunks(cols) {
                assert!(row.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.3 + 1e-12);
            }
        }
    }
}

fn dropout_preserves_expected_preactivation() {
    let src = format!("{REG} network n {{ data tr D FI i F h [numnodes=6] FO o [regression] i->h h->o }} script {{ n.drop = 0.5 n.act = 2 }}");
    let prog = compile(&src, &[("d.dat", header(1, 4, 0, 1))]);
    let mut m = model_for(&prog, 6);
    let sample = [0.4, -0.9, 1.3, 0.2];
    let masks = 40_000;
    let x: Vec<f64> = sample.iter().cycle().take(masks * 4).copied().collect();
    let active = m.active[0].clone();
    let mut rngs = streams(3, 8);
    let eval = m.forward(&active, &sample, 1, Mode::Eval, &mut rngs);
    let reference = eval.caches[2].as_ref().unwrap().pre[0];
    let train = m.forward(&active, &x, masks, Mode::Train, &mut rngs);
    let c = train.caches[2].as_ref().unwrap();
    let mean = c.pre.iter().sum::<f64>() / masks as f64;
    assert!((mean - reference).abs() <= 0.02 * reference.abs(), "{mean} vs {reference}");
    let h = train.caches[1].as_ref().unwrap();
    let dropped = h.mask.iter().filter(|&&v| v == 0.0).count() as f64 / h.mask.len() as f64;
    assert!((dropped - 0.5).abs() < 0.01);
}

fn model_container_round_trips_bits() {
    let dir = stage(&["xor.lyr", "xor.dat"]);
    let mut r = run_in(&fixture("xor.lyr"), dir.path(), 42, None);
    let bytes = std::fs::read(dir.path().join("xor.lyrm")).unwrap();
    let saved = read_model(&bytes[..]).unwrap();
    assert_eq!(saved, r.engine.snapshot(0));
    let mut again = Vec::new();
    write_model(&saved, &mut again).unwrap();
    assert_eq!(bytes, again);

    let bits = |w: Vec<f64>| w.into_iter().map(f64::to_bits).collect::<Vec<_>>();
    let trained = bits(r.engine.flat_weights());
    let mut other = engine_for(&fixture("xor.lyr"), dir.path(), 9, None);
    assert_ne!(bits(other.engine.flat_weights()), trained);
    other.engine.restore(0, saved).unwrap();
    assert_eq!(bits(other.engine.flat_weights()), trained);
    r.engine.restore(0, read_model(&bytes[..]).unwrap()).unwrap();
    assert_eq!(bits(r.engine.flat_weights()), trained);
}

#[allow(dead_code)]
pub fn training() {
    two_gaussians_train_below_five_percent();
    two_patterns_train_below_ten_percent();
}

#[allow(dead_code)]
pub fn persistence() {
    save_load_testout_round_trip();
    model_container_round_trips_bits();
}

#[allow(dead_code)]
pub fn determinism() {
    same_seed_gives_identical_artifacts();
    thread_count_does_not_change_results();
}

tests!(
    two_gaussians_train_below_five_percent,
    two_patterns_train_below_ten_percent,
    test_on_training_data_matches_last_epoch_line,
    zero_epochs_change_nothing,
    same_seed_gives_identical_artifacts,
    xor_is_learned,
    thread_count_does_not_change_results,
    save_load_testout_round_trip,
    load_rejects_other_networks,
    joint_training_equals_sequential_training,
    shared_layers_need_joint_training,
    divergence_names_the_layer,
    printkernels_matches_golden_for_seed_42,
    single_step_matches_closed_form,
    decay_terms_follow_the_update_rule,
    zero_learning_rate_leaves_weights,
    maxnorm_bounds_every_row,
    dropout_preserves_expected_preactivation,
    model_container_round_trips_bits,
);
