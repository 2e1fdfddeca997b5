//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Exits 0 after printing every line. With `ACCEPTANCE_STRICT=1` any FAIL exits 1.
//! `ACCEPTANCE_SKIP_DESK=1` skips the desk-scale training criteria (5-8).

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use textcnn_lab::corpus::{fraction_count, Vocabulary};
use textcnn_lab::embedding::EmbeddingMatrix;
use textcnn_lab::experiments::{
    run_baseline_suite, run_cluster_sweep, run_prune_sweep, run_shuffle_suite, BaseArtifacts, ExperimentPlan, Study,
    StudyReport, TIMING_COLUMNS,
};
use textcnn_lab::interpret::{shuffle_across_filters, shuffle_within_filters, word_importance_bruteforce, word_importance_fast, ShuffleMode};
use textcnn_lab::model::{build_model, build_model_with_shape, count_params, ModelGrads, ModelShape, SentimentCNN};
use textcnn_lab::nnkernel::{
    bce_loss, conv1d_backward, conv1d_forward, dense_backward, dense_forward, grad_check, maxpool1d, maxpool1d_backward,
    relu, relu_backward, sigmoid_scalar, Conv1DParams, DenseParams, Evaluation, GradCheckConfig, Tensor,
};
use textcnn_lab::synth::{write_synthetic_corpus, SynthConfig};

/// Reference vocabulary size of the full corpus.
const V_REF: usize = 23_363;
const GRAD_TOL: f64 = 1e-5;
const IMPORTANCE_TOL: f64 = 1e-9;
const RANDOM_FLOOR: f64 = 55.0;
const SHUFFLE_GAP: f64 = 5.0;
const PRUNE_BAND: f64 = 4.0;
const BASELINE_GAP: f64 = 8.0;
const TIME_RATIO: f64 = 0.6;
const FILTER_SHARE: f64 = 0.9;
/// Relative slack for an SSE "increase" caused by floating-point summation order.
const SSE_SLACK: f64 = 1e-12;
const DESK_SEEDS: [u64; 3] = [0, 1, 2];
const DESK_EPOCHS: usize = 3;
const DESK_BATCH: usize = 8;

struct Line {
    pass: bool,
    detail: String,
}

fn line(pass: bool, detail: impl Into<String>) -> Line {
    Line { pass, detail: detail.into() }
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::from_entries((0..n).map(|i| (format!("w{i:05}"), (n - i) as u64)).collect()).unwrap()
}

// 1 -------------------------------------------------------------------------

fn layer_total(v: usize) -> u64 {
    // Embedding, conv1, conv2, dense, output; each with biases.
    let (v, d) = (v as u64, 100u64);
    (v + 1) * d + (32 * 5 * d + 32) + (16 * 5 * 32 + 16) + (944 * 128 + 128) + (128 + 1)
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let frozen = {
        let voc = vocab(V_REF);
        let m = build_model(V_REF, &EmbeddingMatrix::zeros(&voc, 100), false, 0).unwrap();
        count_params(&m).count
    };
    let pruned_v = fraction_count(0.05, V_REF);
    let trainable = |v: usize| {
        let voc = vocab(v);
        count_params(&build_model(v, &EmbeddingMatrix::zeros(&voc, 100), true, 0).unwrap()).count.total
    };
    let (top, rest) = (trainable(pruned_v), trainable(V_REF - pruned_v));
    let ok = frozen.total == 2_476_097
        && frozen.trainable == 139_697
        && frozen.frozen == 2_336_400
        && top == 256_697
        && rest == 2_359_197
        && frozen.total == layer_total(V_REF)
        && top == layer_total(pruned_v)
        && rest == layer_total(V_REF - pruned_v);
    line(
        ok,
        format!(
            "total {} trainable {} frozen {}; top-5% {top}; complement {rest} ({:.2}s)",
            frozen.total,
            frozen.trainable,
            frozen.frozen,
            t.elapsed().as_secs_f64()
        ),
    )
}

// 2 -------------------------------------------------------------------------

fn criterion_2() -> Line {
    let voc = vocab(50);
    let m = build_model(50, &EmbeddingMatrix::random_uniform(&voc, 100, 0.1, 1), false, 1).unwrap();
    let ids: Vec<u32> = (0..250).map(|i| (i % 50 + 1) as u32).collect();
    let trace = m.trace(&ids).unwrap();
    let got: BTreeMap<String, Vec<usize>> = trace.layers.into_iter().collect();
    let want: [(&str, Vec<usize>); 6] = [
        ("embedding", vec![250, 100]),
        ("conv1", vec![246, 32]),
        ("pool1", vec![123, 32]),
        ("conv2", vec![119, 16]),
        ("pool2", vec![59, 16]),
        ("flatten", vec![944]),
    ];
    let ok = want.iter().all(|(k, v)| got.get(*k) == Some(v));
    let shown: Vec<String> = want.iter().map(|(k, _)| format!("{k}{:?}", got.get(*k).cloned().unwrap_or_default())).collect();
    line(ok, shown.join(" "))
}

// 3 -------------------------------------------------------------------------

fn fnv(acc: &mut u64, v: u64) {
    *acc ^= v;
    *acc = acc.wrapping_mul(0x100_0000_01b3);
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn check_layer(name: &str, params: Vec<f64>, eval: impl FnMut(&[f64], bool) -> Evaluation) -> (String, f64, usize) {
    let r = grad_check(&params, eval, &GradCheckConfig::default());
    (name.to_string(), r.max_rel_error, r.checked)
}

fn layer_checks() -> Vec<(String, f64, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (len, ch, nf, w) = (9, 4, 3, 3);
    let out_len = len - w + 1;
    let r_conv = random_vec(&mut rng, out_len * nf);
    let conv_params = random_vec(&mut rng, len * ch + nf * w * ch + nf);
    let conv = check_layer("conv1d", conv_params, |p, _| {
        let x = Tensor::new(vec![len, ch], p[..len * ch].to_vec()).unwrap();
        let wt = Tensor::new(vec![nf, w, ch], p[len * ch..len * ch + nf * w * ch].to_vec()).unwrap();
        let b = Tensor::new(vec![nf], p[len * ch + nf * w * ch..].to_vec()).unwrap();
        let cp = Conv1DParams::new(wt, b, 1).unwrap();
        let y = conv1d_forward(&x, &cp).unwrap();
        let loss = y.data().iter().zip(&r_conv).map(|(a, b)| a * b).sum();
        let g = conv1d_backward(&x, &cp, &Tensor::new(vec![out_len, nf], r_conv.clone()).unwrap()).unwrap();
        let grad = [g.grad_x.data(), g.grad_weights.data(), g.grad_bias.data()].concat();
        Evaluation { loss, grad, pattern: 0 }
    });

    let (batch, inp, outp) = (3, 5, 4);
    let r_dense = random_vec(&mut rng, batch * outp);
    let dense_params = random_vec(&mut rng, batch * inp + inp * outp + outp);
    let dense = check_layer("dense", dense_params, |p, _| {
        let x = Tensor::new(vec![batch, inp], p[..batch * inp].to_vec()).unwrap();
        let wt = Tensor::new(vec![inp, outp], p[batch * inp..batch * inp + inp * outp].to_vec()).unwrap();
        let b = Tensor::new(vec![outp], p[batch * inp + inp * outp..].to_vec()).unwrap();
        let dp = DenseParams::new(wt, b).unwrap();
        let y = dense_forward(&x, &dp).unwrap();
        let loss = y.data().iter().zip(&r_dense).map(|(a, b)| a * b).sum();
        let g = dense_backward(&x, &dp, &Tensor::new(vec![batch, outp], r_dense.clone()).unwrap()).unwrap();
        Evaluation { loss, grad: [g.grad_x.data(), g.grad_weights.data(), g.grad_bias.data()].concat(), pattern: 0 }
    });

    let r_relu = random_vec(&mut rng, 12);
    let relu_check = check_layer("relu", random_vec(&mut rng, 12), |p, _| {
        let x = Tensor::new(vec![4, 3], p.to_vec()).unwrap();
        let y = relu(&x);
        let loss = y.data().iter().zip(&r_relu).map(|(a, b)| a * b).sum();
        let g = relu_backward(&x, &Tensor::new(vec![4, 3], r_relu.clone()).unwrap()).unwrap();
        let mut pattern = 0xcbf2_9ce4_8422_2325;
        p.iter().for_each(|v| fnv(&mut pattern, u64::from(*v > 0.0)));
        Evaluation { loss, grad: g.data().to_vec(), pattern }
    });

    let r_pool = random_vec(&mut rng, 4 * 3);
    let pool = check_layer("maxpool", random_vec(&mut rng, 9 * 3), |p, _| {
        let x = Tensor::new(vec![9, 3], p.to_vec()).unwrap();
        let (y, arg) = maxpool1d(&x, 2, 2).unwrap();
        let loss = y.data().iter().zip(&r_pool).map(|(a, b)| a * b).sum();
        let g = maxpool1d_backward(&Tensor::new(vec![4, 3], r_pool.clone()).unwrap(), &arg, [9, 3]).unwrap();
        let mut pattern = 0xcbf2_9ce4_8422_2325;
        arg.iter().for_each(|&i| fnv(&mut pattern, i as u64));
        Evaluation { loss, grad: g.data().to_vec(), pattern }
    });

    let labels = [1.0, 0.0, 1.0, 0.0];
    let head = check_layer("sigmoid+bce", random_vec(&mut rng, 4).iter().map(|v| v * 3.0).collect(), |p, _| {
        let probs: Vec<f64> = p.iter().map(|&z| sigmoid_scalar(z)).collect();
        let (loss, dprob) = bce_loss(&probs, &labels).unwrap();
        let grad = dprob.iter().zip(&probs).map(|(g, q)| g * q * (1.0 - q)).collect();
        Evaluation { loss, grad, pattern: 0 }
    });
    vec![conv, dense, relu_check, pool, head]
}

fn model_check() -> (String, f64, usize) {
    let v = 20;
    let voc = vocab(v);
    let emb = EmbeddingMatrix::random_uniform(&voc, ModelShape::tiny().emb_dim, 0.5, 4);
    let model: SentimentCNN<f64> = build_model_with_shape(ModelShape::tiny(), v, &emb, true, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let docs: Vec<Vec<u32>> = (0..4)
        .map(|_| {
            let n = rng.gen_range(3..=12);
            (0..12).map(|i| if i < n { rng.gen_range(1..=v as u32) } else { 0 }).collect()
        })
        .collect();
    let batch: Vec<&[u32]> = docs.iter().map(Vec::as_slice).collect();
    let labels = [1.0, 0.0, 0.0, 1.0];
    let full = model.to_flat();
    // Row 0 (padding) is excluded: its update is masked.
    let pad = ModelShape::tiny().emb_dim;
    check_layer("tiny model", full[pad..].to_vec(), |p, _| {
        let mut m = model.clone();
        m.set_flat(&[&full[..pad], p].concat()).unwrap();
        let mut g = ModelGrads::zeros_like(&m);
        let out = m.loss_and_grads(&batch, &labels, &mut g).unwrap();
        Evaluation { loss: out.loss, grad: g.to_flat()[pad..].to_vec(), pattern: out.pattern }
    })
}

fn criterion_3() -> Line {
    let mut checks = layer_checks();
    checks.push(model_check());
    let worst = checks.iter().map(|c| c.1).fold(0.0, f64::max);
    let ok = worst < GRAD_TOL && checks.iter().all(|c| c.2 > 0);
    let shown: Vec<String> = checks.iter().map(|(n, e, k)| format!("{n} {e:.1e} ({k} coords)")).collect();
    line(ok, format!("max rel error {worst:.2e} < {GRAD_TOL:e}: {}", shown.join(", ")))
}

// 4 -------------------------------------------------------------------------

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel(*x, *y)).fold(0.0, f64::max)
}

fn random_instance(seed: u64) -> (EmbeddingMatrix, Conv1DParams<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (v, d, f, s) = (rng.gen_range(2..40), rng.gen_range(1..12), rng.gen_range(1..6), rng.gen_range(1..6));
    let emb = EmbeddingMatrix::random_uniform(&vocab(v), d, 1.0, seed);
    let w: Vec<f32> = (0..f * s * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let filt = Conv1DParams::new(Tensor::new(vec![f, s, d], w).unwrap(), Tensor::zeros(vec![f]), 1).unwrap();
    (emb, filt)
}

fn importance_properties(emb: &EmbeddingMatrix, filt: &Conv1DParams<f32>, seed: u64) -> (f64, f64, bool) {
    let fast = word_importance_fast(emb, filt).unwrap();
    let brute = word_importance_bruteforce(emb, filt).unwrap();
    let equiv = max_rel(&fast.scores, &brute.scores);
    let mut shuffle = 0.0f64;
    for shuffled in [shuffle_within_filters(filt, seed, ShuffleMode::Slice), shuffle_across_filters(filt, seed, ShuffleMode::Slice)] {
        shuffle = shuffle.max(max_rel(&fast.scores, &word_importance_fast(emb, &shuffled).unwrap().scores));
    }
    // Powers of two scale f32 vectors exactly.
    let mut homogeneous = fast.scores.iter().all(|s| *s >= 0.0);
    for alpha in [0.0f32, 0.25, 0.5, 2.0, 8.0] {
        let scaled = EmbeddingMatrix::new(
            emb.vocab_size(),
            emb.dim(),
            emb.data().iter().map(|x| x * alpha).collect(),
            emb.vocab_hash().clone(),
        )
        .unwrap();
        let s = word_importance_fast(&scaled, filt).unwrap();
        homogeneous &= s.scores.iter().zip(&fast.scores).all(|(a, b)| rel(*a, alpha as f64 * b) <= IMPORTANCE_TOL);
    }
    (equiv, shuffle, homogeneous)
}

fn criterion_4(trained: Option<(&EmbeddingMatrix, &Conv1DParams<f32>)>) -> Line {
    let mut worst = (0.0f64, 0.0f64, true);
    let mut merge = |r: (f64, f64, bool)| {
        worst = (worst.0.max(r.0), worst.1.max(r.1), worst.2 && r.2);
    };
    for seed in 0..100 {
        let (emb, filt) = random_instance(seed);
        merge(importance_properties(&emb, &filt, seed));
    }
    let source = match trained {
        Some((emb, filt)) => {
            merge(importance_properties(emb, filt, 7));
            "100 random instances + trained conv1"
        }
        None => "100 random instances (desk run skipped)",
    };
    let ok = worst.0 <= IMPORTANCE_TOL && worst.1 <= IMPORTANCE_TOL && worst.2 && trained.is_some();
    line(
        ok,
        format!(
            "{source}: fast vs brute {:.1e}, shuffle drift {:.1e}, homogeneity {}",
            worst.0,
            worst.1,
            if worst.2 { "holds" } else { "broken" }
        ),
    )
}

// 5-8 -----------------------------------------------------------------------

struct Desk {
    _dir: tempfile::TempDir,
    plan: ExperimentPlan,
    art: BaseArtifacts,
}

fn desk() -> Desk {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    write_synthetic_corpus(&data, &SynthConfig::default()).unwrap();
    let mut plan = ExperimentPlan::new(Study::Shuffle, &data, dir.path().join("reports"));
    plan.seeds = DESK_SEEDS.to_vec();
    plan.train.epochs = DESK_EPOCHS;
    plan.train.batch = DESK_BATCH;
    let t = Instant::now();
    let art = BaseArtifacts::prepare(&plan).unwrap();
    eprintln!(
        "desk corpus: V={} train={} val={} test={}, basic models ready in {:.0}s",
        art.corpus.vocab.len(),
        art.corpus.train.len(),
        art.corpus.val.len(),
        art.corpus.test.len(),
        t.elapsed().as_secs_f64()
    );
    Desk { _dir: dir, plan, art }
}

fn acc(r: &StudyReport, name: &str) -> f64 {
    r.condition(name).unwrap_or_else(|| panic!("missing condition {name}")).test_acc
}

fn criterion_5(d: &Desk) -> Line {
    let plan = ExperimentPlan { study: Study::Shuffle, ..d.plan.clone() };
    let r = run_shuffle_suite(&plan, &d.art).unwrap();
    let [b, w, a, z] = ["basic", "within", "across", "random"].map(|c| acc(&r, c));
    let ok = b > w && w > a && a > z && b - z >= SHUFFLE_GAP && z >= RANDOM_FLOOR;
    line(
        ok,
        format!("median test acc basic {b:.2} > within {w:.2} > across {a:.2} > random {z:.2}; gap {:.2} >= {SHUFFLE_GAP}; random >= {RANDOM_FLOOR}", b - z),
    )
}

fn criterion_6(d: &Desk) -> Line {
    let fractions = [1.0, 0.8, 0.5, 0.1, 0.05, 0.01, 0.005];
    let reference: Vec<usize> = fractions.iter().map(|&f| fraction_count(f, V_REF)).collect();
    let counts_ok = reference == [23_363, 18_691, 11_682, 2_337, 1_169, 234, 117];
    let plan = ExperimentPlan { study: Study::Prune, prune_fractions: fractions.to_vec(), ..d.plan.clone() };
    let r = run_prune_sweep(&plan, &d.art).unwrap();
    let v = d.art.corpus.vocab.len();
    let desk_counts_ok = r.summary.iter().zip(&fractions).all(|(c, &f)| c.word_count == fraction_count(f, v));
    let by = |f: f64| r.summary.iter().find(|c| (c.words_percent - f * 100.0).abs() < 1e-9).unwrap().test_acc;
    let (all, top5, top05) = (by(1.0), by(0.05), by(0.005));
    let ok = counts_ok && desk_counts_ok && (all - top5).abs() <= PRUNE_BAND && top05 < top5;
    let accs: Vec<String> = r.summary.iter().map(|c| format!("{}:{:.2}", c.condition, c.test_acc)).collect();
    line(
        ok,
        format!(
            "reference counts {reference:?}; desk counts exact {desk_counts_ok}; |100% {all:.2} - 5% {top5:.2}| <= {PRUNE_BAND}; 0.5% {top05:.2} < 5%; [{}]",
            accs.join(" ")
        ),
    )
}

fn criterion_7(d: &Desk) -> Line {
    let plan = ExperimentPlan { study: Study::Baseline, serial_timing: true, workers: 1, ..d.plan.clone() };
    let r = run_baseline_suite(&plan, &d.art).unwrap();
    let get = |n: &str| r.condition(n).unwrap_or_else(|| panic!("missing {n}"));
    let (top, all, rnd, except) = (get("top-5%"), get("all-words"), get("random-5%"), get("all-except-top-5%"));
    let ratio = top.epoch_seconds / all.epoch_seconds;
    let ok = top.test_acc - rnd.test_acc >= BASELINE_GAP && ratio <= TIME_RATIO && except.test_acc < all.test_acc;
    line(
        ok,
        format!(
            "top-5% {:.2} - random-5% {:.2} = {:.2} >= {BASELINE_GAP}; epoch time ratio {ratio:.3} <= {TIME_RATIO}; all-except {:.2} < all {:.2}; params {} / {} / {} / {}",
            top.test_acc,
            rnd.test_acc,
            top.test_acc - rnd.test_acc,
            except.test_acc,
            all.test_acc,
            top.params.total,
            all.params.total,
            rnd.params.total,
            except.params.total
        ),
    )
}

fn criterion_8(d: &Desk) -> (Line, String) {
    let plan = ExperimentPlan { study: Study::Cluster, seeds: vec![d.plan.seeds[0]], ..d.plan.clone() };
    let t = Instant::now();
    let r = run_cluster_sweep(&plan, &d.art).unwrap();
    let n = d.art.corpus.vocab.len() + 160;
    let monotone = r
        .clusters
        .iter()
        .all(|c| c.sse_history.windows(2).all(|w| w[1] <= w[0] + SSE_SLACK * w[0].abs()));
    let sizes = r.clusters.iter().all(|c| c.size_total == n && c.rows_clustered == n);
    let inversions = r.clusters.windows(2).filter(|w| w[1].row.top_percent > w[0].row.top_percent).count();
    let k5 = r.clusters.iter().find(|c| c.row.k == 5).map(|c| c.row.filter_fraction).unwrap_or(f64::NAN);
    let detail = r
        .clusters
        .iter()
        .map(|c| format!("k={}:{:.2}%/{:.2}", c.row.k, c.row.top_percent, c.row.filter_fraction))
        .collect::<Vec<_>>()
        .join(" ");
    let info = format!(
        "filter share in most-populated cluster at k=5: {k5:.3} (full-scale target >= {FILTER_SHARE}); top-percent inversions {inversions}; [{detail}]"
    );
    (
        line(
            monotone && sizes,
            format!("SSE non-increasing on {} runs: {monotone}; sizes sum to V+160={n}: {sizes} ({:.0}s)", r.clusters.len(), t.elapsed().as_secs_f64()),
        ),
        info,
    )
}

// 9 -------------------------------------------------------------------------

fn mask_json(v: &mut Value) {
    match v {
        Value::Object(m) => {
            for k in TIMING_COLUMNS {
                m.remove(k);
            }
            m.values_mut().for_each(mask_json);
        }
        Value::Array(a) => a.iter_mut().for_each(mask_json),
        _ => {}
    }
}

fn mask_csv(text: &str) -> String {
    let mut timing: Vec<usize> = Vec::new();
    let mut header_seen = false;
    let mut out = String::new();
    for l in text.lines() {
        if l.starts_with('#') {
            out.push_str(l);
        } else if !header_seen {
            header_seen = true;
            timing = l.split(',').enumerate().filter(|(_, c)| TIMING_COLUMNS.contains(c)).map(|(i, _)| i).collect();
            out.push_str(l);
        } else {
            let cells: Vec<&str> = l.split(',').enumerate().map(|(i, c)| if timing.contains(&i) { "*" } else { c }).collect();
            out.push_str(&cells.join(","));
        }
        out.push('\n');
    }
    out
}

fn normalized(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap();
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => mask_csv(&String::from_utf8(bytes).unwrap()).into_bytes(),
        Some("json") => {
            let mut v: Value = serde_json::from_slice(&bytes).unwrap();
            mask_json(&mut v);
            serde_json::to_vec(&v).unwrap()
        }
        _ => bytes,
    }
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), normalized(&p));
            }
        }
    }
    out
}

fn cli(args: &[&str]) {
    let mut argv = vec!["textcnn-lab"];
    argv.extend_from_slice(args);
    let code = textcnn_lab::cli::run(argv.iter().copied());
    assert_eq!(code, 0, "textcnn-lab {}", args.join(" "));
}

fn pipeline(root: &Path) {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let tiny = [
        "--set", "synth.train_per_class=60",
        "--set", "synth.test_per_class=20",
        "--set", "synth.neutral_words=800",
        "--set", "train.epochs=1",
        "--set", "train.batch=8",
        "--set", "skipgram.epochs=1",
        "--set", "cluster_ks=[1,3,10]",
        "--set", "prune_fractions=[1.0,0.1]",
        "--set", "seeds=[0,1]",
    ];
    let run = |extra: &[&str]| {
        let mut a: Vec<&str> = tiny.to_vec();
        a.extend_from_slice(extra);
        cli(&a);
    };
    let (data, corpus, emb, model, imp) = (p("data"), p("corpus"), p("emb.vec"), p("model"), p("importance.tsv"));
    run(&["--seed", "3", "synth-corpus", "--out", &data]);
    run(&["--data", &data, "--seed", "1", "preprocess", "--out", &corpus]);
    run(&["--seed", "2", "embed-train", "--corpus", &corpus, "--out", &emb]);
    run(&["--seed", "4", "train", "--corpus", &corpus, "--emb", &emb, "--out", &model]);
    run(&["importance", "--checkpoint", &model, "--emb", &emb, "--out", &imp]);
    let reports = p("reports");
    for sub in ["shuffle-exp", "cluster-exp", "prune-exp", "baseline-exp"] {
        run(&["--data", &data, "--workers", "2", sub, "--out", &reports, "--stamp", "run"]);
    }
    run(&["report", "--from", &p("reports/shuffle/run"), "--out", &p("regenerated"), "--stamp", "run"]);
}

fn criterion_9() -> Line {
    // Both runs use the same paths: the first run's tree is moved aside before the rerun.
    let dir = tempfile::tempdir().unwrap();
    let (work, first) = (dir.path().join("work"), dir.path().join("first"));
    pipeline(&work);
    std::fs::rename(&work, &first).unwrap();
    pipeline(&work);
    let (ta, tb) = (tree(&first), tree(&work));
    let differing: Vec<String> = ta
        .keys()
        .chain(tb.keys())
        .filter(|k| ta.get(*k) != tb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    line(
        differing.is_empty() && ta.len() > 20,
        format!("{} files compared across two full CLI pipelines (timing masked); differing: {differing:?}", ta.len()),
    )
}

// ---------------------------------------------------------------------------

fn guarded(f: impl FnOnce() -> Line) -> Line {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(l) => l,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            line(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let skip_desk = std::env::var_os("ACCEPTANCE_SKIP_DESK").is_some();
    let mut results: Vec<(u8, &str, Option<Line>)> = Vec::new();
    let mut emit = |id: u8, name: &'static str, l: Option<Line>| {
        match &l {
            Some(l) => println!("{} [{id}] {name}: {}", if l.pass { "PASS" } else { "FAIL" }, l.detail),
            None => println!("SKIP [{id}] {name}"),
        }
        results.push((id, name, l));
    };
    emit(1, "parameter accounting", Some(guarded(criterion_1)));
    emit(2, "shape pipeline", Some(guarded(criterion_2)));
    emit(3, "gradient correctness", Some(guarded(criterion_3)));

    let desk = if skip_desk { None } else { catch_unwind(desk).ok() };
    let trained = desk.as_ref().map(|d| (&d.art.embedding, d.art.basic[0].model.conv1()));
    emit(4, "importance oracle", Some(guarded(|| criterion_4(trained))));
    match &desk {
        Some(d) => {
            emit(5, "shuffle study", Some(guarded(|| criterion_5(d))));
            emit(6, "prune study", Some(guarded(|| criterion_6(d))));
            emit(7, "baseline suite", Some(guarded(|| criterion_7(d))));
            let mut info = String::new();
            let l = guarded(|| {
                let (l, i) = criterion_8(d);
                info = i;
                l
            });
            emit(8, "clustering", Some(l));
            println!("INFO [8] {info}");
        }
        None => {
            for (id, name) in [(5, "shuffle study"), (6, "prune study"), (7, "baseline suite"), (8, "clustering")] {
                emit(id, name, None);
            }
        }
    }
    emit(9, "determinism", Some(guarded(criterion_9)));

    let failed: Vec<u8> = results.iter().filter(|r| matches!(&r.2, Some(l) if !l.pass)).map(|r| r.0).collect();
    println!("acceptance: {} criteria, failed {:?}", results.len(), failed);
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
