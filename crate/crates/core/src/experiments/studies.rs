use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::base::{seeded, thread_pool};
use super::report::{summarize, ClusterRun};
use super::{BaseArtifacts, EnvMeta, ExperimentError, ExperimentPlan, PlotData, RunRow, Study, StudyReport};
use crate::corpus::{fraction_count, SplitTag, Vocabulary};
use crate::embedding::EmbeddingMatrix;
use crate::interpret::{
    cluster_report, kmeans, pca2, randomize_first_layer, rank_words, row_labels, shuffle_across_filters,
    shuffle_within_filters, word_importance_fast, words_and_slices, KMeansConfig, Rows,
};
use crate::model::{build_model, count_params, SentimentCNN};
use crate::train::{evaluate, train, TrainReport};

/// One model to train: its condition label, seed, vocabulary and initial weights.
struct Job {
    condition: String,
    seed: u64,
    words_percent: f64,
    vocab: Vocabulary,
    model: SentimentCNN<f32>,
}

fn meta(plan: &ExperimentPlan, art: &BaseArtifacts) -> EnvMeta {
    let c = &art.corpus;
    EnvMeta {
        study: plan.study,
        precision: "f32".into(),
        seeds: plan.seeds.clone(),
        workers: plan.workers,
        serial_timing: plan.serial_timing,
        hardware: EnvMeta::hardware_note(),
        vocab_size: c.vocab.len(),
        train_reviews: c.train.len(),
        val_reviews: c.val.len(),
        eval_reviews: c.docs(c.eval_split()).len(),
        eval_split: c.eval_split().to_string(),
        epochs: plan.train.epochs,
        batch: plan.train.batch,
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn run_job(plan: &ExperimentPlan, art: &BaseArtifacts, mut job: Job) -> Result<(RunRow, TrainReport), ExperimentError> {
    let c = &art.corpus;
    let run_id = format!("{}-s{}", job.condition, job.seed);
    let train_set = c.encode_split(SplitTag::Train, &job.vocab);
    let val_set = c.encode_split(SplitTag::Val, &job.vocab);
    let report = train(&mut job.model, &train_set, &val_set, &seeded(&plan.train, job.seed), &run_id)?;
    let test_acc = evaluate(&job.model, &c.encode_split(c.eval_split(), &job.vocab))?;
    log::info!("{run_id}: train {:.2} test {test_acc:.2}", report.final_train_acc());
    let row = RunRow {
        condition: job.condition,
        seed: job.seed,
        words_percent: job.words_percent,
        word_count: job.vocab.len(),
        params: count_params(&job.model).count,
        train_acc: report.final_train_acc(),
        test_acc,
        epoch_seconds: report.mean_epoch_seconds(),
        run_id,
    };
    Ok((row, report))
}

/// Train every job, in parallel unless timings must be comparable. Output order follows input order.
fn run_jobs(plan: &ExperimentPlan, art: &BaseArtifacts, jobs: Vec<Job>) -> Result<Vec<(RunRow, TrainReport)>, ExperimentError> {
    let pool = thread_pool(plan.workers);
    pool.install(|| {
        if plan.serial_timing {
            jobs.into_iter().map(|j| run_job(plan, art, j)).collect()
        } else {
            jobs.into_par_iter().map(|j| run_job(plan, art, j)).collect()
        }
    })
}

fn basic_for(art: &BaseArtifacts, seed: u64) -> Result<&crate::experiments::BasicRun, ExperimentError> {
    art.basic(seed).ok_or_else(|| ExperimentError::Plan(format!("no basic model for seed {seed}")))
}

fn trainable_model(plan: &ExperimentPlan, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<SentimentCNN<f32>, ExperimentError> {
    let emb = EmbeddingMatrix::random_uniform(vocab, dim, plan.embedding_init, seed);
    Ok(build_model(vocab.len(), &emb, true, seed)?)
}

fn ranked_words(art: &BaseArtifacts, seed: u64) -> Result<Vec<String>, ExperimentError> {
    let imp = word_importance_fast(&art.embedding, basic_for(art, seed)?.model.conv1())?;
    Ok(rank_words(&imp, &art.corpus.vocab, 1.0)?)
}

fn finish(plan: &ExperimentPlan, art: &BaseArtifacts, results: Vec<(RunRow, TrainReport)>, improvement: bool) -> StudyReport {
    let (runs, traces): (Vec<RunRow>, Vec<TrainReport>) = results.into_iter().unzip();
    StudyReport {
        study: plan.study,
        meta: meta(plan, art),
        summary: summarize(&runs, improvement),
        runs,
        traces,
        clusters: Vec::new(),
        plots: Vec::new(),
    }
}

/// Basic model against copies whose frozen first layer was shuffled within filters,
/// shuffled across filters, or replaced by random weights.
pub fn run_shuffle_suite(plan: &ExperimentPlan, art: &BaseArtifacts) -> Result<StudyReport, ExperimentError> {
    let v = art.corpus.vocab.len();
    let mut jobs = Vec::new();
    for &seed in &plan.seeds {
        let conv1 = basic_for(art, seed)?.model.conv1();
        let variants = [
            ("within", shuffle_within_filters(conv1, seed + 1000, plan.shuffle_mode)),
            ("across", shuffle_across_filters(conv1, seed + 2000, plan.shuffle_mode)),
            ("random", randomize_first_layer(conv1, seed + 3000)),
        ];
        for (name, filt) in variants {
            let mut model = build_model(v, &art.embedding, false, seed)?;
            model.set_conv1(filt)?;
            let mut t = model.trainable();
            t.conv1 = false;
            model.set_trainable(t);
            jobs.push(Job { condition: name.into(), seed, words_percent: 100.0, vocab: art.corpus.vocab.clone(), model });
        }
    }
    let trained = run_jobs(plan, art, jobs)?;
    let mut results = Vec::new();
    for &seed in &plan.seeds {
        let b = basic_for(art, seed)?;
        results.push((
            RunRow {
                condition: "basic".into(),
                seed,
                words_percent: 100.0,
                word_count: v,
                params: count_params(&b.model).count,
                train_acc: b.report.final_train_acc(),
                test_acc: b.test_acc,
                epoch_seconds: b.report.mean_epoch_seconds(),
                run_id: b.report.run_id.clone(),
            },
            b.report.clone(),
        ));
        results.extend(trained.iter().filter(|(r, _)| r.seed == seed).cloned());
    }
    Ok(finish(plan, art, results, true))
}

/// k-means over word vectors plus first-layer slices for every k, and a 2-D projection of both.
pub fn run_cluster_sweep(plan: &ExperimentPlan, art: &BaseArtifacts) -> Result<StudyReport, ExperimentError> {
    let v = art.corpus.vocab.len();
    let mut clusters = Vec::new();
    let mut plots = Vec::new();
    for &seed in &plan.seeds {
        let conv1 = basic_for(art, seed)?.model.conv1();
        let rows = words_and_slices(&art.embedding, conv1)?;
        let n = rows.len();
        let mut ks: Vec<usize> = plan.cluster_ks.iter().map(|&k| k.min(n)).collect();
        ks.dedup();
        let cfg = KMeansConfig { seed: plan.kmeans.seed.wrapping_add(seed), ..plan.kmeans };
        for k in ks {
            let c = kmeans(&rows, k, &cfg)?;
            let row = cluster_report(&c, v)?;
            log::info!("cluster s{seed} k={k}: sse {:.4} top {:.2}% filters {:.3}", row.sse, row.top_percent, row.filter_fraction);
            clusters.push(ClusterRun {
                seed,
                row,
                size_total: c.sizes.iter().sum(),
                rows_clustered: n,
                sse_history: c.sse_history,
            });
        }
        if plots.is_empty() {
            let proj = pca2(&rows)?;
            let labels = row_labels(&art.corpus.vocab, conv1).into_iter().map(|(t, l)| (t.to_string(), l)).collect();
            plots.push(PlotData::from_projection("words_vs_filters", labels, &proj));
        }
    }
    Ok(StudyReport {
        study: plan.study,
        meta: meta(plan, art),
        runs: Vec::new(),
        summary: Vec::new(),
        traces: Vec::new(),
        clusters,
        plots,
    })
}

/// Projections of all word vectors marked top/other, and of the top words alone.
fn top_word_plots(art: &BaseArtifacts, ranked: &[String], fraction: f64) -> Result<Vec<PlotData>, ExperimentError> {
    let vocab = &art.corpus.vocab;
    let emb = &art.embedding;
    let rows = Rows::new(emb.data()[emb.dim()..].iter().map(|&x| x as f64).collect(), emb.dim())?;
    let proj = pca2(&rows)?;
    let top: std::collections::HashSet<&str> = ranked[..fraction_count(fraction, ranked.len())].iter().map(String::as_str).collect();
    let mut all = PlotData::from_projection("top_words", Vec::new(), &proj);
    all.labels = vocab.words().iter().map(|w| (if top.contains(w.as_str()) { "top" } else { "other" }.to_string(), w.clone())).collect();
    let mut only = PlotData { name: "words".into(), labels: Vec::new(), coords: Vec::new(), explained: proj.explained };
    for (label, xy) in all.labels.iter().zip(&all.coords) {
        if label.0 == "top" {
            only.labels.push(label.clone());
            only.coords.push(*xy);
        }
    }
    Ok(vec![all, only])
}

/// Retrain from scratch on the most important words for each kept fraction.
pub fn run_prune_sweep(plan: &ExperimentPlan, art: &BaseArtifacts) -> Result<StudyReport, ExperimentError> {
    let dim = art.embedding.dim();
    let mut jobs = Vec::new();
    let mut plots = Vec::new();
    for &seed in &plan.seeds {
        let ranked = ranked_words(art, seed)?;
        for &f in &plan.prune_fractions {
            let vocab = art.corpus.vocab.prune(&ranked, f)?;
            let model = trainable_model(plan, &vocab, dim, seed)?;
            jobs.push(Job { condition: format!("{}%", f * 100.0), seed, words_percent: f * 100.0, vocab, model });
        }
        if plots.is_empty() {
            plots = top_word_plots(art, &ranked, plan.baseline_fraction)?;
        }
    }
    let mut report = finish(plan, art, run_jobs(plan, art, jobs)?, false);
    report.plots = plots;
    Ok(report)
}

/// Top words against all words, a seeded random sample of the same size, and everything but the top words.
pub fn run_baseline_suite(plan: &ExperimentPlan, art: &BaseArtifacts) -> Result<StudyReport, ExperimentError> {
    let dim = art.embedding.dim();
    let vocab = &art.corpus.vocab;
    let f = plan.baseline_fraction;
    let pct = f * 100.0;
    let mut jobs = Vec::new();
    for &seed in &plan.seeds {
        let ranked = ranked_words(art, seed)?;
        let n = fraction_count(f, vocab.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 4000);
        let mut picked = rand::seq::index::sample(&mut rng, vocab.len(), n).into_vec();
        picked.sort_unstable();
        let random = vocab.subset(picked.iter().map(|&i| vocab.words()[i].as_str()))?;
        let conditions = [
            (format!("top-{pct}%"), pct, vocab.prune(&ranked, f)?),
            ("all-words".to_string(), 100.0, vocab.clone()),
            (format!("random-{pct}%"), pct, random),
            (format!("all-except-top-{pct}%"), 100.0 - pct, vocab.complement(&ranked, f)?),
        ];
        for (condition, words_percent, v) in conditions {
            let model = trainable_model(plan, &v, dim, seed)?;
            jobs.push(Job { condition, seed, words_percent, vocab: v, model });
        }
    }
    Ok(finish(plan, art, run_jobs(plan, art, jobs)?, false))
}

/// Prepare the shared artifacts and run the study named by the plan.
pub fn run_study(plan: &ExperimentPlan) -> Result<StudyReport, ExperimentError> {
    let art = BaseArtifacts::prepare(plan)?;
    match plan.study {
        Study::Shuffle => run_shuffle_suite(plan, &art),
        Study::Cluster => run_cluster_sweep(plan, &art),
        Study::Prune => run_prune_sweep(plan, &art),
        Study::Baseline => run_baseline_suite(plan, &art),
    }
}
