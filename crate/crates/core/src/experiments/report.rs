use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentError, Study};
use crate::interpret::{write_cluster_csv, write_projection_tsv, ClusterRow, Projection2D};
use crate::model::ParamCount;
use crate::train::{write_trace_csv, TrainReport};

/// Columns (and JSON keys) that carry wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 5] =
    ["epoch_seconds", "avg_epoch_seconds", "mean_epoch_seconds", "seconds_elapsed", "seconds"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMeta {
    pub study: Study,
    pub precision: String,
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub serial_timing: bool,
    pub hardware: String,
    pub vocab_size: usize,
    pub train_reviews: usize,
    pub val_reviews: usize,
    pub eval_reviews: usize,
    /// Split reported as test accuracy.
    pub eval_split: String,
    pub epochs: usize,
    pub batch: usize,
    pub version: String,
}

impl EnvMeta {
    pub fn hardware_note() -> String {
        let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
        format!("{}-{} cpus={cpus}", std::env::consts::OS, std::env::consts::ARCH)
    }
}

/// One trained condition for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub condition: String,
    pub seed: u64,
    pub words_percent: f64,
    pub word_count: usize,
    pub params: ParamCount,
    pub train_acc: f64,
    pub test_acc: f64,
    pub epoch_seconds: f64,
    pub run_id: String,
}

/// Per-condition medians over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: String,
    pub words_percent: f64,
    pub word_count: usize,
    pub params: ParamCount,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Test accuracy minus the next row's (the last row minus chance).
    pub improvement: Option<f64>,
    pub epoch_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRun {
    pub seed: u64,
    pub row: ClusterRow,
    pub sse_history: Vec<f64>,
    pub rows_clustered: usize,
    pub size_total: usize,
}

/// Points of a 2-D scatter plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub name: String,
    pub labels: Vec<(String, String)>,
    pub coords: Vec<(f64, f64)>,
    pub explained: [f64; 2],
}

impl PlotData {
    pub fn from_projection(name: impl Into<String>, labels: Vec<(String, String)>, proj: &Projection2D) -> Self {
        Self { name: name.into(), labels, coords: proj.coords.clone(), explained: proj.explained }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study: Study,
    pub meta: EnvMeta,
    pub runs: Vec<RunRow>,
    pub summary: Vec<ConditionSummary>,
    pub traces: Vec<TrainReport>,
    pub clusters: Vec<ClusterRun>,
    pub plots: Vec<PlotData>,
}

impl StudyReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionSummary> {
        self.summary.iter().find(|c| c.condition == name)
    }
}

/// Median; the mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Collapse per-seed rows into one row per condition, keeping first-seen order.
pub(super) fn summarize(runs: &[RunRow], with_improvement: bool) -> Vec<ConditionSummary> {
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.condition.as_str()) {
            order.push(&r.condition);
        }
    }
    let mut out: Vec<ConditionSummary> = order
        .iter()
        .map(|name| {
            let rows: Vec<&RunRow> = runs.iter().filter(|r| r.condition == *name).collect();
            let pick = |f: fn(&RunRow) -> f64| median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            ConditionSummary {
                condition: name.to_string(),
                words_percent: rows[0].words_percent,
                word_count: rows[0].word_count,
                params: rows[0].params,
                train_acc: pick(|r| r.train_acc),
                test_acc: pick(|r| r.test_acc),
                improvement: None,
                epoch_seconds: pick(|r| r.epoch_seconds),
            }
        })
        .collect();
    if with_improvement {
        for i in 0..out.len() {
            let next = out.get(i + 1).map_or(50.0, |n| n.test_acc);
            out[i].improvement = Some(out[i].test_acc - next);
        }
    }
    out
}

fn meta_header(meta: &EnvMeta) -> String {
    let value = serde_json::to_value(meta).expect("metadata serializes");
    let mut out = String::new();
    for (k, v) in value.as_object().expect("metadata is an object") {
        let v = match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out
}

fn prepend(path: &Path, header: &str) -> Result<(), ExperimentError> {
    let body = fs::read_to_string(path)?;
    fs::write(path, format!("{header}{body}"))?;
    Ok(())
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn pct(v: f64) -> String {
    format!("{v:.2}")
}

fn write_summary(report: &StudyReport, path: &Path) -> Result<(), ExperimentError> {
    let s = &report.summary;
    match report.study {
        Study::Shuffle => write_table(
            path,
            &["condition", "train_acc", "test_acc", "accuracy_improvement"],
            s.iter()
                .map(|c| vec![c.condition.clone(), pct(c.train_acc), pct(c.test_acc), pct(c.improvement.unwrap_or(f64::NAN))])
                .collect(),
        ),
        Study::Prune => write_table(
            path,
            &["words_kept_percent", "word_count", "train_acc", "test_acc", "params", "epoch_seconds"],
            s.iter()
                .map(|c| {
                    vec![
                        format!("{:.1}", c.words_percent),
                        c.word_count.to_string(),
                        pct(c.train_acc),
                        pct(c.test_acc),
                        c.params.total.to_string(),
                        format!("{:.4}", c.epoch_seconds),
                    ]
                })
                .collect(),
        ),
        Study::Baseline => write_table(
            path,
            &["model", "words_used_percent", "word_count", "train_acc", "test_acc", "avg_epoch_seconds", "params"],
            s.iter()
                .map(|c| {
                    vec![
                        c.condition.clone(),
                        format!("{:.1}", c.words_percent),
                        c.word_count.to_string(),
                        pct(c.train_acc),
                        pct(c.test_acc),
                        format!("{:.4}", c.epoch_seconds),
                        c.params.total.to_string(),
                    ]
                })
                .collect(),
        ),
        Study::Cluster => {
            let first = report.meta.seeds.first().copied();
            let rows: Vec<ClusterRow> =
                report.clusters.iter().filter(|c| Some(c.seed) == first).map(|c| c.row.clone()).collect();
            write_cluster_csv(&rows, path)?;
            Ok(())
        }
    }
}

fn write_runs(report: &StudyReport, path: &Path) -> Result<(), ExperimentError> {
    if report.study == Study::Cluster {
        return write_table(
            path,
            &["seed", "k", "sse", "iterations", "most_populated_count", "most_populated_percent", "filter_fraction", "size_total"],
            report
                .clusters
                .iter()
                .map(|c| {
                    vec![
                        c.seed.to_string(),
                        c.row.k.to_string(),
                        format!("{:.6}", c.row.sse),
                        (c.sse_history.len() - 1).to_string(),
                        c.row.top_word_count.to_string(),
                        pct(c.row.top_percent),
                        format!("{:.4}", c.row.filter_fraction),
                        c.size_total.to_string(),
                    ]
                })
                .collect(),
        );
    }
    write_table(
        path,
        &["condition", "seed", "word_count", "params", "trainable_params", "train_acc", "test_acc", "epoch_seconds"],
        report
            .runs
            .iter()
            .map(|r| {
                vec![
                    r.condition.clone(),
                    r.seed.to_string(),
                    r.word_count.to_string(),
                    r.params.total.to_string(),
                    r.params.trainable.to_string(),
                    pct(r.train_acc),
                    pct(r.test_acc),
                    format!("{:.4}", r.epoch_seconds),
                ]
            })
            .collect(),
    )
}

/// Write every table, trace and plot file of `report` to `<root>/<study>/<stamp>/` and return that directory.
pub fn write_reports(report: &StudyReport, root: &Path, stamp: Option<&str>) -> Result<PathBuf, ExperimentError> {
    let stamp = stamp.map_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(), str::to_string);
    let dir = root.join(report.study.dir_name()).join(stamp);
    fs::create_dir_all(&dir)?;
    let header = meta_header(&report.meta);

    let summary = dir.join(format!("{}.csv", report.study.dir_name()));
    write_summary(report, &summary)?;
    prepend(&summary, &header)?;

    let runs = dir.join("runs.csv");
    write_runs(report, &runs)?;
    prepend(&runs, &header)?;

    if !report.traces.is_empty() {
        let traces = dir.join("traces.csv");
        write_trace_csv(&report.traces.iter().collect::<Vec<_>>(), &traces)?;
        prepend(&traces, &header)?;
    }
    if !report.clusters.is_empty() {
        let path = dir.join("sse_history.csv");
        let mut rows = Vec::new();
        for c in &report.clusters {
            for (i, sse) in c.sse_history.iter().enumerate() {
                rows.push(vec![c.seed.to_string(), c.row.k.to_string(), i.to_string(), format!("{sse:.6}")]);
            }
        }
        write_table(&path, &["seed", "k", "iteration", "sse"], rows)?;
        prepend(&path, &header)?;
    }
    for plot in &report.plots {
        let path = dir.join(format!("{}.tsv", plot.name));
        let proj = Projection2D {
            coords: plot.coords.clone(),
            components: [Vec::new(), Vec::new()],
            explained: plot.explained,
            mean: Vec::new(),
        };
        let labels: Vec<(&str, String)> = plot.labels.iter().map(|(t, l)| (t.as_str(), l.clone())).collect();
        write_projection_tsv(&proj, &labels, &path)?;
        prepend(&path, &header)?;
    }
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    log::info!("{} report written to {}", report.study, dir.display());
    Ok(dir)
}

pub fn load_report(path: &Path) -> Result<StudyReport, ExperimentError> {
    let file = if path.is_dir() { path.join("report.json") } else { path.to_path_buf() };
    Ok(serde_json::from_str(&fs::read_to_string(file)?)?)
}
