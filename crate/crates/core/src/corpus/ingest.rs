use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{CorpusError, RawReview, Sentiment};

/// Reviews read from a `{pos,neg}/*.txt` tree plus files that were skipped.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub reviews: Vec<RawReview>,
    /// Files that were not valid UTF-8 or held no text.
    pub skipped: Vec<PathBuf>,
}

fn list_txt(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|source| CorpusError::Ingest { path: dir.to_path_buf(), source })?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|source| CorpusError::Ingest { path: dir.to_path_buf(), source })?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Read every review under `root/pos` (label 1) and `root/neg` (label 0).
///
/// Positive files come first, each directory in lexicographic path order.
pub fn load_review_dir(root: &Path) -> Result<IngestReport, CorpusError> {
    let mut files = Vec::new();
    for (sub, label) in [("pos", Sentiment::Positive), ("neg", Sentiment::Negative)] {
        let dir = root.join(sub);
        if !dir.is_dir() {
            return Err(CorpusError::Ingest {
                path: dir,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "review directory missing"),
            });
        }
        files.extend(list_txt(&dir)?.into_iter().map(|p| (p, label)));
    }

    let loaded: Vec<Result<Option<RawReview>, CorpusError>> = files
        .par_iter()
        .map(|(path, label)| {
            let bytes = fs::read(path).map_err(|source| CorpusError::Ingest { path: path.clone(), source })?;
            let Ok(text) = String::from_utf8(bytes) else { return Ok(None) };
            if text.trim().is_empty() {
                return Ok(None);
            }
            let source_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(Some(RawReview { text, label: *label, source_id }))
        })
        .collect();

    let mut report = IngestReport::default();
    for ((path, _), r) in files.iter().zip(loaded) {
        match r? {
            Some(review) => report.reviews.push(review),
            None => {
                log::warn!("skipping {}: not UTF-8 text or empty", path.display());
                report.skipped.push(path.clone());
            }
        }
    }
    if report.reviews.is_empty() {
        log::warn!("0 reviews ingested from {}", root.display());
    }
    Ok(report)
}
