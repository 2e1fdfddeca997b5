//! Plain-text word-vector files: a `V I` header line, then `word v1 .. vI` per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingError, EmbeddingMatrix};
use crate::corpus::Vocabulary;

/// A matrix aligned to a vocabulary plus the words the file did not cover.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedVectors {
    pub matrix: EmbeddingMatrix,
    /// Vocabulary words absent from the file, filled from `U(-0.5/dim, 0.5/dim)`.
    pub missing: Vec<String>,
}

/// Write rows `1..=V` with nine significant digits; the zero row is not stored.
pub fn save_word_vectors(matrix: &EmbeddingMatrix, vocab: &Vocabulary, path: &Path) -> Result<(), EmbeddingError> {
    if matrix.vocab_hash() != &vocab.hash() {
        return Err(EmbeddingError::Shape("matrix was not built for this vocabulary".into()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {}", vocab.len(), matrix.dim())?;
    for (i, word) in vocab.words().iter().enumerate() {
        write!(out, "{word}")?;
        for v in matrix.row(i + 1) {
            write!(out, " {v:.8e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

/// Read a vector file and align it to `vocab`. Words in the file but not in the
/// vocabulary are ignored; an optional header line is recognised by having two integer fields.
pub fn load_word_vectors(path: &Path, vocab: &Vocabulary, seed: u64) -> Result<LoadedVectors, EmbeddingError> {
    let reader = BufReader::new(File::open(path)?);
    let parse_err = |line: usize, detail: String| EmbeddingError::Parse { path: path.to_path_buf(), line, detail };
    let mut dim: Option<usize> = None;
    let mut rows: Vec<Option<Vec<f32>>> = vec![None; vocab.len() + 1];

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().expect("checked above"));
            continue;
        }
        let found = fields.len() - 1;
        match dim {
            Some(expected) if expected != found => {
                return Err(EmbeddingError::Dimension { path: path.to_path_buf(), line: lineno, expected, found })
            }
            None if found == 0 => return Err(parse_err(lineno, "row has no vector values".into())),
            None => dim = Some(found),
            _ => {}
        }
        let Some(id) = vocab.id_of(fields[0]) else { continue };
        let values = fields[1..]
            .iter()
            .map(|f| match f.parse::<f32>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(lineno, format!("bad vector value {f:?}"))),
            })
            .collect::<Result<Vec<f32>, _>>()?;
        rows[id as usize] = Some(values);
    }

    let dim = dim.ok_or_else(|| parse_err(1, "file holds no vectors".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = 0.5 / dim as f32;
    let mut data = vec![0.0f32; (vocab.len() + 1) * dim];
    let mut missing = Vec::new();
    for (id, row) in rows.into_iter().enumerate().skip(1) {
        let dst = &mut data[id * dim..(id + 1) * dim];
        match row {
            Some(v) => dst.copy_from_slice(&v),
            None => {
                missing.push(vocab.words()[id - 1].clone());
                dst.iter_mut().for_each(|x| *x = rng.gen_range(-limit..limit));
            }
        }
    }
    if !missing.is_empty() {
        log::info!("{} of {} vocabulary words missing from {}", missing.len(), vocab.len(), path.display());
    }
    Ok(LoadedVectors { matrix: EmbeddingMatrix::new(vocab.len(), dim, data, vocab.hash())?, missing })
}
