//! Word embedding table with optional pretrained initialization.

use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::data::vocab::{Vocabulary, PAD_ID};
use crate::tensor::{Array, SplitRng};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}, line {line}: expected {expected} vector components, got {got}")]
    BadVector {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}, line {line}: unparseable vector component")]
    BadNumber { path: String, line: usize },
}

/// `[V x dim]` embedding matrix. Row ids match the vocabulary; the PAD row
/// is all zeros and is never looked up, so it stays zero through training.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub array: Array,
    /// Per row: came from the pretrained file rather than random init.
    pub pretrained: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    pub pretrained_rows: usize,
    pub random_rows: usize,
}

fn random_table(vocab_size: usize, dim: usize, rng: &SplitRng) -> Array {
    let mut stream = rng.split("init").split("embed.table");
    let mut data: Vec<f64> = (0..vocab_size * dim)
        .map(|_| stream.uniform(-0.1, 0.1))
        .collect();
    for v in data[PAD_ID * dim..(PAD_ID + 1) * dim].iter_mut() {
        *v = 0.0;
    }
    Array::from_vec(vocab_size, dim, data)
}

impl EmbeddingTable {
    /// All rows random in (-0.1, 0.1) except the zero PAD row.
    pub fn random(vocab: &Vocabulary, dim: usize, rng: &SplitRng) -> Self {
        EmbeddingTable {
            array: random_table(vocab.word_count(), dim, rng),
            pretrained: vec![false; vocab.word_count()],
        }
    }

    /// Read a text embedding file (`word v1 ... vDIM` per line). Vocabulary
    /// words present in the file get the stored vector; the rest keep their
    /// seeded random initialization and are flagged as learned-from-scratch.
    pub fn load_pretrained(
        path: &Path,
        vocab: &Vocabulary,
        dim: usize,
        rng: &SplitRng,
    ) -> Result<(Self, CoverageReport), EmbeddingError> {
        let io_err = |source| EmbeddingError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut table = EmbeddingTable::random(vocab, dim, rng);

        let file = std::fs::File::open(path).map_err(io_err)?;
        let reader = std::io::BufReader::new(file);
        let mut matched = 0usize;
        for (line_idx, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().expect("non-empty line has a first token");
            let components: Vec<&str> = parts.collect();
            if components.len() != dim {
                return Err(EmbeddingError::BadVector {
                    path: path.display().to_string(),
                    line: line_idx + 1,
                    expected: dim,
                    got: components.len(),
                });
            }
            let id = vocab.word_id(word);
            if id == crate::data::vocab::UNK_ID && word != crate::data::vocab::UNK_TOKEN {
                continue; // word outside the vocabulary
            }
            if id == PAD_ID || table.pretrained[id] {
                continue;
            }
            let row = table.array.row_slice_mut(id);
            for (slot, c) in components.iter().enumerate() {
                row[slot] = c.parse::<f64>().map_err(|_| EmbeddingError::BadNumber {
                    path: path.display().to_string(),
                    line: line_idx + 1,
                })?;
            }
            table.pretrained[id] = true;
            matched += 1;
        }
        let report = CoverageReport {
            pretrained_rows: matched,
            random_rows: vocab.word_count() - matched,
        };
        Ok((table, report))
    }
}
