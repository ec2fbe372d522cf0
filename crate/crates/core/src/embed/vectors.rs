//! Pre-trained word vectors and the binary dense-matrix cache.
//!
//! Text format: one word per line, `word v1 ... vd`, space separated. A
//! leading `rows cols` header line (word2vec style) is skipped.
//!
//! Cache format (little-endian): 8-byte magic `MSDAMAT1`, `u64` rows,
//! `u64` cols, then `rows * cols` `f32` values in row-major order.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array2;

use crate::{Error, Result};

const MATRIX_MAGIC: &[u8; 8] = b"MSDAMAT1";

#[derive(Clone, Debug, PartialEq)]
pub struct WordVectors {
    vocabulary: HashMap<String, usize>,
    matrix: Array2<f32>,
}

impl WordVectors {
    pub fn new(words: Vec<String>, matrix: Array2<f32>) -> Result<Self> {
        if words.len() != matrix.nrows() {
            return Err(Error::Argument(format!(
                "{} words but {} vector rows",
                words.len(),
                matrix.nrows()
            )));
        }
        if matrix.ncols() == 0 {
            return Err(Error::Argument(
                "word vectors need a positive dimension".into(),
            ));
        }
        let mut vocabulary = HashMap::with_capacity(words.len());
        for (i, w) in words.into_iter().enumerate() {
            // first occurrence wins
            vocabulary.entry(w).or_insert(i);
        }
        Ok(WordVectors { vocabulary, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vocabulary.contains_key(word)
    }

    pub fn get(&self, word: &str) -> Option<ndarray::ArrayView1<'_, f32>> {
        self.vocabulary.get(word).map(|&i| self.matrix.row(i))
    }

    pub fn matrix(&self) -> &Array2<f32> {
        &self.matrix
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        Self::load_text_filtered(path, None)
    }

    /// Reads the text format, keeping only words in `keep` when given.
    pub fn load_text_filtered(path: &Path, keep: Option<&HashSet<String>>) -> Result<Self> {
        Self::read_text(BufReader::new(File::open(path)?), keep)
    }

    pub fn read_text<R: BufRead>(reader: R, keep: Option<&HashSet<String>>) -> Result<Self> {
        let mut words = Vec::new();
        let mut values: Vec<f32> = Vec::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let rest: Vec<&str> = parts.collect();
            if i == 0
                && rest.len() == 1
                && word.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            match dim {
                None => dim = Some(rest.len()),
                Some(d) if d != rest.len() => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: format!("expected {d} components, found {}", rest.len()),
                    })
                }
                _ => {}
            }
            if keep.is_some_and(|k| !k.contains(word)) {
                continue;
            }
            for v in rest {
                values.push(v.parse::<f32>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad component `{v}`: {e}"),
                })?);
            }
            words.push(word.to_string());
        }
        let dim = dim.unwrap_or(0);
        let matrix = Array2::from_shape_vec((words.len(), dim), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        WordVectors::new(words, matrix)
    }
}

pub fn write_matrix<W: Write>(w: &mut W, m: &Array2<f32>) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_u64::<LittleEndian>(m.nrows() as u64)?;
    w.write_u64::<LittleEndian>(m.ncols() as u64)?;
    for &v in m.iter() {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(r: &mut R) -> Result<Array2<f32>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format("not a dense matrix cache".into()));
    }
    let rows = r.read_u64::<LittleEndian>()? as usize;
    let cols = r.read_u64::<LittleEndian>()? as usize;
    let mut data = vec![0f32; rows * cols];
    r.read_f32_into::<LittleEndian>(&mut data)?;
    Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_matrix(path: &Path, m: &Array2<f32>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<Array2<f32>> {
    read_matrix(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_glove_and_word2vec_text() {
        let glove = "good 1 0 0\nbad -1 0.5 0\n";
        let v = WordVectors::read_text(glove.as_bytes(), None).unwrap();
        assert_eq!((v.len(), v.dim()), (2, 3));
        assert_eq!(v.get("bad").unwrap()[1], 0.5);

        let w2v = "2 3\ngood 1 0 0\nbad -1 0.5 0\n";
        let v2 = WordVectors::read_text(w2v.as_bytes(), None).unwrap();
        assert_eq!(v, v2);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let err = WordVectors::read_text("a 1 2\nb 1\n".as_bytes(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn filter_keeps_requested_words() {
        let keep: HashSet<String> = ["b".to_string()].into();
        let v = WordVectors::read_text("a 1 2\nb 3 4\n".as_bytes(), Some(&keep)).unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.contains("b") && !v.contains("a"));
    }

    #[test]
    fn matrix_cache_round_trip() {
        let m = Array2::from_shape_fn((3, 4), |(i, j)| i as f32 * 0.5 - j as f32);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 8 + 16 + 12 * 4);
        assert_eq!(read_matrix(&mut buf.as_slice()).unwrap(), m);
    }
}
