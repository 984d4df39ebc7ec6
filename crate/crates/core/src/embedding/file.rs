//! Plain-text embedding files.
//!
//! ```text
//! dim=3
//! m1 0.1 -0.25 1
//! m2 0 0.5 0.5
//! ```
//!
//! Floats are written in shortest round-trip form, so a write/read cycle is
//! bit-exact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::provider::{EmbedInput, EmbeddingProvider, ProviderError};
use super::EmbeddingVector;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub entries: Vec<(String, EmbeddingVector)>,
}

fn invalid(line: usize, msg: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

pub(crate) fn parse_dim_header(line: &str) -> Option<usize> {
    line.split_whitespace().next()?.strip_prefix("dim=")?.parse().ok().filter(|&d| d > 0)
}

pub fn read_embeddings<R: BufRead>(reader: R) -> io::Result<EmbeddingFile> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| invalid(1, "missing dim header"))??;
    let dim = parse_dim_header(&header).ok_or_else(|| invalid(1, "expected `dim=<d>`"))?;
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let id = parts.next().unwrap().to_string();
        let values = parts
            .map(|p| p.parse::<f32>().map_err(|e| invalid(lineno, e)))
            .collect::<io::Result<Vec<f32>>>()?;
        if values.len() != dim {
            return Err(invalid(lineno, format!("expected {dim} values, found {}", values.len())));
        }
        let v = EmbeddingVector::new(values).map_err(|e| invalid(lineno, e))?;
        entries.push((id, v));
    }
    Ok(EmbeddingFile { dim, entries })
}

pub fn write_embeddings<W: Write>(
    dim: usize,
    entries: &[(String, EmbeddingVector)],
    w: W,
) -> io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "dim={dim}")?;
    for (id, v) in entries {
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("id `{id}` cannot be written: empty or contains whitespace"),
            ));
        }
        if v.dim() != dim {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, format!("`{id}` has dim {}", v.dim())));
        }
        w.write_all(id.as_bytes())?;
        for x in v.as_slice() {
            write!(w, " {x}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Serves precomputed vectors (e.g. exported from a transformer encoder).
/// Inputs are looked up by id first, then by text.
#[derive(Debug, Clone)]
pub struct FileProvider {
    name: String,
    dim: usize,
    vectors: HashMap<String, EmbeddingVector>,
}

impl FileProvider {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = read_embeddings(BufReader::new(File::open(path)?))?;
        Ok(Self::from_file(format!("file:{}", path.display()), file))
    }

    pub fn from_file(name: impl Into<String>, file: EmbeddingFile) -> Self {
        FileProvider { name: name.into(), dim: file.dim, vectors: file.entries.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        inputs
            .iter()
            .enumerate()
            .map(|(index, inp)| {
                self.vectors
                    .get(inp.id)
                    .or_else(|| self.vectors.get(inp.text))
                    .cloned()
                    .ok_or_else(|| ProviderError::Missing { index, id: inp.id.to_string() })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed_batch;
    use proptest::prelude::*;

    #[test]
    fn lookup_by_id() {
        let v1 = EmbeddingVector::new(vec![0.5f32, -1.0]).unwrap();
        let p = FileProvider::from_file("t", EmbeddingFile { dim: 2, entries: vec![("m1".into(), v1.clone())] });
        assert_eq!(embed_batch(&p, &[EmbedInput::key("m1")]).unwrap(), vec![v1]);
        assert_eq!(
            embed_batch(&p, &[EmbedInput::key("m1"), EmbedInput::new("m9", "text")]).unwrap_err(),
            ProviderError::Missing { index: 1, id: "m9".into() }
        );
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(read_embeddings("dim=2\na 1 2 3\n".as_bytes()).is_err());
        assert!(read_embeddings("dim=2\na 1 x\n".as_bytes()).is_err());
        assert!(read_embeddings("2\na 1 2\n".as_bytes()).is_err());
        assert!(read_embeddings("dim=2\na 1 NaN\n".as_bytes()).is_err());
        let ok = read_embeddings("dim=2\n\na 1 2\n".as_bytes()).unwrap();
        assert_eq!(ok.entries.len(), 1);
    }

    #[test]
    fn whitespace_id_refused() {
        let v = EmbeddingVector::new(vec![1.0f32]).unwrap();
        assert!(write_embeddings(1, &[("a b".into(), v)], Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn write_read_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::SUBNORMAL | prop::num::f32::ZERO, 4), 1..10)
        ) {
            let entries: Vec<(String, EmbeddingVector)> = rows
                .into_iter()
                .enumerate()
                .map(|(i, r)| (format!("id{i}"), EmbeddingVector::new(r).unwrap()))
                .collect();
            let mut buf = Vec::new();
            write_embeddings(4, &entries, &mut buf).unwrap();
            let back = read_embeddings(buf.as_slice()).unwrap();
            prop_assert_eq!(back.dim, 4);
            for ((ia, va), (ib, vb)) in entries.iter().zip(&back.entries) {
                prop_assert_eq!(ia, ib);
                for (x, y) in va.as_slice().iter().zip(vb.as_slice()) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}
