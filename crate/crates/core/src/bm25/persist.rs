//! Single-file index format, little-endian:
//!
//! ```text
//! magic "CMBM25\0\0" | version u32 | N u32 | k1 f64 | b f64
//! N x (doc id: u32 len + utf8, doc length u32)
//! T u32 | T x (term: u32 len + utf8, P u32, P x (doc u32, tf u32))
//! ```
//!
//! Terms are written in lexicographic order so equal indexes produce equal
//! files.

use std::collections::HashMap;
use std::io::{self, Read, Write};

use super::index::{Bm25Params, InvertedIndex, Posting};

const MAGIC: &[u8; 8] = b"CMBM25\0\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_str<R: Read>(r: &mut R) -> io::Result<String> {
    let len = get_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| invalid(e.to_string()))
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn write_index<W: Write>(index: &InvertedIndex, w: W) -> io::Result<()> {
    let mut w = io::BufWriter::new(w);
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_u32(&mut w, index.doc_ids.len() as u32)?;
    w.write_all(&index.params.k1.to_le_bytes())?;
    w.write_all(&index.params.b.to_le_bytes())?;
    for (id, &len) in index.doc_ids.iter().zip(&index.doc_lengths) {
        put_str(&mut w, id)?;
        put_u32(&mut w, len)?;
    }
    let mut terms: Vec<&String> = index.postings.keys().collect();
    terms.sort();
    put_u32(&mut w, terms.len() as u32)?;
    for term in terms {
        let postings = &index.postings[term];
        put_str(&mut w, term)?;
        put_u32(&mut w, postings.len() as u32)?;
        for p in postings {
            put_u32(&mut w, p.doc)?;
            put_u32(&mut w, p.tf)?;
        }
    }
    w.flush()
}

pub fn read_index<R: Read>(r: R) -> io::Result<InvertedIndex> {
    let mut r = io::BufReader::new(r);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a BM25 index file"));
    }
    let version = get_u32(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(invalid(format!("unsupported index format version {version}")));
    }
    let n = get_u32(&mut r)? as usize;
    let (k1, b) = (get_f64(&mut r)?, get_f64(&mut r)?);
    let params = Bm25Params::new(k1, b).map_err(|e| invalid(e.to_string()))?;
    let mut index = InvertedIndex::new(params);
    for doc in 0..n {
        let id = get_str(&mut r)?;
        let len = get_u32(&mut r)?;
        if index.lookup.insert(id.clone(), doc as u32).is_some() {
            return Err(invalid(format!("duplicate document `{id}`")));
        }
        index.doc_ids.push(id);
        index.doc_lengths.push(len);
        index.total_len += len as u64;
    }
    let terms = get_u32(&mut r)? as usize;
    let mut postings = HashMap::with_capacity(terms);
    for _ in 0..terms {
        let term = get_str(&mut r)?;
        let count = get_u32(&mut r)? as usize;
        let mut list = Vec::with_capacity(count);
        for _ in 0..count {
            let doc = get_u32(&mut r)?;
            let tf = get_u32(&mut r)?;
            if doc as usize >= n || list.last().is_some_and(|p: &Posting| p.doc >= doc) {
                return Err(invalid(format!("postings for `{term}` out of order or out of range")));
            }
            list.push(Posting { doc, tf });
        }
        postings.insert(term, list);
    }
    index.postings = postings;
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut ix = InvertedIndex::new(Bm25Params::new(0.9, 0.4).unwrap());
        ix.add("fc-1", "मोदी की फर्जी तस्वीर").unwrap();
        ix.add("fc-2", "fake picture of Modi, fake").unwrap();
        ix.add("empty", "").unwrap();
        let mut buf = Vec::new();
        write_index(&ix, &mut buf).unwrap();
        let back = read_index(buf.as_slice()).unwrap();
        assert_eq!(back, ix);
        assert_eq!(back.search("fake modi", 5), ix.search("fake modi", 5));

        let mut again = Vec::new();
        write_index(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn rejects_other_files() {
        assert!(read_index(&b"dim=3\n"[..]).is_err());
        let mut buf = Vec::new();
        write_index(&InvertedIndex::default(), &mut buf).unwrap();
        buf[8] = 9;
        let err = read_index(buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }
}
