//! HTTP embedding service client: `POST {"texts": [...]}` answered by
//! `{"vectors": [[...], ...]}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{EmbedInput, EmbeddingProvider, ProviderError};
use super::EmbeddingVector;

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

pub struct RemoteProvider {
    name: String,
    url: String,
    dim: usize,
    agent: ureq::Agent,
}

impl RemoteProvider {
    /// Connects to `url`. When `dim` is not given, one probe request learns it.
    pub fn new(url: &str, dim: Option<usize>) -> Result<Self, ProviderError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        let mut p = RemoteProvider { name: format!("remote:{url}"), url: url.to_string(), dim: 0, agent };
        p.dim = match dim {
            Some(d) => d,
            None => {
                let probe = p.request(&[EmbedInput::key("probe")])?;
                probe.first().map(Vec::len).filter(|&d| d > 0).ok_or_else(|| {
                    ProviderError::Invalid { index: 0, reason: "probe returned no vector".into() }
                })?
            }
        };
        Ok(p)
    }

    fn request(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = EmbedRequest { texts: inputs.iter().map(|i| i.text).collect() };
        let resp: EmbedResponse = self
            .agent
            .post(&self.url)
            .send_json(&body)
            .map_err(|e| ProviderError::Unreachable(e.to_string()))?
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Unreachable(format!("bad response body: {e}")))?;
        if resp.vectors.len() != inputs.len() {
            return Err(ProviderError::CountMismatch { expected: inputs.len(), got: resp.vectors.len() });
        }
        Ok(resp.vectors)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, inputs: &[EmbedInput<'_>]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        self.request(inputs)?
            .into_iter()
            .enumerate()
            .map(|(index, v)| {
                if v.len() != self.dim {
                    return Err(ProviderError::DimensionMismatch { index, expected: self.dim, got: v.len() });
                }
                EmbeddingVector::new(v).map_err(|e| ProviderError::Invalid { index, reason: e.to_string() })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::embed_batch;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Answers `n` requests with a vector `[len(text), 1, 0]` per text.
    fn serve(n: usize) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let vectors: Vec<Vec<f32>> = req["texts"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|t| vec![t.as_str().unwrap().chars().count() as f32, 1.0, 0.0])
                    .collect();
                let out = serde_json::json!({ "vectors": vectors }).to_string();
                write!(
                    stream,
                    "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    out.len(),
                    out
                )
                .unwrap();
            }
        });
        format!("http://{addr}/embed")
    }

    #[test]
    fn returns_one_vector_per_input() {
        let url = serve(2);
        let p = RemoteProvider::new(&url, None).unwrap();
        assert_eq!(p.dim(), 3);
        let texts = ["a", "bbb", "cc"];
        let inputs: Vec<_> = texts.iter().map(|t| EmbedInput::key(t)).collect();
        let out = embed_batch(&p, &inputs).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[1].as_slice(), &[3.0, 1.0, 0.0]);
    }

    #[test]
    fn unreachable_is_reported() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let p = RemoteProvider::new(&format!("http://{addr}/embed"), Some(3)).unwrap();
        assert!(matches!(p.embed(&[EmbedInput::key("x")]), Err(ProviderError::Unreachable(_))));
    }
}
