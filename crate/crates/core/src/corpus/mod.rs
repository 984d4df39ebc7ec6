//! Messages, fact-check reports, parallel text and annotation records.
//!
//! All on-disk formats are UTF-8 and line-delimited: one JSON record per
//! line for messages and annotations, `source<TAB>target` for bitext.

mod labels;
mod pii;

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use labels::{
    majority_label, ClaimLabel, MajorityLabel, SimilarityLabel, COLLAPSED_CATEGORIES,
};
pub use pii::{normalize_whitespace, scrub_pii, EMAIL_TOKEN, PHONE_TOKEN, PLATE_TOKEN};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("duplicate message id `{0}`")]
    DuplicateId(String),
    #[error("annotation record has no labels")]
    NoLabels,
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("pair references the same id `{0}` twice")]
    SelfPair(String),
    #[error("line {line}: parallel pair has an empty side")]
    EmptyParallelSide { line: usize },
    #[error("invalid timestamp `{0}`")]
    Timestamp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Tipline,
    PublicGroup,
    FactCheck,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Tipline => "tipline",
            Source::PublicGroup => "public_group",
            Source::FactCheck => "fact_check",
        })
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tipline" => Ok(Source::Tipline),
            "public_group" => Ok(Source::PublicGroup),
            "fact_check" => Ok(Source::FactCheck),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// RFC-3339 timestamp that keeps its original spelling so exports are
/// byte-identical to the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timestamp {
    raw: String,
    at: DateTime<Utc>,
}

impl Timestamp {
    pub fn parse(raw: &str) -> Result<Self, CorpusError> {
        let at = DateTime::parse_from_rfc3339(raw)
            .map_err(|_| CorpusError::Timestamp(raw.to_string()))?
            .with_timezone(&Utc);
        Ok(Timestamp { raw: raw.to_string(), at })
    }

    pub fn now() -> Self {
        let at = Utc::now();
        Timestamp { raw: at.to_rfc3339(), at }
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.at
    }

    pub fn as_str(&self) -> &str {
        &self.raw
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.raw)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Timestamp::parse(&raw).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub submitted_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactCheckReport {
    pub id: String,
    pub headline: String,
    #[serde(default)]
    pub lead: Option<String>,
    pub publish_date: NaiveDate,
    #[serde(default)]
    pub verdict: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
}

impl FactCheckReport {
    /// The matchable text of a report: headline, then lead when present.
    pub fn to_message(&self, language: &str) -> Message {
        let text = match &self.lead {
            Some(lead) if !lead.trim().is_empty() => format!("{} {}", self.headline, lead),
            _ => self.headline.clone(),
        };
        Message {
            id: self.id.clone(),
            text: normalize_whitespace(&text),
            source: Source::FactCheck,
            language: language.to_string(),
            submitted_at: None,
        }
    }
}

/// One line of bitext: a sentence and its translation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParallelPair {
    pub source: String,
    pub target: String,
}

impl ParallelPair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Option<Self> {
        let (source, target) = (source.into(), target.into());
        if source.trim().is_empty() || target.trim().is_empty() {
            return None;
        }
        Some(ParallelPair { source, target })
    }
}

/// Reads `source<TAB>target` lines. Blank lines are ignored.
pub fn read_parallel(path: &Path) -> Result<Vec<ParallelPair>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or_else(|| CorpusError::Malformed {
            line: i + 1,
            reason: "expected source<TAB>target".into(),
        })?;
        out.push(ParallelPair::new(s, t).ok_or(CorpusError::EmptyParallelSide { line: i + 1 })?);
    }
    Ok(out)
}

/// Two messages plus every annotator's similarity judgement.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPair {
    pub id_a: String,
    pub id_b: String,
    pub labels: Vec<SimilarityLabel>,
    pub majority: MajorityLabel,
    pub language: String,
}

impl AnnotatedPair {
    pub fn new(
        id_a: impl Into<String>,
        id_b: impl Into<String>,
        labels: Vec<SimilarityLabel>,
        language: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let (id_a, id_b) = (id_a.into(), id_b.into());
        if id_a == id_b {
            return Err(CorpusError::SelfPair(id_a));
        }
        let majority = majority_label(&labels)?;
        Ok(AnnotatedPair { id_a, id_b, labels, majority, language: language.into() })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AnnotatedPairRecord {
    id_a: String,
    id_b: String,
    labels: Vec<SimilarityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    language: Option<String>,
}

/// Whether a single message contains a claim, per annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimLabelRecord {
    pub message_id: String,
    #[serde(rename = "labels")]
    pub annotator_labels: Vec<ClaimLabel>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

pub fn read_annotated_pairs(path: &Path) -> Result<Vec<AnnotatedPair>, CorpusError> {
    read_jsonl::<AnnotatedPairRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            AnnotatedPair::new(r.id_a, r.id_b, r.labels, r.language.unwrap_or_else(|| "und".into()))
                .map_err(|e| CorpusError::Malformed { line, reason: e.to_string() })
        })
        .collect()
}

pub fn write_annotated_pairs<W: Write>(pairs: &[AnnotatedPair], mut w: W) -> io::Result<()> {
    for p in pairs {
        let rec = AnnotatedPairRecord {
            id_a: p.id_a.clone(),
            id_b: p.id_b.clone(),
            labels: p.labels.clone(),
            language: Some(p.language.clone()),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_claim_labels(path: &Path) -> Result<Vec<ClaimLabelRecord>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

pub fn read_fact_checks(path: &Path) -> Result<Vec<FactCheckReport>, CorpusError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

/// Count of pairs per majority label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelDistribution {
    pub counts: Vec<(MajorityLabel, usize)>,
    pub total: usize,
}

impl LabelDistribution {
    pub fn get(&self, label: MajorityLabel) -> usize {
        self.counts.iter().find(|(l, _)| *l == label).map_or(0, |(_, c)| *c)
    }
}

impl fmt::Display for LabelDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (label, count) in &self.counts {
            let pct = if self.total == 0 { 0.0 } else { 100.0 * *count as f64 / self.total as f64 };
            writeln!(f, "{:<3} {:>6} ({:>3.0}%)", label.short(), count, pct)?;
        }
        write!(f, "all {:>6}", self.total)
    }
}

pub fn label_distribution(pairs: &[AnnotatedPair]) -> LabelDistribution {
    let counts = MajorityLabel::ALL
        .iter()
        .map(|&l| (l, pairs.iter().filter(|p| p.majority == l).count()))
        .collect();
    LabelDistribution { counts, total: pairs.len() }
}

#[derive(Debug, Deserialize)]
struct MessageRecord {
    id: String,
    text: String,
    #[serde(default)]
    source: Option<Source>,
    #[serde(default)]
    language: Option<String>,
    #[serde(default)]
    submitted_at: Option<Timestamp>,
}

/// An immutable, id-addressable set of messages. Share it behind an `Arc`
/// for concurrent readers.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    messages: Vec<Message>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_messages(messages: Vec<Message>) -> Result<Self, CorpusError> {
        let mut c = Corpus::new();
        for m in messages {
            c.insert(m)?;
        }
        Ok(c)
    }

    pub fn insert(&mut self, message: Message) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&message.id) {
            return Err(CorpusError::DuplicateId(message.id));
        }
        self.by_id.insert(message.id.clone(), self.messages.len());
        self.messages.push(message);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Message> {
        self.by_id.get(id).map(|&i| &self.messages[i])
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Message> {
        self.messages.iter()
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    /// Writes one JSON record per message.
    pub fn export<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in &self.messages {
            serde_json::to_writer(&mut w, m)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// A record dropped during ingestion because nothing was left after scrubbing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: String,
}

#[derive(Debug)]
pub struct Ingested {
    pub corpus: Corpus,
    pub skipped: Vec<SkippedRecord>,
}

/// Loads a line-delimited message file. `source` is used for records that
/// carry no source of their own.
pub fn ingest_messages(path: &Path, source: Source) -> Result<Ingested, CorpusError> {
    let mut corpus = Corpus::new();
    let mut skipped = Vec::new();
    for (line, rec) in read_jsonl::<MessageRecord>(path)? {
        let text = normalize_whitespace(&scrub_pii(&rec.text));
        if !has_content(&text) {
            tracing::warn!(line, id = %rec.id, "record has no text left after scrubbing; skipped");
            skipped.push(SkippedRecord { line, id: rec.id });
            continue;
        }
        corpus.insert(Message {
            id: rec.id,
            text,
            source: rec.source.unwrap_or(source),
            language: rec.language.unwrap_or_else(|| "und".to_string()),
            submitted_at: rec.submitted_at,
        })?;
    }
    Ok(Ingested { corpus, skipped })
}

/// False when nothing but placeholder tokens and whitespace remains.
pub fn has_content(scrubbed: &str) -> bool {
    let mut rest = scrubbed.to_string();
    for token in [PHONE_TOKEN, EMAIL_TOKEN, PLATE_TOKEN] {
        rest = rest.replace(token, " ");
    }
    !rest.trim().is_empty()
}

/// Reads a corpus that was already ingested and exported; no scrubbing.
pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    Corpus::from_messages(read_jsonl::<Message>(path)?.into_iter().map(|(_, m)| m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn ingest_three_records() {
        let f = write_tmp(&[
            r#"{"id":"m1","text":"Modi fake picture","language":"hi"}"#,
            r#"{"id":"m2","text":"  second   message ","source":"public_group"}"#,
            r#"{"id":"m3","text":"third","submitted_at":"2019-04-11T08:00:00Z"}"#,
        ]);
        let ing = ingest_messages(f.path(), Source::Tipline).unwrap();
        assert_eq!(ing.corpus.len(), 3);
        assert!(ing.skipped.is_empty());
        let m2 = ing.corpus.get("m2").unwrap();
        assert_eq!(m2.text, "second message");
        assert_eq!(m2.source, Source::PublicGroup);
        assert_eq!(ing.corpus.get("m1").unwrap().source, Source::Tipline);
        assert_eq!(ing.corpus.get("m1").unwrap().language, "hi");
        assert_eq!(ing.corpus.get("m2").unwrap().language, "und");
    }

    #[test]
    fn duplicate_id_is_named() {
        let f = write_tmp(&[r#"{"id":"dup","text":"a"}"#, r#"{"id":"dup","text":"b"}"#]);
        let err = ingest_messages(f.path(), Source::Tipline).unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicateId(id) if id == "dup"));
        assert!(err.to_string().contains("dup"));
    }

    #[test]
    fn phone_only_record_is_skipped() {
        let f = write_tmp(&[r#"{"id":"p","text":"+91 98765 43210"}"#]);
        let ing = ingest_messages(f.path(), Source::Tipline).unwrap();
        assert_eq!(ing.corpus.len(), 0);
        assert_eq!(ing.skipped, vec![SkippedRecord { line: 1, id: "p".into() }]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp(&[r#"{"id":"a","text":"ok"}"#, "", r#"{"id":"b"}"#]);
        match ingest_messages(f.path(), Source::Tipline).unwrap_err() {
            CorpusError::Malformed { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn export_round_trips_fields() {
        let line = r#"{"id":"m1","text":"a claim","source":"fact_check","language":"bn","submitted_at":"2019-04-11T08:00:00+05:30"}"#;
        let f = write_tmp(&[line]);
        let ing = ingest_messages(f.path(), Source::Tipline).unwrap();
        let mut out = Vec::new();
        ing.corpus.export(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap().trim_end(), line);
    }

    #[test]
    fn annotated_pairs_and_distribution() {
        let f = write_tmp(&[
            r#"{"id_a":"a","id_b":"b","labels":["very_similar","vs","sd"],"language":"hi"}"#,
            r#"{"id_a":"a","id_b":"c","labels":["vd","vd","vd"]}"#,
            r#"{"id_a":"b","id_b":"c","labels":["vs","ss","sd"]}"#,
        ]);
        let pairs = read_annotated_pairs(f.path()).unwrap();
        assert_eq!(pairs[0].majority, MajorityLabel::VerySimilar);
        assert_eq!(pairs[1].language, "und");
        let d = label_distribution(&pairs);
        assert_eq!(d.get(MajorityLabel::VerySimilar), 1);
        assert_eq!(d.get(MajorityLabel::VeryDissimilar), 1);
        assert_eq!(d.get(MajorityLabel::NoMajority), 1);
        assert_eq!(d.total, 3);
    }

    #[test]
    fn self_pair_rejected() {
        assert!(matches!(
            AnnotatedPair::new("a", "a", vec![SimilarityLabel::VerySimilar; 2], "hi"),
            Err(CorpusError::SelfPair(_))
        ));
    }

    #[test]
    fn parallel_reading() {
        let f = write_tmp(&["hello\tनमस्ते", "", "bye\tअलविदा"]);
        let pairs = read_parallel(f.path()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].target, "अलविदा");
        let bad = write_tmp(&["hello\t "]);
        assert!(matches!(
            read_parallel(bad.path()),
            Err(CorpusError::EmptyParallelSide { line: 1 })
        ));
    }

    #[test]
    fn fact_check_text() {
        let r = FactCheckReport {
            id: "fc1".into(),
            headline: "Viral photo is old".into(),
            lead: Some(" It dates from 2014. ".into()),
            publish_date: NaiveDate::from_ymd_opt(2019, 4, 1).unwrap(),
            verdict: Some("false".into()),
            url: None,
        };
        assert_eq!(r.to_message("en").text, "Viral photo is old It dates from 2014.");
    }
}
