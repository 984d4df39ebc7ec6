//! Matching state and the single writer that mutates it.
//!
//! `State` is a pure function of the events applied to it. `Engine` owns the
//! log: every change is appended and synced before it is applied, so a
//! restart replays to exactly the state callers were told about.

use std::collections::{BTreeMap, HashMap};
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use claim_match::bm25::{Bm25Params, InvertedIndex};
use claim_match::cluster::{ClusterError, ClusterId, ClusterState, ClusterSummary, Representatives};
use claim_match::corpus::{has_content, normalize_whitespace, scrub_pii, Message, Source, Timestamp};
use claim_match::embedding::{embed_batch, EmbedInput, EmbeddingProvider, EmbeddingStore, EmbeddingVector};
use claim_match::matcher::{rerank, Decision, MatchConfig, MatchError, RankedCandidate};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::events::{Event, EventLog, Snapshot, SnapshotMessage};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("message has no text left after scrubbing")]
    EmptyText,
    #[error("embedding provider unavailable; message queued as `{queued}`: {reason}")]
    ProviderUnavailable { queued: String, reason: String },
    #[error("provider returned a zero embedding")]
    ZeroEmbedding,
    #[error("unknown review {0}")]
    UnknownReview(u64),
    #[error("review {id} already {state}")]
    AlreadyResolved { id: u64, state: ReviewState },
    #[error("unknown message `{0}`")]
    UnknownMessage(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("state does not match the event log: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<ClusterError> for EngineError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::UnknownItem(id) => EngineError::UnknownMessage(id),
            ClusterError::UnknownCluster(c) => EngineError::UnknownCluster(c),
            other => EngineError::Corrupt(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewState {
    Pending,
    Confirmed,
    Rejected,
}

impl std::fmt::Display for ReviewState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReviewState::Pending => "pending",
            ReviewState::Confirmed => "confirmed",
            ReviewState::Rejected => "rejected",
        })
    }
}

impl std::str::FromStr for ReviewState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(ReviewState::Pending),
            "confirmed" => Ok(ReviewState::Confirmed),
            "rejected" => Ok(ReviewState::Rejected),
            other => Err(format!("unknown review state `{other}`")),
        }
    }
}

/// A suggested match waiting for (or past) a human verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub id: u64,
    pub query_id: String,
    pub candidate_id: String,
    pub cosine: f64,
    pub state: ReviewState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<Timestamp>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_at: Option<Timestamp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedMessage {
    pub message: Message,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submission {
    pub text: String,
    #[serde(default)]
    pub language: Option<String>,
    #[serde(default)]
    pub source: Option<Source>,
    #[serde(default)]
    pub submitted_at: Option<Timestamp>,
}

impl Submission {
    pub fn new(text: impl Into<String>) -> Self {
        Submission { text: text.into(), language: None, source: None, submitted_at: None }
    }

    pub fn language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }
}

/// A reviewer's call on a suggestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewVerdict {
    Confirm,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub candidate_id: String,
    pub cosine: f64,
    /// The review item created for it; `None` in previews.
    pub review_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubmitOutcome {
    /// `None` for previews, which store nothing.
    pub message_id: Option<String>,
    pub decision: Decision,
    /// Cluster the message was attached to on an auto-match.
    pub attached_cluster: Option<ClusterId>,
    /// The message's own cluster after filing.
    pub cluster: Option<ClusterId>,
    pub suggestions: Vec<Suggestion>,
    /// Full reranked candidate list.
    pub candidates: Vec<RankedCandidate>,
}

/// A review with both texts, for the console queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReviewView {
    #[serde(flatten)]
    pub review: ReviewItem,
    pub query_text: String,
    pub candidate_text: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterDetail {
    pub id: ClusterId,
    pub size: usize,
    pub members: Vec<Message>,
    pub representatives: Representatives,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub provider: String,
    pub messages: usize,
    pub clusters: usize,
    pub pending_reviews: usize,
    pub queued: usize,
    pub events: usize,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub matching: MatchConfig,
    pub bm25: Bm25Params,
    /// Write a snapshot after this many events since the last one.
    pub snapshot_every: usize,
    /// Most review items created for one message.
    pub max_suggestions: usize,
    pub representative_seed: u64,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            matching: MatchConfig::default(),
            bm25: Bm25Params::default(),
            snapshot_every: 100,
            max_suggestions: 5,
            representative_seed: 0,
        }
    }

    fn log_path(&self) -> PathBuf {
        self.data_dir.join("events.jsonl")
    }

    fn snapshot_path(&self) -> PathBuf {
        self.data_dir.join("snapshot.json")
    }
}

fn message_seq(id: &str) -> Option<u64> {
    id.strip_prefix('m')?.parse().ok()
}

/// Everything the service knows, rebuilt from events alone.
#[derive(Debug, Clone)]
pub struct State {
    messages: Vec<Message>,
    by_id: HashMap<String, usize>,
    embeddings: HashMap<String, Vec<f32>>,
    index: InvertedIndex,
    store: EmbeddingStore,
    clusters: ClusterState<f32>,
    reviews: BTreeMap<u64, ReviewItem>,
    queued: BTreeMap<u64, QueuedMessage>,
    next_message: u64,
    next_review: u64,
}

impl State {
    pub fn new(dim: usize, bm25: Bm25Params, cluster_threshold: f64) -> Self {
        State {
            messages: Vec::new(),
            by_id: HashMap::new(),
            embeddings: HashMap::new(),
            index: InvertedIndex::new(bm25),
            store: EmbeddingStore::new(dim),
            clusters: ClusterState::new(cluster_threshold as f32),
            reviews: BTreeMap::new(),
            queued: BTreeMap::new(),
            next_message: 0,
            next_review: 0,
        }
    }

    pub fn message(&self, id: &str) -> Option<&Message> {
        self.by_id.get(id).map(|&i| &self.messages[i])
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn cluster_of(&self, id: &str) -> Option<ClusterId> {
        self.clusters.cluster_of(id)
    }

    pub fn assignments(&self) -> Vec<(String, ClusterId)> {
        self.clusters.assignments()
    }

    pub fn reviews(&self) -> impl Iterator<Item = &ReviewItem> {
        self.reviews.values()
    }

    pub fn review(&self, id: u64) -> Option<&ReviewItem> {
        self.reviews.get(&id)
    }

    pub fn queued(&self) -> impl Iterator<Item = &QueuedMessage> {
        self.queued.values()
    }

    fn add_message(&mut self, message: &Message, embedding: &[f32], cluster: Option<ClusterId>) -> Result<ClusterId, EngineError> {
        if self.by_id.contains_key(&message.id) {
            return Err(EngineError::Corrupt(format!("message `{}` added twice", message.id)));
        }
        let v = EmbeddingVector::new(embedding.to_vec()).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        let c = self.clusters.insert(&message.id, &v, cluster)?;
        self.index.add(&message.id, &message.text).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        self.store.insert(message.id.clone(), v).map_err(|e| EngineError::Corrupt(e.to_string()))?;
        self.embeddings.insert(message.id.clone(), embedding.to_vec());
        self.by_id.insert(message.id.clone(), self.messages.len());
        self.messages.push(message.clone());
        Ok(c)
    }

    fn bump_message(&mut self, id: &str) {
        if let Some(n) = message_seq(id) {
            self.next_message = self.next_message.max(n + 1);
        }
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        match event {
            Event::MessageAdded { message, embedding, attached_to, .. } => {
                let cluster = match attached_to {
                    Some(a) => Some(self.clusters.cluster_of(a).ok_or_else(|| EngineError::UnknownMessage(a.clone()))?),
                    None => None,
                };
                self.add_message(message, embedding, cluster)?;
                self.bump_message(&message.id);
                if let Some(n) = message_seq(&message.id) {
                    self.queued.remove(&n);
                }
            }
            Event::MessageQueued { message, reason } => {
                let n = message_seq(&message.id)
                    .ok_or_else(|| EngineError::Corrupt(format!("queued id `{}` is not m<seq>", message.id)))?;
                self.queued.insert(n, QueuedMessage { message: message.clone(), reason: reason.clone() });
                self.bump_message(&message.id);
            }
            Event::ReviewCreated { review } => {
                self.next_review = self.next_review.max(review.id + 1);
                self.reviews.insert(review.id, review.clone());
            }
            Event::ReviewResolved { id, verdict, reviewer, at } => {
                let r = self.reviews.get_mut(id).ok_or(EngineError::UnknownReview(*id))?;
                if r.state != ReviewState::Pending {
                    return Err(EngineError::AlreadyResolved { id: *id, state: r.state });
                }
                r.state = match verdict {
                    ReviewVerdict::Confirm => ReviewState::Confirmed,
                    ReviewVerdict::Reject => ReviewState::Rejected,
                };
                r.resolved_by = reviewer.clone();
                r.resolved_at = Some(at.clone());
                if *verdict == ReviewVerdict::Confirm {
                    let (q, c) = (r.query_id.clone(), r.candidate_id.clone());
                    self.clusters.merge_items(&q, &c)?;
                }
            }
            Event::ManualMatch { id_a, id_b, .. } => {
                self.clusters.merge_items(id_a, id_b)?;
            }
        }
        Ok(())
    }

    /// BM25 candidates for `text`, reranked by cosine to `embedding`.
    pub fn rank(&self, text: &str, embedding: &EmbeddingVector, config: &MatchConfig) -> Result<Vec<RankedCandidate>, EngineError> {
        let hits = self.index.search(text, config.depth);
        Ok(rerank(embedding, &hits, &self.store)?.candidates)
    }

    /// The events that file `message` under the policy bands.
    fn route(
        &self,
        message: Message,
        embedding: &EmbeddingVector,
        config: &ServiceConfig,
        now: &Timestamp,
    ) -> Result<(Vec<Event>, Vec<RankedCandidate>, Decision), EngineError> {
        let candidates = self.rank(&message.text, embedding, &config.matching)?;
        let decision = config.matching.decide(candidates.first().map(|c| c.cosine));
        let attached_to = match decision {
            Decision::AutoMatched => Some(candidates[0].doc_id.clone()),
            _ => None,
        };
        let query_id = message.id.clone();
        let mut events = vec![Event::MessageAdded {
            message,
            embedding: embedding.as_slice().to_vec(),
            decision,
            attached_to,
        }];
        if decision == Decision::Suggested {
            let band = candidates.iter().filter(|c| config.matching.in_review_band(c.cosine));
            for (i, c) in band.take(config.max_suggestions).enumerate() {
                events.push(Event::ReviewCreated {
                    review: ReviewItem {
                        id: self.next_review + i as u64,
                        query_id: query_id.clone(),
                        candidate_id: c.doc_id.clone(),
                        cosine: c.cosine,
                        state: ReviewState::Pending,
                        created_at: Some(now.clone()),
                        resolved_by: None,
                        resolved_at: None,
                    },
                });
            }
        }
        Ok((events, candidates, decision))
    }

    fn snapshot(&self, events: usize) -> Snapshot {
        Snapshot {
            events,
            next_message: self.next_message,
            next_review: self.next_review,
            next_cluster: self.clusters.next_cluster_id(),
            messages: self
                .messages
                .iter()
                .map(|m| SnapshotMessage {
                    message: m.clone(),
                    embedding: self.embeddings[&m.id].clone(),
                    cluster: self.clusters.cluster_of(&m.id).expect("every message is clustered"),
                })
                .collect(),
            reviews: self.reviews.values().cloned().collect(),
            queued: self.queued.values().cloned().collect(),
        }
    }

    fn from_snapshot(snap: &Snapshot, dim: usize, config: &ServiceConfig) -> Result<Self, EngineError> {
        let mut s = State::new(dim, config.bm25, config.matching.suggest_threshold);
        for m in &snap.messages {
            let v = EmbeddingVector::new(m.embedding.clone()).map_err(|e| EngineError::Corrupt(e.to_string()))?;
            s.clusters.restore(&m.message.id, &v, m.cluster)?;
            s.index.add(&m.message.id, &m.message.text).map_err(|e| EngineError::Corrupt(e.to_string()))?;
            s.store.insert(m.message.id.clone(), v).map_err(|e| EngineError::Corrupt(e.to_string()))?;
            s.embeddings.insert(m.message.id.clone(), m.embedding.clone());
            s.by_id.insert(m.message.id.clone(), s.messages.len());
            s.messages.push(m.message.clone());
        }
        s.clusters.reserve_cluster_ids(snap.next_cluster);
        for r in &snap.reviews {
            s.reviews.insert(r.id, r.clone());
        }
        for q in &snap.queued {
            let n = message_seq(&q.message.id).ok_or_else(|| EngineError::Corrupt(q.message.id.clone()))?;
            s.queued.insert(n, q.clone());
        }
        s.next_message = snap.next_message;
        s.next_review = snap.next_review;
        Ok(s)
    }
}

/// State plus its durable log.
#[derive(Debug)]
pub struct Engine {
    state: State,
    log: EventLog,
    config: ServiceConfig,
    since_snapshot: usize,
}

impl Engine {
    /// Loads the latest snapshot, if any, and replays the log past it.
    pub fn open(config: ServiceConfig, dim: usize) -> Result<Self, EngineError> {
        config.matching.validate()?;
        if config.snapshot_every == 0 || config.max_suggestions == 0 {
            return Err(EngineError::Invalid("snapshot interval and suggestion count must be positive".into()));
        }
        std::fs::create_dir_all(&config.data_dir)?;
        let (log, events) = EventLog::open(&config.log_path())?;
        let (mut state, covered) = match Snapshot::read(&config.snapshot_path())? {
            Some(snap) if snap.events <= events.len() => (State::from_snapshot(&snap, dim, &config)?, snap.events),
            Some(snap) => {
                warn!(snapshot = snap.events, log = events.len(), "snapshot is ahead of the log; replaying from scratch");
                (State::new(dim, config.bm25, config.matching.suggest_threshold), 0)
            }
            None => (State::new(dim, config.bm25, config.matching.suggest_threshold), 0),
        };
        for e in &events[covered..] {
            state.apply(e)?;
        }
        info!(events = events.len(), from_snapshot = covered, messages = state.messages.len(), "state restored");
        Ok(Engine { state, since_snapshot: events.len() - covered, log, config })
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn event_count(&self) -> usize {
        self.log.len()
    }

    /// Persists `events`, then applies them. Callers check preconditions
    /// first, so applying a logged event cannot fail short of a bug.
    pub fn commit(&mut self, events: Vec<Event>) -> Result<(), EngineError> {
        self.log.append(&events)?;
        for e in &events {
            self.state.apply(e)?;
        }
        self.since_snapshot += events.len();
        if self.since_snapshot >= self.config.snapshot_every {
            self.write_snapshot()?;
        }
        Ok(())
    }

    pub fn write_snapshot(&mut self) -> Result<(), EngineError> {
        self.state.snapshot(self.log.len()).write(&self.config.snapshot_path())?;
        self.since_snapshot = 0;
        Ok(())
    }

    fn allocate_id(&self) -> String {
        format!("m{}", self.state.next_message)
    }

    /// Files an embedded message. The id must already be allocated.
    fn file(&mut self, message: Message, embedding: &EmbeddingVector, now: &Timestamp) -> Result<SubmitOutcome, EngineError> {
        let id = message.id.clone();
        let (events, candidates, decision) = self.state.route(message, embedding, &self.config, now)?;
        let suggestions = events
            .iter()
            .filter_map(|e| match e {
                Event::ReviewCreated { review } => Some(Suggestion {
                    candidate_id: review.candidate_id.clone(),
                    cosine: review.cosine,
                    review_id: Some(review.id),
                }),
                _ => None,
            })
            .collect();
        self.commit(events)?;
        let cluster = self.state.cluster_of(&id);
        Ok(SubmitOutcome {
            message_id: Some(id),
            decision,
            attached_cluster: cluster.filter(|_| decision == Decision::AutoMatched),
            cluster,
            suggestions,
            candidates,
        })
    }
}

pub type Clock = Arc<dyn Fn() -> Timestamp + Send + Sync>;

/// The engine behind a lock, with the provider used to embed submissions.
pub struct Service {
    engine: Mutex<Engine>,
    provider: Arc<dyn EmbeddingProvider>,
    clock: Clock,
}

impl Service {
    pub fn open(config: ServiceConfig, provider: Arc<dyn EmbeddingProvider>) -> Result<Self, EngineError> {
        let engine = Engine::open(config, provider.dim())?;
        Ok(Service { engine: Mutex::new(engine), provider, clock: Arc::new(Timestamp::now) })
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Locks the engine. A panic in another request does not poison the
    /// state, since every mutation is validated before it is applied.
    pub fn engine(&self) -> MutexGuard<'_, Engine> {
        self.engine.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn embed(&self, id: &str, text: &str) -> Result<EmbeddingVector, String> {
        let v = embed_batch(self.provider.as_ref(), &[EmbedInput::new(id, text)]).map_err(|e| e.to_string())?;
        Ok(v.into_iter().next().expect("one input, one vector"))
    }

    fn prepare(&self, sub: Submission) -> Result<Message, EngineError> {
        let text = normalize_whitespace(&scrub_pii(&sub.text));
        if !has_content(&text) {
            return Err(EngineError::EmptyText);
        }
        Ok(Message {
            id: String::new(),
            text,
            source: sub.source.unwrap_or(Source::Tipline),
            language: sub.language.unwrap_or_else(|| "und".to_string()),
            submitted_at: Some(sub.submitted_at.unwrap_or_else(|| (self.clock)())),
        })
    }

    /// Scrubs, embeds, ranks and files a message. The outcome is durable by
    /// the time this returns. A provider failure queues the message instead.
    pub fn submit(&self, sub: Submission) -> Result<SubmitOutcome, EngineError> {
        let mut message = self.prepare(sub)?;
        let embedded = self.embed("", &message.text);
        let mut engine = self.engine();
        message.id = engine.allocate_id();
        match embedded {
            Ok(v) if v.is_zero() => Err(EngineError::ZeroEmbedding),
            Ok(v) => engine.file(message, &v, &(self.clock)()),
            Err(reason) => {
                warn!(id = %message.id, %reason, "provider failed; message queued");
                let queued = message.id.clone();
                engine.commit(vec![Event::MessageQueued { message, reason: reason.clone() }])?;
                Err(EngineError::ProviderUnavailable { queued, reason })
            }
        }
    }

    /// Ranks a message against the current state without storing anything.
    pub fn preview(&self, sub: Submission) -> Result<SubmitOutcome, EngineError> {
        let message = self.prepare(sub)?;
        let v = self
            .embed("", &message.text)
            .map_err(|reason| EngineError::ProviderUnavailable { queued: String::new(), reason })?;
        if v.is_zero() {
            return Err(EngineError::ZeroEmbedding);
        }
        let engine = self.engine();
        let candidates = engine.state.rank(&message.text, &v, &engine.config.matching)?;
        let config = &engine.config;
        let decision = config.matching.decide(candidates.first().map(|c| c.cosine));
        let attached_cluster = match decision {
            Decision::AutoMatched => engine.state.cluster_of(&candidates[0].doc_id),
            _ => None,
        };
        let suggestions = match decision {
            Decision::Suggested => candidates
                .iter()
                .filter(|c| config.matching.in_review_band(c.cosine))
                .take(config.max_suggestions)
                .map(|c| Suggestion { candidate_id: c.doc_id.clone(), cosine: c.cosine, review_id: None })
                .collect(),
            _ => Vec::new(),
        };
        Ok(SubmitOutcome { message_id: None, decision, attached_cluster, cluster: None, suggestions, candidates })
    }

    /// Retries queued messages in arrival order, stopping at the first
    /// provider failure. Returns how many were filed.
    pub fn drain_queue(&self) -> Result<usize, EngineError> {
        let pending: Vec<Message> = self.engine().state.queued().map(|q| q.message.clone()).collect();
        let mut filed = 0;
        for m in pending {
            let v = match self.embed("", &m.text) {
                Ok(v) if !v.is_zero() => v,
                Ok(_) => {
                    warn!(id = %m.id, "queued message embeds to zero; left queued");
                    continue;
                }
                Err(reason) => {
                    warn!(%reason, "provider still failing");
                    break;
                }
            };
            let mut engine = self.engine();
            if engine.state.message(&m.id).is_some() {
                continue;
            }
            engine.file(m, &v, &(self.clock)())?;
            filed += 1;
        }
        Ok(filed)
    }

    pub fn resolve_review(&self, id: u64, verdict: ReviewVerdict, reviewer: Option<&str>) -> Result<ReviewItem, EngineError> {
        let mut engine = self.engine();
        let r = engine.state.review(id).ok_or(EngineError::UnknownReview(id))?;
        if r.state != ReviewState::Pending {
            return Err(EngineError::AlreadyResolved { id, state: r.state });
        }
        engine.commit(vec![Event::ReviewResolved { id, verdict, reviewer: reviewer.map(str::to_string), at: (self.clock)() }])?;
        Ok(engine.state.review(id).cloned().expect("just resolved"))
    }

    /// Puts two messages in one cluster. Already together is a no-op.
    pub fn manual_match(&self, id_a: &str, id_b: &str, reviewer: Option<&str>) -> Result<ClusterId, EngineError> {
        let mut engine = self.engine();
        let ca = engine.state.cluster_of(id_a).ok_or_else(|| EngineError::UnknownMessage(id_a.to_string()))?;
        let cb = engine.state.cluster_of(id_b).ok_or_else(|| EngineError::UnknownMessage(id_b.to_string()))?;
        if ca == cb {
            return Ok(ca);
        }
        engine.commit(vec![Event::ManualMatch {
            id_a: id_a.to_string(),
            id_b: id_b.to_string(),
            reviewer: reviewer.map(str::to_string),
            at: (self.clock)(),
        }])?;
        Ok(ca.min(cb))
    }

    /// Reviews in `state` (all when `None`), highest cosine first, newest
    /// first among equals.
    pub fn reviews(&self, state: Option<ReviewState>) -> Vec<ReviewView> {
        let engine = self.engine();
        let s = &engine.state;
        let mut out: Vec<ReviewView> = s
            .reviews()
            .filter(|r| state.is_none_or(|st| r.state == st))
            .map(|r| {
                let q = s.message(&r.query_id).expect("review refers to stored messages");
                let c = s.message(&r.candidate_id).expect("review refers to stored messages");
                ReviewView {
                    review: r.clone(),
                    query_text: q.text.clone(),
                    candidate_text: c.text.clone(),
                    language: q.language.clone(),
                }
            })
            .collect();
        out.sort_by(|a, b| b.review.cosine.total_cmp(&a.review.cosine).then(b.review.id.cmp(&a.review.id)));
        out
    }

    pub fn clusters(&self, min_size: usize) -> Vec<ClusterSummary> {
        self.engine().state.clusters.clusters_of_size(min_size.max(1))
    }

    pub fn cluster(&self, id: ClusterId) -> Result<ClusterDetail, EngineError> {
        let engine = self.engine();
        let s = &engine.state;
        let members = s.clusters.members(id)?;
        let representatives = s.clusters.representatives(id, engine.config.representative_seed)?;
        Ok(ClusterDetail {
            id,
            size: members.len(),
            members: members.iter().map(|m| s.message(m).cloned().expect("clustered ids are stored")).collect(),
            representatives,
        })
    }

    pub fn health(&self) -> Health {
        let engine = self.engine();
        let s = &engine.state;
        Health {
            status: "ok",
            provider: self.provider.name().to_string(),
            messages: s.messages.len(),
            clusters: s.clusters.cluster_count(),
            pending_reviews: s.reviews().filter(|r| r.state == ReviewState::Pending).count(),
            queued: s.queued.len(),
            events: engine.event_count(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.engine().config.data_dir.clone()
    }
}

impl std::fmt::Debug for Service {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Service").field("provider", &self.provider.name()).finish_non_exhaustive()
    }
}

/// Compares two states on everything a client can observe.
pub fn same_observable_state(a: &State, b: &State) -> bool {
    a.messages == b.messages
        && a.assignments() == b.assignments()
        && a.reviews == b.reviews
        && a.queued == b.queued
        && a.next_message == b.next_message
        && a.next_review == b.next_review
}
