use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use claim_match::bm25::{read_index, write_index, Bm25Params, InvertedIndex};
use claim_match::cluster::ClusterState;
use claim_match::corpus::{
    ingest_messages, load_corpus, normalize_whitespace, read_annotated_pairs, read_claim_labels, read_parallel,
    scrub_pii, AnnotatedPair, Corpus, MajorityLabel,
};
use claim_match::distill::{distill_train, DistillConfig};
use claim_match::embedding::{
    cosine, embed_batch, write_embeddings, EmbedInput, EmbeddingProvider, EmbeddingStore, HashedNGramEncoder,
};
use claim_match::eval::{
    f1_sweep, has_positive_at_k, label_pairs, mfr, mrr, randolph_kappa, AgreementTable, Confusion, EvalRecord,
    EvalReport, RankedQueryResult, SweepConfig, TableKind,
};
use claim_match::matcher::{
    adaboost_eval_cv, adaboost_train, build_balanced_pairs, featurize, rerank, AdaBoostConfig, MatchConfig,
};
use claim_match::sampler::{sample_messages, sample_random_pairs, write_sample, SamplingPlan};
use claim_match_service::{Service, ServiceConfig};
use serde::Deserialize;

use crate::args::*;
use crate::provider;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn dispatch(command: Command) -> Result<()> {
    tracing::info!(config = ?command, "resolved configuration");
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Index(a) => index(a),
        Command::Embed(a) => embed(a),
        Command::Query(a) => query(a),
        Command::EvalIr(a) => eval_ir(a),
        Command::EvalThreshold(a) => eval_threshold(a),
        Command::EvalClassifier(a) => eval_classifier(a),
        Command::SamplePairs(a) => sample_pairs(a),
        Command::Kappa(a) => kappa(a),
        Command::Distill(a) => distill(a),
        Command::Cluster(a) => cluster(a),
        Command::Serve(a) => serve(a),
        Command::Report(a) => report(a),
    }
}

fn path_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(path_err(path))
}

fn corpus_at(path: &Path) -> Result<Corpus> {
    load_corpus(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

impl Bm25Args {
    fn params(&self) -> Result<Bm25Params> {
        Bm25Params::new(self.k1, self.b).map_err(|e| CliError::Usage(e.to_string()))
    }
}

impl MatchArgs {
    fn config(&self) -> Result<MatchConfig> {
        let config = MatchConfig {
            depth: self.depth,
            auto_match_threshold: self.auto_threshold,
            suggest_threshold: self.suggest_threshold,
            ..MatchConfig::default()
        };
        config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(config)
    }
}

fn build_index(corpus: &Corpus, params: Bm25Params) -> Result<InvertedIndex> {
    let mut index = InvertedIndex::new(params);
    for m in corpus.iter() {
        index.add(&m.id, &m.text).map_err(CliError::data)?;
    }
    Ok(index)
}

/// The index from `--index`, or one built over the corpus.
fn index_from(path: Option<&Path>, corpus: Option<&Corpus>, bm25: &Bm25Args) -> Result<InvertedIndex> {
    match (path, corpus) {
        (Some(p), _) => read_index(File::open(p).map_err(path_err(p))?).map_err(path_err(p)),
        (None, Some(c)) => build_index(c, bm25.params()?),
        (None, None) => Err(CliError::Usage("need --index or --corpus".into())),
    }
}

/// Embeds `ids`, using corpus text where there is one and the id otherwise
/// (file providers look up by id).
fn embed_ids<'a>(
    provider: &dyn EmbeddingProvider,
    ids: impl IntoIterator<Item = &'a str>,
    corpus: Option<&'a Corpus>,
) -> Result<EmbeddingStore> {
    let items: Vec<(&str, &str)> = ids
        .into_iter()
        .map(|id| (id, corpus.and_then(|c| c.get(id)).map_or(id, |m| m.text.as_str())))
        .collect();
    EmbeddingStore::build(provider, items).map_err(CliError::data)
}

fn append_records(path: Option<&Path>, report: &EvalReport) -> Result<()> {
    if let Some(path) = path {
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(path_err(path))?;
        report.write_jsonl(file).map_err(path_err(path))?;
        tracing::info!(path = %path.display(), "records appended");
    }
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let ingested = ingest_messages(&a.input, a.source.into()).map_err(|e| CliError::Data(format!("{}: {e}", a.input.display())))?;
    let mut w = create(&a.output)?;
    ingested.corpus.export(&mut w).and_then(|_| w.flush()).map_err(path_err(&a.output))?;
    println!("ingested {} messages, skipped {}", ingested.corpus.len(), ingested.skipped.len());
    Ok(())
}

fn index(a: IndexArgs) -> Result<()> {
    let params = a.bm25.params()?;
    let corpus = corpus_at(&a.corpus)?;
    let index = build_index(&corpus, params)?;
    write_index(&index, create(&a.output)?).map_err(path_err(&a.output))?;
    println!("indexed {} documents, {} terms", index.doc_count(), index.term_count());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    let corpus = corpus_at(&a.corpus)?;
    let provider = provider::open(&spec)?;
    let store = EmbeddingStore::build(&*provider, corpus.iter().map(|m| (m.id.as_str(), m.text.as_str())))
        .map_err(CliError::data)?;
    write_embeddings(store.dim(), &store.sorted_entries(), create(&a.output)?).map_err(path_err(&a.output))?;
    println!("embedded {} messages, dim {}", store.len(), store.dim());
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    let config = a.matching.config()?;
    let text = normalize_whitespace(&scrub_pii(&a.text));
    if text.is_empty() {
        return Err(CliError::Usage("query text is empty".into()));
    }
    let corpus = a.corpus.as_deref().map(corpus_at).transpose()?;
    let index = index_from(a.index.as_deref(), corpus.as_ref(), &a.bm25)?;
    let provider = provider::open(&spec)?;
    let hits = index.search(&text, config.depth);
    let store = embed_ids(&*provider, hits.iter().map(|h| h.doc_id.as_str()), corpus.as_ref())?;
    let q = embed_batch(&*provider, &[EmbedInput::new("query", &text)]).map_err(CliError::data)?.remove(0);
    let ranking = rerank(&q, &hits, &store).map_err(CliError::data)?;
    let decision = config.decide(ranking.best().map(|c| c.cosine));
    let out = serde_json::json!({ "decision": decision, "candidates": ranking.candidates, "dropped": ranking.dropped });
    println!("{}", serde_json::to_string_pretty(&out).map_err(CliError::data)?);
    Ok(())
}

#[derive(Debug, Deserialize)]
struct QueryRecord {
    id: String,
    text: String,
    relevant: Vec<String>,
    #[serde(default)]
    language: Option<String>,
}

fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let text = fs::read_to_string(path).map_err(path_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Groups results by language, plus everything under "All".
fn by_language<T: Clone>(items: &[(Option<String>, T)]) -> BTreeMap<String, Vec<T>> {
    let mut groups: BTreeMap<String, Vec<T>> = BTreeMap::new();
    for (lang, item) in items {
        if let Some(l) = lang {
            groups.entry(l.clone()).or_default().push(item.clone());
        }
        groups.entry("All".into()).or_default().push(item.clone());
    }
    groups
}

const HAS_POSITIVE_K: [usize; 4] = [1, 3, 5, 10];

fn eval_ir(a: EvalIrArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    if a.depth == 0 {
        return Err(CliError::Usage("--depth must be at least 1".into()));
    }
    let queries = read_queries(&a.queries)?;
    if queries.is_empty() {
        return Err(CliError::Data(format!("{}: no queries", a.queries.display())));
    }
    let corpus = a.corpus.as_deref().map(corpus_at).transpose()?;
    let index = index_from(a.index.as_deref(), corpus.as_ref(), &a.bm25)?;
    let provider = provider::open(&spec)?;
    let label = a.label.clone().unwrap_or_else(|| provider.name().to_string());

    let hits: Vec<_> = queries.iter().map(|q| index.search(&q.text, a.depth)).collect();
    let pool: BTreeSet<&str> = hits.iter().flatten().map(|h| h.doc_id.as_str()).collect();
    let store = embed_ids(&*provider, pool, corpus.as_ref())?;
    let inputs: Vec<EmbedInput> = queries.iter().map(|q| EmbedInput::new(&q.id, &q.text)).collect();
    let qvecs = embed_batch(&*provider, &inputs).map_err(CliError::data)?;

    let mut bm25_results = Vec::new();
    let mut rerank_results = Vec::new();
    for ((q, h), v) in queries.iter().zip(&hits).zip(&qvecs) {
        let ranked: Vec<&str> = h.iter().map(|x| x.doc_id.as_str()).collect();
        bm25_results.push((q.language.clone(), RankedQueryResult::new(&q.id, ranked, &q.relevant)));
        let ranking = rerank(v, h, &store).map_err(CliError::data)?;
        rerank_results.push((q.language.clone(), RankedQueryResult::new(&q.id, ranking.ids(), &q.relevant)));
    }

    let mut report = EvalReport::default();
    println!("{:<10} {:<20} {:>6} {:>7} {:>7}  HasPositive@{:?}", "language", "ranker", "n", "MRR", "MFR", HAS_POSITIVE_K);
    for (column, results) in [("BM25".to_string(), bm25_results), (label, rerank_results)] {
        for (lang, group) in by_language(&results) {
            let m = mrr(&group);
            let f = mfr(&group, a.mfr_cap).map_or("n/a".to_string(), |v| format!("{v:.2}"));
            let hp: Vec<String> = HAS_POSITIVE_K.iter().map(|&k| format!("{:.3}", has_positive_at_k(&group, k))).collect();
            println!("{lang:<10} {column:<20} {:>6} {m:>7.4} {f:>7}  {}", group.len(), hp.join(" "));
            report.push(
                EvalRecord::new(TableKind::Retrieval, &lang, &column, "mrr", m)
                    .with_config("depth", a.depth)
                    .with_config("k1", a.bm25.k1)
                    .with_config("b", a.bm25.b)
                    .with_config("queries", group.len()),
            );
        }
    }
    append_records(a.records.as_deref(), &report)
}

type LabelledCosine = (Option<String>, (f64, MajorityLabel));

/// Cosine and majority label for every pair whose two sides embed to
/// non-zero vectors.
fn score_pairs(
    pairs: &[AnnotatedPair],
    provider: &dyn EmbeddingProvider,
    corpus: Option<&Corpus>,
) -> Result<Vec<LabelledCosine>> {
    let ids: BTreeSet<&str> = pairs.iter().flat_map(|p| [p.id_a.as_str(), p.id_b.as_str()]).collect();
    let store = embed_ids(provider, ids, corpus)?;
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (ea, eb) = (store.get(&p.id_a).unwrap(), store.get(&p.id_b).unwrap());
        match cosine(ea, eb) {
            Ok(c) => out.push((Some(p.language.clone()), (c as f64, p.majority))),
            Err(e) => tracing::warn!(a = %p.id_a, b = %p.id_b, error = %e, "pair skipped"),
        }
    }
    Ok(out)
}

fn eval_threshold(a: EvalThresholdArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    let pairs = read_annotated_pairs(&a.pairs).map_err(|e| CliError::Data(format!("{}: {e}", a.pairs.display())))?;
    let corpus = a.corpus.as_deref().map(corpus_at).transpose()?;
    let provider = provider::open(&spec)?;
    let label = a.label.clone().unwrap_or_else(|| provider.name().to_string());
    let config = SweepConfig { folds: a.folds, repeats: a.repeats, step: a.step, seed: a.seed };
    let scored = score_pairs(&pairs, &*provider, corpus.as_ref())?;

    let mut report = EvalReport::default();
    let mut groups = by_language(&scored);
    let all = groups.remove("All").unwrap_or_default();
    let ordered = std::iter::once((a.row.clone(), all)).chain(groups);
    for (row, group) in ordered {
        let labelled = label_pairs(&group, a.positive_class);
        let sweep = match f1_sweep(&labelled, &config) {
            Ok(s) => s,
            Err(e) if row != a.row => {
                tracing::warn!(language = %row, error = %e, "language skipped");
                continue;
            }
            Err(e) => return Err(CliError::data(e)),
        };
        let (tau, best) = sweep.max_mean_f1();
        println!(
            "{row}: pairs {}, max mean F1 {:.3}±{:.3} at {tau:.2}; held-out F1 {:.3}±{:.3}, modal threshold {:.2}",
            labelled.len(),
            best.mean,
            best.std,
            sweep.heldout_f1.mean,
            sweep.heldout_f1.std,
            sweep.modal_threshold
        );
        if let Some(t) = a.tau {
            let m = Confusion::at(&labelled, t).metrics();
            println!("{row}: at {t:.2}: precision {:.3}, recall {:.3}, F1 {:.3}", m.precision, m.recall, m.f1);
        }
        report.push(
            EvalRecord::new(TableKind::Threshold, &row, &label, "f1", best.mean)
                .with_std(best.std)
                .with_threshold(tau)
                .with_config("positive_class", a.positive_class)
                .with_config("folds", a.folds)
                .with_config("repeats", a.repeats)
                .with_config("seed", a.seed),
        );
    }
    append_records(a.records.as_deref(), &report)
}

fn eval_classifier(a: EvalClassifierArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    let pairs = read_annotated_pairs(&a.pairs).map_err(|e| CliError::Data(format!("{}: {e}", a.pairs.display())))?;
    let corpus = corpus_at(&a.corpus)?;
    let provider = provider::open(&spec)?;
    let label = a.label.clone().unwrap_or_else(|| provider.name().to_string());
    let config = AdaBoostConfig { rounds: a.rounds };
    let balanced = build_balanced_pairs(&pairs, a.positive_class, a.seed).map_err(CliError::data)?;
    let ids: BTreeSet<&str> = balanced.iter().flat_map(|p| [p.id_a.as_str(), p.id_b.as_str()]).collect();
    let store = embed_ids(&*provider, ids, Some(&corpus))?;
    let (x, y) = featurize(&balanced, &corpus, &store).map_err(CliError::data)?;
    let cv = adaboost_eval_cv(&x, &y, a.folds, a.repeats, &config, a.seed).map_err(CliError::data)?;
    println!(
        "{label}: pairs {}, accuracy {:.3}±{:.3}, F1 (pos) {:.3}±{:.3}, F1 (neg) {:.3}±{:.3}",
        balanced.len(),
        cv.accuracy.mean,
        cv.accuracy.std,
        cv.f1_pos.mean,
        cv.f1_pos.std,
        cv.f1_neg.mean,
        cv.f1_neg.std
    );
    let mut report = EvalReport::default();
    for (column, m) in [("Accuracy", cv.accuracy), ("F1 (pos)", cv.f1_pos), ("F1 (neg)", cv.f1_neg)] {
        report.push(
            EvalRecord::new(TableKind::Classifier, &label, column, column.to_lowercase(), m.mean)
                .with_std(m.std)
                .with_config("rounds", a.rounds)
                .with_config("positive_class", a.positive_class)
                .with_config("pairs", balanced.len())
                .with_config("seed", a.seed),
        );
    }
    if let Some(path) = &a.model {
        let (model, rounds) = adaboost_train(&x, &y, &config).map_err(CliError::data)?;
        model.write(create(path)?).map_err(path_err(path))?;
        tracing::info!(path = %path.display(), stumps = rounds.len(), "model saved");
    }
    append_records(a.records.as_deref(), &report)
}

fn sample_pairs(a: SamplePairsArgs) -> Result<()> {
    let corpus = corpus_at(&a.corpus)?;
    let plan = SamplingPlan {
        mean: a.mean,
        std: a.std,
        pairs_per_model: a.per_provider,
        random_pairs: a.random,
        seed: a.seed,
        ..SamplingPlan::default()
    };
    plan.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut w = create(&a.output)?;
    for spec in &a.providers {
        let provider = provider::open(spec)?;
        let sample = sample_messages(corpus.messages(), &*provider, &plan).map_err(CliError::data)?;
        write_sample(&sample, &plan, &mut w).map_err(path_err(&a.output))?;
        println!("{}: {} stratified pairs", provider.name(), sample.len());
    }
    let ids: Vec<&str> = corpus.iter().map(|m| m.id.as_str()).collect();
    let random = sample_random_pairs(&ids, plan.random_pairs, plan.seed).map_err(CliError::data)?;
    for (x, y) in &random {
        writeln!(w, "{x}\t{y}\t-\t-\trandom").map_err(path_err(&a.output))?;
    }
    w.flush().map_err(path_err(&a.output))?;
    println!("random: {} pairs", random.len());
    Ok(())
}

fn kappa(a: KappaArgs) -> Result<()> {
    let data = |e: &dyn std::fmt::Display| CliError::Data(format!("{}: {e}", a.labels.display()));
    let table = match a.collapse {
        Collapse::Task1 => {
            AgreementTable::claim_detection(&read_claim_labels(&a.labels).map_err(|e| data(&e))?).map_err(|e| data(&e))?
        }
        Collapse::Task2 => {
            AgreementTable::claim_similarity(&read_annotated_pairs(&a.labels).map_err(|e| data(&e))?).map_err(|e| data(&e))?
        }
    };
    tracing::info!(items = table.items(), categories = table.k(), observed = table.observed_agreement(), "agreement table");
    println!("{:.4}", randolph_kappa(&table));
    Ok(())
}

fn distill(a: DistillArgs) -> Result<()> {
    let pairs = read_parallel(&a.pairs).map_err(|e| CliError::Data(format!("{}: {e}", a.pairs.display())))?;
    let teacher = provider::open(&a.teacher)?;
    let mut student = match &a.init {
        Some(p) => HashedNGramEncoder::<f32>::load(p).map_err(path_err(p))?,
        None => {
            let s = HashedNGramEncoder::new(&[3, 4, 5], a.buckets, teacher.dim(), a.seed);
            if a.init_scale > 0.0 {
                s.randomize(a.init_scale, a.seed)
            } else {
                s
            }
        }
    };
    if student.dim() != teacher.dim() {
        return Err(CliError::Data(format!("student dim {} differs from teacher dim {}", student.dim(), teacher.dim())));
    }
    let config =
        DistillConfig { batch_size: a.batch_size, learning_rate: a.learning_rate, epochs: a.epochs, seed: a.seed };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let trace = distill_train(&*teacher, &mut student, &pairs, &config).map_err(CliError::data)?;
    student.save(&a.output).map_err(path_err(&a.output))?;
    println!("{}", serde_json::to_string(&trace).map_err(CliError::data)?);
    Ok(())
}

fn cluster(a: ClusterArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!("threshold {} outside [0, 1]", a.threshold)));
    }
    let corpus = corpus_at(&a.corpus)?;
    let provider = provider::open(&spec)?;
    let store = EmbeddingStore::build(&*provider, corpus.iter().map(|m| (m.id.as_str(), m.text.as_str())))
        .map_err(CliError::data)?;
    let mut state = ClusterState::new(a.threshold as f32);
    for m in corpus.iter() {
        state.add_item(&m.id, store.get(&m.id).unwrap()).map_err(CliError::data)?;
    }
    if let Some(path) = &a.output {
        state.write_assignments(create(path)?).map_err(path_err(path))?;
    }
    let clusters = state.clusters_of_size(a.min_size);
    for c in &clusters {
        let r = state.representatives(c.id, a.seed).map_err(CliError::data)?;
        let row = serde_json::json!({ "id": c.id, "size": c.size(), "representatives": r, "members": c.members });
        println!("{row}");
    }
    tracing::info!(items = state.len(), clusters = state.cluster_count(), shown = clusters.len(), "clustered");
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let spec = a.provider.resolve()?;
    let provider = provider::open(&spec)?;
    let config = ServiceConfig {
        matching: a.matching.config()?,
        bm25: a.bm25.params()?,
        snapshot_every: a.snapshot_every.max(1),
        max_suggestions: a.max_suggestions,
        representative_seed: a.seed,
        ..ServiceConfig::new(&a.data_dir)
    };
    tracing::info!(matching = ?config.matching, bm25 = ?config.bm25, "service configuration");
    if a.token.is_none() {
        tracing::warn!("no token set; every route is open");
    }
    let service = Arc::new(Service::open(config, provider).map_err(CliError::data)?);
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::data)?;
    runtime
        .block_on(claim_match_service::serve(
            service,
            a.token.map(|t| t.0),
            a.addr,
            Duration::from_secs(a.retry_secs.max(1)),
        ))
        .map_err(CliError::data)
}

fn report(a: ReportArgs) -> Result<()> {
    let mut report = EvalReport::default();
    for path in &a.records {
        let file = File::open(path).map_err(path_err(path))?;
        report.extend(EvalReport::read_jsonl(BufReader::new(file)).map_err(path_err(path))?);
    }
    print!("{}", report.render());
    Ok(())
}
