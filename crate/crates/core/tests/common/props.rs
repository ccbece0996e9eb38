//! Strategies, brute-force oracles and property bodies shared by the
//! per-area suites and the acceptance target.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use bluemed::debate::{check_consensus, ExpertArgument, JudgeVerdict};
use bluemed::kb::{fingerprint, ChunkingPolicy, Collection, EvidenceChunk, KnowledgeBase, Source};
use bluemed::llm::{EmbeddingService, HashEmbedder};
use bluemed::retrieval::{
    fuse_rrf, fuse_weighted, Bm25Params, FetchError, FusionConfig, HybridRetriever, Method, OnlineFetcher,
    OnlinePassage, RankedList, SubQuery,
};
use bluemed::safety::{extract_term_pair, RuleId};
use bluemed::{Expert, Label};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use super::{argument, LAYER};

// ---- sparse ----

pub const BM25_DOCS: [(&str, &str); 4] = [
    ("d1", "Fever and cough with fever at night."),
    ("d2", "Persistent cough after a viral infection."),
    ("d3", "High fever in children requires prompt evaluation."),
    ("d4", "Rash on both forearms after gardening."),
];

/// Okapi BM25 written out term by term.
pub fn bm25_oracle(docs: &[(&str, &str)], query: &str, k1: f64, b: f64) -> HashMap<String, f64> {
    let words = |s: &str| -> Vec<String> {
        s.to_lowercase()
            .split(|c: char| !c.is_ascii_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect()
    };
    let tokenized: Vec<Vec<String>> = docs.iter().map(|(_, t)| words(t)).collect();
    let n = docs.len() as f64;
    let avgdl = tokenized.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut out = HashMap::new();
    for ((id, _), doc) in docs.iter().zip(&tokenized) {
        let mut score = 0.0;
        for term in words(query) {
            let df = tokenized.iter().filter(|d| d.contains(&term)).count() as f64;
            let tf = doc.iter().filter(|w| **w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc.len() as f64 / avgdl));
        }
        out.insert(id.to_string(), score);
    }
    out
}

// ---- fusion ----

/// Independent evaluation of sum(w / (k + rank)) over every list holding `doc`.
pub fn rrf_brute(lists: &[(f64, Vec<String>)], k: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for (weight, docs) in lists {
        for (position, doc) in docs.iter().enumerate() {
            *out.entry(doc.clone()).or_insert(0.0) += weight / (k + (position + 1) as f64);
        }
    }
    out
}

/// Up to `max_lists` rank lists over at most 50 documents, each a random
/// ordering of a random subset. Weights in [0, 2].
pub fn rank_lists(max_lists: usize) -> impl Strategy<Value = Vec<(f64, Vec<String>)>> {
    (1usize..=50).prop_flat_map(move |n_docs| {
        let list = (
            0.0f64..2.0,
            proptest::collection::vec((any::<bool>(), any::<u32>()), n_docs),
        )
            .prop_map(|(w, picks)| {
                let mut chosen: Vec<(u32, usize)> =
                    picks.iter().enumerate().filter(|(_, p)| p.0).map(|(i, p)| (p.1, i)).collect();
                chosen.sort();
                (w, chosen.into_iter().map(|(_, i)| format!("doc-{i:02}")).collect::<Vec<_>>())
            });
        proptest::collection::vec(list, 1..=max_lists)
    })
}

fn ranked(method: Method, docs: &[String], weight: f64) -> RankedList {
    let n = docs.len();
    let mut list = RankedList::new(method, docs.iter().enumerate().map(|(i, d)| (d.clone(), (n - i) as f64)).collect());
    list.weight = weight;
    list
}

fn compare_fused(got: &[(String, f64)], want: &BTreeMap<String, f64>, tol: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(got.len(), want.len());
    for (id, score) in got {
        let expected = want.get(id).ok_or_else(|| TestCaseError::fail(format!("unexpected {id}")))?;
        prop_assert!((score - expected).abs() <= tol, "{id}: {score} vs {expected}");
    }
    for pair in got.windows(2) {
        prop_assert!(pair[0].1 >= pair[1].1, "fused output not sorted");
    }
    Ok(())
}

/// `fuse_rrf` (three methods at most, weights from the config) and
/// `fuse_weighted` (any number of lists) both equal the brute-force sum.
pub fn rrf_exact(lists: Vec<(f64, Vec<String>)>) -> Result<(), TestCaseError> {
    let k = 60.0;
    let weighted: Vec<RankedList> = lists.iter().map(|(w, d)| ranked(Method::Dense, d, *w)).collect();
    let got: Vec<(String, f64)> = fuse_weighted(&weighted, k).into_iter().map(|r| (r.chunk_id, r.rrf_score)).collect();
    compare_fused(&got, &rrf_brute(&lists, k), 1e-12)?;

    let methods = [Method::Dense, Method::Sparse, Method::Online];
    let per_method: Vec<(f64, Vec<String>)> = lists.iter().take(3).cloned().collect();
    let config = FusionConfig {
        w_dense: per_method.first().map_or(0.5, |l| l.0),
        w_sparse: per_method.get(1).map_or(0.3, |l| l.0),
        w_online: per_method.get(2).map_or(0.2, |l| l.0),
        ..FusionConfig::default()
    };
    let lists_rrf: Vec<RankedList> =
        per_method.iter().zip(methods).map(|((_, d), m)| ranked(m, d, 0.0)).collect();
    let got: Vec<(String, f64)> = fuse_rrf(&lists_rrf, &config)
        .map_err(|e| TestCaseError::fail(e.to_string()))?
        .into_iter()
        .map(|r| (r.chunk_id, r.rrf_score))
        .collect();
    compare_fused(&got, &rrf_brute(&per_method, config.k), 1e-12)
}

// ---- metrics ----

/// Pairwise ranking statistic: wins plus half of ties over all
/// positive-negative pairs.
pub fn roc_brute(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &p) in positive.iter().enumerate() {
        if !p {
            continue;
        }
        for (j, &q) in positive.iter().enumerate() {
            if q {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

/// Scores drawn from a coarse grid so ties are common.
pub fn scored_labels() -> impl Strategy<Value = Vec<(f64, bool)>> {
    proptest::collection::vec(((0u8..=10).prop_map(|s| f64::from(s) / 10.0), any::<bool>()), 1..=50)
}

// ---- consensus and safety ----

const TERMS: &[&str] = &["metformin", "Metformin ", "methotrexate", "atrial fibrillation", "atrial  flutter", "glipizide"];

fn term() -> impl Strategy<Value = Option<String>> {
    proptest::option::of(proptest::sample::select(TERMS).prop_map(String::from))
}

fn label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Correct), Just(Label::Incorrect)]
}

pub fn consensus_pair() -> impl Strategy<Value = (ExpertArgument, ExpertArgument)> {
    let one = |expert| {
        (label(), term(), term()).prop_map(move |(l, w, c)| argument(expert, l, w.as_deref(), c.as_deref(), Some(7.0), ""))
    };
    (one(Expert::A), one(Expert::B))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Terms {
    Match,
    Mismatch,
    Missing,
}

/// The 12 canonical consensus cases with the expected outcome of each.
/// Matching terms differ in case and padding on purpose.
pub fn consensus_truth_table() -> Vec<(String, ExpertArgument, ExpertArgument, bool)> {
    let mut cases = Vec::new();
    for a_label in [Label::Correct, Label::Incorrect] {
        for b_label in [Label::Correct, Label::Incorrect] {
            for terms in [Terms::Match, Terms::Mismatch, Terms::Missing] {
                let a = argument(Expert::A, a_label, Some("Metformin"), Some("methotrexate"), Some(8.0), "");
                let (w, c) = match terms {
                    Terms::Match => (Some("  metformin "), Some("METHOTREXATE")),
                    Terms::Mismatch => (Some("metformin"), Some("glipizide")),
                    Terms::Missing => (Some("metformin"), None),
                };
                let b = argument(Expert::B, b_label, w, c, Some(8.0), "");
                let expected = a_label == b_label && (a_label == Label::Correct || terms == Terms::Match);
                cases.push((format!("{a_label}/{b_label}/{terms:?}"), a, b, expected));
            }
        }
    }
    cases
}

pub fn consensus_symmetric((a, b): (ExpertArgument, ExpertArgument)) -> Result<(), TestCaseError> {
    prop_assert_eq!(check_consensus(&a, &b).reached, check_consensus(&b, &a).reached);
    Ok(())
}

/// Argument text fragments; several trip one of the domain rules.
const FRAGMENTS: &[&str] = &[
    "The dose matches the indication.",
    "This may be a documentation slip.",
    "It is possibly a charting issue and remains unclear.",
    "The team should have ordered a culture.",
    "They failed to confirm the organism.",
    "A side effect profile is discussed.",
    "Watch for a drug interaction.",
    "This is a more specific diagnosis.",
    "That is a broader term for the same disease.",
    "\"metformin\" should be \"methotrexate\"",
    "Medication: glipizide → metformin",
    "Evidence is insufficient evidence to decide.",
];

const NOTE_FRAGMENTS: &[&str] = &[
    "Patient presents with fatigue.",
    "Culture confirmed Neisseria gonorrhoeae.",
    "Laboratory results confirm hypothyroidism.",
    "Started on metformin 500 mg twice daily.",
    "Follow-up in two weeks.",
];

fn text(pool: &'static [&'static str]) -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(pool), 0..5).prop_map(|v| v.join(" "))
}

fn safety_argument(expert: Expert) -> impl Strategy<Value = ExpertArgument> {
    (label(), term(), term(), proptest::option::of(1.0f64..=10.0), text(FRAGMENTS))
        .prop_map(move |(l, w, c, conf, raw)| argument(expert, l, w.as_deref(), c.as_deref(), conf, &raw))
}

fn verdict() -> impl Strategy<Value = JudgeVerdict> {
    (label(), 1u8..=10, any::<bool>()).prop_map(|(answer, confidence, a)| JudgeVerdict {
        answer,
        confidence,
        winner: if a { Expert::A } else { Expert::B },
        reasoning: "scripted".into(),
    })
}

#[derive(Debug, Clone)]
pub struct SafetyCase {
    pub verdict: JudgeVerdict,
    pub a: ExpertArgument,
    pub b: ExpertArgument,
    pub note: String,
}

pub fn safety_case() -> impl Strategy<Value = SafetyCase> {
    (verdict(), safety_argument(Expert::A), safety_argument(Expert::B), text(NOTE_FRAGMENTS))
        .prop_map(|(verdict, a, b, note)| SafetyCase { verdict, a, b, note })
}

/// Both experts INCORRECT with distinct, non-empty terms. Pairs need not match.
pub fn dual_incorrect_case() -> impl Strategy<Value = SafetyCase> {
    let valid = |expert| {
        (
            proptest::sample::subsequence(vec!["metformin", "methotrexate", "glipizide", "atrial flutter"], 2),
            proptest::option::of(1.0f64..=10.0),
            text(FRAGMENTS),
        )
            .prop_map(move |(terms, conf, raw)| {
                argument(expert, Label::Incorrect, Some(terms[0]), Some(terms[1]), conf, &raw)
            })
    };
    (verdict(), valid(Expert::A), valid(Expert::B), text(NOTE_FRAGMENTS))
        .prop_map(|(verdict, a, b, note)| SafetyCase { verdict, a, b, note })
}

/// (a) A final INCORRECT always has a term pair from some expert.
pub fn two_term_necessity(case: &SafetyCase) -> Result<(), TestCaseError> {
    let audit = LAYER.apply(&case.verdict, &case.a, &case.b, &case.note);
    if audit.final_label == Label::Incorrect {
        prop_assert!(extract_term_pair(&case.a).is_some() || extract_term_pair(&case.b).is_some());
    }
    Ok(())
}

/// (b) Both experts INCORRECT with valid pairs forces INCORRECT.
pub fn consensus_dominance(case: &SafetyCase) -> Result<(), TestCaseError> {
    let audit = LAYER.apply(&case.verdict, &case.a, &case.b, &case.note);
    let both = case.a.label == Label::Incorrect
        && case.b.label == Label::Incorrect
        && extract_term_pair(&case.a).is_some()
        && extract_term_pair(&case.b).is_some();
    if both {
        prop_assert_eq!(audit.final_label, Label::Incorrect);
    }
    Ok(())
}

/// (c) A domain rule fires only while the label is INCORRECT and no pair exists.
pub fn domain_rule_guard(case: &SafetyCase) -> Result<(), TestCaseError> {
    let audit = LAYER.apply(&case.verdict, &case.a, &case.b, &case.note);
    let no_pair = extract_term_pair(&case.a).is_none() && extract_term_pair(&case.b).is_none();
    let fired: Vec<RuleId> = audit.fired_rules.iter().map(|f| f.rule).filter(|r| RuleId::DOMAIN.contains(r)).collect();
    prop_assert!(fired.len() <= 1, "at most one domain rule fires: {fired:?}");
    if !fired.is_empty() {
        prop_assert_eq!(audit.input_label, Label::Incorrect);
        prop_assert!(no_pair);
        prop_assert_eq!(audit.fired_rules[0].rule, fired[0], "domain rules run before every other rule");
    }
    Ok(())
}

/// (d) Replaying the chain reproduces the final label; every step is
/// INCORRECT to CORRECT except the consensus override.
pub fn audit_replay(case: &SafetyCase) -> Result<(), TestCaseError> {
    let layer = &*LAYER;
    let audit = layer.apply(&case.verdict, &case.a, &case.b, &case.note);
    prop_assert_eq!(audit.replay(), audit.final_label);
    prop_assert!(audit.chain_is_consistent());
    for step in &audit.override_chain {
        if step.rule == RuleId::ConsensusOverride {
            prop_assert_eq!(step.to, Label::Incorrect);
        } else {
            prop_assert_eq!((step.from, step.to), (Label::Incorrect, Label::Correct));
        }
    }
    prop_assert_eq!(&audit, &layer.apply(&case.verdict, &case.a, &case.b, &case.note));
    Ok(())
}

// ---- source partitioning ----

const VOCAB: &[&str] = &[
    "diabetes", "metformin", "insulin", "thyroid", "levothyroxine", "asthma", "inhaler", "fever", "culture",
    "antibiotic", "dose", "kidney", "liver", "rash", "infection", "pain",
];

/// Counts calls and answers every query with one passage from the asked site.
#[derive(Default)]
pub struct CountingFetcher {
    pub calls: AtomicUsize,
}

impl OnlineFetcher for CountingFetcher {
    fn fetch(&self, query: &str, site: Source, _max: usize) -> Result<Vec<OnlinePassage>, FetchError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(vec![OnlinePassage {
            url: format!("https://{}.example/search?q={}", site.collection_name(), query.len()),
            text: format!("Live {} page about {query}.", site.collection_name()),
        }])
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub mayo: Vec<String>,
    pub webmd: Vec<String>,
    pub queries: Vec<String>,
}

fn sentence() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(VOCAB), 3..12).prop_map(|w| w.join(" "))
}

pub fn corpus() -> impl Strategy<Value = Corpus> {
    (
        proptest::collection::vec(sentence(), 1..12),
        proptest::collection::vec(sentence(), 1..12),
        proptest::collection::vec(sentence(), 1..5),
    )
        .prop_map(|(mayo, webmd, queries)| Corpus { mayo, webmd, queries })
}

fn collection(source: Source, docs: &[String]) -> Collection {
    let policy = ChunkingPolicy::new(400, 80).unwrap();
    let mut c = Collection::new(source.collection_name(), source, policy);
    for (i, text) in docs.iter().enumerate() {
        c.push(EvidenceChunk {
            chunk_id: format!("{}:doc-{i:02}:0000", source.collection_name()),
            text: text.clone(),
            source,
            category: BTreeSet::new(),
            origin_doc: format!("doc-{i:02}"),
            fingerprint: fingerprint(text),
            fetched_for: None,
        })
        .unwrap();
    }
    c
}

pub fn partition_safe(corpus: &Corpus) -> Result<(), TestCaseError> {
    let kb = KnowledgeBase::new(collection(Source::Mayo, &corpus.mayo), collection(Source::Webmd, &corpus.webmd))
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    let fetcher = Arc::new(CountingFetcher::default());
    let embedder = Arc::new(EmbeddingService::new(Arc::new(HashEmbedder::default())));
    let retriever = HybridRetriever::build(&kb, embedder, FusionConfig::default(), Bm25Params::default())
        .map_err(|e| TestCaseError::fail(e.to_string()))?
        .with_fetcher(fetcher.clone());
    let sub_queries: Vec<SubQuery> = corpus.queries.iter().map(|q| SubQuery::new(q.clone(), "aspect")).collect();

    for expert in [Expert::A, Expert::B] {
        let evidence = retriever
            .retrieve_for_expert(&sub_queries, expert)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(evidence.chunks.len() <= 5);
        for c in &evidence.chunks {
            prop_assert_eq!(c.chunk.partition(), Some(expert.source()), "{} leaked to expert {}", c.chunk.chunk_id, expert);
        }
    }

    let calls = fetcher.calls.load(Ordering::SeqCst);
    let online = retriever.counters().online;
    let cross = retriever
        .cross_source_retrieve(&corpus.queries[0], &corpus.queries[1..])
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    prop_assert_eq!(fetcher.calls.load(Ordering::SeqCst), calls);
    prop_assert_eq!(retriever.counters().online, online);
    prop_assert_eq!(cross.keys().copied().collect::<Vec<_>>(), vec![Source::Mayo, Source::Webmd]);
    for (source, chunks) in &cross {
        prop_assert!(chunks.len() <= 5);
        for c in chunks {
            prop_assert_eq!(c.chunk.source, *source);
        }
    }
    Ok(())
}

