//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the table; the test fails if any criterion that ran is red.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bluemed::debate::check_consensus;
use bluemed::eval::{compute_metrics, load_dataset, score_from_verdict, DatasetStats, EvalRecord, Prediction};
use bluemed::llm::Stage;
use bluemed::pipeline::{PipelineKind, Transcript};
use bluemed::retrieval::{fuse_rrf, Bm25Index, Bm25Params, FusionConfig, Method, RankedList};
use bluemed::safety::RuleId;
use bluemed::text::normalize_whitespace;
use bluemed::Label;
use common::props;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

/// Runs `cases` deterministic proptest cases of `body` over `strategy`.
fn property<S: Strategy>(cases: u32, strategy: S, body: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Check
where
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, body).map_err(|e| e.to_string())?;
    Ok(format!("{cases} cases"))
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rrf_exactness() -> Check {
    let start = Instant::now();
    let prop = property(1000, props::rank_lists(4), props::rrf_exact)?;
    let lists = [
        RankedList::new(Method::Dense, vec![("c".into(), 0.9), ("x".into(), 0.5)]),
        RankedList::new(Method::Sparse, vec![("y".into(), 9.0), ("z".into(), 8.0), ("c".into(), 7.0)]),
    ];
    let fused = fuse_rrf(&lists, &FusionConfig::default()).map_err(|e| e.to_string())?;
    let c = fused.iter().find(|r| r.chunk_id == "c").ok_or("c missing")?;
    let want = 0.5 / 61.0 + 0.3 / 63.0;
    ensure((c.rrf_score - want).abs() < 1e-8, format!("worked example {} vs {want}", c.rrf_score))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("{prop} to 1e-12, worked example {:.8}, {elapsed:.2?}", c.rrf_score))
}

fn bm25_oracle() -> Check {
    let index = Bm25Index::build("fixture", props::BM25_DOCS, Bm25Params::default());
    let mut compared = 0;
    let mut worst = 0.0f64;
    for query in ["fever cough", "after", "fever night rash", "cough viral infection", "unseen words"] {
        let oracle = props::bm25_oracle(&props::BM25_DOCS, query, 1.5, 0.75);
        let got: HashMap<String, f64> = index.scores(query).map_err(|e| e.to_string())?.into_iter().collect();
        for (id, _) in props::BM25_DOCS {
            let diff = (got.get(id).copied().unwrap_or(0.0) - oracle[id]).abs();
            worst = worst.max(diff);
            ensure(diff < 1e-9, format!("{query}/{id} off by {diff:e}"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} scores, max diff {worst:.1e}"))
}

fn consensus() -> Check {
    let table = props::consensus_truth_table();
    ensure(table.len() == 12, format!("{} cases", table.len()))?;
    for (name, a, b, expected) in &table {
        ensure(check_consensus(a, b).reached == *expected, format!("truth table case {name}"))?;
    }
    let sym = property(1000, props::consensus_pair(), props::consensus_symmetric)?;
    Ok(format!("12/12 truth table, symmetry {sym}"))
}

fn safety() -> Check {
    let a = property(1000, props::safety_case(), |c| props::two_term_necessity(&c))?;
    let b = property(1000, props::dual_incorrect_case(), |c| props::consensus_dominance(&c))?;
    let c = property(1000, props::safety_case(), |c| props::domain_rule_guard(&c))?;
    let d = property(1000, props::safety_case(), |c| props::audit_replay(&c))?;

    // Coverage: how often each rule fired over the same generator.
    let fired = std::sync::Mutex::new(BTreeMap::<RuleId, usize>::new());
    property(1000, props::safety_case(), |case| {
        let audit = common::LAYER.apply(&case.verdict, &case.a, &case.b, &case.note);
        let mut fired = fired.lock().unwrap();
        for f in audit.fired_rules {
            *fired.entry(f.rule).or_default() += 1;
        }
        Ok(())
    })?;
    let fired = fired.into_inner().unwrap();
    for rule in RuleId::DOMAIN {
        ensure(fired.contains_key(&rule), format!("{rule:?} never fired, the generator is too narrow"))?;
    }
    let coverage: Vec<String> = fired.iter().map(|(r, n)| format!("{r:?}={n}")).collect();
    Ok(format!("(a) {a} (b) {b} (c) {c} (d) {d}; fired {}", coverage.join(" ")))
}

fn judge_blindness() -> Check {
    let ws = common::Workspace::new();
    let (runner, recorder) = ws.recording_runner(PipelineKind::Bluemed);
    let records = common::fixture_records();
    for r in &records {
        runner.run(&r.note_id, &r.text).map_err(|e| e.to_string())?;
    }
    let judge: Vec<_> = recorder.taken().into_iter().filter(|q| q.stage == Stage::Judge).collect();
    ensure(judge.len() == records.len(), format!("{} judge prompts", judge.len()))?;
    for q in &judge {
        let prompt = normalize_whitespace(&format!("{}\n{}", q.system_prompt, q.user_content));
        for r in &records {
            ensure(!prompt.contains(&normalize_whitespace(&r.text)), format!("judge prompt contains {}", r.note_id))?;
        }
    }
    Ok(format!("{} judge prompts, none contain a note", judge.len()))
}

fn partitioning() -> Check {
    property(256, props::corpus(), |c| props::partition_safe(&c)).map(|p| format!("{p} randomized corpora"))
}

fn metric_oracles() -> Check {
    let roc = property(200, props::scored_labels(), |data| {
        let (scores, positive): (Vec<f64>, Vec<bool>) = data.into_iter().unzip();
        match (bluemed::eval::roc_auc(&scores, &positive), props::roc_brute(&scores, &positive)) {
            (Some(a), Some(b)) => proptest::prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
            (a, b) => proptest::prop_assert_eq!(a, b),
        }
        Ok(())
    })?;

    let identities = property(200, props::scored_labels(), |data| {
        let n = data.len();
        let gold = records(&data.iter().map(|(_, p)| label(*p)).collect::<Vec<_>>());
        let preds = predictions(&data.iter().map(|(s, _)| (label(*s >= 0.5), *s)).collect::<Vec<_>>());
        let m = compute_metrics(&preds, &gold).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let c = m.confusion;
        proptest::prop_assert_eq!(c.total(), n as f64);
        proptest::prop_assert!((m.accuracy / 100.0 - (c.tp + c.tn) / c.total()).abs() < 1e-9);
        let (p, r) = (m.precision / 100.0, m.recall / 100.0);
        if c.tp + c.fp > 0.0 {
            proptest::prop_assert!((p - c.tp / (c.tp + c.fp)).abs() < 1e-9);
        }
        if c.tp + c.fn_ > 0.0 {
            proptest::prop_assert!((r - c.tp / (c.tp + c.fn_)).abs() < 1e-9);
        }
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        proptest::prop_assert!((m.f1 / 100.0 - f1).abs() < 1e-9);
        Ok(())
    })?;

    use Label::{Correct as C, Incorrect as I};
    let m = compute_metrics(&predictions(&[(I, 0.9), (I, 0.8), (C, 0.3)]), &records(&[I, I, C])).map_err(|e| e.to_string())?;
    ensure(m.roc_auc == Some(100.0), format!("worked example 1: {:?}", m.roc_auc))?;
    let m = compute_metrics(&predictions(&[(C, 0.2), (C, 0.5), (I, 0.9)]), &records(&[I, C, I])).map_err(|e| e.to_string())?;
    ensure(m.roc_auc == Some(50.0), format!("worked example 2: {:?}", m.roc_auc))?;
    let scores = [score_from_verdict(I, 8), score_from_verdict(C, 10), score_from_verdict(C, 5)];
    ensure(
        (scores[0] - 0.8).abs() < 1e-12 && scores[1].abs() < 1e-12 && (scores[2] - 0.5).abs() < 1e-12,
        format!("worked example 3: {scores:?}"),
    )?;
    Ok(format!("ROC {roc}, identities {identities}, 3/3 worked examples"))
}

fn label(incorrect: bool) -> Label {
    if incorrect {
        Label::Incorrect
    } else {
        Label::Correct
    }
}

fn records(labels: &[Label]) -> Vec<EvalRecord> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| EvalRecord {
            note_id: format!("n{i}"),
            text: "t".into(),
            gold_label: *l,
            error_type: None,
        })
        .collect()
}

fn predictions(pairs: &[(Label, f64)]) -> Vec<Prediction> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, (l, s))| Prediction {
            note_id: format!("n{i}"),
            predicted: *l,
            score: *s,
        })
        .collect()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = common::fixture_config(dir.path());
    let cfg = dir.path().join("bluemed.toml");
    std::fs::write(&cfg, config.to_toml().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let fixtures = common::fixtures();
    let bin = env!("CARGO_BIN_EXE_bluemed");
    let run = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?} exited {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    };
    let s = |p: &Path| p.to_str().unwrap().to_string();
    run(&["build-kb", "--config", &s(&cfg)])?;

    let mut outputs = Vec::new();
    for i in 1..=2 {
        let out = dir.path().join(format!("eval-{i}"));
        let stdout = run(&[
            "evaluate",
            "--config",
            &s(&cfg),
            "--dataset",
            &s(&fixtures.join("medec_fixture.csv")),
            "--mock",
            &s(&fixtures.join("mock_script.json")),
            "--runs",
            "2",
            "--out",
            &s(&out),
        ])?;
        // The printed report path is the only line allowed to differ.
        outputs.push((stdout.replace(&s(&out), "<out>"), snapshot(&out)));
    }
    let (first, second) = (&outputs[0], &outputs[1]);
    ensure(first.0 == second.0, "stdout differs between executions")?;
    ensure(first.1 == second.1, "report or transcript bytes differ between executions")?;
    let transcripts = first.1.keys().filter(|k| k.contains("run-") && k.ends_with(".json")).count();
    ensure(transcripts == 12, format!("{transcripts} transcripts, expected 6 notes x 2 runs"))?;
    ensure(first.1.contains_key("report.json"), "report.json missing")?;

    let (mut skipped, mut round2, mut overrides) = (0, 0, 0);
    for id in ["fx-01", "fx-02", "fx-03", "fx-04", "fx-05", "fx-06"] {
        let t = Transcript::load(&dir.path().join(format!("eval-1/run-1/{id}.json"))).map_err(|e| e.to_string())?;
        let debate = t.debate.ok_or("missing debate")?;
        if debate.consensus.as_ref().is_some_and(|c| c.reached) && debate.round2.is_none() {
            skipped += 1;
        }
        if debate.round2.is_some() {
            round2 += 1;
        }
        let audit = t.safety.ok_or("missing safety audit")?;
        if audit.override_chain.iter().any(|o| o.from != o.to) {
            overrides += 1;
        }
    }
    ensure(skipped > 0 && round2 > 0 && overrides > 0, format!("skip {skipped}, round 2 {round2}, overrides {overrides}"))?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} files identical; consensus skip {skipped}, round 2 {round2}, overrides {overrides}; {elapsed:.2?}",
        first.1.len()
    ))
}

fn medec_loader() -> Option<Check> {
    let path = std::env::var_os("BLUEMED_MEDEC_PATH")?;
    Some((|| {
        let recs = load_dataset(Path::new(&path)).map_err(|e| e.to_string())?;
        let stats = DatasetStats::of(&recs);
        ensure(
            (stats.total, stats.incorrect, stats.correct) == (597, 311, 286),
            format!("{} notes, {} INCORRECT / {} CORRECT", stats.total, stats.incorrect, stats.correct),
        )?;
        Ok("597 notes, 311 INCORRECT / 286 CORRECT".to_string())
    })())
}

fn guarded(f: impl FnOnce() -> Check) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(detail)) => Outcome::Pass(detail),
        Ok(Err(detail)) => Outcome::Fail(detail),
        Err(p) => Outcome::Fail(
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()),
        ),
    }
}

#[test]
fn acceptance() {
    let criteria: Vec<(&str, Outcome)> = vec![
        ("rrf exactness", guarded(rrf_exactness)),
        ("bm25 oracle", guarded(bm25_oracle)),
        ("consensus truth table", guarded(consensus)),
        ("safety cascade", guarded(safety)),
        ("judge blindness", guarded(judge_blindness)),
        ("source partitioning", guarded(partitioning)),
        ("metric oracles", guarded(metric_oracles)),
        ("end-to-end determinism", guarded(end_to_end)),
        (
            "dataset loader (MEDEC)",
            match medec_loader() {
                Some(check) => guarded(|| check),
                None => Outcome::Skip("set BLUEMED_MEDEC_PATH to the MS test split".into()),
            },
        ),
    ];

    let mut failed = Vec::new();
    for (name, outcome) in &criteria {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed.push(*name);
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {name:<24} {detail}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
