//! One PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::{
    golden, golden_cases, meta_universe, oracle_editable, oracle_passes, random_fixture, render,
    synthetic_corpus,
};
use mtprobe_core::backends::{
    BackendError, BackendKind, BackendSpec, Cache, Client, RefFreeScorer, Reply, Request,
    StubConfig, StubTransport, Transport,
};
use mtprobe_core::casegen::{
    generate_cases, quality_filter, write_cases, FilterStatus, GenerateOptions, TemplateId,
    TestCase, OUTPUT_FORMAT_CLAUSE,
};
use mtprobe_core::corpus::{PosTag, Span, TranslationPair};
use mtprobe_core::judge::{
    judge_all, judge_case, pass_rate, score_records, sweep, write_jsonl, FailReason, JudgeConfig,
    TranslationRecord, Verdict,
};
use mtprobe_core::report::{precision_recall, GoldErrorAnnotation, GoldSet, ReportError};
use mtprobe_core::segmentation::{
    editable_candidates, extract_editable, filter_by_capability, plan_selection,
    within_general_budget, Capability, SpanPair,
};
use mtprobe_core::{Percentage, QualityScore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn within(limit: Duration, start: Instant) -> Outcome {
    let took = start.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn record(case_id: String, qual_y: f64, qual_y_prime: f64) -> TranslationRecord<f64> {
    TranslationRecord {
        case_id,
        system_id: "sys".into(),
        capability: Capability::Noun,
        y: String::new(),
        y_prime: String::new(),
        qual_y,
        qual_y_prime,
    }
}

fn judge_rule() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = JudgeConfig::default();
    let grid = [0.0, 0.75, 0.8, 0.85, 0.9, 1.0];
    for i in 0..1000 {
        let (a, b) = if i % 4 == 0 {
            (grid[rng.random_range(0..6)], grid[rng.random_range(0..6)])
        } else {
            (rng.random::<f64>(), rng.random::<f64>())
        };
        let v = judge_case(&record(i.to_string(), a, b), &cfg);
        ensure!(
            v.passed == oracle_passes(a, b, 0.8, 0.05),
            "disagreement on ({a}, {b})"
        );
    }
    let canon = |a, b| judge_case(&record("c".into(), a, b), &cfg);
    let pass = canon(0.85, 0.83);
    ensure!(pass.passed && pass.fail_reason.is_none(), "0.85/0.83 should pass");
    for other in [0.0, 0.79, 0.5, 1.0] {
        let v = canon(0.79, other);
        ensure!(
            v.fail_reason == Some(FailReason::LowBaseQuality),
            "0.79/{other}: {:?}",
            v.fail_reason
        );
    }
    let v = canon(0.90, 0.80);
    ensure!(v.fail_reason == Some(FailReason::LargeDiff), "0.90/0.80: {:?}", v.fail_reason);
    within(Duration::from_secs(1), start)
}

fn pass_rate_arithmetic() -> Outcome {
    let start = Instant::now();
    let p = Percentage::new(455, 494).ok_or("455/494 rejected")?;
    ensure!(p.to_string() == "92.11", "455/494 printed {p}");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let n: u64 = rng.random_range(1..100_000);
        let k: u64 = rng.random_range(0..=n);
        let q = 10_000 * k / n;
        let r = 10_000 * k % n;
        let expected = q + u64::from(2 * r >= n);
        let got = Percentage::new(k, n).unwrap();
        ensure!(got.hundredths() == expected, "{k}/{n}: {} vs {expected}", got.hundredths());
        let err = (got.percent() - 100.0 * k as f64 / n as f64).abs();
        ensure!(err <= 0.005 + 1e-9, "{k}/{n}: off by {err}");
        let text = format!("{}.{:02}", expected / 100, expected % 100);
        ensure!(got.to_string() == text, "{k}/{n}: {got} vs {text}");
    }
    let verdicts: Vec<_> = (0..494)
        .map(|i| {
            let q = if i < 455 { 0.9 } else { 0.1 };
            judge_case(&record(i.to_string(), q, q), &JudgeConfig::default())
        })
        .collect();
    let rate = pass_rate(&verdicts).map_err(|e| e.to_string())?;
    ensure!(rate.to_string() == "92.11", "pass rate {rate}");
    within(Duration::from_secs(1), start)
}

fn extraction_oracle() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    for seed in 0..500u64 {
        let f = random_fixture(10_000 + seed, 10);
        let got: Vec<SpanPair> = extract_editable(&f.pair, &f.alignment, &f.annotation)
            .iter()
            .map(|s| s.span_pair)
            .collect();
        if got != oracle_editable(&f) {
            mismatches += 1;
        }
    }
    ensure!(mismatches == 0, "{mismatches} mismatches of 500");
    within(Duration::from_secs(30), start)
}

fn figure_fixture() -> Outcome {
    let f = meta_universe();
    let segs = extract_editable(&f.pair, &f.alignment, &f.annotation);
    let target = SpanPair::new(Span::new(5, 6), Span::new(3, 4));
    ensure!(
        segs.iter().any(|s| s.span_pair == target),
        "Meta-universe/元宇宙 missing from {segs:?}"
    );
    let ner = filter_by_capability(&segs, &f.annotation, Capability::Ner);
    ensure!(ner.len() == 1 && ner[0].span_pair == target, "NER filter gave {ner:?}");
    let phrase = Span::new(0, 4);
    let all = editable_candidates(&f.pair, &f.alignment, &f.annotation);
    ensure!(
        !all.iter().any(|s| s.src_span() == phrase),
        "\"In order to tell\" was accepted"
    );
    Ok(())
}

fn general_budget() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut plans = 0;
    let mut seed = 0u64;
    while plans < 1000 {
        seed += 1;
        let f = random_fixture(50_000 + seed, 10);
        let segs = extract_editable(&f.pair, &f.alignment, &f.annotation);
        let count = rng.random_range(1..=20);
        let Ok(drawn) = plan_selection(&f.pair, &segs, Capability::General, count, seed) else {
            continue;
        };
        let n = f.pair.source.len();
        for plan in drawn {
            let total = plan.masked_source_words();
            ensure!(
                (total as f64) < 0.2 * n as f64 && within_general_budget(total, n),
                "plan masks {total} of {n} words"
            );
            plans += 1;
        }
        ensure!(seed < 1_000_000, "could not draw 1000 plans");
    }

    let words: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
    let refs: Vec<String> = (0..15).map(|i| format!("r{i}")).collect();
    let pair = TranslationPair::new("fifteen", &words.join(" "), &refs.join(" "));
    let f = common::fixture(
        "fifteen",
        &pair.source_text(),
        &pair.reference_text(),
        &(0..15).map(|i| (i, i)).collect::<Vec<_>>(),
        &[PosTag::Noun; 15],
    );
    let segs = extract_editable(&f.pair, &f.alignment, &f.annotation);
    ensure!(segs.len() == 15, "{} editable words", segs.len());
    let mut max = 0;
    for seed in 0..200 {
        for plan in plan_selection(&f.pair, &segs, Capability::General, 20, seed)
            .map_err(|e| e.to_string())?
        {
            max = max.max(plan.masked_source_words());
        }
    }
    ensure!(max == 2, "maximum masked words for len 15 was {max}");
    Ok(())
}

fn prompt_goldens() -> Outcome {
    for (name, f, cap) in golden_cases() {
        let p = render(&f, cap);
        let g = golden(name);
        ensure!(p.rendered_text.as_bytes() == g.as_bytes(), "{name} differs:\n{}", p.rendered_text);
        ensure!(g.contains(OUTPUT_FORMAT_CLAUSE), "{name} lacks the output clause");
        let expected = TemplateId::for_capability(cap);
        ensure!(p.template_id == expected, "{name}: template {:?}", p.template_id);
    }
    ensure!(
        OUTPUT_FORMAT_CLAUSE.as_bytes() == br"'Filled English:{} \n Filled Chinese:{}'",
        "output clause is {OUTPUT_FORMAT_CLAUSE:?}"
    );
    Ok(())
}

struct StubRun {
    cases: Vec<TestCase>,
    verdicts: Vec<Verdict<f64>>,
    bytes: Vec<u8>,
}

fn stub_run(jobs: usize, transport: Option<Arc<dyn Transport>>, cache: Option<Arc<Cache>>) -> Result<StubRun, String> {
    let syn = synthetic_corpus(50);
    let make = |spec: BackendSpec| match (&transport, &cache) {
        (Some(t), Some(c)) => Client::with_transport(spec, t.clone(), c.clone()),
        _ => Client::new(spec, None).unwrap(),
    };
    let infill = make(BackendSpec::stub(
        "infill",
        BackendKind::Infill,
        StubConfig::Substitute {
            src: "dogs".into(),
            reference: "狗".into(),
        },
    ));
    let filter = make(BackendSpec::stub("qe", BackendKind::ScorerRefFree, StubConfig::LengthRatio));
    let translator = make(BackendSpec::stub(
        "lexicon-mt",
        BackendKind::Translator,
        StubConfig::Lexicon {
            entries: syn.lexicon.clone(),
        },
    ));
    let scorer = make(BackendSpec::stub("f1", BackendKind::ScorerRefBased, StubConfig::UnigramF1));
    let options = GenerateOptions {
        capability: Capability::Noun,
        per_pair: 1,
        beta: 0.05,
        seed: 13,
        jobs,
    };
    let generated = generate_cases(&syn.corpus, &options, &infill, &filter);
    ensure!(generated.skipped.is_empty(), "skipped {:?}", generated.skipped);
    let scored = score_records(&generated.cases, &translator, &scorer, &syn.corpus, jobs);
    ensure!(scored.errored.is_empty(), "errored {:?}", scored.errored);
    let verdicts = judge_all(&scored.records, &JudgeConfig::default());
    let mut bytes = Vec::new();
    write_cases(&mut bytes, &generated.cases).map_err(|e| e.to_string())?;
    write_jsonl(&mut bytes, &scored.records).map_err(|e| e.to_string())?;
    write_jsonl(&mut bytes, &verdicts).map_err(|e| e.to_string())?;
    Ok(StubRun {
        cases: generated.cases,
        verdicts,
        bytes,
    })
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let syn = synthetic_corpus(50);
    // y = r scores 1; y' copies the untranslated substitute, so one of n
    // tokens misses and |1 - (n-1)/n| = 1/n <= 0.05 iff n >= 20.
    let expected = Percentage::new(
        syn.lengths.iter().filter(|&&n| n >= 20).count() as u64,
        syn.lengths.len() as u64,
    )
    .unwrap();
    let first = stub_run(4, None, None)?;
    ensure!(first.cases.len() == 50, "{} cases", first.cases.len());
    ensure!(
        first.cases.iter().all(|c| c.filter_status == FilterStatus::Kept),
        "not every case kept"
    );
    let rate = pass_rate(&first.verdicts).map_err(|e| e.to_string())?;
    ensure!(rate == expected, "pass rate {rate}, expected {expected}");
    let second = stub_run(1, None, None)?;
    ensure!(first.bytes == second.bytes, "repeated runs differ");
    within(Duration::from_secs(10), start)
}

fn sweep_monotone() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut violations = 0;
    for g in 0..200 {
        let records: Vec<_> = (0..rng.random_range(1..80))
            .map(|i| record(format!("{g}-{i}"), rng.random(), rng.random()))
            .collect();
        let mut alphas: Vec<f64> = (0..rng.random_range(2..7)).map(|_| rng.random()).collect();
        let mut betas: Vec<f64> = (0..rng.random_range(2..7)).map(|_| rng.random::<f64>() * 0.3).collect();
        alphas.sort_by(f64::total_cmp);
        betas.sort_by(f64::total_cmp);
        let cells = sweep(&records, &alphas, &betas).map_err(|e| e.to_string())?;
        let at = |a: usize, b: usize| cells[a * betas.len() + b].pass_rate.hundredths();
        let mut bad = false;
        for a in 0..alphas.len() {
            for b in 0..betas.len() {
                if a + 1 < alphas.len() && at(a + 1, b) > at(a, b) {
                    bad = true;
                }
                if b + 1 < betas.len() && at(a, b + 1) < at(a, b) {
                    bad = true;
                }
            }
        }
        violations += usize::from(bad);
    }
    ensure!(violations == 0, "{violations} of 200 grids violate monotonicity");
    Ok(())
}

/// Reference-free scorer answering from a fixed table keyed by hypothesis.
struct TableScorer(Vec<(&'static str, f64)>);

impl RefFreeScorer for TableScorer {
    fn score_ref_free(&self, _source: &str, hypothesis: &str) -> Result<QualityScore<f64>, BackendError> {
        let v = self
            .0
            .iter()
            .find(|(h, _)| *h == hypothesis)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("no score for {hypothesis:?}"));
        Ok(QualityScore::new(v).unwrap())
    }
}

fn quality_filter_fixtures() -> Outcome {
    let original = TranslationPair::new("o", "the cat sat", "猫 坐 了");
    let scorer = TableScorer(vec![
        ("猫 坐 了", 0.75),
        ("狗 坐 了", 0.75),
        ("鸟 坐 了", 0.71875),
        ("鱼 坐 了", 0.6875),
        ("牛 坐 了", 0.25),
        ("马 坐 了", 1.0),
    ]);
    let variants = ["狗", "鸟", "鱼", "牛", "马"];
    // diffs: 0, 0.03125, 0.0625, 0.5, 0.25
    let expected: [(f64, &[&str]); 3] = [
        (0.0, &["狗"]),
        (0.05, &["狗", "鸟"]),
        (1.0, &["狗", "鸟", "鱼", "牛", "马"]),
    ];
    for (beta, keep) in expected {
        for v in variants {
            let case = TestCase {
                case_id: v.into(),
                pair_id: "o".into(),
                capability: Capability::Noun,
                source_prime: vec!["the".into(), "X".into(), "sat".into()],
                reference_prime: vec![v.into(), "坐".into(), "了".into()],
                filter_status: FilterStatus::Pending,
                seed: 0,
                template_id: TemplateId::Pos,
                raw_response_digest: None,
                plan_index: 0,
                segments: Vec::new(),
                raw_response: None,
            };
            let status = quality_filter(&case, &original, &scorer, beta).map_err(|e| e.to_string())?;
            ensure!(
                status.is_kept() == keep.contains(&v),
                "beta {beta}, variant {v}: {status:?}"
            );
        }
    }
    Ok(())
}

fn precision_recall_fixture() -> Outcome {
    // failed: 0..8; erroneous: 0..6 and 8, 9, 10
    let erroneous = |i: usize| i < 6 || (8..=10).contains(&i);
    let verdicts: Vec<Verdict<f64>> = (0..20)
        .map(|i| {
            let (q, qp) = if i < 8 { (0.9, 0.5) } else { (0.9, 0.9) };
            judge_case(&record(format!("g{i}"), q, qp), &JudgeConfig::default())
        })
        .collect();
    let gold = GoldSet::new((0..20).map(|i| GoldErrorAnnotation {
        case_id: format!("g{i}"),
        system_id: "sys".into(),
        is_erroneous: erroneous(i),
        error_spans: Vec::new(),
        edited_spans_on_y_prime: None,
    }))
    .map_err(|e| e.to_string())?;
    let pr = precision_recall(&verdicts, &gold).map_err(|e| e.to_string())?;
    ensure!(
        (pr.flagged, pr.gold_erroneous, pr.flagged_and_erroneous) == (8, 9, 6),
        "counts {pr:?}"
    );
    let p = pr.precision().map_err(|e| e.to_string())?;
    let r = pr.recall().map_err(|e| e.to_string())?;
    ensure!(p == Percentage::new(6, 8).unwrap() && p.to_string() == "75.00", "precision {p}");
    ensure!(r == Percentage::new(6, 9).unwrap() && r.to_string() == "66.67", "recall {r}");

    let passing: Vec<_> = verdicts[8..].to_vec();
    let quiet = GoldSet::new((8..20).map(|i| GoldErrorAnnotation {
        case_id: format!("g{i}"),
        system_id: "sys".into(),
        is_erroneous: false,
        error_spans: Vec::new(),
        edited_spans_on_y_prime: None,
    }))
    .map_err(|e| e.to_string())?;
    let pr = precision_recall(&passing, &quiet).map_err(|e| e.to_string())?;
    ensure!(matches!(pr.precision(), Err(ReportError::ZeroFlagged)), "expected ZeroFlagged");
    ensure!(matches!(pr.recall(), Err(ReportError::ZeroGoldErrors)), "expected ZeroGoldErrors");
    Ok(())
}

struct Counting {
    calls: AtomicUsize,
}

impl Transport for Counting {
    fn send(&self, spec: &BackendSpec, request: &Request) -> Result<Reply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        StubTransport.send(spec, request)
    }
}

fn warm_cache() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cold = Arc::new(Counting {
        calls: AtomicUsize::new(0),
    });
    let first = stub_run(4, Some(cold.clone()), Some(Arc::new(Cache::on_disk(dir.path()))))?;
    let cold_calls = cold.calls.load(Ordering::SeqCst);
    ensure!(cold_calls > 0, "cold run made no calls");

    let warm = Arc::new(Counting {
        calls: AtomicUsize::new(0),
    });
    let second = stub_run(4, Some(warm.clone()), Some(Arc::new(Cache::on_disk(dir.path()))))?;
    let warm_calls = warm.calls.load(Ordering::SeqCst);
    ensure!(warm_calls == 0, "warm run made {warm_calls} upstream calls (cold: {cold_calls})");
    if first.bytes != second.bytes {
        let a = String::from_utf8_lossy(&first.bytes).to_string();
        let b = String::from_utf8_lossy(&second.bytes).to_string();
        let d = a.lines().zip(b.lines()).find(|(x, y)| x != y);
        return Err(format!("warm run output differs: {d:?}"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("judge rule agrees with oracle", judge_rule),
        ("pass-rate arithmetic", pass_rate_arithmetic),
        ("segment extraction oracle", extraction_oracle),
        ("figure alignment fixture", figure_fixture),
        ("general budget", general_budget),
        ("prompt goldens", prompt_goldens),
        ("end-to-end stub run", end_to_end),
        ("sweep monotonicity", sweep_monotone),
        ("quality filter fixtures", quality_filter_fixtures),
        ("precision and recall", precision_recall_fixture),
        ("warm cache idempotence", warm_cache),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(()) => println!("PASS criterion {}: {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
