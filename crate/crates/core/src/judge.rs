//! Pass/fail judgement of an MT system on one test case.
//!
//! A system passes on `x'` when its translation `y` of the original `x` scores
//! at least `alpha`, and the translations `y` and `y'` differ in quality by at
//! most `beta`. Both comparisons are exact: no epsilon is applied.

use std::io::{self, BufRead, Write};

use num_traits::Float;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backends::{BackendError, RefBasedScorer, Translator};
use crate::casegen::TestCase;
use crate::corpus::Corpus;
use crate::segmentation::Capability;
use crate::Percentage;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig<S> {
    pub alpha: S,
    pub beta: S,
}

impl<S: Float> JudgeConfig<S> {
    pub fn new(alpha: S, beta: S) -> Option<Self> {
        (alpha.is_finite() && beta.is_finite()).then_some(Self { alpha, beta })
    }
}

impl<S: Float> Default for JudgeConfig<S> {
    fn default() -> Self {
        Self {
            alpha: S::from(0.8).expect("0.8 is representable"),
            beta: S::from(0.05).expect("0.05 is representable"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranslationRecord<S> {
    pub case_id: String,
    pub system_id: String,
    pub capability: Capability,
    pub y: String,
    pub y_prime: String,
    pub qual_y: S,
    pub qual_y_prime: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailReason {
    LowBaseQuality,
    LargeDiff,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict<S> {
    pub case_id: String,
    pub system_id: String,
    pub qual_y: S,
    pub qual_y_prime: S,
    pub diff: S,
    pub passed: bool,
    pub fail_reason: Option<FailReason>,
    pub capability: Capability,
}

/// `|q1 - q2|`.
pub fn diff<S: Float>(q1: S, q2: S) -> S {
    (q1 - q2).abs()
}

pub fn judge_case<S: Float>(record: &TranslationRecord<S>, config: &JudgeConfig<S>) -> Verdict<S> {
    let d = diff(record.qual_y, record.qual_y_prime);
    let fail_reason = if record.qual_y < config.alpha {
        Some(FailReason::LowBaseQuality)
    } else if d > config.beta {
        Some(FailReason::LargeDiff)
    } else {
        None
    };
    Verdict {
        case_id: record.case_id.clone(),
        system_id: record.system_id.clone(),
        qual_y: record.qual_y,
        qual_y_prime: record.qual_y_prime,
        diff: d,
        passed: fail_reason.is_none(),
        fail_reason,
        capability: record.capability,
    }
}

pub fn judge_all<S: Float>(
    records: &[TranslationRecord<S>],
    config: &JudgeConfig<S>,
) -> Vec<Verdict<S>> {
    records.iter().map(|r| judge_case(r, config)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JudgeError {
    #[error("pass rate of an empty verdict set is undefined")]
    EmptyVerdictSet,
}

/// How cases failing the base-quality threshold enter the pass rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    #[default]
    CountLowBaseAsFailure,
    ExcludeLowBase,
}

pub fn pass_rate<S>(verdicts: &[Verdict<S>]) -> Result<Percentage, JudgeError> {
    pass_rate_with(verdicts, PoolPolicy::CountLowBaseAsFailure)
}

pub fn pass_rate_with<S>(verdicts: &[Verdict<S>], policy: PoolPolicy) -> Result<Percentage, JudgeError> {
    let pool = verdicts.iter().filter(|v| {
        policy == PoolPolicy::CountLowBaseAsFailure
            || v.fail_reason != Some(FailReason::LowBaseQuality)
    });
    let (passed, total) = pool.fold((0u64, 0u64), |(p, t), v| (p + u64::from(v.passed), t + 1));
    Percentage::new(passed, total).ok_or(JudgeError::EmptyVerdictSet)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell<S> {
    pub alpha: S,
    pub beta: S,
    pub pass_rate: Percentage,
}

/// Pass rate for every `(alpha, beta)` in `alphas x betas`, alpha-major.
/// Records are re-judged from their stored scores.
pub fn sweep<S: Float>(
    records: &[TranslationRecord<S>],
    alphas: &[S],
    betas: &[S],
) -> Result<Vec<SweepCell<S>>, JudgeError> {
    let mut cells = Vec::with_capacity(alphas.len() * betas.len());
    for &alpha in alphas {
        for &beta in betas {
            let config = JudgeConfig { alpha, beta };
            let verdicts = judge_all(records, &config);
            cells.push(SweepCell {
                alpha,
                beta,
                pass_rate: pass_rate(&verdicts)?,
            });
        }
    }
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFailure {
    pub case_id: String,
    pub system_id: String,
    pub capability: Capability,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreOutcome {
    pub records: Vec<TranslationRecord<f64>>,
    pub errored: Vec<RecordFailure>,
}

/// Translates `x` and `x'` with `translator` and scores `y` against `r` and
/// `y'` against `r'`. Only kept cases are scored; backend failures are
/// collected per case.
pub fn score_records(
    cases: &[TestCase],
    translator: &dyn Translator,
    scorer: &dyn RefBasedScorer,
    corpus: &Corpus,
    jobs: usize,
) -> ScoreOutcome {
    let kept: Vec<&TestCase> = cases.iter().filter(|c| c.filter_status.is_kept()).collect();
    let run = || -> Vec<Result<TranslationRecord<f64>, RecordFailure>> {
        kept.par_iter()
            .map(|case| {
                score_one(case, translator, scorer, corpus).map_err(|message| RecordFailure {
                    case_id: case.case_id.clone(),
                    system_id: translator.system_id().to_string(),
                    capability: case.capability,
                    message,
                })
            })
            .collect()
    };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let mut outcome = ScoreOutcome::default();
    for r in results {
        match r {
            Ok(rec) => outcome.records.push(rec),
            Err(f) => outcome.errored.push(f),
        }
    }
    outcome
}

fn score_one(
    case: &TestCase,
    translator: &dyn Translator,
    scorer: &dyn RefBasedScorer,
    corpus: &Corpus,
) -> Result<TranslationRecord<f64>, String> {
    let entry = corpus
        .get(&case.pair_id)
        .ok_or_else(|| format!("case {} references unknown pair {}", case.case_id, case.pair_id))?;
    let x = entry.pair.source_text();
    let r = entry.pair.reference_text();
    let x_prime = case.source_prime_text();
    let r_prime = case.reference_prime_text();
    let backend = |e: BackendError| e.to_string();
    let y = translator.translate(&x).map_err(backend)?;
    let y_prime = translator.translate(&x_prime).map_err(backend)?;
    let qual_y = scorer.score_ref_based(&x, &y, &r).map_err(backend)?;
    let qual_y_prime = scorer
        .score_ref_based(&x_prime, &y_prime, &r_prime)
        .map_err(backend)?;
    Ok(TranslationRecord {
        case_id: case.case_id.clone(),
        system_id: translator.system_id().to_string(),
        capability: case.capability,
        y,
        y_prime,
        qual_y: qual_y.value(),
        qual_y_prime: qual_y_prime.value(),
    })
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> io::Result<()> {
    for item in items {
        let line = serde_json::to_string(item).map_err(io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead, T: DeserializeOwned>(reader: R) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?);
    }
    Ok(out)
}
