//! Test-case generation: mask selected segments on both sides, ask an infill
//! backend to refill them, then drop unchanged pairs and pairs whose
//! pseudo-reference drifts in reference-free quality.

mod prompt;

use std::io::{self, BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use prompt::{
    count_masks, format_reply, general_prompt, ner_prompt, parse_response, pos_prompt,
    render_prompt, split_reference, tense_prompt, ParseError, PromptMetadata, PromptRequest,
    TemplateId, CHINESE_LABEL, ENGLISH_LABEL, OUTPUT_FORMAT_CLAUSE, SYSTEM_PROMPT,
};

use crate::backends::{BackendError, InfillBackend, RefFreeScorer};
use crate::corpus::{Corpus, TranslationPair};
use crate::segmentation::{
    extract_editable, filter_by_capability, plan_selection, Capability, EditableSegment,
    SelectionError, SelectionPlan, SpanPair,
};

pub const MASK_TOKEN: &str = "<mask>";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseError {
    #[error("pair {pair_id:?}: plan segments {a:?} and {b:?} overlap")]
    OverlappingSegments {
        pair_id: String,
        a: SpanPair,
        b: SpanPair,
    },
    #[error("pair {pair_id:?}: segment {span:?} out of range")]
    SegmentOutOfRange { pair_id: String, span: SpanPair },
    #[error("pair {pair_id:?}: missing prompt metadata: {what}")]
    MissingMetadata { pair_id: String, what: String },
    #[error("mask count mismatch: {masks} masks, {fills} fills")]
    FillCountMismatch { masks: usize, fills: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// One masked segment with the surfaces it replaced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSegment {
    pub segment: EditableSegment,
    pub source_surface: Vec<String>,
    pub reference_surface: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedPair {
    pub pair_id: String,
    pub masked_source: Vec<String>,
    pub masked_reference: Vec<String>,
    /// Ordered by source start. Source mask `k` belongs to segment `k`;
    /// reference masks follow reference order, which may differ.
    pub segments: Vec<MaskedSegment>,
    pub plan: SelectionPlan,
}

impl MaskedPair {
    /// Replaces the `k`-th mask on each side with `source_fills[k]` /
    /// `reference_fills[k]`.
    pub fn fill(
        &self,
        source_fills: &[Vec<String>],
        reference_fills: &[Vec<String>],
    ) -> Result<(Vec<String>, Vec<String>), CaseError> {
        Ok((
            fill_masks(&self.masked_source, source_fills)?,
            fill_masks(&self.masked_reference, reference_fills)?,
        ))
    }

    /// Inverse of masking: puts the original surfaces back.
    pub fn unmask(&self) -> (Vec<String>, Vec<String>) {
        let src: Vec<_> = self.segments.iter().map(|s| s.source_surface.clone()).collect();
        let mut by_ref: Vec<&MaskedSegment> = self.segments.iter().collect();
        by_ref.sort_by_key(|s| s.segment.ref_span().start);
        let tgt: Vec<_> = by_ref.iter().map(|s| s.reference_surface.clone()).collect();
        self.fill(&src, &tgt)
            .expect("mask count matches segment count by construction")
    }
}

/// Replaces each `<mask>` token, left to right, by the next fill.
pub fn fill_masks(tokens: &[String], fills: &[Vec<String>]) -> Result<Vec<String>, CaseError> {
    let masks = count_masks(tokens);
    if masks != fills.len() {
        return Err(CaseError::FillCountMismatch {
            masks,
            fills: fills.len(),
        });
    }
    let mut fills = fills.iter();
    let mut out = Vec::with_capacity(tokens.len());
    for t in tokens {
        if t == MASK_TOKEN {
            out.extend(fills.next().into_iter().flatten().cloned());
        } else {
            out.push(t.clone());
        }
    }
    Ok(out)
}

pub fn mask_pair(pair: &TranslationPair, plan: &SelectionPlan) -> Result<MaskedPair, CaseError> {
    let mut chosen: Vec<&EditableSegment> = plan.chosen.iter().collect();
    chosen.sort_by_key(|s| s.src_span().start);
    for s in &chosen {
        if s.src_span().is_empty()
            || s.ref_span().is_empty()
            || s.src_span().end > pair.source.len()
            || s.ref_span().end > pair.reference.len()
        {
            return Err(CaseError::SegmentOutOfRange {
                pair_id: pair.id.clone(),
                span: s.span_pair,
            });
        }
    }
    for (i, a) in chosen.iter().enumerate() {
        for b in &chosen[i + 1..] {
            if a.span_pair.overlaps(&b.span_pair) {
                return Err(CaseError::OverlappingSegments {
                    pair_id: pair.id.clone(),
                    a: a.span_pair,
                    b: b.span_pair,
                });
            }
        }
    }
    let mut source = pair.source_surfaces();
    let mut by_src = chosen.clone();
    by_src.sort_by_key(|s| std::cmp::Reverse(s.src_span().start));
    for s in &by_src {
        let span = s.src_span();
        source.splice(span.start..span.end, [MASK_TOKEN.to_string()]);
    }
    let mut reference = pair.reference_surfaces();
    let mut by_ref = chosen.clone();
    by_ref.sort_by_key(|s| std::cmp::Reverse(s.ref_span().start));
    for s in &by_ref {
        let span = s.ref_span();
        reference.splice(span.start..span.end, [MASK_TOKEN.to_string()]);
    }
    let surfaces = |tokens: &[crate::corpus::Token], span: crate::corpus::Span| {
        tokens[span.start..span.end]
            .iter()
            .map(|t| t.surface.clone())
            .collect::<Vec<_>>()
    };
    let segments: Vec<MaskedSegment> = chosen
        .iter()
        .map(|s| MaskedSegment {
            segment: (*s).clone(),
            source_surface: surfaces(&pair.source, s.src_span()),
            reference_surface: surfaces(&pair.reference, s.ref_span()),
        })
        .collect();
    Ok(MaskedPair {
        pair_id: pair.id.clone(),
        masked_source: source,
        masked_reference: reference,
        segments,
        plan: plan.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    Pending,
    Kept,
    DroppedIdentical,
    /// Absolute reference-free quality difference that exceeded beta.
    DroppedQuality(f64),
    Errored(String),
}

impl FilterStatus {
    pub fn is_kept(&self) -> bool {
        matches!(self, FilterStatus::Kept)
    }

    pub fn is_errored(&self) -> bool {
        matches!(self, FilterStatus::Errored(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub pair_id: String,
    pub capability: Capability,
    #[serde(rename = "x_prime")]
    pub source_prime: Vec<String>,
    #[serde(rename = "r_prime")]
    pub reference_prime: Vec<String>,
    pub filter_status: FilterStatus,
    pub seed: u64,
    pub template_id: TemplateId,
    pub raw_response_digest: Option<String>,
    pub plan_index: usize,
    /// Masked span pairs on the original pair.
    pub segments: Vec<SpanPair>,
    #[serde(skip)]
    pub raw_response: Option<String>,
}

impl TestCase {
    pub fn source_prime_text(&self) -> String {
        self.source_prime.join(" ")
    }

    pub fn reference_prime_text(&self) -> String {
        self.reference_prime.join(" ")
    }
}

pub fn digest_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// `DroppedIdentical` iff both sides equal the original token-wise.
pub fn dedup(case: &TestCase, original: &TranslationPair) -> FilterStatus {
    if case.source_prime == original.source_surfaces()
        && case.reference_prime == original.reference_surfaces()
    {
        FilterStatus::DroppedIdentical
    } else {
        FilterStatus::Pending
    }
}

/// Keeps the case iff `|q(x, r) - q(x', r')| <= beta` under a reference-free
/// scorer.
pub fn quality_filter(
    case: &TestCase,
    original: &TranslationPair,
    scorer: &dyn RefFreeScorer,
    beta: f64,
) -> Result<FilterStatus, BackendError> {
    let q = scorer.score_ref_free(&original.source_text(), &original.reference_text())?;
    let q_prime = scorer.score_ref_free(&case.source_prime_text(), &case.reference_prime_text())?;
    let diff = (q.value() - q_prime.value()).abs();
    Ok(if diff <= beta {
        FilterStatus::Kept
    } else {
        FilterStatus::DroppedQuality(diff)
    })
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub capability: Capability,
    pub per_pair: usize,
    pub beta: f64,
    pub seed: u64,
    /// Concurrent backend calls; `0` uses the rayon default.
    pub jobs: usize,
}

#[derive(Clone, Debug, Default)]
pub struct GenerationOutcome {
    pub cases: Vec<TestCase>,
    /// Pairs that produced no plan, with the reason.
    pub skipped: Vec<(String, SelectionError)>,
}

impl GenerationOutcome {
    pub fn kept(&self) -> impl Iterator<Item = &TestCase> {
        self.cases.iter().filter(|c| c.filter_status.is_kept())
    }
}

/// Stable per-pair seed derived from the run seed and the pair id.
pub fn pair_seed(seed: u64, pair_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(pair_id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"))
}

struct WorkItem<'a> {
    pair: &'a TranslationPair,
    annotation: &'a crate::corpus::Annotation,
    plan: SelectionPlan,
    plan_index: usize,
}

pub fn generate_cases(
    corpus: &Corpus,
    options: &GenerateOptions,
    infill: &dyn InfillBackend,
    scorer: &dyn RefFreeScorer,
) -> GenerationOutcome {
    let mut outcome = GenerationOutcome::default();
    let mut work = Vec::new();
    for entry in corpus.entries() {
        let segments = extract_editable(entry.pair, entry.alignment, entry.annotation);
        let eligible = filter_by_capability(&segments, entry.annotation, options.capability);
        let seed = pair_seed(options.seed, &entry.pair.id);
        match plan_selection(entry.pair, &eligible, options.capability, options.per_pair, seed) {
            Ok(plans) => work.extend(plans.into_iter().enumerate().map(|(plan_index, plan)| {
                WorkItem {
                    pair: entry.pair,
                    annotation: entry.annotation,
                    plan,
                    plan_index,
                }
            })),
            Err(e) => outcome.skipped.push((entry.pair.id.clone(), e)),
        }
    }

    let run = || -> Vec<TestCase> {
        work.par_iter()
            .map(|item| run_case(item, options, infill, scorer))
            .collect()
    };
    outcome.cases = match rayon::ThreadPoolBuilder::new().num_threads(options.jobs).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    outcome
}

fn run_case(
    item: &WorkItem<'_>,
    options: &GenerateOptions,
    infill: &dyn InfillBackend,
    scorer: &dyn RefFreeScorer,
) -> TestCase {
    let mut case = TestCase {
        case_id: format!(
            "{}-{}-{}",
            item.pair.id,
            options.capability.as_str(),
            item.plan_index
        ),
        pair_id: item.pair.id.clone(),
        capability: options.capability,
        source_prime: Vec::new(),
        reference_prime: Vec::new(),
        filter_status: FilterStatus::Pending,
        seed: item.plan.seed,
        template_id: TemplateId::for_capability(options.capability),
        raw_response_digest: None,
        plan_index: item.plan_index,
        segments: item.plan.chosen.iter().map(|s| s.span_pair).collect(),
        raw_response: None,
    };
    if let Err(e) = fill_case(&mut case, item, options, infill, scorer) {
        case.filter_status = FilterStatus::Errored(e.to_string());
    }
    case
}

fn fill_case(
    case: &mut TestCase,
    item: &WorkItem<'_>,
    options: &GenerateOptions,
    infill: &dyn InfillBackend,
    scorer: &dyn RefFreeScorer,
) -> Result<(), CaseError> {
    let masked = mask_pair(item.pair, &item.plan)?;
    let prompt = render_prompt(&masked, options.capability, item.annotation)?;
    let raw = infill.infill(&prompt)?;
    case.raw_response_digest = Some(digest_hex(&raw));
    case.raw_response = Some(raw);
    let (x_prime, r_prime) = parse_response(case.raw_response.as_deref().unwrap_or_default())?;
    case.source_prime = x_prime;
    case.reference_prime = r_prime;
    case.filter_status = dedup(case, item.pair);
    if case.filter_status == FilterStatus::Pending {
        case.filter_status = quality_filter(case, item.pair, scorer, options.beta)?;
    }
    Ok(())
}

pub fn write_cases<W: Write>(mut w: W, cases: &[TestCase]) -> io::Result<()> {
    for c in cases {
        let line = serde_json::to_string(c).map_err(io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_cases<R: BufRead>(reader: R) -> io::Result<Vec<TestCase>> {
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
