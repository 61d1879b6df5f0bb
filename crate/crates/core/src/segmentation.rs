//! Editable segment extraction and per-capability selection.
//!
//! A source span is editable when every alignment link leaving it lands in a
//! single consecutive reference span and nothing outside the source span links
//! into that reference span. Source spans are single words or annotated
//! phrases; reference spans are single words or annotated phrases.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AlignmentSet, Annotation, PosTag, Span, TranslationPair};

/// Upper bound on plans drawn for one pair.
pub const MAX_PLANS_PER_PAIR: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanPair {
    #[serde(rename = "src")]
    pub src_span: Span,
    #[serde(rename = "ref")]
    pub ref_span: Span,
}

impl SpanPair {
    pub fn new(src_span: Span, ref_span: Span) -> Self {
        Self { src_span, ref_span }
    }

    pub fn overlaps(&self, other: &SpanPair) -> bool {
        self.src_span.overlaps(&other.src_span) || self.ref_span.overlaps(&other.ref_span)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    WordToUnit,
    PhraseToUnit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditableSegment {
    pub span_pair: SpanPair,
    pub kind: SegmentKind,
    /// Tag of the sole word, or of the phrase head.
    pub pos_class: PosTag,
    pub ne_type: Option<String>,
    /// Head is a verb not already in the past perfect.
    pub tense_eligible: bool,
}

impl EditableSegment {
    pub fn src_span(&self) -> Span {
        self.span_pair.src_span
    }

    pub fn ref_span(&self) -> Span {
        self.span_pair.ref_span
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Capability {
    Noun,
    Verb,
    Adj,
    Adv,
    Prep,
    Others,
    Tense,
    #[serde(rename = "NER")]
    Ner,
    General,
}

impl Capability {
    pub const ALL: [Capability; 9] = [
        Capability::Noun,
        Capability::Verb,
        Capability::Adj,
        Capability::Adv,
        Capability::Prep,
        Capability::Others,
        Capability::Tense,
        Capability::Ner,
        Capability::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Noun => "Noun",
            Capability::Verb => "Verb",
            Capability::Adj => "Adj",
            Capability::Adv => "Adv",
            Capability::Prep => "Prep",
            Capability::Others => "Others",
            Capability::Tense => "Tense",
            Capability::Ner => "NER",
            Capability::General => "General",
        }
    }

    /// The POS class a POS capability targets.
    pub fn pos_tag(self) -> Option<PosTag> {
        match self {
            Capability::Noun => Some(PosTag::Noun),
            Capability::Verb => Some(PosTag::Verb),
            Capability::Adj => Some(PosTag::Adj),
            Capability::Adv => Some(PosTag::Adv),
            Capability::Prep => Some(PosTag::Adp),
            Capability::Others => Some(PosTag::Other),
            _ => None,
        }
    }

    fn accepts(self, segment: &EditableSegment, annotation: &Annotation) -> bool {
        match self {
            Capability::Tense => segment.tense_eligible,
            Capability::Ner => annotation.ne_type_of(segment.src_span()).is_some(),
            Capability::General => true,
            pos => pos.pos_tag() == Some(segment.pos_class),
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Capability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown capability {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub pair_id: String,
    pub capability: Capability,
    /// Ordered by source start.
    pub chosen: Vec<EditableSegment>,
    pub seed: u64,
}

impl SelectionPlan {
    pub fn masked_source_words(&self) -> usize {
        self.chosen.iter().map(|s| s.src_span().len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SelectionError {
    #[error("pair {0:?} has no eligible segments")]
    NoEligibleSegments(String),
    #[error("pair {0:?}: no segment fits the General edit budget")]
    BudgetUnsatisfiable(String),
    #[error("plan count must be in 1..={MAX_PLANS_PER_PAIR}, got {0}")]
    InvalidCount(usize),
}

/// Head token of `span`: last content-tagged token, else the last token.
pub fn head_index(span: Span, pos: &[PosTag]) -> usize {
    (span.start..span.end)
        .rev()
        .find(|&i| pos[i].is_head_candidate())
        .unwrap_or(span.end - 1)
}

/// Strict General budget: total masked source words `< 0.2 * len(x)`.
pub fn within_general_budget(masked_words: usize, source_len: usize) -> bool {
    5 * masked_words < source_len
}

/// All solely-aligned span pairs, before overlap resolution.
pub fn editable_candidates(
    pair: &TranslationPair,
    alignment: &AlignmentSet,
    annotation: &Annotation,
) -> Vec<EditableSegment> {
    let n = pair.source.len();
    let m = pair.reference.len();
    let mut src_links = vec![Vec::new(); n];
    let mut ref_links = vec![Vec::new(); m];
    for &(i, j) in &alignment.links {
        src_links[i].push(j);
        ref_links[j].push(i);
    }
    let ref_phrases: HashSet<Span> = annotation.phrase_spans_ref.iter().copied().collect();

    let src_spans: BTreeSet<Span> = (0..n)
        .map(Span::word)
        .chain(annotation.phrase_spans_src.iter().copied())
        .collect();

    let mut out = Vec::new();
    for src in src_spans {
        if src_links[src.start].is_empty() || src_links[src.end - 1].is_empty() {
            continue;
        }
        let linked = src_links[src.start..src.end].iter().flatten();
        let (lo, hi) = linked.fold((usize::MAX, 0), |(lo, hi), &j| (lo.min(j), hi.max(j)));
        let reference = Span::new(lo, hi + 1);
        if reference.len() != 1 && !ref_phrases.contains(&reference) {
            continue;
        }
        let sole = (reference.start..reference.end)
            .all(|j| ref_links[j].iter().all(|&i| src.contains(i)));
        if !sole {
            continue;
        }
        out.push(describe(SpanPair::new(src, reference), annotation));
    }
    out
}

fn describe(span_pair: SpanPair, annotation: &Annotation) -> EditableSegment {
    let src = span_pair.src_span;
    let head = head_index(src, &annotation.pos);
    let pos_class = annotation.pos[head];
    EditableSegment {
        span_pair,
        kind: if src.len() == 1 {
            SegmentKind::WordToUnit
        } else {
            SegmentKind::PhraseToUnit
        },
        pos_class,
        ne_type: annotation.ne_type_of(src).map(str::to_string),
        tense_eligible: pos_class == PosTag::Verb && !annotation.past_perfect[head],
    }
}

/// Editable segments of one pair, overlap-resolved, ordered by source start.
pub fn extract_editable(
    pair: &TranslationPair,
    alignment: &AlignmentSet,
    annotation: &Annotation,
) -> Vec<EditableSegment> {
    resolve_overlaps(editable_candidates(pair, alignment, annotation))
}

/// Keeps longer segments over overlapping shorter ones. Equal lengths go to
/// the smaller source start, then the smaller reference start.
pub fn resolve_overlaps(mut segments: Vec<EditableSegment>) -> Vec<EditableSegment> {
    segments.sort_by_key(|s| {
        (
            std::cmp::Reverse(s.src_span().len()),
            s.src_span().start,
            s.ref_span().start,
        )
    });
    let mut kept: Vec<EditableSegment> = Vec::with_capacity(segments.len());
    for s in segments {
        if !kept.iter().any(|k| k.span_pair.overlaps(&s.span_pair)) {
            kept.push(s);
        }
    }
    kept.sort_by_key(|s| (s.src_span().start, s.ref_span().start));
    kept
}

pub fn filter_by_capability(
    segments: &[EditableSegment],
    annotation: &Annotation,
    capability: Capability,
) -> Vec<EditableSegment> {
    segments
        .iter()
        .filter(|s| capability.accepts(s, annotation))
        .cloned()
        .collect()
}

/// Draws up to `count` pairwise-distinct plans. Single-target capabilities
/// pick one segment per plan without replacement; General fills a seeded
/// random order first-fit under the strict budget.
pub fn plan_selection(
    pair: &TranslationPair,
    segments: &[EditableSegment],
    capability: Capability,
    count: usize,
    seed: u64,
) -> Result<Vec<SelectionPlan>, SelectionError> {
    if count == 0 || count > MAX_PLANS_PER_PAIR {
        return Err(SelectionError::InvalidCount(count));
    }
    if segments.is_empty() {
        return Err(SelectionError::NoEligibleSegments(pair.id.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = |chosen: Vec<EditableSegment>| SelectionPlan {
        pair_id: pair.id.clone(),
        capability,
        chosen,
        seed,
    };

    if capability != Capability::General {
        let mut order: Vec<usize> = (0..segments.len()).collect();
        order.shuffle(&mut rng);
        return Ok(order
            .into_iter()
            .take(count)
            .map(|i| plan(vec![segments[i].clone()]))
            .collect());
    }

    let n = pair.source.len();
    if !segments
        .iter()
        .any(|s| within_general_budget(s.src_span().len(), n))
    {
        return Err(SelectionError::BudgetUnsatisfiable(pair.id.clone()));
    }
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut plans = Vec::new();
    let mut order: Vec<usize> = (0..segments.len()).collect();
    for _ in 0..count * 50 {
        order.shuffle(&mut rng);
        let mut used = 0;
        let mut picked = Vec::new();
        for &i in &order {
            let len = segments[i].src_span().len();
            if within_general_budget(used + len, n) {
                used += len;
                picked.push(i);
            }
        }
        picked.sort_by_key(|&i| segments[i].src_span().start);
        if seen.insert(picked.clone()) {
            plans.push(plan(picked.into_iter().map(|i| segments[i].clone()).collect()));
            if plans.len() == count {
                break;
            }
        }
    }
    Ok(plans)
}
