//! Parallel corpus ingestion: pre-tokenized pairs, Pharaoh word alignments and
//! per-pair annotation records.
//!
//! All three inputs are validated against each other when a [`Corpus`] is
//! assembled. A loaded corpus is immutable.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Line {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Inconsistent(String),
}

impl CorpusError {
    fn line(file: &str, line: usize, message: impl Into<String>) -> Self {
        Self::Line {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }

    /// 1-based line number for line-level errors.
    pub fn line_number(&self) -> Option<usize> {
        match self {
            Self::Line { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// Half-open token range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub const fn new(start: usize, end: usize) -> Self {
        Self { start, end }
    }

    pub const fn word(index: usize) -> Self {
        Self::new(index, index + 1)
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl From<(usize, usize)> for Span {
    fn from((start, end): (usize, usize)) -> Self {
        Self { start, end }
    }
}

impl From<Span> for (usize, usize) {
    fn from(s: Span) -> Self {
        (s.start, s.end)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub index: usize,
}

/// Splits pre-tokenized text on whitespace.
pub fn tokenize(text: &str) -> Vec<Token> {
    text.split_whitespace()
        .enumerate()
        .map(|(index, s)| Token {
            surface: s.to_string(),
            index,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranslationPair {
    pub id: String,
    pub source: Vec<Token>,
    pub reference: Vec<Token>,
}

impl TranslationPair {
    pub fn new(id: impl Into<String>, source: &str, reference: &str) -> Self {
        Self {
            id: id.into(),
            source: tokenize(source),
            reference: tokenize(reference),
        }
    }

    pub fn source_surfaces(&self) -> Vec<String> {
        self.source.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn reference_surfaces(&self) -> Vec<String> {
        self.reference.iter().map(|t| t.surface.clone()).collect()
    }

    pub fn source_text(&self) -> String {
        join_tokens(&self.source)
    }

    pub fn reference_text(&self) -> String {
        join_tokens(&self.reference)
    }
}

fn join_tokens(tokens: &[Token]) -> String {
    tokens
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    pub pair_id: String,
    /// `(source index, reference index)` links, 0-based.
    pub links: BTreeSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new(pair_id: impl Into<String>, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self {
            pair_id: pair_id.into(),
            links: links.into_iter().collect(),
        }
    }

    pub fn to_pharaoh(&self) -> String {
        self.links
            .iter()
            .map(|(i, j)| format!("{i}-{j}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Coarse part-of-speech classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Verb,
    Adj,
    Adv,
    Adp,
    Other,
}

impl PosTag {
    pub const ALL: [PosTag; 6] = [
        PosTag::Noun,
        PosTag::Verb,
        PosTag::Adj,
        PosTag::Adv,
        PosTag::Adp,
        PosTag::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Adp => "ADP",
            PosTag::Other => "OTHER",
        }
    }

    /// Content-word tags considered when picking a phrase head.
    pub fn is_head_candidate(self) -> bool {
        !matches!(self, PosTag::Other)
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown POS tag {s:?}"))
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeSpan {
    pub span: Span,
    pub ne_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub pair_id: String,
    pub pos: Vec<PosTag>,
    pub past_perfect: Vec<bool>,
    pub ne_spans: Vec<NeSpan>,
    pub phrase_spans_src: Vec<Span>,
    pub phrase_spans_ref: Vec<Span>,
}

impl Annotation {
    /// Annotation with every source token tagged `pos` and no spans.
    pub fn uniform(pair_id: impl Into<String>, len: usize, pos: PosTag) -> Self {
        Self {
            pair_id: pair_id.into(),
            pos: vec![pos; len],
            past_perfect: vec![false; len],
            ne_spans: Vec::new(),
            phrase_spans_src: Vec::new(),
            phrase_spans_ref: Vec::new(),
        }
    }

    pub fn ne_type_of(&self, span: Span) -> Option<&str> {
        self.ne_spans
            .iter()
            .find(|ne| ne.span == span)
            .map(|ne| ne.ne_type.as_str())
    }

    fn validate(&self, pair: &TranslationPair) -> Result<(), String> {
        let n = pair.source.len();
        let m = pair.reference.len();
        if self.pos.len() != n {
            return Err(format!(
                "pos has {} tags but source has {n} tokens",
                self.pos.len()
            ));
        }
        if self.past_perfect.len() != n {
            return Err(format!(
                "past_perfect has {} flags but source has {n} tokens",
                self.past_perfect.len()
            ));
        }
        let check = |what: &str, span: &Span, bound: usize| {
            if span.start >= span.end {
                Err(format!("{what} span {span} is empty"))
            } else if span.end > bound {
                Err(format!("{what} span {span} out of range for length {bound}"))
            } else {
                Ok(())
            }
        };
        for ne in &self.ne_spans {
            check("ne", &ne.span, n)?;
        }
        for s in &self.phrase_spans_src {
            check("phrases_src", s, n)?;
        }
        for s in &self.phrase_spans_ref {
            check("phrases_ref", s, m)?;
        }
        Ok(())
    }
}

/// Wire form of one annotations-file line.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct AnnotationRecord {
    id: String,
    pos: Vec<String>,
    past_perfect: Vec<bool>,
    #[serde(default)]
    ne: Vec<(usize, usize, String)>,
    #[serde(default)]
    phrases_src: Vec<(usize, usize)>,
    #[serde(default)]
    phrases_ref: Vec<(usize, usize)>,
}

impl AnnotationRecord {
    fn into_annotation(self) -> Result<Annotation, String> {
        let pos = self
            .pos
            .iter()
            .map(|t| t.parse())
            .collect::<Result<Vec<PosTag>, _>>()?;
        Ok(Annotation {
            pair_id: self.id,
            pos,
            past_perfect: self.past_perfect,
            ne_spans: self
                .ne
                .into_iter()
                .map(|(s, e, t)| NeSpan {
                    span: Span::new(s, e),
                    ne_type: t,
                })
                .collect(),
            phrase_spans_src: self.phrases_src.into_iter().map(Span::from).collect(),
            phrase_spans_ref: self.phrases_ref.into_iter().map(Span::from).collect(),
        })
    }

    fn from_annotation(a: &Annotation) -> Self {
        Self {
            id: a.pair_id.clone(),
            pos: a.pos.iter().map(|t| t.as_str().to_string()).collect(),
            past_perfect: a.past_perfect.clone(),
            ne: a
                .ne_spans
                .iter()
                .map(|ne| (ne.span.start, ne.span.end, ne.ne_type.clone()))
                .collect(),
            phrases_src: a.phrase_spans_src.iter().map(|&s| s.into()).collect(),
            phrases_ref: a.phrase_spans_ref.iter().map(|&s| s.into()).collect(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn display_name(path: &Path) -> String {
    path.display().to_string()
}

fn read_lines<R: BufRead>(reader: R, file: &str) -> Result<Vec<String>, CorpusError> {
    reader
        .lines()
        .map(|l| {
            l.map(|s| s.strip_suffix('\r').map(str::to_string).unwrap_or(s))
                .map_err(|source| CorpusError::Io {
                    path: PathBuf::from(file),
                    source,
                })
        })
        .collect()
}

/// Loads `id<TAB>source tokens<TAB>reference tokens` lines.
pub fn load_pairs(path: &Path) -> Result<Vec<TranslationPair>, CorpusError> {
    parse_pairs(open(path)?, &display_name(path))
}

pub fn parse_pairs<R: BufRead>(reader: R, file: &str) -> Result<Vec<TranslationPair>, CorpusError> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in read_lines(reader, file)?.into_iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(CorpusError::line(
                file,
                lineno,
                format!("expected 3 tab-separated fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(CorpusError::line(file, lineno, "empty pair id"));
        }
        let pair = TranslationPair::new(id, fields[1], fields[2]);
        if pair.source.is_empty() {
            return Err(CorpusError::line(file, lineno, "empty source token sequence"));
        }
        if pair.reference.is_empty() {
            return Err(CorpusError::line(
                file,
                lineno,
                "empty reference token sequence",
            ));
        }
        if !seen.insert(pair.id.clone()) {
            return Err(CorpusError::line(
                file,
                lineno,
                format!("duplicate pair id {:?}", pair.id),
            ));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Loads one Pharaoh alignment line per pair, in corpus order.
pub fn load_alignments(
    path: &Path,
    pairs: &[TranslationPair],
) -> Result<Vec<AlignmentSet>, CorpusError> {
    parse_alignments(open(path)?, &display_name(path), pairs)
}

pub fn parse_alignments<R: BufRead>(
    reader: R,
    file: &str,
    pairs: &[TranslationPair],
) -> Result<Vec<AlignmentSet>, CorpusError> {
    let lines = read_lines(reader, file)?;
    if lines.len() != pairs.len() {
        return Err(CorpusError::Inconsistent(format!(
            "{file}: {} alignment lines for {} pairs",
            lines.len(),
            pairs.len()
        )));
    }
    let mut out = Vec::with_capacity(pairs.len());
    for (i, (line, pair)) in lines.iter().zip(pairs).enumerate() {
        let lineno = i + 1;
        let mut links = BTreeSet::new();
        for item in line.split_whitespace() {
            let (a, b) = item.split_once('-').ok_or_else(|| {
                CorpusError::line(file, lineno, format!("malformed link {item:?}"))
            })?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| {
                    CorpusError::line(file, lineno, format!("non-numeric link {item:?}"))
                })
            };
            let (src, tgt) = (parse(a)?, parse(b)?);
            if src >= pair.source.len() {
                return Err(CorpusError::line(
                    file,
                    lineno,
                    format!("src index {src} out of range"),
                ));
            }
            if tgt >= pair.reference.len() {
                return Err(CorpusError::line(
                    file,
                    lineno,
                    format!("ref index {tgt} out of range"),
                ));
            }
            links.insert((src, tgt));
        }
        out.push(AlignmentSet {
            pair_id: pair.id.clone(),
            links,
        });
    }
    Ok(out)
}

/// Loads one JSON annotation object per line; output follows `pairs` order.
pub fn load_annotations(
    path: &Path,
    pairs: &[TranslationPair],
) -> Result<Vec<Annotation>, CorpusError> {
    parse_annotations(open(path)?, &display_name(path), pairs)
}

pub fn parse_annotations<R: BufRead>(
    reader: R,
    file: &str,
    pairs: &[TranslationPair],
) -> Result<Vec<Annotation>, CorpusError> {
    let index: HashMap<&str, usize> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.as_str(), i))
        .collect();
    let mut slots: Vec<Option<Annotation>> = vec![None; pairs.len()];
    for (i, line) in read_lines(reader, file)?.into_iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::line(file, lineno, e.to_string()))?;
        let &slot = index.get(record.id.as_str()).ok_or_else(|| {
            CorpusError::line(file, lineno, format!("unknown pair id {:?}", record.id))
        })?;
        let annotation = record
            .into_annotation()
            .map_err(|m| CorpusError::line(file, lineno, m))?;
        annotation
            .validate(&pairs[slot])
            .map_err(|m| CorpusError::line(file, lineno, m))?;
        if slots[slot].is_some() {
            return Err(CorpusError::line(
                file,
                lineno,
                format!("duplicate annotation for {:?}", annotation.pair_id),
            ));
        }
        slots[slot] = Some(annotation);
    }
    slots
        .into_iter()
        .zip(pairs)
        .map(|(a, p)| {
            a.ok_or_else(|| {
                CorpusError::Inconsistent(format!("{file}: no annotation for pair {:?}", p.id))
            })
        })
        .collect()
}

pub fn write_pairs<W: Write>(mut w: W, pairs: &[TranslationPair]) -> io::Result<()> {
    for p in pairs {
        writeln!(w, "{}\t{}\t{}", p.id, p.source_text(), p.reference_text())?;
    }
    Ok(())
}

pub fn write_alignments<W: Write>(mut w: W, alignments: &[AlignmentSet]) -> io::Result<()> {
    for a in alignments {
        writeln!(w, "{}", a.to_pharaoh())?;
    }
    Ok(())
}

pub fn write_annotations<W: Write>(mut w: W, annotations: &[Annotation]) -> io::Result<()> {
    for a in annotations {
        let line = serde_json::to_string(&AnnotationRecord::from_annotation(a))
            .map_err(io::Error::other)?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// One corpus pair with its alignment and annotation.
#[derive(Clone, Copy, Debug)]
pub struct Entry<'a> {
    pub pair: &'a TranslationPair,
    pub alignment: &'a AlignmentSet,
    pub annotation: &'a Annotation,
}

/// Validated corpus. Pairs, alignments and annotations are index-parallel.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    pairs: Vec<TranslationPair>,
    alignments: Vec<AlignmentSet>,
    annotations: Vec<Annotation>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(
        pairs: Vec<TranslationPair>,
        alignments: Vec<AlignmentSet>,
        annotations: Vec<Annotation>,
    ) -> Result<Self, CorpusError> {
        if alignments.len() != pairs.len() || annotations.len() != pairs.len() {
            return Err(CorpusError::Inconsistent(format!(
                "{} pairs, {} alignments, {} annotations",
                pairs.len(),
                alignments.len(),
                annotations.len()
            )));
        }
        let mut index = HashMap::with_capacity(pairs.len());
        for (i, ((p, al), an)) in pairs.iter().zip(&alignments).zip(&annotations).enumerate() {
            if p.source.is_empty() || p.reference.is_empty() {
                return Err(CorpusError::Inconsistent(format!(
                    "pair {:?} has an empty side",
                    p.id
                )));
            }
            if index.insert(p.id.clone(), i).is_some() {
                return Err(CorpusError::Inconsistent(format!("duplicate pair id {:?}", p.id)));
            }
            if al.pair_id != p.id || an.pair_id != p.id {
                return Err(CorpusError::Inconsistent(format!(
                    "entry {i}: pair {:?} does not match alignment {:?} / annotation {:?}",
                    p.id, al.pair_id, an.pair_id
                )));
            }
            if let Some(&(s, r)) = al
                .links
                .iter()
                .find(|&&(s, r)| s >= p.source.len() || r >= p.reference.len())
            {
                return Err(CorpusError::Inconsistent(format!(
                    "pair {:?}: link {s}-{r} out of range",
                    p.id
                )));
            }
            an.validate(p)
                .map_err(|m| CorpusError::Inconsistent(format!("pair {:?}: {m}", p.id)))?;
        }
        Ok(Self {
            pairs,
            alignments,
            annotations,
            index,
        })
    }

    pub fn load(pairs: &Path, alignments: &Path, annotations: &Path) -> Result<Self, CorpusError> {
        let p = load_pairs(pairs)?;
        let al = load_alignments(alignments, &p)?;
        let an = load_annotations(annotations, &p)?;
        Self::new(p, al, an)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[TranslationPair] {
        &self.pairs
    }

    pub fn alignments(&self) -> &[AlignmentSet] {
        &self.alignments
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry<'_>> {
        self.pairs
            .iter()
            .zip(&self.alignments)
            .zip(&self.annotations)
            .map(|((pair, alignment), annotation)| Entry {
                pair,
                alignment,
                annotation,
            })
    }

    pub fn get(&self, pair_id: &str) -> Option<Entry<'_>> {
        self.index.get(pair_id).map(|&i| Entry {
            pair: &self.pairs[i],
            alignment: &self.alignments[i],
            annotation: &self.annotations[i],
        })
    }
}
