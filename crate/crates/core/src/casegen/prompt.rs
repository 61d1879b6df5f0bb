//! Infill prompt templates and reply parsing.
//!
//! Templates are reproduced byte-for-byte; `\n` in the instruction text is the
//! two-character sequence backslash + `n`, exactly as the templates print it.

use serde::{Deserialize, Serialize};

use super::{CaseError, MaskedPair, MASK_TOKEN};
use crate::corpus::{Annotation, PosTag};
use crate::segmentation::{Capability, SegmentKind};

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant that translates English to Chinese.";

/// Output-format clause shared by all infill templates.
pub const OUTPUT_FORMAT_CLAUSE: &str = "'Filled English:{} \\n Filled Chinese:{}'";

pub const ENGLISH_LABEL: &str = "Filled English:";
pub const CHINESE_LABEL: &str = "Filled Chinese:";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Pos,
    Tense,
    Ner,
    General,
    DirectTranslation,
}

impl TemplateId {
    pub fn for_capability(capability: Capability) -> Self {
        match capability {
            Capability::Tense => TemplateId::Tense,
            Capability::Ner => TemplateId::Ner,
            Capability::General => TemplateId::General,
            _ => TemplateId::Pos,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Pos => "pos",
            TemplateId::Tense => "tense",
            TemplateId::Ner => "ner",
            TemplateId::General => "general",
            TemplateId::DirectTranslation => "direct_translation",
        }
    }
}

/// Slot values used to instantiate a template, kept for provenance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMetadata {
    pub masked_source: Vec<String>,
    pub masked_reference: Vec<String>,
    pub original_source_segments: Vec<String>,
    pub original_reference_segments: Vec<String>,
    pub pos_label: Option<String>,
    pub ne_type: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub capability: Capability,
    pub template_id: TemplateId,
    pub system_text: String,
    /// User-turn content.
    pub rendered_text: String,
    pub metadata: PromptMetadata,
}

fn pos_name(tag: PosTag) -> &'static str {
    match tag {
        PosTag::Noun => "noun",
        PosTag::Verb => "verb",
        PosTag::Adj => "adjective",
        PosTag::Adv => "adverb",
        PosTag::Adp => "preposition",
        PosTag::Other => "other",
    }
}

fn tail(masked_english: &str, masked_chinese: &str) -> String {
    format!(
        "Finally, please output the filled English sentence and its filled Chinese translation in the format of {OUTPUT_FORMAT_CLAUSE}. \\n English Sentence: {masked_english}. \\n Chinese Translation: {masked_chinese}"
    )
}

fn fill_template(
    target: &str,
    constraint: &str,
    chinese_clause: &str,
    fix_clause: &str,
    masked_english: &str,
    masked_chinese: &str,
) -> String {
    format!(
        "You are given an English sentence and its Chinese translation. In each sentence, {target} has been masked with the '<mask>' token. Your task is to first fill in the masked token in the English sentence using {constraint} without modifying any of the unmasked tokens. Then, use the filled English sentence to fill in the masked token in its corresponding Chinese translation{chinese_clause}. If necessary, make modifications to the filled Chinese translation to ensure {fix_clause} while preserving the meaning. {}",
        tail(masked_english, masked_chinese)
    )
}

/// POS-capability user prompt.
pub fn pos_prompt(pos_label: &str, original: &str, masked_english: &str, masked_chinese: &str) -> String {
    fill_template(
        &format!("an {pos_label}"),
        &format!("an {pos_label} other than {original}"),
        "",
        "fluency",
        masked_english,
        masked_chinese,
    )
}

pub fn tense_prompt(masked_english: &str, masked_chinese: &str) -> String {
    fill_template(
        "a verb/verb phrase",
        "a past perfect tense verb/verb phrase",
        " in the past perfect tense",
        "the correctness of tense",
        masked_english,
        masked_chinese,
    )
}

pub fn ner_prompt(ne_type: &str, original: &str, masked_english: &str, masked_chinese: &str) -> String {
    fill_template(
        &format!("an {ne_type}"),
        &format!("an {ne_type} other than {original}"),
        "",
        "fluency",
        masked_english,
        masked_chinese,
    )
}

/// POS template with the target relaxed to any word or phrase.
pub fn general_prompt(masked_english: &str, masked_chinese: &str) -> String {
    fill_template(
        "a word/phrase",
        "a word/phrase other than the original",
        "",
        "fluency",
        masked_english,
        masked_chinese,
    )
}

pub fn render_prompt(
    masked: &MaskedPair,
    capability: Capability,
    annotation: &Annotation,
) -> Result<PromptRequest, CaseError> {
    let masked_english = masked.masked_source.join(" ");
    let masked_chinese = masked.masked_reference.join(" ");
    let mut metadata = PromptMetadata {
        masked_source: masked.masked_source.clone(),
        masked_reference: masked.masked_reference.clone(),
        original_source_segments: masked
            .segments
            .iter()
            .map(|s| s.source_surface.join(" "))
            .collect(),
        original_reference_segments: masked
            .segments
            .iter()
            .map(|s| s.reference_surface.join(" "))
            .collect(),
        pos_label: None,
        ne_type: None,
    };
    let missing = |what: &str| CaseError::MissingMetadata {
        pair_id: masked.pair_id.clone(),
        what: what.to_string(),
    };
    let single = || {
        if masked.segments.len() == 1 {
            Ok(&masked.segments[0])
        } else {
            Err(missing("exactly one masked segment"))
        }
    };

    let template_id = TemplateId::for_capability(capability);
    let rendered_text = match template_id {
        TemplateId::Pos => {
            let seg = single()?;
            let tag = capability.pos_tag().ok_or_else(|| missing("POS tag"))?;
            let unit = match seg.segment.kind {
                SegmentKind::WordToUnit => "word",
                SegmentKind::PhraseToUnit => "phrase",
            };
            let label = format!("{} {unit}", pos_name(tag));
            let original = seg.source_surface.join(" ");
            let text = pos_prompt(&label, &original, &masked_english, &masked_chinese);
            metadata.pos_label = Some(label);
            text
        }
        TemplateId::Tense => {
            single()?;
            tense_prompt(&masked_english, &masked_chinese)
        }
        TemplateId::Ner => {
            let seg = single()?;
            let ne_type = annotation
                .ne_type_of(seg.segment.src_span())
                .ok_or_else(|| missing("named entity type"))?
                .to_string();
            let original = seg.source_surface.join(" ");
            let text = ner_prompt(&ne_type, &original, &masked_english, &masked_chinese);
            metadata.ne_type = Some(ne_type);
            text
        }
        TemplateId::General => general_prompt(&masked_english, &masked_chinese),
        TemplateId::DirectTranslation => unreachable!("not an infill template"),
    };
    debug_assert!(rendered_text.contains(OUTPUT_FORMAT_CLAUSE));
    Ok(PromptRequest {
        capability,
        template_id,
        system_text: SYSTEM_PROMPT.to_string(),
        rendered_text,
        metadata,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("reply lacks the {0:?} marker")]
    MissingMarker(&'static str),
    #[error("reply has an empty {0} fill")]
    EmptyFill(&'static str),
}

fn clean(fill: &str) -> &str {
    let mut s = fill.trim();
    loop {
        let before = s;
        s = s.strip_prefix("\\n").unwrap_or(s).trim();
        s = s.strip_suffix("\\n").unwrap_or(s).trim();
        if s == before {
            return s;
        }
    }
}

/// Splits a reference-side fill: whitespace tokens when segmented, else one
/// token per character.
pub fn split_reference(text: &str) -> Vec<String> {
    if text.chars().any(char::is_whitespace) {
        text.split_whitespace().map(str::to_string).collect()
    } else {
        text.chars().map(String::from).collect()
    }
}

/// Extracts `(x', r')` from an infill reply, anchored on the last
/// `Filled English:` label.
pub fn parse_response(raw: &str) -> Result<(Vec<String>, Vec<String>), ParseError> {
    let start = raw
        .rfind(ENGLISH_LABEL)
        .ok_or(ParseError::MissingMarker(ENGLISH_LABEL))?;
    let rest = &raw[start + ENGLISH_LABEL.len()..];
    let split = rest
        .find(CHINESE_LABEL)
        .ok_or(ParseError::MissingMarker(CHINESE_LABEL))?;
    let english = clean(&rest[..split]);
    let chinese = clean(&rest[split + CHINESE_LABEL.len()..]);
    if english.is_empty() {
        return Err(ParseError::EmptyFill("English"));
    }
    if chinese.is_empty() {
        return Err(ParseError::EmptyFill("Chinese"));
    }
    Ok((
        english.split_whitespace().map(str::to_string).collect(),
        split_reference(chinese),
    ))
}

/// A well-formed reply carrying `source` and `reference` fills.
pub fn format_reply(source: &[String], reference: &[String]) -> String {
    format!(
        "{ENGLISH_LABEL} {}\n{CHINESE_LABEL} {}",
        source.join(" "),
        reference.join(" ")
    )
}

/// Masks in the sentence, used by the stub infill backend.
pub fn count_masks(tokens: &[String]) -> usize {
    tokens.iter().filter(|t| *t == MASK_TOKEN).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn parses_basic_reply() {
        let (x, r) = parse_response("Filled English: I like dogs \\n Filled Chinese: 我 喜欢 狗").unwrap();
        assert_eq!(x, v("I like dogs"));
        assert_eq!(r, v("我 喜欢 狗"));
        let (x, r) = parse_response("Filled English: I like dogs \n Filled Chinese: 我 喜欢 狗").unwrap();
        assert_eq!(x, v("I like dogs"));
        assert_eq!(r, v("我 喜欢 狗"));
    }

    #[test]
    fn missing_marker() {
        assert_eq!(
            parse_response("Filled English: I like dogs"),
            Err(ParseError::MissingMarker(CHINESE_LABEL))
        );
        assert_eq!(
            parse_response("Filled Chinese: 狗"),
            Err(ParseError::MissingMarker(ENGLISH_LABEL))
        );
    }

    #[test]
    fn empty_fill() {
        assert_eq!(
            parse_response("Filled English:  \\n Filled Chinese: 狗"),
            Err(ParseError::EmptyFill("English"))
        );
        assert_eq!(
            parse_response("Filled English: dogs\nFilled Chinese:   "),
            Err(ParseError::EmptyFill("Chinese"))
        );
    }

    #[test]
    fn chatter_before_block_uses_last_occurrence() {
        let raw = "Sure! The format is 'Filled English:{} \\n Filled Chinese:{}'.\n\
                   Here you go:\nFilled English: I like dogs\nFilled Chinese: 我 喜欢 狗\n";
        let (x, r) = parse_response(raw).unwrap();
        assert_eq!(x, v("I like dogs"));
        assert_eq!(r, v("我 喜欢 狗"));
    }

    #[test]
    fn unsegmented_chinese_splits_characters() {
        let (_, r) = parse_response("Filled English: I like dogs\nFilled Chinese: 我喜欢狗").unwrap();
        assert_eq!(r, vec!["我", "喜", "欢", "狗"]);
    }

    #[test]
    fn format_then_parse() {
        let x = v("Tracking number had been issued");
        let r = v("追踪 号码 已 发放");
        assert_eq!(parse_response(&format_reply(&x, &r)).unwrap(), (x, r));
    }

    #[test]
    fn templates_contain_output_clause() {
        for p in [
            pos_prompt("noun word", "shop", "a <mask>", "一 <mask>"),
            tense_prompt("a <mask>", "一 <mask>"),
            ner_prompt("GPE", "Russia", "a <mask>", "一 <mask>"),
            general_prompt("a <mask>", "一 <mask>"),
        ] {
            assert!(p.contains(OUTPUT_FORMAT_CLAUSE));
            assert!(p.ends_with("\\n English Sentence: a <mask>. \\n Chinese Translation: 一 <mask>"));
        }
    }
}
