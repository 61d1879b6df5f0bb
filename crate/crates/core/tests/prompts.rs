mod common;

use common::{golden, golden_cases, render};
use mtprobe_core::casegen::{TemplateId, OUTPUT_FORMAT_CLAUSE, SYSTEM_PROMPT};
use mtprobe_core::segmentation::Capability;

fn case(name: &str) -> mtprobe_core::casegen::PromptRequest {
    let (_, f, cap) = golden_cases()
        .into_iter()
        .find(|(n, ..)| *n == name)
        .unwrap();
    render(&f, cap)
}

#[test]
fn noun_word() {
    let p = case("pos_noun.txt");
    assert_eq!(p.system_text, SYSTEM_PROMPT);
    assert_eq!(p.template_id, TemplateId::Pos);
    assert_eq!(p.metadata.pos_label.as_deref(), Some("noun word"));
    assert_eq!(p.rendered_text, golden("pos_noun.txt"));
}

#[test]
fn preposition_phrase() {
    let p = case("pos_prep_phrase.txt");
    assert_eq!(p.metadata.pos_label.as_deref(), Some("preposition phrase"));
    assert_eq!(p.rendered_text, golden("pos_prep_phrase.txt"));
}

#[test]
fn tense() {
    let p = case("tense.txt");
    assert_eq!(p.template_id, TemplateId::Tense);
    assert_eq!(p.rendered_text, golden("tense.txt"));
}

#[test]
fn named_entity() {
    let p = case("ner.txt");
    assert_eq!(p.capability, Capability::Ner);
    assert_eq!(p.metadata.ne_type.as_deref(), Some("ORG"));
    assert_eq!(p.rendered_text, golden("ner.txt"));
}

#[test]
fn output_clause_is_literal() {
    assert_eq!(
        OUTPUT_FORMAT_CLAUSE.as_bytes(),
        br"'Filled English:{} \n Filled Chinese:{}'"
    );
    for (name, ..) in golden_cases() {
        let g = golden(name);
        assert!(g.contains(OUTPUT_FORMAT_CLAUSE), "{name}");
        assert!(!g.contains('\n'), "{name} has a real newline");
    }
}
