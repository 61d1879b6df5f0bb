#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use mtprobe_core::corpus::{AlignmentSet, Annotation, NeSpan, PosTag, Span, TranslationPair};
use mtprobe_core::casegen::{mask_pair, render_prompt, PromptRequest};
use mtprobe_core::segmentation::{
    extract_editable, filter_by_capability, plan_selection, Capability, SpanPair,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Fixture {
    pub pair: TranslationPair,
    pub alignment: AlignmentSet,
    pub annotation: Annotation,
}

fn random_spans(rng: &mut ChaCha8Rng, len: usize, max: usize) -> Vec<Span> {
    let mut out = BTreeSet::new();
    if len < 2 {
        return Vec::new();
    }
    for _ in 0..rng.random_range(0..=max) {
        let start = rng.random_range(0..len - 1);
        let end = rng.random_range(start + 2..=len);
        out.insert(Span::new(start, end));
    }
    out.into_iter().collect()
}

/// Random pair with up to `max_len` tokens per side, random links, phrase
/// sets, POS tags and NE spans.
pub fn random_fixture(seed: u64, max_len: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_len);
    let m = rng.random_range(1..=max_len);
    let id = format!("p{seed}");
    let source: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let reference: Vec<String> = (0..m).map(|j| format!("t{j}")).collect();
    let pair = TranslationPair::new(id.clone(), &source.join(" "), &reference.join(" "));

    let mut links = Vec::new();
    let mut phrase_src = random_spans(&mut rng, n, 3);
    let mut phrase_ref = random_spans(&mut rng, m, 3);
    if rng.random_bool(0.5) {
        // blocks of consecutive tokens aligned to each other, listed as phrases
        let k = rng.random_range(1..=n.min(m));
        let cuts = |rng: &mut ChaCha8Rng, len: usize| {
            let mut c: BTreeSet<usize> = BTreeSet::new();
            while c.len() < k - 1 {
                c.insert(rng.random_range(1..len));
            }
            let mut bounds = vec![0];
            bounds.extend(c);
            bounds.push(len);
            bounds
        };
        let bs = cuts(&mut rng, n);
        let br = cuts(&mut rng, m);
        for b in 0..k {
            let sx = Span::new(bs[b], bs[b + 1]);
            let sr = Span::new(br[b], br[b + 1]);
            links.push((sx.start, sr.start));
            links.push((sx.end - 1, sr.end - 1));
            for i in sx.start..sx.end {
                for j in sr.start..sr.end {
                    if rng.random_bool(0.3) {
                        links.push((i, j));
                    }
                }
            }
            if sx.len() > 1 {
                phrase_src.push(sx);
            }
            if sr.len() > 1 {
                phrase_ref.push(sr);
            }
        }
        if rng.random_bool(0.5) {
            links.push((rng.random_range(0..n), rng.random_range(0..m)));
        }
    } else {
        let density = rng.random_range(0.05..0.5);
        for i in 0..n {
            for j in 0..m {
                if rng.random_bool(density) {
                    links.push((i, j));
                }
            }
        }
        for i in 0..n.min(m) {
            if rng.random_bool(0.5) {
                links.push((i, i));
            }
        }
    }
    phrase_src.sort();
    phrase_src.dedup();
    phrase_ref.sort();
    phrase_ref.dedup();
    let alignment = AlignmentSet::new(id.clone(), links);

    let pos = (0..n)
        .map(|_| PosTag::ALL[rng.random_range(0..PosTag::ALL.len())])
        .collect();
    let past_perfect = (0..n).map(|_| rng.random_bool(0.2)).collect();
    let ne_spans = random_spans(&mut rng, n, 2)
        .into_iter()
        .map(|span| NeSpan {
            span,
            ne_type: "ORG".into(),
        })
        .collect();
    let annotation = Annotation {
        pair_id: id,
        pos,
        past_perfect,
        ne_spans,
        phrase_spans_src: phrase_src,
        phrase_spans_ref: phrase_ref,
    };
    Fixture {
        pair,
        alignment,
        annotation,
    }
}

fn all_spans(len: usize) -> impl Iterator<Item = Span> {
    (0..len).flat_map(move |s| (s + 1..=len).map(move |e| Span::new(s, e)))
}

/// Every span pair meeting the editability conditions, checked directly.
pub fn oracle_candidates(f: &Fixture) -> Vec<SpanPair> {
    let n = f.pair.source.len();
    let m = f.pair.reference.len();
    let links = &f.alignment.links;
    let allowed_src = |s: &Span| s.len() == 1 || f.annotation.phrase_spans_src.contains(s);
    let allowed_ref = |s: &Span| s.len() == 1 || f.annotation.phrase_spans_ref.contains(s);
    let mut out = Vec::new();
    for sx in all_spans(n).filter(allowed_src) {
        for sr in all_spans(m).filter(allowed_ref) {
            let closed = links
                .iter()
                .all(|&(i, j)| sx.contains(i) == sr.contains(j));
            let src_edges = links.iter().any(|&(i, _)| i == sx.start)
                && links.iter().any(|&(i, _)| i == sx.end - 1);
            let ref_edges = links.iter().any(|&(_, j)| j == sr.start)
                && links.iter().any(|&(_, j)| j == sr.end - 1);
            if closed && src_edges && ref_edges {
                out.push(SpanPair::new(sx, sr));
            }
        }
    }
    out
}

fn outranks(a: &SpanPair, b: &SpanPair) -> bool {
    let key = |p: &SpanPair| (std::cmp::Reverse(p.src_span.len()), p.src_span.start, p.ref_span.start);
    key(a) < key(b)
}

fn survives(i: usize, cands: &[SpanPair], memo: &mut HashMap<usize, bool>) -> bool {
    if let Some(&v) = memo.get(&i) {
        return v;
    }
    let mut alive = true;
    for t in 0..cands.len() {
        if t != i && outranks(&cands[t], &cands[i]) && cands[t].overlaps(&cands[i]) && survives(t, cands, memo) {
            alive = false;
            break;
        }
    }
    memo.insert(i, alive);
    alive
}

/// A candidate survives iff no surviving higher-priority candidate overlaps it.
pub fn oracle_editable(f: &Fixture) -> Vec<SpanPair> {
    let cands = oracle_candidates(f);
    let mut memo = HashMap::new();
    let mut out: Vec<SpanPair> = (0..cands.len())
        .filter(|&i| survives(i, &cands, &mut memo))
        .map(|i| cands[i])
        .collect();
    out.sort_by_key(|p| (p.src_span.start, p.ref_span.start));
    out
}

/// Independent restatement of the pass/fail rule.
pub fn oracle_passes(qual_y: f64, qual_y_prime: f64, alpha: f64, beta: f64) -> bool {
    let d = if qual_y > qual_y_prime {
        qual_y - qual_y_prime
    } else {
        qual_y_prime - qual_y
    };
    qual_y >= alpha && d <= beta
}

/// Builds a fixture from whitespace-tokenized sides, links, POS tags and
/// optional phrase / NE spans.
pub fn fixture(
    id: &str,
    source: &str,
    reference: &str,
    links: &[(usize, usize)],
    pos: &[PosTag],
) -> Fixture {
    let pair = TranslationPair::new(id, source, reference);
    assert_eq!(pair.source.len(), pos.len(), "pos length for {id}");
    Fixture {
        alignment: AlignmentSet::new(id, links.iter().copied()),
        annotation: Annotation {
            pair_id: id.into(),
            pos: pos.to_vec(),
            past_perfect: vec![false; pos.len()],
            ne_spans: Vec::new(),
            phrase_spans_src: Vec::new(),
            phrase_spans_ref: Vec::new(),
        },
        pair,
    }
}

/// "In order to tell" is aligned to the split "为了 ... 讲出"; the named
/// entity "Meta-universe" is aligned to "元宇宙" alone.
pub fn meta_universe() -> Fixture {
    use PosTag::*;
    let mut f = fixture(
        "fig",
        "In order to tell the Meta-universe story well",
        "为了 好好 把 元宇宙 的 故事 讲出",
        &[(0, 0), (1, 0), (2, 0), (3, 6), (5, 3), (6, 5), (7, 1)],
        &[Adp, Noun, Other, Verb, Other, Noun, Noun, Adv],
    );
    f.annotation.phrase_spans_src = vec![Span::new(0, 4)];
    f.annotation.phrase_spans_ref = vec![Span::new(0, 7)];
    f.annotation.ne_spans = vec![NeSpan {
        span: Span::new(5, 6),
        ne_type: "ORG".into(),
    }];
    f
}

pub fn golden(name: &str) -> String {
    let path = format!("{}/tests/goldens/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

pub fn render(f: &Fixture, cap: Capability) -> PromptRequest {
    let segs = extract_editable(&f.pair, &f.alignment, &f.annotation);
    let eligible = filter_by_capability(&segs, &f.annotation, cap);
    assert_eq!(eligible.len(), 1, "{cap}: {eligible:?}");
    let plan = plan_selection(&f.pair, &eligible, cap, 1, 7).unwrap().remove(0);
    let masked = mask_pair(&f.pair, &plan).unwrap();
    render_prompt(&masked, cap, &f.annotation).unwrap()
}

/// Fixtures with a single eligible segment and the golden each renders to.
pub fn golden_cases() -> Vec<(&'static str, Fixture, Capability)> {
    use PosTag::*;
    let noun = fixture(
        "n",
        "I like cats",
        "我 喜欢 猫",
        &[(0, 0), (1, 1), (2, 2)],
        &[Other, Verb, Noun],
    );
    let mut prep = fixture(
        "p",
        "He stood in front of the house",
        "他 站 在 房子 前面",
        &[(0, 0), (1, 1), (1, 2), (2, 4), (4, 4), (6, 3)],
        &[Other, Verb, Adp, Noun, Adp, Other, Noun],
    );
    prep.annotation.phrase_spans_src = vec![Span::new(2, 5)];
    let tense = fixture(
        "t",
        "She wrote the letter",
        "她 写了 信",
        &[(0, 0), (1, 1), (3, 2)],
        &[Other, Verb, Other, Noun],
    );
    vec![
        ("pos_noun.txt", noun, Capability::Noun),
        ("pos_prep_phrase.txt", prep, Capability::Prep),
        ("tense.txt", tense, Capability::Tense),
        ("ner.txt", meta_universe(), Capability::Ner),
    ]
}

pub struct Synthetic {
    pub corpus: mtprobe_core::corpus::Corpus,
    pub lexicon: std::collections::BTreeMap<String, String>,
    pub lengths: Vec<usize>,
}

/// `count` pairs of 5..=35 tokens (never 20), aligned one-to-one, each with a
/// single NOUN. Source token `w{i}_{k}` translates to `z{i}_{k}`.
pub fn synthetic_corpus(count: usize) -> Synthetic {
    let mut pairs = Vec::new();
    let mut alignments = Vec::new();
    let mut annotations = Vec::new();
    let mut lexicon = std::collections::BTreeMap::new();
    let mut lengths = Vec::new();
    for i in 0..count {
        let mut n = 5 + (i * 7) % 31;
        if n == 20 {
            n = 21;
        }
        lengths.push(n);
        let id = format!("syn{i:03}");
        let src: Vec<String> = (0..n).map(|k| format!("w{i}_{k}")).collect();
        let tgt: Vec<String> = (0..n).map(|k| format!("z{i}_{k}")).collect();
        for (s, t) in src.iter().zip(&tgt) {
            lexicon.insert(s.clone(), t.clone());
        }
        pairs.push(TranslationPair::new(id.clone(), &src.join(" "), &tgt.join(" ")));
        alignments.push(AlignmentSet::new(id.clone(), (0..n).map(|k| (k, k))));
        let mut an = Annotation::uniform(id, n, PosTag::Other);
        an.pos[i % n] = PosTag::Noun;
        annotations.push(an);
    }
    Synthetic {
        corpus: mtprobe_core::corpus::Corpus::new(pairs, alignments, annotations).unwrap(),
        lexicon,
        lengths,
    }
}
