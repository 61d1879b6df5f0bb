//! Deterministic offline backends.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use super::{BackendError, BackendKind, BackendSpec, Reply, Request, StubConfig, Transport};
use crate::casegen::{fill_masks, format_reply};

#[derive(Debug, Default, Clone, Copy)]
pub struct StubTransport;

fn config_for(spec: &BackendSpec) -> Result<StubConfig, String> {
    match (&spec.stub, spec.kind) {
        (Some(c), _) => Ok(c.clone()),
        (None, BackendKind::Translator) => Ok(StubConfig::Identity),
        (None, BackendKind::ScorerRefBased) => Ok(StubConfig::UnigramF1),
        (None, BackendKind::ScorerRefFree) => Ok(StubConfig::LengthRatio),
        (None, BackendKind::Infill) => Err("infill stub needs a substitute config".into()),
    }
}

pub(crate) fn check_config(spec: &BackendSpec) -> Result<(), String> {
    let config = config_for(spec)?;
    let ok = matches!(
        (spec.kind, &config),
        (BackendKind::Infill, StubConfig::Substitute { .. })
            | (BackendKind::Translator, StubConfig::Identity | StubConfig::Lexicon { .. })
            | (BackendKind::ScorerRefBased, StubConfig::UnigramF1 | StubConfig::Digest)
            | (BackendKind::ScorerRefFree, StubConfig::LengthRatio | StubConfig::Digest)
    );
    if ok {
        Ok(())
    } else {
        Err(format!("stub {config:?} does not fit backend kind {:?}", spec.kind))
    }
}

/// Multiset unigram F1 between whitespace tokens. Two empty strings score 1.
pub fn unigram_f1(hypothesis: &str, reference: &str) -> f64 {
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let reference: Vec<&str> = reference.split_whitespace().collect();
    if hyp.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &reference {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &hyp {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    2.0 * overlap as f64 / (hyp.len() + reference.len()) as f64
}

/// `min / max` of whitespace token counts. Two empty strings score 1.
pub fn length_ratio(source: &str, hypothesis: &str) -> f64 {
    let a = source.split_whitespace().count();
    let b = hypothesis.split_whitespace().count();
    if a.max(b) == 0 {
        1.0
    } else {
        a.min(b) as f64 / a.max(b) as f64
    }
}

fn digest_score(parts: &[&str]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    let d = h.finalize();
    let v = u64::from_le_bytes(d[..8].try_into().expect("sha256 has 32 bytes"));
    (v >> 11) as f64 / (1u64 << 53) as f64
}

impl Transport for StubTransport {
    fn send(&self, spec: &BackendSpec, request: &Request) -> Result<Reply, BackendError> {
        let config = config_for(spec).map_err(|message| BackendError::InvalidSpec {
            backend_id: spec.backend_id.clone(),
            message,
        })?;
        let malformed = |message: String| BackendError::MalformedReply {
            backend_id: spec.backend_id.clone(),
            message,
        };
        match (config, request) {
            (
                StubConfig::Substitute { src, reference },
                Request::Chat {
                    masks: Some((masked_source, masked_reference)),
                    ..
                },
            ) => {
                let src_fill: Vec<String> = src.split_whitespace().map(str::to_string).collect();
                let ref_fill: Vec<String> =
                    reference.split_whitespace().map(str::to_string).collect();
                let fills = |tokens: &[String], fill: &[String]| {
                    let n = crate::casegen::count_masks(tokens);
                    fill_masks(tokens, &vec![fill.to_vec(); n]).map_err(|e| malformed(e.to_string()))
                };
                let x = fills(masked_source, &src_fill)?;
                let r = fills(masked_reference, &ref_fill)?;
                Ok(Reply::Text(format_reply(&x, &r)))
            }
            (StubConfig::Identity, Request::Chat { user, .. }) => Ok(Reply::Text(user.clone())),
            (StubConfig::Lexicon { entries }, Request::Chat { user, .. }) => Ok(Reply::Text(
                user.split_whitespace()
                    .map(|t| entries.get(t).map(String::as_str).unwrap_or(t))
                    .collect::<Vec<_>>()
                    .join(" "),
            )),
            (
                StubConfig::UnigramF1,
                Request::Score {
                    hyp,
                    reference: Some(r),
                    ..
                },
            ) => Ok(Reply::Score(unigram_f1(hyp, r))),
            (
                StubConfig::LengthRatio,
                Request::Score {
                    src,
                    hyp,
                    reference: None,
                },
            ) => Ok(Reply::Score(length_ratio(src, hyp))),
            (StubConfig::Digest, Request::Score { src, hyp, reference }) => {
                let mut parts = vec![src.as_str(), hyp.as_str()];
                if let Some(r) = reference {
                    parts.push(r);
                }
                Ok(Reply::Score(digest_score(&parts)))
            }
            (config, request) => Err(malformed(format!(
                "stub {config:?} cannot answer {request:?}"
            ))),
        }
    }
}
