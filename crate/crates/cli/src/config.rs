//! Run configuration: one TOML file plus command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use mtprobe_core::backends::{BackendKind, BackendSpec};
use mtprobe_core::judge::{JudgeConfig, PoolPolicy};
use mtprobe_core::segmentation::{Capability, MAX_PLANS_PER_PAIR};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusPaths {
    pub pairs: PathBuf,
    pub alignments: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Backends {
    pub infill: Option<BackendSpec>,
    pub scorer_ref_free: Option<BackendSpec>,
    pub scorer_ref_based: Option<BackendSpec>,
    #[serde(default)]
    pub translators: Vec<BackendSpec>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub exclude_low_base: bool,
}

impl Default for JudgeSection {
    fn default() -> Self {
        Self {
            alpha: default_alpha(),
            beta: default_beta(),
            exclude_low_base: false,
        }
    }
}

fn default_alpha() -> f64 {
    0.8
}

fn default_beta() -> f64 {
    0.05
}

fn default_capability() -> String {
    "General".into()
}

fn default_per_pair() -> usize {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_jobs() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub backends: Backends,
    #[serde(default)]
    pub judge: JudgeSection,
    /// Threshold of the reference-free filter on generated cases.
    #[serde(default = "default_beta")]
    pub filter_beta: f64,
    #[serde(default = "default_capability")]
    pub capability: String,
    #[serde(default = "default_per_pair")]
    pub per_pair: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cache_root: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: Option<u64>,
    pub capability: Option<String>,
    pub per_pair: Option<usize>,
    pub jobs: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub cache_root: Option<PathBuf>,
    pub exclude_low_base: bool,
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path`, resolves relative paths against its directory and
    /// applies `overrides`. Flag paths stay relative to the working directory.
    pub fn load(path: &Path, overrides: &Overrides) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config =
            Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut config.corpus.pairs);
        rebase(base, &mut config.corpus.alignments);
        rebase(base, &mut config.corpus.annotations);
        rebase(base, &mut config.output_dir);
        if let Some(c) = &mut config.cache_root {
            rebase(base, c);
        }
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.alpha {
            self.judge.alpha = v;
        }
        if let Some(v) = o.beta {
            self.judge.beta = v;
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.capability {
            self.capability = v.clone();
        }
        if let Some(v) = o.per_pair {
            self.per_pair = v;
        }
        if let Some(v) = o.jobs {
            self.jobs = v;
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = &o.cache_root {
            self.cache_root = Some(v.clone());
        }
        if o.exclude_low_base {
            self.judge.exclude_low_base = true;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        for (name, p) in [
            ("pairs", &self.corpus.pairs),
            ("alignments", &self.corpus.alignments),
            ("annotations", &self.corpus.annotations),
        ] {
            if !p.is_file() {
                bail!("corpus {name} file {} does not exist", p.display());
            }
        }
        self.capability()?;
        if self.per_pair == 0 || self.per_pair > MAX_PLANS_PER_PAIR {
            bail!("per_pair must be in 1..={MAX_PLANS_PER_PAIR}, got {}", self.per_pair);
        }
        if self.jobs == 0 {
            bail!("jobs must be at least 1");
        }
        self.judge_config()?;
        if !self.filter_beta.is_finite() || self.filter_beta < 0.0 {
            bail!("filter_beta must be a non-negative number");
        }
        let roles = [
            ("infill", &self.backends.infill, BackendKind::Infill),
            ("scorer_ref_free", &self.backends.scorer_ref_free, BackendKind::ScorerRefFree),
            ("scorer_ref_based", &self.backends.scorer_ref_based, BackendKind::ScorerRefBased),
        ];
        for (role, spec, kind) in roles {
            if let Some(spec) = spec {
                check_backend(role, spec, kind)?;
            }
        }
        let mut ids = std::collections::HashSet::new();
        for spec in &self.backends.translators {
            check_backend("translators", spec, BackendKind::Translator)?;
            if !ids.insert(&spec.backend_id) {
                bail!("duplicate translator id {:?}", spec.backend_id);
            }
        }
        Ok(())
    }

    pub fn capability(&self) -> anyhow::Result<Capability> {
        self.capability
            .parse()
            .map_err(|e| anyhow::anyhow!("capability: {e}"))
    }

    pub fn judge_config(&self) -> anyhow::Result<JudgeConfig<f64>> {
        JudgeConfig::new(self.judge.alpha, self.judge.beta)
            .ok_or_else(|| anyhow::anyhow!("alpha and beta must be finite"))
    }

    pub fn pool_policy(&self) -> PoolPolicy {
        if self.judge.exclude_low_base {
            PoolPolicy::ExcludeLowBase
        } else {
            PoolPolicy::CountLowBaseAsFailure
        }
    }

    pub fn require<'a>(&self, spec: &'a Option<BackendSpec>, role: &str) -> anyhow::Result<&'a BackendSpec> {
        spec.as_ref()
            .ok_or_else(|| anyhow::anyhow!("config has no backends.{role}"))
    }
}

fn check_backend(role: &str, spec: &BackendSpec, kind: BackendKind) -> anyhow::Result<()> {
    if spec.kind != kind {
        bail!(
            "backends.{role} ({}) has kind {:?}, expected {kind:?}",
            spec.backend_id,
            spec.kind
        );
    }
    spec.validate()
        .with_context(|| format!("backends.{role}"))?;
    Ok(())
}
