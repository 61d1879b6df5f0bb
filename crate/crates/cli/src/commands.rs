use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use mtprobe_core::backends::Client;
use mtprobe_core::casegen::{generate_cases, read_cases, write_cases, FilterStatus, GenerateOptions, TestCase};
use mtprobe_core::corpus::Corpus;
use mtprobe_core::judge::{judge_all, read_jsonl, score_records, write_jsonl, RecordFailure, TranslationRecord, Verdict};
use mtprobe_core::report::{
    capability_table_with, eval_report, render_report, sweep_report, GoldSet, ReportFormat,
};
use mtprobe_core::segmentation::{extract_editable, filter_by_capability, Capability, EditableSegment};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::Stage;

/// A command failure and the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Backend(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Backend(e) => e,
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

pub const SEGMENTS: &str = "segments.jsonl";
pub const CASES: &str = "cases.jsonl";
pub const SKIPPED: &str = "skipped.jsonl";
pub const RECORDS: &str = "records.jsonl";
pub const ERRORS: &str = "errors.jsonl";
pub const VERDICTS: &str = "verdicts.jsonl";

struct Run<'a> {
    config: &'a RunConfig,
    out: PathBuf,
}

impl<'a> Run<'a> {
    fn new(config: &'a RunConfig) -> Result<Self, Failure> {
        fs::create_dir_all(&config.output_dir)
            .with_context(|| format!("creating {}", config.output_dir.display()))
            .map_err(usage)?;
        Ok(Self {
            config,
            out: config.output_dir.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn corpus_inputs(&self) -> [&Path; 3] {
        let c = &self.config.corpus;
        [&c.pairs, &c.alignments, &c.annotations]
    }

    fn corpus(&self) -> Result<Corpus, Failure> {
        let c = &self.config.corpus;
        Corpus::load(&c.pairs, &c.alignments, &c.annotations).map_err(data)
    }

    fn stage(&self, name: &str, inputs: &[&Path]) -> Stage {
        let snapshot = serde_json::to_value(self.config).unwrap_or_default();
        Stage::begin(name, self.config.seed, snapshot, inputs)
    }

    fn finish(&self, stage: Stage, outputs: &[&str]) -> Outcome {
        let paths: Vec<PathBuf> = outputs.iter().map(|n| self.path(n)).collect();
        stage.finish(&self.out, &paths).map_err(usage)
    }

    fn client(&self, spec: &mtprobe_core::backends::BackendSpec) -> Result<Client, Failure> {
        Client::new(spec.clone(), self.config.cache_root.as_deref())
            .with_context(|| format!("backend {}", spec.backend_id))
            .map_err(usage)
    }

    fn read_cases(&self) -> Result<Vec<TestCase>, Failure> {
        let path = self.path(CASES);
        let f = File::open(&path)
            .with_context(|| format!("opening {} (run `generate` first)", path.display()))
            .map_err(data)?;
        read_cases(BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))
            .map_err(data)
    }

    fn read<T: serde::de::DeserializeOwned>(&self, name: &str, hint: &str) -> Result<Vec<T>, Failure> {
        let path = self.path(name);
        let f = File::open(&path)
            .with_context(|| format!("opening {} (run `{hint}` first)", path.display()))
            .map_err(data)?;
        read_jsonl(BufReader::new(f))
            .with_context(|| format!("reading {}", path.display()))
            .map_err(data)
    }

    fn write_jsonl<T: Serialize>(&self, name: &str, items: &[T]) -> Outcome {
        let path = self.path(name);
        let write = || -> std::io::Result<()> {
            let mut w = BufWriter::new(File::create(&path)?);
            write_jsonl(&mut w, items)?;
            w.flush()
        };
        write()
            .with_context(|| format!("writing {}", path.display()))
            .map_err(usage)
    }

    fn write_text(&self, name: &str, text: &str) -> Outcome {
        let path = self.path(name);
        fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(usage)
    }
}

#[derive(Serialize)]
struct SegmentOut<'a> {
    #[serde(flatten)]
    segment: &'a EditableSegment,
    capabilities: Vec<Capability>,
}

#[derive(Serialize)]
struct SegmentRecord<'a> {
    pair_id: &'a str,
    segments: Vec<SegmentOut<'a>>,
}

pub fn extract(config: &RunConfig) -> Outcome {
    let run = Run::new(config)?;
    let stage = run.stage("extract", &run.corpus_inputs());
    let corpus = run.corpus()?;
    let per_pair: Vec<(&str, Vec<EditableSegment>, &mtprobe_core::corpus::Annotation)> = corpus
        .entries()
        .map(|e| {
            (
                e.pair.id.as_str(),
                extract_editable(e.pair, e.alignment, e.annotation),
                e.annotation,
            )
        })
        .collect();
    let records: Vec<SegmentRecord> = per_pair
        .iter()
        .map(|(id, segs, annotation)| SegmentRecord {
            pair_id: id,
            segments: segs
                .iter()
                .map(|s| SegmentOut {
                    segment: s,
                    capabilities: Capability::ALL
                        .into_iter()
                        .filter(|&c| !filter_by_capability(std::slice::from_ref(s), annotation, c).is_empty())
                        .collect(),
                })
                .collect(),
        })
        .collect();
    run.write_jsonl(SEGMENTS, &records)?;
    let total: usize = per_pair.iter().map(|(_, s, _)| s.len()).sum();
    eprintln!("{} pairs, {total} editable segments", records.len());
    run.finish(stage, &[SEGMENTS])
}

#[derive(Serialize)]
struct Skipped {
    pair_id: String,
    reason: String,
}

pub fn generate(config: &RunConfig) -> Outcome {
    let run = Run::new(config)?;
    let capability = config.capability().map_err(usage)?;
    let infill = run.client(config.require(&config.backends.infill, "infill").map_err(usage)?)?;
    let scorer = run.client(
        config
            .require(&config.backends.scorer_ref_free, "scorer_ref_free")
            .map_err(usage)?,
    )?;
    let stage = run.stage("generate", &run.corpus_inputs());
    let corpus = run.corpus()?;
    let options = GenerateOptions {
        capability,
        per_pair: config.per_pair,
        beta: config.filter_beta,
        seed: config.seed,
        jobs: config.jobs,
    };
    let outcome = generate_cases(&corpus, &options, &infill, &scorer);

    let path = run.path(CASES);
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&path)?);
        write_cases(&mut w, &outcome.cases)?;
        w.flush()
    };
    write().with_context(|| format!("writing {}", path.display())).map_err(usage)?;
    let skipped: Vec<Skipped> = outcome
        .skipped
        .iter()
        .map(|(id, e)| Skipped {
            pair_id: id.clone(),
            reason: e.to_string(),
        })
        .collect();
    run.write_jsonl(SKIPPED, &skipped)?;
    run.finish(stage, &[CASES, SKIPPED])?;

    let count = |f: fn(&FilterStatus) -> bool| outcome.cases.iter().filter(|c| f(&c.filter_status)).count();
    let kept = count(FilterStatus::is_kept);
    let errored = count(FilterStatus::is_errored);
    let identical = count(|s| *s == FilterStatus::DroppedIdentical);
    let quality = count(|s| matches!(s, FilterStatus::DroppedQuality(_)));
    eprintln!(
        "{} cases: {kept} kept, {identical} identical, {quality} dropped by quality, {errored} errored; {} pairs skipped",
        outcome.cases.len(),
        skipped.len()
    );
    if kept > 0 {
        return Ok(());
    }
    if errored > 0 {
        let first = outcome
            .cases
            .iter()
            .find_map(|c| match &c.filter_status {
                FilterStatus::Errored(m) => Some(m.as_str()),
                _ => None,
            })
            .unwrap_or_default();
        Err(Failure::Backend(anyhow!(
            "no case kept; {errored} cases failed, first: {first}"
        )))
    } else {
        Err(data(anyhow!("no case kept")))
    }
}

fn write_reports(run: &Run, table: &mtprobe_core::report::CapabilityTable) -> Outcome {
    for format in [ReportFormat::Json, ReportFormat::Markdown, ReportFormat::Csv] {
        let text = render_report(table, format).map_err(usage)?;
        run.write_text(&format!("report.{}", format.extension()), &text)?;
    }
    Ok(())
}

const REPORTS: [&str; 3] = ["report.json", "report.md", "report.csv"];

pub fn judge(config: &RunConfig) -> Outcome {
    let run = Run::new(config)?;
    let judge = config.judge_config().map_err(usage)?;
    let scorer = run.client(
        config
            .require(&config.backends.scorer_ref_based, "scorer_ref_based")
            .map_err(usage)?,
    )?;
    if config.backends.translators.is_empty() {
        return Err(usage(anyhow!("config has no backends.translators")));
    }
    let translators = config
        .backends
        .translators
        .iter()
        .map(|s| run.client(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cases_path = run.path(CASES);
    let [p, a, n] = run.corpus_inputs();
    let stage = run.stage("judge", &[p, a, n, &cases_path]);
    let corpus = run.corpus()?;
    let cases = run.read_cases()?;

    let mut records: Vec<TranslationRecord<f64>> = Vec::new();
    let mut errors: Vec<RecordFailure> = Vec::new();
    for t in &translators {
        let out = score_records(&cases, t, &scorer, &corpus, config.jobs);
        records.extend(out.records);
        errors.extend(out.errored);
    }
    let verdicts = judge_all(&records, &judge);
    run.write_jsonl(RECORDS, &records)?;
    run.write_jsonl(ERRORS, &errors)?;
    run.write_jsonl(VERDICTS, &verdicts)?;
    let table = capability_table_with(&verdicts, &cases, &errors, config.pool_policy()).map_err(data)?;
    write_reports(&run, &table)?;
    let mut outputs = vec![RECORDS, ERRORS, VERDICTS];
    outputs.extend(REPORTS);
    run.finish(stage, &outputs)?;

    print!("{}", table.to_markdown());
    if !errors.is_empty() {
        eprintln!("{} translation records failed; see {ERRORS}", errors.len());
    }
    if records.is_empty() && !errors.is_empty() {
        return Err(Failure::Backend(anyhow!(
            "every record failed, first: {}",
            errors[0].message
        )));
    }
    Ok(())
}

pub fn sweep(config: &RunConfig, alphas: &[f64], betas: &[f64]) -> Outcome {
    if alphas.iter().chain(betas).any(|v| !v.is_finite()) {
        return Err(usage(anyhow!("sweep values must be finite")));
    }
    let run = Run::new(config)?;
    let records_path = run.path(RECORDS);
    let stage = run.stage("sweep", &[&records_path]);
    let records: Vec<TranslationRecord<f64>> = run.read(RECORDS, "judge")?;
    let report = sweep_report(&records, alphas, betas).map_err(data)?;
    run.write_text("sweep.json", &report.to_json())?;
    let md = report.to_markdown();
    run.write_text("sweep.md", &md)?;
    run.finish(stage, &["sweep.json", "sweep.md"])?;
    print!("{md}");
    Ok(())
}

pub fn eval(config: &RunConfig, gold_path: &Path) -> Outcome {
    let run = Run::new(config)?;
    let verdicts_path = run.path(VERDICTS);
    let stage = run.stage("eval", &[&verdicts_path, gold_path]);
    let verdicts: Vec<Verdict<f64>> = run.read(VERDICTS, "judge")?;
    let gold = GoldSet::load(gold_path).map_err(data)?;
    if run.path(RECORDS).exists() {
        let records: Vec<TranslationRecord<f64>> = run.read(RECORDS, "judge")?;
        for r in &records {
            if let Some(g) = gold.get(&r.case_id, &r.system_id) {
                g.validate_bounds(&r.y_prime).map_err(data)?;
            }
        }
    }
    let report = eval_report(&verdicts, &gold).map_err(data)?;
    run.write_text("eval.json", &report.to_json())?;
    let md = report.to_markdown();
    run.write_text("eval.md", &md)?;
    run.finish(stage, &["eval.json", "eval.md"])?;
    print!("{md}");
    Ok(())
}

pub fn report(config: &RunConfig, format: ReportFormat) -> Outcome {
    let run = Run::new(config)?;
    let (verdicts_path, cases_path, errors_path) = (run.path(VERDICTS), run.path(CASES), run.path(ERRORS));
    let mut inputs: Vec<&Path> = vec![&verdicts_path, &cases_path];
    if errors_path.exists() {
        inputs.push(&errors_path);
    }
    let stage = run.stage("report", &inputs);
    let verdicts: Vec<Verdict<f64>> = run.read(VERDICTS, "judge")?;
    let cases = run.read_cases()?;
    let errors: Vec<RecordFailure> = if errors_path.exists() {
        run.read(ERRORS, "judge")?
    } else {
        Vec::new()
    };
    let table = capability_table_with(&verdicts, &cases, &errors, config.pool_policy()).map_err(data)?;
    write_reports(&run, &table)?;
    run.finish(stage, &REPORTS)?;
    print!("{}", render_report(&table, format).map_err(usage)?);
    Ok(())
}
