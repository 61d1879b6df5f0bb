//! Aggregated results: per-capability pass-rate tables, precision/recall of
//! diagnosed errors against gold annotations, and the share of errors that
//! land on edited positions.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::casegen::{split_reference, TestCase};
use crate::corpus::Span;
use crate::judge::{
    pass_rate, FailReason, PoolPolicy, RecordFailure, SweepCell, TranslationRecord, Verdict,
};
use crate::segmentation::Capability;
use crate::Percentage;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("verdict references unknown case {0:?}")]
    UnknownCase(String),
    #[error("no gold annotation for case {case_id:?} / system {system_id:?}")]
    MissingGold { case_id: String, system_id: String },
    #[error("precision undefined: no case was flagged")]
    ZeroFlagged,
    #[error("undefined: no gold-erroneous case")]
    ZeroGoldErrors,
    #[error("case {0:?} has no edited-span projection on y'")]
    MissingProjection(String),
    #[error("gold annotation for {case_id:?}: {message}")]
    InvalidGold { case_id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldErrorAnnotation {
    pub case_id: String,
    pub system_id: String,
    pub is_erroneous: bool,
    #[serde(default)]
    pub error_spans: Vec<Span>,
    /// Annotator projection of the r' edits onto y'.
    #[serde(default)]
    pub edited_spans_on_y_prime: Option<Vec<Span>>,
}

impl GoldErrorAnnotation {
    fn validate(&self) -> Result<(), String> {
        if !self.is_erroneous && !self.error_spans.is_empty() {
            return Err("error_spans given for a non-erroneous case".into());
        }
        let spans = self
            .error_spans
            .iter()
            .chain(self.edited_spans_on_y_prime.iter().flatten());
        for s in spans {
            if s.is_empty() {
                return Err(format!("empty span {s}"));
            }
        }
        Ok(())
    }

    /// Checks spans against the token count of `y'`.
    pub fn validate_bounds(&self, y_prime: &str) -> Result<(), ReportError> {
        let n = split_reference(y_prime).len();
        let spans = self
            .error_spans
            .iter()
            .chain(self.edited_spans_on_y_prime.iter().flatten());
        for s in spans {
            if s.end > n {
                return Err(ReportError::InvalidGold {
                    case_id: self.case_id.clone(),
                    message: format!("span {s} out of range for {n} tokens of y'"),
                });
            }
        }
        Ok(())
    }
}

/// Gold annotations keyed by `(case_id, system_id)`.
#[derive(Clone, Debug, Default)]
pub struct GoldSet {
    rows: HashMap<(String, String), GoldErrorAnnotation>,
}

impl GoldSet {
    pub fn new(rows: impl IntoIterator<Item = GoldErrorAnnotation>) -> Result<Self, ReportError> {
        let mut map = HashMap::new();
        for row in rows {
            row.validate().map_err(|message| ReportError::InvalidGold {
                case_id: row.case_id.clone(),
                message,
            })?;
            let key = (row.case_id.clone(), row.system_id.clone());
            if map.insert(key, row.clone()).is_some() {
                return Err(ReportError::InvalidGold {
                    case_id: row.case_id,
                    message: "duplicate gold row".into(),
                });
            }
        }
        Ok(Self { rows: map })
    }

    pub fn parse<R: BufRead>(reader: R) -> Result<Self, ReportError> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| ReportError::Io {
                path: "gold".into(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            rows.push(serde_json::from_str(&line).map_err(|e| ReportError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Self::new(rows)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let file = fs::File::open(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(io::BufReader::new(file))
    }

    pub fn get(&self, case_id: &str, system_id: &str) -> Option<&GoldErrorAnnotation> {
        self.rows.get(&(case_id.to_string(), system_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn lookup<S>(&self, v: &Verdict<S>) -> Result<&GoldErrorAnnotation, ReportError> {
        self.get(&v.case_id, &v.system_id)
            .ok_or_else(|| ReportError::MissingGold {
                case_id: v.case_id.clone(),
                system_id: v.system_id.clone(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapabilityReport {
    pub capability: Capability,
    pub system_id: String,
    /// `None` when every kept case errored for this system.
    pub pass_rate: Option<Percentage>,
    /// Kept test cases for the capability.
    pub size: usize,
    /// Kept cases excluded because scoring failed.
    pub errored: usize,
    /// Highest pass rate among systems for this capability (ties all flagged).
    pub best: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapabilityTable {
    pub rows: Vec<CapabilityReport>,
}

/// One row per `(capability, system)`, capabilities in canonical order and
/// systems in first-seen order.
pub fn capability_table<S>(
    verdicts: &[Verdict<S>],
    cases: &[TestCase],
    errored: &[RecordFailure],
) -> Result<CapabilityTable, ReportError> {
    capability_table_with(verdicts, cases, errored, PoolPolicy::default())
}

pub fn capability_table_with<S>(
    verdicts: &[Verdict<S>],
    cases: &[TestCase],
    errored: &[RecordFailure],
    policy: PoolPolicy,
) -> Result<CapabilityTable, ReportError> {
    let case_caps: HashMap<&str, Capability> = cases
        .iter()
        .map(|c| (c.case_id.as_str(), c.capability))
        .collect();
    let mut size: BTreeMap<Capability, usize> = BTreeMap::new();
    for c in cases.iter().filter(|c| c.filter_status.is_kept()) {
        *size.entry(c.capability).or_default() += 1;
    }

    let mut systems: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for s in verdicts
        .iter()
        .map(|v| v.system_id.as_str())
        .chain(errored.iter().map(|e| e.system_id.as_str()))
    {
        if seen.insert(s) {
            systems.push(s);
        }
    }

    let mut groups: BTreeMap<(Capability, usize), Vec<&Verdict<S>>> = BTreeMap::new();
    let sys_index: HashMap<&str, usize> = systems.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    for v in verdicts {
        let cap = *case_caps
            .get(v.case_id.as_str())
            .ok_or_else(|| ReportError::UnknownCase(v.case_id.clone()))?;
        groups.entry((cap, sys_index[v.system_id.as_str()])).or_default().push(v);
    }
    let mut errors: HashMap<(Capability, usize), usize> = HashMap::new();
    for e in errored {
        let cap = case_caps
            .get(e.case_id.as_str())
            .copied()
            .unwrap_or(e.capability);
        *errors.entry((cap, sys_index[e.system_id.as_str()])).or_default() += 1;
    }

    let mut rows = Vec::new();
    for (&cap, &n) in &size {
        let start = rows.len();
        for (si, system) in systems.iter().enumerate() {
            let err = errors.get(&(cap, si)).copied().unwrap_or(0);
            let group = groups.get(&(cap, si));
            if group.is_none() && err == 0 {
                continue;
            }
            let rate = group.and_then(|g| pass_rate_refs(g, policy));
            rows.push(CapabilityReport {
                capability: cap,
                system_id: system.to_string(),
                pass_rate: rate,
                size: n,
                errored: err,
                best: false,
            });
        }
        let best = rows[start..]
            .iter()
            .filter_map(|r| r.pass_rate.map(|p| p.hundredths()))
            .max();
        for r in &mut rows[start..] {
            r.best = best.is_some() && r.pass_rate.map(|p| p.hundredths()) == best;
        }
    }
    Ok(CapabilityTable { rows })
}

fn pass_rate_refs<S>(verdicts: &[&Verdict<S>], policy: PoolPolicy) -> Option<Percentage> {
    let pool: Vec<_> = verdicts
        .iter()
        .filter(|v| {
            policy == PoolPolicy::CountLowBaseAsFailure
                || v.fail_reason != Some(FailReason::LowBaseQuality)
        })
        .collect();
    let passed = pool.iter().filter(|v| v.passed).count() as u64;
    Percentage::new(passed, pool.len() as u64)
}

impl CapabilityTable {
    pub fn capabilities(&self) -> Vec<Capability> {
        let mut caps: Vec<Capability> = self.rows.iter().map(|r| r.capability).collect();
        caps.dedup();
        caps
    }

    pub fn systems(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.system_id) {
                out.push(r.system_id.clone());
            }
        }
        out
    }

    fn cell(&self, cap: Capability, system: &str) -> Option<&CapabilityReport> {
        self.rows
            .iter()
            .find(|r| r.capability == cap && r.system_id == system)
    }

    /// Systems as rows, capabilities as columns, then `Avg` and `Size` rows.
    /// The best system per capability is boldfaced.
    pub fn to_markdown(&self) -> String {
        let caps = self.capabilities();
        let systems = self.systems();
        let mut out = String::new();
        let _ = write!(out, "| MT Systems |");
        for c in &caps {
            let _ = write!(out, " {c} |");
        }
        out.push('\n');
        out.push_str("|---|");
        for _ in &caps {
            out.push_str("---|");
        }
        out.push('\n');
        for s in &systems {
            let _ = write!(out, "| {s} |");
            for &c in &caps {
                let text = match self.cell(c, s) {
                    Some(r) => match r.pass_rate {
                        Some(p) if r.best => format!("**{p}**"),
                        Some(p) => p.to_string(),
                        None => "n/a".to_string(),
                    },
                    None => "-".to_string(),
                };
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
        out.push_str("| Avg |");
        for &c in &caps {
            let rates: Vec<f64> = self
                .rows
                .iter()
                .filter(|r| r.capability == c)
                .filter_map(|r| r.pass_rate.map(|p| p.exact()))
                .collect();
            if rates.is_empty() {
                out.push_str(" n/a |");
            } else {
                let mean = rates.iter().sum::<f64>() / rates.len() as f64;
                let _ = write!(out, " {mean:.2} |");
            }
        }
        out.push('\n');
        out.push_str("| Size |");
        for &c in &caps {
            let n = self
                .rows
                .iter()
                .find(|r| r.capability == c)
                .map_or(0, |r| r.size);
            let _ = write!(out, " {n} |");
        }
        out.push('\n');
        out
    }

    pub fn to_csv(&self) -> io::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["capability", "system_id", "pass_rate", "size", "errored", "best"])
            .map_err(io::Error::other)?;
        for r in &self.rows {
            w.write_record([
                r.capability.as_str().to_string(),
                r.system_id.clone(),
                r.pass_rate.map(|p| p.to_string()).unwrap_or_default(),
                r.size.to_string(),
                r.errored.to_string(),
                r.best.to_string(),
            ])
            .map_err(io::Error::other)?;
        }
        let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
        String::from_utf8(bytes).map_err(io::Error::other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

pub fn render_report(table: &CapabilityTable, format: ReportFormat) -> io::Result<String> {
    match format {
        ReportFormat::Json => Ok(table.to_json()),
        ReportFormat::Markdown => Ok(table.to_markdown()),
        ReportFormat::Csv => table.to_csv(),
    }
}

pub fn emit_report(table: &CapabilityTable, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let io_err = |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    };
    let text = render_report(table, format).map_err(io_err)?;
    fs::write(path, text).map_err(io_err)
}

/// Counts behind precision and recall of flagged (failed) cases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub flagged: u64,
    pub gold_erroneous: u64,
    pub flagged_and_erroneous: u64,
}

impl PrecisionRecall {
    pub fn precision(&self) -> Result<Percentage, ReportError> {
        Percentage::new(self.flagged_and_erroneous, self.flagged).ok_or(ReportError::ZeroFlagged)
    }

    pub fn recall(&self) -> Result<Percentage, ReportError> {
        Percentage::new(self.flagged_and_erroneous, self.gold_erroneous)
            .ok_or(ReportError::ZeroGoldErrors)
    }
}

/// Precision = flagged and erroneous / flagged; recall = flagged and
/// erroneous / gold-erroneous, both over the verdicts given.
pub fn precision_recall<S>(verdicts: &[Verdict<S>], gold: &GoldSet) -> Result<PrecisionRecall, ReportError> {
    let mut pr = PrecisionRecall {
        flagged: 0,
        gold_erroneous: 0,
        flagged_and_erroneous: 0,
    };
    for v in verdicts {
        let g = gold.lookup(v)?;
        let flagged = !v.passed;
        pr.flagged += u64::from(flagged);
        pr.gold_erroneous += u64::from(g.is_erroneous);
        pr.flagged_and_erroneous += u64::from(flagged && g.is_erroneous);
    }
    Ok(pr)
}

/// Share of failed, gold-erroneous cases whose error spans overlap an edited
/// span projected onto `y'` (any shared token).
pub fn error_position_analysis<S>(verdicts: &[Verdict<S>], gold: &GoldSet) -> Result<Percentage, ReportError> {
    let mut total = 0u64;
    let mut at_edit = 0u64;
    for v in verdicts.iter().filter(|v| !v.passed) {
        let g = gold.lookup(v)?;
        if !g.is_erroneous {
            continue;
        }
        let edited = g
            .edited_spans_on_y_prime
            .as_ref()
            .ok_or_else(|| ReportError::MissingProjection(v.case_id.clone()))?;
        total += 1;
        let hit = g
            .error_spans
            .iter()
            .any(|e| edited.iter().any(|s| e.overlaps(s)));
        at_edit += u64::from(hit);
    }
    Percentage::new(at_edit, total).ok_or(ReportError::ZeroGoldErrors)
}

/// Either a defined percentage or the reason it is undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Defined(Percentage),
    Undefined(String),
}

impl Metric {
    pub fn from_result(r: Result<Percentage, ReportError>) -> Result<Self, ReportError> {
        match r {
            Ok(p) => Ok(Metric::Defined(p)),
            Err(e @ (ReportError::ZeroFlagged | ReportError::ZeroGoldErrors)) => {
                Ok(Metric::Undefined(match e {
                    ReportError::ZeroFlagged => "zero_flagged".into(),
                    _ => "zero_gold_errors".into(),
                }))
            }
            Err(e) => Err(e),
        }
    }

    fn cell(&self) -> String {
        match self {
            Metric::Defined(p) => p.to_string(),
            Metric::Undefined(reason) => format!("undefined ({reason})"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub system_id: String,
    pub counts: PrecisionRecall,
    pub precision: Metric,
    pub recall: Metric,
    pub error_position: Metric,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Per-system precision, recall and error-position share.
pub fn eval_report<S>(verdicts: &[Verdict<S>], gold: &GoldSet) -> Result<EvalReport, ReportError>
where
    S: Clone,
{
    let mut systems: Vec<&str> = Vec::new();
    for v in verdicts {
        if !systems.contains(&v.system_id.as_str()) {
            systems.push(&v.system_id);
        }
    }
    let mut rows = Vec::new();
    for s in systems {
        let vs: Vec<Verdict<S>> = verdicts.iter().filter(|v| v.system_id == s).cloned().collect();
        let counts = precision_recall(&vs, gold)?;
        rows.push(EvalRow {
            system_id: s.to_string(),
            counts,
            precision: Metric::from_result(counts.precision())?,
            recall: Metric::from_result(counts.recall())?,
            error_position: Metric::from_result(error_position_analysis(&vs, gold))?,
        });
    }
    Ok(EvalReport { rows })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| MT System | Precision | Recall | Errors at edits |\n|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                r.system_id,
                r.precision.cell(),
                r.recall.cell(),
                r.error_position.cell()
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSweep {
    pub capability: Capability,
    pub system_id: String,
    pub cells: Vec<SweepCell<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub systems: Vec<SystemSweep>,
}

/// Sweeps each `(capability, system)` group of records over the grid.
pub fn sweep_report(
    records: &[TranslationRecord<f64>],
    alphas: &[f64],
    betas: &[f64],
) -> Result<SweepReport, crate::judge::JudgeError> {
    let mut order: Vec<(Capability, &str)> = Vec::new();
    for r in records {
        let key = (r.capability, r.system_id.as_str());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order.sort_by_key(|&(c, _)| c);
    let mut systems = Vec::new();
    for (cap, s) in order {
        let rs: Vec<TranslationRecord<f64>> = records
            .iter()
            .filter(|r| r.capability == cap && r.system_id == s)
            .cloned()
            .collect();
        systems.push(SystemSweep {
            capability: cap,
            system_id: s.to_string(),
            cells: crate::judge::sweep(&rs, alphas, betas)?,
        });
    }
    Ok(SweepReport { systems })
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// One table per capability: systems as rows, one column per
    /// `(alpha, beta)` cell, best per column boldfaced, then an `Avg` row.
    pub fn to_markdown(&self) -> String {
        let mut caps: Vec<Capability> = self.systems.iter().map(|s| s.capability).collect();
        caps.dedup();
        let mut out = String::new();
        for (i, cap) in caps.into_iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let group: Vec<&SystemSweep> =
                self.systems.iter().filter(|s| s.capability == cap).collect();
            let _ = writeln!(out, "### {cap}\n");
            sweep_table(&mut out, &group);
        }
        out
    }
}

fn sweep_table(out: &mut String, systems: &[&SystemSweep]) {
    let first = systems[0];
    out.push_str("| MT System |");
    for c in &first.cells {
        let _ = write!(out, " α = {}, β = {} |", c.alpha, c.beta);
    }
    out.push_str("\n|---|");
    for _ in &first.cells {
        out.push_str("---|");
    }
    out.push('\n');
    let best: Vec<u64> = (0..first.cells.len())
        .map(|i| {
            systems
                .iter()
                .map(|s| s.cells[i].pass_rate.hundredths())
                .max()
                .unwrap_or(0)
        })
        .collect();
    for s in systems {
        let _ = write!(out, "| {} |", s.system_id);
        for (i, c) in s.cells.iter().enumerate() {
            if systems.len() > 1 && c.pass_rate.hundredths() == best[i] {
                let _ = write!(out, " **{}** |", c.pass_rate);
            } else {
                let _ = write!(out, " {} |", c.pass_rate);
            }
        }
        out.push('\n');
    }
    out.push_str("| Avg |");
    for i in 0..first.cells.len() {
        let mean = systems
            .iter()
            .map(|s| s.cells[i].pass_rate.exact())
            .sum::<f64>()
            / systems.len() as f64;
        let _ = write!(out, " {mean:.2} |");
    }
    out.push('\n');
}

/// Pass rate over all verdicts of one system, ignoring capability.
pub fn overall_pass_rate<S>(verdicts: &[Verdict<S>], system_id: &str) -> Option<Percentage>
where
    S: Clone,
{
    let vs: Vec<Verdict<S>> = verdicts
        .iter()
        .filter(|v| v.system_id == system_id)
        .cloned()
        .collect();
    pass_rate(&vs).ok()
}
