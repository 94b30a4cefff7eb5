//! Run archives, summary tables and the static HTML report.
//!
//! A run directory looks like this:
//!
//! ```text
//! prompts/000001.json      one rendered prompt per file
//! completions/000001.json  raw completion, usage and candidate verdicts
//! mutants.json
//! outcomes.json            absent until the run phase has finished
//! manifest.json
//! summary.json
//! report/index.html        plus report/files/*.html
//! ```
//!
//! JSON documents are pretty-printed with object keys in sorted order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{ConfigFingerprint, EquivalenceFlag};
use crate::extraction::{CandidateRecord, ExtractionLedger, Mutant};
use crate::llm::Usage;
use crate::prompting::Prompt;
use crate::runner::{format_score, summarize, MutantOutcome, OutcomeRecord};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

/// Pretty JSON with sorted object keys and a trailing newline.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    // serde_json's Map is ordered by key, so a round trip through Value sorts
    let value = serde_json::to_value(value).expect("archive types serialize to JSON");
    let mut s = serde_json::to_string_pretty(&value).expect("JSON value serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, to_sorted_json(value)).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json { path: path.to_path_buf(), source })
}

/// Knobs of the generate phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub template: String,
    pub system_prompt: String,
    pub window_lines: usize,
    pub max_nr_prompts: usize,
    pub rate_limit_ms: u64,
    pub nr_attempts: u32,
    pub src_dirs: Vec<String>,
    /// `mock:<fixture path>` or the endpoint URL.
    pub backend: String,
}

impl GenerationSettings {
    pub fn fingerprint(&self) -> ConfigFingerprint {
        ConfigFingerprint { model: self.model.clone(), temperature: self.temperature, template: self.template.clone() }
    }
}

/// Knobs of the run phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionSettings {
    pub test_command: Vec<String>,
    pub workers: usize,
    pub timeout_factor: f64,
    pub timeout_slack_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub generation: Option<GenerationSettings>,
    pub execution: Option<ExecutionSettings>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileLedger {
    pub prompts: u64,
    #[serde(flatten)]
    pub ledger: ExtractionLedger,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPhase {
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_ms: u64,
    pub prompts: u64,
    /// Prompts whose completion request failed; they yield no candidates.
    pub failed_prompts: u64,
    pub tokens: Usage,
    /// Set when any response lacked provider-reported usage.
    pub tokens_estimated: bool,
    pub files: BTreeMap<String, FileLedger>,
    pub skipped_files: Vec<SkippedFile>,
}

impl GenerationPhase {
    pub fn ledger(&self) -> ExtractionLedger {
        self.files.values().fold(ExtractionLedger::default(), |acc, f| acc + f.ledger)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErroredMutant {
    pub mutant_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPhase {
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub wall_ms: u64,
    pub baseline_ms: u64,
    pub timeout_ms: u64,
    /// Mutants that could not be executed; they are left out of the score.
    pub errored: Vec<ErroredMutant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub project: String,
    pub tool_version: String,
    pub created_at: DateTime<Utc>,
    pub config: RunSettings,
    pub generation: Option<GenerationPhase>,
    pub execution: Option<ExecutionPhase>,
}

impl RunManifest {
    pub fn new(project: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        let project = project.into();
        Self {
            run_id: format!("{}-{}", created_at.format("%Y%m%dT%H%M%S%3fZ"), project),
            project,
            tool_version: TOOL_VERSION.to_string(),
            created_at,
            config: RunSettings::default(),
            generation: None,
            execution: None,
        }
    }
}

/// Archived completion for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub prompt_id: u32,
    pub content: String,
    pub usage: Usage,
    pub usage_estimated: bool,
    pub latency_ms: u64,
    pub attempts: u32,
    pub error: Option<String>,
    pub candidates: Vec<CandidateRecord>,
}

/// One line of the summary table; `mutation_score` is rounded to two
/// decimals and absent for the Total row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub project: String,
    pub prompts: u64,
    pub candidates: u64,
    pub invalid: u64,
    pub identical: u64,
    pub duplicate: u64,
    pub mutants: u64,
    pub killed: u64,
    pub survived: u64,
    pub timeout: u64,
    pub mutation_score: Option<f64>,
    pub errored: u64,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl SummaryRow {
    pub fn new(project: impl Into<String>, prompts: u64, ledger: ExtractionLedger, outcomes: &[OutcomeRecord]) -> Self {
        let s = summarize(outcomes);
        Self {
            project: project.into(),
            prompts,
            candidates: ledger.candidates,
            invalid: ledger.invalid,
            identical: ledger.identical,
            duplicate: ledger.duplicate,
            mutants: ledger.mutants,
            killed: s.killed,
            survived: s.survived,
            timeout: s.timeout,
            mutation_score: s.score.map(round2),
            errored: s.errored,
        }
    }

    pub fn ledger(&self) -> ExtractionLedger {
        ExtractionLedger {
            candidates: self.candidates,
            invalid: self.invalid,
            identical: self.identical,
            duplicate: self.duplicate,
            mutants: self.mutants,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
    pub total: SummaryRow,
}

impl SummaryTable {
    pub fn new(rows: Vec<SummaryRow>) -> Self {
        let mut total = SummaryRow::new("Total", 0, ExtractionLedger::default(), &[]);
        for r in &rows {
            total.prompts += r.prompts;
            total.candidates += r.candidates;
            total.invalid += r.invalid;
            total.identical += r.identical;
            total.duplicate += r.duplicate;
            total.mutants += r.mutants;
            total.killed += r.killed;
            total.survived += r.survived;
            total.timeout += r.timeout;
            total.errored += r.errored;
        }
        Self { rows, total }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SummaryFormat {
    Text,
    Csv,
    Json,
}

const COLUMNS: [&str; 12] = [
    "project", "prompts", "candidates", "invalid", "identical", "duplicate", "mutants", "killed", "survived", "timeout",
    "mut. score", "errored",
];

fn cells(r: &SummaryRow) -> [String; 12] {
    [
        r.project.clone(),
        r.prompts.to_string(),
        r.candidates.to_string(),
        r.invalid.to_string(),
        r.identical.to_string(),
        r.duplicate.to_string(),
        r.mutants.to_string(),
        r.killed.to_string(),
        r.survived.to_string(),
        r.timeout.to_string(),
        format_score(r.mutation_score),
        r.errored.to_string(),
    ]
}

pub fn render_summary(table: &SummaryTable, format: SummaryFormat) -> Result<String, ReportError> {
    let lines: Vec<[String; 12]> = table.rows.iter().chain([&table.total]).map(cells).collect();
    match format {
        SummaryFormat::Json => Ok(to_sorted_json(table)),
        SummaryFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for l in &lines {
                w.write_record(l)?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
        SummaryFormat::Text => {
            let mut widths = COLUMNS.map(|c| c.chars().count());
            for l in &lines {
                for (w, c) in widths.iter_mut().zip(l) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let fmt_line = |l: &[String]| {
                let mut s = String::new();
                for (i, (c, w)) in l.iter().zip(widths).enumerate() {
                    if i == 0 {
                        let _ = write!(s, "{c:<w$}");
                    } else {
                        let _ = write!(s, "  {c:>w$}");
                    }
                }
                s.push('\n');
                s
            };
            let header: Vec<String> = COLUMNS.iter().map(|c| c.to_string()).collect();
            let mut out = fmt_line(&header);
            for l in &lines {
                out.push_str(&fmt_line(l));
            }
            Ok(out)
        }
    }
}

/// A loaded run directory. `outcomes` is `None` for a run that has not been
/// executed yet.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArchive {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub mutants: Vec<Mutant>,
    pub outcomes: Option<Vec<OutcomeRecord>>,
}

impl RunArchive {
    pub fn load(dir: &Path) -> Result<Self, ReportError> {
        let manifest = read_json(&dir.join("manifest.json"))?;
        let mutants = read_json(&dir.join("mutants.json"))?;
        let outcomes_path = dir.join("outcomes.json");
        let outcomes = if outcomes_path.exists() { Some(read_json(&outcomes_path)?) } else { None };
        Ok(Self { dir: dir.to_path_buf(), manifest, mutants, outcomes })
    }

    pub fn is_partial(&self) -> bool {
        self.outcomes.is_none()
    }

    fn ledger_and_prompts(&self) -> (ExtractionLedger, u64) {
        match &self.manifest.generation {
            Some(g) => (g.ledger(), g.prompts),
            None => {
                let n = self.mutants.len() as u64;
                (ExtractionLedger { candidates: n, mutants: n, ..Default::default() }, 0)
            }
        }
    }

    pub fn summary(&self) -> SummaryTable {
        let (ledger, prompts) = self.ledger_and_prompts();
        let outcomes = self.outcomes.as_deref().unwrap_or(&[]);
        SummaryTable::new(vec![SummaryRow::new(self.manifest.project.clone(), prompts, ledger, outcomes)])
    }

    /// Per-file rows, keyed by file path.
    pub fn file_rows(&self) -> Vec<SummaryRow> {
        let outcomes: BTreeMap<&str, &OutcomeRecord> =
            self.outcomes.iter().flatten().map(|o| (o.mutant_id.as_str(), o)).collect();
        let mut files: BTreeMap<String, (FileLedger, Vec<OutcomeRecord>)> = BTreeMap::new();
        if let Some(g) = &self.manifest.generation {
            for (f, l) in &g.files {
                files.entry(f.clone()).or_default().0 = *l;
            }
        }
        for m in &self.mutants {
            let entry = files.entry(m.file.clone()).or_default();
            if self.manifest.generation.is_none() {
                entry.0.ledger.record(crate::extraction::FilterVerdict::Accepted);
            }
            if let Some(o) = outcomes.get(m.id.as_str()) {
                entry.1.push((*o).clone());
            }
        }
        files.into_iter().map(|(f, (l, o))| SummaryRow::new(f, l.prompts, l.ledger, &o)).collect()
    }
}

/// Everything a finished run consists of, for writing in one go.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub manifest: RunManifest,
    pub prompts: Vec<Prompt>,
    pub completions: Vec<CompletionRecord>,
    pub mutants: Vec<Mutant>,
    pub outcomes: Option<Vec<OutcomeRecord>>,
}

pub fn prompt_path(dir: &Path, id: u32) -> PathBuf {
    dir.join("prompts").join(format!("{id:06}.json"))
}

pub fn completion_path(dir: &Path, id: u32) -> PathBuf {
    dir.join("completions").join(format!("{id:06}.json"))
}

pub fn write_run_archive(dir: &Path, run: &RunArtifacts) -> Result<RunArchive, ReportError> {
    fs::create_dir_all(dir.join("prompts")).map_err(io_err(dir))?;
    fs::create_dir_all(dir.join("completions")).map_err(io_err(dir))?;
    for p in &run.prompts {
        write_json(&prompt_path(dir, p.id), p)?;
    }
    for c in &run.completions {
        write_json(&completion_path(dir, c.prompt_id), c)?;
    }
    write_json(&dir.join("mutants.json"), &run.mutants)?;
    let outcomes_path = dir.join("outcomes.json");
    match &run.outcomes {
        Some(o) => write_json(&outcomes_path, o)?,
        None if outcomes_path.exists() => fs::remove_file(&outcomes_path).map_err(io_err(&outcomes_path))?,
        None => {}
    }
    write_json(&dir.join("manifest.json"), &run.manifest)?;
    let archive = RunArchive {
        dir: dir.to_path_buf(),
        manifest: run.manifest.clone(),
        mutants: run.mutants.clone(),
        outcomes: run.outcomes.clone(),
    };
    write_json(&dir.join("summary.json"), &archive.summary())?;
    Ok(archive)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

pub fn report_page_name(file: &str) -> String {
    let stem: String = file.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect();
    format!("{stem}.html")
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}\
table{border-collapse:collapse}td,th{border:1px solid #ccc;padding:.25em .6em;text-align:right}\
td:first-child,th:first-child{text-align:left}pre{background:#f6f6f6;padding:.5em;overflow-x:auto}\
details{margin:.4em 0;border-left:4px solid #ccc;padding-left:.6em}\
.killed{border-color:#2a2}.timeout{border-color:#28c}.survived{border-color:#d33}.errored{border-color:#999}\
.pending{border-color:#ccc}.flag{color:#a60}";

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body>\n{body}</body>\n</html>\n",
        escape(title)
    )
}

fn summary_html(rows: &[SummaryRow], total: Option<&SummaryRow>, link: bool) -> String {
    let mut s = String::from("<table>\n<tr>");
    for c in COLUMNS {
        let _ = write!(s, "<th>{}</th>", escape(c));
    }
    s.push_str("</tr>\n");
    for r in rows.iter().chain(total) {
        let c = cells(r);
        s.push_str("<tr>");
        for (i, v) in c.iter().enumerate() {
            if i == 0 && link && total.is_none_or(|t| !std::ptr::eq(t, r)) {
                let _ = write!(s, "<td><a href=\"files/{}\">{}</a></td>", escape(&report_page_name(v)), escape(v));
            } else {
                let _ = write!(s, "<td>{}</td>", escape(v));
            }
        }
        s.push_str("</tr>\n");
    }
    s.push_str("</table>\n");
    s
}

fn outcome_label(o: Option<&OutcomeRecord>) -> (&'static str, String) {
    match o {
        None => ("pending", "not run".to_string()),
        Some(o) => {
            let label = match o.outcome {
                MutantOutcome::Killed => "killed",
                MutantOutcome::Survived => "survived",
                MutantOutcome::Timeout => "timeout",
                MutantOutcome::Errored => "errored",
            };
            (label, format!("{label}, {} ms", o.duration_ms))
        }
    }
}

/// Writes `report/index.html` and one page per source file under
/// `report/files/`. Pages use inline CSS only and no scripts.
pub fn render_html_report(archive: &RunArchive, flags: &[EquivalenceFlag], out: &Path) -> Result<(), ReportError> {
    let files_dir = out.join("files");
    fs::create_dir_all(&files_dir).map_err(io_err(&files_dir))?;
    let summary = archive.summary();
    let file_rows = archive.file_rows();
    let m = &archive.manifest;

    let mut body = format!("<h1>Mutation testing: {}</h1>\n", escape(&m.project));
    let _ = writeln!(body, "<p>Run <code>{}</code>, tool version {}.</p>", escape(&m.run_id), escape(&m.tool_version));
    if archive.is_partial() {
        body.push_str("<p><strong>Mutants have not been executed yet.</strong></p>\n");
    }
    body.push_str("<h2>Summary</h2>\n");
    body.push_str(&summary_html(&summary.rows, Some(&summary.total), false));
    body.push_str("<h2>Files</h2>\n");
    body.push_str(&summary_html(&file_rows, None, true));
    if let Some(g) = &m.generation {
        let _ = writeln!(
            body,
            "<h2>Tokens</h2>\n<p>prompt {}, completion {}, total {}{}</p>",
            g.tokens.prompt_tokens,
            g.tokens.completion_tokens,
            g.tokens.total_tokens,
            if g.tokens_estimated { " (estimated)" } else { "" }
        );
        if !g.skipped_files.is_empty() {
            body.push_str("<h2>Skipped files</h2>\n<ul>\n");
            for s in &g.skipped_files {
                let _ = writeln!(body, "<li><code>{}</code>: {}</li>", escape(&s.file), escape(&s.reason));
            }
            body.push_str("</ul>\n");
        }
    }
    let index = out.join("index.html");
    fs::write(&index, page(&format!("{} mutation report", m.project), &body)).map_err(io_err(&index))?;

    let outcomes: BTreeMap<&str, &OutcomeRecord> =
        archive.outcomes.iter().flatten().map(|o| (o.mutant_id.as_str(), o)).collect();
    let mut flags_by_id: BTreeMap<&str, Vec<&EquivalenceFlag>> = BTreeMap::new();
    for f in flags {
        flags_by_id.entry(f.mutant_id.as_str()).or_default().push(f);
    }
    for row in &file_rows {
        let mut body = format!("<p><a href=\"../index.html\">index</a></p>\n<h1>{}</h1>\n", escape(&row.project));
        body.push_str(&summary_html(std::slice::from_ref(row), None, false));
        let mut mutants: Vec<&Mutant> = archive.mutants.iter().filter(|m| m.file == row.project).collect();
        mutants.sort_by_key(|m| (m.range, m.id.clone()));
        for mu in mutants {
            let (class, label) = outcome_label(outcomes.get(mu.id.as_str()).copied());
            let _ = writeln!(
                body,
                "<details class=\"{class}\">\n<summary>{}:{}&ndash;{}:{} {} &middot; {}</summary>",
                mu.range.start.line,
                mu.range.start.col,
                mu.range.end.line,
                mu.range.end.col,
                escape(&mu.kind.to_string()),
                escape(&label)
            );
            let _ = writeln!(body, "<p>original</p>\n<pre>{}</pre>", escape(&mu.original));
            let _ = writeln!(body, "<p>replacement</p>\n<pre>{}</pre>", escape(&mu.replacement));
            for f in flags_by_id.get(mu.id.as_str()).into_iter().flatten() {
                let _ = writeln!(body, "<p class=\"flag\">possible equivalent ({:?}): {}</p>", f.pattern, escape(&f.rationale));
            }
            let _ = writeln!(
                body,
                "<p><small>id {} &middot; prompt {} option {}</small></p>\n</details>",
                escape(&mu.id[..12.min(mu.id.len())]),
                mu.provenance.prompt_id,
                mu.provenance.option_index
            );
        }
        let path = files_dir.join(report_page_name(&row.project));
        fs::write(&path, page(&row.project, &body)).map_err(io_err(&path))?;
    }
    Ok(())
}
