//! The three phases: `generate` (sites → prompts → completions → mutants),
//! `run` (execute mutants against the test suite) and `analyze` (compare
//! archived runs).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use chrono::Utc;
use thiserror::Error;
use walkdir::WalkDir;

use crate::analysis::{self, AnalysisError, ConfigFingerprint, EquivalenceFlag, RunRecord, SimilarityStats, VariabilityReport};
use crate::extraction::{extract_candidates, GenerationContext, Mutant, MutantRegistry};
use crate::llm::{
    ChatRequest, ChatTransport, ClientPolicy, Clock, HttpConfig, HttpTransport, LlmClient, MockFixture, MockTransport,
    SystemClock, Usage,
};
use crate::par::{self, Strategy};
use crate::prompting::{render_prompt, Catalog, PromptTemplate, RenderError};
use crate::reporting::{
    completion_path, prompt_path, read_json, render_html_report, write_json, CompletionRecord, ErroredMutant,
    ExecutionPhase, ExecutionSettings, FileLedger, GenerationPhase, GenerationSettings, ReportError, RunArchive,
    RunManifest, SkippedFile,
};
use crate::runner::{self, MutantOutcome, RunError, TestPlan};
use crate::syntax::{enumerate_sites, profile_for_extension, PlaceholderSite, SourceFile, SyntaxError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no source files found under {0}")]
    NoSources(String),
    #[error("none of the {0} source files could be parsed")]
    NothingParsed(usize),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Mock(PathBuf),
    Http(HttpConfig),
}

impl Backend {
    fn describe(&self) -> String {
        match self {
            Backend::Mock(p) => format!("mock:{}", p.display()),
            Backend::Http(c) => c.endpoint_url.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateConfig {
    pub project_root: PathBuf,
    pub out_dir: PathBuf,
    pub src_dirs: Vec<String>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Catalog name, or a path to a template file.
    pub template: String,
    pub system_prompt: String,
    pub window_lines: usize,
    pub max_nr_prompts: usize,
    pub rate_limit_ms: u64,
    pub nr_attempts: u32,
    pub backend: Backend,
    pub strategy: Strategy,
}

impl GenerateConfig {
    pub fn new(project_root: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, backend: Backend) -> Self {
        Self {
            project_root: project_root.into(),
            out_dir: out_dir.into(),
            src_dirs: vec!["src".into()],
            model: "codellama-34b-instruct".into(),
            temperature: 0.0,
            max_tokens: 250,
            template: "full".into(),
            system_prompt: "expert".into(),
            window_lines: 200,
            max_nr_prompts: 2000,
            rate_limit_ms: 0,
            nr_attempts: 3,
            backend,
            strategy: Strategy::default(),
        }
    }

    pub fn settings(&self) -> GenerationSettings {
        GenerationSettings {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            template: self.template.clone(),
            system_prompt: self.system_prompt.clone(),
            window_lines: self.window_lines,
            max_nr_prompts: self.max_nr_prompts,
            rate_limit_ms: self.rate_limit_ms,
            nr_attempts: self.nr_attempts,
            src_dirs: self.src_dirs.clone(),
            backend: self.backend.describe(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub run_dir: PathBuf,
    pub project_root: PathBuf,
    pub test_command: Vec<String>,
    pub workers: usize,
    pub timeout_factor: f64,
    pub timeout_slack_ms: u64,
    /// Precomputed `mutants.json` to execute instead of the run directory's.
    pub mutants: Option<PathBuf>,
    pub strategy: Strategy,
}

impl RunConfig {
    pub fn new(run_dir: impl Into<PathBuf>, project_root: impl Into<PathBuf>, test_command: Vec<String>) -> Self {
        Self {
            run_dir: run_dir.into(),
            project_root: project_root.into(),
            test_command,
            workers: 1,
            timeout_factor: 1.5,
            timeout_slack_ms: 5000,
            mutants: None,
            strategy: Strategy::default(),
        }
    }
}

/// Name a project is reported under: the last component of its root.
pub fn project_name(root: &Path) -> String {
    let canonical = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
    canonical.file_name().map_or_else(|| "project".to_string(), |n| n.to_string_lossy().into_owned())
}

/// Source files under `root/<src_dir>` for every registered language, as
/// sorted `/`-separated paths relative to `root`. `node_modules` and hidden
/// directories are skipped.
pub fn discover_sources(root: &Path, src_dirs: &[String]) -> Vec<String> {
    let mut found = BTreeSet::new();
    for dir in src_dirs {
        let base = root.join(dir);
        if !base.exists() {
            log::warn!("source directory {} does not exist", base.display());
            continue;
        }
        let walker = WalkDir::new(&base).into_iter().filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            e.depth() == 0 || !(name == "node_modules" || name.starts_with('.'))
        });
        for entry in walker.filter_map(Result::ok) {
            if !entry.file_type().is_file() {
                continue;
            }
            let ext = entry.path().extension().and_then(|e| e.to_str()).unwrap_or("");
            if profile_for_extension(ext).is_none() {
                continue;
            }
            if let Ok(rel) = entry.path().strip_prefix(root) {
                let parts: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
                found.insert(parts.join("/"));
            }
        }
    }
    found.into_iter().collect()
}

/// Parses every file and enumerates its sites. Files that fail to load or
/// parse are returned as skipped.
pub fn collect_sites(
    root: &Path,
    files: &[String],
    strategy: Strategy,
) -> (Vec<(String, Vec<PlaceholderSite>)>, Vec<SkippedFile>) {
    let results = par::map(strategy, files, |rel| -> Result<Vec<PlaceholderSite>, SyntaxError> {
        let file = Arc::new(SourceFile::load(root, rel)?);
        enumerate_sites(&file)
    });
    let mut parsed = Vec::new();
    let mut skipped = Vec::new();
    for (rel, r) in files.iter().zip(results) {
        match r {
            Ok(sites) => parsed.push((rel.clone(), sites)),
            Err(e) => {
                log::warn!("skipping {rel}: {e}");
                skipped.push(SkippedFile { file: rel.clone(), reason: e.to_string() });
            }
        }
    }
    (parsed, skipped)
}

fn resolve_template(catalog: &Catalog, name: &str) -> Result<PromptTemplate, PipelineError> {
    match catalog.template(name) {
        Ok(t) => Ok(t.clone()),
        Err(e) if Path::new(name).is_file() => {
            log::debug!("{e}; loading {name} as a template file");
            Ok(PromptTemplate::from_file(Path::new(name))?)
        }
        Err(e) => Err(e.into()),
    }
}

fn clear_run_outputs(dir: &Path) -> Result<(), PipelineError> {
    for sub in ["prompts", "completions", "report"] {
        let p = dir.join(sub);
        if p.exists() {
            fs::remove_dir_all(&p).map_err(io_err(&p))?;
        }
    }
    for f in ["outcomes.json", "summary.json", "mutants.json", "manifest.json"] {
        let p = dir.join(f);
        if p.exists() {
            fs::remove_file(&p).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

fn write_report(archive: &RunArchive, strategy: Strategy) -> Result<Vec<EquivalenceFlag>, PipelineError> {
    let flags = analysis::flag_equivalents(strategy, &archive.mutants);
    write_json(&archive.dir.join("summary.json"), &archive.summary())?;
    render_html_report(archive, &flags, &archive.dir.join("report"))?;
    Ok(flags)
}

/// Generate phase against the configured backend.
pub fn cmd_generate(cfg: &GenerateConfig) -> Result<RunArchive, PipelineError> {
    let transport: Box<dyn ChatTransport> = match &cfg.backend {
        Backend::Mock(path) => Box::new(MockTransport::new(MockFixture::load(path).map_err(io_err(path))?)),
        Backend::Http(http) => Box::new(
            HttpTransport::new(http.clone()).map_err(|e| PipelineError::Config(format!("HTTP client: {e:?}")))?,
        ),
    };
    let mut client = LlmClient::new(transport, SystemClock::default());
    generate_with(cfg, &mut client)
}

/// Generate phase with a caller-supplied client.
pub fn generate_with<T: ChatTransport, C: Clock>(
    cfg: &GenerateConfig,
    client: &mut LlmClient<T, C>,
) -> Result<RunArchive, PipelineError> {
    let started_at = Utc::now();
    let clock = Instant::now();
    let catalog = Catalog::builtin();
    let template = resolve_template(&catalog, &cfg.template)?;
    let system = catalog.system_prompt(&cfg.system_prompt)?.clone();
    if cfg.window_lines == 0 {
        return Err(PipelineError::Config("window_lines must be positive".into()));
    }

    let files = discover_sources(&cfg.project_root, &cfg.src_dirs);
    if files.is_empty() {
        return Err(PipelineError::NoSources(cfg.project_root.display().to_string()));
    }
    let (parsed, skipped) = collect_sites(&cfg.project_root, &files, cfg.strategy);
    if parsed.is_empty() {
        return Err(PipelineError::NothingParsed(files.len()));
    }

    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    clear_run_outputs(&cfg.out_dir)?;

    let ctx = GenerationContext { template: template.name.clone(), model: cfg.model.clone(), temperature: cfg.temperature };
    let policy = ClientPolicy { rate_limit_ms: cfg.rate_limit_ms, nr_attempts: cfg.nr_attempts };
    let mut registry = MutantRegistry::new();
    let mut prompts_per_file: BTreeMap<String, u64> = BTreeMap::new();
    for (file, _) in &parsed {
        registry.touch(file);
        prompts_per_file.insert(file.clone(), 0);
    }
    let mut tokens = Usage::default();
    let mut estimated = false;
    let mut failed = 0;
    let mut issued = 0u64;

    let sites = parsed.iter().flat_map(|(_, s)| s.iter()).take(cfg.max_nr_prompts);
    for (i, site) in sites.enumerate() {
        let id = i as u32 + 1;
        let prompt = render_prompt(id, site, &template, &system, cfg.window_lines)?;
        write_json(&prompt_path(&cfg.out_dir, id), &prompt)?;
        issued += 1;
        *prompts_per_file.entry(site.file.path.clone()).or_default() += 1;
        let req = ChatRequest {
            model: cfg.model.clone(),
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        };
        let record = match client.complete(&req, &policy) {
            Ok(resp) => {
                tokens = tokens + resp.usage;
                estimated |= resp.usage_estimated;
                let candidates = extract_candidates(&resp.content, site, id);
                let records = registry.ingest(site, candidates, &ctx, cfg.strategy);
                CompletionRecord {
                    prompt_id: id,
                    content: resp.content,
                    usage: resp.usage,
                    usage_estimated: resp.usage_estimated,
                    latency_ms: resp.latency_ms,
                    attempts: resp.attempts,
                    error: None,
                    candidates: records,
                }
            }
            Err(e) => {
                log::warn!("prompt {id} ({}): {e}", site.file.path);
                failed += 1;
                CompletionRecord {
                    prompt_id: id,
                    content: String::new(),
                    usage: Usage::default(),
                    usage_estimated: false,
                    latency_ms: 0,
                    attempts: 0,
                    error: Some(e.to_string()),
                    candidates: Vec::new(),
                }
            }
        };
        write_json(&completion_path(&cfg.out_dir, id), &record)?;
    }

    let (ledgers, mutants) = registry.into_parts();
    let files = ledgers
        .into_iter()
        .map(|(f, ledger)| {
            let prompts = prompts_per_file.get(&f).copied().unwrap_or(0);
            (f, FileLedger { prompts, ledger })
        })
        .collect();
    let mut manifest = RunManifest::new(project_name(&cfg.project_root), started_at);
    manifest.config.generation = Some(cfg.settings());
    manifest.generation = Some(GenerationPhase {
        started_at,
        finished_at: Utc::now(),
        wall_ms: clock.elapsed().as_millis() as u64,
        prompts: issued,
        failed_prompts: failed,
        tokens,
        tokens_estimated: estimated,
        files,
        skipped_files: skipped,
    });
    write_json(&cfg.out_dir.join("mutants.json"), &mutants)?;
    write_json(&cfg.out_dir.join("manifest.json"), &manifest)?;
    let archive = RunArchive { dir: cfg.out_dir.clone(), manifest, mutants, outcomes: None };
    write_report(&archive, cfg.strategy)?;
    log::info!("generated {} mutants from {issued} prompts", archive.mutants.len());
    Ok(archive)
}

/// Run phase: executes the archived (or precomputed) mutants and completes
/// the archive with outcomes, summary and report.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunArchive, PipelineError> {
    let started_at = Utc::now();
    let clock = Instant::now();
    let mutants_path = cfg.mutants.clone().unwrap_or_else(|| cfg.run_dir.join("mutants.json"));
    let mutants: Vec<Mutant> = read_json(&mutants_path)?;
    fs::create_dir_all(&cfg.run_dir).map_err(io_err(&cfg.run_dir))?;

    let manifest_path = cfg.run_dir.join("manifest.json");
    let sibling = mutants_path.parent().map(|p| p.join("manifest.json"));
    let mut manifest: RunManifest = if manifest_path.exists() {
        read_json(&manifest_path)?
    } else if let Some(s) = sibling.filter(|s| s.exists()) {
        read_json(&s)?
    } else {
        RunManifest::new(project_name(&cfg.project_root), started_at)
    };
    if cfg.mutants.is_some() {
        write_json(&cfg.run_dir.join("mutants.json"), &mutants)?;
    }

    let plan = TestPlan {
        project_root: cfg.project_root.clone(),
        command: cfg.test_command.clone(),
        timeout_factor: cfg.timeout_factor,
        timeout_slack_ms: cfg.timeout_slack_ms,
        workers: cfg.workers,
    };
    let baseline = runner::baseline(&plan)?;
    log::info!("baseline passed in {} ms", baseline.duration_ms);
    let outcomes = runner::run_mutants(&plan, &mutants, &baseline)?;

    manifest.config.execution = Some(ExecutionSettings {
        test_command: cfg.test_command.clone(),
        workers: cfg.workers,
        timeout_factor: cfg.timeout_factor,
        timeout_slack_ms: cfg.timeout_slack_ms,
    });
    manifest.execution = Some(ExecutionPhase {
        started_at,
        finished_at: Utc::now(),
        wall_ms: clock.elapsed().as_millis() as u64,
        baseline_ms: baseline.duration_ms,
        timeout_ms: plan.timeout_ms(baseline.duration_ms),
        errored: outcomes
            .iter()
            .filter(|o| o.outcome == MutantOutcome::Errored)
            .map(|o| ErroredMutant { mutant_id: o.mutant_id.clone(), error: o.error.clone().unwrap_or_default() })
            .collect(),
    });
    write_json(&cfg.run_dir.join("outcomes.json"), &outcomes)?;
    write_json(&manifest_path, &manifest)?;
    let archive = RunArchive { dir: cfg.run_dir.clone(), manifest, mutants, outcomes: Some(outcomes) };
    write_report(&archive, cfg.strategy)?;
    Ok(archive)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzeOutput {
    pub variability: Option<VariabilityReport>,
    /// Why variability was not computed, if it was not.
    pub note: Option<String>,
    pub similarity: SimilarityStats,
    pub flags: Vec<EquivalenceFlag>,
}

/// Run record of an archive, keyed by its mutant ids.
pub fn run_record(archive: &RunArchive) -> RunRecord {
    let fingerprint = archive
        .manifest
        .config
        .generation
        .as_ref()
        .map(GenerationSettings::fingerprint)
        .unwrap_or(ConfigFingerprint { model: "unknown".into(), temperature: f64::NAN, template: "unknown".into() });
    let keys = archive.mutants.iter().map(|m| m.id.clone()).collect();
    RunRecord {
        run_id: archive.manifest.run_id.clone(),
        fingerprint,
        projects: BTreeMap::from([(archive.manifest.project.clone(), keys)]),
    }
}

/// Analyze phase: variability across the runs (when there are at least
/// two), similarity and equivalence flags. Artifacts go to `out_dir`.
pub fn cmd_analyze(run_dirs: &[PathBuf], out_dir: &Path, strategy: Strategy) -> Result<AnalyzeOutput, PipelineError> {
    if run_dirs.is_empty() {
        return Err(PipelineError::Config("analyze needs at least one run directory".into()));
    }
    let archives = run_dirs.iter().map(|d| RunArchive::load(d)).collect::<Result<Vec<_>, _>>()?;
    let (variability, note) = if archives.len() >= 2 {
        let records: Vec<RunRecord> = archives.iter().map(run_record).collect();
        (Some(analysis::variability(&records)?), None)
    } else {
        (None, Some("variability skipped: it needs at least two runs".to_string()))
    };

    // a mutant id seen in several runs is analyzed once
    let mut seen = BTreeSet::new();
    let mut pairs: Vec<(&str, &Mutant)> = Vec::new();
    for a in &archives {
        for m in &a.mutants {
            if seen.insert(m.id.as_str()) {
                pairs.push((a.manifest.project.as_str(), m));
            }
        }
    }
    let similarity = analysis::similarity_stats(strategy, &pairs);
    let unique: Vec<Mutant> = pairs.iter().map(|(_, m)| (*m).clone()).collect();
    let flags = analysis::flag_equivalents(strategy, &unique);

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let variability_path = out_dir.join("variability.json");
    match &variability {
        Some(v) => write_json(&variability_path, v)?,
        None => {
            if let Some(n) = &note {
                log::info!("{n}");
            }
            if variability_path.exists() {
                fs::remove_file(&variability_path).map_err(io_err(&variability_path))?;
            }
        }
    }
    write_json(&out_dir.join("similarity.json"), &similarity)?;
    write_json(&out_dir.join("equivalence-flags.json"), &flags)?;
    Ok(AnalyzeOutput { variability, note, similarity, flags })
}
