use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mutaprompt::llm::HttpConfig;
use mutaprompt::pipeline::{cmd_analyze, cmd_generate, cmd_run, Backend, GenerateConfig, RunConfig};
use mutaprompt::reporting::{render_summary, SummaryFormat};
use mutaprompt::runner::format_score;

/// Exit status when the mutation score is below `--fail-under`.
const EXIT_BELOW_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "mutaprompt", version, about = "Mutation testing with mutants proposed by a language model")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prompt the model for every placeholder site and archive the mutants.
    Generate(GenerateArgs),
    /// Execute archived mutants against the project's test suite.
    Run(RunArgs),
    /// Compare archived runs: variability, similarity, equivalence flags.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

impl From<Format> for SummaryFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Text => SummaryFormat::Text,
            Format::Csv => SummaryFormat::Csv,
            Format::Json => SummaryFormat::Json,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Root of the project under test.
    #[arg(long, default_value = ".")]
    project: PathBuf,
    /// Source directories, relative to the project root.
    #[arg(long = "src", default_value = "src")]
    src_dirs: Vec<String>,
    /// Run directory to write.
    #[arg(long, default_value = "mutaprompt-run")]
    out: PathBuf,
    #[arg(long, default_value = "codellama-34b-instruct")]
    model: String,
    #[arg(long, default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value_t = 250)]
    max_tokens: u32,
    #[arg(long, default_value_t = 2000)]
    max_nr_prompts: usize,
    /// Template name (full, onemutation, noexplanation, noinstructions,
    /// basic) or path to a template file.
    #[arg(long, default_value = "full")]
    template: String,
    /// System prompt name (expert, generic).
    #[arg(long, default_value = "expert")]
    system_prompt: String,
    /// Lines of context around each placeholder.
    #[arg(long, default_value_t = 200)]
    window_lines: usize,
    /// Minimum milliseconds between the starts of consecutive requests.
    #[arg(long, default_value_t = 0)]
    rate_limit: u64,
    /// Tries per prompt when the endpoint answers 429.
    #[arg(long, default_value_t = 3)]
    nr_attempts: u32,
    /// Serve completions from a fixture file instead of the network.
    #[arg(long, conflicts_with = "endpoint_url")]
    mock_fixtures: Option<PathBuf>,
    /// Chat-completions endpoint.
    #[arg(long, env = "MUTAPROMPT_ENDPOINT_URL")]
    endpoint_url: Option<String>,
    /// Header that carries the API key.
    #[arg(long, default_value = "Authorization")]
    auth_header: String,
    #[arg(long, env = "MUTAPROMPT_API_KEY", hide_env_values = true)]
    api_key: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = ".")]
    project: PathBuf,
    /// Run directory holding mutants.json; outcomes are written here too.
    #[arg(long, default_value = "mutaprompt-run")]
    out: PathBuf,
    /// Execute this precomputed mutants.json instead of the run directory's.
    #[arg(long)]
    mutants: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 1.5)]
    timeout_factor: f64,
    #[arg(long, default_value_t = 5000)]
    timeout_slack_ms: u64,
    /// Exit with status 3 when the mutation score is below this percentage.
    #[arg(long)]
    fail_under: Option<f64>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Test command, e.g. `-- npm test`.
    #[arg(last = true, required = true)]
    test_command: Vec<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Run directories to compare.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, default_value = "mutaprompt-analysis")]
    out: PathBuf,
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let backend = match (a.mock_fixtures, a.endpoint_url) {
        (Some(path), _) => Backend::Mock(path),
        (None, Some(url)) => {
            let mut http = HttpConfig::new(url);
            http.auth_header = a.auth_header;
            http.api_key = a.api_key;
            Backend::Http(http)
        }
        (None, None) => bail!("either --mock-fixtures or --endpoint-url is required"),
    };
    let mut cfg = GenerateConfig::new(a.project, a.out, backend);
    cfg.src_dirs = a.src_dirs;
    cfg.model = a.model;
    cfg.temperature = a.temperature;
    cfg.max_tokens = a.max_tokens;
    cfg.max_nr_prompts = a.max_nr_prompts;
    cfg.template = a.template;
    cfg.system_prompt = a.system_prompt;
    cfg.window_lines = a.window_lines;
    cfg.rate_limit_ms = a.rate_limit;
    cfg.nr_attempts = a.nr_attempts;
    let archive = cmd_generate(&cfg).context("generate failed")?;
    let g = archive.manifest.generation.as_ref().expect("generate records its phase");
    let ledger = g.ledger();
    println!(
        "{} prompts, {} candidates ({} invalid, {} identical, {} duplicate), {} mutants",
        g.prompts, ledger.candidates, ledger.invalid, ledger.identical, ledger.duplicate, ledger.mutants
    );
    println!(
        "tokens: prompt {}, completion {}, total {}{}",
        g.tokens.prompt_tokens,
        g.tokens.completion_tokens,
        g.tokens.total_tokens,
        if g.tokens_estimated { " (estimated)" } else { "" }
    );
    println!("archive: {}", archive.dir.display());
    Ok(ExitCode::SUCCESS)
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::new(a.out, a.project, a.test_command);
    cfg.workers = a.workers;
    cfg.timeout_factor = a.timeout_factor;
    cfg.timeout_slack_ms = a.timeout_slack_ms;
    cfg.mutants = a.mutants;
    let archive = cmd_run(&cfg).context("run failed")?;
    let summary = archive.summary();
    print!("{}", render_summary(&summary, a.format.into())?);
    let score = summary.rows.first().and_then(|r| r.mutation_score);
    if let Some(threshold) = a.fail_under {
        if score.is_none_or(|s| s < threshold) {
            eprintln!("mutation score {} is below {threshold:.2}", format_score(score));
            return Ok(ExitCode::from(EXIT_BELOW_THRESHOLD));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    let out = cmd_analyze(&a.runs, &a.out, Default::default()).context("analyze failed")?;
    if let Some(note) = &out.note {
        println!("{note}");
    }
    if let Some(v) = &out.variability {
        for (project, p) in &v.projects {
            println!(
                "{project}: min {} max {} distinct {} common {} ({})",
                p.min_count,
                p.max_count,
                p.distinct_count,
                p.common_count,
                format_score(p.common_pct)
            );
        }
    }
    for row in &out.similarity.rows {
        println!("{} [{}]: mean edit distance {:.2} over {} mutants", row.project, row.template, row.mean_distance, row.mutants);
    }
    println!("{} equivalence flags; artifacts in {}", out.flags.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Run(a) => run(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
