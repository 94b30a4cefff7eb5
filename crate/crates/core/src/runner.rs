//! Running the target project's test suite against each mutant.
//!
//! Mutants never touch the project directory: every worker owns a private
//! copy of the project, applies one mutant at a time to it, runs the test
//! command, and restores the mutated file before taking the next mutant.
//! A mutant is *killed* when the command exits nonzero, *survived* when it
//! exits zero, *timeout* when it runs past the deadline (the whole process
//! group is then killed), and *errored* when it could not be applied or the
//! command could not be started.

use std::fs;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::extraction::Mutant;
use crate::par;
use crate::syntax::SourceFile;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("test command is empty")]
    EmptyCommand,
    #[error("baseline test run failed (exit code {exit_code:?}); mutants cannot be classified")]
    BaselineFailed { exit_code: Option<i32> },
    #[error("baseline test run did not finish within {0} ms")]
    BaselineTimeout(u64),
    #[error("workspace error: {0}")]
    Workspace(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan {
    pub project_root: PathBuf,
    /// Program and arguments, run with the workspace as working directory.
    pub command: Vec<String>,
    pub timeout_factor: f64,
    pub timeout_slack_ms: u64,
    pub workers: usize,
}

impl TestPlan {
    pub fn new(project_root: impl Into<PathBuf>, command: Vec<String>) -> Self {
        Self { project_root: project_root.into(), command, timeout_factor: 1.5, timeout_slack_ms: 5000, workers: 1 }
    }

    /// Per-mutant deadline derived from the baseline duration.
    pub fn timeout_ms(&self, baseline_ms: u64) -> u64 {
        (self.timeout_factor * baseline_ms as f64).ceil() as u64 + self.timeout_slack_ms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MutantOutcome {
    Killed,
    Survived,
    Timeout,
    Errored,
}

/// One entry of `outcomes.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub mutant_id: String,
    pub outcome: MutantOutcome,
    pub duration_ms: u64,
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub duration_ms: u64,
}

/// Outcome counts for a run. `mutants = killed + survived + timeout + errored`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mutants: u64,
    pub killed: u64,
    pub survived: u64,
    pub timeout: u64,
    pub errored: u64,
    /// Percentage, `None` when no mutant was classified.
    pub score: Option<f64>,
}

/// `100 * (killed + timeout) / (killed + survived + timeout)`.
pub fn mutation_score(killed: u64, survived: u64, timeout: u64) -> Option<f64> {
    let classified = killed + survived + timeout;
    (classified > 0).then(|| 100.0 * (killed + timeout) as f64 / classified as f64)
}

pub fn format_score(score: Option<f64>) -> String {
    score.map_or_else(|| "-".to_string(), |s| format!("{s:.2}"))
}

pub fn summarize(outcomes: &[OutcomeRecord]) -> RunSummary {
    let mut s = RunSummary::default();
    for o in outcomes {
        s.mutants += 1;
        match o.outcome {
            MutantOutcome::Killed => s.killed += 1,
            MutantOutcome::Survived => s.survived += 1,
            MutantOutcome::Timeout => s.timeout += 1,
            MutantOutcome::Errored => s.errored += 1,
        }
    }
    s.score = mutation_score(s.killed, s.survived, s.timeout);
    s
}

/// Recursively copies `from` into `to`, keeping symlinks as links.
pub fn copy_tree(from: &Path, to: &Path) -> io::Result<()> {
    for entry in WalkDir::new(from) {
        let entry = entry.map_err(io::Error::other)?;
        let rel = entry.path().strip_prefix(from).map_err(io::Error::other)?;
        let dest = to.join(rel);
        let ft = entry.file_type();
        if ft.is_dir() {
            fs::create_dir_all(&dest)?;
        } else if ft.is_symlink() {
            std::os::unix::fs::symlink(fs::read_link(entry.path())?, &dest)?;
        } else {
            fs::copy(entry.path(), &dest)?;
        }
    }
    Ok(())
}

/// A private copy of the project.
pub struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    pub fn create(project_root: &Path) -> io::Result<Self> {
        let dir = tempfile::Builder::new().prefix("mutaprompt-ws-").tempdir()?;
        copy_tree(project_root, dir.path())?;
        Ok(Self { dir })
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    /// Writes the mutant into the workspace and returns the file's original
    /// text for [`restore`](Self::restore). Fails if the recorded original
    /// text is not at the recorded range.
    pub fn apply(&self, mutant: &Mutant) -> Result<String, String> {
        let path = self.path().join(&mutant.file);
        let text = fs::read_to_string(&path).map_err(|e| format!("{}: {e}", mutant.file))?;
        let mutated = apply_to_text(&text, mutant)?;
        fs::write(&path, mutated).map_err(|e| format!("{}: {e}", mutant.file))?;
        Ok(text)
    }

    pub fn restore(&self, mutant: &Mutant, original_text: &str) -> io::Result<()> {
        fs::write(self.path().join(&mutant.file), original_text)
    }
}

/// `text` with the mutant's range replaced by its replacement.
pub fn apply_to_text(text: &str, mutant: &Mutant) -> Result<String, String> {
    let file = SourceFile::new(mutant.file.as_str(), text, "");
    let start = file.offset(mutant.range.start.line, mutant.range.start.col);
    let end = file.offset(mutant.range.end.line, mutant.range.end.col);
    let (Some(start), Some(end)) = (start, end) else {
        return Err(format!("{}: range is outside the file", mutant.file));
    };
    if start > end || text.get(start..end) != Some(mutant.original.as_str()) {
        return Err(format!("{}: original text not found at the recorded range", mutant.file));
    }
    Ok(format!("{}{}{}", &text[..start], mutant.replacement, &text[end..]))
}

/// Undoes [`apply_to_text`].
pub fn revert_text(mutated: &str, mutant: &Mutant) -> Result<String, String> {
    let file = SourceFile::new(mutant.file.as_str(), mutated, "");
    let start = file
        .offset(mutant.range.start.line, mutant.range.start.col)
        .ok_or_else(|| format!("{}: range is outside the file", mutant.file))?;
    let end = start + mutant.replacement.len();
    if mutated.get(start..end) != Some(mutant.replacement.as_str()) {
        return Err(format!("{}: replacement not found at the recorded range", mutant.file));
    }
    Ok(format!("{}{}{}", &mutated[..start], mutant.original, &mutated[end..]))
}

#[derive(Debug)]
enum Finished {
    Exited(ExitStatus),
    TimedOut,
}

/// Runs `command` in `cwd` in its own process group with output discarded.
/// On timeout the whole group is killed.
fn run_command(command: &[String], cwd: &Path, timeout: Duration) -> io::Result<(Finished, Duration)> {
    let (program, args) = command.split_first().ok_or_else(|| io::Error::other("empty command"))?;
    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .process_group(0)
        .spawn()?;
    let pgid = child.id() as libc::pid_t;
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok((Finished::Exited(status), started.elapsed()));
        }
        if started.elapsed() >= timeout {
            // SAFETY: pgid is the group created for this child
            unsafe {
                libc::killpg(pgid, libc::SIGKILL);
            }
            let _ = child.wait();
            return Ok((Finished::TimedOut, started.elapsed()));
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

/// Runs the unmodified suite once in a fresh workspace. It must pass.
pub fn baseline(plan: &TestPlan) -> Result<Baseline, RunError> {
    if plan.command.is_empty() {
        return Err(RunError::EmptyCommand);
    }
    let ws = Workspace::create(&plan.project_root)?;
    // generous bound so a hanging suite cannot block forever
    let limit = Duration::from_secs(3600);
    match run_command(&plan.command, ws.path(), limit)? {
        (Finished::Exited(status), elapsed) if status.success() => Ok(Baseline { duration_ms: elapsed.as_millis() as u64 }),
        (Finished::Exited(status), _) => Err(RunError::BaselineFailed { exit_code: status.code() }),
        (Finished::TimedOut, _) => Err(RunError::BaselineTimeout(limit.as_millis() as u64)),
    }
}

/// Applies `mutant` in `ws`, runs the suite, and restores the file.
pub fn execute_mutant(ws: &Workspace, command: &[String], mutant: &Mutant, timeout_ms: u64) -> OutcomeRecord {
    let errored = |error: String| OutcomeRecord {
        mutant_id: mutant.id.clone(),
        outcome: MutantOutcome::Errored,
        duration_ms: 0,
        exit_code: None,
        error: Some(error),
    };
    let original = match ws.apply(mutant) {
        Ok(t) => t,
        Err(e) => return errored(e),
    };
    let result = run_command(command, ws.path(), Duration::from_millis(timeout_ms));
    if let Err(e) = ws.restore(mutant, &original) {
        log::error!("failed to restore {} in {}: {e}", mutant.file, ws.path().display());
    }
    let (finished, elapsed) = match result {
        Ok(r) => r,
        Err(e) => return errored(format!("could not run test command: {e}")),
    };
    let duration_ms = elapsed.as_millis() as u64;
    let (outcome, exit_code) = match finished {
        Finished::TimedOut => (MutantOutcome::Timeout, None),
        Finished::Exited(status) => {
            let outcome = if status.success() { MutantOutcome::Survived } else { MutantOutcome::Killed };
            (outcome, status.code())
        }
    };
    OutcomeRecord { mutant_id: mutant.id.clone(), outcome, duration_ms, exit_code, error: None }
}

/// Executes every mutant on `plan.workers` private workspaces. Outcomes are
/// returned in mutant order.
pub fn run_mutants(plan: &TestPlan, mutants: &[Mutant], baseline: &Baseline) -> Result<Vec<OutcomeRecord>, RunError> {
    if plan.command.is_empty() {
        return Err(RunError::EmptyCommand);
    }
    let workers = plan.workers.max(1).min(mutants.len().max(1));
    let workspaces = (0..workers)
        .map(|_| Workspace::create(&plan.project_root).map(Mutex::new))
        .collect::<io::Result<Vec<_>>>()?;
    let timeout_ms = plan.timeout_ms(baseline.duration_ms);
    log::info!("running {} mutants on {workers} worker(s), timeout {timeout_ms} ms", mutants.len());
    Ok(par::map_with_workers(workers, mutants, |w, m| {
        let ws = workspaces[w % workers].lock().unwrap_or_else(|e| e.into_inner());
        let record = execute_mutant(&ws, &plan.command, m, timeout_ms);
        log::debug!("{} {:?}", m.id, record.outcome);
        record
    }))
}
