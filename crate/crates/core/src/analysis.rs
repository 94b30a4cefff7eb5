//! Cross-run variability, edit-distance similarity and advisory flags for
//! likely-equivalent mutants.
//!
//! Nothing here feeds back into outcomes or scores.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::Mutant;
use crate::par::{self, Strategy};
use crate::syntax::{default_profile, tokenize, NodeKind, TokenKind};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("variability needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error("run {run_id} was generated with {found}, expected {expected}")]
    ConfigMismatch { run_id: String, expected: Box<ConfigFingerprint>, found: Box<ConfigFingerprint> },
}

/// Settings that must agree for runs to be comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFingerprint {
    pub model: String,
    pub temperature: f64,
    pub template: String,
}

impl std::fmt::Display for ConfigFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "model={} temperature={} template={}", self.model, self.temperature, self.template)
    }
}

/// Mutant ids of one run, grouped by project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub fingerprint: ConfigFingerprint,
    pub projects: BTreeMap<String, BTreeSet<String>>,
}

impl RunRecord {
    pub fn mutant_keys(&self) -> BTreeSet<&str> {
        self.projects.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectVariability {
    pub runs: usize,
    pub min_count: usize,
    pub max_count: usize,
    pub distinct_count: usize,
    pub common_count: usize,
    /// `100 * common / distinct`; `None` when no run produced a mutant.
    pub common_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariabilityReport {
    pub fingerprint: ConfigFingerprint,
    pub projects: BTreeMap<String, ProjectVariability>,
}

/// Set statistics over the runs' mutant ids, per project. A project is
/// compared across the runs that include it.
pub fn variability(runs: &[RunRecord]) -> Result<VariabilityReport, AnalysisError> {
    if runs.len() < 2 {
        return Err(AnalysisError::TooFewRuns(runs.len()));
    }
    let expected = &runs[0].fingerprint;
    if let Some(odd) = runs.iter().find(|r| r.fingerprint != *expected) {
        return Err(AnalysisError::ConfigMismatch {
            run_id: odd.run_id.clone(),
            expected: Box::new(expected.clone()),
            found: Box::new(odd.fingerprint.clone()),
        });
    }
    let names: BTreeSet<&String> = runs.iter().flat_map(|r| r.projects.keys()).collect();
    let projects = names
        .into_iter()
        .map(|name| {
            let sets: Vec<&BTreeSet<String>> = runs.iter().filter_map(|r| r.projects.get(name)).collect();
            (name.clone(), set_stats(&sets))
        })
        .collect();
    Ok(VariabilityReport { fingerprint: expected.clone(), projects })
}

fn set_stats(sets: &[&BTreeSet<String>]) -> ProjectVariability {
    let union: BTreeSet<&String> = sets.iter().flat_map(|s| s.iter()).collect();
    let common = union.iter().filter(|k| sets.iter().all(|s| s.contains(**k))).count();
    let distinct = union.len();
    ProjectVariability {
        runs: sets.len(),
        min_count: sets.iter().map(|s| s.len()).min().unwrap_or(0),
        max_count: sets.iter().map(|s| s.len()).max().unwrap_or(0),
        distinct_count: distinct,
        common_count: common,
        common_pct: (distinct > 0).then(|| 100.0 * common as f64 / distinct as f64),
    }
}

/// Edit distance over characters with unit insert, delete and substitute
/// costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub project: String,
    pub template: String,
    pub mutants: usize,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityStats {
    pub rows: Vec<SimilarityRow>,
}

/// Mean `levenshtein(original, replacement)` per (project, template).
/// Input pairs are (project, mutant); groups without mutants do not appear.
pub fn similarity_stats(strategy: Strategy, mutants: &[(&str, &Mutant)]) -> SimilarityStats {
    let distances = par::map(strategy, mutants, |(_, m)| levenshtein(&m.original, &m.replacement));
    let mut groups: BTreeMap<(&str, &str), (usize, usize)> = BTreeMap::new();
    for ((project, m), d) in mutants.iter().zip(distances) {
        let g = groups.entry((project, m.provenance.template.as_str())).or_default();
        g.0 += 1;
        g.1 += d;
    }
    SimilarityStats {
        rows: groups
            .into_iter()
            .map(|((project, template), (n, sum))| SimilarityRow {
                project: project.to_string(),
                template: template.to_string(),
                mutants: n,
                mean_distance: sum as f64 / n as f64,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EquivalencePattern {
    NullCheckRewrite,
    SubstringFamilySwap,
    RegexFlagAdded,
    NoopSliceCall,
    ExtraCallArguments,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceFlag {
    pub mutant_id: String,
    pub pattern: EquivalencePattern,
    pub rationale: String,
    /// Always `"pattern-only"`: the match ignores surrounding code.
    pub confidence: String,
}

struct Tok<'a> {
    kind: TokenKind,
    text: &'a str,
}

fn tokens(src: &str) -> Option<Vec<Tok<'_>>> {
    let toks = tokenize(src).ok()?;
    Some(
        toks.into_iter()
            .filter(|t| t.kind != TokenKind::Eof)
            .map(|t| Tok { kind: t.kind, text: t.text(src) })
            .collect(),
    )
}

fn texts<'a>(toks: &[Tok<'a>]) -> Vec<&'a str> {
    toks.iter().map(|t| t.text).collect()
}

/// A presence test on `operand`: `true` polarity means the expression is
/// truthy when the value is present.
struct NullCheck<'a> {
    operand: Vec<&'a str>,
    present: bool,
    explicit: bool,
}

fn null_check<'a>(toks: &[&'a str]) -> Option<NullCheck<'a>> {
    let is_nullish = |t: &str| t == "null" || t == "undefined";
    match toks {
        ["!", "!", rest @ ..] if !rest.is_empty() => Some(NullCheck { operand: rest.to_vec(), present: true, explicit: false }),
        ["!", rest @ ..] if !rest.is_empty() => Some(NullCheck { operand: rest.to_vec(), present: false, explicit: false }),
        ["typeof", rest @ .., op, lit] if matches!(*op, "==" | "===" | "!=" | "!==") && lit.trim_matches(['\'', '"']) == "undefined" && (lit.starts_with('\'') || lit.starts_with('"')) => {
            Some(NullCheck { operand: rest.to_vec(), present: op.starts_with('!'), explicit: true })
        }
        [rest @ .., op, lit] if matches!(*op, "==" | "===" | "!=" | "!==") && is_nullish(lit) && !rest.is_empty() => {
            Some(NullCheck { operand: rest.to_vec(), present: op.starts_with('!'), explicit: true })
        }
        [lit, op, rest @ ..] if matches!(*op, "==" | "===" | "!=" | "!==") && is_nullish(lit) && !rest.is_empty() => {
            Some(NullCheck { operand: rest.to_vec(), present: op.starts_with('!'), explicit: true })
        }
        _ => None,
    }
}

fn check_null_rewrite(orig: &[&str], repl: &[&str]) -> Option<String> {
    let a = null_check(orig);
    let b = null_check(repl);
    let (a, b) = match (a, b) {
        (Some(a), Some(b)) => (a, b),
        // a bare operand is a truthiness test
        (Some(a), None) => (a, NullCheck { operand: repl.to_vec(), present: true, explicit: false }),
        (None, Some(b)) => (NullCheck { operand: orig.to_vec(), present: true, explicit: false }, b),
        (None, None) => return None,
    };
    if a.operand != b.operand || !(a.explicit || b.explicit) || orig == repl {
        return None;
    }
    Some(if a.present == b.present {
        "null/undefined check rewritten with the same polarity; differs only for other falsy values".to_string()
    } else {
        "polarity-sensitive: the rewrite inverts the presence check, so it is equivalent only if the branch outcome does not matter".to_string()
    })
}

fn check_substring_swap(orig: &[&str], repl: &[&str]) -> Option<String> {
    const FAMILY: [&str; 3] = ["substring", "substr", "slice"];
    if orig.len() != repl.len() {
        return None;
    }
    let diffs: Vec<usize> = (0..orig.len()).filter(|&i| orig[i] != repl[i]).collect();
    let &[i] = diffs.as_slice() else { return None };
    (i > 0 && orig[i - 1] == "." && FAMILY.contains(&orig[i]) && FAMILY.contains(&repl[i]))
        .then(|| format!("`{}` swapped for `{}`; the two agree for non-negative in-range arguments", orig[i], repl[i]))
}

fn split_regex(lit: &str) -> Option<(&str, BTreeSet<char>)> {
    let close = lit.rfind('/')?;
    (close > 0).then(|| (&lit[..=close], lit[close + 1..].chars().collect()))
}

fn check_regex_flags(orig: &[Tok], repl: &[Tok]) -> Option<String> {
    if orig.len() != repl.len() {
        return None;
    }
    let mut found = None;
    for (a, b) in orig.iter().zip(repl) {
        if a.text == b.text {
            continue;
        }
        if a.kind != TokenKind::Regex || b.kind != TokenKind::Regex || found.is_some() {
            return None;
        }
        let (body_a, flags_a) = split_regex(a.text)?;
        let (body_b, flags_b) = split_regex(b.text)?;
        if body_a != body_b || !flags_a.is_subset(&flags_b) {
            return None;
        }
        let added: String = flags_b.difference(&flags_a).collect();
        found = Some(format!("regex modifier(s) `{added}` added to {}; often irrelevant for a single match", a.text));
    }
    found
}

fn check_noop_slice(orig: &[&str], repl: &[&str]) -> Option<String> {
    const SLICE: [&str; 4] = [".", "slice", "(", ")"];
    if repl.len() != orig.len() + SLICE.len() {
        return None;
    }
    (0..=orig.len())
        .find(|&i| repl[i..i + 4] == SLICE && repl[..i] == orig[..i] && repl[i + 4..] == orig[i..])
        .map(|_| "inserted `.slice()` copies the array without changing its contents".to_string())
}

fn call_shape(src: &str) -> Option<(&str, usize)> {
    let tree = default_profile().parse_expression(src).ok()?;
    let root = tree.nodes.last()?;
    match &root.kind {
        NodeKind::Call { callee, arguments } => Some((callee.slice(src), arguments.len())),
        _ => None,
    }
}

fn check_extra_arguments(orig: &str, repl: &str) -> Option<String> {
    let (callee_a, n_a) = call_shape(orig)?;
    let (callee_b, n_b) = call_shape(repl)?;
    (callee_a == callee_b && n_b > n_a)
        .then(|| format!("`{callee_a}` called with {n_b} arguments instead of {n_a}; extra arguments are ignored if undeclared"))
}

/// Pattern flags for one mutant, in pattern order.
pub fn flag_mutant(m: &Mutant) -> Vec<EquivalenceFlag> {
    let (Some(orig), Some(repl)) = (tokens(&m.original), tokens(&m.replacement)) else {
        return Vec::new();
    };
    let (o, r) = (texts(&orig), texts(&repl));
    let checks = [
        (EquivalencePattern::NullCheckRewrite, check_null_rewrite(&o, &r)),
        (EquivalencePattern::SubstringFamilySwap, check_substring_swap(&o, &r)),
        (EquivalencePattern::RegexFlagAdded, check_regex_flags(&orig, &repl)),
        (EquivalencePattern::NoopSliceCall, check_noop_slice(&o, &r)),
        (EquivalencePattern::ExtraCallArguments, check_extra_arguments(&m.original, &m.replacement)),
    ];
    checks
        .into_iter()
        .filter_map(|(pattern, rationale)| {
            rationale.map(|rationale| EquivalenceFlag {
                mutant_id: m.id.clone(),
                pattern,
                rationale,
                confidence: "pattern-only".into(),
            })
        })
        .collect()
}

pub fn flag_equivalents(strategy: Strategy, mutants: &[Mutant]) -> Vec<EquivalenceFlag> {
    par::map(strategy, mutants, flag_mutant).into_iter().flatten().collect()
}
