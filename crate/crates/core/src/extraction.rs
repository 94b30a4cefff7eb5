//! From raw completions to filtered mutants.
//!
//! Every fenced block of a completion is a candidate. Candidates are checked
//! in the order identical → duplicate → invalid, and each gets exactly one
//! verdict; the per-file [`ExtractionLedger`] keeps
//! `mutants = candidates - invalid - identical - duplicate`.

use std::collections::{BTreeMap, HashSet};
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::par::{self, Strategy};
use crate::syntax::{
    expand_to_enclosing, stable_hash, validate_in_context, ByteRange, CodeFragment, PlaceholderSite, SiteKind, SyntaxSpan,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateMutant {
    pub site_id: String,
    pub prompt_id: u32,
    /// 1-based position of the block within the completion.
    pub option_index: u32,
    pub replacement: String,
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterVerdict {
    Accepted,
    Invalid,
    Identical,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRange {
    pub start: Position,
    pub end: Position,
}

impl From<&SyntaxSpan> for LineRange {
    fn from(s: &SyntaxSpan) -> Self {
        Self {
            start: Position { line: s.start_line, col: s.start_col },
            end: Position { line: s.end_line, col: s.end_col },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub prompt_id: u32,
    pub option_index: u32,
    pub template: String,
    pub model: String,
    pub temperature: f64,
}

/// One entry of `mutants.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mutant {
    pub id: String,
    pub file: String,
    pub range: LineRange,
    pub original: String,
    pub replacement: String,
    pub kind: SiteKind,
    pub provenance: Provenance,
}

/// Settings stamped into each mutant's provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationContext {
    pub template: String,
    pub model: String,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionLedger {
    pub candidates: u64,
    pub invalid: u64,
    pub identical: u64,
    pub duplicate: u64,
    pub mutants: u64,
}

impl ExtractionLedger {
    pub fn record(&mut self, verdict: FilterVerdict) {
        self.candidates += 1;
        match verdict {
            FilterVerdict::Accepted => self.mutants += 1,
            FilterVerdict::Invalid => self.invalid += 1,
            FilterVerdict::Identical => self.identical += 1,
            FilterVerdict::Duplicate => self.duplicate += 1,
        }
    }

    /// `mutants = candidates - invalid - identical - duplicate`
    pub fn is_conserved(&self) -> bool {
        self.invalid + self.identical + self.duplicate <= self.candidates
            && self.candidates - self.invalid - self.identical - self.duplicate == self.mutants
    }
}

impl Add for ExtractionLedger {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            candidates: self.candidates + o.candidates,
            invalid: self.invalid + o.invalid,
            identical: self.identical + o.identical,
            duplicate: self.duplicate + o.duplicate,
            mutants: self.mutants + o.mutants,
        }
    }
}

pub fn ledger_totals(per_file: &[ExtractionLedger]) -> ExtractionLedger {
    per_file.iter().copied().fold(ExtractionLedger::default(), Add::add)
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

/// Contents of every closed fenced block in `completion`, with the text
/// between a block and the next fence as its explanation.
pub fn fenced_blocks(completion: &str) -> Vec<(String, Option<String>)> {
    let lines: Vec<&str> = completion.lines().collect();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if !is_fence(lines[i]) {
            i += 1;
            continue;
        }
        let Some(close) = (i + 1..lines.len()).find(|&j| is_fence(lines[j])) else {
            // unterminated block, e.g. a completion cut off by max_tokens
            break;
        };
        let body = lines[i + 1..close].join("\n");
        let next_open = (close + 1..lines.len()).find(|&j| is_fence(lines[j])).unwrap_or(lines.len());
        let explanation = lines[close + 1..next_open].join("\n").trim().to_string();
        blocks.push((body.trim().to_string(), (!explanation.is_empty()).then_some(explanation)));
        i = close + 1;
    }
    blocks
}

pub fn extract_candidates(completion: &str, site: &PlaceholderSite, prompt_id: u32) -> Vec<CandidateMutant> {
    fenced_blocks(completion)
        .into_iter()
        .enumerate()
        .map(|(i, (replacement, explanation))| CandidateMutant {
            site_id: site.id.clone(),
            prompt_id,
            option_index: i as u32 + 1,
            replacement,
            explanation,
        })
        .collect()
}

/// Expanded span and full replacement text a candidate turns into.
fn expanded_replacement(c: &CandidateMutant, site: &PlaceholderSite) -> (SyntaxSpan, String) {
    let expanded = expand_to_enclosing(site);
    if expanded == site.span {
        return (expanded, c.replacement.clone());
    }
    let enclosing = expanded.range().slice(&site.file.text);
    let lo = site.span.start_offset - expanded.start_offset;
    let hi = site.span.end_offset - expanded.start_offset;
    (expanded, format!("{}{}{}", &enclosing[..lo], c.replacement, &enclosing[hi..]))
}

pub fn mutant_id(file: &str, range: ByteRange, replacement: &str) -> String {
    stable_hash(&[
        file.as_bytes(),
        range.start.to_string().as_bytes(),
        range.end.to_string().as_bytes(),
        replacement.as_bytes(),
    ])
}

/// Key under which duplicates are detected and runs are compared.
pub fn mutant_key(c: &CandidateMutant, site: &PlaceholderSite) -> String {
    let (span, replacement) = expanded_replacement(c, site);
    mutant_id(&site.file.path, span.range(), &replacement)
}

pub fn is_valid(c: &CandidateMutant, site: &PlaceholderSite) -> bool {
    CodeFragment::new(c.replacement.as_str()).is_ok_and(|f| validate_in_context(site, &f))
}

fn classify(
    c: &CandidateMutant,
    site: &PlaceholderSite,
    seen: &mut HashSet<String>,
    valid: impl FnOnce() -> bool,
) -> FilterVerdict {
    if c.replacement.trim() == site.original.trim() {
        return FilterVerdict::Identical;
    }
    let key = mutant_key(c, site);
    if seen.contains(&key) {
        return FilterVerdict::Duplicate;
    }
    if !valid() {
        return FilterVerdict::Invalid;
    }
    seen.insert(key);
    FilterVerdict::Accepted
}

/// Verdict for one candidate; accepted keys are added to `seen`.
pub fn filter_candidate(c: &CandidateMutant, site: &PlaceholderSite, seen: &mut HashSet<String>) -> FilterVerdict {
    classify(c, site, seen, || is_valid(c, site))
}

pub fn build_mutant(c: &CandidateMutant, site: &PlaceholderSite, ctx: &GenerationContext) -> Mutant {
    let (span, replacement) = expanded_replacement(c, site);
    Mutant {
        id: mutant_id(&site.file.path, span.range(), &replacement),
        file: site.file.path.clone(),
        range: LineRange::from(&span),
        original: span.range().slice(&site.file.text).to_string(),
        replacement,
        kind: site.kind,
        provenance: Provenance {
            prompt_id: c.prompt_id,
            option_index: c.option_index,
            template: ctx.template.clone(),
            model: ctx.model.clone(),
            temperature: ctx.temperature,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: CandidateMutant,
    pub verdict: FilterVerdict,
    pub mutant_id: Option<String>,
}

/// Run-wide filtering state: the accepted-key registry, per-file ledgers and
/// the accepted mutants in completion order.
#[derive(Debug, Default)]
pub struct MutantRegistry {
    seen: HashSet<String>,
    ledgers: BTreeMap<String, ExtractionLedger>,
    mutants: Vec<Mutant>,
}

impl MutantRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Filters the candidates of one completion. Syntax validation, the
    /// expensive part, runs up front under `strategy`; verdicts are then
    /// assigned serially so duplicate detection follows completion order.
    pub fn ingest(
        &mut self,
        site: &PlaceholderSite,
        candidates: Vec<CandidateMutant>,
        ctx: &GenerationContext,
        strategy: Strategy,
    ) -> Vec<CandidateRecord> {
        let validity = par::map(strategy, &candidates, |c| is_valid(c, site));
        let ledger = self.ledgers.entry(site.file.path.clone()).or_default();
        let mut out = Vec::with_capacity(candidates.len());
        for (c, valid) in candidates.into_iter().zip(validity) {
            let verdict = classify(&c, site, &mut self.seen, || valid);
            ledger.record(verdict);
            let mutant_id = (verdict == FilterVerdict::Accepted).then(|| {
                let m = build_mutant(&c, site, ctx);
                let id = m.id.clone();
                self.mutants.push(m);
                id
            });
            out.push(CandidateRecord { candidate: c, verdict, mutant_id });
        }
        out
    }

    /// Makes sure `file` has a ledger row even if it produced no candidates.
    pub fn touch(&mut self, file: &str) {
        self.ledgers.entry(file.to_string()).or_default();
    }

    pub fn ledgers(&self) -> &BTreeMap<String, ExtractionLedger> {
        &self.ledgers
    }

    pub fn mutants(&self) -> &[Mutant] {
        &self.mutants
    }

    pub fn into_parts(self) -> (BTreeMap<String, ExtractionLedger>, Vec<Mutant>) {
        (self.ledgers, self.mutants)
    }
}
