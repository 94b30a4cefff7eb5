//! Source files, placeholder sites and fragment substitution.
//!
//! A *placeholder site* is a source location that the prompt generator
//! blanks out with `<PLACEHOLDER>`: conditions of `if`/`switch`/`while`/
//! `do-while`, the parts and whole headers of `for`, `for-in` and `for-of`
//! loops, and the callee, each argument and the full argument list of calls.
//! Sites are found by walking the tree produced by a [`LanguageProfile`].

mod lexer;
mod parser;
mod profile;
mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use lexer::{tokenize, Token, TokenKind};
pub use profile::{default_profile, profile, profile_for_extension, LanguageProfile, ScriptProfile};
pub use tree::{ByteRange, NodeKind, SyntaxNode, SyntaxTree};

/// Literal token substituted for a site in prompts.
pub const PLACEHOLDER: &str = "<PLACEHOLDER>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl ParseError {
    pub(crate) fn at(src: &str, offset: usize, message: impl Into<String>) -> Self {
        let (line, col) = line_col(src, offset);
        Self { offset, line, col, message: message.into() }
    }
}

fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let line_start = before.rfind('\n').map_or(0, |i| i + 1);
    (line, before[line_start..].chars().count() + 1)
}

#[derive(Debug, Error)]
pub enum SyntaxError {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },
    #[error("no language profile registered as `{0}`")]
    UnknownLanguage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}: not valid UTF-8")]
    NotUtf8(String),
}

/// A target-project source file. Line/column lookups are derived from
/// `text` alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
    pub language_id: String,
    line_starts: Vec<usize>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>, language_id: impl Into<String>) -> Self {
        let text = text.into();
        let line_starts = std::iter::once(0)
            .chain(text.match_indices('\n').map(|(i, _)| i + 1))
            .collect();
        Self { path: path.into(), text, language_id: language_id.into(), line_starts }
    }

    /// Reads `root/rel_path`, choosing the profile from the file extension.
    pub fn load(root: &Path, rel_path: &str) -> Result<Self, SyntaxError> {
        let full = root.join(rel_path);
        let bytes = std::fs::read(&full).map_err(|source| SyntaxError::Io { path: rel_path.to_string(), source })?;
        let text = String::from_utf8(bytes).map_err(|_| SyntaxError::NotUtf8(rel_path.to_string()))?;
        let ext = Path::new(rel_path).extension().and_then(|e| e.to_str()).unwrap_or("");
        let profile = profile_for_extension(ext).unwrap_or_else(default_profile);
        Ok(Self::new(rel_path, text, profile.id()))
    }

    pub fn store(&self, root: &Path) -> std::io::Result<()> {
        std::fs::write(root.join(&self.path), self.text.as_bytes())
    }

    pub fn profile(&self) -> Result<&'static dyn LanguageProfile, SyntaxError> {
        profile(&self.language_id).ok_or_else(|| SyntaxError::UnknownLanguage(self.language_id.clone()))
    }

    pub fn parse(&self) -> Result<SyntaxTree, SyntaxError> {
        self.profile()?
            .parse(&self.text)
            .map_err(|source| SyntaxError::Parse { path: self.path.clone(), source })
    }

    /// 1-based (line, column) of a byte offset; columns count characters.
    pub fn position(&self, offset: usize) -> (usize, usize) {
        let line_idx = self.line_starts.partition_point(|&s| s <= offset) - 1;
        let start = self.line_starts[line_idx];
        (line_idx + 1, self.text[start..offset].chars().count() + 1)
    }

    /// Inverse of [`position`](Self::position).
    pub fn offset(&self, line: usize, col: usize) -> Option<usize> {
        let start = *self.line_starts.get(line.checked_sub(1)?)?;
        let line_end = self.line_starts.get(line).copied().unwrap_or(self.text.len());
        let line_text = &self.text[start..line_end];
        let idx = col.checked_sub(1)?;
        if let Some((byte, _)) = line_text.char_indices().nth(idx) {
            return Some(start + byte);
        }
        (idx == line_text.chars().count()).then_some(line_end)
    }

    pub fn span(&self, range: ByteRange) -> SyntaxSpan {
        let (start_line, start_col) = self.position(range.start);
        let (end_line, end_col) = self.position(range.end);
        SyntaxSpan {
            start_offset: range.start,
            end_offset: range.end,
            start_line,
            start_col,
            end_line,
            end_col,
        }
    }
}

/// Byte range plus 1-based line/column positions of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SyntaxSpan {
    pub start_offset: usize,
    pub end_offset: usize,
    pub start_line: usize,
    pub start_col: usize,
    pub end_line: usize,
    pub end_col: usize,
}

impl SyntaxSpan {
    pub fn range(&self) -> ByteRange {
        ByteRange::new(self.start_offset, self.end_offset)
    }

    pub fn contains(&self, other: &SyntaxSpan) -> bool {
        self.range().contains(other.range())
    }
}

/// The placeholder positions, in enumeration (tie-break) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteKind {
    IfCondition,
    SwitchDiscriminant,
    WhileCondition,
    DoWhileCondition,
    ForInit,
    ForTest,
    ForUpdate,
    ForHeader,
    ForInLeft,
    ForInRight,
    ForInHeader,
    ForOfLeft,
    ForOfRight,
    ForOfHeader,
    CallCallee,
    CallArgument(usize),
    CallAllArguments,
}

impl SiteKind {
    /// Kinds whose fragment is not a single syntax node.
    pub fn needs_expansion(self) -> bool {
        matches!(self, Self::ForHeader | Self::ForInHeader | Self::ForOfHeader | Self::CallAllArguments)
    }
}

impl fmt::Display for SiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CallArgument(i) => write!(f, "CallArgument({i})"),
            other => fmt::Debug::fmt(other, f),
        }
    }
}

#[derive(Debug, Error)]
#[error("unknown site kind `{0}`")]
pub struct UnknownSiteKind(String);

impl FromStr for SiteKind {
    type Err = UnknownSiteKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        use SiteKind::*;
        Ok(match s {
            "IfCondition" => IfCondition,
            "SwitchDiscriminant" => SwitchDiscriminant,
            "WhileCondition" => WhileCondition,
            "DoWhileCondition" => DoWhileCondition,
            "ForInit" => ForInit,
            "ForTest" => ForTest,
            "ForUpdate" => ForUpdate,
            "ForHeader" => ForHeader,
            "ForInLeft" => ForInLeft,
            "ForInRight" => ForInRight,
            "ForInHeader" => ForInHeader,
            "ForOfLeft" => ForOfLeft,
            "ForOfRight" => ForOfRight,
            "ForOfHeader" => ForOfHeader,
            "CallCallee" => CallCallee,
            "CallAllArguments" => CallAllArguments,
            other => {
                let index = other
                    .strip_prefix("CallArgument(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| UnknownSiteKind(other.to_string()))?;
                CallArgument(index)
            }
        })
    }
}

impl Serialize for SiteKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SiteKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hex SHA-256 over NUL-separated parts.
pub(crate) fn stable_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for (i, p) in parts.iter().enumerate() {
        if i > 0 {
            h.update([0u8]);
        }
        h.update(p);
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct PlaceholderSite {
    pub id: String,
    pub file: Arc<SourceFile>,
    pub span: SyntaxSpan,
    pub kind: SiteKind,
    pub original: String,
    pub enclosing_span: SyntaxSpan,
}

impl PlaceholderSite {
    fn new(file: &Arc<SourceFile>, range: ByteRange, kind: SiteKind, enclosing: ByteRange) -> Self {
        let id = stable_hash(&[
            file.path.as_bytes(),
            range.start.to_string().as_bytes(),
            range.end.to_string().as_bytes(),
            kind.to_string().as_bytes(),
        ]);
        Self {
            id,
            file: Arc::clone(file),
            span: file.span(range),
            kind,
            original: range.slice(&file.text).to_string(),
            enclosing_span: file.span(enclosing),
        }
    }
}

/// A non-blank replacement text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CodeFragment(String);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("code fragment is empty")]
pub struct EmptyFragment;

impl CodeFragment {
    pub fn new(text: impl Into<String>) -> Result<Self, EmptyFragment> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmptyFragment);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CodeFragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// All placeholder sites of `file` in document order (start offset, then
/// kind order, then end offset).
pub fn enumerate_sites(file: &Arc<SourceFile>) -> Result<Vec<PlaceholderSite>, SyntaxError> {
    let tree = file.parse()?;
    Ok(sites_from_tree(file, &tree))
}

pub fn sites_from_tree(file: &Arc<SourceFile>, tree: &SyntaxTree) -> Vec<PlaceholderSite> {
    let mut found: Vec<(ByteRange, SiteKind, ByteRange)> = Vec::new();
    for node in &tree.nodes {
        let whole = node.range;
        match &node.kind {
            NodeKind::If { test } => found.push((*test, SiteKind::IfCondition, *test)),
            NodeKind::Switch { discriminant } => {
                found.push((*discriminant, SiteKind::SwitchDiscriminant, *discriminant))
            }
            NodeKind::While { test } => found.push((*test, SiteKind::WhileCondition, *test)),
            NodeKind::DoWhile { test } => found.push((*test, SiteKind::DoWhileCondition, *test)),
            NodeKind::For { init, test, update, header } => {
                for (part, kind) in [(init, SiteKind::ForInit), (test, SiteKind::ForTest), (update, SiteKind::ForUpdate)] {
                    if let Some(r) = part {
                        found.push((*r, kind, *r));
                    }
                }
                found.push((*header, SiteKind::ForHeader, whole));
            }
            NodeKind::ForIn { left, right, header } => {
                found.push((*left, SiteKind::ForInLeft, *left));
                found.push((*right, SiteKind::ForInRight, *right));
                found.push((*header, SiteKind::ForInHeader, whole));
            }
            NodeKind::ForOf { left, right, header } => {
                found.push((*left, SiteKind::ForOfLeft, *left));
                found.push((*right, SiteKind::ForOfRight, *right));
                found.push((*header, SiteKind::ForOfHeader, whole));
            }
            NodeKind::Call { callee, arguments } => {
                found.push((*callee, SiteKind::CallCallee, *callee));
                for (i, arg) in arguments.iter().enumerate() {
                    found.push((*arg, SiteKind::CallArgument(i), *arg));
                }
                if let (Some(first), Some(last)) = (arguments.first(), arguments.last()) {
                    found.push((ByteRange::new(first.start, last.end), SiteKind::CallAllArguments, whole));
                }
            }
            _ => {}
        }
    }
    found.sort_by_key(|(r, kind, _)| (r.start, *kind, r.end));
    found.dedup_by_key(|(r, kind, _)| (*r, *kind));
    found.into_iter().map(|(r, kind, enclosing)| PlaceholderSite::new(file, r, kind, enclosing)).collect()
}

fn splice(text: &str, range: ByteRange, replacement: &str) -> String {
    let mut out = String::with_capacity(text.len() - range.len() + replacement.len());
    out.push_str(&text[..range.start]);
    out.push_str(replacement);
    out.push_str(&text[range.end..]);
    out
}

/// File text with the site blanked out, cut to `window_lines` lines centered
/// on the placeholder's line.
pub fn render_with_placeholder(site: &PlaceholderSite, window_lines: usize) -> String {
    assert!(window_lines >= 1, "window_lines must be positive");
    let text = splice(&site.file.text, site.span.range(), PLACEHOLDER);
    let lines: Vec<&str> = text.split_inclusive('\n').collect();
    let target = site.file.text[..site.span.start_offset].matches('\n').count();
    let before = (window_lines - 1) / 2;
    let start = target.saturating_sub(before);
    let end = (start + window_lines).min(lines.len());
    let start = end.saturating_sub(window_lines).min(start);
    lines[start..end].concat()
}

/// File text with the site's span replaced by `frag`.
pub fn apply_fragment(site: &PlaceholderSite, frag: &CodeFragment) -> String {
    splice(&site.file.text, site.span.range(), frag.as_str())
}

/// Undoes [`apply_fragment`] on `mutated` by putting the original back.
pub fn revert_fragment(site: &PlaceholderSite, mutated: &str, frag: &CodeFragment) -> String {
    let start = site.span.start_offset;
    splice(mutated, ByteRange::new(start, start + frag.as_str().len()), &site.original)
}

/// Whether the file still parses with `frag` substituted at the site.
pub fn validate_in_context(site: &PlaceholderSite, frag: &CodeFragment) -> bool {
    let Ok(profile) = site.file.profile() else {
        return false;
    };
    profile.parse(&apply_fragment(site, frag)).is_ok()
}

/// Span a mutant at this site should replace: the enclosing loop statement or
/// call for header and argument-list sites, the site span otherwise.
pub fn expand_to_enclosing(site: &PlaceholderSite) -> SyntaxSpan {
    if site.kind.needs_expansion() {
        site.enclosing_span
    } else {
        site.span
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> Arc<SourceFile> {
        Arc::new(SourceFile::new("a.js", text, "script"))
    }

    fn kinds(text: &str) -> Vec<(SiteKind, String)> {
        enumerate_sites(&file(text)).unwrap().into_iter().map(|s| (s.kind, s.original)).collect()
    }

    #[test]
    fn classic_for_yields_four_sites() {
        let k = kinds("for (let i=0; i < x; i++){ }");
        assert_eq!(
            k,
            vec![
                (SiteKind::ForInit, "let i=0".into()),
                (SiteKind::ForHeader, "let i=0; i < x; i++".into()),
                (SiteKind::ForTest, "i < x".into()),
                (SiteKind::ForUpdate, "i++".into()),
            ]
        );
    }

    #[test]
    fn method_call_yields_four_sites() {
        let k = kinds("a.m(x,y)");
        assert_eq!(
            k,
            vec![
                (SiteKind::CallCallee, "a.m".into()),
                (SiteKind::CallArgument(0), "x".into()),
                (SiteKind::CallAllArguments, "x,y".into()),
                (SiteKind::CallArgument(1), "y".into()),
            ]
        );
    }

    #[test]
    fn for_in_and_for_of_yield_left_right_whole() {
        let k = kinds("for (o in obj) {}\nfor (const v of list) {}");
        let got: Vec<_> = k.iter().map(|(k, _)| *k).collect();
        assert_eq!(
            got,
            vec![
                SiteKind::ForInLeft,
                SiteKind::ForInHeader,
                SiteKind::ForInRight,
                SiteKind::ForOfLeft,
                SiteKind::ForOfHeader,
                SiteKind::ForOfRight
            ]
        );
        assert_eq!(k[1].1, "o in obj");
        assert_eq!(k[3].1, "const v");
    }

    #[test]
    fn conditions_yield_one_site_each() {
        let k = kinds("if (a) {}\nswitch (b) {}\nwhile (c) {}\ndo {} while (d)");
        assert_eq!(
            k,
            vec![
                (SiteKind::IfCondition, "a".into()),
                (SiteKind::SwitchDiscriminant, "b".into()),
                (SiteKind::WhileCondition, "c".into()),
                (SiteKind::DoWhileCondition, "d".into()),
            ]
        );
    }

    #[test]
    fn zero_argument_call_has_only_callee() {
        assert_eq!(kinds("f();"), vec![(SiteKind::CallCallee, "f".into())]);
    }

    #[test]
    fn nested_sites_are_all_enumerated() {
        let k = kinds("if (g(x)) {}");
        assert_eq!(
            k,
            vec![
                (SiteKind::IfCondition, "g(x)".into()),
                (SiteKind::CallCallee, "g".into()),
                (SiteKind::CallArgument(0), "x".into()),
                (SiteKind::CallAllArguments, "x".into()),
            ]
        );
    }

    #[test]
    fn no_matching_constructs_gives_empty_list() {
        assert!(kinds("const a = 1 + 2;\nlet b = a * 3;").is_empty());
    }

    #[test]
    fn unparsable_file_is_a_parse_error() {
        assert!(matches!(enumerate_sites(&file("if (")), Err(SyntaxError::Parse { .. })));
    }

    #[test]
    fn placeholder_replaces_if_condition() {
        let f = file("if (x === y){ f(); }");
        let site = enumerate_sites(&f).unwrap().remove(0);
        assert_eq!(render_with_placeholder(&site, 200), "if (<PLACEHOLDER>){ f(); }");
    }

    #[test]
    fn window_of_one_line() {
        let f = file("if (x) {}");
        let site = enumerate_sites(&f).unwrap().remove(0);
        assert_eq!(render_with_placeholder(&site, 1), "if (<PLACEHOLDER>) {}");
    }

    #[test]
    fn window_clamps_at_file_boundaries() {
        let mut text = String::from("if (x) {}\n");
        for i in 0..49 {
            text.push_str(&format!("let v{i} = {i};\n"));
        }
        let f = file(&text);
        let site = enumerate_sites(&f).unwrap().remove(0);
        let out = render_with_placeholder(&site, 200);
        assert_eq!(out.lines().count(), 50);
        assert_eq!(out.matches(PLACEHOLDER).count(), 1);
    }

    #[test]
    fn window_is_centered_on_placeholder_line() {
        let mut text = String::new();
        for i in 0..20 {
            text.push_str(&format!("let v{i} = {i};\n"));
        }
        text.push_str("if (x) {}\n");
        for i in 0..20 {
            text.push_str(&format!("let w{i} = {i};\n"));
        }
        let f = file(&text);
        let site = enumerate_sites(&f).unwrap().remove(0);
        let out = render_with_placeholder(&site, 5);
        assert_eq!(out, "let v18 = 18;\nlet v19 = 19;\nif (<PLACEHOLDER>) {}\nlet w0 = 0;\nlet w1 = 1;\n");
    }

    #[test]
    fn apply_and_revert_round_trip() {
        let f = file("if (x === y) { r = Math.abs(d); }");
        let sites = enumerate_sites(&f).unwrap();
        let cond = &sites[0];
        let frag = CodeFragment::new("x !== y").unwrap();
        let mutated = apply_fragment(cond, &frag);
        assert_eq!(mutated, "if (x !== y) { r = Math.abs(d); }");
        assert_eq!(revert_fragment(cond, &mutated, &frag), f.text);

        let callee = sites.iter().find(|s| s.kind == SiteKind::CallCallee).unwrap();
        let mutated = apply_fragment(callee, &CodeFragment::new("Math.round").unwrap());
        let prefix = callee.span.start_offset;
        assert_eq!(&mutated[..prefix], &f.text[..prefix]);
        assert_eq!(&mutated[prefix + "Math.round".len()..], &f.text[callee.span.end_offset..]);
    }

    #[test]
    fn empty_fragment_is_rejected() {
        assert_eq!(CodeFragment::new("  \n"), Err(EmptyFragment));
    }

    #[test]
    fn validation_reparses_the_whole_file() {
        let f = file("if (x === y) {}\nfor (let i=0; i<3; i++) {}");
        let sites = enumerate_sites(&f).unwrap();
        let cond = &sites[0];
        assert!(validate_in_context(cond, &CodeFragment::new("x !== y").unwrap()));
        assert!(!validate_in_context(cond, &CodeFragment::new("if (").unwrap()));
        let init = sites.iter().find(|s| s.kind == SiteKind::ForInit).unwrap();
        let frag = CodeFragment::new("let j=0").unwrap();
        // not an expression on its own, but fine inside the loop header
        assert!(ScriptProfile.parse_expression("let j=0").is_err());
        assert!(validate_in_context(init, &frag));
    }

    #[test]
    fn expansion_covers_single_nodes() {
        let src = "for (let i=0; i<x; i++){ a.m(x,y); }\nif (c) {}";
        let f = file(src);
        let tree = f.parse().unwrap();
        for site in enumerate_sites(&f).unwrap() {
            let expanded = expand_to_enclosing(&site);
            assert!(expanded.contains(&site.span));
            assert!(tree.node_with_range(expanded.range()).is_some(), "{:?} not a node", site.kind);
            match site.kind {
                SiteKind::ForHeader => assert_eq!(expanded.range().slice(src), "for (let i=0; i<x; i++){ a.m(x,y); }"),
                SiteKind::CallAllArguments => assert_eq!(expanded.range().slice(src), "a.m(x,y)"),
                _ => assert_eq!(expanded, site.span),
            }
        }
    }

    #[test]
    fn positions_round_trip_through_offsets() {
        let f = SourceFile::new("a.js", "ab\ncé\n\nd", "script");
        for offset in f.text.char_indices().map(|(i, _)| i).chain([f.text.len()]) {
            let (line, col) = f.position(offset);
            assert_eq!(f.offset(line, col), Some(offset), "offset {offset}");
        }
        assert_eq!(f.position(0), (1, 1));
        assert_eq!(f.position(3), (2, 1));
    }

    #[test]
    fn site_kind_string_form_round_trips() {
        for k in [SiteKind::IfCondition, SiteKind::CallArgument(3), SiteKind::ForOfHeader] {
            assert_eq!(k.to_string().parse::<SiteKind>().unwrap(), k);
        }
        assert!("Nope".parse::<SiteKind>().is_err());
    }

    #[test]
    fn site_ids_are_stable_and_distinct() {
        let a = enumerate_sites(&file("a.m(x,y)")).unwrap();
        let b = enumerate_sites(&file("a.m(x,y)")).unwrap();
        let ids: Vec<_> = a.iter().map(|s| &s.id).collect();
        assert_eq!(ids, b.iter().map(|s| &s.id).collect::<Vec<_>>());
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), ids.len());
    }
}
