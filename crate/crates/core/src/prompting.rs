//! Prompt templates and their instantiation per placeholder site.
//!
//! Templates are plain text with raw triple-brace holes: `{{{code}}}` takes
//! the source window with the site blanked out, `{{{orig}}}` the fragment
//! that was removed. Holes are substituted in a single pass, so text coming
//! from the target project is never re-interpreted as a hole.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::syntax::{render_with_placeholder, PlaceholderSite, SiteKind};

pub const CODE_HOLE: &str = "code";
pub const ORIG_HOLE: &str = "orig";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RenderError {
    #[error("template `{template}` has no `{{{{{{{hole}}}}}}}` hole")]
    MissingHole { template: String, hole: &'static str },
    #[error("template `{template}` uses unknown hole `{hole}`")]
    UnknownHole { template: String, hole: String },
    #[error("template `{template}` has an unterminated hole")]
    Unterminated { template: String },
    #[error("refusing to render `{template}` with an empty `{hole}` value")]
    EmptyValue { template: String, hole: &'static str },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown system prompt `{0}`")]
    UnknownSystemPrompt(String),
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, RenderError> {
        let t = Self { name: name.into(), body: body.into() };
        let holes = t.holes()?;
        for hole in [CODE_HOLE, ORIG_HOLE] {
            if !holes.iter().any(|h| h == hole) {
                return Err(RenderError::MissingHole { template: t.name.clone(), hole });
            }
        }
        if let Some(other) = holes.iter().find(|h| *h != CODE_HOLE && *h != ORIG_HOLE) {
            return Err(RenderError::UnknownHole { template: t.name.clone(), hole: other.clone() });
        }
        Ok(t)
    }

    /// Loads a template file; the file stem becomes the template name.
    pub fn from_file(path: &Path) -> Result<Self, RenderError> {
        let body = std::fs::read_to_string(path)
            .map_err(|e| RenderError::Io { path: path.display().to_string(), message: e.to_string() })?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom").to_string();
        Self::new(name, body)
    }

    fn holes(&self) -> Result<Vec<String>, RenderError> {
        let mut out = Vec::new();
        let mut rest = self.body.as_str();
        while let Some(i) = rest.find("{{{") {
            let after = &rest[i + 3..];
            let end = after.find("}}}").ok_or_else(|| RenderError::Unterminated { template: self.name.clone() })?;
            out.push(after[..end].trim().to_string());
            rest = &after[end + 3..];
        }
        Ok(out)
    }

    /// Substitutes both holes in one pass.
    pub fn render(&self, code: &str, orig: &str) -> Result<String, RenderError> {
        if code.trim().is_empty() {
            return Err(RenderError::EmptyValue { template: self.name.clone(), hole: CODE_HOLE });
        }
        if orig.trim().is_empty() {
            return Err(RenderError::EmptyValue { template: self.name.clone(), hole: ORIG_HOLE });
        }
        let mut out = String::with_capacity(self.body.len() + code.len() + orig.len());
        let mut rest = self.body.as_str();
        while let Some(i) = rest.find("{{{") {
            out.push_str(&rest[..i]);
            let after = &rest[i + 3..];
            let end = after.find("}}}").ok_or_else(|| RenderError::Unterminated { template: self.name.clone() })?;
            match after[..end].trim() {
                CODE_HOLE => out.push_str(code),
                ORIG_HOLE => out.push_str(orig),
                other => {
                    return Err(RenderError::UnknownHole { template: self.name.clone(), hole: other.to_string() })
                }
            }
            rest = &after[end + 3..];
        }
        out.push_str(rest);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemPrompt {
    pub name: String,
    pub text: String,
}

/// A rendered prompt, as archived under `prompts/`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: u32,
    pub site_id: String,
    pub file: String,
    pub kind: SiteKind,
    pub template_name: String,
    pub system_name: String,
    pub system_text: String,
    pub user_text: String,
    pub rendered_at: DateTime<Utc>,
}

/// Built-in templates and system prompts.
#[derive(Debug, Clone)]
pub struct Catalog {
    templates: Vec<PromptTemplate>,
    systems: Vec<SystemPrompt>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self::builtin()
    }
}

const BUILTIN_TEMPLATES: &[(&str, &str)] = &[
    ("full", include_str!("../templates/full.txt")),
    ("onemutation", include_str!("../templates/onemutation.txt")),
    ("noexplanation", include_str!("../templates/noexplanation.txt")),
    ("noinstructions", include_str!("../templates/noinstructions.txt")),
    ("basic", include_str!("../templates/basic.txt")),
];

const BUILTIN_SYSTEM_PROMPTS: &[(&str, &str)] = &[
    ("expert", include_str!("../templates/system-expert.txt")),
    ("generic", include_str!("../templates/system-generic.txt")),
];

impl Catalog {
    pub fn builtin() -> Self {
        let templates = BUILTIN_TEMPLATES
            .iter()
            .map(|(name, body)| PromptTemplate::new(*name, *body).expect("built-in template is well-formed"))
            .collect();
        let systems = BUILTIN_SYSTEM_PROMPTS
            .iter()
            .map(|(name, text)| SystemPrompt { name: name.to_string(), text: text.trim_end().to_string() })
            .collect();
        Self { templates, systems }
    }

    pub fn templates(&self) -> &[PromptTemplate] {
        &self.templates
    }

    pub fn system_prompts(&self) -> &[SystemPrompt] {
        &self.systems
    }

    pub fn template(&self, name: &str) -> Result<&PromptTemplate, RenderError> {
        self.templates.iter().find(|t| t.name == name).ok_or_else(|| RenderError::UnknownTemplate(name.to_string()))
    }

    pub fn system_prompt(&self, name: &str) -> Result<&SystemPrompt, RenderError> {
        self.systems.iter().find(|s| s.name == name).ok_or_else(|| RenderError::UnknownSystemPrompt(name.to_string()))
    }

    /// Adds or replaces a template, e.g. one loaded with
    /// [`PromptTemplate::from_file`].
    pub fn insert_template(&mut self, template: PromptTemplate) {
        self.templates.retain(|t| t.name != template.name);
        self.templates.push(template);
    }

    /// Every (template, system prompt) combination.
    pub fn pairs(&self) -> impl Iterator<Item = (&PromptTemplate, &SystemPrompt)> {
        self.templates.iter().flat_map(move |t| self.systems.iter().map(move |s| (t, s)))
    }
}

pub fn render_prompt(
    id: u32,
    site: &PlaceholderSite,
    template: &PromptTemplate,
    system: &SystemPrompt,
    window_lines: usize,
) -> Result<Prompt, RenderError> {
    let window = render_with_placeholder(site, window_lines);
    let code = window.strip_suffix('\n').map(|s| s.strip_suffix('\r').unwrap_or(s)).unwrap_or(&window);
    let user_text = template.render(code, &site.original)?;
    Ok(Prompt {
        id,
        site_id: site.id.clone(),
        file: site.file.path.clone(),
        kind: site.kind,
        template_name: template.name.clone(),
        system_name: system.name.clone(),
        system_text: system.text.clone(),
        user_text,
        rendered_at: Utc::now(),
    })
}
