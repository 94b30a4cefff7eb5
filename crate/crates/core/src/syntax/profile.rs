use super::parser;
use super::tree::SyntaxTree;
use super::ParseError;

/// A grammar backend for one target language.
pub trait LanguageProfile: Send + Sync {
    /// Identifier stored in [`SourceFile::language_id`](super::SourceFile).
    fn id(&self) -> &'static str;

    /// File extensions (without the dot) this profile claims.
    fn extensions(&self) -> &'static [&'static str];

    /// Parses a complete source file.
    fn parse(&self, text: &str) -> Result<SyntaxTree, ParseError>;

    /// Parses a standalone expression.
    fn parse_expression(&self, text: &str) -> Result<SyntaxTree, ParseError>;
}

/// ECMAScript-flavoured scripting language: the construct set covered by
/// placeholder enumeration (conditions, loop headers, calls) plus enough of
/// the surrounding grammar to parse ordinary CommonJS sources.
#[derive(Debug, Default, Clone, Copy)]
pub struct ScriptProfile;

impl LanguageProfile for ScriptProfile {
    fn id(&self) -> &'static str {
        "script"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["js", "cjs", "mjs"]
    }

    fn parse(&self, text: &str) -> Result<SyntaxTree, ParseError> {
        parser::parse_program(text)
    }

    fn parse_expression(&self, text: &str) -> Result<SyntaxTree, ParseError> {
        parser::parse_expression(text)
    }
}

static SCRIPT: ScriptProfile = ScriptProfile;

static PROFILES: &[&dyn LanguageProfile] = &[&SCRIPT];

/// Looks up a registered profile by id.
pub fn profile(id: &str) -> Option<&'static dyn LanguageProfile> {
    PROFILES.iter().copied().find(|p| p.id() == id)
}

/// Picks the profile that claims `extension`.
pub fn profile_for_extension(extension: &str) -> Option<&'static dyn LanguageProfile> {
    PROFILES.iter().copied().find(|p| p.extensions().contains(&extension))
}

pub fn default_profile() -> &'static dyn LanguageProfile {
    &SCRIPT
}
