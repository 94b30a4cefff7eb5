use serde::{Deserialize, Serialize};

/// Half-open byte range into a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ByteRange {
    pub start: usize,
    pub end: usize,
}

impl ByteRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: ByteRange) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

/// Syntactic category of a node. The statement and call variants carry the
/// sub-ranges that placeholder enumeration needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Program,
    Block,
    EmptyStatement,
    ExpressionStatement,
    VariableDeclaration,
    FunctionDeclaration,
    ClassDeclaration,
    ReturnStatement,
    JumpStatement,
    ThrowStatement,
    TryStatement,
    LabeledStatement,
    SwitchCase,
    If { test: ByteRange },
    Switch { discriminant: ByteRange },
    While { test: ByteRange },
    DoWhile { test: ByteRange },
    For {
        init: Option<ByteRange>,
        test: Option<ByteRange>,
        update: Option<ByteRange>,
        header: ByteRange,
    },
    ForIn { left: ByteRange, right: ByteRange, header: ByteRange },
    ForOf { left: ByteRange, right: ByteRange, header: ByteRange },
    Call { callee: ByteRange, arguments: Vec<ByteRange> },
    New,
    Member,
    Identifier,
    Literal,
    Array,
    Object,
    Function,
    Class,
    Arrow,
    Parenthesized,
    Unary,
    Update,
    Binary,
    Logical,
    Conditional,
    Assignment,
    Sequence,
    Spread,
    TaggedTemplate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxNode {
    pub kind: NodeKind,
    pub range: ByteRange,
}

/// Flat node list in completion (post-) order: children precede parents.
#[derive(Debug, Clone, Default)]
pub struct SyntaxTree {
    pub nodes: Vec<SyntaxNode>,
}

impl SyntaxTree {
    /// Node whose range is exactly `range`, preferring the innermost.
    pub fn node_with_range(&self, range: ByteRange) -> Option<&SyntaxNode> {
        self.nodes.iter().find(|n| n.range == range)
    }

    /// Smallest node covering `range`; innermost wins among equal sizes.
    pub fn smallest_covering(&self, range: ByteRange) -> Option<&SyntaxNode> {
        let mut best: Option<&SyntaxNode> = None;
        for node in &self.nodes {
            if node.range.contains(range) && best.is_none_or(|b| node.range.len() < b.range.len()) {
                best = Some(node);
            }
        }
        best
    }

    /// Smallest node that covers `range` and satisfies `pred`.
    pub fn smallest_covering_where(
        &self,
        range: ByteRange,
        pred: impl Fn(&NodeKind) -> bool,
    ) -> Option<&SyntaxNode> {
        let mut best: Option<&SyntaxNode> = None;
        for node in &self.nodes {
            if pred(&node.kind)
                && node.range.contains(range)
                && best.is_none_or(|b| node.range.len() < b.range.len())
            {
                best = Some(node);
            }
        }
        best
    }
}
