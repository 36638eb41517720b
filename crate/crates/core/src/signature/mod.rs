//! Declarative block-graph signatures.
//!
//! A family signature is one or more components; each component is a small
//! DAG of block patterns joined by edge patterns with minimum multiplicities.

mod lint;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

pub use lint::{lint_signatures, LintFinding, Severity};
pub use parse::{parse_component_value, parse_signatures, to_canonical_json, SignatureError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OpPattern {
    Literal(String),
    /// `?`: exactly one operation.
    AnyOne,
    /// `*`: zero or more operations.
    AnyMany,
    /// `A||B`: exactly one operation equal to one of the options.
    Alternation(Vec<String>),
}

impl OpPattern {
    pub fn parse(text: &str) -> Result<Self, String> {
        match text {
            "" => Err("empty operation pattern".into()),
            "?" => Ok(Self::AnyOne),
            "*" => Ok(Self::AnyMany),
            _ if text.contains("||") => {
                let options: Vec<String> = text.split("||").map(str::to_owned).collect();
                for option in &options {
                    if option.is_empty() {
                        return Err(format!("empty alternative in '{text}'"));
                    }
                    if option == "?" || option == "*" || option.contains('|') {
                        return Err(format!("wildcard or stray '|' in alternation '{text}'"));
                    }
                }
                Ok(Self::Alternation(options))
            }
            _ => Ok(Self::Literal(text.to_owned())),
        }
    }

    /// True for patterns that consume exactly one operation.
    pub fn is_single(&self) -> bool {
        !matches!(self, Self::AnyMany)
    }

    /// True for literals and alternations.
    pub fn is_concrete(&self) -> bool {
        matches!(self, Self::Literal(_) | Self::Alternation(_))
    }

    /// Whether a single operation satisfies this pattern. `AnyMany` accepts
    /// any operation here; its arity is handled by the sequence matcher.
    pub fn accepts(&self, op: &str) -> bool {
        match self {
            Self::Literal(l) => l == op,
            Self::AnyOne | Self::AnyMany => true,
            Self::Alternation(options) => options.iter().any(|o| o == op),
        }
    }
}

impl fmt::Display for OpPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Literal(l) => f.write_str(l),
            Self::AnyOne => f.write_str("?"),
            Self::AnyMany => f.write_str("*"),
            Self::Alternation(options) => f.write_str(&options.join("||")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockPattern {
    pub id: usize,
    pub ops: Vec<OpPattern>,
    /// Operation types removed from a candidate block before matching.
    pub ignored_ops: BTreeSet<String>,
    /// Inclusive bounds on how many times `ops` repeats back to back.
    pub repeats: (usize, usize),
}

impl BlockPattern {
    pub fn new(id: usize, ops: Vec<OpPattern>) -> Self {
        Self {
            id,
            ops,
            ignored_ops: BTreeSet::new(),
            repeats: (1, 1),
        }
    }

    pub fn is_all_any_many(&self) -> bool {
        self.ops.iter().all(|p| *p == OpPattern::AnyMany)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgePattern {
    pub src: usize,
    pub dst: usize,
    pub min_repeats: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComponentSignature {
    pub blocks: Vec<BlockPattern>,
    pub edges: Vec<EdgePattern>,
    pub min_repeats: usize,
    pub start_id: usize,
    pub end_id: usize,
}

impl ComponentSignature {
    /// Builds and validates a component.
    pub fn new(blocks: Vec<BlockPattern>, edges: Vec<EdgePattern>, min_repeats: usize) -> Result<Self, String> {
        let (start_id, end_id) =
            parse::validate_topology(&blocks, &edges, min_repeats).map_err(|(_, message)| message)?;
        Ok(Self {
            blocks,
            edges,
            min_repeats,
            start_id,
            end_id,
        })
    }

    pub fn outgoing(&self, pattern: usize) -> impl Iterator<Item = &EdgePattern> {
        self.edges.iter().filter(move |e| e.src == pattern)
    }

    pub fn specificity(&self) -> usize {
        let concrete: usize = self
            .blocks
            .iter()
            .map(|b| b.ops.iter().filter(|p| p.is_concrete()).count())
            .sum();
        concrete + self.edges.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySignature {
    pub name: String,
    pub components: Vec<ComponentSignature>,
    pub metadata: Option<serde_json::Value>,
}

/// Concrete op patterns plus edges, summed over components. Higher means
/// more specific.
pub fn specificity(sig: &FamilySignature) -> usize {
    sig.components.iter().map(ComponentSignature::specificity).sum()
}
