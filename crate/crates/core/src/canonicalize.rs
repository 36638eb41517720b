//! Operator-fusion rewrite pass.
//!
//! A rule describes a decomposed idiom as a component signature. Each
//! occurrence is contracted into one node of the rule's replacement type that
//! takes over every edge crossing the occurrence boundary.

use std::collections::{BTreeSet, HashSet};

use serde_json::Value;
use thiserror::Error;

use crate::blocking::extract_blocks;
use crate::graph::{AgnosticGraph, ConstantOps, Edge, GraphError, NodeId};
use crate::matcher::{align_block_pattern, check_signature, find_embedding, BlockMatches};
use crate::signature::{parse_component_value, ComponentSignature, SignatureError};

const DEFAULT_RULES: &str = include_str!("../../../rules/layernorm.json");

/// Which edges the fused node inherits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Every edge entering or leaving the matched node set.
    Boundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewriteRule {
    pub name: String,
    pub pattern: ComponentSignature,
    pub replacement_op: String,
    pub anchor: Anchor,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error(transparent)]
    Signature(#[from] SignatureError),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

/// Parses a rules file: an object keyed by rule name whose values use the
/// signature component schema plus `replacement_op` and `anchor`.
pub fn parse_rules(payload: &[u8]) -> Result<Vec<RewriteRule>, RuleError> {
    let root: Value = serde_json::from_slice(payload).map_err(|e| {
        RuleError::Signature(SignatureError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    })?;
    let map = root.as_object().ok_or_else(|| RuleError::Invalid {
        path: String::new(),
        message: "expected an object keyed by rule name".into(),
    })?;
    let mut rules = Vec::with_capacity(map.len());
    for (name, value) in map {
        let (pattern, extra) = parse_component_value(value, name, &["replacement_op", "anchor"])?;
        let invalid = |key: &str, message: &str| RuleError::Invalid {
            path: format!("{name}.{key}"),
            message: message.into(),
        };
        let replacement_op = match extra.get("replacement_op") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => return Err(invalid("replacement_op", "expected a non-empty string")),
            None => return Err(invalid("replacement_op", "missing field")),
        };
        let anchor = match extra.get("anchor") {
            None => Anchor::Boundary,
            Some(Value::String(s)) if s == "boundary" => Anchor::Boundary,
            Some(_) => return Err(invalid("anchor", "expected \"boundary\"")),
        };
        rules.push(RewriteRule {
            name: name.clone(),
            pattern,
            replacement_op,
            anchor,
        });
    }
    Ok(rules)
}

/// The rules shipped with the engine.
pub fn default_rules() -> Vec<RewriteRule> {
    parse_rules(DEFAULT_RULES.as_bytes()).expect("shipped rules are valid")
}

#[derive(Debug, Clone)]
pub struct Rewritten {
    pub graph: AgnosticGraph,
    pub warnings: Vec<String>,
    /// Number of occurrences fused, over all rules.
    pub fused: usize,
}

/// Applies every rule in order, each until no further occurrence is found.
pub fn apply_rules(graph: &AgnosticGraph, rules: &[RewriteRule], constant_ops: &ConstantOps) -> Rewritten {
    let mut current = graph.clone();
    let mut warnings = Vec::new();
    let mut fused = 0;
    for rule in rules {
        // Occurrences skipped because fusing them would close a cycle, keyed
        // by the names of their nodes.
        let mut rejected: HashSet<BTreeSet<String>> = HashSet::new();
        while let Some(set) = next_occurrence(&current, rule, constant_ops, &rejected) {
            match contract(&current, &set, &rule.replacement_op) {
                Ok(next) => {
                    current = next;
                    fused += 1;
                }
                Err(_) => {
                    let names: BTreeSet<String> = set.iter().map(|id| current.nodes()[id.0].name.clone()).collect();
                    warnings.push(format!(
                        "rule '{}' skipped at '{}': fusing would create a cycle",
                        rule.name,
                        names.iter().next().cloned().unwrap_or_default()
                    ));
                    rejected.insert(names);
                }
            }
        }
    }
    Rewritten {
        graph: current,
        warnings,
        fused,
    }
}

/// Node set of the first usable occurrence, scanning start blocks in
/// ascending order of their first node id.
fn next_occurrence(
    graph: &AgnosticGraph,
    rule: &RewriteRule,
    constant_ops: &ConstantOps,
    rejected: &HashSet<BTreeSet<String>>,
) -> Option<Vec<NodeId>> {
    let pattern = &rule.pattern;
    let blocks = extract_blocks(graph, constant_ops);
    let Ok(found) = check_signature(pattern, &blocks) else {
        return None;
    };
    let matches = BlockMatches::new(pattern, &blocks);
    let mut starts = found.starts;
    starts.sort_by_key(|&b| blocks.blocks()[b].initial());
    for start in starts {
        let Some(embedding) = find_embedding(pattern, &blocks, &matches, start) else {
            continue;
        };
        let mut set = Vec::new();
        for (p, &b) in embedding.iter().enumerate() {
            let block = &blocks.blocks()[b];
            let alignment = align_block_pattern(&pattern.blocks[p], &block.op_types)?;
            set.extend(
                block
                    .node_ids
                    .iter()
                    .zip(alignment)
                    .filter(|(_, slot)| slot.is_some())
                    .map(|(&n, _)| n),
            );
        }
        set.sort();
        if set.len() < 2 || set.iter().any(|n| graph.nodes()[n.0].op_type == rule.replacement_op) {
            continue;
        }
        let names: BTreeSet<String> = set.iter().map(|id| graph.nodes()[id.0].name.clone()).collect();
        if rejected.contains(&names) {
            continue;
        }
        return Some(set);
    }
    None
}

/// Replaces `set` (sorted) by one node of type `op`, placed at the position
/// of the set's smallest id.
fn contract(graph: &AgnosticGraph, set: &[NodeId], op: &str) -> Result<AgnosticGraph, GraphError> {
    let members: HashSet<NodeId> = set.iter().copied().collect();
    let anchor = set[0];
    let taken: HashSet<&str> = graph.nodes().iter().map(|n| n.name.as_str()).collect();
    let name = (0..)
        .map(|n| format!("{op}#fused{n}"))
        .find(|candidate| !taken.contains(candidate.as_str()))
        .expect("unbounded search");

    let mut new_id = vec![usize::MAX; graph.len()];
    let mut labels = Vec::with_capacity(graph.len() - set.len() + 1);
    for node in graph.nodes() {
        if node.id == anchor {
            new_id[node.id.0] = labels.len();
            labels.push((name.clone(), op.to_owned()));
        } else if !members.contains(&node.id) {
            new_id[node.id.0] = labels.len();
            labels.push((node.name.clone(), node.op_type.clone()));
        }
    }
    for &m in set {
        new_id[m.0] = new_id[anchor.0];
    }
    let edges = graph.edges().iter().filter_map(|e| {
        let (s, d) = (new_id[e.source.0], new_id[e.destination.0]);
        (s != d).then_some(Edge {
            source: NodeId(s),
            destination: NodeId(d),
        })
    });
    AgnosticGraph::from_parts(labels, edges.collect::<Vec<_>>())
}
