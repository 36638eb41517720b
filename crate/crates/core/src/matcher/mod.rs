//! Matching signatures against block graphs and scanning models.

mod oracle;
mod sequence;
mod traverse;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::blocking::{extract_blocks, BlockGraph};
use crate::canonicalize::{apply_rules, RewriteRule};
use crate::graph::{is_constant, AgnosticGraph, ConstantOps};
use crate::signature::{specificity, FamilySignature};

pub use oracle::{brute_force_match, MAX_ORACLE_BLOCKS, MAX_ORACLE_SLOTS};
pub use sequence::{align_block_pattern, match_block_pattern};
pub use traverse::{
    check_all_blocks, check_signature, find_embedding, get_start_nodes, traverse_from_start, BlockMatches, MatchError,
    SignatureMatch, TraversalState,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Report every matching family.
    #[default]
    AllMatches,
    /// Report only the most specific matching family.
    BestMatch,
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub mode: ScanMode,
    /// Rewrite rules applied before blocking. Empty disables the pass.
    pub rules: Vec<RewriteRule>,
    pub constant_ops: ConstantOps,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            mode: ScanMode::AllMatches,
            rules: crate::canonicalize::default_rules(),
            constant_ops: ConstantOps::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub family: String,
    pub specificity: usize,
    #[serde(rename = "components")]
    pub total_components: usize,
    #[serde(skip)]
    pub matched_components: usize,
    /// Start block of every counted occurrence, component by component.
    #[serde(rename = "occurrences")]
    pub start_block_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanStats {
    pub nodes: usize,
    pub blocks: usize,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanReport {
    pub origin: String,
    pub detections: Vec<Detection>,
    pub warnings: Vec<String>,
    pub stats: ScanStats,
}

impl ScanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Evaluates one family against a block graph. `Ok(None)` means some
/// component did not match.
pub fn match_family(family: &FamilySignature, blocks: &BlockGraph) -> Result<Option<Detection>, MatchError> {
    let mut starts = Vec::new();
    for component in &family.components {
        let m = check_signature(component, blocks)?;
        if !m.matched {
            return Ok(None);
        }
        starts.extend(m.starts);
    }
    Ok(Some(Detection {
        family: family.name.clone(),
        specificity: specificity(family),
        total_components: family.components.len(),
        matched_components: family.components.len(),
        start_block_ids: starts,
    }))
}

/// Canonicalizes, blocks and matches `graph` against `db`.
pub fn scan(graph: &AgnosticGraph, db: &[FamilySignature], options: &ScanOptions, origin: &str) -> ScanReport {
    let started = Instant::now();
    let mut warnings = Vec::new();
    let rewritten;
    let graph = if options.rules.is_empty() {
        graph
    } else {
        let out = apply_rules(graph, &options.rules, &options.constant_ops);
        warnings.extend(out.warnings);
        rewritten = out.graph;
        &rewritten
    };
    let blocks = extract_blocks(graph, &options.constant_ops);

    let mut detections = Vec::new();
    for family in db {
        match match_family(family, &blocks) {
            Ok(Some(d)) => detections.push(d),
            Ok(None) => {}
            Err(e) => warnings.push(format!("family '{}': {e}", family.name)),
        }
    }
    rank(&mut detections);
    if options.mode == ScanMode::BestMatch {
        detections.truncate(1);
    }

    ScanReport {
        origin: origin.to_owned(),
        detections,
        warnings,
        stats: ScanStats {
            nodes: graph
                .nodes()
                .iter()
                .filter(|n| !is_constant(n, &options.constant_ops))
                .count(),
            blocks: blocks.len(),
            ms: started.elapsed().as_secs_f64() * 1000.0,
        },
    }
}

/// Descending specificity, then family name.
pub fn rank(detections: &mut [Detection]) {
    detections.sort_by(|a, b| b.specificity.cmp(&a.specificity).then_with(|| a.family.cmp(&b.family)));
}

/// Families whose components are embedded in `blocks`, keyed by block id.
/// Used to color block dumps.
pub fn block_highlights(db: &[FamilySignature], blocks: &BlockGraph) -> BTreeMap<usize, Vec<String>> {
    let mut out: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for family in db {
        if !matches!(match_family(family, blocks), Ok(Some(_))) {
            continue;
        }
        for component in &family.components {
            let matches = BlockMatches::new(component, blocks);
            let Ok(m) = check_signature(component, blocks) else {
                continue;
            };
            for start in m.starts {
                if let Some(embedding) = find_embedding(component, blocks, &matches, start) {
                    for b in embedding {
                        let names = out.entry(b).or_default();
                        if !names.contains(&family.name) {
                            names.push(family.name.clone());
                        }
                    }
                }
            }
        }
    }
    out
}
