//! Signature traversal over a block graph.
//!
//! `T(b, p)` holds when pattern `p` is the component's end, or when for every
//! edge pattern `p -> q` with minimum `k`, the outgoing block edges of `b`
//! whose destination `c` matches `q` and satisfies `T(c, q)` carry a total
//! multiplicity of at least `k`. Callers check that `b` matches `p` first.

use std::collections::HashMap;

use thiserror::Error;

use crate::blocking::BlockGraph;
use crate::signature::ComponentSignature;

use super::sequence::match_block_pattern;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("traversal depth exceeded {0}; the block graph is not acyclic")]
    DepthExceeded(usize),
    #[error("graph of {blocks} blocks with {slots} edge slots is too large for exhaustive search")]
    TooLarge { blocks: usize, slots: usize },
}

/// Pattern-versus-block match table for one component, computed once per
/// distinct op sequence.
pub struct BlockMatches {
    table: Vec<Vec<bool>>,
}

impl BlockMatches {
    pub fn new(component: &ComponentSignature, blocks: &BlockGraph) -> Self {
        let mut distinct: HashMap<&[String], usize> = HashMap::new();
        let mut seq_of = Vec::with_capacity(blocks.len());
        for b in blocks.blocks() {
            let next = distinct.len();
            seq_of.push(*distinct.entry(b.op_types.as_slice()).or_insert(next));
        }
        let mut uniques: Vec<&[String]> = vec![&[]; distinct.len()];
        for (seq, &i) in &distinct {
            uniques[i] = seq;
        }
        let table = component
            .blocks
            .iter()
            .map(|pattern| {
                let hits: Vec<bool> = uniques.iter().map(|s| match_block_pattern(pattern, s)).collect();
                seq_of.iter().map(|&s| hits[s]).collect()
            })
            .collect();
        Self { table }
    }

    pub fn matches(&self, pattern: usize, block: usize) -> bool {
        self.table[pattern][block]
    }

    pub fn blocks_matching(&self, pattern: usize) -> impl Iterator<Item = usize> + '_ {
        self.table[pattern]
            .iter()
            .enumerate()
            .filter(|(_, &hit)| hit)
            .map(|(b, _)| b)
    }
}

/// True if every block pattern of `component` matches at least one block.
pub fn check_all_blocks(component: &ComponentSignature, blocks: &BlockGraph) -> bool {
    let m = BlockMatches::new(component, blocks);
    (0..component.blocks.len()).all(|p| m.blocks_matching(p).next().is_some())
}

/// Blocks matching the component's start pattern, in id order.
pub fn get_start_nodes(component: &ComponentSignature, blocks: &BlockGraph) -> Vec<usize> {
    BlockMatches::new(component, blocks)
        .blocks_matching(component.start_id)
        .collect()
}

/// Memo and per-edge-pattern counts for traversals of one component.
#[derive(Debug, Default, Clone)]
pub struct TraversalState {
    memo: HashMap<(usize, usize), bool>,
    /// Successful-match multiplicity last observed for each `(src, dst)`
    /// edge pattern.
    pub visited_edge_counts: HashMap<(usize, usize), usize>,
}

impl TraversalState {
    pub fn new() -> Self {
        Self::default()
    }
}

struct Traversal<'a> {
    component: &'a ComponentSignature,
    blocks: &'a BlockGraph,
    matches: &'a BlockMatches,
}

impl Traversal<'_> {
    fn run(
        &self,
        current: usize,
        pattern: usize,
        state: &mut TraversalState,
        depth: usize,
    ) -> Result<bool, MatchError> {
        if pattern == self.component.end_id {
            return Ok(true);
        }
        if depth > self.blocks.len() {
            return Err(MatchError::DepthExceeded(self.blocks.len()));
        }
        if let Some(&known) = state.memo.get(&(current, pattern)) {
            return Ok(known);
        }
        let mut result = true;
        for edge in self.component.outgoing(pattern) {
            let mut count = 0;
            for out in self.blocks.outgoing(current) {
                if self.matches.matches(edge.dst, out.dst) && self.run(out.dst, edge.dst, state, depth + 1)? {
                    count += out.multiplicity;
                }
            }
            state.visited_edge_counts.insert((edge.src, edge.dst), count);
            if count < edge.min_repeats {
                result = false;
                break;
            }
        }
        state.memo.insert((current, pattern), result);
        Ok(result)
    }
}

/// Whether the component's subgraph rooted at pattern `pattern_id` is present
/// starting from block `current`.
pub fn traverse_from_start(
    component: &ComponentSignature,
    current: usize,
    pattern_id: usize,
    state: &mut TraversalState,
    blocks: &BlockGraph,
) -> Result<bool, MatchError> {
    let matches = BlockMatches::new(component, blocks);
    Traversal {
        component,
        blocks,
        matches: &matches,
    }
    .run(current, pattern_id, state, 0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureMatch {
    pub matched: bool,
    pub occurrences: usize,
    /// Start blocks from which traversal succeeded, ascending.
    pub starts: Vec<usize>,
}

pub fn check_signature(component: &ComponentSignature, blocks: &BlockGraph) -> Result<SignatureMatch, MatchError> {
    let matches = BlockMatches::new(component, blocks);
    check_with(component, blocks, &matches)
}

pub(crate) fn check_with(
    component: &ComponentSignature,
    blocks: &BlockGraph,
    matches: &BlockMatches,
) -> Result<SignatureMatch, MatchError> {
    let none = SignatureMatch {
        matched: false,
        occurrences: 0,
        starts: Vec::new(),
    };
    if !(0..component.blocks.len()).all(|p| matches.blocks_matching(p).next().is_some()) {
        return Ok(none);
    }
    let traversal = Traversal {
        component,
        blocks,
        matches,
    };
    // T is a pure predicate, so one memo serves every start attempt.
    let mut state = TraversalState::new();
    let mut starts = Vec::new();
    for b in matches.blocks_matching(component.start_id) {
        if traversal.run(b, component.start_id, &mut state, 0)? {
            starts.push(b);
        }
    }
    Ok(SignatureMatch {
        matched: starts.len() >= component.min_repeats,
        occurrences: starts.len(),
        starts,
    })
}

/// One consistent placement of every pattern of `component` on a block,
/// rooted at `start`, such that every edge pattern maps onto a block edge.
/// Used to pick concrete nodes for rewriting and highlighting; unlike
/// traversal, it requires a single block per pattern.
pub fn find_embedding(
    component: &ComponentSignature,
    blocks: &BlockGraph,
    matches: &BlockMatches,
    start: usize,
) -> Option<Vec<usize>> {
    if !matches.matches(component.start_id, start) {
        return None;
    }
    let order = topological(component);
    let mut assigned = vec![usize::MAX; component.blocks.len()];
    assigned[component.start_id] = start;
    fn place(
        k: usize,
        order: &[usize],
        component: &ComponentSignature,
        blocks: &BlockGraph,
        matches: &BlockMatches,
        assigned: &mut Vec<usize>,
    ) -> bool {
        let Some(&p) = order.get(k) else {
            return true;
        };
        if assigned[p] != usize::MAX {
            return place(k + 1, order, component, blocks, matches, assigned);
        }
        let parents: Vec<usize> = component
            .edges
            .iter()
            .filter(|e| e.dst == p)
            .map(|e| assigned[e.src])
            .collect();
        let Some(&first) = parents.first() else {
            return false;
        };
        let candidates: Vec<usize> = blocks.outgoing(first).map(|e| e.dst).collect();
        for c in candidates {
            if !matches.matches(p, c) || assigned.contains(&c) {
                continue;
            }
            if !parents.iter().all(|&q| blocks.outgoing(q).any(|e| e.dst == c)) {
                continue;
            }
            assigned[p] = c;
            if place(k + 1, order, component, blocks, matches, assigned) {
                return true;
            }
            assigned[p] = usize::MAX;
        }
        false
    }
    place(0, &order, component, blocks, matches, &mut assigned).then_some(assigned)
}

fn topological(component: &ComponentSignature) -> Vec<usize> {
    let n = component.blocks.len();
    let mut indegree = vec![0; n];
    for e in &component.edges {
        indegree[e.dst] += 1;
    }
    let mut ready: Vec<usize> = (0..n).filter(|&p| indegree[p] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(p) = ready.pop() {
        order.push(p);
        for e in component.outgoing(p) {
            indegree[e.dst] -= 1;
            if indegree[e.dst] == 0 {
                ready.push(e.dst);
            }
        }
    }
    order
}
