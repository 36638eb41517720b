//! Exhaustive reference matcher for small block graphs.
//!
//! Shares no code with the production matcher: op sequences are matched by
//! plain backtracking, block edges are read from the raw edge list, and every
//! edge pattern with minimum `k` is unfolded into `k` slots that are filled
//! one by one from the available edge capacity.

use crate::blocking::BlockGraph;
use crate::signature::{BlockPattern, ComponentSignature, OpPattern};

use super::traverse::MatchError;

pub const MAX_ORACLE_BLOCKS: usize = 20;
pub const MAX_ORACLE_SLOTS: usize = 64;

fn item_matches(item: &OpPattern, op: &str) -> bool {
    match item {
        OpPattern::Literal(l) => l == op,
        OpPattern::AnyOne => true,
        OpPattern::Alternation(options) => options.iter().any(|o| o == op),
        OpPattern::AnyMany => unreachable!("handled by the caller"),
    }
}

fn backtrack(items: &[&OpPattern], seq: &[&str]) -> bool {
    match items.split_first() {
        None => seq.is_empty(),
        Some((OpPattern::AnyMany, rest)) => (0..=seq.len()).any(|skip| backtrack(rest, &seq[skip..])),
        Some((item, rest)) => match seq.split_first() {
            Some((op, tail)) => item_matches(item, op) && backtrack(rest, tail),
            None => false,
        },
    }
}

fn pattern_matches(pattern: &BlockPattern, ops: &[String]) -> bool {
    let residual: Vec<&str> = ops
        .iter()
        .map(String::as_str)
        .filter(|op| !pattern.ignored_ops.contains(*op))
        .collect();
    let (lo, hi) = pattern.repeats;
    // Each repetition with a non-`*` item consumes at least one op.
    let consumes = pattern.ops.iter().any(|p| *p != OpPattern::AnyMany);
    let hi = if consumes { hi.min(residual.len()) } else { lo };
    (lo..=hi).any(|r| {
        let expanded: Vec<&OpPattern> = (0..r).flat_map(|_| pattern.ops.iter()).collect();
        backtrack(&expanded, &residual)
    })
}

struct Oracle<'a> {
    component: &'a ComponentSignature,
    blocks: &'a BlockGraph,
}

impl Oracle<'_> {
    /// Whether the pattern tree below `pattern` can be placed with its root
    /// on `block`.
    fn place(&self, pattern: usize, block: usize) -> bool {
        if !pattern_matches(&self.component.blocks[pattern], &self.blocks.blocks()[block].op_types) {
            return false;
        }
        self.component.edges.iter().filter(|e| e.src == pattern).all(|e| {
            let out: Vec<(usize, usize)> = self
                .blocks
                .edges()
                .iter()
                .filter(|be| be.src == block)
                .map(|be| (be.dst, be.multiplicity))
                .collect();
            let mut used = vec![0; out.len()];
            self.fill(e.dst, e.min_repeats, 0, &out, &mut used)
        })
    }

    /// Fills `remaining` slots for child pattern `child`, choosing edges at
    /// index `from` or later so each multiset of choices is tried once.
    fn fill(&self, child: usize, remaining: usize, from: usize, out: &[(usize, usize)], used: &mut [usize]) -> bool {
        if remaining == 0 {
            return true;
        }
        for i in from..out.len() {
            let (dst, capacity) = out[i];
            if used[i] == capacity || !self.place(child, dst) {
                continue;
            }
            used[i] += 1;
            let ok = self.fill(child, remaining - 1, i, out, used);
            used[i] -= 1;
            if ok {
                return true;
            }
        }
        false
    }
}

/// Exhaustive check of `component` against `blocks`, equivalent to
/// [`super::check_signature`]'s `matched` on graphs of at most
/// [`MAX_ORACLE_BLOCKS`] blocks.
pub fn brute_force_match(component: &ComponentSignature, blocks: &BlockGraph) -> Result<bool, MatchError> {
    let slots: usize = component.edges.iter().map(|e| e.min_repeats).sum();
    if blocks.len() > MAX_ORACLE_BLOCKS || slots > MAX_ORACLE_SLOTS {
        return Err(MatchError::TooLarge {
            blocks: blocks.len(),
            slots,
        });
    }
    let oracle = Oracle { component, blocks };
    let occurrences = (0..blocks.len())
        .filter(|&b| oracle.place(component.start_id, b))
        .count();
    Ok(occurrences >= component.min_repeats)
}
