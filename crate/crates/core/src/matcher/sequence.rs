//! Whole-sequence matching of op patterns against block op sequences.

use crate::signature::{BlockPattern, OpPattern};

/// True if `seq`, with `pattern.ignored_ops` removed, is generated by
/// `pattern.ops` repeated `r` times for some `r` within `pattern.repeats`.
pub fn match_block_pattern<S: AsRef<str>>(pattern: &BlockPattern, seq: &[S]) -> bool {
    let residual: Vec<&str> = seq
        .iter()
        .map(AsRef::as_ref)
        .filter(|op| !pattern.ignored_ops.contains(*op))
        .collect();
    match_repeated(&pattern.ops, pattern.repeats, &residual)
}

/// True if `ops` repeated `r` times matches `seq` for some `r` in `repeats`.
pub fn match_repeated(ops: &[OpPattern], repeats: (usize, usize), seq: &[&str]) -> bool {
    let single = ops.iter().filter(|p| p.is_single()).count();
    let (lo, hi) = repeats;
    if single == 0 {
        // Only `*` items: every repetition count accepts every sequence.
        return lo <= hi;
    }
    let hi = hi.min(seq.len() / single);
    (lo..=hi).any(|r| match_expanded(ops, r, seq))
}

/// Simulates the NFA of `ops` repeated `r` times. States are positions in
/// the expanded pattern; a `*` state loops on any op.
fn match_expanded(ops: &[OpPattern], r: usize, seq: &[&str]) -> bool {
    let len = ops.len() * r;
    let item = |i: usize| &ops[i % ops.len()];
    let mut current = vec![false; len + 1];
    current[0] = true;
    close(&mut current, len, item);
    for op in seq {
        let mut next = vec![false; len + 1];
        let mut any = false;
        for i in 0..len {
            if !current[i] {
                continue;
            }
            let p = item(i);
            if p.accepts(op) {
                if p.is_single() {
                    next[i + 1] = true;
                } else {
                    next[i] = true;
                }
                any = true;
            }
        }
        if !any {
            return false;
        }
        close(&mut next, len, item);
        current = next;
    }
    current[len]
}

/// Epsilon closure: a `*` may be skipped.
fn close<'a>(states: &mut [bool], len: usize, item: impl Fn(usize) -> &'a OpPattern) {
    for i in 0..len {
        if states[i] && !item(i).is_single() {
            states[i + 1] = true;
        }
    }
}

/// For a matching sequence, assigns each op to the pattern item that
/// consumes it: `Some(i)` for index `i` in `pattern.ops`, `None` for ops
/// absorbed by `*` or removed as ignored. `*` absorbs as little as possible
/// and the smallest feasible repetition count is used.
pub fn align_block_pattern<S: AsRef<str>>(pattern: &BlockPattern, seq: &[S]) -> Option<Vec<Option<usize>>> {
    let kept: Vec<usize> = (0..seq.len())
        .filter(|&i| !pattern.ignored_ops.contains(seq[i].as_ref()))
        .collect();
    let residual: Vec<&str> = kept.iter().map(|&i| seq[i].as_ref()).collect();
    let ops = &pattern.ops;
    let single = ops.iter().filter(|p| p.is_single()).count();
    let hi = match residual.len().checked_div(single) {
        Some(cap) => pattern.repeats.1.min(cap),
        None => pattern.repeats.0,
    };
    for r in pattern.repeats.0..=hi {
        if let Some(assignment) = align_expanded(ops, r, &residual) {
            let mut out = vec![None; seq.len()];
            for (k, slot) in assignment.into_iter().enumerate() {
                out[kept[k]] = slot;
            }
            return Some(out);
        }
    }
    None
}

fn align_expanded(ops: &[OpPattern], r: usize, seq: &[&str]) -> Option<Vec<Option<usize>>> {
    let len = ops.len() * r;
    let item = |i: usize| &ops[i % ops.len()];
    // can[i][j]: expanded items i.. match seq[j..].
    let mut can = vec![vec![false; seq.len() + 1]; len + 1];
    can[len][seq.len()] = true;
    for i in (0..len).rev() {
        for j in (0..=seq.len()).rev() {
            let p = item(i);
            can[i][j] = if p.is_single() {
                j < seq.len() && p.accepts(seq[j]) && can[i + 1][j + 1]
            } else {
                can[i + 1][j] || (j < seq.len() && can[i][j + 1])
            };
        }
    }
    if !can[0][0] {
        return None;
    }
    let mut out = Vec::with_capacity(seq.len());
    let (mut i, mut j) = (0, 0);
    while j < seq.len() {
        let p = item(i);
        if p.is_single() {
            out.push(Some(i % ops.len()));
            i += 1;
            j += 1;
        } else if can[i + 1][j] {
            i += 1;
        } else {
            out.push(None);
            j += 1;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pattern(ops: &[&str], repeats: (usize, usize)) -> BlockPattern {
        let mut p = BlockPattern::new(0, ops.iter().map(|o| OpPattern::parse(o).unwrap()).collect());
        p.repeats = repeats;
        p
    }

    #[test]
    fn depth_wise_repeats() {
        let p = pattern(&["Mul", "Add"], (1, 2));
        assert!(match_block_pattern(&p, &["Mul", "Add"]));
        assert!(match_block_pattern(&p, &["Mul", "Add", "Mul", "Add"]));
        assert!(!match_block_pattern(&p, &["Mul", "Add", "Mul"]));
        assert!(!match_block_pattern(&p, &["Mul", "Add", "Mul", "Add", "Mul", "Add"]));
        assert!(!match_block_pattern(&p, &["Mul"]));
    }

    #[test]
    fn any_many() {
        let p = pattern(&["GatherElements", "*"], (1, 1));
        assert!(match_block_pattern(&p, &["GatherElements"]));
        assert!(match_block_pattern(&p, &["GatherElements", "Transpose", "Softmax"]));
        assert!(!match_block_pattern(&p, &["Transpose", "GatherElements"]));
        let star = pattern(&["*"], (1, 1));
        assert!(match_block_pattern(&star, &["A", "B"]));
    }

    #[test]
    fn alternation_and_any_one() {
        let p = pattern(&["GatherElements", "Add||Transpose"], (1, 1));
        assert!(match_block_pattern(&p, &["GatherElements", "Add"]));
        assert!(match_block_pattern(&p, &["GatherElements", "Transpose"]));
        assert!(!match_block_pattern(&p, &["GatherElements", "Mul"]));
        let q = pattern(&["?", "Conv"], (1, 1));
        assert!(match_block_pattern(&q, &["Pad", "Conv"]));
        assert!(!match_block_pattern(&q, &["Conv"]));
    }

    #[test]
    fn ignored_ops_are_removed() {
        let mut p = pattern(&["MatMul", "Add"], (1, 1));
        p.ignored_ops.insert("Identity".into());
        assert!(match_block_pattern(&p, &["Identity", "MatMul", "Identity", "Add"]));
    }

    #[test]
    fn alignment_is_lazy() {
        let p = pattern(&["Div", "Mul", "Add", "*"], (1, 1));
        let seq = ["Div", "Mul", "Add", "MatMul", "Add"];
        assert_eq!(
            align_block_pattern(&p, &seq).unwrap(),
            [Some(0), Some(1), Some(2), None, None]
        );
        let q = pattern(&["A", "*", "B"], (1, 2));
        assert_eq!(
            align_block_pattern(&q, &["A", "X", "B", "A", "B"]).unwrap(),
            [Some(0), None, None, None, Some(2)]
        );
        assert_eq!(align_block_pattern(&q, &["A"]), None);
    }
}
