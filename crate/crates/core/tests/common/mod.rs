//! Generators and independent checkers shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng;

use genescan_core::blocking::BlockGraph;
use genescan_core::graph::{AgnosticGraph, ConstantOps, Declarations, RawOperation};
use genescan_core::signature::{BlockPattern, ComponentSignature, EdgePattern, OpPattern};

pub fn repo_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

pub fn read(rel: &str) -> Vec<u8> {
    std::fs::read(repo_path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

const OPS: &[&str] = &["Conv", "Relu", "Add", "Mul", "MatMul", "Concat"];

/// A random SSA operation list over `n` operations. Some operands are
/// constants, some are declared graph inputs, and outputs of a few
/// operations are declared graph outputs. Every name resolves.
pub fn random_model(rng: &mut impl Rng, n: usize) -> (Vec<RawOperation>, Declarations) {
    let mut ops = Vec::with_capacity(n);
    let mut values: Vec<String> = Vec::new();
    let mut decl = Declarations {
        strict: true,
        ..Default::default()
    };
    for k in 0..rng.gen_range(0..3) {
        let v = format!("in{k}");
        decl.inputs.push(v.clone());
        values.push(v);
    }
    for i in 0..n {
        let name = format!("n{i}");
        if rng.gen_bool(0.15) {
            ops.push(RawOperation::new(
                &name,
                "Constant",
                Vec::<String>::new(),
                [name.clone()],
            ));
            values.push(name);
            continue;
        }
        let op = OPS[rng.gen_range(0..OPS.len())];
        let mut inputs = Vec::new();
        let arity = if values.is_empty() { 0 } else { rng.gen_range(0..=3) };
        for _ in 0..arity {
            // Bias towards recent values so long chains appear.
            let j = values.len() - 1 - rng.gen_range(0..values.len()).min(rng.gen_range(0..4));
            inputs.push(values[j].clone());
        }
        if rng.gen_bool(0.1) {
            let w = format!("w{i}");
            decl.initializers.push(w.clone());
            inputs.push(w);
        }
        let outputs = if rng.gen_bool(0.05) {
            vec![]
        } else {
            vec![format!("{name}:0")]
        };
        values.extend(outputs.iter().cloned());
        ops.push(RawOperation::new(&name, op, inputs, outputs));
    }
    let produced: Vec<String> = ops.iter().flat_map(|o| o.outputs.clone()).collect();
    for v in produced {
        if rng.gen_bool(0.1) {
            decl.outputs.push(v);
        }
    }
    (ops, decl)
}

/// Violations of the block partition invariants, computed from the graph's
/// adjacency alone.
pub fn block_violations(graph: &AgnosticGraph, blocks: &BlockGraph, consts: &ConstantOps) -> Vec<String> {
    let nodes = graph.nodes();
    let constant = |i: usize| consts.contains(&nodes[i].op_type);
    let nc_in = |i: usize| nodes[i].inputs.iter().filter(|p| !constant(p.0)).count();
    let mut bad = Vec::new();

    let mut owner: HashMap<usize, usize> = HashMap::new();
    for b in blocks.blocks() {
        if b.node_ids.is_empty() {
            bad.push(format!("block {} is empty", b.id));
        }
        for (k, n) in b.node_ids.iter().enumerate() {
            if owner.insert(n.0, b.id).is_some() {
                bad.push(format!("node {} in two blocks", n.0));
            }
            if constant(n.0) {
                bad.push(format!("constant node {} in block {}", n.0, b.id));
            }
            if b.op_types[k] != nodes[n.0].op_type {
                bad.push(format!("block {} op cache disagrees at {k}", b.id));
            }
        }
        for w in b.node_ids.windows(2) {
            let (u, v) = (w[0].0, w[1].0);
            if !nodes[u].outputs.iter().any(|s| s.0 == v) {
                bad.push(format!("block {}: no edge {u}->{v}", b.id));
            }
            if nodes[u].outputs.len() != 1 {
                bad.push(format!(
                    "block {}: non-terminal {u} has {} outputs",
                    b.id,
                    nodes[u].outputs.len()
                ));
            }
            if nc_in(v) != 1 {
                bad.push(format!(
                    "block {}: non-initial {v} has {} non-constant inputs",
                    b.id,
                    nc_in(v)
                ));
            }
        }
    }
    for n in nodes {
        let i = n.id.0;
        let has_edge = !n.inputs.is_empty() || !n.outputs.is_empty();
        if !constant(i) && has_edge && !owner.contains_key(&i) {
            bad.push(format!("node {i} not covered"));
        }
        if !constant(i) && !has_edge && owner.contains_key(&i) {
            bad.push(format!("isolated node {i} placed in a block"));
        }
    }

    let listed: HashSet<(usize, usize)> = blocks.edges().iter().map(|e| (e.src, e.dst)).collect();
    if listed.len() != blocks.edges().len() {
        bad.push("duplicate block edges".into());
    }
    for e in blocks.edges() {
        let (src, dst) = (&blocks.blocks()[e.src], &blocks.blocks()[e.dst]);
        let (t, h) = (src.node_ids.last().unwrap().0, dst.node_ids[0].0);
        if !nodes[t].outputs.iter().any(|s| s.0 == h) {
            bad.push(format!("block edge {}->{} without graph edge", e.src, e.dst));
        }
        if e.multiplicity != 1 {
            bad.push(format!(
                "block edge {}->{} multiplicity {}",
                e.src, e.dst, e.multiplicity
            ));
        }
    }
    let terminals: HashMap<usize, usize> = blocks
        .blocks()
        .iter()
        .map(|b| (b.node_ids.last().unwrap().0, b.id))
        .collect();
    let initials: HashMap<usize, usize> = blocks.blocks().iter().map(|b| (b.node_ids[0].0, b.id)).collect();
    for ge in graph.edges() {
        if let (Some(&a), Some(&b)) = (terminals.get(&ge.source.0), initials.get(&ge.destination.0)) {
            if a != b && !listed.contains(&(a, b)) {
                bad.push(format!(
                    "graph edge {}->{} missing as block edge",
                    ge.source.0, ge.destination.0
                ));
            }
        }
    }

    // Maximality: no two blocks could be joined.
    for a in blocks.blocks() {
        let t = a.node_ids.last().unwrap().0;
        if let [s] = nodes[t].outputs.as_slice() {
            if let Some(&b) = initials.get(&s.0) {
                if nc_in(s.0) == 1 && !constant(t) {
                    bad.push(format!("blocks {} and {b} should be one", a.id));
                }
            }
        }
    }
    bad
}

fn random_ops(rng: &mut impl Rng, alphabet: &[&str], max_len: usize) -> Vec<String> {
    (0..rng.gen_range(1..=max_len))
        .map(|_| alphabet[rng.gen_range(0..alphabet.len())].to_string())
        .collect()
}

/// A random block DAG. Edges only run from lower to higher ids; some carry
/// multiplicity 2.
pub fn random_block_graph(rng: &mut impl Rng, max_blocks: usize) -> BlockGraph {
    let n = rng.gen_range(1..=max_blocks);
    let seqs: Vec<Vec<String>> = (0..n).map(|_| random_ops(rng, &["A", "B", "C"], 3)).collect();
    let density = rng.gen_range(0.05..0.4);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.push((i, j, if rng.gen_bool(0.2) { 2 } else { 1 }));
            }
        }
    }
    BlockGraph::from_op_sequences(seqs, &edges).unwrap()
}

pub fn literal(ops: &[String]) -> Vec<OpPattern> {
    ops.iter().map(|o| OpPattern::Literal(o.clone())).collect()
}

fn random_pattern_ops(rng: &mut impl Rng) -> Vec<OpPattern> {
    let len = rng.gen_range(1..=3);
    (0..len)
        .map(|_| match rng.gen_range(0..10) {
            0 => OpPattern::AnyOne,
            1 => OpPattern::AnyMany,
            2 => OpPattern::Alternation(vec!["A".into(), "B".into()]),
            3 => OpPattern::Alternation(vec!["B".into(), "C".into()]),
            k => OpPattern::Literal(["A", "B", "C"][k % 3].to_string()),
        })
        .collect()
}

/// A random component with `k` patterns: a chain 0 -> 1 -> ... plus forward
/// shortcut edges, so it has a unique source and sink.
pub fn random_component(rng: &mut impl Rng) -> ComponentSignature {
    let k = rng.gen_range(1..=4);
    let blocks = (0..k)
        .map(|id| {
            let mut b = BlockPattern::new(id, random_pattern_ops(rng));
            if rng.gen_bool(0.15) {
                b.repeats = (1, 2);
            }
            b
        })
        .collect();
    let mut edges: Vec<EdgePattern> = (1..k)
        .map(|i| EdgePattern {
            src: i - 1,
            dst: i,
            min_repeats: if rng.gen_bool(0.25) { 2 } else { 1 },
        })
        .collect();
    for i in 0..k {
        for j in i + 2..k {
            if rng.gen_bool(0.3) {
                edges.push(EdgePattern {
                    src: i,
                    dst: j,
                    min_repeats: 1,
                });
            }
        }
    }
    ComponentSignature::new(blocks, edges, if rng.gen_bool(0.2) { 2 } else { 1 }).unwrap()
}

/// A literal component copied from a path in `graph` plus the direct edges
/// among the path's blocks. Returns `None` when the graph has no edges.
pub fn planted_component(rng: &mut impl Rng, graph: &BlockGraph) -> Option<ComponentSignature> {
    let with_out: Vec<usize> = (0..graph.len())
        .filter(|&b| graph.outgoing(b).next().is_some())
        .collect();
    let &start = with_out.choose(rng)?;
    let mut path = vec![start];
    while path.len() < 4 {
        let outs: Vec<usize> = graph.outgoing(*path.last().unwrap()).map(|e| e.dst).collect();
        match outs.choose(rng) {
            Some(&d) => path.push(d),
            None => break,
        }
    }
    let index: HashMap<usize, usize> = path.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let blocks = path
        .iter()
        .enumerate()
        .map(|(i, &b)| BlockPattern::new(i, literal(&graph.blocks()[b].op_types)))
        .collect();
    let mut edges = Vec::new();
    for &b in &path {
        for e in graph.outgoing(b) {
            if let Some(&j) = index.get(&e.dst) {
                edges.push(EdgePattern {
                    src: index[&b],
                    dst: j,
                    min_repeats: e.multiplicity,
                });
            }
        }
    }
    ComponentSignature::new(blocks, edges, 1).ok()
}

/// Every string over `alphabet` of length at most `max_len` that the pattern
/// repeated `r` times (for some allowed `r`) can produce.
pub fn pattern_language(pattern: &BlockPattern, alphabet: &[&str], max_len: usize) -> BTreeSet<Vec<String>> {
    let mut out = BTreeSet::new();
    for r in pattern.repeats.0..=pattern.repeats.1.min(max_len + 1) {
        let mut current: BTreeSet<Vec<String>> = BTreeSet::from([vec![]]);
        for _ in 0..r {
            for item in &pattern.ops {
                let mut next = BTreeSet::new();
                for s in &current {
                    match item {
                        OpPattern::Literal(l) => {
                            if s.len() < max_len {
                                let mut t = s.clone();
                                t.push(l.clone());
                                next.insert(t);
                            }
                        }
                        OpPattern::Alternation(options) => {
                            for o in options {
                                if s.len() < max_len {
                                    let mut t = s.clone();
                                    t.push(o.clone());
                                    next.insert(t);
                                }
                            }
                        }
                        OpPattern::AnyOne => {
                            for a in alphabet {
                                if s.len() < max_len {
                                    let mut t = s.clone();
                                    t.push(a.to_string());
                                    next.insert(t);
                                }
                            }
                        }
                        OpPattern::AnyMany => {
                            let mut frontier = vec![s.clone()];
                            while let Some(t) = frontier.pop() {
                                if next.insert(t.clone()) && t.len() < max_len {
                                    for a in alphabet {
                                        let mut u = t.clone();
                                        u.push(a.to_string());
                                        frontier.push(u);
                                    }
                                }
                            }
                        }
                    }
                }
                current = next;
            }
        }
        out.extend(current);
    }
    out
}
