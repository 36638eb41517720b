//! Graphviz export of block graphs.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::blocking::BlockGraph;

const PALETTE: &[&str] = &[
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5",
];

fn escape_record(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '{' | '}' | '|' | '<' | '>' | '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn escape_string(text: &str) -> String {
    text.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Renders `blocks` as a digraph with one record node per block and edges
/// labelled by multiplicity. Blocks listed in `highlights` are filled with a
/// color per family; the first family listed for a block wins.
pub fn block_graph_to_dot(blocks: &BlockGraph, highlights: &BTreeMap<usize, Vec<String>>) -> String {
    let mut families: Vec<&str> = highlights.values().flatten().map(String::as_str).collect();
    families.sort_unstable();
    families.dedup();
    let color = |family: &str| {
        let i = families.iter().position(|f| *f == family).unwrap_or(0);
        PALETTE[i % PALETTE.len()]
    };

    let mut out = String::from("digraph blocks {\n  node [shape=record, fontname=\"Helvetica\"];\n");
    for block in blocks.blocks() {
        let ops: Vec<String> = block.op_types.iter().map(|op| escape_record(op)).collect();
        let _ = write!(
            out,
            "  b{} [label=\"{{block {}|{}\\l}}\"",
            block.id,
            block.id,
            ops.join("\\l")
        );
        if let Some(names) = highlights.get(&block.id).filter(|n| !n.is_empty()) {
            let _ = write!(
                out,
                ", style=filled, fillcolor=\"{}\", tooltip=\"{}\"",
                color(&names[0]),
                escape_string(&names.join(", "))
            );
        }
        out.push_str("];\n");
    }
    for edge in blocks.edges() {
        let _ = writeln!(
            out,
            "  b{} -> b{} [label=\"{}\"];",
            edge.src, edge.dst, edge.multiplicity
        );
    }
    out.push_str("}\n");
    out
}
