//! Partitioning of an agnostic graph into linear-execution blocks.
//!
//! Two non-constant nodes `u -> v` belong to the same block when `u` has
//! exactly one output and `v` has exactly one non-constant input. Blocks are
//! the maximal chains of such links; constant nodes never join a block.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::graph::{is_constant, AgnosticGraph, ConstantOps, Node, NodeId, INPUT_OP};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub id: usize,
    pub node_ids: Vec<NodeId>,
    pub op_types: Vec<String>,
}

impl Block {
    pub fn initial(&self) -> NodeId {
        self.node_ids[0]
    }

    pub fn terminal(&self) -> NodeId {
        self.node_ids[self.node_ids.len() - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockEdge {
    pub src: usize,
    pub dst: usize,
    /// Number of graph edges between the two blocks' boundary nodes.
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockGraph {
    blocks: Vec<Block>,
    edges: Vec<BlockEdge>,
    outgoing: Vec<Vec<usize>>,
    node_to_block: HashMap<NodeId, usize>,
    isolated: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockGraphError {
    #[error("block {0} has no operations")]
    EmptyBlock(usize),
    #[error("edge {src} -> {dst} references a missing block")]
    UnknownBlock { src: usize, dst: usize },
    #[error("edge {0} -> {0} is a self-loop")]
    SelfLoop(usize),
    #[error("edge {src} -> {dst} has zero multiplicity")]
    ZeroMultiplicity { src: usize, dst: usize },
    #[error("block graph contains a cycle")]
    Cycle,
}

impl BlockGraph {
    fn new(blocks: Vec<Block>, edges: Vec<BlockEdge>, isolated: Vec<NodeId>) -> Self {
        let mut outgoing = vec![Vec::new(); blocks.len()];
        for (i, e) in edges.iter().enumerate() {
            outgoing[e.src].push(i);
        }
        let node_to_block = blocks
            .iter()
            .flat_map(|b| b.node_ids.iter().map(move |&n| (n, b.id)))
            .collect();
        Self {
            blocks,
            edges,
            outgoing,
            node_to_block,
            isolated,
        }
    }

    /// Builds a block graph directly from op sequences and weighted edges
    /// `(src, dst, multiplicity)`. Node ids are assigned consecutively so the
    /// result looks like an extracted graph. Parallel edges are merged by
    /// summing their multiplicities.
    pub fn from_op_sequences(
        sequences: Vec<Vec<String>>,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self, BlockGraphError> {
        let mut next = 0;
        let mut blocks = Vec::with_capacity(sequences.len());
        for (id, op_types) in sequences.into_iter().enumerate() {
            if op_types.is_empty() {
                return Err(BlockGraphError::EmptyBlock(id));
            }
            let node_ids = (next..next + op_types.len()).map(NodeId).collect();
            next += op_types.len();
            blocks.push(Block { id, node_ids, op_types });
        }
        let mut merged: Vec<BlockEdge> = Vec::new();
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        for &(src, dst, multiplicity) in edges {
            if src >= blocks.len() || dst >= blocks.len() {
                return Err(BlockGraphError::UnknownBlock { src, dst });
            }
            if src == dst {
                return Err(BlockGraphError::SelfLoop(src));
            }
            if multiplicity == 0 {
                return Err(BlockGraphError::ZeroMultiplicity { src, dst });
            }
            match index.get(&(src, dst)) {
                Some(&i) => merged[i].multiplicity += multiplicity,
                None => {
                    index.insert((src, dst), merged.len());
                    merged.push(BlockEdge { src, dst, multiplicity });
                }
            }
        }
        let graph = Self::new(blocks, merged, Vec::new());
        if graph.has_cycle() {
            return Err(BlockGraphError::Cycle);
        }
        Ok(graph)
    }

    fn has_cycle(&self) -> bool {
        let mut indegree = vec![0usize; self.blocks.len()];
        for e in &self.edges {
            indegree[e.dst] += 1;
        }
        let mut ready: Vec<usize> = (0..self.blocks.len()).filter(|&b| indegree[b] == 0).collect();
        let mut seen = 0;
        while let Some(b) = ready.pop() {
            seen += 1;
            for &e in &self.outgoing[b] {
                let d = self.edges[e].dst;
                indegree[d] -= 1;
                if indegree[d] == 0 {
                    ready.push(d);
                }
            }
        }
        seen != self.blocks.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn edges(&self) -> &[BlockEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn outgoing(&self, block: usize) -> impl Iterator<Item = &BlockEdge> {
        self.outgoing[block].iter().map(move |&i| &self.edges[i])
    }

    pub fn block_of(&self, node: NodeId) -> Option<usize> {
        self.node_to_block.get(&node).copied()
    }

    /// Non-constant nodes with no edges at all; they form no block.
    pub fn isolated(&self) -> &[NodeId] {
        &self.isolated
    }
}

/// Block node sequences seen so far.
#[derive(Debug, Default)]
pub struct BlockSignatures(HashSet<Vec<NodeId>>);

impl BlockSignatures {
    pub fn new() -> Self {
        Self::default()
    }
}

/// True if `block` is empty or was already recorded; otherwise records it.
pub fn contains_block(seen: &mut BlockSignatures, block: &[NodeId]) -> bool {
    if block.is_empty() {
        return true;
    }
    !seen.0.insert(block.to_vec())
}

/// Number of inputs of `node` that are not constants.
pub fn number_of_inputs(node: &Node, graph: &AgnosticGraph, constant_ops: &ConstantOps) -> usize {
    node.inputs
        .iter()
        .filter(|&&p| !is_constant(&graph.nodes()[p.0], constant_ops))
        .count()
}

pub fn extract_blocks(graph: &AgnosticGraph, constant_ops: &ConstantOps) -> BlockGraph {
    let nodes = graph.nodes();
    let constant: Vec<bool> = nodes.iter().map(|n| is_constant(n, constant_ops)).collect();
    let nc_inputs: Vec<usize> = nodes
        .iter()
        .map(|n| n.inputs.iter().filter(|p| !constant[p.0]).count())
        .collect();

    // The unique successor `u` links to, if any.
    let link = |u: usize| -> Option<usize> {
        if constant[u] {
            return None;
        }
        match nodes[u].outputs.as_slice() {
            [v] if !constant[v.0] && nc_inputs[v.0] == 1 => Some(v.0),
            _ => None,
        }
    };
    // The unique predecessor linking to `v`, if any.
    let linked_from = |v: usize| -> Option<usize> {
        if constant[v] || nc_inputs[v] != 1 {
            return None;
        }
        let p = nodes[v].inputs.iter().find(|p| !constant[p.0])?.0;
        (nodes[p].outputs.len() == 1).then_some(p)
    };

    let mut visited = vec![false; nodes.len()];
    let mut seen = BlockSignatures::new();
    let mut blocks: Vec<Block> = Vec::new();
    let mut isolated = Vec::new();

    let mut dfs = |start: usize, visited: &mut Vec<bool>, blocks: &mut Vec<Block>| {
        let mut stack = vec![start];
        while let Some(head) = stack.pop() {
            if visited[head] {
                continue;
            }
            let node = &nodes[head];
            if node.inputs.is_empty() && node.outputs.is_empty() {
                visited[head] = true;
                isolated.push(node.id);
                continue;
            }
            let mut chain = vec![NodeId(head)];
            visited[head] = true;
            let mut current = head;
            while let Some(next) = link(current) {
                if visited[next] {
                    break;
                }
                visited[next] = true;
                chain.push(NodeId(next));
                current = next;
            }
            for s in nodes[current].outputs.iter().rev() {
                if !constant[s.0] && !visited[s.0] {
                    stack.push(s.0);
                }
            }
            if !contains_block(&mut seen, &chain) {
                let op_types = chain.iter().map(|n| nodes[n.0].op_type.clone()).collect();
                blocks.push(Block {
                    id: blocks.len(),
                    node_ids: chain,
                    op_types,
                });
            }
        }
    };

    for node in nodes {
        let i = node.id.0;
        let is_root = !constant[i] && (nc_inputs[i] == 0 || node.op_type == INPUT_OP);
        if is_root && !visited[i] {
            dfs(i, &mut visited, &mut blocks);
        }
    }
    for i in 0..nodes.len() {
        if constant[i] || visited[i] {
            continue;
        }
        let mut head = i;
        while let Some(p) = linked_from(head) {
            if visited[p] {
                break;
            }
            head = p;
        }
        dfs(head, &mut visited, &mut blocks);
    }

    let mut block_of = vec![usize::MAX; nodes.len()];
    for b in &blocks {
        for n in &b.node_ids {
            block_of[n.0] = b.id;
        }
    }
    let mut edges: Vec<BlockEdge> = Vec::new();
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    for b in &blocks {
        for s in &nodes[b.terminal().0].outputs {
            let dst = block_of[s.0];
            if dst == usize::MAX || nodes[s.0].id != blocks[dst].initial() {
                continue;
            }
            match index.get(&(b.id, dst)) {
                Some(&i) => edges[i].multiplicity += 1,
                None => {
                    index.insert((b.id, dst), edges.len());
                    edges.push(BlockEdge {
                        src: b.id,
                        dst,
                        multiplicity: 1,
                    });
                }
            }
        }
    }

    BlockGraph::new(blocks, edges, isolated)
}
