//! Format-independent computational graph.
//!
//! Readers hand the constructor a flat list of [`RawOperation`]s that refer to
//! each other through produced/consumed value names. Construction resolves
//! those names into producer → consumer edges, synthesizes nodes for graph
//! inputs, graph outputs and initializers, and rejects cycles. A built
//! [`AgnosticGraph`] is immutable.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Operation type of synthetic nodes standing for graph-level inputs.
pub const INPUT_OP: &str = "Input";
/// Operation type of synthetic nodes standing for graph-level outputs.
pub const OUTPUT_OP: &str = "Output";
/// Operation type of synthetic nodes standing for initializers and other
/// unresolved constant sources.
pub const INITIALIZER_OP: &str = "Initializer";
/// The ONNX constant operator.
pub const CONSTANT_OP: &str = "Constant";

const INPUT_PREFIX: &str = "input:";
const OUTPUT_PREFIX: &str = "output:";
const INITIALIZER_PREFIX: &str = "initializer:";

/// Dense node index, `0..N` within one graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub op_type: String,
    pub inputs: Vec<NodeId>,
    pub outputs: Vec<NodeId>,
}

impl Node {
    pub fn is_synthetic(&self) -> bool {
        matches!(self.op_type.as_str(), INPUT_OP | OUTPUT_OP | INITIALIZER_OP)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub source: NodeId,
    pub destination: NodeId,
}

/// One operation as exposed by a model reader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawOperation {
    pub name: String,
    pub op_type: String,
    /// Consumed value names, in operand order. Empty strings denote omitted
    /// optional operands and are skipped.
    pub inputs: Vec<String>,
    /// Produced value names.
    pub outputs: Vec<String>,
}

impl RawOperation {
    pub fn new<I, O>(name: &str, op_type: &str, inputs: I, outputs: O) -> Self
    where
        I: IntoIterator,
        I::Item: Into<String>,
        O: IntoIterator,
        O::Item: Into<String>,
    {
        Self {
            name: name.to_owned(),
            op_type: op_type.to_owned(),
            inputs: inputs.into_iter().map(Into::into).collect(),
            outputs: outputs.into_iter().map(Into::into).collect(),
        }
    }
}

/// Graph-level declarations accompanying the operation list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Declarations {
    /// Value names fed into the graph from outside.
    pub inputs: Vec<String>,
    /// Value names the graph exposes.
    pub outputs: Vec<String>,
    /// Value names backed by stored tensors.
    pub initializers: Vec<String>,
    /// Reject values that resolve to nothing instead of synthesizing an
    /// initializer for them.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("duplicate node name '{0}'")]
    DuplicateName(String),
    #[error("value '{value}' is produced by both '{first}' and '{second}'")]
    DuplicateValue {
        value: String,
        first: String,
        second: String,
    },
    #[error("operation '{operation}' consumes unknown value '{value}'")]
    DanglingInput { operation: String, value: String },
    #[error("cycle detected: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("edge {from} -> {to} references a node outside the graph")]
    InvalidEdge { from: NodeId, to: NodeId },
}

/// Set of operation types treated as constants by blocking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstantOps(BTreeSet<String>);

impl ConstantOps {
    pub fn new<I, S>(ops: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(ops.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, op_type: &str) -> bool {
        self.0.contains(op_type)
    }

    pub fn insert(&mut self, op_type: impl Into<String>) {
        self.0.insert(op_type.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

impl Default for ConstantOps {
    fn default() -> Self {
        Self::new([CONSTANT_OP, INITIALIZER_OP])
    }
}

pub fn is_constant(node: &Node, constant_ops: &ConstantOps) -> bool {
    constant_ops.contains(&node.op_type)
}

/// Immutable dataflow DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgnosticGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    graph_inputs: Vec<NodeId>,
    graph_outputs: Vec<NodeId>,
    by_name: HashMap<String, NodeId>,
}

impl AgnosticGraph {
    /// Builds a graph from node labels and an edge list.
    ///
    /// Node `i` of `nodes` receives `NodeId(i)`. Duplicate edges are dropped;
    /// each node's `inputs`/`outputs` follow the order edges appear in.
    /// Graph inputs and outputs are the nodes typed [`INPUT_OP`] and
    /// [`OUTPUT_OP`].
    pub fn from_parts(nodes: Vec<(String, String)>, edges: impl IntoIterator<Item = Edge>) -> Result<Self, GraphError> {
        let mut by_name = HashMap::with_capacity(nodes.len());
        let mut built = Vec::with_capacity(nodes.len());
        for (i, (name, op_type)) in nodes.into_iter().enumerate() {
            if by_name.insert(name.clone(), NodeId(i)).is_some() {
                return Err(GraphError::DuplicateName(name));
            }
            built.push(Node {
                id: NodeId(i),
                name,
                op_type,
                inputs: Vec::new(),
                outputs: Vec::new(),
            });
        }

        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        for edge in edges {
            let (s, d) = (edge.source.0, edge.destination.0);
            if s >= built.len() || d >= built.len() {
                return Err(GraphError::InvalidEdge {
                    from: edge.source,
                    to: edge.destination,
                });
            }
            if s == d {
                return Err(GraphError::Cycle(vec![built[s].name.clone(), built[s].name.clone()]));
            }
            if seen.insert((s, d)) {
                built[s].outputs.push(edge.destination);
                built[d].inputs.push(edge.source);
                kept.push(edge);
            }
        }

        if let Some(cycle) = find_cycle(&built) {
            return Err(GraphError::Cycle(
                cycle.into_iter().map(|id| built[id.0].name.clone()).collect(),
            ));
        }

        let graph_inputs = built.iter().filter(|n| n.op_type == INPUT_OP).map(|n| n.id).collect();
        let graph_outputs = built.iter().filter(|n| n.op_type == OUTPUT_OP).map(|n| n.id).collect();
        Ok(Self {
            nodes: built,
            edges: kept,
            graph_inputs,
            graph_outputs,
            by_name,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn graph_inputs(&self) -> &[NodeId] {
        &self.graph_inputs
    }

    pub fn graph_outputs(&self) -> &[NodeId] {
        &self.graph_outputs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0)
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.get(id).ok_or(GraphError::UnknownNode(id))
    }

    pub fn node_by_name(&self, name: &str) -> Option<&Node> {
        self.by_name.get(name).map(|id| &self.nodes[id.0])
    }

    pub fn predecessors(&self, id: NodeId) -> Result<&[NodeId], GraphError> {
        self.node(id).map(|n| n.inputs.as_slice())
    }

    pub fn successors(&self, id: NodeId) -> Result<&[NodeId], GraphError> {
        self.node(id).map(|n| n.outputs.as_slice())
    }

    /// True when both graphs have the same node names with the same
    /// operation types and the same edges between those names.
    pub fn same_structure(&self, other: &AgnosticGraph) -> bool {
        if self.len() != other.len() || self.edges.len() != other.edges.len() {
            return false;
        }
        fn labels(g: &AgnosticGraph) -> HashMap<&str, &str> {
            g.nodes.iter().map(|n| (n.name.as_str(), n.op_type.as_str())).collect()
        }
        fn named_edges(g: &AgnosticGraph) -> HashSet<(&str, &str)> {
            g.edges
                .iter()
                .map(|e| {
                    (
                        g.nodes[e.source.0].name.as_str(),
                        g.nodes[e.destination.0].name.as_str(),
                    )
                })
                .collect()
        }
        labels(self) == labels(other) && named_edges(self) == named_edges(other)
    }
}

/// Name of the synthetic node standing for graph input `value`.
pub fn input_node_name(value: &str) -> String {
    format!("{INPUT_PREFIX}{value}")
}

/// Name of the synthetic node standing for graph output `value`.
pub fn output_node_name(value: &str) -> String {
    format!("{OUTPUT_PREFIX}{value}")
}

/// Name of the synthetic node standing for initializer `value`.
pub fn initializer_node_name(value: &str) -> String {
    format!("{INITIALIZER_PREFIX}{value}")
}

/// Value name a synthetic node stands for, or `None` for operation nodes.
pub fn synthetic_value_name(node: &Node) -> Option<&str> {
    let prefix = match node.op_type.as_str() {
        INPUT_OP => INPUT_PREFIX,
        OUTPUT_OP => OUTPUT_PREFIX,
        INITIALIZER_OP => INITIALIZER_PREFIX,
        _ => return None,
    };
    Some(node.name.strip_prefix(prefix).unwrap_or(&node.name))
}

/// Builds the graph for `operations`.
///
/// Value names resolve first against operation outputs, then against declared
/// initializers and graph inputs. Node ids are assigned as: graph inputs, then
/// operations in the order given, then initializers (declared ones followed by
/// ones synthesized for unresolved names), then graph outputs.
pub fn construct_agnostic_graph(operations: &[RawOperation], decl: &Declarations) -> Result<AgnosticGraph, GraphError> {
    let mut builder = Builder::default();
    let initializers: HashSet<&str> = decl.initializers.iter().map(String::as_str).collect();

    for value in &decl.inputs {
        // Older exporters list every initializer among the graph inputs too.
        if initializers.contains(value.as_str()) || builder.producer.contains_key(value) {
            continue;
        }
        let id = builder.push(input_node_name(value), INPUT_OP)?;
        builder.producer.insert(value.clone(), id);
    }

    let first_op = builder.labels.len();
    for op in operations {
        builder.push(op.name.clone(), &op.op_type)?;
    }
    for (i, op) in operations.iter().enumerate() {
        for value in op.outputs.iter().filter(|v| !v.is_empty()) {
            if let Some(&other) = builder.producer.get(value) {
                return Err(GraphError::DuplicateValue {
                    value: value.clone(),
                    first: builder.labels[other].0.clone(),
                    second: op.name.clone(),
                });
            }
            builder.producer.insert(value.clone(), first_op + i);
        }
    }

    for value in &decl.initializers {
        if let Some(&other) = builder.producer.get(value) {
            return Err(GraphError::DuplicateValue {
                value: value.clone(),
                first: builder.labels[other].0.clone(),
                second: initializer_node_name(value),
            });
        }
        let id = builder.push(initializer_node_name(value), INITIALIZER_OP)?;
        builder.producer.insert(value.clone(), id);
    }

    let mut edges = Vec::new();
    for (i, op) in operations.iter().enumerate() {
        for value in op.inputs.iter().filter(|v| !v.is_empty()) {
            let source = builder.resolve(value, &op.name, decl.strict)?;
            edges.push(Edge {
                source: NodeId(source),
                destination: NodeId(first_op + i),
            });
        }
    }

    let mut seen_outputs = HashSet::new();
    let mut sinks = Vec::new();
    for value in &decl.outputs {
        if !seen_outputs.insert(value.as_str()) {
            continue;
        }
        let name = output_node_name(value);
        let source = builder.resolve(value, &name, decl.strict)?;
        sinks.push((name, source));
    }
    for (name, source) in sinks {
        let sink = builder.push(name, OUTPUT_OP)?;
        edges.push(Edge {
            source: NodeId(source),
            destination: NodeId(sink),
        });
    }

    AgnosticGraph::from_parts(builder.labels, edges)
}

#[derive(Default)]
struct Builder {
    labels: Vec<(String, String)>,
    names: HashSet<String>,
    producer: HashMap<String, usize>,
}

impl Builder {
    fn push(&mut self, name: String, op_type: &str) -> Result<usize, GraphError> {
        if !self.names.insert(name.clone()) {
            return Err(GraphError::DuplicateName(name));
        }
        self.labels.push((name, op_type.to_owned()));
        Ok(self.labels.len() - 1)
    }

    /// Producer of `value`, synthesizing an initializer when lenient.
    fn resolve(&mut self, value: &str, consumer: &str, strict: bool) -> Result<usize, GraphError> {
        if let Some(&id) = self.producer.get(value) {
            return Ok(id);
        }
        if strict {
            return Err(GraphError::DanglingInput {
                operation: consumer.to_owned(),
                value: value.to_owned(),
            });
        }
        let id = self.push(initializer_node_name(value), INITIALIZER_OP)?;
        self.producer.insert(value.to_owned(), id);
        Ok(id)
    }
}

/// Returns one cycle as a closed node path, or `None` when acyclic.
fn find_cycle(nodes: &[Node]) -> Option<Vec<NodeId>> {
    let mut indegree: Vec<usize> = nodes.iter().map(|n| n.inputs.len()).collect();
    let mut ready: Vec<usize> = (0..nodes.len()).filter(|&i| indegree[i] == 0).collect();
    let mut done = 0;
    while let Some(u) = ready.pop() {
        done += 1;
        for v in &nodes[u].outputs {
            indegree[v.0] -= 1;
            if indegree[v.0] == 0 {
                ready.push(v.0);
            }
        }
    }
    if done == nodes.len() {
        return None;
    }

    // Every node left with a positive indegree has a predecessor that is also
    // left over, so walking predecessors must revisit a node.
    let start = (0..nodes.len()).find(|&i| indegree[i] > 0)?;
    let mut position = vec![usize::MAX; nodes.len()];
    let mut path = Vec::new();
    let mut current = start;
    while position[current] == usize::MAX {
        position[current] = path.len();
        path.push(current);
        current = nodes[current]
            .inputs
            .iter()
            .map(|p| p.0)
            .find(|&p| indegree[p] > 0)
            .expect("leftover node has a leftover predecessor");
    }
    let mut cycle: Vec<NodeId> = path[position[current]..].iter().rev().map(|&i| NodeId(i)).collect();
    cycle.push(cycle[0]);
    Some(cycle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn op(name: &str, op_type: &str, inputs: &[&str], outputs: &[&str]) -> RawOperation {
        RawOperation::new(name, op_type, inputs.iter().copied(), outputs.iter().copied())
    }

    fn diamond() -> Vec<RawOperation> {
        let preds: [&[usize]; 9] = [&[], &[1], &[2], &[3], &[3], &[4], &[5], &[6, 7], &[8]];
        preds
            .iter()
            .enumerate()
            .map(|(i, ps)| {
                let inputs: Vec<String> = ps.iter().map(|p| format!("t{p}")).collect();
                RawOperation::new(&(i + 1).to_string(), "Op", inputs, [format!("t{}", i + 1)])
            })
            .collect()
    }

    fn id(g: &AgnosticGraph, name: &str) -> NodeId {
        g.node_by_name(name).unwrap().id
    }

    #[test]
    fn linear_chain() {
        let ops = vec![
            op("A", "Relu", &[], &["a"]),
            op("B", "Relu", &["a"], &["b"]),
            op("C", "Relu", &["b"], &["c"]),
        ];
        let g = construct_agnostic_graph(&ops, &Declarations::default()).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.edges().len(), 2);
        let sources: Vec<_> = g.nodes().iter().filter(|n| n.inputs.is_empty()).collect();
        let sinks: Vec<_> = g.nodes().iter().filter(|n| n.outputs.is_empty()).collect();
        assert_eq!(sources.len(), 1);
        assert_eq!(sources[0].name, "A");
        assert_eq!(sinks.len(), 1);
        assert_eq!(sinks[0].name, "C");
    }

    #[test]
    fn diamond_shape() {
        let g = construct_agnostic_graph(&diamond(), &Declarations::default()).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.edges().len(), 9);
        assert_eq!(g.node(id(&g, "3")).unwrap().outputs.len(), 2);
        assert_eq!(g.node(id(&g, "8")).unwrap().inputs.len(), 2);
        let preds: Vec<&str> = g
            .predecessors(id(&g, "8"))
            .unwrap()
            .iter()
            .map(|p| g.nodes()[p.0].name.as_str())
            .collect();
        assert_eq!(preds, ["6", "7"]);
        assert!(g.predecessors(id(&g, "1")).unwrap().is_empty());
        assert_eq!(g.predecessors(NodeId(999)), Err(GraphError::UnknownNode(NodeId(999))));
    }

    #[test]
    fn duplicate_operation_names() {
        let ops = vec![op("conv", "Conv", &[], &["a"]), op("conv", "Conv", &["a"], &["b"])];
        let err = construct_agnostic_graph(&ops, &Declarations::default()).unwrap_err();
        assert_eq!(err, GraphError::DuplicateName("conv".into()));
    }

    #[test]
    fn duplicate_value_producers() {
        let ops = vec![op("a", "Relu", &[], &["x"]), op("b", "Relu", &[], &["x"])];
        let err = construct_agnostic_graph(&ops, &Declarations::default()).unwrap_err();
        assert!(matches!(err, GraphError::DuplicateValue { .. }));
    }

    #[test]
    fn dangling_inputs_strict_and_lenient() {
        let ops = vec![op("mul", "Mul", &["x", "w"], &["y"])];
        let strict = Declarations {
            inputs: vec!["x".into()],
            strict: true,
            ..Default::default()
        };
        let err = construct_agnostic_graph(&ops, &strict).unwrap_err();
        assert_eq!(
            err,
            GraphError::DanglingInput {
                operation: "mul".into(),
                value: "w".into()
            }
        );

        let lenient = Declarations {
            inputs: vec!["x".into()],
            ..Default::default()
        };
        let g = construct_agnostic_graph(&ops, &lenient).unwrap();
        let w = g.node_by_name("initializer:w").unwrap();
        assert_eq!(w.op_type, INITIALIZER_OP);
        assert!(is_constant(w, &ConstantOps::default()));
        assert_eq!(g.node_by_name("input:x").unwrap().op_type, INPUT_OP);
    }

    #[test]
    fn synthetic_nodes_and_id_order() {
        let ops = vec![
            op("conv", "Conv", &["X", "W"], &["c"]),
            op("relu", "Relu", &["c"], &["Y"]),
        ];
        let decl = Declarations {
            inputs: vec!["X".into(), "W".into()],
            outputs: vec!["Y".into()],
            initializers: vec!["W".into()],
            strict: true,
        };
        let g = construct_agnostic_graph(&ops, &decl).unwrap();
        let names: Vec<&str> = g.nodes().iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, ["input:X", "conv", "relu", "initializer:W", "output:Y"]);
        assert_eq!(g.graph_inputs(), &[NodeId(0)]);
        assert_eq!(g.graph_outputs(), &[NodeId(4)]);
        assert_eq!(synthetic_value_name(&g.nodes()[4]), Some("Y"));
        assert_eq!(synthetic_value_name(&g.nodes()[2]), None);
    }

    #[test]
    fn repeated_operand_yields_one_edge() {
        let ops = vec![op("a", "Relu", &[], &["x"]), op("sq", "Mul", &["x", "x"], &["y"])];
        let g = construct_agnostic_graph(&ops, &Declarations::default()).unwrap();
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.node(id(&g, "sq")).unwrap().inputs.len(), 1);
    }

    #[test]
    fn omitted_optional_operands_are_skipped() {
        let ops = vec![op("a", "Relu", &[], &["x"]), op("clip", "Clip", &["x", "", ""], &["y"])];
        let g = construct_agnostic_graph(
            &ops,
            &Declarations {
                strict: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn cycles_are_rejected() {
        let ops = vec![
            op("a", "Add", &["c"], &["a"]),
            op("b", "Relu", &["a"], &["b"]),
            op("c", "Relu", &["b"], &["c"]),
        ];
        match construct_agnostic_graph(&ops, &Declarations::default()) {
            Err(GraphError::Cycle(path)) => {
                assert_eq!(path.first(), path.last());
                assert_eq!(path.len(), 4);
            }
            other => panic!("expected cycle, got {other:?}"),
        }

        let self_loop = vec![op("a", "Add", &["a"], &["a"])];
        assert!(matches!(
            construct_agnostic_graph(&self_loop, &Declarations::default()),
            Err(GraphError::Cycle(_))
        ));
    }

    #[test]
    fn constant_classification() {
        let node = |op: &str| Node {
            id: NodeId(0),
            name: "n".into(),
            op_type: op.into(),
            inputs: vec![],
            outputs: vec![],
        };
        let consts = ConstantOps::default();
        assert!(is_constant(&node("Constant"), &consts));
        assert!(is_constant(&node("Initializer"), &consts));
        assert!(!is_constant(&node("ConstantOfShape"), &consts));
        assert!(!is_constant(&node("Mul"), &consts));
    }

    #[test]
    fn adjacency_is_symmetric() {
        let g = construct_agnostic_graph(&diamond(), &Declarations::default()).unwrap();
        for e in g.edges() {
            assert!(g.nodes()[e.source.0].outputs.contains(&e.destination));
            assert!(g.nodes()[e.destination.0].inputs.contains(&e.source));
        }
        let adjacency: usize = g.nodes().iter().map(|n| n.outputs.len()).sum();
        assert_eq!(adjacency, g.edges().len());
    }
}
