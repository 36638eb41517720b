//! Model genealogy scanning.
//!
//! Model files are lifted into an [`AgnosticGraph`], partitioned into linear
//! blocks, and matched against a database of declarative block-graph
//! signatures to name the architecture family a model descends from.

pub mod blocking;
pub mod canonicalize;
pub mod dot;
pub mod graph;
pub mod ingest;
pub mod matcher;
pub mod signature;

pub use blocking::{extract_blocks, Block, BlockEdge, BlockGraph};
pub use canonicalize::{apply_rules, default_rules, parse_rules, RewriteRule};
pub use graph::{
    construct_agnostic_graph, AgnosticGraph, ConstantOps, Declarations, Edge, GraphError, Node, NodeId, RawOperation,
};
pub use ingest::{load_model, LoadError, LoadedModel, ModelFormat, ModelSource, ParsedModel};
pub use matcher::{check_signature, scan, Detection, ScanMode, ScanOptions, ScanReport};
pub use signature::{parse_signatures, BlockPattern, ComponentSignature, EdgePattern, FamilySignature, OpPattern};
