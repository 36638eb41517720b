//! Model file readers.
//!
//! Each reader turns a payload into a [`ParsedModel`]; [`load_model`] then
//! builds the agnostic graph. Nothing outside this module knows about
//! serialization formats.

mod json;
mod onnx;

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::graph::{construct_agnostic_graph, AgnosticGraph, Declarations, GraphError, RawOperation};

pub use json::{export_json_graph, read_json_graph, ExportError};
pub use onnx::read_onnx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFormat {
    Onnx,
    JsonGraph,
}

impl fmt::Display for ModelFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFormat::Onnx => "onnx",
            ModelFormat::JsonGraph => "json",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IngestError {
    #[error("malformed protobuf at byte {offset}: {message}")]
    Decode { offset: usize, message: String },
    #[error("model has no graph")]
    MissingGraph,
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("unrecognized model format")]
    UnknownFormat,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// An error tagged with the model it came from.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{origin}: {kind}")]
pub struct LoadError {
    pub origin: String,
    pub kind: IngestError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSource {
    pub format: ModelFormat,
    pub payload: Vec<u8>,
    pub origin: String,
}

impl ModelSource {
    /// Detects the format from `payload` and wraps it.
    pub fn from_bytes(payload: Vec<u8>, origin: impl Into<String>) -> Result<Self, LoadError> {
        let origin = origin.into();
        match detect(&payload) {
            Some(format) => Ok(Self {
                format,
                payload,
                origin,
            }),
            None => Err(LoadError {
                origin,
                kind: IngestError::UnknownFormat,
            }),
        }
    }

    /// Reads `path`. The extension picks the format when it is `.onnx` or
    /// `.json`; otherwise the payload is sniffed.
    pub fn from_path(path: &Path) -> std::io::Result<Result<Self, LoadError>> {
        let payload = std::fs::read(path)?;
        let origin = path.display().to_string();
        let by_extension = match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("onnx") => Some(ModelFormat::Onnx),
            Some(e) if e.eq_ignore_ascii_case("json") => Some(ModelFormat::JsonGraph),
            _ => None,
        };
        Ok(match by_extension {
            Some(format) => Ok(Self {
                format,
                payload,
                origin,
            }),
            None => Self::from_bytes(payload, origin),
        })
    }
}

/// Guesses the format of `payload`: a leading `{` means JSON, a payload that
/// decodes as a protobuf message carrying a graph means ONNX.
pub fn detect(payload: &[u8]) -> Option<ModelFormat> {
    let first = payload.iter().find(|b| !b.is_ascii_whitespace());
    if first == Some(&b'{') {
        return Some(ModelFormat::JsonGraph);
    }
    onnx::looks_like_model(payload).then_some(ModelFormat::Onnx)
}

/// Reader output: operations plus graph-level declarations.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedModel {
    pub operations: Vec<RawOperation>,
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub initializer_names: Vec<String>,
    pub opset_version: Option<i64>,
    pub warnings: Vec<String>,
}

impl ParsedModel {
    pub fn declarations(&self, strict: bool) -> Declarations {
        Declarations {
            inputs: self.input_names.clone(),
            outputs: self.output_names.clone(),
            initializers: self.initializer_names.clone(),
            strict,
        }
    }

    pub fn into_graph(&self, strict: bool) -> Result<AgnosticGraph, GraphError> {
        construct_agnostic_graph(&self.operations, &self.declarations(strict))
    }
}

pub fn parse(format: ModelFormat, payload: &[u8]) -> Result<ParsedModel, IngestError> {
    match format {
        ModelFormat::Onnx => read_onnx(payload),
        ModelFormat::JsonGraph => read_json_graph(payload),
    }
}

#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub graph: AgnosticGraph,
    pub opset_version: Option<i64>,
    pub warnings: Vec<String>,
}

/// Parses `source` and builds its agnostic graph. Dangling value names become
/// synthetic initializers unless `strict` is set.
pub fn load_model(source: &ModelSource, strict: bool) -> Result<LoadedModel, LoadError> {
    let tag = |kind| LoadError {
        origin: source.origin.clone(),
        kind,
    };
    let parsed = parse(source.format, &source.payload).map_err(tag)?;
    let graph = parsed.into_graph(strict).map_err(|e| tag(IngestError::Graph(e)))?;
    Ok(LoadedModel {
        graph,
        opset_version: parsed.opset_version,
        warnings: parsed.warnings,
    })
}
