//! Decoder for the subset of the ONNX protobuf schema the engine needs.
//!
//! Only node names, operation types, value names, graph inputs/outputs,
//! initializer names and the default-domain opset are read. Everything else
//! is skipped by wire type without being buffered.

use std::collections::HashSet;

use crate::graph::RawOperation;

use super::{IngestError, ParsedModel};

const WIRE_VARINT: u8 = 0;
const WIRE_FIXED64: u8 = 1;
const WIRE_LEN: u8 = 2;
const WIRE_FIXED32: u8 = 5;

mod field {
    pub const MODEL_GRAPH: u32 = 7;
    pub const MODEL_OPSET_IMPORT: u32 = 8;

    pub const OPSET_DOMAIN: u32 = 1;
    pub const OPSET_VERSION: u32 = 2;

    pub const GRAPH_NODE: u32 = 1;
    pub const GRAPH_INITIALIZER: u32 = 5;
    pub const GRAPH_INPUT: u32 = 11;
    pub const GRAPH_OUTPUT: u32 = 12;
    pub const GRAPH_SPARSE_INITIALIZER: u32 = 15;

    pub const NODE_INPUT: u32 = 1;
    pub const NODE_OUTPUT: u32 = 2;
    pub const NODE_NAME: u32 = 3;
    pub const NODE_OP_TYPE: u32 = 4;
    pub const NODE_ATTRIBUTE: u32 = 5;

    pub const ATTRIBUTE_NAME: u32 = 1;
    pub const ATTRIBUTE_GRAPH: u32 = 6;
    pub const ATTRIBUTE_GRAPHS: u32 = 11;

    pub const TENSOR_NAME: u32 = 8;
    pub const SPARSE_TENSOR_VALUES: u32 = 1;
    pub const VALUE_INFO_NAME: u32 = 1;
}

/// Cursor over one protobuf message. `base` is the absolute offset of
/// `buf[0]` in the original payload so errors point into the file.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

enum Value<'a> {
    Varint(u64),
    Bytes(Reader<'a>),
    Fixed,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0, base: 0 }
    }

    fn offset(&self) -> usize {
        self.base + self.pos
    }

    fn error(&self, at: usize, message: impl Into<String>) -> IngestError {
        IngestError::Decode {
            offset: at,
            message: message.into(),
        }
    }

    fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn varint(&mut self) -> Result<u64, IngestError> {
        let start = self.offset();
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let Some(&byte) = self.buf.get(self.pos) else {
                return Err(self.error(start, "truncated varint"));
            };
            self.pos += 1;
            if shift == 63 && byte > 1 {
                return Err(self.error(start, "varint overflows 64 bits"));
            }
            value |= u64::from(byte & 0x7f) << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(self.error(start, "varint longer than 10 bytes"))
    }

    fn take(&mut self, n: usize, start: usize) -> Result<&'a [u8], IngestError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| self.error(start, format!("field length {n} runs past end of message")))?;
        let bytes = &self.buf[self.pos..end];
        self.pos = end;
        Ok(bytes)
    }

    /// Next `(field number, value, field start offset)`, or `None` at end.
    fn next(&mut self) -> Result<Option<(u32, Value<'a>, usize)>, IngestError> {
        if self.at_end() {
            return Ok(None);
        }
        let start = self.offset();
        let key = self.varint()?;
        let wire = (key & 0x7) as u8;
        let number = key >> 3;
        if number == 0 || number > u64::from(u32::MAX >> 3) {
            return Err(self.error(start, format!("invalid field number {number}")));
        }
        let value = match wire {
            WIRE_VARINT => Value::Varint(self.varint()?),
            WIRE_FIXED64 => {
                self.take(8, start)?;
                Value::Fixed
            }
            WIRE_FIXED32 => {
                self.take(4, start)?;
                Value::Fixed
            }
            WIRE_LEN => {
                let len = self.varint()?;
                let len = usize::try_from(len).map_err(|_| self.error(start, "length-delimited field too large"))?;
                let base = self.offset();
                let buf = self.take(len, start)?;
                Value::Bytes(Reader { buf, pos: 0, base })
            }
            other => return Err(self.error(start, format!("unsupported wire type {other}"))),
        };
        Ok(Some((number as u32, value, start)))
    }
}

fn expect_bytes<'a>(value: Value<'a>, at: usize, what: &str) -> Result<Reader<'a>, IngestError> {
    match value {
        Value::Bytes(r) => Ok(r),
        _ => Err(IngestError::Decode {
            offset: at,
            message: format!("{what} has wrong wire type"),
        }),
    }
}

fn expect_string(value: Value<'_>, at: usize, what: &str) -> Result<String, IngestError> {
    let r = expect_bytes(value, at, what)?;
    std::str::from_utf8(r.buf)
        .map(str::to_owned)
        .map_err(|_| IngestError::Decode {
            offset: r.base,
            message: format!("{what} is not valid UTF-8"),
        })
}

/// Reads the `name` string field of a nested message, ignoring the rest.
fn name_field(mut r: Reader<'_>, number: u32, what: &str) -> Result<String, IngestError> {
    let mut name = String::new();
    while let Some((n, value, at)) = r.next()? {
        if n == number {
            name = expect_string(value, at, what)?;
        }
    }
    Ok(name)
}

pub fn read_onnx(payload: &[u8]) -> Result<ParsedModel, IngestError> {
    if payload.is_empty() {
        return Err(IngestError::Decode {
            offset: 0,
            message: "empty payload".into(),
        });
    }
    let mut model = Reader::new(payload);
    let mut graph = None;
    let mut opset_version = None;
    while let Some((number, value, at)) = model.next()? {
        match number {
            field::MODEL_GRAPH => graph = Some(expect_bytes(value, at, "ModelProto.graph")?),
            field::MODEL_OPSET_IMPORT => {
                let mut r = expect_bytes(value, at, "ModelProto.opset_import")?;
                let mut domain = String::new();
                let mut version = None;
                while let Some((n, v, at)) = r.next()? {
                    match (n, v) {
                        (field::OPSET_DOMAIN, v) => domain = expect_string(v, at, "OperatorSetId.domain")?,
                        (field::OPSET_VERSION, Value::Varint(x)) => version = Some(x as i64),
                        (field::OPSET_VERSION, _) => {
                            return Err(IngestError::Decode {
                                offset: at,
                                message: "OperatorSetId.version has wrong wire type".into(),
                            })
                        }
                        _ => {}
                    }
                }
                if domain.is_empty() || domain == "ai.onnx" {
                    opset_version = version.or(opset_version);
                }
            }
            _ => {}
        }
    }
    let graph = graph.ok_or(IngestError::MissingGraph)?;
    let mut parsed = read_graph(graph)?;
    parsed.opset_version = opset_version;
    Ok(parsed)
}

fn read_graph(mut r: Reader<'_>) -> Result<ParsedModel, IngestError> {
    let mut parsed = ParsedModel::default();
    let mut declared_inputs = Vec::new();
    let mut initializers = Vec::new();
    while let Some((number, value, at)) = r.next()? {
        match number {
            field::GRAPH_NODE => {
                let node = expect_bytes(value, at, "GraphProto.node")?;
                let index = parsed.operations.len();
                let op = read_node(node, index, &mut parsed.warnings)?;
                parsed.operations.push(op);
            }
            field::GRAPH_INITIALIZER => {
                let t = expect_bytes(value, at, "GraphProto.initializer")?;
                initializers.push(name_field(t, field::TENSOR_NAME, "TensorProto.name")?);
            }
            field::GRAPH_SPARSE_INITIALIZER => {
                let mut s = expect_bytes(value, at, "GraphProto.sparse_initializer")?;
                while let Some((n, v, at)) = s.next()? {
                    if n == field::SPARSE_TENSOR_VALUES {
                        let t = expect_bytes(v, at, "SparseTensorProto.values")?;
                        initializers.push(name_field(t, field::TENSOR_NAME, "TensorProto.name")?);
                    }
                }
            }
            field::GRAPH_INPUT => {
                let v = expect_bytes(value, at, "GraphProto.input")?;
                declared_inputs.push(name_field(v, field::VALUE_INFO_NAME, "ValueInfoProto.name")?);
            }
            field::GRAPH_OUTPUT => {
                let v = expect_bytes(value, at, "GraphProto.output")?;
                parsed
                    .output_names
                    .push(name_field(v, field::VALUE_INFO_NAME, "ValueInfoProto.name")?);
            }
            _ => {}
        }
    }

    let initializer_set: HashSet<&str> = initializers.iter().map(String::as_str).collect();
    parsed.input_names = declared_inputs
        .into_iter()
        .filter(|name| !initializer_set.contains(name.as_str()))
        .collect();
    parsed.initializer_names = initializers;
    Ok(parsed)
}

fn read_node(mut r: Reader<'_>, index: usize, warnings: &mut Vec<String>) -> Result<RawOperation, IngestError> {
    let mut op = RawOperation {
        name: String::new(),
        op_type: String::new(),
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let mut subgraph_attributes = Vec::new();
    while let Some((number, value, at)) = r.next()? {
        match number {
            field::NODE_INPUT => op.inputs.push(expect_string(value, at, "NodeProto.input")?),
            field::NODE_OUTPUT => op.outputs.push(expect_string(value, at, "NodeProto.output")?),
            field::NODE_NAME => op.name = expect_string(value, at, "NodeProto.name")?,
            field::NODE_OP_TYPE => op.op_type = expect_string(value, at, "NodeProto.op_type")?,
            field::NODE_ATTRIBUTE => {
                let mut a = expect_bytes(value, at, "NodeProto.attribute")?;
                let mut name = String::new();
                let mut has_graph = false;
                while let Some((n, v, at)) = a.next()? {
                    match n {
                        field::ATTRIBUTE_NAME => name = expect_string(v, at, "AttributeProto.name")?,
                        field::ATTRIBUTE_GRAPH | field::ATTRIBUTE_GRAPHS => has_graph = true,
                        _ => {}
                    }
                }
                if has_graph {
                    subgraph_attributes.push(name);
                }
            }
            _ => {}
        }
    }
    if op.name.is_empty() {
        op.name = format!("{}_{index}", op.op_type);
    }
    for attribute in subgraph_attributes {
        warnings.push(format!(
            "node '{}' ({}) carries subgraph attribute '{attribute}'; inner graph ignored",
            op.name, op.op_type
        ));
    }
    Ok(op)
}

/// Cheap structural check used for format sniffing: the payload must decode
/// as a message whose every top-level field is well formed and which carries
/// a graph.
pub(crate) fn looks_like_model(payload: &[u8]) -> bool {
    let mut r = Reader::new(payload);
    let mut has_graph = false;
    loop {
        match r.next() {
            Ok(Some((field::MODEL_GRAPH, Value::Bytes(_), _))) => has_graph = true,
            Ok(Some(_)) => {}
            Ok(None) => return has_graph,
            Err(_) => return false,
        }
    }
}
