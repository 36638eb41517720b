//! JSON graph interchange format.
//!
//! ```json
//! {"nodes":[{"name":"a","op":"Mul","inputs":["x","c"],"outputs":["y"]}],
//!  "inputs":["x"],"outputs":["y"],"initializers":["c"],"opset":17}
//! ```

use std::collections::{HashMap, HashSet};

use serde_json::{json, Map, Value};

use crate::graph::{synthetic_value_name, AgnosticGraph, RawOperation, INITIALIZER_OP, INPUT_OP, OUTPUT_OP};

use super::{IngestError, ParsedModel};

fn invalid(path: impl Into<String>, message: impl Into<String>) -> IngestError {
    IngestError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn object<'a>(value: &'a Value, path: &str, allowed: &[&str]) -> Result<&'a Map<String, Value>, IngestError> {
    let map = value.as_object().ok_or_else(|| invalid(path, "expected an object"))?;
    if let Some(key) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
        let at = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        return Err(invalid(at, "unknown field"));
    }
    Ok(map)
}

fn required<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, IngestError> {
    map.get(key).ok_or_else(|| invalid(join(path, key), "missing field"))
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_owned()
    } else {
        format!("{path}.{key}")
    }
}

fn string(value: &Value, path: &str) -> Result<String, IngestError> {
    value
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| invalid(path, "expected a string"))
}

fn strings(value: &Value, path: &str) -> Result<Vec<String>, IngestError> {
    value
        .as_array()
        .ok_or_else(|| invalid(path, "expected an array of strings"))?
        .iter()
        .enumerate()
        .map(|(i, v)| string(v, &format!("{path}[{i}]")))
        .collect()
}

pub fn read_json_graph(payload: &[u8]) -> Result<ParsedModel, IngestError> {
    let root: Value = serde_json::from_slice(payload).map_err(|e| IngestError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let top = object(&root, "", &["nodes", "inputs", "outputs", "initializers", "opset"])?;

    let nodes = required(top, "nodes", "")?
        .as_array()
        .ok_or_else(|| invalid("nodes", "expected an array"))?;
    let mut operations = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let path = format!("nodes[{i}]");
        let map = object(node, &path, &["name", "op", "inputs", "outputs"])?;
        operations.push(RawOperation {
            name: string(required(map, "name", &path)?, &join(&path, "name"))?,
            op_type: string(required(map, "op", &path)?, &join(&path, "op"))?,
            inputs: strings(required(map, "inputs", &path)?, &join(&path, "inputs"))?,
            outputs: strings(required(map, "outputs", &path)?, &join(&path, "outputs"))?,
        });
    }

    let opset_version = match top.get("opset") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_i64().ok_or_else(|| invalid("opset", "expected an integer"))?),
    };

    let parsed = ParsedModel {
        operations,
        input_names: strings(required(top, "inputs", "")?, "inputs")?,
        output_names: strings(required(top, "outputs", "")?, "outputs")?,
        initializer_names: strings(required(top, "initializers", "")?, "initializers")?,
        opset_version,
        warnings: Vec::new(),
    };

    let mut produced = HashMap::new();
    for op in &parsed.operations {
        for out in &op.outputs {
            produced.insert(out.as_str(), op.name.as_str());
        }
    }
    for (i, name) in parsed.initializer_names.iter().enumerate() {
        if let Some(op) = produced.get(name.as_str()) {
            return Err(invalid(
                format!("initializers[{i}]"),
                format!("'{name}' is also produced by node '{op}'"),
            ));
        }
    }
    Ok(parsed)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot express node '{node}' in the interchange format: {reason}")]
pub struct ExportError {
    pub node: String,
    pub reason: String,
}

/// Serializes `graph` to the interchange format.
///
/// The agnostic graph keeps no tensor names for operation nodes, so each
/// operation produces one value named after the node (or the graph outputs it
/// feeds). Synthetic nodes map back to the declarations they came from.
pub fn export_json_graph(graph: &AgnosticGraph, opset: Option<i64>) -> Result<Value, ExportError> {
    let nodes = graph.nodes();
    let mut taken: HashSet<String> = HashSet::new();
    let mut values: Vec<Vec<String>> = vec![Vec::new(); nodes.len()];

    // Declared names are fixed; claim them first.
    for node in nodes {
        match node.op_type.as_str() {
            INPUT_OP | INITIALIZER_OP => {
                let v = synthetic_value_name(node).unwrap_or_default().to_owned();
                taken.insert(v.clone());
                values[node.id.0] = vec![v];
            }
            OUTPUT_OP => {
                taken.insert(synthetic_value_name(node).unwrap_or_default().to_owned());
            }
            _ => {}
        }
    }
    for node in nodes.iter().filter(|n| n.op_type == OUTPUT_OP) {
        let value = synthetic_value_name(node).unwrap_or_default().to_owned();
        let [producer] = node.inputs.as_slice() else {
            return Err(ExportError {
                node: node.name.clone(),
                reason: format!("output node has {} producers, expected 1", node.inputs.len()),
            });
        };
        let p = &nodes[producer.0];
        if matches!(p.op_type.as_str(), INPUT_OP | INITIALIZER_OP) {
            if values[p.id.0][0] != value {
                return Err(ExportError {
                    node: node.name.clone(),
                    reason: format!("fed directly by '{}' under another value name", p.name),
                });
            }
        } else if p.op_type == OUTPUT_OP {
            return Err(ExportError {
                node: node.name.clone(),
                reason: "fed by another output node".into(),
            });
        } else {
            values[p.id.0].push(value);
        }
    }
    for node in nodes {
        if node.is_synthetic() || !values[node.id.0].is_empty() || node.outputs.is_empty() {
            continue;
        }
        let mut candidate = node.name.clone();
        let mut k = 1;
        while taken.contains(&candidate) {
            candidate = format!("{}#{k}", node.name);
            k += 1;
        }
        taken.insert(candidate.clone());
        values[node.id.0].push(candidate);
    }

    let mut out_nodes = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut initializers = Vec::new();
    for node in nodes {
        if node.op_type != OUTPUT_OP {
            if let Some(n) = node.outputs.iter().find(|s| nodes[s.0].op_type == INPUT_OP) {
                return Err(ExportError {
                    node: nodes[n.0].name.clone(),
                    reason: "input node has a producer".into(),
                });
            }
        }
        match node.op_type.as_str() {
            INPUT_OP => inputs.push(values[node.id.0][0].clone()),
            INITIALIZER_OP => initializers.push(values[node.id.0][0].clone()),
            OUTPUT_OP => outputs.push(synthetic_value_name(node).unwrap_or_default().to_owned()),
            _ => {
                let consumed: Vec<&str> = node
                    .inputs
                    .iter()
                    .map(|p| values[p.0].first().map(String::as_str).unwrap_or_default())
                    .collect();
                out_nodes.push(json!({
                    "name": node.name,
                    "op": node.op_type,
                    "inputs": consumed,
                    "outputs": values[node.id.0],
                }));
            }
        }
    }
    let mut doc = json!({
        "nodes": out_nodes,
        "inputs": inputs,
        "outputs": outputs,
        "initializers": initializers,
    });
    if let Some(v) = opset {
        doc["opset"] = json!(v);
    }
    Ok(doc)
}
