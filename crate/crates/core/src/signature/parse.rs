//! Signature JSON parsing, validation and canonical serialization.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{BlockPattern, ComponentSignature, EdgePattern, FamilySignature, OpPattern};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SignatureError {
    #[error("invalid JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SignatureError {
    SignatureError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

/// Top-level object as an ordered list of entries, duplicates kept.
struct Entries(Vec<(String, Value)>);

impl<'de> serde::Deserialize<'de> for Entries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EntriesVisitor;
        impl<'de> Visitor<'de> for EntriesVisitor {
            type Value = Entries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object keyed by family name")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    entries.push((k, v));
                }
                Ok(Entries(entries))
            }
        }
        deserializer.deserialize_map(EntriesVisitor)
    }
}

fn json_error(e: serde_json::Error) -> SignatureError {
    SignatureError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a signature database. Family order and duplicate names are kept
/// so that lint can report them.
pub fn parse_signatures(payload: &[u8]) -> Result<Vec<FamilySignature>, SignatureError> {
    let mut de = serde_json::Deserializer::from_slice(payload);
    let entries: Entries = serde::Deserialize::deserialize(&mut de).map_err(json_error)?;
    de.end().map_err(json_error)?;
    entries
        .0
        .into_iter()
        .map(|(name, value)| parse_family(name, &value))
        .collect()
}

fn parse_family(name: String, value: &Value) -> Result<FamilySignature, SignatureError> {
    let map = value.as_object().ok_or_else(|| invalid(&name, "expected an object"))?;
    let metadata = map.get("metadata").filter(|v| !v.is_null()).cloned();
    let components = if let Some(list) = map.get("components") {
        check_keys(map, &name, &["components", "metadata"])?;
        let path = format!("{name}.components");
        let list = list.as_array().ok_or_else(|| invalid(&path, "expected an array"))?;
        if list.is_empty() {
            return Err(invalid(&path, "at least one component is required"));
        }
        list.iter()
            .enumerate()
            .map(|(i, c)| parse_component_value(c, &format!("{path}[{i}]"), &[]).map(|(c, _)| c))
            .collect::<Result<_, _>>()?
    } else {
        vec![parse_component_value(value, &name, &["metadata"])?.0]
    };
    Ok(FamilySignature {
        name,
        components,
        metadata,
    })
}

fn check_keys(map: &Map<String, Value>, path: &str, allowed: &[&str]) -> Result<(), SignatureError> {
    match map.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(invalid(format!("{path}.{k}"), "unknown field")),
        None => Ok(()),
    }
}

fn field<'a>(map: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value, SignatureError> {
    map.get(key)
        .ok_or_else(|| invalid(format!("{path}.{key}"), "missing field"))
}

fn count(value: &Value, path: &str) -> Result<usize, SignatureError> {
    value
        .as_u64()
        .and_then(|v| usize::try_from(v).ok())
        .ok_or_else(|| invalid(path, "expected a non-negative integer"))
}

fn positive(value: &Value, path: &str) -> Result<usize, SignatureError> {
    match count(value, path)? {
        0 => Err(invalid(path, "must be at least 1")),
        n => Ok(n),
    }
}

/// Parses one component object at `path`. Keys listed in `extra` are allowed
/// and returned untouched for the caller.
pub fn parse_component_value(
    value: &Value,
    path: &str,
    extra: &[&str],
) -> Result<(ComponentSignature, Map<String, Value>), SignatureError> {
    let map = value.as_object().ok_or_else(|| invalid(path, "expected an object"))?;
    let mut allowed = vec!["blocks", "edges", "min_repeats"];
    allowed.extend_from_slice(extra);
    check_keys(map, path, &allowed)?;

    let blocks_path = format!("{path}.blocks");
    let blocks = field(map, "blocks", path)?
        .as_array()
        .ok_or_else(|| invalid(&blocks_path, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, b)| parse_block(b, &format!("{blocks_path}[{i}]")))
        .collect::<Result<Vec<_>, _>>()?;
    if blocks.is_empty() {
        return Err(invalid(&blocks_path, "at least one block is required"));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.id != i {
            return Err(invalid(
                format!("{blocks_path}[{i}].id"),
                format!("block ids must be 0..{} in order, found {}", blocks.len(), b.id),
            ));
        }
    }

    let edges_path = format!("{path}.edges");
    let edges = field(map, "edges", path)?
        .as_array()
        .ok_or_else(|| invalid(&edges_path, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, e)| parse_edge(e, &format!("{edges_path}[{i}]"), blocks.len()))
        .collect::<Result<Vec<_>, _>>()?;

    let min_repeats = positive(field(map, "min_repeats", path)?, &format!("{path}.min_repeats"))?;
    let (start_id, end_id) = validate_topology(&blocks, &edges, min_repeats).map_err(|(sub, message)| {
        invalid(
            if sub.is_empty() {
                path.to_owned()
            } else {
                format!("{path}.{sub}")
            },
            message,
        )
    })?;

    let rest = map
        .iter()
        .filter(|(k, _)| extra.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    Ok((
        ComponentSignature {
            blocks,
            edges,
            min_repeats,
            start_id,
            end_id,
        },
        rest,
    ))
}

fn parse_block(value: &Value, path: &str) -> Result<BlockPattern, SignatureError> {
    let map = value.as_object().ok_or_else(|| invalid(path, "expected an object"))?;
    check_keys(map, path, &["id", "ops", "ignored_ops", "repeats"])?;
    let id = count(field(map, "id", path)?, &format!("{path}.id"))?;

    let ops_path = format!("{path}.ops");
    let ops = field(map, "ops", path)?
        .as_array()
        .ok_or_else(|| invalid(&ops_path, "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, op)| {
            let at = format!("{ops_path}[{i}]");
            let text = op.as_str().ok_or_else(|| invalid(&at, "expected a string"))?;
            OpPattern::parse(text).map_err(|m| invalid(&at, m))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ops.is_empty() {
        return Err(invalid(&ops_path, "at least one operation pattern is required"));
    }

    let mut ignored_ops = BTreeSet::new();
    match map.get("ignored_ops") {
        None | Some(Value::Null) => {}
        Some(Value::Array(items)) => {
            for (i, item) in items.iter().enumerate() {
                match item {
                    Value::Null => {}
                    Value::String(s) if !s.is_empty() => {
                        ignored_ops.insert(s.clone());
                    }
                    _ => {
                        return Err(invalid(
                            format!("{path}.ignored_ops[{i}]"),
                            "expected an operation name or null",
                        ))
                    }
                }
            }
        }
        Some(_) => return Err(invalid(format!("{path}.ignored_ops"), "expected an array")),
    }

    let repeats_path = format!("{path}.repeats");
    let repeats = match field(map, "repeats", path)?.as_array().map(Vec::as_slice) {
        Some([lo, hi]) => (
            positive(lo, &format!("{repeats_path}[0]"))?,
            count(hi, &format!("{repeats_path}[1]"))?,
        ),
        _ => return Err(invalid(&repeats_path, "expected [min, max]")),
    };
    if repeats.1 < repeats.0 {
        return Err(invalid(
            &repeats_path,
            format!("max {} is below min {}", repeats.1, repeats.0),
        ));
    }

    Ok(BlockPattern {
        id,
        ops,
        ignored_ops,
        repeats,
    })
}

fn parse_edge(value: &Value, path: &str, blocks: usize) -> Result<EdgePattern, SignatureError> {
    let map = value.as_object().ok_or_else(|| invalid(path, "expected an object"))?;
    check_keys(map, path, &["src", "dst", "min_repeats"])?;
    let endpoint = |key: &str| -> Result<usize, SignatureError> {
        let at = format!("{path}.{key}");
        let id = count(field(map, key, path)?, &at)?;
        if id >= blocks {
            return Err(invalid(at, format!("unknown block id {id}")));
        }
        Ok(id)
    };
    let src = endpoint("src")?;
    let dst = endpoint("dst")?;
    let min_repeats = positive(field(map, "min_repeats", path)?, &format!("{path}.min_repeats"))?;
    Ok(EdgePattern { src, dst, min_repeats })
}

/// Checks the component graph and returns its `(start, end)` pattern ids.
/// Errors carry a path relative to the component.
pub(super) fn validate_topology(
    blocks: &[BlockPattern],
    edges: &[EdgePattern],
    min_repeats: usize,
) -> Result<(usize, usize), (String, String)> {
    let n = blocks.len();
    if n == 0 {
        return Err(("blocks".into(), "at least one block is required".into()));
    }
    if min_repeats == 0 {
        return Err(("min_repeats".into(), "must be at least 1".into()));
    }
    for (i, b) in blocks.iter().enumerate() {
        if b.id != i {
            return Err((format!("blocks[{i}].id"), format!("expected id {i}")));
        }
        if b.ops.is_empty() {
            return Err((
                format!("blocks[{i}].ops"),
                "at least one operation pattern is required".into(),
            ));
        }
        if b.repeats.0 == 0 || b.repeats.1 < b.repeats.0 {
            return Err((format!("blocks[{i}].repeats"), "expected 1 <= min <= max".into()));
        }
    }
    let mut seen = HashSet::new();
    let mut indegree = vec![0; n];
    let mut outdegree = vec![0; n];
    for (i, e) in edges.iter().enumerate() {
        if e.src >= n || e.dst >= n {
            return Err((format!("edges[{i}]"), "unknown block id".into()));
        }
        if e.src == e.dst {
            return Err((format!("edges[{i}]"), format!("self-loop on block {}", e.src)));
        }
        if e.min_repeats == 0 {
            return Err((format!("edges[{i}].min_repeats"), "must be at least 1".into()));
        }
        if !seen.insert((e.src, e.dst)) {
            return Err((format!("edges[{i}]"), format!("duplicate edge {} -> {}", e.src, e.dst)));
        }
        indegree[e.dst] += 1;
        outdegree[e.src] += 1;
    }

    // Weak connectivity via union-find.
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for e in edges {
        let (a, b) = (root(&mut parent, e.src), root(&mut parent, e.dst));
        parent[a] = b;
    }
    let r0 = root(&mut parent, 0);
    if let Some(lost) = (1..n).find(|&i| root(&mut parent, i) != r0) {
        return Err((String::new(), format!("block {lost} is not connected to block 0")));
    }

    // Acyclicity.
    let mut remaining = indegree.clone();
    let mut ready: Vec<usize> = (0..n).filter(|&i| remaining[i] == 0).collect();
    let mut ordered = 0;
    while let Some(u) = ready.pop() {
        ordered += 1;
        for e in edges.iter().filter(|e| e.src == u) {
            remaining[e.dst] -= 1;
            if remaining[e.dst] == 0 {
                ready.push(e.dst);
            }
        }
    }
    if ordered != n {
        return Err((String::new(), "edges form a cycle".into()));
    }

    let sources: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let sinks: Vec<usize> = (0..n).filter(|&i| outdegree[i] == 0).collect();
    match (sources.as_slice(), sinks.as_slice()) {
        ([s], [t]) => Ok((*s, *t)),
        ([_], _) => Err((
            String::new(),
            format!("expected exactly one sink block, found {sinks:?}"),
        )),
        _ => Err((
            String::new(),
            format!("expected exactly one source block, found {sources:?}"),
        )),
    }
}

fn component_to_json(c: &ComponentSignature) -> Map<String, Value> {
    let blocks: Vec<Value> = c
        .blocks
        .iter()
        .map(|b| {
            json!({
                "id": b.id,
                "ops": b.ops.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "ignored_ops": b.ignored_ops.iter().collect::<Vec<_>>(),
                "repeats": [b.repeats.0, b.repeats.1],
            })
        })
        .collect();
    let edges: Vec<Value> = c
        .edges
        .iter()
        .map(|e| json!({"src": e.src, "dst": e.dst, "min_repeats": e.min_repeats}))
        .collect();
    let mut map = Map::new();
    map.insert("blocks".into(), Value::Array(blocks));
    map.insert("edges".into(), Value::Array(edges));
    map.insert("min_repeats".into(), json!(c.min_repeats));
    map
}

/// Canonical JSON for a database. Single-component families use the bare
/// component form; others use the `components` wrapper.
pub fn to_canonical_json(db: &[FamilySignature]) -> Value {
    let mut top = Map::new();
    for family in db {
        let mut entry = if family.components.len() == 1 {
            component_to_json(&family.components[0])
        } else {
            let mut m = Map::new();
            m.insert(
                "components".into(),
                Value::Array(
                    family
                        .components
                        .iter()
                        .map(|c| Value::Object(component_to_json(c)))
                        .collect(),
                ),
            );
            m
        };
        if let Some(meta) = &family.metadata {
            entry.insert("metadata".into(), meta.clone());
        }
        top.insert(family.name.clone(), Value::Object(entry));
    }
    Value::Object(top)
}
