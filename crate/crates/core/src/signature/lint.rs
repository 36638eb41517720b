use std::collections::HashMap;
use std::fmt;

use super::{ComponentSignature, FamilySignature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintFinding {
    pub severity: Severity,
    pub family: String,
    pub message: String,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.severity, self.family, self.message)
    }
}

/// Checks a parsed database for problems that parse-time validation allows.
pub fn lint_signatures(db: &[FamilySignature]) -> Vec<LintFinding> {
    let mut findings = Vec::new();
    let mut push = |severity, family: &str, message: String| {
        findings.push(LintFinding {
            severity,
            family: family.to_owned(),
            message,
        })
    };

    let mut first_seen: HashMap<&str, usize> = HashMap::new();
    for (i, family) in db.iter().enumerate() {
        if let Some(&j) = first_seen.get(family.name.as_str()) {
            push(
                Severity::Error,
                &family.name,
                format!("duplicate family name (entries {j} and {i})"),
            );
        } else {
            first_seen.insert(&family.name, i);
        }
    }

    let mut owners: HashMap<&ComponentSignature, (usize, usize)> = HashMap::new();
    for (i, family) in db.iter().enumerate() {
        for (c, component) in family.components.iter().enumerate() {
            match owners.get(component) {
                Some(&(j, d)) if j != i => push(
                    Severity::Warning,
                    &family.name,
                    format!(
                        "component {c} is identical to component {d} of '{}'; detections will be ambiguous",
                        db[j].name
                    ),
                ),
                Some(_) => {}
                None => {
                    owners.insert(component, (i, c));
                }
            }
        }
    }

    for family in db {
        for (c, component) in family.components.iter().enumerate() {
            for block in &component.blocks {
                if block.is_all_any_many() {
                    push(
                        Severity::Error,
                        &family.name,
                        format!(
                            "component {c} block {} matches every block; it is overly broad",
                            block.id
                        ),
                    );
                }
            }
            for block in unreachable(component) {
                push(
                    Severity::Error,
                    &family.name,
                    format!(
                        "component {c} block {block} is unreachable from start block {}",
                        component.start_id
                    ),
                );
            }
        }
    }
    findings
}

fn unreachable(c: &ComponentSignature) -> Vec<usize> {
    let mut reached = vec![false; c.blocks.len()];
    let mut stack = vec![c.start_id];
    while let Some(b) = stack.pop() {
        if b >= reached.len() || std::mem::replace(&mut reached[b], true) {
            continue;
        }
        stack.extend(c.outgoing(b).map(|e| e.dst));
    }
    (0..reached.len()).filter(|&b| !reached[b]).collect()
}
