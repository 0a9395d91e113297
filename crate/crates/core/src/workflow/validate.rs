//! Whole-graph semantic checks beyond the builder's structural invariants.
//! Findings are values, not errors: `validate` returns everything it can see
//! so a document author fixes one round, not one message per round.

use std::collections::BTreeSet;
use std::fmt;

use super::WorkflowDefinition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub function: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.function, self.message)
    }
}

pub fn validate(def: &WorkflowDefinition) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut add = |function: &str, message: String| {
        findings.push(Finding {
            function: function.to_string(),
            message,
        })
    };

    // Reachability from the entry.
    let mut reachable = BTreeSet::new();
    let mut stack = vec![def.entry()];
    while let Some(n) = stack.pop() {
        if !reachable.insert(n.to_string()) {
            continue;
        }
        for flow in def.outgoing(n) {
            for d in &flow.destinations {
                stack.push(d);
            }
        }
    }

    for f in def.functions() {
        let is_entry = f.name == def.entry();
        if !reachable.contains(&f.name) {
            add(&f.name, "unreachable from the entry function".into());
        }
        if f.declared_inputs.is_empty() {
            add(&f.name, "declares no inputs and can never be triggered".into());
        }
        // Every declared input needs a feeding edge; the entry's first unfed
        // input is the external request payload.
        let fed: BTreeSet<&str> = def.incoming(&f.name).map(|e| e.data_name.as_str()).collect();
        let mut external_budget = if is_entry { 1 } else { 0 };
        for input in &f.declared_inputs {
            if !fed.contains(input.as_str()) {
                if external_budget > 0 {
                    external_budget -= 1;
                } else {
                    add(
                        &f.name,
                        format!("declared input {input} is never produced by any edge"),
                    );
                }
            }
        }
        // Data arriving that the destination never declared would sit in the
        // sink until the TTL reaps it.
        for edge in def.incoming(&f.name) {
            if !f.declared_inputs.contains(&edge.data_name) {
                add(
                    &f.name,
                    format!(
                        "receives {} from {} but does not declare it as an input",
                        edge.data_name, edge.source
                    ),
                );
            }
        }
        // Every non-terminal must send something or the flow dies here.
        if !def.is_terminal(&f.name) && def.outgoing(&f.name).next().is_none() {
            add(&f.name, "is not a terminal but has no outgoing flows".into());
        }
    }
    findings
}
