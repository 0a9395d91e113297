//! Function-to-node assignment. Placement is decided once per run; engines
//! never migrate running work.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::WorkflowDefinition;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlacementPolicy {
    /// Functions in declaration order onto nodes in cluster order, cycling.
    RoundRobin,
    /// Everything on the first node.
    SingleNode,
    /// Caller-provided map; must cover every function.
    Explicit(BTreeMap<String, String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    assignments: BTreeMap<String, String>,
}

impl Placement {
    pub fn node_of(&self, function: &str) -> &str {
        &self.assignments[function]
    }

    pub fn get(&self, function: &str) -> Option<&str> {
        self.assignments.get(function).map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignments.iter().map(|(f, n)| (f.as_str(), n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlacementError {
    #[error("cannot place onto an empty cluster")]
    EmptyCluster,
    #[error("function {function} pinned to unknown node {node}")]
    UnknownNode { function: String, node: String },
    #[error("function {function} has no node assignment")]
    UnplacedFunction { function: String },
    #[error("placement names unknown function {function}")]
    UnknownFunction { function: String },
}

pub fn plan_placement(
    def: &WorkflowDefinition,
    nodes: &[String],
    policy: &PlacementPolicy,
) -> Result<Placement, PlacementError> {
    if nodes.is_empty() {
        return Err(PlacementError::EmptyCluster);
    }
    let mut assignments = BTreeMap::new();
    match policy {
        PlacementPolicy::RoundRobin => {
            for (i, f) in def.functions().iter().enumerate() {
                assignments.insert(f.name.clone(), nodes[i % nodes.len()].clone());
            }
        }
        PlacementPolicy::SingleNode => {
            for f in def.functions() {
                assignments.insert(f.name.clone(), nodes[0].clone());
            }
        }
        PlacementPolicy::Explicit(map) => {
            for function in map.keys() {
                if def.function(function).is_none() {
                    return Err(PlacementError::UnknownFunction {
                        function: function.clone(),
                    });
                }
            }
            for f in def.functions() {
                let node = map.get(&f.name).ok_or_else(|| PlacementError::UnplacedFunction {
                    function: f.name.clone(),
                })?;
                if !nodes.contains(node) {
                    return Err(PlacementError::UnknownNode {
                        function: f.name.clone(),
                        node: node.clone(),
                    });
                }
                assignments.insert(f.name.clone(), node.clone());
            }
        }
    }
    Ok(Placement { assignments })
}
