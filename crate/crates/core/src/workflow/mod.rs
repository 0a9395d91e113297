//! Workflow model: functions, named data flows between them, and the derived
//! per-node views the engines schedule from.
//!
//! A workflow is a DAG. Functions are triggered by data availability, not by
//! a central sequencer: an edge says "when `data_name` from `source` is
//! complete at a destination's node, that destination may run". Terminals have
//! no outgoing edges and emit the end signal carrying their output.

mod parse;
mod place;
mod project;
mod transform;
mod validate;

pub mod oracle;

pub use parse::parse_workflow;
pub use place::{plan_placement, Placement, PlacementError, PlacementPolicy};
pub use project::{project_local_graph, LocalDataFlowGraph, PlacedDestination, PlacedFlow};
pub use transform::{switch_index, Transform};
pub use validate::{validate, Finding};

use std::collections::{BTreeMap, BTreeSet};

use crate::units::Nanos;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowDefinition {
    pub name: String,
    functions: Vec<FunctionSpec>,
    flows: Vec<FlowEdge>,
    entry: String,
    terminals: Vec<String>,
    index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    pub name: String,
    pub memory_mb: u64,
    pub compute: ComputeModel,
    /// Data names this function waits for, in bundle order.
    pub declared_inputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComputeModel {
    pub transform: Transform,
    /// CPU-milliseconds per MiB of input.
    pub per_mib_cpu_ms: f64,
    /// Fixed CPU-milliseconds per invocation.
    pub base_cpu_ms: f64,
    /// Fraction of the execution at which outputs are emitted, in (0, 1].
    pub emit_at: f64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        ComputeModel {
            transform: Transform::Concat,
            per_mib_cpu_ms: 0.0,
            base_cpu_ms: 0.0,
            emit_at: 1.0,
        }
    }
}

impl ComputeModel {
    /// Simulated wall time for `input_bytes` on a container of `memory_mb`.
    /// Cores scale with memory (0.1 core per 128 MB), so wall time is
    /// cpu-time / cores.
    pub fn exec_nanos(&self, input_bytes: u64, memory_mb: u64) -> Nanos {
        let cpu_ms = self.base_cpu_ms + self.per_mib_cpu_ms * (input_bytes as f64 / (1 << 20) as f64);
        let wall_ns = cpu_ms * 1e6 / cpu_cores(memory_mb);
        wall_ns.round() as Nanos
    }
}

/// Fractional cores allocated to a container: 0.1 per 128 MB.
pub fn cpu_cores(memory_mb: u64) -> f64 {
    0.1 * memory_mb as f64 / 128.0
}

/// Egress bandwidth allocated to a container: 40 Mbps per 128 MB.
pub fn bandwidth_bps(memory_mb: u64) -> u64 {
    40_000_000 * memory_mb / 128
}

/// One named data flow. Unconditional edges deliver the payload to every
/// destination; a switch edge carries label routing and delivers to exactly
/// one destination per invocation, chosen from the payload.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEdge {
    pub source: String,
    pub data_name: String,
    pub destinations: Vec<String>,
    /// Label per destination, present only on switch edges; sorted by label.
    pub switch_labels: Option<Vec<String>>,
}

impl FlowEdge {
    pub fn is_switch(&self) -> bool {
        self.switch_labels.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkflowError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("duplicate function {name}")]
    DuplicateFunction { name: String },
    #[error("function {function} sends {data_name} to unknown destination {destination}")]
    UnknownDestination {
        function: String,
        data_name: String,
        destination: String,
    },
    #[error("cycle detected: {}", cycle.join(" -> "))]
    CycleDetected { cycle: Vec<String> },
    #[error("no entry function declared")]
    NoEntry,
    #[error("no terminal functions declared")]
    NoTerminal,
    #[error("{message}")]
    Semantic { message: String },
}

fn semantic(message: impl Into<String>) -> WorkflowError {
    WorkflowError::Semantic {
        message: message.into(),
    }
}

impl WorkflowDefinition {
    pub fn builder(name: impl Into<String>) -> WorkflowBuilder {
        WorkflowBuilder {
            name: name.into(),
            functions: Vec::new(),
            flows: Vec::new(),
            entry: None,
            terminals: Vec::new(),
        }
    }

    pub fn functions(&self) -> &[FunctionSpec] {
        &self.functions
    }

    pub fn flows(&self) -> &[FlowEdge] {
        &self.flows
    }

    pub fn entry(&self) -> &str {
        &self.entry
    }

    pub fn terminals(&self) -> &[String] {
        &self.terminals
    }

    pub fn is_terminal(&self, name: &str) -> bool {
        self.terminals.iter().any(|t| t == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.index.get(name).map(|&i| &self.functions[i])
    }

    pub fn outgoing<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a FlowEdge> + 'a {
        self.flows.iter().filter(move |f| f.source == name)
    }

    pub fn incoming<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a FlowEdge> + 'a {
        self.flows
            .iter()
            .filter(move |f| f.destinations.iter().any(|d| d == name))
    }

    /// Entry inputs with no feeding edge; the request payload is staged under
    /// these names at submit.
    pub fn external_inputs(&self) -> Vec<String> {
        let fed: BTreeSet<&str> = self
            .incoming(&self.entry)
            .map(|f| f.data_name.as_str())
            .collect();
        self.function(&self.entry)
            .map(|f| {
                f.declared_inputs
                    .iter()
                    .filter(|d| !fed.contains(d.as_str()))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Functions in a stable topological order (Kahn's algorithm, declaration
    /// order among ready candidates). The builder guarantees acyclicity.
    pub fn topo_order(&self) -> Vec<&str> {
        let mut indegree: BTreeMap<&str, usize> =
            self.functions.iter().map(|f| (f.name.as_str(), 0)).collect();
        for flow in &self.flows {
            for dst in &flow.destinations {
                *indegree.get_mut(dst.as_str()).unwrap() += 1;
            }
        }
        let mut order = Vec::with_capacity(self.functions.len());
        let mut ready: Vec<&str> = self
            .functions
            .iter()
            .map(|f| f.name.as_str())
            .filter(|n| indegree[n] == 0)
            .collect();
        while let Some(n) = ready.first().copied() {
            ready.remove(0);
            order.push(n);
            for flow in self.flows.iter().filter(|f| f.source == n) {
                for dst in &flow.destinations {
                    let d = indegree.get_mut(dst.as_str()).unwrap();
                    *d -= 1;
                    if *d == 0 {
                        // Preserve declaration order among newly ready nodes.
                        let pos = self.index[dst.as_str()];
                        let at = ready
                            .iter()
                            .position(|r| self.index[*r] > pos)
                            .unwrap_or(ready.len());
                        ready.insert(at, dst.as_str());
                    }
                }
            }
        }
        order
    }
}

pub struct WorkflowBuilder {
    name: String,
    functions: Vec<FunctionSpec>,
    flows: Vec<FlowEdge>,
    entry: Option<String>,
    terminals: Vec<String>,
}

impl WorkflowBuilder {
    pub fn function(mut self, spec: FunctionSpec) -> Self {
        self.functions.push(spec);
        self
    }

    pub fn flow(
        mut self,
        source: impl Into<String>,
        data_name: impl Into<String>,
        destinations: &[&str],
    ) -> Self {
        self.flows.push(FlowEdge {
            source: source.into(),
            data_name: data_name.into(),
            destinations: destinations.iter().map(|s| s.to_string()).collect(),
            switch_labels: None,
        });
        self
    }

    /// Conditional edge; `arms` are (label, destination) pairs.
    pub fn switch(
        mut self,
        source: impl Into<String>,
        data_name: impl Into<String>,
        arms: &[(&str, &str)],
    ) -> Self {
        let mut sorted: Vec<(String, String)> = arms
            .iter()
            .map(|(l, d)| (l.to_string(), d.to_string()))
            .collect();
        sorted.sort();
        self.flows.push(FlowEdge {
            source: source.into(),
            data_name: data_name.into(),
            destinations: sorted.iter().map(|(_, d)| d.clone()).collect(),
            switch_labels: Some(sorted.into_iter().map(|(l, _)| l).collect()),
        });
        self
    }

    pub fn entry(mut self, name: impl Into<String>) -> Self {
        self.entry = Some(name.into());
        self
    }

    pub fn terminal(mut self, name: impl Into<String>) -> Self {
        self.terminals.push(name.into());
        self
    }

    pub fn build(self) -> Result<WorkflowDefinition, WorkflowError> {
        let mut index = BTreeMap::new();
        for (i, f) in self.functions.iter().enumerate() {
            if index.insert(f.name.clone(), i).is_some() {
                return Err(WorkflowError::DuplicateFunction {
                    name: f.name.clone(),
                });
            }
            if !(f.compute.emit_at > 0.0 && f.compute.emit_at <= 1.0) {
                return Err(semantic(format!(
                    "function {}: emit_at must be in (0, 1], got {}",
                    f.name, f.compute.emit_at
                )));
            }
            if f.memory_mb == 0 {
                return Err(semantic(format!("function {}: memory_mb must be positive", f.name)));
            }
        }
        let entry = self.entry.ok_or(WorkflowError::NoEntry)?;
        if !index.contains_key(&entry) {
            return Err(semantic(format!("entry {entry} is not a declared function")));
        }
        if self.terminals.is_empty() {
            return Err(WorkflowError::NoTerminal);
        }
        for t in &self.terminals {
            if !index.contains_key(t) {
                return Err(semantic(format!("terminal {t} is not a declared function")));
            }
        }
        let mut seen_source_data = BTreeSet::new();
        let mut seen_dest_data = BTreeSet::new();
        for flow in &self.flows {
            if !index.contains_key(&flow.source) {
                return Err(semantic(format!(
                    "flow {} emitted by unknown function {}",
                    flow.data_name, flow.source
                )));
            }
            if flow.destinations.is_empty() {
                return Err(semantic(format!(
                    "flow {} from {} has no destinations",
                    flow.data_name, flow.source
                )));
            }
            // A data name routes either by fan-out or by switch, never both,
            // and only once per source.
            if !seen_source_data.insert((flow.source.clone(), flow.data_name.clone())) {
                return Err(semantic(format!(
                    "function {} routes {} more than once (fan-out and switch are exclusive)",
                    flow.source, flow.data_name
                )));
            }
            if let Some(labels) = &flow.switch_labels {
                if labels.len() != flow.destinations.len() {
                    return Err(semantic(format!(
                        "switch on {} from {}: {} labels for {} destinations",
                        flow.data_name,
                        flow.source,
                        labels.len(),
                        flow.destinations.len()
                    )));
                }
            }
            for dst in &flow.destinations {
                if !index.contains_key(dst) {
                    return Err(WorkflowError::UnknownDestination {
                        function: flow.source.clone(),
                        data_name: flow.data_name.clone(),
                        destination: dst.clone(),
                    });
                }
                if !seen_dest_data.insert((dst.clone(), flow.data_name.clone())) {
                    return Err(semantic(format!(
                        "destination {dst} receives {} from more than one edge",
                        flow.data_name
                    )));
                }
            }
        }
        let def = WorkflowDefinition {
            name: self.name,
            functions: self.functions,
            flows: self.flows,
            entry,
            terminals: self.terminals,
            index,
        };
        // Cycles first: a cyclic graph usually also trips the terminal rule,
        // and the cycle is the actionable diagnosis.
        if let Some(cycle) = find_cycle(&def) {
            return Err(WorkflowError::CycleDetected { cycle });
        }
        for flow in def.flows() {
            if def.terminals.contains(&flow.source) {
                return Err(semantic(format!(
                    "terminal {} has an outgoing edge ({})",
                    flow.source, flow.data_name
                )));
            }
        }
        Ok(def)
    }
}

/// DFS cycle search returning the offending path, if any.
fn find_cycle(def: &WorkflowDefinition) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut marks: BTreeMap<&str, Mark> = def
        .functions
        .iter()
        .map(|f| (f.name.as_str(), Mark::New))
        .collect();

    fn visit<'a>(
        def: &'a WorkflowDefinition,
        node: &'a str,
        marks: &mut BTreeMap<&'a str, Mark>,
        path: &mut Vec<&'a str>,
    ) -> Option<Vec<String>> {
        marks.insert(node, Mark::Open);
        path.push(node);
        for flow in def.outgoing(node) {
            for dst in &flow.destinations {
                match marks[dst.as_str()] {
                    Mark::Open => {
                        let from = path.iter().position(|p| *p == dst).unwrap_or(0);
                        let mut cycle: Vec<String> =
                            path[from..].iter().map(|s| s.to_string()).collect();
                        cycle.push(dst.clone());
                        return Some(cycle);
                    }
                    Mark::New => {
                        if let Some(c) = visit(def, dst, marks, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
        }
        path.pop();
        marks.insert(node, Mark::Done);
        None
    }

    let names: Vec<&str> = def.functions.iter().map(|f| f.name.as_str()).collect();
    for name in names {
        if marks[name] == Mark::New {
            if let Some(c) = visit(def, name, &mut marks, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Convenience constructor used by builtins and tests.
pub fn function(name: &str, memory_mb: u64, compute: ComputeModel, inputs: &[&str]) -> FunctionSpec {
    FunctionSpec {
        name: name.to_string(),
        memory_mb,
        compute,
        declared_inputs: inputs.iter().map(|s| s.to_string()).collect(),
    }
}
