//! Ready-made clusters, a catalog of example workflows, and side-by-side
//! comparison of the two engines.
//!
//! A [`Scenario`] bundles a workflow, a cluster, a placement, and a load
//! pattern, and can run either engine over them. [`compare`] digests two runs
//! of the same workload into a [`ComparisonReport`] where every ratio reads
//! "how many times better the data-flow engine did", so > 1.0 favors it.

use serde::Serialize;

use crate::sim::{baseline, dataflow, ClockMode, FaultPlan, NodeSpec, Pattern, RunMetrics, RunSetup, RuntimeTuning};
use crate::units::{KIB, MIB};
use crate::workflow::{
    function, plan_placement, ComputeModel, Placement, PlacementError, PlacementPolicy, Transform,
    WorkflowDefinition, WorkflowError,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cluster config: {0}")]
    Cluster(String),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error("unknown workflow {0:?} (builtins: wc[:fan], chain[:stages:bytes], switch3[:bytes], diamond[:bytes], pipe)")]
    UnknownBuiltin(String),
    #[error("cannot compare runs of different workloads ({left:?} vs {right:?})")]
    MismatchedWorkloads { left: String, right: String },
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ClusterConfig {
    pub nodes: Vec<NodeSpec>,
    #[serde(default = "default_clock")]
    pub clock: ClockMode,
}

fn default_clock() -> ClockMode {
    ClockMode::Virtual
}

impl ClusterConfig {
    pub fn node_names(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }
}

/// Three identical workers; enough to spread any catalog workflow around.
pub fn default_cluster() -> ClusterConfig {
    ClusterConfig {
        nodes: (0..3)
            .map(|i| NodeSpec::new(format!("n{i}"), 16.0, 65_536))
            .collect(),
        clock: ClockMode::Virtual,
    }
}

/// TOML cluster file: `[[nodes]]` entries with name/cores/memory_mb, optional
/// top-level `clock = "virtual" | "real"`.
pub fn parse_cluster(text: &str) -> Result<ClusterConfig, HarnessError> {
    let cfg: ClusterConfig = toml::from_str(text).map_err(|e| HarnessError::Cluster(e.to_string()))?;
    if cfg.nodes.is_empty() {
        return Err(HarnessError::Cluster("no nodes defined".into()));
    }
    Ok(cfg)
}

fn mix(out: u64, base_cpu_ms: f64) -> ComputeModel {
    ComputeModel {
        transform: Transform::Mix { out },
        per_mib_cpu_ms: 0.0,
        base_cpu_ms,
        emit_at: 1.0,
    }
}

/// Scatter-gather wordcount: a shard extractor fans one shard stream out to
/// `fan` counters whose 12-byte summaries merge at a single terminal.
pub fn wordcount(fan: usize) -> WorkflowDefinition {
    assert!(fan >= 1, "wordcount needs at least one counter");
    let mut b = WorkflowDefinition::builder(format!("wc{fan}"));
    b = b.function(function(
        "start",
        128,
        ComputeModel {
            transform: Transform::Fold { k: fan as u32 },
            per_mib_cpu_ms: 10.0,
            base_cpu_ms: 0.0,
            emit_at: 1.0,
        },
        &["input"],
    ));
    let counters: Vec<String> = (0..fan).map(|i| format!("count{i}")).collect();
    let counter_refs: Vec<&str> = counters.iter().map(|s| s.as_str()).collect();
    b = b.flow("start", "shard", &counter_refs);
    let mut merge_inputs = Vec::new();
    for (i, name) in counters.iter().enumerate() {
        b = b.function(function(
            name,
            128,
            ComputeModel {
                transform: Transform::ByteCount,
                per_mib_cpu_ms: 40.0,
                base_cpu_ms: 0.0,
                emit_at: 1.0,
            },
            &["shard"],
        ));
        let data = format!("c{i}");
        b = b.flow(name.as_str(), data.as_str(), &["merge"]);
        merge_inputs.push(data);
    }
    let merge_refs: Vec<&str> = merge_inputs.iter().map(|s| s.as_str()).collect();
    b.function(function(
        "merge",
        128,
        ComputeModel {
            transform: Transform::Concat,
            per_mib_cpu_ms: 0.0,
            base_cpu_ms: 5.0,
            emit_at: 1.0,
        },
        &merge_refs,
    ))
    .entry("start")
    .terminal("merge")
    .build()
    .expect("catalog workflow is well formed")
}

/// Linear pipeline f0 -> f1 -> ... where every stage emits `stage_out` bytes.
pub fn chain(stages: usize, stage_out: u64) -> WorkflowDefinition {
    assert!(stages >= 1, "chain needs at least one stage");
    let mut b = WorkflowDefinition::builder(format!("chain{stages}"));
    for i in 0..stages {
        let inputs = if i == 0 {
            "input".to_string()
        } else {
            format!("d{}", i - 1)
        };
        b = b.function(function(&format!("f{i}"), 128, mix(stage_out, 10.0), &[inputs.as_str()]));
    }
    for i in 0..stages - 1 {
        let next = format!("f{}", i + 1);
        b = b.flow(format!("f{i}"), format!("d{i}"), &[next.as_str()]);
    }
    b.entry("f0")
        .terminal(format!("f{}", stages - 1))
        .build()
        .expect("catalog workflow is well formed")
}

/// A router whose output picks exactly one of three terminal arms.
pub fn switch_three(arm_out: u64) -> WorkflowDefinition {
    let mut b = WorkflowDefinition::builder("switch3");
    b = b.function(function("route", 128, mix(arm_out, 10.0), &["input"]));
    b = b.switch("route", "pick", &[("a", "left"), ("b", "mid"), ("c", "right")]);
    for arm in ["left", "mid", "right"] {
        b = b.function(function(arm, 128, mix(arm_out, 10.0), &["pick"]));
        b = b.terminal(arm);
    }
    b.entry("route").build().expect("catalog workflow is well formed")
}

/// Split, two parallel arms, join: the smallest workflow with a fan-in wait.
pub fn diamond(arm_out: u64) -> WorkflowDefinition {
    WorkflowDefinition::builder("diamond")
        .function(function("split", 128, mix(arm_out, 10.0), &["input"]))
        .flow("split", "d", &["left", "right"])
        .function(function("left", 128, mix(arm_out, 10.0), &["d"]))
        .flow("left", "l", &["join"])
        .function(function("right", 128, mix(arm_out, 10.0), &["d"]))
        .flow("right", "r", &["join"])
        .function(function(
            "join",
            128,
            ComputeModel {
                transform: Transform::Concat,
                per_mib_cpu_ms: 0.0,
                base_cpu_ms: 5.0,
                emit_at: 1.0,
            },
            &["l", "r"],
        ))
        .entry("split")
        .terminal("join")
        .build()
        .expect("catalog workflow is well formed")
}

/// One function, 500 kB result: a minimal single-stage streaming workload.
pub fn pipe() -> WorkflowDefinition {
    WorkflowDefinition::builder("pipe")
        .function(function("only", 128, mix(500_000, 10.0), &["input"]))
        .entry("only")
        .terminal("only")
        .build()
        .expect("catalog workflow is well formed")
}

/// The same workflow with every container resized, for memory sweeps.
pub fn with_uniform_memory(def: &WorkflowDefinition, memory_mb: u64) -> WorkflowDefinition {
    let mut b = WorkflowDefinition::builder(def.name.clone());
    for f in def.functions() {
        let mut spec = f.clone();
        spec.memory_mb = memory_mb;
        b = b.function(spec);
    }
    for edge in def.flows() {
        let dests: Vec<&str> = edge.destinations.iter().map(|d| d.as_str()).collect();
        b = match &edge.switch_labels {
            Some(labels) => {
                let arms: Vec<(&str, &str)> = labels
                    .iter()
                    .map(|l| l.as_str())
                    .zip(dests.iter().copied())
                    .collect();
                b.switch(edge.source.clone(), edge.data_name.clone(), &arms)
            }
            None => b.flow(edge.source.clone(), edge.data_name.clone(), &dests),
        };
    }
    b = b.entry(def.entry());
    for t in def.terminals() {
        b = b.terminal(t.clone());
    }
    b.build().expect("resizing preserves well-formedness")
}

/// Resolve a catalog name, optionally parameterized with `:`-separated
/// values: `wc:8`, `chain:3:8192`, `switch3:65536`, `diamond:1048576`.
pub fn builtin(name: &str) -> Result<WorkflowDefinition, HarnessError> {
    let unknown = || HarnessError::UnknownBuiltin(name.to_string());
    let parts: Vec<&str> = name.split(':').collect();
    let num = |s: &str| -> Result<u64, HarnessError> { s.parse().map_err(|_| unknown()) };
    match parts.as_slice() {
        ["wc"] => Ok(wordcount(4)),
        ["wc", fan] => Ok(wordcount(num(fan)?.max(1) as usize)),
        ["chain"] => Ok(chain(3, MIB)),
        ["chain", n] => Ok(chain(num(n)?.max(1) as usize, MIB)),
        ["chain", n, bytes] => Ok(chain(num(n)?.max(1) as usize, num(bytes)?)),
        ["switch3"] => Ok(switch_three(64 * KIB)),
        ["switch3", bytes] => Ok(switch_three(num(bytes)?)),
        ["diamond"] => Ok(diamond(MIB)),
        ["diamond", bytes] => Ok(diamond(num(bytes)?)),
        ["pipe"] => Ok(pipe()),
        _ => Err(unknown()),
    }
}

/// A workflow placed on a cluster plus the load to offer it. Everything both
/// engines need, so paired runs cannot drift apart in their inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub def: WorkflowDefinition,
    pub cluster: ClusterConfig,
    pub placement: Placement,
    pub pattern: Pattern,
    pub input_size: u64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        def: WorkflowDefinition,
        cluster: ClusterConfig,
        policy: &PlacementPolicy,
        pattern: Pattern,
        input_size: u64,
        seed: u64,
    ) -> Result<Self, HarnessError> {
        let placement = plan_placement(&def, &cluster.node_names(), policy)?;
        Ok(Scenario {
            def,
            cluster,
            placement,
            pattern,
            input_size,
            seed,
        })
    }

    fn setup(&self) -> RunSetup<'_> {
        RunSetup {
            def: &self.def,
            nodes: &self.cluster.nodes,
            placement: &self.placement,
            pattern: self.pattern,
            input_size: self.input_size,
            seed: self.seed,
        }
    }

    /// The cluster file owns the clock; everything else comes from `tuning`.
    fn tuned(&self, tuning: &RuntimeTuning) -> RuntimeTuning {
        let mut t = tuning.clone();
        t.clock = self.cluster.clock;
        t
    }

    pub fn run_dataflow(&self, tuning: &RuntimeTuning, faults: FaultPlan) -> RunMetrics {
        dataflow::run(&self.setup(), &self.tuned(tuning), faults)
    }

    pub fn run_controlflow(&self, tuning: &RuntimeTuning) -> RunMetrics {
        baseline::run(&self.setup(), &self.tuned(tuning))
    }
}

/// The comparable digest of one run.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub workload: String,
    pub submitted: u64,
    pub completed: u64,
    pub failed: u64,
    pub throughput_rpm: f64,
    pub p50_ms: Option<f64>,
    pub p95_ms: Option<f64>,
    pub p99_ms: Option<f64>,
    pub cold_starts: u64,
    pub gb_seconds: f64,
    pub sink_byte_seconds: f64,
    pub bytes_streamed: u64,
    pub bytes_small: u64,
}

impl RunSummary {
    pub fn of(m: &RunMetrics) -> Self {
        RunSummary {
            workload: m.workload.clone(),
            submitted: m.submitted,
            completed: m.completed,
            failed: m.failed,
            throughput_rpm: m.throughput_rpm(),
            p50_ms: m.latency_percentile_ms(50.0),
            p95_ms: m.latency_percentile_ms(95.0),
            p99_ms: m.latency_percentile_ms(99.0),
            cold_starts: m.cold_starts,
            gb_seconds: m.gb_seconds,
            sink_byte_seconds: m.sink_byte_seconds,
            bytes_streamed: m.bytes_streamed,
            bytes_small: m.bytes_small,
        }
    }
}

/// Paired-run verdict. Ratios > 1.0 mean the data-flow engine won that
/// metric; `None` when a side has no completions to measure.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct ComparisonReport {
    pub dataflow: RunSummary,
    pub controlflow: RunSummary,
    /// dataflow throughput over controlflow throughput.
    pub throughput_ratio: f64,
    /// controlflow p50 latency over dataflow p50 latency.
    pub p50_speedup: Option<f64>,
    pub p99_speedup: Option<f64>,
    /// controlflow GB-seconds over dataflow GB-seconds.
    pub gb_seconds_ratio: f64,
    pub min_ratio: f64,
}

impl ComparisonReport {
    pub fn passes(&self) -> bool {
        self.throughput_ratio >= self.min_ratio
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let fmt_opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        out.push_str(&format!("workload: {}\n", self.dataflow.workload));
        out.push_str(&format!(
            "{:<18} {:>14} {:>14} {:>8}\n",
            "metric", "dataflow", "controlflow", "ratio"
        ));
        let rows: Vec<(&str, String, String, String)> = vec![
            (
                "completed",
                self.dataflow.completed.to_string(),
                self.controlflow.completed.to_string(),
                String::new(),
            ),
            (
                "failed",
                self.dataflow.failed.to_string(),
                self.controlflow.failed.to_string(),
                String::new(),
            ),
            (
                "throughput_rpm",
                format!("{:.3}", self.dataflow.throughput_rpm),
                format!("{:.3}", self.controlflow.throughput_rpm),
                format!("{:.3}", self.throughput_ratio),
            ),
            (
                "p50_ms",
                fmt_opt(self.dataflow.p50_ms),
                fmt_opt(self.controlflow.p50_ms),
                fmt_opt(self.p50_speedup),
            ),
            (
                "p99_ms",
                fmt_opt(self.dataflow.p99_ms),
                fmt_opt(self.controlflow.p99_ms),
                fmt_opt(self.p99_speedup),
            ),
            (
                "gb_seconds",
                format!("{:.3}", self.dataflow.gb_seconds),
                format!("{:.3}", self.controlflow.gb_seconds),
                format!("{:.3}", self.gb_seconds_ratio),
            ),
            (
                "cold_starts",
                self.dataflow.cold_starts.to_string(),
                self.controlflow.cold_starts.to_string(),
                String::new(),
            ),
        ];
        for (name, a, b, r) in rows {
            out.push_str(&format!("{name:<18} {a:>14} {b:>14} {r:>8}\n"));
        }
        out.push_str(&format!(
            "verdict: {} (throughput ratio {:.3} vs required {:.3})\n",
            if self.passes() { "PASS" } else { "FAIL" },
            self.throughput_ratio,
            self.min_ratio
        ));
        out
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

pub fn compare(
    dataflow: &RunMetrics,
    controlflow: &RunMetrics,
    min_ratio: f64,
) -> Result<ComparisonReport, HarnessError> {
    if dataflow.workload != controlflow.workload {
        return Err(HarnessError::MismatchedWorkloads {
            left: dataflow.workload.clone(),
            right: controlflow.workload.clone(),
        });
    }
    let d = RunSummary::of(dataflow);
    let c = RunSummary::of(controlflow);
    let speedup = |cv: Option<f64>, dv: Option<f64>| match (cv, dv) {
        (Some(cv), Some(dv)) => Some(ratio(cv, dv)),
        _ => None,
    };
    Ok(ComparisonReport {
        throughput_ratio: ratio(d.throughput_rpm, c.throughput_rpm),
        p50_speedup: speedup(c.p50_ms, d.p50_ms),
        p99_speedup: speedup(c.p99_ms, d.p99_ms),
        gb_seconds_ratio: ratio(c.gb_seconds, d.gb_seconds),
        min_ratio,
        dataflow: d,
        controlflow: c,
    })
}
