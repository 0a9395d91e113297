//! Command-line front end: validate workflow documents, run one engine,
//! compare the two engines on an identical scenario, or sweep a parameter
//! grid. Everything lands as CSV and plain-text logs under `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use flowsim::harness::{self, ClusterConfig, ComparisonReport, Scenario};
use flowsim::sim::{parse_pattern, FaultPlan, RunMetrics, RuntimeTuning};
use flowsim::units::{parse_duration, parse_size};
use flowsim::workflow::{parse_workflow, validate, PlacementPolicy, WorkflowDefinition};

#[derive(Parser)]
#[command(name = "flowsim", version, about = "Deterministic simulator for data-flow serverless workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a workflow and print lint findings.
    Validate {
        /// Workflow file, or a builtin name (see --workflow on `run`).
        workflow: String,
    },
    /// Execute one scenario and write metrics CSV plus the event log.
    Run(RunArgs),
    /// Run both engines on the same scenario and score the ratios.
    Compare(CompareArgs),
    /// Run a grid over fan-out, input size, and container memory.
    Sweep(SweepArgs),
    /// Re-render the comparison table from a saved report.
    Report {
        /// Directory a previous `compare` wrote into.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct WorkloadArgs {
    /// Workflow file, or a builtin: wc[:fan], chain[:stages:bytes],
    /// switch3[:bytes], diamond[:bytes], pipe.
    #[arg(long)]
    workflow: String,
    /// Cluster TOML ([[nodes]] with name/cores/memory_mb, optional clock);
    /// defaults to three 16-core 64 GiB workers on the virtual clock.
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// roundrobin | single | file:<JSON map of function to node>
    #[arg(long, default_value = "roundrobin")]
    placement: String,
    /// open:<rpm>:<dur> | closed:<clients>:<dur> | burst:<lo>:<hi>:<t>
    #[arg(long, default_value = "closed:1:60s")]
    pattern: String,
    /// Request payload size; accepts KiB/MiB suffixes.
    #[arg(long, default_value = "1MiB")]
    input: String,
    /// Fan-out for the wc builtin; ignored for files and other builtins.
    #[arg(long)]
    fan: Option<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pressure safety factor; default 1.1.
    #[arg(long)]
    alpha: Option<f64>,
    /// Sink entry time-to-live, e.g. 30s or 500ms; default 30s.
    #[arg(long)]
    ttl: Option<String>,
    /// Directory for CSV and log artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Dataflow,
    Controlflow,
    Both,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Which engine to run.
    #[arg(long, value_enum, default_value_t = Mode::Dataflow)]
    mode: Mode,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    workload: WorkloadArgs,
    /// Passing requires dataflow/controlflow throughput at least this.
    #[arg(long, default_value_t = 1.0)]
    min_ratio: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Builtin family to sweep; fan values apply to wc.
    #[arg(long, default_value = "wc")]
    workflow: String,
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long, default_value = "roundrobin")]
    placement: String,
    #[arg(long, default_value = "closed:8:60s")]
    pattern: String,
    /// Comma-separated payload sizes.
    #[arg(long, default_value = "1MiB,4MiB", value_delimiter = ',')]
    input: Vec<String>,
    /// Comma-separated fan-outs.
    #[arg(long, default_value = "2,4,8", value_delimiter = ',')]
    fan: Vec<u32>,
    /// Comma-separated container sizes in MB, applied to every function.
    #[arg(long, default_value = "128", value_delimiter = ',')]
    memory: Vec<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    ttl: Option<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn resolve_workflow(spec: &str, fan: Option<u32>) -> Result<WorkflowDefinition> {
    let path = Path::new(spec);
    if path.exists() {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return parse_workflow(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let name = match fan {
        Some(k) if spec == "wc" => format!("wc:{k}"),
        _ => spec.to_string(),
    };
    Ok(harness::builtin(&name)?)
}

fn load_cluster(path: &Option<PathBuf>) -> Result<ClusterConfig> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            harness::parse_cluster(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(harness::default_cluster()),
    }
}

fn parse_placement_policy(spec: &str) -> Result<PlacementPolicy> {
    match spec {
        "roundrobin" => Ok(PlacementPolicy::RoundRobin),
        "single" => Ok(PlacementPolicy::SingleNode),
        _ => {
            let Some(path) = spec.strip_prefix("file:") else {
                bail!("placement must be roundrobin, single, or file:<path>, got {spec:?}");
            };
            let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
            let map: BTreeMap<String, String> =
                serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            Ok(PlacementPolicy::Explicit(map))
        }
    }
}

fn build_tuning(alpha: Option<f64>, ttl: &Option<String>) -> Result<RuntimeTuning> {
    let mut t = RuntimeTuning::default();
    if let Some(a) = alpha {
        t.alpha = a;
    }
    if let Some(ttl) = ttl {
        t.ttl = parse_duration(ttl).map_err(anyhow::Error::msg)?;
    }
    Ok(t)
}

fn build_scenario(args: &WorkloadArgs) -> Result<(Scenario, RuntimeTuning)> {
    let def = resolve_workflow(&args.workflow, args.fan)?;
    let cluster = load_cluster(&args.cluster)?;
    let policy = parse_placement_policy(&args.placement)?;
    let pattern = parse_pattern(&args.pattern).map_err(anyhow::Error::msg)?;
    let input = parse_size(&args.input).map_err(anyhow::Error::msg)?;
    let scenario = Scenario::new(def, cluster, &policy, pattern, input, args.seed)?;
    let tuning = build_tuning(args.alpha, &args.ttl)?;
    Ok((scenario, tuning))
}

fn write_artifacts(out: &Path, label: &str, m: &RunMetrics) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(format!("{label}_summary.csv")), m.summary_csv())?;
    fs::write(out.join(format!("{label}_requests.csv")), m.requests_csv())?;
    fs::write(out.join(format!("{label}_events.log")), m.event_log.join("\n") + "\n")?;
    Ok(())
}

fn fmt_ms(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"))
}

fn print_run(label: &str, m: &RunMetrics) {
    println!(
        "{label}: {}/{} completed ({} failed), {:.1} rpm, p50 {} ms, p99 {} ms, {} cold starts",
        m.completed,
        m.submitted,
        m.failed,
        m.throughput_rpm(),
        fmt_ms(m.latency_percentile_ms(50.0)),
        fmt_ms(m.latency_percentile_ms(99.0)),
        m.cold_starts,
    );
}

fn cmd_validate(spec: &str) -> Result<()> {
    let def = resolve_workflow(spec, None)?;
    let findings = validate(&def);
    for f in &findings {
        println!("{f}");
    }
    println!("{} findings", findings.len());
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let (scenario, tuning) = build_scenario(&args.workload)?;
    let out = &args.workload.out;
    if args.mode != Mode::Controlflow {
        let m = scenario.run_dataflow(&tuning, FaultPlan::none());
        write_artifacts(out, "dataflow", &m)?;
        print_run("dataflow", &m);
    }
    if args.mode != Mode::Dataflow {
        let m = scenario.run_controlflow(&tuning);
        write_artifacts(out, "controlflow", &m)?;
        print_run("controlflow", &m);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let (scenario, tuning) = build_scenario(&args.workload)?;
    let out = &args.workload.out;
    let df = scenario.run_dataflow(&tuning, FaultPlan::none());
    let cf = scenario.run_controlflow(&tuning);
    write_artifacts(out, "dataflow", &df)?;
    write_artifacts(out, "controlflow", &cf)?;
    let report = harness::compare(&df, &cf, args.min_ratio)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(out.join("comparison.json"), json + "\n")?;
    print!("{}", report.table());
    println!("artifacts in {}", out.display());
    if !report.passes() {
        bail!(
            "throughput ratio {:.3} is below the required {:.3}",
            report.throughput_ratio,
            report.min_ratio
        );
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cluster = load_cluster(&args.cluster)?;
    let policy = parse_placement_policy(&args.placement)?;
    let pattern = parse_pattern(&args.pattern).map_err(anyhow::Error::msg)?;
    let tuning = build_tuning(args.alpha, &args.ttl)?;
    let mut csv = String::from(
        "workflow,fan,input_bytes,memory_mb,mode,completed,failed,throughput_rpm,p50_ms,p99_ms,gb_seconds\n",
    );
    let mut cells = 0usize;
    for &fan in &args.fan {
        let base = resolve_workflow(&args.workflow, Some(fan))?;
        for input_text in &args.input {
            let input = parse_size(input_text).map_err(anyhow::Error::msg)?;
            for &memory_mb in &args.memory {
                let def = harness::with_uniform_memory(&base, memory_mb);
                let name = def.name.clone();
                let scenario = Scenario::new(
                    def,
                    cluster.clone(),
                    &policy,
                    pattern,
                    input,
                    args.seed,
                )?;
                let runs = [
                    ("dataflow", scenario.run_dataflow(&tuning, FaultPlan::none())),
                    ("controlflow", scenario.run_controlflow(&tuning)),
                ];
                for (mode, m) in runs {
                    csv.push_str(&format!(
                        "{name},{fan},{input},{memory_mb},{mode},{},{},{:.6},{},{},{:.6}\n",
                        m.completed,
                        m.failed,
                        m.throughput_rpm(),
                        fmt_ms(m.latency_percentile_ms(50.0)),
                        fmt_ms(m.latency_percentile_ms(99.0)),
                        m.gb_seconds,
                    ));
                    cells += 1;
                }
            }
        }
    }
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let path = args.out.join("sweep.csv");
    fs::write(&path, csv)?;
    println!("{} rows -> {}", cells, path.display());
    Ok(())
}

fn cmd_report(out: &Path) -> Result<()> {
    let path = out.join("comparison.json");
    let text = fs::read_to_string(&path)
        .with_context(|| format!("no report at {}; run `flowsim compare` first", path.display()))?;
    let report: ComparisonReport = serde_json::from_str(&text).context("malformed comparison.json")?;
    print!("{}", report.table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { workflow } => cmd_validate(workflow),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report { out } => cmd_report(out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
