//! The data-flow engine: functions fire when their declared inputs are
//! complete in the local sink, outputs stream chunk-by-chunk through each
//! container's data side while the compute side moves on.
//!
//! Concurrency discipline: at most one chunk per container is in flight; its
//! delivery and the next pump share a timestamp, with delivery processed
//! first. Obligation counting decides request completion: admitting a
//! function and enqueueing an emission increment, a finished FLU and a
//! delivered END decrement, and increments always happen before decrements
//! inside one handler, so the count can only touch zero when the request is
//! truly quiescent.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};

use crate::container::{ContainerId, ContainerState, OutboundEmission};
use crate::engine::{Engine, ScaleReason};
use crate::pressure64;
use crate::sink::{DataSink, SpillStore};
use crate::units::Nanos;
use crate::wire::{
    flow_id, small_chunk, ConnectorHandle, ConnectorKind, FlowChunk, FlowId, FlowSender,
    RequestId, CHUNK_SIZE, FLAG_DATA, FLAG_END, SMALL_THRESHOLD,
};
use crate::workflow::{switch_index, WorkflowDefinition};

use super::metrics::{RequestRecord, RunMetrics};
use super::queue::EventQueue;
use super::workload::{request_input, Pattern};
use super::{ClockMode, FaultPlan, NodeSpec, RunSetup, RuntimeTuning};

/// Name the client-side collector poses as; never a cluster node.
pub const CLIENT: &str = "@client";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dest {
    Node(usize),
    Client,
}

#[derive(Debug)]
enum Ev {
    Arrival { index: u64 },
    ColdDone { node: usize, function: String },
    FluEmit { node: usize, container: ContainerId, generation: u64 },
    FluDone { node: usize, container: ContainerId, generation: u64 },
    FluKill { node: usize, container: ContainerId, generation: u64 },
    Pump { node: usize, container: ContainerId },
    Deliver {
        src_node: usize,
        src_container: ContainerId,
        dest: Dest,
        function: String,
        data: String,
        chunk: FlowChunk,
    },
    Unblock { node: usize, container: ContainerId },
    /// Small payloads skip the connector machinery and land whole; the
    /// sender already paid their bits when this was scheduled.
    SmallDeliver { dest: Dest, function: String, data: String, chunk: FlowChunk },
    Retry { node: usize, container: ContainerId, request: RequestId, flow: FlowId },
    Timeout { request: RequestId },
    TtlSweep,
    RecycleSweep,
    GcTick,
}

struct Node {
    name: String,
    engine: Engine,
    sink: DataSink,
}

/// One running FLU; dropped on completion or abort.
struct Invocation {
    request: RequestId,
    generation: u64,
    produced: Vec<u8>,
    exec: Nanos,
}

#[derive(Default)]
struct Collect {
    next_seq: u64,
    assembled: Vec<u8>,
}

struct ReqState {
    index: u64,
    submit: Nanos,
    start: Option<Nanos>,
    end: Option<Nanos>,
    failed: bool,
    done: bool,
    obligations: i64,
    terminal_done: bool,
    client_released: bool,
    collecting: BTreeMap<String, Collect>,
    outputs: BTreeMap<String, Vec<u8>>,
}

struct Sim<'a> {
    def: &'a WorkflowDefinition,
    placement: &'a crate::workflow::Placement,
    tuning: &'a RuntimeTuning,
    pattern: Pattern,
    input_size: u64,
    seed: u64,
    faults: FaultPlan,
    nodes: Vec<Node>,
    node_index: BTreeMap<String, usize>,
    queue: EventQueue<Ev>,
    now: Nanos,
    end_at: Nanos,
    requests: BTreeMap<RequestId, ReqState>,
    invocations: BTreeMap<(usize, ContainerId), Invocation>,
    in_flight: BTreeSet<(usize, ContainerId)>,
    next_index: u64,
    live: u64,
    delivery_counter: u64,
    metrics: RunMetrics,
    /// Provisioned container memory integrated over time, in MB-nanoseconds.
    mem_mb_ns: u128,
    last_t: Nanos,
}

pub fn run(setup: &RunSetup, tuning: &RuntimeTuning, faults: FaultPlan) -> RunMetrics {
    let mut sim = Sim::new(setup, tuning, faults);
    sim.prime();
    let wall = Instant::now();
    while let Some((t, ev)) = sim.queue.pop() {
        if sim.tuning.clock == ClockMode::Real {
            let target = Duration::from_nanos(t);
            let elapsed = wall.elapsed();
            if target > elapsed {
                std::thread::sleep(target - elapsed);
            }
        }
        sim.advance_to(t);
        sim.handle(ev);
        if sim.drained() {
            break;
        }
    }
    sim.finish()
}

impl<'a> Sim<'a> {
    fn new(setup: &RunSetup<'a>, tuning: &'a RuntimeTuning, faults: FaultPlan) -> Self {
        let nodes: Vec<Node> = setup
            .nodes
            .iter()
            .map(|spec: &NodeSpec| {
                let mut declared = BTreeMap::new();
                for (f, n) in setup.placement.iter() {
                    if n == spec.name {
                        let fspec = setup.def.function(f).expect("placement covers known functions");
                        declared.insert(f.to_string(), fspec.declared_inputs.clone());
                    }
                }
                Node {
                    name: spec.name.clone(),
                    engine: Engine::new(spec.name.clone(), spec.cores, spec.memory_mb, 1),
                    sink: DataSink::new(
                        spec.name.clone(),
                        declared,
                        tuning.ttl,
                        tuning.checkpoint_chunks,
                        tuning.checkpoint_interval,
                        SpillStore::in_memory(),
                    ),
                }
            })
            .collect();
        let node_index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();
        let duration = setup.pattern.duration();
        Sim {
            def: setup.def,
            placement: setup.placement,
            tuning,
            pattern: setup.pattern,
            input_size: setup.input_size,
            seed: setup.seed,
            faults,
            nodes,
            node_index,
            queue: EventQueue::new(),
            now: 0,
            end_at: duration,
            requests: BTreeMap::new(),
            invocations: BTreeMap::new(),
            in_flight: BTreeSet::new(),
            next_index: 0,
            live: 0,
            delivery_counter: 0,
            metrics: RunMetrics::new(&setup.def.name, duration),
            mem_mb_ns: 0,
            last_t: 0,
        }
    }

    fn prime(&mut self) {
        for _ in 0..self.pattern.initial_arrivals() {
            let index = self.next_index;
            self.next_index += 1;
            self.queue.push(0, Ev::Arrival { index });
        }
        self.queue.push(self.tuning.ttl_sweep, Ev::TtlSweep);
        self.queue.push(self.tuning.ttl_sweep, Ev::RecycleSweep);
        self.queue.push(self.tuning.gc_horizon, Ev::GcTick);
    }

    /// Memory integral is piecewise constant between events.
    fn advance_to(&mut self, t: Nanos) {
        if t > self.last_t {
            let live_mb: u64 = self
                .nodes
                .iter()
                .flat_map(|n| n.engine.containers())
                .map(|c| c.memory_mb)
                .sum();
            self.mem_mb_ns += live_mb as u128 * (t - self.last_t) as u128;
            self.last_t = t;
        }
        self.now = t.max(self.now);
    }

    /// Past the window with nothing live and every data side drained, the
    /// rest of the queue is stale timeouts; stop instead of replaying them.
    fn drained(&self) -> bool {
        self.live == 0
            && self.now >= self.end_at
            && self.in_flight.is_empty()
            && self
                .nodes
                .iter()
                .all(|n| n.engine.containers().all(|c| c.dlu_empty()))
    }

    fn keep_ticking(&self) -> bool {
        self.live > 0 || self.now < self.end_at
    }

    fn node_of(&self, function: &str) -> usize {
        self.node_index[self.placement.node_of(function)]
    }

    fn dest_of(&self, dest_node: &str) -> Dest {
        if dest_node == CLIENT {
            Dest::Client
        } else {
            Dest::Node(self.node_index[dest_node])
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Arrival { index } => self.on_arrival(index),
            Ev::ColdDone { node, function } => self.on_cold_done(node, &function),
            Ev::FluEmit { node, container, generation } => self.on_flu_emit(node, container, generation),
            Ev::FluDone { node, container, generation } => self.on_flu_done(node, container, generation),
            Ev::FluKill { node, container, generation } => self.on_flu_kill(node, container, generation),
            Ev::Pump { node, container } => self.on_pump(node, container),
            Ev::Deliver { src_node, src_container, dest, function, data, chunk } => {
                self.on_deliver(src_node, src_container, dest, &function, &data, chunk)
            }
            Ev::Unblock { node, container } => self.on_unblock(node, container),
            Ev::SmallDeliver { dest, function, data, chunk } => {
                self.on_small_deliver(dest, &function, &data, chunk)
            }
            Ev::Retry { node, container, request, flow } => self.on_retry(node, container, request, flow),
            Ev::Timeout { request } => self.on_timeout(request),
            Ev::TtlSweep => self.on_ttl_sweep(),
            Ev::RecycleSweep => self.on_recycle_sweep(),
            Ev::GcTick => self.on_gc_tick(),
        }
    }

    fn on_arrival(&mut self, index: u64) {
        let request = RequestId::from_seed(self.seed, index);
        let input = request_input(self.seed, index, self.input_size);
        self.requests.insert(
            request,
            ReqState {
                index,
                submit: self.now,
                start: None,
                end: None,
                failed: false,
                done: false,
                obligations: 0,
                terminal_done: false,
                client_released: false,
                collecting: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        );
        self.live += 1;
        self.metrics.submitted += 1;
        let entry = self.def.entry().to_string();
        let entry_node = self.node_of(&entry);
        let entry_node_name = self.nodes[entry_node].name.clone();
        self.metrics.log(
            self.now,
            &entry_node_name,
            "ARRIVAL",
            &format!("req={} idx={} size={}", request.short(), index, input.len()),
        );

        // The request payload lands in the entry node's sink free of charge;
        // the client's uplink is outside the modeled cluster.
        for data in self.def.external_inputs() {
            self.metrics.log(
                self.now,
                &entry_node_name,
                "STAGE",
                &format!("req={} data={} size={}", request.short(), data, input.len()),
            );
            let flow = flow_id(CLIENT, &data, &entry);
            let chunks: Vec<FlowChunk> = if input.len() < SMALL_THRESHOLD {
                vec![small_chunk(request, flow, input.clone())]
            } else {
                crate::wire::chunk_payload(request, flow, &input, CHUNK_SIZE)
            };
            for chunk in chunks {
                let outcome = self.nodes[entry_node]
                    .sink
                    .put(self.now, &entry, &data, &chunk)
                    .expect("staged input streams in order");
                if let Some((req, function)) = outcome.function_ready {
                    self.on_ready(entry_node, req, &function);
                }
            }
        }

        if let Some(t) = self.pattern.next_arrival(self.now) {
            let next = self.next_index;
            self.next_index += 1;
            self.queue.push(t, Ev::Arrival { index: next });
        }
        self.queue.push(self.now + self.tuning.deadline, Ev::Timeout { request });
    }

    /// A complete input bundle: one more FLU owed, then try to run it.
    fn on_ready(&mut self, node: usize, request: RequestId, function: &str) {
        let Some(st) = self.requests.get_mut(&request) else { return };
        if st.done || st.failed {
            return;
        }
        st.obligations += 1;
        self.nodes[node].engine.admit_ready(function, request);
        let name = self.nodes[node].name.clone();
        self.metrics.log(
            self.now,
            &name,
            "READY",
            &format!("req={} fn={}", request.short(), function),
        );
        self.dispatch_or_scale(node, function);
    }

    /// Pair pending work with idle containers; when work still waits, grow
    /// the pool: a bootstrap cold start if the function has no container
    /// here at all, a pressure cold start if one of its slots is blocked.
    fn dispatch_or_scale(&mut self, node: usize, function: &str) {
        while let Some((cid, request)) = self.nodes[node].engine.next_dispatch(function) {
            let dead = self
                .requests
                .get(&request)
                .map_or(true, |s| s.done || s.failed);
            if dead {
                continue;
            }
            self.start_flu(node, cid, request);
        }
        if self.nodes[node].engine.pending_len(function) == 0 {
            return;
        }
        let now = self.now;
        let reason = if self.nodes[node].engine.count_for(function) == 0 {
            Some(ScaleReason::NoIdleFlu)
        } else if self.nodes[node].engine.containers().any(|c| {
            // A busy slot with an open signal window counts as blocked:
            // work queueing behind it will not run before the window ends.
            c.function == function && (c.state() == ContainerState::Blocked || c.blocked_until() > now)
        }) {
            Some(ScaleReason::Pressure)
        } else {
            None
        };
        let Some(reason) = reason else { return };
        let memory_mb = self.def.function(function).expect("known function").memory_mb;
        if self.nodes[node].engine.request_scale(function, memory_mb, reason) {
            let name = self.nodes[node].name.clone();
            self.metrics.log(
                self.now,
                &name,
                "COLD_START",
                &format!("fn={function} reason={reason}"),
            );
            self.queue.push(
                self.now + self.tuning.cold_start,
                Ev::ColdDone { node, function: function.to_string() },
            );
        }
    }

    fn on_cold_done(&mut self, node: usize, function: &str) {
        let cid = self.nodes[node].engine.finish_cold_start(function, self.now);
        let name = self.nodes[node].name.clone();
        self.metrics.log(
            self.now,
            &name,
            "COLD_DONE",
            &format!("fn={function} c={cid}"),
        );
        self.dispatch_or_scale(node, function);
    }

    fn start_flu(&mut self, node: usize, cid: ContainerId, request: RequestId) {
        let function = self.nodes[node]
            .engine
            .container(cid)
            .expect("dispatch names a pooled container")
            .function
            .clone();
        let bundle = self.nodes[node]
            .sink
            .take(self.now, request, &function, cid)
            .expect("ready means the bundle is takeable");
        let input_bytes: u64 = bundle.iter().map(|(_, b)| b.len() as u64).sum();
        let refs: Vec<&[u8]> = bundle.iter().map(|(_, b)| b.as_slice()).collect();
        let spec = self.def.function(&function).expect("known function");
        let produced = spec.compute.transform.apply(&function, &refs);
        let exec = spec.compute.exec_nanos(input_bytes, spec.memory_mb);
        let c = self.nodes[node]
            .engine
            .container_mut(cid)
            .expect("container present");
        c.begin_flu(self.now, request);
        let generation = c.generation;
        self.invocations.insert(
            (node, cid),
            Invocation { request, generation, produced, exec },
        );
        let st = self.requests.get_mut(&request).expect("live request");
        if st.start.is_none() {
            st.start = Some(self.now);
        }
        let index = st.index;
        let name = self.nodes[node].name.clone();
        self.metrics.log(
            self.now,
            &name,
            "FLU_START",
            &format!(
                "req={} fn={} c={} in={} exec_us={}",
                request.short(),
                function,
                cid,
                input_bytes,
                exec / 1_000
            ),
        );
        let emit_frac = spec.compute.emit_at.clamp(0.0, 1.0);
        let emit_at = self.now + (emit_frac * exec as f64).round() as Nanos;
        self.queue.push(emit_at, Ev::FluEmit { node, container: cid, generation });
        self.queue.push(self.now + exec, Ev::FluDone { node, container: cid, generation });
        if self.faults.take_kill(&function, index) {
            self.queue.push(self.now + exec / 10, Ev::FluKill { node, container: cid, generation });
        }
    }

    fn invocation_live(&self, node: usize, cid: ContainerId, generation: u64) -> bool {
        self.invocations
            .get(&(node, cid))
            .is_some_and(|inv| inv.generation == generation)
            && self.nodes[node]
                .engine
                .container(cid)
                .is_some_and(|c| c.generation == generation)
    }

    /// Output instant: every outgoing edge (one arm for a switch) plus, for
    /// terminals, the client flow, all carrying the invocation's payload.
    fn on_flu_emit(&mut self, node: usize, cid: ContainerId, generation: u64) {
        if !self.invocation_live(node, cid, generation) {
            return;
        }
        let inv = &self.invocations[&(node, cid)];
        let request = inv.request;
        let produced = inv.produced.clone();
        let function = self.nodes[node].engine.container(cid).unwrap().function.clone();
        let src_name = self.nodes[node].name.clone();

        // (dest function, data name, dest node name)
        let mut targets: Vec<(String, String, String)> = Vec::new();
        for edge in self.def.outgoing(&function) {
            if edge.is_switch() {
                let arm = switch_index(&produced, edge.destinations.len());
                let dest = &edge.destinations[arm];
                self.metrics.log(
                    self.now,
                    &src_name,
                    "SWITCH",
                    &format!("req={} fn={} arm={} dest={}", request.short(), function, arm, dest),
                );
                targets.push((dest.clone(), edge.data_name.clone(), self.placement.node_of(dest).to_string()));
            } else {
                for dest in &edge.destinations {
                    targets.push((dest.clone(), edge.data_name.clone(), self.placement.node_of(dest).to_string()));
                }
            }
        }
        if self.def.is_terminal(&function) {
            targets.push((function.clone(), function.clone(), CLIENT.to_string()));
        }

        // All increments before any small-path decrement.
        if let Some(st) = self.requests.get_mut(&request) {
            st.obligations += targets.len() as i64;
        } else {
            return;
        }

        // Bytes this emission will push over the network; local handoffs and
        // the bits already paid by small sends do not back up the data side.
        let mut remote_stream_bytes: u64 = 0;
        for (dest_fn, data, dest_node_name) in targets {
            let kind = crate::wire::connector_kind(&src_name, &dest_node_name, produced.len() as u64);
            let flow = flow_id(&function, &data, if dest_node_name == CLIENT { CLIENT } else { &dest_fn });
            self.metrics.log(
                self.now,
                &src_name,
                "EMIT",
                &format!(
                    "req={} fn={} data={} dest={} kind={} size={}",
                    request.short(),
                    function,
                    data,
                    dest_fn,
                    kind,
                    produced.len()
                ),
            );
            if kind == ConnectorKind::Small {
                self.metrics.bytes_small += produced.len() as u64;
                let chunk = small_chunk(request, flow, produced.clone());
                // A cross-node small send still pays its bits; the local
                // case is a memory copy and costs nothing.
                let wait = if dest_node_name == src_name {
                    0
                } else {
                    let bits = (chunk.payload.len() * 8) as u64;
                    self.nodes[node]
                        .engine
                        .container_mut(cid)
                        .expect("emitting container present")
                        .bucket
                        .acquire(bits, self.now)
                        .expect("a small payload fits the burst")
                };
                let dest = self.dest_of(&dest_node_name);
                self.queue.push(
                    self.now + wait,
                    Ev::SmallDeliver { dest, function: dest_fn, data, chunk },
                );
            } else {
                self.metrics.streaming_connectors += 1;
                if kind == ConnectorKind::Remote {
                    remote_stream_bytes += produced.len() as u64;
                }
                let handle = ConnectorHandle {
                    request,
                    flow,
                    kind,
                    src_node: src_name.clone(),
                    dst_node: dest_node_name.clone(),
                };
                let em = OutboundEmission {
                    request,
                    flow,
                    data,
                    source: function.clone(),
                    dest_function: dest_fn,
                    dest_node: dest_node_name,
                    connector: kind,
                    payload: produced.clone(),
                    sender: FlowSender::new(handle),
                    resend: Default::default(),
                };
                self.nodes[node]
                    .engine
                    .container_mut(cid)
                    .expect("emitting container present")
                    .enqueue_emission(em);
            }
        }

        // Backpressure is priced here, when the data side receives the
        // output: transfer estimate over the slot's full bandwidth against
        // the compute estimate from before this invocation's sample (a cold
        // slot claims zero and blocks conservatively). The signal takes
        // effect immediately; a still-running FLU simply lands in the
        // blocked window when it finishes.
        if self.tuning.pressure_enabled && remote_stream_bytes > 0 {
            let (t_flu, bandwidth) = {
                let c = self.nodes[node].engine.container(cid).expect("emitting container present");
                (c.t_flu_secs(), c.bandwidth_bps())
            };
            let p = pressure64(remote_stream_bytes, bandwidth, t_flu, self.tuning.alpha);
            if p > 0.0 {
                let hold = (p * 1e9).round() as Nanos;
                let until = self.now + hold;
                self.nodes[node]
                    .engine
                    .container_mut(cid)
                    .expect("emitting container present")
                    .post_block(self.now, until);
                self.metrics.blocks += 1;
                self.metrics.block_nanos += hold;
                self.metrics.log(
                    self.now,
                    &src_name,
                    "BLOCK",
                    &format!(
                        "req={} fn={} c={} p_us={} egress={}",
                        request.short(),
                        function,
                        cid,
                        hold / 1_000,
                        remote_stream_bytes
                    ),
                );
                self.queue.push(until, Ev::Unblock { node, container: cid });
                if self.nodes[node].engine.pending_len(&function) > 0 {
                    self.scale_for_pressure(node, &function);
                }
            }
        }
        self.queue.push(self.now, Ev::Pump { node, container: cid });
    }

    fn scale_for_pressure(&mut self, node: usize, function: &str) {
        let memory_mb = self.def.function(function).expect("known function").memory_mb;
        if self.nodes[node]
            .engine
            .request_scale(function, memory_mb, ScaleReason::Pressure)
        {
            let name = self.nodes[node].name.clone();
            self.metrics.log(
                self.now,
                &name,
                "COLD_START",
                &format!("fn={function} reason=pressure"),
            );
            self.queue.push(
                self.now + self.tuning.cold_start,
                Ev::ColdDone { node, function: function.to_string() },
            );
        }
    }

    fn on_flu_done(&mut self, node: usize, cid: ContainerId, generation: u64) {
        if !self.invocation_live(node, cid, generation) {
            return;
        }
        let inv = self.invocations.remove(&(node, cid)).expect("checked live");
        let request = inv.request;
        let function = self.nodes[node].engine.container(cid).unwrap().function.clone();
        let name = self.nodes[node].name.clone();
        // If the emission posted a block still in force, the slot lands in
        // Blocked here instead of Idle.
        self.nodes[node]
            .engine
            .container_mut(cid)
            .unwrap()
            .finish_flu(self.now, inv.exec);
        self.nodes[node].engine.note_function_done(request, &function);
        self.metrics.log(
            self.now,
            &name,
            "FLU_DONE",
            &format!("req={} fn={} c={}", request.short(), function, cid),
        );

        let alive = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if self.tuning.proactive_release && alive {
            let declared = self.def.function(&function).expect("known").declared_inputs.clone();
            for data in declared {
                self.nodes[node]
                    .sink
                    .proactive_release(self.now, request, &function, &data)
                    .expect("consumed inputs are releasable");
            }
        }

        let is_terminal = self.def.is_terminal(&function);
        if alive && is_terminal {
            let st = self.requests.get_mut(&request).expect("alive");
            st.terminal_done = true;
            if !st.client_released {
                st.client_released = true;
                // The client sees its answer coming: in closed loop it
                // immediately issues the next request while the data side
                // finishes streaming.
                if self.pattern.is_closed() && self.now < self.end_at {
                    let index = self.next_index;
                    self.next_index += 1;
                    self.queue.push(self.now, Ev::Arrival { index });
                }
            }
        }

        if self.nodes[node].engine.container(cid).unwrap().is_idle() {
            self.dispatch_or_scale(node, &function);
        }
        self.obligation_done(request);
    }

    /// Scripted compute fault: the invocation dies a tenth of the way in,
    /// before anything was emitted. Inputs are still in the sink, so the
    /// recovery is to reset the taken marks and queue the function again
    /// under its original obligation.
    fn on_flu_kill(&mut self, node: usize, cid: ContainerId, generation: u64) {
        if !self.invocation_live(node, cid, generation) {
            return;
        }
        let inv = self.invocations.remove(&(node, cid)).expect("checked live");
        let request = inv.request;
        let function = self.nodes[node].engine.container(cid).unwrap().function.clone();
        let name = self.nodes[node].name.clone();
        self.metrics.log(
            self.now,
            &name,
            "FLU_FAULT",
            &format!("req={} fn={} c={}", request.short(), function, cid),
        );
        self.nodes[node].engine.container_mut(cid).unwrap().abort_flu(self.now);
        self.nodes[node].engine.stats.redos += 1;
        self.nodes[node].sink.reset_taken(request, &function);
        let alive = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if alive {
            self.nodes[node].engine.admit_ready(&function, request);
            self.dispatch_or_scale(node, &function);
        }
    }

    /// Self-validating: polling is a no-op unless the slot is in Blocked
    /// with its window elapsed, so stale or early events are harmless.
    fn on_unblock(&mut self, node: usize, cid: ContainerId) {
        let Some(c) = self.nodes[node].engine.container_mut(cid) else { return };
        let function = c.function.clone();
        if c.poll_unblock(self.now) {
            let name = self.nodes[node].name.clone();
            self.metrics.log(self.now, &name, "UNBLOCK", &format!("fn={function} c={cid}"));
            self.dispatch_or_scale(node, &function);
        }
    }

    fn on_small_deliver(&mut self, dest: Dest, function: &str, data: &str, chunk: FlowChunk) {
        let request = chunk.request;
        let dead = self
            .requests
            .get(&request)
            .map_or(true, |s| s.done || s.failed);
        if dead {
            return;
        }
        match dest {
            Dest::Node(d) => {
                let outcome = self.nodes[d]
                    .sink
                    .put(self.now, function, data, &chunk)
                    .expect("small transfers land whole");
                let dname = self.nodes[d].name.clone();
                self.metrics.log(
                    self.now,
                    &dname,
                    "DELIVER",
                    &format!("req={} fn={} data={} seq=0 end=1", request.short(), function, data),
                );
                if let Some((req, f)) = outcome.function_ready {
                    self.on_ready(d, req, &f);
                }
                self.obligation_done(request);
            }
            Dest::Client => {
                if self.collect_client(request, function, &chunk) {
                    self.obligation_done(request);
                }
            }
        }
    }

    /// DATA chunk `seq` of `payload`, the trailing empty END, or None once
    /// everything is submitted. Mirrors the wire chunking rule exactly.
    fn chunk_at(payload: &[u8], request: RequestId, flow: FlowId, seq: u64) -> Option<FlowChunk> {
        let data_chunks = payload.len().div_ceil(CHUNK_SIZE) as u64;
        if seq < data_chunks {
            let lo = seq as usize * CHUNK_SIZE;
            let hi = (lo + CHUNK_SIZE).min(payload.len());
            Some(FlowChunk {
                request,
                flow,
                seq,
                flags: FLAG_DATA,
                payload: payload[lo..hi].to_vec(),
            })
        } else if seq == data_chunks {
            Some(FlowChunk {
                request,
                flow,
                seq,
                flags: FLAG_END,
                payload: Vec::new(),
            })
        } else {
            None
        }
    }

    fn on_pump(&mut self, node: usize, cid: ContainerId) {
        if self.in_flight.contains(&(node, cid)) {
            return;
        }
        let (chunk, dest_node, function, data, local) = {
            let Some(c) = self.nodes[node].engine.container_mut(cid) else { return };
            let Some(em) = c.front_emission() else { return };
            if em.sender.is_broken() {
                return;
            }
            let chunk = if let Some(replayed) = em.resend.pop_front() {
                replayed
            } else {
                match Self::chunk_at(&em.payload, em.request, em.flow, em.sender.next_seq()) {
                    Some(fresh) => {
                        em.sender.submit(fresh.clone()).expect("pump submits in order");
                        fresh
                    }
                    None => return, // fully submitted; END ack will pop and re-pump
                }
            };
            (
                chunk,
                em.dest_node.clone(),
                em.dest_function.clone(),
                em.data.clone(),
                em.connector == ConnectorKind::Local,
            )
        };
        // Local streams hand the payload over by reference: no bits spent,
        // no wait. Remote chunks pay their payload bits to the egress bucket.
        let wait = if local {
            0
        } else {
            let bits = (chunk.payload.len() * 8) as u64;
            self.nodes[node]
                .engine
                .container_mut(cid)
                .expect("pumping container present")
                .bucket
                .acquire(bits, self.now)
                .expect("one chunk fits the burst")
        };
        let dest = self.dest_of(&dest_node);
        self.in_flight.insert((node, cid));
        self.queue.push(
            self.now + wait,
            Ev::Deliver { src_node: node, src_container: cid, dest, function, data, chunk },
        );
        self.queue.push(self.now + wait, Ev::Pump { node, container: cid });
    }

    fn on_deliver(
        &mut self,
        src_node: usize,
        src_container: ContainerId,
        dest: Dest,
        function: &str,
        data: &str,
        chunk: FlowChunk,
    ) {
        self.in_flight.remove(&(src_node, src_container));
        let this_delivery = self.delivery_counter;
        self.delivery_counter += 1;
        let request = chunk.request;
        let flow = chunk.flow;

        if self.faults.take_drop(this_delivery) {
            let name = self.nodes[src_node].name.clone();
            self.metrics.log(
                self.now,
                &name,
                "FAULT_DROP",
                &format!("req={} flow={:016x} seq={} nth={}", request.short(), flow, chunk.seq, this_delivery),
            );
            let c = self.nodes[src_node]
                .engine
                .container_mut(src_container)
                .expect("open flow pins the sender");
            let em = c.front_emission().expect("in-flight chunk comes from the front");
            debug_assert_eq!(em.flow, flow);
            em.sender.mark_broken();
            self.queue.push(
                self.now + self.tuning.retry_delay,
                Ev::Retry { node: src_node, container: src_container, request, flow },
            );
            return;
        }

        let dead = self
            .requests
            .get(&request)
            .map_or(true, |s| s.done || s.failed);
        let seq = chunk.seq;
        let is_end = chunk.is_end();
        let len = chunk.payload.len() as u64;
        let mut ready: Option<(usize, RequestId, String)> = None;
        let mut end_counts = is_end && !dead;
        match dest {
            Dest::Node(d) => {
                if !dead {
                    let outcome = self.nodes[d]
                        .sink
                        .put(self.now, function, data, &chunk)
                        .expect("streams arrive in order");
                    if outcome.accepted {
                        self.metrics.bytes_streamed += len;
                    } else {
                        self.metrics.dup_chunks_dropped += 1;
                    }
                    let dname = self.nodes[d].name.clone();
                    self.metrics.log(
                        self.now,
                        &dname,
                        "DELIVER",
                        &format!(
                            "req={} fn={} data={} seq={} end={}",
                            request.short(),
                            function,
                            data,
                            seq,
                            is_end as u8
                        ),
                    );
                    if let Some((req, f)) = outcome.function_ready {
                        ready = Some((d, req, f));
                    }
                }
            }
            Dest::Client => {
                if !dead {
                    self.metrics.bytes_streamed += len;
                    end_counts = self.collect_client(request, function, &chunk) && is_end;
                }
            }
        }

        // Sender side: ack, and close out the emission on END.
        let c = self.nodes[src_node]
            .engine
            .container_mut(src_container)
            .expect("open flow pins the sender");
        let em = c.front_emission().expect("front is the streaming emission");
        em.sender.on_delivered(seq);
        if em.sender.is_closed() {
            let closed = c.pop_emission().expect("closed front exists");
            c.flow_acked(self.now, closed.request, closed.flow);
            let name = self.nodes[src_node].name.clone();
            self.metrics.log(
                self.now,
                &name,
                "FLOW_CLOSE",
                &format!("req={} flow={:016x} dest={}", request.short(), flow, closed.dest_node),
            );
            self.queue.push(self.now, Ev::Pump { node: src_node, container: src_container });
        }

        if let Some((d, req, f)) = ready {
            self.on_ready(d, req, &f);
        }
        if end_counts {
            self.obligation_done(request);
        }
    }

    /// Client-side assembly of a terminal stream; duplicates from replays
    /// are dropped by sequence. Returns true when this chunk was newly
    /// accepted (END acceptance settles the obligation).
    fn collect_client(&mut self, request: RequestId, terminal: &str, chunk: &FlowChunk) -> bool {
        let record_outputs = self.tuning.record_outputs;
        let Some(st) = self.requests.get_mut(&request) else { return false };
        let col = st.collecting.entry(terminal.to_string()).or_default();
        if chunk.seq < col.next_seq {
            self.metrics.dup_chunks_dropped += 1;
            return false;
        }
        debug_assert_eq!(chunk.seq, col.next_seq, "client streams arrive in order");
        col.next_seq += 1;
        if record_outputs {
            col.assembled.extend_from_slice(&chunk.payload);
        }
        if chunk.is_end() {
            let bytes = std::mem::take(&mut col.assembled);
            let size = if record_outputs { bytes.len() } else { col.next_seq as usize };
            if record_outputs {
                st.outputs.insert(terminal.to_string(), bytes);
            }
            self.metrics.log(
                self.now,
                CLIENT,
                "OUTPUT",
                &format!("req={} terminal={} n={}", request.short(), terminal, size),
            );
        }
        true
    }

    fn on_retry(&mut self, node: usize, cid: ContainerId, request: RequestId, flow: FlowId) {
        let checkpoint = {
            let Some(c) = self.nodes[node].engine.container(cid) else { return };
            let Some(em) = c.outbound_front() else { return };
            if em.flow != flow || em.request != request || !em.sender.is_broken() {
                return;
            }
            match self.dest_of(&em.dest_node) {
                Dest::Node(d) => self.nodes[d].sink.checkpoint_for(request, flow),
                Dest::Client => None,
            }
        };
        let name = self.nodes[node].name.clone();
        let c = self.nodes[node].engine.container_mut(cid).expect("checked above");
        let em = c.front_emission().expect("checked above");
        em.sender.reopen();
        match em.sender.replay_from(checkpoint.as_ref()) {
            Ok(chunks) => {
                let from = chunks.first().map(|c| c.seq).unwrap_or(em.sender.next_seq());
                em.resend = chunks.into();
                self.metrics.log(
                    self.now,
                    &name,
                    "RETRY",
                    &format!("req={} flow={:016x} from_seq={}", request.short(), flow, from),
                );
                self.queue.push(self.now, Ev::Pump { node, container: cid });
            }
            Err(_) => {
                self.metrics.log(
                    self.now,
                    &name,
                    "RETENTION_LOST",
                    &format!("req={} flow={:016x}", request.short(), flow),
                );
                self.fail_request(request, "retention_lost");
            }
        }
    }

    fn on_timeout(&mut self, request: RequestId) {
        let expired = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if expired {
            self.fail_request(request, "deadline");
        }
    }

    fn fail_request(&mut self, request: RequestId, reason: &str) {
        let (index, release_client) = {
            let Some(st) = self.requests.get_mut(&request) else { return };
            if st.done || st.failed {
                return;
            }
            st.failed = true;
            let release = !st.client_released;
            st.client_released = true;
            (st.index, release)
        };
        self.live -= 1;
        self.metrics.failed += 1;
        self.metrics.log(
            self.now,
            "-",
            "REQUEST_FAIL",
            &format!("req={} idx={} reason={}", request.short(), index, reason),
        );
        // Tear down compute; in-flight data still drains so containers can
        // be reclaimed, but deliveries for this request are discarded.
        let mut redispatch: Vec<(usize, String)> = Vec::new();
        for n in 0..self.nodes.len() {
            let busy: Vec<ContainerId> = self.nodes[n]
                .engine
                .containers()
                .filter(|c| matches!(c.state(), ContainerState::Busy { request: r } if r == request))
                .map(|c| c.id)
                .collect();
            for cid in busy {
                let c = self.nodes[n].engine.container_mut(cid).unwrap();
                let function = c.function.clone();
                c.abort_flu(self.now);
                self.invocations.remove(&(n, cid));
                redispatch.push((n, function));
            }
            self.nodes[n].sink.release_request(self.now, request);
            self.nodes[n].engine.note_request_done(request, self.now);
        }
        for (n, function) in redispatch {
            self.dispatch_or_scale(n, &function);
        }
        if release_client && self.pattern.is_closed() && self.now < self.end_at {
            let next = self.next_index;
            self.next_index += 1;
            self.queue.push(self.now, Ev::Arrival { index: next });
        }
    }

    fn obligation_done(&mut self, request: RequestId) {
        let finished = {
            let Some(st) = self.requests.get_mut(&request) else { return };
            if st.done || st.failed {
                return;
            }
            st.obligations -= 1;
            debug_assert!(st.obligations >= 0, "more decrements than increments");
            st.obligations == 0 && st.terminal_done
        };
        if finished {
            self.request_done(request);
        }
    }

    fn request_done(&mut self, request: RequestId) {
        let (index, submit) = {
            let st = self.requests.get_mut(&request).expect("finishing request exists");
            st.done = true;
            st.end = Some(self.now);
            (st.index, st.submit)
        };
        self.live -= 1;
        self.metrics.log(
            self.now,
            "-",
            "REQUEST_DONE",
            &format!(
                "req={} idx={} latency_us={}",
                request.short(),
                index,
                (self.now - submit) / 1_000
            ),
        );
        for n in 0..self.nodes.len() {
            self.nodes[n].engine.note_request_done(request, self.now);
            if !self.tuning.proactive_release {
                self.nodes[n].sink.release_request(self.now, request);
            }
        }
    }

    fn on_ttl_sweep(&mut self) {
        for n in 0..self.nodes.len() {
            let spilled = self.nodes[n].sink.expire_sweep(self.now);
            if !spilled.is_empty() {
                let name = self.nodes[n].name.clone();
                self.metrics.log(self.now, &name, "SPILL", &format!("n={}", spilled.len()));
            }
        }
        if self.keep_ticking() {
            self.queue.push(self.now + self.tuning.ttl_sweep, Ev::TtlSweep);
        }
    }

    fn on_recycle_sweep(&mut self) {
        for n in 0..self.nodes.len() {
            let gone = self.nodes[n].engine.recycle_sweep(self.now, self.tuning.keepalive);
            if !gone.is_empty() {
                let name = self.nodes[n].name.clone();
                for cid in gone {
                    self.metrics.log(self.now, &name, "RECYCLE", &format!("c={cid}"));
                }
            }
        }
        if self.keep_ticking() {
            self.queue.push(self.now + self.tuning.ttl_sweep, Ev::RecycleSweep);
        }
    }

    fn on_gc_tick(&mut self) {
        for n in 0..self.nodes.len() {
            self.nodes[n].engine.gc_requests(self.now, self.tuning.gc_horizon);
        }
        if self.keep_ticking() {
            self.queue.push(self.now + self.tuning.gc_horizon, Ev::GcTick);
        }
    }

    fn finish(mut self) -> RunMetrics {
        let t_end = self.now.max(self.end_at);
        self.advance_to(t_end);
        for (id, st) in &self.requests {
            let record = RequestRecord {
                id: *id,
                index: st.index,
                submit: st.submit,
                start: st.start,
                end: st.end,
                failed: st.failed,
                outputs: st.outputs.clone(),
            };
            self.metrics.note_completion(&record);
            self.metrics.records.push(record);
        }
        for node in &self.nodes {
            let es = &node.engine.stats;
            self.metrics.cold_starts += es.cold_starts;
            self.metrics.containers_recycled += es.recycled;
            self.metrics.scale_pressure += es.scale_pressure;
            self.metrics.scale_no_idle += es.scale_no_idle;
            self.metrics.redos += es.redos;
            self.metrics.sink_byte_seconds += node.sink.stats.byte_seconds(t_end);
            self.metrics.sink_spills += node.sink.stats.spills;
            self.metrics.sink_double_deliveries += node.sink.stats.double_deliveries;
        }
        self.metrics.gb_seconds = self.mem_mb_ns as f64 / 1024.0 / 1e9;
        self.metrics.finalize();
        self.metrics
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{millis, secs};
    use crate::workflow::{function, oracle, plan_placement, ComputeModel, PlacementPolicy, Transform};

    fn nodes(n: usize) -> Vec<NodeSpec> {
        (0..n).map(|i| NodeSpec::new(format!("n{i}"), 16.0, 65_536)).collect()
    }

    fn tuning() -> RuntimeTuning {
        RuntimeTuning { record_outputs: true, ..RuntimeTuning::default() }
    }

    fn single_mix(out: u64) -> WorkflowDefinition {
        WorkflowDefinition::builder("solo")
            .function(function(
                "only",
                128,
                ComputeModel {
                    transform: Transform::Mix { out },
                    per_mib_cpu_ms: 0.0,
                    base_cpu_ms: 10.0,
                    emit_at: 1.0,
                },
                &["input"],
            ))
            .entry("only")
            .terminal("only")
            .build()
            .unwrap()
    }

    fn pipeline(sizes: &[u64]) -> WorkflowDefinition {
        // f0 -> f1 -> ... with Mix outputs of the given sizes.
        let mut b = WorkflowDefinition::builder("pipeline");
        for (i, &out) in sizes.iter().enumerate() {
            let inputs = if i == 0 { "input".to_string() } else { format!("d{}", i - 1) };
            b = b.function(function(
                &format!("f{i}"),
                128,
                ComputeModel {
                    transform: Transform::Mix { out },
                    per_mib_cpu_ms: 0.0,
                    base_cpu_ms: 10.0,
                    emit_at: 1.0,
                },
                &[inputs.as_str()],
            ));
        }
        for i in 0..sizes.len() - 1 {
            let next = format!("f{}", i + 1);
            b = b.flow(format!("f{i}"), format!("d{i}"), &[next.as_str()]);
        }
        b.entry("f0")
            .terminal(format!("f{}", sizes.len() - 1))
            .build()
            .unwrap()
    }

    fn run_simple(
        def: &WorkflowDefinition,
        n_nodes: usize,
        pattern: Pattern,
        input_size: u64,
        tuning: &RuntimeTuning,
        faults: FaultPlan,
    ) -> RunMetrics {
        let cluster = nodes(n_nodes);
        let names: Vec<String> = cluster.iter().map(|n| n.name.clone()).collect();
        let placement = plan_placement(def, &names, &PlacementPolicy::RoundRobin).unwrap();
        let setup = RunSetup {
            def,
            nodes: &cluster,
            placement: &placement,
            pattern,
            input_size,
            seed: 11,
        };
        run(&setup, tuning, faults)
    }

    #[test]
    fn single_function_latency_is_cold_start_plus_exec() {
        let def = single_mix(64);
        let m = run_simple(
            &def,
            1,
            Pattern::Closed { clients: 1, duration: secs(2) },
            1024,
            &tuning(),
            FaultPlan::none(),
        );
        // Cold start 500 ms + 100 ms exec (10 cpu-ms at 0.1 cores); the
        // 64-byte output rides the small path, so completion is immediate.
        let first = &m.records[0];
        assert_eq!(first.submit, 0);
        assert_eq!(first.end, Some(millis(600)));
        // Warm requests take exactly 100 ms.
        let second = &m.records[1];
        assert_eq!(second.end.unwrap() - second.submit, millis(100));
        assert_eq!(m.failed, 0);
        assert_eq!(m.cold_starts, 1);
        assert_eq!(m.streaming_connectors, 0);
        assert_eq!(m.bytes_streamed, 0);
    }

    #[test]
    fn outputs_match_direct_evaluation() {
        let def = pipeline(&[40_000, 20_000, 64]);
        let m = run_simple(
            &def,
            3,
            Pattern::Closed { clients: 2, duration: secs(3) },
            100_000,
            &tuning(),
            FaultPlan::none(),
        );
        assert!(m.completed >= 2);
        for r in m.records.iter().filter(|r| r.end.is_some()) {
            let input = request_input(11, r.index, 100_000);
            let want = oracle::expected_terminal_outputs(&def, &input);
            assert_eq!(r.outputs, want, "request {}", r.index);
        }
    }

    #[test]
    fn same_seed_same_log_and_different_seed_differs() {
        let def = pipeline(&[40_000, 64]);
        let pattern = Pattern::Open { rpm: 120.0, duration: secs(2) };
        let cluster = nodes(2);
        let names: Vec<String> = cluster.iter().map(|n| n.name.clone()).collect();
        let placement = plan_placement(&def, &names, &PlacementPolicy::RoundRobin).unwrap();
        let t = tuning();
        let mk = |seed| {
            let setup = RunSetup {
                def: &def,
                nodes: &cluster,
                placement: &placement,
                pattern,
                input_size: 50_000,
                seed,
            };
            run(&setup, &t, FaultPlan::none())
        };
        let a = mk(5);
        let b = mk(5);
        let c = mk(6);
        assert_eq!(a.event_log, b.event_log);
        assert_eq!(a.completed, b.completed);
        assert_ne!(a.event_log, c.event_log);
    }

    #[test]
    fn streamed_transfer_is_paced_by_the_egress_bucket() {
        // f0 emits 5_000_000 bytes to f1 on another node. The bucket banked
        // one full burst (a 65536-byte chunk) during f0's compute, so the
        // stream takes (40e6 - 524288) / 40e6 s = 986.8928 ms, not 1.0 s.
        // Timeline: 500 cold + 100 exec + 986.8928 transfer + 500 cold +
        // 100 exec, then the terminal's 64-byte answer lands instantly.
        let def = pipeline(&[5_000_000, 64]);
        let m = run_simple(
            &def,
            2,
            Pattern::Closed { clients: 1, duration: secs(4) },
            1024,
            &tuning(),
            FaultPlan::none(),
        );
        let first = &m.records[0];
        assert_eq!(first.end, Some(2_186_892_800));
        // Warm follow-up drops both cold starts: 100 + 986.8928 + 100 ms.
        let second = &m.records[1];
        assert_eq!(second.end.unwrap() - second.submit, 1_186_892_800);
        // One producer-to-consumer stream per request; the client answer is
        // small and opens no connector.
        assert_eq!(m.streaming_connectors, m.submitted);
        let input = request_input(11, 0, 1024);
        let want = oracle::expected_terminal_outputs(&def, &input);
        assert_eq!(first.outputs, want);
    }

    #[test]
    fn dropped_chunk_is_replayed_and_output_survives() {
        let def = pipeline(&[200_000, 64]);
        let mut clean_t = tuning();
        clean_t.pressure_enabled = false;
        let clean = run_simple(
            &def,
            2,
            Pattern::Closed { clients: 1, duration: secs(3) },
            1024,
            &clean_t,
            FaultPlan::none(),
        );
        let faulted = run_simple(
            &def,
            2,
            Pattern::Closed { clients: 1, duration: secs(3) },
            1024,
            &clean_t,
            FaultPlan::drop_delivery(1),
        );
        assert_eq!(faulted.failed, 0);
        assert!(faulted.records[0].end.unwrap() > clean.records[0].end.unwrap());
        let input = request_input(11, 0, 1024);
        let want = oracle::expected_terminal_outputs(&def, &input);
        assert_eq!(faulted.records[0].outputs, want);
        assert!(faulted.dup_chunks_dropped > 0 || faulted.event_log.iter().any(|l| l.contains("RETRY")));
    }

    #[test]
    fn killed_flu_reruns_without_double_counting() {
        let def = pipeline(&[40_000, 64]);
        let faults = FaultPlan { drop_deliveries: vec![], kill_flu: vec![("f1".into(), 0)] };
        let m = run_simple(
            &def,
            1,
            Pattern::Closed { clients: 1, duration: secs(3) },
            1024,
            &tuning(),
            faults,
        );
        assert_eq!(m.failed, 0);
        assert_eq!(m.redos, 1);
        let input = request_input(11, 0, 1024);
        let want = oracle::expected_terminal_outputs(&def, &input);
        assert_eq!(m.records[0].outputs, want);
        // Exactly one completion line per finished request: the rerun did
        // not double-complete anything.
        let done_lines = m.event_log.iter().filter(|l| l.contains("REQUEST_DONE req=")).count();
        let finished = m.records.iter().filter(|r| r.end.is_some()).count();
        assert_eq!(done_lines, finished);
    }

    #[test]
    fn pressure_blocks_producer_and_scales_out() {
        // Producer output (2 MB at 40 Mbps ~ 0.42 s) dwarfs its 10 ms FLU:
        // pressure must block, and with queued work a second producer must
        // cold-start for pressure, never for no_idle.
        let def = pipeline(&[2_000_000, 64]);
        let m = run_simple(
            &def,
            2,
            Pattern::Closed { clients: 4, duration: secs(10) },
            1024,
            &tuning(),
            FaultPlan::none(),
        );
        assert!(m.blocks > 0);
        assert!(m.scale_pressure > 0);
        assert_eq!(m.scale_no_idle, 2, "exactly one bootstrap per function");
        assert_eq!(m.failed, 0);
    }

    #[test]
    fn proactive_release_holds_fewer_byte_seconds() {
        let def = pipeline(&[600_000, 64]);
        let base = tuning();
        let mut held = tuning();
        held.proactive_release = false;
        let run_policy = |t: &RuntimeTuning| {
            run_simple(
                &def,
                2,
                Pattern::Open { rpm: 60.0, duration: secs(5) },
                40_000,
                t,
                FaultPlan::none(),
            )
        };
        let proactive = run_policy(&base);
        let completion = run_policy(&held);
        assert_eq!(proactive.completed, completion.completed);
        assert!(proactive.sink_byte_seconds < completion.sink_byte_seconds);
    }

    #[test]
    fn real_clock_matches_virtual_results() {
        let def = single_mix(64);
        let mut real = tuning();
        real.clock = ClockMode::Real;
        real.cold_start = millis(5);
        let mut virt = real.clone();
        virt.clock = ClockMode::Virtual;
        let pattern = Pattern::Closed { clients: 1, duration: millis(80) };
        let a = run_simple(&def, 1, pattern, 256, &real, FaultPlan::none());
        let b = run_simple(&def, 1, pattern, 256, &virt, FaultPlan::none());
        assert_eq!(a.event_log, b.event_log);
        assert_eq!(a.completed, b.completed);
    }

    #[test]
    fn zero_byte_input_flows_through() {
        let def = pipeline(&[40_000, 64]);
        let m = run_simple(
            &def,
            2,
            Pattern::Closed { clients: 1, duration: secs(2) },
            0,
            &tuning(),
            FaultPlan::none(),
        );
        assert_eq!(m.failed, 0);
        assert!(m.completed >= 1);
        let want = oracle::expected_terminal_outputs(&def, &[]);
        assert_eq!(m.records[0].outputs, want);
    }

    #[test]
    fn removing_an_unused_node_changes_nothing() {
        let def = pipeline(&[40_000, 64]);
        let t = tuning();
        let pattern = Pattern::Closed { clients: 2, duration: secs(2) };
        let mk = |count: usize| {
            let cluster = nodes(count);
            let names: Vec<String> = cluster.iter().take(2).map(|n| n.name.clone()).collect();
            let placement = plan_placement(&def, &names, &PlacementPolicy::RoundRobin).unwrap();
            let setup = RunSetup {
                def: &def,
                nodes: &cluster,
                placement: &placement,
                pattern,
                input_size: 2048,
                seed: 3,
            };
            run(&setup, &t, FaultPlan::none())
        };
        let two = mk(2);
        let three = mk(3); // third node hosts nothing
        assert_eq!(two.event_log, three.event_log);
        assert_eq!(two.completed, three.completed);
    }
}
