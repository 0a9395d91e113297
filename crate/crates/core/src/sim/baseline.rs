//! Control-flow baseline: a central orchestrator walks the same workflow by
//! completion order. Every function run is Get inputs from the backend
//! store, compute, Put the output back, serialized inside one container; a
//! successor is triggered only after all its feeders have Put, plus a fixed
//! trigger overhead. Store traffic is charged to the container's own token
//! bucket in wire-chunk slices, so the double transfer costs real bandwidth
//! on both ends of every edge.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use crate::container::{ContainerId, ContainerState};
use crate::engine::{Engine, ScaleReason};
use crate::units::Nanos;
use crate::wire::{RequestId, TokenBucket, CHUNK_SIZE};
use crate::workflow::WorkflowDefinition;

use super::metrics::{RequestRecord, RunMetrics};
use super::queue::EventQueue;
use super::workload::{request_input, Pattern};
use super::{ClockMode, NodeSpec, RunSetup, RuntimeTuning};

#[derive(Debug)]
enum Ev {
    Arrival { index: u64 },
    /// Fires `trigger_overhead` after the last feeder completed.
    Trigger { request: RequestId, function: String },
    ColdDone { node: usize, function: String },
    GetDone { node: usize, container: ContainerId, generation: u64 },
    ComputeDone { node: usize, container: ContainerId, generation: u64 },
    PutDone { node: usize, container: ContainerId, generation: u64 },
    Timeout { request: RequestId },
    RecycleSweep,
    GcTick,
}

struct Node {
    name: String,
    engine: Engine,
}

/// One serialized Get/compute/Put occupancy of a container.
struct Occupancy {
    request: RequestId,
    generation: u64,
    function: String,
    produced: Vec<u8>,
    exec: Nanos,
}

struct ReqState {
    index: u64,
    submit: Nanos,
    start: Option<Nanos>,
    end: Option<Nanos>,
    failed: bool,
    done: bool,
    /// Scheduled triggers plus running occupancies; zero means complete.
    outstanding: i64,
    /// Feeders still to complete, per destination function.
    remaining: BTreeMap<String, usize>,
    outputs: BTreeMap<String, Vec<u8>>,
}

struct Sim<'a> {
    def: &'a WorkflowDefinition,
    placement: &'a crate::workflow::Placement,
    tuning: &'a RuntimeTuning,
    pattern: Pattern,
    input_size: u64,
    seed: u64,
    nodes: Vec<Node>,
    node_index: BTreeMap<String, usize>,
    /// Feeder counts per destination, cloned into each request.
    fan_in: BTreeMap<String, usize>,
    queue: EventQueue<Ev>,
    now: Nanos,
    end_at: Nanos,
    requests: BTreeMap<RequestId, ReqState>,
    occupancies: BTreeMap<(usize, ContainerId), Occupancy>,
    /// Backend store, one object per (request, data name).
    store: BTreeMap<(RequestId, String), Vec<u8>>,
    next_index: u64,
    live: u64,
    metrics: RunMetrics,
    mem_mb_ns: u128,
    last_t: Nanos,
}

pub fn run(setup: &RunSetup, tuning: &RuntimeTuning) -> RunMetrics {
    let mut sim = Sim::new(setup, tuning);
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
        if sim.live == 0 && sim.now >= sim.end_at {
            break;
        }
    }
    sim.finish()
}

/// Store traffic pacing: every object moves in wire-sized slices, each
/// acquired from the container's bucket in sequence starting at `from`.
fn charge_bytes(bucket: &mut TokenBucket, len: usize, from: Nanos) -> Nanos {
    let mut t = from;
    let mut off = 0usize;
    while off < len {
        let piece = (len - off).min(CHUNK_SIZE);
        let wait = bucket
            .acquire((piece * 8) as u64, t)
            .expect("one slice fits the burst");
        t += wait;
        off += piece;
    }
    t
}

impl<'a> Sim<'a> {
    fn new(setup: &RunSetup<'a>, tuning: &'a RuntimeTuning) -> Self {
        let nodes: Vec<Node> = setup
            .nodes
            .iter()
            .map(|spec: &NodeSpec| Node {
                name: spec.name.clone(),
                engine: Engine::new(spec.name.clone(), spec.cores, spec.memory_mb, 1),
            })
            .collect();
        let node_index = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.name.clone(), i))
            .collect();
        let mut fan_in: BTreeMap<String, usize> = BTreeMap::new();
        for f in setup.def.functions() {
            let feeders = setup.def.incoming(&f.name).count();
            if feeders > 0 {
                fan_in.insert(f.name.clone(), feeders);
            }
        }
        let duration = setup.pattern.duration();
        Sim {
            def: setup.def,
            placement: setup.placement,
            tuning,
            pattern: setup.pattern,
            input_size: setup.input_size,
            seed: setup.seed,
            nodes,
            node_index,
            fan_in,
            queue: EventQueue::new(),
            now: 0,
            end_at: duration,
            requests: BTreeMap::new(),
            occupancies: BTreeMap::new(),
            store: BTreeMap::new(),
            next_index: 0,
            live: 0,
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
        self.queue.push(self.tuning.ttl_sweep, Ev::RecycleSweep);
        self.queue.push(self.tuning.gc_horizon, Ev::GcTick);
    }

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

    fn keep_ticking(&self) -> bool {
        self.live > 0 || self.now < self.end_at
    }

    fn node_of(&self, function: &str) -> usize {
        self.node_index[self.placement.node_of(function)]
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Arrival { index } => self.on_arrival(index),
            Ev::Trigger { request, function } => self.on_trigger(request, &function),
            Ev::ColdDone { node, function } => self.on_cold_done(node, &function),
            Ev::GetDone { node, container, generation } => {
                self.on_phase(node, container, generation, "GET_DONE")
            }
            Ev::ComputeDone { node, container, generation } => {
                self.on_phase(node, container, generation, "COMPUTE_DONE")
            }
            Ev::PutDone { node, container, generation } => self.on_put_done(node, container, generation),
            Ev::Timeout { request } => self.on_timeout(request),
            Ev::RecycleSweep => self.on_recycle_sweep(),
            Ev::GcTick => self.on_gc_tick(),
        }
    }

    fn on_arrival(&mut self, index: u64) {
        let request = RequestId::from_seed(self.seed, index);
        let input = request_input(self.seed, index, self.input_size);
        let mut remaining = self.fan_in.clone();
        remaining.remove(self.def.entry());
        self.requests.insert(
            request,
            ReqState {
                index,
                submit: self.now,
                start: None,
                end: None,
                failed: false,
                done: false,
                outstanding: 1,
                remaining,
                outputs: BTreeMap::new(),
            },
        );
        self.live += 1;
        self.metrics.submitted += 1;
        self.metrics.log(
            self.now,
            "-",
            "ARRIVAL",
            &format!("req={} idx={} size={}", request.short(), index, input.len()),
        );
        // The client uploads straight into the store; the entry function
        // pays to Get it like any other object.
        for data in self.def.external_inputs() {
            self.store.insert((request, data), input.clone());
        }
        let entry = self.def.entry().to_string();
        self.queue.push(
            self.now + self.tuning.trigger_overhead,
            Ev::Trigger { request, function: entry },
        );

        if let Some(t) = self.pattern.next_arrival(self.now) {
            let next = self.next_index;
            self.next_index += 1;
            self.queue.push(t, Ev::Arrival { index: next });
        }
        self.queue.push(self.now + self.tuning.deadline, Ev::Timeout { request });
    }

    fn on_trigger(&mut self, request: RequestId, function: &str) {
        let alive = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if !alive {
            return;
        }
        let node = self.node_of(function);
        self.metrics.log(
            self.now,
            "-",
            "TRIGGER",
            &format!("req={} fn={}", request.short(), function),
        );
        self.nodes[node].engine.admit_ready(function, request);
        self.dispatch_or_scale(node, function);
    }

    /// Bootstrap provisioning only: one cold start when the function has no
    /// container here at all. The baseline has no backpressure signal, so
    /// its pool never grows past that.
    fn dispatch_or_scale(&mut self, node: usize, function: &str) {
        while let Some((cid, request)) = self.nodes[node].engine.next_dispatch(function) {
            let dead = self
                .requests
                .get(&request)
                .map_or(true, |s| s.done || s.failed);
            if dead {
                continue;
            }
            self.start_occupancy(node, cid, request);
        }
        if self.nodes[node].engine.pending_len(function) == 0
            || self.nodes[node].engine.count_for(function) > 0
        {
            return;
        }
        let memory_mb = self.def.function(function).expect("known function").memory_mb;
        if self.nodes[node]
            .engine
            .request_scale(function, memory_mb, ScaleReason::NoIdleFlu)
        {
            let name = self.nodes[node].name.clone();
            self.metrics.log(
                self.now,
                &name,
                "COLD_START",
                &format!("fn={function} reason=no_idle_flu"),
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
        self.metrics.log(self.now, &name, "COLD_DONE", &format!("fn={function} c={cid}"));
        self.dispatch_or_scale(node, function);
    }

    /// The whole Get -> compute -> Put timeline is fixed here: the container
    /// is the only user of its bucket and stays Busy throughout, so the
    /// reservations commute with any later event.
    fn start_occupancy(&mut self, node: usize, cid: ContainerId, request: RequestId) {
        let function = self.nodes[node]
            .engine
            .container(cid)
            .expect("dispatch names a pooled container")
            .function
            .clone();
        let spec = self.def.function(&function).expect("known function");
        let bundle: Vec<(String, Vec<u8>)> = spec
            .declared_inputs
            .iter()
            .map(|data| {
                let bytes = self
                    .store
                    .get(&(request, data.clone()))
                    .expect("triggered only after every feeder Put")
                    .clone();
                (data.clone(), bytes)
            })
            .collect();
        let input_bytes: u64 = bundle.iter().map(|(_, b)| b.len() as u64).sum();
        let refs: Vec<&[u8]> = bundle.iter().map(|(_, b)| b.as_slice()).collect();
        let produced = spec.compute.transform.apply(&function, &refs);
        let exec = spec.compute.exec_nanos(input_bytes, spec.memory_mb);

        let c = self.nodes[node]
            .engine
            .container_mut(cid)
            .expect("container present");
        c.begin_flu(self.now, request);
        let generation = c.generation;
        let mut get_end = self.now;
        for (_, bytes) in &bundle {
            get_end = charge_bytes(&mut c.bucket, bytes.len(), get_end);
        }
        let compute_end = get_end + exec;
        let put_end = charge_bytes(&mut c.bucket, produced.len(), compute_end);

        let st = self.requests.get_mut(&request).expect("live request");
        if st.start.is_none() {
            st.start = Some(self.now);
        }
        let name = self.nodes[node].name.clone();
        self.metrics.log(
            self.now,
            &name,
            "DISPATCH",
            &format!(
                "req={} fn={} c={} in={} exec_us={}",
                request.short(),
                function,
                cid,
                input_bytes,
                exec / 1_000
            ),
        );
        self.occupancies.insert(
            (node, cid),
            Occupancy { request, generation, function, produced, exec },
        );
        self.queue.push(get_end, Ev::GetDone { node, container: cid, generation });
        self.queue.push(compute_end, Ev::ComputeDone { node, container: cid, generation });
        self.queue.push(put_end, Ev::PutDone { node, container: cid, generation });
    }

    fn occupancy_live(&self, node: usize, cid: ContainerId, generation: u64) -> bool {
        self.occupancies
            .get(&(node, cid))
            .is_some_and(|o| o.generation == generation)
            && self.nodes[node]
                .engine
                .container(cid)
                .is_some_and(|c| c.generation == generation)
    }

    fn on_phase(&mut self, node: usize, cid: ContainerId, generation: u64, kind: &str) {
        if !self.occupancy_live(node, cid, generation) {
            return;
        }
        let o = &self.occupancies[&(node, cid)];
        let line = format!("req={} fn={} c={}", o.request.short(), o.function, cid);
        let name = self.nodes[node].name.clone();
        self.metrics.log(self.now, &name, kind, &line);
    }

    fn on_put_done(&mut self, node: usize, cid: ContainerId, generation: u64) {
        if !self.occupancy_live(node, cid, generation) {
            return;
        }
        let o = self.occupancies.remove(&(node, cid)).expect("checked live");
        let request = o.request;
        let function = o.function;
        let produced = o.produced;
        let name = self.nodes[node].name.clone();
        self.nodes[node]
            .engine
            .container_mut(cid)
            .unwrap()
            .finish_flu(self.now, o.exec);
        self.nodes[node].engine.note_function_done(request, &function);
        self.metrics.log(
            self.now,
            &name,
            "PUT_DONE",
            &format!("req={} fn={} c={} out={}", request.short(), function, cid, produced.len()),
        );

        let alive = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if alive {
            // Route to successors; the orchestrator resolves switches
            // centrally from the stored payload.
            let mut receivers: Vec<(String, String)> = Vec::new();
            for edge in self.def.outgoing(&function) {
                if edge.is_switch() {
                    let arm = crate::workflow::switch_index(&produced, edge.destinations.len());
                    let dest = &edge.destinations[arm];
                    self.metrics.log(
                        self.now,
                        "-",
                        "SWITCH",
                        &format!("req={} fn={} arm={} dest={}", request.short(), function, arm, dest),
                    );
                    receivers.push((dest.clone(), edge.data_name.clone()));
                } else {
                    for dest in &edge.destinations {
                        receivers.push((dest.clone(), edge.data_name.clone()));
                    }
                }
            }
            for (_, data) in &receivers {
                self.store.insert((request, data.clone()), produced.clone());
            }
            if self.def.is_terminal(&function) && self.tuning.record_outputs {
                let st = self.requests.get_mut(&request).expect("alive");
                st.outputs.insert(function.clone(), produced);
            }
            let st = self.requests.get_mut(&request).expect("alive");
            for (dest, _) in receivers {
                let left = st
                    .remaining
                    .get_mut(&dest)
                    .expect("every destination has a feeder count");
                *left -= 1;
                if *left == 0 {
                    st.outstanding += 1;
                    self.queue.push(
                        self.now + self.tuning.trigger_overhead,
                        Ev::Trigger { request, function: dest },
                    );
                }
            }
            st.outstanding -= 1;
            if st.outstanding == 0 {
                self.request_done(request);
            }
        }
        self.dispatch_or_scale(node, &function);
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
        self.store.retain(|(r, _), _| *r != request);
        for n in 0..self.nodes.len() {
            self.nodes[n].engine.note_request_done(request, self.now);
        }
        // The orchestrator reports completion to the client only now, with
        // the output safely in the store; a closed-loop client reissues here.
        if self.pattern.is_closed() && self.now < self.end_at {
            let next = self.next_index;
            self.next_index += 1;
            self.queue.push(self.now, Ev::Arrival { index: next });
        }
    }

    fn on_timeout(&mut self, request: RequestId) {
        let expired = self
            .requests
            .get(&request)
            .map_or(false, |s| !s.done && !s.failed);
        if !expired {
            return;
        }
        {
            let st = self.requests.get_mut(&request).expect("checked");
            st.failed = true;
        }
        self.live -= 1;
        self.metrics.failed += 1;
        let index = self.requests[&request].index;
        self.metrics.log(
            self.now,
            "-",
            "REQUEST_FAIL",
            &format!("req={} idx={} reason=deadline", request.short(), index),
        );
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
                self.occupancies.remove(&(n, cid));
                redispatch.push((n, function));
            }
            self.nodes[n].engine.note_request_done(request, self.now);
        }
        self.store.retain(|(r, _), _| *r != request);
        for (n, function) in redispatch {
            self.dispatch_or_scale(n, &function);
        }
        if self.pattern.is_closed() && self.now < self.end_at {
            let next = self.next_index;
            self.next_index += 1;
            self.queue.push(self.now, Ev::Arrival { index: next });
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
            self.metrics.scale_no_idle += es.scale_no_idle;
        }
        self.metrics.gb_seconds = self.mem_mb_ns as f64 / 1024.0 / 1e9;
        self.metrics.finalize();
        self.metrics
    }
}
