//! Per-node engine state: the warm container pool, the queue of ready
//! invocations per function, cold starts in flight, and per-request progress
//! used to plan recovery. The engine is pure bookkeeping; the simulator owns
//! the clock and drives it through these methods.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::container::{Container, ContainerId};
use crate::units::Nanos;
use crate::wire::RequestId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleReason {
    /// Transfer pressure above zero: data will outlive compute.
    Pressure,
    /// A bundle became ready and no idle container existed.
    NoIdleFlu,
}

impl std::fmt::Display for ScaleReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScaleReason::Pressure => write!(f, "pressure"),
            ScaleReason::NoIdleFlu => write!(f, "no_idle_flu"),
        }
    }
}

#[derive(Debug, Default, Clone, Serialize)]
pub struct EngineStats {
    pub cold_starts: u64,
    pub recycled: u64,
    pub evicted: u64,
    pub scale_pressure: u64,
    pub scale_no_idle: u64,
    pub scale_refused: u64,
    pub redos: u64,
}

#[derive(Debug)]
struct RequestProgress {
    dispatched: BTreeSet<String>,
    completed: BTreeSet<String>,
    done_at: Option<Nanos>,
}

/// Functions to run again after a fault: everything dispatched on this node
/// that never finished.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedoPlan {
    pub request: RequestId,
    pub reexecute: Vec<String>,
}

#[derive(Debug)]
pub struct Engine {
    pub node: String,
    cores: f64,
    memory_mb: u64,
    pool: BTreeMap<ContainerId, Container>,
    pending: BTreeMap<String, VecDeque<RequestId>>,
    /// In-flight cold starts per function, with the memory they reserve.
    cold_starting: BTreeMap<String, Vec<u64>>,
    max_cold_per_function: usize,
    next_id: ContainerId,
    requests: BTreeMap<RequestId, RequestProgress>,
    pub stats: EngineStats,
}

impl Engine {
    pub fn new(node: impl Into<String>, cores: f64, memory_mb: u64, id_base: ContainerId) -> Self {
        Engine {
            node: node.into(),
            cores,
            memory_mb,
            pool: BTreeMap::new(),
            pending: BTreeMap::new(),
            cold_starting: BTreeMap::new(),
            max_cold_per_function: 1,
            next_id: id_base,
            requests: BTreeMap::new(),
            stats: EngineStats::default(),
        }
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.pool.get(&id)
    }

    pub fn container_mut(&mut self, id: ContainerId) -> Option<&mut Container> {
        self.pool.get_mut(&id)
    }

    pub fn containers(&self) -> impl Iterator<Item = &Container> {
        self.pool.values()
    }

    pub fn containers_mut(&mut self) -> impl Iterator<Item = &mut Container> {
        self.pool.values_mut()
    }

    pub fn pool_size(&self) -> usize {
        self.pool.len()
    }

    pub fn count_for(&self, function: &str) -> usize {
        self.pool.values().filter(|c| c.function == function).count()
            + self.cold_starting.get(function).map_or(0, |v| v.len())
    }

    fn memory_used(&self) -> u64 {
        self.pool.values().map(|c| c.memory_mb).sum::<u64>()
            + self.cold_starting.values().flatten().sum::<u64>()
    }

    pub fn memory_free(&self) -> u64 {
        self.memory_mb.saturating_sub(self.memory_used())
    }

    pub fn cores(&self) -> f64 {
        self.cores
    }

    /// Queue a ready invocation; dispatch order per function is FIFO.
    pub fn admit_ready(&mut self, function: &str, request: RequestId) {
        self.pending
            .entry(function.to_string())
            .or_default()
            .push_back(request);
        self.requests
            .entry(request)
            .or_insert_with(|| RequestProgress {
                dispatched: BTreeSet::new(),
                completed: BTreeSet::new(),
                done_at: None,
            });
    }

    pub fn pending_len(&self, function: &str) -> usize {
        self.pending.get(function).map_or(0, |q| q.len())
    }

    /// Least-recently-used idle slot, ties broken by id for determinism.
    pub fn idle_container(&self, function: &str) -> Option<ContainerId> {
        self.pool
            .values()
            .filter(|c| c.function == function && c.is_idle())
            .min_by_key(|c| (c.last_active, c.id))
            .map(|c| c.id)
    }

    /// Pair the oldest pending invocation with an idle container, if both
    /// exist. The caller starts the FLU.
    pub fn next_dispatch(&mut self, function: &str) -> Option<(ContainerId, RequestId)> {
        let id = self.idle_container(function)?;
        let queue = self.pending.get_mut(function)?;
        let request = queue.pop_front()?;
        self.requests
            .get_mut(&request)
            .expect("admitted before dispatch")
            .dispatched
            .insert(function.to_string());
        Some((id, request))
    }

    pub fn note_function_done(&mut self, request: RequestId, function: &str) {
        if let Some(p) = self.requests.get_mut(&request) {
            p.completed.insert(function.to_string());
        }
    }

    pub fn note_request_done(&mut self, request: RequestId, now: Nanos) {
        if let Some(p) = self.requests.get_mut(&request) {
            p.done_at = Some(now);
        }
    }

    /// Forget requests finished more than `horizon` ago.
    pub fn gc_requests(&mut self, now: Nanos, horizon: Nanos) {
        self.requests
            .retain(|_, p| p.done_at.map_or(true, |t| now.saturating_sub(t) < horizon));
    }

    pub fn tracked_requests(&self) -> usize {
        self.requests.len()
    }

    /// Ask for one more container. Refused when a cold start for this
    /// function is already in flight (the pool grows one step at a time) or
    /// when memory cannot be reclaimed.
    pub fn request_scale(&mut self, function: &str, memory_mb: u64, reason: ScaleReason) -> bool {
        let in_flight = self.cold_starting.get(function).map_or(0, |v| v.len());
        if in_flight >= self.max_cold_per_function {
            self.stats.scale_refused += 1;
            return false;
        }
        while self.memory_free() < memory_mb {
            match self.evict_lru_idle() {
                Some(_) => {}
                None => {
                    self.stats.scale_refused += 1;
                    return false;
                }
            }
        }
        self.cold_starting
            .entry(function.to_string())
            .or_default()
            .push(memory_mb);
        match reason {
            ScaleReason::Pressure => self.stats.scale_pressure += 1,
            ScaleReason::NoIdleFlu => self.stats.scale_no_idle += 1,
        }
        true
    }

    /// The cold start matured: put the warm container in the pool.
    pub fn finish_cold_start(&mut self, function: &str, now: Nanos) -> ContainerId {
        let memory = self
            .cold_starting
            .get_mut(function)
            .and_then(|v| v.pop())
            .expect("cold start was requested");
        if self.cold_starting.get(function).is_some_and(|v| v.is_empty()) {
            self.cold_starting.remove(function);
        }
        let id = self.next_id;
        self.next_id += 1;
        let node = self.node.clone();
        self.pool.insert(id, Container::new(id, node, function, memory, now));
        self.stats.cold_starts += 1;
        id
    }

    /// Reclaim every container whose keep-alive conditions all hold.
    pub fn recycle_sweep(&mut self, now: Nanos, keepalive: Nanos) -> Vec<ContainerId> {
        let ids: Vec<ContainerId> = self
            .pool
            .values()
            .filter(|c| c.is_recyclable(now, keepalive))
            .map(|c| c.id)
            .collect();
        for id in &ids {
            self.pool.remove(id);
            self.stats.recycled += 1;
        }
        ids
    }

    /// Free memory under pressure: drop the longest-idle drained container
    /// even if its keep-alive has not expired yet.
    pub fn evict_lru_idle(&mut self) -> Option<ContainerId> {
        let victim = self
            .pool
            .values()
            .filter(|c| c.is_idle() && c.dlu_empty() && c.open_flow_count() == 0)
            .min_by_key(|c| (c.last_active, c.id))
            .map(|c| c.id)?;
        self.pool.remove(&victim);
        self.stats.evicted += 1;
        Some(victim)
    }

    /// After a fault, whatever this node dispatched for the request but never
    /// finished must run again.
    pub fn plan_redo(&mut self, request: RequestId) -> RedoPlan {
        let reexecute = self
            .requests
            .get(&request)
            .map(|p| p.dispatched.difference(&p.completed).cloned().collect())
            .unwrap_or_default();
        self.stats.redos += 1;
        RedoPlan { request, reexecute }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::secs;

    fn rid(n: u8) -> RequestId {
        RequestId([n; 16])
    }

    fn engine() -> Engine {
        Engine::new("n0", 16.0, 1024, 100)
    }

    fn warm(e: &mut Engine, function: &str) -> ContainerId {
        assert!(e.request_scale(function, 128, ScaleReason::NoIdleFlu));
        e.finish_cold_start(function, 0)
    }

    #[test]
    fn dispatch_is_fifo_per_function() {
        let mut e = engine();
        let c = warm(&mut e, "f");
        e.admit_ready("f", rid(1));
        e.admit_ready("f", rid(2));
        let (id, req) = e.next_dispatch("f").unwrap();
        assert_eq!((id, req), (c, rid(1)));
        e.container_mut(id).unwrap().begin_flu(0, req);
        // Only one idle container: second request waits.
        assert!(e.next_dispatch("f").is_none());
        assert_eq!(e.pending_len("f"), 1);
    }

    #[test]
    fn one_cold_start_in_flight_per_function() {
        let mut e = engine();
        assert!(e.request_scale("f", 128, ScaleReason::Pressure));
        assert!(!e.request_scale("f", 128, ScaleReason::Pressure));
        assert_eq!(e.memory_free(), 1024 - 128);
        e.finish_cold_start("f", 0);
        assert!(e.request_scale("f", 128, ScaleReason::Pressure));
        assert_eq!(e.stats.scale_pressure, 2);
        assert_eq!(e.stats.scale_refused, 1);
    }

    #[test]
    fn cold_start_evicts_lru_idle_when_memory_is_tight() {
        let mut e = Engine::new("n0", 16.0, 256, 0);
        let a = warm(&mut e, "a");
        e.container_mut(a).unwrap().last_active = secs(1);
        let b = warm(&mut e, "b");
        e.container_mut(b).unwrap().last_active = secs(2);
        assert_eq!(e.memory_free(), 0);
        // Needs 128: the longest-idle drained container goes.
        assert!(e.request_scale("c", 128, ScaleReason::NoIdleFlu));
        assert!(e.container(a).is_none());
        assert!(e.container(b).is_some());
        assert_eq!(e.stats.evicted, 1);
    }

    #[test]
    fn scale_refused_when_nothing_can_be_evicted() {
        let mut e = Engine::new("n0", 16.0, 128, 0);
        let a = warm(&mut e, "a");
        e.container_mut(a).unwrap().begin_flu(0, rid(1));
        assert!(!e.request_scale("b", 128, ScaleReason::NoIdleFlu));
        assert_eq!(e.stats.scale_refused, 1);
    }

    #[test]
    fn recycle_sweep_takes_only_fully_drained_idle_containers() {
        let keepalive = secs(900);
        let mut e = engine();
        let a = warm(&mut e, "a");
        let b = warm(&mut e, "b");
        e.container_mut(b).unwrap().begin_flu(secs(10), rid(1));
        let gone = e.recycle_sweep(secs(901), keepalive);
        assert_eq!(gone, vec![a]);
        assert!(e.container(b).is_some());
    }

    #[test]
    fn redo_plan_lists_dispatched_but_unfinished_functions() {
        let mut e = engine();
        warm(&mut e, "a");
        warm(&mut e, "b");
        e.admit_ready("a", rid(1));
        e.admit_ready("b", rid(1));
        let (ca, _) = e.next_dispatch("a").unwrap();
        e.container_mut(ca).unwrap().begin_flu(0, rid(1));
        e.note_function_done(rid(1), "a");
        let (cb, _) = e.next_dispatch("b").unwrap();
        e.container_mut(cb).unwrap().begin_flu(0, rid(1));
        let plan = e.plan_redo(rid(1));
        assert_eq!(plan.reexecute, vec!["b".to_string()]);
    }

    #[test]
    fn request_table_gc_drops_finished_requests_after_the_horizon() {
        let mut e = engine();
        e.admit_ready("f", rid(1));
        e.admit_ready("f", rid(2));
        e.note_request_done(rid(1), secs(10));
        e.gc_requests(secs(69), secs(60));
        assert_eq!(e.tracked_requests(), 2);
        e.gc_requests(secs(70), secs(60));
        assert_eq!(e.tracked_requests(), 1);
    }
}
