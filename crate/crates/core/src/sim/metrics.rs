//! Per-run accounting: request records, counters, the event log, and the
//! CSV renderings the command line tools emit.

use std::collections::BTreeMap;

use crate::units::{fmt_millis, nanos_to_secs_f64, Nanos};
use crate::wire::RequestId;

/// Lifecycle of one submitted request. `end` stays None for requests still
/// in flight when the run stopped; `failed` marks deadline or retention
/// failures, which never count as completions.
#[derive(Debug, Clone)]
pub struct RequestRecord {
    pub id: RequestId,
    pub index: u64,
    pub submit: Nanos,
    pub start: Option<Nanos>,
    pub end: Option<Nanos>,
    pub failed: bool,
    /// Terminal outputs, collected only when the run asks for them.
    pub outputs: BTreeMap<String, Vec<u8>>,
}

impl RequestRecord {
    pub fn latency(&self) -> Option<Nanos> {
        self.end.map(|e| e - self.submit)
    }
}

/// Everything a single run reports. Counter semantics: `completed` and the
/// latency list cover only requests that finished inside the measurement
/// window; `records` keeps every submission including drained stragglers.
#[derive(Debug, Clone, Default)]
pub struct RunMetrics {
    pub workload: String,
    pub duration: Nanos,
    pub submitted: u64,
    pub completed: u64,
    pub failed: u64,
    /// Sorted on finalize; milliseconds.
    pub latencies_ms: Vec<f64>,
    pub cold_starts: u64,
    pub containers_recycled: u64,
    pub scale_pressure: u64,
    pub scale_no_idle: u64,
    pub redos: u64,
    /// Callstack holds issued by the pressure rule and their total length.
    pub blocks: u64,
    pub block_nanos: u64,
    /// Replayed chunks the receiving side already had.
    pub dup_chunks_dropped: u64,
    /// Times a sink handed the same input bundle to a second FLU. The
    /// wait-match discipline makes this impossible; it is counted so runs can
    /// prove it stayed zero.
    pub sink_double_deliveries: u64,
    pub sink_spills: u64,
    /// Payload bytes that crossed a streaming connector (local or remote).
    pub bytes_streamed: u64,
    /// Payload bytes delivered via the small-value path.
    pub bytes_small: u64,
    /// Streaming connectors opened (small-value sends never open one).
    pub streaming_connectors: u64,
    /// Sum over containers of memory(GB) x lifetime(s).
    pub gb_seconds: f64,
    /// Sum over sink entries of resident bytes x residency time, in byte-seconds.
    pub sink_byte_seconds: f64,
    pub records: Vec<RequestRecord>,
    pub event_log: Vec<String>,
}

impl RunMetrics {
    pub fn new(workload: &str, duration: Nanos) -> Self {
        RunMetrics {
            workload: workload.to_string(),
            duration,
            ..RunMetrics::default()
        }
    }

    /// One line per event, fixed-width timestamp first so the log sorts
    /// textually in time order: `{ts:020} {node} {KIND} {detail}`.
    pub fn log(&mut self, ts: Nanos, node: &str, kind: &str, detail: &str) {
        self.event_log.push(format!("{ts:020} {node} {kind} {detail}"));
    }

    /// Record a completion; feeds throughput and latency only in-window.
    pub fn note_completion(&mut self, record: &RequestRecord) {
        if let Some(end) = record.end {
            if end <= self.duration {
                self.completed += 1;
                if let Some(lat) = record.latency() {
                    self.latencies_ms.push(lat as f64 / 1e6);
                }
            }
        }
    }

    pub fn finalize(&mut self) {
        self.latencies_ms.sort_by(|a, b| a.total_cmp(b));
        self.records.sort_by_key(|r| r.index);
    }

    /// Nearest-rank percentile over the in-window latencies.
    pub fn latency_percentile_ms(&self, p: f64) -> Option<f64> {
        percentile(&self.latencies_ms, p)
    }

    /// Completions per minute over the measurement window.
    pub fn throughput_rpm(&self) -> f64 {
        if self.duration == 0 {
            return 0.0;
        }
        self.completed as f64 / (nanos_to_secs_f64(self.duration) / 60.0)
    }

    pub fn mean_latency_ms(&self) -> Option<f64> {
        if self.latencies_ms.is_empty() {
            return None;
        }
        Some(self.latencies_ms.iter().sum::<f64>() / self.latencies_ms.len() as f64)
    }

    /// Per-request rows: header plus one line per submission in index order.
    pub fn requests_csv(&self) -> String {
        let mut out = String::from("request_id,index,submit_ms,start_ms,end_ms,latency_ms,failed\n");
        for r in &self.records {
            let opt = |v: Option<Nanos>| v.map(fmt_millis).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.id,
                r.index,
                fmt_millis(r.submit),
                opt(r.start),
                opt(r.end),
                opt(r.latency()),
                r.failed as u8,
            ));
        }
        out
    }

    /// One-row roll-up: header plus the aggregate line.
    pub fn summary_csv(&self) -> String {
        let pct = |p: f64| {
            self.latency_percentile_ms(p)
                .map(|v| format!("{v:.3}"))
                .unwrap_or_default()
        };
        format!(
            "workload,duration_s,submitted,completed,failed,throughput_rpm,p50_ms,p95_ms,p99_ms,\
             cold_starts,gb_seconds,sink_byte_seconds,bytes_streamed,bytes_small\n\
             {},{:.3},{},{},{},{:.3},{},{},{},{},{:.6},{:.6},{},{}\n",
            self.workload,
            nanos_to_secs_f64(self.duration),
            self.submitted,
            self.completed,
            self.failed,
            self.throughput_rpm(),
            pct(50.0),
            pct(95.0),
            pct(99.0),
            self.cold_starts,
            self.gb_seconds,
            self.sink_byte_seconds,
            self.bytes_streamed,
            self.bytes_small,
        )
    }
}

/// Nearest-rank: the ceil(p/100 * n)-th smallest value.
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    crate::num::percentile_nearest_rank(sorted, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::secs;

    fn record(index: u64, submit: Nanos, end: Nanos) -> RequestRecord {
        RequestRecord {
            id: RequestId::from_seed(1, index),
            index,
            submit,
            start: Some(submit),
            end: Some(end),
            failed: false,
            outputs: BTreeMap::new(),
        }
    }

    #[test]
    fn nearest_rank_matches_hand_computation() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile(&v, 50.0), Some(5.0));
        assert_eq!(percentile(&v, 95.0), Some(10.0));
        assert_eq!(percentile(&v, 99.0), Some(10.0));
        assert_eq!(percentile(&v, 10.0), Some(1.0));
        assert_eq!(percentile(&v[..1], 99.0), Some(1.0));
        assert_eq!(percentile(&[], 50.0), None);
    }

    #[test]
    fn only_in_window_completions_count() {
        let mut m = RunMetrics::new("t", secs(60));
        m.submitted = 2;
        let inside = record(0, 0, secs(10));
        let outside = record(1, secs(59), secs(61));
        m.records.push(inside.clone());
        m.records.push(outside.clone());
        m.note_completion(&inside);
        m.note_completion(&outside);
        m.finalize();
        assert_eq!(m.completed, 1);
        assert_eq!(m.latencies_ms, vec![10_000.0]);
        assert_eq!(m.throughput_rpm(), 1.0);
    }

    #[test]
    fn log_lines_sort_textually_by_time() {
        let mut m = RunMetrics::new("t", secs(1));
        m.log(123_456_789_000, "n0", "ARRIVAL", "req=bb");
        m.log(5, "n1", "FLU_DONE", "req=aa");
        assert_eq!(m.event_log[1], "00000000000000000005 n1 FLU_DONE req=aa");
        // The fixed-width stamp makes lexical order equal time order.
        let mut sorted = m.event_log.clone();
        sorted.sort();
        assert_eq!(sorted[0], m.event_log[1]);
        assert_eq!(sorted[1], m.event_log[0]);
    }

    #[test]
    fn csv_round_trip_shape() {
        let mut m = RunMetrics::new("wc", secs(60));
        m.submitted = 1;
        let r = record(0, 0, secs(2));
        m.records.push(r.clone());
        m.note_completion(&r);
        m.finalize();
        let csv = m.requests_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "request_id,index,submit_ms,start_ms,end_ms,latency_ms,failed"
        );
        let row = lines.next().unwrap();
        assert!(row.ends_with(",0,0.000000,0.000000,2000.000000,2000.000000,0"));
        assert!(m.summary_csv().contains("wc,60.000"));
    }
}
