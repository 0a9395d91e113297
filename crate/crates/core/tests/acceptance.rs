//! The acceptance gate. Each test prints one `acceptance NN <name>: PASS|FAIL`
//! line and then asserts, so the suite both reports and enforces. Thresholds
//! and tolerances are pinned here, not derived at run time.

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use flowsim::container::{Container, OutboundEmission};
use flowsim::engine::{Engine, ScaleReason};
use flowsim::harness::{chain, default_cluster, pipe, wordcount, Scenario};
use flowsim::pressure64;
use flowsim::sim::{request_input, FaultPlan, Pattern, RunMetrics, RuntimeTuning};
use flowsim::units::{millis, secs, Nanos, KIB, MIB};
use flowsim::wire::{
    chunk_payload, decode_frame, encode_frame, ConnectorHandle, ConnectorKind, FlowChunk, FlowId,
    FlowSender, RequestId, CHUNK_SIZE, FLAG_DATA, FLAG_END, FLAG_SMALL, HEADER_LEN,
};
use flowsim::workflow::{
    function, oracle, ComputeModel, PlacementPolicy, Transform, WorkflowDefinition,
};

fn verdict(n: u32, name: &str, pass: bool) -> bool {
    println!("acceptance {n:02} {name}: {}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn scenario(def: WorkflowDefinition, pattern: Pattern, input_size: u64, seed: u64) -> Scenario {
    Scenario::new(
        def,
        default_cluster(),
        &PlacementPolicy::RoundRobin,
        pattern,
        input_size,
        seed,
    )
    .unwrap()
}

fn ts_of(line: &str) -> u64 {
    line[..20].parse().unwrap()
}

fn line_kind(line: &str) -> &str {
    line.split_whitespace().nth(2).unwrap_or("")
}

fn detail_field<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    line.split_whitespace().find_map(|tok| tok.strip_prefix(key))
}

/// Timestamp of the first `kind` line for the given request and function.
fn event_ts(log: &[String], kind: &str, req: &str, func: &str) -> Option<u64> {
    log.iter()
        .find(|l| {
            line_kind(l) == kind
                && detail_field(l, "req=") == Some(req)
                && detail_field(l, "fn=") == Some(func)
        })
        .map(|l| ts_of(l))
}

// 1. Pressure formula: the runtime's arithmetic against an independently
// grouped evaluation, plus the signal-iff-positive rule observed on logs.
#[test]
fn criterion_01_pressure_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x01EA51);
    let mut worst_rel: f64 = 0.0;
    for _ in 0..1000 {
        let size = rng.gen_range(1u64..=1 << 30);
        let bw = rng.gen_range(1_000_000u64..=10_000_000_000);
        let t_flu = rng.gen_range(0.0..10.0);
        let alpha = rng.gen_range(0.5..2.0);
        let got = pressure64(size, bw, t_flu, alpha);
        let want = (8.0 * size as f64) * alpha / bw as f64 - t_flu;
        let rel = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        worst_rel = worst_rel.max(rel);
    }
    let formula_ok = worst_rel <= 1e-12;

    // Positive side: a 5 MiB emission against a 100 ms FLU blocks on every
    // invocation (and the cold first one has T_FLU = 0, also positive).
    let sc = scenario(chain(2, 5 * MIB), Pattern::Closed { clients: 1, duration: secs(12) }, KIB, 5);
    let m = sc.run_dataflow(&RuntimeTuning::default(), FaultPlan::none());
    let starts = |m: &RunMetrics, f: &str| {
        m.event_log
            .iter()
            .filter(|l| line_kind(l) == "FLU_START" && detail_field(l, "fn=") == Some(f))
            .count()
    };
    let blocks = |m: &RunMetrics, f: &str| {
        m.event_log
            .iter()
            .filter(|l| line_kind(l) == "BLOCK" && detail_field(l, "fn=") == Some(f))
            .count()
    };
    let hot_starts = starts(&m, "f0");
    let positive_ok = hot_starts > 1 && blocks(&m, "f0") == hot_starts;

    // Negative side: a 10 s FLU dwarfs a 17 KiB transfer, so only the cold
    // first emission (T_FLU still 0) may block.
    let slow = WorkflowDefinition::builder("slowchain")
        .function(function(
            "f0",
            128,
            ComputeModel {
                transform: Transform::Mix { out: 17 * KIB },
                per_mib_cpu_ms: 0.0,
                base_cpu_ms: 1000.0,
                emit_at: 1.0,
            },
            &["input"],
        ))
        .flow("f0", "d0", &["f1"])
        .function(function(
            "f1",
            128,
            ComputeModel {
                transform: Transform::Mix { out: KIB },
                per_mib_cpu_ms: 0.0,
                base_cpu_ms: 1000.0,
                emit_at: 1.0,
            },
            &["d0"],
        ))
        .entry("f0")
        .terminal("f1")
        .build()
        .unwrap();
    let sc = scenario(slow, Pattern::Closed { clients: 1, duration: secs(55) }, KIB, 5);
    let m = sc.run_dataflow(&RuntimeTuning::default(), FaultPlan::none());
    let slow_starts = starts(&m, "f0");
    let negative_ok = slow_starts >= 3 && blocks(&m, "f0") == 1;

    let pass = verdict(1, "pressure_formula", formula_ok && positive_ok && negative_ok);
    assert!(
        pass,
        "worst_rel={worst_rel:e} hot_starts={hot_starts} slow_starts={slow_starts}"
    );
}

// 2. Overlap throughput: one container, 100 ms compute, 100 ms transfer.
// Pressure is disabled because the premise is a fixed single container; with
// it on, the 10 ms positive pressure would scale the pool instead.
#[test]
fn criterion_02_overlap_throughput() {
    let sc = Scenario::new(
        pipe(),
        default_cluster(),
        &PlacementPolicy::SingleNode,
        Pattern::Closed { clients: 1, duration: secs(60) },
        KIB,
        2,
    )
    .unwrap();
    let mut tuning = RuntimeTuning::default();
    tuning.pressure_enabled = false;
    let df = sc.run_dataflow(&tuning, FaultPlan::none());
    let cf = sc.run_controlflow(&tuning);
    assert_eq!(df.cold_starts, 1, "premise: a single dataflow container");
    assert_eq!(cf.cold_starts, 1, "premise: a single baseline container");
    let pass = verdict(
        2,
        "overlap_throughput",
        df.completed >= 540 && cf.completed <= 330,
    );
    assert!(pass, "dataflow={} controlflow={}", df.completed, cf.completed);
}

// 3. Early triggering: A emits at 25% of a 200 ms run; on the warm request
// (index 1, past cold-start noise) B starts before A finishes. The baseline
// cannot dispatch B before A's persisted output plus the trigger hop.
#[test]
fn criterion_03_early_triggering() {
    let early = || {
        WorkflowDefinition::builder("early")
            .function(function(
                "a",
                128,
                ComputeModel {
                    transform: Transform::Mix { out: 64 * KIB },
                    per_mib_cpu_ms: 0.0,
                    base_cpu_ms: 20.0,
                    emit_at: 0.25,
                },
                &["input"],
            ))
            .flow("a", "x", &["b"])
            .function(function(
                "b",
                128,
                ComputeModel {
                    transform: Transform::Mix { out: KIB },
                    per_mib_cpu_ms: 0.0,
                    base_cpu_ms: 20.0,
                    emit_at: 1.0,
                },
                &["x"],
            ))
            .entry("a")
            .terminal("b")
            .build()
            .unwrap()
    };
    let mut df_hits = 0u32;
    let mut cf_hits = 0u32;
    for seed in 0..100u64 {
        let sc = scenario(early(), Pattern::Closed { clients: 1, duration: secs(4) }, KIB, seed);
        let tuning = RuntimeTuning::default();
        let df = sc.run_dataflow(&tuning, FaultPlan::none());
        let req = df.records[1].id.short();
        let b_start = event_ts(&df.event_log, "FLU_START", &req, "b").unwrap();
        let a_done = event_ts(&df.event_log, "FLU_DONE", &req, "a").unwrap();
        if b_start < a_done {
            df_hits += 1;
        }
        let cf = sc.run_controlflow(&tuning);
        let req = cf.records[1].id.short();
        let b_dispatch = event_ts(&cf.event_log, "DISPATCH", &req, "b").unwrap();
        let a_put = event_ts(&cf.event_log, "PUT_DONE", &req, "a").unwrap();
        if b_dispatch >= a_put + millis(63) {
            cf_hits += 1;
        }
    }
    let pass = verdict(3, "early_triggering", df_hits == 100 && cf_hits == 100);
    assert!(pass, "dataflow {df_hits}/100, baseline {cf_hits}/100");
}

// 4. Throughput ratio on wc(4, 4 MiB) across a closed-loop client sweep.
#[test]
fn criterion_04_throughput_ratio() {
    let tuning = RuntimeTuning::default();
    let mut df_peak = 0.0f64;
    let mut cf_peak = 0.0f64;
    let mut per_point_ok = true;
    let mut points = Vec::new();
    for clients in [1u64, 2, 4, 8, 16] {
        let sc = scenario(
            wordcount(4),
            Pattern::Closed { clients, duration: secs(120) },
            4 * MIB,
            7,
        );
        let df = sc.run_dataflow(&tuning, FaultPlan::none());
        let cf = sc.run_controlflow(&tuning);
        df_peak = df_peak.max(df.throughput_rpm());
        cf_peak = cf_peak.max(cf.throughput_rpm());
        if df.failed == 0 && cf.failed == 0 {
            per_point_ok &= df.throughput_rpm() > cf.throughput_rpm();
        }
        points.push((clients, df.throughput_rpm(), cf.throughput_rpm()));
    }
    let ratio = df_peak / cf_peak;
    let pass = verdict(4, "throughput_ratio", ratio >= 1.3 && per_point_ok);
    assert!(pass, "peak ratio {ratio:.3}, points {points:?}");
}

// 5. Proactive release + TTL halves sink residency against holding entries
// until request completion on the identical open-loop trace.
#[test]
fn criterion_05_sink_memory_reduction() {
    let sc = scenario(
        wordcount(4),
        Pattern::Open { rpm: 30.0, duration: secs(120) },
        4 * MIB,
        11,
    );
    let proactive = sc.run_dataflow(&RuntimeTuning::default(), FaultPlan::none());
    let mut hold = RuntimeTuning::default();
    hold.proactive_release = false;
    let held = sc.run_dataflow(&hold, FaultPlan::none());
    assert_eq!(proactive.completed, held.completed, "identical trace premise");
    let pass = verdict(
        5,
        "sink_memory_reduction",
        held.sink_byte_seconds > 0.0
            && proactive.sink_byte_seconds <= 0.5 * held.sink_byte_seconds,
    );
    assert!(
        pass,
        "proactive {} vs held {}",
        proactive.sink_byte_seconds, held.sink_byte_seconds
    );
}

// 6. Pressure-aware scaling: with the signal wired to the scaler, wc(4,
// 8 MiB) at 8 closed clients completes at least 1.5x what a fixed pool does.
#[test]
fn criterion_06_pressure_scaling_effect() {
    let pattern = Pattern::Closed { clients: 8, duration: secs(120) };
    let sc = scenario(wordcount(4), pattern, 8 * MIB, 13);
    let enabled = sc.run_dataflow(&RuntimeTuning::default(), FaultPlan::none());
    let mut off = RuntimeTuning::default();
    off.pressure_enabled = false;
    let disabled = sc.run_dataflow(&off, FaultPlan::none());
    assert!(enabled.scale_pressure > 0, "premise: the pressure path actually scaled");
    let pass = verdict(
        6,
        "pressure_scaling_effect",
        disabled.completed > 0
            && enabled.completed as f64 >= 1.5 * disabled.completed as f64,
    );
    assert!(pass, "enabled {} vs disabled {}", enabled.completed, disabled.completed);
}

// 7. Exactly-once and recovery: one dropped streaming chunk per seeded run;
// outputs still match the transform oracle, no double deliveries, and no
// function ever starts before its READY admit.
#[test]
fn criterion_07_exactly_once_recovery() {
    fn ready_precedes_every_start(log: &[String]) -> bool {
        let mut ready: BTreeSet<(String, String)> = BTreeSet::new();
        for l in log {
            let key = || {
                (
                    detail_field(l, "req=").unwrap_or("").to_string(),
                    detail_field(l, "fn=").unwrap_or("").to_string(),
                )
            };
            match line_kind(l) {
                "READY" => {
                    ready.insert(key());
                }
                "FLU_START" => {
                    if !ready.contains(&key()) {
                        return false;
                    }
                }
                _ => {}
            }
        }
        true
    }

    let mut bad = Vec::new();
    for seed in 0..200u64 {
        let sc = scenario(
            wordcount(4),
            Pattern::Open { rpm: 1.0, duration: secs(8) },
            MIB,
            seed,
        );
        let mut tuning = RuntimeTuning::default();
        tuning.record_outputs = true;
        let m = sc.run_dataflow(&tuning, FaultPlan::drop_delivery(seed % 20));
        let want = oracle::expected_terminal_outputs(&sc.def, &request_input(seed, 0, MIB));
        let ok = m.completed == 1
            && m.failed == 0
            && m.records[0].outputs == want
            && m.sink_double_deliveries == 0
            && m.event_log.iter().any(|l| line_kind(l) == "FAULT_DROP")
            && ready_precedes_every_start(&m.event_log);
        if !ok {
            bad.push(seed);
        }
    }
    let pass = verdict(7, "exactly_once_recovery", bad.is_empty());
    assert!(pass, "failing seeds: {bad:?}");
}

// 8. Keep-alive consistency: fuzzed lifecycle schedules against a mirror of
// the documented transition rules, then drain and sweep.
#[test]
fn criterion_08_keepalive_consistency() {
    #[derive(PartialEq, Clone, Copy)]
    enum M {
        Idle,
        Busy,
        Blocked,
    }

    fn emission(request: RequestId, flow: FlowId) -> OutboundEmission {
        let handle = ConnectorHandle {
            request,
            flow,
            kind: ConnectorKind::Remote,
            src_node: "n0".into(),
            dst_node: "n1".into(),
        };
        OutboundEmission {
            request,
            flow,
            data: "d".into(),
            source: "f".into(),
            dest_function: "g".into(),
            dest_node: "n1".into(),
            connector: ConnectorKind::Remote,
            payload: vec![0u8; 70_000],
            sender: FlowSender::new(handle),
            resend: VecDeque::new(),
        }
    }

    let mut mismatches = 0u32;
    let mut unsafe_recycles = 0u32;
    let mut missed_sweeps = 0u32;
    for case in 0..10_000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let keepalive: Nanos = rng.gen_range(millis(500)..secs(4));
        let mut eng = Engine::new("n0", 16.0, 65_536, 1);
        assert!(eng.request_scale("f", 128, ScaleReason::NoIdleFlu));
        let cid = eng.finish_cold_start("f", 0);

        let mut now: Nanos = 0;
        let mut state = M::Idle;
        let mut blocked_until: Nanos = 0;
        let mut queue: VecDeque<(RequestId, FlowId)> = VecDeque::new();
        let mut open: BTreeSet<(RequestId, FlowId)> = BTreeSet::new();
        let mut last: Nanos = 0;
        let mut next_flow: FlowId = 1;

        let ops = rng.gen_range(5..25);
        for _ in 0..ops {
            let op = rng.gen_range(0u32..8);
            let c = eng.container_mut(cid).unwrap();
            match op {
                0 => now += rng.gen_range(1..secs(3)),
                1 if state == M::Idle => {
                    c.begin_flu(now, RequestId::from_seed(case, next_flow));
                    state = M::Busy;
                    last = now;
                }
                2 if state == M::Busy => {
                    c.finish_flu(now, millis(50));
                    state = if now < blocked_until { M::Blocked } else { M::Idle };
                    last = now;
                }
                3 => {
                    let until = now + rng.gen_range(0..secs(2));
                    c.post_block(now, until);
                    blocked_until = blocked_until.max(until);
                    if state == M::Idle && now < blocked_until {
                        state = M::Blocked;
                    }
                    last = now;
                }
                4 => {
                    let fired = c.poll_unblock(now);
                    if state == M::Blocked && now >= blocked_until {
                        state = M::Idle;
                        last = now;
                        assert!(fired);
                    } else {
                        assert!(!fired);
                    }
                }
                5 => {
                    let key = (RequestId::from_seed(case, next_flow), next_flow);
                    next_flow += 1;
                    c.enqueue_emission(emission(key.0, key.1));
                    queue.push_back(key);
                    open.insert(key);
                }
                6 => {
                    let popped = c.pop_emission();
                    match queue.pop_front() {
                        Some(key) => {
                            let em = popped.expect("model says the queue was non-empty");
                            assert_eq!((em.request, em.flow), key);
                        }
                        None => assert!(popped.is_none()),
                    }
                }
                7 => {
                    if let Some(&key) = open.iter().next() {
                        c.flow_acked(now, key.0, key.1);
                        open.remove(&key);
                        last = now;
                    }
                }
                _ => {}
            }

            let model = state == M::Idle
                && queue.is_empty()
                && open.is_empty()
                && now.saturating_sub(last) >= keepalive;
            let c = eng.container(cid).unwrap();
            let got = c.is_recyclable(now, keepalive);
            if got != model {
                mismatches += 1;
                break;
            }
            if got && (!queue.is_empty() || !open.is_empty()) {
                unsafe_recycles += 1;
                break;
            }
        }

        // Drain everything, step past the deadline, and demand the sweep
        // takes the container.
        {
            let c = eng.container_mut(cid).unwrap();
            if state == M::Busy {
                c.finish_flu(now, millis(1));
            }
            while c.pop_emission().is_some() {}
            for key in std::mem::take(&mut open) {
                c.flow_acked(now, key.0, key.1);
            }
            now = now.max(blocked_until);
            c.poll_unblock(now);
        }
        now += keepalive;
        if !eng.recycle_sweep(now, keepalive).contains(&cid) {
            missed_sweeps += 1;
        }
    }
    let pass = verdict(
        8,
        "keepalive_consistency",
        mismatches == 0 && unsafe_recycles == 0 && missed_sweeps == 0,
    );
    assert!(pass, "mismatches={mismatches} unsafe={unsafe_recycles} missed={missed_sweeps}");
}

// 9. Wire protocol: golden header bytes, round-trip identity, and a decode
// that never panics on garbage.
#[test]
fn criterion_09_wire_protocol() {
    let hex = |bytes: &[u8]| bytes.iter().map(|b| format!("{b:02x}")).collect::<String>();

    let mut request = [0u8; 16];
    for (i, b) in request.iter_mut().enumerate() {
        *b = i as u8;
    }
    let golden_chunk = FlowChunk {
        request: RequestId(request),
        flow: 0x1122_3344_5566_7788,
        seq: 1,
        flags: FLAG_DATA | FLAG_END,
        payload: b"hi".to_vec(),
    };
    let frame = encode_frame(&golden_chunk);
    // 44-byte header: DF17 | 01 | flags | request | flow | seq | len | crc.
    let golden = "df170103000102030405060708090a0b0c0d0e0f\
                  1122334455667788000000000000000100000002d8932aac6869";
    let golden_ok = frame.len() == HEADER_LEN + 2
        && hex(&frame) == golden
        && decode_frame(&frame).unwrap() == golden_chunk;
    let mut corrupted = frame.clone();
    corrupted[44] ^= 0xFF;
    let corrupt_ok = decode_frame(&corrupted).is_err();

    let mut rng = ChaCha8Rng::seed_from_u64(0x3141);
    let mut roundtrip_ok = true;
    for _ in 0..10_000 {
        let small = rng.gen_bool(0.25);
        let len = if small {
            rng.gen_range(0..16_384)
        } else {
            rng.gen_range(0..=CHUNK_SIZE)
        };
        let mut payload = vec![0u8; len];
        rng.fill(&mut payload[..]);
        let flags = if small {
            FLAG_END | FLAG_SMALL
        } else {
            [FLAG_DATA, FLAG_END, FLAG_DATA | FLAG_END][rng.gen_range(0..3)]
        };
        let chunk = FlowChunk {
            request: RequestId(rng.gen()),
            flow: rng.gen(),
            seq: if small { 0 } else { rng.gen() },
            flags,
            payload,
        };
        if decode_frame(&encode_frame(&chunk)).as_ref() != Ok(&chunk) {
            roundtrip_ok = false;
            break;
        }
    }

    // Fuzz: random buffers and random mutations of a valid frame. Every
    // outcome must be a value or a typed error, never a panic.
    let mut accepted_garbage = 0u64;
    for _ in 0..100_000 {
        let buf: Vec<u8> = if rng.gen_bool(0.5) {
            let len = rng.gen_range(0..200);
            (0..len).map(|_| rng.gen()).collect()
        } else {
            let mut f = frame.clone();
            let flips = rng.gen_range(1..6);
            for _ in 0..flips {
                let i = rng.gen_range(0..f.len());
                f[i] ^= 1 << rng.gen_range(0..8);
            }
            f
        };
        if decode_frame(&buf).is_ok() {
            accepted_garbage += 1;
        }
    }
    // Mutated frames may still decode when flips stay inside the payload and
    // compensating bits are untouched; that is fine, only panics are not.
    let pass = verdict(
        9,
        "wire_protocol",
        golden_ok && corrupt_ok && roundtrip_ok,
    );
    assert!(pass, "golden={golden_ok} corrupt={corrupt_ok} roundtrip={roundtrip_ok} accepted={accepted_garbage}");
}

// 10. Small-data fast path: with every payload at 8 KiB, no streaming
// connector ever opens.
#[test]
fn criterion_10_small_data_fast_path() {
    let sc = scenario(
        chain(3, 8 * KIB),
        Pattern::Open { rpm: 1.0, duration: secs(10) },
        8 * KIB,
        3,
    );
    let m = sc.run_dataflow(&RuntimeTuning::default(), FaultPlan::none());
    let pass = verdict(
        10,
        "small_data_fast_path",
        m.completed == 1 && m.streaming_connectors == 0 && m.bytes_streamed == 0 && m.bytes_small > 0,
    );
    assert!(
        pass,
        "completed={} connectors={} streamed={} small={}",
        m.completed, m.streaming_connectors, m.bytes_streamed, m.bytes_small
    );
}

// 11. Token-bucket fidelity: a cold 128 MB container created at t=0 moves
// 5 MB through its own egress bucket in exactly 1.0 s of virtual time.
#[test]
fn criterion_11_token_bucket_fidelity() {
    let container = Container::new(1, "n0", "f", 128, 0);
    assert_eq!(container.bandwidth_bps(), 40_000_000, "premise: 128 MB is 40 Mbps");
    let mut bucket = container.bucket;
    let payload = vec![0xA5u8; 5_000_000];
    let chunks = chunk_payload(RequestId::from_seed(0, 0), 7, &payload, CHUNK_SIZE);
    let mut now: Nanos = 0;
    for chunk in &chunks {
        let wait = bucket
            .acquire((chunk.payload.len() * 8) as u64, now)
            .expect("chunks fit the burst");
        now += wait;
    }
    let tick = (now as i64 - 1_000_000_000).abs();
    let pass = verdict(11, "token_bucket_fidelity", tick <= 1);
    assert!(pass, "finished at {now} ns");
}

// 12. Fan-out adaptiveness: the dataflow advantage does not shrink as wc's
// fan grows (each step within 5% of the previous ratio).
#[test]
fn criterion_12_fanout_adaptiveness() {
    let tuning = RuntimeTuning::default();
    let mut ratios = Vec::new();
    for fan in [2usize, 4, 8, 16] {
        let mut df_peak = 0.0f64;
        let mut cf_peak = 0.0f64;
        for clients in [8u64, 16] {
            let sc = scenario(
                wordcount(fan),
                Pattern::Closed { clients, duration: secs(120) },
                4 * MIB,
                7,
            );
            let df = sc.run_dataflow(&tuning, FaultPlan::none());
            let cf = sc.run_controlflow(&tuning);
            df_peak = df_peak.max(df.throughput_rpm());
            cf_peak = cf_peak.max(cf.throughput_rpm());
        }
        ratios.push(df_peak / cf_peak);
    }
    let pass = verdict(
        12,
        "fanout_adaptiveness",
        ratios.windows(2).all(|w| w[1] >= 0.95 * w[0]),
    );
    assert!(pass, "ratios {ratios:?}");
}
