//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdfmap::archmodel::{preset, transfer_cycles};
use sdfmap::rachpd::{
    antenna_inputs, circ_correlate, decode_report, detect, rach_registry, root_spectrum, synth_slot, zc_root, Complex64,
    RachConfig, User, REPORT_PORT,
};
use sdfmap::runtime::{
    channel_map, decode_channel, encode_channel, execute, execute_reference, generate_programs, ChannelKind,
    ExecConfig, Fabric, KernelRegistry, Op, RuntimeError,
};
use sdfmap::scheduler::{list_schedule, reduce_syncs, sync_count, Constraints, TimingTable};
use sdfmap::sdfgraph::{base_name, expand, parse_graph, schedule_expression, SdfGraph};
use sdfmap::simcore::{check_deadline, simulate};

type Outcome = Result<String, String>;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rach_fixture() -> SdfGraph {
    parse_graph(&fixture("rachpd_115km.json")).expect("fixture parses")
}

fn timing() -> TimingTable {
    TimingTable::from_csv(&fixture("rachpd_timing.csv")).expect("timing table parses")
}

fn expansion_count() -> Outcome {
    let t0 = Instant::now();
    let dag = expand(&rach_fixture()).map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    check(dag.nodes.len() == 1357, format!("{} firings", dag.nodes.len()))?;
    check(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("1357 firings in {elapsed:?}"))
}

/// (actor base name, firings) of a looped expression.
fn expression_multiset(expr: &str) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<u64> = vec![1];
    let s = expr.as_bytes();
    let mut i = 0;
    while i < s.len() {
        match s[i] {
            b'(' => {
                i += 1;
                let start = i;
                while s[i].is_ascii_digit() {
                    i += 1;
                }
                let n: u64 = if i > start { expr[start..i].parse().unwrap() } else { 1 };
                stack.push(stack.last().unwrap() * n);
                if s[i] != b'(' {
                    let a = i;
                    while s[i] != b')' {
                        i += 1;
                    }
                    *out.entry(base_name(&expr[a..i]).to_string()).or_default() += stack.last().unwrap();
                }
            }
            b')' => {
                stack.pop();
                i += 1;
            }
            _ => unreachable!("unexpected byte in {expr}"),
        }
    }
    out
}

fn schedule_expression_counts() -> Outcome {
    let expr = schedule_expression(&rach_fixture()).map_err(|e| e.to_string())?;
    let got = expression_multiset(&expr);
    let want: BTreeMap<String, u64> = [
        ("Proc", 8),
        ("SingleZCProc", 512),
        ("PowAcc", 516),
        ("InitPower", 256),
        ("NoiseFloorThreshold", 64),
        ("PeakSearch", 1),
    ]
    .iter()
    .map(|&(a, n)| (a.to_string(), n))
    .collect();
    check(got == want, format!("{got:?} from {expr}"))?;
    check(got.values().sum::<u64>() == 1357, "total")?;
    Ok(expr)
}

fn transfer_model() -> Outcome {
    let sim = preset("tri_sym").unwrap();
    let m = &sim.media[0];
    let c = transfer_cycles(m, 4800);
    check((c - 1557.22).abs() <= 0.01, format!("4800 B -> {c} cycles"))?;
    let clock = sim.operators[0].clock_hz as f64;
    let gbps = 4800.0 / (c / clock) / 1e9;
    check((gbps - 3.08).abs() <= 0.01 * 3.08, format!("{gbps} GB/s"))?;
    let meas = preset("tri_measured").unwrap();
    let m = &meas.media[0];
    let big = 1u64 << 40;
    let asym = big as f64 / (transfer_cycles(m, big) / clock) / 1e9;
    check((asym - 1.6).abs() <= 0.016, format!("asymptote {asym} GB/s"))?;
    check(transfer_cycles(m, 0) == 2700.0, format!("zero-byte {}", transfer_cycles(m, 0)))?;
    Ok(format!("{c:.2} cycles, {gbps:.3} GB/s; measured asymptote {asym:.4} GB/s, 0 B = 2700"))
}

fn exploration() -> Outcome {
    let scenario: serde_json::Value = serde_json::from_str(&fixture("scenario_115km.json")).unwrap();
    let k = scenario["timing_inflation"].as_f64().ok_or("no inflation factor")?;
    let deadline = scenario["deadline_cycles"].as_f64().ok_or("no deadline")?;
    let dag = expand(&rach_fixture()).map_err(|e| e.to_string())?;
    let base = timing();
    let run = |p: &str, t: &TimingTable| -> Result<f64, String> {
        let arch = preset(p).unwrap();
        let s = list_schedule(&dag, &arch, t, &Constraints::none()).map_err(|e| e.to_string())?;
        Ok(simulate(&s, &dag, &arch).map_err(|e| e.to_string())?.makespan)
    };
    let mut spans = Vec::new();
    for p in ["mono", "dual", "tri_sym", "quad"] {
        spans.push(run(p, &base)?);
    }
    check(spans.windows(2).all(|w| w[1] <= w[0] + 1e-6), format!("makespans {spans:?}"))?;
    let inflated = base.inflated(k);
    let dual = run("dual", &inflated)?;
    let tri = run("tri_sym", &inflated)?;
    let verdict = |m: f64| check_deadline(&sdfmap::simcore::Timeline { makespan: m, ..Default::default() }, deadline).pass;
    check(!verdict(dual) && verdict(tri), format!("K={k}: dual {dual}, tri {tri}"))?;
    Ok(format!(
        "makespans {:?}; K={k}: dual {dual:.0} misses, tri {tri:.0} meets {deadline}",
        spans.iter().map(|m| m.round()).collect::<Vec<_>>()
    ))
}

fn protocol_laws() -> Outcome {
    check(channel_map(3).unwrap().len() == 12, "channel_map(3)")?;
    for p in 2..=8 {
        for s in 0..p {
            for r in (0..p).filter(|&r| r != s) {
                for kind in [ChannelKind::Frames, ChannelKind::Remainder] {
                    let id = encode_channel(p, s, r, kind);
                    check(decode_channel(p, id) == Ok((s, r, kind)), format!("round trip p={p} {s}->{r}"))?;
                }
            }
        }
    }

    let fab = Fabric::new(2, 64).unwrap();
    std::thread::scope(|s| {
        s.spawn(|| fab.startup_barrier(1).unwrap());
        fab.startup_barrier(0).unwrap();
    });
    let src = fab.new_buffer("src", 16);
    check(
        fab.send(0, 1, 7, &src) == Err(RuntimeError::AddressNotPublished { sender: 0, receiver: 1 }),
        "send before receive accepted",
    )?;

    // Barrier on 3 cores with injected start delays: nobody passes before
    // the slowest core arrives, and early notifications are refused.
    let fab = Fabric::new(3, 64).unwrap();
    let dst = fab.new_buffer("dst", 16);
    check(
        fab.publish_address(2, 0, 1, dst) == Err(RuntimeError::BarrierNotReached(2)),
        "notification before barrier accepted",
    )?;
    let delays = [Duration::from_millis(5), Duration::from_millis(60), Duration::from_millis(25)];
    let t0 = Instant::now();
    let released: Vec<Duration> = std::thread::scope(|s| {
        let hs: Vec<_> = (0..3)
            .map(|c| {
                let fab = &fab;
                s.spawn(move || {
                    std::thread::sleep(delays[c]);
                    fab.startup_barrier(c).unwrap();
                    t0.elapsed()
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    check(released.iter().all(|&d| d >= delays[1]), format!("released at {released:?}"))?;

    // Jittered tri-core executions of the bundled graph.
    let cfg = RachConfig::cell_115km();
    let dag = expand(&rach_fixture()).map_err(|e| e.to_string())?;
    let reg = rach_registry(&cfg).map_err(|e| e.to_string())?;
    let users = [User { root: 7, delay: 960, amplitude: 1.0 }, User { root: 40, delay: 4800, amplitude: 0.5 }];
    let streams = synth_slot(&cfg, &users, 0.3, &mut ChaCha8Rng::seed_from_u64(17)).map_err(|e| e.to_string())?;
    let ext = antenna_inputs(&streams);
    let arch = preset("tri_sym").unwrap();
    let sched = list_schedule(&dag, &arch, &timing(), &Constraints::none()).map_err(|e| e.to_string())?;
    let progs = generate_programs(&sched, &dag, &reg).map_err(|e| e.to_string())?;
    let reference = execute_reference(&dag, &reg, &ext).map_err(|e| e.to_string())?;
    let t0 = Instant::now();
    let runs = 1000;
    for seed in 0..runs {
        let cfg = ExecConfig {
            jitter_seed: Some(seed),
            ..Default::default()
        };
        let out = execute(&dag, &sched, &progs, &reg, &ext, &cfg).map_err(|e| format!("run {seed}: {e}"))?;
        check(out.outputs == reference, format!("run {seed} differs"))?;
    }
    Ok(format!(
        "12 channels, round trips p=2..8, AddressNotPublished, barrier; {runs} jittered runs identical ({:?})",
        t0.elapsed()
    ))
}

fn coherency_registry() -> KernelRegistry {
    let mut reg = KernelRegistry::new();
    reg.register("Source", |ctx| {
        let base = ctx.index as u8;
        Ok(BTreeMap::from([
            ("out".into(), (0..256).map(|i| base.wrapping_add(i as u8)).collect()),
            ("side".into(), vec![base ^ 0x5a; 32]),
        ]))
    });
    reg.register("Scale", |ctx| {
        let v = ctx.input("in")?.iter().map(|b| b.wrapping_mul(3)).collect();
        Ok(BTreeMap::from([("out".into(), v)]))
    });
    reg.register("Mix", |ctx| {
        let side = ctx.input("side")?;
        let v: Vec<u8> = ctx.input("in")?.iter().enumerate().map(|(i, b)| b ^ side[i % 32]).collect();
        Ok(BTreeMap::from([("out".into(), v[..128].to_vec())]))
    });
    reg.register("Sink", |ctx| Ok(BTreeMap::from([("sum".into(), ctx.input("in")?.to_vec())])));
    reg
}

fn coherency_auditor() -> Outcome {
    let g = parse_graph(&fixture("coherency_pipeline.json")).map_err(|e| e.to_string())?;
    let dag = expand(&g).map_err(|e| e.to_string())?;
    let arch = preset("tri_sym").unwrap();
    let cons = Constraints::from_json(&fixture("coherency_constraints.json")).map_err(|e| e.to_string())?;
    let t = TimingTable::new(Vec::new());
    let sched = list_schedule(&dag, &arch, &t, &cons).map_err(|e| e.to_string())?;
    let reg = coherency_registry();
    let progs = generate_programs(&sched, &dag, &reg).map_err(|e| e.to_string())?;
    let ext = BTreeMap::new();
    let cfg = ExecConfig::default();
    let full = execute(&dag, &sched, &progs, &reg, &ext, &cfg).map_err(|e| e.to_string())?;
    check(full.violations.is_empty(), format!("full discipline: {:?}", full.violations))?;
    check(full.outputs == execute_reference(&dag, &reg, &ext).unwrap(), "outputs differ from reference")?;

    let mut variants = 0;
    for (core, prog) in progs.iter().enumerate() {
        for (seq, ops) in [(0, &prog.compute_seq), (1, &prog.comm_seq)] {
            for (i, op) in ops.iter().enumerate() {
                if !matches!(op, Op::Writeback { .. } | Op::Invalidate { .. }) {
                    continue;
                }
                let mut broken = progs.clone();
                let target = if seq == 0 { &mut broken[core].compute_seq } else { &mut broken[core].comm_seq };
                target.remove(i);
                let res = execute(&dag, &sched, &broken, &reg, &ext, &cfg).map_err(|e| e.to_string())?;
                check(!res.violations.is_empty(), format!("removing {op} on core {core} went unnoticed"))?;
                variants += 1;
            }
        }
    }
    check(variants >= 2 * sched.transfers.len(), "fixture lacks cache operations")?;
    Ok(format!(
        "0 violations with full discipline; each of {variants} single removals flagged ({} transfers)",
        sched.transfers.len()
    ))
}

fn dsp_oracles() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for n in [11usize, 139] {
        for u in 1..n as u64 {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let root = zc_root(u, n).map_err(|e| e.to_string())?;
            let spec = root_spectrum(u, n).map_err(|e| e.to_string())?;
            let conj: Vec<Complex64> = spec.iter().map(|v| v.conj()).collect();
            let fast = circ_correlate(&x, &conj).map_err(|e| e.to_string())?;
            // Direct oracle: time-domain signal of `x` against the root.
            let sig: Vec<Complex64> = (0..n)
                .map(|t| {
                    (0..n)
                        .map(|k| x[k] * Complex64::from_polar(1.0, 2.0 * PI * (k * t % n) as f64 / n as f64))
                        .sum::<Complex64>()
                        / n as f64
                })
                .collect();
            let scale = fast.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for lag in 0..n {
                let d: Complex64 = (0..n).map(|k| sig[(k + lag) % n] * root[k].conj()).sum();
                check((d - fast[lag]).norm() <= 1e-9 * scale, format!("n={n} u={u} lag={lag}"))?;
            }
        }
    }
    let x1 = zc_root(1, 139).unwrap();
    let x2 = zc_root(2, 139).unwrap();
    let corr = |a: &[Complex64], b: &[Complex64], lag: usize| -> f64 {
        (0..139).map(|k| a[(k + lag) % 139] * b[k].conj()).sum::<Complex64>().norm()
    };
    check(x1.iter().all(|v| (v.norm() - 1.0).abs() < 1e-9), "unit modulus")?;
    check((corr(&x1, &x1, 0) - 139.0).abs() <= 1e-9 * 139.0, "autocorrelation peak")?;
    check((1..139).all(|l| corr(&x1, &x1, l) <= 1e-9 * 139.0), "autocorrelation sidelobes")?;
    let cross = (0..139).map(|l| corr(&x1, &x2, l)).fold(0.0, f64::max);
    check((cross - 139f64.sqrt()).abs() <= 1e-9 * 139f64.sqrt(), format!("cross {cross}"))?;

    let cfg = RachConfig::desk();
    for case in 0..100 {
        let root = rng.random_range(1..=64u64);
        let index = rng.random_range(0..=cfg.max_delay() / cfg.downsample).min(cfg.n_zc - 1);
        let user = User { root, delay: index * cfg.downsample, amplitude: rng.random_range(0.2..5.0) };
        let streams = synth_slot(&cfg, &[user], 0.0, &mut rng).map_err(|e| e.to_string())?;
        let (r, _) = detect(&streams, &cfg).map_err(|e| e.to_string())?;
        let got: Vec<(u64, usize)> = r.detections.iter().map(|d| (d.root, d.delay_index)).collect();
        check(got == vec![(root, index)], format!("case {case}: sent ({root}, {index}), got {got:?}"))?;
    }
    let elapsed = t0.elapsed();
    check(elapsed < Duration::from_secs(30), format!("took {elapsed:?}"))?;
    Ok(format!("oracles n=11,139; CAZAC; 100/100 closed-loop cases in {elapsed:?}"))
}

fn multicore_equivalence() -> Outcome {
    let cfg = RachConfig::desk();
    let dag = expand(&parse_graph(&fixture("rachpd_desk.json")).unwrap()).map_err(|e| e.to_string())?;
    let reg = rach_registry(&cfg).map_err(|e| e.to_string())?;
    let users = [
        User { root: 2, delay: 40, amplitude: 1.0 },
        User { root: 33, delay: 400, amplitude: 0.8 },
        User { root: 64, delay: 1000, amplitude: 1.2 },
    ];
    let streams = synth_slot(&cfg, &users, 0.4, &mut ChaCha8Rng::seed_from_u64(8)).map_err(|e| e.to_string())?;
    let ext = antenna_inputs(&streams);
    let arch = preset("tri_sym").unwrap();
    let sched = list_schedule(&dag, &arch, &timing(), &Constraints::none()).map_err(|e| e.to_string())?;
    check(sched.mapping.iter().any(|&o| o != sched.mapping[0]), "schedule uses one core only")?;
    let progs = generate_programs(&sched, &dag, &reg).map_err(|e| e.to_string())?;
    let multi = execute(&dag, &sched, &progs, &reg, &ext, &ExecConfig::default()).map_err(|e| e.to_string())?;
    let single = execute_reference(&dag, &reg, &ext).map_err(|e| e.to_string())?;
    let key = format!("PeakSearch#0.{REPORT_PORT}");
    let (a, b) = (&multi.outputs[&key], &single[&key]);
    check(a == b, "report bytes differ")?;
    let report = decode_report(a).map_err(|e| e.to_string())?;
    check(report == decode_report(b).unwrap(), "reports differ")?;
    let found: Vec<(u64, usize)> = report.detections.iter().map(|d| (d.root, d.timing_advance_samples)).collect();
    Ok(format!("3-core report identical to single core; detections {found:?}"))
}

fn sync_reduction() -> Outcome {
    let dag = expand(&rach_fixture()).map_err(|e| e.to_string())?;
    let arch = preset("tri_sym").unwrap();
    let sched = list_schedule(&dag, &arch, &timing(), &Constraints::none()).map_err(|e| e.to_string())?;
    let (reduced, rep) = reduce_syncs(&sched, &dag, &arch);
    check(sync_count(&reduced) < sync_count(&sched), format!("{rep:?}"))?;
    check(reduced.makespan <= sched.makespan + 1e-6, format!("{rep:?}"))?;
    Ok(format!(
        "syncs {} -> {}, makespan {:.0} -> {:.0}",
        rep.syncs_before, rep.syncs_after, rep.makespan_before, rep.makespan_after
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("expansion count", expansion_count),
        ("schedule expression", schedule_expression_counts),
        ("transfer model", transfer_model),
        ("exploration monotonicity", exploration),
        ("protocol laws", protocol_laws),
        ("coherency auditor", coherency_auditor),
        ("dsp oracle equivalence", dsp_oracles),
        ("multicore functional equivalence", multicore_equivalence),
        ("sync reduction", sync_reduction),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({:.2?}) {detail}", i + 1, t0.elapsed()),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({:.2?}) {why}", i + 1, t0.elapsed());
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
