use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use sdfmap::archmodel::{transfer_cycles, ArchGraph};
use sdfmap::sdfgraph::{expand as expand_graph, flatten, repetition_vector, schedule_expression, serialize_graph, FiringDag};
use sdfmap::scheduler::{list_schedule, load_report, reduce_syncs, sync_count, TimedSchedule};
use sdfmap::simcore::{check_deadline, export_gantt, simulate as replay, simulate_pipelined, Timeline};

use crate::scenario::{load_arch, load_graph, Scenario};
use crate::{domain, usage, CliError, ScenarioArgs, Verdict};

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| domain(format!("{}: {e}", path.display())))
}

pub fn expand(path: &Path, flat_out: Option<&Path>) -> Verdict {
    let graph = load_graph(path)?;
    let flat = flatten(&graph).map_err(|e| domain(e.to_string()))?;
    let q = repetition_vector(&flat).map_err(|e| domain(e.to_string()))?;
    let dag = expand_graph(&graph).map_err(|e| domain(e.to_string()))?;
    let expr = schedule_expression(&graph).map_err(|e| domain(e.to_string()))?;
    println!("repetition vector:");
    for a in &flat.actors {
        println!("  {} {}", a.id, q[&a.id]);
    }
    println!("firings: {}", dag.nodes.len());
    println!("arcs: {}", dag.arcs.len());
    println!("expression: {expr}");
    if let Some(p) = flat_out {
        write_file(p, &serialize_graph(&flat))?;
    }
    Ok(true)
}

struct Planned {
    scenario: Scenario,
    arch: ArchGraph,
    dag: FiringDag,
    schedule: TimedSchedule,
}

fn plan(args: &ScenarioArgs) -> Result<Planned, CliError> {
    let scenario = Scenario::load(&args.scenario)?;
    let arch = scenario.arch(args.arch.as_deref())?;
    let (dag, schedule) = schedule_on(&scenario, &arch)?;
    let schedule = if args.reduce_syncs {
        let (s, rep) = reduce_syncs(&schedule, &dag, &arch);
        eprintln!(
            "reduce-syncs: transfers {} -> {}, syncs {} -> {}",
            rep.transfers_before, rep.transfers_after, rep.syncs_before, rep.syncs_after
        );
        s
    } else {
        schedule
    };
    Ok(Planned { scenario, arch, dag, schedule })
}

fn schedule_on(scenario: &Scenario, arch: &ArchGraph) -> Result<(FiringDag, TimedSchedule), CliError> {
    let dag = expand_graph(&scenario.graph).map_err(|e| domain(e.to_string()))?;
    let schedule =
        list_schedule(&dag, arch, &scenario.timing, &scenario.constraints).map_err(|e| domain(e.to_string()))?;
    Ok((dag, schedule))
}

fn loads_text(schedule: &TimedSchedule) -> String {
    load_report(schedule)
        .iter()
        .map(|(op, l)| format!("{op}={:.1}%", 100.0 * l))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn explore(path: &Path, presets: Option<Vec<String>>, csv: Option<PathBuf>) -> Verdict {
    let scenario = Scenario::load(path)?;
    let presets: Vec<String> = presets
        .unwrap_or_else(|| scenario.presets.clone())
        .into_iter()
        .filter(|p| !p.trim().is_empty())
        .collect();
    if presets.is_empty() {
        return Err(usage("no architectures to explore: pass --presets or list them in the scenario"));
    }
    let mut table = String::from("arch,operators,makespan_cycles,syncs,loads,deadline_cycles,verdict\n");
    println!("{:<14} {:>4} {:>14} {:>6}  {:<8} loads", "arch", "ops", "makespan", "syncs", "deadline");
    for p in &presets {
        let arch = load_arch(p, Path::new("."))?;
        let (dag, schedule) = schedule_on(&scenario, &arch)?;
        let t = replay(&schedule, &dag, &arch).map_err(|e| domain(e.to_string()))?;
        let verdict = match scenario.deadline_cycles {
            Some(d) if check_deadline(&t, d).pass => "pass",
            Some(_) => "miss",
            None => "-",
        };
        let loads = loads_text(&schedule);
        println!(
            "{:<14} {:>4} {:>14.0} {:>6}  {:<8} {loads}",
            p,
            arch.operators.len(),
            t.makespan,
            sync_count(&schedule),
            verdict
        );
        let deadline = scenario.deadline_cycles.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(
            table,
            "{p},{},{},{},{loads},{deadline},{verdict}",
            arch.operators.len(),
            t.makespan,
            sync_count(&schedule)
        );
    }
    let csv = csv.unwrap_or_else(|| scenario.output_dir.join("explore.csv"));
    write_file(&csv, &table)?;
    println!("wrote {}", csv.display());
    Ok(true)
}

pub fn schedule(args: &ScenarioArgs, out: Option<&Path>) -> Verdict {
    let p = plan(args)?;
    println!("operators: {}", p.schedule.operators.join(" "));
    println!("firings: {}", p.dag.nodes.len());
    println!("transfers: {}", p.schedule.transfers.len());
    println!("syncs: {}", sync_count(&p.schedule));
    println!("makespan: {:.0}", p.schedule.makespan);
    println!("loads: {}", loads_text(&p.schedule));
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| p.scenario.output_dir.join("schedule.json"));
    let json = serde_json::to_string_pretty(&p.schedule.to_json(&p.dag)).expect("schedule serializes");
    write_file(&out, &json)?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn report_timeline(t: &Timeline, deadline: Option<f64>) -> bool {
    println!("makespan: {:.0}", t.makespan);
    for (res, busy) in &t.busy {
        let share = if t.makespan > 0.0 { busy / t.makespan } else { 0.0 };
        println!("  {res}: busy {busy:.0} ({:.1}%)", 100.0 * share);
    }
    match deadline {
        Some(d) => {
            let v = check_deadline(t, d);
            println!(
                "deadline {:.0}: {} (slack {:.0})",
                d,
                if v.pass { "pass" } else { "miss" },
                v.slack
            );
            v.pass
        }
        None => true,
    }
}

pub fn simulate(args: &ScenarioArgs, iterations: usize) -> Verdict {
    let p = plan(args)?;
    if iterations == 0 {
        return Err(usage("--iterations must be at least 1"));
    }
    if iterations == 1 {
        let t = replay(&p.schedule, &p.dag, &p.arch).map_err(|e| domain(e.to_string()))?;
        return Ok(report_timeline(&t, p.scenario.deadline_cycles));
    }
    let r = simulate_pipelined(&p.schedule, &p.dag, &p.arch, iterations).map_err(|e| domain(e.to_string()))?;
    println!("iterations: {iterations}");
    println!("period: {:.0}", r.period_cycles);
    println!("latency: {:.0}", r.latency_cycles);
    for (op, stages) in &r.stages {
        println!("  {op}: {}", stages.iter().cloned().collect::<Vec<_>>().join(" "));
    }
    // The deadline bounds one slot, so it applies to the steady-state period.
    Ok(match p.scenario.deadline_cycles {
        Some(d) => {
            let pass = r.period_cycles <= d;
            println!("deadline {d:.0}: {}", if pass { "pass" } else { "miss" });
            pass
        }
        None => true,
    })
}

pub fn gantt(args: &ScenarioArgs, out: &Path) -> Verdict {
    let p = plan(args)?;
    let t = replay(&p.schedule, &p.dag, &p.arch).map_err(|e| domain(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
    }
    let (svg, json) = export_gantt(&t, out).map_err(|e| domain(e.to_string()))?;
    println!("makespan: {:.0}", t.makespan);
    println!("wrote {} and {}", svg.display(), json.display());
    Ok(true)
}

pub fn bench_transfer(spec: &str, sizes: &[u64], medium: usize) -> Verdict {
    if sizes.is_empty() {
        return Err(usage("--sizes must not be empty"));
    }
    let arch = load_arch(spec, Path::new("."))?;
    let m = arch
        .media
        .get(medium)
        .ok_or_else(|| usage(format!("{spec} has {} media, no index {medium}", arch.media.len())))?;
    let clock = arch.operators.first().map(|o| o.clock_hz as f64).unwrap_or(1e9);
    println!("medium {} ({} Hz clock)", m.id, clock);
    println!("{:>12} {:>14} {:>10}", "bytes", "cycles", "GB/s");
    let pts: Vec<(f64, f64)> = sizes.iter().map(|&n| (n as f64, transfer_cycles(m, n))).collect();
    for &(n, c) in &pts {
        let gbps = if c > 0.0 { n / (c / clock) / 1e9 } else { 0.0 };
        println!("{n:>12} {c:>14.2} {gbps:>10.4}");
    }
    let (a, b, resid) = affine_fit(&pts);
    println!("affine fit: cycles = {a:.3} + {b:.6} * bytes (max residual {resid:.3e} cycles)");
    if b > 0.0 {
        println!("asymptotic bandwidth: {:.4} GB/s", 1.0 / b * clock / 1e9);
    }
    Ok(true)
}

/// Least-squares line through `pts`; returns (intercept, slope, max |residual|).
fn affine_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let resid = pts.iter().map(|p| (p.1 - a - b * p.0).abs()).fold(0.0, f64::max);
    (a, b, resid)
}

#[derive(Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Compare the outputs with a single-core reference execution
    #[arg(long)]
    pub verify: bool,
    /// Pace transfers to the modeled medium cost
    #[arg(long)]
    pub throttle: bool,
    /// RACH configuration of the kernels: desk, 115km or a JSON file
    /// (default: recognized from the graph)
    #[arg(long)]
    pub rach: Option<String>,
    /// Antenna sample streams, one file per antenna (default: synthesized)
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
    /// Synthesized user as root:delay[:amplitude]; repeatable
    #[arg(long = "user", value_parser = crate::rach::parse_user)]
    pub users: Vec<sdfmap::rachpd::User>,
    /// Per-sample SNR of synthesized streams in dB (default: noiseless)
    #[arg(long)]
    pub snr: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Directory for outputs and the trace (default: the scenario's)
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn external_inputs(
    args: &RunArgs,
    cfg: &sdfmap::rachpd::RachConfig,
) -> Result<std::collections::BTreeMap<String, Vec<u8>>, CliError> {
    use sdfmap::rachpd::{antenna_inputs, read_stream};
    let streams = if args.input.is_empty() {
        crate::rach::synthesize(cfg, &args.users, args.snr, args.seed)?
    } else {
        if args.input.len() != cfg.antennas {
            return Err(usage(format!("{} antennas configured, {} inputs given", cfg.antennas, args.input.len())));
        }
        args.input
            .iter()
            .map(|p| read_stream(p).map_err(|e| usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(antenna_inputs(&streams))
}

pub fn run(args: &RunArgs) -> Verdict {
    use sdfmap::rachpd::{decode_report, rach_registry, REPORT_PORT};
    use sdfmap::runtime::{execute, execute_reference, generate_programs, ExecConfig, KernelRegistry};

    let p = plan(&args.scenario)?;
    let cfg = match &args.rach {
        Some(spec) => Some(crate::rach::config(spec)?),
        None => crate::rach::config_for_graph(&p.scenario.graph),
    };
    let (registry, external) = match &cfg {
        Some(c) => (rach_registry(c).map_err(|e| domain(e.to_string()))?, external_inputs(args, c)?),
        None => (KernelRegistry::new(), Default::default()),
    };
    let programs = generate_programs(&p.schedule, &p.dag, &registry).map_err(|e| domain(e.to_string()))?;
    let exec_cfg = ExecConfig {
        throttle: args.throttle,
        cost: p.arch.media.first().cloned(),
        ..Default::default()
    };
    let t0 = std::time::Instant::now();
    let res = execute(&p.dag, &p.schedule, &programs, &registry, &external, &exec_cfg)
        .map_err(|e| domain(e.to_string()))?;
    println!(
        "executed {} firings on {} cores in {:.3} s ({} transfers)",
        p.dag.nodes.len(),
        programs.len(),
        t0.elapsed().as_secs_f64(),
        res.transfers.len()
    );

    let out_dir = args.out_dir.clone().unwrap_or_else(|| p.scenario.output_dir.clone());
    let mut trace = String::from("seq,core,context,op\n");
    for r in &res.trace {
        let _ = writeln!(trace, "{},{},{},{}", r.seq, r.core, r.context, r.op);
    }
    write_file(&out_dir.join("trace.csv"), &trace)?;
    for (key, bytes) in &res.outputs {
        let path = out_dir.join("outputs").join(format!("{}.bin", key.replace('/', "_")));
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(|e| domain(format!("{}: {e}", d.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| domain(format!("{}: {e}", path.display())))?;
        if key.ends_with(&format!(".{REPORT_PORT}")) {
            if let Ok(r) = decode_report(bytes) {
                print!("{r}");
            }
        }
    }
    println!("wrote {} outputs and the trace to {}", res.outputs.len(), out_dir.display());

    let mut ok = true;
    if !res.violations.is_empty() {
        ok = false;
        for v in &res.violations {
            println!("coherency violation: {v:?}");
        }
    }
    if args.verify {
        let reference = execute_reference(&p.dag, &registry, &external).map_err(|e| domain(e.to_string()))?;
        if reference == res.outputs {
            println!("outputs match reference");
        } else {
            ok = false;
            let differing: Vec<&String> = reference
                .keys()
                .chain(res.outputs.keys())
                .filter(|k| reference.get(*k) != res.outputs.get(*k))
                .collect();
            println!("outputs differ from reference: {differing:?}");
        }
    }
    Ok(ok)
}

#[derive(Args)]
pub struct DemoArgs {
    /// desk, 115km or a JSON configuration file
    #[arg(long, default_value = "desk")]
    pub config: String,
    /// Use the 115 km cell geometry regardless of --config
    #[arg(long)]
    pub full_geometry: bool,
    /// User as root:delay[:amplitude], delay in samples; repeatable
    #[arg(long = "user", value_parser = crate::rach::parse_user)]
    pub users: Vec<sdfmap::rachpd::User>,
    /// Per-sample SNR in dB (default: noiseless)
    #[arg(long)]
    pub snr: Option<f64>,
    /// Detection threshold factor over the noise floor
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Write per-root energy profiles as CSV (root,index,energy)
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    /// Write the synthesized antenna streams into this directory
    #[arg(long)]
    pub streams: Option<PathBuf>,
}

pub fn rachpd_demo(args: &DemoArgs) -> Verdict {
    use sdfmap::rachpd::{detect, write_stream};

    let mut cfg = crate::rach::config(if args.full_geometry { "115km" } else { &args.config })?;
    if let Some(a) = args.alpha {
        cfg.alpha = a;
        cfg.validate().map_err(|e| usage(e.to_string()))?;
    }
    println!(
        "antennas: {}, roots: {}, repetitions: {}, n_zc: {}",
        cfg.antennas, cfg.roots, cfg.repetitions, cfg.n_zc
    );
    println!("stream length: {}", cfg.stream_len());
    let streams = crate::rach::synthesize(&cfg, &args.users, args.snr, args.seed)?;
    if let Some(dir) = &args.streams {
        std::fs::create_dir_all(dir).map_err(|e| domain(format!("{}: {e}", dir.display())))?;
        for (a, s) in streams.iter().enumerate() {
            write_stream(&dir.join(format!("antenna{a}.iq")), s).map_err(|e| domain(e.to_string()))?;
        }
    }
    let (report, profiles) = detect(&streams, &cfg).map_err(|e| domain(e.to_string()))?;
    print!("{report}");
    if let Some(path) = &args.profiles {
        let mut csv = String::from("root,index,energy\n");
        for p in &profiles {
            for (i, e) in p.energies.iter().enumerate() {
                let _ = writeln!(csv, "{},{i},{e}", p.root);
            }
        }
        write_file(path, &csv)?;
    }
    Ok(true)
}
