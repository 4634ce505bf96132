use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::fabric::{Fabric, FabricBuffer, SendReport, Violation, DEFAULT_FRAME_BYTES};
use super::{CoreProgram, FiringCtx, KernelOutput, KernelRegistry, Op, Result, RuntimeError};
use crate::archmodel::Medium;
use crate::scheduler::TimedSchedule;
use crate::sdfgraph::{FiringDag, TokenRef};

/// Graph outputs keyed `actor#index.port`.
pub type Outputs = BTreeMap<String, Vec<u8>>;

#[derive(Debug, Clone)]
pub struct ExecConfig {
    pub frame_bytes: usize,
    /// Sleep for the modeled duration of each transfer.
    pub throttle: bool,
    /// Medium used to log modeled transfer costs.
    pub cost: Option<Medium>,
    /// Seed for random yields and short sleeps between ops.
    pub jitter_seed: Option<u64>,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            frame_bytes: DEFAULT_FRAME_BYTES,
            throttle: false,
            cost: None,
            jitter_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceRecord {
    pub core: usize,
    pub context: &'static str,
    pub op: String,
    /// Global logical timestamp.
    pub seq: u64,
}

#[derive(Debug, Clone)]
pub struct ExecResult {
    pub outputs: Outputs,
    pub trace: Vec<TraceRecord>,
    pub violations: Vec<Violation>,
    pub transfers: Vec<SendReport>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// Run one firing: gather its input tokens through `read_arc`, call the
/// kernel, check output sizes and collect unconnected ports as graph outputs.
fn fire(
    dag: &FiringDag,
    node: usize,
    registry: &KernelRegistry,
    external: &BTreeMap<String, Vec<u8>>,
    read_arc: &mut dyn FnMut(usize) -> Vec<u8>,
    graph_out: &mut Outputs,
) -> Result<KernelOutput> {
    let firing = &dag.nodes[node];
    let actor = dag.graph.actor(&firing.actor).expect("actor of node");
    let kernel = registry
        .get(actor.kernel_name())
        .ok_or_else(|| RuntimeError::UnregisteredKernel(actor.kernel_name().to_string()))?;
    let mut fetched: HashMap<usize, Vec<u8>> = HashMap::new();
    let mut inputs: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for b in &dag.inputs[node] {
        let tb = dag.graph.edges[b.edge].token_bytes as usize;
        let buf = inputs.entry(b.port.clone()).or_default();
        for t in &b.tokens {
            match *t {
                TokenRef::Arc { arc, pos } => {
                    let data = fetched.entry(arc).or_insert_with(|| read_arc(arc));
                    buf.extend_from_slice(&data[pos * tb..(pos + 1) * tb]);
                }
                // A single iteration: delay tokens start as zeros.
                TokenRef::Initial | TokenRef::Carried { .. } => buf.extend(std::iter::repeat_n(0u8, tb)),
            }
        }
    }
    let ctx = FiringCtx {
        actor,
        index: firing.index,
        inputs: &inputs,
        external,
    };
    let fail = |message: String| RuntimeError::Kernel {
        firing: firing.to_string(),
        message,
    };
    let mut out = kernel(&ctx).map_err(fail)?;
    let mut connected = Vec::new();
    for e in dag.graph.edges.iter().filter(|e| e.src.actor == actor.id) {
        let want = (e.prod * e.token_bytes) as usize;
        match out.get(&e.src.port) {
            Some(v) if v.len() == want => connected.push(e.src.port.clone()),
            Some(v) => return Err(fail(format!("port `{}` produced {} bytes, expected {want}", e.src.port, v.len()))),
            None => return Err(fail(format!("port `{}` produced nothing", e.src.port))),
        }
    }
    let loose: Vec<String> = out.keys().filter(|k| !connected.contains(k)).cloned().collect();
    for port in loose {
        let v = out.remove(&port).expect("present");
        graph_out.insert(format!("{firing}.{port}"), v);
    }
    Ok(out)
}

/// Bytes of an arc taken from the producer's outputs.
fn arc_payload(dag: &FiringDag, arc: usize, out: &KernelOutput) -> Vec<u8> {
    let a = &dag.arcs[arc];
    let e = &dag.graph.edges[a.edge];
    let tb = e.token_bytes as usize;
    let src = &out[&e.src.port];
    let mut v = Vec::with_capacity(a.offsets.len() * tb);
    for &o in &a.offsets {
        let o = o as usize;
        v.extend_from_slice(&src[o * tb..(o + 1) * tb]);
    }
    v
}

/// Sequential single-core execution in topological order.
pub fn execute_reference(
    dag: &FiringDag,
    registry: &KernelRegistry,
    external: &BTreeMap<String, Vec<u8>>,
) -> Result<Outputs> {
    let order = dag.topo_order().map_err(|e| RuntimeError::InvalidSchedule(e.to_string()))?;
    let mut store: HashMap<usize, Vec<u8>> = HashMap::new();
    let mut outputs = Outputs::new();
    for node in order {
        let mut read = |a: usize| store.get(&a).cloned().expect("arc produced before use");
        let out = fire(dag, node, registry, external, &mut read, &mut outputs)?;
        for &a in dag.outgoing_ids(node) {
            store.insert(a, arc_payload(dag, a, &out));
        }
    }
    Ok(outputs)
}

struct Semaphore {
    count: Mutex<i64>,
    cv: Condvar,
}

impl Semaphore {
    fn post(&self) {
        *lock(&self.count) += 1;
        self.cv.notify_all();
    }

    fn pend(&self, fabric: &Fabric) -> Result<()> {
        let mut c = lock(&self.count);
        while *c <= 0 {
            if fabric.is_aborted() {
                return Err(RuntimeError::Aborted);
            }
            c = self
                .cv
                .wait_timeout(c, Duration::from_millis(10))
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        *c -= 1;
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum ArcLoc {
    Local,
    Remote { transfer: usize, offset: usize },
}

#[derive(Default)]
struct ContextState {
    blocked: AtomicBool,
    done: AtomicBool,
    op: Mutex<String>,
}

struct Shared<'a> {
    dag: &'a FiringDag,
    schedule: &'a TimedSchedule,
    registry: &'a KernelRegistry,
    external: &'a BTreeMap<String, Vec<u8>>,
    fabric: Fabric,
    arc_loc: Vec<ArcLoc>,
    send_bufs: Vec<Arc<FabricBuffer>>,
    recv_bufs: Vec<Arc<FabricBuffer>>,
    sems: Vec<Vec<Semaphore>>,
    outputs: Mutex<Outputs>,
    trace: Mutex<Vec<TraceRecord>>,
    clock: AtomicU64,
    progress: AtomicU64,
    contexts: Vec<ContextState>,
    error: Mutex<Option<RuntimeError>>,
}

impl Shared<'_> {
    fn fail(&self, e: RuntimeError) {
        let mut slot = lock(&self.error);
        if slot.is_none() || *slot == Some(RuntimeError::Aborted) {
            *slot = Some(e);
        }
        drop(slot);
        self.fabric.abort();
        for core in &self.sems {
            for s in core {
                s.cv.notify_all();
            }
        }
    }

    fn blocking<T>(&self, ctx: usize, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.contexts[ctx].blocked.store(true, Ordering::SeqCst);
        let r = f();
        self.contexts[ctx].blocked.store(false, Ordering::SeqCst);
        r
    }

    fn run_op(&self, core: usize, ctx: usize, op: Op, local: &mut HashMap<usize, Vec<u8>>) -> Result<()> {
        let t = |i: usize| &self.schedule.transfers[i];
        match op {
            Op::Call { node } => {
                let mut outputs = Outputs::new();
                let mut read = |a: usize| match self.arc_loc[a] {
                    ArcLoc::Local => local.get(&a).cloned().expect("local arc produced"),
                    ArcLoc::Remote { transfer, offset } => {
                        self.recv_bufs[transfer].kernel_read(offset, self.dag.arcs[a].bytes as usize)
                    }
                };
                let out = fire(self.dag, node, self.registry, self.external, &mut read, &mut outputs)?;
                for &a in self.dag.outgoing_ids(node) {
                    let payload = arc_payload(self.dag, a, &out);
                    match self.arc_loc[a] {
                        ArcLoc::Local => {
                            local.insert(a, payload);
                        }
                        ArcLoc::Remote { transfer, offset } => {
                            self.send_bufs[transfer].kernel_write(offset, &payload)
                        }
                    }
                }
                if !outputs.is_empty() {
                    lock(&self.outputs).extend(outputs);
                }
            }
            Op::Post { sem } => self.sems[core][sem].post(),
            Op::Pend { sem } => self.blocking(ctx, || self.sems[core][sem].pend(&self.fabric))?,
            Op::Writeback { transfer } => self.send_bufs[transfer].writeback(),
            Op::Invalidate { transfer } => self.recv_bufs[transfer].invalidate(),
            Op::Send { transfer } => {
                let tr = t(transfer);
                self.blocking(ctx, || self.fabric.wait_address(core, tr.dst_op, transfer as u64))?;
                self.fabric
                    .send(core, tr.dst_op, transfer as u64, &self.send_bufs[transfer])?;
            }
            Op::Receive { transfer } => {
                let tr = t(transfer);
                self.fabric.publish_address(
                    core,
                    tr.src_op,
                    transfer as u64,
                    self.recv_bufs[transfer].clone(),
                )?;
                self.blocking(ctx, || {
                    self.fabric.wait_completion(core, tr.src_op, transfer as u64)
                })?;
            }
        }
        Ok(())
    }

    fn run_context(&self, core: usize, kind: usize, ops: &[Op], seed: Option<u64>) -> Result<()> {
        let ctx = 2 * core + kind;
        let name = if kind == 0 { "compute" } else { "comm" };
        let mut rng = seed.map(|s| ChaCha8Rng::seed_from_u64(s ^ ((ctx as u64 + 1) << 32)));
        if kind == 1 {
            self.blocking(ctx, || self.fabric.startup_barrier(core))?;
        }
        let mut local = HashMap::new();
        for &op in ops {
            if let Some(r) = rng.as_mut() {
                match r.random_range(0..256u32) {
                    0 => std::thread::sleep(Duration::from_micros(r.random_range(1..40))),
                    1..=48 => std::thread::yield_now(),
                    _ => {}
                }
            }
            *lock(&self.contexts[ctx].op) = op.to_string();
            self.run_op(core, ctx, op, &mut local)?;
            self.progress.fetch_add(1, Ordering::SeqCst);
            let seq = self.clock.fetch_add(1, Ordering::SeqCst);
            lock(&self.trace).push(TraceRecord {
                core,
                context: name,
                op: op.to_string(),
                seq,
            });
        }
        Ok(())
    }

    fn watchdog(&self) {
        let mut last = u64::MAX;
        let mut strikes = 0;
        loop {
            std::thread::sleep(Duration::from_millis(25));
            if self.contexts.iter().all(|c| c.done.load(Ordering::SeqCst)) || self.fabric.is_aborted() {
                return;
            }
            let progress = self.progress.load(Ordering::SeqCst);
            let stuck = self
                .contexts
                .iter()
                .all(|c| c.done.load(Ordering::SeqCst) || c.blocked.load(Ordering::SeqCst));
            strikes = if stuck && progress == last { strikes + 1 } else { 0 };
            last = progress;
            if strikes >= 2 {
                let blocked = self
                    .contexts
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| !c.done.load(Ordering::SeqCst))
                    .map(|(i, c)| {
                        let kind = if i % 2 == 0 { "compute" } else { "comm" };
                        format!("core{}/{kind} blocked on {}", i / 2, lock(&c.op))
                    })
                    .collect();
                self.fail(RuntimeError::Deadlock { blocked });
                return;
            }
        }
    }
}

/// Run the per-core programs with one compute and one communication thread
/// per core.
pub fn execute(
    dag: &FiringDag,
    schedule: &TimedSchedule,
    programs: &[CoreProgram],
    registry: &KernelRegistry,
    external: &BTreeMap<String, Vec<u8>>,
    config: &ExecConfig,
) -> Result<ExecResult> {
    let p = programs.len();
    let mut fabric = Fabric::new(p, config.frame_bytes)?.with_throttle(config.throttle);
    if let Some(m) = &config.cost {
        fabric = fabric.with_cost(m.clone());
    }
    let mut arc_loc = vec![ArcLoc::Local; dag.arcs.len()];
    let mut send_bufs = Vec::new();
    let mut recv_bufs = Vec::new();
    for (ti, t) in schedule.transfers.iter().enumerate() {
        let mut offset = 0;
        for &a in &t.arcs {
            arc_loc[a] = ArcLoc::Remote { transfer: ti, offset };
            offset += dag.arcs[a].bytes as usize;
        }
        send_bufs.push(fabric.new_buffer(format!("t{ti}.send@core{}", t.src_op), offset));
        recv_bufs.push(fabric.new_buffer(format!("t{ti}.recv@core{}", t.dst_op), offset));
    }
    let sems = programs
        .iter()
        .map(|prog| {
            prog.sem_table
                .iter()
                .map(|s| Semaphore {
                    count: Mutex::new(s.initial as i64),
                    cv: Condvar::new(),
                })
                .collect()
        })
        .collect();
    let shared = Shared {
        dag,
        schedule,
        registry,
        external,
        fabric,
        arc_loc,
        send_bufs,
        recv_bufs,
        sems,
        outputs: Mutex::new(Outputs::new()),
        trace: Mutex::new(Vec::new()),
        clock: AtomicU64::new(0),
        progress: AtomicU64::new(0),
        contexts: (0..2 * p).map(|_| ContextState::default()).collect(),
        error: Mutex::new(None),
    };

    std::thread::scope(|s| {
        let sh = &shared;
        for prog in programs {
            for kind in 0..2 {
                let ops = if kind == 0 { &prog.compute_seq } else { &prog.comm_seq };
                let seed = config.jitter_seed;
                s.spawn(move || {
                    if let Err(e) = sh.run_context(prog.core, kind, ops, seed) {
                        sh.fail(e);
                    }
                    sh.contexts[2 * prog.core + kind].done.store(true, Ordering::SeqCst);
                });
            }
        }
        s.spawn(move || sh.watchdog());
    });

    if let Some(e) = shared.error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    let mut trace = shared.trace.into_inner().unwrap_or_else(|e| e.into_inner());
    trace.sort_by_key(|r| r.seq);
    Ok(ExecResult {
        outputs: shared.outputs.into_inner().unwrap_or_else(|e| e.into_inner()),
        trace,
        violations: shared.fabric.auditor.violations(),
        transfers: shared.fabric.transfer_log(),
    })
}
