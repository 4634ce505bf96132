use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Duration;

use serde::Serialize;

use super::{channel_map, ChannelMap, Result, RuntimeError};
use crate::archmodel::{transfer_cycles, Medium};

pub const DEFAULT_FRAME_BYTES: usize = 32768;

/// Re-check interval of passive waits, so aborts are noticed.
const WAIT_SLICE: Duration = Duration::from_millis(10);

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// DMA read a buffer whose cache still held unwritten data.
    StaleSend,
    /// Kernel read a cached copy older than the backing store.
    StaleRead,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub buffer: String,
}

#[derive(Debug, Default)]
pub struct Auditor {
    log: Mutex<Vec<Violation>>,
}

impl Auditor {
    fn flag(&self, kind: ViolationKind, buffer: &str) {
        lock(&self.log).push(Violation {
            kind,
            buffer: buffer.to_string(),
        });
    }

    pub fn violations(&self) -> Vec<Violation> {
        lock(&self.log).clone()
    }
}

#[derive(Debug)]
struct BufState {
    backing: Vec<u8>,
    cached: Vec<u8>,
    dirty: bool,
    stale: bool,
    backing_gen: u64,
    cached_gen: u64,
}

/// A buffer with a backing store (seen by DMA) and a cached copy (seen by
/// kernels).
#[derive(Debug)]
pub struct FabricBuffer {
    name: String,
    state: Mutex<BufState>,
    auditor: Arc<Auditor>,
}

impl FabricBuffer {
    pub fn new(name: impl Into<String>, size: usize, auditor: Arc<Auditor>) -> Self {
        FabricBuffer {
            name: name.into(),
            state: Mutex::new(BufState {
                backing: vec![0; size],
                cached: vec![0; size],
                dirty: false,
                stale: false,
                backing_gen: 0,
                cached_gen: 0,
            }),
            auditor,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        lock(&self.state).backing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_dirty(&self) -> bool {
        lock(&self.state).dirty
    }

    pub fn is_stale(&self) -> bool {
        lock(&self.state).stale
    }

    pub fn kernel_write(&self, offset: usize, data: &[u8]) {
        let mut s = lock(&self.state);
        s.cached[offset..offset + data.len()].copy_from_slice(data);
        s.dirty = true;
    }

    pub fn kernel_read(&self, offset: usize, len: usize) -> Vec<u8> {
        let mut s = lock(&self.state);
        if s.stale {
            s.cached = s.backing.clone();
            s.cached_gen = s.backing_gen;
            s.stale = false;
        } else if s.cached_gen != s.backing_gen {
            self.auditor.flag(ViolationKind::StaleRead, &self.name);
        }
        s.cached[offset..offset + len].to_vec()
    }

    /// Copy the cached copy to the backing store. Idempotent.
    pub fn writeback(&self) {
        let mut s = lock(&self.state);
        if s.dirty {
            s.backing = s.cached.clone();
            s.backing_gen += 1;
            s.cached_gen = s.backing_gen;
            s.dirty = false;
        }
    }

    /// Mark the cached copy stale; the next kernel read refreshes it.
    pub fn invalidate(&self) {
        let mut s = lock(&self.state);
        s.stale = true;
        s.dirty = false;
    }

    pub fn dma_read(&self) -> Vec<u8> {
        let s = lock(&self.state);
        if s.dirty {
            self.auditor.flag(ViolationKind::StaleSend, &self.name);
        }
        s.backing.clone()
    }

    pub fn dma_write(&self, offset: usize, data: &[u8]) {
        let mut s = lock(&self.state);
        s.backing[offset..offset + data.len()].copy_from_slice(data);
        s.backing_gen += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Notification {
    AddressReady { from: usize, tag: u64 },
    Completion { channel: u8, tag: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SendReport {
    pub sender: usize,
    pub receiver: usize,
    pub tag: u64,
    pub bytes: usize,
    pub frames: usize,
    pub frame_bytes: usize,
    pub remainder: usize,
    pub frames_channel: u8,
    pub remainder_channel: u8,
    pub modeled_cycles: Option<f64>,
}

struct Mailbox {
    queue: Mutex<VecDeque<Notification>>,
    cv: Condvar,
}

/// In-process interconnect: address scratch slots per channel pair, one
/// notification mailbox per core and a startup barrier.
pub struct Fabric {
    cores: usize,
    map: ChannelMap,
    frame_bytes: usize,
    cost: Option<Medium>,
    throttle: bool,
    arrived: Mutex<usize>,
    barrier_cv: Condvar,
    passed: Vec<AtomicBool>,
    scratch: Mutex<HashMap<(usize, usize), (u64, Arc<FabricBuffer>)>>,
    mailboxes: Vec<Mailbox>,
    log: Mutex<Vec<SendReport>>,
    aborted: AtomicBool,
    pub auditor: Arc<Auditor>,
}

impl Fabric {
    pub fn new(cores: usize, frame_bytes: usize) -> Result<Fabric> {
        let map = channel_map(cores)?;
        Ok(Fabric {
            cores,
            map,
            frame_bytes: frame_bytes.max(1),
            cost: None,
            throttle: false,
            arrived: Mutex::new(0),
            barrier_cv: Condvar::new(),
            passed: (0..cores).map(|_| AtomicBool::new(false)).collect(),
            scratch: Mutex::new(HashMap::new()),
            mailboxes: (0..cores)
                .map(|_| Mailbox {
                    queue: Mutex::new(VecDeque::new()),
                    cv: Condvar::new(),
                })
                .collect(),
            log: Mutex::new(Vec::new()),
            aborted: AtomicBool::new(false),
            auditor: Arc::new(Auditor::default()),
        })
    }

    /// Log modeled transfer costs with this medium.
    pub fn with_cost(mut self, medium: Medium) -> Self {
        self.cost = Some(medium);
        self
    }

    /// Sleep for the modeled duration of each transfer (1 cycle = 1 ns).
    pub fn with_throttle(mut self, on: bool) -> Self {
        self.throttle = on;
        self
    }

    pub fn cores(&self) -> usize {
        self.cores
    }

    pub fn channels(&self) -> &ChannelMap {
        &self.map
    }

    pub fn new_buffer(&self, name: impl Into<String>, size: usize) -> Arc<FabricBuffer> {
        Arc::new(FabricBuffer::new(name, size, self.auditor.clone()))
    }

    pub fn abort(&self) {
        self.aborted.store(true, Ordering::SeqCst);
        self.barrier_cv.notify_all();
        for m in &self.mailboxes {
            let _g = lock(&m.queue);
            m.cv.notify_all();
        }
    }

    pub fn is_aborted(&self) -> bool {
        self.aborted.load(Ordering::SeqCst)
    }

    /// Block until every core has entered.
    pub fn startup_barrier(&self, core: usize) -> Result<()> {
        let mut n = lock(&self.arrived);
        *n += 1;
        self.barrier_cv.notify_all();
        while *n < self.cores {
            if self.is_aborted() {
                return Err(RuntimeError::Aborted);
            }
            n = self
                .barrier_cv
                .wait_timeout(n, WAIT_SLICE)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        self.passed[core].store(true, Ordering::SeqCst);
        Ok(())
    }

    fn check_passed(&self, core: usize) -> Result<()> {
        if self.passed[core].load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(RuntimeError::BarrierNotReached(core))
        }
    }

    fn notify(&self, core: usize, n: Notification) {
        let m = &self.mailboxes[core];
        lock(&m.queue).push_back(n);
        m.cv.notify_all();
    }

    /// Passive wait for the first queued notification matching `pred`.
    fn wait_for(&self, core: usize, pred: impl Fn(&Notification) -> bool) -> Result<Notification> {
        let m = &self.mailboxes[core];
        let mut q = lock(&m.queue);
        loop {
            if let Some(i) = q.iter().position(&pred) {
                return Ok(q.remove(i).expect("index"));
            }
            if self.is_aborted() {
                return Err(RuntimeError::Aborted);
            }
            q = m.cv.wait_timeout(q, WAIT_SLICE).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Receiver side: publish the destination buffer for `sender` and raise
    /// an address-ready notification to it.
    pub fn publish_address(
        &self,
        receiver: usize,
        sender: usize,
        tag: u64,
        dst: Arc<FabricBuffer>,
    ) -> Result<()> {
        self.check_passed(receiver)?;
        lock(&self.scratch).insert((sender, receiver), (tag, dst));
        self.notify(sender, Notification::AddressReady { from: receiver, tag });
        Ok(())
    }

    /// Sender side: wait until `receiver` has published the address for `tag`.
    pub fn wait_address(&self, sender: usize, receiver: usize, tag: u64) -> Result<()> {
        self.wait_for(sender, |n| *n == Notification::AddressReady { from: receiver, tag })?;
        Ok(())
    }

    /// Copy `src` into the published destination as full frames followed by
    /// a remainder, then notify the receiver with the remainder channel id.
    pub fn send(&self, sender: usize, receiver: usize, tag: u64, src: &FabricBuffer) -> Result<SendReport> {
        self.check_passed(sender)?;
        let dst = {
            let mut scratch = lock(&self.scratch);
            match scratch.get(&(sender, receiver)) {
                Some((t, _)) if *t == tag => scratch.remove(&(sender, receiver)).expect("present").1,
                _ => return Err(RuntimeError::AddressNotPublished { sender, receiver }),
            }
        };
        let (frames_channel, remainder_channel) = self
            .map
            .get(sender, receiver)
            .ok_or(RuntimeError::AddressNotPublished { sender, receiver })?;
        let data = src.dma_read();
        let f = self.frame_bytes;
        let frames = data.len() / f;
        for i in 0..frames {
            dst.dma_write(i * f, &data[i * f..(i + 1) * f]);
        }
        let remainder = data.len() % f;
        dst.dma_write(frames * f, &data[frames * f..]);
        let modeled_cycles = self.cost.as_ref().map(|m| transfer_cycles(m, data.len() as u64));
        if let (true, Some(c)) = (self.throttle, modeled_cycles) {
            std::thread::sleep(Duration::from_nanos(c as u64));
        }
        let report = SendReport {
            sender,
            receiver,
            tag,
            bytes: data.len(),
            frames,
            frame_bytes: f,
            remainder,
            frames_channel,
            remainder_channel,
            modeled_cycles,
        };
        lock(&self.log).push(report.clone());
        self.notify(
            receiver,
            Notification::Completion {
                channel: remainder_channel,
                tag,
            },
        );
        Ok(report)
    }

    /// Receiver side: wait for the completion of `tag` from `sender`.
    /// Returns the completion channel id.
    pub fn wait_completion(&self, receiver: usize, sender: usize, tag: u64) -> Result<u8> {
        let (_, channel) = self
            .map
            .get(sender, receiver)
            .ok_or(RuntimeError::AddressNotPublished { sender, receiver })?;
        match self.wait_for(receiver, |n| *n == Notification::Completion { channel, tag })? {
            Notification::Completion { channel, .. } => Ok(channel),
            _ => unreachable!(),
        }
    }

    pub fn transfer_log(&self) -> Vec<SendReport> {
        lock(&self.log).clone()
    }
}
