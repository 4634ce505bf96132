//! Per-core two-thread programs executed on host threads over an
//! in-process fabric modelling memory-pull DMA transfers.

mod channel;
mod exec;
mod fabric;
mod program;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use thiserror::Error;

use crate::sdfgraph::Actor;

pub use channel::{channel_map, decode_channel, encode_channel, ChannelKind, ChannelMap, MAX_CORES};
pub use exec::{execute, execute_reference, ExecConfig, ExecResult, Outputs, TraceRecord};
pub use fabric::{
    Auditor, Fabric, FabricBuffer, Notification, SendReport, Violation, ViolationKind,
    DEFAULT_FRAME_BYTES,
};
pub use program::{generate_programs, CoreProgram, Op, SemInfo};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("core {receiver} has not published an address for core {sender}")]
    AddressNotPublished { sender: usize, receiver: usize },
    #[error("core {0} raised a notification before the startup barrier")]
    BarrierNotReached(usize),
    #[error("no kernel registered as `{0}`")]
    UnregisteredKernel(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("{max} cores at most (channel ids are 7-bit), got {got}")]
    TooManyCores { got: usize, max: usize },
    #[error("channel id {0} is not valid for this map")]
    InvalidChannel(u8),
    #[error("kernel failed on {firing}: {message}")]
    Kernel { firing: String, message: String },
    #[error("deadlock: {}", blocked.join("; "))]
    Deadlock { blocked: Vec<String> },
    #[error("execution aborted")]
    Aborted,
}

pub type Result<T> = std::result::Result<T, RuntimeError>;

/// What a kernel sees for one firing.
pub struct FiringCtx<'a> {
    pub actor: &'a Actor,
    pub index: u64,
    /// Consumed bytes per input port, tokens in consumption order.
    pub inputs: &'a BTreeMap<String, Vec<u8>>,
    /// Named external streams (e.g. antenna samples).
    pub external: &'a BTreeMap<String, Vec<u8>>,
}

impl FiringCtx<'_> {
    pub fn input(&self, port: &str) -> std::result::Result<&[u8], String> {
        self.inputs
            .get(port)
            .map(Vec::as_slice)
            .ok_or_else(|| format!("missing input port `{port}`"))
    }

    pub fn param(&self, key: &str) -> std::result::Result<i64, String> {
        self.actor
            .params
            .get(key)
            .copied()
            .ok_or_else(|| format!("missing parameter `{key}`"))
    }
}

/// Produced bytes per output port.
pub type KernelOutput = BTreeMap<String, Vec<u8>>;
pub type KernelFn =
    dyn Fn(&FiringCtx<'_>) -> std::result::Result<KernelOutput, String> + Send + Sync;

#[derive(Clone, Default)]
pub struct KernelRegistry {
    kernels: HashMap<String, Arc<KernelFn>>,
}

impl KernelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<F>(&mut self, name: impl Into<String>, f: F)
    where
        F: Fn(&FiringCtx<'_>) -> std::result::Result<KernelOutput, String> + Send + Sync + 'static,
    {
        self.kernels.insert(name.into(), Arc::new(f));
    }

    pub fn get(&self, name: &str) -> Option<&Arc<KernelFn>> {
        self.kernels.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.kernels.contains_key(name)
    }
}
