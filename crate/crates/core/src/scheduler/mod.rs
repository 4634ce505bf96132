//! Mapping of a firing DAG onto an architecture: list scheduling,
//! synchronisation reduction and static buffer allocation.

mod alloc;
mod list;
mod syncs;
mod timing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archmodel::{transfer_cycles, ArchGraph};
use crate::sdfgraph::FiringDag;

pub use alloc::{
    allocate_buffers, buffer_lifetimes, recommend_memory_mode, BufferPlacement, MemoryMode,
    ModeSpill, Placement, RegionDemand,
};
pub use list::list_schedule;
pub use syncs::{reduce_syncs, sync_count, SyncReport};
pub use timing::{glob_match, ConstraintRule, Constraints, TimingRecord, TimingTable};

/// Absolute tolerance for cycle comparisons.
pub const EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("actor `{0}` has no allowed operator")]
    UnschedulableConstraint(String),
    #[error("no timing for actor `{actor}` on operator `{operator}`")]
    MissingTiming { actor: String, operator: String },
    #[error("constraint pattern `{0}` matches no actor")]
    UnmatchedPattern(String),
    #[error("unknown operator `{0}`")]
    UnknownOperator(String),
    #[error("no medium connects `{0}` and `{1}`")]
    NoMedium(String, String),
    #[error("buffer for arc {arc} ({bytes} B) fits in no memory region")]
    CapacityExceeded { arc: usize, bytes: u64 },
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Graph(#[from] crate::sdfgraph::SdfError),
}

pub type Result<T> = std::result::Result<T, ScheduleError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub firing: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transfer {
    /// DAG arcs carried by this transfer (more than one after merging).
    pub arcs: Vec<usize>,
    pub medium: usize,
    pub src_op: usize,
    pub dst_op: usize,
    pub start: f64,
    pub end: f64,
    pub bytes: u64,
    /// For blocking media: number of slots on `src_op` that precede this
    /// transfer; the next slot waits for it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSchedule {
    pub operators: Vec<String>,
    /// Operator index per DAG node.
    pub mapping: Vec<usize>,
    /// Per operator, compute slots in execution order.
    pub slots: Vec<Vec<Slot>>,
    /// Transfers in commit order (also the per-medium order).
    pub transfers: Vec<Transfer>,
    pub makespan: f64,
}

impl TimedSchedule {
    /// Slot of every node as (operator, position).
    pub fn slot_of(&self) -> Vec<(usize, usize)> {
        let mut at = vec![(usize::MAX, usize::MAX); self.mapping.len()];
        for (op, slots) in self.slots.iter().enumerate() {
            for (i, s) in slots.iter().enumerate() {
                at[s.firing] = (op, i);
            }
        }
        at
    }

    pub fn node_times(&self) -> Vec<(f64, f64)> {
        let mut t = vec![(0.0, 0.0); self.mapping.len()];
        for s in self.slots.iter().flatten() {
            t[s.firing] = (s.start, s.end);
        }
        t
    }

    /// Structured export with firing labels.
    pub fn to_json(&self, dag: &FiringDag) -> serde_json::Value {
        let slots: Vec<serde_json::Value> = self
            .slots
            .iter()
            .enumerate()
            .map(|(op, slots)| {
                serde_json::json!({
                    "operator": self.operators[op],
                    "slots": slots.iter().map(|s| serde_json::json!({
                        "firing": dag.nodes[s.firing].to_string(),
                        "start": s.start,
                        "end": s.end,
                    })).collect::<Vec<_>>(),
                })
            })
            .collect();
        let transfers: Vec<serde_json::Value> = self
            .transfers
            .iter()
            .map(|t| {
                serde_json::json!({
                    "arcs": t.arcs.iter().map(|&a| format!(
                        "{}->{}", dag.nodes[dag.arcs[a].src], dag.nodes[dag.arcs[a].dst]
                    )).collect::<Vec<_>>(),
                    "medium": t.medium,
                    "src_op": self.operators[t.src_op],
                    "dst_op": self.operators[t.dst_op],
                    "start": t.start,
                    "end": t.end,
                    "bytes": t.bytes,
                })
            })
            .collect();
        serde_json::json!({
            "makespan_cycles": self.makespan,
            "mapping": dag.nodes.iter().zip(&self.mapping)
                .map(|(n, &op)| (n.to_string(), serde_json::Value::from(self.operators[op].clone())))
                .collect::<serde_json::Map<_, _>>(),
            "operators": slots,
            "transfers": transfers,
        })
    }
}

/// Fraction of the makespan each operator spends computing.
pub fn load_report(schedule: &TimedSchedule) -> Vec<(String, f64)> {
    schedule
        .operators
        .iter()
        .zip(&schedule.slots)
        .map(|(op, slots)| {
            let busy: f64 = slots.iter().map(|s| s.end - s.start).sum();
            let load = if schedule.makespan > 0.0 {
                busy / schedule.makespan
            } else {
                0.0
            };
            (op.clone(), load)
        })
        .collect()
}

/// Check every schedule invariant; returns the first violation found.
pub fn validate_schedule(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    arch: &ArchGraph,
) -> std::result::Result<(), String> {
    let n = dag.nodes.len();
    if schedule.mapping.len() != n {
        return Err(format!("mapping covers {} of {n} firings", schedule.mapping.len()));
    }
    if schedule.operators.len() != arch.operators.len() || schedule.slots.len() != arch.operators.len() {
        return Err("operator list does not match the architecture".into());
    }
    let mut seen = vec![false; n];
    for (op, slots) in schedule.slots.iter().enumerate() {
        for (i, s) in slots.iter().enumerate() {
            if s.firing >= n || seen[s.firing] {
                return Err(format!("firing {} scheduled twice or unknown", s.firing));
            }
            seen[s.firing] = true;
            if schedule.mapping[s.firing] != op {
                return Err(format!("{} mapped to op {} but slotted on {op}", dag.nodes[s.firing], schedule.mapping[s.firing]));
            }
            if s.start > s.end + EPS || s.start < -EPS {
                return Err(format!("slot of {} has invalid times", dag.nodes[s.firing]));
            }
            if i > 0 && slots[i - 1].end > s.start + EPS {
                return Err(format!(
                    "slots of {} and {} overlap on {}",
                    dag.nodes[slots[i - 1].firing], dag.nodes[s.firing], schedule.operators[op]
                ));
            }
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(format!("firing {} is not scheduled", dag.nodes[i]));
    }
    let times = schedule.node_times();
    let mut carried_by = vec![None; dag.arcs.len()];
    for (ti, t) in schedule.transfers.iter().enumerate() {
        let medium = arch
            .media
            .get(t.medium)
            .ok_or_else(|| format!("transfer {ti} uses unknown medium {}", t.medium))?;
        if !medium.connects(&schedule.operators[t.src_op], &schedule.operators[t.dst_op]) {
            return Err(format!("transfer {ti}: medium {} does not join its operators", medium.id));
        }
        if t.end + EPS < t.start + transfer_cycles(medium, t.bytes) {
            return Err(format!("transfer {ti} is shorter than its cost"));
        }
        let mut bytes = 0;
        for &a in &t.arcs {
            let arc = &dag.arcs[a];
            if carried_by[a].replace(ti).is_some() {
                return Err(format!("arc {a} is transferred twice"));
            }
            if schedule.mapping[arc.src] != t.src_op || schedule.mapping[arc.dst] != t.dst_op {
                return Err(format!("transfer {ti} does not match the mapping of arc {a}"));
            }
            if times[arc.src].1 > t.start + EPS {
                return Err(format!("transfer {ti} starts before {} ends", dag.nodes[arc.src]));
            }
            if t.end > times[arc.dst].0 + EPS {
                return Err(format!("{} starts before transfer {ti} ends", dag.nodes[arc.dst]));
            }
            bytes += arc.bytes;
        }
        if bytes != t.bytes {
            return Err(format!("transfer {ti} carries {} B, arcs sum to {bytes} B", t.bytes));
        }
    }
    for (a, arc) in dag.arcs.iter().enumerate() {
        let cross = schedule.mapping[arc.src] != schedule.mapping[arc.dst];
        if cross && carried_by[a].is_none() {
            return Err(format!(
                "cross-operator arc {}->{} has no transfer",
                dag.nodes[arc.src], dag.nodes[arc.dst]
            ));
        }
        if !cross {
            if carried_by[a].is_some() {
                return Err(format!("same-operator arc {a} has a transfer"));
            }
            if times[arc.src].1 > times[arc.dst].0 + EPS {
                return Err(format!(
                    "{} starts before {} ends",
                    dag.nodes[arc.dst], dag.nodes[arc.src]
                ));
            }
        }
    }
    Ok(())
}
