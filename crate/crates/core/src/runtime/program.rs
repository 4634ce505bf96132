use std::fmt;

use serde::Serialize;

use super::{KernelRegistry, Result, RuntimeError};
use crate::scheduler::TimedSchedule;
use crate::sdfgraph::FiringDag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Op {
    /// Fire a DAG node.
    Call { node: usize },
    Post { sem: usize },
    Pend { sem: usize },
    /// Push the send buffer of a transfer to its published destination.
    Send { transfer: usize },
    /// Publish the receive buffer of a transfer and wait for completion.
    Receive { transfer: usize },
    Writeback { transfer: usize },
    Invalidate { transfer: usize },
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Call { node } => write!(f, "CALL n{node}"),
            Op::Post { sem } => write!(f, "POST s{sem}"),
            Op::Pend { sem } => write!(f, "PEND s{sem}"),
            Op::Send { transfer } => write!(f, "SEND t{transfer}"),
            Op::Receive { transfer } => write!(f, "RECEIVE t{transfer}"),
            Op::Writeback { transfer } => write!(f, "WRITEBACK t{transfer}"),
            Op::Invalidate { transfer } => write!(f, "INVALIDATE t{transfer}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SemInfo {
    pub name: String,
    pub initial: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoreProgram {
    pub core: usize,
    pub compute_seq: Vec<Op>,
    pub comm_seq: Vec<Op>,
    pub sem_table: Vec<SemInfo>,
}

impl CoreProgram {
    fn sem(&mut self, name: String, initial: u32) -> usize {
        self.sem_table.push(SemInfo { name, initial });
        self.sem_table.len() - 1
    }
}

/// Per core, a compute sequence in slot order and a communication sequence
/// in transfer start order. Each transfer uses two semaphores on the sender
/// (data ready, send done) and two on the receiver (buffer free, arrived).
pub fn generate_programs(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    registry: &KernelRegistry,
) -> Result<Vec<CoreProgram>> {
    for a in &dag.graph.actors {
        if !registry.contains(a.kernel_name()) {
            return Err(RuntimeError::UnregisteredKernel(a.kernel_name().to_string()));
        }
    }
    if schedule.mapping.len() != dag.nodes.len() {
        return Err(RuntimeError::InvalidSchedule("mapping does not cover the DAG".into()));
    }
    let p = schedule.operators.len();
    let mut programs: Vec<CoreProgram> = (0..p)
        .map(|core| CoreProgram {
            core,
            compute_seq: Vec::new(),
            comm_seq: Vec::new(),
            sem_table: Vec::new(),
        })
        .collect();
    let slot_of = schedule.slot_of();

    // Ops inserted around compute slots: (before, after) per (core, slot).
    let mut before: Vec<Vec<Vec<Op>>> = schedule.slots.iter().map(|s| vec![Vec::new(); s.len()]).collect();
    let mut after: Vec<Vec<Vec<Op>>> = before.clone();

    let mut order: Vec<usize> = (0..schedule.transfers.len()).collect();
    order.sort_by(|&a, &b| {
        schedule.transfers[a]
            .start
            .total_cmp(&schedule.transfers[b].start)
            .then(a.cmp(&b))
    });
    for &ti in &order {
        let t = &schedule.transfers[ti];
        let (s, r) = (t.src_op, t.dst_op);
        if s == r {
            return Err(RuntimeError::InvalidSchedule(format!("transfer {ti} stays on core {s}")));
        }
        let producers: Vec<usize> = t.arcs.iter().map(|&a| slot_of[dag.arcs[a].src].1).collect();
        let consumers: Vec<usize> = t.arcs.iter().map(|&a| slot_of[dag.arcs[a].dst].1).collect();
        let (first_p, last_p) = (*producers.iter().min().unwrap(), *producers.iter().max().unwrap());
        let (first_c, last_c) = (*consumers.iter().min().unwrap(), *consumers.iter().max().unwrap());

        let data_ready = programs[s].sem(format!("t{ti}.data_ready"), 0);
        let send_done = programs[s].sem(format!("t{ti}.send_done"), 1);
        before[s][first_p].push(Op::Pend { sem: send_done });
        after[s][last_p].push(Op::Writeback { transfer: ti });
        after[s][last_p].push(Op::Post { sem: data_ready });
        programs[s].comm_seq.extend([
            Op::Pend { sem: data_ready },
            Op::Send { transfer: ti },
            Op::Post { sem: send_done },
        ]);

        let buffer_free = programs[r].sem(format!("t{ti}.buffer_free"), 1);
        let arrived = programs[r].sem(format!("t{ti}.arrived"), 0);
        programs[r].comm_seq.extend([
            Op::Pend { sem: buffer_free },
            Op::Invalidate { transfer: ti },
            Op::Receive { transfer: ti },
            Op::Post { sem: arrived },
        ]);
        before[r][first_c].push(Op::Pend { sem: arrived });
        after[r][last_c].push(Op::Post { sem: buffer_free });
    }

    for (core, slots) in schedule.slots.iter().enumerate() {
        let seq = &mut programs[core].compute_seq;
        for (k, slot) in slots.iter().enumerate() {
            seq.extend(before[core][k].iter().copied());
            seq.push(Op::Call { node: slot.firing });
            seq.extend(after[core][k].iter().copied());
        }
    }
    Ok(programs)
}
