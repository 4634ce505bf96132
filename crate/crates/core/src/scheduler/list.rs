use std::cmp::Ordering;
use std::collections::HashMap;

use super::{
    Constraints, Result, ScheduleError, Slot, TimedSchedule, TimingTable, Transfer, EPS,
};
use crate::archmodel::{transfer_cycles, ArchGraph};
use crate::sdfgraph::FiringDag;

struct State {
    op_free: Vec<f64>,
    medium_free: Vec<f64>,
    end: Vec<f64>,
    mapping: Vec<usize>,
}

struct Placement {
    start: f64,
    finish: f64,
    transfers: Vec<Transfer>,
}

/// Earliest-finish-time list scheduling with b-level priority.
pub fn list_schedule(
    dag: &FiringDag,
    arch: &ArchGraph,
    timings: &TimingTable,
    constraints: &Constraints,
) -> Result<TimedSchedule> {
    let n = dag.nodes.len();
    let allowed_by_actor = constraints.resolve(&dag.graph, arch)?;
    let actor_pos: HashMap<&str, usize> = dag
        .graph
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();

    // Cost of every node on each allowed operator.
    let mut costs: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut actor_costs: Vec<Vec<(usize, f64)>> = Vec::with_capacity(dag.graph.actors.len());
    for (ai, actor) in dag.graph.actors.iter().enumerate() {
        let mut c = Vec::new();
        for &op in &allowed_by_actor[ai] {
            let op_id = &arch.operators[op].id;
            let cycles = timings
                .lookup(actor, op_id)
                .ok_or_else(|| ScheduleError::MissingTiming {
                    actor: actor.id.clone(),
                    operator: op_id.clone(),
                })?;
            c.push((op, cycles));
        }
        actor_costs.push(c);
    }
    for node in &dag.nodes {
        costs.push(actor_costs[actor_pos[node.actor.as_str()]].clone());
    }

    let order = dag.topo_order()?;
    let mut blevel = vec![0.0f64; n];
    for &v in order.iter().rev() {
        let mean = costs[v].iter().map(|c| c.1).sum::<f64>() / costs[v].len() as f64;
        let tail = dag
            .outgoing(v)
            .map(|a| blevel[a.dst])
            .fold(0.0f64, f64::max);
        blevel[v] = mean + tail;
    }

    let mut pending: Vec<usize> = (0..n).map(|v| dag.predecessors(v).len()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| pending[v] == 0).collect();
    let mut state = State {
        op_free: vec![0.0; arch.operators.len()],
        medium_free: vec![0.0; arch.media.len()],
        end: vec![0.0; n],
        mapping: vec![usize::MAX; n],
    };
    let mut slots: Vec<Vec<Slot>> = vec![Vec::new(); arch.operators.len()];
    let mut transfers = Vec::new();

    let by_priority = |a: usize, b: usize| -> Ordering {
        blevel[b]
            .partial_cmp(&blevel[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| dag.nodes[a].actor.cmp(&dag.nodes[b].actor))
            .then_with(|| dag.nodes[a].index.cmp(&dag.nodes[b].index))
    };

    while !ready.is_empty() {
        let (pos, &v) = ready
            .iter()
            .enumerate()
            .min_by(|x, y| by_priority(*x.1, *y.1))
            .expect("non-empty");
        ready.swap_remove(pos);

        let mut best: Option<(usize, Placement)> = None;
        for &(op, cost) in &costs[v] {
            let Some(p) = place(dag, arch, &state, &slots, v, op, cost) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, b)| p.finish < b.finish - EPS) {
                best = Some((op, p));
            }
        }
        let Some((op, p)) = best else {
            let src = dag.incoming(v).map(|a| state.mapping[a.src]).next().unwrap_or(0);
            return Err(ScheduleError::NoMedium(
                arch.operators[src].id.clone(),
                dag.nodes[v].actor.clone(),
            ));
        };
        for t in &p.transfers {
            state.medium_free[t.medium] = state.medium_free[t.medium].max(t.end);
            if t.sender_slot.is_some() {
                state.op_free[t.src_op] = state.op_free[t.src_op].max(t.end);
            }
        }
        transfers.extend(p.transfers);
        slots[op].push(Slot {
            firing: v,
            start: p.start,
            end: p.finish,
        });
        state.op_free[op] = p.finish;
        state.end[v] = p.finish;
        state.mapping[v] = op;

        for w in dag.successors(v) {
            pending[w] -= 1;
            if pending[w] == 0 {
                ready.push(w);
            }
        }
    }

    let makespan = slots
        .iter()
        .flatten()
        .map(|s| s.end)
        .fold(0.0f64, f64::max);
    Ok(TimedSchedule {
        operators: arch.operators.iter().map(|o| o.id.clone()).collect(),
        mapping: state.mapping,
        slots,
        transfers,
        makespan,
    })
}

/// Start and finish of `v` on `op`, with the transfers it would incur.
fn place(
    dag: &FiringDag,
    arch: &ArchGraph,
    state: &State,
    slots: &[Vec<Slot>],
    v: usize,
    op: usize,
    cost: f64,
) -> Option<Placement> {
    let mut data_ready = 0.0f64;
    let mut medium_free: Vec<(usize, f64)> = Vec::new();
    let mut sender_free: Vec<(usize, f64)> = Vec::new();
    let mut transfers = Vec::new();
    for &ai in dag.incoming_ids(v) {
        let arc = &dag.arcs[ai];
        let src_op = state.mapping[arc.src];
        let src_end = state.end[arc.src];
        if src_op == op {
            data_ready = data_ready.max(src_end);
            continue;
        }
        let m = arch.medium_index_between(&arch.operators[src_op].id, &arch.operators[op].id)?;
        let medium = &arch.media[m];
        let mut start = src_end;
        if medium.exclusive {
            let free = lookup(&medium_free, m).unwrap_or(state.medium_free[m]);
            start = start.max(free);
        }
        if medium.blocking {
            let free = lookup(&sender_free, src_op).unwrap_or(state.op_free[src_op]);
            start = start.max(free);
        }
        let end = start + transfer_cycles(medium, arc.bytes);
        if medium.exclusive {
            set(&mut medium_free, m, end);
        }
        if medium.blocking {
            set(&mut sender_free, src_op, end);
        }
        data_ready = data_ready.max(end);
        transfers.push(Transfer {
            arcs: vec![ai],
            medium: m,
            src_op,
            dst_op: op,
            start,
            end,
            bytes: arc.bytes,
            sender_slot: medium.blocking.then(|| slots[src_op].len()),
        });
    }
    let start = state.op_free[op].max(data_ready);
    Some(Placement {
        start,
        finish: start + cost,
        transfers,
    })
}

fn lookup(v: &[(usize, f64)], k: usize) -> Option<f64> {
    v.iter().find(|e| e.0 == k).map(|e| e.1)
}

fn set(v: &mut Vec<(usize, f64)>, k: usize, x: f64) {
    match v.iter_mut().find(|e| e.0 == k) {
        Some(e) => e.1 = x,
        None => v.push((k, x)),
    }
}
