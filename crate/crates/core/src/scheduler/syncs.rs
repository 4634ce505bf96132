use std::collections::BTreeMap;

use serde::Serialize;

use super::{TimedSchedule, Transfer, EPS};
use crate::archmodel::{transfer_cycles, ArchGraph};
use crate::sdfgraph::FiringDag;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub transfers_before: usize,
    pub transfers_after: usize,
    pub syncs_before: usize,
    pub syncs_after: usize,
    pub makespan_before: f64,
    pub makespan_after: f64,
}

/// Two synchronisation objects per transfer.
pub fn sync_count(schedule: &TimedSchedule) -> usize {
    2 * schedule.transfers.len()
}

/// Merge consecutive transfers between the same pair of operators when the
/// merged transfer still completes before every consumer starts. Compute
/// slots are never moved. Blocking and exclusive media are left alone.
pub fn reduce_syncs(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    arch: &ArchGraph,
) -> (TimedSchedule, SyncReport) {
    let times = schedule.node_times();
    let mut groups: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
    let mut fixed = Vec::new();
    for (i, t) in schedule.transfers.iter().enumerate() {
        let m = &arch.media[t.medium];
        if m.blocking || m.exclusive {
            fixed.push((i, t.clone()));
        } else {
            groups.entry((t.src_op, t.dst_op, t.medium)).or_default().push(i);
        }
    }

    let mut merged: Vec<(usize, Transfer)> = fixed;
    for ((src_op, dst_op, medium), mut idx) in groups {
        idx.sort_by(|&a, &b| {
            schedule.transfers[a]
                .start
                .total_cmp(&schedule.transfers[b].start)
                .then(a.cmp(&b))
        });
        let m = &arch.media[medium];
        let build = |arcs: Vec<usize>| -> Transfer {
            let start = arcs.iter().map(|&a| times[dag.arcs[a].src].1).fold(0.0, f64::max);
            let bytes = arcs.iter().map(|&a| dag.arcs[a].bytes).sum();
            Transfer {
                arcs,
                medium,
                src_op,
                dst_op,
                start,
                end: start + transfer_cycles(m, bytes),
                bytes,
                sender_slot: None,
            }
        };
        let deadline = |arcs: &[usize]| {
            arcs.iter()
                .map(|&a| times[dag.arcs[a].dst].0)
                .fold(f64::INFINITY, f64::min)
        };
        let mut current: Option<(usize, Transfer)> = None;
        for i in idx {
            let t = &schedule.transfers[i];
            current = Some(match current.take() {
                None => (i, t.clone()),
                Some((first, cur)) => {
                    let mut arcs = cur.arcs.clone();
                    arcs.extend(&t.arcs);
                    let candidate = build(arcs);
                    if candidate.end <= deadline(&candidate.arcs) + EPS {
                        (first, candidate)
                    } else {
                        merged.push((first, cur));
                        (i, t.clone())
                    }
                }
            });
        }
        merged.extend(current);
    }
    merged.sort_by_key(|(i, _)| *i);

    let mut out = schedule.clone();
    out.transfers = merged.into_iter().map(|(_, t)| t).collect();
    let report = SyncReport {
        transfers_before: schedule.transfers.len(),
        transfers_after: out.transfers.len(),
        syncs_before: sync_count(schedule),
        syncs_after: sync_count(&out),
        makespan_before: schedule.makespan,
        makespan_after: out.makespan,
    };
    (out, report)
}
