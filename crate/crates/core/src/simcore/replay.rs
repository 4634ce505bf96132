use crate::archmodel::{transfer_cycles, ArchGraph};
use crate::scheduler::TimedSchedule;
use crate::sdfgraph::FiringDag;

/// Dependency structure of one scheduled iteration. Items are slots first
/// (flattened per operator) then transfers.
pub(crate) struct Plan {
    pub n_slots: usize,
    /// (operator, position) of each slot item.
    pub slot_pos: Vec<(usize, usize)>,
    pub slot_firing: Vec<usize>,
    pub deps: Vec<Vec<usize>>,
    pub duration: Vec<f64>,
    pub order: Vec<usize>,
    /// Per operator, items whose end releases the operator.
    pub op_items: Vec<Vec<usize>>,
    /// Per medium, transfer items serialised on it (exclusive media only).
    pub medium_items: Vec<Vec<usize>>,
    /// Carried arcs as (dst item, src item, transfer cost or None if local).
    pub carried: Vec<(usize, usize, Option<f64>)>,
}

#[derive(Clone)]
pub(crate) struct Run {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl Plan {
    pub fn new(schedule: &TimedSchedule, dag: &FiringDag, arch: &ArchGraph) -> Result<Plan, String> {
        let mut slot_pos = Vec::new();
        let mut slot_firing = Vec::new();
        let mut duration = Vec::new();
        let mut first_slot = Vec::new();
        for (op, slots) in schedule.slots.iter().enumerate() {
            first_slot.push(slot_pos.len());
            for (k, s) in slots.iter().enumerate() {
                slot_pos.push((op, k));
                slot_firing.push(s.firing);
                duration.push(s.end - s.start);
            }
        }
        let n_slots = slot_pos.len();
        let mut node_item = vec![usize::MAX; dag.nodes.len()];
        for (i, &f) in slot_firing.iter().enumerate() {
            node_item[f] = i;
        }
        let n_items = n_slots + schedule.transfers.len();
        let mut deps: Vec<Vec<usize>> = vec![Vec::new(); n_items];
        let mut arc_transfer = vec![usize::MAX; dag.arcs.len()];
        let mut medium_items: Vec<Vec<usize>> = vec![Vec::new(); arch.media.len()];
        let mut blocking_from: Vec<Vec<usize>> = vec![Vec::new(); arch.operators.len()];
        let mut op_items: Vec<Vec<usize>> = (0..arch.operators.len())
            .map(|op| (first_slot[op]..first_slot[op] + schedule.slots[op].len()).collect())
            .collect();

        for (ti, t) in schedule.transfers.iter().enumerate() {
            let item = n_slots + ti;
            let medium = &arch.media[t.medium];
            duration.push(transfer_cycles(medium, t.bytes));
            for &a in &t.arcs {
                arc_transfer[a] = item;
                deps[item].push(node_item[dag.arcs[a].src]);
            }
            if medium.exclusive {
                if let Some(&prev) = medium_items[t.medium].last() {
                    deps[item].push(prev);
                }
                medium_items[t.medium].push(item);
            }
            if medium.blocking {
                if let Some(&prev) = blocking_from[t.src_op].last() {
                    deps[item].push(prev);
                }
                blocking_from[t.src_op].push(item);
                op_items[t.src_op].push(item);
                if let Some(k) = t.sender_slot {
                    if k > 0 {
                        deps[item].push(first_slot[t.src_op] + k - 1);
                    }
                    if k < schedule.slots[t.src_op].len() {
                        deps[first_slot[t.src_op] + k].push(item);
                    }
                }
            }
        }
        for (i, &(op, k)) in slot_pos.iter().enumerate() {
            if k > 0 {
                deps[i].push(first_slot[op] + k - 1);
            }
            for &a in dag.incoming_ids(slot_firing[i]) {
                let arc = &dag.arcs[a];
                if schedule.mapping[arc.src] == op {
                    deps[i].push(node_item[arc.src]);
                } else if arc_transfer[a] != usize::MAX {
                    deps[i].push(arc_transfer[a]);
                } else {
                    return Err(format!("arc {a} has no transfer"));
                }
            }
        }

        let mut carried = Vec::new();
        for c in &dag.carried {
            let (so, dop) = (schedule.mapping[c.src], schedule.mapping[c.dst]);
            let cost = if so == dop {
                None
            } else {
                let m = arch
                    .medium_between(&schedule.operators[so], &schedule.operators[dop])
                    .ok_or_else(|| format!("no medium for carried arc {}->{}", dag.nodes[c.src], dag.nodes[c.dst]))?;
                Some(transfer_cycles(m, c.bytes))
            };
            carried.push((node_item[c.dst], node_item[c.src], cost));
        }

        // Kahn order over items, ties by item index.
        let mut indeg = vec![0usize; n_items];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n_items];
        for (i, d) in deps.iter().enumerate() {
            for &p in d {
                indeg[i] += 1;
                succ[p].push(i);
            }
        }
        let mut ready: std::collections::BTreeSet<usize> =
            (0..n_items).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n_items);
        while let Some(i) = ready.pop_first() {
            order.push(i);
            for &s in &succ[i] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.insert(s);
                }
            }
        }
        if order.len() != n_items {
            return Err("schedule order contradicts data dependencies".into());
        }
        Ok(Plan {
            n_slots,
            slot_pos,
            slot_firing,
            deps,
            duration,
            order,
            op_items,
            medium_items,
            carried,
        })
    }

    /// Earliest times of one iteration; `prev` is the preceding iteration
    /// when iterations are issued back to back.
    pub fn run(&self, prev: Option<&Run>) -> Run {
        let n = self.duration.len();
        let mut floor = vec![0.0f64; n];
        if let Some(p) = prev {
            for items in &self.op_items {
                let release = items.iter().map(|&i| p.end[i]).fold(0.0, f64::max);
                if let Some(&first) = items.iter().min() {
                    floor[first] = floor[first].max(release);
                }
            }
            for items in &self.medium_items {
                if let (Some(&first), Some(&last)) = (items.first(), items.last()) {
                    floor[first] = floor[first].max(p.end[last]);
                }
            }
            for &(dst, src, cost) in &self.carried {
                floor[dst] = floor[dst].max(p.end[src] + cost.unwrap_or(0.0));
            }
        }
        let mut start = vec![0.0f64; n];
        let mut end = vec![0.0f64; n];
        for &i in &self.order {
            let s = self.deps[i].iter().map(|&d| end[d]).fold(floor[i], f64::max);
            start[i] = s;
            end[i] = s + self.duration[i];
        }
        Run { start, end }
    }

    pub fn makespan(&self, run: &Run) -> f64 {
        run.end[..self.n_slots].iter().copied().fold(0.0, f64::max)
    }
}
