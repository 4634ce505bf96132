use serde::Serialize;

use super::{Result, ScheduleError, TimedSchedule};
use crate::archmodel::{ArchGraph, MemoryLevel};
use crate::sdfgraph::FiringDag;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Placement {
    pub arc: usize,
    pub operator: usize,
    pub region: String,
    pub level: MemoryLevel,
    pub offset: u64,
    pub size: u64,
    pub lifetime: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionDemand {
    pub operator: String,
    pub region: String,
    pub capacity: u64,
    /// Highest byte used in the region.
    pub peak_bytes: u64,
    /// Peak the operator would need with an unbounded local region.
    pub demand_bytes: u64,
    /// Bytes of buffers that overflowed to external memory.
    pub spilled_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BufferPlacement {
    pub placements: Vec<Placement>,
    pub demand: Vec<RegionDemand>,
}

/// Lifetime of each arc buffer: producer start to consumer end.
pub fn buffer_lifetimes(schedule: &TimedSchedule, dag: &FiringDag) -> Vec<(f64, f64)> {
    let t = schedule.node_times();
    dag.arcs.iter().map(|a| (t[a.src].0, t[a.dst].1)).collect()
}

fn overlaps(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Lowest offset where `size` bytes fit next to the live buffers in `placed`.
fn first_fit(placed: &[(u64, u64, (f64, f64))], size: u64, life: (f64, f64), capacity: u64) -> Option<u64> {
    let mut busy: Vec<(u64, u64)> = placed
        .iter()
        .filter(|p| overlaps(p.2, life))
        .map(|p| (p.0, p.1))
        .collect();
    busy.sort_unstable();
    let mut offset = 0u64;
    for (o, s) in busy {
        if offset + size <= o {
            break;
        }
        offset = offset.max(o + s);
    }
    (offset + size <= capacity).then_some(offset)
}

/// First-fit decreasing into the consumer's local region, overflowing to the
/// external region. Buffers with disjoint lifetimes may share offsets.
pub fn allocate_buffers(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    arch: &ArchGraph,
    lifetimes: &[(f64, f64)],
) -> Result<BufferPlacement> {
    let mut order: Vec<usize> = (0..dag.arcs.len()).collect();
    order.sort_by(|&a, &b| dag.arcs[b].bytes.cmp(&dag.arcs[a].bytes).then(a.cmp(&b)));

    let n_ops = arch.operators.len();
    let mut local: Vec<Vec<(u64, u64, (f64, f64))>> = vec![Vec::new(); n_ops];
    let mut unbounded: Vec<Vec<(u64, u64, (f64, f64))>> = vec![Vec::new(); n_ops];
    let mut external: Vec<(u64, u64, (f64, f64))> = Vec::new();
    let mut spilled = vec![0u64; n_ops];
    let mut placements = Vec::with_capacity(order.len());
    let ext_region = arch.operators.iter().find_map(|o| o.external_memory());

    for a in order {
        let size = dag.arcs[a].bytes;
        let life = lifetimes[a];
        let op = schedule.mapping[dag.arcs[a].dst];
        let o = first_fit(&unbounded[op], size, life, u64::MAX).expect("unbounded");
        unbounded[op].push((o, size, life));

        let loc = arch.operators[op].local_memory();
        if let Some(region) = loc {
            if let Some(offset) = first_fit(&local[op], size, life, region.capacity_bytes) {
                local[op].push((offset, size, life));
                placements.push(Placement {
                    arc: a,
                    operator: op,
                    region: region.name.clone(),
                    level: MemoryLevel::Local,
                    offset,
                    size,
                    lifetime: life,
                });
                continue;
            }
        }
        let region = ext_region.ok_or(ScheduleError::CapacityExceeded { arc: a, bytes: size })?;
        let offset = first_fit(&external, size, life, region.capacity_bytes)
            .ok_or(ScheduleError::CapacityExceeded { arc: a, bytes: size })?;
        external.push((offset, size, life));
        spilled[op] += size;
        placements.push(Placement {
            arc: a,
            operator: op,
            region: region.name.clone(),
            level: MemoryLevel::External,
            offset,
            size,
            lifetime: life,
        });
    }

    let peak = |v: &[(u64, u64, (f64, f64))]| v.iter().map(|p| p.0 + p.1).max().unwrap_or(0);
    let mut demand = Vec::new();
    for (op, o) in arch.operators.iter().enumerate() {
        if let Some(region) = o.local_memory() {
            demand.push(RegionDemand {
                operator: o.id.clone(),
                region: region.name.clone(),
                capacity: region.capacity_bytes,
                peak_bytes: peak(&local[op]),
                demand_bytes: peak(&unbounded[op]),
                spilled_bytes: spilled[op],
            });
        }
    }
    if let Some(region) = ext_region {
        demand.push(RegionDemand {
            operator: "*".into(),
            region: region.name.clone(),
            capacity: region.capacity_bytes,
            peak_bytes: peak(&external),
            demand_bytes: peak(&external),
            spilled_bytes: 0,
        });
    }
    Ok(BufferPlacement { placements, demand })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryMode {
    pub name: String,
    pub capacities: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpill {
    pub name: String,
    pub spill_bytes: u64,
}

/// Pair the largest demands with the largest regions of each mode and pick
/// the mode spilling the fewest bytes to external memory (first on ties).
pub fn recommend_memory_mode(demands: &[u64], modes: &[MemoryMode]) -> (String, Vec<ModeSpill>) {
    let mut d = demands.to_vec();
    d.sort_unstable_by(|a, b| b.cmp(a));
    let spills: Vec<ModeSpill> = modes
        .iter()
        .map(|m| {
            let mut caps = m.capacities.clone();
            caps.sort_unstable_by(|a, b| b.cmp(a));
            let spill = d
                .iter()
                .enumerate()
                .map(|(i, &x)| x.saturating_sub(caps.get(i).copied().unwrap_or(0)))
                .sum();
            ModeSpill {
                name: m.name.clone(),
                spill_bytes: spill,
            }
        })
        .collect();
    let best = spills
        .iter()
        .min_by_key(|s| s.spill_bytes)
        .map(|s| s.name.clone())
        .unwrap_or_default();
    (best, spills)
}
