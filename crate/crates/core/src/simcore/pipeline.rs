use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{build_timeline, replay::Plan, Result, SimError, Timeline};
use crate::archmodel::ArchGraph;
use crate::scheduler::{validate_schedule, TimedSchedule};
use crate::sdfgraph::{base_name, FiringDag};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineReport {
    pub period_cycles: f64,
    pub latency_cycles: f64,
    /// Completion time of every iteration.
    pub completions: Vec<f64>,
    /// Actor base names run by each operator.
    pub stages: BTreeMap<String, BTreeSet<String>>,
    pub busy: BTreeMap<String, f64>,
    /// Events of all iterations, for charting.
    #[serde(skip)]
    pub timeline: Timeline,
}

/// Issue `iterations` copies of the schedule back to back on the same
/// mapping. Each operator and exclusive medium keeps its order across
/// iterations; inter-iteration delays feed the next iteration.
pub fn simulate_pipelined(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    arch: &ArchGraph,
    iterations: usize,
) -> Result<PipelineReport> {
    validate_schedule(schedule, dag, arch).map_err(SimError::InvalidSchedule)?;
    if iterations < 2 {
        return Err(SimError::InvalidSchedule("pipelining needs at least two iterations".into()));
    }
    let plan = Plan::new(schedule, dag, arch).map_err(SimError::InvalidSchedule)?;
    let mut runs = Vec::with_capacity(iterations);
    let mut timeline = Timeline::default();
    for i in 0..iterations {
        let run = plan.run(runs.last());
        let t = build_timeline(schedule, dag, arch, &plan, &run, i);
        timeline.events.extend(t.events);
        timeline.makespan = timeline.makespan.max(t.makespan);
        for (k, v) in t.busy {
            *timeline.busy.entry(k).or_default() += v;
        }
        runs.push(run);
    }
    let completions: Vec<f64> = runs.iter().map(|r| plan.makespan(r)).collect();
    let latency = completions[0];
    let period = completions[iterations - 1] - completions[iterations - 2];

    let mut stages: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut busy: BTreeMap<String, f64> = BTreeMap::new();
    for (op, slots) in schedule.operators.iter().zip(&schedule.slots) {
        let names = stages.entry(op.clone()).or_default();
        let mut b = 0.0;
        for s in slots {
            names.insert(base_name(&dag.nodes[s.firing].actor).to_string());
            b += s.end - s.start;
        }
        busy.insert(op.clone(), b);
    }
    Ok(PipelineReport {
        period_cycles: period,
        latency_cycles: latency,
        completions,
        stages,
        busy,
        timeline,
    })
}
