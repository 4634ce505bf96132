//! Discrete-event replay of timed schedules, deadline checks, pipelined
//! iterations and Gantt export.

mod gantt;
mod pipeline;
mod replay;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archmodel::ArchGraph;
use crate::scheduler::{validate_schedule, TimedSchedule, EPS};
use crate::sdfgraph::{base_name, FiringDag};

pub use gantt::{export_gantt, gantt_json, gantt_svg};
pub use pipeline::{simulate_pipelined, PipelineReport};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Compute,
    Transfer,
    Wait,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub resource: String,
    pub label: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<Event>,
    pub makespan: f64,
    /// Compute and transfer time per resource; waits are not busy.
    pub busy: BTreeMap<String, f64>,
}

impl Timeline {
    /// Resources in first-appearance order.
    pub fn resources(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.events {
            if !out.contains(&e.resource) {
                out.push(e.resource.clone());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeadlineVerdict {
    pub pass: bool,
    pub makespan: f64,
    pub deadline: f64,
    pub slack: f64,
}

pub fn check_deadline(timeline: &Timeline, deadline_cycles: f64) -> DeadlineVerdict {
    DeadlineVerdict {
        pass: timeline.makespan <= deadline_cycles + EPS,
        makespan: timeline.makespan,
        deadline: deadline_cycles,
        slack: deadline_cycles - timeline.makespan,
    }
}

/// Replay a schedule event by event. Slot durations come from the
/// schedule; transfer costs and contention come from `arch`.
pub fn simulate(schedule: &TimedSchedule, dag: &FiringDag, arch: &ArchGraph) -> Result<Timeline> {
    validate_schedule(schedule, dag, arch).map_err(SimError::InvalidSchedule)?;
    let plan = replay::Plan::new(schedule, dag, arch).map_err(SimError::InvalidSchedule)?;
    let run = plan.run(None);
    Ok(build_timeline(schedule, dag, arch, &plan, &run, 0))
}

pub(crate) fn build_timeline(
    schedule: &TimedSchedule,
    dag: &FiringDag,
    arch: &ArchGraph,
    plan: &replay::Plan,
    run: &replay::Run,
    iteration: usize,
) -> Timeline {
    let mut events = Vec::new();
    let suffix = if iteration > 0 {
        format!(" [{iteration}]")
    } else {
        String::new()
    };
    for (i, &(op, _)) in plan.slot_pos.iter().enumerate() {
        events.push(Event {
            kind: EventKind::Compute,
            resource: schedule.operators[op].clone(),
            label: format!("{}{suffix}", dag.nodes[plan.slot_firing[i]]),
            start: run.start[i],
            end: run.end[i],
        });
    }
    for (ti, t) in schedule.transfers.iter().enumerate() {
        let item = plan.n_slots + ti;
        let a = &dag.arcs[t.arcs[0]];
        let more = if t.arcs.len() > 1 {
            format!(" +{}", t.arcs.len() - 1)
        } else {
            String::new()
        };
        let label = format!(
            "{}>{}{more} {}B{suffix}",
            base_name(&dag.nodes[a.src].actor),
            base_name(&dag.nodes[a.dst].actor),
            t.bytes
        );
        events.push(Event {
            kind: EventKind::Transfer,
            resource: arch.media[t.medium].id.clone(),
            label: label.clone(),
            start: run.start[item],
            end: run.end[item],
        });
        events.push(Event {
            kind: EventKind::Wait,
            resource: format!("{}/comm", schedule.operators[t.dst_op]),
            label,
            start: run.start[item],
            end: run.end[item],
        });
    }
    let mut busy: BTreeMap<String, f64> = schedule.operators.iter().map(|o| (o.clone(), 0.0)).collect();
    for e in &events {
        if e.kind != EventKind::Wait {
            *busy.entry(e.resource.clone()).or_default() += e.end - e.start;
        }
    }
    Timeline {
        makespan: plan.makespan(run),
        events,
        busy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archmodel::preset;
    use crate::scheduler::{list_schedule, Constraints, TimingRecord, TimingTable};
    use crate::sdfgraph::{expand, Actor, Endpoint, SdfEdge, SdfGraph};

    fn fork_join() -> (FiringDag, TimingTable) {
        let mut g = SdfGraph::new("g");
        for id in ["S", "W", "J"] {
            g.actors.push(Actor::atomic(id));
        }
        g.edges.push(SdfEdge::new(Endpoint::new("S", "out"), Endpoint::new("W", "in"), 3, 1, 960));
        g.edges.push(SdfEdge::new(Endpoint::new("W", "out"), Endpoint::new("J", "in"), 1, 3, 480));
        let t = TimingTable::new(
            [("S", 500), ("W", 4000), ("J", 300)]
                .iter()
                .map(|&(a, c)| TimingRecord { actor: a.into(), operator: "*".into(), cycles: c })
                .collect(),
        );
        (expand(&g).unwrap(), t)
    }

    #[test]
    fn empty_schedule() {
        let g = SdfGraph::new("empty");
        let dag = expand(&g).unwrap();
        let arch = preset("mono").unwrap();
        let s = list_schedule(&dag, &arch, &TimingTable::default(), &Constraints::none()).unwrap();
        let t = simulate(&s, &dag, &arch).unwrap();
        assert!(t.events.is_empty());
        assert_eq!(t.makespan, 0.0);
    }

    #[test]
    fn replay_matches_scheduler() {
        let (dag, t) = fork_join();
        for name in ["mono", "dual", "tri_sym", "quad"] {
            let arch = preset(name).unwrap();
            let s = list_schedule(&dag, &arch, &t, &Constraints::none()).unwrap();
            let tl = simulate(&s, &dag, &arch).unwrap();
            assert!((tl.makespan - s.makespan).abs() <= 1e-9 * s.makespan, "{name}");
            // Load identity.
            for (op, slots) in s.operators.iter().zip(&s.slots) {
                let sum: f64 = slots.iter().map(|x| x.end - x.start).sum();
                assert!((tl.busy[op] - sum).abs() < 1e-6);
            }
            assert!(tl.events.iter().filter(|e| e.kind == EventKind::Wait).all(|e| !tl.busy.contains_key(&e.resource)));
        }
    }

    #[test]
    fn invalid_schedule_names_violation() {
        let (dag, t) = fork_join();
        let arch = preset("dual").unwrap();
        let mut s = list_schedule(&dag, &arch, &t, &Constraints::none()).unwrap();
        let j = dag.node("J", 0).unwrap();
        let (op, k) = s.slot_of()[j];
        s.slots[op][k].start = -5.0;
        match simulate(&s, &dag, &arch) {
            Err(SimError::InvalidSchedule(msg)) => assert!(msg.contains("J#0"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exclusive_replay_is_never_faster() {
        let (dag, t) = fork_join();
        let arch = preset("tri_sym").unwrap();
        let s = list_schedule(&dag, &arch, &t, &Constraints::none()).unwrap();
        let mut contended = arch.clone();
        contended.media[0].exclusive = true;
        let free = simulate(&s, &dag, &arch).unwrap();
        let slow = simulate(&s, &dag, &contended).unwrap();
        assert!(slow.makespan >= free.makespan - 1e-9);
    }

    #[test]
    fn deadline_semantics() {
        let t = Timeline::default();
        let v = check_deadline(&t, 1.0);
        assert!(v.pass);
        assert_eq!(v.slack, 1.0);
        let t = Timeline { makespan: 4e6, ..Default::default() };
        let v = check_deadline(&t, 4e6);
        assert!(v.pass);
        assert_eq!(v.slack, 0.0);
        let v = check_deadline(&t, 3e6);
        assert!(!v.pass);
        assert_eq!(v.slack, -1e6);
    }
}
