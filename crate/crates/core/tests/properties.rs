use std::collections::BTreeMap;

use num_integer::Integer;
use proptest::prelude::*;
use sdfmap::archmodel::{preset, transfer_cycles, Medium};
use sdfmap::runtime::{
    channel_map, decode_channel, execute, execute_reference, generate_programs, ExecConfig, KernelRegistry, Op,
};
use sdfmap::scheduler::{
    allocate_buffers, buffer_lifetimes, list_schedule, reduce_syncs, validate_schedule, Constraints, TimingRecord,
    TimingTable, EPS,
};
use sdfmap::sdfgraph::{
    expand, parse_graph, repetition_vector, schedule_expression, serialize_graph, Actor, Endpoint, SdfEdge, SdfGraph,
};
use sdfmap::simcore::{simulate, simulate_pipelined};

/// Connected acyclic graph with a prescribed repetition vector `q`
/// (before normalisation) and optional delayed self-loops.
#[derive(Debug, Clone)]
struct Spec {
    q: Vec<u64>,
    parents: Vec<usize>,
    extra: Vec<(usize, usize)>,
    mult: Vec<u64>,
    self_loops: Vec<bool>,
    cost: Vec<u64>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(1u64..5, n),
            prop::collection::vec(any::<prop::sample::Index>(), n),
            prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..3),
            prop::collection::vec(1u64..3, 2 * n + 3),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(10u64..500, n),
        )
            .prop_map(move |(q, par, extra, mult, self_loops, cost)| Spec {
                parents: (0..n).map(|j| if j == 0 { 0 } else { par[j].index(j) }).collect(),
                extra: extra
                    .into_iter()
                    .filter_map(|(a, b)| {
                        let (a, b) = (a.index(n), b.index(n));
                        (a < b).then_some((a, b))
                    })
                    .collect(),
                q,
                mult,
                self_loops,
                cost,
            })
    })
}

fn name(i: usize) -> String {
    format!("A{i}")
}

fn build(s: &Spec) -> SdfGraph {
    let n = s.q.len();
    let mut g = SdfGraph::new("random");
    for i in 0..n {
        g.actors.push(Actor::atomic(name(i)).with_timing("*", s.cost[i]));
    }
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|j| (s.parents[j], j)).collect();
    pairs.extend(&s.extra);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let gcd = s.q[i].gcd(&s.q[j]);
        let m = s.mult[k % s.mult.len()];
        g.edges.push(SdfEdge::new(
            Endpoint::new(name(i), format!("o{k}")),
            Endpoint::new(name(j), format!("i{k}")),
            s.q[j] / gcd * m,
            s.q[i] / gcd * m,
            8 * m,
        ));
    }
    for i in 0..n {
        if s.self_loops[i] {
            g.edges.push(
                SdfEdge::new(Endpoint::new(name(i), "state"), Endpoint::new(name(i), "prev"), 1, 1, 8).with_delay(1),
            );
        }
    }
    g
}

/// Firing counts of a `(nX)` expression, multiplying nested loop counts.
fn expression_counts(expr: &str) -> BTreeMap<String, u64> {
    fn group(s: &[u8], i: &mut usize, factor: u64, out: &mut BTreeMap<String, u64>) {
        assert_eq!(s[*i], b'(');
        *i += 1;
        let start = *i;
        while s[*i].is_ascii_digit() {
            *i += 1;
        }
        let n = if *i > start {
            std::str::from_utf8(&s[start..*i]).unwrap().parse().unwrap()
        } else {
            1
        };
        if s[*i] == b'(' {
            while s[*i] == b'(' {
                group(s, i, factor * n, out);
            }
        } else {
            let a = *i;
            while s[*i] != b')' {
                *i += 1;
            }
            *out.entry(String::from_utf8(s[a..*i].to_vec()).unwrap()).or_default() += factor * n;
        }
        assert_eq!(s[*i], b')');
        *i += 1;
    }
    let s = expr.as_bytes();
    let mut out = BTreeMap::new();
    let mut i = 0;
    while i < s.len() {
        group(s, &mut i, 1, &mut out);
    }
    out
}

fn timings() -> TimingTable {
    TimingTable::new(Vec::<TimingRecord>::new())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn balance_minimality_and_expansion(s in spec()) {
        let g = build(&s);
        let q = repetition_vector(&g).unwrap();
        for e in &g.edges {
            prop_assert_eq!(e.prod * q[&e.src.actor], e.cons * q[&e.dst.actor]);
        }
        let gcd = q.values().fold(0u64, |a, &b| a.gcd(&b));
        prop_assert_eq!(gcd, 1);
        let dag = expand(&g).unwrap();
        prop_assert_eq!(dag.nodes.len() as u64, q.values().sum::<u64>());
        prop_assert_eq!(dag.topo_order().unwrap().len(), dag.nodes.len());
        let counts = expression_counts(&schedule_expression(&g).unwrap());
        prop_assert_eq!(counts, q);
    }

    #[test]
    fn serialization_fixpoint(s in spec()) {
        let g = build(&s);
        let text = serialize_graph(&g);
        let back = parse_graph(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(serialize_graph(&back), text);
    }

    #[test]
    fn transfer_cost_is_affine(lat in 0.0f64..5000.0, rate in 0.1f64..10.0, a in 0u64..1_000_000, b in 0u64..1_000_000) {
        let m = Medium {
            id: "m".into(),
            latency_cycles: lat,
            bytes_per_cycle: rate,
            blocking: false,
            exclusive: false,
            endpoints: vec!["a".into(), "b".into()],
        };
        let lhs = transfer_cycles(&m, a + b);
        let rhs = transfer_cycles(&m, a) + transfer_cycles(&m, b) - lat;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1.0));
    }

    #[test]
    fn schedules_are_valid_and_replayable(s in spec(), p in 0usize..4) {
        let g = build(&s);
        let dag = expand(&g).unwrap();
        let arch = preset(["mono", "dual", "tri_sym", "quad"][p]).unwrap();
        let sched = list_schedule(&dag, &arch, &timings(), &Constraints::none()).unwrap();
        prop_assert_eq!(validate_schedule(&sched, &dag, &arch), Ok(()));
        prop_assert_eq!(&list_schedule(&dag, &arch, &timings(), &Constraints::none()).unwrap(), &sched);

        let tl = simulate(&sched, &dag, &arch).unwrap();
        prop_assert!((tl.makespan - sched.makespan).abs() <= 1e-9 * sched.makespan.max(1.0));
        for (op, id) in arch.operators.iter().enumerate() {
            let expected: f64 = sched.slots[op].iter().map(|sl| s.cost[dag.nodes[sl.firing].actor[1..].parse::<usize>().unwrap()] as f64).sum();
            let busy = tl.busy.get(&id.id).copied().unwrap_or(0.0);
            prop_assert!((busy - expected).abs() < EPS);
        }

        let pipe = simulate_pipelined(&sched, &dag, &arch, 4).unwrap();
        let max_busy = arch.operators.iter().map(|o| tl.busy.get(&o.id).copied().unwrap_or(0.0)).fold(0.0, f64::max);
        prop_assert!(pipe.period_cycles + EPS >= max_busy);

        let (reduced, report) = reduce_syncs(&sched, &dag, &arch);
        prop_assert!(reduced.makespan <= sched.makespan + EPS);
        prop_assert!(report.syncs_after <= report.syncs_before);
        prop_assert_eq!(validate_schedule(&reduced, &dag, &arch), Ok(()));
    }

    #[test]
    fn buffer_placements_never_collide(s in spec(), p in 0usize..4) {
        let g = build(&s);
        let dag = expand(&g).unwrap();
        let arch = preset(["mono", "dual", "tri_sym", "quad"][p]).unwrap();
        let sched = list_schedule(&dag, &arch, &timings(), &Constraints::none()).unwrap();
        let life = buffer_lifetimes(&sched, &dag);
        let plan = allocate_buffers(&sched, &dag, &arch, &life).unwrap();
        prop_assert_eq!(plan.placements.len(), dag.arcs.len());
        for (i, a) in plan.placements.iter().enumerate() {
            let op = &arch.operators[a.operator];
            let cap = op.memories.iter().find(|m| m.name == a.region).unwrap().capacity_bytes;
            prop_assert!(a.offset + a.size <= cap);
            for b in &plan.placements[i + 1..] {
                let same = a.region == b.region && (a.operator == b.operator || a.level == sdfmap::archmodel::MemoryLevel::External);
                let live = a.lifetime.0 < b.lifetime.1 && b.lifetime.0 < a.lifetime.1;
                let apart = a.offset + a.size <= b.offset || b.offset + b.size <= a.offset;
                prop_assert!(!(same && live) || apart, "{a:?} collides with {b:?}");
            }
        }
    }

    #[test]
    fn channel_law(p in 2usize..=8) {
        let m = channel_map(p).unwrap();
        prop_assert_eq!(m.len(), 2 * p * (p - 1));
        for (&(s, r), &(f, rem)) in &m.pairs {
            prop_assert_eq!(decode_channel(p, f).unwrap().0, s);
            prop_assert_eq!(decode_channel(p, rem).unwrap().1, r);
        }
    }
}

/// Every actor adds its index to each byte it receives and emits the sum
/// of its inputs on every output port it has.
fn registry(g: &SdfGraph) -> KernelRegistry {
    let mut reg = KernelRegistry::new();
    for a in &g.actors {
        let outs: Vec<(String, usize)> = g
            .edges
            .iter()
            .filter(|e| e.src.actor == a.id)
            .map(|e| (e.src.port.clone(), (e.prod * e.token_bytes) as usize))
            .collect();
        reg.register(a.id.clone(), move |ctx| {
            let seed = ctx
                .inputs
                .values()
                .flatten()
                .fold(ctx.index as u8, |acc, &b| acc.wrapping_mul(31).wrapping_add(b));
            let mut out: BTreeMap<String, Vec<u8>> = BTreeMap::new();
            for (port, len) in &outs {
                out.insert(port.clone(), (0..*len).map(|i| seed.wrapping_add(i as u8)).collect());
            }
            out.insert("digest".into(), vec![seed]);
            Ok(out)
        });
    }
    reg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn multicore_runs_match_the_reference(s in spec(), p in 1usize..4, seed in any::<u64>()) {
        let g = build(&s);
        let dag = expand(&g).unwrap();
        let arch = preset(["mono", "dual", "tri_sym", "quad"][p]).unwrap();
        let reg = registry(&g);
        let sched = list_schedule(&dag, &arch, &timings(), &Constraints::none()).unwrap();
        let (sched, _) = reduce_syncs(&sched, &dag, &arch);
        let progs = generate_programs(&sched, &dag, &reg).unwrap();
        // Two semaphores per transfer on each involved core.
        for prog in &progs {
            let involved = sched.transfers.iter().filter(|t| t.src_op == prog.core || t.dst_op == prog.core).count();
            prop_assert_eq!(prog.sem_table.len(), 2 * involved);
            let sends = prog.comm_seq.iter().filter(|o| matches!(o, Op::Send { .. })).count();
            prop_assert_eq!(sends, sched.transfers.iter().filter(|t| t.src_op == prog.core).count());
        }
        let reference = execute_reference(&dag, &reg, &BTreeMap::new()).unwrap();
        let cfg = ExecConfig { frame_bytes: 24, jitter_seed: Some(seed), ..Default::default() };
        let res = execute(&dag, &sched, &progs, &reg, &BTreeMap::new(), &cfg).unwrap();
        prop_assert_eq!(res.outputs, reference);
        prop_assert!(res.violations.is_empty());
        prop_assert_eq!(res.transfers.len(), sched.transfers.len());
    }
}
