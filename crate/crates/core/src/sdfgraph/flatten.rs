use std::collections::{BTreeMap, BTreeSet};

use num_integer::Integer;

use super::{
    repetition_vector, Actor, Endpoint, Result, SdfEdge, SdfError, SdfGraph, StreamAdapter,
};

/// Flatten the hierarchy into a single-level graph. Child actor ids are
/// qualified with their parent path (`Parent/Child`).
pub fn flatten(graph: &SdfGraph) -> Result<SdfGraph> {
    graph.validate()?;
    if graph.is_flat() {
        repetition_vector(graph)?;
        return Ok(graph.clone());
    }
    let lowered = lower(graph, "", &graph.library, &mut Vec::new(), true)?;
    let flat = SdfGraph {
        name: graph.name.clone(),
        actors: lowered.actors,
        edges: lowered.edges,
        library: Vec::new(),
    };
    flat.validate()?;
    repetition_vector(&flat)?;
    Ok(flat)
}

/// Looped single-appearance schedule in `(nX)` notation. Loops follow the
/// hierarchy; adjacent atomic siblings whose counts share a factor are
/// fused.
pub fn schedule_expression(graph: &SdfGraph) -> Result<String> {
    graph.validate()?;
    let lowered = lower(graph, "", &graph.library, &mut Vec::new(), true)?;
    match lowered.terms {
        Ok(terms) => Ok(render(&terms)),
        Err(partial) => Err(SdfError::NoSingleAppearanceSchedule { partial }),
    }
}

#[derive(Debug, Clone)]
struct PortReader {
    target: Endpoint,
    cons: u64,
    token_bytes: u64,
    chain: Vec<StreamAdapter>,
    per_iter: u64,
}

#[derive(Debug, Clone)]
struct PortWriter {
    source: Endpoint,
    prod: u64,
    token_bytes: u64,
    chain: Vec<StreamAdapter>,
    per_iter: u64,
}

#[derive(Debug, Clone)]
struct Term {
    count: u64,
    body: Body,
    /// Comes from a hierarchical actor; never fused with its siblings.
    nested: bool,
}

#[derive(Debug, Clone)]
enum Body {
    Actor(String),
    Seq(Vec<Term>),
}

struct Lowered {
    actors: Vec<Actor>,
    edges: Vec<SdfEdge>,
    inputs: BTreeMap<String, Vec<PortReader>>,
    outputs: BTreeMap<String, PortWriter>,
    terms: std::result::Result<Vec<Term>, String>,
    /// Edges of this level carrying a scoped delay.
    scoped: Vec<usize>,
}

struct ChildPlan {
    lowered: Lowered,
    iterations: u64,
    input_adapter: BTreeMap<String, StreamAdapter>,
    output_adapter: BTreeMap<String, StreamAdapter>,
}

fn resolve_subgraph<'a>(
    actor: &'a Actor,
    library: &'a [SdfGraph],
    stack: &mut Vec<String>,
) -> Result<&'a SdfGraph> {
    if let Some(sub) = &actor.subgraph {
        return Ok(sub);
    }
    let name = actor.subgraph_ref.as_deref().unwrap_or_default();
    if stack.iter().any(|s| s == name) {
        return Err(SdfError::RecursiveHierarchy(format!(
            "{} -> {name}",
            stack.join(" -> ")
        )));
    }
    library
        .iter()
        .find(|g| g.name == name)
        .ok_or_else(|| SdfError::Semantic(format!("unknown subgraph `{name}`")))
}

fn plan_child(
    graph: &SdfGraph,
    actor: &Actor,
    prefix: &str,
    library: &[SdfGraph],
    stack: &mut Vec<String>,
) -> Result<ChildPlan> {
    let sub = resolve_subgraph(actor, library, stack)?;
    let pushed = actor.subgraph_ref.is_some();
    if pushed {
        stack.push(sub.name.clone());
    }
    let lowered = lower(sub, &format!("{prefix}{}/", actor.id), library, stack, false);
    if pushed {
        stack.pop();
    }
    let mut lowered = lowered?;

    let mismatch = |detail: String| SdfError::InterfaceRateMismatch {
        actor: format!("{prefix}{}", actor.id),
        detail,
    };

    // Parent-side port rates.
    let mut in_rates: BTreeMap<&str, u64> = BTreeMap::new();
    let mut out_rates: BTreeMap<&str, u64> = BTreeMap::new();
    for e in &graph.edges {
        if e.dst.actor == actor.id {
            if let Some(old) = in_rates.insert(&e.dst.port, e.cons) {
                if old != e.cons {
                    return Err(mismatch(format!("port {} read with rates {old} and {}", e.dst.port, e.cons)));
                }
            }
        }
        if e.src.actor == actor.id {
            if let Some(old) = out_rates.insert(&e.src.port, e.prod) {
                if old != e.prod {
                    return Err(mismatch(format!("port {} written with rates {old} and {}", e.src.port, e.prod)));
                }
            }
        }
    }

    let mut ports: Vec<(String, u64, u64, bool)> = Vec::new(); // (port, parent rate, inner traffic, is_input)
    for (&port, &rate) in &in_rates {
        let readers = lowered
            .inputs
            .get(port)
            .ok_or_else(|| SdfError::Semantic(format!("{}{} has no input port `{port}`", prefix, actor.id)))?;
        let traffic = readers[0].per_iter;
        if readers.iter().any(|r| r.per_iter != traffic) {
            return Err(mismatch(format!("readers of port {port} disagree on traffic")));
        }
        ports.push((port.to_string(), rate, traffic, true));
    }
    for port in lowered.inputs.keys() {
        if !in_rates.contains_key(port.as_str()) {
            return Err(SdfError::Semantic(format!(
                "input port `{port}` of {}{} is not connected",
                prefix, actor.id
            )));
        }
    }
    for (&port, &rate) in &out_rates {
        let writer = lowered
            .outputs
            .get(port)
            .ok_or_else(|| SdfError::Semantic(format!("{}{} has no output port `{port}`", prefix, actor.id)))?;
        ports.push((port.to_string(), rate, writer.per_iter, false));
    }

    let mut iterations = 1u64;
    for &(ref port, rate, traffic, _) in &ports {
        if rate >= traffic {
            if rate % traffic != 0 {
                return Err(mismatch(format!(
                    "port {port}: rate {rate} is not a multiple of per-iteration traffic {traffic}"
                )));
            }
            iterations = iterations.max(rate / traffic);
        }
    }
    // Delays restart once per parent firing, not once per inner iteration.
    for &i in &lowered.scoped {
        for ad in &mut lowered.edges[i].adapters {
            if let StreamAdapter::Delay { period: Some(p), .. } = ad {
                *p *= iterations;
            }
        }
    }
    let mut input_adapter = BTreeMap::new();
    let mut output_adapter = BTreeMap::new();
    for (port, rate, traffic, is_input) in ports {
        let total = iterations * traffic;
        if total == rate {
            continue;
        }
        if total < rate || total % rate != 0 {
            return Err(mismatch(format!(
                "port {port}: rate {rate} incompatible with {iterations} iteration(s) of {traffic} tokens"
            )));
        }
        if is_input {
            input_adapter.insert(port, StreamAdapter::Broadcast { window: rate, repeat: total / rate });
        } else {
            output_adapter.insert(port, StreamAdapter::KeepLast { window: total, keep: rate });
        }
    }
    Ok(ChildPlan {
        lowered,
        iterations,
        input_adapter,
        output_adapter,
    })
}

struct Side {
    endpoint: Endpoint,
    rate: u64,
    token_bytes: u64,
    chain: Vec<StreamAdapter>,
}

fn lower(
    graph: &SdfGraph,
    prefix: &str,
    library: &[SdfGraph],
    stack: &mut Vec<String>,
    top: bool,
) -> Result<Lowered> {
    let q = repetition_vector(graph)?;

    let mut plans: BTreeMap<String, ChildPlan> = BTreeMap::new();
    let mut actors = Vec::new();
    let mut edges = Vec::new();
    let mut scoped = Vec::new();
    for a in &graph.actors {
        if a.is_hierarchical() {
            let mut plan = plan_child(graph, a, prefix, library, stack)?;
            actors.append(&mut plan.lowered.actors);
            edges.append(&mut plan.lowered.edges);
            plans.insert(a.id.clone(), plan);
        } else {
            let mut flat = a.clone();
            flat.id = format!("{prefix}{}", a.id);
            actors.push(flat);
        }
    }

    let mut inputs: BTreeMap<String, Vec<PortReader>> = BTreeMap::new();
    let mut outputs: BTreeMap<String, PortWriter> = BTreeMap::new();
    let bytes_mismatch = |e: &SdfEdge, inner: u64| {
        SdfError::Semantic(format!(
            "edge {} carries {}-byte tokens but the interface carries {inner}",
            e.label(),
            e.token_bytes
        ))
    };

    for e in &graph.edges {
        let sources: Vec<Side> = if e.src.is_interface() {
            Vec::new()
        } else if let Some(plan) = plans.get(&e.src.actor) {
            let w = &plan.lowered.outputs[&e.src.port];
            if w.token_bytes != e.token_bytes {
                return Err(bytes_mismatch(e, w.token_bytes));
            }
            let mut chain = w.chain.clone();
            chain.extend(plan.output_adapter.get(&e.src.port).copied());
            vec![Side {
                endpoint: w.source.clone(),
                rate: w.prod,
                token_bytes: e.token_bytes,
                chain,
            }]
        } else {
            vec![Side {
                endpoint: Endpoint::new(format!("{prefix}{}", e.src.actor), e.src.port.clone()),
                rate: e.prod,
                token_bytes: e.token_bytes,
                chain: Vec::new(),
            }]
        };
        let dests: Vec<Side> = if e.dst.is_interface() {
            Vec::new()
        } else if let Some(plan) = plans.get(&e.dst.actor) {
            let mut out = Vec::new();
            for r in &plan.lowered.inputs[&e.dst.port] {
                if r.token_bytes != e.token_bytes {
                    return Err(bytes_mismatch(e, r.token_bytes));
                }
                let mut chain: Vec<StreamAdapter> =
                    plan.input_adapter.get(&e.dst.port).copied().into_iter().collect();
                chain.extend(r.chain.iter().copied());
                out.push(Side {
                    endpoint: r.target.clone(),
                    rate: r.cons,
                    token_bytes: e.token_bytes,
                    chain,
                });
            }
            out
        } else {
            vec![Side {
                endpoint: Endpoint::new(format!("{prefix}{}", e.dst.actor), e.dst.port.clone()),
                rate: e.cons,
                token_bytes: e.token_bytes,
                chain: Vec::new(),
            }]
        };

        if e.src.is_interface() {
            let per_iter = e.cons * q[&e.dst.actor];
            let readers = inputs.entry(e.src.port.clone()).or_default();
            for d in dests {
                readers.push(PortReader {
                    target: d.endpoint,
                    cons: d.rate,
                    token_bytes: d.token_bytes,
                    chain: d.chain,
                    per_iter,
                });
            }
            continue;
        }
        if e.dst.is_interface() {
            let s = sources.into_iter().next().expect("one source");
            let writer = PortWriter {
                source: s.endpoint,
                prod: s.rate,
                token_bytes: s.token_bytes,
                chain: s.chain,
                per_iter: e.prod * q[&e.src.actor],
            };
            if outputs.insert(e.dst.port.clone(), writer).is_some() {
                return Err(SdfError::Semantic(format!(
                    "output port `{}` has more than one writer",
                    e.dst.port
                )));
            }
            continue;
        }

        let delay = (e.delay > 0).then(|| StreamAdapter::Delay {
            tokens: e.delay,
            period: (!top).then(|| e.cons * q[&e.dst.actor]),
        });
        for s in &sources {
            for d in &dests {
                let mut edge = SdfEdge::new(
                    s.endpoint.clone(),
                    d.endpoint.clone(),
                    s.rate,
                    d.rate,
                    e.token_bytes,
                );
                if top && s.chain.is_empty() && d.chain.is_empty() {
                    edge.delay = e.delay;
                } else {
                    edge.adapters.extend(s.chain.iter().copied());
                    edge.adapters.extend(delay);
                    edge.adapters.extend(d.chain.iter().copied());
                    if !top && delay.is_some() {
                        scoped.push(edges.len());
                    }
                }
                edges.push(edge);
            }
        }
    }

    let terms = level_terms(graph, &q, prefix, &plans);
    Ok(Lowered {
        actors,
        edges,
        inputs,
        outputs,
        terms,
        scoped,
    })
}

/// Topological order of one level (ties by id), ignoring edges whose
/// consumption in an iteration is served entirely by initial tokens.
fn level_terms(
    graph: &SdfGraph,
    q: &BTreeMap<String, u64>,
    prefix: &str,
    plans: &BTreeMap<String, ChildPlan>,
) -> std::result::Result<Vec<Term>, String> {
    let mut indegree: BTreeMap<&str, usize> = graph.actors.iter().map(|a| (a.id.as_str(), 0)).collect();
    let mut succ: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (_, e) in graph.internal_edges() {
        if e.src.actor == e.dst.actor || e.delay >= e.cons * q[&e.dst.actor] {
            continue;
        }
        *indegree.get_mut(e.dst.actor.as_str()).unwrap() += 1;
        succ.entry(&e.src.actor).or_default().push(&e.dst.actor);
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&a, _)| a).collect();
    let mut terms = Vec::new();
    while let Some(id) = ready.pop_first() {
        let term = match plans.get(id) {
            Some(plan) => match &plan.lowered.terms {
                Ok(inner) if inner.len() == 1 => Term {
                    count: q[id] * plan.iterations * inner[0].count,
                    body: inner[0].body.clone(),
                    nested: true,
                },
                Ok(inner) => Term {
                    count: q[id] * plan.iterations,
                    body: Body::Seq(inner.clone()),
                    nested: true,
                },
                Err(partial) => return Err(format!("{}{partial}", render(&terms))),
            },
            None => Term {
                count: q[id],
                body: Body::Actor(format!("{prefix}{id}")),
                nested: false,
            },
        };
        terms.push(term);
        for &next in succ.get(id).map(Vec::as_slice).unwrap_or_default() {
            let d = indegree.get_mut(next).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.insert(next);
            }
        }
    }
    if terms.len() != graph.actors.len() {
        return Err(render(&terms));
    }
    Ok(fuse(terms))
}

fn fuse(terms: Vec<Term>) -> Vec<Term> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < terms.len() {
        let mut g = terms[i].count;
        let mut j = i + 1;
        while j < terms.len()
            && !terms[i].nested
            && !terms[j].nested
            && g.gcd(&terms[j].count) > 1
        {
            g = g.gcd(&terms[j].count);
            j += 1;
        }
        if j - i >= 2 {
            let inner = terms[i..j]
                .iter()
                .map(|t| Term {
                    count: t.count / g,
                    body: t.body.clone(),
                    nested: false,
                })
                .collect();
            out.push(Term {
                count: g,
                body: Body::Seq(fuse(inner)),
                nested: false,
            });
            i = j;
        } else {
            out.push(terms[i].clone());
            i += 1;
        }
    }
    out
}

fn render(terms: &[Term]) -> String {
    let mut s = String::new();
    for t in terms {
        match (&t.body, t.count) {
            (Body::Actor(name), 1) => s.push_str(&format!("({name})")),
            (Body::Actor(name), n) => s.push_str(&format!("({n}{name})")),
            (Body::Seq(inner), 1) => s.push_str(&render(inner)),
            (Body::Seq(inner), n) => s.push_str(&format!("({n}{})", render(inner))),
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(src: &str, dst: &str, prod: u64, cons: u64) -> SdfEdge {
        let ep = |t: &str, default: &str| match t.strip_prefix('@') {
            Some(p) => Endpoint::interface(p),
            None => Endpoint::new(t, default),
        };
        SdfEdge::new(ep(src, "out"), ep(dst, "in"), prod, cons, 8)
    }

    #[test]
    fn flat_graph_is_unchanged() {
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("A"));
        g.actors.push(Actor::atomic("B"));
        g.edges.push(edge("A", "B", 2, 1).with_delay(1));
        assert_eq!(flatten(&g).unwrap(), g);
    }

    #[test]
    fn child_count_multiplies_with_parent() {
        let mut sub = SdfGraph::new("sub");
        sub.actors.push(Actor::atomic("C"));
        sub.edges.push(edge("@in", "C", 1, 1));
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("X"));
        g.actors.push(Actor::hierarchical("H", sub));
        g.edges.push(SdfEdge::new(Endpoint::new("X", "out"), Endpoint::new("H", "in"), 6, 3, 8));
        let flat = flatten(&g).unwrap();
        let q = repetition_vector(&flat).unwrap();
        assert_eq!(q["H/C"], 6);
        assert_eq!(q["X"], 1);
        assert_eq!(schedule_expression(&g).unwrap(), "(X)(6H/C)");
    }

    #[test]
    fn broadcast_and_keep_last_interfaces() {
        // V needs 4 tokens per iteration but the port delivers 2: they are
        // broadcast twice.
        let mut mid = SdfGraph::new("mid");
        mid.actors.push(Actor::atomic("V"));
        mid.edges.push(edge("@in", "V", 1, 4));
        mid.edges.push(edge("V", "@out", 1, 1));
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("P"));
        g.actors.push(Actor::hierarchical("M", mid));
        g.actors.push(Actor::atomic("R"));
        g.edges.push(SdfEdge::new(Endpoint::new("P", "out"), Endpoint::new("M", "in"), 2, 2, 8));
        g.edges.push(SdfEdge::new(Endpoint::new("M", "out"), Endpoint::new("R", "in"), 1, 1, 8));
        let flat = flatten(&g).unwrap();
        let e = flat.edges.iter().find(|e| e.dst.actor == "M/V").unwrap();
        assert_eq!(e.adapters, vec![StreamAdapter::Broadcast { window: 2, repeat: 2 }]);
        let q = repetition_vector(&flat).unwrap();
        assert_eq!((q["P"], q["M/V"], q["R"]), (1, 1, 1));

        // W runs twice per parent firing; only its last output leaves.
        let mut acc = SdfGraph::new("acc");
        acc.actors.push(Actor::atomic("W"));
        acc.edges.push(edge("@in", "W", 1, 1));
        acc.edges.push(edge("W", "@out", 1, 1));
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("P"));
        g.actors.push(Actor::hierarchical("M", acc));
        g.actors.push(Actor::atomic("R"));
        g.edges.push(SdfEdge::new(Endpoint::new("P", "out"), Endpoint::new("M", "in"), 2, 2, 8));
        g.edges.push(SdfEdge::new(Endpoint::new("M", "out"), Endpoint::new("R", "in"), 1, 1, 8));
        let flat = flatten(&g).unwrap();
        let e = flat.edges.iter().find(|e| e.src.actor == "M/W").unwrap();
        assert_eq!(e.adapters, vec![StreamAdapter::KeepLast { window: 2, keep: 1 }]);
        let q = repetition_vector(&flat).unwrap();
        assert_eq!((q["P"], q["M/W"], q["R"]), (1, 2, 1));
    }

    #[test]
    fn interface_mismatch_detected() {
        let mut sub = SdfGraph::new("sub");
        sub.actors.push(Actor::atomic("C"));
        sub.edges.push(edge("@in", "C", 1, 2));
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("X"));
        g.actors.push(Actor::hierarchical("H", sub));
        g.edges.push(SdfEdge::new(Endpoint::new("X", "out"), Endpoint::new("H", "in"), 3, 3, 8));
        assert!(matches!(flatten(&g), Err(SdfError::InterfaceRateMismatch { .. })));
    }

    #[test]
    fn recursive_reference_detected() {
        let mut lib = SdfGraph::new("loop");
        let mut inner = Actor::atomic("Again");
        inner.kind = crate::sdfgraph::ActorKind::Hierarchical;
        inner.subgraph_ref = Some("loop".into());
        lib.actors.push(inner);
        let mut g = SdfGraph::new("g");
        let mut top = Actor::atomic("Top");
        top.kind = crate::sdfgraph::ActorKind::Hierarchical;
        top.subgraph_ref = Some("loop".into());
        g.actors.push(top);
        g.library.push(lib);
        assert!(matches!(flatten(&g), Err(SdfError::RecursiveHierarchy(_))));
    }

    #[test]
    fn expressions_for_small_graphs() {
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("A"));
        g.actors.push(Actor::atomic("B"));
        g.edges.push(edge("A", "B", 2, 1));
        assert_eq!(schedule_expression(&g).unwrap(), "(A)(2B)");

        let mut c = SdfGraph::new("c");
        for id in ["A", "B", "C"] {
            c.actors.push(Actor::atomic(id));
        }
        c.edges.push(edge("A", "B", 1, 1));
        c.edges.push(edge("B", "C", 1, 1));
        assert_eq!(schedule_expression(&c).unwrap(), "(A)(B)(C)");
    }

    #[test]
    fn adjacent_equal_counts_fuse() {
        let mut g = SdfGraph::new("g");
        for id in ["A", "B", "C"] {
            g.actors.push(Actor::atomic(id));
        }
        g.edges.push(edge("A", "B", 2, 1));
        g.edges.push(edge("B", "C", 1, 1));
        assert_eq!(schedule_expression(&g).unwrap(), "(A)(2(B)(C))");
    }

    #[test]
    fn undelayed_cycle_has_no_sas() {
        let mut g = SdfGraph::new("g");
        for id in ["A", "B", "C"] {
            g.actors.push(Actor::atomic(id));
        }
        g.edges.push(edge("A", "B", 1, 1));
        g.edges.push(edge("B", "C", 1, 1));
        g.edges.push(edge("C", "B", 1, 1));
        match schedule_expression(&g) {
            Err(SdfError::NoSingleAppearanceSchedule { partial }) => assert_eq!(partial, "(A)"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scoped_delay_spans_inner_iterations() {
        // S runs 3 times per H firing; its accumulator restarts per H firing.
        let mut sub = SdfGraph::new("sub");
        sub.actors.push(Actor::atomic("S"));
        sub.edges.push(edge("@in", "S", 1, 1));
        sub.edges.push(SdfEdge::new(Endpoint::new("S", "acc"), Endpoint::new("S", "prev"), 1, 1, 8).with_delay(1));
        let mut g = SdfGraph::new("g");
        g.actors.push(Actor::atomic("X"));
        g.actors.push(Actor::hierarchical("H", sub));
        g.edges.push(SdfEdge::new(Endpoint::new("X", "out"), Endpoint::new("H", "in"), 3, 3, 8));
        let flat = flatten(&g).unwrap();
        let e = flat.edges.iter().find(|e| e.src.port == "acc").unwrap();
        assert_eq!(e.adapters, vec![StreamAdapter::Delay { tokens: 1, period: Some(3) }]);
    }
}
