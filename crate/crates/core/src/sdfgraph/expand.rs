use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::{flatten, repetition_vector, Result, SdfError, SdfGraph, StreamAdapter};

/// One firing of an actor within a graph iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Firing {
    pub actor: String,
    pub index: u64,
}

impl std::fmt::Display for Firing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.actor, self.index)
    }
}

/// Data dependency between two firings of the same iteration. `offsets` are
/// the producer-side token offsets (within the producing firing's output on
/// `edge`) that travel along the arc, each once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Arc {
    pub src: usize,
    pub dst: usize,
    pub edge: usize,
    pub offsets: Vec<u64>,
    pub bytes: u64,
}

/// Dependency on the previous graph iteration, created by a graph-level delay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CarriedArc {
    pub src: usize,
    pub dst: usize,
    pub edge: usize,
    pub offsets: Vec<u64>,
    pub bytes: u64,
}

/// Where a consumed token comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TokenRef {
    Arc { arc: usize, pos: usize },
    Carried { carried: usize, pos: usize },
    /// Zero-initialised delay token.
    Initial,
}

/// Tokens consumed by a firing on one input edge, in consumption order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputBinding {
    pub edge: usize,
    pub port: String,
    pub tokens: Vec<TokenRef>,
}

/// Precedence DAG of one graph iteration.
#[derive(Debug, Clone, Serialize)]
pub struct FiringDag {
    #[serde(skip)]
    pub graph: SdfGraph,
    pub repetitions: BTreeMap<String, u64>,
    pub nodes: Vec<Firing>,
    pub arcs: Vec<Arc>,
    pub carried: Vec<CarriedArc>,
    /// Per node, one binding per input edge in edge order.
    pub inputs: Vec<Vec<InputBinding>>,
    #[serde(skip)]
    arcs_in: Vec<Vec<usize>>,
    #[serde(skip)]
    arcs_out: Vec<Vec<usize>>,
    #[serde(skip)]
    index: HashMap<(String, u64), usize>,
}

impl FiringDag {
    pub fn node(&self, actor: &str, index: u64) -> Option<usize> {
        self.index.get(&(actor.to_string(), index)).copied()
    }

    pub fn incoming(&self, node: usize) -> impl Iterator<Item = &Arc> {
        self.arcs_in[node].iter().map(|&a| &self.arcs[a])
    }

    pub fn outgoing(&self, node: usize) -> impl Iterator<Item = &Arc> {
        self.arcs_out[node].iter().map(|&a| &self.arcs[a])
    }

    pub fn incoming_ids(&self, node: usize) -> &[usize] {
        &self.arcs_in[node]
    }

    pub fn outgoing_ids(&self, node: usize) -> &[usize] {
        &self.arcs_out[node]
    }

    pub fn predecessors(&self, node: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.incoming(node).map(|a| a.src).collect();
        set.into_iter().collect()
    }

    pub fn successors(&self, node: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.outgoing(node).map(|a| a.dst).collect();
        set.into_iter().collect()
    }

    /// Kahn order with ties broken by node index.
    pub fn topo_order(&self) -> Result<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        for a in &self.arcs {
            indegree[a.dst] += 1;
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(u) = ready.pop_first() {
            order.push(u);
            for &a in &self.arcs_out[u] {
                let v = self.arcs[a].dst;
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.insert(v);
                }
            }
        }
        if order.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(SdfError::Deadlock(format!(
                "firing {} is part of a dependency cycle",
                self.nodes[stuck]
            )));
        }
        Ok(order)
    }
}

enum Source {
    Token(u64),
    Previous(u64),
    Initial,
}

/// Map consumer-side token `index` back to the producer stream.
fn trace_back(chain: &[StreamAdapter], sizes: &[u64], index: u64) -> Source {
    let mut idx = index;
    let mut previous = false;
    for (i, adapter) in chain.iter().enumerate().rev() {
        // sizes[i] is the stream length entering adapter i.
        idx = match *adapter {
            StreamAdapter::Broadcast { window, repeat } => {
                (idx / (window * repeat)) * window + idx % window
            }
            StreamAdapter::KeepLast { window, keep } => {
                (idx / keep) * window + (window - keep) + idx % keep
            }
            StreamAdapter::Delay {
                tokens,
                period: Some(p),
            } => {
                let l = idx % p;
                if l < tokens {
                    return Source::Initial;
                }
                (idx / p) * p + l - tokens
            }
            StreamAdapter::Delay {
                tokens,
                period: None,
            } => {
                if idx >= tokens {
                    idx - tokens
                } else {
                    let n = sizes[i];
                    if previous || idx + n < tokens {
                        // More than one iteration back.
                        return Source::Initial;
                    }
                    previous = true;
                    idx + n - tokens
                }
            }
        };
    }
    if previous {
        Source::Previous(idx)
    } else {
        Source::Token(idx)
    }
}

/// Expand a graph (flattening it first if needed) into the firing DAG of one
/// iteration. Tokens are matched first-produced-first-consumed.
pub fn expand(graph: &SdfGraph) -> Result<FiringDag> {
    let graph = flatten(graph)?;
    let q = repetition_vector(&graph)?;

    let mut nodes = Vec::new();
    let mut index = HashMap::new();
    let mut first = BTreeMap::new();
    for a in &graph.actors {
        first.insert(a.id.clone(), nodes.len());
        for i in 0..q[&a.id] {
            index.insert((a.id.clone(), i), nodes.len());
            nodes.push(Firing {
                actor: a.id.clone(),
                index: i,
            });
        }
    }

    let mut arcs: Vec<Arc> = Vec::new();
    let mut carried: Vec<CarriedArc> = Vec::new();
    let mut inputs: Vec<Vec<InputBinding>> = vec![Vec::new(); nodes.len()];
    let mut arc_key: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut carried_key: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut arc_pos: HashMap<(usize, u64), usize> = HashMap::new();
    let mut carried_pos: HashMap<(usize, u64), usize> = HashMap::new();

    for (ei, e) in graph.edges.iter().enumerate() {
        let chain = e.chain();
        let mut sizes = Vec::with_capacity(chain.len());
        let mut n = e.prod * q[&e.src.actor];
        for a in &chain {
            sizes.push(n);
            let (gn, gd) = a.gain();
            n = n * gn / gd;
        }
        let src0 = first[&e.src.actor];
        let dst0 = first[&e.dst.actor];
        for f in 0..q[&e.dst.actor] {
            let dst = dst0 + f as usize;
            let mut tokens = Vec::with_capacity(e.cons as usize);
            for t in 0..e.cons {
                let token = match trace_back(&chain, &sizes, f * e.cons + t) {
                    Source::Initial => TokenRef::Initial,
                    Source::Token(j) => {
                        let src = src0 + (j / e.prod) as usize;
                        let off = j % e.prod;
                        let arc = *arc_key.entry((src, dst, ei)).or_insert_with(|| {
                            arcs.push(Arc {
                                src,
                                dst,
                                edge: ei,
                                offsets: Vec::new(),
                                bytes: 0,
                            });
                            arcs.len() - 1
                        });
                        let pos = *arc_pos.entry((arc, off)).or_insert_with(|| {
                            let a = &mut arcs[arc];
                            a.offsets.push(off);
                            a.bytes += e.token_bytes;
                            a.offsets.len() - 1
                        });
                        TokenRef::Arc { arc, pos }
                    }
                    Source::Previous(j) => {
                        let src = src0 + (j / e.prod) as usize;
                        let off = j % e.prod;
                        let c = *carried_key.entry((src, dst, ei)).or_insert_with(|| {
                            carried.push(CarriedArc {
                                src,
                                dst,
                                edge: ei,
                                offsets: Vec::new(),
                                bytes: 0,
                            });
                            carried.len() - 1
                        });
                        let pos = *carried_pos.entry((c, off)).or_insert_with(|| {
                            let a = &mut carried[c];
                            a.offsets.push(off);
                            a.bytes += e.token_bytes;
                            a.offsets.len() - 1
                        });
                        TokenRef::Carried { carried: c, pos }
                    }
                };
                tokens.push(token);
            }
            inputs[dst].push(InputBinding {
                edge: ei,
                port: e.dst.port.clone(),
                tokens,
            });
        }
    }

    let mut arcs_in = vec![Vec::new(); nodes.len()];
    let mut arcs_out = vec![Vec::new(); nodes.len()];
    for (i, a) in arcs.iter().enumerate() {
        arcs_in[a.dst].push(i);
        arcs_out[a.src].push(i);
    }
    let dag = FiringDag {
        graph,
        repetitions: q,
        nodes,
        arcs,
        carried,
        inputs,
        arcs_in,
        arcs_out,
        index,
    };
    dag.topo_order()?;
    Ok(dag)
}
