use std::collections::{BTreeMap, VecDeque};

use num_integer::Integer;
use num_rational::Ratio;

use super::{Result, SdfError, SdfGraph};

type Q = Ratio<u128>;

/// Minimal positive integer firing counts balancing every edge of one graph
/// level: `prod * gain * q(src) == cons * q(dst)`. Interface edges are ignored
/// and each connected component is normalised independently.
pub fn repetition_vector(graph: &SdfGraph) -> Result<BTreeMap<String, u64>> {
    let n = graph.actors.len();
    let index: BTreeMap<&str, usize> = graph
        .actors
        .iter()
        .enumerate()
        .map(|(i, a)| (a.id.as_str(), i))
        .collect();

    // (neighbour, ratio q(neighbour)/q(self), edge index)
    let mut adj: Vec<Vec<(usize, Q, usize)>> = vec![Vec::new(); n];
    for (ei, e) in graph.internal_edges() {
        let s = *index
            .get(e.src.actor.as_str())
            .ok_or_else(|| SdfError::Semantic(format!("unknown actor `{}`", e.src.actor)))?;
        let d = *index
            .get(e.dst.actor.as_str())
            .ok_or_else(|| SdfError::Semantic(format!("unknown actor `{}`", e.dst.actor)))?;
        let (gn, gd) = e
            .adapters
            .iter()
            .fold((1u128, 1u128), |(n, d), a| {
                let (an, ad) = a.gain();
                (n * an as u128, d * ad as u128)
            });
        // q(d) = q(s) * prod * gn / (cons * gd)
        let ratio = Q::new(e.prod as u128 * gn, e.cons as u128 * gd);
        adj[s].push((d, ratio, ei));
        adj[d].push((s, ratio.recip(), ei));
    }

    let mut q: Vec<Option<Q>> = vec![None; n];
    let mut result = vec![0u64; n];
    for root in 0..n {
        if q[root].is_some() {
            continue;
        }
        let mut component = vec![root];
        q[root] = Some(Q::from_integer(1));
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            let qu = q[u].expect("visited");
            for &(v, ratio, ei) in &adj[u] {
                let want = qu * ratio;
                match q[v] {
                    None => {
                        q[v] = Some(want);
                        component.push(v);
                        queue.push_back(v);
                    }
                    Some(have) if have != want => {
                        let e = &graph.edges[ei];
                        return Err(SdfError::InconsistentGraph {
                            edge: e.label(),
                            detail: format!(
                                "prod {} / cons {} cannot balance firing ratio {}:{}",
                                e.prod,
                                e.cons,
                                have,
                                want
                            ),
                        });
                    }
                    _ => {}
                }
            }
        }
        let denom_lcm = component
            .iter()
            .fold(1u128, |acc, &i| acc.lcm(q[i].unwrap().denom()));
        let ints: Vec<u128> = component
            .iter()
            .map(|&i| (q[i].unwrap() * denom_lcm).to_integer())
            .collect();
        let g = ints.iter().fold(0u128, |acc, &v| acc.gcd(&v));
        for (&i, v) in component.iter().zip(ints) {
            let v = v / g;
            result[i] = u64::try_from(v).map_err(|_| SdfError::InconsistentGraph {
                edge: graph.actors[i].id.clone(),
                detail: "repetition count overflows".into(),
            })?;
        }
    }

    Ok(graph
        .actors
        .iter()
        .zip(result)
        .map(|(a, c)| (a.id.clone(), c))
        .collect())
}
