use super::RachConfig;
use crate::sdfgraph::{Actor, Endpoint, SdfEdge, SdfGraph};

fn ep(spec: &str) -> Endpoint {
    match spec.split_once('.') {
        Some((a, p)) => Endpoint::new(a, p),
        None => Endpoint::interface(spec.trim_start_matches('@')),
    }
}

fn edge(src: &str, dst: &str, prod: usize, cons: usize, token_bytes: usize) -> SdfEdge {
    SdfEdge::new(ep(src), ep(dst), prod as u64, cons as u64, token_bytes as u64)
}

/// Hierarchical detector graph. One graph iteration processes one slot:
/// `A*R` preprocessing firings feed a correlation block that runs once per
/// antenna, once per root inside it and once per repetition at the bottom,
/// then one noise floor per root and a single peak search.
pub fn rach_graph(cfg: &RachConfig) -> SdfGraph {
    let (a, z, r, n) = (cfg.antennas, cfg.roots, cfg.repetitions, cfg.n_zc);
    let bins = 16 * n;
    let energies = 8 * n;

    let mut root = SdfGraph::new("root_corr");
    root.actors.push(Actor::atomic("InitPower").with_kernel("init_power"));
    root.actors.push(Actor::atomic("SingleZCProc").with_kernel("single_zc_proc"));
    root.actors.push(Actor::atomic("PowAcc").with_kernel("pow_acc_rep"));
    root.edges.push(edge("@in", "SingleZCProc.in", 1, 1, bins));
    root.edges.push(edge("SingleZCProc.out", "PowAcc.in", 1, 1, energies));
    root.edges.push(edge("InitPower.out", "PowAcc.init", r, 1, energies));
    root.edges.push(edge("PowAcc.acc_out", "PowAcc.acc_in", 1, 1, energies).with_delay(1));
    root.edges.push(edge("PowAcc.out", "@out", 1, 1, energies));

    let mut antenna = SdfGraph::new("antenna_corr");
    antenna.actors.push(Actor::hierarchical("RootCorr", root));
    antenna.actors.push(Actor::atomic("PowAcc").with_kernel("pow_acc_antenna"));
    antenna.edges.push(edge("@in", "RootCorr.in", r, r, bins));
    antenna.edges.push(edge("RootCorr.out", "PowAcc.in", 1, z, energies));
    antenna.edges.push(edge("@acc_in", "PowAcc.acc_in", z, z, energies));
    antenna.edges.push(edge("PowAcc.acc_out", "@acc_out", z, z, energies));
    antenna.edges.push(edge("PowAcc.out", "@out", z, z, energies));

    let mut corr = SdfGraph::new("corr");
    corr.actors.push(Actor::hierarchical("AntennaCorr", antenna));
    corr.edges.push(edge("@in", "AntennaCorr.in", r, r, bins));
    corr.edges.push(edge("AntennaCorr.out", "@out", z, z, energies));
    corr.edges
        .push(edge("AntennaCorr.acc_out", "AntennaCorr.acc_in", z, z, energies).with_delay(z as u64));

    let mut g = SdfGraph::new("rachpd");
    g.actors.push(Actor::atomic("Proc").with_kernel("rach_preprocess"));
    g.actors.push(Actor::hierarchical("Corr", corr));
    g.actors.push(Actor::atomic("NoiseFloorThreshold").with_kernel("noise_floor_threshold"));
    g.actors.push(Actor::atomic("PeakSearch").with_kernel("peak_search"));
    g.edges.push(edge("Proc.out", "Corr.in", 1, a * r, bins));
    g.edges.push(edge("Corr.out", "NoiseFloorThreshold.in", z, 1, energies));
    g.edges.push(edge("NoiseFloorThreshold.out", "PeakSearch.in", 1, z, energies + 24));
    g
}
