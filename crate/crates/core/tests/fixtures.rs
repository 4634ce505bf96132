use std::path::PathBuf;

use sdfmap::archmodel::{parse_arch, preset};
use sdfmap::rachpd::{rach_graph, RachConfig};
use sdfmap::scheduler::{list_schedule, Constraints, TimingTable};
use sdfmap::sdfgraph::{expand, parse_graph};

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "fixtures", name].iter().collect();
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn graph_fixtures_match_the_generator() {
    assert_eq!(parse_graph(&fixture("rachpd_115km.json")).unwrap(), rach_graph(&RachConfig::cell_115km()));
    assert_eq!(parse_graph(&fixture("rachpd_desk.json")).unwrap(), rach_graph(&RachConfig::desk()));
}

#[test]
fn architecture_fixtures_match_presets() {
    assert_eq!(parse_arch(&fixture("arch_tri_sym.json")).unwrap(), preset("tri_sym").unwrap());
    assert_eq!(parse_arch(&fixture("arch_tri_measured.json")).unwrap(), preset("tri_measured").unwrap());
}

#[test]
fn timing_table_covers_every_actor() {
    let g = parse_graph(&fixture("rachpd_115km.json")).unwrap();
    let dag = expand(&g).unwrap();
    let t = TimingTable::from_csv(&fixture("rachpd_timing.csv")).unwrap();
    for a in &dag.graph.actors {
        assert!(t.lookup(a, "core0").is_some(), "{}", a.id);
    }
    // The two accumulators are priced separately.
    let rep = dag.graph.actor("Corr/AntennaCorr/RootCorr/PowAcc").unwrap();
    let ant = dag.graph.actor("Corr/AntennaCorr/PowAcc").unwrap();
    assert_ne!(t.lookup(rep, "core0"), t.lookup(ant, "core0"));
}

#[test]
fn pipeline_constraints_split_the_work() {
    let g = parse_graph(&fixture("rachpd_desk.json")).unwrap();
    let dag = expand(&g).unwrap();
    let arch = preset("tri").unwrap();
    let t = TimingTable::from_csv(&fixture("rachpd_timing.csv")).unwrap();
    let c = Constraints::from_json(&fixture("constraints_pipeline.json")).unwrap();
    let s = list_schedule(&dag, &arch, &t, &c).unwrap();
    for (node, &op) in dag.nodes.iter().zip(&s.mapping) {
        if node.actor.starts_with("Corr/") {
            assert_ne!(op, 0, "{node}");
        } else {
            assert_eq!(op, 0, "{node}");
        }
    }
}

#[test]
fn scenario_references_existing_files() {
    let v: serde_json::Value = serde_json::from_str(&fixture("scenario_115km.json")).unwrap();
    for key in ["graph", "timing"] {
        fixture(v[key].as_str().unwrap());
    }
    assert_eq!(v["deadline_cycles"].as_f64(), Some(4e6));
}
