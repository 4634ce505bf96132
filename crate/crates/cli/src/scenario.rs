use std::path::{Path, PathBuf};

use serde_json::Value;

use sdfmap::archmodel::{parse_arch, preset, ArchGraph};
use sdfmap::scheduler::{Constraints, TimingTable};
use sdfmap::sdfgraph::{parse_graph, SdfGraph};

use crate::{usage, CliError};

/// Inputs of one mapping experiment. Paths in the scenario file are
/// relative to the file itself.
pub struct Scenario {
    pub graph: SdfGraph,
    pub arch: Option<String>,
    pub timing: TimingTable,
    pub constraints: Constraints,
    pub deadline_cycles: Option<f64>,
    pub presets: Vec<String>,
    pub output_dir: PathBuf,
    base_dir: PathBuf,
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

pub fn load_graph(path: &Path) -> Result<SdfGraph, CliError> {
    parse_graph(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// A preset name or a path to an architecture file.
pub fn load_arch(spec: &str, base: &Path) -> Result<ArchGraph, CliError> {
    if let Ok(a) = preset(spec) {
        return Ok(a);
    }
    let p = base.join(spec);
    if !p.exists() {
        return Err(usage(format!("{spec}: neither a preset nor an architecture file")));
    }
    parse_arch(&read(&p)?).map_err(|e| usage(format!("{}: {e}", p.display())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario, CliError> {
        let v: Value = serde_json::from_str(&read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let field = |k: &str| v.get(k).and_then(Value::as_str).map(|s| base.join(s));
        let graph_path = field("graph").ok_or_else(|| usage(format!("{}: missing \"graph\"", path.display())))?;
        let graph = load_graph(&graph_path)?;
        let timing_path = field("timing").ok_or_else(|| usage(format!("{}: missing \"timing\"", path.display())))?;
        let mut timing =
            TimingTable::from_csv(&read(&timing_path)?).map_err(|e| usage(format!("{}: {e}", timing_path.display())))?;
        if let Some(k) = v.get("timing_inflation").and_then(Value::as_f64) {
            timing = timing.inflated(k);
        }
        let constraints = match field("constraints") {
            Some(p) => Constraints::from_json(&read(&p)?).map_err(|e| usage(format!("{}: {e}", p.display())))?,
            None => Constraints::none(),
        };
        let presets = v
            .get("presets")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(String::from).collect())
            .unwrap_or_default();
        Ok(Scenario {
            graph,
            arch: v.get("arch").and_then(Value::as_str).map(String::from),
            timing,
            constraints,
            deadline_cycles: v.get("deadline_cycles").and_then(Value::as_f64),
            presets,
            output_dir: field("output_dir").unwrap_or_else(|| PathBuf::from(".")),
            base_dir: base,
        })
    }

    /// Architecture from the override, else the scenario's own entry.
    pub fn arch(&self, override_: Option<&str>) -> Result<ArchGraph, CliError> {
        match (override_, &self.arch) {
            (Some(spec), _) => load_arch(spec, Path::new(".")),
            (None, Some(spec)) => load_arch(spec, &self.base_dir),
            (None, None) => Err(usage("no architecture: pass --arch or set \"arch\" in the scenario")),
        }
    }
}
