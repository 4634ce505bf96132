use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdfmap::rachpd::{rach_graph, synth_slot, Complex64, RachConfig, User};
use sdfmap::sdfgraph::SdfGraph;

use crate::scenario::read;
use crate::{domain, usage, CliError};

/// `desk`, `115km` or a JSON config file.
pub fn config(spec: &str) -> Result<RachConfig, CliError> {
    let cfg = match spec {
        "desk" => RachConfig::desk(),
        "115km" => RachConfig::cell_115km(),
        path => serde_json::from_str(&read(Path::new(path))?).map_err(|e| usage(format!("{path}: {e}")))?,
    };
    cfg.validate().map_err(|e| usage(format!("{spec}: {e}")))?;
    Ok(cfg)
}

/// The bundled configuration whose detector graph is `graph`, if any.
pub fn config_for_graph(graph: &SdfGraph) -> Option<RachConfig> {
    [RachConfig::desk(), RachConfig::cell_115km()]
        .into_iter()
        .find(|c| &rach_graph(c) == graph)
}

/// `root:delay[:amplitude]`, delay in samples.
pub fn parse_user(s: &str) -> Result<User, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return Err(format!("{s}: expected root:delay[:amplitude]"));
    }
    let root = parts[0].parse().map_err(|e| format!("{s}: root: {e}"))?;
    let delay = parts[1].parse().map_err(|e| format!("{s}: delay: {e}"))?;
    let amplitude = match parts.get(2) {
        Some(a) => a.parse().map_err(|e| format!("{s}: amplitude: {e}"))?,
        None => 1.0,
    };
    Ok(User { root, delay, amplitude })
}

/// Synthesize one slot. `snr_db` is the per-sample ratio of the preamble
/// power on the air to the noise power; `None` means noiseless.
pub fn synthesize(
    cfg: &RachConfig,
    users: &[User],
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Vec<Vec<Complex64>>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = match snr_db {
        None => 0.0,
        Some(_) if users.is_empty() => 1.0,
        Some(snr) => {
            let clean = synth_slot(cfg, users, 0.0, &mut rng.clone()).map_err(|e| domain(e.to_string()))?;
            let active = cfg.cp_samples + cfg.repetitions * cfg.seq_samples;
            let power = clean[0].iter().map(|v| v.norm_sqr()).sum::<f64>() / active as f64;
            (power / 10f64.powf(snr / 10.0)).sqrt()
        }
    };
    synth_slot(cfg, users, sigma, &mut rng).map_err(|e| domain(e.to_string()))
}
