//! Target architectures: operators with memory regions, connected by
//! DMA-style media whose transfer cost is affine in the byte count.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ArchError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("syntax error at {line}:{column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error: {0}")]
    Semantic(String),
}

pub type Result<T> = std::result::Result<T, ArchError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryLevel {
    Local,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryRegion {
    pub name: String,
    pub capacity_bytes: u64,
    pub level: MemoryLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Operator {
    pub id: String,
    pub clock_hz: u64,
    #[serde(default)]
    pub memories: Vec<MemoryRegion>,
}

impl Operator {
    pub fn local_memory(&self) -> Option<&MemoryRegion> {
        self.memories.iter().find(|m| m.level == MemoryLevel::Local)
    }

    pub fn external_memory(&self) -> Option<&MemoryRegion> {
        self.memories.iter().find(|m| m.level == MemoryLevel::External)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Medium {
    pub id: String,
    pub latency_cycles: f64,
    pub bytes_per_cycle: f64,
    #[serde(default)]
    pub blocking: bool,
    /// Serialise transfers on this medium (one at a time).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exclusive: bool,
    pub endpoints: Vec<String>,
}

impl Medium {
    pub fn connects(&self, a: &str, b: &str) -> bool {
        self.endpoints.iter().any(|e| e == a) && self.endpoints.iter().any(|e| e == b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchGraph {
    pub name: String,
    pub operators: Vec<Operator>,
    #[serde(default)]
    pub media: Vec<Medium>,
}

/// Cycles to move `n_bytes` over `medium`.
pub fn transfer_cycles(medium: &Medium, n_bytes: u64) -> f64 {
    medium.latency_cycles + n_bytes as f64 / medium.bytes_per_cycle
}

impl ArchGraph {
    pub fn operator(&self, id: &str) -> Option<&Operator> {
        self.operators.iter().find(|o| o.id == id)
    }

    pub fn operator_index(&self, id: &str) -> Option<usize> {
        self.operators.iter().position(|o| o.id == id)
    }

    /// First medium (in declaration order) joining two distinct operators.
    pub fn medium_between(&self, a: &str, b: &str) -> Option<&Medium> {
        self.media.iter().find(|m| m.connects(a, b))
    }

    pub fn medium_index_between(&self, a: &str, b: &str) -> Option<usize> {
        self.media.iter().position(|m| m.connects(a, b))
    }

    pub fn is_fully_connected(&self) -> bool {
        self.operators.iter().enumerate().all(|(i, a)| {
            self.operators[i + 1..]
                .iter()
                .all(|b| self.medium_between(&a.id, &b.id).is_some())
        })
    }

    pub fn validate(&self) -> Result<()> {
        let sem = |m: String| Err(ArchError::Semantic(m));
        if self.operators.is_empty() {
            return sem("architecture has no operators".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for o in &self.operators {
            if !seen.insert(o.id.as_str()) {
                return sem(format!("duplicate operator `{}`", o.id));
            }
            if o.clock_hz == 0 {
                return sem(format!("operator `{}` has zero clock", o.id));
            }
            for m in &o.memories {
                if m.capacity_bytes == 0 {
                    return sem(format!("memory `{}` of `{}` has zero capacity", m.name, o.id));
                }
            }
        }
        let mut media = std::collections::BTreeSet::new();
        for m in &self.media {
            if !media.insert(m.id.as_str()) {
                return sem(format!("duplicate medium `{}`", m.id));
            }
            if !(m.bytes_per_cycle > 0.0 && m.bytes_per_cycle.is_finite()) {
                return sem(format!("medium `{}` needs a positive rate", m.id));
            }
            if !(m.latency_cycles >= 0.0 && m.latency_cycles.is_finite()) {
                return sem(format!("medium `{}` has a negative latency", m.id));
            }
            for e in &m.endpoints {
                if !seen.contains(e.as_str()) {
                    return sem(format!("medium `{}` references unknown operator `{e}`", m.id));
                }
            }
        }
        Ok(())
    }
}

pub const PRESET_NAMES: [&str; 6] = ["mono", "dual", "tri_sym", "tri_asym", "quad", "tri_measured"];

const CLOCK_HZ: u64 = 1_000_000_000;
const MIB: u64 = 1 << 20;
const EXTERNAL_BYTES: u64 = 1 << 31;

fn build(name: &str, locals: &[u64], external: bool, latency: f64, rate: f64) -> ArchGraph {
    let operators: Vec<Operator> = locals
        .iter()
        .enumerate()
        .map(|(i, &cap)| {
            let mut memories = vec![MemoryRegion {
                name: "l2".into(),
                capacity_bytes: cap,
                level: MemoryLevel::Local,
            }];
            if external {
                memories.push(MemoryRegion {
                    name: "ddr2".into(),
                    capacity_bytes: EXTERNAL_BYTES,
                    level: MemoryLevel::External,
                });
            }
            Operator {
                id: format!("core{i}"),
                clock_hz: CLOCK_HZ,
                memories,
            }
        })
        .collect();
    let media = if operators.len() > 1 {
        vec![Medium {
            id: "edma".into(),
            latency_cycles: latency,
            bytes_per_cycle: rate,
            blocking: false,
            exclusive: false,
            endpoints: operators.iter().map(|o| o.id.clone()).collect(),
        }]
    } else {
        Vec::new()
    };
    ArchGraph {
        name: name.into(),
        operators,
        media,
    }
}

/// Named architecture presets. `tri` is an alias of `tri_sym`.
pub fn preset(name: &str) -> Result<ArchGraph> {
    let (lat, rate) = (135.0, 3.375);
    Ok(match name {
        "mono" => build(name, &[MIB], false, lat, rate),
        "dual" => build(name, &[MIB; 2], false, lat, rate),
        "tri_sym" | "tri" => build("tri_sym", &[MIB; 3], true, lat, rate),
        "tri_asym" => build(name, &[3 * MIB / 2, MIB, MIB / 2], true, lat, rate),
        "quad" => build(name, &[MIB; 4], true, lat, rate),
        "tri_measured" => build(name, &[MIB; 3], true, 2700.0, 1.6),
        other => return Err(ArchError::UnknownPreset(other.into())),
    })
}

pub fn parse_arch(text: &str) -> Result<ArchGraph> {
    let arch: ArchGraph = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => ArchError::Semantic(e.to_string()),
        _ => ArchError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    arch.validate()?;
    Ok(arch)
}

pub fn serialize_arch(arch: &ArchGraph) -> String {
    let mut s = serde_json::to_string_pretty(arch).expect("architecture serialises");
    s.push('\n');
    s
}
