use serde::{Deserialize, Serialize};

use super::{Result, ScheduleError};
use crate::archmodel::ArchGraph;
use crate::sdfgraph::{Actor, SdfGraph};

/// Cycles of one actor (full id or base name) on one operator (id or `*`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub actor: String,
    pub operator: String,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingTable {
    pub records: Vec<TimingRecord>,
    /// Multiplier applied to every lookup.
    pub scale: f64,
}

impl Default for TimingTable {
    fn default() -> Self {
        TimingTable {
            records: Vec::new(),
            scale: 1.0,
        }
    }
}

impl TimingTable {
    pub fn new(records: Vec<TimingRecord>) -> Self {
        TimingTable { records, scale: 1.0 }
    }

    /// CSV with header `actor,operator,cycles`; `#` starts a comment line.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let records = reader
            .deserialize()
            .collect::<std::result::Result<Vec<TimingRecord>, _>>()
            .map_err(|e| ScheduleError::Parse(format!("timing table: {e}")))?;
        Ok(Self::new(records))
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn inflated(&self, factor: f64) -> Self {
        TimingTable {
            records: self.records.clone(),
            scale: self.scale * factor,
        }
    }

    fn find(&self, actor: &str, operator: &str) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.actor == actor && r.operator == operator)
            .map(|r| r.cycles)
    }

    /// Most specific entry wins: full id before base name, operator id
    /// before `*`. Falls back to the actor's own timing map.
    pub fn lookup(&self, actor: &Actor, operator: &str) -> Option<f64> {
        let base = actor.base_name();
        let cycles = self
            .find(&actor.id, operator)
            .or_else(|| self.find(&actor.id, "*"))
            .or_else(|| self.find(base, operator))
            .or_else(|| self.find(base, "*"))
            .or_else(|| actor.timing.get(operator).copied())
            .or_else(|| actor.timing.get("*").copied())?;
        Some(cycles as f64 * self.scale)
    }
}

/// Shell-style pattern with `*` and `?`.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    glob_regex(pattern).is_match(text)
}

fn glob_regex(pattern: &str) -> regex::Regex {
    let mut re = String::from("^");
    for c in pattern.chars() {
        match c {
            '*' => re.push_str(".*"),
            '?' => re.push('.'),
            c => re.push_str(&regex::escape(&c.to_string())),
        }
    }
    re.push('$');
    regex::Regex::new(&re).expect("escaped pattern")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRule {
    /// Glob over the full actor id or its base name.
    pub actors: String,
    #[serde(default)]
    pub operators: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pin: Option<String>,
}

/// Ordered rules; the first rule matching an actor decides its operators.
/// Actors matched by no rule may run anywhere.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default)]
    pub rules: Vec<ConstraintRule>,
}

impl Constraints {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ScheduleError::Parse(format!("constraints: {e}")))
    }

    /// Allowed operator indices per actor of a flat graph.
    pub fn resolve(&self, graph: &SdfGraph, arch: &ArchGraph) -> Result<Vec<Vec<usize>>> {
        let all: Vec<usize> = (0..arch.operators.len()).collect();
        let mut rules = Vec::new();
        for r in &self.rules {
            let ops: Vec<&String> = match &r.pin {
                Some(p) => vec![p],
                None => r.operators.iter().collect(),
            };
            let mut idx = Vec::new();
            for o in ops {
                idx.push(
                    arch.operator_index(o)
                        .ok_or_else(|| ScheduleError::UnknownOperator(o.clone()))?,
                );
            }
            idx.sort_unstable();
            idx.dedup();
            rules.push((glob_regex(&r.actors), idx, false));
        }
        let mut allowed = Vec::with_capacity(graph.actors.len());
        for a in &graph.actors {
            let hit = rules
                .iter_mut()
                .find(|(re, _, _)| re.is_match(&a.id) || re.is_match(a.base_name()));
            let ops = match hit {
                Some((_, ops, used)) => {
                    *used = true;
                    ops.clone()
                }
                None => all.clone(),
            };
            if ops.is_empty() {
                return Err(ScheduleError::UnschedulableConstraint(a.id.clone()));
            }
            allowed.push(ops);
        }
        // A pattern shadowed by an earlier rule still counts as matching.
        for (r, (re, _, used)) in self.rules.iter().zip(&rules) {
            if !used && !graph.actors.iter().any(|a| re.is_match(&a.id) || re.is_match(a.base_name())) {
                return Err(ScheduleError::UnmatchedPattern(r.actors.clone()));
            }
        }
        Ok(allowed)
    }
}
