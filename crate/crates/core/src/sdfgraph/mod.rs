//! Hierarchical synchronous dataflow graphs.
//!
//! A graph is a set of actors connected by edges with fixed production and
//! consumption rates. Hierarchical actors carry a nested subgraph whose
//! interface ports are referenced from inside as `@port`.
//!
//! Interface semantics when a subgraph is flattened:
//! - if the parent port rate is a multiple of the subgraph's per-iteration
//!   traffic, the subgraph iterates that many times per parent firing;
//! - if an input port rate divides the per-iteration consumption, the port
//!   tokens are broadcast (re-read) until the subgraph iteration is complete;
//! - if an output port rate divides the per-iteration production, only the
//!   last tokens of each parent firing leave the subgraph.
//!
//! Delays declared inside a subgraph are scoped to one firing of the
//! hierarchical actor: they restart when the parent fires again.

mod balance;
mod expand;
mod flatten;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use balance::repetition_vector;
pub use expand::{expand, Arc, CarriedArc, Firing, FiringDag, InputBinding, TokenRef};
pub use flatten::{flatten, schedule_expression};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdfError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("semantic error: {0}")]
    Semantic(String),
    #[error("inconsistent graph: rate mismatch on edge {edge}: {detail}")]
    InconsistentGraph { edge: String, detail: String },
    #[error("recursive hierarchy through {0}")]
    RecursiveHierarchy(String),
    #[error("interface rate mismatch on {actor}: {detail}")]
    InterfaceRateMismatch { actor: String, detail: String },
    #[error("no single appearance schedule (partial expression: {partial})")]
    NoSingleAppearanceSchedule { partial: String },
    #[error("graph deadlocks: {0}")]
    Deadlock(String),
}

pub type Result<T> = std::result::Result<T, SdfError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    Atomic,
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Actor {
    pub id: String,
    pub kind: ActorKind,
    /// Kernel name used by the runtime; defaults to the last id segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, i64>,
    /// Cycle cost keyed by operator id, or `*` for any operator.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub timing: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<Box<SdfGraph>>,
    /// Name of a graph in the enclosing document's `library`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph_ref: Option<String>,
}

impl Actor {
    pub fn atomic(id: impl Into<String>) -> Self {
        Actor {
            id: id.into(),
            kind: ActorKind::Atomic,
            kernel: None,
            params: BTreeMap::new(),
            timing: BTreeMap::new(),
            subgraph: None,
            subgraph_ref: None,
        }
    }

    pub fn hierarchical(id: impl Into<String>, subgraph: SdfGraph) -> Self {
        Actor {
            kind: ActorKind::Hierarchical,
            subgraph: Some(Box::new(subgraph)),
            ..Actor::atomic(id)
        }
    }

    pub fn with_kernel(mut self, kernel: impl Into<String>) -> Self {
        self.kernel = Some(kernel.into());
        self
    }

    pub fn with_timing(mut self, operator: impl Into<String>, cycles: u64) -> Self {
        self.timing.insert(operator.into(), cycles);
        self
    }

    pub fn with_param(mut self, key: impl Into<String>, value: i64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    /// Last `/`-separated segment of the id.
    pub fn base_name(&self) -> &str {
        base_name(&self.id)
    }

    pub fn kernel_name(&self) -> &str {
        self.kernel.as_deref().unwrap_or_else(|| self.base_name())
    }

    pub fn is_hierarchical(&self) -> bool {
        self.kind == ActorKind::Hierarchical
    }
}

pub fn base_name(id: &str) -> &str {
    id.rsplit('/').next().unwrap_or(id)
}

/// `actor.port`, or `@port` for a subgraph interface port.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub actor: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(actor: impl Into<String>, port: impl Into<String>) -> Self {
        Endpoint {
            actor: actor.into(),
            port: port.into(),
        }
    }

    pub fn interface(port: impl Into<String>) -> Self {
        Endpoint::new("@", port)
    }

    pub fn is_interface(&self) -> bool {
        self.actor == "@"
    }

    fn parse(text: &str, default_port: &str) -> std::result::Result<Self, String> {
        if let Some(port) = text.strip_prefix('@') {
            if port.is_empty() {
                return Err("empty interface port name".into());
            }
            return Ok(Endpoint::interface(port));
        }
        let (actor, port) = match text.rsplit_once('.') {
            Some((a, p)) => (a, p),
            None => (text, default_port),
        };
        if actor.is_empty() || port.is_empty() {
            return Err(format!("malformed endpoint `{text}`"));
        }
        Ok(Endpoint::new(actor, port))
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_interface() {
            write!(f, "@{}", self.port)
        } else {
            write!(f, "{}.{}", self.actor, self.port)
        }
    }
}

/// Token stream transformation carried by flattened edges. Adapters are
/// applied in order from the producer to the consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StreamAdapter {
    /// `tokens` initial tokens. With a `period`, the delay restarts every
    /// `period` downstream tokens and tokens crossing a period boundary are
    /// replaced by zero-initialised ones.
    Delay {
        tokens: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period: Option<u64>,
    },
    /// Every window of `window` tokens is delivered `repeat` times.
    Broadcast { window: u64, repeat: u64 },
    /// Of every `window` tokens only the last `keep` pass.
    KeepLast { window: u64, keep: u64 },
}

impl StreamAdapter {
    /// Downstream tokens per upstream token, as (numerator, denominator).
    pub fn gain(&self) -> (u64, u64) {
        match *self {
            StreamAdapter::Delay { .. } => (1, 1),
            StreamAdapter::Broadcast { repeat, .. } => (repeat, 1),
            StreamAdapter::KeepLast { window, keep } => (keep, window),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdfEdge {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub prod: u64,
    pub cons: u64,
    pub token_bytes: u64,
    pub delay: u64,
    pub adapters: Vec<StreamAdapter>,
}

impl SdfEdge {
    pub fn new(src: Endpoint, dst: Endpoint, prod: u64, cons: u64, token_bytes: u64) -> Self {
        SdfEdge {
            src,
            dst,
            prod,
            cons,
            token_bytes,
            delay: 0,
            adapters: Vec::new(),
        }
    }

    pub fn with_delay(mut self, delay: u64) -> Self {
        self.delay = delay;
        self
    }

    pub fn label(&self) -> String {
        format!("{}->{}", self.src, self.dst)
    }

    /// Effective adapter chain, with the plain `delay` field as a
    /// graph-iteration delay.
    pub fn chain(&self) -> Vec<StreamAdapter> {
        let mut chain = self.adapters.clone();
        if self.delay > 0 {
            chain.push(StreamAdapter::Delay {
                tokens: self.delay,
                period: None,
            });
        }
        chain
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    src: String,
    dst: String,
    prod: u64,
    cons: u64,
    token_bytes: u64,
    #[serde(default)]
    delay: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    adapters: Vec<StreamAdapter>,
}

impl Serialize for SdfEdge {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EdgeDoc {
            src: self.src.to_string(),
            dst: self.dst.to_string(),
            prod: self.prod,
            cons: self.cons,
            token_bytes: self.token_bytes,
            delay: self.delay,
            adapters: self.adapters.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SdfEdge {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = EdgeDoc::deserialize(d)?;
        let src = Endpoint::parse(&doc.src, "out").map_err(serde::de::Error::custom)?;
        let dst = Endpoint::parse(&doc.dst, "in").map_err(serde::de::Error::custom)?;
        Ok(SdfEdge {
            src,
            dst,
            prod: doc.prod,
            cons: doc.cons,
            token_bytes: doc.token_bytes,
            delay: doc.delay,
            adapters: doc.adapters,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdfGraph {
    pub name: String,
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub edges: Vec<SdfEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub library: Vec<SdfGraph>,
}

impl SdfGraph {
    pub fn new(name: impl Into<String>) -> Self {
        SdfGraph {
            name: name.into(),
            actors: Vec::new(),
            edges: Vec::new(),
            library: Vec::new(),
        }
    }

    pub fn actor(&self, id: &str) -> Option<&Actor> {
        self.actors.iter().find(|a| a.id == id)
    }

    pub fn actor_index(&self, id: &str) -> Option<usize> {
        self.actors.iter().position(|a| a.id == id)
    }

    pub fn is_flat(&self) -> bool {
        self.actors.iter().all(|a| !a.is_hierarchical())
    }

    /// Edges between actors of this level (interface edges excluded).
    pub fn internal_edges(&self) -> impl Iterator<Item = (usize, &SdfEdge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.src.is_interface() && !e.dst.is_interface())
    }

    /// Structural validation of this level and every nested subgraph.
    pub fn validate(&self) -> Result<()> {
        self.validate_level(false, &self.library)
    }

    fn validate_level(&self, nested: bool, library: &[SdfGraph]) -> Result<()> {
        let sem = |m: String| Err(SdfError::Semantic(m));
        let mut ids = BTreeSet::new();
        for a in &self.actors {
            if a.id.is_empty() || a.id.contains('.') || a.id.starts_with('@') {
                return sem(format!("invalid actor id `{}`", a.id));
            }
            if !ids.insert(a.id.as_str()) {
                return sem(format!("duplicate actor id `{}`", a.id));
            }
            match a.kind {
                ActorKind::Atomic => {
                    if a.subgraph.is_some() || a.subgraph_ref.is_some() {
                        return sem(format!("atomic actor `{}` has a subgraph", a.id));
                    }
                }
                ActorKind::Hierarchical => match (&a.subgraph, &a.subgraph_ref) {
                    (Some(sub), None) => sub.validate_level(true, library)?,
                    (None, Some(name)) => {
                        if !library.iter().any(|g| &g.name == name) {
                            return sem(format!(
                                "actor `{}` references unknown subgraph `{name}`",
                                a.id
                            ));
                        }
                    }
                    _ => {
                        return sem(format!(
                            "hierarchical actor `{}` needs exactly one subgraph",
                            a.id
                        ))
                    }
                },
            }
        }
        for e in &self.edges {
            for (ep, what) in [(&e.src, "source"), (&e.dst, "destination")] {
                if ep.is_interface() {
                    if !nested {
                        return sem(format!("interface {what} `{ep}` outside a subgraph"));
                    }
                } else if !ids.contains(ep.actor.as_str()) {
                    return sem(format!("edge {} has unknown {what} actor `{}`", e.label(), ep.actor));
                }
            }
            if e.src.is_interface() && e.dst.is_interface() {
                return sem(format!("edge {} connects two interface ports", e.label()));
            }
            if e.prod == 0 || e.cons == 0 || e.token_bytes == 0 {
                return sem(format!("edge {} has a nonpositive rate or token size", e.label()));
            }
            if (e.src.is_interface() || e.dst.is_interface()) && (e.delay > 0 || !e.adapters.is_empty()) {
                return sem(format!("interface edge {} cannot carry delays", e.label()));
            }
            if e.delay > 0 && !e.adapters.is_empty() {
                return sem(format!("edge {} mixes a delay field with adapters", e.label()));
            }
            for ad in &e.adapters {
                let ok = match *ad {
                    StreamAdapter::Delay { period, .. } => period.map_or(true, |p| p > 0),
                    StreamAdapter::Broadcast { window, repeat } => window > 0 && repeat > 0,
                    StreamAdapter::KeepLast { window, keep } => keep > 0 && keep <= window,
                };
                if !ok {
                    return sem(format!("edge {} has an invalid adapter {ad:?}", e.label()));
                }
            }
        }
        for g in &self.library {
            g.validate_level(true, library)?;
        }
        Ok(())
    }
}

/// Parse and validate a graph document.
pub fn parse_graph(text: &str) -> Result<SdfGraph> {
    let graph: SdfGraph = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => SdfError::Semantic(e.to_string()),
        _ => SdfError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        },
    })?;
    graph.validate()?;
    Ok(graph)
}

/// Normalised textual form; `parse_graph(serialize_graph(g)) == g`.
pub fn serialize_graph(graph: &SdfGraph) -> String {
    let mut text = serde_json::to_string_pretty(graph).expect("graph serialization cannot fail");
    text.push('\n');
    text
}
