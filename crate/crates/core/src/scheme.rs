//! Scheduler families and the registry binding each one to its transition
//! structure and VU-cdf form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::FadingModel;
use crate::error::Error;
use crate::vu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SchemeKind {
    /// Every target `0..=mu` allowed.
    Best,
    /// One-or-all: targets `{0, mu}`.
    Ooa,
    /// Selective state with exponential merging.
    Sse,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::Best, SchemeKind::Ooa, SchemeKind::Sse];

    pub fn name(&self) -> &'static str {
        describe(*self).name
    }

    /// Allowed scheduling targets (ascending) for a state with `mu = min(p, B)`.
    pub fn targets(&self, mu: usize) -> Vec<usize> {
        (describe(*self).targets)(mu)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        REGISTRY
            .iter()
            .find(|d| d.name == lower)
            .map(|d| d.kind)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

impl TryFrom<String> for SchemeKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SchemeKind> for String {
    fn from(k: SchemeKind) -> String {
        k.name().to_string()
    }
}

fn best_targets(mu: usize) -> Vec<usize> {
    (0..=mu).collect()
}

fn ooa_targets(mu: usize) -> Vec<usize> {
    if mu == 0 {
        vec![0]
    } else {
        vec![0, mu]
    }
}

/// `[2^0 - 1, 2^1 - 1, ..., 2^floor(log2(mu + 1)) - 1]`, with `mu` appended
/// when the last power falls short of it.
pub fn sse_targets(mu: usize) -> Vec<usize> {
    let top = (mu + 1).ilog2();
    let mut v: Vec<usize> = (0..=top).map(|k| (1usize << k) - 1).collect();
    if *v.last().unwrap() != mu {
        v.push(mu);
    }
    v
}

/// Conditional VU fading cdf of one state: `(kappa, mu, fading, y) -> P_f(y | p)`.
pub type StateCdfFn = fn(&[f64], usize, &FadingModel, f64) -> f64;

#[derive(Clone, Copy)]
pub struct SchemeDescriptor {
    pub kind: SchemeKind,
    pub name: &'static str,
    pub targets: fn(usize) -> Vec<usize>,
    pub state_cdf: StateCdfFn,
    pub complexity: &'static str,
}

impl SchemeDescriptor {
    /// Number of thresholds the scheme optimizes in state `p`.
    pub fn threshold_count(&self, p: usize, buffer: usize) -> usize {
        (self.targets)(p.min(buffer)).len()
    }
}

impl fmt::Debug for SchemeDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SchemeDescriptor")
            .field("kind", &self.kind)
            .field("complexity", &self.complexity)
            .finish()
    }
}

static REGISTRY: [SchemeDescriptor; 3] = [
    SchemeDescriptor {
        kind: SchemeKind::Best,
        name: "best",
        targets: best_targets,
        state_cdf: vu::state_cdf_best,
        complexity: "O(B^2)",
    },
    SchemeDescriptor {
        kind: SchemeKind::Ooa,
        name: "ooa",
        targets: ooa_targets,
        state_cdf: vu::state_cdf_ooa,
        complexity: "O(B)",
    },
    SchemeDescriptor {
        kind: SchemeKind::Sse,
        name: "sse",
        targets: sse_targets,
        state_cdf: vu::state_cdf_sse,
        complexity: "O(B log B)",
    },
];

pub fn describe(kind: SchemeKind) -> &'static SchemeDescriptor {
    REGISTRY.iter().find(|d| d.kind == kind).expect("every kind is registered")
}

pub fn describe_name(name: &str) -> Result<&'static SchemeDescriptor, Error> {
    name.parse().map(describe)
}
