use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (state, object) composition label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pair {
    pub state: usize,
    pub object: usize,
}

impl Pair {
    pub fn new(state: usize, object: usize) -> Self {
        Self { state, object }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.state, self.object)
    }
}

/// Which candidate compositions an evaluation scores against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Seen plus unseen test compositions.
    Closed,
    /// The full state × object grid.
    Open,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Closed => "closed",
            Regime::Open => "open",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed" => Ok(Regime::Closed),
            "open" => Ok(Regime::Open),
            other => Err(Error::Config(format!(
                "unknown regime {other:?} (expected closed or open)"
            ))),
        }
    }
}

/// States, objects and the seen / unseen / candidate composition structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompositionSpace {
    states: Vec<String>,
    objects: Vec<String>,
    seen: Vec<Pair>,
    unseen: Vec<Pair>,
    closed_world: Vec<Pair>,
    open_world: Vec<Pair>,
}

impl CompositionSpace {
    /// Builds and validates a space. `seen` and `unseen` are stored sorted;
    /// `closed_world` keeps the given order and must contain both sets.
    pub fn new(
        states: Vec<String>,
        objects: Vec<String>,
        seen: Vec<Pair>,
        unseen: Vec<Pair>,
        closed_world: Vec<Pair>,
    ) -> Result<Self> {
        let bad = |msg: String| Error::ShapeMismatch(msg);
        if states.is_empty() || objects.is_empty() {
            return Err(bad("state and object sets must be nonempty".into()));
        }
        if states.len() > u16::MAX as usize + 1 || objects.len() > u16::MAX as usize + 1 {
            return Err(bad("too many primitives for u16 indices".into()));
        }
        let in_range = |p: &Pair| p.state < states.len() && p.object < objects.len();
        for p in seen.iter().chain(&unseen).chain(&closed_world) {
            if !in_range(p) {
                return Err(bad(format!("composition {p} out of range")));
            }
        }
        let seen_set: BTreeSet<Pair> = seen.iter().copied().collect();
        let unseen_set: BTreeSet<Pair> = unseen.iter().copied().collect();
        let closed_set: BTreeSet<Pair> = closed_world.iter().copied().collect();
        if seen_set.len() != seen.len()
            || unseen_set.len() != unseen.len()
            || closed_set.len() != closed_world.len()
        {
            return Err(bad("duplicate composition in a split".into()));
        }
        if let Some(p) = seen_set.intersection(&unseen_set).next() {
            return Err(bad(format!("composition {p} is both seen and unseen")));
        }
        if let Some(p) = seen_set.union(&unseen_set).find(|p| !closed_set.contains(p)) {
            return Err(bad(format!("composition {p} missing from closed-world candidates")));
        }
        let open_world = (0..states.len())
            .flat_map(|s| (0..objects.len()).map(move |o| Pair::new(s, o)))
            .collect();
        Ok(Self {
            states,
            objects,
            seen: seen_set.into_iter().collect(),
            unseen: unseen_set.into_iter().collect(),
            closed_world,
            open_world,
        })
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn seen(&self) -> &[Pair] {
        &self.seen
    }

    pub fn unseen(&self) -> &[Pair] {
        &self.unseen
    }

    pub fn closed_world(&self) -> &[Pair] {
        &self.closed_world
    }

    /// All `|S|·|O|` pairs, state-major.
    pub fn open_world(&self) -> &[Pair] {
        &self.open_world
    }

    pub fn candidates(&self, regime: Regime) -> &[Pair] {
        match regime {
            Regime::Closed => &self.closed_world,
            Regime::Open => &self.open_world,
        }
    }

    pub fn is_seen(&self, p: Pair) -> bool {
        self.seen.binary_search(&p).is_ok()
    }

    pub fn is_unseen(&self, p: Pair) -> bool {
        self.unseen.binary_search(&p).is_ok()
    }

    /// Row of `p` in the open-world grid.
    pub fn grid_index(&self, p: Pair) -> usize {
        p.state * self.objects.len() + p.object
    }

    pub fn name(&self, p: Pair) -> String {
        format!("{} {}", self.states[p.state], self.objects[p.object])
    }
}

/// Position of each pair within a candidate list.
pub fn candidate_index(candidates: &[Pair], p: Pair) -> Option<usize> {
    candidates.iter().position(|&c| c == p)
}
