//! Attention head identifiers and head masks.
//!
//! Heads are stored 0-based and printed 1-based as `layer:head`, which is
//! also the syntax accepted by [`HeadMask::parse`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HeadId {
    pub layer: usize,
    pub head: usize,
}

impl HeadId {
    pub fn new(layer: usize, head: usize) -> Self {
        HeadId { layer, head }
    }
}

impl fmt::Display for HeadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.layer + 1, self.head + 1)
    }
}

impl FromStr for HeadId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (layer, head) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Mask(format!("expected `layer:head`, got `{s}`")))?;
        let parse = |part: &str| -> Result<usize> {
            match part.trim().parse::<usize>() {
                Ok(v) if v >= 1 => Ok(v - 1),
                _ => Err(Error::Mask(format!(
                    "`{part}` in `{s}` is not a 1-based index"
                ))),
            }
        };
        Ok(HeadId::new(parse(layer)?, parse(head)?))
    }
}

/// Number of layers and heads per layer of an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Universe {
    pub layers: usize,
    pub heads: usize,
}

impl Universe {
    pub fn new(layers: usize, heads: usize) -> Self {
        Universe { layers, heads }
    }

    pub fn size(&self) -> usize {
        self.layers * self.heads
    }

    pub fn contains(&self, id: HeadId) -> bool {
        id.layer < self.layers && id.head < self.heads
    }

    /// All heads in lexicographic `(layer, head)` order.
    pub fn iter(&self) -> impl Iterator<Item = HeadId> + '_ {
        (0..self.layers).flat_map(move |l| (0..self.heads).map(move |h| HeadId::new(l, h)))
    }
}

/// A subset of the heads of a universe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadMask {
    universe: Universe,
    heads: BTreeSet<HeadId>,
}

impl HeadMask {
    pub fn empty(universe: Universe) -> Self {
        HeadMask {
            universe,
            heads: BTreeSet::new(),
        }
    }

    pub fn full(universe: Universe) -> Self {
        HeadMask {
            universe,
            heads: universe.iter().collect(),
        }
    }

    pub fn from_heads(universe: Universe, heads: impl IntoIterator<Item = HeadId>) -> Result<Self> {
        let mut mask = HeadMask::empty(universe);
        for id in heads {
            mask.insert(id)?;
        }
        Ok(mask)
    }

    /// Parses `all` or a comma-separated list of 1-based `layer:head` pairs.
    pub fn parse(spec: &str, universe: Universe) -> Result<Self> {
        let spec = spec.trim();
        if spec.eq_ignore_ascii_case("all") {
            return Ok(HeadMask::full(universe));
        }
        let heads = spec
            .split(',')
            .filter(|part| !part.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<HeadId>>>()?;
        HeadMask::from_heads(universe, heads)
    }

    pub fn insert(&mut self, id: HeadId) -> Result<bool> {
        if !self.universe.contains(id) {
            return Err(Error::Mask(format!(
                "head {id} outside {} layers x {} heads",
                self.universe.layers, self.universe.heads
            )));
        }
        Ok(self.heads.insert(id))
    }

    pub fn remove(&mut self, id: HeadId) -> bool {
        self.heads.remove(&id)
    }

    pub fn contains(&self, id: HeadId) -> bool {
        self.heads.contains(&id)
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = HeadId> + '_ {
        self.heads.iter().copied()
    }

    /// Mask spec string, `layer:head` pairs in lexicographic order.
    pub fn to_spec(&self) -> String {
        self.heads
            .iter()
            .map(HeadId::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for HeadMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_spec())
    }
}
