//! Address arithmetic, tree topology, memory contents and query states.
//!
//! The bifurcation tree has `n` levels of routing nodes and `N = 2^n` leaves
//! (memory cells). Nodes are identified by `(level, index)` with
//! `index < 2^level`. Address bit `j_0` is consumed at the root and is the
//! most significant bit of the cell index, so the address `010` reaches
//! cell 2.

use std::collections::HashSet;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{QramError, Result};

/// Largest address width representable with `u64` cell indices.
pub const MAX_ADDRESS_BITS: u32 = 63;

/// Norm tolerance applied to user-supplied queries.
pub const INPUT_NORM_TOLERANCE: f64 = 1e-9;

/// Norm tolerance for states produced internally.
pub const INTERNAL_NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeGeometry {
    n: u32,
}

impl TreeGeometry {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return Err(QramError::Validation(
                "the address register needs at least one bit".into(),
            ));
        }
        if n > MAX_ADDRESS_BITS {
            return Err(QramError::Capacity {
                n,
                max: MAX_ADDRESS_BITS,
            });
        }
        Ok(Self { n })
    }

    /// Number of address bits (tree levels).
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of memory cells, `2^n`.
    pub fn cells(&self) -> u64 {
        1u64 << self.n
    }

    /// Number of routing nodes, `2^n - 1`.
    pub fn nodes(&self) -> u64 {
        self.cells() - 1
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.level < self.n && node.index < (1u64 << node.level)
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if self.contains(node) {
            Ok(())
        } else {
            Err(QramError::Index(format!(
                "node {node} is not part of a tree with {} levels",
                self.n
            )))
        }
    }

    /// All nodes in `(level, index)` lexicographic order.
    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> {
        let n = self.n;
        (0..n).flat_map(|level| (0..1u64 << level).map(move |index| NodeId { level, index }))
    }
}

/// A routing node (or, for the fanout architecture, a switch copy) of the tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub level: u32,
    pub index: u64,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Self {
        Self { level, index }
    }

    pub fn child(&self, dir: Direction) -> NodeId {
        NodeId {
            level: self.level + 1,
            index: 2 * self.index + dir.bit() as u64,
        }
    }

    pub fn parent(&self) -> Option<NodeId> {
        (self.level > 0).then(|| NodeId {
            level: self.level - 1,
            index: self.index >> 1,
        })
    }

    /// Position in the `(level, index)` lexicographic order, i.e. `2^level - 1 + index`.
    pub fn linear(&self) -> u64 {
        (1u64 << self.level) - 1 + self.index
    }

    pub fn from_linear(pos: u64) -> NodeId {
        let level = 63 - (pos + 1).leading_zeros();
        NodeId {
            level,
            index: pos + 1 - (1u64 << level),
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.level, self.index)
    }
}

/// Switch copies of the fanout architecture share the `(level, index)` layout of nodes.
pub type SwitchId = NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Direction::Right
        } else {
            Direction::Left
        }
    }

    pub fn bit(self) -> bool {
        self == Direction::Right
    }

    pub fn flipped(self) -> Self {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

/// State of a qutrit routing node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum NodeState {
    #[default]
    Wait,
    Left,
    Right,
}

impl From<Direction> for NodeState {
    fn from(dir: Direction) -> Self {
        match dir {
            Direction::Left => NodeState::Left,
            Direction::Right => NodeState::Right,
        }
    }
}

impl NodeState {
    pub fn direction(self) -> Option<Direction> {
        match self {
            NodeState::Wait => None,
            NodeState::Left => Some(Direction::Left),
            NodeState::Right => Some(Direction::Right),
        }
    }
}

/// An `n`-bit address. Bit 0 is the root-level bit and the most significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    value: u64,
    width: u32,
}

impl Address {
    pub fn new(value: u64, width: u32) -> Result<Self> {
        if width == 0 || width > MAX_ADDRESS_BITS {
            return Err(QramError::Validation(format!(
                "address width {width} outside [1, {MAX_ADDRESS_BITS}]"
            )));
        }
        if value >> width != 0 {
            return Err(QramError::Validation(format!(
                "cell {value} does not fit in {width} address bits"
            )));
        }
        Ok(Self { value, width })
    }

    /// Inverse of [`cell_index`].
    pub fn from_index(cell: u64, g: TreeGeometry) -> Result<Self> {
        Self::new(cell, g.n())
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let width = u32::try_from(bits.len()).unwrap_or(u32::MAX);
        let value = bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        Self::new(value, width)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// Bit `j_k`; `k = 0` is the root-level bit.
    pub fn bit(&self, k: u32) -> bool {
        debug_assert!(k < self.width);
        (self.value >> (self.width - 1 - k)) & 1 == 1
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.width).map(move |k| self.bit(k))
    }

    /// Integer value of the first `k` bits, i.e. the index of the level-`k` node on the path.
    pub fn prefix(&self, k: u32) -> u64 {
        if k == 0 {
            0
        } else {
            self.value >> (self.width - k)
        }
    }
}

impl std::str::FromStr for Address {
    type Err = QramError;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(QramError::Parse(format!(
                    "address '{s}' contains '{other}', expected only 0 and 1"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.is_empty() {
            return Err(QramError::Parse("empty address".into()));
        }
        Address::from_bits(&bits)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Cell reached by an address: the big-endian value of its bits.
pub fn cell_index(address: &Address) -> u64 {
    address.value()
}

/// The root-to-leaf route selected by `address`: one `(node, direction)` per level.
pub fn path_of(address: &Address, g: TreeGeometry) -> Result<Vec<(NodeId, Direction)>> {
    if address.width() != g.n() {
        return Err(QramError::Dimension {
            what: "address width",
            expected: g.n() as u64,
            found: address.width() as u64,
        });
    }
    Ok((0..g.n())
        .map(|k| {
            (
                NodeId::new(k, address.prefix(k)),
                Direction::from_bit(address.bit(k)),
            )
        })
        .collect())
}

/// Classical memory: one bit per cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemoryArray {
    cells: Vec<bool>,
}

impl MemoryArray {
    pub fn new(cells: Vec<bool>, g: TreeGeometry) -> Result<Self> {
        if cells.len() as u64 != g.cells() {
            return Err(QramError::Dimension {
                what: "memory length",
                expected: g.cells(),
                found: cells.len() as u64,
            });
        }
        Ok(Self { cells })
    }

    pub fn zeros(g: TreeGeometry) -> Self {
        Self {
            cells: vec![false; g.cells() as usize],
        }
    }

    pub fn random<R: Rng + ?Sized>(g: TreeGeometry, rng: &mut R) -> Self {
        Self {
            cells: (0..g.cells()).map(|_| rng.random::<bool>()).collect(),
        }
    }

    /// Memory whose cell `j` holds bit `j` of `pattern` (LSB first); `n` small.
    pub fn from_pattern(pattern: u64, g: TreeGeometry) -> Self {
        Self {
            cells: (0..g.cells()).map(|j| (pattern >> j) & 1 == 1).collect(),
        }
    }

    /// Parses either a string of `0`/`1` characters or a JSON list of 0/1 integers.
    pub fn parse(text: &str, g: TreeGeometry) -> Result<Self> {
        let text = text.trim();
        let cells = if text.starts_with('[') {
            let values: Vec<u64> = serde_json::from_str(text)
                .map_err(|e| QramError::Parse(format!("memory JSON: {e}")))?;
            values
                .into_iter()
                .map(|v| match v {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(QramError::Parse(format!("memory cell value {other}"))),
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            text.chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(QramError::Parse(format!("memory character '{other}'"))),
                })
                .collect::<Result<Vec<_>>>()?
        };
        Self::new(cells, g)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn get(&self, cell: u64) -> bool {
        self.cells[cell as usize]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn check_geometry(&self, g: TreeGeometry) -> Result<()> {
        if self.cells.len() as u64 == g.cells() {
            Ok(())
        } else {
            Err(QramError::Dimension {
                what: "memory length",
                expected: g.cells(),
                found: self.cells.len() as u64,
            })
        }
    }
}

impl fmt::Display for MemoryArray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &c in &self.cells {
            f.write_str(if c { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// A normalized superposition `Σ ψ_j |j⟩` over distinct addresses.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySuperposition {
    branches: Vec<(Complex64, Address)>,
    geometry: TreeGeometry,
}

impl QuerySuperposition {
    pub fn new(
        branches: Vec<(Complex64, Address)>,
        g: TreeGeometry,
        renormalize: bool,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(QramError::Validation(
                "a query needs at least one branch".into(),
            ));
        }
        let mut seen = HashSet::with_capacity(branches.len());
        for (_, addr) in &branches {
            if addr.width() != g.n() {
                return Err(QramError::Dimension {
                    what: "address width",
                    expected: g.n() as u64,
                    found: addr.width() as u64,
                });
            }
            if !seen.insert(addr.value()) {
                return Err(QramError::Validation(format!("duplicate address {addr}")));
            }
        }
        let norm_sqr: f64 = branches.iter().map(|(a, _)| a.norm_sqr()).sum();
        if norm_sqr <= 0.0 || !norm_sqr.is_finite() {
            return Err(QramError::Validation("query has zero total norm".into()));
        }
        let branches = if renormalize {
            let norm = norm_sqr.sqrt();
            branches
                .into_iter()
                .map(|(a, addr)| (a / norm, addr))
                .collect()
        } else {
            if (norm_sqr - 1.0).abs() > INPUT_NORM_TOLERANCE {
                return Err(QramError::Validation(format!(
                    "query norm² is {norm_sqr}, expected 1 (pass renormalize to rescale)"
                )));
            }
            branches
        };
        Ok(Self {
            branches,
            geometry: g,
        })
    }

    /// Equal-amplitude superposition over every cell; limited to `n ≤ 24`.
    pub fn uniform(g: TreeGeometry) -> Result<Self> {
        const MAX_UNIFORM: u32 = 24;
        if g.n() > MAX_UNIFORM {
            return Err(QramError::Capacity {
                n: g.n(),
                max: MAX_UNIFORM,
            });
        }
        let amp = Complex64::new(1.0 / (g.cells() as f64).sqrt(), 0.0);
        let branches = (0..g.cells())
            .map(|j| {
                (
                    amp,
                    Address {
                        value: j,
                        width: g.n(),
                    },
                )
            })
            .collect();
        Ok(Self {
            branches,
            geometry: g,
        })
    }

    /// Equal amplitudes over the given cells.
    pub fn uniform_over(cells: &[u64], g: TreeGeometry) -> Result<Self> {
        let amp = Complex64::new(1.0, 0.0);
        let branches = cells
            .iter()
            .map(|&j| Address::from_index(j, g).map(|a| (amp, a)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(branches, g, true)
    }

    pub fn single(address: Address) -> Result<Self> {
        let g = TreeGeometry::new(address.width())?;
        Self::new(vec![(Complex64::new(1.0, 0.0), address)], g, false)
    }

    /// `r` distinct random addresses with Haar-random amplitudes (normalized complex Gaussians).
    pub fn random<R: Rng + ?Sized>(g: TreeGeometry, r: usize, rng: &mut R) -> Result<Self> {
        if r == 0 || r as u64 > g.cells() {
            return Err(QramError::Validation(format!(
                "branch count {r} outside [1, {}]",
                g.cells()
            )));
        }
        let cells: Vec<u64> = if g.n() <= 20 {
            rand::seq::index::sample(rng, g.cells() as usize, r)
                .into_iter()
                .map(|j| j as u64)
                .collect()
        } else {
            let mut seen = HashSet::with_capacity(r);
            let mut cells = Vec::with_capacity(r);
            while cells.len() < r {
                let j = rng.random_range(0..g.cells());
                if seen.insert(j) {
                    cells.push(j);
                }
            }
            cells
        };
        let branches = cells
            .into_iter()
            .map(|j| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                (
                    Complex64::new(re, im),
                    Address {
                        value: j,
                        width: g.n(),
                    },
                )
            })
            .collect();
        Self::new(branches, g, true)
    }

    pub fn geometry(&self) -> TreeGeometry {
        self.geometry
    }

    pub fn branches(&self) -> &[(Complex64, Address)] {
        &self.branches
    }

    /// Number of branches `r`.
    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    /// Branch weights `|ψ_j|²`.
    pub fn weights(&self) -> Vec<f64> {
        self.branches.iter().map(|(a, _)| a.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.branches.iter().map(|(a, _)| a.norm_sqr()).sum()
    }
}

/// Builds a query from `(amplitude, bit-string)` pairs.
pub fn make_query(
    pairs: &[(Complex64, &str)],
    g: TreeGeometry,
    renormalize: bool,
) -> Result<QuerySuperposition> {
    let branches = pairs
        .iter()
        .map(|&(amp, bits)| bits.parse::<Address>().map(|a| (amp, a)))
        .collect::<Result<Vec<_>>>()?;
    QuerySuperposition::new(branches, g, renormalize)
}

/// One term `ψ_j |j⟩|D_j⟩` of a query result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomePair {
    pub amplitude: Complex64,
    pub address: Address,
    pub data_bit: bool,
}

/// Result of a memory call: the address superposition correlated with the data register.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub geometry: TreeGeometry,
    pub pairs: Vec<OutcomePair>,
}

impl QueryOutcome {
    /// True when the outcome is exactly `Σ ψ_j |j⟩|D_j⟩` for the given query and memory,
    /// with amplitudes compared bit for bit and in the query's branch order.
    pub fn realizes_query(&self, q: &QuerySuperposition, m: &MemoryArray) -> bool {
        self.geometry == q.geometry()
            && self.pairs.len() == q.len()
            && self.pairs.iter().zip(q.branches()).all(|(p, (amp, addr))| {
                p.amplitude.re.to_bits() == amp.re.to_bits()
                    && p.amplitude.im.to_bits() == amp.im.to_bits()
                    && p.address == *addr
                    && p.data_bit == m.get(cell_index(addr))
            })
    }
}
