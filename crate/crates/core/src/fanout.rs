//! The conventional architecture: address bit `j_k` fans out to all `2^k`
//! switches of level `k`, so every branch of the address superposition is
//! correlated with all `N - 1` switches.

use num_complex::Complex64;

use crate::error::{QramError, Result};
use crate::model::{
    cell_index, Address, Direction, MemoryArray, NodeId, OutcomePair, QueryOutcome,
    QuerySuperposition, SwitchId, TreeGeometry,
};

/// Switch values of one branch. Stored as the address; copies are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchAssignment {
    address: Address,
}

impl SwitchAssignment {
    pub fn new(address: Address) -> Self {
        Self { address }
    }

    pub fn value(&self, switch: SwitchId) -> bool {
        self.address.bit(switch.level)
    }

    /// Materialized values, one vector of `2^k` copies per level.
    pub fn levels(&self) -> Vec<Vec<bool>> {
        (0..self.address.width())
            .map(|k| vec![self.address.bit(k); 1usize << k])
            .collect()
    }

    pub fn switch_count(&self) -> u64 {
        (1u64 << self.address.width()) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanoutState {
    branches: Vec<(Complex64, Address)>,
    geometry: TreeGeometry,
}

impl FanoutState {
    pub fn geometry(&self) -> TreeGeometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn amplitude(&self, branch: usize) -> Complex64 {
        self.branches[branch].0
    }

    pub fn address(&self, branch: usize) -> Address {
        self.branches[branch].1
    }

    pub fn assignment(&self, branch: usize) -> Result<SwitchAssignment> {
        self.branches
            .get(branch)
            .map(|&(_, a)| SwitchAssignment::new(a))
            .ok_or_else(|| QramError::Index(format!("branch {branch}")))
    }
}

pub fn build_fanout_state(q: &QuerySuperposition) -> FanoutState {
    FanoutState {
        branches: q.branches().to_vec(),
        geometry: q.geometry(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanoutRun {
    pub outcome: QueryOutcome,
    pub activations: u64,
}

/// Sets every switch from its address bit, then routes the bus down the
/// switched paths, applies the memory CNOT and brings the bus back.
pub fn fanout_run(q: &QuerySuperposition, m: &MemoryArray) -> Result<FanoutRun> {
    let g = q.geometry();
    m.check_geometry(g)?;
    let state = build_fanout_state(q);

    // Each address line drives every switch on its level, whatever the superposition.
    let activations: u64 = (0..g.n()).map(|k| 1u64 << k).sum();

    let mut pairs = Vec::with_capacity(state.len());
    for b in 0..state.len() {
        let switches = state.assignment(b)?;
        let mut pos = NodeId::ROOT;
        for _ in 0..g.n() {
            pos = pos.child(Direction::from_bit(switches.value(pos)));
        }
        let cell = pos.index;
        let bus = m.get(cell);
        debug_assert_eq!(cell, cell_index(&state.address(b)));
        pairs.push(OutcomePair {
            amplitude: state.amplitude(b),
            address: state.address(b),
            data_bit: bus,
        });
    }
    Ok(FanoutRun {
        outcome: QueryOutcome { geometry: g, pairs },
        activations,
    })
}

pub fn fanout_full_query(q: &QuerySuperposition, m: &MemoryArray) -> Result<QueryOutcome> {
    fanout_run(q, m).map(|r| r.outcome)
}

/// Transistors switched per memory call: `Σ_k 2^k = N - 1`.
pub fn activated_switch_count(g: TreeGeometry) -> u64 {
    g.nodes()
}
