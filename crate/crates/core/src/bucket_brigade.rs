//! Branch-sparse simulation of the bucket-brigade memory call.
//!
//! Every branch of the address superposition carves one root-to-leaf route of
//! `Left`/`Right` qutrits; all other nodes stay `Wait`. Because the protocol
//! only ever permutes classical node configurations, the global state is a
//! superposition of at most `r` configurations and each one is stored as the
//! carved route of its branch. All branches advance through the protocol in
//! lockstep, and the interaction counter records every qubit-qutrit encounter
//! of one clock step once, regardless of how many branches are superposed.

use num_complex::Complex64;

use crate::error::{QramError, Result};
use crate::model::{
    Address, Direction, MemoryArray, NodeId, NodeState, OutcomePair, QueryOutcome,
    QuerySuperposition, TreeGeometry,
};

/// What a node does with an incoming qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeAction {
    /// The qubit was absorbed into a `Wait` node.
    Stored,
    RoutedLeft,
    RoutedRight,
}

/// Encoding unitary at a single node: a `Wait` node absorbs the incoming bit,
/// a `Left`/`Right` node deflects it.
pub fn apply_encoding(incoming: bool, node: NodeState) -> (NodeState, EncodeAction) {
    match node {
        NodeState::Wait => (
            NodeState::from(Direction::from_bit(incoming)),
            EncodeAction::Stored,
        ),
        NodeState::Left => (NodeState::Left, EncodeAction::RoutedLeft),
        NodeState::Right => (NodeState::Right, EncodeAction::RoutedRight),
    }
}

/// Inverse encoding: a `Left`/`Right` node returns to `Wait` and emits the stored bit.
fn apply_decoding(node: NodeState) -> Option<bool> {
    node.direction().map(Direction::bit)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusPhase {
    NotInjected,
    AtLeaf,
    Returned,
}

/// Which encounters count as two-body interactions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InteractionCounting {
    /// Every routing deflection, encode/decode and the memory CNOT.
    #[default]
    AllEncounters,
    /// Only encodes, decodes and the memory CNOT.
    EncodeOnly,
}

/// A deliberately broken gate, used to check that verification catches faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The encoding at this node stores the opposite direction.
    FlipEncoding(NodeId),
    /// The bus-memory CNOT at this cell is skipped.
    DropMemoryCnot(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub amplitude: Complex64,
    pub address: Address,
    route: Vec<Direction>,
    pub bus_phase: BusPhase,
    pub bus_bit: bool,
    pub data_bit: Option<bool>,
    leaf: Option<u64>,
}

impl Branch {
    fn new(amplitude: Complex64, address: Address) -> Self {
        Self {
            amplitude,
            address,
            route: Vec::with_capacity(address.width() as usize),
            bus_phase: BusPhase::NotInjected,
            bus_bit: false,
            data_bit: None,
            leaf: None,
        }
    }

    /// Number of address bits absorbed into the tree so far.
    pub fn carved_levels(&self) -> u32 {
        self.route.len() as u32
    }

    pub fn route(&self) -> &[Direction] {
        &self.route
    }

    /// Index of the level-`k` node on the carved route (`k ≤ carved_levels`).
    fn route_node(&self, k: u32) -> NodeId {
        let index = self.route[..k as usize]
            .iter()
            .fold(0u64, |acc, d| 2 * acc + d.bit() as u64);
        NodeId::new(k, index)
    }

    pub fn node_state(&self, node: NodeId) -> NodeState {
        if node.level < self.carved_levels() && self.route_node(node.level) == node {
            self.route[node.level as usize].into()
        } else {
            NodeState::Wait
        }
    }

    /// Non-`Wait` nodes of this branch in level order.
    pub fn carved_nodes(&self) -> impl Iterator<Item = (NodeId, Direction)> + '_ {
        let mut index = 0u64;
        self.route.iter().enumerate().map(move |(k, &d)| {
            let node = NodeId::new(k as u32, index);
            index = 2 * index + d.bit() as u64;
            (node, d)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarvedState {
    branches: Vec<Branch>,
    geometry: TreeGeometry,
    interaction_count: u64,
}

impl CarvedState {
    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn geometry(&self) -> TreeGeometry {
        self.geometry
    }

    pub fn interaction_count(&self) -> u64 {
        self.interaction_count
    }

    pub fn carved_levels(&self) -> u32 {
        self.branches[0].carved_levels()
    }

    pub fn bus_phase(&self) -> BusPhase {
        self.branches[0].bus_phase
    }

    pub fn node_config(&self, branch: usize, node: NodeId) -> Result<NodeState> {
        let b = self.branches.get(branch).ok_or_else(|| {
            QramError::Index(format!(
                "branch {branch} of a state with {} branches",
                self.branches.len()
            ))
        })?;
        self.geometry.check_node(node)?;
        Ok(b.node_state(node))
    }

    /// Number of nodes whose state differs between two branches.
    pub fn config_distance(&self, a: usize, b: usize) -> Result<u32> {
        let len = self.branches.len();
        let (ba, bb) = match (self.branches.get(a), self.branches.get(b)) {
            (Some(x), Some(y)) => (x, y),
            _ => {
                return Err(QramError::Index(format!(
                    "branch pair ({a}, {b}) of a state with {len} branches"
                )))
            }
        };
        // Only nodes on either route can be non-Wait.
        let mut distance = 0;
        for (node, dir) in ba.carved_nodes() {
            if bb.node_state(node) != NodeState::from(dir) {
                distance += 1;
            }
        }
        for (node, _) in bb.carved_nodes() {
            if ba.node_state(node) == NodeState::Wait {
                distance += 1;
            }
        }
        Ok(distance)
    }

    fn advance_clock(&mut self, per_branch: &[u64]) -> Result<()> {
        let first = per_branch[0];
        if per_branch.iter().any(|&c| c != first) {
            return Err(QramError::ProtocolOrder(
                "branches fell out of lockstep".into(),
            ));
        }
        self.interaction_count += first;
        Ok(())
    }
}

/// Bucket-brigade protocol driver.
#[derive(Debug, Clone, Copy, Default)]
pub struct BucketBrigade {
    pub counting: InteractionCounting,
    pub fault: Option<Fault>,
}

/// Result of a complete memory call.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRun {
    pub outcome: QueryOutcome,
    pub interactions: u64,
}

impl BucketBrigade {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_counting(mut self, counting: InteractionCounting) -> Self {
        self.counting = counting;
        self
    }

    pub fn with_fault(mut self, fault: Fault) -> Self {
        self.fault = Some(fault);
        self
    }

    fn cost(&self, action: EncodeAction) -> u64 {
        match (self.counting, action) {
            (_, EncodeAction::Stored) => 1,
            (InteractionCounting::AllEncounters, _) => 1,
            (InteractionCounting::EncodeOnly, _) => 0,
        }
    }

    fn deflection_cost(&self) -> u64 {
        match self.counting {
            InteractionCounting::AllEncounters => 1,
            InteractionCounting::EncodeOnly => 0,
        }
    }

    /// Sends the address bits through the tree one at a time, starting with `j_0`.
    pub fn carve_routes(&self, q: &QuerySuperposition) -> Result<CarvedState> {
        let g = q.geometry();
        let mut state = CarvedState {
            branches: q
                .branches()
                .iter()
                .map(|&(amp, addr)| Branch::new(amp, addr))
                .collect(),
            geometry: g,
            interaction_count: 0,
        };
        let mut steps = vec![0u64; state.branches.len()];
        for k in 0..g.n() {
            for (b, count) in state.branches.iter_mut().zip(steps.iter_mut()) {
                *count = self.send_address_bit(b, b.address.bit(k), g)?;
            }
            state.advance_clock(&steps)?;
        }
        Ok(state)
    }

    fn send_address_bit(&self, b: &mut Branch, bit: bool, g: TreeGeometry) -> Result<u64> {
        let mut pos = NodeId::ROOT;
        let mut cost = 0;
        loop {
            if pos.level >= g.n() {
                return Err(QramError::ProtocolOrder(
                    "address qubit left the tree without meeting a wait node".into(),
                ));
            }
            let (new_state, action) = apply_encoding(bit, b.node_state(pos));
            cost += self.cost(action);
            match action {
                EncodeAction::Stored => {
                    let mut dir = new_state
                        .direction()
                        .expect("a stored bit leaves the node in left or right");
                    if self.fault == Some(Fault::FlipEncoding(pos)) {
                        dir = dir.flipped();
                    }
                    debug_assert_eq!(pos.level, b.carved_levels());
                    b.route.push(dir);
                    return Ok(cost);
                }
                EncodeAction::RoutedLeft => pos = pos.child(Direction::Left),
                EncodeAction::RoutedRight => pos = pos.child(Direction::Right),
            }
        }
    }

    /// Injects the bus at the root, follows the carved routes and applies the memory CNOT.
    pub fn inject_bus(&self, s: &mut CarvedState, m: &MemoryArray) -> Result<()> {
        m.check_geometry(s.geometry)?;
        let n = s.geometry.n();
        if s.carved_levels() != n || s.bus_phase() != BusPhase::NotInjected {
            return Err(QramError::ProtocolOrder(
                "the bus is injected once, after all address bits are carved".into(),
            ));
        }
        let mut steps = Vec::with_capacity(s.branches.len());
        for b in &mut s.branches {
            let mut pos = NodeId::ROOT;
            let mut cost = 0;
            for _ in 0..n {
                let (_, action) = apply_encoding(b.bus_bit, b.node_state(pos));
                let dir = match action {
                    EncodeAction::RoutedLeft => Direction::Left,
                    EncodeAction::RoutedRight => Direction::Right,
                    EncodeAction::Stored => {
                        return Err(QramError::ProtocolOrder(format!(
                            "bus absorbed by wait node {pos}"
                        )))
                    }
                };
                cost += self.deflection_cost();
                pos = pos.child(dir);
            }
            // pos is now one level below the tree: its index is the cell.
            let cell = pos.index;
            if self.fault != Some(Fault::DropMemoryCnot(cell)) {
                b.bus_bit ^= m.get(cell);
            }
            cost += 1;
            b.leaf = Some(cell);
            b.bus_phase = BusPhase::AtLeaf;
            steps.push(cost);
        }
        s.advance_clock(&steps)
    }

    /// Sends the bus back to the root along the same routes.
    pub fn return_bus(&self, s: &mut CarvedState) -> Result<()> {
        if s.bus_phase() != BusPhase::AtLeaf {
            return Err(QramError::ProtocolOrder(
                "the bus can only return from the leaves".into(),
            ));
        }
        let n = s.geometry.n();
        let mut steps = Vec::with_capacity(s.branches.len());
        for b in &mut s.branches {
            let leaf = b.leaf.take().expect("bus at leaf has a leaf position");
            let mut cost = 0;
            for k in (0..n).rev() {
                let node = NodeId::new(k, leaf >> (n - k));
                if b.node_state(node) == NodeState::Wait {
                    return Err(QramError::ProtocolOrder(format!(
                        "returning bus met wait node {node}"
                    )));
                }
                cost += self.deflection_cost();
            }
            b.data_bit = Some(b.bus_bit);
            b.bus_phase = BusPhase::Returned;
            steps.push(cost);
        }
        s.advance_clock(&steps)
    }

    pub fn bus_round_trip(&self, s: &mut CarvedState, m: &MemoryArray) -> Result<()> {
        self.inject_bus(s, m)?;
        self.return_bus(s)
    }

    /// Resets the tree level by level from the last level up, re-emitting the
    /// address bits, and returns the correlated address/data superposition.
    /// On success every node of every branch is `Wait`.
    pub fn uncompute(&self, s: &mut CarvedState) -> Result<QueryOutcome> {
        let n = s.geometry.n();
        if s.bus_phase() != BusPhase::Returned || s.carved_levels() != n {
            return Err(QramError::ProtocolOrder(
                "uncompute runs once, after the bus has returned".into(),
            ));
        }
        let mut recovered = vec![vec![false; n as usize]; s.branches.len()];
        let mut steps = vec![0u64; s.branches.len()];
        for k in (0..n).rev() {
            for ((b, bits), count) in s
                .branches
                .iter_mut()
                .zip(recovered.iter_mut())
                .zip(steps.iter_mut())
            {
                let node = b.route_node(k);
                let bit = apply_decoding(b.node_state(node)).ok_or_else(|| {
                    QramError::ProtocolOrder(format!("decoding a wait node {node}"))
                })?;
                b.route.pop();
                // The emitted qubit is deflected by the k still-carved nodes above.
                let mut cost = 1;
                for l in (0..k).rev() {
                    if b.node_state(b.route_node(l)) == NodeState::Wait {
                        return Err(QramError::ProtocolOrder(
                            "emitted address qubit met a wait node".into(),
                        ));
                    }
                    cost += self.deflection_cost();
                }
                bits[k as usize] = bit;
                *count = cost;
            }
            s.advance_clock(&steps)?;
        }
        let pairs = s
            .branches
            .iter()
            .zip(&recovered)
            .map(|(b, bits)| {
                Ok(OutcomePair {
                    amplitude: b.amplitude,
                    address: Address::from_bits(bits)?,
                    data_bit: b.data_bit.expect("returned bus carries the data bit"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QueryOutcome {
            geometry: s.geometry,
            pairs,
        })
    }

    pub fn run(&self, q: &QuerySuperposition, m: &MemoryArray) -> Result<QueryRun> {
        m.check_geometry(q.geometry())?;
        let mut state = self.carve_routes(q)?;
        self.bus_round_trip(&mut state, m)?;
        let outcome = self.uncompute(&mut state)?;
        Ok(QueryRun {
            outcome,
            interactions: state.interaction_count,
        })
    }
}

pub fn carve_routes(q: &QuerySuperposition) -> Result<CarvedState> {
    BucketBrigade::default().carve_routes(q)
}

pub fn bus_round_trip(mut s: CarvedState, m: &MemoryArray) -> Result<CarvedState> {
    BucketBrigade::default().bus_round_trip(&mut s, m)?;
    Ok(s)
}

pub fn uncompute(mut s: CarvedState) -> Result<QueryOutcome> {
    BucketBrigade::default().uncompute(&mut s)
}

pub fn full_query(q: &QuerySuperposition, m: &MemoryArray) -> Result<QueryOutcome> {
    BucketBrigade::default().run(q, m).map(|r| r.outcome)
}

pub fn node_config(s: &CarvedState, branch: usize, node: NodeId) -> Result<NodeState> {
    s.node_config(branch, node)
}

/// Closed form of the default interaction count: `n(n+1)` encode/decode
/// encounters plus `2n + 1` for the bus round trip.
pub fn interaction_closed_form(n: u32, counting: InteractionCounting) -> u64 {
    let n = n as u64;
    match counting {
        InteractionCounting::AllEncounters => n * (n + 1) + 2 * n + 1,
        InteractionCounting::EncodeOnly => 2 * n + 1,
    }
}
