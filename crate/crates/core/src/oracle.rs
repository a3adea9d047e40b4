//! Dense reference simulator for small trees (`n ≤ 3`).
//!
//! Basis ordering: address register (big-endian, `2^n`) ⊗ tree qutrits in
//! `(level, index)` order, root most significant, digits `Wait = 0`,
//! `Left = 1`, `Right = 2` (`3^(2^n - 1)`) ⊗ bus qubit (`2`).
//!
//! Every protocol step is a permutation of this basis. A travelling qubit's
//! position is never stored: at level `k` exactly one node can be reached, the
//! one whose ancestors all point towards it, so "route the qubit to node `v`
//! and act there" is a unitary controlled on the ancestors of `v`. The encode
//! gate on (address qubit, node) is the involution
//! `|b, wait⟩ ↔ |0, left/right(b)⟩`, with `|0⟩` playing the fiducial state.

use num_complex::Complex64;

use crate::error::{QramError, Result};
use crate::model::{
    cell_index, MemoryArray, NodeId, QueryOutcome, QuerySuperposition, TreeGeometry,
};
use crate::noise::{Architecture, DephasedSet};

pub const MAX_ORACLE_BITS: u32 = 3;
pub const MAX_FANOUT_ORACLE_BITS: u32 = 2;

const WAIT: u8 = 0;
const LEFT: u8 = 1;
const RIGHT: u8 = 2;

/// Encode gate on (qubit, qutrit) as a table indexed by `3 * qubit + qutrit`.
const ENCODE: [(u8, u8); 6] = [
    (0, LEFT),  // |0, wait⟩  -> |0, left⟩
    (0, WAIT),  // |0, left⟩  -> |0, wait⟩
    (1, WAIT),  // |0, right⟩ -> |1, wait⟩
    (0, RIGHT), // |1, wait⟩  -> |0, right⟩
    (1, LEFT),  // |1, left⟩  fixed
    (1, RIGHT), // |1, right⟩ fixed
];

fn decode_table() -> [(u8, u8); 6] {
    let mut inv = [(0u8, 0u8); 6];
    for (i, &(b, s)) in ENCODE.iter().enumerate() {
        let j = 3 * b as usize + s as usize;
        inv[j] = ((i / 3) as u8, (i % 3) as u8);
    }
    inv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Send address qubit `k` into the tree.
    Encode(u32),
    /// Bus down the carved route, CNOT with the memory cell, and back.
    BusCnot,
    /// Inverse encoding on level `k`, returning address qubit `k` to the register.
    Decode(u32),
}

/// The full memory-call sequence for `n` address bits.
pub fn protocol_steps(n: u32) -> Vec<Step> {
    (0..n)
        .map(Step::Encode)
        .chain(std::iter::once(Step::BusCnot))
        .chain((0..n).rev().map(Step::Decode))
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    n: u32,
    nodes: usize,
    tree_dim: usize,
}

impl Layout {
    fn new(g: TreeGeometry) -> Result<Self> {
        if g.n() > MAX_ORACLE_BITS {
            return Err(QramError::Capacity {
                n: g.n(),
                max: MAX_ORACLE_BITS,
            });
        }
        let nodes = g.nodes() as usize;
        Ok(Self {
            n: g.n(),
            nodes,
            tree_dim: 3usize.pow(nodes as u32),
        })
    }

    fn dim(&self) -> usize {
        (1 << self.n) * self.tree_dim * 2
    }

    fn split(&self, index: usize) -> (usize, Vec<u8>, u8) {
        let bus = (index % 2) as u8;
        let rest = index / 2;
        let mut tree = rest % self.tree_dim;
        let address = rest / self.tree_dim;
        let mut digits = vec![0u8; self.nodes];
        for d in digits.iter_mut().rev() {
            *d = (tree % 3) as u8;
            tree /= 3;
        }
        (address, digits, bus)
    }

    fn join(&self, address: usize, digits: &[u8], bus: u8) -> usize {
        let tree = digits.iter().fold(0usize, |acc, &d| 3 * acc + d as usize);
        (address * self.tree_dim + tree) * 2 + bus as usize
    }

    /// Node at `level` that the current tree configuration routes a qubit to, if any.
    fn reachable(&self, digits: &[u8], level: u32) -> Option<NodeId> {
        let mut node = NodeId::ROOT;
        for _ in 0..level {
            node = match digits[node.linear() as usize] {
                LEFT => node.child(crate::model::Direction::Left),
                RIGHT => node.child(crate::model::Direction::Right),
                _ => return None,
            };
        }
        Some(node)
    }

    fn image(
        &self,
        index: usize,
        step: Step,
        memory: &MemoryArray,
        decode: &[(u8, u8); 6],
    ) -> usize {
        let (mut address, mut digits, mut bus) = self.split(index);
        match step {
            Step::Encode(k) | Step::Decode(k) => {
                if let Some(node) = self.reachable(&digits, k) {
                    let bit_pos = self.n - 1 - k;
                    let qubit = ((address >> bit_pos) & 1) as u8;
                    let slot = node.linear() as usize;
                    let table = if matches!(step, Step::Encode(_)) {
                        &ENCODE
                    } else {
                        decode
                    };
                    let (q, s) = table[3 * qubit as usize + digits[slot] as usize];
                    address = (address & !(1 << bit_pos)) | ((q as usize) << bit_pos);
                    digits[slot] = s;
                }
            }
            Step::BusCnot => {
                if let Some(leaf) = self.reachable(&digits, self.n) {
                    if memory.get(leaf.index) {
                        bus ^= 1;
                    }
                }
            }
        }
        self.join(address, &digits, bus)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    geometry: TreeGeometry,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(g: TreeGeometry) -> Result<Self> {
        let layout = Layout::new(g)?;
        Ok(Self {
            geometry: g,
            amps: vec![Complex64::new(0.0, 0.0); layout.dim()],
        })
    }

    /// `Σ ψ_j |j⟩ ⊗ |wait…wait⟩ ⊗ |0⟩`.
    pub fn initial(q: &QuerySuperposition) -> Result<Self> {
        let mut sv = Self::zero(q.geometry())?;
        for &(amp, addr) in q.branches() {
            let i = sv.index(cell_index(&addr) as usize, None, false);
            sv.amps[i] = amp;
        }
        Ok(sv)
    }

    fn layout(&self) -> Layout {
        Layout::new(self.geometry).expect("geometry checked on construction")
    }

    pub fn geometry(&self) -> TreeGeometry {
        self.geometry
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(Complex64::norm_sqr).sum()
    }

    /// Basis index of `|address⟩|tree⟩|bus⟩`; `tree = None` means all `Wait`.
    pub fn index(&self, address: usize, tree: Option<&[u8]>, bus: bool) -> usize {
        let layout = self.layout();
        let waits = vec![WAIT; layout.nodes];
        layout.join(address, tree.unwrap_or(&waits), bus as u8)
    }

    pub fn amplitude(&self, address: usize, tree: Option<&[u8]>, bus: bool) -> Complex64 {
        self.amps[self.index(address, tree, bus)]
    }

    /// `⟨wait…wait| ρ_tree |wait…wait⟩` for the reduced state of the tree.
    pub fn tree_wait_fidelity(&self) -> f64 {
        let layout = self.layout();
        let waits = vec![WAIT; layout.nodes];
        (0..1usize << layout.n)
            .flat_map(|a| [0u8, 1].map(|bus| layout.join(a, &waits, bus)))
            .map(|i| self.amps[i].norm_sqr())
            .sum()
    }

    /// Applies one protocol step as a basis permutation.
    pub fn apply(&self, step: Step, memory: &MemoryArray) -> Result<StateVector> {
        memory.check_geometry(self.geometry)?;
        let layout = self.layout();
        let decode = decode_table();
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        for (i, &a) in self.amps.iter().enumerate() {
            if a != Complex64::new(0.0, 0.0) {
                out[layout.image(i, step, memory, &decode)] += a;
            }
        }
        Ok(StateVector {
            geometry: self.geometry,
            amps: out,
        })
    }
}

/// Checks that `step` maps the whole basis bijectively onto itself.
pub fn step_is_permutation(g: TreeGeometry, step: Step, memory: &MemoryArray) -> Result<bool> {
    let layout = Layout::new(g)?;
    let decode = decode_table();
    let mut hit = vec![false; layout.dim()];
    for i in 0..layout.dim() {
        let j = layout.image(i, step, memory, &decode);
        if hit[j] {
            return Ok(false);
        }
        hit[j] = true;
    }
    Ok(true)
}

/// Runs the whole memory call on the dense state.
pub fn oracle_full_query(q: &QuerySuperposition, m: &MemoryArray) -> Result<StateVector> {
    let mut sv = StateVector::initial(q)?;
    for step in protocol_steps(q.geometry().n()) {
        sv = sv.apply(step, m)?;
    }
    Ok(sv)
}

/// Dense state after all address bits are carved, before the bus is injected.
pub fn oracle_carved_state(q: &QuerySuperposition) -> Result<StateVector> {
    let m = MemoryArray::zeros(q.geometry());
    let mut sv = StateVector::initial(q)?;
    for k in 0..q.geometry().n() {
        sv = sv.apply(Step::Encode(k), &m)?;
    }
    Ok(sv)
}

/// Largest absolute amplitude difference between the embedded outcome and `sv`.
pub fn oracle_compare(outcome: &QueryOutcome, sv: &StateVector) -> Result<f64> {
    if outcome.geometry != sv.geometry {
        return Err(QramError::Dimension {
            what: "address bits",
            expected: sv.geometry.n() as u64,
            found: outcome.geometry.n() as u64,
        });
    }
    let mut diff = sv.amps.clone();
    for p in &outcome.pairs {
        let i = sv.index(cell_index(&p.address) as usize, None, p.data_bit);
        diff[i] -= p.amplitude;
    }
    Ok(diff.iter().map(|d| d.norm()).fold(0.0, f64::max))
}

/// Density matrix over an explicit list of basis states.
///
/// Full dephasing maps `|x⟩⟨y|` to a multiple of itself, so the span of the
/// pure state's support is invariant and the channel can be applied there
/// without approximation.
#[derive(Debug, Clone)]
struct SupportDensity {
    basis: Vec<usize>,
    rho: Vec<Complex64>,
}

impl SupportDensity {
    fn pure(amps: &[Complex64]) -> (Self, Vec<Complex64>) {
        let basis: Vec<usize> = (0..amps.len())
            .filter(|&i| amps[i] != Complex64::new(0.0, 0.0))
            .collect();
        let psi: Vec<Complex64> = basis.iter().map(|&i| amps[i]).collect();
        let d = basis.len();
        let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
        for i in 0..d {
            for j in 0..d {
                rho[i * d + j] = psi[i] * psi[j].conj();
            }
        }
        (Self { basis, rho }, psi)
    }

    /// `ρ → Σ_s P_s ρ P_s` with `P_s` projecting the element onto level `s`.
    fn dephase(&mut self, levels: u8, level_of: impl Fn(usize) -> u8) {
        let d = self.basis.len();
        let labels: Vec<u8> = self.basis.iter().map(|&b| level_of(b)).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); d * d];
        for s in 0..levels {
            let proj: Vec<f64> = labels
                .iter()
                .map(|&l| if l == s { 1.0 } else { 0.0 })
                .collect();
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += proj[i] * self.rho[i * d + j] * proj[j];
                }
            }
        }
        self.rho = out;
    }

    fn overlap(&self, psi: &[Complex64]) -> f64 {
        let d = psi.len();
        let mut f = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                f += psi[i].conj() * self.rho[i * d + j] * psi[j];
            }
        }
        f.re
    }
}

/// Dense switch register `Σ ψ_j |j⟩ ⊗ |switches(j)⟩` built by fanning each
/// address qubit out to its level with CNOTs. Switch `(k, c)` is bit
/// `N - 2 - linear(k, c)` of the switch index (first switch most significant).
fn fanout_dense_state(q: &QuerySuperposition) -> Result<(Vec<Complex64>, usize)> {
    let g = q.geometry();
    if g.n() > MAX_FANOUT_ORACLE_BITS {
        return Err(QramError::Capacity {
            n: g.n(),
            max: MAX_FANOUT_ORACLE_BITS,
        });
    }
    let n = g.n() as usize;
    let switches = g.nodes() as usize;
    let sw_dim = 1usize << switches;
    let mut amps = vec![Complex64::new(0.0, 0.0); (1 << n) * sw_dim];
    for &(amp, addr) in q.branches() {
        amps[cell_index(&addr) as usize * sw_dim] = amp;
    }
    for sw in g.all_nodes() {
        let control = n - 1 - sw.level as usize;
        let target = switches - 1 - sw.linear() as usize;
        let mut next = vec![Complex64::new(0.0, 0.0); amps.len()];
        for (i, &a) in amps.iter().enumerate() {
            let (address, s) = (i / sw_dim, i % sw_dim);
            let flipped = if (address >> control) & 1 == 1 {
                s ^ (1 << target)
            } else {
                s
            };
            next[address * sw_dim + flipped] += a;
        }
        amps = next;
    }
    Ok((amps, sw_dim))
}

/// Fidelity of the mid-protocol state after fully dephasing `d`, computed with
/// an explicit density matrix and Kraus projectors.
pub fn oracle_dephasing_fidelity(q: &QuerySuperposition, d: &DephasedSet) -> Result<f64> {
    let g = q.geometry();
    for e in d.elements() {
        g.check_node(e)?;
    }
    match d.architecture {
        Architecture::BucketBrigade => {
            let sv = oracle_carved_state(q)?;
            let layout = sv.layout();
            let (mut rho, psi) = SupportDensity::pure(&sv.amps);
            for node in d.elements() {
                let slot = node.linear() as usize;
                rho.dephase(3, |b| layout.split(b).1[slot]);
            }
            Ok(rho.overlap(&psi))
        }
        Architecture::Fanout => {
            let (amps, sw_dim) = fanout_dense_state(q)?;
            let switches = g.nodes() as usize;
            let (mut rho, psi) = SupportDensity::pure(&amps);
            for sw in d.elements() {
                let target = switches - 1 - sw.linear() as usize;
                rho.dephase(2, |b| ((b % sw_dim) >> target & 1) as u8);
            }
            Ok(rho.overlap(&psi))
        }
    }
}
