//! Quantum RAM addressing laboratory.
//!
//! Simulates a memory call `Σ ψ_j |j⟩ → Σ ψ_j |j⟩|D_j⟩` on two architectures:
//! the bucket-brigade tree of qutrit routers ([`bucket_brigade`]) and the
//! conventional fanout design where each address qubit drives a whole tree
//! level of switches ([`fanout`]). [`noise`] computes fidelities of the
//! mid-protocol states under full dephasing, [`resources`] counts switch
//! activations, interactions and entangled elements, and [`oracle`] is a dense
//! reference simulator for trees of up to three levels.

pub mod bucket_brigade;
pub mod cli;
pub mod error;
pub mod fanout;
pub mod model;
pub mod noise;
pub mod oracle;
pub mod resources;
pub mod rng;

pub use error::{QramError, Result};
pub use model::{
    cell_index, make_query, path_of, Address, Direction, MemoryArray, NodeId, NodeState,
    OutcomePair, QueryOutcome, QuerySuperposition, SwitchId, TreeGeometry,
};
