//! Per-call resource counters for both architectures.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::bucket_brigade::{carve_routes, BucketBrigade, InteractionCounting};
use crate::error::Result;
use crate::fanout::activated_switch_count;
use crate::model::{Address, MemoryArray, NodeId, NodeState, QuerySuperposition, TreeGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ResourceReport {
    pub n: u32,
    #[serde(rename = "N")]
    pub cells: u64,
    pub r: u64,
    pub bb_interactions: u64,
    pub bb_active_nodes: u64,
    pub bb_entangled_nodes: u64,
    pub fanout_activations: u64,
    pub fanout_entangled_switches: u64,
}

/// Two-body interactions of one bucket-brigade call, measured by running the
/// instrumented simulator. The count does not depend on the query or memory.
pub fn bb_interaction_count(g: TreeGeometry) -> Result<u64> {
    bb_interaction_count_with(g, InteractionCounting::default())
}

pub fn bb_interaction_count_with(g: TreeGeometry, counting: InteractionCounting) -> Result<u64> {
    let q = QuerySuperposition::single(Address::new(0, g.n())?)?;
    let run = BucketBrigade::default()
        .with_counting(counting)
        .run(&q, &MemoryArray::zeros(g))?;
    Ok(run.interactions)
}

/// Per carved node: how many branches pass through it and in which direction.
fn carved_tally(q: &QuerySuperposition) -> Result<BTreeMap<NodeId, (u64, u64)>> {
    let s = carve_routes(q)?;
    let mut tally: BTreeMap<NodeId, (u64, u64)> = BTreeMap::new();
    for b in s.branches() {
        for (node, dir) in b.carved_nodes() {
            let entry = tally.entry(node).or_default();
            match NodeState::from(dir) {
                NodeState::Left => entry.0 += 1,
                _ => entry.1 += 1,
            }
        }
    }
    Ok(tally)
}

/// Size of the union of carved routes.
pub fn active_node_count(q: &QuerySuperposition) -> Result<u64> {
    Ok(carved_tally(q)?.len() as u64)
}

/// Nodes whose state is not the same in every branch.
pub fn entangled_node_count(q: &QuerySuperposition) -> Result<u64> {
    let r = q.len() as u64;
    Ok(carved_tally(q)?
        .values()
        .filter(|&&(left, right)| left + right < r || (left > 0 && right > 0))
        .count() as u64)
}

/// Switch copies whose value is not the same in every branch.
pub fn fanout_entangled_switch_count(q: &QuerySuperposition) -> u64 {
    let n = q.geometry().n();
    let first = q.branches()[0].1;
    (0..n)
        .filter(|&k| q.branches().iter().any(|(_, a)| a.bit(k) != first.bit(k)))
        .map(|k| 1u64 << k)
        .sum()
}

pub fn resource_report(q: &QuerySuperposition) -> Result<ResourceReport> {
    let g = q.geometry();
    Ok(ResourceReport {
        n: g.n(),
        cells: g.cells(),
        r: q.len() as u64,
        bb_interactions: bb_interaction_count(g)?,
        bb_active_nodes: active_node_count(q)?,
        bb_entangled_nodes: entangled_node_count(q)?,
        fanout_activations: activated_switch_count(g),
        fanout_entangled_switches: fanout_entangled_switch_count(q),
    })
}
