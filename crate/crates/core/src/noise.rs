//! Full-dephasing noise on tree elements and the resulting state fidelity.
//!
//! A dephased element loses all coherence between its basis states, so two
//! branches of the mid-protocol state stay coherent only if they agree on every
//! dephased element. The fidelity `⟨ψ|ρ|ψ⟩` is therefore the sum of
//! `|ψ_j|²|ψ_j'|²` over agreeing branch pairs.
//!
//! For the bucket-brigade the pair structure comes from the carved routes: two
//! routes that split at node `w` (level `L`) disagree exactly on `w` and on
//! their own nodes below `w`, `1 + 2(n - 1 - L)` nodes in total. The exact
//! evaluators below walk the trie of carved routes instead of enumerating
//! pairs. For the fanout architecture a dephased switch at level `k` separates
//! branches whose bit `j_k` differs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bucket_brigade::{carve_routes, CarvedState};
use crate::error::{QramError, Result};
use crate::model::{NodeId, QuerySuperposition, TreeGeometry};
use crate::rng::{substream, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Fanout,
    BucketBrigade,
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::Fanout => "fanout",
            Architecture::BucketBrigade => "bucket-brigade",
        })
    }
}

impl FromStr for Architecture {
    type Err = QramError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fanout" => Ok(Architecture::Fanout),
            "bucket-brigade" | "bb" => Ok(Architecture::BucketBrigade),
            other => Err(QramError::Parse(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Elements (switch copies or qutrit nodes) that suffer complete dephasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DephasedSet {
    pub architecture: Architecture,
    elements: BTreeSet<NodeId>,
}

impl DephasedSet {
    pub fn new(architecture: Architecture, elements: impl IntoIterator<Item = NodeId>) -> Self {
        Self {
            architecture,
            elements: elements.into_iter().collect(),
        }
    }

    pub fn empty(architecture: Architecture) -> Self {
        Self::new(architecture, [])
    }

    pub fn insert(&mut self, element: NodeId) -> bool {
        self.elements.insert(element)
    }

    pub fn elements(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.elements.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Linear ids in increasing order.
    fn linear_ids(&self) -> Vec<u64> {
        self.elements.iter().map(NodeId::linear).collect()
    }

    fn validate(&self, g: TreeGeometry, expected: Architecture) -> Result<()> {
        if self.architecture != expected {
            return Err(QramError::Validation(format!(
                "dephased set targets {} elements, expected {expected}",
                self.architecture
            )));
        }
        self.elements.iter().try_for_each(|&e| g.check_node(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Each element is dephased independently with probability ε.
    #[default]
    Independent,
    /// Exactly `⌊εM⌋` elements, chosen uniformly without replacement.
    FixedFraction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    epsilon: f64,
    pub seed: u64,
    trials: u64,
    pub mode: SamplingMode,
}

impl NoiseSpec {
    pub fn new(epsilon: f64, seed: u64, trials: u64) -> Result<Self> {
        check_rate(epsilon)?;
        if trials == 0 {
            return Err(QramError::Validation(
                "at least one trial is required".into(),
            ));
        }
        Ok(Self {
            epsilon,
            seed,
            trials,
            mode: SamplingMode::Independent,
        })
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }
}

fn check_rate(epsilon: f64) -> Result<()> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(QramError::InvalidRate(epsilon))
    }
}

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let count = values.len() as f64;
        let mean = values.iter().sum::<f64>() / count;
        let stderr = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0);
            (var / count).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, Copy)]
enum Child {
    Empty,
    Leaf(f64),
    Inner(usize),
}

#[derive(Debug, Clone)]
struct TrieNode {
    node: NodeId,
    left: Child,
    right: Child,
}

/// Union of the carved routes, children stored before their parents.
#[derive(Debug, Clone)]
struct RouteTrie {
    n: u32,
    nodes: Vec<TrieNode>,
    by_linear: Vec<(u64, usize)>,
    diagonal: f64,
}

impl RouteTrie {
    fn from_carved(s: &CarvedState) -> Self {
        let n = s.geometry().n();
        let mut routes: Vec<(u64, f64)> = s
            .branches()
            .iter()
            .map(|b| {
                let cell = b
                    .route()
                    .iter()
                    .fold(0u64, |acc, d| 2 * acc + d.bit() as u64);
                (cell, b.amplitude.norm_sqr())
            })
            .collect();
        routes.sort_by_key(|&(cell, _)| cell);
        let diagonal = routes.iter().map(|&(_, p)| p * p).sum();
        let mut trie = RouteTrie {
            n,
            nodes: Vec::new(),
            by_linear: Vec::new(),
            diagonal,
        };
        trie.build(NodeId::ROOT, &routes);
        trie.by_linear = trie
            .nodes
            .iter()
            .enumerate()
            .map(|(i, t)| (t.node.linear(), i))
            .collect();
        trie.by_linear.sort_unstable();
        trie
    }

    fn build(&mut self, node: NodeId, routes: &[(u64, f64)]) -> Child {
        if routes.is_empty() {
            return Child::Empty;
        }
        if node.level == self.n {
            debug_assert_eq!(routes.len(), 1);
            return Child::Leaf(routes[0].1);
        }
        let shift = self.n - 1 - node.level;
        let split = routes.partition_point(|&(cell, _)| (cell >> shift) & 1 == 0);
        let left = self.build(node.child(crate::model::Direction::Left), &routes[..split]);
        let right = self.build(node.child(crate::model::Direction::Right), &routes[split..]);
        self.nodes.push(TrieNode { node, left, right });
        Child::Inner(self.nodes.len() - 1)
    }

    /// Marks trie nodes present in a sorted list of linear ids.
    fn flags(&self, sorted_linear: &[u64]) -> Vec<bool> {
        let mut flags = vec![false; self.nodes.len()];
        let mut it = sorted_linear.iter().peekable();
        for &(lin, idx) in &self.by_linear {
            while it.next_if(|&&x| x < lin).is_some() {}
            if it.peek() == Some(&&lin) {
                flags[idx] = true;
            }
        }
        flags
    }

    fn fidelity(&self, dephased: &[bool]) -> f64 {
        let mut clean = vec![0.0; self.nodes.len()];
        let value = |c: Child, clean: &[f64]| match c {
            Child::Empty => 0.0,
            Child::Leaf(p) => p,
            Child::Inner(i) => clean[i],
        };
        let mut cross = 0.0;
        for (i, t) in self.nodes.iter().enumerate() {
            if dephased[i] {
                continue;
            }
            let (cl, cr) = (value(t.left, &clean), value(t.right, &clean));
            cross += cl * cr;
            clean[i] = cl + cr;
        }
        self.diagonal + 2.0 * cross
    }

    fn expected(&self, epsilon: f64) -> f64 {
        let keep = 1.0 - epsilon;
        let mut mass = vec![0.0; self.nodes.len()];
        let value = |c: Child, mass: &[f64]| match c {
            Child::Empty => 0.0,
            Child::Leaf(p) => p,
            Child::Inner(i) => mass[i],
        };
        let mut cross = 0.0;
        for (i, t) in self.nodes.iter().enumerate() {
            let (ml, mr) = (value(t.left, &mass), value(t.right, &mass));
            let distance = 1 + 2 * (self.n - 1 - t.node.level);
            cross += ml * mr * keep.powi(distance as i32);
            mass[i] = ml + mr;
        }
        self.diagonal + 2.0 * cross
    }
}

/// Branch weights keyed by cell, for the fanout switch register.
#[derive(Debug, Clone)]
struct SwitchRegister {
    n: u32,
    entries: Vec<(u64, f64)>,
}

impl SwitchRegister {
    fn new(q: &QuerySuperposition) -> Self {
        Self {
            n: q.geometry().n(),
            entries: q
                .branches()
                .iter()
                .map(|(a, addr)| (addr.value(), a.norm_sqr()))
                .collect(),
        }
    }

    /// Fidelity when the levels in `level_mask` (bit `k` = level `k`) have a dephased switch.
    fn fidelity(&self, level_mask: u64) -> f64 {
        if level_mask == 0 {
            return 1.0;
        }
        let value_mask = (0..self.n)
            .filter(|k| (level_mask >> k) & 1 == 1)
            .fold(0u64, |acc, k| acc | 1 << (self.n - 1 - k));
        let mut keyed: Vec<(u64, f64)> = self
            .entries
            .iter()
            .map(|&(cell, p)| (cell & value_mask, p))
            .collect();
        keyed.sort_by_key(|&(key, _)| key);
        keyed
            .chunk_by(|a, b| a.0 == b.0)
            .map(|group| group.iter().map(|&(_, p)| p).sum::<f64>().powi(2))
            .sum()
    }

    fn level_mask(linear_ids: &[u64]) -> u64 {
        linear_ids
            .iter()
            .fold(0u64, |acc, &id| acc | 1 << NodeId::from_linear(id).level)
    }

    fn expected(&self, epsilon: f64) -> f64 {
        let keep = 1.0 - epsilon;
        let level_weight: Vec<f64> = (0..self.n).map(|k| keep.powf((1u64 << k) as f64)).collect();
        let r = self.entries.len() as u64;
        let cells = 1u64 << self.n;
        if self.n <= 20 && r.saturating_mul(r) > cells * self.n as u64 {
            // Apply ⊗_k [[1, w_k], [w_k, 1]] to the dense weight vector.
            let mut dense = vec![0.0; cells as usize];
            for &(cell, p) in &self.entries {
                dense[cell as usize] = p;
            }
            let weights = dense.clone();
            for (k, &w) in level_weight.iter().enumerate() {
                let bit = 1usize << (self.n as usize - 1 - k);
                for x in 0..cells as usize {
                    if x & bit == 0 {
                        let (u, v) = (dense[x], dense[x | bit]);
                        dense[x] = u + w * v;
                        dense[x | bit] = w * u + v;
                    }
                }
            }
            weights.iter().zip(&dense).map(|(p, kp)| p * kp).sum()
        } else {
            let mut total = 0.0;
            for &(a, pa) in &self.entries {
                for &(b, pb) in &self.entries {
                    let diff = a ^ b;
                    let factor: f64 = (0..self.n)
                        .filter(|&k| (diff >> (self.n - 1 - k)) & 1 == 1)
                        .map(|k| level_weight[k as usize])
                        .product();
                    total += pa * pb * factor;
                }
            }
            total
        }
    }
}

pub fn fanout_dephasing_fidelity(q: &QuerySuperposition, d: &DephasedSet) -> Result<f64> {
    d.validate(q.geometry(), Architecture::Fanout)?;
    let mask = SwitchRegister::level_mask(&d.linear_ids());
    Ok(SwitchRegister::new(q).fidelity(mask))
}

/// Fidelity of the fully carved bucket-brigade state after dephasing `d`.
pub fn bb_dephasing_fidelity(q: &QuerySuperposition, d: &DephasedSet) -> Result<f64> {
    d.validate(q.geometry(), Architecture::BucketBrigade)?;
    if d.is_empty() {
        return Ok(1.0);
    }
    let trie = RouteTrie::from_carved(&carve_routes(q)?);
    Ok(trie.fidelity(&trie.flags(&d.linear_ids())))
}

pub fn dephasing_fidelity(q: &QuerySuperposition, d: &DephasedSet) -> Result<f64> {
    match d.architecture {
        Architecture::Fanout => fanout_dephasing_fidelity(q, d),
        Architecture::BucketBrigade => bb_dephasing_fidelity(q, d),
    }
}

/// Number of nodes whose state differs between two branches of the carved state.
pub fn config_distance(q: &QuerySuperposition, a: usize, b: usize) -> Result<u32> {
    carve_routes(q)?.config_distance(a, b)
}

/// Exact mean fidelity under independent rate-ε dephasing of every node.
pub fn bb_expected_fidelity(q: &QuerySuperposition, epsilon: f64) -> Result<f64> {
    check_rate(epsilon)?;
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    Ok(RouteTrie::from_carved(&carve_routes(q)?).expected(epsilon))
}

/// Exact mean fidelity under independent rate-ε dephasing of every switch copy.
pub fn fanout_expected_fidelity(q: &QuerySuperposition, epsilon: f64) -> Result<f64> {
    check_rate(epsilon)?;
    if epsilon == 0.0 {
        return Ok(1.0);
    }
    Ok(SwitchRegister::new(q).expected(epsilon))
}

pub fn expected_fidelity(arch: Architecture, q: &QuerySuperposition, epsilon: f64) -> Result<f64> {
    match arch {
        Architecture::Fanout => fanout_expected_fidelity(q, epsilon),
        Architecture::BucketBrigade => bb_expected_fidelity(q, epsilon),
    }
}

/// Exact mean fidelity when exactly one element, chosen uniformly, is dephased.
pub fn single_element_mean_fidelity(arch: Architecture, q: &QuerySuperposition) -> Result<f64> {
    let g = q.geometry();
    let total = g.nodes() as f64;
    match arch {
        Architecture::Fanout => {
            let reg = SwitchRegister::new(q);
            Ok((0..g.n())
                .map(|k| (1u64 << k) as f64 * reg.fidelity(1 << k))
                .sum::<f64>()
                / total)
        }
        Architecture::BucketBrigade => {
            let trie = RouteTrie::from_carved(&carve_routes(q)?);
            let mut flags = vec![false; trie.nodes.len()];
            let mut sum = (g.nodes() - trie.nodes.len() as u64) as f64;
            for i in 0..trie.nodes.len() {
                flags[i] = true;
                sum += trie.fidelity(&flags);
                flags[i] = false;
            }
            Ok(sum / total)
        }
    }
}

enum Evaluator {
    BucketBrigade(RouteTrie),
    Fanout(SwitchRegister),
}

impl Evaluator {
    fn new(arch: Architecture, q: &QuerySuperposition) -> Result<Self> {
        Ok(match arch {
            Architecture::BucketBrigade => {
                Evaluator::BucketBrigade(RouteTrie::from_carved(&carve_routes(q)?))
            }
            Architecture::Fanout => Evaluator::Fanout(SwitchRegister::new(q)),
        })
    }

    fn fidelity(&self, sorted_linear: &[u64]) -> f64 {
        if sorted_linear.is_empty() {
            return 1.0;
        }
        match self {
            Evaluator::BucketBrigade(trie) => trie.fidelity(&trie.flags(sorted_linear)),
            Evaluator::Fanout(reg) => reg.fidelity(SwitchRegister::level_mask(sorted_linear)),
        }
    }
}

/// Draws the linear ids of the dephased elements out of `m`, sorted.
pub fn sample_dephased<R: Rng + ?Sized>(
    rng: &mut R,
    m: u64,
    epsilon: f64,
    mode: SamplingMode,
) -> Vec<u64> {
    match mode {
        SamplingMode::Independent => {
            if epsilon <= 0.0 {
                return Vec::new();
            }
            if epsilon >= 1.0 {
                return (0..m).collect();
            }
            // Gaps between successive Bernoulli(ε) successes are geometric.
            let log_keep = (1.0 - epsilon).ln();
            let mut out = Vec::new();
            let mut next = 0u64;
            loop {
                let u: f64 = rng.random();
                let gap = ((1.0 - u).ln() / log_keep).floor();
                if gap >= (m - next) as f64 {
                    break;
                }
                next += gap as u64;
                out.push(next);
                next += 1;
                if next >= m {
                    break;
                }
            }
            out
        }
        SamplingMode::FixedFraction => {
            let count = ((epsilon * m as f64) + 1e-9).floor().min(m as f64) as usize;
            let mut out: Vec<u64> = rand::seq::index::sample(rng, m as usize, count)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            out.sort_unstable();
            out
        }
    }
}

/// Monte Carlo estimate of the mean fidelity over random dephased sets.
///
/// Trial `t` draws from substream `(seed, Noise, t)`, so results do not depend
/// on how trials are scheduled across threads.
pub fn monte_carlo_fidelity(
    arch: Architecture,
    q: &QuerySuperposition,
    spec: &NoiseSpec,
) -> Result<Estimate> {
    let evaluator = Evaluator::new(arch, q)?;
    let m = q.geometry().nodes();
    let values: Vec<f64> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(spec.seed, StreamTag::Noise, t);
            let set = sample_dephased(&mut rng, m, spec.epsilon, spec.mode);
            evaluator.fidelity(&set)
        })
        .collect();
    Ok(Estimate::from_samples(&values))
}

/// Fidelity for a fixed dephased set, averaged over `samples` random queries
/// with `r` branches and Haar-random amplitudes.
pub fn haar_mean_fidelity(
    g: TreeGeometry,
    r: usize,
    d: &DephasedSet,
    samples: u64,
    seed: u64,
) -> Result<Estimate> {
    if samples == 0 {
        return Err(QramError::Validation(
            "at least one sample is required".into(),
        ));
    }
    let values = (0..samples)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, StreamTag::Haar, t);
            let q = QuerySuperposition::random(g, r, &mut rng)?;
            dephasing_fidelity(&q, d)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_query;
    use num_complex::Complex64;

    fn g(n: u32) -> TreeGeometry {
        TreeGeometry::new(n).unwrap()
    }

    fn pair(a: &str, b: &str) -> QuerySuperposition {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        make_query(&[(h, a), (h, b)], g(a.len() as u32), false).unwrap()
    }

    fn bb(nodes: &[(u32, u64)]) -> DephasedSet {
        DephasedSet::new(
            Architecture::BucketBrigade,
            nodes.iter().map(|&(l, i)| NodeId::new(l, i)),
        )
    }

    fn fan(nodes: &[(u32, u64)]) -> DephasedSet {
        DephasedSet::new(
            Architecture::Fanout,
            nodes.iter().map(|&(l, i)| NodeId::new(l, i)),
        )
    }

    #[test]
    fn fanout_single_switch_halves_fidelity() {
        for n in 2..=6 {
            let q = QuerySuperposition::uniform(g(n)).unwrap();
            for sw in g(n).all_nodes() {
                let f = fanout_dephasing_fidelity(&q, &fan(&[(sw.level, sw.index)])).unwrap();
                assert!((f - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn fanout_k_levels() {
        let q = QuerySuperposition::uniform(g(5)).unwrap();
        assert_eq!(fanout_dephasing_fidelity(&q, &fan(&[])).unwrap(), 1.0);
        for k in 1..=5u32 {
            let d = fan(&(0..k).map(|l| (l, 0)).collect::<Vec<_>>());
            let f = fanout_dephasing_fidelity(&q, &d).unwrap();
            assert!((f - 0.5f64.powi(k as i32)).abs() < 1e-14);
        }
        // Two switches on the same level count once.
        let d = fan(&[(2, 0), (2, 3)]);
        assert!((fanout_dephasing_fidelity(&q, &d).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn bb_examples() {
        let single = QuerySuperposition::single("0110".parse().unwrap()).unwrap();
        let all: Vec<(u32, u64)> = g(4).all_nodes().map(|v| (v.level, v.index)).collect();
        assert_eq!(bb_dephasing_fidelity(&single, &bb(&all)).unwrap(), 1.0);

        let f = bb_dephasing_fidelity(&pair("00", "11"), &bb(&[(0, 0)])).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        let f = bb_dephasing_fidelity(&pair("00", "01"), &bb(&[(0, 0)])).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        // (1,1) is Wait in both branches of {00, 01}.
        let f = bb_dephasing_fidelity(&pair("00", "01"), &bb(&[(1, 1)])).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_sets_rejected() {
        let q = QuerySuperposition::uniform(g(2)).unwrap();
        assert!(matches!(
            bb_dephasing_fidelity(&q, &bb(&[(2, 0)])),
            Err(QramError::Index(_))
        ));
        assert!(matches!(
            fanout_dephasing_fidelity(&q, &fan(&[(1, 2)])),
            Err(QramError::Index(_))
        ));
        assert!(bb_dephasing_fidelity(&q, &fan(&[])).is_err());
    }

    #[test]
    fn config_distance_examples() {
        let q = QuerySuperposition::single("010".parse().unwrap()).unwrap();
        assert_eq!(config_distance(&q, 0, 0).unwrap(), 0);
        assert_eq!(config_distance(&pair("00", "11"), 0, 1).unwrap(), 3);
        assert_eq!(config_distance(&pair("00", "01"), 0, 1).unwrap(), 1);
        assert!(config_distance(&q, 0, 1).is_err());
    }

    #[test]
    fn expected_fidelity_examples() {
        let q = pair("00", "11");
        assert_eq!(bb_expected_fidelity(&q, 0.0).unwrap(), 1.0);
        for eps in [0.01, 0.1, 0.5, 0.9] {
            let f = bb_expected_fidelity(&q, eps).unwrap();
            assert!((f - (0.5 + 0.5 * (1.0 - eps).powi(3))).abs() < 1e-14);
        }
        let q = QuerySuperposition::uniform(g(3)).unwrap();
        let diag: f64 = q.weights().iter().map(|p| p * p).sum();
        assert!((bb_expected_fidelity(&q, 1.0).unwrap() - diag).abs() < 1e-15);
        assert!(matches!(
            bb_expected_fidelity(&q, 1.5),
            Err(QramError::InvalidRate(_))
        ));
        assert!(bb_expected_fidelity(&q, -0.1).is_err());
    }

    #[test]
    fn fanout_expected_uniform_product_form() {
        // Under a uniform query the address bits are independent, so the
        // expectation factorizes over levels.
        for n in 1..=8 {
            let q = QuerySuperposition::uniform(g(n)).unwrap();
            for eps in [0.01f64, 0.05, 0.3] {
                let product: f64 = (0..n)
                    .map(|k| 0.5 + 0.5 * (1.0 - eps).powf((1u64 << k) as f64))
                    .product();
                let f = fanout_expected_fidelity(&q, eps).unwrap();
                assert!(
                    (f - product).abs() < 1e-12,
                    "n={n} eps={eps}: {f} vs {product}"
                );
            }
        }
    }

    #[test]
    fn fanout_expected_dense_and_pair_routes_agree() {
        let mut rng = substream(11, StreamTag::Query, 0);
        for r in [2usize, 5, 16] {
            let q = QuerySuperposition::random(g(4), r, &mut rng).unwrap();
            let reg = SwitchRegister::new(&q);
            let dense = reg.expected(0.07);
            let pairs: f64 = q
                .branches()
                .iter()
                .flat_map(|&(a, x)| q.branches().iter().map(move |&(b, y)| (a, x, b, y)))
                .map(|(a, x, b, y)| {
                    let copies: u64 = (0..4)
                        .filter(|&k| x.bit(k) != y.bit(k))
                        .map(|k| 1u64 << k)
                        .sum();
                    a.norm_sqr() * b.norm_sqr() * 0.93f64.powi(copies as i32)
                })
                .sum();
            assert!((dense - pairs).abs() < 1e-13);
        }
    }

    #[test]
    fn independent_sampler_rate() {
        let mut rng = substream(5, StreamTag::Noise, 0);
        let m = 1000u64;
        let mut count = 0usize;
        for _ in 0..200 {
            let s = sample_dephased(&mut rng, m, 0.1, SamplingMode::Independent);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|&x| x < m));
            count += s.len();
        }
        let rate = count as f64 / (200.0 * m as f64);
        assert!((rate - 0.1).abs() < 0.005, "rate {rate}");
        assert!(sample_dephased(&mut rng, m, 0.0, SamplingMode::Independent).is_empty());
        assert_eq!(
            sample_dephased(&mut rng, m, 1.0, SamplingMode::Independent).len(),
            1000
        );
        assert_eq!(
            sample_dephased(&mut rng, 7, 1.0 / 7.0, SamplingMode::FixedFraction).len(),
            1
        );
    }

    #[test]
    fn monte_carlo_zero_rate() {
        let q = QuerySuperposition::uniform(g(3)).unwrap();
        for arch in [Architecture::Fanout, Architecture::BucketBrigade] {
            let est = monte_carlo_fidelity(arch, &q, &NoiseSpec::new(0.0, 1, 50).unwrap()).unwrap();
            assert_eq!(
                est,
                Estimate {
                    mean: 1.0,
                    stderr: 0.0
                }
            );
        }
        assert!(NoiseSpec::new(0.1, 0, 0).is_err());
        assert!(NoiseSpec::new(1.1, 0, 1).is_err());
    }

    #[test]
    fn monte_carlo_bb_pair() {
        let q = pair("00", "11");
        let spec = NoiseSpec::new(0.1, 2024, 100_000).unwrap();
        let est = monte_carlo_fidelity(Architecture::BucketBrigade, &q, &spec).unwrap();
        let exact = 0.5 + 0.5 * 0.9f64.powi(3);
        assert!((exact - 0.8645).abs() < 1e-12);
        assert!((est.mean - exact).abs() <= 3.0 * est.stderr, "{est:?}");
        let again = monte_carlo_fidelity(Architecture::BucketBrigade, &q, &spec).unwrap();
        assert_eq!(est, again);
    }

    #[test]
    fn monte_carlo_fanout_single_switch() {
        let q = QuerySuperposition::uniform(g(4)).unwrap();
        let spec = NoiseSpec::new(1.0 / 15.0, 3, 2000)
            .unwrap()
            .with_mode(SamplingMode::FixedFraction);
        let est = monte_carlo_fidelity(Architecture::Fanout, &q, &spec).unwrap();
        assert_eq!(est.mean, 0.5);
        assert_eq!(est.stderr, 0.0);
        assert_eq!(
            single_element_mean_fidelity(Architecture::Fanout, &q).unwrap(),
            0.5
        );
    }

    #[test]
    fn single_element_mean_bb_matches_enumeration() {
        let q = QuerySuperposition::uniform(g(3)).unwrap();
        let mean: f64 = g(3)
            .all_nodes()
            .map(|v| bb_dephasing_fidelity(&q, &bb(&[(v.level, v.index)])).unwrap())
            .sum::<f64>()
            / 7.0;
        let got = single_element_mean_fidelity(Architecture::BucketBrigade, &q).unwrap();
        assert!((got - mean).abs() < 1e-14);
    }

    #[test]
    fn haar_average_is_reproducible() {
        let d = fan(&[(0, 0)]);
        let a = haar_mean_fidelity(g(3), 8, &d, 64, 9).unwrap();
        let b = haar_mean_fidelity(g(3), 8, &d, 64, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.mean > 0.0 && a.mean <= 1.0);
    }
}
