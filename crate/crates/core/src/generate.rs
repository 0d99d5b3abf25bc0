//! Random test instances: general networks with a controllable fraction of
//! zero CPT entries, and two-layered deterministic networks whose observed
//! leaves make plain importance sampling reject almost every sample.
//!
//! Evidence is always drawn from a forward sample of the network itself, so
//! `P(e) > 0` holds by construction and the log-relative error against an
//! exact oracle is well defined.

use alloc::vec::Vec;

use crate::logprob::math;
use crate::model::{Assignment, BeliefNetwork, Evidence};
use crate::rng::RngStream;

/// Shape of a generated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub variable_count: usize,
    /// Domains are drawn uniformly from `2..=max_cardinality`.
    pub max_cardinality: u32,
    /// Approximate fraction of CPT entries forced to zero, in `[0, 0.9]`.
    pub zero_fraction: f64,
    pub evidence_count: usize,
}

/// Random DAG (each variable picks up to 3 earlier parents) with
/// Dirichlet-like CPT rows. Rows are never entirely zero.
pub fn random_network(params: &NetworkParams, seed: u64) -> (BeliefNetwork, Evidence) {
    assert!(params.variable_count > 0, "need at least one variable");
    assert!(params.max_cardinality >= 2, "domains must have size >= 2");
    assert!(
        (0.0..=0.9).contains(&params.zero_fraction),
        "zero_fraction must lie in [0, 0.9]"
    );
    assert!(
        params.evidence_count <= params.variable_count,
        "more evidence variables than variables"
    );

    let n = params.variable_count;
    let mut rng = RngStream::from_seed(seed);

    let cards: Vec<u32> = (0..n)
        .map(|_| 2 + rng.below(params.max_cardinality as usize - 1) as u32)
        .collect();

    let mut cpts = Vec::with_capacity(n);
    for child in 0..n {
        let limit = child.min(3);
        let parent_count = if limit == 0 { 0 } else { rng.below(limit + 1) };
        let mut pool: Vec<usize> = (0..child).collect();
        rng.shuffle(&mut pool);
        let mut parents: Vec<usize> = pool.into_iter().take(parent_count).collect();
        parents.sort_unstable();

        let child_card = cards[child] as usize;
        let rows: usize = parents.iter().map(|&p| cards[p] as usize).product();
        let mut table = Vec::with_capacity(rows * child_card);
        for _ in 0..rows {
            let mut row = alloc::vec![0.0f64; child_card];
            for slot in row.iter_mut() {
                *slot = exponential_draw(&mut rng);
            }
            if params.zero_fraction > 0.0 {
                for slot in row.iter_mut() {
                    if rng.next_f64() < params.zero_fraction {
                        *slot = 0.0;
                    }
                }
                if row.iter().all(|&w| w == 0.0) {
                    row[rng.below(child_card)] = 1.0;
                }
            }
            let total: f64 = row.iter().sum();
            for slot in row.iter_mut() {
                *slot /= total;
            }
            table.extend_from_slice(&row);
        }
        cpts.push((parents, table));
    }

    let bn = BeliefNetwork::new(cards, cpts).expect("generated network is valid");
    let e = forward_sampled_evidence(&bn, params.evidence_count, &mut rng);
    (bn, e)
}

/// Shape of a two-layered deterministic network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TwoLayerParams {
    pub roots: usize,
    pub leaves: usize,
    /// Each leaf depends on `1..=max_parents` distinct roots.
    pub max_parents: usize,
}

/// Binary roots with uniform priors feeding fully deterministic binary
/// leaves (every CPT entry 0 or 1). All leaves are observed, at values taken
/// from a forward sample so the evidence stays satisfiable.
pub fn two_layer_network(params: &TwoLayerParams, seed: u64) -> (BeliefNetwork, Evidence) {
    assert!(params.roots > 0 && params.leaves > 0);
    assert!(params.max_parents >= 1);

    let n = params.roots + params.leaves;
    let mut rng = RngStream::from_seed(seed);
    let cards = alloc::vec![2u32; n];

    let mut cpts = Vec::with_capacity(n);
    for _ in 0..params.roots {
        cpts.push((Vec::new(), alloc::vec![0.5, 0.5]));
    }
    for _ in 0..params.leaves {
        let parent_count = 1 + rng.below(params.max_parents.min(params.roots));
        let mut pool: Vec<usize> = (0..params.roots).collect();
        rng.shuffle(&mut pool);
        let mut parents: Vec<usize> = pool.into_iter().take(parent_count).collect();
        parents.sort_unstable();

        let rows = 1usize << parents.len();
        let mut table = Vec::with_capacity(rows * 2);
        for _ in 0..rows {
            if rng.below(2) == 0 {
                table.extend_from_slice(&[1.0, 0.0]);
            } else {
                table.extend_from_slice(&[0.0, 1.0]);
            }
        }
        cpts.push((parents, table));
    }

    let bn = BeliefNetwork::new(cards, cpts).expect("generated network is valid");
    let mut x = Assignment::new(n);
    forward_sample(&bn, &mut x, &mut rng);
    let pairs: Vec<(usize, u32)> = (params.roots..n)
        .map(|v| (v, x.get(v).unwrap()))
        .collect();
    let e = Evidence::from_pairs(&bn, &pairs).expect("leaf values are in range");
    (bn, e)
}

fn forward_sampled_evidence(bn: &BeliefNetwork, count: usize, rng: &mut RngStream) -> Evidence {
    let mut x = Assignment::new(bn.variable_count());
    forward_sample(bn, &mut x, rng);
    let mut vars: Vec<usize> = (0..bn.variable_count()).collect();
    rng.shuffle(&mut vars);
    let mut pairs: Vec<(usize, u32)> = vars
        .into_iter()
        .take(count)
        .map(|v| (v, x.get(v).unwrap()))
        .collect();
    pairs.sort_unstable();
    Evidence::from_pairs(bn, &pairs).expect("sampled values are in range")
}

fn forward_sample(bn: &BeliefNetwork, x: &mut Assignment, rng: &mut RngStream) {
    for &var in bn.topological_order() {
        let row = bn.cpt_row(var, x);
        let cpt = bn.cpt(var);
        let card = cpt.child_cardinality() as usize;
        let start = row * card;
        let weights = &cpt.table()[start..start + card];
        let value = rng.pick_weighted(weights, weights.iter().sum());
        x.set(var, value as u32);
    }
}

/// Exp(1) draw, strictly positive.
fn exponential_draw(rng: &mut RngStream) -> f64 {
    loop {
        let u = rng.next_f64();
        if u > 0.0 {
            return -math::ln_1p(-u);
        }
    }
}
