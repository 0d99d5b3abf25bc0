//! Exact computation of the probability of evidence on desk-scale networks.
//!
//! Two independent routes are provided: plain enumeration over the
//! non-evidence state space and variable elimination along a min-fill
//! order. Tests and acceptance criteria lean on their agreement, so the two
//! implementations deliberately share no factor machinery with the sampling
//! code.

use alloc::vec::Vec;

use crate::logprob::{LogProb, LogSumExp};
use crate::model::{Assignment, BeliefNetwork, Evidence};

/// Default cap on the enumerated state space (product of non-evidence
/// cardinalities).
pub const DEFAULT_STATE_CAP: u64 = 1 << 24;
/// Default cap on entries per intermediate factor in variable elimination.
pub const DEFAULT_FACTOR_CAP: u64 = 1 << 22;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExactError {
    #[error("state space of {states} configurations exceeds the cap of {cap}")]
    StateCapExceeded { states: u64, cap: u64 },
    #[error("intermediate factor of {entries} entries exceeds the cap of {cap}")]
    FactorCapExceeded { entries: u64, cap: u64 },
    #[error("elimination order is not a permutation of the non-evidence variables")]
    InvalidOrder,
}

/// `log P(e)` by summing `f(x)` over every completion of the evidence.
pub fn brute_force_pe(bn: &BeliefNetwork, e: &Evidence) -> Result<LogProb, ExactError> {
    brute_force_pe_capped(bn, e, DEFAULT_STATE_CAP)
}

pub fn brute_force_pe_capped(
    bn: &BeliefNetwork,
    e: &Evidence,
    cap: u64,
) -> Result<LogProb, ExactError> {
    let free: Vec<usize> = (0..bn.variable_count()).filter(|v| !e.contains(*v)).collect();
    let mut states: u64 = 1;
    for &v in &free {
        states = states
            .checked_mul(bn.cardinality(v) as u64)
            .filter(|&s| s <= cap)
            .ok_or(ExactError::StateCapExceeded {
                states: u64::MAX,
                cap,
            })?;
    }
    if states > cap {
        return Err(ExactError::StateCapExceeded { states, cap });
    }

    let mut x = Assignment::from_evidence(bn, e);
    for &v in &free {
        x.set(v, 0);
    }
    let mut acc = LogSumExp::new();
    loop {
        acc.push(bn.log_joint_unchecked(&x).ln());
        // Odometer over the free variables, last position fastest.
        let mut pos = free.len();
        loop {
            if pos == 0 {
                return Ok(LogProb::from_ln(acc.value()));
            }
            pos -= 1;
            let v = free[pos];
            let next = x.get(v).unwrap() + 1;
            if next < bn.cardinality(v) {
                x.set(v, next);
                break;
            }
            x.set(v, 0);
        }
    }
}

/// An elimination order over exactly the non-evidence variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EliminationOrder {
    order: Vec<usize>,
}

impl EliminationOrder {
    /// Validates that `order` is a permutation of the non-evidence variables.
    pub fn new(
        bn: &BeliefNetwork,
        e: &Evidence,
        order: Vec<usize>,
    ) -> Result<EliminationOrder, ExactError> {
        let mut seen = alloc::vec![false; bn.variable_count()];
        for &v in &order {
            if v >= bn.variable_count() || e.contains(v) || seen[v] {
                return Err(ExactError::InvalidOrder);
            }
            seen[v] = true;
        }
        let free_count = (0..bn.variable_count()).filter(|v| !e.contains(*v)).count();
        if order.len() != free_count {
            return Err(ExactError::InvalidOrder);
        }
        Ok(EliminationOrder { order })
    }

    pub fn variables(&self) -> &[usize] {
        &self.order
    }
}

/// Greedy min-fill order on the moralized graph of the evidence-reduced
/// network. Ties break toward the lowest variable index.
pub fn min_fill_order(bn: &BeliefNetwork, e: &Evidence) -> EliminationOrder {
    let n = bn.variable_count();
    let mut adjacent = alloc::vec![alloc::vec![false; n]; n];
    let connect = |a: usize, b: usize, adj: &mut Vec<Vec<bool>>| {
        if a != b {
            adj[a][b] = true;
            adj[b][a] = true;
        }
    };
    for child in 0..n {
        let mut scope: Vec<usize> = bn
            .cpt(child)
            .parents()
            .iter()
            .copied()
            .chain(core::iter::once(child))
            .filter(|v| !e.contains(*v))
            .collect();
        scope.sort_unstable();
        for i in 0..scope.len() {
            for j in (i + 1)..scope.len() {
                connect(scope[i], scope[j], &mut adjacent);
            }
        }
    }

    let mut remaining: Vec<usize> = (0..n).filter(|v| !e.contains(*v)).collect();
    let mut order = Vec::with_capacity(remaining.len());
    while !remaining.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (fill count, var)
        for &v in &remaining {
            let neighbors: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&u| u != v && adjacent[v][u])
                .collect();
            let mut fill = 0usize;
            for i in 0..neighbors.len() {
                for j in (i + 1)..neighbors.len() {
                    if !adjacent[neighbors[i]][neighbors[j]] {
                        fill += 1;
                    }
                }
            }
            // Strict less-than keeps the lowest index on ties because
            // `remaining` is scanned in ascending order.
            if best.map_or(true, |(bf, _)| fill < bf) {
                best = Some((fill, v));
            }
        }
        let (_, v) = best.expect("remaining is nonempty");
        let neighbors: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&u| u != v && adjacent[v][u])
            .collect();
        for i in 0..neighbors.len() {
            for j in (i + 1)..neighbors.len() {
                connect(neighbors[i], neighbors[j], &mut adjacent);
            }
        }
        remaining.retain(|&u| u != v);
        order.push(v);
    }
    EliminationOrder { order }
}

/// `log P(e)` by variable elimination along `order`.
pub fn variable_elimination_pe(
    bn: &BeliefNetwork,
    e: &Evidence,
    order: &EliminationOrder,
) -> Result<LogProb, ExactError> {
    variable_elimination_pe_capped(bn, e, order, DEFAULT_FACTOR_CAP)
}

pub fn variable_elimination_pe_capped(
    bn: &BeliefNetwork,
    e: &Evidence,
    order: &EliminationOrder,
    factor_cap: u64,
) -> Result<LogProb, ExactError> {
    let mut constant = LogProb::ONE;
    let mut factors: Vec<Factor> = Vec::new();
    for child in 0..bn.variable_count() {
        let f = Factor::from_cpt(bn, e, child);
        if f.scope.is_empty() {
            constant *= LogProb::from_ln(f.log_values[0]);
        } else {
            factors.push(f);
        }
    }

    for &var in order.variables() {
        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope.contains(&var));
        factors = rest;
        if touching.is_empty() {
            // Variable appears in no remaining factor; summing it out
            // multiplies by its cardinality (all factors mentioning it were
            // already eliminated).
            constant *= LogProb::from_ln(crate::logprob::math::ln(bn.cardinality(var) as f64));
            continue;
        }
        let mut product = touching[0].clone();
        for f in &touching[1..] {
            product = product.multiply(f, bn, factor_cap)?;
        }
        let reduced = product.sum_out(var, bn);
        if reduced.scope.is_empty() {
            constant *= LogProb::from_ln(reduced.log_values[0]);
        } else {
            factors.push(reduced);
        }
    }

    // Every surviving factor has an empty scope: the order covered all
    // non-evidence variables and evidence variables never enter scopes.
    let mut result = constant;
    for f in factors {
        debug_assert!(f.scope.is_empty());
        result *= LogProb::from_ln(f.log_values[0]);
    }
    Ok(result)
}

/// Dense log-space factor over a sorted scope of non-evidence variables.
/// The last scope variable varies fastest.
#[derive(Debug, Clone)]
struct Factor {
    scope: Vec<usize>,
    log_values: Vec<f64>,
}

impl Factor {
    /// The CPT of `child` with evidence variables fixed at their values,
    /// projected onto the non-evidence part of its scope.
    fn from_cpt(bn: &BeliefNetwork, e: &Evidence, child: usize) -> Factor {
        let cpt = bn.cpt(child);
        let full_scope: Vec<usize> = cpt
            .parents()
            .iter()
            .copied()
            .chain(core::iter::once(child))
            .collect();
        let mut scope: Vec<usize> = full_scope
            .iter()
            .copied()
            .filter(|v| !e.contains(*v))
            .collect();
        scope.sort_unstable();

        let size: usize = scope.iter().map(|&v| bn.cardinality(v) as usize).product();
        let mut log_values = alloc::vec![0.0f64; size];
        let mut values = alloc::vec![0u32; scope.len()];
        for (idx, slot) in log_values.iter_mut().enumerate() {
            // Decode idx into scope values (last fastest).
            let mut rem = idx;
            for pos in (0..scope.len()).rev() {
                let card = bn.cardinality(scope[pos]) as usize;
                values[pos] = (rem % card) as u32;
                rem /= card;
            }
            let lookup = |v: usize| -> u32 {
                e.get(v)
                    .unwrap_or_else(|| values[scope.binary_search(&v).unwrap()])
            };
            let mut row = 0usize;
            for &p in cpt.parents() {
                row = row * bn.cardinality(p) as usize + lookup(p) as usize;
            }
            *slot = cpt.log_prob(row, lookup(child));
        }
        Factor { scope, log_values }
    }

    fn strides(&self, bn: &BeliefNetwork) -> Vec<usize> {
        let mut strides = alloc::vec![0usize; self.scope.len()];
        let mut s = 1usize;
        for pos in (0..self.scope.len()).rev() {
            strides[pos] = s;
            s *= bn.cardinality(self.scope[pos]) as usize;
        }
        strides
    }

    fn multiply(&self, other: &Factor, bn: &BeliefNetwork, cap: u64) -> Result<Factor, ExactError> {
        let mut scope: Vec<usize> = self.scope.clone();
        for &v in &other.scope {
            if !scope.contains(&v) {
                scope.push(v);
            }
        }
        scope.sort_unstable();

        let mut entries: u64 = 1;
        for &v in &scope {
            entries = entries
                .checked_mul(bn.cardinality(v) as u64)
                .filter(|&s| s <= cap)
                .ok_or(ExactError::FactorCapExceeded {
                    entries: u64::MAX,
                    cap,
                })?;
        }
        if entries > cap {
            return Err(ExactError::FactorCapExceeded { entries, cap });
        }

        let a_strides = self.strides(bn);
        let b_strides = other.strides(bn);
        // Per union axis: stride into each operand (0 when absent).
        let a_map: Vec<usize> = scope
            .iter()
            .map(|v| {
                self.scope
                    .binary_search(v)
                    .map(|p| a_strides[p])
                    .unwrap_or(0)
            })
            .collect();
        let b_map: Vec<usize> = scope
            .iter()
            .map(|v| {
                other
                    .scope
                    .binary_search(v)
                    .map(|p| b_strides[p])
                    .unwrap_or(0)
            })
            .collect();

        let size = entries as usize;
        let mut log_values = alloc::vec![0.0f64; size];
        let mut values = alloc::vec![0u32; scope.len()];
        for (idx, slot) in log_values.iter_mut().enumerate() {
            let mut rem = idx;
            for pos in (0..scope.len()).rev() {
                let card = bn.cardinality(scope[pos]) as usize;
                values[pos] = (rem % card) as u32;
                rem /= card;
            }
            let mut ai = 0usize;
            let mut bi = 0usize;
            for (pos, &val) in values.iter().enumerate() {
                ai += a_map[pos] * val as usize;
                bi += b_map[pos] * val as usize;
            }
            *slot = self.log_values[ai] + other.log_values[bi];
        }
        Ok(Factor { scope, log_values })
    }

    /// Log-sum-exp over the `var` axis. A -inf addend is simply dropped, so
    /// deterministic rows with mixed zero/nonzero entries sum cleanly.
    fn sum_out(&self, var: usize, bn: &BeliefNetwork) -> Factor {
        let axis = self.scope.binary_search(&var).expect("var in scope");
        let card = bn.cardinality(var) as usize;
        let strides = self.strides(bn);
        let stride = strides[axis];

        let scope: Vec<usize> = self
            .scope
            .iter()
            .copied()
            .filter(|&v| v != var)
            .collect();
        let size = self.log_values.len() / card;
        let mut log_values = alloc::vec![f64::NEG_INFINITY; size];

        // Walk output cells; for each, accumulate the card slices of input.
        let outer = stride; // contiguous block width below the axis
        let blocks = size / outer;
        for block in 0..blocks {
            for within in 0..outer {
                let out_idx = block * outer + within;
                let in_base = block * outer * card + within;
                let mut acc = LogSumExp::new();
                for v in 0..card {
                    acc.push(self.log_values[in_base + v * stride]);
                }
                log_values[out_idx] = acc.value();
            }
        }
        Factor { scope, log_values }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn chain_ab() -> BeliefNetwork {
        BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.6, 0.4]),
                (vec![0], vec![0.8, 0.2, 0.1, 0.9]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn brute_force_single_variable() {
        let bn = BeliefNetwork::new(vec![2], vec![(vec![], vec![0.7, 0.3])]).unwrap();
        let e = Evidence::from_pairs(&bn, &[(0, 1)]).unwrap();
        let lp = brute_force_pe(&bn, &e).unwrap();
        assert!((lp.ln() - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn brute_force_empty_evidence_normalizes_to_one() {
        let bn = chain_ab();
        let lp = brute_force_pe(&bn, &Evidence::empty()).unwrap();
        assert!(lp.ln().abs() < 1e-9);
    }

    #[test]
    fn brute_force_two_term_enumeration() {
        // P(B=1) = 0.6*0.2 + 0.4*0.9 = 0.48
        let bn = chain_ab();
        let e = Evidence::from_pairs(&bn, &[(1, 1)]).unwrap();
        let lp = brute_force_pe(&bn, &e).unwrap();
        assert!((lp.ln() - 0.48f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn state_cap_is_enforced() {
        let bn = chain_ab();
        let err = brute_force_pe_capped(&bn, &Evidence::empty(), 3).unwrap_err();
        assert!(matches!(err, ExactError::StateCapExceeded { states: 4, cap: 3 }));
    }

    #[test]
    fn ve_matches_brute_force_on_small_cases() {
        let bn = chain_ab();
        for pairs in [vec![], vec![(1usize, 1u32)], vec![(0, 1), (1, 0)]] {
            let e = Evidence::from_pairs(&bn, &pairs).unwrap();
            let order = min_fill_order(&bn, &e);
            let ve = variable_elimination_pe(&bn, &e, &order).unwrap();
            let bf = brute_force_pe(&bn, &e).unwrap();
            assert!((ve.ln() - bf.ln()).abs() < 1e-12, "pairs {pairs:?}");
        }
    }

    #[test]
    fn ve_matches_brute_force_on_random_networks() {
        for seed in 0..20u64 {
            let (bn, e) = crate::generate::random_network(
                &crate::generate::NetworkParams {
                    variable_count: 12,
                    max_cardinality: 3,
                    zero_fraction: if seed % 2 == 0 { 0.0 } else { 0.2 },
                    evidence_count: 3,
                },
                seed,
            );
            let order = min_fill_order(&bn, &e);
            let ve = variable_elimination_pe(&bn, &e, &order).unwrap();
            let bf = brute_force_pe(&bn, &e).unwrap();
            if bf.is_zero() {
                assert!(ve.is_zero());
            } else {
                assert!((ve.ln() - bf.ln()).abs() < 1e-9, "seed {seed}");
            }
        }
    }

    #[test]
    fn zero_probability_evidence_agrees() {
        // P(A=0) = 1, and B copies A, so evidence B=1 is impossible.
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![1.0, 0.0]),
                (vec![0], vec![1.0, 0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let e = Evidence::from_pairs(&bn, &[(1, 1)]).unwrap();
        let order = min_fill_order(&bn, &e);
        assert!(brute_force_pe(&bn, &e).unwrap().is_zero());
        assert!(variable_elimination_pe(&bn, &e, &order).unwrap().is_zero());
    }

    #[test]
    fn evidence_extension_never_increases_pe() {
        let (bn, _) = crate::generate::random_network(
            &crate::generate::NetworkParams {
                variable_count: 8,
                max_cardinality: 3,
                zero_fraction: 0.2,
                evidence_count: 0,
            },
            99,
        );
        let e1 = Evidence::from_pairs(&bn, &[(2, 0)]).unwrap();
        let e2 = Evidence::from_pairs(&bn, &[(2, 0), (5, 1)]).unwrap();
        let p1 = brute_force_pe(&bn, &e1).unwrap();
        let p2 = brute_force_pe(&bn, &e2).unwrap();
        assert!(p2.ln() <= p1.ln() + 1e-12);
    }

    #[test]
    fn invalid_orders_are_rejected() {
        let bn = chain_ab();
        let e = Evidence::from_pairs(&bn, &[(1, 0)]).unwrap();
        assert!(EliminationOrder::new(&bn, &e, vec![0]).is_ok());
        assert!(EliminationOrder::new(&bn, &e, vec![1]).is_err());
        assert!(EliminationOrder::new(&bn, &e, vec![0, 0]).is_err());
        assert!(EliminationOrder::new(&bn, &e, vec![]).is_err());
    }
}
