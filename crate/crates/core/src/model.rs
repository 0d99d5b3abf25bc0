//! Discrete Bayesian networks, evidence, and log-space evaluation of the
//! unnormalized target `f(x) = P(z, e)`.
//!
//! A [`BeliefNetwork`] holds one CPT per variable over a DAG of parents. The
//! joint distribution is the product of the CPT entries selected by a full
//! assignment; [`BeliefNetwork::log_joint`] evaluates that product in log
//! space, returning log 0 whenever any factor is zero. Evidence is applied
//! by clamping: samplers never draw evidence variables and evaluation simply
//! reads the clamped values.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::logprob::{math, LogProb};

/// Validation tolerance for CPT rows built programmatically.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("variable {var} has cardinality 0; domains must be nonempty")]
    EmptyDomain { var: usize },
    #[error("cpt for variable {child}: invalid parent index {parent}")]
    InvalidParent { child: usize, parent: usize },
    #[error("cpt for variable {child}: duplicate or self-referential parent {parent}")]
    DuplicateParent { child: usize, parent: usize },
    #[error("cpt for variable {child}: table has {got} entries, expected {expected}")]
    TableSize {
        child: usize,
        expected: usize,
        got: usize,
    },
    #[error("cpt for variable {child}, entry {index}: probability {value} outside [0, 1]")]
    EntryOutOfRange {
        child: usize,
        index: usize,
        value: f64,
    },
    #[error("cpt for variable {child}, row {row}: entries sum to {sum}, expected 1")]
    RowSum { child: usize, row: usize, sum: f64 },
    #[error("parent structure contains a cycle")]
    CyclicStructure,
    #[error("evidence references variable {var}, which does not exist")]
    EvidenceVariable { var: usize },
    #[error("evidence assigns value {value} to variable {var} with cardinality {card}")]
    EvidenceValue { var: usize, value: u32, card: u32 },
    #[error("evidence assigns variable {var} twice")]
    DuplicateEvidence { var: usize },
    #[error("assignment leaves variable {var} unset")]
    IncompleteAssignment { var: usize },
    #[error("assignment disagrees with evidence on variable {var}")]
    EvidenceMismatch { var: usize },
}

/// Conditional probability table for one variable.
///
/// The table is dense row-major: parent configurations vary with the first
/// parent slowest, and the child value varies fastest within a row. Zero
/// entries are kept as stored; the constraints module reads them back out.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    parents: Vec<usize>,
    child_card: u32,
    table: Vec<f64>,
    log_table: Vec<f64>,
}

impl Cpt {
    pub fn parents(&self) -> &[usize] {
        &self.parents
    }

    pub fn child_cardinality(&self) -> u32 {
        self.child_card
    }

    /// Linear-space table, row-major as described on the type.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn row_count(&self) -> usize {
        self.table.len() / self.child_card as usize
    }

    #[inline]
    pub fn prob(&self, row: usize, value: u32) -> f64 {
        self.table[row * self.child_card as usize + value as usize]
    }

    #[inline]
    pub fn log_prob(&self, row: usize, value: u32) -> f64 {
        self.log_table[row * self.child_card as usize + value as usize]
    }
}

/// A discrete Bayesian network: domains plus one CPT per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefNetwork {
    cards: Vec<u32>,
    cpts: Vec<Cpt>,
    topo: Vec<usize>,
}

impl BeliefNetwork {
    /// Builds and validates a network. `cpts[i]` is `(parents, table)` for
    /// variable `i`, with the row-major layout described on [`Cpt`].
    pub fn new(cards: Vec<u32>, cpts: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self, ModelError> {
        Self::with_row_tolerance(cards, cpts, ROW_SUM_TOLERANCE)
    }

    /// Like [`BeliefNetwork::new`] with an explicit row-sum tolerance.
    /// Parsers use a looser tolerance than programmatic construction since
    /// text files round their probabilities. Tables are stored exactly as
    /// given either way.
    pub fn with_row_tolerance(
        cards: Vec<u32>,
        cpts: Vec<(Vec<usize>, Vec<f64>)>,
        row_tolerance: f64,
    ) -> Result<Self, ModelError> {
        let n = cards.len();
        for (var, &card) in cards.iter().enumerate() {
            if card == 0 {
                return Err(ModelError::EmptyDomain { var });
            }
        }
        assert_eq!(cpts.len(), n, "one CPT per variable");

        let mut built = Vec::with_capacity(n);
        for (child, (parents, table)) in cpts.into_iter().enumerate() {
            for (pos, &p) in parents.iter().enumerate() {
                if p >= n {
                    return Err(ModelError::InvalidParent { child, parent: p });
                }
                if p == child || parents[..pos].contains(&p) {
                    return Err(ModelError::DuplicateParent { child, parent: p });
                }
            }
            let child_card = cards[child];
            let rows: usize = parents.iter().map(|&p| cards[p] as usize).product();
            let expected = rows * child_card as usize;
            if table.len() != expected {
                return Err(ModelError::TableSize {
                    child,
                    expected,
                    got: table.len(),
                });
            }
            for (index, &value) in table.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) || value.is_nan() {
                    return Err(ModelError::EntryOutOfRange {
                        child,
                        index,
                        value,
                    });
                }
            }
            for row in 0..rows {
                let start = row * child_card as usize;
                let sum: f64 = table[start..start + child_card as usize].iter().sum();
                if math::abs(sum - 1.0) > row_tolerance {
                    return Err(ModelError::RowSum { child, row, sum });
                }
            }
            let log_table = table.iter().map(|&p| math::ln(p)).collect();
            built.push(Cpt {
                parents,
                child_card,
                table,
                log_table,
            });
        }

        let topo = topological_order(&cards, &built)?;
        Ok(BeliefNetwork {
            cards,
            cpts: built,
            topo,
        })
    }

    pub fn variable_count(&self) -> usize {
        self.cards.len()
    }

    #[inline]
    pub fn cardinality(&self, var: usize) -> u32 {
        self.cards[var]
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cards
    }

    #[inline]
    pub fn cpt(&self, var: usize) -> &Cpt {
        &self.cpts[var]
    }

    /// A topological order of the parent DAG, computed at construction.
    /// Ties break toward the lowest variable index, so the order is
    /// deterministic.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Row index into `cpt(var)` selected by the parent values in `x`.
    /// All parents of `var` must be assigned.
    #[inline]
    pub(crate) fn cpt_row(&self, var: usize, x: &Assignment) -> usize {
        let cpt = &self.cpts[var];
        let mut row = 0usize;
        for &p in &cpt.parents {
            let v = x.get(p).expect("parent value must be assigned");
            row = row * self.cards[p] as usize + v as usize;
        }
        row
    }

    /// `log f(x) = sum_j log P(x_j | pa_j)` for a full assignment `x`
    /// consistent with the evidence `e`. Returns log 0 when any factor is
    /// zero.
    pub fn log_joint(&self, e: &Evidence, x: &Assignment) -> Result<LogProb, ModelError> {
        for var in 0..self.variable_count() {
            if x.get(var).is_none() {
                return Err(ModelError::IncompleteAssignment { var });
            }
        }
        for (var, value) in e.iter() {
            if x.get(var) != Some(value) {
                return Err(ModelError::EvidenceMismatch { var });
            }
        }
        Ok(self.log_joint_unchecked(x))
    }

    /// As [`BeliefNetwork::log_joint`] without the validity checks; callers
    /// guarantee `x` is full (samplers construct it that way).
    #[inline]
    pub(crate) fn log_joint_unchecked(&self, x: &Assignment) -> LogProb {
        let mut total = 0.0f64;
        for var in 0..self.variable_count() {
            let row = self.cpt_row(var, x);
            let value = x.get(var).expect("full assignment");
            let term = self.cpts[var].log_prob(row, value);
            if term == f64::NEG_INFINITY {
                return LogProb::ZERO;
            }
            total += term;
        }
        LogProb::from_ln(total)
    }
}

/// Visits every full assignment consistent with the evidence, in odometer
/// order over the non-evidence variables. Intended for desk-scale oracles
/// and tests; the state space is the caller's responsibility.
pub fn for_each_completion<F: FnMut(&Assignment)>(bn: &BeliefNetwork, e: &Evidence, mut visit: F) {
    let free: Vec<usize> = (0..bn.variable_count()).filter(|v| !e.contains(*v)).collect();
    let mut x = Assignment::from_evidence(bn, e);
    for &v in &free {
        x.set(v, 0);
    }
    loop {
        visit(&x);
        let mut pos = free.len();
        loop {
            if pos == 0 {
                return;
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

/// Kahn's algorithm with a lowest-index-first tie break.
fn topological_order(cards: &[u32], cpts: &[Cpt]) -> Result<Vec<usize>, ModelError> {
    let n = cards.len();
    let mut indegree = alloc::vec![0usize; n];
    let mut children: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
    for (child, cpt) in cpts.iter().enumerate() {
        indegree[child] = cpt.parents.len();
        for &p in &cpt.parents {
            children[p].push(child);
        }
    }
    // A min-heap over ready variables yields the lexicographically smallest
    // topological order.
    let mut ready: alloc::collections::BinaryHeap<core::cmp::Reverse<usize>> = (0..n)
        .filter(|&v| indegree[v] == 0)
        .map(core::cmp::Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(core::cmp::Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(core::cmp::Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(ModelError::CyclicStructure);
    }
    Ok(order)
}

/// An instantiated subset of variables, applied by clamping.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evidence {
    map: BTreeMap<usize, u32>,
}

impl Evidence {
    pub fn empty() -> Evidence {
        Evidence::default()
    }

    /// Validates every pair against the network's domains and rejects
    /// duplicate variables.
    pub fn from_pairs(bn: &BeliefNetwork, pairs: &[(usize, u32)]) -> Result<Evidence, ModelError> {
        let mut map = BTreeMap::new();
        for &(var, value) in pairs {
            if var >= bn.variable_count() {
                return Err(ModelError::EvidenceVariable { var });
            }
            if value >= bn.cardinality(var) {
                return Err(ModelError::EvidenceValue {
                    var,
                    value,
                    card: bn.cardinality(var),
                });
            }
            if map.insert(var, value).is_some() {
                return Err(ModelError::DuplicateEvidence { var });
            }
        }
        Ok(Evidence { map })
    }

    #[inline]
    pub fn get(&self, var: usize) -> Option<u32> {
        self.map.get(&var).copied()
    }

    #[inline]
    pub fn contains(&self, var: usize) -> bool {
        self.map.contains_key(&var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.map.iter().map(|(&v, &x)| (v, x))
    }
}

/// A (possibly partial) assignment of values to variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    values: Vec<Option<u32>>,
}

impl Assignment {
    pub fn new(variable_count: usize) -> Assignment {
        Assignment {
            values: alloc::vec![None; variable_count],
        }
    }

    /// Fresh assignment with exactly the evidence variables set.
    pub fn from_evidence(bn: &BeliefNetwork, e: &Evidence) -> Assignment {
        let mut a = Assignment::new(bn.variable_count());
        for (var, value) in e.iter() {
            a.set(var, value);
        }
        a
    }

    #[inline]
    pub fn set(&mut self, var: usize, value: u32) {
        self.values[var] = Some(value);
    }

    #[inline]
    pub fn clear(&mut self, var: usize) {
        self.values[var] = None;
    }

    #[inline]
    pub fn get(&self, var: usize) -> Option<u32> {
        self.values[var]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.values.iter().all(|v| v.is_some())
    }

    pub fn assigned_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn single_binary() -> BeliefNetwork {
        BeliefNetwork::new(vec![2], vec![(vec![], vec![0.7, 0.3])]).unwrap()
    }

    /// A -> B chain with P(A=1)=0.4, P(B=1|A=0)=0.2, P(B=1|A=1)=0.9.
    pub(crate) fn chain_ab() -> BeliefNetwork {
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
    fn log_joint_single_variable() {
        let bn = single_binary();
        let e = Evidence::empty();
        let mut x = Assignment::new(1);
        x.set(0, 1);
        let lp = bn.log_joint(&e, &x).unwrap();
        assert!((lp.ln() - 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_joint_zero_factor_is_log_zero() {
        // Deterministic CPT: P(C=1|A=0) = 0, mirroring a CPT with a "0" tuple.
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![1.0, 0.0, 0.5, 0.5]),
            ],
        )
        .unwrap();
        let e = Evidence::empty();
        let mut x = Assignment::new(2);
        x.set(0, 0);
        x.set(1, 1);
        assert!(bn.log_joint(&e, &x).unwrap().is_zero());
    }

    #[test]
    fn log_joint_matches_direct_product_on_chain() {
        let bn = BeliefNetwork::new(
            vec![2, 3, 2],
            vec![
                (vec![], vec![0.25, 0.75]),
                (vec![0], vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]),
                (vec![1], vec![0.9, 0.1, 0.4, 0.6, 0.7, 0.3]),
            ],
        )
        .unwrap();
        let e = Evidence::empty();
        let mut rng = crate::rng::RngStream::from_seed(5);
        for _ in 0..10 {
            let (a, b, c) = (rng.below(2) as u32, rng.below(3) as u32, rng.below(2) as u32);
            let mut x = Assignment::new(3);
            x.set(0, a);
            x.set(1, b);
            x.set(2, c);
            let direct = bn.cpt(0).prob(0, a)
                * bn.cpt(1).prob(a as usize, b)
                * bn.cpt(2).prob(b as usize, c);
            let lp = bn.log_joint(&e, &x).unwrap();
            assert!((lp.linear() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn log_joint_rejects_partial_and_contradicting() {
        let bn = chain_ab();
        let e = Evidence::from_pairs(&bn, &[(1, 1)]).unwrap();
        let mut x = Assignment::new(2);
        x.set(0, 1);
        assert!(matches!(
            bn.log_joint(&e, &x),
            Err(ModelError::IncompleteAssignment { var: 1 })
        ));
        x.set(1, 0);
        assert!(matches!(
            bn.log_joint(&e, &x),
            Err(ModelError::EvidenceMismatch { var: 1 })
        ));
    }

    #[test]
    fn row_sum_error_names_row() {
        let err = BeliefNetwork::new(vec![2], vec![(vec![], vec![0.6, 0.3])]).unwrap_err();
        assert!(matches!(err, ModelError::RowSum { child: 0, row: 0, .. }));
    }

    #[test]
    fn topological_order_parentless_is_identity() {
        let bn = BeliefNetwork::new(
            vec![2, 2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![], vec![0.5, 0.5]),
                (vec![], vec![0.5, 0.5]),
            ],
        )
        .unwrap();
        assert_eq!(bn.topological_order(), &[0, 1, 2]);
    }

    #[test]
    fn topological_order_chain() {
        let bn = BeliefNetwork::new(
            vec![2, 2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![0.5, 0.5, 0.5, 0.5]),
                (vec![1], vec![0.5, 0.5, 0.5, 0.5]),
            ],
        )
        .unwrap();
        assert_eq!(bn.topological_order(), &[0, 1, 2]);
    }

    #[test]
    fn topological_order_diamond_lowest_index_tiebreak() {
        // A->B, A->C, B->D, C->D. Valid orders include (A,C,B,D); the
        // tie-break must pick (A,B,C,D).
        let bn = BeliefNetwork::new(
            vec![2, 2, 2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![0.5, 0.5, 0.5, 0.5]),
                (vec![0], vec![0.5, 0.5, 0.5, 0.5]),
                (vec![1, 2], vec![0.5; 8]),
            ],
        )
        .unwrap();
        assert_eq!(bn.topological_order(), &[0, 1, 2, 3]);
    }

    #[test]
    fn cycle_is_rejected() {
        let err = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![1], vec![0.5, 0.5, 0.5, 0.5]),
                (vec![0], vec![0.5, 0.5, 0.5, 0.5]),
            ],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::CyclicStructure);
    }

    #[test]
    fn evidence_validation() {
        let bn = chain_ab();
        assert!(matches!(
            Evidence::from_pairs(&bn, &[(5, 0)]),
            Err(ModelError::EvidenceVariable { var: 5 })
        ));
        assert!(matches!(
            Evidence::from_pairs(&bn, &[(0, 2)]),
            Err(ModelError::EvidenceValue { var: 0, value: 2, .. })
        ));
        assert!(matches!(
            Evidence::from_pairs(&bn, &[(0, 1), (0, 0)]),
            Err(ModelError::DuplicateEvidence { var: 0 })
        ));
    }
}
