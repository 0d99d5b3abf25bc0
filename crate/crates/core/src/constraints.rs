//! Constraint networks extracted from the zero entries of CPTs.
//!
//! Every zero tuple in a CPT is a nogood: an assignment hitting it has
//! `f(x) = 0`. Relations store the complementary, positive view (the
//! allowed tuples) so that a full assignment satisfies the network exactly
//! when `f(x) > 0` and it agrees with the evidence, which enters as unary
//! clamp relations.
//!
//! The extendability oracle decides whether a consistent partial assignment
//! can be completed to a solution. It is a complete backtracking search
//! with forward checking over a static order; completeness is what makes
//! the backtrack-free density of the `samplesearch` module exact.

use alloc::boxed::Box;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::model::{Assignment, BeliefNetwork, Evidence};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConstraintError {
    #[error("relation scope references variable {var}, which does not exist")]
    InvalidScope { var: usize },
    #[error("relation scope repeats variable {var}")]
    DuplicateScopeVariable { var: usize },
    #[error("allowed tuple has length {got}, scope has {expected} variables")]
    TupleLength { expected: usize, got: usize },
    #[error("allowed tuple assigns value {value} to variable {var} with cardinality {card}")]
    TupleValue { var: usize, value: u32, card: u32 },
}

/// A relation: the allowed value tuples over an ordered scope.
#[derive(Debug, Clone)]
pub struct Relation {
    scope: Vec<usize>,
    allowed: HashSet<Box<[u32]>>,
}

impl Relation {
    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn allowed_count(&self) -> usize {
        self.allowed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.allowed.is_empty()
    }

    pub fn allows(&self, tuple: &[u32]) -> bool {
        self.allowed.contains(tuple)
    }

    /// Tuple induced by `x`, if the whole scope is assigned.
    fn induced_tuple(&self, x: &Assignment) -> Option<Vec<u32>> {
        let mut t = Vec::with_capacity(self.scope.len());
        for &v in &self.scope {
            t.push(x.get(v)?);
        }
        Some(t)
    }
}

/// Relations over a shared variable set, plus the static order used by the
/// extendability search.
#[derive(Debug, Clone)]
pub struct ConstraintNetwork {
    cards: Vec<u32>,
    relations: Vec<Relation>,
    by_var: Vec<Vec<usize>>,
    search_order: Vec<usize>,
}

impl ConstraintNetwork {
    /// Manual construction, mainly for tests and standalone CSP use. The
    /// search order defaults to ascending variable index.
    pub fn new(
        cards: Vec<u32>,
        relations: Vec<(Vec<usize>, Vec<Vec<u32>>)>,
    ) -> Result<ConstraintNetwork, ConstraintError> {
        let n = cards.len();
        let mut built = Vec::with_capacity(relations.len());
        for (scope, tuples) in relations {
            for (pos, &v) in scope.iter().enumerate() {
                if v >= n {
                    return Err(ConstraintError::InvalidScope { var: v });
                }
                if scope[..pos].contains(&v) {
                    return Err(ConstraintError::DuplicateScopeVariable { var: v });
                }
            }
            let mut allowed = HashSet::with_capacity(tuples.len());
            for t in tuples {
                if t.len() != scope.len() {
                    return Err(ConstraintError::TupleLength {
                        expected: scope.len(),
                        got: t.len(),
                    });
                }
                for (&v, &value) in scope.iter().zip(&t) {
                    if value >= cards[v] {
                        return Err(ConstraintError::TupleValue {
                            var: v,
                            value,
                            card: cards[v],
                        });
                    }
                }
                allowed.insert(t.into_boxed_slice());
            }
            built.push(Relation {
                scope,
                allowed,
            });
        }
        Ok(Self::assemble(cards, built, (0..n).collect()))
    }

    fn assemble(
        cards: Vec<u32>,
        relations: Vec<Relation>,
        search_order: Vec<usize>,
    ) -> ConstraintNetwork {
        let mut by_var = alloc::vec![Vec::new(); cards.len()];
        for (idx, r) in relations.iter().enumerate() {
            for &v in &r.scope {
                by_var[v].push(idx);
            }
        }
        ConstraintNetwork {
            cards,
            relations,
            by_var,
            search_order,
        }
    }

    pub fn variable_count(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, var: usize) -> u32 {
        self.cards[var]
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn has_empty_relation(&self) -> bool {
        self.relations.iter().any(|r| r.is_empty())
    }

    /// True iff every relation whose scope is fully assigned by `x`
    /// contains the induced tuple. Relations with unassigned scope
    /// variables are not judged.
    pub fn consistent_partial(&self, x: &Assignment) -> bool {
        self.relations.iter().all(|r| match r.induced_tuple(x) {
            Some(t) => r.allows(&t),
            None => true,
        })
    }

    /// Incremental variant: checks only relations containing `var`, assuming
    /// `x` without `var` was already consistent.
    pub(crate) fn consistent_after_set(&self, x: &Assignment, var: usize) -> bool {
        self.by_var[var].iter().all(|&idx| {
            let r = &self.relations[idx];
            match r.induced_tuple(x) {
                Some(t) => r.allows(&t),
                None => true,
            }
        })
    }

    /// Whether some full assignment extending `x` satisfies every relation.
    ///
    /// Complete backtracking search with forward checking; expects (but does
    /// not require) `consistent_partial(x)` — an inconsistent `x` simply
    /// returns false.
    pub fn is_extendable(&self, x: &Assignment) -> bool {
        let mut cache = ExtendCache::new();
        self.is_extendable_cached(x, &mut cache)
    }

    /// As [`ConstraintNetwork::is_extendable`] with a caller-held memo
    /// cache. Each call counts as one probe whether or not it hits the
    /// cache.
    pub fn is_extendable_cached(&self, x: &Assignment, cache: &mut ExtendCache) -> bool {
        cache.probes += 1;
        let key = encode_assignment(x);
        if let Some(&known) = cache.map.get(&key) {
            return known;
        }
        let result = self.search_extendable(x);
        cache.map.insert(key, result);
        result
    }

    fn search_extendable(&self, x: &Assignment) -> bool {
        if !self.consistent_partial(x) {
            return false;
        }
        let unassigned: Vec<usize> = self
            .search_order
            .iter()
            .copied()
            .filter(|&v| x.get(v).is_none())
            .collect();
        if unassigned.is_empty() {
            return true;
        }

        let mut domains: Vec<Vec<bool>> = alloc::vec![Vec::new(); self.cards.len()];
        for &v in &unassigned {
            domains[v] = alloc::vec![true; self.cards[v] as usize];
        }
        let mut scratch = x.clone();
        // Initial forward check against the already-assigned variables.
        for (idx, _) in self.relations.iter().enumerate() {
            if !self.forward_check_relation(idx, &scratch, &mut domains) {
                return false;
            }
        }
        self.extend_from(0, &unassigned, &mut scratch, &domains)
    }

    fn extend_from(
        &self,
        depth: usize,
        unassigned: &[usize],
        scratch: &mut Assignment,
        domains: &[Vec<bool>],
    ) -> bool {
        if depth == unassigned.len() {
            return true;
        }
        let var = unassigned[depth];
        for value in 0..self.cards[var] as usize {
            if !domains[var][value] {
                continue;
            }
            scratch.set(var, value as u32);
            if self.consistent_after_set(scratch, var) {
                let mut pruned = domains.to_vec();
                let mut feasible = true;
                for &idx in &self.by_var[var] {
                    if !self.forward_check_relation(idx, scratch, &mut pruned) {
                        feasible = false;
                        break;
                    }
                }
                if feasible && self.extend_from(depth + 1, unassigned, scratch, &pruned) {
                    scratch.clear(var);
                    return true;
                }
            }
            scratch.clear(var);
        }
        false
    }

    /// When exactly one scope variable of `relations[idx]` is unassigned,
    /// restricts its domain to the values supported by some allowed tuple
    /// compatible with `x`. Returns false if the domain empties.
    fn forward_check_relation(
        &self,
        idx: usize,
        x: &Assignment,
        domains: &mut [Vec<bool>],
    ) -> bool {
        let r = &self.relations[idx];
        let mut unassigned_pos = None;
        for (pos, &v) in r.scope.iter().enumerate() {
            if x.get(v).is_none() {
                if unassigned_pos.is_some() {
                    return true; // two or more open variables: nothing to prune yet
                }
                unassigned_pos = Some(pos);
            }
        }
        let Some(open) = unassigned_pos else {
            return true; // fully assigned; consistency was checked elsewhere
        };
        let open_var = r.scope[open];
        let mut supported = alloc::vec![false; self.cards[open_var] as usize];
        'tuples: for tuple in &r.allowed {
            for (pos, &v) in r.scope.iter().enumerate() {
                if pos != open {
                    if x.get(v) != Some(tuple[pos]) {
                        continue 'tuples;
                    }
                }
            }
            supported[tuple[open] as usize] = true;
        }
        let domain = &mut domains[open_var];
        let mut any = false;
        for (d, s) in domain.iter_mut().zip(&supported) {
            *d = *d && *s;
            any |= *d;
        }
        any
    }
}

/// Builds the constraint network of a belief network under evidence: one
/// relation per CPT containing a zero (scope = parents then child, allowed
/// = the positive tuples) and one unary clamp per evidence variable. CPTs
/// without zeros contribute nothing.
pub fn extract_constraints(bn: &BeliefNetwork, e: &Evidence) -> ConstraintNetwork {
    let mut relations = Vec::new();
    for child in 0..bn.variable_count() {
        let cpt = bn.cpt(child);
        if !cpt.table().iter().any(|&p| p == 0.0) {
            continue;
        }
        let scope: Vec<usize> = cpt
            .parents()
            .iter()
            .copied()
            .chain(core::iter::once(child))
            .collect();
        let card = cpt.child_cardinality() as usize;
        let mut allowed = HashSet::new();
        let mut tuple = alloc::vec![0u32; scope.len()];
        for row in 0..cpt.row_count() {
            let mut rem = row;
            for pos in (0..cpt.parents().len()).rev() {
                let c = bn.cardinality(cpt.parents()[pos]) as usize;
                tuple[pos] = (rem % c) as u32;
                rem /= c;
            }
            for value in 0..card {
                if cpt.prob(row, value as u32) > 0.0 {
                    *tuple.last_mut().unwrap() = value as u32;
                    allowed.insert(tuple.clone().into_boxed_slice());
                }
            }
        }
        relations.push(Relation { scope, allowed });
    }
    for (var, value) in e.iter() {
        let mut allowed = HashSet::with_capacity(1);
        allowed.insert(alloc::vec![value].into_boxed_slice());
        relations.push(Relation {
            scope: alloc::vec![var],
            allowed,
        });
    }
    ConstraintNetwork::assemble(
        bn.cardinalities().to_vec(),
        relations,
        bn.topological_order().to_vec(),
    )
}

/// Per-sample memo cache for extendability probes, keyed by the exact set
/// of assigned values. Cleared (dropped) between samples; `probes` counts
/// oracle consultations, cache hits included.
#[derive(Debug, Default)]
pub struct ExtendCache {
    map: HashMap<Box<[u64]>, bool>,
    pub probes: u64,
}

impl ExtendCache {
    pub fn new() -> ExtendCache {
        ExtendCache::default()
    }

    /// Records a fact discovered elsewhere (SampleSearch seeds the cache
    /// with the dead values it proved while searching).
    pub fn record(&mut self, x: &Assignment, extendable: bool) {
        self.map.insert(encode_assignment(x), extendable);
    }

    pub fn reset(&mut self) {
        self.map.clear();
        self.probes = 0;
    }
}

fn encode_assignment(x: &Assignment) -> Box<[u64]> {
    let mut key = Vec::with_capacity(x.assigned_count());
    for var in 0..x.len() {
        if let Some(value) = x.get(var) {
            key.push(((var as u64) << 32) | value as u64);
        }
    }
    key.into_boxed_slice()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::for_each_completion;
    use alloc::vec;

    /// A -> C with P(C=1|A=0) = 0: allowed tuples {(0,0), (1,0), (1,1)}.
    fn figure_style_network() -> BeliefNetwork {
        BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![1.0, 0.0, 0.5, 0.5]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn extraction_keeps_positive_tuples() {
        let bn = figure_style_network();
        let cn = extract_constraints(&bn, &Evidence::empty());
        assert_eq!(cn.relations().len(), 1);
        let r = &cn.relations()[0];
        assert_eq!(r.scope(), &[0, 1]);
        assert_eq!(r.allowed_count(), 3);
        assert!(r.allows(&[0, 0]));
        assert!(r.allows(&[1, 0]));
        assert!(r.allows(&[1, 1]));
        assert!(!r.allows(&[0, 1]));
    }

    #[test]
    fn positive_network_yields_only_evidence_clamps() {
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.6, 0.4]),
                (vec![0], vec![0.8, 0.2, 0.1, 0.9]),
            ],
        )
        .unwrap();
        assert!(extract_constraints(&bn, &Evidence::empty()).relations().is_empty());

        let e = Evidence::from_pairs(&bn, &[(1, 0)]).unwrap();
        let cn = extract_constraints(&bn, &e);
        assert_eq!(cn.relations().len(), 1);
        let clamp = &cn.relations()[0];
        assert_eq!(clamp.scope(), &[1]);
        assert_eq!(clamp.allowed_count(), 1);
        assert!(clamp.allows(&[0]));
    }

    #[test]
    fn consistency_judges_only_fully_assigned_scopes() {
        let bn = figure_style_network();
        let cn = extract_constraints(&bn, &Evidence::empty());
        let empty = Assignment::new(2);
        assert!(cn.consistent_partial(&empty));

        let mut x = Assignment::new(2);
        x.set(0, 0);
        assert!(cn.consistent_partial(&x)); // scope incomplete: not judged
        x.set(1, 1);
        assert!(!cn.consistent_partial(&x));
        x.set(1, 0);
        assert!(cn.consistent_partial(&x));
    }

    #[test]
    fn extendability_without_relations_is_trivial() {
        let cn = ConstraintNetwork::new(vec![2, 2], vec![]).unwrap();
        let mut x = Assignment::new(2);
        assert!(cn.is_extendable(&x));
        x.set(0, 1);
        assert!(cn.is_extendable(&x));
    }

    #[test]
    fn extendability_matches_hand_enumeration() {
        // Forbid (0,0): from X0 = 0 we can still reach (0,1).
        let forbid = ConstraintNetwork::new(
            vec![2, 2],
            vec![(vec![0, 1], vec![vec![0, 1], vec![1, 0], vec![1, 1]])],
        )
        .unwrap();
        let mut x = Assignment::new(2);
        x.set(0, 0);
        assert!(forbid.is_extendable(&x));

        // Only (1,1) allowed: X0 = 0 is dead.
        let pin = ConstraintNetwork::new(vec![2, 2], vec![(vec![0, 1], vec![vec![1, 1]])]).unwrap();
        assert!(!pin.is_extendable(&x));
        x.set(0, 1);
        assert!(pin.is_extendable(&x));
    }

    #[test]
    fn extraction_is_sound_on_deterministic_networks() {
        for seed in 0..10u64 {
            let (bn, e) = crate::generate::random_network(
                &crate::generate::NetworkParams {
                    variable_count: 8,
                    max_cardinality: 3,
                    zero_fraction: 0.3,
                    evidence_count: 2,
                },
                seed,
            );
            let cn = extract_constraints(&bn, &e);
            for_each_completion(&bn, &e, |x| {
                let satisfies = cn.consistent_partial(x);
                let positive = !bn.log_joint(&e, x).unwrap().is_zero();
                assert_eq!(satisfies, positive, "seed {seed}");
            });
        }
    }

    #[test]
    fn extendability_agrees_with_brute_force_over_completions() {
        for seed in 20..30u64 {
            let (bn, e) = crate::generate::random_network(
                &crate::generate::NetworkParams {
                    variable_count: 7,
                    max_cardinality: 2,
                    zero_fraction: 0.35,
                    evidence_count: 1,
                },
                seed,
            );
            let cn = extract_constraints(&bn, &e);
            // Partial assignments: evidence plus a prefix of the variables.
            let mut x = Assignment::from_evidence(&bn, &e);
            for prefix_len in 0..4usize {
                if prefix_len > 0 {
                    let var = (prefix_len - 1) * 2 % bn.variable_count();
                    if x.get(var).is_none() {
                        x.set(var, (seed % 2) as u32);
                    }
                }
                if !cn.consistent_partial(&x) {
                    continue;
                }
                let mut any = false;
                for_each_completion(&bn, &e, |full| {
                    if any {
                        return;
                    }
                    let compatible = (0..bn.variable_count())
                        .all(|v| x.get(v).is_none() || x.get(v) == full.get(v));
                    if compatible && cn.consistent_partial(full) {
                        any = true;
                    }
                });
                assert_eq!(cn.is_extendable(&x), any, "seed {seed} len {prefix_len}");
            }
        }
    }

    #[test]
    fn cache_memoizes_and_counts_probes() {
        let cn = ConstraintNetwork::new(
            vec![2, 2],
            vec![(vec![0, 1], vec![vec![0, 1], vec![1, 0], vec![1, 1]])],
        )
        .unwrap();
        let mut cache = ExtendCache::new();
        let mut x = Assignment::new(2);
        x.set(0, 0);
        assert!(cn.is_extendable_cached(&x, &mut cache));
        assert!(cn.is_extendable_cached(&x, &mut cache));
        assert_eq!(cache.probes, 2);
        cache.record(&x, false); // seeded facts win on later lookups
        assert!(!cn.is_extendable_cached(&x, &mut cache));
        assert_eq!(cache.probes, 3);
    }

    #[test]
    fn empty_relation_is_detected() {
        let cn = ConstraintNetwork::new(vec![2], vec![(vec![0], vec![])]).unwrap();
        assert!(cn.has_empty_relation());
    }
}
