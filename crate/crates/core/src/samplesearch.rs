//! Rejection-free sampling of constraint-consistent assignments, and the
//! backtrack-free density those samples are actually drawn from.
//!
//! [`sample_search`] is a depth-first backtracking search whose value
//! selection is guided by the proposal: draw a value from the working
//! distribution of the current level, zero it out and renormalize on a
//! constraint violation, and retract one level when a working distribution
//! runs dry. It either returns an assignment satisfying every relation or
//! proves that none exists.
//!
//! The samples are distributed according to the backtrack-free distribution
//! `Q^R`, the proposal renormalized at every level over the values that can
//! still be extended to a solution. [`backtrack_free_log_density`] computes
//! it after the fact by probing the extendability oracle for each dead
//! value set `B_i`; the sampled value itself is known to be live and is
//! never probed, so at most `n * (d - 1)` probes are spent per sample.

use alloc::vec::Vec;

use crate::constraints::{ConstraintNetwork, ExtendCache};
use crate::logprob::{math, LogProb};
use crate::model::{Assignment, BeliefNetwork, Evidence};
use crate::proposal::FactoredProposal;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SampleSearchError {
    /// The constraint network has no solution, proving `P(e) = 0`.
    #[error("the constraint network is unsatisfiable; P(e) = 0")]
    Unsatisfiable,
    /// Backtrack-free weighting requires a covering proposal; rejecting the
    /// pairing up front turns a division-by-zero in the density into a
    /// constructive error.
    #[error("SampleSearch requires a covering proposal")]
    NonCoveringProposal,
    #[error("assignment violates the constraint network")]
    InconsistentSample,
    #[error("assignment leaves sampled variable {var} unset")]
    IncompleteSample { var: usize },
}

/// How the density of a weighted sample was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// Plain importance sampling: density is `Q(x)`; zero weights possible.
    Plain,
    /// SampleSearch: density is `Q^R(x)`; weights are strictly positive.
    BacktrackFree,
}

/// A full assignment with its target, density, and importance weight, all
/// in log space. `log_weight = log_f - log_density` exactly.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub assignment: Assignment,
    pub log_f: LogProb,
    pub log_density: LogProb,
    pub log_weight: LogProb,
    pub kind: DensityKind,
}

/// Draws one assignment satisfying every relation of `cn`.
///
/// `base` pre-assigns the variables the proposal does not sample (the
/// evidence); pass an empty assignment when the proposal covers all of
/// them. Returns [`SampleSearchError::Unsatisfiable`] when the root domain
/// exhausts, which proves no consistent assignment exists.
pub fn sample_search(
    q: &FactoredProposal,
    cn: &ConstraintNetwork,
    base: &Assignment,
    rng: &mut RngStream,
) -> Result<Assignment, SampleSearchError> {
    sample_search_seeded(q, cn, base, rng, &mut ExtendCache::new())
}

/// As [`sample_search`], recording the dead prefixes it proves into `cache`
/// so a following [`backtrack_free_log_density_cached`] pass can skip those
/// searches. The recorded facts are only valid for covering proposals
/// (values the search never visits carry zero proposal mass, which for a
/// covering proposal means zero target mass as well).
pub fn sample_search_seeded(
    q: &FactoredProposal,
    cn: &ConstraintNetwork,
    base: &Assignment,
    rng: &mut RngStream,
    cache: &mut ExtendCache,
) -> Result<Assignment, SampleSearchError> {
    struct Level {
        working: Vec<f64>,
        mass: f64,
    }

    let order = q.order();
    let mut x = base.clone();
    for &v in order {
        x.clear(v);
    }
    if cn.has_empty_relation() || !cn.consistent_partial(&x) {
        return Err(SampleSearchError::Unsatisfiable);
    }

    let mut levels: Vec<Option<Level>> = (0..order.len()).map(|_| None).collect();
    let mut i = 0usize;
    loop {
        if i == order.len() {
            return Ok(x);
        }
        if levels[i].is_none() {
            // Fresh working copy of Q_i under the current context.
            let row = q.row(i, &x).to_vec();
            let mass = row.iter().sum();
            levels[i] = Some(Level { working: row, mass });
        }
        let level = levels[i].as_mut().expect("materialized above");
        let var = order[i];
        if level.mass > 0.0 {
            let value = rng.pick_weighted(&level.working, level.mass);
            x.set(var, value as u32);
            if cn.consistent_after_set(&x, var) {
                i += 1;
                if i < order.len() {
                    levels[i] = None;
                }
            } else {
                // Step 6: zero the violating value and renormalize.
                cache.record(&x, false);
                x.clear(var);
                level.working[value] = 0.0;
                level.mass = level.working.iter().sum();
            }
        } else {
            // Steps 11-13: the level is exhausted, retract the previous
            // value. Exhaustion of a covering working distribution proves
            // the prefix dead.
            if i == 0 {
                return Err(SampleSearchError::Unsatisfiable);
            }
            i -= 1;
            let prev = order[i];
            let value = x.get(prev).expect("previous level was assigned") as usize;
            cache.record(&x, false);
            x.clear(prev);
            let level = levels[i].as_mut().expect("previous level materialized");
            level.working[value] = 0.0;
            level.mass = level.working.iter().sum();
        }
    }
}

/// `log Q^R(x)`: at each position, the proposal probability of the sampled
/// value renormalized by `1 - sum of Q_i over the dead values B_i`.
///
/// Dead values are decided by the extendability oracle; values with zero
/// proposal mass are skipped outright since they cannot move the
/// denominator.
pub fn backtrack_free_log_density(
    q: &FactoredProposal,
    cn: &ConstraintNetwork,
    x: &Assignment,
) -> Result<LogProb, SampleSearchError> {
    backtrack_free_log_density_cached(q, cn, x, &mut ExtendCache::new())
}

/// As [`backtrack_free_log_density`] with a caller-held probe cache;
/// `cache.probes` afterwards tells how many oracle consultations the
/// evaluation spent (at most `n * (d - 1)` beyond whatever the caller
/// already ran).
pub fn backtrack_free_log_density_cached(
    q: &FactoredProposal,
    cn: &ConstraintNetwork,
    x: &Assignment,
    cache: &mut ExtendCache,
) -> Result<LogProb, SampleSearchError> {
    for &v in q.order() {
        if x.get(v).is_none() {
            return Err(SampleSearchError::IncompleteSample { var: v });
        }
    }
    if !cn.consistent_partial(x) {
        return Err(SampleSearchError::InconsistentSample);
    }

    let mut prefix = x.clone();
    for &v in q.order() {
        prefix.clear(v);
    }
    let mut total = 0.0f64;
    for position in 0..q.order().len() {
        let var = q.order()[position];
        let sampled = x.get(var).expect("checked above");
        let card = q.cardinality(var) as usize;
        let row_base = q.row_index(position, &prefix) * card;
        let table = q.factor(position).table();

        let mut dead_mass = 0.0f64;
        for value in 0..card as u32 {
            if value == sampled {
                continue; // the realized value is live by construction
            }
            let mass = table[row_base + value as usize];
            if mass == 0.0 {
                continue;
            }
            prefix.set(var, value);
            let dead = if !cn.consistent_after_set(&prefix, var) {
                true // an inconsistent prefix cannot reach a solution
            } else {
                !cn.is_extendable_cached(&prefix, cache)
            };
            if dead {
                dead_mass += mass;
            }
            prefix.clear(var);
        }

        let numerator = table[row_base + sampled as usize];
        let denominator = 1.0 - dead_mass;
        debug_assert!(
            denominator > 0.0,
            "sampled value carries positive mass, so the denominator cannot vanish"
        );
        total += math::ln(numerator) - math::ln(denominator);
        prefix.set(var, sampled);
    }
    Ok(LogProb::from_ln(total))
}

/// One weighted sample: plain importance sampling without a constraint
/// network, SampleSearch with one.
pub fn draw_weighted_sample(
    bn: &BeliefNetwork,
    e: &Evidence,
    q: &FactoredProposal,
    cn: Option<&ConstraintNetwork>,
    rng: &mut RngStream,
) -> Result<WeightedSample, SampleSearchError> {
    match cn {
        None => {
            let mut x = Assignment::from_evidence(bn, e);
            let log_density = q.sample_into(&mut x, rng);
            let log_f = bn
                .log_joint(e, &x)
                .expect("sampler produced a full, evidence-consistent assignment");
            let log_weight = log_f.ratio(log_density);
            Ok(WeightedSample {
                assignment: x,
                log_f,
                log_density,
                log_weight,
                kind: DensityKind::Plain,
            })
        }
        Some(cn) => {
            if !q.is_covering() {
                return Err(SampleSearchError::NonCoveringProposal);
            }
            let base = Assignment::from_evidence(bn, e);
            let mut cache = ExtendCache::new();
            let x = sample_search_seeded(q, cn, &base, rng, &mut cache)?;
            let log_density = backtrack_free_log_density_cached(q, cn, &x, &mut cache)?;
            let log_f = bn
                .log_joint(e, &x)
                .expect("SampleSearch produced a full, evidence-consistent assignment");
            debug_assert!(!log_f.is_zero(), "consistent samples have positive weight");
            let log_weight = log_f.ratio(log_density);
            Ok(WeightedSample {
                assignment: x,
                log_f,
                log_density,
                log_weight,
                kind: DensityKind::BacktrackFree,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::extract_constraints;
    use crate::logprob::LogSumExp;
    use crate::model::for_each_completion;
    use alloc::vec;

    fn uniform_pair() -> FactoredProposal {
        FactoredProposal::from_tables(
            vec![2, 2],
            vec![0, 1],
            vec![(vec![], vec![0.5, 0.5]), (vec![], vec![0.5, 0.5])],
            true,
        )
        .unwrap()
    }

    fn forbid_origin() -> ConstraintNetwork {
        ConstraintNetwork::new(
            vec![2, 2],
            vec![(vec![0, 1], vec![vec![0, 1], vec![1, 0], vec![1, 1]])],
        )
        .unwrap()
    }

    #[test]
    fn without_constraints_it_replays_the_ordered_sampler() {
        let bn = BeliefNetwork::new(
            vec![2, 3],
            vec![
                (vec![], vec![0.3, 0.7]),
                (vec![0], vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]),
            ],
        )
        .unwrap();
        let e = Evidence::empty();
        let q = FactoredProposal::prior(&bn, &e);
        let cn = ConstraintNetwork::new(vec![2, 3], vec![]).unwrap();
        let mut rng_a = RngStream::from_seed(77);
        let mut rng_b = RngStream::from_seed(77);
        for _ in 0..100 {
            let via_search =
                sample_search(&q, &cn, &Assignment::new(2), &mut rng_a).unwrap();
            let (via_order, _) = q.sample(&mut rng_b);
            assert_eq!(via_search, via_order);
        }
    }

    #[test]
    fn samples_always_satisfy_the_relations() {
        let q = uniform_pair();
        let cn = forbid_origin();
        let mut rng = RngStream::from_seed(5);
        for _ in 0..500 {
            let x = sample_search(&q, &cn, &Assignment::new(2), &mut rng).unwrap();
            assert!(cn.consistent_partial(&x));
            assert!(!(x.get(0) == Some(0) && x.get(1) == Some(0)));
        }
    }

    #[test]
    fn empty_relation_is_unsatisfiable() {
        let q = uniform_pair();
        let cn = ConstraintNetwork::new(vec![2, 2], vec![(vec![0], vec![])]).unwrap();
        let mut rng = RngStream::from_seed(1);
        assert_eq!(
            sample_search(&q, &cn, &Assignment::new(2), &mut rng),
            Err(SampleSearchError::Unsatisfiable)
        );
    }

    #[test]
    fn contradictory_relations_exhaust_the_root() {
        let q = uniform_pair();
        let cn = ConstraintNetwork::new(
            vec![2, 2],
            vec![
                (vec![0], vec![vec![0]]),
                (vec![0, 1], vec![vec![1, 1]]),
            ],
        )
        .unwrap();
        let mut rng = RngStream::from_seed(2);
        assert_eq!(
            sample_search(&q, &cn, &Assignment::new(2), &mut rng),
            Err(SampleSearchError::Unsatisfiable)
        );
    }

    #[test]
    fn density_without_constraints_equals_the_proposal_density() {
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.6, 0.4]),
                (vec![0], vec![0.8, 0.2, 0.1, 0.9]),
            ],
        )
        .unwrap();
        let e = Evidence::empty();
        let q = FactoredProposal::prior(&bn, &e);
        let cn = ConstraintNetwork::new(vec![2, 2], vec![]).unwrap();
        for_each_completion(&bn, &e, |x| {
            let qr = backtrack_free_log_density(&q, &cn, x).unwrap();
            let plain = q.log_density(x).unwrap();
            assert_eq!(qr.ln(), plain.ln());
        });
    }

    #[test]
    fn hand_computed_backtrack_free_densities() {
        // Uniform Q over two binary variables, (0,0) forbidden:
        //   Q^R(0,1) = 0.5 (B_2 = {0} given X_1 = 0),
        //   Q^R(1,0) = Q^R(1,1) = 0.25 (no dead values).
        let q = uniform_pair();
        let cn = forbid_origin();
        let expect = [((0u32, 1u32), 0.5f64), ((1, 0), 0.25), ((1, 1), 0.25)];
        for ((a, b), want) in expect {
            let mut x = Assignment::new(2);
            x.set(0, a);
            x.set(1, b);
            let qr = backtrack_free_log_density(&q, &cn, &x).unwrap();
            assert!(
                (qr.ln() - want.ln()).abs() < 1e-12,
                "Q^R({a},{b}) = {} want {want}",
                qr.linear()
            );
        }
        let mut violating = Assignment::new(2);
        violating.set(0, 0);
        violating.set(1, 0);
        assert_eq!(
            backtrack_free_log_density(&q, &cn, &violating),
            Err(SampleSearchError::InconsistentSample)
        );
    }

    #[test]
    fn backtrack_free_density_normalizes_over_consistent_assignments() {
        for seed in 0..5u64 {
            let (bn, e) = crate::generate::random_network(
                &crate::generate::NetworkParams {
                    variable_count: 8,
                    max_cardinality: 3,
                    zero_fraction: 0.3,
                    evidence_count: 2,
                },
                seed,
            );
            let q = FactoredProposal::prior(&bn, &e);
            let cn = extract_constraints(&bn, &e);
            let mut total = 0.0f64;
            for_each_completion(&bn, &e, |x| {
                if cn.consistent_partial(x) {
                    total += backtrack_free_log_density(&q, &cn, x).unwrap().linear();
                }
            });
            assert!((total - 1.0).abs() < 1e-9, "seed {seed}: sum {total}");
        }
    }

    #[test]
    fn backtrack_free_expectation_recovers_pe_exactly() {
        let (bn, e) = crate::generate::random_network(
            &crate::generate::NetworkParams {
                variable_count: 9,
                max_cardinality: 2,
                zero_fraction: 0.3,
                evidence_count: 3,
            },
            12,
        );
        let q = FactoredProposal::prior(&bn, &e);
        let cn = extract_constraints(&bn, &e);
        let mut acc = LogSumExp::new();
        for_each_completion(&bn, &e, |x| {
            if cn.consistent_partial(x) {
                let qr = backtrack_free_log_density(&q, &cn, x).unwrap();
                let f = bn.log_joint(&e, x).unwrap();
                let w = f.ratio(qr);
                acc.push((qr * w).ln());
            }
        });
        let pe = crate::exact::brute_force_pe(&bn, &e).unwrap();
        assert!((acc.value() - pe.ln()).abs() < 1e-9);
    }

    #[test]
    fn probe_budget_stays_under_n_times_d_minus_one() {
        let (bn, e) = crate::generate::random_network(
            &crate::generate::NetworkParams {
                variable_count: 10,
                max_cardinality: 3,
                zero_fraction: 0.3,
                evidence_count: 2,
            },
            3,
        );
        let q = FactoredProposal::prior(&bn, &e);
        let cn = extract_constraints(&bn, &e);
        let base = Assignment::from_evidence(&bn, &e);
        let budget = (q.order().len() as u64) * (3 - 1);
        let mut rng = RngStream::from_seed(4);
        for _ in 0..20 {
            let x = sample_search(&q, &cn, &base, &mut rng).unwrap();
            let mut cache = ExtendCache::new();
            backtrack_free_log_density_cached(&q, &cn, &x, &mut cache).unwrap();
            assert!(cache.probes <= budget, "{} > {budget}", cache.probes);
        }
    }

    #[test]
    fn plain_mode_is_likelihood_weighting() {
        // Chain A -> B with evidence B = 1: the weight reduces to
        // P(B = 1 | a) after the shared P(a) factor cancels.
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.6, 0.4]),
                (vec![0], vec![0.8, 0.2, 0.1, 0.9]),
            ],
        )
        .unwrap();
        let e = Evidence::from_pairs(&bn, &[(1, 1)]).unwrap();
        let q = FactoredProposal::prior(&bn, &e);
        let mut rng = RngStream::from_seed(21);
        for _ in 0..50 {
            let s = draw_weighted_sample(&bn, &e, &q, None, &mut rng).unwrap();
            let a = s.assignment.get(0).unwrap();
            let expected = bn.cpt(1).prob(a as usize, 1);
            assert!((s.log_weight.linear() - expected).abs() < 1e-12);
            assert_eq!(s.kind, DensityKind::Plain);
            assert_eq!(s.log_weight.ln(), s.log_f.ratio(s.log_density).ln());
        }
    }

    #[test]
    fn plain_mode_accepts_zero_weight_samples() {
        // Root is uniform but the observed child forbids half the root
        // values, so plain sampling produces -inf weights.
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![1.0, 0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        let e = Evidence::from_pairs(&bn, &[(1, 1)]).unwrap();
        let q = FactoredProposal::prior(&bn, &e);
        let mut rng = RngStream::from_seed(31);
        let mut zero_seen = false;
        let mut positive_seen = false;
        for _ in 0..100 {
            let s = draw_weighted_sample(&bn, &e, &q, None, &mut rng).unwrap();
            if s.log_weight.is_zero() {
                zero_seen = true;
            } else {
                positive_seen = true;
            }
        }
        assert!(zero_seen && positive_seen);
    }

    #[test]
    fn samplesearch_mode_weights_are_finite() {
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![0], vec![1.0, 0.0, 0.5, 0.5]),
            ],
        )
        .unwrap();
        let e = Evidence::empty();
        let q = FactoredProposal::prior(&bn, &e);
        let cn = extract_constraints(&bn, &e);
        let mut rng = RngStream::from_seed(41);
        for _ in 0..200 {
            let s = draw_weighted_sample(&bn, &e, &q, Some(&cn), &mut rng).unwrap();
            assert!(!s.log_weight.is_zero());
            assert_eq!(s.kind, DensityKind::BacktrackFree);
        }
    }

    #[test]
    fn non_covering_proposals_are_rejected() {
        let q = FactoredProposal::from_tables(
            vec![2, 2],
            vec![0, 1],
            vec![(vec![], vec![0.5, 0.5]), (vec![], vec![0.5, 0.5])],
            false,
        )
        .unwrap();
        let bn = BeliefNetwork::new(
            vec![2, 2],
            vec![
                (vec![], vec![0.5, 0.5]),
                (vec![], vec![0.5, 0.5]),
            ],
        )
        .unwrap();
        let cn = extract_constraints(&bn, &Evidence::empty());
        let mut rng = RngStream::from_seed(51);
        assert!(matches!(
            draw_weighted_sample(&bn, &Evidence::empty(), &q, Some(&cn), &mut rng),
            Err(SampleSearchError::NonCoveringProposal)
        ));
    }

    #[test]
    fn empirical_distribution_matches_qr() {
        // 3 consistent assignments; compare 20k draws against Q^R.
        let q = uniform_pair();
        let cn = forbid_origin();
        let mut rng = RngStream::from_seed(61);
        let draws = 20_000usize;
        let mut counts = [0usize; 4];
        for _ in 0..draws {
            let x = sample_search(&q, &cn, &Assignment::new(2), &mut rng).unwrap();
            counts[(x.get(0).unwrap() * 2 + x.get(1).unwrap()) as usize] += 1;
        }
        let expected = [0.0, 0.5, 0.25, 0.25];
        let tv: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&c, p)| (c as f64 / draws as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "total variation {tv}");
    }
}
