//! Factored proposal distributions and the ordered Monte Carlo sampler.
//!
//! A proposal is a product `Q(X) = prod_i Q_i(X_i | Y_i)` along a fixed
//! ordering of the non-evidence variables, with each context `Y_i` drawn
//! from earlier variables. Sampling walks the ordering and draws each
//! variable from its conditional given the values already drawn.
//!
//! Two builders are provided: the prior proposal (the CPTs themselves with
//! evidence parents clamped, i.e. likelihood weighting) and a proposal
//! derived from loopy belief propagation with a floor that keeps every
//! conditional entry positive.

use alloc::vec::Vec;

use crate::bp;
use crate::logprob::{math, LogProb};
use crate::model::{Assignment, BeliefNetwork, Evidence};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProposalError {
    #[error("belief propagation requires at least one iteration")]
    ZeroIterations,
    #[error("damping must lie in [0, 1), got {0}")]
    InvalidDamping(f64),
    #[error("proposal floor must lie in (0, 1), got {0}")]
    InvalidFloor(f64),
    #[error("ordering entry {var} is out of range or repeated")]
    InvalidOrdering { var: usize },
    #[error("context of position {position} must reference earlier variables")]
    InvalidContext { position: usize },
    #[error("conditional table at position {position} has {got} entries, expected {expected}")]
    TableSize {
        position: usize,
        expected: usize,
        got: usize,
    },
    #[error("conditional at position {position}, row {row}: entries sum to {sum}, expected 1")]
    RowSum { position: usize, row: usize, sum: f64 },
    #[error("conditional at position {position} contains a negative or NaN entry")]
    BadEntry { position: usize },
    #[error("assignment leaves proposal variable {var} unset")]
    IncompleteAssignment { var: usize },
}

/// One conditional `Q_i(X_i | Y_i)`.
///
/// Rows are indexed by the context configuration (first context variable
/// slowest) with the child value fastest, and are stored normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalFactor {
    var: usize,
    context: Vec<usize>,
    table: Vec<f64>,
    log_table: Vec<f64>,
}

impl ProposalFactor {
    pub fn variable(&self) -> usize {
        self.var
    }

    /// The context `Y_i`, a subset of variables earlier in the ordering.
    pub fn context(&self) -> &[usize] {
        &self.context
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// A factored proposal over the non-evidence variables.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredProposal {
    cards: Vec<u32>,
    order: Vec<usize>,
    factors: Vec<ProposalFactor>,
    context_bound: usize,
    covering: bool,
}

impl FactoredProposal {
    /// Generic constructor from raw conditional tables.
    ///
    /// `factors[i]` is `(context, table)` for the variable at `order[i]`.
    /// Rows must sum to 1 within `1e-9`; they are renormalized on storage so
    /// downstream density computations see mass exactly 1 per row. Pass
    /// `covering = true` only when `f(x) > 0` implies `Q(x) > 0`; the
    /// SampleSearch machinery refuses non-covering proposals.
    pub fn from_tables(
        cards: Vec<u32>,
        order: Vec<usize>,
        factors: Vec<(Vec<usize>, Vec<f64>)>,
        covering: bool,
    ) -> Result<FactoredProposal, ProposalError> {
        Self::from_tables_with_tolerance(cards, order, factors, covering, 1e-9)
    }

    fn from_tables_with_tolerance(
        cards: Vec<u32>,
        order: Vec<usize>,
        factors: Vec<(Vec<usize>, Vec<f64>)>,
        covering: bool,
        row_tolerance: f64,
    ) -> Result<FactoredProposal, ProposalError> {
        assert_eq!(order.len(), factors.len(), "one conditional per position");
        let n = cards.len();
        let mut position_of = alloc::vec![usize::MAX; n];
        for (pos, &v) in order.iter().enumerate() {
            if v >= n || position_of[v] != usize::MAX {
                return Err(ProposalError::InvalidOrdering { var: v });
            }
            position_of[v] = pos;
        }

        let mut built = Vec::with_capacity(factors.len());
        let mut context_bound = 0usize;
        for (position, (context, mut table)) in factors.into_iter().enumerate() {
            for &c in &context {
                if c >= n || position_of[c] == usize::MAX || position_of[c] >= position {
                    return Err(ProposalError::InvalidContext { position });
                }
            }
            let var = order[position];
            let card = cards[var] as usize;
            let rows: usize = context.iter().map(|&c| cards[c] as usize).product();
            if table.len() != rows * card {
                return Err(ProposalError::TableSize {
                    position,
                    expected: rows * card,
                    got: table.len(),
                });
            }
            if table.iter().any(|p| p.is_nan() || *p < 0.0) {
                return Err(ProposalError::BadEntry { position });
            }
            for row in 0..rows {
                let slice = &mut table[row * card..(row + 1) * card];
                let sum: f64 = slice.iter().sum();
                if math::abs(sum - 1.0) > row_tolerance {
                    return Err(ProposalError::RowSum {
                        position,
                        row,
                        sum,
                    });
                }
                for p in slice.iter_mut() {
                    *p /= sum;
                }
            }
            context_bound = context_bound.max(context.len());
            let log_table = table.iter().map(|&p| math::ln(p)).collect();
            built.push(ProposalFactor {
                var,
                context,
                table,
                log_table,
            });
        }

        Ok(FactoredProposal {
            cards,
            order,
            factors: built,
            context_bound,
            covering,
        })
    }

    /// The prior proposal: each non-evidence variable keeps its own CPT with
    /// evidence parents clamped (classic likelihood weighting).
    ///
    /// Because every factor of `Q` is a factor of `f`, `f(x) > 0` implies
    /// `Q(x) > 0` and the proposal is covering.
    pub fn prior(bn: &BeliefNetwork, e: &Evidence) -> FactoredProposal {
        let order: Vec<usize> = bn
            .topological_order()
            .iter()
            .copied()
            .filter(|v| !e.contains(*v))
            .collect();
        let mut factors = Vec::with_capacity(order.len());
        for &var in &order {
            let cpt = bn.cpt(var);
            let context: Vec<usize> = cpt
                .parents()
                .iter()
                .copied()
                .filter(|p| !e.contains(*p))
                .collect();
            let card = cpt.child_cardinality() as usize;
            let rows: usize = context.iter().map(|&c| bn.cardinality(c) as usize).product();
            let mut table = Vec::with_capacity(rows * card);
            let mut ctx_values = alloc::vec![0u32; context.len()];
            for row in 0..rows {
                let mut rem = row;
                for pos in (0..context.len()).rev() {
                    let c = bn.cardinality(context[pos]) as usize;
                    ctx_values[pos] = (rem % c) as u32;
                    rem /= c;
                }
                let mut cpt_row = 0usize;
                for &p in cpt.parents() {
                    let value = e.get(p).unwrap_or_else(|| {
                        ctx_values[context.iter().position(|&c| c == p).unwrap()]
                    });
                    cpt_row = cpt_row * bn.cardinality(p) as usize + value as usize;
                }
                for v in 0..card {
                    table.push(cpt.prob(cpt_row, v as u32));
                }
            }
            factors.push((context, table));
        }
        // CPT rows were validated at parse tolerance; reuse it here.
        Self::from_tables_with_tolerance(bn.cardinalities().to_vec(), order, factors, true, 1e-5)
            .expect("prior proposal construction is internally consistent")
    }

    /// Proposal derived from loopy sum-product on the factor graph with
    /// evidence clamped. Each conditional entry is floored at `floor` and
    /// the row renormalized, so the proposal covers the whole domain. The
    /// last iterate is used whether or not the messages converged.
    pub fn from_belief_propagation(
        bn: &BeliefNetwork,
        e: &Evidence,
        iterations: u32,
        damping: f64,
        floor: f64,
    ) -> Result<FactoredProposal, ProposalError> {
        if iterations == 0 {
            return Err(ProposalError::ZeroIterations);
        }
        if !(0.0..1.0).contains(&damping) {
            return Err(ProposalError::InvalidDamping(damping));
        }
        if !(floor > 0.0 && floor < 1.0) {
            return Err(ProposalError::InvalidFloor(floor));
        }

        let order: Vec<usize> = bn
            .topological_order()
            .iter()
            .copied()
            .filter(|v| !e.contains(*v))
            .collect();
        let conditionals = bp::conditionals(bn, e, iterations, damping);
        let mut factors = Vec::with_capacity(order.len());
        for &var in &order {
            let (context, mut table) = conditionals[var].clone().expect("non-evidence variable");
            let card = bn.cardinality(var) as usize;
            for row in table.chunks_mut(card) {
                for p in row.iter_mut() {
                    if *p < floor {
                        *p = floor;
                    }
                }
                let sum: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
            factors.push((context, table));
        }
        Self::from_tables_with_tolerance(bn.cardinalities().to_vec(), order, factors, true, 1e-6)
    }

    /// Sampling order over the non-evidence variables.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn factor(&self, position: usize) -> &ProposalFactor {
        &self.factors[position]
    }

    /// Largest context size, recorded as metadata.
    pub fn context_bound(&self) -> usize {
        self.context_bound
    }

    /// Whether `f(x) > 0` implies `Q(x) > 0`.
    pub fn is_covering(&self) -> bool {
        self.covering
    }

    pub fn variable_count(&self) -> usize {
        self.cards.len()
    }

    pub fn cardinality(&self, var: usize) -> u32 {
        self.cards[var]
    }

    /// Row index into the conditional at `position` given the context
    /// values in `x` (all context variables must be assigned).
    #[inline]
    pub(crate) fn row_index(&self, position: usize, x: &Assignment) -> usize {
        let factor = &self.factors[position];
        let mut row = 0usize;
        for &c in &factor.context {
            let v = x.get(c).expect("context variable assigned");
            row = row * self.cards[c] as usize + v as usize;
        }
        row
    }

    #[inline]
    pub(crate) fn row(&self, position: usize, x: &Assignment) -> &[f64] {
        let factor = &self.factors[position];
        let card = self.cards[factor.var] as usize;
        let start = self.row_index(position, x) * card;
        &factor.table[start..start + card]
    }

    #[inline]
    pub(crate) fn log_prob(&self, position: usize, x: &Assignment, value: u32) -> f64 {
        let factor = &self.factors[position];
        let card = self.cards[factor.var] as usize;
        factor.log_table[self.row_index(position, x) * card + value as usize]
    }

    /// Ordered Monte Carlo sampler: draws each variable in order from its
    /// conditional given the values already drawn. Returns the assignment
    /// (only proposal variables set) and `log Q(x)`. Never returns an `x`
    /// with `Q(x) = 0`, since zero-probability values cannot be drawn.
    pub fn sample(&self, rng: &mut RngStream) -> (Assignment, LogProb) {
        let mut x = Assignment::new(self.cards.len());
        let lp = self.sample_into(&mut x, rng);
        (x, lp)
    }

    /// As [`FactoredProposal::sample`], drawing into an existing assignment
    /// (typically pre-filled with evidence).
    pub fn sample_into(&self, x: &mut Assignment, rng: &mut RngStream) -> LogProb {
        let mut log_q = 0.0f64;
        for position in 0..self.order.len() {
            let factor = &self.factors[position];
            let card = self.cards[factor.var] as usize;
            let row_start = self.row_index(position, x) * card;
            let row = &factor.table[row_start..row_start + card];
            let total: f64 = row.iter().sum();
            let value = rng.pick_weighted(row, total);
            log_q += factor.log_table[row_start + value];
            x.set(factor.var, value as u32);
        }
        LogProb::from_ln(log_q)
    }

    /// `log Q(x)` for a full assignment of the proposal variables.
    /// Returns log 0 when some conditional entry is zero.
    pub fn log_density(&self, x: &Assignment) -> Result<LogProb, ProposalError> {
        for &var in &self.order {
            if x.get(var).is_none() {
                return Err(ProposalError::IncompleteAssignment { var });
            }
        }
        let mut total = 0.0f64;
        for position in 0..self.order.len() {
            let var = self.order[position];
            let value = x.get(var).unwrap();
            let term = self.log_prob(position, x, value);
            if term == f64::NEG_INFINITY {
                return Ok(LogProb::ZERO);
            }
            total += term;
        }
        Ok(LogProb::from_ln(total))
    }
}
