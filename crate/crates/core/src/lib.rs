//! High-confidence lower bounds on the probability of evidence in discrete
//! Bayesian networks.
//!
//! The estimator family here combines importance sampling with the Markov
//! inequality: each of `k` independent repetitions produces a quantity that
//! fails to lower-bound `P(e)` with probability at most `1/alpha`, and the
//! minimum over the repetitions is a lower bound with confidence
//! `1 - 1/alpha^k`. Five sub-estimators are provided (single sample,
//! average, maximum, and two martingale maximal-inequality variants).
//!
//! Networks with zero probabilities defeat plain importance sampling: most
//! samples hit a forbidden configuration and carry zero weight. The
//! [`samplesearch`] module removes the rejection problem by interleaving
//! backtracking search with sampling, and weighs the resulting samples by
//! the backtrack-free density they are actually drawn from.
//!
//! The crate is `no_std`-compatible (with `alloc`); everything here is pure
//! computation over immutable inputs. File formats, the CLI, and the
//! experiment harness live in the companion `markov-lb-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod bp;

pub mod bounds;
pub mod constraints;
pub mod exact;
pub mod generate;
pub mod logprob;
pub mod model;
pub mod proposal;
pub mod rng;
pub mod samplesearch;

pub use bounds::{BoundParams, Heuristic, LowerBoundResult};
pub use constraints::ConstraintNetwork;
pub use logprob::LogProb;
pub use model::{Assignment, BeliefNetwork, Evidence};
pub use proposal::FactoredProposal;
pub use rng::RngStream;
pub use samplesearch::{DensityKind, WeightedSample};
