//! Probabilistic lower bounds on `P(e)` from importance-sampling weights
//! via the Markov inequality.
//!
//! One repetition produces a value that fails to lower-bound the target
//! mean with probability at most `1/alpha`; the minimum over `k`
//! independent repetitions fails with probability at most `1/alpha^k`.
//! Which value a repetition produces is the heuristic's choice:
//!
//! - `Min`: a single weight divided by `alpha` (the bare scheme),
//! - `Average`: the sample mean of `N` weights divided by `alpha`,
//! - `Max`: the largest of `N` weights divided by
//!   `beta = 1 / (1 - (1 - 1/alpha)^(1/N))`,
//! - `MartingalePermutation`: the running-product maximal inequality
//!   applied to a random permutation of the weights,
//! - `MartingaleOrder`: the order-statistics maximal inequality, with the
//!   binomial coefficient inside each factor of the product.
//!
//! Everything is computed in log space; binomial coefficients go through
//! the log-gamma function.

use alloc::vec::Vec;

use crate::logprob::{math, LogProb, LogSumExp};
use crate::rng::RngStream;
use crate::samplesearch::WeightedSample;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BoundsError {
    #[error("alpha must exceed 1, got {0}")]
    InvalidAlpha(f64),
    #[error("the repetition count k must be at least 1")]
    InvalidRepetitions,
    #[error("the per-repetition sample count N must be at least 1")]
    InvalidSampleCount,
    #[error("sample-size calculators need M > 0, epsilon > 0, and delta in (0, 1)")]
    InvalidCalculatorInput,
    #[error("log-relative error is defined for probabilities strictly inside (0, 1)")]
    InvalidProbability,
}

/// The five sub-estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heuristic {
    Min,
    Average,
    Max,
    MartingalePermutation,
    MartingaleOrder,
}

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [
        Heuristic::Min,
        Heuristic::Average,
        Heuristic::Max,
        Heuristic::MartingalePermutation,
        Heuristic::MartingaleOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::Min => "min",
            Heuristic::Average => "avg",
            Heuristic::Max => "max",
            Heuristic::MartingalePermutation => "perm",
            Heuristic::MartingaleOrder => "ord",
        }
    }
}

impl core::fmt::Display for Heuristic {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parameters of one bound computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub alpha: f64,
    /// Outer repetitions `k`; the final bound is the minimum over them.
    pub repetitions: u32,
    /// Samples per repetition `N`. The `Min` heuristic always draws a
    /// single sample per repetition regardless of this value.
    pub samples_per_repetition: usize,
    pub heuristic: Heuristic,
}

impl BoundParams {
    pub fn new(
        alpha: f64,
        repetitions: u32,
        samples_per_repetition: usize,
        heuristic: Heuristic,
    ) -> Result<BoundParams, BoundsError> {
        if !(alpha > 1.0) || !alpha.is_finite() {
            return Err(BoundsError::InvalidAlpha(alpha));
        }
        if repetitions == 0 {
            return Err(BoundsError::InvalidRepetitions);
        }
        if samples_per_repetition == 0 {
            return Err(BoundsError::InvalidSampleCount);
        }
        Ok(BoundParams {
            alpha,
            repetitions,
            samples_per_repetition,
            heuristic,
        })
    }

    /// `1 - 1/alpha^k`, the probability that the returned value really is a
    /// lower bound.
    pub fn confidence(&self) -> f64 {
        1.0 - math::powf(self.alpha, -(self.repetitions as f64))
    }

    fn effective_samples(&self) -> usize {
        match self.heuristic {
            Heuristic::Min => 1,
            _ => self.samples_per_repetition,
        }
    }
}

/// Outcome of [`run_markov_lb`].
#[derive(Debug, Clone)]
pub struct LowerBoundResult {
    /// `min` of the per-repetition estimates; a probabilistic lower bound
    /// on `P(e)` with probability [`LowerBoundResult::confidence`].
    pub log_bound: LogProb,
    pub confidence: f64,
    pub params: BoundParams,
    /// The `Max` heuristic's divisor `beta`; `None` for other heuristics.
    pub beta: Option<f64>,
    /// One sub-estimate per repetition, in repetition order.
    pub per_iteration: Vec<LogProb>,
    pub samples_used: u64,
    /// Fingerprint of the stream the run was handed, for reproducibility
    /// metadata.
    pub stream_fingerprint: u64,
}

impl LowerBoundResult {
    /// A bound of zero is valid but carries no information; this happens
    /// when every sample of some repetition had zero weight.
    pub fn is_trivial(&self) -> bool {
        self.log_bound.is_zero()
    }
}

/// Runs `k` independent repetitions, each drawing fresh samples from
/// `source` on its own child stream, and returns the minimum sub-estimate.
///
/// Repetition `r` uses `rng.child(r)`, so the result is bit-identical for a
/// fixed master stream no matter how repetitions would be scheduled across
/// workers. Errors from `source` (unsatisfiable constraints, cooperative
/// interruption) abort the run and propagate.
pub fn run_markov_lb<F, E>(
    mut source: F,
    params: &BoundParams,
    rng: &RngStream,
) -> Result<LowerBoundResult, E>
where
    F: FnMut(&mut RngStream) -> Result<WeightedSample, E>,
{
    let n = params.effective_samples();
    let mut per_iteration = Vec::with_capacity(params.repetitions as usize);
    let mut beta = None;
    let mut samples_used = 0u64;
    for rep in 0..params.repetitions {
        let mut stream = rng.child(rep as u64);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(source(&mut stream)?.log_weight);
            samples_used += 1;
        }
        let estimate = match params.heuristic {
            Heuristic::Min => lb_min(weights[0], params.alpha),
            Heuristic::Average => lb_average(&weights, params.alpha),
            Heuristic::Max => {
                let (bound, b) = lb_max(&weights, params.alpha);
                beta = Some(b);
                bound
            }
            Heuristic::MartingalePermutation => {
                lb_martingale_permutation(&weights, params.alpha, &mut stream)
            }
            Heuristic::MartingaleOrder => lb_martingale_order(&weights, params.alpha),
        };
        per_iteration.push(estimate);
    }
    let log_bound = per_iteration
        .iter()
        .copied()
        .fold(None, |acc: Option<LogProb>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        })
        .expect("k >= 1");
    Ok(LowerBoundResult {
        log_bound,
        confidence: params.confidence(),
        params: *params,
        beta,
        per_iteration,
        samples_used,
        stream_fingerprint: rng.fingerprint(),
    })
}

/// Single-sample estimate `w / alpha`.
pub fn lb_min(weight: LogProb, alpha: f64) -> LogProb {
    LogProb::from_ln(weight.ln() - math::ln(alpha))
}

/// Sample-mean estimate `(sum w_i / N) / alpha`.
pub fn lb_average(weights: &[LogProb], alpha: f64) -> LogProb {
    assert!(!weights.is_empty(), "lb_average needs at least one weight");
    let mut acc = LogSumExp::new();
    for w in weights {
        acc.push(w.ln());
    }
    LogProb::from_ln(acc.value() - math::ln(weights.len() as f64) - math::ln(alpha))
}

/// Maximum estimate `max w_i / beta` with
/// `beta = 1 / (1 - (1 - 1/alpha)^(1/N))`; returns `(bound, beta)`.
/// For `N = 1`, `beta` is `alpha` exactly and the estimate reduces to
/// [`lb_min`].
pub fn lb_max(weights: &[LogProb], alpha: f64) -> (LogProb, f64) {
    assert!(!weights.is_empty(), "lb_max needs at least one weight");
    let n = weights.len();
    let beta = if n == 1 {
        alpha
    } else {
        1.0 / (1.0 - math::powf(1.0 - 1.0 / alpha, 1.0 / n as f64))
    };
    let best = weights
        .iter()
        .copied()
        .fold(LogProb::ZERO, LogProb::max);
    (LogProb::from_ln(best.ln() - math::ln(beta)), beta)
}

/// Martingale maximal-inequality estimate over the weights in the order
/// given: `max_i ((prod_{j<=i} w_j) / alpha)^(1/i)`.
pub fn lb_martingale_sequence(weights: &[LogProb], alpha: f64) -> LogProb {
    assert!(
        !weights.is_empty(),
        "lb_martingale_sequence needs at least one weight"
    );
    let ln_alpha = math::ln(alpha);
    let mut prefix = 0.0f64;
    let mut best = f64::NEG_INFINITY;
    for (i, w) in weights.iter().enumerate() {
        prefix += w.ln();
        let term = (prefix - ln_alpha) / (i + 1) as f64;
        if term > best {
            best = term;
        }
    }
    LogProb::from_ln(best)
}

/// [`lb_martingale_sequence`] applied to a uniformly random permutation of
/// the weights.
pub fn lb_martingale_permutation(
    weights: &[LogProb],
    alpha: f64,
    rng: &mut RngStream,
) -> LogProb {
    let mut shuffled: Vec<LogProb> = weights.to_vec();
    rng.shuffle(&mut shuffled);
    lb_martingale_sequence(&shuffled, alpha)
}

/// Order-statistics martingale estimate: weights sorted descending, with
/// the binomial coefficient dividing every factor of the inner product,
/// i.e. `max_i ((prod_{j<=i} w_(N-j+1) / C(N, i)) / alpha)^(1/i)`.
pub fn lb_martingale_order(weights: &[LogProb], alpha: f64) -> LogProb {
    martingale_order_impl(weights, alpha, true)
}

/// Variant of [`lb_martingale_order`] dividing by `C(N, i)` once per prefix
/// instead of once per factor. Kept for comparison; the per-factor form is
/// the one used everywhere else in the crate.
pub fn lb_martingale_order_single_division(weights: &[LogProb], alpha: f64) -> LogProb {
    martingale_order_impl(weights, alpha, false)
}

fn martingale_order_impl(weights: &[LogProb], alpha: f64, per_factor: bool) -> LogProb {
    assert!(
        !weights.is_empty(),
        "lb_martingale_order needs at least one weight"
    );
    let n = weights.len();
    let mut sorted: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let ln_alpha = math::ln(alpha);
    let mut prefix = 0.0f64;
    let mut best = f64::NEG_INFINITY;
    for i in 1..=n {
        prefix += sorted[i - 1];
        let ln_binom = ln_choose(n as u64, i as u64);
        let discount = if per_factor {
            i as f64 * ln_binom
        } else {
            ln_binom
        };
        let term = (prefix - discount - ln_alpha) / i as f64;
        if term > best {
            best = term;
        }
    }
    LogProb::from_ln(best)
}

/// `ln C(n, k)` via log-gamma, exact at the boundaries.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    if k == 0 || k == n {
        return 0.0;
    }
    math::ln_gamma((n + 1) as f64)
        - math::ln_gamma((k + 1) as f64)
        - math::ln_gamma((n - k + 1) as f64)
}

/// Samples needed for an `(epsilon, delta)` relative-error guarantee on a
/// mean `m`: `ceil(4 / (m eps^2) * ln(2 / delta))`.
pub fn required_samples_dagum(m: f64, epsilon: f64, delta: f64) -> Result<u64, BoundsError> {
    check_calculator_input(m, epsilon, delta)?;
    let raw = 4.0 / (m * epsilon * epsilon) * math::ln(2.0 / delta);
    Ok(ceil_to_u64(raw))
}

/// The improved calculator:
/// `ceil(1/m * ln(2/delta) / ((1 + eps) ln(1 + eps) - eps))`.
pub fn required_samples_cheng(m: f64, epsilon: f64, delta: f64) -> Result<u64, BoundsError> {
    check_calculator_input(m, epsilon, delta)?;
    let denom = (1.0 + epsilon) * math::ln_1p(epsilon) - epsilon;
    let raw = math::ln(2.0 / delta) / (m * denom);
    Ok(ceil_to_u64(raw))
}

fn check_calculator_input(m: f64, epsilon: f64, delta: f64) -> Result<(), BoundsError> {
    if m > 0.0 && epsilon > 0.0 && delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(BoundsError::InvalidCalculatorInput)
    }
}

/// Saturating ceil; tiny means can push the requirement past `u64`.
fn ceil_to_u64(raw: f64) -> u64 {
    let c = math::ceil(raw);
    if c >= u64::MAX as f64 {
        u64::MAX
    } else {
        c as u64
    }
}

/// Log-relative error `|(ln p_exact - ln p_approx) / ln p_exact|`.
///
/// Both probabilities must lie strictly inside `(0, 1)`; the metric is
/// invariant under a change of logarithm base because numerator and
/// denominator rescale identically.
pub fn log_relative_error(p_exact: LogProb, p_approx: LogProb) -> Result<f64, BoundsError> {
    let le = p_exact.ln();
    let la = p_approx.ln();
    if !(le.is_finite() && le < 0.0 && la.is_finite() && la < 0.0) {
        return Err(BoundsError::InvalidProbability);
    }
    Ok(math::abs((le - la) / le))
}
