//! The catalog of risk-sharing rules, plus composition combinators.
//!
//! Every rule maps a [`RiskVector`] to an [`Allocation`] whose components sum
//! to the total risk `S` at every outcome ("full allocation"). The `0/0 = 0`
//! convention applies in the degenerate cases of the mean-proportional and
//! covariance rules.

use std::sync::Arc;

use thiserror::Error;

use crate::prob_core::{
    cond_expectation, cond_expectation_under, partition_of, Partition, ProbError, RandVar,
    RiskVector,
};
use crate::{real, Real, NUM_TOL, PROB_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error("rule parameters live on a different space")]
    SpaceMismatch,
    #[error("mean-proportional rule requires non-negative risks; agent {agent} is {value} at outcome {outcome}")]
    NegativeRiskForProportional {
        agent: usize,
        outcome: usize,
        value: f64,
    },
    #[error("Q weights must be strictly positive and sum to 1 over the outcome set")]
    BadMeasure,
    #[error("mixture weight must lie in [0, 1], got {0}")]
    BadMixtureWeight(f64),
    #[error("allocation does not sum to the total risk (outcome {outcome}, gap {gap})")]
    BrokenAllocation { outcome: usize, gap: f64 },
}

/// A full allocation: per-agent risks summing to the pool total pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    agents: Vec<RandVar<T>>,
}

impl<T: Real> Allocation<T> {
    /// Validates the full-allocation invariant against `total` within the
    /// standard tolerance at every outcome.
    pub fn new(agents: Vec<RandVar<T>>, total: &RandVar<T>) -> Result<Self, RuleError> {
        let space = total.space();
        for a in &agents {
            if !space.same_space(a.space()) {
                return Err(RuleError::SpaceMismatch);
            }
        }
        for outcome in 0..space.len() {
            let sum: T = agents.iter().map(|a| a.value(outcome)).sum();
            let gap = (sum - total.value(outcome)).abs();
            if gap > real(NUM_TOL) {
                return Err(RuleError::BrokenAllocation {
                    outcome,
                    gap: gap.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Allocation { agents })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, i: usize) -> &RandVar<T> {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[RandVar<T>] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<RandVar<T>> {
        self.agents
    }
}

/// Declarative rule identifier with parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum RuleSpec<T> {
    Identity,
    AllInOne,
    MeanAdjusted,
    Uniform,
    Cmrs,
    MeanProportional,
    Covariance,
    QCmrs { weights: Vec<T> },
    GeneralizedCmrs { partition: Partition<T> },
    Mixture { lambda: T, a: Box<RuleSpec<T>>, b: Box<RuleSpec<T>> },
    Gated { trigger: RiskVector<T>, a: Box<RuleSpec<T>>, b: Box<RuleSpec<T>> },
    ComonotonicImprovement,
}

impl<T: Real> RuleSpec<T> {
    /// Canonical textual name, as used by the CLI.
    pub fn canonical_name(&self) -> &'static str {
        match self {
            RuleSpec::Identity => "identity",
            RuleSpec::AllInOne => "all-in-one",
            RuleSpec::MeanAdjusted => "mean-adjusted",
            RuleSpec::Uniform => "uniform",
            RuleSpec::Cmrs => "cmrs",
            RuleSpec::MeanProportional => "mean-proportional",
            RuleSpec::Covariance => "covariance",
            RuleSpec::QCmrs { .. } => "q-cmrs",
            RuleSpec::GeneralizedCmrs { .. } => "generalized-cmrs",
            RuleSpec::Mixture { .. } => "mixture",
            RuleSpec::Gated { .. } => "gated",
            RuleSpec::ComonotonicImprovement => "comono-improve",
        }
    }

    /// Parses a parameterless rule name.
    pub fn from_simple_name(name: &str) -> Option<Self> {
        Some(match name {
            "identity" => RuleSpec::Identity,
            "all-in-one" => RuleSpec::AllInOne,
            "mean-adjusted" => RuleSpec::MeanAdjusted,
            "uniform" => RuleSpec::Uniform,
            "cmrs" => RuleSpec::Cmrs,
            "mean-proportional" => RuleSpec::MeanProportional,
            "covariance" => RuleSpec::Covariance,
            "comono-improve" => RuleSpec::ComonotonicImprovement,
            _ => return None,
        })
    }
}

/// Applies a rule to a risk vector.
pub fn apply<T: Real>(rule: &RuleSpec<T>, x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    match rule {
        RuleSpec::Identity => Allocation::new(x.agents().to_vec(), &x.total()),
        RuleSpec::AllInOne => all_in_one(x),
        RuleSpec::MeanAdjusted => mean_adjusted(x),
        RuleSpec::Uniform => uniform(x),
        RuleSpec::Cmrs => cmrs(x),
        RuleSpec::MeanProportional => mean_proportional(x),
        RuleSpec::Covariance => covariance_rule(x),
        RuleSpec::QCmrs { weights } => q_cmrs(x, weights),
        RuleSpec::GeneralizedCmrs { partition } => generalized_cmrs(x, partition),
        RuleSpec::Mixture { lambda, a, b } => mixture(*lambda, a, b, x),
        RuleSpec::Gated { trigger, a, b } => gated(x, trigger, a, b),
        RuleSpec::ComonotonicImprovement => comonotonic_improvement(x),
    }
}

fn all_in_one<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let zero = RandVar::constant(Arc::clone(x.space()), T::zero())?;
    let mut agents = vec![zero; x.n_agents()];
    agents[0] = total.clone();
    Allocation::new(agents, &total)
}

fn mean_adjusted<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let mean_s = total.expectation();
    let mut agents = Vec::with_capacity(x.n_agents());
    for (i, xi) in x.agents().iter().enumerate() {
        let mean_i = xi.expectation();
        if i == 0 {
            agents.push(total.shift(mean_i - mean_s));
        } else {
            agents.push(RandVar::constant(Arc::clone(x.space()), mean_i)?);
        }
    }
    Allocation::new(agents, &total)
}

fn uniform<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let share = total.scale(T::one() / real(x.n_agents() as f64));
    Allocation::new(vec![share; x.n_agents()], &total)
}

/// Conditional mean risk sharing: agent `i` receives `E[X_i | S]`.
pub fn cmrs<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let sigma_s = partition_of(&[total.clone()])?;
    let agents = x
        .agents()
        .iter()
        .map(|xi| cond_expectation(xi, &sigma_s))
        .collect::<Result<Vec<_>, _>>()?;
    Allocation::new(agents, &total)
}

/// CMRS under a change of measure: `E^Q[X_i | S]` with `Q` given as a weight
/// sequence over the same outcome set.
pub fn q_cmrs<T: Real>(x: &RiskVector<T>, qweights: &[T]) -> Result<Allocation<T>, RuleError> {
    if qweights.len() != x.space().len() {
        return Err(RuleError::BadMeasure);
    }
    if qweights.iter().any(|&q| q <= T::zero()) {
        return Err(RuleError::BadMeasure);
    }
    let qsum: T = qweights.iter().copied().sum();
    if (qsum - T::one()).abs() > real(PROB_TOL) {
        return Err(RuleError::BadMeasure);
    }
    let total = x.total();
    let sigma_s = partition_of(&[total.clone()])?;
    let agents = x
        .agents()
        .iter()
        .map(|xi| cond_expectation_under(xi, &sigma_s, qweights))
        .collect::<Result<Vec<_>, _>>()?;
    Allocation::new(agents, &total)
}

/// `A_i = (S - E[S]) Cov(X_i, S) / Var(S) + E[X_i]`, with `0/0 = 0` when `S`
/// is degenerate.
pub fn covariance_rule<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let mean_s = total.expectation();
    let var_s = total.variance();
    let centred = total.shift(-mean_s);
    let mut agents = Vec::with_capacity(x.n_agents());
    for xi in x.agents() {
        let mean_i = xi.expectation();
        let cov: T = xi
            .values()
            .iter()
            .zip(centred.values())
            .zip(x.space().probs())
            .map(|((&v, &c), &p)| (v - mean_i) * c * p)
            .sum();
        let beta = if var_s > T::zero() { cov / var_s } else { T::zero() };
        agents.push(centred.scale(beta).shift(mean_i));
    }
    Allocation::new(agents, &total)
}

/// `A_i = S * E[X_i] / E[S]` on non-negative risks, with `0/0 = 0`.
pub fn mean_proportional<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    for (agent, xi) in x.agents().iter().enumerate() {
        if let Some(outcome) = xi.values().iter().position(|&v| v < T::zero()) {
            return Err(RuleError::NegativeRiskForProportional {
                agent,
                outcome,
                value: xi.value(outcome).to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let total = x.total();
    let mean_s = total.expectation();
    let agents = x
        .agents()
        .iter()
        .map(|xi| {
            let w = if mean_s > T::zero() {
                xi.expectation() / mean_s
            } else {
                T::zero()
            };
            total.scale(w)
        })
        .collect();
    Allocation::new(agents, &total)
}

/// Generalized CMRS with target information `g`: conditions on the join of
/// `g` and `σ(S)`.
pub fn generalized_cmrs<T: Real>(
    x: &RiskVector<T>,
    g: &Partition<T>,
) -> Result<Allocation<T>, RuleError> {
    if !x.space().same_space(g.space()) {
        return Err(RuleError::SpaceMismatch);
    }
    let total = x.total();
    let sigma_s = partition_of(&[total.clone()])?;
    let target = g.refine(&sigma_s)?;
    let agents = x
        .agents()
        .iter()
        .map(|xi| cond_expectation(xi, &target))
        .collect::<Result<Vec<_>, _>>()?;
    Allocation::new(agents, &total)
}

fn mixture<T: Real>(
    lambda: T,
    a: &RuleSpec<T>,
    b: &RuleSpec<T>,
    x: &RiskVector<T>,
) -> Result<Allocation<T>, RuleError> {
    if lambda < T::zero() || lambda > T::one() {
        return Err(RuleError::BadMixtureWeight(
            lambda.to_f64().unwrap_or(f64::NAN),
        ));
    }
    let alloc_a = apply(a, x)?;
    let alloc_b = apply(b, x)?;
    let agents = alloc_a
        .agents()
        .iter()
        .zip(alloc_b.agents())
        .map(|(ai, bi)| {
            ai.scale(lambda)
                .checked_add(&bi.scale(T::one() - lambda))
                .map_err(RuleError::from)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Allocation::new(agents, &x.total())
}

/// Applies `a` when `x` equals `trigger` componentwise within tolerance and
/// `b` otherwise. A risk vector on a different space never matches the
/// trigger, so the gate simply stays closed there.
pub fn gated<T: Real>(
    x: &RiskVector<T>,
    trigger: &RiskVector<T>,
    a: &RuleSpec<T>,
    b: &RuleSpec<T>,
) -> Result<Allocation<T>, RuleError> {
    let tol = real(NUM_TOL);
    let matches = x.n_agents() == trigger.n_agents()
        && x.space().same_space(trigger.space())
        && x.agents().iter().zip(trigger.agents()).all(|(xi, ti)| {
            xi.values()
                .iter()
                .zip(ti.values())
                .all(|(&v, &w)| (v - w).abs() <= tol)
        });
    if matches {
        apply(a, x)
    } else {
        apply(b, x)
    }
}

/// Comonotonic improvement: returns an allocation that is comonotonic, sums
/// to `S` pointwise, and improves every component in convex order.
///
/// The construction sweeps over component pairs and outcome pairs; whenever
/// two components move in opposite directions across a pair of outcomes, a
/// mean-preserving pinch transfers the overlapping oscillation between them.
/// Each pinch preserves the two components' pointwise sum and weakly
/// decreases both in convex order, and it strictly reduces the summed
/// variance, so the sweep reaches a fixed point. Sweeps are capped at
/// `n^2 * m^2` with convergence declared when no pair moves by more than the
/// standard tolerance.
pub fn comonotonic_improvement<T: Real>(x: &RiskVector<T>) -> Result<Allocation<T>, RuleError> {
    let total = x.total();
    let space = Arc::clone(x.space());
    let n = x.n_agents();
    let m = space.len();
    let mut vals: Vec<Vec<T>> = x.agents().iter().map(|a| a.values().to_vec()).collect();
    let tol = real::<T>(NUM_TOL);
    let max_sweeps = n * n * m * m;

    for _ in 0..max_sweeps {
        let mut largest_move = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                for a in 0..m {
                    for b in (a + 1)..m {
                        let gi = vals[i][a] - vals[i][b];
                        let gj = vals[j][a] - vals[j][b];
                        if gi * gj >= -tol * tol {
                            continue;
                        }
                        // orient so component i is higher at `hi`
                        let (hi, lo) = if gi > T::zero() { (a, b) } else { (b, a) };
                        let gap_i = vals[i][hi] - vals[i][lo];
                        let gap_j = vals[j][lo] - vals[j][hi];
                        debug_assert!(gap_i > T::zero() && gap_j > T::zero());
                        let p_hi = space.prob(hi);
                        let p_lo = space.prob(lo);
                        let delta = p_lo / (p_hi + p_lo) * gap_i.min(gap_j);
                        vals[i][hi] = vals[i][hi] - delta;
                        vals[j][hi] = vals[j][hi] + delta;
                        let back = p_hi / p_lo * delta;
                        vals[i][lo] = vals[i][lo] + back;
                        vals[j][lo] = vals[j][lo] - back;
                        largest_move = largest_move.max(delta).max(back);
                    }
                }
            }
        }
        if largest_move <= tol {
            break;
        }
    }

    let agents = vals
        .into_iter()
        .map(|v| RandVar::new(Arc::clone(&space), v).map_err(RuleError::from))
        .collect::<Result<Vec<_>, _>>()?;
    Allocation::new(agents, &total)
}
