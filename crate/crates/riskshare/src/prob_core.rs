//! Exact finite-probability primitives: spaces, random variables, partitions,
//! conditional expectation, convex order, comonotonicity.
//!
//! A [`FiniteSpace`] is a list of strictly positive outcome weights summing to
//! one. Random variables assign one real value per outcome; σ-fields are
//! modelled as [`Partition`]s of the outcome indices. With all weights
//! positive, almost-sure identification is automatic and conditional
//! expectations are total functions.

use std::cmp::Ordering;
use std::sync::Arc;

use thiserror::Error;

use crate::{grouped_eq, real, Real, GROUP_TOL, NUM_TOL, PROB_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbError {
    #[error("outcome {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, not 1")]
    WeightsDoNotSumToOne { sum: f64 },
    #[error("empty space")]
    EmptySpace,
    #[error("non-finite value at index {index}")]
    NonFiniteValue { index: usize },
    #[error("value list has length {got}, space has {expected} outcomes")]
    LengthMismatch { got: usize, expected: usize },
    #[error("operands live on different spaces")]
    SpaceMismatch,
    #[error("variance must be positive, got {variance}")]
    BadVariance { variance: f64 },
    #[error("partition blocks must be disjoint, non-empty and cover the space")]
    BadPartition,
    #[error("risk vector needs at least 2 agents, got {got}")]
    TooFewAgents { got: usize },
    #[error("risk vector must be non-empty")]
    EmptyVector,
}

/// A finite probability space: strictly positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpace<T> {
    probs: Vec<T>,
}

impl<T: Real> FiniteSpace<T> {
    /// Validates and wraps outcome weights. Zero-probability outcomes are
    /// rejected rather than filtered, so every block of every partition has
    /// positive mass.
    pub fn new(probs: Vec<T>) -> Result<Arc<Self>, ProbError> {
        if probs.is_empty() {
            return Err(ProbError::EmptySpace);
        }
        for (index, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(ProbError::NonFiniteValue { index });
            }
            if p <= T::zero() {
                return Err(ProbError::NonPositiveWeight {
                    index,
                    weight: p.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        let sum: T = probs.iter().copied().sum();
        if (sum - T::one()).abs() > real(PROB_TOL) {
            return Err(ProbError::WeightsDoNotSumToOne {
                sum: sum.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Arc::new(FiniteSpace { probs }))
    }

    /// Uniform space on `m` outcomes.
    pub fn uniform(m: usize) -> Result<Arc<Self>, ProbError> {
        let p = T::one() / real::<T>(m as f64);
        let mut probs = vec![p; m];
        // Compensate rounding so the weights sum to 1 exactly.
        let sum: T = probs.iter().copied().sum();
        if let Some(last) = probs.last_mut() {
            *last = *last + (T::one() - sum);
        }
        Self::new(probs)
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, outcome: usize) -> T {
        self.probs[outcome]
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Two spaces are interchangeable when their weights agree exactly.
    pub fn same_space(self: &Arc<Self>, other: &Arc<Self>) -> bool {
        Arc::ptr_eq(self, other) || self.probs == other.probs
    }
}

/// A random variable: one finite real value per outcome of its space.
#[derive(Debug, Clone, PartialEq)]
pub struct RandVar<T> {
    space: Arc<FiniteSpace<T>>,
    values: Vec<T>,
}

impl<T: Real> RandVar<T> {
    pub fn new(space: Arc<FiniteSpace<T>>, values: Vec<T>) -> Result<Self, ProbError> {
        if values.len() != space.len() {
            return Err(ProbError::LengthMismatch {
                got: values.len(),
                expected: space.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProbError::NonFiniteValue { index });
        }
        Ok(RandVar { space, values })
    }

    pub fn constant(space: Arc<FiniteSpace<T>>, c: T) -> Result<Self, ProbError> {
        let m = space.len();
        Self::new(space, vec![c; m])
    }

    pub fn space(&self) -> &Arc<FiniteSpace<T>> {
        &self.space
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, outcome: usize) -> T {
        self.values[outcome]
    }

    pub fn expectation(&self) -> T {
        self.values
            .iter()
            .zip(self.space.probs())
            .map(|(&v, &p)| v * p)
            .sum()
    }

    pub fn variance(&self) -> T {
        let mean = self.expectation();
        self.values
            .iter()
            .zip(self.space.probs())
            .map(|(&v, &p)| (v - mean) * (v - mean) * p)
            .sum()
    }

    /// Essential supremum; with all weights positive this is the plain max.
    pub fn essential_sup(&self) -> T {
        self.values
            .iter()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }

    pub fn essential_inf(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Stop-loss transform `E[(X - d)+]`, the certificate family for convex
    /// order on finite supports.
    pub fn stop_loss(&self, d: T) -> T {
        self.values
            .iter()
            .zip(self.space.probs())
            .map(|(&v, &p)| (v - d).max(T::zero()) * p)
            .sum()
    }

    pub fn checked_add(&self, other: &Self) -> Result<Self, ProbError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn checked_sub(&self, other: &Self) -> Result<Self, ProbError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        let values = self.values.iter().map(|&v| v * c).collect();
        RandVar {
            space: Arc::clone(&self.space),
            values,
        }
    }

    pub fn shift(&self, c: T) -> Self {
        let values = self.values.iter().map(|&v| v + c).collect();
        RandVar {
            space: Arc::clone(&self.space),
            values,
        }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, ProbError> {
        if !self.space.same_space(&other.space) {
            return Err(ProbError::SpaceMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(RandVar {
            space: Arc::clone(&self.space),
            values,
        })
    }
}

/// A partition of the outcome indices: the finite-space model of a σ-field.
/// Blocks are kept in canonical order (sorted indices, blocks ordered by
/// their smallest element).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    space: Arc<FiniteSpace<T>>,
    blocks: Vec<Vec<usize>>,
}

impl<T: Real> Partition<T> {
    pub fn new(space: Arc<FiniteSpace<T>>, mut blocks: Vec<Vec<usize>>) -> Result<Self, ProbError> {
        let m = space.len();
        let mut seen = vec![false; m];
        for block in &mut blocks {
            if block.is_empty() {
                return Err(ProbError::BadPartition);
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i >= m || seen[i] {
                    return Err(ProbError::BadPartition);
                }
                seen[i] = true;
            }
        }
        if !seen.iter().all(|&s| s) {
            return Err(ProbError::BadPartition);
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition { space, blocks })
    }

    /// The trivial σ-field: one block holding every outcome.
    pub fn trivial(space: Arc<FiniteSpace<T>>) -> Self {
        let all = (0..space.len()).collect();
        Partition {
            space,
            blocks: vec![all],
        }
    }

    /// The finest σ-field: every outcome its own block.
    pub fn singletons(space: Arc<FiniteSpace<T>>) -> Self {
        let blocks = (0..space.len()).map(|i| vec![i]).collect();
        Partition { space, blocks }
    }

    pub fn space(&self) -> &Arc<FiniteSpace<T>> {
        &self.space
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn is_finer_than(&self, coarser: &Self) -> bool {
        if !self.space.same_space(&coarser.space) {
            return false;
        }
        let mut owner = vec![0usize; self.space.len()];
        for (b, block) in coarser.blocks.iter().enumerate() {
            for &i in block {
                owner[i] = b;
            }
        }
        self.blocks
            .iter()
            .all(|block| block.iter().all(|&i| owner[i] == owner[block[0]]))
    }

    /// Join of σ-fields: the coarsest partition finer than both, obtained by
    /// blockwise intersections with empties dropped.
    pub fn refine(&self, other: &Self) -> Result<Self, ProbError> {
        if !self.space.same_space(&other.space) {
            return Err(ProbError::SpaceMismatch);
        }
        let mut owner = vec![0usize; self.space.len()];
        for (b, block) in other.blocks.iter().enumerate() {
            for &i in block {
                owner[i] = b;
            }
        }
        let mut blocks = Vec::new();
        for block in &self.blocks {
            let mut by_owner: Vec<(usize, Vec<usize>)> = Vec::new();
            for &i in block {
                match by_owner.iter_mut().find(|(o, _)| *o == owner[i]) {
                    Some((_, ids)) => ids.push(i),
                    None => by_owner.push((owner[i], vec![i])),
                }
            }
            for (_, ids) in by_owner {
                blocks.push(ids);
            }
        }
        Partition::new(Arc::clone(&self.space), blocks)
    }
}

/// Level-set partition of the joint value tuple of `vars`, with the default
/// grouping tolerance.
pub fn partition_of<T: Real>(vars: &[RandVar<T>]) -> Result<Partition<T>, ProbError> {
    partition_of_with_tol(vars, real(GROUP_TOL))
}

/// Level-set partition with an explicit grouping tolerance: outcomes `ω`, `ω'`
/// share a block iff every variable's values agree within
/// `tol * max(1, |v|, |w|)`. Grouping is anchored to the first outcome of each
/// cluster so floating-point drift cannot chain levels together.
pub fn partition_of_with_tol<T: Real>(
    vars: &[RandVar<T>],
    tol: T,
) -> Result<Partition<T>, ProbError> {
    let first = vars.first().ok_or(ProbError::EmptyVector)?;
    let space = Arc::clone(first.space());
    for v in vars {
        if !space.same_space(v.space()) {
            return Err(ProbError::SpaceMismatch);
        }
    }
    let m = space.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        for v in vars {
            match v.value(a).partial_cmp(&v.value(b)).unwrap_or(Ordering::Equal) {
                Ordering::Equal => continue,
                non_eq => return non_eq,
            }
        }
        a.cmp(&b)
    });
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        let joined = blocks.last_mut().and_then(|block| {
            let anchor = block[0];
            if vars
                .iter()
                .all(|v| grouped_eq(v.value(anchor), v.value(idx), tol))
            {
                Some(block)
            } else {
                None
            }
        });
        match joined {
            Some(block) => block.push(idx),
            None => blocks.push(vec![idx]),
        }
    }
    Partition::new(space, blocks)
}

/// Conditional expectation `E[X | g]`: on each block the probability-weighted
/// average of `X`. The output is `g`-measurable by construction.
pub fn cond_expectation<T: Real>(x: &RandVar<T>, g: &Partition<T>) -> Result<RandVar<T>, ProbError> {
    cond_expectation_under(x, g, x.space().probs())
}

/// Conditional expectation computed under an alternative weight sequence `q`
/// over the same outcome set (the discrete change of measure behind Q-CMRS).
pub fn cond_expectation_under<T: Real>(
    x: &RandVar<T>,
    g: &Partition<T>,
    q: &[T],
) -> Result<RandVar<T>, ProbError> {
    if !x.space().same_space(g.space()) {
        return Err(ProbError::SpaceMismatch);
    }
    if q.len() != x.space().len() {
        return Err(ProbError::LengthMismatch {
            got: q.len(),
            expected: x.space().len(),
        });
    }
    let mut values = vec![T::zero(); x.space().len()];
    for block in g.blocks() {
        let mass: T = block.iter().map(|&i| q[i]).sum();
        let avg: T = block.iter().map(|&i| q[i] * x.value(i)).sum::<T>() / mass;
        for &i in block {
            values[i] = avg;
        }
    }
    RandVar::new(Arc::clone(x.space()), values)
}

/// True iff `X` is constant (within the grouping tolerance) on every block.
pub fn is_measurable<T: Real>(x: &RandVar<T>, g: &Partition<T>) -> Result<bool, ProbError> {
    if !x.space().same_space(g.space()) {
        return Err(ProbError::SpaceMismatch);
    }
    let tol = real(GROUP_TOL);
    Ok(g.blocks().iter().all(|block| {
        let anchor = x.value(block[0]);
        block.iter().all(|&i| grouped_eq(anchor, x.value(i), tol))
    }))
}

/// Convex order `X ≤cx Y` at the default tolerance.
pub fn convex_order_leq<T: Real>(x: &RandVar<T>, y: &RandVar<T>) -> Result<bool, ProbError> {
    convex_order_leq_with_tol(x, y, real(NUM_TOL))
}

/// Convex order with an explicit tolerance: means equal within `tol` and
/// `E[(X-d)+] <= E[(Y-d)+] + tol` at every `d` in the union of the two
/// supports. On finite supports this certificate family is both sufficient
/// and necessary.
pub fn convex_order_leq_with_tol<T: Real>(
    x: &RandVar<T>,
    y: &RandVar<T>,
    tol: T,
) -> Result<bool, ProbError> {
    if !x.space().same_space(y.space()) {
        return Err(ProbError::SpaceMismatch);
    }
    if (x.expectation() - y.expectation()).abs() > tol {
        return Ok(false);
    }
    Ok(x
        .values()
        .iter()
        .chain(y.values())
        .all(|&d| x.stop_loss(d) <= y.stop_loss(d) + tol))
}

/// Largest stop-loss excess of `X` over `Y` across the union of supports,
/// together with the mean gap. Used by checkers to report violation sizes.
pub fn convex_order_violation<T: Real>(x: &RandVar<T>, y: &RandVar<T>) -> Result<T, ProbError> {
    if !x.space().same_space(y.space()) {
        return Err(ProbError::SpaceMismatch);
    }
    let mean_gap = (x.expectation() - y.expectation()).abs();
    let sl_gap = x
        .values()
        .iter()
        .chain(y.values())
        .map(|&d| x.stop_loss(d) - y.stop_loss(d))
        .fold(T::zero(), T::max);
    Ok(mean_gap.max(sl_gap))
}

/// True iff no two components ever move in opposite directions across any
/// pair of outcomes: for all `ω, ω'` and components `i, j`,
/// `(X_i(ω)-X_i(ω'))(X_j(ω)-X_j(ω')) >= -tol`.
pub fn is_comonotonic<T: Real>(vars: &[RandVar<T>]) -> Result<bool, ProbError> {
    Ok(comonotonicity_witness(vars)?.is_none())
}

/// Worst anti-monotone pair, if any: `(component i, component j, outcome a,
/// outcome b, violation magnitude)`.
pub fn comonotonicity_witness<T: Real>(
    vars: &[RandVar<T>],
) -> Result<Option<(usize, usize, usize, usize, T)>, ProbError> {
    let first = vars.first().ok_or(ProbError::EmptyVector)?;
    let space = first.space();
    for v in vars {
        if !space.same_space(v.space()) {
            return Err(ProbError::SpaceMismatch);
        }
    }
    let m = space.len();
    let tol: T = real(NUM_TOL);
    let mut worst: Option<(usize, usize, usize, usize, T)> = None;
    for i in 0..vars.len() {
        for j in (i + 1)..vars.len() {
            for a in 0..m {
                for b in (a + 1)..m {
                    let di = vars[i].value(a) - vars[i].value(b);
                    let dj = vars[j].value(a) - vars[j].value(b);
                    let prod = di * dj;
                    if prod < -tol {
                        let mag = -prod;
                        if worst.map_or(true, |w| mag > w.4) {
                            worst = Some((i, j, a, b, mag));
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Quantile-midpoint discretization of `N(mean, variance)`: point `k` takes
/// the value at quantile `(k + 1/2) / points`, each with probability
/// `1/points`. Midpoint symmetry keeps the sample mean at `mean` and the
/// convex-order direction monotone as `points` grows.
pub fn discretize_gaussian<T: Real>(
    mean: T,
    variance: T,
    points: usize,
) -> Result<Vec<(T, T)>, ProbError> {
    if variance <= T::zero() {
        return Err(ProbError::BadVariance {
            variance: variance.to_f64().unwrap_or(f64::NAN),
        });
    }
    if points < 2 {
        return Err(ProbError::EmptySpace);
    }
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let sd = variance.sqrt();
    let p = T::one() / real::<T>(points as f64);
    let mut out = Vec::with_capacity(points);
    for k in 0..points {
        let u = (k as f64 + 0.5) / points as f64;
        let z: T = real(normal.inverse_cdf(u));
        out.push((mean + sd * z, p));
    }
    Ok(out)
}

/// An ordered sequence of agents' risks on one common space.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskVector<T> {
    agents: Vec<RandVar<T>>,
}

impl<T: Real> RiskVector<T> {
    pub fn new(agents: Vec<RandVar<T>>) -> Result<Self, ProbError> {
        if agents.len() < 2 {
            return Err(ProbError::TooFewAgents { got: agents.len() });
        }
        let space = Arc::clone(agents[0].space());
        for a in &agents {
            if !space.same_space(a.space()) {
                return Err(ProbError::SpaceMismatch);
            }
        }
        Ok(RiskVector { agents })
    }

    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn space(&self) -> &Arc<FiniteSpace<T>> {
        self.agents[0].space()
    }

    pub fn agent(&self, i: usize) -> &RandVar<T> {
        &self.agents[i]
    }

    pub fn agents(&self) -> &[RandVar<T>] {
        &self.agents
    }

    /// The total risk `S = Σ_i X_i`.
    pub fn total(&self) -> RandVar<T> {
        let m = self.space().len();
        let mut values = vec![T::zero(); m];
        for a in &self.agents {
            for (v, &x) in values.iter_mut().zip(a.values()) {
                *v = *v + x;
            }
        }
        RandVar::new(Arc::clone(self.space()), values).expect("sum lives on the same space")
    }

    /// Merges agent `j`'s risk into agent `i` (agent `j` keeps zero).
    pub fn merge(&self, i: usize, j: usize) -> Result<Self, ProbError> {
        if i == j || i >= self.agents.len() || j >= self.agents.len() {
            return Err(ProbError::BadPartition);
        }
        let mut agents = self.agents.clone();
        agents[i] = agents[i].checked_add(&self.agents[j])?;
        agents[j] = RandVar::constant(Arc::clone(self.space()), T::zero())?;
        RiskVector::new(agents)
    }

    /// Reorders agents by `perm`: agent `k` of the result is `X_{perm[k]}`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self, ProbError> {
        if perm.len() != self.agents.len() {
            return Err(ProbError::BadPartition);
        }
        let agents = perm.iter().map(|&k| self.agents[k].clone()).collect();
        RiskVector::new(agents)
    }
}
