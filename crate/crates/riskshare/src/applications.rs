//! Applied allocators: single mining pool, multiple pools, multiple coins,
//! and user-centric streaming revenue. Each payout has a closed form and an
//! equivalent (generalized) CMRS representation on a constructed finite
//! space; `*_equivalence_max_dev` recomputes the worst gap between the two.
//!
//! Rewards are non-negative numbers here, while the sharing core treats
//! values as losses; the CMRS operator is sign-equivariant, so equivalence
//! checks run on the reward vectors directly.

use std::sync::Arc;

use thiserror::Error;

use crate::prob_core::{FiniteSpace, Partition, ProbError, RandVar, RiskVector};
use crate::rules::{cmrs, generalized_cmrs, RuleError};
use crate::{grouped_eq, real, Real, NUM_TOL, PROB_TOL};

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Prob(#[from] ProbError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error("winner index {winner} out of range for {n} miners")]
    WinnerOutOfRange { winner: usize, n: usize },
    #[error("pool index {pool} out of range for {m} pools")]
    PoolOutOfRange { pool: usize, m: usize },
    #[error("realized price {value} is not in the price support")]
    PriceNotInSupport { value: String },
    #[error("column {column} does not normalize to 1")]
    ColumnNotNormalized { column: String },
    #[error("row {row}, column {column}: {message}")]
    SchemaError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("negative share {value} at row {row}")]
    NegativeShare { row: usize, value: String },
    #[error("shares sum to {sum}, which exceeds 1")]
    SharesExceedOne { sum: String },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
}

/// A block-reward price: a constant or a finite distribution, independent of
/// who (if anyone) issues the block.
#[derive(Debug, Clone)]
pub enum Price<T> {
    Constant(T),
    Distribution(Vec<(T, T)>),
}

impl<T: Real> Price<T> {
    fn validate(&self) -> Result<(), AppError> {
        match self {
            Price::Constant(v) => {
                if !v.is_finite() || *v <= T::zero() {
                    return Err(AppError::InvalidSpec(format!(
                        "price {v} must be strictly positive"
                    )));
                }
            }
            Price::Distribution(pairs) => {
                if pairs.is_empty() {
                    return Err(AppError::InvalidSpec("empty price distribution".into()));
                }
                let mut total = T::zero();
                for &(v, p) in pairs {
                    if !v.is_finite() || v <= T::zero() {
                        return Err(AppError::InvalidSpec(format!(
                            "price value {v} must be strictly positive"
                        )));
                    }
                    if !p.is_finite() || p <= T::zero() {
                        return Err(AppError::InvalidSpec(format!(
                            "price probability {p} must be strictly positive"
                        )));
                    }
                    total = total + p;
                }
                if (total - T::one()).abs() > real(PROB_TOL) {
                    return Err(AppError::InvalidSpec(format!(
                        "price probabilities sum to {total}, not 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `(value, probability)` pairs; a constant is a one-point distribution.
    pub fn support(&self) -> Vec<(T, T)> {
        match self {
            Price::Constant(v) => vec![(*v, T::one())],
            Price::Distribution(pairs) => pairs.clone(),
        }
    }

    pub fn expectation(&self) -> T {
        self.support().iter().map(|&(v, p)| v * p).sum()
    }

    fn contains(&self, value: T) -> bool {
        self.support()
            .iter()
            .any(|&(v, _)| grouped_eq(v, value, real(NUM_TOL)))
    }
}

fn check_shares<T: Real>(shares: &[T], what: &str) -> Result<T, AppError> {
    let mut total = T::zero();
    for &s in shares {
        if !s.is_finite() || s < T::zero() {
            return Err(AppError::InvalidSpec(format!("{what} share {s} is negative")));
        }
        total = total + s;
    }
    if total > T::one() + real(PROB_TOL) {
        return Err(AppError::SharesExceedOne {
            sum: format!("{total}"),
        });
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Single pool
// ---------------------------------------------------------------------------

/// A single mining pool: mutually exclusive issuance probabilities per miner
/// (at most one miner issues the next block) and a price independent of
/// issuance.
#[derive(Debug, Clone)]
pub struct PoolSpec<T> {
    miner_shares: Vec<T>,
    price: Price<T>,
}

impl<T: Real> PoolSpec<T> {
    pub fn new(miner_shares: Vec<T>, price: Price<T>) -> Result<Self, AppError> {
        if miner_shares.is_empty() {
            return Err(AppError::InvalidSpec("no miners".into()));
        }
        check_shares(&miner_shares, "miner")?;
        price.validate()?;
        Ok(PoolSpec {
            miner_shares,
            price,
        })
    }

    pub fn miner_shares(&self) -> &[T] {
        &self.miner_shares
    }

    pub fn price(&self) -> &Price<T> {
        &self.price
    }

    pub fn n_miners(&self) -> usize {
        self.miner_shares.len()
    }
}

/// Realized proportional payout: every miner receives their relative share
/// of the price whenever anyone in the pool issued the block, zero otherwise.
pub fn pool_allocate<T: Real>(
    spec: &PoolSpec<T>,
    realized_winner: Option<usize>,
    realized_price: T,
) -> Result<Vec<T>, AppError> {
    let n = spec.n_miners();
    if !spec.price.contains(realized_price) {
        return Err(AppError::PriceNotInSupport {
            value: format!("{realized_price}"),
        });
    }
    match realized_winner {
        None => Ok(vec![T::zero(); n]),
        Some(w) => {
            if w >= n {
                return Err(AppError::WinnerOutOfRange { winner: w, n });
            }
            let total: T = spec.miner_shares.iter().copied().sum();
            if total <= T::zero() {
                return Err(AppError::InvalidSpec(
                    "a winner exists but all shares are zero".into(),
                ));
            }
            Ok(spec
                .miner_shares
                .iter()
                .map(|&s| s / total * realized_price)
                .collect())
        }
    }
}

/// Ex-ante summary: `E[payout_i] = shares_i · E[price]`.
pub fn pool_expected<T: Real>(spec: &PoolSpec<T>) -> Vec<T> {
    let ep = spec.price.expectation();
    spec.miner_shares.iter().map(|&s| s * ep).collect()
}

/// The pool rewritten as a risk vector on the product space
/// (winner ∈ miners ∪ {none}) × (price support), zero-probability cells
/// dropped. `outcomes[w]` records which (winner, price) cell outcome `w` is.
#[derive(Debug, Clone)]
pub struct PoolWorld<T> {
    pub risks: RiskVector<T>,
    pub outcomes: Vec<(Option<usize>, T)>,
}

pub fn pool_as_risk_vector<T: Real>(spec: &PoolSpec<T>) -> Result<PoolWorld<T>, AppError> {
    let n = spec.n_miners();
    let total: T = spec.miner_shares.iter().copied().sum();
    let none_prob = T::one() - total;
    let mut probs = Vec::new();
    let mut outcomes = Vec::new();
    for &(price, pp) in &spec.price.support() {
        for (i, &s) in spec.miner_shares.iter().enumerate() {
            if s > T::zero() {
                probs.push(s * pp);
                outcomes.push((Some(i), price));
            }
        }
        if none_prob > real(PROB_TOL) {
            probs.push(none_prob * pp);
            outcomes.push((None, price));
        }
    }
    let space = FiniteSpace::new(probs)?;
    let agents = (0..n)
        .map(|i| {
            let vals = outcomes
                .iter()
                .map(|&(winner, price)| if winner == Some(i) { price } else { T::zero() })
                .collect();
            RandVar::new(Arc::clone(&space), vals)
        })
        .collect::<Result<Vec<_>, _>>()?;
    // a single miner yields n = 1, which RiskVector rejects; pad with a
    // zero bystander so CMRS still applies
    let agents = if agents.len() == 1 {
        let mut padded = agents;
        padded.push(RandVar::constant(Arc::clone(&space), T::zero())?);
        padded
    } else {
        agents
    };
    Ok(PoolWorld {
        risks: RiskVector::new(agents)?,
        outcomes,
    })
}

/// Worst gap, over every outcome and miner, between the closed-form payout
/// and CMRS on the constructed risk vector.
pub fn pool_equivalence_max_dev<T: Real>(spec: &PoolSpec<T>) -> Result<T, AppError> {
    let world = pool_as_risk_vector(spec)?;
    let alloc = cmrs(&world.risks)?;
    let mut worst = T::zero();
    for (w, &(winner, price)) in world.outcomes.iter().enumerate() {
        let closed = pool_allocate(spec, winner, price)?;
        for (i, &c) in closed.iter().enumerate() {
            worst = worst.max((alloc.agent(i).value(w) - c).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Multiple pools
// ---------------------------------------------------------------------------

/// Several pools sharing one chain: `memberships[i][j] = P(D_i ∩ E_j)`, the
/// probability miner `i` issues the block through pool `j`; pools are
/// mutually exclusive.
#[derive(Debug, Clone)]
pub struct MultiPoolSpec<T> {
    memberships: Vec<Vec<T>>,
    price: Price<T>,
}

impl<T: Real> MultiPoolSpec<T> {
    pub fn new(memberships: Vec<Vec<T>>, price: Price<T>) -> Result<Self, AppError> {
        if memberships.is_empty() || memberships[0].is_empty() {
            return Err(AppError::InvalidSpec("empty membership matrix".into()));
        }
        let m = memberships[0].len();
        if memberships.iter().any(|row| row.len() != m) {
            return Err(AppError::InvalidSpec("ragged membership matrix".into()));
        }
        let flat: Vec<T> = memberships.iter().flatten().copied().collect();
        check_shares(&flat, "membership")?;
        price.validate()?;
        Ok(MultiPoolSpec { memberships, price })
    }

    pub fn n_miners(&self) -> usize {
        self.memberships.len()
    }

    pub fn n_pools(&self) -> usize {
        self.memberships[0].len()
    }

    pub fn memberships(&self) -> &[Vec<T>] {
        &self.memberships
    }

    pub fn price(&self) -> &Price<T> {
        &self.price
    }

    /// `P(E_j)`: column sums.
    pub fn pool_probs(&self) -> Vec<T> {
        (0..self.n_pools())
            .map(|j| self.memberships.iter().map(|row| row[j]).sum())
            .collect()
    }
}

/// Per-pool proportional payout: the winning pool splits the price among its
/// members by relative contribution.
pub fn multi_pool_allocate<T: Real>(
    spec: &MultiPoolSpec<T>,
    realized_winning_pool: Option<usize>,
    realized_price: T,
) -> Result<Vec<T>, AppError> {
    if !spec.price.contains(realized_price) {
        return Err(AppError::PriceNotInSupport {
            value: format!("{realized_price}"),
        });
    }
    match realized_winning_pool {
        None => Ok(vec![T::zero(); spec.n_miners()]),
        Some(j) => {
            if j >= spec.n_pools() {
                return Err(AppError::PoolOutOfRange {
                    pool: j,
                    m: spec.n_pools(),
                });
            }
            let ej = spec.pool_probs()[j];
            if ej <= T::zero() {
                return Err(AppError::InvalidSpec(format!(
                    "pool {j} won but has probability zero"
                )));
            }
            Ok(spec
                .memberships
                .iter()
                .map(|row| row[j] / ej * realized_price)
                .collect())
        }
    }
}

/// The multi-pool world: outcomes are (winning miner-and-pool or none) ×
/// price, and `partition` is the σ-field generated by the price and the
/// winning-pool indicator — what every pool's bookkeeper observes.
#[derive(Debug, Clone)]
pub struct MultiPoolWorld<T> {
    pub risks: RiskVector<T>,
    pub partition: Partition<T>,
    pub outcomes: Vec<(Option<(usize, usize)>, T)>,
}

pub fn multi_pool_as_risk_vector<T: Real>(
    spec: &MultiPoolSpec<T>,
) -> Result<MultiPoolWorld<T>, AppError> {
    let n = spec.n_miners();
    let total: T = spec.memberships.iter().flatten().copied().sum();
    let none_prob = T::one() - total;
    let mut probs = Vec::new();
    let mut outcomes = Vec::new();
    for &(price, pp) in &spec.price.support() {
        for (i, row) in spec.memberships.iter().enumerate() {
            for (j, &q) in row.iter().enumerate() {
                if q > T::zero() {
                    probs.push(q * pp);
                    outcomes.push((Some((i, j)), price));
                }
            }
        }
        if none_prob > real(PROB_TOL) {
            probs.push(none_prob * pp);
            outcomes.push((None, price));
        }
    }
    let space = FiniteSpace::new(probs)?;
    let agents = (0..n)
        .map(|i| {
            let vals = outcomes
                .iter()
                .map(|&(cell, price)| match cell {
                    Some((wi, _)) if wi == i => price,
                    _ => T::zero(),
                })
                .collect();
            RandVar::new(Arc::clone(&space), vals)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agents = if agents.len() == 1 {
        let mut padded = agents;
        padded.push(RandVar::constant(Arc::clone(&space), T::zero())?);
        padded
    } else {
        agents
    };
    // observable label: (winning pool or none, price index)
    let labels: Vec<(Option<usize>, usize)> = outcomes
        .iter()
        .map(|&(cell, price)| {
            let p_idx = spec
                .price
                .support()
                .iter()
                .position(|&(v, _)| grouped_eq(v, price, real(NUM_TOL)))
                .unwrap();
            (cell.map(|(_, j)| j), p_idx)
        })
        .collect();
    let partition = partition_from_labels(&space, &labels)?;
    Ok(MultiPoolWorld {
        risks: RiskVector::new(agents)?,
        partition,
        outcomes,
    })
}

/// Worst gap between the closed-form multi-pool payout and generalized CMRS
/// conditioned on (price, winning pool).
pub fn multi_pool_equivalence_max_dev<T: Real>(spec: &MultiPoolSpec<T>) -> Result<T, AppError> {
    let world = multi_pool_as_risk_vector(spec)?;
    let alloc = generalized_cmrs(&world.risks, &world.partition)?;
    let mut worst = T::zero();
    for (w, &(cell, price)) in world.outcomes.iter().enumerate() {
        let closed = multi_pool_allocate(spec, cell.map(|(_, j)| j), price)?;
        for (i, &c) in closed.iter().enumerate() {
            worst = worst.max((alloc.agent(i).value(w) - c).abs());
        }
    }
    Ok(worst)
}

fn partition_from_labels<T: Real, K: PartialEq>(
    space: &Arc<FiniteSpace<T>>,
    labels: &[K],
) -> Result<Partition<T>, ProbError> {
    let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
    for (w, label) in labels.iter().enumerate() {
        match blocks.iter_mut().find(|(anchor, _)| labels[*anchor] == *label) {
            Some((_, block)) => block.push(w),
            None => blocks.push((w, vec![w])),
        }
    }
    Partition::new(
        Arc::clone(space),
        blocks.into_iter().map(|(_, b)| b).collect(),
    )
}

// ---------------------------------------------------------------------------
// Multiple coins
// ---------------------------------------------------------------------------

/// Mining several independent coins at once: `coin_shares[j][i] = P(D_ij)`,
/// the probability miner `i` issues coin `j`'s block; per-coin prices are
/// mutually independent of issuance and of each other.
#[derive(Debug, Clone)]
pub struct MultiCoinSpec<T> {
    coin_shares: Vec<Vec<T>>,
    coin_prices: Vec<Price<T>>,
}

impl<T: Real> MultiCoinSpec<T> {
    pub fn new(coin_shares: Vec<Vec<T>>, coin_prices: Vec<Price<T>>) -> Result<Self, AppError> {
        if coin_shares.is_empty() {
            return Err(AppError::InvalidSpec("no coins".into()));
        }
        if coin_shares.len() != coin_prices.len() {
            return Err(AppError::InvalidSpec(
                "coin share and price counts differ".into(),
            ));
        }
        let n = coin_shares[0].len();
        if n == 0 {
            return Err(AppError::InvalidSpec("no miners".into()));
        }
        for row in &coin_shares {
            if row.len() != n {
                return Err(AppError::InvalidSpec("ragged coin share matrix".into()));
            }
            check_shares(row, "coin")?;
        }
        for price in &coin_prices {
            price.validate()?;
        }
        Ok(MultiCoinSpec {
            coin_shares,
            coin_prices,
        })
    }

    pub fn n_miners(&self) -> usize {
        self.coin_shares[0].len()
    }

    pub fn n_coins(&self) -> usize {
        self.coin_shares.len()
    }

    pub fn coin_shares(&self) -> &[Vec<T>] {
        &self.coin_shares
    }

    pub fn coin_prices(&self) -> &[Price<T>] {
        &self.coin_prices
    }

    /// `P(D^j)`: probability coin `j` is mined by anyone in the group.
    pub fn mined_probs(&self) -> Vec<T> {
        self.coin_shares
            .iter()
            .map(|row| row.iter().copied().sum())
            .collect()
    }
}

/// Realized payout: each mined coin's price is split proportionally among
/// that coin's contributors. `realized[j]` is `Some(price)` when coin `j`
/// was mined at that price.
pub fn multi_coin_allocate<T: Real>(
    spec: &MultiCoinSpec<T>,
    realized: &[Option<T>],
) -> Result<Vec<T>, AppError> {
    if realized.len() != spec.n_coins() {
        return Err(AppError::InvalidSpec(format!(
            "{} realized coins supplied for {} coins",
            realized.len(),
            spec.n_coins()
        )));
    }
    let mined = spec.mined_probs();
    let mut payout = vec![T::zero(); spec.n_miners()];
    for (j, &outcome) in realized.iter().enumerate() {
        let Some(price) = outcome else { continue };
        if !spec.coin_prices[j].contains(price) {
            return Err(AppError::PriceNotInSupport {
                value: format!("{price}"),
            });
        }
        if mined[j] <= T::zero() {
            return Err(AppError::InvalidSpec(format!(
                "coin {j} was mined but has zero total share"
            )));
        }
        for (i, p) in payout.iter_mut().enumerate() {
            *p = *p + spec.coin_shares[j][i] / mined[j] * price;
        }
    }
    Ok(payout)
}

/// The multi-coin world: a product space over coins of
/// (winner ∪ {none}) × price, with `partition` generated by all prices and
/// per-coin mined indicators. Limited to 3 coins to keep the product space
/// at desk scale.
#[derive(Debug, Clone)]
pub struct MultiCoinWorld<T> {
    pub risks: RiskVector<T>,
    pub partition: Partition<T>,
    pub outcomes: Vec<Vec<(Option<usize>, T)>>,
}

pub fn multi_coin_as_risk_vector<T: Real>(
    spec: &MultiCoinSpec<T>,
) -> Result<MultiCoinWorld<T>, AppError> {
    let m = spec.n_coins();
    if m > 3 {
        return Err(AppError::InvalidSpec(
            "product-space construction supports at most 3 coins".into(),
        ));
    }
    let n = spec.n_miners();
    let mined = spec.mined_probs();
    // per-coin cells: (winner or none, price, probability)
    let mut per_coin: Vec<Vec<(Option<usize>, T, T)>> = Vec::with_capacity(m);
    for j in 0..m {
        let mut cells = Vec::new();
        let none_prob = T::one() - mined[j];
        for &(price, pp) in &spec.coin_prices[j].support() {
            for (i, &s) in spec.coin_shares[j].iter().enumerate() {
                if s > T::zero() {
                    cells.push((Some(i), price, s * pp));
                }
            }
            if none_prob > real(PROB_TOL) {
                cells.push((None, price, none_prob * pp));
            }
        }
        per_coin.push(cells);
    }
    // cartesian product
    let mut outcomes: Vec<Vec<(Option<usize>, T)>> = vec![Vec::new()];
    let mut probs: Vec<T> = vec![T::one()];
    for cells in &per_coin {
        let mut next_outcomes = Vec::with_capacity(outcomes.len() * cells.len());
        let mut next_probs = Vec::with_capacity(outcomes.len() * cells.len());
        for (combo, &p) in outcomes.iter().zip(&probs) {
            for &(winner, price, cp) in cells {
                let mut extended = combo.clone();
                extended.push((winner, price));
                next_outcomes.push(extended);
                next_probs.push(p * cp);
            }
        }
        outcomes = next_outcomes;
        probs = next_probs;
    }
    let space = FiniteSpace::new(probs)?;
    let agents = (0..n)
        .map(|i| {
            let vals = outcomes
                .iter()
                .map(|combo| {
                    combo
                        .iter()
                        .map(|&(winner, price)| {
                            if winner == Some(i) {
                                price
                            } else {
                                T::zero()
                            }
                        })
                        .sum()
                })
                .collect();
            RandVar::new(Arc::clone(&space), vals)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let agents = if agents.len() == 1 {
        let mut padded = agents;
        padded.push(RandVar::constant(Arc::clone(&space), T::zero())?);
        padded
    } else {
        agents
    };
    // observable label: per-coin (mined?, price index)
    let labels: Vec<Vec<(bool, usize)>> = outcomes
        .iter()
        .map(|combo| {
            combo
                .iter()
                .enumerate()
                .map(|(j, &(winner, price))| {
                    let p_idx = spec.coin_prices[j]
                        .support()
                        .iter()
                        .position(|&(v, _)| grouped_eq(v, price, real(NUM_TOL)))
                        .unwrap();
                    (winner.is_some(), p_idx)
                })
                .collect()
        })
        .collect();
    let partition = partition_from_labels(&space, &labels)?;
    Ok(MultiCoinWorld {
        risks: RiskVector::new(agents)?,
        partition,
        outcomes,
    })
}

/// Worst gap between the closed-form multi-coin payout and generalized CMRS
/// conditioned on prices and mined indicators.
pub fn multi_coin_equivalence_max_dev<T: Real>(spec: &MultiCoinSpec<T>) -> Result<T, AppError> {
    let world = multi_coin_as_risk_vector(spec)?;
    let alloc = generalized_cmrs(&world.risks, &world.partition)?;
    let mut worst = T::zero();
    for (w, combo) in world.outcomes.iter().enumerate() {
        let realized: Vec<Option<T>> = combo
            .iter()
            .map(|&(winner, price)| winner.map(|_| price))
            .collect();
        let closed = multi_coin_allocate(spec, &realized)?;
        for (i, &c) in closed.iter().enumerate() {
            worst = worst.max((alloc.agent(i).value(w) - c).abs());
        }
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Streaming revenue
// ---------------------------------------------------------------------------

/// User-centric revenue split: each subscribed user's distributable fee
/// `p_j = fee_j · θ_j` goes to artists in proportion to that user's listening
/// ratios `ratios[i][j]` (columns sum to 1).
#[derive(Debug, Clone)]
pub struct RevenueSpec<T> {
    fees: Vec<T>,
    ratios: Vec<Vec<T>>,
    subscribed: Vec<bool>,
}

impl<T: Real> RevenueSpec<T> {
    pub fn new(fees: Vec<T>, ratios: Vec<Vec<T>>, subscribed: Vec<bool>) -> Result<Self, AppError> {
        let m = fees.len();
        if m == 0 {
            return Err(AppError::InvalidSpec("no users".into()));
        }
        if subscribed.len() != m {
            return Err(AppError::InvalidSpec(
                "subscription flags and fees differ in length".into(),
            ));
        }
        if ratios.is_empty() {
            return Err(AppError::InvalidSpec("no artists".into()));
        }
        if ratios.iter().any(|row| row.len() != m) {
            return Err(AppError::InvalidSpec("ragged ratio matrix".into()));
        }
        for (j, &p) in fees.iter().enumerate() {
            if !p.is_finite() || p <= T::zero() {
                return Err(AppError::InvalidSpec(format!(
                    "user {j} has non-positive distributable fee {p}"
                )));
            }
        }
        for j in 0..m {
            let mut col = T::zero();
            for row in &ratios {
                if row[j] < T::zero() {
                    return Err(AppError::InvalidSpec(format!(
                        "negative attribution ratio for user column {j}"
                    )));
                }
                col = col + row[j];
            }
            if (col - T::one()).abs() > real(NUM_TOL) {
                return Err(AppError::ColumnNotNormalized {
                    column: format!("{j}"),
                });
            }
        }
        Ok(RevenueSpec {
            fees,
            ratios,
            subscribed,
        })
    }

    pub fn n_artists(&self) -> usize {
        self.ratios.len()
    }

    pub fn n_users(&self) -> usize {
        self.fees.len()
    }

    pub fn fees(&self) -> &[T] {
        &self.fees
    }

    pub fn subscribed(&self) -> &[bool] {
        &self.subscribed
    }
}

/// `payout_i = Σ over subscribed users j of ratios[i][j] · p_j`.
pub fn revenue_share<T: Real>(spec: &RevenueSpec<T>) -> Vec<T> {
    (0..spec.n_artists())
        .map(|i| {
            spec.fees
                .iter()
                .zip(&spec.subscribed)
                .enumerate()
                .filter(|(_, (_, &sub))| sub)
                .map(|(j, (&p, _))| spec.ratios[i][j] * p)
                .sum()
        })
        .collect()
}

/// Total distributable amount: `Σ subscribed p_j`.
pub fn revenue_total<T: Real>(spec: &RevenueSpec<T>) -> T {
    spec.fees
        .iter()
        .zip(&spec.subscribed)
        .filter(|(_, &sub)| sub)
        .map(|(&p, _)| p)
        .sum()
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

fn parse_decimal(field: &str, row: usize, column: &str) -> Result<f64, AppError> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| AppError::SchemaError {
            row,
            column: column.to_string(),
            message: format!("cannot parse {:?} as a decimal", field.trim()),
        })
}

fn split_csv_line(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn csv_rows<'a>(
    text: &'a str,
    header: &[&str],
) -> Result<Vec<(usize, Vec<&'a str>)>, AppError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let Some((row, first)) = lines.next() else {
        return Err(AppError::SchemaError {
            row: 0,
            column: header.join(","),
            message: "empty file".into(),
        });
    };
    let got = split_csv_line(first);
    if got != header {
        return Err(AppError::SchemaError {
            row,
            column: header.join(","),
            message: format!("expected header {:?}, found {:?}", header.join(","), first),
        });
    }
    let mut rows = Vec::new();
    for (row, line) in lines {
        let fields = split_csv_line(line);
        if fields.len() != header.len() {
            return Err(AppError::SchemaError {
                row,
                column: header.join(","),
                message: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        rows.push((row, fields));
    }
    Ok(rows)
}

fn check_nonneg_share(value: f64, row: usize) -> Result<(), AppError> {
    if value < 0.0 {
        return Err(AppError::NegativeShare {
            row,
            value: format!("{value}"),
        });
    }
    Ok(())
}

/// Parses `miner_id,share` rows into a [`PoolSpec`], keeping the miner ids in
/// first-appearance order.
pub fn ingest_pool_csv(text: &str, price: Price<f64>) -> Result<(Vec<String>, PoolSpec<f64>), AppError> {
    let mut ids = Vec::new();
    let mut shares = Vec::new();
    for (row, fields) in csv_rows(text, &["miner_id", "share"])? {
        let share = parse_decimal(fields[1], row, "share")?;
        check_nonneg_share(share, row)?;
        ids.push(fields[0].to_string());
        shares.push(share);
    }
    let spec = PoolSpec::new(shares, price)?;
    Ok((ids, spec))
}

/// Parses `miner_id,pool_id,share` rows into a [`MultiPoolSpec`]. Returns
/// (miner ids, pool ids, spec), both id lists in first-appearance order.
pub fn ingest_multipool_csv(
    text: &str,
    price: Price<f64>,
) -> Result<(Vec<String>, Vec<String>, MultiPoolSpec<f64>), AppError> {
    let mut miners: Vec<String> = Vec::new();
    let mut pools: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (row, fields) in csv_rows(text, &["miner_id", "pool_id", "share"])? {
        let share = parse_decimal(fields[2], row, "share")?;
        check_nonneg_share(share, row)?;
        let mi = index_of(&mut miners, fields[0]);
        let pj = index_of(&mut pools, fields[1]);
        entries.push((mi, pj, share));
    }
    let mut matrix = vec![vec![0.0; pools.len()]; miners.len()];
    for (i, j, s) in entries {
        matrix[i][j] += s;
    }
    let spec = MultiPoolSpec::new(matrix, price)?;
    Ok((miners, pools, spec))
}

/// Parses `miner_id,coin_id,share` rows into a [`MultiCoinSpec`] paired with
/// per-coin prices (supplied separately, one per coin id in appearance order).
pub fn ingest_multicoin_csv(
    text: &str,
    coin_prices: Vec<Price<f64>>,
) -> Result<(Vec<String>, Vec<String>, MultiCoinSpec<f64>), AppError> {
    let mut miners: Vec<String> = Vec::new();
    let mut coins: Vec<String> = Vec::new();
    let mut entries = Vec::new();
    for (row, fields) in csv_rows(text, &["miner_id", "coin_id", "share"])? {
        let share = parse_decimal(fields[2], row, "share")?;
        check_nonneg_share(share, row)?;
        let mi = index_of(&mut miners, fields[0]);
        let cj = index_of(&mut coins, fields[1]);
        entries.push((mi, cj, share));
    }
    if coin_prices.len() != coins.len() {
        return Err(AppError::InvalidSpec(format!(
            "{} coin prices supplied for {} coins",
            coin_prices.len(),
            coins.len()
        )));
    }
    let mut matrix = vec![vec![0.0; miners.len()]; coins.len()];
    for (i, j, s) in entries {
        matrix[j][i] += s;
    }
    let spec = MultiCoinSpec::new(matrix, coin_prices)?;
    Ok((miners, coins, spec))
}

fn index_of(ids: &mut Vec<String>, id: &str) -> usize {
    match ids.iter().position(|x| x == id) {
        Some(i) => i,
        None => {
            ids.push(id.to_string());
            ids.len() - 1
        }
    }
}

/// Parses a price input: either a bare decimal or `value,probability` CSV.
pub fn ingest_price(text: &str) -> Result<Price<f64>, AppError> {
    let trimmed = text.trim();
    if let Ok(v) = trimmed.parse::<f64>() {
        let price = Price::Constant(v);
        price.validate()?;
        return Ok(price);
    }
    let mut pairs = Vec::new();
    for (row, fields) in csv_rows(text, &["value", "probability"])? {
        let v = parse_decimal(fields[0], row, "value")?;
        let p = parse_decimal(fields[1], row, "probability")?;
        pairs.push((v, p));
    }
    let price = Price::Distribution(pairs);
    price.validate()?;
    Ok(price)
}

/// Parses the revenue CSV pair (`user_id,fee,theta,subscribed` and
/// `artist_id,user_id,streams`) into a [`RevenueSpec`]. Stream counts are
/// normalized per user column here; a user with zero total streams surfaces
/// as [`AppError::ColumnNotNormalized`].
pub fn ingest_revenue_csv(
    users_text: &str,
    streams_text: &str,
) -> Result<(Vec<String>, Vec<String>, RevenueSpec<f64>), AppError> {
    let mut user_ids: Vec<String> = Vec::new();
    let mut fees = Vec::new();
    let mut subscribed = Vec::new();
    for (row, fields) in csv_rows(users_text, &["user_id", "fee", "theta", "subscribed"])? {
        let fee = parse_decimal(fields[1], row, "fee")?;
        let theta = parse_decimal(fields[2], row, "theta")?;
        let sub = match fields[3] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => {
                return Err(AppError::SchemaError {
                    row,
                    column: "subscribed".into(),
                    message: format!("expected true/false/1/0, found {other:?}"),
                })
            }
        };
        user_ids.push(fields[0].to_string());
        fees.push(fee * theta);
        subscribed.push(sub);
    }
    let mut artist_ids: Vec<String> = Vec::new();
    let mut stream_entries = Vec::new();
    for (row, fields) in csv_rows(streams_text, &["artist_id", "user_id", "streams"])? {
        let count = parse_decimal(fields[2], row, "streams")?;
        if count < 0.0 {
            return Err(AppError::SchemaError {
                row,
                column: "streams".into(),
                message: format!("negative stream count {count}"),
            });
        }
        let uj = user_ids
            .iter()
            .position(|u| u == fields[1])
            .ok_or_else(|| AppError::SchemaError {
                row,
                column: "user_id".into(),
                message: format!("unknown user {:?}", fields[1]),
            })?;
        let ai = index_of(&mut artist_ids, fields[0]);
        stream_entries.push((ai, uj, count));
    }
    let mut counts = vec![vec![0.0; user_ids.len()]; artist_ids.len()];
    for (i, j, c) in stream_entries {
        counts[i][j] += c;
    }
    for j in 0..user_ids.len() {
        let total: f64 = counts.iter().map(|row| row[j]).sum();
        if total <= 0.0 {
            return Err(AppError::ColumnNotNormalized {
                column: user_ids[j].clone(),
            });
        }
        for row in counts.iter_mut() {
            row[j] /= total;
        }
    }
    let spec = RevenueSpec::new(fees, counts, subscribed)?;
    Ok((artist_ids, user_ids, spec))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_example() -> PoolSpec<f64> {
        PoolSpec::new(vec![0.1, 0.15, 0.25], Price::Constant(100.0)).unwrap()
    }

    #[test]
    fn pool_allocate_examples() {
        let spec = pool_example();
        let payout = pool_allocate(&spec, Some(1), 100.0).unwrap();
        assert_eq!(payout, vec![20.0, 30.0, 50.0]);

        assert_eq!(pool_allocate(&spec, None, 100.0).unwrap(), vec![0.0; 3]);

        let solo = PoolSpec::new(vec![0.3], Price::Constant(100.0)).unwrap();
        assert_eq!(pool_allocate(&solo, Some(0), 100.0).unwrap(), vec![100.0]);

        assert!(matches!(
            pool_allocate(&spec, Some(7), 100.0),
            Err(AppError::WinnerOutOfRange { winner: 7, n: 3 })
        ));
        assert!(matches!(
            pool_allocate(&spec, Some(0), 99.0),
            Err(AppError::PriceNotInSupport { .. })
        ));
    }

    #[test]
    fn pool_expected_mode() {
        let spec = pool_example();
        let e = pool_expected(&spec);
        assert!((e[0] - 10.0).abs() < 1e-12);
        assert!((e[1] - 15.0).abs() < 1e-12);
        assert!((e[2] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn pool_world_constant_price() {
        let spec = pool_example();
        let world = pool_as_risk_vector(&spec).unwrap();
        let probs = world.risks.space().probs();
        assert_eq!(probs.len(), 4);
        assert!((probs[0] - 0.1).abs() < 1e-15);
        assert!((probs[3] - 0.5).abs() < 1e-15);
        assert!(pool_equivalence_max_dev(&spec).unwrap() < 1e-9);
    }

    #[test]
    fn pool_world_two_point_price() {
        let spec = PoolSpec::new(
            vec![0.1, 0.15, 0.25],
            Price::Distribution(vec![(50.0, 0.5), (150.0, 0.5)]),
        )
        .unwrap();
        let world = pool_as_risk_vector(&spec).unwrap();
        assert_eq!(world.risks.space().len(), 8);
        assert!(pool_equivalence_max_dev(&spec).unwrap() < 1e-9);
    }

    #[test]
    fn pool_zero_share_miner_gets_nothing() {
        let spec = PoolSpec::<f64>::new(vec![0.2, 0.0, 0.3], Price::Constant(10.0)).unwrap();
        let world = pool_as_risk_vector(&spec).unwrap();
        assert!(world.risks.agent(1).values().iter().all(|&v| v == 0.0));
        let alloc = cmrs(&world.risks).unwrap();
        assert!(alloc.agent(1).values().iter().all(|&v| v.abs() < 1e-12));
        assert!(pool_equivalence_max_dev(&spec).unwrap() < 1e-9);
    }

    #[test]
    fn pool_symmetry_equal_shares() {
        let spec = PoolSpec::new(vec![0.2, 0.2], Price::Constant(100.0)).unwrap();
        let p = pool_allocate(&spec, Some(0), 100.0).unwrap();
        assert_eq!(p[0], p[1]);
    }

    #[test]
    fn multi_pool_examples() {
        let spec = MultiPoolSpec::<f64>::new(
            vec![vec![0.05, 0.05], vec![0.10, 0.0]],
            Price::Constant(100.0),
        )
        .unwrap();
        let probs = spec.pool_probs();
        assert!((probs[0] - 0.15).abs() < 1e-12);
        assert!((probs[1] - 0.05).abs() < 1e-12);

        let p = multi_pool_allocate(&spec, Some(0), 100.0).unwrap();
        assert!((p[0] - 100.0 / 3.0).abs() < 1e-12);
        assert!((p[1] - 200.0 / 3.0).abs() < 1e-12);

        let p = multi_pool_allocate(&spec, Some(1), 100.0).unwrap();
        assert!((p[0] - 100.0).abs() < 1e-12);
        assert_eq!(p[1], 0.0);

        assert_eq!(
            multi_pool_allocate(&spec, None, 100.0).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(matches!(
            multi_pool_allocate(&spec, Some(5), 100.0),
            Err(AppError::PoolOutOfRange { pool: 5, m: 2 })
        ));
    }

    #[test]
    fn multi_pool_equivalence() {
        let spec = MultiPoolSpec::new(
            vec![vec![0.05, 0.05], vec![0.10, 0.0]],
            Price::Distribution(vec![(100.0, 0.75), (40.0, 0.25)]),
        )
        .unwrap();
        assert!(multi_pool_equivalence_max_dev(&spec).unwrap() < 1e-9);
    }

    #[test]
    fn multi_coin_examples() {
        let spec = MultiCoinSpec::<f64>::new(
            vec![vec![0.2, 0.2], vec![0.1, 0.3]],
            vec![Price::Constant(100.0), Price::Constant(60.0)],
        )
        .unwrap();

        let p = multi_coin_allocate(&spec, &[Some(100.0), None]).unwrap();
        assert!((p[0] - 50.0).abs() < 1e-12);
        assert!((p[1] - 50.0).abs() < 1e-12);

        let p = multi_coin_allocate(&spec, &[Some(100.0), Some(60.0)]).unwrap();
        assert!((p[0] - 65.0).abs() < 1e-12);
        assert!((p[1] - 95.0).abs() < 1e-12);

        assert_eq!(
            multi_coin_allocate(&spec, &[None, None]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn multi_coin_equivalence() {
        let spec = MultiCoinSpec::new(
            vec![vec![0.2, 0.2], vec![0.1, 0.3]],
            vec![
                Price::Distribution(vec![(100.0, 0.5), (80.0, 0.5)]),
                Price::Constant(60.0),
            ],
        )
        .unwrap();
        assert!(multi_coin_equivalence_max_dev(&spec).unwrap() < 1e-9);

        let too_many = MultiCoinSpec::new(
            vec![vec![0.1], vec![0.1], vec![0.1], vec![0.1]],
            vec![
                Price::Constant(1.0),
                Price::Constant(1.0),
                Price::Constant(1.0),
                Price::Constant(1.0),
            ],
        )
        .unwrap();
        assert!(multi_coin_as_risk_vector(&too_many).is_err());
    }

    #[test]
    fn revenue_examples() {
        let spec =
            RevenueSpec::new(vec![10.0], vec![vec![0.7], vec![0.3]], vec![true]).unwrap();
        assert_eq!(revenue_share(&spec), vec![7.0, 3.0]);
        assert_eq!(revenue_total(&spec), 10.0);

        let spec =
            RevenueSpec::new(vec![10.0], vec![vec![0.7], vec![0.3]], vec![false]).unwrap();
        assert_eq!(revenue_share(&spec), vec![0.0, 0.0]);

        assert!(matches!(
            RevenueSpec::new(vec![10.0], vec![vec![0.7], vec![0.2]], vec![true]),
            Err(AppError::ColumnNotNormalized { .. })
        ));
    }

    #[test]
    fn revenue_conservation() {
        let spec = RevenueSpec::new(
            vec![10.0, 4.0, 8.0],
            vec![vec![0.5, 1.0, 0.25], vec![0.5, 0.0, 0.75]],
            vec![true, false, true],
        )
        .unwrap();
        let payouts = revenue_share(&spec);
        let total: f64 = payouts.iter().sum();
        assert!((total - revenue_total(&spec)).abs() < 1e-9);
        assert!((revenue_total(&spec) - 18.0).abs() < 1e-12);
    }

    #[test]
    fn ingest_pool() {
        let csv = "miner_id,share\nm1,0.1\nm2,0.15\nm3,0.25\n";
        let (ids, spec) = ingest_pool_csv(csv, Price::Constant(100.0)).unwrap();
        assert_eq!(ids, vec!["m1", "m2", "m3"]);
        assert_eq!(spec.miner_shares(), &[0.1, 0.15, 0.25]);

        let over = "miner_id,share\nm1,0.7\nm2,0.5\n";
        assert!(matches!(
            ingest_pool_csv(over, Price::Constant(100.0)),
            Err(AppError::SharesExceedOne { .. })
        ));

        let neg = "miner_id,share\nm1,-0.1\n";
        assert!(matches!(
            ingest_pool_csv(neg, Price::Constant(100.0)),
            Err(AppError::NegativeShare { row: 2, .. })
        ));

        let bad = "miner_id,share\nm1,lots\n";
        match ingest_pool_csv(bad, Price::Constant(100.0)) {
            Err(AppError::SchemaError { row: 2, column, .. }) => assert_eq!(column, "share"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn ingest_multipool_and_multicoin() {
        let csv = "miner_id,pool_id,share\nm1,p1,0.05\nm1,p2,0.05\nm2,p1,0.10\n";
        let (miners, pools, spec) = ingest_multipool_csv(csv, Price::Constant(100.0)).unwrap();
        assert_eq!(miners, vec!["m1", "m2"]);
        assert_eq!(pools, vec!["p1", "p2"]);
        assert_eq!(spec.memberships(), &[vec![0.05, 0.05], vec![0.10, 0.0]]);

        let csv = "miner_id,coin_id,share\nm1,btc,0.2\nm2,btc,0.2\nm1,doge,0.1\nm2,doge,0.3\n";
        let (miners, coins, spec) = ingest_multicoin_csv(
            csv,
            vec![Price::Constant(100.0), Price::Constant(60.0)],
        )
        .unwrap();
        assert_eq!(miners, vec!["m1", "m2"]);
        assert_eq!(coins, vec!["btc", "doge"]);
        assert_eq!(spec.coin_shares(), &[vec![0.2, 0.2], vec![0.1, 0.3]]);
    }

    #[test]
    fn ingest_price_forms() {
        assert!(matches!(
            ingest_price("100").unwrap(),
            Price::Constant(v) if v == 100.0
        ));
        let dist = ingest_price("value,probability\n50,0.5\n150,0.5\n").unwrap();
        assert!((dist.expectation() - 100.0).abs() < 1e-12);
        assert!(ingest_price("value,probability\n50,0.6\n150,0.6\n").is_err());
    }

    #[test]
    fn ingest_revenue() {
        let users = "user_id,fee,theta,subscribed\nu1,12.5,0.8,true\n";
        let streams = "artist_id,user_id,streams\na1,u1,70\na2,u1,30\n";
        let (artists, users_out, spec) = ingest_revenue_csv(users, streams).unwrap();
        assert_eq!(artists, vec!["a1", "a2"]);
        assert_eq!(users_out, vec!["u1"]);
        assert_eq!(revenue_share(&spec), vec![7.0, 3.0]);

        // a user with zero total streams cannot be attributed
        let users2 = "user_id,fee,theta,subscribed\nu1,12.5,0.8,true\nu2,5.0,1.0,true\n";
        assert!(matches!(
            ingest_revenue_csv(users2, streams),
            Err(AppError::ColumnNotNormalized { column }) if column == "u2"
        ));
    }
}
