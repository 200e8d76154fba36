//! Mechanical verification of the fairness/anonymity axioms and related
//! properties against any sharing rule, over supplied or generated scenario
//! sets.
//!
//! A pass verdict means "no violation found on this battery", never a proof:
//! the axioms quantify over all risk vectors, the checkers over finite
//! batteries. Reports therefore carry `scenarios_checked` (and `skipped`)
//! counts, and every fail verdict carries concrete witnesses whose violation
//! magnitudes can be recomputed independently.

use std::sync::Arc;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::prob_core::{
    comonotonicity_witness, convex_order_leq_with_tol, convex_order_violation, discretize_gaussian,
    is_measurable, partition_of, FiniteSpace, Partition, ProbError, RandVar, RiskVector,
};
use crate::rules::{apply, generalized_cmrs, Allocation, RuleError, RuleSpec};
use crate::{real, Real, NUM_TOL};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("rule failed on scenario {scenario}: {source}")]
    RuleApplication {
        scenario: String,
        #[source]
        source: RuleError,
    },
    #[error(transparent)]
    Prob(#[from] ProbError),
}

/// The twelve checkable identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axiom {
    Af,
    Rf,
    Ra,
    Oa,
    Cp,
    Zp,
    Ui,
    Cm,
    Sm,
    Bt,
    Ia,
    Ib,
}

impl Axiom {
    pub const ALL: [Axiom; 12] = [
        Axiom::Af,
        Axiom::Rf,
        Axiom::Ra,
        Axiom::Oa,
        Axiom::Cp,
        Axiom::Zp,
        Axiom::Ui,
        Axiom::Cm,
        Axiom::Sm,
        Axiom::Bt,
        Axiom::Ia,
        Axiom::Ib,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axiom::Af => "AF",
            Axiom::Rf => "RF",
            Axiom::Ra => "RA",
            Axiom::Oa => "OA",
            Axiom::Cp => "CP",
            Axiom::Zp => "ZP",
            Axiom::Ui => "UI",
            Axiom::Cm => "CM",
            Axiom::Sm => "SM",
            Axiom::Bt => "BT",
            Axiom::Ia => "IA",
            Axiom::Ib => "IB",
        }
    }

    pub fn from_name(name: &str) -> Option<Axiom> {
        Axiom::ALL.iter().copied().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// A concrete violation: which scenario, which agent, how large.
#[derive(Debug, Clone)]
pub struct Witness<T> {
    pub scenario: String,
    pub agent: Option<usize>,
    pub magnitude: T,
    pub detail: String,
}

/// Structured pass/fail evidence for one axiom over one scenario set.
#[derive(Debug, Clone)]
pub struct AxiomReport<T> {
    pub axiom: Axiom,
    pub verdict: Verdict,
    pub witnesses: Vec<Witness<T>>,
    pub scenarios_checked: usize,
    pub skipped: usize,
    pub note: Option<String>,
}

impl<T> AxiomReport<T> {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    fn from_witnesses(
        axiom: Axiom,
        witnesses: Vec<Witness<T>>,
        scenarios_checked: usize,
        skipped: usize,
        note: Option<String>,
    ) -> Self {
        let verdict = if witnesses.is_empty() {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        AxiomReport {
            axiom,
            verdict,
            witnesses,
            scenarios_checked,
            skipped,
            note,
        }
    }
}

/// One test case: a risk vector, optionally paired with target information
/// for the generalized checkers (IA/IB).
#[derive(Debug, Clone)]
pub struct Scenario<T> {
    pub id: String,
    pub risks: RiskVector<T>,
    pub partition: Option<Partition<T>>,
}

impl<T: Real> Scenario<T> {
    pub fn new(id: impl Into<String>, risks: RiskVector<T>) -> Self {
        Scenario {
            id: id.into(),
            risks,
            partition: None,
        }
    }

    pub fn with_partition(mut self, g: Partition<T>) -> Self {
        self.partition = Some(g);
        self
    }
}

/// A finite proxy for "for all X": the scenarios a checker quantifies over.
#[derive(Debug, Clone)]
pub struct ScenarioSet<T> {
    pub scenarios: Vec<Scenario<T>>,
    pub seed: Option<u64>,
}

impl<T: Real> ScenarioSet<T> {
    pub fn new(scenarios: Vec<Scenario<T>>) -> Self {
        ScenarioSet {
            scenarios,
            seed: None,
        }
    }
}

/// A rule as seen by the checkers: allocates per scenario, optionally using
/// the scenario's target partition.
pub trait ScenarioRule<T: Real> {
    fn rule_name(&self) -> String;
    fn allocate(
        &self,
        risks: &RiskVector<T>,
        g: Option<&Partition<T>>,
    ) -> Result<Allocation<T>, RuleError>;
}

impl<T: Real> ScenarioRule<T> for RuleSpec<T> {
    fn rule_name(&self) -> String {
        self.canonical_name().to_string()
    }

    fn allocate(
        &self,
        risks: &RiskVector<T>,
        _g: Option<&Partition<T>>,
    ) -> Result<Allocation<T>, RuleError> {
        apply(self, risks)
    }
}

/// The generalized CMRS, reading each scenario's target partition (the
/// trivial σ-field when none is supplied).
pub struct GeneralizedCmrsRule;

impl<T: Real> ScenarioRule<T> for GeneralizedCmrsRule {
    fn rule_name(&self) -> String {
        "generalized-cmrs".to_string()
    }

    fn allocate(
        &self,
        risks: &RiskVector<T>,
        g: Option<&Partition<T>>,
    ) -> Result<Allocation<T>, RuleError> {
        match g {
            Some(g) => generalized_cmrs(risks, g),
            None => generalized_cmrs(risks, &Partition::trivial(Arc::clone(risks.space()))),
        }
    }
}

fn run_rule<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scen: &Scenario<T>,
) -> Result<Allocation<T>, EngineError> {
    rule.allocate(&scen.risks, scen.partition.as_ref())
        .map_err(|source| EngineError::RuleApplication {
            scenario: scen.id.clone(),
            source,
        })
}

fn run_rule_on<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scen: &Scenario<T>,
    risks: &RiskVector<T>,
    label: &str,
) -> Result<Allocation<T>, EngineError> {
    rule.allocate(risks, scen.partition.as_ref())
        .map_err(|source| EngineError::RuleApplication {
            scenario: format!("{} ({label})", scen.id),
            source,
        })
}

/// Dispatches to the individual checker for `axiom`.
pub fn check_axiom<T: Real>(
    rule: &dyn ScenarioRule<T>,
    axiom: Axiom,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    match axiom {
        Axiom::Af => check_af(rule, scenarios, tol),
        Axiom::Rf => check_rf(rule, scenarios, tol),
        Axiom::Ra => check_ra(rule, scenarios, tol),
        Axiom::Oa => check_oa(rule, scenarios, tol),
        Axiom::Cp => check_cp(rule, scenarios, tol),
        Axiom::Zp => check_zp(rule, scenarios, tol),
        Axiom::Ui => check_ui(rule, scenarios, tol),
        Axiom::Cm => check_cm(rule, scenarios, tol),
        Axiom::Sm => check_sm(rule, scenarios, tol),
        Axiom::Bt => check_bt(rule, scenarios, tol),
        Axiom::Ia => check_ia(rule, scenarios, tol),
        Axiom::Ib => check_ib(rule, scenarios, tol),
    }
}

/// AF: `E[A_i] = E[X_i]` for every agent.
pub fn check_af<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let alloc = run_rule(rule, scen)?;
        for (i, (ai, xi)) in alloc.agents().iter().zip(scen.risks.agents()).enumerate() {
            let gap = (ai.expectation() - xi.expectation()).abs();
            if gap > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: gap,
                    detail: format!(
                        "E[A_{i}] = {} but E[X_{i}] = {}",
                        ai.expectation(),
                        xi.expectation()
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Af,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

/// RF: `A_i <= sup X_i` at every outcome.
pub fn check_rf<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let alloc = run_rule(rule, scen)?;
        for (i, (ai, xi)) in alloc.agents().iter().zip(scen.risks.agents()).enumerate() {
            let sup = xi.essential_sup();
            let mut worst: Option<(usize, T)> = None;
            for (w, &v) in ai.values().iter().enumerate() {
                let excess = v - sup;
                if excess > tol && worst.map_or(true, |(_, e)| excess > e) {
                    worst = Some((w, excess));
                }
            }
            if let Some((w, excess)) = worst {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: excess,
                    detail: format!(
                        "A_{i}(ω{w}) = {} exceeds sup X_{i} = {sup}",
                        ai.value(w)
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Rf,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

fn block_spread<T: Real>(var: &RandVar<T>, g: &Partition<T>) -> (T, usize) {
    let mut spread = T::zero();
    let mut at = 0;
    for block in g.blocks() {
        let anchor = var.value(block[0]);
        for &i in block {
            let d = (var.value(i) - anchor).abs();
            if d > spread {
                spread = d;
                at = i;
            }
        }
    }
    (spread, at)
}

/// RA: the allocation is σ(S)-measurable.
pub fn check_ra<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let alloc = run_rule(rule, scen)?;
        let sigma_s = partition_of(&[scen.risks.total()])?;
        for (i, ai) in alloc.agents().iter().enumerate() {
            let (spread, at) = block_spread(ai, &sigma_s);
            if spread > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: spread,
                    detail: format!(
                        "A_{i} is not constant on an S-level (spread {spread} at ω{at})"
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Ra,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

fn max_pointwise_gap<T: Real>(a: &RandVar<T>, b: &RandVar<T>) -> (T, usize) {
    let mut gap = T::zero();
    let mut at = 0;
    for (w, (&x, &y)) in a.values().iter().zip(b.values()).enumerate() {
        let d = (x - y).abs();
        if d > gap {
            gap = d;
            at = w;
        }
    }
    (gap, at)
}

/// OA: merging two agents' risks leaves every other agent's allocation
/// unchanged. Also verifies the equivalent determined-by-(X_i, S) form on
/// the derived vector `(X_i, S - X_i, 0, ..., 0)`.
///
/// Scenarios with n = 2 are skipped: no merging operation leaves an
/// uninvolved agent, so the axiom is empty there.
pub fn check_oa<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for scen in &scenarios.scenarios {
        let n = scen.risks.n_agents();
        if n < 3 {
            skipped += 1;
            continue;
        }
        checked += 1;
        let alloc = run_rule(rule, scen)?;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let merged = scen.risks.merge(i, j)?;
                let alloc_merged =
                    run_rule_on(rule, scen, &merged, &format!("merge {j}->{i}"))?;
                for k in 0..n {
                    if k == i || k == j {
                        continue;
                    }
                    let (gap, at) = max_pointwise_gap(alloc.agent(k), alloc_merged.agent(k));
                    if gap > tol {
                        witnesses.push(Witness {
                            scenario: scen.id.clone(),
                            agent: Some(k),
                            magnitude: gap,
                            detail: format!(
                                "merging agent {j} into {i} moves A_{k} by {gap} at ω{at}"
                            ),
                        });
                    }
                }
            }
        }
        // determined-by-(X_i, S): repeated merging collapses everyone else
        let total = scen.risks.total();
        let zero = RandVar::constant(Arc::clone(scen.risks.space()), T::zero())
            .map_err(EngineError::Prob)?;
        for i in 0..n {
            let j = if i == 0 { 1 } else { 0 };
            let mut agents = vec![zero.clone(); n];
            agents[i] = scen.risks.agent(i).clone();
            agents[j] = total.checked_sub(scen.risks.agent(i))?;
            let collapsed = RiskVector::new(agents)?;
            let alloc_collapsed =
                run_rule_on(rule, scen, &collapsed, &format!("collapse around {i}"))?;
            let (gap, at) = max_pointwise_gap(alloc.agent(i), alloc_collapsed.agent(i));
            if gap > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: gap,
                    detail: format!(
                        "A_{i} is not determined by (X_{i}, S): gap {gap} at ω{at} after collapsing the rest"
                    ),
                });
            }
        }
    }
    let note = if skipped > 0 {
        Some(format!(
            "{skipped} scenario(s) with n = 2 skipped: OA is empty when no merging operation involves an uninvolved agent"
        ))
    } else {
        None
    };
    Ok(AxiomReport::from_witnesses(
        Axiom::Oa, witnesses, checked, skipped, note,
    ))
}

fn constant_level<T: Real>(xi: &RandVar<T>, tol: T) -> Option<T> {
    let c = xi.value(0);
    xi.values()
        .iter()
        .all(|&v| (v - c).abs() <= tol)
        .then_some(c)
}

fn check_constant_preservation<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
    axiom: Axiom,
    zero_only: bool,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for scen in &scenarios.scenarios {
        let constants: Vec<(usize, T)> = scen
            .risks
            .agents()
            .iter()
            .enumerate()
            .filter_map(|(i, xi)| constant_level(xi, tol).map(|c| (i, c)))
            .filter(|&(_, c)| !zero_only || c.abs() <= tol)
            .collect();
        if constants.is_empty() {
            skipped += 1;
            continue;
        }
        checked += 1;
        let alloc = run_rule(rule, scen)?;
        for (i, c) in constants {
            let target = if zero_only { T::zero() } else { c };
            let mut gap = T::zero();
            let mut at = 0;
            for (w, &v) in alloc.agent(i).values().iter().enumerate() {
                let d = (v - target).abs();
                if d > gap {
                    gap = d;
                    at = w;
                }
            }
            if gap > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: gap,
                    detail: format!(
                        "X_{i} ≡ {target} but A_{i}(ω{at}) = {}",
                        alloc.agent(i).value(at)
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        axiom, witnesses, checked, skipped, None,
    ))
}

/// CP: a constant contribution is returned unchanged. Checked only on
/// scenarios that contain a constant component.
pub fn check_cp<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    check_constant_preservation(rule, scenarios, tol, Axiom::Cp, false)
}

/// ZP: a zero contribution receives a zero allocation.
pub fn check_zp<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    check_constant_preservation(rule, scenarios, tol, Axiom::Zp, true)
}

/// UI: `A_i ≤cx X_i` for every agent.
pub fn check_ui<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let alloc = run_rule(rule, scen)?;
        for (i, (ai, xi)) in alloc.agents().iter().zip(scen.risks.agents()).enumerate() {
            if !convex_order_leq_with_tol(ai, xi, tol)? {
                let magnitude = convex_order_violation(ai, xi)?;
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude,
                    detail: format!("A_{i} ≤cx X_{i} fails (certificate gap {magnitude})"),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Ui,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

/// CM: the allocation vector is comonotonic.
pub fn check_cm<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    _tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let alloc = run_rule(rule, scen)?;
        if let Some((i, j, a, b, magnitude)) = comonotonicity_witness(alloc.agents())? {
            witnesses.push(Witness {
                scenario: scen.id.clone(),
                agent: Some(i),
                magnitude,
                detail: format!(
                    "A_{i} and A_{j} move in opposite directions across ω{a}, ω{b}"
                ),
            });
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Cm,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

/// SM: permuting agents permutes the allocation identically. All
/// permutations are enumerated for n ≤ 4; 20 deterministic samples are used
/// for larger n.
pub fn check_sm<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for (scen_idx, scen) in scenarios.scenarios.iter().enumerate() {
        let n = scen.risks.n_agents();
        let alloc = run_rule(rule, scen)?;
        let perms: Vec<Vec<usize>> = if n <= 4 {
            (0..n).permutations(n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(
                scenarios.seed.unwrap_or(0).wrapping_add(scen_idx as u64),
            );
            (0..20)
                .map(|_| {
                    let mut p: Vec<usize> = (0..n).collect();
                    for k in (1..n).rev() {
                        p.swap(k, rng.gen_range(0..=k));
                    }
                    p
                })
                .collect()
        };
        'perm: for perm in perms {
            let permuted = scen.risks.permute(&perm)?;
            let alloc_perm = run_rule_on(rule, scen, &permuted, "permuted")?;
            for k in 0..n {
                let (gap, at) = max_pointwise_gap(alloc_perm.agent(k), alloc.agent(perm[k]));
                if gap > tol {
                    witnesses.push(Witness {
                        scenario: scen.id.clone(),
                        agent: Some(k),
                        magnitude: gap,
                        detail: format!(
                            "permutation {perm:?}: slot {k} differs from A_{} by {gap} at ω{at}",
                            perm[k]
                        ),
                    });
                    break 'perm;
                }
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Sm,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

/// BT: when S determines X, the allocation returns X unchanged. Checked only
/// on scenarios where X is σ(S)-measurable.
pub fn check_bt<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for scen in &scenarios.scenarios {
        let sigma_s = partition_of(&[scen.risks.total()])?;
        let measurable = scen
            .risks
            .agents()
            .iter()
            .map(|xi| is_measurable(xi, &sigma_s))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .all(|b| b);
        if !measurable {
            skipped += 1;
            continue;
        }
        checked += 1;
        let alloc = run_rule(rule, scen)?;
        for (i, (ai, xi)) in alloc.agents().iter().zip(scen.risks.agents()).enumerate() {
            let (gap, at) = max_pointwise_gap(ai, xi);
            if gap > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: gap,
                    detail: format!("X is σ(S)-measurable but A_{i} ≠ X_{i} (gap {gap} at ω{at})"),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Bt, witnesses, checked, skipped, None,
    ))
}

fn target_partition<T: Real>(scen: &Scenario<T>) -> Result<Partition<T>, ProbError> {
    let g = scen
        .partition
        .clone()
        .unwrap_or_else(|| Partition::trivial(Arc::clone(scen.risks.space())));
    let sigma_s = partition_of(&[scen.risks.total()])?;
    g.refine(&sigma_s)
}

/// IA: every allocation component is measurable w.r.t. the join of the
/// scenario's target information and σ(S).
pub fn check_ia<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    for scen in &scenarios.scenarios {
        let target = target_partition(scen)?;
        let alloc = run_rule(rule, scen)?;
        for (i, ai) in alloc.agents().iter().enumerate() {
            let (spread, at) = block_spread(ai, &target);
            if spread > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: spread,
                    detail: format!(
                        "A_{i} is not constant on a G∨σ(S) block (spread {spread} at ω{at})"
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Ia,
        witnesses,
        scenarios.scenarios.len(),
        0,
        None,
    ))
}

/// IB: when X is already measurable w.r.t. the target σ-field, the rule
/// returns X unchanged.
pub fn check_ib<T: Real>(
    rule: &dyn ScenarioRule<T>,
    scenarios: &ScenarioSet<T>,
    tol: T,
) -> Result<AxiomReport<T>, EngineError> {
    let mut witnesses = Vec::new();
    let mut checked = 0;
    let mut skipped = 0;
    for scen in &scenarios.scenarios {
        let target = target_partition(scen)?;
        let measurable = scen
            .risks
            .agents()
            .iter()
            .map(|xi| is_measurable(xi, &target))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .all(|b| b);
        if !measurable {
            skipped += 1;
            continue;
        }
        checked += 1;
        let alloc = run_rule(rule, scen)?;
        for (i, (ai, xi)) in alloc.agents().iter().zip(scen.risks.agents()).enumerate() {
            let (gap, at) = max_pointwise_gap(ai, xi);
            if gap > tol {
                witnesses.push(Witness {
                    scenario: scen.id.clone(),
                    agent: Some(i),
                    magnitude: gap,
                    detail: format!(
                        "X is G∨σ(S)-measurable but A_{i} ≠ X_{i} (gap {gap} at ω{at})"
                    ),
                });
            }
        }
    }
    Ok(AxiomReport::from_witnesses(
        Axiom::Ib, witnesses, checked, skipped, None,
    ))
}

// ---------------------------------------------------------------------------
// Scenario generation
// ---------------------------------------------------------------------------

/// Options for seeded random batteries.
#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub count: usize,
    pub agent_counts: Vec<usize>,
    pub max_outcomes: usize,
    /// Restrict risks to the non-negative grid (needed by mean-proportional).
    pub non_negative: bool,
    /// Attach a random target partition to every scenario (for IA/IB).
    pub with_partitions: bool,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            count: 200,
            agent_counts: vec![3, 4, 5],
            max_outcomes: 64,
            non_negative: false,
            with_partitions: false,
        }
    }
}

/// Seeded scenario battery. Component values come from the integer grid
/// {-3..3} (or {0..3} in non-negative mode) so S-levels group exactly. Every
/// battery contains at least one scenario with a constant component, one
/// with a zero component, and one σ(S)-measurable vector, so CP/ZP/BT are
/// never vacuous.
pub fn random_battery<T: Real>(seed: u64, config: &BatteryConfig) -> ScenarioSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenarios = Vec::with_capacity(config.count);
    for idx in 0..config.count {
        let m = rng.gen_range(2..=config.max_outcomes.max(2));
        let n = config.agent_counts[rng.gen_range(0..config.agent_counts.len())];
        let space = random_space::<T>(&mut rng, m);
        let grid_value = |rng: &mut ChaCha8Rng| -> T {
            let lo = if config.non_negative { 0 } else { -3 };
            real(rng.gen_range(lo..=3) as f64)
        };
        let agents: Vec<RandVar<T>> = match idx {
            // guaranteed coverage scenarios
            0 => {
                // one constant, one zero, rest random
                let mut agents = Vec::with_capacity(n);
                agents.push(RandVar::constant(Arc::clone(&space), real(2.0)).unwrap());
                agents.push(RandVar::constant(Arc::clone(&space), T::zero()).unwrap());
                for _ in 2..n {
                    let vals = (0..m).map(|_| grid_value(&mut rng)).collect();
                    agents.push(RandVar::new(Arc::clone(&space), vals).unwrap());
                }
                agents
            }
            1 => {
                // σ(S)-measurable: every component a positive multiple of one driver
                let driver: Vec<T> = (0..m)
                    .map(|_| real(rng.gen_range(0..=3) as f64))
                    .collect();
                (0..n)
                    .map(|i| {
                        let c = real((i + 1) as f64);
                        let vals = driver.iter().map(|&d| d * c).collect();
                        RandVar::new(Arc::clone(&space), vals).unwrap()
                    })
                    .collect()
            }
            _ => (0..n)
                .map(|_| {
                    let vals = (0..m).map(|_| grid_value(&mut rng)).collect();
                    RandVar::new(Arc::clone(&space), vals).unwrap()
                })
                .collect(),
        };
        let risks = RiskVector::new(agents).unwrap();
        let mut scen = Scenario::new(format!("battery[{seed}]/{idx}"), risks);
        if config.with_partitions {
            scen = scen.with_partition(random_partition(&mut rng, &space));
        }
        scenarios.push(scen);
    }
    ScenarioSet {
        scenarios,
        seed: Some(seed),
    }
}

fn random_space<T: Real>(rng: &mut ChaCha8Rng, m: usize) -> Arc<FiniteSpace<T>> {
    let weights: Vec<u32> = (0..m).map(|_| rng.gen_range(1..=9)).collect();
    let total: u32 = weights.iter().sum();
    let probs = weights
        .iter()
        .map(|&w| real::<T>(w as f64) / real(total as f64))
        .collect();
    FiniteSpace::new(probs).unwrap_or_else(|_| {
        // normalization drift beyond 1e-12 cannot happen with these weights
        FiniteSpace::uniform(m).unwrap()
    })
}

fn random_partition<T: Real>(rng: &mut ChaCha8Rng, space: &Arc<FiniteSpace<T>>) -> Partition<T> {
    let m = space.len();
    let k = rng.gen_range(1..=m.min(4));
    let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..k)).collect();
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    for label in 0..k {
        let block: Vec<usize> = (0..m).filter(|&i| labels[i] == label).collect();
        if !block.is_empty() {
            blocks.push(block);
        }
    }
    Partition::new(Arc::clone(space), blocks).unwrap()
}

// ---------------------------------------------------------------------------
// Independence battery (the Example-4.5-style witnesses)
// ---------------------------------------------------------------------------

/// One witness rule of the independence battery: reports over AF, RF, RA, OA
/// and the axiom it is designed to fail (none for the CMRS control row).
#[derive(Debug)]
pub struct IndependenceEntry<T> {
    pub rule_name: String,
    pub designated_failure: Option<Axiom>,
    pub reports: Vec<AxiomReport<T>>,
}

impl<T> IndependenceEntry<T> {
    /// True when the row fails exactly its designated axiom and passes the
    /// other three.
    pub fn matches_expected(&self) -> bool {
        self.reports.iter().all(|r| match self.designated_failure {
            Some(designated) if r.axiom == designated => !r.passed(),
            _ => r.passed(),
        })
    }
}

#[derive(Debug)]
pub struct IndependenceBattery<T> {
    pub entries: Vec<IndependenceEntry<T>>,
}

impl<T> IndependenceBattery<T> {
    pub fn matches_expected(&self) -> bool {
        self.entries.iter().all(IndependenceEntry::matches_expected)
    }
}

/// The product space of three independent components with marginal supports
/// `{0,1} x {0, 1/2, 1} x {0,1}`: all components share mean 1/2 and sup 1,
/// but they are not exchangeable, so the uniform split S/3 differs from
/// E[X_i | S]. This is the gate trigger for the OA witness.
pub fn oa_witness_trigger<T: Real>() -> RiskVector<T> {
    let mid_values = [T::zero(), real(0.5), T::one()];
    let mid_probs = [real::<T>(0.25), real(0.5), real(0.25)];
    let mut probs = Vec::new();
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut x3 = Vec::new();
    for a in 0..2 {
        for b in 0..3 {
            for c in 0..2 {
                probs.push(real::<T>(0.25) * mid_probs[b]);
                x1.push(real(a as f64));
                x2.push(mid_values[b]);
                x3.push(real(c as f64));
            }
        }
    }
    let space = FiniteSpace::new(probs).unwrap();
    RiskVector::new(vec![
        RandVar::new(Arc::clone(&space), x1).unwrap(),
        RandVar::new(Arc::clone(&space), x2).unwrap(),
        RandVar::new(Arc::clone(&space), x3).unwrap(),
    ])
    .unwrap()
}

/// Runs the axiom-independence battery: each witness rule must fail exactly
/// its designated axiom over its scenario set and pass the other three. A
/// CMRS control row (designated failure: none) closes the table.
pub fn independence_battery<T: Real>() -> Result<IndependenceBattery<T>, EngineError> {
    let tol = real::<T>(NUM_TOL);
    let four = [Axiom::Af, Axiom::Rf, Axiom::Ra, Axiom::Oa];

    // (i) Q-CMRS with Q ≠ P: S is constant, so A_1 ≡ E^Q[X_1] = 1/4 while
    // E[X_1] = 1/2 — AF off by exactly 0.25.
    let sp2 = FiniteSpace::new(vec![real::<T>(0.5), real(0.5)]).unwrap();
    let qcmrs_scen = ScenarioSet::new(vec![Scenario::new(
        "q-cmrs witness",
        RiskVector::new(vec![
            RandVar::new(Arc::clone(&sp2), vec![T::one(), T::zero()]).unwrap(),
            RandVar::new(Arc::clone(&sp2), vec![T::zero(), T::one()]).unwrap(),
            RandVar::constant(Arc::clone(&sp2), T::zero()).unwrap(),
        ])
        .unwrap(),
    )]);
    let qcmrs = RuleSpec::QCmrs {
        weights: vec![real(0.25), real(0.75)],
    };

    // (ii) mean-adjusted all-in-one on the 4-outcome demo: A_1 peaks at 1.5
    // while sup X_1 = 1. The same uniform-3 scenario drives the covariance
    // and mean-proportional RF failures.
    let sp4 = FiniteSpace::uniform(4).unwrap();
    let ma_scen = ScenarioSet::new(vec![Scenario::new(
        "mean-adjusted witness",
        RiskVector::new(vec![
            RandVar::new(Arc::clone(&sp4), vec![T::zero(), T::one(), T::zero(), T::one()])
                .unwrap(),
            RandVar::new(Arc::clone(&sp4), vec![T::zero(), T::zero(), T::one(), T::one()])
                .unwrap(),
            RandVar::constant(Arc::clone(&sp4), T::zero()).unwrap(),
        ])
        .unwrap(),
    )]);

    let sp3 = FiniteSpace::uniform(3).unwrap();
    let skew_scen = ScenarioSet::new(vec![Scenario::new(
        "skewed-total witness",
        RiskVector::new(vec![
            RandVar::new(Arc::clone(&sp3), vec![T::zero(), T::one(), T::one()]).unwrap(),
            RandVar::new(Arc::clone(&sp3), vec![T::zero(), T::zero(), real(9.0)]).unwrap(),
            RandVar::constant(Arc::clone(&sp3), T::zero()).unwrap(),
        ])
        .unwrap(),
    )]);

    // (iii) identity on the demo scenario: X_1 mixes values inside an
    // S-level, so RA fails.
    let id_scen = ScenarioSet::new(vec![Scenario::new(
        "identity witness",
        RiskVector::new(vec![
            RandVar::new(Arc::clone(&sp4), vec![T::zero(), T::one(), T::zero(), T::one()])
                .unwrap(),
            RandVar::new(Arc::clone(&sp4), vec![T::zero(), T::zero(), T::one(), T::one()])
                .unwrap(),
            RandVar::constant(Arc::clone(&sp4), T::zero()).unwrap(),
        ])
        .unwrap(),
    )]);

    // (iv) gated rule: uniform split at the designated trigger, CMRS
    // elsewhere. Merging two agents leaves the trigger, switching branches.
    let trigger = oa_witness_trigger::<T>();
    let gated_rule = RuleSpec::Gated {
        trigger: trigger.clone(),
        a: Box::new(RuleSpec::Uniform),
        b: Box::new(RuleSpec::Cmrs),
    };
    let gated_scen = ScenarioSet::new(vec![Scenario::new("gated witness", trigger)]);

    let mut entries = Vec::new();
    let cases: Vec<(RuleSpec<T>, Option<Axiom>, &ScenarioSet<T>)> = vec![
        (qcmrs, Some(Axiom::Af), &qcmrs_scen),
        (RuleSpec::MeanAdjusted, Some(Axiom::Rf), &ma_scen),
        (RuleSpec::Covariance, Some(Axiom::Rf), &skew_scen),
        (RuleSpec::MeanProportional, Some(Axiom::Rf), &skew_scen),
        (RuleSpec::Identity, Some(Axiom::Ra), &id_scen),
        (gated_rule, Some(Axiom::Oa), &gated_scen),
        (RuleSpec::Cmrs, None, &gated_scen),
    ];
    for (rule, designated, scen) in cases {
        let reports = four
            .iter()
            .map(|&axiom| check_axiom(&rule, axiom, scen, tol))
            .collect::<Result<Vec<_>, _>>()?;
        entries.push(IndependenceEntry {
            rule_name: rule.canonical_name().to_string(),
            designated_failure: designated,
            reports,
        });
    }
    Ok(IndependenceBattery { entries })
}

// ---------------------------------------------------------------------------
// Gaussian n = 2 regression (discretized perturbed-CMRS example)
// ---------------------------------------------------------------------------

/// One named assertion of the n = 2 Gaussian regression.
#[derive(Debug, Clone)]
pub struct RegressionCheck<T> {
    pub name: String,
    pub passed: bool,
    pub magnitude: T,
}

#[derive(Debug, Clone)]
pub struct GaussianRegressionReport<T> {
    pub points: usize,
    pub checks: Vec<RegressionCheck<T>>,
}

impl<T> GaussianRegressionReport<T> {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Discretized replication of the n = 2 perturbed rule: independent
/// Y_1 ~ N(0,1), Y_2 ~ N(0,2) on a quantile-midpoint product grid, allocation
/// A_1 = S/3 + S/6 = S/2 and A_2 = 2S/3 - S/6 = S/2, where S/3 and 2S/3 are
/// the analytic Gaussian conditional means. The rule satisfies AF and UI and
/// is σ(S)-measurable, yet differs from CMRS — possible only because OA is
/// empty at n = 2.
pub fn gaussian_n2_regression<T: Real>(
    points: usize,
) -> Result<GaussianRegressionReport<T>, EngineError> {
    assert!(points >= 20, "regression needs at least 20 points per marginal");
    let marg1 = discretize_gaussian(T::zero(), T::one(), points)?;
    let marg2 = discretize_gaussian(T::zero(), real(2.0), points)?;
    let m = points * points;
    let space = FiniteSpace::<T>::uniform(m)?;
    let mut y1 = Vec::with_capacity(m);
    let mut y2 = Vec::with_capacity(m);
    for &(v1, _) in &marg1 {
        for &(v2, _) in &marg2 {
            y1.push(v1);
            y2.push(v2);
        }
    }
    let y1 = RandVar::new(Arc::clone(&space), y1)?;
    let y2 = RandVar::new(Arc::clone(&space), y2)?;
    let total = y1.checked_add(&y2)?;

    let third = T::one() / real(3.0);
    let sixth = T::one() / real(6.0);
    let a1 = total.scale(third).checked_add(&total.scale(sixth))?;
    let a2 = total.scale(real::<T>(2.0) * third).checked_sub(&total.scale(sixth))?;

    let slack = real::<T>(2e-2);
    let tight = real::<T>(NUM_TOL);
    let mut checks = Vec::new();

    let af_gap = (a1.expectation() - y1.expectation())
        .abs()
        .max((a2.expectation() - y2.expectation()).abs());
    checks.push(RegressionCheck {
        name: "AF within 2e-2".into(),
        passed: af_gap <= slack,
        magnitude: af_gap,
    });

    let half_s = total.scale(real(0.5));
    let dev = a1
        .values()
        .iter()
        .zip(half_s.values())
        .chain(a2.values().iter().zip(half_s.values()))
        .map(|(&a, &h)| (a - h).abs())
        .fold(T::zero(), T::max);
    checks.push(RegressionCheck {
        name: "A_i = S/2 within 1e-9".into(),
        passed: dev <= tight,
        magnitude: dev,
    });

    let var_a1 = a1.variance();
    let var_target = real::<T>(0.75);
    let var_rel = (var_a1 - var_target).abs() / var_target;
    checks.push(RegressionCheck {
        name: "Var(A_1) within 5% of 0.75".into(),
        passed: var_rel <= real(0.05),
        magnitude: var_rel,
    });

    let ui1 = convex_order_leq_with_tol(&a1, &y1, slack)?;
    let ui2 = convex_order_leq_with_tol(&a2, &y2, slack)?;
    let ui_gap = convex_order_violation(&a1, &y1)?.max(convex_order_violation(&a2, &y2)?);
    checks.push(RegressionCheck {
        name: "UI with stop-loss slack 2e-2".into(),
        passed: ui1 && ui2,
        magnitude: ui_gap,
    });

    // distance from CMRS: A_1 - S/3 = S/6 must be substantial vs sd(S)
    let cmrs_gap = a1.checked_sub(&total.scale(third))?;
    let sd_gap = cmrs_gap.variance().sqrt();
    let sd_s = total.variance().sqrt();
    checks.push(RegressionCheck {
        name: "rule differs from CMRS by ≥ 0.1·sd(S)".into(),
        passed: sd_gap >= real::<T>(0.1) * sd_s,
        magnitude: sd_gap / sd_s,
    });

    Ok(GaussianRegressionReport { points, checks })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> f64 {
        NUM_TOL
    }

    fn demo_scenarios() -> ScenarioSet<f64> {
        let sp = FiniteSpace::uniform(4).unwrap();
        ScenarioSet::new(vec![Scenario::new(
            "demo",
            RiskVector::new(vec![
                RandVar::new(Arc::clone(&sp), vec![0.0, 1.0, 0.0, 1.0]).unwrap(),
                RandVar::new(Arc::clone(&sp), vec![0.0, 0.0, 1.0, 1.0]).unwrap(),
                RandVar::constant(sp, 0.0).unwrap(),
            ])
            .unwrap(),
        )])
    }

    #[test]
    fn af_pass_and_fail() {
        let scen = demo_scenarios();
        assert!(check_af(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_af(&RuleSpec::Identity, &scen, tol()).unwrap().passed());

        let sp2 = FiniteSpace::new(vec![0.5, 0.5]).unwrap();
        let qscen = ScenarioSet::new(vec![Scenario::new(
            "q",
            RiskVector::new(vec![
                RandVar::new(Arc::clone(&sp2), vec![1.0, 0.0]).unwrap(),
                RandVar::new(Arc::clone(&sp2), vec![0.0, 1.0]).unwrap(),
                RandVar::constant(sp2, 0.0).unwrap(),
            ])
            .unwrap(),
        )]);
        let qrule = RuleSpec::QCmrs {
            weights: vec![0.25, 0.75],
        };
        let report = check_af(&qrule, &qscen, tol()).unwrap();
        assert!(!report.passed());
        let w = &report.witnesses[0];
        assert_eq!(w.agent, Some(0));
        assert!((w.magnitude - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rf_fails_for_mean_adjusted_demo() {
        let scen = demo_scenarios();
        assert!(check_rf(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        let report = check_rf(&RuleSpec::MeanAdjusted, &scen, tol()).unwrap();
        assert!(!report.passed());
        let w = &report.witnesses[0];
        assert_eq!(w.agent, Some(0));
        assert!((w.magnitude - 0.5).abs() < 1e-12); // 1.5 vs sup 1
    }

    #[test]
    fn ra_fails_for_identity_demo() {
        let scen = demo_scenarios();
        assert!(!check_ra(&RuleSpec::Identity, &scen, tol()).unwrap().passed());
        assert!(check_ra(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_ra(&RuleSpec::Uniform, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn oa_passes_cmrs_and_uniform_fails_gated() {
        let scen = demo_scenarios();
        assert!(check_oa(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_oa(&RuleSpec::Uniform, &scen, tol()).unwrap().passed());

        // all-in-one gate on three independent binary components
        let sp8 = FiniteSpace::uniform(8).unwrap();
        let coins: Vec<RandVar<f64>> = (0..3)
            .map(|bit| {
                let vals = (0..8)
                    .map(|w| if (w >> bit) & 1 == 1 { 1.0 } else { 0.0 })
                    .collect();
                RandVar::new(Arc::clone(&sp8), vals).unwrap()
            })
            .collect();
        let trigger = RiskVector::new(coins).unwrap();
        let rule = RuleSpec::Gated {
            trigger: trigger.clone(),
            a: Box::new(RuleSpec::AllInOne),
            b: Box::new(RuleSpec::Cmrs),
        };
        let scen = ScenarioSet::new(vec![Scenario::new("gate", trigger)]);
        assert!(!check_oa(&rule, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn oa_skips_n2() {
        let sp = FiniteSpace::uniform(2).unwrap();
        let scen = ScenarioSet::new(vec![Scenario::new(
            "pair",
            RiskVector::new(vec![
                RandVar::new(Arc::clone(&sp), vec![0.0, 1.0]).unwrap(),
                RandVar::new(Arc::clone(&sp), vec![1.0, 0.0]).unwrap(),
            ])
            .unwrap(),
        )]);
        let report = check_oa(&RuleSpec::Cmrs, &scen, tol()).unwrap();
        assert!(report.passed());
        assert_eq!(report.skipped, 1);
        assert!(report.note.is_some());
    }

    #[test]
    fn cp_zp_mean_adjusted_fails_on_zero_agent() {
        // X_1 ≡ 0 with non-constant S: mean-adjusted gives agent 1 S - E[S]
        let sp = FiniteSpace::uniform(2).unwrap();
        let scen = ScenarioSet::new(vec![Scenario::new(
            "zero-first",
            RiskVector::new(vec![
                RandVar::constant(Arc::clone(&sp), 0.0).unwrap(),
                RandVar::new(Arc::clone(&sp), vec![0.0, 2.0]).unwrap(),
                RandVar::new(Arc::clone(&sp), vec![1.0, 3.0]).unwrap(),
            ])
            .unwrap(),
        )]);
        assert!(!check_cp(&RuleSpec::MeanAdjusted, &scen, tol()).unwrap().passed());
        assert!(!check_zp(&RuleSpec::MeanAdjusted, &scen, tol()).unwrap().passed());
        assert!(check_cp(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_zp(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());

        // no constant components: vacuous pass with skips recorded
        let sp3 = FiniteSpace::uniform(2).unwrap();
        let scen2 = ScenarioSet::new(vec![Scenario::new(
            "no-constants",
            RiskVector::new(vec![
                RandVar::new(Arc::clone(&sp3), vec![0.0, 1.0]).unwrap(),
                RandVar::new(Arc::clone(&sp3), vec![2.0, 1.0]).unwrap(),
            ])
            .unwrap(),
        )]);
        let report = check_cp(&RuleSpec::MeanAdjusted, &scen2, tol()).unwrap();
        assert!(report.passed());
        assert_eq!(report.scenarios_checked, 0);
        assert_eq!(report.skipped, 1);
    }

    #[test]
    fn ui_pass_cmrs_fail_all_in_one() {
        let scen = demo_scenarios();
        assert!(check_ui(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_ui(&RuleSpec::Identity, &scen, tol()).unwrap().passed());
        assert!(!check_ui(&RuleSpec::AllInOne, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn cm_fails_on_prop55_construction() {
        let sp = FiniteSpace::uniform(2).unwrap();
        let s = RandVar::new(Arc::clone(&sp), vec![0.0, 1.0]).unwrap();
        let scen = ScenarioSet::new(vec![Scenario::new(
            "prop55",
            RiskVector::new(vec![
                s.scale(-1.0),
                s.scale(2.0),
                RandVar::constant(Arc::clone(&sp), 0.0).unwrap(),
            ])
            .unwrap(),
        )]);
        let report = check_cm(&RuleSpec::Cmrs, &scen, tol()).unwrap();
        assert!(!report.passed());
        // CMRS still passes OA and ZP on the same battery
        assert!(check_oa(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(check_zp(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn sm_pass_cmrs_fail_mean_adjusted() {
        let scen = demo_scenarios();
        assert!(check_sm(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        assert!(!check_sm(&RuleSpec::MeanAdjusted, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn bt_on_backtracking_scenario() {
        let sp = FiniteSpace::uniform(8).unwrap();
        let sigmas = [1001.0, 1010.0, 1100.0];
        let agents = sigmas
            .iter()
            .enumerate()
            .map(|(bit, &sigma)| {
                let vals = (0..8)
                    .map(|w| if (w >> bit) & 1 == 1 { sigma } else { 0.0 })
                    .collect();
                RandVar::new(Arc::clone(&sp), vals).unwrap()
            })
            .collect();
        let scen = ScenarioSet::new(vec![Scenario::new(
            "digits",
            RiskVector::new(agents).unwrap(),
        )]);
        let report = check_bt(&RuleSpec::Cmrs, &scen, tol()).unwrap();
        assert!(report.passed());
        assert_eq!(report.scenarios_checked, 1);
        // mixtures of identity and CMRS also satisfy BT
        let mix = RuleSpec::Mixture {
            lambda: 0.5,
            a: Box::new(RuleSpec::Identity),
            b: Box::new(RuleSpec::Cmrs),
        };
        assert!(check_bt(&mix, &scen, tol()).unwrap().passed());
    }

    #[test]
    fn ia_ib_generalized_rule() {
        let sp = FiniteSpace::uniform(4).unwrap();
        let g = Partition::new(Arc::clone(&sp), vec![vec![0, 1], vec![2, 3]]).unwrap();
        let risks = RiskVector::new(vec![
            RandVar::new(Arc::clone(&sp), vec![0.0, 1.0, 0.0, 1.0]).unwrap(),
            RandVar::new(Arc::clone(&sp), vec![0.0, 0.0, 1.0, 1.0]).unwrap(),
            RandVar::constant(Arc::clone(&sp), 0.0).unwrap(),
        ])
        .unwrap();
        let scen = ScenarioSet::new(vec![
            Scenario::new("with-info", risks.clone()).with_partition(g)
        ]);
        assert!(check_ia(&GeneralizedCmrsRule, &scen, tol()).unwrap().passed());
        assert!(check_ib(&GeneralizedCmrsRule, &scen, tol()).unwrap().passed());

        // plain CMRS ignoring g fails IB with singleton target information
        let fine = Partition::singletons(Arc::clone(&sp));
        let scen = ScenarioSet::new(vec![
            Scenario::new("full-info", risks).with_partition(fine)
        ]);
        assert!(!check_ib(&RuleSpec::Cmrs, &scen, tol()).unwrap().passed());
        // g trivial: IA is equivalent to RA
        let scen_plain = demo_scenarios();
        assert!(check_ia(&RuleSpec::Cmrs, &scen_plain, tol()).unwrap().passed());
        assert!(!check_ia(&RuleSpec::Identity, &scen_plain, tol()).unwrap().passed());
    }

    #[test]
    fn independence_battery_matches_table() {
        let battery = independence_battery::<f64>().unwrap();
        assert!(battery.matches_expected(), "{battery:?}");
        assert_eq!(battery.entries.len(), 7);
        // the CMRS control row passes all four
        let control = battery.entries.last().unwrap();
        assert!(control.designated_failure.is_none());
        assert!(control.reports.iter().all(AxiomReport::passed));
    }

    #[test]
    fn gaussian_regression_at_50_points() {
        let report = gaussian_n2_regression::<f64>(50).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
    }

    #[test]
    fn battery_generation_is_deterministic_and_covering() {
        let config = BatteryConfig {
            count: 12,
            max_outcomes: 16,
            ..BatteryConfig::default()
        };
        let a = random_battery::<f64>(7, &config);
        let b = random_battery::<f64>(7, &config);
        for (x, y) in a.scenarios.iter().zip(&b.scenarios) {
            for (va, vb) in x.risks.agents().iter().zip(y.risks.agents()) {
                assert_eq!(va.values(), vb.values());
            }
        }
        // coverage scenarios exist
        let first = &a.scenarios[0];
        assert!(first.risks.agents().iter().any(|x| constant_level(x, NUM_TOL) == Some(2.0)));
        assert!(first.risks.agents().iter().any(|x| constant_level(x, NUM_TOL) == Some(0.0)));
        let second = &a.scenarios[1];
        let sigma_s = partition_of(&[second.risks.total()]).unwrap();
        assert!(second
            .risks
            .agents()
            .iter()
            .all(|x| is_measurable(x, &sigma_s).unwrap()));
    }

    #[test]
    fn witness_magnitudes_recompute() {
        // checker soundness: RF witness magnitude matches an independent
        // recomputation from the named outcome
        let scen = demo_scenarios();
        let report = check_rf(&RuleSpec::MeanAdjusted, &scen, tol()).unwrap();
        let w = &report.witnesses[0];
        let alloc = apply(&RuleSpec::MeanAdjusted, &scen.scenarios[0].risks).unwrap();
        let sup = scen.scenarios[0].risks.agent(w.agent.unwrap()).essential_sup();
        let max_excess = alloc
            .agent(w.agent.unwrap())
            .values()
            .iter()
            .map(|&v| v - sup)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((max_excess - w.magnitude).abs() < 1e-12);
        assert!(w.magnitude > NUM_TOL);
    }
}
