//! Command-line surface for the riskshare engine.
//!
//! Exit codes: 0 = all requested checks pass, 1 = a check failed (witnesses
//! printed), 2 = input error, 3 = rule-application error.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use riskshare::applications::{
    ingest_multicoin_csv, ingest_multipool_csv, ingest_pool_csv, ingest_price, ingest_revenue_csv,
    multi_coin_allocate, multi_coin_equivalence_max_dev, multi_pool_allocate,
    multi_pool_equivalence_max_dev, pool_allocate, pool_equivalence_max_dev, revenue_share,
    revenue_total, AppError, Price,
};
use riskshare::axiom_engine::{
    check_axiom, check_cm, check_oa, check_zp, gaussian_n2_regression, independence_battery,
    random_battery, Axiom, AxiomReport, BatteryConfig, EngineError, GeneralizedCmrsRule, Scenario,
    ScenarioRule, ScenarioSet,
};
use riskshare::prob_core::{comonotonicity_witness, FiniteSpace, Partition, RandVar, RiskVector};
use riskshare::rules::{apply, cmrs, Allocation, RuleError, RuleSpec};
use riskshare::NUM_TOL;

// ---------------------------------------------------------------------------
// CLI definition
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(name = "riskshare", version, about = "Risk-sharing rules, axiom checks, and pool/revenue allocators on finite probability spaces")]
struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Numeric tolerance for checks (default 1e-9).
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Seed for generated batteries.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Machine,
}

#[derive(clap::Args, Clone, Default)]
struct RuleArgs {
    /// Rule name: identity | all-in-one | mean-adjusted | uniform | cmrs |
    /// mean-proportional | covariance | q-cmrs | generalized-cmrs | mixture |
    /// gated | comono-improve
    #[arg(long)]
    rule: Option<String>,
    /// Comma-separated Q weights for q-cmrs.
    #[arg(long)]
    q_weights: Option<String>,
    /// Mixing weight for mixture.
    #[arg(long)]
    lambda: Option<f64>,
    /// First branch rule name for mixture/gated.
    #[arg(long)]
    mix_a: Option<String>,
    /// Second branch rule name for mixture/gated.
    #[arg(long)]
    mix_b: Option<String>,
    /// Scenario file whose agents form the gate trigger for gated.
    #[arg(long)]
    trigger: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a rule to a scenario file and print the allocation.
    Allocate {
        #[command(flatten)]
        rule: RuleArgs,
        /// Scenario file (JSON).
        scenario: PathBuf,
    },
    /// Check axioms against a rule on scenario files or a seeded battery.
    Verify {
        #[command(flatten)]
        rule: RuleArgs,
        /// Generated battery instead of scenario files: `seed=N` or `N`.
        #[arg(long)]
        battery: Option<String>,
        /// Scenario files and axiom names (AF RF RA OA CP ZP UI CM SM BT IA
        /// IB), in any order. `all` expands to the four sharing axioms
        /// AF RF RA OA; the eight properties must be named explicitly.
        #[arg(required = true)]
        args: Vec<String>,
    },
    /// Reproduce the axiom-independence table and the counterexample
    /// constructions; fails if any expected verdict flips.
    Counterexamples,
    /// Single mining pool payout.
    Pool {
        /// CSV with header miner_id,share.
        #[arg(long)]
        shares: PathBuf,
        /// Constant price, or path to a value,probability CSV.
        #[arg(long)]
        price: String,
        /// Winning miner id (omit when no pool miner issued the block).
        #[arg(long)]
        winner: Option<String>,
        /// Realized price when the price is a distribution.
        #[arg(long)]
        realized_price: Option<f64>,
        /// Also build the finite-space representation and print the maximum
        /// deviation from CMRS.
        #[arg(long)]
        check_cmrs: bool,
    },
    /// Multi-pool payout.
    Multipool {
        /// CSV with header miner_id,pool_id,share.
        #[arg(long)]
        shares: PathBuf,
        #[arg(long)]
        price: String,
        /// Winning pool id.
        #[arg(long)]
        winner: Option<String>,
        #[arg(long)]
        realized_price: Option<f64>,
        #[arg(long)]
        check_cmrs: bool,
    },
    /// Multi-coin payout.
    Multicoin {
        /// CSV with header miner_id,coin_id,share.
        #[arg(long)]
        shares: PathBuf,
        /// Comma-separated constant prices, one per coin in CSV order.
        #[arg(long)]
        prices: String,
        /// Realized minings: `coin_id=price` pairs, comma-separated.
        #[arg(long)]
        mined: Option<String>,
        #[arg(long)]
        check_cmrs: bool,
    },
    /// Streaming revenue split.
    Revenue {
        /// CSV with header user_id,fee,theta,subscribed.
        #[arg(long)]
        users: PathBuf,
        /// CSV with header artist_id,user_id,streams.
        #[arg(long)]
        streams: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Scenario file format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize, Clone)]
struct ScenarioFile {
    space: Vec<f64>,
    agents: Vec<AgentDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_partition: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rule: Option<RuleDef>,
}

#[derive(Serialize, Deserialize, Clone)]
struct AgentDef {
    name: String,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(deny_unknown_fields)]
struct RuleDef {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<Box<RuleDef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Box<RuleDef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trigger: Option<Box<ScenarioFile>>,
}

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

enum CliError {
    /// Exit 2: malformed input.
    Input(String),
    /// Exit 3: rule not applicable.
    Rule(String),
}

impl From<RuleError> for CliError {
    fn from(e: RuleError) -> Self {
        CliError::Rule(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::RuleApplication { .. } => CliError::Rule(e.to_string()),
            EngineError::Prob(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<AppError> for CliError {
    fn from(e: AppError) -> Self {
        match e {
            AppError::Rule(inner) => CliError::Rule(inner.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tolerance = cli.tolerance.unwrap_or(NUM_TOL);
    let result = match &cli.command {
        Command::Allocate { rule, scenario } => cmd_allocate(&cli, rule, scenario, tolerance),
        Command::Verify {
            rule,
            battery,
            args,
        } => cmd_verify(&cli, rule, battery.as_deref(), args, tolerance),
        Command::Counterexamples => cmd_counterexamples(&cli),
        Command::Pool {
            shares,
            price,
            winner,
            realized_price,
            check_cmrs,
        } => cmd_pool(&cli, shares, price, winner.as_deref(), *realized_price, *check_cmrs, tolerance),
        Command::Multipool {
            shares,
            price,
            winner,
            realized_price,
            check_cmrs,
        } => cmd_multipool(&cli, shares, price, winner.as_deref(), *realized_price, *check_cmrs, tolerance),
        Command::Multicoin {
            shares,
            prices,
            mined,
            check_cmrs,
        } => cmd_multicoin(&cli, shares, prices, mined.as_deref(), *check_cmrs, tolerance),
        Command::Revenue { users, streams } => cmd_revenue(&cli, users, streams),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Rule(msg)) => {
            eprintln!("rule error: {msg}");
            ExitCode::from(3)
        }
    }
}

// ---------------------------------------------------------------------------
// Scenario loading and rule construction
// ---------------------------------------------------------------------------

fn read_file(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_scenario_file(path: &PathBuf) -> Result<ScenarioFile, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!("{} line {}: {e}", path.display(), e.line()))
    })
}

fn build_scenario(file: &ScenarioFile, id: &str) -> Result<Scenario<f64>, CliError> {
    let risks = build_risks(file)?;
    let mut scen = Scenario::new(id.to_string(), risks);
    if let Some(blocks) = &file.target_partition {
        let space = Arc::clone(scen.risks.space());
        let g = Partition::new(space, blocks.clone())
            .map_err(|e| CliError::Input(format!("{id}: bad target_partition: {e}")))?;
        scen = scen.with_partition(g);
    }
    Ok(scen)
}

fn build_risks(file: &ScenarioFile) -> Result<RiskVector<f64>, CliError> {
    let space = FiniteSpace::new(file.space.clone())
        .map_err(|e| CliError::Input(format!("bad space: {e}")))?;
    let agents = file
        .agents
        .iter()
        .map(|a| {
            RandVar::new(Arc::clone(&space), a.values.clone())
                .map_err(|e| CliError::Input(format!("agent {}: {e}", a.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    RiskVector::new(agents).map_err(|e| CliError::Input(format!("bad risk vector: {e}")))
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Input(format!("cannot parse {what} entry {t:?}")))
        })
        .collect()
}

fn simple_rule(name: &str) -> Result<RuleSpec<f64>, CliError> {
    RuleSpec::from_simple_name(name)
        .ok_or_else(|| CliError::Input(format!("unknown or parameterized rule name {name:?}")))
}

/// How verify/allocate see the requested rule: a concrete RuleSpec, or the
/// scenario-aware generalized CMRS.
enum RequestedRule {
    Spec(RuleSpec<f64>),
    Generalized,
}

impl RequestedRule {
    fn name(&self) -> String {
        match self {
            RequestedRule::Spec(r) => r.canonical_name().to_string(),
            RequestedRule::Generalized => "generalized-cmrs".to_string(),
        }
    }

    fn as_scenario_rule(&self) -> &dyn ScenarioRule<f64> {
        match self {
            RequestedRule::Spec(r) => r,
            RequestedRule::Generalized => &GeneralizedCmrsRule,
        }
    }
}

fn rule_from_args(args: &RuleArgs, fallback: Option<&RuleDef>) -> Result<RequestedRule, CliError> {
    let Some(name) = args.rule.as_deref() else {
        let Some(def) = fallback else {
            return Err(CliError::Input(
                "no rule given (--rule) and the scenario file names none".into(),
            ));
        };
        return rule_from_def(def).map(RequestedRule::Spec);
    };
    match name {
        "generalized-cmrs" => Ok(RequestedRule::Generalized),
        "q-cmrs" => {
            let weights = args
                .q_weights
                .as_deref()
                .ok_or_else(|| CliError::Input("q-cmrs requires --q-weights".into()))?;
            Ok(RequestedRule::Spec(RuleSpec::QCmrs {
                weights: parse_f64_list(weights, "--q-weights")?,
            }))
        }
        "mixture" => {
            let lambda = args
                .lambda
                .ok_or_else(|| CliError::Input("mixture requires --lambda".into()))?;
            let a = simple_rule(
                args.mix_a
                    .as_deref()
                    .ok_or_else(|| CliError::Input("mixture requires --mix-a".into()))?,
            )?;
            let b = simple_rule(
                args.mix_b
                    .as_deref()
                    .ok_or_else(|| CliError::Input("mixture requires --mix-b".into()))?,
            )?;
            Ok(RequestedRule::Spec(RuleSpec::Mixture {
                lambda,
                a: Box::new(a),
                b: Box::new(b),
            }))
        }
        "gated" => {
            let trigger_path = args
                .trigger
                .as_ref()
                .ok_or_else(|| CliError::Input("gated requires --trigger".into()))?;
            let trigger_file = parse_scenario_file(trigger_path)?;
            let trigger = build_risks(&trigger_file)?;
            let a = simple_rule(
                args.mix_a
                    .as_deref()
                    .ok_or_else(|| CliError::Input("gated requires --mix-a".into()))?,
            )?;
            let b = simple_rule(
                args.mix_b
                    .as_deref()
                    .ok_or_else(|| CliError::Input("gated requires --mix-b".into()))?,
            )?;
            Ok(RequestedRule::Spec(RuleSpec::Gated {
                trigger,
                a: Box::new(a),
                b: Box::new(b),
            }))
        }
        other => simple_rule(other).map(RequestedRule::Spec),
    }
}

fn rule_from_def(def: &RuleDef) -> Result<RuleSpec<f64>, CliError> {
    match def.name.as_str() {
        "q-cmrs" => {
            let weights = def
                .weights
                .clone()
                .ok_or_else(|| CliError::Input("q-cmrs rule needs weights".into()))?;
            Ok(RuleSpec::QCmrs { weights })
        }
        "mixture" => {
            let lambda = def
                .lambda
                .ok_or_else(|| CliError::Input("mixture rule needs lambda".into()))?;
            let a = rule_from_def(
                def.a
                    .as_deref()
                    .ok_or_else(|| CliError::Input("mixture rule needs branch a".into()))?,
            )?;
            let b = rule_from_def(
                def.b
                    .as_deref()
                    .ok_or_else(|| CliError::Input("mixture rule needs branch b".into()))?,
            )?;
            Ok(RuleSpec::Mixture {
                lambda,
                a: Box::new(a),
                b: Box::new(b),
            })
        }
        "gated" => {
            let trigger_file = def
                .trigger
                .as_deref()
                .ok_or_else(|| CliError::Input("gated rule needs a trigger".into()))?;
            let trigger = build_risks(trigger_file)?;
            let a = rule_from_def(
                def.a
                    .as_deref()
                    .ok_or_else(|| CliError::Input("gated rule needs branch a".into()))?,
            )?;
            let b = rule_from_def(
                def.b
                    .as_deref()
                    .ok_or_else(|| CliError::Input("gated rule needs branch b".into()))?,
            )?;
            Ok(RuleSpec::Gated {
                trigger,
                a: Box::new(a),
                b: Box::new(b),
            })
        }
        other => simple_rule(other).map(|r| r),
    }
}

// ---------------------------------------------------------------------------
// allocate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AllocateReport {
    command: String,
    rule: String,
    agents: Vec<AgentAllocation>,
}

#[derive(Serialize)]
struct AgentAllocation {
    name: String,
    values: Vec<f64>,
    expectation: f64,
}

fn cmd_allocate(
    cli: &Cli,
    rule_args: &RuleArgs,
    scenario_path: &PathBuf,
    _tolerance: f64,
) -> Result<bool, CliError> {
    let file = parse_scenario_file(scenario_path)?;
    let scen = build_scenario(&file, &scenario_path.display().to_string())?;
    let requested = rule_from_args(rule_args, file.rule.as_ref())?;
    let alloc: Allocation<f64> = match &requested {
        RequestedRule::Spec(rule) => apply(rule, &scen.risks)?,
        RequestedRule::Generalized => {
            let g = scen
                .partition
                .clone()
                .unwrap_or_else(|| Partition::trivial(Arc::clone(scen.risks.space())));
            riskshare::rules::generalized_cmrs(&scen.risks, &g)?
        }
    };
    let report = AllocateReport {
        command: "allocate".into(),
        rule: requested.name(),
        agents: file
            .agents
            .iter()
            .zip(alloc.agents())
            .map(|(def, a)| AgentAllocation {
                name: def.name.clone(),
                values: a.values().to_vec(),
                expectation: a.expectation(),
            })
            .collect(),
    };
    match cli.format {
        Format::Machine => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
        Format::Csv => {
            println!("agent,outcome,value");
            for agent in &report.agents {
                for (w, v) in agent.values.iter().enumerate() {
                    println!("{},{w},{v:.6}", agent.name);
                }
                println!("{},E,{:.6}", agent.name, agent.expectation);
            }
        }
        Format::Table => {
            println!("rule: {}", report.rule);
            let m = report.agents[0].values.len();
            let header: Vec<String> = (0..m).map(|w| format!("ω{w}")).collect();
            println!("{:<12} {} {:>12}", "agent", header.iter().map(|h| format!("{h:>12}")).collect::<Vec<_>>().join(" "), "E");
            for agent in &report.agents {
                let cells: Vec<String> = agent.values.iter().map(|v| format!("{v:>12.6}")).collect();
                println!("{:<12} {} {:>12.6}", agent.name, cells.join(" "), agent.expectation);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RunReport {
    command: String,
    rule: String,
    seed: Option<u64>,
    tolerance: f64,
    axioms: Vec<AxiomReportOut>,
    exit: u8,
}

#[derive(Serialize)]
struct AxiomReportOut {
    axiom: String,
    verdict: String,
    scenarios_checked: usize,
    skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    witnesses: Vec<WitnessOut>,
}

#[derive(Serialize)]
struct WitnessOut {
    scenario: String,
    agent: Option<usize>,
    magnitude: f64,
    detail: String,
}

fn report_out(report: &AxiomReport<f64>) -> AxiomReportOut {
    AxiomReportOut {
        axiom: report.axiom.name().to_string(),
        verdict: if report.passed() { "pass" } else { "fail" }.to_string(),
        scenarios_checked: report.scenarios_checked,
        skipped: report.skipped,
        note: report.note.clone(),
        witnesses: report
            .witnesses
            .iter()
            .map(|w| WitnessOut {
                scenario: w.scenario.clone(),
                agent: w.agent,
                magnitude: w.magnitude,
                detail: w.detail.clone(),
            })
            .collect(),
    }
}

fn parse_battery_seed(text: &str) -> Result<u64, CliError> {
    let raw = text.strip_prefix("seed=").unwrap_or(text);
    raw.parse::<u64>()
        .map_err(|_| CliError::Input(format!("cannot parse battery seed from {text:?}")))
}

fn cmd_verify(
    cli: &Cli,
    rule_args: &RuleArgs,
    battery: Option<&str>,
    args: &[String],
    tolerance: f64,
) -> Result<bool, CliError> {
    // positional args mix scenario paths and axiom names
    let mut axioms: Vec<Axiom> = Vec::new();
    let mut paths: Vec<PathBuf> = Vec::new();
    for arg in args {
        if arg == "all" {
            for a in [Axiom::Af, Axiom::Rf, Axiom::Ra, Axiom::Oa] {
                if !axioms.contains(&a) {
                    axioms.push(a);
                }
            }
        } else if let Some(a) = Axiom::from_name(arg) {
            if !axioms.contains(&a) {
                axioms.push(a);
            }
        } else {
            paths.push(PathBuf::from(arg));
        }
    }
    if axioms.is_empty() {
        return Err(CliError::Input(
            "no axioms requested (name them or pass `all`)".into(),
        ));
    }

    let requested = rule_from_args(rule_args, None)?;
    let mut seed_used: Option<u64> = None;
    let scenarios: ScenarioSet<f64> = if let Some(battery_spec) = battery {
        if !paths.is_empty() {
            return Err(CliError::Input(
                "give either scenario files or --battery, not both".into(),
            ));
        }
        let seed = parse_battery_seed(battery_spec)
            .or_else(|e| cli.seed.ok_or(e))?;
        seed_used = Some(seed);
        let config = BatteryConfig {
            non_negative: matches!(&requested, RequestedRule::Spec(RuleSpec::MeanProportional)),
            with_partitions: axioms.iter().any(|a| matches!(a, Axiom::Ia | Axiom::Ib)),
            ..BatteryConfig::default()
        };
        random_battery(seed, &config)
    } else {
        if paths.is_empty() {
            return Err(CliError::Input(
                "no scenarios given (files or --battery seed=N)".into(),
            ));
        }
        let scens = paths
            .iter()
            .map(|p| {
                let file = parse_scenario_file(p)?;
                build_scenario(&file, &p.display().to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        ScenarioSet::new(scens)
    };

    let rule = requested.as_scenario_rule();
    let reports = axioms
        .iter()
        .map(|&a| check_axiom(rule, a, &scenarios, tolerance))
        .collect::<Result<Vec<_>, _>>()?;
    let all_pass = reports.iter().all(AxiomReport::passed);
    let run = RunReport {
        command: "verify".into(),
        rule: requested.name(),
        seed: seed_used.or(cli.seed),
        tolerance,
        axioms: reports.iter().map(report_out).collect(),
        exit: u8::from(!all_pass),
    };
    match cli.format {
        Format::Machine => {
            if battery.is_some() && run.seed.is_none() {
                return Err(CliError::Input("machine mode requires an explicit seed".into()));
            }
            println!("{}", serde_json::to_string_pretty(&run).unwrap());
        }
        Format::Csv => {
            println!("axiom,verdict,scenarios_checked,skipped,witnesses");
            for r in &run.axioms {
                println!(
                    "{},{},{},{},{}",
                    r.axiom, r.verdict, r.scenarios_checked, r.skipped, r.witnesses.len()
                );
            }
        }
        Format::Table => {
            println!("rule: {}", run.rule);
            if let Some(seed) = run.seed {
                println!("seed: {seed}");
            }
            for r in &run.axioms {
                let mut line = format!(
                    "{}: {} (scenarios {}, skipped {})",
                    r.axiom, r.verdict, r.scenarios_checked, r.skipped
                );
                if let Some(note) = &r.note {
                    line.push_str(&format!(" — {note}"));
                }
                println!("{line}");
                for w in r.witnesses.iter().take(5) {
                    let agent = w.agent.map_or(String::new(), |a| format!(" agent {a},"));
                    println!(
                        "  witness: scenario {},{agent} magnitude {:.6}: {}",
                        w.scenario, w.magnitude, w.detail
                    );
                }
                if r.witnesses.len() > 5 {
                    println!("  ... and {} more witnesses", r.witnesses.len() - 5);
                }
            }
        }
    }
    Ok(all_pass)
}

// ---------------------------------------------------------------------------
// counterexamples
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CounterexampleReport {
    command: String,
    independence: Vec<IndependenceRow>,
    conflict: ConflictRow,
    gaussian: Vec<GaussianRow>,
    backtracking_max_deviation: f64,
    exit: u8,
}

#[derive(Serialize)]
struct IndependenceRow {
    rule: String,
    designated_failure: Option<String>,
    verdicts: Vec<String>, // AF, RF, RA, OA
    matches_expected: bool,
}

#[derive(Serialize)]
struct ConflictRow {
    comonotonicity_violated: bool,
    witness: Option<WitnessOut>,
    oa_passes: bool,
    zp_passes: bool,
}

#[derive(Serialize)]
struct GaussianRow {
    check: String,
    passed: bool,
    magnitude: f64,
}

fn cmd_counterexamples(cli: &Cli) -> Result<bool, CliError> {
    // 1. independence table over AF, RF, RA, OA
    let battery = independence_battery::<f64>()?;
    let independence: Vec<IndependenceRow> = battery
        .entries
        .iter()
        .map(|e| IndependenceRow {
            rule: e.rule_name.clone(),
            designated_failure: e.designated_failure.map(|a| a.name().to_string()),
            verdicts: e
                .reports
                .iter()
                .map(|r| if r.passed() { "pass" } else { "fail" }.to_string())
                .collect(),
            matches_expected: e.matches_expected(),
        })
        .collect();

    // 2. comonotonicity conflict: CMRS on (-S, 2S, 0) with non-constant S
    let sp = FiniteSpace::uniform(2).map_err(|e| CliError::Input(e.to_string()))?;
    let s = RandVar::new(Arc::clone(&sp), vec![0.0, 1.0])
        .map_err(|e| CliError::Input(e.to_string()))?;
    let conflict_risks = RiskVector::new(vec![
        s.scale(-1.0),
        s.scale(2.0),
        RandVar::constant(Arc::clone(&sp), 0.0).map_err(|e| CliError::Input(e.to_string()))?,
    ])
    .map_err(|e| CliError::Input(e.to_string()))?;
    let conflict_scen = ScenarioSet::new(vec![Scenario::new("conflict", conflict_risks.clone())]);
    let alloc = cmrs(&conflict_risks)?;
    let cm_witness = comonotonicity_witness(alloc.agents())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let rule = RuleSpec::Cmrs;
    let conflict = ConflictRow {
        comonotonicity_violated: cm_witness.is_some(),
        witness: cm_witness.map(|(i, j, a, b, mag)| WitnessOut {
            scenario: "conflict".into(),
            agent: Some(i),
            magnitude: mag,
            detail: format!("components {i} and {j} move oppositely across ω{a}, ω{b}"),
        }),
        oa_passes: check_oa(&rule, &conflict_scen, NUM_TOL)?.passed(),
        zp_passes: check_zp(&rule, &conflict_scen, NUM_TOL)?.passed(),
    };
    // sanity: the same scenario through the CM checker agrees
    let cm_report = check_cm(&rule, &conflict_scen, NUM_TOL)?;
    let conflict_ok = conflict.comonotonicity_violated
        && !cm_report.passed()
        && conflict.oa_passes
        && conflict.zp_passes;

    // 3. Gaussian n = 2 regression at 50 points per marginal
    let regression = gaussian_n2_regression::<f64>(50)?;
    let gaussian: Vec<GaussianRow> = regression
        .checks
        .iter()
        .map(|c| GaussianRow {
            check: c.name.clone(),
            passed: c.passed,
            magnitude: c.magnitude,
        })
        .collect();

    // 4. backtracking digits: σ(S) determines every component exactly
    let sp8 = FiniteSpace::uniform(8).map_err(|e| CliError::Input(e.to_string()))?;
    let sigmas = [1001.0, 1010.0, 1100.0];
    let digit_agents = sigmas
        .iter()
        .enumerate()
        .map(|(bit, &sigma)| {
            let vals: Vec<f64> = (0..8)
                .map(|w| if (w >> bit) & 1 == 1 { sigma } else { 0.0 })
                .collect();
            RandVar::new(Arc::clone(&sp8), vals).map_err(|e| CliError::Input(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let digits = RiskVector::new(digit_agents).map_err(|e| CliError::Input(e.to_string()))?;
    let digit_alloc = cmrs(&digits)?;
    let mut backtracking_max_deviation = 0.0f64;
    for (ai, xi) in digit_alloc.agents().iter().zip(digits.agents()) {
        for (a, x) in ai.values().iter().zip(xi.values()) {
            backtracking_max_deviation = backtracking_max_deviation.max((a - x).abs());
        }
    }

    let all_ok = battery.matches_expected()
        && conflict_ok
        && regression.passed()
        && backtracking_max_deviation == 0.0;
    let report = CounterexampleReport {
        command: "counterexamples".into(),
        independence,
        conflict,
        gaussian,
        backtracking_max_deviation,
        exit: u8::from(!all_ok),
    };

    match cli.format {
        Format::Machine => println!("{}", serde_json::to_string_pretty(&report).unwrap()),
        Format::Csv => {
            println!("section,row,af,rf,ra,oa,expected_match");
            for row in &report.independence {
                println!(
                    "independence,{},{},{},{},{},{}",
                    row.rule,
                    row.verdicts[0],
                    row.verdicts[1],
                    row.verdicts[2],
                    row.verdicts[3],
                    row.matches_expected
                );
            }
            println!(
                "conflict,cmrs,cm={},oa={},zp={},,",
                if report.conflict.comonotonicity_violated { "fail" } else { "pass" },
                if report.conflict.oa_passes { "pass" } else { "fail" },
                if report.conflict.zp_passes { "pass" } else { "fail" },
            );
            for row in &report.gaussian {
                println!(
                    "gaussian,{},{},magnitude={:.6},,",
                    row.check,
                    if row.passed { "pass" } else { "fail" },
                    row.magnitude
                );
            }
            println!(
                "backtracking,digits,max_deviation={:.6},,,",
                report.backtracking_max_deviation
            );
        }
        Format::Table => {
            println!("independence table (AF / RF / RA / OA):");
            println!(
                "{:<20} {:>6} {:>6} {:>6} {:>6}  {:<12} {}",
                "rule", "AF", "RF", "RA", "OA", "designated", "matches"
            );
            for row in &report.independence {
                println!(
                    "{:<20} {:>6} {:>6} {:>6} {:>6}  {:<12} {}",
                    row.rule,
                    row.verdicts[0],
                    row.verdicts[1],
                    row.verdicts[2],
                    row.verdicts[3],
                    row.designated_failure.as_deref().unwrap_or("none"),
                    if row.matches_expected { "yes" } else { "NO" }
                );
            }
            println!();
            println!(
                "conflict (-S, 2S, 0): comonotonicity {}{}",
                if report.conflict.comonotonicity_violated { "violated" } else { "NOT violated" },
                report
                    .conflict
                    .witness
                    .as_ref()
                    .map(|w| format!(" — {} (magnitude {:.6})", w.detail, w.magnitude))
                    .unwrap_or_default()
            );
            println!(
                "  same scenario: OA {}, ZP {}",
                if report.conflict.oa_passes { "pass" } else { "fail" },
                if report.conflict.zp_passes { "pass" } else { "fail" }
            );
            println!();
            println!("gaussian n=2 regression (50 points per marginal):");
            for row in &report.gaussian {
                println!(
                    "  {}: {} (magnitude {:.6})",
                    row.check,
                    if row.passed { "pass" } else { "fail" },
                    row.magnitude
                );
            }
            println!();
            println!(
                "backtracking digits: allocation == input, max deviation {:.6}",
                report.backtracking_max_deviation
            );
            if !all_ok {
                println!();
                println!("MISMATCH: some expected verdicts flipped (see rows marked NO / fail)");
            }
        }
    }
    Ok(all_ok)
}

// ---------------------------------------------------------------------------
// applications
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct PayoutReport {
    command: String,
    payouts: Vec<PayoutRow>,
    total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cmrs_max_deviation: Option<f64>,
}

#[derive(Serialize)]
struct PayoutRow {
    id: String,
    payout: f64,
}

fn print_payouts(cli: &Cli, report: &PayoutReport, check_ok: bool) -> Result<bool, CliError> {
    match cli.format {
        Format::Machine => println!("{}", serde_json::to_string_pretty(report).unwrap()),
        Format::Csv => {
            println!("id,payout");
            for row in &report.payouts {
                println!("{},{:.6}", row.id, row.payout);
            }
        }
        Format::Table => {
            println!("{:<12} {:>14}", "id", "payout");
            for row in &report.payouts {
                println!("{:<12} {:>14.6}", row.id, row.payout);
            }
            println!("{:<12} {:>14.6}", "total", report.total);
            if let Some(dev) = report.cmrs_max_deviation {
                println!("max deviation {dev:.6}");
            }
        }
    }
    Ok(check_ok)
}

fn resolve_price(text: &str) -> Result<Price<f64>, CliError> {
    if text.trim().parse::<f64>().is_ok() {
        return Ok(ingest_price(text)?);
    }
    let file = std::fs::read_to_string(text)
        .map_err(|e| CliError::Input(format!("{text}: {e}")))?;
    Ok(ingest_price(&file)?)
}

fn index_for(ids: &[String], wanted: &str, what: &str) -> Result<usize, CliError> {
    ids.iter()
        .position(|id| id == wanted)
        .ok_or_else(|| CliError::Input(format!("unknown {what} id {wanted:?}")))
}

fn cmd_pool(
    cli: &Cli,
    shares: &PathBuf,
    price_arg: &str,
    winner: Option<&str>,
    realized_price: Option<f64>,
    check_cmrs: bool,
    tolerance: f64,
) -> Result<bool, CliError> {
    let price = resolve_price(price_arg)?;
    let (ids, spec) = ingest_pool_csv(&read_file(shares)?, price)?;
    let realized = realized_price.unwrap_or_else(|| spec.price().expectation());
    let winner_idx = winner
        .map(|w| index_for(&ids, w, "miner"))
        .transpose()?;
    let payouts = pool_allocate(&spec, winner_idx, realized)?;
    let deviation = if check_cmrs {
        Some(pool_equivalence_max_dev(&spec)?)
    } else {
        None
    };
    let report = PayoutReport {
        command: "pool".into(),
        payouts: ids
            .iter()
            .zip(&payouts)
            .map(|(id, &p)| PayoutRow {
                id: id.clone(),
                payout: p,
            })
            .collect(),
        total: payouts.iter().sum(),
        cmrs_max_deviation: deviation,
    };
    let ok = deviation.map_or(true, |d| d <= tolerance);
    print_payouts(cli, &report, ok)
}

fn cmd_multipool(
    cli: &Cli,
    shares: &PathBuf,
    price_arg: &str,
    winner: Option<&str>,
    realized_price: Option<f64>,
    check_cmrs: bool,
    tolerance: f64,
) -> Result<bool, CliError> {
    let price = resolve_price(price_arg)?;
    let (miners, pools, spec) = ingest_multipool_csv(&read_file(shares)?, price)?;
    let realized = realized_price.unwrap_or_else(|| spec.price().expectation());
    let winner_idx = winner
        .map(|w| index_for(&pools, w, "pool"))
        .transpose()?;
    let payouts = multi_pool_allocate(&spec, winner_idx, realized)?;
    let deviation = if check_cmrs {
        Some(multi_pool_equivalence_max_dev(&spec)?)
    } else {
        None
    };
    let report = PayoutReport {
        command: "multipool".into(),
        payouts: miners
            .iter()
            .zip(&payouts)
            .map(|(id, &p)| PayoutRow {
                id: id.clone(),
                payout: p,
            })
            .collect(),
        total: payouts.iter().sum(),
        cmrs_max_deviation: deviation,
    };
    let ok = deviation.map_or(true, |d| d <= tolerance);
    print_payouts(cli, &report, ok)
}

fn cmd_multicoin(
    cli: &Cli,
    shares: &PathBuf,
    prices_arg: &str,
    mined: Option<&str>,
    check_cmrs: bool,
    tolerance: f64,
) -> Result<bool, CliError> {
    let price_values = parse_f64_list(prices_arg, "--prices")?;
    let prices: Vec<Price<f64>> = price_values.into_iter().map(Price::Constant).collect();
    let (miners, coins, spec) = ingest_multicoin_csv(&read_file(shares)?, prices)?;
    let mut realized: Vec<Option<f64>> = vec![None; coins.len()];
    if let Some(mined_spec) = mined {
        for part in mined_spec.split(',') {
            let (coin, price_text) = part
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("--mined entry {part:?} is not coin=price")))?;
            let idx = index_for(&coins, coin.trim(), "coin")?;
            let price = price_text.trim().parse::<f64>().map_err(|_| {
                CliError::Input(format!("cannot parse mined price {price_text:?}"))
            })?;
            realized[idx] = Some(price);
        }
    }
    let payouts = multi_coin_allocate(&spec, &realized)?;
    let deviation = if check_cmrs {
        Some(multi_coin_equivalence_max_dev(&spec)?)
    } else {
        None
    };
    let report = PayoutReport {
        command: "multicoin".into(),
        payouts: miners
            .iter()
            .zip(&payouts)
            .map(|(id, &p)| PayoutRow {
                id: id.clone(),
                payout: p,
            })
            .collect(),
        total: payouts.iter().sum(),
        cmrs_max_deviation: deviation,
    };
    let ok = deviation.map_or(true, |d| d <= tolerance);
    print_payouts(cli, &report, ok)
}

fn cmd_revenue(cli: &Cli, users: &PathBuf, streams: &PathBuf) -> Result<bool, CliError> {
    let (artists, _users, spec) = ingest_revenue_csv(&read_file(users)?, &read_file(streams)?)?;
    let payouts = revenue_share(&spec);
    let report = PayoutReport {
        command: "revenue".into(),
        payouts: artists
            .iter()
            .zip(&payouts)
            .map(|(id, &p)| PayoutRow {
                id: id.clone(),
                payout: p,
            })
            .collect(),
        total: revenue_total(&spec),
        cmrs_max_deviation: None,
    };
    print_payouts(cli, &report, true)
}
