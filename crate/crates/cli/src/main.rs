//! Command-line front end for the principal-multi-agent contract solvers.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 solver
//! refusal (e.g. the dominance condition fails), 4 numerical failure.
//!
//! All randomness flows from a single `--seed`; sub-streams are derived with
//! the crate's documented SplitMix64 splitting rule (`Rng::split` with the
//! tags listed in the README), so identical invocations produce
//! byte-identical `--json` reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use pma_core::bayes::{
    bayes_solve, check_dsic, menu_to_json, BayesSolveOptions, BayesianInstance, OracleKind,
};
use pma_core::gen::{
    gen_independent_set, gen_label_cover, gen_random, gen_random_bayesian, BayesGenParams,
    FamilyChoice, GenParams, Graph, LabelCoverInput,
};
use pma_core::lp::{self, solve_lp, LinearProgram, LpOutcome, Relation, Row, Sense};
use pma_core::matroid::{
    brute_force_optimal, build_partition_problem, build_partition_problem_with, RewardEvaluator,
    DEFAULT_BASE_CAP,
};
use pma_core::model::{
    instance_from_json, instance_to_json, load_instance, principal_utility, Instance, RewardMode,
};
use pma_core::payments::{min_payment, Inducibility};
use pma_core::rewards::{self, CheckMode, FosdVerdict, Property, PropertyVerdict};
use pma_core::submod::solve_dr;
use pma_core::supermod::{solve_ir_fosd, SolveError, SolveOptions};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_REFUSAL: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(
    name = "pma",
    version,
    about = "Hidden-action principal-multi-agent contract solvers"
)]
struct Cli {
    /// Emit a machine-readable JSON report on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate an instance file.
    Validate { file: PathBuf },
    /// Check structural properties of an instance's reward and distributions.
    Check(CheckArgs),
    /// Solve a non-Bayesian instance.
    Solve(SolveArgs),
    /// Solve a Bayesian instance for a menu of randomized contracts.
    BayesSolve(BayesSolveArgs),
    /// Generate instances.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Debug oracles (currently: the LP solver).
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Run solver-vs-oracle comparisons over seeded instances, emitting CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct CheckArgs {
    file: PathBuf,
    /// Property to check.
    #[arg(long, value_enum)]
    property: PropertyArg,
    /// Exhaustive over the tuple lattice instead of sampled.
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyArg {
    Fosd,
    Dr,
    Ir,
    Increasing,
}

#[derive(Args)]
struct SolveArgs {
    file: PathBuf,
    /// brute, ir-fosd, or dr-approx.
    #[arg(long, value_enum, default_value = "brute")]
    method: MethodArg,
    /// Additive accuracy of the approximate solver.
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the minimum-payment table instead of solving.
    #[arg(long)]
    min_payments: bool,
    /// Trust declared reward tags instead of re-verifying by sampling.
    #[arg(long)]
    trust_tags: bool,
    /// Write the contract artifact to this path.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Brute,
    IrFosd,
    DrApprox,
}

#[derive(Args)]
struct BayesSolveArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    rho: f64,
    /// ir (exact oracle under dominance) or dr (approximate oracle).
    #[arg(long, value_enum, default_value = "ir")]
    oracle: OracleArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the menu artifact to this path.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    Ir,
    Dr,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Seeded random instance.
    Random(GenRandomArgs),
    /// Label-cover gadget from a bipartite constraint graph.
    LabelCover(GenLabelCoverArgs),
    /// Independent-set gadget from an undirected graph.
    IndepSet(GenIndepSetArgs),
}

#[derive(Args)]
struct GenRandomArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    ell: usize,
    #[arg(long, default_value_t = 2)]
    m: usize,
    #[arg(long, default_value_t = 1)]
    q: usize,
    /// linear, budget-additive, coverage-max, or exp-sum.
    #[arg(long, value_enum, default_value = "exp-sum")]
    family: FamilyArg,
    /// Guarantee the dominance condition by construction.
    #[arg(long)]
    fosd: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Generate a Bayesian instance with this many types.
    #[arg(long)]
    types: Option<usize>,
    /// Support size of the type distribution (Bayesian only).
    #[arg(long, default_value_t = 2)]
    support: usize,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Linear,
    BudgetAdditive,
    CoverageMax,
    ExpSum,
}

#[derive(Args)]
struct GenLabelCoverArgs {
    /// Text file: first line "left right labels", then one line per edge
    /// "u v c0 c1 ... c{labels-1}" mapping each left label to the required
    /// right label.
    graph: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    smoothing: f64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenIndepSetArgs {
    /// Text file: first line "vertices", then one line "u v" per edge.
    graph: PathBuf,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Solve an LP from a JSON file and print the outcome.
    Lp { file: PathBuf },
}

#[derive(Args)]
struct BenchArgs {
    /// Number of seeded instances per family.
    #[arg(long, default_value_t = 20)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }
    fn validation(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: msg.into(),
        }
    }
    fn refusal(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_REFUSAL,
            message: msg.into(),
        }
    }
    fn numerical(msg: impl Into<String>) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: msg.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let started = Instant::now();
    let json_mode = cli.json;
    match run(cli) {
        Ok(report) => {
            if json_mode {
                println!(
                    "{}",
                    serde_json::to_string(&report).expect("serializable report")
                );
            } else {
                print_human(&report, started.elapsed().as_millis());
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<Value, Failure> {
    match cli.command {
        Command::Validate { file } => cmd_validate(&file),
        Command::Check(args) => cmd_check(args),
        Command::Solve(args) => cmd_solve(args),
        Command::BayesSolve(args) => cmd_bayes_solve(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Oracle(OracleCommand::Lp { file }) => cmd_oracle_lp(&file),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn load(path: &Path) -> Result<(Instance, String), Failure> {
    let text = read_file(path)?;
    let inst = load_instance(&text).map_err(|e| Failure::validation(e.to_string()))?;
    let digest = instance_digest(&inst);
    Ok((inst, digest))
}

fn instance_digest(inst: &Instance) -> String {
    let canonical = serde_json::to_string(&instance_to_json(inst)).expect("serializable");
    hex_digest(canonical.as_bytes())
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_artifact(path: &Option<PathBuf>, value: &Value) -> Result<Option<String>, Failure> {
    match path {
        None => Ok(None),
        Some(p) => {
            fs::write(
                p,
                serde_json::to_string_pretty(value).expect("serializable"),
            )
            .map_err(|e| Failure::usage(format!("cannot write {}: {e}", p.display())))?;
            Ok(Some(p.display().to_string()))
        }
    }
}

// ---------------------------------------------------------------------------
// validate / check
// ---------------------------------------------------------------------------

fn cmd_validate(file: &Path) -> Result<Value, Failure> {
    let (inst, digest) = load(file)?;
    Ok(json!({
        "command": "validate",
        "digest": digest,
        "n": inst.n(),
        "ell": inst.ell(),
        "m": inst.m(),
        "q": inst.outcome_space.q,
        "reward_family": inst.reward.family.name(),
        "valid": true,
    }))
}

fn cmd_check(args: CheckArgs) -> Result<Value, Failure> {
    let (inst, digest) = load(&args.file)?;
    let detail = match args.property {
        PropertyArg::Fosd => {
            let verdict =
                rewards::check_fosd(&inst).map_err(|e| Failure::numerical(e.to_string()))?;
            match verdict {
                FosdVerdict::Pass { witnesses } => json!({
                    "property": "fosd",
                    "pass": true,
                    "transport_witnesses": witnesses.len(),
                }),
                FosdVerdict::Fail {
                    agent,
                    pair,
                    comprehensive_set,
                } => json!({
                    "property": "fosd",
                    "pass": false,
                    "agent": agent,
                    "pair": [pair.0, pair.1],
                    "comprehensive_set": comprehensive_set,
                }),
            }
        }
        other => {
            let property = match other {
                PropertyArg::Dr => Property::DrSubmodular,
                PropertyArg::Ir => Property::IrSupermodular,
                PropertyArg::Increasing => Property::Increasing,
                PropertyArg::Fosd => unreachable!(),
            };
            let mode = if args.exhaustive {
                CheckMode::Exhaustive { cap: 2_000_000 }
            } else {
                CheckMode::Sampled {
                    trials: args.trials,
                    seed: args.seed,
                }
            };
            let verdict = rewards::check_property(&inst, property, mode)
                .map_err(|e| Failure::numerical(e.to_string()))?;
            match verdict {
                PropertyVerdict::Pass { checked } => {
                    json!({ "property": property_name(property), "pass": true, "checked": checked })
                }
                PropertyVerdict::NoViolationFound { trials } => {
                    json!({ "property": property_name(property), "pass": true, "sampled_trials": trials })
                }
                PropertyVerdict::Fail { witness } => json!({
                    "property": property_name(property),
                    "pass": false,
                    "witness": {
                        "base": witness.base,
                        "dominating": witness.dominating,
                        "increment": witness.increment,
                        "violation": witness.violation,
                    },
                }),
            }
        }
    };
    Ok(json!({
        "command": "check",
        "digest": digest,
        "seed": args.seed,
        "result": detail,
    }))
}

fn property_name(p: Property) -> &'static str {
    match p {
        Property::Increasing => "increasing",
        Property::DrSubmodular => "dr_submodular",
        Property::IrSupermodular => "ir_supermodular",
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

/// Serialized minimum-payment table: per agent, per action, the optional
/// (payment, row) pair.
type PhatTable = Vec<Vec<Option<(f64, Vec<f64>)>>>;

/// Memoized minimum-payment table, stored under `PMA_CACHE_DIR` keyed by the
/// instance digest.
fn cached_partition_problem(
    inst: &Instance,
    digest: &str,
) -> Result<pma_core::matroid::PartitionProblem, Failure> {
    let cache_dir = std::env::var_os("PMA_CACHE_DIR").map(PathBuf::from);
    let cache_path = cache_dir
        .as_ref()
        .map(|d| d.join(format!("{digest}.phat.json")));
    if let Some(path) = &cache_path {
        if let Ok(text) = fs::read_to_string(path) {
            if let Ok(table) = serde_json::from_str::<PhatTable>(&text) {
                let pp = build_partition_problem_with(inst, |i, a| {
                    Ok(table.get(i).and_then(|row| row.get(a)).cloned().flatten())
                })
                .map_err(|e| Failure::numerical(e.to_string()))?;
                return Ok(pp);
            }
        }
    }
    let pp = build_partition_problem(inst).map_err(|e| Failure::numerical(e.to_string()))?;
    if let Some(path) = &cache_path {
        let mut table: PhatTable = vec![vec![None; inst.ell()]; inst.n()];
        for (i, part) in pp.parts.iter().enumerate() {
            for el in part {
                table[i][el.action] = Some((el.weight, el.payment_row.clone()));
            }
        }
        if let Some(dir) = path.parent() {
            let _ = fs::create_dir_all(dir);
        }
        let _ = fs::write(path, serde_json::to_string(&table).expect("serializable"));
    }
    Ok(pp)
}

fn cmd_solve(args: SolveArgs) -> Result<Value, Failure> {
    let (inst, digest) = load(&args.file)?;
    if args.min_payments {
        let mut rows = Vec::new();
        for i in 0..inst.n() {
            for a in 0..inst.ell() {
                let entry =
                    min_payment(&inst, i, a).map_err(|e| Failure::numerical(e.to_string()))?;
                rows.push(match entry {
                    Inducibility::Inducible(sol) => json!({
                        "agent": i,
                        "action": a,
                        "inducible": true,
                        "min_expected_payment": sol.min_expected_payment,
                        "payment_row": sol.payment_row,
                    }),
                    Inducibility::NotInducible => json!({
                        "agent": i,
                        "action": a,
                        "inducible": false,
                    }),
                });
            }
        }
        return Ok(json!({
            "command": "solve",
            "digest": digest,
            "method": "min-payments",
            "table": rows,
        }));
    }

    let (method, contract, value, extra) = match args.method {
        MethodArg::Brute => {
            let pp = cached_partition_problem(&inst, &digest)?;
            let eval = RewardEvaluator::new(&inst, RewardMode::default());
            let res = brute_force_optimal(&inst, &pp, &eval, DEFAULT_BASE_CAP)
                .map_err(|e| Failure::numerical(e.to_string()))?;
            (
                "brute",
                res.contract,
                res.value,
                json!({ "profile": res.profile }),
            )
        }
        MethodArg::IrFosd => {
            let opts = SolveOptions {
                trust_tags: args.trust_tags,
                seed: args.seed,
                ..SolveOptions::default()
            };
            match solve_ir_fosd(&inst, &opts) {
                Ok(res) => (
                    "ir-fosd",
                    res.contract,
                    res.value,
                    json!({ "profile": res.profile, "ring_violations": res.ring_violations }),
                ),
                Err(SolveError::FosdRefusal { agent, pair, comprehensive_set }) => {
                    return Err(Failure::refusal(format!(
                        "dominance fails for agent {agent}, actions {pair:?}, comprehensive set {comprehensive_set:?}"
                    )))
                }
                Err(SolveError::NotIrSupermodular) => {
                    return Err(Failure::refusal(
                        "reward failed the sampled increasing-return check",
                    ))
                }
                Err(e) => return Err(Failure::numerical(e.to_string())),
            }
        }
        MethodArg::DrApprox => {
            let res = solve_dr(&inst, args.eps, args.seed)
                .map_err(|e| Failure::numerical(e.to_string()))?;
            (
                "dr-approx",
                res.contract,
                res.value,
                json!({ "profile": res.profile, "eps": args.eps }),
            )
        }
    };
    let artifact = contract.to_json();
    let artifact_path = write_artifact(&args.out, &artifact)?;
    // The reported value must be recomputable from the artifact.
    let recomputed = principal_utility(&inst, &contract, RewardMode::default())
        .map_err(|e| Failure::numerical(e.to_string()))?;
    Ok(json!({
        "command": "solve",
        "digest": digest,
        "method": method,
        "seed": args.seed,
        "value": value,
        "recomputed_utility": recomputed,
        "artifact_path": artifact_path,
        "contract": artifact,
        "detail": extra,
        "tolerances": { "value_recompute": 1e-6 },
    }))
}

// ---------------------------------------------------------------------------
// bayes-solve
// ---------------------------------------------------------------------------

fn load_bayesian(path: &Path) -> Result<(BayesianInstance, String), Failure> {
    let text = read_file(path)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("malformed JSON: {e}")))?;
    let bi = bayesian_from_json(&value).map_err(Failure::validation)?;
    bi.validate()
        .map_err(|e| Failure::validation(e.to_string()))?;
    let digest = hex_digest(
        serde_json::to_string(&bayesian_to_json(&bi))
            .expect("serializable")
            .as_bytes(),
    );
    Ok((bi, digest))
}

fn cmd_bayes_solve(args: BayesSolveArgs) -> Result<Value, Failure> {
    let (bi, digest) = load_bayesian(&args.file)?;
    let kind = match args.oracle {
        OracleArg::Ir => OracleKind::IrFosd,
        OracleArg::Dr => OracleKind::DrApprox,
    };
    let res = bayes_solve(&bi, &BayesSolveOptions::new(args.rho, kind, args.seed)).map_err(
        |e| match e {
            pma_core::bayes::BayesError::FosdRefusal { agent, theta } => Failure::refusal(format!(
                "typed sub-instance (agent {agent}, type {theta}) fails dominance"
            )),
            pma_core::bayes::BayesError::Validation(v) => Failure::validation(v.to_string()),
            other => Failure::numerical(other.to_string()),
        },
    )?;
    let dsic = check_dsic(&bi, &res.menu, 1e-5);
    let artifact = menu_to_json(&bi, &res.menu);
    let artifact_path = write_artifact(&args.out, &artifact)?;
    Ok(json!({
        "command": "bayes-solve",
        "digest": digest,
        "method": match kind { OracleKind::IrFosd => "ir", OracleKind::DrApprox => "dr" },
        "rho": args.rho,
        "seed": args.seed,
        "value": res.value,
        "artifact_path": artifact_path,
        "menu": artifact,
        "dsic": {
            "pass": dsic.pass,
            "tol": dsic.tol,
            "worst_margin": dsic.worst,
        },
        "diagnostics": {
            "eta_star": res.diagnostics.eta_star,
            "restricted_lp_value": res.diagnostics.lp8_value,
            "discovered_profiles": res.diagnostics.discovered_profiles,
            "regularized": res.diagnostics.regularized,
        },
    }))
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn family_choice(f: FamilyArg) -> FamilyChoice {
    match f {
        FamilyArg::Linear => FamilyChoice::Linear,
        FamilyArg::BudgetAdditive => FamilyChoice::BudgetAdditive,
        FamilyArg::CoverageMax => FamilyChoice::CoverageMax,
        FamilyArg::ExpSum => FamilyChoice::ExpSum,
    }
}

fn cmd_gen(cmd: GenCommand) -> Result<Value, Failure> {
    match cmd {
        GenCommand::Random(args) => {
            let params = GenParams {
                n: args.n,
                ell: args.ell,
                m: args.m,
                q: args.q,
                family: family_choice(args.family),
                fosd: args.fosd,
                seed: args.seed,
            };
            let (artifact, digest) = match args.types {
                None => {
                    let inst = gen_random(&params);
                    let digest = instance_digest(&inst);
                    (instance_to_json(&inst), digest)
                }
                Some(t) => {
                    let bi = gen_random_bayesian(&BayesGenParams {
                        base: params,
                        num_types: t,
                        support_size: args.support,
                    });
                    let doc = bayesian_to_json(&bi);
                    let digest = hex_digest(
                        serde_json::to_string(&doc)
                            .expect("serializable")
                            .as_bytes(),
                    );
                    (doc, digest)
                }
            };
            let path = write_artifact(&args.out, &artifact)?;
            Ok(json!({
                "command": "gen",
                "kind": "random",
                "seed": args.seed,
                "digest": digest,
                "artifact_path": path,
                "instance": if path.is_none() { Some(artifact) } else { None },
            }))
        }
        GenCommand::LabelCover(args) => {
            let text = read_file(&args.graph)?;
            let input = parse_label_cover(&text).map_err(Failure::usage)?;
            let inst = gen_label_cover(&input, args.smoothing)
                .map_err(|e| Failure::validation(e.to_string()))?;
            let doc = instance_to_json(&inst);
            let digest = instance_digest(&inst);
            let path = write_artifact(&args.out, &doc)?;
            Ok(json!({
                "command": "gen",
                "kind": "label-cover",
                "digest": digest,
                "artifact_path": path,
                "instance": if path.is_none() { Some(doc) } else { None },
            }))
        }
        GenCommand::IndepSet(args) => {
            let text = read_file(&args.graph)?;
            let graph = parse_graph(&text).map_err(Failure::usage)?;
            let inst =
                gen_independent_set(&graph).map_err(|e| Failure::validation(e.to_string()))?;
            let doc = instance_to_json(&inst);
            let digest = instance_digest(&inst);
            let path = write_artifact(&args.out, &doc)?;
            Ok(json!({
                "command": "gen",
                "kind": "indep-set",
                "digest": digest,
                "artifact_path": path,
                "instance": if path.is_none() { Some(doc) } else { None },
            }))
        }
    }
}

fn parse_label_cover(text: &str) -> Result<LabelCoverInput, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<usize> = lines
        .next()
        .ok_or("empty graph file")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad header token '{t}'")))
        .collect::<Result<_, _>>()?;
    if header.len() != 3 {
        return Err("header must be 'left right labels'".into());
    }
    let (left, right, labels) = (header[0], header[1], header[2]);
    let mut edges = Vec::new();
    let mut constraints = Vec::new();
    for line in lines {
        let toks: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("bad token '{t}'")))
            .collect::<Result<_, _>>()?;
        if toks.len() != 2 + labels {
            return Err(format!(
                "edge line needs 'u v' plus {labels} constraint targets"
            ));
        }
        edges.push((toks[0], toks[1]));
        constraints.push(toks[2..].to_vec());
    }
    Ok(LabelCoverInput {
        left,
        right,
        edges,
        labels,
        constraints,
    })
}

fn parse_graph(text: &str) -> Result<Graph, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let vertices: usize = lines
        .next()
        .ok_or("empty graph file")?
        .trim()
        .parse()
        .map_err(|_| "first line must be the vertex count".to_string())?;
    let mut edges = Vec::new();
    for line in lines {
        let toks: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| format!("bad token '{t}'")))
            .collect::<Result<_, _>>()?;
        if toks.len() != 2 {
            return Err("edge lines must be 'u v'".into());
        }
        edges.push((toks[0], toks[1]));
    }
    Ok(Graph { vertices, edges })
}

// ---------------------------------------------------------------------------
// oracle lp
// ---------------------------------------------------------------------------

fn cmd_oracle_lp(file: &Path) -> Result<Value, Failure> {
    let text = read_file(file)?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::validation(format!("malformed JSON: {e}")))?;
    let lp = lp_from_json(&value).map_err(Failure::validation)?;
    let outcome = solve_lp(&lp).map_err(|e| Failure::numerical(e.to_string()))?;
    let detail = match outcome {
        LpOutcome::Optimal {
            value,
            point,
            duals,
        } => json!({
            "status": "optimal", "value": value, "point": point, "duals": duals,
        }),
        LpOutcome::Infeasible { farkas } => json!({
            "status": "infeasible",
            "farkas": farkas,
            "certificate_valid": lp::farkas_is_valid(&lp, &farkas),
        }),
        LpOutcome::Unbounded { ray } => json!({ "status": "unbounded", "ray": ray }),
    };
    Ok(json!({ "command": "oracle-lp", "result": detail }))
}

fn lp_from_json(value: &Value) -> Result<LinearProgram, String> {
    let sense = match value.get("sense").and_then(|v| v.as_str()) {
        Some("min") => Sense::Min,
        Some("max") => Sense::Max,
        other => return Err(format!("sense must be 'min' or 'max', got {other:?}")),
    };
    let objective: Vec<f64> = value
        .get("objective")
        .and_then(|v| v.as_array())
        .ok_or("missing objective array")?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| "objective entries must be numbers".to_string())
        })
        .collect::<Result<_, _>>()?;
    let n = objective.len();
    let rows = value
        .get("rows")
        .and_then(|v| v.as_array())
        .ok_or("missing rows array")?
        .iter()
        .map(|r| -> Result<Row, String> {
            let coeffs: Vec<f64> = r
                .get("coeffs")
                .and_then(|v| v.as_array())
                .ok_or("row missing coeffs")?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| "coeffs must be numbers".to_string())
                })
                .collect::<Result<_, _>>()?;
            let rel = match r.get("rel").and_then(|v| v.as_str()) {
                Some("<=") => Relation::Le,
                Some("=") | Some("==") => Relation::Eq,
                Some(">=") => Relation::Ge,
                other => return Err(format!("rel must be <=, =, >=, got {other:?}")),
            };
            let rhs = r
                .get("rhs")
                .and_then(|v| v.as_f64())
                .ok_or("row missing numeric rhs")?;
            Ok(Row { coeffs, rel, rhs })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bound_vec = |key: &str, default: f64| -> Result<Vec<f64>, String> {
        match value.get(key) {
            None => Ok(vec![default; n]),
            Some(v) => v
                .as_array()
                .ok_or_else(|| format!("{key} must be an array"))?
                .iter()
                .map(|x| {
                    if x.is_null() {
                        Ok(if key == "lower" {
                            f64::NEG_INFINITY
                        } else {
                            f64::INFINITY
                        })
                    } else {
                        x.as_f64()
                            .ok_or_else(|| format!("{key} entries must be numbers"))
                    }
                })
                .collect(),
        }
    };
    Ok(LinearProgram {
        sense,
        objective,
        rows,
        lower: bound_vec("lower", 0.0)?,
        upper: bound_vec("upper", f64::INFINITY)?,
    })
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

type BenchRow = (String, u64, f64, f64, f64);

fn bench_one(seed: u64, eps: f64) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    // Exact solver against brute force on a dominance instance.
    let ir_inst = gen_random(&GenParams {
        n: 1 + (seed % 3) as usize,
        ell: 2 + (seed % 2) as usize,
        m: 2 + (seed % 2) as usize,
        q: 1,
        family: FamilyChoice::ExpSum,
        fosd: true,
        seed,
    });
    let pp = build_partition_problem(&ir_inst).expect("payments");
    let eval = RewardEvaluator::new(&ir_inst, RewardMode::default());
    let brute = brute_force_optimal(&ir_inst, &pp, &eval, DEFAULT_BASE_CAP).expect("brute");
    rows.push(("brute".to_string(), seed, brute.value, brute.value, 0.0));
    if let Ok(res) = solve_ir_fosd(
        &ir_inst,
        &SolveOptions {
            seed,
            ..Default::default()
        },
    ) {
        rows.push((
            "ir-fosd".to_string(),
            seed,
            res.value,
            brute.value,
            res.value - brute.value,
        ));
    }
    // Approximate solver against its guarantee floor.
    let dr_inst = gen_random(&GenParams {
        n: 2,
        ell: 2 + (seed % 2) as usize,
        m: 2,
        q: 1,
        family: FamilyChoice::BudgetAdditive,
        fosd: false,
        seed: seed ^ 0x5eed,
    });
    let pp = build_partition_problem(&dr_inst).expect("payments");
    let eval = RewardEvaluator::new(&dr_inst, RewardMode::default());
    let brute = brute_force_optimal(&dr_inst, &pp, &eval, DEFAULT_BASE_CAP).expect("brute");
    let r_star = eval.eval(&brute.profile);
    let p_star = r_star - brute.value;
    let floor = (1.0 - (-1.0f64).exp()) * r_star - p_star - eps;
    if let Ok(res) = solve_dr(&dr_inst, eps, seed) {
        rows.push((
            "dr-approx".to_string(),
            seed,
            res.value,
            floor,
            res.value - floor,
        ));
    }
    rows
}

fn cmd_bench(args: BenchArgs) -> Result<Value, Failure> {
    let jobs = args.jobs.max(1);
    let seeds: Vec<u64> = (0..args.instances)
        .map(|k| args.seed.wrapping_add(k))
        .collect();
    let eps = args.eps;
    let mut all_rows: Vec<BenchRow> = Vec::new();
    if jobs == 1 {
        for &s in &seeds {
            all_rows.extend(bench_one(s, eps));
        }
    } else {
        let chunk_size = seeds.len().div_ceil(jobs);
        let chunks: Vec<Vec<u64>> = seeds
            .chunks(chunk_size.max(1))
            .map(|c| c.to_vec())
            .collect();
        let results: Vec<Vec<BenchRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        let mut out = Vec::new();
                        for s in chunk {
                            out.extend(bench_one(s, eps));
                        }
                        out
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("bench worker"))
                .collect()
        });
        for r in results {
            all_rows.extend(r);
        }
    }
    all_rows.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));
    // Tolerate a closed pipe (e.g. piping into `head`).
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = writeln!(out, "method,seed,value,bound,margin");
    for (method, seed, value, bound, margin) in &all_rows {
        if writeln!(out, "{method},{seed},{value},{bound},{margin}").is_err() {
            break;
        }
    }
    Ok(json!({
        "command": "bench",
        "rows": all_rows.len(),
        "jobs": jobs,
        "seed": args.seed,
    }))
}

// ---------------------------------------------------------------------------
// Bayesian instance JSON (version "pma-bayes-1")
// ---------------------------------------------------------------------------

fn bayesian_to_json(bi: &BayesianInstance) -> Value {
    json!({
        "version": "pma-bayes-1",
        "q": bi.outcome_space.q,
        "outcomes": bi.outcome_space.outcomes,
        "null_outcome": bi.outcome_space.null_index,
        "types": bi.num_types,
        "agents": bi.agents.iter().map(|types| json!({
            "per_type": types.iter().map(|spec| json!({
                "costs": spec.costs,
                "dists": spec.dists,
            })).collect::<Vec<_>>(),
            "null_action": types[0].null_action,
        })).collect::<Vec<_>>(),
        "support": bi.support.iter().map(|(tuple, prob)| json!({
            "types": tuple,
            "prob": prob,
        })).collect::<Vec<_>>(),
        "reward": bi.reward.to_json(),
    })
}

fn bayesian_from_json(value: &Value) -> Result<BayesianInstance, String> {
    if let Some(v) = value.get("version") {
        if v.as_str() != Some("pma-bayes-1") {
            return Err(format!("unsupported version {v}, expected \"pma-bayes-1\""));
        }
    }
    let num_types = value
        .get("types")
        .and_then(|v| v.as_u64())
        .ok_or("missing integer field 'types'")? as usize;
    let agents_json = value
        .get("agents")
        .and_then(|v| v.as_array())
        .ok_or("missing array field 'agents'")?;
    // Reuse the non-Bayesian parser by wrapping each (agent, type) slice in
    // a one-agent document sharing the outcome space and reward.
    let shared_fields = |agent: Value| -> Value {
        json!({
            "q": value.get("q").cloned().unwrap_or(json!(1)),
            "outcomes": value.get("outcomes").cloned().unwrap_or(json!([])),
            "null_outcome": value.get("null_outcome").cloned().unwrap_or(Value::Null),
            "agents": [agent],
            "reward": value.get("reward").cloned()
                .unwrap_or(json!({"family": "linear", "params": {"weights": [0]}})),
        })
    };
    let mut agents = Vec::new();
    let mut shared: Option<Instance> = None;
    for (i, ag) in agents_json.iter().enumerate() {
        let null_action = ag
            .get("null_action")
            .and_then(|v| v.as_u64())
            .ok_or(format!("agent {i}: missing null_action"))? as usize;
        let per_type = ag
            .get("per_type")
            .and_then(|v| v.as_array())
            .ok_or(format!("agent {i}: missing per_type"))?;
        let mut specs = Vec::new();
        for (theta, t) in per_type.iter().enumerate() {
            let doc = shared_fields(json!({
                "costs": t.get("costs").cloned().unwrap_or(json!([])),
                "dists": t.get("dists").cloned().unwrap_or(json!([])),
                "null_action": null_action,
            }));
            let inst =
                instance_from_json(&doc).map_err(|e| format!("agent {i} type {theta}: {e}"))?;
            specs.push(inst.agents[0].clone());
            if shared.is_none() {
                shared = Some(inst);
            }
        }
        agents.push(specs);
    }
    let shared = shared.ok_or("instance needs at least one agent and type")?;
    let support = value
        .get("support")
        .and_then(|v| v.as_array())
        .ok_or("missing array field 'support'")?
        .iter()
        .map(|entry| -> Result<(Vec<usize>, f64), String> {
            let tuple = entry
                .get("types")
                .and_then(|v| v.as_array())
                .ok_or("support entries need a 'types' array")?
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|u| u as usize)
                        .ok_or("type indices must be integers".to_string())
                })
                .collect::<Result<Vec<_>, _>>()?;
            let prob = entry
                .get("prob")
                .ok_or("support entries need 'prob'")
                .and_then(|p| {
                    pma_core::rewards::parse_json_number(p).map_err(|_| "bad probability")
                })?;
            Ok((tuple, prob))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BayesianInstance {
        outcome_space: shared.outcome_space,
        num_types,
        agents,
        support,
        reward: shared.reward,
    })
}

// ---------------------------------------------------------------------------
// Human output
// ---------------------------------------------------------------------------

fn print_human(report: &Value, wall_ms: u128) {
    use std::io::Write;
    // Closed pipes (e.g. `| head`) end the printout quietly.
    fn walk(out: &mut dyn Write, v: &Value, indent: usize) -> std::io::Result<()> {
        match v {
            Value::Object(map) => {
                for (k, val) in map {
                    match val {
                        Value::Object(_) | Value::Array(_) => {
                            writeln!(out, "{:indent$}{k}:", "")?;
                            walk(out, val, indent + 2)?;
                        }
                        other => writeln!(out, "{:indent$}{k}: {other}", "")?,
                    }
                }
            }
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    if matches!(item, Value::Object(_) | Value::Array(_)) {
                        writeln!(out, "{:indent$}[{i}]:", "")?;
                        walk(out, item, indent + 2)?;
                    } else {
                        writeln!(out, "{:indent$}[{i}] {item}", "")?;
                    }
                }
            }
            other => writeln!(out, "{:indent$}{other}", "")?,
        }
        Ok(())
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let _ = walk(&mut out, report, 0).and_then(|()| writeln!(out, "wall_ms: {wall_ms}"));
}
