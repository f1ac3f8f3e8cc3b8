//! Command-line front end: load instance files, run the bound solvers and
//! the block simulator, and write machine-readable artifacts.
//!
//! Human-readable summaries go to standard output; JSON and CSV artifacts
//! are written only to the path given by `--out`. Exit codes: 0 success,
//! 2 validation failure, 3 parse failure, 4 budget refusal, 5 no
//! equilibrium found, 6 internal (I/O and similar).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use graywyner_core::equilibria::{equilibrium_pool, worst_equilibrium_cost, PoolConfig};
use graywyner_core::game::build_single_letter_game;
use graywyner_core::model::{InstanceFile, Policy, PolicyDoc, ProblemInstance, RateVariant};
use graywyner_core::optimizer::{
    separable_gap_check, solve_gamma_hat, solve_gamma_star, SolveConfig, SolveResult,
};
use graywyner_core::simulator::{
    empirical_belief_divergence, ensemble_block_report, estimate_error_events,
    explicit_codebook_fits, generate_codebook, stagewise_block_game, BeliefReport, ErrorReport,
    SimMode, TypicalityConfig, CODEBOOK_SYMBOL_BUDGET,
};
use graywyner_core::Error;

#[derive(Parser)]
#[command(
    name = "graywyner",
    version,
    about = "Layered signalling against strategic decoders: bounds and block simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file and list every violated rule.
    Validate(ValidateArgs),
    /// Search for the cheapest committed policy at the instance rates.
    Solve(SolveArgs),
    /// Run the factorized and joint searches and report the gap.
    Bounds(BoundsArgs),
    /// Simulate the block scheme at one blocklength.
    Simulate(SimulateArgs),
    /// Simulate across blocklengths and write one CSV row per n.
    Sweep(SweepArgs),
    /// Test whether the encoder cost splits into per-decoder parts.
    CheckSeparable(CheckSeparableArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Factorized policies, sum-rate constraints.
    Q0,
    /// Joint policies, sum-rate constraints.
    Qhat0,
    /// Factorized full-support policies, strict split-rate constraints.
    Qtilde0,
}

impl From<VariantArg> for RateVariant {
    fn from(v: VariantArg) -> RateVariant {
        match v {
            VariantArg::Q0 => RateVariant::Q0,
            VariantArg::Qhat0 => RateVariant::Qhat0,
            VariantArg::Qtilde0 => RateVariant::Qtilde0,
        }
    }
}

#[derive(Args)]
struct SolverOpts {
    /// Seed for every stochastic stage of the search.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the instance rates as R0,R1,R2 (bits per symbol).
    #[arg(long, value_parser = parse_rates)]
    rates: Option<[f64; 3]>,
    /// Search restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Pure-profile budget for exhaustive equilibrium enumeration.
    #[arg(long)]
    eq_budget: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Where to write the result document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Rate-membership variant the solver enforces.
    #[arg(long, value_enum, default_value_t = VariantArg::Q0)]
    variant: VariantArg,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct BoundsArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Where to write the bounds document.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct SimOpts {
    /// Monte-Carlo trials per blocklength.
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Policy JSON file; when absent the policy is solved for first.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Typicality radius as a fraction of n; defaults to 0.1 times the
    /// residual source entropy given the signals.
    #[arg(long)]
    delta: Option<f64>,
    /// Rate margin in bits used by derived defaults.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Blocklength.
    #[arg(long)]
    n: usize,
    /// Where to write the simulation document.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated blocklengths, e.g. 50,100,200.
    #[arg(long, value_parser = parse_n_list)]
    n_list: NList,
    /// Where to write the CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    sim: SimOpts,
    #[command(flatten)]
    solver: SolverOpts,
}

#[derive(Args)]
struct CheckSeparableArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: PathBuf,
    /// Where to write the report document.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone)]
struct NList(Vec<usize>);

fn parse_rates(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected R0,R1,R2, got {} values", parts.len()));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad rate {part:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_n_list(s: &str) -> Result<NList, String> {
    let values = s
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| format!("bad blocklength {part:?}: {e}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("blocklength list is empty".into());
    }
    Ok(NList(values))
}

enum Failure {
    Core(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        Failure::Core(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e {
                Error::Parse(_) => 3,
                Error::BudgetExceeded { .. } => 4,
                Error::NoEquilibrium(_) => 5,
                _ => 2,
            },
            Failure::Io(_) => 6,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Core(e) => e.to_string(),
            Failure::Io(m) => m.clone(),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write_artifact(path: &Path, content: &str) -> Result<(), Failure> {
    fs::write(path, content).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serialization");
    text.push('\n');
    text
}

fn load_instance(path: &Path, rates: Option<[f64; 3]>) -> Result<ProblemInstance, Failure> {
    let text = read_to_string(path)?;
    let mut file = InstanceFile::from_json(&text)?;
    if let Some(r) = rates {
        file.rates = r.to_vec();
    }
    Ok(file.build()?)
}

fn load_policy(path: &Path, instance: &ProblemInstance) -> Result<Policy, Failure> {
    let text = read_to_string(path)?;
    let doc = PolicyDoc::from_json(&text)?;
    Ok(doc.into_policy(instance.source_alphabet())?)
}

fn solve_config(opts: &SolverOpts, variant: RateVariant) -> SolveConfig {
    let mut cfg = SolveConfig {
        variant,
        seed: opts.seed,
        ..SolveConfig::default()
    };
    if let Some(r) = opts.restarts {
        cfg.restarts = r;
    }
    if let Some(b) = opts.eq_budget {
        cfg.pool.eq_budget = b;
    }
    cfg
}

fn kv(label: &str, value: impl std::fmt::Display) {
    println!("{label:<16} {value}");
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let text = read_to_string(&args.instance)?;
    let file = InstanceFile::from_json(&text)?;
    let violations = file.validate();
    if violations.is_empty() {
        println!("{}: ok", args.instance.display());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Failure::Core(Error::InvalidInstance(format!(
        "{} rule(s) violated",
        violations.len()
    ))))
}

fn run_solver(instance: &ProblemInstance, cfg: &SolveConfig) -> Result<SolveResult, Failure> {
    let result = match cfg.variant {
        RateVariant::Qhat0 => solve_gamma_hat(instance, cfg)?,
        _ => solve_gamma_star(instance, cfg)?,
    };
    Ok(result)
}

fn print_solve_summary(result: &SolveResult) {
    kv("value", format!("{:.9}", result.value));
    kv("variant", result.membership.variant);
    kv("feasible", result.membership.feasible);
    kv(
        "slacks",
        format!(
            "[{:.6}, {:.6}, {:.6}]",
            result.membership.slacks[0], result.membership.slacks[1], result.membership.slacks[2]
        ),
    );
    kv("restarts", result.restarts_used);
    kv("certified", result.certified_value);
    for caveat in &result.caveats {
        println!("note: {caveat}");
    }
}

fn cmd_solve(args: &SolveArgs) -> Result<(), Failure> {
    let instance = load_instance(&args.instance, args.solver.rates)?;
    let cfg = solve_config(&args.solver, args.variant.into());
    let result = run_solver(&instance, &cfg)?;
    print_solve_summary(&result);
    if let Some(out) = &args.out {
        write_artifact(out, &to_pretty_json(&result.to_artifact()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundsDoc {
    gamma_star: f64,
    gamma_hat: f64,
    gap: f64,
    star_certified: bool,
    hat_certified: bool,
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let instance = load_instance(&args.instance, args.solver.rates)?;
    let star = run_solver(&instance, &solve_config(&args.solver, RateVariant::Q0))?;
    let hat = run_solver(&instance, &solve_config(&args.solver, RateVariant::Qhat0))?;
    let doc = BoundsDoc {
        gamma_star: star.value,
        gamma_hat: hat.value,
        gap: star.value - hat.value,
        star_certified: star.certified_value,
        hat_certified: hat.certified_value,
    };
    kv("gamma_star", format!("{:.9}", doc.gamma_star));
    kv("gamma_hat", format!("{:.9}", doc.gamma_hat));
    kv("gap", format!("{:.9}", doc.gap));
    if let Some(out) = &args.out {
        write_artifact(out, &to_pretty_json(&doc))?;
    }
    Ok(())
}

/// One blocklength's worth of simulation results; the sweep CSV is one of
/// these per row.
#[derive(Serialize)]
struct SimRow {
    n: usize,
    trial_count: u64,
    errors: ErrorReport,
    beliefs: BeliefReport,
    block_cost: f64,
    block_mode: String,
    gamma_star_ref: f64,
}

impl SimRow {
    const CSV_HEADER: &'static str = "n,trial_count,p_f0,p_f1,p_f2,avg_state_kl,avg_type_kl_1,avg_type_kl_2,block_cost,gamma_star_ref";

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.n,
            self.trial_count,
            self.errors.p_f0,
            self.errors.p_f1_given_not_f0,
            self.errors.p_f2_given_not_f0,
            self.beliefs.avg_state_kl,
            self.beliefs.avg_type_kl_1,
            self.beliefs.avg_type_kl_2,
            self.block_cost,
            self.gamma_star_ref,
        )
    }
}

struct SimContext {
    instance: ProblemInstance,
    policy: Policy,
    config: TypicalityConfig,
    trials: u64,
    seed: u64,
    gamma_star_ref: f64,
}

/// Resolve the policy (given file or fresh solve), reference value, and
/// typicality parameters shared by simulate and sweep.
fn sim_context(
    instance_path: &Path,
    sim: &SimOpts,
    solver: &SolverOpts,
) -> Result<SimContext, Failure> {
    let instance = load_instance(instance_path, solver.rates)?;
    let (policy, gamma_star_ref) = match &sim.policy {
        Some(path) => {
            let policy = load_policy(path, &instance)?;
            let game = build_single_letter_game(&instance, &policy)?;
            let (set, _) = equilibrium_pool(&game, &PoolConfig::default());
            let (value, _) = worst_equilibrium_cost(&game, &set)?;
            (policy, value)
        }
        None => {
            let cfg = solve_config(solver, RateVariant::Q0);
            let result = run_solver(&instance, &cfg)?;
            (result.policy, result.value)
        }
    };
    let defaults = TypicalityConfig::defaults_for(&instance, &policy)?;
    let config = TypicalityConfig::new(
        sim.delta.unwrap_or_else(|| defaults.delta()),
        sim.eta.unwrap_or_else(|| defaults.eta()),
    )?;
    Ok(SimContext {
        instance,
        policy,
        config,
        trials: sim.trials,
        seed: solver.seed,
        gamma_star_ref,
    })
}

fn simulate_one(ctx: &SimContext, n: usize) -> Result<SimRow, Failure> {
    let SimContext {
        instance,
        policy,
        config,
        trials,
        seed,
        gamma_star_ref,
    } = ctx;
    let pool = PoolConfig::default();
    let (errors, beliefs, block_cost, block_mode) =
        if explicit_codebook_fits(n, &instance.rates) {
            let cb = generate_codebook(instance, policy, config, n, *seed)?;
            let errors =
                estimate_error_events(instance, policy, config, n, *trials, *seed, SimMode::Explicit)?;
            let beliefs = empirical_belief_divergence(&cb, instance, config, *trials, *seed)?;
            let stage = stagewise_block_game(&cb, instance, config, *trials, *seed, &pool)?;
            (errors, beliefs, stage.block_cost, stage.mode)
        } else {
            let report = ensemble_block_report(instance, policy, config, n, *trials, *seed, &pool)
                .map_err(|e| match e {
                    Error::UnsupportedType(msg) => Error::BudgetExceeded {
                        required: format!("an explicit codebook beyond the symbol budget ({msg})"),
                        budget: format!("{CODEBOOK_SYMBOL_BUDGET} codeword symbols"),
                    },
                    other => other,
                })?;
            (report.errors, report.beliefs, report.block_cost, "ensemble".to_string())
        };
    Ok(SimRow {
        n,
        trial_count: *trials,
        errors,
        beliefs,
        block_cost,
        block_mode,
        gamma_star_ref: *gamma_star_ref,
    })
}

fn print_sim_summary(row: &SimRow) {
    kv("n", row.n);
    kv("trials", row.trial_count);
    kv("mode", format!("{} / {}", row.errors.mode, row.block_mode));
    kv(
        "p_f0",
        format!("{:.4} ±{:.4}", row.errors.p_f0, row.errors.p_f0_half_width),
    );
    kv(
        "p_f1 | no f0",
        format!(
            "{:.4} ±{:.4}",
            row.errors.p_f1_given_not_f0, row.errors.p_f1_half_width
        ),
    );
    kv(
        "p_f2 | no f0",
        format!(
            "{:.4} ±{:.4}",
            row.errors.p_f2_given_not_f0, row.errors.p_f2_half_width
        ),
    );
    kv("avg_state_kl", format!("{:.6}", row.beliefs.avg_state_kl));
    kv("avg_type_kl_1", format!("{:.6}", row.beliefs.avg_type_kl_1));
    kv("avg_type_kl_2", format!("{:.6}", row.beliefs.avg_type_kl_2));
    kv("block_cost", format!("{:.6}", row.block_cost));
    kv("gamma_star_ref", format!("{:.6}", row.gamma_star_ref));
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let ctx = sim_context(&args.instance, &args.sim, &args.solver)?;
    let row = simulate_one(&ctx, args.n)?;
    print_sim_summary(&row);
    if let Some(out) = &args.out {
        write_artifact(out, &to_pretty_json(&row))?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let ctx = sim_context(&args.instance, &args.sim, &args.solver)?;
    let mut csv = String::from(SimRow::CSV_HEADER);
    csv.push('\n');
    for &n in &args.n_list.0 {
        let row = simulate_one(&ctx, n)?;
        println!(
            "n={:<5} p_f0={:.4} state_kl={:.6} block_cost={:.6}",
            row.n, row.errors.p_f0, row.beliefs.avg_state_kl, row.block_cost
        );
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    write_artifact(&args.out, &csv)
}

fn cmd_check_separable(args: &CheckSeparableArgs) -> Result<(), Failure> {
    let instance = load_instance(&args.instance, None)?;
    let report = separable_gap_check(&instance, 1e-9);
    kv("separable", report.separable);
    kv("residual", format!("{:.3e}", report.residual));
    if let Some(out) = &args.out {
        write_artifact(out, &to_pretty_json(&report))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::CheckSeparable(args) => cmd_check_separable(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message());
            ExitCode::from(failure.code())
        }
    }
}
