//! `privexp`: command-line surface for the exponent solvers, the exact
//! adversary oracles, policy simulation, and the smart-meter scenarios.
//!
//! Output is machine-readable (CSV or `privexp-v1` JSON) and byte-reproducible
//! for a fixed command line and seed. Exit codes: 0 success, 2 input error,
//! 3 infeasible constraints, 4 resource cap exceeded, 5 non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use privexp_core::io::{
    self, fmt_sig, meter_trace_csv, policy_trace_csv, sweep_csv, trend_csv, ExponentResultDoc,
    ModelDoc, TestSpecDoc,
};
use privexp_core::{
    bayes_exact, build_energy_constraint, exponent_trend, marginal, memoryless_policy_apply,
    np_exact, np_threshold_test, sample_iid, smartmeter, solve_nu_opts, solve_phi_opts,
    sweep_exponent, DemandModel, Error, ExponentKind, ExponentResult, Hypothesis, SolveOptions,
    SweepOptions, TestMode, TwoPhaseConfig, TwoPhaseRunner,
};

/// Asymptotic privacy guarantees against hypothesis-testing adversaries:
/// error-exponent programs over distortion-constrained policies, exact
/// finite-horizon adversary oracles, and policy simulation.
#[derive(Parser)]
#[command(name = "privexp", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one exponent program: the minimal KL divergence (phi) or minimal
    /// Chernoff information (nu) between the induced observation
    /// distributions over the distortion-constrained policy polytope.
    Exponent(ExponentArgs),
    /// Sweep an exponent program over a grid of budgets s, emitting the CSV
    /// behind privacy-vs-renewable-rate curves.
    Sweep(SweepArgs),
    /// Exact adversary oracles and Monte Carlo policy simulations.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Smart-meter scenarios: synthetic demand traces and privacy-preserving
    /// supply scheduling.
    #[command(subcommand)]
    Meter(MeterCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum WhichExponent {
    /// Minimal KL divergence between induced observation marginals.
    Phi,
    /// Minimal Chernoff information between induced observation marginals.
    Nu,
}

impl From<WhichExponent> for ExponentKind {
    fn from(w: WhichExponent) -> Self {
        match w {
            WhichExponent::Phi => ExponentKind::Phi,
            WhichExponent::Nu => ExponentKind::Nu,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum HypothesisArg {
    H0,
    H1,
}

impl From<HypothesisArg> for Hypothesis {
    fn from(h: HypothesisArg) -> Self {
        match h {
            HypothesisArg::H0 => Hypothesis::H0,
            HypothesisArg::H1 => Hypothesis::H1,
        }
    }
}

#[derive(Args)]
struct SolverOverrides {
    /// Duality-gap tolerance certifying convergence.
    #[arg(long, default_value_t = 1e-8)]
    gap_tol: f64,
    /// Iteration cap per solve.
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
}

impl SolverOverrides {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            gap_tol: self.gap_tol,
            max_iters: self.max_iters,
            ..SolveOptions::default()
        }
    }
}

#[derive(Args)]
struct ExponentArgs {
    /// Which exponent program to solve.
    #[arg(value_enum)]
    which: WhichExponent,
    /// Model JSON (privexp-v1): hypothesis pmf pair, priors, optional custom
    /// distortion block; without one the supply-side constraint is implied.
    #[arg(long)]
    model: PathBuf,
    /// Budget for both hypotheses.
    #[arg(long, conflicts_with_all = ["s_h0", "s_h1"])]
    s: Option<f64>,
    /// Budget under h0 (with --s-h1, for asymmetric budgets).
    #[arg(long, requires = "s_h1")]
    s_h0: Option<f64>,
    /// Budget under h1.
    #[arg(long, requires = "s_h0")]
    s_h1: Option<f64>,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also report the value converted to bits (display only; everything
    /// else stays in nats).
    #[arg(long)]
    bits: bool,
    /// Exit 0 even if the solver hit its iteration cap.
    #[arg(long)]
    allow_nonconverged: bool,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    which: WhichExponent,
    #[arg(long)]
    model: PathBuf,
    /// Budget grid: "start:stop:count" (inclusive) or a comma list.
    #[arg(long)]
    s_grid: String,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (PRIVEXP_THREADS also honored; > 1 disables warm
    /// starts, output order is unchanged).
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    solver: SolverOverrides,
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Exactly minimal type-II error of the randomized Neyman-Pearson test at
    /// a type-I bound epsilon.
    NpExact(OracleArgs),
    /// Deterministic log-likelihood-ratio threshold test at threshold
    /// D/n - delta'/n, with its exponential type-II bound.
    NpThreshold(NpThresholdArgs),
    /// Exactly minimal prior-weighted error of the Bayes likelihood-ratio
    /// test.
    BayesExact(OracleArgs),
    /// Exact error exponents -(1/n) log(error) over a horizon range,
    /// trending to the KL divergence (Neyman-Pearson) or Chernoff
    /// information (Bayes) of the observation marginals.
    Trend(TrendArgs),
    /// Monte Carlo audit of the two-phase hypothesis-unaware policy:
    /// distortion budget, learning errors, and the silent learning phase.
    Twophase(TwophaseArgs),
    /// Monte Carlo consistency of the memoryless optimizer policy: empirical
    /// supply marginals and distortion against the solver's.
    Montecarlo(MontecarloArgs),
}

#[derive(Args)]
struct OracleArgs {
    /// Test spec JSON (privexp-v1): horizon, mode, per-slot or joint pmfs.
    #[arg(long)]
    spec: PathBuf,
    /// Output JSON path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NpThresholdArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Threshold slack delta' > 0.
    #[arg(long)]
    delta_prime: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrendMode {
    Np,
    Bayes,
}

#[derive(Args)]
struct TrendArgs {
    /// Test spec JSON providing the per-slot observation pmfs.
    #[arg(long)]
    spec: PathBuf,
    /// Test family for the exponent trend.
    #[arg(long, value_enum)]
    mode: TrendMode,
    /// Horizon range "start:stop:step" (inclusive).
    #[arg(long)]
    n: String,
    /// Type-I bound for Neyman-Pearson mode (overrides the spec).
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    /// Privacy phase plays the minimal-KL optimizer.
    Np,
    /// Privacy phase plays the minimal-Chernoff-information optimizer.
    Bayes,
}

#[derive(Args)]
struct TwophaseArgs {
    #[arg(long)]
    model: PathBuf,
    /// Base per-slot distortion budget s.
    #[arg(long)]
    s: f64,
    /// Budget reduction delta for the h0 row of the phase-2 program.
    #[arg(long)]
    delta: f64,
    /// Budget reduction omega for the h1 row of the phase-2 program.
    #[arg(long)]
    omega: f64,
    /// Learning typical-set width (Bayes variant picks xi directly).
    #[arg(long, conflicts_with = "eps_prime")]
    xi: Option<f64>,
    /// Learning test level; xi = 1 - eps' (Neyman-Pearson variant).
    #[arg(long)]
    eps_prime: Option<f64>,
    #[arg(long, value_enum, default_value_t = VariantArg::Np)]
    variant: VariantArg,
    /// Horizon per trace.
    #[arg(long)]
    n: usize,
    /// Monte Carlo traces per hypothesis.
    #[arg(long, default_value_t = 10_000)]
    traces: usize,
    /// Seed; mandatory for reproducible Monte Carlo.
    #[arg(long)]
    seed: u64,
    /// Per-trace CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the first h0 trace slot by slot (slot,x,y,phase,distortion).
    #[arg(long)]
    dump_trace: Option<PathBuf>,
}

#[derive(Args)]
struct MontecarloArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    s: f64,
    #[arg(long, value_enum, default_value_t = WhichExponent::Phi)]
    variant: WhichExponent,
    /// Slots per trace.
    #[arg(long)]
    n: usize,
    /// Traces per hypothesis.
    #[arg(long, default_value_t = 100)]
    traces: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MeterCommand {
    /// Sample a synthetic i.i.d. demand trace from the model statistics.
    GenTrace(GenTraceArgs),
    /// Solve the exponent program at rate s and schedule supplies along a
    /// demand trace, auditing renewable usage.
    Apply(MeterApplyArgs),
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    hypothesis: HypothesisArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeterApplyArgs {
    #[arg(long)]
    model: PathBuf,
    /// Renewable generation rate in watts; 0 means supplies follow demands.
    #[arg(long)]
    s: f64,
    /// Demand trace CSV (slot,demand_w or a single column).
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = WhichExponent::Phi)]
    variant: WhichExponent,
    /// True hypothesis generating the trace.
    #[arg(long, value_enum)]
    hypothesis: HypothesisArg,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => 3,
        Error::SizeCapExceeded(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Exponent(args) => cmd_exponent(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Simulate(sim) => match sim {
            SimulateCommand::NpExact(args) => cmd_np_exact(args),
            SimulateCommand::NpThreshold(args) => cmd_np_threshold(args),
            SimulateCommand::BayesExact(args) => cmd_bayes_exact(args),
            SimulateCommand::Trend(args) => cmd_trend(args),
            SimulateCommand::Twophase(args) => cmd_twophase(args),
            SimulateCommand::Montecarlo(args) => cmd_montecarlo(args),
        },
        Command::Meter(m) => match m {
            MeterCommand::GenTrace(args) => cmd_gen_trace(args),
            MeterCommand::Apply(args) => cmd_meter_apply(args),
        },
    }
}

fn load_model(path: &PathBuf) -> Result<(DemandModel, ModelDoc), Error> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDoc = serde_json::from_str(&text)?;
    Ok((doc.to_demand_model()?, doc))
}

fn load_test_spec(path: &PathBuf) -> Result<TestSpecDoc, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

/// Budget grid "start:stop:count" (inclusive) or a comma list.
fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = |m: String| Error::InvalidParameter(m);
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("grid {text:?} is not start:stop:count")));
        }
        let start: f64 = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
        let stop: f64 = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
        let count: usize = parts[2].parse().map_err(|e| bad(format!("{e}")))?;
        if count < 2 || stop <= start {
            return Err(bad("grid needs stop > start and count >= 2".into()));
        }
        let step = (stop - start) / (count - 1) as f64;
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    } else {
        text.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| bad(format!("{e}"))))
            .collect()
    }
}

/// Horizon range "start:stop:step" (inclusive) or a comma list.
fn parse_n_range(text: &str) -> Result<Vec<usize>, Error> {
    let bad = |m: String| Error::InvalidParameter(m);
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad(format!("range {text:?} is not start:stop:step")));
        }
        let start: usize = parts[0].parse().map_err(|e| bad(format!("{e}")))?;
        let stop: usize = parts[1].parse().map_err(|e| bad(format!("{e}")))?;
        let step: usize = parts[2].parse().map_err(|e| bad(format!("{e}")))?;
        if step == 0 || stop < start || start == 0 {
            return Err(bad("range needs start >= 1, stop >= start, step >= 1".into()));
        }
        Ok((start..=stop).step_by(step).collect())
    } else {
        text.split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|e| bad(format!("{e}"))))
            .collect()
    }
}

fn threads_from(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("PRIVEXP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or(1)
}

fn to_json(value: &impl serde::Serialize) -> Result<String, Error> {
    Ok(format!("{}\n", serde_json::to_string_pretty(value)?))
}

fn cmd_exponent(args: ExponentArgs) -> Result<ExitCode, Error> {
    let (model, doc) = load_model(&args.model)?;
    let (s0, s1) = match (args.s, args.s_h0, args.s_h1) {
        (Some(s), None, None) => (s, s),
        (None, Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidParameter(
                "provide --s or both --s-h0 and --s-h1".into(),
            ))
        }
    };
    let distortion = match doc.to_distortion()? {
        Some(d) => d,
        None => build_energy_constraint(&model, s0.max(s1))?.distortion,
    };
    let cons = privexp_core::ConstraintSet::new(distortion, s0, s1)?;
    let opts = args.solver.options();
    let kind: ExponentKind = args.which.into();
    let result: ExponentResult = match kind {
        ExponentKind::Phi => solve_phi_opts(&model.source, &cons, &opts, None)?,
        ExponentKind::Nu => solve_nu_opts(&model.source, &cons, &opts)?,
    };
    let json = to_json(&ExponentResultDoc::new(&result, kind, args.bits))?;
    emit(&args.out, &json)?;
    if !result.converged && !args.allow_nonconverged {
        eprintln!(
            "solver did not certify convergence (gap {:.3e} after {} iterations)",
            result.duality_gap, result.iterations
        );
        return Ok(ExitCode::from(5));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> Result<ExitCode, Error> {
    let (model, doc) = load_model(&args.model)?;
    let grid = parse_grid(&args.s_grid)?;
    let distortion = match doc.to_distortion()? {
        Some(d) => d,
        None => build_energy_constraint(&model, grid.iter().cloned().fold(1.0, f64::max))?
            .distortion,
    };
    let opts = SweepOptions {
        solve: args.solver.options(),
        threads: threads_from(args.threads),
    };
    let table = sweep_exponent(&model.source, &distortion, &grid, args.which.into(), &opts)?;
    emit(&args.out, &sweep_csv(&table))?;
    if !table.audit.monotone || !table.audit.midpoint_convex {
        eprintln!(
            "audit: monotone={} (max violation {:.3e}), midpoint_convex={} (max violation {:.3e})",
            table.audit.monotone,
            table.audit.max_monotonicity_violation,
            table.audit.midpoint_convex,
            table.audit.max_convexity_violation
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn test_result_json(r: &privexp_core::TestResult) -> Result<String, Error> {
    let doc = serde_json::json!({
        "schema": io::SCHEMA_VERSION,
        "type1": r.type1,
        "type2": r.type2,
        "bayes_error": r.bayes_error,
        "threshold": r.threshold,
        "randomization": r.randomization,
        "region_summary": {
            "decide_h0": r.region_summary.decide_h0,
            "decide_h1": r.region_summary.decide_h1,
            "randomized": r.region_summary.randomized,
        },
    });
    to_json(&doc)
}

fn cmd_np_exact(args: OracleArgs) -> Result<ExitCode, Error> {
    let spec = load_test_spec(&args.spec)?.to_spec()?;
    let r = np_exact(&spec)?;
    emit(&args.out, &test_result_json(&r)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_np_threshold(args: NpThresholdArgs) -> Result<ExitCode, Error> {
    let spec = load_test_spec(&args.spec)?.to_spec()?;
    let r = np_threshold_test(&spec, args.delta_prime)?;
    emit(&args.out, &test_result_json(&r)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_bayes_exact(args: OracleArgs) -> Result<ExitCode, Error> {
    let doc = load_test_spec(&args.spec)?;
    let (pr0, pr1) = doc.priors();
    let spec = doc.to_spec()?;
    let r = bayes_exact(&spec, pr0, pr1)?;
    emit(&args.out, &test_result_json(&r)?)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_trend(args: TrendArgs) -> Result<ExitCode, Error> {
    let doc = load_test_spec(&args.spec)?;
    let (p0, p1) = match (&doc.p_y_h0, &doc.p_y_h1) {
        (Some(a), Some(b)) => {
            let alphabet = privexp_core::Alphabet::new(doc.y_alphabet.clone())?;
            (
                privexp_core::Pmf::new(alphabet.clone(), a.clone())?,
                privexp_core::Pmf::new(alphabet, b.clone())?,
            )
        }
        _ => {
            return Err(Error::InvalidParameter(
                "trend mode needs per-slot pmfs in the spec".into(),
            ))
        }
    };
    let n_values = parse_n_range(&args.n)?;
    let (mode, epsilon, priors) = match args.mode {
        TrendMode::Np => (
            TestMode::NeymanPearson,
            args.epsilon.or(doc.epsilon),
            None,
        ),
        TrendMode::Bayes => (TestMode::Bayes, None, Some(doc.priors())),
    };
    let rows = exponent_trend(&p0, &p1, &n_values, mode, epsilon, priors)?;
    emit(&args.out, &trend_csv(&rows))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_twophase(args: TwophaseArgs) -> Result<ExitCode, Error> {
    let (model, _) = load_model(&args.model)?;
    let cons = build_energy_constraint(&model, args.s)?;
    let cfg = match (args.variant, args.xi, args.eps_prime) {
        (VariantArg::Np, None, Some(eps)) => {
            TwoPhaseConfig::neyman_pearson(args.n, args.delta, args.omega, eps)
        }
        (VariantArg::Bayes, Some(xi), None) => {
            TwoPhaseConfig::bayes(args.n, args.delta, args.omega, xi)
        }
        (VariantArg::Np, Some(_), _) | (VariantArg::Bayes, _, Some(_)) => {
            return Err(Error::InvalidParameter(
                "the np variant takes --eps-prime, the bayes variant takes --xi".into(),
            ))
        }
        _ => {
            return Err(Error::InvalidParameter(
                "provide --eps-prime (np variant) or --xi (bayes variant)".into(),
            ))
        }
    };
    let runner = TwoPhaseRunner::new(cfg, &model.source, &cons.distortion, args.s)?;

    let mut csv = String::from("trace,hypothesis,learned,avg_distortion,phase1_constant\n");
    let mut pass = true;
    let mut report = String::new();
    for h in [Hypothesis::H0, Hypothesis::H1] {
        let pmf = model.demand_pmf(h);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut learn_errors = 0usize;
        let mut phase1_ok = true;
        let y_min = cons.distortion.y_alphabet().min_symbol();
        for t in 0..args.traces {
            let salt = match h {
                Hypothesis::H0 => 0u64,
                Hypothesis::H1 => 1u64,
            };
            let seed_x = args
                .seed
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(2 * t as u64 + salt);
            let xs = sample_iid(pmf, args.n, seed_x);
            let trace = runner.apply(h, &xs, seed_x.wrapping_add(0x5851_f42d_4c95_7f2d))?;
            if t == 0 && h == Hypothesis::H0 {
                if let Some(path) = &args.dump_trace {
                    std::fs::write(path, policy_trace_csv(&trace))?;
                }
            }
            let avg = trace.average_distortion();
            sum += avg;
            sum_sq += avg * avg;
            let learned = trace.learned.expect("two-phase always learns");
            if learned != h {
                learn_errors += 1;
            }
            let constant = trace.y_seq[..trace.learning_slots]
                .iter()
                .all(|&y| y == y_min);
            phase1_ok &= constant;
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                h.label(),
                learned.label(),
                fmt_sig(avg),
                constant
            ));
        }
        let count = args.traces as f64;
        let mean = sum / count;
        let var = (sum_sq / count - mean * mean).max(0.0);
        let sigma = (var / count).sqrt();
        let within = mean <= args.s + 3.0 * sigma;
        pass &= within && phase1_ok;
        let err_rate = learn_errors as f64 / count;
        report.push_str(&format!(
            "{}: mean_distortion={} (3sigma={}) budget={} within={} learn_error_rate={} phase1_constant={}\n",
            h.label(),
            fmt_sig(mean),
            fmt_sig(3.0 * sigma),
            fmt_sig(args.s),
            within,
            fmt_sig(err_rate),
            phase1_ok
        ));
    }
    if let Some(out) = &args.out {
        std::fs::write(out, &csv)?;
    }
    print!("{report}");
    println!("audit {}", if pass { "PASS" } else { "FAIL" });
    Ok(ExitCode::SUCCESS)
}

fn cmd_montecarlo(args: MontecarloArgs) -> Result<ExitCode, Error> {
    let (model, _) = load_model(&args.model)?;
    let cons = build_energy_constraint(&model, args.s)?;
    let opts = SolveOptions::default();
    let kind: ExponentKind = args.variant.into();
    let result = match kind {
        ExponentKind::Phi => solve_phi_opts(&model.source, &cons, &opts, None)?,
        ExponentKind::Nu => solve_nu_opts(&model.source, &cons, &opts)?,
    };
    let mut csv = String::from("hypothesis,tv_marginal,avg_distortion,budget,within\n");
    let mut all_ok = true;
    for h in [Hypothesis::H0, Hypothesis::H1] {
        let pmf = model.demand_pmf(h);
        let cond = match h {
            Hypothesis::H0 => result.policy.cond_h0(),
            Hypothesis::H1 => result.policy.cond_h1(),
        };
        let expected = marginal(pmf, cond)?;
        let y_syms = cons.distortion.y_alphabet().symbols();
        let mut counts = vec![0u64; y_syms.len()];
        let mut dist_sum = 0.0;
        let total = args.traces * args.n;
        for t in 0..args.traces {
            let salt = match h {
                Hypothesis::H0 => 0u64,
                Hypothesis::H1 => 1u64,
            };
            let seed = args
                .seed
                .wrapping_mul(0x2545_f491_4f6c_dd1d)
                .wrapping_add(2 * t as u64 + salt);
            let xs = sample_iid(pmf, args.n, seed);
            let ys = memoryless_policy_apply(&result.policy, h, &xs, seed ^ 0xabcd)?;
            for (x, y) in xs.iter().zip(&ys) {
                let yi = y_syms.iter().position(|s| s == y).unwrap();
                counts[yi] += 1;
                let xi = cons.distortion.x_alphabet().index_of(*x).unwrap();
                dist_sum += cons.distortion.d(xi, yi);
            }
        }
        let tv = 0.5
            * counts
                .iter()
                .zip(expected.probs())
                .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
                .sum::<f64>();
        let avg_dist = dist_sum / total as f64;
        // Sampling slack: 3 sigma on the distortion mean, generous union
        // bound on the marginal TV.
        let tv_ok = tv <= 3.0 * (y_syms.len() as f64) / (total as f64).sqrt();
        let budget = match h {
            Hypothesis::H0 => cons.budget_h0,
            Hypothesis::H1 => cons.budget_h1,
        };
        let d_ok = avg_dist <= budget + 3.0 * cons.distortion.d_max() / (total as f64).sqrt();
        all_ok &= tv_ok && d_ok;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            h.label(),
            fmt_sig(tv),
            fmt_sig(avg_dist),
            fmt_sig(budget),
            tv_ok && d_ok
        ));
    }
    emit(&args.out, &csv)?;
    println!("montecarlo {}", if all_ok { "PASS" } else { "FAIL" });
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen_trace(args: GenTraceArgs) -> Result<ExitCode, Error> {
    let (model, _) = load_model(&args.model)?;
    let xs = model.sample_trace(args.hypothesis.into(), args.n, args.seed);
    let mut csv = String::from("slot,demand_w\n");
    for (i, x) in xs.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i + 1, fmt_sig(*x)));
    }
    emit(&args.out, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_meter_apply(args: MeterApplyArgs) -> Result<ExitCode, Error> {
    let (model, _) = load_model(&args.model)?;
    let trace_text = std::fs::read_to_string(&args.trace)?;
    let demand = io::parse_demand_trace_csv(&trace_text)?;
    let app = smartmeter::apply_to_trace(
        &model,
        args.s,
        &demand,
        args.variant.into(),
        args.hypothesis.into(),
        args.seed,
    )?;
    emit(&args.out, &meter_trace_csv(&app))?;
    eprintln!(
        "average renewable usage {} W against rate {} W",
        fmt_sig(app.average_renewable),
        fmt_sig(app.s)
    );
    Ok(ExitCode::SUCCESS)
}
