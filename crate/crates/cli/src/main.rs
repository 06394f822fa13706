use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use orlicz_indiff::distribution::DiscreteDistribution;
use orlicz_indiff::files::{load_utility, MarketFile, MixtureFile};
use orlicz_indiff::finite_market::FiniteMarket;
use orlicz_indiff::utility::{UtilityFunction, UtilitySpec};
use orlicz_indiff::verify::{self, ExampleParams, FirstClaim, VerifyOptions};
use orlicz_indiff::{dual, exp_mixture, indifference, orlicz, primal, random, Error};

const EXIT_SUITE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "orlicz-indiff", version, about = "Utility maximization and indifference pricing in one-period markets")]
struct Cli {
    /// Print a JSON document instead of a table.
    #[arg(long, global = true)]
    json: bool,
    /// Write the report to this file instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = random::SEED_ENV, default_value_t = random::DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seller's indifference price with bounds, slopes and penalties.
    Price(PriceArgs),
    /// Optimal strategy for the claim problem.
    Maximize(ProblemArgs),
    /// Dual minimizer, first-order residuals and duality gap.
    Dual(ProblemArgs),
    /// The mixture-of-exponentials examples.
    Example(ExampleArgs),
    /// Seeded verification suites.
    Verify(VerifyArgs),
    /// Luxemburg norm and Orlicz dual norm of a discrete random variable.
    Norm(NormArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UtilityChoice {
    Exponential,
    Custom,
}

#[derive(Args)]
struct ProblemArgs {
    /// Market document (JSON).
    #[arg(long)]
    market: PathBuf,
    #[arg(long, value_enum, default_value = "exponential")]
    utility: UtilityChoice,
    /// Risk aversion of the exponential utility.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Utility document for `--utility custom`.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Claim values, comma separated, one per state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["claim_const", "claim_file"])]
    claim: Option<Vec<f64>>,
    /// Constant claim.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "claim_file")]
    claim_const: Option<f64>,
    /// JSON array holding the claim.
    #[arg(long)]
    claim_file: Option<PathBuf>,
    /// Initial wealth; defaults to the market document's x0.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
}

#[derive(Args)]
struct PriceArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Random restarts of the dual price maximization.
    #[arg(long, default_value_t = indifference::DEFAULT_RESTARTS)]
    restarts: usize,
    /// Random martingale measures in the penalty table.
    #[arg(long, default_value_t = 5)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaChoice {
    Tanh,
    Zero,
}

#[derive(Args)]
struct ExampleArgs {
    /// 1: bounded claim; 2: claim proportional to Y.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    which: Option<u8>,
    #[arg(long, default_value_t = 0.3)]
    delta: f64,
    #[arg(long, default_value_t = exp_mixture::DEFAULT_P1)]
    p1: f64,
    /// Geometric ratio of the weights.
    #[arg(long, default_value_t = exp_mixture::DEFAULT_RATIO)]
    r: f64,
    /// Number of atoms.
    #[arg(long, default_value_t = exp_mixture::DEFAULT_ATOMS)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Bounded claim of the first example.
    #[arg(long, value_enum, default_value = "tanh")]
    alpha: AlphaChoice,
    /// Mixture document; replaces the built-in parameters.
    #[arg(long, conflicts_with = "which")]
    mixture: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Markets in the duality fuzz.
    #[arg(long, default_value_t = 100)]
    seeds: usize,
    /// Run only these suites.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(verify::SUITES))]
    suite: Vec<String>,
}

#[derive(Args)]
struct NormArgs {
    /// Values of the random variable, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    values: Vec<f64>,
    /// State probabilities; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    probs: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "exponential")]
    utility: UtilityChoice,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long)]
    spec: Option<PathBuf>,
}

/// A failure together with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() { EXIT_VALIDATION } else { EXIT_NONCONVERGENCE };
        Failure { code, message: e.to_string() }
    }
}

struct Output {
    json: serde_json::Value,
    table: String,
    code: u8,
}

fn output<T: Serialize>(value: &T, table: String, code: u8) -> Result<Output, Failure> {
    let json = serde_json::to_value(value).map_err(|e| Failure { code: EXIT_VALIDATION, message: e.to_string() })?;
    Ok(Output { json, table, code })
}

fn utility(choice: UtilityChoice, gamma: f64, spec: &Option<PathBuf>) -> Result<UtilityFunction, Failure> {
    Ok(match choice {
        UtilityChoice::Exponential => UtilitySpec::Exponential { gamma }.build()?,
        UtilityChoice::Custom => {
            let path = spec.as_ref().ok_or_else(|| Failure { code: EXIT_VALIDATION, message: "--utility custom needs --spec FILE".into() })?;
            load_utility(path)?.build()?
        }
    })
}

struct Problem {
    market: FiniteMarket,
    u: UtilityFunction,
    claim: Vec<f64>,
    x: f64,
}

fn problem(a: &ProblemArgs) -> Result<Problem, Failure> {
    let file = MarketFile::load(&a.market)?;
    let market = file.market()?;
    let n = market.n_states();
    let claim = if let Some(c) = &a.claim {
        c.clone()
    } else if let Some(c) = a.claim_const {
        vec![c; n]
    } else if let Some(path) = &a.claim_file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("malformed claim document: {e}")))?
    } else {
        file.claim.clone().unwrap_or_else(|| vec![0.0; n])
    };
    market.check_claim(&claim)?;
    Ok(Problem { u: utility(a.utility, a.gamma, &a.spec)?, x: a.x0.unwrap_or(market.x0()), market, claim })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_price(a: &PriceArgs, seed: u64) -> Result<Output, Failure> {
    let p = problem(&a.problem)?;
    let mut rng = random::rng(seed);
    let solve = indifference::price_solve(&p.market, &p.u, &p.claim, p.x)?;
    let rep = indifference::dual_price_representation(&p.market, &p.u, &p.claim, p.x, a.restarts, &mut rng)?;
    let bounds = indifference::price_bounds(&p.market, &p.u, &p.claim, p.x)?;
    let asym = indifference::volume_asymptotics(&p.market, &p.u, &p.claim, p.x)?;
    let report = indifference::price_report(&p.market, &p.u, &p.claim, p.x, a.samples, &mut rng)?;
    let closed = match p.u.gamma() {
        Some(g) => Some(indifference::price_exponential(&p.market, g, &p.claim, p.x)?),
        None => None,
    };
    if (solve.price - rep.price).abs() > 1e-7 {
        return Err(Failure {
            code: EXIT_NONCONVERGENCE,
            message: format!("price routes disagree: root {} vs dual representation {}", solve.price, rep.price),
        });
    }

    #[derive(Serialize)]
    struct Doc<'a> {
        utility: String,
        x0: f64,
        claim: &'a [f64],
        replicable: bool,
        closed_form: Option<f64>,
        entropy_route: Option<f64>,
        report: &'a indifference::PriceReport,
        asymptotics: indifference::VolumeAsymptotics,
    }
    let doc = Doc {
        utility: p.u.name(),
        x0: p.x,
        claim: &p.claim,
        replicable: report.replication.is_some(),
        closed_form: closed.as_ref().map(|c| c.price),
        entropy_route: closed.as_ref().map(|c| c.entropy_route),
        report: &report,
        asymptotics: asym,
    };
    let mut t = String::new();
    let _ = writeln!(t, "utility             {}", doc.utility);
    let _ = writeln!(t, "x0                  {}", p.x);
    let _ = writeln!(t, "claim               {}", fmt_vec(&p.claim));
    let _ = writeln!(t, "price               {:.12}", solve.price);
    let _ = writeln!(t, "price residual      {:.3e}", solve.residual);
    let _ = writeln!(t, "dual representation {:.12}", rep.price);
    if let Some(c) = &closed {
        let _ = writeln!(t, "closed form         {:.12}", c.price);
        let _ = writeln!(t, "entropy route       {:.12}", c.entropy_route);
    }
    let _ = writeln!(t, "lower bound         {:.12}", bounds.lower);
    let _ = writeln!(t, "upper bound         {:.12}", bounds.upper);
    let _ = writeln!(t, "slope at zero       {:.8}  (expected {:.8})", asym.slope_at_zero, asym.expected_at_zero);
    let _ = writeln!(t, "slope at infinity   {:.8}  (sup {:.8})", asym.slope_at_infinity, asym.expected_at_infinity);
    match &report.replication {
        Some(r) => {
            let _ = writeln!(t, "replicable          yes: cash {:.12}, strategy {}", r.cash, fmt_vec(&r.strategy));
        }
        None => {
            let _ = writeln!(t, "replicable          no");
        }
    }
    let _ = writeln!(t, "argmax measures     {}", report.argmax_measures.len());
    for q in &report.argmax_measures {
        let _ = writeln!(t, "  {}", fmt_vec(q.q()));
    }
    let _ = writeln!(t, "penalty table");
    for s in &report.penalty_at {
        let _ = writeln!(t, "  {}  {}", fmt_vec(&s.q), s.penalty);
    }
    output(&doc, t, 0)
}

fn cmd_maximize(a: &ProblemArgs) -> Result<Output, Failure> {
    let p = problem(a)?;
    let s = primal::maximize(&p.market, &p.u, &p.claim, p.x)?;
    let mut t = String::new();
    let _ = writeln!(t, "utility            {}", p.u.name());
    let _ = writeln!(t, "strategy           {}", fmt_vec(&s.h_star));
    let _ = writeln!(t, "value              {:.12e}", s.value);
    if let Some(l) = s.log_neg_value {
        let _ = writeln!(t, "ln(-value)         {l:.12}");
    }
    let _ = writeln!(t, "optimal wealth     {}", fmt_vec(&s.f_b));
    let _ = writeln!(t, "gradient residual  {:.3e}", s.gradient_residual);
    let _ = writeln!(t, "unique             {}", s.unique);
    let _ = writeln!(t, "iterations         {}", s.iterations);
    if !s.dropped_assets.is_empty() {
        let _ = writeln!(t, "dropped assets     {:?}", s.dropped_assets);
    }
    output(&s, t, 0)
}

fn cmd_dual(a: &ProblemArgs) -> Result<Output, Failure> {
    let p = problem(a)?;
    let s = dual::minimize_dual(&p.market, &p.u, &p.claim, p.x)?;
    let mut t = String::new();
    let _ = writeln!(t, "utility                 {}", p.u.name());
    let _ = writeln!(t, "lambda                  {:.12e}", s.lambda_star);
    let _ = writeln!(t, "measure                 {}", fmt_vec(s.q_star.q()));
    let _ = writeln!(t, "dual value              {:.12e}", s.value);
    let _ = writeln!(t, "primal value            {:.12e}", s.primal_value);
    let _ = writeln!(t, "duality gap             {:.3e}", s.duality_gap);
    let _ = writeln!(t, "lambda residual         {:.3e}", s.foc_lambda_residual);
    let _ = writeln!(t, "variational residual    {:.3e}", s.foc_q_residual);
    let _ = writeln!(t, "recovered wealth        {}", fmt_vec(&s.f_b_recovered));
    if let Some(v) = s.entropy_form_value {
        let _ = writeln!(t, "entropy form value      {v:.12e}");
    }
    output(&s, t, 0)
}

fn cmd_example(a: &ExampleArgs) -> Result<Output, Failure> {
    let report = if let Some(path) = &a.mixture {
        mixture_report(&MixtureFile::load(path)?)?
    } else {
        let which = a.which.ok_or_else(|| Failure { code: EXIT_VALIDATION, message: "pass --which 1|2 or --mixture FILE".into() })?;
        let params = ExampleParams {
            which,
            delta: a.delta,
            first_claim: match a.alpha {
                AlphaChoice::Tanh => FirstClaim::Tanh,
                AlphaChoice::Zero => FirstClaim::Zero,
            },
            gamma: a.gamma,
            atoms: a.n,
            p1: a.p1,
            ratio: a.r,
        };
        serde_json::to_value(verify::example_report(&params)?).expect("serializable")
    };
    let passed = report.get("checks").and_then(|c| c.as_array()).is_none_or(|cs| cs.iter().all(|c| c["passed"] == true));
    let mut t = String::new();
    if let Some(obj) = report.as_object() {
        for (k, v) in obj {
            if k == "checks" || k == "bounds" {
                continue;
            }
            let _ = writeln!(t, "{k:<26}{}", v.to_string().trim_matches('"'));
        }
        if let Some(b) = obj.get("bounds").and_then(|b| b.as_object()) {
            for (k, v) in b {
                let _ = writeln!(t, "bounds.{k:<19}{v}");
            }
        }
        for c in obj.get("checks").and_then(|c| c.as_array()).into_iter().flatten() {
            let verdict = if c["passed"] == true { "PASS" } else { "FAIL" };
            let _ = writeln!(t, "{verdict}  {}  ({})", c["name"].as_str().unwrap_or(""), c["detail"].as_str().unwrap_or(""));
        }
    }
    Ok(Output { json: report, table: t, code: if passed { 0 } else { EXIT_SUITE } })
}

/// Report for a mixture document: the same quantities without the
/// example-specific checks.
fn mixture_report(f: &MixtureFile) -> Result<serde_json::Value, Failure> {
    let m = f.market()?;
    let zero = m.without_claim()?;
    let opt = m.optimal_h()?;
    let density = m.dual_regular_density()?;
    let mass = m.singular_mass()?;
    let bounds = m.singular_bounds()?;
    Ok(serde_json::json!({
        "claim": m.claim().describe(),
        "h_star": opt.h_star,
        "attained_at_boundary": opt.attained_at_boundary,
        "boundary_slope": m.g_prime(opt.h_star)?,
        "optimal_wealth": format!("f_B = {} S = {} Z Y", opt.h_star, opt.h_star),
        "normalizer": density.normalizer,
        "normalizer_cross_check": density.normalizer_cross_check(),
        "singular_mass": mass.value,
        "singular_mass_cross_check": mass.cross_check,
        "hedging_delta": exp_mixture::hedging_delta(&m, &zero)?,
        "entropy": density.entropy(),
        "covariance": m.covariance(),
        "bounds": bounds,
    }))
}

fn cmd_verify(a: &VerifyArgs, seed: u64) -> Result<Output, Failure> {
    let opts = VerifyOptions { seed, markets: a.seeds, suites: a.suite.clone() };
    let r = verify::run(&opts)?;
    let mut t = String::new();
    let _ = writeln!(t, "seed {}", r.seed);
    let _ = writeln!(t, "{:<12} {:>6}  {:<64} {:>12} {:>10}  result", "suite", "cases", "check", "max", "tolerance");
    for s in &r.suites {
        for (i, m) in s.metrics.iter().enumerate() {
            let (name, cases) = if i == 0 { (s.name.as_str(), s.cases.to_string()) } else { ("", String::new()) };
            let verdict = if m.passed() { "PASS" } else { "FAIL" };
            let _ = writeln!(t, "{name:<12} {cases:>6}  {:<64} {:>12.3e} {:>10.1e}  {verdict}", m.name, m.max, m.tolerance);
        }
        for e in &s.errors {
            let _ = writeln!(t, "{:<12} error: {e}", s.name);
        }
    }
    let _ = writeln!(t, "overall {}", if r.passed { "PASS" } else { "FAIL" });
    output(&r, t, if r.passed { 0 } else { EXIT_SUITE })
}

fn cmd_norm(a: &NormArgs) -> Result<Output, Failure> {
    let n = a.values.len();
    let probs = a.probs.clone().unwrap_or_else(|| vec![1.0 / n as f64; n]);
    let f = DiscreteDistribution::new(a.values.clone(), probs)?;
    let yp = utility(a.utility, a.gamma, &a.spec)?.young_pair();
    #[derive(Serialize)]
    struct Doc {
        luxemburg: f64,
        orlicz_dual: f64,
        beta: f64,
    }
    let doc = Doc { luxemburg: orlicz::luxemburg_norm(&f, &yp), orlicz_dual: orlicz::orlicz_dual_norm(&f, &yp), beta: yp.beta() };
    let t = format!("luxemburg norm   {:.15}\norlicz dual norm {:.15}\nbeta             {}\n", doc.luxemburg, doc.orlicz_dual, doc.beta);
    output(&doc, t, 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Price(a) => cmd_price(a, cli.seed),
        Command::Maximize(a) => cmd_maximize(a),
        Command::Dual(a) => cmd_dual(a),
        Command::Example(a) => cmd_example(a),
        Command::Verify(a) => cmd_verify(a, cli.seed),
        Command::Norm(a) => cmd_norm(a),
    };
    match result {
        Ok(out) => {
            let text = if cli.json { serde_json::to_string_pretty(&out.json).expect("serializable") + "\n" } else { out.table };
            match &cli.out {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_VALIDATION);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
