//! `rbl`: runs scenarios, evaluates and optimizes retarded Bell inequalities,
//! and checks stored correlation tables.
//!
//! Exit codes: 0 ok, 1 error, 2 insufficient data, 3 an inequality is violated.

mod verify;

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retarded_bell::angle::parse_angle;
use retarded_bell::config::{RetardedDefinition, ScenarioConfig};
use retarded_bell::estimation::{
    build_table, ChCounts, CorrelationTable, MonteCarlo, TrialLog, DEFAULT_MIN_COUNT,
};
use retarded_bell::inequalities::{
    both_equal_reduction, one_end_equal_chsh, retarded_ch, retarded_chsh, same_retarded_chsh,
    standard_chsh, ClosedForm, CorrelationSource, InequalityReport, Octuple, ProbabilitySource,
};
use retarded_bell::models::Model;
use retarded_bell::optimizer::{
    optimize, Direction, Evaluation, ObjectiveKind, ObjectiveSpec, RetardedPattern, Var,
    DEFAULT_GRID_STEP,
};
use retarded_bell::parallel::Workers;
use retarded_bell::scenarios::run_scenario;
use retarded_bell::{Error, Result};

const EXIT_ERROR: u8 = 1;
const EXIT_INSUFFICIENT: u8 = 2;
const EXIT_VIOLATED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rbl",
    version,
    about = "Bell-type experiments with retarded settings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured scenario and write trials, table and reports.
    Run(RunArgs),
    /// Evaluate an inequality in closed form (or by Monte Carlo with --n).
    Analytic(AnalyticArgs),
    /// Extremize an inequality over setting angles.
    Optimize(OptimizeArgs),
    /// Evaluate an inequality from a stored correlation table or trial log.
    Check(CheckArgs),
    /// Run the identity and model self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "rbl-out")]
    out: PathBuf,
    /// Override the number of trials.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long, value_parser = parse_definition)]
    definition: Option<RetardedDefinition>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
}

fn parse_angle_arg(s: &str) -> std::result::Result<f64, String> {
    parse_angle(s).map_err(|e| e.to_string())
}

fn parse_model(s: &str) -> std::result::Result<Model, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_definition(s: &str) -> std::result::Result<RetardedDefinition, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Setting angles, in radians or as multiples of pi.
#[derive(Args, Default)]
struct AngleArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    a: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    a2: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    b2: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    ar: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    a2r: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    br: Option<f64>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_angle_arg)]
    b2r: Option<f64>,
}

impl AngleArgs {
    fn as_array(&self) -> [Option<f64>; 8] {
        [
            self.a, self.a2, self.b, self.b2, self.ar, self.a2r, self.br, self.b2r,
        ]
    }
}

/// Setting label ids as they appear in a table.
#[derive(Args)]
struct LabelArgs {
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    ar: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a2r: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    br: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b2r: Option<String>,
}

impl LabelArgs {
    fn as_array(&self) -> [Option<String>; 8] {
        [
            &self.a, &self.a2, &self.b, &self.b2, &self.ar, &self.a2r, &self.br, &self.b2r,
        ]
        .map(Clone::clone)
    }
}

#[derive(Args)]
struct AnalyticArgs {
    #[arg(long, value_parser = parse_model)]
    model: Model,
    /// chsh, retarded_chsh, same_retarded_chsh, retarded_ch,
    /// both_equal_reduction or one_end_equal_chsh.
    #[arg(long)]
    ineq: String,
    #[command(flatten)]
    angles: AngleArgs,
    /// Estimate each correlation by Monte Carlo with this many samples.
    #[arg(long)]
    n: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OptimizeArgs {
    /// JSON objective spec; inline flags are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    model: Option<Model>,
    #[arg(long)]
    ineq: Option<String>,
    /// fixed, tied or free.
    #[arg(long, default_value = "tied")]
    pattern: String,
    #[arg(long, default_value = "minimize")]
    direction: String,
    /// Comma-separated free variables (a, a', b, b', a_r, a'_r, b_r, b'_r).
    #[arg(long, default_value = "a,a',b,b'")]
    free: String,
    /// Values for the variables that are not free.
    #[command(flatten)]
    angles: AngleArgs,
    #[arg(long, value_parser = parse_angle_arg)]
    grid_step: Option<f64>,
    /// Evaluate by quadrature with this many nodes instead of closed form.
    #[arg(long)]
    quadrature_nodes: Option<usize>,
    /// Also write the optimum JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Correlation-table CSV.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Trial-log CSV; required for retarded_ch.
    #[arg(long)]
    trials: Option<PathBuf>,
    #[arg(long)]
    ineq: String,
    #[command(flatten)]
    labels: LabelArgs,
    #[arg(long, default_value_t = DEFAULT_MIN_COUNT)]
    min_count: u64,
}

#[derive(Args)]
struct VerifyArgs {
    /// Sample count for the randomized checks.
    #[arg(long, default_value_t = 1_000_000)]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Analytic(args) => cmd_analytic(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Check(args) => cmd_check(args),
        Command::Verify(args) => cmd_verify(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_insufficient_data() {
                EXIT_INSUFFICIENT
            } else {
                EXIT_ERROR
            })
        }
    }
}

fn verdict_code(reports: &[InequalityReport]) -> u8 {
    if reports.iter().any(InequalityReport::is_violated) {
        EXIT_VIOLATED
    } else {
        0
    }
}

fn summary_line(r: &InequalityReport) -> String {
    format!(
        "{} value {:.6} se {:.6} bounds [{}, {}] verdict {}",
        r.name,
        r.value,
        r.combined_se,
        r.lower,
        r.upper,
        serde_json::to_value(r.verdict)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default()
    )
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<u8> {
    let mut config = ScenarioConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n {
        config.n_trials = n;
    }
    if let Some(m) = args.min_count {
        config.min_count = m;
    }
    if let Some(d) = args.definition {
        config.definition = d;
    }
    if let Some(m) = args.model {
        config.model = m;
    }
    config.validate()?;
    let result = run_scenario(&config, Workers::from_env())?;
    result.write_outputs(&args.out)?;

    let c = &result.classification;
    println!("trials {}", c.n_trials);
    for (class, f) in &c.fractions {
        println!("{} {:.6}", class.name(), f);
    }
    if let Some(t) = &c.independence {
        println!(
            "independence chi2 {:.6} df {} critical {:.6} independent {}",
            t.statistic, t.degrees_of_freedom, t.critical_value, t.independent
        );
    }
    for r in &result.reports.reports {
        println!("{}", summary_line(r));
    }
    println!("absent {}", result.reports.absent.len());
    println!("outputs {}", args.out.display());
    Ok(verdict_code(&result.reports.reports))
}

/// Fills unspecified retarded settings with their actual counterparts.
fn complete<K: Clone>(given: [Option<K>; 8]) -> Result<Octuple<K>> {
    let names = ["a", "a2", "b", "b2"];
    let mut actual = Vec::with_capacity(4);
    for (i, v) in given[..4].iter().enumerate() {
        actual.push(
            v.clone()
                .ok_or_else(|| Error::InvalidArgument(format!("--{} is required", names[i])))?,
        );
    }
    let pick = |i: usize| given[i].clone().unwrap_or_else(|| actual[i - 4].clone());
    Ok(Octuple {
        a_r: pick(4),
        a2_r: pick(5),
        b_r: pick(6),
        b2_r: pick(7),
        a: actual[0].clone(),
        a2: actual[1].clone(),
        b: actual[2].clone(),
        b2: actual[3].clone(),
    })
}

/// Correlation-based inequalities. `same_retarded_explicit` selects the
/// `(a_r, b_r)` given on the command line instead of `(a, b)`.
fn correlation_report<S: CorrelationSource>(
    src: &S,
    ineq: &str,
    o: &Octuple<S::Key>,
    same_retarded_explicit: bool,
) -> Result<InequalityReport> {
    match ineq {
        "chsh" => standard_chsh(src, &o.a, &o.a2, &o.b, &o.b2),
        "retarded_chsh" => retarded_chsh(src, o),
        "same_retarded_chsh" if same_retarded_explicit => {
            let fixed = Octuple {
                a2_r: o.a_r.clone(),
                b2_r: o.b_r.clone(),
                ..o.clone()
            };
            let mut r = retarded_chsh(src, &fixed)?;
            r.name = "same_retarded_chsh".into();
            Ok(r)
        }
        "same_retarded_chsh" => same_retarded_chsh(src, &o.a, &o.a2, &o.b, &o.b2),
        "both_equal_reduction" => both_equal_reduction(src, &o.a, &o.b),
        "one_end_equal_chsh" => one_end_equal_chsh(src, &o.a, &o.b, &o.b2, &o.b_r, &o.b2_r),
        other => Err(Error::UnsupportedObjective(format!(
            "inequality {other:?} is not available here"
        ))),
    }
}

fn probability_report<P: ProbabilitySource>(
    src: &P,
    o: &Octuple<P::Key>,
) -> Result<InequalityReport> {
    retarded_ch(src, o)
}

fn finish(report: InequalityReport) -> Result<u8> {
    eprintln!("{}", summary_line(&report));
    print_json(&report)?;
    Ok(verdict_code(std::slice::from_ref(&report)))
}

fn cmd_analytic(args: AnalyticArgs) -> Result<u8> {
    let given = args.angles.as_array();
    let explicit = given[4].is_some() || given[6].is_some();
    let o = complete(given)?;
    let report = match (args.ineq.as_str(), args.n) {
        ("retarded_ch", None) => probability_report(&ClosedForm(args.model), &o)?,
        ("retarded_ch", Some(_)) => {
            return Err(Error::UnsupportedObjective(
                "retarded_ch by Monte Carlo needs a trial log; use `run` then `check --trials`"
                    .into(),
            ))
        }
        (ineq, None) => correlation_report(&ClosedForm(args.model), ineq, &o, explicit)?,
        (ineq, Some(n)) => {
            let mc = MonteCarlo {
                model: args.model,
                n,
                seed: args.seed,
                workers: Workers::from_env(),
            };
            correlation_report(&mc, ineq, &o, explicit)?
        }
    };
    finish(report)
}

fn cmd_optimize(args: OptimizeArgs) -> Result<u8> {
    let spec = match &args.spec {
        Some(path) => serde_json::from_reader(BufReader::new(File::open(path)?))?,
        None => {
            let model = args
                .model
                .ok_or_else(|| Error::InvalidArgument("--model or --spec is required".into()))?;
            let kind: ObjectiveKind = args
                .ineq
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--ineq or --spec is required".into()))?
                .parse()?;
            let pattern: RetardedPattern = args.pattern.parse()?;
            let direction = match args.direction.as_str() {
                "minimize" | "min" => Direction::Minimize,
                "maximize" | "max" => Direction::Maximize,
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown direction {other:?}"
                    )))
                }
            };
            let free = args
                .free
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(str::parse)
                .collect::<Result<Vec<Var>>>()?;
            let values = Var::ALL
                .iter()
                .zip(args.angles.as_array())
                .filter_map(|(v, x)| x.map(|x| (*v, x)))
                .collect();
            ObjectiveSpec {
                model,
                kind,
                pattern,
                direction,
                free,
                values,
                evaluation: args
                    .quadrature_nodes
                    .map_or(Evaluation::ClosedForm, |nodes| Evaluation::Quadrature {
                        nodes,
                    }),
                grid_step: args.grid_step.unwrap_or(DEFAULT_GRID_STEP),
                ..ObjectiveSpec::new(model, kind, pattern)
            }
        }
    };
    let opt = optimize(&spec, Workers::from_env())?;
    eprintln!(
        "{} {} value {:.6} after {} evaluations",
        spec.kind.name(),
        spec.model,
        opt.value,
        opt.evaluations
    );
    if let Some(path) = &args.out {
        serde_json::to_writer_pretty(File::create(path)?, &opt)?;
    }
    print_json(&opt)?;
    Ok(0)
}

fn cmd_check(args: CheckArgs) -> Result<u8> {
    let o = complete(args.labels.as_array())?;
    let explicit = args.labels.ar.is_some() || args.labels.br.is_some();
    let log = match &args.trials {
        Some(path) => Some(TrialLog::read_csv(BufReader::new(File::open(path)?))?),
        None => None,
    };
    if args.ineq == "retarded_ch" {
        let log = log.ok_or_else(|| Error::InvalidArgument("retarded_ch needs --trials".into()))?;
        return finish(probability_report(
            &ChCounts::new(&log, args.min_count),
            &o,
        )?);
    }
    let table = match (&args.table, &log) {
        (Some(path), _) => {
            CorrelationTable::read_csv(BufReader::new(File::open(path)?), args.min_count)?
        }
        (None, Some(log)) => build_table(log, args.min_count),
        (None, None) => {
            return Err(Error::InvalidArgument(
                "--table or --trials is required".into(),
            ))
        }
    };
    finish(correlation_report(&table, &args.ineq, &o, explicit)?)
}

fn cmd_verify(args: VerifyArgs) -> Result<u8> {
    let checks = verify::run_checks(args.n, args.seed)?;
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    println!(
        "{} of {} checks passed",
        checks.len() - failed,
        checks.len()
    );
    Ok(if failed == 0 { 0 } else { EXIT_ERROR })
}
