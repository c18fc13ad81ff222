//! `semirank` command-line front end.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

use semirank::comparators::logistic::fit_logistic;
use semirank::comparators::tobit::fit_tobit;
use semirank::comparators::{ComparatorFit, FitConfig};
use semirank::panel::{
    day_of, group_city_weeks, load_csv, load_rainfall_csv, CsvColumns, RainfallColumns,
};
use semirank::simgen::{simulate_dataset, Scenario, ScenarioConfig};
use semirank::study::{parse_methods, power_study, rainfall_study, StudyConfig, StudyResult};
use semirank::{run_test, Error, TestConfig};

#[derive(Parser, Debug)]
#[command(
    name = "semirank",
    version,
    about = "Rank-correlation test for longitudinal semicontinuous outcomes"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test the covariates of a panel CSV.
    Test(TestArgs),
    /// Write a simulated panel as CSV.
    Simulate(SimulateArgs),
    /// Rejection rates over simulated replicates.
    PowerStudy(PowerArgs),
    /// Week-resampling experiment on daily rainfall records.
    Rain(RainArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Tsv,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Rank,
    Tobit,
    Logistic,
}

#[derive(Args, Debug, Clone)]
struct RankArgs {
    /// Perturbation resamples B.
    #[arg(long = "b")]
    resamples: Option<usize>,
    /// Cap on bandwidth iterations Q.
    #[arg(long = "q")]
    bandwidth_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bandwidth multiplier.
    #[arg(long, default_value_t = 1.0)]
    h_mult: f64,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    outcome: String,
    #[arg(long)]
    id: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',', required = true)]
    covariates: Vec<String>,
    /// Optional time column (numbers or YYYY-MM-DD).
    #[arg(long)]
    time: Option<String>,
    #[command(flatten)]
    rank: RankArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Rank)]
    method: MethodArg,
    /// Quadrature nodes for the comparator fits.
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    scenario: u32,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    beta1: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct StudyArgs {
    /// Comma-separated subset of rank, tobit, logistic.
    #[arg(long, default_value = "rank,tobit,logistic")]
    methods: String,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    rank: RankArgs,
    #[arg(long, value_enum, default_value_t = Format::Tsv)]
    format: Format,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..=2))]
    scenario: u32,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    beta1: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma1: f64,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Args, Debug)]
struct RainArgs {
    #[arg(long)]
    input: PathBuf,
    /// City-weeks per draw.
    #[arg(long)]
    weeks: usize,
    #[arg(long, default_value_t = 100)]
    draws: usize,
    #[arg(long, default_value = "station")]
    city_col: String,
    #[arg(long, default_value = "date")]
    date_col: String,
    #[arg(long, default_value = "rain")]
    outcome_col: String,
    /// City coded 1 on the city indicator (default: second city seen).
    #[arg(long)]
    treated: Option<String>,
    /// Days per city-week.
    #[arg(long, default_value_t = 7)]
    week_len: u32,
    /// Drop one record, given as CITY@YYYY-MM-DD; repeatable.
    #[arg(long = "drop")]
    drop: Vec<String>,
    #[command(flatten)]
    study: StudyArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Lib(e) if matches!(e.root(), Error::Config(_)) => 1,
        Failure::Lib(e) if e.is_data_error() => 2,
        Failure::Lib(_) => 3,
    }
}

fn test_config(a: &RankArgs, default_b: usize, default_q: usize) -> TestConfig {
    TestConfig {
        resamples: a.resamples.unwrap_or(default_b),
        max_bandwidth_iters: a.bandwidth_iters.unwrap_or(default_q),
        seed: a.seed,
        h_mult: a.h_mult,
        ..TestConfig::default()
    }
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".into()
    }
}

fn comparator_report(fit: &ComparatorFit, format: Format) -> String {
    match format {
        Format::Json => {
            let mut v = serde_json::to_value(fit).expect("serializable fit");
            if let Value::Object(m) = &mut v {
                m.insert("schema".into(), Value::from(1));
            }
            json(&v)
        }
        Format::Tsv => {
            let mut out = String::from("parameter\testimate\tse\twald_z\twald_p\n");
            for (k, name) in fit.names.iter().enumerate() {
                let (z, p) = if *name == fit.interest {
                    (
                        fit.wald_z.map_or("NA".into(), fmt_num),
                        fit.wald_p.map_or("NA".into(), fmt_num),
                    )
                } else {
                    ("NA".into(), "NA".into())
                };
                let _ = writeln!(
                    out,
                    "{name}\t{}\t{}\t{z}\t{p}",
                    fmt_num(fit.estimates[k]),
                    fmt_num(fit.se[k])
                );
            }
            out
        }
    }
}

fn cmd_test(a: TestArgs) -> Result<String, Failure> {
    let cols = CsvColumns {
        id: a.id,
        outcome: a.outcome,
        covariates: a.covariates,
        time: a.time,
    };
    let ds = load_csv(&a.input, &cols)?;
    if ds.dropped_rows() > 0 {
        eprintln!("dropped {} rows with missing values", ds.dropped_rows());
    }
    match a.method {
        MethodArg::Rank => {
            let cfg = test_config(&a.rank, 200, 10);
            let res = run_test(&ds, &cfg)?;
            let report = res.report(ds.covariate_names());
            Ok(match a.format {
                Format::Json => json(&report),
                Format::Tsv => {
                    let mut out = String::from(
                        "covariate\tbeta_hat\tp_one_sided\tp_two_sided\tci_low\tci_high\n",
                    );
                    for (k, name) in report.covariates.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{name}\t{}\t{}\t{}\t{}\t{}",
                            report.beta_hat[k],
                            report.p_one_sided[k],
                            report.p_two_sided[k],
                            report.ci95[k][0],
                            report.ci95[k][1]
                        );
                    }
                    out
                }
            })
        }
        MethodArg::Tobit | MethodArg::Logistic => {
            let cfg = FitConfig {
                nodes: a.nodes,
                ..FitConfig::default()
            };
            let fit = if a.method == MethodArg::Tobit {
                fit_tobit(&ds, &cfg, None)?
            } else {
                fit_logistic(&ds, &cfg, None)?
            };
            if let Some(m) = &fit.message {
                eprintln!("warning: {m}");
            }
            Ok(comparator_report(&fit, a.format))
        }
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<String, Failure> {
    let cfg = ScenarioConfig::new(Scenario::from_number(a.scenario)?, a.n, a.beta1, a.gamma1);
    let ds = simulate_dataset(&cfg, a.seed)?;
    match a.out {
        Some(path) => {
            ds.save_csv(&path)?;
            Ok(String::new())
        }
        None => {
            let mut buf = Vec::new();
            ds.write_csv(&mut buf)?;
            Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
        }
    }
}

fn study_config(
    scenario: Scenario,
    n: usize,
    beta1: f64,
    gamma1: f64,
    s: &StudyArgs,
) -> Result<StudyConfig, Failure> {
    let mut cfg = StudyConfig::new(scenario, n, beta1, gamma1);
    cfg.methods = parse_methods(&s.methods)?;
    cfg.alpha = s.alpha;
    cfg.seed = s.rank.seed;
    cfg.test = test_config(&s.rank, 101, 5);
    Ok(cfg)
}

fn study_report(res: &StudyResult, format: Format) -> String {
    match format {
        Format::Json => json(res),
        Format::Tsv => res.to_tsv(),
    }
}

fn cmd_power(a: PowerArgs) -> Result<String, Failure> {
    let mut cfg = study_config(
        Scenario::from_number(a.scenario)?,
        a.n,
        a.beta1,
        a.gamma1,
        &a.study,
    )?;
    cfg.reps = a.reps;
    Ok(study_report(&power_study(&cfg)?, a.study.format))
}

fn parse_drop(s: &str) -> Result<(String, f64), Failure> {
    let (city, date) = s
        .rsplit_once('@')
        .ok_or_else(|| Failure::Usage(format!("--drop expects CITY@YYYY-MM-DD, got `{s}`")))?;
    Ok((city.to_string(), day_of(date)?))
}

fn cmd_rain(a: RainArgs) -> Result<String, Failure> {
    let drops = a
        .drop
        .iter()
        .map(|s| parse_drop(s))
        .collect::<Result<Vec<_>, _>>()?;
    let cols = RainfallColumns {
        city: a.city_col,
        date: a.date_col,
        outcome: a.outcome_col,
        treated: a.treated,
    };
    let mut daily = load_rainfall_csv(&a.input, &cols)?;
    if !drops.is_empty() {
        let before = daily.n_obs();
        daily = daily.filter(|o| {
            !drops
                .iter()
                .any(|(c, d)| *c == o.subject_id && o.time == Some(*d))
        })?;
        eprintln!(
            "dropped {} of {} daily records",
            before - daily.n_obs(),
            before
        );
    }
    let weeks = group_city_weeks(&daily, a.week_len)?;
    eprintln!(
        "{} city-weeks from {} daily records",
        weeks.n_subjects(),
        weeks.n_obs()
    );
    let cfg = study_config(Scenario::One, 0, 0.0, 0.0, &a.study)?;
    Ok(study_report(
        &rainfall_study(&weeks, a.weeks, a.draws, &cfg)?,
        a.study.format,
    ))
}

fn run(cli: Cli) -> Result<String, Failure> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot start thread pool: {e}")))?;
    }
    match cli.command {
        Command::Test(a) => cmd_test(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::PowerStudy(a) => cmd_power(a),
        Command::Rain(a) => cmd_rain(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            if stdout
                .write_all(out.as_bytes())
                .and_then(|_| stdout.flush())
                .is_err()
            {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("error: {m}"),
                Failure::Lib(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}
