use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use log::info;
use mrsurv::data::{load_dataset, save_dataset, CONFIG_KEYS};
use mrsurv::error::ConfigError;
use mrsurv::estimate::{
    assign_folds, fit_arms_conditional, fit_arms_marginal, observed_w_points,
    write_conditional_csv, write_marginal_csv, Arm,
};
use mrsurv::exec::ExecMode;
use mrsurv::simulate::{
    dgp_by_name, generate, run_benchmark, truth_marginal, write_report, BenchmarkConfig,
    BenchmarkMode, Dgp,
};
use mrsurv::{verify, EstimatorKind, Result, RunConfig};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser, Debug)]
#[command(
    name = "mrsurv",
    version,
    about = "Multiply robust, G-computation and IPCW survival estimation"
)]
struct Cli {
    /// Cap on worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EstimatorArg {
    Mr,
    G,
    Ipcw,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Mr => EstimatorKind::Mr,
            EstimatorArg::G => EstimatorKind::G,
            EstimatorArg::Ipcw => EstimatorKind::Ipcw,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from a built-in design and write it as CSV.
    Simulate {
        #[arg(long, default_value = "trial")]
        dgp: String,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Also write a run configuration matching the generated columns.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit conditional (or marginal) survival estimates and write the estimate table.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config estimator list; repeatable.
        #[arg(long, value_enum, action = ArgAction::Append)]
        estimator: Vec<EstimatorArg>,
        /// Estimate the marginal survival probability.
        #[arg(long)]
        marginal: bool,
    },
    /// Monte Carlo marginal survival probability of a built-in design.
    Truth {
        #[arg(long, default_value = "trial")]
        dgp: String,
        #[arg(long, default_value_t = 60.0)]
        tau: f64,
        /// Number of latent draws.
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Brute-force checks of the identification identities on random discrete laws.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Replication benchmark over the standard estimator arms.
    Benchmark {
        #[arg(long, default_value = "trial")]
        dgp: String,
        /// Sample sizes; repeatable or comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [2000usize])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Benchmark the marginal estimand instead of the conditional curve.
        #[arg(long)]
        marginal: bool,
        /// Arm labels to run (default: all standard arms); comma separated.
        #[arg(long, value_delimiter = ',')]
        arms: Vec<String>,
        /// Additional evaluation times projected jointly with tau; comma separated.
        #[arg(long, value_delimiter = ',')]
        extra_taus: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 1_000_000)]
        truth_draws: usize,
        #[arg(long, default_value_t = 2000)]
        l2_points: usize,
        #[arg(long, default_value_t = 100_000)]
        l2_draws: usize,
        /// Output directory for replications.csv, summary.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn config_key_help() -> String {
    let width = CONFIG_KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::from("Run configuration keys (TOML):\n");
    for (key, desc) in CONFIG_KEYS {
        s.push_str(&format!("  {key:<width$}  {desc}\n"));
    }
    s
}

fn parse_cli() -> Cli {
    let keys = config_key_help();
    let matches = Cli::command()
        .after_help(keys.clone())
        .mut_subcommand("fit", |c| c.after_help(keys))
        .get_matches();
    Cli::from_arg_matches(&matches).unwrap_or_else(|e| e.exit())
}

fn dgp(name: &str) -> Result<Arc<dyn Dgp>> {
    dgp_by_name(name).ok_or_else(|| ConfigError::UnknownDgp(name.to_string()).into())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn trial_config(d: &dyn Dgp, seed: u64) -> Result<RunConfig> {
    let schedule = d.schedule();
    let schema = d.schema();
    let oracle = format!("oracle:{}", d.name());
    let toml = format!(
        "seed = {seed}\n\n[schedule]\nvisit_times = {:?}\nanchor = {}\ntau = {:?}\n\n[data]\nvisits = {:?}\n\n\
         [nuisance]\nevent = \"{oracle}\"\ncensor = \"{oracle}\"\n\n[regression]\ncolumns = {:?}\n",
        schedule.visit_times(),
        schedule.anchor() + 1,
        schedule.tau_grid(),
        schema.visits,
        schema.visits[schedule.anchor()],
    );
    RunConfig::from_toml_str(&toml)
}

fn cmd_simulate(name: &str, n: usize, seed: u64, out: &Path, config: Option<&Path>) -> Result<()> {
    let d = dgp(name)?;
    let data = generate(d.as_ref(), n, seed);
    save_dataset(&data, out)?;
    let events = data.records.iter().filter(|r| r.event).count();
    info!(
        "wrote {n} subjects from `{name}` to {} ({events} events)",
        out.display()
    );
    if let Some(path) = config {
        let cfg = trial_config(d.as_ref(), seed)?;
        std::fs::write(path, cfg.to_toml_string())?;
        info!("wrote matching run configuration to {}", path.display());
    }
    Ok(())
}

fn cmd_fit(
    data: &Path,
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    estimators: &[EstimatorArg],
    marginal: bool,
) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if !estimators.is_empty() {
        cfg.estimators = estimators.iter().map(|&e| e.into()).collect();
    }
    cfg.marginal |= marginal;
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let dataset = load_dataset(data, &cfg.data, &schedule)?;
    info!(
        "loaded {} subjects; anchor visit {} at t={}",
        dataset.len(),
        schedule.anchor() + 1,
        schedule.window_start(schedule.anchor())
    );

    let est = cfg.estimation_config(cfg.estimators[0])?;
    let arms = cfg
        .estimators
        .iter()
        .map(|&k| cfg.estimation_config(k).map(|c| Arm::from_config(&c)))
        .collect::<Result<Vec<_>>>()?;
    if est.folds > 1 {
        let mut sizes = vec![0usize; est.folds];
        for f in assign_folds(dataset.len(), est.folds, est.seed) {
            sizes[f] += 1;
        }
        info!(
            "cross-fitting with {} folds (seed {}), fold sizes {:?}",
            est.folds, est.seed, sizes
        );
    } else {
        info!("cross-fitting disabled; nuisances fitted on the full sample");
    }

    let mut writer = create(out)?;
    if cfg.marginal {
        let fits = fit_arms_marginal(&dataset, &arms, &est)?;
        for fit in &fits {
            info!(
                "{}: n at risk {}, trimmed censoring weights per tau {:?}",
                fit.label, fit.n_at_risk, fit.trim_counts
            );
        }
        write_marginal_csv(&fits, &mut writer)?;
    } else {
        let fits = fit_arms_conditional(&dataset, &arms, &est)?;
        for fit in &fits {
            info!(
                "{}: n at risk {}, trimmed censoring weights per tau {:?}",
                fit.label, fit.n_at_risk, fit.trim_counts
            );
        }
        let points = match &cfg.output.w_points {
            Some(p) => {
                if let Some(bad) = p.iter().find(|w| w.len() != est.basis.width()) {
                    return Err(ConfigError::Invalid(format!(
                        "output.w_points entry {bad:?} has {} values but regression.columns lists {}",
                        bad.len(),
                        est.basis.width()
                    ))
                    .into());
                }
                p.clone()
            }
            None => observed_w_points(&dataset, &est.basis),
        };
        write_conditional_csv(&fits, &cfg.regression.columns, &points, &mut writer)?;
    }
    writer.flush()?;
    info!("wrote estimates to {}", out.display());
    Ok(())
}

fn cmd_truth(name: &str, tau: f64, n: usize, seed: u64) -> Result<()> {
    if n == 0 {
        return Err(ConfigError::Invalid("--n must be positive".into()).into());
    }
    let d = dgp(name)?;
    let t = truth_marginal(d.as_ref(), tau, n, seed, ExecMode::Parallel);
    println!(
        "dgp={name} tau={tau} draws={} P(T>tau)={:.6} se={:.2e}",
        t.draws, t.value, t.se
    );
    Ok(())
}

fn cmd_verify(seed: u64) -> Result<bool> {
    let checks = verify::run_all(seed)?;
    print!("{}", verify::format_table(&checks));
    Ok(checks.iter().all(|c| c.passed()))
}

fn cmd_benchmark(config: BenchmarkConfig, out: &Path) -> Result<()> {
    dgp(&config.dgp)?;
    if config.ns.is_empty() || config.reps == 0 {
        return Err(ConfigError::Invalid(
            "benchmark needs at least one sample size and one replication".into(),
        )
        .into());
    }
    let report = run_benchmark(&config)?;
    std::fs::create_dir_all(out)?;
    write_report(&report, out)?;
    info!(
        "truth {:.5} (se {}); {:.1} s",
        report.truth,
        report
            .truth_se
            .map(|s| format!("{s:.1e}"))
            .unwrap_or_else(|| "-".into()),
        report.runtime_secs
    );
    for s in &report.summaries {
        info!(
            "{:<11} n={:<5} ok={:<4} fail={:<3} bias={:+.4} sd={:.4} coverage={} L2={}",
            s.arm,
            s.n,
            s.reps_ok,
            s.failures,
            s.bias,
            s.sd,
            s.coverage
                .map(|c| format!("{c:.3}"))
                .unwrap_or_else(|| "-".into()),
            s.mean_l2
                .map(|l| format!("{l:.4}"))
                .unwrap_or_else(|| "-".into()),
        );
    }
    info!("wrote report to {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(ConfigError::Invalid("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ConfigError::Invalid(format!("cannot configure thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate {
            dgp,
            n,
            seed,
            out,
            config,
        } => cmd_simulate(&dgp, n, seed, &out, config.as_deref()).map(|_| true),
        Command::Fit {
            data,
            config,
            out,
            seed,
            estimator,
            marginal,
        } => cmd_fit(&data, &config, &out, seed, &estimator, marginal).map(|_| true),
        Command::Truth { dgp, tau, n, seed } => cmd_truth(&dgp, tau, n, seed).map(|_| true),
        Command::Verify { seed } => cmd_verify(seed),
        Command::Benchmark {
            dgp,
            n,
            reps,
            seed,
            marginal,
            arms,
            extra_taus,
            folds,
            truth_draws,
            l2_points,
            l2_draws,
            out,
        } => {
            let mode = if marginal {
                BenchmarkMode::Marginal
            } else {
                BenchmarkMode::Conditional
            };
            let mut config = BenchmarkConfig::new(&dgp, mode, n, reps, seed);
            config.arms = arms;
            config.extra_taus = extra_taus;
            config.folds = folds;
            config.truth_draws = truth_draws;
            config.l2_points = l2_points;
            config.l2_draws = l2_draws;
            cmd_benchmark(config, &out).map(|_| true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(parse_cli()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: one or more identity checks failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(1))
        }
    }
}
