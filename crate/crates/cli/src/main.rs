mod table;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use multibt::ingest::{self, load_system_json, IngestError};
use multibt::report::{self, FittedModel, GridSize, PairSelection};
use multibt::{
    aggregate, collapse, fit_mle, gaussian_approximation, hmc_sample, parse_games_csv, sample_gaussian, CollapseMap,
    CountsMatrix, FitError, FitOptions, HmcConfig, HmcError, OutcomeSystem,
};

/// Ratings for games with multiple outcomes (wins, ties, overtime results).
#[derive(Parser)]
#[command(name = "multibt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit strengths by maximum likelihood, with Gaussian uncertainties.
    Fit(FitArgs),
    /// Draw posterior samples.
    Sample(SampleArgs),
    /// Tabulate outcome probabilities from a fitted model.
    Predict(PredictArgs),
    /// Write summaries and density grids for plotting.
    Report(ReportArgs),
}

#[derive(Args)]
struct DataArgs {
    /// bt, davidson, four-outcome, ccha, or custom:<outcome-system.json>
    #[arg(long)]
    model: Option<String>,
    /// Games CSV: team_i,team_j,outcome[,date]
    #[arg(long, conflicts_with = "counts")]
    games: Option<PathBuf>,
    /// Counts JSON
    #[arg(long)]
    counts: Option<PathBuf>,
    /// Collapse four-outcome input onto win/loss or win/tie/loss.
    #[arg(long, value_enum)]
    collapse: Option<Collapse>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Collapse {
    Wl,
    Wtl,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Write the fitted model as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = FitOptions::default().tol)]
    tol: f64,
    #[arg(long, default_value_t = FitOptions::default().max_iter)]
    max_iter: usize,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Gaussian,
    Hmc,
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fitted-model JSON to sample the Gaussian approximation from, instead of refitting.
    #[arg(long, conflicts_with_all = ["games", "counts"])]
    fit: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    /// Total draws (gaussian) or draws per chain (hmc).
    #[arg(long)]
    draws: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = HmcConfig::default().chains)]
    chains: usize,
    #[arg(long, default_value_t = HmcConfig::default().warmup)]
    warmup: usize,
    /// Samples CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// HMC diagnostics JSON; defaults to <out>.diagnostics.json, or stderr.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    fit: PathBuf,
    /// `all` or `<team>,<team>`
    #[arg(long, default_value = "all")]
    pairs: String,
    /// Probability of winning a game played to a decision.
    #[arg(long)]
    playoff: bool,
    /// Average over these posterior samples instead of using the estimate.
    #[arg(long)]
    posterior: Option<PathBuf>,
    /// Write full-precision predictions as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "all")]
    pairs: String,
    #[arg(long, default_value_t = GridSize::default().points_1d)]
    grid_points: usize,
    #[arg(long, default_value_t = GridSize::default().points_2d)]
    grid_points_2d: usize,
}

/// Failures, by exit code.
enum Failure {
    Input(anyhow::Error),
    Degenerate(String),
    NotConverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Degenerate(_) => 2,
            Self::NotConverged(_) => 3,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Self::Input(e)
    }
}

impl From<FitError> for Failure {
    fn from(e: FitError) -> Self {
        match e {
            FitError::Degenerate(d) => Self::Degenerate(format!("degenerate data: {d}")),
            FitError::NotConverged { .. } => Self::NotConverged(e.to_string()),
            other => Self::Input(other.into()),
        }
    }
}

impl From<HmcError> for Failure {
    fn from(e: HmcError) -> Self {
        match e {
            HmcError::Degenerate(d) => Self::Degenerate(format!("degenerate data: {d}")),
            other => Self::Input(other.into()),
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Self::Input(e.into())
            }
        }
    )*};
}

input_error!(IngestError, report::ReportError, multibt::LaplaceError, std::io::Error);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e:#}"),
                Failure::Degenerate(m) | Failure::NotConverged(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> anyhow::Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn parse_model(spec: &str) -> anyhow::Result<OutcomeSystem> {
    if let Some(file) = spec.strip_prefix("custom:") {
        let path = Path::new(file);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
        return Ok(load_system_json(&read(path)?, name)?);
    }
    OutcomeSystem::builtin(spec)
        .ok_or_else(|| anyhow!("unknown model `{spec}`: expected bt, davidson, four-outcome, ccha or custom:<file>"))
}

/// Reads games or counts and returns them in the requested model's outcomes.
fn load_data(data: &DataArgs) -> Result<(OutcomeSystem, CountsMatrix), Failure> {
    let model = data.model.as_deref().ok_or_else(|| anyhow!("--model is required"))?;
    let system = parse_model(model)?;
    let source_system = if data.collapse.is_some() {
        OutcomeSystem::four_outcome()
    } else {
        system.clone()
    };
    let counts = match (&data.games, &data.counts) {
        (Some(path), None) => {
            let records = parse_games_csv(&read(path)?, &source_system)?;
            aggregate(&records, &source_system, None)?
        }
        (None, Some(path)) => ingest::load_counts_json(&read(path)?)?,
        _ => return Err(anyhow!("exactly one of --games or --counts is required").into()),
    };
    let counts = match data.collapse {
        Some(c) => {
            if counts.system().labels().ne(source_system.labels()) {
                return Err(anyhow!("--collapse needs four-outcome input, got `{}`", counts.system().name()).into());
            }
            let map = match c {
                Collapse::Wl => CollapseMap::four_to_win_loss(),
                Collapse::Wtl => CollapseMap::four_to_win_tie_loss(),
            };
            collapse(&counts, &map, &system)?
        }
        None => counts,
    };
    if counts.system().labels().ne(system.labels()) {
        return Err(anyhow!(
            "data use outcome system `{}` but --model is `{}`; use --collapse to convert four-outcome data",
            counts.system().name(),
            system.name()
        )
        .into());
    }
    Ok((system, counts))
}

fn opt(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|x| Some(*x)).collect()
}

fn cmd_fit(args: FitArgs) -> Result<(), Failure> {
    let (system, counts) = load_data(&args.data)?;
    let opts = FitOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..FitOptions::default()
    };
    let fit = fit_mle(&system, &counts, &opts)?;
    let post = if fit.converged {
        Some(gaussian_approximation(&system, &counts, &fit)?)
    } else {
        None
    };
    let model = FittedModel::new(&system, &counts, &fit, post.as_ref());
    if let Some(out) = &args.out {
        write(out, &(model.to_json() + "\n"))?;
    }

    let teams = counts.teams();
    let mut header = vec!["lambda"];
    let mut cols = vec![opt(&fit.params.lambda)];
    if let Some(sd) = &model.sd {
        header.push("sd");
        cols.push(opt(&sd[..teams.len()]));
    }
    let mut out = table::column(&format!("model: {}", system.name()), &header, teams, &cols);
    if let Some(tau) = model.tau {
        let sd = model.sd.as_ref().map(|s| format!(" (sd {:.2})", s[teams.len()])).unwrap_or_default();
        let _ = writeln!(
            out,
            "tau {tau:.2}{sd}; even-match overtime probability {:.2}",
            multibt::even_match_overtime_prob(&system, tau)
        );
    }
    if let Some(rho) = &model.correlation {
        let mut names = teams.to_vec();
        if model.tau.is_some() {
            names.push("tau".to_string());
        }
        let rows: Vec<Vec<Option<f64>>> = rho.iter().map(|r| opt(r)).collect();
        out.push('\n');
        out.push_str(&table::matrix("correlation", &names, &rows));
    }
    if let Some(theta) = &model.theta {
        for label in system.labels() {
            out.push('\n');
            out.push_str(&table::matrix(&format!("theta^{label}(row, column)"), teams, &theta[label]));
        }
    }
    emit(&out)?;
    if !fit.converged {
        return Err(Failure::NotConverged(format!(
            "fit did not converge after {} iterations (max residual {:e})",
            fit.iterations, fit.max_residual
        )));
    }
    Ok(())
}

fn cmd_sample(args: SampleArgs) -> Result<(), Failure> {
    if args.draws == 0 {
        return Err(anyhow!("--draws must be at least 1").into());
    }
    let (samples, diagnostics) = match args.method {
        Method::Gaussian => {
            let post = match &args.fit {
                Some(path) => FittedModel::from_json(&read(path)?)?.gaussian_posterior()?,
                None => {
                    let (system, counts) = load_data(&args.data)?;
                    let fit = fit_mle(&system, &counts, &FitOptions::default())?;
                    fit.require_converged()?;
                    gaussian_approximation(&system, &counts, &fit)?
                }
            };
            (sample_gaussian(&post, args.draws, args.seed), None)
        }
        Method::Hmc => {
            if args.fit.is_some() {
                return Err(anyhow!("--method hmc needs the game data (--games or --counts), not --fit").into());
            }
            let (system, counts) = load_data(&args.data)?;
            let config = HmcConfig {
                chains: args.chains,
                warmup: args.warmup,
                draws_per_chain: args.draws,
                seed: args.seed,
                ..HmcConfig::default()
            };
            let (samples, diag) = hmc_sample(&system, &counts, &config)?;
            (samples, Some(diag))
        }
    };
    let csv = report::write_samples_csv(&samples);
    match &args.out {
        Some(path) => write(path, &csv)?,
        None => emit(&csv)?,
    }
    if let Some(diag) = diagnostics {
        let json = serde_json::to_string_pretty(&diag).context("serializing diagnostics")? + "\n";
        let target = args.diagnostics.clone().or_else(|| {
            args.out.as_ref().map(|p| {
                let mut name = p.file_stem().unwrap_or_default().to_os_string();
                name.push(".diagnostics.json");
                p.with_file_name(name)
            })
        });
        match target {
            Some(path) => write(&path, &json)?,
            None => eprint!("{json}"),
        }
        if diag.non_convergence {
            return Err(Failure::NotConverged(format!(
                "chains have not mixed: max R-hat {:?} exceeds {}",
                diag.convergence.as_ref().and_then(|c| c.max_rhat()),
                multibt::hmc::RHAT_THRESHOLD
            )));
        }
    }
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<(), Failure> {
    let model = FittedModel::from_json(&read(&args.fit)?)?;
    let system = model.outcome_system()?;
    let pairs = PairSelection::parse(&args.pairs)?.resolve(&model.teams)?;
    let preds = match &args.posterior {
        Some(path) => {
            let samples = report::read_samples_csv(&read(path)?)?;
            if samples.teams != model.teams {
                return Err(report::ReportError::TeamMismatch {
                    samples: samples.teams,
                    fit: model.teams,
                }
                .into());
            }
            report::predict_posterior(&system, &samples, &pairs, args.playoff)?
        }
        None => report::predict_at(&system, &model.teams, &model.params(), &pairs, args.playoff)?,
    };
    if let Some(out) = &args.out {
        write(out, &(serde_json::to_string_pretty(&preds).context("serializing predictions")? + "\n"))?;
    }
    emit(&table::predictions(&preds))?;
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<(), Failure> {
    let model = FittedModel::from_json(&read(&args.fit)?)?;
    let samples = report::read_samples_csv(&read(&args.samples)?)?;
    let pairs = PairSelection::parse(&args.pairs)?.resolve(&model.teams)?;
    let grid = GridSize {
        points_1d: args.grid_points,
        points_2d: args.grid_points_2d,
    };
    let bundle = report::build_report(&model, &samples, &pairs, grid)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let mut listing = String::new();
    for (name, contents) in bundle.files() {
        let path = args.out_dir.join(&name);
        write(&path, &contents)?;
        let _ = writeln!(listing, "{}", path.display());
    }
    emit(&listing)?;
    Ok(())
}
