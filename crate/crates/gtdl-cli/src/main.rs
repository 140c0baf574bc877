//! Command-line front end: fit, diagnose, select, simulate and curves.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use gtdl::diagnostics::{
    influence_analysis, nonparam_cumhaz, rq_residuals, FlagRule, ResidualOptions,
};
use gtdl::estimate::{fit, FitOptions};
use gtdl::model::ParamVector;
use gtdl::selection::{run_selection, Candidate, CandidateSet, SelectionConfig};
use gtdl::simulation::{run_study, CovariateLaw, SimStudyConfig};
use gtdl_cli::config::{parse_categorical_flags, ModelConfig, RunConfig};
use gtdl_cli::curves::{self, CurveKind};
use gtdl_cli::loader::{load_csv, CovariateValues, LoadedData};
use gtdl_cli::report::{
    build_fit_report, emit_cumhaz, emit_fit_report, emit_influence_report, emit_residuals,
    emit_selection_trace, emit_sim_report, load_fit_report,
};

#[derive(Parser)]
#[command(
    name = "gtdl",
    about = "GTDL and GTDL gamma-frailty reliability regression for right-censored data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the data-driven subcommands; a TOML config file can supply
/// any of them, with explicit flags taking precedence.
#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row; missing cells are empty or NA
    #[arg(short, long)]
    input: PathBuf,
    /// Optional TOML run configuration ([data] and [model] tables)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for reports and plot data
    #[arg(short, long, default_value = "gtdl-out")]
    output_dir: PathBuf,
    /// Time column name
    #[arg(long)]
    time_col: Option<String>,
    /// Status column name (1 = failure, 0 = censored)
    #[arg(long)]
    status_col: Option<String>,
    /// Covariate for the x'beta block (repeatable)
    #[arg(long = "beta-cov")]
    beta_cov: Vec<String>,
    /// Covariate for the x*'alpha block (repeatable)
    #[arg(long = "alpha-cov")]
    alpha_cov: Vec<String>,
    /// Categorical covariate with its reference level, NAME=REF (repeatable)
    #[arg(long)]
    categorical: Vec<String>,
    /// Model kind: gtdl | frailty
    #[arg(long)]
    model: Option<String>,
    /// Confidence level for Wald intervals
    #[arg(long)]
    ci_level: Option<f64>,
    /// Seed for optimizer restarts and any simulation inside the command
    #[arg(long)]
    seed: Option<u64>,
}

impl DataArgs {
    fn run_config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(t) = &self.time_col {
            cfg.data.time_column = t.clone();
        }
        if let Some(s) = &self.status_col {
            cfg.data.status_column = s.clone();
        }
        if !self.beta_cov.is_empty() {
            cfg.data.beta_covariates = self.beta_cov.clone();
        }
        if !self.alpha_cov.is_empty() {
            cfg.data.alpha_covariates = self.alpha_cov.clone();
        }
        if !self.categorical.is_empty() {
            cfg.data.categorical = parse_categorical_flags(&self.categorical)?;
        }
        if let Some(m) = &self.model {
            cfg.model.kind = m.clone();
        }
        if let Some(l) = self.ci_level {
            cfg.model.ci_level = l;
        }
        if let Some(s) = self.seed {
            cfg.model.seed = s;
        }
        Ok(cfg)
    }

    fn fit_options(&self, model: &ModelConfig) -> FitOptions {
        FitOptions {
            ci_level: model.ci_level,
            seed: model.seed,
            ..FitOptions::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and emit fit_report.{json,csv}
    Fit(FitArgs),
    /// Fit, then residual and case-deletion influence diagnostics
    Diagnose(DiagnoseArgs),
    /// Two-step stepwise covariate selection plus the heterogeneity test
    Select(SelectArgs),
    /// Monte Carlo study of Bias/RMSE/SD/CP over a sample-size x censoring grid
    Simulate(SimulateArgs),
    /// Reliability / hazard / hazard-ratio / cure-fraction plot data
    Curves(CurvesArgs),
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Flag cases above mean + k * SD of each influence metric
    #[arg(long, default_value_t = 3.0)]
    influence_k: f64,
    /// Simulated samples behind the QQ envelope
    #[arg(long, default_value_t = 100)]
    envelope_sims: usize,
    /// Apply the conventional uniform randomization to censored residuals
    #[arg(long, default_value_t = false)]
    randomize_censored: bool,
    /// Also emit Nelson-Aalen log cumulative hazard curves grouped by this
    /// column (continuous columns are split at the median)
    #[arg(long)]
    cumhaz_group: Option<String>,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Significance level of the stepwise LR tests and the theta test
    #[arg(long, default_value_t = 0.10)]
    level: f64,
    /// Maximum stepwise additions per block
    #[arg(long, default_value_t = 20)]
    max_steps: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory
    #[arg(short, long, default_value = "gtdl-out")]
    output_dir: PathBuf,
    /// Model to simulate from and fit: gtdl | frailty
    #[arg(long, default_value = "gtdl")]
    model: String,
    /// True alpha coefficients, comma separated (intercept first)
    #[arg(long, default_value = "0.5", allow_hyphen_values = true)]
    true_alpha: String,
    /// True beta coefficients, comma separated (intercept first)
    #[arg(long, default_value = "-1,0.5", allow_hyphen_values = true)]
    true_beta: String,
    /// True frailty variance (frailty model only)
    #[arg(long)]
    true_theta: Option<f64>,
    /// Sample sizes, comma separated
    #[arg(long, default_value = "100,200,300")]
    sample_sizes: String,
    /// Censoring targets in (0,1), comma separated
    #[arg(long, default_value = "0.70,0.80,0.85")]
    censoring: String,
    /// Replicates per grid cell
    #[arg(long, default_value_t = 500)]
    replicates: usize,
    /// Confidence level behind the coverage probabilities
    #[arg(long, default_value_t = 0.95)]
    ci_level: f64,
    /// Seed (required; the study is deterministic given it)
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct CurvesArgs {
    /// fit_report.json produced by `gtdl fit` (the lossless channel)
    #[arg(long)]
    fit_report: PathBuf,
    /// The CSV the model was fitted to (profiles default to its medians)
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long, default_value = "gtdl-out")]
    output_dir: PathBuf,
    /// reliability | hazard | hazard_ratio | cure_surface
    #[arg(long)]
    kind: String,
    /// Explicit profile as NAME=VALUE pairs, comma separated (repeatable)
    #[arg(long = "profile")]
    profiles: Vec<String>,
    /// Pin covariates of the base profile (NAME=VALUE pairs, comma separated);
    /// applies to sweeps, quartile pairs and the default profile
    #[arg(long)]
    at: Option<String>,
    /// Sweep this continuous covariate from its observed min to max
    #[arg(long)]
    sweep: Option<String>,
    /// Number of sweep values
    #[arg(long, default_value_t = 5)]
    sweep_points: usize,
    /// Build two profiles at the first and third quartiles of this covariate
    #[arg(long)]
    quartiles: Option<String>,
    /// Upper end of the time grid (defaults to the largest observed time)
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long, default_value_t = 200)]
    t_points: usize,
}

fn parse_f64_list(s: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .with_context(|| format!("bad {what} value '{p}'"))
        })
        .collect()
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Fit(args) => cmd_fit(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Select(args) => cmd_select(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Curves(args) => cmd_curves(args),
    }
}

fn load(args: &DataArgs) -> anyhow::Result<(RunConfig, LoadedData)> {
    let cfg = args.run_config()?;
    let loaded = load_csv(&args.input, &cfg.data)?;
    if !loaded.dropped_rows.is_empty() {
        eprintln!(
            "dropped {} of {} rows with missing values among the configured columns",
            loaded.dropped_rows.len(),
            loaded.n_raw
        );
    }
    Ok((cfg, loaded))
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let (cfg, loaded) = load(&args.data)?;
    let kind = cfg.model.model_kind()?;
    let opts = args.data.fit_options(&cfg.model);
    let result = fit(kind, &loaded.dataset, &opts)?;
    if !result.converged {
        eprintln!("warning: fit did not meet the convergence criterion");
    }
    let report = build_fit_report(
        &result,
        &loaded.beta_columns,
        &loaded.alpha_columns,
        &loaded.dropped_rows,
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        &cfg.data,
        None,
    );
    emit_fit_report(&report, &args.data.output_dir)?;
    println!(
        "fitted {kind:?}: loglik {:.6}, n = {}, events = {} -> {}",
        result.loglik,
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        args.data.output_dir.join("fit_report.json").display()
    );
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> anyhow::Result<()> {
    let (cfg, loaded) = load(&args.data)?;
    let kind = cfg.model.model_kind()?;
    let opts = args.data.fit_options(&cfg.model);
    let result = fit(kind, &loaded.dataset, &opts)?;
    let report = build_fit_report(
        &result,
        &loaded.beta_columns,
        &loaded.alpha_columns,
        &loaded.dropped_rows,
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        &cfg.data,
        None,
    );
    emit_fit_report(&report, &args.data.output_dir)?;

    let res_opts = ResidualOptions {
        randomize_censored: args.randomize_censored,
        envelope_sims: args.envelope_sims.max(100),
        envelope_level: 0.95,
        seed: cfg.model.seed,
    };
    let residuals = rq_residuals(&result, &loaded.dataset, &res_opts)?;
    emit_residuals(
        &residuals,
        loaded.dataset.row_ids(),
        loaded.dataset.times(),
        loaded.dataset.status(),
        &args.data.output_dir,
    )?;

    let influence = influence_analysis(
        &result,
        &loaded.dataset,
        &opts,
        FlagRule {
            k: args.influence_k,
        },
    )?;
    for w in &influence.warnings {
        eprintln!("warning: {w}");
    }
    let names: Vec<String> = report.parameters.iter().map(|p| p.display_name()).collect();
    emit_influence_report(&influence, &names, &args.data.output_dir)?;

    if let Some(group_col) = &args.cumhaz_group {
        let labels = group_labels(&loaded, group_col)?;
        let curves = nonparam_cumhaz(&loaded.dataset, &labels)?;
        for c in curves.iter().filter(|c| c.empty) {
            eprintln!("warning: group '{}' has no events; curve is empty", c.label);
        }
        emit_cumhaz(&curves, &args.data.output_dir)?;
    }
    println!(
        "diagnostics written to {} (flagged cases: {:?})",
        args.data.output_dir.display(),
        influence.flagged_union
    );
    Ok(())
}

/// Group labels for the cumulative-hazard plot: category levels as-is,
/// continuous columns split at the median.
fn group_labels(loaded: &LoadedData, column: &str) -> anyhow::Result<Vec<String>> {
    match loaded.covariates.get(column) {
        Some(CovariateValues::Categorical { values, .. }) => Ok(values.clone()),
        Some(CovariateValues::Continuous(values)) => {
            let median = loaded.median(column)?;
            Ok(values
                .iter()
                .map(|&v| {
                    if v <= median {
                        format!("{column}<=median")
                    } else {
                        format!("{column}>median")
                    }
                })
                .collect())
        }
        None => bail!("cumhaz group column '{column}' is not among the configured covariates"),
    }
}

fn cmd_select(args: SelectArgs) -> anyhow::Result<()> {
    let (cfg, loaded) = load(&args.data)?;
    // candidates: each configured covariate as one block (categoricals enter
    // and leave as whole dummy blocks)
    let block = |names: &[String]| -> Vec<Candidate> {
        names
            .iter()
            .map(|name| match &loaded.covariates[name] {
                CovariateValues::Continuous(values) => {
                    Candidate::continuous(name.clone(), values.clone())
                }
                CovariateValues::Categorical {
                    levels,
                    reference,
                    values,
                } => {
                    let columns: Vec<Vec<f64>> = levels
                        .iter()
                        .filter(|l| *l != reference)
                        .map(|level| {
                            values
                                .iter()
                                .map(|v| if v == level { 1.0 } else { 0.0 })
                                .collect()
                        })
                        .collect();
                    Candidate::block(name.clone(), columns)
                }
            })
            .collect()
    };
    let set = CandidateSet {
        times: loaded.dataset.times().to_vec(),
        status: loaded.dataset.status().to_vec(),
        candidates_beta: block(&cfg.data.beta_covariates),
        candidates_alpha: block(&cfg.data.alpha_covariates),
    };
    let selection_config = SelectionConfig {
        alpha_level: args.level,
        max_steps: args.max_steps,
    };
    let opts = args.data.fit_options(&cfg.model);
    let outcome = run_selection(&set, &selection_config, &opts)?;
    emit_selection_trace(&outcome.trace, &args.data.output_dir)?;

    // fit report of the adopted model, with the trace attached
    let spec = &outcome.trace.final_spec;
    let expand = |names: &[String]| -> Vec<String> {
        names
            .iter()
            .flat_map(|name| match &loaded.covariates[name] {
                CovariateValues::Continuous(_) => vec![name.clone()],
                CovariateValues::Categorical {
                    levels, reference, ..
                } => levels
                    .iter()
                    .filter(|l| *l != reference)
                    .map(|l| format!("{name}={l}"))
                    .collect(),
            })
            .collect()
    };
    let mut final_config = cfg.data.clone();
    final_config.beta_covariates = spec.beta_covariates.clone();
    final_config.alpha_covariates = spec.alpha_covariates.clone();
    let report = build_fit_report(
        &outcome.final_fit,
        &expand(&spec.beta_covariates),
        &expand(&spec.alpha_covariates),
        &loaded.dropped_rows,
        loaded.dataset.n(),
        loaded.dataset.n_events(),
        &final_config,
        Some(outcome.trace.clone()),
    );
    emit_fit_report(&report, &args.data.output_dir)?;
    println!(
        "selected {:?} with beta covariates {:?} and alpha covariates {:?} -> {}",
        spec.kind,
        spec.beta_covariates,
        spec.alpha_covariates,
        args.data.output_dir.display()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let alpha = parse_f64_list(&args.true_alpha, "alpha")?;
    let beta = parse_f64_list(&args.true_beta, "beta")?;
    let true_params = match args.model.as_str() {
        "gtdl" => {
            if args.true_theta.is_some() {
                bail!("--true-theta only applies to the frailty model");
            }
            ParamVector::gtdl(alpha, beta)
        }
        "frailty" | "gtdl_frailty" => {
            ParamVector::frailty(alpha, beta, args.true_theta.unwrap_or(2.0))
        }
        other => bail!("unknown model '{other}'"),
    };
    let sample_sizes: Vec<usize> = args
        .sample_sizes
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .with_context(|| format!("bad sample size '{p}'"))
        })
        .collect::<anyhow::Result<_>>()?;
    let config = SimStudyConfig {
        covariate_law: CovariateLaw {
            beta_normal_cols: true_params.beta.len() - 1,
            alpha_normal_cols: true_params.alpha.len() - 1,
            shared: true,
        },
        sample_sizes,
        censoring_targets: parse_f64_list(&args.censoring, "censoring")?,
        n_replicates: args.replicates,
        ci_level: args.ci_level,
        seed: args.seed,
        true_params,
    };
    let report = run_study(&config)?;
    emit_sim_report(&report, &args.output_dir)?;
    println!(
        "simulation study ({} cells) written to {}",
        report.cells.len(),
        args.output_dir.display()
    );
    Ok(())
}

fn cmd_curves(args: CurvesArgs) -> anyhow::Result<()> {
    let report = load_fit_report(&args.fit_report)?;
    let loaded = load_csv(&args.input, &report.data_config)?;
    let kind = CurveKind::parse(&args.kind)?;
    let mut base = curves::default_profile(&loaded)?;
    if let Some(at) = &args.at {
        base = curves::apply_overrides(&loaded, &base, at)?;
        base.label = "profile".into();
    }

    let (profiles, grid) = match kind {
        CurveKind::CureSurface => {
            let name = args
                .sweep
                .clone()
                .context("cure_surface needs --sweep NAME over a continuous covariate")?;
            let (min, max) = loaded.min_max(&name)?;
            let points = args.sweep_points.max(2);
            let values: Vec<f64> = (0..points)
                .map(|k| min + (max - min) * k as f64 / (points - 1) as f64)
                .collect();
            let profiles: Vec<_> = values
                .iter()
                .map(|&v| curves::with_value(&base, &name, v))
                .collect();
            (profiles, values)
        }
        _ => {
            let mut profiles = Vec::new();
            if let Some(name) = &args.quartiles {
                let q1 = loaded.quantile(name, 0.25)?;
                let q3 = loaded.quantile(name, 0.75)?;
                profiles.push(curves::with_value(&base, name, q1));
                profiles.push(curves::with_value(&base, name, q3));
            }
            if let Some(name) = &args.sweep {
                let (min, max) = loaded.min_max(name)?;
                let points = args.sweep_points.max(2);
                for k in 0..points {
                    let v = min + (max - min) * k as f64 / (points - 1) as f64;
                    profiles.push(curves::with_value(&base, name, v));
                }
            }
            for spec in &args.profiles {
                profiles.push(curves::apply_overrides(&loaded, &base, spec)?);
            }
            if profiles.is_empty() {
                profiles.push(base.clone());
            }
            let t_max = args.t_max.unwrap_or_else(|| {
                loaded
                    .dataset
                    .times()
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max)
            });
            (profiles, curves::time_grid(t_max, args.t_points))
        }
    };

    let series = curves::evaluate(kind, &report, &loaded, &profiles, &grid)?;
    let path = curves::emit_curves(kind, &series, &args.output_dir)?;
    println!("curve data written to {}", path.display());
    Ok(())
}
