use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dualgrasp_core::fields::{ante_linear_field, AnteFieldParams};
use dualgrasp_core::harness::{predictor_for, run_suite, summary_table, write_episode, write_suite};
use dualgrasp_core::predictor::fit_from_config;
use dualgrasp_core::sim::{run_episode, Outcome};
use dualgrasp_core::{Config, Mode, RbfModel, Variant};
use nalgebra::Vector2;

/// Dual-arm impact-aware grasping: simulation, predictor fitting and
/// comparison runs.
#[derive(Parser)]
#[command(name = "dualgrasp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single episodes.
    #[command(subcommand)]
    Sim(SimCommand),
    /// Post-impact velocity predictor.
    #[command(subcommand)]
    Predictor(PredictorCommand),
    /// Reference fields.
    #[command(subcommand)]
    Fields(FieldsCommand),
    /// Three-variant comparison.
    #[command(subcommand)]
    Suite(SuiteCommand),
    /// Configuration files.
    #[command(subcommand)]
    Config(ConfigCommand),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<Config> {
        match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(Config::default()),
        }
    }
}

#[derive(Subcommand)]
enum SimCommand {
    /// Runs one episode and writes its log, metadata and figures.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        /// proposed, no-impact-map or no-interim; overrides the config scenario.
        #[arg(long)]
        variant: Option<Variant>,
        /// rigid or flexible; overrides the config scenario.
        #[arg(long)]
        mode: Option<Mode>,
        /// Saved predictor model; fitted from the config when omitted.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PredictorCommand {
    /// Runs the offline impact simulations and saves the fitted model.
    Fit {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum FieldsCommand {
    /// Samples the pre-impact velocity field of both arms on a grid (CSV).
    Sample {
        #[command(flatten)]
        config: ConfigArg,
        /// Grid spacing (m).
        #[arg(long, default_value_t = 0.02)]
        step: f64,
        /// Half extents of the sampled rectangle around the box estimate (m).
        #[arg(long, num_args = 2, value_names = ["X", "Y"], default_values_t = [0.6, 0.4])]
        extent: Vec<f64>,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum SuiteCommand {
    /// Runs the config scenario under every variant and writes a summary.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ConfigCommand {
    /// Writes the built-in defaults as TOML.
    Default {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn sim_run(
    config: Config,
    variant: Option<Variant>,
    mode: Option<Mode>,
    model: Option<&Path>,
    out: &Path,
) -> Result<bool> {
    let mut scenario = config.scenario.clone();
    scenario.variant = variant.unwrap_or(scenario.variant);
    scenario.mode = mode.unwrap_or(scenario.mode);
    let predictor = predictor_for(&config, std::slice::from_ref(&scenario), model)?;
    let log = run_episode(&config, &scenario, predictor)?;
    write_episode(out, &config, &scenario, &log)?;
    match &log.outcome {
        Outcome::Success { t } => println!("{} {}: success at t = {t:.3} s", scenario.variant, scenario.mode),
        Outcome::Horizon => println!(
            "{} {}: horizon reached without success",
            scenario.variant, scenario.mode
        ),
        Outcome::Fault { t, message } => {
            eprintln!(
                "{} {}: fault at t = {t:.3} s: {message}",
                scenario.variant, scenario.mode
            );
            return Ok(false);
        }
    }
    Ok(true)
}

fn predictor_fit(config: Config, out: &Path) -> Result<bool> {
    let (model, failed) = fit_from_config(&config)?;
    for (y, e) in &failed {
        eprintln!("offline run at offsets {y:?} failed: {e}");
    }
    create_parent(out)?;
    model.save(out)?;
    println!(
        "fitted {} samples (rho = {}, max node residual {:.2e}) -> {}",
        model.samples.len(),
        model.rho,
        model.fit_residual(),
        out.display()
    );
    Ok(true)
}

fn fields_sample(config: Config, step: f64, extent: &[f64], out: &Path) -> Result<bool> {
    anyhow::ensure!(step > 0.0, "--step must be positive");
    let ante = AnteFieldParams::from_config(&config.fields, &config.box_params)?;
    // Tolerate ratios such as 0.3 / 0.1 landing just below an integer.
    let count = |e: f64| (e / step + 1e-9).floor() as i64;
    let (nx, ny) = (count(extent[0]), count(extent[1]));
    let mut w = csv::Writer::from_writer(vec![]);
    w.write_record(["robot", "x", "y", "vx", "vy", "singular"])?;
    for robot in 0..2 {
        for i in -nx..=nx {
            for j in -ny..=ny {
                let p = ante.p_b_est + Vector2::new(i as f64 * step, j as f64 * step);
                let f = ante_linear_field(&p, robot, &ante);
                w.write_record([
                    robot.to_string(),
                    p.x.to_string(),
                    p.y.to_string(),
                    f.v.x.to_string(),
                    f.v.y.to_string(),
                    f.singular.to_string(),
                ])?;
            }
        }
    }
    create_parent(out)?;
    std::fs::write(out, w.into_inner()?).with_context(|| format!("writing {}", out.display()))?;
    println!("{} samples -> {}", 2 * (2 * nx + 1) * (2 * ny + 1), out.display());
    Ok(true)
}

fn suite_run(config: Config, model: Option<&Path>, out: &Path) -> Result<bool> {
    let scenarios = config.scenario.comparison_suite();
    let predictor: Option<Arc<RbfModel>> = predictor_for(&config, &scenarios, model)?;
    let results = run_suite(&config, &scenarios, predictor);
    write_suite(out, &config, &results)?;
    print!("{}", summary_table(&results));
    let clean = results
        .iter()
        .all(|r| r.metrics.as_ref().is_some_and(|m| m.fault.is_none()));
    for r in &results {
        if let Err(e) = &r.log {
            eprintln!("{}: {e}", r.scenario.name);
        }
    }
    Ok(clean)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Sim(SimCommand::Run {
            config,
            variant,
            mode,
            model,
            out,
        }) => sim_run(config.load()?, variant, mode, model.as_deref(), &out),
        Command::Predictor(PredictorCommand::Fit { config, out }) => predictor_fit(config.load()?, &out),
        Command::Fields(FieldsCommand::Sample {
            config,
            step,
            extent,
            out,
        }) => fields_sample(config.load()?, step, &extent, &out),
        Command::Suite(SuiteCommand::Run { config, model, out }) => suite_run(config.load()?, model.as_deref(), &out),
        Command::Config(ConfigCommand::Default { out }) => {
            let text = Config::default().to_toml();
            match out {
                Some(p) => {
                    create_parent(&p)?;
                    std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
                }
                None => print!("{text}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
