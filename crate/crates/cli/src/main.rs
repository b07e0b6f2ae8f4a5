use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use longace_core::datagen::{
    ground_truth_ace, load_dataset, scaled_intervention_grid, Dataset, InterventionPlan, Setup,
};
use longace_core::deepace::{estimate_ace, load_checkpoint, save_checkpoint, train, ModelConfig};
use longace_core::experiment::{
    cmd_bench, cmd_generate, cmd_report, cmd_tune, run_estimator, write_report, EstimatorKind, ExperimentConfig,
    TuneResult,
};
use longace_core::seed::derive_seed;
use longace_core::Error;

/// Time-varying average causal effects from longitudinal data.
#[derive(Parser, Debug)]
#[command(name = "longace", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Parallel jobs.
    #[arg(long, global = true, env = "LONGACE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset and write its CSV and noise sidecar.
    Generate {
        /// File name inside the output directory.
        #[arg(long, default_value = "dataset.csv")]
        name: String,
    },
    /// Random search over model hyperparameters.
    Tune {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, default_value_t = 1)]
        setup: usize,
        /// Overrides `tune.n_iter`.
        #[arg(long)]
        n_iter: Option<usize>,
    },
    /// Train the two arms of a setup, or one arm for an explicit plan.
    Train {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, default_value_t = 1, conflicts_with = "plan")]
        setup: usize,
        /// Treatment plan as a bit string, e.g. `1110000`.
        #[arg(long)]
        plan: Option<String>,
        /// Model configuration or tuning result (JSON).
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Estimate the effect of one setup on a dataset.
    Estimate {
        #[arg(long, value_name = "CSV")]
        data: PathBuf,
        #[arg(long, default_value = "iterative_gcomp")]
        estimator: String,
        #[arg(long, default_value_t = 1)]
        setup: usize,
        /// Trained treated arm; requires `--arm-b`.
        #[arg(long, value_name = "PATH", requires = "arm_b")]
        arm_a: Option<PathBuf>,
        /// Trained control arm; requires `--arm-a`.
        #[arg(long, value_name = "PATH", requires = "arm_a")]
        arm_b: Option<PathBuf>,
        /// Model configuration or tuning result (JSON).
        #[arg(long, value_name = "PATH")]
        model: Option<PathBuf>,
    },
    /// Run the configured sweep and write `report.json` and `report.txt`.
    Bench,
    /// Print the table of a stored report.
    Report {
        /// `report.json` or the directory holding it.
        path: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Toml(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other),
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            other => other.into(),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out = Some(out.clone());
    }
    if common.jobs.is_some() {
        cfg.jobs = common.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(io_error(dir, e)))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(Error::from)? + "\n";
    std::fs::write(path, text).map_err(|e| Failure::Runtime(io_error(path, e)))
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn setup_for(data: &Dataset, id: usize) -> Result<Setup, Failure> {
    if !(1..=3).contains(&id) {
        return Err(Failure::Usage(format!("setup ids are 1..=3, got {id}")));
    }
    Ok(scaled_intervention_grid(data.horizon).swap_remove(id - 1))
}

/// Reads either a bare model configuration or a tuning result.
fn model_config(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<ModelConfig, Failure> {
    let Some(path) = path else {
        return Ok(cfg.deepace.clone());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(io_error(path, e).to_string()))?;
    let model = match serde_json::from_str::<TuneResult>(&text) {
        Ok(tuned) => tuned.best,
        Err(_) => serde_json::from_str::<ModelConfig>(&text)
            .map_err(|e| Failure::Usage(format!("{}: not a model configuration: {e}", path.display())))?,
    };
    model.validate_for_training()?;
    Ok(model)
}

fn run(cli: Cli) -> Outcome {
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Generate { name } => {
            let mut dgp = cfg.dgp.clone();
            if let Some(seed) = cli.common.seed {
                dgp.seed = seed;
            }
            let path = out_dir(&cfg).join(name);
            let data = cmd_generate(&dgp, &path)?;
            println!(
                "wrote {} ({} patients, T = {}, p = {})",
                path.display(),
                data.len(),
                data.horizon,
                data.p
            );
        }
        Command::Tune { data, setup, n_iter } => {
            let data = load_dataset(&data)?;
            let setup = setup_for(&data, setup)?;
            let n_iter = n_iter.unwrap_or(cfg.tune.n_iter);
            let result = cmd_tune(
                &data,
                &setup.treated,
                &cfg.deepace,
                n_iter,
                cfg.tune.train_fraction,
                derive_seed(cfg.seed, &format!("tune/{}", setup.id)),
            )?;
            let path = out_dir(&cfg).join("tune.json");
            write_json(&path, &serde_json::to_value(&result).map_err(Error::from)?)?;
            println!("{}", serde_json::to_string_pretty(&result.best).map_err(Error::from)?);
        }
        Command::Train {
            data,
            setup,
            plan,
            model,
        } => {
            let data = load_dataset(&data)?;
            let model = model_config(&cfg, model.as_deref())?;
            let dir = out_dir(&cfg);
            let arms: Vec<(InterventionPlan, &str)> = match plan {
                Some(bits) => {
                    let plan = InterventionPlan::from_bits(&bits).map_err(|e| Failure::Usage(e.to_string()))?;
                    vec![(plan, "checkpoint.json")]
                }
                None => {
                    let s = setup_for(&data, setup)?;
                    vec![(s.treated, "arm_a.json"), (s.control, "arm_b.json")]
                }
            };
            for (plan, file) in arms {
                let seed = derive_seed(cfg.seed, &format!("train/{}", plan.to_bits()));
                let fitted = train(&data, &plan, &model.clone().with_seed(seed))?;
                let path = dir.join(file);
                save_checkpoint(&fitted, &path)?;
                let last = fitted.history.last().map_or(f64::NAN, |l| l.total);
                println!(
                    "wrote {} (plan {}, final loss {last:.6})",
                    path.display(),
                    plan.to_bits()
                );
            }
        }
        Command::Estimate {
            data,
            estimator,
            setup,
            arm_a,
            arm_b,
            model,
        } => {
            let kind: EstimatorKind = estimator.parse()?;
            let data = load_dataset(&data)?;
            let setup = setup_for(&data, setup)?;
            let psi_true = if data.noise.is_some() {
                Some(ground_truth_ace(
                    &data,
                    setup.treated.as_slice(),
                    setup.control.as_slice(),
                )?)
            } else {
                None
            };
            let psi = match (arm_a, arm_b) {
                (Some(a), Some(b)) => {
                    if !kind.uses_network() {
                        return Err(Failure::Usage(format!(
                            "--arm-a/--arm-b need a network estimator, got {kind}"
                        )));
                    }
                    estimate_ace(&load_checkpoint(&a)?, &load_checkpoint(&b)?, &data)?.psi
                }
                _ => {
                    if kind == EstimatorKind::Oracle && psi_true.is_none() {
                        return Err(Failure::Runtime(Error::MissingNoise(
                            "the oracle needs the dataset's noise sidecar".into(),
                        )));
                    }
                    let model = model_config(&cfg, model.as_deref())?;
                    let seed = derive_seed(cfg.seed, &format!("estimate/{kind}/{}", setup.id));
                    run_estimator(kind, &data, &setup, &cfg, &model, seed, psi_true.unwrap_or(f64::NAN))?
                }
            };
            let record = json!({
                "estimator": kind.name(),
                "setup": setup.id,
                "psi_hat": psi,
                "psi_true": psi_true,
                "abs_err": psi_true.map(|t| (psi - t).abs()),
            });
            if cli.common.out.is_some() || cfg.out.is_some() {
                write_json(&out_dir(&cfg).join("estimate.json"), &record)?;
            }
            println!("{}", serde_json::to_string_pretty(&record).map_err(Error::from)?);
        }
        Command::Bench => {
            let report = cmd_bench(&cfg)?;
            let (json_path, _) = write_report(&report, &out_dir(&cfg))?;
            let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
            print!("{}", report.render_table());
            eprintln!(
                "wrote {} ({} runs, {failed} failed)",
                json_path.display(),
                report.runs.len()
            );
        }
        Command::Report { path } => {
            let path = if path.is_dir() { path.join("report.json") } else { path };
            print!("{}", cmd_report(&path)?);
        }
    }
    Ok(())
}
