use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use freqchoice::effects::model_covariates;
use freqchoice::effects::{average_effects, per_observation_effects, EffectsTable, Measure};
use freqchoice::estimate::{estimate, FitOptions, FitResult, GradientMode};
use freqchoice::simulate::{simulate_with_workers, SimulationConfig};
use freqchoice::{load_dataset, run_compare, Dataset, Error, ModelSpec, ParamSet};

const THREADS_ENV: &str = "FREQCHOICE_THREADS";

#[derive(Parser)]
#[command(name = "freqchoice", version, about = "Weekly-frequency choice models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradientArg {
    Analytic,
    Fd,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write the fit as JSON.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        /// Starting values as a parameter JSON document.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Null log-likelihood to use instead of fitting the null model.
        #[arg(long, allow_negative_numbers = true)]
        null_ll: Option<f64>,
        #[arg(long, default_value_t = 1)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, value_enum, default_value = "analytic")]
        gradient: GradientArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic dataset from a simulation config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Marginal effects of one covariate at a fitted model.
    Effects {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        covariate: String,
        /// Average over the sample instead of one row per observation.
        #[arg(long)]
        average: bool,
        /// Report Pr(x=1) - Pr(x=0) contrasts instead of derivatives.
        #[arg(long)]
        discrete: bool,
        /// Output file; `.json` selects JSON, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank fits on the same dataset by AIC.
    Compare {
        #[arg(required = true)]
        fits: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample-average effects of every model covariate, one row per
    /// (covariate, category), for bar charts.
    PlotData {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict to these covariates (repeatable).
        #[arg(long)]
        covariate: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    NotConverged(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::State(_) => Failure::NotConverged(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn workers() -> Result<usize, Failure> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Failure::Usage(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn load_fit(path: &Path) -> Result<FitResult, Failure> {
    FitResult::from_json(&read(path)?)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn load_data(path: &Path, spec: &ModelSpec) -> Result<Dataset, Failure> {
    let file =
        fs::File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(load_dataset(file, spec)?)
}

fn is_json(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn effects_csv(
    label_rows: &[(String, &EffectsTable)],
    categories: usize,
) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "covariate".into(), "measure".into()];
    header.extend((0..categories).map(|k| format!("p{k}")));
    let csv_err = |e: csv::Error| Failure::Data(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (label, t) in label_rows {
        let mut rec = vec![
            label.clone(),
            t.covariate.clone(),
            match t.measure {
                Measure::Derivative => "derivative".into(),
                Measure::DiscreteChange => "discrete_change".into(),
            },
        ];
        rec.extend(t.per_category.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    let workers = workers()?;
    match cli.command {
        Command::Estimate {
            data,
            spec,
            init,
            null_ll,
            starts,
            seed,
            max_iter,
            gradient,
            out,
        } => {
            if starts == 0 {
                return Err(Failure::Usage("--starts must be at least 1".into()));
            }
            let spec = ModelSpec::from_json(&read(&spec)?)?;
            let dataset = load_data(&data, &spec)?;
            let init: Option<ParamSet> = match init {
                Some(p) => Some(
                    serde_json::from_str(&read(&p)?)
                        .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
                ),
                None => None,
            };
            let options = FitOptions {
                max_iter,
                starts,
                seed,
                workers,
                gradient: match gradient {
                    GradientArg::Analytic => GradientMode::Analytic,
                    GradientArg::Fd => GradientMode::FiniteDifference,
                },
                compute_se: true,
            };
            let fit = estimate(&dataset, &spec, init.as_ref(), null_ll, &options)?;
            write(&out, &fit.to_json()?)?;
            for w in &fit.warnings {
                eprintln!("warning: {w}");
            }
            if !fit.converged {
                return Err(Failure::NotConverged(format!(
                    "no convergence after {} iterations; last iterate written to {}",
                    fit.iterations,
                    out.display()
                )));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { config, out } => {
            let config = SimulationConfig::from_json(&read(&config)?)?;
            let dataset = simulate_with_workers(&config, workers)?;
            write(&out, &dataset.to_csv_string()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Effects {
            fit,
            data,
            covariate,
            average,
            discrete,
            out,
        } => {
            let fit = load_fit(&fit)?;
            if !fit.converged {
                return Err(Failure::NotConverged("effects need a converged fit".into()));
            }
            let spec = fit.validated_spec()?;
            let dataset = load_data(&data, spec.spec())?;
            let measure = if discrete {
                Measure::DiscreteChange
            } else {
                Measure::Derivative
            };
            let tables: Vec<(String, EffectsTable)> = if average {
                vec![(
                    "average".into(),
                    average_effects(&spec, &fit.params, &dataset, &covariate, measure)?,
                )]
            } else if discrete {
                dataset
                    .observations()
                    .iter()
                    .enumerate()
                    .map(|(i, o)| {
                        freqchoice::effects::discrete_change_effects(
                            &spec,
                            &fit.params,
                            o,
                            &covariate,
                        )
                        .map(|t| ((i + 1).to_string(), t))
                    })
                    .collect::<freqchoice::Result<_>>()?
            } else {
                per_observation_effects(&spec, &fit.params, &dataset, &covariate)?
                    .into_iter()
                    .enumerate()
                    .map(|(i, t)| ((i + 1).to_string(), t))
                    .collect()
            };
            let text = if is_json(&out) {
                let only: Vec<&EffectsTable> = tables.iter().map(|(_, t)| t).collect();
                serde_json::to_string_pretty(&only).map_err(Error::from)?
            } else {
                let rows: Vec<(String, &EffectsTable)> =
                    tables.iter().map(|(l, t)| (l.clone(), t)).collect();
                effects_csv(&rows, spec.top_code() + 1)?
            };
            write(&out, &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { fits, out } => {
            let loaded = fits
                .iter()
                .map(|p| Ok((p.display().to_string(), load_fit(p)?)))
                .collect::<Result<Vec<_>, Failure>>()?;
            let table = run_compare(&loaded)?;
            write(&out, &table.to_csv_string()?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::PlotData {
            fit,
            data,
            covariate,
            out,
        } => {
            let fit = load_fit(&fit)?;
            if !fit.converged {
                return Err(Failure::NotConverged("effects need a converged fit".into()));
            }
            let spec = fit.validated_spec()?;
            let dataset = load_data(&data, spec.spec())?;
            let covariates = if covariate.is_empty() {
                model_covariates(&spec)
            } else {
                covariate
            };
            let mut w = csv::Writer::from_writer(Vec::new());
            let csv_err = |e: csv::Error| Failure::Data(e.to_string());
            w.write_record(["covariate", "category", "effect"])
                .map_err(csv_err)?;
            for c in &covariates {
                let t = average_effects(&spec, &fit.params, &dataset, c, Measure::Derivative)?;
                for (k, v) in t.per_category.iter().enumerate() {
                    w.write_record([c.clone(), k.to_string(), format!("{v:?}")])
                        .map_err(csv_err)?;
                }
            }
            let bytes = w.into_inner().map_err(|e| Failure::Data(e.to_string()))?;
            write(
                &out,
                &String::from_utf8(bytes).expect("csv output is UTF-8"),
            )?;
            Ok(ExitCode::SUCCESS)
        }
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
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
