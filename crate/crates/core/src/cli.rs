//! Command-line front-end shared by the `dobrushin` binary and the tests.
//!
//! Every run writes a one-line `{"resolved_config": ...}` record to standard
//! error before doing any work; failures end with a one-line
//! `{"error": {...}}` record there too.

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ergodicity::{classify, ClassifyOptions, DEFAULT_FIXED_POINT_TOL, DEFAULT_N_CHECK, DEFAULT_N_MAX};
use crate::error::{Error, Result};
use crate::harness::{density_experiment, run_property_suite, tightness_experiment, ExperimentConfig};
use crate::io::{read_operator, to_csv, to_json};
use crate::operators::{delta_of_matrix, MarkovOperator, DEFAULT_DELTA_BUDGET};
use crate::perturbation::{stability_transfer, tightness_report, PerturbationOptions};
use crate::spaces::SpaceDescriptor;

#[derive(Parser, Debug)]
#[command(name = "dobrushin", version, about = "Ergodicity and perturbation analysis of Markov operators")]
pub struct Cli {
    /// Worker threads for parallel sections.
    #[arg(long, env = "DOBRUSHIN_THREADS", global = true)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,
    /// Write the artifact here instead of standard output.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Tightness,
    Density,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Multistart budget for sampled estimates off the classical space.
    #[arg(long, default_value_t = DEFAULT_DELTA_BUDGET)]
    pub delta_budget: usize,
    /// Upper bound on δ(T) vouched for by the caller; needs --attest.
    #[arg(long, requires = "attest")]
    pub delta_upper: Option<f64>,
    #[arg(long)]
    pub attest: bool,
}

impl Common {
    fn attested(&self) -> Result<Option<f64>> {
        match (self.delta_upper, self.attest) {
            (Some(_), false) => Err(Error::Precondition("--delta-upper needs --attest".into())),
            (b, _) => Ok(b),
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Classify an operator and report n0, the envelope and the fixed point.
    Analyze {
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_FIXED_POINT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_N_CHECK)]
        n_check: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Dobrushin coefficient of T, T^k or A_n(T).
    Delta {
        input: PathBuf,
        #[arg(long, conflicts_with = "cesaro")]
        power: Option<usize>,
        #[arg(long)]
        cesaro: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// All perturbation bounds for a pair with actual distances.
    Bounds {
        t: PathBuf,
        s: PathBuf,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Stability transfer from T to S at power m.
    Transfer {
        t: PathBuf,
        s: PathBuf,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Randomized invariant suite.
    Suite {
        /// classical:N, pcone:D:P or quantum:D
        #[arg(long, value_parser = parse_space)]
        space: SpaceDescriptor,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated subset of spaces,operators,ergodicity,perturbation.
        #[arg(long, value_delimiter = ',')]
        groups: Vec<String>,
        #[arg(long, default_value_t = 0.0)]
        mixing: f64,
        #[arg(long, default_value_t = DEFAULT_N_MAX)]
        n_max: usize,
        #[arg(long, default_value_t = 16)]
        horizon: usize,
        #[arg(long, default_value_t = 16)]
        delta_budget: usize,
        #[arg(long, default_value_t = 100)]
        openness_samples: usize,
        #[arg(long)]
        inject_fault: bool,
    },
    /// Tightness or density tables.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        /// JSON experiment config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_space)]
        space: Option<SpaceDescriptor>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        magnitudes: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        epsilons: Option<Vec<f64>>,
        #[arg(long)]
        n_max: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
    },
}

/// Parses `classical:N`, `pcone:D:P` or `quantum:D`.
pub fn parse_space(text: &str) -> std::result::Result<SpaceDescriptor, String> {
    let parts: Vec<&str> = text.split(':').collect();
    let int = |s: &str| s.parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
    let space = match parts.as_slice() {
        ["classical", n] => SpaceDescriptor::classical(int(n)?),
        ["pcone", d, p] => SpaceDescriptor::pcone(int(d)?, p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?),
        ["quantum", d] => SpaceDescriptor::quantum(int(d)?),
        _ => return Err(format!("expected classical:N, pcone:D:P or quantum:D, got {text:?}")),
    };
    space.map_err(|e| e.to_string())
}

/// Artifact text of a finished command.
struct Outcome {
    text: String,
}

fn render<T: Serialize, R: Serialize>(format: Format, value: &T, rows: impl FnOnce() -> Vec<R>) -> Result<Outcome> {
    let text = match format {
        Format::Json => to_json(value)? + "\n",
        Format::Csv => to_csv(&rows())?,
    };
    Ok(Outcome { text })
}

#[derive(Serialize)]
struct DeltaRow {
    value: f64,
    certified: bool,
    method: String,
    null_space_estimate: f64,
}

#[derive(Serialize)]
struct TransferRow {
    verdict: String,
    margin: f64,
    m: usize,
    delta_tm: f64,
    norm_tmsm: f64,
    rho: Option<f64>,
    bound_per62: Option<f64>,
    actual: Option<f64>,
    z0_residual: Option<f64>,
    iterations: Option<usize>,
    attested_delta_upper: Option<f64>,
}

#[derive(Serialize)]
struct SuiteRow<'a> {
    name: &'a str,
    group: &'a str,
    trials: usize,
    failures: usize,
    expected_failures: usize,
    worst_slack: Option<f64>,
}

fn resolved(cli: &Cli) -> Value {
    let cmd = match &cli.command {
        Command::Analyze { input, n_max, tol, n_check, common } => {
            json!({"subcommand": "analyze", "input": input, "n_max": n_max, "tol": tol, "n_check": n_check, "common": common})
        }
        Command::Delta { input, power, cesaro, common } => {
            json!({"subcommand": "delta", "input": input, "power": power, "cesaro": cesaro, "common": common})
        }
        Command::Bounds { t, s, m, horizon, n_max, tol, common } => {
            json!({"subcommand": "bounds", "t": t, "s": s, "m": m, "horizon": horizon, "n_max": n_max, "tol": tol, "common": common})
        }
        Command::Transfer { t, s, m, tol, common } => {
            json!({"subcommand": "transfer", "t": t, "s": s, "m": m, "tol": tol, "common": common})
        }
        Command::Suite { .. } | Command::Experiment { .. } => json!({"subcommand": subcommand_name(&cli.command)}),
    };
    json!({"threads": cli.threads, "format": cli.format, "output": cli.output, "command": cmd})
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Analyze { .. } => "analyze",
        Command::Delta { .. } => "delta",
        Command::Bounds { .. } => "bounds",
        Command::Transfer { .. } => "transfer",
        Command::Suite { .. } => "suite",
        Command::Experiment { .. } => "experiment",
    }
}

fn log_config(base: &Value, extra: Option<&ExperimentConfig>) {
    let mut v = base.clone();
    if let Some(cfg) = extra {
        v["command"]["config"] = serde_json::to_value(cfg).unwrap_or(Value::Null);
    }
    eprintln!("{}", json!({ "resolved_config": v }));
}

fn experiment_config(cmd: &Command) -> Result<ExperimentConfig> {
    let Command::Experiment { config, space, trials, seed, magnitudes, epsilons, n_max, horizon, .. } = cmd else {
        unreachable!("only called for experiments")
    };
    let mut cfg: ExperimentConfig = match config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Malformed(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = space {
        cfg.space = *v;
    }
    if let Some(v) = trials {
        cfg.trials = *v;
    }
    if let Some(v) = seed {
        cfg.seed = *v;
    }
    if let Some(v) = magnitudes {
        cfg.perturbation_magnitudes = v.clone();
    }
    if let Some(v) = epsilons {
        cfg.epsilons = v.clone();
    }
    if let Some(v) = n_max {
        cfg.n_max = *v;
    }
    if let Some(v) = horizon {
        cfg.horizon = *v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn operator(path: &PathBuf) -> Result<MarkovOperator> {
    let t = read_operator(path)?;
    if !t.validated() {
        return Err(Error::Precondition(format!(
            "{} is not a Markov operator: {}",
            path.display(),
            serde_json::to_string(t.validation_report())?
        )));
    }
    Ok(t)
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let base = resolved(cli);
    let format = cli.format;
    match &cli.command {
        Command::Analyze { input, n_max, tol, n_check, common } => {
            log_config(&base, None);
            let t = operator(input)?;
            let opts = ClassifyOptions {
                n_max: *n_max,
                tol: *tol,
                n_check: *n_check,
                delta_budget: common.delta_budget,
                seed: common.seed,
                delta_upper: common.attested()?,
                ..Default::default()
            };
            let report = classify(&t, &opts)?;
            render(format, &report, || report.trace.clone())
        }
        Command::Delta { input, power, cesaro, common } => {
            log_config(&base, None);
            let t = operator(input)?;
            let target = match (power, cesaro) {
                (Some(0), _) | (_, Some(0)) => return Err(Error::Precondition("--power and --cesaro need n >= 1".into())),
                (Some(k), _) => t.power(*k),
                (_, Some(n)) => t.cesaro(*n),
                _ => t,
            };
            let mut est = delta_of_matrix(target.matrix(), target.space(), common.delta_budget, common.seed);
            est.value = est.value.clamp(0.0, 1.0);
            let row = DeltaRow {
                value: est.value,
                certified: est.certified,
                method: format!("{:?}", est.method),
                null_space_estimate: est.null_space_estimate,
            };
            render(format, &est, || vec![row])
        }
        Command::Bounds { t, s, m, horizon, n_max, tol, common } => {
            log_config(&base, None);
            let (t, s) = (operator(t)?, operator(s)?);
            let opts = PerturbationOptions {
                m: *m,
                horizon: *horizon,
                n_max: *n_max,
                tol: *tol,
                delta_upper: common.attested()?,
                seed: common.seed,
                ..Default::default()
            };
            let report = tightness_report(&t, &s, &opts)?;
            render(format, &report, || report.per_n_rows())
        }
        Command::Transfer { t, s, m, tol, common } => {
            log_config(&base, None);
            let (t, s) = (operator(t)?, operator(s)?);
            let attested = common.attested()?;
            let opts = PerturbationOptions { tol: *tol, delta_upper: attested, seed: common.seed, ..Default::default() };
            let tr = stability_transfer(&t, &s, *m, &opts)?;
            let row = TransferRow {
                verdict: format!("{:?}", tr.verdict),
                margin: tr.margin,
                m: tr.m,
                delta_tm: tr.delta_tm,
                norm_tmsm: tr.norm_tmsm,
                rho: tr.rho,
                bound_per62: tr.bound_per62,
                actual: tr.actual,
                z0_residual: tr.z0_residual,
                iterations: tr.iterations,
                attested_delta_upper: attested,
            };
            let value = json!({"transfer": tr, "attested_delta_upper": attested});
            render(format, &value, || vec![row])
        }
        Command::Suite { space, trials, seed, groups, mixing, n_max, horizon, delta_budget, openness_samples, inject_fault } => {
            let cfg = ExperimentConfig {
                mixing: *mixing,
                n_max: *n_max,
                horizon: *horizon,
                delta_budget: *delta_budget,
                openness_samples: *openness_samples,
                inject_fault: *inject_fault,
                output_path: cli.output.as_ref().map(|p| p.display().to_string()),
                ..ExperimentConfig::new(*space, *trials, *seed)
            };
            let mut base = base;
            base["command"]["groups"] = json!(groups);
            log_config(&base, Some(&cfg));
            let groups: Vec<&str> = groups.iter().map(String::as_str).collect();
            let result = run_property_suite(&cfg, &groups)?;
            render(format, &result, || {
                result
                    .records
                    .iter()
                    .map(|r| SuiteRow {
                        name: &r.name,
                        group: &r.group,
                        trials: r.trials,
                        failures: r.failures,
                        expected_failures: r.expected_failures,
                        worst_slack: r.worst_slack,
                    })
                    .collect()
            })
        }
        Command::Experiment { kind, .. } => {
            let mut cfg = experiment_config(&cli.command)?;
            if let Some(p) = &cli.output {
                cfg.output_path = Some(p.display().to_string());
            }
            let mut base = base;
            base["command"]["kind"] = json!(kind);
            log_config(&base, Some(&cfg));
            match kind {
                ExperimentKind::Tightness => {
                    let table = tightness_experiment(&cfg)?;
                    render(format, &table, || table.rows.clone())
                }
                ExperimentKind::Density => {
                    let table = density_experiment(&cfg, &cfg.epsilons)?;
                    render(format, &table, || table.rows.clone())
                }
            }
        }
    }
}

fn report_error(e: &Error) -> i32 {
    eprintln!("{}", json!({"error": {"kind": e.kind(), "message": e.to_string(), "exit_status": e.exit_status()}}));
    i32::from(e.exit_status())
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status: 0 on success, 1 on precondition or certification
/// failures, 2 on malformed input or I/O errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            if code != 0 {
                eprintln!("{}", json!({"error": {"kind": "usage", "message": e.kind().to_string(), "exit_status": 2}}));
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => return report_error(&Error::Precondition(format!("thread pool: {e}"))),
    };
    let outcome = pool.install(|| dispatch(&cli));
    match outcome {
        Ok(out) => {
            let written = match &cli.output {
                Some(path) => fs::write(path, &out.text).map_err(Error::from),
                None => {
                    print!("{}", out.text);
                    Ok(())
                }
            };
            match written {
                Ok(()) => 0,
                Err(e) => report_error(&e),
            }
        }
        Err(e) => report_error(&e),
    }
}
