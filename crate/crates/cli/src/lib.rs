//! Experiment runner behind the `byzsprt` binary.

pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use byzsprt::montecarlo::{equilibrium_sandwich_report, estimate_gamma_curve, unknown_c_report};
use byzsprt::oracle::exact_voting_operating_point_checked;
use byzsprt::{estimate_operating_point, Estimator, OracleAttack, Thresholds};
use serde_json::json;

pub use config::{Experiment, ExperimentConfig};
use config::{AttackKindConfig, RuleKind};
use report::{Csv, ValidationRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Estimation(_) => 3,
            CliError::Capacity(_) => 4,
            CliError::Io(_) => 1,
        }
    }
}

impl From<byzsprt::Error> for CliError {
    fn from(e: byzsprt::Error) -> Self {
        use byzsprt::Error as E;
        match e {
            E::InvalidConfig(_) | E::DegenerateModel(_) | E::OutsideSupport { .. } => CliError::Config(e.to_string()),
            E::Capacity(_) => CliError::Capacity(e.to_string()),
            E::NumericalSearch(_) | E::Admissibility { .. } | E::EstimationFailure(_) => {
                CliError::Estimation(e.to_string())
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Files written by one run.
#[derive(Debug)]
pub struct RunOutput {
    pub csv: PathBuf,
    pub summary: PathBuf,
    /// Set when the run completed but a check or sweep point failed.
    pub failure: Option<CliError>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        config.sweep.trials = trials;
    }
    if let Some(dir) = &overrides.output_dir {
        config.output_dir = Some(dir.clone());
    }
    config.check()?;
    Ok(config)
}

/// Runs the configured experiment (or `validate` when forced) and writes
/// `<name>.csv` and `<name>.json` into the output directory.
pub fn run(path: &Path, overrides: &Overrides, force: Option<Experiment>) -> Result<RunOutput, CliError> {
    let mut config = load(path, overrides)?;
    if let Some(e) = force {
        config.experiment = e;
        config.check()?;
    }
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment").to_string();
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("results").join(&name));
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();

    let hash = config.hash();
    let (csv, results, failure) = match config.experiment {
        Experiment::OperatingPoint | Experiment::GammaSweep => sweep(&config, &hash)?,
        Experiment::Sandwich => sandwich(&config, &hash)?,
        Experiment::UnknownC => unknown_c(&config, &hash)?,
        Experiment::Validate => validate(&config, &hash)?,
    };

    std::fs::create_dir_all(&dir)?;
    let csv_path = dir.join(format!("{name}.csv"));
    std::fs::write(&csv_path, csv.finish())?;
    let summary = json!({
        "experiment": config.experiment,
        "config": config,
        "config_hash": hash,
        "seed": config.seed,
        "trials": config.sweep.trials,
        "started_unix": started,
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "status": if failure.is_none() { "ok" } else { "failed" },
        "failure": failure.as_ref().map(|e| e.to_string()),
        "results": results,
    });
    let summary_path = dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    std::fs::write(&summary_path, text + "\n")?;
    Ok(RunOutput { csv: csv_path, summary: summary_path, failure })
}

type Outcome = (Csv, serde_json::Value, Option<CliError>);

fn equilibrium_prediction(config: &ExperimentConfig, unit: f64) -> f64 {
    (config.detector.sensors - 2 * config.attack_count()) as f64 * unit
}

fn sweep(config: &ExperimentConfig, hash: &str) -> Result<Outcome, CliError> {
    let scenario = config.scenario()?;
    let grid = config.thresholds()?;
    let curve = estimate_gamma_curve(&scenario, &grid, config.sweep.trials, config.seed, config.estimator)?;
    let mut csv = Csv::new(hash, None);
    for p in &curve.points {
        csv.point_row(None, p.threshold, p.point.as_ref(), p.gamma.as_ref(), p.normalized);
    }
    let failed: Vec<String> = curve
        .points
        .iter()
        .filter_map(|p| p.failure.as_ref().map(|f| format!("threshold {}: {f}", p.threshold)))
        .collect();
    let normalized = curve.normalized_values();
    let increasing = normalized.windows(2).all(|w| matches!((w[0], w[1]), (Some(x), Some(y)) if x < y));
    let results = json!({
        "unit": curve.unit,
        "predicted": equilibrium_prediction(config, curve.unit),
        "predicted_normalized": equilibrium_prediction(config, 1.0),
        "normalized_increasing": increasing,
        "points": curve.points,
    });
    let failure = (!failed.is_empty()).then(|| CliError::Estimation(failed.join("; ")));
    Ok((csv, results, failure))
}

fn sandwich(config: &ExperimentConfig, hash: &str) -> Result<Outcome, CliError> {
    let report = equilibrium_sandwich_report(
        &config.model()?,
        config.detector.sensors,
        config.attack_count(),
        config.attack.magnitude,
        &config.thresholds()?,
        config.sweep.trials,
        config.seed,
        config.detector.max_horizon,
    )?;
    let mut csv = Csv::new(hash, Some("cell"));
    for row in &report.rows {
        for cell in [&row.equilibrium, &row.detector_vs_stress, &row.sum_sprt_vs_flip] {
            csv.point_row(Some(&cell.label), row.threshold, Some(&cell.point), cell.gamma.as_ref(), cell.normalized);
        }
    }
    let bad: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !(r.attacker_cannot_improve && r.detector_cannot_improve))
        .map(|r| format!("equilibrium inequality violated at threshold {}", r.threshold))
        .collect();
    let failure = (!bad.is_empty()).then(|| CliError::Estimation(bad.join("; ")));
    Ok((csv, serde_json::to_value(&report).map_err(|e| CliError::Io(e.to_string()))?, failure))
}

fn unknown_c(config: &ExperimentConfig, hash: &str) -> Result<Outcome, CliError> {
    let u = config.unknown_c.as_ref().expect("checked by config");
    let report = unknown_c_report(
        &config.model()?,
        config.detector.sensors,
        u.c_bar,
        &u.actual,
        &config.thresholds()?,
        config.sweep.trials,
        config.seed,
        config.detector.max_horizon,
        u.tolerance,
    )?;
    let mut csv = Csv::new(hash, Some("cell"));
    for row in &report.rows {
        let cell = &row.cell;
        csv.point_row(Some(&cell.label), row.threshold, Some(&cell.point), cell.gamma.as_ref(), cell.normalized);
    }
    let bad: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !r.meets_bound)
        .map(|r| format!("c={} at threshold {} below bound {}", r.actual, r.threshold, r.bound))
        .collect();
    let failure = (!bad.is_empty()).then(|| CliError::Estimation(bad.join("; ")));
    Ok((csv, serde_json::to_value(&report).map_err(|e| CliError::Io(e.to_string()))?, failure))
}

fn validate(config: &ExperimentConfig, hash: &str) -> Result<Outcome, CliError> {
    if config.detector.rule != RuleKind::Voting {
        return Err(CliError::Config("validate compares the voting rule against the exact oracle".into()));
    }
    let attack = match config.attack.kind {
        AttackKindConfig::None => OracleAttack::None,
        AttackKindConfig::Flip => OracleAttack::Flip(config.attack.compromised),
        AttackKindConfig::Suppression => {
            return Err(CliError::Config("the oracle covers no attack or the flip attack only".into()))
        }
    };
    let settings = config.validate.clone().unwrap_or_default();
    let model = config.model()?;
    let scenario = config.scenario()?;
    let horizon = usize::try_from(config.detector.max_horizon)
        .map_err(|_| CliError::Config("detector.max_horizon too large for the oracle".into()))?;
    let s = config.detector.sensors;
    let r = config.vote_count();
    let trials = config.sweep.trials;

    let mut rows = Vec::new();
    for level in config.thresholds()? {
        let thr = Thresholds::symmetric(level)?;
        let exact =
            exact_voting_operating_point_checked(&model, s, r, &thr, horizon, attack, settings.max_residual)?;
        let plain = estimate_operating_point(&scenario, &thr, trials, config.seed, Estimator::Plain)?;
        // independent seed so the two pipelines' sample numbers are separate evidence
        let tilted =
            estimate_operating_point(&scenario, &thr, trials, config.seed.wrapping_add(1), Estimator::Importance)?;
        for (name, point) in [("plain", &plain), ("importance", &tilted)] {
            let quantities = [
                ("alpha", exact.alpha(), point.alpha.value, point.alpha.stderr),
                ("beta", exact.beta(), point.beta.value, point.beta.stderr),
                ("asn0", exact.asn0(), point.asn0.mean, point.asn0.stderr),
                ("asn1", exact.asn1(), point.asn1.mean, point.asn1.stderr),
            ];
            for (quantity, oracle, estimate, stderr) in quantities {
                rows.push(ValidationRow::new(level, quantity, name, oracle, estimate, stderr));
            }
        }
    }
    let mut csv = Csv::validation(hash);
    for row in &rows {
        csv.validation_row(row);
    }
    let worst = rows.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let failure = (worst > settings.max_z)
        .then(|| CliError::Estimation(format!("largest |z| {worst:.3} exceeds {}", settings.max_z)));
    let results = json!({ "max_abs_z": worst, "max_z": settings.max_z, "rows": rows });
    Ok((csv, results, failure))
}

/// Text printed by the `info` subcommand.
pub fn info(config: &ExperimentConfig) -> Result<String, CliError> {
    let model = config.model()?;
    let k = model.info_constants()?;
    let s = config.detector.sensors;
    let c = config.attack_count();
    Ok(format!(
        "I0        {:.6}\nI1        {:.6}\nI         {:.6}\nI_tilde   {:.6}\ns         {s}\nc         {c}\n(s-2c)*I  {:.6}\n",
        k.i0,
        k.i1,
        k.i,
        k.i_tilde,
        (s - 2 * c) as f64 * k.i,
    ))
}
