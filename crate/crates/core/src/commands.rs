//! Subcommand implementations behind the `sagnac-sim` binary. Reports render
//! as `key=value` lines.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::analysis::{
    fit_fringe_with, integration_time_for_resolution, omega_resolution, phase_std, FitError,
    FitOptions, FringeFit, Port,
};
use crate::config::{ConfigError, SimulationConfig};
use crate::csvio::{write_fringe_csv, write_run_csv, CsvError, FringeRow};
use crate::detector::expected_dark_rate;
use crate::error::Error as ParamError;
use crate::experiment::{average_records, simulate_run, BinRecord, FringePoint};
use crate::optics::{omega_pi, output_probabilities, propagation_time, sagnac_phase};
use crate::source::{heralded_photon_rate, mean_occupancy};

/// Environment variable capping the simulation thread pool; 0 means auto.
pub const THREADS_ENV: &str = "SAGNAC_SIM_THREADS";

pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const CONFIG: i32 = 3;
    pub const FIT_FAILURE: i32 = 4;
    pub const IO: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Simulation(#[from] ParamError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: String, source: CsvError },
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::InvalidArgument(_) => exit_code::USAGE,
            CommandError::Config(ConfigError::Io { .. }) => exit_code::IO,
            CommandError::Config(_) | CommandError::Simulation(_) => exit_code::CONFIG,
            CommandError::Io { .. } | CommandError::Csv { .. } => exit_code::IO,
        }
    }
}

/// Ordered `key=value` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Design numbers of the configured interferometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Design {
    pub omega_pi: f64,
    pub propagation_time: f64,
    pub heralded_photon_rate: f64,
    pub mean_occupancy: f64,
    /// d(phase)/d(omega) in seconds.
    pub scale_factor: f64,
    pub turns: f64,
    pub dark_rate_port1: f64,
    pub dark_rate_port2: f64,
}

impl Design {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.push("omega_pi_rad_s", self.omega_pi);
        r.push("propagation_time_s", self.propagation_time);
        r.push("heralded_photon_rate_hz", self.heralded_photon_rate);
        r.push("mean_occupancy", self.mean_occupancy);
        r.push("scale_factor_s", self.scale_factor);
        r.push("turns", self.turns);
        r.push("dark_rate_port1_hz", self.dark_rate_port1);
        r.push("dark_rate_port2_hz", self.dark_rate_port2);
        r
    }
}

pub fn cmd_design(cfg: &SimulationConfig) -> Design {
    let w = omega_pi(&cfg.geometry);
    Design {
        omega_pi: w,
        propagation_time: propagation_time(&cfg.geometry),
        heralded_photon_rate: heralded_photon_rate(&cfg.source),
        mean_occupancy: mean_occupancy(&cfg.source, &cfg.geometry),
        scale_factor: PI / w,
        turns: cfg.geometry.turns(),
        dark_rate_port1: expected_dark_rate(&cfg.detector1, cfg.run.gates_per_second),
        dark_rate_port2: expected_dark_rate(&cfg.detector2, cfg.run.gates_per_second),
    }
}

/// Noise-free expected fringe on `n_points` evenly spaced rates,
/// endpoints included. `n_points == 1` evaluates `omega_min` alone.
pub fn cmd_fringe(
    cfg: &SimulationConfig,
    omega_min: f64,
    omega_max: f64,
    n_points: usize,
) -> Result<Vec<FringeRow>, CommandError> {
    if !(omega_min.is_finite() && omega_max.is_finite()) {
        return Err(CommandError::InvalidArgument("omega bounds must be finite".into()));
    }
    if n_points == 0 {
        return Err(CommandError::InvalidArgument("--points must be at least 1".into()));
    }
    if n_points >= 2 && omega_min >= omega_max {
        return Err(CommandError::InvalidArgument(format!(
            "--omega-min ({omega_min}) must be below --omega-max ({omega_max})"
        )));
    }
    let step = if n_points > 1 {
        (omega_max - omega_min) / (n_points - 1) as f64
    } else {
        0.0
    };
    Ok((0..n_points)
        .map(|i| {
            let omega = if i + 1 == n_points && n_points > 1 {
                omega_max
            } else {
                omega_min + i as f64 * step
            };
            let (p_port1, p_port2) = output_probabilities(sagnac_phase(&cfg.geometry, omega));
            FringeRow {
                omega,
                p_port1,
                p_port2,
            }
        })
        .collect())
}

pub fn write_fringe(rows: &[FringeRow], out: Option<&Path>) -> Result<(), CommandError> {
    match out {
        Some(path) => {
            let file = create(path)?;
            write_fringe_csv(BufWriter::new(file), rows).map_err(|source| CommandError::Csv {
                path: path.display().to_string(),
                source,
            })
        }
        None => write_fringe_csv(std::io::stdout().lock(), rows).map_err(|source| CommandError::Csv {
            path: "<stdout>".into(),
            source,
        }),
    }
}

fn create(path: &Path) -> Result<File, CommandError> {
    File::create(path).map_err(|source| CommandError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedSource {
    Flag,
    Config,
    Auto,
}

impl SeedSource {
    fn as_str(&self) -> &'static str {
        match self {
            SeedSource::Flag => "flag",
            SeedSource::Config => "config",
            SeedSource::Auto => "auto",
        }
    }
}

/// Simulated bins, their averaged fringe and the per-port fits.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub seed_source: SeedSource,
    pub records: Vec<BinRecord>,
    pub fringe: Vec<FringePoint>,
    pub omega_pi_analytic: f64,
    pub fits: [Result<FringeFit, FitError>; 2],
}

impl RunOutcome {
    pub fn fit_failed(&self) -> bool {
        self.fits.iter().any(Result::is_err)
    }

    pub fn report(&self, csv_path: Option<&Path>) -> Report {
        let mut r = Report::default();
        r.push("seed", self.seed);
        r.push("seed_source", self.seed_source.as_str());
        if let Some(p) = csv_path {
            r.push("csv", p.display());
        }
        r.push("bins", self.records.len());
        r.push("fringe_points", self.fringe.len());
        r.push("omega_pi_analytic_rad_s", self.omega_pi_analytic);
        for (fit, port) in self.fits.iter().zip(["port1", "port2"]) {
            match fit {
                Ok(f) => {
                    r.push(format!("{port}.status"), "ok");
                    r.push(format!("{port}.visibility"), f.visibility);
                    r.push(format!("{port}.visibility_stderr"), f.stderr.visibility);
                    r.push(format!("{port}.omega_pi_rad_s"), f.omega_pi_est);
                    r.push(format!("{port}.omega_pi_stderr_rad_s"), f.stderr.omega_pi);
                    r.push(format!("{port}.phase_offset_rad"), f.phase_offset);
                    r.push(format!("{port}.phase_offset_stderr_rad"), f.stderr.phase_offset);
                    r.push(format!("{port}.amplitude"), f.amplitude);
                    r.push(format!("{port}.offset"), f.offset);
                    r.push(format!("{port}.residual_rms"), f.residual_rms);
                    r.push(format!("{port}.iterations"), f.iterations);
                }
                Err(e) => {
                    r.push(format!("{port}.status"), "failed");
                    r.push(format!("{port}.error"), e);
                }
            }
        }
        r
    }
}

fn auto_seed() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

/// Simulate, dark-subtract, average and fit both ports. The seed flag wins
/// over `run.rng_seed`; without either a time-derived seed is used.
pub fn run_simulation(cfg: &SimulationConfig, seed: Option<u64>) -> Result<RunOutcome, CommandError> {
    let (seed, seed_source) = match (seed, cfg.seed) {
        (Some(s), _) => (s, SeedSource::Flag),
        (None, Some(s)) => (s, SeedSource::Config),
        (None, None) => (auto_seed(), SeedSource::Auto),
    };
    let mut run = cfg.run;
    run.rng_seed = seed;
    let records = simulate_run(
        &run,
        &cfg.geometry,
        &cfg.source,
        &cfg.detector1,
        &cfg.detector2,
        &cfg.rotation,
    )?;
    let fringe = average_records(&records, cfg.omega_grid_step)?;
    let w = omega_pi(&cfg.geometry);
    let opts = FitOptions {
        weighting: cfg.weighting,
    };
    let fits = [
        fit_fringe_with(&fringe, Port::One, w, &opts),
        fit_fringe_with(&fringe, Port::Two, w, &opts),
    ];
    Ok(RunOutcome {
        seed,
        seed_source,
        records,
        fringe,
        omega_pi_analytic: w,
        fits,
    })
}

/// Full run; the bin CSV is written before the fits are inspected, so it
/// exists even when a fit fails.
pub fn cmd_run(cfg: &SimulationConfig, seed: Option<u64>, out: &Path) -> Result<RunOutcome, CommandError> {
    let outcome = run_simulation(cfg, seed)?;
    let file = create(out)?;
    write_run_csv(BufWriter::new(file), &outcome.records).map_err(|source| CommandError::Csv {
        path: out.display().to_string(),
        source,
    })?;
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    pub count_rate_hz: f64,
    pub target_sigma_rad: f64,
    pub phase_std_1s: f64,
    pub integration_time_s: f64,
    pub omega_resolution: f64,
}

impl Sensitivity {
    pub fn report(&self) -> Report {
        let mut r = Report::default();
        r.push("count_rate_hz", self.count_rate_hz);
        r.push("target_sigma_rad", self.target_sigma_rad);
        r.push("phase_std_1s_rad", self.phase_std_1s);
        r.push("integration_time_s", self.integration_time_s);
        r.push("integration_time_h", self.integration_time_s / 3600.0);
        r.push("omega_resolution_rad_s", self.omega_resolution);
        r
    }
}

pub fn cmd_sensitivity(
    cfg: &SimulationConfig,
    count_rate_hz: f64,
    target_sigma_rad: f64,
) -> Result<Sensitivity, CommandError> {
    let integration_time_s = integration_time_for_resolution(count_rate_hz, target_sigma_rad)
        .ok_or_else(|| {
            CommandError::InvalidArgument(format!(
                "--rate ({count_rate_hz}) and --target-sigma ({target_sigma_rad}) must be positive"
            ))
        })?;
    let phase_std_1s = phase_std(count_rate_hz).expect("rate checked positive");
    Ok(Sensitivity {
        count_rate_hz,
        target_sigma_rad,
        phase_std_1s,
        integration_time_s,
        omega_resolution: omega_resolution(&cfg.geometry, target_sigma_rad),
    })
}

/// Parses the thread cap; unset or empty means auto (0).
pub fn parse_thread_count(value: Option<&str>) -> Result<usize, CommandError> {
    match value.map(str::trim) {
        None | Some("") => Ok(0),
        Some(v) => v.parse().map_err(|_| {
            CommandError::InvalidArgument(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`"))
        }),
    }
}

pub fn build_thread_pool(threads: usize) -> Result<rayon::ThreadPool, CommandError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CommandError::InvalidArgument(format!("cannot build thread pool: {e}")))
}
