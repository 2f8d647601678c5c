//! Experiment orchestration: analytic sweeps, probability and delay curves,
//! simulation runs, analytic-vs-simulation validation and CSV output.
//!
//! Simulated cells draw their replication seeds from the config seed and
//! the cell's `(h0, mode)` position only, so every TTL of one `h0` reuses
//! the same sample paths and simulated curves are monotone in TTL.

pub mod config;

use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

pub use config::{ConfigError, ConfigIssue, IssueKind, ProfileRef, ScenarioConfig};

use crate::analytic::{self, AnalyticError, Deadline, FluidParams, SweepRow};
use crate::cce::{self, CceError, ScenarioMetrics};
use crate::meetsim::{self, replication_seed, DisseminationMode, SimError};
use crate::stats::{mean_and_std_error, Estimate};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Cce(#[from] CceError),
    #[error("a seed is required (config `sim.seed` or an override)")]
    MissingSeed,
    #[error("validation needs at least {min} replications, got {got}")]
    TooFewReplications { min: usize, got: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub const MIN_VALIDATION_REPLICATIONS: usize = 100;
/// Relative tolerance on mean delay in fixed-holders mode.
pub const DELAY_REL_TOLERANCE: f64 = 0.02;
/// Absolute floor of the tolerance on delivery probability in epidemic mode.
pub const PROBABILITY_ABS_TOLERANCE: f64 = 0.05;
/// Standard errors allowed on delivery probability in epidemic mode.
pub const PROBABILITY_SE_FACTOR: f64 = 3.0;

fn seed_of(config: &ScenarioConfig) -> Result<u64, HarnessError> {
    config.sim.seed.ok_or(HarnessError::MissingSeed)
}

fn mode_tag(mode: DisseminationMode) -> u64 {
    match mode {
        DisseminationMode::Epidemic => 1,
        DisseminationMode::FixedHolders => 2,
    }
}

/// Seed for all replications of one `(h0 index, mode)` cell family.
pub fn cell_seed(seed: u64, h0_index: usize, mode: DisseminationMode) -> u64 {
    replication_seed(replication_seed(seed, h0_index as u64), mode_tag(mode))
}

fn mode_name(mode: DisseminationMode) -> &'static str {
    match mode {
        DisseminationMode::Epidemic => "epidemic",
        DisseminationMode::FixedHolders => "fixed-holders",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Analytic sweep over every configured `h0` and the TTL grid.
pub fn analytic_sweep(config: &ScenarioConfig) -> Result<Vec<SweepRow>, HarnessError> {
    let grid: Vec<FluidParams> = config.population.h0.iter().map(|&h| config.fluid_params(h)).collect();
    Ok(analytic::sweep(&grid, &config.ttl_grid())?)
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityRow {
    pub h0: f64,
    pub ttl_s: f64,
    pub p_analytic: f64,
    pub p_sim: Option<Estimate>,
}

/// Delivery probability against TTL for every `h0`: analytic values on the
/// TTL grid plus epidemic-mode simulation at the configured deadlines.
pub fn probability_curves(config: &ScenarioConfig) -> Result<Vec<ProbabilityRow>, HarnessError> {
    let seed = seed_of(config)?;
    let mut ttls = config.ttl_grid();
    ttls.extend(&config.deadlines.ttl_s);
    let ttls = sorted_unique(ttls);

    let mut rows = Vec::new();
    for (hi, &h0) in config.population.h0.iter().enumerate() {
        let params = config.fluid_params(h0);
        let model = config.meeting_model(h0, DisseminationMode::Epidemic)?;
        let s = cell_seed(seed, hi, DisseminationMode::Epidemic);
        for &ttl in &ttls {
            let p_sim = if config.deadlines.ttl_s.contains(&ttl) {
                Some(meetsim::estimate_delivery_probability(
                    &model,
                    Deadline::new(ttl)?,
                    config.sim.replications,
                    s,
                )?)
            } else {
                None
            };
            rows.push(ProbabilityRow {
                h0,
                ttl_s: ttl,
                p_analytic: analytic::delivery_probability(&params, ttl)?,
                p_sim,
            });
        }
    }
    Ok(rows)
}

pub fn write_probability_csv<W: Write>(rows: &[ProbabilityRow], mut out: W) -> io::Result<()> {
    writeln!(out, "h0,ttl_s,p_analytic,p_sim,p_sim_se")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.h0,
            r.ttl_s,
            r.p_analytic,
            opt(r.p_sim.map(|e| e.mean)),
            opt(r.p_sim.map(|e| e.std_error))
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRow {
    pub h0: f64,
    pub ttl_s: f64,
    /// `None` when `h0 = 0`.
    pub delay_analytic: Option<f64>,
    pub delay_sim: Option<Estimate>,
}

/// Expected delivery delay for every `h0` at TTL 0 and the configured
/// deadlines, with fixed-holders simulation alongside.
pub fn delay_curves(config: &ScenarioConfig) -> Result<Vec<DelayRow>, HarnessError> {
    let seed = seed_of(config)?;
    let mut ttls = vec![0.0];
    ttls.extend(&config.deadlines.ttl_s);
    let ttls = sorted_unique(ttls);

    let mut rows = Vec::new();
    for (hi, &h0) in config.population.h0.iter().enumerate() {
        let params = config.fluid_params(h0);
        let model = config.meeting_model(h0, DisseminationMode::FixedHolders)?;
        let s = cell_seed(seed, hi, DisseminationMode::FixedHolders);
        for &ttl in &ttls {
            let deadline = Deadline::new(ttl)?;
            let delay_analytic = match analytic::expected_delay(&params, deadline) {
                Ok(d) => Some(d),
                Err(AnalyticError::Degenerate) => None,
                Err(e) => return Err(e.into()),
            };
            let delay_sim = Some(meetsim::estimate_expected_delay(
                &model,
                deadline,
                config.sim.replications,
                s,
            )?);
            rows.push(DelayRow {
                h0,
                ttl_s: ttl,
                delay_analytic,
                delay_sim,
            });
        }
    }
    Ok(rows)
}

pub fn write_delay_csv<W: Write>(rows: &[DelayRow], mut out: W) -> io::Result<()> {
    writeln!(out, "h0,ttl_s,e_delay_analytic_s,e_delay_sim_s,e_delay_sim_se_s")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.h0,
            r.ttl_s,
            opt(r.delay_analytic),
            opt(r.delay_sim.map(|e| e.mean)),
            opt(r.delay_sim.map(|e| e.std_error))
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRow {
    pub h0: f64,
    pub ttl_s: f64,
    pub mode: DisseminationMode,
    pub p_analytic: f64,
    pub p_sim: Estimate,
    pub delay_analytic: Option<f64>,
    pub delay_sim: Estimate,
}

/// Monte-Carlo estimates for every `(h0, deadline)` in the configured mode.
pub fn simulate(config: &ScenarioConfig) -> Result<Vec<SimulationRow>, HarnessError> {
    let seed = seed_of(config)?;
    let mode = config.meeting.mode;
    let mut rows = Vec::new();
    for (hi, &h0) in config.population.h0.iter().enumerate() {
        let params = config.fluid_params(h0);
        let model = config.meeting_model(h0, mode)?;
        let s = cell_seed(seed, hi, mode);
        for &ttl in &config.deadlines.ttl_s {
            let deadline = Deadline::new(ttl)?;
            let pairs = meetsim::replicate(&model, deadline, config.sim.replications, s, |rep| {
                (rep.edge_fraction(), rep.mean_delay())
            })?;
            let (p, d): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            rows.push(SimulationRow {
                h0,
                ttl_s: ttl,
                mode,
                p_analytic: analytic::delivery_probability(&params, ttl)?,
                p_sim: mean_and_std_error(&p),
                delay_analytic: analytic::expected_delay(&params, deadline).ok(),
                delay_sim: mean_and_std_error(&d),
            });
        }
    }
    Ok(rows)
}

pub fn write_simulation_csv<W: Write>(rows: &[SimulationRow], mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "h0,ttl_s,mode,p_analytic,p_sim,p_sim_se,e_delay_analytic_s,e_delay_sim_s,e_delay_sim_se_s"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.h0,
            r.ttl_s,
            mode_name(r.mode),
            r.p_analytic,
            r.p_sim.mean,
            r.p_sim.std_error,
            opt(r.delay_analytic),
            r.delay_sim.mean,
            r.delay_sim.std_error
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    DeliveryProbability,
    ExpectedDelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Pass,
    Fail,
    /// No holders: excluded from the overall verdict.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationCell {
    pub h0: f64,
    pub ttl_s: f64,
    pub mode: DisseminationMode,
    pub metric: Metric,
    pub analytic: Option<f64>,
    pub estimate: Option<Estimate>,
    pub tolerance: f64,
    pub status: CellStatus,
}

impl ValidationCell {
    /// Signed simulation-minus-analytic difference.
    pub fn bias(&self) -> Option<f64> {
        Some(self.estimate?.mean - self.analytic?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub cells: Vec<ValidationCell>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.cells.iter().all(|c| c.status != CellStatus::Fail)
    }
}

/// Cross-checks the simulator against the closed forms. Epidemic cells
/// compare delivery probability within `max(0.05, 3·SE)`; fixed-holders
/// cells compare mean delay within 2 % relative.
pub fn validate(config: &ScenarioConfig) -> Result<ValidationReport, HarnessError> {
    let seed = seed_of(config)?;
    let reps = config.sim.replications;
    if reps < MIN_VALIDATION_REPLICATIONS {
        return Err(HarnessError::TooFewReplications {
            min: MIN_VALIDATION_REPLICATIONS,
            got: reps,
        });
    }
    let mut cells = Vec::new();
    for (hi, &h0) in config.population.h0.iter().enumerate() {
        let params = config.fluid_params(h0);
        for mode in [DisseminationMode::Epidemic, DisseminationMode::FixedHolders] {
            let metric = match mode {
                DisseminationMode::Epidemic => Metric::DeliveryProbability,
                DisseminationMode::FixedHolders => Metric::ExpectedDelay,
            };
            let model = config.meeting_model(h0, mode)?;
            let s = cell_seed(seed, hi, mode);
            for &ttl in &config.deadlines.ttl_s {
                if h0 == 0.0 {
                    cells.push(ValidationCell {
                        h0,
                        ttl_s: ttl,
                        mode,
                        metric,
                        analytic: None,
                        estimate: None,
                        tolerance: 0.0,
                        status: CellStatus::Degenerate,
                    });
                    continue;
                }
                let deadline = Deadline::new(ttl)?;
                let (analytic, estimate, tolerance) = match metric {
                    Metric::DeliveryProbability => {
                        let a = analytic::delivery_probability(&params, ttl)?;
                        let e = meetsim::estimate_delivery_probability(&model, deadline, reps, s)?;
                        (a, e, PROBABILITY_ABS_TOLERANCE.max(PROBABILITY_SE_FACTOR * e.std_error))
                    }
                    Metric::ExpectedDelay => {
                        let a = analytic::expected_delay(&params, deadline)?;
                        let e = meetsim::estimate_expected_delay(&model, deadline, reps, s)?;
                        (a, e, DELAY_REL_TOLERANCE * a)
                    }
                };
                let status = if (estimate.mean - analytic).abs() <= tolerance {
                    CellStatus::Pass
                } else {
                    CellStatus::Fail
                };
                cells.push(ValidationCell {
                    h0,
                    ttl_s: ttl,
                    mode,
                    metric,
                    analytic: Some(analytic),
                    estimate: Some(estimate),
                    tolerance,
                    status,
                });
            }
        }
    }
    Ok(ValidationReport { cells })
}

pub const VALIDATION_CSV_HEADER: &str = "h0,ttl_s,mode,metric,analytic,estimate,std_error,bias,tolerance,status";

pub fn write_validation_csv<W: Write>(report: &ValidationReport, mut out: W) -> io::Result<()> {
    writeln!(out, "{VALIDATION_CSV_HEADER}")?;
    for c in &report.cells {
        let metric = match c.metric {
            Metric::DeliveryProbability => "p_dlv",
            Metric::ExpectedDelay => "e_delay_s",
        };
        let status = match c.status {
            CellStatus::Pass => "pass",
            CellStatus::Fail => "fail",
            CellStatus::Degenerate => "degenerate",
        };
        writeln!(
            out,
            "{},{},{},{metric},{},{},{},{},{},{status}",
            c.h0,
            c.ttl_s,
            mode_name(c.mode),
            opt(c.analytic),
            opt(c.estimate.map(|e| e.mean)),
            opt(c.estimate.map(|e| e.std_error)),
            opt(c.bias()),
            c.tolerance
        )?;
    }
    Ok(())
}

/// Runs the configured CCE scenario. `base_dir` resolves profile files.
pub fn run_cce(config: &ScenarioConfig, base_dir: &Path) -> Result<ScenarioMetrics, HarnessError> {
    let profile = config.load_profile(base_dir)?;
    Ok(cce::run_scenario(&profile, &config.cce_config())?)
}
