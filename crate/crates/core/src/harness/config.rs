//! Scenario configuration.
//!
//! Line-oriented UTF-8 text: `[section]` headers, `key = value` pairs, `#`
//! comments, comma-separated lists. Unknown sections and keys are errors.
//!
//! ```text
//! [population]
//! n_mn = 100
//! r0 = 50
//! h0 = 10, 20, 30
//!
//! [meeting]
//! m_lambda = 3.3e-5
//!
//! [deadlines]
//! ttl_s = 600, 1800, 3600
//! ```
//!
//! Required keys: `population.n_mn`, `population.r0`, `population.h0`,
//! `meeting.m_lambda`, `deadlines.ttl_s`. Everything else has a default,
//! see [`ScenarioConfig::to_text`] for the full key set.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::analytic::FluidParams;
use crate::cce::{CceConfig, ClassPolicy, ContentItem, LoadProfile, LoadSegment, PeakHour, TrafficClass};
use crate::meetsim::{DisseminationMode, MeetingModel, RateDistribution, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueKind {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub kind: IssueKind,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            IssueKind::Parse => "parse error",
            IssueKind::Validation => "validation error",
        };
        write!(f, "{kind}")?;
        if let Some(line) = self.line {
            write!(f, " at line {line}")?;
        }
        if let Some(key) = &self.key {
            write!(f, " [{key}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{}", .issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl ConfigError {
    fn single(kind: IssueKind, line: Option<usize>, key: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            issues: vec![ConfigIssue {
                kind,
                line,
                key: key.map(str::to_owned),
                message: message.into(),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub n_mn: u64,
    /// Number of edge servers able to hold content; defaults to `max(h0)`.
    pub n_edge: u64,
    pub r0: f64,
    pub h0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Meeting {
    pub m_lambda: f64,
    pub rate_dist: RateDistribution,
    pub mode: DisseminationMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deadlines {
    pub ttl_s: Vec<f64>,
    pub grid_step_s: f64,
    pub grid_max_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    pub horizon_s: f64,
    pub replications: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CceSettings {
    pub capacity_bps: f64,
    pub tick_s: f64,
    pub theta_high: f64,
    pub theta_low: f64,
    pub drain_headroom: f64,
    pub guard_s: f64,
    pub buffer_bits: f64,
    pub dt_ttl_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileRef {
    PeakHour,
    /// Profile file, relative paths resolved against the config file.
    File(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSettings {
    pub profile: ProfileRef,
    pub base_util: f64,
    pub peak_util: f64,
    pub peak_start_s: f64,
    pub peak_end_s: f64,
    pub dt_util: f64,
    pub dt_item_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub population: Population,
    pub meeting: Meeting,
    pub deadlines: Deadlines,
    pub sim: SimSettings,
    pub cce: CceSettings,
    pub load: LoadSettings,
}

const REQUIRED: &[(&str, &str)] = &[
    ("population", "n_mn"),
    ("population", "r0"),
    ("population", "h0"),
    ("meeting", "m_lambda"),
    ("deadlines", "ttl_s"),
];

const KNOWN: &[(&str, &[&str])] = &[
    ("population", &["n_mn", "n_edge", "r0", "h0"]),
    ("meeting", &["m_lambda", "rate_dist", "gamma_shape", "mode"]),
    ("deadlines", &["ttl_s", "grid_step_s", "grid_max_s"]),
    ("sim", &["horizon_s", "replications", "seed"]),
    (
        "cce",
        &[
            "capacity_bps",
            "tick_s",
            "theta_high",
            "theta_low",
            "drain_headroom",
            "guard_s",
            "buffer_bits",
            "dt_ttl_s",
        ],
    ),
    (
        "load",
        &[
            "profile",
            "base_util",
            "peak_util",
            "peak_start_s",
            "peak_end_s",
            "dt_util",
            "dt_item_bits",
        ],
    ),
];

struct Entry {
    value: String,
    line: usize,
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn tokenize(text: &str) -> Result<BTreeMap<(String, String), Entry>, ConfigError> {
    let mut issues = Vec::new();
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if KNOWN.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_owned());
            } else {
                issues.push(ConfigIssue {
                    kind: IssueKind::Parse,
                    line: Some(line_no),
                    key: Some(name.to_owned()),
                    message: format!("unknown section [{name}]"),
                });
                section = None;
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            issues.push(ConfigIssue {
                kind: IssueKind::Parse,
                line: Some(line_no),
                key: None,
                message: format!("expected `key = value` or `[section]`, found `{line}`"),
            });
            continue;
        };
        let key = key.trim();
        let Some(sec) = &section else {
            issues.push(ConfigIssue {
                kind: IssueKind::Parse,
                line: Some(line_no),
                key: Some(key.to_owned()),
                message: "key outside of a known section".into(),
            });
            continue;
        };
        let known = KNOWN
            .iter()
            .find(|(s, _)| s == sec)
            .is_some_and(|(_, keys)| keys.contains(&key));
        if !known {
            issues.push(ConfigIssue {
                kind: IssueKind::Parse,
                line: Some(line_no),
                key: Some(format!("{sec}.{key}")),
                message: "unknown key".into(),
            });
            continue;
        }
        let slot = (sec.clone(), key.to_owned());
        if let Some(prev) = entries.get(&slot) {
            let prev: &Entry = prev;
            issues.push(ConfigIssue {
                kind: IssueKind::Parse,
                line: Some(line_no),
                key: Some(format!("{sec}.{key}")),
                message: format!("duplicate key (first set at line {})", prev.line),
            });
            continue;
        }
        entries.insert(
            slot,
            Entry {
                value: value.trim().to_owned(),
                line: line_no,
            },
        );
    }
    if issues.is_empty() {
        Ok(entries)
    } else {
        Err(ConfigError { issues })
    }
}

/// Typed access to tokenized entries, collecting every problem.
struct Reader {
    entries: BTreeMap<(String, String), Entry>,
    issues: Vec<ConfigIssue>,
}

impl Reader {
    fn raw(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_owned(), key.to_owned()))
    }

    fn line(&self, section: &str, key: &str) -> Option<usize> {
        self.raw(section, key).map(|e| e.line)
    }

    fn issue(&mut self, kind: IssueKind, section: &str, key: &str, message: impl Into<String>) {
        let line = self.line(section, key);
        self.issues.push(ConfigIssue {
            kind,
            line,
            key: Some(format!("{section}.{key}")),
            message: message.into(),
        });
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str, what: &str) -> Option<T> {
        let value = self.raw(section, key)?.value.clone();
        match value.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.issue(IssueKind::Parse, section, key, format!("`{value}` is not {what}"));
                None
            }
        }
    }

    fn f64_or(&mut self, section: &str, key: &str, default: f64) -> f64 {
        self.parsed(section, key, "a number").unwrap_or(default)
    }

    fn list(&mut self, section: &str, key: &str) -> Option<Vec<f64>> {
        let value = self.raw(section, key)?.value.clone();
        let mut out = Vec::new();
        for part in value.split(',') {
            match part.trim().parse::<f64>() {
                Ok(v) => out.push(v),
                Err(_) => {
                    self.issue(
                        IssueKind::Parse,
                        section,
                        key,
                        format!("`{}` is not a number", part.trim()),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }
}

fn fmt_list(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = tokenize(text)?;
        let mut rd = Reader {
            entries,
            issues: Vec::new(),
        };

        let missing: Vec<String> = REQUIRED
            .iter()
            .filter(|(s, k)| rd.raw(s, k).is_none())
            .map(|(s, k)| format!("{s}.{k}"))
            .collect();
        if !missing.is_empty() {
            rd.issues.push(ConfigIssue {
                kind: IssueKind::Validation,
                line: None,
                key: None,
                message: format!("missing required keys: {}", missing.join(", ")),
            });
        }

        let n_mn = rd
            .parsed::<u64>("population", "n_mn", "a non-negative integer")
            .unwrap_or(0);
        let r0 = rd.parsed::<f64>("population", "r0", "a number").unwrap_or(f64::NAN);
        let h0 = rd.list("population", "h0").unwrap_or_default();
        let max_h0 = h0.iter().copied().fold(0.0, f64::max);
        let n_edge = rd
            .parsed::<u64>("population", "n_edge", "a non-negative integer")
            .unwrap_or(max_h0.ceil() as u64);

        let m_lambda = rd.parsed::<f64>("meeting", "m_lambda", "a number").unwrap_or(f64::NAN);
        let gamma_shape = rd.parsed::<f64>("meeting", "gamma_shape", "a number");
        let rate_dist = match rd.raw("meeting", "rate_dist").map(|e| e.value.clone()).as_deref() {
            None | Some("deterministic") => RateDistribution::Deterministic,
            Some("exponential") => RateDistribution::Exponential,
            Some("gamma") => match gamma_shape {
                Some(shape) => RateDistribution::Gamma { shape },
                None => {
                    rd.issue(
                        IssueKind::Validation,
                        "meeting",
                        "rate_dist",
                        "gamma requires meeting.gamma_shape",
                    );
                    RateDistribution::Deterministic
                }
            },
            Some(other) => {
                let msg = format!("`{other}` is not one of deterministic, exponential, gamma");
                rd.issue(IssueKind::Parse, "meeting", "rate_dist", msg);
                RateDistribution::Deterministic
            }
        };
        if gamma_shape.is_some() && !matches!(rate_dist, RateDistribution::Gamma { .. }) {
            rd.issue(
                IssueKind::Validation,
                "meeting",
                "gamma_shape",
                "only valid with rate_dist = gamma",
            );
        }
        let mode = match rd.raw("meeting", "mode").map(|e| e.value.clone()).as_deref() {
            None | Some("epidemic") => DisseminationMode::Epidemic,
            Some("fixed-holders") => DisseminationMode::FixedHolders,
            Some(other) => {
                let msg = format!("`{other}` is not one of epidemic, fixed-holders");
                rd.issue(IssueKind::Parse, "meeting", "mode", msg);
                DisseminationMode::Epidemic
            }
        };

        let ttl_s = rd.list("deadlines", "ttl_s").unwrap_or_default();
        let grid_step_s = rd.f64_or("deadlines", "grid_step_s", 60.0);
        let grid_max_s = rd.f64_or("deadlines", "grid_max_s", 3600.0);

        let horizon_s = rd.f64_or("sim", "horizon_s", 3600.0);
        let replications = rd
            .parsed::<usize>("sim", "replications", "a non-negative integer")
            .unwrap_or(1000);
        let seed = rd.parsed::<u64>("sim", "seed", "an unsigned 64-bit integer");

        let cce = CceSettings {
            capacity_bps: rd.f64_or("cce", "capacity_bps", 1e8),
            tick_s: rd.f64_or("cce", "tick_s", 1.0),
            theta_high: rd.f64_or("cce", "theta_high", 0.9),
            theta_low: rd.f64_or("cce", "theta_low", 0.7),
            drain_headroom: rd.f64_or("cce", "drain_headroom", 0.8),
            guard_s: rd.f64_or("cce", "guard_s", 0.0),
            buffer_bits: rd.f64_or("cce", "buffer_bits", f64::INFINITY),
            dt_ttl_s: rd.f64_or("cce", "dt_ttl_s", 1800.0),
        };

        let defaults = PeakHour::default();
        let profile = match rd.raw("load", "profile").map(|e| e.value.clone()) {
            None => ProfileRef::PeakHour,
            Some(v) if v == "peak_hour" => ProfileRef::PeakHour,
            Some(v) => ProfileRef::File(v.trim_matches('"').to_owned()),
        };
        let load = LoadSettings {
            profile,
            base_util: rd.f64_or("load", "base_util", defaults.base_util),
            peak_util: rd.f64_or("load", "peak_util", defaults.peak_util),
            peak_start_s: rd.f64_or("load", "peak_start_s", defaults.peak_start_s),
            peak_end_s: rd.f64_or("load", "peak_end_s", defaults.peak_end_s),
            dt_util: rd.f64_or("load", "dt_util", defaults.dt_util),
            dt_item_bits: rd.f64_or("load", "dt_item_bits", defaults.dt_item_bits),
        };

        let config = ScenarioConfig {
            population: Population { n_mn, n_edge, r0, h0 },
            meeting: Meeting {
                m_lambda,
                rate_dist,
                mode,
            },
            deadlines: Deadlines {
                ttl_s,
                grid_step_s,
                grid_max_s,
            },
            sim: SimSettings {
                horizon_s,
                replications,
                seed,
            },
            cce,
            load,
        };
        if rd.issues.is_empty() {
            config.validate_into(&mut rd);
        }
        if rd.issues.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError { issues: rd.issues })
        }
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| {
            ConfigError::single(
                IssueKind::Parse,
                None,
                None,
                format!("cannot read {}: {e}", path.display()),
            )
        })?;
        Self::parse(&text)
    }

    fn validate_into(&self, rd: &mut Reader) {
        let mut bad = |section: &str, key: &str, msg: String| rd.issue(IssueKind::Validation, section, key, msg);
        let p = &self.population;
        if !(p.r0.is_finite() && p.r0 > 0.0) {
            bad("population", "r0", format!("r0 = {} must be > 0", p.r0));
        }
        if p.h0.is_empty() || p.h0.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            bad("population", "h0", "h0 values must be >= 0".into());
        }
        let max_h0 = p.h0.iter().copied().fold(0.0, f64::max);
        if p.r0 + max_h0 > (p.n_mn + p.n_edge) as f64 {
            bad(
                "population",
                "r0",
                format!(
                    "r0 + h0 = {} exceeds n_mn + n_edge = {}",
                    p.r0 + max_h0,
                    p.n_mn + p.n_edge
                ),
            );
        }
        if max_h0 > p.n_edge as f64 {
            bad(
                "population",
                "n_edge",
                format!("h0 = {max_h0} exceeds n_edge = {}", p.n_edge),
            );
        }
        let m = &self.meeting;
        if !(m.m_lambda.is_finite() && m.m_lambda > 0.0) {
            bad("meeting", "m_lambda", format!("m_lambda = {} must be > 0", m.m_lambda));
        }
        if let RateDistribution::Gamma { shape } = m.rate_dist {
            if !(shape.is_finite() && shape > 0.0) {
                bad("meeting", "gamma_shape", format!("gamma_shape = {shape} must be > 0"));
            }
        }
        let d = &self.deadlines;
        if d.ttl_s.is_empty() || d.ttl_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            bad("deadlines", "ttl_s", "TTLs must be finite and >= 0".into());
        }
        if !(d.grid_step_s.is_finite() && d.grid_step_s > 0.0) {
            bad(
                "deadlines",
                "grid_step_s",
                format!("grid_step_s = {} must be > 0", d.grid_step_s),
            );
        }
        if !(d.grid_max_s.is_finite() && d.grid_max_s >= 0.0) {
            bad(
                "deadlines",
                "grid_max_s",
                format!("grid_max_s = {} must be >= 0", d.grid_max_s),
            );
        }
        let s = &self.sim;
        if !(s.horizon_s.is_finite() && s.horizon_s > 0.0) {
            bad("sim", "horizon_s", format!("horizon_s = {} must be > 0", s.horizon_s));
        }
        if s.replications < 1 {
            bad("sim", "replications", "replications must be >= 1".into());
        }
        let c = &self.cce;
        if !(c.theta_low > 0.0 && c.theta_high <= 1.0 && c.theta_low <= c.theta_high) {
            bad(
                "cce",
                "theta_low",
                format!(
                    "need 0 < theta_low ({}) <= theta_high ({}) <= 1",
                    c.theta_low, c.theta_high
                ),
            );
        }
        if let Err(e) = self.cce_config().validate() {
            bad("cce", "capacity_bps", e.to_string());
        }
        if self.load.profile == ProfileRef::PeakHour {
            if let Err(e) = LoadProfile::peak_hour(&self.peak_hour()) {
                bad("load", "profile", e.to_string());
            }
        }
    }

    /// Canonical text form; parsing it yields an identical config.
    pub fn to_text(&self) -> String {
        let p = &self.population;
        let m = &self.meeting;
        let (rate_dist, gamma) = match m.rate_dist {
            RateDistribution::Deterministic => ("deterministic", None),
            RateDistribution::Exponential => ("exponential", None),
            RateDistribution::Gamma { shape } => ("gamma", Some(shape)),
        };
        let mode = match m.mode {
            DisseminationMode::Epidemic => "epidemic",
            DisseminationMode::FixedHolders => "fixed-holders",
        };
        let mut out = String::new();
        out += &format!(
            "[population]\nn_mn = {}\nn_edge = {}\nr0 = {}\nh0 = {}\n\n",
            p.n_mn,
            p.n_edge,
            p.r0,
            fmt_list(&p.h0)
        );
        out += &format!("[meeting]\nm_lambda = {:e}\nrate_dist = {rate_dist}\n", m.m_lambda);
        if let Some(shape) = gamma {
            out += &format!("gamma_shape = {shape}\n");
        }
        out += &format!("mode = {mode}\n\n");
        let d = &self.deadlines;
        out += &format!(
            "[deadlines]\nttl_s = {}\ngrid_step_s = {}\ngrid_max_s = {}\n\n",
            fmt_list(&d.ttl_s),
            d.grid_step_s,
            d.grid_max_s
        );
        let s = &self.sim;
        out += &format!(
            "[sim]\nhorizon_s = {}\nreplications = {}\n",
            s.horizon_s, s.replications
        );
        if let Some(seed) = s.seed {
            out += &format!("seed = {seed}\n");
        }
        let c = &self.cce;
        out += &format!(
            "\n[cce]\ncapacity_bps = {:e}\ntick_s = {}\ntheta_high = {}\ntheta_low = {}\ndrain_headroom = {}\nguard_s = {}\nbuffer_bits = {}\ndt_ttl_s = {}\n\n",
            c.capacity_bps, c.tick_s, c.theta_high, c.theta_low, c.drain_headroom, c.guard_s, c.buffer_bits, c.dt_ttl_s
        );
        let l = &self.load;
        let profile = match &l.profile {
            ProfileRef::PeakHour => "peak_hour".to_owned(),
            ProfileRef::File(path) => format!("\"{path}\""),
        };
        out += &format!(
            "[load]\nprofile = {profile}\nbase_util = {}\npeak_util = {}\npeak_start_s = {}\npeak_end_s = {}\ndt_util = {}\ndt_item_bits = {:e}\n",
            l.base_util, l.peak_util, l.peak_start_s, l.peak_end_s, l.dt_util, l.dt_item_bits
        );
        out
    }

    pub fn fluid_params(&self, h0: f64) -> FluidParams {
        FluidParams {
            r0: self.population.r0,
            h0,
            m_lambda: self.meeting.m_lambda,
        }
    }

    pub fn meeting_model(&self, h0: f64, mode: DisseminationMode) -> Result<MeetingModel, SimError> {
        MeetingModel::from_counts(
            self.population.r0,
            h0,
            self.meeting.rate_dist,
            self.meeting.m_lambda,
            mode,
        )
    }

    /// TTL grid `0, step, 2·step, ...` up to and including `grid_max_s`.
    pub fn ttl_grid(&self) -> Vec<f64> {
        let d = &self.deadlines;
        let n = (d.grid_max_s / d.grid_step_s + 1e-9).floor() as usize;
        (0..=n).map(|k| k as f64 * d.grid_step_s).collect()
    }

    pub fn cce_config(&self) -> CceConfig {
        let c = &self.cce;
        CceConfig {
            capacity_bps: c.capacity_bps,
            theta_high: c.theta_high,
            theta_low: c.theta_low,
            drain_headroom: c.drain_headroom,
            guard_s: c.guard_s,
            buffer_bits: c.buffer_bits,
            tick_s: c.tick_s,
            policy: ClassPolicy::new(c.dt_ttl_s),
        }
    }

    pub fn peak_hour(&self) -> PeakHour {
        let l = &self.load;
        PeakHour {
            capacity_bps: self.cce.capacity_bps,
            horizon_s: self.sim.horizon_s,
            base_util: l.base_util,
            peak_util: l.peak_util,
            peak_start_s: l.peak_start_s,
            peak_end_s: l.peak_end_s,
            dt_util: l.dt_util,
            dt_item_bits: l.dt_item_bits,
        }
    }

    /// Builds the referenced load profile. File references are resolved
    /// against `base_dir`.
    pub fn load_profile(&self, base_dir: &Path) -> Result<LoadProfile, ConfigError> {
        match &self.load.profile {
            ProfileRef::PeakHour => LoadProfile::peak_hour(&self.peak_hour())
                .map_err(|e| ConfigError::single(IssueKind::Validation, None, Some("load.profile"), e.to_string())),
            ProfileRef::File(path) => {
                let full: PathBuf = base_dir.join(path);
                let text = fs::read_to_string(&full).map_err(|e| {
                    ConfigError::single(
                        IssueKind::Parse,
                        None,
                        Some("load.profile"),
                        format!("cannot read {}: {e}", full.display()),
                    )
                })?;
                parse_profile(&text)
            }
        }
    }
}

/// Parses a load-profile file:
///
/// ```text
/// # start_s end_s rate_bps
/// segment 0 600 5e7
/// # time_s size_bits
/// dt 12.5 1e7
/// ```
///
/// DT arrivals get ids in file order.
pub fn parse_profile(text: &str) -> Result<LoadProfile, ConfigError> {
    let mut issues = Vec::new();
    let mut segments = Vec::new();
    let mut arrivals = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let nums: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let parse_issue = |message: String| ConfigIssue {
            kind: IssueKind::Parse,
            line: Some(line_no),
            key: Some(fields[0].to_owned()),
            message,
        };
        match (fields[0], nums) {
            ("segment", Ok(v)) if v.len() == 3 => segments.push(LoadSegment {
                start_s: v[0],
                end_s: v[1],
                rate_bps: v[2],
            }),
            ("dt", Ok(v)) if v.len() == 2 => {
                let id = arrivals.len() as u64;
                arrivals.push(ContentItem::new(id, v[1], TrafficClass::DelayTolerant, v[0]));
            }
            ("segment", _) => issues.push(parse_issue("expected `segment <start_s> <end_s> <rate_bps>`".into())),
            ("dt", _) => issues.push(parse_issue("expected `dt <time_s> <size_bits>`".into())),
            (other, _) => issues.push(parse_issue(format!("unknown record `{other}`"))),
        }
    }
    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }
    LoadProfile::new(segments, arrivals)
        .map_err(|e| ConfigError::single(IssueKind::Validation, None, None, e.to_string()))
}
