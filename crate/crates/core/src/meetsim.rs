//! Exact stochastic simulation of the requester/holder meeting process.
//!
//! Every requester/holder pair meets according to an independent Poisson
//! process with rate `λ_ij`. A requester receives the content at its first
//! meeting with any holder; a requester still waiting at the TTL is served
//! by forced delivery at exactly the TTL.
//!
//! The simulation uses the direct (Gillespie) method over requesters: the
//! aggregate rate of requester `i` is `Σ_j λ_ij` over current holders, the
//! next meeting happens after an exponential delay with the total aggregate
//! rate, and the requester is picked proportionally to its aggregate rate
//! through a binary sum tree. In [`DisseminationMode::Epidemic`] a served
//! requester turns into a holder and the aggregate rates of the remaining
//! requesters are updated incrementally.
//!
//! `m_lambda` is the mean rate of a single requester/holder *pair*.

use std::io::{self, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma};
use rayon::prelude::*;
use thiserror::Error;

use crate::analytic::Deadline;
use crate::stats::{mean_and_std_error, Estimate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid population: {0}")]
    InvalidPopulation(String),
    #[error("invalid meeting model: {0}")]
    InvalidModel(String),
    #[error("replication count must be at least 1")]
    NoReplications,
}

/// Distribution of per-pair meeting rates, each with mean `m_lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateDistribution {
    /// Every pair meets at exactly `m_lambda`.
    Deterministic,
    /// Exponential with mean `m_lambda`.
    Exponential,
    /// Gamma with the given shape and scale `m_lambda / shape`.
    Gamma { shape: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisseminationMode {
    /// Served requesters become holders; `r + h` is conserved.
    Epidemic,
    /// The holder set never grows.
    FixedHolders,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeetingModel {
    pub n_requesters: usize,
    pub n_holders: usize,
    pub rate_dist: RateDistribution,
    pub m_lambda: f64,
    pub mode: DisseminationMode,
}

fn as_count(name: &str, value: f64) -> Result<usize, SimError> {
    if value.is_finite() && value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as usize)
    } else {
        Err(SimError::InvalidPopulation(format!(
            "{name} = {value} is not a non-negative integer"
        )))
    }
}

impl MeetingModel {
    pub fn new(
        n_requesters: usize,
        n_holders: usize,
        rate_dist: RateDistribution,
        m_lambda: f64,
        mode: DisseminationMode,
    ) -> Result<Self, SimError> {
        let model = Self {
            n_requesters,
            n_holders,
            rate_dist,
            m_lambda,
            mode,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a model from real-valued counts, rejecting anything that is
    /// not a non-negative integer.
    pub fn from_counts(
        requesters: f64,
        holders: f64,
        rate_dist: RateDistribution,
        m_lambda: f64,
        mode: DisseminationMode,
    ) -> Result<Self, SimError> {
        Self::new(
            as_count("requesters", requesters)?,
            as_count("holders", holders)?,
            rate_dist,
            m_lambda,
            mode,
        )
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_requesters == 0 {
            return Err(SimError::InvalidPopulation("at least one requester is required".into()));
        }
        if !(self.m_lambda.is_finite() && self.m_lambda > 0.0) {
            return Err(SimError::InvalidModel(format!(
                "m_lambda = {} must be > 0",
                self.m_lambda
            )));
        }
        if let RateDistribution::Gamma { shape } = self.rate_dist {
            if !(shape.is_finite() && shape > 0.0) {
                return Err(SimError::InvalidModel(format!("gamma shape = {shape} must be > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeliveryVia {
    EdgeMeeting,
    ForcedAtDeadline,
}

impl DeliveryVia {
    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryVia::EdgeMeeting => "edge-meeting",
            DeliveryVia::ForcedAtDeadline => "forced-at-deadline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeliveryRecord {
    pub requester: usize,
    pub delivery_time: f64,
    pub via: DeliveryVia,
}

/// Node ids: holders are `0..n_holders`, requester `i` is node `n_holders + i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Meeting { requester: usize, holder: usize },
    DeadlineExpiry { requester: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
}

/// Full output of one replication: processed events in order and one
/// delivery record per requester, indexed by requester id.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub events: Vec<SimEvent>,
    pub records: Vec<DeliveryRecord>,
}

impl Replication {
    pub fn edge_fraction(&self) -> f64 {
        let edge = self
            .records
            .iter()
            .filter(|r| r.via == DeliveryVia::EdgeMeeting)
            .count();
        edge as f64 / self.records.len() as f64
    }

    pub fn mean_delay(&self) -> f64 {
        self.records.iter().map(|r| r.delivery_time).sum::<f64>() / self.records.len() as f64
    }
}

/// Seed of replication `k`: splitmix64 applied to `seed + (k + 1)·γ`,
/// with `γ = 0x9E3779B97F4A7C15`.
pub fn replication_seed(seed: u64, k: u64) -> u64 {
    splitmix64(seed.wrapping_add(k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-pair rates between requesters (rows) and nodes (columns).
enum PairRates {
    Constant(f64),
    Dense { cols: usize, data: Vec<f64> },
}

impl PairRates {
    fn sample(model: &MeetingModel, rng: &mut ChaCha8Rng) -> Self {
        let m = model.m_lambda;
        let mut draw: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match model.rate_dist {
            RateDistribution::Deterministic => return PairRates::Constant(m),
            RateDistribution::Exponential => {
                let d = Exp::new(1.0 / m).expect("validated rate");
                Box::new(move |rng| d.sample(rng))
            }
            RateDistribution::Gamma { shape } => {
                let d = Gamma::new(shape, m / shape).expect("validated shape");
                Box::new(move |rng| d.sample(rng))
            }
        };
        let (h, r) = (model.n_holders, model.n_requesters);
        let cols = match model.mode {
            DisseminationMode::FixedHolders => h,
            DisseminationMode::Epidemic => h + r,
        };
        let mut data = vec![0.0; r * cols];
        for i in 0..r {
            for j in 0..h {
                data[i * cols + j] = draw(rng);
            }
        }
        if model.mode == DisseminationMode::Epidemic {
            // requester/requester pairs are symmetric: λ(i, k) = λ(k, i)
            for i in 0..r {
                for k in (i + 1)..r {
                    let v = draw(rng);
                    data[i * cols + h + k] = v;
                    data[k * cols + h + i] = v;
                }
            }
        }
        PairRates::Dense { cols, data }
    }

    fn get(&self, requester: usize, node: usize) -> f64 {
        match self {
            PairRates::Constant(v) => *v,
            PairRates::Dense { cols, data } => data[requester * cols + node],
        }
    }
}

/// Complete binary tree of partial sums over non-negative leaf weights.
/// Parents are recomputed from their children on every update, so sums do
/// not accumulate drift.
struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        let leaves = n.next_power_of_two().max(1);
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    fn set(&mut self, i: usize, value: f64) {
        let mut idx = self.leaves + i;
        self.nodes[idx] = value;
        while idx > 1 {
            idx /= 2;
            self.nodes[idx] = self.nodes[2 * idx] + self.nodes[2 * idx + 1];
        }
    }

    fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative interval contains `u`, with `0 <= u < total`.
    fn find(&self, mut u: f64) -> usize {
        let mut idx = 1;
        while idx < self.leaves {
            let left = self.nodes[2 * idx];
            if u < left || self.nodes[2 * idx + 1] <= 0.0 {
                idx *= 2;
            } else {
                u -= left;
                idx = 2 * idx + 1;
            }
        }
        idx - self.leaves
    }
}

/// Runs one replication and returns its full event log.
pub fn simulate(model: &MeetingModel, ttl: Deadline, seed: u64) -> Result<Replication, SimError> {
    model.validate()?;
    let ttl = ttl.ttl();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rates = PairRates::sample(model, &mut rng);

    let (h0, r0) = (model.n_holders, model.n_requesters);
    let mut holders: Vec<usize> = (0..h0).collect();
    holders.reserve(r0);
    let mut tree = SumTree::new(r0);
    let mut aggregate = vec![0.0; r0];
    for (i, agg) in aggregate.iter_mut().enumerate() {
        *agg = holders.iter().map(|&j| rates.get(i, j)).sum();
        tree.set(i, *agg);
    }

    let mut waiting = vec![true; r0];
    let mut records: Vec<Option<DeliveryRecord>> = vec![None; r0];
    let mut events = Vec::new();
    let mut t = 0.0;

    loop {
        let total = tree.total();
        if total <= 0.0 {
            break;
        }
        let wait: f64 = Exp1.sample(&mut rng);
        t += wait / total;
        if t > ttl {
            break;
        }
        let u: f64 = rng.random::<f64>() * total;
        let i = tree.find(u);
        debug_assert!(waiting[i] && tree.get(i) > 0.0);

        let holder = match &rates {
            PairRates::Constant(_) => holders[rng.random_range(0..holders.len())],
            dense => {
                let mut v = rng.random::<f64>() * aggregate[i];
                let mut chosen = *holders.last().expect("positive rate implies a holder");
                for &j in &holders {
                    let w = dense.get(i, j);
                    if v < w {
                        chosen = j;
                        break;
                    }
                    v -= w;
                }
                chosen
            }
        };

        events.push(SimEvent {
            time: t,
            kind: EventKind::Meeting { requester: i, holder },
        });
        records[i] = Some(DeliveryRecord {
            requester: i,
            delivery_time: t,
            via: DeliveryVia::EdgeMeeting,
        });
        waiting[i] = false;
        aggregate[i] = 0.0;
        tree.set(i, 0.0);

        if model.mode == DisseminationMode::Epidemic {
            let node = h0 + i;
            holders.push(node);
            for k in 0..r0 {
                if waiting[k] {
                    aggregate[k] += rates.get(k, node);
                    tree.set(k, aggregate[k]);
                }
            }
        }
    }

    for (i, rec) in records.iter_mut().enumerate() {
        if rec.is_none() {
            events.push(SimEvent {
                time: ttl,
                kind: EventKind::DeadlineExpiry { requester: i },
            });
            *rec = Some(DeliveryRecord {
                requester: i,
                delivery_time: ttl,
                via: DeliveryVia::ForcedAtDeadline,
            });
        }
    }

    Ok(Replication {
        events,
        records: records.into_iter().map(|r| r.expect("filled above")).collect(),
    })
}

/// One record per requester, ordered by requester id.
pub fn run_replication(model: &MeetingModel, ttl: Deadline, seed: u64) -> Result<Vec<DeliveryRecord>, SimError> {
    simulate(model, ttl, seed).map(|rep| rep.records)
}

/// Runs `n` replications in parallel, returning their results in index
/// order regardless of scheduling.
pub fn replicate<T, F>(model: &MeetingModel, ttl: Deadline, n: usize, seed: u64, f: F) -> Result<Vec<T>, SimError>
where
    T: Send,
    F: Fn(Replication) -> T + Sync,
{
    model.validate()?;
    if n == 0 {
        return Err(SimError::NoReplications);
    }
    (0..n as u64)
        .into_par_iter()
        .map(|k| simulate(model, ttl, replication_seed(seed, k)).map(&f))
        .collect()
}

/// Mean fraction of requesters served by a meeting before the TTL, with the
/// standard error across replications.
pub fn estimate_delivery_probability(
    model: &MeetingModel,
    ttl: Deadline,
    n_replications: usize,
    seed: u64,
) -> Result<Estimate, SimError> {
    let fractions = replicate(model, ttl, n_replications, seed, |rep| rep.edge_fraction())?;
    Ok(mean_and_std_error(&fractions))
}

/// Mean of `min(first meeting, TTL)` over all requesters, with the standard
/// error of the per-replication means.
pub fn estimate_expected_delay(
    model: &MeetingModel,
    ttl: Deadline,
    n_replications: usize,
    seed: u64,
) -> Result<Estimate, SimError> {
    let means = replicate(model, ttl, n_replications, seed, |rep| rep.mean_delay())?;
    Ok(mean_and_std_error(&means))
}

/// All delivery times of `n_replications` replications, concatenated in
/// replication order.
pub fn delivery_times(
    model: &MeetingModel,
    ttl: Deadline,
    n_replications: usize,
    seed: u64,
) -> Result<Vec<f64>, SimError> {
    let per_rep = replicate(model, ttl, n_replications, seed, |rep| {
        rep.records.iter().map(|r| r.delivery_time).collect::<Vec<_>>()
    })?;
    Ok(per_rep.into_iter().flatten().collect())
}

pub const TRACE_CSV_HEADER: &str = "replication,requester_id,delivery_time_s,via";

/// Writes per-replication delivery records as CSV.
pub fn write_trace_csv<W: Write>(replications: &[Vec<DeliveryRecord>], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for (k, records) in replications.iter().enumerate() {
        for r in records {
            writeln!(out, "{k},{},{},{}", r.requester, r.delivery_time, r.via.as_str())?;
        }
    }
    Ok(())
}
