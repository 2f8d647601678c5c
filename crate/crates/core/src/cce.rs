//! Congestion Control Engine.
//!
//! A single-owner state machine that classifies incoming traffic, tracks
//! RAN congestion with hysteresis, redirects delay-tolerant (DT) content
//! into an edge buffer while the RAN is congested, and releases buffered
//! content either when congestion is relieved (earliest deadline first) or
//! when a deadline arrives (forced delivery).
//!
//! Time is in seconds, sizes in bits, rates in bits per second.
//!
//! [`run_scenario`] drives the engine over a [`LoadProfile`] on a fixed
//! tick and compares the resulting RAN utilization with a pass-through
//! baseline computed from the same profile.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CceError {
    #[error("no classification policy for {0:?} traffic")]
    UnknownClass(TrafficClass),
    #[error("clock regression: event at {event} s precedes current time {now} s")]
    ClockRegression { now: f64, event: f64 },
    #[error("invalid status transition {from:?} -> {to:?} for item {id}")]
    InvalidTransition {
        id: u64,
        from: ContentStatus,
        to: ContentStatus,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid load profile: {0}")]
    InvalidProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficClass {
    DelayTolerant,
    DelaySensitive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContentStatus {
    Pending,
    Buffered,
    DeliveredEdge,
    DeliveredForced,
}

impl ContentStatus {
    fn can_become(self, next: ContentStatus) -> bool {
        use ContentStatus::*;
        matches!(
            (self, next),
            (Pending, Buffered) | (Pending, DeliveredEdge) | (Buffered, DeliveredEdge) | (Buffered, DeliveredForced)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentItem {
    pub id: u64,
    pub size_bits: f64,
    pub class: TrafficClass,
    pub created_at: f64,
    /// Absolute deadline, set by [`classify`].
    pub deadline_at: Option<f64>,
    status: ContentStatus,
}

impl ContentItem {
    pub fn new(id: u64, size_bits: f64, class: TrafficClass, created_at: f64) -> Self {
        Self {
            id,
            size_bits,
            class,
            created_at,
            deadline_at: None,
            status: ContentStatus::Pending,
        }
    }

    pub fn status(&self) -> ContentStatus {
        self.status
    }

    pub fn transition(&mut self, next: ContentStatus) -> Result<(), CceError> {
        if self.class == TrafficClass::DelaySensitive && next == ContentStatus::Buffered {
            return Err(CceError::InvalidTransition {
                id: self.id,
                from: self.status,
                to: next,
            });
        }
        if !self.status.can_become(next) {
            return Err(CceError::InvalidTransition {
                id: self.id,
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }
}

/// Static class → TTL map standing in for traffic inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPolicy {
    ttl: BTreeMap<TrafficClass, f64>,
}

impl ClassPolicy {
    /// Policy with the given DT TTL; delay-sensitive traffic gets TTL 0.
    pub fn new(dt_ttl: f64) -> Self {
        let mut ttl = BTreeMap::new();
        ttl.insert(TrafficClass::DelayTolerant, dt_ttl);
        ttl.insert(TrafficClass::DelaySensitive, 0.0);
        Self { ttl }
    }

    pub fn empty() -> Self {
        Self { ttl: BTreeMap::new() }
    }

    pub fn with(mut self, class: TrafficClass, ttl: f64) -> Self {
        self.ttl.insert(class, ttl);
        self
    }

    pub fn ttl(&self, class: TrafficClass) -> Option<f64> {
        self.ttl.get(&class).copied()
    }
}

/// Assigns the absolute deadline. Delay-sensitive traffic is due
/// immediately.
pub fn classify(item: &ContentItem, policy: &ClassPolicy) -> Result<ContentItem, CceError> {
    if item.status != ContentStatus::Pending {
        return Err(CceError::InvalidTransition {
            id: item.id,
            from: item.status,
            to: ContentStatus::Pending,
        });
    }
    let ttl = policy.ttl(item.class).ok_or(CceError::UnknownClass(item.class))?;
    let deadline = match item.class {
        TrafficClass::DelayTolerant => item.created_at + ttl,
        TrafficClass::DelaySensitive => item.created_at,
    };
    Ok(ContentItem {
        deadline_at: Some(deadline),
        ..item.clone()
    })
}

/// RAN view reported by the radio network information feed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RanState {
    pub capacity_bps: f64,
    pub offered_load_bps: f64,
    pub congested: bool,
    pub theta_high: f64,
    pub theta_low: f64,
}

impl RanState {
    pub fn new(capacity_bps: f64, theta_high: f64, theta_low: f64) -> Result<Self, CceError> {
        if !(capacity_bps.is_finite() && capacity_bps > 0.0) {
            return Err(CceError::InvalidConfig(format!("capacity {capacity_bps} must be > 0")));
        }
        let in_range = |v: f64| v > 0.0 && v <= 1.0;
        if !in_range(theta_high) || !in_range(theta_low) || theta_low > theta_high {
            return Err(CceError::InvalidConfig(format!(
                "thresholds must satisfy 0 < theta_low ({theta_low}) <= theta_high ({theta_high}) <= 1"
            )));
        }
        Ok(Self {
            capacity_bps,
            offered_load_bps: 0.0,
            congested: false,
            theta_high,
            theta_low,
        })
    }

    pub fn utilization(&self) -> f64 {
        self.offered_load_bps / self.capacity_bps
    }

    /// Applies the hysteresis rule to a new load report: enter congestion
    /// above `theta_high`, leave it below `theta_low`, otherwise keep the
    /// previous flag. Utilization above 1 is accepted as is.
    pub fn detect_congestion(&self, offered_load_bps: f64) -> RanState {
        let util = offered_load_bps / self.capacity_bps;
        let congested = if self.congested {
            util >= self.theta_low
        } else {
            util > self.theta_high
        };
        RanState {
            offered_load_bps,
            congested,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BufferKey {
    deadline: f64,
    id: u64,
}

impl Eq for BufferKey {}

impl PartialOrd for BufferKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BufferKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.deadline.total_cmp(&other.deadline).then(self.id.cmp(&other.id))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BufferedContent {
    pub item: ContentItem,
    pub buffered_at: f64,
    /// Bits already drained towards the requester.
    pub sent_bits: f64,
}

/// Edge storage ordered earliest deadline first, ties by id.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeBuffer {
    capacity_bits: f64,
    occupancy_bits: f64,
    entries: BTreeMap<BufferKey, BufferedContent>,
}

impl EdgeBuffer {
    pub fn new(capacity_bits: f64) -> Result<Self, CceError> {
        if capacity_bits.is_nan() || capacity_bits <= 0.0 {
            return Err(CceError::InvalidConfig(format!(
                "buffer capacity {capacity_bits} must be > 0"
            )));
        }
        Ok(Self {
            capacity_bits,
            occupancy_bits: 0.0,
            entries: BTreeMap::new(),
        })
    }

    pub fn capacity_bits(&self) -> f64 {
        self.capacity_bits
    }

    pub fn occupancy_bits(&self) -> f64 {
        self.occupancy_bits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn fits(&self, size_bits: f64) -> bool {
        self.occupancy_bits + size_bits <= self.capacity_bits
    }

    /// Buffered content in drain order.
    pub fn iter(&self) -> impl Iterator<Item = &BufferedContent> {
        self.entries.values()
    }

    fn insert(&mut self, item: ContentItem, now: f64) {
        let key = BufferKey {
            deadline: item.deadline_at.expect("classified before buffering"),
            id: item.id,
        };
        self.occupancy_bits += item.size_bits;
        self.entries.insert(
            key,
            BufferedContent {
                item,
                buffered_at: now,
                sent_bits: 0.0,
            },
        );
    }

    fn head_mut(&mut self) -> Option<&mut BufferedContent> {
        self.entries.values_mut().next()
    }

    fn pop_head(&mut self) -> Option<BufferedContent> {
        let entry = self.entries.pop_first().map(|(_, v)| v)?;
        self.occupancy_bits = if self.entries.is_empty() {
            0.0
        } else {
            self.occupancy_bits - entry.item.size_bits
        };
        Some(entry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CceConfig {
    pub capacity_bps: f64,
    pub theta_high: f64,
    pub theta_low: f64,
    /// Fraction of the headroom below `theta_high` used for draining.
    pub drain_headroom: f64,
    /// Forced deliveries happen this long before the deadline.
    pub guard_s: f64,
    pub buffer_bits: f64,
    pub tick_s: f64,
    pub policy: ClassPolicy,
}

impl CceConfig {
    pub fn new(capacity_bps: f64, dt_ttl: f64) -> Self {
        Self {
            capacity_bps,
            theta_high: 0.9,
            theta_low: 0.7,
            drain_headroom: 0.8,
            guard_s: 0.0,
            buffer_bits: f64::INFINITY,
            tick_s: 1.0,
            policy: ClassPolicy::new(dt_ttl),
        }
    }

    pub fn validate(&self) -> Result<(), CceError> {
        RanState::new(self.capacity_bps, self.theta_high, self.theta_low)?;
        EdgeBuffer::new(self.buffer_bits)?;
        if !(self.drain_headroom > 0.0 && self.drain_headroom <= 1.0) {
            return Err(CceError::InvalidConfig(format!(
                "drain_headroom {} must be in (0, 1]",
                self.drain_headroom
            )));
        }
        if !(self.guard_s.is_finite() && self.guard_s >= 0.0) {
            return Err(CceError::InvalidConfig(format!(
                "guard_s {} must be >= 0",
                self.guard_s
            )));
        }
        if !(self.tick_s.is_finite() && self.tick_s > 0.0) {
            return Err(CceError::InvalidConfig(format!("tick_s {} must be > 0", self.tick_s)));
        }
        for (class, ttl) in &self.policy.ttl {
            if !(ttl.is_finite() && *ttl >= 0.0) {
                return Err(CceError::InvalidConfig(format!("TTL {ttl} for {class:?} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CceEvent {
    Arrival(ContentItem),
    /// Start of a load-integration tick; drains the buffer if the RAN is
    /// not congested.
    ClockTick {
        time: f64,
    },
    /// New RAN load report.
    LoadChange {
        time: f64,
        offered_load_bps: f64,
    },
}

impl CceEvent {
    pub fn time(&self) -> f64 {
        match self {
            CceEvent::Arrival(item) => item.created_at,
            CceEvent::ClockTick { time } | CceEvent::LoadChange { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionKind {
    /// Sent straight to the RAN on arrival.
    PassThrough,
    /// DT content that should have been buffered but did not fit.
    OverflowPassThrough,
    /// Redirected into the edge buffer (backhaul, no RAN load).
    Buffer,
    /// Part of a buffered item drained; the item stays buffered.
    DrainPartial,
    /// Buffered item fully drained after congestion relief.
    DeliverEdge,
    /// Buffered item sent at its deadline regardless of congestion.
    DeliverForced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CceAction {
    pub time: f64,
    pub item_id: u64,
    pub kind: ActionKind,
    /// Bits this action puts on the RAN.
    pub bits: f64,
    /// Congestion flag at the moment the action was taken.
    pub congested: bool,
}

/// Engine state: RAN view, edge buffer and the current clock.
#[derive(Debug, Clone)]
pub struct CongestionControlEngine {
    config: CceConfig,
    ran: RanState,
    buffer: EdgeBuffer,
    now: f64,
}

impl CongestionControlEngine {
    pub fn new(config: CceConfig) -> Result<Self, CceError> {
        config.validate()?;
        Ok(Self {
            ran: RanState::new(config.capacity_bps, config.theta_high, config.theta_low)?,
            buffer: EdgeBuffer::new(config.buffer_bits)?,
            config,
            now: 0.0,
        })
    }

    pub fn ran(&self) -> &RanState {
        &self.ran
    }

    pub fn buffer(&self) -> &EdgeBuffer {
        &self.buffer
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn config(&self) -> &CceConfig {
        &self.config
    }

    /// Drain rate while not congested: a share of the capacity left below
    /// the congestion threshold.
    pub fn drain_rate_bps(&self) -> f64 {
        let headroom = self.ran.theta_high * self.ran.capacity_bps - self.ran.offered_load_bps;
        self.config.drain_headroom * headroom.max(0.0)
    }

    /// Applies one event. Deadlines due at or before the event time fire
    /// first, stamped with their exact due time.
    pub fn step(&mut self, event: CceEvent) -> Result<Vec<CceAction>, CceError> {
        let t = event.time();
        if t.is_nan() || t < self.now {
            return Err(CceError::ClockRegression {
                now: self.now,
                event: t,
            });
        }
        let mut actions = Vec::new();
        self.force_due(|due| due <= t, &mut actions)?;
        self.now = t;

        match event {
            CceEvent::LoadChange { offered_load_bps, .. } => {
                self.ran = self.ran.detect_congestion(offered_load_bps.max(0.0));
            }
            CceEvent::ClockTick { .. } => {
                if !self.ran.congested {
                    self.drain(t, &mut actions)?;
                }
            }
            CceEvent::Arrival(item) => {
                self.admit(item, t, &mut actions)?;
                self.force_due(|due| due <= t, &mut actions)?;
            }
        }
        Ok(actions)
    }

    /// Fires every deadline strictly before `t` without moving the clock.
    pub fn expire_before(&mut self, t: f64) -> Result<Vec<CceAction>, CceError> {
        let mut actions = Vec::new();
        self.force_due(|due| due < t, &mut actions)?;
        Ok(actions)
    }

    fn due_time(&self, entry: &BufferedContent) -> f64 {
        let deadline = entry.item.deadline_at.expect("buffered items are classified");
        (deadline - self.config.guard_s).max(entry.buffered_at)
    }

    fn force_due(&mut self, is_due: impl Fn(f64) -> bool, actions: &mut Vec<CceAction>) -> Result<(), CceError> {
        loop {
            let Some(due) = self.buffer.iter().next().map(|head| self.due_time(head)) else {
                break;
            };
            if !is_due(due) {
                break;
            }
            let mut entry = self.buffer.pop_head().expect("head exists");
            entry.item.transition(ContentStatus::DeliveredForced)?;
            actions.push(CceAction {
                time: due,
                item_id: entry.item.id,
                kind: ActionKind::DeliverForced,
                bits: entry.item.size_bits - entry.sent_bits,
                congested: self.ran.congested,
            });
        }
        Ok(())
    }

    fn admit(&mut self, item: ContentItem, t: f64, actions: &mut Vec<CceAction>) -> Result<(), CceError> {
        let mut item = classify(&item, &self.config.policy)?;
        let congested = self.ran.congested;
        let kind = match item.class {
            TrafficClass::DelayTolerant if congested && self.buffer.fits(item.size_bits) => ActionKind::Buffer,
            TrafficClass::DelayTolerant if congested => ActionKind::OverflowPassThrough,
            _ => ActionKind::PassThrough,
        };
        let bits = if kind == ActionKind::Buffer {
            0.0
        } else {
            item.size_bits
        };
        actions.push(CceAction {
            time: t,
            item_id: item.id,
            kind,
            bits,
            congested,
        });
        if kind == ActionKind::Buffer {
            item.transition(ContentStatus::Buffered)?;
            self.buffer.insert(item, t);
        } else {
            item.transition(ContentStatus::DeliveredEdge)?;
        }
        Ok(())
    }

    /// Drains earliest-deadline-first for one tick. Completion times are
    /// stamped inside the tick; an item that could not finish before its
    /// due time is left for forced delivery.
    fn drain(&mut self, t: f64, actions: &mut Vec<CceAction>) -> Result<(), CceError> {
        let rate = self.drain_rate_bps();
        if rate <= 0.0 {
            return Ok(());
        }
        let mut budget = rate * self.config.tick_s;
        let mut elapsed_bits = 0.0;
        while budget > 0.0 {
            let Some(head) = self.buffer.iter().next() else {
                break;
            };
            let due = self.due_time(head);
            let remaining = head.item.size_bits - head.sent_bits;
            let id = head.item.id;
            if remaining <= budget {
                let done = t + (elapsed_bits + remaining) / rate;
                if done > due {
                    break;
                }
                let mut entry = self.buffer.pop_head().expect("head exists");
                entry.item.transition(ContentStatus::DeliveredEdge)?;
                actions.push(CceAction {
                    time: done,
                    item_id: id,
                    kind: ActionKind::DeliverEdge,
                    bits: remaining,
                    congested: false,
                });
                budget -= remaining;
                elapsed_bits += remaining;
            } else {
                let head = self.buffer.head_mut().expect("head exists");
                head.sent_bits += budget;
                actions.push(CceAction {
                    time: t,
                    item_id: id,
                    kind: ActionKind::DrainPartial,
                    bits: budget,
                    congested: false,
                });
                budget = 0.0;
            }
        }
        Ok(())
    }
}

/// Constant delay-sensitive rate over `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub rate_bps: f64,
}

/// Piecewise-constant delay-sensitive load plus a schedule of DT arrivals.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    segments: Vec<LoadSegment>,
    arrivals: Vec<ContentItem>,
}

/// Parameters of the canned peak-hour profile. Utilizations are fractions of
/// `capacity_bps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakHour {
    pub capacity_bps: f64,
    pub horizon_s: f64,
    pub base_util: f64,
    pub peak_util: f64,
    pub peak_start_s: f64,
    pub peak_end_s: f64,
    /// DT demand as a fraction of capacity, constant over the horizon.
    pub dt_util: f64,
    pub dt_item_bits: f64,
}

impl Default for PeakHour {
    fn default() -> Self {
        Self {
            capacity_bps: 1e8,
            horizon_s: 3600.0,
            base_util: 0.5,
            peak_util: 0.85,
            peak_start_s: 1200.0,
            peak_end_s: 2400.0,
            dt_util: 0.1,
            dt_item_bits: 1e7,
        }
    }
}

impl LoadProfile {
    pub fn new(segments: Vec<LoadSegment>, mut arrivals: Vec<ContentItem>) -> Result<Self, CceError> {
        let first = segments
            .first()
            .ok_or_else(|| CceError::InvalidProfile("no load segments".into()))?;
        if first.start_s != 0.0 {
            return Err(CceError::InvalidProfile(format!(
                "first segment starts at {} instead of 0",
                first.start_s
            )));
        }
        for (k, s) in segments.iter().enumerate() {
            if !(s.end_s.is_finite() && s.end_s > s.start_s) {
                return Err(CceError::InvalidProfile(format!(
                    "segment {k} has end {} <= start {}",
                    s.end_s, s.start_s
                )));
            }
            if !(s.rate_bps.is_finite() && s.rate_bps >= 0.0) {
                return Err(CceError::InvalidProfile(format!(
                    "segment {k} has negative rate {}",
                    s.rate_bps
                )));
            }
            if k > 0 && segments[k - 1].end_s != s.start_s {
                return Err(CceError::InvalidProfile(format!(
                    "segment {k} starts at {} but the previous one ends at {}",
                    s.start_s,
                    segments[k - 1].end_s
                )));
            }
        }
        let horizon = segments.last().expect("non-empty").end_s;
        for item in &arrivals {
            if item.class != TrafficClass::DelayTolerant {
                return Err(CceError::InvalidProfile(format!(
                    "arrival {} is not delay-tolerant",
                    item.id
                )));
            }
            if !(item.created_at >= 0.0 && item.created_at < horizon) {
                return Err(CceError::InvalidProfile(format!(
                    "arrival {} at {} s outside [0, {horizon})",
                    item.id, item.created_at
                )));
            }
            if !(item.size_bits.is_finite() && item.size_bits > 0.0) {
                return Err(CceError::InvalidProfile(format!(
                    "arrival {} has size {}",
                    item.id, item.size_bits
                )));
            }
        }
        arrivals.sort_by(|a, b| a.created_at.total_cmp(&b.created_at).then(a.id.cmp(&b.id)));
        Ok(Self { segments, arrivals })
    }

    pub fn peak_hour(p: &PeakHour) -> Result<Self, CceError> {
        if !(0.0 < p.peak_start_s && p.peak_start_s < p.peak_end_s && p.peak_end_s < p.horizon_s) {
            return Err(CceError::InvalidProfile(
                "peak must lie strictly inside the horizon".into(),
            ));
        }
        let c = p.capacity_bps;
        let segments = vec![
            LoadSegment {
                start_s: 0.0,
                end_s: p.peak_start_s,
                rate_bps: p.base_util * c,
            },
            LoadSegment {
                start_s: p.peak_start_s,
                end_s: p.peak_end_s,
                rate_bps: p.peak_util * c,
            },
            LoadSegment {
                start_s: p.peak_end_s,
                end_s: p.horizon_s,
                rate_bps: p.base_util * c,
            },
        ];
        let mut arrivals = Vec::new();
        let dt_rate = p.dt_util * c;
        if dt_rate > 0.0 {
            let spacing = p.dt_item_bits / dt_rate;
            let mut k = 0u64;
            loop {
                let t = (k as f64 + 0.5) * spacing;
                if t >= p.horizon_s {
                    break;
                }
                arrivals.push(ContentItem::new(k, p.dt_item_bits, TrafficClass::DelayTolerant, t));
                k += 1;
            }
        }
        Self::new(segments, arrivals)
    }

    pub fn horizon_s(&self) -> f64 {
        self.segments.last().expect("validated non-empty").end_s
    }

    pub fn segments(&self) -> &[LoadSegment] {
        &self.segments
    }

    pub fn arrivals(&self) -> &[ContentItem] {
        &self.arrivals
    }

    /// Delay-sensitive bits offered over `[a, b)`.
    pub fn ds_bits(&self, a: f64, b: f64) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let lo = s.start_s.max(a);
                let hi = s.end_s.min(b);
                if hi > lo {
                    s.rate_bps * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickMetrics {
    pub t_s: f64,
    pub baseline_util: f64,
    pub cce_util: f64,
    pub buffer_occupancy_bits: f64,
    pub forced_count_cum: u64,
    pub edge_count_cum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioSummary {
    pub peak_baseline_util: f64,
    pub peak_cce_util: f64,
    pub total_buffered_bits: f64,
    pub buffered_count: u64,
    pub edge_count: u64,
    pub forced_count: u64,
    pub passthrough_count: u64,
    pub overflow_count: u64,
    pub deadline_misses: u64,
    /// Buffered-content transmissions other than forced deliveries that
    /// happened while the RAN was congested.
    pub drains_while_congested: u64,
    /// Items still buffered at the horizon with a later deadline.
    pub still_buffered: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioMetrics {
    pub ticks: Vec<TickMetrics>,
    pub summary: ScenarioSummary,
    pub actions: Vec<CceAction>,
}

/// Simulates `[0, horizon)` on the configured tick.
///
/// At the start of every tick the engine receives the tick's offered demand
/// (delay-sensitive bits plus DT bits arriving in the tick) as a load report,
/// then a clock tick, then the tick's DT arrivals in time order. The
/// baseline sends every DT item on arrival. Transmitted bits count towards
/// the tick whose events produced them.
pub fn run_scenario(profile: &LoadProfile, config: &CceConfig) -> Result<ScenarioMetrics, CceError> {
    let mut engine = CongestionControlEngine::new(config.clone())?;
    let tick = config.tick_s;
    let horizon = profile.horizon_s();
    let n_ticks = (horizon / tick).round() as usize;
    if n_ticks == 0 || ((n_ticks as f64) * tick - horizon).abs() > 1e-9 * horizon {
        return Err(CceError::InvalidConfig(format!(
            "horizon {horizon} s is not a whole number of {tick} s ticks"
        )));
    }
    let tick_bounds = |k: usize| (k as f64 * tick, ((k + 1) as f64 * tick).min(horizon));
    let tick_of = |t: f64| ((t / tick).floor() as usize).min(n_ticks - 1);

    let mut ds_bits = vec![0.0; n_ticks];
    let mut dt_baseline_bits = vec![0.0; n_ticks];
    for (k, bits) in ds_bits.iter_mut().enumerate() {
        let (a, b) = tick_bounds(k);
        *bits = profile.ds_bits(a, b);
    }
    for item in profile.arrivals() {
        dt_baseline_bits[tick_of(item.created_at)] += item.size_bits;
    }

    let mut actions = Vec::new();
    let mut bins: Vec<usize> = Vec::new();
    let mut occupancy = vec![0.0; n_ticks];
    let mut next_arrival = 0;
    let arrivals = profile.arrivals();
    for k in 0..n_ticks {
        let (a, b) = tick_bounds(k);
        let demand_bps = (ds_bits[k] + dt_baseline_bits[k]) / (b - a);
        actions.extend(engine.step(CceEvent::LoadChange {
            time: a,
            offered_load_bps: demand_bps,
        })?);
        actions.extend(engine.step(CceEvent::ClockTick { time: a })?);
        while next_arrival < arrivals.len() && arrivals[next_arrival].created_at < b {
            actions.extend(engine.step(CceEvent::Arrival(arrivals[next_arrival].clone()))?);
            next_arrival += 1;
        }
        actions.extend(engine.expire_before(b)?);
        bins.resize(actions.len(), k);
        occupancy[k] = engine.buffer().occupancy_bits();
    }

    let mut cce_bits = vec![0.0; n_ticks];
    let mut forced = vec![0u64; n_ticks];
    let mut edge = vec![0u64; n_ticks];
    let mut summary = ScenarioSummary {
        peak_baseline_util: 0.0,
        peak_cce_util: 0.0,
        total_buffered_bits: 0.0,
        buffered_count: 0,
        edge_count: 0,
        forced_count: 0,
        passthrough_count: 0,
        overflow_count: 0,
        deadline_misses: 0,
        drains_while_congested: 0,
        still_buffered: engine.buffer().len() as u64,
    };
    let sizes: BTreeMap<u64, f64> = arrivals.iter().map(|i| (i.id, i.size_bits)).collect();
    let mut finished_at: BTreeMap<u64, f64> = BTreeMap::new();
    for (act, &k) in actions.iter().zip(&bins) {
        cce_bits[k] += act.bits;
        match act.kind {
            ActionKind::PassThrough => summary.passthrough_count += 1,
            ActionKind::OverflowPassThrough => summary.overflow_count += 1,
            ActionKind::Buffer => summary.buffered_count += 1,
            ActionKind::DeliverEdge => {
                summary.edge_count += 1;
                edge[k] += 1;
            }
            ActionKind::DeliverForced => {
                summary.forced_count += 1;
                forced[k] += 1;
            }
            ActionKind::DrainPartial => {}
        }
        if matches!(act.kind, ActionKind::DeliverEdge | ActionKind::DrainPartial) && act.congested {
            summary.drains_while_congested += 1;
        }
        if act.kind == ActionKind::Buffer {
            summary.total_buffered_bits += sizes.get(&act.item_id).copied().unwrap_or(0.0);
        }
        if !matches!(act.kind, ActionKind::Buffer | ActionKind::DrainPartial) {
            finished_at.insert(act.item_id, act.time);
        }
    }
    for item in arrivals {
        let deadline = classify(item, &config.policy)?.deadline_at.expect("classified");
        match finished_at.get(&item.id) {
            Some(&done) if done > deadline => summary.deadline_misses += 1,
            None if deadline < horizon => summary.deadline_misses += 1,
            _ => {}
        }
    }

    let capacity = config.capacity_bps;
    let (mut forced_cum, mut edge_cum) = (0, 0);
    let ticks: Vec<TickMetrics> = (0..n_ticks)
        .map(|k| {
            let (a, b) = tick_bounds(k);
            let denom = capacity * (b - a);
            forced_cum += forced[k];
            edge_cum += edge[k];
            TickMetrics {
                t_s: a,
                baseline_util: (ds_bits[k] + dt_baseline_bits[k]) / denom,
                cce_util: (ds_bits[k] + cce_bits[k]) / denom,
                buffer_occupancy_bits: occupancy[k],
                forced_count_cum: forced_cum,
                edge_count_cum: edge_cum,
            }
        })
        .collect();
    summary.peak_baseline_util = ticks.iter().map(|t| t.baseline_util).fold(0.0, f64::max);
    summary.peak_cce_util = ticks.iter().map(|t| t.cce_util).fold(0.0, f64::max);

    Ok(ScenarioMetrics {
        ticks,
        summary,
        actions,
    })
}

pub const TRACE_CSV_HEADER: &str = "t_s,baseline_util,cce_util,buffer_occupancy_bits,forced_count_cum,edge_count_cum";
pub const SUMMARY_CSV_HEADER: &str = "peak_baseline_util,peak_cce_util,total_buffered_bytes,deadline_misses,buffered_count,edge_count,forced_count,overflow_count,still_buffered";

pub fn write_trace_csv<W: Write>(metrics: &ScenarioMetrics, mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for t in &metrics.ticks {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.t_s, t.baseline_util, t.cce_util, t.buffer_occupancy_bits, t.forced_count_cum, t.edge_count_cum
        )?;
    }
    Ok(())
}

pub fn write_summary_csv<W: Write>(summary: &ScenarioSummary, mut out: W) -> io::Result<()> {
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{}",
        summary.peak_baseline_util,
        summary.peak_cce_util,
        summary.total_buffered_bits / 8.0,
        summary.deadline_misses,
        summary.buffered_count,
        summary.edge_count,
        summary.forced_count,
        summary.overflow_count,
        summary.still_buffered
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn dt(id: u64, at: f64, bits: f64) -> ContentItem {
        ContentItem::new(id, bits, TrafficClass::DelayTolerant, at)
    }

    fn engine(dt_ttl: f64) -> CongestionControlEngine {
        CongestionControlEngine::new(CceConfig::new(100.0, dt_ttl)).unwrap()
    }

    fn congest(e: &mut CongestionControlEngine, t: f64) {
        e.step(CceEvent::LoadChange {
            time: t,
            offered_load_bps: 95.0,
        })
        .unwrap();
        assert!(e.ran().congested);
    }

    #[test]
    fn classify_assigns_deadlines() {
        let policy = ClassPolicy::new(600.0);
        assert_eq!(classify(&dt(1, 0.0, 1.0), &policy).unwrap().deadline_at, Some(600.0));
        let ds = ContentItem::new(2, 1.0, TrafficClass::DelaySensitive, 42.0);
        assert_eq!(classify(&ds, &policy).unwrap().deadline_at, Some(42.0));
        let zero = classify(&dt(3, 7.0, 1.0), &ClassPolicy::new(0.0)).unwrap();
        assert_eq!(zero.deadline_at, Some(7.0));

        let only_dt = ClassPolicy::empty().with(TrafficClass::DelayTolerant, 10.0);
        assert_eq!(
            classify(&ds, &only_dt),
            Err(CceError::UnknownClass(TrafficClass::DelaySensitive))
        );
    }

    #[test]
    fn hysteresis() {
        let ran = RanState::new(100.0, 0.9, 0.8).unwrap();
        let up = ran.detect_congestion(96.0);
        assert!(up.congested);
        assert!(up.detect_congestion(85.0).congested);
        assert!(!up.detect_congestion(75.0).congested);
        assert!(!ran.detect_congestion(90.0).congested);
        assert!(!ran.detect_congestion(85.0).congested);
        assert!(ran.detect_congestion(1e6).congested);
        assert!(RanState::new(100.0, 0.9, 0.95).is_err());
        assert!(RanState::new(100.0, 1.2, 0.5).is_err());
        assert!(RanState::new(0.0, 0.9, 0.5).is_err());
    }

    #[test]
    fn status_transitions() {
        let mut item = dt(1, 0.0, 1.0);
        assert!(item.transition(ContentStatus::DeliveredForced).is_err());
        item.transition(ContentStatus::Buffered).unwrap();
        item.transition(ContentStatus::DeliveredForced).unwrap();
        assert!(item.transition(ContentStatus::DeliveredEdge).is_err());

        let mut ds = ContentItem::new(2, 1.0, TrafficClass::DelaySensitive, 0.0);
        assert!(ds.transition(ContentStatus::Buffered).is_err());
        ds.transition(ContentStatus::DeliveredEdge).unwrap();
    }

    #[test]
    fn congested_arrival_is_buffered() {
        let mut e = engine(600.0);
        congest(&mut e, 0.0);
        let acts = e.step(CceEvent::Arrival(dt(1, 1.0, 10.0))).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::Buffer);
        assert_eq!(acts[0].bits, 0.0);
        assert_eq!(e.buffer().occupancy_bits(), 10.0);

        let ds = ContentItem::new(2, 5.0, TrafficClass::DelaySensitive, 2.0);
        let acts = e.step(CceEvent::Arrival(ds)).unwrap();
        assert_eq!(acts[0].kind, ActionKind::PassThrough);
    }

    #[test]
    fn deadline_forces_delivery_while_congested() {
        let mut e = engine(10.0);
        congest(&mut e, 0.0);
        e.step(CceEvent::Arrival(dt(1, 1.0, 10.0))).unwrap();
        assert!(e.step(CceEvent::ClockTick { time: 10.0 }).unwrap().is_empty());
        let acts = e.step(CceEvent::ClockTick { time: 12.0 }).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::DeliverForced);
        assert_eq!(acts[0].time, 11.0);
        assert!(acts[0].congested);
        assert!(e.buffer().is_empty());
    }

    #[test]
    fn zero_ttl_is_forced_on_arrival() {
        let mut e = engine(0.0);
        congest(&mut e, 0.0);
        let acts = e.step(CceEvent::Arrival(dt(1, 3.0, 10.0))).unwrap();
        let kinds: Vec<_> = acts.iter().map(|a| a.kind).collect();
        assert_eq!(kinds, vec![ActionKind::Buffer, ActionKind::DeliverForced]);
        assert_eq!(acts[1].time, 3.0);
    }

    #[test]
    fn buffer_orders_by_deadline_then_id() {
        let mut buf = EdgeBuffer::new(f64::INFINITY).unwrap();
        for (id, deadline) in [(3u64, 300.0), (1, 100.0), (9, 200.0), (4, 200.0)] {
            let mut item = dt(id, 0.0, 1.0);
            item.deadline_at = Some(deadline);
            buf.insert(item, 0.0);
        }
        let order: Vec<u64> = buf.iter().map(|b| b.item.id).collect();
        assert_eq!(order, vec![1, 4, 9, 3]);
        assert_eq!(buf.occupancy_bits(), 4.0);
    }

    #[test]
    fn relief_drains_earliest_deadline_first() {
        let mut e = engine(100.0);
        congest(&mut e, 0.0);
        for (id, at) in [(1u64, 0.0), (2, 10.0), (3, 20.0)] {
            e.step(CceEvent::Arrival(dt(id, at, 10.0))).unwrap();
        }
        assert_eq!(e.buffer().len(), 3);
        e.step(CceEvent::LoadChange {
            time: 30.0,
            offered_load_bps: 10.0,
        })
        .unwrap();
        assert!(!e.ran().congested);
        // drain rate 0.8 * (90 - 10) = 64 bps: all three 10-bit items fit in one tick
        assert_eq!(e.drain_rate_bps(), 64.0);
        let acts = e.step(CceEvent::ClockTick { time: 30.0 }).unwrap();
        let drained: Vec<(u64, f64)> = acts
            .iter()
            .filter(|a| a.kind == ActionKind::DeliverEdge)
            .map(|a| (a.item_id, a.time))
            .collect();
        assert_eq!(drained.iter().map(|d| d.0).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert!(drained.windows(2).all(|w| w[0].1 < w[1].1));
        assert!(acts.iter().all(|a| !a.congested));
        assert!(e.buffer().is_empty());
    }

    #[test]
    fn partial_drain_carries_over_and_forced_sends_the_rest() {
        let mut e = engine(4.0);
        congest(&mut e, 0.0);
        e.step(CceEvent::Arrival(dt(1, 0.0, 100.0))).unwrap();
        e.step(CceEvent::LoadChange {
            time: 1.0,
            offered_load_bps: 50.0,
        })
        .unwrap();
        // 0.8 * (90 - 50) = 32 bits per tick
        let acts = e.step(CceEvent::ClockTick { time: 1.0 }).unwrap();
        assert_eq!(acts[0].kind, ActionKind::DrainPartial);
        assert_eq!(acts[0].bits, 32.0);
        e.step(CceEvent::ClockTick { time: 2.0 }).unwrap();
        e.step(CceEvent::ClockTick { time: 3.0 }).unwrap();
        assert_eq!(e.buffer().iter().next().unwrap().sent_bits, 96.0);
        let acts = e.step(CceEvent::ClockTick { time: 4.0 }).unwrap();
        assert_eq!(acts.len(), 1);
        assert_eq!(acts[0].kind, ActionKind::DeliverForced);
        assert_eq!(acts[0].time, 4.0);
        assert_eq!(acts[0].bits, 4.0);
    }

    #[test]
    fn overflow_passes_through() {
        let mut cfg = CceConfig::new(100.0, 60.0);
        cfg.buffer_bits = 15.0;
        let mut e = CongestionControlEngine::new(cfg).unwrap();
        congest(&mut e, 0.0);
        let a = e.step(CceEvent::Arrival(dt(1, 0.0, 10.0))).unwrap();
        let b = e.step(CceEvent::Arrival(dt(2, 0.5, 10.0))).unwrap();
        assert_eq!(a[0].kind, ActionKind::Buffer);
        assert_eq!(b[0].kind, ActionKind::OverflowPassThrough);
        assert_eq!(b[0].bits, 10.0);
    }

    #[test]
    fn guard_moves_forced_delivery_earlier() {
        let mut cfg = CceConfig::new(100.0, 10.0);
        cfg.guard_s = 3.0;
        let mut e = CongestionControlEngine::new(cfg).unwrap();
        congest(&mut e, 0.0);
        e.step(CceEvent::Arrival(dt(1, 0.0, 1.0))).unwrap();
        let acts = e.step(CceEvent::ClockTick { time: 8.0 }).unwrap();
        assert_eq!(acts[0].kind, ActionKind::DeliverForced);
        assert_eq!(acts[0].time, 7.0);
    }

    #[test]
    fn clock_regression_is_rejected() {
        let mut e = engine(10.0);
        e.step(CceEvent::ClockTick { time: 5.0 }).unwrap();
        assert_eq!(
            e.step(CceEvent::ClockTick { time: 4.0 }),
            Err(CceError::ClockRegression { now: 5.0, event: 4.0 })
        );
    }

    #[test]
    fn profile_validation() {
        let seg = |a, b, r| LoadSegment {
            start_s: a,
            end_s: b,
            rate_bps: r,
        };
        assert!(LoadProfile::new(vec![], vec![]).is_err());
        assert!(LoadProfile::new(vec![seg(1.0, 2.0, 0.0)], vec![]).is_err());
        assert!(LoadProfile::new(vec![seg(0.0, 2.0, 0.0), seg(3.0, 4.0, 0.0)], vec![]).is_err());
        assert!(LoadProfile::new(vec![seg(0.0, 2.0, -1.0)], vec![]).is_err());
        assert!(LoadProfile::new(vec![seg(0.0, 2.0, 1.0)], vec![dt(1, 2.0, 1.0)]).is_err());
        let p = LoadProfile::new(vec![seg(0.0, 2.0, 1.0), seg(2.0, 4.0, 3.0)], vec![dt(1, 1.0, 1.0)]).unwrap();
        assert_eq!(p.horizon_s(), 4.0);
        assert_eq!(p.ds_bits(1.5, 2.5), 0.5 + 1.5);
    }

    #[test]
    fn zero_dt_matches_baseline() {
        let seg = |a, b, r| LoadSegment {
            start_s: a,
            end_s: b,
            rate_bps: r,
        };
        let p = LoadProfile::new(
            vec![seg(0.0, 50.0, 50.0), seg(50.0, 80.0, 99.0), seg(80.0, 100.0, 20.0)],
            vec![],
        )
        .unwrap();
        let m = run_scenario(&p, &CceConfig::new(100.0, 60.0)).unwrap();
        assert_eq!(m.ticks.len(), 100);
        assert!(m.ticks.iter().all(|t| t.cce_util == t.baseline_util));
    }

    #[test]
    fn csv_headers() {
        let p = LoadProfile::peak_hour(&PeakHour {
            horizon_s: 10.0,
            peak_start_s: 2.0,
            peak_end_s: 5.0,
            ..PeakHour::default()
        })
        .unwrap();
        let m = run_scenario(&p, &CceConfig::new(1e8, 1800.0)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_CSV_HEADER);
        assert_eq!(text.lines().count(), 11);
        let mut buf = Vec::new();
        write_summary_csv(&m.summary, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }

    fn profile_strategy() -> impl Strategy<Value = LoadProfile> {
        (
            prop::collection::vec((1u32..40, 0.0f64..1.05), 1..6),
            prop::collection::vec((0.0f64..1.0, 1.0f64..40.0), 0..80),
        )
            .prop_map(|(segs, items)| {
                let mut t = 0.0;
                let segments: Vec<_> = segs
                    .into_iter()
                    .map(|(len, u)| {
                        let s = LoadSegment {
                            start_s: t,
                            end_s: t + len as f64,
                            rate_bps: u * 100.0,
                        };
                        t += len as f64;
                        s
                    })
                    .collect();
                let arrivals = items
                    .into_iter()
                    .enumerate()
                    .map(|(k, (frac, bits))| dt(k as u64, frac * t, bits))
                    .collect();
                LoadProfile::new(segments, arrivals).unwrap()
            })
    }

    proptest! {
        #[test]
        fn scenario_invariants(profile in profile_strategy(), ttl in 0.0f64..30.0) {
            let cfg = CceConfig::new(100.0, ttl);
            let m = run_scenario(&profile, &cfg).unwrap();
            prop_assert_eq!(m.summary.deadline_misses, 0);
            prop_assert_eq!(m.summary.drains_while_congested, 0);
            for a in &m.actions {
                if a.kind == ActionKind::DeliverForced {
                    let item = profile.arrivals().iter().find(|i| i.id == a.item_id).unwrap();
                    prop_assert_eq!(a.time, item.created_at + ttl);
                }
            }
            prop_assert_eq!(&m, &run_scenario(&profile, &cfg).unwrap());
            let s = &m.summary;
            prop_assert_eq!(s.buffered_count, s.edge_count + s.forced_count + s.still_buffered);
        }

        #[test]
        fn no_forced_deliveries_never_raise_the_peak(profile in profile_strategy()) {
            let cfg = CceConfig::new(100.0, 1e6);
            let m = run_scenario(&profile, &cfg).unwrap();
            prop_assert_eq!(m.summary.forced_count, 0);
            prop_assert!(m.summary.peak_cce_util <= m.summary.peak_baseline_util + 1e-12);
        }
    }
}
