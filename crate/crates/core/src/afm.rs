//! Event-driven simulation of the abstract frame model.
//!
//! Each node's clock phase is piecewise linear in global time. Measurements
//! happen when the phase crosses `θ⁰ + kp`, and the resulting correction takes
//! effect when it crosses `θ⁰ + kp + d`. Both instants are found by inverting
//! the current linear segment, so the event sequence is exact and repeatable.
//! Occupancies are integers computed from floors of (possibly delayed) phases.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::OrientedGraph;
use crate::ode::Gains;

/// A link carrying frames from `from` into the elastic buffer at `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedLink {
    pub from: usize,
    pub to: usize,
    pub edge: usize,
    /// `+1` when the buffer sits at the source of `edge`, so `β̄ = +δ_edge`; `−1` otherwise.
    pub sign: i8,
}

impl DirectedLink {
    pub fn label(&self) -> String {
        format!("{}_{}", self.from, self.to)
    }
}

/// Directed links of a graph: for edge `l = (s, t)`, link `2l` is `t → s`
/// (buffer at the source) and link `2l + 1` is `s → t`.
pub fn directed_links(graph: &OrientedGraph) -> Vec<DirectedLink> {
    graph
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(l, &(s, t))| {
            [
                DirectedLink {
                    from: t,
                    to: s,
                    edge: l,
                    sign: 1,
                },
                DirectedLink {
                    from: s,
                    to: t,
                    edge: l,
                    sign: -1,
                },
            ]
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfmScenario {
    pub graph: OrientedGraph,
    pub omega_u: Vec<f64>,
    pub theta0: Vec<f64>,
    /// `ω^(−1)`: frequency on `[0, d/ω^(−1)]`.
    pub omega_m1: Vec<f64>,
    /// `ω^(−2)`: frequency on `[t^e, 0]`.
    pub omega_m2: Vec<f64>,
    /// Per directed link, indexed like [`directed_links`].
    pub beta0: Vec<i64>,
    pub beta_max: i64,
    /// Per directed link, seconds.
    pub latency: Vec<f64>,
    /// Measurement period, local ticks.
    pub p: f64,
    /// Actuation delay, local ticks.
    pub d: f64,
    pub gains: Gains,
    pub omega_min: f64,
    pub omega_max: f64,
    pub t_end: f64,
    pub epoch: f64,
    pub output_dt: f64,
}

impl AfmScenario {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn links(&self) -> Vec<DirectedLink> {
        directed_links(&self.graph)
    }

    pub fn max_latency(&self) -> f64 {
        self.latency.iter().copied().fold(0.0, f64::max)
    }

    /// Latest epoch allowed by the latencies and controller delay.
    pub fn epoch_bound(&self) -> f64 {
        -(self.max_latency() + self.d / self.omega_min)
    }

    pub fn omega_avg(&self) -> f64 {
        self.omega_u.iter().sum::<f64>() / self.n() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let links = 2 * self.graph.m();
        let per_node = [
            ("frequencies.omega_u", &self.omega_u),
            ("afm.theta0", &self.theta0),
            ("afm.omega_m1", &self.omega_m1),
            ("afm.omega_m2", &self.omega_m2),
        ];
        for (field, values) in per_node {
            if values.len() != n {
                return Err(Error::validation(
                    field,
                    format!("expected {n} values, got {}", values.len()),
                ));
            }
            if let Some(k) = values.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(format!("{field}[{k}]"), "must be finite"));
            }
        }
        if self.latency.len() != links {
            return Err(Error::validation(
                "afm.latency",
                format!(
                    "expected {links} per-link values, got {}",
                    self.latency.len()
                ),
            ));
        }
        if self.beta0.len() != links {
            return Err(Error::validation(
                "afm.beta0",
                format!("expected {links} per-link values, got {}", self.beta0.len()),
            ));
        }
        for (i, &th) in self.theta0.iter().enumerate() {
            if !(th > 0.0) || th.fract() == 0.0 {
                return Err(Error::validation(
                    format!("afm.theta0[{i}]"),
                    format!("initial phase must be positive and not an integer, got {th}"),
                ));
            }
        }
        if !(self.omega_min > 0.0) || !(self.omega_max > self.omega_min) {
            return Err(Error::validation(
                "afm.omega_min",
                format!(
                    "need 0 < omega_min < omega_max, got ({}, {})",
                    self.omega_min, self.omega_max
                ),
            ));
        }
        for (field, values) in [
            ("afm.omega_m1", &self.omega_m1),
            ("afm.omega_m2", &self.omega_m2),
        ] {
            for (i, &w) in values.iter().enumerate() {
                if !(w > self.omega_min) {
                    return Err(Error::validation(
                        format!("{field}[{i}]"),
                        format!(
                            "initial frequency {w} must exceed omega_min {}",
                            self.omega_min
                        ),
                    ));
                }
            }
        }
        if self.beta_max <= 0 || self.beta_max % 2 != 0 {
            return Err(Error::validation(
                "afm.beta_max",
                format!("must be positive and even, got {}", self.beta_max),
            ));
        }
        for (k, &b) in self.beta0.iter().enumerate() {
            if b < 0 || b > self.beta_max {
                return Err(Error::validation(
                    format!("afm.beta0[{k}]"),
                    format!("must lie in [0, {}], got {b}", self.beta_max),
                ));
            }
        }
        if let Some(k) = self
            .latency
            .iter()
            .position(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::validation(
                format!("afm.latency[{k}]"),
                "must be non-negative",
            ));
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::validation(
                "afm.p",
                format!("must be positive, got {}", self.p),
            ));
        }
        if !(self.d >= 0.0) || !self.d.is_finite() {
            return Err(Error::validation(
                "afm.d",
                format!("must be non-negative, got {}", self.d),
            ));
        }
        if !(self.epoch < 0.0) || self.epoch > self.epoch_bound() {
            return Err(Error::validation(
                "afm.epoch",
                format!(
                    "epoch must be negative and satisfy t_e <= -(l_ji + d/omega_min) = {}, got {}",
                    self.epoch_bound(),
                    self.epoch
                ),
            ));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::validation(
                "run.t_end",
                format!("must be positive, got {}", self.t_end),
            ));
        }
        if !(self.output_dt > 0.0) || !self.output_dt.is_finite() {
            return Err(Error::validation(
                "run.output_dt",
                format!("must be positive, got {}", self.output_dt),
            ));
        }
        Ok(())
    }
}

/// One linear piece of a phase history, valid from `t` until the next breakpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub t: f64,
    pub phase: f64,
    pub slope: f64,
}

impl Segment {
    fn phase_at(&self, t: f64) -> f64 {
        self.phase + self.slope * (t - self.t)
    }
}

/// Piecewise-linear clock phase `θ_i(t)` of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHistory {
    node: usize,
    segments: VecDeque<Segment>,
}

impl PhaseHistory {
    pub fn new(node: usize, start: Segment) -> Self {
        Self {
            node,
            segments: VecDeque::from([start]),
        }
    }

    /// History defined by the initial conditions: slope `ω^(−2)` on `[t^e, 0]`,
    /// slope `ω^(−1)` from 0 on, both through `θ(0) = θ⁰`.
    pub fn initial(node: usize, theta0: f64, omega_m1: f64, omega_m2: f64, epoch: f64) -> Self {
        let mut h = Self::new(
            node,
            Segment {
                t: epoch,
                phase: theta0 + omega_m2 * epoch,
                slope: omega_m2,
            },
        );
        h.segments.push_back(Segment {
            t: 0.0,
            phase: theta0,
            slope: omega_m1,
        });
        h
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter()
    }

    pub fn start_time(&self) -> f64 {
        self.segments.front().expect("history is never empty").t
    }

    pub fn last(&self) -> &Segment {
        self.segments.back().expect("history is never empty")
    }

    fn segment_at(&self, t: f64) -> Result<&Segment> {
        let start = self.start_time();
        if t < start {
            return Err(Error::HistoryGap {
                node: self.node,
                time: t,
                start,
            });
        }
        let idx = self.segments.partition_point(|s| s.t <= t);
        Ok(&self.segments[idx - 1])
    }

    pub fn phase_at(&self, t: f64) -> Result<f64> {
        Ok(self.segment_at(t)?.phase_at(t))
    }

    /// Frequency at `t`; at a breakpoint this is the slope of the new segment.
    pub fn slope_at(&self, t: f64) -> Result<f64> {
        Ok(self.segment_at(t)?.slope)
    }

    /// Changes the slope from time `t` onwards. `t` must not precede the last breakpoint.
    pub fn set_slope(&mut self, t: f64, slope: f64) {
        let last = *self.last();
        debug_assert!(
            t >= last.t,
            "slope change at {t} before breakpoint {}",
            last.t
        );
        if t == last.t {
            self.segments.back_mut().expect("non-empty").slope = slope;
        } else {
            self.segments.push_back(Segment {
                t,
                phase: last.phase_at(t),
                slope,
            });
        }
    }

    /// Time at which the phase reaches `target`, extrapolating the active segment.
    pub fn next_phase_crossing(&self, target: f64) -> Result<f64> {
        let last = self.last();
        if target < last.phase {
            return Err(Error::TargetInPast {
                target,
                current: last.phase,
            });
        }
        Ok(last.t + (target - last.phase) / last.slope)
    }

    /// Time at which a recorded phase value was reached, anywhere in the history.
    pub fn time_of_phase(&self, target: f64) -> Result<f64> {
        let first = self.segments.front().expect("non-empty");
        if target < first.phase {
            return Err(Error::TargetInPast {
                target,
                current: first.phase,
            });
        }
        let idx = self.segments.partition_point(|s| s.phase <= target);
        let seg = &self.segments[idx - 1];
        Ok(seg.t + (target - seg.phase) / seg.slope)
    }

    /// Drops segments that end at or before `t`. The last segment is always kept.
    pub fn prune_before(&mut self, t: f64) {
        while self.segments.len() > 1 && self.segments[1].t <= t {
            self.segments.pop_front();
        }
    }
}

/// `β_ji(t) = ⌊θ_j(t − l_ji)⌋ − ⌊θ_i(t)⌋ + λ_ji`.
pub fn occupancy(
    hist_from: &PhaseHistory,
    hist_to: &PhaseHistory,
    latency: f64,
    lambda: i64,
    t: f64,
) -> Result<i64> {
    let sent = hist_from.phase_at(t - latency)?.floor() as i64;
    let consumed = hist_to.phase_at(t)?.floor() as i64;
    Ok(sent - consumed + lambda)
}

fn initial_histories(s: &AfmScenario) -> Vec<PhaseHistory> {
    (0..s.n())
        .map(|i| PhaseHistory::initial(i, s.theta0[i], s.omega_m1[i], s.omega_m2[i], s.epoch))
        .collect()
}

/// Constants `λ_ji = β⁰_ji − ⌊θ_j(−l_ji)⌋ + ⌊θ_i(0)⌋`, so that `β_ji(0) = β⁰_ji`.
pub fn compute_lambda(s: &AfmScenario) -> Result<Vec<i64>> {
    let hist = initial_histories(s);
    s.links()
        .iter()
        .enumerate()
        .map(|(k, link)| {
            let sent = hist[link.from].phase_at(-s.latency[k])?.floor() as i64;
            let consumed = hist[link.to].phase_at(0.0)?.floor() as i64;
            Ok(s.beta0[k] - sent + consumed)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendingCorrection {
    pub k: u64,
    pub correction: f64,
}

/// Discrete PI state per node.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteControllerState {
    /// Integral of the occupancy offset over local ticks.
    pub xi: Vec<f64>,
    /// Index of the next measurement.
    pub k: Vec<u64>,
    /// Corrections computed but not yet applied, oldest first.
    pub pending: Vec<VecDeque<PendingCorrection>>,
}

impl DiscreteControllerState {
    pub fn new(n: usize) -> Self {
        Self {
            xi: vec![0.0; n],
            k: vec![0; n],
            pending: vec![VecDeque::new(); n],
        }
    }
}

/// One PI update at node `node` from the summed occupancy offset `r`.
///
/// The correction `k_p r + k_i ω_c ξ` uses the integral state before it is
/// advanced by `p r`. The result is queued until its hold time.
pub fn pi_controller_step(
    state: &mut DiscreteControllerState,
    node: usize,
    r: f64,
    s: &AfmScenario,
    time: f64,
) -> Result<f64> {
    let g = &s.gains;
    let c = g.k_p * r + g.k_i * g.omega_c * state.xi[node];
    let frequency = c + s.omega_u[node];
    if !(frequency > s.omega_min && frequency < s.omega_max) {
        return Err(Error::Inadmissible {
            node,
            time,
            frequency,
            omega_min: s.omega_min,
            omega_max: s.omega_max,
        });
    }
    state.xi[node] += s.p * r;
    let k = state.k[node];
    state.k[node] += 1;
    state.pending[node].push_back(PendingCorrection { k, correction: c });
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Measure,
    Hold,
    Overflow,
    Underflow,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Measure => "measure",
            EventKind::Hold => "hold",
            EventKind::Overflow => "overflow",
            EventKind::Underflow => "underflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AfmEvent {
    pub time: f64,
    pub node: usize,
    pub kind: EventKind,
    /// Measurement index for measure/hold events.
    pub k: u64,
    /// `r` for measurements, `c` for holds, the occupancy for buffer violations.
    pub value: f64,
    /// Directed link for buffer violations.
    pub link: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimOptions {
    /// Record a sample at every measure/hold event in addition to the output grid.
    pub sample_events: bool,
    /// Keep full phase histories (no pruning) and return them with the trace.
    pub keep_history: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            sample_events: true,
            keep_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfmTrace {
    pub links: Vec<DirectedLink>,
    pub lambda: Vec<i64>,
    pub beta0: Vec<i64>,
    pub times: Vec<f64>,
    /// `omega[k][i]`: frequency of node `i` at `times[k]`.
    pub omega: Vec<Vec<f64>>,
    /// `beta[k][link]`: occupancy at `times[k]`.
    pub beta: Vec<Vec<i64>>,
    pub events: Vec<AfmEvent>,
    pub histories: Option<Vec<PhaseHistory>>,
}

impl AfmTrace {
    pub fn overflow_events(&self) -> impl Iterator<Item = &AfmEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Overflow | EventKind::Underflow))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Measure,
    Hold,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    kind: Pending,
    node: usize,
}

impl Scheduled {
    fn rank(&self) -> u8 {
        match self.kind {
            Pending::Measure => 0,
            Pending::Hold => 1,
        }
    }
}

// Same instant: measurements first, then ascending node index.
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.rank().cmp(&other.rank()))
            .then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

struct Simulator<'a> {
    s: &'a AfmScenario,
    links: Vec<DirectedLink>,
    incoming: Vec<Vec<usize>>,
    lambda: Vec<i64>,
    hist: Vec<PhaseHistory>,
    ctrl: DiscreteControllerState,
    violating: Vec<bool>,
    trace: AfmTrace,
    options: SimOptions,
}

impl<'a> Simulator<'a> {
    fn new(s: &'a AfmScenario, options: SimOptions) -> Result<Self> {
        let links = s.links();
        let mut incoming = vec![Vec::new(); s.n()];
        for (k, link) in links.iter().enumerate() {
            incoming[link.to].push(k);
        }
        let lambda = compute_lambda(s)?;
        Ok(Self {
            s,
            incoming,
            hist: initial_histories(s),
            ctrl: DiscreteControllerState::new(s.n()),
            violating: vec![false; links.len()],
            trace: AfmTrace {
                links: links.clone(),
                lambda: lambda.clone(),
                beta0: s.beta0.clone(),
                times: Vec::new(),
                omega: Vec::new(),
                beta: Vec::new(),
                events: Vec::new(),
                histories: None,
            },
            lambda,
            links,
            options,
        })
    }

    fn measure_phase(&self, node: usize, k: u64) -> f64 {
        self.s.theta0[node] + k as f64 * self.s.p
    }

    fn hold_phase(&self, node: usize, k: u64) -> f64 {
        self.measure_phase(node, k) + self.s.d
    }

    /// The node's next event in phase order; a tie goes to the measurement.
    fn next_event(&self, node: usize) -> Result<Scheduled> {
        let measure = self.measure_phase(node, self.ctrl.k[node]);
        let (kind, phase) = match self.ctrl.pending[node].front() {
            Some(p) if self.hold_phase(node, p.k) < measure => {
                (Pending::Hold, self.hold_phase(node, p.k))
            }
            _ => (Pending::Measure, measure),
        };
        let time = self.hist[node].next_phase_crossing(phase)?;
        Ok(Scheduled { time, kind, node })
    }

    fn occupancy(&self, link: usize, t: f64) -> Result<i64> {
        let l = &self.links[link];
        occupancy(
            &self.hist[l.from],
            &self.hist[l.to],
            self.s.latency[link],
            self.lambda[link],
            t,
        )
    }

    fn check_bounds(&mut self, link: usize, beta: i64, t: f64) {
        let out = beta < 0 || beta > self.s.beta_max;
        if out && !self.violating[link] {
            let kind = if beta < 0 {
                EventKind::Underflow
            } else {
                EventKind::Overflow
            };
            log::warn!(
                "buffer {} {} at t = {t}: {beta} frames",
                self.links[link].label(),
                kind.as_str()
            );
            self.trace.events.push(AfmEvent {
                time: t,
                node: self.links[link].to,
                kind,
                k: 0,
                value: beta as f64,
                link: Some(link),
            });
        }
        self.violating[link] = out;
    }

    fn sample(&mut self, t: f64) -> Result<()> {
        let omega = self
            .hist
            .iter()
            .map(|h| h.slope_at(t))
            .collect::<Result<Vec<_>>>()?;
        let mut beta = Vec::with_capacity(self.links.len());
        for link in 0..self.links.len() {
            let b = self.occupancy(link, t)?;
            self.check_bounds(link, b, t);
            beta.push(b);
        }
        self.trace.times.push(t);
        self.trace.omega.push(omega);
        self.trace.beta.push(beta);
        Ok(())
    }

    fn measure(&mut self, node: usize, t: f64) -> Result<()> {
        let k = self.ctrl.k[node];
        // The node's own phase is exactly θ⁰ + kp here.
        let consumed = self.measure_phase(node, k).floor() as i64;
        let mut r = 0i64;
        for idx in 0..self.incoming[node].len() {
            let link = self.incoming[node][idx];
            let l = self.links[link];
            let sent = self.hist[l.from]
                .phase_at(t - self.s.latency[link])?
                .floor() as i64;
            let beta = sent - consumed + self.lambda[link];
            self.check_bounds(link, beta, t);
            r += beta - self.s.beta0[link];
        }
        pi_controller_step(&mut self.ctrl, node, r as f64, self.s, t)?;
        self.trace.events.push(AfmEvent {
            time: t,
            node,
            kind: EventKind::Measure,
            k,
            value: r as f64,
            link: None,
        });
        Ok(())
    }

    fn hold(&mut self, node: usize, t: f64) {
        let p = self.ctrl.pending[node]
            .pop_front()
            .expect("hold scheduled only with a pending correction");
        self.hist[node].set_slope(t, p.correction + self.s.omega_u[node]);
        self.trace.events.push(AfmEvent {
            time: t,
            node,
            kind: EventKind::Hold,
            k: p.k,
            value: p.correction,
            link: None,
        });
    }

    fn prune(&mut self, now: f64) {
        let horizon = self.s.max_latency() + 2.0 * self.s.d / self.s.omega_min;
        for h in &mut self.hist {
            h.prune_before(now - horizon);
        }
    }

    fn run(mut self) -> Result<AfmTrace> {
        let t_end = self.s.t_end;
        let dt = self.s.output_dt;
        let mut queue = BinaryHeap::new();
        for node in 0..self.s.n() {
            queue.push(Reverse(self.next_event(node)?));
        }

        let mut grid_k = 0u64;
        let mut processed = 0u64;
        let grid_time = |k: u64| (k as f64 * dt).min(t_end);
        let mut grid_done = false;

        while let Some(Reverse(ev)) = queue.pop() {
            if ev.time > t_end {
                break;
            }
            while !grid_done && grid_time(grid_k) < ev.time {
                let tg = grid_time(grid_k);
                self.sample(tg)?;
                grid_done = tg >= t_end;
                grid_k += 1;
            }
            match ev.kind {
                Pending::Measure => self.measure(ev.node, ev.time)?,
                Pending::Hold => self.hold(ev.node, ev.time),
            }
            queue.push(Reverse(self.next_event(ev.node)?));

            let next_grid = grid_time(grid_k);
            if self.options.sample_events && !(next_grid == ev.time && !grid_done) {
                self.sample(ev.time)?;
            }
            processed += 1;
            if !self.options.keep_history && processed.is_multiple_of(256) {
                self.prune(ev.time);
            }
        }
        while !grid_done {
            let tg = grid_time(grid_k);
            self.sample(tg)?;
            grid_done = tg >= t_end;
            grid_k += 1;
        }
        if self.options.keep_history {
            self.trace.histories = Some(self.hist);
        }
        Ok(self.trace)
    }
}

pub fn simulate_afm(s: &AfmScenario) -> Result<AfmTrace> {
    simulate_afm_with(s, SimOptions::default())
}

pub fn simulate_afm_with(s: &AfmScenario, options: SimOptions) -> Result<AfmTrace> {
    s.validate()?;
    Simulator::new(s, options)?.run()
}
