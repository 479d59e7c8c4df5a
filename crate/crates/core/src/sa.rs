//! Simulated annealing over per-frequency change-point sets.
//!
//! Every proposal is stored with the signed segment terms that make up its
//! energy difference, so the same record yields the scalar `ΔE` used for the
//! decision and the quadratic `ΔE(r)` used for conditioning.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};
use crate::interval::IntervalUnion;
use crate::objective::{segments_of, CpConfiguration, LineCache, PenaltyParams, QuadCoeffs, SegmentCosts};
use crate::rng::{SaRng, MIN_UNIFORM};

/// Annealing schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaParams {
    /// Starting temperature of the preliminary experiment.
    pub c0_plus: f64,
    /// Growth factor of the preliminary temperature.
    pub lambda_plus: f64,
    /// Acceptance ratio the preliminary experiment must reach.
    pub target_eta: f64,
    /// Geometric cooling factor.
    pub lambda: f64,
    pub seed: u64,
    pub max_temperature_levels: usize,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            c0_plus: 1000.0,
            lambda_plus: 1.5,
            target_eta: 0.5,
            lambda: 0.8,
            seed: 0,
            max_temperature_levels: 500,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0_plus > 0.0) || !self.c0_plus.is_finite() {
            return Err(domain(format!("c0_plus must be positive, got {}", self.c0_plus)));
        }
        if !(self.lambda_plus > 1.0) || !self.lambda_plus.is_finite() {
            return Err(domain(format!("lambda_plus must exceed 1, got {}", self.lambda_plus)));
        }
        if !(0.0..1.0).contains(&self.target_eta) {
            return Err(domain(format!("target_eta must lie in [0, 1), got {}", self.target_eta)));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(domain(format!("lambda must lie in (0, 1), got {}", self.lambda)));
        }
        if self.max_temperature_levels == 0 {
            return Err(domain("max_temperature_levels must be positive"));
        }
        Ok(())
    }
}

// Guards the preliminary experiment; reaching it needs c⁺ to grow by 1.5^200.
const MAX_PRELIMINARY_ROUNDS: usize = 200;

/// Metropolis rule: accept iff `ΔE + c ln ξ < 0`.
pub fn metropolis(delta_e: f64, c: f64, xi: f64) -> Result<bool> {
    if !(c > 0.0) {
        return Err(domain(format!("temperature must be positive, got {c}")));
    }
    Ok(delta_e + c * log_xi(xi) < 0.0)
}

fn log_xi(xi: f64) -> f64 {
    xi.max(MIN_UNIFORM).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Preliminary,
    Annealing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Remove,
    Move,
    Merge,
}

impl OpKind {
    fn from_draw(k: usize) -> Self {
        match k {
            0 => OpKind::Add,
            1 => OpKind::Remove,
            _ => OpKind::Move,
        }
    }
}

/// A proposed neighbour of the current configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operation {
    Add { d: usize, t: usize },
    Remove { d: usize, t: usize },
    Move { d: usize, from: usize, to: usize },
    /// Adjacent union locations `left < right` both replaced by `u`.
    Merge { left: usize, right: usize, u: usize },
    /// The sampled operation was impossible; `d` is `None` for merges.
    Skipped { kind: OpKind, d: Option<usize> },
}

/// One signed segment cost inside an energy difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentTerm {
    pub d: u32,
    pub s: u32,
    pub e: u32,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaRecord {
    pub phase: Phase,
    /// Round of the preliminary experiment or temperature level of the annealing.
    pub level: u32,
    pub temperature: f64,
    pub op: Operation,
    /// Uniform draw of the Metropolis test; `None` for skipped proposals.
    pub xi: Option<f64>,
    pub accepted: bool,
    pub delta_e: f64,
    pub penalty_delta: f64,
    terms: (u32, u32),
}

/// Complete ordered record of the preliminary experiment and the annealing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SaTrace {
    pub records: Vec<SaRecord>,
    terms: Vec<SegmentTerm>,
    /// Temperature chosen by the preliminary experiment (0 when annealing was skipped).
    pub initial_temperature: f64,
    pub levels: usize,
    /// True when the level cap stopped the annealing.
    pub hit_level_cap: bool,
}

impl SaTrace {
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn terms(&self, rec: &SaRecord) -> &[SegmentTerm] {
        &self.terms[rec.terms.0 as usize..rec.terms.1 as usize]
    }

    /// `ΔE` of a record as a quadratic along the line.
    pub fn delta_quadratic(&self, rec: &SaRecord, line: &LineCache) -> QuadCoeffs {
        let mut q = QuadCoeffs::constant(rec.penalty_delta);
        for t in self.terms(rec) {
            let seg = line.segment_quad(t.d as usize, t.s as usize, t.e as usize);
            q += if t.sign > 0 { seg } else { -seg };
        }
        q
    }

    /// Visits each Metropolis decision as `q(r) <= 0`.
    pub fn for_each_inequality(&self, line: &LineCache, mut visit: impl FnMut(&QuadCoeffs)) {
        for rec in &self.records {
            let Some(xi) = rec.xi else { continue };
            let mut q = self.delta_quadratic(rec, line);
            q.e0 += rec.temperature * log_xi(xi);
            visit(&if rec.accepted { q } else { -q });
        }
    }

    /// Re-applies the accepted annealing moves to `init`.
    pub fn replay(&self, init: &CpConfiguration) -> CpConfiguration {
        let mut cfg = init.clone();
        for rec in self.records.iter().filter(|r| r.phase == Phase::Annealing && r.accepted) {
            apply(&mut cfg, &rec.op);
        }
        cfg
    }
}

/// All Metropolis decisions as quadratics `q(r) <= 0`.
pub fn sa_inequalities(trace: &SaTrace, line: &LineCache) -> Vec<QuadCoeffs> {
    let mut out = Vec::new();
    trace.for_each_inequality(line, |q| out.push(*q));
    out
}

/// Restricts `region` to the points where every Metropolis decision is reproduced.
pub fn restrict_sa(region: &mut IntervalUnion, trace: &SaTrace, line: &LineCache) {
    trace.for_each_inequality(line, |q| {
        if !region.is_empty() {
            region.restrict(q);
        }
    });
}

fn apply(cfg: &mut CpConfiguration, op: &Operation) {
    match *op {
        Operation::Add { d, t } => {
            let set = cfg.set_mut(d);
            let i = set.partition_point(|&x| x < t);
            set.insert(i, t);
        }
        Operation::Remove { d, t } => cfg.set_mut(d).retain(|&x| x != t),
        Operation::Move { d, from, to } => {
            let set = cfg.set_mut(d);
            let i = set.iter().position(|&x| x == from).expect("moved change point exists");
            set[i] = to;
        }
        Operation::Merge { left, right, u } => {
            for d in 0..cfg.frequencies() {
                let set = cfg.set_mut(d);
                let before = set.len();
                set.retain(|&x| x != left && x != right);
                if set.len() != before {
                    let i = set.partition_point(|&x| x < u);
                    set.insert(i, u);
                }
            }
        }
        Operation::Skipped { .. } => {}
    }
}

/// Draws an add, remove or move proposal for a frequency drawn from `active`.
///
/// The frequency is drawn first, then the kind; an impossible operation
/// consumes no further draws.
pub fn propose(cfg: &CpConfiguration, active: &[usize], rng: &mut SaRng) -> Operation {
    let d = active[rng.below(active.len())];
    let kind = OpKind::from_draw(rng.below(3));
    let set = cfg.change_points(d);
    let t_max = cfg.windows();
    let skip = Operation::Skipped { kind, d: Some(d) };
    match kind {
        OpKind::Add => {
            let free = t_max - 1 - set.len();
            if free == 0 {
                return skip;
            }
            // j-th location of 1..T not in the set.
            let mut j = rng.below(free);
            let mut t = 1;
            for &c in set {
                let gap = c - t;
                if j < gap {
                    break;
                }
                j -= gap;
                t = c + 1;
            }
            Operation::Add { d, t: t + j }
        }
        OpKind::Remove => {
            if set.is_empty() {
                return skip;
            }
            Operation::Remove { d, t: set[rng.below(set.len())] }
        }
        OpKind::Move => {
            if set.is_empty() {
                return skip;
            }
            let i = rng.below(set.len());
            let lo = if i == 0 { 0 } else { set[i - 1] };
            let hi = if i + 1 == set.len() { t_max } else { set[i + 1] };
            let from = set[i];
            // Open interval (lo, hi) minus the current location.
            let room = hi - lo - 2;
            if room == 0 {
                return skip;
            }
            let mut to = lo + 1 + rng.below(room);
            if to >= from {
                to += 1;
            }
            Operation::Move { d, from, to }
        }
        OpKind::Merge => unreachable!(),
    }
}

/// Draws a merge of two adjacent union locations, or a skip when `K < 2`.
pub fn propose_merge(cfg: &CpConfiguration, rng: &mut SaRng) -> Operation {
    let union = cfg.union();
    if union.len() < 2 {
        return Operation::Skipped { kind: OpKind::Merge, d: None };
    }
    let i = rng.below(union.len() - 1);
    let (left, right) = (union[i], union[i + 1]);
    let u = left + rng.below(right - left + 1);
    Operation::Merge { left, right, u }
}

/// Current configuration together with the bookkeeping needed for O(1) penalty deltas.
struct State<'a, C> {
    costs: &'a C,
    pen: &'a PenaltyParams,
    cfg: CpConfiguration,
    // Number of frequencies holding a change point at each location.
    counts: Vec<u32>,
}

impl<'a, C: SegmentCosts> State<'a, C> {
    fn new(costs: &'a C, pen: &'a PenaltyParams, cfg: CpConfiguration) -> Self {
        let counts = location_counts(&cfg);
        Self { costs, pen, cfg, counts }
    }

    fn fresh(&self) -> impl Fn(usize) -> f64 + '_ {
        move |t| if self.counts[t] == 0 { 1.0 } else { 0.0 }
    }

    fn last(&self) -> impl Fn(usize) -> f64 + '_ {
        move |t| if self.counts[t] == 1 { 1.0 } else { 0.0 }
    }

    /// Appends the segment terms of `op` to `terms` and returns the penalty difference.
    fn evaluate(&self, op: &Operation, terms: &mut Vec<SegmentTerm>) -> f64 {
        let (beta, gamma) = (&self.pen.beta, self.pen.gamma);
        match *op {
            Operation::Add { d, .. } | Operation::Remove { d, .. } | Operation::Move { d, .. } => {
                let mut next = self.cfg.change_points(d).to_vec();
                let penalty = match *op {
                    Operation::Add { t, .. } => {
                        next.insert(next.partition_point(|&x| x < t), t);
                        beta[d] + gamma * self.fresh()(t)
                    }
                    Operation::Remove { t, .. } => {
                        next.retain(|&x| x != t);
                        -beta[d] - gamma * self.last()(t)
                    }
                    Operation::Move { from, to, .. } => {
                        let i = next.iter().position(|&x| x == from).unwrap();
                        next[i] = to;
                        gamma * (self.fresh()(to) - self.last()(from))
                    }
                    _ => unreachable!(),
                };
                diff_segments(d, self.cfg.change_points(d), &next, self.cfg.windows(), terms);
                penalty
            }
            Operation::Merge { left, right, u } => {
                let mut penalty = -gamma;
                for d in 0..self.cfg.frequencies() {
                    let old = self.cfg.change_points(d);
                    if !old.iter().any(|&x| x == left || x == right) {
                        continue;
                    }
                    let mut next: Vec<usize> = old.iter().copied().filter(|&x| x != left && x != right).collect();
                    next.insert(next.partition_point(|&x| x < u), u);
                    penalty += beta[d] * (next.len() as f64 - old.len() as f64);
                    diff_segments(d, old, &next, self.cfg.windows(), terms);
                }
                penalty
            }
            Operation::Skipped { .. } => 0.0,
        }
    }

    fn delta_e(&self, terms: &[SegmentTerm], penalty: f64) -> f64 {
        let mut delta = 0.0;
        for t in terms {
            let c = self.costs.cost(t.d as usize, t.s as usize, t.e as usize);
            delta += if t.sign > 0 { c } else { -c };
        }
        delta + penalty
    }

    fn commit(&mut self, op: &Operation) {
        match *op {
            Operation::Add { t, .. } => self.counts[t] += 1,
            Operation::Remove { t, .. } => self.counts[t] -= 1,
            Operation::Move { from, to, .. } => {
                self.counts[from] -= 1;
                self.counts[to] += 1;
            }
            _ => {}
        }
        apply(&mut self.cfg, op);
        if matches!(op, Operation::Merge { .. }) {
            self.counts = location_counts(&self.cfg);
        }
    }
}

fn location_counts(cfg: &CpConfiguration) -> Vec<u32> {
    let mut counts = vec![0; cfg.windows() + 1];
    for set in cfg.per_frequency() {
        for &t in set {
            counts[t] += 1;
        }
    }
    counts
}

// Segments of `old` that vanish get sign -1, segments of `new` that appear get +1.
fn diff_segments(d: usize, old: &[usize], new: &[usize], t: usize, terms: &mut Vec<SegmentTerm>) {
    let a = segments_of(old, t);
    let b = segments_of(new, t);
    let term = |(s, e): (usize, usize), sign: i8| SegmentTerm { d: d as u32, s: s as u32, e: e as u32, sign };
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x.0 < y.0 || (x.0 == y.0 && x.1 < y.1) => {
                terms.push(term(*x, -1));
                i += 1;
            }
            (Some(_), Some(y)) => {
                terms.push(term(*y, 1));
                j += 1;
            }
            (Some(x), None) => {
                terms.push(term(*x, -1));
                i += 1;
            }
            (None, Some(y)) => {
                terms.push(term(*y, 1));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
}

struct Runner<'a, C> {
    state: State<'a, C>,
    active: &'a [usize],
    rng: SaRng,
    trace: SaTrace,
}

impl<C: SegmentCosts> Runner<'_, C> {
    /// One proposal plus its Metropolis decision; returns `Some(accepted)` unless skipped.
    fn step(&mut self, op: Operation, phase: Phase, level: u32, c: f64) -> Option<bool> {
        let start = self.trace.terms.len() as u32;
        if let Operation::Skipped { .. } = op {
            self.trace.records.push(SaRecord {
                phase,
                level,
                temperature: c,
                op,
                xi: None,
                accepted: false,
                delta_e: 0.0,
                penalty_delta: 0.0,
                terms: (start, start),
            });
            return None;
        }
        let xi = self.rng.uniform();
        let penalty = self.state.evaluate(&op, &mut self.trace.terms);
        let end = self.trace.terms.len() as u32;
        let delta_e = self.state.delta_e(&self.trace.terms[start as usize..end as usize], penalty);
        let accepted = delta_e + c * log_xi(xi) < 0.0;
        if accepted {
            self.state.commit(&op);
        }
        self.trace.records.push(SaRecord {
            phase,
            level,
            temperature: c,
            op,
            xi: Some(xi),
            accepted,
            delta_e,
            penalty_delta: penalty,
            terms: (start, end),
        });
        Some(accepted)
    }

    /// `|active| · T` local proposals followed by one merge; returns (accepted, proposed).
    fn sweep(&mut self, phase: Phase, level: u32, c: f64) -> (usize, usize) {
        let (mut accepted, mut proposed) = (0, 0);
        let n = self.active.len() * self.state.cfg.windows();
        for _ in 0..n {
            let op = propose(&self.state.cfg, self.active, &mut self.rng);
            if let Some(a) = self.step(op, phase, level, c) {
                proposed += 1;
                accepted += a as usize;
            }
        }
        let op = propose_merge(&self.state.cfg, &mut self.rng);
        if let Some(a) = self.step(op, phase, level, c) {
            proposed += 1;
            accepted += a as usize;
        }
        (accepted, proposed)
    }
}

/// Result of the preliminary experiment followed by the annealing.
#[derive(Debug, Clone)]
pub struct Annealed {
    pub config: CpConfiguration,
    pub trace: SaTrace,
}

/// Preliminary temperature search and geometric cooling from `init`.
///
/// With no active frequency the input is returned unchanged with an empty trace.
pub fn anneal<C: SegmentCosts>(
    costs: &C,
    init: &CpConfiguration,
    active: &[usize],
    pen: &PenaltyParams,
    params: &SaParams,
) -> Result<Annealed> {
    params.validate()?;
    if init.windows() != costs.windows() || init.frequencies() != costs.frequencies() {
        return Err(shape("initial configuration does not match the cost table"));
    }
    if active.is_empty() {
        return Ok(Annealed { config: init.clone(), trace: SaTrace::default() });
    }
    let mut run = Runner {
        state: State::new(costs, pen, init.clone()),
        active,
        rng: SaRng::new(params.seed),
        trace: SaTrace::default(),
    };

    let c0 = initial_temperature(&mut run, init, params);
    run.trace.initial_temperature = c0;

    let mut c = c0;
    let mut level = 0;
    loop {
        let (accepted, _) = run.sweep(Phase::Annealing, level as u32, c);
        level += 1;
        if accepted == 0 {
            break;
        }
        if level >= params.max_temperature_levels {
            warn!("annealing stopped at the cap of {} temperature levels", params.max_temperature_levels);
            run.trace.hit_level_cap = true;
            break;
        }
        c *= params.lambda;
    }
    run.trace.levels = level;
    Ok(Annealed { config: run.state.cfg, trace: run.trace })
}

// Raises c⁺ until one sweep from the initial configuration accepts at least the
// target share of proposals. Configuration changes of each sweep are discarded.
fn initial_temperature<C: SegmentCosts>(run: &mut Runner<'_, C>, init: &CpConfiguration, params: &SaParams) -> f64 {
    let mut c = params.c0_plus;
    for round in 0..MAX_PRELIMINARY_ROUNDS {
        run.state = State::new(run.state.costs, run.state.pen, init.clone());
        let (accepted, proposed) = run.sweep(Phase::Preliminary, round as u32, c);
        let eta = if proposed == 0 { 1.0 } else { accepted as f64 / proposed as f64 };
        if eta >= params.target_eta {
            break;
        }
        if round + 1 == MAX_PRELIMINARY_ROUNDS {
            warn!("preliminary temperature search stopped after {MAX_PRELIMINARY_ROUNDS} rounds");
            break;
        }
        c *= params.lambda_plus;
    }
    run.state = State::new(run.state.costs, run.state.pen, init.clone());
    c
}
