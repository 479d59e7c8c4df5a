//! Closed intervals on the real line and solution sets of quadratic inequalities.

use serde::{Deserialize, Serialize};

use crate::objective::QuadCoeffs;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn full() -> Self {
        Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    fn intersect(&self, o: &Interval) -> Option<Interval> {
        let lo = self.lo.max(o.lo);
        let hi = self.hi.min(o.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }
}

/// Sorted, pairwise disjoint union of closed intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalUnion {
    parts: Vec<Interval>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        Self { parts: Vec::new() }
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        if lo <= hi {
            Self { parts: vec![Interval { lo, hi }] }
        } else {
            Self::empty()
        }
    }

    pub fn full() -> Self {
        Self { parts: vec![Interval::full()] }
    }

    /// Normalizes arbitrary intervals into a disjoint union; touching intervals merge.
    pub fn from_intervals(mut v: Vec<Interval>) -> Self {
        v.retain(|i| i.lo <= i.hi);
        v.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut parts: Vec<Interval> = Vec::with_capacity(v.len());
        for i in v {
            match parts.last_mut() {
                Some(last) if i.lo <= last.hi => last.hi = last.hi.max(i.hi),
                _ => parts.push(i),
            }
        }
        Self { parts }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.parts.iter().any(|i| i.contains(x))
    }

    /// Distance from `x` to the nearest point of the union (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        self.parts
            .iter()
            .map(|i| if x < i.lo { i.lo - x } else if x > i.hi { x - i.hi } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn measure(&self) -> f64 {
        self.parts.iter().map(Interval::width).sum()
    }

    pub fn intersect(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < other.parts.len() {
            let (a, b) = (self.parts[i], other.parts[j]);
            if let Some(x) = a.intersect(&b) {
                out.push(x);
            }
            if a.hi < b.hi {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion { parts: out }
    }

    pub fn union(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut v = self.parts.clone();
        v.extend_from_slice(&other.parts);
        Self::from_intervals(v)
    }

    /// Keeps the part of the union where `q(r) <= 0`.
    pub fn restrict(&mut self, q: &QuadCoeffs) {
        let sol = solve_quadratic_inequality(q);
        // Fast path: the common case is a single remaining interval inside one solution piece.
        if self.parts.len() == 1 && sol.parts.len() == 1 {
            match self.parts[0].intersect(&sol.parts[0]) {
                Some(x) => self.parts[0] = x,
                None => self.parts.clear(),
            }
            return;
        }
        *self = self.intersect(&sol);
    }

    /// Maximal open gaps of `[lo, hi]` not covered by the union.
    pub fn gaps_within(&self, lo: f64, hi: f64) -> Vec<Interval> {
        let mut gaps = Vec::new();
        let mut cursor = lo;
        for p in &self.parts {
            if p.hi < cursor {
                continue;
            }
            if p.lo > hi {
                break;
            }
            if p.lo > cursor {
                gaps.push(Interval { lo: cursor, hi: p.lo.min(hi) });
            }
            cursor = cursor.max(p.hi);
        }
        if cursor < hi {
            gaps.push(Interval { lo: cursor, hi });
        }
        gaps
    }
}

/// Solution set of `e2 r² + e1 r + e0 <= 0` over the real line.
///
/// Strict and non-strict inequalities differ only at the roots, which carry no
/// probability mass, so both are reported as closed sets.
pub fn solve_quadratic_inequality(q: &QuadCoeffs) -> IntervalUnion {
    let QuadCoeffs { e2, e1, e0 } = *q;
    if e2 == 0.0 {
        return if e1 > 0.0 {
            IntervalUnion::single(f64::NEG_INFINITY, -e0 / e1)
        } else if e1 < 0.0 {
            IntervalUnion::single(-e0 / e1, f64::INFINITY)
        } else if e0 <= 0.0 {
            IntervalUnion::full()
        } else {
            IntervalUnion::empty()
        };
    }
    let disc = e1 * e1 - 4.0 * e2 * e0;
    if disc < 0.0 {
        return if e2 > 0.0 { IntervalUnion::empty() } else { IntervalUnion::full() };
    }
    let (r1, r2) = roots(e2, e1, e0, disc);
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if e2 > 0.0 {
        IntervalUnion::single(lo, hi)
    } else {
        IntervalUnion {
            parts: vec![Interval::new(f64::NEG_INFINITY, lo), Interval::new(hi, f64::INFINITY)],
        }
    }
}

// Cancellation-free roots of a quadratic with non-negative discriminant.
fn roots(e2: f64, e1: f64, e0: f64, disc: f64) -> (f64, f64) {
    let k = -0.5 * (e1 + disc.sqrt().copysign(e1));
    if k == 0.0 {
        // e1 = 0 and disc = 0, hence e0 = 0: a double root at zero.
        return (0.0, 0.0);
    }
    (k / e2, e0 / k)
}
