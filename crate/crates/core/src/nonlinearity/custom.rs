//! User-supplied nonlinearities: one continuous piecewise-linear curve per site.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FamilyError;

/// Continuous piecewise-linear `f` through `knots`, zero outside the first and
/// last knot. The end knots must have value zero so that `f` is continuous.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct PiecewiseLinear {
    knots: Vec<(f64, f64)>,
    /// `∫_{t_0}^{t_i} f` at every knot.
    cumulative: Vec<f64>,
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseLinear {
    type Error = FamilyError;
    fn try_from(knots: Vec<(f64, f64)>) -> Result<Self, FamilyError> {
        PiecewiseLinear::new(0, knots)
    }
}

impl From<PiecewiseLinear> for Vec<(f64, f64)> {
    fn from(p: PiecewiseLinear) -> Self {
        p.knots
    }
}

impl PiecewiseLinear {
    pub fn new(site: i64, knots: Vec<(f64, f64)>) -> Result<Self, FamilyError> {
        let bad = |reason: &str| FamilyError::BadTable {
            site,
            reason: reason.to_string(),
        };
        if knots.len() < 2 {
            return Err(bad("needs at least two knots"));
        }
        if knots.iter().any(|(t, f)| !t.is_finite() || !f.is_finite()) {
            return Err(bad("non-finite knot"));
        }
        if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(bad("knot abscissae must be strictly increasing"));
        }
        if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 0.0 {
            return Err(bad("end knots must have value 0 (continuity)"));
        }
        let mut cumulative = vec![0.0];
        for w in knots.windows(2) {
            let area = 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
            cumulative.push(cumulative.last().unwrap() + area);
        }
        Ok(Self { knots, cumulative })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    fn segment(&self, t: f64) -> Option<usize> {
        let first = self.knots[0].0;
        let last = self.knots[self.knots.len() - 1].0;
        if t <= first || t >= last {
            return None;
        }
        Some(self.knots.partition_point(|(x, _)| *x <= t) - 1)
    }

    pub fn f(&self, t: f64) -> f64 {
        match self.segment(t) {
            None => 0.0,
            Some(i) => {
                let ((x0, y0), (x1, y1)) = (self.knots[i], self.knots[i + 1]);
                y0 + (y1 - y0) * (t - x0) / (x1 - x0)
            }
        }
    }

    /// `∫_{t_0}^{t} f`.
    fn from_start(&self, t: f64) -> f64 {
        if t <= self.knots[0].0 {
            return 0.0;
        }
        match self.segment(t) {
            None => *self.cumulative.last().unwrap(),
            Some(i) => {
                let (x0, y0) = self.knots[i];
                self.cumulative[i] + 0.5 * (y0 + self.f(t)) * (t - x0)
            }
        }
    }

    /// `∫_0^t f`.
    pub fn primitive(&self, t: f64) -> f64 {
        self.from_start(t) - self.from_start(0.0)
    }

    /// Maximal intervals on which `f` is not identically zero.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for w in self.knots.windows(2) {
            if w[0].1 == 0.0 && w[1].1 == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.1 == w[0].0 => last.1 = w[1].0,
                _ => out.push((w[0].0, w[1].0)),
            }
        }
        out
    }

    /// Knots and sign changes of `f` inside `[lo, hi]`, plus both ends.
    fn critical_points(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts = vec![lo, hi];
        for w in self.knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            for x in [x0, x1] {
                if x > lo && x < hi {
                    pts.push(x);
                }
            }
            if y0 * y1 < 0.0 {
                let root = x0 - y0 * (x1 - x0) / (y1 - y0);
                if root > lo && root < hi {
                    pts.push(root);
                }
            }
        }
        pts
    }

    pub fn max_abs_f_on(&self, lo: f64, hi: f64) -> f64 {
        self.critical_points(lo, hi)
            .into_iter()
            .map(|t| self.f(t).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_primitive_on(&self, lo: f64, hi: f64) -> f64 {
        self.critical_points(lo, hi)
            .into_iter()
            .map(|t| self.primitive(t))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Explicit per-site curves; sites without a curve carry `f ≡ 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CustomFamily {
    pub sites: BTreeMap<i64, PiecewiseLinear>,
}

impl CustomFamily {
    pub fn new(sites: BTreeMap<i64, PiecewiseLinear>) -> Self {
        Self { sites }
    }

    pub fn curve(&self, k: i64) -> Option<&PiecewiseLinear> {
        self.sites.get(&k)
    }
}
