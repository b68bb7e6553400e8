//! Per-site nonlinearities `f_k`, their primitives `F_k(t) = ∫_0^t f_k`, and
//! the positive-part variants `f_k(t⁺)`, `F_k(t⁺)`.

pub mod audit;
pub mod custom;
pub mod tent;

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::LatticeError;
use crate::logdomain::LogReal;

pub use custom::{CustomFamily, PiecewiseLinear};
pub use tent::{Layout, LinearTent, Tent, TentFamily, TentLaw};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FamilyError {
    #[error("q = {q} violates {constraint}")]
    Constraint { q: f64, constraint: String },
    #[error("exponent bounds violate 1 < p- <= p+ < inf (p- = {pminus}, p+ = {pplus})")]
    Exponents { pminus: f64, pplus: f64 },
    #[error("tent {m} is not representable in f64 (log2 c = {log2_c}, log2 d = {log2_d}, log2 h = {log2_h})")]
    Unrepresentable {
        m: u32,
        log2_c: f64,
        log2_d: f64,
        log2_h: f64,
    },
    #[error("bad table at site {site}: {reason}")]
    BadTable { site: i64, reason: String },
    #[error("interval {index} breaks the required ordering: {reason}")]
    Ordering { index: usize, reason: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Where a cascade of tents accumulates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Towards `0⁺`.
    Zero,
    /// Towards `+∞`.
    Infinity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum NonlinearFamily {
    Zero,
    Tent(TentFamily),
    Custom(CustomFamily),
}

pub fn make_decay_family(q: f64, pminus: f64, pplus: f64) -> Result<NonlinearFamily, FamilyError> {
    Ok(NonlinearFamily::Tent(TentFamily::decay(q, pminus, pplus)?))
}

pub fn make_growth_family(q: f64, pminus: f64, pplus: f64) -> Result<NonlinearFamily, FamilyError> {
    Ok(NonlinearFamily::Tent(TentFamily::growth(q, pminus, pplus)?))
}

pub fn make_single_site_family(
    k0: i64,
    q: f64,
    pminus: f64,
    pplus: f64,
) -> Result<NonlinearFamily, FamilyError> {
    Ok(NonlinearFamily::Tent(TentFamily::single_site(k0, q, pminus, pplus)?))
}

pub fn make_remark2_family(
    q: f64,
    pminus: f64,
    pplus: f64,
    alpha: f64,
) -> Result<NonlinearFamily, FamilyError> {
    Ok(NonlinearFamily::Tent(TentFamily::remark2(q, pminus, pplus, alpha)?))
}

impl NonlinearFamily {
    pub fn id(&self) -> &'static str {
        match self {
            NonlinearFamily::Zero => "zero",
            NonlinearFamily::Tent(t) => match (t.law, t.layout) {
                (_, Layout::Stacked { .. }) => "single_site",
                (TentLaw::Decay, _) => "decay",
                (TentLaw::Growth, _) => "growth",
                (TentLaw::Remark2 { .. }, _) => "remark2",
            },
            NonlinearFamily::Custom(_) => "custom",
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NonlinearFamily::Zero => true,
            NonlinearFamily::Custom(c) => c.sites.is_empty(),
            NonlinearFamily::Tent(_) => false,
        }
    }

    pub fn tents(&self) -> Option<&TentFamily> {
        match self {
            NonlinearFamily::Tent(t) => Some(t),
            _ => None,
        }
    }

    pub fn direction(&self) -> Option<Direction> {
        self.tents().map(TentFamily::direction)
    }

    /// Keeps only tents `m <= max_index`; other families are unchanged.
    pub fn truncated(self, max_index: u32) -> Self {
        match self {
            NonlinearFamily::Tent(t) => NonlinearFamily::Tent(t.truncated(max_index)),
            other => other,
        }
    }

    pub fn f(&self, k: i64, t: f64) -> f64 {
        match self {
            NonlinearFamily::Zero => 0.0,
            NonlinearFamily::Tent(fam) => fam.f(k, t),
            NonlinearFamily::Custom(c) => c.curve(k).map_or(0.0, |p| p.f(t)),
        }
    }

    pub fn f_plus(&self, k: i64, t: f64) -> f64 {
        self.f(k, t.max(0.0))
    }

    pub fn primitive(&self, k: i64, t: f64) -> f64 {
        match self {
            NonlinearFamily::Zero => 0.0,
            NonlinearFamily::Tent(fam) => fam.primitive(k, t),
            NonlinearFamily::Custom(c) => c.curve(k).map_or(0.0, |p| p.primitive(t)),
        }
    }

    pub fn primitive_plus(&self, k: i64, t: f64) -> f64 {
        self.primitive(k, t.max(0.0))
    }

    /// `F_k(y⁺) - F_k(x⁺)`, accurate when `x` and `y` are close.
    pub fn primitive_plus_diff(&self, k: i64, x: f64, y: f64) -> f64 {
        let (x, y) = (x.max(0.0), y.max(0.0));
        if x == y {
            return 0.0;
        }
        match self {
            NonlinearFamily::Zero => 0.0,
            NonlinearFamily::Tent(fam) => fam.primitive_diff(k, x, y),
            NonlinearFamily::Custom(c) => c.curve(k).map_or(0.0, |p| p.primitive(y) - p.primitive(x)),
        }
    }

    pub fn f_log(&self, k: i64, s: LogReal) -> LogReal {
        match self {
            NonlinearFamily::Tent(fam) => fam.f_log(k, s),
            _ => LogReal::from_f64(self.f(k, s.to_f64())),
        }
    }

    /// `F_k(t⁺)` in log form.
    pub fn primitive_plus_log(&self, k: i64, t: LogReal) -> LogReal {
        if !t.is_positive() {
            return LogReal::ZERO;
        }
        match self {
            NonlinearFamily::Tent(fam) => fam.primitive_log(k, t),
            _ => LogReal::from_f64(self.primitive(k, t.to_f64())),
        }
    }

    /// `max_{|t| <= bound} |f_k(t)|`.
    pub fn site_max_abs_f_log(&self, k: i64, bound: LogReal) -> LogReal {
        match self {
            NonlinearFamily::Zero => LogReal::ZERO,
            NonlinearFamily::Tent(fam) => fam.site_max_abs_log(k, bound),
            NonlinearFamily::Custom(c) => {
                let b = bound.to_f64();
                LogReal::from_f64(c.curve(k).map_or(0.0, |p| p.max_abs_f_on(-b, b)))
            }
        }
    }

    /// `Σ_k max_{|ξ| <= c} F_k(ξ)` over every site carrying a nonlinearity.
    pub fn sum_max_primitive_log(&self, c: LogReal) -> LogReal {
        match self {
            NonlinearFamily::Zero => LogReal::ZERO,
            NonlinearFamily::Tent(fam) => fam.sum_max_primitive_log(c),
            NonlinearFamily::Custom(fam) => {
                let b = c.to_f64();
                LogReal::sum(
                    fam.sites
                        .values()
                        .map(|p| LogReal::from_f64(p.max_primitive_on(-b, b).max(0.0))),
                )
            }
        }
    }

    /// Intervals outside which `f_k` vanishes.
    pub fn support(&self, k: i64) -> Vec<(f64, f64)> {
        match self {
            NonlinearFamily::Zero => Vec::new(),
            NonlinearFamily::Tent(fam) => fam.support(k),
            NonlinearFamily::Custom(c) => c.curve(k).map_or_else(Vec::new, PiecewiseLinear::support),
        }
    }

    /// Points where `f_k` is not differentiable.
    pub fn breakpoints(&self, k: i64) -> Vec<f64> {
        match self {
            NonlinearFamily::Zero => Vec::new(),
            NonlinearFamily::Tent(fam) => fam.breakpoints(k),
            NonlinearFamily::Custom(c) => c
                .curve(k)
                .map_or_else(Vec::new, |p| p.knots().iter().map(|&(t, _)| t).collect()),
        }
    }

    /// Sites in `sites` where `f_k` is not identically zero.
    pub fn active_sites(&self, sites: RangeInclusive<i64>) -> Vec<i64> {
        match self {
            NonlinearFamily::Zero => Vec::new(),
            NonlinearFamily::Tent(fam) => fam.active_sites(sites),
            NonlinearFamily::Custom(c) => c.sites.range(sites).map(|(&k, _)| k).collect(),
        }
    }

    /// Natural spike heights at site `k`: right ends of the support pieces,
    /// where `F_k` first reaches its plateau.
    pub fn spike_heights(&self, k: i64) -> Vec<LogReal> {
        match self {
            NonlinearFamily::Zero => Vec::new(),
            NonlinearFamily::Tent(fam) => fam.indices_at(k).map(|m| fam.tent(m).d()).collect(),
            NonlinearFamily::Custom(c) => c.curve(k).map_or_else(Vec::new, |p| {
                p.support()
                    .into_iter()
                    .filter(|&(_, hi)| hi > 0.0)
                    .map(|(_, hi)| LogReal::from_f64(hi))
                    .collect()
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay() -> NonlinearFamily {
        make_decay_family(2.0, 2.0, 2.0).unwrap()
    }

    #[test]
    fn decay_parameters() {
        let fam = TentFamily::decay(2.0, 2.0, 2.0).unwrap();
        let t1 = tent::materialize(&fam, 1).unwrap();
        assert_eq!((t1.c, t1.d, t1.h), (0.0625, 0.25, 0.125));
        assert!((t1.e - 64.0 / 9.0).abs() < 1e-14);
        let t2 = tent::materialize(&fam, 2).unwrap();
        assert_eq!((t2.c, t2.d, t2.h), (2f64.powi(-16), 2f64.powi(-8), 2f64.powi(-12)));
        let e2 = 2.0 * 2f64.powi(-12) / (2f64.powi(-8) - 2f64.powi(-16)).powi(2);
        assert!((t2.e - e2).abs() <= 1e-14 * e2);
        assert!(TentFamily::decay(1.4, 2.0, 2.0).is_err());
    }

    #[test]
    fn growth_parameters() {
        let fam = TentFamily::growth(3.0, 2.0, 2.0).unwrap();
        let t1 = tent::materialize(&fam, 1).unwrap();
        assert_eq!((t1.c, t1.d), (512.0, 134217728.0));
        assert!((t1.h - 2f64.powi(81)).abs() <= 1e-15 * t1.h);
        let t2 = fam.tent(2);
        assert_eq!((t2.log2_c, t2.log2_d, t2.log2_h), (81.0, 243.0, 729.0));
        assert!(TentFamily::growth(2.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn decay_evaluations() {
        let f = decay();
        assert!((f.f(1, 0.15625) - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(f.f(1, 0.0625), 0.0);
        assert_eq!(f.f(1, 0.5), 0.0);
        assert_eq!(f.f_plus(1, -1.0), 0.0);
        assert_eq!(f.primitive(1, 0.25), 0.125);
        assert_eq!(f.primitive(1, 0.03), 0.0);
        assert!((f.primitive(1, 0.15625) - 0.0625).abs() < 1e-16);
        assert_eq!(f.f(0, 0.1), 0.0);
        assert_eq!(f.f(-3, 0.1), 0.0);
    }

    #[test]
    fn single_site_stacks_every_tent() {
        let f = make_single_site_family(5, 2.0, 2.0, 2.0).unwrap();
        assert!((f.f(5, 0.15625) - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(f.f(6, 0.15625), 0.0);
        let expected = 0.125 + 2f64.powi(-12) + 2f64.powi(-48);
        assert!((f.primitive(5, 0.25) - expected).abs() < 1e-15);
        assert!((f.primitive(5, 0.25) - 0.12524414).abs() < 1e-8);
    }

    #[test]
    fn growth_rung_two_lives_in_log_domain() {
        let f = make_growth_family(3.0, 2.0, 2.0).unwrap();
        let h2 = f.primitive_plus_log(2, LogReal::pow2(300.0));
        assert!(h2.is_positive());
        assert!((h2.log2_abs() - 729.0).abs() < 1e-12);
        assert_eq!(f.primitive_plus_log(2, LogReal::pow2(80.0)), LogReal::ZERO);
    }

    #[test]
    fn stacked_primitive_difference_matches_direct() {
        let f = make_single_site_family(0, 2.0, 2.0, 2.0).unwrap();
        for (x, y) in [(0.1, 0.2), (0.001, 0.3), (0.2, 0.2000001), (1e-6, 2e-3)] {
            let direct = f.primitive(0, y) - f.primitive(0, x);
            let diff = f.primitive_plus_diff(0, x, y);
            assert!((diff - direct).abs() <= 1e-15, "{x} {y}: {diff} vs {direct}");
        }
    }

    #[test]
    fn spike_heights_are_right_ends() {
        let f = decay();
        let h = f.spike_heights(3);
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].log2_abs(), -32.0);
        assert!(f.spike_heights(0).is_empty());
    }
}
