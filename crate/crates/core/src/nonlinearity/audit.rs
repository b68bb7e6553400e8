//! Numerical evidence for the hypotheses on `f_k`.
//!
//! Tent families get exact answers from their closed forms; custom families
//! are sampled (all knots plus a uniform grid per support piece). Every
//! auditor returns the measured quantity together with a witness, never a
//! bare boolean.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::{Direction, FamilyError, NonlinearFamily, TentFamily};
use crate::energy::{spike_energy, Certificate, CertificateKind, EnergyError};
use crate::exec::Exec;
use crate::lattice::Problem;
use crate::logdomain::LogReal;

/// Default number of samples per support interval for custom families.
pub const DEFAULT_SAMPLES: usize = 1024;

fn sample_points(fam: &NonlinearFamily, k: i64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut pts: Vec<f64> = fam
        .breakpoints(k)
        .into_iter()
        .filter(|t| (lo..=hi).contains(t))
        .collect();
    pts.extend([lo, hi]);
    for (a, b) in fam.support(k) {
        let (a, b) = (a.max(lo), b.min(hi));
        if a < b {
            let n = samples.max(1);
            pts.extend((0..=n).map(|i| a + (b - a) * i as f64 / n as f64));
        }
    }
    pts
}

// ---------------------------------------------------------------------------
// (F1): continuity and f_k(0) = 0

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub ok: bool,
    /// Largest jump across a breakpoint, relative to the site's largest
    /// `|f|` at a breakpoint (at least 1).
    pub max_jump: f64,
    pub offender: Option<(i64, f64, String)>,
}

pub fn check_f1(fam: &NonlinearFamily, sites: RangeInclusive<i64>) -> F1Report {
    let mut report = F1Report {
        ok: true,
        max_jump: 0.0,
        offender: None,
    };
    for k in sites {
        let f0 = fam.f(k, 0.0);
        if f0 != 0.0 && report.offender.is_none() {
            report.ok = false;
            report.offender = Some((k, 0.0, format!("f_k(0) = {f0}")));
        }
        let scale = fam
            .breakpoints(k)
            .iter()
            .map(|&b| fam.f(k, b).abs())
            .fold(1.0, f64::max);
        for b in fam.breakpoints(k) {
            let delta = 1e-9 * b.abs().max(f64::MIN_POSITIVE);
            let jump = (fam.f(k, b + delta) - fam.f(k, b - delta)).abs();
            report.max_jump = report.max_jump.max(jump / scale);
            // Lipschitz pieces move by at most slope·2δ; anything larger is a jump.
            if jump > 1e-6 * scale && report.offender.is_none() {
                report.ok = false;
                report.offender = Some((k, b, format!("jump {jump}")));
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// (F2): summable site maxima

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteMax {
    pub k: i64,
    pub max: LogReal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F2Report {
    pub bound: f64,
    pub sum_estimate: LogReal,
    pub per_site_max: Vec<SiteMax>,
    /// Closed-form maxima (tents) rather than sampled ones.
    pub exact: bool,
}

pub fn check_f2(fam: &NonlinearFamily, bound: f64, sites: RangeInclusive<i64>, samples: usize) -> F2Report {
    let ks: Vec<i64> = sites.collect();
    let exact = !matches!(fam, NonlinearFamily::Custom(_));
    let per_site_max: Vec<SiteMax> = Exec::default().map(&ks, |&k| {
        let max = if exact {
            fam.site_max_abs_f_log(k, LogReal::from_f64(bound))
        } else {
            let m = sample_points(fam, k, -bound, bound, samples)
                .into_iter()
                .map(|t| fam.f(k, t).abs())
                .fold(0.0, f64::max);
            LogReal::from_f64(m)
        };
        SiteMax { k, max }
    });
    let sum_estimate = LogReal::sum(per_site_max.iter().map(|s| s.max));
    F2Report {
        bound,
        sum_estimate,
        per_site_max,
        exact,
    }
}

// ---------------------------------------------------------------------------
// (F3): sign intervals

/// Intervals `[c_n, d_n]` on which every `f_k` must be nonpositive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignIntervals {
    intervals: Vec<(LogReal, LogReal)>,
    direction: Direction,
}

impl SignIntervals {
    /// Checks `0 < c_n < d_n` and the nesting: `d_{n+1} < c_n` towards zero,
    /// `d_n < c_{n+1}` towards infinity.
    pub fn new(intervals: Vec<(LogReal, LogReal)>, direction: Direction) -> Result<Self, FamilyError> {
        for (i, (c, d)) in intervals.iter().enumerate() {
            if !c.is_positive() || c.total_cmp(d).is_ge() {
                return Err(FamilyError::Ordering {
                    index: i,
                    reason: format!("need 0 < c < d, got [{c}, {d}]"),
                });
            }
        }
        for (i, w) in intervals.windows(2).enumerate() {
            let ((c0, d0), (c1, d1)) = (w[0], w[1]);
            let ok = match direction {
                Direction::Zero => d1.total_cmp(&c0).is_lt(),
                Direction::Infinity => d0.total_cmp(&c1).is_lt(),
            };
            if !ok {
                return Err(FamilyError::Ordering {
                    index: i + 1,
                    reason: format!("[{c1}, {d1}] does not follow [{c0}, {d0}] towards {direction:?}"),
                });
            }
        }
        Ok(Self { intervals, direction })
    }

    pub fn from_f64(intervals: &[(f64, f64)], direction: Direction) -> Result<Self, FamilyError> {
        Self::new(
            intervals
                .iter()
                .map(|&(c, d)| (LogReal::from_f64(c), LogReal::from_f64(d)))
                .collect(),
            direction,
        )
    }

    /// The zero gaps between consecutive tents, `n` in `ns`.
    pub fn gaps(fam: &TentFamily, ns: RangeInclusive<u32>) -> Result<Self, FamilyError> {
        Self::new(ns.map(|n| fam.gap_interval(n)).collect(), fam.direction())
    }

    /// The tents' own supports (on which `f_k > 0`), `n` in `ns`.
    pub fn supports(fam: &TentFamily, ns: RangeInclusive<u32>) -> Result<Self, FamilyError> {
        Self::new(
            ns.map(|n| {
                let t = fam.tent(n);
                (t.c(), t.d())
            })
            .collect(),
            fam.direction(),
        )
    }

    pub fn intervals(&self) -> &[(LogReal, LogReal)] {
        &self.intervals
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignOffender {
    pub k: i64,
    pub t: LogReal,
    pub value: LogReal,
    pub interval: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignReport {
    pub ok: bool,
    pub exact: bool,
    /// The point with the largest positive `f_k(t)` found on any interval.
    pub worst: Option<SignOffender>,
}

fn tent_sign_offender(fam: &TentFamily, k: i64, lo: LogReal, hi: LogReal) -> Option<(LogReal, LogReal)> {
    let mut best: Option<(LogReal, LogReal)> = None;
    for m in fam.indices_at(k) {
        let tent = fam.tent(m);
        // [lo, hi] meets the open support (c, d)?
        if lo.log2_abs() < tent.log2_d && hi.log2_abs() > tent.log2_c {
            let mid = tent.mid();
            let t = if mid.total_cmp(&lo).is_lt() {
                lo
            } else if mid.total_cmp(&hi).is_gt() {
                hi
            } else {
                mid
            };
            let v = tent.f_log(t);
            if v.is_positive() && best.is_none_or(|(_, bv)| v.total_cmp(&bv).is_gt()) {
                best = Some((t, v));
            }
        }
    }
    best
}

pub fn check_sign_intervals(
    fam: &NonlinearFamily,
    intervals: &SignIntervals,
    sites: RangeInclusive<i64>,
    samples: usize,
) -> SignReport {
    let ks: Vec<i64> = sites.collect();
    let exact = !matches!(fam, NonlinearFamily::Custom(_));
    let per_site: Vec<Option<SignOffender>> = Exec::default().map(&ks, |&k| {
        let mut worst: Option<SignOffender> = None;
        for (i, &(lo, hi)) in intervals.intervals().iter().enumerate() {
            let found = match fam {
                NonlinearFamily::Zero => None,
                NonlinearFamily::Tent(t) => tent_sign_offender(t, k, lo, hi),
                NonlinearFamily::Custom(_) => sample_points(fam, k, lo.to_f64(), hi.to_f64(), samples)
                    .into_iter()
                    .map(|t| (t, fam.f(k, t)))
                    .filter(|&(_, v)| v > 0.0)
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(t, v)| (LogReal::from_f64(t), LogReal::from_f64(v))),
            };
            if let Some((t, value)) = found {
                if worst.as_ref().is_none_or(|w| value.total_cmp(&w.value).is_gt()) {
                    worst = Some(SignOffender { k, t, value, interval: i });
                }
            }
        }
        worst
    });
    let worst = per_site
        .into_iter()
        .flatten()
        .reduce(|a, b| if b.value.total_cmp(&a.value).is_gt() { b } else { a });
    SignReport {
        ok: worst.is_none(),
        exact,
        worst,
    }
}

// ---------------------------------------------------------------------------
// (F4): liminf of the summed primitive over t^p

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum F4Points {
    /// `t = c_m` for the family's own tents.
    TentLeftEnds,
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F4Row {
    pub m: u32,
    pub t: LogReal,
    pub numerator: LogReal,
    pub ratio: LogReal,
    pub running_min: LogReal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F4Report {
    pub direction: Direction,
    pub rows: Vec<F4Row>,
    pub liminf_estimate: LogReal,
    pub threshold: f64,
    pub below_threshold: bool,
}

/// `A(t) = Σ_k max_{|ξ|<=t} F_k(ξ) / t^p` with `p = p+` towards zero and
/// `p = p-` towards infinity, against `1/(p+ α^{p+})` resp. `1/(p+ α^{p-})`.
pub fn estimate_f4(
    fam: &NonlinearFamily,
    prob: &Problem,
    direction: Direction,
    ms: RangeInclusive<u32>,
    points: &F4Points,
) -> Result<F4Report, FamilyError> {
    let (pminus, pplus, alpha) = (prob.pminus(), prob.pplus(), prob.alpha());
    let (p, threshold) = match direction {
        Direction::Zero => (pplus, 1.0 / (pplus * alpha.powf(pplus))),
        Direction::Infinity => (pminus, 1.0 / (pplus * alpha.powf(pminus))),
    };
    let ts: Vec<(u32, LogReal)> = match points {
        F4Points::TentLeftEnds => {
            let tents = fam.tents().ok_or_else(|| FamilyError::BadTable {
                site: 0,
                reason: "tent left ends requested for a family without tents".into(),
            })?;
            ms.map(|m| (m, tents.tent(m).c())).collect()
        }
        F4Points::Explicit(v) => ms
            .filter_map(|m| v.get(m as usize - 1).map(|&t| (m, LogReal::from_f64(t))))
            .collect(),
    };
    let mut rows = Vec::with_capacity(ts.len());
    let mut running = None::<LogReal>;
    for (m, t) in ts {
        let numerator = fam.sum_max_primitive_log(t);
        let ratio = numerator / t.abs_powf(p);
        let rm = running.map_or(ratio, |r| if ratio.total_cmp(&r).is_lt() { ratio } else { r });
        running = Some(rm);
        rows.push(F4Row {
            m,
            t,
            numerator,
            ratio,
            running_min: rm,
        });
    }
    let liminf_estimate = running.unwrap_or(LogReal::ZERO);
    Ok(F4Report {
        direction,
        rows,
        liminf_estimate,
        threshold,
        below_threshold: liminf_estimate.to_f64() < threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedRow {
    pub m: u32,
    pub ratio: LogReal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedLowerBound {
    pub rows: Vec<ShiftedRow>,
    pub bound: f64,
    pub holds: bool,
}

/// The modified-area lower bound: `Σ_k max_{|ξ|<=c_{m+1}} F_k(ξ) / c_m^{p+}`
/// against `2 / (α^{p+} p+)`. The dominant term equals the bound exactly, so
/// the comparison allows one part in `1e12` of rounding.
pub fn shifted_lower_bound(fam: &TentFamily, prob: &Problem, ms: RangeInclusive<u32>) -> ShiftedLowerBound {
    let (pplus, alpha) = (prob.pplus(), prob.alpha());
    let bound = 2.0 / (alpha.powf(pplus) * pplus);
    let whole = NonlinearFamily::Tent(fam.clone());
    let rows: Vec<ShiftedRow> = ms
        .map(|m| {
            let num = whole.sum_max_primitive_log(fam.tent(m + 1).c());
            ShiftedRow {
                m,
                ratio: num / fam.tent(m).c().abs_powf(pplus),
            }
        })
        .collect();
    let holds = rows
        .iter()
        .all(|r| r.ratio.log2_abs() >= bound.log2() + (1.0 - 1e-12f64).log2());
    ShiftedLowerBound { rows, bound, holds }
}

// ---------------------------------------------------------------------------
// (F5)/(F6): single-spike ratios

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SpikeGrid {
    /// Right ends of each site's support pieces.
    RightEnds,
    /// At most this many right ends per site; stacked layouts carry hundreds.
    RightEndsFirst(usize),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeHit {
    pub k: i64,
    pub t: LogReal,
    /// `F_k(t) / ((a_{k-1} + a_k + b_k) t^p)`.
    pub ratio: LogReal,
    pub certificate: Option<Certificate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeScan {
    pub direction: Direction,
    /// `1/p-`.
    pub threshold: f64,
    pub hits: Vec<SpikeHit>,
}

impl SpikeScan {
    pub fn certificates(&self) -> impl Iterator<Item = &Certificate> {
        self.hits.iter().filter_map(|h| h.certificate.as_ref())
    }
}

/// Every grid point with `F_k(t) > (1/p-)(a_{k-1} + a_k + b_k) t^p`, where
/// `p = p-` towards zero and `p = p+` towards infinity. Each hit carries the
/// spike energy at `(k, t)`; on the matching side of `t = 1` that energy is
/// negative.
pub fn spike_condition_scan(
    fam: &NonlinearFamily,
    prob: &Problem,
    direction: Direction,
    sites: RangeInclusive<i64>,
    grid: &SpikeGrid,
    kind: CertificateKind,
) -> Result<SpikeScan, EnergyError> {
    let p = match direction {
        Direction::Zero => prob.pminus(),
        Direction::Infinity => prob.pplus(),
    };
    let threshold = 1.0 / prob.pminus();
    let ks: Vec<i64> = sites.collect();
    let per_site: Vec<Result<Vec<SpikeHit>, EnergyError>> = Exec::default().map(&ks, |&k| {
        let heights = match grid {
            SpikeGrid::RightEnds => fam.spike_heights(k),
            SpikeGrid::RightEndsFirst(n) => fam.spike_heights(k).into_iter().take(*n).collect(),
            SpikeGrid::Explicit(ts) => ts.iter().map(|&t| LogReal::from_f64(t)).collect(),
        };
        let w = LogReal::from_f64(prob.spike_weight(k)?);
        let mut hits = Vec::new();
        for t in heights.into_iter().filter(|t| t.is_positive()) {
            let big_f = fam.primitive_plus_log(k, t);
            if big_f.is_zero() {
                continue;
            }
            let ratio = big_f / (w * t.abs_powf(p));
            if ratio.log2_abs() > threshold.log2() {
                let energy = spike_energy(prob, fam, k, t)?;
                let certificate = energy.j.filter(|j| j.is_negative()).map(|j| Certificate {
                    site: k,
                    height: t,
                    energy: j,
                    kind,
                });
                hits.push(SpikeHit { k, t, ratio, certificate });
            }
        }
        Ok(hits)
    });
    let mut hits = Vec::new();
    for r in per_site {
        hits.extend(r?);
    }
    Ok(SpikeScan {
        direction,
        threshold,
        hits,
    })
}
