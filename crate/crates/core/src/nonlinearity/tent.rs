//! Triangular bumps and the cascades of them used as explicit nonlinearities.
//!
//! A tent on `[c, d]` with area `h` has slope `2e` where `e = 2h / (d - c)^2`
//! and peak `2h / (d - c)` at the midpoint. Its primitive is `e (t - c)^2` on
//! the left half and `h - e (d - t)^2` on the right half.

use serde::{Deserialize, Serialize};

use super::{Direction, FamilyError};
use crate::logdomain::{log2_one_minus_pow2, LogReal, Sign};

/// Smallest exponent whose power of two is a normal `f64`, with margin.
const LINEAR_MIN_LOG2: f64 = -1000.0;
const LINEAR_MAX_LOG2: f64 = 1000.0;
/// Terms below `sum · 2^-NEGLIGIBLE_BITS` are dropped from cascade sums.
const NEGLIGIBLE_BITS: f64 = 64.0;

/// One tent, stored by the base-2 logarithms of its end points and area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tent {
    pub log2_c: f64,
    pub log2_d: f64,
    pub log2_h: f64,
}

/// The same tent in plain floating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearTent {
    pub c: f64,
    pub d: f64,
    pub h: f64,
    pub e: f64,
}

impl LinearTent {
    pub fn mid(&self) -> f64 {
        0.5 * (self.c + self.d)
    }

    pub fn peak(&self) -> f64 {
        2.0 * self.h / (self.d - self.c)
    }

    pub fn f(&self, s: f64) -> f64 {
        if s <= self.c || s >= self.d {
            0.0
        } else if s <= self.mid() {
            2.0 * self.e * (s - self.c)
        } else {
            2.0 * self.e * (self.d - s)
        }
    }

    pub fn primitive(&self, t: f64) -> f64 {
        if t <= self.c {
            0.0
        } else if t >= self.d {
            self.h
        } else if t <= self.mid() {
            self.e * (t - self.c) * (t - self.c)
        } else {
            self.h - self.e * (self.d - t) * (self.d - t)
        }
    }

    /// `F(y) - F(x)` without cancellation when both points share a piece.
    pub fn primitive_diff(&self, x: f64, y: f64) -> f64 {
        let piece = |t: f64| {
            if t <= self.c {
                0
            } else if t >= self.d {
                3
            } else if t <= self.mid() {
                1
            } else {
                2
            }
        };
        match (piece(x), piece(y)) {
            (0, 0) | (3, 3) => 0.0,
            (1, 1) => self.e * (y - x) * ((y - self.c) + (x - self.c)),
            (2, 2) => self.e * (y - x) * ((self.d - x) + (self.d - y)),
            _ => self.primitive(y) - self.primitive(x),
        }
    }

    /// Largest value on `[lo, hi]`.
    pub fn max_on(&self, lo: f64, hi: f64) -> f64 {
        let (a, b) = (lo.max(self.c), hi.min(self.d));
        if a >= b {
            return 0.0;
        }
        self.f(self.mid().clamp(a, b))
    }
}

fn log2_of(x: LogReal) -> f64 {
    x.log2_abs()
}

impl Tent {
    /// `log2 (d - c)`.
    pub fn log2_width(&self) -> f64 {
        self.log2_d + log2_one_minus_pow2(self.log2_d - self.log2_c)
    }

    pub fn log2_e(&self) -> f64 {
        1.0 + self.log2_h - 2.0 * self.log2_width()
    }

    /// `log2` of the peak value `2h / (d - c)`.
    pub fn log2_peak(&self) -> f64 {
        1.0 + self.log2_h - self.log2_width()
    }

    pub fn c(&self) -> LogReal {
        LogReal::pow2(self.log2_c)
    }

    pub fn d(&self) -> LogReal {
        LogReal::pow2(self.log2_d)
    }

    pub fn h(&self) -> LogReal {
        LogReal::pow2(self.log2_h)
    }

    pub fn mid(&self) -> LogReal {
        self.c().add(self.d()) * LogReal::pow2(-1.0)
    }

    /// Plain floating-point form when every quantity is a comfortable normal.
    pub fn linear(&self) -> Option<LinearTent> {
        let logs = [
            self.log2_c,
            self.log2_d,
            self.log2_h,
            self.log2_e(),
            self.log2_peak(),
        ];
        if logs
            .iter()
            .all(|l| l.is_finite() && (LINEAR_MIN_LOG2..=LINEAR_MAX_LOG2).contains(l))
        {
            Some(LinearTent {
                c: self.log2_c.exp2(),
                d: self.log2_d.exp2(),
                h: self.log2_h.exp2(),
                e: self.log2_e().exp2(),
            })
        } else {
            None
        }
    }

    pub fn f_log(&self, s: LogReal) -> LogReal {
        if !s.is_positive() || s.log2_abs() <= self.log2_c || s.log2_abs() >= self.log2_d {
            return LogReal::ZERO;
        }
        let two_e = LogReal::pow2(1.0 + self.log2_e());
        let mid = self.mid();
        if s.total_cmp(&mid).is_le() {
            two_e * s.sub(self.c())
        } else {
            two_e * self.d().sub(s)
        }
    }

    pub fn primitive_log(&self, t: LogReal) -> LogReal {
        if !t.is_positive() || t.log2_abs() <= self.log2_c {
            return LogReal::ZERO;
        }
        if t.log2_abs() >= self.log2_d {
            return self.h();
        }
        let e = LogReal::pow2(self.log2_e());
        if t.total_cmp(&self.mid()).is_le() {
            let w = t.sub(self.c());
            e * w * w
        } else {
            let w = self.d().sub(t);
            self.h().sub(e * w * w)
        }
    }

    pub fn f(&self, s: f64) -> f64 {
        match self.linear() {
            Some(lin) => lin.f(s),
            None => self.f_log(LogReal::from_f64(s)).to_f64(),
        }
    }

    pub fn primitive(&self, t: f64) -> f64 {
        match self.linear() {
            Some(lin) => lin.primitive(t),
            None => self.primitive_log(LogReal::from_f64(t)).to_f64(),
        }
    }

    /// Largest value over `[lo, hi]` (`lo <= hi`, both given in log form).
    pub fn max_on_log(&self, lo: LogReal, hi: LogReal) -> LogReal {
        let a = if lo.is_positive() && lo.log2_abs() > self.log2_c {
            lo
        } else {
            self.c()
        };
        let b = if hi.is_positive() && hi.log2_abs() < self.log2_d {
            hi
        } else {
            self.d()
        };
        if !hi.is_positive() || a.total_cmp(&b).is_ge() {
            return LogReal::ZERO;
        }
        let mid = self.mid();
        let x = if mid.total_cmp(&a).is_lt() {
            a
        } else if mid.total_cmp(&b).is_gt() {
            b
        } else {
            mid
        };
        self.f_log(x)
    }
}

/// Which closed-form cascade generates the tents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum TentLaw {
    /// `c_m = 2^{-q^{2m}}`, `d_m = 2^{-q^{2m-1}}`, `h_m = 2^{-(p+ + 1) q^{2m-2}}`.
    Decay,
    /// `c_m = 2^{q^{2m}}`, `d_m = 2^{q^{2m+1}}`, `h_m = 2^{(p- - 1) q^{2m+2}}`.
    Growth,
    /// Decay end points with `h_m = 2 / (alpha^{p+} p+ 2^{p+ q^{2m-4}})`.
    Remark2 { alpha: f64 },
}

impl TentLaw {
    pub fn direction(self) -> Direction {
        match self {
            TentLaw::Decay | TentLaw::Remark2 { .. } => Direction::Zero,
            TentLaw::Growth => Direction::Infinity,
        }
    }
}

/// How tents are assigned to sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum Layout {
    /// Tent `m` sits alone at site `k = m` for `m >= 1`; sites `k <= 0` are zero.
    PerSite,
    /// Every tent sits at the single site `k0`.
    Stacked { k0: i64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentFamily {
    pub law: TentLaw,
    pub layout: Layout,
    pub q: f64,
    pub pminus: f64,
    pub pplus: f64,
    /// Keep only tents `m <= max_index`.
    pub max_index: Option<u32>,
}

/// Fails naming every violated inequality, not just the first.
fn check(q: f64, rules: &[(bool, &str)]) -> Result<(), FamilyError> {
    let failed: Vec<&str> = rules.iter().filter(|(ok, _)| !ok).map(|&(_, r)| r).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(FamilyError::Constraint {
            q,
            constraint: failed.join(" and "),
        })
    }
}

fn check_exponents(pminus: f64, pplus: f64) -> Result<(), FamilyError> {
    if pminus > 1.0 && pminus <= pplus && pplus.is_finite() {
        Ok(())
    } else {
        Err(FamilyError::Exponents { pminus, pplus })
    }
}

impl TentFamily {
    pub fn decay(q: f64, pminus: f64, pplus: f64) -> Result<Self, FamilyError> {
        check_exponents(pminus, pplus)?;
        check(
            q,
            &[
                (q >= 2.0, "q >= 2"),
                ((pplus + 1.0) / pminus < q, "(p+ + 1)/p- < q"),
                (q < pplus + 1.0, "q < p+ + 1"),
            ],
        )?;
        Ok(Self {
            law: TentLaw::Decay,
            layout: Layout::PerSite,
            q,
            pminus,
            pplus,
            max_index: None,
        })
    }

    pub fn growth(q: f64, pminus: f64, pplus: f64) -> Result<Self, FamilyError> {
        check_exponents(pminus, pplus)?;
        check(q, &[(q >= 2.0, "q >= 2"), (q > pplus / (pminus - 1.0), "q > p+/(p- - 1)")])?;
        Ok(Self {
            law: TentLaw::Growth,
            layout: Layout::PerSite,
            q,
            pminus,
            pplus,
            max_index: None,
        })
    }

    pub fn single_site(k0: i64, q: f64, pminus: f64, pplus: f64) -> Result<Self, FamilyError> {
        Ok(Self {
            layout: Layout::Stacked { k0 },
            ..Self::decay(q, pminus, pplus)?
        })
    }

    /// The modified-area variant; `alpha` is the embedding constant of the
    /// problem the family will be paired with.
    pub fn remark2(q: f64, pminus: f64, pplus: f64, alpha: f64) -> Result<Self, FamilyError> {
        check_exponents(pminus, pplus)?;
        check(
            q,
            &[
                (pplus > 2.0, "p+ > 2"),
                (q >= 2.0, "q >= 2"),
                (pplus / pminus < q, "p+/p- < q"),
                (q < pplus, "q < p+"),
                (alpha > 0.0 && alpha.is_finite(), "alpha > 0"),
            ],
        )?;
        Ok(Self {
            law: TentLaw::Remark2 { alpha },
            layout: Layout::PerSite,
            q,
            pminus,
            pplus,
            max_index: None,
        })
    }

    pub fn truncated(mut self, max_index: u32) -> Self {
        self.max_index = Some(max_index);
        self
    }

    pub fn direction(&self) -> Direction {
        self.law.direction()
    }

    /// Largest tent index whose logarithms are finite (and within truncation).
    pub fn index_limit(&self) -> u32 {
        // q^{2m+2} must stay finite: (2m + 2) ln q < ~709
        let by_range = ((700.0 / self.q.ln() - 2.0) / 2.0).floor().max(1.0) as u32;
        self.max_index.map_or(by_range, |m| m.min(by_range))
    }

    /// Tent `m >= 1`.
    pub fn tent(&self, m: u32) -> Tent {
        let q = self.q;
        let m = m as i32;
        match self.law {
            TentLaw::Decay => Tent {
                log2_c: -q.powi(2 * m),
                log2_d: -q.powi(2 * m - 1),
                log2_h: -(self.pplus + 1.0) * q.powi(2 * m - 2),
            },
            TentLaw::Growth => Tent {
                log2_c: q.powi(2 * m),
                log2_d: q.powi(2 * m + 1),
                log2_h: (self.pminus - 1.0) * q.powi(2 * m + 2),
            },
            TentLaw::Remark2 { alpha } => Tent {
                log2_c: -q.powi(2 * m),
                log2_d: -q.powi(2 * m - 1),
                log2_h: 1.0
                    - self.pplus * alpha.log2()
                    - self.pplus.log2()
                    - self.pplus * q.powi(2 * m - 4),
            },
        }
    }

    /// Tent indices living at site `k`, in increasing order.
    pub fn indices_at(&self, k: i64) -> std::ops::RangeInclusive<u32> {
        let limit = self.index_limit();
        match self.layout {
            Layout::PerSite if k >= 1 && k <= limit as i64 => k as u32..=k as u32,
            Layout::Stacked { k0 } if k == k0 => 1..=limit,
            #[allow(clippy::reversed_empty_ranges)]
            _ => 1..=0,
        }
    }

    /// Sites carrying at least one tent, within `sites`.
    pub fn active_sites(&self, sites: std::ops::RangeInclusive<i64>) -> Vec<i64> {
        sites.filter(|&k| !self.indices_at(k).is_empty()).collect()
    }

    /// Sum of `g(tent)` over the tents at `k`, cut off once the remaining
    /// tents cannot matter. `active` reports whether `x` lies above the tent's
    /// left end; `complete` whether it lies above the right end.
    fn cascade_at<F>(&self, k: i64, x: LogReal, mut g: F) -> LogReal
    where
        F: FnMut(&Tent) -> LogReal,
    {
        let mut total = LogReal::ZERO;
        for m in self.indices_at(k) {
            let tent = self.tent(m);
            let above_left = x.is_positive() && x.log2_abs() > tent.log2_c;
            match self.direction() {
                Direction::Zero => {
                    if !above_left {
                        continue;
                    }
                    let term = g(&tent);
                    total = total.add(term);
                    let complete = x.log2_abs() >= tent.log2_d;
                    if complete && !total.is_zero() && term.log2_abs() < total.log2_abs() - NEGLIGIBLE_BITS
                    {
                        break;
                    }
                }
                Direction::Infinity => {
                    if !above_left {
                        break;
                    }
                    total = total.add(g(&tent));
                }
            }
        }
        total
    }

    pub fn f_log(&self, k: i64, s: LogReal) -> LogReal {
        if !s.is_positive() {
            return LogReal::ZERO;
        }
        // Supports are disjoint, so at most one tent is nonzero.
        for m in self.indices_at(k) {
            let tent = self.tent(m);
            let inside = s.log2_abs() > tent.log2_c && s.log2_abs() < tent.log2_d;
            if inside {
                return tent.f_log(s);
            }
            let past = match self.direction() {
                Direction::Zero => s.log2_abs() >= tent.log2_d,
                Direction::Infinity => s.log2_abs() <= tent.log2_c,
            };
            if past {
                break;
            }
        }
        LogReal::ZERO
    }

    pub fn f(&self, k: i64, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        for m in self.indices_at(k) {
            let tent = self.tent(m);
            let ls = s.log2();
            if ls > tent.log2_c && ls < tent.log2_d {
                return tent.f(s);
            }
            let past = match self.direction() {
                Direction::Zero => ls >= tent.log2_d,
                Direction::Infinity => ls <= tent.log2_c,
            };
            if past {
                break;
            }
        }
        0.0
    }

    pub fn primitive_log(&self, k: i64, t: LogReal) -> LogReal {
        self.cascade_at(k, t, |tent| tent.primitive_log(t))
    }

    pub fn primitive(&self, k: i64, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let single = self.indices_at(k);
        if single.start() == single.end() {
            return self.tent(*single.start()).primitive(t);
        }
        self.primitive_log(k, LogReal::from_f64(t)).to_f64()
    }

    /// `F_k(y) - F_k(x)` for `x, y >= 0`.
    pub fn primitive_diff(&self, k: i64, x: f64, y: f64) -> f64 {
        let idx = self.indices_at(k);
        if idx.is_empty() {
            return 0.0;
        }
        if idx.start() == idx.end() {
            if let Some(lin) = self.tent(*idx.start()).linear() {
                return lin.primitive_diff(x, y);
            }
        }
        let top = x.max(y);
        let mut total = 0.0;
        for m in idx {
            let tent = self.tent(m);
            let lt = top.log2();
            match self.direction() {
                Direction::Zero => {
                    // Both points above this tent, and every later tent lies lower still.
                    if x.min(y).log2() >= tent.log2_d {
                        break;
                    }
                    if lt <= tent.log2_c {
                        continue;
                    }
                }
                Direction::Infinity => {
                    if lt <= tent.log2_c {
                        break;
                    }
                }
            }
            total += match tent.linear() {
                Some(lin) => lin.primitive_diff(x, y),
                None => tent.primitive(y) - tent.primitive(x),
            };
        }
        total
    }

    /// `max_{|t| <= bound} |f_k(t)|`, exact.
    pub fn site_max_abs_log(&self, k: i64, bound: LogReal) -> LogReal {
        let mut best = LogReal::ZERO;
        for m in self.indices_at(k) {
            let tent = self.tent(m);
            if bound.log2_abs() <= tent.log2_c {
                match self.direction() {
                    Direction::Zero => continue,
                    Direction::Infinity => break,
                }
            }
            let v = tent.max_on_log(LogReal::ZERO, bound);
            best = best.max(v);
            if self.direction() == Direction::Zero
                && !best.is_zero()
                && tent.log2_peak() < best.log2_abs() - NEGLIGIBLE_BITS
                && bound.log2_abs() >= tent.log2_d
            {
                break;
            }
        }
        best
    }

    /// `sum_k max_{|xi| <= c} F_k(xi)` over every site. The tents are
    /// nonnegative and supported in `(0, inf)`, so the inner maximum is
    /// `F_k(c)`.
    pub fn sum_max_primitive_log(&self, c: LogReal) -> LogReal {
        match self.layout {
            Layout::Stacked { k0 } => self.primitive_log(k0, c),
            Layout::PerSite => {
                let mut total = LogReal::ZERO;
                for m in 1..=self.index_limit() {
                    let tent = self.tent(m);
                    let above_left = c.is_positive() && c.log2_abs() > tent.log2_c;
                    match self.direction() {
                        Direction::Zero => {
                            if !above_left {
                                continue;
                            }
                            let term = tent.primitive_log(c);
                            total = total.add(term);
                            if c.log2_abs() >= tent.log2_d
                                && term.log2_abs() < total.log2_abs() - NEGLIGIBLE_BITS
                            {
                                break;
                            }
                        }
                        Direction::Infinity => {
                            if !above_left {
                                break;
                            }
                            total = total.add(tent.primitive_log(c));
                        }
                    }
                }
                total
            }
        }
    }

    /// End points `[c_m, d_m]` of the tents at site `k` (linear, saturating).
    pub fn support(&self, k: i64) -> Vec<(f64, f64)> {
        self.indices_at(k)
            .map(|m| self.tent(m))
            .take_while(|t| t.log2_d > -1074.0 && t.log2_c < 1024.0)
            .filter(|t| t.log2_d > -1074.0)
            .map(|t| (t.log2_c.exp2(), t.log2_d.exp2()))
            .collect()
    }

    /// Kinks of `f_k` representable as `f64`: both ends and the midpoint of each tent.
    pub fn breakpoints(&self, k: i64) -> Vec<f64> {
        self.indices_at(k)
            .map(|m| self.tent(m))
            .filter_map(|t| t.linear())
            .flat_map(|t| [t.c, t.mid(), t.d])
            .collect()
    }

    /// The gaps between consecutive supports, on which every `f_k` vanishes:
    /// `[d_{n+1}, c_n]` for decay laws, `[d_n, c_{n+1}]` for growth.
    pub fn gap_interval(&self, n: u32) -> (LogReal, LogReal) {
        match self.direction() {
            Direction::Zero => (self.tent(n + 1).d(), self.tent(n).c()),
            Direction::Infinity => (self.tent(n).d(), self.tent(n + 1).c()),
        }
    }
}

/// Materializes tent `m` in linear arithmetic or reports why it cannot be.
pub fn materialize(fam: &TentFamily, m: u32) -> Result<LinearTent, FamilyError> {
    let tent = fam.tent(m);
    tent.linear().ok_or(FamilyError::Unrepresentable {
        m,
        log2_c: tent.log2_c,
        log2_d: tent.log2_d,
        log2_h: tent.log2_h,
    })
}

/// `2^x` as a [`LogReal`] with positive sign; shorthand for log-domain heights.
pub fn height(log2: f64) -> LogReal {
    LogReal::from_log2(Sign::Positive, log2)
}

#[allow(dead_code)]
fn _log2_of_is_used(x: LogReal) -> f64 {
    log2_of(x)
}
