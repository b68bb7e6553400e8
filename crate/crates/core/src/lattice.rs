//! Finitely supported sequences on the integers and the variable-exponent
//! modulars and Luxemburg norms built on them.
//!
//! A [`LatticeVector`] stores a window `[offset, offset + len)` of values and
//! is exactly zero everywhere else, so every sum over the integers is a finite
//! sum over the window plus one neighbouring site.

use std::cmp::Ordering;
use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on `|modular(u / norm) - 1|`.
pub const NORM_TOL: f64 = 1e-12;
/// Bisection cap for the Luxemburg norm.
pub const NORM_MAX_BISECTIONS: usize = 200;
/// Largest radius `alpha` will scan while trying to certify the supremum.
const ALPHA_RADIUS_CAP: u64 = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("non-finite value {value} at site {site}")]
    NonFinite { site: i64, value: f64 },
    #[error("{rule} table has no entry for site {site} and no default")]
    OutsideTable { rule: &'static str, site: i64 },
    #[error("exponent bounds violate 1 < p- <= p+ < inf (p- = {pminus}, p+ = {pplus})")]
    ExponentBounds { pminus: f64, pplus: f64 },
    #[error("p_{site} = {value} lies outside the declared range [{pminus}, {pplus}]")]
    ExponentOutOfRange {
        site: i64,
        value: f64,
        pminus: f64,
        pplus: f64,
    },
    #[error("hypothesis (A) violated: {which}_{site} = {value} is not positive")]
    HypothesisA { which: char, site: i64, value: f64 },
    #[error("modular overflowed to a non-finite value")]
    InfiniteModular,
    #[error("Luxemburg bisection bracket failed: {0}")]
    BracketFailure(String),
}

pub type Result<T> = std::result::Result<T, LatticeError>;

// ---------------------------------------------------------------------------
// LatticeVector

/// A real sequence on the integers with finite support.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LatticeVector {
    offset: i64,
    values: Vec<f64>,
}

impl LatticeVector {
    pub fn new(offset: i64, values: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(LatticeError::NonFinite {
                site: offset + i as i64,
                value: v,
            });
        }
        Ok(Self { offset, values })
    }

    /// All-zero vector whose stored window is `sites`.
    pub fn zeros(sites: RangeInclusive<i64>) -> Self {
        let len = (sites.end() - sites.start() + 1).max(0) as usize;
        Self {
            offset: *sites.start(),
            values: vec![0.0; len],
        }
    }

    /// `t` at site `k`, zero elsewhere.
    pub fn spike(k: i64, t: f64) -> Self {
        assert!(t.is_finite(), "spike height must be finite");
        Self {
            offset: k,
            values: vec![t],
        }
    }

    /// Spike placed inside an explicit window (which must contain `k`).
    pub fn spike_in(sites: RangeInclusive<i64>, k: i64, t: f64) -> Self {
        assert!(sites.contains(&k), "spike site outside window");
        let mut v = Self::zeros(sites);
        v.values[(k - v.offset) as usize] = t;
        v
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Stored window, `None` when nothing is stored.
    pub fn window(&self) -> Option<RangeInclusive<i64>> {
        (!self.values.is_empty()).then(|| self.offset..=self.offset + self.values.len() as i64 - 1)
    }

    pub fn get(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.values.get(i as usize).copied().unwrap_or(0.0)
    }

    /// `(site, value)` pairs over the stored window.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.offset + i as i64, v))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            offset: self.offset,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        self.map(|v| t * v)
    }

    /// Copy with the stored window set to `sites` (values outside dropped).
    pub fn restricted(&self, sites: RangeInclusive<i64>) -> Self {
        let mut out = Self::zeros(sites);
        let offset = out.offset;
        for (i, v) in out.values.iter_mut().enumerate() {
            *v = self.get(offset + i as i64);
        }
        out
    }

    /// Forward difference `(u_{k+1} - u_k)_k`, stored on `[offset - 1, offset + len - 1]`.
    pub fn forward_diff(&self) -> Self {
        if self.values.is_empty() {
            return Self::default();
        }
        let values = (self.offset - 1..self.offset + self.values.len() as i64)
            .map(|k| self.get(k + 1) - self.get(k))
            .collect();
        Self {
            offset: self.offset - 1,
            values,
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `u^- = min(u, 0)` componentwise.
    pub fn negative_part(&self) -> Self {
        self.map(|v| v.min(0.0))
    }

    /// Sites with nonzero value, as an inclusive range.
    pub fn support(&self) -> Option<RangeInclusive<i64>> {
        let first = self.values.iter().position(|&v| v != 0.0)?;
        let last = self.values.iter().rposition(|&v| v != 0.0)?;
        Some(self.offset + first as i64..=self.offset + last as i64)
    }
}

impl PartialEq for LatticeVector {
    /// Site-wise equality on all of the integers.
    fn eq(&self, other: &Self) -> bool {
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.len() as i64).max(other.offset + other.len() as i64);
        (lo..hi).all(|k| self.get(k) == other.get(k))
    }
}

impl fmt::Display for LatticeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}: ", self.offset)?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

// ---------------------------------------------------------------------------
// Site rules

/// Explicit per-site values with an optional constant extension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteTable {
    pub offset: i64,
    pub values: Vec<f64>,
    pub default: Option<f64>,
}

impl SiteTable {
    fn lookup(&self, k: i64, rule: &'static str) -> Result<f64> {
        let i = k - self.offset;
        if i >= 0 && (i as usize) < self.values.len() {
            return Ok(self.values[i as usize]);
        }
        self.default.ok_or(LatticeError::OutsideTable { rule, site: k })
    }

    fn extent(&self) -> u64 {
        let first = self.offset.unsigned_abs();
        let last = (self.offset + self.values.len() as i64 - 1).unsigned_abs();
        first.max(last)
    }

    fn all_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().chain(self.default)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExponentRule {
    Constant { p: f64 },
    /// `even` on even sites, `odd` on odd sites.
    Alternating { even: f64, odd: f64 },
    /// `far + (center - far) / (1 + k^2)`.
    Smooth { center: f64, far: f64 },
    Table(SiteTable),
}

impl ExponentRule {
    pub fn at(&self, k: i64) -> Result<f64> {
        match self {
            ExponentRule::Constant { p } => Ok(*p),
            ExponentRule::Alternating { even, odd } => Ok(if k.rem_euclid(2) == 0 { *even } else { *odd }),
            ExponentRule::Smooth { center, far } => {
                let kk = (k as f64) * (k as f64);
                Ok(far + (center - far) / (1.0 + kk))
            }
            ExponentRule::Table(t) => t.lookup(k, "exponent"),
        }
    }

    /// `(inf_k p_k, sup_k p_k)` from the closed form.
    fn bounds(&self) -> (f64, f64) {
        match self {
            ExponentRule::Constant { p } => (*p, *p),
            ExponentRule::Alternating { even, odd } => (even.min(*odd), even.max(*odd)),
            ExponentRule::Smooth { center, far } => (center.min(*far), center.max(*far)),
            ExponentRule::Table(t) => t
                .all_values()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))),
        }
    }
}

/// Exponent sequence `p_k` together with its infimum and supremum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentSeq {
    rule: ExponentRule,
    pminus: f64,
    pplus: f64,
}

impl ExponentSeq {
    pub fn new(rule: ExponentRule) -> Result<Self> {
        let (pminus, pplus) = rule.bounds();
        if !(pminus > 1.0 && pminus <= pplus && pplus.is_finite()) {
            return Err(LatticeError::ExponentBounds { pminus, pplus });
        }
        Ok(Self { rule, pminus, pplus })
    }

    pub fn constant(p: f64) -> Result<Self> {
        Self::new(ExponentRule::Constant { p })
    }

    pub fn rule(&self) -> &ExponentRule {
        &self.rule
    }

    pub fn at(&self, k: i64) -> Result<f64> {
        self.rule.at(k)
    }

    pub fn pminus(&self) -> f64 {
        self.pminus
    }

    pub fn pplus(&self) -> f64 {
        self.pplus
    }

    pub fn is_constant(&self) -> bool {
        self.pminus == self.pplus
    }

    /// Checks `p- <= p_k <= p+` on `|k| <= radius`.
    pub fn audit(&self, radius: u64) -> Result<()> {
        let r = radius as i64;
        for k in -r..=r {
            let p = self.at(k)?;
            if !(p >= self.pminus && p <= self.pplus) {
                return Err(LatticeError::ExponentOutOfRange {
                    site: k,
                    value: p,
                    pminus: self.pminus,
                    pplus: self.pplus,
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightRule {
    Constant { value: f64 },
    /// `|k| + c`.
    AbsPlus { c: f64 },
    /// `1` at the origin, `|k|` elsewhere.
    AbsFix1,
    /// `e^{|k|}`.
    ExpAbs,
    Table(SiteTable),
}

impl WeightRule {
    pub fn at(&self, k: i64) -> Result<f64> {
        let v = match self {
            WeightRule::Constant { value } => *value,
            WeightRule::AbsPlus { c } => k.unsigned_abs() as f64 + c,
            WeightRule::AbsFix1 => {
                if k == 0 {
                    1.0
                } else {
                    k.unsigned_abs() as f64
                }
            }
            WeightRule::ExpAbs => (k.unsigned_abs() as f64).exp(),
            WeightRule::Table(t) => t.lookup(k, "weight")?,
        };
        if !v.is_finite() {
            return Err(LatticeError::NonFinite { site: k, value: v });
        }
        Ok(v)
    }

    /// Radius beyond which the rule is nondecreasing in `|k|` on both sides.
    pub fn nondecreasing_from(&self) -> Option<u64> {
        match self {
            WeightRule::Constant { .. }
            | WeightRule::AbsPlus { .. }
            | WeightRule::AbsFix1
            | WeightRule::ExpAbs => Some(0),
            WeightRule::Table(t) if t.default.is_some() => Some(t.extent() + 1),
            WeightRule::Table(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSeq {
    pub a: WeightRule,
    pub b: WeightRule,
}

impl WeightSeq {
    pub fn new(a: WeightRule, b: WeightRule) -> Self {
        Self { a, b }
    }
}

// ---------------------------------------------------------------------------
// Problem and the embedding constant

/// `sup_k b_k^{-1/p_k}` as computed over a finite radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub value: f64,
    /// True when a monotone tail of `b` proves the scanned maximum is the
    /// supremum over all of the integers.
    pub exact: bool,
    pub radius: u64,
    pub argmax: i64,
}

/// Computes the embedding constant over `|k| <= audit_radius`, extending the
/// radius when a declared monotone tail of `b` can certify the supremum.
pub fn alpha(exponents: &ExponentSeq, weights: &WeightSeq, audit_radius: u64) -> Result<Alpha> {
    let (pminus, pplus) = (exponents.pminus(), exponents.pplus());
    let term = |k: i64| -> Result<f64> {
        let a = weights.a.at(k)?;
        if !(a > 0.0) {
            return Err(LatticeError::HypothesisA { which: 'a', site: k, value: a });
        }
        let b = weights.b.at(k)?;
        if !(b > 0.0) {
            return Err(LatticeError::HypothesisA { which: 'b', site: k, value: b });
        }
        Ok(b.powf(-1.0 / exponents.at(k)?))
    };
    // Bound on b_j^{-1/p_j} for every j beyond an edge site with weight b_edge.
    let tail_bound = |b_edge: f64| b_edge.powf(-1.0 / pplus).max(b_edge.powf(-1.0 / pminus));

    let mut best = (f64::NEG_INFINITY, 0i64);
    let mut scanned: i64 = -1;
    let mut radius = audit_radius;
    loop {
        let r = radius as i64;
        for k in (scanned + 1)..=r {
            for site in if k == 0 { vec![0] } else { vec![-k, k] } {
                let v = term(site)?;
                if v > best.0 || (v == best.0 && site.abs() < best.1.abs()) {
                    best = (v, site);
                }
            }
        }
        scanned = r;
        let exact = match weights.b.nondecreasing_from() {
            Some(r0) if radius >= r0 => {
                let edge = tail_bound(weights.b.at(r)?).max(tail_bound(weights.b.at(-r)?));
                best.0 >= edge
            }
            _ => false,
        };
        let can_extend = weights.b.nondecreasing_from().is_some() && radius < ALPHA_RADIUS_CAP;
        if exact || !can_extend {
            return Ok(Alpha {
                value: best.0,
                exact,
                radius,
                argmax: best.1,
            });
        }
        radius = (radius.max(1) * 2).min(ALPHA_RADIUS_CAP);
    }
}

/// Exponents, weights and the cached embedding constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    exponents: ExponentSeq,
    weights: WeightSeq,
    alpha: Alpha,
}

impl Problem {
    pub fn new(exponents: ExponentSeq, weights: WeightSeq, audit_radius: u64) -> Result<Self> {
        exponents.audit(audit_radius)?;
        let alpha = alpha(&exponents, &weights, audit_radius)?;
        Ok(Self {
            exponents,
            weights,
            alpha,
        })
    }

    pub fn exponents(&self) -> &ExponentSeq {
        &self.exponents
    }

    pub fn weights(&self) -> &WeightSeq {
        &self.weights
    }

    pub fn p(&self, k: i64) -> Result<f64> {
        self.exponents.at(k)
    }

    pub fn a(&self, k: i64) -> Result<f64> {
        self.weights.a.at(k)
    }

    pub fn b(&self, k: i64) -> Result<f64> {
        self.weights.b.at(k)
    }

    pub fn pminus(&self) -> f64 {
        self.exponents.pminus()
    }

    pub fn pplus(&self) -> f64 {
        self.exponents.pplus()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value
    }

    pub fn alpha_info(&self) -> Alpha {
        self.alpha
    }

    /// `a_{k-1} + a_k + b_k`, the weight of a single spike at `k`.
    pub fn spike_weight(&self, k: i64) -> Result<f64> {
        Ok(self.a(k - 1)? + self.a(k)? + self.b(k)?)
    }
}

// ---------------------------------------------------------------------------
// Modulars and norms

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    /// The weighted space with gradient and potential terms.
    E,
    /// Plain variable-exponent sequence space.
    Lpk,
}

/// One modular term `2^log2 · η^{-p}` after scaling by `η`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogTerm {
    pub log2: f64,
    pub p: f64,
}

fn push_term(terms: &mut Vec<LogTerm>, weight: f64, x: f64, p: f64) {
    if x != 0.0 {
        terms.push(LogTerm {
            log2: weight.log2() + p * x.abs().log2(),
            p,
        });
    }
}

/// Nonzero modular terms of `u` in log form.
pub fn modular_terms(u: &LatticeVector, prob: &Problem, kind: NormKind) -> Result<Vec<LogTerm>> {
    let mut terms = Vec::new();
    let Some(window) = u.window() else {
        return Ok(terms);
    };
    match kind {
        NormKind::Lpk => {
            for (k, x) in u.iter() {
                push_term(&mut terms, 1.0, x, prob.p(k)?);
            }
        }
        NormKind::E => {
            for k in window.start() - 1..=*window.end() {
                let p = prob.p(k)?;
                push_term(&mut terms, prob.a(k)?, u.get(k + 1) - u.get(k), p);
                push_term(&mut terms, prob.b(k)?, u.get(k), p);
            }
        }
    }
    Ok(terms)
}

/// `rho(u)`: exact finite sum over the window.
pub fn modular(u: &LatticeVector, prob: &Problem, kind: NormKind) -> Result<f64> {
    let mut total = 0.0;
    if let Some(window) = u.window() {
        match kind {
            NormKind::Lpk => {
                for (k, x) in u.iter() {
                    total += x.abs().powf(prob.p(k)?);
                }
            }
            NormKind::E => {
                for k in window.start() - 1..=*window.end() {
                    let p = prob.p(k)?;
                    total += prob.a(k)? * (u.get(k + 1) - u.get(k)).abs().powf(p)
                        + prob.b(k)? * u.get(k).abs().powf(p);
                }
            }
        }
    }
    if total.is_finite() {
        Ok(total)
    } else {
        Err(LatticeError::InfiniteModular)
    }
}

fn log2_sum_exp2(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp2()).sum::<f64>().log2()
}

/// `log2` of the Luxemburg norm for a modular given by its log terms.
///
/// Bisection runs on `s = log2 η`, where `η ↦ rho(u/η)` is strictly
/// decreasing, starting from the unit-ball bracket
/// `[rho^{1/p-}, rho^{1/p+}]` (or its reverse when `rho > 1`).
pub fn luxemburg_log2(terms: &[LogTerm], pminus: f64, pplus: f64) -> Result<f64> {
    if terms.is_empty() {
        return Ok(f64::NEG_INFINITY);
    }
    if terms.iter().any(|t| !t.log2.is_finite() || !t.p.is_finite()) {
        return Err(LatticeError::BracketFailure("non-finite modular term".into()));
    }
    let log2_rho = log2_sum_exp2(terms.iter().map(|t| t.log2));
    let (mut lo, mut hi) = {
        let (x, y) = (log2_rho / pminus, log2_rho / pplus);
        (x.min(y), x.max(y))
    };
    if lo == hi {
        return Ok(lo);
    }
    let g = |s: f64| terms.iter().map(|t| (t.log2 - t.p * s).exp2()).sum::<f64>();
    let (g_lo, g_hi) = (g(lo), g(hi));
    if !(g_lo.is_finite() && g_hi.is_finite()) || g_lo < 1.0 - NORM_TOL || g_hi > 1.0 + NORM_TOL {
        return Err(LatticeError::BracketFailure(format!(
            "rho at bracket ends [{lo}, {hi}] is [{g_lo}, {g_hi}]"
        )));
    }
    if (g_lo - 1.0).abs() <= NORM_TOL {
        return Ok(lo);
    }
    if (g_hi - 1.0).abs() <= NORM_TOL {
        return Ok(hi);
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..NORM_MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if (gm - 1.0).abs() <= NORM_TOL {
            break;
        }
        if gm > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// `inf { η > 0 : rho(u/η) <= 1 }`.
pub fn luxemburg_norm(u: &LatticeVector, prob: &Problem, kind: NormKind) -> Result<f64> {
    let terms = modular_terms(u, prob, kind)?;
    Ok(luxemburg_log2(&terms, prob.pminus(), prob.pplus())?.exp2())
}

/// Total order used for deterministic tie-breaking: lexicographic in site order.
pub fn lexicographic_cmp(u: &LatticeVector, v: &LatticeVector) -> Ordering {
    let lo = u.offset().min(v.offset());
    let hi = (u.offset() + u.len() as i64).max(v.offset() + v.len() as i64);
    for k in lo..hi {
        match u.get(k).total_cmp(&v.get(k)) {
            Ordering::Equal => continue,
            ord => return ord,
        }
    }
    Ordering::Equal
}
