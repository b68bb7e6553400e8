//! The action functional `J = Φ - Ψ`, its gradient, the truncation map, spike
//! energies and the Ricceri bound sequence.
//!
//! ```text
//! Φ(u) = Σ_k (a_k/p_k)|∇⁺u_k|^{p_k} + (b_k/p_k)|u_k|^{p_k}
//! Ψ(u) = Σ_k F_k(u_k⁺)
//! ```

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeError, LatticeVector, Problem};
use crate::logdomain::LogReal;
use crate::nonlinearity::{Direction, NonlinearFamily, TentFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("{what} is not finite at site {site}")]
    NonFinite { what: &'static str, site: i64 },
}

pub type Result<T> = std::result::Result<T, EnergyError>;

/// `|t|^{p-2} t`, with value 0 at `t = 0` for every `p > 1`.
pub fn phi_p(t: f64, p: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if p == 2.0 {
        t
    } else {
        t.signum() * t.abs().powf(p - 1.0)
    }
}

fn abs_pow(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else {
        t.abs().powf(p)
    }
}

/// `|y|^p - |x|^p` without cancellation when `|x| ≈ |y|`.
pub fn pow_diff(x: f64, y: f64, p: f64) -> f64 {
    let (ax, ay) = (x.abs(), y.abs());
    if ax == ay {
        return 0.0;
    }
    if ax == 0.0 || ay == 0.0 {
        return abs_pow(y, p) - abs_pow(x, p);
    }
    if p == 2.0 {
        return (ay - ax) * (ay + ax);
    }
    ax.powf(p) * (p * ((ay - ax) / ax).ln_1p()).exp_m1()
}

/// Sites touched by the gradient part of `Φ` for a vector stored on `window`.
fn diff_sites(window: &RangeInclusive<i64>) -> RangeInclusive<i64> {
    (window.start() - 1)..=*window.end()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteTerm {
    pub k: i64,
    pub gradient: f64,
    pub potential: f64,
    pub psi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub phi: f64,
    pub psi: f64,
    pub j: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<SiteTerm>>,
}

fn site_terms(u: &LatticeVector, prob: &Problem, fam: &NonlinearFamily) -> Result<Vec<SiteTerm>> {
    let Some(window) = u.window() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(u.len() + 1);
    for k in diff_sites(&window) {
        let p = prob.p(k)?;
        let grad = u.get(k + 1) - u.get(k);
        let gradient = prob.a(k)? / p * abs_pow(grad, p);
        let (potential, psi) = if window.contains(&k) {
            let x = u.get(k);
            (prob.b(k)? / p * abs_pow(x, p), fam.primitive_plus(k, x))
        } else {
            (0.0, 0.0)
        };
        if !(gradient.is_finite() && potential.is_finite()) {
            return Err(EnergyError::NonFinite { what: "Φ term", site: k });
        }
        if !psi.is_finite() {
            return Err(EnergyError::NonFinite { what: "Ψ term", site: k });
        }
        out.push(SiteTerm {
            k,
            gradient,
            potential,
            psi,
        });
    }
    Ok(out)
}

pub fn phi(u: &LatticeVector, prob: &Problem) -> Result<f64> {
    Ok(site_terms(u, prob, &NonlinearFamily::Zero)?
        .iter()
        .map(|t| t.gradient + t.potential)
        .sum())
}

pub fn psi(u: &LatticeVector, fam: &NonlinearFamily) -> f64 {
    u.iter().map(|(k, x)| fam.primitive_plus(k, x)).sum()
}

pub fn energy_j(u: &LatticeVector, prob: &Problem, fam: &NonlinearFamily) -> Result<EnergyBreakdown> {
    breakdown(u, prob, fam, false)
}

/// As [`energy_j`], keeping the per-site terms.
pub fn energy_j_terms(u: &LatticeVector, prob: &Problem, fam: &NonlinearFamily) -> Result<EnergyBreakdown> {
    breakdown(u, prob, fam, true)
}

fn breakdown(u: &LatticeVector, prob: &Problem, fam: &NonlinearFamily, keep: bool) -> Result<EnergyBreakdown> {
    let terms = site_terms(u, prob, fam)?;
    let phi: f64 = terms.iter().map(|t| t.gradient + t.potential).sum();
    let psi: f64 = terms.iter().map(|t| t.psi).sum();
    Ok(EnergyBreakdown {
        phi,
        psi,
        j: phi - psi,
        terms: keep.then_some(terms),
    })
}

/// `J(v) - J(u)` summed site by site, so that nearby iterates compare
/// accurately even when `J` itself is large.
pub fn energy_difference(u: &LatticeVector, v: &LatticeVector, prob: &Problem, fam: &NonlinearFamily) -> Result<f64> {
    let window = match (u.window(), v.window()) {
        (None, None) => return Ok(0.0),
        (Some(w), None) | (None, Some(w)) => w,
        (Some(a), Some(b)) => (*a.start()).min(*b.start())..=(*a.end()).max(*b.end()),
    };
    let mut total = 0.0;
    for k in diff_sites(&window) {
        let p = prob.p(k)?;
        let (gu, gv) = (u.get(k + 1) - u.get(k), v.get(k + 1) - v.get(k));
        let mut term = prob.a(k)? / p * pow_diff(gu, gv, p);
        if window.contains(&k) {
            let (x, y) = (u.get(k), v.get(k));
            term += prob.b(k)? / p * pow_diff(x, y, p) - fam.primitive_plus_diff(k, x, y);
        }
        total += term;
    }
    if !total.is_finite() {
        return Err(EnergyError::NonFinite {
            what: "energy difference",
            site: *window.start(),
        });
    }
    Ok(total)
}

/// Gradient of `Φ`, stored on the window widened by one site on each side.
pub fn grad_phi(u: &LatticeVector, prob: &Problem) -> Result<LatticeVector> {
    grad(u, prob, None)
}

/// Gradient of `J`:
/// `a_{j-1} φ(∇⁺u_{j-1}) - a_j φ(∇⁺u_j) + b_j φ(u_j) - f_j(u_j⁺)`.
pub fn grad_j(u: &LatticeVector, prob: &Problem, fam: &NonlinearFamily) -> Result<LatticeVector> {
    grad(u, prob, Some(fam))
}

fn grad(u: &LatticeVector, prob: &Problem, fam: Option<&NonlinearFamily>) -> Result<LatticeVector> {
    let Some(window) = u.window() else {
        return Ok(LatticeVector::default());
    };
    let sites = (window.start() - 1)..=(window.end() + 1);
    grad_on(u, prob, fam, sites)
}

/// Gradient of `J` (or `Φ` when `fam` is `None`) evaluated on `sites`.
pub fn grad_on(
    u: &LatticeVector,
    prob: &Problem,
    fam: Option<&NonlinearFamily>,
    sites: RangeInclusive<i64>,
) -> Result<LatticeVector> {
    let start = *sites.start();
    // flux_k = a_k φ_{p_k}(∇⁺u_k) for k in [start - 1, end]
    let mut flux_prev = {
        let k = start - 1;
        prob.a(k)? * phi_p(u.get(k + 1) - u.get(k), prob.p(k)?)
    };
    let mut out = Vec::with_capacity(sites.clone().count());
    for j in sites {
        let p = prob.p(j)?;
        let x = u.get(j);
        let flux = prob.a(j)? * phi_p(u.get(j + 1) - x, p);
        let mut g = flux_prev - flux + prob.b(j)? * phi_p(x, p);
        if let Some(f) = fam {
            g -= f.f_plus(j, x);
        }
        if !g.is_finite() {
            return Err(EnergyError::NonFinite { what: "gradient", site: j });
        }
        out.push(g);
        flux_prev = flux;
    }
    Ok(LatticeVector::new(start, out)?)
}

/// `γ(s) = min(s⁺, c)` applied to every site.
pub fn truncate(u: &LatticeVector, c: f64) -> LatticeVector {
    assert!(c > 0.0, "truncation level must be positive");
    u.map(|s| s.max(0.0).min(c))
}

// ---------------------------------------------------------------------------
// Spikes and certificates

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpikeEnergy {
    pub phi: LogReal,
    pub psi: LogReal,
    /// `None` when `Φ` and `Ψ` agree to within the cancellation tolerance and
    /// the sign of `J` cannot be resolved.
    pub j: Option<LogReal>,
}

/// Energy of the vector equal to `t` at `k` and zero elsewhere:
/// `((a_k + b_k)/p_k) t^{p_k} + (a_{k-1}/p_{k-1}) t^{p_{k-1}} - F_k(t⁺)`.
pub fn spike_energy(prob: &Problem, fam: &NonlinearFamily, k: i64, t: LogReal) -> Result<SpikeEnergy> {
    let (pk, pl) = (prob.p(k)?, prob.p(k - 1)?);
    let own = LogReal::from_f64((prob.a(k)? + prob.b(k)?) / pk) * t.abs_powf(pk);
    let left = LogReal::from_f64(prob.a(k - 1)? / pl) * t.abs_powf(pl);
    let phi = own.add(left);
    let psi = fam.primitive_plus_log(k, t);
    Ok(SpikeEnergy {
        phi,
        psi,
        j: phi.checked_sub(psi),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateKind {
    /// Backs the negativity of `inf J` over a box and its divergence.
    Step4Spike,
    /// A spike from the sequence used with Ricceri's alternative.
    RicceriSpike,
}

/// A single-site vector with negative energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub site: i64,
    pub height: LogReal,
    pub energy: LogReal,
    pub kind: CertificateKind,
}

impl Certificate {
    /// Recomputes the spike energy and compares it with the stored value.
    pub fn verify(&self, prob: &Problem, fam: &NonlinearFamily) -> Result<bool> {
        let e = spike_energy(prob, fam, self.site, self.height)?;
        Ok(match e.j {
            Some(j) => {
                j.sign() == self.energy.sign() && (j.log2_abs() - self.energy.log2_abs()).abs() <= 1e-12 / std::f64::consts::LN_2
            }
            None => false,
        })
    }

    /// The spike as a vector, if its height is an ordinary float.
    pub fn vector(&self, sites: RangeInclusive<i64>) -> Option<LatticeVector> {
        let t = self.height.to_f64_checked()?;
        sites.contains(&self.site).then(|| LatticeVector::spike_in(sites, self.site, t))
    }
}

// ---------------------------------------------------------------------------
// Ricceri bound

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicceriRow {
    pub m: u32,
    pub c_m: LogReal,
    pub r_m: LogReal,
    pub phi_bound: LogReal,
    pub delta_estimate: LogReal,
    pub threshold: f64,
}

impl RicceriRow {
    pub fn verdict(&self) -> bool {
        self.delta_estimate.log2_abs() < self.threshold.log2() || self.delta_estimate.is_zero()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RicceriReport {
    pub direction: Direction,
    pub rows: Vec<RicceriRow>,
}

impl RicceriReport {
    /// `δ < 1` (resp. `γ < 1`) as witnessed by the last running minimum.
    pub fn verdict(&self) -> bool {
        self.rows.last().is_some_and(RicceriRow::verdict)
    }
}

/// Levels `c_m` of a tent family.
pub fn tent_levels(fam: &TentFamily, ms: RangeInclusive<u32>) -> Vec<(u32, LogReal)> {
    ms.map(|m| (m, fam.tent(m).c())).collect()
}

/// One row of the bound chain without the running minimum:
/// towards zero `r = (1/p+)(c/α)^{p+}` and
/// `φ(r) <= p+ α^{p+} Σ_k max_{|ξ|<=c} F_k(ξ) / c^{p+}`;
/// towards infinity the outer exponent `p+` becomes `p-`.
pub fn ricceri_bound(prob: &Problem, fam: &NonlinearFamily, direction: Direction, m: u32, c: LogReal) -> RicceriRow {
    let (pminus, pplus) = (prob.pminus(), prob.pplus());
    let p = match direction {
        Direction::Zero => pplus,
        Direction::Infinity => pminus,
    };
    let alpha = LogReal::from_f64(prob.alpha());
    let r_m = LogReal::from_f64(1.0 / pplus) * (c / alpha).abs_powf(p);
    let sum = fam.sum_max_primitive_log(c);
    let phi_bound = LogReal::from_f64(pplus) * alpha.abs_powf(p) * sum / c.abs_powf(p);
    RicceriRow {
        m,
        c_m: c,
        r_m,
        phi_bound,
        delta_estimate: phi_bound,
        threshold: 1.0,
    }
}

pub fn ricceri_sequence(
    prob: &Problem,
    fam: &NonlinearFamily,
    direction: Direction,
    levels: &[(u32, LogReal)],
) -> RicceriReport {
    let mut rows: Vec<RicceriRow> = Vec::with_capacity(levels.len());
    for &(m, c) in levels {
        let mut row = ricceri_bound(prob, fam, direction, m, c);
        if let Some(prev) = rows.last() {
            if prev.delta_estimate.total_cmp(&row.delta_estimate).is_lt() {
                row.delta_estimate = prev.delta_estimate;
            }
        }
        rows.push(row);
    }
    RicceriReport { direction, rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{ExponentSeq, WeightRule, WeightSeq};
    use crate::logdomain::Sign;
    use crate::nonlinearity::{make_decay_family, make_growth_family};

    fn instance_a() -> Problem {
        Problem::new(
            ExponentSeq::constant(2.0).unwrap(),
            WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsPlus { c: 1.0 }),
            64,
        )
        .unwrap()
    }

    fn example(p: f64) -> Problem {
        Problem::new(
            ExponentSeq::constant(p).unwrap(),
            WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsFix1),
            64,
        )
        .unwrap()
    }

    #[test]
    fn phi_of_a_unit_spike() {
        let prob = instance_a();
        assert_eq!(phi(&LatticeVector::spike(0, 1.0), &prob).unwrap(), 1.5);
        assert_eq!(phi(&LatticeVector::default(), &prob).unwrap(), 0.0);
    }

    #[test]
    fn decay_spike_energy() {
        let prob = example(2.0);
        let fam = make_decay_family(2.0, 2.0, 2.0).unwrap();
        let u = LatticeVector::spike(1, 0.25);
        assert_eq!(psi(&u, &fam), 0.125);
        let e = energy_j(&u, &prob, &fam).unwrap();
        assert_eq!((e.phi, e.psi, e.j), (0.09375, 0.125, -0.03125));
        let s = spike_energy(&prob, &fam, 1, LogReal::from_f64(0.25)).unwrap();
        assert_eq!(s.j.unwrap().to_f64(), -0.03125);
        assert_eq!(psi(&LatticeVector::new(0, vec![-1.0, -0.2]).unwrap(), &fam), 0.0);
    }

    #[test]
    fn growth_spike_in_log_domain() {
        let prob = example(2.0);
        let fam = make_growth_family(3.0, 2.0, 2.0).unwrap();
        let s = spike_energy(&prob, &fam, 1, LogReal::pow2(27.0)).unwrap();
        assert!((s.phi.log2_abs() - (54.0 + 1.5f64.log2())).abs() < 1e-12);
        let j = s.j.unwrap();
        assert_eq!(j.sign(), Sign::Negative);
        assert!((j.log2_abs() - 81.0).abs() < 1e-6);
    }

    #[test]
    fn indeterminate_sign_is_flagged() {
        // Φ = 2 t^2 at site 1 with t = 1/4 is 1/8; pick F so that it equals h = 1/8.
        let prob = Problem::new(
            ExponentSeq::constant(2.0).unwrap(),
            WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::Constant { value: 2.0 }),
            8,
        )
        .unwrap();
        let fam = make_decay_family(2.0, 2.0, 2.0).unwrap();
        let s = spike_energy(&prob, &fam, 1, LogReal::from_f64(0.25)).unwrap();
        assert!(s.j.is_none());
    }

    #[test]
    fn gradient_by_hand() {
        let prob = instance_a();
        let g = grad_j(&LatticeVector::spike(0, 1.0), &prob, &NonlinearFamily::Zero).unwrap();
        assert_eq!((g.get(-1), g.get(0), g.get(1)), (-1.0, 3.0, -1.0));
        assert!(grad_j(&LatticeVector::zeros(-3..=3), &prob, &make_decay_family(2.0, 2.0, 2.0).unwrap())
            .unwrap()
            .values()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn truncation_clamps() {
        let u = LatticeVector::new(0, vec![-0.5, 0.3, 1.2]).unwrap();
        assert_eq!(truncate(&u, 1.0).values(), &[0.0, 0.3, 1.0]);
    }

    #[test]
    fn pow_diff_is_accurate() {
        let (x, y) = (1.0, 1.0 + 1e-12);
        let h = y - x;
        let exact = 1.5 * h + 0.375 * h * h;
        assert!((pow_diff(x, y, 1.5) - exact).abs() < 1e-26);
        assert_eq!(pow_diff(0.0, 2.0, 3.0), 8.0);
        assert_eq!(pow_diff(-2.0, 2.0, 3.0), 0.0);
    }

    #[test]
    fn energy_difference_matches_direct() {
        let prob = example(2.0);
        let fam = make_decay_family(2.0, 2.0, 2.0).unwrap();
        let u = LatticeVector::new(0, vec![0.01, 0.2, 0.003]).unwrap();
        let v = LatticeVector::new(0, vec![0.02, 0.1, 0.0]).unwrap();
        let direct = energy_j(&v, &prob, &fam).unwrap().j - energy_j(&u, &prob, &fam).unwrap().j;
        assert!((energy_difference(&u, &v, &prob, &fam).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn ricceri_rows_for_the_decay_example() {
        let prob = example(2.0);
        let NonlinearFamily::Tent(t) = make_decay_family(2.0, 2.0, 2.0).unwrap() else {
            unreachable!()
        };
        let fam = NonlinearFamily::Tent(t.clone());
        let rep = ricceri_sequence(&prob, &fam, Direction::Zero, &tent_levels(&t, 1..=4));
        assert_eq!(rep.rows[0].r_m.to_f64(), 2f64.powi(-9));
        assert!((rep.rows[0].phi_bound.to_f64() - 0.1250000000018).abs() < 1e-12);
        assert!((rep.rows[1].phi_bound.log2_abs() + 15.0).abs() < 1e-9);
        assert!(rep.verdict());
        let zero = ricceri_sequence(&prob, &NonlinearFamily::Zero, Direction::Zero, &tent_levels(&t, 1..=3));
        assert!(zero.rows.iter().all(|r| r.phi_bound.is_zero()));
    }
}
