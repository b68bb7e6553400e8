//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use pklap_core::lattice::{ExponentRule, ExponentSeq, SiteTable, WeightRule, WeightSeq};
use pklap_core::nonlinearity::{make_decay_family, make_growth_family};
use pklap_core::{LatticeVector, NonlinearFamily, Problem};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `a ≡ 1`, `b_k = |k| + 1`.
pub fn instance_a(p: f64) -> Problem {
    Problem::new(
        ExponentSeq::constant(p).unwrap(),
        WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsPlus { c: 1.0 }),
        64,
    )
    .unwrap()
}

/// `a ≡ 1`, `b_0 = 1`, `b_k = |k|`: the setting of both worked examples.
pub fn examples_problem(p: f64) -> Problem {
    Problem::new(
        ExponentSeq::constant(p).unwrap(),
        WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsFix1),
        64,
    )
    .unwrap()
}

pub fn decay() -> NonlinearFamily {
    make_decay_family(2.0, 2.0, 2.0).unwrap()
}

pub fn growth() -> NonlinearFamily {
    make_growth_family(3.0, 2.0, 2.0).unwrap()
}

/// Variable exponents drawn from `[1.5, 3]` on `sites`, 2 elsewhere.
pub fn random_exponents(rng: &mut ChaCha8Rng, offset: i64, len: usize) -> Problem {
    let values = (0..len + 2).map(|_| rng.random_range(1.5..=3.0)).collect();
    let rule = ExponentRule::Table(SiteTable {
        offset: offset - 1,
        values,
        default: Some(2.0),
    });
    Problem::new(
        ExponentSeq::new(rule).unwrap(),
        WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsPlus { c: 1.0 }),
        256,
    )
    .unwrap()
}

/// A nonzero vector on a window of at most 64 sites with magnitudes spread
/// over several decades.
pub fn random_vector(rng: &mut ChaCha8Rng) -> LatticeVector {
    let len = rng.random_range(1..=64usize);
    let offset = rng.random_range(-40..=10i64);
    let scale = 10f64.powf(rng.random_range(-3.0..=3.0));
    let mut v: Vec<f64> = (0..len).map(|_| scale * rng.random_range(-1.0..=1.0)).collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = scale;
    }
    LatticeVector::new(offset, v).unwrap()
}

/// `Σ a_k|u_{k+1} - u_k|^{p_k} + b_k|u_k|^{p_k}` summed directly.
pub fn rho_e(u: &LatticeVector, prob: &Problem) -> f64 {
    let w = u.window().unwrap();
    let mut s = 0.0;
    for k in w.start() - 1..=*w.end() {
        let p = prob.p(k).unwrap();
        let (x, y) = (u.get(k), u.get(k + 1));
        s += prob.a(k).unwrap() * (y - x).abs().powf(p) + prob.b(k).unwrap() * x.abs().powf(p);
    }
    s
}

pub fn rho_lpk(u: &LatticeVector, prob: &Problem) -> f64 {
    u.iter().map(|(k, x)| x.abs().powf(prob.p(k).unwrap())).sum()
}

/// The decay tent at site 1: support `[1/16, 1/4]`, area `1/8`.
pub struct Tent1;

impl Tent1 {
    pub const C: f64 = 0.0625;
    pub const D: f64 = 0.25;
    pub const AREA: f64 = 0.125;

    pub fn peak() -> f64 {
        2.0 * Self::AREA / (Self::D - Self::C)
    }

    pub fn f(t: f64) -> f64 {
        let (mid, half) = ((Self::C + Self::D) / 2.0, (Self::D - Self::C) / 2.0);
        if t <= Self::C || t >= Self::D {
            0.0
        } else {
            Self::peak() * (1.0 - (t - mid).abs() / half)
        }
    }

    /// `∫_0^t f`, by the area of the triangle pieces.
    pub fn primitive(t: f64) -> f64 {
        let half = (Self::D - Self::C) / 2.0;
        let slope = Self::peak() / half;
        if t <= Self::C {
            0.0
        } else if t <= Self::C + half {
            0.5 * slope * (t - Self::C).powi(2)
        } else if t < Self::D {
            Self::AREA - 0.5 * slope * (Self::D - t).powi(2)
        } else {
            Self::AREA
        }
    }
}
