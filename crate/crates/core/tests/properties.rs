mod common;

use common::*;
use pklap_core::energy::{energy_difference, energy_j, grad_j, grad_phi, phi, spike_energy, truncate};
use pklap_core::lattice::{luxemburg_norm, modular, ExponentRule, ExponentSeq, NormKind, WeightRule, WeightSeq};
use pklap_core::{LatticeVector, LogReal, NonlinearFamily, Problem};
use proptest::prelude::*;

fn vector(max_len: usize, mag: f64) -> impl Strategy<Value = LatticeVector> {
    (-20i64..20, prop::collection::vec(-mag..mag, 1..max_len))
        .prop_map(|(offset, v)| LatticeVector::new(offset, v).unwrap())
}

fn alternating(even: f64, odd: f64) -> Problem {
    Problem::new(
        ExponentSeq::new(ExponentRule::Alternating { even, odd }).unwrap(),
        WeightSeq::new(WeightRule::Constant { value: 1.0 }, WeightRule::AbsPlus { c: 1.0 }),
        64,
    )
    .unwrap()
}

fn exponents() -> impl Strategy<Value = Problem> {
    (1.2f64..4.0, 1.2f64..4.0).prop_map(|(e, o)| alternating(e, o))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn unit_modular_at_the_norm(u in vector(40, 10.0), prob in exponents()) {
        prop_assume!(u.sup_norm() > 0.0);
        for kind in [NormKind::E, NormKind::Lpk] {
            let n = luxemburg_norm(&u, &prob, kind).unwrap();
            let rho = modular(&u.scaled(1.0 / n), &prob, kind).unwrap();
            prop_assert!((rho - 1.0).abs() < 1e-9, "rho(u/|u|) = {rho}");
        }
    }

    #[test]
    fn norm_is_homogeneous(u in vector(40, 10.0), prob in exponents(), t in -50.0f64..50.0) {
        prop_assume!(u.sup_norm() > 0.0 && t.abs() > 1e-3);
        let n = luxemburg_norm(&u, &prob, NormKind::E).unwrap();
        let nt = luxemburg_norm(&u.scaled(t), &prob, NormKind::E).unwrap();
        prop_assert!(rel(nt, t.abs() * n) < 1e-10);
    }

    #[test]
    fn norm_triangle_inequality(u in vector(20, 5.0), v in vector(20, 5.0), prob in exponents()) {
        let (lo, hi) = (u.offset().min(v.offset()), (u.offset() + u.len() as i64).max(v.offset() + v.len() as i64));
        let w = LatticeVector::new(lo, (lo..hi).map(|k| u.get(k) + v.get(k)).collect()).unwrap();
        let n = |x: &LatticeVector| luxemburg_norm(x, &prob, NormKind::E).unwrap();
        prop_assert!(n(&w) <= (n(&u) + n(&v)) * (1.0 + 1e-10));
    }

    #[test]
    fn sup_norm_embedding(u in vector(40, 10.0), prob in exponents()) {
        let n = luxemburg_norm(&u, &prob, NormKind::E).unwrap();
        prop_assert!(u.sup_norm() <= prob.alpha() * n + 1e-9);
    }

    #[test]
    fn phi_sandwich(u in vector(40, 10.0), prob in exponents()) {
        let rho = rho_e(&u, &prob);
        let p = phi(&u, &prob).unwrap();
        prop_assert!(p >= rho / prob.pplus() * (1.0 - 1e-12));
        prop_assert!(p <= rho / prob.pminus() * (1.0 + 1e-12));
    }

    #[test]
    fn negative_part_pairing(u in vector(40, 3.0), prob in exponents()) {
        let g = grad_phi(&u, &prob).unwrap();
        let neg = u.negative_part();
        let pairing: f64 = neg.iter().map(|(k, x)| -g.get(k) * x).sum();
        let rho = if neg.sup_norm() > 0.0 { rho_e(&neg, &prob) } else { 0.0 };
        prop_assert!(pairing <= -rho + 1e-10, "{pairing} vs {rho}");
    }

    #[test]
    fn gradient_matches_differences(u in vector(12, 0.3), prob in exponents(), pick in 0usize..12) {
        let fam = decay();
        let j = u.offset() + (pick % u.len()) as i64;
        let x = u.get(j);
        prop_assume!(fam.breakpoints(j).iter().chain(&[0.0]).all(|b| (x - b).abs() >= 1e-4));
        let h = 1e-6;
        let at = |s: f64| {
            let mut v = u.clone();
            v.values_mut()[(j - u.offset()) as usize] += s;
            energy_j(&v, &prob, &fam).unwrap().j
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let g = grad_j(&u, &prob, &fam).unwrap().get(j);
        prop_assert!((g - fd).abs() <= 1e-6 * g.abs().max(fd.abs()).max(1e-3), "{g} vs {fd}");
    }

    #[test]
    fn energy_difference_agrees(u in vector(12, 0.3), v in vector(12, 0.3), prob in exponents()) {
        let fam = decay();
        let direct = energy_j(&v, &prob, &fam).unwrap().j - energy_j(&u, &prob, &fam).unwrap().j;
        let diff = energy_difference(&u, &v, &prob, &fam).unwrap();
        prop_assert!((diff - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn primitive_is_integral_of_f(k in -2i64..6, t in -0.3f64..0.3) {
        let fam = decay();
        // trapezoid over a partition containing every kink is exact
        let mut knots: Vec<f64> = fam.breakpoints(k).into_iter().filter(|&b| b > t.min(0.0) && b < t.max(0.0)).collect();
        knots.push(0.0);
        knots.push(t);
        knots.sort_by(f64::total_cmp);
        let area: f64 = knots.windows(2).map(|w| 0.5 * (w[1] - w[0]) * (fam.f(k, w[0]) + fam.f(k, w[1]))).sum();
        let signed = if t >= 0.0 { area } else { -area };
        prop_assert!((fam.primitive(k, t) - signed).abs() <= 1e-15);
    }

    #[test]
    fn plus_part_identity(k in -3i64..8, t in -1.0f64..1.0) {
        for fam in [decay(), single_site()] {
            prop_assert_eq!(fam.f_plus(k, t), fam.f(k, t.max(0.0)));
            prop_assert_eq!(fam.primitive_plus(k, t), fam.primitive(k, t.max(0.0)));
        }
    }

    #[test]
    fn truncation_lands_in_the_box(u in vector(30, 2.0), c in 1e-3f64..1.0) {
        let t = truncate(&u, c);
        prop_assert!(t.iter().all(|(_, x)| (0.0..=c).contains(&x)));
        prop_assert_eq!(truncate(&t, c), t);
    }

    #[test]
    fn truncation_descends_in_a_gap(u in vector(14, 1.0), rung in 1u32..=2) {
        let prob = examples_problem(2.0);
        let fam = decay();
        let NonlinearFamily::Tent(t) = &fam else { unreachable!() };
        let (c, d) = t.gap_interval(rung);
        let u = u.scaled(d.to_f64());
        let before = energy_j(&u, &prob, &fam).unwrap().j;
        let after = energy_j(&truncate(&u, c.to_f64()), &prob, &fam).unwrap().j;
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn spike_closed_form(k in 1i64..4, log2_t in -10.0f64..-1.0, p in 1.5f64..3.0) {
        let prob = alternating(p, 2.0);
        let fam = decay();
        let t = log2_t.exp2();
        let closed = spike_energy(&prob, &fam, k, LogReal::pow2(log2_t)).unwrap();
        let generic = energy_j(&LatticeVector::spike(k, t), &prob, &fam).unwrap();
        prop_assert!(rel(closed.phi.to_f64(), generic.phi) <= 1e-12);
        if let Some(j) = closed.j {
            prop_assert!((j.to_f64() - generic.j).abs() <= 1e-12 * generic.phi.max(generic.psi));
        }
    }
}

fn single_site() -> NonlinearFamily {
    pklap_core::nonlinearity::make_single_site_family(3, 2.0, 2.0, 2.0).unwrap()
}

#[test]
fn spike_phi_matches_the_step_display() {
    // a_{k0}t^p/p + a_{k0-1}t^p/p + b_{k0}t^p/p with a ≡ 1, b_k = |k| + 1
    let prob = instance_a(2.0);
    for (k, t) in [(0, 1.0), (3, 0.5), (-4, 2.0)] {
        let expect = (2.0 + (k as f64).abs() + 1.0) * t * t / 2.0;
        assert!((phi(&LatticeVector::spike(k, t), &prob).unwrap() - expect).abs() < 1e-15);
    }
}
