mod common;

use common::*;
use pklap_core::energy::energy_j;
use pklap_core::solver::{
    minimize_box, rung_boxes, solution_ladder, verify_solution, CheckStatus, LadderBoxes, RungMode, SolverConfig,
    SolverError, Tolerances,
};
use pklap_core::{Exec, LatticeVector, NonlinearFamily};

const D2: f64 = 1.0 / 256.0;

#[test]
fn rung_one_from_the_site_two_spike() {
    let prob = examples_problem(2.0);
    let fam = decay();
    let init = LatticeVector::spike_in(-40..=40, 2, D2);
    let m = minimize_box(&prob, &fam, 0.0625, &SolverConfig::default(), &init).unwrap();
    assert!(m.converged(), "{:?}", m.stop);
    assert!(m.j <= -7.0 * 2f64.powi(-15), "J = {}", m.j);
    assert!(m.u.iter().all(|(_, x)| (0.0..=D2).contains(&x)));

    // grid over one- and two-site supports around k = 2
    let step = D2 / 512.0;
    let grid: Vec<f64> = (0..=512).map(|i| i as f64 * step).collect();
    let mut best = f64::INFINITY;
    for &x in &grid {
        best = best.min(energy_j(&LatticeVector::spike(2, x), &prob, &fam).unwrap().j);
        for &y in grid.iter().step_by(8) {
            for (offset, vals) in [(1, [y, x]), (2, [x, y])] {
                let u = LatticeVector::new(offset, vals.to_vec()).unwrap();
                best = best.min(energy_j(&u, &prob, &fam).unwrap().j);
            }
        }
    }
    assert!(m.j <= best, "box minimum {} above grid minimum {best}", m.j);
}

#[test]
fn iterates_stay_feasible_and_runs_repeat() {
    let prob = examples_problem(2.0);
    let fam = decay();
    let init = LatticeVector::new(-5, (0..11).map(|i| 0.005 * i as f64).collect()).unwrap();
    let cfg = SolverConfig::default();
    let a = minimize_box(&prob, &fam, 0.0625, &cfg, &init).unwrap();
    let b = minimize_box(&prob, &fam, 0.0625, &cfg, &init).unwrap();
    assert_eq!(a, b);
    assert!(a.u.iter().all(|(_, x)| (0.0..=0.0625).contains(&x)));
    assert!(a.j <= energy_j(&init, &prob, &fam).unwrap().j);
}

#[test]
fn init_outside_the_box_is_an_error() {
    let prob = examples_problem(2.0);
    let init = LatticeVector::new(0, vec![0.01, -0.01]).unwrap();
    let err = minimize_box(&prob, &decay(), 0.0625, &SolverConfig::default(), &init).unwrap_err();
    assert!(matches!(err, SolverError::InitOutsideBox { site: 1, .. }));
}

#[test]
fn ladder_is_identical_across_exec_modes() {
    let prob = examples_problem(2.0);
    let fam = decay();
    let rungs = rung_boxes(&fam, &LadderBoxes::TentGaps, 1..=3).unwrap();
    let run = |exec| {
        let cfg = SolverConfig {
            exec,
            ..SolverConfig::default()
        };
        solution_ladder(&prob, &fam, &rungs, &cfg).unwrap()
    };
    let seq = run(Exec::Sequential);
    assert_eq!(seq, run(Exec::Parallel));
    assert_eq!(seq.len(), 3);
    assert_eq!(seq[2].mode, RungMode::CertificateOnly);
    assert!((seq[2].energy.log2_abs() + 192.0).abs() < 1e-6);
    assert!(seq.iter().all(|r| r.verification.as_ref().unwrap().pass));
}

#[test]
fn zero_family_ladder_is_trivial() {
    let prob = instance_a(2.0);
    let rungs = rung_boxes(
        &NonlinearFamily::Zero,
        &LadderBoxes::Explicit {
            boxes: vec![(1.0, 0.5), (0.1, 0.05)],
        },
        1..=2,
    )
    .unwrap();
    let recs = solution_ladder(&prob, &NonlinearFamily::Zero, &rungs, &SolverConfig::default()).unwrap();
    for r in &recs {
        assert!(r.trivial);
        assert_eq!(r.u.as_ref().unwrap().sup_norm(), 0.0);
        // u = 0 is not a nontrivial solution
        let v = r.verification.as_ref().unwrap();
        assert_eq!(v.check("negative_energy").unwrap().status, CheckStatus::Fail);
    }
}

#[test]
fn verification_catches_a_negative_entry() {
    let prob = examples_problem(2.0);
    let fam = decay();
    let rungs = rung_boxes(&fam, &LadderBoxes::TentGaps, 1..=1).unwrap();
    let mut rec = solution_ladder(&prob, &fam, &rungs, &SolverConfig::default()).unwrap().remove(0);
    let tol = Tolerances::default();
    assert!(verify_solution(&rec, &prob, &fam, &tol).unwrap().pass);
    let u = rec.u.as_mut().unwrap();
    let k = u.offset() + 3;
    u.values_mut()[3] = -1e-3;
    let v = verify_solution(&rec, &prob, &fam, &tol).unwrap();
    assert!(!v.pass);
    assert_eq!(v.check("nonnegative").unwrap().status, CheckStatus::Fail, "site {k}");
}

// p = 3: descent leaves residue far from the spike and parks entries above
// the gap; without cleanup the window grows to the cap.
#[test]
fn remark2_second_rung_stays_local() {
    let prob = examples_problem(3.0);
    let fam = pklap_core::nonlinearity::make_remark2_family(2.0, 3.0, 3.0, prob.alpha()).unwrap();
    let rungs = rung_boxes(&fam, &LadderBoxes::TentGaps, 2..=2).unwrap();
    let cfg = SolverConfig {
        max_iter: 200_000,
        ..SolverConfig::default()
    };
    let rec = &solution_ladder(&prob, &fam, &rungs, &cfg).unwrap()[0];
    assert_eq!(rec.mode, RungMode::Numeric, "{:?}", rec.note);
    assert_eq!(rec.halfwidth, Some(40));
    assert!(rec.sup_norm.unwrap() <= 2f64.powi(-32));
    assert!(rec.j_value.unwrap() < 0.0);
    assert!(rec.verification.as_ref().unwrap().pass);
}
