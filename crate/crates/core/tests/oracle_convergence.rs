//! N-convergence of the exact finite-N measurements toward the large-N
//! formulas on the small-lattice configuration the acceptance suite uses.

use num_complex::Complex64 as C64;
use otoc_core::bogoliubov::LPropagator;
use otoc_core::hartree::evolve;
use otoc_core::oracle::{OracleContext, DEFAULT_SECTOR_CAP};
use otoc_core::scrambling::{otoc_scalar, sigma_matrix, wick_moment};
use otoc_core::space::{Field, KernelSpec, ModeSpace, Observable};

fn setup() -> (std::sync::Arc<ModeSpace>, Field) {
    let sp = ModeSpace::ring_lattice(3, 1.0, KernelSpec::Onsite { strength: 1.0 }).unwrap();
    let phi = Field::new(
        sp.clone(),
        vec![
            C64::new(0.5_f64.sqrt(), 0.0),
            C64::new(0.3_f64.sqrt(), 0.0),
            C64::new(0.2_f64.sqrt(), 0.0),
        ],
    )
    .unwrap();
    (sp, phi)
}

#[test]
fn otoc_prefactor_is_four() {
    let (sp, phi0) = setup();
    let traj = evolve(&phi0, 1.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let a = Observable::PositionDiagonal(vec![1.0, 0.0, 0.0]);
    let b = Observable::PositionDiagonal(vec![0.0, 1.0, 0.0]);

    for &t in &[0.25, 0.5] {
        let scalar = otoc_scalar(&prop, &a, &b, t).unwrap();
        let scalar_sq = scalar * scalar;
        let mut previous = f64::INFINITY;
        let mut ratio_at_64 = 0.0;
        for &n in &[8usize, 16, 32, 64] {
            let ctx = OracleContext::new(&sp, n, &phi0, DEFAULT_SECTOR_CAP).unwrap();
            let exact = ctx.finite_n_otoc(&traj, &a, &b, t).unwrap();
            let err = (exact - 4.0 * scalar_sq).abs();
            println!(
                "t={t} N={n}: finite = {exact:.8e}, 4 s^2 = {:.8e}, ratio = {:.4}, |err| = {err:.3e}",
                4.0 * scalar_sq,
                exact / scalar_sq
            );
            assert!(err < previous, "error should decrease with N at t={t}");
            previous = err;
            ratio_at_64 = exact / scalar_sq;
        }
        // the limiting proportionality constant between the exact OTOC and
        // (Im<g0, f_t>)^2
        assert!(
            (ratio_at_64 - 4.0).abs() < 0.4,
            "prefactor at N=64, t={t}: {ratio_at_64:.4}"
        );
    }
}

#[test]
fn wick_rule_error_shrinks_with_n() {
    let (sp, phi0) = setup();
    let traj = evolve(&phi0, 1.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let a = Observable::PositionDiagonal(vec![1.0, 0.0, 0.0]);
    let times = [0.0, 0.3, 0.6, 0.9];
    let sigma = sigma_matrix(&prop, &a, &times).unwrap();
    let predicted = wick_moment(&sigma, 4).unwrap();
    let mut errs = Vec::new();
    for &n in &[8usize, 64] {
        let ctx = OracleContext::new(&sp, n, &phi0, DEFAULT_SECTOR_CAP).unwrap();
        let exact = ctx.finite_n_moment(&traj, &a, &times).unwrap();
        let err = (exact - predicted).norm();
        println!("m=4 N={n}: exact = {exact}, wick = {predicted}, |err| = {err:.3e}");
        errs.push(err);
    }
    assert!(
        errs[1] * 2.0 < errs[0],
        "expected at least a factor-2 reduction"
    );
}
