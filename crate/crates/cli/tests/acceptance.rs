//! Acceptance suite: one test per criterion, each printing a PASS/FAIL
//! line with the measured numbers. Run with
//!
//!   cargo test -p otoc-cli --release --test acceptance -- --nocapture
//!
//! The criteria pin every tolerance in code; a failure here means the
//! engine does not meet its contract.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otoc_core::bogoliubov::{homogeneous_pair_strang, LPropagator};
use otoc_core::hartree::evolve;
use otoc_core::oracle::{OracleContext, DEFAULT_SECTOR_CAP};
use otoc_core::scrambling::{
    butterfly_fit, char_function, enumerate_pairings, initial_rate, otoc, otoc_scalar,
    sigma_matrix, wick_moment,
};
use otoc_core::space::{inner, Field, KernelSpec, ModeSpace, Observable};

fn cfg_a_space() -> Arc<ModeSpace> {
    ModeSpace::torus(
        1,
        2.0 * PI,
        64,
        KernelSpec::Gaussian {
            strength: 1.0,
            width: 0.5,
        },
    )
    .unwrap()
}

fn cfg_a_state(space: &Arc<ModeSpace>) -> Field {
    Field::from_fn(space.clone(), |x| C64::new(1.0 + 0.1 * x[0].cos(), 0.0)).normalized()
}

fn cfg_a_observables(space: &Arc<ModeSpace>) -> (Observable, Observable) {
    let a = Observable::PositionDiagonal(
        (0..space.len())
            .map(|i| space.coordinate(i, 0).cos())
            .collect(),
    );
    let b = Observable::MomentumMultiplier(space.kinetic_multiplier().unwrap().to_vec());
    (a, b)
}

fn cfg_c_space() -> Arc<ModeSpace> {
    ModeSpace::ring_lattice(3, 1.0, KernelSpec::Onsite { strength: 1.0 }).unwrap()
}

fn cfg_c_state(space: &Arc<ModeSpace>) -> Field {
    Field::new(
        space.clone(),
        vec![
            C64::new(0.5_f64.sqrt(), 0.0),
            C64::new(0.3_f64.sqrt(), 0.0),
            C64::new(0.2_f64.sqrt(), 0.0),
        ],
    )
    .unwrap()
}

fn cfg_c_observables() -> (Observable, Observable) {
    (
        Observable::PositionDiagonal(vec![1.0, 0.0, 0.0]),
        Observable::PositionDiagonal(vec![0.0, 1.0, 0.0]),
    )
}

fn random_field(space: &Arc<ModeSpace>, rng: &mut ChaCha8Rng) -> Field {
    let amps = (0..space.len())
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    Field::new(space.clone(), amps).unwrap()
}

/// Order-preserving parallel map used to keep the heavier criteria inside
/// their runtime budgets.
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(4)
        .min(8);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads.max(1)).max(1);
    let f = &f;
    std::thread::scope(|scope| {
        for (slots, chunk_items) in out.chunks_mut(chunk).zip(items.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, item) in slots.iter_mut().zip(chunk_items) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    out.into_iter().map(|r| r.unwrap()).collect()
}

#[test]
fn ac01_conservation_suite() {
    let start = Instant::now();
    let sp = cfg_a_space();
    let traj = evolve(&cfg_a_state(&sp), 5.0, 1e-3).unwrap();
    let mass_drift = traj
        .mass_series()
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0, f64::max);
    let e0 = traj.energy_series()[0];
    let energy_drift = traj
        .energy_series()
        .iter()
        .map(|e| (e - e0).abs() / e0.abs())
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = mass_drift < 1e-10 && energy_drift < 1e-6 && secs < 10.0;
    println!(
        "[AC-1] conservation: {} (mass drift {mass_drift:.3e} < 1e-10, \
         energy drift {energy_drift:.3e} < 1e-6, {secs:.1} s < 10 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac02_free_and_homogeneous_exactness() {
    let spz = ModeSpace::torus(1, 2.0 * PI, 64, KernelSpec::Zero).unwrap();
    let pw = Field::from_fn(spz.clone(), |x| C64::from_polar(1.0, x[0])).normalized();
    let traj = evolve(&pw, 1.0, 1e-3).unwrap();
    let expect = pw.clone().scaled(C64::from_polar(1.0, -1.0));
    let err_pw = traj.state_at(1.0).unwrap().distance(&expect).unwrap();

    let sp = cfg_a_space();
    let hom = Field::from_fn(sp.clone(), |_| C64::new(1.0, 0.0)).normalized();
    let traj = evolve(&hom, 1.0, 1e-3).unwrap();
    let mu = otoc_core::space::convolve(&hom.density()).amplitudes()[0].re;
    let expect = hom.clone().scaled(C64::from_polar(1.0, -mu));
    let err_hom = traj.state_at(1.0).unwrap().distance(&expect).unwrap();

    let pass = err_pw < 1e-12 && err_hom < 1e-10;
    println!(
        "[AC-2] closed forms: {} (plane wave {err_pw:.3e} < 1e-12, homogeneous {err_hom:.3e} < 1e-10)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac03_symplectic_invariants() {
    let start = Instant::now();
    let sp = cfg_a_space();
    let phi0 = cfg_a_state(&sp);
    let traj = evolve(&phi0, 5.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8128);
    let pairs: Vec<(Field, Field)> = (0..20)
        .map(|_| (random_field(&sp, &mut rng), random_field(&sp, &mut rng)))
        .collect();
    let times = [0.5, 1.0, 3.0];
    let jobs: Vec<(usize, f64)> = (0..pairs.len())
        .flat_map(|i| times.iter().map(move |&t| (i, t)))
        .collect();
    let drifts = parallel_map(&jobs, |&(i, t)| {
        let (f, g) = &pairs[i];
        let before = inner(f, g).unwrap().im;
        let lf = prop.propagate_l(f, t).unwrap();
        let lg = prop.propagate_l(g, t).unwrap();
        (inner(&lf, &lg).unwrap().im - before).abs()
    });
    let max_drift = drifts.iter().copied().fold(0.0, f64::max);

    let cov_times = [0.5, 1.0, 3.0, 5.0];
    let covs = parallel_map(&cov_times, |&t| {
        let phi_t = traj.state_at(t).unwrap();
        prop.propagate_l(phi_t, t).unwrap().distance(&phi0).unwrap()
    });
    let max_cov = covs.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = max_drift < 1e-8 && max_cov < 1e-6 && secs < 30.0;
    println!(
        "[AC-3] symplectic invariants: {} (form drift {max_drift:.3e} < 1e-8 over 20 pairs x 3 times, \
         condensate covariance {max_cov:.3e} < 1e-6 up to t = 5, {secs:.1} s < 30 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac04_dispersion_oracle() {
    let start = Instant::now();
    let sp = ModeSpace::torus(
        1,
        2.0 * PI,
        64,
        KernelSpec::Gaussian {
            strength: 0.8,
            width: 0.6,
        },
    )
    .unwrap();
    let phi0 = Field::from_fn(sp.clone(), |_| C64::new(1.0, 0.0)).normalized();
    let dt = 1e-3;
    let traj = evolve(&phi0, 3.0, dt).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let l = sp.box_length();
    let rho = 1.0 / l;
    let width: f64 = 0.6;
    let vhat =
        |k: f64| 0.8 * (2.0 * PI * width * width).sqrt() * (-0.5 * width * width * k * k).exp();
    let mu = rho * vhat(0.0);

    // the real-linear action on one mode pair is pinned down by four basis
    // inputs
    let basis = [
        (C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
        (C64::new(0.0, 1.0), C64::new(0.0, 0.0)),
        (C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        (C64::new(0.0, 0.0), C64::new(0.0, 1.0)),
    ];
    let jobs: Vec<(i64, f64, usize)> = (1..=10)
        .flat_map(|k| {
            [1.5, 3.0]
                .into_iter()
                .flat_map(move |t| (0..4).map(move |b| (k, t, b)))
        })
        .collect();
    let devs = parallel_map(&jobs, |&(k, t, b)| {
        let (a0, b0) = basis[b];
        let kk = k as f64;
        let fpos = Field::from_fn(sp.clone(), |x| C64::from_polar(1.0, kk * x[0]));
        let fneg = Field::from_fn(sp.clone(), |x| C64::from_polar(1.0, -kk * x[0]));
        let mut f = fpos.clone().scaled(a0);
        f.axpy(b0, &fneg);
        let out = prop.propagate_l(&f, t).unwrap();
        let n_steps = (t / dt).round() as usize;
        let (ae, be) =
            homogeneous_pair_strang(kk * kk, rho * vhat(kk), mu, dt, n_steps, true, a0, b0);
        let mut expect = fpos.scaled(ae);
        expect.axpy(be, &fneg);
        out.distance(&expect).unwrap()
    });
    let max_dev = devs.iter().copied().fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    let pass = max_dev < 1e-8 && secs < 30.0;
    println!(
        "[AC-4] dispersion oracle: {} (max deviation {max_dev:.3e} < 1e-8 over |k| <= 10, t <= 3, \
         {secs:.1} s < 30 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac05_otoc_convergence() {
    let start = Instant::now();
    let sp = cfg_c_space();
    let phi0 = cfg_c_state(&sp);
    let (a, b) = cfg_c_observables();
    let traj = evolve(&phi0, 1.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let times = [0.25, 0.5, 1.0];
    let ns = [8usize, 16, 32, 64];

    let mut exact = vec![vec![0.0; times.len()]; ns.len()];
    for (ni, &n) in ns.iter().enumerate() {
        let ctx = OracleContext::new(&sp, n, &phi0, DEFAULT_SECTOR_CAP).unwrap();
        for (ti, &t) in times.iter().enumerate() {
            exact[ni][ti] = ctx.finite_n_otoc(&traj, &a, &b, t).unwrap();
        }
    }

    let mut pass = true;
    let mut constants = Vec::new();
    for (ti, &t) in times.iter().enumerate() {
        let pred = otoc(&prop, &a, &b, t).unwrap();
        let scalar_sq = otoc_scalar(&prop, &a, &b, t).unwrap().powi(2);
        let errs: Vec<f64> = ns
            .iter()
            .enumerate()
            .map(|(ni, _)| (exact[ni][ti] - pred).abs())
            .collect();
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        if t <= 0.5 {
            let rel = (exact[ns.len() - 1][ti] - pred).abs() / pred.abs();
            pass &= rel < 0.10;
            println!(
                "[AC-5]   t = {t}: errors {:?} decreasing = {decreasing}, N=64 within {:.2}% of prediction",
                errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
                rel * 100.0
            );
        } else {
            println!(
                "[AC-5]   t = {t}: errors {:?} decreasing = {decreasing}",
                errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()
            );
        }
        // limit constant: Richardson extrapolation in 1/N of the exact
        // values against the squared scalar
        let extrapolated = 2.0 * exact[3][ti] - exact[2][ti];
        constants.push(extrapolated / scalar_sq);
    }
    let cmin = constants.iter().copied().fold(f64::INFINITY, f64::min);
    let cmax = constants.iter().copied().fold(0.0, f64::max);
    let stable = cmax / cmin < 1.05;
    pass &= stable;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    println!(
        "[AC-5] OTOC convergence: {} (limit constants vs (Im<g0,f_t>)^2: \
         {:.4}, {:.4}, {:.4} -- stable within 5%: {stable}; {secs:.1} s < 120 s)",
        if pass { "PASS" } else { "FAIL" },
        constants[0],
        constants[1],
        constants[2]
    );
    assert!(pass);
}

#[test]
fn ac06_wick_rule() {
    let start = Instant::now();
    let sp = cfg_c_space();
    let phi0 = cfg_c_state(&sp);
    let (a, _) = cfg_c_observables();
    let traj = evolve(&phi0, 1.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let times = [0.0, 0.3, 0.6, 0.9];
    let sigma = sigma_matrix(&prop, &a, &times).unwrap();
    let predicted = wick_moment(&sigma, 4).unwrap();

    let ctx8 = OracleContext::new(&sp, 8, &phi0, DEFAULT_SECTOR_CAP).unwrap();
    let ctx64 = OracleContext::new(&sp, 64, &phi0, DEFAULT_SECTOR_CAP).unwrap();
    let err8 = (ctx8.finite_n_moment(&traj, &a, &times).unwrap() - predicted).norm();
    let err64 = (ctx64.finite_n_moment(&traj, &a, &times).unwrap() - predicted).norm();

    // odd moments vanish in the limit; their N^{-1/2} scale is compared to
    // the even-moment discrepancy at the small-N end where both are
    // resolved on the same footing
    let odd_times = [0.0, 0.3, 0.6];
    let m3_8 = ctx8.finite_n_moment(&traj, &a, &odd_times).unwrap().norm();
    let m3_64 = ctx64.finite_n_moment(&traj, &a, &odd_times).unwrap().norm();

    let factor = err8 / err64;
    let secs = start.elapsed().as_secs_f64();
    let pass = factor >= 2.0 && m3_8 < err8 && m3_64 < m3_8 && secs < 120.0;
    println!(
        "[AC-6] Wick rule: {} (m=4 error {err8:.3e} (N=8) -> {err64:.3e} (N=64), factor {factor:.1} >= 2; \
         odd m=3 moment {m3_8:.3e} < {err8:.3e} at N=8 and decreasing to {m3_64:.3e} at N=64; {secs:.1} s < 120 s)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac07_characteristic_function() {
    let start = Instant::now();
    let sp = cfg_c_space();
    let phi0 = cfg_c_state(&sp);
    let (a, _) = cfg_c_observables();
    let traj = evolve(&phi0, 1.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let times = [0.3, 0.6];
    let sigma = sigma_matrix(&prop, &a, &times).unwrap();

    let grid: Vec<(f64, f64)> = (0..5)
        .flat_map(|i| (0..5).map(move |j| (-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64)))
        .collect();
    let mut max_errs = Vec::new();
    for &n in &[8usize, 16, 32, 64] {
        let ctx = OracleContext::new(&sp, n, &phi0, DEFAULT_SECTOR_CAP).unwrap();
        let mut worst = 0.0_f64;
        for &(l1, l2) in &grid {
            let exact = ctx.finite_n_char(&traj, &a, &times, &[l1, l2]).unwrap();
            let limit = char_function(&sigma, &[l1, l2]).unwrap();
            worst = worst.max((exact - limit).norm());
        }
        max_errs.push(worst);
    }
    let decreasing = max_errs.windows(2).all(|w| w[1] < w[0]);
    let secs = start.elapsed().as_secs_f64();
    let pass = decreasing && secs < 120.0;
    println!(
        "[AC-7] characteristic function: {} (max |finite - limit| over the 5x5 grid: {:?}, \
         decreasing = {decreasing}; {secs:.1} s < 120 s)",
        if pass { "PASS" } else { "FAIL" },
        max_errs
            .iter()
            .map(|e| format!("{e:.2e}"))
            .collect::<Vec<_>>()
    );
    assert!(pass);
}

#[test]
fn ac08_initial_rate() {
    let sp = cfg_a_space();
    let phi0 = cfg_a_state(&sp);
    let (a, b) = cfg_a_observables(&sp);
    let traj = evolve(&phi0, 0.02, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let rate = initial_rate(&phi0, &a, &b).unwrap();
    let s = |t: f64| otoc_scalar(&prop, &a, &b, t).unwrap();
    let h = 1e-3;
    let d1 = (s(h) - s(0.0)) / h;
    let d2 = (s(2.0 * h) - s(0.0)) / (2.0 * h);
    let slope = 2.0 * d1 - d2;
    let rel = (slope - rate).abs() / rate.abs();
    let pass = rel < 1e-4;
    println!(
        "[AC-8] initial rate: {} (Richardson slope {slope:.8e} vs commutator rate {rate:.8e}, \
         relative error {rel:.2e} < 1e-4)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac09_soft_butterfly_bound() {
    let sp = cfg_a_space();
    let phi0 = cfg_a_state(&sp);
    let (a, b) = cfg_a_observables(&sp);
    let traj = evolve(&phi0, 5.0, 1e-3).unwrap();
    let prop = LPropagator::new(&traj).unwrap();
    let ts: Vec<f64> = (5..=50).map(|i| i as f64 * 0.1).collect();
    let vals = parallel_map(&ts, |&t| otoc(&prop, &a, &b, t).unwrap());
    let series: Vec<(f64, f64)> = ts.iter().copied().zip(vals.iter().copied()).collect();
    let all_positive = vals.iter().all(|&v| v > 0.0);
    let (rate, r2) = butterfly_fit(&series, (0.5, 5.0)).unwrap();
    // explicit linear upper envelope: shift the fitted line up by the
    // largest positive residual; the gap stays finite by construction and
    // is reported
    let envelope_gap = series
        .iter()
        .map(|&(t, y)| y.ln() - rate * t)
        .fold(f64::NEG_INFINITY, f64::max)
        - series.iter().map(|&(t, y)| y.ln() - rate * t).sum::<f64>() / series.len() as f64;
    // super-exponential growth check on the running maximum, which strips
    // the quasi-periodic oscillation of this non-chaotic configuration:
    // the exponential rate of the peak envelope must not accelerate
    let mut running = f64::NEG_INFINITY;
    let peaks: Vec<(f64, f64)> = series
        .iter()
        .map(|&(t, y)| {
            running = running.max(y);
            (t, running)
        })
        .collect();
    let (rate1, _) = butterfly_fit(&peaks, (0.5, 2.75)).unwrap();
    let (rate2, _) = butterfly_fit(&peaks, (2.75, 5.0)).unwrap();
    let no_flag = rate2 <= rate1 + 1.0;
    let pass = all_positive && rate.is_finite() && envelope_gap.is_finite() && no_flag;
    println!(
        "[AC-9] soft butterfly bound: {} (log-otoc fit rate {rate:.4}, r2 {r2:.4}, envelope gap {envelope_gap:.2}; \
         peak-envelope slopes {rate1:.4} -> {rate2:.4}, no super-exponential flag = {no_flag})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}

#[test]
fn ac10_pairing_combinatorics() {
    let counts: Vec<usize> = [2usize, 4, 6, 8]
        .iter()
        .map(|&m| enumerate_pairings(m).unwrap().len())
        .collect();
    let expected = [1usize, 3, 15, 105];
    let count_ok = counts == expected;
    let p4 = enumerate_pairings(4).unwrap();
    let sets: Vec<Vec<(usize, usize)>> = p4.iter().map(|p| p.pairs.clone()).collect();
    let exact_ok = sets.len() == 3
        && sets.contains(&vec![(0, 1), (2, 3)])
        && sets.contains(&vec![(0, 2), (1, 3)])
        && sets.contains(&vec![(0, 3), (1, 2)]);
    let pass = count_ok && exact_ok;
    println!(
        "[AC-10] pairing combinatorics: {} (counts {:?} = (m-1)!! for m in 2,4,6,8; \
         m=4 set exact = {exact_ok})",
        if pass { "PASS" } else { "FAIL" },
        counts
    );
    assert!(pass);
}

#[test]
fn ac11_cli_determinism() {
    let bin = env!("CARGO_BIN_EXE_otoc");
    let tmp = std::env::temp_dir().join(format!("otoc-accept-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).unwrap();

    let torus_base = "
[space]
backend = torus
dimension = 1
box_length = 6.283185307179586
grid_points = 64

[interaction]
kind = gaussian
strength = 1.0
width = 0.5

[initial_state]
profile = cosine_perturbed
amplitude = 0.1

[evolution]
t_max = 1.0
dt = 0.001

[observables]
a = position_cos
b = momentum_ksq
";
    let lattice_base = "
[space]
backend = lattice
sites = 3
kinetic = ring
hopping = 1.0

[interaction]
kind = onsite
strength = 1.0

[initial_state]
profile = explicit
amplitudes = 0.7071067811865476,0 0.5477225575051661,0 0.4472135954999579,0

[evolution]
t_max = 1.0
dt = 0.001

[observables]
a = site_indicator:0
b = site_indicator:1
";
    let homogeneous_base = torus_base
        .replace(
            "profile = cosine_perturbed\namplitude = 0.1",
            "profile = homogeneous",
        )
        .replace("strength = 1.0\nwidth = 0.5", "strength = 0.8\nwidth = 0.6");

    let cases: Vec<(&str, String)> = vec![
        (
            "hartree-run",
            format!("{torus_base}\n[experiment]\npipeline = hartree-run\n[output]\ndirectory = PLACEHOLDER\nsnapshots = true\n"),
        ),
        (
            "otoc-series",
            format!("{torus_base}\n[experiment]\npipeline = otoc-series\nt_grid = 0.0:0.5:0.1\nfit_window = 0.1,0.5\n[output]\ndirectory = PLACEHOLDER\n"),
        ),
        (
            "bogo-spectrum",
            format!("{homogeneous_base}\n[experiment]\npipeline = bogo-spectrum\nk_max = 5\nt_probe = 1.0\n[output]\ndirectory = PLACEHOLDER\n"),
        ),
        (
            "wick-check",
            format!("{lattice_base}\n[experiment]\npipeline = wick-check\nm = 4\ntimes = 0.0,0.3,0.6,0.9\nn_list = 8,16\n[output]\ndirectory = PLACEHOLDER\n"),
        ),
        (
            "oracle-converge",
            format!("{lattice_base}\n[experiment]\npipeline = oracle-converge\nt_list = 0.25,0.5\nn_list = 8,16\n[output]\ndirectory = PLACEHOLDER\n"),
        ),
    ];

    let mut pass = true;
    for (sub, cfg_text) in &cases {
        let cfg_path = tmp.join(format!("{sub}.ini"));
        std::fs::write(&cfg_path, cfg_text).unwrap();
        let mut digests = Vec::new();
        for (run, threads) in [("one", "1"), ("two", "3")] {
            let out_dir = tmp.join(format!("{sub}-{run}"));
            let status = std::process::Command::new(bin)
                .args([
                    sub,
                    "--config",
                    cfg_path.to_str().unwrap(),
                    "--out",
                    out_dir.to_str().unwrap(),
                    "--threads",
                    threads,
                    "--quiet",
                ])
                .status()
                .unwrap();
            assert!(status.success(), "{sub} run {run} failed");
            // digest: sorted file names and contents
            let mut names: Vec<_> = std::fs::read_dir(&out_dir)
                .unwrap()
                .map(|e| e.unwrap().file_name().into_string().unwrap())
                .collect();
            names.sort();
            let blob: Vec<(String, Vec<u8>)> = names
                .iter()
                .map(|n| (n.clone(), std::fs::read(out_dir.join(n)).unwrap()))
                .collect();
            digests.push(blob);
        }
        let identical = digests[0] == digests[1];
        if !identical {
            pass = false;
        }
        println!("[AC-11]   {sub}: byte-identical across reruns (threads 1 vs 3) = {identical}");
    }
    std::fs::remove_dir_all(&tmp).ok();
    println!(
        "[AC-11] determinism: {}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass);
}
