//! Pipeline implementations binding the engine modules to the file
//! outputs. Each pipeline is deterministic: fixed iteration orders,
//! indexed parallelism, serialized writes.

use num_complex::Complex64 as C64;
use otoc_core::bogoliubov::{homogeneous_pair_strang, LPropagator};
use otoc_core::hartree::{evolve, HartreeTrajectory};
use otoc_core::oracle::{OracleContext, DEFAULT_SECTOR_CAP};
use otoc_core::scrambling::{
    butterfly_fit, otoc, otoc_scalar, otoc_symplectic_form, sigma_matrix, wick_moment,
};
use otoc_core::space::{Backend, Field, InteractionKernel};
use otoc_core::CoreError;

use crate::config::{ExperimentConfig, Pipeline};
use crate::output::{fmt, OutputWriter};

pub enum RunError {
    Tolerance(String),
    ResourceCap(String),
    Internal(String),
    Io(std::io::Error),
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::SectorCap { .. } | CoreError::PairingCap(_) => {
                RunError::ResourceCap(e.to_string())
            }
            CoreError::NormDrift { .. } => RunError::Tolerance(e.to_string()),
            other => RunError::Internal(other.to_string()),
        }
    }
}

/// Map the run over `items` across up to `threads` workers, preserving
/// input order in the output.
fn indexed_parallel<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>, RunError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CoreError> + Sync,
{
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().map(|x| f(x).map_err(RunError::from)).collect();
    }
    let mut results: Vec<Option<Result<R, CoreError>>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        for (slot_chunk, item_chunk) in results.chunks_mut(chunk).zip(items.chunks(chunk)) {
            scope.spawn(move || {
                for (slot, item) in slot_chunk.iter_mut().zip(item_chunk) {
                    *slot = Some(f(item));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("worker filled every slot").map_err(RunError::from))
        .collect()
}

pub struct RunContext {
    pub threads: usize,
    pub quiet: bool,
}

fn note(ctx: &RunContext, msg: &str) {
    if !ctx.quiet {
        println!("{msg}");
    }
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(), RunError> {
    let writer = OutputWriter::new(&cfg.out_dir, cfg.pipeline.name(), &cfg.resolved_text)?;
    match &cfg.pipeline {
        Pipeline::HartreeRun => run_hartree(cfg, ctx, &writer),
        Pipeline::OtocSeries { t_grid, fit_window } => {
            run_otoc_series(cfg, ctx, &writer, t_grid, *fit_window)
        }
        Pipeline::WickCheck { m, times, n_list } => {
            run_wick_check(cfg, ctx, &writer, *m, times, n_list)
        }
        Pipeline::OracleConverge { t_list, n_list } => {
            run_oracle_convergence(cfg, ctx, &writer, t_list, n_list)
        }
        Pipeline::BogoSpectrum { k_max, t_probe } => {
            run_bogo_spectrum(cfg, ctx, &writer, *k_max, *t_probe)
        }
    }
}

/// Closed-form final state for the two analytically solvable setups:
/// free evolution (any data) and homogeneous data (any interaction).
fn closed_form_error(cfg: &ExperimentConfig, traj: &HartreeTrajectory) -> Option<f64> {
    let space = &cfg.space;
    let phi0 = &cfg.initial_state;
    let t = traj.t1();
    let last = traj.state_at(t).ok()?;
    if matches!(space.interaction(), InteractionKernel::Zero)
        && space.backend() == Backend::SpectralTorus
    {
        let eps = space.kinetic_multiplier()?;
        let mut data = phi0.amplitudes().to_vec();
        space.fft_forward(&mut data);
        for (z, e) in data.iter_mut().zip(eps) {
            *z *= C64::from_polar(1.0, -e * t);
        }
        space.fft_inverse(&mut data);
        let expect = Field::new(space.clone(), data).ok()?;
        return last.distance(&expect).ok();
    }
    let amps = phi0.amplitudes();
    let uniform = amps.iter().all(|z| (z - amps[0]).norm() < 1e-14);
    if uniform && space.backend() == Backend::SpectralTorus {
        // homogeneous data only picks up the mean-field phase
        let w = otoc_core::space::convolve(&phi0.density());
        let mu = w.amplitudes()[0].re;
        let expect = phi0.clone().scaled(C64::from_polar(1.0, -mu * t));
        return last.distance(&expect).ok();
    }
    None
}

fn run_hartree(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    writer: &OutputWriter,
) -> Result<(), RunError> {
    note(
        ctx,
        &format!("integrating to t = {} at dt = {}", cfg.t_max, cfg.dt),
    );
    let traj = evolve(&cfg.initial_state, cfg.t_max, cfg.dt)?;
    let rows: Vec<Vec<String>> = traj
        .mass_series()
        .iter()
        .zip(traj.energy_series())
        .enumerate()
        .map(|(i, (m, e))| vec![fmt(i as f64 * traj.dt()), fmt(*m), fmt(*e)])
        .collect();
    writer.csv("hartree.csv", &["t", "mass", "energy"], &rows)?;
    if cfg.dump_snapshots {
        writer.snapshots("snapshots.bin", &traj)?;
    }

    let mass_drift = traj
        .mass_series()
        .iter()
        .map(|m| (m - 1.0).abs())
        .fold(0.0, f64::max);
    let e0 = traj.energy_series()[0];
    let energy_drift = traj
        .energy_series()
        .iter()
        .map(|e| (e - e0).abs() / e0.abs().max(1e-300))
        .fold(0.0, f64::max);
    let mut fields = vec![
        ("mass_drift".to_string(), fmt(mass_drift)),
        ("energy_drift_rel".to_string(), fmt(energy_drift)),
        ("steps".to_string(), traj.full_steps().to_string()),
    ];
    if let Some(err) = closed_form_error(cfg, &traj) {
        fields.push(("closed_form_error".to_string(), fmt(err)));
    }
    writer.json("summary.json", &fields)?;
    note(
        ctx,
        &format!("mass drift {mass_drift:.3e}, relative energy drift {energy_drift:.3e}"),
    );
    if mass_drift > 1e-10 {
        return Err(RunError::Tolerance(format!(
            "mass drift {mass_drift:.3e} > 1e-10"
        )));
    }
    if energy_drift > 1e-6 {
        return Err(RunError::Tolerance(format!(
            "relative energy drift {energy_drift:.3e} > 1e-6"
        )));
    }
    Ok(())
}

fn run_otoc_series(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    writer: &OutputWriter,
    t_grid: &[f64],
    fit_window: Option<(f64, f64)>,
) -> Result<(), RunError> {
    let t_end = t_grid.iter().copied().fold(0.0, f64::max).max(cfg.t_max);
    let traj = evolve(&cfg.initial_state, t_end, cfg.dt)?;
    let prop = LPropagator::new(&traj)?;
    note(ctx, &format!("evaluating {} time points", t_grid.len()));
    let values = indexed_parallel(t_grid, ctx.threads, |&t| {
        let s = otoc_scalar(&prop, &cfg.observable_a, &cfg.observable_b, t)?;
        let o = otoc(&prop, &cfg.observable_a, &cfg.observable_b, t)?;
        let f = otoc_symplectic_form(&prop, &cfg.observable_a, &cfg.observable_b, t)?;
        Ok((s, o, f))
    })?;
    let rows: Vec<Vec<String>> = t_grid
        .iter()
        .zip(&values)
        .map(|(t, (s, o, f))| vec![fmt(*t), fmt(*s), fmt(*o), fmt(*f)])
        .collect();
    writer.csv(
        "otoc_series.csv",
        &["t", "scalar", "otoc", "symplectic_form"],
        &rows,
    )?;
    if let Some((ta, tb)) = fit_window {
        let series: Vec<(f64, f64)> = t_grid
            .iter()
            .zip(&values)
            .map(|(t, (_, o, _))| (*t, *o))
            .collect();
        let (rate, r2) = butterfly_fit(&series, (ta, tb))?;
        writer.json(
            "fit.json",
            &[
                ("rate".to_string(), fmt(rate)),
                ("r2".to_string(), fmt(r2)),
                ("window".to_string(), format!("[{}, {}]", fmt(ta), fmt(tb))),
            ],
        )?;
        note(ctx, &format!("log-otoc fit: rate {rate:.6}, r2 {r2:.6}"));
    }
    Ok(())
}

fn run_wick_check(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    writer: &OutputWriter,
    m: usize,
    times: &[f64],
    n_list: &[usize],
) -> Result<(), RunError> {
    let t_end = times.iter().copied().fold(0.0, f64::max).max(cfg.t_max);
    let traj = evolve(&cfg.initial_state, t_end, cfg.dt)?;
    let prop = LPropagator::new(&traj)?;
    let sigma = sigma_matrix(&prop, &cfg.observable_a, times)?;
    let sigma_rows: Vec<Vec<String>> = (0..m)
        .flat_map(|i| {
            let sigma = &sigma;
            (0..m).map(move |j| {
                vec![
                    i.to_string(),
                    j.to_string(),
                    fmt(sigma.entry(i, j).re),
                    fmt(sigma.entry(i, j).im),
                ]
            })
        })
        .collect();
    writer.csv("sigma_matrix.csv", &["i", "j", "re", "im"], &sigma_rows)?;
    let predicted = wick_moment(&sigma, m)?;
    writer.csv(
        "wick_moments.csv",
        &["m", "re", "im"],
        &[vec![m.to_string(), fmt(predicted.re), fmt(predicted.im)]],
    )?;
    note(ctx, &format!("wick moment m={m}: {predicted}"));
    let mut rows = Vec::new();
    for &n in n_list {
        let oracle = OracleContext::new(&cfg.space, n, &cfg.initial_state, DEFAULT_SECTOR_CAP)?;
        let exact = oracle.finite_n_moment(&traj, &cfg.observable_a, times)?;
        let err = (exact - predicted).norm();
        note(ctx, &format!("N = {n}: |oracle - wick| = {err:.3e}"));
        rows.push(vec![
            n.to_string(),
            m.to_string(),
            fmt(exact.re),
            fmt(exact.im),
            fmt(predicted.re),
            fmt(predicted.im),
            fmt(err),
        ]);
    }
    writer
        .csv(
            "wick_check.csv",
            &[
                "N",
                "m",
                "re_oracle",
                "im_oracle",
                "re_wick",
                "im_wick",
                "abs_error",
            ],
            &rows,
        )
        .map_err(RunError::from)
}

fn run_oracle_convergence(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    writer: &OutputWriter,
    t_list: &[f64],
    n_list: &[usize],
) -> Result<(), RunError> {
    let t_end = t_list.iter().copied().fold(0.0, f64::max).max(cfg.t_max);
    let traj = evolve(&cfg.initial_state, t_end, cfg.dt)?;
    let prop = LPropagator::new(&traj)?;
    let mut rows = Vec::new();
    let mut orders = Vec::new();
    let mut errors: Vec<Vec<f64>> = vec![Vec::new(); t_list.len()];
    for &n in n_list {
        let oracle = OracleContext::new(&cfg.space, n, &cfg.initial_state, DEFAULT_SECTOR_CAP)?;
        note(
            ctx,
            &format!("N = {n} (sector dim {})", oracle.sector_dim()),
        );
        for (ti, &t) in t_list.iter().enumerate() {
            let exact = oracle.finite_n_otoc(&traj, &cfg.observable_a, &cfg.observable_b, t)?;
            let pred = otoc(&prop, &cfg.observable_a, &cfg.observable_b, t)?;
            let err = (exact - pred).abs();
            errors[ti].push(err);
            rows.push(vec![n.to_string(), fmt(t), fmt(exact), fmt(pred), fmt(err)]);
        }
    }
    writer.csv(
        "convergence.csv",
        &[
            "N",
            "t",
            "finite_n_value",
            "bogoliubov_prediction",
            "abs_error",
        ],
        &rows,
    )?;
    // log-log fit of error against N per time, diagnostic only
    for (ti, errs) in errors.iter().enumerate() {
        if errs.iter().all(|&e| e > 0.0) && errs.len() >= 2 {
            let pts: Vec<(f64, f64)> = n_list
                .iter()
                .zip(errs)
                .map(|(&n, &e)| ((n as f64).ln(), e))
                .collect();
            let (slope, r2) = butterfly_fit(&pts, (f64::NEG_INFINITY, f64::INFINITY))?;
            orders.push((
                format!("order_t{ti}"),
                format!(
                    "{{\"t\": {}, \"order\": {}, \"r2\": {}}}",
                    fmt(t_list[ti]),
                    fmt(-slope),
                    fmt(r2)
                ),
            ));
        }
    }
    writer.json("order.json", &orders)?;
    Ok(())
}

fn run_bogo_spectrum(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    writer: &OutputWriter,
    k_max: i64,
    t_probe: f64,
) -> Result<(), RunError> {
    let space = &cfg.space;
    if space.backend() != Backend::SpectralTorus {
        return Err(RunError::Internal(
            "bogo-spectrum requires the torus backend".into(),
        ));
    }
    let amps = cfg.initial_state.amplitudes();
    if !amps.iter().all(|z| (z - amps[0]).norm() < 1e-12) {
        return Err(RunError::Internal(
            "bogo-spectrum requires a homogeneous initial state".into(),
        ));
    }
    let vhat = match space.interaction() {
        InteractionKernel::FourierMultiplier(v) => v.clone(),
        InteractionKernel::Zero => vec![0.0; space.len()],
        InteractionKernel::DenseMatrix(_) => {
            return Err(RunError::Internal(
                "bogo-spectrum needs a multiplier kernel".into(),
            ))
        }
    };
    let traj = evolve(&cfg.initial_state, t_probe, cfg.dt)?;
    let prop = LPropagator::new(&traj)?;
    let rho = 1.0 / space.box_length().powi(space.dim() as i32);
    let mu = rho * vhat[0];
    let n_steps = (t_probe / cfg.dt).round() as usize;
    let eps_table = space.kinetic_multiplier().expect("torus").to_vec();

    let ks: Vec<i64> = (1..=k_max).collect();
    let results = indexed_parallel(&ks, ctx.threads, |&k| {
        // mode +k sits at flattened index k on the first axis
        let idx_pos = k as usize;
        let eps = eps_table[idx_pos];
        let rho_vk = rho * vhat[idx_pos];
        let a0 = C64::new(0.6, 0.2);
        let b0 = C64::new(-0.3, 0.5);
        let kk = k as f64 * 2.0 * std::f64::consts::PI / space.box_length();
        let gpos = Field::from_fn(space.clone(), |x| C64::from_polar(1.0, kk * x[0]));
        let gneg = Field::from_fn(space.clone(), |x| C64::from_polar(1.0, -kk * x[0]));
        let mut g = gpos.clone().scaled(a0);
        g.axpy(b0, &gneg);
        let out = prop.propagate_l(&g, t_probe)?;
        let (ae, be) = homogeneous_pair_strang(eps, rho_vk, mu, traj.dt(), n_steps, true, a0, b0);
        let mut expect = gpos.scaled(ae);
        expect.axpy(be, &gneg);
        let dev = out.distance(&expect)?;
        let omega = (eps * (eps + 2.0 * rho_vk)).sqrt();
        Ok((eps, rho_vk, omega, dev))
    })?;

    let mut max_dev: f64 = 0.0;
    let rows: Vec<Vec<String>> = ks
        .iter()
        .zip(&results)
        .map(|(k, (eps, rho_vk, omega, dev))| {
            max_dev = max_dev.max(*dev);
            vec![
                k.to_string(),
                fmt(*eps),
                fmt(*rho_vk),
                fmt(*omega),
                fmt(*dev),
            ]
        })
        .collect();
    writer.csv(
        "bogo_spectrum.csv",
        &["k", "eps", "rho_vhat", "omega", "max_dev"],
        &rows,
    )?;
    note(
        ctx,
        &format!("max deviation from the per-mode reference: {max_dev:.3e}"),
    );
    if max_dev > 1e-8 {
        return Err(RunError::Tolerance(format!(
            "mode propagation deviates {max_dev:.3e} > 1e-8 from the dispersion reference"
        )));
    }
    Ok(())
}
