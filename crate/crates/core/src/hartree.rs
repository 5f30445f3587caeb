//! Nonlinear Hartree evolution i d/dt phi = (T + v*|phi|^2) phi and the
//! trajectory record consumed by the backward fluctuation propagation.
//!
//! The integrator is second-order Strang splitting. The potential substep
//! multiplies by exp(-i tau W) with W = v*|phi|^2, which is exact because
//! |phi| is invariant under pure phase multiplication, so W is constant
//! along the substep. The kinetic substep is an exact Fourier phase on the
//! torus and a cached dense matrix exponential on the lattice. Snapshots
//! are stored at half-step resolution: the integrator runs internally at
//! step dt/2 and records every state, so a later backward integration at
//! step dt finds genuine solution values at all of its Runge-Kutta stage
//! times without interpolation.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::space::{
    apply_kinetic, check_same_space, convolve, inner, require_normalized, Backend, Field, ModeSpace,
};
use crate::{CoreError, Result};

/// Action of the instantaneous Hartree Hamiltonian h_phi = T + (v*|phi|^2)
/// on a test field.
pub fn hartree_rhs(phi: &Field, f: &Field) -> Result<Field> {
    check_same_space(phi, f)?;
    require_normalized(phi, 1e-8)?;
    let w = convolve(&phi.density());
    let mut out = apply_kinetic(f);
    for ((o, wf), ff) in out
        .amplitudes_mut()
        .iter_mut()
        .zip(w.amplitudes())
        .zip(f.amplitudes())
    {
        *o += wf.re * ff;
    }
    Ok(out)
}

/// Squared L^2 norm.
pub fn mass(phi: &Field) -> f64 {
    phi.norm_sq()
}

/// Hartree energy <phi, T phi> + 1/2 <|phi|^2, v*|phi|^2>.
pub fn energy(phi: &Field) -> f64 {
    let kin = inner(phi, &apply_kinetic(phi)).expect("same space").re;
    let rho = phi.density();
    let pot = inner(&rho, &convolve(&rho)).expect("same space").re;
    kin + 0.5 * pot
}

/// Time-stamped condensate history at half-step resolution.
pub struct HartreeTrajectory {
    space: Arc<ModeSpace>,
    t0: f64,
    t1: f64,
    dt: f64,
    /// States at times t0 + i*dt/2 for i = 0..=2*n_steps.
    snapshots: Vec<Field>,
    /// Mass at full steps t0 + i*dt.
    mass_series: Vec<f64>,
    /// Energy at full steps t0 + i*dt.
    energy_series: Vec<f64>,
}

impl HartreeTrajectory {
    pub fn space(&self) -> &Arc<ModeSpace> {
        &self.space
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of full dt steps.
    pub fn full_steps(&self) -> usize {
        self.mass_series.len() - 1
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.snapshots
    }

    /// Snapshot at half-step index i (time t0 + i*dt/2).
    pub fn snapshot(&self, half_index: usize) -> &Field {
        &self.snapshots[half_index]
    }

    pub fn mass_series(&self) -> &[f64] {
        &self.mass_series
    }

    pub fn energy_series(&self) -> &[f64] {
        &self.energy_series
    }

    /// Map a time to an exact full-step index.
    pub fn full_step_index(&self, t: f64) -> Result<usize> {
        if t < self.t0 - 1e-12 || t > self.t1 + 1e-12 {
            return Err(CoreError::TrajectoryRange {
                t,
                t0: self.t0,
                t1: self.t1,
            });
        }
        let steps = (t - self.t0) / self.dt;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-6 {
            return Err(CoreError::SnapshotMisalignment { t, dt: self.dt });
        }
        Ok(rounded as usize)
    }

    /// Condensate state at a full-step time.
    pub fn state_at(&self, t: f64) -> Result<&Field> {
        let i = self.full_step_index(t)?;
        Ok(&self.snapshots[2 * i])
    }
}

/// Complex dense propagator exp(-i h0 tau) for the lattice kinetic substep.
pub(crate) struct DenseKineticExp {
    matrix: Array2<C64>,
}

impl DenseKineticExp {
    pub(crate) fn new(space: &ModeSpace, tau: f64) -> Result<Self> {
        let m = space.grid_points();
        let h0 = space.kinetic_matrix().ok_or(CoreError::BackendMismatch {
            op: "dense kinetic exponential",
            needed: "DenseLattice",
        })?;
        let h = Array2::from_shape_vec((m, m), h0.to_vec()).expect("square kinetic");
        let (vals, vecs): (Array1<f64>, Array2<f64>) = h
            .eigh(UPLO::Lower)
            .map_err(|e| CoreError::Eigen(e.to_string()))?;
        let mut out = Array2::<C64>::zeros((m, m));
        for i in 0..m {
            for j in 0..m {
                let mut z = C64::new(0.0, 0.0);
                for (l, lam) in vals.iter().enumerate() {
                    z += vecs[[i, l]] * vecs[[j, l]] * C64::from_polar(1.0, -lam * tau);
                }
                out[[i, j]] = z;
            }
        }
        Ok(DenseKineticExp { matrix: out })
    }

    pub(crate) fn apply(&self, amps: &mut [C64]) {
        let m = self.matrix.nrows();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for (i, o) in out.iter_mut().enumerate() {
            for (j, a) in amps.iter().enumerate() {
                *o += self.matrix[[i, j]] * a;
            }
        }
        amps.copy_from_slice(&out);
    }
}

enum KineticStep {
    /// Phase table exp(-i eps(k) tau) applied in Fourier space.
    Torus(Vec<C64>),
    Lattice(DenseKineticExp),
}

impl KineticStep {
    fn new(space: &ModeSpace, tau: f64) -> Result<Self> {
        match space.backend() {
            Backend::SpectralTorus => {
                let eps = space.kinetic_multiplier().expect("torus kinetic");
                Ok(KineticStep::Torus(
                    eps.iter().map(|e| C64::from_polar(1.0, -e * tau)).collect(),
                ))
            }
            Backend::DenseLattice => Ok(KineticStep::Lattice(DenseKineticExp::new(space, tau)?)),
        }
    }

    fn apply(&self, space: &ModeSpace, amps: &mut [C64]) {
        match self {
            KineticStep::Torus(phase) => {
                space.fft_forward(amps);
                for (z, p) in amps.iter_mut().zip(phase) {
                    *z *= p;
                }
                space.fft_inverse(amps);
            }
            KineticStep::Lattice(exp) => exp.apply(amps),
        }
    }
}

fn potential_half_step(phi: &mut Field, tau: f64) {
    let w = convolve(&phi.density());
    for (z, wz) in phi.amplitudes_mut().iter_mut().zip(w.amplitudes()) {
        *z *= C64::from_polar(1.0, -wz.re * tau);
    }
}

/// Integrate the Hartree equation from `phi0` to `t1` with nominal step
/// `dt`, recording states every dt/2.
pub fn evolve(phi0: &Field, t1: f64, dt: f64) -> Result<HartreeTrajectory> {
    require_normalized(phi0, 1e-10)?;
    if dt <= 0.0 || t1 <= 0.0 {
        return Err(CoreError::InvalidParameter(
            "dt and t1 must be positive".into(),
        ));
    }
    let n_steps_f = t1 / dt;
    let n_steps = n_steps_f.round() as usize;
    if n_steps == 0 || (n_steps_f - n_steps as f64).abs() > 1e-9 * n_steps_f.max(1.0) {
        return Err(CoreError::InvalidParameter(format!(
            "t1 = {t1} is not an integer number of steps dt = {dt}"
        )));
    }
    let space = phi0.space().clone();
    let h = 0.5 * dt; // internal step
    let kinetic = KineticStep::new(&space, h)?;

    let mut phi = phi0.clone();
    let mut snapshots = Vec::with_capacity(2 * n_steps + 1);
    let mut mass_series = Vec::with_capacity(n_steps + 1);
    let mut energy_series = Vec::with_capacity(n_steps + 1);
    snapshots.push(phi.clone());
    mass_series.push(mass(&phi));
    energy_series.push(energy(&phi));

    for half in 1..=(2 * n_steps) {
        potential_half_step(&mut phi, 0.5 * h);
        kinetic.apply(&space, phi.amplitudes_mut());
        potential_half_step(&mut phi, 0.5 * h);
        snapshots.push(phi.clone());
        if half % 2 == 0 {
            let m = mass(&phi);
            let drift = (m - mass_series[0]).abs();
            if drift > 1e-6 {
                return Err(CoreError::NormDrift {
                    t: half as f64 * h,
                    drift,
                });
            }
            mass_series.push(m);
            energy_series.push(energy(&phi));
        }
    }

    Ok(HartreeTrajectory {
        space,
        t0: 0.0,
        t1: n_steps as f64 * dt,
        dt,
        snapshots,
        mass_series,
        energy_series,
    })
}
