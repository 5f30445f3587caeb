//! Projected pair-excitation kernels, the real-linear fluctuation generator
//! h_phi + K1~ - K2~ J, and the propagators built from it.
//!
//! The full Bogoliubov map on L^2 + L^2 is never materialized. It commutes
//! with the swap-conjugation of the two slots, so it is determined by the
//! scalar propagator L acting on the two invariant real-linear subspaces
//! {(f, Jf)} and {(f, -Jf)}; `propagate_pair` decomposes into those parts,
//! runs the scalar flow with the pairing sign flipped on the second part,
//! and reassembles.
//!
//! Conventions for the projected kernels: K1~ = q K1 q, and the pairing
//! term acts as the antilinear map q (K2 J) q, i.e. k2_tilde = q K2 (JqJ).
//! Only with the projection on both sides does the pairing annihilate the
//! condensate line, which yields the exact covariance L_(t;0) phi_t =
//! phi_0 that the scrambling formulas rely on.

use num_complex::Complex64 as C64;

use crate::hartree::{hartree_rhs, HartreeTrajectory};
use crate::space::{
    check_same_space, conj_field, convolve, inner, project_out, project_out_conj,
    require_normalized, Backend, Field, ModeSpace,
};
use crate::{CoreError, Result};

/// Element of L^2 + L^2.
#[derive(Debug, Clone)]
pub struct PairField {
    pub first: Field,
    pub second: Field,
}

impl PairField {
    pub fn new(first: Field, second: Field) -> Result<Self> {
        check_same_space(&first, &second)?;
        Ok(PairField { first, second })
    }

    /// The pair (f, Jf) lying in the conjugation-invariant subspace.
    pub fn j_real(f: &Field) -> Self {
        PairField {
            first: f.clone(),
            second: conj_field(f),
        }
    }
}

/// Indefinite pairing <p, q>_S = <p1, q1> - <p2, q2>.
pub fn s_inner(p: &PairField, q: &PairField) -> Result<C64> {
    Ok(inner(&p.first, &q.first)? - inner(&p.second, &q.second)?)
}

/// K1 f = phi * (v * (conj(phi) f)).
pub fn k1_apply(phi: &Field, f: &Field) -> Result<Field> {
    check_same_space(phi, f)?;
    let prod = conj_field(phi).pointwise_mul(f)?;
    convolve(&prod).pointwise_mul(phi)
}

/// K2 f = phi * (v * (phi f)).
pub fn k2_apply(phi: &Field, f: &Field) -> Result<Field> {
    check_same_space(phi, f)?;
    let prod = phi.pointwise_mul(f)?;
    convolve(&prod).pointwise_mul(phi)
}

/// Projected kernel K1~ = q K1 q.
pub fn k1_tilde_apply(phi: &Field, f: &Field) -> Result<Field> {
    require_normalized(phi, 1e-8)?;
    let u = project_out(phi, f)?;
    project_out(phi, &k1_apply(phi, &u)?)
}

/// Projected pair kernel K2~ = q K2 (JqJ).
///
/// Composed with J this is q (K2 J) q, the pairing map projected off the
/// condensate on both sides; it annihilates conj(phi) directly and phi
/// through the conjugation.
pub fn k2_tilde_apply(phi: &Field, f: &Field) -> Result<Field> {
    require_normalized(phi, 1e-8)?;
    let u = project_out_conj(phi, f)?;
    project_out(phi, &k2_apply(phi, &u)?)
}

/// Fluctuation generator (h_phi + K1~ - K2~ J) f. Real-linear but not
/// complex-linear: the last term conjugates its argument.
pub fn generator_apply(phi: &Field, f: &Field) -> Result<Field> {
    let mut out = hartree_rhs(phi, f)?;
    let k1 = k1_tilde_apply(phi, f)?;
    let k2 = k2_tilde_apply(phi, &conj_field(f))?;
    out.axpy(C64::new(1.0, 0.0), &k1);
    out.axpy(C64::new(-1.0, 0.0), &k2);
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    /// L_(t;0): data at time t, integrate s from t down to 0.
    Backward,
    /// L_(0;t): data at time 0, integrate s from 0 up to t.
    Forward,
}

enum KineticHalf {
    Torus {
        fwd: Vec<C64>,
        bwd: Vec<C64>,
    },
    Lattice {
        fwd: crate::hartree::DenseKineticExp,
        bwd: crate::hartree::DenseKineticExp,
    },
}

/// Propagator for the fluctuation flow over a stored Hartree trajectory.
///
/// Construction precomputes the Hartree potential v*|phi_s|^2 at every
/// half-step snapshot and the kinetic half-step phases, so that many
/// propagations can share one trajectory. All methods take `&self`.
pub struct LPropagator<'a> {
    traj: &'a HartreeTrajectory,
    /// v*|phi|^2 at each half-step snapshot.
    w_cache: Vec<Vec<f64>>,
    kinetic: KineticHalf,
}

impl<'a> LPropagator<'a> {
    pub fn new(traj: &'a HartreeTrajectory) -> Result<Self> {
        let space = traj.space();
        let w_cache = traj
            .snapshots()
            .iter()
            .map(|phi| {
                convolve(&phi.density())
                    .amplitudes()
                    .iter()
                    .map(|z| z.re)
                    .collect()
            })
            .collect();
        let half = 0.5 * traj.dt();
        let kinetic = match space.backend() {
            Backend::SpectralTorus => {
                let eps = space.kinetic_multiplier().expect("torus kinetic");
                KineticHalf::Torus {
                    fwd: eps
                        .iter()
                        .map(|e| C64::from_polar(1.0, -e * half))
                        .collect(),
                    bwd: eps.iter().map(|e| C64::from_polar(1.0, e * half)).collect(),
                }
            }
            Backend::DenseLattice => KineticHalf::Lattice {
                fwd: crate::hartree::DenseKineticExp::new(space, half)?,
                bwd: crate::hartree::DenseKineticExp::new(space, -half)?,
            },
        };
        Ok(LPropagator {
            traj,
            w_cache,
            kinetic,
        })
    }

    pub fn trajectory(&self) -> &HartreeTrajectory {
        self.traj
    }

    /// L_(t;0) f: carry data prescribed at time t back to time 0.
    pub fn propagate_l(&self, f: &Field, t: f64) -> Result<Field> {
        self.integrate(f, t, Direction::Backward, 1.0)
    }

    /// L_(0;t) f: the inverse flow, data at time 0 carried forward to t.
    pub fn propagate_l_adjoint_direction(&self, f: &Field, t: f64) -> Result<Field> {
        self.integrate(f, t, Direction::Forward, 1.0)
    }

    /// Theta(t;0) applied to a pair through the conjugation-split scalar
    /// flows.
    pub fn propagate_pair(&self, p: &PairField, t: f64) -> Result<PairField> {
        self.pair_flow(p, t, Direction::Backward)
    }

    /// Theta(t;0)^{-1} applied to a pair.
    pub fn propagate_pair_inverse(&self, p: &PairField, t: f64) -> Result<PairField> {
        self.pair_flow(p, t, Direction::Forward)
    }

    fn pair_flow(&self, p: &PairField, t: f64, dir: Direction) -> Result<PairField> {
        let js = conj_field(&p.second);
        let mut u = p.first.clone();
        u.axpy(C64::new(1.0, 0.0), &js);
        let mut w = p.first.clone();
        w.axpy(C64::new(-1.0, 0.0), &js);
        let lu = self.integrate(&u, t, dir, 1.0)?;
        let lw = self.integrate(&w, t, dir, -1.0)?;
        let first = lu.add(&lw)?.scaled(C64::new(0.5, 0.0));
        let second = conj_field(&lu.sub(&lw)?.scaled(C64::new(0.5, 0.0)));
        Ok(PairField { first, second })
    }

    /// Bounded part of the generator at snapshot `snap`: W psi + q(K1 -
    /// sign * K2 J)(q psi). Shares the projected vector between the two
    /// kernel terms; skips the norm re-validation the public ops perform.
    fn bounded_apply(&self, snap: usize, pairing_sign: f64, psi: &Field) -> Field {
        let phi = self.traj.snapshot(snap);
        let w = &self.w_cache[snap];
        let space = psi.space().clone();

        let c = raw_inner(phi, psi);
        let mut u = psi.clone();
        u.axpy(-c, phi);

        let mut kq = kernel_core(&space, phi, &u, false);
        kq.axpy(
            C64::new(-pairing_sign, 0.0),
            &kernel_core(&space, phi, &u, true),
        );
        let c2 = raw_inner(phi, &kq);
        kq.axpy(-c2, phi);

        for ((o, pw), pv) in kq.amplitudes_mut().iter_mut().zip(w).zip(psi.amplitudes()) {
            *o += pw * pv;
        }
        kq
    }

    fn kinetic_half(&self, dir: Direction, amps: &mut [C64], space: &ModeSpace) {
        match (&self.kinetic, dir) {
            (KineticHalf::Torus { fwd, .. }, Direction::Forward) => {
                space.fft_forward(amps);
                for (z, p) in amps.iter_mut().zip(fwd) {
                    *z *= p;
                }
                space.fft_inverse(amps);
            }
            (KineticHalf::Torus { bwd, .. }, Direction::Backward) => {
                space.fft_forward(amps);
                for (z, p) in amps.iter_mut().zip(bwd) {
                    *z *= p;
                }
                space.fft_inverse(amps);
            }
            (KineticHalf::Lattice { fwd, .. }, Direction::Forward) => fwd.apply(amps),
            (KineticHalf::Lattice { bwd, .. }, Direction::Backward) => bwd.apply(amps),
        }
    }

    fn integrate(&self, f: &Field, t: f64, dir: Direction, pairing_sign: f64) -> Result<Field> {
        let n = self.traj.full_step_index(t)?;
        let space = self.traj.space().clone();
        if !std::sync::Arc::ptr_eq(f.space(), &space) {
            return Err(CoreError::SpaceMismatch);
        }
        let dt = self.traj.dt();
        let mut psi = f.clone();
        let steps: Vec<usize> = match dir {
            Direction::Backward => (1..=n).rev().collect(),
            Direction::Forward => (1..=n).collect(),
        };
        for i in steps {
            // stage snapshots: backward runs 2i -> 2i-1 -> 2i-2,
            // forward runs 2i-2 -> 2i-1 -> 2i
            let (s_start, s_mid, s_end, h) = match dir {
                Direction::Backward => (2 * i, 2 * i - 1, 2 * i - 2, -dt),
                Direction::Forward => (2 * i - 2, 2 * i - 1, 2 * i, dt),
            };
            self.kinetic_half(dir, psi.amplitudes_mut(), &space);
            // classical RK4 on the bounded real-linear part
            let mi = C64::new(0.0, -1.0);
            let k1 = self.bounded_apply(s_start, pairing_sign, &psi).scaled(mi);
            let mut stage = psi.clone();
            stage.axpy(C64::new(0.5 * h, 0.0), &k1);
            let k2 = self.bounded_apply(s_mid, pairing_sign, &stage).scaled(mi);
            let mut stage = psi.clone();
            stage.axpy(C64::new(0.5 * h, 0.0), &k2);
            let k3 = self.bounded_apply(s_mid, pairing_sign, &stage).scaled(mi);
            let mut stage = psi.clone();
            stage.axpy(C64::new(h, 0.0), &k3);
            let k4 = self.bounded_apply(s_end, pairing_sign, &stage).scaled(mi);
            let w = h / 6.0;
            psi.axpy(C64::new(w, 0.0), &k1);
            psi.axpy(C64::new(2.0 * w, 0.0), &k2);
            psi.axpy(C64::new(2.0 * w, 0.0), &k3);
            psi.axpy(C64::new(w, 0.0), &k4);
            self.kinetic_half(dir, psi.amplitudes_mut(), &space);
        }
        Ok(psi)
    }
}

fn raw_inner(phi: &Field, f: &Field) -> C64 {
    let s: C64 = phi
        .amplitudes()
        .iter()
        .zip(f.amplitudes())
        .map(|(p, z)| p.conj() * z)
        .sum();
    s * phi.space().quadrature_weight()
}

/// Unprojected kernel action on an already-projected vector: phi * (v *
/// (conj(phi) u)) for the density route, phi * (v * (phi conj(u))) for the
/// pairing route.
fn kernel_core(space: &std::sync::Arc<ModeSpace>, phi: &Field, u: &Field, pairing: bool) -> Field {
    let n = space.len();
    let mut prod = vec![C64::new(0.0, 0.0); n];
    if pairing {
        for ((p, ph), uu) in prod.iter_mut().zip(phi.amplitudes()).zip(u.amplitudes()) {
            *p = ph * uu.conj();
        }
    } else {
        for ((p, ph), uu) in prod.iter_mut().zip(phi.amplitudes()).zip(u.amplitudes()) {
            *p = ph.conj() * uu;
        }
    }
    let conv = convolve(&Field::new(space.clone(), prod).expect("sized"));
    let mut out = conv;
    for (o, ph) in out.amplitudes_mut().iter_mut().zip(phi.amplitudes()) {
        *o *= ph;
    }
    out
}

/// Closed-form backward/forward propagation of one Fourier pair (k, -k)
/// over a homogeneous condensate, used as an independent reference.
///
/// `eps_k` is the kinetic multiplier, `rho_vk` is rho v_hat(k), `mu` is
/// rho v_hat(0). Input (a, b) are the coefficients of e^{ikx}, e^{-ikx}
/// at the start time; `tau` is the signed duration (negative for the
/// backward map L_(t;0) with t = -tau > 0). Works in the gauge
/// alpha = e^{i mu s} a where the mode system is autonomous with normal
/// frequencies Omega^2 = eps (eps + 2 rho v_hat).
pub fn homogeneous_pair_closed_form(
    eps_k: f64,
    rho_vk: f64,
    mu: f64,
    s_start: f64,
    tau: f64,
    a: C64,
    b: C64,
) -> (C64, C64) {
    let e = eps_k + rho_vk;
    let c = rho_vk;
    let alpha = a * C64::from_polar(1.0, mu * s_start);
    let beta = b * C64::from_polar(1.0, mu * s_start);
    let xi_p = alpha + beta.conj();
    let xi_m = alpha - beta.conj();
    let om = C64::new(e * e - c * c, 0.0).sqrt();
    let z = om * tau;
    let cos_z = z.cos();
    // sin(z)/z, stable at small |z|
    let sinc = if z.norm() < 1e-8 {
        C64::new(1.0, 0.0) - z * z / 6.0
    } else {
        z.sin() / z
    };
    let i = C64::new(0.0, 1.0);
    let xi_p_t = cos_z * xi_p - i * (e + c) * tau * sinc * xi_m;
    let xi_m_t = cos_z * xi_m - i * (e - c) * tau * sinc * xi_p;
    let alpha_t = (xi_p_t + xi_m_t) * 0.5;
    let beta_t = ((xi_p_t - xi_m_t) * 0.5).conj();
    let s_end = s_start + tau;
    let phase = C64::from_polar(1.0, -mu * s_end);
    (alpha_t * phase, beta_t * phase)
}

/// Strang-structured integration of the same mode pair at the trajectory
/// step, mirroring the full propagator arrangement but built purely from
/// the scalar dispersion data.
#[allow(clippy::too_many_arguments)]
pub fn homogeneous_pair_strang(
    eps_k: f64,
    rho_vk: f64,
    mu: f64,
    dt: f64,
    n_steps: usize,
    backward: bool,
    a0: C64,
    b0: C64,
) -> (C64, C64) {
    let mut a = a0;
    let mut b = b0;
    let i = C64::new(0.0, 1.0);
    let rhs = |s: f64, a: C64, b: C64| -> (C64, C64) {
        let rot = C64::from_polar(1.0, -2.0 * mu * s);
        let da = -i * ((mu + rho_vk) * a - rot * rho_vk * b.conj());
        let db = -i * ((mu + rho_vk) * b - rot * rho_vk * a.conj());
        (da, db)
    };
    let steps: Vec<usize> = if backward {
        (1..=n_steps).rev().collect()
    } else {
        (1..=n_steps).collect()
    };
    for step in steps {
        let (s_start, h) = if backward {
            (step as f64 * dt, -dt)
        } else {
            ((step - 1) as f64 * dt, dt)
        };
        let half = C64::from_polar(1.0, -eps_k * 0.5 * h);
        a *= half;
        b *= half;
        let (k1a, k1b) = rhs(s_start, a, b);
        let (k2a, k2b) = rhs(s_start + 0.5 * h, a + 0.5 * h * k1a, b + 0.5 * h * k1b);
        let (k3a, k3b) = rhs(s_start + 0.5 * h, a + 0.5 * h * k2a, b + 0.5 * h * k2b);
        let (k4a, k4b) = rhs(s_start + h, a + h * k3a, b + h * k3b);
        a += h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        b += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
        a *= half;
        b *= half;
    }
    (a, b)
}
