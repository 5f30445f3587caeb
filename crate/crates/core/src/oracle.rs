//! Exact finite-N many-body reference on a small lattice: the symmetric
//! N-boson sector in occupation representation, the mean-field Hamiltonian
//! dGamma(h0) + (1/2N) sum v_jk (n_j n_k - delta_jk n_j), dense
//! eigendecomposition for the time evolution, and the finite-N
//! counterparts of the large-N scrambling formulas.
//!
//! Everything here is measured against the same lattice mode space the
//! prediction side runs on, so N-convergence comparisons share one
//! effective model.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::hartree::HartreeTrajectory;
use crate::space::{apply_observable, inner, Backend, Field, ModeSpace, Observable};
use crate::{CoreError, Result};

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// Occupation basis of the N-boson sector over M modes, enumerated in
/// colexicographic order with rank/unrank maps.
pub struct FockBasis {
    modes: usize,
    particles: usize,
    states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl FockBasis {
    pub fn new(modes: usize, particles: usize) -> Arc<Self> {
        let mut states = Vec::with_capacity(binomial(particles + modes - 1, modes - 1) as usize);
        let mut current = vec![0u32; modes];
        fn fill(states: &mut Vec<Vec<u32>>, current: &mut Vec<u32>, mode: usize, left: u32) {
            if mode == 0 {
                current[0] = left;
                states.push(current.clone());
                return;
            }
            for occ in 0..=left {
                current[mode] = occ;
                fill(states, current, mode - 1, left - occ);
            }
        }
        fill(&mut states, &mut current, modes - 1, particles as u32);
        let index = states
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        Arc::new(FockBasis {
            modes,
            particles,
            states,
            index,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn unrank(&self, i: usize) -> &[u32] {
        &self.states[i]
    }

    pub fn rank(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }
}

/// Exact N-boson state in the occupation basis.
#[derive(Clone)]
pub struct FockState {
    basis: Arc<FockBasis>,
    amps: Array1<C64>,
}

impl FockState {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Second-quantized operator on a Fock sector, stored dense.
pub struct ManyBodyOperator {
    basis: Arc<FockBasis>,
    matrix: Array2<C64>,
    hermitian: bool,
}

impl ManyBodyOperator {
    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn check_hermitian(matrix: &Array2<C64>) -> bool {
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..=i {
                if (matrix[[i, j]] - matrix[[j, i]].conj()).norm() > 1e-12 {
                    return false;
                }
            }
        }
        true
    }

    pub fn apply(&self, v: &Array1<C64>) -> Array1<C64> {
        self.matrix.dot(v)
    }
}

/// Condensate product state: amplitude sqrt(N!/prod n_j!) prod phi_j^{n_j}
/// on each occupation vector.
pub fn product_state(basis: &Arc<FockBasis>, phi: &Field) -> Result<FockState> {
    if phi.amplitudes().len() != basis.modes() {
        return Err(CoreError::DimensionMismatch {
            expected: basis.modes(),
            got: phi.amplitudes().len(),
        });
    }
    let dev = (phi.norm() - 1.0).abs();
    if dev > 1e-8 {
        return Err(CoreError::Unnormalized { deviation: dev });
    }
    let mut amps = Array1::<C64>::zeros(basis.len());
    for (i, occ) in basis.states.iter().enumerate() {
        // multinomial through a product of binomials of partial sums
        let mut coeff: f64 = 1.0;
        let mut partial: usize = 0;
        for &n in occ.iter() {
            partial += n as usize;
            coeff *= binomial(partial, n as usize) as f64;
        }
        let mut z = C64::new(coeff.sqrt(), 0.0);
        for (j, &n) in occ.iter().enumerate() {
            z *= phi.amplitudes()[j].powu(n);
        }
        amps[i] = z;
    }
    Ok(FockState {
        basis: basis.clone(),
        amps,
    })
}

/// One-body observable as a dense M x M lattice matrix.
fn observable_matrix(a: &Observable, modes: usize) -> Result<Vec<f64>> {
    match a {
        Observable::PositionDiagonal(d) => {
            if d.len() != modes {
                return Err(CoreError::DimensionMismatch {
                    expected: modes,
                    got: d.len(),
                });
            }
            let mut m = vec![0.0; modes * modes];
            for (j, &v) in d.iter().enumerate() {
                m[j * modes + j] = v;
            }
            Ok(m)
        }
        Observable::Dense(m) => {
            if m.len() != modes * modes {
                return Err(CoreError::DimensionMismatch {
                    expected: modes * modes,
                    got: m.len(),
                });
            }
            Ok(m.clone())
        }
        Observable::MomentumMultiplier(_) => Err(CoreError::BackendMismatch {
            op: "second quantization of a momentum multiplier",
            needed: "DenseLattice",
        }),
    }
}

fn dgamma_matrix(basis: &FockBasis, a: &[f64]) -> Array2<C64> {
    let m = basis.modes();
    let dim = basis.len();
    let mut out = Array2::<C64>::zeros((dim, dim));
    let mut scratch: Vec<u32> = vec![0; m];
    for (col, occ) in basis.states.iter().enumerate() {
        for k in 0..m {
            let nk = occ[k];
            if nk == 0 {
                continue;
            }
            for j in 0..m {
                let ajk = a[j * m + k];
                if ajk == 0.0 {
                    continue;
                }
                if j == k {
                    out[[col, col]] += ajk * nk as f64;
                } else {
                    scratch.copy_from_slice(occ);
                    scratch[k] -= 1;
                    scratch[j] += 1;
                    let row = basis.rank(&scratch).expect("occupation stays in sector");
                    let amp = (((occ[j] + 1) * nk) as f64).sqrt();
                    out[[row, col]] += ajk * amp;
                }
            }
        }
    }
    out
}

/// Second quantization dGamma(A) = sum_jk A_jk adag_j a_k on the sector.
pub fn dgamma(basis: &Arc<FockBasis>, a: &Observable) -> Result<ManyBodyOperator> {
    let mat = observable_matrix(a, basis.modes())?;
    let matrix = dgamma_matrix(basis, &mat);
    let hermitian = ManyBodyOperator::check_hermitian(&matrix);
    Ok(ManyBodyOperator {
        basis: basis.clone(),
        matrix,
        hermitian,
    })
}

/// Mean-field Hamiltonian dGamma(h0) + (1/2N) sum_jk v_jk (n_j n_k -
/// delta_jk n_j); the interaction is diagonal in the occupation basis.
pub fn build_hamiltonian(
    basis: &Arc<FockBasis>,
    space: &Arc<ModeSpace>,
    n: usize,
) -> Result<ManyBodyOperator> {
    if space.backend() != Backend::DenseLattice {
        return Err(CoreError::BackendMismatch {
            op: "build_hamiltonian",
            needed: "DenseLattice",
        });
    }
    if n != basis.particles() {
        return Err(CoreError::DimensionMismatch {
            expected: basis.particles(),
            got: n,
        });
    }
    let m = basis.modes();
    let h0 = space.kinetic_matrix().expect("lattice kinetic");
    let mut matrix = dgamma_matrix(basis, h0);
    let v: Option<&[f64]> = match space.interaction() {
        crate::space::InteractionKernel::DenseMatrix(v) => Some(v),
        crate::space::InteractionKernel::Zero => None,
        crate::space::InteractionKernel::FourierMultiplier(_) => {
            return Err(CoreError::BackendMismatch {
                op: "build_hamiltonian interaction",
                needed: "DenseLattice",
            })
        }
    };
    if let Some(v) = v {
        let scale = 1.0 / (2.0 * n as f64);
        for (i, occ) in basis.states.iter().enumerate() {
            let mut diag = 0.0;
            for j in 0..m {
                for k in 0..m {
                    let njk =
                        occ[j] as f64 * occ[k] as f64 - if j == k { occ[j] as f64 } else { 0.0 };
                    diag += v[j * m + k] * njk;
                }
            }
            matrix[[i, i]] += scale * diag;
        }
    }
    let hermitian = ManyBodyOperator::check_hermitian(&matrix);
    Ok(ManyBodyOperator {
        basis: basis.clone(),
        matrix,
        hermitian,
    })
}

/// Heisenberg conjugation e^{iHt} O e^{-iHt} through the dense
/// eigendecomposition of H.
pub fn evolve_heisenberg(
    h: &ManyBodyOperator,
    o: &ManyBodyOperator,
    t: f64,
) -> Result<ManyBodyOperator> {
    if !h.hermitian {
        return Err(CoreError::Eigen(
            "Heisenberg evolution needs a Hermitian generator".into(),
        ));
    }
    let eig = RealEigh::new(&h.matrix)?;
    let dim = h.matrix.nrows();
    // columns of U e^{+i t D}
    let mut left = Array2::<C64>::zeros((dim, dim));
    for l in 0..dim {
        let phase = C64::from_polar(1.0, eig.vals[l] * t);
        for i in 0..dim {
            left[[i, l]] = eig.vecs[[i, l]] * phase;
        }
    }
    let u_c = eig.vecs.mapv(|x| C64::new(x, 0.0));
    let inner_op = u_c.t().dot(&o.matrix).dot(&left.mapv(|z| z.conj()));
    let matrix = left.dot(&inner_op).dot(&u_c.t());
    let hermitian = ManyBodyOperator::check_hermitian(&matrix);
    Ok(ManyBodyOperator {
        basis: h.basis.clone(),
        matrix,
        hermitian,
    })
}

/// Real symmetric eigendecomposition wrapper used for the (real-valued)
/// sector Hamiltonians and diagonal generators.
struct RealEigh {
    vals: Array1<f64>,
    vecs: Array2<f64>,
}

impl RealEigh {
    fn new(matrix: &Array2<C64>) -> Result<Self> {
        let max_im = matrix.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if max_im > 1e-12 {
            return Err(CoreError::Eigen(format!(
                "sector matrix has imaginary entries up to {max_im:.3e}; real path only"
            )));
        }
        let re = matrix.mapv(|z| z.re);
        let (vals, vecs) = re
            .eigh(UPLO::Lower)
            .map_err(|e| CoreError::Eigen(e.to_string()))?;
        Ok(RealEigh { vals, vecs })
    }

    /// e^{-i H t} v
    fn evolve(&self, v: &Array1<C64>, t: f64) -> Array1<C64> {
        let re = v.mapv(|z| z.re);
        let im = v.mapv(|z| z.im);
        let cre = self.vecs.t().dot(&re);
        let cim = self.vecs.t().dot(&im);
        let mut coef = Array1::<C64>::zeros(v.len());
        for (i, c) in coef.iter_mut().enumerate() {
            *c = C64::new(cre[i], cim[i]) * C64::from_polar(1.0, -self.vals[i] * t);
        }
        let re = coef.mapv(|z| z.re);
        let im = coef.mapv(|z| z.im);
        let ore = self.vecs.dot(&re);
        let oim = self.vecs.dot(&im);
        Array1::from_iter(ore.iter().zip(oim.iter()).map(|(r, i)| C64::new(*r, *i)))
    }
}

/// Shared context for finite-N measurements: the sector basis, the product
/// state, and the cached eigendecomposition of H_N.
pub struct OracleContext {
    space: Arc<ModeSpace>,
    basis: Arc<FockBasis>,
    n: usize,
    psi: Array1<C64>,
    eigh: RealEigh,
}

pub const DEFAULT_SECTOR_CAP: usize = 4000;

impl OracleContext {
    pub fn new(space: &Arc<ModeSpace>, n: usize, phi0: &Field, cap: usize) -> Result<Self> {
        if space.backend() != Backend::DenseLattice {
            return Err(CoreError::BackendMismatch {
                op: "oracle",
                needed: "DenseLattice",
            });
        }
        let m = space.grid_points();
        let dim = binomial(n + m - 1, m - 1);
        if dim > cap as u128 {
            return Err(CoreError::SectorCap {
                dim: dim as usize,
                cap,
            });
        }
        let basis = FockBasis::new(m, n);
        let h = build_hamiltonian(&basis, space, n)?;
        let eigh = RealEigh::new(&h.matrix)?;
        let psi = product_state(&basis, phi0)?;
        Ok(OracleContext {
            space: space.clone(),
            basis,
            n,
            psi: psi.amps,
            eigh,
        })
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn sector_dim(&self) -> usize {
        self.basis.len()
    }

    fn check_trajectory(&self, traj: &HartreeTrajectory) -> Result<()> {
        if !Arc::ptr_eq(traj.space(), &self.space) {
            return Err(CoreError::SpaceMismatch);
        }
        Ok(())
    }

    /// <phi_t, A phi_t> from the lattice Hartree solution.
    fn condensate_expectation(
        &self,
        traj: &HartreeTrajectory,
        a: &Observable,
        t: f64,
    ) -> Result<f64> {
        let phi_t = traj.state_at(t)?;
        Ok(inner(phi_t, &apply_observable(a, phi_t)?)?.re)
    }

    fn apply_dgamma(&self, a: &[f64], v: &Array1<C64>) -> Array1<C64> {
        let m = self.basis.modes();
        let mut out = Array1::<C64>::zeros(v.len());
        let mut scratch = vec![0u32; m];
        for (col, occ) in self.basis.states.iter().enumerate() {
            let z = v[col];
            if z.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..m {
                let nk = occ[k];
                if nk == 0 {
                    continue;
                }
                for j in 0..m {
                    let ajk = a[j * m + k];
                    if ajk == 0.0 {
                        continue;
                    }
                    if j == k {
                        out[col] += ajk * nk as f64 * z;
                    } else {
                        scratch.copy_from_slice(occ);
                        scratch[k] -= 1;
                        scratch[j] += 1;
                        let row = self.basis.rank(&scratch).expect("stays in sector");
                        out[row] += ajk * (((occ[j] + 1) * nk) as f64).sqrt() * z;
                    }
                }
            }
        }
        out
    }

    /// dGamma(A_t)/N-normalized Heisenberg application: e^{iHt} (dGamma(A)
    /// - N <phi_t, A phi_t>) e^{-iHt} v.
    fn apply_centered_heisenberg(
        &self,
        traj: &HartreeTrajectory,
        a: &Observable,
        t: f64,
        v: &Array1<C64>,
    ) -> Result<Array1<C64>> {
        let amat = observable_matrix(a, self.basis.modes())?;
        let shift = self.n as f64 * self.condensate_expectation(traj, a, t)?;
        let back = self.eigh.evolve(v, t);
        let mut mid = self.apply_dgamma(&amat, &back);
        mid.scaled_add(C64::new(-shift, 0.0), &back);
        Ok(self.eigh.evolve(&mid, -t))
    }

    /// Exact finite-N OTOC: || [dGamma(B_0), dGamma(A_t)] psi ||^2 / N^2
    /// with both observables centered on the condensate expectations.
    pub fn finite_n_otoc(
        &self,
        traj: &HartreeTrajectory,
        a: &Observable,
        b: &Observable,
        t: f64,
    ) -> Result<f64> {
        self.check_trajectory(traj)?;
        let bmat = observable_matrix(b, self.basis.modes())?;
        let b_shift = self.n as f64 * self.condensate_expectation(traj, b, 0.0)?;
        let apply_b = |v: &Array1<C64>| -> Array1<C64> {
            let mut out = self.apply_dgamma(&bmat, v);
            out.scaled_add(C64::new(-b_shift, 0.0), v);
            out
        };
        let a_psi = self.apply_centered_heisenberg(traj, a, t, &self.psi)?;
        let b_psi = apply_b(&self.psi);
        let ba = apply_b(&a_psi);
        let ab = self.apply_centered_heisenberg(traj, a, t, &b_psi)?;
        let mut comm = ba;
        comm.scaled_add(C64::new(-1.0, 0.0), &ab);
        let norm_sq: f64 = comm.iter().map(|z| z.norm_sqr()).sum();
        Ok(norm_sq / (self.n as f64 * self.n as f64))
    }

    /// <psi, prod_i dGamma(A_{t_i})/sqrt(N) psi> with the leftmost factor
    /// at times[0].
    pub fn finite_n_moment(
        &self,
        traj: &HartreeTrajectory,
        a: &Observable,
        times: &[f64],
    ) -> Result<C64> {
        self.check_trajectory(traj)?;
        let scale = C64::new(1.0 / (self.n as f64).sqrt(), 0.0);
        let mut v = self.psi.clone();
        for &t in times.iter().rev() {
            v = self.apply_centered_heisenberg(traj, a, t, &v)?;
            v *= scale;
        }
        Ok(self
            .psi
            .iter()
            .zip(v.iter())
            .map(|(p, w)| p.conj() * w)
            .sum())
    }

    /// <psi, prod_j exp(i lambda_j dGamma(A_{t_j})/sqrt(N)) psi>, leftmost
    /// factor at (times[0], lambdas[0]).
    ///
    /// For a position-diagonal observable the inner exponential is an exact
    /// occupation phase; a dense observable goes through the cached
    /// eigendecomposition of its own second quantization.
    pub fn finite_n_char(
        &self,
        traj: &HartreeTrajectory,
        a: &Observable,
        times: &[f64],
        lambdas: &[f64],
    ) -> Result<C64> {
        self.check_trajectory(traj)?;
        if times.len() != lambdas.len() {
            return Err(CoreError::DimensionMismatch {
                expected: times.len(),
                got: lambdas.len(),
            });
        }
        let sqrt_n = (self.n as f64).sqrt();
        enum ExpPath {
            Diagonal(Vec<f64>),
            Dense(RealEigh),
        }
        let path = match a {
            Observable::PositionDiagonal(d) => {
                if d.len() != self.basis.modes() {
                    return Err(CoreError::DimensionMismatch {
                        expected: self.basis.modes(),
                        got: d.len(),
                    });
                }
                let diag: Vec<f64> = self
                    .basis
                    .states
                    .iter()
                    .map(|occ| occ.iter().zip(d).map(|(&n, &aj)| n as f64 * aj).sum())
                    .collect();
                ExpPath::Diagonal(diag)
            }
            _ => {
                let op = dgamma(&self.basis, a)?;
                ExpPath::Dense(RealEigh::new(&op.matrix)?)
            }
        };
        let mut v = self.psi.clone();
        for (&t, &lam) in times.iter().zip(lambdas).rev() {
            let shift = self.n as f64 * self.condensate_expectation(traj, a, t)?;
            let scaled = lam / sqrt_n;
            v = self.eigh.evolve(&v, t);
            match &path {
                ExpPath::Diagonal(diag) => {
                    for (z, d) in v.iter_mut().zip(diag) {
                        *z *= C64::from_polar(1.0, scaled * (d - shift));
                    }
                }
                ExpPath::Dense(eig) => {
                    // exp(i scaled dGamma(A)) v through the eigenbasis,
                    // then the scalar centering phase
                    v = eig.evolve(&v, -scaled);
                    v *= C64::from_polar(1.0, -scaled * shift);
                }
            }
            v = self.eigh.evolve(&v, -t);
        }
        Ok(self
            .psi
            .iter()
            .zip(v.iter())
            .map(|(p, w)| p.conj() * w)
            .sum())
    }

    /// <psi, H psi> / N, for the energy consistency checks.
    pub fn energy_per_particle(&self) -> Result<f64> {
        let h = build_hamiltonian(&self.basis, &self.space, self.n)?;
        let hv = h.apply(&self.psi);
        let e: C64 = self
            .psi
            .iter()
            .zip(hv.iter())
            .map(|(p, w)| p.conj() * w)
            .sum();
        Ok(e.re / self.n as f64)
    }

    /// e^{-iHt} applied to the stored product state.
    pub fn evolved_state(&self, t: f64) -> Array1<C64> {
        self.eigh.evolve(&self.psi, t)
    }
}
