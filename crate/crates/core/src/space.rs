//! Finite one-body mode spaces, complex fields over them, interaction
//! kernels and real observables.
//!
//! Two backends are supported. `SpectralTorus` discretizes the periodic box
//! [0, L)^d with M points per axis; the kinetic operator is the Fourier
//! multiplier eps(k) = |k|^2 on the grid k in (2*pi/L)*Z^d and convolutions
//! are evaluated through the FFT, which makes them exact for band-limited
//! data. `DenseLattice` is an explicit M-site lattice with a real symmetric
//! hopping matrix and a dense interaction matrix; it is the space the exact
//! finite-N oracle runs on.
//!
//! Fourier convention: the forward transform carries the quadrature weight
//! (L/M)^d, the inverse carries 1/L^d, so `fft` approximates the continuum
//! transform and Parseval holds exactly on the grid.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use rustfft::{Fft, FftPlanner};

use crate::{CoreError, Result};

/// Discretization backend of a [`ModeSpace`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    SpectralTorus,
    DenseLattice,
}

/// Two-body interaction kernel attached to a mode space.
#[derive(Debug, Clone)]
pub enum InteractionKernel {
    /// v specified through its real, even Fourier multiplier on the k-grid.
    FourierMultiplier(Vec<f64>),
    /// Real symmetric matrix v_{jk} on an explicit lattice.
    DenseMatrix(Vec<f64>),
    Zero,
}

/// Named interaction constructors, resolved against a concrete grid.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    /// v(x) = g * exp(-|x|^2 / (2 sigma^2)), entered through its exact
    /// continuum transform g (2 pi sigma^2)^{d/2} exp(-sigma^2 |k|^2 / 2).
    Gaussian {
        strength: f64,
        width: f64,
    },
    /// v_hat(k) = 4 pi / |k|^2 with the zero mode set to 0 (neutralizing
    /// background); d = 3 only.
    Coulomb3d,
    /// On-site repulsion u * delta_{jk} on a lattice.
    Onsite {
        strength: f64,
    },
    /// Explicit real symmetric matrix (lattice backend).
    Explicit(Vec<f64>),
    Zero,
}

enum Kinetic {
    /// eps(k) = |k|^2 tabulated on the flattened k-grid.
    Multiplier(Vec<f64>),
    /// Explicit real symmetric M x M matrix.
    Dense(Vec<f64>),
}

/// Finite one-body configuration space shared by every field of a run.
pub struct ModeSpace {
    backend: Backend,
    dim: usize,
    grid: usize,
    box_length: f64,
    weight: f64,
    kinetic: Kinetic,
    interaction: InteractionKernel,
    /// Signed mode index per axis position: 0, 1, ..., M/2, -(M/2-1), ..., -1.
    k_index: Vec<i64>,
    fft_fwd: Option<Arc<dyn Fft<f64>>>,
    fft_inv: Option<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for ModeSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModeSpace")
            .field("backend", &self.backend)
            .field("dim", &self.dim)
            .field("grid", &self.grid)
            .field("box_length", &self.box_length)
            .finish()
    }
}

impl ModeSpace {
    /// Periodic torus [0, L)^d with M grid points per axis.
    pub fn torus(
        dim: usize,
        box_length: f64,
        grid: usize,
        kernel: KernelSpec,
    ) -> Result<Arc<Self>> {
        if !(1..=3).contains(&dim) {
            return Err(CoreError::InvalidParameter(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if box_length <= 0.0 || grid < 2 {
            return Err(CoreError::InvalidParameter(
                "box_length must be positive and grid_points >= 2".into(),
            ));
        }
        let n = grid.pow(dim as u32);
        let k_index: Vec<i64> = (0..grid)
            .map(|i| {
                if i <= grid / 2 {
                    i as i64
                } else {
                    i as i64 - grid as i64
                }
            })
            .collect();
        let dk = 2.0 * PI / box_length;
        let mut eps = vec![0.0; n];
        for (idx, e) in eps.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut rem = idx;
            for _ in 0..dim {
                let ka = dk * k_index[rem % grid] as f64;
                sum += ka * ka;
                rem /= grid;
            }
            *e = sum;
        }
        let interaction = match kernel {
            KernelSpec::Gaussian { strength, width } => {
                if width <= 0.0 {
                    return Err(CoreError::InvalidParameter(
                        "gaussian width must be positive".into(),
                    ));
                }
                let amp = strength * (2.0 * PI * width * width).powf(dim as f64 / 2.0);
                let mut vhat = vec![0.0; n];
                for (idx, v) in vhat.iter_mut().enumerate() {
                    let mut k2 = 0.0;
                    let mut rem = idx;
                    for _ in 0..dim {
                        let ka = dk * k_index[rem % grid] as f64;
                        k2 += ka * ka;
                        rem /= grid;
                    }
                    *v = amp * (-0.5 * width * width * k2).exp();
                }
                InteractionKernel::FourierMultiplier(vhat)
            }
            KernelSpec::Coulomb3d => {
                if dim != 3 {
                    return Err(CoreError::InvalidParameter(
                        "coulomb3d requires d = 3".into(),
                    ));
                }
                let mut vhat = vec![0.0; n];
                for (idx, v) in vhat.iter_mut().enumerate() {
                    let mut k2 = 0.0;
                    let mut rem = idx;
                    for _ in 0..dim {
                        let ka = dk * k_index[rem % grid] as f64;
                        k2 += ka * ka;
                        rem /= grid;
                    }
                    *v = if k2 > 0.0 { 4.0 * PI / k2 } else { 0.0 };
                }
                InteractionKernel::FourierMultiplier(vhat)
            }
            KernelSpec::Zero => InteractionKernel::Zero,
            other => {
                return Err(CoreError::InvalidParameter(format!(
                    "kernel {other:?} is not available on the torus backend"
                )))
            }
        };
        let mut planner = FftPlanner::new();
        Ok(Arc::new(ModeSpace {
            backend: Backend::SpectralTorus,
            dim,
            grid,
            box_length,
            weight: (box_length / grid as f64).powi(dim as i32),
            kinetic: Kinetic::Multiplier(eps),
            interaction,
            k_index,
            fft_fwd: Some(planner.plan_fft_forward(grid)),
            fft_inv: Some(planner.plan_fft_inverse(grid)),
        }))
    }

    /// Explicit lattice with real symmetric kinetic matrix `h0` (row-major
    /// M x M) and quadrature weight 1.
    pub fn lattice(h0: Vec<f64>, kernel: KernelSpec) -> Result<Arc<Self>> {
        let m = (h0.len() as f64).sqrt().round() as usize;
        if m * m != h0.len() || m == 0 {
            return Err(CoreError::InvalidParameter(
                "kinetic matrix must be square".into(),
            ));
        }
        for i in 0..m {
            for j in 0..i {
                if (h0[i * m + j] - h0[j * m + i]).abs() > 1e-12 {
                    return Err(CoreError::InvalidParameter(
                        "kinetic matrix must be symmetric".into(),
                    ));
                }
            }
        }
        let interaction = match kernel {
            KernelSpec::Onsite { strength } => {
                let mut v = vec![0.0; m * m];
                for j in 0..m {
                    v[j * m + j] = strength;
                }
                InteractionKernel::DenseMatrix(v)
            }
            KernelSpec::Explicit(v) => {
                if v.len() != m * m {
                    return Err(CoreError::InvalidParameter(
                        "interaction matrix size mismatch".into(),
                    ));
                }
                for i in 0..m {
                    for j in 0..i {
                        if (v[i * m + j] - v[j * m + i]).abs() > 1e-12 {
                            return Err(CoreError::InvalidParameter(
                                "interaction matrix must be symmetric".into(),
                            ));
                        }
                    }
                }
                InteractionKernel::DenseMatrix(v)
            }
            KernelSpec::Zero => InteractionKernel::Zero,
            other => {
                return Err(CoreError::InvalidParameter(format!(
                    "kernel {other:?} is not available on the lattice backend"
                )))
            }
        };
        Ok(Arc::new(ModeSpace {
            backend: Backend::DenseLattice,
            dim: 1,
            grid: m,
            box_length: m as f64,
            weight: 1.0,
            kinetic: Kinetic::Dense(h0),
            interaction,
            k_index: Vec::new(),
            fft_fwd: None,
            fft_inv: None,
        }))
    }

    /// Nearest-neighbor ring of `m` sites with hopping amplitude `-hop`.
    pub fn ring_lattice(m: usize, hop: f64, kernel: KernelSpec) -> Result<Arc<Self>> {
        if m < 2 {
            return Err(CoreError::InvalidParameter(
                "ring needs at least 2 sites".into(),
            ));
        }
        let mut h0 = vec![0.0; m * m];
        for j in 0..m {
            let next = (j + 1) % m;
            h0[j * m + next] -= hop;
            h0[next * m + j] -= hop;
        }
        // On two sites the wrap-around doubles the single bond; keep one.
        if m == 2 {
            h0 = vec![0.0, -hop, -hop, 0.0];
        }
        Self::lattice(h0, kernel)
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis (torus) or lattice sites.
    pub fn grid_points(&self) -> usize {
        self.grid
    }

    /// Total number of modes, M^d.
    pub fn len(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// Quadrature weight of a single grid cell.
    pub fn quadrature_weight(&self) -> f64 {
        self.weight
    }

    pub fn interaction(&self) -> &InteractionKernel {
        &self.interaction
    }

    /// Signed Fourier mode index along `axis` for flattened index `idx`.
    pub fn mode_index(&self, idx: usize, axis: usize) -> i64 {
        let mut rem = idx;
        for _ in 0..axis {
            rem /= self.grid;
        }
        self.k_index[rem % self.grid]
    }

    /// Kinetic multiplier table eps(k) (torus backend only).
    pub fn kinetic_multiplier(&self) -> Option<&[f64]> {
        match &self.kinetic {
            Kinetic::Multiplier(eps) => Some(eps),
            Kinetic::Dense(_) => None,
        }
    }

    /// Kinetic matrix h0 (lattice backend only).
    pub fn kinetic_matrix(&self) -> Option<&[f64]> {
        match &self.kinetic {
            Kinetic::Dense(h0) => Some(h0),
            Kinetic::Multiplier(_) => None,
        }
    }

    /// Grid coordinate of flattened index `idx` along `axis`.
    pub fn coordinate(&self, idx: usize, axis: usize) -> f64 {
        let mut rem = idx;
        for _ in 0..axis {
            rem /= self.grid;
        }
        (rem % self.grid) as f64 * self.box_length / self.grid as f64
    }

    /// Forward transform with weight (L/M)^d, in place.
    pub fn fft_forward(&self, data: &mut [C64]) {
        let plan = self.fft_fwd.as_ref().expect("fft on lattice backend");
        self.fft_all_axes(plan, data);
        for z in data.iter_mut() {
            *z *= self.weight;
        }
    }

    /// Inverse transform with weight 1/L^d, in place.
    pub fn fft_inverse(&self, data: &mut [C64]) {
        let plan = self.fft_inv.as_ref().expect("fft on lattice backend");
        self.fft_all_axes(plan, data);
        let scale = self.box_length.powi(self.dim as i32).recip();
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn fft_all_axes(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [C64]) {
        let m = self.grid;
        let n = self.len();
        if self.dim == 1 {
            plan.process(data);
            return;
        }
        let mut line = vec![C64::new(0.0, 0.0); m];
        for axis in 0..self.dim {
            let stride = m.pow(axis as u32);
            let lines = n / m;
            for l in 0..lines {
                // Decompose the line counter into (outer block, inner offset).
                let inner = l % stride;
                let outer = l / stride;
                let base = outer * stride * m + inner;
                for (j, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + j * stride];
                }
                plan.process(&mut line);
                for (j, slot) in line.iter().enumerate() {
                    data[base + j * stride] = *slot;
                }
            }
        }
    }
}

/// Complex amplitude vector over a shared [`ModeSpace`].
#[derive(Clone)]
pub struct Field {
    space: Arc<ModeSpace>,
    amps: Vec<C64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Field({} modes, norm {:.6e})",
            self.amps.len(),
            self.norm()
        )
    }
}

impl Field {
    pub fn new(space: Arc<ModeSpace>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != space.len() {
            return Err(CoreError::DimensionMismatch {
                expected: space.len(),
                got: amps.len(),
            });
        }
        Ok(Field { space, amps })
    }

    pub fn zero(space: Arc<ModeSpace>) -> Self {
        let n = space.len();
        Field {
            space,
            amps: vec![C64::new(0.0, 0.0); n],
        }
    }

    /// Sample a scalar function of the grid coordinates.
    pub fn from_fn(space: Arc<ModeSpace>, f: impl Fn(&[f64]) -> C64) -> Self {
        let n = space.len();
        let d = space.dim();
        let mut amps = Vec::with_capacity(n);
        let mut x = vec![0.0; d];
        for idx in 0..n {
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = space.coordinate(idx, a);
            }
            amps.push(f(&x));
        }
        Field { space, amps }
    }

    pub fn space(&self) -> &Arc<ModeSpace> {
        &self.space
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm_sq(&self) -> f64 {
        self.space.quadrature_weight() * self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Rescale to unit norm.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            let s = n.recip();
            for z in self.amps.iter_mut() {
                *z *= s;
            }
        }
        self
    }

    pub fn scaled(mut self, c: C64) -> Self {
        for z in self.amps.iter_mut() {
            *z *= c;
        }
        self
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        check_same_space(self, other)?;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Field {
            space: self.space.clone(),
            amps,
        })
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        check_same_space(self, other)?;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Field {
            space: self.space.clone(),
            amps,
        })
    }

    /// self += c * other
    pub fn axpy(&mut self, c: C64, other: &Field) {
        for (a, b) in self.amps.iter_mut().zip(&other.amps) {
            *a += c * b;
        }
    }

    /// Pointwise product with another field.
    pub fn pointwise_mul(&self, other: &Field) -> Result<Field> {
        check_same_space(self, other)?;
        let amps = self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a * b)
            .collect();
        Ok(Field {
            space: self.space.clone(),
            amps,
        })
    }

    /// |f|^2 as a (real-valued) field.
    pub fn density(&self) -> Field {
        let amps = self
            .amps
            .iter()
            .map(|z| C64::new(z.norm_sqr(), 0.0))
            .collect();
        Field {
            space: self.space.clone(),
            amps,
        }
    }

    pub fn distance(&self, other: &Field) -> Result<f64> {
        Ok(self.sub(other)?.norm())
    }
}

pub(crate) fn check_same_space(f: &Field, g: &Field) -> Result<()> {
    if Arc::ptr_eq(&f.space, &g.space) {
        Ok(())
    } else {
        Err(CoreError::SpaceMismatch)
    }
}

/// L^2 pairing, conjugate-linear in the first argument.
pub fn inner(f: &Field, g: &Field) -> Result<C64> {
    check_same_space(f, g)?;
    let s: C64 = f.amps.iter().zip(&g.amps).map(|(a, b)| a.conj() * b).sum();
    Ok(s * f.space.quadrature_weight())
}

/// Pointwise complex conjugation J.
pub fn conj_field(f: &Field) -> Field {
    let amps = f.amps.iter().map(|z| z.conj()).collect();
    Field {
        space: f.space.clone(),
        amps,
    }
}

/// Convolution of `rho` with the interaction kernel of its space.
///
/// Torus: inverse-FFT(v_hat * FFT(rho)); lattice: weighted matrix-vector
/// product. `rho` may be any complex field.
pub fn convolve(rho: &Field) -> Field {
    let space = &rho.space;
    match space.interaction() {
        InteractionKernel::Zero => Field::zero(space.clone()),
        InteractionKernel::FourierMultiplier(vhat) => {
            let mut data = rho.amps.clone();
            space.fft_forward(&mut data);
            for (z, v) in data.iter_mut().zip(vhat) {
                *z *= *v;
            }
            space.fft_inverse(&mut data);
            Field {
                space: space.clone(),
                amps: data,
            }
        }
        InteractionKernel::DenseMatrix(v) => {
            let m = space.grid_points();
            let w = space.quadrature_weight();
            let mut out = vec![C64::new(0.0, 0.0); m];
            for (j, o) in out.iter_mut().enumerate() {
                let row = &v[j * m..(j + 1) * m];
                *o = row
                    .iter()
                    .zip(&rho.amps)
                    .map(|(vjk, r)| vjk * r)
                    .sum::<C64>()
                    * w;
            }
            Field {
                space: space.clone(),
                amps: out,
            }
        }
    }
}

/// Projection q_phi f = f - <phi, f> phi onto the complement of `phi`.
pub fn project_out(phi: &Field, f: &Field) -> Result<Field> {
    require_normalized(phi, 1e-8)?;
    let c = inner(phi, f)?;
    let mut out = f.clone();
    out.axpy(-c, phi);
    Ok(out)
}

/// Projection onto the complement of conj(phi): f - <J phi, f> J phi.
pub fn project_out_conj(phi: &Field, f: &Field) -> Result<Field> {
    require_normalized(phi, 1e-8)?;
    let phibar = conj_field(phi);
    let c = inner(&phibar, f)?;
    let mut out = f.clone();
    out.axpy(-c, &phibar);
    Ok(out)
}

pub(crate) fn require_normalized(phi: &Field, tol: f64) -> Result<()> {
    let dev = (phi.norm() - 1.0).abs();
    if dev > tol {
        Err(CoreError::Unnormalized { deviation: dev })
    } else {
        Ok(())
    }
}

/// Real self-adjoint one-body operator in one of three representations.
#[derive(Debug, Clone)]
pub enum Observable {
    /// Multiplication by a real function of position.
    PositionDiagonal(Vec<f64>),
    /// Real, even Fourier multiplier (torus backend only).
    MomentumMultiplier(Vec<f64>),
    /// Real symmetric matrix.
    Dense(Vec<f64>),
}

impl Observable {
    /// Validate the representation against a space.
    pub fn check(&self, space: &ModeSpace) -> Result<()> {
        match self {
            Observable::PositionDiagonal(a) => {
                if a.len() != space.len() {
                    return Err(CoreError::DimensionMismatch {
                        expected: space.len(),
                        got: a.len(),
                    });
                }
            }
            Observable::MomentumMultiplier(a) => {
                if space.backend() != Backend::SpectralTorus {
                    return Err(CoreError::BackendMismatch {
                        op: "momentum multiplier",
                        needed: "SpectralTorus",
                    });
                }
                if a.len() != space.len() {
                    return Err(CoreError::DimensionMismatch {
                        expected: space.len(),
                        got: a.len(),
                    });
                }
                // Evenness a(k) = a(-k), with -k taken modulo the grid.
                let m = space.grid_points();
                let n = space.len();
                for idx in 0..n {
                    let mut neg = 0;
                    let mut rem = idx;
                    let mut stride = 1;
                    for _ in 0..space.dim() {
                        let i = rem % m;
                        let flip = if i == 0 { 0 } else { m - i };
                        neg += flip * stride;
                        stride *= m;
                        rem /= m;
                    }
                    if (a[idx] - a[neg]).abs() > 1e-12 {
                        return Err(CoreError::InvalidParameter(
                            "momentum multiplier must be even in k".into(),
                        ));
                    }
                }
            }
            Observable::Dense(a) => {
                let n = space.len();
                if a.len() != n * n {
                    return Err(CoreError::DimensionMismatch {
                        expected: n * n,
                        got: a.len(),
                    });
                }
                for i in 0..n {
                    for j in 0..i {
                        if (a[i * n + j] - a[j * n + i]).abs() > 1e-12 {
                            return Err(CoreError::InvalidParameter(
                                "dense observable must be symmetric".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Identity observable on the given space.
    pub fn identity(space: &ModeSpace) -> Observable {
        Observable::PositionDiagonal(vec![1.0; space.len()])
    }
}

/// Apply a one-body observable to a field.
pub fn apply_observable(a: &Observable, f: &Field) -> Result<Field> {
    let space = &f.space;
    a.check(space)?;
    match a {
        Observable::PositionDiagonal(diag) => {
            let amps = f.amps.iter().zip(diag).map(|(z, d)| z * d).collect();
            Ok(Field {
                space: space.clone(),
                amps,
            })
        }
        Observable::MomentumMultiplier(mult) => {
            let mut data = f.amps.clone();
            space.fft_forward(&mut data);
            for (z, m) in data.iter_mut().zip(mult) {
                *z *= *m;
            }
            space.fft_inverse(&mut data);
            Ok(Field {
                space: space.clone(),
                amps: data,
            })
        }
        Observable::Dense(mat) => {
            let n = space.len();
            let mut out = vec![C64::new(0.0, 0.0); n];
            for (i, o) in out.iter_mut().enumerate() {
                let row = &mat[i * n..(i + 1) * n];
                *o = row.iter().zip(&f.amps).map(|(m, z)| m * z).sum();
            }
            Ok(Field {
                space: space.clone(),
                amps: out,
            })
        }
    }
}

/// Apply the kinetic operator (Fourier multiplier or dense matrix).
pub fn apply_kinetic(f: &Field) -> Field {
    let space = &f.space;
    match &space.kinetic {
        Kinetic::Multiplier(eps) => {
            let mut data = f.amps.clone();
            space.fft_forward(&mut data);
            for (z, e) in data.iter_mut().zip(eps) {
                *z *= *e;
            }
            space.fft_inverse(&mut data);
            Field {
                space: space.clone(),
                amps: data,
            }
        }
        Kinetic::Dense(h0) => {
            let m = space.grid_points();
            let mut out = vec![C64::new(0.0, 0.0); m];
            for (i, o) in out.iter_mut().enumerate() {
                let row = &h0[i * m..(i + 1) * m];
                *o = row.iter().zip(&f.amps).map(|(h, z)| h * z).sum();
            }
            Field {
                space: space.clone(),
                amps: out,
            }
        }
    }
}
