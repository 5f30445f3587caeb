//! Large-N scrambling functionals: the OTOC scalar and its square, the
//! symplectic-commutator form, multi-time covariances, the
//! out-of-time-ordered Wick rule, characteristic functions, Gaussian
//! expectations, the initial scrambling rate and butterfly-velocity fits.
//!
//! The primitive everything else wraps is the real scalar Im<g0, f_t> with
//! g0 = q_0 B phi_0 and f_t the backward-propagated centered vector
//! L_(t;0) q_t A phi_t. The large-N OTOC equals 4 (Im<g0, f_t>)^2; the
//! prefactor is fixed by the exact t = 0 product-state value
//! |<phi_0, [B, A] phi_0>|^2 = 4 (Im<B phi_0, A phi_0>)^2 and is confirmed
//! against the finite-N oracle in the acceptance suite.

use ndarray::Array2;
use ndarray_linalg::{Eigh, UPLO};
use num_complex::Complex64 as C64;

use crate::bogoliubov::{generator_apply, s_inner, LPropagator, PairField};
use crate::space::{apply_observable, inner, project_out, Field, Observable};
use crate::{CoreError, Result};

/// Multi-time covariance: complex symmetric (not Hermitian) m x m matrix
/// with entries <f_i, f_j> for i <= j mirrored to the lower triangle.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    times: Vec<f64>,
    entries: Vec<C64>,
}

impl CovarianceMatrix {
    pub fn from_entries(times: Vec<f64>, entries: Vec<C64>) -> Result<Self> {
        let m = times.len();
        if entries.len() != m * m {
            return Err(CoreError::DimensionMismatch {
                expected: m * m,
                got: entries.len(),
            });
        }
        Ok(CovarianceMatrix { times, entries })
    }

    pub fn order(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.entries[i * self.order() + j]
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn max_imag(&self) -> f64 {
        self.entries.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.entries.iter().map(|z| z.re).collect()
    }
}

/// A perfect matching of {0, ..., m-1} in canonical order: each pair is
/// sorted and first elements increase across pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
}

/// The centered, propagated vector f_t = L_(t;0) q_t A phi_t.
pub fn propagated_vector(prop: &LPropagator, a: &Observable, t: f64) -> Result<Field> {
    let phi_t = prop.trajectory().state_at(t)?;
    let h = project_out(phi_t, &apply_observable(a, phi_t)?)?;
    prop.propagate_l(&h, t)
}

/// The scrambling scalar Im<q_0 B phi_0, L_(t;0) q_t A phi_t>.
pub fn otoc_scalar(prop: &LPropagator, a: &Observable, b: &Observable, t: f64) -> Result<f64> {
    let phi0 = prop.trajectory().snapshot(0);
    let g0 = project_out(phi0, &apply_observable(b, phi0)?)?;
    let ft = propagated_vector(prop, a, t)?;
    Ok(inner(&g0, &ft)?.im)
}

/// Uncentered variant Im<B phi_0, L_(t;0) A phi_t>; agrees with
/// [`otoc_scalar`] because the centering terms vanish through the
/// condensate covariance and form preservation of the flow.
pub fn otoc_scalar_uncentered(
    prop: &LPropagator,
    a: &Observable,
    b: &Observable,
    t: f64,
) -> Result<f64> {
    let phi0 = prop.trajectory().snapshot(0);
    let phi_t = prop.trajectory().state_at(t)?;
    let bphi = apply_observable(b, phi0)?;
    let lft = prop.propagate_l(&apply_observable(a, phi_t)?, t)?;
    Ok(inner(&bphi, &lft)?.im)
}

/// Large-N OTOC limit 4 (Im<g0, f_t>)^2; nonnegative.
pub fn otoc(prop: &LPropagator, a: &Observable, b: &Observable, t: f64) -> Result<f64> {
    let s = otoc_scalar(prop, a, b, t)?;
    Ok(4.0 * s * s)
}

/// The symplectic commutator form <(phi0, J phi0), [B, Theta A Theta^{-1}]
/// (phi0, J phi0)>_S divided by i (a real number; the form itself is
/// purely imaginary). Equals 4 Im<g0, f_t> up to sign.
pub fn otoc_symplectic_form(
    prop: &LPropagator,
    a: &Observable,
    b: &Observable,
    t: f64,
) -> Result<f64> {
    let phi0 = prop.trajectory().snapshot(0);
    let p = PairField::j_real(phi0);

    let apply_pair = |o: &Observable, q: &PairField| -> Result<PairField> {
        PairField::new(
            apply_observable(o, &q.first)?,
            apply_observable(o, &q.second)?,
        )
    };
    // conjugated observable: Theta(t;0) A Theta(t;0)^{-1}
    let tilde_a = |q: &PairField| -> Result<PairField> {
        let back = prop.propagate_pair_inverse(q, t)?;
        let mid = apply_pair(a, &back)?;
        prop.propagate_pair(&mid, t)
    };
    let term1 = apply_pair(b, &tilde_a(&p)?)?;
    let term2 = tilde_a(&apply_pair(b, &p)?)?;
    let comm = PairField::new(
        term1.first.sub(&term2.first)?,
        term1.second.sub(&term2.second)?,
    )?;
    let z = s_inner(&p, &comm)?;
    Ok(z.im)
}

/// Multi-time covariance matrix of the observable `a` at the given times.
pub fn sigma_matrix(prop: &LPropagator, a: &Observable, times: &[f64]) -> Result<CovarianceMatrix> {
    let m = times.len();
    let vecs: Vec<Field> = times
        .iter()
        .map(|&t| propagated_vector(prop, a, t))
        .collect::<Result<_>>()?;
    let mut entries = vec![C64::new(0.0, 0.0); m * m];
    for i in 0..m {
        for j in i..m {
            let z = inner(&vecs[i], &vecs[j])?;
            entries[i * m + j] = z;
            entries[j * m + i] = z;
        }
    }
    CovarianceMatrix::from_entries(times.to_vec(), entries)
}

/// All (m-1)!! canonical pairings of {0, ..., m-1}; m even, m <= 12.
pub fn enumerate_pairings(m: usize) -> Result<Vec<Pairing>> {
    if m % 2 != 0 {
        return Err(CoreError::OddOrder(m));
    }
    if m > 12 {
        return Err(CoreError::PairingCap(m));
    }
    fn recurse(avail: &[usize], current: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
        if avail.is_empty() {
            out.push(Pairing {
                pairs: current.clone(),
            });
            return;
        }
        let first = avail[0];
        for pos in 1..avail.len() {
            let partner = avail[pos];
            let rest: Vec<usize> = avail
                .iter()
                .copied()
                .filter(|&x| x != first && x != partner)
                .collect();
            current.push((first, partner));
            recurse(&rest, current, out);
            current.pop();
        }
    }
    let avail: Vec<usize> = (0..m).collect();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(m / 2);
    recurse(&avail, &mut current, &mut out);
    Ok(out)
}

/// Out-of-time-ordered Wick rule: 0 for odd m, the pairing sum of products
/// of covariance entries for even m.
pub fn wick_moment(sigma: &CovarianceMatrix, m: usize) -> Result<C64> {
    if m != sigma.order() {
        return Err(CoreError::DimensionMismatch {
            expected: sigma.order(),
            got: m,
        });
    }
    if m % 2 != 0 {
        return Ok(C64::new(0.0, 0.0));
    }
    let pairings = enumerate_pairings(m)?;
    let mut total = C64::new(0.0, 0.0);
    for p in &pairings {
        let mut prod = C64::new(1.0, 0.0);
        for &(i, j) in &p.pairs {
            prod *= sigma.entry(i, j);
        }
        total += prod;
    }
    Ok(total)
}

/// Limiting characteristic value exp(-lambda^T Sigma lambda / 2) with the
/// complex symmetric covariance.
pub fn char_function(sigma: &CovarianceMatrix, lambda: &[f64]) -> Result<C64> {
    let m = sigma.order();
    if lambda.len() != m {
        return Err(CoreError::DimensionMismatch {
            expected: m,
            got: lambda.len(),
        });
    }
    let mut quad = C64::new(0.0, 0.0);
    for i in 0..m {
        for j in 0..m {
            quad += sigma.entry(i, j) * lambda[i] * lambda[j];
        }
    }
    Ok((quad * -0.5).exp())
}

/// Gauss-Hermite nodes and weights for integrals against exp(-t^2).
fn gauss_hermite(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut jac = Array2::<f64>::zeros((n, n));
    for i in 1..n {
        let beta = (i as f64 / 2.0).sqrt();
        jac[[i - 1, i]] = beta;
        jac[[i, i - 1]] = beta;
    }
    let (vals, vecs) = jac
        .eigh(UPLO::Lower)
        .map_err(|e| CoreError::Eigen(e.to_string()))?;
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let nodes = vals.to_vec();
    let weights = (0..n)
        .map(|i| sqrt_pi * vecs[[0, i]] * vecs[[0, i]])
        .collect();
    Ok((nodes, weights))
}

fn cholesky(re: &[f64], m: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = re[i * m + j];
            for k in 0..j {
                sum -= l[i * m + k] * l[j * m + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(CoreError::NotPositiveDefinite);
                }
                l[i * m + i] = sum.sqrt();
            } else {
                l[i * m + j] = sum / l[j * m + j];
            }
        }
    }
    Ok(l)
}

/// E[ g(x_1) ... g(x_m) ] for x ~ N(0, Re Sigma) by 64-node tensor
/// Gauss-Hermite quadrature; m <= 3.
///
/// Requires Re Sigma positive definite and a negligible imaginary part
/// (the covariance is complex in general; a large imaginary part means the
/// Gaussian picture does not apply and is reported as an error).
pub fn gaussian_expectation(sigma: &CovarianceMatrix, g: &dyn Fn(f64) -> f64) -> Result<f64> {
    let m = sigma.order();
    if m == 0 || m > 3 {
        return Err(CoreError::InvalidParameter(format!(
            "gaussian expectation limited to 1 <= m <= 3, got {m}"
        )));
    }
    let max_im = sigma.max_imag();
    if max_im >= 1e-6 {
        return Err(CoreError::ImaginaryCovariance(max_im));
    }
    let re = sigma.real_part();
    let l = cholesky(&re, m)?;
    let (nodes, weights) = gauss_hermite(64)?;
    let n = nodes.len();
    let norm = std::f64::consts::PI.powf(-(m as f64) / 2.0);
    let sqrt2 = std::f64::consts::SQRT_2;

    let mut total = 0.0;
    let mut idx = vec![0usize; m];
    loop {
        let mut w = 1.0;
        for &i in &idx {
            w *= weights[i];
        }
        let mut val = 1.0;
        for row in 0..m {
            let mut x = 0.0;
            for (col, &i) in idx.iter().enumerate().take(row + 1) {
                x += l[row * m + col] * nodes[i];
            }
            val *= g(sqrt2 * x);
        }
        total += w * val;
        // odometer over the tensor grid
        let mut carry = true;
        for slot in idx.iter_mut() {
            if carry {
                *slot += 1;
                if *slot == n {
                    *slot = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }
    Ok(norm * total)
}

/// Initial scrambling rate Re<phi_0, B [h + K1~ - K2~ J, A] phi_0>.
///
/// This is the t = 0 slope of [`otoc_scalar`]: the scalar expands as
/// Im<B phi_0, A phi_0> + t * rate + O(t^2).
pub fn initial_rate(phi0: &Field, a: &Observable, b: &Observable) -> Result<f64> {
    let a_phi = apply_observable(a, phi0)?;
    let g_a = generator_apply(phi0, &a_phi)?;
    let g_phi = generator_apply(phi0, phi0)?;
    let a_g = apply_observable(a, &g_phi)?;
    let comm = g_a.sub(&a_g)?;
    let b_phi = apply_observable(b, phi0)?;
    Ok(inner(&b_phi, &comm)?.re)
}

/// Least-squares fit of log y = c + rate * t over the window; returns
/// (rate, r^2). Diagnostic only.
pub fn butterfly_fit(series: &[(f64, f64)], window: (f64, f64)) -> Result<(f64, f64)> {
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    for &(t, y) in series {
        if t >= window.0 - 1e-12 && t <= window.1 + 1e-12 {
            if y <= 0.0 {
                return Err(CoreError::NonpositiveFitValue(t));
            }
            ts.push(t);
            ys.push(y.ln());
        }
    }
    let n = ts.len() as f64;
    if ts.len() < 2 {
        return Err(CoreError::InvalidParameter(
            "fit window contains fewer than 2 points".into(),
        ));
    }
    let tbar = ts.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - tbar) * (t - tbar)).sum();
    let sxy: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (t - tbar) * (y - ybar))
        .sum();
    let rate = sxy / sxx;
    let c = ybar - rate * tbar;
    let ss_res: f64 = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y - c - rate * t).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar) * (y - ybar)).sum();
    let r2 = if ss_tot < 1e-30 {
        1.0
    } else {
        1.0 - ss_res / ss_tot
    };
    Ok((rate, r2))
}
