//! Dense complex linear algebra helpers on top of nalgebra.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Target residual for spectral decompositions.
pub const EIG_TARGET_RESIDUAL: f64 = 1e-12;
/// Residual above which a decomposition is rejected.
pub const EIG_ACCEPT_RESIDUAL: f64 = 1e-9;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn trace(a: &CMat) -> Complex64 {
    a.diagonal().iter().sum()
}

/// tr(a† b) without forming the product.
pub fn inner(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

pub fn ensure_square(a: &CMat) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub fn hermiticity_defect(a: &CMat) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    (u.adjoint() * u - identity(n)).norm()
}

pub fn ensure_unitary(u: &CMat, tol: f64) -> Result<()> {
    ensure_square(u)?;
    let defect = unitarity_defect(u);
    if defect > tol {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Spectral decomposition of a Hermitian matrix with eigenvalues in
/// descending order; column `k` of `vectors` belongs to `values[k]`.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    /// Uses nalgebra's tridiagonal QR and falls back to cyclic Jacobi when
    /// that produces non-finite values or a poor residual (it does on some
    /// exactly sparse, low-rank inputs).
    pub fn new(a: &CMat) -> Result<Self> {
        let n = ensure_square(a)?;
        let h = hermitian_part(a);
        let eig = nalgebra::linalg::SymmetricEigen::new(h.clone());
        let (values, vectors) = if eig.eigenvalues.iter().all(|v| v.is_finite())
            && eig.eigenvectors.iter().all(|z| z.re.is_finite() && z.im.is_finite())
            && eigen_residual(&h, &eig.eigenvalues.as_slice().to_vec(), &eig.eigenvectors)
                <= EIG_TARGET_RESIDUAL * h.norm().max(f64::MIN_POSITIVE) * (n as f64).sqrt()
        {
            (eig.eigenvalues.as_slice().to_vec(), eig.eigenvectors)
        } else {
            jacobi_eigen(&h)?
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| values[j].total_cmp(&values[i]));
        let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let mut sorted_vectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            sorted_vectors.set_column(dst, &vectors.column(src));
        }
        Ok(HermitianEigen {
            values: sorted,
            vectors: sorted_vectors,
        })
    }

    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let s = f(v);
            scaled.column_mut(k).scale_mut(s);
        }
        scaled * self.vectors.adjoint()
    }
}

impl HermitianEigen {
    /// V f(Λ) V† for a complex-valued spectral function.
    pub fn reconstruct_complex(&self, f: impl Fn(f64) -> Complex64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let mut column = scaled.column_mut(k);
            column *= f(v);
        }
        scaled * self.vectors.adjoint()
    }
}

fn eigen_residual(h: &CMat, values: &[f64], vectors: &CMat) -> f64 {
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        let mut column = scaled.column_mut(k);
        column *= c(v, 0.0);
    }
    (h * vectors - scaled).norm()
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
pub fn jacobi_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = ensure_square(h)?;
    let mut a = h.clone();
    let mut v = identity(n);
    let scale = h.norm();
    if scale == 0.0 {
        return Ok((vec![0.0; n], v));
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|j| (0..n).filter(move |&i| i != j).map(move |i| (i, j)))
            .map(|(i, j)| a[(i, j)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            let values = (0..n).map(|k| a[(k, k)].re).collect();
            return Ok((values, v));
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                let phase = apq / mag;
                let theta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                // G = diag(1, conj(phase)) · [[c, s], [-s, c]]
                let gpp = c(cs, 0.0);
                let gpq = c(sn, 0.0);
                let gqp = phase.conj() * -sn;
                let gqq = phase.conj() * cs;
                for k in 0..n {
                    let (x, y) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = x * gpp + y * gqp;
                    a[(k, q)] = x * gpq + y * gqq;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = gpp.conj() * x + gqp.conj() * y;
                    a[(q, k)] = gpq.conj() * x + gqq.conj() * y;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
                for k in 0..n {
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = x * gpp + y * gqp;
                    v[(k, q)] = x * gpq + y * gqq;
                }
            }
        }
    }
    Err(Error::EigenSolver {
        residual: f64::INFINITY,
    })
}

/// exp(-i h t) for Hermitian `h`.
pub fn expm_hermitian(h: &CMat, t: f64) -> Result<CMat> {
    let eig = HermitianEigen::new(h)?;
    let n = h.nrows();
    let mut scaled = eig.vectors.clone();
    for k in 0..n {
        let phase = Complex64::from_polar(1.0, -eig.values[k] * t);
        let mut column = scaled.column_mut(k);
        column *= phase;
    }
    Ok(scaled * eig.vectors.adjoint())
}

/// Order complex eigenvalues by descending magnitude, then ascending phase.
pub fn spectral_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then_with(|| a.arg().total_cmp(&b.arg()))
}

/// Full spectrum of a general square matrix via complex Schur decomposition.
pub fn general_eigenvalues(a: &CMat) -> Result<Vec<Complex64>> {
    ensure_square(a)?;
    let scale = a.norm().max(1.0);
    let schur = nalgebra::linalg::Schur::try_new(a.clone(), EIG_TARGET_RESIDUAL * 1e-2, 100_000)
        .ok_or(Error::EigenSolver {
            residual: f64::INFINITY,
        })?;
    let (q, t) = schur.unpack();
    let residual = (&q * &t * q.adjoint() - a).norm() / scale;
    if residual > EIG_ACCEPT_RESIDUAL {
        return Err(Error::EigenSolver { residual });
    }
    let mut values: Vec<Complex64> = t.diagonal().iter().copied().collect();
    values.sort_by(spectral_order);
    Ok(values)
}

/// Singular values in descending order together with `(W, V)` such that
/// `a = W diag(s) V†`.
pub struct Svd {
    pub left: CMat,
    pub singular_values: Vec<f64>,
    pub right: CMat,
}

pub fn svd(a: &CMat) -> Svd {
    let decomposition = a.clone().svd(true, true);
    let n = decomposition.singular_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        decomposition.singular_values[j].total_cmp(&decomposition.singular_values[i])
    });
    let u = decomposition.u.expect("left singular vectors requested");
    let v_t = decomposition.v_t.expect("right singular vectors requested");
    let mut left = CMat::zeros(u.nrows(), n);
    let mut right = CMat::zeros(v_t.ncols(), n);
    let mut singular_values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).adjoint());
        singular_values.push(decomposition.singular_values[src]);
    }
    Svd {
        left,
        singular_values,
        right,
    }
}

pub fn condition_number(a: &CMat) -> f64 {
    let s = svd(a).singular_values;
    match (s.first(), s.last()) {
        (Some(&max), Some(&min)) if min > 0.0 => max / min,
        _ => f64::INFINITY,
    }
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Embed a single-spin operator on `spin` (1-based, spin 1 is the leftmost
/// tensor factor) into an `n`-spin space.
pub fn embed(op: &CMat, spin: usize, n: usize) -> CMat {
    let mut out = identity(1);
    for s in 1..=n {
        out = if s == spin {
            kron(&out, op)
        } else {
            kron(&out, &identity(2))
        };
    }
    out
}

/// Single-spin rotation exp(-i angle (cos phase σx + sin phase σy)/2).
pub fn xy_rotation(phase: f64, angle: f64) -> CMat {
    let (s, cs) = (angle / 2.0).sin_cos();
    let off = Complex64::from_polar(s, -phase) * -I;
    CMat::from_row_slice(
        2,
        2,
        &[c(cs, 0.0), off, -off.conj(), c(cs, 0.0)],
    )
}

/// Rotation of a single spin about the unit `axis` by `angle` radians.
pub fn axis_rotation(axis: [f64; 3], angle: f64) -> CMat {
    let (s, cs) = (angle / 2.0).sin_cos();
    let [x, y, z] = axis;
    CMat::from_row_slice(
        2,
        2,
        &[
            c(cs, -s * z),
            c(-s * y, -s * x),
            c(s * y, -s * x),
            c(cs, s * z),
        ],
    )
}

/// Largest |tr(a† b)| / sqrt(tr(a†a) tr(b†b)), the global-phase-free overlap.
pub fn phase_free_correlation(a: &CMat, b: &CMat) -> Result<f64> {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-norm operator"));
    }
    Ok(inner(a, b).norm() / (na * nb))
}

/// Multiply `b` by the phase that makes tr(a† b) real and nonnegative.
pub fn align_phase(a: &CMat, b: &CMat) -> CMat {
    let overlap = inner(a, b);
    if overlap.norm() == 0.0 {
        return b.clone();
    }
    b * Complex64::from_polar(1.0, -overlap.arg())
}
