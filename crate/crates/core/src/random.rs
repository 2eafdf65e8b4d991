//! Seeded random matrices and channels for tests, fixtures and benchmarks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{c, CMat, HermitianEigen};
use crate::superop::KrausSet;

/// Matrix of independent standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Hermitian matrix with Gaussian entries (GUE-like).
pub fn hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let g = ginibre(n, n, rng);
    (&g + g.adjoint()).scale(0.5)
}

/// Haar-random unitary from the QR decomposition of a Ginibre matrix.
pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMat {
    let qr = ginibre(n, n, rng).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        let mut column = q.column_mut(k);
        column *= phase;
    }
    q
}

/// Random trace-preserving Kraus set with `rank` operators on `n_spins`.
pub fn cptp_kraus<R: Rng + ?Sized>(n_spins: usize, rank: usize, rng: &mut R) -> KrausSet {
    let dim = 1 << n_spins;
    let ops: Vec<CMat> = (0..rank.max(1)).map(|_| ginibre(dim, dim, rng)).collect();
    let m = ops
        .iter()
        .fold(CMat::zeros(dim, dim), |acc, a| acc + a.adjoint() * a);
    let g = HermitianEigen::new(&m)
        .expect("square")
        .reconstruct(|v| 1.0 / v.sqrt());
    KrausSet::from_operators(ops.iter().map(|a| a * &g).collect()).expect("valid dimensions")
}
