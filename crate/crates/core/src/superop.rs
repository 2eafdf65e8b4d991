//! Channel algebra on columnized density matrices.
//!
//! `col` stacks columns, so `col(M)[j*N + i] = M[i, j]` and a unitary acts as
//! `col(U ρ U†) = (Ū ⊗ U) col(ρ)`. Supermatrix row/column indices are pairs
//! `(a, b) = a*N + b` with `a` the index of the conjugated factor.

use std::fmt;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, CVec, HermitianEigen};
use crate::spinsys;

/// Unitarity tolerance for matrices handed to [`unitary_superop`].
pub const UNITARY_TOL: f64 = 1e-10;
/// Relative clamp threshold for Choi eigenvalues in [`kraus_of_choi`].
pub const KRAUS_CLAMP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Zeeman,
    ProductOperator,
}

impl Basis {
    pub fn code(self) -> u8 {
        match self {
            Basis::Zeeman => 0,
            Basis::ProductOperator => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Basis> {
        match code {
            0 => Some(Basis::Zeeman),
            1 => Some(Basis::ProductOperator),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::Zeeman => "zeeman",
            Basis::ProductOperator => "product_operator",
        }
    }

    pub fn from_name(name: &str) -> Option<Basis> {
        match name {
            "zeeman" => Some(Basis::Zeeman),
            "product_operator" => Some(Basis::ProductOperator),
            _ => None,
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// An N²×N² matrix acting on columnized N×N operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Supermatrix {
    matrix: CMat,
    basis: Basis,
}

impl Supermatrix {
    pub fn new(matrix: CMat, basis: Basis) -> Result<Self> {
        let d = linalg::ensure_square(&matrix)?;
        let n = (d as f64).sqrt().round() as usize;
        if n * n != d {
            return Err(Error::InvalidInput(format!(
                "supermatrix dimension {d} is not a perfect square"
            )));
        }
        spinsys::spins_for_dim(n)?;
        Ok(Supermatrix { matrix, basis })
    }

    pub fn identity(n_spins: usize, basis: Basis) -> Result<Self> {
        spinsys::check_spin_count(n_spins)?;
        let d = 1usize << (2 * n_spins);
        Ok(Supermatrix {
            matrix: linalg::identity(d),
            basis,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    /// Hilbert-space dimension N.
    pub fn hilbert_dim(&self) -> usize {
        (self.matrix.nrows() as f64).sqrt().round() as usize
    }

    pub fn n_spins(&self) -> usize {
        self.hilbert_dim().trailing_zeros() as usize
    }

    pub fn in_basis(&self, basis: Basis) -> Supermatrix {
        change_basis(self, basis)
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &Supermatrix) -> Result<Supermatrix> {
        let next = next.in_basis(self.basis);
        if next.matrix.nrows() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                found: next.matrix.nrows(),
            });
        }
        Ok(Supermatrix {
            matrix: &next.matrix * &self.matrix,
            basis: self.basis,
        })
    }

    /// Apply the map to an operator given in the Zeeman basis.
    pub fn apply(&self, rho: &CMat) -> Result<CMat> {
        let n = self.hilbert_dim();
        if rho.nrows() != n || rho.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rho.nrows(),
            });
        }
        let z = self.in_basis(Basis::Zeeman);
        uncol(&(&z.matrix * col(rho)))
    }

    pub fn scale(&self, factor: f64) -> Supermatrix {
        Supermatrix {
            matrix: self.matrix.scale(factor),
            basis: self.basis,
        }
    }
}

pub fn col(m: &CMat) -> CVec {
    CVec::from_column_slice(m.as_slice())
}

pub fn uncol(v: &CVec) -> Result<CMat> {
    let len = v.len();
    let n = (len as f64).sqrt().round() as usize;
    if n * n != len {
        return Err(Error::InvalidInput(format!(
            "vector length {len} is not a perfect square"
        )));
    }
    Ok(CMat::from_column_slice(n, n, v.as_slice()))
}

/// Ū ⊗ U in the Zeeman basis.
pub fn unitary_superop(u: &CMat) -> Result<Supermatrix> {
    linalg::ensure_unitary(u, UNITARY_TOL)?;
    Supermatrix::new(linalg::kron(&u.conjugate(), u), Basis::Zeeman)
}

/// The index rearrangement T[(a,b),(c,d)] = S[(d,b),(c,a)]. It is its own
/// inverse.
fn rearrange(s: &CMat) -> CMat {
    let d = s.nrows();
    let n = (d as f64).sqrt().round() as usize;
    CMat::from_fn(d, d, |r, col_index| {
        let (a, b) = (r / n, r % n);
        let (cc, dd) = (col_index / n, col_index % n);
        s[(dd * n + b, cc * n + a)]
    })
}

/// Choi matrix: Hermitian for Hermiticity-preserving maps, positive
/// semidefinite exactly for completely positive ones.
#[derive(Debug, Clone)]
pub struct ChoiMatrix {
    matrix: CMat,
    eigen: OnceLock<HermitianEigen>,
}

impl PartialEq for ChoiMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl ChoiMatrix {
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        let d = linalg::ensure_square(&matrix)?;
        let n = (d as f64).sqrt().round() as usize;
        if n * n != d {
            return Err(Error::InvalidInput(format!(
                "Choi dimension {d} is not a perfect square"
            )));
        }
        spinsys::spins_for_dim(n)?;
        Ok(ChoiMatrix {
            matrix,
            eigen: OnceLock::new(),
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn hilbert_dim(&self) -> usize {
        (self.matrix.nrows() as f64).sqrt().round() as usize
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.matrix)
    }

    /// Fails unless the matrix is Hermitian to `1e-10` relative to its norm.
    pub fn ensure_hermitian(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > 1e-10 * self.matrix.norm().max(1.0) {
            return Err(Error::NotHermitian { defect });
        }
        Ok(())
    }

    /// Spectral decomposition of the Hermitian part, computed once.
    pub fn eigen(&self) -> &HermitianEigen {
        self.eigen.get_or_init(|| {
            HermitianEigen::new(&self.matrix).expect("Choi matrix is square")
        })
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen().values
    }

    /// Σ_b T[(c,b),(a,b)], which equals (Σ_k A_k†A_k)ᵀ.
    pub fn partial_trace(&self) -> CMat {
        partial_trace_inner(&self.matrix)
    }

    /// ‖Tr₂ T − I‖_F, equal to ‖Σ_k A_k†A_k − I‖_F.
    pub fn tp_defect(&self) -> f64 {
        let n = self.hilbert_dim();
        (self.partial_trace() - linalg::identity(n)).norm()
    }
}

fn partial_trace_inner(t: &CMat) -> CMat {
    let n = (t.nrows() as f64).sqrt().round() as usize;
    CMat::from_fn(n, n, |cc, a| (0..n).map(|b| t[(cc * n + b, a * n + b)]).sum())
}

/// X ⊗ I_N.
fn outer_kron_identity(x: &CMat) -> CMat {
    linalg::kron(x, &linalg::identity(x.nrows()))
}

pub fn choi_of(s: &Supermatrix) -> ChoiMatrix {
    let z = s.in_basis(Basis::Zeeman);
    ChoiMatrix {
        matrix: rearrange(&z.matrix),
        eigen: OnceLock::new(),
    }
}

pub fn super_of_choi(t: &ChoiMatrix) -> Supermatrix {
    Supermatrix {
        matrix: rearrange(&t.matrix),
        basis: Basis::Zeeman,
    }
}

/// A negative Choi eigenvalue and its eigenvector.
#[derive(Debug, Clone)]
pub struct NegativeComponent {
    pub eigenvalue: f64,
    pub eigenvector: CVec,
}

#[derive(Debug, Clone)]
pub struct KrausSet {
    operators: Vec<CMat>,
    amplitudes: Vec<f64>,
    negativity: Vec<NegativeComponent>,
}

impl KrausSet {
    /// Wrap explicit operators. They are stored as given; amplitudes are
    /// ‖A_k‖/√N and the set is not reordered.
    pub fn from_operators(operators: Vec<CMat>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::InvalidInput("empty Kraus set".into()))?;
        let n = linalg::ensure_square(first)?;
        spinsys::spins_for_dim(n)?;
        for op in &operators {
            if op.nrows() != n || op.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: op.nrows(),
                });
            }
        }
        let amplitudes = operators
            .iter()
            .map(|a| a.norm() / (n as f64).sqrt())
            .collect();
        Ok(KrausSet {
            operators,
            amplitudes,
            negativity: Vec::new(),
        })
    }

    /// The set {√p_k U_k}.
    pub fn from_weighted_unitaries(items: impl IntoIterator<Item = (f64, CMat)>) -> Result<Self> {
        let operators = items
            .into_iter()
            .map(|(p, u)| u * c(p.sqrt(), 0.0))
            .collect();
        Self::from_operators(operators)
    }

    pub fn operators(&self) -> &[CMat] {
        &self.operators
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn negativity(&self) -> &[NegativeComponent] {
        &self.negativity
    }

    pub fn hilbert_dim(&self) -> usize {
        self.operators[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// ‖Σ_k A_k†A_k − I‖_F.
    pub fn tp_defect(&self) -> f64 {
        let n = self.hilbert_dim();
        let sum = self
            .operators
            .iter()
            .fold(CMat::zeros(n, n), |acc, a| acc + a.adjoint() * a);
        (sum - linalg::identity(n)).norm()
    }
}

/// Kraus operators from the nonnegative part of a Choi spectrum.
///
/// `tol` is relative to the largest eigenvalue magnitude: eigenvalues with
/// |λ| < tol·λ_max are dropped, more negative ones are reported.
pub fn kraus_of_choi(t: &ChoiMatrix, tol: f64) -> Result<KrausSet> {
    t.ensure_hermitian()?;
    let eig = t.eigen();
    let scale = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = tol * scale;
    let n = t.hilbert_dim();
    let mut operators = Vec::new();
    let mut amplitudes = Vec::new();
    let mut negativity = Vec::new();
    for (k, &lambda) in eig.values.iter().enumerate() {
        let v: CVec = eig.vectors.column(k).into_owned();
        if lambda > threshold {
            operators.push(uncol(&(v * c(lambda.sqrt(), 0.0)))?);
            amplitudes.push((lambda / n as f64).sqrt());
        } else if lambda < -threshold {
            negativity.push(NegativeComponent {
                eigenvalue: lambda,
                eigenvector: v,
            });
        }
    }
    if operators.is_empty() {
        return Err(Error::InvalidInput(
            "Choi matrix has no positive eigenvalues".into(),
        ));
    }
    negativity.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
    Ok(KrausSet {
        operators,
        amplitudes,
        negativity,
    })
}

/// Σ_k Ā_k ⊗ A_k.
pub fn super_of_kraus(k: &KrausSet) -> Supermatrix {
    let n = k.hilbert_dim();
    let mut m = CMat::zeros(n * n, n * n);
    for a in &k.operators {
        m += linalg::kron(&a.conjugate(), a);
    }
    Supermatrix {
        matrix: m,
        basis: Basis::Zeeman,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Positivity {
    pub value: f64,
    /// Set when the spectrum has no positive part and the ratio is undefined.
    pub diagnostic: Option<String>,
}

/// (Σ λ) / (Σ_{λ>0} λ) over the Choi spectrum.
pub fn positivity(t: &ChoiMatrix) -> Result<Positivity> {
    t.ensure_hermitian()?;
    Ok(positivity_of_spectrum(t.eigenvalues()))
}

pub fn positivity_of_spectrum(values: &[f64]) -> Positivity {
    let total: f64 = values.iter().sum();
    let positive: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    if positive <= 0.0 {
        return Positivity {
            value: 0.0,
            diagnostic: Some(format!(
                "no positive Choi eigenvalues (sum of spectrum {total:.3e})"
            )),
        };
    }
    Positivity {
        value: total / positive,
        diagnostic: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionStep {
    pub iteration: usize,
    /// Magnitude of the most negative eigenvalue removed by the clamp.
    pub psd_defect: f64,
    /// ‖Tr₂ T − I‖_F of the clamped iterate.
    pub tp_defect: f64,
    /// Frobenius distance of the current iterate from the input Choi matrix.
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct CptpProjection {
    pub supermatrix: Supermatrix,
    pub converged: bool,
    pub iterations: usize,
    pub log: Vec<ProjectionStep>,
    /// Final minimum Choi eigenvalue and TP defect of the output.
    pub min_eigenvalue: f64,
    pub tp_defect: f64,
}

/// Nearest completely positive trace-preserving map in the Frobenius norm of
/// the Choi matrix.
///
/// Dykstra's alternating projections between the PSD cone (eigenvalue clamp)
/// and the affine trace-preserving set T ↦ T − (Tr₂T − I)⊗I/N. Iteration stops
/// once the clamped iterate is trace preserving to `tol`; a final congruence
/// by (Tr₂T)^{-1/2} ⊗ I removes the residual TP defect without leaving the
/// cone.
pub fn project_cptp(s: &Supermatrix, tol: f64, max_iter: usize) -> Result<CptpProjection> {
    let basis = s.basis();
    let input = choi_of(s);
    let defect = input.hermiticity_defect();
    if defect > 1e-8 * input.matrix.norm().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    let n = input.hilbert_dim();
    let target = linalg::hermitian_part(&input.matrix);
    let eye = linalg::identity(n);

    let mut x = target.clone();
    let mut p = CMat::zeros(x.nrows(), x.ncols());
    let mut clamped = x.clone();
    let mut log = Vec::new();
    let mut converged = false;
    for iteration in 1..=max_iter.max(1) {
        let shifted = &x + &p;
        let eig = HermitianEigen::new(&shifted)?;
        let psd_defect = eig.values.last().map_or(0.0, |&v| (-v).max(0.0));
        clamped = eig.reconstruct(|v| v.max(0.0));
        p = shifted - &clamped;
        let tp_error = partial_trace_inner(&clamped) - &eye;
        let tp_defect = tp_error.norm();
        log.push(ProjectionStep {
            iteration,
            psd_defect,
            tp_defect,
            distance: (&clamped - &target).norm(),
        });
        if tp_defect < tol {
            converged = true;
            break;
        }
        x = &clamped - outer_kron_identity(&tp_error).scale(1.0 / n as f64);
    }

    let polished = polish_trace(&clamped).unwrap_or(clamped);
    let out = ChoiMatrix::from_matrix(linalg::hermitian_part(&polished))?;
    let min_eigenvalue = out.eigenvalues().last().copied().unwrap_or(0.0);
    let tp_defect = out.tp_defect();
    let supermatrix = super_of_choi(&out).in_basis(basis);
    Ok(CptpProjection {
        supermatrix,
        converged,
        iterations: log.len(),
        log,
        min_eigenvalue,
        tp_defect,
    })
}

/// (M^{-1/2} ⊗ I) T (M^{-1/2} ⊗ I) with M = Tr₂T; None if M is not positive
/// definite.
fn polish_trace(t: &CMat) -> Option<CMat> {
    let m = partial_trace_inner(t);
    let eig = HermitianEigen::new(&m).ok()?;
    if eig.values.last().copied().unwrap_or(0.0) <= 1e-6 {
        return None;
    }
    let g = outer_kron_identity(&eig.reconstruct(|v| 1.0 / v.sqrt()));
    Some(&g * t * &g)
}

fn traceless_frobenius(m: &CMat) -> (CMat, f64) {
    let tl = spinsys::traceless_part(m);
    let norm = tl.norm();
    (tl, norm)
}

/// Correlation of the traceless parts of two states, Re tr(ρ_th ρ) normalized.
pub fn state_correlation(rho_th: &CMat, rho: &CMat) -> Result<f64> {
    if rho_th.shape() != rho.shape() {
        return Err(Error::DimensionMismatch {
            expected: rho_th.nrows(),
            found: rho.nrows(),
        });
    }
    let (a, na) = traceless_frobenius(rho_th);
    let (b, nb) = traceless_frobenius(rho);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCorrelation("traceless part is zero"));
    }
    Ok(linalg::inner(&a, &b).re / (na * nb))
}

/// Correlation scaled by the ratio of traceless norms of output and input.
pub fn attenuated_state_correlation(rho_th: &CMat, rho: &CMat, rho_in: &CMat) -> Result<f64> {
    let corr = state_correlation(rho_th, rho)?;
    let (_, n_out) = traceless_frobenius(rho);
    let (_, n_in) = traceless_frobenius(rho_in);
    if n_in == 0.0 {
        return Err(Error::UndefinedCorrelation("input traceless part is zero"));
    }
    Ok(corr * n_out / n_in)
}

fn same_shape(a: &Supermatrix, b: &Supermatrix) -> Result<(Supermatrix, Supermatrix)> {
    if a.matrix.nrows() != b.matrix.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.matrix.nrows(),
            found: b.matrix.nrows(),
        });
    }
    Ok((a.clone(), b.in_basis(a.basis)))
}

/// Re tr(S_th† S) / √(tr(S_th†S_th) tr(S†S)).
pub fn super_correlation(s_th: &Supermatrix, s: &Supermatrix) -> Result<f64> {
    let (a, b) = same_shape(s_th, s)?;
    let (na, nb) = (a.matrix.norm(), b.matrix.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-norm supermatrix"));
    }
    Ok(linalg::inner(&a.matrix, &b.matrix).re / (na * nb))
}

/// Re tr(S_th† S) / tr(S_th† S_th); the entanglement fidelity when S_th is
/// unitary.
pub fn gate_fidelity(s_th: &Supermatrix, s: &Supermatrix) -> Result<f64> {
    let (a, b) = same_shape(s_th, s)?;
    let norm2 = a.matrix.norm_squared();
    if norm2 == 0.0 {
        return Err(Error::UndefinedCorrelation("zero-norm reference supermatrix"));
    }
    Ok(linalg::inner(&a.matrix, &b.matrix).re / norm2)
}

/// Unitary matrix whose columns are col(P_a)/√N in canonical order.
pub fn po_change_matrix(n_spins: usize) -> Result<CMat> {
    let basis = spinsys::po_basis(n_spins)?;
    let dim = 1usize << n_spins;
    let d = dim * dim;
    let norm = 1.0 / (dim as f64).sqrt();
    let mut b = CMat::zeros(d, d);
    for (k, p) in basis.iter().enumerate() {
        let mask = p.flip_mask();
        for r in 0..dim {
            // P[r, r^mask] sits at col index (r^mask)*dim + r.
            b[((r ^ mask) * dim + r, k)] = p.entry_phase(r) * norm;
        }
    }
    Ok(b)
}

fn po_change_cached(n_spins: usize) -> &'static CMat {
    static CACHE: [OnceLock<CMat>; spinsys::MAX_SPINS] = [
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
        OnceLock::new(),
    ];
    CACHE[n_spins - 1]
        .get_or_init(|| po_change_matrix(n_spins).expect("spin count validated"))
}

/// Similarity transform between the Zeeman and product-operator bases.
pub fn change_basis(s: &Supermatrix, to: Basis) -> Supermatrix {
    if s.basis == to {
        return s.clone();
    }
    let b = po_change_cached(s.n_spins());
    let matrix = match to {
        Basis::ProductOperator => b.adjoint() * &s.matrix * b,
        Basis::Zeeman => b * &s.matrix * b.adjoint(),
    };
    Supermatrix { matrix, basis: to }
}

/// Product-operator supermatrix restricted to the traceless operators: the
/// identity row and column are dropped.
pub fn traceless_block(s: &Supermatrix) -> CMat {
    let po = s.in_basis(Basis::ProductOperator);
    let d = po.matrix.nrows();
    po.matrix.view((1, 1), (d - 1, d - 1)).into_owned()
}

/// Full spectrum, descending magnitude then ascending phase.
pub fn eigenvalues(s: &Supermatrix) -> Result<Vec<Complex64>> {
    linalg::general_eigenvalues(&s.matrix)
}

/// Closest unitary in Frobenius norm: W V† from A = W Σ V†.
pub fn best_unitary_approx(a: &CMat) -> Result<CMat> {
    linalg::ensure_square(a)?;
    let d = linalg::svd(a);
    let max = d.singular_values.first().copied().unwrap_or(0.0);
    let floor = 1e-8 * max;
    if max == 0.0 || d.singular_values.iter().any(|&s| s <= floor) {
        return Err(Error::RankDeficient {
            singular_values: d
                .singular_values
                .iter()
                .copied()
                .filter(|&s| s <= floor)
                .collect(),
        });
    }
    Ok(&d.left * d.right.adjoint())
}
