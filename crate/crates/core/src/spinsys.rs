//! Spin systems, their Hamiltonians and the product-operator basis.
//!
//! Spin 1 is the leftmost tensor factor (most significant bit of a Zeeman
//! basis index). Product operators are written as strings over `1XYZ` with
//! one character per spin, e.g. `X1Z` for σx¹σz³.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat, ONE};

/// Largest number of system spins any operation will accept.
pub const MAX_SPINS: usize = 6;

/// Absolute Hermiticity tolerance (scaled by the matrix norm when above 1).
pub const HERMITIAN_TOL: f64 = 1e-12;

pub fn check_spin_count(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("spin count must be at least 1".into()));
    }
    if n > MAX_SPINS {
        return Err(Error::DimensionTooLarge {
            spins: n,
            max: MAX_SPINS,
        });
    }
    Ok(())
}

/// Number of spins for a Hilbert-space dimension that must be a power of two.
pub fn spins_for_dim(dim: usize) -> Result<usize> {
    if dim < 2 || !dim.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    let n = dim.trailing_zeros() as usize;
    check_spin_count(n)?;
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => '1',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(ch: char) -> Option<Pauli> {
        match ch {
            '1' | 'I' | 'i' => Some(Pauli::I),
            'X' | 'x' => Some(Pauli::X),
            'Y' | 'y' => Some(Pauli::Y),
            'Z' | 'z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn is_transverse(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    pub fn matrix(self) -> CMat {
        match self {
            Pauli::I => linalg::identity(2),
            Pauli::X => linalg::pauli_x(),
            Pauli::Y => linalg::pauli_y(),
            Pauli::Z => linalg::pauli_z(),
        }
    }
}

/// A tensor product of Pauli matrices, one factor per spin.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PauliProduct {
    factors: Vec<Pauli>,
}

impl PauliProduct {
    pub fn new(factors: Vec<Pauli>) -> Result<Self> {
        check_spin_count(factors.len())?;
        Ok(PauliProduct { factors })
    }

    pub fn identity(n: usize) -> Self {
        PauliProduct {
            factors: vec![Pauli::I; n],
        }
    }

    /// Parse a label such as `X1Z`.
    pub fn from_label(label: &str) -> Result<Self> {
        let factors = label
            .chars()
            .map(Pauli::from_symbol)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::UnknownOperator(label.to_string()))?;
        if factors.is_empty() {
            return Err(Error::UnknownOperator(label.to_string()));
        }
        Self::new(factors)
    }

    /// The product at `index` in the canonical lexicographic order.
    pub fn from_index(n: usize, index: usize) -> Self {
        let factors = (0..n)
            .map(|pos| Pauli::ALL[(index >> (2 * (n - 1 - pos))) & 3])
            .collect();
        PauliProduct { factors }
    }

    pub fn n_spins(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Pauli] {
        &self.factors
    }

    /// Factor acting on `spin` (1-based).
    pub fn factor(&self, spin: usize) -> Pauli {
        self.factors[spin - 1]
    }

    pub fn label(&self) -> String {
        self.factors.iter().map(|p| p.symbol()).collect()
    }

    /// Position in the canonical order: base-4 digits with 1,X,Y,Z = 0..3,
    /// spin 1 most significant.
    pub fn index(&self) -> usize {
        self.factors
            .iter()
            .fold(0, |acc, &p| acc * 4 + p as usize)
    }

    pub fn is_identity(&self) -> bool {
        self.factors.iter().all(|&p| p == Pauli::I)
    }

    pub fn weight(&self) -> usize {
        self.factors.iter().filter(|&&p| p != Pauli::I).count()
    }

    /// Sparse form: row `r` has its only nonzero entry in column
    /// `r ^ flip_mask()` with value `entry_phase(r)`.
    pub fn flip_mask(&self) -> usize {
        let n = self.factors.len();
        self.factors
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_transverse())
            .fold(0, |acc, (pos, _)| acc | (1 << (n - 1 - pos)))
    }

    pub fn entry_phase(&self, row: usize) -> Complex64 {
        let n = self.factors.len();
        let mut phase = ONE;
        for (pos, p) in self.factors.iter().enumerate() {
            let bit = (row >> (n - 1 - pos)) & 1;
            phase *= match (p, bit) {
                (Pauli::I, _) | (Pauli::X, _) => ONE,
                (Pauli::Y, 0) => c(0.0, -1.0),
                (Pauli::Y, _) => c(0.0, 1.0),
                (Pauli::Z, 0) => ONE,
                (Pauli::Z, _) => -ONE,
            };
        }
        phase
    }

    pub fn matrix(&self) -> CMat {
        let dim = 1usize << self.factors.len();
        let mask = self.flip_mask();
        let mut m = CMat::zeros(dim, dim);
        for r in 0..dim {
            m[(r, r ^ mask)] = self.entry_phase(r);
        }
        m
    }

    /// tr(P ρ) using the monomial structure of P.
    pub fn trace_with(&self, rho: &CMat) -> Complex64 {
        let mask = self.flip_mask();
        (0..rho.nrows())
            .map(|r| self.entry_phase(r) * rho[(r ^ mask, r)])
            .sum()
    }
}

impl fmt::Display for PauliProduct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// All 4^n product operators in canonical order, identity first and the
/// all-Z product last.
pub fn po_basis(n: usize) -> Result<Vec<PauliProduct>> {
    check_spin_count(n)?;
    Ok((0..1usize << (2 * n))
        .map(|index| PauliProduct::from_index(n, index))
        .collect())
}

/// Products directly visible in a spectrum: one transverse factor, all other
/// factors longitudinal or identity.
pub fn observable_set(n: usize) -> Result<Vec<PauliProduct>> {
    Ok(po_basis(n)?
        .into_iter()
        .filter(|p| {
            let transverse = p.factors().iter().filter(|f| f.is_transverse()).count();
            transverse == 1
        })
        .collect())
}

/// An N×N Hermitian density matrix. Deviation matrices carry only the
/// traceless part that NMR observes, so their trace is unconstrained.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMat,
    deviation: bool,
}

impl DensityMatrix {
    pub fn new(matrix: CMat, deviation: bool) -> Result<Self> {
        let dim = linalg::ensure_square(&matrix)?;
        spins_for_dim(dim)?;
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL * matrix.norm().max(1.0) {
            return Err(Error::NotHermitian { defect });
        }
        if !deviation {
            let tr = linalg::trace(&matrix);
            if (tr - ONE).norm() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "density matrix trace {tr} is not 1"
                )));
            }
        }
        Ok(DensityMatrix { matrix, deviation })
    }

    /// A deviation density matrix equal to the given product operator.
    pub fn from_product(p: &PauliProduct) -> Self {
        DensityMatrix {
            matrix: p.matrix(),
            deviation: true,
        }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        let dim = 1 << n;
        DensityMatrix {
            matrix: linalg::identity(dim).scale(1.0 / dim as f64),
            deviation: false,
        }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn is_deviation(&self) -> bool {
        self.deviation
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn po_coefficients(&self) -> Vec<f64> {
        decompose_unchecked(&self.matrix)
    }

    /// Traceless part as a matrix.
    pub fn traceless(&self) -> CMat {
        traceless_part(&self.matrix)
    }
}

pub fn traceless_part(m: &CMat) -> CMat {
    let n = m.nrows();
    let tr = linalg::trace(m) / n as f64;
    m - linalg::identity(n) * tr
}

fn decompose_unchecked(m: &CMat) -> Vec<f64> {
    let dim = m.nrows();
    let n = dim.trailing_zeros() as usize;
    (0..dim * dim)
        .map(|index| PauliProduct::from_index(n, index).trace_with(m).re / dim as f64)
        .collect()
}

/// Coefficients c_a = tr(P_a ρ)/N of a Hermitian matrix in the canonical basis.
pub fn po_decompose(rho: &CMat) -> Result<Vec<f64>> {
    let dim = linalg::ensure_square(rho)?;
    spins_for_dim(dim)?;
    let defect = linalg::hermiticity_defect(rho);
    if defect > HERMITIAN_TOL * rho.norm().max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    Ok(decompose_unchecked(rho))
}

/// Inverse of [`po_decompose`]: Σ_a c_a P_a.
pub fn po_assemble(coefficients: &[f64]) -> Result<CMat> {
    let len = coefficients.len();
    if len < 4 || !len.is_power_of_two() || len.trailing_zeros() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "{len} coefficients is not a power of four"
        )));
    }
    let n = len.trailing_zeros() as usize / 2;
    check_spin_count(n)?;
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for (index, &coef) in coefficients.iter().enumerate() {
        if coef == 0.0 {
            continue;
        }
        let p = PauliProduct::from_index(n, index);
        let mask = p.flip_mask();
        for r in 0..dim {
            m[(r, r ^ mask)] += p.entry_phase(r) * coef;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingForm {
    /// Full σ⃗·σ⃗ scalar coupling.
    Isotropic,
    /// Weak-coupling truncation to σz σz.
    Secular,
}

/// A spin outside the simulated system whose z state is a constant of the
/// motion and only shifts the system offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Spectator {
    pub label: String,
    /// Coupling to each system spin, Hz.
    pub couplings_hz: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinSystem {
    n_spins: usize,
    offsets_hz: Vec<f64>,
    j_couplings_hz: Vec<Vec<f64>>,
    coupling_form: CouplingForm,
    spectators: Vec<Spectator>,
}

/// Default carbon-hydrogen coupling magnitude for the shipped spectators, Hz.
pub const DEFAULT_CH_COUPLING_HZ: f64 = 150.0;

impl SpinSystem {
    pub fn new(
        offsets_hz: Vec<f64>,
        j_couplings_hz: Vec<Vec<f64>>,
        coupling_form: CouplingForm,
        spectators: Vec<Spectator>,
    ) -> Result<Self> {
        let n = offsets_hz.len();
        check_spin_count(n)?;
        if let Some(bad) = offsets_hz.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "offset of spin {} is not finite",
                bad + 1
            )));
        }
        if j_couplings_hz.len() != n || j_couplings_hz.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidInput(format!(
                "coupling matrix must be {n}x{n}"
            )));
        }
        for i in 0..n {
            if j_couplings_hz[i][i] != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "coupling matrix diagonal entry {} is nonzero",
                    i + 1
                )));
            }
            for j in 0..n {
                let v = j_couplings_hz[i][j];
                if !v.is_finite() || v != j_couplings_hz[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "coupling J{}{} is not finite and symmetric",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for s in &spectators {
            if s.couplings_hz.len() != n {
                return Err(Error::InvalidInput(format!(
                    "spectator `{}` lists {} couplings for {n} spins",
                    s.label,
                    s.couplings_hz.len()
                )));
            }
        }
        if spectators.len() > 12 {
            return Err(Error::InvalidInput(
                "at most 12 spectator spins are supported".into(),
            ));
        }
        Ok(SpinSystem {
            n_spins: n,
            offsets_hz,
            j_couplings_hz,
            coupling_form,
            spectators,
        })
    }

    /// Build from an upper-triangle coupling list (J12, J13, …, J23, …).
    pub fn from_upper_triangle(
        offsets_hz: Vec<f64>,
        upper: &[f64],
        coupling_form: CouplingForm,
        spectators: Vec<Spectator>,
    ) -> Result<Self> {
        let n = offsets_hz.len();
        let expected = n * n.saturating_sub(1) / 2;
        if upper.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} upper-triangle couplings for {n} spins, found {}",
                upper.len()
            )));
        }
        let mut j = vec![vec![0.0; n]; n];
        let mut values = upper.iter();
        for a in 0..n {
            for b in a + 1..n {
                let v = *values.next().expect("length checked");
                j[a][b] = v;
                j[b][a] = v;
            }
        }
        Self::new(offsets_hz, j, coupling_form, spectators)
    }

    /// The three carbons of 13C-labelled alanine in the frame of spin 1.
    pub fn alanine() -> Self {
        Self::from_upper_triangle(
            vec![0.0, 9456.5, 12050.8],
            &[54.2, -1.2, 35.1],
            CouplingForm::Isotropic,
            Vec::new(),
        )
        .expect("static parameters are valid")
    }

    /// Alanine with four hydrogen spectators at the default coupling.
    pub fn alanine_with_hydrogens() -> Self {
        let spectators = (1..=4)
            .map(|k| Spectator {
                label: format!("H{k}"),
                couplings_hz: vec![DEFAULT_CH_COUPLING_HZ; 3],
            })
            .collect();
        let mut sys = Self::alanine();
        sys.spectators = spectators;
        sys
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn coupling_hz(&self, i: usize, j: usize) -> f64 {
        self.j_couplings_hz[i - 1][j - 1]
    }

    pub fn coupling_form(&self) -> CouplingForm {
        self.coupling_form
    }

    pub fn spectators(&self) -> &[Spectator] {
        &self.spectators
    }

    pub fn with_coupling_form(mut self, form: CouplingForm) -> Self {
        self.coupling_form = form;
        self
    }

    pub fn without_spectators(mut self) -> Self {
        self.spectators.clear();
        self
    }

    /// Offsets seen under spectator configuration `config` (bit j set means
    /// spectator j is in the down state).
    pub fn spectator_offsets(&self, config: usize) -> Vec<f64> {
        let mut offsets = self.offsets_hz.clone();
        for (j, s) in self.spectators.iter().enumerate() {
            let sign = if (config >> j) & 1 == 1 { -1.0 } else { 1.0 };
            for (i, off) in offsets.iter_mut().enumerate() {
                *off += sign * s.couplings_hz[i] / 2.0;
            }
        }
        offsets
    }

    pub fn spectator_configurations(&self) -> usize {
        1 << self.spectators.len()
    }

    /// Parse the TOML system description.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SystemFile =
            toml::from_str(text).map_err(|e| Error::config("spin system", e.to_string()))?;
        if file.schema != SYSTEM_SCHEMA {
            return Err(Error::config(
                "spin system field `schema`",
                format!("expected `{SYSTEM_SCHEMA}`, found `{}`", file.schema),
            ));
        }
        if file.offsets_hz.len() != file.n_spins {
            return Err(Error::config(
                "spin system field `offsets_hz`",
                format!(
                    "{} offsets given for n_spins = {}",
                    file.offsets_hz.len(),
                    file.n_spins
                ),
            ));
        }
        Self::from_upper_triangle(
            file.offsets_hz,
            &file.j_couplings_hz,
            file.coupling_form,
            file.spectators,
        )
        .map_err(|e| Error::config("spin system", e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        let mut upper = Vec::new();
        for a in 0..self.n_spins {
            for b in a + 1..self.n_spins {
                upper.push(self.j_couplings_hz[a][b]);
            }
        }
        let file = SystemFile {
            schema: SYSTEM_SCHEMA.to_string(),
            n_spins: self.n_spins,
            offsets_hz: self.offsets_hz.clone(),
            j_couplings_hz: upper,
            coupling_form: self.coupling_form,
            spectators: self.spectators.clone(),
        };
        toml::to_string(&file).expect("system serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config { context, message } => {
                Error::config(format!("{} ({context})", path.display()), message)
            }
            other => other,
        })
    }
}

pub const SYSTEM_SCHEMA: &str = "qptsim-system/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFile {
    schema: String,
    n_spins: usize,
    offsets_hz: Vec<f64>,
    /// Upper triangle, row-major: J12, J13, …, J23, …
    j_couplings_hz: Vec<f64>,
    coupling_form: CouplingForm,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    spectators: Vec<Spectator>,
}

/// π Σ ν_i σz^i + (π/2) Σ_{i<j} J_ij σ⃗^i·σ⃗^j in rad/s for the given offsets.
pub fn hamiltonian_with_offsets(sys: &SpinSystem, offsets_hz: &[f64]) -> CMat {
    let n = sys.n_spins;
    let dim = sys.dim();
    let mut h = CMat::zeros(dim, dim);
    // Diagonal part: Zeeman offsets and zz couplings.
    for r in 0..dim {
        let z = |spin: usize| -> f64 {
            if (r >> (n - spin)) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        };
        let mut e = 0.0;
        for i in 1..=n {
            e += PI * offsets_hz[i - 1] * z(i);
            for j in i + 1..=n {
                e += 0.5 * PI * sys.coupling_hz(i, j) * z(i) * z(j);
            }
        }
        h[(r, r)] = c(e, 0.0);
    }
    if sys.coupling_form == CouplingForm::Isotropic {
        // σxσx + σyσy = 2(σ+σ- + σ-σ+): flip-flop between |..01..> and |..10..>.
        for i in 1..=n {
            for j in i + 1..=n {
                let jij = sys.coupling_hz(i, j);
                if jij == 0.0 {
                    continue;
                }
                let bi = 1 << (n - i);
                let bj = 1 << (n - j);
                for r in 0..dim {
                    if ((r & bi) == 0) != ((r & bj) == 0) {
                        h[(r ^ bi ^ bj, r)] += c(PI * jij, 0.0);
                    }
                }
            }
        }
    }
    h
}

/// Internal (rotating-frame) Hamiltonian of the system spins, rad/s.
pub fn internal_hamiltonian(sys: &SpinSystem) -> Result<CMat> {
    check_spin_count(sys.n_spins)?;
    Ok(hamiltonian_with_offsets(sys, &sys.offsets_hz))
}

/// One Hamiltonian per spectator configuration with uniform weights.
pub fn spectator_hamiltonians(sys: &SpinSystem) -> Result<Vec<(f64, CMat)>> {
    check_spin_count(sys.n_spins)?;
    let count = sys.spectator_configurations();
    let weight = 1.0 / count as f64;
    Ok((0..count)
        .map(|config| {
            (
                weight,
                hamiltonian_with_offsets(sys, &sys.spectator_offsets(config)),
            )
        })
        .collect())
}

/// Σ_j σz^j / 2 over all system spins.
pub fn total_z(n: usize) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    for r in 0..dim {
        let ones = (r as u32).count_ones() as f64;
        m[(r, r)] = c((n as f64 - 2.0 * ones) / 2.0, 0.0);
    }
    m
}

/// Σ_j over `spins` of (cos φ σx^j + sin φ σy^j) / 2.
pub fn transverse_field(n: usize, spins: &[usize], phase: f64) -> CMat {
    let dim = 1 << n;
    let mut m = CMat::zeros(dim, dim);
    let plus = Complex64::from_polar(0.5, -phase);
    for &spin in spins {
        let bit = 1 << (n - spin);
        for r in 0..dim {
            // <r^bit| op |r>: lowering from 0 to 1 picks e^{iφ}/2, raising e^{-iφ}/2.
            let value = if r & bit == 0 { plus.conj() } else { plus };
            m[(r ^ bit, r)] += value;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commutator_norm(a: &CMat, b: &CMat) -> f64 {
        (a * b - b * a).norm()
    }

    #[test]
    fn single_spin_basis_order() {
        let labels: Vec<String> = po_basis(1).unwrap().iter().map(|p| p.label()).collect();
        assert_eq!(labels, ["1", "X", "Y", "Z"]);
    }

    #[test]
    fn three_spin_basis_endpoints() {
        let basis = po_basis(3).unwrap();
        assert_eq!(basis.len(), 64);
        assert_eq!(basis[0].label(), "111");
        assert_eq!(basis[1].label(), "11X");
        let expected = linalg::kron(
            &linalg::identity(4),
            &linalg::pauli_x(),
        );
        assert!((basis[1].matrix() - expected).norm() < 1e-15);
        assert_eq!(basis[63].label(), "ZZZ");
        assert_eq!(basis[4].label(), "1X1");
        for (k, p) in basis.iter().enumerate() {
            assert_eq!(p.index(), k);
            assert_eq!(PauliProduct::from_label(&p.label()).unwrap(), *p);
        }
    }

    #[test]
    fn matrices_match_kronecker_products() {
        for p in po_basis(3).unwrap() {
            let kron = p
                .factors()
                .iter()
                .fold(linalg::identity(1), |acc, f| linalg::kron(&acc, &f.matrix()));
            assert!((p.matrix() - kron).norm() < 1e-15, "{}", p.label());
        }
    }

    #[test]
    fn basis_is_trace_orthogonal() {
        for n in 1..=3 {
            let basis = po_basis(n).unwrap();
            let dim = (1 << n) as f64;
            let mats: Vec<CMat> = basis.iter().map(|p| p.matrix()).collect();
            for (a, pa) in mats.iter().enumerate() {
                for (b, pb) in mats.iter().enumerate() {
                    let t = linalg::trace(&(pa * pb)) / dim;
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((t - c(expected, 0.0)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn observable_set_sizes() {
        assert_eq!(observable_set(3).unwrap().len(), 24);
        let one: Vec<String> = observable_set(1).unwrap().iter().map(|p| p.label()).collect();
        assert_eq!(one, ["X", "Y"]);
        let mut two: Vec<String> = observable_set(2).unwrap().iter().map(|p| p.label()).collect();
        two.sort();
        let mut expected = vec!["X1", "Y1", "XZ", "YZ", "1X", "1Y", "ZX", "ZY"];
        expected.sort();
        assert_eq!(two, expected);
        for n in 1..=4 {
            assert_eq!(observable_set(n).unwrap().len(), 2 * n * (1 << (n - 1)));
        }
    }

    #[test]
    fn decompose_identity_and_sparse_state() {
        let rho = linalg::identity(8).scale(1.0 / 8.0);
        let coef = po_decompose(&rho).unwrap();
        assert!((coef[0] - 1.0 / 8.0).abs() < 1e-15);
        assert!(coef[1..].iter().all(|&x| x == 0.0));

        // (I + σx¹σz³)/8 has exactly two nonzero coefficients.
        let p = PauliProduct::from_label("X1Z").unwrap();
        let rho = (linalg::identity(8) + p.matrix()).scale(1.0 / 8.0);
        let coef = po_decompose(&rho).unwrap();
        let nonzero: Vec<usize> = (0..64).filter(|&k| coef[k].abs() > 1e-15).collect();
        assert_eq!(nonzero, vec![0, p.index()]);
    }

    #[test]
    fn decompose_rejects_non_hermitian() {
        let mut m = linalg::identity(4);
        m[(0, 1)] = c(0.3, 0.0);
        match po_decompose(&m) {
            Err(Error::NotHermitian { defect }) => assert!((defect - 0.3 * 2f64.sqrt()).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn alanine_hamiltonian_is_hermitian_with_expected_entries() {
        let sys = SpinSystem::alanine();
        let h = internal_hamiltonian(&sys).unwrap();
        assert_eq!(h.nrows(), 8);
        assert!(linalg::hermiticity_defect(&h) < 1e-12);
        // Compare with an explicit construction from Pauli products.
        let mut expected = CMat::zeros(8, 8);
        for i in 1..=3 {
            expected += linalg::embed(&linalg::pauli_z(), i, 3) * c(PI * sys.offsets_hz()[i - 1], 0.0);
            for j in i + 1..=3 {
                for p in [linalg::pauli_x(), linalg::pauli_y(), linalg::pauli_z()] {
                    expected += linalg::embed(&p, i, 3)
                        * linalg::embed(&p, j, 3)
                        * c(PI / 2.0 * sys.coupling_hz(i, j), 0.0);
                }
            }
        }
        assert!((h - expected).norm() < 1e-9);
        assert_eq!(sys.coupling_hz(1, 2), 54.2);
        assert_eq!(sys.offsets_hz()[1], 9456.5);
    }

    #[test]
    fn lone_spin_on_resonance_has_zero_hamiltonian() {
        let sys = SpinSystem::new(vec![0.0], vec![vec![0.0]], CouplingForm::Isotropic, vec![]).unwrap();
        assert_eq!(internal_hamiltonian(&sys).unwrap().norm(), 0.0);
    }

    #[test]
    fn secular_and_isotropic_commutators() {
        let zz = linalg::kron(&linalg::pauli_z(), &linalg::pauli_z());
        let zi = linalg::kron(&linalg::pauli_z(), &linalg::identity(2));
        let secular = SpinSystem::from_upper_triangle(vec![100.0, 350.0], &[20.0], CouplingForm::Secular, vec![]).unwrap();
        assert!(commutator_norm(&internal_hamiltonian(&secular).unwrap(), &zz) < 1e-12);
        let iso = secular.clone().with_coupling_form(CouplingForm::Isotropic);
        let h = internal_hamiltonian(&iso).unwrap();
        // [σ⃗·σ⃗, σz⊗1] has norm 4√2·(π/2)J.
        let expected = 4.0 * 2f64.sqrt() * PI / 2.0 * 20.0;
        assert!((commutator_norm(&h, &zi) - expected).abs() < 1e-9);
    }

    #[test]
    fn spectator_configurations() {
        let sys = SpinSystem::alanine_with_hydrogens();
        let hs = spectator_hamiltonians(&sys).unwrap();
        assert_eq!(hs.len(), 16);
        assert!((hs.iter().map(|(w, _)| w).sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(hs.iter().all(|(w, _)| *w == 1.0 / 16.0));

        let mut zero = sys.clone();
        for s in &mut zero.spectators {
            s.couplings_hz = vec![0.0; 3];
        }
        let h0 = internal_hamiltonian(&zero).unwrap();
        for (_, h) in spectator_hamiltonians(&zero).unwrap() {
            assert_eq!(h, h0);
        }

        let one = SpinSystem::new(
            vec![0.0, 9456.5, 12050.8],
            SpinSystem::alanine().j_couplings_hz.clone(),
            CouplingForm::Isotropic,
            vec![Spectator { label: "H".into(), couplings_hz: vec![150.0, 0.0, 0.0] }],
        )
        .unwrap();
        assert_eq!(one.spectator_offsets(0)[0], 75.0);
        assert_eq!(one.spectator_offsets(1)[0], -75.0);
        assert_eq!(one.spectator_offsets(1)[1], 9456.5);
    }

    #[test]
    fn system_validation_and_limits() {
        assert!(matches!(
            SpinSystem::new(vec![0.0; 7], vec![vec![0.0; 7]; 7], CouplingForm::Secular, vec![]),
            Err(Error::DimensionTooLarge { spins: 7, max: 6 })
        ));
        let mut j = vec![vec![0.0; 2]; 2];
        j[0][1] = 3.0;
        assert!(SpinSystem::new(vec![0.0, 1.0], j, CouplingForm::Secular, vec![]).is_err());
        assert!(SpinSystem::new(vec![f64::NAN], vec![vec![0.0]], CouplingForm::Secular, vec![]).is_err());
    }

    #[test]
    fn toml_round_trip_and_errors() {
        let sys = SpinSystem::alanine_with_hydrogens();
        let text = sys.to_toml_string();
        assert_eq!(SpinSystem::from_toml_str(&text).unwrap(), sys);

        let bad = "schema = \"qptsim-system/1\"\nn_spins = 2\noffsets_hz = [0.0, 1.0]\nj_couplings_hz = [1.0]\ncoupling_form = \"isotropic\"\ncolour = 3\n";
        let err = SpinSystem::from_toml_str(bad).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line 6"), "{err}");
    }

    #[test]
    fn transverse_field_matches_paulis() {
        let phase = 0.4;
        let m = transverse_field(2, &[2], phase);
        let expected = (linalg::embed(&linalg::pauli_x(), 2, 2) * c(phase.cos(), 0.0)
            + linalg::embed(&linalg::pauli_y(), 2, 2) * c(phase.sin(), 0.0))
            * c(0.5, 0.0);
        assert!((m - expected).norm() < 1e-15);
        let z = total_z(2);
        let expected_z = (linalg::embed(&linalg::pauli_z(), 1, 2) + linalg::embed(&linalg::pauli_z(), 2, 2)) * c(0.5, 0.0);
        assert!((z - expected_z).norm() < 1e-15);
    }
}
