//! Error decomposition of reconstructed supermatrices: Kraus spectra,
//! best-unitary extraction, coherent correction, single-spin rotation fits,
//! fixed points and eigenvalue spectra.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::optim::{self, NelderMeadOptions};
use crate::pulsesim::{self, PulseSchedule, RfHistogram};
use crate::spinsys::{self, PauliProduct, SpinSystem};
use crate::superop::{self, Supermatrix};

/// Relative threshold below which Choi eigenvalues are treated as zero.
pub const KRAUS_TOL: f64 = 1e-10;

/// Fits whose correlation falls below this are flagged.
pub const FIT_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Comparison {
    pub label: String,
    pub correlation: f64,
    pub attenuated_correlation: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FixedPoint {
    pub label: String,
    pub correlation: f64,
    pub attenuated_correlation: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Spectrum {
    pub label: String,
    /// Descending magnitude, then ascending phase.
    pub eigenvalues: Vec<[f64; 2]>,
    /// The same eigenvalues scaled to unit RMS magnitude.
    pub rms_normalized: Vec<[f64; 2]>,
}

impl Spectrum {
    pub fn complex(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|[re, im]| c(*re, *im)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    /// Descending.
    pub kraus_amplitudes: Vec<f64>,
    pub positivity: f64,
    /// Smallest over largest Choi eigenvalue.
    pub choi_eigenvalue_ratio: f64,
    /// Against the target unitary first, then each reference.
    pub comparisons: Vec<Comparison>,
    /// Correlations between every pair of {target, observed, references}.
    pub pair_labels: Vec<String>,
    pub pair_correlations: Vec<Vec<f64>>,
    /// Phase-free correlation of the closest unitary to A₁ with the target.
    pub kraus_unitary_correlation: f64,
    /// Phase-free correlation of A₁ itself with the target.
    pub kraus_operator_correlation: f64,
    pub fixed_points: Vec<FixedPoint>,
    pub spectra: Vec<Spectrum>,
    #[serde(skip)]
    pub kraus_unitary: CMat,
}

/// Fixed points of the quantum Fourier transform on three spins.
pub fn qft_fixed_points() -> Vec<(String, CMat)> {
    let x1z3 = PauliProduct::from_label("X1Z").expect("valid").matrix();
    let x1 = PauliProduct::from_label("X11").expect("valid").matrix();
    let z3 = PauliProduct::from_label("11Z").expect("valid").matrix();
    vec![
        ("X1Z".to_string(), x1z3),
        ("(X11+11Z)/2".to_string(), (x1 + z3) * c(0.5, 0.0)),
    ]
}

/// Full error report of `m` against the unitary `target`, the labeled
/// reference channels and the given fixed-point operators.
pub fn decompose(
    m: &Supermatrix,
    target: &CMat,
    references: &[(String, Supermatrix)],
    fixed_points: &[(String, CMat)],
) -> Result<ErrorReport> {
    linalg::ensure_unitary(target, 1e-8)?;
    if target.nrows() != m.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: m.hilbert_dim(),
            found: target.nrows(),
        });
    }
    let choi = superop::choi_of(m);
    choi.ensure_hermitian()?;
    let eig = choi.eigenvalues();
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let positivity = superop::positivity(&choi)?.value;
    let kraus = superop::kraus_of_choi(&choi, KRAUS_TOL)?;
    let a1 = &kraus.operators()[0];
    let kraus_unitary = superop::best_unitary_approx(a1)?;
    let s_target = superop::unitary_superop(target)?;

    let mut comparisons = vec![Comparison {
        label: "theoretical".into(),
        correlation: superop::super_correlation(&s_target, m)?,
        attenuated_correlation: superop::gate_fidelity(&s_target, m)?,
    }];
    for (label, r) in references {
        comparisons.push(Comparison {
            label: label.clone(),
            correlation: superop::super_correlation(r, m)?,
            attenuated_correlation: superop::gate_fidelity(r, m)?,
        });
    }
    let mut all = vec![("theoretical".to_string(), s_target), ("observed".to_string(), m.clone())];
    all.extend(references.iter().cloned());
    let pair_correlations = all
        .iter()
        .map(|(_, a)| {
            all.iter()
                .map(|(_, b)| superop::super_correlation(a, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let fixed = fixed_points
        .iter()
        .map(|(label, op)| {
            Ok(FixedPoint {
                label: label.clone(),
                correlation: fixed_point_check(m, op)?,
                attenuated_correlation: attenuated_fixed_point(m, op)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let spectra = spectrum_report(&all)?;
    Ok(ErrorReport {
        kraus_amplitudes: kraus.amplitudes().to_vec(),
        positivity,
        choi_eigenvalue_ratio: min / max,
        comparisons,
        pair_labels: all.iter().map(|(l, _)| l.clone()).collect(),
        pair_correlations,
        kraus_unitary_correlation: linalg::phase_free_correlation(target, &kraus_unitary)?,
        kraus_operator_correlation: linalg::phase_free_correlation(target, a1)?,
        fixed_points: fixed,
        spectra,
        kraus_unitary,
    })
}

/// Superoperator of `v` applied on the given side of `m`.
pub fn correct_with_unitary(m: &Supermatrix, v: &CMat, side: Side) -> Result<Supermatrix> {
    let s = superop::unitary_superop(v)?.in_basis(m.basis());
    let out = match side {
        Side::Left => s.matrix() * m.matrix(),
        Side::Right => m.matrix() * s.matrix(),
    };
    Supermatrix::new(out, m.basis())
}

/// (Ū_t⊗U_t)(Ū₁⊗U₁)†·M: removes the coherent error carried by U₁.
pub fn coherent_correction(m: &Supermatrix, u1: &CMat, target: &CMat) -> Result<Supermatrix> {
    linalg::ensure_unitary(u1, 1e-8)?;
    correct_with_unitary(m, &(target * u1.adjoint()), Side::Left)
}

/// Correlation of each traceless product-operator row of `s` with the same
/// row of `s_th`. Rows that vanish in either are skipped.
pub fn row_correlations(s_th: &Supermatrix, s: &Supermatrix) -> Result<Vec<f64>> {
    if s_th.hilbert_dim() != s.hilbert_dim() {
        return Err(Error::DimensionMismatch {
            expected: s_th.hilbert_dim(),
            found: s.hilbert_dim(),
        });
    }
    let a = superop::traceless_block(s_th);
    let b = superop::traceless_block(s);
    Ok((0..a.nrows())
        .filter_map(|i| {
            let (ra, rb) = (a.row(i), b.row(i));
            let (na, nb) = (ra.norm(), rb.norm());
            (na > 1e-12 && nb > 1e-12).then(|| ra.dotc(&rb).re / (na * nb))
        })
        .collect())
}

/// Correlation between `op` and its image under `s`.
pub fn fixed_point_check(s: &Supermatrix, op: &CMat) -> Result<f64> {
    superop::state_correlation(op, &s.apply(op)?)
}

pub fn attenuated_fixed_point(s: &Supermatrix, op: &CMat) -> Result<f64> {
    superop::attenuated_state_correlation(op, &s.apply(op)?, op)
}

/// Sorted spectra of each labeled supermatrix, with RMS-normalized copies.
pub fn spectrum_report(labeled: &[(String, Supermatrix)]) -> Result<Vec<Spectrum>> {
    labeled
        .par_iter()
        .map(|(label, s)| {
            let values = superop::eigenvalues(s)?;
            let rms = (values.iter().map(|z| z.norm_sqr()).sum::<f64>() / values.len() as f64).sqrt();
            let pair = |z: &Complex64| [z.re, z.im];
            Ok(Spectrum {
                label: label.clone(),
                eigenvalues: values.iter().map(pair).collect(),
                rms_normalized: values
                    .iter()
                    .map(|z| if rms > 0.0 { pair(&(z / rms)) } else { pair(z) })
                    .collect(),
            })
        })
        .collect()
}

/// RMS angular distance (radians) from each eigenvalue to the nearest
/// eigenvalue phase of `reference`. Eigenvalues of magnitude below `floor`
/// have no meaningful phase and are skipped.
pub fn angular_spread(values: &[Complex64], reference: &[Complex64], floor: f64) -> f64 {
    let phases: Vec<f64> = reference.iter().filter(|z| z.norm() > floor).map(|z| z.arg()).collect();
    let dists: Vec<f64> = values
        .iter()
        .filter(|z| z.norm() > floor)
        .map(|z| {
            phases
                .iter()
                .map(|p| {
                    let d = (z.arg() - p).rem_euclid(2.0 * PI);
                    d.min(2.0 * PI - d)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    if dists.is_empty() {
        return 0.0;
    }
    (dists.iter().map(|d| d * d).sum::<f64>() / dists.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// The residual unitary that a correction on `side` must supply so that the
/// corrected gate equals `target`: target = U_Δ·U₁ (left) or U₁·U_Δ (right).
pub fn delta_unitary(u1: &CMat, target: &CMat, side: Side) -> CMat {
    match side {
        Side::Left => target * u1.adjoint(),
        Side::Right => u1.adjoint() * target,
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SpinRotation {
    /// Unit vector.
    pub axis: [f64; 3],
    /// In [0, 180].
    pub angle_deg: f64,
}

impl SpinRotation {
    pub fn matrix(&self) -> CMat {
        linalg::axis_rotation(self.axis, self.angle_deg.to_radians())
    }

    /// Axis and angle of a 2×2 unitary, ignoring its global phase.
    pub fn from_matrix(r: &CMat) -> SpinRotation {
        let det = r.determinant();
        let mut v = r * Complex64::from_polar(1.0, -det.arg() / 2.0);
        if linalg::trace(&v).re < 0.0 {
            v = -v;
        }
        let cos_half = (linalg::trace(&v).re / 2.0).clamp(-1.0, 1.0);
        let sin_axis = [linalg::pauli_x(), linalg::pauli_y(), linalg::pauli_z()]
            .map(|p| -linalg::trace(&(p * &v)).im / 2.0);
        let sin_half = sin_axis.iter().map(|s| s * s).sum::<f64>().sqrt();
        let angle = 2.0 * sin_half.atan2(cos_half);
        let axis = if sin_half > 1e-15 {
            sin_axis.map(|s| s / sin_half)
        } else {
            [0.0, 0.0, 1.0]
        };
        SpinRotation {
            axis,
            angle_deg: angle.to_degrees(),
        }
    }

    fn from_params(p: &[f64]) -> SpinRotation {
        let (theta, phi, alpha) = (p[0], p[1], p[2]);
        let axis = [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()];
        SpinRotation::from_matrix(&linalg::axis_rotation(axis, alpha))
    }

    fn params(&self) -> [f64; 3] {
        let [x, y, z] = self.axis;
        [z.clamp(-1.0, 1.0).acos(), y.atan2(x), self.angle_deg.to_radians()]
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RotationFit {
    pub rotations: Vec<SpinRotation>,
    pub side: Side,
    /// |tr(R† U_Δ)| / N.
    pub correlation: f64,
    pub low_confidence: bool,
}

impl RotationFit {
    pub fn unitary(&self) -> CMat {
        self.rotations
            .iter()
            .map(SpinRotation::matrix)
            .reduce(|a, b| linalg::kron(&a, &b))
            .expect("at least one spin")
    }
}

fn product_from_params(p: &[f64]) -> CMat {
    p.chunks(3)
        .map(|q| {
            let axis = [q[0].sin() * q[1].cos(), q[0].sin() * q[1].sin(), q[0].cos()];
            linalg::axis_rotation(axis, q[2])
        })
        .reduce(|a, b| linalg::kron(&a, &b))
        .expect("at least one spin")
}

/// Contraction of `u` over every spin but `spin` (0-based).
fn single_spin_part(u: &CMat, spin: usize, n: usize) -> CMat {
    let bit = n - 1 - spin;
    let mut out = CMat::zeros(2, 2);
    for i in 0..u.nrows() {
        for j in 0..u.ncols() {
            let rest = (i & !(1 << bit)) == (j & !(1 << bit));
            if rest {
                out[((i >> bit) & 1, (j >> bit) & 1)] += u[(i, j)];
            }
        }
    }
    out
}

/// Product of single-spin rotations closest to `u_delta` up to global phase.
/// The search starts from the single-spin contractions of `u_delta` and adds
/// seeded random restarts.
pub fn fit_single_spin_rotations(u_delta: &CMat, side: Side, seed: u64) -> Result<RotationFit> {
    let dim = linalg::ensure_square(u_delta)?;
    let n = spinsys::spins_for_dim(dim)?;
    let norm = u_delta.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedCorrelation("zero operator"));
    }
    let scale = 1.0 / (norm * (dim as f64).sqrt());
    let mut objective = |p: &[f64]| -linalg::inner(&product_from_params(p), u_delta).norm() * scale;
    let start: Vec<f64> = (0..n)
        .flat_map(|j| {
            let part = single_spin_part(u_delta, j, n);
            let r = superop::best_unitary_approx(&part).unwrap_or_else(|_| linalg::identity(2));
            SpinRotation::from_matrix(&r).params()
        })
        .collect();
    let bounds: Vec<(f64, f64)> = (0..n).flat_map(|_| [(0.0, PI), (-PI, PI), (0.0, PI)]).collect();
    let opts = NelderMeadOptions {
        step: 0.2,
        max_evals: 4000,
        f_tol: 1e-15,
    };
    let coarse = optim::multistart(&mut objective, Some(&start), &bounds, 6, 12000, seed, &opts);
    let fine = optim::nelder_mead(
        &mut objective,
        &coarse.x,
        &NelderMeadOptions {
            step: 0.01,
            ..opts
        },
    );
    let best = if fine.value < coarse.value { fine } else { coarse };
    let rotations: Vec<SpinRotation> = best.x.chunks(3).map(SpinRotation::from_params).collect();
    let correlation = -best.value;
    Ok(RotationFit {
        rotations,
        side,
        correlation,
        low_confidence: correlation < FIT_FLOOR,
    })
}

/// Correlations of one estimated input and output with their ideal values.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct StateCorrelation {
    pub label: String,
    pub input: f64,
    pub output: f64,
    pub attenuated_output: f64,
}

/// Per traceless input, from coefficient-vector columns of the estimated
/// inputs and outputs.
pub fn state_correlations(r_in: &CMat, r_out: &CMat, target: &CMat) -> Result<Vec<StateCorrelation>> {
    let n = spinsys::spins_for_dim(target.nrows())?;
    let column = |m: &CMat, a: usize| -> Result<CMat> {
        spinsys::po_assemble(&m.column(a).iter().map(|z| z.re).collect::<Vec<_>>())
    };
    (1..r_in.ncols())
        .map(|a| {
            let p = PauliProduct::from_index(n, a);
            let ideal_in = p.matrix();
            let ideal_out = target * &ideal_in * target.adjoint();
            let est_in = column(r_in, a)?;
            let est_out = column(r_out, a)?;
            Ok(StateCorrelation {
                label: p.label(),
                input: superop::state_correlation(&ideal_in, &est_in)?,
                output: superop::state_correlation(&ideal_out, &est_out)?,
                attenuated_output: superop::attenuated_state_correlation(&ideal_out, &est_out, &ideal_in)?,
            })
        })
        .collect()
}

/// Means over [`state_correlations`].
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct StateSummary {
    pub input_correlation: f64,
    pub output_correlation: f64,
    pub attenuated_output_correlation: f64,
}

pub fn state_summary(states: &[StateCorrelation]) -> StateSummary {
    let k = states.len().max(1) as f64;
    StateSummary {
        input_correlation: states.iter().map(|s| s.input).sum::<f64>() / k,
        output_correlation: states.iter().map(|s| s.output).sum::<f64>() / k,
        attenuated_output_correlation: states.iter().map(|s| s.attenuated_output).sum::<f64>() / k,
    }
}

/// Two pulses simulated as one concatenated schedule and as a product of
/// their separately averaged supermatrices.
#[derive(Debug, Clone)]
pub struct CompositionComparison {
    pub first: Supermatrix,
    pub second: Supermatrix,
    /// Channel of the concatenated schedule.
    pub both: Supermatrix,
    /// second · first.
    pub product: Supermatrix,
    /// ‖both − product‖_F.
    pub difference: f64,
    /// 1 − mean |λ| of each.
    pub reduction_both: f64,
    pub reduction_product: f64,
    pub spectrum_both: Vec<Complex64>,
    pub spectrum_product: Vec<Complex64>,
}

pub fn mean_eigenvalue_reduction(values: &[Complex64]) -> f64 {
    1.0 - values.iter().map(|z| z.norm()).sum::<f64>() / values.len() as f64
}

/// Under an RF histogram with more than one bin, averaging does not commute
/// with composition: the concatenated schedule differs from the product.
pub fn composition_comparison(
    first: &PulseSchedule,
    second: &PulseSchedule,
    sys: &SpinSystem,
    hist: &RfHistogram,
    spectators: bool,
) -> Result<CompositionComparison> {
    let s1 = pulsesim::incoherent_superop(first, sys, hist, spectators)?.supermatrix;
    let s2 = pulsesim::incoherent_superop(second, sys, hist, spectators)?.supermatrix;
    let mut concatenated = first.clone();
    concatenated.extend(second);
    let both = pulsesim::incoherent_superop(&concatenated, sys, hist, spectators)?.supermatrix;
    let product = s1.then(&s2)?;
    let spectrum_both = superop::eigenvalues(&both)?;
    let spectrum_product = superop::eigenvalues(&product)?;
    Ok(CompositionComparison {
        difference: (both.matrix() - product.matrix()).norm(),
        reduction_both: mean_eigenvalue_reduction(&spectrum_both),
        reduction_product: mean_eigenvalue_reduction(&spectrum_product),
        first: s1,
        second: s2,
        both,
        product,
        spectrum_both,
        spectrum_product,
    })
}
