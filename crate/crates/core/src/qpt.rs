//! Simulated process tomography: input preparation, state tomography through
//! readout rotations with measurement noise, and supermatrix reconstruction.
//!
//! Coefficient vectors hold `x_a = tr(P_a ρ)/N` in canonical product-operator
//! order. Supermatrices produced here are in the product-operator basis, whose
//! coordinates are `√N·x`, so a map on coefficient vectors is already the
//! product-operator supermatrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::pulsesim::{self, Axis, Gate, PulseLibrary, RfHistogram};
use crate::relax::RelaxationModel;
use crate::spinsys::{self, DensityMatrix, Pauli, PauliProduct, SpinSystem};
use crate::superop::{self, Basis, Supermatrix};

/// Default bound on the condition number of the input-state matrix.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e6;

/// Per-spin readout rotations of the shipped three-spin set: `1` none, `x`
/// and `y` a 90° rotation about that axis.
pub const THREE_SPIN_READOUTS: [&str; 7] = ["111", "11x", "11y", "1x1", "1xx", "xyy", "yyy"];

/// One readout experiment: simultaneous 90° rotations of selected spins.
#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    pub label: String,
    pub gates: Vec<Gate>,
}

impl Readout {
    pub fn parse(label: &str) -> Result<Readout> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (i, ch) in label.chars().enumerate() {
            match ch {
                '1' => {}
                'x' => x.push(i + 1),
                'y' => y.push(i + 1),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "readout `{label}` may only contain 1, x and y"
                    )))
                }
            }
        }
        let mut gates = Vec::new();
        for (axis, spins) in [(Axis::X, x), (Axis::Y, y)] {
            if !spins.is_empty() {
                gates.push(Gate::Rotation {
                    axis,
                    degrees: 90.0,
                    spins,
                });
            }
        }
        Ok(Readout {
            label: label.to_string(),
            gates,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.label.len()
    }

    pub fn unitary(&self) -> Result<CMat> {
        pulsesim::circuit_unitary(&self.gates, self.n_spins())
    }
}

/// Transfer matrix of `ρ ↦ U ρ U†` on coefficient vectors.
fn coefficient_map(u: &CMat) -> CMat {
    let dim = u.nrows();
    let n = dim.trailing_zeros() as usize;
    let d = dim * dim;
    let mut m = CMat::zeros(d, d);
    for a in 0..d {
        let p = PauliProduct::from_index(n, a).matrix();
        let out = u * p * u.adjoint();
        for (b, v) in decompose(&out).into_iter().enumerate() {
            m[(b, a)] = c(v, 0.0);
        }
    }
    m
}

fn decompose(m: &CMat) -> Vec<f64> {
    let dim = m.nrows();
    let n = dim.trailing_zeros() as usize;
    (0..dim * dim)
        .map(|a| PauliProduct::from_index(n, a).trace_with(m).re / dim as f64)
        .collect()
}

/// Product operators whose coefficient no readout exposes, with the rank of
/// the stacked design.
fn coverage_gaps(n: usize, readouts: &[Readout]) -> Result<(Vec<String>, usize)> {
    let observables = spinsys::observable_set(n)?;
    let d = 1usize << (2 * n);
    let mut design = Vec::new();
    for r in readouts {
        if r.n_spins() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: r.n_spins(),
            });
        }
        let m = coefficient_map(&r.unitary()?);
        for o in &observables {
            design.push((1..d).map(|a| m[(o.index(), a)].re).collect::<Vec<f64>>());
        }
    }
    let missing = (1..d)
        .filter(|&a| design.iter().all(|row| row[a - 1].abs() < 1e-12))
        .map(|a| PauliProduct::from_index(n, a).label())
        .collect();
    let rows = design.len();
    let dm = nalgebra::DMatrix::<f64>::from_fn(rows, d - 1, |i, j| design[i][j]);
    let rank = dm.svd(false, false).rank(1e-9);
    Ok((missing, rank))
}

/// Readouts whose observed coefficients determine every traceless product
/// operator. One and three spins use fixed sets; other sizes are built
/// greedily from all per-spin choices.
pub fn readout_pulses(n: usize) -> Result<Vec<Readout>> {
    spinsys::check_spin_count(n)?;
    let readouts: Vec<Readout> = match n {
        1 => ["1", "x", "y"].iter().map(|l| Readout::parse(l)).collect::<Result<_>>()?,
        3 => THREE_SPIN_READOUTS
            .iter()
            .map(|l| Readout::parse(l))
            .collect::<Result<_>>()?,
        _ => greedy_readouts(n)?,
    };
    verify_coverage(n, &readouts)?;
    Ok(readouts)
}

pub fn verify_coverage(n: usize, readouts: &[Readout]) -> Result<()> {
    let (missing, rank) = coverage_gaps(n, readouts)?;
    if !missing.is_empty() {
        return Err(Error::Coverage { missing });
    }
    if rank < (1 << (2 * n)) - 1 {
        return Err(Error::SingularDesign);
    }
    Ok(())
}

fn greedy_readouts(n: usize) -> Result<Vec<Readout>> {
    let observables = spinsys::observable_set(n)?;
    let d = 1usize << (2 * n);
    let candidates: Vec<(Readout, Vec<bool>)> = (0..3usize.pow(n as u32))
        .map(|mut code| {
            let label: String = (0..n)
                .map(|_| {
                    let ch = ['1', 'x', 'y'][code % 3];
                    code /= 3;
                    ch
                })
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            let r = Readout::parse(&label)?;
            let m = coefficient_map(&r.unitary()?);
            let covers = (0..d)
                .map(|a| a > 0 && observables.iter().any(|o| m[(o.index(), a)].norm() > 1e-12))
                .collect();
            Ok((r, covers))
        })
        .collect::<Result<_>>()?;
    let mut covered = vec![false; d];
    covered[0] = true;
    let mut chosen = Vec::new();
    while covered.iter().any(|c| !c) {
        let gain = |cov: &[bool]| cov.iter().zip(&covered).filter(|(a, b)| **a && !**b).count();
        let (best, cov) = candidates
            .iter()
            .max_by(|a, b| gain(&a.1).cmp(&gain(&b.1)).then(b.0.label.cmp(&a.0.label)))
            .expect("candidates exist");
        if gain(cov) == 0 {
            break;
        }
        for (c, &v) in covered.iter_mut().zip(cov) {
            *c |= v;
        }
        chosen.push(best.clone());
    }
    Ok(chosen)
}

/// Source operator and gates that create product operator `p`: spins with
/// an x factor get a 90° y rotation from z, spins with a y factor a 90°
/// rotation about −x.
pub fn preparation_gates(p: &PauliProduct) -> (PauliProduct, Vec<Gate>) {
    let mut gates = Vec::new();
    let source: Vec<Pauli> = p
        .factors()
        .iter()
        .enumerate()
        .map(|(i, f)| match f {
            Pauli::X => {
                gates.push(Gate::Rotation {
                    axis: Axis::Y,
                    degrees: 90.0,
                    spins: vec![i + 1],
                });
                Pauli::Z
            }
            Pauli::Y => {
                gates.push(Gate::Rotation {
                    axis: Axis::MinusX,
                    degrees: 90.0,
                    spins: vec![i + 1],
                });
                Pauli::Z
            }
            other => *other,
        })
        .collect();
    (
        PauliProduct::new(source).expect("same length as p"),
        gates,
    )
}

/// Ideal deviation inputs P_a in canonical order (index 0 is the identity),
/// each optionally passed through its own preparation channel.
pub fn prepare_input_states(
    n: usize,
    imperfection: Option<&[Supermatrix]>,
) -> Result<Vec<DensityMatrix>> {
    let basis = spinsys::po_basis(n)?;
    if let Some(ch) = imperfection {
        if ch.len() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: ch.len(),
            });
        }
    }
    basis
        .iter()
        .enumerate()
        .map(|(a, p)| {
            let ideal = DensityMatrix::from_product(p);
            match imperfection {
                None => Ok(ideal),
                Some(ch) => {
                    let (source, _) = preparation_gates(p);
                    let out = ch[a].apply(&source.matrix())?;
                    DensityMatrix::new(linalg::hermitian_part(&out), true)
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel { sigma: 0.0, seed: 0 }
    }

    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise sigma {sigma} must be finite and nonnegative"
            )));
        }
        Ok(NoiseModel { sigma, seed })
    }

    /// Independent stream for one (phase, state, readout) job.
    fn stream(&self, phase: u64, state: usize, readout: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream((phase << 48) | ((state as u64) << 16) | readout as u64);
        rng
    }

    fn perturb(&self, values: &mut [f64], phase: u64, state: usize, readout: usize) {
        if self.sigma == 0.0 {
            return;
        }
        let normal = Normal::new(0.0, self.sigma).expect("sigma validated");
        let mut rng = self.stream(phase, state, readout);
        for v in values {
            *v += normal.sample(&mut rng);
        }
    }
}

/// Least-squares inversion of the stacked readout observations.
#[derive(Debug, Clone)]
pub struct TomographyDesign {
    n: usize,
    readouts: Vec<Readout>,
    observables: Vec<PauliProduct>,
    /// (readouts·observables) × (4^n − 1) design on traceless coefficients.
    design: nalgebra::DMatrix<f64>,
    pseudo_inverse: nalgebra::DMatrix<f64>,
}

impl TomographyDesign {
    pub fn new(n: usize, readouts: Vec<Readout>) -> Result<Self> {
        verify_coverage(n, &readouts)?;
        let observables = spinsys::observable_set(n)?;
        let d = 1usize << (2 * n);
        let rows = readouts.len() * observables.len();
        let mut design = nalgebra::DMatrix::<f64>::zeros(rows, d - 1);
        for (r, readout) in readouts.iter().enumerate() {
            let m = coefficient_map(&readout.unitary()?);
            for (k, o) in observables.iter().enumerate() {
                for a in 1..d {
                    design[(r * observables.len() + k, a - 1)] = m[(o.index(), a)].re;
                }
            }
        }
        // Normal equations: the design is small and well conditioned, and the
        // Cholesky solve is accurate to rounding where an iterative SVD is not.
        let pseudo_inverse = (design.transpose() * &design)
            .cholesky()
            .ok_or(Error::SingularDesign)?
            .solve(&design.transpose());
        Ok(TomographyDesign {
            n,
            readouts,
            observables,
            design,
            pseudo_inverse,
        })
    }

    pub fn readouts(&self) -> &[Readout] {
        &self.readouts
    }

    pub fn observables(&self) -> &[PauliProduct] {
        &self.observables
    }

    /// Ideal readout unitaries.
    pub fn readout_unitaries(&self) -> Result<Vec<CMat>> {
        self.readouts.iter().map(Readout::unitary).collect()
    }

    /// Observable coefficients of an operator (already rotated by a readout).
    pub fn observe(&self, rotated: &CMat) -> Vec<f64> {
        self.observables
            .iter()
            .map(|o| o.trace_with(rotated).re / rotated.nrows() as f64)
            .collect()
    }

    /// Coefficient vector from per-readout observations; the identity
    /// coefficient is supplied, not measured.
    pub fn estimate(&self, observations: &[Vec<f64>], identity_coefficient: f64) -> Result<Vec<f64>> {
        let k = self.observables.len();
        if observations.len() != self.readouts.len() || observations.iter().any(|o| o.len() != k) {
            return Err(Error::InvalidInput(
                "observation count does not match the tomography design".into(),
            ));
        }
        let y = nalgebra::DVector::from_iterator(
            self.readouts.len() * k,
            observations.iter().flatten().copied(),
        );
        let x = &self.pseudo_inverse * y;
        let mut out = Vec::with_capacity(x.len() + 1);
        out.push(identity_coefficient);
        out.extend(x.iter().copied());
        Ok(out)
    }

    /// Number of observations per unknown coefficient.
    pub fn redundancy(&self) -> f64 {
        self.design.nrows() as f64 / self.design.ncols() as f64
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }
}

/// Tomography of one state: rotate by each readout (ideal unitaries, or the
/// given channels), read the observable coefficients, add noise, invert.
pub fn state_tomography(
    rho: &DensityMatrix,
    design: &TomographyDesign,
    noise: &NoiseModel,
    readout_channels: Option<&[Supermatrix]>,
) -> Result<DensityMatrix> {
    let unitaries = design.readout_unitaries()?;
    if let Some(ch) = readout_channels {
        if ch.len() != unitaries.len() {
            return Err(Error::DimensionMismatch {
                expected: unitaries.len(),
                found: ch.len(),
            });
        }
    }
    let mut observations = Vec::with_capacity(unitaries.len());
    for (r, u) in unitaries.iter().enumerate() {
        let rotated = match readout_channels {
            Some(ch) => ch[r].apply(rho.matrix())?,
            None => u * rho.matrix() * u.adjoint(),
        };
        let mut obs = design.observe(&rotated);
        noise.perturb(&mut obs, 0, 0, r);
        observations.push(obs);
    }
    let x0 = linalg::trace(rho.matrix()).re / rho.dim() as f64;
    let coefficients = design.estimate(&observations, x0)?;
    DensityMatrix::new(spinsys::po_assemble(&coefficients)?, rho.is_deviation())
}

/// M_obs = R_out R_in⁻¹ with coefficient vectors as columns.
pub fn reconstruct_supermatrix(r_in: &CMat, r_out: &CMat, condition_bound: f64) -> Result<Supermatrix> {
    let d = linalg::ensure_square(r_in)?;
    if r_out.shape() != r_in.shape() {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: r_out.nrows(),
        });
    }
    let condition = linalg::condition_number(r_in);
    if !(condition <= condition_bound) {
        return Err(Error::IllConditioned { condition });
    }
    let inv = r_in
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { condition })?;
    Supermatrix::new(r_out * inv, Basis::ProductOperator)
}

/// A step acting on states within one realization.
#[derive(Debug, Clone)]
pub enum Step {
    Unitary(CMat),
    /// Diagonal product-operator decay factors.
    Decay(Vec<f64>),
    /// General map on coefficient vectors.
    Channel(CMat),
}

fn apply_steps(steps: &[Step], rho: &CMat) -> CMat {
    let mut m = rho.clone();
    for step in steps {
        m = match step {
            Step::Unitary(u) => u * m * u.adjoint(),
            Step::Decay(f) => {
                let x: Vec<f64> = decompose(&m).iter().zip(f).map(|(a, b)| a * b).collect();
                spinsys::po_assemble(&x).expect("length is a power of four")
            }
            Step::Channel(t) => {
                let x = nalgebra::DVector::from_iterator(t.ncols(), decompose(&m).into_iter().map(|v| c(v, 0.0)));
                let y: Vec<f64> = (t * x).iter().map(|z| z.re).collect();
                spinsys::po_assemble(&y).expect("length is a power of four")
            }
        };
    }
    m
}

/// Everything experienced by the spins of one RF scale (and spectator
/// configuration): preparation of each input, the process, each readout.
#[derive(Debug, Clone)]
pub struct Realization {
    pub weight: f64,
    /// Per input state; empty means the ideal input is given directly.
    pub preparations: Vec<Vec<Step>>,
    pub process: Vec<Step>,
    pub readouts: Vec<CMat>,
}

#[derive(Debug, Clone)]
pub struct QptSetup {
    pub n_spins: usize,
    pub realizations: Vec<Realization>,
    pub design: TomographyDesign,
    pub noise: NoiseModel,
    pub condition_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TomographyRecord {
    pub readout: usize,
    pub observed: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct QptRun {
    pub input_labels: Vec<String>,
    pub input_records: Vec<Vec<TomographyRecord>>,
    pub output_records: Vec<Vec<TomographyRecord>>,
    /// Coefficient vectors of the estimated inputs and outputs as columns.
    pub r_in: CMat,
    pub r_out: CMat,
    pub m_obs: Supermatrix,
    /// The weighted channel actually simulated, for reference.
    pub simulated: Supermatrix,
    pub condition_number: f64,
    pub seed: u64,
}

impl QptRun {
    pub fn estimated_input(&self, a: usize) -> Result<DensityMatrix> {
        column_state(&self.r_in, a)
    }

    pub fn estimated_output(&self, a: usize) -> Result<DensityMatrix> {
        column_state(&self.r_out, a)
    }
}

fn column_state(m: &CMat, a: usize) -> Result<DensityMatrix> {
    let x: Vec<f64> = m.column(a).iter().map(|z| z.re).collect();
    DensityMatrix::new(spinsys::po_assemble(&x)?, true)
}

struct RealizationOutput {
    channel: CMat,
    inputs: Vec<Vec<Vec<f64>>>,
    outputs: Vec<Vec<Vec<f64>>>,
}

fn simulate_realization(setup: &QptSetup, re: &Realization, sources: &[CMat]) -> Result<RealizationOutput> {
    let d = sources.len();
    if !re.preparations.is_empty() && re.preparations.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: re.preparations.len(),
        });
    }
    if re.readouts.len() != setup.design.readouts().len() {
        return Err(Error::DimensionMismatch {
            expected: setup.design.readouts().len(),
            found: re.readouts.len(),
        });
    }
    let basis = spinsys::po_basis(setup.n_spins)?;
    let mut channel = CMat::zeros(d, d);
    for (a, p) in basis.iter().enumerate() {
        let out = apply_steps(&re.process, &p.matrix());
        for (b, v) in decompose(&out).into_iter().enumerate() {
            channel[(b, a)] = c(v, 0.0);
        }
    }
    let mut inputs = Vec::with_capacity(d);
    let mut outputs = Vec::with_capacity(d);
    for a in 0..d {
        let prepared = if re.preparations.is_empty() || a == 0 {
            basis[a].matrix()
        } else {
            apply_steps(&re.preparations[a], &sources[a])
        };
        let processed = apply_steps(&re.process, &prepared);
        let read = |m: &CMat| -> Vec<Vec<f64>> {
            re.readouts
                .iter()
                .map(|u| setup.design.observe(&(u * m * u.adjoint())))
                .collect()
        };
        inputs.push(read(&prepared));
        outputs.push(read(&processed));
    }
    Ok(RealizationOutput {
        channel,
        inputs,
        outputs,
    })
}

/// Runs the full tomography campaign. Realizations are simulated in
/// parallel and combined in their listed order.
pub fn run_qpt(setup: &QptSetup) -> Result<QptRun> {
    let n = setup.n_spins;
    let d = 1usize << (2 * n);
    let total: f64 = setup.realizations.iter().map(|r| r.weight).sum();
    if setup.realizations.is_empty() || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "realization weights sum to {total}, not 1"
        )));
    }
    let basis = spinsys::po_basis(n)?;
    let sources: Vec<CMat> = basis
        .iter()
        .map(|p| preparation_gates(p).0.matrix())
        .collect();
    let parts: Vec<RealizationOutput> = setup
        .realizations
        .par_iter()
        .map(|re| simulate_realization(setup, re, &sources))
        .collect::<Result<_>>()?;
    let k = setup.design.observables().len();
    let n_read = setup.design.readouts().len();
    let mut channel = CMat::zeros(d, d);
    let mut inputs = vec![vec![vec![0.0; k]; n_read]; d];
    let mut outputs = inputs.clone();
    for (re, part) in setup.realizations.iter().zip(&parts) {
        channel += &part.channel * c(re.weight, 0.0);
        for a in 0..d {
            for r in 0..n_read {
                for j in 0..k {
                    inputs[a][r][j] += re.weight * part.inputs[a][r][j];
                    outputs[a][r][j] += re.weight * part.outputs[a][r][j];
                }
            }
        }
    }
    // The identity input is known exactly; its output is measured so that
    // non-unital channels are reconstructed. Trace preservation fixes every
    // identity coefficient.
    let mut r_in = CMat::zeros(d, d);
    let mut r_out = CMat::zeros(d, d);
    let mut input_records = Vec::with_capacity(d);
    let mut output_records = Vec::with_capacity(d);
    for a in 0..d {
        let x0 = if a == 0 { 1.0 } else { 0.0 };
        for (phase, obs, target, records) in [
            (1u64, &mut inputs[a], &mut r_in, &mut input_records),
            (2u64, &mut outputs[a], &mut r_out, &mut output_records),
        ] {
            if phase == 1 && a == 0 {
                target[(0, 0)] = c(1.0, 0.0);
                records.push(Vec::new());
                continue;
            }
            for (r, o) in obs.iter_mut().enumerate() {
                setup.noise.perturb(o, phase, a, r);
            }
            let x = setup.design.estimate(obs, x0)?;
            for (b, v) in x.iter().enumerate() {
                target[(b, a)] = c(*v, 0.0);
            }
            records.push(
                obs.iter()
                    .enumerate()
                    .map(|(r, o)| TomographyRecord {
                        readout: r,
                        observed: o.clone(),
                    })
                    .collect(),
            );
        }
    }
    let condition_number = linalg::condition_number(&r_in);
    let m_obs = reconstruct_supermatrix(&r_in, &r_out, setup.condition_bound)?;
    Ok(QptRun {
        input_labels: basis.iter().map(PauliProduct::label).collect(),
        input_records,
        output_records,
        r_in,
        r_out,
        m_obs,
        simulated: Supermatrix::new(channel, Basis::ProductOperator)?,
        condition_number,
        seed: setup.noise.seed,
    })
}

/// Independent error sources of the simulated experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Toggles {
    /// Gates, preparations and readouts use the designed pulse library
    /// instead of exact unitaries.
    pub designed_pulses: bool,
    /// Average over the RF histogram instead of the nominal scale only.
    pub incoherence: bool,
    /// Average over spectator spin configurations.
    pub spectators: bool,
    pub relaxation: bool,
    pub noise: bool,
    /// Inputs are made by preparation pulses from longitudinal sources.
    pub preparation: bool,
}

impl Toggles {
    pub fn all() -> Self {
        Toggles {
            designed_pulses: true,
            incoherence: true,
            spectators: true,
            relaxation: true,
            noise: true,
            preparation: true,
        }
    }
}

/// Inputs for building the simulated QFT experiment.
#[derive(Debug, Clone)]
pub struct PipelineSpec<'a> {
    pub sys: &'a SpinSystem,
    /// Designed pulse library, required when designed pulses are enabled.
    pub library: Option<&'a PulseLibrary>,
    pub histogram: &'a RfHistogram,
    pub relaxation: Option<&'a RelaxationModel>,
    pub noise_sigma: f64,
    pub seed: u64,
    pub toggles: Toggles,
    pub condition_bound: f64,
}

fn gate_steps(
    gates: &[Gate],
    sys: &SpinSystem,
    library: &PulseLibrary,
    scale: f64,
    spectator: Option<usize>,
) -> Result<Vec<Step>> {
    if let [g @ Gate::Relabel(_)] = gates {
        return Ok(vec![Step::Unitary(g.unitary(sys.n_spins())?)]);
    }
    let compiled = pulsesim::compile_to_schedule(gates, sys, library)?;
    let mut steps = Vec::new();
    for g in &compiled.gates {
        steps.push(Step::Unitary(pulsesim::schedule_propagator(
            &g.schedule,
            sys,
            scale,
            spectator,
        )?));
    }
    if compiled.relabel.is_some() {
        steps.push(Step::Unitary(compiled.relabel_unitary(sys.n_spins())?));
    }
    Ok(steps)
}

/// Realizations of the QFT experiment for the given toggles. Per-rate
/// relaxation follows every gate for that gate's duration; the uniform model
/// is applied once after the whole process.
pub fn qft_realizations(spec: &PipelineSpec, design: &TomographyDesign) -> Result<Vec<Realization>> {
    let sys = spec.sys;
    let n = sys.n_spins();
    let t = spec.toggles;
    let ideal = PulseLibrary::Ideal;
    let library = if t.designed_pulses {
        spec.library.ok_or_else(|| {
            Error::config("pipeline", "designed pulses are enabled but no pulse library is given")
        })?
    } else {
        &ideal
    };
    // Gate durations for relaxation come from the pulse library when one is
    // given, otherwise from the ideal-pulse expansion with its coupling delays.
    let timing_default = PulseLibrary::IdealPulses { nominal_rf_hz: 1.0 };
    let timing = spec.library.unwrap_or(&timing_default);
    let circuit = pulsesim::qft_circuit(n)?;
    let relax = if t.relaxation { spec.relaxation } else { None };
    if t.relaxation && relax.is_none() {
        return Err(Error::config("pipeline", "relaxation is enabled but no model is given"));
    }
    let mut decays: Vec<Option<Step>> = Vec::new();
    for g in &circuit {
        decays.push(match (relax, g) {
            (Some(RelaxationModel::PoRates { .. }), Gate::Relabel(_)) => None,
            (Some(m @ RelaxationModel::PoRates { .. }), g) => {
                let duration = timing.gate_schedule(g, sys)?.duration();
                Some(Step::Decay(m.decay_factors(n, duration)?))
            }
            _ => None,
        });
    }
    let final_decay = match relax {
        Some(m @ RelaxationModel::Uniform { .. }) => Some(Step::Decay(m.decay_factors(n, 0.0)?)),
        _ => None,
    };
    let hist = if t.incoherence {
        spec.histogram.clone()
    } else {
        RfHistogram::single(1.0)
    };
    let configs: Vec<(f64, Option<usize>)> = if t.spectators && !sys.spectators().is_empty() {
        let m = sys.spectator_configurations();
        (0..m).map(|k| (1.0 / m as f64, Some(k))).collect()
    } else {
        vec![(1.0, None)]
    };
    let jobs: Vec<(f64, f64, Option<usize>)> = hist
        .bins()
        .iter()
        .flat_map(|b| configs.iter().map(move |&(w, k)| (b.weight * w, b.scale, k)))
        .collect();
    let basis = spinsys::po_basis(n)?;
    jobs.par_iter()
        .map(|&(weight, scale, spectator)| {
            let mut process = Vec::new();
            for (g, decay) in circuit.iter().zip(&decays) {
                process.extend(gate_steps(std::slice::from_ref(g), sys, library, scale, spectator)?);
                if let Some(d) = decay {
                    process.push(d.clone());
                }
            }
            if let Some(d) = &final_decay {
                process.push(d.clone());
            }
            let preparations = if t.preparation {
                basis
                    .iter()
                    .map(|p| {
                        let (_, gates) = preparation_gates(p);
                        if gates.is_empty() {
                            Ok(Vec::new())
                        } else {
                            gate_steps(&gates, sys, library, scale, spectator)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            let readouts = design
                .readouts()
                .iter()
                .map(|r| {
                    if r.gates.is_empty() {
                        return Ok(linalg::identity(1 << n));
                    }
                    let steps = gate_steps(&r.gates, sys, library, scale, spectator)?;
                    Ok(steps.iter().fold(linalg::identity(1 << n), |acc, s| match s {
                        Step::Unitary(u) => u * acc,
                        _ => acc,
                    }))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Realization {
                weight,
                preparations,
                process,
                readouts,
            })
        })
        .collect()
}

/// Builds and runs the QFT tomography experiment.
pub fn run_qft_pipeline(spec: &PipelineSpec) -> Result<QptRun> {
    let n = spec.sys.n_spins();
    let design = TomographyDesign::new(n, readout_pulses(n)?)?;
    let realizations = qft_realizations(spec, &design)?;
    let sigma = if spec.toggles.noise { spec.noise_sigma } else { 0.0 };
    run_qpt(&QptSetup {
        n_spins: n,
        realizations,
        design,
        noise: NoiseModel::new(sigma, spec.seed)?,
        condition_bound: spec.condition_bound,
    })
}

/// The ideal QFT supermatrix in the product-operator basis.
pub fn theoretical_qft(n: usize) -> Result<Supermatrix> {
    Ok(superop::unitary_superop(&pulsesim::qft_unitary(n)?)?.in_basis(Basis::ProductOperator))
}

/// Single-realization setup for an arbitrary channel with exact inputs and
/// ideal readouts.
pub fn channel_setup(s: &Supermatrix, noise: NoiseModel) -> Result<QptSetup> {
    let n = s.n_spins();
    let design = TomographyDesign::new(n, readout_pulses(n)?)?;
    let readouts = design.readout_unitaries()?;
    Ok(QptSetup {
        n_spins: n,
        realizations: vec![Realization {
            weight: 1.0,
            preparations: Vec::new(),
            process: vec![Step::Channel(s.in_basis(Basis::ProductOperator).into_matrix())],
            readouts,
        }],
        design,
        noise,
        condition_bound: DEFAULT_CONDITION_BOUND,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use proptest::prelude::*;

    #[test]
    fn shipped_readouts_cover_everything() {
        let r = readout_pulses(3).unwrap();
        assert_eq!(r.len(), 7);
        assert_eq!(r[5].gates.iter().map(|g| g.label()).collect::<Vec<_>>(), ["x90:1", "y90:2,3"]);
        let (missing, rank) = coverage_gaps(3, &r[..1]).unwrap();
        assert_eq!(63 - missing.len(), 24);
        assert!(rank < 63);
        let (missing, rank) = coverage_gaps(3, &r).unwrap();
        assert!(missing.is_empty());
        assert_eq!(rank, 63);
        assert!(matches!(verify_coverage(3, &r[..3]), Err(Error::Coverage { .. })));
    }

    #[test]
    fn single_spin_readouts() {
        let r = readout_pulses(1).unwrap();
        let mut labels: Vec<&str> = r.iter().map(|x| x.label.as_str()).collect();
        labels.sort();
        assert_eq!(labels, ["1", "x", "y"]);
        for n in [2, 4] {
            readout_pulses(n).unwrap();
        }
    }

    #[test]
    fn preparation_from_longitudinal_sources() {
        for a in 1..64 {
            let p = PauliProduct::from_index(3, a);
            let (source, gates) = preparation_gates(&p);
            assert!(source.factors().iter().all(|f| matches!(f, Pauli::I | Pauli::Z)));
            let u = pulsesim::circuit_unitary(&gates, 3).unwrap();
            let out = &u * source.matrix() * u.adjoint();
            assert!((out - p.matrix()).norm() < 1e-12, "{}", p.label());
        }
        let states = prepare_input_states(3, None).unwrap();
        assert_eq!(states[1].matrix(), &PauliProduct::from_label("11X").unwrap().matrix());
    }

    #[test]
    fn noiseless_tomography_is_exact() {
        let design = TomographyDesign::new(3, readout_pulses(3).unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let h = random::hermitian(8, &mut rng);
        let rho = DensityMatrix::new(h, true).unwrap();
        let est = state_tomography(&rho, &design, &NoiseModel::none(), None).unwrap();
        let err = (est.matrix() - rho.matrix()).norm();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn noisy_tomography_error_matches_calibration() {
        let design = TomographyDesign::new(3, readout_pulses(3).unwrap()).unwrap();
        let rho = DensityMatrix::from_product(&PauliProduct::from_label("XZY").unwrap());
        let sigma = 0.01;
        let mut total = 0.0;
        for seed in 0..100 {
            let est = state_tomography(&rho, &design, &NoiseModel::new(sigma, seed).unwrap(), None).unwrap();
            let err = spinsys::po_decompose(&(est.matrix() - rho.matrix())).unwrap();
            total += err.iter().map(|e| e * e).sum::<f64>() / 63.0;
        }
        let rms = (total / 100.0).sqrt();
        assert!(rms < 3.0 * sigma / design.redundancy().sqrt(), "{rms}");
        assert!(rms > 0.0);
    }

    #[test]
    fn incoherent_readout_lowers_correlation() {
        let design = TomographyDesign::new(1, readout_pulses(1).unwrap()).unwrap();
        let sys = SpinSystem::new(vec![0.0], vec![vec![0.0]], spinsys::CouplingForm::Isotropic, vec![]).unwrap();
        let channels: Vec<Supermatrix> = design
            .readouts()
            .iter()
            .map(|r| {
                let items = r
                    .gates
                    .iter()
                    .map(|g| match g {
                        Gate::Rotation { axis, degrees, spins } => pulsesim::ScheduleItem::Hard(pulsesim::HardPulse {
                            spins: spins.clone(),
                            phase_rad: axis.phase(),
                            angle_rad: degrees.to_radians(),
                        }),
                        _ => unreachable!(),
                    })
                    .collect::<Vec<_>>();
                if items.is_empty() {
                    return Supermatrix::identity(1, Basis::Zeeman).unwrap();
                }
                let sched = pulsesim::PulseSchedule::new(1.0, items).unwrap();
                pulsesim::incoherent_superop(&sched, &sys, &RfHistogram::two_bin(0.2), false).unwrap().supermatrix
            })
            .collect();
        let m = PauliProduct::from_label("X").unwrap().matrix() + PauliProduct::from_label("Z").unwrap().matrix();
        let rho = DensityMatrix::new(m, true).unwrap();
        let est = state_tomography(&rho, &design, &NoiseModel::none(), Some(&channels)).unwrap();
        let corr = superop::state_correlation(rho.matrix(), est.matrix()).unwrap();
        assert!(corr < 1.0 - 1e-6, "{corr}");
    }

    #[test]
    fn reconstruction_rejects_ill_conditioned_inputs() {
        let mut r_in = linalg::identity(4);
        r_in[(3, 3)] = c(1e-9, 0.0);
        assert!(matches!(
            reconstruct_supermatrix(&r_in, &linalg::identity(4), DEFAULT_CONDITION_BOUND),
            Err(Error::IllConditioned { .. })
        ));
        let s = reconstruct_supermatrix(&linalg::identity(4), &linalg::identity(4), 10.0).unwrap();
        assert_eq!(s, Supermatrix::identity(1, Basis::ProductOperator).unwrap());
    }

    #[test]
    fn random_channel_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for n in [1, 2, 3] {
            let k = random::cptp_kraus(n, 3, &mut rng);
            let s = superop::super_of_kraus(&k);
            let run = run_qpt(&channel_setup(&s, NoiseModel::none()).unwrap()).unwrap();
            let diff = run.m_obs.matrix() - s.in_basis(Basis::ProductOperator).matrix();
            assert!(diff.norm() < 1e-8, "n={n}: {}", diff.norm());
        }
    }

    #[test]
    fn noise_degrades_correlation_monotonically() {
        let s = theoretical_qft(2).unwrap();
        let mut previous = 1.0 + 1e-12;
        for sigma in [0.0, 0.01, 0.03, 0.1, 0.3] {
            let mean: f64 = (0..8)
                .map(|seed| {
                    let run = run_qpt(&channel_setup(&s, NoiseModel::new(sigma, seed).unwrap()).unwrap()).unwrap();
                    superop::super_correlation(&s, &run.m_obs).unwrap()
                })
                .sum::<f64>()
                / 8.0;
            assert!(mean <= previous, "sigma {sigma}: {mean} > {previous}");
            previous = mean;
        }
        assert!(previous < 0.9);
    }

    #[test]
    fn noiseless_pipeline_recovers_ideal_qft() {
        let sys = SpinSystem::alanine();
        let hist = RfHistogram::synthetic_default();
        let spec = PipelineSpec {
            sys: &sys,
            library: None,
            histogram: &hist,
            relaxation: None,
            noise_sigma: 0.01,
            seed: 7,
            toggles: Toggles::default(),
            condition_bound: DEFAULT_CONDITION_BOUND,
        };
        let run = run_qft_pipeline(&spec).unwrap();
        let th = theoretical_qft(3).unwrap();
        assert!((superop::super_correlation(&th, &run.m_obs).unwrap() - 1.0).abs() < 1e-8);
        assert!((run.condition_number - 1.0).abs() < 1e-10);
        let again = run_qft_pipeline(&spec).unwrap();
        assert_eq!(run.m_obs, again.m_obs);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn noise_streams_are_order_independent(seed in any::<u64>(), a in 1usize..64, r in 0usize..7) {
            let noise = NoiseModel::new(0.1, seed).unwrap();
            let mut x = vec![0.0; 24];
            let mut y = vec![0.0; 24];
            noise.perturb(&mut x, 1, a, r);
            noise.perturb(&mut vec![0.0; 24], 2, a, r);
            noise.perturb(&mut y, 1, a, r);
            prop_assert_eq!(x, y);
        }
    }
}
