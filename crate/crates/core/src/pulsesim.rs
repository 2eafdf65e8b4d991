//! Pulse-level simulation: piecewise-constant RF propagators, RF
//! inhomogeneity averaging, circuit compilation and pulse design.
//!
//! During an interval of constant parameters the RF Hamiltonian is
//! `(s·α·γB₁/2) Σ_j (cos(2πνt + φ) σx^j + sin(2πνt + φ) σy^j)` with `t` measured
//! from the start of the interval and `s` the inhomogeneity scale. A resonant
//! interval of length `t` thus rotates each spin by `s·α·γB₁·t` about the axis
//! at angle `φ` in the xy plane.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, c, CMat};
use crate::optim::{self, NelderMeadOptions};
use crate::spinsys::{self, SpinSystem};
use crate::superop::{Basis, KrausSet, Supermatrix};

/// Unitarity tolerance every propagator is checked against in tests.
pub const PROPAGATOR_UNITARY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseInterval {
    pub duration_s: f64,
    /// Amplitude relative to the nominal γB₁.
    pub amplitude: f64,
    pub frequency_hz: f64,
    pub phase_rad: f64,
}

impl PulseInterval {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "pulse interval duration {} must be positive",
                self.duration_s
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "pulse interval amplitude {} must be nonnegative",
                self.amplitude
            )));
        }
        if !self.frequency_hz.is_finite() || !self.phase_rad.is_finite() {
            return Err(Error::InvalidInput(
                "pulse interval frequency and phase must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Direction of a rotation axis in the transverse plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    MinusX,
    MinusY,
}

impl Axis {
    pub fn phase(self) -> f64 {
        match self {
            Axis::X => 0.0,
            Axis::Y => PI / 2.0,
            Axis::MinusX => PI,
            Axis::MinusY => -PI / 2.0,
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::MinusX => "-x",
            Axis::MinusY => "-y",
        }
    }
}

/// Elementary operations of a compiled circuit. Labels are the keys of a
/// pulse library: `x90:1`, `-y90:1,2`, `x22.5:1,3`, `H:2`, `B(45):1,3`,
/// `relabel:3,2,1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    /// Simultaneous rotation of the listed spins by `degrees` about `axis`.
    Rotation {
        axis: Axis,
        degrees: f64,
        spins: Vec<usize>,
    },
    Hadamard(usize),
    /// diag(1, 1, 1, e^{iθ}) on spins (j, k).
    ControlledPhase { j: usize, k: usize, degrees: f64 },
    /// New spin `i` carries the state of old spin `order[i-1]`.
    Relabel(Vec<usize>),
}

fn parse_spins(text: &str, label: &str) -> Result<Vec<usize>> {
    let spins: Vec<usize> = text
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::UnknownGate(label.to_string()))?;
    if spins.is_empty() || spins.contains(&0) {
        return Err(Error::UnknownGate(label.to_string()));
    }
    let mut sorted = spins.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != spins.len() {
        return Err(Error::UnknownGate(label.to_string()));
    }
    Ok(spins)
}

fn format_spins(spins: &[usize]) -> String {
    spins
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl Gate {
    pub fn parse(label: &str) -> Result<Gate> {
        let unknown = || Error::UnknownGate(label.to_string());
        let (head, spins) = label.split_once(':').ok_or_else(unknown)?;
        if head == "H" {
            let s = parse_spins(spins, label)?;
            return match s.as_slice() {
                [j] => Ok(Gate::Hadamard(*j)),
                _ => Err(unknown()),
            };
        }
        if head == "relabel" {
            let order = parse_spins(spins, label)?;
            let mut sorted = order.clone();
            sorted.sort_unstable();
            if sorted != (1..=order.len()).collect::<Vec<_>>() {
                return Err(unknown());
            }
            return Ok(Gate::Relabel(order));
        }
        if let Some(angle) = head.strip_prefix("B(").and_then(|r| r.strip_suffix(')')) {
            let degrees: f64 = angle.parse().map_err(|_| unknown())?;
            let s = parse_spins(spins, label)?;
            return match s.as_slice() {
                [j, k] if degrees.is_finite() => Ok(Gate::ControlledPhase {
                    j: *j,
                    k: *k,
                    degrees,
                }),
                _ => Err(unknown()),
            };
        }
        let (axis, rest) = if let Some(r) = head.strip_prefix("-x") {
            (Axis::MinusX, r)
        } else if let Some(r) = head.strip_prefix("-y") {
            (Axis::MinusY, r)
        } else if let Some(r) = head.strip_prefix('x') {
            (Axis::X, r)
        } else if let Some(r) = head.strip_prefix('y') {
            (Axis::Y, r)
        } else {
            return Err(unknown());
        };
        let degrees: f64 = rest.parse().map_err(|_| unknown())?;
        if !degrees.is_finite() || rest.starts_with('+') || rest.starts_with('-') {
            return Err(unknown());
        }
        Ok(Gate::Rotation {
            axis,
            degrees,
            spins: parse_spins(spins, label)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            Gate::Rotation {
                axis,
                degrees,
                spins,
            } => format!("{}{}:{}", axis.prefix(), degrees, format_spins(spins)),
            Gate::Hadamard(j) => format!("H:{j}"),
            Gate::ControlledPhase { j, k, degrees } => format!("B({degrees}):{j},{k}"),
            Gate::Relabel(order) => format!("relabel:{}", format_spins(order)),
        }
    }

    pub fn spins(&self) -> Vec<usize> {
        match self {
            Gate::Rotation { spins, .. } => spins.clone(),
            Gate::Hadamard(j) => vec![*j],
            Gate::ControlledPhase { j, k, .. } => vec![*j, *k],
            Gate::Relabel(order) => order.clone(),
        }
    }

    fn check_spins(&self, n: usize) -> Result<()> {
        if let Gate::Relabel(order) = self {
            if order.len() != n {
                return Err(Error::InvalidInput(format!(
                    "`{}` does not permute {n} spins",
                    self.label()
                )));
            }
        }
        if self.spins().iter().any(|&s| s == 0 || s > n) {
            return Err(Error::InvalidInput(format!(
                "`{}` addresses a spin outside 1..={n}",
                self.label()
            )));
        }
        Ok(())
    }

    /// Ideal unitary on an `n`-spin system.
    pub fn unitary(&self, n: usize) -> Result<CMat> {
        spinsys::check_spin_count(n)?;
        self.check_spins(n)?;
        let dim = 1usize << n;
        Ok(match self {
            Gate::Rotation {
                axis,
                degrees,
                spins,
            } => {
                let r = linalg::xy_rotation(axis.phase(), degrees.to_radians());
                product_on_spins(n, spins, &r)
            }
            Gate::Hadamard(j) => {
                let h = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)])
                    * c(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                linalg::embed(&h, *j, n)
            }
            Gate::ControlledPhase { j, k, degrees } => {
                let phase = num_complex::Complex64::from_polar(1.0, degrees.to_radians());
                let (bj, bk) = (1 << (n - j), 1 << (n - k));
                CMat::from_fn(dim, dim, |r, col| {
                    if r != col {
                        c(0.0, 0.0)
                    } else if r & bj != 0 && r & bk != 0 {
                        phase
                    } else {
                        c(1.0, 0.0)
                    }
                })
            }
            Gate::Relabel(order) => {
                let mut p = CMat::zeros(dim, dim);
                for old in 0..dim {
                    let bit = |spin: usize| (old >> (n - spin)) & 1;
                    let new = order
                        .iter()
                        .enumerate()
                        .fold(0, |acc, (i, &src)| acc | (bit(src) << (n - 1 - i)));
                    p[(new, old)] = c(1.0, 0.0);
                }
                p
            }
        })
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// ⊗ of `op` on every listed spin and identity elsewhere.
pub fn product_on_spins(n: usize, spins: &[usize], op: &CMat) -> CMat {
    let mut out = linalg::identity(1);
    for s in 1..=n {
        out = if spins.contains(&s) {
            linalg::kron(&out, op)
        } else {
            linalg::kron(&out, &linalg::identity(2))
        };
    }
    out
}

/// A free-evolution period split into segments, with ideal π rotations about
/// x applied to the listed spins after each segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delay {
    pub segments_s: Vec<f64>,
    /// `flips[i]` are the spins inverted after segment `i`.
    pub flips: Vec<Vec<usize>>,
}

impl Delay {
    pub fn plain(duration_s: f64) -> Delay {
        Delay {
            segments_s: vec![duration_s],
            flips: vec![vec![]],
        }
    }

    /// Keeps only the coupling between `j` and `k` active over `duration_s`
    /// in an `n`-spin system: spin z-signs follow rows of a Walsh–Hadamard
    /// matrix so that every offset and every other pairwise product averages
    /// to zero while the (j, k) product stays positive.
    pub fn coupling_only(n: usize, j: usize, k: usize, duration_s: f64) -> Delay {
        let others: Vec<usize> = (1..=n).filter(|&s| s != j && s != k).collect();
        let rows = others.len() + 1;
        let order = (rows + 1).next_power_of_two().max(2);
        let segments = order;
        let walsh = |row: usize, seg: usize| -> i32 {
            if (row & seg).count_ones() % 2 == 0 {
                1
            } else {
                -1
            }
        };
        // Row 1 for the pair, rows 2.. for the rest (row 0 is constant).
        let mut sign = vec![vec![1i32; segments]; n + 1];
        for (seg, item) in sign[j].iter_mut().enumerate() {
            *item = walsh(1, seg);
        }
        sign[k] = sign[j].clone();
        for (idx, &s) in others.iter().enumerate() {
            for seg in 0..segments {
                sign[s][seg] = walsh(idx + 2, seg);
            }
        }
        let mut flips = vec![Vec::new(); segments];
        for s in 1..=n {
            for seg in 0..segments {
                let next = if seg + 1 < segments { sign[s][seg + 1] } else { 1 };
                if next != sign[s][seg] {
                    flips[seg].push(s);
                }
            }
        }
        Delay {
            segments_s: vec![duration_s / segments as f64; segments],
            flips,
        }
    }

    pub fn duration(&self) -> f64 {
        self.segments_s.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments_s.len() != self.flips.len() || self.segments_s.is_empty() {
            return Err(Error::InvalidInput(
                "delay needs one flip list per segment".into(),
            ));
        }
        if self.segments_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidInput(
                "delay segments must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// An instantaneous rotation of the listed spins whose angle scales with the
/// RF inhomogeneity factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardPulse {
    pub spins: Vec<usize>,
    pub phase_rad: f64,
    pub angle_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleItem {
    Interval(PulseInterval),
    Delay(Delay),
    Ideal {
        gate: String,
    },
    Hard(HardPulse),
}

impl ScheduleItem {
    pub fn ideal(gate: &Gate) -> ScheduleItem {
        ScheduleItem::Ideal { gate: gate.label() }
    }

    pub fn duration(&self) -> f64 {
        match self {
            ScheduleItem::Interval(iv) => iv.duration_s,
            ScheduleItem::Delay(d) => d.duration(),
            ScheduleItem::Ideal { .. } | ScheduleItem::Hard(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSchedule {
    /// Nominal RF strength γB₁/2π in Hz.
    pub nominal_rf_hz: f64,
    pub items: Vec<ScheduleItem>,
}

pub const SCHEDULE_SCHEMA: &str = "qptsim-schedule/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleFile {
    schema: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fidelity: Option<f64>,
    nominal_rf_hz: f64,
    items: Vec<ScheduleItem>,
}

impl PulseSchedule {
    pub fn new(nominal_rf_hz: f64, items: Vec<ScheduleItem>) -> Result<Self> {
        let s = PulseSchedule {
            nominal_rf_hz,
            items,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.items.is_empty() {
            return Err(Error::InvalidInput("schedule has no items".into()));
        }
        if !(self.nominal_rf_hz.is_finite() && self.nominal_rf_hz > 0.0) {
            return Err(Error::InvalidInput(
                "nominal RF strength must be positive".into(),
            ));
        }
        for item in &self.items {
            match item {
                ScheduleItem::Interval(iv) => iv.validate()?,
                ScheduleItem::Delay(d) => d.validate()?,
                ScheduleItem::Ideal { gate } => {
                    Gate::parse(gate)?;
                }
                ScheduleItem::Hard(h) => {
                    if !h.angle_rad.is_finite() || !h.phase_rad.is_finite() || h.spins.is_empty() {
                        return Err(Error::InvalidInput("invalid hard pulse".into()));
                    }
                }
            }
        }
        if !self.duration().is_finite() {
            return Err(Error::InvalidInput("schedule duration is not finite".into()));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.items.iter().map(ScheduleItem::duration).sum()
    }

    pub fn nominal_rf_rad_per_s(&self) -> f64 {
        2.0 * PI * self.nominal_rf_hz
    }

    /// Appends `other`, rescaling its amplitudes to this schedule's nominal RF.
    pub fn extend(&mut self, other: &PulseSchedule) {
        let ratio = other.nominal_rf_hz / self.nominal_rf_hz;
        for item in &other.items {
            self.items.push(match item {
                ScheduleItem::Interval(iv) => ScheduleItem::Interval(PulseInterval {
                    amplitude: iv.amplitude * ratio,
                    ..*iv
                }),
                other => other.clone(),
            });
        }
    }

    pub fn to_toml_string(&self, label: Option<&str>, fidelity: Option<f64>) -> String {
        let file = ScheduleFile {
            schema: SCHEDULE_SCHEMA.into(),
            label: label.map(str::to_string),
            fidelity,
            nominal_rf_hz: self.nominal_rf_hz,
            items: self.items.clone(),
        };
        toml::to_string(&file).expect("schedule serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScheduleFile =
            toml::from_str(text).map_err(|e| Error::config("pulse schedule", e.to_string()))?;
        if file.schema != SCHEDULE_SCHEMA {
            return Err(Error::config(
                "pulse schedule field `schema`",
                format!("expected `{SCHEDULE_SCHEMA}`, found `{}`", file.schema),
            ));
        }
        Self::new(file.nominal_rf_hz, file.items)
            .map_err(|e| Error::config("pulse schedule", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| prefix_config(path, e))
    }
}

fn prefix_config(path: &Path, e: Error) -> Error {
    match e {
        Error::Config { context, message } => {
            Error::config(format!("{} ({context})", path.display()), message)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfBin {
    pub scale: f64,
    pub weight: f64,
}

/// Distribution of RF amplitude scales across the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct RfHistogram {
    bins: Vec<RfBin>,
}

pub const HISTOGRAM_SCHEMA: &str = "qptsim-histogram/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramFile {
    schema: String,
    bins: Vec<RfBin>,
}

impl RfHistogram {
    /// Weights must be nonnegative and sum to 1 within 1e-9.
    pub fn new(bins: Vec<RfBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidInput("histogram has no bins".into()));
        }
        if bins
            .iter()
            .any(|b| !(b.scale.is_finite() && b.scale > 0.0 && b.weight.is_finite() && b.weight >= 0.0))
        {
            return Err(Error::InvalidInput(
                "histogram scales must be positive and weights nonnegative".into(),
            ));
        }
        let total: f64 = bins.iter().map(|b| b.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "histogram weights sum to {total}, not 1"
            )));
        }
        Ok(RfHistogram { bins })
    }

    pub fn single(scale: f64) -> Self {
        RfHistogram {
            bins: vec![RfBin { scale, weight: 1.0 }],
        }
    }

    /// Two equally weighted bins at 1 ± `spread`.
    pub fn two_bin(spread: f64) -> Self {
        RfHistogram {
            bins: vec![
                RfBin {
                    scale: 1.0 - spread,
                    weight: 0.5,
                },
                RfBin {
                    scale: 1.0 + spread,
                    weight: 0.5,
                },
            ],
        }
    }

    /// 33 bins from 0.76 to 1.08 in steps of 0.01, peaked at 1.0 with a
    /// half-Gaussian of width 0.045 below the peak and 0.015 above it.
    pub fn synthetic_default() -> Self {
        let raw: Vec<(f64, f64)> = (0..33)
            .map(|i| {
                let scale = 0.76 + 0.01 * i as f64;
                let d = scale - 1.0;
                let width = if d < 0.0 { 0.045 } else { 0.015 };
                (scale, (-0.5 * (d / width).powi(2)).exp())
            })
            .collect();
        let total: f64 = raw.iter().map(|r| r.1).sum();
        RfHistogram {
            bins: raw
                .into_iter()
                .map(|(scale, w)| RfBin {
                    scale: (scale * 100.0).round() / 100.0,
                    weight: w / total,
                })
                .collect(),
        }
    }

    /// Merges neighbouring bins into at most `groups` bins of roughly equal
    /// weight, each placed at its weighted mean scale.
    pub fn coarsen(&self, groups: usize) -> RfHistogram {
        let groups = groups.max(1);
        let mut out: Vec<RfBin> = Vec::new();
        let (mut w, mut ws, mut cumulative) = (0.0, 0.0, 0.0);
        for b in &self.bins {
            w += b.weight;
            ws += b.weight * b.scale;
            cumulative += b.weight;
            if cumulative >= (out.len() + 1) as f64 / groups as f64 - 1e-12 && w > 0.0 {
                out.push(RfBin { scale: ws / w, weight: w });
                w = 0.0;
                ws = 0.0;
            }
        }
        if w > 0.0 {
            out.push(RfBin { scale: ws / w, weight: w });
        }
        let total: f64 = out.iter().map(|b| b.weight).sum();
        for b in &mut out {
            b.weight /= total;
        }
        RfHistogram { bins: out }
    }

    pub fn bins(&self) -> &[RfBin] {
        &self.bins
    }

    pub fn mean_scale(&self) -> f64 {
        self.bins.iter().map(|b| b.weight * b.scale).sum()
    }

    pub fn rms_spread(&self) -> f64 {
        let mean = self.mean_scale();
        self.bins
            .iter()
            .map(|b| b.weight * (b.scale - mean).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&HistogramFile {
            schema: HISTOGRAM_SCHEMA.into(),
            bins: self.bins.clone(),
        })
        .expect("histogram serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: HistogramFile =
            toml::from_str(text).map_err(|e| Error::config("RF histogram", e.to_string()))?;
        if file.schema != HISTOGRAM_SCHEMA {
            return Err(Error::config(
                "RF histogram field `schema`",
                format!("expected `{HISTOGRAM_SCHEMA}`, found `{}`", file.schema),
            ));
        }
        // Accept rounding in stored weights by renormalizing small drift.
        let total: f64 = file.bins.iter().map(|b| b.weight).sum();
        let bins = if (total - 1.0).abs() > 1e-12 && (total - 1.0).abs() < 1e-6 {
            file.bins
                .iter()
                .map(|b| RfBin {
                    scale: b.scale,
                    weight: b.weight / total,
                })
                .collect()
        } else {
            file.bins
        };
        Self::new(bins).map_err(|e| Error::config("RF histogram", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| prefix_config(path, e))
    }
}

/// Exact propagator of one constant-parameter interval.
///
/// In the frame rotating about total z at the RF frequency the Hamiltonian is
/// static, so `U = exp(-iΩτZ) · exp(-i(H_int − ΩZ + H_rf)τ)` with `Ω = 2πν`
/// and `Z = Σσz/2`. This requires `H_int` to commute with `Z`.
pub fn interval_propagator(
    h_int: &CMat,
    iv: &PulseInterval,
    scale: f64,
    nominal_rf_rad_per_s: f64,
) -> Result<CMat> {
    iv.validate()?;
    let dim = linalg::ensure_square(h_int)?;
    let n = spinsys::spins_for_dim(dim)?;
    let z = spinsys::total_z(n);
    let omega = 2.0 * PI * iv.frequency_hz;
    let rf = scale * iv.amplitude * nominal_rf_rad_per_s;
    let all: Vec<usize> = (1..=n).collect();
    let h_static = h_int - &z * c(omega, 0.0) + spinsys::transverse_field(n, &all, iv.phase_rad) * c(rf, 0.0);
    let u_rot = linalg::expm_hermitian(&h_static, iv.duration_s)?;
    // exp(-iΩτZ) is diagonal.
    let mut frame = u_rot;
    for r in 0..dim {
        let phase = num_complex::Complex64::from_polar(1.0, -omega * iv.duration_s * z[(r, r)].re);
        let mut row = frame.row_mut(r);
        row *= phase;
    }
    Ok(frame)
}

fn flip_unitary(n: usize, spins: &[usize]) -> CMat {
    product_on_spins(n, spins, &linalg::xy_rotation(0.0, PI))
}

fn hard_unitary(n: usize, hard: &HardPulse, scale: f64) -> Result<CMat> {
    if hard.spins.iter().any(|&s| s == 0 || s > n) {
        return Err(Error::InvalidInput("hard pulse addresses a missing spin".into()));
    }
    Ok(product_on_spins(
        n,
        &hard.spins,
        &linalg::xy_rotation(hard.phase_rad, hard.angle_rad * scale),
    ))
}

/// Free-evolution propagator for a delay (with refocusing flips).
pub fn delay_propagator(h_free: &CMat, delay: &Delay) -> Result<CMat> {
    delay.validate()?;
    let dim = linalg::ensure_square(h_free)?;
    let n = spinsys::spins_for_dim(dim)?;
    let eig = linalg::HermitianEigen::new(h_free)?;
    let mut u = linalg::identity(dim);
    for (t, flips) in delay.segments_s.iter().zip(&delay.flips) {
        let seg = eig.reconstruct_complex(|v| num_complex::Complex64::from_polar(1.0, -v * t));
        u = seg * u;
        if !flips.is_empty() {
            if flips.iter().any(|&s| s == 0 || s > n) {
                return Err(Error::InvalidInput("delay flips a missing spin".into()));
            }
            u = flip_unitary(n, flips) * u;
        }
    }
    Ok(u)
}

/// Unitary of a whole schedule for RF scale `scale`, optionally under the
/// offsets of spectator configuration `spectator`.
pub fn schedule_propagator(
    sched: &PulseSchedule,
    sys: &SpinSystem,
    scale: f64,
    spectator: Option<usize>,
) -> Result<CMat> {
    sched.validate()?;
    let n = sys.n_spins();
    let offsets = match spectator {
        Some(config) => {
            if config >= sys.spectator_configurations() {
                return Err(Error::InvalidInput(format!(
                    "spectator configuration {config} out of range"
                )));
            }
            sys.spectator_offsets(config)
        }
        None => sys.offsets_hz().to_vec(),
    };
    let h = spinsys::hamiltonian_with_offsets(sys, &offsets);
    let rf = sched.nominal_rf_rad_per_s();
    let mut u = linalg::identity(sys.dim());
    for item in &sched.items {
        let step = match item {
            ScheduleItem::Interval(iv) => interval_propagator(&h, iv, scale, rf)?,
            ScheduleItem::Delay(d) => delay_propagator(&h, d)?,
            ScheduleItem::Ideal { gate } => Gate::parse(gate)?.unitary(n)?,
            ScheduleItem::Hard(hard) => hard_unitary(n, hard, scale)?,
        };
        u = step * u;
    }
    Ok(u)
}

/// Weighted unitaries over histogram bins (crossed with spectator
/// configurations when `spectators` is set), in bin-major order.
pub fn weighted_propagators(
    sched: &PulseSchedule,
    sys: &SpinSystem,
    hist: &RfHistogram,
    spectators: bool,
) -> Result<Vec<(f64, CMat)>> {
    let configs: Vec<(f64, Option<usize>)> = if spectators && !sys.spectators().is_empty() {
        let m = sys.spectator_configurations();
        (0..m).map(|cfg| (1.0 / m as f64, Some(cfg))).collect()
    } else {
        vec![(1.0, None)]
    };
    let jobs: Vec<(f64, f64, Option<usize>)> = hist
        .bins()
        .iter()
        .flat_map(|b| configs.iter().map(move |&(w, cfg)| (b.weight * w, b.scale, cfg)))
        .collect();
    jobs.par_iter()
        .map(|&(w, scale, cfg)| Ok((w, schedule_propagator(sched, sys, scale, cfg)?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct IncoherentChannel {
    pub kraus: KrausSet,
    pub supermatrix: Supermatrix,
}

/// Σ_ℓ p_ℓ Ū_ℓ ⊗ U_ℓ together with the Kraus set {√p_ℓ U_ℓ}.
pub fn incoherent_superop(
    sched: &PulseSchedule,
    sys: &SpinSystem,
    hist: &RfHistogram,
    spectators: bool,
) -> Result<IncoherentChannel> {
    let items = weighted_propagators(sched, sys, hist, spectators)?;
    let kraus = KrausSet::from_weighted_unitaries(items.iter().cloned())?;
    let dim = sys.dim();
    let mut m = CMat::zeros(dim * dim, dim * dim);
    for (w, u) in &items {
        m += linalg::kron(&u.conjugate(), u) * c(*w, 0.0);
    }
    Ok(IncoherentChannel {
        kraus,
        supermatrix: Supermatrix::new(m, Basis::Zeeman)?,
    })
}

/// Σ_m |tr(U_th† A_m)|² / N².
pub fn kraus_gate_fidelity(u_th: &CMat, k: &KrausSet) -> Result<f64> {
    let n = u_th.nrows();
    if k.hilbert_dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.hilbert_dim(),
        });
    }
    Ok(k.operators()
        .iter()
        .map(|a| linalg::inner(u_th, a).norm_sqr())
        .sum::<f64>()
        / (n * n) as f64)
}

/// (U)_{x',x} = e^{2πi x x'/N} / √N with spin 1 the most significant bit.
pub fn qft_unitary(n: usize) -> Result<CMat> {
    spinsys::check_spin_count(n)?;
    let dim = 1usize << n;
    let norm = 1.0 / (dim as f64).sqrt();
    Ok(CMat::from_fn(dim, dim, |xp, x| {
        let k = (x * xp) % dim;
        num_complex::Complex64::from_polar(norm, 2.0 * PI * k as f64 / dim as f64)
    }))
}

/// Gate list in application order; the final reversal is a relabeling.
pub fn qft_circuit(n: usize) -> Result<Vec<Gate>> {
    spinsys::check_spin_count(n)?;
    let mut gates = Vec::new();
    for j in 1..=n {
        for k in 1..j {
            gates.push(Gate::ControlledPhase {
                j: k,
                k: j,
                degrees: 180.0 / (1u64 << (j - k)) as f64,
            });
        }
        gates.push(Gate::Hadamard(j));
    }
    if n > 1 {
        gates.push(Gate::Relabel((1..=n).rev().collect()));
    }
    Ok(gates)
}

/// Ordered product of ideal gate unitaries.
pub fn circuit_unitary(gates: &[Gate], n: usize) -> Result<CMat> {
    let mut u = linalg::identity(1 << n);
    for g in gates {
        u = g.unitary(n)? * u;
    }
    Ok(u)
}

/// Source of per-gate schedules.
#[derive(Debug, Clone)]
pub enum PulseLibrary {
    /// Every gate becomes an exact ideal unitary.
    Ideal,
    /// Hadamards and controlled phases are expanded into elementary rotations
    /// and coupling delays; elementary rotations are applied ideally.
    IdealPulses { nominal_rf_hz: f64 },
    /// Elementary rotations come from designed schedules keyed by label.
    Designed {
        nominal_rf_hz: f64,
        entries: BTreeMap<String, PulseSchedule>,
    },
}

pub const LIBRARY_SCHEMA: &str = "qptsim-library/1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    schema: String,
    nominal_rf_hz: f64,
    entries: BTreeMap<String, PathBuf>,
}

/// One compiled gate: its label and the schedule realizing it.
#[derive(Debug, Clone)]
pub struct CompiledGate {
    pub label: String,
    pub schedule: PulseSchedule,
}

#[derive(Debug, Clone)]
pub struct CompiledCircuit {
    pub gates: Vec<CompiledGate>,
    /// Final relabeling, applied to the readout rather than with pulses.
    pub relabel: Option<Gate>,
}

impl CompiledCircuit {
    pub fn duration(&self) -> f64 {
        self.gates.iter().map(|g| g.schedule.duration()).sum()
    }

    /// All gates concatenated into one schedule (relabeling excluded).
    pub fn flattened(&self) -> Option<PulseSchedule> {
        let first = self.gates.first()?;
        let mut out = PulseSchedule {
            nominal_rf_hz: first.schedule.nominal_rf_hz,
            items: Vec::new(),
        };
        for g in &self.gates {
            out.extend(&g.schedule);
        }
        Some(out)
    }

    pub fn relabel_unitary(&self, n: usize) -> Result<CMat> {
        match &self.relabel {
            Some(g) => g.unitary(n),
            None => Ok(linalg::identity(1 << n)),
        }
    }
}

/// Seconds of J-coupling evolution needed for a controlled phase of
/// `theta_rad`; the sign of J decides whether the delay is sandwiched by π
/// pulses on `j`.
pub fn coupling_delay(sys: &SpinSystem, j: usize, k: usize, theta_rad: f64) -> Result<(f64, bool)> {
    let jjk = sys.coupling_hz(j, k);
    if jjk == 0.0 {
        return Err(Error::InvalidInput(format!(
            "spins {j} and {k} are not coupled"
        )));
    }
    let duration = theta_rad.abs() / (2.0 * PI * jjk.abs());
    // Need exp(+iθ/4 σzσz); free evolution gives exp(-i(π/2)Jτ σzσz).
    let sandwich = (jjk > 0.0) == (theta_rad > 0.0);
    Ok((duration, sandwich))
}

/// Elementary gate sequence realizing `gate` with selective rotations and
/// coupling delays.
pub fn expand_gate(gate: &Gate, sys: &SpinSystem) -> Result<Vec<ExpandedStep>> {
    let n = sys.n_spins();
    Ok(match gate {
        Gate::Hadamard(j) => vec![
            ExpandedStep::Rotation(Gate::Rotation {
                axis: Axis::Y,
                degrees: 90.0,
                spins: vec![*j],
            }),
            ExpandedStep::Rotation(Gate::Rotation {
                axis: Axis::X,
                degrees: 180.0,
                spins: vec![*j],
            }),
        ],
        Gate::ControlledPhase { j, k, degrees } => {
            let (duration, sandwich) = coupling_delay(sys, *j, *k, degrees.to_radians())?;
            let flip = Gate::Rotation {
                axis: Axis::X,
                degrees: 180.0,
                spins: vec![*j],
            };
            let mut steps = Vec::new();
            if sandwich {
                steps.push(ExpandedStep::Rotation(flip.clone()));
            }
            steps.push(ExpandedStep::Delay(Delay::coupling_only(n, *j, *k, duration)));
            if sandwich {
                steps.push(ExpandedStep::Rotation(flip));
            }
            let pair = vec![*j, *k];
            steps.push(ExpandedStep::Rotation(Gate::Rotation {
                axis: Axis::Y,
                degrees: 90.0,
                spins: pair.clone(),
            }));
            steps.push(ExpandedStep::Rotation(Gate::Rotation {
                axis: Axis::X,
                degrees: degrees / 2.0,
                spins: pair.clone(),
            }));
            steps.push(ExpandedStep::Rotation(Gate::Rotation {
                axis: Axis::MinusY,
                degrees: 90.0,
                spins: pair,
            }));
            steps
        }
        Gate::Rotation { .. } => vec![ExpandedStep::Rotation(gate.clone())],
        Gate::Relabel(_) => Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpandedStep {
    Rotation(Gate),
    Delay(Delay),
}

impl PulseLibrary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: LibraryFile = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{} (pulse library)", path.display()), e.to_string()))?;
        if file.schema != LIBRARY_SCHEMA {
            return Err(Error::config(
                format!("{} (pulse library field `schema`)", path.display()),
                format!("expected `{LIBRARY_SCHEMA}`, found `{}`", file.schema),
            ));
        }
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut entries = BTreeMap::new();
        for (label, rel) in file.entries {
            let gate = Gate::parse(&label)
                .map_err(|e| Error::config(format!("{} (pulse library)", path.display()), e.to_string()))?;
            let sched = PulseSchedule::load(&base.join(&rel))?;
            entries.insert(gate.label(), sched);
        }
        Ok(PulseLibrary::Designed {
            nominal_rf_hz: file.nominal_rf_hz,
            entries,
        })
    }

    fn nominal_rf_hz(&self) -> f64 {
        match self {
            PulseLibrary::Ideal => 1.0,
            PulseLibrary::IdealPulses { nominal_rf_hz }
            | PulseLibrary::Designed { nominal_rf_hz, .. } => *nominal_rf_hz,
        }
    }

    fn rotation_schedule(&self, gate: &Gate) -> Result<PulseSchedule> {
        match self {
            PulseLibrary::Designed { entries, nominal_rf_hz } => {
                let label = gate.label();
                let found = entries
                    .get(&label)
                    .ok_or(Error::MissingLibraryEntry(label))?;
                let mut s = PulseSchedule {
                    nominal_rf_hz: *nominal_rf_hz,
                    items: Vec::new(),
                };
                s.extend(found);
                Ok(s)
            }
            _ => Ok(PulseSchedule {
                nominal_rf_hz: self.nominal_rf_hz(),
                items: vec![ScheduleItem::ideal(gate)],
            }),
        }
    }

    /// Schedule for a single gate.
    pub fn gate_schedule(&self, gate: &Gate, sys: &SpinSystem) -> Result<PulseSchedule> {
        if let PulseLibrary::Ideal = self {
            return Ok(PulseSchedule {
                nominal_rf_hz: 1.0,
                items: vec![ScheduleItem::ideal(gate)],
            });
        }
        if let PulseLibrary::Designed { entries, .. } = self {
            if let Some(s) = entries.get(&gate.label()) {
                return Ok(s.clone());
            }
        }
        let mut out = PulseSchedule {
            nominal_rf_hz: self.nominal_rf_hz(),
            items: Vec::new(),
        };
        for step in expand_gate(gate, sys)? {
            match step {
                ExpandedStep::Rotation(g) => out.extend(&self.rotation_schedule(&g)?),
                ExpandedStep::Delay(d) => out.items.push(ScheduleItem::Delay(d)),
            }
        }
        Ok(out)
    }

    /// Labels of every designed schedule needed to compile `gates`.
    pub fn required_labels(gates: &[Gate], sys: &SpinSystem) -> Result<Vec<String>> {
        let mut labels = Vec::new();
        for g in gates {
            for step in expand_gate(g, sys)? {
                if let ExpandedStep::Rotation(r) = step {
                    let l = r.label();
                    if !labels.contains(&l) {
                        labels.push(l);
                    }
                }
            }
        }
        Ok(labels)
    }
}

/// Compile a gate list; a trailing relabeling is kept aside.
pub fn compile_to_schedule(
    gates: &[Gate],
    sys: &SpinSystem,
    library: &PulseLibrary,
) -> Result<CompiledCircuit> {
    let mut compiled = Vec::new();
    let mut relabel = None;
    for (i, g) in gates.iter().enumerate() {
        if let Gate::Relabel(_) = g {
            if i + 1 != gates.len() {
                return Err(Error::InvalidInput(
                    "relabeling is only supported as the final gate".into(),
                ));
            }
            relabel = Some(g.clone());
            continue;
        }
        compiled.push(CompiledGate {
            label: g.label(),
            schedule: library.gate_schedule(g, sys)?,
        });
    }
    if compiled.is_empty() {
        return Err(Error::InvalidInput("circuit has no gates".into()));
    }
    Ok(CompiledCircuit {
        gates: compiled,
        relabel,
    })
}

#[derive(Debug, Clone)]
pub struct DesignOptions {
    pub k_max: usize,
    /// Objective evaluations per optimization stage.
    pub budget: usize,
    pub seed: u64,
    /// Random restarts of the nominal-scale search.
    pub restarts: usize,
    /// Most independent seeded design chains; chains stop once one reaches
    /// the fidelity floor and the best result is kept.
    pub chains: usize,
    /// Bins of the intermediate coarse histogram.
    pub coarse_bins: usize,
    pub nominal_rf_hz: f64,
    /// Longest allowed interval.
    pub max_interval_s: f64,
    /// RF frequency search range in Hz.
    pub frequency_range_hz: (f64, f64),
    /// Results below this fidelity are flagged.
    pub fidelity_floor: f64,
    /// Include spectator configurations in the objective.
    pub spectators: bool,
    /// Optional starting schedule; skips the random nominal-scale search.
    pub start: Option<PulseSchedule>,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            k_max: 6,
            budget: 40_000,
            seed: 1,
            restarts: 8,
            chains: 4,
            coarse_bins: 5,
            nominal_rf_hz: 10_000.0,
            max_interval_s: 300e-6,
            frequency_range_hz: (-3_000.0, 15_000.0),
            fidelity_floor: 0.99,
            spectators: false,
            start: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub schedule: PulseSchedule,
    pub fidelity: f64,
    pub below_floor: bool,
    pub evaluations: usize,
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

struct Parameterization {
    k: usize,
    max_t: f64,
    f_lo: f64,
    f_hi: f64,
}

impl Parameterization {
    fn intervals(&self, x: &[f64]) -> Vec<PulseInterval> {
        (0..self.k)
            .map(|i| {
                let p = &x[4 * i..4 * i + 4];
                PulseInterval {
                    duration_s: self.max_t * sigmoid(p[0]).max(1e-9),
                    amplitude: sigmoid(p[1]),
                    frequency_hz: self.f_lo + (self.f_hi - self.f_lo) * sigmoid(p[2]),
                    phase_rad: p[3].rem_euclid(2.0 * PI),
                }
            })
            .collect()
    }

    fn encode(&self, ivs: &[PulseInterval]) -> Vec<f64> {
        let mut x = Vec::with_capacity(4 * self.k);
        for i in 0..self.k {
            match ivs.get(i) {
                Some(iv) => {
                    x.push(logit(iv.duration_s / self.max_t));
                    x.push(logit(iv.amplitude));
                    x.push(logit((iv.frequency_hz - self.f_lo) / (self.f_hi - self.f_lo)));
                    x.push(iv.phase_rad);
                }
                None => x.extend_from_slice(&[-6.0, 0.0, 0.0, 0.0]),
            }
        }
        x
    }
}

/// Fidelity of a schedule against a target under an RF histogram.
pub fn schedule_fidelity(
    target: &CMat,
    sched: &PulseSchedule,
    sys: &SpinSystem,
    hist: &RfHistogram,
    spectators: bool,
) -> Result<f64> {
    let items = weighted_propagators(sched, sys, hist, spectators)?;
    let n2 = (target.nrows() * target.nrows()) as f64;
    Ok(items
        .iter()
        .map(|(w, u)| w * linalg::inner(target, u).norm_sqr())
        .sum::<f64>()
        / n2)
}

struct DesignProblem<'a> {
    target: &'a CMat,
    h_configs: Vec<(f64, CMat)>,
    param: Parameterization,
    rf_rad: f64,
    opts: &'a DesignOptions,
}

impl DesignProblem<'_> {
    fn infidelity(&self, x: &[f64], hist: &RfHistogram) -> f64 {
        let ivs = self.param.intervals(x);
        let dim = self.target.nrows();
        let n2 = (dim * dim) as f64;
        let mut fid = 0.0;
        for (wc, h) in &self.h_configs {
            for bin in hist.bins() {
                let mut u = linalg::identity(dim);
                for iv in &ivs {
                    match interval_propagator(h, iv, bin.scale, self.rf_rad) {
                        Ok(step) => u = step * u,
                        Err(_) => return f64::INFINITY,
                    }
                }
                fid += wc * bin.weight * linalg::inner(self.target, &u).norm_sqr() / n2;
            }
        }
        1.0 - fid
    }

    fn search(
        &self,
        hist: &RfHistogram,
        start: Option<&[f64]>,
        restarts: usize,
        seed: u64,
    ) -> optim::Minimum {
        let bounds: Vec<(f64, f64)> = (0..self.param.k)
            .flat_map(|_| [(-2.0, 2.0), (-2.0, 2.0), (-3.0, 3.0), (0.0, 2.0 * PI)])
            .collect();
        let nm = NelderMeadOptions {
            step: if start.is_some() { 0.2 } else { 0.6 },
            max_evals: self.opts.budget,
            f_tol: 1e-13,
        };
        let mut f = |x: &[f64]| self.infidelity(x, hist);
        optim::multistart(&mut f, start, &bounds, restarts, self.opts.budget, seed, &nm)
    }
}

/// Maximize the histogram-averaged gate fidelity of up to `k_max`
/// constant-parameter intervals by multi-start Nelder–Mead.
///
/// With a multi-bin histogram each chain searches at the nominal scale from
/// random starts, refines on a coarsened histogram and polishes on the full
/// one; `chains` independent chains run with consecutive seeds.
pub fn design_pulse(
    target: &CMat,
    sys: &SpinSystem,
    hist: &RfHistogram,
    opts: &DesignOptions,
) -> Result<DesignResult> {
    if opts.k_max == 0 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    if opts.budget == 0 {
        return Err(Error::InvalidInput("budget must be positive".into()));
    }
    if target.nrows() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: target.nrows(),
        });
    }
    linalg::ensure_unitary(target, 1e-8)?;
    let (f_lo, f_hi) = opts.frequency_range_hz;
    if !(opts.max_interval_s > 0.0 && f_hi > f_lo && opts.nominal_rf_hz > 0.0) {
        return Err(Error::InvalidInput("invalid design ranges".into()));
    }
    let h_configs: Vec<(f64, CMat)> = if opts.spectators && !sys.spectators().is_empty() {
        spinsys::spectator_hamiltonians(sys)?
    } else {
        vec![(1.0, spinsys::internal_hamiltonian(sys)?)]
    };
    let problem = DesignProblem {
        target,
        h_configs,
        param: Parameterization {
            k: opts.k_max,
            max_t: opts.max_interval_s,
            f_lo,
            f_hi,
        },
        rf_rad: 2.0 * PI * opts.nominal_rf_hz,
        opts,
    };
    let encoded_start = opts.start.as_ref().map(|s| {
        let ivs: Vec<PulseInterval> = s
            .items
            .iter()
            .filter_map(|i| match i {
                ScheduleItem::Interval(iv) => Some(PulseInterval {
                    amplitude: iv.amplitude * s.nominal_rf_hz / opts.nominal_rf_hz,
                    ..*iv
                }),
                _ => None,
            })
            .collect();
        problem.param.encode(&ivs)
    });
    let multi_bin = hist.bins().len() > 1;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut evaluations = 0;
    for chain in 0..opts.chains.max(1) as u64 {
        let seed = opts.seed.wrapping_add(chain);
        let mut x = match &encoded_start {
            Some(x) => x.clone(),
            None => {
                let nominal = if multi_bin {
                    RfHistogram::single(1.0)
                } else {
                    hist.clone()
                };
                let m = problem.search(&nominal, None, opts.restarts, seed);
                evaluations += m.evals;
                m.x
            }
        };
        let mut value = problem.infidelity(&x, hist);
        if multi_bin || encoded_start.is_some() {
            let coarse = hist.coarsen(opts.coarse_bins);
            if multi_bin && coarse.bins().len() < hist.bins().len() {
                let m = problem.search(&coarse, Some(&x), 1, seed);
                evaluations += m.evals;
                x = m.x;
            }
            let m = problem.search(hist, Some(&x), 1, seed);
            evaluations += m.evals;
            x = m.x;
            value = m.value;
        }
        if best.as_ref().is_none_or(|b| value < b.1) {
            best = Some((x, value));
        }
        if encoded_start.is_some() || 1.0 - value >= opts.fidelity_floor {
            break;
        }
    }
    let (x, _) = best.expect("at least one chain");
    let schedule = PulseSchedule {
        nominal_rf_hz: opts.nominal_rf_hz,
        items: problem
            .param
            .intervals(&x)
            .into_iter()
            .map(ScheduleItem::Interval)
            .collect(),
    };
    let fidelity = schedule_fidelity(target, &schedule, sys, hist, opts.spectators)?;
    Ok(DesignResult {
        schedule,
        fidelity,
        below_floor: fidelity < opts.fidelity_floor,
        evaluations,
    })
}

/// Resolve a design target: a gate label, or a matrix file path.
pub fn target_unitary(spec: &str, n: usize) -> Result<CMat> {
    match Gate::parse(spec) {
        Ok(g) => g.unitary(n),
        Err(_) if Path::new(spec).exists() => {
            let m = crate::matio::load(Path::new(spec))?.matrix;
            linalg::ensure_unitary(&m, 1e-8)?;
            Ok(m)
        }
        Err(e) => Err(e),
    }
}
