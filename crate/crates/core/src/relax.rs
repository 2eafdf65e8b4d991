//! Decoherence models acting diagonally in the product-operator basis.
//!
//! Rate tables group operators with pattern strings over `1 X Y Z A B`, one
//! character per spin. `A` and `B` expand together: the first expansion reads
//! `A→X, B→Y`, the second `A→Y, B→X`, so `AZ1` names `XZ1` and `YZ1`, and
//! `AB1` names `XY1` and `YX1`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, CMat};
use crate::spinsys::{self, DensityMatrix, PauliProduct};
use crate::superop::{self, Basis, Positivity, Supermatrix};

pub const RELAXATION_SCHEMA: &str = "qptsim-relaxation/1";

/// Measured decay rates (s⁻¹) of the alanine carbons, by operator group.
pub const ALANINE_RATES: &[(f64, &[&str])] = &[
    (0.032, &["Z11"]),
    (0.345, &["1Z1"]),
    (0.583, &["11Z"]),
    (0.282, &["ZZ1"]),
    (0.458, &["Z1Z"]),
    (0.689, &["1ZZ"]),
    (0.684, &["ZZZ"]),
    (1.89, &["A11", "AZ1", "A1Z", "AZZ"]),
    (3.19, &["1A1", "ZA1", "1AZ", "ZAZ"]),
    (1.68, &["11A", "Z1A", "1ZA", "ZZA"]),
    (6.93, &["AB1", "ABZ", "AA1", "AAZ"]),
    (3.56, &["A1B", "AZB", "A1A", "AZA"]),
    (6.81, &["1AB", "ZAB", "1AA", "ZAA"]),
    (13.48, &["BAA", "ABA", "AAB"]),
    (14.58, &["AAA"]),
];

/// Expands one rate-table pattern into its product operators.
pub fn expand_pattern(pattern: &str) -> Result<Vec<PauliProduct>> {
    let unknown = || Error::UnknownOperator(pattern.to_string());
    if pattern.is_empty() || !pattern.chars().all(|ch| "1XYZAB".contains(ch)) {
        return Err(unknown());
    }
    let paired = pattern.contains(['A', 'B']);
    let variants: &[(char, char)] = if paired {
        &[('X', 'Y'), ('Y', 'X')]
    } else {
        &[('X', 'Y')]
    };
    variants
        .iter()
        .map(|&(a, b)| {
            let label: String = pattern
                .chars()
                .map(|ch| match ch {
                    'A' => a,
                    'B' => b,
                    other => other,
                })
                .collect();
            PauliProduct::from_label(&label).map_err(|_| unknown())
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateGroup {
    rate: f64,
    operators: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateFile {
    schema: String,
    n_spins: usize,
    groups: Vec<RateGroup>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelaxationModel {
    /// Decay rate per product operator in canonical order; entry 0 is the
    /// identity and is always zero.
    PoRates { n_spins: usize, rates: Vec<f64> },
    /// Every traceless component is scaled by `eta` per application.
    Uniform { eta: f64 },
}

impl RelaxationModel {
    /// Builds a rate model from pattern groups; every non-identity product
    /// operator must receive exactly one rate.
    pub fn from_groups<'a>(
        n_spins: usize,
        groups: impl IntoIterator<Item = (f64, &'a [String])>,
    ) -> Result<Self> {
        spinsys::check_spin_count(n_spins)?;
        let mut rates: Vec<Option<f64>> = vec![None; 1 << (2 * n_spins)];
        rates[0] = Some(0.0);
        for (rate, patterns) in groups {
            if !(rate.is_finite() && rate >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "decay rate {rate} must be finite and nonnegative"
                )));
            }
            for pattern in patterns {
                for p in expand_pattern(pattern)? {
                    if p.n_spins() != n_spins || p.is_identity() {
                        return Err(Error::UnknownOperator(pattern.clone()));
                    }
                    if rates[p.index()].replace(rate).is_some() {
                        return Err(Error::InvalidInput(format!(
                            "product operator {} has more than one rate",
                            p.label()
                        )));
                    }
                }
            }
        }
        let missing: Vec<String> = rates
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(i, _)| PauliProduct::from_index(n_spins, i).label())
            .collect();
        if !missing.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no decay rate for {}",
                missing.join(", ")
            )));
        }
        Ok(RelaxationModel::PoRates {
            n_spins,
            rates: rates.into_iter().map(|r| r.unwrap_or(0.0)).collect(),
        })
    }

    pub fn alanine() -> Self {
        let groups: Vec<(f64, Vec<String>)> = ALANINE_RATES
            .iter()
            .map(|(r, ps)| (*r, ps.iter().map(|s| s.to_string()).collect()))
            .collect();
        Self::from_groups(3, groups.iter().map(|(r, ps)| (*r, ps.as_slice())))
            .expect("built-in table is complete")
    }

    pub fn uniform(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "attenuation factor {eta} must lie in (0, 1]"
            )));
        }
        Ok(RelaxationModel::Uniform { eta })
    }

    /// Rate of a product operator, or `None` for the uniform model.
    pub fn rate(&self, p: &PauliProduct) -> Option<f64> {
        match self {
            RelaxationModel::PoRates { rates, .. } => rates.get(p.index()).copied(),
            RelaxationModel::Uniform { .. } => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: RateFile = toml::from_str(text)
            .map_err(|e| Error::config("relaxation table", e.to_string()))?;
        if file.schema != RELAXATION_SCHEMA {
            return Err(Error::config(
                "relaxation table field `schema`",
                format!("expected `{RELAXATION_SCHEMA}`, found `{}`", file.schema),
            ));
        }
        Self::from_groups(
            file.n_spins,
            file.groups.iter().map(|g| (g.rate, g.operators.as_slice())),
        )
        .map_err(|e| Error::config("relaxation table", e.to_string()))
    }

    /// Table text grouping operators by equal rate.
    pub fn to_toml_string(&self) -> Result<String> {
        let RelaxationModel::PoRates { n_spins, rates } = self else {
            return Err(Error::InvalidInput(
                "only rate tables can be written as files".into(),
            ));
        };
        let mut groups: Vec<RateGroup> = Vec::new();
        for (i, &rate) in rates.iter().enumerate().skip(1) {
            let label = PauliProduct::from_index(*n_spins, i).label();
            match groups.iter_mut().find(|g| g.rate == rate) {
                Some(g) => g.operators.push(label),
                None => groups.push(RateGroup {
                    rate,
                    operators: vec![label],
                }),
            }
        }
        Ok(toml::to_string(&RateFile {
            schema: RELAXATION_SCHEMA.into(),
            n_spins: *n_spins,
            groups,
        })
        .expect("rate table serializes"))
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

    /// Diagonal of the product-operator supermatrix after time `t`.
    pub fn decay_factors(&self, n_spins: usize, t: f64) -> Result<Vec<f64>> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "relaxation time {t} must be finite and nonnegative"
            )));
        }
        spinsys::check_spin_count(n_spins)?;
        let d = 1usize << (2 * n_spins);
        match self {
            RelaxationModel::PoRates { n_spins: m, rates } => {
                if *m != n_spins {
                    return Err(Error::DimensionMismatch {
                        expected: n_spins,
                        found: *m,
                    });
                }
                Ok(rates.iter().map(|r| (-r * t).exp()).collect())
            }
            RelaxationModel::Uniform { eta } => Ok((0..d)
                .map(|i| if i == 0 { 1.0 } else { *eta })
                .collect()),
        }
    }
}

/// Diagonal product-operator supermatrix of the model over time `t`. The
/// uniform model ignores `t`.
pub fn relax_superop(model: &RelaxationModel, n_spins: usize, t: f64) -> Result<Supermatrix> {
    let factors = model.decay_factors(n_spins, t)?;
    let d = factors.len();
    let m = CMat::from_fn(d, d, |i, j| if i == j { c(factors[i], 0.0) } else { c(0.0, 0.0) });
    Supermatrix::new(m, Basis::ProductOperator)
}

/// Scales the traceless part of a state by `eta`.
pub fn attenuate_state(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix> {
    RelaxationModel::uniform(eta)?;
    let n = rho.dim();
    let identity_part = crate::linalg::identity(n) * (crate::linalg::trace(rho.matrix()) / c(n as f64, 0.0));
    let m = &identity_part + (rho.matrix() - &identity_part) * c(eta, 0.0);
    DensityMatrix::new(m, rho.is_deviation())
}

/// Follows a channel by uniform attenuation of every traceless component.
pub fn attenuate_supermatrix(s: &Supermatrix, eta: f64) -> Result<Supermatrix> {
    let model = RelaxationModel::uniform(eta)?;
    let a = relax_superop(&model, s.n_spins(), 0.0)?;
    s.then(&a)
}

/// Complete-positivity diagnostics of a relaxation map.
#[derive(Debug, Clone)]
pub struct RelaxationReport {
    pub choi_min_eigenvalue: f64,
    pub choi_max_eigenvalue: f64,
    pub positivity: Positivity,
    pub tp_defect: f64,
}

pub fn relaxation_report(model: &RelaxationModel, n_spins: usize, t: f64) -> Result<RelaxationReport> {
    let s = relax_superop(model, n_spins, t)?.in_basis(Basis::Zeeman);
    let choi = superop::choi_of(&s);
    let values = choi.eigenvalues();
    Ok(RelaxationReport {
        choi_min_eigenvalue: *values.last().expect("nonempty spectrum"),
        choi_max_eigenvalue: values[0],
        positivity: superop::positivity(&choi)?,
        tp_defect: choi.tp_defect(),
    })
}

/// Rate groups of a model keyed by rate, for reporting.
pub fn rate_summary(model: &RelaxationModel) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    if let RelaxationModel::PoRates { n_spins, rates } = model {
        for (i, r) in rates.iter().enumerate().skip(1) {
            out.entry(format!("{r}"))
                .or_default()
                .push(PauliProduct::from_index(*n_spins, i).label());
        }
    }
    out
}
