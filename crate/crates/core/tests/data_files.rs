//! The shipped data files agree with the built-in defaults.

use std::path::{Path, PathBuf};

use qptsim::pulsesim::{Gate, PulseLibrary, RfHistogram};
use qptsim::qpt;
use qptsim::relax::RelaxationModel;
use qptsim::SpinSystem;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

#[test]
fn relaxation_table_matches_builtin_rates() {
    assert_eq!(RelaxationModel::load(&data("relaxation_table1.toml")).unwrap(), RelaxationModel::alanine());
}

#[test]
fn systems_and_histogram_match_builtins() {
    assert_eq!(SpinSystem::load(&data("alanine.toml")).unwrap(), SpinSystem::alanine());
    assert_eq!(
        SpinSystem::load(&data("alanine_hydrogens.toml")).unwrap(),
        SpinSystem::alanine_with_hydrogens()
    );
    assert_eq!(RfHistogram::load(&data("rf_histogram.toml")).unwrap(), RfHistogram::synthetic_default());
}

#[test]
fn library_covers_every_gate_of_the_experiment() {
    let sys = SpinSystem::alanine();
    let lib = PulseLibrary::load(&data("library.toml")).unwrap();
    let PulseLibrary::Designed { entries, .. } = &lib else {
        panic!("expected a designed library");
    };
    let mut gates = qptsim::pulsesim::qft_circuit(3).unwrap();
    for r in qpt::readout_pulses(3).unwrap() {
        gates.extend(r.gates.iter().cloned());
    }
    for p in qptsim::spinsys::po_basis(3).unwrap() {
        gates.extend(qpt::preparation_gates(&p).1);
    }
    let gates: Vec<Gate> = gates.into_iter().filter(|g| !matches!(g, Gate::Relabel(_))).collect();
    for label in PulseLibrary::required_labels(&gates, &sys).unwrap() {
        assert!(entries.contains_key(&label), "missing {label}");
    }
}
