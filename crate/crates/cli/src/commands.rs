use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qptsim::analysis::{self, Side};
use qptsim::matio::{self, Format};
use qptsim::pulsesim::{self, DesignOptions, Gate, PulseLibrary, PulseSchedule, RfHistogram};
use qptsim::qpt::{self, PipelineSpec};
use qptsim::relax::RelaxationModel;
use qptsim::superop::{self, Basis, Supermatrix};
use qptsim::{CMat, SpinSystem};
use serde_json::json;

use crate::config::{RelaxationVariant, RunConfig};
use crate::manifest::{Manifest, Recorder};
use crate::{
    AnalyzeArgs, CliError, DemoArgs, DesignPulseArgs, ProjectArgs, RunQptArgs, SimulatePulseArgs,
    SpectrumArgs,
};

fn matrix_bytes(m: &CMat, basis: Option<Basis>, name: &str) -> Vec<u8> {
    matio::encode(m, basis, Format::from_path(Path::new(name)))
}

fn write_matrix(rec: &mut Recorder, dir: &Path, name: &str, s: &Supermatrix) -> Result<(), CliError> {
    rec.write(dir, name, &matrix_bytes(s.matrix(), Some(s.basis()), name))?;
    Ok(())
}

/// Splits an output file path into its directory and file name.
fn split_out(out: &Path) -> Result<(PathBuf, String), CliError> {
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Usage(format!("{} is not a file path", out.display())))?
        .to_string();
    let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = if dir.as_os_str().is_empty() { PathBuf::from(".") } else { dir };
    std::fs::create_dir_all(&dir)?;
    Ok((dir, name))
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn load_system(rec: &mut Recorder, path: &Path) -> Result<SpinSystem, CliError> {
    rec.track(path)?;
    Ok(SpinSystem::load(path)?)
}

fn load_histogram(rec: &mut Recorder, path: &Path) -> Result<RfHistogram, CliError> {
    rec.track(path)?;
    Ok(RfHistogram::load(path)?)
}

/// Loads a pulse library, recording the library file and every schedule.
fn load_library(rec: &mut Recorder, path: &Path) -> Result<PulseLibrary, CliError> {
    let text = String::from_utf8_lossy(&rec.read(path)?).into_owned();
    let library = PulseLibrary::load(path)?;
    let table: toml::Table = toml::from_str(&text)
        .map_err(|e| qptsim::Error::config(path.display().to_string(), e.to_string()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    if let Some(entries) = table.get("entries").and_then(|e| e.as_table()) {
        for v in entries.values() {
            if let Some(p) = v.as_str() {
                rec.track(&base.join(p))?;
            }
        }
    }
    Ok(library)
}

fn load_supermatrix(rec: &mut Recorder, path: &Path) -> Result<Supermatrix, CliError> {
    let bytes = rec.read(path)?;
    Ok(matio::decode(&bytes)?.into_supermatrix()?)
}

fn csv_spectra(rows: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("label,index,re,im,abs\n");
    for (label, values) in rows {
        for (i, (re, im)) in values.iter().enumerate() {
            let _ = writeln!(s, "{label},{i},{re},{im},{}", re.hypot(*im));
        }
    }
    s
}

fn pairs(values: &[[f64; 2]]) -> Vec<(f64, f64)> {
    values.iter().map(|[a, b]| (*a, *b)).collect()
}

pub fn simulate_pulse(a: &SimulatePulseArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("simulate-pulse");
    let sys = load_system(&mut rec, &a.system)?;
    rec.track(&a.schedule)?;
    let sched = PulseSchedule::load(&a.schedule)?;
    let hist = load_histogram(&mut rec, &a.histogram)?;
    rec.setting("spectators", a.spectators);
    if let Some(t) = &a.target {
        rec.setting("target", t);
    }
    let channel = pulsesim::incoherent_superop(&sched, &sys, &hist, a.spectators)?;
    let (dir, name) = split_out(&a.out)?;
    write_matrix(&mut rec, &dir, &name, &channel.supermatrix)?;
    let eig = superop::eigenvalues(&channel.supermatrix)?;
    let mut metrics = json!({
        "duration_s": sched.duration(),
        "bins": hist.bins().len(),
        "kraus_operators": channel.kraus.len(),
        "mean_eigenvalue_reduction": analysis::mean_eigenvalue_reduction(&eig),
    });
    if let Some(t) = &a.target {
        let u = pulsesim::target_unitary(t, sys.n_spins())?;
        metrics["gate_fidelity"] = json!(pulsesim::kraus_gate_fidelity(&u, &channel.kraus)?);
    }
    rec.finish(metrics).save(&manifest_path(&a.out))
}

pub fn design_pulse(a: &DesignPulseArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("design-pulse");
    let sys = load_system(&mut rec, &a.system)?;
    let hist = load_histogram(&mut rec, &a.histogram)?;
    let target = pulsesim::target_unitary(&a.target, sys.n_spins())?;
    if Path::new(&a.target).exists() {
        rec.track(Path::new(&a.target))?;
    }
    let label = Gate::parse(&a.target).ok().map(|g| g.label());
    for (k, v) in [
        ("target", label.clone().unwrap_or_else(|| "matrix".into())),
        ("kmax", a.kmax.to_string()),
        ("budget", a.budget.to_string()),
        ("restarts", a.restarts.to_string()),
        ("chains", a.chains.to_string()),
        ("nominal_rf_hz", a.nominal_rf_hz.to_string()),
        ("spectators", a.spectators.to_string()),
    ] {
        rec.setting(k, v);
    }
    rec.seed(a.seed);
    let opts = DesignOptions {
        k_max: a.kmax,
        budget: a.budget,
        seed: a.seed,
        restarts: a.restarts,
        chains: a.chains,
        nominal_rf_hz: a.nominal_rf_hz,
        spectators: a.spectators,
        ..DesignOptions::default()
    };
    let r = pulsesim::design_pulse(&target, &sys, &hist, &opts)?;
    if r.below_floor {
        eprintln!(
            "warning: designed fidelity {:.5} is below the floor {}",
            r.fidelity, opts.fidelity_floor
        );
    }
    let (dir, name) = split_out(&a.out)?;
    let text = r.schedule.to_toml_string(label.as_deref(), Some(r.fidelity));
    rec.write(&dir, &name, text.as_bytes())?;
    let metrics = json!({
        "fidelity": r.fidelity,
        "below_floor": r.below_floor,
        "evaluations": r.evaluations,
        "duration_s": r.schedule.duration(),
        "intervals": r.schedule.items.len(),
    });
    rec.finish(metrics).save(&manifest_path(&a.out))
}

fn relaxation_model(rec: &mut Recorder, cfg: &RunConfig) -> Result<Option<RelaxationModel>, CliError> {
    let Some(r) = cfg.relaxation.as_ref().filter(|_| cfg.toggles.relaxation) else {
        return Ok(None);
    };
    Ok(Some(match r.model {
        RelaxationVariant::Rates => {
            let f = r.file.as_ref().expect("validated with the configuration");
            rec.track(f)?;
            RelaxationModel::load(f)?
        }
        RelaxationVariant::Uniform => RelaxationModel::uniform(r.eta.expect("validated with the configuration"))?,
    }))
}

pub fn run_qpt(a: &RunQptArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("run-qpt");
    rec.track(&a.config)?;
    let cfg = RunConfig::load(&a.config)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    rec.seed(seed);
    rec.setting("seed", seed);
    let sys = load_system(&mut rec, &cfg.system)?;
    let hist = load_histogram(&mut rec, &cfg.histogram)?;
    let library = match &cfg.library {
        Some(p) => Some(load_library(&mut rec, p)?),
        None => None,
    };
    let relaxation = relaxation_model(&mut rec, &cfg)?;
    let spec = PipelineSpec {
        sys: &sys,
        library: library.as_ref(),
        histogram: &hist,
        relaxation: relaxation.as_ref(),
        noise_sigma: cfg.noise_sigma,
        seed,
        toggles: cfg.toggles.into(),
        condition_bound: cfg.condition_bound.unwrap_or(qpt::DEFAULT_CONDITION_BOUND),
    };
    let run = qpt::run_qft_pipeline(&spec)?;
    let n = sys.n_spins();
    let target = pulsesim::qft_unitary(n)?;
    let theoretical = qpt::theoretical_qft(n)?;

    std::fs::create_dir_all(&a.out)?;
    rec.write(&a.out, "r_in.qmat", &matrix_bytes(&run.r_in, None, "r_in.qmat"))?;
    rec.write(&a.out, "r_out.qmat", &matrix_bytes(&run.r_out, None, "r_out.qmat"))?;
    write_matrix(&mut rec, &a.out, "m_obs.qmat", &run.m_obs)?;
    write_matrix(&mut rec, &a.out, "simulated.qmat", &run.simulated)?;
    write_matrix(&mut rec, &a.out, "theoretical.qmat", &theoretical)?;
    let records: Vec<_> = run
        .input_labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let obs = |r: &[qpt::TomographyRecord]| r.iter().map(|t| t.observed.clone()).collect::<Vec<_>>();
            json!({
                "label": label,
                "input": obs(&run.input_records[i]),
                "output": obs(&run.output_records[i]),
            })
        })
        .collect();
    let readouts: Vec<_> = qpt::readout_pulses(n)?.iter().map(|r| r.label.clone()).collect();
    let records = json!({ "readouts": readouts, "noise_sigma": spec.noise_sigma, "seed": seed, "states": records });
    let mut text = serde_json::to_string_pretty(&records).expect("records serialize");
    text.push('\n');
    rec.write(&a.out, "records.json", text.as_bytes())?;

    let states = analysis::state_correlations(&run.r_in, &run.r_out, &target)?;
    let summary = analysis::state_summary(&states);
    let metrics = json!({
        "correlation_with_theory": superop::super_correlation(&theoretical, &run.m_obs)?,
        "gate_fidelity": superop::gate_fidelity(&theoretical, &run.m_obs)?,
        "simulated_correlation_with_theory": superop::super_correlation(&theoretical, &run.simulated)?,
        "simulated_gate_fidelity": superop::gate_fidelity(&theoretical, &run.simulated)?,
        "observed_vs_simulated": superop::super_correlation(&run.simulated, &run.m_obs)?,
        "condition_number": run.condition_number,
        "toggles": {
            "designed_pulses": spec.toggles.designed_pulses,
            "incoherence": spec.toggles.incoherence,
            "spectators": spec.toggles.spectators,
            "relaxation": spec.toggles.relaxation,
            "noise": spec.toggles.noise,
            "preparation": spec.toggles.preparation,
        },
        "state_summary": summary,
        "states": states,
    });
    rec.finish(metrics).save(&a.out.join("manifest.json"))
}

fn fmt_row(label: &str, values: &[f64]) -> String {
    let mut s = format!("{label:<20}");
    for v in values {
        let _ = write!(s, " {v:>8.4}");
    }
    s
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("analyze");
    let run_manifest_path = a.run.join("manifest.json");
    rec.track(&run_manifest_path)?;
    let run_manifest = Manifest::load(&run_manifest_path)?;
    if run_manifest.command != "run-qpt" {
        return Err(CliError::Integrity(format!(
            "{} was written by `{}`, not run-qpt",
            run_manifest_path.display(),
            run_manifest.command
        )));
    }
    run_manifest.verify_outputs(&a.run)?;
    let seed = a.seed.or(run_manifest.seed).unwrap_or(0);
    rec.seed(seed);
    rec.setting("seed", seed);
    let m = load_supermatrix(&mut rec, &a.run.join("m_obs.qmat"))?;
    let simulated = load_supermatrix(&mut rec, &a.run.join("simulated.qmat"))?;
    let n = m.n_spins();
    let target = pulsesim::qft_unitary(n)?;
    let s_target = superop::unitary_superop(&target)?;

    let mut references = vec![("simulated".to_string(), simulated)];
    for path in &a.references {
        let label = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("reference")
            .to_string();
        references.push((label, load_supermatrix(&mut rec, path)?));
    }
    let fixed = if n == 3 { analysis::qft_fixed_points() } else { Vec::new() };
    let report = analysis::decompose(&m, &target, &references, &fixed)?;

    let corrected = analysis::coherent_correction(&m, &report.kraus_unitary, &target)?;
    let projection = superop::project_cptp(&m, 1e-10, 2000)?;
    let projected = projection.supermatrix.clone();
    let fit_left = analysis::fit_single_spin_rotations(
        &analysis::delta_unitary(&report.kraus_unitary, &target, Side::Left),
        Side::Left,
        seed,
    )?;
    let fit_right = analysis::fit_single_spin_rotations(
        &analysis::delta_unitary(&report.kraus_unitary, &target, Side::Right),
        Side::Right,
        seed.wrapping_add(1),
    )?;
    let corrected_left = analysis::correct_with_unitary(&m, &fit_left.unitary(), Side::Left)?;
    let corrected_right = analysis::correct_with_unitary(&m, &fit_right.unitary(), Side::Right)?;
    let unitary_part = superop::unitary_superop(&report.kraus_unitary)?;

    let rows_before = analysis::row_correlations(&s_target, &m)?;
    let rows_after = analysis::row_correlations(&s_target, &corrected)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;

    let variants: Vec<(String, Supermatrix)> = vec![
        ("full-qpt".into(), m.clone()),
        ("coherent-corrected".into(), corrected.clone()),
        ("corrected-left".into(), corrected_left),
        ("corrected-right".into(), corrected_right),
        ("cptp-projected".into(), projected.clone()),
        ("unitary-part".into(), unitary_part),
    ];
    let mut table_iv = Vec::new();
    for (label, s) in &variants {
        table_iv.push(json!({
            "label": label,
            "correlation": superop::super_correlation(&s_target, s)?,
            "attenuated_correlation": superop::gate_fidelity(&s_target, s)?,
        }));
    }
    let mut spectra_input = vec![("theoretical".to_string(), s_target.clone())];
    spectra_input.extend(references.iter().cloned());
    spectra_input.extend(variants.iter().cloned());
    let spectra = analysis::spectrum_report(&spectra_input)?;

    std::fs::create_dir_all(&a.out)?;
    write_matrix(&mut rec, &a.out, "corrected.qmat", &corrected)?;
    write_matrix(&mut rec, &a.out, "projected.qmat", &projected)?;

    let mut csv = String::from("label,index,re,im,abs,re_rms,im_rms\n");
    for s in &spectra {
        for (i, (z, r)) in s.eigenvalues.iter().zip(&s.rms_normalized).enumerate() {
            let _ = writeln!(csv, "{},{i},{},{},{},{},{}", s.label, z[0], z[1], z[0].hypot(z[1]), r[0], r[1]);
        }
    }
    rec.write(&a.out, "spectra.csv", csv.as_bytes())?;
    let mut kcsv = String::from("index,amplitude\n");
    for (i, v) in report.kraus_amplitudes.iter().enumerate() {
        let _ = writeln!(kcsv, "{},{v}", i + 1);
    }
    rec.write(&a.out, "kraus_amplitudes.csv", kcsv.as_bytes())?;
    let fits = json!({ "left": fit_left, "right": fit_right });
    let mut text = serde_json::to_string_pretty(&fits).expect("fits serialize");
    text.push('\n');
    rec.write(&a.out, "rotation_fit.json", text.as_bytes())?;

    let full = json!({
        "report": report,
        "coherent_correction": {
            "row_correlation_before": mean(&rows_before),
            "row_correlation_after": mean(&rows_after),
        },
        "cptp_projection": {
            "converged": projection.converged,
            "iterations": projection.iterations,
            "min_eigenvalue": projection.min_eigenvalue,
            "tp_defect": projection.tp_defect,
        },
        "correlations_with_theory": table_iv,
    });
    let mut text = serde_json::to_string_pretty(&full).expect("report serializes");
    text.push('\n');
    rec.write(&a.out, "report.json", text.as_bytes())?;

    let mut t = String::new();
    let _ = writeln!(t, "Kraus amplitudes: {}", report.kraus_amplitudes.iter().take(6).map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "));
    let _ = writeln!(t, "Positivity: {:.4}", report.positivity);
    let _ = writeln!(t, "Choi eigenvalue ratio (min/max): {:.4}", report.choi_eigenvalue_ratio);
    let _ = writeln!(t, "Largest Kraus operator vs theory: {:.4} (closest unitary {:.4})", report.kraus_operator_correlation, report.kraus_unitary_correlation);
    let _ = writeln!(t, "\nCorrelations between supermatrices");
    let _ = writeln!(t, "{}", fmt_row("", &[]) + &report.pair_labels.iter().map(|l| format!(" {:>8}", &l[..l.len().min(8)])).collect::<String>());
    for (label, row) in report.pair_labels.iter().zip(&report.pair_correlations) {
        let _ = writeln!(t, "{}", fmt_row(label, row));
    }
    let _ = writeln!(t, "\nFixed points (correlation, attenuated)");
    for f in &report.fixed_points {
        let _ = writeln!(t, "{}", fmt_row(&f.label, &[f.correlation, f.attenuated_correlation]));
    }
    let _ = writeln!(t, "\nSingle-spin rotation fits (axis x y z, angle deg)");
    for fit in [&fit_left, &fit_right] {
        let side = match fit.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        for (i, r) in fit.rotations.iter().enumerate() {
            let _ = writeln!(t, "{}", fmt_row(&format!("{side} spin {}", i + 1), &[r.axis[0], r.axis[1], r.axis[2], r.angle_deg]));
        }
        let _ = writeln!(t, "{}", fmt_row(&format!("{side} fit"), &[fit.correlation]));
    }
    let _ = writeln!(t, "\nCorrelation with theory (correlation, attenuated)");
    for row in &table_iv {
        let label = row["label"].as_str().unwrap_or_default();
        let c = row["correlation"].as_f64().unwrap_or(f64::NAN);
        let g = row["attenuated_correlation"].as_f64().unwrap_or(f64::NAN);
        let _ = writeln!(t, "{}", fmt_row(label, &[c, g]));
    }
    let _ = writeln!(t, "\nMean row correlation before / after coherent correction: {:.4} / {:.4}", mean(&rows_before), mean(&rows_after));
    rec.write(&a.out, "report.txt", t.as_bytes())?;

    let metrics = json!({
        "a1": report.kraus_amplitudes[0],
        "positivity": report.positivity,
        "correlation_with_theory": report.comparisons[0].correlation,
        "corrected_correlation_with_theory": superop::super_correlation(&s_target, &corrected)?,
        "projected_correlation_with_theory": superop::super_correlation(&s_target, &projected)?,
        "run_config_hash": run_manifest.config_hash,
    });
    rec.finish(metrics).save(&a.out.join("manifest.json"))
}

pub fn project_cptp(a: &ProjectArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("project-cptp");
    let s = load_supermatrix(&mut rec, &a.input)?;
    rec.setting("tol", a.tol);
    rec.setting("max_iter", a.max_iter);
    let before = superop::positivity(&superop::choi_of(&s))?.value;
    let p = superop::project_cptp(&s, a.tol, a.max_iter)?;
    let (dir, name) = split_out(&a.out)?;
    let out = p.supermatrix.in_basis(s.basis());
    write_matrix(&mut rec, &dir, &name, &out)?;
    let mut log = String::from("iteration,psd_defect,tp_defect,distance\n");
    for step in &p.log {
        let _ = writeln!(log, "{},{},{},{}", step.iteration, step.psd_defect, step.tp_defect, step.distance);
    }
    rec.write(&dir, &format!("{name}.log.csv"), log.as_bytes())?;
    let tp: Vec<f64> = p.log.iter().map(|s| s.tp_defect).collect();
    let metrics = json!({
        "converged": p.converged,
        "iterations": p.iterations,
        "min_eigenvalue": p.min_eigenvalue,
        "tp_defect": p.tp_defect,
        "positivity_before": before,
        "positivity_after": superop::positivity(&superop::choi_of(&p.supermatrix))?.value,
        "tp_defect_monotone": tp.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)),
        "distance": (p.supermatrix.in_basis(s.basis()).matrix() - s.matrix()).norm(),
    });
    rec.finish(metrics).save(&manifest_path(&a.out))
}

pub fn spectrum(a: &SpectrumArgs) -> Result<(), CliError> {
    if !a.labels.is_empty() && a.labels.len() != a.inputs.len() {
        return Err(CliError::Usage(format!(
            "{} labels given for {} inputs",
            a.labels.len(),
            a.inputs.len()
        )));
    }
    let mut rec = Recorder::new("spectrum");
    let mut labeled = Vec::new();
    for (i, path) in a.inputs.iter().enumerate() {
        let label = match a.labels.get(i) {
            Some(l) => l.clone(),
            None => path.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string(),
        };
        rec.setting(&format!("label{i}"), &label);
        labeled.push((label, load_supermatrix(&mut rec, path)?));
    }
    let spectra = analysis::spectrum_report(&labeled)?;
    let rows: Vec<_> = spectra.iter().map(|s| (s.label.clone(), pairs(&s.eigenvalues))).collect();
    let (dir, name) = split_out(&a.out)?;
    rec.write(&dir, &name, csv_spectra(&rows).as_bytes())?;
    let metrics: Vec<_> = spectra
        .iter()
        .map(|s| {
            let values = s.complex();
            json!({
                "label": s.label,
                "max_abs": values.iter().map(|z| z.norm()).fold(0.0, f64::max),
                "mean_eigenvalue_reduction": analysis::mean_eigenvalue_reduction(&values),
            })
        })
        .collect();
    rec.finish(json!({ "spectra": metrics })).save(&manifest_path(&a.out))
}

pub fn demo_incoherence(a: &DemoArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("demo-incoherence");
    let sys = load_system(&mut rec, &a.system)?;
    let library = load_library(&mut rec, &a.library)?;
    let hist = match &a.histogram {
        Some(p) => load_histogram(&mut rec, p)?,
        None => {
            rec.setting("spread", a.spread);
            if !(a.spread > 0.0 && a.spread < 1.0) {
                return Err(CliError::Usage("--spread must lie in (0, 1)".into()));
            }
            RfHistogram::two_bin(a.spread)
        }
    };
    rec.setting("first", &a.first);
    rec.setting("second", &a.second);
    rec.setting("spectators", a.spectators);
    let first = library.gate_schedule(&Gate::parse(&a.first)?, &sys)?;
    let second = library.gate_schedule(&Gate::parse(&a.second)?, &sys)?;
    let cmp = analysis::composition_comparison(&first, &second, &sys, &hist, a.spectators)?;
    std::fs::create_dir_all(&a.out)?;
    write_matrix(&mut rec, &a.out, "first.qmat", &cmp.first)?;
    write_matrix(&mut rec, &a.out, "second.qmat", &cmp.second)?;
    write_matrix(&mut rec, &a.out, "both.qmat", &cmp.both)?;
    write_matrix(&mut rec, &a.out, "product.qmat", &cmp.product)?;
    let to_pairs = |v: &[num_complex::Complex64]| v.iter().map(|z| (z.re, z.im)).collect::<Vec<_>>();
    let rows = vec![
        ("both".to_string(), to_pairs(&cmp.spectrum_both)),
        ("product".to_string(), to_pairs(&cmp.spectrum_product)),
    ];
    rec.write(&a.out, "spectra.csv", csv_spectra(&rows).as_bytes())?;
    let metrics = json!({
        "bins": hist.bins().len(),
        "frobenius_difference": cmp.difference,
        "mean_eigenvalue_reduction_both": cmp.reduction_both,
        "mean_eigenvalue_reduction_product": cmp.reduction_product,
    });
    rec.finish(metrics).save(&a.out.join("manifest.json"))
}
