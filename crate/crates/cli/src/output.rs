//! CSV and JSON writers.
//!
//! Floats are written in scientific notation with 9 significant digits, so
//! identical inputs give byte-identical CSV files. Every file is written to
//! a temporary file in the target directory and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use raidrel_core::sim::RNG_DESCRIPTION;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::run::{CurveRecord, ScenarioRun, SweepRun};

pub const CSV_HEADER: [&str; 7] = [
    "scheme",
    "system_age",
    "reliability",
    "bound",
    "mc_estimate",
    "mc_ci_low",
    "mc_ci_high",
];

pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

/// File-name fragment for a scheme label.
pub fn slug(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() || ch == '-' {
            out.push(ch);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

pub fn curve_csv(records: &[CurveRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in records {
        let (est, lo, hi) = match r.mc {
            Some((e, l, h)) => (Some(e), Some(l), Some(h)),
            None => (None, None, None),
        };
        w.write_record([
            r.scheme.clone(),
            r.system_age.to_string(),
            opt(r.reliability),
            opt(r.bound),
            opt(est),
            opt(lo),
            opt(hi),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn sweep_csv(sweep: &SweepRun) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([sweep.axis.to_string().as_str(), "scheme", "probe_age", "reliability", "bound"])?;
    for r in &sweep.rows {
        w.write_record([
            format_float(r.value),
            r.scheme.clone(),
            r.probe_age.to_string(),
            format_float(r.reliability),
            format_float(r.bound),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn versions() -> Value {
    json!({
        "raidrel_core": raidrel_core::VERSION,
        "raidrel_cli": env!("CARGO_PKG_VERSION"),
    })
}

const PROBE_NOTE: &str =
    "samples are taken at age 0, every `stride` solver intervals, every probe age and the horizon";

pub fn scenario_manifest(run: &ScenarioRun, files: &[PathBuf]) -> Value {
    let schemes: Vec<Value> = run
        .schemes
        .iter()
        .map(|s| {
            let mut notes = Vec::new();
            if let Some(curve) = &s.curve {
                if curve.meta.bound_exceeds_max_error {
                    notes.push("accumulated Poisson bound exceeds the requested maximum error".to_string());
                }
                if !curve.meta.exact_mean_rate {
                    notes.push("shape is not 2: averaged generator is sampled, bound covers Poisson truncation only".to_string());
                }
            }
            let agreement = s.mc_agreement().map(|(inside, total)| {
                json!({ "inside_ci": inside, "ages": total })
            });
            json!({
                "label": s.label,
                "config": s.config,
                "config_digest": s.curve.as_ref().map(|c| c.meta.config_digest.clone()),
                "solver": s.curve.as_ref().map(|c| json!({
                    "settings": c.meta.settings,
                    "intervals": c.meta.intervals,
                    "poisson_terms": c.meta.poisson_terms,
                    "final_state_cap": c.meta.final_state_cap,
                    "final_bound": c.final_bound(),
                    "bound_exceeds_max_error": c.meta.bound_exceeds_max_error,
                    "wall_seconds": c.meta.wall_seconds,
                })),
                "mc": s.mc.as_ref().map(|m| json!({
                    "runs": m.runs,
                    "seed": m.seed,
                    "rng": m.rng,
                    "method": m.method,
                    "confidence": m.confidence,
                    "agreement": agreement,
                })),
                "error": s.error,
                "notes": notes,
                "wall_seconds": s.wall_seconds,
            })
        })
        .collect();
    json!({
        "scenario": run.spec.name,
        "mode": run.mode,
        "versions": versions(),
        "settings": {
            "horizon": run.spec.horizon,
            "stride": run.spec.stride,
            "probes": run.spec.probes,
            "step_size": run.spec.step_size,
            "epsilon": run.spec.epsilon,
            "truncation": run.spec.truncation,
            "mc": run.spec.mc,
        },
        "rng": RNG_DESCRIPTION,
        "float_format": "scientific, 9 significant digits",
        "sample_grid": PROBE_NOTE,
        "partial": run.partial(),
        "max_final_bound": run.total_bound(),
        "schemes": schemes,
        "files": files,
        "wall_seconds": run.wall_seconds,
    })
}

/// Writes one CSV per scheme and the run manifest. Returns the written
/// paths, manifest last.
pub fn write_scenario(run: &ScenarioRun, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    for scheme in &run.schemes {
        let records = scheme.records();
        if records.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("{}.{}.csv", run.spec.name, slug(&scheme.label)));
        let bytes = curve_csv(&records).map_err(|e| csv_error(&path, e))?;
        write_atomic(&path, &bytes)?;
        files.push(path);
    }
    let manifest_path = out_dir.join(format!("{}.manifest.json", run.spec.name));
    let manifest = scenario_manifest(run, &files);
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&manifest_path, &bytes)?;
    files.push(manifest_path);
    Ok(files)
}

/// Writes the sweep table and its manifest.
pub fn write_sweep(sweep: &SweepRun, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let stem = format!("{}.sweep-{}", sweep.scenario, sweep.axis);
    let table = out_dir.join(format!("{stem}.csv"));
    let bytes = sweep_csv(sweep).map_err(|e| csv_error(&table, e))?;
    write_atomic(&table, &bytes)?;
    let manifest_path = out_dir.join(format!("{stem}.manifest.json"));
    let failures: Vec<Value> = sweep
        .failures
        .iter()
        .map(|(v, s, e)| json!({ "value": v, "scheme": s, "error": e }))
        .collect();
    let manifest = json!({
        "scenario": sweep.scenario,
        "axis": sweep.axis,
        "values": sweep.values,
        "probes": sweep.probes,
        "probe_note": "default probes are every drive replacement epoch of every swept configuration up to the horizon, plus the horizon",
        "versions": versions(),
        "float_format": "scientific, 9 significant digits",
        "partial": !sweep.failures.is_empty(),
        "failures": failures,
        "files": [&table],
        "wall_seconds": sweep.wall_seconds,
    });
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&manifest_path, &bytes)?;
    Ok(vec![table, manifest_path])
}
