//! Orchestration of solver and simulator runs for scenarios and sweeps.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use raidrel_core::solver::Solver;
use raidrel_core::{estimate_reliability, ArrayConfig, RateSchedule, ReliabilityCurve, SimResult};
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{McSpec, ScenarioSpec};

/// Monte Carlo runs when a scenario has no `mc` table.
pub const DEFAULT_MC_RUNS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Transient solver only.
    Solve,
    /// Solver and simulator at the same ages.
    Validate,
    /// Simulator only.
    Simulate,
}

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    pub scheme: String,
    pub system_age: u64,
    pub reliability: Option<f64>,
    pub bound: Option<f64>,
    /// Estimate and confidence interval.
    pub mc: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeRun {
    pub label: String,
    pub config: ArrayConfig,
    pub curve: Option<ReliabilityCurve>,
    pub mc: Option<SimResult>,
    /// Set when this scheme could not be computed; other schemes still run.
    pub error: Option<String>,
    pub wall_seconds: f64,
}

impl SchemeRun {
    pub fn records(&self) -> Vec<CurveRecord> {
        let mc_at = |age: u64| {
            self.mc.as_ref().and_then(|mc| {
                mc.estimates
                    .iter()
                    .find(|e| e.system_age == age)
                    .map(|e| (e.reliability, e.ci_low, e.ci_high))
            })
        };
        match (&self.curve, &self.mc) {
            (Some(curve), _) => curve
                .samples
                .iter()
                .map(|s| CurveRecord {
                    scheme: self.label.clone(),
                    system_age: s.system_age,
                    reliability: Some(s.reliability),
                    bound: Some(s.bound),
                    mc: mc_at(s.system_age),
                })
                .collect(),
            (None, Some(mc)) => mc
                .estimates
                .iter()
                .map(|e| CurveRecord {
                    scheme: self.label.clone(),
                    system_age: e.system_age,
                    reliability: None,
                    bound: None,
                    mc: Some((e.reliability, e.ci_low, e.ci_high)),
                })
                .collect(),
            (None, None) => Vec::new(),
        }
    }

    /// Sample ages where the solver value lies inside the Monte Carlo
    /// interval, out of all ages with both.
    pub fn mc_agreement(&self) -> Option<(usize, usize)> {
        let curve = self.curve.as_ref()?;
        let mc = self.mc.as_ref()?;
        let mut inside = 0;
        let mut total = 0;
        for e in &mc.estimates {
            if let Some(s) = curve.at(e.system_age) {
                total += 1;
                if e.contains(s.reliability) {
                    inside += 1;
                }
            }
        }
        Some((inside, total))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    pub mode: Mode,
    pub schemes: Vec<SchemeRun>,
    pub wall_seconds: f64,
}

impl ScenarioRun {
    /// True when at least one scheme failed.
    pub fn partial(&self) -> bool {
        self.schemes.iter().any(|s| s.error.is_some())
    }

    /// Largest final bound over all solved schemes.
    pub fn total_bound(&self) -> f64 {
        self.schemes
            .iter()
            .filter_map(|s| s.curve.as_ref())
            .map(ReliabilityCurve::final_bound)
            .fold(0.0, f64::max)
    }
}

/// Ages the solver samples for `spec` on `cfg`: zero, every `stride`
/// intervals, the probes and the horizon.
pub fn sample_ages(spec: &ScenarioSpec, cfg: &ArrayConfig) -> Vec<u64> {
    let step = spec.settings(cfg).step_size;
    let every = step.saturating_mul(spec.stride).max(1);
    let mut ages: Vec<u64> = (0..=spec.horizon / every).map(|i| i * every).collect();
    ages.extend(spec.probes.iter().copied().filter(|&p| p <= spec.horizon));
    ages.push(spec.horizon);
    ages.sort_unstable();
    ages.dedup();
    ages
}

fn solve_one(spec: &ScenarioSpec, cfg: &ArrayConfig) -> Result<ReliabilityCurve, String> {
    Solver::new(cfg, spec.settings(cfg))
        .and_then(|s| s.with_probes(spec.probes.iter().copied()).run(spec.horizon, spec.stride))
        .map_err(|e| e.to_string())
}

/// Runs every scheme of `spec`. A scheme whose solver or simulator fails is
/// recorded with its error and the remaining schemes still run.
pub fn run_scenario(spec: &ScenarioSpec, mode: Mode) -> Result<ScenarioRun, CliError> {
    spec.validate()?;
    let started = Instant::now();
    let mc = spec.mc.unwrap_or(McSpec {
        runs: DEFAULT_MC_RUNS,
        seed: 0,
    });
    let mut schemes = Vec::with_capacity(spec.schemes.len());
    for scheme in &spec.schemes {
        let label = scheme.label();
        let cfg = spec.config(scheme)?;
        let t = Instant::now();
        let mut run = SchemeRun {
            label: label.clone(),
            config: cfg.clone(),
            curve: None,
            mc: None,
            error: None,
            wall_seconds: 0.0,
        };
        if mode != Mode::Simulate {
            log::info!("{}: solving {label}", spec.name);
            match solve_one(spec, &cfg) {
                Ok(curve) => run.curve = Some(curve),
                Err(e) => {
                    log::error!("{}: {label}: {e}", spec.name);
                    run.error = Some(e);
                }
            }
        }
        if mode != Mode::Solve && run.error.is_none() {
            let ages = match &run.curve {
                Some(curve) => curve.samples.iter().map(|s| s.system_age).collect(),
                None => sample_ages(spec, &cfg),
            };
            log::info!("{}: simulating {label} ({} runs)", spec.name, mc.runs);
            match estimate_reliability(&cfg, &ages, mc.runs, mc.seed) {
                Ok(result) => run.mc = Some(result),
                Err(e) => {
                    log::error!("{}: {label}: {e}", spec.name);
                    run.error = Some(e.to_string());
                }
            }
        }
        run.wall_seconds = t.elapsed().as_secs_f64();
        schemes.push(run);
    }
    Ok(ScenarioRun {
        spec: spec.clone(),
        mode,
        schemes,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Data drives per stripe.
    N,
    /// Error-rate constant `c`.
    EccC,
    /// Erasure limit.
    M,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "n" | "N" => Ok(SweepAxis::N),
            "ecc_c" | "c" => Ok(SweepAxis::EccC),
            "m" | "M" => Ok(SweepAxis::M),
            other => Err(format!("unknown sweep axis '{other}'; expected n, ecc_c or m")),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::N => "n",
            SweepAxis::EccC => "ecc_c",
            SweepAxis::M => "m",
        })
    }
}

impl SweepAxis {
    fn apply(self, spec: &ScenarioSpec, value: f64) -> Result<ScenarioSpec, CliError> {
        let whole = || {
            (value >= 1.0 && value.fract() == 0.0)
                .then_some(value as u64)
                .ok_or_else(|| CliError::Validation(format!("sweep value {value} for axis {self} must be a whole number >= 1")))
        };
        let mut out = spec.clone();
        match self {
            SweepAxis::N => out.base.n = whole()? as usize,
            SweepAxis::M => out.base.erasure_limit = whole()?,
            SweepAxis::EccC => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(CliError::Validation(format!("sweep value {value} for ecc_c must be non-negative")));
                }
                out.base.rate_constant = value;
            }
        }
        out.base.parity_fractions = ArrayConfig::raid5_parity(out.base.n);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: String,
    pub probe_age: u64,
    pub reliability: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRun {
    pub scenario: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub probes: Vec<u64>,
    pub rows: Vec<SweepRow>,
    /// `(value, scheme, message)` for points that failed.
    pub failures: Vec<(f64, String, String)>,
    pub wall_seconds: f64,
}

/// Replacement epochs of `cfg` in `(0, horizon]`, plus the horizon.
pub fn default_probes(cfg: &ArrayConfig, horizon: u64) -> Result<Vec<u64>, CliError> {
    let schedule = RateSchedule::new(cfg).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut probes: Vec<u64> = schedule
        .replacement_epochs(0, horizon.saturating_add(1))
        .into_iter()
        .filter(|&k| k > 0 && k <= horizon)
        .collect();
    probes.push(horizon);
    probes.sort_unstable();
    probes.dedup();
    Ok(probes)
}

/// Solves every scheme of `spec` at each value of `axis`. With no explicit
/// probes, every curve is read at the union of all replacement epochs of
/// all swept configurations, so rows compare equal ages.
pub fn run_sweep(
    spec: &ScenarioSpec,
    axis: SweepAxis,
    values: &[f64],
    probes: Option<&[u64]>,
) -> Result<SweepRun, CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    let started = Instant::now();
    let points = values
        .iter()
        .map(|&v| axis.apply(spec, v).map(|s| (v, s)))
        .collect::<Result<Vec<_>, _>>()?;
    for (_, point) in &points {
        point.validate()?;
    }
    let probes: Vec<u64> = match probes {
        Some(p) => {
            let mut p: Vec<u64> = p.iter().copied().filter(|&a| a <= spec.horizon).collect();
            p.sort_unstable();
            p.dedup();
            p
        }
        None => {
            let mut all = Vec::new();
            for (_, point) in &points {
                for scheme in &point.schemes {
                    all.extend(default_probes(&point.config(scheme)?, point.horizon)?);
                }
            }
            all.sort_unstable();
            all.dedup();
            all
        }
    };
    if probes.is_empty() {
        return Err(CliError::Validation("no probe ages within the horizon".into()));
    }
    let horizon = *probes.last().expect("non-empty");

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (value, point) in &points {
        for scheme in &point.schemes {
            let cfg = point.config(scheme)?;
            let label = scheme.label();
            log::info!("sweep {axis}={value}: solving {label}");
            let result = Solver::new(&cfg, point.settings(&cfg))
                .and_then(|s| s.with_probes(probes.iter().copied()).run(horizon, u64::MAX));
            match result {
                Ok(curve) => {
                    for &age in &probes {
                        let sample = curve.at(age).expect("probe ages are sampled");
                        rows.push(SweepRow {
                            value: *value,
                            scheme: label.clone(),
                            probe_age: age,
                            reliability: sample.reliability,
                            bound: sample.bound,
                        });
                    }
                }
                Err(e) => {
                    log::error!("sweep {axis}={value}: {label}: {e}");
                    failures.push((*value, label, e.to_string()));
                }
            }
        }
    }
    Ok(SweepRun {
        scenario: spec.name.clone(),
        axis,
        values: values.to_vec(),
        probes,
        rows,
        failures,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}
