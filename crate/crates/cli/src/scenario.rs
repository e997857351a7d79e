//! Scenario files.
//!
//! A scenario file is TOML holding an array of `[[scenario]]` tables:
//!
//! ```toml
//! [[scenario]]
//! name = "comparable"
//! rate.c = 0.4e-13
//! array.parity = ["raid5", "diffraid_sigma:1"]
//! run.horizon = 2.6e10
//! ```
//!
//! Keys: `preset` (`"full"` or `"small"`), `array.n`, `array.blocks`,
//! `array.stripes`, `array.erasure_limit`, `array.scheme` (`"traditional"` or
//! `"diffraid"`), `array.parity` (one entry or a list of `raid5`,
//! `diffraid_sigma:<sigma>` or `explicit:[p0,...,pN]`), `rate.c`,
//! `rate.alpha`, `rate.mu`, `rate.erase_interval`, `solver.step_size`,
//! `solver.epsilon`, `solver.state_cap` (an integer or `"auto"`),
//! `run.horizon`, `run.stride`, `run.probes`, `mc.runs` and `mc.seed`.
//! Counts may be written as floats (`2.6e10`) when they are whole numbers.

use std::collections::HashSet;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use raidrel_core::{truncated_normal_parity, ArrayConfig, Scheme, SolverSettings, Truncation};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::CliError;

/// Overflow threshold used by `state_cap = "auto"`.
pub const DEFAULT_ADAPTIVE_THRESHOLD: f64 = 1e-6;

/// Without an explicit `solver.state_cap`, larger arrays use adaptive
/// truncation.
pub const FULL_CHAIN_MAX_STRIPES: u64 = 4096;

const BUILTIN: &str = include_str!("builtin.toml");

/// Parity placement of one curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ParitySpec {
    Raid5,
    DiffRaidSigma(f64),
    Explicit(Vec<f64>),
}

impl ParitySpec {
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text == "raid5" {
            return Ok(ParitySpec::Raid5);
        }
        if let Some(sigma) = text.strip_prefix("diffraid_sigma:") {
            let sigma: f64 = sigma
                .trim()
                .parse()
                .map_err(|_| format!("invalid sigma in '{text}'"))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(format!("sigma must be positive in '{text}'"));
            }
            return Ok(ParitySpec::DiffRaidSigma(sigma));
        }
        if let Some(list) = text.strip_prefix("explicit:") {
            let inner = list
                .trim()
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'))
                .ok_or_else(|| format!("expected explicit:[p0,...,pN], got '{text}'"))?;
            let values = inner
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| format!("invalid number in '{text}'"))?;
            return Ok(ParitySpec::Explicit(values));
        }
        Err(format!(
            "unknown parity '{text}'; expected raid5, diffraid_sigma:<sigma> or explicit:[...]"
        ))
    }

    /// Scheme implied by the placement: even parity stays put, anything
    /// else is redistributed.
    pub fn default_scheme(&self) -> Scheme {
        match self {
            ParitySpec::Raid5 => Scheme::TraditionalRaid,
            _ => Scheme::DiffRaid,
        }
    }

    pub fn fractions(&self, n: usize) -> Result<Vec<f64>, String> {
        match self {
            ParitySpec::Raid5 => Ok(ArrayConfig::raid5_parity(n)),
            ParitySpec::DiffRaidSigma(sigma) => {
                truncated_normal_parity(n, *sigma).map_err(|e| e.to_string())
            }
            ParitySpec::Explicit(values) => Ok(values.clone()),
        }
    }
}

impl fmt::Display for ParitySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParitySpec::Raid5 => write!(f, "raid5"),
            ParitySpec::DiffRaidSigma(sigma) => write!(f, "diffraid_sigma:{sigma}"),
            ParitySpec::Explicit(values) => {
                let parts: Vec<String> = values.iter().map(|v| v.to_string()).collect();
                write!(f, "explicit:[{}]", parts.join(","))
            }
        }
    }
}

/// One curve of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeSpec {
    pub parity: ParitySpec,
    pub scheme: Scheme,
}

impl SchemeSpec {
    pub fn new(parity: ParitySpec) -> Self {
        let scheme = parity.default_scheme();
        Self { parity, scheme }
    }

    /// Label used in outputs; names the scheme only when it differs from
    /// the one the placement implies.
    pub fn label(&self) -> String {
        if self.scheme == self.parity.default_scheme() {
            self.parity.to_string()
        } else {
            let scheme = match self.scheme {
                Scheme::TraditionalRaid => "traditional",
                Scheme::DiffRaid => "diffraid",
            };
            format!("{}@{scheme}", self.parity)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McSpec {
    pub runs: u64,
    pub seed: u64,
}

/// A fully resolved scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: String,
    /// Array and rate values; parity and scheme come from each entry of
    /// `schemes`.
    pub base: ArrayConfig,
    pub schemes: Vec<SchemeSpec>,
    /// `None` means `B*M/20` for each configuration.
    pub step_size: Option<u64>,
    pub epsilon: f64,
    pub truncation: Truncation,
    pub horizon: u64,
    pub stride: u64,
    /// Ages at which every curve is sampled in addition to the stride.
    pub probes: Vec<u64>,
    pub mc: Option<McSpec>,
}

impl ScenarioSpec {
    pub fn config(&self, scheme: &SchemeSpec) -> Result<ArrayConfig, CliError> {
        let parity_fractions = scheme
            .parity
            .fractions(self.base.n)
            .map_err(|e| self.invalid(&format!("array.parity {}: {e}", scheme.parity)))?;
        let cfg = ArrayConfig {
            parity_fractions,
            scheme: scheme.scheme,
            ..self.base.clone()
        };
        cfg.validate()
            .map_err(|e| self.invalid(&format!("{}: {e}", scheme.label())))?;
        Ok(cfg)
    }

    pub fn settings(&self, cfg: &ArrayConfig) -> SolverSettings {
        let mut settings = SolverSettings::for_config(cfg)
            .with_max_error(self.epsilon)
            .with_truncation(self.truncation);
        if let Some(step) = self.step_size {
            settings = settings.with_step_size(step);
        }
        settings
    }

    /// Checks everything a run needs; used after command line overrides.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schemes.is_empty() {
            return Err(self.invalid("array.parity: no schemes"));
        }
        if self.stride < 1 {
            return Err(self.invalid("run.stride must be at least 1"));
        }
        for scheme in &self.schemes {
            let cfg = self.config(scheme)?;
            self.settings(&cfg)
                .validate()
                .map_err(|e| self.invalid(&format!("solver: {e}")))?;
            if let Truncation::Fixed(cap) = self.truncation {
                if cap as u64 >= cfg.stripes {
                    return Err(self.invalid(&format!(
                        "solver.state_cap {cap} must be below array.stripes {}",
                        cfg.stripes
                    )));
                }
            }
        }
        if let Some(mc) = self.mc {
            if mc.runs == 0 {
                return Err(self.invalid("mc.runs must be at least 1"));
            }
        }
        Ok(())
    }

    fn invalid(&self, msg: &str) -> CliError {
        CliError::Validation(format!("scenario '{}': {msg}", self.name))
    }
}

/// Parses `auto` or a cap, as accepted by `--truncate` and
/// `solver.state_cap`.
pub fn parse_truncation(text: &str) -> Result<Truncation, String> {
    match text.trim() {
        "auto" => Ok(Truncation::Adaptive {
            threshold: DEFAULT_ADAPTIVE_THRESHOLD,
        }),
        "full" | "none" => Ok(Truncation::Full),
        other => other
            .parse::<usize>()
            .ok()
            .filter(|&cap| cap >= 1)
            .map(Truncation::Fixed)
            .ok_or_else(|| format!("expected a state cap >= 1, \"auto\" or \"full\", got '{other}'")),
    }
}

/// Parses a count that may be written in scientific notation (`2.6e10`).
pub fn parse_count(text: &str) -> Result<u64, String> {
    let text = text.trim();
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    text.parse::<f64>()
        .ok()
        .and_then(float_count)
        .ok_or_else(|| format!("expected a non-negative whole number, got '{text}'"))
}

fn float_count(f: f64) -> Option<u64> {
    (f >= 0.0 && f.fract() == 0.0 && f < 1.8e19).then_some(f as u64)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<ScenarioSpec>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_scenarios(&text).map_err(|e| match e {
        CliError::Validation(msg) => CliError::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Scenarios shipped with the tool: the three error regimes at desk scale
/// (`small-*`) and at full scale.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    parse_scenarios(BUILTIN).expect("built-in scenarios are valid")
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    scenario: Vec<Spanned<RawScenario>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Spanned<String>,
    preset: Option<Spanned<String>>,
    #[serde(default)]
    array: RawArray,
    #[serde(default)]
    rate: RawRate,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    run: RawRun,
    mc: Option<Spanned<RawMc>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawArray {
    n: Option<Spanned<Number>>,
    blocks: Option<Spanned<Number>>,
    stripes: Option<Spanned<Number>>,
    erasure_limit: Option<Spanned<Number>>,
    scheme: Option<Spanned<String>>,
    parity: Option<Spanned<OneOrMany>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRate {
    c: Option<Spanned<Number>>,
    alpha: Option<Spanned<Number>>,
    mu: Option<Spanned<Number>>,
    erase_interval: Option<Spanned<Number>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    step_size: Option<Spanned<Number>>,
    epsilon: Option<Spanned<Number>>,
    state_cap: Option<Spanned<CapField>>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: Option<Spanned<Number>>,
    stride: Option<Spanned<Number>>,
    probes: Option<Spanned<Vec<Number>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMc {
    runs: Option<Number>,
    seed: Option<Number>,
}

#[derive(Deserialize, Clone, Copy)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    fn real(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }

    fn count(self) -> Option<u64> {
        match self {
            Number::Int(i) => u64::try_from(i).ok(),
            Number::Float(f) => float_count(f),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CapField {
    Cap(i64),
    Text(String),
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Error context for one scenario table.
struct Ctx<'a> {
    src: &'a str,
    name: String,
}

impl Ctx<'_> {
    fn err(&self, key: &str, span: Range<usize>, msg: impl fmt::Display) -> CliError {
        CliError::Validation(format!(
            "scenario '{}': {key} (line {}): {msg}",
            self.name,
            line_of(self.src, span.start)
        ))
    }

    fn count(&self, key: &str, v: &Option<Spanned<Number>>, default: u64, min: u64) -> Result<u64, CliError> {
        let Some(v) = v else { return Ok(default) };
        match v.get_ref().count() {
            Some(c) if c >= min => Ok(c),
            _ => Err(self.err(key, v.span(), format!("expected a whole number >= {min}"))),
        }
    }

    fn real(
        &self,
        key: &str,
        v: &Option<Spanned<Number>>,
        default: f64,
        ok: impl Fn(f64) -> bool,
        expect: &str,
    ) -> Result<f64, CliError> {
        let Some(v) = v else { return Ok(default) };
        let x = v.get_ref().real();
        if x.is_finite() && ok(x) {
            Ok(x)
        } else {
            Err(self.err(key, v.span(), format!("{expect}, got {x}")))
        }
    }
}

pub fn parse_scenarios(src: &str) -> Result<Vec<ScenarioSpec>, CliError> {
    let raw: RawFile = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| line_of(src, s.start));
        let msg = e.message().trim().to_string();
        match line {
            Some(line) => CliError::Validation(format!("parse error at line {line}: {msg}")),
            None => CliError::Validation(format!("parse error: {msg}")),
        }
    })?;
    let mut seen = HashSet::new();
    let mut specs = Vec::with_capacity(raw.scenario.len());
    for entry in raw.scenario {
        let span = entry.span();
        let spec = resolve(src, entry.into_inner())?;
        if !seen.insert(spec.name.clone()) {
            return Err(CliError::Validation(format!(
                "scenario '{}' (line {}): duplicate scenario name",
                spec.name,
                line_of(src, span.start)
            )));
        }
        specs.push(spec);
    }
    Ok(specs)
}

fn resolve(src: &str, raw: RawScenario) -> Result<ScenarioSpec, CliError> {
    let ctx = Ctx {
        src,
        name: raw.name.get_ref().clone(),
    };
    if ctx.name.trim().is_empty() {
        return Err(ctx.err("name", raw.name.span(), "must not be empty"));
    }
    let preset = match &raw.preset {
        None => ArrayConfig::full_scale(9, Scheme::DiffRaid, ArrayConfig::raid5_parity(9), 0.0),
        Some(p) => match p.get_ref().as_str() {
            "full" => ArrayConfig::full_scale(9, Scheme::DiffRaid, ArrayConfig::raid5_parity(9), 0.0),
            "small" => ArrayConfig::desk_scale(Scheme::DiffRaid, ArrayConfig::raid5_parity(3), 0.0),
            other => {
                return Err(ctx.err("preset", p.span(), format!("unknown preset '{other}'; expected full or small")))
            }
        },
    };

    let a = &raw.array;
    let n = ctx.count("array.n", &a.n, preset.n as u64, 1)? as usize;
    let blocks = ctx.count("array.blocks", &a.blocks, preset.blocks_per_ssd, 1)?;
    // Stripes follow blocks unless set.
    let stripe_default = if a.blocks.is_some() { blocks } else { preset.stripes };
    let stripes = ctx.count("array.stripes", &a.stripes, stripe_default, 1)?;
    let erasure_limit = ctx.count("array.erasure_limit", &a.erasure_limit, preset.erasure_limit, 1)?;

    let r = &raw.rate;
    let c = match &r.c {
        Some(_) => ctx.real("rate.c", &r.c, 0.0, |x| x >= 0.0, "expected a non-negative number")?,
        None => {
            return Err(ctx.err("rate.c", raw.name.span(), "missing; the error-rate constant has no default"))
        }
    };
    let alpha = ctx.real("rate.alpha", &r.alpha, preset.shape, |x| x > 1.0, "expected a number above 1")?;
    let mu = ctx.real("rate.mu", &r.mu, preset.recovery_rate, |x| x >= 0.0, "expected a non-negative number")?;
    let erase_interval = ctx.real(
        "rate.erase_interval",
        &r.erase_interval,
        preset.erase_interval,
        |x| x > 0.0,
        "expected a positive number",
    )?;

    let scheme_override = match &a.scheme {
        None => None,
        Some(s) => Some(match s.get_ref().as_str() {
            "traditional" => Scheme::TraditionalRaid,
            "diffraid" => Scheme::DiffRaid,
            other => {
                return Err(ctx.err(
                    "array.scheme",
                    s.span(),
                    format!("unknown scheme '{other}'; expected traditional or diffraid"),
                ))
            }
        }),
    };
    let (parity_texts, parity_span) = match &a.parity {
        None => (vec!["raid5".to_string(), "diffraid_sigma:1".to_string()], raw.name.span()),
        Some(p) => {
            let texts = match p.get_ref() {
                OneOrMany::One(t) => vec![t.clone()],
                OneOrMany::Many(ts) => ts.clone(),
            };
            (texts, p.span())
        }
    };
    if parity_texts.is_empty() {
        return Err(ctx.err("array.parity", parity_span, "at least one entry is needed"));
    }
    let mut schemes = Vec::with_capacity(parity_texts.len());
    for text in &parity_texts {
        let parity = ParitySpec::parse(text).map_err(|e| ctx.err("array.parity", parity_span.clone(), e))?;
        let mut scheme = SchemeSpec::new(parity);
        if let Some(s) = scheme_override {
            scheme.scheme = s;
        }
        schemes.push(scheme);
    }
    let labels: HashSet<String> = schemes.iter().map(SchemeSpec::label).collect();
    if labels.len() != schemes.len() {
        return Err(ctx.err("array.parity", parity_span, "duplicate entries"));
    }

    let s = &raw.solver;
    let step_size = match &s.step_size {
        None => None,
        Some(_) => Some(ctx.count("solver.step_size", &s.step_size, 1, 1)?),
    };
    let epsilon = ctx.real(
        "solver.epsilon",
        &s.epsilon,
        1e-3,
        |x| x > 0.0 && x < 1.0,
        "expected a number in (0, 1)",
    )?;
    let truncation = match &s.state_cap {
        None if stripes > FULL_CHAIN_MAX_STRIPES => Truncation::Adaptive {
            threshold: DEFAULT_ADAPTIVE_THRESHOLD,
        },
        None => Truncation::Full,
        Some(cap) => {
            let parsed = match cap.get_ref() {
                CapField::Cap(e) => parse_truncation(&e.to_string()),
                CapField::Text(t) => parse_truncation(t),
            };
            let truncation = parsed.map_err(|e| ctx.err("solver.state_cap", cap.span(), e))?;
            if let Truncation::Fixed(e) = truncation {
                if e as u64 >= stripes {
                    return Err(ctx.err(
                        "solver.state_cap",
                        cap.span(),
                        format!("{e} must be below array.stripes = {stripes}"),
                    ));
                }
            }
            truncation
        }
    };

    let base = ArrayConfig {
        n,
        blocks_per_ssd: blocks,
        stripes,
        erasure_limit,
        parity_fractions: ArrayConfig::raid5_parity(n),
        rate_constant: c,
        shape: alpha,
        recovery_rate: mu,
        erase_interval,
        scheme: Scheme::TraditionalRaid,
    };

    let run = &raw.run;
    // Two lifetimes of an evenly loaded array.
    let default_horizon = 2 * base.even_lifetime();
    let horizon = ctx.count("run.horizon", &run.horizon, default_horizon, 0)?;
    let stride = ctx.count("run.stride", &run.stride, 1, 1)?;
    let mut probes = Vec::new();
    if let Some(p) = &run.probes {
        for v in p.get_ref() {
            let age = v
                .count()
                .ok_or_else(|| ctx.err("run.probes", p.span(), "expected whole numbers"))?;
            probes.push(age);
        }
        probes.sort_unstable();
        probes.dedup();
    }

    let mc = match &raw.mc {
        None => None,
        Some(m) => {
            let span = m.span();
            let m = m.get_ref();
            let runs = match m.runs {
                None => 100_000,
                Some(v) => v
                    .count()
                    .filter(|&r| r >= 1)
                    .ok_or_else(|| ctx.err("mc.runs", span.clone(), "expected a whole number >= 1"))?,
            };
            let seed = match m.seed {
                None => 0,
                Some(v) => v
                    .count()
                    .ok_or_else(|| ctx.err("mc.seed", span.clone(), "expected a non-negative whole number"))?,
            };
            Some(McSpec { runs, seed })
        }
    };

    let spec = ScenarioSpec {
        name: ctx.name.clone(),
        base,
        schemes,
        step_size,
        epsilon,
        truncation,
        horizon,
        stride,
        probes,
        mc,
    };
    // Cross-field checks, reported against the parity entry.
    for scheme in &spec.schemes {
        let fractions = scheme
            .parity
            .fractions(n)
            .map_err(|e| ctx.err("array.parity", parity_span.clone(), e))?;
        let cfg = ArrayConfig {
            parity_fractions: fractions,
            scheme: scheme.scheme,
            ..spec.base.clone()
        };
        cfg.validate()
            .map_err(|e| ctx.err("array.parity", parity_span.clone(), format!("{}: {e}", scheme.label())))?;
    }
    spec.validate()?;
    Ok(spec)
}
