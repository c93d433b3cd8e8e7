// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration: TOML (or JSON) on disk, validated into an
//! [`ExperimentConfig`] whose canonical JSON form is hashed into reports.

use std::fmt;
use std::path::{Path, PathBuf};

use kfspec_core::gibbs::validate_probabilities;
use kfspec_core::ifs::presets;
use kfspec_core::thermo::bowen_dimension;
use kfspec_core::{GibbsModel, IfsSystem, PotentialSpec, DEFAULT_BUDGET};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A number written either as a float or as a string such as `"1/3"`,
/// `"3^-10"` or `"-inf"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    pub fn value(&self) -> Result<f64, String> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Text(s) => parse_scalar(s),
        }
    }
}

/// Parses `a`, `a/b` or `a^k`.
pub fn parse_scalar(text: &str) -> Result<f64, String> {
    let s = text.trim();
    let plain = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|_| format!("cannot read {t:?} as a number"))
    };
    if let Some((num, den)) = s.split_once('/') {
        let d = plain(den)?;
        if d == 0.0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(plain(num)? / d);
    }
    if let Some((base, exp)) = s.split_once('^') {
        let e = exp
            .trim()
            .parse::<i32>()
            .map_err(|_| format!("exponent in {s:?} must be an integer"))?;
        return Ok(plain(base)?.powi(e));
    }
    plain(s)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    name: Option<String>,
    budget: Option<u64>,
    ifs: RawIfs,
    potential: RawPotential,
    #[serde(default)]
    analysis: RawAnalysis,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIfs {
    preset: Option<String>,
    maps: Option<Vec<RawMap>>,
    #[serde(default)]
    assert_osc: bool,
    #[serde(default)]
    dimensionally_regular: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    r: Scalar,
    b: Scalar,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPotential {
    probabilities: Option<Vec<Scalar>>,
    symbol: Option<Vec<Scalar>>,
    pair: Option<Vec<Vec<Scalar>>>,
    /// Multiple of the geometric potential `log|r_i|`, or `"bowen"`.
    geometric: Option<Scalar>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalysis {
    tolerance: Option<f64>,
    lq: Option<LqConfig>,
    tau: Option<TauConfig>,
    pressure: Option<PressureConfig>,
    counting: Option<RawCounting>,
    bracketing: Option<RawBracketing>,
    scaling: Option<ScalingConfig>,
    sandwich: Option<SandwichConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassMethodChoice {
    Auto,
    Cylinder,
    Transfer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub method: MassMethodChoice,
    pub tol: f64,
    pub extra_levels: usize,
    pub q_points: usize,
}

impl Default for LqConfig {
    fn default() -> Self {
        Self {
            n_min: 4,
            n_max: 12,
            method: MassMethodChoice::Auto,
            tol: 1e-9,
            extra_levels: 4,
            q_points: 201,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TauConfig {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PressureConfig {
    pub level: usize,
    pub t_points: usize,
}

impl Default for PressureConfig {
    fn default() -> Self {
        Self {
            level: 8,
            t_points: 101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomSource {
    /// One atom per cylinder of the atlas at the given resolution.
    Atlas,
    /// One atom per charged dyadic cell; for overlapping systems.
    Dyadic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCounting {
    atoms: Option<AtomSource>,
    resolution: Option<Scalar>,
    dyadic_level: Option<usize>,
    grid_points: Option<usize>,
    min_count: Option<usize>,
    max_fraction: Option<f64>,
    eigenvalues: Option<usize>,
    fit: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CountingConfig {
    pub atoms: AtomSource,
    pub resolution: f64,
    pub dyadic_level: usize,
    pub grid_points: usize,
    pub min_count: usize,
    pub max_fraction: f64,
    pub eigenvalues: usize,
    /// Fit the counting curve; off when only eigenvalues are wanted.
    pub fit: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBracketing {
    cuts: Vec<Vec<Scalar>>,
    grid_points: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BracketingConfig {
    pub cuts: Vec<Vec<f64>>,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    /// One-based words.
    pub words: Vec<Vec<usize>>,
    pub k: usize,
    pub tolerance: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            words: vec![vec![1]],
            k: 3,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandwichConfig {}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemSpec {
    Preset(String),
    Affine(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialChoice {
    Probabilities(Vec<f64>),
    Symbol(Vec<f64>),
    Pair(Vec<Vec<f64>>),
    Geometric(f64),
    GeometricBowen,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Analyses {
    pub lq: Option<LqConfig>,
    pub tau: Option<TauConfig>,
    pub pressure: Option<PressureConfig>,
    pub counting: Option<CountingConfig>,
    pub bracketing: Option<BracketingConfig>,
    pub scaling: Option<ScalingConfig>,
    pub sandwich: Option<SandwichConfig>,
}

/// Validated configuration. Everything that affects results lives here,
/// so its canonical JSON is a faithful fingerprint of a run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub budget: u64,
    pub system: SystemSpec,
    pub assert_osc: bool,
    pub dimensionally_regular: bool,
    pub potential: PotentialChoice,
    pub tolerance: f64,
    pub analysis: Analyses,
    #[serde(skip)]
    pub output_dir: Option<PathBuf>,
}

/// A validation failure tied to a config field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Default)]
struct Diagnostics(Vec<FieldError>);

impl Diagnostics {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(FieldError {
            field: field.into(),
            message: message.into(),
        });
    }

    fn scalar(&mut self, field: String, s: &Scalar) -> f64 {
        s.value().unwrap_or_else(|e| {
            self.push(field, e);
            f64::NAN
        })
    }

    fn scalars(&mut self, field: &str, values: &[Scalar]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(i, s)| self.scalar(format!("{field}[{i}]"), s))
            .collect()
    }
}

/// Format chosen from the extension; anything but `.json` is TOML.
pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json");
    parse(&text, json).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str, json: bool) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = if json {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?
    };
    validate(raw).map_err(|errs| {
        CliError::Config(
            errs.iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        )
    })
}

fn validate(raw: RawConfig) -> Result<ExperimentConfig, Vec<FieldError>> {
    let mut d = Diagnostics::default();

    let system = match (&raw.ifs.preset, &raw.ifs.maps) {
        (Some(name), None) => {
            if presets::by_name(name).is_none() {
                d.push(
                    "ifs.preset",
                    format!("unknown preset {name:?}; known: {}", presets::NAMES.join(", ")),
                );
            }
            SystemSpec::Preset(name.clone())
        }
        (None, Some(maps)) => SystemSpec::Affine(
            maps.iter()
                .enumerate()
                .map(|(i, m)| {
                    (
                        d.scalar(format!("ifs.maps[{i}].r"), &m.r),
                        d.scalar(format!("ifs.maps[{i}].b"), &m.b),
                    )
                })
                .collect(),
        ),
        _ => {
            d.push("ifs", "give exactly one of `preset` or `maps`");
            SystemSpec::Affine(Vec::new())
        }
    };

    let p = &raw.potential;
    let given = [
        p.probabilities.is_some(),
        p.symbol.is_some(),
        p.pair.is_some(),
        p.geometric.is_some(),
    ];
    let potential = if given.iter().filter(|g| **g).count() != 1 {
        d.push(
            "potential",
            "give exactly one of `probabilities`, `symbol`, `pair` or `geometric`",
        );
        PotentialChoice::Symbol(Vec::new())
    } else if let Some(v) = &p.probabilities {
        let probs = d.scalars("potential.probabilities", v);
        if probs.iter().all(|x| x.is_finite()) {
            if let Err(e) = validate_probabilities(&probs) {
                let sum: f64 = probs.iter().sum();
                d.push("potential.probabilities", format!("{e} (sum {sum})"));
            }
        }
        PotentialChoice::Probabilities(probs)
    } else if let Some(v) = &p.symbol {
        PotentialChoice::Symbol(d.scalars("potential.symbol", v))
    } else if let Some(rows) = &p.pair {
        PotentialChoice::Pair(
            rows.iter()
                .enumerate()
                .map(|(i, r)| d.scalars(&format!("potential.pair[{i}]"), r))
                .collect(),
        )
    } else {
        match p.geometric.as_ref().unwrap() {
            Scalar::Text(s) if s.trim() == "bowen" => PotentialChoice::GeometricBowen,
            s => PotentialChoice::Geometric(d.scalar("potential.geometric".into(), s)),
        }
    };

    let a = raw.analysis;
    let tolerance = a.tolerance.unwrap_or(0.02);
    if tolerance.is_nan() || tolerance <= 0.0 {
        d.push("analysis.tolerance", "must be positive");
    }
    if let Some(lq) = &a.lq {
        if lq.n_min == 0 || lq.n_min + 2 > lq.n_max {
            d.push("analysis.lq", "need 1 ≤ n_min and n_max ≥ n_min + 2");
        }
        if lq.q_points < 3 {
            d.push("analysis.lq.q_points", "need at least 3 points");
        }
    }
    if let Some(pr) = &a.pressure {
        if pr.level == 0 {
            d.push("analysis.pressure.level", "must be at least 1");
        }
        if pr.t_points < 2 {
            d.push("analysis.pressure.t_points", "need at least 2 points");
        }
    }
    let counting = a.counting.map(|c| {
        let resolution = c
            .resolution
            .as_ref()
            .map(|s| d.scalar("analysis.counting.resolution".into(), s))
            .unwrap_or(0.0);
        if c.resolution.is_some() && !(resolution > 0.0 && resolution < 1.0) {
            d.push("analysis.counting.resolution", "must lie in (0,1)");
        }
        let cfg = CountingConfig {
            atoms: c.atoms.unwrap_or(AtomSource::Atlas),
            resolution,
            dyadic_level: c.dyadic_level.unwrap_or(12),
            grid_points: c.grid_points.unwrap_or(200),
            min_count: c.min_count.unwrap_or(8),
            max_fraction: c.max_fraction.unwrap_or(0.25),
            eigenvalues: c.eigenvalues.unwrap_or(10),
            fit: c.fit.unwrap_or(true),
        };
        if !(cfg.max_fraction > 0.0 && cfg.max_fraction <= 1.0) {
            d.push("analysis.counting.max_fraction", "must lie in (0,1]");
        }
        if cfg.grid_points < 5 {
            d.push("analysis.counting.grid_points", "need at least 5 points");
        }
        cfg
    });
    let bracketing = a.bracketing.map(|b| BracketingConfig {
        cuts: b
            .cuts
            .iter()
            .enumerate()
            .map(|(i, set)| d.scalars(&format!("analysis.bracketing.cuts[{i}]"), set))
            .collect(),
        grid_points: b.grid_points.unwrap_or(50),
    });
    if let Some(s) = &a.scaling {
        if s.words.iter().flatten().any(|&x| x == 0) {
            d.push("analysis.scaling.words", "symbols are one-based");
        }
    }

    if !d.0.is_empty() {
        return Err(d.0);
    }
    Ok(ExperimentConfig {
        name: raw.name.unwrap_or_else(|| "experiment".into()),
        budget: raw.budget.unwrap_or(DEFAULT_BUDGET),
        system,
        assert_osc: raw.ifs.assert_osc,
        dimensionally_regular: raw.ifs.dimensionally_regular,
        potential,
        tolerance,
        analysis: Analyses {
            lq: a.lq,
            tau: a.tau,
            pressure: a.pressure,
            counting,
            bracketing,
            scaling: a.scaling,
            sandwich: a.sandwich,
        },
        output_dir: raw.output.dir,
    })
}

impl ExperimentConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    pub fn build_system(&self) -> Result<IfsSystem, CliError> {
        let system = match &self.system {
            SystemSpec::Preset(name) => presets::by_name(name)
                .ok_or_else(|| CliError::Config(format!("ifs.preset: unknown preset {name:?}")))?,
            SystemSpec::Affine(params) => {
                let maps = params
                    .iter()
                    .map(|&(r, b)| kfspec_core::ContractionMap::affine(r, b))
                    .collect();
                IfsSystem::new(maps, self.assert_osc).map_err(|e| CliError::Config(format!("ifs: {e}")))?
            }
        };
        Ok(system)
    }

    pub fn build_model(&self) -> Result<GibbsModel, CliError> {
        let system = self.build_system()?;
        let geometric = |scale: f64, system: &IfsSystem| {
            let params = system.affine_params().ok_or_else(|| {
                CliError::Config("potential.geometric: needs an affine system".into())
            })?;
            Ok::<_, CliError>(PotentialSpec::symbol(
                params.iter().map(|(r, _)| scale * r.abs().ln()).collect(),
            ))
        };
        let spec = match &self.potential {
            PotentialChoice::Probabilities(p) => PotentialSpec::from_probabilities(p)
                .map_err(|e| CliError::Config(format!("potential.probabilities: {e}")))?,
            PotentialChoice::Symbol(v) => PotentialSpec::symbol(v.clone()),
            PotentialChoice::Pair(rows) => PotentialSpec::pair(rows.clone()),
            PotentialChoice::Geometric(s) => geometric(*s, &system)?,
            PotentialChoice::GeometricBowen => {
                let delta = bowen_dimension(&system, 1, self.budget)?;
                geometric(delta.mid(), &system)?
            }
        };
        GibbsModel::new(system, &spec).map_err(|e| CliError::Config(format!("potential: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANTOR: &str = r#"
        name = "cantor"
        [ifs]
        maps = [{ r = "1/3", b = 0 }, { r = "1/3", b = "2/3" }]
        [potential]
        probabilities = ["1/2", 0.5]
        [analysis.lq]
        n_max = 10
        [analysis.counting]
        resolution = "3^-8"
    "#;

    #[test]
    fn scalars() {
        assert_eq!(parse_scalar("1/4").unwrap(), 0.25);
        assert_eq!(parse_scalar(" 2^-3 ").unwrap(), 0.125);
        assert_eq!(parse_scalar("-inf").unwrap(), f64::NEG_INFINITY);
        assert!(parse_scalar("1/0").is_err());
        assert!(parse_scalar("abc").is_err());
    }

    #[test]
    fn parses_toml() {
        let c = parse(CANTOR, false).unwrap();
        assert_eq!(c.name, "cantor");
        let lq = c.analysis.lq.as_ref().unwrap();
        assert_eq!((lq.n_min, lq.n_max), (4, 10));
        assert_eq!(c.analysis.counting.as_ref().unwrap().resolution, 3f64.powi(-8));
        assert!(c.analysis.pressure.is_none());
        let model = c.build_model().unwrap();
        assert!(model.system().osc_certified());
    }

    #[test]
    fn json_and_hash() {
        let json = r#"{"ifs": {"preset": "halves"}, "potential": {"probabilities": [0.5, 0.5]}}"#;
        let a = parse(json, true).unwrap();
        let b = parse(json, true).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), parse(CANTOR, false).unwrap().hash());
    }

    #[test]
    fn diagnostics_name_fields() {
        let bad = CANTOR.replace(r#"["1/2", 0.5]"#, "[0.5, 0.4]");
        let msg = parse(&bad, false).unwrap_err().to_string();
        assert!(msg.contains("potential.probabilities"), "{msg}");
        let bad = CANTOR.replace("n_max = 10", "n_max = 4");
        assert!(parse(&bad, false).unwrap_err().to_string().contains("analysis.lq"));
        let bad = CANTOR.replace("[ifs]", "[ifs]\npreset = \"cantor\"");
        assert!(parse(&bad, false).unwrap_err().to_string().contains("ifs"));
        let bad = CANTOR.replace("n_max", "n_maxx");
        let msg = parse(&bad, false).unwrap_err().to_string();
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn geometric_bowen_potential() {
        let text = r#"
            [ifs]
            maps = [{ r = 0.5, b = 0 }, { r = 0.25, b = 0.75 }]
            [potential]
            geometric = "bowen"
        "#;
        let model = parse(text, false).unwrap().build_model().unwrap();
        let p = model.probabilities().unwrap();
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        let delta = p[0].ln() / 0.5f64.ln();
        assert!((delta - p[1].ln() / 0.25f64.ln()).abs() < 1e-9);
    }
}
