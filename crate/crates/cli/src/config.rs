//! JSON configuration: every key is optional, missing keys take the scenario
//! defaults (optionally overridden by a preset), and unknown keys are errors.
//! Per-value range checks happen during deserialization so the error path
//! names the key; checks that involve several keys run afterwards.

use std::fmt;
use std::path::Path;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use uwbbounds_core::{Error as CoreError, H1Mode, LowerMethod, Preset, ScenarioConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    /// Link distance `l`.
    L,
    /// Distance of the first interferer.
    D,
    /// Duty cycle of the intended transmitter.
    Eta1,
    /// Duty cycle of the first interferer.
    Eta2,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::L => "l",
            SweepVar::D => "d",
            SweepVar::Eta1 => "eta1",
            SweepVar::Eta2 => "eta2",
        }
    }

    fn parse(key: &str) -> Option<Self> {
        match key {
            "l" => Some(SweepVar::L),
            "d" => Some(SweepVar::D),
            "eta1" => Some(SweepVar::Eta1),
            "eta2" => Some(SweepVar::Eta2),
            _ => None,
        }
    }

    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) {
        match self {
            SweepVar::L => cfg.link_distance_m = value,
            SweepVar::D => cfg.interferer_distances_m[0] = value,
            SweepVar::Eta1 => cfg.duty_cycles[0] = value,
            SweepVar::Eta2 => cfg.duty_cycles[1] = value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSelection {
    Lower,
    Upper,
    #[default]
    Both,
}

impl BoundSelection {
    pub fn lower(self) -> bool {
        matches!(self, BoundSelection::Lower | BoundSelection::Both)
    }

    pub fn upper(self) -> bool {
        matches!(self, BoundSelection::Upper | BoundSelection::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum H1ModeName {
    FixedDraw,
    Averaged,
}

impl From<H1ModeName> for H1Mode {
    fn from(m: H1ModeName) -> Self {
        match m {
            H1ModeName::FixedDraw => H1Mode::FixedDraw,
            H1ModeName::Averaged => H1Mode::Averaged,
        }
    }
}

impl From<H1Mode> for H1ModeName {
    fn from(m: H1Mode) -> Self {
        match m {
            H1Mode::FixedDraw => H1ModeName::FixedDraw,
            H1Mode::Averaged => H1ModeName::Averaged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LowerMethodName {
    MonteCarlo,
    Exact,
}

impl From<LowerMethodName> for LowerMethod {
    fn from(m: LowerMethodName) -> Self {
        match m {
            LowerMethodName::MonteCarlo => LowerMethod::MonteCarlo,
            LowerMethodName::Exact => LowerMethod::Exact,
        }
    }
}

impl From<LowerMethod> for LowerMethodName {
    fn from(m: LowerMethod) -> Self {
        match m {
            LowerMethod::MonteCarlo => LowerMethodName::MonteCarlo,
            LowerMethod::Exact => LowerMethodName::Exact,
        }
    }
}

macro_rules! checked {
    ($name:ident, $inner:ty, $inner_name:literal, $ok:expr, $what:literal) => {
        #[derive(Debug, Clone, Copy, Deserialize)]
        #[serde(try_from = $inner_name)]
        struct $name($inner);

        impl TryFrom<$inner> for $name {
            type Error = String;

            fn try_from(x: $inner) -> Result<Self, String> {
                let ok: fn($inner) -> bool = $ok;
                if ok(x) {
                    Ok($name(x))
                } else {
                    Err(format!("{x} {}", $what))
                }
            }
        }
    };
}

checked!(Positive, f64, "f64", |x| x > 0.0 && x.is_finite(), "must be positive and finite");
checked!(DutyCycle, f64, "f64", |x| x > 0.0 && x < 1.0, "is outside (0, 1)");
checked!(Fraction, f64, "f64", |x| x > 0.0 && x <= 1.0, "is outside (0, 1]");
checked!(Count, usize, "usize", |x| x >= 1, "must be at least 1");
checked!(Budget, usize, "usize", |x| x >= 2, "is below the minimum budget of 2");

/// Swept variables in declaration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sweep(pub Vec<(SweepVar, Vec<f64>)>);

impl<'de> Deserialize<'de> for Sweep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SweepVisitor;

        impl<'de> Visitor<'de> for SweepVisitor {
            type Value = Sweep;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from l, d, eta1, eta2 to value lists")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Sweep, A::Error> {
                let mut vars = Vec::new();
                while let Some(key) = map.next_key::<String>()? {
                    let var = SweepVar::parse(&key)
                        .ok_or_else(|| de::Error::unknown_field(&key, &["l", "d", "eta1", "eta2"]))?;
                    let values = match var {
                        SweepVar::L | SweepVar::D => {
                            map.next_value::<Vec<Positive>>()?.into_iter().map(|v| v.0).collect()
                        }
                        SweepVar::Eta1 | SweepVar::Eta2 => {
                            map.next_value::<Vec<DutyCycle>>()?.into_iter().map(|v| v.0).collect()
                        }
                    };
                    vars.push((var, values));
                }
                Ok(Sweep(vars))
            }
        }

        deserializer.deserialize_map(SweepVisitor)
    }
}

impl Serialize for Sweep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (var, values) in &self.0 {
            map.serialize_entry(var.name(), values)?;
        }
        map.end()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    num_nodes: Option<Count>,
    codeword_len: Option<Count>,
    taps: Option<Count>,
    duty_cycles: Option<Vec<DutyCycle>>,
    tx_power_w: Option<Positive>,
    pathloss_b: Option<Positive>,
    pathloss_alpha: Option<Positive>,
    link_distance_m: Option<Positive>,
    interferer_distances_m: Option<Vec<Positive>>,
    noise_var_w: Option<Positive>,
    captured_energy_fraction: Option<Fraction>,
    total_path_count: Option<Count>,
    samples_theta: Option<Budget>,
    samples_pd: Option<Budget>,
    samples_upper: Option<Budget>,
    seed: Option<u64>,
    h1_mode: Option<H1ModeName>,
    lower_method: Option<LowerMethodName>,
    sweep: Option<Sweep>,
    bounds: Option<BoundSelection>,
}

/// A validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub sweep: Sweep,
    pub bounds: BoundSelection,
}

/// The effective configuration with every default materialized; loading it
/// back yields the same [`SweepSpec`].
#[derive(Debug, Serialize)]
struct EffectiveConfig<'a> {
    num_nodes: usize,
    codeword_len: usize,
    taps: usize,
    duty_cycles: &'a [f64],
    tx_power_w: f64,
    pathloss_b: f64,
    pathloss_alpha: f64,
    link_distance_m: f64,
    interferer_distances_m: &'a [f64],
    noise_var_w: f64,
    captured_energy_fraction: f64,
    total_path_count: usize,
    samples_theta: usize,
    samples_pd: usize,
    samples_upper: usize,
    seed: u64,
    h1_mode: H1ModeName,
    lower_method: LowerMethodName,
    sweep: &'a Sweep,
    bounds: BoundSelection,
}

impl SweepSpec {
    pub fn num_points(&self) -> usize {
        self.sweep.0.iter().map(|(_, v)| v.len()).product()
    }

    pub fn seed(&self) -> u64 {
        self.base.rng_seed
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base.rng_seed = seed;
        self
    }

    /// Cross-key checks: the base scenario and every sweep point must be
    /// valid scenarios.
    pub fn validate(&self) -> Result<(), CliError> {
        self.base.validate().map_err(core_invariant)?;
        let mut seen = Vec::new();
        for (var, values) in &self.sweep.0 {
            let key = format!("sweep.{}", var.name());
            if seen.contains(var) {
                return Err(CliError::invariant(key, "is listed twice"));
            }
            seen.push(*var);
            if values.is_empty() {
                return Err(CliError::invariant(key, "has an empty value list"));
            }
            if matches!(var, SweepVar::D | SweepVar::Eta2) && self.base.num_nodes < 2 {
                return Err(CliError::invariant(key, "needs at least one interferer (num_nodes >= 2)"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let b = &self.base;
        let eff = EffectiveConfig {
            num_nodes: b.num_nodes,
            codeword_len: b.codeword_len,
            taps: b.taps,
            duty_cycles: &b.duty_cycles,
            tx_power_w: b.tx_power_w,
            pathloss_b: b.pathloss_b,
            pathloss_alpha: b.pathloss_alpha,
            link_distance_m: b.link_distance_m,
            interferer_distances_m: &b.interferer_distances_m,
            noise_var_w: b.noise_var_w,
            captured_energy_fraction: b.captured_energy_fraction,
            total_path_count: b.total_path_count,
            samples_theta: b.samples_theta,
            samples_pd: b.samples_pd,
            samples_upper: b.samples_upper,
            seed: b.rng_seed,
            h1_mode: b.h1_mode.into(),
            lower_method: b.lower_method.into(),
            sweep: &self.sweep,
            bounds: self.bounds,
        };
        serde_json::to_string_pretty(&eff).expect("config serializes")
    }
}

fn core_invariant(err: CoreError) -> CliError {
    match err {
        CoreError::InvalidParameter { name, reason } => CliError::invariant(name, reason),
        other => CliError::invariant("config", other.to_string()),
    }
}

/// Parse a configuration document; `preset` replaces the defaults before the
/// document's own keys are applied.
pub fn parse_config(text: &str, preset: Option<Preset>) -> Result<SweepSpec, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => CliError::Schema {
                key,
                message: inner.to_string(),
            },
            _ => CliError::Malformed(inner.to_string()),
        }
    })?;

    let mut base = ScenarioConfig::default();
    if let Some(p) = preset {
        p.apply(&mut base);
    }
    macro_rules! set {
        ($field:ident) => {
            if let Some(v) = raw.$field {
                base.$field = v.0;
            }
        };
    }
    set!(num_nodes);
    set!(codeword_len);
    set!(taps);
    set!(tx_power_w);
    set!(pathloss_b);
    set!(pathloss_alpha);
    set!(link_distance_m);
    set!(noise_var_w);
    set!(captured_energy_fraction);
    set!(total_path_count);
    set!(samples_theta);
    set!(samples_pd);
    set!(samples_upper);
    if let Some(v) = raw.duty_cycles {
        base.duty_cycles = v.into_iter().map(|x| x.0).collect();
    }
    if let Some(v) = raw.interferer_distances_m {
        base.interferer_distances_m = v.into_iter().map(|x| x.0).collect();
    }
    if let Some(seed) = raw.seed {
        base.rng_seed = seed;
    }
    if let Some(mode) = raw.h1_mode {
        base.h1_mode = mode.into();
    }
    if let Some(method) = raw.lower_method {
        base.lower_method = method.into();
    }
    let spec = SweepSpec {
        base,
        sweep: raw.sweep.unwrap_or_default(),
        bounds: raw.bounds.unwrap_or_default(),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_config(path: &Path, preset: Option<Preset>) -> Result<SweepSpec, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text, preset)
}
