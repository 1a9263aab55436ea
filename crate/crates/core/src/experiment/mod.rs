//! Experiment configuration, seeded ensembles, scans and file output.
//!
//! A run is fully determined by its [`ExperimentConfig`]: worker count changes
//! wall time only, never the numbers written.

mod ensemble;
mod execute;
mod recipes;
mod threshold;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub use ensemble::{memory_estimate, resolve_workers, run_ensemble, size_seed, Ensemble, WORKERS_ENV};
pub use execute::{
    execute, lifetime_scan, nonsplit_pair, single_pair, LifetimePoint, LifetimeScan, NonsplitPoint, Outcome, SinglePairPoint,
    Status,
};
pub use recipes::{recipe, RECIPES};
pub use threshold::{curve_crossing, threshold_scan, ThresholdCrossing, ThresholdCurve, ThresholdScan};

use crate::bath::BathSpec;
use crate::cavity::{CavitySpec, HoneycombSpec};
use crate::decoder::MatchingMode;
use crate::dynamics::{InitialState, RunConfig, SampleSchedule};
use crate::energy::InteractionSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Simulate,
    Threshold,
    LifetimeScan,
    Equilibrium,
    NonsplitPair,
    SinglePair,
    Analytics,
    Cavity,
}

impl ExperimentKind {
    pub const ALL: [Self; 8] = [
        Self::Simulate,
        Self::Threshold,
        Self::LifetimeScan,
        Self::Equilibrium,
        Self::NonsplitPair,
        Self::SinglePair,
        Self::Analytics,
        Self::Cavity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Threshold => "threshold",
            Self::LifetimeScan => "lifetime-scan",
            Self::Equilibrium => "equilibrium",
            Self::NonsplitPair => "nonsplit-pair",
            Self::SinglePair => "single-pair",
            Self::Analytics => "analytics",
            Self::Cavity => "cavity",
        }
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind {s:?}")))
    }
}

/// i.i.d. error sweep; `runs` syndromes are drawn per `(L, f)` point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSettings {
    pub f_values: Vec<f64>,
    pub bootstrap: usize,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            f_values: vec![0.06, 0.07, 0.08, 0.09, 0.1, 0.11, 0.12, 0.13, 0.14],
            bootstrap: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LifetimeSettings {
    /// `⟨Z_ec⟩` level defining the threshold time.
    pub level: f64,
    /// Level marking the middle of the step-like collapse.
    pub full_decay_level: f64,
    /// Fixed `f_c` for predictions; fitted to the measured times when absent.
    pub f_c: Option<f64>,
}

impl Default for LifetimeSettings {
    fn default() -> Self {
        Self {
            level: 0.9,
            full_decay_level: 0.5,
            f_c: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumSettings {
    /// Exponents to sweep; empty means the interaction's own `alpha`.
    pub alphas: Vec<f64>,
    pub sweeps: usize,
}

impl Default for EquilibriumSettings {
    fn default() -> Self {
        Self {
            alphas: Vec::new(),
            sweeps: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinglePairSettings {
    /// Sample points in units of `γ(0) t / L²`.
    pub s_values: Vec<f64>,
}

impl Default for SinglePairSettings {
    fn default() -> Self {
        Self {
            s_values: (0..=16).map(|k| 1e-3 * 10f64.powf(k as f64 / 8.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySettings {
    pub spec: CavitySpec<f64>,
    /// When present, `g` and `J₀` are derived from it and override `spec`.
    #[serde(default)]
    pub honeycomb: Option<HoneycombSpec<f64>>,
    #[serde(default)]
    pub anyon_counts: Vec<usize>,
}

fn default_runs() -> usize {
    1
}

fn default_budget() -> u64 {
    4096
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub sizes: Vec<usize>,
    pub interaction: InteractionSpec<f64>,
    /// Carries the temperature.
    pub bath: BathSpec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub t_max: f64,
    #[serde(default)]
    pub schedule: SampleSchedule,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub decoder: MatchingMode,
    /// Refuse ensembles whose estimated footprint exceeds this many MiB.
    #[serde(default = "default_budget")]
    pub memory_budget_mb: u64,
    #[serde(default)]
    pub threshold: ThresholdSettings,
    #[serde(default)]
    pub lifetime: LifetimeSettings,
    #[serde(default)]
    pub equilibrium: EquilibriumSettings,
    #[serde(default)]
    pub single_pair: SinglePairSettings,
    #[serde(default)]
    pub cavity: Option<CavitySettings>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("cannot parse config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() && !matches!(self.kind, ExperimentKind::Cavity) {
            return Err(config_err("\"sizes\" must list at least one lattice size"));
        }
        if let Some(&bad) = self.sizes.iter().find(|&&l| l < 2) {
            return Err(config_err(format!("lattice sizes must be at least 2, got {bad}")));
        }
        let i = &self.interaction;
        if !(i.alpha >= 0.0 && i.alpha < 2.0) {
            return Err(config_err(format!(
                "interaction.alpha = {} is outside [0, 2); the mean-field coupling integral diverges at alpha >= 2",
                i.alpha
            )));
        }
        let t = self.bath.temperature();
        if !(t > 0.0) || !t.is_finite() {
            return Err(config_err(format!("bath.temperature must be positive, got {t}")));
        }
        i.validate().map_err(|e| config_err(e.to_string()))?;
        self.bath.validate().map_err(|e| config_err(e.to_string()))?;
        if self.runs < 1 {
            return Err(config_err("\"runs\" must be at least 1 (ensemble size, or syndromes per point for threshold scans)"));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(config_err(format!("\"t_max\" must be finite and non-negative, got {}", self.t_max)));
        }
        match self.kind {
            ExperimentKind::Simulate | ExperimentKind::LifetimeScan | ExperimentKind::NonsplitPair => {
                for &size in &self.sizes {
                    self.run_config(size).validate().map_err(|e| config_err(e.to_string()))?;
                }
            }
            ExperimentKind::Threshold => {
                let f = &self.threshold.f_values;
                if f.len() < 2 || f.iter().any(|x| !(0.0..=1.0).contains(x)) || f.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(config_err("threshold.f_values must hold at least 2 increasing probabilities in [0, 1]"));
                }
            }
            ExperimentKind::SinglePair => {
                let s = &self.single_pair.s_values;
                if s.is_empty() || s.iter().any(|x| !(*x > 0.0)) || s.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(config_err("single_pair.s_values must be positive and increasing"));
                }
                if !matches!(self.bath, BathSpec::ExplicitRates { gamma_minus, .. } if gamma_minus == 0.0) {
                    return Err(config_err(
                        "single-pair runs need an explicit-rate bath with gamma_minus = 0 (no pair creation or annihilation)",
                    ));
                }
            }
            ExperimentKind::Equilibrium => {
                if self.equilibrium.sweeps < 10 {
                    return Err(config_err("equilibrium.sweeps must be at least 10"));
                }
                if let Some(a) = self.equilibrium.alphas.iter().find(|a| !(**a >= 0.0 && **a < 2.0)) {
                    return Err(config_err(format!("equilibrium.alphas entry {a} is outside [0, 2)")));
                }
            }
            ExperimentKind::Cavity => {
                if self.cavity.is_none() {
                    return Err(config_err("cavity experiments need a \"cavity\" section"));
                }
            }
            ExperimentKind::Analytics => {}
        }
        let l = &self.lifetime;
        if !(l.level > 0.0 && l.level < 1.0 && l.full_decay_level > 0.0 && l.full_decay_level < l.level) {
            return Err(config_err("lifetime levels must satisfy 0 < full_decay_level < level < 1"));
        }
        if let Some(fc) = l.f_c {
            if !(fc > 0.0 && fc < 0.5) {
                return Err(config_err(format!("lifetime.f_c must lie in (0, 0.5), got {fc}")));
            }
        }
        Ok(())
    }

    /// Per-trajectory settings for one lattice size.
    pub fn run_config(&self, size: usize) -> RunConfig {
        RunConfig {
            size,
            interaction: self.interaction,
            bath: self.bath,
            t_max: self.t_max,
            schedule: self.schedule.clone(),
            initial: self.initial.clone(),
            decoder: self.decoder,
        }
    }
}

/// Shorthands accepted by [`apply_override`].
const ALIASES: [(&str, &str); 6] = [
    ("L", "sizes"),
    ("T", "bath.temperature"),
    ("J", "interaction.j"),
    ("A", "interaction.a"),
    ("alpha", "interaction.alpha"),
    ("f_c", "lifetime.f_c"),
];

/// Sets a dotted `key` in a JSON config to `raw`, parsed as JSON when
/// possible and as a string otherwise. A comma list without brackets becomes an array.
pub fn apply_override(config: &mut Value, key: &str, raw: &str) -> Result<()> {
    let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, full)| *full);
    let list = || {
        raw.split(',')
            .map(|x| serde_json::from_str::<Value>(x.trim()).ok())
            .collect::<Option<Vec<_>>>()
            .map(Value::Array)
    };
    let value = serde_json::from_str::<Value>(raw)
        .ok()
        .or_else(|| if raw.contains(',') { list() } else { None })
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let value = if key == "sizes" && value.is_number() { Value::Array(vec![value]) } else { value };
    let mut node = config;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(format!("--set {key}: {part:?} is not inside an object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(config_err("--set needs a non-empty key"))
}

/// Applies `key=value` overrides and re-validates.
pub fn with_overrides(config: &ExperimentConfig, sets: &[String]) -> Result<ExperimentConfig> {
    let mut value = serde_json::to_value(config)?;
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| config_err(format!("--set expects key=value, got {s:?}")))?;
        apply_override(&mut value, k.trim(), v.trim())?;
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| config_err(format!("after overrides: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        recipe("fig2").unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        for name in RECIPES {
            let cfg = recipe(name).unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg, "{name}");
            assert_eq!(back.hash(), cfg.hash());
        }
        let mut cfg = base();
        cfg.interaction.a = 0.1 + 0.2;
        cfg.bath = BathSpec::ohmic(1.0 / 3.0);
        cfg.kind = ExperimentKind::LifetimeScan;
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn hash_tracks_content() {
        let a = base();
        let mut b = base();
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn schema_rejections_are_actionable() {
        let mut cfg = base();
        cfg.interaction.alpha = 2.0;
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("alpha") && msg.contains("[0, 2)"), "{msg}");
        let mut cfg = base();
        cfg.bath = BathSpec::ohmic(0.0);
        assert!(cfg.validate().unwrap_err().to_string().contains("temperature"));
        let mut cfg = base();
        cfg.runs = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("runs"));
        let text = base().to_json().unwrap().replace("\"runs\"", "\"rnus\"");
        assert!(matches!(ExperimentConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn overrides() {
        let cfg = with_overrides(&base(), &["L=8,16".into(), "runs=5".into(), "T=0.4".into(), "seed=9".into()]);
        // the explicit-rate J is still 1, but the temperature moved: allowed
        let cfg = cfg.unwrap();
        assert_eq!(cfg.sizes, vec![8, 16]);
        assert_eq!(cfg.runs, 5);
        assert_eq!(cfg.bath.temperature(), 0.4);
        assert_eq!(cfg.seed, 9);
        let cfg = with_overrides(&base(), &["L=12".into(), "decoder=\"complete\"".into()]).unwrap();
        assert_eq!(cfg.sizes, vec![12]);
        assert_eq!(cfg.decoder, MatchingMode::Complete);
        assert!(with_overrides(&base(), &["alpha=3".into()]).is_err());
        assert!(with_overrides(&base(), &["runs".into()]).is_err());
        assert!(with_overrides(&base(), &["bogus=1".into()]).is_err());
    }

    #[test]
    fn kind_names() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.as_str().parse::<ExperimentKind>().unwrap(), k);
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.as_str()));
        }
    }
}
