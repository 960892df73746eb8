//! TOML configuration for the command-line harness.
//!
//! Every key has a default; `config/defaults.toml` lists them all. Keys can
//! be overridden from the environment as `XFMR_<SECTION>__<KEY>`, e.g.
//! `XFMR_SCENARIO__SEED=7` or `XFMR_PIPELINE__FLAG_POLICY=gap`.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aekf::{FilterConfig, FilterTuning};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Polynomial};
use crate::pipeline::{FlagPolicy, PipelineConfig};
use crate::synth::{MixingWeights, ScenarioConfig, TransformerParams};
use crate::validity::ValidityConfig;

pub const ENV_PREFIX: &str = "XFMR_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    #[default]
    SinglePhase,
    ThreePhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: ModelVariant,
    /// Fundamental frequency [Hz]; defaults to the scenario frequency.
    pub frequency: Option<f64>,
    /// Input sampling rate [Hz]; defaults to the scenario output rate.
    pub sample_rate: Option<f64>,
    /// Limb polynomial; defaults to the transformer's.
    pub limb: Option<Polynomial>,
    pub yoke: Polynomial,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            variant: ModelVariant::SinglePhase,
            frequency: None,
            sample_rate: None,
            limb: None,
            yoke: crate::verify::YOKE,
        }
    }
}

/// Filter tuning; unset nominal values come from the transformer rating and
/// the scenario's peak flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSection {
    pub i_nom: Option<f64>,
    pub flux_nom: Option<f64>,
    pub p0_factor: f64,
    pub p0_flux_factor: f64,
    pub q_factor: f64,
    pub q_offset_factor: f64,
    pub sigma0_fraction: f64,
    pub m: usize,
    pub sigma_min_fraction: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let t = FilterTuning::default();
        Self {
            i_nom: None,
            flux_nom: None,
            p0_factor: t.p0_factor,
            p0_flux_factor: t.p0_flux_factor,
            q_factor: t.q_factor,
            q_offset_factor: t.q_offset_factor,
            sigma0_fraction: t.sigma0_fraction,
            m: t.m,
            sigma_min_fraction: t.sigma_min_fraction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValiditySection {
    pub rho: f64,
}

impl Default for ValiditySection {
    fn default() -> Self {
        Self { rho: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    /// Reconstruction step [s]; defaults to the scenario simulation step.
    pub delta_t: Option<f64>,
    pub buffer_len: Option<usize>,
    pub flag_policy: FlagPolicy,
    pub noise_estimator: bool,
    /// Bounded queue per stream connection [samples].
    pub stream_buffer: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self { delta_t: None, buffer_len: None, flag_policy: FlagPolicy::HoldLastValid, noise_estimator: true, stream_buffer: 1024 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    /// Circuit simulation of the single-phase equivalent circuit.
    #[default]
    Steinmetz,
    /// Closed-form model-matched signal.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub engine: Engine,
    /// Three-phase mixing weights `k1..k5`; analytic engine only.
    pub mixing: Option<[f64; 5]>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { engine: Engine::Steinmetz, mixing: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Number of post-warm-up normalized residuals in the MSE statistic.
    pub mse_window: usize,
    /// MSE window starts at the first verdict at or after this time [s];
    /// defaults to the scenario switch-on instant.
    pub mse_start: Option<f64>,
    /// Start of the area comparison cycle [s].
    pub area_start: Option<f64>,
    /// Length of the area comparison in fundamental cycles.
    pub area_cycles: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { mse_window: 500, mse_start: None, area_start: None, area_cycles: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub model: ModelSection,
    pub filter: FilterSection,
    pub validity: ValiditySection,
    pub pipeline: PipelineSection,
    pub transformer: TransformerParams,
    pub scenario: ScenarioConfig,
    pub synth: SynthSection,
    pub run: RunSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            model: ModelSection::default(),
            filter: FilterSection::default(),
            validity: ValiditySection::default(),
            pipeline: PipelineSection::default(),
            transformer: TransformerParams::rated_5kva(),
            scenario: ScenarioConfig::default(),
            synth: SynthSection::default(),
            run: RunSection::default(),
        }
    }
}

impl AppConfig {
    /// Parses TOML text, applies `overrides` as `(section.key, value)` pairs
    /// and validates the result.
    pub fn parse_with(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        // Deserializing the text directly keeps line and column in errors.
        let mut cfg: AppConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !overrides.is_empty() {
            let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            for (key, raw) in overrides {
                apply_override(&mut table, key, raw)?;
            }
            let keys: Vec<&str> = overrides.iter().map(|(k, _)| k.as_str()).collect();
            cfg = table
                .try_into()
                .map_err(|e: toml::de::Error| Error::Config(format!("overrides {}: {e}", keys.join(", "))))?;
        }
        cfg.validate().map_err(|e| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &[])
    }

    /// Reads a file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with(&text, &env_overrides()).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.transformer.validate()?;
        self.scenario.validate()?;
        if let Some(k) = self.synth.mixing {
            MixingWeights::new(k)?;
        }
        if self.synth.mixing.is_some() != (self.model.variant == ModelVariant::ThreePhase) {
            return Err(Error::Config("synth.mixing must be set exactly when model.variant = \"three-phase\"".into()));
        }
        if self.synth.mixing.is_some() && self.synth.engine == Engine::Steinmetz {
            return Err(Error::Config("three-phase synthesis requires synth.engine = \"analytic\"".into()));
        }
        if self.run.mse_window == 0 {
            return Err(Error::Config("run.mse_window must be >= 1".into()));
        }
        if !(self.run.area_cycles > 0.0) {
            return Err(Error::Config("run.area_cycles must be positive".into()));
        }
        self.pipeline_config()?.validate()
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        let f = self.model.frequency.unwrap_or(self.scenario.frequency);
        let rate = self.model.sample_rate.unwrap_or(self.scenario.output_rate);
        if !(rate > 0.0) {
            return Err(Error::Config(format!("model.sample_rate must be positive, got {rate}")));
        }
        let limb = self.model.limb.unwrap_or_else(|| self.transformer.polynomial());
        match self.model.variant {
            ModelVariant::SinglePhase => ModelConfig::single_phase(TAU * f, 1.0 / rate, limb),
            ModelVariant::ThreePhase => ModelConfig::three_phase(TAU * f, 1.0 / rate, limb, self.model.yoke),
        }
    }

    pub fn tuning(&self) -> FilterTuning {
        let f = &self.filter;
        FilterTuning {
            i_nom: f.i_nom.unwrap_or(self.transformer.i_nom),
            flux_nom: f.flux_nom.unwrap_or_else(|| self.scenario.lambda_m()),
            p0_factor: f.p0_factor,
            p0_flux_factor: f.p0_flux_factor,
            q_factor: f.q_factor,
            q_offset_factor: f.q_offset_factor,
            sigma0_fraction: f.sigma0_fraction,
            m: f.m,
            sigma_min_fraction: f.sigma_min_fraction,
        }
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let model = self.model_config()?;
        let filter = FilterConfig::from_tuning(&model, &self.tuning())?;
        let cfg = PipelineConfig {
            model,
            buffer_len: self.pipeline.buffer_len.unwrap_or_else(|| PipelineConfig::default_buffer_len(&model, filter.m)),
            filter,
            validity: ValidityConfig::new(self.validity.rho)?,
            delta_t: self.pipeline.delta_t.unwrap_or(self.scenario.sim_step),
            flag_policy: self.pipeline.flag_policy,
            noise_estimator: self.pipeline.noise_estimator,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mixing(&self) -> Result<Option<MixingWeights>> {
        self.synth.mixing.map(MixingWeights::new).transpose()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// `XFMR_SECTION__KEY=value` pairs from the process environment, as
/// `("section.key", value)`.
pub fn env_overrides() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::env::vars()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            let (section, key) = rest.split_once("__")?;
            Some((format!("{}.{}", section.to_lowercase(), key.to_lowercase()), v))
        })
        .collect();
    out.sort();
    out
}

/// Sets a dotted key; the value is read as a TOML literal when it parses as
/// one and as a string otherwise.
fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let (last, sections) = parts.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for s in sections {
        cur = cur
            .entry(s.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = AppConfig::parse("").unwrap();
        assert_eq!(cfg, AppConfig::default());
        let p = cfg.pipeline_config().unwrap();
        assert_eq!(p.block_len(), 100);
        assert_eq!(p.buffer_len, 167);
        assert!((p.model.ts - 2e-4).abs() < 1e-18);
    }

    #[test]
    fn overrides_apply() {
        let ov = vec![
            ("scenario.seed".to_string(), "7".to_string()),
            ("pipeline.flag_policy".to_string(), "gap".to_string()),
            ("scenario.load.kind".to_string(), "open".to_string()),
        ];
        let cfg = AppConfig::parse_with("[scenario]\nseed = 3\n", &ov).unwrap();
        assert_eq!(cfg.scenario.seed, 7);
        assert_eq!(cfg.pipeline.flag_policy, FlagPolicy::Gap);
    }

    #[test]
    fn errors_carry_location() {
        let err = AppConfig::parse("[scenario]\nseed = \"x\"\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("seed"), "{msg}");
        assert!(AppConfig::parse("[scenario]\nbogus = 1\n").is_err());
        assert!(AppConfig::parse("[validity]\nrho = 0\n").is_err());
    }

    #[test]
    fn three_phase_requires_mixing() {
        assert!(AppConfig::parse("[model]\nvariant = \"three-phase\"\n").is_err());
        let cfg = AppConfig::parse(
            "[model]\nvariant = \"three-phase\"\n[synth]\nengine = \"analytic\"\nmixing = [0.7, 0.2, 0.1, 0.3, 0.15]\n",
        )
        .unwrap();
        assert_eq!(cfg.model_config().unwrap().dim(), 8);
    }

    #[test]
    fn reference_file_matches_defaults() {
        let text = include_str!("../../../config/defaults.toml");
        assert_eq!(AppConfig::parse(text).unwrap(), AppConfig::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = AppConfig::default();
        assert_eq!(AppConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
