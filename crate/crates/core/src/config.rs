//! TOML run files. Physical quantities carry their unit in the key name.
//!
//! ```toml
//! [system]
//! v_a_snu = 50.0
//! t_channel = 1.0
//! eta = 1.0
//! eps_mod_snu = 0.1035
//! v_el_snu = 0.01
//! gain_mv2 = 783.16
//! n_per_group = 1000000
//! seed = 1592642302
//!
//! [schedule]
//! k = 16
//! step = 0.7
//!
//! [attack]
//! kind = "saturation"
//! alpha_shot_std = 4.0
//! delta_shot_std = 4.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{AttackConfig, AttackPipeline};
use crate::error::Error;
use crate::estimator::Thresholds;
use crate::params::SystemParams;
use crate::schedule::AttenuationSchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub v_a_snu: f64,
    #[serde(default = "one")]
    pub t_channel: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub eps_mod_snu: f64,
    #[serde(default)]
    pub v_el_snu: f64,
    pub gain_mv2: f64,
    pub n_per_group: usize,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl SystemSection {
    pub fn to_params(&self) -> Result<SystemParams, Error> {
        let p = SystemParams {
            v_a: self.v_a_snu,
            t_channel: self.t_channel,
            eta: self.eta,
            eps_mod: self.eps_mod_snu,
            v_el: self.v_el_snu,
            gain_v2: self.gain_mv2 * 1e-3,
            n_per_group: self.n_per_group,
            seed: self.seed,
        };
        p.validate().map_err(|e| rename_field(e, "system", system_key))?;
        Ok(p)
    }

    pub fn from_params(p: &SystemParams) -> Self {
        SystemSection {
            v_a_snu: p.v_a,
            t_channel: p.t_channel,
            eta: p.eta,
            eps_mod_snu: p.eps_mod,
            v_el_snu: p.v_el,
            gain_mv2: p.gain_v2 * 1e3,
            n_per_group: p.n_per_group,
            seed: p.seed,
        }
    }
}

fn system_key(field: &str) -> String {
    match field {
        "v_a" => "v_a_snu",
        "eps_mod" => "eps_mod_snu",
        "v_el" => "v_el_snu",
        "gain_v2" => "gain_mv2",
        other => other,
    }
    .to_string()
}

fn same(field: &str) -> String {
    field.to_string()
}

fn rename_field(e: Error, section: &str, key: impl Fn(&str) -> String) -> Error {
    match e {
        Error::InvalidParam { field, reason } if !field.starts_with(section) => Error::InvalidParam {
            field: format!("{section}.{}", key(&field)),
            reason,
        },
        other => other,
    }
}

/// Either `k`/`step`/`top` for a geometric ladder or explicit `ratios`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    /// Relative error of the attenuator per level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_rel: Option<Vec<f64>>,
}

impl ScheduleSection {
    pub fn geometric(k: usize, step: f64) -> Self {
        ScheduleSection {
            k: Some(k),
            step: Some(step),
            ..Default::default()
        }
    }

    pub fn build(&self) -> Result<AttenuationSchedule, Error> {
        let geometric = self.k.is_some() || self.step.is_some() || self.top.is_some();
        let s = match (&self.ratios, geometric) {
            (Some(_), true) => {
                return Err(Error::invalid(
                    "schedule",
                    "give either `ratios` or `k`/`step`/`top`, not both",
                ))
            }
            (Some(r), false) => AttenuationSchedule::from_ratios(r.clone()),
            (None, true) => {
                let k = self.k.ok_or_else(|| Error::invalid("schedule.k", "missing"))?;
                let step = self.step.ok_or_else(|| Error::invalid("schedule.step", "missing"))?;
                AttenuationSchedule::geometric(k, step, self.top.unwrap_or(1.0))
            }
            (None, false) => {
                return Err(Error::invalid("schedule", "needs `ratios` or `k` and `step`"))
            }
        };
        let mut s = s.map_err(|e| rename_field(e, "schedule", same))?;
        if let Some(w) = &self.weights {
            s = s
                .with_weights(w.clone())
                .map_err(|e| rename_field(e, "schedule", same))?;
        }
        if let Some(b) = &self.bias_rel {
            s = s
                .with_bias(b.clone())
                .map_err(|e| rename_field(e, "schedule", |f| f.replacen("bias", "bias_rel", 1)))?;
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    #[serde(default = "default_r2")]
    pub r2_min: f64,
    #[serde(default = "default_residual")]
    pub residual_max_snu: f64,
    /// Widen the residual budget for groups smaller than the reference
    /// 5·10⁸ pulses.
    #[serde(default = "yes")]
    pub scale_with_group_size: bool,
}

fn default_r2() -> f64 {
    Thresholds::default().r2_min
}

fn default_residual() -> f64 {
    Thresholds::default().residual_max_snu
}

fn yes() -> bool {
    true
}

impl Default for ThresholdSection {
    fn default() -> Self {
        ThresholdSection {
            r2_min: default_r2(),
            residual_max_snu: default_residual(),
            scale_with_group_size: true,
        }
    }
}

impl ThresholdSection {
    /// Thresholds to apply to groups of `n` pulses.
    pub fn effective(&self, n: u64) -> Result<Thresholds, Error> {
        let t = Thresholds {
            r2_min: self.r2_min,
            residual_max_snu: self.residual_max_snu,
        };
        t.validate()?;
        Ok(if self.scale_with_group_size {
            t.scaled_for_group_size(n)
        } else {
            t
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_dir() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub schedule: ScheduleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackConfig>,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub params: SystemParams,
    pub schedule: AttenuationSchedule,
    pub attack: AttackPipeline,
    pub thresholds: Thresholds,
}

impl RunConfig {
    /// Honest 16-level run at the default system parameters.
    pub fn honest_default() -> Self {
        RunConfig {
            system: SystemSection::from_params(&SystemParams::honest_default()),
            schedule: ScheduleSection::geometric(16, 0.7),
            attack: None,
            thresholds: ThresholdSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Full intercept-resend hidden by a saturation attack with rail and
    /// offset at 4 shot-noise std, on an ideal receiver whose r = 1 signal
    /// variance is `v_b`.
    pub fn saturation_scenario(v_b: f64, n_per_group: usize, seed: u64) -> Self {
        let params = SystemParams {
            n_per_group,
            seed,
            ..SystemParams::ideal_receiver(v_b)
        };
        RunConfig {
            system: SystemSection::from_params(&params),
            schedule: ScheduleSection::geometric(16, 0.7),
            attack: Some(AttackConfig::Composite {
                attacks: vec![
                    AttackConfig::InterceptResend { mu: 1.0 },
                    AttackConfig::saturation_default(),
                ],
            }),
            thresholds: ThresholdSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(describe_toml_error(text, &e)))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn resolve(&self) -> Result<ResolvedRun, Error> {
        let params = self.system.to_params()?;
        let schedule = self.schedule.build()?;
        let attack = AttackPipeline::from_config(self.attack.as_ref()).map_err(|e| rename_field(e, "attack", same))?;
        let thresholds = self.thresholds.effective(params.n_per_group as u64)?;
        Ok(ResolvedRun {
            params,
            schedule,
            attack,
            thresholds,
        })
    }

    /// SHA-256 of the canonical serialization, hex encoded.
    pub fn hash_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }
}

fn describe_toml_error(text: &str, e: &toml::de::Error) -> String {
    let msg = e.message().trim_end();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            format!("line {line}: {msg}")
        }
        None => msg.to_string(),
    }
}
