//! Flat `key = value` experiment configuration with dotted namespaces.
//!
//! Blank lines and `#` comments are ignored. Every key has a default, so an
//! empty file is a valid configuration. The canonical rendering lists every
//! key in a fixed order and is what the configuration hash covers.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{PathLossParams, SimGeometry};
use crate::drl::env::{EnvConfig, SePenalty};
use crate::drl::mlp::Activation;
use crate::drl::train::TrainConfig;
use crate::estimation::PilotPlan;
use crate::harness::topology::{build_network, generate_topology, TopologyConfig};
use crate::heuristics::PhaseScheme;
use crate::jappa::ScaOptions;
use crate::network::Network;
use crate::performance::{dbm_to_watts, Nleh, SystemParams};
use crate::precoding::AlphaModel;
use crate::rng::{label, substream};
use crate::Result;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("`{key}`: invalid value `{value}` ({reason})")]
    InvalidValue { key: String, value: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResourcePolicy {
    Rapepa,
    Jappa,
    Ctde,
    Ctce,
}

impl ResourcePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ResourcePolicy::Rapepa => "RAPEPA",
            ResourcePolicy::Jappa => "JAPPA",
            ResourcePolicy::Ctde => "CTDE",
            ResourcePolicy::Ctce => "CTCE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: usize,
    pub realizations: usize,
    pub topology: TopologyConfig,
    pub s: usize,
    pub l: usize,
    pub n: usize,
    pub wavelength: f64,
    /// SIM thickness in wavelengths.
    pub t_sim: f64,
    pub kappa: f64,
    pub prf_i: usize,
    pub prf_e: usize,
    pub system: SystemParams,
    pub phase: PhaseScheme,
    pub resource: ResourcePolicy,
    pub hps_c: usize,
    pub alpha: AlphaModel,
    /// Information-AP count RAPEPA is centred on; `None` means `⌈M/2⌉`.
    pub rapepa_m_i: Option<usize>,
    pub rapepa_delta: usize,
    pub sca: ScaOptions,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 10_000,
            realizations: 50,
            topology: TopologyConfig::default(),
            s: 16,
            l: 2,
            n: 32,
            wavelength: 0.0857,
            t_sim: 4.0,
            kappa: 5.0,
            prf_i: 0,
            prf_e: 0,
            system: SystemParams::default(),
            phase: PhaseScheme::Eqps,
            resource: ResourcePolicy::Rapepa,
            hps_c: 100,
            alpha: AlphaModel::LargeAntenna,
            rapepa_m_i: None,
            rapepa_delta: 0,
            sca: ScaOptions::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| invalid(key, v, e.to_string()))
}

fn finite(key: &str, v: &str) -> std::result::Result<f64, ConfigError> {
    let x: f64 = num(key, v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(invalid(key, v, "not finite"))
    }
}

fn sizes(key: &str, v: &str) -> std::result::Result<Vec<usize>, ConfigError> {
    v.split(',').map(|p| num::<usize>(key, p.trim())).collect()
}

pub fn parse_phase(v: &str) -> Option<PhaseScheme> {
    match v.to_ascii_uppercase().as_str() {
        "RDPS" => Some(PhaseScheme::Rdps),
        "EQPS" => Some(PhaseScheme::Eqps),
        "HPS" => Some(PhaseScheme::Hps),
        _ => None,
    }
}

pub fn parse_resource(v: &str) -> Option<ResourcePolicy> {
    match v.to_ascii_uppercase().as_str() {
        "RAPEPA" => Some(ResourcePolicy::Rapepa),
        "JAPPA" => Some(ResourcePolicy::Jappa),
        "CTDE" => Some(ResourcePolicy::Ctde),
        "CTCE" => Some(ResourcePolicy::Ctce),
        _ => None,
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if !seen.insert(k.to_string()) {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: k.into(),
                });
            }
            if !cfg.set(k, v)? {
                return Err(ConfigError::UnknownKey {
                    line: i + 1,
                    key: k.into(),
                });
            }
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::parse(&text)?)
    }

    /// Set one key; `Ok(false)` for an unknown key.
    pub fn set(&mut self, k: &str, v: &str) -> std::result::Result<bool, ConfigError> {
        let t = &mut self.topology;
        let p = &mut self.system;
        match k {
            "seed" => self.seed = num(k, v)?,
            "trials" => self.trials = num(k, v)?,
            "realizations" => self.realizations = num(k, v)?,
            "topology.side" => t.side = finite(k, v)?,
            "topology.m" => t.m = num(k, v)?,
            "topology.k_i" => t.k_i = num(k, v)?,
            "topology.k_e" => t.k_e = num(k, v)?,
            "topology.ap_height" => t.pathloss.ap_height = finite(k, v)?,
            "topology.rx_height" => t.pathloss.rx_height = finite(k, v)?,
            "topology.shadow_db" => t.pathloss.shadow_db = finite(k, v)?,
            "geom.s" => self.s = num(k, v)?,
            "geom.l" => self.l = num(k, v)?,
            "geom.n" => self.n = num(k, v)?,
            "geom.wavelength" => self.wavelength = finite(k, v)?,
            "geom.t_sim" => self.t_sim = finite(k, v)?,
            "channel.kappa" => self.kappa = finite(k, v)?,
            "pilots.prf_i" => self.prf_i = num(k, v)?,
            "pilots.prf_e" => self.prf_e = num(k, v)?,
            "system.tau_c" => p.tau_c = num(k, v)?,
            "system.noise_dbm" => p.noise = dbm_to_watts(finite(k, v)?),
            "system.p_dl" => p.p_dl = finite(k, v)?,
            "system.p_ul" => p.p_ul = finite(k, v)?,
            "system.xi" => p.nleh.xi = finite(k, v)?,
            "system.chi" => p.nleh.chi = finite(k, v)?,
            "system.phi" => p.nleh.phi = finite(k, v)?,
            "system.se_min" => p.se_min = finite(k, v)?,
            "system.he_min" => p.he_min = finite(k, v)?,
            "policy.phase" => self.phase = parse_phase(v).ok_or_else(|| invalid(k, v, "expected RDPS, EQPS or HPS"))?,
            "policy.resource" => {
                self.resource = parse_resource(v).ok_or_else(|| invalid(k, v, "expected RAPEPA, JAPPA, CTDE or CTCE"))?
            }
            "policy.hps_c" => self.hps_c = num(k, v)?,
            "policy.alpha" => {
                self.alpha = match v {
                    "large_antenna" => AlphaModel::LargeAntenna,
                    "moment" => AlphaModel::Moment,
                    _ => return Err(invalid(k, v, "expected large_antenna or moment")),
                }
            }
            "rapepa.m_i" => self.rapepa_m_i = if v == "auto" { None } else { Some(num(k, v)?) },
            "rapepa.delta" => self.rapepa_delta = num(k, v)?,
            "jappa.lambda_pen" => self.sca.lambda_pen = finite(k, v)?,
            "jappa.max_iters" => self.sca.max_iters = num(k, v)?,
            "jappa.tol" => self.sca.tol = finite(k, v)?,
            "drl.lambda_r" => self.env.lambda_r = finite(k, v)?,
            "drl.lambda_se" => self.env.lambda_se = finite(k, v)?,
            "drl.penalty" => {
                self.env.penalty = match v {
                    "flat" => SePenalty::Flat,
                    "proportional" => SePenalty::Proportional,
                    _ => return Err(invalid(k, v, "expected flat or proportional")),
                }
            }
            "drl.episodes" => self.train.episodes = num(k, v)?,
            "drl.steps" => self.train.steps = num(k, v)?,
            "drl.actor_hidden" => self.train.actor_hidden = sizes(k, v)?,
            "drl.critic_hidden" => self.train.critic_hidden = sizes(k, v)?,
            "drl.lr_actor" => self.train.lr_actor = finite(k, v)?,
            "drl.lr_critic" => self.train.lr_critic = finite(k, v)?,
            "drl.batch" => self.train.batch = num(k, v)?,
            "drl.gamma" => self.train.gamma = finite(k, v)?,
            "drl.buffer" => self.train.buffer = num(k, v)?,
            "drl.tau" => self.train.tau = finite(k, v)?,
            "drl.noise_std" => self.train.noise_std = finite(k, v)?,
            "drl.noise_decay" => self.train.noise_decay = finite(k, v)?,
            "drl.clip" => self.train.clip = finite(k, v)?,
            "drl.critic_output" => {
                self.train.critic_output = match v {
                    "linear" => Activation::Identity,
                    "relu" => Activation::Relu,
                    _ => return Err(invalid(k, v, "expected linear or relu")),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Range checks that do not need the rest of the library.
    pub fn check(&self) -> std::result::Result<(), ConfigError> {
        let pos = |key: &str, v: usize| {
            if v == 0 {
                Err(invalid(key, "0", "must be positive"))
            } else {
                Ok(())
            }
        };
        pos("topology.m", self.topology.m)?;
        pos("geom.s", self.s)?;
        pos("geom.l", self.l)?;
        pos("geom.n", self.n)?;
        pos("trials", self.trials)?;
        pos("realizations", self.realizations)?;
        pos("policy.hps_c", self.hps_c)?;
        pos("drl.batch", self.train.batch)?;
        if self.topology.k_i + self.topology.k_e == 0 {
            return Err(invalid("topology.k_i", "0", "need at least one receiver"));
        }
        if !(0.0..=1.0).contains(&self.env.lambda_r) {
            return Err(invalid("drl.lambda_r", &self.env.lambda_r.to_string(), "must lie in [0, 1]"));
        }
        if self.wavelength <= 0.0 || self.t_sim <= 0.0 || self.topology.side <= 0.0 {
            return Err(invalid("geom", "", "wavelength, thickness and side must be positive"));
        }
        Ok(())
    }

    /// Every key in canonical order.
    pub fn render(&self) -> String {
        let t = &self.topology;
        let p = &self.system;
        let tr = &self.train;
        let mut s = String::new();
        let mut w = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        w("seed", self.seed.to_string());
        w("trials", self.trials.to_string());
        w("realizations", self.realizations.to_string());
        w("topology.side", t.side.to_string());
        w("topology.m", t.m.to_string());
        w("topology.k_i", t.k_i.to_string());
        w("topology.k_e", t.k_e.to_string());
        w("topology.ap_height", t.pathloss.ap_height.to_string());
        w("topology.rx_height", t.pathloss.rx_height.to_string());
        w("topology.shadow_db", t.pathloss.shadow_db.to_string());
        w("geom.s", self.s.to_string());
        w("geom.l", self.l.to_string());
        w("geom.n", self.n.to_string());
        w("geom.wavelength", self.wavelength.to_string());
        w("geom.t_sim", self.t_sim.to_string());
        w("channel.kappa", self.kappa.to_string());
        w("pilots.prf_i", self.prf_i.to_string());
        w("pilots.prf_e", self.prf_e.to_string());
        w("system.tau_c", p.tau_c.to_string());
        w("system.noise_dbm", (10.0 * p.noise.log10() + 30.0).to_string());
        w("system.p_dl", p.p_dl.to_string());
        w("system.p_ul", p.p_ul.to_string());
        w("system.xi", p.nleh.xi.to_string());
        w("system.chi", p.nleh.chi.to_string());
        w("system.phi", p.nleh.phi.to_string());
        w("system.se_min", p.se_min.to_string());
        w("system.he_min", p.he_min.to_string());
        w("policy.phase", self.phase.name().to_string());
        w("policy.resource", self.resource.name().to_string());
        w("policy.hps_c", self.hps_c.to_string());
        w(
            "policy.alpha",
            match self.alpha {
                AlphaModel::LargeAntenna => "large_antenna",
                AlphaModel::Moment => "moment",
            }
            .into(),
        );
        w("rapepa.m_i", self.rapepa_m_i.map_or("auto".into(), |v| v.to_string()));
        w("rapepa.delta", self.rapepa_delta.to_string());
        w("jappa.lambda_pen", self.sca.lambda_pen.to_string());
        w("jappa.max_iters", self.sca.max_iters.to_string());
        w("jappa.tol", self.sca.tol.to_string());
        w("drl.lambda_r", self.env.lambda_r.to_string());
        w("drl.lambda_se", self.env.lambda_se.to_string());
        w(
            "drl.penalty",
            match self.env.penalty {
                SePenalty::Flat => "flat",
                SePenalty::Proportional => "proportional",
            }
            .into(),
        );
        w("drl.episodes", tr.episodes.to_string());
        w("drl.steps", tr.steps.to_string());
        w("drl.actor_hidden", join(&tr.actor_hidden));
        w("drl.critic_hidden", join(&tr.critic_hidden));
        w("drl.lr_actor", tr.lr_actor.to_string());
        w("drl.lr_critic", tr.lr_critic.to_string());
        w("drl.batch", tr.batch.to_string());
        w("drl.gamma", tr.gamma.to_string());
        w("drl.buffer", tr.buffer.to_string());
        w("drl.tau", tr.tau.to_string());
        w("drl.noise_std", tr.noise_std.to_string());
        w("drl.noise_decay", tr.noise_decay.to_string());
        w("drl.clip", tr.clip.to_string());
        w(
            "drl.critic_output",
            match tr.critic_output {
                Activation::Relu => "relu",
                _ => "linear",
            }
            .into(),
        );
        s
    }

    /// First 16 hex digits of the SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.render().as_bytes());
        hex::encode(&d[..8])
    }

    pub fn geometry(&self) -> Result<SimGeometry> {
        SimGeometry::new(self.s, self.l, self.n, self.wavelength, self.t_sim * self.wavelength)
    }

    pub fn pilot_plan(&self) -> Result<PilotPlan> {
        PilotPlan::assign(self.topology.k_i, self.topology.k_e, self.prf_i, self.prf_e)
    }

    pub fn pathloss(&self) -> &PathLossParams {
        &self.topology.pathloss
    }

    pub fn nleh(&self) -> Nleh {
        self.system.nleh
    }

    /// Network realization `r`, drawn from its own topology substream.
    pub fn network(&self, r: u64) -> Result<Network> {
        let topo = generate_topology(&self.topology, &mut substream(self.seed, &[label::TOPOLOGY, r]))?;
        build_network(&topo, &self.geometry()?, self.pilot_plan()?, self.system.clone(), self.kappa)
    }

    pub fn rapepa_reference(&self) -> usize {
        self.rapepa_m_i.unwrap_or(self.topology.m.div_ceil(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(ExperimentConfig::parse("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let text = "geom.s = 36\n# comment\ntopology.m = 10  # trailing\npolicy.phase = hps\ndrl.actor_hidden = 64, 32\nrapepa.m_i = 3\nsystem.noise_dbm = -92\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.s, 36);
        assert_eq!(cfg.topology.m, 10);
        assert_eq!(cfg.phase, PhaseScheme::Hps);
        assert_eq!(cfg.train.actor_hidden, vec![64, 32]);
        let again = ExperimentConfig::parse(&cfg.render()).unwrap();
        assert_eq!(again.render(), cfg.render());
        assert_eq!(again.hash(), cfg.hash());
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn errors_are_reported() {
        assert!(matches!(ExperimentConfig::parse("geom.s"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("\nbogus = 1"), Err(ConfigError::UnknownKey { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("seed = 1\nseed = 2"), Err(ConfigError::Duplicate { .. })));
        assert!(matches!(ExperimentConfig::parse("geom.s = -3"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(ExperimentConfig::parse("geom.l = 0"), Err(ConfigError::InvalidValue { .. })));
        assert!(matches!(ExperimentConfig::parse("policy.phase = best"), Err(ConfigError::InvalidValue { .. })));
    }

    #[test]
    fn defaults_follow_the_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(c.system.tau_c, 200);
        assert!((c.system.noise - 10f64.powf(-12.2)).abs() < 1e-24);
        assert_eq!((c.system.p_dl, c.system.p_ul), (1.0, 0.2));
        assert_eq!(c.topology.side, 100.0);
        assert_eq!((c.topology.pathloss.ap_height, c.topology.pathloss.rx_height), (15.0, 1.65));
        assert_eq!(c.rapepa_reference(), 2);
    }

    #[test]
    fn networks_are_seeded() {
        let c = ExperimentConfig { n: 4, s: 4, l: 1, ..Default::default() };
        let a = c.network(3).unwrap();
        let b = c.network(3).unwrap();
        assert_eq!(a.beta_bar(), b.beta_bar());
        assert_ne!(a.beta_bar(), c.network(4).unwrap().beta_bar());
    }
}
