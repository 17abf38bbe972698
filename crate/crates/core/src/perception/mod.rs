//! Landmark detection backends: exact oracle, calibrated stochastic simulator,
//! and a remote vision-model client.

mod remote;
mod simulated;

use std::collections::BTreeMap;
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{EnvError, EnvGraph, LandmarkId, NodeId};
use crate::geom::RelPos;
use crate::http::{EndpointConfig, TransportError};

pub use remote::{parse_distance_m, parse_yes_no, RemotePerceiver, VisionClient};
pub use simulated::{perceive, SimulatedPerceiver};

pub const FINETUNED_PRECISION: f64 = 0.9868;
pub const FINETUNED_RECALL: f64 = 0.9695;
pub const ZEROSHOT_PRECISION: f64 = 0.0576;
pub const ZEROSHOT_RECALL: f64 = 0.9347;

/// Relative log-normal scatter of reported distances.
pub const DEFAULT_DISTANCE_SIGMA: f64 = 0.2;
pub const DEFAULT_BEARING_QUANTIZATION_DEG: f64 = 45.0;

/// Range for distances attached to spurious detections.
pub const SPURIOUS_DISTANCE_M: (f64, f64) = (200.0, 2000.0);

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("visible ratio {0} must lie strictly between 0 and 1")]
    BadRatio(f64),
    #[error("invalid perception profile: {0}")]
    BadProfile(String),
    #[error("unknown perceiver '{name}' (known: {known})")]
    UnknownPerceiver { name: String, known: String },
    #[error("remote perception is not configured: {0}")]
    NotConfigured(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// A landmark reported at a node. `true_positive` is simulator bookkeeping and
/// never reaches an agent; see [`Detection::sighting`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub landmark: LandmarkId,
    pub rel: RelPos,
    pub true_positive: bool,
}

impl Detection {
    pub fn sighting(&self) -> LandmarkSighting {
        LandmarkSighting {
            landmark: self.landmark,
            bearing_deg: self.rel.bearing_deg,
            distance_m: self.rel.distance_m,
        }
    }
}

/// What an agent is told about a landmark in view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSighting {
    pub landmark: LandmarkId,
    pub bearing_deg: f64,
    pub distance_m: f64,
}

impl LandmarkSighting {
    pub fn rel(&self) -> RelPos {
        RelPos::new(self.bearing_deg, self.distance_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerceptionProfile {
    pub recall: f64,
    pub false_positive_rate: f64,
    pub distance_noise_sigma: f64,
    /// Reported bearings are multiples of this; 0 keeps them exact.
    pub bearing_quantization_deg: f64,
}

impl PerceptionProfile {
    pub const ORACLE: PerceptionProfile = PerceptionProfile {
        recall: 1.0,
        false_positive_rate: 0.0,
        distance_noise_sigma: 0.0,
        bearing_quantization_deg: 0.0,
    };

    pub fn validate(&self) -> Result<(), PerceptionError> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.recall) || !prob(self.false_positive_rate) {
            return Err(PerceptionError::BadProfile(format!(
                "probabilities out of range: recall {}, fp {}",
                self.recall, self.false_positive_rate
            )));
        }
        if !(self.distance_noise_sigma >= 0.0 && self.distance_noise_sigma.is_finite()) {
            return Err(PerceptionError::BadProfile(format!(
                "sigma {}",
                self.distance_noise_sigma
            )));
        }
        if !(self.bearing_quantization_deg >= 0.0 && self.bearing_quantization_deg <= 360.0) {
            return Err(PerceptionError::BadProfile(format!(
                "bearing quantization {}",
                self.bearing_quantization_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Oracle,
    Finetuned,
    Zeroshot,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::Oracle => "oracle",
            ProfileKind::Finetuned => "finetuned",
            ProfileKind::Zeroshot => "zeroshot",
        })
    }
}

/// Builds a profile from a published recall/precision pair.
///
/// With prior `r` of visible (node, landmark) pairs, precision
/// `P = r·recall / (r·recall + (1-r)·fp)`, so
/// `fp = r·recall·(1/P - 1) / (1 - r)`. Values above 1 are capped.
pub fn profile_from_table(
    kind: ProfileKind,
    visible_ratio: f64,
) -> Result<PerceptionProfile, PerceptionError> {
    let (recall, precision) = match kind {
        ProfileKind::Oracle => return Ok(PerceptionProfile::ORACLE),
        ProfileKind::Finetuned => (FINETUNED_RECALL, FINETUNED_PRECISION),
        ProfileKind::Zeroshot => (ZEROSHOT_RECALL, ZEROSHOT_PRECISION),
    };
    if !(visible_ratio > 0.0 && visible_ratio < 1.0) {
        return Err(PerceptionError::BadRatio(visible_ratio));
    }
    let fp = visible_ratio * recall * (1.0 / precision - 1.0) / (1.0 - visible_ratio);
    if fp < 0.0 {
        return Err(PerceptionError::BadProfile(format!(
            "precision {precision} at prior {visible_ratio} needs fp {fp}"
        )));
    }
    let fp = if fp > 1.0 {
        log::warn!("{kind} profile needs false-positive rate {fp:.3} at prior {visible_ratio}; capped at 1.0");
        1.0
    } else {
        fp
    };
    Ok(PerceptionProfile {
        recall,
        false_positive_rate: fp,
        distance_noise_sigma: DEFAULT_DISTANCE_SIGMA,
        bearing_quantization_deg: DEFAULT_BEARING_QUANTIZATION_DEG,
    })
}

/// Fraction of (node, landmark) pairs in which the landmark is visible.
pub fn visible_pair_ratio(env: &EnvGraph) -> f64 {
    let total = env.node_count() * env.landmarks().len();
    if total == 0 {
        return 0.0;
    }
    let seen: usize = env
        .nodes()
        .iter()
        .map(|n| env.visible_landmarks(n.id).map(|v| v.len()).unwrap_or(0))
        .sum();
    seen as f64 / total as f64
}

pub trait Perceiver: Send + Sync {
    fn name(&self) -> &str;

    /// Landmarks reported at `node`. Simulated backends draw only from `rng`.
    fn perceive(
        &self,
        env: &EnvGraph,
        node: NodeId,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Detection>, PerceptionError>;
}

/// Settings shared by the built-in perceiver factories.
#[derive(Debug, Clone)]
pub struct PerceptionConfig {
    /// Prior of visible pairs used to solve the false-positive rate.
    pub visible_ratio: f64,
    pub distance_sigma: Option<f64>,
    pub bearing_quantization_deg: Option<f64>,
    /// Falls back to NAV_VLM_ENDPOINT / NAV_VLM_API_KEY when unset.
    pub remote: Option<EndpointConfig>,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            visible_ratio: 0.2,
            distance_sigma: None,
            bearing_quantization_deg: None,
            remote: None,
        }
    }
}

impl PerceptionConfig {
    /// Prior taken from the environment, clamped into the open unit interval.
    pub fn for_env(env: &EnvGraph) -> Self {
        let r = visible_pair_ratio(env).clamp(1e-3, 1.0 - 1e-3);
        PerceptionConfig {
            visible_ratio: r,
            ..Default::default()
        }
    }

    fn tuned(&self, kind: ProfileKind) -> Result<PerceptionProfile, PerceptionError> {
        let mut p = profile_from_table(kind, self.visible_ratio)?;
        if kind != ProfileKind::Oracle {
            if let Some(s) = self.distance_sigma {
                p.distance_noise_sigma = s;
            }
            if let Some(q) = self.bearing_quantization_deg {
                p.bearing_quantization_deg = q;
            }
        }
        p.validate()?;
        Ok(p)
    }
}

type Factory =
    Box<dyn Fn(&PerceptionConfig) -> Result<Box<dyn Perceiver>, PerceptionError> + Send + Sync>;

/// Perceivers selectable by name.
pub struct PerceiverRegistry {
    factories: BTreeMap<String, Factory>,
}

impl PerceiverRegistry {
    pub fn empty() -> Self {
        PerceiverRegistry {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut reg = PerceiverRegistry::empty();
        for kind in [ProfileKind::Oracle, ProfileKind::Finetuned, ProfileKind::Zeroshot] {
            reg.register(&kind.to_string(), move |cfg| {
                let profile = cfg.tuned(kind)?;
                Ok(Box::new(SimulatedPerceiver::new(kind.to_string(), profile)))
            });
        }
        reg.register("remote", |cfg| {
            let endpoint = match &cfg.remote {
                Some(e) => e.clone(),
                None => EndpointConfig::from_env("NAV_VLM_ENDPOINT", "NAV_VLM_API_KEY").ok_or_else(
                    || PerceptionError::NotConfigured("NAV_VLM_ENDPOINT is not set".into()),
                )?,
            };
            Ok(Box::new(RemotePerceiver::new(VisionClient::new(endpoint)?)))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&PerceptionConfig) -> Result<Box<dyn Perceiver>, PerceptionError>
            + Send
            + Sync
            + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(
        &self,
        name: &str,
        cfg: &PerceptionConfig,
    ) -> Result<Box<dyn Perceiver>, PerceptionError> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| PerceptionError::UnknownPerceiver {
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        f(cfg)
    }
}

impl Default for PerceiverRegistry {
    fn default() -> Self {
        PerceiverRegistry::with_builtins()
    }
}
