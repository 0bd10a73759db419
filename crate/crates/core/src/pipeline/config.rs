//! Flat key-value training configuration.
//!
//! ```text
//! # comment
//! lambda = 1e-5
//! granularity = coordinate
//! trunk_widths = 64,128
//! ```
//!
//! Every key can also be given as a `--key=value` override. Unknown keys are
//! rejected.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::nnet::{AdamConfig, FeatureConfig, FeatureKind, ModelConfig};
use crate::pseudolabel::ClusterParams;
use crate::scenegen::sha256_hex;
use crate::uncertainty::{
    anchor_scales, Granularity, LossConfig, RegressionLoss, UncertaintyMode, WORLD_SCALES,
};

/// Where round-0 pseudo boxes come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    /// Ground removal + DBSCAN + box fitting.
    Cluster,
    /// The pseudo boxes stored in the dataset (e.g. a corrupted corpus).
    Dataset,
}

/// Units in which regression residuals and learned uncertainty meet in the
/// loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSpace {
    /// Meters and radians.
    World,
    /// Divided by the size-prior anchor (see [`anchor_scales`]).
    Anchor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    // Loss.
    pub lambda: f64,
    pub mu: f64,
    pub granularity: Granularity,
    pub mode: UncertaintyMode,
    pub stop_grad_uncertainty: bool,
    pub regression: RegressionLoss,
    pub residual_space: ResidualSpace,

    // Model.
    pub gamma: f64,
    pub trunk_widths: Vec<usize>,
    pub head_hidden: usize,
    /// Shared trunk layers; `None` shares all of them.
    pub split_depth: Option<usize>,
    pub features: FeatureKind,
    pub feature_radii: Vec<f64>,

    // Optimization.
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: f64,
    /// Fractions of `epochs` at which the learning rate is multiplied by
    /// `lr_decay`.
    pub lr_milestones: Vec<f64>,
    pub clip_norm: f64,
    /// Scenes per optimizer step.
    pub batch_size: usize,
    pub points_per_scene: usize,
    pub augment: bool,

    // Self-training and inference.
    pub rounds: usize,
    pub seed_source: SeedSource,
    pub warm_start: bool,
    pub score_threshold: f64,
    pub nms_iou: f64,
    pub eval_iou: f64,
    pub eval_score_threshold: f64,

    // Clustering seeds.
    pub ground_threshold: f64,
    pub cluster_eps: f64,
    pub cluster_min_pts: usize,
    pub cluster_min_size: usize,

    /// Parameter initialization seed.
    pub seed: u64,
    /// Shuffling, augmentation and subsampling seed.
    pub data_seed: u64,

    pub dataset: String,
    pub output: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 1e-5,
            mu: 1.0,
            granularity: Granularity::Coordinate,
            mode: UncertaintyMode::Learned,
            stop_grad_uncertainty: false,
            regression: RegressionLoss::L1,
            residual_space: ResidualSpace::World,
            gamma: 0.5,
            trunk_widths: vec![64, 128],
            head_hidden: 128,
            split_depth: None,
            features: FeatureKind::Neighborhood,
            feature_radii: vec![1.5, 4.0],
            epochs: 40,
            lr: 0.01,
            weight_decay: 0.01,
            lr_decay: 0.1,
            lr_milestones: vec![35.0 / 80.0, 45.0 / 80.0],
            clip_norm: 10.0,
            batch_size: 4,
            points_per_scene: 512,
            augment: true,
            rounds: 10,
            seed_source: SeedSource::Cluster,
            warm_start: false,
            score_threshold: 0.7,
            nms_iou: 0.1,
            eval_iou: 0.25,
            eval_score_threshold: 0.1,
            ground_threshold: 0.2,
            cluster_eps: 1.0,
            cluster_min_pts: 3,
            cluster_min_size: 4,
            seed: 0,
            data_seed: 0,
            dataset: "data".into(),
            output: "runs/default".into(),
        }
    }
}

fn parse_scalar(key: &str, raw: &str, like: &Value) -> Result<Value> {
    let bad = |what: &str| Error::InvalidConfig(format!("{key}: cannot parse {raw:?} as {what}"));
    Ok(match like {
        Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("a boolean"))?),
        Value::Number(n) if n.is_u64() => {
            Value::from(raw.parse::<u64>().map_err(|_| bad("an integer"))?)
        }
        Value::Number(_) => {
            let v: f64 = raw.parse().map_err(|_| bad("a number"))?;
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .ok_or_else(|| bad("a finite number"))?
        }
        Value::String(_) => Value::String(raw.to_string()),
        Value::Null => {
            if raw.is_empty() || raw == "none" {
                Value::Null
            } else if let Ok(v) = raw.parse::<u64>() {
                Value::from(v)
            } else {
                return Err(bad("an integer or `none`"));
            }
        }
        Value::Array(_) | Value::Object(_) => return Err(bad("a scalar")),
    })
}

fn parse_value(key: &str, raw: &str, like: &Value) -> Result<Value> {
    let raw = raw.trim();
    match like {
        Value::Array(items) => {
            // Element type from the default; integers when the default is.
            let elem = items.first().cloned().unwrap_or(Value::from(0.0));
            raw.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_scalar(key, s, &elem))
                .collect::<Result<Vec<_>>>()
                .map(Value::Array)
        }
        other => parse_scalar(key, raw, other),
    }
}

fn value_text(v: &Value) -> String {
    match v {
        Value::Null => "none".into(),
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(value_text).collect::<Vec<_>>().join(","),
        other => other.to_string(),
    }
}

/// Splits `--key=value` or `key=value`.
pub fn split_override(arg: &str) -> Result<(String, String)> {
    let body = arg.strip_prefix("--").unwrap_or(arg);
    let (k, v) = body
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {arg:?} is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl TrainConfig {
    /// Applies `key = value` pairs on top of `self`.
    pub fn with_overrides<K: AsRef<str>, V: AsRef<str>>(&self, pairs: &[(K, V)]) -> Result<Self> {
        let Value::Object(mut map) = serde_json::to_value(self)? else {
            unreachable!("config serializes to an object")
        };
        for (k, v) in pairs {
            let k = k.as_ref();
            let like = map
                .get(k)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown key {k:?}")))?;
            let parsed = parse_value(k, v.as_ref(), like)?;
            map.insert(k.to_string(), parsed);
        }
        let cfg: TrainConfig = serde_json::from_value(Value::Object(map))
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a config file body on top of the defaults.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", n + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        TrainConfig::default().with_overrides(&pairs)
    }

    pub fn to_kv_text(&self) -> String {
        let Value::Object(map) = serde_json::to_value(self).expect("config serializes") else {
            unreachable!("config serializes to an object")
        };
        let mut out = String::new();
        for (k, v) in map {
            out.push_str(&format!("{k} = {}\n", value_text(&v)));
        }
        out
    }

    /// Identity of everything that affects a round's results; `rounds` and
    /// the output location are excluded so a run can be extended or moved.
    pub fn resume_hash(&self) -> String {
        let mut map: Map<String, Value> =
            match serde_json::to_value(self).expect("config serializes") {
                Value::Object(m) => m,
                _ => unreachable!("config serializes to an object"),
            };
        map.remove("rounds");
        map.remove("output");
        sha256_hex(Value::Object(map).to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
            ("lr_decay", self.lr_decay),
            ("clip_norm", self.clip_norm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        if self.batch_size == 0 || self.points_per_scene == 0 {
            return Err(Error::InvalidConfig(
                "batch_size and points_per_scene must be >= 1".into(),
            ));
        }
        if self.lr_milestones.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::InvalidConfig(
                "lr milestones are fractions in [0, 1]".into(),
            ));
        }
        for (name, v) in [
            ("score_threshold", self.score_threshold),
            ("nms_iou", self.nms_iou),
            ("eval_iou", self.eval_iou),
            ("eval_score_threshold", self.eval_score_threshold),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite")));
            }
        }
        self.model_config().validate()?;
        self.loss_config().validate()?;
        self.cluster_params().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            trunk_widths: self.trunk_widths.clone(),
            head_hidden: self.head_hidden,
            gamma: self.gamma,
            split_depth: self.split_depth.unwrap_or(self.trunk_widths.len()),
            size_prior: ModelConfig::default().size_prior,
            features: FeatureConfig {
                kind: self.features,
                radii: self.feature_radii.clone(),
                ground_threshold: self.ground_threshold,
                ..FeatureConfig::default()
            },
        }
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            lambda: self.lambda,
            mu: self.mu,
            granularity: self.granularity,
            mode: self.mode,
            stop_grad_uncertainty: self.stop_grad_uncertainty,
            regression: self.regression,
            residual_scales: match self.residual_space {
                ResidualSpace::World => WORLD_SCALES,
                ResidualSpace::Anchor => anchor_scales(self.model_config().size_prior),
            },
            ..LossConfig::default()
        }
    }

    pub fn adam_config(&self) -> AdamConfig {
        AdamConfig {
            clip_norm: self.clip_norm,
            ..AdamConfig::default()
        }
    }

    pub fn cluster_params(&self) -> ClusterParams {
        ClusterParams {
            ground_threshold: self.ground_threshold,
            eps: self.cluster_eps,
            min_pts: self.cluster_min_pts,
            min_cluster_size: self.cluster_min_size,
        }
    }

    /// Learning rate for a zero-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self
            .lr_milestones
            .iter()
            .filter(|&&m| epoch >= (m * self.epochs as f64).round() as usize)
            .count();
        self.lr * self.lr_decay.powi(passed as i32)
    }
}
