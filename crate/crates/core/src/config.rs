//! JSON run configuration.
//!
//! Every block has documented defaults, unknown keys are rejected, and the
//! fully resolved configuration can be written back out so a run is
//! reproducible from its output directory alone.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::channel::{physical_c_fspl, ChannelParams};
use crate::error::{Error, Result};
use crate::learner::{Arch, PartitionMode};
use crate::orchestrator::Scheme;
use crate::power::{AbarScope, PowerParams};

/// Environment variable overriding `run.seed`.
pub const SEED_ENV: &str = "OPTIVOTE_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub channel: ChannelConfig,
    pub power: PowerConfig,
    pub learner: LearnerConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

/// Choice of the free-space path-loss constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathLossConstant {
    /// Explicit value in m^2.
    Value(f64),
    Mode(PathLossMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathLossMode {
    /// `d_min^2`: path-loss gain is 1 at the nearest distance.
    Normalized,
    /// `(lambda_opt / 4 pi)^2`.
    Physical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub d_min_km: f64,
    pub d_max_km: f64,
    pub lambda_opt_nm: f64,
    pub a0: f64,
    pub xi_p: f64,
    pub sigma_n2: f64,
    pub c_fspl: PathLossConstant,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            d_min_km: 500.0,
            d_max_km: 2000.0,
            lambda_opt_nm: 1550.0,
            a0: 0.9,
            xi_p: 1.5,
            sigma_n2: 0.1,
            c_fspl: PathLossConstant::Mode(PathLossMode::Normalized),
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> Result<ChannelParams> {
        let d_min = self.d_min_km * 1e3;
        let lambda_opt = self.lambda_opt_nm * 1e-9;
        let c_fspl = match self.c_fspl {
            PathLossConstant::Value(v) => v,
            PathLossConstant::Mode(PathLossMode::Normalized) => d_min * d_min,
            PathLossConstant::Mode(PathLossMode::Physical) => physical_c_fspl(lambda_opt),
        };
        let params = ChannelParams {
            d_min,
            d_max: self.d_max_km * 1e3,
            lambda_opt,
            a0: self.a0,
            xi_p: self.xi_p,
            sigma_n2: self.sigma_n2,
            c_fspl,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerConfig {
    pub p_avg: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub rho: f64,
    pub abar_scope: AbarScope,
}

impl Default for PowerConfig {
    fn default() -> Self {
        let p = PowerParams::default();
        PowerConfig {
            p_avg: p.p_avg,
            p_min: p.p_min,
            p_max: p.p_max,
            rho: p.rho,
            abar_scope: AbarScope::All,
        }
    }
}

impl PowerConfig {
    pub fn params(&self) -> Result<PowerParams> {
        let p = PowerParams {
            p_avg: self.p_avg,
            p_min: self.p_min,
            p_max: self.p_max,
            rho: self.rho,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        #[serde(default = "defaults::num_classes")]
        num_classes: usize,
        #[serde(default = "defaults::n_train")]
        n_train: usize,
        #[serde(default = "defaults::n_test")]
        n_test: usize,
        #[serde(default = "defaults::dim")]
        dim: usize,
        #[serde(default = "defaults::separation")]
        separation: f64,
    },
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        max_train: Option<usize>,
        #[serde(default)]
        max_test: Option<usize>,
    },
}

mod defaults {
    pub fn num_classes() -> usize {
        10
    }
    pub fn n_train() -> usize {
        2000
    }
    pub fn n_test() -> usize {
        1000
    }
    pub fn dim() -> usize {
        20
    }
    pub fn separation() -> f64 {
        4.0
    }
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Synthetic {
            num_classes: defaults::num_classes(),
            n_train: defaults::n_train(),
            n_test: defaults::n_test(),
            dim: defaults::dim(),
            separation: defaults::separation(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerConfig {
    pub dataset: DatasetConfig,
    pub model: Arch,
    pub partition: PartitionMode,
    pub local_steps: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            dataset: DatasetConfig::default(),
            model: Arch::Logistic,
            partition: PartitionMode::Iid,
            local_steps: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearningRate {
    /// Use `run.eta` every round.
    #[default]
    Constant,
    /// `1 / sqrt(||L||_1 d_b)` from `run.l1_smoothness`.
    Theorem1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Node population.
    #[serde(rename = "M")]
    pub num_nodes: usize,
    /// Nodes selected per round.
    #[serde(rename = "m")]
    pub active_nodes: usize,
    pub rounds: usize,
    #[serde(rename = "d_b")]
    pub batch_size: usize,
    pub eta: f64,
    pub lr: LearningRate,
    pub l1_smoothness: Option<f64>,
    pub scheme: Scheme,
    pub seed: u64,
    /// PPM slots per frame; defaults to `2 q`.
    pub frame_capacity: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            num_nodes: 20,
            active_nodes: 4,
            rounds: 200,
            batch_size: 64,
            eta: 0.05,
            lr: LearningRate::Constant,
            l1_smoothness: None,
            scheme: Scheme::Optivote,
            seed: 0,
            frame_capacity: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub dump_power: bool,
    pub dump_slots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            dump_power: false,
            dump_slots: false,
        }
    }
}

impl Config {
    /// Deserializes and validates a JSON value.
    pub fn from_value(value: Value) -> Result<Config> {
        let cfg: Config = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Config> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::config(".", format!("invalid JSON: {e}")))?;
        Config::from_value(value)
    }

    /// Reads `path`, applies dotted-path overrides and an optional seed
    /// override (normally the `OPTIVOTE_SEED` environment variable).
    pub fn load(
        path: &Path,
        overrides: &[(String, String)],
        env_seed: Option<&str>,
    ) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::config(".", format!("invalid JSON in {}: {e}", path.display())))?;
        for (key, raw) in overrides {
            set_dotted(&mut value, key, raw)?;
        }
        if let Some(seed) = env_seed {
            let seed: u64 = seed.trim().parse().map_err(|_| {
                Error::config("run.seed", format!("{SEED_ENV}={seed} is not an integer"))
            })?;
            set_dotted(&mut value, "run.seed", &seed.to_string())?;
        }
        Config::from_value(value)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.params()?;
        self.power.params()?;
        let run = &self.run;
        if run.num_nodes == 0 {
            return Err(Error::config("run.M", "must be at least 1"));
        }
        if run.active_nodes == 0 || run.active_nodes > run.num_nodes {
            return Err(Error::config("run.m", "must lie in [1, M]"));
        }
        if run.batch_size == 0 {
            return Err(Error::config("run.d_b", "must be at least 1"));
        }
        if !(run.eta > 0.0 && run.eta.is_finite()) {
            return Err(Error::config("run.eta", "must be positive"));
        }
        if run.lr == LearningRate::Theorem1 && !run.l1_smoothness.is_some_and(|l| l > 0.0) {
            return Err(Error::config(
                "run.l1_smoothness",
                "a positive estimate is required when lr = \"theorem1\"",
            ));
        }
        if let Some(a) = run.frame_capacity {
            if a < 2 || a % 2 != 0 {
                return Err(Error::config(
                    "run.frame_capacity",
                    "must be even and at least 2",
                ));
            }
        }
        if self.learner.local_steps == 0 {
            return Err(Error::config("learner.local_steps", "must be at least 1"));
        }
        if let PartitionMode::Noniid { labels_per_node } = self.learner.partition {
            if labels_per_node == 0 {
                return Err(Error::config(
                    "learner.partition.labels_per_node",
                    "must be at least 1",
                ));
            }
        }
        if let Arch::Mlp { hidden } = &self.learner.model {
            if hidden.is_empty() || hidden.contains(&0) {
                return Err(Error::config(
                    "learner.model.hidden",
                    "must list positive layer widths",
                ));
            }
        }
        if let DatasetConfig::Synthetic {
            num_classes,
            n_train,
            n_test,
            dim,
            separation,
        } = &self.learner.dataset
        {
            if *num_classes == 0 || *n_train == 0 || *n_test == 0 || *dim == 0 {
                return Err(Error::config("learner.dataset", "sizes must be at least 1"));
            }
            if !(separation.is_finite() && *separation >= 0.0) {
                return Err(Error::config(
                    "learner.dataset.separation",
                    "must be finite and non-negative",
                ));
            }
        }
        Ok(())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact resolved configuration.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Learning rate actually applied each round.
    pub fn learning_rate(&self) -> Result<f64> {
        match self.run.lr {
            LearningRate::Constant => Ok(self.run.eta),
            LearningRate::Theorem1 => crate::theory::theorem1_learning_rate(
                self.run.l1_smoothness.unwrap_or(0.0),
                self.run.batch_size,
            ),
        }
    }
}

/// Sets `a.b.c = raw` inside a JSON object, creating intermediate objects.
/// `raw` is parsed as JSON when possible and kept as a string otherwise.
pub fn set_dotted(root: &mut Value, key: &str, raw: &str) -> Result<()> {
    let parsed =
        serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(key, "malformed override key"));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            return Err(Error::config(
                key,
                "override path crosses a non-object value",
            ));
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    match node.as_object_mut() {
        Some(obj) => {
            obj.insert(parts[parts.len() - 1].to_string(), parsed);
            Ok(())
        }
        None => Err(Error::config(
            key,
            "override path crosses a non-object value",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = Config::from_value(json!({"run": {"scheme": "ideal_mv", "seed": 3}})).unwrap();
        assert_eq!(cfg.run.scheme, Scheme::IdealMv);
        assert_eq!(cfg.run.seed, 3);
        assert_eq!(cfg.run.num_nodes, 20);
        assert_eq!(cfg.run.active_nodes, 4);
        assert_eq!(cfg.run.rounds, 200);
        assert_eq!(cfg.run.batch_size, 64);
        assert_eq!(cfg.run.eta, 0.05);
        assert_eq!(cfg.power, PowerConfig::default());
        assert_eq!(cfg.channel, ChannelConfig::default());
    }

    #[test]
    fn power_bounds_error_names_key() {
        let err = Config::from_value(json!({"power": {"p_min": 3.0, "p_max": 2.0}})).unwrap_err();
        assert!(err.to_string().contains("power.p_min"), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_path() {
        let err = Config::from_value(json!({"run": {"sead": 1}}))
            .unwrap_err()
            .to_string();
        assert!(err.contains("run"), "{err}");
        assert!(err.contains("sead"), "{err}");
        let err = Config::from_value(json!({"channel": {"a0": "high"}}))
            .unwrap_err()
            .to_string();
        assert!(err.contains("channel.a0"), "{err}");
    }

    #[test]
    fn resolved_round_trip() {
        let cfg = Config::from_value(json!({
            "run": {"scheme": "fedavg_air", "seed": 11, "frame_capacity": 8},
            "channel": {"c_fspl": 2.5e11},
            "learner": {"model": {"arch": "mlp", "hidden": [16]}, "partition": {"mode": "noniid"}}
        }))
        .unwrap();
        let again = Config::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_eq!(
            again.learner.partition,
            PartitionMode::Noniid { labels_per_node: 2 }
        );
    }

    #[test]
    fn dotted_overrides() {
        let mut v = json!({"run": {"seed": 1}});
        set_dotted(&mut v, "run.seed", "7").unwrap();
        set_dotted(&mut v, "run.scheme", "ideal_mv").unwrap();
        set_dotted(&mut v, "power.rho", "0").unwrap();
        let cfg = Config::from_value(v).unwrap();
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.run.scheme, Scheme::IdealMv);
        assert_eq!(cfg.power.rho, 0.0);
    }

    #[test]
    fn path_loss_modes() {
        let norm = ChannelConfig::default().params().unwrap();
        assert_eq!(norm.c_fspl, 500e3 * 500e3);
        let phys = ChannelConfig {
            c_fspl: PathLossConstant::Mode(PathLossMode::Physical),
            ..ChannelConfig::default()
        }
        .params()
        .unwrap();
        let want = physical_c_fspl(1550e-9);
        assert!(((phys.c_fspl - want) / want).abs() < 1e-12);
    }

    #[test]
    fn theorem1_needs_smoothness() {
        let err = Config::from_value(json!({"run": {"lr": "theorem1"}})).unwrap_err();
        assert!(err.to_string().contains("run.l1_smoothness"));
        let cfg =
            Config::from_value(json!({"run": {"lr": "theorem1", "l1_smoothness": 4.0, "d_b": 16}}))
                .unwrap();
        assert!((cfg.learning_rate().unwrap() - 1.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn invalid_run_values() {
        assert!(Config::from_value(json!({"run": {"M": 3, "m": 4}})).is_err());
        assert!(Config::from_value(json!({"run": {"frame_capacity": 5}})).is_err());
        assert!(Config::from_value(json!({"run": {"eta": 0.0}})).is_err());
    }
}
