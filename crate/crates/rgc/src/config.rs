//! Experiment configuration: a flat `key = value` file plus CLI overrides.
//!
//! Lines starting with `#` are comments. Unknown keys are rejected so typos
//! fail loudly. Every resolved run embeds its full configuration in the
//! output header for provenance.

use crate::cost::{BandwidthMode, CostParams};
use crate::trainer::{SelectorKind, TrainConfig, Warmup};
use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`, got {text:?}")]
    Malformed { line: usize, text: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: invalid value {value:?}: {message}")]
    BadValue {
        key: String,
        value: String,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    CostSweep,
    SelectionBench,
    CollectiveTest,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::CostSweep => "cost-sweep",
            Mode::SelectionBench => "selection-bench",
            Mode::CollectiveTest => "collective-test",
        }
    }

    pub fn parse(s: &str) -> Result<Mode, ConfigError> {
        match s {
            "train" => Ok(Mode::Train),
            "cost-sweep" => Ok(Mode::CostSweep),
            "selection-bench" => Ok(Mode::SelectionBench),
            "collective-test" => Ok(Mode::CollectiveTest),
            other => Err(ConfigError::BadValue {
                key: "mode".into(),
                value: other.into(),
                message: "expected train | cost-sweep | selection-bench | collective-test".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Threads,
    Sockets(Vec<SocketAddr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Blobs {
        samples: usize,
        dim: usize,
        classes: usize,
        separation: f32,
    },
    Csv(PathBuf),
}

/// Cost-sweep settings beyond the shared `CostParams` fields.
#[derive(Debug, Clone)]
pub struct CostSweepConfig {
    pub params: CostParams,
    pub p_min: u64,
    pub p_max: u64,
    pub mode: BandwidthMode,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub ratio: f64,
    pub reps: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub world_size: usize,
    pub topology: Topology,
    pub train: TrainConfig,
    pub dataset: DatasetSpec,
    /// Hidden layer widths of the MLP.
    pub hidden: Vec<usize>,
    pub cost: CostSweepConfig,
    pub bench: BenchConfig,
    /// Vector length for collective-test mode.
    pub ct_elements: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Train,
            seed: 0,
            out: None,
            world_size: 4,
            topology: Topology::Threads,
            train: TrainConfig::default(),
            dataset: DatasetSpec::Blobs {
                samples: 4096,
                dim: 64,
                classes: 2,
                separation: 5.0,
            },
            hidden: vec![32],
            cost: CostSweepConfig {
                params: CostParams {
                    alpha: 5e-6,
                    beta: 4e-10,
                    gamma1: 1e-4,
                    gamma2: 5e-5,
                    t_select: 2e-4,
                    p: 2,
                    m: 1_000_000,
                    d: 0.001,
                },
                p_min: 2,
                p_max: 1024,
                mode: BandwidthMode::Elements,
            },
            bench: BenchConfig {
                sizes: vec![1 << 16, 1 << 20, 1 << 22],
                ratio: 0.001,
                reps: 5,
            },
            ct_elements: 4096,
        }
    }
}

fn bad(key: &str, value: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| bad(key, value, e.to_string()))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(bad(key, value, "expected true or false")),
    }
}

impl ExperimentConfig {
    /// Parses a config file's text over the defaults.
    pub fn from_text(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "mode" => self.mode = Mode::parse(value)?,
            "seed" => {
                self.seed = parse_num(key, value)?;
                self.train.seed = self.seed;
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "world_size" => self.world_size = parse_num(key, value)?,
            "topology" => match value {
                "threads" => self.topology = Topology::Threads,
                "sockets" => {
                    if !matches!(self.topology, Topology::Sockets(_)) {
                        self.topology = Topology::Sockets(Vec::new());
                    }
                }
                _ => return Err(bad(key, value, "expected threads | sockets")),
            },
            "hosts" => {
                let mut addrs = Vec::new();
                for part in value.split(',') {
                    let addr = part
                        .trim()
                        .parse::<SocketAddr>()
                        .map_err(|e| bad(key, part, e.to_string()))?;
                    addrs.push(addr);
                }
                self.topology = Topology::Sockets(addrs);
            }
            "selector" => {
                self.train.selector = match value {
                    "exact" => SelectorKind::Exact,
                    "trimmed" => SelectorKind::Trimmed,
                    "threshold-bs" => SelectorKind::ThresholdBs,
                    "sampled-bs" => SelectorKind::SampledBs,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected exact | trimmed | threshold-bs | sampled-bs",
                        ))
                    }
                }
            }
            "ratio" => self.train.ratio = parse_num(key, value)?,
            "quantize" => self.train.quantize = parse_bool(key, value)?,
            "lr" => self.train.lr = parse_num(key, value)?,
            "momentum" => self.train.momentum = parse_num(key, value)?,
            "batch_size" => self.train.batch_size = parse_num(key, value)?,
            "steps" => self.train.steps = parse_num(key, value)?,
            "steps_per_epoch" => {
                self.train.steps_per_epoch = if value == "auto" {
                    None
                } else {
                    let v: usize = parse_num(key, value)?;
                    (v > 0).then_some(v)
                };
            }
            "clip_norm" => {
                self.train.clip_norm = if value == "off" {
                    None
                } else {
                    let v: f32 = parse_num(key, value)?;
                    (v > 0.0).then_some(v)
                };
            }
            "warmup" => {
                self.train.warmup = if value == "none" {
                    Warmup::None
                } else if let Some(n) = value.strip_prefix("dense:") {
                    Warmup::DenseEpochs(parse_num(key, n)?)
                } else if let Some(list) = value.strip_prefix("ratio:") {
                    let mut ratios = Vec::new();
                    for part in list.split(',') {
                        ratios.push(parse_num(key, part.trim())?);
                    }
                    Warmup::RatioSchedule(ratios)
                } else {
                    return Err(bad(key, value, "expected none | dense:N | ratio:a,b,c"));
                }
            }
            "dense_floor" => self.train.dense_floor = parse_num(key, value)?,
            "epsilon_trim" => self.train.epsilon_trim = parse_num(key, value)?,
            "epsilon_bs" => self.train.epsilon_bs = parse_num(key, value)?,
            "sample_interval" => self.train.sample_interval = parse_num(key, value)?,
            "comm_timeout_secs" => {
                self.train.comm_timeout = Duration::from_secs(parse_num(key, value)?)
            }
            "dataset" => {
                if value == "blobs" {
                    if !matches!(self.dataset, DatasetSpec::Blobs { .. }) {
                        self.dataset = ExperimentConfig::default().dataset;
                    }
                } else if let Some(path) = value.strip_prefix("csv:") {
                    self.dataset = DatasetSpec::Csv(PathBuf::from(path));
                } else {
                    return Err(bad(key, value, "expected blobs | csv:<path>"));
                }
            }
            "blob_samples" | "blob_dim" | "blob_classes" | "blob_separation" => {
                let DatasetSpec::Blobs {
                    samples,
                    dim,
                    classes,
                    separation,
                } = &mut self.dataset
                else {
                    return Err(ConfigError::Invalid(format!(
                        "{key} requires dataset = blobs"
                    )));
                };
                match key {
                    "blob_samples" => *samples = parse_num(key, value)?,
                    "blob_dim" => *dim = parse_num(key, value)?,
                    "blob_classes" => *classes = parse_num(key, value)?,
                    _ => *separation = parse_num(key, value)?,
                }
            }
            "hidden" => {
                let mut dims = Vec::new();
                for part in value.split(',') {
                    dims.push(parse_num(key, part.trim())?);
                }
                self.hidden = dims;
            }
            "alpha" => self.cost.params.alpha = parse_num(key, value)?,
            "beta" => self.cost.params.beta = parse_num(key, value)?,
            "gamma1" => self.cost.params.gamma1 = parse_num(key, value)?,
            "gamma2" => self.cost.params.gamma2 = parse_num(key, value)?,
            "t_select" => self.cost.params.t_select = parse_num(key, value)?,
            "m_elements" => self.cost.params.m = parse_num(key, value)?,
            "d" => self.cost.params.d = parse_num(key, value)?,
            "p_min" => self.cost.p_min = parse_num(key, value)?,
            "p_max" => self.cost.p_max = parse_num(key, value)?,
            "cost_mode" => {
                self.cost.mode = match value {
                    "elements" => BandwidthMode::Elements,
                    "bytes" => BandwidthMode::Bytes,
                    "bytes-quantized" => BandwidthMode::BytesQuantized,
                    _ => {
                        return Err(bad(
                            key,
                            value,
                            "expected elements | bytes | bytes-quantized",
                        ))
                    }
                }
            }
            "bench_sizes" => {
                let mut sizes = Vec::new();
                for part in value.split(',') {
                    sizes.push(parse_num(key, part.trim())?);
                }
                self.bench.sizes = sizes;
            }
            "bench_ratio" => self.bench.ratio = parse_num(key, value)?,
            "bench_reps" => self.bench.reps = parse_num(key, value)?,
            "ct_elements" => self.ct_elements = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Validates cross-field constraints for the selected mode.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.world_size.is_power_of_two() || self.world_size == 0 {
            return Err(ConfigError::Invalid(format!(
                "world_size must be a power of two, got {}",
                self.world_size
            )));
        }
        if let Topology::Sockets(addrs) = &self.topology {
            if addrs.is_empty() {
                return Err(ConfigError::Invalid(
                    "sockets topology requires a hosts list".into(),
                ));
            }
            if addrs.len() != self.world_size {
                return Err(ConfigError::Invalid(format!(
                    "hosts lists {} addresses but world_size is {}",
                    addrs.len(),
                    self.world_size
                )));
            }
        }
        if matches!(self.mode, Mode::Train) {
            self.train
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            if self.hidden.is_empty() {
                return Err(ConfigError::Invalid(
                    "hidden must list at least one width".into(),
                ));
            }
        }
        if self.cost.p_min < 2
            || !self.cost.p_min.is_power_of_two()
            || !self.cost.p_max.is_power_of_two()
        {
            return Err(ConfigError::Invalid(
                "p_min/p_max must be powers of two with p_min >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Every field as sorted `key = value` pairs for provenance headers.
    pub fn resolved_pairs(&self) -> Vec<(String, String)> {
        let mut map = BTreeMap::new();
        map.insert("mode".to_string(), self.mode.as_str().to_string());
        map.insert("seed".to_string(), self.seed.to_string());
        // `out` is deliberately omitted: it names the file itself and would
        // break byte-identity between runs of the same experiment.
        map.insert("world_size".to_string(), self.world_size.to_string());
        match &self.topology {
            Topology::Threads => {
                map.insert("topology".to_string(), "threads".to_string());
            }
            Topology::Sockets(addrs) => {
                map.insert("topology".to_string(), "sockets".to_string());
                map.insert(
                    "hosts".to_string(),
                    addrs
                        .iter()
                        .map(|a| a.to_string())
                        .collect::<Vec<_>>()
                        .join(","),
                );
            }
        }
        let t = &self.train;
        map.insert(
            "selector".to_string(),
            match t.selector {
                SelectorKind::Exact => "exact",
                SelectorKind::Trimmed => "trimmed",
                SelectorKind::ThresholdBs => "threshold-bs",
                SelectorKind::SampledBs => "sampled-bs",
            }
            .to_string(),
        );
        map.insert("ratio".to_string(), t.ratio.to_string());
        map.insert("quantize".to_string(), t.quantize.to_string());
        map.insert("lr".to_string(), t.lr.to_string());
        map.insert("momentum".to_string(), t.momentum.to_string());
        map.insert("batch_size".to_string(), t.batch_size.to_string());
        map.insert("steps".to_string(), t.steps.to_string());
        map.insert(
            "steps_per_epoch".to_string(),
            t.steps_per_epoch
                .map_or("auto".to_string(), |v| v.to_string()),
        );
        map.insert(
            "clip_norm".to_string(),
            t.clip_norm.map_or("off".to_string(), |v| v.to_string()),
        );
        map.insert(
            "warmup".to_string(),
            match &t.warmup {
                Warmup::None => "none".to_string(),
                Warmup::DenseEpochs(n) => format!("dense:{n}"),
                Warmup::RatioSchedule(rs) => format!(
                    "ratio:{}",
                    rs.iter()
                        .map(|r| r.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                ),
            },
        );
        map.insert("dense_floor".to_string(), t.dense_floor.to_string());
        map.insert("epsilon_trim".to_string(), t.epsilon_trim.to_string());
        map.insert("epsilon_bs".to_string(), t.epsilon_bs.to_string());
        map.insert("sample_interval".to_string(), t.sample_interval.to_string());
        match &self.dataset {
            DatasetSpec::Blobs {
                samples,
                dim,
                classes,
                separation,
            } => {
                map.insert("dataset".to_string(), "blobs".to_string());
                map.insert("blob_samples".to_string(), samples.to_string());
                map.insert("blob_dim".to_string(), dim.to_string());
                map.insert("blob_classes".to_string(), classes.to_string());
                map.insert("blob_separation".to_string(), separation.to_string());
            }
            DatasetSpec::Csv(path) => {
                map.insert("dataset".to_string(), format!("csv:{}", path.display()));
            }
        }
        map.insert(
            "hidden".to_string(),
            self.hidden
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        if self.mode == Mode::CostSweep {
            let c = &self.cost;
            map.insert("alpha".to_string(), c.params.alpha.to_string());
            map.insert("beta".to_string(), c.params.beta.to_string());
            map.insert("gamma1".to_string(), c.params.gamma1.to_string());
            map.insert("gamma2".to_string(), c.params.gamma2.to_string());
            map.insert("t_select".to_string(), c.params.t_select.to_string());
            map.insert("m_elements".to_string(), c.params.m.to_string());
            map.insert("d".to_string(), c.params.d.to_string());
            map.insert("p_min".to_string(), c.p_min.to_string());
            map.insert("p_max".to_string(), c.p_max.to_string());
            map.insert(
                "cost_mode".to_string(),
                match c.mode {
                    BandwidthMode::Elements => "elements",
                    BandwidthMode::Bytes => "bytes",
                    BandwidthMode::BytesQuantized => "bytes-quantized",
                }
                .to_string(),
            );
        }
        if self.mode == Mode::SelectionBench {
            map.insert(
                "bench_sizes".to_string(),
                self.bench
                    .sizes
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            map.insert("bench_ratio".to_string(), self.bench.ratio.to_string());
            map.insert("bench_reps".to_string(), self.bench.reps.to_string());
        }
        if self.mode == Mode::CollectiveTest {
            map.insert("ct_elements".to_string(), self.ct_elements.to_string());
        }
        map.into_iter().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_train_config() {
        let text = "\
# experiment
mode = train
seed = 7
world_size = 4
selector = threshold-bs
ratio = 0.01
quantize = false
lr = 0.2
momentum = 0.9
batch_size = 8
steps = 50
warmup = ratio:0.25,0.0625,0.015625,0.004,0.001
dataset = blobs
blob_samples = 1024
hidden = 32,16
";
        let cfg = ExperimentConfig::from_text(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mode, Mode::Train);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.selector, SelectorKind::ThresholdBs);
        assert_eq!(cfg.train.ratio, 0.01);
        assert_eq!(cfg.hidden, vec![32, 16]);
        match &cfg.train.warmup {
            Warmup::RatioSchedule(rs) => assert_eq!(rs.len(), 5),
            other => panic!("unexpected warmup {other:?}"),
        }
        match cfg.dataset {
            DatasetSpec::Blobs { samples, .. } => assert_eq!(samples, 1024),
            _ => panic!("expected blobs"),
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(matches!(
            ExperimentConfig::from_text("nonsense = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_text("ratio = banana"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            ExperimentConfig::from_text("just a line"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn validate_rejects_sampled_bs_with_quantize() {
        let cfg =
            ExperimentConfig::from_text("mode = train\nselector = sampled-bs\nquantize = true\n")
                .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validate_rejects_non_power_of_two_world() {
        let cfg = ExperimentConfig::from_text("world_size = 3").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn validate_requires_hosts_matching_world_size() {
        let cfg = ExperimentConfig::from_text(
            "world_size = 4\ntopology = sockets\nhosts = 127.0.0.1:9000,127.0.0.1:9001\n",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn resolved_pairs_round_trip_through_parser() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("selector", "exact").unwrap();
        cfg.set("warmup", "dense:3").unwrap();
        let text: String = cfg
            .resolved_pairs()
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let reparsed = ExperimentConfig::from_text(&text).unwrap();
        assert_eq!(reparsed.train.selector, SelectorKind::Exact);
        assert_eq!(reparsed.train.warmup, Warmup::DenseEpochs(3));
        assert_eq!(reparsed.resolved_pairs(), cfg.resolved_pairs());
    }
}
