use std::collections::HashSet;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::adversary::{AttackConfig, AttackKind};
use crate::error::{Error, Result};
use crate::graph::SplitSpec;
use crate::graphlet::{CycleHouseSpec, SbmSpec};
use crate::nn::{ModelConfig, ModelKind, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Sbm(SbmSpec),
    CycleHouse(CycleHouseSpec),
    Files {
        edges: PathBuf,
        features: Option<PathBuf>,
        labels: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Defense {
    None,
    Guard,
    GuardNoPrune,
    GuardNoMemory,
    Jaccard,
}

impl Defense {
    pub const ALL: [Defense; 5] = [
        Defense::None,
        Defense::Guard,
        Defense::GuardNoPrune,
        Defense::GuardNoMemory,
        Defense::Jaccard,
    ];

    pub fn is_guard(self) -> bool {
        matches!(
            self,
            Defense::Guard | Defense::GuardNoPrune | Defense::GuardNoMemory
        )
    }
}

impl fmt::Display for Defense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Defense::None => "none",
            Defense::Guard => "guard",
            Defense::GuardNoPrune => "guard-no-prune",
            Defense::GuardNoMemory => "guard-no-memory",
            Defense::Jaccard => "jaccard",
        })
    }
}

impl FromStr for Defense {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Defense::ALL
            .into_iter()
            .find(|d| d.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown defense {s:?}")))
    }
}

/// Source of the guard's edge similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Feature,
    /// Graphlet degree vectors, which also replace the node features.
    Graphlet,
}

/// Flat experiment description; see [`RunConfig::parse`] for the file format.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Mixed with each run seed to generate synthetic graphs.
    pub dataset_seed: u64,
    pub similarity: Similarity,
    pub model: ModelKind,
    pub defenses: Vec<Defense>,
    pub attack: Option<AttackKind>,
    pub rate: f64,
    pub seeds: Vec<u64>,
    pub p0: f64,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub dropout: f64,
    pub targets: usize,
    pub split: [f64; 3],
    pub pool_size: usize,
    pub influence_neighbors: usize,
    pub confidence: f64,
    pub global_deletions: bool,
    pub jaccard_threshold: f64,
    pub sweep_rates: Vec<f64>,
    pub bench_sizes: Vec<usize>,
    pub bench_dim: usize,
    pub bench_reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Sbm(SbmSpec::default()),
            dataset_seed: 0,
            similarity: Similarity::Feature,
            model: ModelKind::Gcn,
            defenses: vec![Defense::None, Defense::Guard],
            attack: None,
            rate: 0.2,
            seeds: vec![0, 1, 2, 3, 4],
            p0: 0.5,
            layers: 2,
            hidden: 16,
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 10,
            dropout: 0.5,
            targets: 40,
            split: [0.1, 0.1, 0.8],
            pool_size: 500,
            influence_neighbors: 5,
            confidence: 1.0,
            global_deletions: false,
            jaccard_threshold: 0.01,
            sweep_rates: vec![0.05, 0.10, 0.15, 0.20, 0.25],
            bench_sizes: vec![1000, 2000, 4000, 8000],
            bench_dim: 16,
            bench_reps: 15,
        }
    }
}

fn list<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(T::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    /// Unknown and repeated keys are errors. The result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut dataset_kind = String::from("sbm");
        let mut sbm = SbmSpec::default();
        let mut house = CycleHouseSpec::reference(0);
        let (mut edges, mut features, mut labels) = (None, None, None);
        let mut seen = HashSet::new();

        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
            let c = &mut config;
            match key {
                "dataset" => dataset_kind = value.to_string(),
                "dataset.seed" => c.dataset_seed = parse_one(key, value)?,
                "sbm.nodes" => sbm.n_nodes = parse_one(key, value)?,
                "sbm.clusters" => sbm.n_clusters = parse_one(key, value)?,
                "sbm.p_in" => sbm.p_in = parse_one(key, value)?,
                "sbm.p_out" => sbm.p_out = parse_one(key, value)?,
                "sbm.dim" => sbm.feature_dim = parse_one(key, value)?,
                "sbm.signal" => sbm.signal = parse_one(key, value)?,
                "house.cycle" => house.cycle_len = parse_one(key, value)?,
                "house.count" => house.houses = parse_one(key, value)?,
                "files.edges" => edges = Some(PathBuf::from(value)),
                "files.features" => features = Some(PathBuf::from(value)),
                "files.labels" => labels = Some(PathBuf::from(value)),
                "similarity" => {
                    c.similarity = match value {
                        "feature" => Similarity::Feature,
                        "graphlet" => Similarity::Graphlet,
                        other => {
                            return Err(Error::Config(format!("unknown similarity {other:?}")))
                        }
                    }
                }
                "model" => c.model = value.parse()?,
                "defense" => {
                    c.defenses = value
                        .split(',')
                        .map(|s| s.trim().parse())
                        .collect::<Result<_>>()?;
                }
                "attack" => {
                    c.attack = if value == "none" {
                        None
                    } else {
                        Some(value.parse()?)
                    }
                }
                "rate" => c.rate = parse_one(key, value)?,
                "seeds" => c.seeds = parse_list(key, value)?,
                "p0" => c.p0 = parse_one(key, value)?,
                "layers" => c.layers = parse_one(key, value)?,
                "hidden" => c.hidden = parse_one(key, value)?,
                "lr" => c.lr = parse_one(key, value)?,
                "weight_decay" => c.weight_decay = parse_one(key, value)?,
                "epochs" => c.epochs = parse_one(key, value)?,
                "patience" => c.patience = parse_one(key, value)?,
                "dropout" => c.dropout = parse_one(key, value)?,
                "targets" => c.targets = parse_one(key, value)?,
                "split.train" => c.split[0] = parse_one(key, value)?,
                "split.val" => c.split[1] = parse_one(key, value)?,
                "split.test" => c.split[2] = parse_one(key, value)?,
                "attack.pool" => c.pool_size = parse_one(key, value)?,
                "attack.influence_neighbors" => c.influence_neighbors = parse_one(key, value)?,
                "attack.confidence" => c.confidence = parse_one(key, value)?,
                "attack.global_deletions" => c.global_deletions = parse_one(key, value)?,
                "jaccard.threshold" => c.jaccard_threshold = parse_one(key, value)?,
                "sweep.rates" => c.sweep_rates = parse_list(key, value)?,
                "bench.sizes" => c.bench_sizes = parse_list(key, value)?,
                "bench.dim" => c.bench_dim = parse_one(key, value)?,
                "bench.reps" => c.bench_reps = parse_one(key, value)?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key {other:?}",
                        i + 1
                    )))
                }
            }
        }

        let sbm_keys = seen.iter().any(|k| k.starts_with("sbm."));
        let house_keys = seen.iter().any(|k| k.starts_with("house."));
        let file_keys = seen.iter().any(|k| k.starts_with("files."));
        config.dataset = match dataset_kind.as_str() {
            "sbm" if !house_keys && !file_keys => DatasetSpec::Sbm(sbm),
            "cycle-house" if !sbm_keys && !file_keys => DatasetSpec::CycleHouse(house),
            "files" if !sbm_keys && !house_keys => DatasetSpec::Files {
                edges: edges.ok_or_else(|| Error::Config("files.edges is required".into()))?,
                features,
                labels: labels.ok_or_else(|| Error::Config("files.labels is required".into()))?,
            },
            "sbm" | "cycle-house" | "files" => {
                return Err(Error::Config(format!(
                    "keys for another dataset given with dataset = {dataset_kind}"
                )))
            }
            other => return Err(Error::Config(format!("unknown dataset {other:?}"))),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match &self.dataset {
            DatasetSpec::Sbm(s) => s.validate().map_err(|e| Error::Config(e.to_string()))?,
            DatasetSpec::CycleHouse(h) => {
                if h.cycle_len < 3 || h.houses == 0 || h.houses > h.cycle_len {
                    return bad(format!("infeasible cycle-house size {h:?}"));
                }
                if self.similarity != Similarity::Graphlet {
                    return bad(
                        "cycle-house graphs have no features; set similarity = graphlet".into(),
                    );
                }
            }
            DatasetSpec::Files { .. } => {}
        }
        if self.seeds.is_empty() {
            return bad("seeds list is empty".into());
        }
        if self.defenses.is_empty() {
            return bad("defense list is empty".into());
        }
        let mut unique = HashSet::new();
        if !self.defenses.iter().all(|d| unique.insert(*d)) {
            return bad("defense listed twice".into());
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad(format!("p0 = {} outside [0, 1]", self.p0));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout = {} outside [0, 1)", self.dropout));
        }
        if !(self.lr.is_finite() && self.lr > 0.0)
            || !(self.weight_decay.is_finite() && self.weight_decay >= 0.0)
        {
            return bad("lr must be positive and weight_decay nonnegative".into());
        }
        if self.layers == 0 || self.hidden == 0 || self.epochs == 0 || self.targets == 0 {
            return bad("layers, hidden, epochs and targets must be positive".into());
        }
        SplitSpec::new(self.split[0], self.split[1], self.split[2], 0)
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.jaccard_threshold) {
            return bad(format!(
                "jaccard.threshold = {} outside [0, 1]",
                self.jaccard_threshold
            ));
        }
        for &r in std::iter::once(&self.rate).chain(&self.sweep_rates) {
            if !(r > 0.0 && r <= 0.25) {
                return bad(format!("perturbation rate {r} outside (0, 0.25]"));
            }
        }
        if self.bench_sizes.is_empty() || self.bench_dim == 0 || self.bench_reps == 0 {
            return bad("bench sizes, dim and reps must be non-empty and positive".into());
        }
        self.attack_config(0)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSpec::Sbm(spec) => {
                put("dataset", "sbm".into());
                put("sbm.nodes", spec.n_nodes.to_string());
                put("sbm.clusters", spec.n_clusters.to_string());
                put("sbm.p_in", spec.p_in.to_string());
                put("sbm.p_out", spec.p_out.to_string());
                put("sbm.dim", spec.feature_dim.to_string());
                put("sbm.signal", spec.signal.to_string());
            }
            DatasetSpec::CycleHouse(spec) => {
                put("dataset", "cycle-house".into());
                put("house.cycle", spec.cycle_len.to_string());
                put("house.count", spec.houses.to_string());
            }
            DatasetSpec::Files {
                edges,
                features,
                labels,
            } => {
                put("dataset", "files".into());
                put("files.edges", edges.display().to_string());
                if let Some(f) = features {
                    put("files.features", f.display().to_string());
                }
                put("files.labels", labels.display().to_string());
            }
        }
        put("dataset.seed", self.dataset_seed.to_string());
        put(
            "similarity",
            match self.similarity {
                Similarity::Feature => "feature",
                Similarity::Graphlet => "graphlet",
            }
            .into(),
        );
        put("model", self.model.to_string());
        put("defense", list(&self.defenses));
        put(
            "attack",
            self.attack.map_or("none".into(), |a| a.to_string()),
        );
        put("rate", self.rate.to_string());
        put("seeds", list(&self.seeds));
        put("p0", self.p0.to_string());
        put("layers", self.layers.to_string());
        put("hidden", self.hidden.to_string());
        put("lr", self.lr.to_string());
        put("weight_decay", self.weight_decay.to_string());
        put("epochs", self.epochs.to_string());
        put("patience", self.patience.to_string());
        put("dropout", self.dropout.to_string());
        put("targets", self.targets.to_string());
        put("split.train", self.split[0].to_string());
        put("split.val", self.split[1].to_string());
        put("split.test", self.split[2].to_string());
        put("attack.pool", self.pool_size.to_string());
        put(
            "attack.influence_neighbors",
            self.influence_neighbors.to_string(),
        );
        put("attack.confidence", self.confidence.to_string());
        put("attack.global_deletions", self.global_deletions.to_string());
        put("jaccard.threshold", self.jaccard_threshold.to_string());
        put("sweep.rates", list(&self.sweep_rates));
        put("bench.sizes", list(&self.bench_sizes));
        put("bench.dim", self.bench_dim.to_string());
        put("bench.reps", self.bench_reps.to_string());
        s
    }

    /// First 12 hex digits of the SHA-256 of [`RunConfig::to_text`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            hidden: vec![self.hidden; self.layers - 1],
            dropout: self.dropout,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            patience: self.patience,
            lr: self.lr,
            weight_decay: self.weight_decay,
            seed,
        }
    }

    pub fn attack_config(&self, seed: u64) -> AttackConfig {
        AttackConfig {
            kind: self.attack.unwrap_or(AttackKind::Direct),
            seed,
            pool_size: self.pool_size,
            influence_neighbors: self.influence_neighbors,
            rate: self.rate,
            confidence: self.confidence,
            global_deletions: self.global_deletions,
            surrogate_hidden: self.hidden,
            surrogate_train: self.train_config(seed),
        }
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        SplitSpec {
            train: self.split[0],
            val: self.split[1],
            test: self.split[2],
            seed,
        }
    }
}
