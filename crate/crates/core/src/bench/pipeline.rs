use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{DatasetSpec, Defense, RunConfig, Similarity};
use super::report::{ExperimentReport, ReportRow, SeedCell, SeedFailure};
use crate::adversary::{
    attack_direct_with, attack_influence_with, attack_nontargeted_with, select_targets, AttackKind,
    Surrogate,
};
use crate::error::{Error, Result};
use crate::graph::{
    apply_perturbation, jaccard_preprocess, load_edge_list, split, write_masks, SparseGraph,
};
use crate::graphlet::{count_orbits, gen_cycle_house, gen_sbm, with_gdv_features};
use crate::guard::{GuardConfig, GuardState, SimilarityMode};
use crate::nn::{evaluate, save_checkpoint, train, Model};

const TAG_GRAPH: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_SURROGATE: u64 = 4;
const TAG_TARGETS: u64 = 5;
const TAG_ATTACK: u64 = 6;

/// Derives an independent stream seed from a run seed and a stage tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates or loads the dataset for `seed`. In graphlet mode the node
/// features are replaced by standardized graphlet degree vectors.
pub fn build_graph(config: &RunConfig, seed: u64) -> Result<SparseGraph> {
    let graph_seed = derive_seed(config.dataset_seed ^ seed, TAG_GRAPH);
    let graph = match &config.dataset {
        DatasetSpec::Sbm(spec) => gen_sbm(&crate::graphlet::SbmSpec {
            seed: graph_seed,
            ..*spec
        })?,
        DatasetSpec::CycleHouse(spec) => gen_cycle_house(&crate::graphlet::CycleHouseSpec {
            seed: graph_seed,
            ..*spec
        })?,
        DatasetSpec::Files {
            edges,
            features,
            labels,
        } => load_edge_list(edges, features.as_deref(), labels, None)?.0,
    };
    Ok(match config.similarity {
        Similarity::Graphlet => with_gdv_features(&graph)?.0,
        Similarity::Feature => graph,
    })
}

/// [`build_graph`] followed by the seeded train/val/test split.
pub fn prepare_graph(config: &RunConfig, seed: u64) -> Result<SparseGraph> {
    split(&build_graph(config, seed)?, &config.split_spec(seed))
}

/// Trains a model with `defense` on `graph`. Returns the graph the model
/// actually saw, which differs from `graph` only for the Jaccard defense.
pub fn train_defended(
    config: &RunConfig,
    graph: &SparseGraph,
    defense: Defense,
    seed: u64,
) -> Result<(SparseGraph, Model)> {
    let graph = match defense {
        Defense::Jaccard => jaccard_preprocess(graph, config.jaccard_threshold)?,
        _ => graph.clone(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_INIT));
    let mut model = Model::new(
        &config.model_config(),
        graph.feature_dim(),
        graph.n_classes(),
        &mut rng,
    )?;
    if defense.is_guard() {
        let mode = match config.similarity {
            Similarity::Feature => SimilarityMode::FeatureCosine,
            Similarity::Graphlet => SimilarityMode::Graphlet(Arc::new(count_orbits(&graph))),
        };
        let guard = GuardConfig {
            p0: config.p0,
            prune: defense != Defense::GuardNoPrune,
            memory: defense != Defense::GuardNoMemory,
            mode,
            ..GuardConfig::default()
        };
        model.attach_guard(GuardState::new(guard, &mut rng)?);
    }
    train(
        &mut model,
        &graph,
        &config.train_config(derive_seed(seed, TAG_TRAIN)),
    )?;
    Ok((graph, model))
}

struct SeedOutcome {
    clean: Vec<f64>,
    attacked: Vec<f64>,
}

fn test_mask(graph: &SparseGraph) -> Result<&[bool]> {
    Ok(&graph
        .masks()
        .ok_or_else(|| Error::Precondition("graph has no masks".into()))?
        .test)
}

fn run_seed(
    config: &RunConfig,
    seed: u64,
    attack: Option<AttackKind>,
    defenses: &[Defense],
    dir: Option<&Path>,
) -> Result<SeedOutcome> {
    let graph = prepare_graph(config, seed)?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        write_masks(graph.masks().expect("split sets masks"), &dir.join("masks"))?;
    }

    let clean_models: Vec<(SparseGraph, Model)> = defenses
        .par_iter()
        .map(|&d| train_defended(config, &graph, d, seed))
        .collect::<Result<_>>()?;
    let mut clean = Vec::with_capacity(defenses.len());
    for ((g, m), d) in clean_models.iter().zip(defenses) {
        clean.push(evaluate(m, g, test_mask(g)?)?);
        if let Some(dir) = dir {
            save_checkpoint(m, &dir.join("checkpoints"), &format!("clean-{d}"))?;
        }
    }
    let Some(kind) = attack else {
        return Ok(SeedOutcome {
            attacked: clean.clone(),
            clean,
        });
    };

    let attack_config = config.attack_config(derive_seed(seed, TAG_ATTACK));
    let surrogate = Surrogate::train(
        &graph,
        config.hidden,
        &config.train_config(derive_seed(seed, TAG_SURROGATE)),
    )?;

    let attacked = match kind {
        AttackKind::NonTargeted => {
            let pert = attack_nontargeted_with(&graph, &surrogate, &attack_config)?;
            let poisoned = apply_perturbation(&graph, &pert)?;
            if let Some(dir) = dir {
                fs::write(dir.join("perturbation.txt"), pert.to_text())?;
            }
            defenses
                .par_iter()
                .map(|&d| {
                    let (g, m) = train_defended(config, &poisoned, d, seed)?;
                    if let Some(dir) = dir {
                        save_checkpoint(&m, &dir.join("checkpoints"), &format!("attacked-{d}"))?;
                    }
                    evaluate(&m, &g, test_mask(&g)?)
                })
                .collect::<Result<Vec<f64>>>()?
        }
        AttackKind::Direct | AttackKind::Influence => {
            let baseline = match defenses.iter().position(|&d| d == Defense::None) {
                Some(i) => clean_models[i].1.clone(),
                None => train_defended(config, &graph, Defense::None, seed)?.1,
            };
            let targets = select_targets(
                &graph,
                &baseline,
                config.targets,
                derive_seed(seed, TAG_TARGETS),
            )?
            .all();
            let hits: Vec<Vec<bool>> = targets
                .par_iter()
                .map(|&u| {
                    let pert = match kind {
                        AttackKind::Direct => {
                            attack_direct_with(&graph, &surrogate, u, &attack_config)?
                        }
                        _ => attack_influence_with(&graph, &surrogate, u, &attack_config)?,
                    };
                    let poisoned = apply_perturbation(&graph, &pert)?;
                    let target_dir = dir.map(|d| d.join("targets").join(u.to_string()));
                    if let Some(td) = &target_dir {
                        fs::create_dir_all(td)?;
                        fs::write(td.join("perturbation.txt"), pert.to_text())?;
                    }
                    defenses
                        .iter()
                        .map(|&d| {
                            let (g, m) = train_defended(config, &poisoned, d, seed)?;
                            if let Some(td) = &target_dir {
                                save_checkpoint(&m, td, &d.to_string())?;
                            }
                            Ok(m.predict(&g)?.argmax_row(u) == g.labels()[u])
                        })
                        .collect()
                })
                .collect::<Result<_>>()?;
            if let Some(dir) = dir {
                let mut csv = String::from("target");
                for d in defenses {
                    csv.push_str(&format!(",{d}"));
                }
                csv.push('\n');
                for (u, h) in targets.iter().zip(&hits) {
                    csv.push_str(&u.to_string());
                    for &x in h {
                        csv.push_str(if x { ",1" } else { ",0" });
                    }
                    csv.push('\n');
                }
                fs::write(dir.join("targets.csv"), csv)?;
            }
            (0..defenses.len())
                .map(|j| hits.iter().filter(|h| h[j]).count() as f64 / hits.len() as f64)
                .collect()
        }
    };
    Ok(SeedOutcome { clean, attacked })
}

fn run_grid(
    config: &RunConfig,
    title: &str,
    defenses: &[Defense],
    rates: &[Option<f64>],
    out: Option<&Path>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let hash = config.hash();
    let attack_label = config.attack.map_or("none".to_string(), |a| a.to_string());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &rate in rates {
        let mut per_defense: Vec<Vec<SeedCell>> = vec![Vec::new(); defenses.len()];
        for &seed in &config.seeds {
            let mut replay = config.clone();
            replay.seeds = vec![seed];
            replay.defenses = defenses.to_vec();
            if let Some(r) = rate {
                replay.rate = r;
            }
            let dir: Option<PathBuf> = out.map(|o| {
                let mut d = o.join(&hash);
                if let Some(r) = rate {
                    d = d.join(format!("rate-{r}"));
                }
                d.join(format!("seed-{seed}"))
            });
            let result = (|| {
                if let Some(d) = &dir {
                    fs::create_dir_all(d)?;
                    fs::write(d.join("config.txt"), replay.to_text())?;
                }
                run_seed(&replay, seed, config.attack, defenses, dir.as_deref())
            })();
            match result {
                Ok(outcome) => {
                    info!("{title}: seed {seed} rate {rate:?} done");
                    for (j, cells) in per_defense.iter_mut().enumerate() {
                        cells.push(SeedCell {
                            seed,
                            clean: outcome.clean[j],
                            attacked: outcome.attacked[j],
                            run_dir: dir.clone(),
                        });
                    }
                }
                Err(e) => {
                    warn!("{title}: seed {seed} failed: {e}");
                    failures.push(SeedFailure {
                        seed,
                        rate,
                        message: e.to_string(),
                    });
                }
            }
        }
        for (d, cells) in defenses.iter().zip(per_defense) {
            rows.push(ReportRow {
                model: config.model,
                defense: *d,
                attack: attack_label.clone(),
                rate,
                cells,
            });
        }
    }
    let report = ExperimentReport {
        title: title.to_string(),
        config_hash: hash.clone(),
        rows,
        failures,
        wall_time: started.elapsed(),
    };
    if let Some(o) = out {
        report.write(&o.join(&hash))?;
    }
    Ok(report)
}

/// Runs every seed of `config` with each of its defenses.
pub fn run_experiment(config: &RunConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    let rate = (config.attack == Some(AttackKind::NonTargeted)).then_some(config.rate);
    run_grid(config, "experiment", &config.defenses, &[rate], out)
}

/// Direct attack against no defense, the guard without pruning, the guard
/// without memory and the full guard.
pub fn run_ablation(config: &RunConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    if config.attack != Some(AttackKind::Direct) {
        return Err(Error::Config("ablation needs attack = direct".into()));
    }
    let defenses = [
        Defense::None,
        Defense::GuardNoPrune,
        Defense::GuardNoMemory,
        Defense::Guard,
    ];
    run_grid(config, "ablation", &defenses, &[None], out)
}

/// Non-targeted attack at every rate of `config.sweep_rates`, without
/// defense and with the guard.
pub fn run_intensity_sweep(config: &RunConfig, out: Option<&Path>) -> Result<ExperimentReport> {
    if config.attack != Some(AttackKind::NonTargeted) {
        return Err(Error::Config(
            "intensity sweep needs attack = non-targeted".into(),
        ));
    }
    let rates: Vec<Option<f64>> = config.sweep_rates.iter().map(|&r| Some(r)).collect();
    run_grid(
        config,
        "intensity sweep",
        &[Defense::None, Defense::Guard],
        &rates,
        out,
    )
}
