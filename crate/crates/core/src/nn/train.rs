use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use crate::autodiff::{Adam, AdamConfig, Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::SparseGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Stop after this many consecutive epochs without a strict increase in
    /// validation accuracy.
    pub patience: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Seeds the dropout stream.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            patience: 10,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

/// Fraction of masked rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[bool]) -> Result<f64> {
    if logits.rows() != labels.len() || mask.len() != labels.len() {
        return Err(Error::shape(
            "accuracy",
            logits.shape(),
            &[labels.len(), mask.len()],
        ));
    }
    let (mut hits, mut total) = (0usize, 0usize);
    for (i, &m) in mask.iter().enumerate() {
        if m {
            total += 1;
            hits += usize::from(logits.argmax_row(i) == labels[i]);
        }
    }
    if total == 0 {
        return Err(Error::Precondition("accuracy mask selects no nodes".into()));
    }
    Ok(hits as f64 / total as f64)
}

pub fn evaluate(model: &Model, graph: &SparseGraph, mask: &[bool]) -> Result<f64> {
    accuracy(&model.predict(graph)?, graph.labels(), mask)
}

/// Full-graph training on the train mask with Adam and early stopping on
/// validation accuracy. The best-validation parameters are restored before
/// returning.
pub fn train(model: &mut Model, graph: &SparseGraph, config: &TrainConfig) -> Result<History> {
    let masks = graph
        .masks()
        .ok_or_else(|| Error::Precondition("graph has no train/val/test masks".into()))?
        .clone();
    let mut optimizer = Adam::new(AdamConfig {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut history = History {
        best_val_accuracy: f64::NEG_INFINITY,
        ..History::default()
    };
    let mut best_params: Vec<Tensor> = model.parameters().into_iter().cloned().collect();
    let mut stale = 0;
    let mut tape = Tape::new();
    let decay = model.decay_mask();

    for epoch in 1..=config.epochs {
        model.set_training(true);
        tape.clear();
        let out = model.forward_on_tape(&mut tape, graph, None, Some(&mut rng))?;
        let ce = tape.softmax_cross_entropy(out.logits, graph.labels(), &masks.train)?;
        let loss = match out.penalty {
            Some(p) => tape.add(ce, p)?,
            None => ce,
        };
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            model.set_training(false);
            return Err(Error::Training {
                epoch,
                msg: format!("loss is {loss_value}"),
            });
        }
        tape.backward(loss)?;
        {
            let mut params = model.parameters_mut();
            for (p, v) in params.iter_mut().zip(&out.params) {
                p.clear_grad();
                match tape.grad(*v) {
                    Some(g) => p.accumulate_grad(g)?,
                    None => p.accumulate_grad(&vec![0.0; p.numel()])?,
                }
            }
            optimizer.step_with_decay(&mut params, &decay)?;
        }
        model.set_training(false);

        let val = evaluate(model, graph, &masks.val)?;
        history.train_loss.push(loss_value);
        history.val_accuracy.push(val);
        if val > history.best_val_accuracy {
            history.best_val_accuracy = val;
            history.best_epoch = epoch;
            best_params = model.parameters().into_iter().cloned().collect();
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    for (p, best) in model.parameters_mut().into_iter().zip(best_params) {
        *p = best;
    }
    model.set_training(false);
    Ok(history)
}
