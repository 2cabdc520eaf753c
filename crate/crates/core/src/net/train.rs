use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{zero_gradients, Gradients, Tape};
use super::loss::{npcc_grad_slice, npcc_slice};
use super::model::{check_params, Architecture, NetworkParams};
use super::tensor::Tensor;
use crate::dataset::PairSet;
use crate::error::{Error, Result};
use crate::field::Image;

/// Optimizer and schedule settings. The optimizer is Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop once the epoch's mean training loss reaches this value.
    pub target_loss: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 16,
            epochs: 200,
            validation_fraction: 0.1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            target_loss: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning_rate", format!("{} must be finite and >= 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::param("validation_fraction", format!("{} outside [0, 1)", self.validation_fraction)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::param("adam", "betas must lie in [0, 1) and epsilon be positive"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        format!(
            "optimizer=adam\nlearning_rate={}\nbatch_size={}\nepochs={}\nvalidation_fraction={}\nseed={}\nbeta1={}\nbeta2={}\nepsilon={}\ntarget_loss={}\n",
            self.learning_rate,
            self.batch_size,
            self.epochs,
            self.validation_fraction,
            self.seed,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.target_loss.map_or("none".to_string(), |t| t.to_string()),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub hyper: TrainConfig,
    pub train_pairs: usize,
    pub validation_pairs: usize,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub wall_clock: Duration,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.train_loss)
    }

    /// Loss curve as CSV; timing is left out so equal runs give equal text.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_npcc,validation_npcc\n");
        for r in &self.history {
            let v = r.validation_loss.map_or(String::new(), |v| format!("{v:.17e}"));
            out.push_str(&format!("{},{:.17e},{}\n", r.epoch, r.train_loss, v));
        }
        out
    }
}

struct Adam {
    m: Gradients,
    v: Gradients,
    step: i32,
}

impl Adam {
    fn update(&mut self, params: &mut NetworkParams, grads: &Gradients, hyper: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - hyper.beta1.powi(self.step);
        let c2 = 1.0 - hyper.beta2.powi(self.step);
        for (k, tensor) in params.tensors.iter_mut().enumerate() {
            for (i, w) in tensor.data.iter_mut().enumerate() {
                let g = grads[k][i];
                let m = hyper.beta1 * self.m[k][i] + (1.0 - hyper.beta1) * g;
                let v = hyper.beta2 * self.v[k][i] + (1.0 - hyper.beta2) * g * g;
                self.m[k][i] = m;
                self.v[k][i] = v;
                *w -= hyper.learning_rate * (m / c1) / ((v / c2).sqrt() + hyper.epsilon);
            }
        }
    }
}

/// Forward and backward pass for one pair; gradients are added to `grads`.
fn accumulate_example(params: &NetworkParams, arch: &Architecture, input: &Image, target: &Image, grads: &mut Gradients) -> Result<f64> {
    let mut tape = Tape::new(&params.tensors);
    let x = tape.input(Tensor::from_image(input))?;
    let y = arch.forward(&mut tape, x)?;
    let (loss, dy) = npcc_grad_slice(target.data(), tape.value(y).data())?;
    tape.backward(y, dy, grads);
    Ok(loss)
}

/// Mean NPCC of the network over `indices` of `pairs`.
pub fn evaluate(params: &NetworkParams, pairs: &PairSet, indices: &[usize]) -> Result<f64> {
    let arch = check_params(params)?;
    mean_loss(params, &arch, pairs, indices)
}

fn mean_loss(params: &NetworkParams, arch: &Architecture, pairs: &PairSet, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut total = 0.0;
    for &i in indices {
        let out = super::model::infer_with(params, arch, &pairs.intensities[i])?;
        total += npcc_slice(pairs.objects[i].data(), out.data())?;
    }
    Ok(total / indices.len() as f64)
}

fn diverged(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFiniteActivation { .. } | Error::NonFinite { .. } => Error::Diverged { epoch, batch },
        other => other,
    }
}

/// Mini-batch training of `params` on `pairs` (intensity in, object out).
///
/// The batch loss is the sum of per-example NPCC values. A seeded split holds
/// out `validation_fraction` of the pairs; when it is non-empty the returned
/// parameters are those with the lowest validation loss, otherwise the last.
pub fn train(pairs: &PairSet, params: NetworkParams, hyper: &TrainConfig) -> Result<(NetworkParams, TrainReport)> {
    hyper.validate()?;
    let arch = check_params(&params)?;
    if pairs.len() < 2 * hyper.batch_size {
        return Err(Error::param(
            "batch_size",
            format!("{} pairs is fewer than twice the batch size {}", pairs.len(), hyper.batch_size),
        ));
    }
    if pairs.objects.len() != pairs.intensities.len() {
        return Err(Error::param("pairs", "object and intensity counts differ"));
    }
    let n = params.config.input_size;
    if pairs.intensities[0].dims() != (n, n) {
        return Err(Error::ShapeMismatch {
            context: "training pairs".into(),
            expected: vec![n, n],
            got: vec![pairs.intensities[0].height(), pairs.intensities[0].width()],
        });
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = (hyper.validation_fraction * pairs.len() as f64).floor() as usize;
    let validation: Vec<usize> = order[..n_val].to_vec();
    let mut training: Vec<usize> = order[n_val..].to_vec();
    training.sort_unstable();

    let mut params = params;
    let mut adam = Adam {
        m: zero_gradients(&params.tensors),
        v: zero_gradients(&params.tensors),
        step: 0,
    };
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, usize, NetworkParams)> = None;

    for epoch in 0..hyper.epochs {
        training.shuffle(&mut rng);
        let mut total = 0.0;
        for (batch, chunk) in training.chunks(hyper.batch_size).enumerate() {
            let mut grads = zero_gradients(&params.tensors);
            for &i in chunk {
                let loss = accumulate_example(&params, &arch, &pairs.intensities[i], &pairs.objects[i], &mut grads)
                    .map_err(|e| diverged(e, epoch, batch))?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { epoch, batch });
                }
                total += loss;
            }
            adam.update(&mut params, &grads, hyper);
            if !params.is_finite() {
                return Err(Error::Diverged { epoch, batch });
            }
        }
        let train_loss = total / training.len() as f64;
        let validation_loss = if validation.is_empty() {
            None
        } else {
            Some(mean_loss(&params, &arch, pairs, &validation).map_err(|e| diverged(e, epoch, 0))?)
        };
        log::info!(
            "epoch {epoch}: train npcc {train_loss:.5}{}",
            validation_loss.map_or(String::new(), |v| format!(", validation npcc {v:.5}"))
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
        });
        if let Some(v) = validation_loss {
            if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
                best = Some((v, epoch, params.clone()));
            }
        }
        if hyper.target_loss.is_some_and(|t| train_loss <= t) {
            break;
        }
    }

    let last = history.last().map_or(0, |r| r.epoch);
    let (params, best_epoch) = match best {
        Some((_, epoch, p)) => (p, epoch),
        None => (params, last),
    };
    let report = TrainReport {
        history,
        hyper: hyper.clone(),
        train_pairs: training.len(),
        validation_pairs: validation.len(),
        best_epoch,
        wall_clock: start.elapsed(),
        checkpoint: None,
    };
    Ok((params, report))
}
