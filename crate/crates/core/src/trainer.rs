//! Minibatch training on cross-entropy with margin-based stopping.
//!
//! After every epoch the fraction of training points classified with margin
//! at least `stop_margin` is measured; training stops as soon as it reaches
//! `stop_fraction`. The margin loss is only ever used for this check.

use log::{debug, info};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, RngStream};
use crate::network::{forward, loss_and_grad, margin_loss, LabeledExample, MlpParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stop_fraction: f64,
    pub stop_margin: f64,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::sgd_default(0)
    }
}

impl TrainConfig {
    /// SGD, learning rate 0.1, batches of 64, stop at 99% of points with
    /// margin 10.
    pub fn sgd_default(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            learning_rate: 0.1,
            batch_size: 64,
            stop_fraction: 0.99,
            stop_margin: 10.0,
            max_epochs: 2000,
            seed,
        }
    }

    /// Preset for very deep nets where plain SGD at 0.1 is unstable: Adam at
    /// 1e-5 until 95% plain training accuracy.
    pub fn adam_deep(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Adam,
            learning_rate: 1e-5,
            stop_fraction: 0.95,
            stop_margin: 0.0,
            ..Self::sgd_default(seed)
        }
    }

    /// The preset used for depth `depth`.
    pub fn for_depth(depth: usize, seed: u64) -> Self {
        if depth >= 20 {
            Self::adam_deep(seed)
        } else {
            Self::sgd_default(seed)
        }
    }

    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.batch_size > dataset_len {
            return Err(Error::invalid(format!(
                "batch size {} must be in 1..={dataset_len}",
                self.batch_size
            )));
        }
        if !(self.stop_fraction > 0.0 && self.stop_fraction <= 1.0) {
            return Err(Error::invalid(format!("stop fraction {} not in (0, 1]", self.stop_fraction)));
        }
        if !(self.stop_margin >= 0.0) {
            return Err(Error::invalid(format!("stop margin {} is negative", self.stop_margin)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub params: MlpParams,
    pub epochs_run: usize,
    pub final_margin_accuracy: f64,
    pub converged: bool,
}

/// Fraction of `data` with margin at least `gamma`.
pub fn margin_accuracy(params: &MlpParams, data: &[LabeledExample], gamma: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("margin accuracy of an empty dataset"));
    }
    let mut hits = 0usize;
    for (i, ex) in data.iter().enumerate() {
        let at = |e| Error::AtExample {
            index: i,
            source: Box::new(e),
        };
        let trace = forward(params, &ex.x).map_err(at)?;
        if margin_loss(&trace, ex.y, gamma).map_err(at)? == 0 {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = shapes.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One Adam update in place. Returns the bias-corrected steps that were
/// subtracted from `weights`.
pub fn adam_step(state: &mut AdamState, weights: &mut [Matrix], grads: &[Matrix], lr: f64) -> Result<Vec<Matrix>> {
    if grads.len() != weights.len() || state.m.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            context: "adam layer count",
            expected: weights.len(),
            found: grads.len(),
        });
    }
    for (w, g) in weights.iter().zip(grads) {
        if w.shape() != g.shape() {
            return Err(Error::DimensionMismatch {
                context: "adam gradient shape",
                expected: w.rows() * w.cols(),
                found: g.rows() * g.cols(),
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let mut steps = Vec::with_capacity(weights.len());
    for (l, g) in grads.iter().enumerate() {
        let m = state.m[l].data_mut();
        let v = state.v[l].data_mut();
        let w = weights[l].data_mut();
        let mut step = Matrix::zeros(g.rows(), g.cols());
        let s = step.data_mut();
        for i in 0..g.data().len() {
            let gi = g.data()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            s[i] = lr * mhat / (vhat.sqrt() + state.eps);
            w[i] -= s[i];
        }
        steps.push(step);
    }
    Ok(steps)
}

/// Plain gradient step `w ← w − lr·g`.
pub fn sgd_step(weights: &mut [Matrix], grads: &[Matrix], lr: f64) {
    for (w, g) in weights.iter_mut().zip(grads) {
        for (wi, gi) in w.data_mut().iter_mut().zip(g.data()) {
            *wi -= lr * gi;
        }
    }
}

pub fn train(params: MlpParams, data: &[LabeledExample], cfg: &TrainConfig) -> Result<TrainResult> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    cfg.validate(data.len())?;
    let mut params = params;
    let mut rng = RngStream::new(cfg.seed, 0x0074_7261_696e);
    let mut adam = AdamState::new(params.weights());
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut accuracy = margin_accuracy(&params, data, cfg.stop_margin)?;
    let mut epochs_run = 0;

    while epochs_run < cfg.max_epochs {
        if accuracy >= cfg.stop_fraction {
            break;
        }
        epochs_run += 1;
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grads) = loss_and_grad(&params, &batch)?;
            if !loss.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged {
                    epoch: epochs_run,
                    learning_rate: cfg.learning_rate,
                    detail: format!("loss {loss} after {batches} batches"),
                });
            }
            match cfg.optimizer {
                Optimizer::Sgd => sgd_step(params.weights_mut(), &grads, cfg.learning_rate),
                Optimizer::Adam => {
                    adam_step(&mut adam, params.weights_mut(), &grads, cfg.learning_rate)?;
                }
            }
            epoch_loss += loss;
            batches += 1;
        }
        if params.weights().iter().any(|w| w.data().iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch: epochs_run,
                learning_rate: cfg.learning_rate,
                detail: "non-finite weights".into(),
            });
        }
        accuracy = margin_accuracy(&params, data, cfg.stop_margin)?;
        debug!(
            "epoch {epochs_run}: mean loss {:.6}, margin accuracy {accuracy:.4}",
            epoch_loss / batches as f64
        );
    }
    let converged = accuracy >= cfg.stop_fraction;
    info!("training stopped after {epochs_run} epochs, margin accuracy {accuracy:.4}, converged={converged}");
    Ok(TrainResult {
        params,
        epochs_run,
        final_margin_accuracy: accuracy,
        converged,
    })
}
