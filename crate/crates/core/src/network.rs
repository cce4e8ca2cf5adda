//! Bias-free ReLU networks `f(x) = W_D φ(W_{D-1} ⋯ φ(W_1 x))`.
//!
//! Layers are numbered from 1 to `D`. Layer `d` maps `h^{d-1}` to the
//! pre-activation `f^d = W_d h^{d-1}`; hidden layers apply the ReLU
//! `h^d = max(f^d, 0)`, the output layer is linear. `h^0` is the input.
//! A hidden unit is *active* when its pre-activation is strictly positive.

use log::warn;

use crate::error::{Error, Result};
use crate::linalg::{axpy, sample_gaussian_matrix, Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// Entries with standard deviation `1/√fan_in`.
    #[default]
    InvSqrtFanIn,
    /// Entries with *variance* `1/√fan_in`, the literal reading of the
    /// footnote this library's experiments come from.
    PaperFootnote,
}

impl InitScheme {
    pub fn entry_std(self, fan_in: usize) -> f64 {
        let f = fan_in as f64;
        match self {
            InitScheme::InvSqrtFanIn => 1.0 / f.sqrt(),
            InitScheme::PaperFootnote => f.powf(-0.25),
        }
    }
}

/// Weights `W_1 … W_D` together with the initialization snapshot `Z`
/// they were trained from.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    dims: Vec<usize>,
    weights: Vec<Matrix>,
    init: Vec<Matrix>,
}

impl MlpParams {
    /// Validates that `weights` chain and that `init` has matching shapes.
    pub fn new(weights: Vec<Matrix>, init: Vec<Matrix>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::invalid(format!(
                "depth must be at least 2, got {}",
                weights.len()
            )));
        }
        if init.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "initialization snapshot depth",
                expected: weights.len(),
                found: init.len(),
            });
        }
        let mut dims = vec![weights[0].cols()];
        for (d, w) in weights.iter().enumerate() {
            if w.cols() != *dims.last().unwrap() {
                return Err(Error::DimensionMismatch {
                    context: "weight chain",
                    expected: *dims.last().unwrap(),
                    found: w.cols(),
                });
            }
            if init[d].shape() != w.shape() {
                return Err(Error::DimensionMismatch {
                    context: "initialization snapshot shape",
                    expected: w.rows() * w.cols(),
                    found: init[d].rows() * init[d].cols(),
                });
            }
            dims.push(w.rows());
        }
        Ok(Self { dims, weights, init })
    }

    /// Treats `weights` as their own initialization.
    pub fn from_weights(weights: Vec<Matrix>) -> Result<Self> {
        let init = weights.clone();
        Self::new(weights, init)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// `(N, H_1, …, H_{D-1}, K)`.
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Largest hidden width; equals `H` for uniform-width nets.
    pub fn width(&self) -> usize {
        self.dims[1..self.dims.len() - 1].iter().copied().max().unwrap_or(0)
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    /// `W_d` for `d` in `1..=D`.
    pub fn weight(&self, d: usize) -> &Matrix {
        &self.weights[d - 1]
    }

    pub fn init(&self) -> &[Matrix] {
        &self.init
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// `Σ_d ‖W_d − Z_d‖_F²`.
    pub fn distance_from_init_sq(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.init)
            .map(|(w, z)| {
                w.data()
                    .iter()
                    .zip(z.data())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum()
    }

    /// Copy with `noise[d]` added to every weight; `init` is kept.
    pub fn perturbed(&self, noise: &[Matrix]) -> Result<Self> {
        if noise.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                context: "noise depth",
                expected: self.weights.len(),
                found: noise.len(),
            });
        }
        let weights = self
            .weights
            .iter()
            .zip(noise)
            .map(|(w, u)| w.add(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dims: self.dims.clone(),
            weights,
            init: self.init.clone(),
        })
    }
}

/// Samples Gaussian weights for `dims = (N, H, …, H, K)` and records them as
/// the initialization snapshot.
pub fn init_network(dims: &[usize], scheme: InitScheme, rng: &mut RngStream) -> Result<MlpParams> {
    if dims.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least input, one hidden and output dims, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!("zero-sized layer in {dims:?}")));
    }
    if dims[1..dims.len() - 1].iter().any(|&h| h < dims[0]) {
        warn!(
            "hidden width below input dimension ({dims:?}); the bounds' derivation assumes H >= N"
        );
    }
    let weights: Vec<Matrix> = dims
        .windows(2)
        .map(|w| sample_gaussian_matrix(w[1], w[0], scheme.entry_std(w[0]), rng))
        .collect();
    MlpParams::from_weights(weights)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    pub y: usize,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, y: usize) -> Self {
        Self { x, y }
    }
}

/// Every intermediate quantity of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `f^1 … f^D`
    preacts: Vec<Vec<f64>>,
    /// `h^0 … h^{D-1}`
    acts: Vec<Vec<f64>>,
    /// `m^1 … m^{D-1}`
    masks: Vec<Vec<bool>>,
}

impl ForwardTrace {
    pub fn depth(&self) -> usize {
        self.preacts.len()
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    /// `f^d`, `d` in `1..=D`.
    pub fn preact(&self, d: usize) -> &[f64] {
        &self.preacts[d - 1]
    }

    /// `h^d`, `d` in `0..D`.
    pub fn act(&self, d: usize) -> &[f64] {
        &self.acts[d]
    }

    /// Activation mask of hidden layer `d`, `d` in `1..D`.
    pub fn mask(&self, d: usize) -> &[bool] {
        &self.masks[d - 1]
    }

    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn logits(&self) -> &[f64] {
        self.preacts.last().unwrap()
    }
}

pub fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: params.input_dim(),
            found: x.len(),
        });
    }
    Ok(forward_unchecked(params.weights(), x))
}

pub(crate) fn forward_unchecked(weights: &[Matrix], x: &[f64]) -> ForwardTrace {
    let depth = weights.len();
    let mut preacts = Vec::with_capacity(depth);
    let mut acts = Vec::with_capacity(depth);
    let mut masks = Vec::with_capacity(depth - 1);
    acts.push(x.to_vec());
    for (d, w) in weights.iter().enumerate() {
        let f = w.matvec_unchecked(acts.last().unwrap());
        if d + 1 < depth {
            masks.push(f.iter().map(|&v| v > 0.0).collect());
            acts.push(relu(&f));
        }
        preacts.push(f);
    }
    ForwardTrace { preacts, acts, masks }
}

/// `f(x)[y] − max_{j≠y} f(x)[j]`.
pub fn margin(trace: &ForwardTrace, y: usize) -> Result<f64> {
    margin_of_logits(trace.logits(), y)
}

pub fn margin_of_logits(logits: &[f64], y: usize) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::invalid(format!(
            "margin needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if y >= logits.len() {
        return Err(Error::invalid(format!(
            "label {y} out of range for {} classes",
            logits.len()
        )));
    }
    let best_other = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != y)
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(logits[y] - best_other)
}

/// 0 when the margin reaches `gamma`, 1 otherwise. `gamma = 0` is the 0-1
/// error with ties counted as correct.
pub fn margin_loss(trace: &ForwardTrace, y: usize, gamma: f64) -> Result<u8> {
    if !(gamma >= 0.0) {
        return Err(Error::invalid(format!("margin threshold must be >= 0, got {gamma}")));
    }
    Ok(u8::from(margin(trace, y)? < gamma))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `−log softmax(logits)[y]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[y]
}

/// Mean softmax cross-entropy over `batch` and its gradient, one matrix
/// per layer.
pub fn loss_and_grad(params: &MlpParams, batch: &[LabeledExample]) -> Result<(f64, Vec<Matrix>)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let k = params.num_classes();
    let mut grads: Vec<Matrix> = params
        .weights()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut loss = 0.0;
    for (i, ex) in batch.iter().enumerate() {
        if ex.y >= k {
            return Err(Error::AtExample {
                index: i,
                source: Box::new(Error::invalid(format!("label {} >= {k} classes", ex.y))),
            });
        }
        let trace = forward(params, &ex.x).map_err(|e| Error::AtExample {
            index: i,
            source: Box::new(e),
        })?;
        loss += cross_entropy(trace.logits(), ex.y);
        backprop_into(params, &trace, ex.y, &mut grads);
    }
    let scale = 1.0 / batch.len() as f64;
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grads))
}

pub fn grad_cross_entropy(params: &MlpParams, batch: &[LabeledExample]) -> Result<Vec<Matrix>> {
    loss_and_grad(params, batch).map(|(_, g)| g)
}

fn backprop_into(params: &MlpParams, trace: &ForwardTrace, y: usize, grads: &mut [Matrix]) {
    let depth = params.depth();
    let mut delta = softmax(trace.logits());
    delta[y] -= 1.0;
    for d in (1..=depth).rev() {
        let input = trace.act(d - 1);
        let g = &mut grads[d - 1];
        let cols = g.cols();
        for (row, &dv) in g.data_mut().chunks_exact_mut(cols).zip(&delta) {
            if dv != 0.0 {
                axpy(dv, input, row);
            }
        }
        if d > 1 {
            let mut back = params.weight(d).tr_matvec_unchecked(&delta);
            for (b, &active) in back.iter_mut().zip(trace.mask(d - 1)) {
                if !active {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{spectral_norm, PowerIteration};

    fn random_net(dims: &[usize], seed: u64) -> MlpParams {
        init_network(dims, InitScheme::InvSqrtFanIn, &mut RngStream::new(seed, 0)).unwrap()
    }

    fn random_vec(n: usize, rng: &mut RngStream) -> Vec<f64> {
        (0..n).map(|_| rng.standard_normal()).collect()
    }

    #[test]
    fn init_shapes_and_snapshot() {
        for scheme in [InitScheme::InvSqrtFanIn, InitScheme::PaperFootnote] {
            let p = init_network(&[2, 3, 2], scheme, &mut RngStream::new(1, 0)).unwrap();
            assert_eq!(p.weight(1).shape(), (3, 2));
            assert_eq!(p.weight(2).shape(), (2, 3));
            assert_eq!(p.weights(), p.init());
            assert_eq!(p.distance_from_init_sq(), 0.0);
        }
    }

    #[test]
    fn init_square_layer_norms() {
        let h = 256;
        let p = random_net(&[h, h, h, 10], 3);
        let w = p.weight(2);
        let spec = spectral_norm(w, PowerIteration::default(), &mut RngStream::new(0, 0)).value;
        assert!((1.8..=2.2).contains(&spec), "spectral {spec}");
        let fro = w.frobenius_norm();
        let root_h = (h as f64).sqrt();
        assert!((fro - root_h).abs() <= 0.1 * root_h, "frobenius {fro}");
    }

    #[test]
    fn footnote_scheme_scales_std() {
        assert!((InitScheme::PaperFootnote.entry_std(16) - 0.5).abs() < 1e-15);
        assert!((InitScheme::InvSqrtFanIn.entry_std(16) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn identity_forward() {
        let p = MlpParams::from_weights(vec![Matrix::identity(2), Matrix::identity(2)]).unwrap();
        let t = forward(&p, &[1.0, -1.0]).unwrap();
        assert_eq!(t.preact(1), &[1.0, -1.0]);
        assert_eq!(t.act(1), &[1.0, 0.0]);
        assert_eq!(t.preact(2), &[1.0, 0.0]);
        assert_eq!(t.mask(1), &[true, false]);
    }

    #[test]
    fn nonnegative_everything_all_active() {
        let mut rng = RngStream::new(4, 0);
        let w1 = Matrix::from_fn(5, 3, |_, _| rng.uniform() + 0.1);
        let w2 = Matrix::from_fn(4, 5, |_, _| rng.uniform() + 0.1);
        let w3 = Matrix::from_fn(2, 4, |_, _| rng.uniform());
        let p = MlpParams::from_weights(vec![w1, w2, w3]).unwrap();
        let t = forward(&p, &[0.5, 1.0, 2.0]).unwrap();
        assert!(t.masks().iter().flatten().all(|&m| m));
    }

    #[test]
    fn forward_matches_straight_line_oracle() {
        let p = random_net(&[4, 6, 6, 3], 8);
        let mut rng = RngStream::new(9, 0);
        let x = random_vec(4, &mut rng);
        // Straight-line re-implementation with explicit loops.
        let mut h = x.clone();
        for (d, w) in p.weights().iter().enumerate() {
            let mut f = vec![0.0; w.rows()];
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    f[r] += w.get(r, c) * h[c];
                }
            }
            h = if d + 1 < p.depth() {
                f.iter().map(|v| v.max(0.0)).collect()
            } else {
                f
            };
        }
        let t = forward(&p, &x).unwrap();
        for (a, b) in t.logits().iter().zip(&h) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let p = random_net(&[3, 4, 2], 1);
        assert!(forward(&p, &[1.0, 2.0]).is_err());
    }

    fn trace_with_logits(logits: &[f64]) -> ForwardTrace {
        let k = logits.len();
        let w1 = Matrix::identity(k);
        let w2 = Matrix::identity(k);
        let p = MlpParams::from_weights(vec![w1, w2]).unwrap();
        // Positive logits pass through the identity ReLU net unchanged.
        forward(&p, logits).unwrap()
    }

    #[test]
    fn margin_cases() {
        assert_eq!(margin(&trace_with_logits(&[5.0, 1.0]), 0).unwrap(), 4.0);
        assert_eq!(margin(&trace_with_logits(&[1.0, 1.0, 1.0]), 2).unwrap(), 0.0);
        assert_eq!(margin_of_logits(&[0.0, 7.0], 0).unwrap(), -7.0);
        assert!(margin_of_logits(&[1.0], 0).is_err());
    }

    #[test]
    fn margin_loss_cases() {
        let t = trace_with_logits(&[5.0, 1.0]);
        assert_eq!(margin_loss(&t, 0, 3.0).unwrap(), 0);
        assert_eq!(margin_loss(&t, 0, 5.0).unwrap(), 1);
        let t = trace_with_logits(&[4.0, 1.0]);
        assert_eq!(margin_loss(&t, 0, 3.0).unwrap(), 0);
        assert!(margin_loss(&t, 0, -1.0).is_err());
    }

    #[test]
    fn positive_homogeneity() {
        let p = random_net(&[5, 7, 7, 3], 12);
        let mut rng = RngStream::new(13, 0);
        let x = random_vec(5, &mut rng);
        let t = forward(&p, &x).unwrap();
        for c in [0.25, 2.0, 8.0] {
            // Powers of two keep the scaling exact in floating point.
            let xs: Vec<f64> = x.iter().map(|v| v * c).collect();
            let ts = forward(&p, &xs).unwrap();
            assert_eq!(ts.masks(), t.masks());
            for (a, b) in ts.logits().iter().zip(t.logits()) {
                assert_eq!(*a, b * c);
            }
        }
    }

    #[test]
    fn relu_idempotent() {
        let v = [1.0, -2.0, 0.0, 3.5];
        assert_eq!(relu(&relu(&v)), relu(&v));
    }

    fn finite_difference_check(p: &MlpParams, batch: &[LabeledExample]) {
        let grads = grad_cross_entropy(p, batch).unwrap();
        let step = 1e-5;
        let mean_loss = |q: &MlpParams| loss_and_grad(q, batch).unwrap().0;
        for d in 0..p.depth() {
            for idx in 0..p.weights()[d].data().len() {
                let mut plus = p.clone();
                plus.weights_mut()[d].data_mut()[idx] += step;
                let mut minus = p.clone();
                minus.weights_mut()[d].data_mut()[idx] -= step;
                let fd = (mean_loss(&plus) - mean_loss(&minus)) / (2.0 * step);
                let g = grads[d].data()[idx];
                let denom = fd.abs().max(g.abs()).max(1e-6);
                assert!(
                    (fd - g).abs() / denom <= 1e-4,
                    "layer {} entry {idx}: analytic {g} vs fd {fd}",
                    d + 1
                );
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..20 {
            let p = random_net(&[2, 3, 2], 100 + seed);
            let mut rng = RngStream::new(200 + seed, 0);
            let batch: Vec<LabeledExample> = (0..3)
                .map(|i| LabeledExample::new(random_vec(2, &mut rng), i % 2))
                .collect();
            // Skip draws that put a pre-activation within the FD step of a kink.
            let near_kink = batch.iter().any(|ex| {
                let t = forward(&p, &ex.x).unwrap();
                t.preact(1).iter().any(|v| v.abs() < 1e-3)
            });
            if near_kink {
                continue;
            }
            finite_difference_check(&p, &batch);
        }
    }

    #[test]
    fn gradient_vanishes_when_confident() {
        // Logits (60, 0): softmax is one-hot to within e^-60.
        let w1 = Matrix::from_rows(&[&[30.0, 0.0], &[0.0, 0.0]]);
        let w2 = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 0.0]]);
        let p = MlpParams::from_weights(vec![w1, w2]).unwrap();
        let batch = vec![LabeledExample::new(vec![1.0, 0.0], 0)];
        let g = grad_cross_entropy(&p, &batch).unwrap();
        let norm: f64 = g.iter().map(|m| m.frobenius_norm_sq()).sum::<f64>().sqrt();
        assert!(norm <= 1e-9, "{norm}");
    }

    #[test]
    fn gradient_is_batch_mean() {
        let p = random_net(&[3, 4, 3], 77);
        let mut rng = RngStream::new(78, 0);
        let batch: Vec<LabeledExample> = (0..4)
            .map(|i| LabeledExample::new(random_vec(3, &mut rng), i % 3))
            .collect();
        let doubled: Vec<LabeledExample> = batch.iter().chain(&batch).cloned().collect();
        let g1 = grad_cross_entropy(&p, &batch).unwrap();
        let g2 = grad_cross_entropy(&p, &doubled).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1.0));
            }
        }
    }
}
