//! Interlayer Jacobians and the input-dependent properties the bound is
//! built from.
//!
//! For a ReLU net the Jacobian of layer-`d` pre-activations with respect to
//! layer-`d'` pre-activations is the product of "activated" weights
//!
//! ```text
//! J^{d'→d} = (W_d M_{d-1}) (W_{d-1} M_{d-2}) ⋯ (W_{d'+1} M_{d'})
//! ```
//!
//! where `M_k` is the diagonal 0/1 activation mask of layer `k` (identity for
//! `k = 0`). `J^{d→d}` is the identity. Jacobians are always formed from
//! these products, never by differencing, so they are exact at kinks.
//!
//! Per input we record layer norms `‖h^d‖₂`, the smallest absolute
//! pre-activation of every hidden layer, row-ℓ2 and spectral norms of
//! every `J^{d'→d}` with `1 ≤ d' < d ≤ D`, and the classification margin.
//! [`PropertyAccumulator`] reduces those over a dataset into
//! [`PropertyBounds`]: maxima clamped below at 1 for norms, minima for
//! pre-activations.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix, PowerIteration, RngStream};
use crate::network::{forward, margin, ForwardTrace, LabeledExample, MlpParams};

/// Seed of the streams that pick power-iteration start vectors for
/// Jacobian spectral norms. Fixed so that properties are a pure function of
/// weights and input.
const SPECTRAL_START_SEED: u64 = 0x4A41_4353_5045_4331;

#[derive(Clone, Debug, PartialEq)]
pub struct InterlayerJacobian {
    pub from: usize,
    pub to: usize,
    pub matrix: Matrix,
}

/// `J^{from→to}` at the input recorded in `trace`.
pub fn jacobian(params: &MlpParams, trace: &ForwardTrace, from: usize, to: usize) -> Result<InterlayerJacobian> {
    let depth = params.depth();
    if from > to || to > depth || trace.depth() != depth {
        return Err(Error::LayerRange { from, to, depth });
    }
    let dims = params.dims();
    let mut matrix = Matrix::identity(dims[to]);
    for k in ((from + 1)..=to).rev() {
        matrix = matrix.matmul_unchecked(params.weight(k));
        if k > 1 {
            matrix.mask_columns(trace.mask(k - 1));
        }
    }
    Ok(InterlayerJacobian { from, to, matrix })
}

/// All `J^{d'→to}` for `d'` in `lowest..to`, computed by extending the
/// product one layer at a time. Entry `i` holds `J^{to-1-i → to}`.
pub(crate) fn jacobians_into(weights: &[Matrix], masks: &[Vec<bool>], to: usize, lowest: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(to - lowest);
    if to == 0 || lowest >= to {
        return out;
    }
    let mut j = weights[to - 1].clone();
    if to > 1 {
        j.mask_columns(&masks[to - 2]);
    }
    out.push(j);
    for from in (lowest..to - 1).rev() {
        let mut next = out.last().unwrap().matmul_unchecked(&weights[from]);
        if from >= 1 {
            next.mask_columns(&masks[from - 1]);
        }
        out.push(next);
    }
    out
}

/// Triangular table over layer pairs `1 ≤ from < to ≤ depth`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairTable {
    depth: usize,
    values: Vec<f64>,
}

impl PairTable {
    pub fn filled(depth: usize, value: f64) -> Self {
        let n = if depth >= 2 { depth * (depth - 1) / 2 } else { 0 };
        Self {
            depth,
            values: vec![value; n],
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub(crate) fn index(&self, from: usize, to: usize) -> usize {
        assert!(
            1 <= from && from < to && to <= self.depth,
            "layer pair {from}->{to} outside 1 <= from < to <= {}",
            self.depth
        );
        (to - 1) * (to - 2) / 2 + (from - 1)
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.values[self.index(from, to)]
    }

    pub fn set(&mut self, from: usize, to: usize, v: f64) {
        let i = self.index(from, to);
        self.values[i] = v;
    }

    /// `(from, to)` in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (2..=self.depth).flat_map(|to| (1..to).map(move |from| (from, to)))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn zip_with(&mut self, other: &PairTable, f: impl Fn(f64, f64) -> f64) {
        assert_eq!(self.depth, other.depth);
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a = f(*a, b);
        }
    }
}

/// Input-dependent properties at one example.
#[derive(Clone, Debug, PartialEq)]
pub struct InputProperties {
    /// `‖h^d‖₂` for `d = 0..D`; entry 0 is `‖x‖₂`.
    pub layer_l2: Vec<f64>,
    /// `min_h |f^d_h|` for hidden layers, entry `d-1` for layer `d`.
    pub min_preact: Vec<f64>,
    /// Ascending `|f^d_h|` per hidden layer.
    pub sorted_abs_preacts: Vec<Vec<f64>>,
    pub jac_row_l2: PairTable,
    pub jac_spec: PairTable,
    pub margin_value: f64,
}

impl InputProperties {
    pub fn depth(&self) -> usize {
        self.jac_row_l2.depth()
    }

    /// Smallest absolute pre-activation over all hidden layers; the
    /// statistic used to rank points for the 5% variant.
    pub fn point_min_preact(&self) -> f64 {
        self.min_preact.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Per hidden layer, the value left after ignoring the smaller half of
    /// units: ascending index `⌈H/2⌉` (clamped to the last unit).
    pub fn median_preact(&self) -> Vec<f64> {
        self.sorted_abs_preacts
            .iter()
            .map(|s| s[median_index(s.len())])
            .collect()
    }
}

pub fn median_index(units: usize) -> usize {
    units.div_ceil(2).min(units - 1)
}

/// Properties at one example given its forward trace.
pub fn properties_from_trace(params: &MlpParams, trace: &ForwardTrace, y: usize) -> Result<InputProperties> {
    let depth = params.depth();
    let layer_l2 = (0..depth).map(|d| crate::linalg::l2_norm(trace.act(d))).collect();
    let mut min_preact = Vec::with_capacity(depth - 1);
    let mut sorted_abs_preacts = Vec::with_capacity(depth - 1);
    for d in 1..depth {
        let mut abs: Vec<f64> = trace.preact(d).iter().map(|v| v.abs()).collect();
        abs.sort_by(f64::total_cmp);
        min_preact.push(abs[0]);
        sorted_abs_preacts.push(abs);
    }

    let mut jac_row_l2 = PairTable::filled(depth, 0.0);
    let mut jac_spec = PairTable::filled(depth, 0.0);
    let cfg = PowerIteration::default();
    for to in 2..=depth {
        let js = jacobians_into(params.weights(), trace.masks(), to, 1);
        for (i, j) in js.iter().enumerate() {
            let from = to - 1 - i;
            jac_row_l2.set(from, to, j.max_row_l2());
            let idx = jac_spec.index(from, to) as u64;
            let mut rng = RngStream::new(SPECTRAL_START_SEED, idx);
            jac_spec.set(from, to, spectral_norm(j, cfg, &mut rng).value);
        }
    }
    Ok(InputProperties {
        layer_l2,
        min_preact,
        sorted_abs_preacts,
        jac_row_l2,
        jac_spec,
        margin_value: margin(trace, y)?,
    })
}

pub fn input_properties(params: &MlpParams, example: &LabeledExample) -> Result<InputProperties> {
    let trace = forward(params, &example.x)?;
    properties_from_trace(params, &trace, example.y)
}

/// Dataset-level norm bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyBounds {
    /// `α^d = max(max_S ‖h^d‖₂, 1)`, `d = 0..D`.
    pub alpha: Vec<f64>,
    /// `γ^d = min_S min_h |f^d_h|` per hidden layer (entry `d-1`).
    pub gamma_min: Vec<f64>,
    /// `γ^d` after discarding the 5% of points with the smallest
    /// pre-activation.
    pub gamma_5pc: Vec<f64>,
    /// `γ^d` from the per-point median unit.
    pub gamma_median: Vec<f64>,
    /// `ζ^{d'→d} = max(max_S ‖J^{d'→d}‖_{2,∞}, 1)`.
    pub zeta: PairTable,
    /// `κ^{d'→d} = max(max_S ‖J^{d'→d}‖₂, 1)`.
    pub kappa: PairTable,
    pub m: usize,
    pub gamma_class: f64,
}

impl PropertyBounds {
    pub fn depth(&self) -> usize {
        self.zeta.depth()
    }

    /// `α^d` for `d` in `0..D`.
    pub fn alpha(&self, d: usize) -> f64 {
        self.alpha[d]
    }

    /// `ζ^{from→to}`, 1 on the diagonal (identity Jacobian).
    pub fn zeta(&self, from: usize, to: usize) -> f64 {
        if from == to {
            1.0
        } else {
            self.zeta.get(from, to)
        }
    }

    /// `κ^{from→to}`, 1 on the diagonal.
    pub fn kappa(&self, from: usize, to: usize) -> f64 {
        if from == to {
            1.0
        } else {
            self.kappa.get(from, to)
        }
    }
}

/// Mergeable reduction state for [`PropertyBounds`]. Maxima and minima
/// are exact under any partitioning; the 5% variant keeps one small record
/// per point and resolves ties canonically, so merging in any order yields
/// identical bounds.
#[derive(Clone, Debug)]
pub struct PropertyAccumulator {
    depth: usize,
    count: usize,
    layer_l2_max: Vec<f64>,
    gamma_min: Vec<f64>,
    gamma_median: Vec<f64>,
    jac_row_max: PairTable,
    jac_spec_max: PairTable,
    per_point_mins: Vec<Vec<f64>>,
}

impl PropertyAccumulator {
    pub fn new(depth: usize) -> Self {
        Self {
            depth,
            count: 0,
            layer_l2_max: vec![0.0; depth],
            gamma_min: vec![f64::INFINITY; depth - 1],
            gamma_median: vec![f64::INFINITY; depth - 1],
            jac_row_max: PairTable::filled(depth, 0.0),
            jac_spec_max: PairTable::filled(depth, 0.0),
            per_point_mins: Vec::new(),
        }
    }

    pub fn push(&mut self, p: &InputProperties) -> Result<()> {
        if p.depth() != self.depth || p.layer_l2.len() != self.depth {
            return Err(Error::DimensionMismatch {
                context: "property depth",
                expected: self.depth,
                found: p.depth(),
            });
        }
        self.count += 1;
        for (m, &v) in self.layer_l2_max.iter_mut().zip(&p.layer_l2) {
            *m = m.max(v);
        }
        for (m, &v) in self.gamma_min.iter_mut().zip(&p.min_preact) {
            *m = m.min(v);
        }
        for (m, v) in self.gamma_median.iter_mut().zip(p.median_preact()) {
            *m = m.min(v);
        }
        self.jac_row_max.zip_with(&p.jac_row_l2, f64::max);
        self.jac_spec_max.zip_with(&p.jac_spec, f64::max);
        self.per_point_mins.push(p.min_preact.clone());
        Ok(())
    }

    pub fn merge(mut self, other: PropertyAccumulator) -> Self {
        assert_eq!(self.depth, other.depth);
        self.count += other.count;
        for (a, b) in self.layer_l2_max.iter_mut().zip(&other.layer_l2_max) {
            *a = a.max(*b);
        }
        for (a, b) in self.gamma_min.iter_mut().zip(&other.gamma_min) {
            *a = a.min(*b);
        }
        for (a, b) in self.gamma_median.iter_mut().zip(&other.gamma_median) {
            *a = a.min(*b);
        }
        self.jac_row_max.zip_with(&other.jac_row_max, f64::max);
        self.jac_spec_max.zip_with(&other.jac_spec_max, f64::max);
        self.per_point_mins.extend(other.per_point_mins);
        self
    }

    pub fn finish(mut self, gamma_class: f64) -> Result<PropertyBounds> {
        if self.count == 0 {
            return Err(Error::invalid("cannot aggregate properties of an empty dataset"));
        }
        let clamp = |v: f64| v.max(1.0);

        // Canonical order: smallest point-min first, ties broken by the
        // per-layer minima so the dropped set does not depend on input order.
        self.per_point_mins.sort_by(|a, b| {
            let ka = a.iter().copied().fold(f64::INFINITY, f64::min);
            let kb = b.iter().copied().fold(f64::INFINITY, f64::min);
            ka.total_cmp(&kb).then_with(|| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            })
        });
        let dropped = five_percent_drop_count(self.count);
        let mut gamma_5pc = vec![f64::INFINITY; self.depth - 1];
        for mins in &self.per_point_mins[dropped..] {
            for (g, &v) in gamma_5pc.iter_mut().zip(mins) {
                *g = g.min(v);
            }
        }

        let mut zeta = self.jac_row_max;
        zeta.values.iter_mut().for_each(|v| *v = clamp(*v));
        let mut kappa = self.jac_spec_max;
        kappa.values.iter_mut().for_each(|v| *v = clamp(*v));
        Ok(PropertyBounds {
            alpha: self.layer_l2_max.into_iter().map(clamp).collect(),
            gamma_min: self.gamma_min,
            gamma_5pc,
            gamma_median: self.gamma_median,
            zeta,
            kappa,
            m: self.count,
            gamma_class,
        })
    }
}

/// `⌈0.05·m⌉`, capped so at least one point survives.
pub fn five_percent_drop_count(m: usize) -> usize {
    (m * 5).div_ceil(100).min(m.saturating_sub(1))
}

pub fn aggregate_bounds(per_input: &[InputProperties], gamma_class: f64) -> Result<PropertyBounds> {
    let first = per_input
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate properties of an empty dataset"))?;
    let mut acc = PropertyAccumulator::new(first.depth());
    for (i, p) in per_input.iter().enumerate() {
        acc.push(p).map_err(|e| Error::AtExample {
            index: i,
            source: Box::new(e),
        })?;
    }
    acc.finish(gamma_class)
}

#[derive(Clone, Debug)]
pub struct DatasetScan {
    pub bounds: PropertyBounds,
    pub per_input: Vec<InputProperties>,
}

/// Properties of every example (in parallel) plus their aggregate.
pub fn scan_dataset(params: &MlpParams, data: &[LabeledExample], gamma_class: f64) -> Result<DatasetScan> {
    if data.is_empty() {
        return Err(Error::invalid("cannot scan an empty dataset"));
    }
    let per_input = data
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            input_properties(params, ex).map_err(|e| Error::AtExample {
                index: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bounds = aggregate_bounds(&per_input, gamma_class)?;
    Ok(DatasetScan { bounds, per_input })
}
