//! Monte Carlo checks of noise resilience.
//!
//! Two perturbed networks are compared with the original. The *frozen*
//! one keeps every hidden unit at its unperturbed activation state, so the
//! noise propagates linearly; the *free* one recomputes activations. On
//! draws where no activation of layers `< d` flips, both agree up to layer
//! `d`.
//!
//! [`verify_lemma_e1`] estimates, per input, how often a property moves by
//! more than its analytic tolerance while everything before it stayed
//! within the granted tolerances and no activation flipped.
//! [`estimate_mu_hat`] counts training points that are not noise-resilient
//! at a given scale. [`check_gaussian_lemmas`] exercises the Gaussian tail
//! facts the tolerances rely on.
//!
//! All draws for a given `(seed, point, draw)` come from their own stream, so
//! results do not depend on thread scheduling.

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::analysis::{jacobians_into, PairTable, PropertyBounds};
use crate::bounds::{log_factor, log_factor_jac, WeightNorms};
use crate::error::{Error, Result};
use crate::linalg::{l2_norm, sample_gaussian_matrix, spectral_norm_warm, Matrix, PowerIteration, RngStream};
use crate::network::{forward, forward_unchecked, margin_of_logits, ForwardTrace, LabeledExample, MlpParams};

/// Power iteration used for perturbed Jacobians, warm-started from the
/// unperturbed singular vector.
const PERTURBED_SPECTRAL: PowerIteration = PowerIteration {
    tol: 1e-8,
    max_iters: 2000,
};

const BASE_SPECTRAL: PowerIteration = PowerIteration {
    tol: 1e-12,
    max_iters: 5000,
};

/// Entrywise `N(0, σ²)` matrices shaped like the weights.
pub fn sample_noise(params: &MlpParams, sigma: f64, rng: &mut RngStream) -> Vec<Matrix> {
    params
        .weights()
        .iter()
        .map(|w| sample_gaussian_matrix(w.rows(), w.cols(), sigma, rng))
        .collect()
}

/// Layer outputs of the network with activation states pinned.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenOutputs {
    /// `f^d` for `d = 1..=D`, entry `d-1`.
    pub preacts: Vec<Vec<f64>>,
    /// `h^d` for `d = 0..D`, entry `d`.
    pub acts: Vec<Vec<f64>>,
}

impl FrozenOutputs {
    pub fn preact(&self, d: usize) -> &[f64] {
        &self.preacts[d - 1]
    }

    pub fn logits(&self) -> &[f64] {
        self.preacts.last().unwrap()
    }
}

/// Forward pass of `W + U` with the masks of `trace`. `noise` may hold
/// fewer matrices than there are layers; only the first `noise.len()`
/// weights are perturbed.
pub fn frozen_forward(params: &MlpParams, noise: &[Matrix], trace: &ForwardTrace) -> Result<FrozenOutputs> {
    if noise.len() > params.depth() {
        return Err(Error::DimensionMismatch {
            context: "noise layer count",
            expected: params.depth(),
            found: noise.len(),
        });
    }
    for (w, u) in params.weights().iter().zip(noise) {
        if w.shape() != u.shape() {
            return Err(Error::DimensionMismatch {
                context: "noise shape",
                expected: w.rows() * w.cols(),
                found: u.rows() * u.cols(),
            });
        }
    }
    if trace.depth() != params.depth() || trace.input().len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "trace depth",
            expected: params.depth(),
            found: trace.depth(),
        });
    }
    let weights = perturbed_weights(params, noise);
    Ok(frozen_with(&weights, trace.masks(), trace.input()))
}

fn perturbed_weights(params: &MlpParams, noise: &[Matrix]) -> Vec<Matrix> {
    params
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| match noise.get(i) {
            Some(u) => w.add(u).expect("shapes checked"),
            None => w.clone(),
        })
        .collect()
}

fn frozen_with(weights: &[Matrix], masks: &[Vec<bool>], x: &[f64]) -> FrozenOutputs {
    let depth = weights.len();
    let mut acts = vec![x.to_vec()];
    let mut preacts = Vec::with_capacity(depth);
    for d in 1..=depth {
        let f = weights[d - 1].matvec_unchecked(&acts[d - 1]);
        if d < depth {
            let h = f
                .iter()
                .zip(&masks[d - 1])
                .map(|(&v, &on)| if on { v } else { 0.0 })
                .collect();
            acts.push(h);
        }
        preacts.push(f);
    }
    FrozenOutputs { preacts, acts }
}

/// Norms of every tracked property at one (possibly perturbed) network.
#[derive(Clone, Debug)]
struct Snapshot {
    /// `‖h^d‖` for `d = 0..D`.
    layer_l2: Vec<f64>,
    /// `f^d` for `d = 1..=D`.
    preacts: Vec<Vec<f64>>,
    /// Per-row ℓ2 norms of `J^{d'→d}`, indexed like [`PairTable`].
    jac_rows: Vec<Vec<f64>>,
    jac_frob: Vec<f64>,
    jac_spec: Vec<f64>,
    /// Right singular vectors, reused to warm-start perturbed spectral norms.
    jac_vecs: Vec<Vec<f64>>,
    margin: f64,
}

fn snapshot(
    weights: &[Matrix],
    masks: &[Vec<bool>],
    acts: &[Vec<f64>],
    preacts: Vec<Vec<f64>>,
    y: usize,
    starts: Option<&[Vec<f64>]>,
    with_spectral: bool,
) -> Result<Snapshot> {
    let depth = weights.len();
    let table = PairTable::filled(depth, 0.0);
    let n = table.values().len();
    let mut jac_rows = vec![Vec::new(); n];
    let mut jac_frob = vec![0.0; n];
    let mut jac_spec = vec![0.0; n];
    let mut jac_vecs = vec![Vec::new(); n];
    for to in 2..=depth {
        for (i, j) in jacobians_into(weights, masks, to, 1).iter().enumerate() {
            let from = to - 1 - i;
            let k = table.index(from, to);
            let rows = j.row_l2_norms();
            jac_frob[k] = rows.iter().map(|r| r * r).sum::<f64>().sqrt();
            jac_rows[k] = rows;
            if with_spectral {
                let (cfg, start) = match starts {
                    Some(s) => (PERTURBED_SPECTRAL, s[k].clone()),
                    None => (BASE_SPECTRAL, deterministic_start(j.cols(), k)),
                };
                let (s, v) = spectral_norm_warm(j, cfg, &start);
                jac_spec[k] = s.value;
                jac_vecs[k] = v;
            }
        }
    }
    let margin = margin_of_logits(preacts.last().unwrap(), y)?;
    Ok(Snapshot {
        layer_l2: acts.iter().map(|a| l2_norm(a)).collect(),
        preacts,
        jac_rows,
        jac_frob,
        jac_spec,
        jac_vecs,
        margin,
    })
}

fn deterministic_start(n: usize, k: usize) -> Vec<f64> {
    let mut rng = RngStream::new(0x0053_5441_5254, k as u64);
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn trace_parts(trace: &ForwardTrace) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let depth = trace.depth();
    let acts = (0..depth).map(|d| trace.act(d).to_vec()).collect();
    let preacts = (1..=depth).map(|d| trace.preact(d).to_vec()).collect();
    (acts, preacts)
}

/// Absolute change of every property relative to the unperturbed network.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyDeltas {
    /// `|‖h̃^d‖ − ‖h^d‖|` for `d = 0..D` (entry 0 is always 0).
    pub layer_l2: Vec<f64>,
    /// `max_h |f̃^d_h − f^d_h|` for `d = 1..=D`, entry `d-1`.
    pub preact: Vec<f64>,
    /// `max_h |‖J̃_h‖ − ‖J_h‖|` over rows.
    pub jac_row: PairTable,
    pub jac_spec: PairTable,
    pub margin: f64,
}

impl PropertyDeltas {
    pub fn is_zero(&self) -> bool {
        self.layer_l2.iter().all(|&v| v == 0.0)
            && self.preact.iter().all(|&v| v == 0.0)
            && self.jac_row.values().iter().all(|&v| v == 0.0)
            && self.jac_spec.values().iter().all(|&v| v == 0.0)
            && self.margin == 0.0
    }
}

fn deltas(base: &Snapshot, pert: &Snapshot, depth: usize) -> PropertyDeltas {
    let mut jac_row = PairTable::filled(depth, 0.0);
    let mut jac_spec = PairTable::filled(depth, 0.0);
    let pairs: Vec<_> = jac_row.pairs().collect();
    for (from, to) in pairs {
        let k = jac_row.index(from, to);
        let r = base.jac_rows[k]
            .iter()
            .zip(&pert.jac_rows[k])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        jac_row.set(from, to, r);
        jac_spec.set(from, to, (base.jac_spec[k] - pert.jac_spec[k]).abs());
    }
    PropertyDeltas {
        layer_l2: base
            .layer_l2
            .iter()
            .zip(&pert.layer_l2)
            .map(|(a, b)| (a - b).abs())
            .collect(),
        preact: base
            .preacts
            .iter()
            .zip(&pert.preacts)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            .collect(),
        jac_row,
        jac_spec,
        margin: (base.margin - pert.margin).abs(),
    }
}

#[derive(Clone, Debug)]
pub struct PerturbationSample {
    pub noise: Vec<Matrix>,
    pub frozen: FrozenOutputs,
    pub free: ForwardTrace,
    pub frozen_deltas: PropertyDeltas,
    pub free_deltas: PropertyDeltas,
}

/// One noise draw at scale `sigma` and the resulting property changes.
pub fn measure_perturbations(
    params: &MlpParams,
    example: &LabeledExample,
    sigma: f64,
    rng: &mut RngStream,
) -> Result<PerturbationSample> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    let trace = forward(params, &example.x)?;
    let (acts, preacts) = trace_parts(&trace);
    let base = snapshot(params.weights(), trace.masks(), &acts, preacts, example.y, None, true)?;
    let noise = sample_noise(params, sigma, rng);
    let weights = perturbed_weights(params, &noise);

    let frozen = frozen_with(&weights, trace.masks(), &example.x);
    let free = forward_unchecked(&weights, &example.x);
    // With σ = 0 the perturbed network is the original; reuse the base
    // snapshot rather than re-running power iteration at a looser tolerance.
    let (frozen_snap, free_snap) = if sigma == 0.0 {
        (base.clone(), base.clone())
    } else {
        let (facts, fpre) = trace_parts(&free);
        (
            snapshot(
                &weights,
                trace.masks(),
                &frozen.acts,
                frozen.preacts.clone(),
                example.y,
                Some(&base.jac_vecs),
                true,
            )?,
            snapshot(&weights, free.masks(), &facts, fpre, example.y, Some(&base.jac_vecs), true)?,
        )
    };
    let depth = params.depth();
    Ok(PerturbationSample {
        noise,
        frozen_deltas: deltas(&base, &frozen_snap, depth),
        free_deltas: deltas(&base, &free_snap, depth),
        frozen,
        free,
    })
}

/// Empirical failure frequency against a threshold, with a 95%
/// Clopper–Pearson interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FailureEstimate {
    pub trials: usize,
    pub failures: usize,
    pub rate: f64,
    pub threshold: f64,
    pub passed: bool,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl FailureEstimate {
    pub fn new(failures: usize, trials: usize, threshold: f64) -> Self {
        assert!(trials > 0 && failures <= trials);
        let rate = failures as f64 / trials as f64;
        let (ci_low, ci_high) = clopper_pearson(failures, trials, 0.05);
        Self {
            trials,
            failures,
            rate,
            threshold,
            passed: rate <= threshold,
            ci_low,
            ci_high,
        }
    }
}

/// Exact binomial confidence interval at level `1 − alpha`.
pub fn clopper_pearson(k: usize, n: usize, alpha: f64) -> (f64, f64) {
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// The four per-layer statements checked by [`verify_lemma_e1`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Statement {
    /// ℓ2 norm of the output of layer `d`.
    LayerNorm,
    /// Pre-activations of layer `d` (the logits for `d = D`).
    Preact,
    /// Row ℓ2 norms of all `J^{d'→d}`.
    JacRow,
    /// Spectral norms of all `J^{d'→d}`.
    JacSpec,
}

impl Statement {
    pub fn number(self) -> u8 {
        match self {
            Statement::LayerNorm => 1,
            Statement::Preact => 2,
            Statement::JacRow => 3,
            Statement::JacSpec => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Statement::LayerNorm => "layer_l2",
            Statement::Preact => "preact",
            Statement::JacRow => "jac_row",
            Statement::JacSpec => "jac_spec",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatementEstimate {
    pub statement: Statement,
    pub layer: usize,
    pub estimate: FailureEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LemmaReport {
    pub sigma: f64,
    pub delta_hat: f64,
    pub estimates: Vec<StatementEstimate>,
}

impl LemmaReport {
    pub fn all_passed(&self) -> bool {
        self.estimates.iter().all(|e| e.estimate.passed)
    }

    pub fn get(&self, statement: Statement, layer: usize) -> Option<&FailureEstimate> {
        self.estimates
            .iter()
            .find(|e| e.statement == statement && e.layer == layer)
            .map(|e| &e.estimate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyConfig {
    pub trials: usize,
    /// Multiplies every target tolerance; values below 1 make the check
    /// stricter.
    pub tolerance_scale: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            tolerance_scale: 1.0,
            seed: 0,
        }
    }
}

/// Tolerances granted to preceding properties: half their margins.
struct Granted<'a> {
    pb: &'a PropertyBounds,
}

impl Granted<'_> {
    fn out(&self, d: usize) -> f64 {
        if d == 0 {
            0.0
        } else {
            self.pb.alpha(d) / 2.0
        }
    }

    fn preact(&self, d: usize) -> f64 {
        self.pb.gamma_min[d - 1] / 4.0
    }

    fn jac(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.pb.zeta(from, to) / 2.0
        }
    }

    fn spec(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.pb.kappa(from, to) / 2.0
        }
    }
}

/// Per-input norms of `J^{from→to}`, including the identity diagonal.
struct JacNorms<'a> {
    snap: &'a Snapshot,
    table: PairTable,
    dims: &'a [usize],
}

impl JacNorms<'_> {
    fn frob(&self, from: usize, to: usize) -> f64 {
        if from == to {
            (self.dims[to] as f64).sqrt()
        } else {
            self.snap.jac_frob[self.table.index(from, to)]
        }
    }

    fn row(&self, from: usize, to: usize) -> f64 {
        if from == to {
            1.0
        } else {
            self.snap.jac_rows[self.table.index(from, to)]
                .iter()
                .copied()
                .fold(0.0, f64::max)
        }
    }

    fn spec(&self, from: usize, to: usize) -> f64 {
        if from == to {
            1.0
        } else {
            self.snap.jac_spec[self.table.index(from, to)]
        }
    }
}

/// Target tolerances at one input, linear in `sigma`.
struct Targets {
    out: Vec<f64>,
    preact: Vec<f64>,
    jac: PairTable,
    spec: PairTable,
}

fn targets(params: &MlpParams, pb: &PropertyBounds, base: &Snapshot, sigma: f64, delta_hat: f64, scale: f64) -> Targets {
    let depth = params.depth();
    let width = params.width();
    let sqrt_h = (width as f64).sqrt();
    let l = log_factor(depth, width, delta_hat);
    let l4 = log_factor_jac(depth, width, delta_hat);
    let g = Granted { pb };
    let j = JacNorms {
        snap: base,
        table: PairTable::filled(depth, 0.0),
        dims: params.dims(),
    };
    let norms = WeightNorms::of(params);
    let s = sigma * scale;

    let mut out = vec![0.0; depth + 1];
    let mut preact = vec![0.0; depth + 1];
    for d in 1..=depth {
        let mut o = 0.0;
        let mut p = 0.0;
        for dp in 1..=d {
            let h = base.layer_l2[dp - 1] + g.out(dp - 1);
            o += j.frob(dp, d) * h;
            p += j.row(dp, d) * h;
        }
        out[d] = s * o * l;
        preact[d] = s * p * l;
    }
    let mut jac = PairTable::filled(depth, 0.0);
    let mut spec = PairTable::filled(depth, 0.0);
    for d in 2..=depth {
        for dp in 1..d {
            let mut row = j.frob(dp, d - 1) + g.jac(dp, d - 1) * sqrt_h;
            let mut sp = j.spec(dp, d - 1) + g.spec(dp, d - 1);
            for dpp in (dp + 1)..d {
                row += norms.row_l2[d - 1] * j.spec(dpp, d - 1) * (j.frob(dp, dpp - 1) + g.jac(dp, dpp - 1) * sqrt_h);
                sp += norms.spectral[d - 1] * j.spec(dpp, d - 1) * (j.spec(dp, dpp - 1) + g.spec(dp, dpp - 1));
            }
            jac.set(dp, d, s * row * l4);
            spec.set(dp, d, s * sqrt_h * sp * l);
        }
    }
    Targets {
        out,
        preact,
        jac,
        spec,
    }
}

fn first_flip(base: &ForwardTrace, pert: &ForwardTrace) -> usize {
    (1..base.depth())
        .find(|&k| base.mask(k) != pert.mask(k))
        .unwrap_or(base.depth())
}

/// Outcome of one draw: which `(statement, layer)` events occurred.
fn draw_events(
    depth: usize,
    pb: &PropertyBounds,
    t: &Targets,
    dl: &PropertyDeltas,
    flip: usize,
) -> Vec<(Statement, usize, bool)> {
    let g = Granted { pb };
    // within[k]: every property living at layer k stayed inside its granted
    // tolerance.
    let mut within = vec![true; depth + 1];
    for (k, w) in within.iter_mut().enumerate().skip(1) {
        let mut ok = (1..k).all(|dp| dl.jac_row.get(dp, k) <= g.jac(dp, k) && dl.jac_spec.get(dp, k) <= g.spec(dp, k));
        if k < depth {
            ok &= dl.layer_l2[k] <= g.out(k) && dl.preact[k - 1] <= g.preact(k);
        }
        *w = ok;
    }
    let mut out = Vec::new();
    let mut prefix = true;
    for d in 1..=depth {
        let unchanged = flip >= d;
        let jac_to_d_within = (1..d).all(|dp| dl.jac_row.get(dp, d) <= g.jac(dp, d));
        let base = prefix && unchanged;
        if d < depth {
            let e = base && jac_to_d_within && dl.layer_l2[d] > t.out[d];
            out.push((Statement::LayerNorm, d, e));
        }
        let out_ok = d == depth || dl.layer_l2[d] <= g.out(d);
        let e = base && jac_to_d_within && out_ok && dl.preact[d - 1] > t.preact[d];
        out.push((Statement::Preact, d, e));
        if d >= 2 {
            let row = (1..d).any(|dp| dl.jac_row.get(dp, d) > t.jac.get(dp, d));
            out.push((Statement::JacRow, d, base && row));
            let spec = (1..d).any(|dp| dl.jac_spec.get(dp, d) > t.spec.get(dp, d));
            out.push((Statement::JacSpec, d, base && spec));
        }
        prefix &= within[d];
    }
    out
}

/// Estimates, at one input, the probability of each tolerance statement
/// failing under noise of scale `sigma`. Preceding properties are granted
/// half their margins from `pb`; target tolerances use the input's own
/// norms. Passes when the frequency is at most `delta_hat`.
pub fn verify_lemma_e1(
    params: &MlpParams,
    pb: &PropertyBounds,
    example: &LabeledExample,
    sigma: f64,
    delta_hat: f64,
    cfg: VerifyConfig,
) -> Result<LemmaReport> {
    if cfg.trials < 100 {
        return Err(Error::invalid(format!("need at least 100 trials, got {}", cfg.trials)));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(Error::invalid(format!("delta_hat {delta_hat} not in (0, 1)")));
    }
    let depth = params.depth();
    if pb.depth() != depth {
        return Err(Error::DimensionMismatch {
            context: "property bounds depth",
            expected: depth,
            found: pb.depth(),
        });
    }
    let trace = forward(params, &example.x)?;
    let (acts, preacts) = trace_parts(&trace);
    let base = snapshot(params.weights(), trace.masks(), &acts, preacts, example.y, None, true)?;
    let t = targets(params, pb, &base, sigma, delta_hat, cfg.tolerance_scale);
    let root = RngStream::new(cfg.seed, 0x006C_656D_6D61);

    let per_draw: Vec<Vec<(Statement, usize, bool)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|i| -> Result<_> {
            if sigma == 0.0 {
                let dl = deltas(&base, &base, depth);
                return Ok(draw_events(depth, pb, &t, &dl, depth));
            }
            let mut rng = root.derive(i as u64);
            let noise = sample_noise(params, sigma, &mut rng);
            let weights = perturbed_weights(params, &noise);
            let free = forward_unchecked(&weights, &example.x);
            let (fa, fp) = trace_parts(&free);
            let snap = snapshot(&weights, free.masks(), &fa, fp, example.y, Some(&base.jac_vecs), true)?;
            let dl = deltas(&base, &snap, depth);
            Ok(draw_events(depth, pb, &t, &dl, first_flip(&trace, &free)))
        })
        .collect::<Result<_>>()?;

    let labels: Vec<(Statement, usize)> = per_draw[0].iter().map(|&(s, d, _)| (s, d)).collect();
    let mut estimates: Vec<StatementEstimate> = labels
        .iter()
        .enumerate()
        .map(|(i, &(statement, layer))| {
            let failures = per_draw.iter().filter(|ev| ev[i].2).count();
            StatementEstimate {
                statement,
                layer,
                estimate: FailureEstimate::new(failures, cfg.trials, delta_hat),
            }
        })
        .collect();
    estimates.sort_by_key(|e| (e.statement, e.layer));
    Ok(LemmaReport {
        sigma,
        delta_hat,
        estimates,
    })
}

/// Allowed movement of each property: a property fails when it moves by
/// more than half its margin.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyMargins {
    /// Layer-norm margins for `d = 1..D`, entry `d-1`.
    pub layer_l2: Vec<f64>,
    /// Pre-activation margins for hidden layers, entry `d-1`.
    pub preact: Vec<f64>,
    /// Logit margin.
    pub output: f64,
    pub jac_row: PairTable,
    pub jac_spec: PairTable,
}

impl PropertyMargins {
    /// `α^d`, `γ^d/2`, `γ_class`, `ζ`, `κ`.
    pub fn from_bounds(pb: &PropertyBounds) -> Self {
        Self {
            layer_l2: pb.alpha[1..].to_vec(),
            preact: pb.gamma_min.iter().map(|g| g / 2.0).collect(),
            output: pb.gamma_class,
            jac_row: pb.zeta.clone(),
            jac_spec: pb.kappa.clone(),
        }
    }

    pub fn zeros(depth: usize) -> Self {
        Self {
            layer_l2: vec![0.0; depth - 1],
            preact: vec![0.0; depth - 1],
            output: 0.0,
            jac_row: PairTable::filled(depth, 0.0),
            jac_spec: PairTable::filled(depth, 0.0),
        }
    }

    fn depth(&self) -> usize {
        self.jac_row.depth()
    }

    fn violated(&self, dl: &PropertyDeltas) -> bool {
        let depth = self.depth();
        (1..depth).any(|d| dl.layer_l2[d] > self.layer_l2[d - 1] / 2.0 || dl.preact[d - 1] > self.preact[d - 1] / 2.0)
            || dl.preact[depth - 1] > self.output / 2.0
            || self
                .jac_row
                .pairs()
                .any(|(a, b)| dl.jac_row.get(a, b) > self.jac_row.get(a, b) / 2.0)
            || self
                .jac_spec
                .pairs()
                .any(|(a, b)| dl.jac_spec.get(a, b) > self.jac_spec.get(a, b) / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MuHatEstimate {
    /// Fraction of points that are not noise-resilient.
    pub fraction: f64,
    pub failing_points: usize,
    pub m: usize,
    /// Per-point failure probability allowed, `1/√m`.
    pub threshold: f64,
    pub n_noise: usize,
}

/// Fraction of `data` whose estimated probability of some property moving
/// by more than half its margin exceeds `1/√m`. Noise draws share standard
/// normal samples across `sigma` for a fixed seed, so estimates at
/// different scales are directly comparable.
pub fn estimate_mu_hat(
    params: &MlpParams,
    data: &[LabeledExample],
    sigma: f64,
    margins: &PropertyMargins,
    n_noise: usize,
    seed: u64,
) -> Result<MuHatEstimate> {
    if n_noise < 100 {
        return Err(Error::invalid(format!("need at least 100 noise draws, got {n_noise}")));
    }
    if data.is_empty() {
        return Err(Error::invalid("cannot estimate on an empty dataset"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("sigma must be nonnegative, got {sigma}")));
    }
    let depth = params.depth();
    if margins.depth() != depth {
        return Err(Error::DimensionMismatch {
            context: "margin depth",
            expected: depth,
            found: margins.depth(),
        });
    }
    let m = data.len();
    let threshold = 1.0 / (m as f64).sqrt();
    // A point fails once its failure count exceeds this.
    let allowed = (threshold * n_noise as f64).floor() as usize;
    let root = RngStream::new(seed, 0x006D_7568_6174);

    let failing: Vec<bool> = data
        .par_iter()
        .enumerate()
        .map(|(p, ex)| -> Result<bool> {
            let at = |e| Error::AtExample {
                index: p,
                source: Box::new(e),
            };
            if sigma == 0.0 {
                return Ok(false);
            }
            let trace = forward(params, &ex.x).map_err(at)?;
            let (acts, preacts) = trace_parts(&trace);
            let base = snapshot(params.weights(), trace.masks(), &acts, preacts, ex.y, None, true).map_err(at)?;
            let point_rng = root.derive(p as u64);
            let mut failures = 0;
            for i in 0..n_noise {
                let mut rng = point_rng.derive(i as u64);
                let noise = sample_noise(params, 1.0, &mut rng);
                let scaled: Vec<Matrix> = noise.iter().map(|u| u.scale(sigma)).collect();
                let weights = perturbed_weights(params, &scaled);
                let free = forward_unchecked(&weights, &ex.x);
                let (fa, fp) = trace_parts(&free);
                let snap =
                    snapshot(&weights, free.masks(), &fa, fp, ex.y, Some(&base.jac_vecs), true).map_err(at)?;
                if margins.violated(&deltas(&base, &snap, depth)) {
                    failures += 1;
                    if failures > allowed {
                        return Ok(true);
                    }
                }
            }
            Ok(false)
        })
        .collect::<Result<_>>()?;
    let failing_points = failing.iter().filter(|&&f| f).count();
    Ok(MuHatEstimate {
        fraction: failing_points as f64 / m as f64,
        failing_points,
        m,
        threshold,
        n_noise,
    })
}

/// Empirical tail frequency compared with an analytic bound.
#[derive(Clone, Debug, PartialEq)]
pub struct TailCheck {
    pub label: String,
    pub draws: usize,
    pub empirical: f64,
    pub bound: f64,
    pub passed: bool,
}

impl TailCheck {
    fn new(label: String, hits: usize, draws: usize, bound: f64) -> Self {
        let empirical = hits as f64 / draws as f64;
        Self {
            label,
            draws,
            empirical,
            bound,
            passed: empirical <= bound,
        }
    }
}

/// Empirical second moment of `(Ux)_i` against `σ²‖x‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentCheck {
    pub label: String,
    pub draws: usize,
    pub empirical_var: f64,
    pub expected_var: f64,
    pub empirical_mean: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianLemmaReport {
    pub hoeffding: Vec<TailCheck>,
    pub projection: Vec<MomentCheck>,
    pub spectral: Vec<TailCheck>,
}

impl GaussianLemmaReport {
    pub fn all_passed(&self) -> bool {
        self.hoeffding.iter().all(|c| c.passed)
            && self.projection.iter().all(|c| c.passed)
            && self.spectral.iter().all(|c| c.passed)
    }
}

/// `exp(−t²/(2Σσᵢ²))`.
pub fn hoeffding_bound(t: f64, sigmas: &[f64]) -> f64 {
    let v: f64 = sigmas.iter().map(|s| s * s).sum();
    (-t * t / (2.0 * v)).exp()
}

/// `σ√(2H ln(2H/δ))`.
pub fn spectral_threshold(h: usize, sigma: f64, delta: f64) -> f64 {
    sigma * (2.0 * h as f64 * (2.0 * h as f64 / delta).ln()).sqrt()
}

/// Simulates the Gaussian facts the tolerances rest on:
/// one-sided sum tails against `exp(−t²/(2Σσ²))` (and two-sided against
/// twice that), the distribution of `Ux` for Gaussian `U`, and the spectral
/// norm of square Gaussian matrices against `σ√(2H ln(2H/δ))`.
pub fn check_gaussian_lemmas(draws: usize, seed: u64) -> GaussianLemmaReport {
    let root = RngStream::new(seed, 0x0067_6175_7373);

    let sums: [(&str, Vec<f64>, f64); 4] = [
        ("n=1", vec![1.0], 3.0),
        ("n=5", vec![0.5, 1.0, 1.5, 0.2, 0.8], 4.0),
        ("n=20", vec![0.3; 20], 2.0),
        ("n=3,t=0", vec![1.0, 2.0, 3.0], 0.0),
    ];
    let mut hoeffding = Vec::new();
    for (c, (name, sigmas, t)) in sums.iter().enumerate() {
        let (one, two) = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.derive(c as u64).derive(i as u64);
                let s: f64 = sigmas.iter().map(|&sd| rng.normal(sd)).sum();
                ((s >= *t) as usize, (s.abs() > *t) as usize)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let b = hoeffding_bound(*t, sigmas);
        hoeffding.push(TailCheck::new(format!("{name},one-sided"), one, draws, b));
        hoeffding.push(TailCheck::new(format!("{name},two-sided"), two, draws, (2.0 * b).min(1.0)));
    }

    let shapes: [(usize, Vec<f64>, f64); 3] = [
        (3, vec![3.0, 4.0], 1.0),
        (5, vec![1.0, -2.0, 0.5, 0.0], 0.1),
        (2, vec![0.2; 10], 3.0),
    ];
    let mut projection = Vec::new();
    for (c, (rows, x, sigma)) in shapes.iter().enumerate() {
        let (sum, sq) = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.derive(100 + c as u64).derive(i as u64);
                let u = sample_gaussian_matrix(*rows, x.len(), *sigma, &mut rng);
                let v = u.matvec_unchecked(x);
                (v.iter().sum::<f64>(), v.iter().map(|a| a * a).sum::<f64>())
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        let n = (draws * rows) as f64;
        let expected_var = sigma * sigma * x.iter().map(|a| a * a).sum::<f64>();
        let empirical_var = sq / n;
        let empirical_mean = sum / n;
        projection.push(MomentCheck {
            label: format!("{rows}x{}", x.len()),
            draws,
            empirical_var,
            expected_var,
            empirical_mean,
            passed: (empirical_var - expected_var).abs() <= 0.05 * expected_var
                && empirical_mean.abs() <= 0.05 * expected_var.sqrt(),
        });
    }

    let cases: [(usize, f64, f64); 3] = [(32, 1.0, 0.05), (8, 0.5, 0.1), (16, 2.0, 0.01)];
    let mut spectral = Vec::new();
    for (c, &(h, sigma, delta)) in cases.iter().enumerate() {
        let thr = spectral_threshold(h, sigma, delta);
        let hits: usize = (0..draws)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.derive(200 + c as u64).derive(i as u64);
                let u = sample_gaussian_matrix(h, h, sigma, &mut rng);
                // ‖U‖₂ ≤ ‖U‖_F, so only draws whose Frobenius norm clears the
                // threshold need a power iteration.
                if u.frobenius_norm() <= thr {
                    return 0;
                }
                let start = vec![1.0; h];
                (spectral_norm_warm(&u, BASE_SPECTRAL, &start).0.value > thr) as usize
            })
            .sum();
        spectral.push(TailCheck::new(format!("H={h},sigma={sigma},delta={delta}"), hits, draws, delta));
    }

    GaussianLemmaReport {
        hoeffding,
        projection,
        spectral,
    }
}
