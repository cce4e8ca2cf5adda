//! Generalization bound assembly.
//!
//! The bound is a PAC-Bayes bound with a Gaussian posterior of scale `σ*`
//! around the trained weights and a Gaussian prior around the
//! initialization. `σ*` is the largest noise scale under which every
//! tracked property (layer norms, pre-activation magnitudes, Jacobian
//! norms, output margin) provably moves by at most half its margin. Each
//! such requirement is linear in `σ` once the preceding tolerances are
//! fixed, so `σ*` is an exact minimum over [`ToleranceConstraint`]s.
//!
//! All hidden constants are set to 1. Reported values are therefore a
//! concrete instantiation, useful for comparing slopes and orderings.

use std::fmt;

use crate::analysis::PropertyBounds;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, PowerIteration, RngStream};
use crate::network::MlpParams;

/// Attached to every [`BoundReport`].
pub const CAVEAT: &str = "constants instantiated as 1; covering-grid rounding of the norm bounds not applied";

const WEIGHT_SPECTRAL_SEED: u64 = 0x5745_4947_4854;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintKind {
    LayerL2 { layer: usize },
    Preact { layer: usize },
    Output,
    JacRow { from: usize, to: usize },
    JacSpec { from: usize, to: usize },
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintKind::LayerL2 { layer } => write!(f, "layer_l2[{layer}]"),
            ConstraintKind::Preact { layer } => write!(f, "preact[{layer}]"),
            ConstraintKind::Output => write!(f, "output"),
            ConstraintKind::JacRow { from, to } => write!(f, "jac_row[{from}->{to}]"),
            ConstraintKind::JacSpec { from, to } => write!(f, "jac_spec[{from}->{to}]"),
        }
    }
}

/// Requirement `coefficient·σ ≤ margin/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ToleranceConstraint {
    pub kind: ConstraintKind,
    pub margin: f64,
    pub coefficient: f64,
}

impl ToleranceConstraint {
    /// Largest `σ` this constraint allows.
    pub fn sigma_limit(&self) -> f64 {
        if self.coefficient == 0.0 {
            f64::INFINITY
        } else {
            (self.margin / 2.0) / self.coefficient
        }
    }
}

/// Which per-layer pre-activation bound feeds the preact terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaVariant {
    Min,
    FivePercent,
    Median,
}

impl GammaVariant {
    pub fn select(self, pb: &PropertyBounds) -> &[f64] {
        match self {
            GammaVariant::Min => &pb.gamma_min,
            GammaVariant::FivePercent => &pb.gamma_5pc,
            GammaVariant::Median => &pb.gamma_median,
        }
    }
}

/// Per-layer weight norms used by the Jacobian terms, indexed `d-1`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightNorms {
    pub row_l2: Vec<f64>,
    pub spectral: Vec<f64>,
}

impl WeightNorms {
    pub fn of(params: &MlpParams) -> Self {
        let cfg = PowerIteration {
            tol: 1e-12,
            max_iters: 5000,
        };
        let spectral = params
            .weights()
            .iter()
            .enumerate()
            .map(|(i, w)| spectral_norm(w, cfg, &mut RngStream::new(WEIGHT_SPECTRAL_SEED, i as u64)).value)
            .collect();
        Self {
            row_l2: params.weights().iter().map(|w| w.max_row_l2()).collect(),
            spectral,
        }
    }

    fn row(&self, d: usize) -> f64 {
        self.row_l2[d - 1]
    }

    fn spec(&self, d: usize) -> f64 {
        self.spectral[d - 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BTerms {
    pub layer_l2: f64,
    pub preact: f64,
    pub preact_5pc: f64,
    pub preact_median: f64,
    pub output: f64,
    pub jac_row_l2: f64,
    pub jac_spec: f64,
    /// The row-norm term of the spectral-free variant.
    pub jac_row_l2_loose: f64,
}

impl BTerms {
    /// Largest term entering `1/σ*`, with the chosen pre-activation term.
    pub fn max_with(&self, variant: GammaVariant) -> f64 {
        let preact = match variant {
            GammaVariant::Min => self.preact,
            GammaVariant::FivePercent => self.preact_5pc,
            GammaVariant::Median => self.preact_median,
        };
        [self.layer_l2, preact, self.output, self.jac_row_l2, self.jac_spec]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn max_loose(&self) -> f64 {
        [self.layer_l2, self.preact, self.output, self.jac_row_l2_loose]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

fn check_depth(pb: &PropertyBounds, params: &MlpParams) -> Result<usize> {
    let depth = params.depth();
    if pb.depth() != depth || pb.alpha.len() != depth || pb.gamma_min.len() + 1 != depth {
        return Err(Error::DimensionMismatch {
            context: "property bounds depth",
            expected: depth,
            found: pb.depth(),
        });
    }
    Ok(depth)
}

fn preact_term(pb: &PropertyBounds, gammas: &[f64], sqrt_h: f64) -> f64 {
    let depth = pb.depth();
    let mut best = 0.0f64;
    for d in 1..depth {
        let num: f64 = (1..=d).map(|dp| pb.zeta(dp, d) * pb.alpha(dp - 1)).sum();
        let g = gammas[d - 1];
        let v = if g > 0.0 { num / (sqrt_h * g) } else { f64::INFINITY };
        best = best.max(v);
    }
    best
}

/// The B-terms with unit constants. Jacobian terms range over all pairs
/// `1 ≤ d' < d ≤ D`. A zero pre-activation bound yields an infinite preact
/// term and a warning.
pub fn compute_b_terms(pb: &PropertyBounds, params: &MlpParams) -> Result<(BTerms, Vec<String>)> {
    let depth = check_depth(pb, params)?;
    let norms = WeightNorms::of(params);
    let sqrt_h = (params.width() as f64).sqrt();
    let mut warnings = Vec::new();

    let mut layer_l2 = 0.0f64;
    for d in 1..depth {
        let num: f64 = (1..=d).map(|dp| pb.zeta(dp, d) * pb.alpha(dp - 1)).sum();
        layer_l2 = layer_l2.max(num / pb.alpha(d));
    }

    for (name, variant) in [
        ("gamma_min", GammaVariant::Min),
        ("gamma_5pc", GammaVariant::FivePercent),
        ("gamma_median", GammaVariant::Median),
    ] {
        for (i, &g) in variant.select(pb).iter().enumerate() {
            if g <= 0.0 {
                warnings.push(format!("{name} of layer {} is zero; preact term is infinite", i + 1));
            }
        }
    }
    let preact = preact_term(pb, &pb.gamma_min, sqrt_h);
    let preact_5pc = preact_term(pb, &pb.gamma_5pc, sqrt_h);
    let preact_median = preact_term(pb, &pb.gamma_median, sqrt_h);

    let output_num: f64 = (1..=depth).map(|d| pb.zeta(d, depth) * pb.alpha(d - 1)).sum();
    let output = if pb.gamma_class > 0.0 {
        output_num / (sqrt_h * pb.gamma_class)
    } else {
        warnings.push("gamma_class is zero; output term is infinite".into());
        f64::INFINITY
    };

    let mut jac_row_l2 = 0.0f64;
    let mut jac_spec = 0.0f64;
    let mut jac_row_l2_loose = 0.0f64;
    for d in 2..=depth {
        for dp in 1..d {
            let mut row_sum = 0.0;
            let mut spec_sum = 0.0;
            for dpp in (dp + 1)..d {
                row_sum += pb.kappa(dpp, d - 1) * pb.zeta(dp, dpp - 1);
                spec_sum += pb.kappa(dpp, d - 1) * pb.kappa(dp, dpp - 1);
            }
            let row = (pb.zeta(dp, d - 1) + norms.row(d) * row_sum) / pb.zeta(dp, d);
            let spec = (pb.kappa(dp, d - 1) + norms.spec(d) * spec_sum) / pb.kappa(dp, d);
            jac_row_l2 = jac_row_l2.max(row);
            jac_spec = jac_spec.max(spec);
            let loose: f64 = ((dp + 1)..=d)
                .map(|dpp| pb.zeta(dpp, d) * pb.zeta(dp, dpp - 1))
                .sum::<f64>()
                / pb.zeta(dp, d);
            jac_row_l2_loose = jac_row_l2_loose.max(loose);
        }
    }

    Ok((
        BTerms {
            layer_l2,
            preact,
            preact_5pc,
            preact_median,
            output,
            jac_row_l2,
            jac_spec,
            jac_row_l2_loose,
        },
        warnings,
    ))
}

/// Per-input failure budget `δ̂ = 1/(4D√m)`.
pub fn delta_hat(depth: usize, m: usize) -> f64 {
    1.0 / (4.0 * depth as f64 * (m as f64).sqrt())
}

/// `√(2 ln(2DH/δ̂))`.
pub fn log_factor(depth: usize, width: usize, delta_hat: f64) -> f64 {
    (2.0 * (2.0 * (depth * width) as f64 / delta_hat).ln()).sqrt()
}

/// `√(4 ln(DH/δ̂))`.
pub fn log_factor_jac(depth: usize, width: usize, delta_hat: f64) -> f64 {
    (4.0 * ((depth * width) as f64 / delta_hat).ln()).sqrt()
}

/// `√(2 ln(D²H²/δ̂))`.
pub fn log_factor_loose(depth: usize, width: usize, delta_hat: f64) -> f64 {
    let dh = (depth * width) as f64;
    (2.0 * (dh * dh / delta_hat).ln()).sqrt()
}

/// Tolerance already granted to the layer-`d` output norm (`α^d/2`, and 0
/// for the input, which is never perturbed).
fn tol_out(pb: &PropertyBounds, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        pb.alpha(d) / 2.0
    }
}

fn tol_jac(pb: &PropertyBounds, from: usize, to: usize) -> f64 {
    if from == to {
        0.0
    } else {
        pb.zeta(from, to) / 2.0
    }
}

fn tol_spec(pb: &PropertyBounds, from: usize, to: usize) -> f64 {
    if from == to {
        0.0
    } else {
        pb.kappa(from, to) / 2.0
    }
}

/// Output-norm, pre-activation and output-margin constraints, shared by
/// both variants.
fn forward_constraints(pb: &PropertyBounds, gammas: &[f64], depth: usize, width: usize, l: f64) -> Vec<ToleranceConstraint> {
    let sqrt_h = (width as f64).sqrt();
    let mut out = Vec::new();
    let incoming = |d: usize| -> f64 {
        (1..=d)
            .map(|dp| pb.zeta(dp, d) * (pb.alpha(dp - 1) + tol_out(pb, dp - 1)))
            .sum::<f64>()
    };
    for d in 1..depth {
        // Frobenius norm of an H-row Jacobian is at most √H times its
        // largest row norm.
        out.push(ToleranceConstraint {
            kind: ConstraintKind::LayerL2 { layer: d },
            margin: pb.alpha(d),
            coefficient: sqrt_h * incoming(d) * l,
        });
    }
    for d in 1..depth {
        let g = gammas[d - 1];
        out.push(ToleranceConstraint {
            kind: ConstraintKind::Preact { layer: d },
            margin: g / 2.0,
            coefficient: if g > 0.0 { incoming(d) * l } else { f64::INFINITY },
        });
    }
    out.push(ToleranceConstraint {
        kind: ConstraintKind::Output,
        margin: pb.gamma_class,
        coefficient: if pb.gamma_class > 0.0 {
            incoming(depth) * l
        } else {
            f64::INFINITY
        },
    });
    out
}

/// Constraints of the main bound at failure budget `delta_hat`.
pub fn build_tolerance_constraints(
    pb: &PropertyBounds,
    params: &MlpParams,
    delta_hat: f64,
    variant: GammaVariant,
) -> Result<Vec<ToleranceConstraint>> {
    let depth = check_depth(pb, params)?;
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(Error::invalid(format!("delta_hat {delta_hat} not in (0, 1)")));
    }
    let width = params.width();
    let sqrt_h = (width as f64).sqrt();
    let norms = WeightNorms::of(params);
    let l = log_factor(depth, width, delta_hat);
    let l4 = log_factor_jac(depth, width, delta_hat);

    let mut out = forward_constraints(pb, variant.select(pb), depth, width, l);
    for d in 2..=depth {
        for dp in 1..d {
            let mut row_sum = 0.0;
            let mut spec_sum = 0.0;
            for dpp in (dp + 1)..d {
                row_sum += pb.kappa(dpp, d - 1) * (pb.zeta(dp, dpp - 1) + tol_jac(pb, dp, dpp - 1));
                spec_sum += pb.kappa(dpp, d - 1) * (pb.kappa(dp, dpp - 1) + tol_spec(pb, dp, dpp - 1));
            }
            let row = l4 * sqrt_h * ((pb.zeta(dp, d - 1) + tol_jac(pb, dp, d - 1)) + norms.row(d) * row_sum);
            let spec = l * sqrt_h * ((pb.kappa(dp, d - 1) + tol_spec(pb, dp, d - 1)) + norms.spec(d) * spec_sum);
            out.push(ToleranceConstraint {
                kind: ConstraintKind::JacRow { from: dp, to: d },
                margin: pb.zeta(dp, d),
                coefficient: row,
            });
            out.push(ToleranceConstraint {
                kind: ConstraintKind::JacSpec { from: dp, to: d },
                margin: pb.kappa(dp, d),
                coefficient: spec,
            });
        }
    }
    Ok(out)
}

/// Constraints of the spectral-free variant: Jacobian row norms are
/// controlled through other row norms only, and no spectral constraint
/// appears.
pub fn build_loose_constraints(pb: &PropertyBounds, params: &MlpParams, delta_hat: f64) -> Result<Vec<ToleranceConstraint>> {
    let depth = check_depth(pb, params)?;
    if !(delta_hat > 0.0 && delta_hat < 1.0) {
        return Err(Error::invalid(format!("delta_hat {delta_hat} not in (0, 1)")));
    }
    let width = params.width();
    let sqrt_h = (width as f64).sqrt();
    let l = log_factor(depth, width, delta_hat);
    let ll = log_factor_loose(depth, width, delta_hat);
    let mut out = forward_constraints(pb, &pb.gamma_min, depth, width, l);
    for d in 2..=depth {
        for dp in 1..d {
            let sum: f64 = ((dp + 1)..=d)
                .map(|dpp| pb.zeta(dpp, d) * (pb.zeta(dp, dpp - 1) + tol_jac(pb, dp, dpp - 1)))
                .sum();
            out.push(ToleranceConstraint {
                kind: ConstraintKind::JacRow { from: dp, to: d },
                margin: pb.zeta(dp, d),
                coefficient: sqrt_h * ll * sum,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSolution {
    pub sigma_star: f64,
    pub binding: ConstraintKind,
    /// Set when a constraint had an infinite coefficient and forced `σ* = 0`.
    pub degenerate: bool,
}

pub fn solve_sigma_star(constraints: &[ToleranceConstraint]) -> Result<SigmaSolution> {
    let first = constraints
        .first()
        .ok_or_else(|| Error::invalid("no tolerance constraints"))?;
    let mut best = SigmaSolution {
        sigma_star: f64::INFINITY,
        binding: first.kind,
        degenerate: false,
    };
    for c in constraints {
        if c.coefficient.is_infinite() || c.coefficient.is_nan() {
            return Ok(SigmaSolution {
                sigma_star: 0.0,
                binding: c.kind,
                degenerate: true,
            });
        }
        let s = c.sigma_limit();
        if s < best.sigma_star {
            best.sigma_star = s;
            best.binding = c.kind;
        }
    }
    Ok(best)
}

/// `KL(N(W, σ²I) ‖ N(Z, σ²I)) = ‖W − Z‖²_F / (2σ²)`.
pub fn kl_gaussians(params: &MlpParams, sigma: f64) -> Result<f64> {
    kl_from_distance_sq(params.distance_from_init_sq(), sigma)
}

pub fn kl_from_distance_sq(dist_sq: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    Ok(dist_sq / (2.0 * sigma * sigma))
}

/// Number of property groups the union bound runs over: `4D`.
pub fn condition_count(depth: usize) -> usize {
    4 * depth
}

/// `L + (R+1)·[2√((2·kl + ln(2m(R+1)/δ))/(m−1)) + 2/(√m − 1)]` with
/// `R = 4D`.
pub fn assemble_bound(train_margin_loss: f64, kl: f64, depth: usize, m: usize, delta: f64) -> Result<f64> {
    assemble_bound_with(train_margin_loss, kl, condition_count(depth), m, delta)
}

/// As [`assemble_bound`] with an explicit condition count `r`.
pub fn assemble_bound_with(train_margin_loss: f64, kl: f64, r: usize, m: usize, delta: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 samples, got {m}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta {delta} not in (0, 1)")));
    }
    if !(kl >= 0.0) {
        return Err(Error::invalid(format!("KL must be nonnegative, got {kl}")));
    }
    let mf = m as f64;
    let r1 = (r + 1) as f64;
    let inner = (2.0 * kl + (2.0 * mf * r1 / delta).ln()) / (mf - 1.0);
    Ok(train_margin_loss + r1 * (2.0 * inner.sqrt() + 2.0 / (mf.sqrt() - 1.0)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Baselines {
    pub neyshabur18: f64,
    pub bartlett17: f64,
    pub spectral_term: f64,
    pub warnings: Vec<String>,
}

/// Spectral-norm based bounds, measured from initialization:
///
/// ```text
/// neyshabur18   = max‖x‖ · D√H · ∏‖W_d‖₂ / γ · √(Σ ‖W_d − Z_d‖²_F / ‖W_d‖²₂)
/// bartlett17    = max‖x‖ · ∏‖W_d‖₂ / γ · (Σ (‖W_d − Z_d‖_{2,1} / ‖W_d‖₂)^{2/3})^{3/2}
/// spectral_term = max‖x‖ · D · ∏‖W_d‖₂ / γ
/// ```
///
/// `‖·‖_{2,1}` is the sum of column ℓ2 norms.
pub fn baseline_bounds(params: &MlpParams, max_input_norm: f64, gamma_class: f64) -> Result<Baselines> {
    if !(gamma_class > 0.0) {
        return Err(Error::invalid(format!("gamma_class must be positive, got {gamma_class}")));
    }
    let norms = WeightNorms::of(params);
    baselines_from_norms(params, &norms.spectral, max_input_norm, gamma_class)
}

fn baselines_from_norms(params: &MlpParams, spectral: &[f64], max_input_norm: f64, gamma_class: f64) -> Result<Baselines> {
    let depth = params.depth() as f64;
    let sqrt_h = (params.width() as f64).sqrt();
    let prod: f64 = spectral.iter().product();
    let mut warnings = Vec::new();
    let mut frob_ratio = 0.0;
    let mut l21_ratio = 0.0;
    for (d, (w, z)) in params.weights().iter().zip(params.init()).enumerate() {
        let diff = w.sub(z)?;
        let s = spectral[d];
        if s == 0.0 {
            warnings.push(format!("W_{} has zero spectral norm; baselines are infinite", d + 1));
            frob_ratio = f64::INFINITY;
            l21_ratio = f64::INFINITY;
            continue;
        }
        frob_ratio += diff.frobenius_norm_sq() / (s * s);
        l21_ratio += (diff.col_l2_sum() / s).powf(2.0 / 3.0);
    }
    let scale = max_input_norm * prod / gamma_class;
    let (neyshabur18, bartlett17) = if frob_ratio.is_infinite() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (scale * depth * sqrt_h * frob_ratio.sqrt(), scale * l21_ratio.powf(1.5))
    };
    Ok(Baselines {
        neyshabur18,
        bartlett17,
        spectral_term: scale * depth,
        warnings,
    })
}

/// Everything reported for one trained network.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub depth: usize,
    pub width: usize,
    pub m: usize,
    pub gamma_class: f64,
    pub delta: f64,
    pub b: BTerms,
    pub sigma_star: f64,
    pub binding_constraint: String,
    pub sigma_star_5pc: f64,
    pub sigma_star_median: f64,
    pub sigma_star_loose: f64,
    pub kl: f64,
    pub train_margin_loss: f64,
    pub final_bound: f64,
    pub final_bound_5pc: f64,
    pub final_bound_median: f64,
    pub final_bound_loose: f64,
    pub baselines: Baselines,
    /// Bounds with the sample-size and logarithmic factors dropped:
    /// `D·√H·max B·‖W − Z‖_F` (an extra factor `D` for the loose variant).
    pub normalized: NormalizedBounds,
    pub warnings: Vec<String>,
    pub caveat: &'static str,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedBounds {
    pub ours: f64,
    pub ours_5pc: f64,
    pub ours_median: f64,
    pub ours_loose: f64,
}

fn bound_or_inf(train_margin_loss: f64, dist_sq: f64, sigma: f64, r: usize, m: usize, delta: f64) -> Result<(f64, f64)> {
    if sigma > 0.0 && sigma.is_finite() {
        let kl = kl_from_distance_sq(dist_sq, sigma)?;
        Ok((kl, assemble_bound_with(train_margin_loss, kl, r, m, delta)?))
    } else if sigma.is_infinite() {
        Ok((0.0, assemble_bound_with(train_margin_loss, 0.0, r, m, delta)?))
    } else {
        Ok((f64::INFINITY, f64::INFINITY))
    }
}

/// Full audit of a trained network against its training-set property
/// bounds.
pub fn bound_report(
    params: &MlpParams,
    pb: &PropertyBounds,
    train_margin_loss: f64,
    max_input_norm: f64,
    delta: f64,
) -> Result<BoundReport> {
    let depth = check_depth(pb, params)?;
    let m = pb.m;
    let dh = delta_hat(depth, m);
    let (b, mut warnings) = compute_b_terms(pb, params)?;
    let dist_sq = params.distance_from_init_sq();
    let r = condition_count(depth);

    let solve = |variant| -> Result<SigmaSolution> {
        solve_sigma_star(&build_tolerance_constraints(pb, params, dh, variant)?)
    };
    let main = solve(GammaVariant::Min)?;
    let five = solve(GammaVariant::FivePercent)?;
    let median = solve(GammaVariant::Median)?;
    let loose = solve_sigma_star(&build_loose_constraints(pb, params, dh)?)?;
    if main.degenerate {
        warnings.push(format!("sigma_star is 0 ({} has an infinite coefficient); bound is infinite", main.binding));
    }

    let (kl, final_bound) = bound_or_inf(train_margin_loss, dist_sq, main.sigma_star, r, m, delta)?;
    let (_, final_bound_5pc) = bound_or_inf(train_margin_loss, dist_sq, five.sigma_star, r, m, delta)?;
    let (_, final_bound_median) = bound_or_inf(train_margin_loss, dist_sq, median.sigma_star, r, m, delta)?;
    let (_, final_bound_loose) = bound_or_inf(train_margin_loss, dist_sq, loose.sigma_star, r * depth, m, delta)?;

    let baselines = baseline_bounds(params, max_input_norm, pb.gamma_class)?;
    warnings.extend(baselines.warnings.iter().cloned());

    let skeleton = depth as f64 * (params.width() as f64).sqrt() * dist_sq.sqrt();
    let normalized = NormalizedBounds {
        ours: skeleton * b.max_with(GammaVariant::Min),
        ours_5pc: skeleton * b.max_with(GammaVariant::FivePercent),
        ours_median: skeleton * b.max_with(GammaVariant::Median),
        ours_loose: skeleton * depth as f64 * b.max_loose(),
    };

    Ok(BoundReport {
        depth,
        width: params.width(),
        m,
        gamma_class: pb.gamma_class,
        delta,
        b,
        sigma_star: main.sigma_star,
        binding_constraint: main.binding.to_string(),
        sigma_star_5pc: five.sigma_star,
        sigma_star_median: median.sigma_star,
        sigma_star_loose: loose.sigma_star,
        kl,
        train_margin_loss,
        final_bound,
        final_bound_5pc,
        final_bound_median,
        final_bound_loose,
        baselines,
        normalized,
        warnings,
        caveat: CAVEAT,
    })
}
