//! Monte Carlo checks of noise resilience on a trained checkpoint.

use log::info;

use pacnr::analysis::PropertyBounds;
use pacnr::bounds::delta_hat;
use pacnr::data::Dataset;
use pacnr::network::MlpParams;
use pacnr::perturb::{estimate_mu_hat, verify_lemma_e1, PropertyMargins, VerifyConfig};

use crate::error::CliResult;
use crate::report::fmt_f64;

pub const COLUMNS: [&str; 12] = [
    "point",
    "statement",
    "layer",
    "sigma",
    "sigma_over_star",
    "trials",
    "failures",
    "rate",
    "threshold",
    "pass",
    "ci_low",
    "ci_high",
];

/// Multiples of σ* checked when no explicit grid is given.
pub const DEFAULT_RATIOS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

#[derive(Clone, Debug)]
pub struct NoiseCheck {
    pub sigmas: Vec<f64>,
    pub trials: usize,
    /// Number of training points (from the front of the split) checked
    /// statement by statement.
    pub points: usize,
    /// Noise draws per point for the resilient-fraction estimate; 0 skips it.
    pub mu_noise: usize,
    /// Training points used for the resilient-fraction estimate; 0 means all.
    pub mu_points: usize,
    pub seed: u64,
}

pub struct NoiseOutcome {
    pub rows: Vec<Vec<String>>,
    /// Every statement passed at every σ up to σ*.
    pub passed_up_to_star: bool,
}

/// Lemma checks per (point, statement, layer, σ), then one `mu_hat` row per
/// σ. `mu_hat` rows carry the failing-point count in `failures`, the
/// fraction in `rate`, the per-point threshold `1/√n` in `threshold` and an
/// empty `pass` cell.
pub fn run_noise_check(
    params: &MlpParams,
    pb: &PropertyBounds,
    sigma_star: f64,
    train: &Dataset,
    check: &NoiseCheck,
) -> CliResult<NoiseOutcome> {
    let dh = delta_hat(params.depth(), pb.m);
    let ratio = |s: f64| if sigma_star > 0.0 { fmt_f64(s / sigma_star) } else { String::new() };
    let mut rows = Vec::new();
    let mut passed = true;
    let points = check.points.min(train.len());
    for &sigma in &check.sigmas {
        for (p, ex) in train.examples[..points].iter().enumerate() {
            let cfg = VerifyConfig {
                trials: check.trials,
                tolerance_scale: 1.0,
                seed: check.seed.wrapping_add(p as u64),
            };
            let rep = verify_lemma_e1(params, pb, ex, sigma, dh, cfg)?;
            info!("sigma {sigma:.4e} point {p}: all passed = {}", rep.all_passed());
            if sigma <= sigma_star && !rep.all_passed() {
                passed = false;
            }
            for e in &rep.estimates {
                let f = &e.estimate;
                rows.push(vec![
                    p.to_string(),
                    e.statement.name().to_string(),
                    e.layer.to_string(),
                    fmt_f64(sigma),
                    ratio(sigma),
                    f.trials.to_string(),
                    f.failures.to_string(),
                    fmt_f64(f.rate),
                    fmt_f64(f.threshold),
                    f.passed.to_string(),
                    fmt_f64(f.ci_low),
                    fmt_f64(f.ci_high),
                ]);
            }
        }
        if check.mu_noise > 0 {
            let n = if check.mu_points == 0 { train.len() } else { check.mu_points.min(train.len()) };
            let margins = PropertyMargins::from_bounds(pb);
            let mu = estimate_mu_hat(params, &train.examples[..n], sigma, &margins, check.mu_noise, check.seed)?;
            rows.push(vec![
                "all".into(),
                "mu_hat".into(),
                String::new(),
                fmt_f64(sigma),
                ratio(sigma),
                mu.n_noise.to_string(),
                mu.failing_points.to_string(),
                fmt_f64(mu.fraction),
                fmt_f64(mu.threshold),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
    }
    Ok(NoiseOutcome {
        rows,
        passed_up_to_star: passed,
    })
}
