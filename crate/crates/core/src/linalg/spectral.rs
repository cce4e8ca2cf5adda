use super::{l2_norm, Matrix, RngStream};

/// Stopping rule for power iteration on `aᵀa`: stop once the Rayleigh
/// estimate changes by at most `tol` relative between iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerIteration {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 1000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Largest singular value of `a`, started from a random unit vector drawn
/// from `rng`.
pub fn spectral_norm(a: &Matrix, cfg: PowerIteration, rng: &mut RngStream) -> SpectralNorm {
    if a.is_zero() {
        return SpectralNorm {
            value: 0.0,
            iterations: 0,
            converged: true,
        };
    }
    let start: Vec<f64> = (0..a.cols()).map(|_| rng.standard_normal()).collect();
    spectral_norm_warm(a, cfg, &start).0
}

/// Power iteration from a caller-supplied start vector. Also returns the
/// final right singular vector estimate so repeated calls on nearby
/// matrices can reuse it.
pub fn spectral_norm_warm(a: &Matrix, cfg: PowerIteration, start: &[f64]) -> (SpectralNorm, Vec<f64>) {
    assert!(cfg.tol > 0.0, "tolerance must be positive");
    assert_eq!(start.len(), a.cols(), "start vector length");
    let zero = SpectralNorm {
        value: 0.0,
        iterations: 0,
        converged: true,
    };
    if a.is_zero() {
        return (zero, start.to_vec());
    }

    let mut v = start.to_vec();
    if !normalize(&mut v) {
        v = vec![1.0 / (a.cols() as f64).sqrt(); a.cols()];
    }

    let mut prev = f64::NAN;
    for iter in 1..=cfg.max_iters {
        let av = a.matvec_unchecked(&v);
        let lambda = av.iter().map(|x| x * x).sum::<f64>();
        let mut next = a.tr_matvec_unchecked(&av);
        if !normalize(&mut next) {
            // v fell into the null space; the start was degenerate, so fall
            // back to each basis direction in turn.
            let c = (iter - 1) % a.cols();
            next = vec![0.0; a.cols()];
            next[c] = 1.0;
            v = next;
            prev = f64::NAN;
            continue;
        }
        v = next;
        if (lambda - prev).abs() <= cfg.tol * lambda {
            let value = l2_norm(&a.matvec_unchecked(&v)).max(lambda.sqrt());
            return (
                SpectralNorm {
                    value,
                    iterations: iter,
                    converged: true,
                },
                v,
            );
        }
        prev = lambda;
    }
    let value = l2_norm(&a.matvec_unchecked(&v));
    (
        SpectralNorm {
            value,
            iterations: cfg.max_iters,
            converged: false,
        },
        v,
    )
}

fn normalize(v: &mut [f64]) -> bool {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= n);
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(a: &Matrix) -> f64 {
        spectral_norm(a, PowerIteration::default(), &mut RngStream::new(0, 0)).value
    }

    #[test]
    fn identity_and_diagonal() {
        assert!((norm(&Matrix::identity(3)) - 1.0).abs() < 1e-12);
        assert!((norm(&Matrix::from_diag(&[3.0, 1.0, 0.5])) - 3.0).abs() < 1e-9);
    }

    #[test]
    fn golden_ratio_case() {
        // aᵀa = [[1,1],[1,2]] has eigenvalues (3 ± √5)/2.
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0]]);
        let exact = ((3.0 + 5f64.sqrt()) / 2.0).sqrt();
        assert!((exact - 1.618_033_988_7).abs() < 1e-10);
        assert!((norm(&a) - exact).abs() <= 1e-10 * exact);
    }

    #[test]
    fn zero_matrix_short_circuits() {
        let s = spectral_norm(&Matrix::zeros(4, 3), PowerIteration::default(), &mut RngStream::new(0, 0));
        assert_eq!(s.value, 0.0);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn unconverged_is_flagged() {
        let a = super::super::sample_gaussian_matrix(30, 30, 1.0, &mut RngStream::new(5, 5));
        let s = spectral_norm(
            &a,
            PowerIteration {
                tol: 1e-15,
                max_iters: 2,
            },
            &mut RngStream::new(1, 1),
        );
        assert!(!s.converged);
        assert!(s.value > 0.0);
    }

    #[test]
    fn rank_one_with_orthogonal_start() {
        // Start vector orthogonal to the only right singular vector.
        let a = Matrix::from_rows(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let (s, _) = spectral_norm_warm(&a, PowerIteration::default(), &[0.0, 1.0]);
        assert!((s.value - 1.0).abs() < 1e-12);
    }
}
