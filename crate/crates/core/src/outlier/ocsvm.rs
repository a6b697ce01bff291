//! ν-one-class SVM with an RBF kernel.
//!
//! Dual: minimise `½ αᵀKα` subject to `0 ≤ αᵢ ≤ 1/(νn)` and `Σα = 1`, solved by
//! maximal-violating-pair updates. Decision `f(x) = Σ αᵢ K(xᵢ, x) − ρ`; the
//! outlier score is `−f(x)`.

use super::{DetectorKind, OcsvmParams, OutlierError, OutlierScoreVector};
use crate::data::{squared_distance, FeatureMatrix};

pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

#[derive(Debug, Clone)]
pub struct OneClassSvm {
    support: FeatureMatrix,
    alpha: Vec<f64>,
    rho: f64,
    gamma: f64,
    iterations: usize,
    violation: f64,
}

impl OneClassSvm {
    pub fn fit(x: &FeatureMatrix, params: &OcsvmParams) -> Result<Self, OutlierError> {
        let n = x.n_rows();
        if n < 2 {
            return Err(OutlierError::TooFewPoints { detector: DetectorKind::Ocsvm, required: 1, found: n });
        }
        let gamma = params.gamma.unwrap_or(1.0 / x.n_cols() as f64);
        if !(gamma > 0.0) || !(params.nu > 0.0 && params.nu <= 1.0) {
            return Err(OutlierError::InvalidParameter(format!("gamma {gamma} / nu {} out of range", params.nu)));
        }
        let upper = 1.0 / (params.nu * n as f64);

        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            kernel[i * n + i] = 1.0;
            for j in 0..i {
                let k = rbf_kernel(x.row(i), x.row(j), gamma);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }

        // uniform start is feasible for every nu in (0, 1]
        let mut alpha = vec![1.0 / n as f64; n];
        let mut grad: Vec<f64> = (0..n).map(|i| kernel[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();

        let mut iterations = 0;
        let mut violation;
        loop {
            let (up, low, v) = most_violating_pair(&alpha, &grad, upper);
            violation = v;
            if violation <= params.tolerance {
                break;
            }
            if iterations >= params.max_iterations {
                return Err(OutlierError::SolverNotConverged { iterations, violation });
            }
            let (i, j) = (up.expect("violating pair"), low.expect("violating pair"));
            let curvature = (kernel[i * n + i] + kernel[j * n + j] - 2.0 * kernel[i * n + j]).max(1e-12);
            let step = ((grad[j] - grad[i]) / curvature).min(upper - alpha[i]).min(alpha[j]);
            alpha[i] += step;
            alpha[j] -= step;
            for (t, g) in grad.iter_mut().enumerate() {
                *g += step * (kernel[i * n + t] - kernel[j * n + t]);
            }
            iterations += 1;
        }

        // exact gradient for the offset
        let grad: Vec<f64> = (0..n).map(|t| (0..n).map(|s| kernel[t * n + s] * alpha[s]).sum()).collect();
        let rho = offset(&alpha, &grad, upper);

        let keep: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
        Ok(Self { support: x.select(&keep), alpha: keep.iter().map(|&i| alpha[i]).collect(), rho, gamma, iterations, violation })
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.support.rows().zip(&self.alpha).map(|(s, a)| a * rbf_kernel(s, row, self.gamma)).sum::<f64>() - self.rho
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        -self.decision(row)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Dual coefficients of the support vectors (non-zero α only).
    pub fn alphas(&self) -> &[f64] {
        &self.alpha
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// KKT violation at termination.
    pub fn violation(&self) -> f64 {
        self.violation
    }
}

/// `(i, j, G_j − G_i)` where `i` minimises the gradient over coordinates that
/// can grow and `j` maximises it over coordinates that can shrink.
fn most_violating_pair(alpha: &[f64], grad: &[f64], upper: f64) -> (Option<usize>, Option<usize>, f64) {
    let mut up: Option<usize> = None;
    let mut low: Option<usize> = None;
    for t in 0..alpha.len() {
        if alpha[t] < upper && up.is_none_or(|i| grad[t] < grad[i]) {
            up = Some(t);
        }
        if alpha[t] > 0.0 && low.is_none_or(|j| grad[t] > grad[j]) {
            low = Some(t);
        }
    }
    let violation = match (up, low) {
        (Some(i), Some(j)) => grad[j] - grad[i],
        _ => 0.0,
    };
    (up, low, violation)
}

fn offset(alpha: &[f64], grad: &[f64], upper: f64) -> f64 {
    let eps = 1e-12 * upper;
    let free: Vec<f64> = alpha.iter().zip(grad).filter(|(&a, _)| a > eps && a < upper - eps).map(|(_, &g)| g).collect();
    if !free.is_empty() {
        return free.iter().sum::<f64>() / free.len() as f64;
    }
    // rho lies between the bounded gradients: G ≤ ρ at the upper bound, G ≥ ρ at zero
    let at_upper = alpha.iter().zip(grad).filter(|(&a, _)| a >= upper - eps).map(|(_, &g)| g).fold(f64::NEG_INFINITY, f64::max);
    let at_zero = alpha.iter().zip(grad).filter(|(&a, _)| a <= eps).map(|(_, &g)| g).fold(f64::INFINITY, f64::min);
    match (at_upper.is_finite(), at_zero.is_finite()) {
        (true, true) => 0.5 * (at_upper + at_zero),
        (true, false) => at_upper,
        (false, true) => at_zero,
        (false, false) => 0.0,
    }
}

/// Fits on `train`, scores every row of `eval`.
pub fn ocsvm_scores(train: &FeatureMatrix, eval: &FeatureMatrix, params: &OcsvmParams) -> Result<OutlierScoreVector, OutlierError> {
    let model = OneClassSvm::fit(train, params)?;
    let scores = eval.rows().map(|r| model.score(r)).collect();
    Ok(OutlierScoreVector { detector: DetectorKind::Ocsvm, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    fn blob(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = seeded(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn kernel_identity() {
        for g in [1e-3, 0.5, 10.0] {
            assert_eq!(rbf_kernel(&[1.0, -2.0], &[1.0, -2.0], g), 1.0);
        }
    }

    #[test]
    fn duplicate_pair_splits_mass_evenly() {
        let x = FeatureMatrix::from_rows(&[[0.3, 0.7], [0.3, 0.7]]).unwrap();
        let m = OneClassSvm::fit(&x, &OcsvmParams::default()).unwrap();
        assert_eq!(m.alphas(), &[0.5, 0.5]);
        let at_p = m.decision(&[0.3, 0.7]);
        for i in -10..=10 {
            for j in -10..=10 {
                let q = [0.3 + i as f64 * 0.1, 0.7 + j as f64 * 0.1];
                assert!(m.decision(&q) <= at_p);
            }
        }
    }

    #[test]
    fn far_point_scores_rho() {
        let x = blob(60, 1);
        let m = OneClassSvm::fit(&x, &OcsvmParams::default()).unwrap();
        let far = m.score(&[1e3, -1e3]);
        assert!((far - m.rho()).abs() < 1e-12);
    }

    #[test]
    fn solution_satisfies_constraints() {
        for (seed, nu) in [(2, 0.5), (3, 0.1), (4, 0.9), (5, 1.0)] {
            let x = blob(80, seed);
            let p = OcsvmParams { nu, ..Default::default() };
            let m = OneClassSvm::fit(&x, &p).unwrap();
            let sum: f64 = m.alphas().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
            assert!(m.violation() <= 1e-6);
            let upper = 1.0 / (nu * 80.0);
            assert!(m.alphas().iter().all(|&a| a > 0.0 && a <= upper * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let x = blob(50, 6);
        let p = OcsvmParams { max_iterations: 1, tolerance: 1e-12, ..Default::default() };
        assert!(matches!(OneClassSvm::fit(&x, &p), Err(OutlierError::SolverNotConverged { .. })));
    }

    #[test]
    fn outlying_eval_point_scores_higher() {
        let x = blob(100, 7);
        let eval = FeatureMatrix::from_rows(&[[0.0, 0.0], [6.0, 6.0]]).unwrap();
        let s = ocsvm_scores(&x, &eval, &OcsvmParams::default()).unwrap();
        assert!(s.scores[1] > s.scores[0]);
    }

    #[test]
    fn needs_two_points() {
        let x = FeatureMatrix::from_rows(&[[0.0]]).unwrap();
        assert!(matches!(OneClassSvm::fit(&x, &OcsvmParams::default()), Err(OutlierError::TooFewPoints { .. })));
    }
}
