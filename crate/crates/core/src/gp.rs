//! Gaussian process regression with a configurable prior mean and the
//! Matern 3/2 kernel: posterior prediction, log marginal likelihood, and
//! derivative-free hyperparameter optimization in log space.
//!
//! The same machinery backs two very different regressions in this crate:
//! the one-dimensional chordal-distance model over frequency used by the
//! selection loop, and the inverse-dynamics residual model over trajectory
//! features used by the online tracker.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Prior mean function over input vectors.
pub type PriorMean = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The zero prior mean.
pub fn zero_mean() -> PriorMean {
    Arc::new(|_| 0.0)
}

/// Kernel hyperparameters: signal variance, lengthscale, noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Prior/signal variance `sigma_f^2`.
    pub signal_variance: f64,
    /// Lengthscale `l` in input units.
    pub lengthscale: f64,
    /// Noise variance `sigma_n^2`.
    pub noise_variance: f64,
}

impl Hyperparams {
    pub fn new(signal_variance: f64, lengthscale: f64, noise_variance: f64) -> Result<Self> {
        let hp = Self {
            signal_variance,
            lengthscale,
            noise_variance,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("signal variance", self.signal_variance),
            ("lengthscale", self.lengthscale),
            ("noise variance", self.noise_variance),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CoreError::Config(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Box bounds for the hyperparameter search, one `[lo, hi]` interval per
/// parameter. A collapsed interval pins the parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperBounds {
    pub signal_variance: (f64, f64),
    pub lengthscale: (f64, f64),
    pub noise_variance: (f64, f64),
}

impl HyperBounds {
    /// Default bounds scaled to the spread of the training inputs:
    /// `sigma_f^2 in [1e-4, 10]`, `l in [1e-3 r, 10 r]` with `r` the input
    /// range, `sigma_n^2 in [1e-8, 1]`.
    pub fn for_input_range(range: f64) -> Self {
        let r = if range.is_finite() && range > 0.0 { range } else { 1.0 };
        Self {
            signal_variance: (1e-4, 10.0),
            lengthscale: (1e-3 * r, 10.0 * r),
            noise_variance: (1e-8, 1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("signal variance", self.signal_variance),
            ("lengthscale", self.lengthscale),
            ("noise variance", self.noise_variance),
        ] {
            if !(lo > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(CoreError::Config(format!(
                    "{name} bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(())
    }
}

/// Largest per-coordinate spread of a set of input vectors, used to scale
/// default lengthscale bounds.
pub fn input_spread(inputs: &[Vec<f64>]) -> f64 {
    if inputs.is_empty() {
        return 1.0;
    }
    let dim = inputs[0].len();
    let mut spread = 0.0_f64;
    for d in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for x in inputs {
            lo = lo.min(x[d]);
            hi = hi.max(x[d]);
        }
        spread = spread.max(hi - lo);
    }
    if spread > 0.0 {
        spread
    } else {
        1.0
    }
}

fn euclidean(x1: &[f64], x2: &[f64]) -> f64 {
    x1.iter()
        .zip(x2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Matern 3/2 kernel
/// `sigma_f^2 (1 + sqrt(3) r / l) exp(-sqrt(3) r / l)` with `r = |x1 - x2|`.
pub fn matern32(x1: &[f64], x2: &[f64], hp: &Hyperparams) -> f64 {
    debug_assert_eq!(x1.len(), x2.len());
    let s = 3.0_f64.sqrt() * euclidean(x1, x2) / hp.lengthscale;
    hp.signal_variance * (1.0 + s) * (-s).exp()
}

/// A fitted Gaussian process. Immutable after [`fit`]; `predict` is
/// read-only and safe to call concurrently.
#[derive(Clone)]
pub struct GPModel {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    prior_mean: PriorMean,
    prior_at_inputs: Vec<f64>,
    hyperparams: Hyperparams,
    chol: Option<nalgebra::linalg::Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
    jitter: f64,
}

impl std::fmt::Debug for GPModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GPModel")
            .field("len", &self.inputs.len())
            .field("hyperparams", &self.hyperparams)
            .field("jitter", &self.jitter)
            .finish()
    }
}

impl GPModel {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyperparams
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Jitter added to reach a successful factorization (0 when none was
    /// needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Posterior mean and variance at a test input. The variance is clamped
    /// into `[0, k(x, x)]`; clamping beyond round-off is logged.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let prior = (self.prior_mean)(x);
        let kxx = matern32(x, x, &self.hyperparams);
        if self.inputs.is_empty() {
            return (prior, kxx);
        }
        let k_star = DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| matern32(x, xi, &self.hyperparams)),
        );
        let mean = prior + k_star.dot(&self.weights);
        let chol = self.chol.as_ref().expect("non-empty model retains its factorization");
        let solved = chol.solve(&k_star);
        let raw = kxx - k_star.dot(&solved);
        let variance = raw.clamp(0.0, kxx);
        if raw < -1e-8 {
            log::debug!("posterior variance clamped from {raw:.3e} to 0");
        }
        (mean, variance)
    }
}

fn kernel_matrix(inputs: &[Vec<f64>], hp: &Hyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance;
        for j in 0..i {
            let v = matern32(&inputs[i], &inputs[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Factorize `K + (sigma_n^2 + jitter) I`, escalating jitter from
/// `1e-9 sigma_f^2` by doubling up to `1e-3 sigma_f^2`.
fn factorize(
    k: &DMatrix<f64>,
    hp: &Hyperparams,
) -> Result<(nalgebra::linalg::Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let attempt = |extra: f64| {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += hp.noise_variance + extra;
        }
        m.cholesky()
    };
    if let Some(c) = attempt(0.0) {
        return Ok((c, 0.0));
    }
    let mut jitter = 1e-9 * hp.signal_variance;
    let max_jitter = 1e-3 * hp.signal_variance;
    while jitter <= max_jitter {
        if let Some(c) = attempt(jitter) {
            log::debug!("cholesky needed jitter {jitter:.3e}");
            return Ok((c, jitter));
        }
        jitter *= 2.0;
    }
    Err(CoreError::IllConditioned(format!(
        "cholesky failed for {n} points even with jitter {max_jitter:.3e}"
    )))
}

/// Fit a GP: build the kernel matrix, factorize it, and precompute the
/// weight vector `(K + sigma_n^2 I)^{-1} (targets - prior(inputs))`.
/// An empty dataset yields the prior itself.
pub fn fit(
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_mean: PriorMean,
    hp: &Hyperparams,
) -> Result<GPModel> {
    hp.validate()?;
    if inputs.len() != targets.len() {
        return Err(CoreError::Dimension(format!(
            "{} inputs vs {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    if let Some(dim) = inputs.first().map(Vec::len) {
        if inputs.iter().any(|x| x.len() != dim) {
            return Err(CoreError::Dimension("inconsistent input dimensions".into()));
        }
    }
    let prior_at_inputs: Vec<f64> = inputs.iter().map(|x| prior_mean(x)).collect();
    if inputs.is_empty() {
        return Ok(GPModel {
            inputs: Vec::new(),
            targets: Vec::new(),
            prior_mean,
            prior_at_inputs,
            hyperparams: *hp,
            chol: None,
            weights: DVector::zeros(0),
            jitter: 0.0,
        });
    }
    let k = kernel_matrix(inputs, hp);
    let (chol, jitter) = factorize(&k, hp)?;
    let residuals = DVector::from_iterator(
        targets.len(),
        targets.iter().zip(&prior_at_inputs).map(|(t, p)| t - p),
    );
    let weights = chol.solve(&residuals);
    Ok(GPModel {
        inputs: inputs.to_vec(),
        targets: targets.to_vec(),
        prior_mean,
        prior_at_inputs,
        hyperparams: *hp,
        chol: Some(chol),
        weights,
        jitter,
    })
}

/// Log marginal likelihood of the training data under the model:
/// `-1/2 r^T (K + sigma_n^2 I)^{-1} r - 1/2 log det(K + sigma_n^2 I)
///  - D/2 log(2 pi)`.
pub fn log_marginal_likelihood(model: &GPModel) -> Result<f64> {
    let d = model.targets.len();
    if d == 0 {
        return Err(CoreError::Config(
            "log marginal likelihood needs at least one data point".into(),
        ));
    }
    let chol = model.chol.as_ref().expect("non-empty model retains its factorization");
    let residuals = DVector::from_iterator(
        d,
        model
            .targets
            .iter()
            .zip(&model.prior_at_inputs)
            .map(|(t, p)| t - p),
    );
    let quad = residuals.dot(&model.weights);
    let log_det: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>() * 2.0;
    Ok(-0.5 * quad - 0.5 * log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Evidence of a hyperparameter candidate; `None` when the factorization
/// fails outright.
fn evidence(
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_mean: &PriorMean,
    hp: &Hyperparams,
) -> Option<f64> {
    let model = fit(inputs, targets, Arc::clone(prior_mean), hp).ok()?;
    let lml = log_marginal_likelihood(&model).ok()?;
    lml.is_finite().then_some(lml)
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximize the marginal likelihood over box bounds by the best of
/// `n_restarts` local searches from seeded random starts. Each local search
/// cycles coordinate-wise over the three log-hyperparameters with a coarse
/// grid scan followed by a golden-section refinement.
pub fn optimize_hyperparameters(
    inputs: &[Vec<f64>],
    targets: &[f64],
    prior_mean: PriorMean,
    bounds: &HyperBounds,
    n_restarts: usize,
    seed: u64,
) -> Result<Hyperparams> {
    bounds.validate()?;
    if inputs.len() < 2 {
        return Err(CoreError::Config(format!(
            "hyperparameter optimization needs at least 2 points, got {}",
            inputs.len()
        )));
    }
    if n_restarts == 0 {
        return Err(CoreError::Config("need at least one restart".into()));
    }

    let lo = [
        bounds.signal_variance.0.ln(),
        bounds.lengthscale.0.ln(),
        bounds.noise_variance.0.ln(),
    ];
    let hi = [
        bounds.signal_variance.1.ln(),
        bounds.lengthscale.1.ln(),
        bounds.noise_variance.1.ln(),
    ];
    let to_hp = |p: &[f64; 3]| Hyperparams {
        signal_variance: p[0].exp(),
        lengthscale: p[1].exp(),
        noise_variance: p[2].exp(),
    };
    let eval = |p: &[f64; 3]| evidence(inputs, targets, &prior_mean, &to_hp(p));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, [f64; 3])> = None;
    let mut consider = |lml: Option<f64>, p: [f64; 3]| {
        if let Some(v) = lml {
            if best.map_or(true, |(b, _)| v > b) {
                best = Some((v, p));
            }
        }
    };

    for restart in 0..n_restarts {
        // First start at the center of the log box, the rest log-uniform.
        let mut point = [0.0_f64; 3];
        for i in 0..3 {
            point[i] = if restart == 0 {
                0.5 * (lo[i] + hi[i])
            } else if hi[i] > lo[i] {
                rng.random_range(lo[i]..hi[i])
            } else {
                lo[i]
            };
        }
        let mut current = eval(&point);
        consider(current, point);
        if current.is_none() {
            continue;
        }

        for _sweep in 0..3 {
            let before = current;
            for coord in 0..3 {
                if hi[coord] - lo[coord] < 1e-12 {
                    continue;
                }
                // Coarse scan of the full interval.
                let mut scan_best = (current.unwrap_or(f64::NEG_INFINITY), point[coord]);
                let n_scan = 9;
                for s in 0..n_scan {
                    let v = lo[coord]
                        + (hi[coord] - lo[coord]) * s as f64 / (n_scan - 1) as f64;
                    let mut cand = point;
                    cand[coord] = v;
                    if let Some(lml) = eval(&cand) {
                        consider(Some(lml), cand);
                        if lml > scan_best.0 {
                            scan_best = (lml, v);
                        }
                    }
                }
                // Golden-section refinement around the scan winner.
                let step = (hi[coord] - lo[coord]) / (n_scan - 1) as f64;
                let mut a = (scan_best.1 - step).max(lo[coord]);
                let mut b = (scan_best.1 + step).min(hi[coord]);
                for _ in 0..10 {
                    let x1 = b - GOLDEN * (b - a);
                    let x2 = a + GOLDEN * (b - a);
                    let mut c1 = point;
                    c1[coord] = x1;
                    let mut c2 = point;
                    c2[coord] = x2;
                    let f1 = eval(&c1).unwrap_or(f64::NEG_INFINITY);
                    let f2 = eval(&c2).unwrap_or(f64::NEG_INFINITY);
                    consider(Some(f1).filter(|v| v.is_finite()), c1);
                    consider(Some(f2).filter(|v| v.is_finite()), c2);
                    if f1 >= f2 {
                        b = x2;
                    } else {
                        a = x1;
                    }
                }
                let mid = 0.5 * (a + b);
                let mut cand = point;
                cand[coord] = mid;
                let f_mid = eval(&cand);
                if f_mid.unwrap_or(f64::NEG_INFINITY)
                    >= current.unwrap_or(f64::NEG_INFINITY).max(scan_best.0)
                {
                    point = cand;
                    current = f_mid;
                } else {
                    point[coord] = scan_best.1;
                    current = Some(scan_best.0);
                }
                consider(current, point);
            }
            let gain = current.unwrap_or(f64::NEG_INFINITY)
                - before.unwrap_or(f64::NEG_INFINITY);
            if gain.abs() < 1e-6 {
                break;
            }
        }
    }

    match best {
        Some((_, p)) => Ok(to_hp(&p)),
        None => Err(CoreError::IllConditioned(
            "all hyperparameter restarts failed to factorize".into(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(sf2: f64, l: f64, sn2: f64) -> Hyperparams {
        Hyperparams::new(sf2, l, sn2).unwrap()
    }

    #[test]
    fn matern_reference_values() {
        let h = hp(1.0, 1.0, 0.1);
        assert_eq!(matern32(&[0.3], &[0.3], &h), 1.0);
        let v = matern32(&[0.0], &[1.0], &h);
        let s = 3.0_f64.sqrt();
        assert!((v - (1.0 + s) * (-s).exp()).abs() < 1e-12);
        assert!((v - 0.48335).abs() < 1e-4);
        assert!(matern32(&[0.0], &[31.0], &h) < 1e-12);
    }

    #[test]
    fn matern_scales_with_signal_variance() {
        let h = hp(2.5, 0.7, 0.1);
        assert_eq!(matern32(&[1.0, 2.0], &[1.0, 2.0], &h), 2.5);
        assert!(matern32(&[0.0, 0.0], &[0.5, 0.5], &h) < 2.5);
    }

    #[test]
    fn empty_model_returns_prior() {
        let prior: PriorMean = Arc::new(|x: &[f64]| 3.0 * x[0]);
        let h = hp(1.3, 1.0, 0.1);
        let model = fit(&[], &[], prior, &h).unwrap();
        let (mean, var) = model.predict(&[2.0]);
        assert_eq!(mean, 6.0);
        assert_eq!(var, 1.3);
    }

    #[test]
    fn duplicate_inputs_with_noise_succeed() {
        let inputs = vec![vec![1.0], vec![1.0]];
        let targets = vec![0.0, 1.0];
        let model = fit(&inputs, &targets, zero_mean(), &hp(1.0, 1.0, 0.1)).unwrap();
        let (mean, _) = model.predict(&[1.0]);
        assert!(mean.is_finite());
    }

    #[test]
    fn one_point_posterior_closed_form() {
        let model = fit(&[vec![0.7]], &[2.0], zero_mean(), &hp(1.0, 1.0, 1.0)).unwrap();
        let (mean, var) = model.predict(&[0.7]);
        assert!((mean - 1.0).abs() < 1e-12); // sf2/(sf2+sn2) * y = 0.5 * 2
        assert!((var - 0.5).abs() < 1e-12); // sf2 - sf4/(sf2+sn2)
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let inputs: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (x[0] * 0.5).sin()).collect();
        let model = fit(&inputs, &targets, zero_mean(), &hp(1.0, 1.5, 1e-9)).unwrap();
        for (x, t) in inputs.iter().zip(&targets) {
            let (mean, _) = model.predict(x);
            assert!((mean - t).abs() < 1e-5);
        }
    }

    #[test]
    fn reverts_to_prior_far_from_data() {
        let prior: PriorMean = Arc::new(|x: &[f64]| 0.25 * x[0] + 1.0);
        let h = hp(0.8, 0.5, 0.01);
        let model = fit(&[vec![0.0]], &[5.0], Arc::clone(&prior), &h).unwrap();
        let far = [40.0];
        let (mean, var) = model.predict(&far);
        assert!((mean - prior(&far)).abs() < 1e-8);
        assert!((var - 0.8).abs() < 1e-8);
    }

    #[test]
    fn cached_factorization_matches_dense_solve() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let inputs: Vec<Vec<f64>> = (0..12)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let targets: Vec<f64> =
            inputs.iter().map(|x| (x[0] - x[1]).tanh() + 0.3 * x[1]).collect();
        let h = hp(0.9, 0.8, 0.05);
        let model = fit(&inputs, &targets, zero_mean(), &h).unwrap();

        // Naive dense-inverse path.
        let k = kernel_matrix(&inputs, &h);
        let n = inputs.len();
        let mut ky = k.clone();
        for i in 0..n {
            ky[(i, i)] += h.noise_variance;
        }
        let ky_inv = ky.try_inverse().unwrap();
        let y = DVector::from_column_slice(&targets);

        for _ in 0..5 {
            let x = vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let k_star =
                DVector::from_iterator(n, inputs.iter().map(|xi| matern32(&x, xi, &h)));
            let mean_dense = k_star.dot(&(&ky_inv * &y));
            let var_dense = h.signal_variance - k_star.dot(&(&ky_inv * &k_star));
            let (mean, var) = model.predict(&x);
            assert!((mean - mean_dense).abs() < 1e-10);
            assert!((var - var_dense.max(0.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn lml_scalar_reference() {
        let model = fit(&[vec![0.0]], &[0.0], zero_mean(), &hp(1.0, 1.0, 1.0)).unwrap();
        let lml = log_marginal_likelihood(&model).unwrap();
        let expected = -0.5 * 2.0_f64.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lml - expected).abs() < 1e-12);
        assert!((lml - -1.2655).abs() < 1e-4);
    }

    #[test]
    fn lml_is_permutation_invariant() {
        let inputs = vec![vec![0.0], vec![1.0], vec![2.5], vec![-0.7]];
        let targets = vec![0.4, -0.2, 1.0, 0.3];
        let h = hp(1.0, 1.2, 0.05);
        let a = log_marginal_likelihood(&fit(&inputs, &targets, zero_mean(), &h).unwrap()).unwrap();
        let perm = [2, 0, 3, 1];
        let pi: Vec<Vec<f64>> = perm.iter().map(|&i| inputs[i].clone()).collect();
        let pt: Vec<f64> = perm.iter().map(|&i| targets[i]).collect();
        let b = log_marginal_likelihood(&fit(&pi, &pt, zero_mean(), &h).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    /// Sample a function from the GP prior at the given inputs.
    fn sample_gp(
        inputs: &[Vec<f64>],
        h: &Hyperparams,
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        use rand_distr::{Distribution, Normal};
        let n = inputs.len();
        let mut k = kernel_matrix(inputs, h);
        for i in 0..n {
            k[(i, i)] += h.noise_variance + 1e-10;
        }
        let chol = k.cholesky().unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let z = DVector::from_iterator(n, (0..n).map(|_| normal.sample(rng)));
        (chol.l() * z).iter().copied().collect()
    }

    #[test]
    fn lml_prefers_true_noise_level_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = hp(1.0, 1.0, 0.1);
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.25]).collect();
        let mut at_truth = 0.0;
        let mut at_low = 0.0;
        let mut at_high = 0.0;
        for _ in 0..100 {
            let targets = sample_gp(&inputs, &truth, &mut rng);
            let lml = |sn2: f64| {
                let h = hp(1.0, 1.0, sn2);
                log_marginal_likelihood(&fit(&inputs, &targets, zero_mean(), &h).unwrap()).unwrap()
            };
            at_truth += lml(0.1);
            at_low += lml(0.001);
            at_high += lml(1.0);
        }
        assert!(at_truth > at_low, "truth {at_truth} vs low {at_low}");
        assert!(at_truth > at_high, "truth {at_truth} vs high {at_high}");
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = hp(0.7, 0.9, 0.02);
        let inputs: Vec<Vec<f64>> =
            (0..15).map(|_| vec![rng.random_range(-3.0..3.0)]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| x[0].cos()).collect();
        let model = fit(&inputs, &targets, zero_mean(), &h).unwrap();
        for _ in 0..50 {
            let x = vec![rng.random_range(-4.0..4.0)];
            let (_, var) = model.predict(&x);
            assert!(var <= h.signal_variance + 1e-12);
            assert!(var >= 0.0);
        }
    }

    #[test]
    fn adding_data_never_increases_variance() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let h = hp(1.0, 1.0, 0.05);
            let n = rng.random_range(2..8);
            let inputs: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
            let targets: Vec<f64> = inputs.iter().map(|x| x[0].sin()).collect();
            let small = fit(&inputs[..n - 1], &targets[..n - 1], zero_mean(), &h).unwrap();
            let large = fit(&inputs, &targets, zero_mean(), &h).unwrap();
            for _ in 0..20 {
                let x = vec![rng.random_range(-3.0..3.0)];
                let (_, v_small) = small.predict(&x);
                let (_, v_large) = large.predict(&x);
                assert!(v_large <= v_small + 1e-8, "{v_large} > {v_small}");
            }
        }
    }

    #[test]
    fn prior_shift_equivariance() {
        let inputs = vec![vec![0.0], vec![0.8], vec![1.7], vec![3.0]];
        let targets = vec![0.1, -0.4, 0.9, 0.2];
        let h = hp(1.0, 0.8, 0.02);
        let c = 2.75;
        let base = fit(&inputs, &targets, zero_mean(), &h).unwrap();
        let shifted_prior: PriorMean = Arc::new(move |_| c);
        let shifted_targets: Vec<f64> = targets.iter().map(|t| t + c).collect();
        let shifted = fit(&inputs, &shifted_targets, shifted_prior, &h).unwrap();
        for x in [-1.0, 0.4, 2.2, 5.0] {
            let (m0, v0) = base.predict(&[x]);
            let (m1, v1) = shifted.predict(&[x]);
            assert!((m1 - (m0 + c)).abs() < 1e-10);
            assert!((v1 - v0).abs() < 1e-10);
        }
    }

    #[test]
    fn evidence_is_smooth_in_log_hyperparameters() {
        let inputs: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64 * 0.4]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (x[0]).sin() * 0.7).collect();
        let base = [0.5_f64.ln(), 0.9_f64.ln(), 0.05_f64.ln()];
        let lml_at = |p: &[f64; 3]| {
            let h = hp(p[0].exp(), p[1].exp(), p[2].exp());
            log_marginal_likelihood(&fit(&inputs, &targets, zero_mean(), &h).unwrap()).unwrap()
        };
        for coord in 0..3 {
            let central = |h_step: f64| {
                let mut up = base;
                up[coord] += h_step;
                let mut dn = base;
                dn[coord] -= h_step;
                (lml_at(&up) - lml_at(&dn)) / (2.0 * h_step)
            };
            let g1 = central(1e-3);
            let g2 = central(5e-4);
            let g3 = central(2.5e-4);
            let d1 = (g1 - g2).abs();
            let d2 = (g2 - g3).abs();
            // Central differences converge at O(h^2): successive halvings
            // shrink the discrepancy by roughly 4x.
            assert!(g1.is_finite() && g2.is_finite() && g3.is_finite());
            assert!(
                (g1 - g2).abs() <= 1e-3 * g1.abs().max(1.0),
                "coord {coord}: derivative estimates {g1} vs {g2}"
            );
            if d1 > 1e-9 {
                let ratio = d1 / d2.max(1e-300);
                assert!(
                    (2.0..8.0).contains(&ratio),
                    "coord {coord}: ratio {ratio} (d1={d1:.3e}, d2={d2:.3e})"
                );
            }
        }
    }

    #[test]
    fn hyperopt_recovers_lengthscale_within_factor_two() {
        let truth = hp(1.0, 0.5, 0.01);
        let inputs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 * 0.1]).collect();
        let bounds = HyperBounds::for_input_range(5.0);
        let mut recovered = Vec::new();
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let targets = sample_gp(&inputs, &truth, &mut rng);
            let est =
                optimize_hyperparameters(&inputs, &targets, zero_mean(), &bounds, 2, seed)
                    .unwrap();
            recovered.push(est.lengthscale);
        }
        recovered.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = recovered[recovered.len() / 2];
        assert!(
            median > 0.25 && median < 1.0,
            "median lengthscale {median}, all {recovered:?}"
        );
    }

    #[test]
    fn hyperopt_is_deterministic() {
        let inputs: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (0.8 * x[0]).sin()).collect();
        let bounds = HyperBounds::for_input_range(7.0);
        let a = optimize_hyperparameters(&inputs, &targets, zero_mean(), &bounds, 1, 9).unwrap();
        let b = optimize_hyperparameters(&inputs, &targets, zero_mean(), &bounds, 1, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hyperopt_respects_collapsed_bounds() {
        let inputs = vec![vec![0.0], vec![1.0], vec![2.0]];
        let targets = vec![0.0, 0.5, 0.1];
        let bounds = HyperBounds {
            signal_variance: (0.3, 0.3),
            lengthscale: (0.9, 0.9),
            noise_variance: (0.02, 0.02),
        };
        let est = optimize_hyperparameters(&inputs, &targets, zero_mean(), &bounds, 3, 0).unwrap();
        assert_eq!(est, hp(0.3, 0.9, 0.02));
    }

    #[test]
    fn hyperopt_never_worse_than_center_start() {
        let inputs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.3]).collect();
        let targets: Vec<f64> = inputs.iter().map(|x| (1.2 * x[0]).cos()).collect();
        let bounds = HyperBounds::for_input_range(3.3);
        let center = Hyperparams {
            signal_variance: (bounds.signal_variance.0.ln() / 2.0
                + bounds.signal_variance.1.ln() / 2.0)
                .exp(),
            lengthscale: (bounds.lengthscale.0.ln() / 2.0 + bounds.lengthscale.1.ln() / 2.0).exp(),
            noise_variance: (bounds.noise_variance.0.ln() / 2.0
                + bounds.noise_variance.1.ln() / 2.0)
                .exp(),
        };
        let lml_center = log_marginal_likelihood(
            &fit(&inputs, &targets, zero_mean(), &center).unwrap(),
        )
        .unwrap();
        let est = optimize_hyperparameters(&inputs, &targets, zero_mean(), &bounds, 2, 4).unwrap();
        let lml_est =
            log_marginal_likelihood(&fit(&inputs, &targets, zero_mean(), &est).unwrap()).unwrap();
        assert!(lml_est >= lml_center - 1e-9);
    }
}
