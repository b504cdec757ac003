//! Experience selection by Bayesian optimization: expected improvement, a
//! multi-source acquisition rule that steers probes toward the worst-case
//! chordal distance of the most similar sources, and the iterative
//! selection loop itself.
//!
//! Each iteration probes the target and every source once at the chosen
//! frequency, computes the per-source chordal distance, refits one GP per
//! source (hyperparameters re-optimized against the marginal likelihood),
//! and picks the next frequency on a dense grid. The final similarity
//! estimate per source is the maximum of its GP posterior mean over the
//! frequency range; the chosen source minimizes that estimate.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::gp::{self, GPModel, HyperBounds, Hyperparams};
use crate::lti::{frequency_response, ClosedLoopSystem};
use crate::probe::{estimate_response, run_probe};
use crate::similarity::{chordal_distance, check_gap_condition, ComplexResponse, FrequencyRange};

/// Floor applied to similarity estimates in the acquisition denominator.
const PSI_GUARD: f64 = 1e-3;

/// Standard normal cumulative distribution function.
fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal probability density function.
fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement of a Gaussian belief `(mu, sigma)` over the best
/// observation so far, with exploration offset `xi`. Exactly zero when
/// `sigma` is zero.
pub fn expected_improvement(mu: f64, sigma: f64, best: f64, xi_explore: f64) -> f64 {
    debug_assert!(sigma >= 0.0);
    if sigma <= 0.0 {
        return 0.0;
    }
    let diff = mu - best - xi_explore;
    let z = diff / sigma;
    (diff * normal_cdf(z) + sigma * normal_pdf(z)).max(0.0)
}

/// Similarity estimate for one source/target pair: the maximum of the GP
/// posterior mean over the frequency range, with the posterior standard
/// deviation at the maximizing frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEstimate {
    pub source_id: String,
    /// Estimated worst-case chordal distance, clamped into `[0, 1]`.
    pub psi_star: f64,
    /// Posterior standard deviation at the maximizing frequency.
    pub sigma_star: f64,
    /// Maximizing frequency in rad/s.
    pub omega_star: f64,
}

/// Maximize the posterior mean of a fitted chordal-distance GP over a dense
/// grid; ties break toward the smaller frequency.
pub fn similarity_estimate(
    model: &GPModel,
    range: &FrequencyRange,
    grid_size: usize,
    source_id: &str,
) -> Result<SimilarityEstimate> {
    if model.is_empty() {
        return Err(CoreError::Config(
            "similarity estimate needs a GP fit on at least one sample".into(),
        ));
    }
    let mut best_mean = f64::NEG_INFINITY;
    let mut best_var = 0.0;
    let mut best_omega = range.wmin;
    for omega in range.grid(grid_size.max(2)) {
        let (mean, var) = model.predict(&[omega]);
        if mean > best_mean {
            best_mean = mean;
            best_var = var;
            best_omega = omega;
        }
    }
    Ok(SimilarityEstimate {
        source_id: source_id.to_string(),
        psi_star: best_mean.clamp(0.0, 1.0),
        sigma_star: best_var.sqrt(),
        omega_star: best_omega,
    })
}

/// The multi-source acquisition rule: the next probe frequency is the grid
/// argmax of `max_n EI_n(w) / max(psi_star_n, 1e-3)`. Ties break toward the
/// smaller frequency. Sources with a tiny similarity estimate are floored
/// at the guard value (logged) so a near-identical source cannot blow up
/// the weighting.
pub fn multi_source_acquisition(
    models: &[GPModel],
    estimates: &[SimilarityEstimate],
    range: &FrequencyRange,
    grid_size: usize,
    xi_explore: f64,
) -> f64 {
    acquisition_argmax(models, estimates, range, grid_size, xi_explore).0
}

/// [`multi_source_acquisition`] together with the acquisition value at the
/// argmax; the selection loop treats a vanishing value as "nothing left to
/// learn".
pub fn acquisition_argmax(
    models: &[GPModel],
    estimates: &[SimilarityEstimate],
    range: &FrequencyRange,
    grid_size: usize,
    xi_explore: f64,
) -> (f64, f64) {
    assert!(!models.is_empty() && models.len() == estimates.len());
    for est in estimates {
        if est.psi_star < PSI_GUARD {
            log::debug!(
                "acquisition guard active for {} (psi_star = {:.3e})",
                est.source_id,
                est.psi_star
            );
        }
    }
    let best_observed: Vec<f64> = models
        .iter()
        .map(|m| {
            m.targets()
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut best = (f64::NEG_INFINITY, range.wmin);
    for omega in range.grid(grid_size.max(2)) {
        let mut alpha = f64::NEG_INFINITY;
        for (n, model) in models.iter().enumerate() {
            let (mean, var) = model.predict(&[omega]);
            let ei = expected_improvement(mean, var.sqrt(), best_observed[n], xi_explore);
            alpha = alpha.max(ei / estimates[n].psi_star.max(PSI_GUARD));
        }
        if alpha > best.0 {
            best = (alpha, omega);
        }
    }
    (best.1, best.0)
}

/// How probes are realized during selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Evaluate the analytic frequency response of the closed-loop model.
    Analytic,
    /// Simulate a sinusoidal probe and estimate the response from the
    /// input/output record.
    Timeseries,
}

/// Probe settings for the selection loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub mode: ProbeMode,
    pub amplitude: f64,
    pub n_periods: usize,
    pub settle_fraction: f64,
    pub noise_std: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            mode: ProbeMode::Analytic,
            amplitude: 1.0,
            n_periods: 20,
            settle_fraction: 0.5,
            noise_std: 0.0,
        }
    }
}

/// Convergence rule: the loop stops once `window` consecutive iterations
/// each changed every similarity estimate by less than `psi_tol` while the
/// probe either repeated an earlier frequency (within `omega_tol_frac` of
/// the range width) or was chosen with an acquisition value below
/// `alpha_tol` (the surrogate has nothing left to learn).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergenceRule {
    pub window: usize,
    pub psi_tol: f64,
    pub omega_tol_frac: f64,
    pub alpha_tol: f64,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self {
            window: 3,
            psi_tol: 1e-3,
            omega_tol_frac: 0.01,
            alpha_tol: 1e-4,
        }
    }
}

/// GP settings for the selection loop: hyperparameters used before enough
/// samples exist to optimize, and the number of optimizer restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpSearchConfig {
    pub init: Hyperparams,
    pub n_restarts: usize,
}

impl Default for GpSearchConfig {
    fn default() -> Self {
        Self {
            init: Hyperparams {
                signal_variance: 0.1,
                lengthscale: 1.0,
                noise_variance: 1e-6,
            },
            n_restarts: 2,
        }
    }
}

/// Full configuration of the selection loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub grid_size: usize,
    pub xi_explore: f64,
    pub max_iterations: usize,
    pub convergence: ConvergenceRule,
    pub probe: ProbeConfig,
    /// Master seed; required (no default) by reproducibility policy.
    pub seed: Option<u64>,
    pub gp: GpSearchConfig,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            grid_size: 1000,
            xi_explore: 0.01,
            max_iterations: 15,
            convergence: ConvergenceRule::default(),
            probe: ProbeConfig::default(),
            seed: None,
            gp: GpSearchConfig::default(),
        }
    }
}

/// Sample trace for one source: the frequencies probed and the chordal
/// distances observed there, plus the final GP hyperparameters and
/// similarity estimate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceTrace {
    pub source_id: String,
    /// `(omega, psi)` pairs in sampling order; all sources share the same
    /// omega sequence.
    pub dataset: Vec<(f64, f64)>,
    pub hyperparams: Hyperparams,
    pub estimate: SimilarityEstimate,
    /// Advisory gap-condition verdict for this pair (never blocking).
    pub gap_condition_ok: bool,
}

/// Complete trace of one selection run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub target_id: String,
    pub range: FrequencyRange,
    pub sources: Vec<SourceTrace>,
    /// Per-iteration estimates, recomputed after each refit.
    pub history: Vec<Vec<SimilarityEstimate>>,
    /// Probe frequency used at each iteration.
    pub omegas: Vec<f64>,
    /// Acquisition value that selected each probe frequency (absent for the
    /// initial random draw).
    pub alphas: Vec<Option<f64>>,
    pub chosen_source: String,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    /// Final per-source GP models (not serialized; empty after
    /// deserialization).
    #[serde(skip)]
    pub models: Vec<GPModel>,
}

fn mix_seed(master: u64, iteration: u64, stream: u64) -> u64 {
    let mut z = master
        ^ iteration.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn probe_response(
    system: &ClosedLoopSystem,
    omega: f64,
    probe: &ProbeConfig,
    seed: u64,
) -> Result<ComplexResponse> {
    match probe.mode {
        ProbeMode::Analytic => frequency_response(system.model(), omega),
        ProbeMode::Timeseries => {
            let record = run_probe(
                system.model(),
                omega,
                probe.amplitude,
                probe.n_periods,
                probe.settle_fraction,
                probe.noise_std,
                seed,
            )?;
            estimate_response(&record)
        }
    }
}

/// Run the full selection loop against one target and `N >= 1` sources.
///
/// The candidate grid for probe frequencies excludes `omega = 0` (a
/// zero-frequency sinusoid carries no excitation): when `wmin` is zero the
/// lowest candidate sits one grid step above it. Similarity estimates are
/// still maximized over the full range.
pub fn run_selection(
    target: &ClosedLoopSystem,
    sources: &[ClosedLoopSystem],
    range: &FrequencyRange,
    cfg: &SelectionConfig,
) -> Result<SelectionResult> {
    if sources.is_empty() {
        return Err(CoreError::Config("selection needs at least one source".into()));
    }
    if cfg.grid_size < 2 {
        return Err(CoreError::Config(format!(
            "acquisition grid must have at least 2 points, got {}",
            cfg.grid_size
        )));
    }
    if cfg.max_iterations == 0 {
        return Err(CoreError::Config("max_iterations must be positive".into()));
    }
    cfg.gp.init.validate()?;
    let seed = cfg.seed.ok_or_else(|| {
        CoreError::Config("selection requires an explicit seed (reproducibility policy)".into())
    })?;

    let width = range.width();
    let floor = if range.wmin > 0.0 {
        range.wmin
    } else {
        width / (cfg.grid_size - 1) as f64
    };
    let probe_range = FrequencyRange::new(floor, range.wmax)?;
    let bounds = HyperBounds::for_input_range(width);

    let n_sources = sources.len();
    let mut datasets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_sources];
    let mut hyper: Vec<Hyperparams> = vec![cfg.gp.init; n_sources];
    let mut models: Vec<Option<GPModel>> = vec![None; n_sources];
    let mut history: Vec<Vec<SimilarityEstimate>> = Vec::new();
    let mut omegas: Vec<f64> = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega_sample = rng.random_range(probe_range.wmin..probe_range.wmax);
    let mut omega_alpha: Option<f64> = None;
    let mut alphas: Vec<Option<f64>> = Vec::new();

    let mut prev_psi: Option<Vec<f64>> = None;
    let mut streak = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    while iterations < cfg.max_iterations {
        let iter = iterations + 1;
        let wrap = |system: &str, e: CoreError| CoreError::Probe {
            iteration: iter,
            system: system.to_string(),
            source: Box::new(e),
        };

        let z_target = probe_response(target, omega_sample, &cfg.probe, mix_seed(seed, iter as u64, 0))
            .map_err(|e| wrap(target.name(), e))?;

        for (n, source) in sources.iter().enumerate() {
            let z_source = probe_response(
                source,
                omega_sample,
                &cfg.probe,
                mix_seed(seed, iter as u64, n as u64 + 1),
            )
            .map_err(|e| wrap(source.name(), e))?;
            let psi = chordal_distance(&z_target, &z_source);
            datasets[n].push((omega_sample, psi));
        }

        for n in 0..n_sources {
            let xs: Vec<Vec<f64>> = datasets[n].iter().map(|(w, _)| vec![*w]).collect();
            let ys: Vec<f64> = datasets[n].iter().map(|(_, p)| *p).collect();
            if xs.len() >= 2 {
                match gp::optimize_hyperparameters(
                    &xs,
                    &ys,
                    gp::zero_mean(),
                    &bounds,
                    cfg.gp.n_restarts,
                    mix_seed(seed, iter as u64, 1000 + n as u64),
                ) {
                    Ok(hp) => hyper[n] = hp,
                    Err(e) => log::warn!(
                        "hyperparameter optimization failed for {} at iteration {iter}: {e}; keeping previous values",
                        sources[n].name()
                    ),
                }
            }
            models[n] = Some(gp::fit(&xs, &ys, gp::zero_mean(), &hyper[n])?);
        }

        let estimates: Vec<SimilarityEstimate> = models
            .iter()
            .zip(sources)
            .map(|(m, s)| {
                similarity_estimate(
                    m.as_ref().expect("model fitted above"),
                    range,
                    cfg.grid_size,
                    s.name(),
                )
            })
            .collect::<Result<_>>()?;

        // Convergence bookkeeping: estimates stable, and the frequency just
        // probed either repeats an earlier one or was picked with a spent
        // acquisition.
        let deltas_ok = prev_psi.as_ref().is_some_and(|prev| {
            estimates
                .iter()
                .zip(prev)
                .all(|(e, p)| (e.psi_star - p).abs() < cfg.convergence.psi_tol)
        });
        let omega_repeat = omegas
            .iter()
            .any(|w| (w - omega_sample).abs() <= cfg.convergence.omega_tol_frac * width);
        let acquisition_spent = omega_alpha.is_some_and(|a| a < cfg.convergence.alpha_tol);
        prev_psi = Some(estimates.iter().map(|e| e.psi_star).collect());

        omegas.push(omega_sample);
        alphas.push(omega_alpha);
        history.push(estimates.clone());
        iterations = iter;

        if deltas_ok && (omega_repeat || acquisition_spent) {
            streak += 1;
        } else {
            streak = 0;
        }
        if streak >= cfg.convergence.window {
            converged = true;
            break;
        }

        let fitted: Vec<GPModel> = models
            .iter()
            .map(|m| m.as_ref().expect("model fitted above").clone())
            .collect();
        let (next_omega, alpha) = acquisition_argmax(
            &fitted,
            &estimates,
            &probe_range,
            cfg.grid_size,
            cfg.xi_explore,
        );
        omega_sample = next_omega;
        omega_alpha = Some(alpha);
    }

    let final_estimates = history.last().expect("at least one iteration ran").clone();
    let chosen = final_estimates
        .iter()
        .min_by(|a, b| a.psi_star.total_cmp(&b.psi_star))
        .expect("at least one source")
        .source_id
        .clone();

    let mut traces = Vec::with_capacity(n_sources);
    for (n, source) in sources.iter().enumerate() {
        let gap_ok = check_gap_condition(target.model(), source.model(), 512)?;
        traces.push(SourceTrace {
            source_id: source.name().to_string(),
            dataset: datasets[n].clone(),
            hyperparams: hyper[n],
            estimate: final_estimates[n].clone(),
            gap_condition_ok: gap_ok,
        });
    }

    Ok(SelectionResult {
        target_id: target.name().to_string(),
        range: *range,
        sources: traces,
        history,
        omegas,
        alphas,
        chosen_source: chosen,
        converged,
        iterations,
        seed,
        models: models.into_iter().map(|m| m.expect("fitted")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{fit, zero_mean};
    use crate::lti::{sim_plant, PDController, SIM_TS};
    use crate::similarity::gap_sweep;

    fn bank() -> (ClosedLoopSystem, Vec<ClosedLoopSystem>) {
        let pd = PDController::new(5.0, 4.5, SIM_TS).unwrap();
        let target = ClosedLoopSystem::new("target", sim_plant(0.85, 0.003), pd).unwrap();
        let sources = vec![
            ClosedLoopSystem::new("S1", sim_plant(1.0, 0.003), pd).unwrap(),
            ClosedLoopSystem::new("S2", sim_plant(0.97, 0.004), pd).unwrap(),
            ClosedLoopSystem::new("S3", sim_plant(0.9, 0.001), pd).unwrap(),
        ];
        (target, sources)
    }

    fn analytic_config(seed: u64) -> SelectionConfig {
        SelectionConfig {
            seed: Some(seed),
            ..SelectionConfig::default()
        }
    }

    #[test]
    fn ei_contract() {
        assert_eq!(expected_improvement(5.0, 0.0, 1.0, 0.01), 0.0);
        assert_eq!(expected_improvement(-3.0, 0.0, 1.0, 0.01), 0.0);
        let at_zero = expected_improvement(1.0, 1.0, 1.0, 0.0);
        assert!((at_zero - 0.3989423).abs() < 1e-6);
        let exploit = expected_improvement(11.0, 0.01, 1.0, 0.0);
        assert!((exploit - 10.0).abs() < 1e-3);
        // Non-negative over a spread of cases.
        for mu in [-2.0, 0.0, 0.5, 3.0] {
            for sigma in [0.0, 0.1, 1.0, 5.0] {
                assert!(expected_improvement(mu, sigma, 0.3, 0.01) >= 0.0);
            }
        }
    }

    #[test]
    fn single_sample_estimate_peaks_at_datum() {
        let hp = Hyperparams::new(0.1, 1.0, 1e-6).unwrap();
        let model = fit(&[vec![4.0]], &[0.3], zero_mean(), &hp).unwrap();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let est = similarity_estimate(&model, &range, 1001, "s").unwrap();
        assert!((est.psi_star - 0.3).abs() < 1e-4);
        assert!((est.omega_star - 4.0).abs() < 0.02);
    }

    #[test]
    fn all_zero_samples_estimate_zero() {
        let hp = Hyperparams::new(0.1, 1.0, 1e-6).unwrap();
        let model = fit(
            &[vec![1.0], vec![5.0], vec![9.0]],
            &[0.0, 0.0, 0.0],
            zero_mean(),
            &hp,
        )
        .unwrap();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let est = similarity_estimate(&model, &range, 500, "s").unwrap();
        assert_eq!(est.psi_star, 0.0);
    }

    #[test]
    fn estimate_requires_data() {
        let hp = Hyperparams::new(0.1, 1.0, 1e-6).unwrap();
        let model = fit(&[], &[], zero_mean(), &hp).unwrap();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        assert!(similarity_estimate(&model, &range, 100, "s").is_err());
    }

    #[test]
    fn single_source_acquisition_reduces_to_ei_argmax() {
        let hp = Hyperparams::new(0.1, 1.5, 1e-6).unwrap();
        let model = fit(
            &[vec![2.0], vec![7.0]],
            &[0.2, 0.05],
            zero_mean(),
            &hp,
        )
        .unwrap();
        let range = FrequencyRange::new(0.5, 10.0).unwrap();
        let est = similarity_estimate(&model, &range, 500, "s").unwrap();
        let grid = range.grid(500);
        let best_obs = 0.2;
        let mut expected = (f64::NEG_INFINITY, 0.0);
        for &w in &grid {
            let (mean, var) = model.predict(&[w]);
            let ei = expected_improvement(mean, var.sqrt(), best_obs, 0.01);
            if ei > expected.0 {
                expected = (ei, w);
            }
        }
        let got = multi_source_acquisition(&[model], &[est], &range, 500, 0.01);
        assert_eq!(got, expected.1);
    }

    #[test]
    fn acquisition_invariant_to_common_estimate_scaling() {
        let hp = Hyperparams::new(0.1, 1.5, 1e-4).unwrap();
        let m1 = fit(&[vec![2.0], vec![6.0]], &[0.2, 0.4], zero_mean(), &hp).unwrap();
        let m2 = fit(&[vec![2.0], vec![6.0]], &[0.5, 0.1], zero_mean(), &hp).unwrap();
        let range = FrequencyRange::new(0.5, 10.0).unwrap();
        let est = |id: &str, psi: f64| SimilarityEstimate {
            source_id: id.into(),
            psi_star: psi,
            sigma_star: 0.01,
            omega_star: 3.0,
        };
        let models = [m1, m2];
        let base = multi_source_acquisition(
            &models,
            &[est("a", 0.2), est("b", 0.5)],
            &range,
            400,
            0.01,
        );
        let scaled = multi_source_acquisition(
            &models,
            &[est("a", 0.4), est("b", 1.0)],
            &range,
            400,
            0.01,
        );
        assert_eq!(base, scaled);
    }

    #[test]
    fn more_similar_source_dominates_acquisition() {
        // Identical GP states; only the similarity weights differ, so the
        // argmax must coincide with the more similar source's EI argmax —
        // which is the shared EI argmax.
        let hp = Hyperparams::new(0.1, 1.5, 1e-6).unwrap();
        let data = (vec![vec![2.0], vec![8.0]], vec![0.15, 0.3]);
        let m1 = fit(&data.0, &data.1, zero_mean(), &hp).unwrap();
        let m2 = fit(&data.0, &data.1, zero_mean(), &hp).unwrap();
        let range = FrequencyRange::new(0.5, 10.0).unwrap();
        let grid = 400;
        let e1 = similarity_estimate(&m1, &range, grid, "near").unwrap();
        let mut e1 = e1;
        e1.psi_star = 0.1;
        let mut e2 = similarity_estimate(&m2, &range, grid, "far").unwrap();
        e2.psi_star = 0.5;

        let single = multi_source_acquisition(
            &[m1.clone()],
            &[e1.clone()],
            &range,
            grid,
            0.01,
        );
        let multi = multi_source_acquisition(&[m1, m2], &[e1, e2], &range, grid, 0.01);
        assert_eq!(single, multi);
    }

    #[test]
    fn selection_requires_seed_and_sources() {
        let (target, sources) = bank();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let mut cfg = SelectionConfig::default();
        assert!(matches!(
            run_selection(&target, &sources, &range, &cfg),
            Err(CoreError::Config(_))
        ));
        cfg.seed = Some(1);
        assert!(matches!(
            run_selection(&target, &[], &range, &cfg),
            Err(CoreError::Config(_))
        ));
    }

    #[test]
    fn self_similarity_is_near_zero() {
        let (target, _) = bank();
        let clone = ClosedLoopSystem::new(
            "self",
            target.plant().clone(),
            *target.controller(),
        )
        .unwrap();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let result = run_selection(&target, &[clone], &range, &analytic_config(7)).unwrap();
        assert!(result.sources[0].estimate.psi_star <= 0.02);
    }

    #[test]
    fn paper_bank_selects_s2_and_matches_oracle() {
        let (target, sources) = bank();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let result = run_selection(&target, &sources, &range, &analytic_config(1)).unwrap();
        assert_eq!(result.chosen_source, "S2");
        assert!(result.converged, "did not converge in {} iterations", result.iterations);
        assert!(result.iterations <= 15);

        for trace in &result.sources {
            let source = sources.iter().find(|s| s.name() == trace.source_id).unwrap();
            let (oracle, _) = gap_sweep(target.model(), source.model(), &range, 2000).unwrap();
            assert!(
                (trace.estimate.psi_star - oracle).abs() < 0.005,
                "{}: estimate {} vs oracle {}",
                trace.source_id,
                trace.estimate.psi_star,
                oracle
            );
        }
    }

    #[test]
    fn datasets_stay_aligned_and_estimates_bounded() {
        let (target, sources) = bank();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let result = run_selection(&target, &sources, &range, &analytic_config(3)).unwrap();
        let omegas: Vec<f64> = result.sources[0].dataset.iter().map(|(w, _)| *w).collect();
        for trace in &result.sources {
            let ws: Vec<f64> = trace.dataset.iter().map(|(w, _)| *w).collect();
            assert_eq!(ws, omegas);
            assert_eq!(trace.dataset.len(), result.iterations);
        }
        for step in &result.history {
            for est in step {
                assert!((0.0..=1.0).contains(&est.psi_star));
                assert!(range.contains(est.omega_star));
            }
        }
    }

    #[test]
    fn selection_is_bitwise_deterministic() {
        let (target, sources) = bank();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let mut cfg = analytic_config(11);
        cfg.probe.mode = ProbeMode::Timeseries;
        cfg.probe.noise_std = 0.01;
        let a = run_selection(&target, &sources, &range, &cfg).unwrap();
        let b = run_selection(&target, &sources, &range, &cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn argmin_selection_is_invariant_to_monotone_transforms() {
        let (target, sources) = bank();
        let range = FrequencyRange::new(0.0, 10.0).unwrap();
        let result = run_selection(&target, &sources, &range, &analytic_config(5)).unwrap();
        let finals: Vec<(String, f64)> = result
            .sources
            .iter()
            .map(|t| (t.source_id.clone(), t.estimate.psi_star))
            .collect();
        let argmin = |vals: &[(String, f64)]| {
            vals.iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
                .clone()
        };
        let transformed: Vec<(String, f64)> = finals
            .iter()
            .map(|(id, v)| (id.clone(), (3.0 * v).exp() + 7.0))
            .collect();
        assert_eq!(argmin(&finals), argmin(&transformed));
        assert_eq!(argmin(&finals), result.chosen_source);
    }
}
