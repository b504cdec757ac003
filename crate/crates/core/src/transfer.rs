//! The downstream payoff check: online GP inverse-dynamics learning on a
//! target system, seeded with each source's inverse model as prior, tracking
//! a trajectory suite — plus the report that verifies the similarity ranking
//! predicts the transfer-performance ranking.
//!
//! Source "experience" is the exact analytic inverse of each source's
//! closed loop. The inverse maps the previewed desired output and an
//! internally reconstructed state to the reference that achieves the
//! desired output exactly; it is deterministic along a trajectory and is
//! queried once per step, with its value cached per training pair so the
//! posterior keeps the prior-plus-residual structure.

use std::collections::VecDeque;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::bo::SelectionResult;
use crate::error::{CoreError, Result};
use crate::gp::{self, zero_mean, HyperBounds, Hyperparams};
use crate::lti::{check_minimum_phase, relative_degree, simulate, ClosedLoopSystem, StateSpaceModel};
use crate::similarity::FrequencyRange;

/// An inverse-dynamics model usable as GP prior: maps the previewed desired
/// output (plus the trajectory state it reconstructs internally) to the
/// adjusted reference. Instantiate a fresh [`InverseRunner`] per tracking
/// run.
#[derive(Debug, Clone)]
pub struct InverseModel {
    kind: InverseKind,
    provenance: String,
}

#[derive(Debug, Clone)]
enum InverseKind {
    /// Exact linear inverse of a minimum-phase closed loop: reconstructs
    /// the loop state by the plant recursion and solves the first non-zero
    /// Markov parameter for the reference.
    Exact {
        a: DMatrix<f64>,
        b: DVector<f64>,
        /// `C A^rho`.
        c_rho: RowDVector<f64>,
        rho: usize,
        /// First non-zero Markov parameter (`D` when `rho = 0`).
        markov: f64,
    },
    /// Identity feedforward: the previewed desired output passes straight
    /// through. This is the no-transferred-knowledge control — a literal
    /// zero reference would never excite the loop and the online learner
    /// could not bootstrap.
    NoTransfer,
}

impl InverseModel {
    /// The control prior carrying no source experience (identity
    /// feedforward; tagged "zero" in reports for the zero *transfer* row).
    pub fn no_transfer() -> Self {
        Self {
            kind: InverseKind::NoTransfer,
            provenance: "zero".into(),
        }
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Relative degree of the inverted system; the no-transfer prior has
    /// none of its own and adopts the given default.
    pub fn preview_rho(&self, default: usize) -> usize {
        match &self.kind {
            InverseKind::Exact { rho, .. } => *rho,
            InverseKind::NoTransfer => default,
        }
    }

    /// Fresh stateful evaluator starting from zero initial state.
    pub fn runner(&self) -> InverseRunner<'_> {
        let state = match &self.kind {
            InverseKind::Exact { a, .. } => DVector::zeros(a.nrows()),
            InverseKind::NoTransfer => DVector::zeros(0),
        };
        InverseRunner { model: self, state }
    }
}

/// Per-run evaluator of an [`InverseModel`]; feed it the previewed desired
/// output once per step.
#[derive(Debug, Clone)]
pub struct InverseRunner<'a> {
    model: &'a InverseModel,
    state: DVector<f64>,
}

impl InverseRunner<'_> {
    /// Reference for the current step given the desired output `rho` steps
    /// ahead.
    pub fn step(&mut self, desired_preview: f64) -> f64 {
        match &self.model.kind {
            InverseKind::NoTransfer => desired_preview,
            InverseKind::Exact {
                a, b, c_rho, markov, ..
            } => {
                let gamma = (desired_preview - (c_rho * &self.state)[0]) / markov;
                self.state = a * &self.state + b * gamma;
                gamma
            }
        }
    }
}

/// Construct the exact inverse of a minimum-phase closed-loop model.
/// Refuses non-minimum-phase systems, whose inverse would be unstable.
pub fn analytic_inverse(closed_loop: &StateSpaceModel, provenance: &str) -> Result<InverseModel> {
    if !check_minimum_phase(closed_loop)? {
        return Err(CoreError::NonMinimumPhase(format!(
            "{provenance}: inverse would be unstable (zero outside the unit circle)"
        )));
    }
    let rho = relative_degree(closed_loop)?;
    let n = closed_loop.state_dim();
    let mut a_pow = DMatrix::<f64>::identity(n, n);
    for _ in 0..rho {
        a_pow = closed_loop.a() * a_pow;
    }
    let c_rho = closed_loop.c() * &a_pow;
    let markov = if rho == 0 {
        closed_loop.d()
    } else {
        let mut a_pow_m1 = DMatrix::<f64>::identity(n, n);
        for _ in 0..rho - 1 {
            a_pow_m1 = closed_loop.a() * a_pow_m1;
        }
        (closed_loop.c() * a_pow_m1 * closed_loop.b())[0]
    };
    Ok(InverseModel {
        kind: InverseKind::Exact {
            a: closed_loop.a().clone(),
            b: closed_loop.b().clone(),
            c_rho,
            rho,
            markov,
        },
        provenance: provenance.to_string(),
    })
}

/// A sampled desired trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub ts: f64,
    pub samples: Vec<f64>,
}

impl Trajectory {
    /// Amplitude-scaled copy with a suffixed id.
    pub fn scaled(&self, factor: f64) -> Trajectory {
        Trajectory {
            id: format!("{}_x{:.2}", self.id, factor),
            ts: self.ts,
            samples: self.samples.iter().map(|y| y * factor).collect(),
        }
    }
}

/// One tracked trajectory: sequences, RMS error, and online-learning
/// diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingLog {
    pub trajectory_id: String,
    /// Provenance of the prior that was used.
    pub provenance: String,
    pub desired: Vec<f64>,
    /// Reference sent to the baseline system (`gamma`).
    pub reference: Vec<f64>,
    /// True (noise-free) output.
    pub actual: Vec<f64>,
    /// `sqrt(mean((desired - actual)^2))` over the whole trajectory.
    pub rms: f64,
    pub window: usize,
    /// GP dataset size at each step.
    pub window_sizes: Vec<usize>,
    /// Steps where a GP fit failure fell back to the prior alone.
    pub fallback_events: usize,
    /// Mean absolute GP correction, for prior-dominance diagnostics.
    pub mean_abs_correction: f64,
}

fn rms_error(desired: &[f64], actual: &[f64]) -> f64 {
    let n = desired.len().min(actual.len());
    let sum: f64 = desired
        .iter()
        .zip(actual)
        .map(|(d, a)| (d - a) * (d - a))
        .sum();
    (sum / n as f64).sqrt()
}

/// Online-learning settings for the tracking benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    /// FIFO window of training points.
    pub window: usize,
    /// Initial kernel hyperparameters.
    pub hp0: Hyperparams,
    /// Measurement noise added to observed outputs.
    pub noise_std: f64,
    /// Re-optimize hyperparameters every this many steps.
    pub reopt_every: usize,
    /// Restarts per hyperparameter optimization.
    pub n_restarts: usize,
    /// One-pole smoothing coefficient on the correction channel, in
    /// `(0, 1]`; 1 applies raw corrections. Full authority at steady
    /// state either way; smaller values damp the learning feedback.
    pub correction_lowpass: f64,
    /// Gain converting an observed output error into the corrective
    /// reference of a training pair. The closed loops have unity DC gain,
    /// so 1.0 is the natural scale.
    pub learning_gain: f64,
    /// Master seed; required (no default) by reproducibility policy.
    pub seed: Option<u64>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            window: 50,
            hp0: Hyperparams {
                signal_variance: 0.1,
                lengthscale: 0.5,
                noise_variance: 0.002,
            },
            noise_std: 0.0,
            reopt_every: 25,
            n_restarts: 1,
            correction_lowpass: 0.2,
            learning_gain: 1.0,
            seed: None,
        }
    }
}

/// Track a trajectory with the baseline system alone (`y_r = y_d`).
pub fn baseline_tracking(target: &ClosedLoopSystem, trajectory: &Trajectory) -> Result<TrackingLog> {
    let model = target.model();
    if (trajectory.ts - model.ts()).abs() > 1e-12 {
        return Err(CoreError::Config(format!(
            "trajectory ts {} does not match system ts {}",
            trajectory.ts,
            model.ts()
        )));
    }
    let actual = simulate(model, &trajectory.samples, &model.zero_state())?;
    let rms = rms_error(&trajectory.samples, &actual);
    Ok(TrackingLog {
        trajectory_id: trajectory.id.clone(),
        provenance: "baseline".into(),
        desired: trajectory.samples.clone(),
        reference: trajectory.samples.clone(),
        actual,
        rms,
        window: 0,
        window_sizes: Vec::new(),
        fallback_events: 0,
        mean_abs_correction: 0.0,
    })
}

/// Track a trajectory with an inverse module pre-cascaded to the target:
/// at each step the reference is the prior's output plus the posterior mean
/// of a GP fitted on a FIFO window of observed residuals.
///
/// Training pairs are recorded once the output `rho` steps after an applied
/// reference has been observed: the desired jet at step `j` pairs with the
/// corrective reference — the reference that would have produced the
/// desired output under the analytic one-step relation,
/// `gamma(j) + (y_d(j+rho) - y_m(j+rho)) / markov` — stored as a residual
/// against the prior's cached output at `j`. Recording at desired jets
/// keeps training and query points in the same region, and the remaining
/// tracking error enters the residuals directly, so the learner contracts
/// toward exact tracking instead of chasing its own history.
/// Hyperparameters are re-optimized every `reopt_every` steps; the GP
/// itself is refitted every step. A fit failure falls back to the prior
/// alone for that step.
pub fn online_inverse_tracking(
    target: &ClosedLoopSystem,
    prior: &InverseModel,
    trajectory: &Trajectory,
    cfg: &TransferConfig,
    seed: u64,
) -> Result<TrackingLog> {
    let model = target.model();
    if (trajectory.ts - model.ts()).abs() > 1e-12 {
        return Err(CoreError::Config(format!(
            "trajectory ts {} does not match system ts {}",
            trajectory.ts,
            model.ts()
        )));
    }
    if cfg.window < 2 {
        return Err(CoreError::Config(format!(
            "window must be at least 2, got {}",
            cfg.window
        )));
    }
    let n = trajectory.samples.len();
    if n < 10 * cfg.window {
        return Err(CoreError::Config(format!(
            "trajectory has {n} samples, need at least 10 * window = {}",
            10 * cfg.window
        )));
    }
    cfg.hp0.validate()?;
    if cfg.reopt_every == 0 {
        return Err(CoreError::Config("reopt_every must be positive".into()));
    }
    if !(cfg.correction_lowpass > 0.0 && cfg.correction_lowpass <= 1.0) {
        return Err(CoreError::Config(format!(
            "correction_lowpass must be in (0, 1], got {}",
            cfg.correction_lowpass
        )));
    }

    let rho = relative_degree(model)?;
    let prior_rho = prior.preview_rho(rho);
    let y_d = &trajectory.samples;
    let preview = |k: usize| y_d[(k + rho).min(n - 1)];
    let prior_preview = |k: usize| y_d[(k + prior_rho).min(n - 1)];
    let features_of = |series: &[f64], k: usize, ahead: f64| {
        let m1 = series[k.saturating_sub(1)];
        let m2 = series[k.saturating_sub(2)];
        vec![ahead, series[k] - m1, series[k] - 2.0 * m1 + m2]
    };

    let mut feedforward = prior.runner();
    let lag = rho;
    let mut hp = cfg.hp0;
    let mut x = model.zero_state();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = if cfg.noise_std > 0.0 {
        Some(
            Normal::new(0.0, cfg.noise_std)
                .map_err(|e| CoreError::Config(format!("invalid noise distribution: {e}")))?,
        )
    } else {
        None
    };

    let mut dataset: VecDeque<(Vec<f64>, f64)> = VecDeque::with_capacity(cfg.window + 1);
    let mut measured: Vec<f64> = Vec::with_capacity(n);
    let mut applied: Vec<f64> = Vec::with_capacity(n);
    let mut prior_values: Vec<f64> = Vec::with_capacity(n);
    let mut actual = Vec::with_capacity(n);
    let mut window_sizes = Vec::with_capacity(n);
    let mut fallback_events = 0usize;
    let mut correction_sum = 0.0;
    let mut correction = 0.0;

    for k in 0..n {
        let gamma_prior = feedforward.step(prior_preview(k));

        let raw_correction = if dataset.is_empty() {
            0.0
        } else {
            let inputs: Vec<Vec<f64>> = dataset.iter().map(|(f, _)| f.clone()).collect();
            let residuals: Vec<f64> = dataset.iter().map(|(_, r)| *r).collect();
            match gp::fit(&inputs, &residuals, zero_mean(), &hp) {
                Ok(m) => {
                    // Gate the posterior mean by the posterior's collapse
                    // factor: a query far from the observed jets keeps the
                    // prior.
                    let query = features_of(y_d, k, preview(k));
                    let (mean, var) = m.predict(&query);
                    let kxx = gp::matern32(&query, &query, &hp);
                    let confidence = if kxx > 0.0 { (1.0 - var / kxx).max(0.0) } else { 0.0 };
                    confidence * mean
                }
                Err(e) => {
                    fallback_events += 1;
                    log::warn!("GP fit failed at step {k}: {e}; using prior alone");
                    0.0
                }
            }
        };
        correction += cfg.correction_lowpass * (raw_correction - correction);
        let gamma = gamma_prior + correction;
        correction_sum += correction.abs();

        let y = (model.c() * &x)[0] + model.d() * gamma;
        x = model.a() * &x + model.b() * gamma;

        let y_m = y + noise.as_ref().map_or(0.0, |d| d.sample(&mut rng));
        actual.push(y);
        measured.push(y_m);
        applied.push(gamma);
        prior_values.push(gamma_prior);

        // The output observed now closes the pair for step j = k - lag.
        if k >= lag.max(2) {
            let j = k - lag;
            if j >= 2 {
                let xi = features_of(y_d, j, y_d[(j + rho).min(n - 1)]);
                let corrective =
                    applied[j] + cfg.learning_gain * (y_d[j + rho] - measured[j + rho]);
                dataset.push_back((xi, corrective - prior_values[j]));
                if dataset.len() > cfg.window {
                    dataset.pop_front();
                }
            }
        }
        window_sizes.push(dataset.len());

        if k > 0 && k % cfg.reopt_every == 0 && dataset.len() >= 8 {
            let inputs: Vec<Vec<f64>> = dataset.iter().map(|(f, _)| f.clone()).collect();
            let residuals: Vec<f64> = dataset.iter().map(|(_, r)| *r).collect();
            let mut bounds = HyperBounds::for_input_range(gp::input_spread(&inputs));
            // The configured noise variance models measurement noise plus
            // jet-proxy model error; never optimize below it.
            bounds.noise_variance.0 = bounds.noise_variance.0.max(cfg.hp0.noise_variance);
            bounds.noise_variance.1 = bounds.noise_variance.1.max(bounds.noise_variance.0);
            match gp::optimize_hyperparameters(
                &inputs,
                &residuals,
                zero_mean(),
                &bounds,
                cfg.n_restarts,
                mix(seed, k as u64),
            ) {
                Ok(new_hp) => hp = new_hp,
                Err(e) => log::warn!("hyperparameter re-optimization failed at step {k}: {e}"),
            }
        }
    }

    let rms = rms_error(y_d, &actual);
    Ok(TrackingLog {
        trajectory_id: trajectory.id.clone(),
        provenance: prior.provenance().to_string(),
        desired: y_d.clone(),
        reference: applied,
        actual,
        rms,
        window: cfg.window,
        window_sizes,
        fallback_events,
        mean_abs_correction: correction_sum / n as f64,
    })
}

fn mix(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    pearson(&ra, &rb)
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

/// Per-trajectory outcome of one study cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOutcome {
    pub trajectory_id: String,
    pub baseline_rms: f64,
    pub rms: f64,
    /// `100 (1 - rms / baseline_rms)`.
    pub reduction_pct: f64,
}

/// Aggregated outcomes for one prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub source_id: String,
    /// Similarity estimate for source rows; absent for the zero-prior row.
    pub psi_star: Option<f64>,
    pub outcomes: Vec<TrajectoryOutcome>,
    pub mean_rms: f64,
    pub mean_reduction_pct: f64,
}

/// Full transfer study: baseline, zero-prior control, one row per source,
/// and the similarity-vs-performance rank statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub target_id: String,
    pub chosen_source: String,
    pub baseline_mean_rms: f64,
    pub zero_prior: StudyRow,
    pub sources: Vec<StudyRow>,
    /// Spearman correlation between similarity estimates and mean RMS.
    pub spearman_psi_vs_rms: f64,
    /// True iff the source with minimal mean RMS is the chosen source.
    pub ranking_consistent: bool,
    pub seed: u64,
}

fn study_row(
    target: &ClosedLoopSystem,
    prior: &InverseModel,
    psi_star: Option<f64>,
    trajectories: &[Trajectory],
    baselines: &[f64],
    cfg: &TransferConfig,
    seed: u64,
    row_index: u64,
) -> Result<StudyRow> {
    let mut outcomes = Vec::with_capacity(trajectories.len());
    for (ti, traj) in trajectories.iter().enumerate() {
        let log = online_inverse_tracking(
            target,
            prior,
            traj,
            cfg,
            mix(seed, row_index * 1_000_003 + ti as u64),
        )?;
        let baseline = baselines[ti];
        outcomes.push(TrajectoryOutcome {
            trajectory_id: traj.id.clone(),
            baseline_rms: baseline,
            rms: log.rms,
            reduction_pct: 100.0 * (1.0 - log.rms / baseline.max(1e-300)),
        });
    }
    let mean_rms = outcomes.iter().map(|o| o.rms).sum::<f64>() / outcomes.len() as f64;
    let mean_red =
        outcomes.iter().map(|o| o.reduction_pct).sum::<f64>() / outcomes.len() as f64;
    Ok(StudyRow {
        source_id: prior.provenance().to_string(),
        psi_star,
        outcomes,
        mean_rms,
        mean_reduction_pct: mean_red,
    })
}

/// Run the full transfer study over every (prior, trajectory) cell: the
/// baseline and the zero-prior control are always included, then one row
/// per source using its analytic inverse as prior.
///
/// `selection` must cover exactly the given sources.
pub fn run_transfer_study(
    target: &ClosedLoopSystem,
    sources: &[ClosedLoopSystem],
    trajectories: &[Trajectory],
    selection: &SelectionResult,
    cfg: &TransferConfig,
) -> Result<StudyReport> {
    if trajectories.is_empty() {
        return Err(CoreError::Config("transfer study needs at least one trajectory".into()));
    }
    if sources.is_empty() {
        return Err(CoreError::Config("transfer study needs at least one source".into()));
    }
    let seed = cfg.seed.ok_or_else(|| {
        CoreError::Config("transfer study requires an explicit seed (reproducibility policy)".into())
    })?;
    let mut given: Vec<&str> = sources.iter().map(|s| s.name()).collect();
    let mut covered: Vec<&str> = selection.sources.iter().map(|t| t.source_id.as_str()).collect();
    given.sort_unstable();
    covered.sort_unstable();
    if given != covered {
        return Err(CoreError::Config(format!(
            "selection covers sources {covered:?} but the study got {given:?}"
        )));
    }

    let baselines: Vec<f64> = trajectories
        .iter()
        .map(|t| baseline_tracking(target, t).map(|log| log.rms))
        .collect::<Result<_>>()?;
    let baseline_mean_rms = baselines.iter().sum::<f64>() / baselines.len() as f64;

    let zero_prior = study_row(
        target,
        &InverseModel::no_transfer(),
        None,
        trajectories,
        &baselines,
        cfg,
        seed,
        0,
    )?;

    let mut rows = Vec::with_capacity(sources.len());
    for (i, source) in sources.iter().enumerate() {
        let prior = analytic_inverse(source.model(), source.name())?;
        let psi = selection
            .sources
            .iter()
            .find(|t| t.source_id == source.name())
            .map(|t| t.estimate.psi_star);
        rows.push(study_row(
            target,
            &prior,
            psi,
            trajectories,
            &baselines,
            cfg,
            seed,
            i as u64 + 1,
        )?);
    }

    let psis: Vec<f64> = rows.iter().map(|r| r.psi_star.unwrap_or(f64::NAN)).collect();
    let rmss: Vec<f64> = rows.iter().map(|r| r.mean_rms).collect();
    let spearman = spearman_correlation(&psis, &rmss);
    let best_row = rows
        .iter()
        .min_by(|a, b| a.mean_rms.total_cmp(&b.mean_rms))
        .expect("at least one source row");
    let ranking_consistent = best_row.source_id == selection.chosen_source;

    Ok(StudyReport {
        target_id: target.name().to_string(),
        chosen_source: selection.chosen_source.clone(),
        baseline_mean_rms,
        zero_prior,
        sources: rows,
        spearman_psi_vs_rms: spearman,
        ranking_consistent,
        seed,
    })
}

// ---------------------------------------------------------------------------
// Test trajectories
// ---------------------------------------------------------------------------

/// Trajectory families supported by [`make_test_trajectories`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    SumOfSines,
    Lissajous,
    WaypointCsv,
}

/// Generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajectoryParams {
    pub ts: f64,
    pub duration: f64,
    pub amplitude: f64,
    /// Number of sine components for `SumOfSines`.
    pub n_components: usize,
    /// Frequency band the random components are drawn from; must lie
    /// inside the operating range.
    pub component_band: (f64, f64),
    /// Pin the component frequencies exactly (skips snapping and the
    /// random draw; components get equal amplitudes and zero phase).
    pub fixed_frequencies: Option<Vec<f64>>,
    /// Integer frequency ratio for `Lissajous`.
    pub lissajous_ratio: (u32, u32),
    /// Input file for `WaypointCsv`.
    pub csv_path: Option<PathBuf>,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            ts: crate::lti::SIM_TS,
            duration: 10.5,
            amplitude: 1.0,
            n_components: 5,
            component_band: (0.5, 8.0),
            fixed_frequencies: None,
            lissajous_ratio: (1, 2),
            csv_path: None,
        }
    }
}

/// Fraction of one-sided spectral energy strictly above `omega_cut` rad/s.
pub fn high_band_energy_fraction(samples: &[f64], ts: f64, omega_cut: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&y| Complex64::new(y, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut total = 0.0;
    let mut high = 0.0;
    for (k, v) in buf.iter().enumerate().take(n / 2 + 1) {
        let omega = 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * ts);
        let e = v.norm_sqr();
        total += e;
        if omega > omega_cut {
            high += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        high / total
    }
}

fn sum_of_sines(
    params: &TrajectoryParams,
    range: &FrequencyRange,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let n = (params.duration / params.ts).round() as usize;
    if n < 8 {
        return Err(CoreError::Trajectory(format!(
            "duration {}s at ts {}s gives only {n} samples",
            params.duration, params.ts
        )));
    }
    let bin = 2.0 * std::f64::consts::PI / (n as f64 * params.ts);
    let nyquist = std::f64::consts::PI / params.ts;

    let components: Vec<(f64, f64, f64)> = if let Some(fixed) = &params.fixed_frequencies {
        if fixed.is_empty() {
            return Err(CoreError::Trajectory("no component frequencies given".into()));
        }
        for &w in fixed {
            if !range.contains(w) || w >= nyquist || w <= 0.0 {
                return Err(CoreError::Trajectory(format!(
                    "component frequency {w} rad/s outside ({}, {}] and below Nyquist",
                    range.wmin, range.wmax
                )));
            }
        }
        let amp = params.amplitude / fixed.len() as f64;
        fixed.iter().map(|&w| (w, amp, 0.0)).collect()
    } else {
        let (lo, hi) = params.component_band;
        if lo < range.wmin || hi > range.wmax || lo >= hi {
            return Err(CoreError::Trajectory(format!(
                "component band [{lo}, {hi}] must sit inside the operating range [{}, {}]",
                range.wmin, range.wmax
            )));
        }
        if params.n_components == 0 {
            return Err(CoreError::Trajectory("need at least one component".into()));
        }
        (0..params.n_components)
            .map(|_| {
                let raw: f64 = rng.random_range(lo.max(bin)..hi);
                // Snap to an exact DFT bin so the finite record is periodic
                // and carries no leakage above the band.
                let snapped = ((raw / bin).round()).max(1.0) * bin;
                let w = snapped.min((hi / bin).floor() * bin);
                let a: f64 = rng.random_range(0.3..1.0);
                let phase: f64 = rng.random_range(0.0..2.0 * std::f64::consts::PI);
                (w, a, phase)
            })
            .collect()
    };

    let mut samples: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 * params.ts;
            components
                .iter()
                .map(|(w, a, p)| a * (w * t + p).sin())
                .sum()
        })
        .collect();
    if params.fixed_frequencies.is_none() {
        // Anchor the start at zero (systems start from rest); the shift is
        // a DC offset and stays below any frequency cutoff.
        let offset = samples[0];
        for y in &mut samples {
            *y -= offset;
        }
        let peak = samples.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
        if peak > 0.0 {
            let scale = params.amplitude / peak;
            for y in &mut samples {
                *y *= scale;
            }
        }
    }
    Ok(Trajectory {
        id: format!("sines{}_{index}", components.len()),
        ts: params.ts,
        samples,
    })
}

fn lissajous(
    params: &TrajectoryParams,
    range: &FrequencyRange,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    let (p, q) = params.lissajous_ratio;
    if p == 0 || q == 0 || p == q {
        return Err(CoreError::Trajectory(format!(
            "lissajous ratio must be distinct positive integers, got {p}:{q}"
        )));
    }
    let n = (params.duration / params.ts).round() as usize;
    let bin = 2.0 * std::f64::consts::PI / (n as f64 * params.ts);
    let (lo, hi) = params.component_band;
    if lo < range.wmin || hi > range.wmax || lo >= hi {
        return Err(CoreError::Trajectory(format!(
            "component band [{lo}, {hi}] must sit inside the operating range [{}, {}]",
            range.wmin, range.wmax
        )));
    }
    // The product sin(p w0 t) cos(q w0 t) splits into components at
    // (p + q) w0 and |p - q| w0; keep both inside the band.
    let sum = (p + q) as f64;
    let diff = p.abs_diff(q) as f64;
    let max_base = hi / sum;
    let min_base = (lo / diff).max(bin);
    if min_base > max_base {
        return Err(CoreError::Trajectory(format!(
            "band [{lo}, {hi}] cannot host a {p}:{q} figure"
        )));
    }
    let lo_bin = (min_base / bin).ceil() as u64;
    let hi_bin = (max_base / bin).floor() as u64;
    let base_bin = if hi_bin > lo_bin {
        rng.random_range(lo_bin..=hi_bin)
    } else {
        lo_bin
    };
    let w0 = base_bin as f64 * bin;
    let mut samples: Vec<f64> = (0..n)
        .map(|k| {
            let t = k as f64 * params.ts;
            (p as f64 * w0 * t).sin() * (q as f64 * w0 * t).cos()
        })
        .collect();
    let peak = samples.iter().fold(0.0_f64, |m, y| m.max(y.abs()));
    if peak > 0.0 {
        let scale = params.amplitude / peak;
        for y in &mut samples {
            *y *= scale;
        }
    }
    Ok(Trajectory {
        id: format!("lissajous{p}{q}_{index}"),
        ts: params.ts,
        samples,
    })
}

/// Natural cubic spline through `(t, y)` knots, evaluated on a uniform grid.
fn cubic_resample(t: &[f64], y: &[f64], ts: f64) -> Vec<f64> {
    let n = t.len();
    // Second derivatives via the standard tridiagonal system.
    let mut m = vec![0.0_f64; n];
    if n > 2 {
        let mut diag = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        let mut upper = vec![0.0; n];
        diag[0] = 1.0;
        diag[n - 1] = 1.0;
        for i in 1..n - 1 {
            let h0 = t[i] - t[i - 1];
            let h1 = t[i + 1] - t[i];
            diag[i] = 2.0 * (h0 + h1);
            upper[i] = h1;
            rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        // Thomas algorithm (natural boundary: m[0] = m[n-1] = 0).
        let mut c_prime = vec![0.0; n];
        let mut d_prime = vec![0.0; n];
        c_prime[0] = 0.0;
        d_prime[0] = 0.0;
        for i in 1..n - 1 {
            let h0 = t[i] - t[i - 1];
            let denom = diag[i] - h0 * c_prime[i - 1];
            c_prime[i] = upper[i] / denom;
            d_prime[i] = (rhs[i] - h0 * d_prime[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d_prime[i] - c_prime[i] * m[i + 1];
        }
    }

    let t_end = t[n - 1];
    let steps = (t_end / ts).floor() as usize + 1;
    let mut out = Vec::with_capacity(steps);
    let mut seg = 0usize;
    for k in 0..steps {
        let tk = (k as f64 * ts).min(t_end);
        while seg + 2 < n && t[seg + 1] < tk {
            seg += 1;
        }
        let h = t[seg + 1] - t[seg];
        let a = (t[seg + 1] - tk) / h;
        let b = (tk - t[seg]) / h;
        let val = a * y[seg]
            + b * y[seg + 1]
            + ((a * a * a - a) * m[seg] + (b * b * b - b) * m[seg + 1]) * h * h / 6.0;
        out.push(val);
    }
    out
}

fn waypoint_csv(params: &TrajectoryParams, range: &FrequencyRange) -> Result<Trajectory> {
    let path = params
        .csv_path
        .as_ref()
        .ok_or_else(|| CoreError::Trajectory("waypoint_csv needs a csv_path".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut t = Vec::new();
    let mut y = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split(',').map(str::trim);
        let (a, b) = (parts.next(), parts.next());
        match (a.and_then(|v| v.parse::<f64>().ok()), b.and_then(|v| v.parse::<f64>().ok())) {
            (Some(tv), Some(yv)) => {
                t.push(tv);
                y.push(yv);
            }
            _ if lineno == 0 => continue, // header row
            _ => {
                return Err(CoreError::Trajectory(format!(
                    "{}:{}: expected `t, y` numbers, got {line:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
    }
    if t.len() < 4 {
        return Err(CoreError::Trajectory(format!(
            "{}: need at least 4 waypoints, got {}",
            path.display(),
            t.len()
        )));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CoreError::Trajectory(format!(
            "{}: waypoint times must be strictly increasing",
            path.display()
        )));
    }
    let samples = cubic_resample(&t, &y, params.ts);
    let fraction = high_band_energy_fraction(&samples, params.ts, range.wmax);
    if fraction >= 0.05 {
        return Err(CoreError::Trajectory(format!(
            "{}: {:.1}% of spectral energy above {} rad/s (limit 5%)",
            path.display(),
            fraction * 100.0,
            range.wmax
        )));
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "waypoints".into());
    Ok(Trajectory {
        id: format!("csv_{stem}"),
        ts: params.ts,
        samples,
    })
}

/// Generate `count` trajectories of the requested kind, deterministic for a
/// given seed. Waypoint ingestion reads one trajectory regardless of
/// `count`.
pub fn make_test_trajectories(
    kind: TrajectoryKind,
    params: &TrajectoryParams,
    range: &FrequencyRange,
    count: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    if !(params.ts > 0.0) || !(params.duration > 0.0) || !(params.amplitude > 0.0) {
        return Err(CoreError::Trajectory(
            "ts, duration and amplitude must be positive".into(),
        ));
    }
    match kind {
        TrajectoryKind::WaypointCsv => Ok(vec![waypoint_csv(params, range)?]),
        TrajectoryKind::SumOfSines => (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i as u64));
                sum_of_sines(params, range, i, &mut rng)
            })
            .collect(),
        TrajectoryKind::Lissajous => (0..count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i as u64));
                lissajous(params, range, i, &mut rng)
            })
            .collect(),
    }
}

/// The default benchmark suite: five shapes (three sum-of-sines draws with
/// 3..5 components, two Lissajous figures) times three amplitude scalings.
pub fn standard_suite(
    range: &FrequencyRange,
    ts: f64,
    duration: f64,
    amplitude: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let mut shapes = Vec::with_capacity(5);
    for (i, n_components) in [3, 4, 5].into_iter().enumerate() {
        let params = TrajectoryParams {
            ts,
            duration,
            amplitude,
            n_components,
            component_band: suite_band(range),
            ..TrajectoryParams::default()
        };
        shapes.extend(make_test_trajectories(
            TrajectoryKind::SumOfSines,
            &params,
            range,
            1,
            mix(seed, i as u64),
        )?);
    }
    for (i, ratio) in [(1u32, 2u32), (2, 3)].into_iter().enumerate() {
        let params = TrajectoryParams {
            ts,
            duration,
            amplitude,
            lissajous_ratio: ratio,
            component_band: suite_band(range),
            ..TrajectoryParams::default()
        };
        shapes.extend(make_test_trajectories(
            TrajectoryKind::Lissajous,
            &params,
            range,
            1,
            mix(seed, 100 + i as u64),
        )?);
    }
    let mut suite = Vec::with_capacity(15);
    for shape in &shapes {
        for scale in [0.5, 1.0, 1.5] {
            suite.push(shape.scaled(scale));
        }
    }
    Ok(suite)
}

fn suite_band(range: &FrequencyRange) -> (f64, f64) {
    let lo = (range.wmin + 0.05 * range.width()).max(0.05 * range.wmax);
    let hi = 0.8 * range.wmax;
    (lo, hi)
}
