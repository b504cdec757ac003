//! Sinusoidal probe experiments and data-driven frequency-response
//! estimation — the black-box replacement for the analytic response when a
//! system can only be sampled through input/output records.
//!
//! Estimation correlates input and output with `e^{-j w k Ts}` over an
//! integer number of post-settling periods (single-bin DFT), which is
//! leakage-free for periodic probes and needs no optimizer.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::lti::{simulate, StateSpaceModel};
use crate::similarity::ComplexResponse;

/// Raw record of one sinusoidal probe experiment.
#[derive(Debug, Clone)]
pub struct ProbeRecord {
    /// Probe frequency in rad/s.
    pub omega: f64,
    /// Reference amplitude in output units.
    pub amplitude: f64,
    /// Sampling time in seconds.
    pub ts: f64,
    /// Reference sequence `y_r`.
    pub input: Vec<f64>,
    /// Measured output sequence `y_a` (noise included).
    pub output: Vec<f64>,
    /// Fraction of leading samples discarded as transient, in `[0, 1)`.
    pub settle_fraction: f64,
}

/// Simulate a sinusoidal probe `y_r(k) = amplitude sin(w k Ts)` on a
/// reference-to-output model from zero initial state, for `n_periods` full
/// periods, adding i.i.d. Gaussian output noise drawn from a generator
/// seeded with `seed`. Pass `ClosedLoopSystem::model()` to probe a baseline
/// system.
pub fn run_probe(
    model: &StateSpaceModel,
    omega: f64,
    amplitude: f64,
    n_periods: usize,
    settle_fraction: f64,
    noise_std: f64,
    seed: u64,
) -> Result<ProbeRecord> {
    let ts = model.ts();
    if !(omega > 0.0) || omega >= model.nyquist() {
        return Err(CoreError::FrequencyOutOfRange {
            omega,
            nyquist: model.nyquist(),
        });
    }
    if n_periods < 8 {
        return Err(CoreError::Config(format!(
            "probe needs at least 8 periods, got {n_periods}"
        )));
    }
    if !(amplitude > 0.0) {
        return Err(CoreError::Config(format!(
            "probe amplitude must be positive, got {amplitude}"
        )));
    }
    if !(0.0..1.0).contains(&settle_fraction) {
        return Err(CoreError::Config(format!(
            "settle fraction must be in [0, 1), got {settle_fraction}"
        )));
    }
    if noise_std < 0.0 {
        return Err(CoreError::Config(format!(
            "noise standard deviation must be non-negative, got {noise_std}"
        )));
    }

    let steps = (n_periods as f64 * 2.0 * std::f64::consts::PI / (omega * ts)).ceil() as usize;
    let input: Vec<f64> = (0..steps)
        .map(|k| amplitude * (omega * k as f64 * ts).sin())
        .collect();
    let mut output = simulate(model, &input, &model.zero_state())?;
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std)
            .map_err(|e| CoreError::Config(format!("invalid noise distribution: {e}")))?;
        for y in &mut output {
            *y += normal.sample(&mut rng);
        }
    }

    Ok(ProbeRecord {
        omega,
        amplitude,
        ts,
        input,
        output,
        settle_fraction,
    })
}

/// Estimate the complex response `z = coeff_out / coeff_in` from a probe
/// record: discard the leading `settle_fraction` of samples, keep the
/// largest whole number of periods that fits in the tail, and correlate
/// both signals with `e^{-j w k Ts}` over that window.
pub fn estimate_response(record: &ProbeRecord) -> Result<ComplexResponse> {
    if record.input.len() != record.output.len() {
        return Err(CoreError::Dimension(format!(
            "input has {} samples, output {}",
            record.input.len(),
            record.output.len()
        )));
    }
    let n = record.input.len();
    let settled = (n as f64 * record.settle_fraction).floor() as usize;
    let available = n - settled;
    let samples_per_period = 2.0 * std::f64::consts::PI / (record.omega * record.ts);
    if samples_per_period < 4.0 {
        return Err(CoreError::Estimation(format!(
            "fewer than 4 samples per period at {} rad/s with ts {}",
            record.omega, record.ts
        )));
    }
    let whole_periods = (available as f64 / samples_per_period).floor() as usize;
    if whole_periods < 4 {
        return Err(CoreError::Estimation(format!(
            "post-settling window spans {whole_periods} full periods, need at least 4"
        )));
    }
    let window = ((whole_periods as f64 * samples_per_period).round() as usize).min(available);
    let start = n - window;

    let mut coeff_in = Complex64::new(0.0, 0.0);
    let mut coeff_out = Complex64::new(0.0, 0.0);
    for k in start..n {
        let basis = Complex64::new(0.0, -record.omega * k as f64 * record.ts).exp();
        coeff_in += record.input[k] * basis;
        coeff_out += record.output[k] * basis;
    }
    // Normalize to an amplitude-like scale so the excitation threshold is
    // independent of window length.
    let scale = 2.0 / window as f64;
    coeff_in *= scale;
    coeff_out *= scale;
    if coeff_in.norm() < 1e-12 {
        return Err(CoreError::Estimation(format!(
            "no excitation at {} rad/s (input coefficient {:.3e})",
            record.omega,
            coeff_in.norm()
        )));
    }
    Ok(ComplexResponse::from(coeff_out / coeff_in))
}
