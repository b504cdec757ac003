//! Chordal-distance geometry on the Riemann sphere and the dense-sweep
//! worst-case distance between two linear systems over a frequency range.
//!
//! The sphere convention is radius 0.5 tangent to the origin of the complex
//! plane, which makes the maximum chordal distance exactly 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::lti::{frequency_response, StateSpaceModel};

/// Complex gain `A e^{j theta}` of a system at one frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexResponse {
    pub re: f64,
    pub im: f64,
}

impl ComplexResponse {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    /// Amplitude gain `A`.
    pub fn magnitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Phase shift in `(-pi, pi]`.
    pub fn phase(&self) -> f64 {
        let p = self.im.atan2(self.re);
        if p <= -std::f64::consts::PI {
            p + 2.0 * std::f64::consts::PI
        } else {
            p
        }
    }

    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl From<Complex64> for ComplexResponse {
    fn from(z: Complex64) -> Self {
        Self::new(z.re, z.im)
    }
}

/// A point on the radius-0.5 Riemann sphere tangent to the complex origin,
/// satisfying `x^2 + y^2 + (h - 0.5)^2 = 0.25`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint {
    pub x: f64,
    pub y: f64,
    pub h: f64,
}

impl SpherePoint {
    /// Euclidean distance to another sphere point.
    pub fn distance(&self, other: &SpherePoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dh = self.h - other.h;
        (dx * dx + dy * dy + dh * dh).sqrt()
    }
}

/// Closed frequency interval `[wmin, wmax]` in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRange {
    pub wmin: f64,
    pub wmax: f64,
}

impl FrequencyRange {
    pub fn new(wmin: f64, wmax: f64) -> Result<Self> {
        if !wmin.is_finite() || !wmax.is_finite() || wmin < 0.0 || wmin >= wmax {
            return Err(CoreError::Config(format!(
                "frequency range requires 0 <= wmin < wmax, got [{wmin}, {wmax}]"
            )));
        }
        Ok(Self { wmin, wmax })
    }

    pub fn width(&self) -> f64 {
        self.wmax - self.wmin
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega >= self.wmin && omega <= self.wmax
    }

    /// Uniform grid over the range, endpoints included.
    pub fn grid(&self, size: usize) -> Vec<f64> {
        assert!(size >= 2, "grid needs at least two points");
        let step = self.width() / (size - 1) as f64;
        (0..size).map(|i| self.wmin + step * i as f64).collect()
    }
}

/// Stereographic projection from the north pole `(0, 0, 1)`:
/// `z` maps to `(Re z, Im z, |z|^2) / (1 + |z|^2)`.
pub fn riemann_project(z: &ComplexResponse) -> SpherePoint {
    let m2 = z.re * z.re + z.im * z.im;
    let denom = 1.0 + m2;
    SpherePoint {
        x: z.re / denom,
        y: z.im / denom,
        h: m2 / denom,
    }
}

/// Chordal distance `|z1 - z2| / (sqrt(1 + |z1|^2) sqrt(1 + |z2|^2))`,
/// equal to the Euclidean distance between the Riemann projections.
/// Always in `[0, 1]`.
pub fn chordal_distance(z1: &ComplexResponse, z2: &ComplexResponse) -> f64 {
    let dr = z1.re - z2.re;
    let di = z1.im - z2.im;
    let n1 = 1.0 + z1.re * z1.re + z1.im * z1.im;
    let n2 = 1.0 + z2.re * z2.re + z2.im * z2.im;
    (dr.hypot(di) / (n1.sqrt() * n2.sqrt())).min(1.0)
}

/// Dense-grid maximization of the chordal distance between two systems'
/// analytic frequency responses over `range`. Returns the maximum and its
/// frequency; grid ties break toward the smaller frequency.
pub fn gap_sweep(
    sys1: &StateSpaceModel,
    sys2: &StateSpaceModel,
    range: &FrequencyRange,
    grid_size: usize,
) -> Result<(f64, f64)> {
    if grid_size < 100 {
        return Err(CoreError::Config(format!(
            "gap sweep grid must have at least 100 points, got {grid_size}"
        )));
    }
    let mut best = (-1.0, range.wmin);
    for omega in range.grid(grid_size) {
        let z1 = frequency_response(sys1, omega)?;
        let z2 = frequency_response(sys2, omega)?;
        let psi = chordal_distance(&z1, &z2);
        if psi > best.0 {
            best = (psi, omega);
        }
    }
    Ok(best)
}

/// Per-frequency chordal distance curve over a uniform grid; the raw data
/// behind [`gap_sweep`].
pub fn gap_curve(
    sys1: &StateSpaceModel,
    sys2: &StateSpaceModel,
    range: &FrequencyRange,
    grid_size: usize,
) -> Result<Vec<(f64, f64)>> {
    range
        .grid(grid_size.max(2))
        .into_iter()
        .map(|omega| {
            let z1 = frequency_response(sys1, omega)?;
            let z2 = frequency_response(sys2, omega)?;
            Ok((omega, chordal_distance(&z1, &z2)))
        })
        .collect()
}

/// Advisory frequency-sweep check of the gap-validity condition: true iff
/// `max |conj(z1) z2| < 1` over a grid spanning up to the shared Nyquist
/// limit. Reported alongside similarity results, never blocking.
pub fn check_gap_condition(
    sys1: &StateSpaceModel,
    sys2: &StateSpaceModel,
    grid_size: usize,
) -> Result<bool> {
    let nyquist = sys1.nyquist().min(sys2.nyquist());
    let top = nyquist * (1.0 - 1e-9);
    let size = grid_size.max(2);
    let step = top / (size - 1) as f64;
    let mut max_product = 0.0_f64;
    for i in 0..size {
        let omega = step * i as f64;
        let z1 = frequency_response(sys1, omega)?.as_complex();
        let z2 = frequency_response(sys2, omega)?.as_complex();
        max_product = max_product.max((z1.conj() * z2).norm());
    }
    Ok(max_product < 1.0)
}
