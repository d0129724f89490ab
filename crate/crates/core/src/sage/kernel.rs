//! Delay-domain correlations against single-delay frequency responses.
//!
//! A path at delay `tau` contributes `a * exp(-j 2 pi f_k tau)` to a row. The
//! least-squares amplitude of such a component in a row `h` is
//! `correlate(h, tau) = (1/K) sum_k h[k] exp(+j 2 pi f_k tau)`, and the
//! correlation of one unit component against another is the closed-form
//! Dirichlet kernel below. Residual correlations therefore never need the
//! residual CTF itself.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::types::FrequencyGrid;

/// `(1/K) sum_k row[k] exp(+j 2 pi f_k tau)`.
pub fn correlate(row: &[Complex64], grid: &FrequencyGrid, tau: f64) -> Complex64 {
    // Horner per block, each block anchored by an exactly evaluated phasor so
    // rounding in the step phasor does not compound over thousands of bins
    const BLOCK: usize = 256;
    let w = Complex64::from_polar(1.0, TAU * (grid.f_step_hz * tau).fract());
    let mut total = Complex64::new(0.0, 0.0);
    for (b, chunk) in row.chunks(BLOCK).enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for &h in chunk.iter().rev() {
            acc = acc * w + h;
        }
        let k0 = (b * BLOCK) as f64;
        let f0 = grid.f_start_hz + k0 * grid.f_step_hz;
        total += acc * Complex64::from_polar(1.0, TAU * (f0 * tau).fract());
    }
    total / row.len() as f64
}

/// `(1/K) sum_k exp(+j 2 pi f_k delta)`.
pub fn dirichlet(grid: &FrequencyGrid, delta: f64) -> Complex64 {
    let k = grid.n_points as f64;
    let x = PI * grid.f_step_hz * delta;
    let mag = if x == 0.0 { 1.0 } else { (k * x).sin() / (k * x.sin()) };
    let centre = grid.f_start_hz + 0.5 * (k - 1.0) * grid.f_step_hz;
    Complex64::from_polar(mag, TAU * (centre * delta).fract())
}
