//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use thz_sounder::forward::{add_awgn, synth_ctf, NoiseSpec};
use thz_sounder::{AntennaPattern, Ctf, FrequencyGrid, Mpc, SteeringGrid};

/// Table I time resolution, s.
pub const TIME_RESOLUTION_S: f64 = 66.7e-12;

pub fn standard_setup() -> (FrequencyGrid, SteeringGrid, AntennaPattern) {
    (
        FrequencyGrid::standard(),
        SteeringGrid::standard(),
        AntennaPattern::standard_rx(),
    )
}

pub fn synth(mpcs: &[Mpc], noise: Option<NoiseSpec>) -> Ctf {
    let (grid, steering, rx) = standard_setup();
    synth_ctf(mpcs, &grid, &steering, &rx, noise.as_ref()).unwrap()
}

pub fn deg(x: f64) -> f64 {
    x.to_radians()
}

/// Absolute azimuth difference in degrees, wrapped to [0, 180].
pub fn az_err_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).to_degrees().rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn el_err_deg(a: f64, b: f64) -> f64 {
    (a - b).to_degrees().abs()
}

/// Random path at an off-grid delay and direction inside the scanned
/// elevation range.
pub fn random_offgrid_path(rng: &mut impl Rng) -> Mpc {
    let alpha = 10f64.powf(rng.gen_range(-5.0..-3.0));
    let tau = rng.gen_range(5e-9..300e-9);
    let mut aoa = rng.gen_range(0.0..360.0);
    let mut eoa = rng.gen_range(-18.0..18.0);
    // keep clear of exact grid points
    if (aoa as f64 % 10.0) < 0.5 {
        aoa += 1.3;
    }
    if (eoa as f64).rem_euclid(10.0) < 0.5 {
        eoa += 1.1;
    }
    Mpc::new(alpha, tau, deg(aoa), deg(eoa)).unwrap()
}

/// Unit-power circular Gaussian noise with no signal underneath.
pub fn pure_noise(seed: u64) -> Ctf {
    let (grid, steering, _) = standard_setup();
    let ones = Ctf::new(
        grid,
        steering.clone(),
        vec![Complex64::new(1.0, 0.0); steering.len() * grid.n_points],
    )
    .unwrap();
    let noisy = add_awgn(&ones, &NoiseSpec::new(0.0, seed)).unwrap();
    let h = noisy.data().iter().map(|z| z - Complex64::new(1.0, 0.0)).collect();
    Ctf::new(grid, steering, h).unwrap()
}

/// Two-pass power-weighted delay spread (independent of the library's
/// single-pass moments).
pub fn brute_delay_spread(alpha: &[f64], tau: &[f64]) -> f64 {
    let p: Vec<f64> = alpha.iter().map(|a| a * a).collect();
    let total: f64 = p.iter().sum();
    let mean = p.iter().zip(tau).map(|(p, t)| p * t).sum::<f64>() / total;
    let var = p.iter().zip(tau).map(|(p, t)| p * (t - mean) * (t - mean)).sum::<f64>() / total;
    var.sqrt()
}

/// Circular spread by two passes: the mean direction first, then the
/// resultant length measured about it, with `1 - cos` evaluated as
/// `2 sin^2(x / 2)` so that concentrated sets keep full precision.
pub fn brute_circular_spread(alpha: &[f64], angles: &[f64]) -> f64 {
    let p: Vec<f64> = alpha.iter().map(|a| a * a).collect();
    let total: f64 = p.iter().sum();
    let c0: f64 = p.iter().zip(angles).map(|(p, a)| p * a.cos()).sum();
    let s0: f64 = p.iter().zip(angles).map(|(p, a)| p * a.sin()).sum();
    let mean = s0.atan2(c0);
    let one_minus_c: f64 = p
        .iter()
        .zip(angles)
        .map(|(p, a)| p * 2.0 * (0.5 * (a - mean)).sin().powi(2))
        .sum::<f64>()
        / total;
    let s: f64 = p.iter().zip(angles).map(|(p, a)| p * (a - mean).sin()).sum::<f64>() / total;
    // 1 - r^2 = (1 - c)(1 + c) - s^2
    let q = one_minus_c * (2.0 - one_minus_c) - s * s;
    (-(-q).ln_1p()).max(0.0).sqrt()
}
