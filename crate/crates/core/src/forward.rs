//! Forward model: direction-scanned CTFs synthesized from a list of paths.
//!
//! Row `n` of the synthesized CTF is
//! `sum_l alpha_l * g(psi_nl) * exp(j phi_ln) * exp(-j 2 pi f_k tau_l)` plus
//! optional complex white noise, where `psi_nl` is the angle between steering
//! direction `n` and the arrival direction of path `l`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between_unchecked, Vec3};
use crate::types::{AntennaPattern, Ctf, FrequencyGrid, Mpc, SteeringGrid};

/// Oscillator re-anchoring interval for the phase recurrences.
const REANCHOR: usize = 128;

/// Linear amplitude gain of `pattern` at `off_boresight` radians.
///
/// Gaussian main lobe `G0 - 12 (psi / HPBW)^2` dB, clamped at
/// `G0 + sidelobe_floor`. The 3 dB point falls exactly at `HPBW / 2`.
pub fn antenna_gain(pattern: &AntennaPattern, off_boresight: f64) -> f64 {
    10f64.powf(antenna_gain_db(pattern, off_boresight) / 20.0)
}

/// Power gain in dBi at `off_boresight` radians.
pub fn antenna_gain_db(pattern: &AntennaPattern, off_boresight: f64) -> f64 {
    let x = off_boresight / pattern.hpbw();
    let main = -12.0 * x * x;
    pattern.boresight_gain_dbi + main.max(pattern.sidelobe_floor_db)
}

/// Amplitude gain of every steering direction towards the unit vector `dir`.
pub fn pattern_weights(pattern: &AntennaPattern, steering: &[Vec3], dir: Vec3) -> Vec<f64> {
    steering
        .iter()
        .map(|&u| antenna_gain(pattern, angle_between_unchecked(u, dir)))
        .collect()
}

/// `exp(-j 2 pi f tau)` with the phase reduced before the trig call.
pub(crate) fn delay_phasor(f_hz: f64, tau_s: f64) -> Complex64 {
    let cycles = (f_hz * tau_s).fract();
    Complex64::from_polar(1.0, -TAU * cycles)
}

/// Adds `coef * exp(-j 2 pi f_k tau)` to every sample of `row`.
pub(crate) fn accumulate_delay(row: &mut [Complex64], grid: &FrequencyGrid, tau: f64, coef: Complex64) {
    let step = delay_phasor(grid.f_step_hz, tau);
    for (block, chunk) in row.chunks_mut(REANCHOR).enumerate() {
        let k0 = block * REANCHOR;
        let mut z = coef * delay_phasor(grid.frequency(k0), tau);
        for h in chunk.iter_mut() {
            *h += z;
            z *= step;
        }
    }
}

/// Additive noise realization parameters.
///
/// `snr_db` is relative to the mean power of the strongest steering
/// direction; `f64::INFINITY` disables noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Self {
        NoiseSpec { snr_db, seed }
    }

    pub fn noiseless() -> Self {
        NoiseSpec {
            snr_db: f64::INFINITY,
            seed: 0,
        }
    }

    pub fn is_off(&self) -> bool {
        self.snr_db == f64::INFINITY
    }
}

/// Synthesizes the CTF seen through `pattern` for the paths in `mpcs`.
pub fn synth_ctf(
    mpcs: &[Mpc],
    grid: &FrequencyGrid,
    steering: &SteeringGrid,
    pattern: &AntennaPattern,
    noise: Option<&NoiseSpec>,
) -> Result<Ctf> {
    grid.validate()?;
    for m in mpcs {
        m.check_delay(grid)?;
        if let crate::types::PathPhase::PerDirection(p) = &m.phase {
            if p.len() != steering.len() {
                return Err(Error::Dimension(format!(
                    "path has {} per-direction phases, grid has {} directions",
                    p.len(),
                    steering.len()
                )));
            }
        }
    }
    let units = steering.unit_vectors();
    let dirs: Vec<Vec3> = mpcs.iter().map(Mpc::direction).collect();
    let k = grid.n_points;
    let mut h = vec![Complex64::new(0.0, 0.0); steering.len() * k];
    h.par_chunks_mut(k).enumerate().for_each(|(n, row)| {
        for (m, &d) in mpcs.iter().zip(&dirs) {
            let g = antenna_gain(pattern, angle_between_unchecked(units[n], d));
            let coef = Complex64::from_polar(m.alpha * g, m.phase.at(n));
            accumulate_delay(row, grid, m.tau, coef);
        }
    });
    let ctf = Ctf::new(*grid, steering.clone(), h)?;
    match noise {
        Some(spec) if !spec.is_off() => add_awgn(&ctf, spec),
        _ => Ok(ctf),
    }
}

/// Adds circular complex white Gaussian noise.
///
/// Noise power per sample is `max_n mean_k |H|^2 * 10^(-snr/10)`. Each row
/// draws from its own ChaCha stream of the master seed, so the realization
/// does not depend on evaluation order.
pub fn add_awgn(ctf: &Ctf, noise: &NoiseSpec) -> Result<Ctf> {
    if noise.is_off() {
        return Ok(ctf.clone());
    }
    if !noise.snr_db.is_finite() {
        return Err(Error::invalid(format!(
            "SNR must be finite or +inf, got {}",
            noise.snr_db
        )));
    }
    let reference = ctf.row_mean_powers().into_iter().fold(0.0, f64::max);
    if reference <= 0.0 {
        return Err(Error::NoPower("cannot reference noise power to an all-zero CTF".into()));
    }
    let variance = reference * 10f64.powf(-noise.snr_db / 10.0);
    let sigma = (variance / 2.0).sqrt();
    let k = ctf.n_points();
    let mut out = ctf.clone();
    out.data_mut().par_chunks_mut(k).enumerate().for_each(|(n, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(n as u64);
        for h in row.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *h += Complex64::new(sigma * re, sigma * im);
        }
    });
    Ok(out)
}

/// Frequency response of the measurement chain, removed by calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemResponse {
    s_connect: Vec<Complex64>,
    s_extra: Vec<Complex64>,
}

impl SystemResponse {
    /// Smallest invertible response magnitude.
    pub const MIN_MAGNITUDE: f64 = 1e-12;

    pub fn new(s_connect: Vec<Complex64>, s_extra: Vec<Complex64>) -> Result<Self> {
        if s_connect.len() != s_extra.len() {
            return Err(Error::Dimension(format!(
                "S21_connect has {} points, S21_extra has {}",
                s_connect.len(),
                s_extra.len()
            )));
        }
        for (i, (c, e)) in s_connect.iter().zip(&s_extra).enumerate() {
            for (name, z) in [("connect", c), ("extra", e)] {
                if !(z.re.is_finite() && z.im.is_finite()) {
                    return Err(Error::invalid(format!("non-finite S21_{name} at index {i}")));
                }
                if z.norm() < Self::MIN_MAGNITUDE {
                    return Err(Error::SingularResponse {
                        index: i,
                        magnitude: z.norm(),
                    });
                }
            }
        }
        Ok(SystemResponse { s_connect, s_extra })
    }

    /// Back-to-back response only; the extra term defaults to unity.
    pub fn from_connect(s_connect: Vec<Complex64>) -> Result<Self> {
        let ones = vec![Complex64::new(1.0, 0.0); s_connect.len()];
        Self::new(s_connect, ones)
    }

    pub fn identity(n: usize) -> Self {
        let ones = vec![Complex64::new(1.0, 0.0); n];
        SystemResponse {
            s_connect: ones.clone(),
            s_extra: ones,
        }
    }

    /// Unchecked constructor; calibration still guards every bin.
    pub fn from_parts_unchecked(s_connect: Vec<Complex64>, s_extra: Vec<Complex64>) -> Self {
        SystemResponse { s_connect, s_extra }
    }

    pub fn len(&self) -> usize {
        self.s_connect.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s_connect.is_empty()
    }

    pub fn s_connect(&self) -> &[Complex64] {
        &self.s_connect
    }

    pub fn s_extra(&self) -> &[Complex64] {
        &self.s_extra
    }

    /// `S21_extra[k] * S21_connect[k]`.
    pub fn combined(&self) -> Vec<Complex64> {
        self.s_connect.iter().zip(&self.s_extra).map(|(c, e)| c * e).collect()
    }
}

/// Uncalibrated VNA sweep: a CTF still multiplied by the system response.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSweep(pub Ctf);

impl RawSweep {
    pub fn into_inner(self) -> Ctf {
        self.0
    }

    pub fn ctf(&self) -> &Ctf {
        &self.0
    }
}

/// Applies the system response to a channel CTF, producing what the VNA
/// would record.
pub fn apply_system_response(ctf: &Ctf, sys: &SystemResponse) -> Result<RawSweep> {
    if sys.len() != ctf.n_points() {
        return Err(Error::Dimension(format!(
            "system response has {} points, CTF has {}",
            sys.len(),
            ctf.n_points()
        )));
    }
    let comb = sys.combined();
    let mut raw = ctf.clone();
    for row in raw.data_mut().chunks_exact_mut(comb.len()) {
        for (h, s) in row.iter_mut().zip(&comb) {
            *h *= s;
        }
    }
    Ok(RawSweep(raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SteeringDirection;

    fn small_grid() -> FrequencyGrid {
        FrequencyGrid::standard()
    }

    #[test]
    fn gain_on_boresight_and_at_half_beamwidth() {
        let rx = AntennaPattern::standard_rx();
        let g0 = antenna_gain(&rx, 0.0);
        assert!((g0 - 10f64.powf(25.0 / 20.0)).abs() < 1e-12);
        let g3 = antenna_gain(&rx, 4f64.to_radians());
        let drop_db = 20.0 * (g0 / g3).log10();
        assert!((drop_db - 3.0).abs() < 1e-12, "{drop_db}");
        let gf = antenna_gain(&rx, std::f64::consts::PI);
        assert!((20.0 * gf.log10() - (25.0 - 30.0)).abs() < 1e-12);
    }

    #[test]
    fn gain_is_non_increasing() {
        let rx = AntennaPattern::standard_rx();
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let g = antenna_gain(&rx, std::f64::consts::PI * i as f64 / 1000.0);
            assert!(g <= prev);
            prev = g;
        }
    }

    #[test]
    fn zero_delay_boresight_is_flat() {
        let grid = small_grid();
        let steering = SteeringGrid::new(vec![SteeringDirection::from_degrees(0.0, 0.0).unwrap()]).unwrap();
        let rx = AntennaPattern::standard_rx();
        let m = Mpc::new(0.01, 0.0, 0.0, 0.0).unwrap();
        let ctf = synth_ctf(&[m], &grid, &steering, &rx, None).unwrap();
        let expect = 0.01 * rx.boresight_amplitude();
        for z in ctf.row(0) {
            assert!((z.norm() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn one_bin_delay_rotates_once_across_band() {
        let grid = small_grid();
        let steering = SteeringGrid::new(vec![SteeringDirection::from_degrees(0.0, 0.0).unwrap()]).unwrap();
        let rx = AntennaPattern::standard_rx();
        let tau = 66.7e-12;
        let m = Mpc::new(1.0, tau, 0.0, 0.0).unwrap();
        let ctf = synth_ctf(&[m], &grid, &steering, &rx, None).unwrap();
        let row = ctf.row(0);
        // per-bin phase step
        let step = (row[1] * row[0].conj()).arg();
        assert!((step + TAU * grid.f_step_hz * tau).abs() < 1e-9);
        // accumulated rotation over the band
        let total = TAU * grid.bandwidth_hz() * tau;
        assert!((total / TAU - 1.0).abs() < 1e-3);
        let unwrapped: f64 = row.windows(2).map(|w| (w[1] * w[0].conj()).arg()).sum();
        assert!((unwrapped + total).abs() < 1e-6);
    }

    #[test]
    fn synthesis_is_linear() {
        let grid = FrequencyGrid::new(306e9, 2.5e6, 600).unwrap();
        let steering = SteeringGrid::standard();
        let rx = AntennaPattern::standard_rx();
        let a = Mpc::new(1e-3, 20e-9, 0.5, 0.1).unwrap();
        let b = Mpc::new(3e-4, 35.3e-9, 2.0, -0.2)
            .unwrap()
            .with_phase(crate::types::PathPhase::Constant(1.1));
        let both = synth_ctf(&[a.clone(), b.clone()], &grid, &steering, &rx, None).unwrap();
        let ha = synth_ctf(&[a], &grid, &steering, &rx, None).unwrap();
        let hb = synth_ctf(&[b], &grid, &steering, &rx, None).unwrap();
        for ((x, y), z) in both.data().iter().zip(ha.data()).zip(hb.data()) {
            assert!((x - (y + z)).norm() <= 1e-12 * x.norm().max(1e-30));
        }
    }

    #[test]
    fn delay_out_of_range_is_rejected() {
        let grid = small_grid();
        let m = Mpc::new(1.0, 500e-9, 0.0, 0.0).unwrap();
        let r = synth_ctf(
            &[m],
            &grid,
            &SteeringGrid::standard(),
            &AntennaPattern::standard_rx(),
            None,
        );
        assert!(matches!(r, Err(Error::DelayOutOfRange { .. })));
    }

    #[test]
    fn empty_path_list_gives_zero_ctf() {
        let grid = FrequencyGrid::new(306e9, 2.5e6, 16).unwrap();
        let ctf = synth_ctf(
            &[],
            &grid,
            &SteeringGrid::standard(),
            &AntennaPattern::standard_rx(),
            None,
        )
        .unwrap();
        assert!(ctf.is_zero());
    }

    fn unit_ctf(k: usize) -> Ctf {
        let grid = FrequencyGrid::new(306e9, 2.5e6, k).unwrap();
        let steering = SteeringGrid::standard();
        let n = steering.len() * k;
        Ctf::new(grid, steering, vec![Complex64::new(1.0, 0.0); n]).unwrap()
    }

    #[test]
    fn awgn_off_and_deterministic() {
        let ctf = unit_ctf(32);
        assert_eq!(add_awgn(&ctf, &NoiseSpec::noiseless()).unwrap(), ctf);
        let spec = NoiseSpec::new(20.0, 42);
        let a = add_awgn(&ctf, &spec).unwrap();
        let b = add_awgn(&ctf, &spec).unwrap();
        assert_eq!(a, b);
        let c = add_awgn(&ctf, &NoiseSpec::new(20.0, 43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn awgn_power_matches_snr() {
        let ctf = unit_ctf(6001);
        let noisy = add_awgn(&ctf, &NoiseSpec::new(30.0, 7)).unwrap();
        let n = ctf.data().len() as f64;
        let p: f64 = noisy
            .data()
            .iter()
            .zip(ctf.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n;
        assert!((p / 1e-3 - 1.0).abs() < 0.05, "noise power {p}");
    }

    #[test]
    fn awgn_needs_power_reference() {
        let grid = FrequencyGrid::new(306e9, 2.5e6, 8).unwrap();
        let zero = Ctf::zeros(grid, SteeringGrid::standard());
        assert!(matches!(
            add_awgn(&zero, &NoiseSpec::new(10.0, 1)),
            Err(Error::NoPower(_))
        ));
    }

    #[test]
    fn system_response_application() {
        let ctf = unit_ctf(8).scaled(Complex64::new(0.5, -0.25));
        let id = SystemResponse::identity(8);
        assert_eq!(apply_system_response(&ctf, &id).unwrap().0, ctf);
        let two = vec![Complex64::new(2.0, 0.0); 8];
        let sys = SystemResponse::new(two.clone(), two).unwrap();
        let raw = apply_system_response(&ctf, &sys).unwrap();
        for (r, h) in raw.0.data().iter().zip(ctf.data()) {
            assert_eq!(*r, h * 4.0);
        }
        assert!(apply_system_response(&ctf, &SystemResponse::identity(7)).is_err());
    }
}
