//! Shared domain types: sweep grids, antenna patterns, paths and CTF matrices.
//!
//! Angles are radians everywhere in this crate; degrees appear only in the
//! file formats of [`crate::pipeline`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, Vec3};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Uniform VNA frequency sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_start_hz: f64,
    pub f_step_hz: f64,
    pub n_points: usize,
}

impl FrequencyGrid {
    pub fn new(f_start_hz: f64, f_step_hz: f64, n_points: usize) -> Result<Self> {
        let grid = FrequencyGrid {
            f_start_hz,
            f_step_hz,
            n_points,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// 306-321 GHz in 2.5 MHz steps, 6001 points.
    pub fn standard() -> Self {
        FrequencyGrid {
            f_start_hz: 306e9,
            f_step_hz: 2.5e6,
            n_points: 6001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_step_hz.is_finite() && self.f_step_hz > 0.0) {
            return Err(Error::invalid(format!(
                "frequency step must be positive, got {}",
                self.f_step_hz
            )));
        }
        if self.n_points < 2 {
            return Err(Error::invalid("frequency grid needs at least 2 points"));
        }
        if !(self.f_start_hz.is_finite() && self.f_start_hz > 0.0) {
            return Err(Error::invalid(format!(
                "frequencies must be positive, start is {}",
                self.f_start_hz
            )));
        }
        Ok(())
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.f_start_hz + k as f64 * self.f_step_hz
    }

    pub fn f_stop_hz(&self) -> f64 {
        self.frequency(self.n_points - 1)
    }

    pub fn center_hz(&self) -> f64 {
        0.5 * (self.f_start_hz + self.f_stop_hz())
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.f_stop_hz() - self.f_start_hz
    }

    /// Unambiguous delay range `1 / f_step`.
    pub fn max_delay_s(&self) -> f64 {
        1.0 / self.f_step_hz
    }

    /// Delay-bin width of the plain inverse DFT, `1 / (K f_step)`.
    pub fn delay_resolution_s(&self) -> f64 {
        1.0 / (self.n_points as f64 * self.f_step_hz)
    }
}

/// Rx pointing direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringDirection {
    // kept in degrees so directions survive a text round-trip bit for bit
    azimuth_deg: f64,
    elevation_deg: f64,
}

impl SteeringDirection {
    /// Azimuth is wrapped onto `[0, 2π)`; elevation must lie in `[-π/2, π/2]`.
    pub fn new(azimuth: f64, elevation: f64) -> Result<Self> {
        Self::from_degrees(azimuth.to_degrees(), elevation.to_degrees())
    }

    /// Azimuth is wrapped onto `[0, 360)`; elevation must lie in `[-90, 90]`.
    pub fn from_degrees(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(Error::invalid("steering angles must be finite"));
        }
        if elevation_deg.abs() > 90.0 + 1e-10 {
            return Err(Error::invalid(format!(
                "steering elevation {elevation_deg} deg outside [-90, 90]"
            )));
        }
        let mut az = azimuth_deg.rem_euclid(360.0);
        if az >= 360.0 {
            az = 0.0;
        }
        Ok(SteeringDirection {
            azimuth_deg: az,
            elevation_deg: elevation_deg.clamp(-90.0, 90.0),
        })
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth_deg.to_radians()
    }

    pub fn elevation(&self) -> f64 {
        self.elevation_deg.to_radians()
    }

    pub fn azimuth_deg(&self) -> f64 {
        self.azimuth_deg
    }

    pub fn elevation_deg(&self) -> f64 {
        self.elevation_deg
    }

    pub fn unit_vector(&self) -> Vec3 {
        geometry::direction_vector(self.azimuth(), self.elevation())
    }
}

/// Ordered list of distinct Rx pointing directions; row `n` of a [`Ctf`]
/// belongs to direction `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringGrid {
    directions: Vec<SteeringDirection>,
}

impl SteeringGrid {
    pub fn new(directions: Vec<SteeringDirection>) -> Result<Self> {
        if directions.is_empty() {
            return Err(Error::invalid("steering grid is empty"));
        }
        for (i, a) in directions.iter().enumerate() {
            for b in &directions[..i] {
                let same_el = (a.elevation() - b.elevation()).abs() < 1e-9;
                let same_az = geometry::azimuth_difference(a.azimuth(), b.azimuth()).abs() < 1e-9;
                if same_el && (same_az || a.elevation().abs() >= std::f64::consts::FRAC_PI_2 - 1e-12) {
                    return Err(Error::invalid(format!(
                        "duplicate steering direction ({:.6} deg, {:.6} deg)",
                        a.azimuth_deg, a.elevation_deg
                    )));
                }
            }
        }
        Ok(SteeringGrid { directions })
    }

    /// Azimuth 0:10:350 deg times elevation -20:10:20 deg, azimuth-major
    /// within each elevation ring. 180 directions.
    pub fn standard() -> Self {
        let mut directions = Vec::with_capacity(180);
        for el in (-20..=20).step_by(10) {
            for az in (0..360).step_by(10) {
                directions.push(
                    SteeringDirection::from_degrees(az as f64, el as f64).expect("standard grid angles are valid"),
                );
            }
        }
        SteeringGrid { directions }
    }

    pub fn directions(&self) -> &[SteeringDirection] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn unit_vectors(&self) -> Vec<Vec3> {
        self.directions.iter().map(|d| d.unit_vector()).collect()
    }

    /// Index of the direction nearest to `v` (ties to the lower index).
    pub fn nearest(&self, v: Vec3) -> usize {
        let mut best = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let c = geometry::dot(d.unit_vector(), v);
            if c > best_dot {
                best_dot = c;
                best = i;
            }
        }
        best
    }
}

/// Rotationally symmetric horn pattern: Gaussian main lobe in dB with a flat
/// sidelobe floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaPattern {
    pub boresight_gain_dbi: f64,
    pub hpbw_deg: f64,
    pub sidelobe_floor_db: f64,
}

impl AntennaPattern {
    pub fn new(boresight_gain_dbi: f64, hpbw_deg: f64, sidelobe_floor_db: f64) -> Result<Self> {
        let p = AntennaPattern {
            boresight_gain_dbi,
            hpbw_deg,
            sidelobe_floor_db,
        };
        p.validate()?;
        Ok(p)
    }

    /// 25 dBi, 8 deg HPBW.
    pub fn standard_rx() -> Self {
        AntennaPattern {
            boresight_gain_dbi: 25.0,
            hpbw_deg: 8.0,
            sidelobe_floor_db: -30.0,
        }
    }

    /// 7 dBi, 30 deg HPBW (WR2.8 open waveguide).
    pub fn standard_tx() -> Self {
        AntennaPattern {
            boresight_gain_dbi: 7.0,
            hpbw_deg: 30.0,
            sidelobe_floor_db: -30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hpbw_deg.is_finite() && self.hpbw_deg > 0.0) {
            return Err(Error::invalid("antenna HPBW must be positive"));
        }
        if !(self.sidelobe_floor_db.is_finite() && self.sidelobe_floor_db < 0.0) {
            return Err(Error::invalid("antenna sidelobe floor must be negative dB"));
        }
        if !self.boresight_gain_dbi.is_finite() {
            return Err(Error::invalid("antenna gain must be finite"));
        }
        Ok(())
    }

    pub fn hpbw(&self) -> f64 {
        self.hpbw_deg.to_radians()
    }

    /// Boresight gain as a linear amplitude factor.
    pub fn boresight_amplitude(&self) -> f64 {
        10f64.powf(self.boresight_gain_dbi / 20.0)
    }
}

/// Phase a path picks up in each steering direction.
#[derive(Debug, Clone, PartialEq)]
pub enum PathPhase {
    /// Same phase in every direction.
    Constant(f64),
    /// One phase per steering direction, indexed like the CTF rows.
    PerDirection(Vec<f64>),
}

impl Default for PathPhase {
    fn default() -> Self {
        PathPhase::Constant(0.0)
    }
}

impl PathPhase {
    pub fn at(&self, dir: usize) -> f64 {
        match self {
            PathPhase::Constant(p) => *p,
            PathPhase::PerDirection(v) => v[dir],
        }
    }
}

/// One multipath component.
///
/// `alpha` is the antenna-de-embedded linear amplitude gain; delay in seconds,
/// arrival angles in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpc {
    pub alpha: f64,
    pub tau: f64,
    pub aoa: f64,
    pub eoa: f64,
    pub phase: PathPhase,
}

impl Mpc {
    pub fn new(alpha: f64, tau: f64, aoa: f64, eoa: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid(format!("path gain must be positive, got {alpha}")));
        }
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::DelayOutOfRange {
                tau_s: tau,
                max_s: f64::INFINITY,
            });
        }
        if !aoa.is_finite() {
            return Err(Error::invalid("azimuth of arrival must be finite"));
        }
        if !(eoa.is_finite() && eoa.abs() <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid(format!(
                "elevation of arrival {eoa} rad outside [-π/2, π/2]"
            )));
        }
        Ok(Mpc {
            alpha,
            tau,
            aoa: geometry::wrap_azimuth(aoa),
            eoa,
            phase: PathPhase::default(),
        })
    }

    /// Like [`Mpc::new`] but also rejects delays beyond the grid's range.
    pub fn on_grid(alpha: f64, tau: f64, aoa: f64, eoa: f64, grid: &FrequencyGrid) -> Result<Self> {
        let m = Self::new(alpha, tau, aoa, eoa)?;
        m.check_delay(grid)?;
        Ok(m)
    }

    pub fn with_phase(mut self, phase: PathPhase) -> Self {
        self.phase = phase;
        self
    }

    pub fn check_delay(&self, grid: &FrequencyGrid) -> Result<()> {
        let max = grid.max_delay_s();
        if !(self.tau >= 0.0 && self.tau <= max) {
            return Err(Error::DelayOutOfRange {
                tau_s: self.tau,
                max_s: max,
            });
        }
        Ok(())
    }

    pub fn power(&self) -> f64 {
        self.alpha * self.alpha
    }

    pub fn power_db(&self) -> f64 {
        20.0 * self.alpha.log10()
    }

    pub fn direction(&self) -> Vec3 {
        geometry::direction_vector(self.aoa, self.eoa)
    }
}

/// Channel transfer function: one frequency response per steering direction,
/// stored row-major (`n_dirs x n_points`).
#[derive(Debug, Clone, PartialEq)]
pub struct Ctf {
    grid: FrequencyGrid,
    steering: SteeringGrid,
    h: Vec<Complex64>,
}

impl Ctf {
    pub fn new(grid: FrequencyGrid, steering: SteeringGrid, h: Vec<Complex64>) -> Result<Self> {
        grid.validate()?;
        let expect = steering.len() * grid.n_points;
        if h.len() != expect {
            return Err(Error::Dimension(format!(
                "CTF has {} entries, grid needs {} x {} = {expect}",
                h.len(),
                steering.len(),
                grid.n_points
            )));
        }
        if let Some(i) = h.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid(format!(
                "non-finite CTF entry at direction {} frequency {}",
                i / grid.n_points,
                i % grid.n_points
            )));
        }
        Ok(Ctf { grid, steering, h })
    }

    pub fn zeros(grid: FrequencyGrid, steering: SteeringGrid) -> Self {
        let n = steering.len() * grid.n_points;
        Ctf {
            grid,
            steering,
            h: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn steering(&self) -> &SteeringGrid {
        &self.steering
    }

    pub fn n_dirs(&self) -> usize {
        self.steering.len()
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_points
    }

    pub fn data(&self) -> &[Complex64] {
        &self.h
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.h
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.h
    }

    pub fn row(&self, n: usize) -> &[Complex64] {
        let k = self.grid.n_points;
        &self.h[n * k..(n + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Complex64]> {
        self.h.chunks_exact(self.grid.n_points)
    }

    pub fn energy(&self) -> f64 {
        self.h.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Mean `|H|^2` over frequency, per direction.
    pub fn row_mean_powers(&self) -> Vec<f64> {
        let k = self.grid.n_points as f64;
        self.rows()
            .map(|r| r.iter().map(|z| z.norm_sqr()).sum::<f64>() / k)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.h.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn same_shape(&self, other: &Ctf) -> bool {
        self.grid == other.grid && self.steering == other.steering
    }

    /// Multiplies every entry by `c`.
    pub fn scaled(&self, c: Complex64) -> Ctf {
        Ctf {
            grid: self.grid,
            steering: self.steering.clone(),
            h: self.h.iter().map(|z| z * c).collect(),
        }
    }
}

/// One receiver location of a campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct RxPosition {
    pub id: String,
    pub tx_rx_distance_m: f64,
    pub ground_truth: Option<Vec<Mpc>>,
}

impl RxPosition {
    pub fn new(id: impl Into<String>, tx_rx_distance_m: f64) -> Result<Self> {
        if !(tx_rx_distance_m.is_finite() && tx_rx_distance_m > 0.0) {
            return Err(Error::invalid(format!(
                "Tx-Rx distance must be positive, got {tx_rx_distance_m}"
            )));
        }
        Ok(RxPosition {
            id: id.into(),
            tx_rx_distance_m,
            ground_truth: None,
        })
    }
}
