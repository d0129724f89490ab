//! Multipath parameter extraction from a calibrated direction-scanned CTF.
//!
//! Estimation runs in two stages. [`sic_initialize`] seeds paths by successive
//! cancellation on the zero-padded delay periodogram of every steering row.
//! [`sage_refine`] then runs space-alternating EM sweeps: for one path at a
//! time, the other paths' reconstructions are removed (E-step) and the path's
//! delay, arrival direction and per-direction amplitudes are re-fitted
//! (M-step). [`estimate_mpcs`] chains both and applies the relative power
//! threshold.
//!
//! The per-direction phase of a path is unknown, so every path carries a free
//! complex amplitude per steering direction. Only the magnitudes are tied to
//! the Rx pattern, and only for the direction fit and the path gain.

mod kernel;
mod map;
mod refine;
mod sic;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{antenna_gain, pattern_weights};
use crate::geometry::{self, Vec3};
use crate::types::{AntennaPattern, Ctf, FrequencyGrid, Mpc};

pub use kernel::{correlate, dirichlet};
pub use map::{delay_angle_map, power_delay_profile, DelayAngleMap};
pub use refine::{sage_refine, sage_refine_traced, RefineTrace};
pub use sic::sic_initialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub max_paths: usize,
    /// Paths weaker than the strongest by more than this are dropped (dB, < 0).
    pub threshold_offset_db: f64,
    pub delay_oversampling: usize,
    /// Alternating azimuth/elevation line searches per M-step.
    pub angle_refine_steps: usize,
    pub convergence_eps: f64,
    pub max_em_iterations: usize,
    /// Periodogram peaks must exceed the background level by this much (dB).
    pub detection_margin_db: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            max_paths: 50,
            threshold_offset_db: -30.0,
            delay_oversampling: 8,
            angle_refine_steps: 3,
            convergence_eps: 1e-4,
            max_em_iterations: 20,
            detection_margin_db: 15.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_paths == 0 {
            return Err(Error::invalid("max_paths must be positive"));
        }
        if !(self.threshold_offset_db < 0.0) {
            return Err(Error::invalid("threshold offset must be negative dB"));
        }
        if self.delay_oversampling == 0 {
            return Err(Error::invalid("delay oversampling must be at least 1"));
        }
        if self.angle_refine_steps == 0 || self.max_em_iterations == 0 {
            return Err(Error::invalid("refinement step counts must be positive"));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::invalid("convergence eps must be positive"));
        }
        if !self.detection_margin_db.is_finite() {
            return Err(Error::invalid("detection margin must be finite"));
        }
        Ok(())
    }
}

/// One extracted path.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcEstimate {
    /// Refined parameters; `alpha` has the Rx boresight gain divided out.
    pub mpc: Mpc,
    /// Steering direction the path was detected in.
    pub grid_aoa: f64,
    pub grid_eoa: f64,
    /// Share of the CTF energy carried by this path's reconstruction.
    pub explained_fraction: f64,
    /// Free complex amplitude per steering direction.
    pub amplitudes: Vec<Complex64>,
}

impl MpcEstimate {
    /// The path carrying the phases of its fitted per-direction amplitudes,
    /// ready for re-synthesis.
    pub fn phased_mpc(&self) -> Mpc {
        let phases = self.amplitudes.iter().map(|a| a.arg()).collect();
        self.mpc
            .clone()
            .with_phase(crate::types::PathPhase::PerDirection(phases))
    }
}

/// Estimation threshold in dB: `20 log10(alpha1) + offset_db`.
pub fn power_threshold(alpha1: f64, offset_db: f64) -> Result<f64> {
    if !(alpha1 > 0.0 && alpha1.is_finite()) {
        return Err(Error::invalid(format!(
            "reference path gain must be positive, got {alpha1}"
        )));
    }
    Ok(20.0 * alpha1.log10() + offset_db)
}

/// Full extraction: SIC seeding, SAGE refinement and threshold pruning.
///
/// The result is sorted by descending path gain.
pub fn estimate_mpcs(ctf: &Ctf, pattern: &AntennaPattern, cfg: &EstimatorConfig) -> Result<Vec<MpcEstimate>> {
    cfg.validate()?;
    pattern.validate()?;
    let scan = Scan::new(ctf, pattern);
    let mut paths = sic::seed_paths(&scan, cfg)?;
    if paths.is_empty() {
        return Ok(Vec::new());
    }
    refine::refine_paths(&scan, &mut paths, cfg);
    let strongest = paths.iter().map(|p| p.alpha).fold(0.0, f64::max);
    let floor = power_threshold(strongest, cfg.threshold_offset_db)?;
    let before = paths.len();
    paths.retain(|p| p.alpha > 0.0 && 20.0 * p.alpha.log10() >= floor);
    if paths.len() != before {
        scan.refresh_amplitudes(&mut paths, 4);
        for p in paths.iter_mut() {
            p.alpha = scan.fit_alpha(&p.amps, p.aoa, p.eoa);
        }
    }
    scan.export(paths)
}

/// Working state of one path inside the estimator.
#[derive(Debug, Clone)]
pub(crate) struct PathState {
    pub tau: f64,
    pub aoa: f64,
    pub eoa: f64,
    pub alpha: f64,
    /// Free per-direction amplitudes.
    pub amps: Vec<Complex64>,
    /// Correlation of the input CTF rows with the unit component at `tau`.
    pub corr: Vec<Complex64>,
    pub grid_dir: usize,
    pub tau_step: f64,
    pub angle_step: f64,
}

/// Read-only view of the CTF plus precomputed geometry.
pub(crate) struct Scan<'a> {
    pub ctf: &'a Ctf,
    pub grid: FrequencyGrid,
    pub pattern: AntennaPattern,
    pub units: Vec<Vec3>,
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub energy: f64,
    /// Smallest angular separation between steering directions.
    pub spacing: f64,
}

impl<'a> Scan<'a> {
    pub fn new(ctf: &'a Ctf, pattern: &AntennaPattern) -> Self {
        let units = ctf.steering().unit_vectors();
        let mut spacing = f64::INFINITY;
        for i in 0..units.len() {
            for j in 0..i {
                let a = geometry::angle_between_unchecked(units[i], units[j]);
                if a > 1e-9 && a < spacing {
                    spacing = a;
                }
            }
        }
        if !spacing.is_finite() {
            spacing = pattern.hpbw();
        }
        Scan {
            ctf,
            grid: *ctf.grid(),
            pattern: *pattern,
            azimuths: ctf.steering().directions().iter().map(|d| d.azimuth()).collect(),
            elevations: ctf.steering().directions().iter().map(|d| d.elevation()).collect(),
            units,
            energy: ctf.energy(),
            spacing,
        }
    }

    pub fn n_dirs(&self) -> usize {
        self.units.len()
    }

    pub fn k(&self) -> f64 {
        self.grid.n_points as f64
    }

    pub fn correlate_all(&self, tau: f64) -> Vec<Complex64> {
        self.ctf.rows().map(|r| kernel::correlate(r, &self.grid, tau)).collect()
    }

    /// Per-path kernel weights `kappa(tau - tau_m)`, zero for `skip`.
    fn kernels(&self, paths: &[PathState], skip: Option<usize>, tau: f64) -> Vec<Complex64> {
        paths
            .iter()
            .enumerate()
            .map(|(m, p)| {
                if Some(m) == skip {
                    Complex64::new(0.0, 0.0)
                } else {
                    kernel::dirichlet(&self.grid, tau - p.tau)
                }
            })
            .collect()
    }

    /// Residual correlation on row `n` given the raw correlation `raw`.
    fn residual_at(&self, paths: &[PathState], kern: &[Complex64], n: usize, raw: Complex64) -> Complex64 {
        let mut c = raw;
        for (p, k) in paths.iter().zip(kern) {
            c -= p.amps[n] * k;
        }
        c
    }

    /// Residual correlations at `tau` for every row, with path `skip`
    /// excluded from the subtraction; `raw` holds `correlate_all(tau)`.
    pub fn residual_all(
        &self,
        paths: &[PathState],
        skip: Option<usize>,
        tau: f64,
        raw: &[Complex64],
    ) -> Vec<Complex64> {
        let kern = self.kernels(paths, skip, tau);
        raw.iter()
            .enumerate()
            .map(|(n, &c)| self.residual_at(paths, &kern, n, c))
            .collect()
    }

    /// `sum_{n in rows} |residual correlation|^2` at `tau`.
    pub fn residual_power(&self, paths: &[PathState], skip: Option<usize>, tau: f64, rows: &[usize]) -> f64 {
        let kern = self.kernels(paths, skip, tau);
        rows.iter()
            .map(|&n| {
                let raw = kernel::correlate(self.ctf.row(n), &self.grid, tau);
                self.residual_at(paths, &kern, n, raw).norm_sqr()
            })
            .sum()
    }

    /// Gauss-Seidel sweeps of the joint per-direction least-squares amplitudes
    /// at fixed delays.
    pub fn refresh_amplitudes(&self, paths: &mut [PathState], sweeps: usize) {
        if paths.is_empty() {
            return;
        }
        for _ in 0..sweeps {
            for l in 0..paths.len() {
                let tau = paths[l].tau;
                let amps = self.residual_all(paths, Some(l), tau, &paths[l].corr);
                paths[l].amps = amps;
            }
        }
    }

    pub fn weights(&self, aoa: f64, eoa: f64) -> Vec<f64> {
        pattern_weights(&self.pattern, &self.units, geometry::direction_vector(aoa, eoa))
    }

    /// Energy a pattern-shaped, phase-free amplitude profile pointing at
    /// `(aoa, eoa)` explains: `(sum g |a|)^2 / sum g^2`.
    pub fn angle_objective(&self, mags: &[f64], aoa: f64, eoa: f64) -> f64 {
        let dir = geometry::direction_vector(aoa, eoa);
        let mut num = 0.0;
        let mut den = 0.0;
        for (u, m) in self.units.iter().zip(mags) {
            let g = antenna_gain(&self.pattern, geometry::angle_between_unchecked(*u, dir));
            num += g * m;
            den += g * g;
        }
        num * num / den
    }

    /// Least-squares path gain of the pattern-shaped profile.
    pub fn fit_alpha(&self, amps: &[Complex64], aoa: f64, eoa: f64) -> f64 {
        let g = self.weights(aoa, eoa);
        let num: f64 = g.iter().zip(amps).map(|(g, a)| g * a.norm()).sum();
        let den: f64 = g.iter().map(|g| g * g).sum();
        num / den
    }

    /// `||H - sum_l a_l (x) e(tau_l)||^2`, evaluated in closed form.
    pub fn residual_energy(&self, paths: &[PathState]) -> f64 {
        let k = self.k();
        let mut e = self.energy;
        for p in paths {
            let cross: f64 = p.amps.iter().zip(&p.corr).map(|(a, c)| (a.conj() * c).re).sum();
            e -= 2.0 * k * cross;
        }
        for l in paths {
            for m in paths {
                let kap = kernel::dirichlet(&self.grid, m.tau - l.tau);
                let s: Complex64 = l.amps.iter().zip(&m.amps).map(|(a, b)| a * b.conj()).sum();
                e += k * (s * kap).re;
            }
        }
        e
    }

    pub fn explained_fraction(&self, amps: &[Complex64]) -> f64 {
        if self.energy <= 0.0 {
            return 0.0;
        }
        let e: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.k();
        (e / self.energy).clamp(0.0, 1.0)
    }

    /// Sorts by descending gain and converts to public estimates.
    pub fn export(&self, mut paths: Vec<PathState>) -> Result<Vec<MpcEstimate>> {
        paths.sort_by(|a, b| b.alpha.total_cmp(&a.alpha).then(a.tau.total_cmp(&b.tau)));
        let max_tau = self.grid.max_delay_s();
        paths
            .into_iter()
            .filter(|p| p.alpha > 0.0 && p.alpha.is_finite())
            .map(|p| {
                let mpc = Mpc::new(
                    p.alpha,
                    p.tau.clamp(0.0, max_tau),
                    p.aoa,
                    p.eoa.clamp(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
                )?;
                Ok(MpcEstimate {
                    explained_fraction: self.explained_fraction(&p.amps),
                    grid_aoa: self.azimuths[p.grid_dir],
                    grid_eoa: self.elevations[p.grid_dir],
                    amplitudes: p.amps,
                    mpc,
                })
            })
            .collect()
    }

    /// Rebuilds working state from public estimates.
    pub fn import(&self, estimates: &[MpcEstimate], tau_step: f64) -> Vec<PathState> {
        let mut paths: Vec<PathState> = estimates
            .iter()
            .map(|e| {
                let grid_dir = self
                    .ctf
                    .steering()
                    .nearest(geometry::direction_vector(e.grid_aoa, e.grid_eoa));
                PathState {
                    tau: e.mpc.tau,
                    aoa: e.mpc.aoa,
                    eoa: e.mpc.eoa,
                    alpha: e.mpc.alpha,
                    amps: if e.amplitudes.len() == self.n_dirs() {
                        e.amplitudes.clone()
                    } else {
                        vec![Complex64::new(0.0, 0.0); self.n_dirs()]
                    },
                    corr: self.correlate_all(e.mpc.tau),
                    grid_dir,
                    tau_step,
                    angle_step: 0.5 * self.spacing,
                }
            })
            .collect();
        if estimates.iter().any(|e| e.amplitudes.len() != self.n_dirs()) {
            self.refresh_amplitudes(&mut paths, 4);
        }
        paths
    }
}

/// Golden-section search for the maximum of `f` on `[lo, hi]`.
pub(crate) fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_values() {
        assert_eq!(power_threshold(1.0, -30.0).unwrap(), -30.0);
        assert!((power_threshold(10.0, -30.0).unwrap() + 10.0).abs() < 1e-12);
        assert!(power_threshold(0.0, -30.0).is_err());
        assert!(power_threshold(-1.0, -30.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let bad = EstimatorConfig {
            threshold_offset_db: 3.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EstimatorConfig {
            delay_oversampling: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, fx) = golden_max(|x| -(x - 0.3) * (x - 0.3), -1.0, 2.0, 60);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx <= 0.0);
    }
}
