//! Successive-cancellation seeding on the delay periodogram.

use num_complex::Complex64;

use super::map::DelaySpectra;
use super::{golden_max, power_threshold, EstimatorConfig, MpcEstimate, PathState, Scan};
use crate::error::Result;
use crate::geometry;
use crate::types::{AntennaPattern, Ctf};

/// Rows within this fraction of the peak power take part in the delay fit.
const ROW_SUPPORT: f64 = 1e-2;
const GOLDEN_ITERS: usize = 48;
const AMPLITUDE_SWEEPS: usize = 4;

/// Seeds paths by repeatedly taking the strongest periodogram peak, fitting
/// its delay and per-direction amplitudes, and cancelling it.
///
/// Stops when the next peak is not above the background by the detection
/// margin, when its path gain falls below the threshold relative to the
/// strongest path found so far, or at `max_paths`. The arrival direction is a
/// power-weighted centroid of the steering directions adjacent to the peak.
pub fn sic_initialize(ctf: &Ctf, pattern: &AntennaPattern, cfg: &EstimatorConfig) -> Result<Vec<MpcEstimate>> {
    cfg.validate()?;
    pattern.validate()?;
    let scan = Scan::new(ctf, pattern);
    let paths = seed_paths(&scan, cfg)?;
    scan.export(paths)
}

pub(crate) fn seed_paths(scan: &Scan<'_>, cfg: &EstimatorConfig) -> Result<Vec<PathState>> {
    if !(scan.energy > 0.0) {
        return Ok(Vec::new());
    }
    let mut spectra = DelaySpectra::new(scan.ctf, cfg.delay_oversampling)?;
    let detect = spectra.background_level() * 10f64.powf(cfg.detection_margin_db / 10.0);
    let bin = spectra.bin_width_s();
    let max_tau = scan.grid.max_delay_s();
    let n_bins = spectra.n_bins();

    let mut paths: Vec<PathState> = Vec::new();
    let mut strongest = 0.0f64;

    while paths.len() < cfg.max_paths {
        let (n_pk, b_pk, p_pk) = spectra.peak(&scan.azimuths);
        if !(p_pk > detect && p_pk > 0.0) {
            break;
        }
        let rows: Vec<usize> = (0..scan.n_dirs())
            .filter(|&n| spectra.power(n, b_pk) >= ROW_SUPPORT * p_pk)
            .collect();

        // the periodogram is circular in delay; bins past the midpoint of the
        // last cell still map into [0, max_tau]
        let tau0 = (b_pk % n_bins) as f64 * bin;
        let lo = (tau0 - bin).max(0.0);
        let hi = (tau0 + bin).min(max_tau);
        let (tau, _) = golden_max(|t| scan.residual_power(&paths, None, t, &rows), lo, hi, GOLDEN_ITERS);

        let corr = scan.correlate_all(tau);
        let amps = scan.residual_all(&paths, None, tau, &corr);
        let (aoa, eoa) = centroid(scan, n_pk, &amps);
        let alpha = scan.fit_alpha(&amps, aoa, eoa);
        if !(alpha > 0.0 && alpha.is_finite()) {
            break;
        }
        if strongest > 0.0 && 20.0 * alpha.log10() < power_threshold(strongest, cfg.threshold_offset_db)? {
            break;
        }
        strongest = strongest.max(alpha);

        paths.push(PathState {
            tau,
            aoa,
            eoa,
            alpha,
            amps,
            corr,
            grid_dir: n_pk,
            tau_step: bin,
            angle_step: 0.5 * scan.spacing,
        });
        scan.refresh_amplitudes(&mut paths, AMPLITUDE_SWEEPS);
        spectra.push_component(tau);
        let amps: Vec<&[Complex64]> = paths.iter().map(|p| p.amps.as_slice()).collect();
        spectra.sync(&amps);
    }

    for p in paths.iter_mut() {
        p.alpha = scan.fit_alpha(&p.amps, p.aoa, p.eoa);
    }
    Ok(paths)
}

/// Power-weighted mean direction of the steering rows within 1.5 grid
/// spacings of row `peak`.
fn centroid(scan: &Scan<'_>, peak: usize, amps: &[Complex64]) -> (f64, f64) {
    let centre = scan.units[peak];
    let radius = 1.5 * scan.spacing + 1e-9;
    let mut acc = [0.0; 3];
    for (u, a) in scan.units.iter().zip(amps) {
        if geometry::angle_between_unchecked(*u, centre) <= radius {
            let w = a.norm_sqr();
            for i in 0..3 {
                acc[i] += w * u[i];
            }
        }
    }
    if geometry::norm(acc) == 0.0 {
        return (scan.azimuths[peak], scan.elevations[peak]);
    }
    geometry::vector_angles(acc)
}
