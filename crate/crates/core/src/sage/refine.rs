//! Space-alternating EM refinement of seeded paths.

use std::f64::consts::FRAC_PI_2;

use super::{golden_max, EstimatorConfig, MpcEstimate, PathState, Scan};
use crate::error::{Error, Result};
use crate::geometry;
use crate::types::{AntennaPattern, Ctf};

const ROW_SUPPORT: f64 = 1e-2;
const GOLDEN_ITERS: usize = 48;

/// Residual energy before refinement and after every EM sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineTrace {
    pub residual_energy: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Refines `estimates` against `ctf`. See [`sage_refine_traced`].
pub fn sage_refine(
    ctf: &Ctf,
    estimates: &[MpcEstimate],
    pattern: &AntennaPattern,
    cfg: &EstimatorConfig,
) -> Result<Vec<MpcEstimate>> {
    sage_refine_traced(ctf, estimates, pattern, cfg).map(|(e, _)| e)
}

/// SAGE sweeps over all paths until every parameter moves by less than
/// `convergence_eps` or `max_em_iterations` is reached.
///
/// Per path and sweep: delay by golden-section search of the residual
/// correlation energy, then free per-direction amplitudes in closed form,
/// then azimuth/elevation by alternating golden-section searches of the
/// pattern-matched amplitude profile. Delay and direction moves are only
/// accepted when they do not lower their objective, so the residual energy
/// never grows.
///
/// Parameter changes are measured relative to a natural scale: delay against
/// the delay resolution `1 / (K f_step)`, angles against the HPBW, gain
/// against itself.
pub fn sage_refine_traced(
    ctf: &Ctf,
    estimates: &[MpcEstimate],
    pattern: &AntennaPattern,
    cfg: &EstimatorConfig,
) -> Result<(Vec<MpcEstimate>, RefineTrace)> {
    cfg.validate()?;
    pattern.validate()?;
    if estimates.is_empty() {
        return Err(Error::invalid("sage_refine needs at least one path"));
    }
    let scan = Scan::new(ctf, pattern);
    let bin = ctf.grid().delay_resolution_s() / cfg.delay_oversampling as f64;
    let mut paths = scan.import(estimates, bin);
    let trace = refine_paths(&scan, &mut paths, cfg);
    Ok((scan.export(paths)?, trace))
}

pub(crate) fn refine_paths(scan: &Scan<'_>, paths: &mut [PathState], cfg: &EstimatorConfig) -> RefineTrace {
    let mut trace = RefineTrace {
        residual_energy: vec![scan.residual_energy(paths)],
        iterations: 0,
        converged: false,
    };
    let res = scan.grid.delay_resolution_s();
    let hpbw = scan.pattern.hpbw();
    let max_tau = scan.grid.max_delay_s();
    let tau_floor = res * 1e-9;
    let angle_floor = 1e-10;

    for _ in 0..cfg.max_em_iterations {
        let mut worst = 0.0f64;
        for l in 0..paths.len() {
            let old = (paths[l].tau, paths[l].aoa, paths[l].eoa, paths[l].alpha);

            // delay
            let current = scan.residual_all(paths, Some(l), paths[l].tau, &paths[l].corr);
            let peak = current.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
            let rows: Vec<usize> = (0..scan.n_dirs())
                .filter(|&n| current[n].norm_sqr() >= ROW_SUPPORT * peak)
                .collect();
            let step = paths[l].tau_step;
            let lo = (old.0 - step).max(0.0);
            let hi = (old.0 + step).min(max_tau);
            let (cand, _) = golden_max(|t| scan.residual_power(paths, Some(l), t, &rows), lo, hi, GOLDEN_ITERS);
            let before: f64 = current.iter().map(|c| c.norm_sqr()).sum();
            let cand_corr = scan.correlate_all(cand);
            let cand_res = scan.residual_all(paths, Some(l), cand, &cand_corr);
            let after: f64 = cand_res.iter().map(|c| c.norm_sqr()).sum();
            let p = &mut paths[l];
            if after > before {
                p.tau = cand;
                p.corr = cand_corr;
                p.amps = cand_res;
            } else {
                p.amps = current;
            }
            let moved = (p.tau - old.0).abs();
            if moved < 0.5 * step {
                p.tau_step = (step / 10.0).max(tau_floor);
            }

            // direction
            let mags: Vec<f64> = p.amps.iter().map(|a| a.norm()).collect();
            let (aoa, eoa) = refine_direction(scan, &mags, p.aoa, p.eoa, p.angle_step, cfg.angle_refine_steps);
            let moved = geometry::angle_between_unchecked(
                geometry::direction_vector(aoa, eoa),
                geometry::direction_vector(p.aoa, p.eoa),
            );
            if moved < 0.5 * p.angle_step {
                p.angle_step = (p.angle_step / 10.0).max(angle_floor);
            }
            p.aoa = aoa;
            p.eoa = eoa;
            p.alpha = scan.fit_alpha(&p.amps, p.aoa, p.eoa);

            let change = [
                (p.tau - old.0).abs() / res,
                geometry::azimuth_difference(p.aoa, old.1).abs() * old.2.cos() / hpbw,
                (p.eoa - old.2).abs() / hpbw,
                (p.alpha - old.3).abs() / old.3.max(f64::MIN_POSITIVE),
            ];
            worst = change.iter().fold(worst, |w, &c| w.max(c));
        }
        trace.iterations += 1;
        trace.residual_energy.push(scan.residual_energy(paths));
        if worst < cfg.convergence_eps {
            trace.converged = true;
            break;
        }
    }
    trace
}

/// Alternating golden-section searches in azimuth and elevation around the
/// current direction; a move is kept only if it raises the objective.
fn refine_direction(scan: &Scan<'_>, mags: &[f64], aoa: f64, eoa: f64, step: f64, passes: usize) -> (f64, f64) {
    let mut best = scan.angle_objective(mags, aoa, eoa);
    let (mut aoa, mut eoa) = (aoa, eoa);
    for _ in 0..passes {
        // azimuth steps are widened so the search spans `step` of arc
        let az_step = (step / eoa.cos().max(1e-3)).min(std::f64::consts::PI);
        let (a, fa) = golden_max(
            |a| scan.angle_objective(mags, a, eoa),
            aoa - az_step,
            aoa + az_step,
            GOLDEN_ITERS,
        );
        if fa > best {
            best = fa;
            aoa = geometry::wrap_azimuth(a);
        }
        let (e, fe) = golden_max(
            |e| scan.angle_objective(mags, aoa, e),
            (eoa - step).max(-FRAC_PI_2),
            (eoa + step).min(FRAC_PI_2),
            GOLDEN_ITERS,
        );
        if fe > best {
            best = fe;
            eoa = e;
        }
    }
    newton_polish(scan, mags, aoa, eoa, best)
}

/// Newton steps on finite-difference derivatives of the direction
/// objective. Golden-section search only resolves a smooth peak to about
/// the square root of machine precision; the derivative root is resolved to
/// machine precision, which makes the result stable under rescaling of the
/// data. Steps that lose more than rounding noise are rejected.
fn newton_polish(scan: &Scan<'_>, mags: &[f64], aoa: f64, eoa: f64, best: f64) -> (f64, f64) {
    const H: f64 = 1e-4;
    const ITERS: usize = 6;
    let f = |a: f64, e: f64| scan.angle_objective(mags, a, e);
    // fourth-order central difference: its truncation error does not bias
    // the located maximum at the precision asked of the estimator
    let d1 = |g: &dyn Fn(f64) -> f64| (8.0 * (g(H) - g(-H)) - (g(2.0 * H) - g(-2.0 * H))) / (12.0 * H);
    let (mut aoa, mut eoa, mut best) = (aoa, eoa, best);
    for _ in 0..ITERS {
        if eoa.abs() + 3.0 * H >= FRAC_PI_2 {
            break;
        }
        let f0 = f(aoa, eoa);
        let (fap, fam) = (f(aoa + H, eoa), f(aoa - H, eoa));
        let (fep, fem) = (f(aoa, eoa + H), f(aoa, eoa - H));
        let fpp = f(aoa + H, eoa + H);
        let fpm = f(aoa + H, eoa - H);
        let fmp = f(aoa - H, eoa + H);
        let fmm = f(aoa - H, eoa - H);
        let ga = d1(&|h| f(aoa + h, eoa));
        let ge = d1(&|h| f(aoa, eoa + h));
        let haa = (fap - 2.0 * f0 + fam) / (H * H);
        let hee = (fep - 2.0 * f0 + fem) / (H * H);
        let hae = (fpp - fpm - fmp + fmm) / (4.0 * H * H);
        let det = haa * hee - hae * hae;
        // only a concave neighbourhood has a maximum to step to
        if !(haa < 0.0 && det > 0.0) {
            break;
        }
        let da = -(hee * ga - hae * ge) / det;
        let de = -(haa * ge - hae * ga) / det;
        if !(da.is_finite() && de.is_finite()) || da.abs().max(de.abs()) > 1e-3 {
            break;
        }
        let (na, ne) = (aoa + da, eoa + de);
        let fnew = f(na, ne);
        if fnew < best - 1e-13 * best.abs() {
            break;
        }
        best = best.max(fnew);
        aoa = geometry::wrap_azimuth(na);
        eoa = ne;
        if da.abs().max(de.abs()) < 1e-14 {
            break;
        }
    }
    (aoa, eoa)
}
