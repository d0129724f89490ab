//! Channel statistics: path loss, close-in model fit, K-factor, delay and
//! angular spreads, and intra-cluster spreads.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::clustering::Cluster;
use crate::error::{Error, Result};
use crate::geometry;
use crate::types::{Ctf, Mpc, SPEED_OF_LIGHT};

/// How angular spreads are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SpreadMode {
    /// Resultant-vector spread `sqrt(-2 ln |sum p e^{j theta}| / sum p)`.
    #[default]
    Circular,
    /// Power-weighted RMS of angles centred on their circular mean.
    Rms,
}

/// Free-space path loss in dB.
pub fn fspl(d_m: f64, f_hz: f64) -> Result<f64> {
    if !(d_m > 0.0 && d_m.is_finite() && f_hz > 0.0 && f_hz.is_finite()) {
        return Err(Error::invalid(format!(
            "free-space path loss needs positive distance and frequency, got {d_m} m, {f_hz} Hz"
        )));
    }
    Ok(-20.0 * (SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * f_hz * d_m)).log10())
}

/// Loss of the strongest steering direction: `-10 log10 max_n mean_k |H|^2`.
pub fn pl_best(ctf: &Ctf) -> Result<f64> {
    let best = ctf.row_mean_powers().into_iter().fold(0.0, f64::max);
    if !(best > 0.0) {
        return Err(Error::NoPower("path loss of a zero-power channel".into()));
    }
    Ok(-10.0 * best.log10())
}

/// [`pl_best`] with the receive boresight gain de-embedded, so the value is
/// comparable to free-space path loss.
pub fn pl_best_compensated(ctf: &Ctf, rx_boresight_gain_dbi: f64) -> Result<f64> {
    Ok(pl_best(ctf)? + rx_boresight_gain_dbi)
}

/// Omnidirectional loss from the total path power: `-10 log10 sum alpha^2`.
pub fn pl_omni(mpcs: &[Mpc]) -> Result<f64> {
    if mpcs.is_empty() {
        return Err(Error::invalid("omnidirectional path loss needs at least one path"));
    }
    let p: f64 = mpcs.iter().map(Mpc::power).sum();
    if !(p > 0.0) {
        return Err(Error::NoPower("path loss of a zero-power channel".into()));
    }
    Ok(-10.0 * p.log10())
}

/// One path-loss observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossPoint {
    pub d_m: f64,
    pub pl_db: f64,
}

/// Close-in reference-distance model `PL = FSPL(d0) + 10 n log10(d/d0) + X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiFit {
    /// Path-loss exponent.
    pub n: f64,
    /// Population standard deviation of the residuals, dB.
    pub sigma_sf: f64,
    /// Anchor loss at the reference distance, dB.
    pub fspl_d0: f64,
    /// Per-point residuals `pl - model`, dB.
    pub residuals: Vec<f64>,
}

/// Least-squares fit of the exponent with the intercept pinned at
/// `FSPL(d0, f)`.
///
/// The intercept is not free, so the residuals are orthogonal to
/// `log10(d/d0)` but need not sum to zero.
pub fn fit_ci(points: &[PathLossPoint], f_hz: f64, d0_m: f64) -> Result<CiFit> {
    if points.len() < 2 {
        return Err(Error::SingularFit(format!(
            "close-in fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    let fspl_d0 = fspl(d0_m, f_hz)?;
    for p in points {
        if !(p.d_m >= d0_m && p.pl_db.is_finite()) {
            return Err(Error::invalid(format!(
                "path-loss point ({} m, {} dB) is invalid or closer than d0 = {d0_m} m",
                p.d_m, p.pl_db
            )));
        }
    }
    if points.iter().all(|p| p.d_m == points[0].d_m) {
        return Err(Error::SingularFit("all path-loss points share one distance".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| 10.0 * (p.d_m / d0_m).log10()).collect();
    let sxx: f64 = x.iter().map(|x| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::SingularFit(
            "all path-loss points lie at the reference distance".into(),
        ));
    }
    let sxy: f64 = x.iter().zip(points).map(|(x, p)| x * (p.pl_db - fspl_d0)).sum();
    let n = sxy / sxx;
    let residuals: Vec<f64> = x.iter().zip(points).map(|(x, p)| p.pl_db - fspl_d0 - n * x).collect();
    let (_, sigma_sf) = mean_std(&residuals);
    Ok(CiFit {
        n,
        sigma_sf,
        fspl_d0,
        residuals,
    })
}

/// Strongest-cluster power over the sum of the rest, in dB; `None` for a
/// single cluster.
pub fn k_factor(clusters: &[Cluster]) -> Option<f64> {
    let (first, rest) = clusters.split_first()?;
    let strongest = clusters.iter().map(|c| c.power).fold(first.power, f64::max);
    let total: f64 = std::iter::once(first).chain(rest).map(|c| c.power).sum();
    let others = total - strongest;
    if rest.is_empty() || !(others > 0.0) {
        return None;
    }
    Some(10.0 * (strongest / others).log10())
}

/// Log-normal summary of K-factors (mean and population std in dB).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalFit {
    pub mean_db: f64,
    pub std_db: f64,
    pub count: usize,
}

pub fn fit_log_normal(values_db: &[f64]) -> Option<LogNormalFit> {
    if values_db.is_empty() {
        return None;
    }
    let (mean_db, std_db) = mean_std(values_db);
    Some(LogNormalFit {
        mean_db,
        std_db,
        count: values_db.len(),
    })
}

/// Power-weighted RMS delay spread with `p = alpha^2`; zero for fewer than
/// two paths.
pub fn rms_delay_spread(mpcs: &[Mpc]) -> f64 {
    let total: f64 = mpcs.iter().map(Mpc::power).sum();
    if mpcs.len() < 2 || !(total > 0.0) {
        return 0.0;
    }
    // pairwise form of the weighted variance: no cancellation between large
    // moments when one path dominates
    let mut acc = 0.0;
    for (i, a) in mpcs.iter().enumerate() {
        for b in &mpcs[i + 1..] {
            acc += a.power() * b.power() * (a.tau - b.tau).powi(2);
        }
    }
    (acc / (total * total)).sqrt()
}

/// Azimuth and elevation spreads of arrival, rad.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularSpread {
    pub asa: f64,
    pub esa: f64,
}

pub fn angular_spreads(mpcs: &[Mpc], mode: SpreadMode) -> AngularSpread {
    let weights: Vec<f64> = mpcs.iter().map(Mpc::power).collect();
    let az: Vec<f64> = mpcs.iter().map(|m| m.aoa).collect();
    let el: Vec<f64> = mpcs.iter().map(|m| m.eoa).collect();
    AngularSpread {
        asa: angle_spread(&az, &weights, mode),
        esa: angle_spread(&el, &weights, mode),
    }
}

fn angle_spread(angles: &[f64], weights: &[f64], mode: SpreadMode) -> f64 {
    let total: f64 = weights.iter().sum();
    if angles.len() < 2 || !(total > 0.0) {
        return 0.0;
    }
    match mode {
        SpreadMode::Circular => {
            // 1 - |R|^2 = sum_{i<j} 4 w_i w_j sin^2((a_i - a_j) / 2) / W^2,
            // accurate even when the resultant length is close to one
            let mut acc = 0.0;
            for i in 0..angles.len() {
                for j in i + 1..angles.len() {
                    acc += 4.0 * weights[i] * weights[j] * (0.5 * (angles[i] - angles[j])).sin().powi(2);
                }
            }
            let q = acc / (total * total);
            if q >= 1.0 {
                return f64::INFINITY;
            }
            // sigma^2 = -2 ln |R| = -ln(1 - q)
            (-(-q).ln_1p()).max(0.0).sqrt()
        }
        SpreadMode::Rms => {
            let centre = angles
                .iter()
                .zip(weights)
                .map(|(&a, &w)| Complex64::from_polar(w, a))
                .sum::<Complex64>()
                .arg();
            let var: f64 = angles
                .iter()
                .zip(weights)
                .map(|(&a, &w)| w * geometry::azimuth_difference(a, centre).powi(2))
                .sum::<f64>()
                / total;
            let mean: f64 = angles
                .iter()
                .zip(weights)
                .map(|(&a, &w)| w * geometry::azimuth_difference(a, centre))
                .sum::<f64>()
                / total;
            (var - mean * mean).max(0.0).sqrt()
        }
    }
}

/// Spreads of one cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpread {
    pub members: usize,
    pub power: f64,
    pub cds_s: f64,
    pub casa_rad: f64,
    pub cesa_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    pub n_clusters: usize,
    pub clusters: Vec<ClusterSpread>,
    /// Means over clusters with at least two members; `None` when there are
    /// no such clusters.
    pub mean_cds_s: Option<f64>,
    pub mean_casa_rad: Option<f64>,
    pub mean_cesa_rad: Option<f64>,
}

pub fn cluster_stats(clusters: &[Cluster], mpcs: &[Mpc], mode: SpreadMode) -> Result<ClusterStats> {
    let mut spreads = Vec::with_capacity(clusters.len());
    for c in clusters {
        let members: Vec<Mpc> = c
            .members
            .iter()
            .map(|&i| {
                mpcs.get(i).cloned().ok_or_else(|| {
                    Error::Dimension(format!("cluster member {i} out of range for {} paths", mpcs.len()))
                })
            })
            .collect::<Result<_>>()?;
        let ang = angular_spreads(&members, mode);
        spreads.push(ClusterSpread {
            members: members.len(),
            power: c.power,
            cds_s: rms_delay_spread(&members),
            casa_rad: ang.asa,
            cesa_rad: ang.esa,
        });
    }
    let multi: Vec<&ClusterSpread> = spreads.iter().filter(|s| s.members >= 2).collect();
    let mean = |f: fn(&ClusterSpread) -> f64| -> Option<f64> {
        if multi.is_empty() {
            None
        } else {
            Some(multi.iter().map(|s| f(s)).sum::<f64>() / multi.len() as f64)
        }
    };
    Ok(ClusterStats {
        n_clusters: clusters.len(),
        mean_cds_s: mean(|s| s.cds_s),
        mean_casa_rad: mean(|s| s.casa_rad),
        mean_cesa_rad: mean(|s| s.cesa_rad),
        clusters: spreads,
    })
}

/// Statistics of one receiver position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionStats {
    /// Best-direction loss, receive boresight gain de-embedded, dB.
    pub pl_best_db: Option<f64>,
    pub pl_omni_db: Option<f64>,
    pub k_factor_db: Option<f64>,
    pub ds_s: f64,
    pub asa_rad: f64,
    pub esa_rad: f64,
    pub n_mpcs: usize,
    pub clusters: ClusterStats,
}

/// Statistics of one snapshot. `ctf` is optional because the best-direction
/// loss needs the measurement itself, not only the extracted paths.
pub fn position_stats(
    ctf: Option<&Ctf>,
    rx_boresight_gain_dbi: f64,
    mpcs: &[Mpc],
    clusters: &[Cluster],
    mode: SpreadMode,
) -> Result<PositionStats> {
    let pl_best_db = match ctf {
        Some(c) => Some(pl_best_compensated(c, rx_boresight_gain_dbi)?),
        None => None,
    };
    let ang = angular_spreads(mpcs, mode);
    Ok(PositionStats {
        pl_best_db,
        pl_omni_db: if mpcs.is_empty() { None } else { Some(pl_omni(mpcs)?) },
        k_factor_db: k_factor(clusters),
        ds_s: rms_delay_spread(mpcs),
        asa_rad: ang.asa,
        esa_rad: ang.esa,
        n_mpcs: mpcs.len(),
        clusters: cluster_stats(clusters, mpcs, mode)?,
    })
}

/// Mean and population standard deviation.
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::form_clusters;
    use crate::types::{FrequencyGrid, SteeringDirection, SteeringGrid};

    fn mpc(alpha: f64, tau_ns: f64, aoa_deg: f64, eoa_deg: f64) -> Mpc {
        Mpc::new(alpha, tau_ns * 1e-9, aoa_deg.to_radians(), eoa_deg.to_radians()).unwrap()
    }

    fn cluster(power: f64) -> Cluster {
        Cluster {
            members: vec![0],
            representative: 0,
            tau: 0.0,
            aoa: 0.0,
            eoa: 0.0,
            power,
        }
    }

    #[test]
    fn fspl_values_and_laws() {
        assert!((fspl(1.0, 313.5e9).unwrap() - 82.38).abs() < 0.01);
        let d = 7.3;
        let f = 300e9;
        assert!((fspl(2.0 * d, f).unwrap() - fspl(d, f).unwrap() - 20.0 * 2f64.log10()).abs() < 1e-12);
        assert!((fspl(1.0, 2.0 * f).unwrap() - fspl(1.0, f).unwrap() - 6.0206).abs() < 1e-4);
        assert!(fspl(0.0, f).is_err());
        assert!(fspl(1.0, -1.0).is_err());
    }

    fn small_ctf(rows: &[f64]) -> Ctf {
        let grid = FrequencyGrid {
            f_start_hz: 300e9,
            f_step_hz: 1e9,
            n_points: 4,
        };
        let dirs = (0..rows.len())
            .map(|i| SteeringDirection::from_degrees(10.0 * i as f64, 0.0).unwrap())
            .collect();
        let steering = SteeringGrid::new(dirs).unwrap();
        let h = rows
            .iter()
            .flat_map(|&a| std::iter::repeat(Complex64::new(0.0, a)).take(4))
            .collect();
        Ctf::new(grid, steering, h).unwrap()
    }

    #[test]
    fn pl_best_cases() {
        assert!(pl_best(&small_ctf(&[0.0, 1.0, 0.0])).unwrap().abs() < 1e-12);
        assert!((pl_best(&small_ctf(&[0.1, 0.05])).unwrap() - 20.0).abs() < 1e-12);
        assert!((pl_best_compensated(&small_ctf(&[0.1]), 25.0).unwrap() - 45.0).abs() < 1e-12);
        assert!(matches!(pl_best(&small_ctf(&[0.0, 0.0])), Err(Error::NoPower(_))));
    }

    #[test]
    fn pl_omni_cases() {
        assert_eq!(pl_omni(&[mpc(1.0, 0.0, 0.0, 0.0)]).unwrap(), 0.0);
        let h = 0.5f64.sqrt();
        assert!(pl_omni(&[mpc(h, 0.0, 0.0, 0.0), mpc(h, 1.0, 0.0, 0.0)]).unwrap().abs() < 1e-12);
        assert!(pl_omni(&[]).is_err());
    }

    #[test]
    fn ci_exact_model() {
        let f = 313.5e9;
        let pts: Vec<PathLossPoint> = [1.5, 3.0, 7.0, 12.0]
            .iter()
            .map(|&d| PathLossPoint {
                d_m: d,
                pl_db: fspl(1.0, f).unwrap() + 20.0 * f64::log10(d),
            })
            .collect();
        let fit = fit_ci(&pts, f, 1.0).unwrap();
        assert!((fit.n - 2.0).abs() < 1e-12);
        assert!(fit.sigma_sf < 1e-9);
    }

    #[test]
    fn ci_alternating_residuals() {
        // d and 100/d pairs are symmetric in log10(d) about 1, but with d0 = 1
        // the regressor is not centred: pick pairs so that +3/-3 cancel in the
        // normal equation, i.e. equal regressor values carry opposite offsets
        let f = 300e9;
        let a = fspl(1.0, f).unwrap();
        let pts = vec![
            PathLossPoint {
                d_m: 2.0,
                pl_db: a + 20.0 * 2f64.log10() + 3.0,
            },
            PathLossPoint {
                d_m: 2.0,
                pl_db: a + 20.0 * 2f64.log10() - 3.0,
            },
            PathLossPoint {
                d_m: 8.0,
                pl_db: a + 20.0 * 8f64.log10() + 3.0,
            },
            PathLossPoint {
                d_m: 8.0,
                pl_db: a + 20.0 * 8f64.log10() - 3.0,
            },
        ];
        let fit = fit_ci(&pts, f, 1.0).unwrap();
        assert!((fit.n - 2.0).abs() < 1e-12);
        assert!((fit.sigma_sf - 3.0).abs() < 1e-12);
        // orthogonality to the regressor
        let dot: f64 = pts.iter().zip(&fit.residuals).map(|(p, r)| p.d_m.log10() * r).sum();
        assert!(dot.abs() < 1e-9);
    }

    #[test]
    fn ci_errors() {
        let p = PathLossPoint { d_m: 5.0, pl_db: 100.0 };
        assert!(matches!(fit_ci(&[p, p], 3e11, 1.0), Err(Error::SingularFit(_))));
        assert!(fit_ci(&[p], 3e11, 1.0).is_err());
        let near = PathLossPoint { d_m: 0.5, pl_db: 80.0 };
        assert!(fit_ci(&[p, near], 3e11, 1.0).is_err());
    }

    #[test]
    fn k_factor_cases() {
        let k = k_factor(&[cluster(0.9), cluster(0.1)]).unwrap();
        assert!((k - 9.5424).abs() < 1e-4);
        assert!(k_factor(&[cluster(0.5), cluster(0.5)]).unwrap().abs() < 1e-12);
        assert_eq!(k_factor(&[cluster(1.0)]), None);
        assert_eq!(k_factor(&[]), None);
    }

    #[test]
    fn delay_spread_cases() {
        assert_eq!(rms_delay_spread(&[mpc(1.0, 4.0, 0.0, 0.0)]), 0.0);
        let two = [mpc(1.0, 0.0, 0.0, 0.0), mpc(1.0, 10.0, 0.0, 0.0)];
        assert!((rms_delay_spread(&two) - 5e-9).abs() < 1e-20);
        let shifted = [mpc(1.0, 100.0, 0.0, 0.0), mpc(1.0, 110.0, 0.0, 0.0)];
        assert!((rms_delay_spread(&shifted) - 5e-9).abs() < 1e-18);
    }

    #[test]
    fn angular_spread_cases() {
        assert_eq!(
            angular_spreads(&[mpc(1.0, 0.0, 30.0, 4.0)], SpreadMode::Circular),
            AngularSpread { asa: 0.0, esa: 0.0 }
        );
        let pm = [mpc(1.0, 0.0, 350.0, 0.0), mpc(1.0, 0.0, 10.0, 0.0)];
        let s = angular_spreads(&pm, SpreadMode::Circular);
        assert!((s.asa.to_degrees() - 10.02).abs() < 0.05);
        let wrapped = [mpc(1.0, 0.0, -10.0, 0.0), mpc(1.0, 0.0, 10.0, 0.0)];
        assert!((angular_spreads(&wrapped, SpreadMode::Circular).asa - s.asa).abs() < 1e-12);
        let rms = angular_spreads(&pm, SpreadMode::Rms);
        assert!((rms.asa.to_degrees() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn cluster_stats_cases() {
        let ms = vec![
            mpc(1.0, 0.0, 0.0, 0.0),
            mpc(0.5, 3.0, 20.0, 2.0),
            mpc(0.3, 9.0, 90.0, 0.0),
        ];
        let singles = form_clusters(&ms, &[Some(0), Some(1), Some(2)]).unwrap();
        let st = cluster_stats(&singles, &ms, SpreadMode::Circular).unwrap();
        assert_eq!(st.n_clusters, 3);
        assert!(st.clusters.iter().all(|c| c.cds_s == 0.0 && c.casa_rad == 0.0));
        assert_eq!(st.mean_cds_s, None);

        let whole = form_clusters(&ms, &[Some(0); 3]).unwrap();
        let st = cluster_stats(&whole, &ms, SpreadMode::Circular).unwrap();
        assert_eq!(st.clusters[0].cds_s, rms_delay_spread(&ms));
        assert_eq!(st.mean_cds_s, Some(rms_delay_spread(&ms)));
    }

    #[test]
    fn log_normal_summary() {
        let f = fit_log_normal(&[10.0, 14.0]).unwrap();
        assert_eq!((f.mean_db, f.std_db, f.count), (12.0, 2.0, 2));
        assert!(fit_log_normal(&[]).is_none());
    }
}
