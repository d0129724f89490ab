//! DBSCAN clustering of multipath components under the multipath component
//! distance (MCD).
//!
//! `MCD(i, j) = sqrt( xi * (tau_i - tau_j)^2 / tau_m^2 + |Omega_i - Omega_j|^2 )`
//! where `Omega` is the arrival-direction unit vector and `tau_m` the largest
//! delay difference in the snapshot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry;
use crate::types::Mpc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NoisePolicy {
    /// Every noise point becomes its own cluster.
    #[default]
    Singleton,
    /// Noise points are left unlabeled.
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    /// Delay weighting factor of the MCD.
    pub xi: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub noise_policy: NoisePolicy,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            xi: 3.0,
            eps: 0.35,
            min_pts: 2,
            noise_policy: NoisePolicy::Singleton,
        }
    }
}

impl ClusteringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::invalid("MCD weighting factor must be positive"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("DBSCAN eps must be positive"));
        }
        if self.min_pts == 0 {
            return Err(Error::invalid("DBSCAN min_pts must be at least 1"));
        }
        Ok(())
    }
}

/// A group of paths represented by its strongest member.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Indices into the clustered path list, ascending.
    pub members: Vec<usize>,
    /// Index of the strongest member.
    pub representative: usize,
    pub tau: f64,
    pub aoa: f64,
    pub eoa: f64,
    /// Sum of member powers `alpha^2`.
    pub power: f64,
}

/// Multipath component distance between two paths.
pub fn mcd(a: &Mpc, b: &Mpc, tau_m: f64, xi: f64) -> Result<f64> {
    let dt = a.tau - b.tau;
    let delay_term = if dt == 0.0 {
        0.0
    } else if tau_m > 0.0 {
        xi * (dt / tau_m).powi(2)
    } else {
        return Err(Error::invalid(format!(
            "MCD delay normalization must be positive, got {tau_m}"
        )));
    };
    let dd = geometry::distance(a.direction(), b.direction());
    Ok((delay_term + dd * dd).sqrt())
}

/// Dense symmetric distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = f(i, j);
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        DistanceMatrix { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension(format!(
                    "distance row {i} has {} entries, expected {n}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        for i in 0..n {
            for j in 0..i {
                if data[i * n + j] != data[j * n + i] {
                    return Err(Error::invalid(format!("distance matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

/// Largest pairwise delay difference of the snapshot.
pub fn delay_normalization(mpcs: &[Mpc]) -> f64 {
    let lo = mpcs.iter().map(|m| m.tau).fold(f64::INFINITY, f64::min);
    let hi = mpcs.iter().map(|m| m.tau).fold(f64::NEG_INFINITY, f64::max);
    if mpcs.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Pairwise MCD with `tau_m` taken from the snapshot itself.
pub fn mcd_matrix(mpcs: &[Mpc], xi: f64) -> DistanceMatrix {
    let tau_m = delay_normalization(mpcs);
    DistanceMatrix::from_fn(mpcs.len(), |i, j| {
        // tau_m > 0 whenever two delays differ, so this cannot fail
        mcd(&mpcs[i], &mpcs[j], tau_m, xi).unwrap_or(0.0)
    })
}

/// Density-based labeling. Core points have at least `min_pts` points
/// (themselves included) within `eps`. Points are visited in index order and
/// a border point joins the first cluster that reaches it.
///
/// Labels are cluster numbers in discovery order; noise is `None` under
/// [`NoisePolicy::Discard`] and a fresh singleton label otherwise.
pub fn dbscan(dist: &DistanceMatrix, cfg: &ClusteringConfig) -> Vec<Option<usize>> {
    let n = dist.len();
    let neighbours = |i: usize| -> Vec<usize> { (0..n).filter(|&j| dist.get(i, j) <= cfg.eps).collect() };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut next = 0usize;

    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbours(i);
        if nb.len() < cfg.min_pts {
            continue;
        }
        let id = next;
        next += 1;
        labels[i] = Some(id);
        let mut queue: std::collections::VecDeque<usize> = nb.into_iter().collect();
        while let Some(j) = queue.pop_front() {
            if labels[j].is_none() {
                labels[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbours(j);
            if nj.len() >= cfg.min_pts {
                queue.extend(nj.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }

    if cfg.noise_policy == NoisePolicy::Singleton {
        for l in labels.iter_mut() {
            if l.is_none() {
                *l = Some(next);
                next += 1;
            }
        }
    }
    labels
}

/// Groups paths by label. The representative is the strongest member
/// (lowest index on ties); clusters come out by descending power.
pub fn form_clusters(mpcs: &[Mpc], labels: &[Option<usize>]) -> Result<Vec<Cluster>> {
    if labels.len() != mpcs.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} paths",
            labels.len(),
            mpcs.len()
        )));
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for (i, l) in labels.iter().enumerate() {
        if let Some(l) = l {
            groups.entry(*l).or_default().push(i);
        }
    }
    let mut clusters: Vec<Cluster> = groups
        .into_values()
        .map(|members| {
            let mut rep = members[0];
            for &m in &members[1..] {
                if mpcs[m].alpha > mpcs[rep].alpha {
                    rep = m;
                }
            }
            Cluster {
                power: members.iter().map(|&m| mpcs[m].power()).sum(),
                tau: mpcs[rep].tau,
                aoa: mpcs[rep].aoa,
                eoa: mpcs[rep].eoa,
                representative: rep,
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| b.power.total_cmp(&a.power).then(a.members[0].cmp(&b.members[0])));
    Ok(clusters)
}

/// MCD matrix, DBSCAN and cluster formation in one call.
pub fn cluster_mpcs(mpcs: &[Mpc], cfg: &ClusteringConfig) -> Result<(Vec<Option<usize>>, Vec<Cluster>)> {
    cfg.validate()?;
    let labels = dbscan(&mcd_matrix(mpcs, cfg.xi), cfg);
    let clusters = form_clusters(mpcs, &labels)?;
    Ok((labels, clusters))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mpc(alpha: f64, tau_ns: f64, aoa_deg: f64, eoa_deg: f64) -> Mpc {
        Mpc::new(alpha, tau_ns * 1e-9, aoa_deg.to_radians(), eoa_deg.to_radians()).unwrap()
    }

    #[test]
    fn mcd_reference_cases() {
        let a = mpc(1.0, 10.0, 30.0, 5.0);
        assert_eq!(mcd(&a, &a, 1e-9, 3.0).unwrap(), 0.0);
        let b = mpc(1.0, 20.0, 30.0, 5.0);
        let d = mcd(&a, &b, 10e-9, 3.0).unwrap();
        assert!((d - 3f64.sqrt()).abs() < 1e-12);
        let c = mpc(1.0, 10.0, 210.0, -5.0);
        assert!((mcd(&a, &c, 1e-9, 3.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(mcd(&a, &b, 0.0, 3.0).is_err());
        assert_eq!(mcd(&a, &a, 0.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn matrix_matches_pairwise() {
        let ms = vec![
            mpc(1.0, 0.0, 0.0, 0.0),
            mpc(0.5, 5.0, 20.0, 3.0),
            mpc(0.2, 12.0, 300.0, -4.0),
        ];
        let d = mcd_matrix(&ms, 3.0);
        let tau_m = 12e-9;
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                if i != j {
                    let direct = mcd(&ms[i], &ms[j], tau_m, 3.0).unwrap();
                    assert!((d.get(i, j) - direct).abs() < 1e-15);
                    assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
        let same = vec![ms[1].clone(), ms[1].clone(), ms[1].clone()];
        let z = mcd_matrix(&same, 3.0);
        assert!((0..3).all(|i| (0..3).all(|j| z.get(i, j) == 0.0)));
        assert_eq!(mcd_matrix(&ms[..1], 3.0).len(), 1);
    }

    #[test]
    fn min_pts_one_clusters_everything() {
        let ms = vec![mpc(1.0, 0.0, 0.0, 0.0), mpc(0.5, 50.0, 180.0, 0.0)];
        let cfg = ClusteringConfig {
            min_pts: 1,
            noise_policy: NoisePolicy::Discard,
            ..Default::default()
        };
        let labels = dbscan(&mcd_matrix(&ms, 3.0), &cfg);
        assert_eq!(labels, vec![Some(0), Some(1)]);
    }

    #[test]
    fn single_path_is_a_singleton() {
        let ms = vec![mpc(1.0, 3.0, 10.0, 0.0)];
        let (labels, clusters) = cluster_mpcs(&ms, &ClusteringConfig::default()).unwrap();
        assert_eq!(labels, vec![Some(0)]);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].power, 1.0);
    }

    #[test]
    fn noise_policy_discard_leaves_gaps() {
        let ms = vec![
            mpc(1.0, 0.0, 0.0, 0.0),
            mpc(0.9, 0.1, 1.0, 0.0),
            mpc(0.1, 40.0, 180.0, 0.0),
        ];
        let cfg = ClusteringConfig {
            noise_policy: NoisePolicy::Discard,
            ..Default::default()
        };
        let labels = dbscan(&mcd_matrix(&ms, 3.0), &cfg);
        assert_eq!(labels, vec![Some(0), Some(0), None]);
        let clusters = form_clusters(&ms, &labels).unwrap();
        assert_eq!(clusters.len(), 1);
    }

    #[test]
    fn border_point_joins_cluster() {
        // 0-1-2 chain: 0 and 2 are borders of core point 1 when min_pts = 3
        let d = DistanceMatrix::from_rows(vec![vec![0.0, 0.2, 0.4], vec![0.2, 0.0, 0.2], vec![0.4, 0.2, 0.0]])
            .unwrap();
        let cfg = ClusteringConfig {
            eps: 0.25,
            min_pts: 3,
            ..Default::default()
        };
        assert_eq!(dbscan(&d, &cfg), vec![Some(0), Some(0), Some(0)]);
    }

    #[test]
    fn cluster_power_and_representative() {
        let ms = vec![mpc(0.5, 1.0, 10.0, 0.0), mpc(1.0, 1.2, 11.0, 0.0)];
        let clusters = form_clusters(&ms, &[Some(0), Some(0)]).unwrap();
        assert_eq!(clusters.len(), 1);
        assert!((clusters[0].power - 1.25).abs() < 1e-15);
        assert_eq!(clusters[0].representative, 1);
        assert_eq!(clusters[0].tau, ms[1].tau);
        let singles = form_clusters(&ms, &[Some(0), Some(1)]).unwrap();
        assert_eq!(singles[0].power, 1.0);
        assert_eq!(singles[1].power, 0.25);
    }
}
