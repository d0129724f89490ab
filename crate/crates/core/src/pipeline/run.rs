//! Campaign orchestration: calibrate, estimate, cluster and characterize
//! every position, then fit the campaign-level models.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::PipelineConfig;
use super::formats;
use super::manifest::{CampaignManifest, PositionSpec};
use super::report::{
    CampaignMeans, CampaignReport, EffectiveConfig, Fit, PositionOutcome, PositionPlots, PositionReport,
    PositionSummary,
};
use crate::characterization::{fit_ci, fit_log_normal, position_stats, PathLossPoint, PositionStats};
use crate::clustering::{cluster_mpcs, form_clusters, Cluster};
use crate::error::{Error, Result};
use crate::sage::{estimate_mpcs, power_delay_profile};
use crate::types::{AntennaPattern, Ctf, Mpc};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; the rayon default when `None`.
    pub jobs: Option<usize>,
    /// Directory for per-position path lists and cluster labels.
    pub out_dir: Option<PathBuf>,
    /// Compute power-delay profiles and azimuth power spectra.
    pub plots: bool,
}

/// Intermediate results of a successfully processed position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionDetail {
    pub id: String,
    pub mpcs: Vec<Mpc>,
    pub labels: Vec<Option<usize>>,
    pub clusters: Vec<Cluster>,
    pub stats: PositionStats,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: CampaignReport,
    /// Same order as the manifest positions; `None` for failed positions.
    pub details: Vec<Option<PositionDetail>>,
    pub plots: Vec<PositionPlots>,
}

/// Per-position output directory inside `out_dir`.
pub fn position_dir(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join("positions").join(id)
}

/// Runs the whole chain. Failures of single positions are recorded in the
/// report; only an invalid manifest aborts the run.
pub fn run_pipeline(manifest: &CampaignManifest, opts: &RunOptions) -> Result<PipelineOutput> {
    manifest.validate()?;
    if manifest.positions.is_empty() {
        return Err(Error::invalid("campaign has no receiver positions"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<(PositionDetail, Option<PositionPlots>)>> = pool.install(|| {
        manifest
            .positions
            .par_iter()
            .map(|p| process_position(manifest, p, opts))
            .collect()
    });

    let mut positions = Vec::with_capacity(results.len());
    let mut details = Vec::with_capacity(results.len());
    let mut plots = Vec::new();
    for (spec, res) in manifest.positions.iter().zip(results) {
        let outcome = match res {
            Ok((detail, plot)) => {
                let stats = PositionSummary::from(&detail.stats);
                details.push(Some(detail));
                plots.extend(plot);
                PositionOutcome::Ok { stats }
            }
            Err(e) => {
                details.push(None);
                PositionOutcome::Failed {
                    error: e.to_string(),
                    numerical: e.is_numerical(),
                }
            }
        };
        positions.push(PositionReport {
            id: spec.id.clone(),
            distance_m: spec.distance_m,
            outcome,
        });
    }

    let report = assemble_report(manifest, positions);
    Ok(PipelineOutput { report, details, plots })
}

fn rx_compensation_db(cfg: &PipelineConfig, pattern: &AntennaPattern) -> f64 {
    if cfg.characterization.compensate_rx_gain {
        pattern.boresight_gain_dbi
    } else {
        0.0
    }
}

fn process_position(
    manifest: &CampaignManifest,
    spec: &PositionSpec,
    opts: &RunOptions,
) -> Result<(PositionDetail, Option<PositionPlots>)> {
    let cfg = &manifest.config;
    let ctf = manifest.load_sweep(spec)?;
    let estimates = estimate_mpcs(&ctf, &manifest.rx_pattern, &cfg.estimator)?;
    let raw: Vec<Mpc> = estimates.into_iter().map(|e| e.mpc).collect();
    // characterize exactly what the path-list file will hold
    let mpcs = formats::canonical_mpcs(&raw)?;
    let (labels, clusters) = cluster_mpcs(&mpcs, &cfg.clustering)?;
    let stats = position_stats(
        Some(&ctf),
        rx_compensation_db(cfg, &manifest.rx_pattern),
        &mpcs,
        &clusters,
        cfg.characterization.spread_mode,
    )?;
    if let Some(dir) = &opts.out_dir {
        let pd = position_dir(dir, &spec.id);
        formats::write_mpcs(&pd.join("mpcs.csv"), &raw)?;
        formats::write_labels(&pd.join("labels.csv"), &labels)?;
    }
    let plots = if opts.plots {
        Some(position_plots(&spec.id, &ctf, cfg.estimator.delay_oversampling)?)
    } else {
        None
    };
    Ok((
        PositionDetail {
            id: spec.id.clone(),
            mpcs,
            labels,
            clusters,
            stats,
        },
        plots,
    ))
}

/// Statistics recomputed from persisted path-list and label files.
pub fn characterize_from_files(
    mpcs_path: &Path,
    labels_path: &Path,
    cfg: &PipelineConfig,
) -> Result<(Vec<Mpc>, Vec<Cluster>, PositionStats)> {
    let mpcs = formats::read_mpcs(mpcs_path)?;
    let labels = formats::read_labels(labels_path)?;
    let clusters = form_clusters(&mpcs, &labels)?;
    let stats = position_stats(None, 0.0, &mpcs, &clusters, cfg.characterization.spread_mode)?;
    Ok((mpcs, clusters, stats))
}

fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        10.0 * p.log10()
    } else {
        f64::NEG_INFINITY
    }
}

/// Power-delay profile summed over directions and azimuth power spectrum
/// summed over elevation rings.
pub fn position_plots(id: &str, ctf: &Ctf, oversampling: usize) -> Result<PositionPlots> {
    let profile = power_delay_profile(ctf, oversampling)?;
    let bin = 1.0 / (profile.len() as f64 * ctf.grid().f_step_hz);
    let pdp = profile
        .iter()
        .enumerate()
        .map(|(b, &p)| (b as f64 * bin, to_db(p)))
        .collect();
    let mut by_az: std::collections::BTreeMap<u64, (f64, f64)> = Default::default();
    for (d, p) in ctf.steering().directions().iter().zip(ctf.row_mean_powers()) {
        let az = d.azimuth_deg();
        by_az.entry(az.to_bits()).or_insert((az, 0.0)).1 += p;
    }
    let mut aps: Vec<(f64, f64)> = by_az.into_values().map(|(az, p)| (az, to_db(p))).collect();
    aps.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(PositionPlots {
        id: id.to_string(),
        pdp,
        aps,
    })
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn assemble_report(manifest: &CampaignManifest, positions: Vec<PositionReport>) -> CampaignReport {
    let cfg = &manifest.config;
    let ch = &cfg.characterization;
    let f_ci = ch.ci_frequency_hz.unwrap_or_else(|| manifest.grid.center_hz());
    let ok: Vec<(&PositionReport, &PositionSummary)> =
        positions.iter().filter_map(|p| p.stats().map(|s| (p, s))).collect();

    let ci = |pick: fn(&PositionSummary) -> Option<f64>| -> Fit<_> {
        let pts: Vec<PathLossPoint> = ok
            .iter()
            .filter_map(|(p, s)| {
                pick(s).map(|pl| PathLossPoint {
                    d_m: p.distance_m,
                    pl_db: pl,
                })
            })
            .collect();
        match fit_ci(&pts, f_ci, ch.ci_d0_m) {
            Ok(fit) => Fit::Defined { fit },
            Err(e) => Fit::Undefined {
                reason: format!("{e} ({} usable positions)", pts.len()),
            },
        }
    };
    let ci_best = ci(|s| s.pl_best_db);
    let ci_omni = ci(|s| s.pl_omni_db);

    let ks: Vec<f64> = ok.iter().filter_map(|(_, s)| s.k_factor_db).collect();
    let k_factor = match fit_log_normal(&ks) {
        Some(fit) => Fit::Defined { fit },
        None => Fit::Undefined {
            reason: "no position has more than one cluster".into(),
        },
    };

    let means = CampaignMeans {
        pl_best_db: mean_of(ok.iter().map(|(_, s)| s.pl_best_db)),
        pl_omni_db: mean_of(ok.iter().map(|(_, s)| s.pl_omni_db)),
        k_factor_db: mean_of(ok.iter().map(|(_, s)| s.k_factor_db)),
        ds_s: mean_of(ok.iter().map(|(_, s)| Some(s.ds_s))),
        asa_deg: mean_of(ok.iter().map(|(_, s)| Some(s.asa_deg))),
        esa_deg: mean_of(ok.iter().map(|(_, s)| Some(s.esa_deg))),
        n_clusters: mean_of(ok.iter().map(|(_, s)| Some(s.n_clusters as f64))),
        cds_s: mean_of(ok.iter().map(|(_, s)| s.mean_cds_s)),
        casa_deg: mean_of(ok.iter().map(|(_, s)| s.mean_casa_deg)),
        cesa_deg: mean_of(ok.iter().map(|(_, s)| s.mean_cesa_deg)),
    };

    CampaignReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: EffectiveConfig {
            grid: manifest.grid,
            n_directions: manifest.steering.len(),
            rx_pattern: manifest.rx_pattern,
            tx_pattern: manifest.tx_pattern,
            calibrated: manifest.system_response.is_some(),
            rx_gain_compensation_db: rx_compensation_db(cfg, &manifest.rx_pattern),
            ci_frequency_hz: f_ci,
            ci_d0_m: ch.ci_d0_m,
            pipeline: *cfg,
        },
        positions,
        ci_best,
        ci_omni,
        k_factor,
        means,
    }
}
