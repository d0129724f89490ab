//! Campaign report: structured JSON, an aligned table, and plot data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::formats::{read_text, write_text};
use crate::characterization::{CiFit, LogNormalFit, PositionStats};
use crate::error::{Error, Result};
use crate::types::{AntennaPattern, FrequencyGrid};

/// A campaign-level fit or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Fit<T> {
    Defined { fit: T },
    Undefined { reason: String },
}

impl<T> Fit<T> {
    pub fn defined(&self) -> Option<&T> {
        match self {
            Fit::Defined { fit } => Some(fit),
            Fit::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub members: usize,
    pub power_db: f64,
    pub cds_s: f64,
    pub casa_deg: f64,
    pub cesa_deg: f64,
}

/// Statistics of one position, angles in degrees. Undefined values are
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSummary {
    pub pl_best_db: Option<f64>,
    pub pl_omni_db: Option<f64>,
    pub k_factor_db: Option<f64>,
    pub ds_s: f64,
    pub asa_deg: f64,
    pub esa_deg: f64,
    pub n_mpcs: usize,
    pub n_clusters: usize,
    pub mean_cds_s: Option<f64>,
    pub mean_casa_deg: Option<f64>,
    pub mean_cesa_deg: Option<f64>,
    pub clusters: Vec<ClusterSummary>,
}

impl From<&PositionStats> for PositionSummary {
    fn from(s: &PositionStats) -> Self {
        PositionSummary {
            pl_best_db: s.pl_best_db,
            pl_omni_db: s.pl_omni_db,
            k_factor_db: s.k_factor_db,
            ds_s: s.ds_s,
            asa_deg: s.asa_rad.to_degrees(),
            esa_deg: s.esa_rad.to_degrees(),
            n_mpcs: s.n_mpcs,
            n_clusters: s.clusters.n_clusters,
            mean_cds_s: s.clusters.mean_cds_s,
            mean_casa_deg: s.clusters.mean_casa_rad.map(f64::to_degrees),
            mean_cesa_deg: s.clusters.mean_cesa_rad.map(f64::to_degrees),
            clusters: s
                .clusters
                .clusters
                .iter()
                .map(|c| ClusterSummary {
                    members: c.members,
                    power_db: 10.0 * c.power.log10(),
                    cds_s: c.cds_s,
                    casa_deg: c.casa_rad.to_degrees(),
                    cesa_deg: c.cesa_rad.to_degrees(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PositionOutcome {
    Ok { stats: PositionSummary },
    Failed { error: String, numerical: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionReport {
    pub id: String,
    pub distance_m: f64,
    #[serde(flatten)]
    pub outcome: PositionOutcome,
}

impl PositionReport {
    pub fn stats(&self) -> Option<&PositionSummary> {
        match &self.outcome {
            PositionOutcome::Ok { stats } => Some(stats),
            PositionOutcome::Failed { .. } => None,
        }
    }
}

/// Means over positions where the value is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignMeans {
    pub pl_best_db: Option<f64>,
    pub pl_omni_db: Option<f64>,
    pub k_factor_db: Option<f64>,
    pub ds_s: Option<f64>,
    pub asa_deg: Option<f64>,
    pub esa_deg: Option<f64>,
    pub n_clusters: Option<f64>,
    pub cds_s: Option<f64>,
    pub casa_deg: Option<f64>,
    pub cesa_deg: Option<f64>,
}

/// Everything needed to reproduce the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConfig {
    pub grid: FrequencyGrid,
    pub n_directions: usize,
    pub rx_pattern: AntennaPattern,
    pub tx_pattern: AntennaPattern,
    pub calibrated: bool,
    /// Added to the best-direction loss to de-embed the receive antenna.
    pub rx_gain_compensation_db: f64,
    pub ci_frequency_hz: f64,
    pub ci_d0_m: f64,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub tool: String,
    pub version: String,
    pub config: EffectiveConfig,
    pub positions: Vec<PositionReport>,
    pub ci_best: Fit<CiFit>,
    pub ci_omni: Fit<CiFit>,
    pub k_factor: Fit<LogNormalFit>,
    pub means: CampaignMeans,
}

impl CampaignReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("report: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Plot-ready curves of one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionPlots {
    pub id: String,
    /// `(delay_s, power_db)` per oversampled delay bin.
    pub pdp: Vec<(f64, f64)>,
    /// `(azimuth_deg, power_db)` per steering azimuth, summed over elevation.
    pub aps: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// `report.json`
    Structured,
    /// `report.txt`
    Table,
}

const UNDEFINED: &str = "–";

fn cell(v: Option<f64>, scale: f64, digits: usize) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{:.*}", digits, x * scale),
        _ => UNDEFINED.to_string(),
    }
}

/// Aligned text table: one row per position plus a campaign-mean footer,
/// followed by the campaign fits.
pub fn format_table(report: &CampaignReport) -> String {
    let header = [
        "Rx",
        "d [m]",
        "PL_best [dB]",
        "PL_omni [dB]",
        "K [dB]",
        "DS [ns]",
        "ASA [deg]",
        "ESA [deg]",
        "N_cl",
        "CDS [ns]",
        "CASA [deg]",
        "CESA [deg]",
    ];
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut notes = Vec::new();
    for p in &report.positions {
        let mut r = vec![p.id.clone(), format!("{:.2}", p.distance_m)];
        match &p.outcome {
            PositionOutcome::Ok { stats: s } => r.extend([
                cell(s.pl_best_db, 1.0, 2),
                cell(s.pl_omni_db, 1.0, 2),
                cell(s.k_factor_db, 1.0, 2),
                cell(Some(s.ds_s), 1e9, 3),
                cell(Some(s.asa_deg), 1.0, 2),
                cell(Some(s.esa_deg), 1.0, 2),
                s.n_clusters.to_string(),
                cell(s.mean_cds_s, 1e9, 3),
                cell(s.mean_casa_deg, 1.0, 2),
                cell(s.mean_cesa_deg, 1.0, 2),
            ]),
            PositionOutcome::Failed { error, .. } => {
                r.extend(std::iter::repeat(UNDEFINED.to_string()).take(header.len() - 2));
                notes.push(format!("{}: failed: {error}", p.id));
            }
        }
        rows.push(r);
    }
    let m = &report.means;
    rows.push(vec![
        "mean".into(),
        UNDEFINED.into(),
        cell(m.pl_best_db, 1.0, 2),
        cell(m.pl_omni_db, 1.0, 2),
        cell(m.k_factor_db, 1.0, 2),
        cell(m.ds_s, 1e9, 3),
        cell(m.asa_deg, 1.0, 2),
        cell(m.esa_deg, 1.0, 2),
        cell(m.n_clusters, 1.0, 2),
        cell(m.cds_s, 1e9, 3),
        cell(m.casa_deg, 1.0, 2),
        cell(m.cesa_deg, 1.0, 2),
    ]);

    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(width(c));
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                let pad = " ".repeat(w - width(c));
                if i == 0 {
                    format!("{c}{pad}")
                } else {
                    format!("{pad}{c}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
    let mut out = vec![line(header.to_vec()), rule.clone()];
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        if i + 1 == n {
            out.push(rule.clone());
        }
        out.push(line(r.iter().map(String::as_str).collect()));
    }
    out.push(String::new());

    let cfg = &report.config;
    let anchor = format!("f = {:.3} GHz, d0 = {} m", cfg.ci_frequency_hz / 1e9, cfg.ci_d0_m);
    for (name, fit) in [
        ("best direction", &report.ci_best),
        ("omnidirectional", &report.ci_omni),
    ] {
        out.push(match fit {
            Fit::Defined { fit } => format!(
                "CI fit ({name}): n = {:.3}, sigma_SF = {:.2} dB, FSPL(d0) = {:.2} dB ({anchor})",
                fit.n, fit.sigma_sf, fit.fspl_d0
            ),
            Fit::Undefined { reason } => format!("CI fit ({name}): {UNDEFINED} ({reason})"),
        });
    }
    out.push(match &report.k_factor {
        Fit::Defined { fit } => format!(
            "K-factor log-normal fit: mean = {:.2} dB, std = {:.2} dB over {} positions",
            fit.mean_db, fit.std_db, fit.count
        ),
        Fit::Undefined { reason } => format!("K-factor log-normal fit: {UNDEFINED} ({reason})"),
    });
    out.push(format!(
        "PL_best includes +{:.2} dB receive boresight gain de-embedding",
        cfg.rx_gain_compensation_db
    ));
    out.extend(notes);
    out.join("\n") + "\n"
}

/// Writes the requested report files and the per-position plot data into
/// `dir`; returns the written paths.
pub fn emit_report(
    report: &CampaignReport,
    plots: &[PositionPlots],
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let (name, text) = match f {
            ReportFormat::Structured => ("report.json", report.to_json()?),
            ReportFormat::Table => ("report.txt", format_table(report)),
        };
        let path = dir.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    for p in plots {
        let pdp = dir.join(format!("pdp_{}.txt", p.id));
        write_text(&pdp, &two_column("delay_s", "power_db", &p.pdp))?;
        let aps = dir.join(format!("aps_{}.txt", p.id));
        write_text(&aps, &two_column("azimuth_deg", "power_db", &p.aps))?;
        written.extend([pdp, aps]);
    }
    Ok(written)
}

fn two_column(x: &str, y: &str, data: &[(f64, f64)]) -> String {
    let mut s = format!("# {x} {y}\n");
    for (a, b) in data {
        s.push_str(&format!("{a} {b}\n"));
    }
    s
}
