//! Campaign description: grids, antennas, configs and one sweep source per
//! receiver position.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::formats;
use crate::calibration::calibrate;
use crate::error::{Error, Result};
use crate::forward::{add_awgn, apply_system_response, synth_ctf, NoiseSpec, RawSweep, SystemResponse};
use crate::types::{AntennaPattern, Ctf, FrequencyGrid, Mpc, PathPhase, SteeringGrid};

pub const CAMPAIGN_FORMAT: &str = "thz-campaign/1";

/// Where a position's sweep comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SweepSource {
    /// A CTF file; a raw sweep when the campaign has a system response.
    File(PathBuf),
    /// Synthesized from known paths. Phases are drawn from `noise.seed`, so
    /// the source is fully reproducible: one constant phase per path, or an
    /// independent phase per path and steering direction.
    Synthetic {
        truth: Vec<Mpc>,
        noise: NoiseSpec,
        per_direction_phases: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionSpec {
    pub id: String,
    pub distance_m: f64,
    pub source: SweepSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignManifest {
    pub grid: FrequencyGrid,
    pub steering: SteeringGrid,
    pub rx_pattern: AntennaPattern,
    pub tx_pattern: AntennaPattern,
    pub system_response: Option<SystemResponse>,
    pub config: PipelineConfig,
    pub positions: Vec<PositionSpec>,
}

impl CampaignManifest {
    /// Standard grids and antennas, default configs, no positions.
    pub fn standard() -> Self {
        CampaignManifest {
            grid: FrequencyGrid::standard(),
            steering: SteeringGrid::standard(),
            rx_pattern: AntennaPattern::standard_rx(),
            tx_pattern: AntennaPattern::standard_tx(),
            system_response: None,
            config: PipelineConfig::default(),
            positions: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.rx_pattern.validate()?;
        self.tx_pattern.validate()?;
        self.config.validate()?;
        if let Some(sys) = &self.system_response {
            if sys.len() != self.grid.n_points {
                return Err(Error::Dimension(format!(
                    "system response has {} points, grid has {}",
                    sys.len(),
                    self.grid.n_points
                )));
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for p in &self.positions {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::invalid(format!("duplicate position id {:?}", p.id)));
            }
            if p.id.is_empty() || p.id.contains(['/', '\\']) {
                return Err(Error::invalid(format!("unusable position id {:?}", p.id)));
            }
            if !(p.distance_m > 0.0 && p.distance_m.is_finite()) {
                return Err(Error::invalid(format!("position {}: distance must be positive", p.id)));
            }
        }
        Ok(())
    }

    /// Calibrated CTF of one position.
    pub fn load_sweep(&self, pos: &PositionSpec) -> Result<Ctf> {
        match &pos.source {
            SweepSource::File(path) => {
                let ctf = formats::read_ctf(path)?;
                if *ctf.grid() != self.grid || *ctf.steering() != self.steering {
                    return Err(Error::Dimension(format!(
                        "{}: grids differ from the campaign's",
                        path.display()
                    )));
                }
                match &self.system_response {
                    Some(sys) => calibrate(&RawSweep(ctf), sys),
                    None => Ok(ctf),
                }
            }
            SweepSource::Synthetic {
                truth,
                noise,
                per_direction_phases,
            } => {
                let n_dirs = per_direction_phases.then(|| self.steering.len());
                let paths = with_phases(truth, noise.seed, n_dirs);
                let clean = synth_ctf(&paths, &self.grid, &self.steering, &self.rx_pattern, None)?;
                match &self.system_response {
                    Some(sys) => {
                        let raw = apply_system_response(&clean, sys)?;
                        let noisy = RawSweep(add_awgn(raw.ctf(), noise)?);
                        calibrate(&noisy, sys)
                    }
                    None => add_awgn(&clean, noise),
                }
            }
        }
    }
}

/// Assigns phases drawn from `seed`: one constant phase per path, or
/// `n_dirs` independent phases per path when given.
pub fn with_phases(truth: &[Mpc], seed: u64, n_dirs: Option<usize>) -> Vec<Mpc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    let mut draw = || rng.gen_range(0.0..std::f64::consts::TAU);
    truth
        .iter()
        .map(|m| {
            let phase = match n_dirs {
                Some(n) => PathPhase::PerDirection((0..n).map(|_| draw()).collect()),
                None => PathPhase::Constant(draw()),
            };
            m.clone().with_phase(phase)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ManifestFile {
    format: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system_response: Option<String>,
    /// `[azimuth_deg, elevation_deg]` list; the standard 180-direction grid
    /// when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steering_deg: Option<Vec<[f64; 2]>>,
    grid: FrequencyGrid,
    rx_pattern: AntennaPattern,
    tx_pattern: AntennaPattern,
    #[serde(default)]
    config: PipelineConfig,
    #[serde(default)]
    positions: Vec<PositionFile>,
}

#[derive(Serialize, Deserialize)]
struct PositionFile {
    id: String,
    distance_m: f64,
    /// CTF manifest of a measured sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sweep: Option<String>,
    /// Path list to synthesize from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    per_direction_phases: bool,
}

/// Reads a campaign manifest. Relative paths are resolved against the
/// manifest's directory; sweep files are checked against the grids.
pub fn load_manifest(path: &Path) -> Result<CampaignManifest> {
    let file: ManifestFile = formats::parse_toml(path, &formats::read_text(path)?)?;
    if file.format != CAMPAIGN_FORMAT {
        return Err(Error::Format(format!(
            "{}: unsupported campaign format {:?}",
            path.display(),
            file.format
        )));
    }
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let steering = match &file.steering_deg {
        Some(list) => formats::steering_from_degrees(list)?,
        None => SteeringGrid::standard(),
    };
    let system_response = match &file.system_response {
        Some(p) => Some(formats::read_system_response(&base.join(p))?),
        None => None,
    };
    let mut positions = Vec::with_capacity(file.positions.len());
    for p in file.positions {
        let source = match (&p.sweep, &p.truth) {
            (Some(s), None) => {
                let sweep = base.join(s);
                let header = formats::read_ctf_manifest(&sweep)?;
                if header.grid()? != file.grid || header.steering()? != steering {
                    return Err(Error::Dimension(format!(
                        "position {}: {} does not match the campaign grids",
                        p.id,
                        sweep.display()
                    )));
                }
                SweepSource::File(sweep)
            }
            (None, Some(t)) => SweepSource::Synthetic {
                truth: formats::read_mpcs(&base.join(t))?,
                noise: NoiseSpec::new(p.snr_db.unwrap_or(f64::INFINITY), p.seed.unwrap_or(0)),
                per_direction_phases: p.per_direction_phases,
            },
            _ => {
                return Err(Error::invalid(format!(
                    "position {}: exactly one of `sweep` and `truth` must be given",
                    p.id
                )))
            }
        };
        positions.push(PositionSpec {
            id: p.id,
            distance_m: p.distance_m,
            source,
        });
    }
    let manifest = CampaignManifest {
        grid: file.grid,
        steering,
        rx_pattern: file.rx_pattern,
        tx_pattern: file.tx_pattern,
        system_response,
        config: file.config,
        positions,
    };
    manifest.validate()?;
    Ok(manifest)
}

/// Writes the manifest to `path`. Synthetic ground truth goes to
/// `<id>.truth.csv` and the system response to `system_response.csv`, both
/// next to the manifest.
pub fn save_manifest(path: &Path, manifest: &CampaignManifest) -> Result<()> {
    manifest.validate()?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    let system_response = match &manifest.system_response {
        Some(sys) => {
            let name = "system_response.csv";
            formats::write_system_response(&base.join(name), sys)?;
            Some(name.to_string())
        }
        None => None,
    };
    let mut positions = Vec::with_capacity(manifest.positions.len());
    for p in &manifest.positions {
        if let SweepSource::Synthetic { noise, .. } = &p.source {
            if noise.seed > i64::MAX as u64 {
                return Err(Error::invalid(format!(
                    "position {}: seed {} does not fit a TOML integer",
                    p.id, noise.seed
                )));
            }
        }
        let entry = match &p.source {
            SweepSource::File(f) => PositionFile {
                id: p.id.clone(),
                distance_m: p.distance_m,
                sweep: Some(relative_to(f, base)),
                truth: None,
                snr_db: None,
                seed: None,
                per_direction_phases: false,
            },
            SweepSource::Synthetic {
                truth,
                noise,
                per_direction_phases,
            } => {
                let name = format!("{}.truth.csv", p.id);
                formats::write_mpcs(&base.join(&name), truth)?;
                PositionFile {
                    id: p.id.clone(),
                    distance_m: p.distance_m,
                    sweep: None,
                    truth: Some(name),
                    snr_db: Some(noise.snr_db),
                    seed: Some(noise.seed),
                    per_direction_phases: *per_direction_phases,
                }
            }
        };
        positions.push(entry);
    }
    let file = ManifestFile {
        format: CAMPAIGN_FORMAT.into(),
        system_response,
        steering_deg: (manifest.steering != SteeringGrid::standard())
            .then(|| formats::steering_to_degrees(&manifest.steering)),
        grid: manifest.grid,
        rx_pattern: manifest.rx_pattern,
        tx_pattern: manifest.tx_pattern,
        config: manifest.config,
        positions,
    };
    let text = format!(
        "# measurement campaign: frequencies in Hz, distances in m, angles in deg, gains in dB\n{}",
        formats::to_toml(&file)?
    );
    formats::write_text(path, &text)
}

fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}
