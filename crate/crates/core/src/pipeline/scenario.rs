//! Synthetic atrium campaign: 21 line-of-sight receiver positions with a few
//! planted reflections each.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::formats::canonical_mpcs;
use super::manifest::{CampaignManifest, PositionSpec, SweepSource};
use crate::error::Result;
use crate::forward::NoiseSpec;
use crate::geometry;
use crate::types::{Mpc, SPEED_OF_LIGHT};

/// Transmitter position, m.
pub const TX_POSITION: [f64; 3] = [0.0, 0.0, 2.2];
pub const RX_HEIGHT_M: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtriumOptions {
    /// Plant 2-4 reflections per position; line of sight only otherwise.
    pub reflectors: bool,
    /// Extra weaker paths scattered tightly around each reflection: close
    /// enough that the default clustering distance keeps them with it.
    pub scatter_paths: usize,
    pub snr_db: f64,
    /// Independent phase per path and steering direction.
    pub per_direction_phases: bool,
}

impl Default for AtriumOptions {
    fn default() -> Self {
        AtriumOptions {
            reflectors: true,
            scatter_paths: 0,
            snr_db: 40.0,
            per_direction_phases: false,
        }
    }
}

/// Ground truth of one position.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPosition {
    pub id: String,
    pub rx: [f64; 3],
    pub mpcs: Vec<Mpc>,
    /// Planted cluster of each path; cluster 0 is the line of sight.
    pub groups: Vec<usize>,
}

impl PlantedPosition {
    pub fn n_clusters(&self) -> usize {
        self.groups.iter().max().map_or(0, |g| g + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtriumScenario {
    pub manifest: CampaignManifest,
    pub truth: Vec<PlantedPosition>,
}

/// Receiver grid: three columns (y = -2, 0, 2 m) of seven positions at
/// x = 6..18 m in 2 m steps.
pub fn atrium_positions() -> Vec<(String, [f64; 3])> {
    let mut out = Vec::with_capacity(21);
    for y in [-2.0, 0.0, 2.0] {
        for i in 0..7 {
            let x = 6.0 + 2.0 * i as f64;
            out.push((format!("Rx{:02}", out.len() + 1), [x, y, RX_HEIGHT_M]));
        }
    }
    out
}

pub fn scenario_synthetic_atrium(seed: u64) -> Result<AtriumScenario> {
    scenario_synthetic_atrium_with(seed, &AtriumOptions::default())
}

/// Line of sight at the free-space amplitude plus, per position, 2-4
/// reflections 10-25 dB weaker with 3-60 ns excess delay and azimuths at
/// least 40 deg apart from each other and from the line of sight.
pub fn scenario_synthetic_atrium_with(seed: u64, opts: &AtriumOptions) -> Result<AtriumScenario> {
    let mut manifest = CampaignManifest::standard();
    let f_c = manifest.grid.center_hz();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::new();

    for (id, rx) in atrium_positions() {
        let to_tx = [TX_POSITION[0] - rx[0], TX_POSITION[1] - rx[1], TX_POSITION[2] - rx[2]];
        let d = geometry::norm(to_tx);
        let (los_az, los_el) = geometry::vector_angles(to_tx);
        let tau_los = d / SPEED_OF_LIGHT;
        let alpha_los = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * f_c * d);
        let mut mpcs = vec![Mpc::new(alpha_los, tau_los, los_az, los_el)?];
        let mut groups = vec![0];

        if opts.reflectors {
            let count = rng.gen_range(2..=4);
            let mut azimuths = vec![los_az];
            for g in 1..=count {
                let az = loop {
                    let cand = rng.gen_range(0.0..std::f64::consts::TAU);
                    let min_gap = 40f64.to_radians();
                    if azimuths
                        .iter()
                        .all(|&a| geometry::azimuth_difference(cand, a).abs() >= min_gap)
                    {
                        break cand;
                    }
                };
                azimuths.push(az);
                let el = rng.gen_range(-15f64..15.0).to_radians();
                let loss_db = rng.gen_range(10.0..25.0);
                let tau = tau_los + rng.gen_range(3e-9..60e-9);
                let alpha = alpha_los * 10f64.powf(-loss_db / 20.0);
                mpcs.push(Mpc::new(alpha, tau, az, el)?);
                groups.push(g);
                for _ in 0..opts.scatter_paths {
                    let extra_db = rng.gen_range(3.0..8.0);
                    mpcs.push(Mpc::new(
                        alpha * 10f64.powf(-extra_db / 20.0),
                        tau + rng.gen_range(0.1e-9..0.5e-9),
                        geometry::wrap_azimuth(az + rng.gen_range(-3f64..3.0).to_radians()),
                        (el + rng.gen_range(-2f64..2.0).to_radians()).clamp(-1.5, 1.5),
                    )?);
                    groups.push(g);
                }
            }
        }

        let mpcs = canonical_mpcs(&mpcs)?;
        // TOML integers are signed 64-bit
        let noise = NoiseSpec::new(opts.snr_db, rng.gen_range(0..=i64::MAX as u64));
        manifest.positions.push(PositionSpec {
            id: id.clone(),
            distance_m: d,
            source: SweepSource::Synthetic {
                truth: mpcs.clone(),
                noise,
                per_direction_phases: opts.per_direction_phases,
            },
        });
        truth.push(PlantedPosition { id, rx, mpcs, groups });
    }
    Ok(AtriumScenario { manifest, truth })
}
