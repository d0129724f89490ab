use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Deserialize;

use thz_sounder::calibration::calibrate;
use thz_sounder::characterization::position_stats;
use thz_sounder::clustering::{cluster_mpcs, form_clusters, ClusteringConfig};
use thz_sounder::forward::{synth_ctf, NoiseSpec, RawSweep};
use thz_sounder::pipeline::formats;
use thz_sounder::pipeline::{
    emit_report, format_table, load_manifest, run_pipeline, save_manifest, scenario_synthetic_atrium_with,
    with_phases, AtriumOptions, CampaignReport, CharacterizationConfig, PipelineConfig, PositionOutcome,
    PositionSummary, ReportFormat, RunOptions, SweepSource,
};
use thz_sounder::sage::{estimate_mpcs, EstimatorConfig};
use thz_sounder::{AntennaPattern, Error, FrequencyGrid, SteeringGrid};

#[derive(Parser)]
#[command(
    name = "thz-sounder",
    version,
    about = "Direction-scanned THz channel sounding post-processing"
)]
struct Cli {
    /// TOML file with [estimator], [clustering], [characterization] and
    /// optionally [rx_pattern] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scenario seed (synth) or noise seed (synth --truth).
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Worker threads for per-position processing.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic atrium campaign, or synthesize one CTF from a path list.
    Synth {
        /// Path list to synthesize a single CTF from (written to <out>/ctf.toml).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Signal-to-noise ratio in dB (`inf` for noiseless).
        #[arg(long, default_value_t = 40.0)]
        snr_db: f64,
        /// Independent phase per path and steering direction.
        #[arg(long)]
        per_direction_phases: bool,
        /// Line-of-sight paths only.
        #[arg(long)]
        los_only: bool,
        /// Weaker paths planted around each reflection.
        #[arg(long, default_value_t = 0)]
        scatter: usize,
        /// Also write every position's CTF and reference the files from the manifest.
        #[arg(long)]
        ctf_files: bool,
    },
    /// Remove the system response from a raw sweep (writes <out>/calibrated.toml).
    Calibrate {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        system: PathBuf,
    },
    /// Extract paths from a CTF (writes <out>/mpcs.csv).
    Estimate {
        #[arg(long)]
        ctf: PathBuf,
    },
    /// Cluster a path list (writes <out>/labels.csv).
    Cluster {
        #[arg(long)]
        mpcs: PathBuf,
    },
    /// Statistics of one position (writes <out>/stats.json).
    Characterize {
        #[arg(long)]
        mpcs: PathBuf,
        /// Cluster labels; clustered from scratch when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// CTF for the best-direction path loss.
        #[arg(long)]
        ctf: Option<PathBuf>,
    },
    /// Run a whole campaign (report, table, plot data and per-position files).
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        /// Skip the power-delay-profile and azimuth-spectrum files.
        #[arg(long)]
        no_plots: bool,
    },
    /// Regenerate the table from a structured report (writes <out>/report.txt).
    Report {
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CliConfig {
    estimator: EstimatorConfig,
    clustering: ClusteringConfig,
    characterization: CharacterizationConfig,
    rx_pattern: Option<AntennaPattern>,
}

impl CliConfig {
    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            estimator: self.estimator,
            clustering: self.clustering,
            characterization: self.characterization,
        }
    }

    fn rx_pattern(&self) -> AntennaPattern {
        self.rx_pattern.unwrap_or_else(AntennaPattern::standard_rx)
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Option<CliConfig>> {
    let Some(path) = path else { return Ok(None) };
    let text = formats::read_text(path)?;
    let cfg: CliConfig = formats::parse_toml(path, &text)?;
    cfg.pipeline().validate()?;
    Ok(Some(cfg))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .chain()
                .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_numerical));
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<ExitCode> {
    let file_cfg = load_config(cli.config.as_deref())?;
    let cfg = file_cfg.unwrap_or_default();
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    match &cli.command {
        Command::Synth {
            truth,
            snr_db,
            per_direction_phases,
            los_only,
            scatter,
            ctf_files,
        } => {
            let noise = NoiseSpec::new(*snr_db, cli.seed);
            if let Some(truth) = truth {
                let n_dirs = per_direction_phases.then(|| SteeringGrid::standard().len());
                let paths = with_phases(&formats::read_mpcs(truth)?, noise.seed, n_dirs);
                let ctf = synth_ctf(
                    &paths,
                    &FrequencyGrid::standard(),
                    &SteeringGrid::standard(),
                    &cfg.rx_pattern(),
                    Some(&noise),
                )?;
                formats::write_ctf(&out.join("ctf.toml"), &ctf)?;
                return Ok(ExitCode::SUCCESS);
            }
            let opts = AtriumOptions {
                reflectors: !los_only,
                scatter_paths: *scatter,
                snr_db: noise.snr_db,
                per_direction_phases: *per_direction_phases,
            };
            let mut scenario = scenario_synthetic_atrium_with(cli.seed, &opts)?;
            if cli.config.is_some() {
                scenario.manifest.config = cfg.pipeline();
                scenario.manifest.rx_pattern = cfg.rx_pattern();
            }
            if *ctf_files {
                let m = &mut scenario.manifest;
                for i in 0..m.positions.len() {
                    let ctf = m.load_sweep(&m.positions[i])?;
                    let path = out.join(format!("{}.toml", m.positions[i].id));
                    formats::write_ctf(&path, &ctf)?;
                    m.positions[i].source = SweepSource::File(path);
                }
            }
            save_manifest(&out.join("campaign.toml"), &scenario.manifest)?;
            for t in &scenario.truth {
                let groups: Vec<Option<usize>> = t.groups.iter().copied().map(Some).collect();
                formats::write_labels(&out.join(format!("{}.truth_labels.csv", t.id)), &groups)?;
            }
        }
        Command::Calibrate { raw, system } => {
            let sweep = RawSweep(formats::read_ctf(raw)?);
            let sys = formats::read_system_response(system)?;
            formats::write_ctf(&out.join("calibrated.toml"), &calibrate(&sweep, &sys)?)?;
        }
        Command::Estimate { ctf } => {
            let ctf = formats::read_ctf(ctf)?;
            let est = estimate_mpcs(&ctf, &cfg.rx_pattern(), &cfg.estimator)?;
            let mpcs: Vec<_> = est.into_iter().map(|e| e.mpc).collect();
            formats::write_mpcs(&out.join("mpcs.csv"), &mpcs)?;
            eprintln!("{} paths", mpcs.len());
        }
        Command::Cluster { mpcs } => {
            let mpcs = formats::read_mpcs(mpcs)?;
            let (labels, clusters) = cluster_mpcs(&mpcs, &cfg.clustering)?;
            formats::write_labels(&out.join("labels.csv"), &labels)?;
            eprintln!("{} clusters", clusters.len());
        }
        Command::Characterize { mpcs, labels, ctf } => {
            let mpcs = formats::read_mpcs(mpcs)?;
            let clusters = match labels {
                Some(l) => form_clusters(&mpcs, &formats::read_labels(l)?)?,
                None => cluster_mpcs(&mpcs, &cfg.clustering)?.1,
            };
            let ctf = ctf.as_deref().map(formats::read_ctf).transpose()?;
            let compensation = if cfg.characterization.compensate_rx_gain {
                cfg.rx_pattern().boresight_gain_dbi
            } else {
                0.0
            };
            let stats = position_stats(
                ctf.as_ref(),
                compensation,
                &mpcs,
                &clusters,
                cfg.characterization.spread_mode,
            )?;
            let text = serde_json::to_string_pretty(&PositionSummary::from(&stats))? + "\n";
            formats::write_text(&out.join("stats.json"), &text)?;
            print!("{text}");
        }
        Command::Pipeline { manifest, no_plots } => {
            let mut m = load_manifest(manifest)?;
            if let Some(c) = &cli.config {
                let c = load_config(Some(c))?.unwrap_or_default();
                m.config = c.pipeline();
                if let Some(p) = c.rx_pattern {
                    m.rx_pattern = p;
                }
            }
            let opts = RunOptions {
                jobs: cli.jobs,
                out_dir: Some(out.clone()),
                plots: !no_plots,
            };
            let result = run_pipeline(&m, &opts)?;
            emit_report(
                &result.report,
                &result.plots,
                out,
                &[ReportFormat::Structured, ReportFormat::Table],
            )?;
            print!("{}", format_table(&result.report));
            return Ok(failure_code(&result.report));
        }
        Command::Report { report } => {
            let r = CampaignReport::read(report)?;
            emit_report(&r, &[], out, &[ReportFormat::Table])?;
            print!("{}", format_table(&r));
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Reports failed positions on stderr; exit code 2 if any failed
/// numerically, 1 if any failed otherwise.
fn failure_code(report: &CampaignReport) -> ExitCode {
    let mut code = 0u8;
    for p in &report.positions {
        if let PositionOutcome::Failed { error, numerical } = &p.outcome {
            eprintln!("position {}: {error}", p.id);
            code = code.max(if *numerical { 2 } else { 1 });
        }
    }
    ExitCode::from(code)
}
