//! Text formats for CTFs, path lists, cluster labels and system responses.
//!
//! Numbers are written with the shortest decimal representation that parses
//! back to the same `f64`, so every file round-trips bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::SystemResponse;
use crate::types::{Ctf, FrequencyGrid, Mpc, SteeringDirection, SteeringGrid};

pub const CTF_FORMAT: &str = "thz-ctf/1";

/// Header of a CTF: the grids and the name of the data file next to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfManifest {
    pub format: String,
    /// Data file, relative to the manifest's directory.
    pub data_file: String,
    pub f_start_hz: f64,
    pub f_step_hz: f64,
    pub n_points: usize,
    /// `[azimuth_deg, elevation_deg]` per direction, in data-row order.
    pub steering_deg: Vec<[f64; 2]>,
}

impl CtfManifest {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.f_start_hz, self.f_step_hz, self.n_points)
    }

    pub fn steering(&self) -> Result<SteeringGrid> {
        steering_from_degrees(&self.steering_deg)
    }
}

pub fn steering_from_degrees(list: &[[f64; 2]]) -> Result<SteeringGrid> {
    let dirs = list
        .iter()
        .map(|[az, el]| SteeringDirection::from_degrees(*az, *el))
        .collect::<Result<Vec<_>>>()?;
    SteeringGrid::new(dirs)
}

pub fn steering_to_degrees(grid: &SteeringGrid) -> Vec<[f64; 2]> {
    grid.directions()
        .iter()
        .map(|d| [d.azimuth_deg(), d.elevation_deg()])
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Parses a TOML document, reporting the file on failure.
pub fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Format(e.to_string()))
}

/// Default data-file path for a CTF manifest: same stem, `.csv` extension.
pub fn ctf_data_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("csv")
}

/// Writes `ctf` as a TOML manifest at `manifest_path` plus a data file with
/// one row `dir_index, freq_index, re, im` per sample.
pub fn write_ctf(manifest_path: &Path, ctf: &Ctf) -> Result<()> {
    let data_path = ctf_data_path(manifest_path);
    let data_name = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::invalid(format!("unusable CTF path {}", manifest_path.display())))?
        .to_string();
    let grid = ctf.grid();
    let header = CtfManifest {
        format: CTF_FORMAT.into(),
        data_file: data_name,
        f_start_hz: grid.f_start_hz,
        f_step_hz: grid.f_step_hz,
        n_points: grid.n_points,
        steering_deg: steering_to_degrees(ctf.steering()),
    };
    let text = format!(
        "# channel transfer function: frequencies in Hz, steering angles in deg\n{}",
        to_toml(&header)?
    );
    write_text(manifest_path, &text)?;

    let mut w = create(&data_path)?;
    let io = |e| Error::io(&data_path, e);
    writeln!(w, "# dir_index, freq_index, re, im (linear, dimensionless)").map_err(io)?;
    for (n, row) in ctf.rows().enumerate() {
        for (k, h) in row.iter().enumerate() {
            writeln!(w, "{n}, {k}, {}, {}", h.re, h.im).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn read_ctf_manifest(manifest_path: &Path) -> Result<CtfManifest> {
    let header: CtfManifest = parse_toml(manifest_path, &read_text(manifest_path)?)?;
    if header.format != CTF_FORMAT {
        return Err(Error::Format(format!(
            "{}: unsupported CTF format {:?}",
            manifest_path.display(),
            header.format
        )));
    }
    Ok(header)
}

/// Reads a CTF written by [`write_ctf`]. Rows may come in any order but
/// every `(dir, freq)` sample must appear exactly once.
pub fn read_ctf(manifest_path: &Path) -> Result<Ctf> {
    let header = read_ctf_manifest(manifest_path)?;
    let grid = header.grid()?;
    let steering = header.steering()?;
    let data_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new(""))
        .join(&header.data_file);
    let (n_dirs, k) = (steering.len(), grid.n_points);
    let mut h = vec![Complex64::new(0.0, 0.0); n_dirs * k];
    let mut seen = vec![false; n_dirs * k];

    for (idx, line) in open(&data_path)?.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(&data_path, e))?;
        let Some(fields) = split_row(&line) else { continue };
        let parse_err = |msg: String| Error::Parse {
            path: data_path.clone(),
            line: line_no,
            msg,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
        }
        let dir: usize = parse_field(fields[0], "dir_index").map_err(&parse_err)?;
        let freq: usize = parse_field(fields[1], "freq_index").map_err(&parse_err)?;
        let re: f64 = parse_field(fields[2], "re").map_err(&parse_err)?;
        let im: f64 = parse_field(fields[3], "im").map_err(&parse_err)?;
        if dir >= n_dirs || freq >= k {
            return Err(parse_err(format!(
                "index ({dir}, {freq}) outside {n_dirs} directions x {k} frequencies"
            )));
        }
        let at = dir * k + freq;
        if seen[at] {
            return Err(parse_err(format!("duplicate sample ({dir}, {freq})")));
        }
        seen[at] = true;
        h[at] = Complex64::new(re, im);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::MissingSample {
            path: data_path,
            dir: missing / k,
            freq: missing % k,
        });
    }
    Ctf::new(grid, steering, h)
}

/// Splits a data row into trimmed fields; `None` for blank and comment lines.
fn split_row(line: &str) -> Option<Vec<&str>> {
    let t = line.trim();
    if t.is_empty() || t.starts_with('#') {
        return None;
    }
    Some(t.split(',').map(str::trim).collect())
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("cannot parse {name} from {s:?}"))
}

/// One line of a path-list file. Angles in degrees, delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcRecord {
    pub alpha: f64,
    pub tau_s: f64,
    pub aoa_deg: f64,
    pub eoa_deg: f64,
}

/// Nearest radian value that survives a trip through degrees unchanged.
///
/// Degree and radian conversions round, so `to_radians(to_degrees(x))` can
/// differ from `x` in the last place; repeating the trip settles within a
/// couple of steps.
fn settle_angle(mut x: f64) -> f64 {
    for _ in 0..8 {
        let y = x.to_degrees().to_radians();
        if y == x {
            break;
        }
        x = y;
    }
    x
}

impl MpcRecord {
    pub fn from_mpc(m: &Mpc) -> Self {
        MpcRecord {
            alpha: m.alpha,
            tau_s: m.tau,
            aoa_deg: settle_angle(m.aoa).to_degrees(),
            eoa_deg: settle_angle(m.eoa).to_degrees(),
        }
    }

    pub fn to_mpc(&self) -> Result<Mpc> {
        Mpc::new(
            self.alpha,
            self.tau_s,
            settle_angle(self.aoa_deg.to_radians()),
            settle_angle(self.eoa_deg.to_radians()),
        )
    }

    pub fn power_db(&self) -> f64 {
        20.0 * self.alpha.log10()
    }
}

/// The paths exactly as they will read back from a path-list file.
pub fn canonical_mpcs(mpcs: &[Mpc]) -> Result<Vec<Mpc>> {
    mpcs.iter().map(|m| MpcRecord::from_mpc(m).to_mpc()).collect()
}

pub fn write_mpcs(path: &Path, mpcs: &[Mpc]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# alpha, tau_s, aoa_deg, eoa_deg, power_db").map_err(io)?;
    writeln!(
        w,
        "# alpha: linear amplitude gain (antenna de-embedded); tau_s: s; angles: deg; power_db: dB"
    )
    .map_err(io)?;
    for m in mpcs {
        let r = MpcRecord::from_mpc(m);
        writeln!(
            w,
            "{}, {}, {}, {}, {}",
            r.alpha,
            r.tau_s,
            r.aoa_deg,
            r.eoa_deg,
            r.power_db()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_mpcs(path: &Path) -> Result<Vec<Mpc>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(fields) = split_row(&line) else { continue };
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let r = MpcRecord {
            alpha: parse_field(fields[0], "alpha").map_err(&parse_err)?,
            tau_s: parse_field(fields[1], "tau_s").map_err(&parse_err)?,
            aoa_deg: parse_field(fields[2], "aoa_deg").map_err(&parse_err)?,
            eoa_deg: parse_field(fields[3], "eoa_deg").map_err(&parse_err)?,
        };
        let _: f64 = parse_field(fields[4], "power_db").map_err(&parse_err)?;
        out.push(r.to_mpc().map_err(|e| parse_err(e.to_string()))?);
    }
    Ok(out)
}

/// Writes one `mpc_index, cluster_label` row per path; unclustered paths get
/// label `-1`.
pub fn write_labels(path: &Path, labels: &[Option<usize>]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "# mpc_index, cluster_label (-1 = unclustered)").map_err(io)?;
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(l) => writeln!(w, "{i}, {l}"),
            None => writeln!(w, "{i}, -1"),
        }
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_labels(path: &Path) -> Result<Vec<Option<usize>>> {
    let mut out = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(fields) = split_row(&line) else { continue };
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        if fields.len() != 2 {
            return Err(parse_err(format!("expected 2 fields, found {}", fields.len())));
        }
        let i: usize = parse_field(fields[0], "mpc_index").map_err(&parse_err)?;
        if i != out.len() {
            return Err(parse_err(format!("expected mpc_index {}, found {i}", out.len())));
        }
        let l: i64 = parse_field(fields[1], "cluster_label").map_err(&parse_err)?;
        out.push(match l {
            -1 => None,
            l if l >= 0 => Some(l as usize),
            l => return Err(parse_err(format!("invalid cluster label {l}"))),
        });
    }
    Ok(out)
}

/// Writes one `freq_index, connect_re, connect_im, extra_re, extra_im` row
/// per frequency.
pub fn write_system_response(path: &Path, sys: &SystemResponse) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        w,
        "# freq_index, connect_re, connect_im, extra_re, extra_im (linear, dimensionless)"
    )
    .map_err(io)?;
    for (k, (c, e)) in sys.s_connect().iter().zip(sys.s_extra()).enumerate() {
        writeln!(w, "{k}, {}, {}, {}, {}", c.re, c.im, e.re, e.im).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_system_response(path: &Path) -> Result<SystemResponse> {
    let mut connect = Vec::new();
    let mut extra = Vec::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(fields) = split_row(&line) else { continue };
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            msg,
        };
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, found {}", fields.len())));
        }
        let k: usize = parse_field(fields[0], "freq_index").map_err(&parse_err)?;
        if k != connect.len() {
            return Err(parse_err(format!("expected freq_index {}, found {k}", connect.len())));
        }
        let v: Vec<f64> = fields[1..]
            .iter()
            .map(|f| parse_field(f, "response value"))
            .collect::<std::result::Result<_, _>>()
            .map_err(&parse_err)?;
        connect.push(Complex64::new(v[0], v[1]));
        extra.push(Complex64::new(v[2], v[3]));
    }
    SystemResponse::new(connect, extra)
}
