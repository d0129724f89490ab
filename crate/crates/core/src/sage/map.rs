//! Zero-padded delay spectra per steering direction (periodogram).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::forward::delay_phasor;
use crate::types::{Ctf, FrequencyGrid};

/// Power over (steering direction, delay bin).
///
/// Rows are normalized so that each row sums to the energy of the
/// corresponding CTF row.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayAngleMap {
    n_dirs: usize,
    n_bins: usize,
    bin_width_s: f64,
    power: Vec<f64>,
}

impl DelayAngleMap {
    pub fn n_dirs(&self) -> usize {
        self.n_dirs
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Delay spacing of adjacent bins, `1 / (K * oversampling * f_step)`.
    pub fn bin_width_s(&self) -> f64 {
        self.bin_width_s
    }

    pub fn delay_of_bin(&self, b: usize) -> f64 {
        b as f64 * self.bin_width_s
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.power[n * self.n_bins..(n + 1) * self.n_bins]
    }

    pub fn get(&self, n: usize, b: usize) -> f64 {
        self.power[n * self.n_bins + b]
    }

    /// Delay profile summed over steering directions.
    pub fn summed_profile(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_bins];
        for row in self.power.chunks_exact(self.n_bins) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    /// `(direction, bin)` of the largest entry. Ties go to the lower delay,
    /// then to the lower azimuth.
    pub fn peak(&self, azimuths: &[f64]) -> (usize, usize, f64) {
        peak_of(&self.power, self.n_bins, azimuths)
    }
}

fn peak_of(power: &[f64], n_bins: usize, azimuths: &[f64]) -> (usize, usize, f64) {
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (n, row) in power.chunks_exact(n_bins).enumerate() {
        for (b, &p) in row.iter().enumerate() {
            let better =
                p > best.2 || (p == best.2 && (b < best.1 || (b == best.1 && azimuths[n] < azimuths[best.0])));
            if better {
                best = (n, b, p);
            }
        }
    }
    best
}

/// Per-direction delay power map of a CTF, oversampled by zero padding.
pub fn delay_angle_map(ctf: &Ctf, oversampling: usize) -> Result<DelayAngleMap> {
    if oversampling == 0 {
        return Err(Error::invalid("delay oversampling must be at least 1"));
    }
    Ok(DelaySpectra::with_len(ctf, ctf.n_points() * oversampling).power_map())
}

/// Delay power profile summed over all steering directions, with exactly
/// `K * oversampling` bins. Same normalization as [`delay_angle_map`] but
/// computed one row at a time.
pub fn power_delay_profile(ctf: &Ctf, oversampling: usize) -> Result<Vec<f64>> {
    if oversampling == 0 {
        return Err(Error::invalid("delay oversampling must be at least 1"));
    }
    let k = ctf.n_points();
    let m = k * oversampling;
    let fft = FftPlanner::new().plan_fft_inverse(m);
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = vec![0.0; m];
    for row in ctf.rows() {
        buf[..k].copy_from_slice(row);
        buf[k..].fill(Complex64::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (o, z) in out.iter_mut().zip(&buf) {
            *o += z.norm_sqr() / m as f64;
        }
    }
    Ok(out)
}

/// Smallest `2^a 3^b 5^c` not below `n`.
fn smooth_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Complex zero-padded inverse DFTs of every CTF row, with support for
/// cancelling single-delay components.
pub(crate) struct DelaySpectra {
    grid: FrequencyGrid,
    n_dirs: usize,
    n_bins: usize,
    current: Vec<Complex64>,
    background: f64,
    /// Unit-component spectrum and the amplitudes currently subtracted.
    components: Vec<(Vec<Complex64>, Vec<Complex64>)>,
    fft: Arc<dyn Fft<f64>>,
}

impl DelaySpectra {
    /// Spectra with at least `oversampling` bins per delay resolution cell,
    /// rounded up to an FFT-friendly length.
    pub fn new(ctf: &Ctf, oversampling: usize) -> Result<Self> {
        if oversampling == 0 {
            return Err(Error::invalid("delay oversampling must be at least 1"));
        }
        Ok(Self::with_len(ctf, smooth_len(ctf.n_points() * oversampling)))
    }

    fn with_len(ctf: &Ctf, m: usize) -> Self {
        let k = ctf.n_points();
        let fft = FftPlanner::new().plan_fft_inverse(m);
        let mut current = vec![Complex64::new(0.0, 0.0); ctf.n_dirs() * m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for (row, out) in ctf.rows().zip(current.chunks_exact_mut(m)) {
            out[..k].copy_from_slice(row);
            fft.process_with_scratch(out, &mut scratch);
        }
        let mut spectra = DelaySpectra {
            grid: *ctf.grid(),
            n_dirs: ctf.n_dirs(),
            n_bins: m,
            current,
            background: 0.0,
            components: Vec::new(),
            fft,
        };
        spectra.background = spectra.median_level();
        spectra
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_width_s(&self) -> f64 {
        1.0 / (self.n_bins as f64 * self.grid.f_step_hz)
    }

    /// Spectrum of the unit component `exp(-j 2 pi f_k tau)`.
    pub fn component_spectrum(&self, tau: f64) -> Vec<Complex64> {
        let k = self.grid.n_points;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_bins];
        let step = delay_phasor(self.grid.f_step_hz, tau);
        for (block, chunk) in buf[..k].chunks_mut(128).enumerate() {
            let mut z = delay_phasor(self.grid.frequency(block * 128), tau);
            for v in chunk.iter_mut() {
                *v = z;
                z *= step;
            }
        }
        self.fft.process(&mut buf);
        buf
    }

    /// Registers a component at `tau` with nothing subtracted yet.
    pub fn push_component(&mut self, tau: f64) {
        let spec = self.component_spectrum(tau);
        self.components
            .push((spec, vec![Complex64::new(0.0, 0.0); self.n_dirs]));
    }

    /// Makes the subtracted amplitudes of every registered component equal
    /// to `amps[i]`.
    ///
    /// Rows whose amplitude moved by less than `1e-6` of the component's
    /// largest amplitude are left alone; the skipped error is at least 120 dB
    /// below the component's own peak.
    pub fn sync(&mut self, amps: &[&[Complex64]]) {
        let n_bins = self.n_bins;
        for ((spec, applied), target) in self.components.iter_mut().zip(amps) {
            let scale = target.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
            let tol = 1e-12 * scale;
            for (n, row) in self.current.chunks_exact_mut(n_bins).enumerate() {
                let delta = target[n] - applied[n];
                if delta.norm_sqr() <= tol {
                    continue;
                }
                for (x, d) in row.iter_mut().zip(spec.iter()) {
                    *x -= delta * d;
                }
                applied[n] = target[n];
            }
        }
    }

    fn norm(&self) -> f64 {
        1.0 / self.n_bins as f64
    }

    pub fn power_map(&self) -> DelayAngleMap {
        let s = self.norm();
        DelayAngleMap {
            n_dirs: self.n_dirs,
            n_bins: self.n_bins,
            bin_width_s: self.bin_width_s(),
            power: self.current.iter().map(|z| z.norm_sqr() * s).collect(),
        }
    }

    pub fn power(&self, n: usize, b: usize) -> f64 {
        self.current[n * self.n_bins + b].norm_sqr() * self.norm()
    }

    /// Peak of the current residual map, same tie rule as
    /// [`DelayAngleMap::peak`].
    pub fn peak(&self, azimuths: &[f64]) -> (usize, usize, f64) {
        let s = self.norm();
        let mut best = (0usize, 0usize, f64::NEG_INFINITY);
        for (n, row) in self.current.chunks_exact(self.n_bins).enumerate() {
            for (b, z) in row.iter().enumerate() {
                let p = z.norm_sqr() * s;
                let better =
                    p > best.2 || (p == best.2 && (b < best.1 || (b == best.1 && azimuths[n] < azimuths[best.0])));
                if better {
                    best = (n, b, p);
                }
            }
        }
        best
    }

    /// Mean background power of the input map, estimated from the median
    /// of a strided subsample (exponential statistics: mean = median / ln 2).
    pub fn background_level(&self) -> f64 {
        self.background
    }

    fn median_level(&self) -> f64 {
        let s = self.norm();
        let mut v: Vec<f64> = self.current.iter().step_by(7).map(|z| z.norm_sqr() * s).collect();
        if v.is_empty() {
            return 0.0;
        }
        let mid = v.len() / 2;
        let (_, med, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
        *med / std::f64::consts::LN_2
    }
}
