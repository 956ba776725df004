use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n).map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchOptions {
    pub segment_s: f64,
    pub overlap: f64,
    pub window: Window,
}

impl Default for WelchOptions {
    fn default() -> Self {
        Self { segment_s: 10.0, overlap: 0.5, window: Window::Hann }
    }
}

impl WelchOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.segment_s > 0.0) || !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::InvalidParameter("segment length must be > 0 and overlap in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One-sided power spectral density (V²/Hz).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    pub frequencies_hz: Vec<f64>,
    pub density: Vec<f64>,
    pub resolution_hz: f64,
    pub segment_len: usize,
    pub segments: usize,
    pub overlap: f64,
    pub window: Window,
}

impl Psd {
    /// `Σ density Δf` over all bins.
    pub fn total_power(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution_hz
    }

    /// Index range of bins with `lo ≤ f ≤ hi`.
    pub fn band(&self, lo_hz: f64, hi_hz: f64) -> std::ops::Range<usize> {
        let a = (lo_hz / self.resolution_hz).ceil().max(0.0) as usize;
        let b = ((hi_hz / self.resolution_hz).floor() as usize + 1).min(self.density.len());
        a.min(b)..b
    }
}

/// Reusable Welch estimator for a fixed segment length.
pub struct Welch {
    fs: f64,
    n: usize,
    step: usize,
    window: Vec<f64>,
    opts: WelchOptions,
    scale: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl Welch {
    pub fn new(sample_rate_hz: f64, opts: WelchOptions) -> Result<Self> {
        opts.validate()?;
        if !(sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter("sample rate must be > 0".into()));
        }
        let n = (opts.segment_s * sample_rate_hz).round() as usize;
        if n < 2 {
            return Err(Error::InvalidParameter("segment shorter than two samples".into()));
        }
        let step = (n - (opts.overlap * n as f64).round() as usize).max(1);
        let window = opts.window.coefficients(n);
        let scale = 1.0 / (sample_rate_hz * window.iter().map(|w| w * w).sum::<f64>());
        let fft = FftPlanner::new().plan_fft_forward(n);
        Ok(Self { fs: sample_rate_hz, n, step, window, opts, scale, fft })
    }

    pub fn segment_len(&self) -> usize {
        self.n
    }

    pub fn estimate(&self, signal: &[f64]) -> Result<Psd> {
        if signal.len() < self.n {
            return Err(Error::TooShort { needed: self.n, have: signal.len() });
        }
        let bins = self.n / 2 + 1;
        let mut acc = vec![0.0; bins];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut segments = 0;
        let mut start = 0;
        while start + self.n <= signal.len() {
            let seg = &signal[start..start + self.n];
            let mean = seg.iter().sum::<f64>() / self.n as f64;
            for ((b, x), w) in buf.iter_mut().zip(seg).zip(&self.window) {
                *b = Complex::new((x - mean) * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += b.norm_sqr();
            }
            segments += 1;
            start += self.step;
        }
        let norm = self.scale / segments as f64;
        let density: Vec<f64> = acc
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let one_sided = if k == 0 || (self.n.is_multiple_of(2) && k == self.n / 2) { 1.0 } else { 2.0 };
                a * norm * one_sided
            })
            .collect();
        let resolution_hz = self.fs / self.n as f64;
        Ok(Psd {
            frequencies_hz: (0..bins).map(|k| k as f64 * resolution_hz).collect(),
            density,
            resolution_hz,
            segment_len: self.n,
            segments,
            overlap: self.opts.overlap,
            window: self.opts.window,
        })
    }
}

/// Welch averaged periodogram, constant-detrended per segment, one-sided
/// density normalisation.
pub fn welch_psd(signal: &[f64], sample_rate_hz: f64, opts: WelchOptions) -> Result<Psd> {
    Welch::new(sample_rate_hz, opts)?.estimate(signal)
}
