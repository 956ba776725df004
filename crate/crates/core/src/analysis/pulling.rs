use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::peaks::{filter_chunks, ChunkRecord, AXIS_LABELS};
use crate::error::{Error, Result};
use crate::potential::GammaMatrix;

pub const MIN_CHUNKS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Ordinary least squares `y = a + b x`.
pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 3 || n != y.len() {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Some(LineFit {
        slope,
        slope_stderr: (sse / (nf - 2.0) / sxx).sqrt(),
        intercept,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
        points: n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullingOptions {
    /// Quiet-mode percentile used when filtering for each active mode;
    /// `None` regresses on all chunks.
    pub quiet_percentile: Option<f64>,
}

impl Default for PullingOptions {
    fn default() -> Self {
        Self { quiet_percentile: Some(30.0) }
    }
}

/// Regression of `f_i` (Hz) on `A_j` (V²) for every cell, and the pickup
/// efficiencies `η_j` (m²/V²) that best reproduce the slopes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullingFit {
    /// `cells[i][j]`: `df_i/dA_j` in Hz/V².
    pub cells: [[LineFit; 3]; 3],
    /// Predicted slope per unit efficiency, `c_ij / 2π` (Hz/m²).
    pub model_slope_per_eta: [[f64; 3]; 3],
    /// Efficiency implied by each cell on its own.
    pub eta_per_cell: [[f64; 3]; 3],
    pub eta_m2_per_v2: [f64; 3],
}

impl PullingFit {
    /// Predicted pulling shift (Hz) for the areas of one chunk.
    pub fn predicted_shift_hz(&self, axis: usize, areas: [f64; 3]) -> f64 {
        (0..3).map(|j| self.model_slope_per_eta[axis][j] * self.eta_m2_per_v2[j] * areas[j]).sum()
    }
}

/// Slope model `df_i/dA_j = η_j · c_ij / 2π` with `c_ij = pull_coefficient(i, j) / ω_i`.
pub fn model_slopes(gamma: &GammaMatrix, omega_rad_s: &[f64; 3]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| gamma.pull_coefficient(i, j) / omega_rad_s[i] / (2.0 * PI)))
}

pub fn fit_pulling(records: &[ChunkRecord], gamma: &GammaMatrix, omega_rad_s: &[f64; 3], opts: &PullingOptions) -> Result<PullingFit> {
    let k = model_slopes(gamma, omega_rad_s);
    let mut cells = [[None; 3]; 3];
    for j in 0..3 {
        let subset = match opts.quiet_percentile {
            Some(p) => filter_chunks(records, j, p)?,
            None => records.to_vec(),
        };
        for i in 0..3 {
            let name = format!("f_{} vs A_{}", AXIS_LABELS[i], AXIS_LABELS[j]);
            let (x, y): (Vec<f64>, Vec<f64>) = subset
                .iter()
                .filter(|c| c.fundamentals[j].present)
                .filter_map(|c| c.frequency_hz(i).map(|f| (c.area(j), f)))
                .unzip();
            if x.len() < MIN_CHUNKS {
                return Err(Error::Insufficient(format!("{name}: {} chunks, need {MIN_CHUNKS}", x.len())));
            }
            cells[i][j] = Some(line_fit(&x, &y).ok_or(Error::SingularRegression(name))?);
        }
    }
    let cells = cells.map(|row| row.map(|c| c.expect("filled")));
    let eta_per_cell = std::array::from_fn(|i| std::array::from_fn(|j| cells[i][j].slope / k[i][j]));
    let mut eta = [0.0; 3];
    for j in 0..3 {
        let num: f64 = (0..3).map(|i| k[i][j] * cells[i][j].slope).sum();
        let den: f64 = (0..3).map(|i| k[i][j] * k[i][j]).sum();
        if den == 0.0 {
            return Err(Error::SingularRegression(format!("column {}: all model slopes vanish", AXIS_LABELS[j])));
        }
        eta[j] = num / den;
    }
    Ok(PullingFit { cells, model_slope_per_eta: k, eta_per_cell, eta_m2_per_v2: eta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicFit {
    /// `R = A_h / A_f²` (V⁻²).
    pub ratio_per_v2: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Least squares `A_h = R A_f²` through the origin over chunks whose
/// fundamental is present; an undetected harmonic contributes its measured
/// (near-zero) area.
pub fn harmonic_quadratic_fit(records: &[ChunkRecord], axis: usize) -> Result<HarmonicFit> {
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|c| c.fundamentals[axis].present)
        .map(|c| (c.fundamentals[axis].area_v2.powi(2), c.harmonics[axis].area_v2))
        .collect();
    if pts.len() < MIN_CHUNKS {
        return Err(Error::Insufficient(format!("{} chunks with a {} fundamental, need {MIN_CHUNKS}", pts.len(), AXIS_LABELS[axis])));
    }
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::SingularRegression(format!("harmonic fit on {}", AXIS_LABELS[axis])));
    }
    let r = pts.iter().map(|(x, y)| x * y).sum::<f64>() / sxx;
    let sse: f64 = pts.iter().map(|(x, y)| (y - r * x).powi(2)).sum();
    Ok(HarmonicFit { ratio_per_v2: r, stderr: (sse / (pts.len() as f64 - 1.0) / sxx).sqrt(), points: pts.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub edges_hz: Vec<f64>,
    pub observed: Vec<usize>,
    pub model: Vec<usize>,
    /// Largest gap between the two empirical CDFs.
    pub ks_distance: f64,
    pub skewness_observed: f64,
    pub skewness_model: f64,
}

pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - m).powi(3)).sum::<f64>() / n;
    if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 }
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Observed chunk frequencies against `model` predictions on common bins.
pub fn frequency_histograms(observed: &[f64], model: &[f64], bins: usize) -> Result<Histograms> {
    if observed.is_empty() || model.is_empty() || bins == 0 {
        return Err(Error::Insufficient("histograms need data and at least one bin".into()));
    }
    let lo = observed.iter().chain(model).cloned().fold(f64::INFINITY, f64::min);
    let hi = observed.iter().chain(model).cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let edges_hz: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let count = |v: &[f64]| {
        let mut c = vec![0usize; bins];
        for x in v {
            c[(((x - lo) / width) as usize).min(bins - 1)] += 1;
        }
        c
    };
    Ok(Histograms {
        edges_hz,
        observed: count(observed),
        model: count(model),
        ks_distance: ks_distance(observed, model),
        skewness_observed: skewness(observed),
        skewness_model: skewness(model),
    })
}

/// Per-chunk model frequencies: base frequency plus the pulling shift
/// predicted from that chunk's areas.
pub fn model_frequencies(records: &[ChunkRecord], fit: &PullingFit, base_hz: [f64; 3], axis: usize) -> Vec<f64> {
    records
        .iter()
        .filter(|c| c.fundamentals[axis].present)
        .map(|c| base_hz[axis] + fit.predicted_shift_hz(axis, [c.area(0), c.area(1), c.area(2)]))
        .collect()
}

pub fn observed_frequencies(records: &[ChunkRecord], axis: usize) -> Vec<f64> {
    records.iter().filter_map(|c| c.frequency_hz(axis)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energies_j: [f64; 3],
    pub energy_stderr_j: [f64; 3],
    /// `E_x/E_y`, `E_x/E_z`, `E_y/E_z`.
    pub ratios: [f64; 3],
    pub ratio_stderr: [f64; 3],
}

/// Mean mode energies `m ω_i² η_i ⟨A_i⟩`.
pub fn mode_energy_report(records: &[ChunkRecord], eta: [f64; 3], mass_kg: f64, omega_rad_s: [f64; 3]) -> Result<EnergyReport> {
    if records.is_empty() {
        return Err(Error::Insufficient("no chunk records".into()));
    }
    let n = records.len() as f64;
    let mut e = [0.0; 3];
    let mut se = [0.0; 3];
    for i in 0..3 {
        let s: Vec<f64> = records.iter().map(|c| mass_kg * omega_rad_s[i].powi(2) * eta[i] * c.area(i)).collect();
        let m = s.iter().sum::<f64>() / n;
        let var = s.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        e[i] = m;
        se[i] = (var / n).sqrt();
    }
    let pair = |a: usize, b: usize| {
        let r = if e[b] > 0.0 { e[a] / e[b] } else { 0.0 };
        let rel = |k: usize| if e[k] > 0.0 { se[k] / e[k] } else { 0.0 };
        (r, r * (rel(a).powi(2) + rel(b).powi(2)).sqrt())
    };
    let p = [pair(0, 1), pair(0, 2), pair(1, 2)];
    Ok(EnergyReport { energies_j: e, energy_stderr_j: se, ratios: p.map(|x| x.0), ratio_stderr: p.map(|x| x.1) })
}
