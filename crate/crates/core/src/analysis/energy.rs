use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::pulling::line_fit;
use crate::dynamics::{linear_response_psd, Drive, Integrator, SimConfig};
use crate::error::{Error, Result};
use crate::potential::PotentialModel;

/// `Q = C ω τ`, with `τ` the 1/e time of the energy autocorrelation.
/// Pinned from [`calibrate_q_constant`] over seeds 1–8.
pub const Q_CALIBRATION: f64 = 1.005;

/// Lags whose normalised autocorrelation falls below this are not fitted.
const ACF_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrelationFit {
    pub tau_s: f64,
    pub quality_factor: f64,
    pub calibration: f64,
    pub lag_s: f64,
    pub acf: Vec<f64>,
    pub fitted_lags: usize,
}

/// Normalised autocovariance for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| if c0 > 0.0 { d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0 } else { 0.0 })
        .collect()
}

/// Mode-energy proxy `ω² ⟨x²⟩` over consecutive windows of `window_s`.
pub fn windowed_energy(signal: &[f64], sample_rate_hz: f64, window_s: f64, omega_rad_s: f64) -> Vec<f64> {
    let n = ((window_s * sample_rate_hz).round() as usize).max(1);
    signal
        .chunks_exact(n)
        .map(|c| omega_rad_s * omega_rad_s * c.iter().map(|x| x * x).sum::<f64>() / n as f64)
        .collect()
}

/// Exponential fit `ln ρ(k) = a − k·lag/τ` over lags `k ≥ 1` down to
/// `ρ = 0.1`; a free intercept absorbs the window averaging at short lags.
pub fn energy_autocorrelation(energy: &[f64], lag_s: f64, omega_rad_s: f64, calibration: f64) -> Result<AutocorrelationFit> {
    if energy.len() < 20 {
        return Err(Error::TooShort { needed: 20, have: energy.len() });
    }
    let acf = autocorrelation(energy, energy.len() / 4);
    let floor = ACF_FLOOR.max(3.0 / (energy.len() as f64).sqrt());
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, r) in acf.iter().enumerate().skip(1) {
        if *r <= floor {
            break;
        }
        xs.push(k as f64 * lag_s);
        ys.push(r.ln());
    }
    let tau = if xs.is_empty() {
        // decorrelated within one lag
        let r1 = acf.get(1).copied().unwrap_or(0.0);
        if r1 > 0.0 { -lag_s / r1.ln() } else { 0.0 }
    } else if xs.len() < 3 {
        let r1 = acf[1];
        -lag_s / r1.ln()
    } else {
        let fit = line_fit(&xs, &ys).ok_or_else(|| Error::AutocorrelationFit { reason: "degenerate lags".into(), acf: acf.clone() })?;
        if !(fit.slope < 0.0) {
            return Err(Error::AutocorrelationFit { reason: format!("non-decaying slope {}", fit.slope), acf });
        }
        -1.0 / fit.slope
    };
    let span = energy.len() as f64 * lag_s;
    if span < 10.0 * tau {
        return Err(Error::Insufficient(format!("series spans {span:.1} s, need 10 τ = {:.1} s", 10.0 * tau)));
    }
    Ok(AutocorrelationFit {
        tau_s: tau,
        quality_factor: calibration * omega_rad_s * tau,
        calibration,
        lag_s,
        fitted_lags: xs.len(),
        acf,
    })
}

/// Known-Q oracle: three uncoupled noise-driven harmonic modes near 100 Hz
/// share quality factor `q`; each is run for 1000 τ and its `ω τ` measured from
/// the autocorrelation of `v² + ω² x²` averaged over windows of τ/40. Returns the mean over modes.
pub fn known_q_measurement(q: f64, seed: u64) -> Result<f64> {
    let omega = [1.0, 1.1, 1.2].map(|s| 2.0 * PI * 100.0 * s);
    let tau = q / omega[0];
    let model = PotentialModel::harmonic(1e-9, omega, 1.0);
    let fs = 1250.0;
    let ms = 1e-10;
    let config = SimConfig {
        timestep_s: 1e-4,
        duration_s: 1000.0 * tau,
        sample_rate_hz: fs,
        quality_factors: [q; 3],
        drive: Drive { force_psd_n2_hz: omega.map(|w| linear_response_psd(model.mass_kg, w, q, ms)), tones: vec![] },
        rng_seed: seed,
        initial_position_m: [ms.sqrt(); 3],
        initial_velocity_m_s: [0.0; 3],
    };
    let per_window = (tau / 40.0 * fs).round().max(1.0) as usize;
    let mut it = Integrator::new(&model, &config)?;
    let mut energy: [Vec<f64>; 3] = Default::default();
    while it.samples_remaining() >= per_window {
        let chunk = it.next_chunk(per_window)?;
        for (i, e) in energy.iter_mut().enumerate() {
            let total: f64 = chunk.positions.iter().zip(&chunk.velocities).map(|(r, v)| v[i] * v[i] + (omega[i] * r[i]).powi(2)).sum();
            e.push(total / per_window as f64);
        }
    }
    let mut sum = 0.0;
    for i in 0..3 {
        sum += energy_autocorrelation(&energy[i], per_window as f64 / fs, omega[i], 1.0)?.quality_factor;
    }
    Ok(sum / 3.0)
}

/// Calibration constant `C = Q / (ω τ)` from the known-Q oracle at Q = 5000,
/// averaged over `seeds`.
pub fn calibrate_q_constant(seeds: std::ops::RangeInclusive<u64>) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0.0;
    for seed in seeds {
        sum += known_q_measurement(5000.0, seed)? / 5000.0;
        n += 1.0;
    }
    Ok(n / sum)
}
