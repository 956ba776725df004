//! Stochastic integration of the anharmonic trap.
//!
//! Each step is a BAOAB splitting: half kick, half drift, an exact
//! Ornstein–Uhlenbeck velocity update carrying damping and white force noise,
//! half drift, half kick. Without noise the scheme is a symmetric second-order
//! splitting; the noise enters with the exact OU variance, so its `√dt` scaling
//! is built in.

mod compiled;

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::PotentialModel;
use compiled::CompiledForce;

/// Deterministic sinusoidal force `F sin(2πft + φ)` along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    pub axis: usize,
    pub amplitude_n: f64,
    pub frequency_hz: f64,
    #[serde(default)]
    pub phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Drive {
    /// One-sided white force-noise PSD per axis (N²/Hz).
    #[serde(default)]
    pub force_psd_n2_hz: [f64; 3],
    #[serde(default)]
    pub tones: Vec<Tone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub timestep_s: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    /// Mechanical quality factors; `f64::INFINITY` (code only) disables damping.
    pub quality_factors: [f64; 3],
    #[serde(default)]
    pub drive: Drive,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub initial_position_m: [f64; 3],
    #[serde(default)]
    pub initial_velocity_m_s: [f64; 3],
}

impl SimConfig {
    /// Integer number of timesteps per output sample.
    pub fn stride(&self) -> Result<usize> {
        let s = 1.0 / (self.timestep_s * self.sample_rate_hz);
        let n = s.round();
        if n < 1.0 || (s - n).abs() > 1e-6 * n {
            return Err(Error::InvalidParameter(format!(
                "sample period must be an integer multiple of the timestep (got {s} steps)"
            )));
        }
        Ok(n as usize)
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    pub fn validate(&self, model: &PotentialModel) -> Result<()> {
        model.validate()?;
        let wmax = model.omega_rad_s.iter().cloned().fold(0.0, f64::max);
        if !(self.timestep_s > 0.0) || self.timestep_s * wmax >= 0.1 {
            return Err(Error::InvalidParameter(format!(
                "timestep·max ω = {:.3} must be < 0.1",
                self.timestep_s * wmax
            )));
        }
        if self.sample_rate_hz < 10.0 * wmax / (2.0 * PI) {
            return Err(Error::InvalidParameter(format!(
                "sample rate {} Hz is below 10× the highest mode ({:.1} Hz)",
                self.sample_rate_hz,
                wmax / (2.0 * PI)
            )));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::InvalidParameter("duration must be > 0".into()));
        }
        if self.quality_factors.iter().any(|q| !(*q > 0.0)) {
            return Err(Error::InvalidParameter("quality factors must be > 0".into()));
        }
        if self.drive.force_psd_n2_hz.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("force PSD must be finite and ≥ 0".into()));
        }
        if (0..3).any(|i| self.quality_factors[i].is_infinite() && self.drive.force_psd_n2_hz[i] > 0.0) {
            return Err(Error::InvalidParameter("a noise-driven axis needs a finite quality factor".into()));
        }
        if self.drive.tones.iter().any(|t| t.axis > 2) {
            return Err(Error::InvalidParameter("tone axis must be 0, 1 or 2".into()));
        }
        self.stride()?;
        Ok(())
    }
}

/// Uniformly sampled positions and velocities.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time_s + k as f64 / self.sample_rate_hz
    }

    pub fn axis(&self, i: usize) -> Vec<f64> {
        self.positions.iter().map(|p| p[i]).collect()
    }

    /// Per-axis variance about the mean over the whole trajectory (m²).
    pub fn mean_square(&self) -> [f64; 3] {
        let n = self.len() as f64;
        std::array::from_fn(|i| {
            let mean = self.positions.iter().map(|p| p[i]).sum::<f64>() / n;
            self.positions.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / n
        })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x,y,z")?;
        for (k, p) in self.positions.iter().enumerate() {
            writeln!(w, "{:.9},{:e},{:e},{:e}", self.time(k), p[0], p[1], p[2])?;
        }
        Ok(())
    }
}

/// Per-axis mean square displacement about the window mean, over consecutive
/// non-overlapping windows of `window_s` seconds.
pub fn mean_square_amplitudes(traj: &Trajectory, window_s: f64) -> Result<Vec<[f64; 3]>> {
    let n = (window_s * traj.sample_rate_hz).round() as usize;
    if n == 0 || n > traj.len() {
        return Err(Error::TooShort { needed: n.max(1), have: traj.len() });
    }
    Ok(traj
        .positions
        .chunks_exact(n)
        .map(|w| {
            std::array::from_fn(|i| {
                let mean = w.iter().map(|p| p[i]).sum::<f64>() / n as f64;
                w.iter().map(|p| (p[i] - mean).powi(2)).sum::<f64>() / n as f64
            })
        })
        .collect())
}

/// Steppable integrator; emits the trajectory in chunks so long runs need not
/// be held in memory.
pub struct Integrator {
    force: CompiledForce,
    config: SimConfig,
    omega: [f64; 3],
    mass: f64,
    validity_radius: f64,
    dt: f64,
    stride: usize,
    c1: [f64; 3],
    noise_sd: [f64; 3],
    energy_limit: f64,
    rng: ChaCha8Rng,
    r: Vector3<f64>,
    v: Vector3<f64>,
    acc: Vector3<f64>,
    step: u64,
    samples_emitted: usize,
}

impl Integrator {
    pub fn new(model: &PotentialModel, config: &SimConfig) -> Result<Self> {
        config.validate(model)?;
        let force = CompiledForce::new(model);
        let dt = config.timestep_s;
        let m = model.mass_kg;
        let mut c1 = [1.0; 3];
        let mut noise_sd = [0.0; 3];
        let mut energy_scale = 0.0;
        for i in 0..3 {
            let w = model.omega_rad_s[i];
            let gamma = w / config.quality_factors[i];
            c1[i] = (-gamma * dt).exp();
            // one-sided PSD S_a → white intensity S_a/2; OU stationary variance S_a/(4Γ)
            let s_a = config.drive.force_psd_n2_hz[i] / (m * m);
            if s_a > 0.0 {
                noise_sd[i] = (s_a / (4.0 * gamma) * (1.0 - c1[i] * c1[i])).sqrt();
                energy_scale += s_a / (4.0 * gamma);
            }
        }
        for t in &config.drive.tones {
            let w = model.omega_rad_s[t.axis];
            let gamma = w / config.quality_factors[t.axis];
            let wd = 2.0 * PI * t.frequency_hz;
            let x = t.amplitude_n / m / ((w * w - wd * wd).powi(2) + (gamma * wd).powi(2)).sqrt();
            energy_scale += w * w * x * x;
        }
        let r = Vector3::from(config.initial_position_m);
        let v = Vector3::from(config.initial_velocity_m_s);
        energy_scale += 0.5 * v.norm_squared() + model.specific_energy(&r).abs();
        let mut out = Self {
            force,
            config: config.clone(),
            omega: model.omega_rad_s,
            mass: m,
            validity_radius: model.validity_radius_m,
            dt,
            stride: config.stride()?,
            c1,
            noise_sd,
            energy_limit: 1e3 * energy_scale,
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            r,
            v,
            acc: Vector3::zeros(),
            step: 0,
            samples_emitted: 0,
        };
        out.acc = out.acceleration(&r, 0.0);
        Ok(out)
    }

    fn acceleration(&self, r: &Vector3<f64>, t: f64) -> Vector3<f64> {
        let mut a = self.force.acceleration(r);
        let m_inv = 1.0 / self.mass;
        for tone in &self.config.drive.tones {
            a[tone.axis] += tone.amplitude_n * m_inv * (2.0 * PI * tone.frequency_hz * t + tone.phase_rad).sin();
        }
        a
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn samples_remaining(&self) -> usize {
        self.config.n_samples().saturating_sub(self.samples_emitted)
    }

    #[inline]
    fn step_once(&mut self) {
        let h = 0.5 * self.dt;
        self.v += self.acc * h;
        self.r += self.v * h;
        for i in 0..3 {
            let xi: f64 = if self.noise_sd[i] > 0.0 { StandardNormal.sample(&mut self.rng) } else { 0.0 };
            self.v[i] = self.c1[i] * self.v[i] + self.noise_sd[i] * xi;
        }
        self.r += self.v * h;
        self.step += 1;
        self.acc = if self.config.drive.tones.is_empty() {
            self.force.acceleration(&self.r)
        } else {
            self.acceleration(&self.r, self.time())
        };
        self.v += self.acc * h;
    }

    fn check(&self, specific_energy: f64) -> Result<()> {
        let radius = self.r.norm();
        if !radius.is_finite() || !specific_energy.is_finite() || specific_energy > self.energy_limit {
            return Err(Error::Unstable { time: self.time() });
        }
        if radius > self.validity_radius {
            return Err(Error::Escaped { time: self.time(), radius });
        }
        Ok(())
    }

    /// Emits up to `n` further samples (fewer at the end of the run).
    pub fn next_chunk(&mut self, n: usize) -> Result<Trajectory> {
        let n = n.min(self.samples_remaining());
        let mut out = Trajectory {
            sample_rate_hz: self.config.sample_rate_hz,
            start_time_s: self.samples_emitted as f64 / self.config.sample_rate_hz,
            positions: Vec::with_capacity(n),
            velocities: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let e = 0.5 * self.v.norm_squared()
                + 0.5 * (0..3).map(|i| (self.omega[i] * self.r[i]).powi(2)).sum::<f64>();
            self.check(e)?;
            out.positions.push(self.r);
            out.velocities.push(self.v);
            for _ in 0..self.stride {
                self.step_once();
            }
        }
        self.samples_emitted += n;
        Ok(out)
    }
}

/// Integrates the full configured duration.
pub fn integrate(model: &PotentialModel, config: &SimConfig) -> Result<Trajectory> {
    let mut it = Integrator::new(model, config)?;
    it.next_chunk(config.n_samples())
}

/// Per-axis mean square position over a full run, streamed in chunks.
pub fn run_mean_square(model: &PotentialModel, config: &SimConfig) -> Result<[f64; 3]> {
    let mut it = Integrator::new(model, config)?;
    let mut acc = [0.0; 3];
    let mut n = 0usize;
    while it.samples_remaining() > 0 {
        let chunk = it.next_chunk(1 << 16)?;
        for r in &chunk.positions {
            for i in 0..3 {
                acc[i] += r[i] * r[i];
            }
        }
        n += chunk.len();
    }
    Ok(acc.map(|a| a / n as f64))
}

/// Force PSD that would give mean-square amplitude `⟨x²⟩` on a linear mode:
/// `S_F = 4 m² ω³ ⟨x²⟩ / Q`.
pub fn linear_response_psd(mass: f64, omega: f64, q: f64, mean_square: f64) -> f64 {
    4.0 * mass * mass * omega.powi(3) * mean_square / q
}

/// Oscillation frequency (rad/s) of an undamped linear mode under the
/// kick-drift-kick step: `cos(ω̃ dt) = 1 − (ω dt)²/2`.
pub fn discrete_frequency(omega: f64, timestep_s: f64) -> f64 {
    (1.0 - 0.5 * (omega * timestep_s).powi(2)).acos() / timestep_s
}

/// Relative tolerance at which tuning stops; half the 20% acceptance band.
const TUNE_TOL: f64 = 0.1;
const TUNE_MAX_ITER: usize = 10;

/// Finds per-axis force-noise PSDs giving the target RMS amplitudes (m) when
/// `config` is simulated on `model`. Every trial reuses the configured seed.
pub fn steady_state_tune(model: &PotentialModel, config: &SimConfig, targets_rms_m: [f64; 3]) -> Result<[f64; 3]> {
    if targets_rms_m.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("target amplitudes must be ≥ 0".into()));
    }
    let mut psd: [f64; 3] = std::array::from_fn(|i| {
        linear_response_psd(model.mass_kg, model.omega_rad_s[i], config.quality_factors[i], targets_rms_m[i].powi(2))
    });
    if targets_rms_m.iter().all(|t| *t == 0.0) {
        return Ok([0.0; 3]);
    }
    for _ in 0..TUNE_MAX_ITER {
        let mut cfg = config.clone();
        cfg.drive.force_psd_n2_hz = psd;
        cfg.drive.tones.clear();
        let ms = run_mean_square(model, &cfg)?;
        let active = (0..3).filter(|&i| targets_rms_m[i] > 0.0);
        if active.clone().all(|i| (ms[i].sqrt() / targets_rms_m[i] - 1.0).abs() <= TUNE_TOL) {
            return Ok(psd);
        }
        for i in active {
            psd[i] *= targets_rms_m[i].powi(2) / ms[i];
        }
    }
    Err(Error::TuneNoConvergence { last: psd })
}
