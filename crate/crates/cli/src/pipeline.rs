//! Stages shared by the commands: field map, trap fit, tuned streaming
//! simulation with on-line transduction and chunk analysis, and the
//! record-level analysis report.

use std::f64::consts::PI;
use std::io::Write;

use levitation_core::analysis::{
    energy_autocorrelation, fit_pulling, frequency_histograms, harmonic_quadratic_fit, mode_energy_report,
    model_frequencies, observed_frequencies, AutocorrelationFit, ChunkAnalyzer, ChunkOptions, ChunkRecord,
    EnergyReport, HarmonicFit, Histograms, PullingFit, PullingOptions, AXIS_LABELS,
};
use levitation_core::dynamics::{discrete_frequency, steady_state_tune, Drive, Integrator, SimConfig, Trajectory};
use levitation_core::fieldmodel::FieldSample;
use levitation_core::potential::{sample_trap_forces, Cubic, FitReport, PotentialModel};
use levitation_core::transduction::{TransferChain, VoltageTrace, GEOMETRIC_EFFICIENCY_PHI0_PER_M, PULLING_EFFICIENCY_PHI0_PER_M};
use levitation_core::{Error, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::MasterConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldmapReport {
    pub current_a: f64,
    pub trap_center_m: [f64; 3],
    pub gradients_t_m: [f64; 3],
    pub omega_rad_s: [f64; 3],
    pub frequencies_hz: [f64; 3],
    pub zeta: [f64; 3],
    pub equilibrium_m: [f64; 3],
    pub lift_current_a: f64,
    /// Vertical diamagnetic force on a sphere resting on the lower coil plane (N).
    pub lift_force_n: f64,
    pub weight_n: f64,
}

/// Trap characterisation and a field grid about the field minimum.
pub fn fieldmap(cfg: &MasterConfig) -> Result<(FieldmapReport, Vec<FieldSample>)> {
    let a = &cfg.geometry;
    let p = &cfg.particle;
    let center = a.find_trap_center(&a.default_search_box())?;
    let s = a.field_at(&center)?;
    let omega = a.trap_frequencies(p)?;
    let zeta = a.geometric_factors()?;
    let equilibrium = a.find_equilibrium(p, cfg.gravity_m_s2, &a.default_search_box())?;
    let lifted = a.with_current(cfg.fieldmap.lift_current_a);
    let lift = lifted.diamagnet_force(p, &lifted.resting_position(p))?;
    let n = cfg.fieldmap.grid_points;
    let h = cfg.fieldmap.grid_half_width_m;
    let coord = |k: usize| -h + 2.0 * h * k as f64 / (n - 1) as f64;
    let grid = (0..n * n * n)
        .map(|i| a.field_at(&(center + Vector3::new(coord(i / (n * n)), coord((i / n) % n), coord(i % n)))))
        .collect::<Result<Vec<_>>>()?;
    let report = FieldmapReport {
        current_a: a.current_a,
        trap_center_m: center.into(),
        gradients_t_m: [s.axis_gradient(0), s.axis_gradient(1), s.axis_gradient(2)],
        omega_rad_s: omega,
        frequencies_hz: omega.map(|w| w / (2.0 * PI)),
        zeta,
        equilibrium_m: equilibrium.into(),
        lift_current_a: cfg.fieldmap.lift_current_a,
        lift_force_n: lift.z,
        weight_n: p.mass() * cfg.gravity_m_s2,
    };
    Ok((report, grid))
}

pub fn write_field_grid<W: Write>(grid: &[FieldSample], mut w: W) -> Result<()> {
    writeln!(w, "# positions m, field T, gradients T/m")?;
    writeln!(w, "x,y,z,bx,by,bz,b,dbx_dx,dbx_dy,dbx_dz,dby_dx,dby_dy,dby_dz,dbz_dx,dbz_dy,dbz_dz")?;
    for s in grid {
        let j = &s.jacobian;
        write!(w, "{:e},{:e},{:e},{:e},{:e},{:e},{:e}", s.position.x, s.position.y, s.position.z, s.b.x, s.b.y, s.b.z, s.b.norm())?;
        for r in 0..3 {
            for c in 0..3 {
                write!(w, ",{:e}", j[(r, c)])?;
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrapFit {
    pub fitted: PotentialModel,
    pub report: FitReport,
    /// The fitted model with the configured overrides, as integrated.
    pub dynamics: PotentialModel,
}

pub fn fit_trap(cfg: &MasterConfig) -> Result<TrapFit> {
    let exp = sample_trap_forces(&cfg.geometry, &cfg.particle, cfg.gravity_m_s2, cfg.fit.half_width_m, cfg.fit.grid_points)?;
    let (fitted, report) = exp.fit()?;
    let mut dynamics = fitted.clone();
    if let Some(f) = cfg.fit.frequency_override_hz {
        dynamics.omega_rad_s = f.map(|f| 2.0 * PI * f);
    }
    if !cfg.fit.keep_cubic {
        dynamics.beta = Cubic::default();
    }
    if let Some(r) = cfg.fit.validity_radius_m {
        dynamics.validity_radius_m = r;
    }
    Ok(TrapFit { fitted, report, dynamics })
}

/// Simulation settings from the config with no drive yet.
pub fn base_sim(cfg: &MasterConfig) -> SimConfig {
    SimConfig {
        timestep_s: cfg.sim.timestep_s,
        duration_s: cfg.sim.duration_s,
        sample_rate_hz: cfg.sim.sample_rate_hz,
        quality_factors: cfg.sim.quality_factors,
        drive: Drive::default(),
        rng_seed: cfg.sim.seed,
        initial_position_m: [0.0; 3],
        initial_velocity_m_s: [0.0; 3],
    }
}

/// Tunes the white force drive so the steady-state RMS amplitudes hit `targets`.
pub fn tune(model: &PotentialModel, sim: &SimConfig, tune_duration_s: f64, targets: [f64; 3]) -> Result<SimConfig> {
    let probe = SimConfig { duration_s: tune_duration_s, rng_seed: sim.rng_seed ^ 0x7475_6e65, ..sim.clone() };
    let psd = steady_state_tune(model, &probe, targets)?;
    let mut out = sim.clone();
    out.drive.force_psd_n2_hz = psd;
    // start near the stationary state to skip the ring-up
    out.initial_position_m = targets;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<ChunkRecord>,
    /// Per-axis mode-energy proxy `ω² A` over consecutive energy windows.
    pub energy: [Vec<f64>; 3],
    pub energy_lag_s: f64,
    /// Mean-square displacement over the analysed samples (m²).
    pub mean_square_m2: [f64; 3],
    pub duration_s: f64,
}

/// Mode frequencies (Hz) the analysis bands are centred on: the integrator's
/// discrete frequency plus the pull expected at the target amplitudes.
pub fn band_centres_hz(model: &PotentialModel, cfg: &MasterConfig) -> [f64; 3] {
    let pull = model.frequency_pull(cfg.sim.target_rms_m.map(|r| r * r));
    std::array::from_fn(|i| (discrete_frequency(model.omega_rad_s[i], cfg.sim.timestep_s) + pull[i]) / (2.0 * PI))
}

/// Seed of the readout noise; independent of the dynamics stream.
pub fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x5155_4944
}

/// Integrates chunk by chunk, transduces each chunk and analyses it, so
/// memory stays bounded for long runs. `sink` sees every chunk.
pub fn run_streaming(
    model: &PotentialModel,
    sim: &SimConfig,
    cfg: &MasterConfig,
    mut sink: impl FnMut(&Trajectory, &VoltageTrace) -> Result<()>,
) -> Result<RunOutput> {
    let transducer = cfg.transducer.transducer();
    let bands = cfg.mode_bands(band_centres_hz(model, cfg)).map_err(|e| e.in_stage("chunk-analysis"))?;
    let chunker = ChunkAnalyzer::new(sim.sample_rate_hz, bands, &cfg.analysis.chunk)?;
    let energy_opts = ChunkOptions { chunk_s: cfg.analysis.energy_window_s, ..cfg.analysis.chunk };
    let energizer = ChunkAnalyzer::new(sim.sample_rate_hz, bands, &energy_opts)?;
    let n = chunker.chunk_len();
    let ne = energizer.chunk_len();
    let mut it = Integrator::new(model, sim).map_err(|e| e.in_stage("simulate"))?;
    let mut out = RunOutput { energy_lag_s: ne as f64 / sim.sample_rate_hz, ..Default::default() };
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    let mut k = 0u64;
    while it.samples_remaining() >= n {
        let traj = it.next_chunk(n).map_err(|e| e.in_stage("simulate"))?;
        let noise = cfg.transducer.noise.then_some((noise_seed(sim.rng_seed), k));
        let v = transducer.voltage(&traj, noise).map_err(|e| e.in_stage("transduce"))?;
        sink(&traj, &v)?;
        out.records.push(chunker.analyze(traj.start_time_s, &v.volts).map_err(|e| e.in_stage("chunk-analysis"))?);
        for sub in v.volts.chunks_exact(ne) {
            let r = energizer.analyze(0.0, sub).map_err(|e| e.in_stage("chunk-analysis"))?;
            for i in 0..3 {
                out.energy[i].push(model.omega_rad_s[i].powi(2) * r.area(i));
            }
        }
        for r in &traj.positions {
            for i in 0..3 {
                sum[i] += r[i] * r[i];
            }
        }
        count += traj.len();
        k += 1;
    }
    out.mean_square_m2 = sum.map(|s| s / count.max(1) as f64);
    out.duration_s = count as f64 / sim.sample_rate_hz;
    Ok(out)
}

/// Chunk records and energy series from a stored voltage trace.
pub fn analyze_trace(trace: &VoltageTrace, model: &PotentialModel, cfg: &MasterConfig) -> Result<RunOutput> {
    let bands = cfg.mode_bands(band_centres_hz(model, cfg)).map_err(|e| e.in_stage("chunk-analysis"))?;
    let chunker = ChunkAnalyzer::new(trace.sample_rate_hz, bands, &cfg.analysis.chunk)?;
    let energy_opts = ChunkOptions { chunk_s: cfg.analysis.energy_window_s, ..cfg.analysis.chunk };
    let energizer = ChunkAnalyzer::new(trace.sample_rate_hz, bands, &energy_opts)?;
    let n = chunker.chunk_len();
    if trace.len() < 2 * n {
        return Err(Error::TooShort { needed: 2 * n, have: trace.len() });
    }
    let mut out = RunOutput { energy_lag_s: energizer.chunk_len() as f64 / trace.sample_rate_hz, ..Default::default() };
    for (k, c) in trace.volts.chunks_exact(n).enumerate() {
        out.records.push(chunker.analyze(trace.start_time_s + (k * n) as f64 / trace.sample_rate_hz, c)?);
        for sub in c.chunks_exact(energizer.chunk_len()) {
            let r = energizer.analyze(0.0, sub)?;
            for i in 0..3 {
                out.energy[i].push(model.omega_rad_s[i].powi(2) * r.area(i));
            }
        }
    }
    out.duration_s = out.records.len() as f64 * n as f64 / trace.sample_rate_hz;
    out.mean_square_m2 = [f64::NAN; 3];
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisHarmonic {
    pub axis: String,
    pub fit: Option<HarmonicFit>,
    /// Ratio expected from the pickup nonlinearity with the fitted efficiency.
    pub pickup_prediction_per_v2: Option<f64>,
    /// Ratio expected from the trap cubic term with the fitted efficiency.
    pub trap_prediction_per_v2: f64,
    pub note: Option<String>,
}

/// The two published efficiency estimates through the configured FLL gain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaPaths {
    /// From the pickup-geometry efficiencies (m²/V²).
    pub geometric_m2_per_v2: [f64; 3],
    /// From the pulling-inferred efficiencies (m²/V²).
    pub pulling_m2_per_v2: [f64; 3],
    /// Pulling over geometric.
    pub ratio: [f64; 3],
}

impl EtaPaths {
    pub fn new(chain: &TransferChain) -> Self {
        let geometric_m2_per_v2 = chain.efficiency_from_squid_response(GEOMETRIC_EFFICIENCY_PHI0_PER_M);
        let pulling_m2_per_v2 = chain.efficiency_from_squid_response(PULLING_EFFICIENCY_PHI0_PER_M);
        Self { geometric_m2_per_v2, pulling_m2_per_v2, ratio: std::array::from_fn(|i| pulling_m2_per_v2[i] / geometric_m2_per_v2[i]) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub chunks: usize,
    pub flagged_chunks: usize,
    pub pulling: PullingFit,
    /// `1/q²` implied by the configured pickup and chain (m²/V²).
    pub eta_configured_m2_per_v2: [f64; 3],
    pub eta_reference_paths: EtaPaths,
    pub histograms: Vec<Histograms>,
    pub harmonics: Vec<AxisHarmonic>,
    pub energy: EnergyReport,
    pub correlation: Vec<AutocorrelationFit>,
    pub quality_factors: [f64; 3],
    pub energy_times_s: [f64; 3],
}

/// Pulling fit, histograms, harmonic fits, mode energies and correlation times.
/// `harmonic_model` supplies the cubic terms for the trap-side harmonic prediction.
pub fn analyze_records(run: &RunOutput, model: &PotentialModel, harmonic_model: &PotentialModel, cfg: &MasterConfig) -> Result<AnalysisReport> {
    let recs = &run.records;
    let stage = |e: Error| e.in_stage("fit-pulling");
    let gamma = model.gamma();
    let pulling =
        fit_pulling(recs, &gamma, &model.omega_rad_s, &PullingOptions { quiet_percentile: cfg.analysis.quiet_percentile }).map_err(stage)?;
    let eta = pulling.eta_m2_per_v2;
    // the simulated modes ring at the integrator's discrete frequency
    let base = model.omega_rad_s.map(|w| discrete_frequency(w, cfg.sim.timestep_s) / (2.0 * PI));
    let histograms = (0..3)
        .map(|i| frequency_histograms(&observed_frequencies(recs, i), &model_frequencies(recs, &pulling, base, i), cfg.analysis.histogram_bins))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("histograms"))?;
    let harmonics = (0..3)
        .map(|i| {
            let (fit, note) = match harmonic_quadratic_fit(recs, i) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            AxisHarmonic {
                axis: AXIS_LABELS[i].into(),
                fit,
                pickup_prediction_per_v2: cfg.transducer.pickup.second_harmonic_ratio_pickup(eta[i], i).ok(),
                trap_prediction_per_v2: harmonic_model.second_harmonic_ratio_trap(eta[i], i),
                note,
            }
        })
        .collect();
    let energy = mode_energy_report(recs, eta, model.mass_kg, model.omega_rad_s).map_err(|e| e.in_stage("energy"))?;
    let correlation = (0..3)
        .map(|i| energy_autocorrelation(&run.energy[i], run.energy_lag_s, model.omega_rad_s[i], cfg.analysis.q_calibration))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("energy-correlation"))?;
    Ok(AnalysisReport {
        chunks: recs.len(),
        flagged_chunks: recs.iter().filter(|c| c.flagged()).count(),
        eta_configured_m2_per_v2: cfg.transducer.chain.efficiency(&cfg.transducer.pickup)?,
        eta_reference_paths: EtaPaths::new(&cfg.transducer.chain),
        quality_factors: std::array::from_fn(|i| correlation[i].quality_factor),
        energy_times_s: std::array::from_fn(|i| correlation[i].tau_s),
        pulling,
        histograms,
        harmonics,
        energy,
        correlation,
    })
}

pub fn write_histograms_csv<W: Write>(h: &[Histograms], mut w: W) -> Result<()> {
    writeln!(w, "# bin edges in Hz, counts per 10 s chunk")?;
    writeln!(w, "axis,lo_hz,hi_hz,observed,model")?;
    for (axis, hist) in h.iter().enumerate() {
        for k in 0..hist.observed.len() {
            writeln!(w, "{},{:.6},{:.6},{},{}", AXIS_LABELS[axis], hist.edges_hz[k], hist.edges_hz[k + 1], hist.observed[k], hist.model[k])?;
        }
    }
    Ok(())
}

/// Angular frequency per axis for each current, with the linear-fit R².
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurrentSweep {
    pub currents_a: Vec<f64>,
    pub omega_rad_s: Vec<[f64; 3]>,
    pub r_squared: [f64; 3],
}

pub fn current_sweep(cfg: &MasterConfig) -> Result<CurrentSweep> {
    use rayon::prelude::*;
    let omega = cfg
        .sweep
        .currents_a
        .par_iter()
        .map(|&i| cfg.geometry.with_current(i).trap_frequencies(&cfg.particle))
        .collect::<Result<Vec<_>>>()?;
    let r_squared = std::array::from_fn(|axis| {
        let y: Vec<f64> = omega.iter().map(|w| w[axis]).collect();
        r_squared(&cfg.sweep.currents_a, &y)
    });
    Ok(CurrentSweep { currents_a: cfg.sweep.currents_a.clone(), omega_rad_s: omega, r_squared })
}

pub fn r_squared(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy * sxy / (sxx * syy)
}

pub fn write_sweep_csv<W: Write>(s: &CurrentSweep, mut w: W) -> Result<()> {
    writeln!(w, "# current A, trap frequency Hz")?;
    writeln!(w, "current_a,f_x,f_y,f_z")?;
    for (i, o) in s.currents_a.iter().zip(&s.omega_rad_s) {
        writeln!(w, "{i},{:.9},{:.9},{:.9}", o[0] / (2.0 * PI), o[1] / (2.0 * PI), o[2] / (2.0 * PI))?;
    }
    Ok(())
}

/// Frequencies for the two configured densities and their ratio against √(ρ₁/ρ₂).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityPair {
    pub densities_kg_m3: [f64; 2],
    pub omega_rad_s: [[f64; 3]; 2],
    pub ratio: [f64; 3],
    pub expected_ratio: f64,
}

pub fn density_pair(cfg: &MasterConfig) -> Result<DensityPair> {
    let d = cfg.sweep.densities_kg_m3;
    let w = d.map(|rho| {
        let p = levitation_core::fieldmodel::ParticleSpec { density_kg_m3: rho, ..cfg.particle };
        cfg.geometry.trap_frequencies(&p)
    });
    let [a, b] = w;
    let (a, b) = (a?, b?);
    Ok(DensityPair { densities_kg_m3: d, omega_rad_s: [a, b], ratio: std::array::from_fn(|i| b[i] / a[i]), expected_ratio: (d[0] / d[1]).sqrt() })
}
