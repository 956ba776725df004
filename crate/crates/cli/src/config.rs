//! Master JSON configuration: loading, `--set` overrides and cross-section checks.

use std::path::{Path, PathBuf};

use levitation_core::analysis::{ChunkOptions, ModeBands};
use levitation_core::fieldmodel::{CoilAssembly, ParticleSpec};
use levitation_core::transduction::{PickupModel, TransferChain, Transducer};
use levitation_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// The configuration shipped with the binary.
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MasterConfig {
    pub geometry: CoilAssembly,
    pub particle: ParticleSpec,
    pub gravity_m_s2: f64,
    pub fieldmap: FieldmapSection,
    pub fit: FitSection,
    pub sim: SimSection,
    pub transducer: TransducerSection,
    pub analysis: AnalysisSection,
    pub sweep: SweepSection,
    pub acceptance: AcceptanceSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldmapSection {
    /// Half width of the cubic field grid about the trap centre (m).
    pub grid_half_width_m: f64,
    pub grid_points: usize,
    /// Current at which the lift force is reported (A).
    pub lift_current_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Half width of the force-sample grid about the equilibrium (m).
    pub half_width_m: f64,
    pub grid_points: usize,
    /// Replaces the fitted harmonic frequencies in the dynamics model (Hz).
    pub frequency_override_hz: Option<[f64; 3]>,
    /// Keep the fitted cubic terms in the dynamics model.
    pub keep_cubic: bool,
    /// Escape radius for the dynamics model (m); defaults to the fit's own.
    pub validity_radius_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub timestep_s: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub quality_factors: [f64; 3],
    /// RMS amplitudes the noise drive is tuned to (m).
    pub target_rms_m: [f64; 3],
    /// Length of each tuning run (s).
    pub tune_duration_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransducerSection {
    pub pickup: PickupModel,
    pub chain: TransferChain,
    /// Add SQUID flux noise at the chain's noise floor.
    pub noise: bool,
}

impl TransducerSection {
    pub fn transducer(&self) -> Transducer {
        Transducer { pickup: self.pickup, chain: self.chain }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub chunk: ChunkOptions,
    /// Half width of each axis's fundamental band (Hz); harmonic bands are twice as wide.
    pub band_half_width_hz: [f64; 3],
    /// Quiet-chunk percentile for the pulling fit; `null` keeps all chunks.
    pub quiet_percentile: Option<f64>,
    pub histogram_bins: usize,
    /// Window for the mode-energy series used by the correlation fit (s).
    pub energy_window_s: f64,
    pub q_calibration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub currents_a: Vec<f64>,
    pub densities_kg_m3: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceptanceSection {
    /// Length of the η-recovery run (s).
    pub eta_run_duration_s: f64,
    pub eta_seed: u64,
    /// Length of each pulling-closure run (s).
    pub closure_duration_s: f64,
    /// Amplitude multipliers on `sim.target_rms_m` for the closure runs.
    pub closure_levels: Vec<f64>,
    pub q_values: Vec<f64>,
    pub q_seed: u64,
}

/// Applies `path=value` to a JSON tree. Dotted keys descend into objects,
/// numeric keys index arrays; the value is parsed as JSON, else taken as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::config(assignment, "override must have the form path=value"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::config(assignment, "empty override path"));
    }
    let value: Value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (depth, key) in keys.iter().enumerate() {
        let here = keys[..=depth].join(".");
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(*key) {
                    return Err(Error::config(here, "no such field"));
                }
                map.get_mut(*key).expect("checked")
            }
            Value::Array(items) => {
                let idx: usize = key.parse().map_err(|_| Error::config(here.clone(), "array index expected"))?;
                let len = items.len();
                items.get_mut(idx).ok_or_else(|| Error::config(here, format!("index out of range (len {len})")))?
            }
            _ => return Err(Error::config(here, "cannot descend into a scalar")),
        };
    }
    *node = value;
    Ok(())
}

fn from_value(value: Value) -> Result<MasterConfig> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { String::from("<root>") } else { path }, e.into_inner().to_string())
    })
}

impl MasterConfig {
    /// Parses JSON text, applies overrides in order and validates.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::config("<root>", format!("malformed JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg = from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn shipped() -> Self {
        Self::from_json(DEFAULT_CONFIG, &[]).expect("shipped config is valid")
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::config("<file>", format!("{}: {e}", p.display())))?;
                Self::from_json(&text, overrides)
            }
            None => Self::from_json(DEFAULT_CONFIG, overrides),
        }
    }

    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }

    /// Fundamental and harmonic bands about the given mode frequencies (Hz).
    pub fn mode_bands(&self, centres_hz: [f64; 3]) -> Result<ModeBands> {
        ModeBands::around(centres_hz, self.analysis.band_half_width_hz)
            .map_err(|e| Error::config("analysis.band_half_width_hz", e.to_string()))
    }

    /// Section-level checks with the offending path in each message.
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(at("geometry"))?;
        self.particle.validate().map_err(at("particle"))?;
        if !(self.gravity_m_s2 >= 0.0 && self.gravity_m_s2.is_finite()) {
            return Err(Error::config("gravity_m_s2", "must be finite and ≥ 0"));
        }
        let f = &self.fieldmap;
        positive("fieldmap.grid_half_width_m", f.grid_half_width_m)?;
        positive("fieldmap.lift_current_a", f.lift_current_a)?;
        if f.grid_points < 2 {
            return Err(Error::config("fieldmap.grid_points", "need at least 2"));
        }
        positive("fit.half_width_m", self.fit.half_width_m)?;
        if self.fit.grid_points < 3 {
            return Err(Error::config("fit.grid_points", "need at least 3"));
        }
        if let Some(fo) = self.fit.frequency_override_hz {
            for (i, v) in fo.iter().enumerate() {
                positive(&format!("fit.frequency_override_hz.{i}"), *v)?;
            }
        }
        if let Some(r) = self.fit.validity_radius_m {
            positive("fit.validity_radius_m", r)?;
        }
        let s = &self.sim;
        positive("sim.timestep_s", s.timestep_s)?;
        positive("sim.duration_s", s.duration_s)?;
        positive("sim.sample_rate_hz", s.sample_rate_hz)?;
        positive("sim.tune_duration_s", s.tune_duration_s)?;
        for i in 0..3 {
            positive(&format!("sim.quality_factors.{i}"), s.quality_factors[i])?;
            if !(s.target_rms_m[i] >= 0.0 && s.target_rms_m[i].is_finite()) {
                return Err(Error::config(format!("sim.target_rms_m.{i}"), "must be finite and ≥ 0"));
            }
        }
        let steps = 1.0 / (s.timestep_s * s.sample_rate_hz);
        if (steps - steps.round()).abs() > 1e-6 * steps || steps.round() < 1.0 {
            return Err(Error::config("sim.sample_rate_hz", format!("sample period is {steps} timesteps, must be a whole number")));
        }
        self.transducer.pickup.validate().map_err(at("transducer.pickup"))?;
        self.transducer.chain.validate().map_err(at("transducer.chain"))?;
        let a = &self.analysis;
        positive("analysis.chunk.chunk_s", a.chunk.chunk_s)?;
        a.chunk.welch.validate().map_err(at("analysis.chunk.welch"))?;
        for w in a.band_half_width_hz {
            positive("analysis.band_half_width_hz", w)?;
        }
        positive("analysis.energy_window_s", a.energy_window_s)?;
        positive("analysis.q_calibration", a.q_calibration)?;
        if a.histogram_bins == 0 {
            return Err(Error::config("analysis.histogram_bins", "need at least 1"));
        }
        if let Some(p) = a.quiet_percentile {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::config("analysis.quiet_percentile", "must lie in [0, 100]"));
            }
        }
        let whole = |x: f64| (x - x.round()).abs() < 1e-9 * x.max(1.0) && x.round() >= 1.0;
        if !whole(a.chunk.chunk_s * s.sample_rate_hz) {
            return Err(Error::config("analysis.chunk.chunk_s", "must span a whole number of samples"));
        }
        if !whole(a.chunk.chunk_s / a.energy_window_s) {
            return Err(Error::config("analysis.energy_window_s", "must divide analysis.chunk.chunk_s"));
        }
        if a.chunk.chunk_s * 2.0 > s.duration_s {
            return Err(Error::config("sim.duration_s", "shorter than two analysis chunks"));
        }
        if let Some(fo) = self.fit.frequency_override_hz {
            let bands = self.mode_bands(fo)?;
            let top = bands.all().fold(0.0f64, |m, b| m.max(b.hi_hz));
            if top > 0.5 * s.sample_rate_hz {
                return Err(Error::config("sim.sample_rate_hz", format!("Nyquist is below the top harmonic band edge {top} Hz")));
            }
        }
        if self.sweep.currents_a.len() < 2 {
            return Err(Error::config("sweep.currents_a", "need at least two currents"));
        }
        for (i, c) in self.sweep.currents_a.iter().enumerate() {
            positive(&format!("sweep.currents_a.{i}"), *c)?;
        }
        for i in 0..2 {
            positive(&format!("sweep.densities_kg_m3.{i}"), self.sweep.densities_kg_m3[i])?;
        }
        let c = &self.acceptance;
        positive("acceptance.eta_run_duration_s", c.eta_run_duration_s)?;
        
        positive("acceptance.closure_duration_s", c.closure_duration_s)?;
        for (i, l) in c.closure_levels.iter().enumerate() {
            positive(&format!("acceptance.closure_levels.{i}"), *l)?;
        }
        for (i, q) in c.q_values.iter().enumerate() {
            positive(&format!("acceptance.q_values.{i}"), *q)?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::config("output_dir", "must not be empty"));
        }
        Ok(())
    }
}

fn at(path: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::config(path, e.to_string())
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("must be finite and > 0 (got {v})")))
    }
}
