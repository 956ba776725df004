//! Magnetic field of stacked circular coils and the resulting diamagnetic trap.
//!
//! Each coil is a set of coaxial filaments whose field is evaluated in closed
//! form with complete elliptic integrals. The Jacobian is obtained by exact
//! forward-mode differentiation of the same expressions, so divergence and
//! curl vanish to rounding error. A superconducting sphere is treated as an
//! ideal diamagnet with energy `U = 3V|B|²/(4μ0)`.

mod loop_field;
mod trap;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::constants::MU_0;
use crate::error::{Error, Result};

pub use loop_field::Filament;
pub use trap::SearchBox;

/// One physical coil: its innermost winding radius, axial plane and sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilSpec {
    pub radius_m: f64,
    pub z_m: f64,
    pub polarity: i8,
    #[serde(default)]
    pub x_m: f64,
    #[serde(default)]
    pub y_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindingLayout {
    /// Every winding is its own concentric filament, stepping outward by the pitch.
    #[default]
    Expanded,
    /// All windings lumped into one filament at the mean radius.
    MeanRadius,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilAssembly {
    pub loops: Vec<CoilSpec>,
    pub windings: u32,
    pub current_a: f64,
    #[serde(default)]
    pub pitch_m: f64,
    #[serde(default)]
    pub layout: WindingLayout,
    /// Radius used to normalise geometric factors; defaults to the first coil's inner radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_radius_m: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    pub radius_m: f64,
    pub density_kg_m3: f64,
}

/// Field and its Jacobian (`jacobian[(i, j)] = ∂B_i/∂r_j`) at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub position: Vector3<f64>,
    pub b: Vector3<f64>,
    pub jacobian: Matrix3<f64>,
}

impl FieldSample {
    pub fn divergence(&self) -> f64 {
        self.jacobian.trace()
    }

    /// Norm of the antisymmetric part of the Jacobian (twice the curl magnitude / √2).
    pub fn curl_norm(&self) -> f64 {
        (0.5 * (self.jacobian - self.jacobian.transpose())).norm()
    }

    /// Directional gradient of |B| along axis `i` at a field zero, `‖∂B/∂r_i‖`.
    pub fn axis_gradient(&self, i: usize) -> f64 {
        self.jacobian.column(i).norm()
    }
}

impl ParticleSpec {
    pub fn new(radius_m: f64, density_kg_m3: f64) -> Result<Self> {
        let p = Self { radius_m, density_kg_m3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("particle radius must be > 0, got {}", self.radius_m)));
        }
        if !(self.density_kg_m3 > 0.0 && self.density_kg_m3.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "particle density must be > 0, got {}",
                self.density_kg_m3
            )));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius_m.powi(3)
    }

    pub fn mass(&self) -> f64 {
        self.density_kg_m3 * self.volume()
    }

    /// Advisory only: the ideal-diamagnet model needs the London penetration
    /// depth to be much smaller than the sphere.
    pub fn ideal_diamagnet_valid(&self, penetration_depth_m: f64) -> bool {
        penetration_depth_m < 0.01 * self.radius_m
    }

    /// Prefactor `κ` in `U = κ |B|²`.
    pub fn energy_prefactor(&self) -> f64 {
        3.0 * self.volume() / (4.0 * MU_0)
    }
}

impl CoilAssembly {
    pub fn validate(&self) -> Result<()> {
        if self.loops.is_empty() {
            return Err(Error::Geometry("assembly needs at least one loop".into()));
        }
        for (i, l) in self.loops.iter().enumerate() {
            if !(l.radius_m > 0.0 && l.radius_m.is_finite()) {
                return Err(Error::Geometry(format!("loops[{i}].radius_m must be > 0")));
            }
            if l.polarity != 1 && l.polarity != -1 {
                return Err(Error::Geometry(format!("loops[{i}].polarity must be ±1")));
            }
            if !(l.z_m.is_finite() && l.x_m.is_finite() && l.y_m.is_finite()) {
                return Err(Error::Geometry(format!("loops[{i}] position must be finite")));
            }
        }
        if self.windings == 0 {
            return Err(Error::Geometry("windings must be ≥ 1".into()));
        }
        if !(self.pitch_m >= 0.0 && self.pitch_m.is_finite()) {
            return Err(Error::Geometry("pitch_m must be ≥ 0".into()));
        }
        if !self.current_a.is_finite() {
            return Err(Error::Geometry("current_a must be finite".into()));
        }
        if let Some(r) = self.reference_radius_m {
            if !(r > 0.0) {
                return Err(Error::Geometry("reference_radius_m must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Two coaxial single-turn loops of radius `radius` at ±`separation`/2
    /// carrying opposite currents.
    pub fn anti_helmholtz(radius: f64, separation: f64, current: f64) -> Self {
        Self {
            loops: vec![
                CoilSpec { radius_m: radius, z_m: 0.5 * separation, polarity: 1, x_m: 0.0, y_m: 0.0 },
                CoilSpec { radius_m: radius, z_m: -0.5 * separation, polarity: -1, x_m: 0.0, y_m: 0.0 },
            ],
            windings: 1,
            current_a: current,
            pitch_m: 0.0,
            layout: WindingLayout::Expanded,
            reference_radius_m: None,
        }
    }

    /// Anti-Helmholtz pair at the separation `√3 R` that cancels the third
    /// axial derivative of the field (the linear-gradient optimum).
    pub fn ideal_anti_helmholtz(radius: f64, current: f64) -> Self {
        Self::anti_helmholtz(radius, 3f64.sqrt() * radius, current)
    }

    /// Two-chip trap: a 125 μm top coil and a reduced 50 μm bottom coil
    /// 280 μm apart, 13 windings each at 80 μm pitch.
    pub fn chip_trap(current: f64) -> Self {
        Self {
            loops: vec![
                CoilSpec { radius_m: 125e-6, z_m: 140e-6, polarity: 1, x_m: 0.0, y_m: 0.0 },
                CoilSpec { radius_m: 50e-6, z_m: -140e-6, polarity: -1, x_m: 0.0, y_m: 0.0 },
            ],
            windings: 13,
            current_a: current,
            pitch_m: 80e-6,
            layout: WindingLayout::Expanded,
            reference_radius_m: Some(125e-6),
        }
    }

    /// Centre of a sphere resting on the lowest coil plane.
    pub fn resting_position(&self, particle: &ParticleSpec) -> Vector3<f64> {
        let l = self.loops.iter().min_by(|a, b| a.z_m.total_cmp(&b.z_m)).expect("validated assembly");
        Vector3::new(l.x_m, l.y_m, l.z_m + particle.radius_m)
    }

    pub fn with_current(&self, current_a: f64) -> Self {
        Self { current_a, ..self.clone() }
    }

    /// Uniformly rescales every length.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for l in &mut out.loops {
            l.radius_m *= factor;
            l.z_m *= factor;
            l.x_m *= factor;
            l.y_m *= factor;
        }
        out.pitch_m *= factor;
        out.reference_radius_m = out.reference_radius_m.map(|r| r * factor);
        out
    }

    pub fn reference_radius(&self) -> f64 {
        self.reference_radius_m.unwrap_or(self.loops[0].radius_m)
    }

    /// Expands coils into individual filaments according to the winding layout.
    pub fn filaments(&self) -> Vec<Filament> {
        let n = self.windings as usize;
        let mut out = Vec::with_capacity(self.loops.len() * n);
        for l in &self.loops {
            let center = Vector3::new(l.x_m, l.y_m, l.z_m);
            let sign = f64::from(l.polarity);
            match self.layout {
                WindingLayout::Expanded => {
                    for k in 0..n {
                        out.push(Filament {
                            center,
                            radius: l.radius_m + k as f64 * self.pitch_m,
                            current: sign * self.current_a,
                        });
                    }
                }
                WindingLayout::MeanRadius => out.push(Filament {
                    center,
                    radius: l.radius_m + 0.5 * (n as f64 - 1.0) * self.pitch_m,
                    current: sign * self.current_a * n as f64,
                }),
            }
        }
        out
    }

    /// Field and Jacobian at `r`, summed over all filaments.
    pub fn field_at(&self, r: &Vector3<f64>) -> Result<FieldSample> {
        let mut b = Vector3::zeros();
        let mut jacobian = Matrix3::zeros();
        for f in self.filaments() {
            let (fb, fj) = f.field_and_jacobian(r)?;
            b += fb;
            jacobian += fj;
        }
        Ok(FieldSample { position: *r, b, jacobian })
    }

    /// Ideal-diamagnet energy `3V|B|²/(4μ0)` (J), without gravity.
    pub fn diamagnet_energy(&self, particle: &ParticleSpec, r: &Vector3<f64>) -> Result<f64> {
        let s = self.field_at(r)?;
        Ok(particle.energy_prefactor() * s.b.norm_squared())
    }

    /// Force `−∇U` on the sphere (N), from `∇|B|² = 2 Jᵀ B`.
    pub fn diamagnet_force(&self, particle: &ParticleSpec, r: &Vector3<f64>) -> Result<Vector3<f64>> {
        let s = self.field_at(r)?;
        Ok(-2.0 * particle.energy_prefactor() * (s.jacobian.transpose() * s.b))
    }

    /// A search box spanning the coil planes axially and half the smallest
    /// coil radius laterally, centred on the first coil's axis.
    pub fn default_search_box(&self) -> SearchBox {
        let zmin = self.loops.iter().map(|l| l.z_m).fold(f64::INFINITY, f64::min);
        let zmax = self.loops.iter().map(|l| l.z_m).fold(f64::NEG_INFINITY, f64::max);
        let rmin = self.loops.iter().map(|l| l.radius_m).fold(f64::INFINITY, f64::min);
        let (cx, cy) = (self.loops[0].x_m, self.loops[0].y_m);
        let half = 0.5 * rmin;
        let margin = 0.02 * (zmax - zmin).max(rmin);
        SearchBox {
            min: [cx - half, cy - half, zmin + margin],
            max: [cx + half, cy + half, zmax - margin],
        }
    }

    /// Field gradients `∇_i B` at the field minimum found in the default box.
    pub fn trap_gradients(&self) -> Result<[f64; 3]> {
        let center = self.find_trap_center(&self.default_search_box())?;
        let s = self.field_at(&center)?;
        Ok([s.axis_gradient(0), s.axis_gradient(1), s.axis_gradient(2)])
    }

    /// Angular trap frequencies `ω_i = ∇_i B √(3/(2μ0ρ))` (rad/s).
    pub fn trap_frequencies(&self, particle: &ParticleSpec) -> Result<[f64; 3]> {
        let g = self.trap_gradients()?;
        let factor = (3.0 / (2.0 * MU_0 * particle.density_kg_m3)).sqrt();
        Ok(g.map(|gi| gi * factor))
    }

    /// Dimensionless geometric factors `ζ_i = ∇_i B R² / (μ0 N I)`.
    pub fn geometric_factors(&self) -> Result<[f64; 3]> {
        if self.current_a == 0.0 {
            return Err(Error::InvalidParameter("geometric factors need a nonzero current".into()));
        }
        let g = self.trap_gradients()?;
        let r = self.reference_radius();
        let norm = r * r / (MU_0 * f64::from(self.windings) * self.current_a.abs());
        Ok(g.map(|gi| gi * norm))
    }
}
