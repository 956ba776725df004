//! Particle displacement → pickup flux → SQUID flux → FLL output voltage.
//!
//! Fluxes are in units of φ0 throughout; only the final FLL stage converts to
//! volts.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constants::{FLUX_QUANTUM, MU_0};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::fieldmodel::{CoilAssembly, Filament, ParticleSpec};

/// Per-axis quadratic pickup response `φ = Σ u_i r_i² + v_i r_i + w` of the
/// series-connected pickup loops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickupModel {
    pub u_phi0_per_m2: [f64; 3],
    pub v_phi0_per_m: [f64; 3],
    #[serde(default)]
    pub w_phi0: f64,
}

/// Transfer ratio assumed when the reference linear terms were derived from
/// SQUID-referred efficiencies.
pub const REFERENCE_TRANSFER: f64 = 2.3e-2;

/// SQUID-referred efficiencies from the pickup geometry (φ0/m).
pub const GEOMETRIC_EFFICIENCY_PHI0_PER_M: [f64; 3] = [40e-3 / 1e-6, 15e-3 / 1e-6, 600e-3 / 1e-6];

/// SQUID-referred efficiencies inferred from frequency pulling (φ0/m).
pub const PULLING_EFFICIENCY_PHI0_PER_M: [f64; 3] = [0.47e-3 / 1e-6, 1.00e-3 / 1e-6, 5.7e-3 / 1e-6];

impl PickupModel {
    /// Reference response: quadratic terms {−7.5, −6.0, −3.7} mφ0/μm² and
    /// linear terms recovered from the geometric efficiencies.
    pub fn reference() -> Self {
        Self {
            u_phi0_per_m2: [-7.5e-3 / 1e-12, -6.0e-3 / 1e-12, -3.7e-3 / 1e-12],
            v_phi0_per_m: GEOMETRIC_EFFICIENCY_PHI0_PER_M.map(|e| e / REFERENCE_TRANSFER),
            w_phi0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_phi0_per_m2.iter().chain(&self.v_phi0_per_m).chain([&self.w_phi0]).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("pickup coefficients must be finite".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn flux(&self, r: &Vector3<f64>) -> f64 {
        let mut phi = self.w_phi0;
        for i in 0..3 {
            phi += (self.u_phi0_per_m2[i] * r[i] + self.v_phi0_per_m[i]) * r[i];
        }
        phi
    }

    /// Pickup flux (φ0) for every sample of a trajectory.
    pub fn pickup_flux(&self, traj: &Trajectory) -> Vec<f64> {
        traj.positions.iter().map(|r| self.flux(r)).collect()
    }

    /// `R^PU = u² η / (2 v²)` for the peak-area ratio `A_h / A_f²`.
    pub fn second_harmonic_ratio_pickup(&self, eta: f64, axis: usize) -> Result<f64> {
        let v = self.v_phi0_per_m[axis];
        if v == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "axis {axis} has no linear pickup response; the harmonic ratio is undefined"
            )));
        }
        Ok(self.u_phi0_per_m2[axis].powi(2) * eta / (2.0 * v * v))
    }
}

/// Inductance ladder from the pickup loops to the SQUID and the FLL constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferChain {
    pub l_pickup_h: f64,
    pub l_input_h: f64,
    pub l_parasitic_h: f64,
    pub m_input_h: f64,
    pub m_feedback_h: f64,
    pub r_feedback_ohm: f64,
    /// White flux noise at the SQUID (φ0/√Hz).
    pub noise_floor_phi0_rthz: f64,
}

impl Default for TransferChain {
    fn default() -> Self {
        Self {
            l_pickup_h: 0.72e-9,
            l_input_h: 24e-9,
            l_parasitic_h: 33e-9,
            m_input_h: 0.87e-9,
            m_feedback_h: 38e-12,
            r_feedback_ohm: 10e3,
            noise_floor_phi0_rthz: 18e-3,
        }
    }
}

impl TransferChain {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.l_pickup_h, self.l_input_h, self.l_parasitic_h, self.m_feedback_h, self.r_feedback_ohm];
        if positive.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter("inductances and R_F must be > 0".into()));
        }
        if !(self.m_input_h >= 0.0) || !(self.noise_floor_phi0_rthz >= 0.0) {
            return Err(Error::InvalidParameter("M_input and noise floor must be ≥ 0".into()));
        }
        Ok(())
    }

    /// `φ_SQUID / φ_pickup = M_in / (L_pickup + L_input + L_parasitic)`.
    pub fn transfer_ratio(&self) -> Result<f64> {
        let total = self.l_pickup_h + self.l_input_h + self.l_parasitic_h;
        if total == 0.0 {
            return Err(Error::InvalidParameter("total loop inductance is zero".into()));
        }
        Ok(self.m_input_h / total)
    }

    pub fn flux_transfer(&self, pickup_phi0: &[f64]) -> Result<Vec<f64>> {
        let k = self.transfer_ratio()?;
        Ok(pickup_phi0.iter().map(|p| k * p).collect())
    }

    /// FLL gain `φ0 R_F / M_F` (V per φ0 at the SQUID).
    pub fn volts_per_phi0(&self) -> f64 {
        FLUX_QUANTUM * self.r_feedback_ohm / self.m_feedback_h
    }

    /// Overall gain from pickup flux to output voltage (V per φ0).
    pub fn gain(&self) -> Result<f64> {
        Ok(self.transfer_ratio()? * self.volts_per_phi0())
    }

    /// Converts SQUID flux to FLL output voltage, optionally adding white flux
    /// noise at the SQUID input. `stream` selects an independent noise stream
    /// for the same seed, so a long record can be processed chunk by chunk.
    pub fn squid_voltage(
        &self,
        squid_phi0: &[f64],
        sample_rate_hz: f64,
        noise: Option<(u64, u64)>,
    ) -> VoltageTrace {
        let g = self.volts_per_phi0();
        let mut volts: Vec<f64> = squid_phi0.iter().map(|p| g * p).collect();
        if let Some((seed, stream)) = noise {
            // one-sided density n² over bandwidth fs/2
            let sd = self.noise_floor_phi0_rthz * (0.5 * sample_rate_hz).sqrt();
            if sd > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                let normal = Normal::new(0.0, sd).expect("finite sd");
                for v in &mut volts {
                    *v += g * normal.sample(&mut rng);
                }
            }
        }
        VoltageTrace { sample_rate_hz, start_time_s: 0.0, volts }
    }

    /// `η = 1/q²` for a SQUID-referred efficiency `e` (φ0/m): `q = e · φ0 R_F / M_F`.
    pub fn efficiency_from_squid_response(&self, e_phi0_per_m: [f64; 3]) -> [f64; 3] {
        let g = self.volts_per_phi0();
        e_phi0_per_m.map(|e| 1.0 / (e * g).powi(2))
    }

    /// Linear displacement-to-voltage gain `q_i` (V/m) and the efficiency
    /// `η_i = 1/q_i²` (m²/V²) implied by a pickup model.
    pub fn efficiency(&self, pickup: &PickupModel) -> Result<[f64; 3]> {
        let g = self.gain()?;
        let mut eta = [0.0; 3];
        for i in 0..3 {
            let q = g * pickup.v_phi0_per_m[i];
            if q == 0.0 {
                return Err(Error::InvalidParameter(format!("axis {i} has zero linear gain")));
            }
            eta[i] = 1.0 / (q * q);
        }
        Ok(eta)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VoltageTrace {
    pub sample_rate_hz: f64,
    pub start_time_s: f64,
    pub volts: Vec<f64>,
}

impl VoltageTrace {
    pub fn len(&self) -> usize {
        self.volts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volts.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,v")?;
        for (k, v) in self.volts.iter().enumerate() {
            writeln!(w, "{:.9},{:e}", self.start_time_s + k as f64 / self.sample_rate_hz, v)?;
        }
        Ok(())
    }
}

/// Pickup and chain together: trajectory in, voltage out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transducer {
    pub pickup: PickupModel,
    pub chain: TransferChain,
}

impl Transducer {
    pub fn voltage(&self, traj: &Trajectory, noise: Option<(u64, u64)>) -> Result<VoltageTrace> {
        let squid = self.chain.flux_transfer(&self.pickup.pickup_flux(traj))?;
        let mut v = self.chain.squid_voltage(&squid, traj.sample_rate_hz, noise);
        v.start_time_s = traj.start_time_s;
        Ok(v)
    }
}

/// A planar pickup loop in a horizontal plane; `sense` gives its winding
/// direction within the series connection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PickupLoop {
    pub radius_m: f64,
    pub center_m: [f64; 3],
    pub sense: i8,
}

/// Gradiometric pair of 50 μm loops in the two chip planes, offset
/// laterally from the trap axis so that the in-plane response has a linear part.
pub fn default_pickup_loops() -> Vec<PickupLoop> {
    vec![
        PickupLoop { radius_m: 50e-6, center_m: [5e-6, 3e-6, 140e-6], sense: 1 },
        PickupLoop { radius_m: 50e-6, center_m: [5e-6, 3e-6, -140e-6], sense: -1 },
    ]
}

/// Flux (φ0) through series pickup loops from the induced dipole of an ideal
/// diamagnetic sphere at `r` in the linearised field `B = J (r − r0)`.
/// By reciprocity the flux is `m · b(r)`, with `b` the field per unit current
/// of the loops.
fn dipole_flux(loops: &[Filament], particle: &ParticleSpec, j: &Matrix3<f64>, r0: &Vector3<f64>, r: &Vector3<f64>) -> Result<f64> {
    let moment = -(2.0 * PI * particle.radius_m.powi(3) / MU_0) * (j * (r - r0));
    let mut b = Vector3::zeros();
    for f in loops {
        b += f.field_and_jacobian(r)?.0;
    }
    Ok(moment.dot(&b) / FLUX_QUANTUM)
}

/// Quadratic pickup model from the quadrupole approximation of the trap:
/// scans each axis over `±half_width` about `rest` and fits `u_i`, `v_i`, `w`.
pub fn quadrupole_pickup_estimate(
    assembly: &CoilAssembly,
    particle: &ParticleSpec,
    rest: &Vector3<f64>,
    loops: &[PickupLoop],
    half_width: f64,
) -> Result<PickupModel> {
    if loops.is_empty() {
        return Err(Error::Geometry("no pickup loops".into()));
    }
    if loops.iter().any(|l| !(l.radius_m > 0.0) || (l.sense != 1 && l.sense != -1)) {
        return Err(Error::Geometry("pickup loops need radius > 0 and sense ±1".into()));
    }
    if !(half_width > 0.0) {
        return Err(Error::InvalidParameter("half_width must be > 0".into()));
    }
    let center = assembly.find_trap_center(&assembly.default_search_box())?;
    let j = assembly.field_at(&center)?.jacobian;
    let filaments: Vec<Filament> = loops
        .iter()
        .map(|l| Filament { center: Vector3::from(l.center_m), radius: l.radius_m, current: f64::from(l.sense) })
        .collect();
    let w = dipole_flux(&filaments, particle, &j, &center, rest)?;
    let n = 21;
    let mut u = [0.0; 3];
    let mut v = [0.0; 3];
    for axis in 0..3 {
        // least squares for φ − w = u s² + v s
        let (mut s2, mut s3, mut s4, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..n {
            let s = -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64;
            let mut r = *rest;
            r[axis] += s;
            let phi = dipole_flux(&filaments, particle, &j, &center, &r)? - w;
            s2 += s * s;
            s3 += s * s * s;
            s4 += s.powi(4);
            b1 += s * phi;
            b2 += s * s * phi;
        }
        let det = s4 * s2 - s3 * s3;
        if det.abs() <= f64::EPSILON * s4 * s2 {
            return Err(Error::Geometry("degenerate pickup scan".into()));
        }
        u[axis] = (b2 * s2 - b1 * s3) / det;
        v[axis] = (b1 * s4 - b2 * s3) / det;
    }
    if u.iter().chain(&v).all(|c| *c == 0.0) {
        return Err(Error::Geometry("pickup loops see no flux from the particle".into()));
    }
    Ok(PickupModel { u_phi0_per_m2: u, v_phi0_per_m: v, w_phi0: w })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_chain_numbers() {
        let c = TransferChain::default();
        let expected = 0.87 / (0.72 + 24.0 + 33.0);
        assert!((c.transfer_ratio().unwrap() - expected).abs() < 1e-12 * expected);
        assert!((c.transfer_ratio().unwrap() - 1.507e-2).abs() < 1e-5);
        let v = c.volts_per_phi0();
        assert!((v - 2.067833848e-15 * 1e4 / 38e-12).abs() < 1e-12 * v);
        assert!((v - 0.544).abs() < 1e-3);
    }

    #[test]
    fn zero_mutual_gives_zero_flux() {
        let c = TransferChain { m_input_h: 0.0, ..Default::default() };
        assert_eq!(c.flux_transfer(&[1.0, -2.0]).unwrap(), vec![0.0, 0.0]);
        let z = TransferChain { l_pickup_h: 0.0, l_input_h: 0.0, l_parasitic_h: 0.0, ..Default::default() };
        assert!(z.transfer_ratio().is_err());
    }

    #[test]
    fn zero_flux_is_zero_volts_without_noise() {
        let v = TransferChain::default().squid_voltage(&[0.0; 8], 1000.0, None);
        assert!(v.volts.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn paper_quadratic_offset() {
        let p = PickupModel { u_phi0_per_m2: [-7.5e9, -6.0e9, -3.7e9], v_phi0_per_m: [0.0; 3], w_phi0: 0.0 };
        let phi = p.flux(&Vector3::new(1e-6, 0.0, 0.0));
        assert!((phi + 7.5e-3).abs() < 1e-15);
    }

    #[test]
    fn ratio_requires_linear_term() {
        let p = PickupModel { u_phi0_per_m2: [1.0; 3], v_phi0_per_m: [0.0, 1.0, 1.0], w_phi0: 0.0 };
        assert!(p.second_harmonic_ratio_pickup(1.0, 0).is_err());
        assert_eq!(p.second_harmonic_ratio_pickup(2.0, 1).unwrap(), 1.0);
    }
}
