//! Quartic expansion of the trap potential about its equilibrium.
//!
//! `U/m = Σ ½ω_i²r_i² + Σ β_ijk r_i r_j r_k + Σ γ′_ijkl r_i r_j r_k r_l` with the
//! sums running over every index tuple, so an entry such as `β_xxy` contributes
//! three times. Only the independent entries are stored.

mod fit;
mod tensor;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{fit_potential, sample_trap_forces, FitReport, ForceSample, TrapExpansion};
pub use tensor::{Cubic, FullQuartic, Quartic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub mass_kg: f64,
    pub omega_rad_s: [f64; 3],
    /// `β_ijk` in s⁻²·m⁻¹, keyed by sorted axis labels (`"xxy"`).
    #[serde(rename = "beta_per_s2_m")]
    pub beta: Cubic,
    /// `γ′_ijkl` in s⁻²·m⁻², keyed by sorted axis labels (`"xxyy"`).
    #[serde(rename = "gamma_prime_per_s2_m2")]
    pub gamma_prime: Quartic,
    /// Lab-frame position of the expansion point (m).
    pub origin_m: [f64; 3],
    pub validity_radius_m: f64,
}

impl PotentialModel {
    pub fn harmonic(mass_kg: f64, omega_rad_s: [f64; 3], validity_radius_m: f64) -> Self {
        Self {
            mass_kg,
            omega_rad_s,
            beta: Cubic::default(),
            gamma_prime: Quartic::default(),
            origin_m: [0.0; 3],
            validity_radius_m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass_kg > 0.0 && self.mass_kg.is_finite()) {
            return Err(Error::InvalidParameter("mass must be > 0".into()));
        }
        if self.omega_rad_s.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(format!("ω must be > 0, got {:?}", self.omega_rad_s)));
        }
        if !(self.validity_radius_m > 0.0) {
            return Err(Error::InvalidParameter("validity radius must be > 0".into()));
        }
        if self.beta.0.iter().chain(&self.gamma_prime.0).any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("anharmonic coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn within_validity(&self, r: &Vector3<f64>) -> bool {
        r.norm() <= self.validity_radius_m
    }

    /// Potential energy per unit mass (m²/s²) at displacement `r`.
    pub fn specific_energy(&self, r: &Vector3<f64>) -> f64 {
        let mut u = 0.0;
        for i in 0..3 {
            u += 0.5 * self.omega_rad_s[i].powi(2) * r[i] * r[i];
        }
        for (t, m, c) in self.beta.entries() {
            u += m * c * r[t[0]] * r[t[1]] * r[t[2]];
        }
        for (t, m, c) in self.gamma_prime.entries() {
            u += m * c * r[t[0]] * r[t[1]] * r[t[2]] * r[t[3]];
        }
        u
    }

    /// Potential energy (J) at displacement `r` from the origin.
    pub fn potential_energy(&self, r: &Vector3<f64>) -> f64 {
        self.mass_kg * self.specific_energy(r)
    }

    /// `F/m` (m/s²), the analytic gradient of the polynomial.
    pub fn acceleration(&self, r: &Vector3<f64>) -> Vector3<f64> {
        let mut a = Vector3::zeros();
        for i in 0..3 {
            a[i] = -self.omega_rad_s[i].powi(2) * r[i];
        }
        for (t, m, c) in self.beta.entries() {
            if c == 0.0 {
                continue;
            }
            let k = m * c;
            a[t[0]] -= k * r[t[1]] * r[t[2]];
            a[t[1]] -= k * r[t[0]] * r[t[2]];
            a[t[2]] -= k * r[t[0]] * r[t[1]];
        }
        for (t, m, c) in self.gamma_prime.entries() {
            if c == 0.0 {
                continue;
            }
            let k = m * c;
            let (p, q, s, u) = (r[t[0]], r[t[1]], r[t[2]], r[t[3]]);
            a[t[0]] -= k * q * s * u;
            a[t[1]] -= k * p * s * u;
            a[t[2]] -= k * p * q * u;
            a[t[3]] -= k * p * q * s;
        }
        a
    }

    /// Force (N) at displacement `r`.
    pub fn force(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.mass_kg * self.acceleration(r)
    }

    pub fn gamma(&self) -> GammaMatrix {
        GammaMatrix::from_gamma_prime(&self.gamma_prime)
    }

    /// Frequency shifts `Δω_i` (rad/s) for mean-square amplitudes `⟨r_j²⟩` (m²).
    pub fn frequency_pull(&self, mean_square: [f64; 3]) -> [f64; 3] {
        self.gamma().frequency_pull(&self.omega_rad_s, mean_square)
    }

    /// Second-harmonic to squared-fundamental peak-area ratio produced by the
    /// cubic term on `axis`, for a transducer with efficiency `η` (m² per area unit).
    ///
    /// The cubic term written as `(1/3) m β_c x³` gives `R = β_c² η / (18ω⁴)`;
    /// with the all-tuples storage `β_c = 3 β_iii`.
    pub fn second_harmonic_ratio_trap(&self, eta: f64, axis: usize) -> f64 {
        let b = cubic_to_third_prefactor(self.beta.get([axis; 3]));
        b * b * eta / (18.0 * self.omega_rad_s[axis].powi(4))
    }

    /// `⟨x_h²⟩` (m²) of the 2ω component for a fundamental of mean square `⟨x_f²⟩`.
    pub fn second_harmonic_mean_square(&self, mean_square_fundamental: f64, axis: usize) -> f64 {
        let b = cubic_to_third_prefactor(self.beta.get([axis; 3]));
        b * b * mean_square_fundamental.powi(2) / (18.0 * self.omega_rad_s[axis].powi(4))
    }
}

/// Diagonal cubic coefficient in the `(1/3)β_c x³` form from the stored `β_iii`.
pub fn cubic_to_third_prefactor(beta_iii: f64) -> f64 {
    3.0 * beta_iii
}

/// Stored `β_iii` from a coefficient written in the `(1/3)β_c x³` form.
pub fn cubic_from_third_prefactor(beta_c: f64) -> f64 {
    beta_c / 3.0
}

/// Reduced quartic couplings: `γ_ii` (Duffing) on the diagonal, `γ_ij` mode coupling off it.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GammaMatrix(pub [[f64; 3]; 3]);

impl GammaMatrix {
    /// `γ_ii = γ′_iiii`, `γ_ij = 3 γ′_iijj`.
    ///
    /// The all-tuples sum carries six equal `iijj` terms, i.e. `6 γ′_iijj r_i² r_j²`,
    /// while `Σ_ij γ_ij r_i² r_j²` carries `2 γ_ij r_i² r_j²`; equating them gives
    /// the factor 3 and makes the pull below match the integrated dynamics.
    pub fn from_gamma_prime(g: &Quartic) -> Self {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = if i == j { g.get([i; 4]) } else { 3.0 * g.get([i, i, j, j]) };
            }
        }
        Self(m)
    }

    /// As [`GammaMatrix::from_gamma_prime`] for a full rank-4 array, which must be symmetric.
    pub fn from_full_gamma_prime(full: &FullQuartic) -> Result<Self> {
        Ok(Self::from_gamma_prime(&Quartic::from_full(full, 1e-12)?))
    }

    /// Inverse of the reduction, populating only the `iiii` and `iijj` entries.
    pub fn to_gamma_prime(&self) -> Quartic {
        let mut g = Quartic::default();
        for i in 0..3 {
            g.set([i; 4], self.0[i][i]);
            for j in i + 1..3 {
                g.set([i, i, j, j], self.0[i][j] / 3.0);
            }
        }
        g
    }

    /// `Δω_i = 3γ_ii⟨r_i²⟩/ω_i + Σ_{j≠i} 2γ_ij⟨r_j²⟩/ω_i`.
    pub fn frequency_pull(&self, omega: &[f64; 3], mean_square: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|i| {
            (0..3).map(|j| self.pull_coefficient(i, j) * mean_square[j]).sum::<f64>() / omega[i]
        })
    }

    /// `∂(ω_i Δω_i)/∂⟨r_j²⟩`: 3γ_ii on the diagonal, 2γ_ij off it.
    pub fn pull_coefficient(&self, i: usize, j: usize) -> f64 {
        if i == j {
            3.0 * self.0[i][i]
        } else {
            2.0 * self.0[i][j]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> PotentialModel {
        let mut m = PotentialModel::harmonic(2e-10, [250.0, 400.0, 700.0], 1e-4);
        for (k, c) in m.beta.0.iter_mut().enumerate() {
            *c = 1e6 * (k as f64 - 4.5);
        }
        for (k, c) in m.gamma_prime.0.iter_mut().enumerate() {
            *c = -1e10 * (1.0 + 0.3 * k as f64);
        }
        m
    }

    fn brute_energy(m: &PotentialModel, r: &Vector3<f64>) -> f64 {
        let mut u = 0.0;
        for i in 0..3 {
            u += 0.5 * m.omega_rad_s[i].powi(2) * r[i] * r[i];
            for j in 0..3 {
                for k in 0..3 {
                    u += m.beta.get([i, j, k]) * r[i] * r[j] * r[k];
                    for l in 0..3 {
                        u += m.gamma_prime.get([i, j, k, l]) * r[i] * r[j] * r[k] * r[l];
                    }
                }
            }
        }
        m.mass_kg * u
    }

    #[test]
    fn energy_matches_tuple_summation() {
        let m = sample_model();
        let r = Vector3::new(3e-6, -7e-6, 2e-6);
        let a = m.potential_energy(&r);
        let b = brute_energy(&m, &r);
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} {b}");
        assert_eq!(m.potential_energy(&Vector3::zeros()), 0.0);
    }

    #[test]
    fn harmonic_force_is_hooke() {
        let m = PotentialModel::harmonic(1e-9, [10.0, 20.0, 30.0], 1.0);
        let r = Vector3::new(1e-6, 2e-6, -3e-6);
        let f = m.force(&r);
        for i in 0..3 {
            assert!((f[i] + m.mass_kg * m.omega_rad_s[i].powi(2) * r[i]).abs() < 1e-30);
        }
    }

    #[test]
    fn force_matches_energy_difference() {
        let m = sample_model();
        let r = Vector3::new(4e-6, 1e-6, -5e-6);
        let f = m.force(&r);
        let h = 1e-9;
        for i in 0..3 {
            let mut p = r;
            let mut q = r;
            p[i] += h;
            q[i] -= h;
            let fd = -(m.potential_energy(&p) - m.potential_energy(&q)) / (2.0 * h);
            assert!((fd - f[i]).abs() < 1e-6 * f.norm(), "{i}: {fd} {}", f[i]);
        }
    }

    #[test]
    fn gamma_reduction() {
        let mut g = Quartic::default();
        g.set([0; 4], 5.0);
        g.set([0, 1, 0, 1], 6.0);
        let gm = GammaMatrix::from_gamma_prime(&g);
        assert_eq!(gm.0[0][0], 5.0);
        assert_eq!(gm.0[0][1], 18.0);
        assert_eq!(gm.0[1][0], 18.0);
        assert_eq!(gm.0[2][2], 0.0);
        assert_eq!(GammaMatrix::from_gamma_prime(&Quartic::default()), GammaMatrix::default());
        assert_eq!(gm.to_gamma_prime(), g);
    }

    #[test]
    fn pull_single_duffing_term() {
        let mut m = PotentialModel::harmonic(1e-9, [100.0, 200.0, 300.0], 1.0);
        m.gamma_prime.set([0; 4], -2e9);
        let d = m.frequency_pull([1e-12, 0.0, 0.0]);
        assert!((d[0] - 3.0 * -2e9 * 1e-12 / 100.0).abs() < 1e-15);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
        assert_eq!(m.frequency_pull([0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn cubic_conventions_invert() {
        assert_eq!(cubic_from_third_prefactor(cubic_to_third_prefactor(1.25)), 1.25);
        let m = PotentialModel::harmonic(1.0, [1.0; 3], 1.0);
        assert_eq!(m.second_harmonic_ratio_trap(1.0, 0), 0.0);
    }

    #[test]
    fn json_carries_units_and_round_trips() {
        let m = sample_model();
        let s = serde_json::to_string_pretty(&m).unwrap();
        assert!(s.contains("beta_per_s2_m") && s.contains("\"xyz\""));
        let back: PotentialModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
