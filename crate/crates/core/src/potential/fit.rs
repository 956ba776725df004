use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{cubic_layout, quartic_layout};
use super::{Cubic, PotentialModel, Quartic};
use crate::error::{Error, Result};
use crate::fieldmodel::{CoilAssembly, ParticleSpec};

const N_COEFF: usize = 3 + Cubic::LEN + Quartic::LEN;
const RANK_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceSample {
    /// Displacement from the expansion origin (m).
    pub displacement: Vector3<f64>,
    pub force: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub rms_residual_n: f64,
    pub rms_force_n: f64,
    pub relative_residual: f64,
    /// Condition number of the column-normalised design matrix.
    pub condition_number: f64,
}

fn coefficient_labels() -> Vec<String> {
    let mut out: Vec<String> = ["x", "y", "z"].iter().map(|a| format!("omega_{a}^2")).collect();
    out.extend(Cubic::labels().into_iter().map(|l| format!("beta_{l}")));
    out.extend(Quartic::labels().into_iter().map(|l| format!("gamma'_{l}")));
    out
}

/// Fills the three design rows (`∂(F_i/m)/∂θ`) for one displacement.
fn design_rows(r: &Vector3<f64>, rows: &mut [[f64; N_COEFF]; 3]) {
    for row in rows.iter_mut() {
        row.fill(0.0);
    }
    for i in 0..3 {
        rows[i][i] = -r[i];
    }
    let cubic = cubic_layout();
    for (c, (t, m)) in cubic.tuples.iter().zip(&cubic.multiplicity).enumerate() {
        let col = 3 + c;
        rows[t[0]][col] -= m * r[t[1]] * r[t[2]];
        rows[t[1]][col] -= m * r[t[0]] * r[t[2]];
        rows[t[2]][col] -= m * r[t[0]] * r[t[1]];
    }
    let quartic = quartic_layout();
    for (c, (t, m)) in quartic.tuples.iter().zip(&quartic.multiplicity).enumerate() {
        let col = 3 + Cubic::LEN + c;
        let (p, q, s, u) = (r[t[0]], r[t[1]], r[t[2]], r[t[3]]);
        rows[t[0]][col] -= m * q * s * u;
        rows[t[1]][col] -= m * p * s * u;
        rows[t[2]][col] -= m * p * q * u;
        rows[t[3]][col] -= m * p * q * s;
    }
}

/// Linear least-squares fit of the quartic coefficients to sampled forces.
/// The force is linear in `ω_i²`, `β` and `γ′`, so a single SVD solve suffices.
/// The returned model has its origin at zero; callers place it.
pub fn fit_potential(samples: &[ForceSample], mass_kg: f64) -> Result<(PotentialModel, FitReport)> {
    if !(mass_kg > 0.0) {
        return Err(Error::InvalidParameter("mass must be > 0".into()));
    }
    let n_rows = 3 * samples.len();
    if n_rows < N_COEFF {
        return Err(Error::Insufficient(format!(
            "{} samples give {n_rows} equations for {N_COEFF} coefficients",
            samples.len()
        )));
    }
    let mut a = DMatrix::<f64>::zeros(n_rows, N_COEFF);
    let mut b = DVector::<f64>::zeros(n_rows);
    let mut rows = [[0.0; N_COEFF]; 3];
    for (s, sample) in samples.iter().enumerate() {
        design_rows(&sample.displacement, &mut rows);
        for i in 0..3 {
            for (c, v) in rows[i].iter().enumerate() {
                a[(3 * s + i, c)] = *v;
            }
            b[3 * s + i] = sample.force[i] / mass_kg;
        }
    }
    let scale: Vec<f64> = (0..N_COEFF).map(|c| a.column(c).norm()).map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    for (c, &sc) in scale.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / sc);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = RANK_TOL * smax;
    let v_t = svd.v_t.as_ref().expect("requested V");
    let labels = coefficient_labels();
    let mut names: Vec<String> = Vec::new();
    for k in (0..N_COEFF).filter(|&k| !(svd.singular_values[k] > cutoff)) {
        let row = v_t.row(k);
        names.extend((0..N_COEFF).filter(|&c| row[c].abs() > 0.3).map(|c| labels[c].clone()));
    }
    if !names.is_empty() {
        names.sort();
        names.dedup();
        return Err(Error::RankDeficient(names.join(", ")));
    }
    let smin = svd.singular_values.min();
    let theta_scaled = svd.solve(&b, cutoff).map_err(|e| Error::RankDeficient(e.to_string()))?;
    let theta: Vec<f64> = theta_scaled.iter().zip(&scale).map(|(t, s)| t / s).collect();

    let residual = &a * &theta_scaled - &b;
    let rms_residual_n = mass_kg * (residual.norm_squared() / n_rows as f64).sqrt();
    let rms_force_n = mass_kg * (b.norm_squared() / n_rows as f64).sqrt();

    let omega2 = [theta[0], theta[1], theta[2]];
    if omega2.iter().any(|w| *w <= 0.0) {
        return Err(Error::InvalidParameter(format!("fitted ω² not positive: {omega2:?}")));
    }
    let mut beta = Cubic::default();
    beta.0.copy_from_slice(&theta[3..3 + Cubic::LEN]);
    let mut gamma_prime = Quartic::default();
    gamma_prime.0.copy_from_slice(&theta[3 + Cubic::LEN..]);
    let validity = samples.iter().map(|s| s.displacement.norm()).fold(0.0, f64::max);
    let model = PotentialModel {
        mass_kg,
        omega_rad_s: omega2.map(f64::sqrt),
        beta,
        gamma_prime,
        origin_m: [0.0; 3],
        validity_radius_m: validity,
    };
    let report = FitReport {
        samples: samples.len(),
        rms_residual_n,
        rms_force_n,
        relative_residual: rms_residual_n / rms_force_n,
        condition_number: smax / smin,
    };
    Ok((model, report))
}

/// Forces sampled on a grid around the gravity-included equilibrium of a trap.
#[derive(Debug, Clone)]
pub struct TrapExpansion {
    pub origin: Vector3<f64>,
    pub mass_kg: f64,
    pub samples: Vec<ForceSample>,
    /// Half the smallest coil radius.
    pub validity_radius_m: f64,
}

impl TrapExpansion {
    pub fn fit(&self) -> Result<(PotentialModel, FitReport)> {
        let (mut model, report) = fit_potential(&self.samples, self.mass_kg)?;
        model.origin_m = self.origin.into();
        model.validity_radius_m = self.validity_radius_m;
        Ok((model, report))
    }
}

/// Samples the diamagnetic plus gravitational force on an `n³` grid spanning
/// `±half_width` about the equilibrium.
pub fn sample_trap_forces(
    assembly: &CoilAssembly,
    particle: &ParticleSpec,
    gravity: f64,
    half_width: f64,
    n: usize,
) -> Result<TrapExpansion> {
    if n < 3 || !(half_width > 0.0) {
        return Err(Error::InvalidParameter("force grid needs n ≥ 3 and half_width > 0".into()));
    }
    let origin = assembly.find_equilibrium(particle, gravity, &assembly.default_search_box())?;
    let step = 2.0 * half_width / (n - 1) as f64;
    let coord = |k: usize| -half_width + k as f64 * step;
    let samples = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let d = Vector3::new(coord(idx / (n * n)), coord((idx / n) % n), coord(idx % n));
            let force = assembly.trap_force(particle, gravity, &(origin + d))?;
            Ok(ForceSample { displacement: d, force })
        })
        .collect::<Result<Vec<_>>>()?;
    let rmin = assembly.loops.iter().map(|l| l.radius_m).fold(f64::INFINITY, f64::min);
    Ok(TrapExpansion { origin, mass_kg: particle.mass(), samples, validity_radius_m: 0.5 * rmin })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn too_few_samples_rejected() {
        let s = vec![ForceSample { displacement: Vector3::x(), force: Vector3::zeros() }; 5];
        assert!(matches!(fit_potential(&s, 1.0), Err(Error::Insufficient(_))));
    }

    #[test]
    fn planar_samples_name_missing_coefficients() {
        let m = PotentialModel::harmonic(1.0, [1.0, 2.0, 3.0], 1.0);
        let mut s = Vec::new();
        for i in -3..=3 {
            for j in -3..=3 {
                let d = Vector3::new(i as f64 * 0.1, j as f64 * 0.1, 0.0);
                s.push(ForceSample { displacement: d, force: m.force(&d) });
            }
        }
        match fit_potential(&s, 1.0) {
            Err(Error::RankDeficient(names)) => {
                assert!(names.contains("omega_z^2"), "{names}");
                assert!(!names.contains("beta_xxx"), "{names}");
            }
            other => panic!("{other:?}"),
        }
    }
}
