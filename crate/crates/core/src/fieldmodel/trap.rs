use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{CoilAssembly, ParticleSpec};
use crate::error::{Error, Result};

/// Axis-aligned box bounding a minimum search (m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SearchBox {
    pub fn centered(center: [f64; 3], half_width: f64) -> Self {
        Self { min: center.map(|c| c - half_width), max: center.map(|c| c + half_width) }
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::from_fn(|i, _| 0.5 * (self.min[i] + self.max[i]))
    }

    fn scale(&self) -> f64 {
        (0..3).map(|i| self.max[i] - self.min[i]).fold(0.0, f64::max)
    }

    fn clamp(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::from_fn(|i, _| p[i].clamp(self.min[i], self.max[i]))
    }

    /// True if `p` sits on a face of the box (within `tol`).
    fn on_boundary(&self, p: &Vector3<f64>, tol: f64) -> bool {
        (0..3).any(|i| p[i] - self.min[i] <= tol || self.max[i] - p[i] <= tol)
    }
}

const POSITION_TOL: f64 = 1e-10;
const MAX_ITER: usize = 200;

impl CoilAssembly {
    /// Local minimum of |B| inside `search`, found with a Levenberg–Marquardt
    /// iteration on the residual `B(r)` using the analytic Jacobian.
    pub fn find_trap_center(&self, search: &SearchBox) -> Result<Vector3<f64>> {
        let mut r = search.center();
        let mut s = self.field_at(&r)?;
        let mut cost = s.b.norm_squared();
        let mut lambda = 1e-3;
        let tol = POSITION_TOL.min(1e-6 * search.scale());

        for _ in 0..MAX_ITER {
            let jtj = s.jacobian.transpose() * s.jacobian;
            let grad = s.jacobian.transpose() * s.b;
            let mut accepted = false;
            let mut step_norm = 0.0;
            for _ in 0..30 {
                let damped = jtj + Matrix3::from_diagonal(&jtj.diagonal()) * lambda;
                let Some(step) = damped.lu().solve(&(-grad)) else {
                    lambda *= 10.0;
                    continue;
                };
                let candidate = search.clamp(&(r + step));
                let cs = self.field_at(&candidate)?;
                let c_cost = cs.b.norm_squared();
                if c_cost <= cost {
                    step_norm = (candidate - r).norm();
                    r = candidate;
                    s = cs;
                    cost = c_cost;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    break;
                }
                lambda *= 10.0;
            }
            if !accepted || step_norm < tol {
                if search.on_boundary(&r, 10.0 * tol) {
                    return Err(Error::TrapNotFound { last: r.into() });
                }
                return Ok(r);
            }
        }
        Err(Error::NoConvergence { iterations: MAX_ITER, last: r.into() })
    }

    /// Total energy of the sphere including gravity along −z (J).
    pub fn trap_energy(&self, particle: &ParticleSpec, gravity: f64, r: &Vector3<f64>) -> Result<f64> {
        Ok(self.diamagnet_energy(particle, r)? + particle.mass() * gravity * r.z)
    }

    /// Total force including gravity along −z (N).
    pub fn trap_force(&self, particle: &ParticleSpec, gravity: f64, r: &Vector3<f64>) -> Result<Vector3<f64>> {
        let mut f = self.diamagnet_force(particle, r)?;
        f.z -= particle.mass() * gravity;
        Ok(f)
    }

    /// Mechanical equilibrium of the sphere with gravity, starting from the
    /// field minimum. Newton iteration with a finite-difference Hessian of the
    /// analytic force and a backtracking line search on the energy.
    pub fn find_equilibrium(&self, particle: &ParticleSpec, gravity: f64, search: &SearchBox) -> Result<Vector3<f64>> {
        let mut r = self.find_trap_center(search)?;
        if gravity == 0.0 {
            return Ok(r);
        }
        let h = 1e-4 * search.scale();
        let mut energy = self.trap_energy(particle, gravity, &r)?;
        for _ in 0..MAX_ITER {
            let force = self.trap_force(particle, gravity, &r)?;
            let mut hess = Matrix3::zeros();
            for j in 0..3 {
                let mut dp = r;
                let mut dm = r;
                dp[j] += h;
                dm[j] -= h;
                let col = -(self.trap_force(particle, gravity, &dp)? - self.trap_force(particle, gravity, &dm)?) / (2.0 * h);
                hess.set_column(j, &col);
            }
            let hess = 0.5 * (hess + hess.transpose());
            let step = match hess.cholesky() {
                Some(ch) => ch.solve(&force),
                None => force / hess.norm().max(f64::MIN_POSITIVE),
            };
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let candidate = search.clamp(&(r + step * t));
                let e = self.trap_energy(particle, gravity, &candidate)?;
                if e <= energy {
                    let dist = (candidate - r).norm();
                    r = candidate;
                    energy = e;
                    moved = dist > 0.0;
                    if dist < POSITION_TOL {
                        return self.equilibrium_interior(search, r);
                    }
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                return self.equilibrium_interior(search, r);
            }
        }
        Err(Error::NoConvergence { iterations: MAX_ITER, last: r.into() })
    }

    fn equilibrium_interior(&self, search: &SearchBox, r: Vector3<f64>) -> Result<Vector3<f64>> {
        if search.on_boundary(&r, 1e-9) {
            Err(Error::TrapNotFound { last: r.into() })
        } else {
            Ok(r)
        }
    }
}
