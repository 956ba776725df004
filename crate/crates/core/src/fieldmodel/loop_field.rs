//! Closed-form field of a single circular filament and its exact Jacobian.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::constants::MU_0;
use crate::dual::Dual2;
use crate::elliptic::{ellip_ke_dual, radial_g_dual};
use crate::error::{Error, Result};

/// A single circular current filament with its axis parallel to z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filament {
    pub center: Vector3<f64>,
    pub radius: f64,
    /// Signed current; positive circulates counter-clockwise seen from +z.
    pub current: f64,
}

impl Filament {
    /// Field and Jacobian (`jac[(i, j)] = ∂B_i/∂r_j`) at `point`.
    pub fn field_and_jacobian(&self, point: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let p = point - self.center;
        let (x, y, z) = (p.x, p.y, p.z);
        let rho = x.hypot(y);
        let a = self.radius;

        let gap2 = (a - rho).powi(2) + z * z;
        if gap2.sqrt() <= 1e-10 * a {
            return Err(Error::OnFilament { point: [point.x, point.y, point.z] });
        }

        let rho_d = Dual2::var(rho, 0);
        let z_d = Dual2::var(z, 1);
        let q = (rho_d + a) * (rho_d + a) + z_d * z_d;
        let gap = (rho_d * -1.0 + a) * (rho_d * -1.0 + a) + z_d * z_d;
        let m = rho_d * (4.0 * a) / q;
        let m1 = gap / q;

        let (k, e) = ellip_ke_dual(m, m1);
        let prefactor = MU_0 * self.current / (2.0 * PI);

        // B_z = μ0 I / (2π √Q) [K + (a² − ρ² − z²)/gap · E]
        let ratio = (Dual2::constant(a * a) - rho_d * rho_d - z_d * z_d) / gap;
        let bz = (k + ratio * e) * q.sqrt().recip() * prefactor;

        // B_ρ / ρ = 8 μ0 I a² z G(m) / (π Q^{5/2}); smooth on the axis.
        let g = radial_g_dual(m, m1);
        let h = z_d * g * q.powf(-2.5) * (8.0 * MU_0 * self.current * a * a / PI);

        let field = Vector3::new(h.v * x, h.v * y, bz.v);

        let (h_rho, h_z) = (h.d[0], h.d[1]);
        let (bz_rho, bz_z) = (bz.d[0], bz.d[1]);
        let (cx, cy) = if rho > 0.0 { (x / rho, y / rho) } else { (0.0, 0.0) };

        let jac = Matrix3::new(
            h.v + x * cx * h_rho,
            x * cy * h_rho,
            x * h_z,
            y * cx * h_rho,
            h.v + y * cy * h_rho,
            y * h_z,
            bz_rho * cx,
            bz_rho * cy,
            bz_z,
        );
        Ok((field, jac))
    }
}
