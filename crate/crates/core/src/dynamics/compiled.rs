use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::potential::PotentialModel;

/// Acceleration of a [`PotentialModel`] flattened into per-axis monomials,
/// with like terms merged, for the integrator's inner loop.
#[derive(Debug, Clone)]
pub(crate) struct CompiledForce {
    omega2: [f64; 3],
    quad: Vec<(usize, f64, usize, usize)>,
    cubic: Vec<(usize, f64, usize, usize, usize)>,
}

impl CompiledForce {
    pub fn new(model: &PotentialModel) -> Self {
        let mut quad: BTreeMap<(usize, usize, usize), f64> = BTreeMap::new();
        for (t, m, c) in model.beta.entries() {
            if c == 0.0 {
                continue;
            }
            for a in 0..3 {
                let mut o: Vec<usize> = (0..3).filter(|&b| b != a).map(|b| t[b]).collect();
                o.sort_unstable();
                *quad.entry((t[a], o[0], o[1])).or_default() += m * c;
            }
        }
        let mut cubic: BTreeMap<(usize, usize, usize, usize), f64> = BTreeMap::new();
        for (t, m, c) in model.gamma_prime.entries() {
            if c == 0.0 {
                continue;
            }
            for a in 0..4 {
                let mut o: Vec<usize> = (0..4).filter(|&b| b != a).map(|b| t[b]).collect();
                o.sort_unstable();
                *cubic.entry((t[a], o[0], o[1], o[2])).or_default() += m * c;
            }
        }
        Self {
            omega2: model.omega_rad_s.map(|w| w * w),
            quad: quad.into_iter().map(|((a, i, j), k)| (a, k, i, j)).collect(),
            cubic: cubic.into_iter().map(|((a, i, j, l), k)| (a, k, i, j, l)).collect(),
        }
    }

    #[inline]
    pub fn acceleration(&self, r: &Vector3<f64>) -> Vector3<f64> {
        let mut acc = [-self.omega2[0] * r[0], -self.omega2[1] * r[1], -self.omega2[2] * r[2]];
        for &(a, k, i, j) in &self.quad {
            acc[a] -= k * r[i] * r[j];
        }
        for &(a, k, i, j, l) in &self.cubic {
            acc[a] -= k * r[i] * r[j] * r[l];
        }
        Vector3::from(acc)
    }
}
