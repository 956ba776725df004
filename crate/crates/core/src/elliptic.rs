//! Complete elliptic integrals of the first and second kind, evaluated with
//! the arithmetic–geometric mean, plus the regularised combination needed for
//! the radial field of a current loop near its axis.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use crate::dual::Dual2;

/// Below this parameter value the power series is used instead of the AGM
/// for the regularised radial function.
const SERIES_THRESHOLD: f64 = 0.3;
const SERIES_TERMS: usize = 64;

/// Returns `(K(m), E(m))` for parameter `m = k²`, with `m1 = 1 − m` supplied
/// separately so that callers close to `m = 1` keep full precision.
pub fn ellip_ke(m: f64, m1: f64) -> (f64, f64) {
    debug_assert!((0.0..=1.0).contains(&m) && m1 > 0.0);
    let mut a = 1.0_f64;
    let mut b = m1.sqrt();
    let mut weight = 1.0_f64;
    let mut sum = 0.5 * m;
    for _ in 0..40 {
        let c = 0.5 * (a - b);
        let a_next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = a_next;
        sum += weight * c * c;
        weight *= 2.0;
        if c.abs() <= 1e-16 * a {
            break;
        }
    }
    let k = PI / (2.0 * a);
    (k, k * (1.0 - sum))
}

/// `K(m)` alone.
pub fn ellip_k(m: f64) -> f64 {
    ellip_ke(m, 1.0 - m).0
}

/// `E(m)` alone.
pub fn ellip_e(m: f64) -> f64 {
    ellip_ke(m, 1.0 - m).1
}

/// Series coefficients of K and E: `K = Σ k_n mⁿ`, `E = Σ e_n mⁿ`.
fn ke_series() -> &'static ([f64; SERIES_TERMS + 1], [f64; SERIES_TERMS + 1]) {
    static TABLE: OnceLock<([f64; SERIES_TERMS + 1], [f64; SERIES_TERMS + 1])> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut k = [0.0; SERIES_TERMS + 1];
        let mut e = [0.0; SERIES_TERMS + 1];
        // c_n = ((2n)! / (4ⁿ n!²))², built by the ratio c_n / c_{n-1} = ((2n-1)/(2n))²
        let mut c = 1.0_f64;
        for n in 0..=SERIES_TERMS {
            if n > 0 {
                let r = (2 * n - 1) as f64 / (2 * n) as f64;
                c *= r * r;
            }
            k[n] = FRAC_PI_2 * c;
            e[n] = FRAC_PI_2 * c / (1.0 - 2.0 * n as f64);
        }
        (k, e)
    })
}

/// Coefficients of `G(m) = [(E − K) + m E / (2(1 − m))] / m²` as a power series.
fn radial_series() -> &'static [f64; SERIES_TERMS - 1] {
    static TABLE: OnceLock<[f64; SERIES_TERMS - 1]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (k, e) = ke_series();
        let mut g = [0.0; SERIES_TERMS - 1];
        let mut partial_e = e[0];
        for n in 2..=SERIES_TERMS {
            partial_e += e[n - 1];
            g[n - 2] = e[n] - k[n] + 0.5 * partial_e;
        }
        g
    })
}

/// K and E with derivatives propagated through `m`.
pub(crate) fn ellip_ke_dual(m: Dual2, m1: Dual2) -> (Dual2, Dual2) {
    if m.v < SERIES_THRESHOLD {
        let (kc, ec) = ke_series();
        (horner(kc, m), horner(ec, m))
    } else {
        let (k, e) = ellip_ke(m.v, m1.v);
        let dk = (e - m1.v * k) / (2.0 * m.v * m1.v);
        let de = (e - k) / (2.0 * m.v);
        (m.chain(k, dk), m.chain(e, de))
    }
}

/// Regularised radial function `G(m)`, finite at `m = 0` where it equals 3π/32.
pub(crate) fn radial_g_dual(m: Dual2, m1: Dual2) -> Dual2 {
    if m.v < SERIES_THRESHOLD {
        horner(radial_series(), m)
    } else {
        let (k, e) = ellip_ke_dual(m, m1);
        ((e - k) + m * e / (m1 * 2.0)) / (m * m)
    }
}

fn horner(coeffs: &[f64], x: Dual2) -> Dual2 {
    let mut acc = Dual2::constant(0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from Abramowitz & Stegun table 17.1.
    #[test]
    fn agm_matches_tabulated_values() {
        let cases = [
            (0.0, FRAC_PI_2, FRAC_PI_2),
            (0.5, 1.854_074_677_301_372, 1.350_643_881_047_675_5),
            (0.9, 2.578_092_113_348_173, 1.104_774_732_704_073_6),
            (0.99, 3.695_637_362_989_875, 1.015_993_545_025_223_8),
        ];
        for (m, k_ref, e_ref) in cases {
            let (k, e) = ellip_ke(m, 1.0 - m);
            assert!((k - k_ref).abs() < 1e-13 * k_ref, "K({m}) = {k}");
            assert!((e - e_ref).abs() < 1e-13 * e_ref, "E({m}) = {e}");
        }
    }

    #[test]
    fn series_agrees_with_agm_at_threshold() {
        for &m in &[0.05, 0.2, 0.29, 0.31] {
            let md = Dual2::var(m, 0);
            let (kc, ec) = ke_series();
            let ks = horner(kc, md).v;
            let es = horner(ec, md).v;
            let (k, e) = ellip_ke(m, 1.0 - m);
            assert!((ks - k).abs() < 1e-14, "K series at {m}");
            assert!((es - e).abs() < 1e-14, "E series at {m}");
        }
    }

    #[test]
    fn radial_function_is_continuous_across_branches() {
        // Both branches evaluated at the same parameter; reference from a
        // 40-digit evaluation.
        let m = Dual2::var(SERIES_THRESHOLD, 0);
        let m1 = Dual2 { v: 1.0 - SERIES_THRESHOLD, d: [-1.0, 0.0] };
        let series = horner(radial_series(), m);
        let (k, e) = ellip_ke_dual(Dual2::var(0.3 + 1e-17, 0), m1);
        let direct = ((e - k) + m * e / (m1 * 2.0)) / (m * m);
        let reference = 0.457_714_143_263_678_24;
        assert!((series.v - reference).abs() < 1e-14, "{}", series.v);
        assert!((direct.v - reference).abs() < 1e-13, "{}", direct.v);
        assert!((series.d[0] - direct.d[0]).abs() < 1e-10);
        let g0 = radial_g_dual(Dual2::constant(0.0), Dual2::constant(1.0)).v;
        assert!((g0 - 3.0 * PI / 32.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &m in &[0.1, 0.45, 0.8] {
            let h = 1e-6;
            let d = |x: f64| Dual2::var(x, 0);
            let dm1 = |x: f64| Dual2 { v: 1.0 - x, d: [-1.0, 0.0] };
            let g = radial_g_dual(d(m), dm1(m));
            let fd = (radial_g_dual(d(m + h), dm1(m + h)).v - radial_g_dual(d(m - h), dm1(m - h)).v) / (2.0 * h);
            assert!((g.d[0] - fd).abs() < 1e-6 * fd.abs().max(1.0), "G' at {m}: {} vs {}", g.d[0], fd);
        }
    }
}
