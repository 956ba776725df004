use std::f64::consts::PI;

use levitation_core::analysis::{find_peak, welch_psd, Band, PeakOptions, WelchOptions};
use levitation_core::constants::{FLUX_QUANTUM, LEAD_DENSITY, STANDARD_GRAVITY};
use levitation_core::dynamics::Trajectory;
use levitation_core::fieldmodel::{CoilAssembly, ParticleSpec};
use levitation_core::transduction::{
    quadrupole_pickup_estimate, PickupLoop, PickupModel, TransferChain, Transducer,
};
use levitation_core::Error;
use nalgebra::Vector3;
use proptest::prelude::*;

const FS: f64 = 1250.0;

fn sinusoid(axis: usize, amp: f64, f: f64, seconds: f64) -> Trajectory {
    let n = (seconds * FS) as usize;
    let positions = (0..n)
        .map(|k| {
            let mut r = Vector3::zeros();
            r[axis] = amp * (2.0 * PI * f * k as f64 / FS).sin();
            r
        })
        .collect();
    Trajectory { sample_rate_hz: FS, start_time_s: 0.0, positions, velocities: vec![Vector3::zeros(); n] }
}

fn paper_like_pickup() -> PickupModel {
    PickupModel { u_phi0_per_m2: [-7.5e9, -6.0e9, -3.7e9], v_phi0_per_m: [4.0e4, 1.5e4, 6.0e5], w_phi0: 0.0 }
}

fn band_area(v: &[f64], f: f64) -> f64 {
    let psd = welch_psd(v, FS, WelchOptions::default()).unwrap();
    find_peak(&psd, &Band { lo_hz: f - 2.0, hi_hz: f + 2.0 }, &PeakOptions::default()).area_raw_v2
}

#[test]
fn linear_pickup_is_proportional() {
    let p = PickupModel { u_phi0_per_m2: [0.0; 3], v_phi0_per_m: [3e4, 0.0, 0.0], w_phi0: 0.0 };
    let t = sinusoid(0, 1e-5, 40.0, 1.0);
    for (phi, r) in p.pickup_flux(&t).iter().zip(&t.positions) {
        assert_eq!(*phi, 3e4 * r.x);
    }
}

#[test]
fn quadratic_pickup_has_dc_and_second_harmonic() {
    let u = -7.5e9;
    let x0 = 2e-5;
    let p = PickupModel { u_phi0_per_m2: [u, 0.0, 0.0], v_phi0_per_m: [0.0; 3], w_phi0: 0.0 };
    // 40 Hz over exactly 40 periods
    let t = sinusoid(0, x0, 40.0, 1.0);
    let phi = p.pickup_flux(&t);
    let n = phi.len() as f64;
    let dc = phi.iter().sum::<f64>() / n;
    assert!((dc - u * x0 * x0 / 2.0).abs() < 1e-9 * (u * x0 * x0).abs());
    // project on cos 2ωt: u X²/2 (1 − cos 2ωt)
    let c2 = 2.0 / n * phi.iter().enumerate().map(|(k, p)| p * (4.0 * PI * 40.0 * k as f64 / FS).cos()).sum::<f64>();
    assert!((c2 + u * x0 * x0 / 2.0).abs() < 1e-9 * (u * x0 * x0).abs());
}

#[test]
fn paper_curvature_at_one_micron() {
    let phi = paper_like_pickup().flux(&Vector3::new(1e-6, 0.0, 0.0)) - 4.0e4 * 1e-6;
    assert!((phi - (-7.5e-3)).abs() < 1e-12);
}

#[test]
fn chain_affine_with_curvature_ratio_u_over_v() {
    let pu = paper_like_pickup();
    let tr = Transducer { pickup: pu, chain: TransferChain::default() };
    let g = tr.chain.gain().unwrap();
    for axis in 0..3 {
        // V(x) = p x² + q x + r sampled at three points
        let t = Trajectory {
            sample_rate_hz: FS,
            start_time_s: 0.0,
            positions: [-1e-5, 0.0, 1e-5].iter().map(|&s| { let mut r = Vector3::zeros(); r[axis] = s; r }).collect(),
            velocities: vec![Vector3::zeros(); 3],
        };
        let v = tr.voltage(&t, None).unwrap().volts;
        let h = 1e-5;
        let p = (v[0] - 2.0 * v[1] + v[2]) / (2.0 * h * h);
        let q = (v[2] - v[0]) / (2.0 * h);
        let want = pu.u_phi0_per_m2[axis] / pu.v_phi0_per_m[axis];
        assert!((p / q - want).abs() < 1e-6 * want.abs(), "axis {axis}");
        assert!((q - g * pu.v_phi0_per_m[axis]).abs() < 1e-9 * q.abs());
    }
}

#[test]
fn zero_total_inductance_is_an_error() {
    let c = TransferChain { l_pickup_h: 0.0, l_input_h: 0.0, l_parasitic_h: 0.0, ..Default::default() };
    assert!(matches!(c.flux_transfer(&[1.0]), Err(Error::InvalidParameter(_))));
}

#[test]
fn unit_squid_flux_gives_fll_gain() {
    let v = TransferChain::default().squid_voltage(&[1.0], FS, None);
    assert!((v.volts[0] - FLUX_QUANTUM * 10e3 / 38e-12).abs() < 1e-15);
}

#[test]
fn noise_spectrum_is_flat_at_floor() {
    let c = TransferChain::default();
    let v = c.squid_voltage(&vec![0.0; (400.0 * FS) as usize], FS, Some((7, 0)));
    let psd = welch_psd(&v.volts, FS, WelchOptions::default()).unwrap();
    let want = (c.noise_floor_phi0_rthz * c.volts_per_phi0()).powi(2);
    for (lo, hi) in [(5.0, 50.0), (100.0, 200.0), (400.0, 600.0)] {
        let r = psd.band(lo, hi);
        let mean = psd.density[r.clone()].iter().sum::<f64>() / r.len() as f64;
        assert!((mean / want - 1.0).abs() < 0.1, "{lo}-{hi} Hz: {mean:e} vs {want:e}");
    }
}

#[test]
fn noise_streams_differ_and_repeat() {
    let c = TransferChain::default();
    let z = vec![0.0; 64];
    let a = c.squid_voltage(&z, FS, Some((3, 0)));
    let b = c.squid_voltage(&z, FS, Some((3, 1)));
    assert_ne!(a.volts, b.volts);
    assert_eq!(a.volts, c.squid_voltage(&z, FS, Some((3, 0))).volts);
}

#[test]
fn spectral_areas_reproduce_pickup_harmonic_ratio() {
    let tr = Transducer { pickup: paper_like_pickup(), chain: TransferChain::default() };
    let eta = tr.chain.efficiency(&tr.pickup).unwrap();
    for (axis, f, x0) in [(0, 40.0, 24e-6), (1, 64.0, 10e-6), (2, 110.0, 7e-6)] {
        let t = sinusoid(axis, x0, f, 100.0);
        let v = tr.voltage(&t, None).unwrap().volts;
        let af = band_area(&v, f);
        let ah = band_area(&v, 2.0 * f);
        let want = tr.pickup.second_harmonic_ratio_pickup(eta[axis], axis).unwrap();
        assert!((ah / (af * af) / want - 1.0).abs() < 0.01, "axis {axis}: {} vs {want}", ah / (af * af));
        // η A_f recovers the mean-square displacement
        assert!((eta[axis] * af / (x0 * x0 / 2.0) - 1.0).abs() < 0.01);
    }
}

#[test]
fn peak_snr_matches_noise_prediction() {
    let c = TransferChain::default();
    let pickup = PickupModel { u_phi0_per_m2: [0.0; 3], v_phi0_per_m: [4.0e5, 0.0, 0.0], w_phi0: 0.0 };
    let tr = Transducer { pickup, chain: c };
    let x0 = 7e-6;
    let t = sinusoid(0, x0, 40.0, 400.0);
    let v = tr.voltage(&t, Some((11, 0))).unwrap().volts;
    let psd = welch_psd(&v, FS, WelchOptions::default()).unwrap();
    let peak = find_peak(&psd, &Band { lo_hz: 35.0, hi_hz: 45.0 }, &PeakOptions::default());
    let snr = peak.area_v2 / (peak.baseline_v2_hz * psd.resolution_hz);
    let g = c.gain().unwrap();
    let want = (g * 4.0e5 * x0).powi(2) / 2.0 / ((c.noise_floor_phi0_rthz * c.volts_per_phi0()).powi(2) * psd.resolution_hz);
    assert!((snr / want - 1.0).abs() < 0.2, "{snr} vs {want}");
}

#[test]
fn harmonic_ratio_needs_linear_response() {
    let p = PickupModel { u_phi0_per_m2: [1.0; 3], v_phi0_per_m: [0.0; 3], w_phi0: 0.0 };
    assert!(p.second_harmonic_ratio_pickup(1.0, 2).is_err());
    let lin = PickupModel { u_phi0_per_m2: [0.0; 3], v_phi0_per_m: [1.0; 3], w_phi0: 0.0 };
    assert_eq!(lin.second_harmonic_ratio_pickup(5.0, 0).unwrap(), 0.0);
}

fn chip() -> (CoilAssembly, ParticleSpec, Vector3<f64>) {
    let a = CoilAssembly::chip_trap(0.5);
    let p = ParticleSpec::new(24e-6, LEAD_DENSITY).unwrap();
    let rest = a.find_equilibrium(&p, STANDARD_GRAVITY, &a.default_search_box()).unwrap();
    (a, p, rest)
}

fn default_loops() -> Vec<PickupLoop> {
    levitation_core::transduction::default_pickup_loops()
}

#[test]
fn quadrupole_estimate_is_additive_over_loops() {
    let (a, p, rest) = chip();
    let loops = default_loops();
    let both = quadrupole_pickup_estimate(&a, &p, &rest, &loops, 5e-6).unwrap();
    let one = quadrupole_pickup_estimate(&a, &p, &rest, &loops[..1], 5e-6).unwrap();
    let two = quadrupole_pickup_estimate(&a, &p, &rest, &loops[1..], 5e-6).unwrap();
    for i in 0..3 {
        let v = one.v_phi0_per_m[i] + two.v_phi0_per_m[i];
        let u = one.u_phi0_per_m2[i] + two.u_phi0_per_m2[i];
        assert!((both.v_phi0_per_m[i] - v).abs() <= 1e-9 * v.abs().max(1.0));
        assert!((both.u_phi0_per_m2[i] - u).abs() <= 1e-9 * u.abs().max(1.0));
    }
}

#[test]
fn quadrupole_estimate_matches_paper_scale() {
    let (a, p, rest) = chip();
    let m = quadrupole_pickup_estimate(&a, &p, &rest, &default_loops(), 5e-6).unwrap();
    // in-plane curvature within an order of magnitude of {-7.5, -6.0} mφ0/μm²
    for (i, want) in [(0, -7.5e9), (1, -6.0e9)] {
        let r = m.u_phi0_per_m2[i] / want;
        assert!(r > 0.1 && r < 10.0, "u[{i}] = {:e}", m.u_phi0_per_m2[i]);
    }
    assert!(m.v_phi0_per_m.iter().all(|v| *v != 0.0));
    let curv = |i: usize| (m.u_phi0_per_m2[i] / m.v_phi0_per_m[i]).abs();
    assert!(curv(2) < 0.1 * curv(0), "{m:?}");
}

#[test]
fn quadrupole_estimate_rejects_degenerate_geometry() {
    let (a, p, rest) = chip();
    assert!(matches!(quadrupole_pickup_estimate(&a, &p, &rest, &[], 5e-6), Err(Error::Geometry(_))));
    let bad = [PickupLoop { radius_m: 0.0, center_m: [0.0; 3], sense: 1 }];
    assert!(quadrupole_pickup_estimate(&a, &p, &rest, &bad, 5e-6).is_err());
}

proptest! {
    #[test]
    fn chain_is_linear(a in -1e3f64..1e3, phi in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let c = TransferChain::default();
        let scaled: Vec<f64> = phi.iter().map(|p| a * p).collect();
        let t1 = c.flux_transfer(&phi).unwrap();
        let t2 = c.flux_transfer(&scaled).unwrap();
        for (x, y) in t1.iter().zip(&t2) {
            prop_assert!((a * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
        let v1 = c.squid_voltage(&t1, FS, None);
        let v2 = c.squid_voltage(&t2, FS, None);
        for (x, y) in v1.volts.iter().zip(&v2.volts) {
            prop_assert!((a * x - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn pickup_superposes_per_axis(x in -3e-5f64..3e-5, y in -3e-5f64..3e-5, z in -3e-5f64..3e-5) {
        let p = paper_like_pickup();
        let sum = p.flux(&Vector3::new(x, 0.0, 0.0)) + p.flux(&Vector3::new(0.0, y, 0.0)) + p.flux(&Vector3::new(0.0, 0.0, z));
        let all = p.flux(&Vector3::new(x, y, z));
        prop_assert!((sum - all).abs() <= 1e-12 * sum.abs().max(1e-9));
    }
}
