use std::f64::consts::PI;

use levitation_core::analysis::*;
use levitation_core::potential::GammaMatrix;
use levitation_core::transduction::VoltageTrace;
use levitation_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

const FS: f64 = 1250.0;

fn tone(a: f64, f: f64, phase: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a * (2.0 * PI * f * k as f64 / FS + phase).sin()).collect()
}

fn white(sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(&mut rng)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
}

fn area(psd: &Psd, lo: f64, hi: f64) -> f64 {
    find_peak(psd, &Band { lo_hz: lo, hi_hz: hi }, &PeakOptions::default()).area_v2
}

#[test]
fn tone_area_is_half_amplitude_squared() {
    let s = tone(2.0, 40.37, 0.3, (200.0 * FS) as usize);
    let psd = welch_psd(&s, FS, WelchOptions::default()).unwrap();
    assert!((area(&psd, 38.0, 42.0) / 2.0 - 1.0).abs() < 0.01);
}

#[test]
fn white_noise_density_is_flat() {
    let sd = 0.3;
    let psd = welch_psd(&white(sd, (400.0 * FS) as usize, 1), FS, WelchOptions::default()).unwrap();
    let want = sd * sd / (FS / 2.0);
    for (lo, hi) in [(1.0, 100.0), (200.0, 400.0), (500.0, 620.0)] {
        let r = psd.band(lo, hi);
        let mean = psd.density[r.clone()].iter().sum::<f64>() / r.len() as f64;
        assert!((mean / want - 1.0).abs() < 0.1);
    }
}

#[test]
fn two_tones_are_recovered_separately() {
    let n = (200.0 * FS) as usize;
    let s = add(&tone(1.0, 40.0, 0.0, n), &tone(0.5, 110.2, 1.0, n));
    let psd = welch_psd(&s, FS, WelchOptions::default()).unwrap();
    let peaks = find_peaks(&psd, &[Band { lo_hz: 35.0, hi_hz: 45.0 }, Band { lo_hz: 105.0, hi_hz: 115.0 }], &PeakOptions::default()).unwrap();
    assert!((peaks[0].area_v2 / 0.5 - 1.0).abs() < 0.02);
    assert!((peaks[1].area_v2 / 0.125 - 1.0).abs() < 0.02);
    let res = psd.resolution_hz;
    assert!((peaks[0].center_hz.unwrap() - 40.0).abs() <= res / 2.0);
    assert!((peaks[1].center_hz.unwrap() - 110.2).abs() <= res / 2.0);
}

#[test]
fn overlapping_bands_are_rejected() {
    let psd = welch_psd(&white(1.0, 20000, 2), FS, WelchOptions::default()).unwrap();
    let b = [Band { lo_hz: 35.0, hi_hz: 45.0 }, Band { lo_hz: 44.0, hi_hz: 50.0 }];
    assert!(find_peaks(&psd, &b, &PeakOptions::default()).is_err());
    assert!(ModeBands::around([40.0, 41.0, 110.0], [2.0; 3]).is_err());
}

#[test]
fn too_short_trace_is_an_error() {
    assert!(matches!(welch_psd(&[0.0; 100], FS, WelchOptions::default()), Err(Error::TooShort { .. })));
}

#[test]
fn noise_only_band_has_no_peak() {
    let sd = 0.3;
    let psd = welch_psd(&white(sd, (200.0 * FS) as usize, 3), FS, WelchOptions::default()).unwrap();
    let band = Band { lo_hz: 35.0, hi_hz: 45.0 };
    let p = find_peak(&psd, &band, &PeakOptions::default());
    assert!(!p.present);
    // bounded by the baseline power in the band
    assert!(p.area_v2 <= p.baseline_v2_hz * (band.hi_hz - band.lo_hz));
}

fn bands() -> ModeBands {
    ModeBands::around([40.0, 64.0, 110.0], [4.0; 3]).unwrap()
}

#[test]
fn stationary_signal_gives_constant_chunk_frequencies() {
    let n = (100.0 * FS) as usize;
    let s = add(&add(&tone(1.0, 40.15, 0.0, n), &tone(0.7, 64.3, 0.4, n)), &tone(0.4, 110.0, 0.1, n));
    let trace = VoltageTrace { sample_rate_hz: FS, start_time_s: 0.0, volts: s };
    let recs = chunk_analysis(&trace, bands(), &ChunkOptions::default()).unwrap();
    assert_eq!(recs.len(), 10);
    for (axis, f) in [(0, 40.15), (1, 64.3), (2, 110.0)] {
        for r in &recs {
            assert!((r.frequency_hz(axis).unwrap() - f).abs() <= 0.05, "{:?}", r.frequency_hz(axis));
        }
    }
    assert!(recs.iter().all(|r| !r.flagged()));
    assert!((recs[3].start_s - 30.0).abs() < 1e-12);
}

#[test]
fn chunk_areas_track_an_amplitude_step() {
    let n = (100.0 * FS) as usize;
    let s: Vec<f64> = tone(1.0, 40.0, 0.0, n)
        .iter()
        .enumerate()
        .map(|(k, x)| if k < n / 2 { *x } else { 2.0 * x })
        .collect();
    let s = add(&s, &white(1e-3, n, 11));
    let trace = VoltageTrace { sample_rate_hz: FS, start_time_s: 0.0, volts: s };
    let recs = chunk_analysis(&trace, bands(), &ChunkOptions::default()).unwrap();
    assert!((recs[1].area(0) / 0.5 - 1.0).abs() < 0.01);
    assert!((recs[8].area(0) / 2.0 - 1.0).abs() < 0.01);
    // missing y and z fundamentals are flagged
    assert!(recs[0].flagged());
}

fn synthetic_records(n: usize, seed: u64, fit_model: &[[f64; 3]; 3], eta: [f64; 3], base: [f64; 3]) -> Vec<ChunkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let exp = Exp::new(1.0).unwrap();
    let scale = [1e-3, 4e-4, 2e-4];
    (0..n)
        .map(|k| {
            let a: [f64; 3] = std::array::from_fn(|j| scale[j] * exp.sample(&mut rng));
            let f: [f64; 3] = std::array::from_fn(|i| base[i] + (0..3).map(|j| fit_model[i][j] * eta[j] * a[j]).sum::<f64>());
            let peak = |c: f64, area: f64| PeakEstimate { present: true, center_hz: Some(c), area_v2: area, area_raw_v2: area, baseline_v2_hz: 0.0 };
            ChunkRecord {
                start_s: 10.0 * k as f64,
                fundamentals: std::array::from_fn(|i| peak(f[i], a[i])),
                harmonics: std::array::from_fn(|i| peak(2.0 * f[i], 3.0 * a[i] * a[i])),
            }
        })
        .collect()
}

/// Amplitudes on a full factorial grid, so the sample covariance between
/// any two axes vanishes, both before and after quiet-chunk filtering.
fn factorial_records(levels: usize, fit_model: &[[f64; 3]; 3], eta: [f64; 3], base: [f64; 3]) -> Vec<ChunkRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let scale = [1e-3, 4e-4, 2e-4];
    let lv: [Vec<f64>; 3] = std::array::from_fn(|j| (0..levels).map(|m| scale[j] * (m as f64 + rng.random::<f64>()) / levels as f64).collect());
    let mut out = Vec::new();
    for a0 in &lv[0] {
        for a1 in &lv[1] {
            for a2 in &lv[2] {
                let a = [*a0, *a1, *a2];
                let f: [f64; 3] = std::array::from_fn(|i| base[i] + (0..3).map(|j| fit_model[i][j] * eta[j] * a[j]).sum::<f64>());
                let peak = |c: f64, area: f64| PeakEstimate { present: true, center_hz: Some(c), area_v2: area, area_raw_v2: area, baseline_v2_hz: 0.0 };
                out.push(ChunkRecord {
                    start_s: 10.0 * out.len() as f64,
                    fundamentals: std::array::from_fn(|i| peak(f[i], a[i])),
                    harmonics: std::array::from_fn(|i| peak(2.0 * f[i], 3.0 * a[i] * a[i])),
                });
            }
        }
    }
    out
}

fn test_gamma() -> (GammaMatrix, [f64; 3]) {
    let g = GammaMatrix([[-5e11, -2e10, -8e11], [-2e10, -5e11, -8e11], [-8e11, -8e11, 1.1e13]]);
    (g, [40.0, 64.0, 110.0].map(|f| 2.0 * PI * f))
}

#[test]
fn pulling_round_trip_on_noiseless_records() {
    let (g, w) = test_gamma();
    let k = model_slopes(&g, &w);
    let eta = [5e-9, 2e-8, 3e-10];
    let recs = factorial_records(12, &k, eta, [40.0, 64.0, 110.0]);
    for opts in [PullingOptions { quiet_percentile: None }, PullingOptions::default()] {
        let fit = fit_pulling(&recs, &g, &w, &opts).unwrap();
        for j in 0..3 {
            assert!((fit.eta_m2_per_v2[j] / eta[j] - 1.0).abs() < 1e-6, "{opts:?} {:?}", fit.eta_m2_per_v2);
        }
    }
}

#[test]
fn softening_gives_negative_self_slope() {
    let (g, w) = test_gamma();
    let k = model_slopes(&g, &w);
    let recs = synthetic_records(500, 2, &k, [5e-9, 2e-8, 3e-10], [40.0, 64.0, 110.0]);
    let fit = fit_pulling(&recs, &g, &w, &PullingOptions::default()).unwrap();
    assert!(fit.cells[0][0].slope < 0.0);
    assert!(fit.cells[2][2].slope > 0.0);
}

#[test]
fn pulling_needs_enough_chunks() {
    let (g, w) = test_gamma();
    let recs = synthetic_records(10, 3, &model_slopes(&g, &w), [1e-9; 3], [40.0, 64.0, 110.0]);
    assert!(matches!(fit_pulling(&recs, &g, &w, &PullingOptions { quiet_percentile: None }), Err(Error::Insufficient(_))));
}

#[test]
fn constant_areas_make_regression_singular() {
    let (g, w) = test_gamma();
    let mut recs = synthetic_records(50, 4, &model_slopes(&g, &w), [1e-9; 3], [40.0, 64.0, 110.0]);
    for r in &mut recs {
        r.fundamentals[1].area_v2 = 1.0;
    }
    match fit_pulling(&recs, &g, &w, &PullingOptions { quiet_percentile: None }) {
        Err(Error::SingularRegression(cell)) => assert!(cell.contains("A_y"), "{cell}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn filter_keeps_percentile_fraction_for_equal_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let recs: Vec<ChunkRecord> = (0..1000)
        .map(|k| {
            let a: f64 = rng.random_range(0.0..1.0);
            let p = PeakEstimate { present: true, center_hz: Some(40.0), area_v2: a, area_raw_v2: a, baseline_v2_hz: 0.0 };
            ChunkRecord { start_s: k as f64, fundamentals: [p; 3], harmonics: [p; 3] }
        })
        .collect();
    let kept = filter_chunks(&recs, 0, 30.0).unwrap();
    assert_eq!(kept.len(), 300);
}

#[test]
fn filter_drops_loud_chunk_and_reports_empty() {
    let (g, w) = test_gamma();
    let mut recs = synthetic_records(100, 6, &model_slopes(&g, &w), [1e-9; 3], [40.0, 64.0, 110.0]);
    recs[17].fundamentals[1].area_v2 = 1e6;
    let kept = filter_chunks(&recs, 0, 90.0).unwrap();
    assert!(kept.iter().all(|c| c.start_s != recs[17].start_s));
    assert!(matches!(filter_chunks(&recs, 0, 0.0), Err(Error::EmptyFilter(_))));
}

#[test]
fn harmonic_fit_exact_and_scale_covariant() {
    let (g, w) = test_gamma();
    let recs = synthetic_records(100, 7, &model_slopes(&g, &w), [1e-9; 3], [40.0, 64.0, 110.0]);
    let fit = harmonic_quadratic_fit(&recs, 0).unwrap();
    assert!((fit.ratio_per_v2 / 3.0 - 1.0).abs() < 1e-9);
    // voltage scaled by a: areas by a², R by a⁻²
    let a2 = 9.0;
    let scaled: Vec<ChunkRecord> = recs
        .iter()
        .map(|c| {
            let mut c = *c;
            for p in c.fundamentals.iter_mut().chain(c.harmonics.iter_mut()) {
                p.area_v2 *= a2;
            }
            c
        })
        .collect();
    let f2 = harmonic_quadratic_fit(&scaled, 0).unwrap();
    assert!((f2.ratio_per_v2 * a2 / fit.ratio_per_v2 - 1.0).abs() < 1e-12);
}

#[test]
fn linear_pickup_gives_zero_harmonic_ratio() {
    let (g, w) = test_gamma();
    let mut recs = synthetic_records(60, 8, &model_slopes(&g, &w), [1e-9; 3], [40.0, 64.0, 110.0]);
    for c in &mut recs {
        c.harmonics[1].area_v2 = 0.0;
        c.harmonics[1].present = false;
    }
    let fit = harmonic_quadratic_fit(&recs, 1).unwrap();
    assert_eq!(fit.ratio_per_v2, 0.0);
    assert!(harmonic_quadratic_fit(&recs[..5], 1).is_err());
}

#[test]
fn identical_histograms_have_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v: Vec<f64> = (0..500).map(|_| 40.0 - rng.random_range(0.0f64..1.0).powi(3)).collect();
    let h = frequency_histograms(&v, &v, 30).unwrap();
    assert_eq!(h.observed, h.model);
    assert_eq!(h.ks_distance, 0.0);
    assert!(h.skewness_observed < -0.5);
    assert_eq!(h.observed.iter().sum::<usize>(), 500);
}

#[test]
fn ks_distance_of_shifted_samples() {
    let a: Vec<f64> = (0..100).map(|k| k as f64).collect();
    let b: Vec<f64> = (0..100).map(|k| k as f64 + 30.0).collect();
    assert!((ks_distance(&a, &b) - 0.3).abs() < 1e-12);
}

#[test]
fn equal_energies_give_unit_ratios() {
    let w = [40.0, 64.0, 110.0].map(|f| 2.0 * PI * f);
    let eta = [1e-9, 2e-9, 3e-9];
    let m = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let recs: Vec<ChunkRecord> = (0..400)
        .map(|k| {
            let e = rng.random_range(0.5..1.5) * 1e-15;
            let fundamentals = std::array::from_fn(|i| {
                let a = e / (m * w[i] * w[i] * eta[i]);
                PeakEstimate { present: true, center_hz: Some(w[i] / (2.0 * PI)), area_v2: a, area_raw_v2: a, baseline_v2_hz: 0.0 }
            });
            ChunkRecord { start_s: k as f64, fundamentals, harmonics: fundamentals }
        })
        .collect();
    let r = mode_energy_report(&recs, eta, m, w).unwrap();
    for x in r.ratios {
        assert!((x - 1.0).abs() < 0.05);
    }
    let zero: Vec<ChunkRecord> = recs
        .iter()
        .map(|c| {
            let mut c = *c;
            c.fundamentals.iter_mut().for_each(|p| p.area_v2 = 0.0);
            c
        })
        .collect();
    assert_eq!(mode_energy_report(&zero, eta, m, w).unwrap().energies_j, [0.0; 3]);
}

#[test]
fn white_energy_decorrelates_within_one_lag() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let exp = Exp::new(1.0).unwrap();
    let e: Vec<f64> = (0..5000).map(|_| exp.sample(&mut rng)).collect();
    let fit = energy_autocorrelation(&e, 1.0, 1.0, 1.0).unwrap();
    assert!(fit.tau_s < 1.0, "{}", fit.tau_s);
}

#[test]
fn exponential_energy_series_gives_its_time_constant() {
    // AR(1) with lag-one correlation e^{-1/τ}
    let tau: f64 = 25.0;
    let r = (-1.0 / tau).exp();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = Normal::new(0.0, (1.0 - r * r).sqrt()).unwrap();
    let mut x = 0.0;
    let e: Vec<f64> = (0..200_000).map(|_| { x = r * x + n.sample(&mut rng); x }).collect();
    let fit = energy_autocorrelation(&e, 1.0, 2.0, 1.0).unwrap();
    assert!((fit.tau_s / tau - 1.0).abs() < 0.1, "{}", fit.tau_s);
    assert!((fit.quality_factor - 2.0 * fit.tau_s).abs() < 1e-12);
}

#[test]
fn calibration_constant_reproduces_pinned_value() {
    let c = calibrate_q_constant(1..=8).unwrap();
    assert!((c - Q_CALIBRATION).abs() < 1e-3, "{c}");
    assert!((c - 1.0).abs() < 0.1);
}

#[test]
fn known_q_oscillator_is_recovered() {
    let q = known_q_measurement(5000.0, 21).unwrap() * Q_CALIBRATION;
    assert!((q / 5000.0 - 1.0).abs() < 0.2, "{q}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_holds(seed in 0u64..1000, sd in 0.01f64..10.0, a in 0.0f64..5.0, f in 5.0f64..600.0) {
        let n = (100.0 * FS) as usize;
        let s = add(&white(sd, n, seed), &tone(a, f, 0.2, n));
        let psd = welch_psd(&s, FS, WelchOptions::default()).unwrap();
        prop_assert!(psd.density.iter().all(|d| *d >= 0.0));
        prop_assert!((psd.total_power() / variance(&s) - 1.0).abs() < 0.01);
    }

    #[test]
    fn peak_areas_add_for_disjoint_tones(a in 0.1f64..3.0, b in 0.1f64..3.0, f1 in 30.0f64..50.0, f2 in 100.0f64..120.0) {
        let n = (50.0 * FS) as usize;
        let psd = |s: &[f64]| welch_psd(s, FS, WelchOptions::default()).unwrap();
        let t1 = tone(a, f1, 0.0, n);
        let t2 = tone(b, f2, 0.5, n);
        let both = psd(&add(&t1, &t2));
        let s1 = area(&psd(&t1), 25.0, 55.0);
        let s2 = area(&psd(&t2), 95.0, 125.0);
        let sum = area(&both, 25.0, 55.0) + area(&both, 95.0, 125.0);
        prop_assert!((sum / (s1 + s2) - 1.0).abs() < 0.02);
    }

    #[test]
    fn ks_is_symmetric_and_bounded(a in prop::collection::vec(-10.0f64..10.0, 1..50), b in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let d = ks_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!((d - ks_distance(&b, &a)).abs() < 1e-12);
    }
}
