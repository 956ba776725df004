use levitation_core::constants::{LEAD_DENSITY, STANDARD_GRAVITY};
use levitation_core::fieldmodel::{CoilAssembly, ParticleSpec};
use levitation_core::potential::{
    fit_potential, sample_trap_forces, Cubic, ForceSample, GammaMatrix, PotentialModel, Quartic,
};
use levitation_core::Error;
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_model(seed: u64) -> PotentialModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = PotentialModel::harmonic(
        6.6e-10,
        [rng.random_range(150.0..300.0), rng.random_range(300.0..500.0), rng.random_range(500.0..800.0)],
        1e-4,
    );
    for c in m.beta.0.iter_mut() {
        *c = rng.random_range(-1e9..1e9);
    }
    for c in m.gamma_prime.0.iter_mut() {
        *c = rng.random_range(-1e12..1e12);
    }
    m
}

fn grid(half: f64, n: usize) -> Vec<Vector3<f64>> {
    let step = 2.0 * half / (n - 1) as f64;
    let c = |k: usize| -half + k as f64 * step;
    (0..n * n * n).map(|i| Vector3::new(c(i / (n * n)), c((i / n) % n), c(i % n))).collect()
}

fn samples_of(m: &PotentialModel, points: &[Vector3<f64>]) -> Vec<ForceSample> {
    points.iter().map(|&d| ForceSample { displacement: d, force: m.force(&d) }).collect()
}

fn assert_close(got: &[f64], want: &[f64], rel: f64, what: &str) {
    let scale = want.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= rel * scale, "{what}: {g:e} vs {w:e}");
    }
}

#[test]
fn fit_recovers_random_model() {
    for seed in 0..5 {
        let m = random_model(seed);
        let (fit, report) = fit_potential(&samples_of(&m, &grid(15e-6, 7)), m.mass_kg).unwrap();
        assert_close(&fit.omega_rad_s, &m.omega_rad_s, 1e-8, "omega");
        assert_close(&fit.beta.0, &m.beta.0, 1e-8, "beta");
        assert_close(&fit.gamma_prime.0, &m.gamma_prime.0, 1e-8, "gamma'");
        assert!(report.relative_residual < 1e-10, "{report:?}");
        assert!(report.condition_number.is_finite() && report.condition_number > 1.0);
    }
}

#[test]
fn harmonic_samples_give_no_anharmonicity() {
    let m = PotentialModel::harmonic(1e-9, [250.0, 400.0, 700.0], 1e-4);
    let (fit, _) = fit_potential(&samples_of(&m, &grid(15e-6, 5)), m.mass_kg).unwrap();
    let w2 = 250.0f64 * 250.0;
    // compare the force each term would contribute at the box edge
    assert!(fit.beta.max_abs() * 15e-6 < 1e-10 * w2);
    assert!(fit.gamma_prime.max_abs() * 15e-6f64.powi(2) < 1e-10 * w2);
}

#[test]
fn chip_trap_fit_residual_below_one_percent() {
    let a = CoilAssembly::chip_trap(0.5);
    let p = ParticleSpec::new(24e-6, LEAD_DENSITY).unwrap();
    let exp = sample_trap_forces(&a, &p, STANDARD_GRAVITY, 15e-6, 11).unwrap();
    assert_eq!(exp.samples.len(), 1331);
    let (model, report) = exp.fit().unwrap();
    assert!(report.relative_residual < 0.01, "{report:?}");
    // sag below the field zero, and axes match the harmonic gradients to a few percent
    assert!(exp.origin.z < -10e-6);
    let w = a.trap_frequencies(&p).unwrap();
    assert!((model.omega_rad_s[0] / w[0] - 1.0).abs() < 0.1);
    assert_eq!(model.validity_radius_m, 25e-6);
    // the equilibrium force is balanced
    let f0 = a.trap_force(&p, STANDARD_GRAVITY, &exp.origin).unwrap();
    assert!(f0.norm() < 1e-6 * p.mass() * STANDARD_GRAVITY);
    // softening Duffing term in the plane
    assert!(model.gamma().0[0][0] < 0.0);
}

#[test]
fn analytic_force_matches_finite_differences() {
    let m = random_model(11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let h = 1e-10;
    for _ in 0..1000 {
        let r = Vector3::new(
            rng.random_range(-2e-5..2e-5),
            rng.random_range(-2e-5..2e-5),
            rng.random_range(-2e-5..2e-5),
        );
        let f = m.force(&r);
        for i in 0..3 {
            let mut rp = r;
            let mut rm = r;
            rp[i] += h;
            rm[i] -= h;
            let fd = -(m.potential_energy(&rp) - m.potential_energy(&rm)) / (2.0 * h);
            assert!((fd - f[i]).abs() <= 1e-8 * f.norm() + 1e-30, "{r:?} axis {i}: {fd} {}", f[i]);
        }
    }
}

#[test]
fn asymmetric_gamma_prime_is_rejected() {
    let mut g = Quartic::default();
    g.set([0, 0, 1, 1], 3.0);
    let mut full = g.to_full();
    assert_eq!(GammaMatrix::from_full_gamma_prime(&full).unwrap().0[0][1], 9.0);
    full[1][0][1][0] = 4.0;
    assert!(matches!(GammaMatrix::from_full_gamma_prime(&full), Err(Error::Asymmetric(_))));
}

#[test]
fn collinear_samples_are_rank_deficient() {
    let m = random_model(3);
    let pts: Vec<Vector3<f64>> = (0..60).map(|k| Vector3::new(1.0, 0.0, 0.0) * (k as f64 - 30.0) * 1e-6).collect();
    match fit_potential(&samples_of(&m, &pts), m.mass_kg) {
        Err(Error::RankDeficient(names)) => assert!(names.contains("gamma'_yyzz"), "{names}"),
        other => panic!("{other:?}"),
    }
}

fn reflect(m: &PotentialModel, axis: usize) -> PotentialModel {
    let mut out = m.clone();
    let flip = |t: &[usize]| t.iter().filter(|&&i| i == axis).count() % 2 == 1;
    let mut beta = Cubic::default();
    for (t, _, c) in m.beta.entries() {
        beta.set(t, if flip(&t) { -c } else { c });
    }
    let mut gp = Quartic::default();
    for (t, _, c) in m.gamma_prime.entries() {
        gp.set(t, if flip(&t) { -c } else { c });
    }
    out.beta = beta;
    out.gamma_prime = gp;
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reflection_symmetry(seed in 0u64..1000, axis in 0usize..3, x in -2e-5f64..2e-5, y in -2e-5f64..2e-5, z in -2e-5f64..2e-5) {
        let m = random_model(seed);
        let r = Vector3::new(x, y, z);
        let mut rr = r;
        rr[axis] = -rr[axis];
        let u = m.potential_energy(&r);
        let ur = reflect(&m, axis).potential_energy(&rr);
        prop_assert!((u - ur).abs() <= 1e-12 * u.abs().max(1e-30));
    }

    #[test]
    fn pull_is_linear_and_homogeneous(seed in 0u64..1000, a in 0.0f64..4.0, m1 in prop::array::uniform3(0.0f64..1e-9), m2 in prop::array::uniform3(0.0f64..1e-9)) {
        let m = random_model(seed);
        let p1 = m.frequency_pull(m1);
        let p2 = m.frequency_pull(m2);
        let sum = m.frequency_pull(std::array::from_fn(|i| m1[i] + a * m2[i]));
        for i in 0..3 {
            let scale = p1[i].abs() + a * p2[i].abs() + 1e-300;
            prop_assert!((sum[i] - p1[i] - a * p2[i]).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn fit_round_trip_property(seed in 0u64..1000) {
        let m = random_model(seed);
        let (fit, _) = fit_potential(&samples_of(&m, &grid(15e-6, 5)), m.mass_kg).unwrap();
        let r = Vector3::new(5e-6, -9e-6, 4e-6);
        prop_assert!((fit.force(&r) - m.force(&r)).norm() <= 1e-9 * m.force(&r).norm());
    }
}
