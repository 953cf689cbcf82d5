use proptest::prelude::*;
use qpgp_core::scoring::{crps_mc, energy_score_mc};
use qpgp_core::stats::{std_normal_cdf, std_normal_pdf};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// `E|x - Z|` for standard normal `Z`.
fn mean_abs_dev(x: f64) -> f64 {
    x * (2.0 * std_normal_cdf(x) - 1.0) + 2.0 * std_normal_pdf(x)
}

#[test]
fn gaussian_crps_closed_form() {
    let closed = 2.0 * std_normal_pdf(0.0) - 1.0 / std::f64::consts::PI.sqrt();
    assert!((closed - 0.2337).abs() < 5e-5);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for sigma in [1.0, 3.5] {
        let z: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s: Vec<f64> = z.iter().map(|v| sigma * v).collect();
        let est = crps_mc(&s, 0.0).unwrap();
        // linearized influence terms of the V-statistic
        let infl: Vec<f64> = z.iter().map(|v| sigma * (v.abs() - mean_abs_dev(*v))).collect();
        let m = infl.iter().sum::<f64>() / infl.len() as f64;
        let sd = (infl.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (infl.len() - 1) as f64).sqrt();
        let se = sd / (infl.len() as f64).sqrt();
        assert!((est - sigma * closed).abs() < 3.0 * se, "sigma {sigma}: {est} vs {} (se {se})", sigma * closed);
    }
}

proptest! {
    #[test]
    fn one_dimensional_energy_is_crps(samples in prop::collection::vec(-100.0f64..100.0, 2..60), y in -100.0f64..100.0) {
        let vecs: Vec<Vec<f64>> = samples.iter().map(|s| vec![*s]).collect();
        let es = energy_score_mc(&vecs, &[y]).unwrap();
        let crps = crps_mc(&samples, y).unwrap();
        prop_assert_eq!(es.to_bits(), crps.to_bits());
    }

    #[test]
    fn crps_translation_and_scale(samples in prop::collection::vec(-10.0f64..10.0, 2..40), y in -10.0f64..10.0,
                                  shift in -50.0f64..50.0, scale in 0.1f64..10.0) {
        let base = crps_mc(&samples, y).unwrap();
        let moved: Vec<f64> = samples.iter().map(|s| s + shift).collect();
        prop_assert!((crps_mc(&moved, y + shift).unwrap() - base).abs() < 1e-9 * (1.0 + shift.abs()));
        let scaled: Vec<f64> = samples.iter().map(|s| s * scale).collect();
        prop_assert!((crps_mc(&scaled, y * scale).unwrap() - scale * base).abs() < 1e-9 * (1.0 + scale * base));
    }

    #[test]
    fn scores_nonnegative(samples in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..20),
                          y in prop::collection::vec(-5.0f64..5.0, 3)) {
        prop_assert!(energy_score_mc(&samples, &y).unwrap() >= 0.0);
        let col: Vec<f64> = samples.iter().map(|s| s[0]).collect();
        prop_assert!(crps_mc(&col, y[0]).unwrap() >= 0.0);
    }

    #[test]
    fn zero_only_at_point_mass(v in -5.0f64..5.0, d in 0.01f64..3.0) {
        prop_assert_eq!(crps_mc(&[v, v, v], v).unwrap(), 0.0);
        prop_assert!(crps_mc(&[v, v, v], v + d).unwrap() > 0.0);
        prop_assert!(crps_mc(&[v, v + d], v).unwrap() > 0.0);
    }
}
