use qpgp_core::data::{simulate, SimulateConfig};
use qpgp_core::kernels::catalog;

#[test]
fn latent_variance_matches_kernel() {
    let cfg = SimulateConfig {
        n_stations: 3,
        hours: 24,
        ..SimulateConfig::default()
    };
    let sigma2 = catalog::table2_model7().sigma2();
    let seeds = 1000;
    let mut total = 0.0;
    for seed in 0..seeds {
        let (_, truth) = simulate(&cfg, seed).unwrap();
        total += truth.w.iter().map(|w| w * w).sum::<f64>() / truth.w.len() as f64;
    }
    let var = total / seeds as f64;
    assert!((var / sigma2 - 1.0).abs() < 0.1, "{var} vs {sigma2}");
}

#[test]
fn noise_variance_matches_tau2() {
    let cfg = SimulateConfig {
        n_stations: 4,
        hours: 48,
        ..SimulateConfig::default()
    };
    let mut resid = Vec::new();
    for seed in 0..50 {
        let (d, truth) = simulate(&cfg, seed).unwrap();
        let x = d.design();
        for (i, y) in d.response().iter().enumerate() {
            let mean: f64 = (0..x.ncols()).map(|k| x[(i, k)] * truth.beta[k]).sum();
            resid.push(y - mean - truth.w[i]);
        }
    }
    let var = resid.iter().map(|r| r * r).sum::<f64>() / resid.len() as f64;
    assert!((var / cfg.tau2 - 1.0).abs() < 0.1, "{var} vs {}", cfg.tau2);
}
