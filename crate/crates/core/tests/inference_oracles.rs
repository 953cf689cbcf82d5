use nalgebra::{DMatrix, DVector};
use qpgp_core::geometry::SpaceTimePoint;
use qpgp_core::inference::{
    beta_conditional, gibbs_beta, gibbs_tau2, initial_state, log_posterior, metropolis_accept,
    run_mcmc, tau2_conditional, update_w, ChainState, McmcConfig, ModelData, Priors,
};
use qpgp_core::kernels::{catalog, gram, Family, KernelSpec};
use qpgp_core::nngp::{build_neighbors, factors, NeighborGraph, NeighborSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

fn points(n: usize, seed: u64) -> Vec<SpaceTimePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            SpaceTimePoint::new(
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..30.0),
                rng.random_range(0.0..200.0),
            )
        })
        .collect()
}

fn design(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, 3, |_, j| if j == 0 { 1.0 } else { rng.random_range(-1.0..1.0) })
}

fn dense_gauss(c: &DMatrix<f64>, w: &[f64]) -> f64 {
    let l = c.clone().cholesky().unwrap().l();
    let z = l.solve_lower_triangular(&DVector::from_column_slice(w)).unwrap();
    let logdet: f64 = 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (w.len() as f64 * LN_2PI + logdet + z.norm_squared())
}

fn ig_log(x: f64, a: f64, b: f64) -> f64 {
    // ln Γ(2.1) computed independently of the library
    let ln_gamma_a = if (a - 2.1).abs() < 1e-12 { 0.045_437_738_544_485_2 } else { panic!() };
    a * b.ln() - ln_gamma_a - (a + 1.0) * x.ln() - b / x
}

fn state(n: usize, kernel: KernelSpec, tau2: f64) -> ChainState {
    ChainState {
        beta: vec![0.0; 3],
        w: vec![0.0; n],
        tau2,
        kernel,
    }
}

#[test]
fn log_posterior_zero_data_direct_sum() {
    let n = 12;
    let pts = points(n, 1);
    let data = ModelData::new(&pts, &vec![0.0; n], &design(n, 2)).unwrap();
    // prior modes: IG(2.1, 10) mode = 10 / 3.1
    let mode = 10.0 / 3.1;
    let kernel = KernelSpec::new(Family::MaternSpace, &[("c_s", 5.0)], mode).unwrap();
    let s = state(n, kernel.clone(), mode);
    let graph = NeighborGraph::complete(n);
    let lp = log_posterior(&s, &data, &graph, &Priors::default()).unwrap();

    let lik = n as f64 * (-0.5 * LN_2PI - 0.5 * mode.ln());
    let c = gram(&kernel, data.reference.points(), 0.0).unwrap().into_inner();
    let latent = dense_gauss(&c, &vec![0.0; n]);
    let beta = 3.0 * (-0.5 * (2.0 * std::f64::consts::PI * 1e3).ln());
    // Gamma(0.01, 0.01) at c_s = 5, ln Γ(0.01) = 4.599479878042022
    let cs = 0.01 * 0.01f64.ln() - 4.599_479_878_042_022 - 0.99 * 5f64.ln() - 0.05;
    let expected = lik + latent + 2.0 * ig_log(mode, 2.1, 10.0) + beta + cs;
    assert!(lp.is_finite());
    assert!((lp - expected).abs() < 1e-6 * expected.abs(), "{lp} vs {expected}");
}

#[test]
fn log_posterior_outside_support() {
    let n = 5;
    let data = ModelData::new(&points(n, 3), &vec![1.0; n], &design(n, 4)).unwrap();
    let graph = NeighborGraph::complete(n);
    let s = state(n, catalog::table2_model7(), 0.0);
    assert_eq!(log_posterior(&s, &data, &graph, &Priors::default()).unwrap(), f64::NEG_INFINITY);
    let s = state(n, catalog::table2_model7().with_sigma2(0.0).unwrap(), 1.0);
    assert_eq!(log_posterior(&s, &data, &graph, &Priors::default()).unwrap(), f64::NEG_INFINITY);
}

#[test]
fn log_posterior_matches_dense_gp() {
    let n = 100;
    let pts = points(n, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..9.0)).collect();
    let data = ModelData::new(&pts, &y, &design(n, 7)).unwrap();
    let kernel = catalog::table2_model7();
    let mut s = state(n, kernel.clone(), 0.3);
    s.beta = vec![7.0, 0.1, -0.2];
    s.w = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let graph = build_neighbors(&data.reference, &NeighborSpec::full(n)).unwrap();
    let priors = Priors::default();
    let lp = log_posterior(&s, &data, &graph, &priors).unwrap();

    let c = gram(&kernel, data.reference.points(), 0.0).unwrap().into_inner();
    let lik: f64 = (0..n)
        .map(|i| {
            let r = data.y[i] - data.mean_at(i, &s.beta) - s.w[i];
            -0.5 * LN_2PI - 0.5 * s.tau2.ln() - 0.5 * r * r / s.tau2
        })
        .sum();
    let prior = priors.log_tau2(s.tau2) + priors.log_sigma2(s.sigma2()) + priors.log_kernel(&kernel) + priors.log_beta(&s.beta);
    let expected = lik + dense_gauss(&c, &s.w) + prior;
    assert!((lp - expected).abs() < 1e-6 * expected.abs(), "{lp} vs {expected}");
}

#[test]
fn beta_update_edge_cases() {
    let n = 20;
    let pts = points(n, 8);
    let x = DMatrix::from_element(n, 1, 1.0);
    let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
    let data = ModelData::new(&pts, &y, &x).unwrap();
    let mut s = state(n, catalog::table2_model7(), 0.01);
    s.beta = vec![0.0];
    s.w = data.y.clone();
    let cond = beta_conditional(&s, &data, &Priors::default());
    assert!(cond.mean[0].abs() < 1e-12);

    // noise variance so large the prior dominates
    s.tau2 = 1e12;
    s.w = vec![0.0; n];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws: Vec<f64> = (0..4000).map(|_| gibbs_beta(&s, &data, &Priors::default(), &mut rng)[0]).collect();
    let m = draws.iter().sum::<f64>() / 4000.0;
    let v = draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / 3999.0;
    assert!(m.abs() < 3.0 * (1e3f64 / 4000.0).sqrt(), "{m}");
    assert!((v / 1e3 - 1.0).abs() < 0.1, "{v}");
}

#[test]
fn beta_draws_match_conjugate_moments() {
    let n = 50;
    let pts = points(n, 9);
    let x = design(n, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 + 0.5 * x[(i, 1)] - x[(i, 2)] + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let data = ModelData::new(&pts, &y, &x).unwrap();
    let mut s = state(n, catalog::table2_model7(), 0.09);
    s.w = (0..n).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();

    // closed form from the reordered data, computed with an explicit inverse
    let xr = &data.x;
    let prec = xr.transpose() * xr / s.tau2 + DMatrix::identity(3, 3) / 1e3;
    let cov = prec.clone().try_inverse().unwrap();
    let r = DVector::from_iterator(n, (0..n).map(|i| data.y[i] - s.w[i]));
    let mean = &cov * (xr.transpose() * r) / s.tau2;

    let m = 10_000;
    let draws: Vec<Vec<f64>> = (0..m).map(|_| gibbs_beta(&s, &data, &Priors::default(), &mut rng)).collect();
    for k in 0..3 {
        let emp = draws.iter().map(|d| d[k]).sum::<f64>() / m as f64;
        let se = (cov[(k, k)] / m as f64).sqrt();
        assert!((emp - mean[k]).abs() < 3.0 * se, "beta {k}: {emp} vs {}", mean[k]);
        let var = draws.iter().map(|d| (d[k] - emp).powi(2)).sum::<f64>() / (m - 1) as f64;
        assert!((var / cov[(k, k)] - 1.0).abs() < 0.05);
    }
}

#[test]
fn tau2_conditional_cases() {
    let priors = Priors::default();
    let n = 10;
    let data = ModelData::new(&points(n, 12), &vec![3.0; n], &design(n, 13)).unwrap();
    let mut s = state(n, catalog::table2_model7(), 1.0);
    s.w = vec![3.0; n];
    assert_eq!(tau2_conditional(&s, &data, &priors), (2.1 + 5.0, 10.0));

    let empty = ModelData::new(&[], &[], &DMatrix::zeros(0, 3)).unwrap();
    let s0 = state(0, catalog::table2_model7(), 1.0);
    assert_eq!(tau2_conditional(&s0, &empty, &priors), (2.1, 10.0));
}

#[test]
fn tau2_draws_match_inverse_gamma_moments() {
    let priors = Priors::default();
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let data = ModelData::new(&points(n, 15), &y, &design(n, 16)).unwrap();
    let s = state(n, catalog::table2_model7(), 1.0);
    let ssr: f64 = data.y.iter().map(|v| v * v).sum();
    let (a, b) = (2.1 + 20.0, 10.0 + ssr / 2.0);
    let mean = b / (a - 1.0);
    let var = b * b / ((a - 1.0).powi(2) * (a - 2.0));
    let m = 10_000;
    let draws: Vec<f64> = (0..m).map(|_| gibbs_tau2(&s, &data, &priors, &mut rng)).collect();
    let emp = draws.iter().sum::<f64>() / m as f64;
    assert!((emp - mean).abs() < 3.0 * (var / m as f64).sqrt(), "{emp} vs {mean}");
    let emp_var = draws.iter().map(|d| (d - emp).powi(2)).sum::<f64>() / (m - 1) as f64;
    assert!((emp_var / var - 1.0).abs() < 0.1);
}

#[test]
fn w_update_single_node() {
    let data = ModelData::new(&points(1, 17), &[2.0], &DMatrix::from_element(1, 1, 1.0)).unwrap();
    let kernel = KernelSpec::new(Family::MaternSpace, &[("c_s", 1.0)], 1.5).unwrap();
    let mut s = ChainState { beta: vec![0.5], w: vec![0.0], tau2: 0.5, kernel: kernel.clone() };
    let graph = NeighborGraph::complete(1);
    let f = factors(&graph, &data.reference, &kernel).unwrap();
    let children = graph.children();
    let prec = 1.0 / 0.5 + 1.0 / 1.5;
    let mean = (1.5 / 0.5) / prec;
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let m = 20_000;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..m {
        update_w(&mut s, &data, &f, &children, &mut rng);
        sum += s.w[0];
        sq += s.w[0] * s.w[0];
    }
    let emp = sum / m as f64;
    let var = sq / m as f64 - emp * emp;
    assert!((emp - mean).abs() < 3.0 * (1.0 / prec / m as f64).sqrt());
    assert!((var * prec - 1.0).abs() < 0.05);
}

#[test]
fn w_update_tracks_data_as_noise_vanishes() {
    let n = 15;
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(4.0..8.0)).collect();
    let data = ModelData::new(&points(n, 20), &y, &design(n, 21)).unwrap();
    let kernel = catalog::table2_model7();
    let mut s = state(n, kernel.clone(), 1e-10);
    s.beta = vec![5.0, 0.2, 0.1];
    let graph = NeighborGraph::complete(n);
    let f = factors(&graph, &data.reference, &kernel).unwrap();
    update_w(&mut s, &data, &f, &graph.children(), &mut rng);
    for i in 0..n {
        let target = data.y[i] - data.mean_at(i, &s.beta);
        assert!((s.w[i] - target).abs() < 1e-3, "{i}");
    }
}

#[test]
fn w_chain_matches_dense_conjugate_posterior() {
    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = ModelData::new(&points(n, 23), &y, &DMatrix::from_element(n, 1, 1.0)).unwrap();
    let kernel = catalog::table2_model7().with_sigma2(1.0).unwrap();
    let tau2 = 0.2;
    let mut s = ChainState { beta: vec![0.0], w: vec![0.0; n], tau2, kernel: kernel.clone() };
    let graph = NeighborGraph::complete(n);
    let f = factors(&graph, &data.reference, &kernel).unwrap();
    let children = graph.children();

    let c = gram(&kernel, data.reference.points(), 0.0).unwrap().into_inner();
    let prec = c.clone().try_inverse().unwrap() + DMatrix::identity(n, n) / tau2;
    let post_cov = prec.try_inverse().unwrap();
    let post_mean = &post_cov * DVector::from_column_slice(&data.y) / tau2;

    let sweeps = 20_000;
    let mut trace = vec![Vec::with_capacity(sweeps); n];
    for _ in 0..500 {
        update_w(&mut s, &data, &f, &children, &mut rng);
    }
    for _ in 0..sweeps {
        update_w(&mut s, &data, &f, &children, &mut rng);
        for i in 0..n {
            trace[i].push(s.w[i]);
        }
    }
    for i in 0..n {
        let (m, se) = batch_means(&trace[i]);
        assert!((m - post_mean[i]).abs() < 3.0 * se + 1e-3, "node {i}: {m} vs {} (se {se})", post_mean[i]);
    }
}

fn batch_means(x: &[f64]) -> (f64, f64) {
    let b = 50;
    let size = x.len() / b;
    let means: Vec<f64> = (0..b).map(|k| x[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let m = means.iter().sum::<f64>() / b as f64;
    let v = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (b - 1) as f64;
    (m, (v / b as f64).sqrt())
}

#[test]
fn metropolis_edge_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..10_000 {
        assert!(metropolis_accept(-3.0, -3.0, &mut rng));
        assert!(!metropolis_accept(f64::NEG_INFINITY, -3.0, &mut rng));
    }
}

fn small_problem(n_hours: usize, seed: u64) -> (ModelData, NeighborGraph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stations: Vec<(f64, f64)> = (0..4).map(|_| (rng.random_range(0.0..20.0), rng.random_range(0.0..20.0))).collect();
    let mut pts = Vec::new();
    for t in 0..n_hours {
        for &(x, y) in &stations {
            pts.push(SpaceTimePoint::new(x, y, t as f64));
        }
    }
    let n = pts.len();
    let kernel = catalog::table2_model7().with_sigma2(1.0).unwrap();
    let c = gram(&kernel, &pts, 0.1).unwrap().into_inner();
    let l = c.cholesky().unwrap().l();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let e = l * z;
    let x = DMatrix::from_element(n, 1, 1.0);
    let y: Vec<f64> = (0..n).map(|i| 3.0 + e[i]).collect();
    let data = ModelData::new(&pts, &y, &x).unwrap();
    let graph = build_neighbors(&data.reference, &NeighborSpec::default()).unwrap();
    (data, graph)
}

#[test]
fn adaptive_acceptance_in_range() {
    let (data, graph) = small_problem(15, 25);
    let cfg = McmcConfig { iterations: 20_000, burn_in: 5_000, seed: 3, keep_w: false, ..McmcConfig::default() };
    let draws = run_mcmc(&data, &graph, &catalog::table2_model7(), &cfg).unwrap();
    let a = draws.meta.acceptance_sampling;
    assert!((0.1..=0.5).contains(&a), "acceptance {a}");
    assert_eq!(draws.len(), 15_000);
}

#[test]
fn burn_in_only_and_determinism() {
    let (data, graph) = small_problem(6, 26);
    let k = catalog::table2_model7();
    let cfg = McmcConfig { iterations: 50, burn_in: 50, ..McmcConfig::default() };
    assert!(run_mcmc(&data, &graph, &k, &cfg).unwrap().is_empty());
    let cfg = McmcConfig { iterations: 120, burn_in: 20, thin: 3, ..McmcConfig::default() };
    let a = run_mcmc(&data, &graph, &k, &cfg).unwrap();
    let b = run_mcmc(&data, &graph, &k, &cfg).unwrap();
    assert_eq!(a.len(), 33);
    assert_eq!(a, b);
    let other = run_mcmc(&data, &graph, &k, &McmcConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.rows, other.rows);
}

#[test]
fn draws_csv_roundtrip() {
    let (data, graph) = small_problem(6, 27);
    let cfg = McmcConfig { iterations: 30, burn_in: 10, ..McmcConfig::default() };
    let d = run_mcmc(&data, &graph, &catalog::table2_model7(), &cfg).unwrap();
    let mut p = Vec::new();
    let mut w = Vec::new();
    d.write_csv(&mut p).unwrap();
    d.write_w_csv(&mut w, &data.reference).unwrap();
    let back = qpgp_core::inference::PosteriorDraws::read_csv(
        p.as_slice(), Some(w.as_slice()), d.kernel.clone(), 1, d.meta.clone(), &data.reference,
    ).unwrap();
    assert_eq!(back, d);
    let s = d.state(3).unwrap();
    assert_eq!(s.kernel.sigma2(), d.column("sigma2").unwrap()[3]);
    let init = initial_state(&data, &catalog::table2_model7()).unwrap();
    assert_eq!(init.kernel.param("alpha"), Some(1.0));
}
