use minimax_core::closed_form::{self, dicker_functional, markov_phi};
use minimax_core::ensembles::{gram_ensemble, markov_m_matrix, DesignSampler, ScalingFunction};
use minimax_core::estimator::RidgeEstimator;
use minimax_core::experiments::{figure1, Figure1Config};
use minimax_core::functional::{self, maximize_phi, OptimizerOptions};
use minimax_core::linalg::{self, Mat};
use minimax_core::{EllipticalProblem, PriorCovariance};

#[test]
fn isotropic_prior_reproduces_dicker_functional() {
    let (n, d, rho, sigma, seed) = (10, 3, 2.0, 0.5, 17);
    let p = EllipticalProblem::isotropic(d, rho, sigma).unwrap();
    let e = gram_ensemble(&DesignSampler::Gaussian { n, d }, 300, sigma, seed).unwrap();
    let iso = PriorCovariance::new(&p, linalg::identity(d) * (rho * rho / d as f64)).unwrap();
    let phi = functional::objective(&e, &p, &iso).unwrap();
    let dicker = dicker_functional(n, d, rho, sigma, 300, seed).unwrap();
    // same draws, so the match is exact up to rounding
    assert!((phi * n as f64 / (sigma * sigma) - dicker.mean).abs() < 1e-10 * dicker.mean);
    let opt = maximize_phi(&p, &e, &OptimizerOptions::default()).unwrap();
    assert!(opt.value >= phi);
    assert!(opt.value <= phi * 1.02);
}

#[test]
fn iid_chain_matches_one_dimensional_dicker() {
    let (t, rho, sigma) = (12usize, 3.0, 1.0);
    let r = ScalingFunction::Iid.ratios(t).unwrap();
    let m = markov_m_matrix(&r);
    assert!((m - linalg::identity(t)).amax() < 1e-14);
    let chain = markov_phi(&linalg::identity(t), rho, sigma, 20_000, 1).unwrap();
    let dicker = dicker_functional(t, 1, rho, sigma, 20_000, 2).unwrap();
    let scaled = chain.scaled(t as f64 / (sigma * sigma));
    let se = (scaled.stderr.powi(2) + dicker.stderr.powi(2)).sqrt();
    assert!((scaled.mean - dicker.mean).abs() < 4.0 * se, "{scaled:?} vs {dicker:?}");
}

#[test]
fn markov_design_ensemble_matches_chain_functional() {
    // a one-dimensional chain design has Gram zᵀMz, so the scalar problem reduces to markov_phi
    let (t, rho, sigma) = (15usize, 5.0, 1.0);
    let psi = ScalingFunction::Linear;
    let sampler = DesignSampler::Markov { psi: "t+1".into(), t_len: t };
    let p = EllipticalProblem::isotropic(1, rho, sigma).unwrap();
    let e = gram_ensemble(&sampler, 20_000, sigma, 9).unwrap();
    let omega = PriorCovariance::new(&p, Mat::from_element(1, 1, rho * rho)).unwrap();
    let a = functional::objective_estimate(&e, &p, &omega).unwrap();
    let b = markov_phi(&markov_m_matrix(&psi.ratios(t).unwrap()), rho, sigma, 20_000, 10).unwrap();
    let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 4.0 * se, "{a:?} vs {b:?}");
}

#[test]
fn minimax_ridge_risk_tracks_functional() {
    let p = EllipticalProblem::new(
        Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]),
        1.5,
        1.0,
    )
    .unwrap();
    let e = gram_ensemble(&DesignSampler::Gaussian { n: 6, d: 2 }, 100, 1.0, 21).unwrap();
    let opt = maximize_phi(&p, &e, &OptimizerOptions::default()).unwrap();
    let est = RidgeEstimator::new(&p, opt.maximizer.clone()).unwrap();
    let wc = est.worst_case_risk(&e).unwrap();
    assert!((wc.risk / opt.value - 1.0).abs() < 1e-4);
    let wc_other = RidgeEstimator::new(&p, p.isotropic_prior()).unwrap().worst_case_risk(&e).unwrap();
    assert!(wc_other.risk >= wc.risk * (1.0 - 1e-6));
}

#[test]
fn kernel_and_sequence_waterfill_agree_on_diagonal_problems() {
    // a_j = 1/√μ_j and ε² = σ²/n give the same level equation; the sequence risk is (σ²/n) d̄*
    let mu = vec![1.0, 0.5, 0.2, 0.05];
    let (n, rho, sigma) = (20.0, 1.0, 0.7);
    let k = closed_form::kernel_waterfill(&closed_form::Spectrum::Explicit(mu.clone()), n, rho, sigma).unwrap();
    let eps = sigma / f64::sqrt(n);
    let seq = closed_form::SequenceProblem::new(vec![eps; mu.len()], mu.iter().map(|m| 1.0 / m.sqrt()).collect(), rho).unwrap();
    let s = closed_form::pinsker_waterfill(&seq).unwrap();
    assert!((eps * eps * k.value - s.value).abs() < 1e-10 * s.value, "{} vs {}", k.value, s.value);
    assert!((k.level * s.level - 1.0).abs() < 1e-10);
    assert_eq!(k.active_set_size, s.active_set_size);
}

#[test]
fn upper_bound_grows_with_atom_mass() {
    let cfg = Figure1Config {
        n_list: vec![64],
        tau_list: vec![10.0],
        lambda_list: vec![0.0, 0.5, 0.9, 0.99],
        gamma_grid: vec![1.0],
        replicates: 20,
        seed: 5,
    };
    let rows = figure1(&cfg).unwrap();
    assert!(rows.windows(2).all(|w| w[1].u > w[0].u), "{rows:?}");
}
