//! The ridge (posterior-mean) estimator `θ̂ = (Ω^{-1} + XᵀΣ_w^{-1}X)^{-1} XᵀΣ_w^{-1} y`
//! attached to a prior `Ω`, and its worst-case, Monte Carlo and Bayes risks.
//!
//! These routines work in original coordinates with an explicit Cholesky
//! factor of `Ω^{-1} + G`, independently of the whitened factor form used by
//! the functional.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensembles::{DesignMatrix, DesignSampler, GramEnsemble};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::problem::{EllipticalProblem, NoiseModel, PriorCovariance};
use crate::rng;
use crate::stats::Estimate;

#[derive(Debug, Clone)]
pub struct RidgeEstimator {
    prior: PriorCovariance,
    problem: EllipticalProblem,
    omega_inv: Mat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorstCaseRisk {
    /// `ρ² λ_max(K_c^{1/2} B̄ K_c^{1/2}) + ν`.
    pub risk: f64,
    /// `ρ² λ_max(K_c^{1/2} B̄ K_c^{1/2})`.
    pub bias: f64,
    /// `ν = E tr(K_e^{1/2} C G C K_e^{1/2})`.
    pub noise: f64,
    /// A parameter on the boundary of the ellipse attaining the bias term.
    pub direction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRisk {
    pub risk: Estimate,
    /// Whether `‖θ*‖_{K_c^{-1}} ≤ ρ`; outside the ellipse the worst-case bound does not apply.
    pub theta_feasible: bool,
}

impl RidgeEstimator {
    pub fn new(problem: &EllipticalProblem, prior: PriorCovariance) -> Result<Self> {
        if prior.matrix().nrows() != problem.dim() {
            return Err(Error::DimensionMismatch {
                name: "Omega",
                expected: format!("{0}x{0}", problem.dim()),
                found: format!("{0}x{0}", prior.matrix().nrows()),
            });
        }
        if !prior.is_feasible(problem) {
            return Err(Error::invalid("Omega", "prior is not feasible for the problem"));
        }
        // Ω^{-1} = K_c^{-1/2} Ω̃^{-1} K_c^{-1/2}, inverting the floored whitened spectrum.
        let floor = prior.floor();
        let inv_w = linalg::sym_apply(prior.whitened(), |x| 1.0 / x.max(floor));
        let omega_inv = linalg::symmetrize(&(problem.kc_inv_sqrt() * inv_w * problem.kc_inv_sqrt()));
        Ok(RidgeEstimator {
            prior,
            problem: problem.clone(),
            omega_inv,
        })
    }

    pub fn prior(&self) -> &PriorCovariance {
        &self.prior
    }

    pub fn problem(&self) -> &EllipticalProblem {
        &self.problem
    }

    fn check_dim(&self, name: &'static str, len: usize) -> Result<()> {
        if len != self.problem.dim() {
            return Err(Error::DimensionMismatch {
                name,
                expected: format!("dimension {}", self.problem.dim()),
                found: len.to_string(),
            });
        }
        Ok(())
    }

    /// `C = (Ω^{-1} + G)^{-1}`.
    pub fn posterior_covariance(&self, g: &Mat) -> Result<Mat> {
        self.check_dim("G", g.nrows())?;
        let chol = linalg::cholesky("Omega^-1 + G", &(&self.omega_inv + g))?;
        Ok(linalg::symmetrize(&chol.inverse()))
    }

    /// `θ̂ = (Ω^{-1} + G)^{-1} b` from the sufficient statistics `G = XᵀΣ_w^{-1}X`, `b = XᵀΣ_w^{-1}y`.
    pub fn fit_sufficient(&self, g: &Mat, b: &Vector) -> Result<Vector> {
        self.check_dim("G", g.nrows())?;
        self.check_dim("b", b.len())?;
        let chol = linalg::cholesky("Omega^-1 + G", &(&self.omega_inv + g))?;
        Ok(chol.solve(b))
    }

    /// Estimate from a design and responses, weighting by the problem's noise model.
    pub fn fit(&self, x: &DesignMatrix, y: &Vector) -> Result<Vector> {
        self.check_dim("X columns", x.cols())?;
        let noise = self.problem.noise();
        self.fit_sufficient(&noise.gram(x.matrix())?, &noise.weighted_response(x.matrix(), y)?)
    }

    /// Residual `‖(Ω^{-1} + G) θ − b‖ / ‖b‖` of the normal equations.
    pub fn normal_residual(&self, g: &Mat, b: &Vector, theta: &Vector) -> f64 {
        let r = (&self.omega_inv + g) * theta - b;
        r.norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    /// Supremum of the risk over the ellipse for the ensemble's design law.
    ///
    /// The bias matrix `B̄ = E[(CG − I)ᵀ K_e (CG − I)]` and the variance
    /// `ν = E tr(K_e C G C)` are averaged over the members; the supremum of
    /// `θᵀB̄θ` over `‖θ‖_{K_c^{-1}} ≤ ρ` is the top eigenvalue of the whitened
    /// bias matrix, found by a full symmetric eigendecomposition.
    pub fn worst_case_risk(&self, ensemble: &GramEnsemble) -> Result<WorstCaseRisk> {
        self.check_dim("ensemble", ensemble.dim())?;
        let d = self.problem.dim();
        let ke = self.problem.ke();
        let parts = ensemble
            .grams()
            .par_iter()
            .map(|g| {
                let c = self.posterior_covariance(g)?;
                let dm = &c * g - Mat::identity(d, d);
                let bias = dm.transpose() * ke * &dm;
                let noise = (ke * &c * g * &c).trace();
                Ok((bias, noise))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = parts.len() as f64;
        let (mut bias, mut noise) = (Mat::zeros(d, d), 0.0);
        for (b, v) in parts {
            bias += b;
            noise += v;
        }
        let bias = bias / n;
        let noise = noise / n;
        let kcs = self.problem.kc_sqrt();
        let (values, vectors) = linalg::sym_eigen(&(kcs * &bias * kcs));
        let top = values[d - 1];
        let rho = self.problem.rho();
        let direction = kcs * vectors.column(d - 1) * rho;
        Ok(WorstCaseRisk {
            risk: rho * rho * top + noise,
            bias: rho * rho * top,
            noise,
            direction: direction.iter().copied().collect(),
        })
    }

    /// `E ‖θ̂ − θ*‖²_{K_e}` over fresh designs from `sampler` and Gaussian noise of level `sigma`.
    ///
    /// Trial `i` draws its design with seed `sub_seed(seed, 2i)` and its noise from `sub_stream(seed, 2i + 1)`.
    pub fn mc_risk(&self, theta_star: &Vector, sampler: &DesignSampler, sigma: f64, trials: usize, seed: u64) -> Result<McRisk> {
        self.check_dim("theta_star", theta_star.len())?;
        if !(sigma >= 0.0) {
            return Err(Error::invalid("sigma", format!("must be nonnegative, got {sigma}")));
        }
        if trials < 2 {
            return Err(Error::invalid("trials", "needs at least 2 trials"));
        }
        let losses = (0..trials as u64)
            .into_par_iter()
            .map(|i| {
                let x = sampler.sample(rng::sub_seed(seed, 2 * i))?;
                let mut s = rng::sub_stream(seed, 2 * i + 1);
                let mut y = x.matrix() * theta_star;
                y.iter_mut().for_each(|v| *v += sigma * rng::normal(&mut s));
                let err = self.fit(&x, &y)? - theta_star;
                Ok(self.problem.error_norm_sq(&err))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(McRisk {
            risk: Estimate::from_samples(&losses),
            theta_feasible: self.problem.constraint_norm(theta_star) <= self.problem.rho() * (1.0 + 1e-12),
        })
    }

    /// Bayes risk under `θ* ~ N(0, Ω)` with the prior `Ω` of this estimator.
    ///
    /// Trial `t` uses ensemble member `t mod N` and the sufficient statistic
    /// `b ~ N(Gθ*, G)`, which is the law of `XᵀΣ_w^{-1}y` given the design.
    pub fn bayes_oracle_risk(&self, ensemble: &GramEnsemble, trials: usize, seed: u64) -> Result<Estimate> {
        self.check_dim("ensemble", ensemble.dim())?;
        if trials < 2 {
            return Err(Error::invalid("trials", "needs at least 2 trials"));
        }
        let d = self.problem.dim();
        let prior_factor = self.problem.kc_sqrt() * self.prior.whitened_sqrt();
        let members = ensemble
            .grams()
            .par_iter()
            .map(|g| Ok((self.posterior_covariance(g)?, linalg::psd_sqrt(g))))
            .collect::<Result<Vec<_>>>()?;
        let losses: Vec<f64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let (c, g_sqrt) = &members[t % members.len()];
                let g = &ensemble.grams()[t % members.len()];
                let mut s = rng::sub_stream(seed, t as u64);
                let z = Vector::from_iterator(d, (0..d).map(|_| rng::normal(&mut s)));
                let w = Vector::from_iterator(d, (0..d).map(|_| rng::normal(&mut s)));
                let theta = &prior_factor * z;
                let b = g * &theta + g_sqrt * w;
                let err = c * b - theta;
                self.problem.error_norm_sq(&err)
            })
            .collect();
        Ok(Estimate::from_samples(&losses))
    }

    /// JSON export: `{Omega, problem_hash}`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "Omega": linalg::to_rows(self.prior.matrix()),
            "problem_hash": format!("{:016x}", problem_hash(&self.problem)),
        })
    }
}

/// Bayes risk of the posterior mean for prior `Ω`; see [`RidgeEstimator::bayes_oracle_risk`].
pub fn bayes_oracle_risk(
    problem: &EllipticalProblem,
    omega: &PriorCovariance,
    ensemble: &GramEnsemble,
    trials: usize,
    seed: u64,
) -> Result<Estimate> {
    RidgeEstimator::new(problem, omega.clone())?.bayes_oracle_risk(ensemble, trials, seed)
}

/// FNV-1a over the bit patterns of `K_e`, `K_c`, `ρ` and the noise parameters.
pub fn problem_hash(problem: &EllipticalProblem) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |v: f64| {
        for byte in v.to_bits().to_le_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(problem.dim() as f64);
    problem.ke().iter().for_each(|v| eat(*v));
    problem.kc().iter().for_each(|v| eat(*v));
    eat(problem.rho());
    match problem.noise() {
        NoiseModel::Isotropic { sigma } => eat(*sigma),
        NoiseModel::Diagonal { variances } => variances.iter().for_each(|v| eat(*v)),
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{gram_ensemble, sample_gaussian_design};
    use crate::functional::{self, maximize_phi, OptimizerOptions};
    use proptest::prelude::*;

    fn setup(d: usize, rho: f64) -> (EllipticalProblem, RidgeEstimator) {
        let p = EllipticalProblem::isotropic(d, rho, 1.0).unwrap();
        let est = RidgeEstimator::new(&p, p.isotropic_prior()).unwrap();
        (p, est)
    }

    #[test]
    fn zero_response_gives_zero() {
        let (_, est) = setup(3, 1.0);
        let x = sample_gaussian_design(5, 3, 1).unwrap();
        assert_eq!(est.fit(&x, &Vector::zeros(5)).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn large_prior_approaches_least_squares() {
        let p = EllipticalProblem::isotropic(3, 1e3, 1.0).unwrap();
        let est = RidgeEstimator::new(&p, PriorCovariance::new(&p, linalg::identity(3) * 1e6 / 3.0).unwrap()).unwrap();
        let x = sample_gaussian_design(10, 3, 2).unwrap();
        let mut s = rng::stream(3);
        let y = Vector::from_iterator(10, (0..10).map(|_| rng::normal(&mut s)));
        let xm = x.matrix();
        let ols = (xm.transpose() * xm).cholesky().unwrap().solve(&(xm.transpose() * &y));
        assert!((est.fit(&x, &y).unwrap() - ols).amax() < 1e-3);
    }

    #[test]
    fn matches_stacked_least_squares() {
        // argmin ‖y − Xθ‖²/σ² + θᵀΩ^{-1}θ as an ordinary least-squares problem
        // on the stacked system [X/σ; Ω^{-1/2}] θ ≈ [y/σ; 0], solved by QR.
        let sigma = 0.7;
        let p = EllipticalProblem::new(linalg::identity(3), linalg::diag(&[2.0, 1.0, 0.5]), 1.5, sigma).unwrap();
        let prior = p.feasible_project(&Mat::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 0.3]));
        let est = RidgeEstimator::new(&p, prior.clone()).unwrap();
        let x = sample_gaussian_design(6, 3, 4).unwrap();
        let mut s = rng::stream(5);
        let y = Vector::from_iterator(6, (0..6).map(|_| rng::normal(&mut s)));
        let oi_sqrt = linalg::sym_apply(prior.matrix(), |v| 1.0 / v.sqrt());
        let mut stacked = Mat::zeros(9, 3);
        stacked.view_mut((0, 0), (6, 3)).copy_from(&(x.matrix() / sigma));
        stacked.view_mut((6, 0), (3, 3)).copy_from(&oi_sqrt);
        let mut rhs = Vector::zeros(9);
        rhs.rows_mut(0, 6).copy_from(&(&y / sigma));
        let qr = stacked.qr();
        let oracle = qr.r().solve_upper_triangular(&(qr.q().transpose() * rhs)).unwrap();
        let ours = est.fit(&x, &y).unwrap();
        assert!((&ours - &oracle).amax() < 1e-10 * oracle.amax());
        let g = p.noise().gram(x.matrix()).unwrap();
        let b = p.noise().weighted_response(x.matrix(), &y).unwrap();
        assert!(est.normal_residual(&g, &b, &ours) < 1e-10);
    }

    #[test]
    fn pure_bias_cases() {
        let (p, est) = setup(2, 1.5);
        let zero = GramEnsemble::from_grams(vec![Mat::zeros(2, 2)], 1, 1.0).unwrap();
        let wc = est.worst_case_risk(&zero).unwrap();
        assert!((wc.risk - 2.25).abs() < 1e-12 && wc.noise == 0.0);

        // tiny prior: C ≈ 0, risk ≈ ρ² λ_max(K_c^{1/2} K_e K_c^{1/2})
        let ke = linalg::diag(&[3.0, 1.0]);
        let kc = linalg::diag(&[0.5, 2.0]);
        let p2 = EllipticalProblem::new(ke, kc, 1.0, 1.0).unwrap();
        let tiny = RidgeEstimator::new(&p2, PriorCovariance::new(&p2, linalg::identity(2) * 1e-12).unwrap()).unwrap();
        let e = gram_ensemble(&DesignSampler::Gaussian { n: 5, d: 2 }, 10, 1.0, 6).unwrap();
        let wc = tiny.worst_case_risk(&e).unwrap();
        assert!((wc.risk - 2.0).abs() < 1e-8, "{wc:?}");
        let _ = p;
    }

    #[test]
    fn saddle_at_the_maximizer() {
        let p = EllipticalProblem::isotropic(3, 2.0, 1.0).unwrap();
        let e = gram_ensemble(&DesignSampler::Gaussian { n: 4, d: 3 }, 30, 1.0, 7).unwrap();
        let res = maximize_phi(&p, &e, &OptimizerOptions::default()).unwrap();
        let est = RidgeEstimator::new(&p, res.maximizer.clone()).unwrap();
        let wc = est.worst_case_risk(&e).unwrap();
        assert!((wc.risk / res.value - 1.0).abs() < 0.02, "{} {}", wc.risk, res.value);
        assert!((wc.risk - res.value - res.duality_gap).abs() < 1e-8 * res.value);
        let nu = functional::noise_term(&e, &p, &res.maximizer).unwrap();
        assert!((nu - wc.noise).abs() < 1e-10 * nu);
    }

    #[test]
    fn mc_risk_decomposition() {
        let p = EllipticalProblem::isotropic(2, 1.0, 0.5).unwrap();
        let est = RidgeEstimator::new(&p, p.isotropic_prior()).unwrap();
        let sampler = DesignSampler::Gaussian { n: 6, d: 2 };
        let trials = 20_000;
        // variance term over the same designs the Monte Carlo loop draws
        let grams: Vec<Mat> = (0..trials as u64)
            .map(|i| p.noise().gram(sampler.sample(rng::sub_seed(9, 2 * i)).unwrap().matrix()).unwrap())
            .collect();
        let e = GramEnsemble::from_grams(grams, 6, 0.5).unwrap();
        let wc = est.worst_case_risk(&e).unwrap();
        let zero = est.mc_risk(&Vector::zeros(2), &sampler, 0.5, trials, 9).unwrap();
        assert!((zero.risk.mean - wc.noise).abs() < 3.0 * zero.risk.stderr, "{zero:?} {wc:?}");
        let top = Vector::from_vec(wc.direction.clone());
        let worst = est.mc_risk(&top, &sampler, 0.5, trials, 9).unwrap();
        assert!(worst.theta_feasible);
        assert!((worst.risk.mean - wc.risk).abs() < 3.0 * worst.risk.stderr, "{worst:?} {wc:?}");
    }

    #[test]
    fn noiseless_interpolation() {
        let p = EllipticalProblem::isotropic(2, 1e4, 1.0).unwrap();
        let est = RidgeEstimator::new(&p, p.isotropic_prior()).unwrap();
        let theta = Vector::from_vec(vec![0.3, -0.4]);
        let r = est.mc_risk(&theta, &DesignSampler::Gaussian { n: 6, d: 2 }, 0.0, 50, 1).unwrap();
        assert!(r.risk.mean < 1e-10);
    }

    #[test]
    fn scalar_bayes_risk() {
        let p = EllipticalProblem::isotropic(1, 1.0, 1.0).unwrap();
        let omega = PriorCovariance::new(&p, linalg::diag(&[0.8])).unwrap();
        let e = GramEnsemble::from_grams(vec![linalg::diag(&[2.5])], 1, 1.0).unwrap();
        let r = bayes_oracle_risk(&p, &omega, &e, 100_000, 3).unwrap();
        let exact = 0.8 / (1.0 + 0.8 * 2.5);
        assert!((r.mean - exact).abs() < 3.0 * r.stderr, "{r:?} {exact}");
    }

    #[test]
    fn json_export() {
        let (p, est) = setup(2, 1.0);
        let j = est.to_json();
        assert_eq!(j["Omega"][0][0], 0.5);
        assert_eq!(j["problem_hash"].as_str().unwrap().len(), 16);
        assert_ne!(problem_hash(&p), problem_hash(&p.with_radius(2.0).unwrap()));
    }

    proptest! {
        #[test]
        fn fit_is_linear(seed in any::<u64>()) {
            let (_, est) = setup(3, 1.0);
            let x = sample_gaussian_design(4, 3, seed).unwrap();
            let mut s = rng::stream(seed ^ 1);
            let y1 = Vector::from_iterator(4, (0..4).map(|_| rng::normal(&mut s)));
            let y2 = Vector::from_iterator(4, (0..4).map(|_| rng::normal(&mut s)));
            let lhs = est.fit(&x, &(&y1 + &y2)).unwrap();
            let rhs = est.fit(&x, &y1).unwrap() + est.fit(&x, &y2).unwrap();
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
