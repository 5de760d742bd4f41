//! The trace functional
//! `f(Ω) = E tr(K_e^{1/2} (Ω^{-1} + G)^{-1} K_e^{1/2})` over the ensemble, its
//! gradient, its maximization over `{Ω ≻ 0, tr(K_c^{-1/2} Ω K_c^{-1/2}) ≤ ρ²}`
//! and the risk brackets built from it.
//!
//! Everything runs in whitened coordinates. With `Ω̃ = R²`, `H = K_c^{1/2} G K_c^{1/2}`
//! and `A = K_c^{1/2} K_e K_c^{1/2}`,
//!
//! ```text
//! C̃ = (Ω̃^{-1} + H)^{-1} = R (I + R H R)^{-1} R
//! f = E tr(A C̃)
//! ∇_Ω̃ f = E (I − H C̃) A (I − C̃ H)
//! ```
//!
//! so only the SPD matrix `I + RHR` is ever factored and `Ω̃` is never inverted.
//! The same gradient is the whitened bias matrix of the attached ridge
//! estimator, which gives the Frank–Wolfe gap
//! `ρ² λ_max(∇) − ⟨∇, Ω̃⟩ ≥ f* − f` as a stopping certificate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::ensembles::GramEnsemble;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::problem::{EllipticalProblem, PriorCovariance};
use crate::rng;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    pub max_iter: usize,
    /// Stop once the relative objective change stays below `tol` for a few iterations.
    pub tol: f64,
    /// Stop once the duality gap is below `gap_tol` relative to the objective.
    pub gap_tol: f64,
    pub n_replicates: usize,
    pub seed: u64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iter: 5000,
            tol: 1e-9,
            gap_tol: 1e-8,
            n_replicates: 50,
            seed: 0,
        }
    }
}

const ARMIJO_SIGMA: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const STALL_ITERS: usize = 3;
/// Relative duality gap below which a run counts as converged.
const CONVERGED_GAP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct FunctionalResult {
    pub value: f64,
    pub maximizer: PriorCovariance,
    pub iterations: usize,
    /// Frobenius norm of the whitened gradient at the returned iterate.
    pub grad_norm: f64,
    /// Standard error of the objective across ensemble members.
    pub mc_stderr: f64,
    /// Frank–Wolfe gap, an upper bound on the optimal value minus `value`.
    pub duality_gap: f64,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub history: Vec<f64>,
}

impl Serialize for FunctionalResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        serde_json::json!({
            "value": self.value,
            "omega_star": linalg::to_rows(self.maximizer.matrix()),
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "mc_stderr": self.mc_stderr,
            "duality_gap": self.duality_gap,
            "converged": self.converged,
        })
        .serialize(s)
    }
}

/// Per-(problem, ensemble) whitened data.
struct Whitened {
    a: Mat,
    h: Vec<Mat>,
}

struct Evaluation {
    values: Vec<f64>,
    grad: Option<Mat>,
}

impl Evaluation {
    fn value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl Whitened {
    fn new(problem: &EllipticalProblem, ensemble: &GramEnsemble) -> Result<Self> {
        if ensemble.dim() != problem.dim() {
            return Err(Error::DimensionMismatch {
                name: "ensemble",
                expected: format!("dimension {}", problem.dim()),
                found: ensemble.dim().to_string(),
            });
        }
        Ok(Whitened {
            a: problem.whitened_error().clone(),
            h: ensemble.grams().iter().map(|g| problem.whiten_gram(g)).collect(),
        })
    }

    /// `C̃_i = R (I + R H_i R)^{-1} R`.
    fn posterior(&self, r: &Mat, i: usize) -> Result<Mat> {
        let d = r.nrows();
        let s = Mat::identity(d, d) + r * &self.h[i] * r;
        let chol = linalg::cholesky("I + R H R", &s)?;
        Ok(linalg::symmetrize(&(r * chol.solve(r))))
    }

    fn evaluate(&self, r: &Mat, with_grad: bool) -> Result<Evaluation> {
        let d = r.nrows();
        let parts = (0..self.h.len())
            .into_par_iter()
            .map(|i| {
                let c = self.posterior(r, i)?;
                let value = linalg::frob_inner(&self.a, &c);
                let grad = with_grad.then(|| {
                    let p = Mat::identity(d, d) - &self.h[i] * &c;
                    &p * &self.a * p.transpose()
                });
                Ok((value, grad))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut values = Vec::with_capacity(parts.len());
        let mut grad = with_grad.then(|| Mat::zeros(d, d));
        for (v, g) in parts {
            values.push(v);
            if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
                *acc += g;
            }
        }
        let n = values.len() as f64;
        Ok(Evaluation {
            values,
            grad: grad.map(|g| linalg::symmetrize(&(g / n))),
        })
    }

    /// `E tr(A C̃ H C̃)`, the variance part of the ridge risk.
    fn noise_term(&self, r: &Mat) -> Result<f64> {
        let parts = (0..self.h.len())
            .into_par_iter()
            .map(|i| {
                let c = self.posterior(r, i)?;
                Ok(linalg::frob_inner(&self.a, &(&c * &self.h[i] * &c)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(parts.iter().sum::<f64>() / parts.len() as f64)
    }
}

fn check_prior(problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<()> {
    if omega.matrix().nrows() != problem.dim() {
        return Err(Error::DimensionMismatch {
            name: "Omega",
            expected: format!("{0}x{0}", problem.dim()),
            found: format!("{0}x{0}", omega.matrix().nrows()),
        });
    }
    Ok(())
}

/// Per-member values `tr(K_e^{1/2} (Ω^{-1} + G_i)^{-1} K_e^{1/2})` summarized as a mean with stderr.
pub fn objective_estimate(ensemble: &GramEnsemble, problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<Estimate> {
    check_prior(problem, omega)?;
    let w = Whitened::new(problem, ensemble)?;
    Ok(Estimate::from_samples(&w.evaluate(omega.whitened_sqrt(), false)?.values))
}

/// Sample-average objective `(1/N) Σ_i tr(K_e^{1/2} (Ω^{-1} + G_i)^{-1} K_e^{1/2})`.
pub fn objective(ensemble: &GramEnsemble, problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<f64> {
    Ok(objective_estimate(ensemble, problem, omega)?.mean)
}

/// Gradient with respect to `Ω̃ = K_c^{-1/2} Ω K_c^{-1/2}`.
pub fn whitened_gradient(ensemble: &GramEnsemble, problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<Mat> {
    check_prior(problem, omega)?;
    let w = Whitened::new(problem, ensemble)?;
    Ok(w.evaluate(omega.whitened_sqrt(), true)?.grad.expect("gradient requested"))
}

/// Gradient with respect to `Ω`, `E[Ω^{-1} C K_e C Ω^{-1}]` with `C = (Ω^{-1} + G)^{-1}`.
pub fn gradient(ensemble: &GramEnsemble, problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<Mat> {
    let g = whitened_gradient(ensemble, problem, omega)?;
    Ok(linalg::symmetrize(&(problem.kc_inv_sqrt() * g * problem.kc_inv_sqrt())))
}

/// Noise part `E tr(K_e^{1/2} C G C K_e^{1/2})` of the ridge risk for prior `Ω`.
pub fn noise_term(ensemble: &GramEnsemble, problem: &EllipticalProblem, omega: &PriorCovariance) -> Result<f64> {
    check_prior(problem, omega)?;
    Whitened::new(problem, ensemble)?.noise_term(omega.whitened_sqrt())
}

/// Maximizes the sample-average functional from the isotropic start `Ω̃ = (ρ²/d) I`.
pub fn maximize_phi(problem: &EllipticalProblem, ensemble: &GramEnsemble, opts: &OptimizerOptions) -> Result<FunctionalResult> {
    maximize_phi_from(problem, ensemble, opts, problem.isotropic_prior())
}

/// Projected gradient ascent with Armijo backtracking in whitened coordinates.
///
/// The first trial step is `ρ²/‖∇‖_F`; later iterations start from twice the
/// last accepted step. A step `t` is accepted when
/// `f(P(X + t∇)) ≥ f(X) + σ ⟨∇, P(X + t∇) − X⟩`.
pub fn maximize_phi_from(
    problem: &EllipticalProblem,
    ensemble: &GramEnsemble,
    opts: &OptimizerOptions,
    start: PriorCovariance,
) -> Result<FunctionalResult> {
    check_prior(problem, &start)?;
    let w = Whitened::new(problem, ensemble)?;
    let rho2 = problem.rho() * problem.rho();
    let mut x = PriorCovariance::project_whitened(problem, start.whitened());
    let mut eval = w.evaluate(x.whitened_sqrt(), true)?;
    let mut f = eval.value();
    let mut history = vec![f];
    let mut step = f64::NAN;
    let mut stall = 0;
    let mut iterations = 0;
    let mut stopped = false;

    let gap_of = |grad: &Mat, x: &PriorCovariance| (rho2 * linalg::lambda_max(grad) - linalg::frob_inner(grad, x.whitened())).max(0.0);

    while iterations < opts.max_iter {
        let grad = eval.grad.as_ref().expect("gradient requested");
        let gap = gap_of(grad, &x);
        if gap <= opts.gap_tol * f.abs() {
            stopped = true;
            break;
        }
        let gnorm = grad.norm();
        if !(gnorm > 0.0) {
            stopped = true;
            break;
        }
        if !step.is_finite() {
            step = rho2 / gnorm;
        } else {
            step *= 2.0;
        }
        let min_step = 1e-30 * rho2 / gnorm;
        let mut accepted = None;
        while step >= min_step {
            let cand = PriorCovariance::project_whitened(problem, &(x.whitened() + grad * step));
            let ascent = linalg::frob_inner(grad, &(cand.whitened() - x.whitened()));
            let cand_eval = w.evaluate(cand.whitened_sqrt(), true)?;
            let fc = cand_eval.value();
            if fc >= f + ARMIJO_SIGMA * ascent && fc >= f {
                accepted = Some((cand, cand_eval, fc));
                break;
            }
            step *= ARMIJO_SHRINK;
        }
        iterations += 1;
        let Some((cand, cand_eval, fc)) = accepted else {
            stopped = true;
            break;
        };
        let rel = (fc - f) / f.abs().max(f64::MIN_POSITIVE);
        x = cand;
        eval = cand_eval;
        f = fc;
        history.push(f);
        if rel < opts.tol {
            stall += 1;
            if stall >= STALL_ITERS {
                stopped = true;
                break;
            }
        } else {
            stall = 0;
        }
    }

    let grad = eval.grad.as_ref().expect("gradient requested");
    let duality_gap = gap_of(grad, &x);
    let estimate = Estimate::from_samples(&eval.values);
    Ok(FunctionalResult {
        value: f,
        grad_norm: grad.norm(),
        mc_stderr: estimate.stderr,
        duality_gap,
        converged: stopped && duality_gap <= CONVERGED_GAP * f.abs(),
        iterations,
        history,
        maximizer: x,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Maximized functional at radius `ρ`.
    FunctionalUpper,
    /// Maximized functional at radius `ρ/2`.
    FunctionalHalfRadius,
    /// A quarter of the upper bound.
    QuarterUpper,
    /// Functional at the scaled prior `cΩ⋆`.
    SharpConstant,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskBracket {
    pub lower: f64,
    pub upper: f64,
    pub quarter_upper: f64,
    pub sharp_lower: Option<f64>,
    pub lower_method: BoundMethod,
    pub upper_method: BoundMethod,
    pub quarter_method: BoundMethod,
    pub sharp_method: Option<BoundMethod>,
    pub converged: bool,
    #[serde(serialize_with = "serialize_prior")]
    pub omega_star: PriorCovariance,
}

fn serialize_prior<S: Serializer>(p: &PriorCovariance, s: S) -> std::result::Result<S::Ok, S::Error> {
    linalg::to_rows(p.matrix()).serialize(s)
}

/// `Φ̂(ρ/2) ≤ M ≤ Φ̂(ρ)` on a shared ensemble.
pub fn risk_bracket(problem: &EllipticalProblem, ensemble: &GramEnsemble, opts: &OptimizerOptions) -> Result<RiskBracket> {
    let upper = maximize_phi(problem, ensemble, opts)?;
    let half = maximize_phi(&problem.with_radius(problem.rho() / 2.0)?, ensemble, opts)?;
    Ok(RiskBracket {
        lower: half.value,
        upper: upper.value,
        quarter_upper: upper.value / 4.0,
        sharp_lower: None,
        lower_method: BoundMethod::FunctionalHalfRadius,
        upper_method: BoundMethod::FunctionalUpper,
        quarter_method: BoundMethod::QuarterUpper,
        sharp_method: None,
        converged: upper.converged && half.converged,
        omega_star: upper.maximizer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SharpLowerBound {
    /// Objective at `c_- Ω` where `c_-` is `c` lowered by one Monte Carlo stderr.
    pub bound: f64,
    /// Change in the bound caused by that one-stderr shift of `c`.
    pub stderr: f64,
    /// Standard error of the objective across ensemble members.
    pub ensemble_stderr: f64,
    pub c: f64,
    pub c_stderr: f64,
    pub tail_probability: f64,
    /// Whether `tr(K_c^{-1/2} Ω K_c^{-1/2}) = ρ²` within `1e-6` relative.
    pub trace_active: bool,
}

/// Lower bound `E tr(K_e^{1/2} ((1/c) Ω^{-1} + G)^{-1} K_e^{1/2})` with
/// `c = τ² (1 − P{τ² Σ λ_i Z_i² > 1})` and `λ_i` the eigenvalues of
/// `(1/ρ²) K_e^{1/2} Ω K_e^{1/2}`. The tail probability is estimated from
/// `mc_draws` Gaussian vectors.
pub fn sharp_lower(
    problem: &EllipticalProblem,
    ensemble: &GramEnsemble,
    tau: f64,
    omega: &PriorCovariance,
    mc_draws: usize,
    seed: u64,
) -> Result<SharpLowerBound> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid("tau", format!("must lie in (0, 1], got {tau}")));
    }
    if mc_draws < 2 {
        return Err(Error::invalid("mc_draws", "needs at least 2 draws"));
    }
    check_prior(problem, omega)?;
    let rho2 = problem.rho() * problem.rho();
    let kernel = problem.ke_sqrt() * omega.matrix() * problem.ke_sqrt() / rho2;
    let lambdas: Vec<f64> = linalg::sym_eigenvalues(&kernel).iter().map(|l| l.max(0.0) * tau * tau).collect();
    let hits: usize = (0..mc_draws as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = rng::sub_stream(seed, i);
            let q: f64 = lambdas
                .iter()
                .map(|l| {
                    let z = rng::normal(&mut s);
                    l * z * z
                })
                .sum();
            usize::from(q > 1.0)
        })
        .sum();
    let m = mc_draws as f64;
    let p = hits as f64 / m;
    let p_se = (p * (1.0 - p) / m).sqrt();
    let c = tau * tau * (1.0 - p);
    let c_se = tau * tau * p_se;
    let c_low = (c - c_se).max(0.0);
    let at = |scale: f64| -> Result<Estimate> {
        if scale <= 0.0 {
            return Ok(Estimate::from_samples(&[0.0, 0.0]));
        }
        objective_estimate(ensemble, problem, &omega.scaled(scale))
    };
    let low = at(c_low)?;
    let mid = at(c)?;
    Ok(SharpLowerBound {
        bound: low.mean,
        stderr: mid.mean - low.mean,
        ensemble_stderr: low.stderr,
        c,
        c_stderr: c_se,
        tail_probability: p,
        trace_active: (omega.budget() - rho2).abs() <= 1e-6 * rho2,
    })
}

/// `c_d = (1 − 1/(2d−1))(1 − exp(−d^{3/2}/4))` for `d ≥ 2`, and `1/4` for `d = 1`.
pub fn dicker_cd(d: usize) -> f64 {
    match d {
        0 => f64::NAN,
        1 => 0.25,
        _ => {
            let df = d as f64;
            (1.0 - 1.0 / (2.0 * df - 1.0)) * (1.0 - (-df.powf(1.5) / 4.0).exp())
        }
    }
}

fn isotropic_sigma(problem: &EllipticalProblem) -> Result<f64> {
    problem
        .sigma()
        .ok_or_else(|| Error::invalid("noise_cov", "this operation needs isotropic noise"))
}

/// Population version `d̄_n = sup tr(K_e^{1/2} (Σ̄ + Ω^{-1})^{-1} K_e^{1/2})` over
/// `tr(K_c^{-1/2} Ω K_c^{-1/2}) ≤ nρ²/σ²`.
///
/// Solved as the functional with the single Gram `G = (n/σ²) Σ̄`; the value is
/// reported as `(n/σ²) Φ`, the maximizer in the original normalization.
pub fn population_functional(
    problem: &EllipticalProblem,
    sigma_bar: &Mat,
    n: usize,
    opts: &OptimizerOptions,
) -> Result<FunctionalResult> {
    let sigma = isotropic_sigma(problem)?;
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    linalg::check_symmetric("Sigma_bar", sigma_bar, 1e-10)?;
    let scale = n as f64 / (sigma * sigma);
    let ensemble = GramEnsemble::from_grams(vec![sigma_bar * scale], n, sigma)?;
    let mut res = maximize_phi(problem, &ensemble, opts)?;
    res.value *= scale;
    res.mc_stderr = 0.0;
    res.duality_gap *= scale;
    res.history.iter_mut().for_each(|v| *v *= scale);
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sandwich {
    pub lhs: f64,
    pub mid: f64,
    pub mid_stderr: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `d̄_n ≤ d_n ≤ (1 + ρ²κ²/σ²) d̄_n`, with `d_n = (n/σ²) Φ̂` on the ensemble.
/// `holds` allows two standard errors of slack on `d_n`.
pub fn to_population_sandwich(
    problem: &EllipticalProblem,
    ensemble: &GramEnsemble,
    sigma_bar: &Mat,
    kappa: f64,
    opts: &OptimizerOptions,
) -> Result<Sandwich> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", format!("must be positive, got {kappa}")));
    }
    let sigma = isotropic_sigma(problem)?;
    let n = ensemble.n();
    let scale = n as f64 / (sigma * sigma);
    let lhs = population_functional(problem, sigma_bar, n, opts)?.value;
    let sample = maximize_phi(problem, ensemble, opts)?;
    let (mid, mid_stderr) = (sample.value * scale, sample.mc_stderr * scale);
    let rhs = (1.0 + problem.rho().powi(2) * kappa * kappa / (sigma * sigma)) * lhs;
    let slack = 2.0 * mid_stderr + 1e-9 * mid.abs();
    Ok(Sandwich {
        lhs,
        mid,
        mid_stderr,
        rhs,
        holds: lhs <= mid + slack && mid <= rhs + slack,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingularSplit {
    /// `E Σ_{λ_i > t} (σ²/n)/λ_i` over eigenvalues of `Σ̂`, `t = (σ²/n)(d/ρ²)`.
    pub estimation: f64,
    /// `E #{λ_i ≤ t} · ρ²/d`.
    pub approximation: f64,
    /// Objective at the isotropic prior `Ω̃ = (ρ²/d) I`.
    pub isotropic_objective: f64,
}

/// Splits the isotropic-prior functional into large- and small-eigenvalue parts.
/// Each eigenvalue's contribution is within a factor 2 of its share of the
/// isotropic objective when `K_e = K_c = I`.
pub fn singular_split(ensemble: &GramEnsemble, problem: &EllipticalProblem) -> Result<SingularSplit> {
    let sigma = ensemble.sigma();
    let n = ensemble.n() as f64;
    let d = problem.dim() as f64;
    let rho2 = problem.rho() * problem.rho();
    let unit = sigma * sigma / n;
    let threshold = unit * d / rho2;
    let parts: Vec<(f64, f64)> = (0..ensemble.len())
        .into_par_iter()
        .map(|i| {
            let eig = linalg::sym_eigenvalues(&ensemble.sample_covariance(i));
            eig.iter().fold((0.0, 0.0), |(est, app), &l| {
                if l > threshold {
                    (est + unit / l, app)
                } else {
                    (est, app + rho2 / d)
                }
            })
        })
        .collect();
    let m = parts.len() as f64;
    Ok(SingularSplit {
        estimation: parts.iter().map(|p| p.0).sum::<f64>() / m,
        approximation: parts.iter().map(|p| p.1).sum::<f64>() / m,
        isotropic_objective: objective(ensemble, problem, &problem.isotropic_prior())?,
    })
}
