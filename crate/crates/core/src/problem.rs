//! Estimation instances: error metric `K_e`, constraint metric `K_c`, radius
//! `ρ` and noise covariance, plus the whitening maps shared by every solver.
//!
//! Optimizer state lives in whitened coordinates `Ω̃ = K_c^{-1/2} Ω K_c^{-1/2}`
//! where the feasible set is the spectral trace ball `{Ω̃ ⪰ εI, tr Ω̃ ≤ ρ²}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalue floor relative to `ρ²/d`.
pub const FLOOR_FACTOR: f64 = 1e-10;
/// Relative slack allowed on the trace constraint when checking feasibility.
pub const TRACE_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// `Σ_w = σ² I_n`.
    Isotropic { sigma: f64 },
    /// `Σ_w = diag(variances)`, one entry per observation.
    Diagonal { variances: Vec<f64> },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            NoiseModel::Isotropic { sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid("sigma", format!("must be positive and finite, got {sigma}")));
                }
            }
            NoiseModel::Diagonal { variances } => {
                if let Some((i, v)) = variances.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
                    return Err(Error::NotPositiveDefinite {
                        name: "noise_cov",
                        index: i,
                        value: *v,
                    });
                }
            }
        }
        Ok(())
    }

    /// `Xᵀ Σ_w^{-1} X`.
    pub fn gram(&self, x: &Mat) -> Result<Mat> {
        match self {
            NoiseModel::Isotropic { sigma } => Ok(linalg::symmetrize(&(x.transpose() * x)) / (sigma * sigma)),
            NoiseModel::Diagonal { variances } => {
                if variances.len() != x.nrows() {
                    return Err(Error::DimensionMismatch {
                        name: "noise_cov",
                        expected: format!("{} variances", x.nrows()),
                        found: variances.len().to_string(),
                    });
                }
                let mut scaled = x.clone();
                for (i, v) in variances.iter().enumerate() {
                    scaled.row_mut(i).scale_mut(1.0 / v);
                }
                Ok(linalg::symmetrize(&(x.transpose() * scaled)))
            }
        }
    }

    /// `Xᵀ Σ_w^{-1} y`.
    pub fn weighted_response(&self, x: &Mat, y: &linalg::Vector) -> Result<linalg::Vector> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                name: "y",
                expected: format!("length {}", x.nrows()),
                found: y.len().to_string(),
            });
        }
        match self {
            NoiseModel::Isotropic { sigma } => Ok(x.transpose() * y / (sigma * sigma)),
            NoiseModel::Diagonal { variances } => {
                if variances.len() != x.nrows() {
                    return Err(Error::DimensionMismatch {
                        name: "noise_cov",
                        expected: format!("{} variances", x.nrows()),
                        found: variances.len().to_string(),
                    });
                }
                let w = linalg::Vector::from_iterator(y.len(), y.iter().zip(variances).map(|(a, v)| a / v));
                Ok(x.transpose() * w)
            }
        }
    }

    /// Noise standard deviation of observation `i`.
    pub fn std_dev(&self, i: usize) -> f64 {
        match self {
            NoiseModel::Isotropic { sigma } => *sigma,
            NoiseModel::Diagonal { variances } => variances[i].sqrt(),
        }
    }
}

/// One validated estimation instance with cached symmetric roots.
#[derive(Debug, Clone)]
pub struct EllipticalProblem {
    dim: usize,
    ke: Mat,
    kc: Mat,
    rho: f64,
    noise: NoiseModel,
    ke_sqrt: Mat,
    kc_sqrt: Mat,
    kc_inv_sqrt: Mat,
    whitened_error: Mat,
}

fn validate_spd(name: &'static str, a: &Mat) -> Result<Mat> {
    linalg::check_symmetric(name, a, SYMMETRY_TOL)?;
    let (values, vectors) = linalg::sym_eigen(a);
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NotPositiveDefinite { name, index: i, value: v });
    }
    Ok(linalg::compose(&values.map(f64::sqrt), &vectors))
}

impl EllipticalProblem {
    /// Validates `(K_e, K_c, ρ, σ)` with isotropic noise `σ² I`.
    pub fn new(ke: Mat, kc: Mat, rho: f64, sigma: f64) -> Result<Self> {
        Self::with_noise(ke, kc, rho, NoiseModel::Isotropic { sigma })
    }

    pub fn with_noise(ke: Mat, kc: Mat, rho: f64, noise: NoiseModel) -> Result<Self> {
        let dim = ke.nrows();
        if dim == 0 {
            return Err(Error::invalid("dim", "must be at least 1"));
        }
        if kc.nrows() != dim || kc.ncols() != dim {
            return Err(Error::DimensionMismatch {
                name: "Kc",
                expected: format!("{dim}x{dim}"),
                found: format!("{}x{}", kc.nrows(), kc.ncols()),
            });
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho", format!("must be positive and finite, got {rho}")));
        }
        noise.validate()?;
        let ke = linalg::symmetrize(&{
            linalg::check_symmetric("Ke", &ke, SYMMETRY_TOL)?;
            ke
        });
        let ke_sqrt = validate_spd("Ke", &ke)?;
        let kc = linalg::symmetrize(&kc);
        let kc_sqrt = validate_spd("Kc", &kc)?;
        let kc_inv_sqrt = linalg::sym_apply(&kc, |x| 1.0 / x.sqrt());
        let whitened_error = linalg::symmetrize(&(&kc_sqrt * &ke * &kc_sqrt));
        Ok(EllipticalProblem {
            dim,
            ke,
            kc,
            rho,
            noise,
            ke_sqrt,
            kc_sqrt,
            kc_inv_sqrt,
            whitened_error,
        })
    }

    /// `K_e = K_c = I_d`.
    pub fn isotropic(dim: usize, rho: f64, sigma: f64) -> Result<Self> {
        Self::new(linalg::identity(dim), linalg::identity(dim), rho, sigma)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Noise level for isotropic noise; `None` otherwise.
    pub fn sigma(&self) -> Option<f64> {
        match self.noise {
            NoiseModel::Isotropic { sigma } => Some(sigma),
            NoiseModel::Diagonal { .. } => None,
        }
    }

    pub fn ke(&self) -> &Mat {
        &self.ke
    }

    pub fn kc(&self) -> &Mat {
        &self.kc
    }

    pub fn ke_sqrt(&self) -> &Mat {
        &self.ke_sqrt
    }

    pub fn kc_sqrt(&self) -> &Mat {
        &self.kc_sqrt
    }

    pub fn kc_inv_sqrt(&self) -> &Mat {
        &self.kc_inv_sqrt
    }

    /// `K_c^{1/2} K_e K_c^{1/2}`, the error metric in whitened coordinates.
    pub fn whitened_error(&self) -> &Mat {
        &self.whitened_error
    }

    /// Same geometry and noise with a different radius.
    pub fn with_radius(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho", format!("must be positive and finite, got {rho}")));
        }
        Ok(EllipticalProblem { rho, ..self.clone() })
    }

    /// Eigenvalue floor `ε = 1e-10 ρ²/d` in whitened coordinates.
    pub fn floor(&self) -> f64 {
        FLOOR_FACTOR * self.rho * self.rho / self.dim as f64
    }

    /// `K_c^{-1/2} Ω K_c^{-1/2}`.
    pub fn whiten(&self, omega: &Mat) -> Mat {
        linalg::symmetrize(&(&self.kc_inv_sqrt * omega * &self.kc_inv_sqrt))
    }

    /// `K_c^{1/2} Ω̃ K_c^{1/2}`.
    pub fn unwhiten(&self, omega_w: &Mat) -> Mat {
        linalg::symmetrize(&(&self.kc_sqrt * omega_w * &self.kc_sqrt))
    }

    /// Gram matrix in whitened coordinates, `K_c^{1/2} G K_c^{1/2}`.
    pub fn whiten_gram(&self, g: &Mat) -> Mat {
        linalg::symmetrize(&(&self.kc_sqrt * g * &self.kc_sqrt))
    }

    /// `‖θ‖_{K_c^{-1}}`.
    pub fn constraint_norm(&self, theta: &linalg::Vector) -> f64 {
        (&self.kc_inv_sqrt * theta).norm()
    }

    /// `‖v‖²_{K_e}`.
    pub fn error_norm_sq(&self, v: &linalg::Vector) -> f64 {
        v.dot(&(&self.ke * v))
    }

    /// Projection onto the feasible prior set.
    pub fn feasible_project(&self, omega: &Mat) -> PriorCovariance {
        PriorCovariance::project_whitened(self, &self.whiten(omega))
    }

    /// The isotropic starting point `Ω̃ = (ρ²/d) I`, i.e. `Ω = (ρ²/d) K_c`.
    pub fn isotropic_prior(&self) -> PriorCovariance {
        let level = self.rho * self.rho / self.dim as f64;
        PriorCovariance::from_parts(self, linalg::identity(self.dim) * level)
    }
}

/// A feasible prior covariance `Ω`, stored alongside its whitened form.
#[derive(Debug, Clone)]
pub struct PriorCovariance {
    matrix: Mat,
    whitened: Mat,
    whitened_sqrt: Mat,
    floor: f64,
}

impl PriorCovariance {
    fn from_parts(problem: &EllipticalProblem, whitened: Mat) -> Self {
        let whitened = linalg::symmetrize(&whitened);
        PriorCovariance {
            matrix: problem.unwhiten(&whitened),
            whitened_sqrt: linalg::psd_sqrt(&whitened),
            whitened,
            floor: problem.floor(),
        }
    }

    /// Frobenius projection of a whitened symmetric matrix onto `{Ω̃ ⪰ εI, tr Ω̃ ≤ ρ²}`.
    pub fn project_whitened(problem: &EllipticalProblem, omega_w: &Mat) -> Self {
        let (values, vectors) = linalg::sym_eigen(omega_w);
        let rho2 = problem.rho * problem.rho;
        let projected = linalg::project_floor_cap(values.as_slice(), problem.floor(), rho2);
        let projected = linalg::Vector::from_vec(projected);
        PriorCovariance {
            matrix: problem.unwhiten(&linalg::compose(&projected, &vectors)),
            whitened: linalg::compose(&projected, &vectors),
            whitened_sqrt: linalg::compose(&projected.map(f64::sqrt), &vectors),
            floor: problem.floor(),
        }
    }

    /// Accepts `Ω` as-is after checking feasibility for `problem`.
    pub fn new(problem: &EllipticalProblem, omega: Mat) -> Result<Self> {
        if omega.nrows() != problem.dim || omega.ncols() != problem.dim {
            return Err(Error::DimensionMismatch {
                name: "Omega",
                expected: format!("{0}x{0}", problem.dim),
                found: format!("{}x{}", omega.nrows(), omega.ncols()),
            });
        }
        linalg::check_symmetric("Omega", &omega, SYMMETRY_TOL)?;
        let whitened = problem.whiten(&omega);
        let values = linalg::sym_eigenvalues(&whitened);
        if values[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite {
                name: "Omega",
                index: 0,
                value: values[0],
            });
        }
        let rho2 = problem.rho * problem.rho;
        let trace = values.sum();
        if trace > rho2 * (1.0 + TRACE_SLACK) {
            return Err(Error::invalid(
                "Omega",
                format!("whitened trace {trace:e} exceeds rho^2 = {rho2:e}"),
            ));
        }
        Ok(PriorCovariance {
            whitened_sqrt: linalg::psd_sqrt(&whitened),
            matrix: linalg::symmetrize(&omega),
            whitened,
            floor: problem.floor(),
        })
    }

    /// `Ω` in original coordinates.
    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    /// `K_c^{-1/2} Ω K_c^{-1/2}`.
    pub fn whitened(&self) -> &Mat {
        &self.whitened
    }

    pub fn whitened_sqrt(&self) -> &Mat {
        &self.whitened_sqrt
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `tr(K_c^{-1/2} Ω K_c^{-1/2})`.
    pub fn budget(&self) -> f64 {
        self.whitened.trace()
    }

    /// `cΩ` for `0 < c ≤ 1`, which stays feasible.
    pub fn scaled(&self, c: f64) -> Self {
        PriorCovariance {
            matrix: &self.matrix * c,
            whitened: &self.whitened * c,
            whitened_sqrt: &self.whitened_sqrt * c.sqrt(),
            floor: self.floor * c,
        }
    }

    pub fn is_feasible(&self, problem: &EllipticalProblem) -> bool {
        let values = linalg::sym_eigenvalues(&self.whitened);
        let rho2 = problem.rho * problem.rho;
        values[0] > 0.0 && values.sum() <= rho2 * (1.0 + TRACE_SLACK)
    }
}

/// Matrix given in a config file: `"identity"`, a dense row array, or `{"diag": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Dense(Vec<Vec<f64>>),
    Diag { diag: Vec<f64> },
}

impl MatrixSpec {
    pub fn build(&self, name: &'static str, dim: usize) -> Result<Mat> {
        let m = match self {
            MatrixSpec::Named(s) if s == "identity" => linalg::identity(dim),
            MatrixSpec::Named(s) => {
                return Err(Error::Config {
                    key: Some(name.to_string()),
                    message: format!("unknown matrix name {s:?}, expected \"identity\""),
                })
            }
            MatrixSpec::Dense(rows) => linalg::from_rows(name, rows)?,
            MatrixSpec::Diag { diag } => linalg::diag(diag),
        };
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch {
                name,
                expected: format!("{dim}x{dim}"),
                found: format!("{}x{}", m.nrows(), m.ncols()),
            });
        }
        Ok(m)
    }
}

fn identity_spec() -> MatrixSpec {
    MatrixSpec::Named("identity".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dim: usize,
    #[serde(rename = "Ke", default = "identity_spec")]
    pub ke: MatrixSpec,
    #[serde(rename = "Kc", default = "identity_spec")]
    pub kc: MatrixSpec,
    pub rho: f64,
    pub sigma: f64,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<EllipticalProblem> {
        EllipticalProblem::new(
            self.ke.build("Ke", self.dim)?,
            self.kc.build("Kc", self.dim)?,
            self.rho,
            self.sigma,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Mat, b: &Mat, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn identity_problem_has_identity_roots() {
        let p = EllipticalProblem::isotropic(2, 1.0, 1.0).unwrap();
        assert!(close(p.ke_sqrt(), &linalg::identity(2), 1e-14));
        assert!(close(p.kc_inv_sqrt(), &linalg::identity(2), 1e-14));
    }

    #[test]
    fn diagonal_root() {
        let p = EllipticalProblem::new(linalg::diag(&[4.0, 1.0]), linalg::identity(2), 2.0, 0.5).unwrap();
        assert!(close(p.ke_sqrt(), &linalg::diag(&[2.0, 1.0]), 1e-14));
    }

    #[test]
    fn validation_errors() {
        let asym = Mat::from_row_slice(2, 2, &[1.0, 0.3, 0.0, 1.0]);
        assert!(matches!(
            EllipticalProblem::new(asym, linalg::identity(2), 1.0, 1.0),
            Err(Error::NotSymmetric { .. })
        ));
        assert!(matches!(
            EllipticalProblem::new(linalg::diag(&[1.0, -2.0]), linalg::identity(2), 1.0, 1.0),
            Err(Error::NotPositiveDefinite { name: "Ke", index: 0, .. })
        ));
        assert!(matches!(
            EllipticalProblem::new(linalg::identity(2), linalg::identity(3), 1.0, 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(EllipticalProblem::isotropic(2, 0.0, 1.0).is_err());
        assert!(EllipticalProblem::isotropic(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let p = EllipticalProblem::isotropic(2, 1.0, 1.0).unwrap();
        let w = p.feasible_project(&linalg::diag(&[2.0, 2.0]));
        assert!(close(w.matrix(), &linalg::diag(&[0.5, 0.5]), 1e-14));

        let p10 = EllipticalProblem::isotropic(2, 10.0, 1.0).unwrap();
        let w = p10.feasible_project(&linalg::diag(&[1.0, 1.0]));
        assert!(close(w.matrix(), &linalg::identity(2), 1e-14));

        let eps = p.floor();
        let w = p.feasible_project(&linalg::diag(&[1.0, -1.0]));
        assert!(close(w.matrix(), &linalg::diag(&[1.0 - eps, eps]), 1e-15));
        assert!(w.budget() <= 1.0 + 1e-15);
    }

    #[test]
    fn projection_respects_kc() {
        let kc = linalg::diag(&[4.0, 1.0]);
        let p = EllipticalProblem::new(linalg::identity(2), kc, 1.0, 1.0).unwrap();
        let w = p.feasible_project(&linalg::diag(&[8.0, 2.0]));
        // whitened (2, 2) -> (0.5, 0.5), mapped back by K_c
        assert!(close(w.matrix(), &linalg::diag(&[2.0, 0.5]), 1e-12));
    }

    #[test]
    fn config_parses_all_matrix_forms() {
        let cfg: ProblemConfig = serde_json::from_str(
            r#"{"dim": 2, "Ke": {"diag": [4, 1]}, "Kc": [[1, 0], [0, 1]], "rho": 2, "sigma": 0.5}"#,
        )
        .unwrap();
        let p = cfg.build().unwrap();
        assert!(close(p.ke_sqrt(), &linalg::diag(&[2.0, 1.0]), 1e-14));
        let cfg: ProblemConfig = serde_json::from_str(r#"{"dim": 3, "Ke": "identity", "rho": 1, "sigma": 1}"#).unwrap();
        assert_eq!(cfg.build().unwrap().dim(), 3);
        let err = serde_json::from_str::<ProblemConfig>(r#"{"dim": 3, "sigma": 1}"#).unwrap_err();
        assert!(err.to_string().contains("`rho`"));
    }

    fn sym3() -> impl Strategy<Value = Mat> {
        prop::collection::vec(-3.0f64..3.0, 9).prop_map(|v| linalg::symmetrize(&Mat::from_vec(3, 3, v)))
    }

    proptest! {
        #[test]
        fn projection_idempotent(a in sym3(), rho in 0.3f64..3.0) {
            let kc = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5]);
            let p = EllipticalProblem::new(linalg::identity(3), kc, rho, 1.0).unwrap();
            let once = p.feasible_project(&a);
            prop_assert!(once.is_feasible(&p));
            let twice = p.feasible_project(once.matrix());
            prop_assert!(close(once.whitened(), twice.whitened(), 1e-12 * (1.0 + rho * rho)));
        }

        #[test]
        fn projection_non_expansive(a in sym3(), b in sym3()) {
            let p = EllipticalProblem::isotropic(3, 1.0, 1.0).unwrap();
            let pa = p.feasible_project(&a);
            let pb = p.feasible_project(&b);
            prop_assert!((pa.matrix() - pb.matrix()).norm() <= (a - b).norm() + 1e-12);
        }

        #[test]
        fn feasible_points_are_fixed(v in prop::collection::vec(0.01f64..1.0, 3)) {
            let p = EllipticalProblem::isotropic(3, 2.0, 1.0).unwrap();
            let s: f64 = v.iter().sum();
            let omega = linalg::diag(&v.iter().map(|x| x * 4.0 / s * 0.99).collect::<Vec<_>>());
            let proj = p.feasible_project(&omega);
            prop_assert!(close(proj.matrix(), &omega, 1e-12));
        }
    }
}
