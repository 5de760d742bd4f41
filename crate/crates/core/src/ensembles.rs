//! Seeded samplers for random designs and the Gram ensembles built from them.
//!
//! Draw order is fixed: Gaussian entries fill the design row-major; mixture
//! and shift rows draw their selector uniform first, then the row contents.
//! Replicate `i` of an ensemble uses the stream `sub_seed(seed, i)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::Spectrum;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::problem::NoiseModel;
use crate::rng::{self, Stream};

/// A realized design `X` with row `i` equal to the feature vector of `x_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    x: Mat,
}

impl DesignMatrix {
    pub fn new(x: Mat) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::invalid("design", "must have at least one row and column"));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "design",
                format!("non-finite entry at row {}, col {}", pos % x.nrows(), pos / x.nrows()),
            ));
        }
        Ok(DesignMatrix { x })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.x
    }

    pub fn into_matrix(self) -> Mat {
        self.x
    }

    /// `XᵀX / n`.
    pub fn sample_covariance(&self) -> Mat {
        linalg::symmetrize(&(self.x.transpose() * &self.x)) / self.rows() as f64
    }
}

fn check_sizes(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::invalid("d", "must be at least 1"));
    }
    Ok(())
}

fn fill_normal(rng: &mut Stream, n: usize, d: usize) -> Mat {
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            x[(i, j)] = rng::normal(rng);
        }
    }
    x
}

/// `n × d` design with i.i.d. standard normal entries.
pub fn sample_gaussian_design(n: usize, d: usize, seed: u64) -> Result<DesignMatrix> {
    check_sizes(n, d)?;
    DesignMatrix::new(fill_normal(&mut rng::stream(seed), n, d))
}

/// Rows from `λ δ_0 + (1−λ) N(0, (1−λ)^{-1} I_d)`, which has identity covariance.
pub fn sample_mixture_design(n: usize, d: usize, lambda: f64, seed: u64) -> Result<DesignMatrix> {
    check_sizes(n, d)?;
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("must lie in [0, 1), got {lambda}")));
    }
    let mut rng = rng::stream(seed);
    let scale = 1.0 / (1.0 - lambda).sqrt();
    let mut x = Mat::zeros(n, d);
    for i in 0..n {
        if rng::uniform(&mut rng) < lambda {
            continue;
        }
        for j in 0..d {
            x[(i, j)] = scale * rng::normal(&mut rng);
        }
    }
    DesignMatrix::new(x)
}

/// Growth profile `ψ` of a Markov design, with `r_t = ψ(t−1)/ψ(t)` and `ψ(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingFunction {
    /// `r_t ≡ 0`, i.e. `x_t = z_t`.
    Iid,
    /// `ψ(t) = base^t`.
    Exponential { base: f64 },
    /// `ψ(t) = t + 1`.
    Linear,
    /// `ψ(t) = 1 + log(t + 1)`.
    Log,
    /// `ψ(t) = 1 + log(1 + log(t + 1))`.
    LogLog,
    /// Explicit values `ψ(0), ψ(1), …`.
    Values(Vec<f64>),
}

impl ScalingFunction {
    /// Parses the short names `iid`, `5^t` (any base), `t+1`, `1+log(t+1)` and `1+loglog`.
    pub fn parse(name: &str) -> Result<Self> {
        let compact: String = name.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_str() {
            "iid" => Ok(ScalingFunction::Iid),
            "t+1" => Ok(ScalingFunction::Linear),
            "1+log(t+1)" | "1+log" => Ok(ScalingFunction::Log),
            "1+loglog" | "1+log(1+log(t+1))" => Ok(ScalingFunction::LogLog),
            s => match s.strip_suffix("^t").map(str::parse::<f64>) {
                Some(Ok(base)) if base > 1.0 => Ok(ScalingFunction::Exponential { base }),
                _ => Err(Error::Config {
                    key: Some("psi".into()),
                    message: format!("unknown scaling function {name:?}"),
                }),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScalingFunction::Iid => "iid".into(),
            ScalingFunction::Exponential { base } => format!("{base}^t"),
            ScalingFunction::Linear => "t+1".into(),
            ScalingFunction::Log => "1+log(t+1)".into(),
            ScalingFunction::LogLog => "1+loglog".into(),
            ScalingFunction::Values(_) => "custom".into(),
        }
    }

    /// `ψ(t)`; infinite for the i.i.d. profile when `t ≥ 1`.
    pub fn value(&self, t: usize) -> f64 {
        let tf = t as f64;
        match self {
            ScalingFunction::Iid => {
                if t == 0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            ScalingFunction::Exponential { base } => base.powf(tf),
            ScalingFunction::Linear => tf + 1.0,
            ScalingFunction::Log => 1.0 + (tf + 1.0).ln(),
            ScalingFunction::LogLog => 1.0 + (1.0 + (tf + 1.0).ln()).ln(),
            ScalingFunction::Values(v) => v.get(t).copied().unwrap_or(f64::NAN),
        }
    }

    /// `r_1, …, r_T`.
    pub fn ratios(&self, t_len: usize) -> Result<Vec<f64>> {
        match self {
            ScalingFunction::Iid => return Ok(vec![0.0; t_len]),
            ScalingFunction::Exponential { base } => {
                if !(*base >= 1.0) {
                    return Err(Error::invalid("psi", format!("base {base} makes psi decreasing")));
                }
                return Ok(vec![1.0 / base; t_len]);
            }
            ScalingFunction::Values(v) => {
                if v.len() <= t_len {
                    return Err(Error::invalid(
                        "psi",
                        format!("{} values supplied, {} needed", v.len(), t_len + 1),
                    ));
                }
                if v[0] != 1.0 {
                    return Err(Error::invalid("psi", format!("psi(0) must be 1, got {}", v[0])));
                }
            }
            _ => {}
        }
        (1..=t_len)
            .map(|t| {
                let (prev, cur) = (self.value(t - 1), self.value(t));
                if !(cur >= prev) {
                    return Err(Error::invalid("psi", format!("psi({t}) = {cur} < psi({}) = {prev}", t - 1)));
                }
                Ok(prev / cur)
            })
            .collect()
    }
}

/// One path of `x_t = √r_t x_{t−1} + √(1−r_t) z_t`, `x_0 = 0`, with its innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChainPath {
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

impl MarkovChainPath {
    /// Runs the recursion on given parameters and innovations.
    pub fn from_innovations(r: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        if r.len() != z.len() {
            return Err(Error::DimensionMismatch {
                name: "z",
                expected: format!("length {}", r.len()),
                found: z.len().to_string(),
            });
        }
        if let Some((t, v)) = r.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid("r", format!("r[{t}] = {v} outside [0, 1]")));
        }
        let mut x = Vec::with_capacity(r.len());
        let mut prev = 0.0;
        for (rt, zt) in r.iter().zip(&z) {
            prev = rt.sqrt() * prev + (1.0 - rt).sqrt() * zt;
            x.push(prev);
        }
        Ok(MarkovChainPath { r, x, z })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `Σ x_t²`.
    pub fn energy(&self) -> f64 {
        self.x.iter().map(|v| v * v).sum()
    }
}

pub fn markov_chain(psi: &ScalingFunction, t_len: usize, seed: u64) -> Result<MarkovChainPath> {
    if t_len == 0 {
        return Err(Error::invalid("T", "must be at least 1"));
    }
    let r = psi.ratios(t_len)?;
    let mut rng = rng::stream(seed);
    let z = (0..t_len).map(|_| rng::normal(&mut rng)).collect();
    MarkovChainPath::from_innovations(r, z)
}

/// `M` with `xᵀx = zᵀMz` for the chain driven by `r`.
///
/// For `s ≤ s'`, `M_{ss'} = √((1−r_s)(1−r_{s'})) Π_{τ=s+1}^{s'} √r_τ · S_{s'}` where
/// `S_{s'} = Σ_{t≥s'} Π_{τ=s'+1}^{t} r_τ` obeys `S_T = 1`, `S_t = 1 + r_{t+1} S_{t+1}`.
/// Products underflow to exact zeros, which is the correct limit.
pub fn markov_m_matrix(r: &[f64]) -> Mat {
    let t_len = r.len();
    let mut suffix = vec![1.0; t_len];
    for t in (0..t_len.saturating_sub(1)).rev() {
        suffix[t] = 1.0 + r[t + 1] * suffix[t + 1];
    }
    let w: Vec<f64> = r.iter().map(|v| (1.0 - v).max(0.0).sqrt()).collect();
    let mut m = Mat::zeros(t_len, t_len);
    for sp in 0..t_len {
        let mut prod = 1.0;
        for s in (0..=sp).rev() {
            if s < sp {
                prod *= r[s + 1].sqrt();
            }
            let v = w[s] * w[sp] * prod * suffix[sp];
            m[(s, sp)] = v;
            m[(sp, s)] = v;
            if prod == 0.0 {
                break;
            }
        }
    }
    m
}

/// Design for a Markov chain: the `T × 1` column of covariates.
pub fn sample_markov_design(psi: &ScalingFunction, t_len: usize, seed: u64) -> Result<DesignMatrix> {
    let path = markov_chain(psi, t_len, seed)?;
    DesignMatrix::new(Mat::from_vec(t_len, 1, path.x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// `φ_1 = 1`, `φ_{2j} = √2 cos(2πjx)`, `φ_{2j+1} = √2 sin(2πjx)` on `[0, 1]`.
    #[default]
    Fourier,
}

impl Basis {
    /// `φ_j(x)` with 1-based `j`.
    pub fn eval(self, j: usize, x: f64) -> f64 {
        match self {
            Basis::Fourier => {
                if j == 1 {
                    return 1.0;
                }
                let freq = (j / 2) as f64;
                let arg = 2.0 * std::f64::consts::PI * freq * x;
                if j % 2 == 0 {
                    std::f64::consts::SQRT_2 * arg.cos()
                } else {
                    std::f64::consts::SQRT_2 * arg.sin()
                }
            }
        }
    }
}

/// Truncated Mercer expansion `k(x, x') = Σ_{j≤k} μ_j φ_j(x) φ_j(x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub mu: Vec<f64>,
    #[serde(default)]
    pub basis: Basis,
}

impl KernelSpec {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::invalid("mu", "needs at least one eigenvalue"));
        }
        for (j, w) in mu.windows(2).enumerate() {
            if w[1] > w[0] {
                return Err(Error::invalid("mu", format!("increases at index {}: {} > {}", j + 1, w[1], w[0])));
            }
        }
        if let Some(v) = mu.last().filter(|v| !(**v > 0.0)) {
            return Err(Error::invalid("mu", format!("eigenvalues must be positive, got {v}")));
        }
        Ok(KernelSpec {
            mu,
            basis: Basis::Fourier,
        })
    }

    pub fn from_spectrum(spectrum: &Spectrum, k: usize) -> Result<Self> {
        Self::new(spectrum.take(k)?)
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    /// `Φ_k(x) = (√μ_j φ_j(x))_{j≤k}`.
    pub fn features(&self, x: f64) -> Result<Vector> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::invalid("x", format!("must lie in [0, 1], got {x}")));
        }
        Ok(self.features_unchecked(x))
    }

    fn features_unchecked(&self, x: f64) -> Vector {
        Vector::from_iterator(
            self.k(),
            self.mu
                .iter()
                .enumerate()
                .map(|(j, m)| m.sqrt() * self.basis.eval(j + 1, x)),
        )
    }
}

pub fn rkhs_features(spec: &KernelSpec, x: f64) -> Result<Vector> {
    spec.features(x)
}

fn feature_rows(spec: &KernelSpec, points: &[f64]) -> Result<DesignMatrix> {
    let mut x = Mat::zeros(points.len(), spec.k());
    for (i, &p) in points.iter().enumerate() {
        x.set_row(i, &spec.features_unchecked(p).transpose());
    }
    DesignMatrix::new(x)
}

/// Rows `Φ_k(x_i)` with `x_i ~ Uniform[0, 1]`.
pub fn sample_rkhs_design(spec: &KernelSpec, n: usize, seed: u64) -> Result<DesignMatrix> {
    check_sizes(n, spec.k())?;
    let mut rng = rng::stream(seed);
    let points: Vec<f64> = (0..n).map(|_| rng::uniform(&mut rng)).collect();
    feature_rows(spec, &points)
}

/// Rows `Φ_k(x_i)` with `x_i ~ (1/B) Uniform[0, 1] + (1 − 1/B) δ_0`.
pub fn sample_shift_design(b: f64, spec: &KernelSpec, n: usize, seed: u64) -> Result<DesignMatrix> {
    check_sizes(n, spec.k())?;
    if !(b >= 1.0 && b.is_finite()) {
        return Err(Error::invalid("B", format!("must be at least 1, got {b}")));
    }
    let mut rng = rng::stream(seed);
    let points: Vec<f64> = (0..n)
        .map(|_| {
            if rng::uniform(&mut rng) < 1.0 / b {
                rng::uniform(&mut rng)
            } else {
                0.0
            }
        })
        .collect();
    feature_rows(spec, &points)
}

/// A design law, as read from JSON `{"kind": ..., ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSampler {
    Gaussian {
        n: usize,
        d: usize,
    },
    Mixture {
        n: usize,
        d: usize,
        lambda: f64,
    },
    Markov {
        psi: String,
        #[serde(rename = "T")]
        t_len: usize,
    },
    Rkhs {
        n: usize,
        mu: Spectrum,
        k: usize,
    },
    Shift {
        n: usize,
        mu: Spectrum,
        k: usize,
        #[serde(rename = "B")]
        b: f64,
    },
    Fixed {
        x: Vec<Vec<f64>>,
    },
}

impl DesignSampler {
    pub fn name(&self) -> &'static str {
        match self {
            DesignSampler::Gaussian { .. } => "gaussian",
            DesignSampler::Mixture { .. } => "mixture",
            DesignSampler::Markov { .. } => "markov",
            DesignSampler::Rkhs { .. } => "rkhs",
            DesignSampler::Shift { .. } => "shift",
            DesignSampler::Fixed { .. } => "fixed",
        }
    }

    /// `(n, d)` of every design this sampler produces.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            DesignSampler::Gaussian { n, d } | DesignSampler::Mixture { n, d, .. } => (*n, *d),
            DesignSampler::Markov { t_len, .. } => (*t_len, 1),
            DesignSampler::Rkhs { n, k, .. } | DesignSampler::Shift { n, k, .. } => (*n, *k),
            DesignSampler::Fixed { x } => (x.len(), x.first().map_or(0, Vec::len)),
        }
    }

    pub fn sample(&self, seed: u64) -> Result<DesignMatrix> {
        match self {
            DesignSampler::Gaussian { n, d } => sample_gaussian_design(*n, *d, seed),
            DesignSampler::Mixture { n, d, lambda } => sample_mixture_design(*n, *d, *lambda, seed),
            DesignSampler::Markov { psi, t_len } => sample_markov_design(&ScalingFunction::parse(psi)?, *t_len, seed),
            DesignSampler::Rkhs { n, mu, k } => sample_rkhs_design(&KernelSpec::from_spectrum(mu, *k)?, *n, seed),
            DesignSampler::Shift { n, mu, k, b } => {
                sample_shift_design(*b, &KernelSpec::from_spectrum(mu, *k)?, *n, seed)
            }
            DesignSampler::Fixed { x } => DesignMatrix::new(linalg::from_rows("x", x)?),
        }
    }
}

/// Seeded sample `{G_i}` of whitened Gram matrices `X_iᵀ Σ_w^{-1} X_i`.
#[derive(Debug, Clone)]
pub struct GramEnsemble {
    grams: Vec<Mat>,
    seed: u64,
    n: usize,
    sigma: f64,
    sampler: Option<DesignSampler>,
}

/// `N` independent designs from `sampler` with isotropic noise level `sigma`.
pub fn gram_ensemble(sampler: &DesignSampler, replicates: usize, sigma: f64, seed: u64) -> Result<GramEnsemble> {
    if replicates == 0 {
        return Err(Error::invalid("n_replicates", "must be at least 1"));
    }
    let noise = NoiseModel::Isotropic { sigma };
    noise.validate()?;
    let grams = (0..replicates as u64)
        .into_par_iter()
        .map(|i| noise.gram(sampler.sample(rng::sub_seed(seed, i))?.matrix()))
        .collect::<Result<Vec<_>>>()?;
    Ok(GramEnsemble {
        grams,
        seed,
        n: sampler.shape().0,
        sigma,
        sampler: Some(sampler.clone()),
    })
}

impl GramEnsemble {
    /// Wraps precomputed Gram matrices; `n` and `sigma` record the normalization `G = n Σ̂ / σ²`.
    pub fn from_grams(grams: Vec<Mat>, n: usize, sigma: f64) -> Result<Self> {
        let Some(first) = grams.first() else {
            return Err(Error::invalid("grams", "ensemble needs at least one member"));
        };
        let d = first.nrows();
        for g in &grams {
            if g.nrows() != d || g.ncols() != d {
                return Err(Error::DimensionMismatch {
                    name: "grams",
                    expected: format!("{d}x{d}"),
                    found: format!("{}x{}", g.nrows(), g.ncols()),
                });
            }
            linalg::check_symmetric("G", g, 1e-8)?;
            let min = linalg::lambda_min(g);
            if min < -1e-8 * g.amax().max(1.0) {
                return Err(Error::NotPositiveDefinite {
                    name: "G",
                    index: 0,
                    value: min,
                });
            }
        }
        Ok(GramEnsemble {
            grams: grams.iter().map(linalg::symmetrize).collect(),
            seed: 0,
            n,
            sigma,
            sampler: None,
        })
    }

    /// The single-member ensemble `{XᵀX/σ²}`.
    pub fn fixed(x: &DesignMatrix, sigma: f64) -> Result<Self> {
        let noise = NoiseModel::Isotropic { sigma };
        noise.validate()?;
        let mut e = Self::from_grams(vec![noise.gram(x.matrix())?], x.rows(), sigma)?;
        e.sampler = Some(DesignSampler::Fixed {
            x: linalg::to_rows(x.matrix()),
        });
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.grams[0].nrows()
    }

    pub fn grams(&self) -> &[Mat] {
        &self.grams
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sampler(&self) -> Option<&DesignSampler> {
        self.sampler.as_ref()
    }

    /// `(1/N) Σ G_i`.
    pub fn mean(&self) -> Mat {
        self.grams.iter().fold(Mat::zeros(self.dim(), self.dim()), |acc, g| acc + g) / self.len() as f64
    }

    /// `Σ̂_i = σ² G_i / n`.
    pub fn sample_covariance(&self, i: usize) -> Mat {
        &self.grams[i] * (self.sigma * self.sigma / self.n as f64)
    }

    /// First `count` members.
    pub fn truncated(&self, count: usize) -> Self {
        GramEnsemble {
            grams: self.grams[..count.clamp(1, self.len())].to_vec(),
            ..self.clone()
        }
    }

    /// Matrices as nested arrays, for debugging small ensembles.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "seed": self.seed,
            "n": self.n,
            "sigma": self.sigma,
            "sampler": self.sampler,
            "grams": self.grams.iter().map(linalg::to_rows).collect::<Vec<_>>(),
        })
    }
}
