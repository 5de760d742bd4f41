//! Simulation drivers and the `minimax` command line dispatch.
//!
//! Every subcommand reads one JSON config and writes one output file (CSV for
//! the figure drivers, JSON otherwise). Results depend only on the config and
//! seed: parallel work is gathered into index order before any reduction.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::closed_form::{self, SequenceProblem, Spectrum};
use crate::ensembles::{gram_ensemble, markov_m_matrix, sample_mixture_design, DesignMatrix, DesignSampler, ScalingFunction};
use crate::error::{Error, Result};
use crate::estimator::RidgeEstimator;
use crate::functional::{self, OptimizerOptions};
use crate::linalg::{self, Mat, Vector};
use crate::problem::{MatrixSpec, PriorCovariance, ProblemConfig};
use crate::rng;
use crate::stats::Estimate;

pub const FIGURE1_HEADER: [&str; 9] = ["n", "tau", "lambda", "gamma", "d", "ell", "u", "stderr_ell", "stderr_u"];
pub const FIGURE2_HEADER: [&str; 5] = ["psi", "T", "tau", "phi_normalized", "stderr"];
pub const FIGURE1_VERSION: &str = "# minimax-figure1 v1";
pub const FIGURE2_VERSION: &str = "# minimax-figure2 v1";

fn default_gamma_grid() -> Vec<f64> {
    closed_form::log_grid(0.05, 4.0, 12)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure1Config {
    pub n_list: Vec<usize>,
    pub tau_list: Vec<f64>,
    pub lambda_list: Vec<f64>,
    pub gamma_grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for Figure1Config {
    fn default() -> Self {
        Figure1Config {
            n_list: vec![128, 512],
            tau_list: vec![1.0, 10.0],
            lambda_list: vec![0.0, 0.9, 0.99],
            gamma_grid: default_gamma_grid(),
            replicates: 50,
            seed: 0,
        }
    }
}

impl Figure1Config {
    pub fn validate(&self) -> Result<()> {
        let empty = |key: &str| Error::Config {
            key: Some(key.into()),
            message: "must be nonempty".into(),
        };
        if self.n_list.is_empty() {
            return Err(empty("n_list"));
        }
        if self.tau_list.is_empty() {
            return Err(empty("tau_list"));
        }
        if self.lambda_list.is_empty() {
            return Err(empty("lambda_list"));
        }
        if self.gamma_grid.is_empty() {
            return Err(empty("gamma_grid"));
        }
        if self.n_list.contains(&0) {
            return Err(Error::invalid("n_list", "sample sizes must be positive"));
        }
        if let Some(t) = self.tau_list.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::invalid("tau_list", format!("must be positive, got {t}")));
        }
        if let Some(l) = self.lambda_list.iter().find(|l| !(0.0..1.0).contains(*l)) {
            return Err(Error::invalid("lambda_list", format!("must lie in [0, 1), got {l}")));
        }
        if let Some(g) = self.gamma_grid.iter().find(|g| !(**g > 0.0)) {
            return Err(Error::invalid("gamma_grid", format!("must be positive, got {g}")));
        }
        if self.replicates < 2 {
            return Err(Error::invalid("replicates", "needs at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Figure1Row {
    pub n: usize,
    pub tau: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub d: usize,
    pub ell: f64,
    pub u: f64,
    pub stderr_ell: f64,
    pub stderr_u: f64,
}

/// `tr((Σ̂ + αI)^{-1})` from the nonzero eigenvalues of `Σ̂` and the dimension.
fn ridge_trace(eigs: &[f64], d: usize, alpha: f64) -> f64 {
    eigs.iter().map(|l| 1.0 / (l.max(0.0) + alpha)).sum::<f64>() + (d - eigs.len()) as f64 / alpha
}

/// Eigenvalues of `Σ̂ = XᵀX/n`, computed from the smaller of `XᵀX` and `XXᵀ`
/// after dropping zero rows. Returns at most `min(m, d)` values, `m` the
/// number of nonzero rows; the remaining eigenvalues are zero.
fn covariance_spectrum(x: &DesignMatrix) -> Vec<f64> {
    let n = x.rows() as f64;
    let rows: Vec<_> = x.matrix().row_iter().filter(|r| r.iter().any(|v| *v != 0.0)).collect();
    if rows.is_empty() {
        return Vec::new();
    }
    let xs = Mat::from_rows(&rows);
    let small = if xs.nrows() <= xs.ncols() {
        &xs * xs.transpose()
    } else {
        xs.transpose() * &xs
    };
    linalg::sym_eigenvalues(&(small / n)).iter().copied().collect()
}

/// Normalized risk bounds for the mixture designs.
///
/// With `d = ⌈γn⌉`, `u = (1/(τ²n)) E tr((Σ̂ + d/(nτ²) I)^{-1})` is the functional
/// at the isotropic prior and `ℓ` is the same expression with ridge
/// `d/(c_d n τ²)`, the isotropic prior shrunk by `c_d`. Both are divided by `ρ²`.
pub fn figure1(cfg: &Figure1Config) -> Result<Vec<Figure1Row>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for (ni, &n) in cfg.n_list.iter().enumerate() {
        for (li, &lambda) in cfg.lambda_list.iter().enumerate() {
            for (gi, &gamma) in cfg.gamma_grid.iter().enumerate() {
                jobs.push((ni, n, li, lambda, gi, gamma));
            }
        }
    }
    let results = jobs
        .par_iter()
        .map(|&(ni, n, li, lambda, gi, gamma)| {
            let d = ((gamma * n as f64).ceil() as usize).max(1);
            let job_seed = rng::sub_seed(rng::sub_seed(rng::sub_seed(cfg.seed, n as u64), li as u64), gi as u64);
            let spectra = (0..cfg.replicates as u64)
                .into_par_iter()
                .map(|r| Ok(covariance_spectrum(&sample_mixture_design(n, d, lambda, rng::sub_seed(job_seed, r))?)))
                .collect::<Result<Vec<_>>>()?;
            let cd = functional::dicker_cd(d);
            let rows = cfg
                .tau_list
                .iter()
                .enumerate()
                .map(|(ti, &tau)| {
                    let norm = 1.0 / (tau * tau * n as f64);
                    let alpha_u = d as f64 / (n as f64 * tau * tau);
                    let alpha_l = alpha_u / cd;
                    let us: Vec<f64> = spectra.iter().map(|e| norm * ridge_trace(e, d, alpha_u)).collect();
                    let ls: Vec<f64> = spectra.iter().map(|e| norm * ridge_trace(e, d, alpha_l)).collect();
                    let (u, l) = (Estimate::from_samples(&us), Estimate::from_samples(&ls));
                    let row = Figure1Row {
                        n,
                        tau,
                        lambda,
                        gamma,
                        d,
                        ell: l.mean,
                        u: u.mean,
                        stderr_ell: l.stderr,
                        stderr_u: u.stderr,
                    };
                    if row.ell > row.u + 2.0 * (row.stderr_ell + row.stderr_u) {
                        return Err(Error::Numerical(format!(
                            "lower bound {} exceeds upper bound {} at n={n}, tau={tau}, lambda={lambda}, gamma={gamma}",
                            row.ell, row.u
                        )));
                    }
                    Ok(((ni, ti, li, gi), row))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<_> = results.into_iter().flatten().collect();
    rows.sort_by_key(|(key, _)| *key);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

fn default_psi_names() -> Vec<String> {
    ["iid", "5^t", "t+1", "1+log(t+1)", "1+loglog"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Figure2Config {
    pub psi_names: Vec<String>,
    #[serde(rename = "T_grid")]
    pub t_grid: Vec<usize>,
    pub tau_list: Vec<f64>,
    pub mc_trials: usize,
    pub seed: u64,
}

impl Default for Figure2Config {
    fn default() -> Self {
        Figure2Config {
            psi_names: default_psi_names(),
            t_grid: vec![10, 31, 100, 316, 1000, 3162],
            tau_list: vec![1.0, 10.0],
            mc_trials: 5000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Figure2Row {
    pub psi: String,
    #[serde(rename = "T")]
    pub t: usize,
    pub tau: f64,
    pub phi_normalized: f64,
    pub stderr: f64,
}

/// `Φ_T(τ, 1)/τ²` for each scaling function, length and SNR.
///
/// All scaling functions and SNRs share the same innovations per trial.
pub fn figure2(cfg: &Figure2Config) -> Result<Vec<Figure2Row>> {
    if cfg.psi_names.is_empty() || cfg.t_grid.is_empty() || cfg.tau_list.is_empty() {
        return Err(Error::Config {
            key: Some("psi_names/T_grid/tau_list".into()),
            message: "grids must be nonempty".into(),
        });
    }
    if cfg.t_grid.windows(2).any(|w| w[1] <= w[0]) || cfg.t_grid[0] == 0 {
        return Err(Error::invalid("T_grid", "must be positive and strictly increasing"));
    }
    if let Some(t) = cfg.tau_list.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::invalid("tau_list", format!("must be positive, got {t}")));
    }
    let psis = cfg
        .psi_names
        .iter()
        .map(|name| ScalingFunction::parse(name))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (name, psi) in cfg.psi_names.iter().zip(&psis) {
        let per_tau = cfg
            .tau_list
            .iter()
            .map(|&tau| closed_form::markov_phi_chain(psi, &cfg.t_grid, tau, 1.0, cfg.mc_trials, cfg.seed))
            .collect::<Result<Vec<_>>>()?;
        for (k, &t) in cfg.t_grid.iter().enumerate() {
            for (ti, &tau) in cfg.tau_list.iter().enumerate() {
                let est = per_tau[ti][k].scaled(1.0 / (tau * tau));
                rows.push(Figure2Row {
                    psi: name.clone(),
                    t,
                    tau,
                    phi_normalized: est.mean,
                    stderr: est.stderr,
                });
            }
        }
    }
    Ok(rows)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(version: &str, header: &[&str], records: Vec<Vec<String>>) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{version}").expect("write to string");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Numerical(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Numerical(format!("csv encoding failed: {e}")))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn figure1_csv(rows: &[Figure1Row]) -> Result<String> {
    write_csv(
        FIGURE1_VERSION,
        &FIGURE1_HEADER,
        rows.iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    num(r.tau),
                    num(r.lambda),
                    num(r.gamma),
                    r.d.to_string(),
                    num(r.ell),
                    num(r.u),
                    num(r.stderr_ell),
                    num(r.stderr_u),
                ]
            })
            .collect(),
    )
}

pub fn figure2_csv(rows: &[Figure2Row]) -> Result<String> {
    write_csv(
        FIGURE2_VERSION,
        &FIGURE2_HEADER,
        rows.iter()
            .map(|r| vec![r.psi.clone(), r.t.to_string(), num(r.tau), num(r.phi_normalized), num(r.stderr)])
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Phi,
    Bracket,
    Figure1,
    Figure2,
    Sequence,
    Kernel,
    Covshift,
    Markov,
    Estimate,
    Dicker,
    Mourtada,
}

impl Subcommand {
    pub const ALL: [(&'static str, Subcommand); 11] = [
        ("phi", Subcommand::Phi),
        ("bracket", Subcommand::Bracket),
        ("figure1", Subcommand::Figure1),
        ("figure2", Subcommand::Figure2),
        ("sequence", Subcommand::Sequence),
        ("kernel", Subcommand::Kernel),
        ("covshift", Subcommand::Covshift),
        ("markov", Subcommand::Markov),
        ("estimate", Subcommand::Estimate),
        ("dicker", Subcommand::Dicker),
        ("mourtada", Subcommand::Mourtada),
    ];

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| *s)
            .ok_or_else(|| Error::Config {
                key: None,
                message: format!("unknown subcommand {name:?}"),
            })
    }
}

/// `phi` and `bracket` config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub problem: ProblemConfig,
    pub sampler: DesignSampler,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    /// `bracket` only: also evaluate the sharp lower bound.
    #[serde(default)]
    pub sharp: Option<SharpConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpConfig {
    pub tau: f64,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
}

fn default_mc_draws() -> usize {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub mu: Spectrum,
    pub n: f64,
    pub rho: f64,
    pub sigma: f64,
    /// Optional log-spaced `nρ²/σ²` grid for a rate fit, as `[lo, hi, points]`.
    #[serde(default)]
    pub rate_grid: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovshiftConfig {
    pub mu: Spectrum,
    #[serde(rename = "B")]
    pub b: f64,
    pub n: f64,
    pub rho: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkovConfig {
    pub psi: String,
    #[serde(rename = "T")]
    pub t_len: usize,
    pub rho: f64,
    pub sigma: f64,
    #[serde(default = "default_trials")]
    pub mc_trials: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_trials() -> usize {
    5000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DickerConfig {
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    pub sigma: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_replicates() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MourtadaConfig {
    pub sampler: DesignSampler,
    #[serde(rename = "Sigma_P", default = "identity_spec")]
    pub sigma_p: MatrixSpec,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

fn identity_spec() -> MatrixSpec {
    MatrixSpec::Named("identity".into())
}

fn one() -> f64 {
    1.0
}

/// `estimate` config: data CSV with columns `x_1..x_d, y`, and either an
/// explicit prior or a sampler from which `Ω⋆` is computed.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub problem: ProblemConfig,
    pub data: PathBuf,
    #[serde(rename = "Omega", default)]
    pub omega: Option<MatrixSpec>,
    #[serde(default)]
    pub sampler: Option<DesignSampler>,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

/// Extracts the backticked field from serde messages such as "missing field `rho`".
fn config_key(message: &str) -> Option<String> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(message[start..start + len].to_string())
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let message = e.to_string();
        Error::Config {
            key: config_key(&message),
            message,
        }
    })
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("results serialize");
    s.push('\n');
    s
}

/// Reads `x_1, …, x_d, y` rows from a CSV file with a header line.
pub fn read_xy_csv(path: &Path) -> Result<(DesignMatrix, Vector)> {
    let text = read(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Config {
            key: Some("data".into()),
            message: format!("{}: {e}", path.display()),
        })?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Config {
                key: Some("data".into()),
                message: format!("{}: record {}: {e}", path.display(), i + 1),
            })?;
        rows.push(row);
    }
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Config {
            key: Some("data".into()),
            message: format!("{}: need rows of equal width with at least one feature and y", path.display()),
        });
    }
    let x = Mat::from_fn(rows.len(), width - 1, |i, j| rows[i][j]);
    let y = Vector::from_iterator(rows.len(), rows.iter().map(|r| r[width - 1]));
    Ok((DesignMatrix::new(x)?, y))
}

/// Runs one subcommand: reads `config`, writes `out`. `seed` overrides the config seed.
pub fn run(sub: Subcommand, config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = read(config)?;
    let base = config.parent().unwrap_or(Path::new("."));
    let output = match sub {
        Subcommand::Phi | Subcommand::Bracket => {
            let mut cfg: FunctionalConfig = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.optimizer.seed = s;
            }
            let problem = cfg.problem.build()?;
            let ensemble = gram_ensemble(&cfg.sampler, cfg.optimizer.n_replicates, cfg.problem.sigma, cfg.optimizer.seed)?;
            if sub == Subcommand::Phi {
                to_json(&functional::maximize_phi(&problem, &ensemble, &cfg.optimizer)?)
            } else {
                let mut b = functional::risk_bracket(&problem, &ensemble, &cfg.optimizer)?;
                if let Some(sh) = &cfg.sharp {
                    let s = functional::sharp_lower(
                        &problem,
                        &ensemble,
                        sh.tau,
                        &b.omega_star,
                        sh.mc_draws,
                        rng::sub_seed(cfg.optimizer.seed, u64::MAX),
                    )?;
                    b.sharp_lower = Some(s.bound);
                    b.sharp_method = Some(functional::BoundMethod::SharpConstant);
                }
                to_json(&b)
            }
        }
        Subcommand::Figure1 => {
            let mut cfg: Figure1Config = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            figure1_csv(&figure1(&cfg)?)?
        }
        Subcommand::Figure2 => {
            let mut cfg: Figure2Config = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            figure2_csv(&figure2(&cfg)?)?
        }
        Subcommand::Sequence => {
            let cfg: SequenceProblem = parse_config(&text)?;
            to_json(&closed_form::pinsker_waterfill(&cfg)?)
        }
        Subcommand::Kernel => {
            let cfg: KernelConfig = parse_config(&text)?;
            let sol = closed_form::kernel_waterfill(&cfg.mu, cfg.n, cfg.rho, cfg.sigma)?;
            let slope = match (&cfg.rate_grid, &cfg.mu) {
                (Some((lo, hi, k)), Spectrum::Sobolev { beta, dim_x }) => {
                    Some(closed_form::sobolev_rate(*beta, *dim_x, &closed_form::log_grid(*lo, *hi, *k))?)
                }
                (Some(_), _) => {
                    return Err(Error::Config {
                        key: Some("rate_grid".into()),
                        message: "rate fits need a Sobolev spectrum".into(),
                    })
                }
                (None, _) => None,
            };
            to_json(&serde_json::json!({
                "level": sol.level,
                "value": sol.value,
                "active_set_size": sol.active_set_size,
                "allocation": sol.allocation,
                "rate_slope": slope,
            }))
        }
        Subcommand::Covshift => {
            let cfg: CovshiftConfig = parse_config(&text)?;
            to_json(&closed_form::covshift_lower(&cfg.mu, cfg.b, cfg.n, cfg.rho, cfg.sigma)?)
        }
        Subcommand::Markov => {
            let mut cfg: MarkovConfig = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let r = ScalingFunction::parse(&cfg.psi)?.ratios(cfg.t_len)?;
            let est = closed_form::markov_phi(&markov_m_matrix(&r), cfg.rho, cfg.sigma, cfg.mc_trials, cfg.seed)?;
            to_json(&serde_json::json!({ "phi": est, "r": r }))
        }
        Subcommand::Dicker => {
            let mut cfg: DickerConfig = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let est = closed_form::dicker_functional(cfg.n, cfg.d, cfg.rho, cfg.sigma, cfg.replicates, cfg.seed)?;
            to_json(&serde_json::json!({ "d_n": est, "c_d": functional::dicker_cd(cfg.d) }))
        }
        Subcommand::Mourtada => {
            let mut cfg: MourtadaConfig = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let ensemble = gram_ensemble(&cfg.sampler, cfg.replicates, cfg.sigma, cfg.seed)?;
            let sigma_p = cfg.sigma_p.build("Sigma_P", ensemble.dim())?;
            to_json(&serde_json::json!({ "limit": closed_form::mourtada_limit(&ensemble, &sigma_p)? }))
        }
        Subcommand::Estimate => {
            let mut cfg: EstimateConfig = parse_config(&text)?;
            if let Some(s) = seed {
                cfg.optimizer.seed = s;
            }
            let problem = cfg.problem.build()?;
            let prior = match (&cfg.omega, &cfg.sampler) {
                (Some(spec), _) => PriorCovariance::new(&problem, spec.build("Omega", problem.dim())?)?,
                (None, Some(sampler)) => {
                    let e = gram_ensemble(sampler, cfg.optimizer.n_replicates, cfg.problem.sigma, cfg.optimizer.seed)?;
                    functional::maximize_phi(&problem, &e, &cfg.optimizer)?.maximizer
                }
                (None, None) => {
                    return Err(Error::Config {
                        key: Some("Omega".into()),
                        message: "give either `Omega` or `sampler`".into(),
                    })
                }
            };
            let data = if cfg.data.is_absolute() { cfg.data.clone() } else { base.join(&cfg.data) };
            let (x, y) = read_xy_csv(&data)?;
            let est = RidgeEstimator::new(&problem, prior)?;
            let theta = est.fit(&x, &y)?;
            let mut j = est.to_json();
            j["theta_hat"] = serde_json::json!(theta.iter().collect::<Vec<_>>());
            to_json(&j)
        }
    };
    write(out, &output)
}
