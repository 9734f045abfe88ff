//! Shared domain types: model configuration, base-learner parameters, retained
//! posterior draws and the time-series panel.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TransformCode;
use crate::error::{Error, Result};

/// Model and prior configuration shared by the univariate (AST) and
/// multivariate (VAST) samplers.
///
/// The MCMC schedule lives in [`crate::sampler::ChainSettings`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of base learners `J`.
    pub n_learners: usize,
    /// Lag order `P` (only used when covariates are built from lags).
    pub lags: usize,
    /// Number of endogenous series `M` (1 for the univariate model).
    pub n_series: usize,
    /// Prior scale: the coefficient prior covariance is `phi / J * I`.
    pub phi: f64,
    /// Inverse-Gamma shape of the error variance prior.
    pub a_sigma: f64,
    /// Inverse-Gamma rate of the error variance prior.
    pub b_sigma: f64,
    /// Inverse-Gamma shape of the speed-of-adjustment prior.
    pub a_nu: f64,
    /// Inverse-Gamma rate of the speed-of-adjustment prior.
    pub b_nu: f64,
    /// Prior variance of the thresholds.
    pub sigma2_mu: f64,
    /// Inverse-Wishart degrees of freedom.
    pub a_cov: f64,
    /// The inverse-Wishart scale matrix is `cov_scale * I`.
    pub cov_scale: f64,
    /// Hold every speed of adjustment at this value instead of sampling it.
    pub fix_nu: Option<f64>,
    /// Tie every threshold to the sample mean of its selected covariate.
    pub fix_mu_to_mean: bool,
}

impl ModelConfig {
    /// Defaults for the univariate model with `n_learners` base learners.
    pub fn ast(n_learners: usize) -> Self {
        Self {
            n_learners,
            lags: 1,
            n_series: 1,
            phi: 1.0,
            a_sigma: 0.01,
            b_sigma: 0.01,
            a_nu: 0.01,
            b_nu: 0.01,
            sigma2_mu: 10.0,
            a_cov: 1.0,
            cov_scale: 0.01,
            fix_nu: None,
            fix_mu_to_mean: false,
        }
    }

    /// Defaults for the multivariate model: `a_cov = M`, scale `I / 100`.
    pub fn vast(n_learners: usize, n_series: usize, lags: usize) -> Self {
        Self { lags, n_series, a_cov: n_series as f64, ..Self::ast(n_learners) }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("phi", self.phi),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("a_nu", self.a_nu),
            ("b_nu", self.b_nu),
            ("sigma2_mu", self.sigma2_mu),
            ("cov_scale", self.cov_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_learners == 0 {
            return Err(Error::Config("number of learners J must be at least 1".into()));
        }
        if self.lags == 0 {
            return Err(Error::Config("lag order P must be at least 1".into()));
        }
        if self.n_series == 0 {
            return Err(Error::Config("number of series M must be at least 1".into()));
        }
        if !(self.a_cov > self.n_series as f64 - 1.0) {
            return Err(Error::Config(format!(
                "inverse-Wishart degrees of freedom {} must exceed M - 1 = {}",
                self.a_cov,
                self.n_series - 1
            )));
        }
        if let Some(nu) = self.fix_nu {
            if !(nu.is_finite() && nu >= 0.0) {
                return Err(Error::Config(format!("fixed nu must be nonnegative, got {nu}")));
            }
        }
        Ok(())
    }

    /// Diagonal of the prior coefficient covariance, `phi / J`.
    pub fn prior_v_scale(&self) -> f64 {
        self.phi / self.n_learners as f64
    }
}

/// Free-parameter counts of the nonlinear model and of a linear VAR with the
/// same `M` and `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParameterCount {
    pub vast: usize,
    pub linear_var: usize,
}

/// `J(3 + 2M) + M(M+1)/2` for the nonlinear model, `M^2 P + M(M+1)/2` for the
/// unrestricted linear VAR.
pub fn parameter_count(cfg: &ModelConfig) -> ParameterCount {
    let (j, m, p) = (cfg.n_learners, cfg.n_series, cfg.lags);
    let cov = m * (m + 1) / 2;
    ParameterCount { vast: j * (3 + 2 * m) + cov, linear_var: m * m * p + cov }
}

/// Parameters of one base learner.
///
/// `delta` is the zero-based index of the covariate driving the transition;
/// `beta0` multiplies `S` and `beta1` multiplies `1 - S`. Both have length `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseLearnerParams {
    pub nu: f64,
    pub mu: f64,
    pub delta: usize,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
}

impl BaseLearnerParams {
    pub fn new(nu: f64, mu: f64, delta: usize, beta0: Vec<f64>, beta1: Vec<f64>) -> Self {
        Self { nu, mu, delta, beta0, beta1 }
    }

    /// Learner with zero location coefficients for `m` series.
    pub fn neutral(nu: f64, mu: f64, delta: usize, m: usize) -> Self {
        Self::new(nu, mu, delta, vec![0.0; m], vec![0.0; m])
    }

    pub fn n_series(&self) -> usize {
        self.beta0.len()
    }

    /// The one-hot selection vector of length `k`.
    pub fn selection_vector(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        if self.delta < k {
            v[self.delta] = 1.0;
        }
        v
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::InvalidParameter(format!("nu must be nonnegative, got {}", self.nu)));
        }
        if !self.mu.is_finite() {
            return Err(Error::NonFinite("learner threshold".into()));
        }
        if self.delta >= k {
            return Err(Error::Dimension(format!("selected covariate {} out of range for {k} covariates", self.delta)));
        }
        if self.beta0.len() != self.beta1.len() {
            return Err(Error::Dimension("beta0 and beta1 differ in length".into()));
        }
        if self.beta0.iter().chain(&self.beta1).any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("learner location coefficients".into()));
        }
        Ok(())
    }
}

/// One retained state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub learners: Vec<BaseLearnerParams>,
    /// Error covariance, `M x M`; the 1x1 case holds the error variance.
    pub sigma: DMatrix<f64>,
    /// Gaussian log-likelihood of the training data at this draw.
    pub loglik: f64,
}

impl PosteriorDraw {
    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    pub fn n_series(&self) -> usize {
        self.sigma.nrows()
    }

    /// Error variance of the univariate model.
    pub fn sigma2(&self) -> f64 {
        self.sigma[(0, 0)]
    }

    /// Stacked coefficients `(beta0_1, beta1_1, ..., beta0_J, beta1_J)` as a
    /// `2J x M` matrix.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let m = self.n_series();
        let mut b = DMatrix::zeros(2 * self.learners.len(), m);
        for (j, l) in self.learners.iter().enumerate() {
            for c in 0..m {
                b[(2 * j, c)] = l.beta0[c];
                b[(2 * j + 1, c)] = l.beta1[c];
            }
        }
        b
    }
}

/// How quickly a series responds to a financial shock within a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesClass {
    Slow,
    Policy,
    Fast,
}

impl std::str::FromStr for SeriesClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "slow" => Ok(SeriesClass::Slow),
            "policy" => Ok(SeriesClass::Policy),
            "fast" => Ok(SeriesClass::Fast),
            other => Err(Error::Data(format!("unknown series class '{other}'"))),
        }
    }
}

impl std::fmt::Display for SeriesClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeriesClass::Slow => "slow",
            SeriesClass::Policy => "policy",
            SeriesClass::Fast => "fast",
        })
    }
}

/// A multivariate time series with per-series metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    /// `T x M` observations.
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub tcodes: Vec<TransformCode>,
    pub classes: Vec<SeriesClass>,
    /// One label per row, e.g. `1990Q1` or `1990-01-01`.
    pub dates: Vec<String>,
}

impl TimeSeriesPanel {
    pub fn new(
        values: DMatrix<f64>,
        names: Vec<String>,
        tcodes: Vec<TransformCode>,
        classes: Vec<SeriesClass>,
        dates: Vec<String>,
    ) -> Result<Self> {
        let (t, m) = values.shape();
        if names.len() != m || tcodes.len() != m || classes.len() != m {
            return Err(Error::Dimension(format!(
                "panel has {m} columns but {} names, {} tcodes, {} classes",
                names.len(),
                tcodes.len(),
                classes.len()
            )));
        }
        if dates.len() != t {
            return Err(Error::Dimension(format!("panel has {t} rows but {} dates", dates.len())));
        }
        Ok(Self { values, names, tcodes, classes, dates })
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Whether `T > M * P`; fits with fewer observations still run but are
    /// dominated by the prior.
    pub fn has_enough_obs(&self, lags: usize) -> bool {
        self.n_obs() > self.n_series() * lags
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_rows(&self, start: usize, end: usize) -> TimeSeriesPanel {
        TimeSeriesPanel {
            values: self.values.rows(start, end - start).into_owned(),
            names: self.names.clone(),
            tcodes: self.tcodes.clone(),
            classes: self.classes.clone(),
            dates: self.dates[start..end].to_vec(),
        }
    }
}
