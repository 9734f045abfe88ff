//! Backfitting MCMC for the univariate and multivariate models.

mod chain;
mod mh;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use chain::{delta_probabilities, run_chain_ast, run_chain_vast, sample_delta, Chain, Family};
pub use mh::{log_prior_nu_mu, sample_nu_mu, MhMoves, MhState, ADAPT_LOWER, ADAPT_UPPER};

use crate::error::{Error, Result};
use crate::model::{BaseLearnerParams, PosteriorDraw};

/// MCMC schedule and sampler switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainSettings {
    pub seed: u64,
    pub n_burn: usize,
    pub n_save: usize,
    pub thin: usize,
    /// Sweeps per adaptation window.
    pub adapt_window: usize,
    /// Initial random-walk standard deviation for `nu` and `mu`.
    pub initial_scale: f64,
    /// Tune proposal scales during the first half of burn-in.
    pub adapt: bool,
    /// When false the transition parameters stay at their initial values and
    /// only the coefficients and the error (co)variance are sampled.
    pub update_learners: bool,
    #[serde(skip)]
    pub initial_learners: Option<Vec<BaseLearnerParams>>,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            seed: 0,
            n_burn: 2000,
            n_save: 2000,
            thin: 1,
            adapt_window: 50,
            initial_scale: 0.1,
            adapt: true,
            update_learners: true,
            initial_learners: None,
        }
    }
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_save == 0 || self.thin == 0 || self.adapt_window == 0 {
            return Err(Error::Config("n_save, thin and the adaptation window must be positive".into()));
        }
        if !(self.initial_scale > 0.0 && self.initial_scale.is_finite()) {
            return Err(Error::Config(format!("initial proposal scale must be positive, got {}", self.initial_scale)));
        }
        Ok(())
    }
}

/// Per-sweep traces and per-learner acceptance statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub loglik: Vec<f64>,
    /// Trace of the error covariance (the variance when `M = 1`).
    pub sigma_trace: Vec<f64>,
    /// `(sweep, per-learner acceptance rate, adapting)` at every window end.
    pub windows: Vec<(usize, Vec<f64>, bool)>,
    pub s_nu: Vec<f64>,
    pub s_mu: Vec<f64>,
    /// Acceptance rate per learner since adaptation was frozen.
    pub acceptance: Vec<f64>,
}

impl ChainDiagnostics {
    pub fn new(n_learners: usize) -> Self {
        Self { s_nu: vec![f64::NAN; n_learners], s_mu: vec![f64::NAN; n_learners], ..Default::default() }
    }

    /// Long-format CSV with columns `record,sweep,learner,value`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["record", "sweep", "learner", "value"])?;
        for (i, v) in self.loglik.iter().enumerate() {
            w.write_record(["loglik", &(i + 1).to_string(), "", &v.to_string()])?;
        }
        for (i, v) in self.sigma_trace.iter().enumerate() {
            w.write_record(["sigma_trace", &(i + 1).to_string(), "", &v.to_string()])?;
        }
        for (sweep, rates, adapting) in &self.windows {
            let kind = if *adapting { "window_acceptance_adapting" } else { "window_acceptance" };
            for (j, r) in rates.iter().enumerate() {
                w.write_record([kind, &sweep.to_string(), &(j + 1).to_string(), &r.to_string()])?;
            }
        }
        for (kind, values) in [("acceptance", &self.acceptance), ("scale_nu", &self.s_nu), ("scale_mu", &self.s_mu)] {
            for (j, v) in values.iter().enumerate() {
                w.write_record([kind, "", &(j + 1).to_string(), &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Retained draws and diagnostics of one chain.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub draws: Vec<PosteriorDraw>,
    pub diagnostics: ChainDiagnostics,
}

/// Posterior-mean number of learners selecting each of the `k` covariates.
pub fn variable_relevance(draws: &[PosteriorDraw], k: usize) -> Vec<f64> {
    let mut scores = vec![0.0; k];
    if draws.is_empty() {
        return scores;
    }
    for d in draws {
        for l in &d.learners {
            if l.delta < k {
                scores[l.delta] += 1.0;
            }
        }
    }
    let n = draws.len() as f64;
    scores.iter_mut().for_each(|s| *s /= n);
    scores
}

/// Arrange scores for lag-stacked covariates `(y'_{t-1}, ..., y'_{t-P})` as
/// an `M x P` table (row: series, column: lag).
pub fn relevance_by_lag(scores: &[f64], m: usize, p: usize) -> Result<nalgebra::DMatrix<f64>> {
    if scores.len() != m * p {
        return Err(Error::Dimension(format!("{} scores for M = {m}, P = {p}", scores.len())));
    }
    Ok(nalgebra::DMatrix::from_fn(m, p, |i, l| scores[l * m + i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn draw_with(deltas: &[usize]) -> PosteriorDraw {
        PosteriorDraw {
            learners: deltas.iter().map(|&d| BaseLearnerParams::neutral(1.0, 0.0, d, 1)).collect(),
            sigma: DMatrix::identity(1, 1),
            loglik: 0.0,
        }
    }

    #[test]
    fn single_learner_scores_sum_to_one() {
        let draws: Vec<_> = (0..10).map(|i| draw_with(&[i % 4])).collect();
        let s = variable_relevance(&draws, 4);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unanimous_selection_scores_j() {
        let draws: Vec<_> = (0..5).map(|_| draw_with(&[2, 2, 2])).collect();
        assert_eq!(variable_relevance(&draws, 4), vec![0.0, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn lag_layout() {
        let scores = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let t = relevance_by_lag(&scores, 2, 3).unwrap();
        assert_eq!(t[(0, 0)], 1.0);
        assert_eq!(t[(1, 0)], 2.0);
        assert_eq!(t[(0, 2)], 5.0);
    }

    #[test]
    fn diagnostics_csv_has_header() {
        let mut d = ChainDiagnostics::new(2);
        d.loglik = vec![-1.0, -2.0];
        d.windows.push((50, vec![0.4, 0.5], true));
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("record,sweep,learner,value\nloglik,1,,-1\n"));
        assert!(text.contains("window_acceptance_adapting,50,2,0.5"));
    }

    #[test]
    fn invalid_settings_rejected() {
        let s = ChainSettings { thin: 0, ..Default::default() };
        assert!(s.validate().is_err());
    }
}
