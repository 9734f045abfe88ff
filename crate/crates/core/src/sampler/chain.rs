//! The backfitting Gibbs sampler shared by the univariate and multivariate
//! models.
//!
//! One sweep visits every learner `j` in turn. With the other learners'
//! coefficients held fixed, `(delta_j, nu_j, mu_j)` are drawn with the
//! learner's own coefficients and the error (co)variance integrated out,
//! then `(Sigma, B_j)` are drawn from their joint conditional. After all
//! learners have moved, the error (co)variance is drawn given the generated
//! regressors alone and the full coefficient matrix given it.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::mh::{sample_nu_mu, MhMoves, MhState};
use super::{ChainDiagnostics, ChainOutput, ChainSettings};
use crate::conjugate::{mniw_posterior, nig_posterior, LearnerKernel, MniwPrior, NigPrior};
use crate::data::build_lag_matrix;
use crate::error::{Error, Result};
use crate::learners::{fill_transition, TransitionMatrix};
use crate::linalg::{chol_log_det, spd_cholesky};
use crate::model::{BaseLearnerParams, ModelConfig, PosteriorDraw};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Conjugate family and its prior.
#[derive(Debug, Clone)]
pub enum Family {
    Univariate(NigPrior),
    Multivariate(MniwPrior),
}

/// Normalised selection probabilities over all `K` candidate covariates for
/// one learner, from the collapsed likelihood of each candidate's transition
/// column. `mus[i]` is the threshold used for candidate `i`.
pub fn delta_probabilities(kernel: &LearnerKernel, x: &DMatrix<f64>, nu: f64, mus: &[f64]) -> Result<Vec<f64>> {
    let (t, k) = x.shape();
    let mut s_all = DMatrix::zeros(t, k);
    let fill = |(i, col): (usize, &mut [f64])| {
        fill_transition(x.column(i).as_slice(), nu, mus[i], col);
    };
    if t * k > 50_000 {
        s_all.as_mut_slice().par_chunks_mut(t).enumerate().for_each(fill);
    } else {
        s_all.as_mut_slice().chunks_mut(t).enumerate().for_each(fill);
    }
    let scores = kernel.log_ml_many(&s_all);
    let max = scores.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("every candidate covariate has a non-finite marginal likelihood".into()));
    }
    let mut probs: Vec<f64> = scores.iter().map(|&v| if v.is_finite() { (v - max).exp() } else { 0.0 }).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Draw a learner's selected covariate from its collapsed conditional.
pub fn sample_delta<R: Rng + ?Sized>(kernel: &LearnerKernel, x: &DMatrix<f64>, nu: f64, mus: &[f64], rng: &mut R) -> Result<usize> {
    if x.ncols() == 1 {
        return Ok(0);
    }
    let probs = delta_probabilities(kernel, x, nu, mus)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// A running chain. Exposed so callers can interleave sweeps with their own
/// steps (for instance redrawing the response in a joint-distribution test).
#[derive(Debug, Clone)]
pub struct Chain {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
    cfg: ModelConfig,
    family: Family,
    settings: ChainSettings,
    learners: Vec<BaseLearnerParams>,
    z: TransitionMatrix,
    sigma: DMatrix<f64>,
    fitted: DMatrix<f64>,
    x_means: Vec<f64>,
    moves: MhMoves,
    mh: MhState,
    rng: ChaCha8Rng,
    sweep: usize,
    diagnostics: ChainDiagnostics,
}

impl Chain {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>, cfg: ModelConfig, family: Family, settings: ChainSettings) -> Result<Self> {
        cfg.validate()?;
        settings.validate()?;
        let (t, k) = x.shape();
        if y.nrows() != t {
            return Err(Error::Dimension(format!("response has {} rows, covariates {t}", y.nrows())));
        }
        if t == 0 || k == 0 {
            return Err(Error::Data("no observations or no covariates".into()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("response or covariates contain non-finite values".into()));
        }
        let m = y.ncols();
        let j_count = cfg.n_learners;
        let x_means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let learners = match &settings.initial_learners {
            Some(init) => {
                if init.len() != j_count {
                    return Err(Error::Config(format!("{} initial learners for J = {j_count}", init.len())));
                }
                for l in init {
                    l.validate(k)?;
                    if l.n_series() != m {
                        return Err(Error::Dimension("initial learner coefficients do not match M".into()));
                    }
                }
                init.clone()
            }
            None => (0..j_count)
                .map(|_| {
                    let delta = rng.random_range(0..k);
                    let nu = cfg.fix_nu.unwrap_or(1.0);
                    let mu = if cfg.fix_mu_to_mean { x_means[delta] } else { 0.0 };
                    BaseLearnerParams::neutral(nu, mu, delta, m)
                })
                .collect(),
        };
        let z = TransitionMatrix::build(&learners, &x)?;
        let moves = MhMoves { nu: cfg.fix_nu.is_none(), mu: !cfg.fix_mu_to_mean };
        let mut mh = MhState::new(j_count, settings.initial_scale);
        if !settings.adapt {
            mh.freeze();
        }
        let mut chain = Self {
            fitted: DMatrix::zeros(t, m),
            sigma: DMatrix::identity(m, m),
            y,
            x,
            cfg,
            family,
            settings,
            learners,
            z,
            x_means,
            moves,
            mh,
            rng,
            sweep: 0,
            diagnostics: ChainDiagnostics::new(j_count),
        };
        chain.recompute_fitted();
        Ok(chain)
    }

    pub fn learners(&self) -> &[BaseLearnerParams] {
        &self.learners
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Sum of all learner fits, `T x M`.
    pub fn fitted(&self) -> &DMatrix<f64> {
        &self.fitted
    }

    pub fn transition_matrix(&self) -> &TransitionMatrix {
        &self.z
    }

    pub fn mh_state(&self) -> &MhState {
        &self.mh
    }

    pub fn sweeps_done(&self) -> usize {
        self.sweep
    }

    pub fn response(&self) -> &DMatrix<f64> {
        &self.y
    }

    /// Replace the response, keeping the current parameter state.
    pub fn set_response(&mut self, y: DMatrix<f64>) -> Result<()> {
        if y.shape() != self.y.shape() {
            return Err(Error::Dimension("replacement response has a different shape".into()));
        }
        self.y = y;
        Ok(())
    }

    fn learner_fit(&self, j: usize) -> DMatrix<f64> {
        let (s, c) = self.z.pair(j);
        let l = &self.learners[j];
        let m = self.y.ncols();
        DMatrix::from_fn(s.len(), m, |t, k| s[t] * l.beta0[k] + c[t] * l.beta1[k])
    }

    fn recompute_fitted(&mut self) {
        let mut total = DMatrix::zeros(self.y.nrows(), self.y.ncols());
        for j in 0..self.learners.len() {
            total += self.learner_fit(j);
        }
        self.fitted = total;
    }

    fn learner_gram(l: &BaseLearnerParams) -> DMatrix<f64> {
        let b0 = DVector::from_column_slice(&l.beta0);
        let b1 = DVector::from_column_slice(&l.beta1);
        &b0 * b0.transpose() + &b1 * b1.transpose()
    }

    /// Largest deviation between the maintained fit and a from-scratch sum
    /// of learner fits.
    pub fn fitted_drift(&self) -> f64 {
        let mut total = DMatrix::zeros(self.y.nrows(), self.y.ncols());
        for j in 0..self.learners.len() {
            total += self.learner_fit(j);
        }
        (total - &self.fitted).abs().max()
    }

    fn numerical(&self, e: Error) -> Error {
        match e {
            Error::Numerical { .. } => e,
            other if other.is_numerical() => Error::Numerical { sweep: self.sweep, detail: other.to_string() },
            other => other,
        }
    }

    /// One full sweep: every learner, then the error (co)variance and the
    /// coefficients given the generated regressors.
    pub fn sweep(&mut self) -> Result<()> {
        self.sweep_inner().map_err(|e| self.numerical(e))?;
        self.sweep += 1;
        self.diagnostics.loglik.push(self.log_likelihood().map_err(|e| self.numerical(e))?);
        self.diagnostics.sigma_trace.push(self.sigma.trace());
        if self.sweep.is_multiple_of(self.settings.adapt_window) {
            let rates = self.mh.window_rates();
            self.diagnostics.windows.push((self.sweep, rates, self.mh.adapting));
            self.mh.adapt_proposals();
        }
        if self.mh.adapting && self.sweep >= self.settings.n_burn / 2 {
            self.mh.freeze();
        }
        Ok(())
    }

    fn sweep_inner(&mut self) -> Result<()> {
        let j_count = self.learners.len();
        let m = self.y.ncols();
        let v_scale = self.cfg.prior_v_scale();
        self.recompute_fitted();
        let mut gram_total = DMatrix::zeros(m, m);
        for l in &self.learners {
            gram_total += Self::learner_gram(l);
        }
        let others = (j_count - 1) as f64;
        for j in 0..j_count {
            let fit_j = self.learner_fit(j);
            let r = &self.y - &self.fitted + &fit_j;
            let gram_j = Self::learner_gram(&self.learners[j]);
            let gram_others = &gram_total - &gram_j;
            let kernel = match &self.family {
                Family::Univariate(p) => {
                    let prior = NigPrior { a: p.a + others, b: p.b + 0.5 * gram_others[(0, 0)].max(0.0) / v_scale, v_scale };
                    LearnerKernel::univariate(r.as_slice(), &prior)
                }
                Family::Multivariate(p) => {
                    let prior = MniwPrior { df: p.df + 2.0 * others, scale: &p.scale + &gram_others / v_scale, v_scale };
                    LearnerKernel::multivariate(&r, &prior)?
                }
            };
            if self.settings.update_learners {
                self.update_transition(j, &kernel)?;
            }
            let (sigma, b) = kernel.draw_block(self.z.transition(j), &mut self.rng)?;
            let l = &mut self.learners[j];
            for c in 0..m {
                l.beta0[c] = b[(0, c)];
                l.beta1[c] = b[(1, c)];
            }
            if l.beta0.iter().chain(&l.beta1).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("coefficients of learner {j}")));
            }
            self.sigma = sigma;
            let new_fit = self.learner_fit(j);
            self.fitted += new_fit - fit_j;
            gram_total = gram_others + Self::learner_gram(&self.learners[j]);
        }
        self.draw_coefficients_given_transitions()?;
        Ok(())
    }

    fn update_transition(&mut self, j: usize, kernel: &LearnerKernel) -> Result<()> {
        let fix_mu = self.cfg.fix_mu_to_mean;
        let (nu, mu) = (self.learners[j].nu, self.learners[j].mu);
        let delta = if self.x.ncols() > 1 {
            let mus: Vec<f64> = if fix_mu { self.x_means.clone() } else { vec![mu; self.x.ncols()] };
            sample_delta(kernel, &self.x, nu, &mus, &mut self.rng)?
        } else {
            0
        };
        let mut mu = if fix_mu { self.x_means[delta] } else { mu };
        let mut nu = nu;
        if self.moves.nu || self.moves.mu {
            let (new_nu, new_mu, accepted) = sample_nu_mu(
                kernel,
                self.x.column(delta).as_slice(),
                nu,
                mu,
                (self.mh.s_nu[j], self.mh.s_mu[j]),
                self.moves,
                &self.cfg,
                &mut self.rng,
            );
            self.mh.record(j, accepted);
            nu = new_nu;
            mu = new_mu;
        }
        let l = &mut self.learners[j];
        l.delta = delta;
        l.nu = nu;
        l.mu = mu;
        self.z.refresh_learner_columns(j, &self.learners[j], &self.x)
    }

    fn draw_coefficients_given_transitions(&mut self) -> Result<()> {
        let z = self.z.to_matrix();
        let m = self.y.ncols();
        let b = match &self.family {
            Family::Univariate(p) => {
                let y = DVector::from_column_slice(self.y.as_slice());
                let post = nig_posterior(&y, &z, p)?;
                let (sigma2, beta) = post.draw(&mut self.rng);
                self.sigma = DMatrix::from_element(1, 1, sigma2);
                DMatrix::from_column_slice(beta.len(), 1, beta.as_slice())
            }
            Family::Multivariate(p) => {
                let post = mniw_posterior(&self.y, &z, p)?;
                let (sigma, b) = post.draw(&mut self.rng)?;
                self.sigma = sigma;
                b
            }
        };
        if b.iter().chain(self.sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coefficient or covariance draw".into()));
        }
        for (j, l) in self.learners.iter_mut().enumerate() {
            for c in 0..m {
                l.beta0[c] = b[(2 * j, c)];
                l.beta1[c] = b[(2 * j + 1, c)];
            }
        }
        self.recompute_fitted();
        Ok(())
    }

    /// Gaussian log-likelihood of the response at the current state.
    pub fn log_likelihood(&self) -> Result<f64> {
        let e = &self.y - &self.fitted;
        let (t, m) = e.shape();
        let chol = spd_cholesky(&self.sigma, "error covariance")?;
        let w = chol.l_dirty().solve_lower_triangular(&e.transpose()).expect("nonsingular factor");
        Ok(-0.5 * (t * m) as f64 * LN_2PI - 0.5 * t as f64 * chol_log_det(&chol) - 0.5 * w.norm_squared())
    }

    pub fn current_draw(&self) -> Result<PosteriorDraw> {
        Ok(PosteriorDraw { learners: self.learners.clone(), sigma: self.sigma.clone(), loglik: self.log_likelihood()? })
    }

    /// Run burn-in and the retained, thinned sweeps.
    pub fn run(mut self) -> Result<ChainOutput> {
        for _ in 0..self.settings.n_burn {
            self.sweep()?;
        }
        let mut draws = Vec::with_capacity(self.settings.n_save);
        while draws.len() < self.settings.n_save {
            for _ in 0..self.settings.thin {
                self.sweep()?;
            }
            draws.push(self.current_draw()?);
        }
        let mut diagnostics = self.diagnostics;
        diagnostics.s_nu = self.mh.s_nu.clone();
        diagnostics.s_mu = self.mh.s_mu.clone();
        diagnostics.acceptance = self.mh.frozen_rates();
        Ok(ChainOutput { draws, diagnostics })
    }
}

/// Fit the univariate model of `y` on the `T x K` covariates `x`.
pub fn run_chain_ast(y: &[f64], x: &DMatrix<f64>, cfg: &ModelConfig, settings: &ChainSettings) -> Result<ChainOutput> {
    if cfg.n_series != 1 {
        return Err(Error::Config(format!("the univariate model needs M = 1, got {}", cfg.n_series)));
    }
    let y = DMatrix::from_column_slice(y.len(), 1, y);
    let family = Family::Univariate(NigPrior::from_config(cfg));
    Chain::new(y, x.clone(), cfg.clone(), family, settings.clone())?.run()
}

/// Fit the multivariate model of `y` (`T x M`) on its own `P` lags.
pub fn run_chain_vast(y: &DMatrix<f64>, cfg: &ModelConfig, settings: &ChainSettings) -> Result<ChainOutput> {
    if cfg.n_series != y.ncols() {
        return Err(Error::Config(format!("configuration has M = {} but the data have {} series", cfg.n_series, y.ncols())));
    }
    let (x, y_aligned) = build_lag_matrix(y, cfg.lags)?;
    if y_aligned.nrows() <= cfg.n_series * cfg.lags {
        log::warn!(
            "only {} usable observations for M = {}, P = {}; the fit is dominated by the prior",
            y_aligned.nrows(),
            cfg.n_series,
            cfg.lags
        );
    }
    let family = Family::Multivariate(MniwPrior::from_config(cfg));
    Chain::new(y_aligned, x, cfg.clone(), family, settings.clone())?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn settings(seed: u64, burn: usize, save: usize) -> ChainSettings {
        ChainSettings { seed, n_burn: burn, n_save: save, ..Default::default() }
    }

    fn toy_data(t: usize, k: usize, seed: u64) -> (Vec<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(t, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = (0..t).map(|i| if x[(i, 1)] > 0.3 { 1.5 } else { -1.0 } + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
        (y, x)
    }

    #[test]
    fn single_candidate_always_selected() {
        let kernel = LearnerKernel::univariate(&[1.0, 2.0, 3.0], &NigPrior { a: 1.0, b: 1.0, v_scale: 1.0 });
        let x = DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 2.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(sample_delta(&kernel, &x, 1.0, &[0.0], &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn flat_transition_gives_uniform_selection() {
        let (y, x) = toy_data(40, 5, 1);
        let kernel = LearnerKernel::univariate(&y, &NigPrior { a: 1.0, b: 1.0, v_scale: 0.5 });
        let probs = delta_probabilities(&kernel, &x, 0.0, &[0.0; 5]).unwrap();
        for p in probs {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn bitwise_reproducible() {
        let (y, x) = toy_data(50, 3, 2);
        let cfg = ModelConfig::ast(3);
        let a = run_chain_ast(&y, &x, &cfg, &settings(9, 30, 20)).unwrap();
        let b = run_chain_ast(&y, &x, &cfg, &settings(9, 30, 20)).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = run_chain_ast(&y, &x, &cfg, &settings(10, 30, 20)).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn fitted_values_track_learner_sum() {
        let (y, x) = toy_data(60, 4, 3);
        let ym = DMatrix::from_column_slice(60, 1, &y);
        let cfg = ModelConfig::ast(4);
        let family = Family::Univariate(NigPrior::from_config(&cfg));
        let mut chain = Chain::new(ym, x, cfg, family, settings(1, 10, 10)).unwrap();
        for _ in 0..25 {
            chain.sweep().unwrap();
            assert!(chain.fitted_drift() < 1e-10);
            assert!(chain.sigma()[(0, 0)] > 0.0);
        }
    }

    #[test]
    fn finds_the_driving_covariate() {
        let (y, x) = toy_data(200, 4, 4);
        let cfg = ModelConfig::ast(1);
        let out = run_chain_ast(&y, &x, &cfg, &settings(5, 300, 300)).unwrap();
        let hits = out.draws.iter().filter(|d| d.learners[0].delta == 1).count();
        assert!(hits > 270, "{hits}");
    }

    #[test]
    fn multivariate_draws_are_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = DMatrix::from_fn(80, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cfg = ModelConfig::vast(3, 3, 2);
        let out = run_chain_vast(&y, &cfg, &settings(2, 40, 40)).unwrap();
        assert_eq!(out.draws.len(), 40);
        for d in &out.draws {
            assert!(nalgebra::Cholesky::new(d.sigma.clone()).is_some());
            assert_eq!(d.learners.len(), 3);
            assert!(d.learners.iter().all(|l| l.delta < 6 && l.nu > 0.0));
        }
    }

    #[test]
    fn restricted_variants_hold_parameters() {
        let (y, x) = toy_data(50, 3, 7);
        let mut cfg = ModelConfig::ast(2);
        cfg.fix_nu = Some(10.0);
        cfg.fix_mu_to_mean = true;
        let means: Vec<f64> = x.column_iter().map(|c| c.mean()).collect();
        let out = run_chain_ast(&y, &x, &cfg, &settings(3, 20, 20)).unwrap();
        for d in &out.draws {
            for l in &d.learners {
                assert_eq!(l.nu, 10.0);
                assert_eq!(l.mu, means[l.delta]);
            }
        }
        assert!(out.diagnostics.acceptance.iter().all(|a| a.is_nan()));
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let (y, x) = toy_data(20, 2, 8);
        let cfg = ModelConfig::vast(2, 2, 1);
        assert!(matches!(run_chain_ast(&y, &x, &cfg, &settings(0, 1, 1)), Err(Error::Config(_))));
        let ym = DMatrix::from_column_slice(20, 1, &y);
        assert!(matches!(run_chain_vast(&ym, &cfg, &settings(0, 1, 1)), Err(Error::Config(_))));
    }
}
