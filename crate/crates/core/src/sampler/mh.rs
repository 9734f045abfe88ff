//! Adaptive random-walk Metropolis–Hastings for the transition parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::conjugate::LearnerKernel;
use crate::learners::logistic;
use crate::model::ModelConfig;

/// Per-learner proposal scales and acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct MhState {
    /// Proposal standard deviations for `nu`.
    pub s_nu: Vec<f64>,
    /// Proposal standard deviations for `mu`.
    pub s_mu: Vec<f64>,
    pub window_accepted: Vec<usize>,
    pub window_proposed: Vec<usize>,
    pub adapting: bool,
    /// Acceptance counts since adaptation was frozen.
    pub frozen_accepted: Vec<usize>,
    pub frozen_proposed: Vec<usize>,
}

pub const ADAPT_LOWER: f64 = 0.30;
pub const ADAPT_UPPER: f64 = 0.60;

impl MhState {
    pub fn new(n_learners: usize, initial_scale: f64) -> Self {
        Self {
            s_nu: vec![initial_scale; n_learners],
            s_mu: vec![initial_scale; n_learners],
            window_accepted: vec![0; n_learners],
            window_proposed: vec![0; n_learners],
            adapting: true,
            frozen_accepted: vec![0; n_learners],
            frozen_proposed: vec![0; n_learners],
        }
    }

    pub fn record(&mut self, j: usize, accepted: bool) {
        self.window_proposed[j] += 1;
        self.window_accepted[j] += accepted as usize;
        if !self.adapting {
            self.frozen_proposed[j] += 1;
            self.frozen_accepted[j] += accepted as usize;
        }
    }

    /// Acceptance rates of the current window, NaN where nothing was proposed.
    pub fn window_rates(&self) -> Vec<f64> {
        self.window_accepted.iter().zip(&self.window_proposed).map(|(&a, &n)| if n == 0 { f64::NAN } else { a as f64 / n as f64 }).collect()
    }

    /// Acceptance rates accumulated since the scales were frozen.
    pub fn frozen_rates(&self) -> Vec<f64> {
        self.frozen_accepted.iter().zip(&self.frozen_proposed).map(|(&a, &n)| if n == 0 { f64::NAN } else { a as f64 / n as f64 }).collect()
    }

    /// Close the current window: shrink scales by 0.9 when the window's
    /// acceptance is below 0.30, grow them by 1.1 above 0.60, then reset the
    /// counters. Scales do not move once adaptation is frozen.
    pub fn adapt_proposals(&mut self) {
        for j in 0..self.s_nu.len() {
            if self.adapting && self.window_proposed[j] > 0 {
                let rate = self.window_accepted[j] as f64 / self.window_proposed[j] as f64;
                let factor = if rate < ADAPT_LOWER {
                    0.9
                } else if rate > ADAPT_UPPER {
                    1.1
                } else {
                    1.0
                };
                self.s_nu[j] *= factor;
                self.s_mu[j] *= factor;
            }
            self.window_accepted[j] = 0;
            self.window_proposed[j] = 0;
        }
    }

    pub fn freeze(&mut self) {
        self.adapting = false;
    }
}

/// Log prior of `(nu, mu)`: inverse-Gamma on `nu`, Gaussian on `mu`.
pub fn log_prior_nu_mu(nu: f64, mu: f64, cfg: &ModelConfig) -> f64 {
    if !(nu > 0.0) {
        return f64::NEG_INFINITY;
    }
    -(cfg.a_nu + 1.0) * nu.ln() - cfg.b_nu / nu - 0.5 * mu * mu / cfg.sigma2_mu
}

/// Which coordinates of `(nu, mu)` the random walk moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MhMoves {
    pub nu: bool,
    pub mu: bool,
}

/// One joint random-walk step for learner `j`'s `(nu, mu)` given its
/// selected covariate column `x`. Returns the new pair and whether the
/// proposal was accepted.
#[allow(clippy::too_many_arguments)]
pub fn sample_nu_mu<R: Rng + ?Sized>(
    kernel: &LearnerKernel,
    x: &[f64],
    nu: f64,
    mu: f64,
    scales: (f64, f64),
    moves: MhMoves,
    cfg: &ModelConfig,
    rng: &mut R,
) -> (f64, f64, bool) {
    let step_nu: f64 = rng.sample(StandardNormal);
    let step_mu: f64 = rng.sample(StandardNormal);
    let nu_star = if moves.nu { nu + scales.0 * step_nu } else { nu };
    let mu_star = if moves.mu { mu + scales.1 * step_mu } else { mu };
    let log_u = rng.random::<f64>().ln();
    if !(nu_star > 0.0) {
        return (nu, mu, false);
    }
    let eval = |nu: f64, mu: f64| {
        let s: Vec<f64> = x.iter().map(|&v| logistic(v, nu, mu)).collect();
        kernel.log_ml(&s) + log_prior_nu_mu(nu, mu, cfg)
    };
    let log_ratio = eval(nu_star, mu_star) - eval(nu, mu);
    if log_ratio.is_nan() {
        return (nu, mu, false);
    }
    if log_u < log_ratio {
        (nu_star, mu_star, true)
    } else {
        (nu, mu, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conjugate::NigPrior;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn in_band_window_keeps_scales() {
        let mut mh = MhState::new(2, 0.1);
        for i in 0..100 {
            mh.record(0, i % 100 < 45);
            mh.record(1, i % 10 == 0);
        }
        mh.adapt_proposals();
        assert_eq!(mh.s_nu[0], 0.1);
        assert!((mh.s_nu[1] - 0.09).abs() < 1e-15);
        assert!((mh.s_mu[1] - 0.09).abs() < 1e-15);
        assert_eq!(mh.window_proposed, vec![0, 0]);
    }

    #[test]
    fn high_acceptance_grows_scales() {
        let mut mh = MhState::new(1, 0.1);
        for _ in 0..50 {
            mh.record(0, true);
        }
        mh.adapt_proposals();
        assert!((mh.s_mu[0] - 0.11).abs() < 1e-15);
    }

    #[test]
    fn frozen_scales_never_change() {
        let mut mh = MhState::new(1, 0.3);
        mh.freeze();
        for w in 0..200 {
            for i in 0..50 {
                mh.record(0, (i + w) % 7 == 0);
            }
            mh.adapt_proposals();
        }
        assert_eq!(mh.s_nu[0], 0.3);
        assert_eq!(mh.s_mu[0], 0.3);
        assert_eq!(mh.frozen_proposed[0], 10_000);
    }

    #[test]
    fn negative_nu_has_zero_prior() {
        let cfg = ModelConfig::ast(1);
        assert_eq!(log_prior_nu_mu(-0.1, 0.0, &cfg), f64::NEG_INFINITY);
        assert_eq!(log_prior_nu_mu(0.0, 0.0, &cfg), f64::NEG_INFINITY);
        assert!(log_prior_nu_mu(1.0, 0.0, &cfg).is_finite());
    }

    #[test]
    fn zero_step_always_accepted() {
        let cfg = ModelConfig::ast(1);
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 10.0 - 1.0).collect();
        let r: Vec<f64> = x.iter().map(|v| v * 2.0).collect();
        let kernel = LearnerKernel::univariate(&r, &NigPrior::from_config(&cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (nu, mu, acc) = sample_nu_mu(&kernel, &x, 1.3, 0.2, (0.0, 0.0), MhMoves { nu: true, mu: true }, &cfg, &mut rng);
            assert!(acc);
            assert_eq!((nu, mu), (1.3, 0.2));
        }
    }

    #[test]
    fn proposals_below_zero_rejected() {
        let cfg = ModelConfig::ast(1);
        let x = vec![0.0, 1.0, -1.0];
        let kernel = LearnerKernel::univariate(&[1.0, 2.0, 0.0], &NigPrior::from_config(&cfg));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rejected = 0;
        for _ in 0..1000 {
            // a huge scale makes most proposals negative; all of those must be rejected
            let (nu, _, acc) = sample_nu_mu(&kernel, &x, 0.01, 0.0, (100.0, 0.0), MhMoves { nu: true, mu: false }, &cfg, &mut rng);
            assert!(nu > 0.0);
            rejected += !acc as usize;
        }
        assert!(rejected >= 450);
    }
}
