//! Logistic transition functions, base-learner evaluation and the matrix of
//! generated regressors.
//!
//! Row `t` of the generated-regressor matrix is
//! `(S_1t, 1 - S_1t, ..., S_Jt, 1 - S_Jt)` where `S_jt` is the logistic
//! transition of learner `j` evaluated at its selected covariate. The matrix is
//! stored column-major with each learner's pair of columns contiguous, so the
//! backfitting sweep can refresh one learner in `O(T)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::BaseLearnerParams;

/// `1 / (1 + exp(-nu (x - mu)))`, evaluated without overflow.
///
/// Only the exponential of a nonpositive argument is ever taken, so arguments
/// of any magnitude saturate cleanly at 0 or 1.
#[inline]
pub fn logistic(x: f64, nu: f64, mu: f64) -> f64 {
    let z = nu * (x - mu);
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Checked logistic transition. `nu = 0` is accepted and yields 1/2.
pub fn logistic_transition(x: f64, nu: f64, mu: f64) -> Result<f64> {
    if !(x.is_finite() && nu.is_finite() && mu.is_finite()) {
        return Err(Error::NonFinite(format!("logistic transition input (x={x}, nu={nu}, mu={mu})")));
    }
    if nu < 0.0 {
        return Err(Error::InvalidParameter(format!("speed of adjustment must be nonnegative, got {nu}")));
    }
    Ok(logistic(x, nu, mu))
}

/// `S * beta0 + (1 - S) * beta1` for one learner at covariate value `x`.
pub fn eval_base_learner(params: &BaseLearnerParams, x: f64) -> Result<Vec<f64>> {
    let s = logistic_transition(x, params.nu, params.mu)?;
    Ok(params.beta0.iter().zip(&params.beta1).map(|(b0, b1)| s * b0 + (1.0 - s) * b1).collect())
}

/// Write `logistic(x_t)` for every entry of `covariate` into `out`.
#[inline]
pub(crate) fn fill_transition(covariate: &[f64], nu: f64, mu: f64, out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(covariate) {
        *o = logistic(x, nu, mu);
    }
}

/// The `T x 2J` matrix of generated regressors.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    n_obs: usize,
    n_learners: usize,
    // column-major, columns (2j, 2j+1) = (S_j, 1 - S_j)
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Build from scratch. `x` is the `T x K` covariate matrix.
    pub fn build(learners: &[BaseLearnerParams], x: &DMatrix<f64>) -> Result<Self> {
        let mut z = Self { n_obs: x.nrows(), n_learners: learners.len(), data: vec![0.0; 2 * learners.len() * x.nrows()] };
        for (j, params) in learners.iter().enumerate() {
            z.refresh_learner_columns(j, params, x)?;
        }
        Ok(z)
    }

    /// Recompute only the pair of columns belonging to learner `j`.
    pub fn refresh_learner_columns(&mut self, j: usize, params: &BaseLearnerParams, x: &DMatrix<f64>) -> Result<()> {
        if j >= self.n_learners {
            return Err(Error::Dimension(format!("learner index {j} out of range for {} learners", self.n_learners)));
        }
        if x.nrows() != self.n_obs {
            return Err(Error::Dimension(format!("covariates have {} rows, transition matrix has {}", x.nrows(), self.n_obs)));
        }
        if params.delta >= x.ncols() {
            return Err(Error::Dimension(format!("learner {j} selects covariate {} but only {} exist", params.delta, x.ncols())));
        }
        if !(params.nu.is_finite() && params.nu >= 0.0 && params.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learner {j} has invalid transition parameters (nu={}, mu={})",
                params.nu, params.mu
            )));
        }
        let t = self.n_obs;
        let covariate = x.column(params.delta);
        let block = &mut self.data[2 * j * t..2 * (j + 1) * t];
        let (s, comp) = block.split_at_mut(t);
        fill_transition(covariate.as_slice(), params.nu, params.mu, s);
        for (c, &v) in comp.iter_mut().zip(s.iter()) {
            *c = 1.0 - v;
        }
        Ok(())
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_learners(&self) -> usize {
        self.n_learners
    }

    /// The transition column `S_j`.
    pub fn transition(&self, j: usize) -> &[f64] {
        let t = self.n_obs;
        &self.data[2 * j * t..(2 * j + 1) * t]
    }

    /// Both columns of learner `j`.
    pub fn pair(&self, j: usize) -> (&[f64], &[f64]) {
        let t = self.n_obs;
        self.data[2 * j * t..2 * (j + 1) * t].split_at(t)
    }

    /// `T x 2` block of learner `j`.
    pub fn learner_block(&self, j: usize) -> DMatrix<f64> {
        let t = self.n_obs;
        DMatrix::from_column_slice(t, 2, &self.data[2 * j * t..2 * (j + 1) * t])
    }

    /// Dense `T x 2J` copy.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.n_obs, 2 * self.n_learners, &self.data)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_covariates(t: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(t, k, |_, _| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn symmetry_point_is_one_half() {
        for nu in [0.1, 1.0, 50.0, 1e6] {
            assert_eq!(logistic_transition(0.7, nu, 0.7).unwrap(), 0.5);
        }
    }

    #[test]
    fn zero_speed_gives_one_half_everywhere() {
        for x in [-100.0, -1.0, 0.0, 3.0, 1e8] {
            assert_eq!(logistic_transition(x, 0.0, 1.5).unwrap(), 0.5);
        }
    }

    #[test]
    fn large_speed_approaches_indicator() {
        let mu = 0.3;
        assert!((logistic_transition(mu + 1.0, 1000.0, mu).unwrap() - 1.0).abs() < 1e-12);
        assert!(logistic_transition(mu - 1.0, 1000.0, mu).unwrap().abs() < 1e-12);
    }

    #[test]
    fn extreme_arguments_do_not_overflow() {
        for z in [700.0, 710.0, 1e5, 1e300] {
            let hi = logistic_transition(z, 1.0, 0.0).unwrap();
            let lo = logistic_transition(-z, 1.0, 0.0).unwrap();
            assert!(hi.is_finite() && (0.0..=1.0).contains(&hi));
            assert!(lo.is_finite() && (0.0..=1.0).contains(&lo));
            assert!((hi - 1.0).abs() < 1e-300 || hi == 1.0);
        }
        assert_eq!(logistic_transition(-1e300, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(matches!(logistic_transition(f64::NAN, 1.0, 0.0), Err(Error::NonFinite(_))));
        assert!(logistic_transition(0.0, f64::INFINITY, 0.0).is_err());
        assert!(logistic_transition(0.0, 1.0, f64::NEG_INFINITY).is_err());
        assert!(matches!(logistic_transition(0.0, -1.0, 0.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn equal_locations_collapse_mixture() {
        let p = BaseLearnerParams::new(3.0, 0.0, 0, vec![1.25, -2.0], vec![1.25, -2.0]);
        for x in [-5.0, 0.0, 0.1, 9.0] {
            assert_eq!(eval_base_learner(&p, x).unwrap(), vec![1.25, -2.0]);
        }
    }

    #[test]
    fn illustration_fitted_values() {
        // J = 1, smooth transition with nu = 0.3 around the covariate mean and
        // locations -0.9 / 1.4.
        let p = BaseLearnerParams::new(0.3, 0.2, 0, vec![-0.9], vec![1.4]);
        for x in [-4.0, -1.0, 0.2, 2.5, 6.0] {
            let s = logistic(x, 0.3, 0.2);
            let g = eval_base_learner(&p, x).unwrap()[0];
            assert!((g - (-0.9 * s + 1.4 * (1.0 - s))).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_transition_returns_beta0() {
        let p = BaseLearnerParams::new(1e4, 0.0, 0, vec![-4.2], vec![0.1]);
        assert_eq!(eval_base_learner(&p, 5.0).unwrap(), vec![-4.2]);
        assert_eq!(eval_base_learner(&p, -5.0).unwrap(), vec![0.1]);
    }

    #[test]
    fn zero_speed_matrix_is_constant_half() {
        let x = random_covariates(12, 3, 1);
        let z = TransitionMatrix::build(&[BaseLearnerParams::neutral(0.0, 0.4, 2, 1)], &x).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.5));
        assert_eq!(z.to_matrix().shape(), (12, 2));
    }

    #[test]
    fn quantile_threshold_gives_tail_indicator() {
        let x = random_covariates(400, 2, 7);
        let mut col: Vec<f64> = x.column(1).iter().copied().collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // midpoint between the two order statistics straddling the 0.99 quantile
        let q = 0.5 * (col[395] + col[396]);
        let learners = [BaseLearnerParams::neutral(0.3, 0.0, 0, 1), BaseLearnerParams::neutral(1000.0, q, 1, 1)];
        let z = TransitionMatrix::build(&learners, &x).unwrap();
        let s = z.transition(1);
        let active = s.iter().filter(|&&v| v > 0.5).count();
        assert_eq!(active, 4);
        for t in (0..400).filter(|&t| (x[(t, 1)] - q).abs() > 0.02) {
            let expected = if x[(t, 1)] > q { 1.0 } else { 0.0 };
            assert!((s[t] - expected).abs() < 1e-6, "t={t} x={} s={}", x[(t, 1)], s[t]);
        }
    }

    #[test]
    fn rows_sum_to_number_of_learners() {
        let x = random_covariates(30, 4, 3);
        let learners: Vec<_> = (0..5).map(|j| BaseLearnerParams::neutral(0.5 + j as f64, 0.1 * j as f64, j % 4, 1)).collect();
        let z = TransitionMatrix::build(&learners, &x).unwrap().to_matrix();
        for t in 0..30 {
            assert!((z.row(t).sum() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn refresh_with_same_params_is_bitwise_identical() {
        let x = random_covariates(25, 3, 5);
        let learners: Vec<_> = (0..3).map(|j| BaseLearnerParams::neutral(2.0, 0.0, j, 1)).collect();
        let z0 = TransitionMatrix::build(&learners, &x).unwrap();
        let mut z1 = z0.clone();
        z1.refresh_learner_columns(1, &learners[1], &x).unwrap();
        assert_eq!(z0, z1);
    }

    #[test]
    fn refresh_after_covariate_change_matches_direct_evaluation() {
        let x = random_covariates(25, 3, 9);
        let mut learners: Vec<_> = (0..2).map(|j| BaseLearnerParams::neutral(2.0, 0.1, j, 1)).collect();
        let mut z = TransitionMatrix::build(&learners, &x).unwrap();
        learners[0].delta = 2;
        z.refresh_learner_columns(0, &learners[0], &x).unwrap();
        for t in 0..25 {
            let direct = logistic_transition(x[(t, 2)], 2.0, 0.1).unwrap();
            assert_eq!(z.transition(0)[t], direct);
            assert_eq!(z.pair(0).1[t], 1.0 - direct);
        }
        assert_eq!(z, TransitionMatrix::build(&learners, &x).unwrap());
    }

    #[test]
    fn refresh_rejects_bad_index_and_dimensions() {
        let x = random_covariates(10, 2, 2);
        let learners = [BaseLearnerParams::neutral(1.0, 0.0, 0, 1)];
        let mut z = TransitionMatrix::build(&learners, &x).unwrap();
        assert!(matches!(z.refresh_learner_columns(1, &learners[0], &x), Err(Error::Dimension(_))));
        let bad = BaseLearnerParams::neutral(1.0, 0.0, 5, 1);
        assert!(z.refresh_learner_columns(0, &bad, &x).is_err());
        assert!(TransitionMatrix::build(&[bad], &x).is_err());
        let short = random_covariates(4, 2, 2);
        assert!(z.refresh_learner_columns(0, &learners[0], &short).is_err());
    }

    proptest! {
        #[test]
        fn logistic_is_monotone(nu in 0.001f64..50.0, mu in -3.0f64..3.0, a in -10.0f64..10.0, d in 0.0f64..5.0) {
            let lo = logistic_transition(a, nu, mu).unwrap();
            let hi = logistic_transition(a + d, nu, mu).unwrap();
            prop_assert!(hi >= lo);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }

        #[test]
        fn logistic_point_symmetry(nu in 0.0f64..100.0, mu in -5.0f64..5.0, x in -20.0f64..20.0) {
            let a = logistic_transition(x, nu, mu).unwrap();
            let b = logistic_transition(-(x - mu) + mu, nu, mu).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn incremental_refresh_equals_rebuild(seed in 0u64..10_000, n_learners in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = 4;
            let x = random_covariates(20, k, seed ^ 0xabc);
            let mut learners: Vec<_> = (0..n_learners)
                .map(|_| BaseLearnerParams::neutral(rng.random_range(0.0..20.0), rng.random_range(-2.0..2.0), rng.random_range(0..k), 1))
                .collect();
            let mut z = TransitionMatrix::build(&learners, &x).unwrap();
            for _ in 0..10 {
                let j = rng.random_range(0..n_learners);
                learners[j] = BaseLearnerParams::neutral(rng.random_range(0.0..20.0), rng.random_range(-2.0..2.0), rng.random_range(0..k), 1);
                z.refresh_learner_columns(j, &learners[j], &x).unwrap();
            }
            let rebuilt = TransitionMatrix::build(&learners, &x).unwrap();
            prop_assert_eq!(z.as_slice(), rebuilt.as_slice());
            for &v in z.as_slice() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
