//! Closed-form conjugate results for the location coefficients and the error
//! (co)variance given the generated regressors.
//!
//! Univariate: `beta | sigma2 ~ N(0, sigma2 V)`, `sigma2 ~ IG(a, b)` (shape,
//! rate). Multivariate: `vec(B) | Sigma ~ N(0, Sigma ⊗ V)`,
//! `Sigma ~ IW(df, S)`. In both cases `V = v_scale * I` with
//! `v_scale = phi / J`.
//!
//! With `df = 2a` and `S = 2b` the multivariate formulas at `M = 1` coincide
//! exactly with the univariate ones, including every normalising constant.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::{chol_log_det, det2, ln_mvgamma, spd_cholesky, symmetrize, Chol};
use crate::model::ModelConfig;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Normal–inverse-Gamma prior with zero prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct NigPrior {
    pub a: f64,
    pub b: f64,
    pub v_scale: f64,
}

impl NigPrior {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self { a: cfg.a_sigma, b: cfg.b_sigma, v_scale: cfg.prior_v_scale() }
    }
}

/// Matrix-normal–inverse-Wishart prior with zero prior mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MniwPrior {
    pub df: f64,
    pub scale: DMatrix<f64>,
    pub v_scale: f64,
}

impl MniwPrior {
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Self { df: cfg.a_cov, scale: DMatrix::identity(cfg.n_series, cfg.n_series) * cfg.cov_scale, v_scale: cfg.prior_v_scale() }
    }

    /// The `M = 1` prior equivalent to a univariate NIG prior.
    pub fn from_nig(prior: &NigPrior) -> Self {
        Self { df: 2.0 * prior.a, scale: DMatrix::from_element(1, 1, 2.0 * prior.b), v_scale: prior.v_scale }
    }

    pub fn n_series(&self) -> usize {
        self.scale.nrows()
    }
}

/// `p(beta, sigma2 | y, Z) = NIG(beta_bar, V_bar, a_bar, s_bar)`.
#[derive(Debug, Clone)]
pub struct NigPosterior {
    pub beta_bar: DVector<f64>,
    pub v_bar: DMatrix<f64>,
    pub a_bar: f64,
    pub s_bar: f64,
    precision_chol: Chol,
}

impl NigPosterior {
    /// `E[sigma2 | y]`, finite for `a_bar > 1`.
    pub fn sigma2_mean(&self) -> f64 {
        self.s_bar / (self.a_bar - 1.0)
    }

    /// `Var[sigma2 | y]`, finite for `a_bar > 2`.
    pub fn sigma2_var(&self) -> f64 {
        let a = self.a_bar;
        self.s_bar * self.s_bar / ((a - 1.0) * (a - 1.0) * (a - 2.0))
    }

    /// Marginal (Student-t) covariance of `beta`, `s_bar / (a_bar - 1) * V_bar`.
    pub fn beta_cov(&self) -> DMatrix<f64> {
        &self.v_bar * self.sigma2_mean()
    }

    /// One joint draw `(sigma2, beta)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, DVector<f64>) {
        let g: f64 = Gamma::new(self.a_bar, 1.0).expect("positive shape").sample(rng);
        let sigma2 = self.s_bar / g;
        let beta = self.draw_beta(sigma2, rng);
        (sigma2, beta)
    }

    /// `beta | sigma2 ~ N(beta_bar, sigma2 V_bar)`.
    pub fn draw_beta<R: Rng + ?Sized>(&self, sigma2: f64, rng: &mut R) -> DVector<f64> {
        let n = self.beta_bar.len();
        let eps = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        // V_bar = L^{-T} L^{-1} where L L' is the posterior precision
        let dev = self.precision_chol.l_dirty().tr_solve_lower_triangular(&eps).expect("nonsingular Cholesky factor");
        &self.beta_bar + dev * sigma2.sqrt()
    }
}

/// Posterior of the univariate regression `y = Z beta + e`.
///
/// `V_bar = (V^-1 + Z'Z)^-1`, `beta_bar = V_bar Z'y`, `a_bar = a + T/2`,
/// `s_bar = b + (y'y - beta_bar' V_bar^-1 beta_bar) / 2`.
pub fn nig_posterior(y: &DVector<f64>, z: &DMatrix<f64>, prior: &NigPrior) -> Result<NigPosterior> {
    if z.nrows() != y.len() {
        return Err(Error::Dimension(format!("y has {} rows, Z has {}", y.len(), z.nrows())));
    }
    let n = z.ncols();
    let mut precision = z.tr_mul(z);
    for i in 0..n {
        precision[(i, i)] += 1.0 / prior.v_scale;
    }
    let chol = spd_cholesky(&precision, "posterior precision V_bar^-1")?;
    let zty = z.tr_mul(y);
    let beta_bar = chol.solve(&zty);
    // y'y - b'V^-1 b written as a sum of squares so it stays nonnegative
    let resid = y - z * &beta_bar;
    let quad = resid.norm_squared() + beta_bar.norm_squared() / prior.v_scale;
    Ok(NigPosterior {
        v_bar: chol.inverse(),
        beta_bar,
        a_bar: prior.a + y.len() as f64 / 2.0,
        s_bar: prior.b + 0.5 * quad,
        precision_chol: chol,
    })
}

/// Full log marginal likelihood `log p(y | Z)` of the univariate model.
pub fn nig_log_marginal(y: &DVector<f64>, z: &DMatrix<f64>, prior: &NigPrior) -> Result<f64> {
    let post = nig_posterior(y, z, prior)?;
    let t = y.len() as f64;
    let n = z.ncols() as f64;
    let log_det_ratio = -chol_log_det(&post.precision_chol) - n * prior.v_scale.ln();
    Ok(-0.5 * t * LN_2PI + 0.5 * log_det_ratio + prior.a * prior.b.ln() - ln_gamma(prior.a) + ln_gamma(post.a_bar)
        - post.a_bar * post.s_bar.ln())
}

/// Log marginal likelihood of a partial residual `r` given one learner's
/// `T x 2` block of generated regressors, with the learner's coefficients
/// and the error variance integrated out:
///
/// `1/2 log(|V_bar|/|V|) - (a + T/2) log(b + (r'r - beta_bar' V_bar^-1 beta_bar)/2)`
/// plus terms that do not depend on the block.
pub fn collapsed_logml_uni(r: &DVector<f64>, z_cols: &DMatrix<f64>, prior: &NigPrior) -> Result<f64> {
    if z_cols.ncols() != 2 {
        return Err(Error::Dimension(format!("learner block must have 2 columns, got {}", z_cols.ncols())));
    }
    nig_log_marginal(r, z_cols, prior)
}

/// `p(B, Sigma | Y, Z) = MNIW(B_bar, V_bar, a_bar, S_bar)`.
#[derive(Debug, Clone)]
pub struct MniwPosterior {
    /// `2J x M` posterior mean; `beta_bar = vec(B_bar)`.
    pub b_bar: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub a_bar: f64,
    pub s_bar: DMatrix<f64>,
    precision_chol: Chol,
    s_bar_chol: Chol,
}

impl MniwPosterior {
    /// `E[Sigma | Y] = S_bar / (a_bar - M - 1)`.
    pub fn sigma_mean(&self) -> DMatrix<f64> {
        let m = self.s_bar.nrows() as f64;
        &self.s_bar / (self.a_bar - m - 1.0)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let sigma = sample_inverse_wishart_chol(self.a_bar, &self.s_bar_chol, rng);
        let b = self.draw_coefficients(&sigma, rng)?;
        Ok((sigma, b))
    }

    /// `vec(B) | Sigma ~ N(vec(B_bar), Sigma ⊗ V_bar)` through
    /// `B = B_bar + chol(V_bar) G chol(Sigma)'`; the `2JM`-dimensional
    /// covariance is never formed.
    pub fn draw_coefficients<R: Rng + ?Sized>(&self, sigma: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
        let sigma_chol = spd_cholesky(sigma, "Sigma draw")?;
        Ok(&self.b_bar + kronecker_noise(&self.precision_chol, &sigma_chol.l(), rng))
    }
}

/// `F G U'` with `F F' = V_bar` (from the posterior precision factor) and
/// `U = chol(Sigma)`.
pub(crate) fn kronecker_noise<R: Rng + ?Sized>(precision_chol: &Chol, sigma_l: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let n = precision_chol.l_dirty().nrows();
    let m = sigma_l.nrows();
    let g = DMatrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let fg = precision_chol.l_dirty().tr_solve_lower_triangular(&g).expect("nonsingular Cholesky factor");
    fg * sigma_l.transpose()
}

/// Posterior of the multivariate regression `Y = Z B + E`.
///
/// `V_bar = (V^-1 + Z'Z)^-1`, `B_bar = V_bar Z'Y`, `a_bar = df + T`,
/// `S_bar = S + Y'Y - B_bar' V_bar^-1 B_bar`.
pub fn mniw_posterior(y: &DMatrix<f64>, z: &DMatrix<f64>, prior: &MniwPrior) -> Result<MniwPosterior> {
    if z.nrows() != y.nrows() {
        return Err(Error::Dimension(format!("Y has {} rows, Z has {}", y.nrows(), z.nrows())));
    }
    if y.ncols() != prior.n_series() {
        return Err(Error::Dimension(format!("Y has {} columns, prior scale is {}x{}", y.ncols(), prior.n_series(), prior.n_series())));
    }
    let n = z.ncols();
    let mut precision = z.tr_mul(z);
    for i in 0..n {
        precision[(i, i)] += 1.0 / prior.v_scale;
    }
    let chol = spd_cholesky(&precision, "posterior precision V_bar^-1")?;
    let zty = z.tr_mul(y);
    let b_bar = chol.solve(&zty);
    let resid = y - z * &b_bar;
    let s_bar = symmetrize(&(&prior.scale + resid.tr_mul(&resid) + b_bar.tr_mul(&b_bar) / prior.v_scale));
    let s_bar_chol = spd_cholesky(&s_bar, "posterior scale S_bar").map_err(|_| {
        Error::NotPositiveDefinite(format!("posterior scale S_bar (min diagonal {:.3e}, T = {})", s_bar.diagonal().min(), y.nrows()))
    })?;
    Ok(MniwPosterior { v_bar: chol.inverse(), b_bar, a_bar: prior.df + y.nrows() as f64, s_bar, precision_chol: chol, s_bar_chol })
}

/// Full log marginal likelihood `log p(Y | Z)` of the multivariate model.
pub fn mniw_log_marginal(y: &DMatrix<f64>, z: &DMatrix<f64>, prior: &MniwPrior) -> Result<f64> {
    let post = mniw_posterior(y, z, prior)?;
    let t = y.nrows() as f64;
    let m = y.ncols();
    let mf = m as f64;
    let n = z.ncols() as f64;
    let log_det_ratio = -chol_log_det(&post.precision_chol) - n * prior.v_scale.ln();
    let prior_scale_chol = spd_cholesky(&prior.scale, "prior scale S")?;
    Ok(-0.5 * t * mf * LN_PI + 0.5 * mf * log_det_ratio + 0.5 * prior.df * chol_log_det(&prior_scale_chol)
        - 0.5 * post.a_bar * chol_log_det(&post.s_bar_chol)
        + ln_mvgamma(m, 0.5 * post.a_bar)
        - ln_mvgamma(m, 0.5 * prior.df))
}

/// Multivariate analogue of [`collapsed_logml_uni`]:
///
/// `M/2 log(|V_bar|/|V|) - (T + df)/2 log|S + R'R - B_bar' V_bar^-1 B_bar|`
/// plus terms that do not depend on the block.
pub fn collapsed_logml_multi(r: &DMatrix<f64>, z_cols: &DMatrix<f64>, prior: &MniwPrior) -> Result<f64> {
    if z_cols.ncols() != 2 {
        return Err(Error::Dimension(format!("learner block must have 2 columns, got {}", z_cols.ncols())));
    }
    mniw_log_marginal(r, z_cols, prior)
}

/// `sigma2 ~ IG(shape, rate)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g: f64 = Gamma::new(shape, 1.0).expect("positive shape").sample(rng);
    rate / g
}

/// `Sigma ~ IW(df, scale)` by the Bartlett decomposition.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(df: f64, scale: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    if !(df > scale.nrows() as f64 - 1.0) {
        return Err(Error::InvalidParameter(format!("inverse-Wishart degrees of freedom {df} must exceed {}", scale.nrows() as f64 - 1.0)));
    }
    let chol = spd_cholesky(scale, "inverse-Wishart scale")?;
    Ok(sample_inverse_wishart_chol(df, &chol, rng))
}

pub(crate) fn sample_inverse_wishart_chol<R: Rng + ?Sized>(df: f64, scale_chol: &Chol, rng: &mut R) -> DMatrix<f64> {
    let l = scale_chol.l();
    let m = l.nrows();
    // Sigma^-1 = C A A' C' with C = L^{-T}, so Sigma = (L A^{-T})(L A^{-T})'.
    let mut a = DMatrix::zeros(m, m);
    for i in 0..m {
        let chi: f64 = ChiSquared::new(df - i as f64).expect("positive dof").sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    let kt = a.solve_lower_triangular(&l.transpose()).expect("Bartlett factor has positive diagonal");
    symmetrize(&kt.tr_mul(&kt))
}

/// One learner's pair of generated-regressor columns reduced to the sums the
/// collapsed likelihood needs.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockMoments {
    s1: f64,
    s2: f64,
    t: f64,
}

impl BlockMoments {
    fn new(s: &[f64]) -> Self {
        let (mut s1, mut s2) = (0.0, 0.0);
        for &v in s {
            s1 += v;
            s2 += v * v;
        }
        Self { s1, s2, t: s.len() as f64 }
    }

    /// Entries `(p11, p12, p22)` of `Z_j'Z_j + ridge I`.
    fn precision(&self, ridge: f64) -> (f64, f64, f64) {
        (self.s2 + ridge, self.s1 - self.s2, self.t - 2.0 * self.s1 + self.s2 + ridge)
    }
}

/// Precomputed statistics of one partial residual, so the collapsed likelihood
/// of a candidate transition column costs `O(T)` (univariate) or `O(TM)`
/// (multivariate) instead of a fresh factorisation.
///
/// [`LearnerKernel::log_ml`] agrees with [`collapsed_logml_uni`] /
/// [`collapsed_logml_multi`] up to an additive constant that does not depend
/// on the transition column.
#[derive(Debug, Clone)]
pub enum LearnerKernel {
    Univariate {
        r: Vec<f64>,
        rr: f64,
        sum_r: f64,
        a_bar: f64,
        b: f64,
        ridge: f64,
    },
    Multivariate {
        r: DMatrix<f64>,
        /// `Q' = L^-1 R'` where `L L' = S + R'R`.
        qt: DMatrix<f64>,
        q_colsum: DVector<f64>,
        a_mat: DMatrix<f64>,
        log_det_a: f64,
        a_bar: f64,
        ridge: f64,
    },
}

impl LearnerKernel {
    pub fn univariate(r: &[f64], prior: &NigPrior) -> Self {
        LearnerKernel::Univariate {
            r: r.to_vec(),
            rr: r.iter().map(|v| v * v).sum(),
            sum_r: r.iter().sum(),
            a_bar: prior.a + r.len() as f64 / 2.0,
            b: prior.b,
            ridge: 1.0 / prior.v_scale,
        }
    }

    pub fn multivariate(r: &DMatrix<f64>, prior: &MniwPrior) -> Result<Self> {
        let a_mat = symmetrize(&(&prior.scale + r.tr_mul(r)));
        let chol = spd_cholesky(&a_mat, "S + R'R")?;
        let qt = chol.l_dirty().solve_lower_triangular(&r.transpose()).ok_or_else(|| Error::NotPositiveDefinite("S + R'R".into()))?;
        let q_colsum = qt.column_sum();
        Ok(LearnerKernel::Multivariate {
            r: r.clone(),
            qt,
            q_colsum,
            log_det_a: chol_log_det(&chol),
            a_mat,
            a_bar: prior.df + r.nrows() as f64,
            ridge: 1.0 / prior.v_scale,
        })
    }

    pub fn n_obs(&self) -> usize {
        match self {
            LearnerKernel::Univariate { r, .. } => r.len(),
            LearnerKernel::Multivariate { r, .. } => r.nrows(),
        }
    }

    /// Collapsed log marginal likelihood for transition column `s`
    /// (the complementary column is `1 - s`), up to a constant.
    pub fn log_ml(&self, s: &[f64]) -> f64 {
        let mom = BlockMoments::new(s);
        match self {
            LearnerKernel::Univariate { r, .. } => {
                let sr: f64 = s.iter().zip(r).map(|(a, b)| a * b).sum();
                self.score_uni(mom, sr)
            }
            LearnerKernel::Multivariate { qt, q_colsum, .. } => {
                let us = qt * DVectorView::from_slice(s, s.len());
                let g11 = us.norm_squared();
                self.score_multi(mom, g11, us.dot(q_colsum) - g11)
            }
        }
    }

    /// [`LearnerKernel::log_ml`] for every column of the `T x K` matrix of
    /// candidate transition columns, in column order.
    pub fn log_ml_many(&self, s_all: &DMatrix<f64>) -> Vec<f64> {
        let k = s_all.ncols();
        let moments: Vec<BlockMoments> = s_all.column_iter().map(|c| BlockMoments::new(c.as_slice())).collect();
        match self {
            LearnerKernel::Univariate { r, .. } => {
                let sr = s_all.tr_mul(&DVectorView::from_slice(r, r.len()));
                (0..k).map(|i| self.score_uni(moments[i], sr[i])).collect()
            }
            LearnerKernel::Multivariate { qt, q_colsum, .. } => {
                const CHUNK: usize = 32;
                let starts: Vec<usize> = (0..k).step_by(CHUNK).collect();
                let work = qt.len() * k;
                let eval = |&c0: &usize| {
                    let n = CHUNK.min(k - c0);
                    let u = qt * s_all.columns(c0, n);
                    (0..n)
                        .map(|i| {
                            let col = u.column(i);
                            let g11 = col.norm_squared();
                            self.score_multi(moments[c0 + i], g11, col.dot(q_colsum) - g11)
                        })
                        .collect::<Vec<f64>>()
                };
                let parts: Vec<Vec<f64>> =
                    if work > 200_000 { starts.par_iter().map(eval).collect() } else { starts.iter().map(eval).collect() };
                parts.concat()
            }
        }
    }

    fn score_uni(&self, mom: BlockMoments, sr: f64) -> f64 {
        let LearnerKernel::Univariate { sum_r, rr, a_bar, b, ridge, .. } = self else { unreachable!() };
        let (p11, p12, p22) = mom.precision(*ridge);
        let det = det2(p11, p12, p22);
        let (w1, w2) = (sr, sum_r - sr);
        // W' P^{-1} W for the 2x2 precision P
        let quad = (p22 * w1 * w1 - 2.0 * p12 * w1 * w2 + p11 * w2 * w2) / det;
        let resid = (rr - quad).max(0.0);
        -0.5 * det.ln() - a_bar * (b + 0.5 * resid).ln()
    }

    /// `g11 = |u_s|^2`, `g12 = u_s . (u_1 - u_s)` with `u = Q' s`.
    fn score_multi(&self, mom: BlockMoments, g11: f64, g12: f64) -> f64 {
        let LearnerKernel::Multivariate { qt, q_colsum, log_det_a, a_bar, ridge, .. } = self else { unreachable!() };
        let (p11, p12, p22) = mom.precision(*ridge);
        let det_p = det2(p11, p12, p22);
        // |u_1 - u_s|^2
        let g22 = q_colsum.norm_squared() - 2.0 * (g12 + g11) + g11;
        let det_inner = det2(p11 - g11, p12 - g12, p22 - g22);
        if !(det_inner > 0.0) {
            return f64::NEG_INFINITY;
        }
        let m = qt.nrows() as f64;
        -0.5 * m * det_p.ln() - 0.5 * a_bar * (log_det_a + det_inner.ln() - det_p.ln())
    }

    /// Joint draw of the error (co)variance and the learner's `2 x M`
    /// coefficients from their conditional posterior given transition column
    /// `s`. Returns `(Sigma, B_j)`; in the univariate case `Sigma` is 1x1.
    pub fn draw_block<R: Rng + ?Sized>(&self, s: &[f64], rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mom = BlockMoments::new(s);
        let t = s.len();
        match self {
            LearnerKernel::Univariate { r, rr, sum_r, a_bar, b, ridge } => {
                let (p11, p12, p22) = mom.precision(*ridge);
                let precision = DMatrix::from_row_slice(2, 2, &[p11, p12, p12, p22]);
                let chol = spd_cholesky(&precision, "learner posterior precision")?;
                let sr: f64 = s.iter().zip(r).map(|(a, b)| a * b).sum();
                let w = DVector::from_vec(vec![sr, sum_r - sr]);
                let beta_bar = chol.solve(&w);
                let resid = (rr - w.dot(&beta_bar)).max(0.0);
                let sigma2 = sample_inverse_gamma(*a_bar, b + 0.5 * resid, rng);
                let eps = DVector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
                let dev = chol.l_dirty().tr_solve_lower_triangular(&eps).expect("nonsingular");
                let beta = beta_bar + dev * sigma2.sqrt();
                Ok((DMatrix::from_element(1, 1, sigma2), DMatrix::from_column_slice(2, 1, beta.as_slice())))
            }
            LearnerKernel::Multivariate { r, a_mat, a_bar, ridge, .. } => {
                let (p11, p12, p22) = mom.precision(*ridge);
                let precision = DMatrix::from_row_slice(2, 2, &[p11, p12, p12, p22]);
                let chol = spd_cholesky(&precision, "learner posterior precision")?;
                let sv = DVectorView::from_slice(s, t);
                let ws = r.tr_mul(&sv);
                let total = r.row_sum().transpose();
                let mut w = DMatrix::zeros(2, r.ncols());
                w.row_mut(0).copy_from(&ws.transpose());
                w.row_mut(1).copy_from(&(total - &ws).transpose());
                let b_bar = chol.solve(&w);
                let s_bar = symmetrize(&(a_mat - w.tr_mul(&b_bar)));
                let s_chol = spd_cholesky(&s_bar, "learner posterior scale")?;
                let sigma = sample_inverse_wishart_chol(*a_bar, &s_chol, rng);
                let sigma_chol = spd_cholesky(&sigma, "Sigma draw")?;
                let b = b_bar + kronecker_noise(&chol, &sigma_chol.l(), rng);
                Ok((sigma, b))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::learners::logistic;

    fn synthetic(t: usize, m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut z = DMatrix::zeros(t, 2);
        for i in 0..t {
            let s = logistic(x[i], 1.5, 0.2);
            z[(i, 0)] = s;
            z[(i, 1)] = 1.0 - s;
        }
        let y = DMatrix::from_fn(t, m, |i, c| (c as f64 + 1.0) * z[(i, 0)] - 0.5 * z[(i, 1)] + 0.3 * rng.sample::<f64, _>(StandardNormal));
        (y, z)
    }

    fn uni_prior() -> NigPrior {
        NigPrior { a: 2.0, b: 1.5, v_scale: 0.8 }
    }

    #[test]
    fn empty_data_returns_prior() {
        let y = DVector::<f64>::zeros(0);
        let z = DMatrix::<f64>::zeros(0, 4);
        let prior = NigPrior { a: 0.01, b: 0.01, v_scale: 0.5 };
        let post = nig_posterior(&y, &z, &prior).unwrap();
        assert!(post.beta_bar.iter().all(|&b| b == 0.0));
        assert!((&post.v_bar - DMatrix::identity(4, 4) * 0.5).abs().max() < 1e-15);
        assert_eq!(post.a_bar, 0.01);
        assert_eq!(post.s_bar, 0.01);

        let ym = DMatrix::<f64>::zeros(0, 3);
        let mprior = MniwPrior { df: 3.0, scale: DMatrix::identity(3, 3) * 0.01, v_scale: 0.5 };
        let mpost = mniw_posterior(&ym, &z, &mprior).unwrap();
        assert!(mpost.b_bar.iter().all(|&b| b == 0.0));
        assert_eq!(mpost.s_bar, mprior.scale);
        assert_eq!(mpost.a_bar, 3.0);
    }

    #[test]
    fn flat_prior_limit_is_ols() {
        let (y, z) = synthetic(30, 1, 4);
        let y = y.column(0).into_owned();
        let prior = NigPrior { a: 0.01, b: 0.01, v_scale: 1e12 };
        let post = nig_posterior(&y, &z, &prior).unwrap();
        let ols = (z.tr_mul(&z)).try_inverse().unwrap() * z.tr_mul(&y);
        assert!((post.beta_bar - ols).abs().max() < 1e-8);
    }

    #[test]
    fn precision_times_covariance_is_identity() {
        let (y, z) = synthetic(40, 1, 8);
        let y = y.column(0).into_owned();
        let prior = uni_prior();
        let post = nig_posterior(&y, &z, &prior).unwrap();
        let precision = z.tr_mul(&z) + DMatrix::identity(2, 2) / prior.v_scale;
        let err = (&post.v_bar * precision - DMatrix::identity(2, 2)).abs().max();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn univariate_and_multivariate_paths_agree_at_m1() {
        let (y, z) = synthetic(25, 1, 11);
        let prior = uni_prior();
        let mprior = MniwPrior::from_nig(&prior);
        let u = nig_posterior(&y.column(0).into_owned(), &z, &prior).unwrap();
        let m = mniw_posterior(&y, &z, &mprior).unwrap();
        assert!((u.beta_bar - m.b_bar.column(0)).abs().max() < 1e-12);
        assert!((u.v_bar - &m.v_bar).abs().max() < 1e-12);
        assert!((2.0 * u.a_bar - m.a_bar).abs() < 1e-12);
        assert!((2.0 * u.s_bar - m.s_bar[(0, 0)]).abs() < 1e-10);
        let lu = collapsed_logml_uni(&y.column(0).into_owned(), &z, &prior).unwrap();
        let lm = collapsed_logml_multi(&y, &z, &mprior).unwrap();
        assert!((lu - lm).abs() < 1e-10, "{lu} vs {lm}");
    }

    #[test]
    fn constant_block_gives_identical_likelihood() {
        let (y, _) = synthetic(20, 1, 3);
        let r = y.column(0).into_owned();
        let z = DMatrix::from_element(20, 2, 0.5);
        let prior = uni_prior();
        let kernel = LearnerKernel::univariate(r.as_slice(), &prior);
        let half = vec![0.5; 20];
        let a = kernel.log_ml(&half);
        let b = collapsed_logml_uni(&r, &z, &prior).unwrap();
        assert!(a.is_finite() && b.is_finite());
    }

    #[test]
    fn zero_residual_plug_in() {
        let (_, z) = synthetic(12, 2, 5);
        let r = DMatrix::zeros(12, 2);
        let prior = MniwPrior { df: 4.0, scale: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]), v_scale: 0.5 };
        let full = collapsed_logml_multi(&r, &z, &prior).unwrap();
        let precision = z.tr_mul(&z) + DMatrix::identity(2, 2) / prior.v_scale;
        let log_ratio = -precision.determinant().ln() - 2.0 * prior.v_scale.ln();
        let theta_part = 1.0 * log_ratio - 0.5 * (12.0 + 4.0) * prior.scale.determinant().ln();
        let constant = -0.5 * 12.0 * 2.0 * LN_PI + 0.5 * 4.0 * prior.scale.determinant().ln() + ln_mvgamma(2, 8.0) - ln_mvgamma(2, 2.0);
        assert!((full - (theta_part + constant)).abs() < 1e-10);
    }

    #[test]
    fn kernels_match_full_likelihood_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = 30;
        let x: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let cands = [(0.5, 0.0), (3.0, 0.4), (20.0, -0.7), (0.0, 0.0)];
        let block = |nu: f64, mu: f64| {
            let s: Vec<f64> = x.iter().map(|&v| logistic(v, nu, mu)).collect();
            let z = DMatrix::from_fn(t, 2, |i, c| if c == 0 { s[i] } else { 1.0 - s[i] });
            (s, z)
        };
        // univariate
        let r = DVector::from_fn(t, |i, _| 2.0 * (x[i] > 0.3) as u8 as f64 + rng.sample::<f64, _>(StandardNormal));
        let prior = uni_prior();
        let kernel = LearnerKernel::univariate(r.as_slice(), &prior);
        let (s0, z0) = block(cands[0].0, cands[0].1);
        let offset = collapsed_logml_uni(&r, &z0, &prior).unwrap() - kernel.log_ml(&s0);
        for &(nu, mu) in &cands[1..] {
            let (s, z) = block(nu, mu);
            let full = collapsed_logml_uni(&r, &z, &prior).unwrap();
            assert!((full - kernel.log_ml(&s) - offset).abs() < 1e-9);
        }
        // multivariate
        let rm = DMatrix::from_fn(t, 3, |i, c| (c as f64 - 1.0) * x[i] + rng.sample::<f64, _>(StandardNormal));
        let mprior = MniwPrior { df: 3.0, scale: DMatrix::identity(3, 3) * 0.01, v_scale: 0.25 };
        let mk = LearnerKernel::multivariate(&rm, &mprior).unwrap();
        let offset = collapsed_logml_multi(&rm, &z0, &mprior).unwrap() - mk.log_ml(&s0);
        for &(nu, mu) in &cands[1..] {
            let (s, z) = block(nu, mu);
            let full = collapsed_logml_multi(&rm, &z, &mprior).unwrap();
            assert!((full - mk.log_ml(&s) - offset).abs() < 1e-8, "{full} {}", mk.log_ml(&s) + offset);
        }
    }

    #[test]
    fn batched_scores_match_single_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (t, k) = (25, 70);
        let s_all = DMatrix::from_fn(t, k, |_, _| rng.random::<f64>());
        let r = DMatrix::from_fn(t, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mprior = MniwPrior { df: 3.0, scale: DMatrix::identity(3, 3) * 0.01, v_scale: 0.5 };
        let kernels = [LearnerKernel::univariate(r.column(0).as_slice(), &uni_prior()), LearnerKernel::multivariate(&r, &mprior).unwrap()];
        for kernel in &kernels {
            let many = kernel.log_ml_many(&s_all);
            for (i, v) in many.iter().enumerate() {
                let single = kernel.log_ml(s_all.column(i).as_slice());
                assert!((v - single).abs() < 1e-9 * single.abs().max(1.0));
            }
        }
    }

    #[test]
    fn likelihood_ratio_unaffected_by_constant() {
        let (y, z) = synthetic(15, 1, 2);
        let r = y.column(0).into_owned();
        let prior = uni_prior();
        let z2 = DMatrix::from_fn(15, 2, |i, c| if c == 0 { 1.0 - z[(i, 0)] * 0.5 } else { z[(i, 0)] * 0.5 });
        let a = collapsed_logml_uni(&r, &z, &prior).unwrap();
        let b = collapsed_logml_uni(&r, &z2, &prior).unwrap();
        let c = 123.456;
        let accept = |la: f64, lb: f64| (la - lb).exp().min(1.0);
        assert!((accept(a, b) - accept(a + c, b + c)).abs() < 1e-12);
    }

    #[test]
    fn posterior_contracts_with_more_data() {
        let (y, z) = synthetic(60, 1, 6);
        let prior = uni_prior();
        let small = nig_posterior(&y.rows(0, 30).column(0).into_owned(), &z.rows(0, 30).into_owned(), &prior).unwrap();
        let big = nig_posterior(&y.column(0).into_owned(), &z, &prior).unwrap();
        for i in 0..2 {
            assert!(big.v_bar[(i, i)] <= small.v_bar[(i, i)]);
        }
    }

    #[test]
    fn argmax_scale_invariant_without_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = 40;
        let x: Vec<f64> = (0..t).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let r: Vec<f64> =
            x.iter().map(|&v| if v > 0.5 { 1.0 } else { -0.5 } + 0.2 * rng.sample::<f64, StandardNormal>(StandardNormal)).collect();
        let prior = NigPrior { a: 0.01, b: 0.0, v_scale: 0.5 };
        let grid: Vec<f64> = (-10..=10).map(|i| 0.1 * i as f64).collect();
        let argmax = |c: f64| {
            let rs: Vec<f64> = r.iter().map(|v| v * c).collect();
            let k = LearnerKernel::univariate(&rs, &prior);
            let scores: Vec<f64> = grid.iter().map(|&mu| k.log_ml(&x.iter().map(|&v| logistic(v, 8.0, mu)).collect::<Vec<_>>())).collect();
            (0..grid.len()).max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap()).unwrap()
        };
        assert_eq!(argmax(1.0), argmax(7.5));
        assert_eq!(argmax(1.0), argmax(0.02));
    }

    #[test]
    fn inverse_wishart_rejects_bad_dof() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_inverse_wishart(1.5, &DMatrix::identity(3, 3), &mut rng).is_err());
    }

    #[test]
    fn inverse_wishart_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let df = 9.0;
        let n = 40_000;
        let mut mean = DMatrix::zeros(2, 2);
        for _ in 0..n {
            mean += sample_inverse_wishart(df, &scale, &mut rng).unwrap();
        }
        mean /= n as f64;
        let expected = &scale / (df - 3.0);
        assert!((mean - expected).abs().max() < 0.01);
    }
}
