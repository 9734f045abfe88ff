//! Recursive identification and generalized impulse responses.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Standardization;
use crate::error::{Error, Result};
use crate::linalg::spd_cholesky;
use crate::model::{PosteriorDraw, SeriesClass};
use crate::predict::{derive_seed, quantile_sorted, simulate_path, DEFAULT_QUANTILES};

/// Recursive ordering of the variables. `order()[k]` is the original index
/// of the variable placed at position `k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableOrdering {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl VariableOrdering {
    pub fn identity(m: usize) -> Self {
        Self { order: (0..m).collect(), position: (0..m).collect() }
    }

    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let m = order.len();
        let mut position = vec![usize::MAX; m];
        for (k, &v) in order.iter().enumerate() {
            if v >= m || position[v] != usize::MAX {
                return Err(Error::Config(format!("{order:?} is not a permutation of 0..{m}")));
            }
            position[v] = k;
        }
        Ok(Self { order, position })
    }

    /// Slow variables, then policy variables, then the shock variable, then
    /// the remaining fast variables; original order is kept inside a group.
    pub fn from_classes(classes: &[SeriesClass], shock: usize, names: &[String]) -> Result<Self> {
        let m = classes.len();
        if shock >= m {
            return Err(Error::Config(format!("shock variable index {shock} out of range for {m} series")));
        }
        let label = |i: usize| names.get(i).cloned().unwrap_or_else(|| format!("#{i}"));
        if classes[shock] != SeriesClass::Fast {
            return Err(Error::Config(format!(
                "shock variable {} is classed '{}' but must be ordered after all slow and policy variables; \
                 class it 'fast' or choose another shock",
                label(shock),
                classes[shock]
            )));
        }
        let mut order: Vec<usize> = Vec::with_capacity(m);
        order.extend((0..m).filter(|&i| classes[i] == SeriesClass::Slow));
        order.extend((0..m).filter(|&i| classes[i] == SeriesClass::Policy));
        order.push(shock);
        order.extend((0..m).filter(|&i| classes[i] == SeriesClass::Fast && i != shock));
        Self::from_order(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of original variable `var` in the ordering.
    pub fn position_of(&self, var: usize) -> usize {
        self.position[var]
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `P Sigma P'` with rows and columns in ordering positions.
    pub fn permute(&self, sigma: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| sigma[(self.order[i], self.order[j])])
    }
}

/// Lower-triangular Cholesky factor of the ordering-permuted covariance.
pub fn identify_recursive(sigma: &DMatrix<f64>, ordering: &VariableOrdering) -> Result<DMatrix<f64>> {
    if sigma.shape() != (ordering.len(), ordering.len()) {
        return Err(Error::Dimension(format!("covariance is {:?} but the ordering has {} variables", sigma.shape(), ordering.len())));
    }
    Ok(spd_cholesky(&ordering.permute(sigma), "error covariance")?.l())
}

/// Impact matrix in original variable order: column `k` is the response of
/// every variable to a unit structural shock at ordering position `k`.
pub fn impact_matrix(sigma: &DMatrix<f64>, ordering: &VariableOrdering) -> Result<DMatrix<f64>> {
    let l = identify_recursive(sigma, ordering)?;
    let m = ordering.len();
    Ok(DMatrix::from_fn(m, m, |v, k| l[(ordering.position_of(v), k)]))
}

/// Generalized impulse response settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirfSpec {
    /// Ordering position of the shocked structural innovation.
    pub shock_index: usize,
    /// Shock size in standard deviations; the sign sets the direction.
    pub w: f64,
    pub horizon: usize,
    /// Simulated path pairs per (draw, state).
    pub n_shock_draws: usize,
    /// Use every `state_stride`-th historical state.
    pub state_stride: usize,
    pub seed: u64,
}

impl Default for GirfSpec {
    fn default() -> Self {
        Self { shock_index: 0, w: 1.0, horizon: 20, n_shock_draws: 20, state_stride: 1, seed: 0 }
    }
}

impl GirfSpec {
    pub fn validate(&self, m: usize) -> Result<()> {
        if self.horizon < 1 || self.n_shock_draws < 1 || self.state_stride < 1 {
            return Err(Error::Config("GIRF horizon, shock draws and state stride must be at least 1".into()));
        }
        if self.shock_index >= m {
            return Err(Error::Config(format!("shock position {} out of range for {m} series", self.shock_index)));
        }
        if !self.w.is_finite() {
            return Err(Error::Config(format!("shock size must be finite, got {}", self.w)));
        }
        Ok(())
    }
}

/// Simulate one path (fitting scale) in which the structural innovations are
/// `xi` (`H x M`, ordering positions) except that the shocked innovation is
/// `w` on impact and zero afterwards.
pub fn conditional_path(
    draw: &PosteriorDraw,
    impact: &DMatrix<f64>,
    history: &DMatrix<f64>,
    lags: usize,
    shock_index: usize,
    w: f64,
    xi: &DMatrix<f64>,
) -> DMatrix<f64> {
    let horizon = xi.nrows();
    let mut dummy = ChaCha8Rng::seed_from_u64(0);
    simulate_path(draw, history, lags, horizon, &mut dummy, |h, _| {
        let mut e: DVector<f64> = xi.row(h).transpose();
        e[shock_index] = if h == 0 { w } else { 0.0 };
        impact * e
    })
}

/// One shock-conditional path from `history` with fresh innovations.
pub fn conditional_predictive<R: Rng + ?Sized>(
    draw: &PosteriorDraw,
    history: &DMatrix<f64>,
    lags: usize,
    ordering: &VariableOrdering,
    spec: &GirfSpec,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    spec.validate(ordering.len())?;
    if history.nrows() < lags {
        return Err(Error::Data(format!("history has {} rows but the model uses {lags} lags", history.nrows())));
    }
    let impact = impact_matrix(&draw.sigma, ordering)?;
    let xi = standard_normals(spec.horizon, ordering.len(), rng);
    Ok(conditional_path(draw, &impact, history, lags, spec.shock_index, spec.w, &xi))
}

fn standard_normals<R: Rng + ?Sized>(h: usize, m: usize, rng: &mut R) -> DMatrix<f64> {
    let v: Vec<f64> = (0..h * m).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(h, m, &v)
}

/// Historical states used by `girf`: the number of observed rows preceding
/// each forecast origin.
pub fn girf_states(t: usize, lags: usize, stride: usize) -> Vec<usize> {
    (lags..=t).step_by(stride.max(1)).collect()
}

/// GIRF of one draw at one state (fitting scale), averaged over the shock
/// replicates. `history_std` is the standardised sample; the state uses its
/// first `state` rows.
pub fn girf_for_state(
    draw: &PosteriorDraw,
    draw_index: usize,
    impact: &DMatrix<f64>,
    history_std: &DMatrix<f64>,
    state: usize,
    lags: usize,
    spec: &GirfSpec,
) -> DMatrix<f64> {
    let m = history_std.ncols();
    let hist = history_std.rows(state - lags, lags).into_owned();
    let mut acc = DMatrix::zeros(spec.horizon, m);
    for rep in 0..spec.n_shock_draws {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[draw_index as u64, state as u64, rep as u64]));
        let xi = standard_normals(spec.horizon, m, &mut rng);
        let shocked = conditional_path(draw, impact, &hist, lags, spec.shock_index, spec.w, &xi);
        let baseline = conditional_path(draw, impact, &hist, lags, spec.shock_index, 0.0, &xi);
        acc += shocked - baseline;
    }
    acc / spec.n_shock_draws as f64
}

/// Posterior distribution of the state-averaged GIRF.
#[derive(Debug, Clone, PartialEq)]
pub struct GirfResult {
    pub horizon: usize,
    pub n_series: usize,
    /// One `H x M` response per posterior draw, in original units.
    pub per_draw: Vec<DMatrix<f64>>,
}

impl GirfResult {
    pub fn mean(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.horizon, self.n_series);
        for d in &self.per_draw {
            acc += d;
        }
        acc / self.per_draw.len() as f64
    }

    /// Monte Carlo standard error of the posterior mean, ignoring
    /// autocorrelation between draws.
    pub fn mean_se(&self) -> DMatrix<f64> {
        let n = self.per_draw.len() as f64;
        let mean = self.mean();
        let mut acc = DMatrix::zeros(self.horizon, self.n_series);
        for d in &self.per_draw {
            acc += (d - &mean).map(|v| v * v);
        }
        (acc / (n - 1.0).max(1.0) / n).map(f64::sqrt)
    }

    /// Quantile `q` of the response at 0-based horizon `h` for series `m`.
    pub fn quantile(&self, h: usize, m: usize, q: f64) -> f64 {
        let mut v: Vec<f64> = self.per_draw.iter().map(|d| d[(h, m)]).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        quantile_sorted(&v, q)
    }

    /// CSV with columns `h,series,q0.05,...,q0.95` (`h = 0` is impact).
    pub fn write_csv<W: Write>(&self, names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["h".to_string(), "series".to_string()];
        header.extend(DEFAULT_QUANTILES.iter().map(|q| format!("q{q}")));
        w.write_record(&header)?;
        for h in 0..self.horizon {
            for m in 0..self.n_series {
                let mut rec = vec![h.to_string(), names.get(m).cloned().unwrap_or_else(|| m.to_string())];
                rec.extend(DEFAULT_QUANTILES.iter().map(|&q| self.quantile(h, m, q).to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Generalized impulse responses averaged over historical states.
///
/// For every draw, state and replicate a shocked and a baseline path are
/// simulated from the same innovations; the baseline sets the shocked
/// innovation to zero throughout. `history` is in original units and
/// `scale` is the standardisation the draws were fitted under; responses
/// are reported in original units.
pub fn girf(
    draws: &[PosteriorDraw],
    history: &DMatrix<f64>,
    scale: &Standardization,
    lags: usize,
    ordering: &VariableOrdering,
    spec: &GirfSpec,
) -> Result<GirfResult> {
    let m = history.ncols();
    if ordering.len() != m || scale.means.len() != m {
        return Err(Error::Dimension(format!("history has {m} series but the ordering or scaling differs")));
    }
    if draws.is_empty() {
        return Err(Error::InvalidParameter("no posterior draws".into()));
    }
    if draws[0].n_series() != m {
        return Err(Error::Dimension(format!("draws have {} series, history {m}", draws[0].n_series())));
    }
    spec.validate(m)?;
    let states = girf_states(history.nrows(), lags, spec.state_stride);
    if states.is_empty() {
        return Err(Error::Data(format!("history of {} rows has no state with {lags} lags", history.nrows())));
    }
    let hist_std = scale.apply(history);
    let per_draw = draws
        .par_iter()
        .enumerate()
        .map(|(d, draw)| {
            let impact = impact_matrix(&draw.sigma, ordering)?;
            let mut acc = DMatrix::zeros(spec.horizon, m);
            for &t in &states {
                acc += girf_for_state(draw, d, &impact, &hist_std, t, lags, spec);
            }
            acc /= states.len() as f64;
            Ok(DMatrix::from_fn(spec.horizon, m, |h, c| acc[(h, c)] * scale.sds[c]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GirfResult { horizon: spec.horizon, n_series: m, per_draw })
}
