//! Predictive simulation, forecast metrics and the forecasting harnesses.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{simulate_dgp, standardize, DgpSpec, Standardization};
use crate::error::{Error, Result};
use crate::learners::logistic;
use crate::linalg::{psd_factor, spd_cholesky};
use crate::model::{ModelConfig, PosteriorDraw};
use crate::sampler::{run_chain_ast, run_chain_vast, variable_relevance, ChainDiagnostics, ChainSettings};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Quantile levels reported by default.
pub const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.16, 0.5, 0.84, 0.95];

/// Mix a base seed with a sequence of indices into an independent seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sum of learner fits at covariate vector `x`.
pub fn conditional_mean(draw: &PosteriorDraw, x: &[f64]) -> Vec<f64> {
    let m = draw.n_series();
    let mut out = vec![0.0; m];
    for l in &draw.learners {
        let s = logistic(x[l.delta], l.nu, l.mu);
        for (c, o) in out.iter_mut().enumerate() {
            *o += s * l.beta0[c] + (1.0 - s) * l.beta1[c];
        }
    }
    out
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, 0.5)
}

/// Sample variance (`n - 1` denominator; 0 for a single value).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
}

/// Simulated future paths, stored path-major as `n_paths x H x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDraws {
    pub horizon: usize,
    pub n_series: usize,
    pub n_paths: usize,
    values: Vec<f64>,
}

/// Summary of the predictive distribution of one series at one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSummary {
    /// 1-based horizon.
    pub h: usize,
    pub series: usize,
    pub mean: f64,
    pub median: f64,
    pub variance: f64,
    pub quantiles: Vec<(f64, f64)>,
}

impl PredictiveDraws {
    pub fn new(horizon: usize, n_series: usize, paths: Vec<DMatrix<f64>>) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidParameter("no predictive paths".into()));
        }
        let mut values = Vec::with_capacity(paths.len() * horizon * n_series);
        for p in &paths {
            if p.shape() != (horizon, n_series) {
                return Err(Error::Dimension("predictive path has the wrong shape".into()));
            }
            for h in 0..horizon {
                values.extend(p.row(h).iter());
            }
        }
        Ok(Self { horizon, n_series, n_paths: paths.len(), values })
    }

    /// Value of path `i` at 0-based horizon index `h` for series `m`.
    pub fn get(&self, i: usize, h: usize, m: usize) -> f64 {
        self.values[(i * self.horizon + h) * self.n_series + m]
    }

    /// All path values for series `m` at 0-based horizon index `h`.
    pub fn at(&self, h: usize, m: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.get(i, h, m)).collect()
    }

    pub fn path(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.horizon, self.n_series, |h, m| self.get(i, h, m))
    }

    pub fn summarize(&self, levels: &[f64]) -> Vec<HorizonSummary> {
        let mut out = Vec::with_capacity(self.horizon * self.n_series);
        for h in 0..self.horizon {
            for m in 0..self.n_series {
                let mut v = self.at(h, m);
                v.sort_by(|a, b| a.total_cmp(b));
                out.push(HorizonSummary {
                    h: h + 1,
                    series: m,
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    median: quantile_sorted(&v, 0.5),
                    variance: sample_variance(&v),
                    quantiles: levels.iter().map(|&q| (q, quantile_sorted(&v, q))).collect(),
                });
            }
        }
        out
    }

    /// CSV with columns `h,series,mean,median,variance,q...`.
    pub fn write_summary_csv<W: Write>(&self, names: &[String], levels: &[f64], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["h", "series", "mean", "median", "variance"].iter().map(|s| s.to_string()).collect();
        header.extend(levels.iter().map(|q| format!("q{q}")));
        w.write_record(&header)?;
        for s in self.summarize(levels) {
            let name = names.get(s.series).cloned().unwrap_or_else(|| s.series.to_string());
            let mut rec = vec![s.h.to_string(), name, s.mean.to_string(), s.median.to_string(), s.variance.to_string()];
            rec.extend(s.quantiles.iter().map(|(_, v)| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulate one predictive path for one posterior draw, in the fitting scale.
///
/// `history` holds at least `p` rows (most recent last). `shocks(h, rng)`
/// returns the reduced-form innovation at 0-based horizon `h`.
pub(crate) fn simulate_path<R: Rng + ?Sized, F>(
    draw: &PosteriorDraw,
    history: &DMatrix<f64>,
    p: usize,
    horizon: usize,
    rng: &mut R,
    mut shocks: F,
) -> DMatrix<f64>
where
    F: FnMut(usize, &mut R) -> DVector<f64>,
{
    let m = history.ncols();
    let mut buffer: Vec<DVector<f64>> = (0..p).map(|i| history.row(history.nrows() - p + i).transpose()).collect();
    let mut out = DMatrix::zeros(horizon, m);
    for h in 0..horizon {
        let x: Vec<f64> = (0..m * p).map(|c| buffer[p - 1 - c / m][c % m]).collect();
        let mean = DVector::from_vec(conditional_mean(draw, &x));
        let y = mean + shocks(h, rng);
        out.row_mut(h).copy_from(&y.transpose());
        buffer.remove(0);
        buffer.push(y);
    }
    out
}

/// Gaussian innovations `F eps` with `F F' = Sigma`.
pub(crate) fn gaussian_shock<R: Rng + ?Sized>(factor: &DMatrix<f64>, rng: &mut R) -> DVector<f64> {
    let eps = DVector::from_fn(factor.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
    factor * eps
}

/// Draw `n_paths_per_draw` future paths of length `horizon` from each
/// posterior draw by iterating the conditional mean and feeding simulated
/// values back into the lag vector.
///
/// `history` is in the original scale; `scale` is the standardisation the
/// model was fitted under and is undone on the output.
pub fn simulate_predictive(
    draws: &[PosteriorDraw],
    history: &DMatrix<f64>,
    lags: usize,
    horizon: usize,
    n_paths_per_draw: usize,
    scale: &Standardization,
    seed: u64,
) -> Result<PredictiveDraws> {
    if horizon < 1 {
        return Err(Error::InvalidParameter("forecast horizon must be at least 1".into()));
    }
    if n_paths_per_draw < 1 || draws.is_empty() {
        return Err(Error::InvalidParameter("need at least one posterior draw and one path per draw".into()));
    }
    if history.nrows() < lags {
        return Err(Error::Data(format!("history has {} rows but the model uses {lags} lags", history.nrows())));
    }
    let m = history.ncols();
    if draws[0].n_series() != m || scale.means.len() != m {
        return Err(Error::Dimension(format!("history has {m} series, the model {}", draws[0].n_series())));
    }
    let hist = scale.apply(&history.rows(history.nrows() - lags, lags).into_owned());
    let paths: Vec<Vec<DMatrix<f64>>> = draws
        .par_iter()
        .enumerate()
        .map(|(d, draw)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let factor = psd_factor(&draw.sigma);
            (0..n_paths_per_draw)
                .map(|_| {
                    let path = simulate_path(draw, &hist, lags, horizon, &mut rng, |_, r| gaussian_shock(&factor, r));
                    scale.invert(&path)
                })
                .collect()
        })
        .collect();
    PredictiveDraws::new(horizon, m, paths.into_iter().flatten().collect())
}

/// One-step predictive samples of the univariate model at covariate row `x`
/// (fitting scale), one per draw, mapped back through `y_scale`.
pub fn ast_one_step<R: Rng + ?Sized>(draws: &[PosteriorDraw], x: &[f64], y_scale: &Standardization, rng: &mut R) -> Vec<f64> {
    draws
        .iter()
        .map(|d| {
            let mean = conditional_mean(d, x)[0];
            let y = mean + d.sigma2().max(0.0).sqrt() * rng.sample::<f64, _>(StandardNormal);
            y * y_scale.sds[0] + y_scale.means[0]
        })
        .collect()
}

/// Root mean squared error of point forecasts.
pub fn rmse(actuals: &[f64], forecasts: &[f64]) -> Result<f64> {
    if actuals.is_empty() || actuals.len() != forecasts.len() {
        return Err(Error::InvalidParameter("RMSE needs two nonempty sequences of equal length".into()));
    }
    let sse: f64 = actuals.iter().zip(forecasts).map(|(a, f)| (a - f).powi(2)).sum();
    Ok((sse / actuals.len() as f64).sqrt())
}

/// Average Gaussian log predictive density.
pub fn lpl_gaussian(actuals: &[f64], means: &[f64], variances: &[f64]) -> Result<f64> {
    if actuals.is_empty() || actuals.len() != means.len() || actuals.len() != variances.len() {
        return Err(Error::InvalidParameter("LPL needs three nonempty sequences of equal length".into()));
    }
    let mut total = 0.0;
    for ((y, m), v) in actuals.iter().zip(means).zip(variances) {
        if !(*v > 0.0) {
            return Err(Error::InvalidParameter(format!("predictive variance must be positive, got {v}")));
        }
        total += -0.5 * (LN_2PI + v.ln() + (y - m).powi(2) / v);
    }
    Ok(total / actuals.len() as f64)
}

/// Multivariate Gaussian log density.
pub fn log_mvn_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = spd_cholesky(cov, "predictive covariance")?;
    let d = y - mean;
    let w = chol.l_dirty().solve_lower_triangular(&d).expect("nonsingular factor");
    let k = y.len() as f64;
    Ok(-0.5 * (k * LN_2PI + crate::linalg::chol_log_det(&chol) + w.norm_squared()))
}

/// Joint log predictive density of a subset of series at 0-based horizon
/// `h`: Gaussian with the per-series predictive medians and the cross-path
/// covariance of the subset.
pub fn focus_lpl(pred: &PredictiveDraws, h: usize, focus: &[usize], actual: &[f64]) -> Result<f64> {
    if focus.len() != actual.len() || focus.is_empty() {
        return Err(Error::InvalidParameter("focus set and actuals differ in length".into()));
    }
    let cols: Vec<Vec<f64>> = focus.iter().map(|&m| pred.at(h, m)).collect();
    let n = pred.n_paths as f64;
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(focus.len(), focus.len(), |a, b| {
        cols[a].iter().zip(&cols[b]).map(|(x, y)| (x - means[a]) * (y - means[b])).sum::<f64>() / (n - 1.0)
    });
    let center = DVector::from_iterator(focus.len(), cols.iter().map(|c| median(c)));
    log_mvn_density(&DVector::from_column_slice(actual), &center, &cov)
}

/// The four `(nu, mu)` estimation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    EstimateBoth,
    FixNu,
    FixMu,
    FixBoth,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::EstimateBoth, Variant::FixNu, Variant::FixMu, Variant::FixBoth];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EstimateBoth => "estimate-both",
            Variant::FixNu => "fix-nu",
            Variant::FixMu => "fix-mu",
            Variant::FixBoth => "fix-both",
        }
    }

    /// Fixed `nu = 10` when only `nu` is fixed, `nu = 1` when both are.
    pub fn apply(self, cfg: &mut ModelConfig) {
        let (nu, mu) = match self {
            Variant::EstimateBoth => (None, false),
            Variant::FixNu => (Some(10.0), false),
            Variant::FixMu => (None, true),
            Variant::FixBoth => (Some(1.0), true),
        };
        cfg.fix_nu = nu;
        cfg.fix_mu_to_mean = mu;
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected estimate-both, fix-nu, fix-mu or fix-both)")))
    }
}

/// Average metrics arranged with variants as rows and `J` as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub variants: Vec<Variant>,
    pub j_grid: Vec<usize>,
    pub rmse: DMatrix<f64>,
    pub lpl: DMatrix<f64>,
    pub baseline: Variant,
}

impl MetricTable {
    fn baseline_row(&self) -> Result<usize> {
        self.variants
            .iter()
            .position(|v| *v == self.baseline)
            .ok_or_else(|| Error::Config(format!("baseline {} is not among the variants", self.baseline.name())))
    }

    /// RMSE divided by the baseline's RMSE at the same `J`.
    pub fn rmse_ratio(&self) -> Result<DMatrix<f64>> {
        let b = self.baseline_row()?;
        Ok(DMatrix::from_fn(self.rmse.nrows(), self.rmse.ncols(), |v, j| self.rmse[(v, j)] / self.rmse[(b, j)]))
    }

    /// LPL minus the baseline's LPL at the same `J`.
    pub fn lpl_diff(&self) -> Result<DMatrix<f64>> {
        let b = self.baseline_row()?;
        Ok(DMatrix::from_fn(self.lpl.nrows(), self.lpl.ncols(), |v, j| self.lpl[(v, j)] - self.lpl[(b, j)]))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["metric".to_string(), "variant".to_string()];
        header.extend(self.j_grid.iter().map(|j| format!("J={j}")));
        w.write_record(&header)?;
        let blocks =
            [("rmse_ratio", self.rmse_ratio()?), ("lpl_diff", self.lpl_diff()?), ("rmse", self.rmse.clone()), ("lpl", self.lpl.clone())];
        for (name, mat) in &blocks {
            for (v, variant) in self.variants.iter().enumerate() {
                let mut rec = vec![name.to_string(), variant.name().to_string()];
                rec.extend(mat.row(v).iter().map(|x| format!("{x:.6}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Settings of the synthetic forecasting experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSpec {
    pub reps: usize,
    pub j_grid: Vec<usize>,
    pub variants: Vec<Variant>,
    pub baseline: Variant,
    pub dgp: DgpSpec,
    /// Observations used for estimation; the rest are forecast one step
    /// ahead from a single fit.
    pub n_train: usize,
    pub model: ModelConfig,
    pub chain: ChainSettings,
    pub seed: u64,
}

impl Default for MonteCarloSpec {
    fn default() -> Self {
        Self {
            reps: 10,
            j_grid: vec![1, 5, 10, 15],
            variants: Variant::ALL.to_vec(),
            baseline: Variant::EstimateBoth,
            dgp: DgpSpec::default(),
            n_train: 150,
            model: ModelConfig::ast(1),
            chain: ChainSettings::default(),
            seed: 0,
        }
    }
}

/// Outcome of one fit inside the experiment.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub rep: usize,
    pub variant: Variant,
    pub j: usize,
    pub rmse: f64,
    pub lpl: f64,
    /// Relevance score per design column.
    pub relevance: Vec<f64>,
    pub diagnostics: ChainDiagnostics,
}

#[derive(Debug, Clone)]
pub struct MonteCarloResult {
    pub table: MetricTable,
    pub fits: Vec<FitRecord>,
    pub design_names: Vec<String>,
    /// True coefficients per replication.
    pub truths: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Fit the univariate model on the first `n_train` rows of `(y, x)` and
/// forecast each remaining row one step ahead. Returns `(rmse, lpl, output)`.
pub fn one_step_evaluation(
    y: &[f64],
    x: &DMatrix<f64>,
    n_train: usize,
    cfg: &ModelConfig,
    settings: &ChainSettings,
) -> Result<(f64, f64, crate::sampler::ChainOutput)> {
    let t = y.len();
    if n_train < 2 || n_train >= t {
        return Err(Error::Config(format!("training size {n_train} leaves no evaluation window in {t} rows")));
    }
    let x_train = x.rows(0, n_train).into_owned();
    let (xs_train, x_scale) = standardize(&x_train)?;
    let y_train = DMatrix::from_column_slice(n_train, 1, &y[..n_train]);
    let (ys_train, y_scale) = standardize(&y_train)?;
    let out = run_chain_ast(ys_train.as_slice(), &xs_train, cfg, settings)?;
    let xs_test = x_scale.apply(&x.rows(n_train, t - n_train).into_owned());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[0xF0]));
    let (mut med, mut var) = (Vec::new(), Vec::new());
    for r in 0..xs_test.nrows() {
        let row: Vec<f64> = xs_test.row(r).iter().copied().collect();
        let samples = ast_one_step(&out.draws, &row, &y_scale, &mut rng);
        med.push(median(&samples));
        var.push(sample_variance(&samples));
    }
    let actual = &y[n_train..];
    Ok((rmse(actual, &med)?, lpl_gaussian(actual, &med, &var)?, out))
}

/// Replications of the synthetic experiment across variants and `J`.
pub fn monte_carlo(spec: &MonteCarloSpec) -> Result<MonteCarloResult> {
    if spec.reps == 0 || spec.j_grid.is_empty() || spec.variants.is_empty() {
        return Err(Error::Config("need at least one replication, one J and one variant".into()));
    }
    if !spec.variants.contains(&spec.baseline) {
        return Err(Error::Config(format!("baseline {} is not among the variants", spec.baseline.name())));
    }
    let realizations: Vec<_> = (0..spec.reps)
        .map(|r| simulate_dgp(&DgpSpec { seed: derive_seed(spec.seed, &[r as u64]), ..spec.dgp.clone() }))
        .collect::<Result<_>>()?;
    let mut jobs = Vec::new();
    for rep in 0..spec.reps {
        for (vi, &variant) in spec.variants.iter().enumerate() {
            for &j in &spec.j_grid {
                jobs.push((rep, vi, variant, j));
            }
        }
    }
    let fits: Vec<FitRecord> = jobs
        .par_iter()
        .map(|&(rep, vi, variant, j)| {
            let real = &realizations[rep];
            let mut cfg = ModelConfig { n_learners: j, ..spec.model.clone() };
            variant.apply(&mut cfg);
            let settings = ChainSettings { seed: derive_seed(spec.seed, &[rep as u64, vi as u64, j as u64, 1]), ..spec.chain.clone() };
            let (rmse, lpl, out) = one_step_evaluation(&real.y, &real.design, spec.n_train, &cfg, &settings)?;
            Ok(FitRecord {
                rep,
                variant,
                j,
                rmse,
                lpl,
                relevance: variable_relevance(&out.draws, real.design.ncols()),
                diagnostics: out.diagnostics,
            })
        })
        .collect::<Result<_>>()?;
    let (nv, nj) = (spec.variants.len(), spec.j_grid.len());
    let mut rmse_m = DMatrix::zeros(nv, nj);
    let mut lpl_m = DMatrix::zeros(nv, nj);
    for f in &fits {
        let v = spec.variants.iter().position(|x| *x == f.variant).unwrap();
        let j = spec.j_grid.iter().position(|x| *x == f.j).unwrap();
        rmse_m[(v, j)] += f.rmse / spec.reps as f64;
        lpl_m[(v, j)] += f.lpl / spec.reps as f64;
    }
    Ok(MonteCarloResult {
        table: MetricTable {
            variants: spec.variants.clone(),
            j_grid: spec.j_grid.clone(),
            rmse: rmse_m,
            lpl: lpl_m,
            baseline: spec.baseline,
        },
        fits,
        design_names: realizations[0].design_names.clone(),
        truths: realizations.iter().map(|r| (r.beta.clone(), r.kappa.clone())).collect(),
    })
}

/// A multivariate fit together with the scaling it was estimated under.
#[derive(Debug, Clone)]
pub struct VastFit {
    pub draws: Vec<PosteriorDraw>,
    pub scale: Standardization,
    pub lags: usize,
    pub diagnostics: ChainDiagnostics,
}

/// Standardise `y` (`T x M`, original scale) and fit the multivariate model.
pub fn fit_vast(y: &DMatrix<f64>, cfg: &ModelConfig, settings: &ChainSettings) -> Result<VastFit> {
    let (ys, scale) = standardize(y)?;
    let out = run_chain_vast(&ys, cfg, settings)?;
    Ok(VastFit { draws: out.draws, scale, lags: cfg.lags, diagnostics: out.diagnostics })
}

/// Expanding-window forecasting settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveSpec {
    /// Row index of the first forecast origin (the first estimation window
    /// is `0..start`).
    pub start: usize,
    pub horizon: usize,
    pub n_paths_per_draw: usize,
    /// Series whose joint predictive density is scored.
    pub focus: Vec<usize>,
}

/// Forecasts and scores of one origin.
#[derive(Debug, Clone)]
pub struct OriginForecast {
    pub origin: usize,
    pub j: usize,
    /// `H x M` predictive medians.
    pub median: DMatrix<f64>,
    /// `H x M` predictive variances.
    pub variance: DMatrix<f64>,
    /// `H x M` realised values (NaN past the end of the sample).
    pub actual: DMatrix<f64>,
    /// Joint log score of the focus series per horizon (NaN when unavailable).
    pub focus_lpl: Vec<f64>,
}

/// Per-`J` summary: RMSE and Gaussian LPL per horizon and series.
#[derive(Debug, Clone)]
pub struct RecursiveResult {
    pub j_grid: Vec<usize>,
    pub origins: Vec<OriginForecast>,
}

impl RecursiveResult {
    /// `(rmse, lpl)` as `H x M` matrices for learner count `j`.
    pub fn metrics(&self, j: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let rows: Vec<&OriginForecast> = self.origins.iter().filter(|o| o.j == j).collect();
        let first = rows.first().ok_or_else(|| Error::InvalidParameter(format!("no forecasts for J = {j}")))?;
        let (h, m) = first.median.shape();
        let mut r = DMatrix::from_element(h, m, f64::NAN);
        let mut l = DMatrix::from_element(h, m, f64::NAN);
        for hh in 0..h {
            for mm in 0..m {
                let usable: Vec<&&OriginForecast> = rows.iter().filter(|o| o.actual[(hh, mm)].is_finite()).collect();
                if usable.is_empty() {
                    continue;
                }
                let a: Vec<f64> = usable.iter().map(|o| o.actual[(hh, mm)]).collect();
                let f: Vec<f64> = usable.iter().map(|o| o.median[(hh, mm)]).collect();
                let v: Vec<f64> = usable.iter().map(|o| o.variance[(hh, mm)].max(1e-300)).collect();
                r[(hh, mm)] = rmse(&a, &f)?;
                l[(hh, mm)] = lpl_gaussian(&a, &f, &v)?;
            }
        }
        Ok((r, l))
    }

    pub fn write_csv<W: Write>(&self, names: &[String], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["J", "h", "series", "rmse", "lpl"])?;
        for &j in &self.j_grid {
            let (r, l) = self.metrics(j)?;
            for h in 0..r.nrows() {
                for m in 0..r.ncols() {
                    w.write_record([
                        j.to_string(),
                        (h + 1).to_string(),
                        names.get(m).cloned().unwrap_or_else(|| m.to_string()),
                        r[(h, m)].to_string(),
                        l[(h, m)].to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Recursive design: for each origin, fit on all data up to it, forecast
/// `H` steps, then add the next observation to the estimation sample.
pub fn recursive_forecast(
    y: &DMatrix<f64>,
    base: &ModelConfig,
    j_grid: &[usize],
    settings: &ChainSettings,
    spec: &RecursiveSpec,
) -> Result<RecursiveResult> {
    let t = y.nrows();
    if spec.start <= base.lags + 1 || spec.start >= t {
        return Err(Error::Config(format!(
            "forecast start {} must leave an estimation window and at least one evaluation point in {t} rows",
            spec.start
        )));
    }
    if spec.horizon < 1 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let m = y.ncols();
    let mut origins = Vec::new();
    for &j in j_grid {
        let cfg = ModelConfig { n_learners: j, ..base.clone() };
        for origin in spec.start..t {
            let window = y.rows(0, origin).into_owned();
            let s = ChainSettings { seed: derive_seed(settings.seed, &[j as u64, origin as u64]), ..settings.clone() };
            let fit = fit_vast(&window, &cfg, &s)?;
            let pred = simulate_predictive(&fit.draws, &window, cfg.lags, spec.horizon, spec.n_paths_per_draw, &fit.scale, s.seed)?;
            let summary = pred.summarize(&[]);
            let mut median_m = DMatrix::zeros(spec.horizon, m);
            let mut var_m = DMatrix::zeros(spec.horizon, m);
            for sm in &summary {
                median_m[(sm.h - 1, sm.series)] = sm.median;
                var_m[(sm.h - 1, sm.series)] = sm.variance;
            }
            let actual = DMatrix::from_fn(spec.horizon, m, |h, c| if origin + h < t { y[(origin + h, c)] } else { f64::NAN });
            let focus_lpl = (0..spec.horizon)
                .map(|h| {
                    if spec.focus.is_empty() || origin + h >= t {
                        return f64::NAN;
                    }
                    let a: Vec<f64> = spec.focus.iter().map(|&c| y[(origin + h, c)]).collect();
                    focus_lpl(&pred, h, &spec.focus, &a).unwrap_or(f64::NAN)
                })
                .collect();
            origins.push(OriginForecast { origin, j, median: median_m, variance: var_m, actual, focus_lpl });
        }
    }
    Ok(RecursiveResult { j_grid: j_grid.to_vec(), origins })
}
