//! Stationarity transformations, standardisation and lag matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// FRED-style transformation codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum TransformCode {
    /// 1: no transformation.
    Level,
    /// 2: `Δy`.
    Diff,
    /// 3: `Δ²y`.
    Diff2,
    /// 4: `log y`.
    Log,
    /// 5: `Δ log y`.
    LogDiff,
    /// 6: `Δ² log y`.
    LogDiff2,
    /// 7: `Δ(y_t / y_{t-1} - 1)`.
    PctChangeDiff,
}

impl TransformCode {
    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            1 => TransformCode::Level,
            2 => TransformCode::Diff,
            3 => TransformCode::Diff2,
            4 => TransformCode::Log,
            5 => TransformCode::LogDiff,
            6 => TransformCode::LogDiff2,
            7 => TransformCode::PctChangeDiff,
            other => return Err(Error::Data(format!("transformation code {other} is not in 1..=7"))),
        })
    }

    pub fn code(self) -> u8 {
        match self {
            TransformCode::Level => 1,
            TransformCode::Diff => 2,
            TransformCode::Diff2 => 3,
            TransformCode::Log => 4,
            TransformCode::LogDiff => 5,
            TransformCode::LogDiff2 => 6,
            TransformCode::PctChangeDiff => 7,
        }
    }

    /// Leading observations consumed by the transform.
    pub fn lag_loss(self) -> usize {
        match self {
            TransformCode::Level | TransformCode::Log => 0,
            TransformCode::Diff | TransformCode::LogDiff => 1,
            TransformCode::Diff2 | TransformCode::LogDiff2 | TransformCode::PctChangeDiff => 2,
        }
    }

    fn takes_log(self) -> bool {
        matches!(self, TransformCode::Log | TransformCode::LogDiff | TransformCode::LogDiff2)
    }
}

impl TryFrom<u8> for TransformCode {
    type Error = Error;
    fn try_from(code: u8) -> Result<Self> {
        Self::from_code(code)
    }
}

impl From<TransformCode> for u8 {
    fn from(c: TransformCode) -> u8 {
        c.code()
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Apply one transformation code. The output is shorter than the input by
/// [`TransformCode::lag_loss`]; missing values (NaN) propagate.
pub fn apply_tcode(series: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    if series.len() <= code.lag_loss() {
        return Err(Error::Data(format!("series of length {} too short for transformation code {}", series.len(), code.code())));
    }
    if code.takes_log() {
        if let Some(v) = series.iter().find(|v| **v <= 0.0) {
            return Err(Error::Data(format!("transformation code {} takes logs of a nonpositive value {v}", code.code())));
        }
    }
    Ok(match code {
        TransformCode::Level => series.to_vec(),
        TransformCode::Diff => diff(series),
        TransformCode::Diff2 => diff(&diff(series)),
        TransformCode::Log => series.iter().map(|v| v.ln()).collect(),
        TransformCode::LogDiff => diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>()),
        TransformCode::LogDiff2 => diff(&diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>())),
        TransformCode::PctChangeDiff => {
            let mut growth = Vec::with_capacity(series.len() - 1);
            for w in series.windows(2) {
                if w[0] == 0.0 {
                    return Err(Error::Data("transformation code 7 divides by a zero level".into()));
                }
                growth.push(w[1] / w[0] - 1.0);
            }
            diff(&growth)
        }
    })
}

/// Undo codes 1, 2, 4 and 5 given the first untransformed level.
pub fn invert_tcode(transformed: &[f64], initial_level: f64, code: TransformCode) -> Result<Vec<f64>> {
    match code {
        TransformCode::Level => Ok(transformed.to_vec()),
        TransformCode::Log => Ok(transformed.iter().map(|v| v.exp()).collect()),
        TransformCode::Diff => {
            let mut out = Vec::with_capacity(transformed.len() + 1);
            out.push(initial_level);
            let mut level = initial_level;
            for d in transformed {
                level += d;
                out.push(level);
            }
            Ok(out)
        }
        TransformCode::LogDiff => {
            if initial_level <= 0.0 {
                return Err(Error::Data("initial level must be positive to invert code 5".into()));
            }
            let mut out = Vec::with_capacity(transformed.len() + 1);
            out.push(initial_level);
            let mut log_level = initial_level.ln();
            for d in transformed {
                log_level += d;
                out.push(log_level.exp());
            }
            Ok(out)
        }
        other => {
            Err(Error::InvalidParameter(format!("transformation code {} is not invertible from a single initial level", other.code())))
        }
    }
}

/// Transform every column of a `T x M` panel and drop the largest lag loss
/// from the front of all columns so they share one time index. Returns the
/// transformed matrix and the number of leading rows dropped.
pub fn transform_panel(values: &DMatrix<f64>, codes: &[TransformCode]) -> Result<(DMatrix<f64>, usize)> {
    if codes.len() != values.ncols() {
        return Err(Error::Dimension(format!("{} transformation codes for {} series", codes.len(), values.ncols())));
    }
    let drop = codes.iter().map(|c| c.lag_loss()).max().unwrap_or(0);
    let t = values.nrows();
    if t <= drop {
        return Err(Error::Data(format!("{t} observations cannot absorb a lag loss of {drop}")));
    }
    let mut out = DMatrix::zeros(t - drop, values.ncols());
    for (c, &code) in codes.iter().enumerate() {
        let col: Vec<f64> = values.column(c).iter().copied().collect();
        let tr = apply_tcode(&col, code)?;
        let skip = drop - code.lag_loss();
        for (i, v) in tr[skip..].iter().enumerate() {
            out[(i, c)] = *v;
        }
    }
    Ok((out, drop))
}

/// Column means and sample standard deviations (`n - 1` denominator).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    pub fn identity(m: usize) -> Self {
        Self { means: vec![0.0; m], sds: vec![1.0; m] }
    }

    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Data("standardisation needs at least two observations".into()));
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for (c, col) in x.column_iter().enumerate() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let sd = var.sqrt();
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::Data(format!("column {c} is constant and cannot be standardised")));
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(Self { means, sds })
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, c| (x[(i, c)] - self.means[c]) / self.sds[c])
    }

    pub fn invert(&self, xs: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(xs.nrows(), xs.ncols(), |i, c| xs[(i, c)] * self.sds[c] + self.means[c])
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - self.means[c]) / self.sds[c];
        }
    }

    pub fn invert_row(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = *v * self.sds[c] + self.means[c];
        }
    }
}

/// Standardise columns to mean 0 and sample sd 1.
pub fn standardize(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Standardization)> {
    let st = Standardization::fit(x)?;
    Ok((st.apply(x), st))
}

/// `X` with row `t` equal to `(y'_{t-1}, ..., y'_{t-P})` and the aligned
/// targets `Y[P..]`.
pub fn build_lag_matrix(y: &DMatrix<f64>, p: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (t, m) = y.shape();
    if p == 0 {
        return Err(Error::Config("lag order must be at least 1".into()));
    }
    if t <= p {
        return Err(Error::Data(format!("{t} observations are not enough for {p} lags")));
    }
    let n = t - p;
    let x = DMatrix::from_fn(n, m * p, |i, c| {
        let lag = c / m + 1;
        y[(i + p - lag, c % m)]
    });
    Ok((x, y.rows(p, n).into_owned()))
}

/// The lag vector `(y'_{t-1}, ..., y'_{t-P})` that follows the last `P` rows
/// of `history` (most recent last).
pub fn lag_vector(history: &DMatrix<f64>, p: usize) -> DVector<f64> {
    let (t, m) = history.shape();
    DVector::from_fn(m * p, |c, _| history[(t - 1 - c / m, c % m)])
}
