//! Binary container for retained posterior draws.
//!
//! All values are little-endian. Layout:
//!
//! ```text
//! magic  "VAST"
//! u32    version (1)
//! u32    J, M, K, n_draws, P, flags (bit 0: fitted on standardised data)
//! f64    M means, then M standard deviations
//! per draw:
//!   per learner: f64 nu, f64 mu, u32 delta, f64 beta0[M], f64 beta1[M]
//!   f64    lower triangle of Sigma, row by row (M(M+1)/2 values)
//!   f64    log-likelihood
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::Standardization;
use crate::error::{Error, Result};
use crate::model::{BaseLearnerParams, PosteriorDraw};

pub const MAGIC: &[u8; 4] = b"VAST";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_STANDARDIZED: u32 = 1;

/// Draws plus the metadata needed to use them without the original run.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawFile {
    pub n_covariates: usize,
    pub lags: usize,
    /// Scaling the draws were fitted under, `None` for raw data.
    pub scale: Option<Standardization>,
    pub draws: Vec<PosteriorDraw>,
}

impl DrawFile {
    pub fn n_learners(&self) -> usize {
        self.draws.first().map_or(0, |d| d.n_learners())
    }

    pub fn n_series(&self) -> usize {
        self.draws.first().map_or(0, |d| d.n_series())
    }

    /// The stored scaling, or the identity.
    pub fn standardization(&self) -> Standardization {
        self.scale.clone().unwrap_or_else(|| Standardization::identity(self.n_series()))
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit the u32 header field")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_draws<W: Write>(writer: W, file: &DrawFile) -> Result<()> {
    let (j, m) = (file.n_learners(), file.n_series());
    if file.draws.is_empty() {
        return Err(Error::Format("refusing to write an empty draw file".into()));
    }
    for d in &file.draws {
        if d.n_learners() != j || d.n_series() != m || d.sigma.shape() != (m, m) {
            return Err(Error::Format("draws differ in shape".into()));
        }
        if let Some(l) = d.learners.iter().find(|l| l.delta >= file.n_covariates) {
            return Err(Error::Format(format!("selected covariate {} out of range for K = {}", l.delta, file.n_covariates)));
        }
    }
    let mut w = BufWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [j, m, file.n_covariates, file.draws.len(), file.lags] {
        put_u32(&mut w, v)?;
    }
    put_u32(&mut w, if file.scale.is_some() { FLAG_STANDARDIZED as usize } else { 0 })?;
    let scale = file.standardization();
    if scale.means.len() != m || scale.sds.len() != m {
        return Err(Error::Format("scaling does not match the number of series".into()));
    }
    for &v in scale.means.iter().chain(&scale.sds) {
        put_f64(&mut w, v)?;
    }
    for d in &file.draws {
        for l in &d.learners {
            put_f64(&mut w, l.nu)?;
            put_f64(&mut w, l.mu)?;
            put_u32(&mut w, l.delta)?;
            for &b in l.beta0.iter().chain(&l.beta1) {
                put_f64(&mut w, b)?;
            }
        }
        for r in 0..m {
            for c in 0..=r {
                put_f64(&mut w, d.sigma[(r, c)])?;
            }
        }
        put_f64(&mut w, d.loglik)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<R: Read> {
    inner: R,
}

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format(format!("draw file truncated while reading {what}")),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes(what)?) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }
}

pub fn read_draws<R: Read>(reader: R) -> Result<DrawFile> {
    let mut c = Cursor { inner: BufReader::new(reader) };
    if &c.bytes::<4>("magic")? != MAGIC {
        return Err(Error::Format("not a draw file (bad magic)".into()));
    }
    let version = c.u32("version")? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported draw file version {version}")));
    }
    let j = c.u32("header")?;
    let m = c.u32("header")?;
    let k = c.u32("header")?;
    let n = c.u32("header")?;
    let p = c.u32("header")?;
    let flags = c.u32("header")? as u32;
    if j == 0 || m == 0 || k == 0 {
        return Err(Error::Format(format!("invalid header: J = {j}, M = {m}, K = {k}")));
    }
    let means = c.f64s(m, "scaling")?;
    let sds = c.f64s(m, "scaling")?;
    let mut draws = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let mut learners = Vec::with_capacity(j);
        for _ in 0..j {
            let nu = c.f64("learner")?;
            let mu = c.f64("learner")?;
            let delta = c.u32("learner")?;
            if delta >= k {
                return Err(Error::Format(format!("selected covariate {delta} out of range for K = {k}")));
            }
            let beta0 = c.f64s(m, "learner")?;
            let beta1 = c.f64s(m, "learner")?;
            learners.push(BaseLearnerParams::new(nu, mu, delta, beta0, beta1));
        }
        let mut sigma = DMatrix::zeros(m, m);
        for r in 0..m {
            for col in 0..=r {
                let v = c.f64("covariance")?;
                sigma[(r, col)] = v;
                sigma[(col, r)] = v;
            }
        }
        let loglik = c.f64("log-likelihood")?;
        draws.push(PosteriorDraw { learners, sigma, loglik });
    }
    let mut rest = [0u8; 1];
    if c.inner.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after the last draw".into()));
    }
    let scale = (flags & FLAG_STANDARDIZED != 0).then_some(Standardization { means, sds });
    Ok(DrawFile { n_covariates: k, lags: p, scale, draws })
}

pub fn save_draws(path: &Path, file: &DrawFile) -> Result<()> {
    write_draws(File::create(path)?, file)
}

pub fn load_draws(path: &Path) -> Result<DrawFile> {
    read_draws(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_file(m: usize, j: usize, n: usize, standardized: bool) -> DrawFile {
        let draws = (0..n)
            .map(|d| PosteriorDraw {
                learners: (0..j)
                    .map(|l| {
                        let b0 = (0..m).map(|c| (d + l + c) as f64 * 0.1).collect();
                        let b1 = (0..m).map(|c| -((d * l + c) as f64) / 3.0).collect();
                        BaseLearnerParams::new(0.5 + l as f64, -0.25 * d as f64, (l + d) % 4, b0, b1)
                    })
                    .collect(),
                sigma: DMatrix::from_fn(m, m, |r, c| if r == c { 1.0 + d as f64 } else { 0.1 }),
                loglik: -10.0 * d as f64,
            })
            .collect();
        let scale = standardized.then(|| Standardization { means: vec![0.5; m], sds: vec![2.0; m] });
        DrawFile { n_covariates: 4, lags: 2, scale, draws }
    }

    #[test]
    fn round_trip() {
        for std in [false, true] {
            let f = sample_file(3, 2, 4, std);
            let mut buf = Vec::new();
            write_draws(&mut buf, &f).unwrap();
            assert_eq!(&buf[..4], b"VAST");
            assert_eq!(read_draws(buf.as_slice()).unwrap(), f);
        }
    }

    #[test]
    fn size_matches_layout() {
        let (m, j, n) = (2, 3, 5);
        let mut buf = Vec::new();
        write_draws(&mut buf, &sample_file(m, j, n, true)).unwrap();
        let header = 4 + 4 * 7 + 8 * 2 * m;
        let per_draw = j * (8 + 8 + 4 + 16 * m) + 8 * m * (m + 1) / 2 + 8;
        assert_eq!(buf.len(), header + n * per_draw);
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut buf = Vec::new();
        write_draws(&mut buf, &sample_file(2, 1, 2, false)).unwrap();
        assert!(matches!(read_draws(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        let mut extra = buf.clone();
        extra.push(0);
        assert!(matches!(read_draws(extra.as_slice()), Err(Error::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_draws(bad.as_slice()), Err(Error::Format(_))));
        let mut ver = buf;
        ver[4] = 9;
        assert!(matches!(read_draws(ver.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("draws.bin");
        let f = sample_file(2, 2, 3, true);
        save_draws(&path, &f).unwrap();
        assert_eq!(load_draws(&path).unwrap(), f);
    }

    proptest! {
        #[test]
        fn arbitrary_values_round_trip_bitwise(
            m in 1usize..4,
            j in 1usize..4,
            vals in proptest::collection::vec(proptest::num::f64::ANY, 64),
            deltas in proptest::collection::vec(0usize..7, 4),
        ) {
            let mut it = vals.iter().copied().cycle();
            let draws: Vec<PosteriorDraw> = (0..2).map(|_| PosteriorDraw {
                learners: (0..j).map(|l| BaseLearnerParams::new(
                    it.next().unwrap(), it.next().unwrap(), deltas[l],
                    (0..m).map(|_| it.next().unwrap()).collect(),
                    (0..m).map(|_| it.next().unwrap()).collect(),
                )).collect(),
                sigma: {
                    let mut s = DMatrix::zeros(m, m);
                    for r in 0..m { for c in 0..=r { let v = it.next().unwrap(); s[(r, c)] = v; s[(c, r)] = v; } }
                    s
                },
                loglik: it.next().unwrap(),
            }).collect();
            let f = DrawFile { n_covariates: 7, lags: 1, scale: None, draws };
            let mut buf = Vec::new();
            write_draws(&mut buf, &f).unwrap();
            let back = read_draws(buf.as_slice()).unwrap();
            let bits = |d: &DrawFile| -> Vec<u64> {
                d.draws.iter().flat_map(|x| {
                    let mut v: Vec<u64> = x.learners.iter().flat_map(|l| {
                        [l.nu, l.mu].into_iter().chain(l.beta0.iter().copied()).chain(l.beta1.iter().copied())
                            .map(f64::to_bits).chain(std::iter::once(l.delta as u64)).collect::<Vec<_>>()
                    }).collect();
                    v.extend(x.sigma.iter().map(|s| s.to_bits()));
                    v.push(x.loglik.to_bits());
                    v
                }).collect()
            };
            prop_assert_eq!(bits(&f), bits(&back));
        }
    }
}
