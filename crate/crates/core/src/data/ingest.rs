//! CSV ingestion of a raw panel and its per-series metadata.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;

use super::transform::{transform_panel, TransformCode};
use crate::error::{Error, Result};
use crate::model::{SeriesClass, TimeSeriesPanel};

/// Per-series metadata: transformation code and speed class.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMeta {
    pub tcode: TransformCode,
    pub class: SeriesClass,
}

/// Parse `1990Q1`, `1990-01-01`, `1990-01` or `1990/01/01`.
pub fn parse_date(s: &str) -> Result<NaiveDate> {
    let s = s.trim();
    if let Some((y, q)) = s.split_once(['Q', 'q']) {
        let year: i32 = y.trim_end_matches(':').parse().map_err(|_| bad_date(s))?;
        let quarter: u32 = q.parse().map_err(|_| bad_date(s))?;
        if !(1..=4).contains(&quarter) {
            return Err(bad_date(s));
        }
        return NaiveDate::from_ymd_opt(year, 3 * quarter - 2, 1).ok_or_else(|| bad_date(s));
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Ok(d);
        }
    }
    NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").map_err(|_| bad_date(s))
}

fn bad_date(s: &str) -> Error {
    Error::Data(format!("unrecognised date '{s}' (expected e.g. 1990Q1 or 1990-01-01)"))
}

/// `1990Q1` label for a date.
pub fn quarter_label(d: NaiveDate) -> String {
    format!("{}Q{}", d.year(), (d.month() - 1) / 3 + 1)
}

/// Read metadata with columns `mnemonic`, `tcode`, `class`.
pub fn read_metadata<R: Read>(reader: R) -> Result<HashMap<String, SeriesMeta>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    let col =
        |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("metadata file has no '{name}' column")));
    let (i_name, i_code, i_class) = (col("mnemonic")?, col("tcode")?, col("class")?);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let name = rec.get(i_name).unwrap_or("").to_string();
        let code: u8 = rec
            .get(i_code)
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Data(format!("series {name}: transformation code is not an integer")))?;
        let tcode = TransformCode::from_code(code).map_err(|e| Error::Data(format!("series {name}: {e}")))?;
        let class = rec.get(i_class).unwrap_or("").parse().map_err(|e| Error::Data(format!("series {name}: {e}")))?;
        out.insert(name, SeriesMeta { tcode, class });
    }
    Ok(out)
}

/// Read a data CSV: header row of mnemonics, first column of dates, empty or
/// `NA` cells treated as missing. FRED-QD style `factors` and `transform`
/// rows under the header, and blank rows, are skipped.
pub fn read_raw_data<R: Read>(reader: R) -> Result<(Vec<String>, Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::Data("data file has no series columns".into()));
    }
    let mut dates = Vec::new();
    let mut vals = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = rec.get(0).unwrap_or("").to_string();
        if rec.iter().all(str::is_empty) || date.eq_ignore_ascii_case("factors") || date.eq_ignore_ascii_case("transform") {
            continue;
        }
        parse_date(&date)?;
        dates.push(date);
        for (c, name) in names.iter().enumerate() {
            let cell = rec.get(c + 1).unwrap_or("");
            let v = if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|_| Error::Data(format!("series {name}: cannot parse '{cell}' as a number")))?
            };
            vals.push(v);
        }
    }
    let t = dates.len();
    Ok((names, dates, DMatrix::from_row_slice(t, vals.len() / t.max(1), &vals)))
}

/// Raw data plus metadata into a transformed, aligned and complete panel.
pub fn assemble_panel(
    names: Vec<String>,
    dates: Vec<String>,
    raw: DMatrix<f64>,
    meta: &HashMap<String, SeriesMeta>,
) -> Result<TimeSeriesPanel> {
    let mut tcodes = Vec::with_capacity(names.len());
    let mut classes = Vec::with_capacity(names.len());
    for name in &names {
        let m = meta.get(name).ok_or_else(|| Error::Data(format!("no metadata row for series {name}")))?;
        tcodes.push(m.tcode);
        classes.push(m.class);
    }
    // log transforms of missing cells are fine; NaN propagates and is caught below
    let (values, drop) = transform_panel(&raw, &tcodes).map_err(|e| match e {
        Error::Data(msg) => {
            let offender = names
                .iter()
                .enumerate()
                .find(|(c, _)| {
                    let col: Vec<f64> = raw.column(*c).iter().copied().filter(|v| !v.is_nan()).collect();
                    super::transform::apply_tcode(&col, tcodes[*c]).is_err()
                })
                .map(|(_, n)| n.clone());
            match offender {
                Some(n) => Error::Data(format!("series {n}: {msg}")),
                None => Error::Data(msg),
            }
        }
        other => other,
    })?;
    let missing: Vec<String> =
        names.iter().enumerate().filter(|(c, _)| values.column(*c).iter().any(|v| !v.is_finite())).map(|(_, n)| n.clone()).collect();
    if !missing.is_empty() {
        return Err(Error::MissingValues(missing));
    }
    TimeSeriesPanel::new(values, names, tcodes, classes, dates[drop..].to_vec())
}

/// Load and transform a panel from a data CSV and a metadata CSV.
pub fn load_panel(data: &Path, meta: &Path) -> Result<TimeSeriesPanel> {
    load_panel_window(data, meta, None, None)
}

/// As [`load_panel`], keeping only raw rows dated within `[from, to]`
/// before transforming.
pub fn load_panel_window(data: &Path, meta: &Path, from: Option<&str>, to: Option<&str>) -> Result<TimeSeriesPanel> {
    let meta = read_metadata(std::fs::File::open(meta)?)?;
    let (names, dates, raw) = read_raw_data(std::fs::File::open(data)?)?;
    let (dates, raw) = restrict_dates(dates, raw, from, to)?;
    assemble_panel(names, dates, raw, &meta)
}

/// Rows of a raw panel dated within `[from, to]`.
pub fn restrict_dates(dates: Vec<String>, raw: DMatrix<f64>, from: Option<&str>, to: Option<&str>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let bound = |b: Option<&str>| b.map(|s| parse_date(s).map_err(|_| Error::Config(format!("cannot parse date '{s}'")))).transpose();
    let (lo, hi) = (bound(from)?, bound(to)?);
    let mut keep = Vec::new();
    for (i, d) in dates.iter().enumerate() {
        let d = parse_date(d)?;
        if lo.is_none_or(|l| d >= l) && hi.is_none_or(|h| d <= h) {
            keep.push(i);
        }
    }
    if keep.is_empty() {
        return Err(Error::Data("no observations inside the requested date window".into()));
    }
    let values = DMatrix::from_fn(keep.len(), raw.ncols(), |r, c| raw[(keep[r], c)]);
    Ok((keep.into_iter().map(|i| dates[i].clone()).collect(), values))
}

/// Write a panel (already transformed) as a data CSV with a date column.
pub fn write_panel_csv<W: std::io::Write>(panel: &TimeSeriesPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    header.extend(panel.names.iter().cloned());
    w.write_record(&header)?;
    for (i, date) in panel.dates.iter().enumerate() {
        let mut rec = vec![date.clone()];
        rec.extend(panel.values.row(i).iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Write metadata rows for a panel.
pub fn write_meta_csv<W: std::io::Write>(panel: &TimeSeriesPanel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["mnemonic", "tcode", "class"])?;
    for c in 0..panel.n_series() {
        w.write_record([panel.names[c].clone(), panel.tcodes[c].code().to_string(), panel.classes[c].to_string()])?;
    }
    w.flush()?;
    Ok(())
}
