//! CSV ingestion and emission.
//!
//! Input is comma separated with a header row. With `has_dates` the first
//! column holds ISO-8601 calendar dates (`YYYY-MM-DD`) and is kept as
//! metadata. Every other cell must parse as a finite decimal number.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use expectile_core::sample::MultivariateSample;
use std::path::Path;

/// Dated columns without the size checks of a sample, so that short price
/// or return series can be passed around before estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct DatedPanel {
    pub dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DatedPanel {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn to_sample(&self) -> expectile_core::Result<MultivariateSample> {
        MultivariateSample::from_columns(self.columns.clone(), self.labels.clone())
    }
}

/// What `ingest_csv` returns: dates are present iff the file had a date column.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub dates: Option<Vec<NaiveDate>>,
    pub sample: MultivariateSample,
}

impl Ingested {
    pub fn dated(&self) -> Option<DatedPanel> {
        let columns = self.sample.columns().map(<[f64]>::to_vec).collect();
        self.dates.clone().map(|dates| DatedPanel { dates, labels: self.sample.labels().to_vec(), columns })
    }
}

pub fn ingest_csv(path: &Path, has_dates: bool) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, has_dates, path)
}

pub fn parse_csv(text: &str, has_dates: bool, path: &Path) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let format = |message: String| Error::Format { path: path.to_path_buf(), message };
    let header: Vec<String> = reader.headers().map_err(|e| format(e.to_string()))?.iter().map(str::to_string).collect();
    let skip = has_dates as usize;
    if header.len() <= skip {
        return Err(format("header names no data columns".into()));
    }
    let labels: Vec<String> = header[skip..].to_vec();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    let mut dates = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| format(e.to_string()))?;
        let bad = |column: &str, message: String| Error::Ingest { path: path.to_path_buf(), row, column: column.to_string(), message };
        if record.len() != header.len() {
            return Err(bad("*", format!("expected {} fields, found {}", header.len(), record.len())));
        }
        if has_dates {
            let cell = &record[0];
            let date = NaiveDate::parse_from_str(cell, "%Y-%m-%d").map_err(|e| bad(&header[0], format!("date {cell:?}: {e}")))?;
            dates.push(date);
        }
        for (j, label) in labels.iter().enumerate() {
            let cell = &record[j + skip];
            if cell.is_empty() {
                return Err(bad(label, "missing value".into()));
            }
            let x: f64 = cell.parse().map_err(|_| bad(label, format!("not a number: {cell:?}")))?;
            if !x.is_finite() {
                return Err(bad(label, format!("non-finite value {cell:?}")));
            }
            columns[j].push(x);
        }
    }
    let sample = MultivariateSample::from_columns(columns, labels).map_err(|e| format(e.to_string()))?;
    Ok(Ingested { dates: has_dates.then_some(dates), sample })
}

/// `%.17g`: 17 significant digits, trailing zeros dropped, so every finite
/// double survives a print/parse round trip.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{:.16e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Header plus rows, every number through [`fmt_g17`].
pub fn emit_csv(sample: &MultivariateSample) -> String {
    let columns: Vec<&[f64]> = sample.columns().collect();
    emit_columns(None, sample.labels(), &columns)
}

pub fn emit_dated(panel: &DatedPanel) -> String {
    let columns: Vec<&[f64]> = panel.columns.iter().map(Vec::as_slice).collect();
    emit_columns(Some(&panel.dates), &panel.labels, &columns)
}

fn emit_columns(dates: Option<&[NaiveDate]>, labels: &[String], columns: &[&[f64]]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = Vec::new();
    if dates.is_some() {
        header.push("date");
    }
    header.extend(labels.iter().map(String::as_str));
    w.write_record(&header).expect("in-memory write");
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ds) = dates {
            row.push(ds[i].format("%Y-%m-%d").to_string());
        }
        row.extend(columns.iter().map(|c| fmt_g17(c[i])));
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, dates: bool) -> Result<Ingested> {
        parse_csv(text, dates, Path::new("mem.csv"))
    }

    #[test]
    fn three_by_two() {
        let s = parse("a,b\n1,2\n3,4\n5,6.5\n7,8\n", false).unwrap().sample;
        assert_eq!((s.n(), s.d()), (4, 2));
        assert_eq!(s.labels(), ["a", "b"]);
        assert_eq!(s.column(1), [2.0, 4.0, 6.5, 8.0]);
    }

    #[test]
    fn blank_cell_is_named() {
        let err = parse("a,b\n1,2\n3,\n5,6\n7,8\n", false).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("column b") && err.contains("missing"), "{err}");
    }

    #[test]
    fn ragged_and_garbage_rows() {
        let err = parse("a,b\n1,2\n3\n", false).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("expected 2 fields"), "{err}");
        let err = parse("a,b\n1,2\n3,x\n", false).unwrap_err().to_string();
        assert!(err.contains("not a number"), "{err}");
        assert!(parse("a\n1\n2\n3\ninf\n", false).is_err());
    }

    #[test]
    fn dates_become_metadata() {
        let t = "date,x\n2020-01-01,1\n2020-01-02,2\n2020-01-03,3\n2020-01-06,4\n";
        let got = parse(t, true).unwrap();
        assert_eq!(got.dates.as_ref().unwrap().len(), got.sample.n());
        assert_eq!(got.sample.labels(), ["x"]);
        let err = parse("date,x\n2020-13-01,1\n", true).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("column date"), "{err}");
    }

    #[test]
    fn g17_format() {
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(1e-7), "9.9999999999999995e-08");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
    }

    #[test]
    fn emit_then_ingest_is_bit_identical() {
        let cols = vec![vec![0.1, 1.0 / 3.0, -2.0e-9, 7.0], vec![1e300, 5e-324, 2.0f64.sqrt(), -0.0]];
        let s = MultivariateSample::from_columns(cols, vec!["p".into(), "q".into()]).unwrap();
        let text = emit_csv(&s);
        let back = parse(&text, false).unwrap().sample;
        for j in 0..2 {
            for (a, b) in s.column(j).iter().zip(back.column(j)) {
                assert!(a.to_bits() == b.to_bits() || (*a == 0.0 && *b == 0.0), "{a} vs {b}");
            }
        }
        assert_eq!(emit_csv(&back), text);
    }
}
