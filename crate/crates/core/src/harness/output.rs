use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::run::{AggregateSeries, RunSummary, Stat, SummaryRow};
use crate::error::{CbwkError, Result};

/// Six significant digits, fixed notation when it stays short.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // 9.999996 rounds up to 10.00000: one digit too many but still exact
        // to six significant digits
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.5e}")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CbwkError + '_ {
    move |source| CbwkError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CbwkError + '_ {
    move |source| CbwkError::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn csv_header(metrics: &[String]) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(metrics.iter().flat_map(|m| [format!("{m}_mean"), format!("{m}_se")]))
        .collect()
}

pub fn write_csv<W: Write>(series: &AggregateSeries, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(csv_header(&series.metrics))?;
    for ((t, mean), se) in series.t.iter().zip(&series.mean).zip(&series.se) {
        let mut rec = Vec::with_capacity(1 + 2 * mean.len());
        rec.push(t.to_string());
        for (m, s) in mean.iter().zip(se) {
            rec.push(fmt6(*m));
            rec.push(fmt6(*s));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(series: &AggregateSeries, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    write_csv(series, BufWriter::new(file)).map_err(csv_err(path))
}

pub fn parse_csv(path: &Path) -> Result<AggregateSeries> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = rdr.headers().map_err(csv_err(path))?.clone();
    let bad = |m: String| CbwkError::Config(format!("{}: {m}", path.display()));
    if header.get(0) != Some("t") || header.len() % 2 != 1 {
        return Err(bad("unexpected CSV header".into()));
    }
    let mut metrics = Vec::new();
    for pair in header.iter().skip(1).collect::<Vec<_>>().chunks(2) {
        let name = pair[0]
            .strip_suffix("_mean")
            .ok_or_else(|| bad(format!("column {} should end in _mean", pair[0])))?;
        if pair[1] != format!("{name}_se") {
            return Err(bad(format!("column {} should be {name}_se", pair[1])));
        }
        metrics.push(name.to_string());
    }
    let mut series = AggregateSeries {
        metrics,
        t: Vec::new(),
        mean: Vec::new(),
        se: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| bad(format!("column {}: {e}", header[i].to_string())))
        };
        series
            .t
            .push(rec[0].parse().map_err(|e| bad(format!("column t: {e}")))?);
        let mut m = Vec::new();
        let mut s = Vec::new();
        for k in 0..series.metrics.len() {
            m.push(num(1 + 2 * k)?);
            s.push(num(2 + 2 * k)?);
        }
        series.mean.push(m);
        series.se.push(s);
    }
    Ok(series)
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub rows: Vec<SummaryRow>,
    #[serde(default)]
    pub runs: Vec<RunSummary>,
}

pub fn emit_summary_json(rows: &[SummaryRow], runs: &[RunSummary], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let body = SummaryFile {
        rows: rows.to_vec(),
        runs: runs.to_vec(),
    };
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &body).map_err(|source| CbwkError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

pub fn read_summary_json(path: &Path) -> Result<SummaryFile> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CbwkError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn cell(s: Option<Stat>) -> String {
    match s {
        Some(s) => format!("{:.4} ({:.4})", s.mean, s.two_se),
        None => "-".to_string(),
    }
}

/// Final-round table: mean with 2·SE in parentheses.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let header = ["strategy", "reward", "ride cost", "voucher cost", "fairness cost"];
    let body: Vec<[String; 5]> = rows
        .iter()
        .map(|r| {
            [
                r.label.clone(),
                cell(Some(r.reward)),
                cell(r.ride),
                cell(r.voucher),
                cell(r.fairness),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: Vec<&str>, out: &mut String| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        out.push_str(parts.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec(), &mut out);
    for row in &body {
        line(row.iter().map(String::as_str).collect(), &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0");
        assert_eq!(fmt6(0.46512345), "0.465123");
        assert_eq!(fmt6(0.051999999), "0.052");
        assert_eq!(fmt6(1234.5678), "1234.57");
        assert_eq!(fmt6(-0.00012345678), "-0.000123457");
        assert_eq!(fmt6(1.5e-9), "1.50000e-9");
        for x in [0.1234567, 3.0e-7, 98765.4321, 1e6 + 3.0, -2.5] {
            let back: f64 = fmt6(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-6, "{x} -> {}", fmt6(x));
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let s = AggregateSeries {
            metrics: vec!["avg_reward".into()],
            t: vec![],
            mean: vec![],
            se: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,avg_reward_mean,avg_reward_se\n");
    }
}
