//! CSV and markdown reports of benchmark rows.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::metrics::MetricReport;

use super::bench::{aggregate, BenchFailure, BenchRow};

pub const CSV_HEADER: [&str; 7] = [
    "image_id",
    "method",
    "degradation_id",
    "psnr_db",
    "ssim",
    "mse",
    "edge_loss",
];

/// Shortest round-trip decimal; infinities print as `inf`.
fn number(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "inf" => Some(f64::INFINITY),
        _ => s.parse().ok(),
    }
}

pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| Error::Format(format!("CSV encoding failed: {e}"));
    w.write_record(CSV_HEADER).map_err(encode)?;
    for r in rows {
        w.write_record([
            r.image_id.clone(),
            r.method.clone(),
            r.degradation_id.clone(),
            number(r.report.psnr),
            number(r.report.ssim),
            number(r.report.mse),
            number(r.report.edge_loss),
        ])
        .map_err(encode)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

pub fn write_csv(rows: &[BenchRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, rows_to_csv(rows)?).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str, origin: &Path) -> Result<Vec<BenchRow>> {
    let decode = |reason: String| Error::Decode {
        path: origin.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| decode(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(decode(format!("expected header {}", CSV_HEADER.join(","))));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| decode(e.to_string()))?;
            let num = |k: usize| {
                parse_number(&rec[k])
                    .ok_or_else(|| decode(format!("row {}: bad number {:?}", i + 1, &rec[k])))
            };
            Ok(BenchRow {
                image_id: rec[0].to_string(),
                method: rec[1].to_string(),
                degradation_id: rec[2].to_string(),
                report: MetricReport {
                    psnr: num(3)?,
                    ssim: num(4)?,
                    mse: num(5)?,
                    edge_loss: num(6)?,
                },
            })
        })
        .collect()
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BenchRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

pub fn failures_to_csv(failures: &[BenchFailure]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| Error::Format(format!("CSV encoding failed: {e}"));
    w.write_record(["image_id", "method", "degradation_id", "error"])
        .map_err(encode)?;
    for f in failures {
        w.write_record([&f.image_id, &f.method, &f.degradation_id, &f.error])
            .map_err(encode)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}

/// Methods as rows, one SSIM/PSNR column pair per degradation. Means are
/// recomputed from `rows`; a missing combination prints `-`.
pub fn markdown_table(rows: &[BenchRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(invalid!("no benchmark rows to report (empty method list?)"));
    }
    let aggregates = aggregate(rows);
    let mut methods: Vec<&str> = Vec::new();
    let mut cells: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !cells.contains(&r.degradation_id.as_str()) {
            cells.push(&r.degradation_id);
        }
    }
    let mut out = String::from("| Method |");
    for c in &cells {
        write!(out, " {c} SSIM | {c} PSNR |").unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(2 * cells.len()));
    out.push('\n');
    for m in &methods {
        write!(out, "| {m} |").unwrap();
        for c in &cells {
            match aggregates
                .iter()
                .find(|a| a.method == *m && a.degradation_id == *c)
            {
                Some(a) => write!(out, " {:.4} | {:.2} |", a.mean_ssim, a.mean_psnr).unwrap(),
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

/// Full-precision per-(method, degradation) means.
pub fn aggregates_to_csv(rows: &[BenchRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let encode = |e: csv::Error| Error::Format(format!("CSV encoding failed: {e}"));
    w.write_record(["method", "degradation_id", "count", "mean_psnr_db", "mean_ssim"])
        .map_err(encode)?;
    for a in aggregate(rows) {
        w.write_record([
            a.method,
            a.degradation_id,
            a.count.to_string(),
            number(a.mean_psnr),
            number(a.mean_ssim),
        ])
        .map_err(encode)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("CSV encoding failed: {e}")))?;
    Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
}
