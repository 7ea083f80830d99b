//! File and table writers. Everything here is byte-stable for equal inputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use zsslr_core::eval::round1;
use zsslr_core::Result;

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(header).map_err(csv_io)?;
    for r in rows {
        w.write_record(r).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> zsslr_core::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io.into(),
        other => std::io::Error::other(format!("{other:?}")).into(),
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Per-k mean and deviation across repeats.
pub fn summarize_per_k(runs: &[&BTreeMap<usize, f64>]) -> BTreeMap<usize, MeanStd> {
    let mut out = BTreeMap::new();
    if let Some(first) = runs.first() {
        for k in first.keys() {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.get(k).copied()).collect();
            out.insert(*k, MeanStd::of(&vals));
        }
    }
    out
}

/// Accuracy table with one decimal, one row per label.
pub fn accuracy_table(ks: &[usize], rows: &[(&str, &BTreeMap<usize, f64>)]) -> String {
    let mut s = format!("{:<10}", "");
    for k in ks {
        s.push_str(&format!("{:>8}", format!("top-{k}")));
    }
    s.push('\n');
    for (label, values) in rows {
        s.push_str(&format!("{label:<10}"));
        for k in ks {
            match values.get(k) {
                Some(v) => s.push_str(&format!("{:>8.1}", round1(*v))),
                None => s.push_str(&format!("{:>8}", "-")),
            }
        }
        s.push('\n');
    }
    s
}
