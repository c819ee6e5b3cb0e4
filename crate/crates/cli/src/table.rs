//! Plain-text tables rounded to two decimals.

use std::fmt::Write;

use multibt::report::PairPrediction;

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{v:.2}"),
        Some(_) => "nan".to_string(),
        None => "-".to_string(),
    }
}

/// A labelled square matrix, `None` entries printed as `-`.
pub fn matrix(title: &str, names: &[String], rows: &[Vec<Option<f64>>]) -> String {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{title}\n{:width$}", "");
    for n in names {
        let _ = write!(out, " {n:>width$}");
    }
    out.push('\n');
    for (name, row) in names.iter().zip(rows) {
        let _ = write!(out, "{name:width$}");
        for v in row {
            let _ = write!(out, " {:>width$}", cell(*v));
        }
        out.push('\n');
    }
    out
}

/// One row per name.
pub fn column(title: &str, header: &[&str], names: &[String], cols: &[Vec<Option<f64>>]) -> String {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{title}\n{:width$}", "");
    for h in header {
        let _ = write!(out, " {h:>8}");
    }
    out.push('\n');
    for (r, name) in names.iter().enumerate() {
        let _ = write!(out, "{name:width$}");
        for col in cols {
            let _ = write!(out, " {:>8}", cell(col[r]));
        }
        out.push('\n');
    }
    out
}

pub fn predictions(preds: &[PairPrediction]) -> String {
    let Some(first) = preds.first() else {
        return String::new();
    };
    let wi = preds.iter().map(|p| p.team_i.len()).max().unwrap_or(0).max(6);
    let wj = preds.iter().map(|p| p.team_j.len()).max().unwrap_or(0).max(6);
    let mut out = format!("{:wi$} {:wj$}", "team_i", "team_j");
    for l in &first.labels {
        let _ = write!(out, " {l:>6}");
    }
    out.push('\n');
    for p in preds {
        let _ = write!(out, "{:wi$} {:wj$}", p.team_i, p.team_j);
        for v in &p.probs {
            let _ = write!(out, " {:>6}", cell(Some(*v)));
        }
        out.push('\n');
    }
    out
}
