use std::fmt::Write;

use super::{DistributionEvalReport, EvalReport};
use crate::Scalar;

/// Left-aligned first column, right-aligned value columns, dashed rule under the header.
pub fn text_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut width: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, w) in width.iter().enumerate() {
            let cell = cells.get(i).map(String::as_str).unwrap_or("");
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "  {cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    let rule = width.iter().sum::<usize>() + 2 * cols.saturating_sub(1);
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn fmt<T: Scalar>(v: T) -> String {
    format!("{:.2}", v.to_f64_lossy())
}

fn fmt_opt<T: Scalar>(v: Option<T>) -> String {
    v.map(fmt).unwrap_or_else(|| "n/a".into())
}

fn shot_header(tag: &str) -> String {
    if tag == "z0" {
        return "0-shot".into();
    }
    if let Some(rest) = tag.strip_prefix("fs") {
        if let Some((k, strategy)) = rest.split_once('-') {
            return format!("{k}-shot {}", strategy.to_uppercase());
        }
    }
    if let Some(n) = tag.strip_prefix("zb") {
        return format!("{n}-batch");
    }
    tag.to_string()
}

fn shot_rank(tag: &str) -> (usize, usize) {
    const STRATEGIES: [&str; 3] = ["rp", "lvs", "dyn"];
    if tag == "z0" {
        return (0, 0);
    }
    if let Some((k, s)) = tag.strip_prefix("fs").and_then(|r| r.split_once('-')) {
        if let (Ok(k), Some(si)) = (k.parse::<usize>(), STRATEGIES.iter().position(|x| *x == s)) {
            return (k, si);
        }
    }
    if let Some(n) = tag.strip_prefix("zb").and_then(|n| n.parse::<usize>().ok()) {
        return (100 + n, 0);
    }
    (usize::MAX, 0)
}

/// Models as rows, technique tags as columns; missing cells show `-`.
fn pivot<T: Scalar>(entries: &[(&str, &str, &EvalReport<T>)]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut tags: Vec<&str> = Vec::new();
    for (m, t, _) in entries {
        if !models.contains(m) {
            models.push(m);
        }
        if !tags.contains(t) {
            tags.push(t);
        }
    }
    tags.sort_by_key(|t| shot_rank(t));
    let mut headers = vec!["Model".to_string()];
    headers.extend(tags.iter().map(|t| shot_header(t)));
    let rows: Vec<Vec<String>> = models
        .iter()
        .map(|m| {
            let mut row = vec![m.to_string()];
            for t in &tags {
                let cell = entries
                    .iter()
                    .rev()
                    .find(|(em, et, _)| em == m && et == t)
                    .map(|(_, _, r)| fmt(r.weighted_f1))
                    .unwrap_or_else(|| "-".into());
                row.push(cell);
            }
            row
        })
        .collect();
    text_table(&headers, &rows)
}

/// Weighted-F1 per model (rows) and shot setting (columns).
pub fn render_shots_table<T: Scalar>(entries: &[(&str, &str, &EvalReport<T>)]) -> String {
    pivot(entries)
}

/// Weighted-F1 per model and batch size.
pub fn render_batch_table<T: Scalar>(entries: &[(&str, &str, &EvalReport<T>)]) -> String {
    pivot(entries)
}

/// Error and correlation columns for percentage prompting, one row per model.
pub fn render_distribution_table<T: Scalar>(entries: &[(&str, &DistributionEvalReport<T>)]) -> String {
    let headers: Vec<String> = ["Model", "MAE", "MSE", "rho Pos", "rho Amb", "rho Neg"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = entries
        .iter()
        .map(|(m, r)| {
            vec![
                m.to_string(),
                fmt(r.mae),
                fmt(r.mse),
                fmt_opt(r.pearson_pos),
                fmt_opt(r.pearson_amb),
                fmt_opt(r.pearson_neg),
            ]
        })
        .collect();
    text_table(&headers, &rows)
}
