use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{edit_alignment, EditOp};
use crate::corpus::Proverb;

/// A matched pair with its character alignment on the original texts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffEntry {
    pub standard_id: String,
    pub localized_id: String,
    pub place: Option<String>,
    pub standard_text: String,
    pub localized_text: String,
    pub script: Vec<EditOp>,
}

pub fn diff_entry(standard: &Proverb, localized: &Proverb) -> DiffEntry {
    DiffEntry {
        standard_id: standard.id.clone(),
        localized_id: localized.id.clone(),
        place: localized.place.clone(),
        standard_text: standard.text.clone(),
        localized_text: localized.text.clone(),
        script: edit_alignment(&standard.text, &localized.text),
    }
}

fn escape(c: char, out: &mut String) {
    match c {
        '<' => out.push_str("&lt;"),
        '>' => out.push_str("&gt;"),
        '&' => out.push_str("&amp;"),
        '"' => out.push_str("&quot;"),
        _ => out.push(c),
    }
}

fn escape_str(s: &str) -> String {
    let mut out = String::new();
    s.chars().for_each(|c| escape(c, &mut out));
    out
}

/// Localized text marked up against the standard: substituted characters in
/// red, inserted ones on green, deleted ones on red.
fn marked_html(script: &[EditOp]) -> String {
    let mut out = String::new();
    for op in script {
        let (class, c) = match *op {
            EditOp::Keep(c) => {
                escape(c, &mut out);
                continue;
            }
            EditOp::Substitute(_, new) => ("sub", new),
            EditOp::Insert(c) => ("ins", c),
            EditOp::Delete(c) => ("del", c),
        };
        let _ = write!(out, "<span class=\"{class}\">");
        escape(c, &mut out);
        out.push_str("</span>");
    }
    out
}

const STYLE: &str = ".sub{color:#c00}.ins{background:#bfb}.del{background:#f99}\
table{border-collapse:collapse}td,th{border:1px solid #999;padding:4px 8px;text-align:left}";

pub fn render_html(entries: &[DiffEntry]) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Dialect alignments</title>\n");
    let _ = writeln!(out, "<style>{STYLE}</style>\n</head>\n<body>");
    out.push_str("<p><span class=\"sub\">substitution</span> <span class=\"ins\">insertion</span> <span class=\"del\">deletion</span></p>\n");
    out.push_str("<table>\n<tr><th>Place</th><th>Standard</th><th>Localized</th><th>Edits</th></tr>\n");
    for e in entries {
        let edits = e.script.iter().filter(|o| o.is_edit()).count();
        let _ = writeln!(
            out,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{edits}</td></tr>",
            escape_str(e.place.as_deref().unwrap_or("")),
            escape_str(&e.standard_text),
            marked_html(&e.script),
        );
    }
    out.push_str("</table>\n</body>\n</html>\n");
    out
}

const RED: &str = "\x1b[31m";
const ON_GREEN: &str = "\x1b[42m";
const ON_RED: &str = "\x1b[41m";
const RESET: &str = "\x1b[0m";

/// Terminal rendering with the same three highlight categories.
pub fn render_ansi(entries: &[DiffEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        let _ = writeln!(
            out,
            "{} -> {}{}",
            e.standard_id,
            e.localized_id,
            e.place.as_deref().map(|p| format!(" ({p})")).unwrap_or_default()
        );
        let _ = writeln!(out, "  {}", e.standard_text);
        out.push_str("  ");
        for op in &e.script {
            match *op {
                EditOp::Keep(c) => out.push(c),
                EditOp::Substitute(_, c) => {
                    let _ = write!(out, "{RED}{c}{RESET}");
                }
                EditOp::Insert(c) => {
                    let _ = write!(out, "{ON_GREEN}{c}{RESET}");
                }
                EditOp::Delete(c) => {
                    let _ = write!(out, "{ON_RED}{c}{RESET}");
                }
            }
        }
        out.push('\n');
    }
    out
}
