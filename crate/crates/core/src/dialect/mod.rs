//! Linking standard proverbs to localized variants by edit distance.

mod diff;

use std::cmp::Ordering;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_with, NormalizeOptions, Proverb};
use crate::Scalar;

pub use diff::{diff_entry, render_ansi, render_html, DiffEntry};

pub const DEFAULT_MAX_NORM_DIST: f64 = 0.35;

#[derive(Debug, thiserror::Error)]
pub enum DialectError {
    #[error("no standard proverbs to match against")]
    NoStandards,
    #[error("normalized threshold {0} is outside [0, 1]")]
    BadThreshold(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Distance divided by the longer length in scalar values; 0 for two empty strings.
pub fn normalized_distance<T: Scalar>(distance: usize, len_a: usize, len_b: usize) -> T {
    let longest = len_a.max(len_b);
    if longest == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(distance) / T::from_usize_lossy(longest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EditOp {
    Keep(char),
    Substitute(char, char),
    Insert(char),
    Delete(char),
}

impl EditOp {
    pub fn is_edit(&self) -> bool {
        !matches!(self, EditOp::Keep(_))
    }
}

/// One optimal alignment from `a` to `b`. The backtrace prefers
/// keep/substitute, then delete, then insert.
pub fn edit_alignment(a: &str, b: &str) -> Vec<EditOp> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for (j, cell) in d.iter_mut().enumerate().take(m + 1) {
        *cell = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 && d[(i - 1) * w + j - 1] + usize::from(a[i - 1] != b[j - 1]) == here {
            ops.push(if a[i - 1] == b[j - 1] { EditOp::Keep(a[i - 1]) } else { EditOp::Substitute(a[i - 1], b[j - 1]) });
            i -= 1;
            j -= 1;
        } else if i > 0 && d[(i - 1) * w + j] + 1 == here {
            ops.push(EditOp::Delete(a[i - 1]));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(b[j - 1]));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Applies a script to its source. Returns `None` if the script does not fit.
pub fn apply_script(source: &str, script: &[EditOp]) -> Option<String> {
    let mut src = source.chars();
    let mut out = String::new();
    for op in script {
        match *op {
            EditOp::Keep(c) => {
                (src.next()? == c).then_some(())?;
                out.push(c);
            }
            EditOp::Substitute(old, new) => {
                (src.next()? == old).then_some(())?;
                out.push(new);
            }
            EditOp::Delete(c) => (src.next()? == c).then_some(())?,
            EditOp::Insert(c) => out.push(c),
        }
    }
    src.next().is_none().then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MatchThreshold {
    /// Upper bound on distance over the longer length.
    Normalized(f64),
    /// Upper bound on raw edit distance.
    Absolute(usize),
}

impl Default for MatchThreshold {
    fn default() -> Self {
        MatchThreshold::Normalized(DEFAULT_MAX_NORM_DIST)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult<T> {
    pub standard_id: String,
    pub localized_id: String,
    pub place: Option<String>,
    pub distance: usize,
    pub normalized_distance: T,
}

struct Prepared<'a> {
    id: &'a str,
    chars: Vec<char>,
}

fn prepare(p: &Proverb) -> Prepared<'_> {
    Prepared { id: &p.id, chars: normalize_with(&p.text, NormalizeOptions::MATCHING).chars().collect() }
}

/// (distance, longer length) compared by distance/length without rounding.
fn cmp_normalized(a: (usize, usize), b: (usize, usize)) -> Ordering {
    let lhs = a.0 as u128 * b.1.max(1) as u128;
    let rhs = b.0 as u128 * a.1.max(1) as u128;
    lhs.cmp(&rhs)
}

/// For each localized proverb, the nearest standard proverb on
/// case-folded, accent-free text, kept if within `threshold`. Nearness is
/// measured in the same unit as the threshold; ties go to the lower
/// standard id. Results are ordered by localized id.
pub fn match_corpora<T: Scalar>(
    standards: &[Proverb],
    localized: &[Proverb],
    threshold: MatchThreshold,
) -> Result<Vec<MatchResult<T>>, DialectError> {
    if standards.is_empty() {
        return Err(DialectError::NoStandards);
    }
    if let MatchThreshold::Normalized(t) = threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(DialectError::BadThreshold(t));
        }
    }
    let mut std_prep: Vec<Prepared> = standards.iter().map(prepare).collect();
    std_prep.sort_by(|a, b| a.id.cmp(b.id));
    let mut out: Vec<MatchResult<T>> = localized
        .par_iter()
        .filter_map(|loc| {
            let lp = prepare(loc);
            let mut best: Option<(&Prepared, usize, usize)> = None;
            for s in &std_prep {
                let longest = s.chars.len().max(lp.chars.len());
                let gap = s.chars.len().abs_diff(lp.chars.len());
                if let Some((_, bd, bl)) = best {
                    // the length gap is a lower bound on the distance
                    let bound_worse = match threshold {
                        MatchThreshold::Absolute(_) => gap >= bd,
                        MatchThreshold::Normalized(_) => cmp_normalized((gap, longest), (bd, bl)) != Ordering::Less,
                    };
                    if bound_worse {
                        continue;
                    }
                }
                let dist = levenshtein_chars(&s.chars, &lp.chars);
                let better = match best {
                    None => true,
                    Some((_, bd, bl)) => match threshold {
                        MatchThreshold::Absolute(_) => dist < bd,
                        MatchThreshold::Normalized(_) => cmp_normalized((dist, longest), (bd, bl)) == Ordering::Less,
                    },
                };
                if better {
                    best = Some((s, dist, longest));
                }
            }
            let (s, dist, longest) = best?;
            let keep = match threshold {
                MatchThreshold::Absolute(max) => dist <= max,
                MatchThreshold::Normalized(max) => (dist as f64) <= max * longest as f64,
            };
            keep.then(|| MatchResult {
                standard_id: s.id.to_string(),
                localized_id: loc.id.clone(),
                place: loc.place.clone(),
                distance: dist,
                normalized_distance: normalized_distance(dist, longest, 0),
            })
        })
        .collect();
    out.sort_by(|a, b| a.localized_id.cmp(&b.localized_id));
    Ok(out)
}

pub fn write_matches<T: Scalar>(path: &Path, matches: &[MatchResult<T>]) -> Result<(), DialectError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["standard_id", "localized_id", "place", "distance", "normalized_distance"])?;
    for m in matches {
        w.write_record([
            m.standard_id.as_str(),
            m.localized_id.as_str(),
            m.place.as_deref().unwrap_or(""),
            &m.distance.to_string(),
            &m.normalized_distance.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a match report written by [`write_matches`].
pub fn load_matches<T: Scalar>(path: &Path) -> Result<Vec<MatchResult<T>>, DialectError> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let mut out = Vec::new();
    for row in r.deserialize::<MatchResult<f64>>() {
        let m = row?;
        out.push(MatchResult {
            standard_id: m.standard_id,
            localized_id: m.localized_id,
            place: m.place.filter(|p| !p.is_empty()),
            distance: m.distance,
            normalized_distance: T::from_f64_lossy(m.normalized_distance),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Variety;
    use proptest::prelude::*;
    use EditOp::*;

    #[test]
    fn distance_examples() {
        assert_eq!(levenshtein("λόγος", "λόγος"), 0);
        assert_eq!(levenshtein("", "αβγ"), 3);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("άλφα", "αλφα"), 1);
    }

    #[test]
    fn alignment_examples() {
        assert_eq!(edit_alignment("γενιά", "ενιά"), vec![Delete('γ'), Keep('ε'), Keep('ν'), Keep('ι'), Keep('ά')]);
        let s = edit_alignment("σκύλος", "σκύλλος");
        let edits: Vec<_> = s.iter().filter(|o| o.is_edit()).collect();
        assert_eq!(edits, vec![&Insert('λ')]);
        assert_eq!(apply_script("σκύλος", &s).as_deref(), Some("σκύλλος"));
        assert_eq!(apply_script("x", &[Keep('y')]), None);
    }

    fn prov(id: &str, text: &str, variety: Variety) -> Proverb {
        Proverb::new(id, text, variety)
    }

    #[test]
    fn matching_rules() {
        let std = vec![
            prov("s2", "η μέρα βλέπει", Variety::Standard),
            prov("s1", "η μέρα βλέπει", Variety::Standard),
            prov("s3", "ο σκύλος γαβγίζει", Variety::Standard),
        ];
        let loc = vec![
            prov("l1", "Η ΜΕΡΑ ΒΛΕΠΕΙ", Variety::Localized),
            prov("l2", "ζζζζζζζζζζζζζζζζ", Variety::Localized),
            prov("l0", "ο σκύλλος γαβγίζει", Variety::Localized),
        ];
        let m = match_corpora::<f64>(&std, &loc, MatchThreshold::default()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].localized_id.as_str(), m[0].standard_id.as_str(), m[0].distance), ("l0", "s3", 1));
        assert_eq!((m[1].localized_id.as_str(), m[1].standard_id.as_str(), m[1].distance), ("l1", "s1", 0));
        assert_eq!(m[1].normalized_distance, 0.0);
        assert!(matches!(match_corpora::<f64>(&[], &loc, MatchThreshold::default()), Err(DialectError::NoStandards)));
        assert!(match_corpora::<f64>(&std, &loc, MatchThreshold::Normalized(1.5)).is_err());
        let abs = match_corpora::<f64>(&std, &loc, MatchThreshold::Absolute(0)).unwrap();
        assert_eq!(abs.len(), 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_matches(&path, &m).unwrap();
        assert_eq!(load_matches::<f64>(&path).unwrap(), m);
    }

    fn short_text() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(vec!['α', 'β', 'γ', 'ά', 'a', ' ']), 0..12)
            .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn metric_and_script(a in short_text(), b in short_text(), c in short_text()) {
            let ab = levenshtein(&a, &b);
            prop_assert_eq!(ab, levenshtein(&b, &a));
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
            prop_assert!(ab <= a.chars().count().max(b.chars().count()));
            let script = edit_alignment(&a, &b);
            prop_assert_eq!(script.iter().filter(|o| o.is_edit()).count(), ab);
            prop_assert_eq!(apply_script(&a, &script), Some(b.clone()));
        }

        #[test]
        fn matching_ignores_input_order(texts in prop::collection::vec(short_text(), 1..8), seed in any::<u64>()) {
            let std: Vec<Proverb> = ["αβγ", "ββ", "a γ"].iter().enumerate()
                .map(|(i, t)| prov(&format!("s{i}"), t, Variety::Standard)).collect();
            let loc: Vec<Proverb> = texts.iter().enumerate().filter(|(_, t)| !t.trim().is_empty())
                .map(|(i, t)| prov(&format!("l{i}"), t, Variety::Localized)).collect();
            let mut shuffled = loc.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed));
            let a = match_corpora::<f64>(&std, &loc, MatchThreshold::Normalized(0.5)).unwrap();
            let b = match_corpora::<f64>(&std, &shuffled, MatchThreshold::Normalized(0.5)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
