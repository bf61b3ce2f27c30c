use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use super::{AnnotationRecord, Corpus, CorpusError, Proverb, Variety};
use crate::annotation::EmotionLabel;
use crate::sentiment::Sentiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Csv,
    Jsonl,
}

impl FileFormat {
    /// Guesses from the extension; anything but `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> FileFormat {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("jsonl") | Some("ndjson") | Some("json") => FileFormat::Jsonl,
            _ => FileFormat::Csv,
        }
    }
}

impl FromStr for FileFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(FileFormat::Csv),
            "jsonl" => Ok(FileFormat::Jsonl),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io { path: path.display().to_string(), source }
}

fn field_err(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Field { line, field: field.to_string(), message: message.into() }
}

/// Loads a proverb file into a corpus with no annotations.
pub fn load_corpus(path: &Path, format: FileFormat) -> Result<Corpus, CorpusError> {
    Corpus::new(load_proverbs(path, format)?, Vec::new())
}

pub fn load_proverbs(path: &Path, format: FileFormat) -> Result<Vec<Proverb>, CorpusError> {
    let rows: Vec<(usize, Proverb)> = match format {
        FileFormat::Csv => read_proverb_csv(path)?,
        FileFormat::Jsonl => read_jsonl(path)?,
    };
    let mut ids = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, mut p) in rows {
        p.validate().map_err(|message| CorpusError::Row { line, message })?;
        if !ids.insert(p.id.clone()) {
            return Err(CorpusError::DuplicateProverb(p.id));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path, format: FileFormat) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let rows: Vec<(usize, AnnotationRecord)> = match format {
        FileFormat::Csv => read_annotation_csv(path)?,
        FileFormat::Jsonl => read_jsonl(path)?,
    };
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if r.proverb_id.trim().is_empty() {
            return Err(field_err(line, "proverb_id", "empty"));
        }
        if r.annotator_id.trim().is_empty() {
            return Err(field_err(line, "annotator_id", "empty"));
        }
        if !seen.insert((r.proverb_id.clone(), r.annotator_id.clone())) {
            return Err(CorpusError::DuplicateAnnotation { proverb_id: r.proverb_id, annotator_id: r.annotator_id });
        }
        out.push(r);
    }
    Ok(out)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Row { line: line_no, message: e.to_string() })?;
        out.push((line_no, value));
    }
    Ok(out)
}

struct Columns(HashMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord, required: &[&str]) -> Result<Self, CorpusError> {
        let map: HashMap<String, usize> =
            headers.iter().enumerate().map(|(i, h)| (h.trim().to_string(), i)).collect();
        for r in required {
            if !map.contains_key(*r) {
                return Err(CorpusError::Row { line: 1, message: format!("missing required column `{r}`") });
            }
        }
        Ok(Columns(map))
    }

    /// Trimmed cell, `None` when the column is absent or the cell is blank.
    fn get<'r>(&self, rec: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.0
            .get(name)
            .and_then(|&i| rec.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, CorpusError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(file))
}

fn csv_rows(path: &Path) -> Result<(csv::StringRecord, Vec<(usize, csv::StringRecord)>), CorpusError> {
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| CorpusError::Row { line: 1, message: e.to_string() })?
        .clone();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            CorpusError::Row { line, message: e.to_string() }
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, rec));
    }
    Ok((headers, rows))
}

fn split_list(cell: Option<&str>) -> Vec<&str> {
    cell.map(|c| c.split(';').map(str::trim).filter(|s| !s.is_empty()).collect())
        .unwrap_or_default()
}

fn parse_coord(line: usize, field: &str, cell: Option<&str>) -> Result<Option<f64>, CorpusError> {
    cell.map(|c| {
        c.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| field_err(line, field, format!("not a number: {c:?}")))
    })
    .transpose()
}

fn read_proverb_csv(path: &Path) -> Result<Vec<(usize, Proverb)>, CorpusError> {
    let (headers, rows) = csv_rows(path)?;
    let cols = Columns::new(&headers, &["id", "text", "variety"])?;
    rows.into_iter()
        .map(|(line, rec)| {
            let id = cols.get(&rec, "id").ok_or_else(|| field_err(line, "id", "empty"))?;
            let text = cols.get(&rec, "text").ok_or_else(|| field_err(line, "text", "empty"))?;
            let variety: Variety = cols
                .get(&rec, "variety")
                .ok_or_else(|| field_err(line, "variety", "empty"))?
                .parse()
                .map_err(|m: String| field_err(line, "variety", m))?;
            let lat = parse_coord(line, "lat", cols.get(&rec, "lat"))?;
            let lon = parse_coord(line, "lon", cols.get(&rec, "lon"))?;
            if lat.is_some() != lon.is_some() {
                let field = if lat.is_some() { "lon" } else { "lat" };
                return Err(field_err(line, field, "lat and lon must be given together"));
            }
            Ok((
                line,
                Proverb {
                    id: id.to_string(),
                    text: text.to_string(),
                    variety,
                    topics: split_list(cols.get(&rec, "topics")).into_iter().map(String::from).collect(),
                    place: cols.get(&rec, "place").map(String::from),
                    lat,
                    lon,
                    source: cols.get(&rec, "source").map(String::from),
                },
            ))
        })
        .collect()
}

fn parse_bool(line: usize, cell: Option<&str>) -> Result<Option<bool>, CorpusError> {
    cell.map(|c| match c.to_ascii_lowercase().as_str() {
        "true" | "yes" | "y" | "1" => Ok(true),
        "false" | "no" | "n" | "0" => Ok(false),
        _ => Err(field_err(line, "seen_before", format!("not a boolean: {c:?}"))),
    })
    .transpose()
}

fn read_annotation_csv(path: &Path) -> Result<Vec<(usize, AnnotationRecord)>, CorpusError> {
    let (headers, rows) = csv_rows(path)?;
    let cols = Columns::new(&headers, &["proverb_id", "annotator_id"])?;
    rows.into_iter()
        .map(|(line, rec)| {
            let proverb_id = cols.get(&rec, "proverb_id").ok_or_else(|| field_err(line, "proverb_id", "empty"))?;
            let annotator_id =
                cols.get(&rec, "annotator_id").ok_or_else(|| field_err(line, "annotator_id", "empty"))?;
            let sentiment = cols
                .get(&rec, "sentiment")
                .map(|s| s.parse::<Sentiment>().map_err(|e| field_err(line, "sentiment", e.to_string())))
                .transpose()?;
            let emotions = split_list(cols.get(&rec, "emotions"))
                .into_iter()
                .map(|e| e.parse::<EmotionLabel>().map_err(|err| field_err(line, "emotions", err.to_string())))
                .collect::<Result<BTreeSet<_>, _>>()?;
            Ok((
                line,
                AnnotationRecord {
                    proverb_id: proverb_id.to_string(),
                    annotator_id: annotator_id.to_string(),
                    seen_before: parse_bool(line, cols.get(&rec, "seen_before"))?,
                    sentiment,
                    emotions,
                },
            ))
        })
        .collect()
}

fn create(path: &Path) -> Result<BufWriter<File>, CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(path, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(item).expect("serializable record");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> CorpusError {
    io_err(path, std::io::Error::other(e))
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_proverbs(path: &Path, proverbs: &[Proverb], format: FileFormat) -> Result<(), CorpusError> {
    match format {
        FileFormat::Jsonl => write_jsonl(path, proverbs),
        FileFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["id", "text", "variety", "topics", "place", "lat", "lon", "source"])
                .map_err(|e| csv_err(path, e))?;
            for p in proverbs {
                w.write_record([
                    p.id.clone(),
                    p.text.clone(),
                    p.variety.to_string(),
                    p.topics.join(";"),
                    p.place.clone().unwrap_or_default(),
                    opt_f64(p.lat),
                    opt_f64(p.lon),
                    p.source.clone().unwrap_or_default(),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))
        }
    }
}

pub fn write_annotations(path: &Path, records: &[AnnotationRecord], format: FileFormat) -> Result<(), CorpusError> {
    match format {
        FileFormat::Jsonl => write_jsonl(path, records),
        FileFormat::Csv => {
            let mut w = csv::Writer::from_writer(create(path)?);
            w.write_record(["proverb_id", "annotator_id", "seen_before", "sentiment", "emotions"])
                .map_err(|e| csv_err(path, e))?;
            for r in records {
                w.write_record([
                    r.proverb_id.clone(),
                    r.annotator_id.clone(),
                    r.seen_before.map(|b| b.to_string()).unwrap_or_default(),
                    r.sentiment.map(|s| s.to_string()).unwrap_or_default(),
                    r.emotions.iter().map(|e| e.name()).collect::<Vec<_>>().join(";"),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| io_err(path, e))
        }
    }
}
