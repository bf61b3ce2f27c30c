//! Regional aggregation of per-proverb sentiment and GeoJSON map layers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::Proverb;
use crate::{Scalar, Sentiment};

pub const DEFAULT_GRID_DEGREES: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("no proverb could be grouped into a region")]
    NothingToGroup,
    #[error("grid cell size must be positive, got {0}")]
    BadCell(f64),
    #[error("no regions to write")]
    Empty,
    #[error("{0}")]
    Format(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "degrees")]
pub enum Grouping {
    ByPlace,
    ByGrid(f64),
    /// By place when any proverb has one, otherwise a 0.1 degree grid.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Positive,
    Negative,
}

impl Layer {
    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Positive => "positive",
            Layer::Negative => "negative",
        }
    }
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Layer::Positive),
            "negative" | "neg" => Ok(Layer::Negative),
            other => Err(format!("unknown layer {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAggregate<T> {
    pub region_key: String,
    pub lat: T,
    pub lon: T,
    pub n: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub n_amb: usize,
    /// Positive plus ambiguous share.
    pub pos_pct: T,
    /// Negative plus ambiguous share.
    pub neg_pct: T,
}

impl<T: Scalar> RegionAggregate<T> {
    pub fn layer_value(&self, layer: Layer) -> T {
        match layer {
            Layer::Positive => self.pos_pct,
            Layer::Negative => self.neg_pct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoPlace,
    NoCoordinates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub proverb_id: String,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation<T> {
    pub regions: Vec<RegionAggregate<T>>,
    pub skipped: Vec<Skipped>,
}

fn grid_key(lat: f64, lon: f64, cell: f64) -> String {
    let i = (lat / cell).floor() as i64;
    let j = (lon / cell).floor() as i64;
    format!("grid:{i}:{j}")
}

/// Groups labelled proverbs into regions. Proverbs without the grouping
/// key or without coordinates are listed in the skip report. Regions are
/// ordered by key.
pub fn aggregate_regions<T: Scalar>(
    items: &[(&Proverb, Sentiment)],
    grouping: Grouping,
) -> Result<Aggregation<T>, GeoError> {
    let grouping = match grouping {
        Grouping::Auto if items.iter().any(|(p, _)| p.place.is_some()) => Grouping::ByPlace,
        Grouping::Auto => Grouping::ByGrid(DEFAULT_GRID_DEGREES),
        g => g,
    };
    if let Grouping::ByGrid(cell) = grouping {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(GeoError::BadCell(cell));
        }
    }
    let mut groups: BTreeMap<String, Vec<(f64, f64, Sentiment)>> = BTreeMap::new();
    let mut skipped = Vec::new();
    for (p, s) in items {
        let skip = |reason| Skipped { proverb_id: p.id.clone(), reason };
        let Some((lat, lon)) = p.coordinates() else {
            skipped.push(skip(SkipReason::NoCoordinates));
            continue;
        };
        let key = match grouping {
            Grouping::ByGrid(cell) => grid_key(lat, lon, cell),
            _ => match p.place.as_deref().map(str::trim).filter(|s| !s.is_empty()) {
                Some(place) => place.to_string(),
                None => {
                    skipped.push(skip(SkipReason::NoPlace));
                    continue;
                }
            },
        };
        groups.entry(key).or_default().push((lat, lon, *s));
    }
    if groups.is_empty() {
        return Err(GeoError::NothingToGroup);
    }
    let regions = groups
        .into_iter()
        .map(|(region_key, mut members)| {
            // fixed summation order keeps the mean independent of input order
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let n = members.len();
            let count = |c: Sentiment| members.iter().filter(|m| m.2 == c).count();
            let (n_pos, n_neg, n_amb) = (count(Sentiment::Positive), count(Sentiment::Negative), count(Sentiment::Ambiguous));
            let nt = T::from_usize_lossy(n);
            let mean = |f: fn(&(f64, f64, Sentiment)) -> f64| {
                members.iter().map(|m| T::from_f64_lossy(f(m))).fold(T::zero(), |a, b| a + b) / nt
            };
            RegionAggregate {
                region_key,
                lat: mean(|m| m.0),
                lon: mean(|m| m.1),
                n,
                n_pos,
                n_neg,
                n_amb,
                pos_pct: T::from_usize_lossy(n_pos + n_amb) / nt,
                neg_pct: T::from_usize_lossy(n_neg + n_amb) / nt,
            }
        })
        .collect();
    Ok(Aggregation { regions, skipped })
}

fn num<T: Scalar>(v: T) -> Value {
    json!(v.to_f64_lossy())
}

pub fn geojson_value<T: Scalar>(aggregates: &[RegionAggregate<T>], layer: Layer) -> Value {
    let features: Vec<Value> = aggregates
        .iter()
        .map(|a| {
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [num(a.lon), num(a.lat)] },
                "properties": {
                    "region": a.region_key,
                    "n": a.n,
                    "n_pos": a.n_pos,
                    "n_neg": a.n_neg,
                    "n_amb": a.n_amb,
                    "pos_pct": num(a.pos_pct),
                    "neg_pct": num(a.neg_pct),
                    "layer": layer.as_str(),
                    "layer_value": num(a.layer_value(layer)),
                }
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Writes one map layer as a FeatureCollection of points.
pub fn emit_geojson<T: Scalar>(aggregates: &[RegionAggregate<T>], layer: Layer, path: &Path) -> Result<(), GeoError> {
    if aggregates.is_empty() {
        return Err(GeoError::Empty);
    }
    let mut text = serde_json::to_string_pretty(&geojson_value(aggregates, layer)).expect("json value");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads regions back from a file written by [`emit_geojson`].
pub fn load_geojson<T: Scalar>(path: &Path) -> Result<Vec<RegionAggregate<T>>, GeoError> {
    let v: Value = serde_json::from_reader(File::open(path)?).map_err(|e| GeoError::Format(e.to_string()))?;
    let bad = |m: &str| GeoError::Format(format!("{}: {m}", path.display()));
    let features = v.get("features").and_then(Value::as_array).ok_or_else(|| bad("missing features"))?;
    features
        .iter()
        .map(|f| {
            let p = f.get("properties").ok_or_else(|| bad("feature without properties"))?;
            let c = f.pointer("/geometry/coordinates").and_then(Value::as_array).ok_or_else(|| bad("feature without coordinates"))?;
            let real = |v: Option<&Value>, what: &str| {
                v.and_then(Value::as_f64).map(T::from_f64_lossy).ok_or_else(|| bad(&format!("bad {what}")))
            };
            let count = |k: &str| p.get(k).and_then(Value::as_u64).map(|n| n as usize).ok_or_else(|| bad(&format!("bad {k}")));
            Ok(RegionAggregate {
                region_key: p.get("region").and_then(Value::as_str).ok_or_else(|| bad("bad region"))?.to_string(),
                lon: real(c.first(), "longitude")?,
                lat: real(c.get(1), "latitude")?,
                n: count("n")?,
                n_pos: count("n_pos")?,
                n_neg: count("n_neg")?,
                n_amb: count("n_amb")?,
                pos_pct: real(p.get("pos_pct"), "pos_pct")?,
                neg_pct: real(p.get("neg_pct"), "neg_pct")?,
            })
        })
        .collect()
}

pub fn write_region_csv<T: Scalar>(path: &Path, aggregates: &[RegionAggregate<T>]) -> Result<(), GeoError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["region_key", "lat", "lon", "n", "n_pos", "n_neg", "n_amb", "pos_pct", "neg_pct"])?;
    for a in aggregates {
        w.write_record([
            a.region_key.clone(),
            a.lat.to_string(),
            a.lon.to_string(),
            a.n.to_string(),
            a.n_pos.to_string(),
            a.n_neg.to_string(),
            a.n_amb.to_string(),
            a.pos_pct.to_string(),
            a.neg_pct.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
