//! Few-shot exemplar selection: random pick, low-variance selection, and
//! embedding-nearest re-ranking of the low-variance list.

mod embed;

use std::cmp::Ordering;

use num_rational::Ratio;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::sentiment::{majority_label, Sentiment};

pub use embed::{cosine, fallback_embed, CachedEmbedder, EmbedError, Embedder, HttpEmbedder, TrigramEmbedder};

pub const DEFAULT_DYN_POOL: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShotError {
    #[error("k must be between 1 and 3, got {0}")]
    BadK(usize),
    #[error("class {class} has {available} eligible examples, need {needed}")]
    NotEnough { class: Sentiment, available: usize, needed: usize },
    #[error("proverb {0:?} has fewer than two ratings")]
    TooFewRatings(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// One labelled exemplar as it appears in a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub id: String,
    pub text: String,
    pub label: Sentiment,
}

/// k exemplars for each class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotSet {
    pub k: usize,
    pub positive: Vec<Shot>,
    pub negative: Vec<Shot>,
    pub ambiguous: Vec<Shot>,
}

impl ShotSet {
    fn from_classes(k: usize, mut by_class: [Vec<Shot>; 3]) -> Self {
        let ambiguous = std::mem::take(&mut by_class[2]);
        let negative = std::mem::take(&mut by_class[1]);
        let positive = std::mem::take(&mut by_class[0]);
        ShotSet { k, positive, negative, ambiguous }
    }

    pub fn class(&self, s: Sentiment) -> &[Shot] {
        match s {
            Sentiment::Positive => &self.positive,
            Sentiment::Negative => &self.negative,
            Sentiment::Ambiguous => &self.ambiguous,
        }
    }

    /// Positive, Negative, Ambiguous, Positive, ...
    pub fn interleaved(&self) -> Vec<&Shot> {
        (0..self.k)
            .flat_map(|i| Sentiment::ALL.iter().filter_map(move |&s| self.class(s).get(i)))
            .collect()
    }

    /// All positives, then all negatives, then all ambiguous.
    pub fn grouped(&self) -> Vec<&Shot> {
        Sentiment::ALL.iter().flat_map(|&s| self.class(s).iter()).collect()
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len() + self.ambiguous.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, id: &str) -> bool {
        self.grouped().iter().any(|s| s.id == id)
    }
}

fn check_k(k: usize) -> Result<(), ShotError> {
    if (1..=3).contains(&k) {
        Ok(())
    } else {
        Err(ShotError::BadK(k))
    }
}

/// Uniform sampling without replacement, k per class, from a seeded ChaCha8
/// stream consumed in class order Positive, Negative, Ambiguous.
pub fn random_pick(pool: &[Shot], k: usize, seed: u64, exclude: Option<&str>) -> Result<ShotSet, ShotError> {
    check_k(k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<Shot>; 3] = Default::default();
    for class in Sentiment::ALL {
        let members: Vec<&Shot> = pool
            .iter()
            .filter(|s| s.label == class && Some(s.id.as_str()) != exclude)
            .collect();
        if members.len() < k {
            return Err(ShotError::NotEnough { class, available: members.len(), needed: k });
        }
        by_class[class.index()] = index::sample(&mut rng, members.len(), k)
            .into_iter()
            .map(|i| members[i].clone())
            .collect();
    }
    Ok(ShotSet::from_classes(k, by_class))
}

/// A proverb with its individual annotator ratings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotCandidate {
    pub id: String,
    pub text: String,
    pub ratings: Vec<Sentiment>,
}

impl ShotCandidate {
    /// Majority vote, ties resolving to Ambiguous.
    pub fn gold(&self) -> Sentiment {
        majority_label(&self.ratings).unwrap_or(Sentiment::Ambiguous)
    }

    /// Exact population variance of the ratings coded -1/0/+1.
    pub fn variance(&self) -> Ratio<i64> {
        rating_variance(&self.ratings)
    }

    pub fn variance_as<T: Scalar>(&self) -> T {
        let v = self.variance();
        T::from_i64(*v.numer()).expect("fits") / T::from_i64(*v.denom()).expect("fits")
    }

    fn to_shot(&self) -> Shot {
        Shot { id: self.id.clone(), text: self.text.clone(), label: self.gold() }
    }
}

/// (n * sum(x^2) - sum(x)^2) / n^2, kept as an exact fraction.
pub fn rating_variance(ratings: &[Sentiment]) -> Ratio<i64> {
    let n = ratings.len() as i64;
    if n == 0 {
        return Ratio::from_integer(0);
    }
    let (s, q) = ratings.iter().fold((0i64, 0i64), |(s, q), r| {
        let x: i64 = match r {
            Sentiment::Positive => 1,
            Sentiment::Negative => -1,
            Sentiment::Ambiguous => 0,
        };
        (s + x, q + x * x)
    });
    Ratio::new(n * q - s * s, n * n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedShot {
    pub shot: Shot,
    /// Exact variance as (numerator, denominator).
    pub variance: (i64, i64),
}

impl RankedShot {
    fn ratio(&self) -> Ratio<i64> {
        Ratio::new(self.variance.0, self.variance.1)
    }
}

/// Per-class candidates sorted by ascending rating variance, then id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvsRanking {
    pub positive: Vec<RankedShot>,
    pub negative: Vec<RankedShot>,
    pub ambiguous: Vec<RankedShot>,
}

impl LvsRanking {
    pub fn class(&self, s: Sentiment) -> &[RankedShot] {
        match s {
            Sentiment::Positive => &self.positive,
            Sentiment::Negative => &self.negative,
            Sentiment::Ambiguous => &self.ambiguous,
        }
    }
}

fn by_variance_then_id(a: &RankedShot, b: &RankedShot) -> Ordering {
    a.ratio().cmp(&b.ratio()).then_with(|| a.shot.id.cmp(&b.shot.id)).then_with(|| a.shot.text.cmp(&b.shot.text))
}

/// Ranks every candidate within its majority class.
pub fn lvs_ranking(pool: &[ShotCandidate], exclude: Option<&str>) -> Result<LvsRanking, ShotError> {
    let mut by_class: [Vec<RankedShot>; 3] = Default::default();
    for c in pool.iter().filter(|c| Some(c.id.as_str()) != exclude) {
        if c.ratings.len() < 2 {
            return Err(ShotError::TooFewRatings(c.id.clone()));
        }
        let v = c.variance();
        by_class[c.gold().index()].push(RankedShot { shot: c.to_shot(), variance: (*v.numer(), *v.denom()) });
    }
    for list in &mut by_class {
        list.sort_by(by_variance_then_id);
    }
    let [positive, negative, ambiguous] = by_class;
    Ok(LvsRanking { positive, negative, ambiguous })
}

/// The k lowest-variance members of each class. The objective is a sum of
/// per-item terms, so sorting attains the subset minimum exactly.
pub fn low_variance_selection(pool: &[ShotCandidate], k: usize, exclude: Option<&str>) -> Result<ShotSet, ShotError> {
    check_k(k)?;
    let ranking = lvs_ranking(pool, exclude)?;
    let mut by_class: [Vec<Shot>; 3] = Default::default();
    for class in Sentiment::ALL {
        let list = ranking.class(class);
        if list.len() < k {
            return Err(ShotError::NotEnough { class, available: list.len(), needed: k });
        }
        by_class[class.index()] = list[..k].iter().map(|r| r.shot.clone()).collect();
    }
    Ok(ShotSet::from_classes(k, by_class))
}

/// Where the dynamic strategy draws its candidates from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynPoolMode {
    /// The `pool_size` lowest-variance items of each class.
    #[default]
    PerClass,
    /// The `3 * pool_size` lowest-variance items across classes.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DynOptions {
    pub pool_size: usize,
    pub mode: DynPoolMode,
}

impl Default for DynOptions {
    fn default() -> Self {
        DynOptions { pool_size: DEFAULT_DYN_POOL, mode: DynPoolMode::PerClass }
    }
}

fn candidate_pool<'a>(ranking: &'a LvsRanking, exclude: Option<&str>, opts: DynOptions) -> [Vec<&'a RankedShot>; 3] {
    let eligible = |s: &&RankedShot| Some(s.shot.id.as_str()) != exclude;
    let mut out: [Vec<&RankedShot>; 3] = Default::default();
    match opts.mode {
        DynPoolMode::PerClass => {
            for class in Sentiment::ALL {
                out[class.index()] = ranking.class(class).iter().filter(eligible).take(opts.pool_size).collect();
            }
        }
        DynPoolMode::Pooled => {
            let mut all: Vec<&RankedShot> = Sentiment::ALL
                .iter()
                .flat_map(|&c| ranking.class(c).iter())
                .filter(eligible)
                .collect();
            all.sort_by(|a, b| by_variance_then_id(a, b));
            for s in all.into_iter().take(3 * opts.pool_size) {
                out[s.shot.label.index()].push(s);
            }
        }
    }
    out
}

/// Re-ranks the low-variance candidates by cosine similarity to the query
/// (descending; ties by variance then id) and keeps the top k per class.
/// Candidates whose embedding has zero norm are skipped.
pub fn dynamic_selection(
    query_text: &str,
    query_id: Option<&str>,
    ranking: &LvsRanking,
    embedder: &dyn Embedder,
    k: usize,
    opts: DynOptions,
) -> Result<ShotSet, ShotError> {
    check_k(k)?;
    let q = embedder.embed(query_text)?;
    let pools = candidate_pool(ranking, query_id, opts);
    let mut by_class: [Vec<Shot>; 3] = Default::default();
    for class in Sentiment::ALL {
        let mut scored: Vec<(f64, &RankedShot)> = Vec::new();
        for cand in &pools[class.index()] {
            let v = embedder.embed(&cand.shot.text)?;
            match cosine(&q, &v) {
                Some(sim) => scored.push((sim, cand)),
                None => log::warn!("skipping shot {}: zero-norm embedding", cand.shot.id),
            }
        }
        if scored.len() < k {
            return Err(ShotError::NotEnough { class, available: scored.len(), needed: k });
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| by_variance_then_id(a.1, b.1)));
        by_class[class.index()] = scored[..k].iter().map(|(_, r)| r.shot.clone()).collect();
    }
    Ok(ShotSet::from_classes(k, by_class))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShotStrategy {
    Rp,
    Lvs,
    Dyn,
}

impl ShotStrategy {
    pub fn tag(self) -> &'static str {
        match self {
            ShotStrategy::Rp => "rp",
            ShotStrategy::Lvs => "lvs",
            ShotStrategy::Dyn => "dyn",
        }
    }
}

impl std::str::FromStr for ShotStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rp" | "random" => Ok(ShotStrategy::Rp),
            "lvs" => Ok(ShotStrategy::Lvs),
            "dyn" | "dynamic" => Ok(ShotStrategy::Dyn),
            other => Err(format!("unknown shot strategy {other:?}")),
        }
    }
}

/// Supplies a shot set for each query proverb.
pub trait ShotProvider: Send + Sync {
    fn shots_for(&self, query_id: &str, query_text: &str) -> Result<ShotSet, ShotError>;
}

/// Strategy plus its pool; the query itself is always excluded.
pub struct ShotSelector {
    pub strategy: ShotStrategy,
    pub k: usize,
    pub seed: u64,
    pub pool: Vec<ShotCandidate>,
    pub dyn_options: DynOptions,
    pub embedder: Box<dyn Embedder>,
}

impl ShotProvider for ShotSelector {
    fn shots_for(&self, query_id: &str, query_text: &str) -> Result<ShotSet, ShotError> {
        let exclude = Some(query_id);
        match self.strategy {
            ShotStrategy::Rp => {
                let shots: Vec<Shot> = self.pool.iter().map(ShotCandidate::to_shot).collect();
                random_pick(&shots, self.k, self.seed, exclude)
            }
            ShotStrategy::Lvs => low_variance_selection(&self.pool, self.k, exclude),
            ShotStrategy::Dyn => {
                let ranking = lvs_ranking(&self.pool, exclude)?;
                dynamic_selection(query_text, exclude, &ranking, self.embedder.as_ref(), self.k, self.dyn_options)
            }
        }
    }
}
