//! Dataset schema, loading, validation, splitting, statistics and
//! training-set export.
//!
//! # On-disk format
//!
//! A dataset is two line-delimited JSON files. Each starts with a schema
//! header line.
//!
//! Instances file (`dataset.jsonl`):
//!
//! ```text
//! {"schema":"citesum/instances","version":1,"segmenter":"citesum-rules-v1","articles":"dataset.articles.jsonl"}
//! {"pmid":"100001","aspect":"a","summary":"The study aims ...","citations":[2]}
//! {"pmid":"100001","aspect":"d","summary":null,"citations":null}
//! ```
//!
//! Articles file (path relative to the instances file):
//!
//! ```text
//! {"schema":"citesum/articles","version":1}
//! {"pmid":"100001","raw_text":"..."}
//! ```
//!
//! A negative instance stores `null` for both fields. The strings
//! `"Unknown"`/`"Null"` only appear at the prompt boundary.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aspect::AspectCode;
use crate::decimal;
use crate::segmenter::{self, SegmentError, SEGMENTER_VERSION};

pub const INSTANCES_SCHEMA: &str = "citesum/instances";
pub const ARTICLES_SCHEMA: &str = "citesum/articles";
pub const TRACKER_TRAIN_SCHEMA: &str = "citesum/tracker-train";
pub const SUMMARIZER_TRAIN_SCHEMA: &str = "citesum/summarizer-train";
pub const JUDGMENTS_SCHEMA: &str = "citesum/judgments";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: {message}")]
    Referential {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: schema error: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("article {pmid}: {source}")]
    Segment {
        pmid: String,
        #[source]
        source: SegmentError,
    },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("cannot split an empty instance list")]
    Empty,
}

/// A source abstract with its frozen sentence segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub pmid: String,
    pub raw_text: String,
    pub sentences: Vec<String>,
    pub token_count: usize,
}

impl Article {
    pub fn new(pmid: impl Into<String>, raw_text: impl Into<String>) -> Result<Self, CorpusError> {
        let pmid = pmid.into();
        let raw_text = raw_text.into();
        let sentences = segmenter::segment_texts(&raw_text).map_err(|source| CorpusError::Segment {
            pmid: pmid.clone(),
            source,
        })?;
        Ok(Article {
            token_count: count_tokens(&raw_text),
            pmid,
            raw_text,
            sentences,
        })
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }
}

/// Whitespace-delimited token count.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// An aspect-conditioned summary with the sentence indices that support it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceableSummary {
    /// No relevant information ("Unknown" summary, "Null" citations).
    Negative,
    Positive {
        summary: String,
        citations: BTreeSet<usize>,
    },
}

impl TraceableSummary {
    pub fn positive(summary: impl Into<String>, citations: impl IntoIterator<Item = usize>) -> Self {
        TraceableSummary::Positive {
            summary: summary.into(),
            citations: citations.into_iter().collect(),
        }
    }

    pub fn is_negative(&self) -> bool {
        matches!(self, TraceableSummary::Negative)
    }

    pub fn summary(&self) -> Option<&str> {
        match self {
            TraceableSummary::Negative => None,
            TraceableSummary::Positive { summary, .. } => Some(summary),
        }
    }

    pub fn citations(&self) -> Option<&BTreeSet<usize>> {
        match self {
            TraceableSummary::Negative => None,
            TraceableSummary::Positive { citations, .. } => Some(citations),
        }
    }

    /// First citation index `>= n_sentences`, if any.
    pub fn out_of_range(&self, n_sentences: usize) -> Option<usize> {
        self.citations()?.iter().copied().find(|&c| c >= n_sentences)
    }

    fn from_record(summary: Option<String>, citations: Option<Vec<usize>>) -> Result<Self, String> {
        match (summary, citations) {
            (None, None) => Ok(TraceableSummary::Negative),
            (None, Some(_)) => Err("citations present with absent summary".into()),
            (Some(_), None) => Err("summary present with absent citations".into()),
            (Some(summary), Some(list)) => {
                let citations: BTreeSet<usize> = list.iter().copied().collect();
                if citations.len() != list.len() {
                    return Err("duplicate citation index".into());
                }
                Ok(TraceableSummary::Positive { summary, citations })
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SummaryFields {
    summary: Option<String>,
    citations: Option<Vec<usize>>,
}

impl Serialize for TraceableSummary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SummaryFields {
            summary: self.summary().map(str::to_string),
            citations: self.citations().map(|c| c.iter().copied().collect()),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TraceableSummary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let fields = SummaryFields::deserialize(deserializer)?;
        TraceableSummary::from_record(fields.summary, fields.citations).map_err(serde::de::Error::custom)
    }
}

/// One reference `(pmid, aspect)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub pmid: String,
    pub aspect: AspectCode,
    #[serde(flatten)]
    pub reference: TraceableSummary,
}

impl DatasetInstance {
    pub fn id(&self) -> String {
        instance_id(&self.pmid, self.aspect)
    }
}

/// Stable identifier `"<pmid>:<aspect>"`.
pub fn instance_id(pmid: &str, aspect: AspectCode) -> String {
    format!("{pmid}:{aspect}")
}

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    pmid: String,
    aspect: String,
    summary: Option<String>,
    citations: Option<Vec<usize>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstancesHeader {
    schema: String,
    version: u32,
    segmenter: String,
    articles: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ArticlesHeader {
    schema: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
struct ArticleRecord {
    pmid: String,
    raw_text: String,
}

/// A validated set of articles and reference instances.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    articles: Vec<Article>,
    instances: Vec<DatasetInstance>,
    by_pmid: HashMap<String, usize>,
}

impl Dataset {
    /// Builds a dataset, checking every reference against its article.
    pub fn new(articles: Vec<Article>, instances: Vec<DatasetInstance>) -> Result<Self, CorpusError> {
        let mut by_pmid = HashMap::new();
        for (i, a) in articles.iter().enumerate() {
            if by_pmid.insert(a.pmid.clone(), i).is_some() {
                return Err(CorpusError::Invalid(format!("duplicate article {}", a.pmid)));
            }
        }
        let mut seen = HashSet::new();
        for inst in &instances {
            let article = by_pmid
                .get(&inst.pmid)
                .map(|&i| &articles[i])
                .ok_or_else(|| CorpusError::Invalid(format!("unknown article {}", inst.pmid)))?;
            if let Some(c) = inst.reference.out_of_range(article.sentence_count()) {
                return Err(CorpusError::Invalid(format!(
                    "{}: citation {c} out of range for {} sentences",
                    inst.id(),
                    article.sentence_count()
                )));
            }
            if !seen.insert((inst.pmid.clone(), inst.aspect)) {
                return Err(CorpusError::Invalid(format!("duplicate instance {}", inst.id())));
            }
        }
        Ok(Dataset {
            articles,
            instances,
            by_pmid,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let mut lines = read_lines(path)?.into_iter();
        let header: InstancesHeader = match lines.next() {
            Some((n, l)) => parse_line(path, n, &l)?,
            None => {
                return Err(CorpusError::Schema {
                    path: path.into(),
                    message: "missing header line".into(),
                })
            }
        };
        check_schema(path, &header.schema, header.version, INSTANCES_SCHEMA)?;
        if header.segmenter != SEGMENTER_VERSION {
            return Err(CorpusError::Schema {
                path: path.into(),
                message: format!(
                    "dataset was segmented with `{}`, this build uses `{SEGMENTER_VERSION}`",
                    header.segmenter
                ),
            });
        }
        let articles_path = path.parent().unwrap_or(Path::new(".")).join(&header.articles);
        let articles = load_articles(&articles_path)?;
        let by_pmid: HashMap<&str, &Article> = articles.iter().map(|a| (a.pmid.as_str(), a)).collect();

        let mut instances = Vec::new();
        let mut seen = HashSet::new();
        for (n, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let rec: InstanceRecord = parse_line(path, n, &line)?;
            let referr = |message: String| CorpusError::Referential {
                path: path.into(),
                line: n,
                message,
            };
            let aspect: AspectCode = rec.aspect.parse().map_err(|e| referr(format!("{e}")))?;
            let reference = TraceableSummary::from_record(rec.summary, rec.citations).map_err(referr)?;
            let article = by_pmid
                .get(rec.pmid.as_str())
                .ok_or_else(|| referr(format!("unknown pmid {}", rec.pmid)))?;
            if let Some(c) = reference.out_of_range(article.sentence_count()) {
                return Err(referr(format!(
                    "citation index {c} out of range for article {} with {} sentences",
                    rec.pmid,
                    article.sentence_count()
                )));
            }
            if !seen.insert((rec.pmid.clone(), aspect)) {
                return Err(referr(format!("duplicate instance {}", instance_id(&rec.pmid, aspect))));
            }
            instances.push(DatasetInstance {
                pmid: rec.pmid,
                aspect,
                reference,
            });
        }
        Dataset::new(articles, instances)
    }

    /// Writes the canonical form to `path` and the articles file next to it.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let articles_path = articles_path_for(path);
        let name = articles_path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("articles.jsonl")
            .to_string();
        write_file(&articles_path, &self.articles_jsonl())?;
        write_file(path, &self.instances_jsonl(&name))
    }

    /// Canonical instances file contents, with `articles_file` in the header.
    pub fn instances_jsonl(&self, articles_file: &str) -> String {
        instances_jsonl(&self.instances, articles_file)
    }

    pub fn articles_jsonl(&self) -> String {
        let mut out = json_line(&ArticlesHeader {
            schema: ARTICLES_SCHEMA.into(),
            version: SCHEMA_VERSION,
        });
        for a in &self.articles {
            out.push_str(&json_line(&ArticleRecord {
                pmid: a.pmid.clone(),
                raw_text: a.raw_text.clone(),
            }));
        }
        out
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn instances(&self) -> &[DatasetInstance] {
        &self.instances
    }

    pub fn article(&self, pmid: &str) -> Option<&Article> {
        self.by_pmid.get(pmid).map(|&i| &self.articles[i])
    }

    pub fn instance(&self, pmid: &str, aspect: AspectCode) -> Option<&DatasetInstance> {
        self.instances.iter().find(|i| i.pmid == pmid && i.aspect == aspect)
    }

    pub fn into_parts(self) -> (Vec<Article>, Vec<DatasetInstance>) {
        (self.articles, self.instances)
    }

    /// Replaces the instance list, keeping the same articles.
    pub fn with_instances(&self, instances: Vec<DatasetInstance>) -> Result<Self, CorpusError> {
        Dataset::new(self.articles.clone(), instances)
    }

    /// Splits by pmid into train/test datasets, each with its own article subset.
    pub fn split(&self, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), CorpusError> {
        let (train, test) = split_dataset(&self.instances, ratio, seed)?;
        let subset = |instances: Vec<DatasetInstance>| {
            let pmids: HashSet<&str> = instances.iter().map(|i| i.pmid.as_str()).collect();
            let articles = self
                .articles
                .iter()
                .filter(|a| pmids.contains(a.pmid.as_str()))
                .cloned()
                .collect();
            Dataset::new(articles, instances)
        };
        Ok((subset(train)?, subset(test)?))
    }

    /// SHA-256 over the canonical serialization, used in run manifests.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.articles_jsonl());
        h.update(self.instances_jsonl(""));
        hex::encode(h.finalize())
    }
}

/// Loads a dataset file, returning its articles and instances.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Vec<Article>, Vec<DatasetInstance>), CorpusError> {
    Ok(Dataset::load(path)?.into_parts())
}

/// `data/dev.jsonl` -> `data/dev.articles.jsonl`.
pub fn articles_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    path.with_file_name(format!("{stem}.articles.jsonl"))
}

pub fn instances_jsonl(instances: &[DatasetInstance], articles_file: &str) -> String {
    let mut out = json_line(&InstancesHeader {
        schema: INSTANCES_SCHEMA.into(),
        version: SCHEMA_VERSION,
        segmenter: SEGMENTER_VERSION.into(),
        articles: articles_file.into(),
    });
    for inst in instances {
        out.push_str(&json_line(&InstanceRecord {
            pmid: inst.pmid.clone(),
            aspect: inst.aspect.to_string(),
            summary: inst.reference.summary().map(str::to_string),
            citations: inst.reference.citations().map(|c| c.iter().copied().collect()),
        }));
    }
    out
}

fn load_articles(path: &Path) -> Result<Vec<Article>, CorpusError> {
    let mut lines = read_lines(path)?.into_iter();
    let header: ArticlesHeader = match lines.next() {
        Some((n, l)) => parse_line(path, n, &l)?,
        None => {
            return Err(CorpusError::Schema {
                path: path.into(),
                message: "missing header line".into(),
            })
        }
    };
    check_schema(path, &header.schema, header.version, ARTICLES_SCHEMA)?;
    let mut articles: Vec<Article> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleRecord = parse_line(path, n, &line)?;
        if let Some(&i) = index.get(&rec.pmid) {
            if articles[i].raw_text != rec.raw_text {
                return Err(CorpusError::Referential {
                    path: path.into(),
                    line: n,
                    message: format!("pmid {} repeated with different text", rec.pmid),
                });
            }
            continue;
        }
        let article = Article::new(rec.pmid, rec.raw_text).map_err(|e| CorpusError::Parse {
            path: path.into(),
            line: n,
            message: e.to_string(),
        })?;
        index.insert(article.pmid.clone(), articles.len());
        articles.push(article);
    }
    Ok(articles)
}

fn check_schema(path: &Path, schema: &str, version: u32, expected: &str) -> Result<(), CorpusError> {
    if schema != expected || version != SCHEMA_VERSION {
        return Err(CorpusError::Schema {
            path: path.into(),
            message: format!("expected {expected} v{SCHEMA_VERSION}, found {schema} v{version}"),
        });
    }
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.into(),
        source,
    })?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .map(|(i, l)| {
            l.map(|l| (i + 1, l)).map_err(|source| CorpusError::Io {
                path: path.into(),
                source,
            })
        })
        .collect()
}

fn parse_line<T: serde::de::DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T, CorpusError> {
    serde_json::from_str(text).map_err(|e| CorpusError::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    })
}

pub(crate) fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("serializable record");
    s.push('\n');
    s
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CorpusError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.into(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CorpusError::Io {
        path: path.into(),
        source,
    })
}

/// Splits instances into train/test by pmid.
///
/// Distinct pmids (first-appearance order) are shuffled with a seeded
/// ChaCha8 generator and the first `round(ratio * n)` go to train. Instance
/// order within each side follows the input.
pub fn split_dataset(
    instances: &[DatasetInstance],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<DatasetInstance>, Vec<DatasetInstance>), CorpusError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CorpusError::InvalidRatio(ratio));
    }
    if instances.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut seen = HashSet::new();
    let mut pmids: Vec<&str> = instances
        .iter()
        .map(|i| i.pmid.as_str())
        .filter(|p| seen.insert(*p))
        .collect();
    pmids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * pmids.len() as f64).round() as usize).min(pmids.len());
    let train_pmids: HashSet<&str> = pmids[..n_train].iter().copied().collect();
    let (train, test) = instances
        .iter()
        .cloned()
        .partition(|i| train_pmids.contains(i.pmid.as_str()));
    Ok((train, test))
}

/// Count/min/max/total over a sample; the mean is `total / count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountStat {
    pub count: u64,
    pub total: u64,
    pub min: u64,
    pub max: u64,
}

impl CountStat {
    fn add(&mut self, v: u64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.total += v;
    }

    /// Exact mean rendered with two decimals.
    pub fn mean(&self) -> String {
        if self.count == 0 {
            return "0.00".into();
        }
        decimal::ratio_u128(self.total.into(), self.count.into(), 2)
    }
}

impl Serialize for CountStat {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("CountStat", 5)?;
        s.serialize_field("count", &self.count)?;
        s.serialize_field("total", &self.total)?;
        s.serialize_field("min", &self.min)?;
        s.serialize_field("max", &self.max)?;
        s.serialize_field("mean", &self.mean())?;
        s.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AspectStats {
    pub aspect: AspectCode,
    pub positive: u64,
    pub negative: u64,
    pub summary_tokens: CountStat,
    pub citations: CountStat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub article_count: u64,
    pub article_tokens: CountStat,
    pub article_sentences: CountStat,
    pub instance_count: u64,
    pub positive_count: u64,
    pub negative_count: u64,
    pub per_aspect: Vec<AspectStats>,
    /// Positive summaries only.
    pub summary_tokens: CountStat,
    /// Citations per positive summary.
    pub citations_per_summary: CountStat,
    /// `aspect_coverage[k]` = number of articles with exactly `k` positive aspects.
    pub aspect_coverage: [u64; 8],
}

pub fn compute_stats(articles: &[Article], instances: &[DatasetInstance]) -> CorpusStats {
    let mut article_tokens = CountStat::default();
    let mut article_sentences = CountStat::default();
    for a in articles {
        article_tokens.add(a.token_count as u64);
        article_sentences.add(a.sentence_count() as u64);
    }
    let mut per_aspect: Vec<AspectStats> = AspectCode::ALL
        .iter()
        .map(|&aspect| AspectStats {
            aspect,
            positive: 0,
            negative: 0,
            summary_tokens: CountStat::default(),
            citations: CountStat::default(),
        })
        .collect();
    let mut summary_tokens = CountStat::default();
    let mut citations_per_summary = CountStat::default();
    let mut covered: HashMap<&str, BTreeSet<AspectCode>> = HashMap::new();
    let (mut positive_count, mut negative_count) = (0, 0);
    for inst in instances {
        let row = &mut per_aspect[inst.aspect.ordinal()];
        match &inst.reference {
            TraceableSummary::Negative => {
                negative_count += 1;
                row.negative += 1;
            }
            TraceableSummary::Positive { summary, citations } => {
                positive_count += 1;
                row.positive += 1;
                let tokens = count_tokens(summary) as u64;
                summary_tokens.add(tokens);
                row.summary_tokens.add(tokens);
                citations_per_summary.add(citations.len() as u64);
                row.citations.add(citations.len() as u64);
                covered.entry(&inst.pmid).or_default().insert(inst.aspect);
            }
        }
    }
    let mut aspect_coverage = [0u64; 8];
    for a in articles {
        let k = covered.get(a.pmid.as_str()).map_or(0, |s| s.len());
        aspect_coverage[k] += 1;
    }
    CorpusStats {
        article_count: articles.len() as u64,
        article_tokens,
        article_sentences,
        instance_count: instances.len() as u64,
        positive_count,
        negative_count,
        per_aspect,
        summary_tokens,
        citations_per_summary,
        aspect_coverage,
    }
}

impl CorpusStats {
    /// Plain-text rendering for terminals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let line = |label: &str, s: &CountStat| {
            format!("{label:<28} mean {:>8}  min {:>5}  max {:>5}\n", s.mean(), s.min, s.max)
        };
        out.push_str(&format!("articles                     {}\n", self.article_count));
        out.push_str(&line("tokens per article", &self.article_tokens));
        out.push_str(&line("sentences per article", &self.article_sentences));
        out.push_str(&format!(
            "instances                    {} ({} positive, {} negative)\n",
            self.instance_count, self.positive_count, self.negative_count
        ));
        out.push_str(&line("summary tokens (positive)", &self.summary_tokens));
        out.push_str(&line("citations per summary", &self.citations_per_summary));
        out.push_str("\naspect  pos  neg  sum-tok(avg/min/max)  cites(avg/min/max)\n");
        for row in &self.per_aspect {
            out.push_str(&format!(
                "{:<6} {:>4} {:>4}  {:>7}/{:>3}/{:>3}     {:>5}/{:>2}/{:>2}\n",
                row.aspect.code().to_ascii_uppercase(),
                row.positive,
                row.negative,
                row.summary_tokens.mean(),
                row.summary_tokens.min,
                row.summary_tokens.max,
                row.citations.mean(),
                row.citations.min,
                row.citations.max,
            ));
        }
        out.push_str("\naspects covered  articles\n");
        for (k, n) in self.aspect_coverage.iter().enumerate() {
            out.push_str(&format!("{k:>15}  {n}\n"));
        }
        out
    }
}

/// One `((sentence, aspect), label)` example for the relevance tracker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerExample {
    pub input: TrackerInput,
    pub output: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackerInput {
    pub pmid: String,
    pub sentence_index: usize,
    pub sentence: String,
    pub aspect: AspectCode,
}

/// One `((cited sentences [, context], aspect), summary)` example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizerExample {
    pub input: SummarizerInput,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizerInput {
    pub pmid: String,
    pub aspect: AspectCode,
    pub citations: Vec<usize>,
    pub sources: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub context: Option<String>,
}

/// Every sentence of every article crossed with all seven aspects.
///
/// Label is 1 iff the sentence index is cited by that aspect's reference.
/// Aspects without an instance, and negative instances, yield label 0.
pub fn build_tracker_training_set(articles: &[Article], instances: &[DatasetInstance]) -> Vec<TrackerExample> {
    let cited: HashMap<(&str, AspectCode), &BTreeSet<usize>> = instances
        .iter()
        .filter_map(|i| i.reference.citations().map(|c| ((i.pmid.as_str(), i.aspect), c)))
        .collect();
    let mut out = Vec::with_capacity(articles.iter().map(|a| a.sentence_count() * 7).sum());
    for article in articles {
        for (idx, sentence) in article.sentences.iter().enumerate() {
            for aspect in AspectCode::ALL {
                let label = cited
                    .get(&(article.pmid.as_str(), aspect))
                    .is_some_and(|c| c.contains(&idx));
                out.push(TrackerExample {
                    input: TrackerInput {
                        pmid: article.pmid.clone(),
                        sentence_index: idx,
                        sentence: sentence.clone(),
                        aspect,
                    },
                    output: label as u8,
                });
            }
        }
    }
    out
}

/// One record per positive instance; sources are the cited sentences in index order.
pub fn build_summarizer_training_set(
    articles: &[Article],
    instances: &[DatasetInstance],
    include_full_context: bool,
) -> Vec<SummarizerExample> {
    let by_pmid: HashMap<&str, &Article> = articles.iter().map(|a| (a.pmid.as_str(), a)).collect();
    instances
        .iter()
        .filter_map(|inst| {
            let TraceableSummary::Positive { summary, citations } = &inst.reference else {
                return None;
            };
            let article = by_pmid.get(inst.pmid.as_str())?;
            Some(SummarizerExample {
                input: SummarizerInput {
                    pmid: inst.pmid.clone(),
                    aspect: inst.aspect,
                    citations: citations.iter().copied().collect(),
                    sources: citations
                        .iter()
                        .filter_map(|&c| article.sentences.get(c).cloned())
                        .collect(),
                    context: include_full_context.then(|| article.raw_text.clone()),
                },
                output: summary.clone(),
            })
        })
        .collect()
}

#[derive(Serialize)]
struct ExportHeader<'a> {
    schema: &'a str,
    version: u32,
    segmenter: &'a str,
    count: usize,
}

#[derive(Deserialize)]
struct ExportHeaderOwned {
    schema: String,
    version: u32,
    count: usize,
}

/// Writes a training export with its schema header line.
pub fn write_export<T: Serialize>(path: impl AsRef<Path>, schema: &str, records: &[T]) -> Result<(), CorpusError> {
    let mut out = json_line(&ExportHeader {
        schema,
        version: SCHEMA_VERSION,
        segmenter: SEGMENTER_VERSION,
        count: records.len(),
    });
    for r in records {
        out.push_str(&json_line(r));
    }
    write_file(path.as_ref(), &out)
}

/// Reads a file written by [`write_export`], checking schema and record count.
pub fn load_export<T: serde::de::DeserializeOwned>(
    path: impl AsRef<Path>,
    schema: &str,
) -> Result<Vec<T>, CorpusError> {
    let path = path.as_ref();
    let mut lines = read_lines(path)?.into_iter().filter(|(_, l)| !l.trim().is_empty());
    let header: ExportHeaderOwned = match lines.next() {
        Some((n, l)) => parse_line(path, n, &l)?,
        None => {
            return Err(CorpusError::Schema {
                path: path.into(),
                message: "missing header line".into(),
            })
        }
    };
    check_schema(path, &header.schema, header.version, schema)?;
    let records = lines
        .map(|(n, l)| parse_line(path, n, &l))
        .collect::<Result<Vec<T>, _>>()?;
    if records.len() != header.count {
        return Err(CorpusError::Schema {
            path: path.into(),
            message: format!("header declares {} records, found {}", header.count, records.len()),
        });
    }
    Ok(records)
}
