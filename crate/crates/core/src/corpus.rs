//! Lexical simplification datasets: parsing, gold aggregation, statistics
//! and reproducible splits.
//!
//! Three tab-separated line formats are accepted:
//!
//! * `tsar_aggregated`: `sentence ⇥ complex_word ⇥ sub:count ⇥ …`
//! * `tsar_raw`: `sentence ⇥ complex_word ⇥ sub ⇥ sub ⇥ …` (one column per
//!   annotator suggestion, repetitions included)
//! * `rank_prefixed`: `sentence ⇥ complex_word ⇥ word_index ⇥ rank:sub ⇥ …`
//!   as distributed for LexMTurk, BenchLS and NNSeval.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::normalize_term;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Es,
    Pt,
}

impl Language {
    pub const ALL: [Language; 3] = [Language::En, Language::Es, Language::Pt];

    pub fn code(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Es => "es",
            Language::Pt => "pt",
        }
    }

    /// Task prefix that opens every model input for this language.
    pub fn prefix(self) -> &'static str {
        match self {
            Language::En => "simplify en:",
            Language::Es => "simplify es:",
            Language::Pt => "simplify pt:",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "es" => Ok(Language::Es),
            "pt" => Ok(Language::Pt),
            other => Err(CorpusError::UnknownLanguage(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceFormat {
    TsarRaw,
    TsarAggregated,
    RankPrefixed,
}

impl FromStr for InstanceFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsar_raw" => Ok(InstanceFormat::TsarRaw),
            "tsar_aggregated" => Ok(InstanceFormat::TsarAggregated),
            "rank_prefixed" => Ok(InstanceFormat::RankPrefixed),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// Why a single dataset line was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LineError {
    #[error("expected at least {expected} tab-separated columns, found {found}")]
    WrongColumnCount { expected: usize, found: usize },
    #[error("complex word {0:?} does not occur in the sentence")]
    ComplexWordNotInSentence(String),
    #[error("no gold substitutes")]
    EmptyGold,
    #[error("malformed `substitute:count` field {0:?}")]
    BadCount(String),
    #[error("malformed `rank:substitute` field {0:?}")]
    BadRank(String),
    #[error("malformed word index {0:?}")]
    BadWordIndex(String),
    #[error("empty sentence or complex word")]
    EmptyField,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {reason}")]
    Line { line: usize, reason: LineError },
    #[error("empty gold annotation list")]
    EmptyGold,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("unknown dataset format {0:?}")]
    UnknownFormat(String),
    #[error("line {line}: invalid instance record: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One substitute suggested by annotators, with its suggestion count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub substitute: String,
    pub count: u32,
}

impl GoldEntry {
    pub fn new(substitute: impl Into<String>, count: u32) -> Self {
        GoldEntry {
            substitute: substitute.into(),
            count,
        }
    }
}

/// Inclusive 0-based whitespace-token range of the complex word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

/// A sentence with an annotated complex word and ranked gold substitutes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub language: Language,
    pub sentence: String,
    pub complex_word: String,
    /// Count-descending; see [`aggregate_gold`] for the tie-break.
    pub gold: Vec<GoldEntry>,
    /// Position annotated in the source dataset, when it provides one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_span: Option<TokenSpan>,
}

impl Instance {
    /// Validates and normalizes whitespace; `gold` is re-aggregated.
    pub fn new(
        id: impl Into<String>,
        language: Language,
        sentence: &str,
        complex_word: &str,
        gold: Vec<GoldEntry>,
    ) -> Result<Self, LineError> {
        let sentence = collapse_whitespace(sentence);
        let complex_word = collapse_whitespace(complex_word);
        if sentence.is_empty() || complex_word.is_empty() {
            return Err(LineError::EmptyField);
        }
        if !sentence.contains(&complex_word) {
            return Err(LineError::ComplexWordNotInSentence(complex_word));
        }
        let gold =
            aggregate_weighted(gold.into_iter().map(|g| (g.substitute, g.count))).map_err(|_| LineError::EmptyGold)?;
        Ok(Instance {
            id: id.into(),
            language,
            sentence,
            complex_word,
            gold,
            target_span: None,
        })
    }

    /// The whitespace-token span of the complex word: the annotated one when
    /// present, otherwise the tokens covering [`Instance::complex_word_range`].
    pub fn complex_word_span(&self) -> TokenSpan {
        if let Some(span) = self.target_span {
            return span;
        }
        let range = self.complex_word_range();
        let before = &self.sentence[..range.start];
        let mut start = before.split_whitespace().count();
        if before.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
            // the word starts inside a token
            start -= 1;
        }
        let width = self.complex_word.split_whitespace().count().max(1);
        TokenSpan {
            start,
            end: start + width - 1,
        }
    }

    /// Renders the instance as a `tsar_aggregated` line.
    pub fn to_tsar_aggregated(&self) -> String {
        let mut cols = vec![self.sentence.clone(), self.complex_word.clone()];
        cols.extend(self.gold.iter().map(|g| format!("{}:{}", g.substitute, g.count)));
        cols.join("\t")
    }
}

/// Byte range of `word` inside `sentence`: the first occurrence bounded by
/// non-alphanumeric characters, or failing that the first occurrence.
pub fn locate_word(sentence: &str, word: &str) -> Option<std::ops::Range<usize>> {
    if word.is_empty() {
        return None;
    }
    let bounded = |start: usize| {
        let end = start + word.len();
        let before = sentence[..start].chars().next_back();
        let after = sentence[end..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    };
    let mut first = None;
    for (start, _) in sentence.match_indices(word) {
        if bounded(start) {
            return Some(start..start + word.len());
        }
        first.get_or_insert(start);
    }
    first.map(|start| start..start + word.len())
}

impl Instance {
    /// Byte range of the complex word in the sentence (see [`locate_word`]).
    pub fn complex_word_range(&self) -> std::ops::Range<usize> {
        locate_word(&self.sentence, &self.complex_word).expect("validated on construction")
    }
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Merges raw annotator suggestions into `(substitute, count)` pairs.
///
/// Suggestions are grouped under [`normalize_term`], keeping the first
/// surface form seen. Output is count-descending; equal counts keep the
/// order of first appearance (a total order, so the lexicographic fallback
/// never has to fire).
pub fn aggregate_gold<S: AsRef<str>>(raw: &[S]) -> Result<Vec<GoldEntry>, CorpusError> {
    aggregate_weighted(raw.iter().map(|s| (s.as_ref().to_string(), 1)))
}

fn aggregate_weighted<I>(pairs: I) -> Result<Vec<GoldEntry>, CorpusError>
where
    I: IntoIterator<Item = (String, u32)>,
{
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut merged: Vec<GoldEntry> = Vec::new();
    for (surface, count) in pairs {
        let surface = collapse_whitespace(&surface);
        if surface.is_empty() || count == 0 {
            continue;
        }
        let key = normalize_term(&surface);
        match index.get(&key) {
            Some(&i) => merged[i].count += count,
            None => {
                index.insert(key, merged.len());
                merged.push(GoldEntry::new(surface, count));
            }
        }
    }
    if merged.is_empty() {
        return Err(CorpusError::EmptyGold);
    }
    // stable sort keeps first-appearance order among equal counts
    merged.sort_by_key(|e| std::cmp::Reverse(e.count));
    Ok(merged)
}

/// Parses one dataset line. `line_no` is 1-based and becomes part of the
/// instance id (`<lang>-<line_no>`).
pub fn parse_instance(
    line: &str,
    format: InstanceFormat,
    language: Language,
    line_no: usize,
) -> Result<Instance, CorpusError> {
    parse_line(line, format, language, line_no).map_err(|reason| CorpusError::Line { line: line_no, reason })
}

fn parse_line(line: &str, format: InstanceFormat, language: Language, line_no: usize) -> Result<Instance, LineError> {
    let line = line.trim_end_matches(['\r', '\n']);
    let cols: Vec<&str> = line.split('\t').collect();
    let min_cols = match format {
        InstanceFormat::RankPrefixed => 4,
        _ => 3,
    };
    if cols.len() < min_cols {
        return Err(LineError::WrongColumnCount {
            expected: min_cols,
            found: cols.len(),
        });
    }
    let (sentence, complex_word) = (cols[0], cols[1]);
    let id = format!("{language}-{line_no}");
    let gold_cols = cols[min_cols - 1..].iter().map(|c| c.trim()).filter(|c| !c.is_empty());

    let mut span = None;
    let gold: Vec<GoldEntry> = match format {
        InstanceFormat::TsarRaw => gold_cols.map(|s| GoldEntry::new(s, 1)).collect(),
        InstanceFormat::TsarAggregated => gold_cols
            .map(|field| {
                let (sub, count) = field
                    .rsplit_once(':')
                    .ok_or_else(|| LineError::BadCount(field.to_string()))?;
                let count: u32 = count
                    .trim()
                    .parse()
                    .ok()
                    .filter(|c| *c >= 1)
                    .ok_or_else(|| LineError::BadCount(field.to_string()))?;
                if sub.trim().is_empty() {
                    return Err(LineError::BadCount(field.to_string()));
                }
                Ok(GoldEntry::new(sub, count))
            })
            .collect::<Result<_, _>>()?,
        InstanceFormat::RankPrefixed => {
            let index: usize = cols[2]
                .trim()
                .parse()
                .map_err(|_| LineError::BadWordIndex(cols[2].to_string()))?;
            let width = complex_word.split_whitespace().count().max(1);
            span = Some(TokenSpan {
                start: index,
                end: index + width - 1,
            });
            let ranked = gold_cols
                .map(|field| {
                    let (rank, sub) = field
                        .split_once(':')
                        .ok_or_else(|| LineError::BadRank(field.to_string()))?;
                    let rank: u32 = rank
                        .trim()
                        .parse()
                        .ok()
                        .filter(|r| *r >= 1)
                        .ok_or_else(|| LineError::BadRank(field.to_string()))?;
                    if sub.trim().is_empty() {
                        return Err(LineError::BadRank(field.to_string()));
                    }
                    Ok((rank, sub))
                })
                .collect::<Result<Vec<_>, _>>()?;
            // rank 1 is best: map ranks onto counts so that count order is rank order
            let worst = ranked.iter().map(|(r, _)| *r).max().unwrap_or(1);
            ranked
                .into_iter()
                .map(|(rank, sub)| GoldEntry::new(sub, worst - rank + 1))
                .collect()
        }
    };
    if gold.is_empty() {
        return Err(LineError::EmptyGold);
    }
    let mut instance = Instance::new(id, language, sentence, complex_word, gold)?;
    instance.target_span = span;
    Ok(instance)
}

/// Reads every non-blank line of a dataset; fails on the first bad line.
pub fn read_dataset<R: BufRead>(
    reader: R,
    format: InstanceFormat,
    language: Language,
) -> Result<Vec<Instance>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_instance(&line, format, language, i + 1)?);
    }
    Ok(out)
}

/// Reads line-delimited JSON instance records.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Instance>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: Instance = serde_json::from_str(&line).map_err(|source| CorpusError::Json { line: i + 1, source })?;
        let mut instance = Instance::new(raw.id, raw.language, &raw.sentence, &raw.complex_word, raw.gold)
            .map_err(|reason| CorpusError::Line { line: i + 1, reason })?;
        instance.target_span = raw.target_span;
        out.push(instance);
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut writer: W, instances: &[Instance]) -> std::io::Result<()> {
    for instance in instances {
        serde_json::to_writer(&mut writer, instance)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Whitespace-token length statistics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub instance_count: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub avg_tokens: f64,
}

pub fn dataset_stats(instances: &[Instance]) -> Result<DatasetStats, CorpusError> {
    if instances.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let lengths: Vec<usize> = instances
        .iter()
        .map(|i| i.sentence.split_whitespace().count())
        .collect();
    let total: usize = lengths.iter().sum();
    Ok(DatasetStats {
        instance_count: instances.len(),
        min_tokens: *lengths.iter().min().unwrap(),
        max_tokens: *lengths.iter().max().unwrap(),
        avg_tokens: total as f64 / instances.len() as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Self {
        SplitSpec {
            train_fraction: train,
            validation_fraction: validation,
            test_fraction: test,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fractions = [self.train_fraction, self.validation_fraction, self.test_fraction];
        if fractions.iter().any(|f| !f.is_finite() || !(0.0..=1.0).contains(f)) {
            return Err(CorpusError::InvalidSplit(format!(
                "fractions must lie in [0, 1], got {fractions:?}"
            )));
        }
        let sum: f64 = fractions.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidSplit(format!("fractions sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes: validation and test are floored,
    /// the remainder goes to train.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((n as f64 * f) + 1e-9).floor() as usize;
        let validation = floor(self.validation_fraction);
        let test = floor(self.test_fraction);
        (n - validation - test, validation, test)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<Instance>,
    pub validation: Vec<Instance>,
    pub test: Vec<Instance>,
}

/// Seeded partition; each part keeps the input order of its members.
pub fn split_dataset(instances: &[Instance], spec: &SplitSpec) -> Result<Split, CorpusError> {
    spec.validate()?;
    let (n_train, n_validation, _) = spec.sizes(instances.len());
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let take = |slice: &[usize]| {
        let mut idx = slice.to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| instances[i].clone()).collect::<Vec<_>>()
    };
    Ok(Split {
        train: take(&order[..n_train]),
        validation: take(&order[n_train..n_train + n_validation]),
        test: take(&order[n_train + n_validation..]),
    })
}
