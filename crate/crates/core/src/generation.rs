//! Candidate generation backends, masked-LM candidate extraction, candidate
//! post-filtering and Potential-based backend ranking.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_tokens::{substitute_into, TokenVector};
use crate::corpus::Instance;
use crate::lexicon::FrequencyLexicon;
use crate::metrics::{normalize_term, potential_at_k, GoldView, Ratio};
use crate::serializer::{build_eval_source, SerializationOptions};

pub const DEFAULT_BEAM_WIDTH: usize = 15;
pub const DEFAULT_LIMIT: usize = 10;
/// Fill-mask results requested per wanted candidate, leaving room for the
/// fragments and punctuation dropped before truncation.
pub const FILL_MASK_OVERFETCH: usize = 3;
pub const MASK_TOKEN: &str = "[MASK]";

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend {backend} unavailable: {message}")]
    Unavailable { backend: String, message: String },
    #[error("backend {backend} failed: {message}")]
    Failed { backend: String, message: String },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GenerationError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("backend {backend} returned no candidates for instance {instance_id}")]
    NoCandidates { backend: String, instance_id: String },
    #[error("cannot mask {complex_word:?} in the sentence")]
    MaskConstruction { complex_word: String },
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    MockTable,
    LexiconBaseline,
    RemoteSeq2seq,
    RemoteFillMask,
}

/// Everything a backend may look at when producing candidates.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub instance: &'a Instance,
    pub source: &'a str,
    pub beam_width: usize,
}

/// A deterministic producer of ranked substitute candidates.
pub trait CandidateGenerator: Send + Sync {
    fn id(&self) -> String;
    fn kind(&self) -> BackendKind;
    /// Up to `beam_width` candidates, best first.
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, BackendError>;
}

/// Masked-LM predictions for a text holding one `[MASK]`.
pub trait FillMaskClient: Send + Sync {
    fn id(&self) -> String;
    fn fill_mask(&self, text: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError>;
}

/// Post-filtered candidates for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    pub instance_id: String,
    pub candidates: Vec<String>,
    pub backend: String,
    /// Candidates returned by the backend before filtering.
    pub raw_count: usize,
}

/// Stable-order dedup under [`normalize_term`], dropping blanks and the
/// complex word itself, truncated to `limit`.
pub fn postfilter<S: AsRef<str>>(raw: &[S], complex_word: &str, limit: usize) -> Vec<String> {
    let target = normalize_term(complex_word);
    let mut seen = HashSet::new();
    raw.iter()
        .map(|c| c.as_ref().trim())
        .filter(|c| {
            let key = normalize_term(c);
            !key.is_empty() && key != target && seen.insert(key)
        })
        .take(limit)
        .map(str::to_string)
        .collect()
}

/// Runs one backend on one instance and post-filters the result.
pub fn generate_candidates(
    instance: &Instance,
    backend: &dyn CandidateGenerator,
    source: &str,
    beam_width: usize,
    limit: usize,
) -> Result<CandidateList, GenerationError> {
    let mut raw = backend.generate(&GenerationRequest {
        instance,
        source,
        beam_width,
    })?;
    raw.truncate(beam_width);
    if raw.is_empty() {
        return Err(GenerationError::NoCandidates {
            backend: backend.id(),
            instance_id: instance.id.clone(),
        });
    }
    Ok(CandidateList {
        instance_id: instance.id.clone(),
        candidates: postfilter(&raw, &instance.complex_word, limit),
        backend: backend.id(),
        raw_count: raw.len(),
    })
}

/// The paired query sent to a fill-mask model: the sentence, the separator,
/// then the sentence with the complex word masked.
pub fn mlm_query(sentence: &str, complex_word: &str) -> Result<String, GenerationError> {
    let masked =
        substitute_into(sentence, complex_word, MASK_TOKEN).ok_or_else(|| GenerationError::MaskConstruction {
            complex_word: complex_word.to_string(),
        })?;
    Ok(format!("{sentence} </s> {masked}"))
}

/// Word-piece continuations, special tokens and punctuation-only outputs are
/// not usable substitutes.
fn is_usable_prediction(candidate: &str) -> bool {
    let is_special = (candidate.starts_with('<') && candidate.ends_with('>'))
        || (candidate.starts_with('[') && candidate.ends_with(']'));
    !candidate.is_empty()
        && !candidate.starts_with("##")
        && !is_special
        && !candidate.chars().any(char::is_whitespace)
        && candidate.chars().any(char::is_alphanumeric)
}

/// Top-`k` masked-LM candidates for the complex word, by descending score.
pub fn extract_mlm_candidates(
    sentence: &str,
    complex_word: &str,
    k: usize,
    client: &dyn FillMaskClient,
) -> Result<Vec<String>, GenerationError> {
    if k == 0 {
        return Err(GenerationError::ZeroK);
    }
    let query = mlm_query(sentence, complex_word)?;
    let mut scored = client.fill_mask(&query, k.saturating_mul(FILL_MASK_OVERFETCH))?;
    scored.retain(|(_, score)| score.is_finite());
    // stable: equal scores keep the client's order
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut seen = HashSet::new();
    Ok(scored
        .into_iter()
        .map(|(c, _)| c.trim().to_string())
        .filter(|c| is_usable_prediction(c) && seen.insert(c.clone()))
        .take(k)
        .collect())
}

/// Table-driven backend. Lookups try the exact source string, then the
/// instance id, then the `(sentence, complex word)` pair.
#[derive(Debug, Clone, Default)]
pub struct MockTableGenerator {
    by_source: HashMap<String, Vec<String>>,
    by_id: HashMap<String, Vec<String>>,
    by_pair: HashMap<(String, String), Vec<String>>,
}

impl MockTableGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Answers every instance with its gold substitutes in gold order.
    pub fn from_gold(instances: &[Instance]) -> Self {
        let mut table = Self::new();
        for i in instances {
            table.insert_id(&i.id, i.gold.iter().map(|g| g.substitute.clone()).collect());
        }
        table
    }

    pub fn from_predictions(rows: &[PredictionRow]) -> Self {
        let mut table = Self::new();
        for r in rows {
            table.insert_pair(&r.sentence, &r.complex_word, r.candidates.clone());
        }
        table
    }

    pub fn insert_source(&mut self, source: &str, candidates: Vec<String>) {
        self.by_source.insert(source.to_string(), candidates);
    }

    pub fn insert_id(&mut self, id: &str, candidates: Vec<String>) {
        self.by_id.insert(id.to_string(), candidates);
    }

    pub fn insert_pair(&mut self, sentence: &str, complex_word: &str, candidates: Vec<String>) {
        self.by_pair.insert(pair_key(sentence, complex_word), candidates);
    }
}

fn pair_key(sentence: &str, complex_word: &str) -> (String, String) {
    let collapse = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    (collapse(sentence), collapse(complex_word))
}

impl CandidateGenerator for MockTableGenerator {
    fn id(&self) -> String {
        "mock_table".into()
    }

    fn kind(&self) -> BackendKind {
        BackendKind::MockTable
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, BackendError> {
        let i = request.instance;
        self.by_source
            .get(request.source)
            .or_else(|| self.by_id.get(&i.id))
            .or_else(|| self.by_pair.get(&pair_key(&i.sentence, &i.complex_word)))
            .map(|c| c.iter().take(request.beam_width).cloned().collect())
            .ok_or_else(|| BackendError::Failed {
                backend: self.id(),
                message: format!("no table entry for instance {}", i.id),
            })
    }
}

/// Offline baseline: synonyms of the complex word ordered by frequency rank
/// (most frequent first).
#[derive(Debug, Clone)]
pub struct LexiconBaselineGenerator {
    synonyms: HashMap<String, Vec<String>>,
    lexicon: FrequencyLexicon,
}

impl LexiconBaselineGenerator {
    pub fn new(synonyms: HashMap<String, Vec<String>>, lexicon: FrequencyLexicon) -> Self {
        let synonyms = synonyms.into_iter().map(|(k, v)| (k.to_lowercase(), v)).collect();
        LexiconBaselineGenerator { synonyms, lexicon }
    }

    /// Reads `word ⇥ synonym ⇥ synonym …` lines.
    pub fn read_synonyms<R: BufRead>(reader: R) -> std::io::Result<HashMap<String, Vec<String>>> {
        let mut table: HashMap<String, Vec<String>> = HashMap::new();
        for line in reader.lines() {
            let line = line?;
            let mut cols = line.split('\t').map(str::trim).filter(|c| !c.is_empty());
            if let Some(head) = cols.next() {
                table
                    .entry(head.to_lowercase())
                    .or_default()
                    .extend(cols.map(str::to_string));
            }
        }
        Ok(table)
    }
}

impl CandidateGenerator for LexiconBaselineGenerator {
    fn id(&self) -> String {
        "lexicon_baseline".into()
    }

    fn kind(&self) -> BackendKind {
        BackendKind::LexiconBaseline
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, BackendError> {
        let key = request.instance.complex_word.to_lowercase();
        let Some(synonyms) = self.synonyms.get(&key) else {
            return Ok(Vec::new());
        };
        let mut ranked: Vec<(usize, &String)> = synonyms
            .iter()
            .filter_map(|s| self.lexicon.rank_of(s).ok().map(|r| (r, s)))
            .collect();
        ranked.sort_by_key(|(r, _)| *r);
        Ok(ranked
            .into_iter()
            .take(request.beam_width)
            .map(|(_, s)| s.clone())
            .collect())
    }
}

/// Generator backed by masked-LM predictions; ignores the serialized source.
pub struct FillMaskGenerator<C> {
    client: C,
}

impl<C: FillMaskClient> FillMaskGenerator<C> {
    pub fn new(client: C) -> Self {
        FillMaskGenerator { client }
    }
}

impl<C: FillMaskClient> CandidateGenerator for FillMaskGenerator<C> {
    fn id(&self) -> String {
        self.client.id()
    }

    fn kind(&self) -> BackendKind {
        BackendKind::RemoteFillMask
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<String>, BackendError> {
        let i = request.instance;
        extract_mlm_candidates(&i.sentence, &i.complex_word, request.beam_width.max(1), &self.client).map_err(|e| {
            match e {
                GenerationError::Backend(b) => b,
                other => BackendError::Failed {
                    backend: self.client.id(),
                    message: other.to_string(),
                },
            }
        })
    }
}

/// One row of a backend ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendPotential {
    pub backend: String,
    /// `None` when the backend failed on some instance.
    pub potential: Option<Ratio>,
    pub failure: Option<String>,
}

/// Potential@k of each backend over a dataset, best first. A backend that
/// fails on any instance is reported with its diagnostic after the scored
/// rows.
pub fn rank_generators_by_potential(
    dataset: &[Instance],
    backends: &[&dyn CandidateGenerator],
    k: usize,
) -> Result<Vec<BackendPotential>, GenerationError> {
    if k == 0 {
        return Err(GenerationError::ZeroK);
    }
    let options = SerializationOptions {
        include_mlm: false,
        ..SerializationOptions::default()
    };
    let gold: Vec<GoldView> = dataset.iter().map(GoldView::from_instance).collect();
    let mut rows: Vec<BackendPotential> = backends
        .iter()
        .map(|backend| {
            let predictions: Result<Vec<Vec<String>>, String> = dataset
                .par_iter()
                .map(|instance| {
                    let source = build_eval_source(instance, &TokenVector::neutral(), &[], &options)
                        .map_err(|e| format!("instance {}: {e}", instance.id))?;
                    let mut out = backend
                        .generate(&GenerationRequest {
                            instance,
                            source: &source,
                            beam_width: k,
                        })
                        .map_err(|e| format!("instance {}: {e}", instance.id))?;
                    out.truncate(k);
                    Ok(out)
                })
                .collect();
            match predictions.map(|p| potential_at_k(k, &p, &gold)) {
                Ok(Ok(potential)) => BackendPotential {
                    backend: backend.id(),
                    potential: Some(potential),
                    failure: None,
                },
                Ok(Err(e)) => BackendPotential {
                    backend: backend.id(),
                    potential: None,
                    failure: Some(e.to_string()),
                },
                Err(e) => BackendPotential {
                    backend: backend.id(),
                    potential: None,
                    failure: Some(e),
                },
            }
        })
        .collect();
    // stable: equal scores keep the caller's backend order
    rows.sort_by(|a, b| match (&a.potential, &b.potential) {
        (Some(x), Some(y)) => y.cmp(x),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(rows)
}

/// One line of a TSAR-style prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub sentence: String,
    pub complex_word: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Error)]
pub enum PredictionFileError {
    #[error("line {0}: expected at least sentence and complex word columns")]
    TooFewColumns(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads `sentence ⇥ complex_word ⇥ cand1 ⇥ cand2 ⇥ …` lines.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<PredictionRow>, PredictionFileError> {
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(PredictionFileError::TooFewColumns(i + 1));
        }
        rows.push(PredictionRow {
            sentence: cols[0].to_string(),
            complex_word: cols[1].to_string(),
            candidates: cols[2..]
                .iter()
                .map(|c| c.trim())
                .filter(|c| !c.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(rows)
}

pub fn write_predictions<W: Write>(mut writer: W, rows: &[PredictionRow]) -> std::io::Result<()> {
    for r in rows {
        let mut cols = vec![r.sentence.as_str(), r.complex_word.as_str()];
        cols.extend(r.candidates.iter().map(String::as_str));
        writeln!(writer, "{}", cols.join("\t"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GoldEntry, Language};

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn trophies() -> Instance {
        Instance::new(
            "en-1",
            Language::En,
            "I want to continue playing at the highest level and win as many trophies as possible.",
            "trophies",
            vec![
                GoldEntry::new("awards", 3),
                GoldEntry::new("prizes", 2),
                GoldEntry::new("medals", 1),
            ],
        )
        .unwrap()
    }

    struct ScriptedFillMask(Vec<(String, f64)>);

    impl FillMaskClient for ScriptedFillMask {
        fn id(&self) -> String {
            "scripted".into()
        }

        fn fill_mask(&self, _text: &str, k: usize) -> Result<Vec<(String, f64)>, BackendError> {
            Ok(self.0.iter().take(k).cloned().collect())
        }
    }

    struct QueryRecorder(std::sync::Mutex<Vec<String>>);

    impl FillMaskClient for QueryRecorder {
        fn id(&self) -> String {
            "recorder".into()
        }

        fn fill_mask(&self, text: &str, _k: usize) -> Result<Vec<(String, f64)>, BackendError> {
            self.0.lock().unwrap().push(text.to_string());
            Ok(vec![("reason".into(), 0.9)])
        }
    }

    #[test]
    fn postfilter_examples() {
        assert_eq!(
            postfilter(&strings(&["reason", "Reason", "motive"]), "motive", 10),
            strings(&["reason"])
        );
        assert!(postfilter::<String>(&[], "x", 10).is_empty());
        let many: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
        assert_eq!(postfilter(&many, "x", 10), many[..10].to_vec());
        assert_eq!(
            postfilter(&strings(&["el territorio", " zona "]), "jurisdicción", 10),
            strings(&["el territorio", "zona"])
        );
    }

    #[test]
    fn generate_filters_beams() {
        let raw = strings(&[
            "awards",
            "trophies",
            "titles",
            "medals",
            "titles",
            "prizes",
            "cups",
            "honors",
            "accolades",
            "crowns",
            "rewards",
            "achievements",
            "certificates",
            "plaques",
            "Trophies",
        ]);
        let mut table = MockTableGenerator::new();
        table.insert_id("en-1", raw);
        let list = generate_candidates(&trophies(), &table, "src", 15, 15).unwrap();
        assert_eq!(list.raw_count, 15);
        assert!(list.candidates.len() <= 13);
        assert_eq!(list.candidates[..3], strings(&["awards", "titles", "medals"]));
        let list = generate_candidates(&trophies(), &table, "src", 15, 10).unwrap();
        assert_eq!(list.candidates.len(), 10);
    }

    #[test]
    fn mock_gold_table_and_errors() {
        let i = trophies();
        let table = MockTableGenerator::from_gold(std::slice::from_ref(&i));
        let list = generate_candidates(&i, &table, "", 15, 2).unwrap();
        assert_eq!(list.candidates, strings(&["awards", "prizes"]));
        let empty = MockTableGenerator::new();
        assert!(matches!(
            generate_candidates(&i, &empty, "", 15, 10),
            Err(GenerationError::Backend(_))
        ));
        let mut blank = MockTableGenerator::new();
        blank.insert_id("en-1", vec![]);
        assert!(matches!(
            generate_candidates(&i, &blank, "", 15, 10),
            Err(GenerationError::NoCandidates { .. })
        ));
    }

    #[test]
    fn mock_source_lookup_wins() {
        let i = trophies();
        let mut table = MockTableGenerator::from_gold(std::slice::from_ref(&i));
        table.insert_source("special", strings(&["cups"]));
        assert_eq!(
            generate_candidates(&i, &table, "special", 15, 10).unwrap().candidates,
            strings(&["cups"])
        );
    }

    #[test]
    fn mlm_query_format() {
        let q = mlm_query("The motive for the killings was not known.", "motive").unwrap();
        assert_eq!(
            q,
            "The motive for the killings was not known. </s> The [MASK] for the killings was not known."
        );
        let rec = QueryRecorder(Default::default());
        extract_mlm_candidates("The motive for the killings was not known.", "motive", 10, &rec).unwrap();
        assert_eq!(rec.0.lock().unwrap()[0], q);
        assert!(matches!(
            mlm_query("abc", "x"),
            Err(GenerationError::MaskConstruction { .. })
        ));
    }

    #[test]
    fn mlm_sorting_and_filtering() {
        let client = ScriptedFillMask(vec![("a".into(), 0.3), ("b".into(), 0.5), ("c".into(), 0.2)]);
        assert_eq!(
            extract_mlm_candidates("x y", "y", 3, &client).unwrap(),
            strings(&["b", "a", "c"])
        );
        assert_eq!(extract_mlm_candidates("x y", "y", 1, &client).unwrap(), strings(&["b"]));
        assert_eq!(
            extract_mlm_candidates("x y", "y", 0, &client),
            Err(GenerationError::ZeroK)
        );
        let noisy = ScriptedFillMask(vec![
            ("##ing".into(), 0.9),
            (",".into(), 0.8),
            ("<unk>".into(), 0.7),
            ("reason".into(), 0.6),
            ("reason".into(), 0.5),
            ("cause".into(), f64::NAN),
            ("aim".into(), 0.1),
        ]);
        assert_eq!(
            extract_mlm_candidates("x y", "y", 5, &noisy).unwrap(),
            strings(&["reason", "aim"])
        );
    }

    #[test]
    fn lexicon_baseline_orders_by_frequency() {
        let lx = FrequencyLexicon::from_words(Language::En, ["the", "prizes", "awards", "cups"]).unwrap();
        let syn =
            LexiconBaselineGenerator::read_synonyms(std::io::Cursor::new("trophies\tcups\tlaurels\tawards\tprizes\n"))
                .unwrap();
        let backend = LexiconBaselineGenerator::new(syn, lx);
        let req = GenerationRequest {
            instance: &trophies(),
            source: "",
            beam_width: 3,
        };
        assert_eq!(backend.generate(&req).unwrap(), strings(&["prizes", "awards", "cups"]));
    }

    #[test]
    fn ranking_by_potential() {
        let data = vec![trophies()];
        let perfect = MockTableGenerator::from_gold(&data);
        let mut nothing = MockTableGenerator::new();
        nothing.insert_id("en-1", vec![]);
        let broken = MockTableGenerator::new();
        let rows = rank_generators_by_potential(&data, &[&broken, &nothing, &perfect], 10).unwrap();
        assert_eq!(rows[0].potential.unwrap().value(), 1.0);
        assert_eq!(rows[1].potential.unwrap().value(), 0.0);
        assert!(rows[2].potential.is_none());
        assert!(rows[2].failure.as_ref().unwrap().contains("en-1"));
    }

    #[test]
    fn prediction_file_round_trip() {
        let rows = vec![
            PredictionRow {
                sentence: "a b".into(),
                complex_word: "b".into(),
                candidates: strings(&["c", "d"]),
            },
            PredictionRow {
                sentence: "e f".into(),
                complex_word: "f".into(),
                candidates: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_predictions(&mut buf, &rows).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a b\tb\tc\td\ne f\tf\n");
        assert_eq!(read_predictions(std::io::Cursor::new(buf)).unwrap(), rows);
        assert!(matches!(
            read_predictions(std::io::Cursor::new("lonely\n")),
            Err(PredictionFileError::TooFewColumns(1))
        ));
    }
}
