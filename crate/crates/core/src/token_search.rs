//! Inference-time search over control-token values.
//!
//! WL, WR, WS and SS are drawn from the 31-point grid `0.50..=2.00` (step
//! 0.05); CR stays at 1.00. Each trial holds one value set fixed for every
//! validation instance and scores it by ACC@1@Top1. The best ten trials are
//! kept.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_tokens::{TokenValue, TokenVector};
use crate::corpus::Instance;
use crate::generation::{generate_candidates, CandidateGenerator, DEFAULT_BEAM_WIDTH, DEFAULT_LIMIT};
use crate::metrics::{acc_at_n_top1, evaluate_all, GoldView, MetricReport, MetricsError, Ratio};
use crate::serializer::{build_eval_source, SerializationOptions};

pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_TOP_N: usize = 10;
const GRID_POINTS: u32 = 31;
/// Number of distinct value sets: 31⁴.
pub const GRID_SIZE: u32 = GRID_POINTS * GRID_POINTS * GRID_POINTS * GRID_POINTS;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("trial budget must be at least 1")]
    ZeroTrials,
    #[error("search log entry {index} does not match the seeded sampler")]
    LogMismatch { index: usize },
    #[error("search log line {line}: {source}")]
    BadLog {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Searched token values; CR is implicitly 1.00.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenValueSet {
    pub wl: TokenValue,
    pub wr: TokenValue,
    pub ws: TokenValue,
    pub ss: TokenValue,
}

impl TokenValueSet {
    pub fn neutral() -> Self {
        TokenValueSet {
            wl: TokenValue::ONE,
            wr: TokenValue::ONE,
            ws: TokenValue::ONE,
            ss: TokenValue::ONE,
        }
    }

    pub fn to_vector(&self) -> TokenVector {
        TokenVector::from_values(TokenValue::ONE, self.wl, self.wr, self.ws, self.ss)
    }

    /// Position in the row-major enumeration of the grid.
    pub fn grid_index(&self) -> u32 {
        [self.wl, self.wr, self.ws, self.ss].iter().fold(0, |acc, v| {
            acc * GRID_POINTS + (v.steps() - TokenValue::MIN.steps()) as u32
        })
    }

    pub fn from_grid_index(mut index: u32) -> Self {
        let mut digits = [TokenValue::MIN; 4];
        for slot in digits.iter_mut().rev() {
            *slot = TokenValue::from_steps(TokenValue::MIN.steps() + (index % GRID_POINTS) as u16);
            index /= GRID_POINTS;
        }
        let [wl, wr, ws, ss] = digits;
        TokenValueSet { wl, wr, ws, ss }
    }

    pub fn is_on_search_grid(&self) -> bool {
        [self.wl, self.wr, self.ws, self.ss]
            .iter()
            .all(|v| (TokenValue::MIN..=TokenValue::MAX).contains(v))
    }
}

/// Proposes the next value set to try.
pub trait TokenSampler {
    fn propose(&mut self, history: &[Trial]) -> TokenValueSet;
}

/// Uniform draws over the grid without replacement (until the grid is
/// exhausted), optionally starting from the all-1.00 default.
#[derive(Debug, Clone)]
pub struct UniformGridSampler {
    rng: ChaCha8Rng,
    seen: HashSet<u32>,
    baseline_pending: bool,
}

impl UniformGridSampler {
    pub fn new(seed: u64, start_from_default: bool) -> Self {
        UniformGridSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen: HashSet::new(),
            baseline_pending: start_from_default,
        }
    }
}

impl TokenSampler for UniformGridSampler {
    fn propose(&mut self, _history: &[Trial]) -> TokenValueSet {
        if std::mem::take(&mut self.baseline_pending) {
            let set = TokenValueSet::neutral();
            self.seen.insert(set.grid_index());
            return set;
        }
        if self.seen.len() as u32 >= GRID_SIZE {
            self.seen.clear();
        }
        loop {
            let index = self.rng.random_range(0..GRID_SIZE);
            if self.seen.insert(index) {
                return TokenValueSet::from_grid_index(index);
            }
        }
    }
}

/// One evaluated (or failed) value set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub set: TokenValueSet,
    /// Validation ACC@1@Top1; `None` when the backend failed.
    pub objective: Option<Ratio>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    /// Best trials by objective, ties resolved toward the earlier trial.
    pub top_sets: Vec<Trial>,
    pub seed: u64,
    pub trial_budget: usize,
}

impl SearchResult {
    pub fn best(&self) -> Option<&Trial> {
        self.top_sets.first()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    pub trials: usize,
    pub seed: u64,
    pub top_n: usize,
    /// Spend the first trial on the all-1.00 validation default.
    pub start_from_default: bool,
    pub beam_width: usize,
    pub limit: usize,
    pub options: SerializationOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            trials: DEFAULT_TRIALS,
            seed: 0,
            top_n: DEFAULT_TOP_N,
            start_from_default: true,
            beam_width: DEFAULT_BEAM_WIDTH,
            limit: DEFAULT_LIMIT,
            options: SerializationOptions::default(),
        }
    }
}

/// Precomputed MLM candidates per instance id.
pub type MlmTable = HashMap<String, Vec<String>>;

/// Candidates for every instance under one fixed value set, in input order.
/// Per-instance failures are reported alongside an empty prediction.
pub fn predict_with_set(
    instances: &[Instance],
    set: &TokenValueSet,
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
) -> Vec<Result<Vec<String>, String>> {
    let tokens = set.to_vector();
    instances
        .par_iter()
        .map(|instance| {
            let candidates = mlm.get(&instance.id).map(Vec::as_slice).unwrap_or(&[]);
            let source =
                build_eval_source(instance, &tokens, candidates, &config.options).map_err(|e| e.to_string())?;
            generate_candidates(instance, backend, &source, config.beam_width, config.limit)
                .map(|list| list.candidates)
                .map_err(|e| e.to_string())
        })
        .collect()
}

/// Result of scoring one value set on a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetEvaluation {
    pub report: MetricReport,
    pub predictions: Vec<Vec<String>>,
    /// `(instance id, diagnostic)` for instances scored as empty predictions.
    pub failures: Vec<(String, String)>,
}

/// Scores a fixed value set (CR = 1.00) on a dataset.
pub fn evaluate_token_set(
    instances: &[Instance],
    set: &TokenValueSet,
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
) -> Result<SetEvaluation, SearchError> {
    let mut failures = Vec::new();
    let predictions: Vec<Vec<String>> = predict_with_set(instances, set, backend, mlm, config)
        .into_iter()
        .zip(instances)
        .map(|(outcome, instance)| {
            outcome.unwrap_or_else(|e| {
                failures.push((instance.id.clone(), e));
                Vec::new()
            })
        })
        .collect();
    let gold: Vec<GoldView> = instances.iter().map(GoldView::from_instance).collect();
    Ok(SetEvaluation {
        report: evaluate_all(&predictions, &gold)?,
        predictions,
        failures,
    })
}

fn run_trial(
    index: usize,
    set: TokenValueSet,
    validation: &[Instance],
    gold: &[GoldView],
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
) -> Result<Trial, SearchError> {
    let outcomes: Result<Vec<Vec<String>>, String> = predict_with_set(validation, &set, backend, mlm, config)
        .into_iter()
        .collect();
    Ok(match outcomes {
        Ok(predictions) => Trial {
            index,
            set,
            objective: Some(acc_at_n_top1(1, &predictions, gold)?),
            error: None,
        },
        Err(e) => {
            log::warn!("trial {index} aborted: {e}");
            Trial {
                index,
                set,
                objective: None,
                error: Some(e),
            }
        }
    })
}

fn top_sets(trials: &[Trial], n: usize) -> Vec<Trial> {
    let mut scored: Vec<&Trial> = trials.iter().filter(|t| t.objective.is_some()).collect();
    scored.sort_by(|a, b| b.objective.cmp(&a.objective).then(a.index.cmp(&b.index)));
    scored.into_iter().take(n).cloned().collect()
}

/// Runs the search with the default seeded uniform sampler.
pub fn run_search(
    validation: &[Instance],
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
) -> Result<SearchResult, SearchError> {
    resume_search(validation, backend, mlm, config, &[])
}

/// Continues a search from previously logged trials. The sampler is replayed
/// over the logged prefix, which must match it exactly.
pub fn resume_search(
    validation: &[Instance],
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
    prior: &[Trial],
) -> Result<SearchResult, SearchError> {
    let mut sampler = UniformGridSampler::new(config.seed, config.start_from_default);
    search_with_sampler(validation, backend, mlm, config, &mut sampler, prior, |_| Ok(()))
}

/// Generic search loop. `on_trial` sees each newly evaluated trial in order,
/// e.g. to append it to a log.
pub fn search_with_sampler<S, F>(
    validation: &[Instance],
    backend: &dyn CandidateGenerator,
    mlm: &MlmTable,
    config: &SearchConfig,
    sampler: &mut S,
    prior: &[Trial],
    mut on_trial: F,
) -> Result<SearchResult, SearchError>
where
    S: TokenSampler,
    F: FnMut(&Trial) -> Result<(), SearchError>,
{
    if validation.is_empty() {
        return Err(SearchError::EmptyValidation);
    }
    if config.trials == 0 {
        return Err(SearchError::ZeroTrials);
    }
    let gold: Vec<GoldView> = validation.iter().map(GoldView::from_instance).collect();
    let mut trials: Vec<Trial> = Vec::with_capacity(config.trials);
    for index in 0..config.trials {
        let set = sampler.propose(&trials);
        let trial = match prior.get(index) {
            Some(logged) => {
                if logged.set != set || logged.index != index {
                    return Err(SearchError::LogMismatch { index });
                }
                logged.clone()
            }
            None => {
                let trial = run_trial(index, set, validation, &gold, backend, mlm, config)?;
                on_trial(&trial)?;
                trial
            }
        };
        trials.push(trial);
    }
    Ok(SearchResult {
        top_sets: top_sets(&trials, config.top_n),
        trials,
        seed: config.seed,
        trial_budget: config.trials,
    })
}

/// Flat search-log record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrialRecord {
    trial: usize,
    wl: TokenValue,
    wr: TokenValue,
    ws: TokenValue,
    ss: TokenValue,
    objective: Option<f64>,
    objective_numerator: Option<u128>,
    objective_denominator: Option<u128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn write_trial<W: Write>(mut writer: W, trial: &Trial) -> std::io::Result<()> {
    let record = TrialRecord {
        trial: trial.index,
        wl: trial.set.wl,
        wr: trial.set.wr,
        ws: trial.set.ws,
        ss: trial.set.ss,
        objective: trial.objective.map(|r| r.value()),
        objective_numerator: trial.objective.map(|r| r.numerator),
        objective_denominator: trial.objective.map(|r| r.denominator),
        error: trial.error.clone(),
    };
    serde_json::to_writer(&mut writer, &record)?;
    writer.write_all(b"\n")
}

pub fn read_trials<R: BufRead>(reader: R) -> Result<Vec<Trial>, SearchError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: TrialRecord =
            serde_json::from_str(&line).map_err(|source| SearchError::BadLog { line: i + 1, source })?;
        let objective = match (r.objective_numerator, r.objective_denominator) {
            (Some(n), Some(d)) if d > 0 => Some(Ratio::new(n, d)),
            _ => None,
        };
        out.push(Trial {
            index: r.trial,
            set: TokenValueSet {
                wl: r.wl,
                wr: r.wr,
                ws: r.ws,
                ss: r.ss,
            },
            objective,
            error: r.error,
        });
    }
    Ok(out)
}
