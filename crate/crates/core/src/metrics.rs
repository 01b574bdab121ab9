//! The TSAR-2022 evaluation suite.
//!
//! | Metric          | Relevance set     | Cut-offs     |
//! | --------------- | ----------------- | ------------ |
//! | `ACC@1`         | all gold          | 1            |
//! | `ACC@N@Top1`    | most-suggested    | N ∈ {1,2,3}  |
//! | `Potential@K`   | all gold          | K ∈ {3,5,10} |
//! | `MAP@K`         | all gold          | K ∈ {3,5,10} |
//!
//! Every score is accumulated as an exact fraction over integer counts and
//! only converted to a float at the very end, so serial and parallel
//! evaluation agree bit-for-bit.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Instance;

/// Cut-offs reported for `ACC@N@Top1`.
pub const ACC_TOP1_CUTOFFS: [usize; 3] = [1, 2, 3];
/// Cut-offs reported for `MAP@K` and `Potential@K`.
pub const RANK_CUTOFFS: [usize; 3] = [3, 5, 10];
/// Largest cut-off for which MAP@K stays exact in 128-bit arithmetic.
pub const MAX_MAP_CUTOFF: usize = 40;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} prediction lists for {gold} gold instances")]
    Misaligned { predictions: usize, gold: usize },
    #[error("cannot score an empty dataset")]
    Empty,
    #[error("cut-off must be at least 1")]
    ZeroCutoff,
    #[error("cut-off {0} exceeds the supported maximum of {MAX_MAP_CUTOFF}")]
    CutoffTooLarge(usize),
    #[error("gold view needs at least one substitute")]
    EmptyGold,
}

/// Canonical form used whenever two terms are compared: casefolded,
/// stripped of leading/trailing punctuation and whitespace, with internal
/// whitespace runs collapsed to one space.
pub fn normalize_term(s: &str) -> String {
    let lowered = s.to_lowercase();
    let trimmed = lowered.trim_matches(|c: char| !c.is_alphanumeric());
    trimmed.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// An exact non-negative fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u128,
    pub denominator: u128,
}

impl Ratio {
    pub fn new(numerator: u128, denominator: u128) -> Self {
        assert!(denominator > 0, "zero denominator");
        let g = gcd(numerator, denominator);
        Ratio {
            numerator: numerator / g,
            denominator: denominator / g,
        }
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.numerator * other.denominator == other.numerator * self.denominator
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.numerator * other.denominator).cmp(&(other.numerator * self.denominator))
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}", self.value())
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    if a == 0 {
        1
    } else {
        a
    }
}

fn lcm_up_to(k: usize) -> u128 {
    (1..=k as u128).fold(1, |acc, i| acc / gcd(acc, i) * i)
}

/// Normalized gold sets for one instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldView {
    pub gold_set: HashSet<String>,
    /// Substitutes sharing the maximal annotator count.
    pub top_gold: HashSet<String>,
}

impl GoldView {
    /// Builds a view from `(substitute, count)` pairs in any order.
    pub fn from_counts<'a, I>(pairs: I) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = (&'a str, u32)>,
    {
        let pairs: Vec<(String, u32)> = pairs.into_iter().map(|(s, c)| (normalize_term(s), c)).collect();
        let max = pairs.iter().map(|(_, c)| *c).max().ok_or(MetricsError::EmptyGold)?;
        let gold_set = pairs.iter().map(|(s, _)| s.clone()).collect();
        let top_gold = pairs
            .iter()
            .filter(|(_, c)| *c == max)
            .map(|(s, _)| s.clone())
            .collect();
        Ok(GoldView { gold_set, top_gold })
    }

    pub fn from_instance(instance: &Instance) -> Self {
        Self::from_counts(instance.gold.iter().map(|g| (g.substitute.as_str(), g.count)))
            .expect("instances always carry gold")
    }
}

fn check_aligned<P: AsRef<[String]>>(predictions: &[P], gold: &[GoldView]) -> Result<(), MetricsError> {
    if predictions.len() != gold.len() {
        return Err(MetricsError::Misaligned {
            predictions: predictions.len(),
            gold: gold.len(),
        });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

fn any_in_top(prediction: &[String], n: usize, set: &HashSet<String>) -> bool {
    prediction.iter().take(n).any(|p| set.contains(&normalize_term(p)))
}

fn count_ratio<P, F>(predictions: &[P], gold: &[GoldView], hit: F) -> Result<Ratio, MetricsError>
where
    P: AsRef<[String]>,
    F: Fn(&[String], &GoldView) -> bool,
{
    check_aligned(predictions, gold)?;
    let hits = predictions.iter().zip(gold).filter(|(p, g)| hit(p.as_ref(), g)).count();
    Ok(Ratio::new(hits as u128, gold.len() as u128))
}

/// Fraction of instances whose first prediction is a gold substitute.
pub fn acc_at_1<P: AsRef<[String]>>(predictions: &[P], gold: &[GoldView]) -> Result<Ratio, MetricsError> {
    count_ratio(predictions, gold, |p, g| any_in_top(p, 1, &g.gold_set))
}

/// Fraction of instances where one of the first `n` predictions is a
/// most-suggested gold substitute.
pub fn acc_at_n_top1<P: AsRef<[String]>>(
    n: usize,
    predictions: &[P],
    gold: &[GoldView],
) -> Result<Ratio, MetricsError> {
    if n == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    count_ratio(predictions, gold, |p, g| any_in_top(p, n, &g.top_gold))
}

/// Fraction of instances where one of the first `k` predictions is gold.
pub fn potential_at_k<P: AsRef<[String]>>(
    k: usize,
    predictions: &[P],
    gold: &[GoldView],
) -> Result<Ratio, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    count_ratio(predictions, gold, |p, g| any_in_top(p, k, &g.gold_set))
}

/// Sum of precision@i over relevant positions of one ranked list, scaled by
/// `lcm(1..=K)` so that it is an integer.
fn scaled_average_precision(prediction: &[String], gold: &HashSet<String>, k: usize, lcm: u128) -> u128 {
    let mut hits = 0u128;
    let mut sum = 0u128;
    for (i, p) in prediction.iter().take(k).enumerate() {
        if gold.contains(&normalize_term(p)) {
            hits += 1;
            sum += hits * (lcm / (i as u128 + 1));
        }
    }
    sum
}

/// MAP@K with precision summed over relevant positions up to `min(K, m)` and
/// divided by `K`.
pub fn map_at_k<P: AsRef<[String]>>(k: usize, predictions: &[P], gold: &[GoldView]) -> Result<Ratio, MetricsError> {
    if k == 0 {
        return Err(MetricsError::ZeroCutoff);
    }
    if k > MAX_MAP_CUTOFF {
        return Err(MetricsError::CutoffTooLarge(k));
    }
    check_aligned(predictions, gold)?;
    let lcm = lcm_up_to(k);
    let numerator: u128 = predictions
        .iter()
        .zip(gold)
        .map(|(p, g)| scaled_average_precision(p.as_ref(), &g.gold_set, k, lcm))
        .sum();
    Ok(Ratio::new(numerator, k as u128 * lcm * gold.len() as u128))
}

/// The ten TSAR metrics for one prediction set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricReport {
    pub instance_count: usize,
    pub acc_at_1: Ratio,
    /// Indexed like [`ACC_TOP1_CUTOFFS`].
    pub acc_at_n_top1: [Ratio; 3],
    /// Indexed like [`RANK_CUTOFFS`].
    pub map_at_k: [Ratio; 3],
    /// Indexed like [`RANK_CUTOFFS`].
    pub potential_at_k: [Ratio; 3],
}

impl MetricReport {
    pub fn acc_at_1_top1(&self) -> Ratio {
        self.acc_at_n_top1[0]
    }

    /// `(name, value)` pairs in table column order.
    pub fn fields(&self) -> Vec<(String, Ratio)> {
        let mut out = vec![("ACC@1".to_string(), self.acc_at_1)];
        for (n, r) in ACC_TOP1_CUTOFFS.iter().zip(&self.acc_at_n_top1) {
            out.push((format!("ACC@{n}@Top1"), *r));
        }
        for (k, r) in RANK_CUTOFFS.iter().zip(&self.map_at_k) {
            out.push((format!("MAP@{k}"), *r));
        }
        for (k, r) in RANK_CUTOFFS.iter().zip(&self.potential_at_k) {
            out.push((format!("Potential@{k}"), *r));
        }
        out
    }

    /// Flat `key=value` lines, one metric per line.
    pub fn to_key_values(&self) -> String {
        let mut s = format!("instances={}\n", self.instance_count);
        for (name, r) in self.fields() {
            s.push_str(&format!("{name}={:.4}\n", r.value()));
        }
        s
    }

    /// A results table with one row per system, in the column layout used by
    /// the shared-task leaderboards.
    pub fn to_table(rows: &[(&str, &MetricReport)]) -> String {
        let headers: Vec<String> = std::iter::once("System".to_string())
            .chain(
                rows.first()
                    .map(|(_, r)| r.fields().into_iter().map(|(n, _)| n).collect::<Vec<_>>())
                    .unwrap_or_default(),
            )
            .collect();
        let mut lines = vec![headers.join(" | ")];
        lines.push(
            headers
                .iter()
                .map(|h| "-".repeat(h.len()))
                .collect::<Vec<_>>()
                .join(" | "),
        );
        for (system, report) in rows {
            let mut cells = vec![system.to_string()];
            cells.extend(report.fields().into_iter().map(|(_, r)| format!("{:.4}", r.value())));
            lines.push(cells.join(" | "));
        }
        lines.join("\n") + "\n"
    }
}

/// Computes every field of a [`MetricReport`].
pub fn evaluate_all<P: AsRef<[String]>>(predictions: &[P], gold: &[GoldView]) -> Result<MetricReport, MetricsError> {
    check_aligned(predictions, gold)?;
    let mut top1 = [Ratio::new(0, 1); 3];
    for (slot, n) in top1.iter_mut().zip(ACC_TOP1_CUTOFFS) {
        *slot = acc_at_n_top1(n, predictions, gold)?;
    }
    let mut map = [Ratio::new(0, 1); 3];
    let mut potential = [Ratio::new(0, 1); 3];
    for (i, k) in RANK_CUTOFFS.into_iter().enumerate() {
        map[i] = map_at_k(k, predictions, gold)?;
        potential[i] = potential_at_k(k, predictions, gold)?;
    }
    Ok(MetricReport {
        instance_count: gold.len(),
        acc_at_1: acc_at_1(predictions, gold)?,
        acc_at_n_top1: top1,
        map_at_k: map,
        potential_at_k: potential,
    })
}
