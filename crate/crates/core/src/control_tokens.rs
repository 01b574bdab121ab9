//! The five control tokens: candidate ranking (CR), word length (WL), word
//! rank (WR), word syllables (WS) and sentence similarity (SS).
//!
//! Token values live on a 0.05 grid. The four computed ratios are clamped to
//! `[0.50, 2.00]`, which is exactly the range explored by the token-value
//! search, so every searched value can be rendered. CR takes one of five
//! fixed values derived from the gold position.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{locate_word, Instance};
use crate::lexicon::{FrequencyLexicon, LexiconError, Syllabifier};

/// Grid steps per unit (0.05 spacing).
const STEPS_PER_UNIT: f64 = 20.0;

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("token value {0} is not finite")]
    NonFinite(f64),
    #[error("token value {0} is negative")]
    Negative(f64),
    #[error("token value {0:?} is not on the 0.05 grid")]
    OffGrid(String),
    #[error("gold position must be at least 1")]
    ZeroPosition,
    #[error("empty substitute")]
    EmptySubstitute,
    #[error("empty complex word")]
    EmptyComplexWord,
    #[error("complex word {0:?} not found in sentence")]
    ComplexWordNotInSentence(String),
    #[error("malformed control-token string {0:?}")]
    Malformed(String),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
}

/// A control-token value, stored as an integer number of 0.05 steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TokenValue(u16);

impl TokenValue {
    pub const ONE: TokenValue = TokenValue(20);
    /// Lower clamp for computed ratios (0.50).
    pub const MIN: TokenValue = TokenValue(10);
    /// Upper clamp for computed ratios (2.00).
    pub const MAX: TokenValue = TokenValue(40);

    pub const fn from_steps(steps: u16) -> Self {
        TokenValue(steps)
    }

    pub fn steps(self) -> u16 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / STEPS_PER_UNIT
    }

    /// Every value in `[MIN, MAX]`: the 31 grid points.
    pub fn search_grid() -> impl Iterator<Item = TokenValue> + Clone {
        (Self::MIN.0..=Self::MAX.0).map(TokenValue)
    }

    /// Rounds to the nearest grid point (halves away from zero), then clamps
    /// to `[0.50, 2.00]`.
    pub fn quantize(value: f64) -> Result<Self, TokenError> {
        if !value.is_finite() {
            return Err(TokenError::NonFinite(value));
        }
        if value < 0.0 {
            return Err(TokenError::Negative(value));
        }
        // the epsilon absorbs binary representation error on exact halves
        let steps = (value * STEPS_PER_UNIT + 1e-9).round();
        let steps = steps.clamp(Self::MIN.0 as f64, Self::MAX.0 as f64) as u16;
        Ok(TokenValue(steps))
    }

    fn hundredths(self) -> u32 {
        self.0 as u32 * 5
    }
}

impl fmt::Display for TokenValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.hundredths();
        write!(f, "{}.{:02}", h / 100, h % 100)
    }
}

impl FromStr for TokenValue {
    type Err = TokenError;

    /// Accepts exactly the `d.dd` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let off_grid = || TokenError::OffGrid(s.to_string());
        let (int, frac) = s.split_once('.').ok_or_else(off_grid)?;
        if int.is_empty() || frac.len() != 2 || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(off_grid());
        }
        let hundredths: u32 =
            int.parse::<u32>().map_err(|_| off_grid())? * 100 + frac.parse::<u32>().map_err(|_| off_grid())?;
        if !hundredths.is_multiple_of(5) || hundredths / 5 > u16::MAX as u32 {
            return Err(off_grid());
        }
        Ok(TokenValue((hundredths / 5) as u16))
    }
}

impl TryFrom<f64> for TokenValue {
    type Error = TokenError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        let steps = value * STEPS_PER_UNIT;
        if !steps.is_finite() || steps < 0.0 || (steps - steps.round()).abs() > 1e-6 {
            return Err(TokenError::OffGrid(value.to_string()));
        }
        Ok(TokenValue(steps.round() as u16))
    }
}

impl From<TokenValue> for f64 {
    fn from(v: TokenValue) -> f64 {
        v.as_f64()
    }
}

/// Candidate-ranking value for a 1-based gold position.
pub fn candidate_rank_value(gold_position: usize) -> Result<TokenValue, TokenError> {
    Ok(match gold_position {
        0 => return Err(TokenError::ZeroPosition),
        1 => TokenValue(20),
        2 => TokenValue(15),
        3 => TokenValue(10),
        4 => TokenValue(5),
        _ => TokenValue(2),
    })
}

/// One token: the computed value and its grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub raw: f64,
    pub value: TokenValue,
}

impl Token {
    pub fn exact(value: TokenValue) -> Self {
        Token {
            raw: value.as_f64(),
            value,
        }
    }

    fn ratio(raw: f64) -> Result<Self, TokenError> {
        Ok(Token {
            raw,
            value: TokenValue::quantize(raw)?,
        })
    }
}

/// Control-token values in rendering order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenVector {
    pub cr: Token,
    pub wl: Token,
    pub wr: Token,
    pub ws: Token,
    pub ss: Token,
}

impl TokenVector {
    /// The all-1.00 vector used for validation and as the inference default.
    pub fn neutral() -> Self {
        Self::from_values(
            TokenValue::ONE,
            TokenValue::ONE,
            TokenValue::ONE,
            TokenValue::ONE,
            TokenValue::ONE,
        )
    }

    pub fn from_values(cr: TokenValue, wl: TokenValue, wr: TokenValue, ws: TokenValue, ss: TokenValue) -> Self {
        TokenVector {
            cr: Token::exact(cr),
            wl: Token::exact(wl),
            wr: Token::exact(wr),
            ws: Token::exact(ws),
            ss: Token::exact(ss),
        }
    }

    /// Grid values in `CR, WL, WR, WS, SS` order.
    pub fn values(&self) -> [TokenValue; 5] {
        [
            self.cr.value,
            self.wl.value,
            self.wr.value,
            self.ws.value,
            self.ss.value,
        ]
    }

    /// `<CR_x.xx> <WL_x.xx> <WR_x.xx> <WS_x.xx> <SS_x.xx>`
    pub fn render(&self) -> String {
        TOKEN_NAMES
            .iter()
            .zip(self.values())
            .map(|(name, v)| format!("<{name}_{v}>"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Inverse of [`TokenVector::render`].
    pub fn parse(text: &str) -> Result<Self, TokenError> {
        let malformed = || TokenError::Malformed(text.to_string());
        let parts: Vec<&str> = text.split(' ').collect();
        if parts.len() != TOKEN_NAMES.len() {
            return Err(malformed());
        }
        let mut values = [TokenValue::ONE; 5];
        for ((part, name), slot) in parts.iter().zip(TOKEN_NAMES).zip(values.iter_mut()) {
            let inner = part
                .strip_prefix('<')
                .and_then(|p| p.strip_suffix('>'))
                .and_then(|p| p.strip_prefix(name))
                .and_then(|p| p.strip_prefix('_'))
                .ok_or_else(malformed)?;
            *slot = inner.parse()?;
        }
        let [cr, wl, wr, ws, ss] = values;
        Ok(Self::from_values(cr, wl, wr, ws, ss))
    }
}

pub const TOKEN_NAMES: [&str; 5] = ["CR", "WL", "WR", "WS", "SS"];

/// Sentence embedding backend used for the SS token.
pub trait EmbeddingProvider: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, sentence: &str) -> Result<Vec<f64>, EmbedError>;
}

#[derive(Debug, Clone, Error)]
#[error("embedding backend {backend}: {message}")]
pub struct EmbedError {
    pub backend: String,
    pub message: String,
}

/// Deterministic, model-free embeddings: hashed word unigrams and bigrams
/// with random signs.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const BACKEND_ID: &'static str = "hashing";

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl EmbeddingProvider for HashingEmbedder {
    fn backend_id(&self) -> &str {
        Self::BACKEND_ID
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, sentence: &str) -> Result<Vec<f64>, EmbedError> {
        let lowered = sentence.to_lowercase();
        let words: Vec<&str> = lowered
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(EmbedError {
                backend: Self::BACKEND_ID.into(),
                message: format!("nothing to embed in {sentence:?}"),
            });
        }
        let mut v = vec![0.0; self.dimension];
        let mut add = |feature: String| {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[(h % self.dimension as u64) as usize] += sign;
        };
        for w in &words {
            add(format!("u:{w}"));
        }
        for pair in words.windows(2) {
            add(format!("b:{} {}", pair[0], pair[1]));
        }
        Ok(v)
    }
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    if a == b {
        return a.iter().any(|x| *x != 0.0).then_some(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| dot / (na * nb))
}

/// Sentence with the complex word replaced by `substitute`.
pub fn substitute_into(sentence: &str, complex_word: &str, substitute: &str) -> Option<String> {
    let range = locate_word(sentence, complex_word)?;
    Some(format!(
        "{}{}{}",
        &sentence[..range.start],
        substitute,
        &sentence[range.end..]
    ))
}

/// Token values describing how `substitute` at `gold_position` relates to
/// the instance's complex word.
pub fn compute_token_vector(
    instance: &Instance,
    substitute: &str,
    gold_position: usize,
    lexicon: &FrequencyLexicon,
    syllabifier: &Syllabifier,
    embedder: &dyn EmbeddingProvider,
) -> Result<TokenVector, TokenError> {
    let substitute = substitute.trim();
    let complex_word = instance.complex_word.as_str();
    if substitute.is_empty() {
        return Err(TokenError::EmptySubstitute);
    }
    if complex_word.is_empty() {
        return Err(TokenError::EmptyComplexWord);
    }
    let cr = candidate_rank_value(gold_position)?;

    let wl = substitute.chars().count() as f64 / complex_word.chars().count() as f64;
    let wr = lexicon.rank_of(substitute)? as f64 / lexicon.rank_of(complex_word)? as f64;
    let ws = syllabifier.count(substitute)? as f64 / syllabifier.count(complex_word)? as f64;

    let replaced = substitute_into(&instance.sentence, complex_word, substitute)
        .ok_or_else(|| TokenError::ComplexWordNotInSentence(complex_word.to_string()))?;
    let original = embedder.embed(&instance.sentence)?;
    let edited = embedder.embed(&replaced)?;
    let ss = cosine(&original, &edited).ok_or_else(|| EmbedError {
        backend: embedder.backend_id().to_string(),
        message: "zero-norm embedding".into(),
    })?;

    Ok(TokenVector {
        cr: Token::exact(cr),
        wl: Token::ratio(wl)?,
        wr: Token::ratio(wr)?,
        ws: Token::ratio(ws)?,
        ss: Token::ratio(ss.clamp(0.0, 1.0))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{GoldEntry, Language};

    fn v(s: &str) -> TokenValue {
        s.parse().unwrap()
    }

    fn trophies() -> Instance {
        Instance::new(
            "t",
            Language::En,
            "I want to continue playing at the highest level and win as many trophies as possible.",
            "trophies",
            vec![GoldEntry::new("awards", 3), GoldEntry::new("prizes", 2)],
        )
        .unwrap()
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(TokenValue::quantize(0.873).unwrap(), v("0.85"));
        assert_eq!(TokenValue::quantize(2.70).unwrap(), v("2.00"));
        assert_eq!(TokenValue::quantize(1.00).unwrap(), TokenValue::ONE);
        assert_eq!(TokenValue::quantize(0.0).unwrap(), TokenValue::MIN);
        assert_eq!(TokenValue::quantize(1.025).unwrap(), v("1.05"));
        assert_eq!(TokenValue::quantize(0.75).unwrap(), v("0.75"));
        assert!(matches!(TokenValue::quantize(f64::NAN), Err(TokenError::NonFinite(_))));
        assert!(matches!(
            TokenValue::quantize(f64::INFINITY),
            Err(TokenError::NonFinite(_))
        ));
        assert!(matches!(TokenValue::quantize(-0.2), Err(TokenError::Negative(_))));
    }

    #[test]
    fn value_parsing() {
        assert_eq!(v("1.25").steps(), 25);
        assert_eq!(v("0.10").to_string(), "0.10");
        for bad in ["1.23", "1.2", "1", "a.bc", "-1.00", "1.250"] {
            assert!(bad.parse::<TokenValue>().is_err(), "{bad}");
        }
        assert_eq!(TokenValue::search_grid().count(), 31);
    }

    #[test]
    fn cr_map() {
        let seq: Vec<String> = (1..=7).map(|p| candidate_rank_value(p).unwrap().to_string()).collect();
        assert_eq!(seq, ["1.00", "0.75", "0.50", "0.25", "0.10", "0.10", "0.10"]);
        assert!(matches!(candidate_rank_value(0), Err(TokenError::ZeroPosition)));
    }

    #[test]
    fn render_examples() {
        assert_eq!(
            TokenVector::neutral().render(),
            "<CR_1.00> <WL_1.00> <WR_1.00> <WS_1.00> <SS_1.00>"
        );
        let fig = TokenVector::from_values(TokenValue::ONE, v("1.25"), v("1.05"), v("1.60"), TokenValue::ONE);
        assert_eq!(fig.render(), "<CR_1.00> <WL_1.25> <WR_1.05> <WS_1.60> <SS_1.00>");
        let mut second = TokenVector::neutral();
        second.cr = Token::exact(v("0.75"));
        assert!(second.render().starts_with("<CR_0.75> <WL_1.00> "));
        assert_eq!(TokenVector::parse(&fig.render()).unwrap(), fig);
        assert!(TokenVector::parse("<CR_1.00> <WL_1.00>").is_err());
        assert!(TokenVector::parse("<WL_1.00> <CR_1.00> <WR_1.00> <WS_1.00> <SS_1.00>").is_err());
    }

    #[test]
    fn word_length_ratio() {
        let lx = FrequencyLexicon::from_words(Language::En, ["the", "prizes", "trophies"]).unwrap();
        let syl = Syllabifier::heuristic(Language::En);
        let emb = HashingEmbedder::default();
        let t = compute_token_vector(&trophies(), "prizes", 2, &lx, &syl, &emb).unwrap();
        assert_eq!(t.wl.raw, 0.75);
        assert_eq!(t.wl.value, v("0.75"));
        assert_eq!(t.wr.raw, 2.0 / 3.0);
        assert_eq!(t.ws.raw, 1.0);
        assert_eq!(t.cr.value, v("0.75"));
        assert!(t.ss.raw > 0.0 && t.ss.raw < 1.0);
    }

    #[test]
    fn identity_substitution_is_neutral() {
        let inst = Instance::new(
            "m",
            Language::En,
            "The motive for the killings was not known.",
            "motive",
            vec![GoldEntry::new("reason", 1)],
        )
        .unwrap();
        let lx = FrequencyLexicon::from_words(Language::En, ["the", "reason"]).unwrap();
        let t = compute_token_vector(
            &inst,
            "motive",
            1,
            &lx,
            &Syllabifier::heuristic(Language::En),
            &HashingEmbedder::default(),
        )
        .unwrap();
        assert_eq!(t.values(), TokenVector::neutral().values());
        assert_eq!(t.ss.raw, 1.0);
        let r = compute_token_vector(
            &inst,
            "reason",
            3,
            &lx,
            &Syllabifier::heuristic(Language::En),
            &HashingEmbedder::default(),
        )
        .unwrap();
        assert_eq!(r.wl.raw, 1.0);
        assert_eq!(r.cr.value, v("0.50"));
    }

    #[test]
    fn errors_propagate() {
        let lx = FrequencyLexicon::from_words(Language::En, ["the"]).unwrap();
        let syl = Syllabifier::heuristic(Language::En);
        let emb = HashingEmbedder::default();
        assert!(matches!(
            compute_token_vector(&trophies(), " ", 1, &lx, &syl, &emb),
            Err(TokenError::EmptySubstitute)
        ));
        assert!(matches!(
            compute_token_vector(&trophies(), "cups", 0, &lx, &syl, &emb),
            Err(TokenError::ZeroPosition)
        ));
        assert!(matches!(
            compute_token_vector(&trophies(), "123", 1, &lx, &syl, &emb),
            Err(TokenError::Lexicon(_))
        ));
    }

    #[test]
    fn hashing_embedder_is_deterministic() {
        let e = HashingEmbedder::new(64);
        let a = e.embed("The cat sat.").unwrap();
        assert_eq!(a, e.embed("The cat sat.").unwrap());
        assert_eq!(a.len(), 64);
        let b = e.embed("Stock markets fell sharply today").unwrap();
        assert!(cosine(&a, &b).unwrap() < 1.0);
        assert!(e.embed("...").is_err());
    }
}
