//! Model input/target strings.
//!
//! A source string is laid out as
//!
//! ```text
//! simplify en: <CR_1.00> <WL_1.25> <WR_1.05> <WS_1.60> <SS_1.00> [#i-j ]<sentence with [T] word [/T]> </s> word[ : mlm1 mlm2 …]
//! ```
//!
//! The optional `#i-j` marker is the inclusive 0-based whitespace-token span
//! of the complex word.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_tokens::{compute_token_vector, EmbeddingProvider, Token, TokenError, TokenValue, TokenVector};
use crate::corpus::{Instance, Language, TokenSpan};
use crate::lexicon::{FrequencyLexicon, Syllabifier};

pub const OPEN_MARKER: &str = "[T]";
pub const CLOSE_MARKER: &str = "[/T]";
pub const SEPARATOR: &str = "</s>";

#[derive(Debug, Error)]
pub enum SerializeError {
    #[error("complex word {0:?} not found in sentence")]
    ComplexWordNotFound(String),
    #[error("input already contains the reserved marker {0:?}")]
    NestedMarker(&'static str),
    #[error("sentence starts with text that reads as a span marker: {0:?}")]
    AmbiguousSpanMarker(String),
    #[error("{given} MLM candidates exceed the limit of {limit}")]
    TooManyCandidates { given: usize, limit: usize },
    #[error("MLM candidate {0:?} is empty or contains whitespace")]
    InvalidCandidate(String),
    #[error("duplicate MLM candidate {0:?}")]
    DuplicateCandidate(String),
    #[error("candidate {candidate:?}: {source}")]
    Token {
        candidate: String,
        #[source]
        source: TokenError,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("missing language prefix")]
    MissingPrefix,
    #[error("malformed control tokens")]
    MalformedTokens,
    #[error("missing [T] ... [/T] markers")]
    MissingMarkers,
    #[error("more than one [T] ... [/T] pair")]
    DuplicateMarkers,
    #[error("missing </s> separator")]
    MissingSeparator,
    #[error("complex word after </s> ({after:?}) differs from the marked word ({marked:?})")]
    ComplexWordMismatch { marked: String, after: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerializationOptions {
    pub include_mlm: bool,
    pub mlm_top_k: usize,
    pub include_span_marker: bool,
}

impl Default for SerializationOptions {
    fn default() -> Self {
        SerializationOptions {
            include_mlm: true,
            mlm_top_k: 10,
            include_span_marker: false,
        }
    }
}

/// One model training (or evaluation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SerializedExample {
    pub instance_id: String,
    pub source: String,
    pub target: String,
    pub candidate: String,
    pub token_vector: TokenVector,
}

/// Components recovered from a source string.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSource {
    pub language: Language,
    pub tokens: TokenVector,
    pub span: Option<TokenSpan>,
    pub sentence: String,
    pub complex_word: String,
    pub mlm_candidates: Vec<String>,
}

fn looks_like_span_marker(word: &str) -> Option<TokenSpan> {
    let (start, end) = word.strip_prefix('#')?.split_once('-')?;
    let digits = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit());
    if !digits(start) || !digits(end) {
        return None;
    }
    Some(TokenSpan {
        start: start.parse().ok()?,
        end: end.parse().ok()?,
    })
}

fn check_reserved(text: &str) -> Result<(), SerializeError> {
    for marker in [OPEN_MARKER, CLOSE_MARKER, SEPARATOR] {
        if text.contains(marker) {
            return Err(SerializeError::NestedMarker(marker));
        }
    }
    Ok(())
}

fn check_candidates(candidates: &[String], options: &SerializationOptions) -> Result<(), SerializeError> {
    if candidates.len() > options.mlm_top_k {
        return Err(SerializeError::TooManyCandidates {
            given: candidates.len(),
            limit: options.mlm_top_k,
        });
    }
    let mut seen = HashSet::new();
    for c in candidates {
        if c.is_empty() || c.chars().any(char::is_whitespace) {
            return Err(SerializeError::InvalidCandidate(c.clone()));
        }
        check_reserved(c)?;
        if !seen.insert(c.as_str()) {
            return Err(SerializeError::DuplicateCandidate(c.clone()));
        }
    }
    Ok(())
}

/// Builds the single-line model input for an instance.
pub fn build_source(
    instance: &Instance,
    tokens: &TokenVector,
    mlm_candidates: &[String],
    options: &SerializationOptions,
) -> Result<String, SerializeError> {
    check_reserved(&instance.sentence)?;
    let range = crate::corpus::locate_word(&instance.sentence, &instance.complex_word)
        .ok_or_else(|| SerializeError::ComplexWordNotFound(instance.complex_word.clone()))?;
    if !options.include_span_marker {
        if let Some(first) = instance.sentence.split(' ').next() {
            if looks_like_span_marker(first).is_some() {
                return Err(SerializeError::AmbiguousSpanMarker(first.to_string()));
            }
        }
    }

    let sentence = &instance.sentence;
    let mut out = String::with_capacity(sentence.len() * 2 + 128);
    out.push_str(instance.language.prefix());
    out.push(' ');
    out.push_str(&tokens.render());
    out.push(' ');
    if options.include_span_marker {
        let span = instance.complex_word_span();
        out.push_str(&format!("#{}-{} ", span.start, span.end));
    }
    out.push_str(&sentence[..range.start]);
    out.push_str(OPEN_MARKER);
    out.push(' ');
    out.push_str(&sentence[range.clone()]);
    out.push(' ');
    out.push_str(CLOSE_MARKER);
    out.push_str(&sentence[range.end..]);
    out.push(' ');
    out.push_str(SEPARATOR);
    out.push(' ');
    out.push_str(&instance.complex_word);
    if options.include_mlm {
        check_candidates(mlm_candidates, options)?;
        if !mlm_candidates.is_empty() {
            out.push_str(" : ");
            out.push_str(&mlm_candidates.join(" "));
        }
    }
    Ok(out)
}

/// Source for validation or test: caller-supplied token values with CR
/// pinned to 1.00.
pub fn build_eval_source(
    instance: &Instance,
    tokens: &TokenVector,
    mlm_candidates: &[String],
    options: &SerializationOptions,
) -> Result<String, SerializeError> {
    let mut tokens = *tokens;
    tokens.cr = Token::exact(TokenValue::ONE);
    build_source(instance, &tokens, mlm_candidates, options)
}

/// Fans an instance out into one example per gold substitute, in gold order.
pub fn build_training_examples(
    instance: &Instance,
    lexicon: &FrequencyLexicon,
    syllabifier: &Syllabifier,
    embedder: &dyn EmbeddingProvider,
    mlm_candidates: &[String],
    options: &SerializationOptions,
) -> Result<Vec<SerializedExample>, SerializeError> {
    let mut seen = HashSet::new();
    let distinct = instance
        .gold
        .iter()
        .filter(|g| seen.insert(crate::metrics::normalize_term(&g.substitute)));
    distinct
        .enumerate()
        .map(|(i, gold)| {
            let tokens = compute_token_vector(instance, &gold.substitute, i + 1, lexicon, syllabifier, embedder)
                .map_err(|source| SerializeError::Token {
                    candidate: gold.substitute.clone(),
                    source,
                })?;
            Ok(SerializedExample {
                instance_id: instance.id.clone(),
                source: build_source(instance, &tokens, mlm_candidates, options)?,
                target: gold.substitute.clone(),
                candidate: gold.substitute.clone(),
                token_vector: tokens,
            })
        })
        .collect()
}

/// Recovers the components of a string produced by [`build_source`].
pub fn parse_source(text: &str) -> Result<ParsedSource, ParseError> {
    let (language, rest) = Language::ALL
        .iter()
        .find_map(|l| {
            text.strip_prefix(l.prefix())
                .and_then(|r| r.strip_prefix(' '))
                .map(|r| (*l, r))
        })
        .ok_or(ParseError::MissingPrefix)?;

    let mut parts = rest.splitn(6, ' ');
    let token_text: Vec<&str> = parts.by_ref().take(5).collect();
    let rest = parts.next().ok_or(ParseError::MalformedTokens)?;
    let tokens = TokenVector::parse(&token_text.join(" ")).map_err(|_| ParseError::MalformedTokens)?;

    let (span, rest) = match rest.split_once(' ') {
        Some((first, tail)) => match looks_like_span_marker(first) {
            Some(span) => (Some(span), tail),
            None => (None, rest),
        },
        None => (None, rest),
    };

    let separator = format!(" {SEPARATOR} ");
    let (body, tail) = rest.split_once(&separator).ok_or(ParseError::MissingSeparator)?;
    if tail.contains(SEPARATOR) {
        return Err(ParseError::MissingSeparator);
    }

    let open = format!("{OPEN_MARKER} ");
    let close = format!(" {CLOSE_MARKER}");
    let start = body.find(&open).ok_or(ParseError::MissingMarkers)?;
    let end = body.find(&close).ok_or(ParseError::MissingMarkers)?;
    if end < start + open.len() {
        return Err(ParseError::MissingMarkers);
    }
    if body.matches(OPEN_MARKER).count() > 1 || body.matches(CLOSE_MARKER).count() > 1 {
        return Err(ParseError::DuplicateMarkers);
    }
    let marked = &body[start + open.len()..end];
    let sentence = format!("{}{}{}", &body[..start], marked, &body[end + close.len()..]);

    let (after, candidates) = match tail.split_once(" : ") {
        Some((word, list)) => (word, list.split(' ').map(str::to_string).collect()),
        None => (tail, Vec::new()),
    };
    if after != marked {
        return Err(ParseError::ComplexWordMismatch {
            marked: marked.to_string(),
            after: after.to_string(),
        });
    }
    Ok(ParsedSource {
        language,
        tokens,
        span,
        sentence,
        complex_word: marked.to_string(),
        mlm_candidates: candidates,
    })
}

/// Writes `source ⇥ target` lines.
pub fn write_training_tsv<W: Write>(mut writer: W, examples: &[SerializedExample]) -> std::io::Result<()> {
    for e in examples {
        writeln!(writer, "{}\t{}", e.source, e.target)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_tokens::HashingEmbedder;
    use crate::corpus::{parse_instance, GoldEntry, InstanceFormat};

    const TROPHIES_SOURCE: &str = "simplify en: <CR_1.00> <WL_1.25> <WR_1.05> <WS_1.60> <SS_1.00> #8-8 I want to continue playing at the highest level and win as many [T] trophies [/T] as possible. </s> trophies : trophies titles trophy competitions championships tournaments prizes awards cups medals";

    fn trophies() -> Instance {
        let mut i = Instance::new(
            "en-test",
            Language::En,
            "I want to continue playing at the highest level and win as many trophies as possible.",
            "trophies",
            vec![GoldEntry::new("awards", 1)],
        )
        .unwrap();
        i.target_span = Some(TokenSpan { start: 8, end: 8 });
        i
    }

    fn trophies_mlm() -> Vec<String> {
        "trophies titles trophy competitions championships tournaments prizes awards cups medals"
            .split(' ')
            .map(String::from)
            .collect()
    }

    fn searched_tokens() -> TokenVector {
        let v = |s: &str| s.parse::<TokenValue>().unwrap();
        TokenVector::from_values(v("1.00"), v("1.25"), v("1.05"), v("1.60"), v("1.00"))
    }

    #[test]
    fn reproduces_inference_example() {
        let options = SerializationOptions {
            include_span_marker: true,
            ..Default::default()
        };
        let s = build_eval_source(&trophies(), &searched_tokens(), &trophies_mlm(), &options).unwrap();
        assert_eq!(s, TROPHIES_SOURCE);
    }

    #[test]
    fn parses_inference_example() {
        let p = parse_source(TROPHIES_SOURCE).unwrap();
        assert_eq!(p.language, Language::En);
        assert_eq!(p.complex_word, "trophies");
        assert_eq!(p.mlm_candidates.len(), 10);
        assert_eq!(p.span, Some(TokenSpan { start: 8, end: 8 }));
        assert_eq!(p.tokens, searched_tokens());
        assert_eq!(p.sentence, trophies().sentence);
    }

    #[test]
    fn mlm_option_semantics() {
        let off = SerializationOptions {
            include_mlm: false,
            ..Default::default()
        };
        let s = build_source(&trophies(), &TokenVector::neutral(), &trophies_mlm(), &off).unwrap();
        assert!(s.ends_with("</s> trophies"));
        let s = build_source(
            &trophies(),
            &TokenVector::neutral(),
            &[],
            &SerializationOptions::default(),
        )
        .unwrap();
        assert!(s.ends_with("as possible. </s> trophies"));
        assert!(!s.contains('#'));
    }

    #[test]
    fn language_prefixes() {
        let i = Instance::new(
            "es-1",
            Language::Es,
            "Estaban en la jurisdicción de Santiago del Estero y en Catamarca.",
            "jurisdicción",
            vec![GoldEntry::new("territorio", 5)],
        )
        .unwrap();
        let s = build_source(&i, &TokenVector::neutral(), &[], &SerializationOptions::default()).unwrap();
        assert!(s.starts_with("simplify es: <CR_1.00>"));
    }

    #[test]
    fn eval_source_pins_cr() {
        let mut t = searched_tokens();
        t.cr = Token::exact("0.25".parse().unwrap());
        let s = build_eval_source(&trophies(), &t, &[], &SerializationOptions::default()).unwrap();
        assert!(s.starts_with("simplify en: <CR_1.00> <WL_1.25>"));
        let s = build_eval_source(
            &trophies(),
            &TokenVector::neutral(),
            &[],
            &SerializationOptions::default(),
        )
        .unwrap();
        assert!(s.contains("<CR_1.00> <WL_1.00> <WR_1.00> <WS_1.00> <SS_1.00>"));
    }

    #[test]
    fn build_errors() {
        let opts = SerializationOptions::default();
        let mut bad = trophies();
        bad.sentence = "win [T] trophies".into();
        assert!(matches!(
            build_source(&bad, &TokenVector::neutral(), &[], &opts),
            Err(SerializeError::NestedMarker("[T]"))
        ));
        let mut missing = trophies();
        missing.complex_word = "medals".into();
        assert!(matches!(
            build_source(&missing, &TokenVector::neutral(), &[], &opts),
            Err(SerializeError::ComplexWordNotFound(_))
        ));
        let many: Vec<String> = (0..11).map(|i| format!("w{i}")).collect();
        assert!(matches!(
            build_source(&trophies(), &TokenVector::neutral(), &many, &opts),
            Err(SerializeError::TooManyCandidates { given: 11, limit: 10 })
        ));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            build_source(&trophies(), &TokenVector::neutral(), &dup, &opts),
            Err(SerializeError::DuplicateCandidate(_))
        ));
        let spaced = vec!["el poder".to_string()];
        assert!(matches!(
            build_source(&trophies(), &TokenVector::neutral(), &spaced, &opts),
            Err(SerializeError::InvalidCandidate(_))
        ));
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_source("hello"), Err(ParseError::MissingPrefix));
        let no_sep = TROPHIES_SOURCE.replace(" </s> ", " ");
        assert_eq!(parse_source(&no_sep), Err(ParseError::MissingSeparator));
        let no_marker = TROPHIES_SOURCE.replace("[T] ", "");
        assert_eq!(parse_source(&no_marker), Err(ParseError::MissingMarkers));
        let bad_tokens = TROPHIES_SOURCE.replace("<WL_1.25>", "<WL_1.23>");
        assert_eq!(parse_source(&bad_tokens), Err(ParseError::MalformedTokens));
        let mismatch = TROPHIES_SOURCE.replace("</s> trophies :", "</s> medals :");
        assert!(matches!(
            parse_source(&mismatch),
            Err(ParseError::ComplexWordMismatch { .. })
        ));
    }

    #[test]
    fn training_fan_out() {
        let line = "The motive for the killings was not known.\tmotive\treason:16\tincentive:2\tintention:2\taim:1\tcause:1\tmotive:1\tinspiration:1\tobject:1";
        let instance = parse_instance(line, InstanceFormat::TsarAggregated, Language::En, 1).unwrap();
        let lx = FrequencyLexicon::from_words(
            Language::En,
            ["the", "for", "was", "not", "reason", "cause", "aim", "object", "motive"],
        )
        .unwrap();
        let examples = build_training_examples(
            &instance,
            &lx,
            &Syllabifier::heuristic(Language::En),
            &HashingEmbedder::default(),
            &[],
            &SerializationOptions::default(),
        )
        .unwrap();
        assert_eq!(examples.len(), 8);
        let cr: Vec<String> = examples.iter().map(|e| e.token_vector.cr.value.to_string()).collect();
        assert_eq!(cr, ["1.00", "0.75", "0.50", "0.25", "0.10", "0.10", "0.10", "0.10"]);
        assert_eq!(examples[0].target, "reason");
        let targets: Vec<&str> = examples.iter().map(|e| e.target.as_str()).collect();
        let gold: Vec<&str> = instance.gold.iter().map(|g| g.substitute.as_str()).collect();
        assert_eq!(targets, gold);
        let mut buf = Vec::new();
        write_training_tsv(&mut buf, &examples).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 8);
        assert!(text.lines().next().unwrap().ends_with("</s> motive\treason"));
    }
}
