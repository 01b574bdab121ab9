//! Word frequency ranks and syllable counts.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::corpus::Language;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("empty word")]
    EmptyWord,
    #[error("{0:?} contains no alphabetic characters")]
    NotAlphabetic(String),
    #[error("frequency list is empty")]
    EmptyVocabulary,
    #[error("line {line}: malformed hyphenation entry {entry:?}")]
    BadHyphenation { line: usize, entry: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A frequency-ordered vocabulary; the most frequent word has rank 1.
#[derive(Debug, Clone)]
pub struct FrequencyLexicon {
    language: Language,
    words: Vec<String>,
    ranks: HashMap<String, usize>,
}

impl FrequencyLexicon {
    /// Builds a lexicon from words listed most-frequent first. Entries are
    /// lowercased; a repeated entry keeps its first (better) rank.
    pub fn from_words<I, S>(language: Language, words: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lexicon = FrequencyLexicon {
            language,
            words: Vec::new(),
            ranks: HashMap::new(),
        };
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || lexicon.ranks.contains_key(&w) {
                continue;
            }
            lexicon.words.push(w.clone());
            lexicon.ranks.insert(w, lexicon.words.len());
        }
        if lexicon.words.is_empty() {
            return Err(LexiconError::EmptyVocabulary);
        }
        Ok(lexicon)
    }

    /// Reads a word list, one entry per line. Only the first whitespace
    /// field is used, so `word count` and embedding-style lines also load.
    pub fn from_reader<R: BufRead>(language: Language, reader: R) -> Result<Self, LexiconError> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if let Some(w) = line.split_whitespace().next() {
                words.push(w.to_string());
            }
        }
        Self::from_words(language, words)
    }

    pub fn from_path(language: Language, path: &Path) -> Result<Self, LexiconError> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(language, std::io::BufReader::new(file))
    }

    /// Conventional file name for a language's list inside a directory.
    pub fn file_name(language: Language) -> String {
        format!("freq.{}.txt", language.code())
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// 1-based rank of the lowercased word; unknown words get `|V| + 1`.
    pub fn rank_of(&self, word: &str) -> Result<usize, LexiconError> {
        let key = word.trim().to_lowercase();
        if key.is_empty() {
            return Err(LexiconError::EmptyWord);
        }
        Ok(self.ranks.get(&key).copied().unwrap_or(self.words.len() + 1))
    }
}

/// Syllable counting strategy.
#[derive(Debug, Clone)]
pub enum SyllableBackend {
    /// Vowel-group counting with per-language vowel sets.
    Heuristic,
    /// Hyphenated forms (`hy-phen-a-tion`) looked up per lowercased word,
    /// with the heuristic as fallback for words that are not listed.
    Dictionary(HashMap<String, u32>),
}

#[derive(Debug, Clone)]
pub struct Syllabifier {
    language: Language,
    backend: SyllableBackend,
}

impl Syllabifier {
    pub fn heuristic(language: Language) -> Self {
        Syllabifier {
            language,
            backend: SyllableBackend::Heuristic,
        }
    }

    /// Loads `word ⇥ hy-phen-at-ed` lines.
    pub fn from_hyphenation_reader<R: BufRead>(language: Language, reader: R) -> Result<Self, LexiconError> {
        let mut table = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (word, hyphenated) = line.split_once('\t').ok_or_else(|| LexiconError::BadHyphenation {
                line: i + 1,
                entry: line.clone(),
            })?;
            let pieces = hyphenated.trim().split('-').filter(|p| !p.is_empty()).count() as u32;
            if pieces == 0 {
                return Err(LexiconError::BadHyphenation {
                    line: i + 1,
                    entry: line,
                });
            }
            table.insert(word.trim().to_lowercase(), pieces);
        }
        Ok(Syllabifier {
            language,
            backend: SyllableBackend::Dictionary(table),
        })
    }

    pub fn language(&self) -> Language {
        self.language
    }

    /// Syllables in `word`. Multiword and hyphenated inputs are summed over
    /// their alphabetic runs.
    pub fn count(&self, word: &str) -> Result<u32, LexiconError> {
        if word.trim().is_empty() {
            return Err(LexiconError::EmptyWord);
        }
        let lowered = word.to_lowercase();
        if let SyllableBackend::Dictionary(table) = &self.backend {
            let key = lowered.trim_matches(|c: char| !c.is_alphabetic());
            if let Some(&n) = table.get(key) {
                return Ok(n);
            }
        }
        let runs: Vec<&str> = lowered
            .split(|c: char| !c.is_alphabetic())
            .filter(|r| !r.is_empty())
            .collect();
        if runs.is_empty() {
            return Err(LexiconError::NotAlphabetic(word.to_string()));
        }
        Ok(runs.iter().map(|r| heuristic_count(r, self.language)).sum())
    }
}

/// Convenience wrapper over the heuristic backend.
pub fn syllable_count(word: &str, language: Language) -> Result<u32, LexiconError> {
    Syllabifier::heuristic(language).count(word)
}

fn is_vowel(c: char, language: Language) -> bool {
    match language {
        Language::En => "aeiouy".contains(c),
        Language::Es => "aeiouáéíóúü".contains(c),
        Language::Pt => "aeiouáéíóúâêôãõàü".contains(c),
    }
}

/// Vowels that never merge with a neighbour into one syllable in Spanish
/// and Portuguese: the open vowels and stressed `í`/`ú`.
fn breaks_diphthong(c: char) -> bool {
    "aeoáéóâêôãõàíú".contains(c)
}

fn heuristic_count(word: &str, language: Language) -> u32 {
    let chars: Vec<char> = word.chars().collect();
    let mut count = 0u32;
    let mut prev: Option<char> = None;
    for (i, &c) in chars.iter().enumerate() {
        // a final y is vowel-like in Spanish (rey, hay)
        let vowel = is_vowel(c, language) || (language == Language::Es && c == 'y' && i + 1 == chars.len() && i > 0);
        match (vowel, prev) {
            (true, None) => count += 1,
            (true, Some(p)) if language != Language::En && breaks_diphthong(p) && breaks_diphthong(c) => {
                // hiatus: two strong vowels belong to different syllables
                count += 1
            }
            _ => {}
        }
        prev = if vowel { Some(c) } else { None };
    }
    if language == Language::En && count > 1 && has_silent_final_e(&chars) {
        count -= 1;
    }
    count.max(1)
}

fn has_silent_final_e(chars: &[char]) -> bool {
    let n = chars.len();
    if n < 3 || chars[n - 1] != 'e' {
        return false;
    }
    let before = chars[n - 2];
    if is_vowel(before, Language::En) {
        return false;
    }
    // consonant + "le" keeps its syllable (ta-ble)
    !(before == 'l' && !is_vowel(chars[n - 3], Language::En))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexicon() -> FrequencyLexicon {
        FrequencyLexicon::from_words(Language::En, ["the", "of", "reason"]).unwrap()
    }

    #[test]
    fn rank_examples() {
        let lx = lexicon();
        assert_eq!(lx.rank_of("reason").unwrap(), 3);
        assert_eq!(lx.rank_of("zzxqy").unwrap(), 4);
        assert_eq!(lx.rank_of("The").unwrap(), 1);
        assert!(matches!(lx.rank_of("  "), Err(LexiconError::EmptyWord)));
    }

    #[test]
    fn duplicates_keep_contiguous_ranks() {
        let lx = FrequencyLexicon::from_words(Language::En, ["the", "The", "of", "", "a"]).unwrap();
        assert_eq!(lx.len(), 3);
        assert_eq!(lx.rank_of("a").unwrap(), 3);
        assert!(matches!(
            FrequencyLexicon::from_words(Language::En, Vec::<&str>::new()),
            Err(LexiconError::EmptyVocabulary)
        ));
    }

    #[test]
    fn reader_takes_first_field() {
        let text = "the 1000\nof 900\n\nreason 12\n";
        let lx = FrequencyLexicon::from_reader(Language::En, std::io::Cursor::new(text)).unwrap();
        assert_eq!(lx.words(), ["the", "of", "reason"]);
        assert_eq!(FrequencyLexicon::file_name(Language::Pt), "freq.pt.txt");
    }

    #[test]
    fn english_syllables() {
        let cases = [
            ("motive", 2),
            ("a", 1),
            ("reason", 2),
            ("trophies", 2),
            ("trophy", 2),
            ("prizes", 2),
            ("awards", 2),
            ("table", 2),
            ("free", 1),
            ("the", 1),
            ("competitions", 4),
        ];
        for (w, n) in cases {
            assert_eq!(syllable_count(w, Language::En).unwrap(), n, "{w}");
        }
    }

    #[test]
    fn romance_syllables() {
        assert_eq!(syllable_count("praga", Language::Pt).unwrap(), 2);
        assert_eq!(syllable_count("peste", Language::Pt).unwrap(), 2);
        assert_eq!(syllable_count("jurisdicción", Language::Es).unwrap(), 4);
        assert_eq!(syllable_count("territorio", Language::Es).unwrap(), 4);
        assert_eq!(syllable_count("poeta", Language::Es).unwrap(), 3);
        assert_eq!(syllable_count("día", Language::Es).unwrap(), 2);
        assert_eq!(syllable_count("el territorio", Language::Es).unwrap(), 5);
    }

    #[test]
    fn syllable_errors() {
        assert!(matches!(syllable_count("", Language::En), Err(LexiconError::EmptyWord)));
        assert!(matches!(
            syllable_count("123!", Language::En),
            Err(LexiconError::NotAlphabetic(_))
        ));
        assert_eq!(syllable_count("\"motive,\"", Language::En).unwrap(), 2);
    }

    #[test]
    fn dictionary_backend_overrides_heuristic() {
        let text = "fire\tfi-re\nepidemia\te-pi-de-mi-a\n";
        let s = Syllabifier::from_hyphenation_reader(Language::Pt, std::io::Cursor::new(text)).unwrap();
        assert_eq!(s.count("Epidemia").unwrap(), 5);
        assert_eq!(s.count("praga").unwrap(), 2);
        let bad = Syllabifier::from_hyphenation_reader(Language::Pt, std::io::Cursor::new("nope\n"));
        assert!(matches!(bad, Err(LexiconError::BadHyphenation { line: 1, .. })));
    }
}
