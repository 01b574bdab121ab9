use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::Context;
use lexsimp_core::generation::{
    read_predictions, CandidateGenerator, FillMaskGenerator, LexiconBaselineGenerator, MockTableGenerator,
};
use lexsimp_core::sidecar::{SidecarClient, SidecarFillMask, SidecarSeq2Seq};
use lexsimp_core::{FrequencyLexicon, Language};
use serde::Serialize;

use crate::config::Settings;
use crate::errors::UsageError;

/// `kind=value` on the command line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum BackendSpec {
    /// Prediction file (sentence, complex word, candidates...) replayed as-is.
    MockTable(PathBuf),
    /// Synonym table ranked by the frequency lexicon.
    Lexicon(PathBuf),
    Seq2seq(String),
    FillMask(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, value) = s
            .split_once('=')
            .ok_or_else(|| format!("expected KIND=VALUE, got {s:?}"))?;
        if value.is_empty() {
            return Err(format!("empty value in backend {s:?}"));
        }
        match kind {
            "mock-table" => Ok(BackendSpec::MockTable(value.into())),
            "lexicon" => Ok(BackendSpec::Lexicon(value.into())),
            "seq2seq" => Ok(BackendSpec::Seq2seq(value.into())),
            "fill-mask" => Ok(BackendSpec::FillMask(value.into())),
            other => Err(format!(
                "unknown backend kind {other:?} (expected mock-table, lexicon, seq2seq or fill-mask)"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::MockTable(p) => write!(f, "mock-table={}", p.display()),
            BackendSpec::Lexicon(p) => write!(f, "lexicon={}", p.display()),
            BackendSpec::Seq2seq(m) => write!(f, "seq2seq={m}"),
            BackendSpec::FillMask(m) => write!(f, "fill-mask={m}"),
        }
    }
}

impl BackendSpec {
    pub fn input_files(&self) -> Vec<PathBuf> {
        match self {
            BackendSpec::MockTable(p) | BackendSpec::Lexicon(p) => vec![p.clone()],
            _ => vec![],
        }
    }

    pub fn needs_sidecar(&self) -> bool {
        matches!(self, BackendSpec::Seq2seq(_) | BackendSpec::FillMask(_))
    }
}

pub fn sidecar_client(settings: &Settings) -> anyhow::Result<SidecarClient> {
    let url = settings.sidecar_url.as_deref().ok_or_else(|| {
        UsageError(
            "no sidecar URL: pass --sidecar-url, set sidecar_url in the config file or LEXSIMP_SIDECAR_URL".into(),
        )
    })?;
    Ok(SidecarClient::new(url))
}

/// Sidecar client that answered its health check.
pub fn live_sidecar(settings: &Settings) -> anyhow::Result<SidecarClient> {
    let client = sidecar_client(settings)?;
    client.health()?;
    Ok(client)
}

pub fn frequency_lexicon(
    explicit: Option<&PathBuf>,
    settings: &Settings,
    language: Language,
) -> anyhow::Result<(FrequencyLexicon, PathBuf)> {
    const MISSING: &str =
        "no frequency lexicon: pass --freq, --freq-dir, set freq_dir in the config file or LEXSIMP_FREQ_DIR";
    let path = match (explicit, &settings.freq_dir) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(FrequencyLexicon::file_name(language)),
        (None, None) => return Err(UsageError(MISSING.into()).into()),
    };
    let lexicon =
        FrequencyLexicon::from_path(language, &path).with_context(|| format!("loading {}", path.display()))?;
    Ok((lexicon, path))
}

/// Instantiates a backend. Sidecar backends are health-checked first so an
/// unreachable sidecar fails fast instead of once per instance.
pub fn build(
    spec: &BackendSpec,
    settings: &Settings,
    lexicon: Option<&FrequencyLexicon>,
    check_health: bool,
) -> anyhow::Result<Box<dyn CandidateGenerator>> {
    let client = || {
        if check_health {
            live_sidecar(settings)
        } else {
            sidecar_client(settings)
        }
    };
    Ok(match spec {
        BackendSpec::MockTable(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let rows = read_predictions(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
            Box::new(MockTableGenerator::from_predictions(&rows))
        }
        BackendSpec::Lexicon(path) => {
            let lexicon = lexicon.cloned().ok_or_else(|| {
                UsageError("the lexicon backend needs a frequency lexicon (--freq or --freq-dir)".into())
            })?;
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let synonyms = LexiconBaselineGenerator::read_synonyms(BufReader::new(file))?;
            Box::new(LexiconBaselineGenerator::new(synonyms, lexicon))
        }
        BackendSpec::Seq2seq(model) => Box::new(SidecarSeq2Seq::new(client()?, model)),
        BackendSpec::FillMask(model) => Box::new(FillMaskGenerator::new(SidecarFillMask::new(client()?, model))),
    })
}
