use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Args;
use lexsimp_core::control_tokens::{EmbeddingProvider, HashingEmbedder};
use lexsimp_core::corpus::{dataset_stats, read_dataset, read_jsonl, split_dataset, write_jsonl};
use lexsimp_core::generation::{
    extract_mlm_candidates, generate_candidates, rank_generators_by_potential, read_predictions, write_predictions,
    GenerationError, PredictionRow, DEFAULT_BEAM_WIDTH, DEFAULT_LIMIT,
};
use lexsimp_core::metrics::{evaluate_all, GoldView};
use lexsimp_core::serializer::{build_eval_source, build_training_examples, write_training_tsv};
use lexsimp_core::sidecar::{SidecarEmbedder, SidecarFillMask};
use lexsimp_core::token_search::{
    evaluate_token_set, read_trials, search_with_sampler, write_trial, MlmTable, UniformGridSampler, DEFAULT_TOP_N,
    DEFAULT_TRIALS,
};
use lexsimp_core::{
    Instance, InstanceFormat, Language, RunManifest, SearchConfig, SerializationOptions, SplitSpec, Syllabifier,
    TokenValue, TokenValueSet,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::backends::{self, BackendSpec};
use crate::config::Settings;
use crate::errors::{BackendFailure, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Tsv(InstanceFormat),
    Jsonl,
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "jsonl" {
            return Ok(DatasetFormat::Jsonl);
        }
        s.parse()
            .map(DatasetFormat::Tsv)
            .map_err(|e: lexsimp_core::corpus::CorpusError| {
                format!("{e} (expected tsar_raw, tsar_aggregated, rank_prefixed or jsonl)")
            })
    }
}

impl DatasetFormat {
    fn name(self) -> &'static str {
        match self {
            DatasetFormat::Jsonl => "jsonl",
            DatasetFormat::Tsv(InstanceFormat::TsarRaw) => "tsar_raw",
            DatasetFormat::Tsv(InstanceFormat::TsarAggregated) => "tsar_aggregated",
            DatasetFormat::Tsv(InstanceFormat::RankPrefixed) => "rank_prefixed",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DatasetArgs {
    /// Dataset file: TSV in one of the corpus formats, or JSONL instances.
    #[arg(long)]
    pub dataset: PathBuf,
    /// tsar_raw, tsar_aggregated, rank_prefixed or jsonl [default: jsonl for
    /// *.jsonl files, tsar_aggregated otherwise]
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long, default_value = "en")]
    pub language: Language,
}

impl DatasetArgs {
    fn format(&self) -> DatasetFormat {
        resolve_format(&self.dataset, self.format)
    }

    fn load(&self) -> anyhow::Result<Vec<Instance>> {
        load_dataset(&self.dataset, self.format(), self.language)
    }

    fn settings(&self) -> serde_json::Value {
        json!({"format": self.format().name(), "language": self.language.code()})
    }
}

fn resolve_format(path: &Path, format: Option<DatasetFormat>) -> DatasetFormat {
    format.unwrap_or_else(|| match path.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => DatasetFormat::Jsonl,
        _ => DatasetFormat::Tsv(InstanceFormat::TsarAggregated),
    })
}

fn load_dataset(path: &Path, format: DatasetFormat, language: Language) -> anyhow::Result<Vec<Instance>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let reader = BufReader::new(file);
    let instances = match format {
        DatasetFormat::Jsonl => read_jsonl(reader),
        DatasetFormat::Tsv(f) => read_dataset(reader, f, language),
    }
    .with_context(|| format!("reading {}", path.display()))?;
    if instances.is_empty() {
        bail!("{} contains no instances", path.display());
    }
    Ok(instances)
}

#[derive(Args, Debug, Clone)]
pub struct SerializationArgs {
    /// Leave the MLM candidate section out of model inputs.
    #[arg(long)]
    pub no_mlm: bool,
    #[arg(long, default_value_t = 10)]
    pub mlm_top_k: usize,
    /// Emit the `#i-j` target span marker.
    #[arg(long)]
    pub span_marker: bool,
}

impl SerializationArgs {
    fn options(&self) -> SerializationOptions {
        SerializationOptions {
            include_mlm: !self.no_mlm,
            mlm_top_k: self.mlm_top_k,
            include_span_marker: self.span_marker,
        }
    }
}

/// One line of an MLM candidate file.
#[derive(Debug, Serialize, Deserialize)]
struct MlmRecord {
    id: String,
    candidates: Vec<String>,
}

fn read_mlm_table(path: &Path) -> anyhow::Result<MlmTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut table = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MlmRecord =
            serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
        table.insert(record.id, record.candidates);
    }
    Ok(table)
}

fn load_mlm(path: Option<&PathBuf>) -> anyhow::Result<MlmTable> {
    path.map(|p| read_mlm_table(p))
        .transpose()
        .map(Option::unwrap_or_default)
}

/// Output files of one command plus the manifest describing them.
struct Artifacts {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Artifacts {
    fn new(dir: &Path, command: &str, inputs: &[PathBuf], settings: serde_json::Value) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            manifest: RunManifest::new(command, inputs, settings).context("hashing inputs")?,
        })
    }

    fn for_file(out: &Path, command: &str, inputs: &[PathBuf], settings: serde_json::Value) -> anyhow::Result<Self> {
        let dir = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        Self::new(dir, command, inputs, settings)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.manifest.record_output(&path)?;
        Ok(path)
    }

    fn record(&mut self, path: &Path) -> anyhow::Result<()> {
        self.manifest.record_output(path)?;
        Ok(())
    }

    fn finish(self) -> anyhow::Result<()> {
        self.manifest.write_to_dir(&self.dir)?;
        Ok(())
    }
}

fn file_name(path: &Path) -> anyhow::Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| UsageError(format!("{} is not a file path", path.display())).into())
}

// ---------------------------------------------------------------- stats

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
}

pub fn stats(args: &StatsArgs) -> anyhow::Result<()> {
    let instances = args.data.load()?;
    let s = dataset_stats(&instances)?;
    println!("instances={}", s.instance_count);
    println!("min_tokens={}", s.min_tokens);
    println!("max_tokens={}", s.max_tokens);
    println!("avg_tokens={:.2}", s.avg_tokens);
    Ok(())
}

// ---------------------------------------------------------------- split

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[arg(long, default_value_t = 0.70)]
    pub train: f64,
    #[arg(long, default_value_t = 0.15)]
    pub validation: f64,
    #[arg(long, default_value_t = 0.15)]
    pub test: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Receives train.jsonl, validation.jsonl, test.jsonl and the manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn split(args: &SplitArgs) -> anyhow::Result<()> {
    let spec = SplitSpec::new(args.train, args.validation, args.test, args.seed);
    spec.validate().map_err(|e| UsageError(e.to_string()))?;
    let instances = args.data.load()?;
    let parts = split_dataset(&instances, &spec)?;
    let mut settings = args.data.settings();
    settings["split"] = serde_json::to_value(spec)?;
    let mut out = Artifacts::new(
        &args.out_dir,
        "split",
        std::slice::from_ref(&args.data.dataset),
        settings,
    )?;
    for (name, part) in [
        ("train", &parts.train),
        ("validation", &parts.validation),
        ("test", &parts.test),
    ] {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, part)?;
        out.write(&format!("{name}.jsonl"), &buf)?;
        println!("{name}={}", part.len());
    }
    out.finish()
}

// ---------------------------------------------------------------- preprocess

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Training pairs, one `source<TAB>target` per line.
    #[arg(long)]
    pub out: PathBuf,
    /// Frequency-ordered word list (one word per line, most frequent first).
    #[arg(long)]
    pub freq: Option<PathBuf>,
    /// `word<TAB>hy-phen-a-tion` dictionary replacing the heuristic
    /// syllable counter.
    #[arg(long)]
    pub hyphenation: Option<PathBuf>,
    /// MLM candidate file from `mlm-candidates`.
    #[arg(long)]
    pub mlm: Option<PathBuf>,
    #[command(flatten)]
    pub serialization: SerializationArgs,
}

pub fn preprocess(args: &PreprocessArgs, settings: &Settings) -> anyhow::Result<()> {
    let language = args.data.language;
    let instances = args.data.load()?;
    let (lexicon, freq_path) = backends::frequency_lexicon(args.freq.as_ref(), settings, language)?;
    let syllabifier = match &args.hyphenation {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Syllabifier::from_hyphenation_reader(language, BufReader::new(file))?
        }
        None => Syllabifier::heuristic(language),
    };
    let embedder: Box<dyn EmbeddingProvider> = match &settings.embed_model {
        Some(model) => Box::new(SidecarEmbedder::new(backends::live_sidecar(settings)?, model)),
        None => Box::new(HashingEmbedder::default()),
    };
    let mlm = load_mlm(args.mlm.as_ref())?;
    let options = args.serialization.options();

    let examples: Vec<_> = instances
        .par_iter()
        .map(|instance| {
            let candidates = mlm.get(&instance.id).map(Vec::as_slice).unwrap_or(&[]);
            build_training_examples(
                instance,
                &lexicon,
                &syllabifier,
                embedder.as_ref(),
                candidates,
                &options,
            )
            .with_context(|| format!("instance {}", instance.id))
        })
        .collect::<anyhow::Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut inputs = vec![args.data.dataset.clone(), freq_path];
    inputs.extend(args.hyphenation.clone());
    inputs.extend(args.mlm.clone());
    let mut settings_json = args.data.settings();
    settings_json["serialization"] = serde_json::to_value(options)?;
    settings_json["embedder"] = json!(embedder.backend_id());
    let mut out = Artifacts::for_file(&args.out, "preprocess", &inputs, settings_json)?;
    let mut buf = Vec::new();
    write_training_tsv(&mut buf, &examples)?;
    out.write(&file_name(&args.out)?, &buf)?;
    out.finish()?;
    println!("instances={}", instances.len());
    println!("examples={}", examples.len());
    Ok(())
}

// ---------------------------------------------------------------- mlm-candidates

#[derive(Args, Debug)]
pub struct MlmCandidatesArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Fill-mask model served by the sidecar.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// JSONL output, one `{"id", "candidates"}` object per instance.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn mlm_candidates(args: &MlmCandidatesArgs, settings: &Settings) -> anyhow::Result<()> {
    let instances = args.data.load()?;
    let client = SidecarFillMask::new(backends::live_sidecar(settings)?, &args.model);
    let records = instances
        .par_iter()
        .map(|i| {
            let candidates = extract_mlm_candidates(&i.sentence, &i.complex_word, args.k, &client)
                .with_context(|| format!("instance {}", i.id))?;
            Ok(MlmRecord {
                id: i.id.clone(),
                candidates,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let mut buf = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut settings_json = args.data.settings();
    settings_json["model"] = json!(args.model);
    settings_json["k"] = json!(args.k);
    settings_json["sidecar_url"] = json!(settings.sidecar_url);
    let mut out = Artifacts::for_file(
        &args.out,
        "mlm-candidates",
        std::slice::from_ref(&args.data.dataset),
        settings_json,
    )?;
    out.write(&file_name(&args.out)?, &buf)?;
    out.finish()
}

// ---------------------------------------------------------------- generate

#[derive(Args, Debug, Clone)]
pub struct GenerationArgs {
    /// KIND=VALUE with KIND one of mock-table, lexicon, seq2seq, fill-mask.
    #[arg(long)]
    pub backend: BackendSpec,
    #[arg(long)]
    pub mlm: Option<PathBuf>,
    /// Frequency list for the lexicon backend.
    #[arg(long)]
    pub freq: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    pub beam_width: usize,
    /// Candidates kept per instance after filtering.
    #[arg(long, default_value_t = DEFAULT_LIMIT)]
    pub limit: usize,
    #[command(flatten)]
    pub serialization: SerializationArgs,
}

struct PreparedBackend {
    generator: Box<dyn lexsimp_core::CandidateGenerator>,
    mlm: MlmTable,
    inputs: Vec<PathBuf>,
}

impl GenerationArgs {
    fn prepare(&self, settings: &Settings, language: Language) -> anyhow::Result<PreparedBackend> {
        let mut inputs = self.backend.input_files();
        let lexicon = match (&self.backend, &self.freq, &settings.freq_dir) {
            (BackendSpec::Lexicon(_), _, _) | (_, Some(_), _) => {
                let (lexicon, path) = backends::frequency_lexicon(self.freq.as_ref(), settings, language)?;
                inputs.push(path);
                Some(lexicon)
            }
            _ => None,
        };
        let generator = backends::build(&self.backend, settings, lexicon.as_ref(), true)?;
        inputs.extend(self.mlm.clone());
        Ok(PreparedBackend {
            generator,
            mlm: load_mlm(self.mlm.as_ref())?,
            inputs,
        })
    }

    fn settings(&self, settings: &Settings) -> anyhow::Result<serde_json::Value> {
        let mut s = json!({
            "backend": self.backend,
            "beam_width": self.beam_width,
            "limit": self.limit,
            "serialization": self.serialization.options(),
        });
        if self.backend.needs_sidecar() {
            s["sidecar_url"] = json!(settings.sidecar_url);
        }
        Ok(s)
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long, default_value = "1.00")]
    pub wl: TokenValue,
    #[arg(long, default_value = "1.00")]
    pub wr: TokenValue,
    #[arg(long, default_value = "1.00")]
    pub ws: TokenValue,
    #[arg(long, default_value = "1.00")]
    pub ss: TokenValue,
    /// Prediction file: sentence, complex word, then candidates, tab-separated.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn generate(args: &GenerateArgs, settings: &Settings) -> anyhow::Result<()> {
    let instances = args.data.load()?;
    let backend = args.generation.prepare(settings, args.data.language)?;
    let set = TokenValueSet {
        wl: args.wl,
        wr: args.wr,
        ws: args.ws,
        ss: args.ss,
    };
    let tokens = set.to_vector();
    let options = args.generation.serialization.options();
    let rows = instances
        .par_iter()
        .map(|i| {
            let mlm = backend.mlm.get(&i.id).map(Vec::as_slice).unwrap_or(&[]);
            let source = build_eval_source(i, &tokens, mlm, &options).with_context(|| format!("instance {}", i.id))?;
            let candidates = match generate_candidates(
                i,
                backend.generator.as_ref(),
                &source,
                args.generation.beam_width,
                args.generation.limit,
            ) {
                Ok(list) => list.candidates,
                Err(GenerationError::NoCandidates { .. }) => {
                    log::warn!("no candidates for instance {}", i.id);
                    Vec::new()
                }
                Err(e) => return Err(anyhow::Error::new(e).context(format!("instance {}", i.id))),
            };
            Ok(PredictionRow {
                sentence: i.sentence.clone(),
                complex_word: i.complex_word.clone(),
                candidates,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut inputs = vec![args.data.dataset.clone()];
    inputs.extend(backend.inputs);
    let mut settings_json = args.data.settings();
    settings_json["generation"] = args.generation.settings(settings)?;
    settings_json["tokens"] = json!(tokens.render());
    let mut out = Artifacts::for_file(&args.out, "generate", &inputs, settings_json)?;
    let mut buf = Vec::new();
    write_predictions(&mut buf, &rows)?;
    out.write(&file_name(&args.out)?, &buf)?;
    out.finish()?;
    println!("instances={}", rows.len());
    Ok(())
}

// ---------------------------------------------------------------- score

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Prediction file, aligned line by line with the gold file.
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long, default_value = "en")]
    pub language: Language,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn same_text(a: &str, b: &str) -> bool {
    a.split_whitespace().eq(b.split_whitespace())
}

pub fn score(args: &ScoreArgs) -> anyhow::Result<()> {
    let format = resolve_format(&args.gold, args.format);
    let gold = load_dataset(&args.gold, format, args.language)?;
    let file = File::open(&args.pred).with_context(|| format!("opening {}", args.pred.display()))?;
    let rows = read_predictions(BufReader::new(file)).with_context(|| format!("reading {}", args.pred.display()))?;
    if rows.len() != gold.len() {
        bail!(
            "{} has {} rows but the gold file has {} instances",
            args.pred.display(),
            rows.len(),
            gold.len()
        );
    }
    for (n, (row, instance)) in rows.iter().zip(&gold).enumerate() {
        if !same_text(&row.sentence, &instance.sentence) || !same_text(&row.complex_word, &instance.complex_word) {
            bail!("prediction row {} does not match gold instance {}", n + 1, instance.id);
        }
    }
    let predictions: Vec<Vec<String>> = rows.into_iter().map(|r| r.candidates).collect();
    let views: Vec<GoldView> = gold.iter().map(GoldView::from_instance).collect();
    let report = evaluate_all(&predictions, &views)?;
    let text = report.to_key_values();
    print!("{text}");
    if let Some(path) = &args.out {
        let settings = json!({"format": format.name(), "language": args.language.code()});
        let mut out = Artifacts::for_file(path, "score", &[args.pred.clone(), args.gold.clone()], settings)?;
        out.write(&file_name(path)?, text.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}

// ---------------------------------------------------------------- search-tokens

pub const SEARCH_LOG: &str = "search_log.jsonl";
pub const TOP_SETS: &str = "top_sets.json";
pub const TEST_REPORT: &str = "test_report.txt";

#[derive(Args, Debug)]
pub struct SearchArgs {
    /// Validation set the objective is measured on.
    #[command(flatten)]
    pub data: DatasetArgs,
    #[command(flatten)]
    pub generation: GenerationArgs,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOP_N)]
    pub top_n: usize,
    /// Sample the first trial like all others instead of spending it on the
    /// all-1.00 set.
    #[arg(long)]
    pub no_default_start: bool,
    /// Test set on which the best set is scored after the search (same
    /// format and language as the validation set).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Continue from the trial log already in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct TopSetRow {
    rank: usize,
    trial: usize,
    wl: TokenValue,
    wr: TokenValue,
    ws: TokenValue,
    ss: TokenValue,
    objective: f64,
    objective_exact: String,
}

pub fn search_tokens(args: &SearchArgs, settings: &Settings) -> anyhow::Result<()> {
    let validation = args.data.load()?;
    let test = args
        .test
        .as_ref()
        .map(|p| load_dataset(p, args.data.format(), args.data.language))
        .transpose()?;
    let backend = args.generation.prepare(settings, args.data.language)?;
    let config = SearchConfig {
        trials: args.trials,
        seed: args.seed,
        top_n: args.top_n,
        start_from_default: !args.no_default_start,
        beam_width: args.generation.beam_width,
        limit: args.generation.limit,
        options: args.generation.serialization.options(),
    };
    if config.trials == 0 {
        return Err(UsageError("--trials must be at least 1".into()).into());
    }

    let mut inputs = vec![args.data.dataset.clone()];
    inputs.extend(args.test.clone());
    inputs.extend(backend.inputs.iter().cloned());
    let mut settings_json = args.data.settings();
    settings_json["generation"] = args.generation.settings(settings)?;
    settings_json["search"] = json!({
        "trials": config.trials,
        "seed": config.seed,
        "top_n": config.top_n,
        "start_from_default": config.start_from_default,
    });
    let mut out = Artifacts::new(&args.out_dir, "search-tokens", &inputs, settings_json)?;

    let log_path = args.out_dir.join(SEARCH_LOG);
    let mut prior = if args.resume && log_path.exists() {
        let file = File::open(&log_path)?;
        read_trials(BufReader::new(file)).with_context(|| format!("reading {}", log_path.display()))?
    } else {
        Vec::new()
    };
    prior.truncate(config.trials);
    if !prior.is_empty() {
        log::info!("resuming after {} logged trials", prior.len());
    }
    let mut log = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);
    for t in &prior {
        write_trial(&mut log, t)?;
    }
    log.flush()?;
    let mut sampler = UniformGridSampler::new(config.seed, config.start_from_default);
    let result = search_with_sampler(
        &validation,
        backend.generator.as_ref(),
        &backend.mlm,
        &config,
        &mut sampler,
        &prior,
        |trial| {
            write_trial(&mut log, trial)?;
            log.flush()?;
            Ok(())
        },
    )
    .with_context(|| format!("searching (log kept in {})", log_path.display()))?;
    drop(log);
    out.record(&log_path)?;

    let rows: Vec<TopSetRow> = result
        .top_sets
        .iter()
        .enumerate()
        .filter_map(|(rank, t)| {
            t.objective.map(|o| TopSetRow {
                rank: rank + 1,
                trial: t.index,
                wl: t.set.wl,
                wr: t.set.wr,
                ws: t.set.ws,
                ss: t.set.ss,
                objective: o.value(),
                objective_exact: format!("{}/{}", o.numerator, o.denominator),
            })
        })
        .collect();
    out.write(TOP_SETS, (serde_json::to_string_pretty(&rows)? + "\n").as_bytes())?;

    let Some(best) = result.best() else {
        out.finish()?;
        let reason = result.trials.iter().find_map(|t| t.error.clone()).unwrap_or_default();
        return Err(BackendFailure(format!("every trial failed; first error: {reason}")).into());
    };
    println!("best_trial={}", best.index);
    println!("tokens={}", best.set.to_vector().render());
    println!(
        "validation_ACC@1@Top1={}",
        best.objective.map(|o| o.to_string()).unwrap_or_default()
    );

    if let Some(test) = test {
        let evaluation = evaluate_token_set(&test, &best.set, backend.generator.as_ref(), &backend.mlm, &config)?;
        for (id, e) in &evaluation.failures {
            log::warn!("test instance {id}: {e}");
        }
        let text = evaluation.report.to_key_values();
        out.write(TEST_REPORT, text.as_bytes())?;
        print!("{text}");
    }
    out.finish()
}

// ---------------------------------------------------------------- rank-backends

#[derive(Args, Debug)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DatasetArgs,
    /// Repeat for each backend to compare.
    #[arg(long = "backend", required = true)]
    pub backends: Vec<BackendSpec>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub freq: Option<PathBuf>,
    /// Also write the ranking here as TSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn rank_backends(args: &RankArgs, settings: &Settings) -> anyhow::Result<()> {
    if args.k == 0 {
        return Err(UsageError("--k must be at least 1".into()).into());
    }
    let instances = args.data.load()?;
    let mut inputs = vec![args.data.dataset.clone()];
    let needs_lexicon = args.backends.iter().any(|b| matches!(b, BackendSpec::Lexicon(_)));
    let lexicon = if needs_lexicon || args.freq.is_some() {
        let (lexicon, path) = backends::frequency_lexicon(args.freq.as_ref(), settings, args.data.language)?;
        inputs.push(path);
        Some(lexicon)
    } else {
        None
    };
    // unreachable sidecar backends are reported in the ranking, not fatal
    let generators = args
        .backends
        .iter()
        .map(|spec| {
            inputs.extend(spec.input_files());
            backends::build(spec, settings, lexicon.as_ref(), false)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&dyn lexsimp_core::CandidateGenerator> = generators.iter().map(|g| g.as_ref()).collect();
    let ranking = rank_generators_by_potential(&instances, &refs, args.k)?;

    let mut text = format!("backend\tPotential@{}\n", args.k);
    for row in &ranking {
        match (&row.potential, &row.failure) {
            (Some(p), _) => text.push_str(&format!("{}\t{p}\n", row.backend)),
            (None, failure) => text.push_str(&format!(
                "{}\tfailed: {}\n",
                row.backend,
                failure.as_deref().unwrap_or("")
            )),
        }
    }
    print!("{text}");
    if let Some(path) = &args.out {
        let mut settings_json = args.data.settings();
        settings_json["backends"] = json!(args.backends);
        settings_json["k"] = json!(args.k);
        if args.backends.iter().any(BackendSpec::needs_sidecar) {
            settings_json["sidecar_url"] = json!(settings.sidecar_url);
        }
        let mut out = Artifacts::for_file(path, "rank-backends", &inputs, settings_json)?;
        out.write(&file_name(path)?, text.as_bytes())?;
        out.finish()?;
    }
    Ok(())
}
