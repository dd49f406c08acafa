use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};
use knnicl::datastore::{Datastore, RecordFilter};
use knnicl::decode::Mode;
use knnicl::harness::{
    exact_match_rate, gen_synthetic, load_topv2, make_spis_split, per_domain, depth_breakdown, run_experiment, sample_pool,
    Config, Corpus, ExampleResult, ExperimentReport, ExperimentSpec, Grid, GridPoint, Pipeline, PipelineConfig,
};
use knnicl::lm::NGramConfig;
use knnicl::selection::{select, SelectionConfig, Strategy};
use knnicl::treebank::serialize_api;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "knnicl", version, about = "kNN-augmented in-context semantic parsing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FilterArg {
    Labels,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Sim,
    Para,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Icl,
    KnnLm,
    KnnIcl,
}

impl From<FilterArg> for RecordFilter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Labels => RecordFilter::LabelsOnly,
            FilterArg::All => RecordFilter::AllTokens,
        }
    }
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Random => Strategy::Random,
            StrategyArg::Sim => Strategy::Similarity,
            StrategyArg::Para => Strategy::Paraphrase,
        }
    }
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Icl => Mode::Icl,
            ModeArg::KnnLm => Mode::KnnLm,
            ModeArg::KnnIcl => Mode::KnnIcl,
        }
    }
}

#[derive(clap::Args)]
struct PoolArgs {
    /// Demo pool / datastore corpus (TSV).
    #[arg(long)]
    pool: PathBuf,
    /// API documentation text; a stub is generated from label names otherwise.
    #[arg(long)]
    docs: Option<PathBuf>,
    /// Copy-mixture weight of the reference LM.
    #[arg(long, default_value_t = 0.5)]
    copy_boost: f64,
    #[arg(long, value_enum, default_value = "labels")]
    filter: FilterArg,
}

#[derive(clap::Args)]
struct PromptArgs {
    #[arg(long, value_enum, default_value = "sim")]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 10)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a TOPv2 TSV and write a normalized corpus file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        domain: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic train/test corpus pair.
    GenSynthetic {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        train: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Split a corpus into a demo pool and a remainder.
    #[command(group(ArgGroup::new("kind").required(true).args(["spis", "pool"])))]
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        spis: Option<usize>,
        #[arg(long)]
        pool: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving manifest.json, pool.tsv and rest.tsv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Build and save the datastore plus its vocabulary.
    BuildDatastore {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "labels")]
        filter: FilterArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the exemplars chosen for an utterance.
    SelectDemos {
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long)]
        utterance: String,
    },
    /// Decode a single utterance or every record of a corpus.
    #[command(group(ArgGroup::new("target").required(true).args(["utterance", "input"])))]
    Decode {
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long, value_enum, default_value = "knn-icl")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
        #[arg(long, default_value_t = 100.0)]
        temp: f64,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long, default_value_t = 128)]
        max_len: usize,
        /// Saved datastore to use instead of rebuilding from the pool.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        utterance: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Predictions JSON (corpus input only).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-step JSONL trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score predictions against gold and write a report.
    Evaluate {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Grid search on a validation slice, then report on the rest.
    Sweep {
        #[command(flatten)]
        pool: PoolArgs,
        #[command(flatten)]
        prompt: PromptArgs,
        #[arg(long, value_enum, default_value = "knn-icl")]
        mode: ModeArg,
        #[arg(long)]
        eval: PathBuf,
        /// `key = value` file with temperatures, lambdas, ks and optional max_len, validation_fraction.
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        serial: bool,
    },
}

#[derive(Serialize, Deserialize)]
struct Prediction {
    id: usize,
    prediction: String,
}

#[derive(Serialize, Deserialize)]
struct PredictionFile {
    mode: Mode,
    strategy: Strategy,
    m: usize,
    config: GridPoint,
    wall_clock_secs: f64,
    predictions: Vec<Prediction>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(CliError::data)?;
    w.flush().map_err(CliError::data)
}

fn load(path: &Path) -> Result<Corpus> {
    load_topv2(path, None).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn pipeline(args: &PoolArgs, strategy: Strategy) -> Result<Pipeline> {
    let train = load(&args.pool)?;
    let cfg = PipelineConfig {
        lm: NGramConfig {
            copy_boost: args.copy_boost,
            ..NGramConfig::default()
        },
        filter: args.filter.into(),
        train_classifier: strategy == Strategy::Paraphrase,
        ..PipelineConfig::default()
    };
    let mut p = Pipeline::build(&train, &cfg).map_err(CliError::data)?;
    if let Some(docs) = &args.docs {
        p.documentation = Some(std::fs::read_to_string(docs).map_err(CliError::data)?);
    }
    Ok(p)
}

fn spec(mode: Mode, prompt: &PromptArgs) -> ExperimentSpec {
    ExperimentSpec {
        mode,
        strategy: prompt.strategy.into(),
        m: prompt.m,
        seed: prompt.seed,
        ..ExperimentSpec::default()
    }
}

fn words(utterance: &str) -> Vec<String> {
    knnicl::textcore::split_symbols(utterance).into_iter().map(str::to_string).collect()
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest { input, domain, out } => {
            let corpus = load_topv2(&input, domain.as_deref())
                .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?;
            corpus.save(&out).map_err(CliError::data)?;
            let sha = corpus.provenance.as_ref().map(|p| p.sha256.as_str()).unwrap_or_default();
            println!("{} records, source sha256 {sha}", corpus.len());
        }
        Command::GenSynthetic {
            seed,
            train,
            test,
            out_dir,
        } => {
            if train == 0 || test == 0 {
                return Err(CliError::Usage("--train and --test must be at least 1".into()));
            }
            std::fs::create_dir_all(&out_dir).map_err(CliError::data)?;
            let (tr, te) = gen_synthetic(seed, train, test);
            tr.save(out_dir.join("train.tsv")).map_err(CliError::data)?;
            te.save(out_dir.join("test.tsv")).map_err(CliError::data)?;
            println!("{} train, {} test", tr.len(), te.len());
        }
        Command::Split {
            corpus,
            spis,
            pool,
            seed,
            out_dir,
        } => {
            let c = load(&corpus)?;
            let manifest = match (spis, pool) {
                (Some(n), _) => make_spis_split(&c, n, seed).map_err(CliError::data)?.manifest,
                (None, Some(size)) => sample_pool(&c, size, seed).map_err(CliError::data)?,
                (None, None) => unreachable!("clap requires one of --spis/--pool"),
            };
            std::fs::create_dir_all(&out_dir).map_err(CliError::data)?;
            write_json(&out_dir.join("manifest.json"), &manifest)?;
            c.subset(&manifest.pool).save(out_dir.join("pool.tsv")).map_err(CliError::data)?;
            c.subset(&manifest.remainder).save(out_dir.join("rest.tsv")).map_err(CliError::data)?;
            println!("pool {}, rest {}", manifest.pool.len(), manifest.remainder.len());
        }
        Command::BuildDatastore { corpus, filter, out } => {
            let p = pipeline(
                &PoolArgs {
                    pool: corpus,
                    docs: None,
                    copy_boost: 0.5,
                    filter,
                },
                Strategy::Similarity,
            )?;
            p.store.save(&out).map_err(CliError::data)?;
            let vocab_path = out.with_extension("vocab.tsv");
            p.vocab.save(&vocab_path).map_err(CliError::data)?;
            println!("{} records, dim {}, vocabulary {}", p.store.len(), p.store.dim(), vocab_path.display());
        }
        Command::SelectDemos {
            pool,
            prompt,
            utterance,
        } => {
            let p = pipeline(&pool, prompt.strategy.into())?;
            let target = words(&utterance);
            let target: Vec<&str> = target.iter().map(String::as_str).collect();
            let cfg = SelectionConfig {
                m: prompt.m,
                seed: prompt.seed,
                strategy: prompt.strategy.into(),
                ..SelectionConfig::default()
            };
            let picked = select(&p.pool, &target, &p.encoder, p.classifier.as_ref(), &cfg).map_err(CliError::data)?;
            for i in picked {
                let item = p.pool.item(i);
                println!("{i}\t{}\t{}", item.utterance.join(" "), serialize_api(&item.gold));
            }
        }
        Command::Decode {
            pool,
            prompt,
            mode,
            lambda,
            temp,
            k,
            max_len,
            store,
            utterance,
            input,
            out,
            trace,
        } => {
            let mut p = pipeline(&pool, prompt.strategy.into())?;
            if let Some(path) = store {
                p.store = Datastore::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            }
            let spec = ExperimentSpec {
                max_len,
                ..spec(mode.into(), &prompt)
            };
            let point = GridPoint {
                lambda,
                temperature: temp,
                k,
            };
            spec.decoder_config(&point).validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let targets: Vec<(usize, Vec<String>)> = match (utterance, input) {
                (Some(u), _) => vec![(0, words(&u))],
                (None, Some(path)) => load(&path)?.records.into_iter().map(|r| (r.id, r.utterance)).collect(),
                (None, None) => unreachable!("clap requires one of --utterance/--input"),
            };
            let mut trace_out = trace.as_deref().map(create).transpose()?;
            let start = Instant::now();
            let mut predictions = Vec::with_capacity(targets.len());
            for (id, u) in targets {
                let (text, t) = p.decode_one(&u, &spec, &point).map_err(CliError::data)?;
                if let Some(w) = trace_out.as_mut() {
                    t.write_jsonl(w).map_err(CliError::data)?;
                }
                if out.is_none() {
                    println!("{text}");
                }
                predictions.push(Prediction { id, prediction: text });
            }
            if let Some(mut w) = trace_out {
                w.flush().map_err(CliError::data)?;
            }
            if let Some(out) = out {
                write_json(
                    &out,
                    &PredictionFile {
                        mode: spec.mode,
                        strategy: spec.strategy,
                        m: spec.m,
                        config: point,
                        wall_clock_secs: start.elapsed().as_secs_f64(),
                        predictions,
                    },
                )?;
            }
        }
        Command::Evaluate { gold, predictions, out } => {
            let gold = load(&gold)?;
            let text = std::fs::read_to_string(&predictions).map_err(CliError::data)?;
            let preds: PredictionFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", predictions.display())))?;
            let examples = preds
                .predictions
                .iter()
                .map(|p| {
                    let r = gold
                        .records
                        .get(p.id)
                        .ok_or_else(|| CliError::Data(format!("prediction id {} has no gold record", p.id)))?;
                    Ok(ExampleResult::score(r.id, &r.domain, &r.text(), &r.api, &p.prediction))
                })
                .collect::<Result<Vec<_>>>()?;
            let em = exact_match_rate(&examples);
            let report = ExperimentReport {
                mode: preds.mode,
                strategy: preds.strategy,
                m: preds.m,
                config: preds.config,
                exact_match: em,
                per_domain: per_domain(&examples),
                per_depth: depth_breakdown(&examples),
                validation_exact_match: em,
                grid: Vec::new(),
                wall_clock_secs: preds.wall_clock_secs,
                examples,
            };
            write_json(&out, &report)?;
            println!("exact match {em:.4} over {}", report.examples.len());
        }
        Command::Sweep {
            pool,
            prompt,
            mode,
            eval,
            grid,
            out,
            serial,
        } => {
            let mut spec = ExperimentSpec {
                parallel: !serial,
                ..spec(mode.into(), &prompt)
            };
            if let Some(path) = grid {
                let cfg = Config::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                spec.grid = Grid::from_config(&cfg).map_err(CliError::data)?;
                if let Some(v) = cfg.get("max_len").map_err(CliError::data)? {
                    spec.max_len = v;
                }
                if let Some(v) = cfg.get("validation_fraction").map_err(CliError::data)? {
                    spec.validation_fraction = v;
                }
            }
            let p = pipeline(&pool, spec.strategy)?;
            let eval = load(&eval)?;
            let report = run_experiment(&p, &eval, &spec).map_err(CliError::data)?;
            write_json(&out, &report)?;
            let c = report.config;
            println!(
                "{} best lambda={} temp={} k={} validation {:.4} test {:.4}",
                report.mode, c.lambda, c.temperature, c.k, report.validation_exact_match, report.exact_match
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Data(_) => 2,
            })
        }
    }
}
