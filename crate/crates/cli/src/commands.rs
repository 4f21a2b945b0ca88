use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::Serialize;
use tubelean_core::channels::{self, ChannelVerdict, GroundTruth, VerdictSummary};
use tubelean_core::corpus::{self, Format, SplitRatios, TitleRecord};
use tubelean_core::embed;
use tubelean_core::eval::{self, ClassificationReport};
use tubelean_core::models::{ArchitectureConfig, ClassifierModel, EmbeddingScenario, TitleClassifier, Variant};
use tubelean_core::tokenize::{Tokenizer, WordPieceVocab, WordVocab};
use tubelean_core::train::{self, History, TrainConfig, TrainingMetadata};
use tubelean_core::{seed, LeaningLabel, NUM_CLASSES};

use crate::config::RunConfig;
use crate::Coded;

const EVAL_BATCH: usize = 64;

/// The path from the flag, else from the config file; it must exist.
fn required<'a>(flag: &'a Option<PathBuf>, file: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    let path = flag
        .as_deref()
        .or(file.as_deref())
        .with_context(|| format!("no {name} given (pass --{name} or set data.{name} in the config)"))?;
    if !path.exists() {
        bail!("{name} {} does not exist", path.display());
    }
    Ok(path)
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn read_records(path: &Path) -> Result<Vec<TitleRecord>> {
    let ingested = corpus::ingest(path, Format::from_path(path))?;
    if ingested.dropped > 0 {
        warn!("{}: dropped {} rows without a title", path.display(), ingested.dropped);
    }
    Ok(ingested.records)
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    let (model, _) = train::load_checkpoint(path).map_err(|e| {
        Coded(
            3,
            anyhow::Error::new(e).context(format!("loading checkpoint {}", path.display())),
        )
    })?;
    Ok(model)
}

#[derive(Serialize)]
struct PrepareStats {
    seed: u64,
    ratios: SplitRatios,
    input_rows: usize,
    missing_titles_dropped: usize,
    duplicates_dropped: usize,
    kept: usize,
    labels: Vec<&'static str>,
    all: [usize; NUM_CLASSES],
    train: [usize; NUM_CLASSES],
    validation: [usize; NUM_CLASSES],
    test: [usize; NUM_CLASSES],
}

pub fn prepare(cfg: &RunConfig, input: &Option<PathBuf>, ratios: Option<SplitRatios>) -> Result<()> {
    let input = required(input, &cfg.data.input, "input")?;
    let ingested = corpus::ingest(input, Format::from_path(input))?;
    let input_rows = ingested.records.len() + ingested.dropped;
    let (records, stats) = corpus::clean(ingested.records);
    let ratios = ratios.unwrap_or(cfg.split);
    let split = corpus::stratified_split(&records, ratios, cfg.seed)?;
    create_out(&cfg.out)?;
    for (name, part) in [
        ("train", &split.train),
        ("validation", &split.validation),
        ("test", &split.test),
    ] {
        let path = cfg.out.join(format!("{name}.jsonl"));
        corpus::write_jsonl(&path, part)?;
        info!("wrote {} ({} records)", path.display(), part.len());
    }
    let report = PrepareStats {
        seed: cfg.seed,
        ratios,
        input_rows,
        missing_titles_dropped: ingested.dropped + stats.dropped_count,
        duplicates_dropped: stats.duplicate_count,
        kept: records.len(),
        labels: LeaningLabel::ALL.iter().map(|l| l.as_str()).collect(),
        all: stats.per_class_counts,
        train: corpus::class_counts(&split.train)?,
        validation: corpus::class_counts(&split.validation)?,
        test: corpus::class_counts(&split.test)?,
    };
    write_file(&cfg.out.join("stats.json"), to_json(&report))
}

fn vocab_file(variant: Variant) -> &'static str {
    if variant.word_level() {
        "vocab.tsv"
    } else {
        "vocab.txt"
    }
}

fn build_tokenizer(variant: Variant, records: &[TitleRecord], size: usize, max_len: usize) -> Result<Tokenizer> {
    let titles = records.iter().map(|r| r.title.as_str());
    Ok(if variant.word_level() {
        Tokenizer::Word {
            vocab: WordVocab::build(titles, size),
            max_len,
        }
    } else {
        Tokenizer::WordPiece {
            vocab: WordPieceVocab::build(titles, size)?,
            max_len,
        }
    })
}

fn load_tokenizer(variant: Variant, path: &Path, max_len: usize) -> Result<Tokenizer> {
    Ok(if variant.word_level() {
        Tokenizer::Word {
            vocab: WordVocab::load(path)?,
            max_len,
        }
    } else {
        Tokenizer::WordPiece {
            vocab: WordPieceVocab::load(path)?,
            max_len,
        }
    })
}

fn save_tokenizer(tok: &Tokenizer, path: &Path) -> Result<()> {
    match tok {
        Tokenizer::Word { vocab, .. } => vocab.save(path)?,
        Tokenizer::WordPiece { vocab, .. } => vocab.save(path)?,
    }
    info!("wrote {} ({} tokens)", path.display(), tok.vocab_size());
    Ok(())
}

pub fn vocab(cfg: &RunConfig, train: &Option<PathBuf>, size: Option<usize>) -> Result<()> {
    let records = read_records(required(train, &cfg.data.train, "train")?)?;
    let tok = build_tokenizer(
        cfg.variant,
        &records,
        size.unwrap_or(cfg.model.vocab_size),
        cfg.model.max_len,
    )?;
    create_out(&cfg.out)?;
    save_tokenizer(&tok, &cfg.out.join(vocab_file(cfg.variant)))
}

/// Word vocabulary from `--vocab`/`data.vocab`, or built from the records
/// and written next to the other outputs.
fn word_vocab(cfg: &RunConfig, vocab: &Option<PathBuf>, records: &[TitleRecord]) -> Result<WordVocab> {
    match vocab.as_ref().or(cfg.data.vocab.as_ref()) {
        Some(p) => Ok(WordVocab::load(p)?),
        None => {
            let v = WordVocab::build(records.iter().map(|r| r.title.as_str()), cfg.model.vocab_size);
            create_out(&cfg.out)?;
            let path = cfg.out.join("vocab.tsv");
            v.save(&path)?;
            info!("wrote {} ({} tokens)", path.display(), v.len());
            Ok(v)
        }
    }
}

pub fn pretrain_embed(cfg: &RunConfig, train: &Option<PathBuf>, vocab: &Option<PathBuf>) -> Result<()> {
    if !cfg.variant.word_level() {
        bail!(
            "pretrain-embed produces word vectors; preset {} uses WordPiece",
            cfg.variant
        );
    }
    let records = read_records(required(train, &cfg.data.train, "train")?)?;
    let vocab = word_vocab(cfg, vocab, &records)?;
    let m = embed::sgns_pretrain(records.iter().map(|r| r.title.as_str()), &vocab, &cfg.embed, cfg.seed)?;
    create_out(&cfg.out)?;
    let path = cfg.out.join("embeddings.txt");
    embed::save_vectors(&path, &m, &vocab)?;
    info!("wrote {} ({} x {})", path.display(), m.vocab(), m.dim());
    Ok(())
}

#[derive(Serialize)]
struct RunHeader<'a> {
    preset: &'static str,
    scale: &'static str,
    seed: u64,
    architecture: &'a ArchitectureConfig,
    train: &'a TrainConfig,
    train_records: usize,
    validation_records: usize,
}

#[derive(Serialize)]
struct HistoryFile<'a> {
    header: RunHeader<'a>,
    #[serde(flatten)]
    history: &'a History,
}

pub struct TrainInputs {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub dry_run: bool,
}

pub fn train(cfg: &RunConfig, inputs: &TrainInputs) -> Result<()> {
    let train_records = read_records(required(&inputs.train, &cfg.data.train, "train")?)?;
    let validation_records = match inputs.validation.as_ref().or(cfg.data.validation.as_ref()) {
        Some(p) => read_records(p)?,
        None => Vec::new(),
    };
    let variant = cfg.variant;
    let mut arch = cfg.model.clone();
    let tok = match inputs.vocab.as_ref().or(cfg.data.vocab.as_ref()) {
        Some(p) => load_tokenizer(variant, p, arch.max_len)?,
        None => build_tokenizer(variant, &train_records, arch.vocab_size, arch.max_len)?,
    };
    arch.vocab_size = tok.vocab_size();

    // Only the word-level models take external vectors; the transformer
    // always learns its own embeddings.
    let vectors = inputs.embeddings.as_ref().or(cfg.data.embeddings.as_ref());
    let pretrained = variant.word_level() && arch.scenario != EmbeddingScenario::Random;
    let embeddings = match (vectors, pretrained) {
        (None, false) => None,
        (Some(p), true) => {
            let Tokenizer::Word { vocab, .. } = &tok else {
                unreachable!("word-level variants use a word tokenizer")
            };
            let mut rng = seed::rng(seed::derive(cfg.seed, "embedding-oov"));
            Some(embed::load_vectors(p, vocab, arch.embed_dim, &mut rng)?)
        }
        (Some(_), false) => bail!(
            "embeddings given, but preset {variant} with model.scenario {:?} does not use them",
            arch.scenario
        ),
        (None, true) => bail!(
            "model.scenario {:?} needs pre-trained vectors (--embeddings)",
            arch.scenario
        ),
    };
    arch.validate()?;
    cfg.train.validate()?;
    // A dry run stops before allocating the model, so paper-scale presets can
    // be inspected cheaply.
    let mut trained = None;
    let history = if inputs.dry_run {
        History::default()
    } else {
        let mut model = ClassifierModel::build(&arch, tok, embeddings.as_ref(), cfg.seed)?;
        let h = train::fit(&mut model, &train_records, &validation_records, &cfg.train)?;
        trained = Some(model);
        h
    };
    create_out(&cfg.out)?;
    let file = HistoryFile {
        header: RunHeader {
            preset: variant.preset_name(),
            scale: match cfg.scale {
                tubelean_core::models::Scale::Paper => "paper",
                tubelean_core::models::Scale::Desk => "desk",
            },
            seed: cfg.seed,
            architecture: &arch,
            train: &cfg.train,
            train_records: train_records.len(),
            validation_records: validation_records.len(),
        },
        history: &history,
    };
    write_file(&cfg.out.join("history.json"), to_json(&file))?;
    let Some(model) = trained else {
        return Ok(());
    };
    let meta = TrainingMetadata {
        seed: cfg.seed,
        epoch: history.best_epoch,
        train_config: Some(cfg.train.clone()),
        history: Some(history),
    };
    let ckpt = cfg.out.join("model.lnsc");
    train::save_checkpoint(&ckpt, &model, &meta)?;
    info!("wrote {}", ckpt.display());
    if !validation_records.is_empty() {
        let e = eval::evaluate_parallel(&model, &validation_records, EVAL_BATCH)?;
        write_file(&cfg.out.join("validation_report.json"), to_json(&e.report))?;
    }
    Ok(())
}

/// One header row and one value row, in the column order accuracy,
/// precision, recall, F1.
pub fn weighted_line(r: &ClassificationReport) -> String {
    format!(
        "average accuracy\taverage precision\taverage recall\taverage F1 score\n{:.4}\t{:.4}\t{:.4}\t{:.4}\n",
        r.weighted.accuracy, r.weighted.precision, r.weighted.recall, r.weighted.f1
    )
}

pub fn evaluate(cfg: &RunConfig, checkpoint: &Option<PathBuf>, test: &Option<PathBuf>) -> Result<()> {
    let model = load_model(required(checkpoint, &cfg.data.checkpoint, "checkpoint")?)?;
    let records = read_records(required(test, &cfg.data.test, "test")?)?;
    let e = eval::evaluate_parallel(&model, &records, EVAL_BATCH)?;
    create_out(&cfg.out)?;
    write_file(&cfg.out.join("report.json"), to_json(&e.report))?;
    write_file(&cfg.out.join("report.txt"), e.report.to_text())?;
    eval::render_confusion(&e.matrix, &cfg.out.join("confusion.svg"))?;
    print!("{}", weighted_line(&e.report));
    Ok(())
}

pub fn predict_lines(model: &impl TitleClassifier, titles: &[String]) -> Result<String> {
    let mut out = String::new();
    for chunk in titles.chunks(EVAL_BATCH) {
        let refs: Vec<&str> = chunk.iter().map(String::as_str).collect();
        for p in model.classify_batch(&refs)? {
            let probs: Vec<String> = p.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{}\t{}\n", LeaningLabel::argmax(&p), probs.join("\t")));
        }
    }
    Ok(out)
}

pub fn predict(cfg: &RunConfig, checkpoint: &Option<PathBuf>, titles: &[String], stdin: bool) -> Result<()> {
    let model = load_model(required(checkpoint, &cfg.data.checkpoint, "checkpoint")?)?;
    let mut all = titles.to_vec();
    if stdin {
        for line in io::stdin().lock().lines() {
            let line = line.context("reading stdin")?;
            if !line.trim().is_empty() {
                all.push(line);
            }
        }
    }
    if all.is_empty() {
        return Err(tubelean_core::Error::Empty("no titles to classify (use --title or --stdin)".into()).into());
    }
    let text = predict_lines(&model, &all)?;
    io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .context("writing stdout")?;
    Ok(())
}

/// Channel exports in a directory, one channel per `.jsonl`/`.csv` file,
/// sorted by file name. The channel is named by its records' `channel_id`,
/// or by the file stem when that is empty.
fn read_exports(dir: &Path) -> Result<Vec<(String, Vec<TitleRecord>)>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading export directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<io::Result<_>>()
        .with_context(|| format!("listing {}", dir.display()))?;
    files.retain(|p| {
        p.is_file()
            && p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("csv"))
    });
    files.sort();
    if files.is_empty() {
        return Err(tubelean_core::Error::Empty(format!("no .jsonl or .csv exports in {}", dir.display())).into());
    }
    let mut out = Vec::new();
    for path in files {
        let records = read_records(&path)?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let ids: std::collections::BTreeSet<&str> = records.iter().map(|r| r.channel_id.as_str()).collect();
        let name = match ids.into_iter().collect::<Vec<_>>().as_slice() {
            [] | [""] => stem,
            [one] => one.to_string(),
            many => bail!("{} mixes channels {:?}", path.display(), many),
        };
        out.push((name, records));
    }
    Ok(out)
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '-'
            }
        })
        .collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    summary: VerdictSummary,
    unjudged: &'a [String],
    channels: Vec<SummaryRow<'a>>,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    channel: &'a str,
    n: u64,
    dominant: LeaningLabel,
    verdict: Option<&'a ChannelVerdict>,
}

pub fn channel_report(
    cfg: &RunConfig,
    checkpoint: &Option<PathBuf>,
    exports: &Option<PathBuf>,
    ground_truth: &Option<PathBuf>,
    strict: bool,
) -> Result<()> {
    let truth = match ground_truth.as_ref().or(cfg.data.ground_truth.as_ref()) {
        Some(p) => GroundTruth::load(p).map_err(|e| {
            Coded(
                4,
                anyhow::Error::new(e).context(format!("loading ground truth {}", p.display())),
            )
        })?,
        None => GroundTruth::bundled(),
    };
    let model = load_model(required(checkpoint, &cfg.data.checkpoint, "checkpoint")?)?;
    let exports = read_exports(required(exports, &cfg.data.exports, "exports")?)?;
    let mut options = cfg.channels;
    options.strict |= strict;
    let result = channels::channel_reports(&model, &exports, &truth, &options)?;

    let dir = cfg.out.join("channels");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut table = String::from("channel\tn\tdominant\ttruth\tverdict\n");
    let mut rows = Vec::new();
    for r in &result.channels {
        let d = &r.distribution;
        let base = dir.join(slug(&d.channel));
        write_file(&base.with_extension("json"), r.to_json() + "\n")?;
        write_file(&base.with_extension("svg"), channels::to_svg(r))?;
        let (truth, verdict) = match &r.verdict {
            Some(v) => (
                v.truth.as_str(),
                serde_json::to_value(v.verdict)?.as_str().unwrap_or("").to_string(),
            ),
            None => ("-", "unjudged".to_string()),
        };
        table.push_str(&format!("{}\t{}\t{}\t{truth}\t{verdict}\n", d.channel, d.n, d.dominant));
        rows.push(SummaryRow {
            channel: &d.channel,
            n: d.n,
            dominant: d.dominant,
            verdict: r.verdict.as_ref(),
        });
    }
    let s = result.summary;
    write_file(
        &cfg.out.join("channel_summary.json"),
        to_json(&SummaryFile {
            summary: s,
            unjudged: &result.unjudged,
            channels: rows,
        }),
    )?;
    table.push_str(&format!(
        "consistent {}\tsplit {}\tinconsistent {}\tunjudged {}\n",
        s.consistent,
        s.split,
        s.inconsistent,
        result.unjudged.len()
    ));
    io::stdout()
        .lock()
        .write_all(table.as_bytes())
        .context("writing stdout")?;
    Ok(())
}
