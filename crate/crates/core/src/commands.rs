//! The pipeline behind the command-line tool. Every command reads a
//! [`RunConfig`], writes its artifacts under `output_dir` and prints reports
//! to the given sink.
//!
//! Layout of `output_dir`:
//!
//! ```text
//! vocab.txt                 vocabulary
//! dev.txt check.txt test.txt  tokenized sentences taken from the treebanks
//! E0.slm .. En.slm          first-pass checkpoints
//! L2R0.slm .. L2Rm.slm      left-to-right predictor checkpoints
//! train.log                 one metrics line per checkpoint
//! trigram.model             baseline
//! cache/                    probability streams keyed by model and corpus
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::config::{RunConfig, RunError};
use crate::corpus::vocab::WordId;
use crate::corpus::{binarize, build_vocab, parse_treebank, prepare_treebank, replay, HeadRules, Tree, Vocab};
use crate::decoder::{best_parse, BeamConfig};
use crate::eval::{
    causal_stream, fit_interpolation_weight, interpolate_streams, lower_bound_stream, train_trigram, ProbStream,
    TrigramModel,
};
use crate::model::Slm;
use crate::reestimation::{derivations_of, first_pass_iteration, init_from_treebank, l2r_pass_iteration, seed_l2r, MixtureCache};
use crate::smoothing::SmoothedModel;

pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRAIN_LOG: &str = "train.log";
pub const TRIGRAM_FILE: &str = "trigram.model";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PplMode {
    Causal,
    LowerBound,
    Trigram,
    Interpolated,
}

impl FromStr for PplMode {
    type Err = RunError;

    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "causal" => Ok(PplMode::Causal),
            "lower-bound" => Ok(PplMode::LowerBound),
            "trigram" => Ok(PplMode::Trigram),
            "interpolated" => Ok(PplMode::Interpolated),
            _ => Err(RunError::new("argument", Some("mode"), format!("unknown mode `{s}`"))),
        }
    }
}

impl PplMode {
    fn name(self) -> &'static str {
        match self {
            PplMode::Causal => "causal",
            PplMode::LowerBound => "lower-bound",
            PplMode::Trigram => "trigram",
            PplMode::Interpolated => "interpolated",
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::new("io", None, format!("{}: {e}", path.display()))
}

fn read_text(path: &Path, key: &str) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::new("io", Some(key), format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?))
}

fn open(path: &Path) -> Result<BufReader<File>, RunError> {
    Ok(BufReader::new(File::open(path).map_err(|e| io_err(path, e))?))
}

/// Runs `f` on a thread pool of the configured size.
fn with_workers<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T, RunError> + Send) -> Result<T, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| RunError::new("config", Some("workers"), e.to_string()))?;
    pool.install(f)
}

fn read_treebank(path: &Path, key: &str, drop: &[String]) -> Result<Vec<Tree>, RunError> {
    let text = read_text(path, key)?;
    let trees = parse_treebank(&text).map_err(|e| RunError::new("format", Some(key), e.to_string()))?;
    Ok(trees.into_iter().filter_map(|t| t.drop_leaves(drop)).collect())
}

fn head_rules(cfg: &RunConfig) -> Result<HeadRules, RunError> {
    match &cfg.head_rules {
        None => Ok(HeadRules::default()),
        Some(p) => HeadRules::parse(&read_text(p, "head_rules")?).map_err(|e| RunError::new("format", Some("head_rules"), e.to_string())),
    }
}

fn sentences_text(trees: &[Tree]) -> String {
    let mut s = String::new();
    for t in trees {
        s.push_str(&t.words().join(" "));
        s.push('\n');
    }
    s
}

/// Tokenized text, one sentence per line, encoded and framed.
pub fn encode_text(text: &str, vocab: &Vocab) -> Vec<Vec<WordId>> {
    text.lines()
        .map(|l| vocab.encode_sentence(&l.split_whitespace().collect::<Vec<_>>()))
        .collect()
}

fn load_vocab(cfg: &RunConfig) -> Result<Vocab, RunError> {
    let path = cfg.output_dir.join(VOCAB_FILE);
    Ok(Vocab::read(open(&path)?)?)
}

fn load_slm(path: &Path, vocab: &Vocab) -> Result<Slm, RunError> {
    Ok(Slm::read(open(path)?, vocab.clone())?)
}

fn save_slm(m: &Slm, path: &Path) -> Result<(), RunError> {
    let mut w = create(path)?;
    m.write(&mut w)?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn checkpoint_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(format!("{name}.slm"))
}

struct Prepared {
    vocab: Vocab,
    dev: Vec<Vec<WordId>>,
    check: Vec<Vec<WordId>>,
}

/// Builds the vocabulary and the E0 model from the treebanks.
fn init(cfg: &RunConfig, log: &mut impl Write) -> Result<(Slm, Prepared), RunError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
    let dev_trees = read_treebank(&cfg.dev, "dev", &cfg.drop_labels)?;
    let check_trees = read_treebank(&cfg.check, "check", &cfg.drop_labels)?;
    if dev_trees.is_empty() {
        return Err(RunError::new("data", Some("dev"), "no trees"));
    }
    if check_trees.is_empty() {
        return Err(RunError::new("data", Some("check"), "no trees"));
    }
    let binarized: Vec<Tree> = dev_trees.iter().map(binarize).collect();
    let vocab = build_vocab(&binarized, cfg.vocab_size)?;
    let rules = head_rules(cfg)?;
    let mut derivations = Vec::new();
    for (key, trees) in [("dev", &dev_trees), ("check", &check_trees)] {
        let prepared = prepare_treebank(trees, &rules, &vocab, &cfg.drop_labels);
        let (ds, bad) = derivations_of(&prepared.trees, &vocab);
        let skipped = prepared.skipped + bad;
        if skipped > 0 {
            log::warn!("{key}: skipped {skipped} of {} trees", trees.len());
        }
        if ds.is_empty() {
            return Err(RunError::new("data", Some(key), "no usable trees"));
        }
        derivations.push(ds);
    }
    let (m, traces) = init_from_treebank(&derivations[0], &derivations[1], vocab.clone(), &cfg.train)?;
    if !traces.is_monotone(1e-9) {
        log::warn!("interpolation weight EM lost likelihood on check data");
    }

    let mut w = create(&cfg.output_dir.join(VOCAB_FILE))?;
    vocab.write(&mut w)?;
    w.flush()?;
    let dev_text = sentences_text(&dev_trees);
    let check_text = sentences_text(&check_trees);
    fs::write(cfg.output_dir.join("dev.txt"), &dev_text)?;
    fs::write(cfg.output_dir.join("check.txt"), &check_text)?;
    if let Some(test) = &cfg.test {
        let test_trees = read_treebank(test, "test", &cfg.drop_labels)?;
        fs::write(cfg.output_dir.join("test.txt"), sentences_text(&test_trees))?;
    }
    save_slm(&m, &checkpoint_path(cfg, "E0"))?;
    let prepared = Prepared {
        dev: encode_text(&dev_text, &vocab),
        check: encode_text(&check_text, &vocab),
        vocab,
    };
    log_metrics(log, "E0", &m, &prepared, &cfg.train.beam)?;
    Ok((m, prepared))
}

fn log_metrics(log: &mut impl Write, name: &str, m: &Slm, data: &Prepared, beam: &BeamConfig) -> Result<(), RunError> {
    let dev = causal_stream(m, &data.dev, beam).report()?;
    let check = causal_stream(m, &data.check, beam).report()?;
    writeln!(log, "iter={name} dev_ppl={} check_ppl={}", dev.ppl, check.ppl)?;
    log.flush()?;
    log::info!("{name}: dev ppl {:.4}, check ppl {:.4}", dev.ppl, check.ppl);
    Ok(())
}

/// Builds the vocabulary and writes the E0 checkpoint.
pub fn cmd_init(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<(), RunError> {
    with_workers(cfg, || {
        fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
        let mut log = create(&cfg.output_dir.join(TRAIN_LOG))?;
        let (_, data) = init(cfg, &mut log)?;
        let a = data.vocab.audit();
        writeln!(out, "words={} pos={} nt={} actions={}", a.words, a.pos, a.nt, a.actions)?;
        Ok(())
    })
}

/// E0 from the treebanks, then first-pass iterations E1..En, then the
/// left-to-right predictor L2R0..L2Rm, checkpointing each.
pub fn cmd_train(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<(), RunError> {
    with_workers(cfg, || {
        fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
        let log_path = cfg.output_dir.join(TRAIN_LOG);
        let mut log = create(&log_path)?;
        let (mut m, data) = init(cfg, &mut log)?;
        for i in 1..=cfg.train.first_pass_iters {
            let (next, stats) = first_pass_iteration(&m, &data.dev, &data.check, &cfg.train)?;
            if stats.dev_failures + stats.check_failures > 0 {
                log::warn!("E{i}: {} sentences without surviving parses", stats.dev_failures + stats.check_failures);
            }
            m = next;
            let name = format!("E{i}");
            save_slm(&m, &checkpoint_path(cfg, &name))?;
            log_metrics(&mut log, &name, &m, &data, &cfg.train.beam)?;
        }
        if cfg.train.l2r_iters > 0 {
            m = seed_l2r(&m);
            save_slm(&m, &checkpoint_path(cfg, "L2R0"))?;
            log_metrics(&mut log, "L2R0", &m, &data, &cfg.train.beam)?;
            let dev_cache = MixtureCache::build(&m, &data.dev, &cfg.train.beam);
            let check_cache = MixtureCache::build(&m, &data.check, &cfg.train.beam);
            for i in 1..=cfg.train.l2r_iters {
                let (next, _) = l2r_pass_iteration(&m, &dev_cache, &check_cache, &cfg.train)?;
                m = next;
                let name = format!("L2R{i}");
                save_slm(&m, &checkpoint_path(cfg, &name))?;
                log_metrics(&mut log, &name, &m, &data, &cfg.train.beam)?;
            }
        }
        drop(log);
        out.write_all(&fs::read(&log_path)?)?;
        Ok(())
    })
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize()[..12].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// A probability stream for `corpus` under the model in `model_path`,
/// reused from the cache when both files are unchanged.
fn stream_for(cfg: &RunConfig, vocab: &Vocab, mode: PplMode, model_path: &Path, corpus_path: &Path) -> Result<ProbStream, RunError> {
    let model_bytes = fs::read(model_path).map_err(|e| RunError::new("io", Some("model"), format!("{}: {e}", model_path.display())))?;
    let corpus_bytes = fs::read(corpus_path).map_err(|e| RunError::new("io", Some("corpus"), format!("{}: {e}", corpus_path.display())))?;
    let beam = format!("{} {}", cfg.train.beam.max_stack_depth, cfg.train.beam.logprob_threshold);
    let key = digest(&[mode.name().as_bytes(), &model_bytes, &corpus_bytes, beam.as_bytes()]);
    let cache_dir = cfg.output_dir.join("cache");
    let cached = cache_dir.join(format!("{key}.probs"));
    if cached.is_file() {
        if let Ok(s) = ProbStream::read(open(&cached)?) {
            return Ok(s);
        }
    }
    let corpus = encode_text(&String::from_utf8_lossy(&corpus_bytes), vocab);
    let stream = match mode {
        PplMode::Causal | PplMode::LowerBound => {
            let m = Slm::read(model_bytes.as_slice(), vocab.clone())?;
            if mode == PplMode::Causal {
                causal_stream(&m, &corpus, &cfg.train.beam)
            } else {
                lower_bound_stream(&m, &corpus, &cfg.train.beam)
            }
        }
        PplMode::Trigram => {
            let mut lines = model_bytes
                .split(|&b| b == b'\n')
                .map(|l| String::from_utf8_lossy(l).into_owned())
                .enumerate()
                .map(|(i, l)| (i + 1, l));
            TrigramModel::new(SmoothedModel::read_from(&mut lines)?)?.stream(vocab, &corpus)
        }
        PplMode::Interpolated => unreachable!("interpolated streams are built from component streams"),
    };
    fs::create_dir_all(&cache_dir)?;
    let mut w = create(&cached)?;
    stream.write(&mut w)?;
    w.flush()?;
    Ok(stream)
}

/// Prints the perplexity of `corpus` under `model`. Interpolation uses the
/// trigram at `trigram` (default: `output_dir/trigram.model`) with the
/// configured weight, or a weight fitted on `output_dir/check.txt`.
pub fn cmd_ppl(
    cfg: &RunConfig,
    model: &Path,
    corpus: &Path,
    mode: PplMode,
    trigram: Option<&Path>,
    out: &mut (dyn Write + Send),
) -> Result<(), RunError> {
    with_workers(cfg, || {
        let vocab = load_vocab(cfg)?;
        let stream = match mode {
            PplMode::Interpolated => {
                let tri_path = trigram.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir.join(TRIGRAM_FILE));
                let lambda = match cfg.interpolation_weight {
                    Some(l) => l,
                    None => {
                        let check = cfg.output_dir.join("check.txt");
                        let s = stream_for(cfg, &vocab, PplMode::Causal, model, &check)?;
                        let t = stream_for(cfg, &vocab, PplMode::Trigram, &tri_path, &check)?;
                        let fit = fit_interpolation_weight(&s, &t)?;
                        if fit.degenerate {
                            log::warn!("identical streams on check data; using weight 0.5");
                        }
                        fit.lambda
                    }
                };
                let s = stream_for(cfg, &vocab, PplMode::Causal, model, corpus)?;
                let t = stream_for(cfg, &vocab, PplMode::Trigram, &tri_path, corpus)?;
                log::info!("trigram weight {lambda}");
                interpolate_streams(&s, &t, lambda)?
            }
            _ => stream_for(cfg, &vocab, mode, model, corpus)?,
        };
        let report = stream.report()?;
        writeln!(out, "{report}")?;
        write!(out, "{}", report.machine_lines())?;
        Ok(())
    })
}

/// Prints `logprob<TAB>parse` for every sentence of `text`.
pub fn cmd_parse(cfg: &RunConfig, model: &Path, text: &Path, out: &mut (dyn Write + Send)) -> Result<(), RunError> {
    with_workers(cfg, || {
        let vocab = load_vocab(cfg)?;
        let m = load_slm(model, &vocab)?;
        let corpus = encode_text(&read_text(text, "text")?, &vocab);
        use rayon::prelude::*;
        let lines: Vec<Result<String, RunError>> = corpus
            .par_iter()
            .map(|s| {
                let (d, lp) = best_parse(&m, s, &cfg.train.beam)?;
                Ok(format!("{lp:.4}\t{}", replay(&d, &vocab)?.render(&vocab)))
            })
            .collect();
        for l in lines {
            writeln!(out, "{}", l?)?;
        }
        Ok(())
    })
}

/// Trains the trigram baseline on the treebank words and prints its
/// perplexity on the test set (or the check set when no test set is given).
pub fn cmd_trigram(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<(), RunError> {
    with_workers(cfg, || {
        fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(&cfg.output_dir, e))?;
        let dev_trees = read_treebank(&cfg.dev, "dev", &cfg.drop_labels)?;
        let vocab = match load_vocab(cfg) {
            Ok(v) => v,
            Err(_) => {
                let binarized: Vec<Tree> = dev_trees.iter().map(binarize).collect();
                let v = build_vocab(&binarized, cfg.vocab_size)?;
                let mut w = create(&cfg.output_dir.join(VOCAB_FILE))?;
                v.write(&mut w)?;
                w.flush()?;
                v
            }
        };
        let encode = |trees: &[Tree]| encode_text(&sentences_text(trees), &vocab);
        let dev = encode(&dev_trees);
        let check = encode(&read_treebank(&cfg.check, "check", &cfg.drop_labels)?);
        let tri = train_trigram(&dev, &check, &vocab, &cfg.train.bucket_edges, cfg.train.lambda_iters)?;
        let path = cfg.output_dir.join(TRIGRAM_FILE);
        let mut w = create(&path)?;
        tri.model.write(&mut w)?;
        w.flush()?;
        let eval = match &cfg.test {
            Some(t) => encode(&read_treebank(t, "test", &cfg.drop_labels)?),
            None => check,
        };
        let report = tri.stream(&vocab, &eval).report()?;
        writeln!(out, "{report}")?;
        write!(out, "{}", report.machine_lines())?;
        Ok(())
    })
}
