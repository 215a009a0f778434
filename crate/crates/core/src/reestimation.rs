//! Parameter estimation: initialization from hand-parsed trees, N-best EM
//! over surviving parses, and EM for the separate left-to-right word
//! predictor with the structure components held fixed.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::corpus::vocab::{Vocab, WordId};
use crate::corpus::{derivation_of, HeadedTree};
use crate::decoder::{decode_with, nbest_parses, BeamConfig};
use crate::error::{Error, Result};
use crate::model::slm::{predictor_context, word_outcome, PREDICTOR_ORDER};
use crate::model::{Derivation, ParserMode, Slm, SlmCounts};
use crate::smoothing::{CountTable, SmoothedModel, DEFAULT_BUCKET_EDGES};

pub const DEFAULT_LAMBDA_ITERS: usize = 20;
pub const DEFAULT_FIRST_PASS_ITERS: usize = 3;
pub const DEFAULT_L2R_ITERS: usize = 5;

/// Weighted move events for the three structure components.
pub type MoveCounter = SlmCounts;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub beam: BeamConfig,
    pub first_pass_iters: usize,
    pub l2r_iters: usize,
    pub lambda_iters: usize,
    pub bucket_edges: Vec<f64>,
    pub eos_epsilon: f64,
    pub parser_mode: ParserMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beam: BeamConfig::default(),
            first_pass_iters: DEFAULT_FIRST_PASS_ITERS,
            l2r_iters: DEFAULT_L2R_ITERS,
            lambda_iters: DEFAULT_LAMBDA_ITERS,
            bucket_edges: DEFAULT_BUCKET_EDGES.to_vec(),
            eos_epsilon: crate::model::slm::DEFAULT_EOS_EPSILON,
            parser_mode: ParserMode::Free,
        }
    }
}

/// Check-data log-likelihood traces from one round of weight estimation,
/// one per component that had check events.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LambdaTraces {
    pub traces: Vec<(&'static str, Vec<f64>)>,
}

impl LambdaTraces {
    pub fn is_monotone(&self, tolerance: f64) -> bool {
        self.traces
            .iter()
            .all(|(_, t)| t.windows(2).all(|w| w[1] >= w[0] - tolerance))
    }
}

fn fit_lambdas(model: &mut SmoothedModel, check: &CountTable, iters: usize) -> Result<Option<Vec<f64>>> {
    if check.is_empty() {
        return Ok(None);
    }
    let est = model.estimate_lambdas_em(check, iters)?;
    model.lambdas = est.lambdas;
    Ok(Some(est.log_likelihoods))
}

/// Re-estimates the weights of the three structure components on `check`.
/// Components without check events keep their weights.
pub fn reestimate_lambdas(m: &mut Slm, check: &MoveCounter, iters: usize) -> Result<LambdaTraces> {
    let mut out = LambdaTraces::default();
    for (name, model, table) in [
        ("predictor", &mut m.predictor, &check.predictor),
        ("tagger", &mut m.tagger, &check.tagger),
        ("parser", &mut m.parser, &check.parser),
    ] {
        if let Some(t) = fit_lambdas(model, table, iters)? {
            out.traces.push((name, t));
        }
    }
    Ok(out)
}

/// Derivations of the trees that form complete parses, with the number
/// skipped.
pub fn derivations_of(trees: &[HeadedTree], vocab: &Vocab) -> (Vec<Derivation>, usize) {
    let mut out = Vec::with_capacity(trees.len());
    let mut skipped = 0;
    for t in trees {
        match derivation_of(t, vocab) {
            Ok(d) => out.push(d),
            Err(e) => {
                log::warn!("skipping tree: {e}");
                skipped += 1;
            }
        }
    }
    (out, skipped)
}

pub fn count_derivations<'a, I>(ds: I, vocab: &Vocab, mode: ParserMode) -> Result<MoveCounter>
where
    I: IntoIterator<Item = (&'a Derivation, f64)>,
{
    let mut c = MoveCounter::default();
    for (d, w) in ds {
        c.add_derivation(d, vocab, mode, w)?;
    }
    Ok(c)
}

/// The E0 model: counts from `dev` with unit weight, interpolation weights
/// by EM on the counts of `check`.
pub fn init_from_treebank(dev: &[Derivation], check: &[Derivation], vocab: Vocab, cfg: &TrainConfig) -> Result<(Slm, LambdaTraces)> {
    if dev.is_empty() {
        return Err(Error::Empty("development derivations"));
    }
    if check.is_empty() {
        return Err(Error::Empty("check derivations"));
    }
    let counts = count_derivations(dev.iter().map(|d| (d, 1.0)), &vocab, cfg.parser_mode)?;
    let check_counts = count_derivations(check.iter().map(|d| (d, 1.0)), &vocab, cfg.parser_mode)?;
    let mut m = Slm::from_counts(vocab, counts, &cfg.bucket_edges, cfg.eos_epsilon, cfg.parser_mode)?;
    let traces = reestimate_lambdas(&mut m, &check_counts, cfg.lambda_iters)?;
    Ok((m, traces))
}

/// Surviving complete parses and their ρ for every sentence; `None` where
/// the search failed.
pub fn nbest_corpus(m: &Slm, corpus: &[Vec<WordId>], beam: &BeamConfig) -> Vec<Option<Vec<(Derivation, f64)>>> {
    corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| match nbest_parses(m, s, beam) {
            Ok(set) => Some(set),
            Err(e) => {
                log::warn!("sentence {i} skipped: {e}");
                None
            }
        })
        .collect()
}

/// ρ-weighted move counts over the surviving parses of every sentence.
pub fn expected_counts(m: &Slm, corpus: &[Vec<WordId>], beam: &BeamConfig) -> Result<(MoveCounter, usize)> {
    let sets = nbest_corpus(m, corpus, beam);
    let failures = sets.iter().filter(|s| s.is_none()).count();
    let counts = count_derivations(
        sets.iter().flatten().flatten().map(|(d, rho)| (d, *rho)),
        &m.vocab,
        m.parser_mode,
    )?;
    Ok((counts, failures))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub lambda_traces: LambdaTraces,
    pub dev_failures: usize,
    pub check_failures: usize,
}

/// One N-best EM iteration: counts from the parses of `dev` that survive
/// the beam under `m`, weighted by ρ; weights re-estimated on the same
/// kind of counts from `check`, starting from the weights of `m`.
pub fn first_pass_iteration(m: &Slm, dev: &[Vec<WordId>], check: &[Vec<WordId>], cfg: &TrainConfig) -> Result<(Slm, IterationStats)> {
    let (counts, dev_failures) = expected_counts(m, dev, &cfg.beam)?;
    if counts.predictor.is_empty() {
        return Err(Error::Empty("development parses"));
    }
    let (check_counts, check_failures) = expected_counts(m, check, &cfg.beam)?;
    let mut next = m.clone();
    next.l2r = None;
    next.predictor.table = counts.predictor;
    next.tagger.table = counts.tagger;
    next.parser.table = counts.parser;
    let lambda_traces = reestimate_lambdas(&mut next, &check_counts, cfg.lambda_iters)?;
    Ok((
        next,
        IterationStats {
            lambda_traces,
            dev_failures,
            check_failures,
        },
    ))
}

/// Starts the left-to-right predictor as an exact copy of the structure
/// predictor, counts and weights alike.
pub fn seed_l2r(m: &Slm) -> Slm {
    let mut out = m.clone();
    out.l2r = Some(m.predictor.clone());
    out
}

/// The word at one position and the predictor contexts offered by the
/// surviving parses, with their summed ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionMixture {
    pub word: WordId,
    pub contexts: Vec<([u32; PREDICTOR_ORDER], f64)>,
}

/// Per-position mixtures of a corpus under fixed structure components.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureCache {
    pub sentences: Vec<Option<Vec<PositionMixture>>>,
}

fn sentence_mixtures(m: &Slm, sentence: &[WordId], beam: &BeamConfig) -> Result<Vec<PositionMixture>> {
    let mut out = Vec::with_capacity(sentence.len());
    decode_with(m, sentence, beam, |grid, w| {
        let set = grid.surviving_parses()?;
        let mut merged: BTreeMap<[u32; PREDICTOR_ORDER], f64> = BTreeMap::new();
        for (h, rho) in &set.entries {
            *merged.entry(predictor_context(h)).or_default() += rho;
        }
        out.push(PositionMixture {
            word: w,
            contexts: merged.into_iter().collect(),
        });
        Ok(())
    })?;
    Ok(out)
}

impl MixtureCache {
    pub fn build(m: &Slm, corpus: &[Vec<WordId>], beam: &BeamConfig) -> Self {
        let sentences = corpus
            .par_iter()
            .enumerate()
            .map(|(i, s)| match sentence_mixtures(m, s, beam) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::warn!("sentence {i} skipped: {e}");
                    None
                }
            })
            .collect();
        MixtureCache { sentences }
    }

    fn positions(&self) -> impl Iterator<Item = &PositionMixture> {
        self.sentences.iter().flatten().flatten()
    }

    /// Causal log-likelihood of the cached positions under the left-to-right
    /// predictor of `m`, and the number of positions.
    pub fn log_likelihood(&self, m: &Slm) -> (f64, usize) {
        let mut ll = 0.0;
        let mut n = 0;
        for p in self.positions() {
            let prob: f64 = p.contexts.iter().map(|(c, rho)| rho * m.l2r_word_prob_in(c, p.word)).sum();
            ll += prob.ln();
            n += 1;
        }
        (ll, n)
    }

    /// Expected emission counts: each context gets its posterior share of
    /// the observed word, ρ·P(w|ctx) normalized over the position.
    pub fn posterior_counts(&self, m: &Slm) -> Result<CountTable> {
        let mut t = CountTable::new(PREDICTOR_ORDER);
        for p in self.positions() {
            let joint: Vec<f64> = p.contexts.iter().map(|(c, rho)| rho * m.l2r_word_prob_in(c, p.word)).collect();
            let z: f64 = joint.iter().sum();
            for ((c, _), j) in p.contexts.iter().zip(joint) {
                t.add_count(c, word_outcome(p.word), j / z)?;
            }
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2rStats {
    pub lambda_trace: Option<Vec<f64>>,
    pub dev_log_likelihood: f64,
    pub check_log_likelihood: f64,
}

/// One EM iteration of the left-to-right predictor. The structure
/// components are untouched, so the caches built under them stay valid.
pub fn l2r_pass_iteration(m: &Slm, dev: &MixtureCache, check: &MixtureCache, cfg: &TrainConfig) -> Result<(Slm, L2rStats)> {
    let current = m
        .l2r
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("left-to-right predictor not seeded".into()))?;
    let counts = dev.posterior_counts(m)?;
    if counts.is_empty() {
        return Err(Error::Empty("development positions"));
    }
    let check_counts = check.posterior_counts(m)?;
    let mut l2r = SmoothedModel::new(counts, current.lambdas.clone(), current.outcome_vocab_size())?;
    let lambda_trace = fit_lambdas(&mut l2r, &check_counts, cfg.lambda_iters)?;
    let mut next = m.clone();
    next.l2r = Some(l2r);
    let dev_log_likelihood = dev.log_likelihood(&next).0;
    let check_log_likelihood = check.log_likelihood(&next).0;
    Ok((
        next,
        L2rStats {
            lambda_trace,
            dev_log_likelihood,
            check_log_likelihood,
        },
    ))
}
