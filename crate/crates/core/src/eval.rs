//! Perplexity: the causal mixture over surviving parses, the best-parse
//! lower bound, a deleted-interpolation trigram, and linear interpolation
//! of per-word probability streams.
//!
//! Every sentence contributes one prediction per word plus one for `</s>`;
//! `<s>` is never predicted. Logs are natural.

use std::fmt;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::corpus::vocab::{Vocab, WordId, BOS};
use crate::decoder::{best_parse, decode_with, BeamConfig};
use crate::error::{Error, Result};
use crate::model::{walk_derivation, Slm, Step};
use crate::smoothing::{CountTable, LambdaBuckets, SmoothedModel};

pub const PROBS_HEADER: &str = "synlm-probs v1";
pub const TRIGRAM_ORDER: usize = 2;

pub fn perplexity(total_logprob: f64, word_count: usize) -> Result<f64> {
    if word_count == 0 {
        return Err(Error::Empty("word count"));
    }
    Ok((-total_logprob / word_count as f64).exp())
}

/// Per-word log-probabilities for a corpus, one entry per sentence; `None`
/// marks a sentence the decoder could not score.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbStream {
    pub vocab_hash: String,
    pub sentences: Vec<Option<Vec<(WordId, f64)>>>,
}

impl ProbStream {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{PROBS_HEADER}")?;
        writeln!(w, "vocab {}", self.vocab_hash)?;
        writeln!(w, "sentences {}", self.sentences.len())?;
        for (i, s) in self.sentences.iter().enumerate() {
            match s {
                None => writeln!(w, "failed {i}")?,
                Some(words) => {
                    for (j, (id, lp)) in words.iter().enumerate() {
                        writeln!(w, "{i} {j} {id} {lp}")?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(Error::format(0, format!("missing {what}"))),
            }
        };
        let (n, header) = next("header")?;
        if header.trim() != PROBS_HEADER {
            return Err(Error::format(n, format!("expected `{PROBS_HEADER}`")));
        }
        let (n, line) = next("vocab line")?;
        let vocab_hash = line
            .strip_prefix("vocab ")
            .ok_or_else(|| Error::format(n, "expected `vocab <hash>`"))?
            .trim()
            .to_string();
        let (n, line) = next("sentence count")?;
        let count: usize = line
            .strip_prefix("sentences ")
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::format(n, "expected `sentences <count>`"))?;
        let mut sentences: Vec<Option<Vec<(WordId, f64)>>> = vec![Some(Vec::new()); count];
        for (i, line) in lines {
            let n = i + 1;
            let line = line?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format(n, format!("malformed stream line `{line}`"));
            match parts.as_slice() {
                [] => {}
                ["failed", s] => {
                    let s: usize = s.parse().map_err(|_| bad())?;
                    *sentences.get_mut(s).ok_or_else(bad)? = None;
                }
                [s, j, id, lp] => {
                    let s: usize = s.parse().map_err(|_| bad())?;
                    let j: usize = j.parse().map_err(|_| bad())?;
                    let id: WordId = id.parse().map_err(|_| bad())?;
                    let lp: f64 = lp.parse().map_err(|_| bad())?;
                    let words = sentences.get_mut(s).ok_or_else(bad)?.as_mut().ok_or_else(bad)?;
                    if words.len() != j {
                        return Err(bad());
                    }
                    words.push((id, lp));
                }
                _ => return Err(bad()),
            }
        }
        Ok(ProbStream {
            vocab_hash,
            sentences,
        })
    }

    pub fn report(&self) -> Result<PplReport> {
        PplReport::from_sentences(self.sentences.iter().map(|s| {
            s.as_ref()
                .map(|w| SentenceScore {
                    words: w.len(),
                    logprob: w.iter().map(|x| x.1).sum(),
                })
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SentenceScore {
    pub words: usize,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PplReport {
    pub word_count: usize,
    pub total_logprob: f64,
    pub ppl: f64,
    pub sentences: Vec<Option<SentenceScore>>,
    /// Sentences left out because the search failed.
    pub failures: usize,
}

impl PplReport {
    pub fn from_sentences(scores: impl IntoIterator<Item = Option<SentenceScore>>) -> Result<Self> {
        let sentences: Vec<Option<SentenceScore>> = scores.into_iter().collect();
        let scored = sentences.iter().flatten();
        let word_count = scored.clone().map(|s| s.words).sum();
        let total_logprob = scored.map(|s| s.logprob).sum();
        let failures = sentences.iter().filter(|s| s.is_none()).count();
        Ok(PplReport {
            word_count,
            total_logprob,
            ppl: perplexity(total_logprob, word_count)?,
            sentences,
            failures,
        })
    }

    /// `key=value` lines at full precision.
    pub fn machine_lines(&self) -> String {
        format!(
            "words={}\nlogprob={}\nppl={}\nfailures={}\n",
            self.word_count, self.total_logprob, self.ppl, self.failures
        )
    }
}

impl fmt::Display for PplReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>14}", "sentences", self.sentences.len())?;
        writeln!(f, "{:<10} {:>14}", "failed", self.failures)?;
        writeln!(f, "{:<10} {:>14}", "words", self.word_count)?;
        writeln!(f, "{:<10} {:>14.4}", "logprob", self.total_logprob)?;
        write!(f, "{:<10} {:>14.4}", "ppl", self.ppl)
    }
}

fn collect_stream<F>(vocab: &Vocab, corpus: &[Vec<WordId>], score: F) -> ProbStream
where
    F: Fn(&[WordId]) -> Result<Vec<(WordId, f64)>> + Sync,
{
    let sentences = corpus
        .par_iter()
        .enumerate()
        .map(|(i, s)| match score(s) {
            Ok(words) => Some(words),
            Err(e) => {
                log::warn!("sentence {i} not scored: {e}");
                None
            }
        })
        .collect();
    ProbStream {
        vocab_hash: vocab.hash(),
        sentences,
    }
}

/// ln P(w_{k+1} | W_k) for every position of one sentence, mixing the
/// word probabilities of the parses that survive before each word.
pub fn causal_sentence(m: &Slm, sentence: &[WordId], cfg: &BeamConfig) -> Result<Vec<(WordId, f64)>> {
    let mut out = Vec::with_capacity(sentence.len());
    decode_with(m, sentence, cfg, |grid, w| {
        let set = grid.surviving_parses()?;
        let p: f64 = set.entries.iter().map(|(h, rho)| rho * m.l2r_word_prob(h, w)).sum();
        out.push((w, p.ln()));
        Ok(())
    })?;
    Ok(out)
}

pub fn causal_stream(m: &Slm, corpus: &[Vec<WordId>], cfg: &BeamConfig) -> ProbStream {
    collect_stream(&m.vocab, corpus, |s| causal_sentence(m, s, cfg))
}

pub fn ppl_causal(m: &Slm, corpus: &[Vec<WordId>], cfg: &BeamConfig) -> Result<PplReport> {
    causal_stream(m, corpus, cfg).report()
}

/// Word probabilities along the prefixes of the best complete parse. Not a
/// valid language model: the parse is chosen after seeing the sentence.
pub fn lower_bound_sentence(m: &Slm, sentence: &[WordId], cfg: &BeamConfig) -> Result<Vec<(WordId, f64)>> {
    let (best, _) = best_parse(m, sentence, cfg)?;
    let mut out = Vec::with_capacity(sentence.len());
    walk_derivation(&best, &m.vocab, m.parser_mode, |h, step| {
        if let Step::Word(w) = step {
            out.push((w, m.l2r_word_prob(h, w).ln()));
        }
    })?;
    Ok(out)
}

pub fn lower_bound_stream(m: &Slm, corpus: &[Vec<WordId>], cfg: &BeamConfig) -> ProbStream {
    collect_stream(&m.vocab, corpus, |s| lower_bound_sentence(m, s, cfg))
}

pub fn ppl_lower_bound(m: &Slm, corpus: &[Vec<WordId>], cfg: &BeamConfig) -> Result<PplReport> {
    lower_bound_stream(m, corpus, cfg).report()
}

/// Deleted-interpolation trigram over word ids, contexts `(w_{i-1}, w_{i-2})`
/// padded with `<s>` at the sentence start.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigramModel {
    pub model: SmoothedModel,
}

fn trigram_events(sentence: &[WordId]) -> impl Iterator<Item = ([u32; TRIGRAM_ORDER], WordId)> + '_ {
    (1..sentence.len()).map(move |i| {
        let prev2 = if i >= 2 { sentence[i - 2] } else { BOS };
        ([sentence[i - 1], prev2], sentence[i])
    })
}

pub fn trigram_counts(corpus: &[Vec<WordId>]) -> Result<CountTable> {
    let mut t = CountTable::new(TRIGRAM_ORDER);
    for s in corpus {
        for (ctx, w) in trigram_events(s) {
            t.add_count(&ctx, w - 1, 1.0)?;
        }
    }
    Ok(t)
}

impl TrigramModel {
    pub fn new(model: SmoothedModel) -> Result<Self> {
        if model.order() != TRIGRAM_ORDER {
            return Err(Error::OrderMismatch(TRIGRAM_ORDER, model.order()));
        }
        Ok(TrigramModel { model })
    }

    pub fn prob(&self, ctx: [u32; TRIGRAM_ORDER], w: WordId) -> f64 {
        if w == BOS {
            return 0.0;
        }
        self.model.prob(&ctx, w - 1)
    }

    pub fn sentence(&self, sentence: &[WordId]) -> Vec<(WordId, f64)> {
        trigram_events(sentence)
            .map(|(ctx, w)| (w, self.prob(ctx, w).ln()))
            .collect()
    }

    pub fn stream(&self, vocab: &Vocab, corpus: &[Vec<WordId>]) -> ProbStream {
        collect_stream(vocab, corpus, |s| Ok(self.sentence(s)))
    }
}

/// Counts from `dev`, interpolation weights by EM on `check`.
pub fn train_trigram(
    dev: &[Vec<WordId>],
    check: &[Vec<WordId>],
    vocab: &Vocab,
    edges: &[f64],
    lambda_iters: usize,
) -> Result<TrigramModel> {
    if dev.is_empty() {
        return Err(Error::Empty("development corpus"));
    }
    if check.is_empty() {
        return Err(Error::Empty("check corpus"));
    }
    let mut model = SmoothedModel::new(
        trigram_counts(dev)?,
        LambdaBuckets::new(TRIGRAM_ORDER, edges)?,
        vocab.num_predictable_words(),
    )?;
    let est = model.estimate_lambdas_em(&trigram_counts(check)?, lambda_iters)?;
    model.lambdas = est.lambdas;
    TrigramModel::new(model)
}

fn check_aligned(slm: &ProbStream, tri: &ProbStream) -> Result<()> {
    if slm.vocab_hash != tri.vocab_hash {
        return Err(Error::VocabMismatch(slm.vocab_hash.clone(), tri.vocab_hash.clone()));
    }
    if slm.sentences.len() != tri.sentences.len() {
        return Err(Error::InvalidArgument("streams cover different corpora".into()));
    }
    for (a, b) in slm.sentences.iter().zip(&tri.sentences) {
        if let (Some(a), Some(b)) = (a, b) {
            if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.0 != y.0) {
                return Err(Error::InvalidArgument("streams disagree on the words".into()));
            }
        }
    }
    Ok(())
}

fn mix(lambda: f64, tri: f64, slm: f64) -> f64 {
    if lambda == 0.0 {
        return slm;
    }
    if lambda == 1.0 {
        return tri;
    }
    let a = lambda.ln() + tri;
    let b = (1.0 - lambda).ln() + slm;
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Per-word `λ·P_tri + (1-λ)·P_slm`. Sentences unscored by either stream
/// stay unscored.
pub fn interpolate_streams(slm: &ProbStream, tri: &ProbStream, lambda: f64) -> Result<ProbStream> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("interpolation weight {lambda} outside [0, 1]")));
    }
    check_aligned(slm, tri)?;
    let sentences = slm
        .sentences
        .iter()
        .zip(&tri.sentences)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(x, y)| (x.0, mix(lambda, y.1, x.1))).collect()),
            _ => None,
        })
        .collect();
    Ok(ProbStream {
        vocab_hash: slm.vocab_hash.clone(),
        sentences,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpolationFit {
    pub lambda: f64,
    /// The streams were identical, so every weight is optimal.
    pub degenerate: bool,
}

pub const FIT_TOLERANCE: f64 = 1e-4;

/// The trigram weight maximizing the log-likelihood of the paired streams.
pub fn fit_interpolation_weight(slm: &ProbStream, tri: &ProbStream) -> Result<InterpolationFit> {
    check_aligned(slm, tri)?;
    let pairs: Vec<(f64, f64)> = slm
        .sentences
        .iter()
        .zip(&tri.sentences)
        .filter_map(|(a, b)| Some(a.as_ref()?.iter().zip(b.as_ref()?).map(|(x, y)| (y.1, x.1))))
        .flatten()
        .collect();
    if pairs.is_empty() {
        return Err(Error::Empty("probability streams"));
    }
    if pairs.iter().all(|(t, s)| t == s) {
        return Ok(InterpolationFit {
            lambda: 0.5,
            degenerate: true,
        });
    }
    let ll = |l: f64| pairs.iter().map(|&(t, s)| mix(l, t, s)).sum::<f64>();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (ll(c), ll(d));
    while b - a > FIT_TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = ll(d);
        }
    }
    let mid = (a + b) / 2.0;
    let lambda = [0.0, 1.0]
        .into_iter()
        .fold((mid, ll(mid)), |best, l| {
            let v = ll(l);
            if v > best.1 {
                (l, v)
            } else {
                best
            }
        })
        .0;
    Ok(InterpolationFit {
        lambda,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::EOS;
    use crate::model::ParserMode;
    use crate::smoothing::DEFAULT_BUCKET_EDGES;

    fn stream(lps: &[&[f64]]) -> ProbStream {
        ProbStream {
            vocab_hash: "h".into(),
            sentences: lps
                .iter()
                .map(|s| Some(s.iter().enumerate().map(|(i, &lp)| (i as u32 + 1, lp)).collect()))
                .collect(),
        }
    }

    #[test]
    fn perplexity_identities() {
        assert_eq!(perplexity(0.0, 5).unwrap(), 1.0);
        let half = 0.5f64.ln();
        assert!((perplexity(7.0 * half, 7).unwrap() - 2.0).abs() < 1e-12);
        assert!(perplexity(-1.0, 0).is_err());
    }

    #[test]
    fn report_recomputes_from_fields() {
        let s = stream(&[&[-1.0, -2.0], &[-0.5]]);
        let r = s.report().unwrap();
        assert_eq!(r.word_count, 3);
        assert_eq!(r.ppl, (-r.total_logprob / r.word_count as f64).exp());
    }

    #[test]
    fn stream_round_trip_with_failure() {
        let mut s = stream(&[&[-1.25, -0.1], &[-3.0]]);
        s.sentences.push(None);
        let mut buf = Vec::new();
        s.write(&mut buf).unwrap();
        assert_eq!(ProbStream::read(buf.as_slice()).unwrap(), s);
        assert_eq!(s.report().unwrap().failures, 1);
    }

    #[test]
    fn untrained_causal_is_uniform() {
        let v = Vocab::new(["a", "b"], ["X"], ["P"]).unwrap();
        let m = Slm::untrained(v, &DEFAULT_BUCKET_EDGES, 1e-4, ParserMode::Free).unwrap();
        let corpus = vec![vec![BOS, 3, 4, 2, EOS], vec![BOS, 4, EOS]];
        let r = ppl_causal(&m, &corpus, &BeamConfig::unbounded()).unwrap();
        assert_eq!(r.word_count, 6);
        assert!((r.ppl - 4.0).abs() < 1e-9);
        let lb = ppl_lower_bound(&m, &corpus, &BeamConfig::unbounded()).unwrap();
        assert!((lb.ppl - 4.0).abs() < 1e-9);
    }

    #[test]
    fn trigram_counts_direct() {
        let t = trigram_counts(&[vec![BOS, 3, 4, EOS]]).unwrap();
        assert_eq!(t.count(2, &[3, BOS], 4 - 1), 1.0);
        assert_eq!(t.count(2, &[BOS, BOS], 3 - 1), 1.0);
        assert_eq!(t.count(2, &[4, 3], EOS - 1), 1.0);
        assert_eq!(t.total(), 3.0);
    }

    #[test]
    fn trigram_needs_data() {
        let v = Vocab::new(["a"], ["X"], ["P"]).unwrap();
        let c = vec![vec![BOS, 3, EOS]];
        assert!(train_trigram(&[], &c, &v, &DEFAULT_BUCKET_EDGES, 5).is_err());
        assert!(train_trigram(&c, &[], &v, &DEFAULT_BUCKET_EDGES, 5).is_err());
    }

    #[test]
    fn interpolation_endpoints_are_exact() {
        let a = stream(&[&[-1.1, -2.3], &[-0.7]]);
        let b = stream(&[&[-0.9, -2.9], &[-0.2]]);
        assert_eq!(interpolate_streams(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate_streams(&a, &b, 1.0).unwrap(), b);
        let mut c = b.clone();
        c.vocab_hash = "other".into();
        assert!(matches!(interpolate_streams(&a, &c, 0.5), Err(Error::VocabMismatch(..))));
    }

    #[test]
    fn identical_streams_are_degenerate() {
        let a = stream(&[&[-1.0, -2.0]]);
        let fit = fit_interpolation_weight(&a, &a).unwrap();
        assert_eq!(fit, InterpolationFit { lambda: 0.5, degenerate: true });
    }

    #[test]
    fn dominant_stream_wins() {
        let slm = stream(&[&[-1.0, -1.5, -0.5]]);
        let tri = stream(&[&[-2.0, -2.5, -1.5]]);
        assert_eq!(fit_interpolation_weight(&slm, &tri).unwrap().lambda, 0.0);
        assert_eq!(fit_interpolation_weight(&tri, &slm).unwrap().lambda, 1.0);
    }

    #[test]
    fn fit_matches_grid() {
        let slm = stream(&[&[-1.0, -4.0, -0.3, -2.2], &[-3.0, -0.1]]);
        let tri = stream(&[&[-2.0, -1.0, -1.3, -1.2], &[-0.5, -2.0]]);
        let fit = fit_interpolation_weight(&slm, &tri).unwrap();
        let ll = |l: f64| -> f64 {
            let mut s = 0.0;
            for (a, b) in slm.sentences.iter().zip(&tri.sentences) {
                for (x, y) in a.as_ref().unwrap().iter().zip(b.as_ref().unwrap()) {
                    s += (l * y.1.exp() + (1.0 - l) * x.1.exp()).ln();
                }
            }
            s
        };
        let grid = (0..=1000).map(|i| i as f64 / 1000.0).fold((0.0, f64::NEG_INFINITY), |b, l| {
            let v = ll(l);
            if v > b.1 {
                (l, v)
            } else {
                b
            }
        });
        assert!((fit.lambda - grid.0).abs() < 1e-3, "{} vs {}", fit.lambda, grid.0);
    }
}
