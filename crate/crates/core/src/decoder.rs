//! Synchronous multi-stack beam search over word-parse prefixes.
//!
//! A grid at position `k` holds the hypotheses that have predicted `k`
//! words and handed control back to the predictor, one stack per adjoin
//! count. Advancing by a word shifts it with every tag, then runs the parser
//! stack by stack in increasing adjoin count: null moves a hypothesis to the
//! next grid, an adjoin moves it to the pending stack one adjoin higher.

use std::collections::BTreeMap;

use crate::corpus::vocab::{WordId, BOS, EOS};
use crate::error::{Error, Result};
use crate::model::{Derivation, Hypothesis, ParserAction, Slm};

pub const DEFAULT_STACK_DEPTH: usize = 100;
pub const DEFAULT_LOGPROB_THRESHOLD: f64 = 6.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub max_stack_depth: usize,
    pub logprob_threshold: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            max_stack_depth: DEFAULT_STACK_DEPTH,
            logprob_threshold: DEFAULT_LOGPROB_THRESHOLD,
        }
    }
}

impl BeamConfig {
    pub fn new(max_stack_depth: usize, logprob_threshold: f64) -> Result<Self> {
        if max_stack_depth == 0 {
            return Err(Error::InvalidArgument("beam depth must be at least 1".into()));
        }
        if logprob_threshold.is_nan() || logprob_threshold < 0.0 {
            return Err(Error::InvalidArgument("beam threshold must be non-negative".into()));
        }
        Ok(BeamConfig {
            max_stack_depth,
            logprob_threshold,
        })
    }

    /// No pruning at all: the search is exhaustive.
    pub fn unbounded() -> Self {
        BeamConfig {
            max_stack_depth: usize::MAX,
            logprob_threshold: f64::INFINITY,
        }
    }
}

fn rank(stack: &mut [Hypothesis]) {
    stack.sort_by(|a, b| b.logprob.total_cmp(&a.logprob));
}

/// Truncates a stack sorted by descending logprob to the configured depth
/// and threshold. Order among survivors is preserved.
pub fn prune(stack: &mut Vec<Hypothesis>, cfg: &BeamConfig) {
    stack.truncate(cfg.max_stack_depth);
    if let Some(top) = stack.first().map(|h| h.logprob) {
        let floor = top - cfg.logprob_threshold;
        stack.retain(|h| h.logprob >= floor);
    }
}

#[derive(Debug, Clone)]
pub struct StackGrid {
    k: usize,
    stacks: BTreeMap<usize, Vec<Hypothesis>>,
}

impl StackGrid {
    /// Position 0: the lone hypothesis `[(<s>, SB)]`.
    pub fn initial() -> Self {
        let mut stacks = BTreeMap::new();
        stacks.insert(0, vec![Hypothesis::initial()]);
        StackGrid { k: 0, stacks }
    }

    pub fn position(&self) -> usize {
        self.k
    }

    pub fn stack(&self, adjoins: usize) -> &[Hypothesis] {
        self.stacks.get(&adjoins).map_or(&[], Vec::as_slice)
    }

    /// Non-empty cells as (adjoin count, ranked stack).
    pub fn cells(&self) -> impl Iterator<Item = (usize, &[Hypothesis])> {
        self.stacks.iter().map(|(a, s)| (*a, s.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.stacks.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hypotheses(&self) -> impl Iterator<Item = &Hypothesis> {
        self.stacks.values().flatten()
    }

    /// Predicts `w_next` from every hypothesis and runs the parser until
    /// control returns to the predictor (or the parse completes).
    pub fn advance(&self, m: &Slm, w_next: WordId, cfg: &BeamConfig) -> Result<StackGrid> {
        let mut pending: BTreeMap<usize, Vec<Hypothesis>> = BTreeMap::new();
        for (&a, stack) in &self.stacks {
            for h in stack {
                let p_w = m.predict_word_prob(h, w_next);
                for (t, p_t) in m.tag_distribution(h, w_next) {
                    pending.entry(a).or_default().push(h.shift(w_next, t, p_w, p_t)?);
                }
            }
        }
        let mut ready: BTreeMap<usize, Vec<Hypothesis>> = BTreeMap::new();
        while let Some((a, mut stack)) = pending.pop_first() {
            rank(&mut stack);
            prune(&mut stack, cfg);
            for h in &stack {
                for (action, p) in m.action_distribution(h) {
                    let next = h.apply_action(action, p, &m.vocab)?;
                    if action == ParserAction::Null {
                        ready.entry(a).or_default().push(next);
                    } else if next.is_complete() {
                        ready.entry(a + 1).or_default().push(next);
                    } else {
                        pending.entry(a + 1).or_default().push(next);
                    }
                }
            }
        }
        for stack in ready.values_mut() {
            rank(stack);
            prune(stack, cfg);
        }
        ready.retain(|_, s| !s.is_empty());
        if ready.is_empty() {
            return Err(Error::SearchFailure(self.k + 1));
        }
        Ok(StackGrid {
            k: self.k + 1,
            stacks: ready,
        })
    }

    pub fn surviving_parses(&self) -> Result<ParseSet> {
        ParseSet::new(self.hypotheses().cloned().collect()).map_err(|_| Error::SearchFailure(self.k))
    }
}

/// Hypotheses with posteriors proportional to their joint probability.
#[derive(Debug, Clone)]
pub struct ParseSet {
    pub entries: Vec<(Hypothesis, f64)>,
}

impl ParseSet {
    pub fn new(hyps: Vec<Hypothesis>) -> Result<Self> {
        let max = hyps
            .iter()
            .map(|h| h.logprob)
            .fold(f64::NEG_INFINITY, f64::max);
        if hyps.is_empty() || max == f64::NEG_INFINITY {
            return Err(Error::Empty("parse set"));
        }
        let weights: Vec<f64> = hyps.iter().map(|h| (h.logprob - max).exp()).collect();
        let z: f64 = weights.iter().sum();
        Ok(ParseSet {
            entries: hyps.into_iter().zip(weights).map(|(h, w)| (h, w / z)).collect(),
        })
    }

    /// ln of the summed joint probability of the set.
    pub fn log_total(&self) -> f64 {
        let max = self
            .entries
            .iter()
            .map(|e| e.0.logprob)
            .fold(f64::NEG_INFINITY, f64::max);
        max + self.entries.iter().map(|e| (e.0.logprob - max).exp()).sum::<f64>().ln()
    }
}

fn check_sentence(sentence: &[WordId]) -> Result<()> {
    if sentence.len() < 2 || sentence[0] != BOS || sentence[sentence.len() - 1] != EOS {
        return Err(Error::InvalidArgument("sentence must be framed by <s> and </s>".into()));
    }
    if sentence[1..sentence.len() - 1].iter().any(|&w| w == BOS || w == EOS) {
        return Err(Error::InvalidArgument("sentence boundary inside a sentence".into()));
    }
    Ok(())
}

/// Decodes a framed sentence, calling `visit` with the grid at every
/// position `0..=n` before the next word is predicted. Returns the final
/// grid, which holds only complete parses.
pub fn decode_with<F>(m: &Slm, sentence: &[WordId], cfg: &BeamConfig, mut visit: F) -> Result<StackGrid>
where
    F: FnMut(&StackGrid, WordId) -> Result<()>,
{
    check_sentence(sentence)?;
    let mut grid = StackGrid::initial();
    for &w in &sentence[1..] {
        visit(&grid, w)?;
        grid = grid.advance(m, w, cfg)?;
    }
    Ok(grid)
}

pub fn decode(m: &Slm, sentence: &[WordId], cfg: &BeamConfig) -> Result<StackGrid> {
    decode_with(m, sentence, cfg, |_, _| Ok(()))
}

/// The highest-scoring surviving complete parse and its joint logprob.
pub fn best_parse(m: &Slm, sentence: &[WordId], cfg: &BeamConfig) -> Result<(Derivation, f64)> {
    let grid = decode(m, sentence, cfg)?;
    let mut best: Option<&Hypothesis> = None;
    for h in grid.hypotheses() {
        if best.is_none_or(|b| h.logprob > b.logprob) {
            best = Some(h);
        }
    }
    let h = best.ok_or(Error::SearchFailure(grid.k))?;
    Ok((h.derivation(), h.logprob))
}

/// Every surviving complete parse, best first, with ρ normalized over the set.
pub fn nbest_parses(m: &Slm, sentence: &[WordId], cfg: &BeamConfig) -> Result<Vec<(Derivation, f64)>> {
    let grid = decode(m, sentence, cfg)?;
    let mut set = grid.surviving_parses()?.entries;
    set.sort_by(|a, b| b.0.logprob.total_cmp(&a.0.logprob));
    Ok(set.into_iter().map(|(h, rho)| (h.derivation(), rho)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocab;
    use crate::model::ParserMode;
    use crate::smoothing::DEFAULT_BUCKET_EDGES;

    fn hyp(lp: f64) -> Hypothesis {
        let mut h = Hypothesis::initial();
        h.logprob = lp;
        h
    }

    fn model() -> Slm {
        let v = Vocab::new(["a", "b"], ["X", "Y"], ["P"]).unwrap();
        Slm::untrained(v, &DEFAULT_BUCKET_EDGES, 1e-4, ParserMode::Free).unwrap()
    }

    #[test]
    fn prune_truncates_to_depth() {
        let mut s: Vec<Hypothesis> = (0..5).map(|i| hyp(-(i as f64))).collect();
        prune(&mut s, &BeamConfig::new(3, 100.0).unwrap());
        assert_eq!(s.iter().map(|h| h.logprob).collect::<Vec<_>>(), vec![0.0, -1.0, -2.0]);
    }

    #[test]
    fn prune_applies_threshold() {
        let mut s = vec![hyp(0.0), hyp(-1.0), hyp(-9.0)];
        prune(&mut s, &BeamConfig::new(10, 5.0).unwrap());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn ties_keep_insertion_order() {
        let mut a = hyp(-1.0);
        a.words_predicted = 7;
        let mut b = hyp(-1.0);
        b.words_predicted = 8;
        let mut s = vec![hyp(0.0), a, b];
        rank(&mut s);
        prune(&mut s, &BeamConfig::new(2, 10.0).unwrap());
        assert_eq!(s[1].words_predicted, 7);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(BeamConfig::new(0, 1.0).is_err());
        assert!(BeamConfig::new(1, -1.0).is_err());
        assert!(BeamConfig::new(1, f64::NAN).is_err());
    }

    #[test]
    fn rho_normalization() {
        let set = ParseSet::new(vec![hyp(-2.0), hyp(-2.0)]).unwrap();
        assert_eq!(set.entries[0].1, 0.5);
        let set = ParseSet::new(vec![hyp(-700.0)]).unwrap();
        assert_eq!(set.entries[0].1, 1.0);
        let set = ParseSet::new(vec![hyp(-1.0), hyp(-2.0), hyp(-4.0)]).unwrap();
        let z = (-1.0f64).exp() + (-2.0f64).exp() + (-4.0f64).exp();
        for (e, lp) in set.entries.iter().zip([-1.0f64, -2.0, -4.0]) {
            assert!((e.1 - lp.exp() / z).abs() < 1e-12);
        }
        assert!(ParseSet::new(Vec::new()).is_err());
    }

    #[test]
    fn first_word_is_forced_null() {
        let m = model();
        let g = StackGrid::initial().advance(&m, 3, &BeamConfig::unbounded()).unwrap();
        assert_eq!(g.position(), 1);
        assert_eq!(g.cells().map(|c| c.0).collect::<Vec<_>>(), vec![0]);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn depth_one_keeps_one_per_cell() {
        let m = model();
        let cfg = BeamConfig::new(1, f64::INFINITY).unwrap();
        decode_with(&m, &[BOS, 3, 4, 3, EOS], &cfg, |g, _| {
            for (_, s) in g.cells() {
                assert_eq!(s.len(), 1);
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn one_word_sentence_has_unique_parse() {
        let m = model();
        let s = [BOS, 3, EOS];
        let all = nbest_parses(&m, &s, &BeamConfig::unbounded()).unwrap();
        // one parse per tag of the single word
        assert_eq!(all.len(), 2);
        let (d, lp) = best_parse(&m, &s, &BeamConfig::unbounded()).unwrap();
        assert!((m.joint_logprob(&d).unwrap() - lp).abs() < 1e-12);
        assert!((all.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn keys_match_hypotheses() {
        let m = model();
        let cfg = BeamConfig::new(4, 3.0).unwrap();
        let last = decode_with(&m, &[BOS, 3, 4, 4, 3, EOS], &cfg, |g, _| {
            for (a, s) in g.cells() {
                for h in s {
                    assert_eq!(h.words_predicted, g.position());
                    assert_eq!(h.adjoin_count, a);
                }
                assert!(s.windows(2).all(|w| w[0].logprob >= w[1].logprob));
            }
            Ok(())
        })
        .unwrap();
        assert!(last.hypotheses().all(Hypothesis::is_complete));
    }

    #[test]
    fn unframed_sentence_is_rejected() {
        let m = model();
        assert!(decode(&m, &[3, EOS], &BeamConfig::default()).is_err());
        assert!(decode(&m, &[BOS, EOS, 3, EOS], &BeamConfig::default()).is_err());
    }
}
