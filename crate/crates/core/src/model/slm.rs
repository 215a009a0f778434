//! The structured language model: predictor, tagger and parser components
//! over the exposed heads of a word-parse prefix.
//!
//! Context tuples, nearest first:
//!
//! | component | context                                     | outcome            |
//! |-----------|---------------------------------------------|--------------------|
//! | predictor | h0.word, h0.tag, h-1.word, h-1.tag          | word id - 1        |
//! | tagger    | w, h0.tag, h-1.tag                          | POS id - 2         |
//! | parser    | h0.word, h0.tag, h-1.word, h-1.tag          | action id          |

use std::io::{BufRead, Write};

use crate::corpus::vocab::{PosId, Vocab, WordId, BOS, EOS, RESERVED_POS, SE};
use crate::error::{Error, Result};
use crate::model::transition::{Derivation, Hypothesis, Move, ParserAction, ParserMode};
use crate::smoothing::{CountTable, LambdaBuckets, SmoothedModel};

pub const PREDICTOR_ORDER: usize = 4;
pub const TAGGER_ORDER: usize = 3;
pub const PARSER_ORDER: usize = 4;
pub const DEFAULT_EOS_EPSILON: f64 = 1e-4;
pub const SLM_HEADER: &str = "synlm-slm v1";

pub fn predictor_context(h: &Hypothesis) -> [u32; PREDICTOR_ORDER] {
    let (h0, h1) = (h.h0(), h.h1());
    [h0.word, h0.tag, h1.word, h1.tag]
}

pub fn tagger_context(h: &Hypothesis, w: WordId) -> [u32; TAGGER_ORDER] {
    [w, h.h0().tag, h.h1().tag]
}

pub fn parser_context(h: &Hypothesis) -> [u32; PARSER_ORDER] {
    predictor_context(h)
}

pub fn word_outcome(w: WordId) -> u32 {
    w - 1
}

fn pos_outcome(t: PosId) -> u32 {
    t - RESERVED_POS
}

/// One probabilistic step of a derivation, seen from the state it is taken in.
#[derive(Debug, Clone, Copy)]
pub enum Step {
    Word(WordId),
    /// Tag `pos` for the word just predicted.
    Tag(WordId, PosId),
    Action(ParserAction),
}

/// Replays `d`, calling `visit` with the state before every step. `</s>` gets
/// no tag step. Fails unless `d` ends in a complete parse and every action is
/// legal under `mode`.
pub fn walk_derivation<F>(d: &Derivation, vocab: &Vocab, mode: ParserMode, mut visit: F) -> Result<()>
where
    F: FnMut(&Hypothesis, Step),
{
    let mut h = Hypothesis::initial();
    let mut moves = d.moves.iter();
    while let Some(mv) = moves.next() {
        match *mv {
            Move::Predict(w) => {
                if w == BOS || w as usize >= vocab.num_words() {
                    return Err(Error::MalformedDerivation(format!("word id {w} cannot be predicted")));
                }
                visit(&h, Step::Word(w));
                let t = if w == EOS {
                    SE
                } else {
                    match moves.next() {
                        Some(Move::Tag(t)) if (*t as usize) < vocab.num_pos() => *t,
                        _ => {
                            return Err(Error::MalformedDerivation(
                                "prediction not followed by a valid tag".into(),
                            ))
                        }
                    }
                };
                if w != EOS {
                    visit(&h, Step::Tag(w, t));
                }
                h = h.shift(w, t, 1.0, 1.0)?;
            }
            Move::Tag(_) => return Err(Error::MalformedDerivation("tag without a prediction".into())),
            Move::Parse(a) => {
                if !h.legal_actions(vocab, mode).contains(&a) {
                    return Err(Error::IllegalAction {
                        action: a.label(vocab),
                        state: h.describe(vocab),
                    });
                }
                visit(&h, Step::Action(a));
                h = h.apply_action(a, 1.0, vocab)?;
            }
        }
    }
    if !h.is_complete() {
        return Err(Error::MalformedDerivation("derivation does not end in a complete parse".into()));
    }
    Ok(())
}

/// Weighted event counts for the three structure components.
#[derive(Debug, Clone, PartialEq)]
pub struct SlmCounts {
    pub predictor: CountTable,
    pub tagger: CountTable,
    pub parser: CountTable,
}

impl Default for SlmCounts {
    fn default() -> Self {
        SlmCounts {
            predictor: CountTable::new(PREDICTOR_ORDER),
            tagger: CountTable::new(TAGGER_ORDER),
            parser: CountTable::new(PARSER_ORDER),
        }
    }
}

impl SlmCounts {
    /// Adds every event of `d` with `weight`. Parser events in states with a
    /// single legal action are skipped.
    pub fn add_derivation(&mut self, d: &Derivation, vocab: &Vocab, mode: ParserMode, weight: f64) -> Result<()> {
        let mut events = Vec::new();
        walk_derivation(d, vocab, mode, |h, step| match step {
            Step::Word(w) => events.push((0, predictor_context(h).to_vec(), word_outcome(w))),
            Step::Tag(w, t) => events.push((1, tagger_context(h, w).to_vec(), pos_outcome(t))),
            Step::Action(a) => {
                if !h.is_forced(vocab, mode) {
                    events.push((2, parser_context(h).to_vec(), a.id()));
                }
            }
        })?;
        for (which, ctx, y) in events {
            let table = match which {
                0 => &mut self.predictor,
                1 => &mut self.tagger,
                _ => &mut self.parser,
            };
            table.add_count(&ctx, y, weight)?;
        }
        Ok(())
    }

    pub fn merge_from(&mut self, other: &SlmCounts) -> Result<()> {
        self.predictor.merge_from(&other.predictor)?;
        self.tagger.merge_from(&other.tagger)?;
        self.parser.merge_from(&other.parser)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slm {
    pub vocab: Vocab,
    pub predictor: SmoothedModel,
    pub tagger: SmoothedModel,
    pub parser: SmoothedModel,
    pub l2r: Option<SmoothedModel>,
    pub eos_epsilon: f64,
    pub parser_mode: ParserMode,
}

impl Slm {
    /// A model with no counts; every component is uniform.
    pub fn untrained(vocab: Vocab, edges: &[f64], eos_epsilon: f64, parser_mode: ParserMode) -> Result<Self> {
        Self::from_counts(vocab, SlmCounts::default(), edges, eos_epsilon, parser_mode)
    }

    /// Components built on `counts` with all interpolation weights at 0.5.
    pub fn from_counts(
        vocab: Vocab,
        counts: SlmCounts,
        edges: &[f64],
        eos_epsilon: f64,
        parser_mode: ParserMode,
    ) -> Result<Self> {
        if !(eos_epsilon > 0.0 && eos_epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("eos_epsilon {eos_epsilon} must lie in (0, 1)")));
        }
        if vocab.num_regular_pos() == 0 {
            return Err(Error::InvalidArgument("the POS vocabulary has no regular tags".into()));
        }
        let predictor = SmoothedModel::new(
            counts.predictor,
            LambdaBuckets::new(PREDICTOR_ORDER, edges)?,
            vocab.num_predictable_words(),
        )?;
        let tagger = SmoothedModel::new(
            counts.tagger,
            LambdaBuckets::new(TAGGER_ORDER, edges)?,
            vocab.num_regular_pos(),
        )?;
        let parser = SmoothedModel::new(
            counts.parser,
            LambdaBuckets::new(PARSER_ORDER, edges)?,
            vocab.num_actions(),
        )?;
        Ok(Slm {
            vocab,
            predictor,
            tagger,
            parser,
            l2r: None,
            eos_epsilon,
            parser_mode,
        })
    }

    /// Applies the `</s>` floor to a raw word probability.
    fn floor_eos(&self, w: WordId, p: f64, p_eos: impl FnOnce() -> f64) -> f64 {
        if w == EOS {
            return p.max(self.eos_epsilon);
        }
        let pe = p_eos();
        if pe < self.eos_epsilon {
            p * (1.0 - self.eos_epsilon) / (1.0 - pe)
        } else {
            p
        }
    }

    fn word_prob_with(&self, model: &SmoothedModel, ctx: &[u32; PREDICTOR_ORDER], w: WordId) -> f64 {
        if w == BOS || w as usize >= self.vocab.num_words() {
            return 0.0;
        }
        let p = model.prob(ctx, word_outcome(w));
        self.floor_eos(w, p, || model.prob(ctx, word_outcome(EOS)))
    }

    /// The left-to-right predictor's probability for an explicit predictor
    /// context.
    pub fn l2r_word_prob_in(&self, ctx: &[u32; PREDICTOR_ORDER], w: WordId) -> f64 {
        self.word_prob_with(self.l2r.as_ref().unwrap_or(&self.predictor), ctx, w)
    }

    pub fn predict_word_prob(&self, h: &Hypothesis, w: WordId) -> f64 {
        self.word_prob_with(&self.predictor, &predictor_context(h), w)
    }

    /// The left-to-right predictor's probability, falling back to the
    /// structure predictor when none has been trained.
    pub fn l2r_word_prob(&self, h: &Hypothesis, w: WordId) -> f64 {
        self.l2r_word_prob_in(&predictor_context(h), w)
    }

    /// Predictor probabilities indexed by word id (`<s>` has 0).
    pub fn word_distribution(&self, h: &Hypothesis) -> Vec<f64> {
        let ctx = predictor_context(h);
        let mut d = self.predictor.distribution(&ctx);
        let pe = d[word_outcome(EOS) as usize];
        if pe < self.eos_epsilon {
            let scale = (1.0 - self.eos_epsilon) / (1.0 - pe);
            for v in d.iter_mut() {
                *v *= scale;
            }
            d[word_outcome(EOS) as usize] = self.eos_epsilon;
        }
        d.insert(0, 0.0);
        d
    }

    /// P(t | w, h0.tag, h-1.tag). `</s>` is tagged SE with probability 1.
    pub fn tag_prob(&self, h: &Hypothesis, w: WordId, t: PosId) -> f64 {
        if w == EOS {
            return if t == SE { 1.0 } else { 0.0 };
        }
        if t < RESERVED_POS || t as usize >= self.vocab.num_pos() {
            return 0.0;
        }
        self.tagger.prob(&tagger_context(h, w), pos_outcome(t))
    }

    /// (POS, probability) for every tag `w` may take.
    pub fn tag_distribution(&self, h: &Hypothesis, w: WordId) -> Vec<(PosId, f64)> {
        if w == EOS {
            return vec![(SE, 1.0)];
        }
        self.tagger
            .distribution(&tagger_context(h, w))
            .into_iter()
            .enumerate()
            .map(|(i, p)| (i as u32 + RESERVED_POS, p))
            .collect()
    }

    /// Parser probabilities over the legal actions of `h`, in
    /// `legal_actions` order. Forced states give a single action with 1.
    pub fn action_distribution(&self, h: &Hypothesis) -> Vec<(ParserAction, f64)> {
        let legal = h.legal_actions(&self.vocab, self.parser_mode);
        if legal.len() == 1 {
            return vec![(legal[0], 1.0)];
        }
        let ctx = parser_context(h);
        let raw: Vec<f64> = legal.iter().map(|a| self.parser.prob(&ctx, a.id())).collect();
        let z: f64 = raw.iter().sum();
        legal.into_iter().zip(raw).map(|(a, p)| (a, p / z)).collect()
    }

    pub fn parser_action_prob(&self, h: &Hypothesis, a: ParserAction) -> f64 {
        self.action_distribution(h)
            .into_iter()
            .find(|x| x.0 == a)
            .map_or(0.0, |x| x.1)
    }

    /// ln P(W, T) of a complete derivation.
    pub fn joint_logprob(&self, d: &Derivation) -> Result<f64> {
        let mut lp = 0.0;
        walk_derivation(d, &self.vocab, self.parser_mode, |h, step| {
            lp += match step {
                Step::Word(w) => self.predict_word_prob(h, w),
                Step::Tag(w, t) => self.tag_prob(h, w, t),
                Step::Action(a) => self.parser_action_prob(h, a),
            }
            .ln();
        })?;
        Ok(lp)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{SLM_HEADER}")?;
        writeln!(w, "vocab {}", self.vocab.hash())?;
        writeln!(w, "eos_epsilon {}", self.eos_epsilon)?;
        let mode = match self.parser_mode {
            ParserMode::Free => "free",
            ParserMode::NullOnly => "null-only",
        };
        writeln!(w, "parser_mode {mode}")?;
        let mut components = vec![
            ("predictor", &self.predictor),
            ("tagger", &self.tagger),
            ("parser", &self.parser),
        ];
        if let Some(l2r) = &self.l2r {
            components.push(("l2r", l2r));
        }
        for (name, m) in components {
            writeln!(w, "component {name}")?;
            m.write(&mut w)?;
        }
        Ok(())
    }

    /// Reads a model written by [`Slm::write`]; `vocab` must be the one it
    /// was trained with.
    pub fn read<R: BufRead>(r: R, vocab: Vocab) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .map(|(i, l)| l.map(|l| (i + 1, l)))
            .collect::<std::io::Result<Vec<_>>>()?
            .into_iter()
            .peekable();
        let mut field = |key: &str| -> Result<String> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::format(0, format!("unexpected end of model, expected `{key}`")))?;
            if key == SLM_HEADER {
                return if line.trim() == SLM_HEADER {
                    Ok(String::new())
                } else {
                    Err(Error::format(n, format!("expected `{SLM_HEADER}`")))
                };
            }
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::format(n, format!("expected `{key} ...`"))),
            }
        };
        field(SLM_HEADER)?;
        let hash = field("vocab")?;
        if hash != vocab.hash() {
            return Err(Error::VocabMismatch(hash, vocab.hash()));
        }
        let eos_epsilon: f64 = field("eos_epsilon")?
            .parse()
            .map_err(|_| Error::format(2, "bad eos_epsilon"))?;
        let parser_mode = match field("parser_mode")?.as_str() {
            "free" => ParserMode::Free,
            "null-only" => ParserMode::NullOnly,
            other => return Err(Error::format(3, format!("unknown parser mode `{other}`"))),
        };
        let mut models = Vec::new();
        while let Some((n, line)) = lines.next() {
            if line.trim().is_empty() {
                continue;
            }
            let name = match line.split_once(' ') {
                Some(("component", name)) => name.trim().to_string(),
                _ => return Err(Error::format(n, "expected `component <name>`")),
            };
            models.push((name, SmoothedModel::read_from(&mut lines)?));
        }
        let mut take = |name: &str| models.iter().position(|m| m.0 == name).map(|i| models.remove(i).1);
        let missing = |name: &str| Error::format(0, format!("missing component `{name}`"));
        let predictor = take("predictor").ok_or_else(|| missing("predictor"))?;
        let tagger = take("tagger").ok_or_else(|| missing("tagger"))?;
        let parser = take("parser").ok_or_else(|| missing("parser"))?;
        let l2r = take("l2r");
        if let Some((name, _)) = models.first() {
            return Err(Error::format(0, format!("unknown component `{name}`")));
        }
        let expect = [
            (&predictor, PREDICTOR_ORDER, vocab.num_predictable_words()),
            (&tagger, TAGGER_ORDER, vocab.num_regular_pos()),
            (&parser, PARSER_ORDER, vocab.num_actions()),
        ];
        for (m, order, outcomes) in expect.into_iter().chain(l2r.as_ref().map(|m| (m, PREDICTOR_ORDER, vocab.num_predictable_words()))) {
            if m.order() != order || m.outcome_vocab_size() != outcomes {
                return Err(Error::format(0, "component shape does not match the vocabulary"));
            }
        }
        Ok(Slm {
            vocab,
            predictor,
            tagger,
            parser,
            l2r,
            eos_epsilon,
            parser_mode,
        })
    }
}
