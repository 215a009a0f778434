//! The word-parse prefix state machine shared by training, decoding and
//! derivation extraction. Nothing here looks at probabilities except to
//! accumulate the log-probability handed in by the caller.

use std::fmt;
use std::sync::Arc;

use crate::corpus::vocab::{NtId, PosId, TagId, Vocab, WordId, BOS, EOS, RESERVED_NT, RESERVED_POS, SE, TOP, TOP_PRIME};
use crate::error::{Error, Result};

/// A (headword, tag) pair exposed on the parser stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Head {
    pub word: WordId,
    pub tag: TagId,
}

impl Head {
    pub const fn new(word: WordId, tag: TagId) -> Self {
        Head { word, tag }
    }
}

/// Stand-in for the missing second head while only `<s>` is on the stack.
pub const BOUNDARY: Head = Head::new(u32::MAX, u32::MAX);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParserAction {
    Null,
    /// Merge the two rightmost heads, keeping the left headword.
    AdjoinLeft(NtId),
    /// Merge the two rightmost heads, keeping the right headword.
    AdjoinRight(NtId),
}

impl ParserAction {
    pub fn id(self) -> u32 {
        match self {
            ParserAction::Null => 0,
            ParserAction::AdjoinLeft(nt) => 1 + 2 * nt,
            ParserAction::AdjoinRight(nt) => 2 + 2 * nt,
        }
    }

    pub fn from_id(id: u32) -> Self {
        match id {
            0 => ParserAction::Null,
            i if i % 2 == 1 => ParserAction::AdjoinLeft((i - 1) / 2),
            i => ParserAction::AdjoinRight((i - 2) / 2),
        }
    }

    pub fn is_adjoin(self) -> bool {
        !matches!(self, ParserAction::Null)
    }

    pub fn label(self, vocab: &Vocab) -> String {
        let nt = |n: NtId| vocab.nt().symbol(n).unwrap_or("?").to_string();
        match self {
            ParserAction::Null => "null".into(),
            ParserAction::AdjoinLeft(n) => format!("adjoin-left,{}", nt(n)),
            ParserAction::AdjoinRight(n) => format!("adjoin-right,{}", nt(n)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Predict(WordId),
    Tag(PosId),
    Parse(ParserAction),
}

/// The move sequence generating one (sentence, complete parse) pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Derivation {
    pub moves: Vec<Move>,
    pub sentence_len: usize,
}

impl Derivation {
    pub fn new(moves: Vec<Move>) -> Self {
        let predicts = moves.iter().filter(|m| matches!(m, Move::Predict(_))).count();
        Derivation {
            moves,
            sentence_len: predicts.saturating_sub(1),
        }
    }

    /// The predicted words, `</s>` included.
    pub fn words(&self) -> Vec<WordId> {
        self.moves
            .iter()
            .filter_map(|m| match m {
                Move::Predict(w) => Some(*w),
                _ => None,
            })
            .collect()
    }

    /// Number of moves of each kind: (predict, tag, null, adjoin).
    pub fn move_counts(&self) -> (usize, usize, usize, usize) {
        let mut c = (0, 0, 0, 0);
        for m in &self.moves {
            match m {
                Move::Predict(_) => c.0 += 1,
                Move::Tag(_) => c.1 += 1,
                Move::Parse(ParserAction::Null) => c.2 += 1,
                Move::Parse(_) => c.3 += 1,
            }
        }
        c
    }
}

/// Which parser transitions the model may take outside the forced states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParserMode {
    #[default]
    Free,
    /// Only null until `</s>`: every word stays an exposed head, so the
    /// predictor sees the two previous words.
    NullOnly,
}

#[derive(Debug)]
struct StackNode {
    head: Head,
    below: Option<Arc<StackNode>>,
    depth: usize,
}

/// Persistent stack of exposed heads; branches share their common bottom.
#[derive(Debug, Clone)]
pub struct HeadStack(Arc<StackNode>);

impl HeadStack {
    fn single(head: Head) -> Self {
        HeadStack(Arc::new(StackNode {
            head,
            below: None,
            depth: 1,
        }))
    }

    fn push(&self, head: Head) -> Self {
        HeadStack(Arc::new(StackNode {
            head,
            below: Some(self.0.clone()),
            depth: self.0.depth + 1,
        }))
    }

    fn pop(&self) -> Option<HeadStack> {
        self.0.below.clone().map(HeadStack)
    }

    pub fn top(&self) -> Head {
        self.0.head
    }

    /// h_{-1}, or [`BOUNDARY`] when the stack holds a single head.
    pub fn second(&self) -> Head {
        self.0.below.as_ref().map_or(BOUNDARY, |n| n.head)
    }

    pub fn depth(&self) -> usize {
        self.0.depth
    }

    /// Heads from the bottom (oldest) to the top.
    pub fn heads(&self) -> Vec<Head> {
        let mut out = Vec::with_capacity(self.depth());
        let mut cur = Some(&self.0);
        while let Some(n) = cur {
            out.push(n.head);
            cur = n.below.as_ref();
        }
        out.reverse();
        out
    }
}

#[derive(Debug)]
struct TraceNode {
    mv: Move,
    prev: Option<Arc<TraceNode>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Control is with the word predictor.
    AwaitingWord,
    /// Control is with the parser.
    AwaitingAction,
    /// The stack holds only `(</s>, TOP)`.
    Complete,
}

/// A word-parse k-prefix together with its score and move history.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    stack: HeadStack,
    pub words_predicted: usize,
    pub adjoin_count: usize,
    /// ln P(W_k, T_k)
    pub logprob: f64,
    trace: Option<Arc<TraceNode>>,
    phase: Phase,
}

impl Hypothesis {
    /// The state before any word is predicted: `[(<s>, SB)]`.
    pub fn initial() -> Self {
        Hypothesis {
            stack: HeadStack::single(Head::new(BOS, crate::corpus::vocab::SB)),
            words_predicted: 0,
            adjoin_count: 0,
            logprob: 0.0,
            trace: None,
            phase: Phase::AwaitingWord,
        }
    }

    pub fn stack(&self) -> &HeadStack {
        &self.stack
    }

    pub fn h0(&self) -> Head {
        self.stack.top()
    }

    pub fn h1(&self) -> Head {
        self.stack.second()
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Complete
    }

    /// Parser transitions allowed in this state, null first, then adjoins by
    /// NT id (left before right).
    pub fn legal_actions(&self, vocab: &Vocab, mode: ParserMode) -> Vec<ParserAction> {
        if self.phase != Phase::AwaitingAction {
            return Vec::new();
        }
        let h0 = self.h0();
        let h1 = self.h1();
        if h0.word == EOS {
            if h1.word == BOS {
                return vec![ParserAction::AdjoinRight(TOP)];
            }
            return vec![ParserAction::AdjoinRight(TOP_PRIME)];
        }
        if self.stack.depth() < 2 || h1.word == BOS || mode == ParserMode::NullOnly {
            return vec![ParserAction::Null];
        }
        let mut actions = Vec::with_capacity(vocab.num_actions());
        actions.push(ParserAction::Null);
        for nt in RESERVED_NT..vocab.num_nt() as u32 {
            actions.push(ParserAction::AdjoinLeft(nt));
            actions.push(ParserAction::AdjoinRight(nt));
        }
        actions
    }

    pub fn is_legal(&self, a: ParserAction, vocab: &Vocab) -> bool {
        if self.phase != Phase::AwaitingAction {
            return false;
        }
        let h0 = self.h0();
        let h1 = self.h1();
        if h0.word == EOS {
            let forced = if h1.word == BOS { TOP } else { TOP_PRIME };
            return a == ParserAction::AdjoinRight(forced);
        }
        if self.stack.depth() < 2 || h1.word == BOS {
            return a == ParserAction::Null;
        }
        match a {
            ParserAction::Null => true,
            ParserAction::AdjoinLeft(nt) | ParserAction::AdjoinRight(nt) => {
                nt >= RESERVED_NT && (nt as usize) < vocab.num_nt()
            }
        }
    }

    /// True when the parser has exactly one choice here.
    pub fn is_forced(&self, vocab: &Vocab, mode: ParserMode) -> bool {
        self.legal_actions(vocab, mode).len() == 1
    }

    fn push_trace(&self, mv: Move) -> Option<Arc<TraceNode>> {
        Some(Arc::new(TraceNode {
            mv,
            prev: self.trace.clone(),
        }))
    }

    /// Applies a parser transition with probability `p`.
    pub fn apply_action(&self, a: ParserAction, p: f64, vocab: &Vocab) -> Result<Hypothesis> {
        if !self.is_legal(a, vocab) {
            return Err(Error::IllegalAction {
                action: a.label(vocab),
                state: self.describe(vocab),
            });
        }
        let logprob = self.logprob + p.ln();
        let trace = self.push_trace(Move::Parse(a));
        match a {
            ParserAction::Null => Ok(Hypothesis {
                stack: self.stack.clone(),
                logprob,
                trace,
                phase: Phase::AwaitingWord,
                ..*self
            }),
            ParserAction::AdjoinLeft(nt) | ParserAction::AdjoinRight(nt) => {
                let right = self.stack.top();
                let rest = self.stack.pop().expect("adjoin needs two heads");
                let left = rest.top();
                let rest = rest.pop();
                let word = if matches!(a, ParserAction::AdjoinLeft(_)) {
                    left.word
                } else {
                    right.word
                };
                let head = Head::new(word, vocab.nt_tag(nt));
                let stack = match rest {
                    Some(r) => r.push(head),
                    None => HeadStack::single(head),
                };
                let phase = if stack.depth() == 1 && head.tag == vocab.nt_tag(TOP) {
                    Phase::Complete
                } else {
                    Phase::AwaitingAction
                };
                Ok(Hypothesis {
                    stack,
                    words_predicted: self.words_predicted,
                    adjoin_count: self.adjoin_count + 1,
                    logprob,
                    trace,
                    phase,
                })
            }
        }
    }

    /// Pushes the predicted word with its tag. `</s>` always carries SE and
    /// its tag probability is 1.
    pub fn shift(&self, w: WordId, t: PosId, p_w: f64, p_t: f64) -> Result<Hypothesis> {
        if self.phase != Phase::AwaitingWord {
            return Err(Error::MalformedDerivation(format!(
                "word predicted while the parser holds control (k={})",
                self.words_predicted
            )));
        }
        if w == BOS {
            return Err(Error::MalformedDerivation("<s> cannot be predicted".into()));
        }
        if w == EOS && t != SE {
            return Err(Error::MalformedDerivation("</s> must be tagged SE".into()));
        }
        if w != EOS && t < RESERVED_POS {
            return Err(Error::MalformedDerivation("reserved POS tag on a regular word".into()));
        }
        let mut trace = self.push_trace(Move::Predict(w));
        if w != EOS {
            trace = Some(Arc::new(TraceNode {
                mv: Move::Tag(t),
                prev: trace,
            }));
        }
        Ok(Hypothesis {
            stack: self.stack.push(Head::new(w, t)),
            words_predicted: self.words_predicted + 1,
            adjoin_count: self.adjoin_count,
            logprob: self.logprob + p_w.ln() + p_t.ln(),
            trace,
            phase: Phase::AwaitingAction,
        })
    }

    /// Moves taken so far, oldest first.
    pub fn moves(&self) -> Vec<Move> {
        let mut out = Vec::new();
        let mut cur = self.trace.as_ref();
        while let Some(n) = cur {
            out.push(n.mv);
            cur = n.prev.as_ref();
        }
        out.reverse();
        out
    }

    pub fn derivation(&self) -> Derivation {
        Derivation::new(self.moves())
    }

    pub fn describe(&self, vocab: &Vocab) -> String {
        let heads: Vec<String> = self
            .stack
            .heads()
            .iter()
            .map(|h| format!("({},{})", vocab.word_symbol(h.word), vocab.tag_symbol(h.tag).unwrap_or("?")))
            .collect();
        format!("[{}] k={} a={}", heads.join(" "), self.words_predicted, self.adjoin_count)
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Predict(w) => write!(f, "predict:{w}"),
            Move::Tag(t) => write!(f, "tag:{t}"),
            Move::Parse(a) => write!(f, "parse:{}", a.id()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::SB;

    fn vocab() -> Vocab {
        Vocab::new(["a", "b", "c"], ["X"], ["P"]).unwrap()
    }

    fn shifted(h: &Hypothesis, w: WordId, t: PosId) -> Hypothesis {
        h.shift(w, t, 1.0, 1.0).unwrap()
    }

    #[test]
    fn action_ids_round_trip() {
        for id in 0..11 {
            assert_eq!(ParserAction::from_id(id).id(), id);
        }
        assert_eq!(ParserAction::AdjoinLeft(0).id(), 1);
        assert_eq!(ParserAction::AdjoinRight(0).id(), 2);
    }

    #[test]
    fn adjoining_sentence_start_is_forbidden() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        assert_eq!(h.legal_actions(&v, ParserMode::Free), vec![ParserAction::Null]);
    }

    #[test]
    fn three_free_heads_allow_every_regular_action() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        let h = h.apply_action(ParserAction::Null, 1.0, &v).unwrap();
        let h = shifted(&h, 4, 2);
        let acts = h.legal_actions(&v, ParserMode::Free);
        // one regular NT: null, left, right
        assert_eq!(acts.len(), 3);
        assert_eq!(acts[0], ParserAction::Null);
        assert_eq!(h.legal_actions(&v, ParserMode::NullOnly), vec![ParserAction::Null]);
    }

    #[test]
    fn top_prime_then_top_is_forced() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        let h = h.apply_action(ParserAction::Null, 1.0, &v).unwrap();
        let h = shifted(&h, EOS, SE);
        assert_eq!(
            h.legal_actions(&v, ParserMode::Free),
            vec![ParserAction::AdjoinRight(TOP_PRIME)]
        );
        let h = h.apply_action(ParserAction::AdjoinRight(TOP_PRIME), 1.0, &v).unwrap();
        assert_eq!(h.h0(), Head::new(EOS, v.nt_tag(TOP_PRIME)));
        assert_eq!(h.h1(), Head::new(BOS, SB));
        assert_eq!(h.legal_actions(&v, ParserMode::Free), vec![ParserAction::AdjoinRight(TOP)]);
        let h = h.apply_action(ParserAction::AdjoinRight(TOP), 1.0, &v).unwrap();
        assert!(h.is_complete());
        assert_eq!(h.stack().heads(), vec![Head::new(EOS, v.nt_tag(TOP))]);
    }

    #[test]
    fn adjoin_left_and_right_heads() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        let h = h.apply_action(ParserAction::Null, 1.0, &v).unwrap();
        let h = shifted(&h, 4, 2);
        let p = 2;
        let l = h.apply_action(ParserAction::AdjoinLeft(p), 0.5, &v).unwrap();
        assert_eq!(l.h0(), Head::new(3, v.nt_tag(p)));
        assert_eq!(l.adjoin_count, 1);
        let r = h.apply_action(ParserAction::AdjoinRight(p), 0.5, &v).unwrap();
        assert_eq!(r.h0(), Head::new(4, v.nt_tag(p)));
        assert!((r.logprob - 0.5f64.ln()).abs() < 1e-15);
        // parent untouched
        assert_eq!(h.stack().depth(), 3);
    }

    #[test]
    fn null_keeps_stack() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        let n = h.apply_action(ParserAction::Null, 1.0, &v).unwrap();
        assert_eq!(n.stack().heads(), h.stack().heads());
        assert_eq!(n.words_predicted, h.words_predicted);
        assert_eq!(n.phase(), Phase::AwaitingWord);
    }

    #[test]
    fn shift_adds_log_probs() {
        let h = Hypothesis::initial().shift(3, 2, 0.25, 0.5).unwrap();
        assert_eq!(h.logprob, 0.25f64.ln() + 0.5f64.ln());
        assert_eq!(h.words_predicted, 1);
        assert_eq!(h.stack().heads(), vec![Head::new(BOS, SB), Head::new(3, 2)]);
        assert_eq!(h.h1(), Head::new(BOS, SB));
    }

    #[test]
    fn illegal_action_is_an_error() {
        let v = vocab();
        let h = shifted(&Hypothesis::initial(), 3, 2);
        assert!(h.apply_action(ParserAction::AdjoinLeft(2), 1.0, &v).is_err());
        assert!(Hypothesis::initial().apply_action(ParserAction::Null, 1.0, &v).is_err());
        assert!(Hypothesis::initial().shift(BOS, 2, 1.0, 1.0).is_err());
        assert!(Hypothesis::initial().shift(EOS, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn initial_state_pads_with_boundary() {
        let h = Hypothesis::initial();
        assert_eq!(h.h1(), BOUNDARY);
        assert_eq!(h.h0(), Head::new(BOS, SB));
    }
}
