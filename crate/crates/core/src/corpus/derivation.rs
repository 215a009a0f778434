//! Decomposition of complete parses into derivations, and the inverse.

use crate::corpus::headed::HeadedTree;
use crate::corpus::headrules::Side;
use crate::corpus::vocab::{Vocab, BOS, EOS, TOP};
use crate::error::{Error, Result};
use crate::model::{Derivation, Hypothesis, Move, ParserAction};

fn emit(t: &HeadedTree, moves: &mut Vec<Move>, started: &mut bool) -> Result<()> {
    match t {
        HeadedTree::Leaf { word, pos } => {
            if *word == BOS && !*started && moves.is_empty() {
                return Ok(());
            }
            if *started {
                moves.push(Move::Parse(ParserAction::Null));
            }
            *started = true;
            moves.push(Move::Predict(*word));
            if *word != EOS {
                moves.push(Move::Tag(*pos));
            }
        }
        HeadedTree::Node {
            nt,
            side,
            left,
            right,
            ..
        } => {
            emit(left, moves, started)?;
            emit(right, moves, started)?;
            moves.push(Move::Parse(match side {
                Side::Left => ParserAction::AdjoinLeft(*nt),
                Side::Right => ParserAction::AdjoinRight(*nt),
            }));
        }
    }
    Ok(())
}

/// The unique move sequence that builds `t`. Adjoins are emitted as soon as
/// both children are complete, which is the only order a parser working on
/// the two rightmost heads can produce.
pub fn derivation_of(t: &HeadedTree, vocab: &Vocab) -> Result<Derivation> {
    let root = t.head();
    if root.word != EOS || root.tag != vocab.nt_tag(TOP) {
        return Err(Error::NotACompleteParse(format!(
            "root must be headed by (</s>, TOP), found ({}, {})",
            vocab.word_symbol(root.word),
            vocab.tag_symbol(root.tag).unwrap_or("?")
        )));
    }
    let leaves = t.leaves();
    if leaves.first().map(|l| l.0) != Some(BOS) {
        return Err(Error::NotACompleteParse("first leaf must be <s>".into()));
    }
    let mut moves = Vec::new();
    let mut started = false;
    emit(t, &mut moves, &mut started)?;
    let d = Derivation::new(moves);
    let rebuilt = replay(&d, vocab).map_err(|e| Error::NotACompleteParse(e.to_string()))?;
    if &rebuilt != t {
        return Err(Error::NotACompleteParse(
            "tree is not reachable by the transition system".into(),
        ));
    }
    Ok(d)
}

/// Runs a derivation through the state machine and rebuilds its tree.
pub fn replay(d: &Derivation, vocab: &Vocab) -> Result<HeadedTree> {
    let mut h = Hypothesis::initial();
    let mut trees = vec![HeadedTree::leaf(BOS, crate::corpus::vocab::SB)];
    let mut moves = d.moves.iter().peekable();
    while let Some(mv) = moves.next() {
        match *mv {
            Move::Predict(w) => {
                let t = if w == EOS {
                    crate::corpus::vocab::SE
                } else {
                    match moves.next() {
                        Some(Move::Tag(t)) => *t,
                        _ => {
                            return Err(Error::MalformedDerivation(
                                "prediction not followed by a tag".into(),
                            ))
                        }
                    }
                };
                h = h.shift(w, t, 1.0, 1.0)?;
                trees.push(HeadedTree::leaf(w, t));
            }
            Move::Tag(_) => {
                return Err(Error::MalformedDerivation("tag without a prediction".into()))
            }
            Move::Parse(a) => {
                h = h.apply_action(a, 1.0, vocab)?;
                if let ParserAction::AdjoinLeft(nt) | ParserAction::AdjoinRight(nt) = a {
                    let right = trees.pop().expect("stack mirrors hypothesis");
                    let left = trees.pop().expect("stack mirrors hypothesis");
                    let side = if matches!(a, ParserAction::AdjoinLeft(_)) {
                        Side::Left
                    } else {
                        Side::Right
                    };
                    trees.push(HeadedTree::join(nt, side, left, right, vocab));
                }
            }
        }
    }
    if !h.is_complete() || trees.len() != 1 {
        return Err(Error::MalformedDerivation("derivation does not end in a complete parse".into()));
    }
    Ok(trees.pop().expect("one tree"))
}
