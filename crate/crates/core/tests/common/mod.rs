//! Test oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use synlm::corpus::headrules::Side;
use synlm::corpus::vocab::{PosId, WordId, BOS, EOS, SB, SE, TOP, TOP_PRIME, UNK};
use synlm::corpus::{derivation_of, parse_treebank, prepare_tree, HeadRules, HeadedTree, Tree, Vocab};
use synlm::model::{Derivation, Hypothesis, ParserMode, Phase, Slm, SlmCounts};
use synlm::smoothing::DEFAULT_BUCKET_EDGES;

pub fn vocab(words: &[&str], pos: &[&str], nt: &[&str]) -> Vocab {
    Vocab::new(words.iter().copied(), pos.iter().copied(), nt.iter().copied()).unwrap()
}

pub fn frame(words: &[WordId]) -> Vec<WordId> {
    let mut s = Vec::with_capacity(words.len() + 2);
    s.push(BOS);
    s.extend_from_slice(words);
    s.push(EOS);
    s
}

/// Every word the predictor can emit before `</s>`, `<unk>` included.
pub fn predictable_words(v: &Vocab) -> Vec<WordId> {
    (UNK..v.num_words() as u32).collect()
}

/// Every string over `words` with at most `max_len` words.
pub fn all_sentences(words: &[WordId], max_len: usize) -> Vec<Vec<WordId>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &w in words {
                let mut t: Vec<WordId> = s.clone();
                t.push(w);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Every binary tree over `words` with regular NT labels, either head side,
/// and any regular POS on each leaf.
pub fn segment_trees(words: &[WordId], v: &Vocab) -> Vec<HeadedTree> {
    if words.len() == 1 {
        return v.regular_pos().map(|t| HeadedTree::leaf(words[0], t)).collect();
    }
    let mut out = Vec::new();
    for split in 1..words.len() {
        let lefts = segment_trees(&words[..split], v);
        let rights = segment_trees(&words[split..], v);
        for l in &lefts {
            for r in &rights {
                for nt in v.regular_nt() {
                    for side in [Side::Left, Side::Right] {
                        out.push(HeadedTree::join(nt, side, l.clone(), r.clone(), v));
                    }
                }
            }
        }
    }
    out
}

/// Every complete parse of `<s> words </s>`: the words split into
/// consecutive constituents, each any segment tree, hung on the TOP' spine.
pub fn complete_parses(words: &[WordId], v: &Vocab) -> Vec<HeadedTree> {
    fn spines(words: &[WordId], v: &Vocab) -> Vec<HeadedTree> {
        if words.is_empty() {
            return vec![HeadedTree::leaf(EOS, SE)];
        }
        let mut out = Vec::new();
        for cut in 1..=words.len() {
            let firsts = segment_trees(&words[..cut], v);
            let rests = spines(&words[cut..], v);
            for a in &firsts {
                for b in &rests {
                    out.push(HeadedTree::join(TOP_PRIME, Side::Right, a.clone(), b.clone(), v));
                }
            }
        }
        out
    }
    spines(words, v)
        .into_iter()
        .map(|inner| HeadedTree::join(TOP, Side::Right, HeadedTree::leaf(BOS, SB), inner, v))
        .collect()
}

/// (derivation, ln P(W,T)) for every complete parse of `words`.
pub fn scored_parses(m: &Slm, words: &[WordId]) -> Vec<(Derivation, f64)> {
    complete_parses(words, &m.vocab)
        .iter()
        .map(|t| {
            let d = derivation_of(t, &m.vocab).unwrap();
            let lp = m.joint_logprob(&d).unwrap();
            (d, lp)
        })
        .collect()
}

/// Σ P(prefix)·(1 − P(</s> | prefix)) over every word-parse prefix that has
/// predicted exactly `k` regular words and hands control to the predictor:
/// the probability of all sentences longer than `k`.
pub fn longer_sentence_mass(m: &Slm, k: usize) -> f64 {
    fn go(m: &Slm, h: &Hypothesis, k: usize) -> f64 {
        match h.phase() {
            Phase::Complete => 0.0,
            Phase::AwaitingWord => {
                let dist = m.word_distribution(h);
                if h.words_predicted == k {
                    return h.logprob.exp() * (1.0 - dist[EOS as usize]);
                }
                let mut total = 0.0;
                for w in UNK..m.vocab.num_words() as u32 {
                    for (t, pt) in m.tag_distribution(h, w) {
                        total += go(m, &h.shift(w, t, dist[w as usize], pt).unwrap(), k);
                    }
                }
                total
            }
            Phase::AwaitingAction => m
                .action_distribution(h)
                .into_iter()
                .map(|(a, p)| go(m, &h.apply_action(a, p, &m.vocab).unwrap(), k))
                .sum(),
        }
    }
    go(m, &Hypothesis::initial(), k)
}

fn pick<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

/// Draws one derivation from the model; `None` past `max_words` words.
pub fn sample_derivation<R: Rng>(m: &Slm, rng: &mut R, max_words: usize) -> Option<Derivation> {
    let mut h = Hypothesis::initial();
    loop {
        h = match h.phase() {
            Phase::Complete => return Some(h.derivation()),
            Phase::AwaitingWord => {
                if h.words_predicted > max_words {
                    return None;
                }
                let dist = m.word_distribution(&h);
                let w = pick(rng, dist.iter().copied()) as WordId;
                if w == EOS {
                    h.shift(EOS, SE, dist[w as usize], 1.0).unwrap()
                } else {
                    let tags = m.tag_distribution(&h, w);
                    let (t, pt) = tags[pick(rng, tags.iter().map(|x| x.1))];
                    h.shift(w, t, dist[w as usize], pt).unwrap()
                }
            }
            Phase::AwaitingAction => {
                let acts = m.action_distribution(&h);
                let (a, p) = acts[pick(rng, acts.iter().map(|x| x.1))];
                h.apply_action(a, p, &m.vocab).unwrap()
            }
        };
    }
}

/// A model trained on every complete parse of `sentences`, each parse
/// weighted at random, so that no two distributions coincide.
pub fn irregular_model<R: Rng>(v: &Vocab, sentences: &[Vec<WordId>], rng: &mut R, eos_epsilon: f64) -> Slm {
    let mut counts = SlmCounts::default();
    for s in sentences {
        for t in complete_parses(s, v) {
            let d = derivation_of(&t, v).unwrap();
            counts.add_derivation(&d, v, ParserMode::Free, rng.gen_range(0.1..3.0)).unwrap();
        }
    }
    let mut m = Slm::from_counts(v.clone(), counts, &DEFAULT_BUCKET_EDGES, eos_epsilon, ParserMode::Free).unwrap();
    for model in [&mut m.predictor, &mut m.tagger, &mut m.parser] {
        for level in 0..model.lambdas.num_levels() {
            for b in 0..model.lambdas.num_buckets() {
                model.lambdas.set(level, b, rng.gen_range(0.2..0.8)).unwrap();
            }
        }
    }
    m
}

/// Trees from a small probabilistic grammar:
/// S → NP VP; NP → D N | D A N; VP → V NP | V.
pub fn toy_grammar_trees<R: Rng>(rng: &mut R, n: usize) -> Vec<Tree> {
    fn leaf<R: Rng>(rng: &mut R, label: &str, words: &[&str]) -> Tree {
        // Zipf-like preference for the first words.
        let i = pick(rng, (0..words.len()).map(|i| 1.0 / (i + 1) as f64));
        Tree::leaf(label, words[i])
    }
    fn np<R: Rng>(rng: &mut R) -> Tree {
        let mut kids = vec![leaf(rng, "D", &["the", "a", "every"])];
        if rng.gen_bool(0.3) {
            kids.push(leaf(rng, "A", &["big", "old", "red"]));
        }
        kids.push(leaf(rng, "N", &["dog", "cat", "man", "park", "ball"]));
        Tree::node("NP", kids)
    }
    (0..n)
        .map(|_| {
            let subj = np(rng);
            let mut vp = vec![leaf(rng, "V", &["saw", "liked", "chased", "ran"])];
            if rng.gen_bool(0.6) {
                vp.push(np(rng));
            }
            Tree::node("S", vec![subj, Tree::node("VP", vp)])
        })
        .collect()
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_trees(name: &str) -> Vec<Tree> {
    parse_treebank(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

pub fn derivations(trees: &[Tree], v: &Vocab) -> Vec<Derivation> {
    let rules = HeadRules::default();
    trees
        .iter()
        .map(|t| derivation_of(&prepare_tree(t, &rules, v).unwrap(), v).unwrap())
        .collect()
}

pub fn encode(trees: &[Tree], v: &Vocab) -> Vec<Vec<WordId>> {
    trees.iter().map(|t| v.encode_sentence(&t.words())).collect()
}

/// Leaves of a flat parse: every word with the single regular POS.
pub fn flat_leaves(words: &[WordId], pos: PosId) -> Vec<(WordId, PosId)> {
    words.iter().map(|&w| (w, pos)).collect()
}
