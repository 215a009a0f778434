//! Binarization, headword percolation and the headed binary tree type.

use std::fmt::Write as _;

use crate::corpus::headrules::{inner_category, HeadRules, Side};
use crate::corpus::tree::Tree;
use crate::corpus::vocab::{NtId, PosId, Vocab, WordId, BOS, EOS, SB, SE, TOP, TOP_PRIME};
use crate::error::{Error, Result};
use crate::model::Head;

/// Right-binarizes n-ary nodes (intermediate nodes are labelled with the
/// parent label plus `'`) and collapses unary chains into one node whose
/// label joins the chain with `_`. The yield is unchanged.
pub fn binarize(t: &Tree) -> Tree {
    match t {
        Tree::Leaf { .. } => t.clone(),
        Tree::Node { label, children } => {
            let mut kids: Vec<Tree> = children.iter().map(binarize).collect();
            match kids.len() {
                1 => {
                    let mut only = kids.pop().expect("one child");
                    let joined = format!("{label}_{}", only.label());
                    only.set_label(joined);
                    only
                }
                2 => Tree::node(label.clone(), kids),
                _ => {
                    let prime = format!("{label}'");
                    let mut right = {
                        let b = kids.pop().expect("n > 2");
                        let a = kids.pop().expect("n > 2");
                        Tree::node(prime.clone(), vec![a, b])
                    };
                    while kids.len() > 1 {
                        let a = kids.pop().expect("n > 2");
                        right = Tree::node(prime.clone(), vec![a, right]);
                    }
                    let first = kids.pop().expect("n > 2");
                    Tree::node(label.clone(), vec![first, right])
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadedTree {
    Leaf {
        word: WordId,
        pos: PosId,
    },
    Node {
        nt: NtId,
        head: Head,
        side: Side,
        left: Box<HeadedTree>,
        right: Box<HeadedTree>,
    },
}

impl HeadedTree {
    pub fn leaf(word: WordId, pos: PosId) -> Self {
        HeadedTree::Leaf { word, pos }
    }

    /// Joins two subtrees, taking the headword from `side`.
    pub fn join(nt: NtId, side: Side, left: HeadedTree, right: HeadedTree, vocab: &Vocab) -> Self {
        let word = match side {
            Side::Left => left.head().word,
            Side::Right => right.head().word,
        };
        HeadedTree::Node {
            nt,
            head: Head::new(word, vocab.nt_tag(nt)),
            side,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn head(&self) -> Head {
        match self {
            HeadedTree::Leaf { word, pos } => Head::new(*word, *pos),
            HeadedTree::Node { head, .. } => *head,
        }
    }

    /// Leaves left to right as (word, POS).
    pub fn leaves(&self) -> Vec<(WordId, PosId)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves(&self, out: &mut Vec<(WordId, PosId)>) {
        match self {
            HeadedTree::Leaf { word, pos } => out.push((*word, *pos)),
            HeadedTree::Node { left, right, .. } => {
                left.collect_leaves(out);
                right.collect_leaves(out);
            }
        }
    }

    pub fn words(&self) -> Vec<WordId> {
        self.leaves().into_iter().map(|(w, _)| w).collect()
    }

    pub fn render(&self, vocab: &Vocab) -> String {
        let mut s = String::new();
        self.render_into(vocab, &mut s);
        s
    }

    fn render_into(&self, vocab: &Vocab, out: &mut String) {
        match self {
            HeadedTree::Leaf { word, pos } => {
                let _ = write!(
                    out,
                    "({} {})",
                    vocab.pos().symbol(*pos).unwrap_or("?"),
                    vocab.word_symbol(*word)
                );
            }
            HeadedTree::Node {
                nt,
                head,
                left,
                right,
                ..
            } => {
                let _ = write!(
                    out,
                    "({}~{} ",
                    vocab.nt().symbol(*nt).unwrap_or("?"),
                    vocab.word_symbol(head.word)
                );
                left.render_into(vocab, out);
                out.push(' ');
                right.render_into(vocab, out);
                out.push(')');
            }
        }
    }
}

fn is_spine_child(parent: &str, child: &Tree) -> bool {
    if child.is_leaf() || !child.label().ends_with('\'') {
        return false;
    }
    let base = &child.label()[..child.label().len() - 1];
    base == parent || base == inner_category(parent)
}

/// Annotates a binary tree with headwords. Right-binarization spines
/// (`A'` nodes) are flattened back to the original child list so the head
/// rules see the same children as the n-ary node did.
pub fn percolate_heads(t: &Tree, rules: &HeadRules, vocab: &Vocab) -> Result<HeadedTree> {
    match t {
        Tree::Leaf { label, lexeme } => Ok(HeadedTree::leaf(vocab.word_id(lexeme), vocab.pos_id(label)?)),
        Tree::Node { label, children } => {
            if children.len() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "percolate_heads expects a binary tree; `{label}` has {} children",
                    children.len()
                )));
            }
            let mut items = vec![&children[0]];
            let mut spine_labels = vec![label.as_str()];
            let mut cur = &children[1];
            while is_spine_child(label, cur) {
                let kids = cur.children();
                if kids.len() != 2 {
                    return Err(Error::InvalidArgument(format!(
                        "percolate_heads expects a binary tree; `{}` has {} children",
                        cur.label(),
                        kids.len()
                    )));
                }
                spine_labels.push(cur.label());
                items.push(&kids[0]);
                cur = &kids[1];
            }
            items.push(cur);
            let child_labels: Vec<&str> = items.iter().map(|c| c.label()).collect();
            let head = rules.head_index(label, &child_labels);

            let mut built: Vec<HeadedTree> = items
                .iter()
                .map(|c| percolate_heads(c, rules, vocab))
                .collect::<Result<_>>()?;
            let mut right = built.pop().expect("at least two items");
            for i in (0..built.len()).rev() {
                let left = built.pop().expect("indexed item");
                let head_here = if head >= i {
                    head
                } else {
                    i + rules.head_index(label, &child_labels[i..])
                };
                let side = if head_here == i { Side::Left } else { Side::Right };
                let nt = vocab.nt_id(spine_labels[i])?;
                right = HeadedTree::join(nt, side, left, right, vocab);
            }
            Ok(right)
        }
    }
}

/// Wraps a parse of `w_1..w_n` into a complete parse:
/// `(TOP (SB <s>) (TOP' root (SE </s>)))`.
pub fn complete_parse(root: HeadedTree, vocab: &Vocab) -> HeadedTree {
    let inner = HeadedTree::join(TOP_PRIME, Side::Right, root, HeadedTree::leaf(EOS, SE), vocab);
    HeadedTree::join(TOP, Side::Right, HeadedTree::leaf(BOS, SB), inner, vocab)
}

/// The complete parse where every word stays an exposed head until `</s>`
/// is predicted: `(TOP <s> (TOP' w_1 (TOP' w_2 ... (TOP' w_n </s>))))`.
pub fn flat_complete_parse(leaves: &[(WordId, PosId)], vocab: &Vocab) -> HeadedTree {
    let mut inner = HeadedTree::leaf(EOS, SE);
    for &(w, p) in leaves.iter().rev() {
        inner = HeadedTree::join(TOP_PRIME, Side::Right, HeadedTree::leaf(w, p), inner, vocab);
    }
    HeadedTree::join(TOP, Side::Right, HeadedTree::leaf(BOS, SB), inner, vocab)
}

/// Binarizes, percolates heads and wraps a treebank tree into a complete
/// parse.
pub fn prepare_tree(t: &Tree, rules: &HeadRules, vocab: &Vocab) -> Result<HeadedTree> {
    let root = percolate_heads(&binarize(t), rules, vocab)?;
    Ok(complete_parse(root, vocab))
}
