//! Treebank ingestion: reading, binarization, headword percolation,
//! vocabularies and derivations.

pub mod derivation;
pub mod headed;
pub mod headrules;
pub mod tree;
pub mod vocab;

use std::io::{BufRead, Write};

pub use derivation::{derivation_of, replay};
pub use headed::{binarize, complete_parse, flat_complete_parse, percolate_heads, prepare_tree, HeadedTree};
pub use headrules::{Direction, HeadRules, Side};
pub use tree::{parse_treebank, Tree};
pub use vocab::{build_vocab, Vocab, VocabAudit, WordId};

use crate::error::{Error, Result};

/// Encoded sentences, each framed by `<s>` and `</s>`.
pub type Corpus = Vec<Vec<WordId>>;

pub const CORPUS_HEADER: &str = "synlm-corpus v1";

pub fn write_corpus<W: Write>(mut w: W, corpus: &[Vec<WordId>]) -> Result<()> {
    writeln!(w, "{CORPUS_HEADER}")?;
    for sent in corpus {
        let line: Vec<String> = sent.iter().map(|id| id.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Corpus> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != CORPUS_HEADER {
                return Err(Error::format(1, format!("expected header `{CORPUS_HEADER}`")));
            }
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|t| t.parse::<WordId>().map_err(|_| Error::format(i + 1, format!("bad id `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(ids);
    }
    Ok(out)
}

/// Result of turning raw treebank trees into complete headed parses.
#[derive(Debug, Clone, Default)]
pub struct PreparedTrees {
    pub trees: Vec<HeadedTree>,
    pub skipped: usize,
}

/// Drops empty elements, binarizes and headifies every tree. Trees that
/// violate the closed tag vocabularies are skipped and counted.
pub fn prepare_treebank(raw: &[Tree], rules: &HeadRules, vocab: &Vocab, drop_labels: &[String]) -> PreparedTrees {
    let mut out = PreparedTrees::default();
    for t in raw {
        let Some(t) = t.clone().drop_leaves(drop_labels) else {
            out.skipped += 1;
            continue;
        };
        match prepare_tree(&t, rules, vocab) {
            Ok(h) => out.trees.push(h),
            Err(e) => {
                log::warn!("skipping tree: {e}");
                out.skipped += 1;
            }
        }
    }
    out
}
