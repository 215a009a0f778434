//! Symbol tables for words, POS tags, non-terminal tags and parser actions.
//!
//! Ids are dense from zero. The first ids of every table are reserved for
//! the sentence boundary symbols, so their values are fixed constants.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use sha2::{Digest, Sha256};

use crate::corpus::tree::Tree;
use crate::error::{Error, Result};

pub type WordId = u32;
pub type PosId = u32;
pub type NtId = u32;
/// Element of the unified tag space: POS ids occupy `[0, |POS|)`, NT ids are
/// shifted up by `|POS|`.
pub type TagId = u32;

pub const BOS: WordId = 0;
pub const EOS: WordId = 1;
pub const UNK: WordId = 2;

pub const SB: PosId = 0;
pub const SE: PosId = 1;

pub const TOP: NtId = 0;
pub const TOP_PRIME: NtId = 1;

pub const BOS_STR: &str = "<s>";
pub const EOS_STR: &str = "</s>";
pub const UNK_STR: &str = "<unk>";
pub const SB_STR: &str = "SB";
pub const SE_STR: &str = "SE";
pub const TOP_STR: &str = "TOP";
pub const TOP_PRIME_STR: &str = "TOP'";

/// Number of reserved ids at the front of each table.
pub const RESERVED_WORDS: u32 = 3;
pub const RESERVED_POS: u32 = 2;
pub const RESERVED_NT: u32 = 2;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    index: FxHashMap<String, u32>,
}

impl SymbolTable {
    pub fn from_symbols<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = SymbolTable::default();
        for s in symbols {
            let s = s.into();
            if table.index.contains_key(&s) {
                return Err(Error::InvalidArgument(format!("duplicate symbol `{s}`")));
            }
            table.insert(s);
        }
        Ok(table)
    }

    fn insert(&mut self, s: String) -> u32 {
        if let Some(&id) = self.index.get(&s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.index.insert(s.clone(), id);
        self.symbols.push(s);
        id
    }

    pub fn id(&self, s: &str) -> Option<u32> {
        self.index.get(s).copied()
    }

    pub fn symbol(&self, id: u32) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabAudit {
    pub words: usize,
    pub pos: usize,
    pub nt: usize,
    pub actions: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: SymbolTable,
    pos: SymbolTable,
    nt: SymbolTable,
}

impl Vocab {
    /// Builds a vocabulary from explicit regular symbols; the reserved
    /// symbols are prepended.
    pub fn new<W, P, N>(words: W, pos: P, nt: N) -> Result<Self>
    where
        W: IntoIterator,
        W::Item: Into<String>,
        P: IntoIterator,
        P::Item: Into<String>,
        N: IntoIterator,
        N::Item: Into<String>,
    {
        let with = |reserved: &[&str], rest: Vec<String>| {
            reserved
                .iter()
                .map(|s| s.to_string())
                .chain(rest)
                .collect::<Vec<_>>()
        };
        let words = with(
            &[BOS_STR, EOS_STR, UNK_STR],
            words.into_iter().map(Into::into).collect(),
        );
        let pos = with(&[SB_STR, SE_STR], pos.into_iter().map(Into::into).collect());
        let nt = with(
            &[TOP_STR, TOP_PRIME_STR],
            nt.into_iter().map(Into::into).collect(),
        );
        Ok(Vocab {
            words: SymbolTable::from_symbols(words)?,
            pos: SymbolTable::from_symbols(pos)?,
            nt: SymbolTable::from_symbols(nt)?,
        })
    }

    pub fn words(&self) -> &SymbolTable {
        &self.words
    }

    pub fn pos(&self) -> &SymbolTable {
        &self.pos
    }

    pub fn nt(&self) -> &SymbolTable {
        &self.nt
    }

    pub fn word_id(&self, w: &str) -> WordId {
        self.words.id(w).unwrap_or(UNK)
    }

    pub fn pos_id(&self, label: &str) -> Result<PosId> {
        self.pos.id(label).ok_or_else(|| Error::ClosedVocabulary {
            kind: "POS",
            label: label.to_string(),
        })
    }

    pub fn nt_id(&self, label: &str) -> Result<NtId> {
        self.nt.id(label).ok_or_else(|| Error::ClosedVocabulary {
            kind: "NT",
            label: label.to_string(),
        })
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_pos(&self) -> usize {
        self.pos.len()
    }

    pub fn num_nt(&self) -> usize {
        self.nt.len()
    }

    /// Size of the parser action inventory: null plus a left and a right
    /// adjoin for every NT label.
    pub fn num_actions(&self) -> usize {
        2 * self.nt.len() + 1
    }

    /// Words that can be predicted (everything except `<s>`).
    pub fn num_predictable_words(&self) -> usize {
        self.words.len() - 1
    }

    /// POS tags the tagger can choose (everything except SB and SE).
    pub fn num_regular_pos(&self) -> usize {
        self.pos.len() - RESERVED_POS as usize
    }

    pub fn regular_pos(&self) -> impl Iterator<Item = PosId> {
        RESERVED_POS..self.pos.len() as u32
    }

    pub fn regular_nt(&self) -> impl Iterator<Item = NtId> {
        RESERVED_NT..self.nt.len() as u32
    }

    pub fn pos_tag(&self, pos: PosId) -> TagId {
        pos
    }

    pub fn nt_tag(&self, nt: NtId) -> TagId {
        self.pos.len() as u32 + nt
    }

    pub fn tag_symbol(&self, tag: TagId) -> Option<&str> {
        let n_pos = self.pos.len() as u32;
        if tag < n_pos {
            self.pos.symbol(tag)
        } else {
            self.nt.symbol(tag - n_pos)
        }
    }

    pub fn word_symbol(&self, w: WordId) -> &str {
        self.words.symbol(w).unwrap_or("<?>")
    }

    pub fn audit(&self) -> VocabAudit {
        VocabAudit {
            words: self.num_words(),
            pos: self.num_pos(),
            nt: self.num_nt(),
            actions: self.num_actions(),
        }
    }

    /// Maps a tokenized sentence to ids framed by `<s>` and `</s>`.
    pub fn encode_sentence<S: AsRef<str>>(&self, words: &[S]) -> Vec<WordId> {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS);
        ids.extend(words.iter().map(|w| self.word_id(w.as_ref())));
        ids.push(EOS);
        ids
    }

    /// Stable fingerprint of all three tables.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, table) in [("words", &self.words), ("pos", &self.pos), ("nt", &self.nt)] {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            for s in table.symbols() {
                hasher.update(s.as_bytes());
                hasher.update([0u8]);
            }
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(16);
        for b in &digest[..8] {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "synlm-vocab v1")?;
        for (name, table, reserved) in [
            ("words", &self.words, RESERVED_WORDS),
            ("pos", &self.pos, RESERVED_POS),
            ("nt", &self.nt, RESERVED_NT),
        ] {
            writeln!(w, "{name} {}", table.len() - reserved as usize)?;
            for s in &table.symbols()[reserved as usize..] {
                writeln!(w, "{s}")?;
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i + 1, line?)),
                None => Err(Error::format(0, "unexpected end of vocabulary file")),
            }
        };
        let (n, header) = next()?;
        if header.trim() != "synlm-vocab v1" {
            return Err(Error::format(n, "expected header `synlm-vocab v1`"));
        }
        let mut sections = Vec::new();
        for expected in ["words", "pos", "nt"] {
            let (n, line) = next()?;
            let mut parts = line.split_whitespace();
            let count = match (parts.next(), parts.next()) {
                (Some(name), Some(count)) if name == expected => count
                    .parse::<usize>()
                    .map_err(|_| Error::format(n, "bad section size"))?,
                _ => return Err(Error::format(n, format!("expected `{expected} <count>`"))),
            };
            let mut symbols = Vec::with_capacity(count);
            for _ in 0..count {
                symbols.push(next()?.1);
            }
            sections.push(symbols);
        }
        let nt = sections.pop().unwrap_or_default();
        let pos = sections.pop().unwrap_or_default();
        let words = sections.pop().unwrap_or_default();
        Vocab::new(words, pos, nt)
    }
}

/// Builds the vocabulary from (already binarized) trees. Words keep the
/// `max_words` most frequent lexemes, ties broken lexicographically; tag
/// tables are closed over every observed label.
pub fn build_vocab(trees: &[Tree], max_words: usize) -> Result<Vocab> {
    if max_words == 0 {
        return Err(Error::InvalidArgument("max_words must be at least 1".into()));
    }
    let reserved_words = [BOS_STR, EOS_STR, UNK_STR];
    let reserved_pos = [SB_STR, SE_STR];
    let reserved_nt = [TOP_STR, TOP_PRIME_STR];

    let mut word_counts: FxHashMap<&str, u64> = FxHashMap::default();
    let mut pos_labels = std::collections::BTreeSet::new();
    let mut nt_labels = std::collections::BTreeSet::new();
    for tree in trees {
        tree.visit(&mut |node| match node.lexeme() {
            Some(lex) => {
                if !reserved_words.contains(&lex) {
                    *word_counts.entry(lex).or_default() += 1;
                }
                if !reserved_pos.contains(&node.label()) {
                    pos_labels.insert(node.label());
                }
            }
            None => {
                if !reserved_nt.contains(&node.label()) {
                    nt_labels.insert(node.label());
                }
            }
        });
    }
    let mut ranked: Vec<(&str, u64)> = word_counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_words);
    Vocab::new(
        ranked.into_iter().map(|(w, _)| w),
        pos_labels,
        nt_labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tree::parse_treebank;

    fn trees(text: &str) -> Vec<Tree> {
        parse_treebank(text).unwrap()
    }

    #[test]
    fn frequency_cutoff_maps_rest_to_unk() {
        let t = trees("(S (X a) (X a) (X a) (X a) (X a) (X b) (X b) (X b) (X c))");
        let v = build_vocab(&t, 2).unwrap();
        assert_eq!(v.num_words(), 5);
        assert!(v.words().id("a").is_some());
        assert!(v.words().id("b").is_some());
        assert_eq!(v.word_id("c"), UNK);
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = trees("(S (X q) (X p) (X r))");
        let v = build_vocab(&t, 2).unwrap();
        assert_eq!(v.words().id("p"), Some(3));
        assert_eq!(v.words().id("q"), Some(4));
        assert_eq!(v.word_id("r"), UNK);
    }

    #[test]
    fn encode_frames_sentence() {
        let v = Vocab::new(["a", "b"], ["X"], ["P"]).unwrap();
        let a = v.word_id("a");
        let b = v.word_id("b");
        assert_eq!(v.encode_sentence::<&str>(&[]), vec![BOS, EOS]);
        assert_eq!(v.encode_sentence(&["a", "zzz"]), vec![BOS, a, UNK, EOS]);
        assert_eq!(v.encode_sentence(&["a", "b"]), vec![BOS, a, b, EOS]);
    }

    #[test]
    fn audit_counts_actions() {
        let v = Vocab::new(["a"], ["X", "Y"], ["P"]).unwrap();
        let audit = v.audit();
        assert_eq!(audit.words, 4);
        assert_eq!(audit.pos, 4);
        assert_eq!(audit.nt, 3);
        assert_eq!(audit.actions, 7);
    }

    #[test]
    fn file_round_trip() {
        let v = Vocab::new(["a", "b"], ["X"], ["P", "Q"]).unwrap();
        let mut buf = Vec::new();
        v.write(&mut buf).unwrap();
        let back = Vocab::read(buf.as_slice()).unwrap();
        assert_eq!(v, back);
        assert_eq!(v.hash(), back.hash());
    }

    #[test]
    fn unknown_tags_are_rejected() {
        let v = Vocab::new(["a"], ["X"], ["P"]).unwrap();
        assert!(matches!(v.pos_id("Y"), Err(Error::ClosedVocabulary { .. })));
        assert!(v.nt_id("P").is_ok());
    }
}
