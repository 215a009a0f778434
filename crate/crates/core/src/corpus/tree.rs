//! Plain labelled trees as read from bracketed treebank files.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    /// Preterminal: a POS tag over a single lexeme.
    Leaf { label: String, lexeme: String },
    Node { label: String, children: Vec<Tree> },
}

impl Tree {
    pub fn leaf(label: impl Into<String>, lexeme: impl Into<String>) -> Self {
        Tree::Leaf {
            label: label.into(),
            lexeme: lexeme.into(),
        }
    }

    pub fn node(label: impl Into<String>, children: Vec<Tree>) -> Self {
        Tree::Node {
            label: label.into(),
            children,
        }
    }

    pub fn label(&self) -> &str {
        match self {
            Tree::Leaf { label, .. } | Tree::Node { label, .. } => label,
        }
    }

    pub(crate) fn set_label(&mut self, new: String) {
        match self {
            Tree::Leaf { label, .. } | Tree::Node { label, .. } => *label = new,
        }
    }

    pub fn lexeme(&self) -> Option<&str> {
        match self {
            Tree::Leaf { lexeme, .. } => Some(lexeme),
            Tree::Node { .. } => None,
        }
    }

    pub fn children(&self) -> &[Tree] {
        match self {
            Tree::Leaf { .. } => &[],
            Tree::Node { children, .. } => children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Tree::Leaf { .. })
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Tree)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// The yield as (POS, lexeme) pairs.
    pub fn leaves(&self) -> Vec<(&str, &str)> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if let Tree::Leaf { label, lexeme } = t {
                out.push((label.as_str(), lexeme.as_str()));
            }
        });
        out
    }

    pub fn words(&self) -> Vec<&str> {
        self.leaves().into_iter().map(|(_, w)| w).collect()
    }

    /// Removes leaves whose POS label is in `labels` (empty elements), then
    /// any internal node left without children. Returns `None` when nothing
    /// remains.
    pub fn drop_leaves(self, labels: &[String]) -> Option<Tree> {
        match self {
            Tree::Leaf { ref label, .. } => {
                if labels.iter().any(|l| l == label) {
                    None
                } else {
                    Some(self)
                }
            }
            Tree::Node { label, children } => {
                let children: Vec<Tree> = children
                    .into_iter()
                    .filter_map(|c| c.drop_leaves(labels))
                    .collect();
                if children.is_empty() {
                    None
                } else {
                    Some(Tree::Node { label, children })
                }
            }
        }
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tree::Leaf { label, lexeme } => write!(f, "({label} {lexeme})"),
            Tree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token<'a> {
    Open,
    Close,
    Atom(&'a str),
}

fn tokenize(text: &str) -> Vec<(Token<'_>, usize)> {
    let mut tokens = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut start = None;
        for (i, ch) in line.char_indices() {
            let boundary = ch == '(' || ch == ')' || ch.is_whitespace();
            if boundary {
                if let Some(s) = start.take() {
                    tokens.push((Token::Atom(&line[s..i]), line_no));
                }
                match ch {
                    '(' => tokens.push((Token::Open, line_no)),
                    ')' => tokens.push((Token::Close, line_no)),
                    _ => {}
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            tokens.push((Token::Atom(&line[s..]), line_no));
        }
    }
    tokens
}

struct Parser<'a> {
    tokens: Vec<(Token<'a>, usize)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |t| t.1)
    }

    fn err(&self, message: &str) -> Error {
        Error::TreebankSyntax {
            line: self.line(),
            message: message.to_string(),
        }
    }

    fn next(&mut self) -> Option<Token<'a>> {
        let t = self.tokens.get(self.pos).map(|t| t.0.clone());
        self.pos += 1;
        t
    }

    fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    /// Parses the remainder of a bracket whose `(` was consumed.
    fn bracket(&mut self) -> Result<Tree> {
        let label = match self.peek() {
            Some(Token::Atom(a)) => {
                let a = a.to_string();
                self.pos += 1;
                a
            }
            Some(Token::Open) => String::new(),
            Some(Token::Close) => return Err(self.err("empty node")),
            None => return Err(self.err("unbalanced parentheses")),
        };
        let mut children = Vec::new();
        let mut lexeme = None;
        loop {
            match self.next() {
                Some(Token::Open) => children.push(self.bracket()?),
                Some(Token::Atom(a)) => {
                    if lexeme.is_some() || !children.is_empty() {
                        return Err(self.err("mixed lexemes and subtrees"));
                    }
                    lexeme = Some(a.to_string());
                }
                Some(Token::Close) => break,
                None => return Err(self.err("unbalanced parentheses")),
            }
        }
        match lexeme {
            Some(lexeme) => {
                if !children.is_empty() {
                    return Err(self.err("mixed lexemes and subtrees"));
                }
                if label.is_empty() {
                    return Err(self.err("leaf without a label"));
                }
                Ok(Tree::Leaf { label, lexeme })
            }
            None if children.is_empty() => Err(self.err("empty node")),
            None => Ok(Tree::Node { label, children }),
        }
    }
}

/// Reads every top-level bracketed tree. An unlabelled wrapper around a
/// single tree (`( (S ...) )`) is stripped.
pub fn parse_treebank(text: &str) -> Result<Vec<Tree>> {
    let mut parser = Parser {
        tokens: tokenize(text),
        pos: 0,
    };
    let mut trees = Vec::new();
    while let Some(tok) = parser.next() {
        match tok {
            Token::Open => {
                let tree = parser.bracket()?;
                let tree = match tree {
                    Tree::Node { label, mut children } if label.is_empty() && children.len() == 1 => {
                        children.pop().expect("one child")
                    }
                    t => t,
                };
                trees.push(tree);
            }
            Token::Close => {
                parser.pos -= 1;
                return Err(parser.err("unbalanced parentheses"));
            }
            Token::Atom(_) => {
                parser.pos -= 1;
                return Err(parser.err("text outside of a tree"));
            }
        }
    }
    Ok(trees)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_tree() {
        let t = parse_treebank("(S (NP (NN dog)))").unwrap();
        assert_eq!(
            t,
            vec![Tree::node("S", vec![Tree::node("NP", vec![Tree::leaf("NN", "dog")])])]
        );
    }

    #[test]
    fn whitespace_insensitive_and_multiple() {
        let t = parse_treebank("(S (X a)\n  (X b))\n\n( (S\n(X c)) )").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].label(), "S");
        assert_eq!(t[0].words(), vec!["a", "b"]);
    }

    #[test]
    fn unbalanced_reports_line() {
        match parse_treebank("((") {
            Err(Error::TreebankSyntax { line, .. }) => assert_eq!(line, 1),
            other => panic!("{other:?}"),
        }
        match parse_treebank("(S (X a))\n(S (X b)))") {
            Err(Error::TreebankSyntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_node_is_an_error() {
        assert!(parse_treebank("(S ())").is_err());
        assert!(parse_treebank("(S (NP))").is_err());
    }

    #[test]
    fn drops_trace_leaves() {
        let t = parse_treebank("(S (NP (-NONE- *T*)) (VP (VB go)))").unwrap();
        let t = t[0].clone().drop_leaves(&["-NONE-".to_string()]).unwrap();
        assert_eq!(t.to_string(), "(S (VP (VB go)))");
    }
}
