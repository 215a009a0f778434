//! Head-child selection rules.
//!
//! File format, one rule per line:
//!
//! ```text
//! # comment
//! S   r2l VP S SBAR
//! NP  r2l NN NNS NP
//! PP  l2r IN
//! *   right
//! ```
//!
//! Lines for the same label are tried in order. Within a line the children
//! are scanned in the given direction and the first whose label is listed
//! (or any child, for `*`) is the head. When nothing matches, the `*` line
//! picks the leftmost or rightmost child.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadRule {
    pub direction: Direction,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadRules {
    rules: BTreeMap<String, Vec<HeadRule>>,
    default_side: Side,
}

impl Default for HeadRules {
    /// Rightmost child is the head of every constituent.
    fn default() -> Self {
        HeadRules {
            rules: BTreeMap::new(),
            default_side: Side::Right,
        }
    }
}

/// Category of a label as seen by its parent: `A` for a collapsed `A_B`, the
/// base label for a binarization node `A'`.
pub fn outer_category(label: &str) -> &str {
    let label = label.trim_end_matches('\'');
    label.split('_').next().unwrap_or(label)
}

/// Category that governs a node's children: `B` for a collapsed `A_B`.
pub fn inner_category(label: &str) -> &str {
    let label = label.trim_end_matches('\'');
    label.rsplit('_').next().unwrap_or(label)
}

impl HeadRules {
    pub fn new(default_side: Side) -> Self {
        HeadRules {
            rules: BTreeMap::new(),
            default_side,
        }
    }

    pub fn default_side(&self) -> Side {
        self.default_side
    }

    pub fn add_rule(&mut self, label: impl Into<String>, direction: Direction, labels: Vec<String>) {
        self.rules
            .entry(label.into())
            .or_default()
            .push(HeadRule { direction, labels });
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = HeadRules::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let label = parts.next().unwrap_or_default();
            let dir = parts
                .next()
                .ok_or_else(|| Error::format(i + 1, "missing direction"))?;
            if label == "*" {
                rules.default_side = match dir {
                    "left" | "l2r" | "left-to-right" => Side::Left,
                    "right" | "r2l" | "right-to-left" => Side::Right,
                    _ => return Err(Error::format(i + 1, format!("bad default side `{dir}`"))),
                };
                continue;
            }
            let direction = match dir {
                "l2r" | "left-to-right" | "left" => Direction::LeftToRight,
                "r2l" | "right-to-left" | "right" => Direction::RightToLeft,
                _ => return Err(Error::format(i + 1, format!("bad direction `{dir}`"))),
            };
            let labels: Vec<String> = parts.map(str::to_string).collect();
            if labels.is_empty() {
                return Err(Error::format(i + 1, "rule lists no child labels"));
            }
            rules.add_rule(label, direction, labels);
        }
        Ok(rules)
    }

    /// Index of the head among `children` (given by label) of a node labelled
    /// `parent`. Always terminates with the default side.
    pub fn head_index(&self, parent: &str, children: &[&str]) -> usize {
        assert!(!children.is_empty(), "head lookup on a childless node");
        let key = inner_category(parent);
        if let Some(list) = self.rules.get(key).or_else(|| self.rules.get(parent)) {
            for rule in list {
                let order: Box<dyn Iterator<Item = usize>> = match rule.direction {
                    Direction::LeftToRight => Box::new(0..children.len()),
                    Direction::RightToLeft => Box::new((0..children.len()).rev()),
                };
                for i in order {
                    let cat = outer_category(children[i]);
                    if rule
                        .labels
                        .iter()
                        .any(|l| l == "*" || l == cat || l == children[i])
                    {
                        return i;
                    }
                }
            }
        }
        match self.default_side {
            Side::Left => 0,
            Side::Right => children.len() - 1,
        }
    }
}
