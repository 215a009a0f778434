//! Deleted-interpolation conditional models.
//!
//! A model of order `n` predicts an outcome `y` from a context
//! `(x_1, .., x_n)` written nearest-first. Level `k` conditions on the first
//! `k` context elements, so backing off drops the most distant element. The
//! estimate at level `k` mixes the level `k-1` estimate with the relative
//! frequency at level `k`:
//!
//! ```text
//! P_k(y | x_1..x_k) = λ_k · P_{k-1}(y | x_1..x_{k-1}) + (1 - λ_k) · f_k(y | x_1..x_k)
//! P_{-1}(y)         = 1 / |outcomes|
//! ```
//!
//! `λ_k` is shared by all contexts whose count falls in the same range.
//! Levels whose context was never seen pass the lower estimate through.

use std::io::Write;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};

pub const LAMBDA_FLOOR: f64 = 0.001;
pub const LAMBDA_CEIL: f64 = 0.999;
pub const DEFAULT_BUCKET_EDGES: [f64; 10] = [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];
pub const MODEL_HEADER: &str = "synlm-model v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContextCounts {
    pub total: f64,
    pub outcomes: FxHashMap<u32, f64>,
}

/// Weighted (context, outcome) counts at every level `0..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountTable {
    order: usize,
    levels: Vec<FxHashMap<Vec<u32>, ContextCounts>>,
}

impl CountTable {
    pub fn new(order: usize) -> Self {
        CountTable {
            order,
            levels: vec![FxHashMap::default(); order + 1],
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Adds `weight` to the full-context count and to every lower level.
    pub fn add_count(&mut self, context: &[u32], outcome: u32, weight: f64) -> Result<()> {
        if context.len() != self.order {
            return Err(Error::ContextLength {
                expected: self.order,
                got: context.len(),
            });
        }
        if !weight.is_finite() || weight < 0.0 {
            return Err(Error::NegativeWeight(weight));
        }
        if weight == 0.0 {
            return Ok(());
        }
        for (k, level) in self.levels.iter_mut().enumerate() {
            let ctx = &context[..k];
            let entry = match level.get_mut(ctx) {
                Some(e) => e,
                None => level.entry(ctx.to_vec()).or_default(),
            };
            entry.total += weight;
            *entry.outcomes.entry(outcome).or_default() += weight;
        }
        Ok(())
    }

    pub fn context(&self, level: usize, ctx: &[u32]) -> Option<&ContextCounts> {
        self.levels.get(level)?.get(ctx)
    }

    pub fn count(&self, level: usize, ctx: &[u32], outcome: u32) -> f64 {
        self.context(level, ctx)
            .and_then(|c| c.outcomes.get(&outcome).copied())
            .unwrap_or(0.0)
    }

    pub fn context_total(&self, level: usize, ctx: &[u32]) -> f64 {
        self.context(level, ctx).map_or(0.0, |c| c.total)
    }

    /// Total weight of all events.
    pub fn total(&self) -> f64 {
        self.context_total(0, &[])
    }

    pub fn is_empty(&self) -> bool {
        self.levels[0].is_empty()
    }

    /// Number of distinct contexts at `level`.
    pub fn num_contexts(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    /// All `(context, outcome, weight)` entries at `level`, sorted.
    pub fn entries(&self, level: usize) -> Vec<(Vec<u32>, u32, f64)> {
        let mut out: Vec<(Vec<u32>, u32, f64)> = self.levels[level]
            .iter()
            .flat_map(|(ctx, c)| c.outcomes.iter().map(move |(&y, &w)| (ctx.clone(), y, w)))
            .collect();
        out.sort_by(|a, b| (&a.0, a.1).cmp(&(&b.0, b.1)));
        out
    }

    /// Full-order events, sorted.
    pub fn events(&self) -> Vec<(Vec<u32>, u32, f64)> {
        self.entries(self.order)
    }

    pub fn merge_from(&mut self, other: &CountTable) -> Result<()> {
        if other.order != self.order {
            return Err(Error::OrderMismatch(self.order, other.order));
        }
        for (mine, theirs) in self.levels.iter_mut().zip(&other.levels) {
            for (ctx, c) in theirs {
                let entry = mine.entry(ctx.clone()).or_default();
                entry.total += c.total;
                for (&y, &w) in &c.outcomes {
                    *entry.outcomes.entry(y).or_default() += w;
                }
            }
        }
        Ok(())
    }

    /// Pointwise sum of tables of identical order.
    pub fn merge(tables: &[CountTable]) -> Result<CountTable> {
        let first = tables.first().ok_or(Error::Empty("table list"))?;
        let mut out = CountTable::new(first.order);
        for t in tables {
            out.merge_from(t)?;
        }
        Ok(out)
    }

    /// Maps every context element through `f`, merging contexts that collide.
    pub fn map_contexts(&self, order: usize, f: impl Fn(&[u32]) -> Vec<u32>) -> Result<CountTable> {
        let mut out = CountTable::new(order);
        for (ctx, y, w) in self.events() {
            out.add_count(&f(&ctx), y, w)?;
        }
        Ok(out)
    }
}

/// Interpolation weights tied by context-count range, one row per level.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaBuckets {
    edges: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl LambdaBuckets {
    /// All weights start at 0.5.
    pub fn new(order: usize, edges: &[f64]) -> Result<Self> {
        if edges.first() != Some(&0.0) {
            return Err(Error::InvalidArgument("bucket edges must start at 0".into()));
        }
        if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bucket edges must be strictly ascending".into()));
        }
        Ok(LambdaBuckets {
            edges: edges.to_vec(),
            values: vec![vec![0.5; edges.len()]; order + 1],
        })
    }

    pub fn with_default_edges(order: usize) -> Self {
        Self::new(order, &DEFAULT_BUCKET_EDGES).expect("default edges are valid")
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_buckets(&self) -> usize {
        self.edges.len()
    }

    pub fn num_levels(&self) -> usize {
        self.values.len()
    }

    /// Index of the half-open range `[edge_i, edge_{i+1})` holding `count`;
    /// the last range is unbounded.
    pub fn bucket_of(&self, count: f64) -> usize {
        self.edges.partition_point(|&e| e <= count).saturating_sub(1)
    }

    pub fn get(&self, level: usize, bucket: usize) -> f64 {
        self.values[level][bucket]
    }

    pub fn set(&mut self, level: usize, bucket: usize, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(format!("lambda {value} outside [0, 1]")));
        }
        self.values[level][bucket] = value;
        Ok(())
    }

    /// The weight applied at `level` for a context seen `count` times.
    pub fn for_count(&self, level: usize, count: f64) -> f64 {
        self.values[level][self.bucket_of(count)]
    }
}

#[derive(Debug, Clone)]
pub struct LambdaEstimate {
    pub lambdas: LambdaBuckets,
    /// Check-data log-likelihood before each iteration and after the last.
    pub log_likelihoods: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedModel {
    pub table: CountTable,
    pub lambdas: LambdaBuckets,
    outcome_vocab_size: usize,
}

/// One interpolation level an event passes through: (level, bucket, f).
type LevelTerm = (usize, usize, f64);

impl SmoothedModel {
    pub fn new(table: CountTable, lambdas: LambdaBuckets, outcome_vocab_size: usize) -> Result<Self> {
        if lambdas.num_levels() != table.order() + 1 {
            return Err(Error::OrderMismatch(table.order(), lambdas.num_levels().saturating_sub(1)));
        }
        if outcome_vocab_size == 0 {
            return Err(Error::InvalidArgument("outcome vocabulary is empty".into()));
        }
        Ok(SmoothedModel {
            table,
            lambdas,
            outcome_vocab_size,
        })
    }

    /// A model with no counts: every outcome is uniform.
    pub fn uniform(order: usize, outcome_vocab_size: usize) -> Self {
        Self::new(
            CountTable::new(order),
            LambdaBuckets::with_default_edges(order),
            outcome_vocab_size,
        )
        .expect("consistent")
    }

    pub fn order(&self) -> usize {
        self.table.order()
    }

    pub fn outcome_vocab_size(&self) -> usize {
        self.outcome_vocab_size
    }

    pub fn prob(&self, context: &[u32], outcome: u32) -> f64 {
        assert_eq!(context.len(), self.order(), "context length must equal model order");
        let mut p = 1.0 / self.outcome_vocab_size as f64;
        for k in 0..=self.order() {
            if let Some(c) = self.table.context(k, &context[..k]) {
                if c.total > 0.0 {
                    let f = c.outcomes.get(&outcome).copied().unwrap_or(0.0) / c.total;
                    let lambda = self.lambdas.for_count(k, c.total);
                    p = lambda * p + (1.0 - lambda) * f;
                }
            }
        }
        p
    }

    /// Probabilities of every outcome id `0..outcome_vocab_size`.
    pub fn distribution(&self, context: &[u32]) -> Vec<f64> {
        assert_eq!(context.len(), self.order(), "context length must equal model order");
        let mut p = vec![1.0 / self.outcome_vocab_size as f64; self.outcome_vocab_size];
        for k in 0..=self.order() {
            if let Some(c) = self.table.context(k, &context[..k]) {
                if c.total > 0.0 {
                    let lambda = self.lambdas.for_count(k, c.total);
                    for v in p.iter_mut() {
                        *v *= lambda;
                    }
                    for (&y, &w) in &c.outcomes {
                        if let Some(v) = p.get_mut(y as usize) {
                            *v += (1.0 - lambda) * w / c.total;
                        }
                    }
                }
            }
        }
        p
    }

    fn levels_for(&self, context: &[u32], outcome: u32) -> Vec<LevelTerm> {
        let mut terms = Vec::with_capacity(self.order() + 1);
        for k in 0..=self.order() {
            if let Some(c) = self.table.context(k, &context[..k]) {
                if c.total > 0.0 {
                    let f = c.outcomes.get(&outcome).copied().unwrap_or(0.0) / c.total;
                    terms.push((k, self.lambdas.bucket_of(c.total), f));
                }
            }
        }
        terms
    }

    /// Weighted log-likelihood of the full-order events in `check`.
    pub fn log_likelihood(&self, check: &CountTable) -> f64 {
        check
            .events()
            .iter()
            .map(|(ctx, y, w)| w * self.prob(ctx, *y).ln())
            .sum()
    }

    /// Re-estimates the tied weights by EM on held-out counts. Each event is
    /// a mixture of the uniform ground and the relative frequencies of every
    /// level it reaches; the posterior of stopping at or passing each level
    /// gives the expected counts for that level's bucket.
    pub fn estimate_lambdas_em(&self, check: &CountTable, iters: usize) -> Result<LambdaEstimate> {
        if iters == 0 {
            return Err(Error::InvalidArgument("EM needs at least one iteration".into()));
        }
        if check.order() != self.order() {
            return Err(Error::OrderMismatch(self.order(), check.order()));
        }
        let events: Vec<(f64, Vec<LevelTerm>)> = check
            .events()
            .into_iter()
            .map(|(ctx, y, w)| (w, self.levels_for(&ctx, y)))
            .collect();
        if events.is_empty() {
            return Err(Error::Empty("check counts"));
        }
        let uniform = 1.0 / self.outcome_vocab_size as f64;
        let levels = self.lambdas.num_levels();
        let buckets = self.lambdas.num_buckets();
        let mut lambdas = self.lambdas.clone();
        let mut trace = Vec::with_capacity(iters + 1);
        let mut probs = Vec::with_capacity(levels + 1);

        for iter in 0..=iters {
            let mut down = vec![vec![0.0; buckets]; levels];
            let mut stay = vec![vec![0.0; buckets]; levels];
            let mut ll = 0.0;
            for (w, terms) in &events {
                probs.clear();
                probs.push(uniform);
                for &(k, b, f) in terms {
                    let l = lambdas.get(k, b);
                    let below = *probs.last().expect("non-empty");
                    probs.push(l * below + (1.0 - l) * f);
                }
                let top = *probs.last().expect("non-empty");
                ll += w * top.ln();
                let mut reach = *w;
                for (i, &(k, b, _)) in terms.iter().enumerate().rev() {
                    let l = lambdas.get(k, b);
                    let pass = l * probs[i] / probs[i + 1];
                    down[k][b] += reach * pass;
                    stay[k][b] += reach * (1.0 - pass);
                    reach *= pass;
                }
            }
            trace.push(ll);
            if iter == iters {
                break;
            }
            for k in 0..levels {
                for b in 0..buckets {
                    let mass = down[k][b] + stay[k][b];
                    if mass > 0.0 {
                        let v = (down[k][b] / mass).clamp(LAMBDA_FLOOR, LAMBDA_CEIL);
                        lambdas.set(k, b, v)?;
                    }
                }
            }
        }
        Ok(LambdaEstimate {
            lambdas,
            log_likelihoods: trace,
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MODEL_HEADER}")?;
        writeln!(w, "order {}", self.order())?;
        writeln!(w, "outcomes {}", self.outcome_vocab_size)?;
        let edges: Vec<String> = self.lambdas.edges().iter().map(|e| e.to_string()).collect();
        writeln!(w, "edges {}", edges.join(" "))?;
        let join = |ctx: &[u32]| {
            ctx.iter()
                .map(|x| format!("{x} "))
                .collect::<String>()
        };
        for k in 0..=self.order() {
            writeln!(w, "section {k}")?;
            let mut contexts: Vec<(&Vec<u32>, &ContextCounts)> = self.table.levels[k].iter().collect();
            contexts.sort_by(|a, b| a.0.cmp(b.0));
            for (ctx, c) in contexts {
                let prefix = join(ctx);
                writeln!(w, "total {prefix}{}", c.total)?;
                let mut outs: Vec<(&u32, &f64)> = c.outcomes.iter().collect();
                outs.sort_by_key(|o| *o.0);
                for (y, wt) in outs {
                    writeln!(w, "count {prefix}{y} {wt}")?;
                }
            }
        }
        for k in 0..self.lambdas.num_levels() {
            for b in 0..self.lambdas.num_buckets() {
                writeln!(w, "lambda {k} {b} {}", self.lambdas.get(k, b))?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    /// Reads one model block; `lines` yields `(line number, text)`.
    pub fn read_from<I>(lines: &mut I) -> Result<Self>
    where
        I: Iterator<Item = (usize, String)>,
    {
        let mut next = |what: &str| -> Result<(usize, String)> {
            lines
                .next()
                .ok_or_else(|| Error::format(0, format!("unexpected end of model while reading {what}")))
        };
        let (n, header) = next("header")?;
        if header.trim() != MODEL_HEADER {
            return Err(Error::format(n, format!("expected `{MODEL_HEADER}`")));
        }
        let field = |line: (usize, String), key: &str| -> Result<(usize, Vec<String>)> {
            let mut parts = line.1.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::format(line.0, format!("expected `{key}`")));
            }
            Ok((line.0, parts.map(str::to_string).collect()))
        };
        let parse_usize = |n: usize, s: Option<&String>| -> Result<usize> {
            s.and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(n, "expected an integer"))
        };
        let (n, v) = field(next("order")?, "order")?;
        let order = parse_usize(n, v.first())?;
        let (n, v) = field(next("outcomes")?, "outcomes")?;
        let outcomes = parse_usize(n, v.first())?;
        let (n, v) = field(next("edges")?, "edges")?;
        let edges = v
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::format(n, "bad bucket edge")))
            .collect::<Result<Vec<_>>>()?;
        let mut table = CountTable::new(order);
        let mut lambdas = LambdaBuckets::new(order, &edges)?;
        let mut level = None;
        loop {
            let (n, line) = next("body")?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let nums = |xs: &[&str]| -> Result<Vec<u32>> {
                xs.iter()
                    .map(|s| s.parse::<u32>().map_err(|_| Error::format(n, format!("bad id `{s}`"))))
                    .collect()
            };
            let real = |s: &str| -> Result<f64> { s.parse::<f64>().map_err(|_| Error::format(n, format!("bad number `{s}`"))) };
            match parts.first().copied() {
                Some("end") => break,
                Some("section") => {
                    let k = parse_usize(n, parts.get(1).map(|s| s.to_string()).as_ref())?;
                    if k > order {
                        return Err(Error::format(n, "section beyond model order"));
                    }
                    level = Some(k);
                }
                Some("total") => {
                    let k = level.ok_or_else(|| Error::format(n, "total outside a section"))?;
                    if parts.len() != k + 2 {
                        return Err(Error::format(n, "wrong context length"));
                    }
                    let ctx = nums(&parts[1..=k])?;
                    table.levels[k].entry(ctx).or_default().total = real(parts[k + 1])?;
                }
                Some("count") => {
                    let k = level.ok_or_else(|| Error::format(n, "count outside a section"))?;
                    if parts.len() != k + 3 {
                        return Err(Error::format(n, "wrong context length"));
                    }
                    let ctx = nums(&parts[1..=k])?;
                    let y = nums(&parts[k + 1..k + 2])?[0];
                    let w = real(parts[k + 2])?;
                    table.levels[k].entry(ctx).or_default().outcomes.insert(y, w);
                }
                Some("lambda") => {
                    if parts.len() != 4 {
                        return Err(Error::format(n, "expected `lambda <level> <bucket> <value>`"));
                    }
                    let k = parse_usize(n, Some(&parts[1].to_string()))?;
                    let b = parse_usize(n, Some(&parts[2].to_string()))?;
                    if k >= lambdas.num_levels() || b >= lambdas.num_buckets() {
                        return Err(Error::format(n, "lambda index out of range"));
                    }
                    lambdas.set(k, b, real(parts[3])?)?;
                }
                _ => return Err(Error::format(n, format!("unexpected line `{line}`"))),
            }
        }
        SmoothedModel::new(table, lambdas, outcomes)
    }
}
