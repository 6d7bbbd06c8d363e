//! Interpolated n-gram language models.
//!
//! The order-`i` estimate mixes the relative frequency `c(W w)/c(W)` with the
//! order-`i-1` estimate using a weight `λ[i][bucket(c(W))]`; order 1 mixes
//! with the uniform distribution over the vocabulary. Buckets group context
//! counts by powers of two: `{0}, {1}, {2,3}, {4..7}, …`. A context never
//! seen in training contributes nothing and passes the lower-order estimate
//! through unchanged, which keeps every conditional distribution normalized.
//!
//! Each sentence is padded with `n-1` copies of `<s>` (never scored) and
//! terminated by `</s>`, which is scored like any word. Tokens outside the
//! training vocabulary map to `<unk>`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const EOS: &str = "</s>";
pub const BOS: &str = "<s>";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
const BOS_ID: u32 = 2;

/// Bucket count covers every `u64` context count.
pub const NUM_BUCKETS: usize = 65;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const MAX_ORDER: usize = 10;
const LAMBDA_REL_TOL: f64 = 1e-6;
const LAMBDA_MAX_ITERATIONS: usize = 1000;

/// Power-of-two bucket of a context count.
pub fn bucket(count: u64) -> usize {
    (64 - count.leading_zeros()) as usize
}

#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn new() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [UNK, EOS, BOS] {
            v.insert(t);
        }
        v
    }

    fn insert(&mut self, t: &str) -> u32 {
        if let Some(&id) = self.index.get(t) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.tokens.push(t.to_owned());
        self.index.insert(t.to_owned(), id);
        id
    }

    pub fn id(&self, t: &str) -> u32 {
        match self.index.get(t) {
            Some(&BOS_ID) | None => UNK_ID,
            Some(&id) => id,
        }
    }

    /// Number of predictable tokens: every word plus `</s>` and `<unk>`.
    pub fn size(&self) -> usize {
        self.tokens.len() - 1
    }

    /// Predictable tokens, i.e. everything but `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BOS_ID)
            .map(|(_, t)| t.as_str())
    }
}

/// Training counts for orders `1..=n`.
#[derive(Clone, Debug)]
pub struct CountTable {
    order: usize,
    vocab: Vocab,
    /// `ngrams[i-1]`: counts of i-grams.
    ngrams: Vec<HashMap<Vec<u32>, u64>>,
    /// `contexts[i-1]`: `c(W) = Σ_w c(W w)` for histories of length `i-1`.
    contexts: Vec<HashMap<Vec<u32>, u64>>,
    total: u64,
}

fn padded(vocab: &Vocab, order: usize, sentence: &[String]) -> Vec<u32> {
    let mut ids = vec![BOS_ID; order - 1];
    ids.extend(sentence.iter().map(|t| vocab.id(t)));
    ids.push(EOS_ID);
    ids
}

/// Counts every 1..n-gram ending at a scored position of the padded corpus.
pub fn count(corpus: &[Vec<String>], order: usize) -> Result<CountTable> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Config(format!(
            "n-gram order must be in 1..={MAX_ORDER}"
        )));
    }
    let mut vocab = Vocab::new();
    for s in corpus {
        for t in s {
            vocab.insert(t);
        }
    }
    let mut table = CountTable {
        order,
        vocab,
        ngrams: vec![HashMap::new(); order],
        contexts: vec![HashMap::new(); order],
        total: 0,
    };
    for s in corpus {
        let ids = padded(&table.vocab, order, s);
        for t in order - 1..ids.len() {
            table.add_position(&ids, t, 1);
        }
    }
    Ok(table)
}

impl CountTable {
    fn add_position(&mut self, ids: &[u32], t: usize, c: u64) {
        self.total += c;
        for i in 1..=self.order {
            let gram = &ids[t + 1 - i..=t];
            *self.ngrams[i - 1].entry(gram.to_vec()).or_insert(0) += c;
            *self.contexts[i - 1]
                .entry(gram[..i - 1].to_vec())
                .or_insert(0) += c;
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Count of a token sequence; `<s>` may appear as padding.
    pub fn ngram_count(&self, tokens: &[&str]) -> u64 {
        if tokens.is_empty() || tokens.len() > self.order {
            return 0;
        }
        let ids: Vec<u32> = tokens.iter().map(|t| self.raw_id(t)).collect();
        self.ngrams[tokens.len() - 1]
            .get(&ids)
            .copied()
            .unwrap_or(0)
    }

    /// `c(W)` for a history `W` of length below the order.
    pub fn context_count(&self, history: &[&str]) -> u64 {
        if history.len() >= self.order {
            return 0;
        }
        let ids: Vec<u32> = history.iter().map(|t| self.raw_id(t)).collect();
        self.contexts[history.len()].get(&ids).copied().unwrap_or(0)
    }

    fn raw_id(&self, t: &str) -> u32 {
        self.vocab.index.get(t).copied().unwrap_or(UNK_ID)
    }

    /// Scored tokens, `</s>` included.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Distinct stored n-grams over all orders.
    pub fn stored_counts(&self) -> usize {
        self.ngrams.iter().map(HashMap::len).sum()
    }
}

/// Interpolation weights `λ[order][bucket]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaBuckets {
    lambdas: Vec<Vec<f64>>,
    trained: Vec<Vec<bool>>,
}

impl LambdaBuckets {
    pub fn uniform(order: usize, value: f64) -> Self {
        let mut lambdas = vec![vec![value; NUM_BUCKETS]; order];
        for l in &mut lambdas {
            l[0] = 0.0;
        }
        Self {
            lambdas,
            trained: vec![vec![false; NUM_BUCKETS]; order],
        }
    }

    /// Weight for `order` (1-based) and bucket.
    pub fn get(&self, order: usize, bucket: usize) -> f64 {
        self.lambdas[order - 1][bucket]
    }

    /// Sets a weight. The zero-count bucket stays at zero.
    pub fn set(&mut self, order: usize, bucket: usize, value: f64) {
        if bucket != 0 {
            self.lambdas[order - 1][bucket] = value.clamp(0.0, 1.0);
        }
    }

    pub fn set_order(&mut self, order: usize, value: f64) {
        for b in 1..NUM_BUCKETS {
            self.set(order, b, value);
        }
    }

    pub fn is_trained(&self, order: usize, bucket: usize) -> bool {
        self.trained[order - 1][bucket]
    }

    pub fn num_trained(&self) -> usize {
        self.trained.iter().flatten().filter(|&&t| t).count()
    }
}

/// Per-iteration record of held-out λ training.
#[derive(Clone, Debug, Serialize)]
pub struct LambdaTrace {
    pub log_likelihoods: Vec<f64>,
    /// `(order, bucket)` pairs seen in training but not in held-out data.
    pub untouched: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct NgramModel {
    counts: CountTable,
    lambdas: Option<LambdaBuckets>,
}

/// Per-order quantities for one scored position.
#[derive(Clone, Copy, Debug)]
struct Level {
    order: usize,
    bucket: usize,
    ml: f64,
}

impl NgramModel {
    /// A model whose weights still need training.
    pub fn untrained(counts: CountTable) -> Self {
        Self {
            counts,
            lambdas: None,
        }
    }

    pub fn with_lambdas(counts: CountTable, lambdas: LambdaBuckets) -> Self {
        Self {
            counts,
            lambdas: Some(lambdas),
        }
    }

    pub fn counts(&self) -> &CountTable {
        &self.counts
    }

    pub fn lambdas(&self) -> Option<&LambdaBuckets> {
        self.lambdas.as_ref()
    }

    pub fn order(&self) -> usize {
        self.counts.order
    }

    /// Stored n-gram counts plus trained λ buckets.
    pub fn num_parameters(&self) -> usize {
        self.counts.stored_counts() + self.lambdas.as_ref().map_or(0, LambdaBuckets::num_trained)
    }

    fn lambdas_or_err(&self) -> Result<&LambdaBuckets> {
        self.lambdas
            .as_ref()
            .ok_or_else(|| Error::State("n-gram interpolation weights are not trained".into()))
    }

    fn levels(&self, ids: &[u32], t: usize, out: &mut Vec<Level>) {
        out.clear();
        for i in 1..=self.counts.order {
            let gram = &ids[t + 1 - i..=t];
            let c = self.counts.contexts[i - 1]
                .get(&gram[..i - 1])
                .copied()
                .unwrap_or(0);
            if c == 0 {
                continue;
            }
            let cw = self.counts.ngrams[i - 1].get(gram).copied().unwrap_or(0);
            out.push(Level {
                order: i,
                bucket: bucket(c),
                ml: cw as f64 / c as f64,
            });
        }
    }

    fn interpolate(&self, lambdas: &LambdaBuckets, levels: &[Level]) -> f64 {
        let mut p = 1.0 / self.counts.vocab.size() as f64;
        for l in levels {
            let lam = lambdas.get(l.order, l.bucket);
            p = lam * l.ml + (1.0 - lam) * p;
        }
        p
    }

    /// `p(w0 | context)`, using the last `n-1` context tokens; shorter
    /// contexts are padded with `<s>`.
    pub fn prob<S: AsRef<str>>(&self, w0: &str, context: &[S]) -> Result<f64> {
        let lambdas = self.lambdas_or_err()?;
        let n = self.counts.order;
        let take = context.len().min(n - 1);
        let mut ids = vec![BOS_ID; n - 1 - take];
        ids.extend(
            context[context.len() - take..]
                .iter()
                .map(|t| self.counts.vocab.id(t.as_ref())),
        );
        ids.push(self.counts.vocab.id(w0));
        let mut levels = Vec::with_capacity(n);
        self.levels(&ids, ids.len() - 1, &mut levels);
        Ok(self.interpolate(lambdas, &levels))
    }

    /// Sum of `log2 p` over the scored tokens of a sentence, and their number.
    pub fn sentence_log2prob(&self, sentence: &[String]) -> Result<(f64, usize)> {
        let lambdas = self.lambdas_or_err()?;
        let n = self.counts.order;
        let ids = padded(&self.counts.vocab, n, sentence);
        let mut levels = Vec::with_capacity(n);
        let mut total = 0.0;
        for t in n - 1..ids.len() {
            self.levels(&ids, t, &mut levels);
            total += self.interpolate(lambdas, &levels).log2();
        }
        Ok((total, ids.len() + 1 - n))
    }

    /// Fits the interpolation weights to held-out data by EM over the hidden
    /// choice between each order's relative frequency and its backoff.
    pub fn train_lambdas(&mut self, heldout: &[Vec<String>]) -> Result<LambdaTrace> {
        if heldout.is_empty() {
            return Err(Error::Config("held-out corpus is empty".into()));
        }
        let n = self.counts.order;
        let mut lambdas = self
            .lambdas
            .take()
            .unwrap_or_else(|| LambdaBuckets::uniform(n, DEFAULT_LAMBDA));
        let mut positions: Vec<Vec<Level>> = Vec::new();
        let mut seen = vec![vec![false; NUM_BUCKETS]; n];
        let mut scratch = Vec::new();
        for s in heldout {
            let ids = padded(&self.counts.vocab, n, s);
            for t in n - 1..ids.len() {
                self.levels(&ids, t, &mut scratch);
                for l in &scratch {
                    seen[l.order - 1][l.bucket] = true;
                }
                positions.push(scratch.clone());
            }
        }

        let uniform = 1.0 / self.counts.vocab.size() as f64;
        let mut trace = Vec::new();
        let mut probs = Vec::with_capacity(n + 1);
        for _ in 0..LAMBDA_MAX_ITERATIONS {
            let mut num = vec![vec![0.0; NUM_BUCKETS]; n];
            let mut den = vec![vec![0.0; NUM_BUCKETS]; n];
            let mut ll = 0.0;
            for levels in &positions {
                probs.clear();
                probs.push(uniform);
                for l in levels {
                    let lam = lambdas.get(l.order, l.bucket);
                    let prev = *probs.last().unwrap();
                    probs.push(lam * l.ml + (1.0 - lam) * prev);
                }
                let top = *probs.last().unwrap();
                ll += top.ln();
                // posterior mass of reaching each level from the top
                let mut reach = 1.0;
                for (k, l) in levels.iter().enumerate().rev() {
                    let lam = lambdas.get(l.order, l.bucket);
                    let p = probs[k + 1];
                    if p <= 0.0 {
                        break;
                    }
                    let ml_share = lam * l.ml / p;
                    num[l.order - 1][l.bucket] += reach * ml_share;
                    den[l.order - 1][l.bucket] += reach;
                    reach *= 1.0 - ml_share;
                }
            }
            let converged = trace
                .last()
                .is_some_and(|&prev: &f64| (ll - prev) <= LAMBDA_REL_TOL * prev.abs());
            trace.push(ll);
            if converged {
                break;
            }
            for i in 0..n {
                for b in 1..NUM_BUCKETS {
                    if den[i][b] > 0.0 {
                        lambdas.set(i + 1, b, num[i][b] / den[i][b]);
                    }
                }
            }
        }
        let mut untouched = Vec::new();
        for (trained, seen) in lambdas.trained.iter_mut().zip(&seen) {
            trained[1..].copy_from_slice(&seen[1..]);
        }
        for (i, ctx) in self.counts.contexts.iter().enumerate() {
            let mut buckets: Vec<usize> = ctx.values().map(|&c| bucket(c)).collect();
            buckets.sort_unstable();
            buckets.dedup();
            for b in buckets {
                if b != 0 && !seen[i][b] {
                    untouched.push((i + 1, b));
                }
            }
        }
        if !untouched.is_empty() {
            log::debug!("{} λ buckets had no held-out evidence", untouched.len());
        }
        self.lambdas = Some(lambdas);
        Ok(LambdaTrace {
            log_likelihoods: trace,
            untouched,
        })
    }

    /// Test-set entropy in bits per scored token (`</s>` included).
    pub fn entropy(&self, test: &[Vec<String>]) -> Result<f64> {
        let mut bits = 0.0;
        let mut tokens = 0usize;
        for s in test {
            let (lp, t) = self.sentence_log2prob(s)?;
            bits -= lp;
            tokens += t;
        }
        if tokens == 0 {
            return Err(Error::Config("test corpus is empty".into()));
        }
        Ok(bits / tokens as f64)
    }

    /// Writes the model as versioned text.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let lambdas = self.lambdas_or_err()?;
        let c = &self.counts;
        writeln!(out, "ngram-model v1")?;
        writeln!(out, "order {}", c.order)?;
        writeln!(out, "vocab {}", c.vocab.tokens.len())?;
        for t in &c.vocab.tokens {
            writeln!(out, "{t}")?;
        }
        for (i, grams) in c.ngrams.iter().enumerate() {
            writeln!(out, "ngrams {} {}", i + 1, grams.len())?;
            let mut entries: Vec<(&Vec<u32>, &u64)> = grams.iter().collect();
            entries.sort();
            for (k, v) in entries {
                let ids: Vec<String> = k.iter().map(u32::to_string).collect();
                writeln!(out, "{} {v}", ids.join(" "))?;
            }
        }
        for i in 1..=c.order {
            writeln!(out, "lambdas {i}")?;
            for b in 1..NUM_BUCKETS {
                let lam = lambdas.get(i, b);
                let tr = lambdas.is_trained(i, b);
                if lam != DEFAULT_LAMBDA || tr {
                    writeln!(out, "{b} {lam} {}", u8::from(tr))?;
                }
            }
        }
        writeln!(out, "end")?;
        out.flush()?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| -> Result<(usize, String)> {
            match lines.next() {
                Some((n, Ok(l))) => Ok((n, l)),
                Some((_, Err(e))) => Err(e.into()),
                None => Err(Error::format(
                    0,
                    format!("unexpected end of file, expected {what}"),
                )),
            }
        };
        let (ln, magic) = next("header")?;
        if magic.trim() != "ngram-model v1" {
            return Err(Error::format(
                ln,
                "not an n-gram model (expected `ngram-model v1`)",
            ));
        }
        let header = |ln: usize, line: &str, key: &str| -> Result<Vec<usize>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::format(ln, format!("expected `{key}`")));
            }
            it.map(|x| {
                x.parse::<usize>()
                    .map_err(|_| Error::format(ln, "bad number"))
            })
            .collect()
        };
        let (ln, l) = next("order")?;
        let order = *header(ln, &l, "order")?
            .first()
            .ok_or_else(|| Error::format(ln, "missing order"))?;
        if order == 0 || order > MAX_ORDER {
            return Err(Error::format(ln, "order out of range"));
        }
        let (ln, l) = next("vocab")?;
        let nv = *header(ln, &l, "vocab")?
            .first()
            .ok_or_else(|| Error::format(ln, "missing size"))?;
        let mut vocab = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for _ in 0..nv {
            let (ln, t) = next("token")?;
            let t = t.trim().to_owned();
            if t.is_empty() || vocab.index.contains_key(&t) {
                return Err(Error::format(ln, "empty or duplicate vocabulary entry"));
            }
            vocab.insert(&t);
        }
        if vocab.tokens.len() < 3 || vocab.tokens[..3] != [UNK, EOS, BOS] {
            return Err(Error::format(
                0,
                "vocabulary must begin with <unk>, </s>, <s>",
            ));
        }
        let mut table = CountTable {
            order,
            vocab,
            ngrams: vec![HashMap::new(); order],
            contexts: vec![HashMap::new(); order],
            total: 0,
        };
        for i in 1..=order {
            let (ln, l) = next("ngrams")?;
            let h = header(ln, &l, "ngrams")?;
            if h.len() != 2 || h[0] != i {
                return Err(Error::format(ln, format!("expected `ngrams {i} <count>`")));
            }
            for _ in 0..h[1] {
                let (ln, l) = next("n-gram")?;
                let nums: Vec<u64> = l
                    .split_whitespace()
                    .map(|x| {
                        x.parse::<u64>()
                            .map_err(|_| Error::format(ln, "bad number"))
                    })
                    .collect::<Result<_>>()?;
                if nums.len() != i + 1 || nums[..i].iter().any(|&id| id as usize >= nv) {
                    return Err(Error::format(ln, "malformed n-gram entry"));
                }
                let key: Vec<u32> = nums[..i].iter().map(|&x| x as u32).collect();
                let c = nums[i];
                *table.contexts[i - 1]
                    .entry(key[..i - 1].to_vec())
                    .or_insert(0) += c;
                if i == 1 {
                    table.total += c;
                }
                table.ngrams[i - 1].insert(key, c);
            }
        }
        let lambdas = LambdaBuckets::uniform(order, DEFAULT_LAMBDA);
        let (ln, l) = next("lambdas")?;
        if header(ln, &l, "lambdas")? != [1] {
            return Err(Error::format(ln, "expected `lambdas 1`"));
        }
        let (ln, l) = next("lambda entry")?;
        read_lambdas(table, lambdas, order, ln, l, &mut next)
    }
}

fn parse_lambda_line(lambdas: &mut LambdaBuckets, order: usize, ln: usize, l: &str) -> Result<()> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(Error::format(ln, "expected `<bucket> <lambda> <trained>`"));
    }
    let b: usize = parts[0]
        .parse()
        .map_err(|_| Error::format(ln, "bad bucket"))?;
    let lam: f64 = parts[1]
        .parse()
        .map_err(|_| Error::format(ln, "bad lambda"))?;
    if b == 0 || b >= NUM_BUCKETS || !(0.0..=1.0).contains(&lam) {
        return Err(Error::format(ln, "lambda entry out of range"));
    }
    lambdas.lambdas[order - 1][b] = lam;
    lambdas.trained[order - 1][b] = parts[2] == "1";
    Ok(())
}

fn read_lambdas(
    counts: CountTable,
    mut lambdas: LambdaBuckets,
    order: usize,
    mut ln: usize,
    mut line: String,
    next: &mut dyn FnMut(&str) -> Result<(usize, String)>,
) -> Result<NgramModel> {
    let mut current = 1;
    loop {
        if line.trim() == "end" {
            if current != order {
                return Err(Error::format(ln, "missing lambda sections"));
            }
            return Ok(NgramModel::with_lambdas(counts, lambdas));
        }
        if let Some(rest) = line.strip_prefix("lambdas") {
            let i: usize = rest
                .trim()
                .parse()
                .map_err(|_| Error::format(ln, "bad order"))?;
            if i != current + 1 || i > order {
                return Err(Error::format(
                    ln,
                    format!("expected `lambdas {}`", current + 1),
                ));
            }
            current = i;
        } else {
            parse_lambda_line(&mut lambdas, current, ln, &line)?;
        }
        let (l2, s) = next("lambda entry")?;
        ln = l2;
        line = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn buckets_are_powers_of_two() {
        assert_eq!(bucket(0), 0);
        assert_eq!(bucket(1), 1);
        assert_eq!(bucket(2), 2);
        assert_eq!(bucket(3), 2);
        assert_eq!(bucket(4), 3);
        assert_eq!(bucket(7), 3);
        assert_eq!(bucket(8), 4);
    }

    #[test]
    fn counts_with_padding() {
        let t = count(&corpus(&["a b"]), 2).unwrap();
        assert_eq!(t.ngram_count(&["a"]), 1);
        assert_eq!(t.ngram_count(&["b"]), 1);
        assert_eq!(t.ngram_count(&[BOS, "a"]), 1);
        assert_eq!(t.ngram_count(&["a", "b"]), 1);
        assert_eq!(t.ngram_count(&["b", EOS]), 1);
        assert_eq!(t.ngram_count(&[EOS]), 1);
        assert_eq!(t.ngram_count(&[BOS]), 0);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn empty_corpus_counts_nothing() {
        let t = count(&[], 3).unwrap();
        assert_eq!(t.total(), 0);
        assert_eq!(t.stored_counts(), 0);
        let m = NgramModel::with_lambdas(t, LambdaBuckets::uniform(3, 0.7));
        // only <unk> and </s> are predictable
        assert!((m.prob(EOS, &["x"]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unigram_counts_sum_to_tokens() {
        let c = corpus(&["a b c", "a", "b b"]);
        let t = count(&c, 3).unwrap();
        let sum: u64 = ["a", "b", "c", EOS]
            .iter()
            .map(|w| t.ngram_count(&[w]))
            .sum();
        assert_eq!(sum, 6 + 3);
        assert_eq!(sum, t.total());
    }

    #[test]
    fn untrained_model_is_an_error() {
        let m = NgramModel::untrained(count(&corpus(&["a"]), 2).unwrap());
        assert!(matches!(m.prob("a", &["a"]), Err(Error::State(_))));
        let mut m = m;
        assert!(matches!(m.train_lambdas(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn limits_of_the_interpolation() {
        let c = corpus(&["a b", "a b", "a c"]);
        let t = count(&c, 2).unwrap();
        let m = NgramModel::with_lambdas(t.clone(), LambdaBuckets::uniform(2, 0.0));
        for w in ["a", "b", "c", EOS, UNK] {
            assert!((m.prob(w, &["a"]).unwrap() - 0.2).abs() < 1e-15);
        }
        let det = count(&corpus(&["x y"]), 2).unwrap();
        let m = NgramModel::with_lambdas(det, LambdaBuckets::uniform(2, 1.0));
        assert!((m.prob("y", &["x"]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn worked_bigram_example() {
        let t = count(&corpus(&["a b", "a b", "a c"]), 2).unwrap();
        let mut l = LambdaBuckets::uniform(2, 0.5);
        l.set_order(2, 0.75);
        l.set_order(1, 0.9);
        let m = NgramModel::with_lambdas(t, l);
        let expected: f64 = 0.75 * (2.0 / 3.0) + 0.25 * (0.9 * (2.0 / 9.0) + 0.1 * (1.0 / 5.0));
        assert!((expected - 0.555).abs() < 1e-15);
        assert!((m.prob("b", &["a"]).unwrap() - 0.555).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        // empty training data: uniform over {<unk>, </s>, a?}; use a 2-word vocab for |V| = 4
        let t = count(&corpus(&["p q"]), 1).unwrap();
        let m = NgramModel::with_lambdas(t, LambdaBuckets::uniform(1, 0.0));
        assert!((m.entropy(&corpus(&["p q p", "q"])).unwrap() - 2.0).abs() < 1e-15);

        let text = corpus(&["the cat sat", "the cat sat"]);
        let t = count(&text, 2).unwrap();
        let m = NgramModel::with_lambdas(t, LambdaBuckets::uniform(2, 1.0));
        assert_eq!(m.entropy(&text).unwrap(), 0.0);
    }

    #[test]
    fn unknown_words_get_the_uniform_share() {
        let t = count(&corpus(&["a b"]), 2).unwrap();
        let mut l = LambdaBuckets::uniform(2, 0.5);
        l.set_order(1, 0.8);
        let m = NgramModel::with_lambdas(t, l);
        let p = m.prob("zzz", &["a"]).unwrap();
        assert!((p - 0.5 * 0.2 * 0.25).abs() < 1e-15);
        assert_eq!(p, m.prob(UNK, &["a"]).unwrap());
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let c = corpus(&["a b c", "a b", "c a b a"]);
        let mut m = NgramModel::untrained(count(&c, 3).unwrap());
        m.train_lambdas(&corpus(&["a b", "c c a"])).unwrap();
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let r = NgramModel::read(buf.as_slice()).unwrap();
        assert_eq!(r.lambdas(), m.lambdas());
        assert_eq!(r.counts().stored_counts(), m.counts().stored_counts());
        let test = corpus(&["a b c a", "b"]);
        assert_eq!(r.entropy(&test).unwrap(), m.entropy(&test).unwrap());
        let mut again = Vec::new();
        r.write(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn malformed_dump_reports_line() {
        let err = NgramModel::read("ngram-model v1\norder x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
        let err = NgramModel::read("grammar\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 1, .. }));
    }
}
