//! Bottom-up chart parsing: Viterbi derivations and inside probabilities.
//!
//! The Viterbi chart works in log space. The inside chart keeps each cell as
//! linear values scaled to a maximum of one plus a per-cell log offset, so the
//! inner loops avoid `exp`/`ln` while long sentences cannot underflow.
//!
//! Unary rules are closed per cell. For Viterbi this is relaxation bounded by
//! the number of nonterminals; for inside sums the closure series is truncated
//! once a pass adds less than `1e-15` of the cell mass, which is exact for
//! acyclic unary structure.

mod tree;

pub use tree::{tree_rule_counts, ParseTree};

use crate::error::{Error, Result};
use crate::grammar::{Pcfg, Rhs, SymbolId};
use crate::logspace::log_add;

const SUM_CLOSURE_GAIN: f64 = 1e-15;
const MAX_SUM_CLOSURE_PASSES: usize = 1000;

#[derive(Clone, Copy, Debug)]
pub(crate) struct BinaryEntry {
    pub rule: u32,
    pub lhs: u32,
    pub left: u32,
    pub right: u32,
    pub log_prob: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct UnaryEntry {
    pub rule: u32,
    pub lhs: u32,
    pub child: u32,
    pub log_prob: f64,
    pub prob: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Back {
    None,
    Leaf,
    Unary(u32),
    Binary(u32, u32),
}

impl Back {
    fn rule(self) -> Option<u32> {
        match self {
            Back::Unary(r) | Back::Binary(r, _) => Some(r),
            _ => None,
        }
    }
}

/// Converts tokens to terminal ids of `g`.
pub fn encode_sentence<S: AsRef<str>>(g: &Pcfg, tokens: &[S]) -> Result<Vec<SymbolId>> {
    tokens
        .iter()
        .map(|t| {
            g.symbols()
                .terminal(t.as_ref())
                .ok_or_else(|| Error::UnknownToken(t.as_ref().to_owned()))
        })
        .collect()
}

/// Rule tables for one grammar, reusable across sentences.
pub struct Parser<'g> {
    grammar: &'g Pcfg,
    pub(crate) num_symbols: usize,
    num_nonterminals: usize,
    pub(crate) binary: Vec<BinaryEntry>,
    /// Unary rules rewriting to a terminal.
    pub(crate) lexical: Vec<UnaryEntry>,
    /// Unary rules rewriting to a nonterminal.
    pub(crate) chain: Vec<UnaryEntry>,
    /// Distinct binary right-hand sides `(left, right)`.
    pub(crate) pairs: Vec<(u32, u32)>,
    /// Binary rules with the index of their right-hand side in `pairs`.
    pub(crate) pair_rules: Vec<PairRule>,
    /// Chain rules in child-before-parent order, when the chain graph is acyclic.
    chain_sorted: Option<Vec<UnaryEntry>>,
    /// Pairs grouped by left child: `left_pairs[left_start[b]..left_start[b + 1]]`
    /// holds `(pair, right)` for every pair with left child `b`.
    pub(crate) left_start: Vec<u32>,
    pub(crate) left_pairs: Vec<(u32, u32)>,
    /// Distinct left children of binary rules.
    pub(crate) lefts: Vec<u32>,
    /// Distinct right children of binary rules.
    pub(crate) rights: Vec<u32>,
    /// Positions of each pair's children in `lefts` and `rights`.
    pub(crate) pair_slots: Vec<(u32, u32)>,
    /// Some rule probability is zero as `f64` but not in log space.
    underflow: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PairRule {
    pub pair: u32,
    pub lhs: u32,
    pub rule: u32,
    pub prob: f64,
}

impl<'g> Parser<'g> {
    pub fn new(grammar: &'g Pcfg) -> Self {
        let mut binary = Vec::new();
        let mut lexical = Vec::new();
        let mut chain = Vec::new();
        for (i, r) in grammar.rules().iter().enumerate() {
            match r.rhs {
                Rhs::Binary(b, c) => binary.push(BinaryEntry {
                    rule: i as u32,
                    lhs: r.lhs.0,
                    left: b.0,
                    right: c.0,
                    log_prob: r.log_prob,
                    prob: r.log_prob.exp(),
                }),
                Rhs::Unary(b) => {
                    let e = UnaryEntry {
                        rule: i as u32,
                        lhs: r.lhs.0,
                        child: b.0,
                        log_prob: r.log_prob,
                        prob: r.log_prob.exp(),
                    };
                    if grammar.symbols().is_terminal(b) {
                        lexical.push(e);
                    } else {
                        chain.push(e);
                    }
                }
            }
        }
        let mut pair_index = std::collections::HashMap::new();
        let mut pairs = Vec::new();
        let mut pair_rules = Vec::with_capacity(binary.len());
        for b in &binary {
            let p = *pair_index.entry((b.left, b.right)).or_insert_with(|| {
                pairs.push((b.left, b.right));
                pairs.len() as u32 - 1
            });
            pair_rules.push(PairRule {
                pair: p,
                lhs: b.lhs,
                rule: b.rule,
                prob: b.prob,
            });
        }
        let mut lefts: Vec<u32> = pairs.iter().map(|p| p.0).collect();
        let mut rights: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        lefts.sort_unstable();
        lefts.dedup();
        rights.sort_unstable();
        rights.dedup();
        let pair_slots = pairs
            .iter()
            .map(|&(b, c)| {
                (
                    lefts.binary_search(&b).unwrap() as u32,
                    rights.binary_search(&c).unwrap() as u32,
                )
            })
            .collect();
        let chain_sorted = topological_chain(&chain, grammar.symbols().len());
        let ns = grammar.symbols().len();
        let mut left_start = vec![0u32; ns + 1];
        for &(b, _) in &pairs {
            left_start[b as usize + 1] += 1;
        }
        for k in 0..ns {
            left_start[k + 1] += left_start[k];
        }
        let mut fill = left_start.clone();
        let mut left_pairs = vec![(0u32, 0u32); pairs.len()];
        for (p, &(b, c)) in pairs.iter().enumerate() {
            left_pairs[fill[b as usize] as usize] = (p as u32, c);
            fill[b as usize] += 1;
        }
        Self {
            grammar,
            num_symbols: grammar.symbols().len(),
            num_nonterminals: grammar.symbols().num_nonterminals(),
            binary,
            lexical,
            chain,
            pairs,
            pair_rules,
            chain_sorted,
            left_start,
            left_pairs,
            lefts,
            rights,
            pair_slots,
            underflow: grammar
                .rules()
                .iter()
                .any(|r| r.log_prob.is_finite() && r.log_prob.exp() == 0.0),
        }
    }

    pub fn grammar(&self) -> &'g Pcfg {
        self.grammar
    }

    pub(crate) fn check_sentence(&self, sentence: &[SymbolId]) -> Result<()> {
        if sentence.is_empty() {
            return Err(Error::NoParse { sentence: None });
        }
        for &t in sentence {
            if t.index() >= self.num_symbols || !self.grammar.symbols().is_terminal(t) {
                return Err(Error::UnknownToken(t.to_string()));
            }
        }
        Ok(())
    }

    /// Most probable derivation of `sentence` from the start symbol.
    ///
    /// Ties go to the lowest rule index, then the smaller left-child span.
    pub fn viterbi(&self, sentence: &[SymbolId]) -> Result<(ParseTree, f64)> {
        self.check_sentence(sentence)?;
        let n = sentence.len();
        let ns = self.num_symbols;
        let cell = |i: usize, j: usize| (i * (n + 1) + j) * ns;
        let mut score = vec![f64::NEG_INFINITY; (n + 1) * (n + 1) * ns];
        let mut back = vec![Back::None; (n + 1) * (n + 1) * ns];

        for (i, &w) in sentence.iter().enumerate() {
            let base = cell(i, i + 1);
            score[base + w.index()] = 0.0;
            back[base + w.index()] = Back::Leaf;
            self.viterbi_closure(
                &mut score[base..base + ns],
                &mut back[base..base + ns],
                &self.lexical,
            );
            self.viterbi_closure(
                &mut score[base..base + ns],
                &mut back[base..base + ns],
                &self.chain,
            );
        }

        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width;
                let base = cell(i, j);
                for k in i + 1..j {
                    let l = cell(i, k);
                    let r = cell(k, j);
                    for b in &self.binary {
                        let ls = score[l + b.left as usize];
                        if ls == f64::NEG_INFINITY {
                            continue;
                        }
                        let rs = score[r + b.right as usize];
                        if rs == f64::NEG_INFINITY {
                            continue;
                        }
                        let cand = b.log_prob + ls + rs;
                        let slot = base + b.lhs as usize;
                        let cur = score[slot];
                        let better = cand > cur
                            || (cand == cur
                                && cand > f64::NEG_INFINITY
                                && match back[slot] {
                                    Back::Binary(rule, split) => {
                                        b.rule < rule || (b.rule == rule && (k as u32) < split)
                                    }
                                    Back::Unary(rule) => b.rule < rule,
                                    _ => true,
                                });
                        if better {
                            score[slot] = cand;
                            back[slot] = Back::Binary(b.rule, k as u32);
                        }
                    }
                }
                self.viterbi_closure(
                    &mut score[base..base + ns],
                    &mut back[base..base + ns],
                    &self.chain,
                );
            }
        }

        let root = cell(0, n) + self.grammar.start().index();
        let best = score[root];
        if best == f64::NEG_INFINITY {
            return Err(Error::NoParse { sentence: None });
        }
        let mut budget = (n + 1) * (ns + 1) * 2;
        let tree = self.build(
            &back,
            &cell,
            sentence,
            0,
            n,
            self.grammar.start(),
            &mut budget,
        )?;
        Ok((tree, best))
    }

    fn viterbi_closure(&self, score: &mut [f64], back: &mut [Back], rules: &[UnaryEntry]) {
        if rules.is_empty() {
            return;
        }
        let mut converged = false;
        for _ in 0..=self.num_nonterminals {
            let mut changed = false;
            for u in rules {
                if u.lhs == u.child {
                    continue;
                }
                let s = score[u.child as usize];
                if s == f64::NEG_INFINITY {
                    continue;
                }
                let cand = s + u.log_prob;
                if cand == f64::NEG_INFINITY {
                    continue;
                }
                let slot = u.lhs as usize;
                let cur = score[slot];
                if cand > cur || (cand == cur && back[slot].rule().is_some_and(|r| u.rule < r)) {
                    score[slot] = cand;
                    back[slot] = Back::Unary(u.rule);
                    changed = true;
                }
            }
            if !changed {
                converged = true;
                break;
            }
        }
        debug_assert!(converged, "unary closure did not reach a fixpoint");
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        &self,
        back: &[Back],
        cell: &dyn Fn(usize, usize) -> usize,
        sentence: &[SymbolId],
        i: usize,
        j: usize,
        sym: SymbolId,
        budget: &mut usize,
    ) -> Result<ParseTree> {
        if *budget == 0 {
            return Err(Error::State("cyclic Viterbi backpointers".into()));
        }
        *budget -= 1;
        match back[cell(i, j) + sym.index()] {
            Back::Unary(r) => {
                let child = match self.grammar.rule(r as usize).rhs {
                    Rhs::Unary(c) => c,
                    Rhs::Binary(..) => unreachable!(),
                };
                if self.grammar.symbols().is_terminal(child) {
                    debug_assert_eq!(j, i + 1);
                    debug_assert_eq!(sentence[i], child);
                    Ok(ParseTree::leaf(sym, r as usize, i))
                } else {
                    let sub = self.build(back, cell, sentence, i, j, child, budget)?;
                    Ok(ParseTree::node(sym, r as usize, vec![sub]))
                }
            }
            Back::Binary(r, k) => {
                let (b, c) = match self.grammar.rule(r as usize).rhs {
                    Rhs::Binary(b, c) => (b, c),
                    Rhs::Unary(_) => unreachable!(),
                };
                let k = k as usize;
                let left = self.build(back, cell, sentence, i, k, b, budget)?;
                let right = self.build(back, cell, sentence, k, j, c, budget)?;
                Ok(ParseTree::node(sym, r as usize, vec![left, right]))
            }
            Back::Leaf | Back::None => Err(Error::State("broken Viterbi backpointer".into())),
        }
    }

    /// Log probability of `sentence` summed over all derivations.
    pub fn inside_logprob(&self, sentence: &[SymbolId]) -> Result<f64> {
        let fast = self
            .inside_chart(sentence)
            .and_then(|chart| chart.sentence_logprob(self.grammar.start()));
        match fast {
            Err(Error::NoParse { .. }) if self.underflow => self.log_space_inside(sentence),
            other => other,
        }
    }

    /// Inside probability computed entirely in log space. Slow, but exact
    /// for rules whose probabilities underflow as `f64`.
    fn log_space_inside(&self, sentence: &[SymbolId]) -> Result<f64> {
        let n = sentence.len();
        let ns = self.num_symbols;
        let cell = |i: usize, j: usize| (i * (n + 1) + j) * ns;
        let mut beta = vec![f64::NEG_INFINITY; (n + 1) * (n + 1) * ns];
        for width in 1..=n {
            for i in 0..=n - width {
                let j = i + width;
                let base = cell(i, j);
                if width == 1 {
                    beta[base + sentence[i].index()] = 0.0;
                    for u in &self.lexical {
                        let d = beta[base + u.child as usize];
                        beta[base + u.lhs as usize] =
                            log_add(beta[base + u.lhs as usize], u.log_prob + d);
                    }
                }
                for k in i + 1..j {
                    let (l, r) = (cell(i, k), cell(k, j));
                    for b in &self.binary {
                        let v = b.log_prob + beta[l + b.left as usize] + beta[r + b.right as usize];
                        beta[base + b.lhs as usize] = log_add(beta[base + b.lhs as usize], v);
                    }
                }
                self.log_chain_closure(&mut beta[base..base + ns]);
            }
        }
        let lp = beta[cell(0, n) + self.grammar.start().index()];
        if lp == f64::NEG_INFINITY {
            return Err(Error::NoParse { sentence: None });
        }
        Ok(lp)
    }

    fn log_chain_closure(&self, vals: &mut [f64]) {
        if let Some(sorted) = &self.chain_sorted {
            for u in sorted {
                vals[u.lhs as usize] =
                    log_add(vals[u.lhs as usize], u.log_prob + vals[u.child as usize]);
            }
            return;
        }
        let mut delta = vals.to_vec();
        for _ in 0..MAX_SUM_CLOSURE_PASSES {
            let mut next = vec![f64::NEG_INFINITY; vals.len()];
            for u in &self.chain {
                next[u.lhs as usize] =
                    log_add(next[u.lhs as usize], u.log_prob + delta[u.child as usize]);
            }
            let mut gain = f64::NEG_INFINITY;
            for (v, &d) in vals.iter_mut().zip(&next) {
                if d > f64::NEG_INFINITY {
                    gain = gain.max(d - *v);
                    *v = log_add(*v, d);
                }
            }
            if gain < SUM_CLOSURE_GAIN.ln() {
                break;
            }
            delta = next;
        }
    }

    pub(crate) fn inside_chart(&self, sentence: &[SymbolId]) -> Result<InsideChart> {
        self.inside_chart_with(sentence, false)
    }

    /// Inside chart; with `keep_pairs`, also the per-cell sums over splits of
    /// `β(i,k,B)·β(k,j,C)` for every binary right-hand side `(B, C)`.
    pub(crate) fn inside_chart_with(
        &self,
        sentence: &[SymbolId],
        keep_pairs: bool,
    ) -> Result<InsideChart> {
        self.check_sentence(sentence)?;
        let n = sentence.len();
        let ns = self.num_symbols;
        let np = self.pairs.len();
        let mut chart = InsideChart::new(n, ns);
        if keep_pairs {
            chart.pair_vals = vec![0.0; (n + 1) * (n + 1) * np];
            chart.pair_offs = vec![f64::NEG_INFINITY; (n + 1) * (n + 1)];
            chart.np = np;
        }
        let mut scratch = ClosureScratch::new(ns);
        let mut rows = Vec::new();
        let mut row_ends = vec![0usize; n.max(1)];
        let mut row_offs = vec![f64::NEG_INFINITY; n.max(1)];
        let mut tsum = vec![0.0; np];
        let mut acc = vec![0.0; ns];

        for (i, &w) in sentence.iter().enumerate() {
            let (vals, off) = chart.cell_mut(i, i + 1);
            vals[w.index()] = 1.0;
            *off = 0.0;
            self.sum_closure(vals, &self.lexical, &mut scratch);
            self.chain_closure(vals, &mut scratch);
            rescale(vals, off);
            chart.index_lefts(i, i + 1, &self.left_start);
        }

        for width in 2..=n {
            for i in 0..=n - width {
                let j = i + width;
                let t_off = self.pair_sums(
                    &chart,
                    i,
                    j,
                    &mut rows,
                    &mut row_ends,
                    &mut row_offs,
                    &mut tsum,
                );
                acc.iter_mut().for_each(|v| *v = 0.0);
                if t_off > f64::NEG_INFINITY {
                    for e in &self.pair_rules {
                        let t = tsum[e.pair as usize];
                        if t != 0.0 {
                            acc[e.lhs as usize] += e.prob * t;
                        }
                    }
                    self.chain_closure(&mut acc, &mut scratch);
                }
                if keep_pairs {
                    let k = chart.idx(i, j);
                    chart.pair_vals[k * np..(k + 1) * np].copy_from_slice(&tsum);
                    chart.pair_offs[k] = t_off;
                }
                let (vals, off) = chart.cell_mut(i, j);
                vals.copy_from_slice(&acc);
                *off = t_off;
                rescale(vals, off);
                chart.index_lefts(i, j, &self.left_start);
            }
        }
        Ok(chart)
    }

    /// Sums `β(i,k,B)·β(k,j,C)` over splits `k` for every pair `(B, C)` into
    /// `tsum`, scaled so the largest split contribution has offset zero.
    /// Returns the log offset of `tsum`.
    #[allow(clippy::too_many_arguments)]
    fn pair_sums(
        &self,
        chart: &InsideChart,
        i: usize,
        j: usize,
        rows: &mut Vec<(u32, f64)>,
        row_ends: &mut [usize],
        row_offs: &mut [f64],
        tsum: &mut [f64],
    ) -> f64 {
        let mut best = f64::NEG_INFINITY;
        rows.clear();
        for (r, k) in (i + 1..j).enumerate() {
            row_offs[r] = f64::NEG_INFINITY;
            let lo = chart.off(i, k);
            let ro = chart.off(k, j);
            if lo != f64::NEG_INFINITY && ro != f64::NEG_INFINITY {
                let left = chart.cell(i, k);
                let right = chart.cell(k, j);
                let row_start = rows.len();
                let mut top = 0.0f64;
                for &b in chart.lefts(i, k) {
                    let lv = left[b as usize];
                    let range = self.left_start[b as usize] as usize
                        ..self.left_start[b as usize + 1] as usize;
                    for &(p, c) in &self.left_pairs[range] {
                        let v = lv * right[c as usize];
                        if v != 0.0 {
                            rows.push((p, v));
                            top = top.max(v);
                        }
                    }
                }
                if top > 0.0 {
                    let mut base = lo + ro;
                    if top < f64::MIN_POSITIVE {
                        let lift = 2f64.powi(600);
                        rows[row_start..].iter_mut().for_each(|(_, v)| *v *= lift);
                        top *= lift;
                        base -= 600.0 * std::f64::consts::LN_2;
                    }
                    row_offs[r] = base;
                    best = best.max(base + top.ln());
                }
            }
            row_ends[r] = rows.len();
        }
        tsum.iter_mut().for_each(|v| *v = 0.0);
        if best == f64::NEG_INFINITY {
            return best;
        }
        let mut start = 0;
        for r in 0..j - i - 1 {
            let end = row_ends[r];
            if row_offs[r] != f64::NEG_INFINITY {
                let f = (row_offs[r] - best).exp();
                if f != 0.0 {
                    for &(p, v) in &rows[start..end] {
                        tsum[p as usize] += f * v;
                    }
                }
            }
            start = end;
        }
        best
    }

    /// Adds unary-chain mass into `vals` until a pass gains less than
    /// `SUM_CLOSURE_GAIN` of the cell maximum.
    pub(crate) fn sum_closure(
        &self,
        vals: &mut [f64],
        rules: &[UnaryEntry],
        s: &mut ClosureScratch,
    ) {
        if rules.is_empty() {
            return;
        }
        s.delta.copy_from_slice(vals);
        for _ in 0..MAX_SUM_CLOSURE_PASSES {
            s.next.iter_mut().for_each(|v| *v = 0.0);
            let mut gain = 0.0f64;
            for u in rules {
                let d = s.delta[u.child as usize];
                if d != 0.0 {
                    let add = u.prob * d;
                    s.next[u.lhs as usize] += add;
                }
            }
            for (v, &a) in vals.iter_mut().zip(&s.next) {
                *v += a;
                gain = gain.max(a);
            }
            if gain == 0.0 {
                break;
            }
            let top = vals.iter().copied().fold(0.0, f64::max);
            if gain < SUM_CLOSURE_GAIN * top {
                break;
            }
            std::mem::swap(&mut s.delta, &mut s.next);
        }
    }

    /// Closes `vals` under the chain rules.
    pub(crate) fn chain_closure(&self, vals: &mut [f64], s: &mut ClosureScratch) {
        match &self.chain_sorted {
            Some(sorted) => {
                for u in sorted {
                    let d = vals[u.child as usize];
                    if d != 0.0 {
                        vals[u.lhs as usize] += u.prob * d;
                    }
                }
            }
            None => self.sum_closure(vals, &self.chain, s),
        }
    }

    /// Outside counterpart of [`Parser::chain_closure`].
    pub(crate) fn chain_closure_outside(&self, vals: &mut [f64], s: &mut ClosureScratch) {
        match &self.chain_sorted {
            Some(sorted) => {
                for u in sorted.iter().rev() {
                    let d = vals[u.lhs as usize];
                    if d != 0.0 {
                        vals[u.child as usize] += u.prob * d;
                    }
                }
            }
            None => self.sum_closure_outside(vals, &self.chain, s),
        }
    }

    /// Outside counterpart of [`Parser::sum_closure`]: pushes mass from
    /// parents down to unary children.
    pub(crate) fn sum_closure_outside(
        &self,
        vals: &mut [f64],
        rules: &[UnaryEntry],
        s: &mut ClosureScratch,
    ) {
        if rules.is_empty() {
            return;
        }
        s.delta.copy_from_slice(vals);
        for _ in 0..MAX_SUM_CLOSURE_PASSES {
            s.next.iter_mut().for_each(|v| *v = 0.0);
            let mut gain = 0.0f64;
            for u in rules {
                let d = s.delta[u.lhs as usize];
                if d != 0.0 {
                    s.next[u.child as usize] += u.prob * d;
                }
            }
            for (v, &a) in vals.iter_mut().zip(&s.next) {
                *v += a;
                gain = gain.max(a);
            }
            if gain == 0.0 {
                break;
            }
            let top = vals.iter().copied().fold(0.0, f64::max);
            if gain < SUM_CLOSURE_GAIN * top {
                break;
            }
            std::mem::swap(&mut s.delta, &mut s.next);
        }
    }
}

/// Orders chain rules by the topological position of their child, or `None`
/// if the chain graph has a cycle.
fn topological_chain(chain: &[UnaryEntry], ns: usize) -> Option<Vec<UnaryEntry>> {
    let mut indegree = vec![0usize; ns];
    let mut parents: Vec<Vec<u32>> = vec![Vec::new(); ns];
    for u in chain {
        indegree[u.lhs as usize] += 1;
        parents[u.child as usize].push(u.lhs);
    }
    let mut queue: std::collections::VecDeque<u32> = (0..ns as u32)
        .filter(|&v| indegree[v as usize] == 0)
        .collect();
    let mut pos = vec![0usize; ns];
    let mut next = 0;
    while let Some(v) = queue.pop_front() {
        pos[v as usize] = next;
        next += 1;
        for &p in &parents[v as usize] {
            indegree[p as usize] -= 1;
            if indegree[p as usize] == 0 {
                queue.push_back(p);
            }
        }
    }
    if next < ns {
        return None;
    }
    let mut sorted = chain.to_vec();
    sorted.sort_by_key(|u| pos[u.child as usize]);
    Some(sorted)
}

pub(crate) struct ClosureScratch {
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl ClosureScratch {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            delta: vec![0.0; n],
            next: vec![0.0; n],
        }
    }
}

/// Adds `vals · e^off` into `acc · e^acc_off` at positions `idx`.
pub(crate) fn merge_scaled_at(
    acc: &mut [f64],
    acc_off: &mut f64,
    idx: &[u32],
    vals: &[f64],
    off: f64,
) {
    if *acc_off == f64::NEG_INFINITY {
        acc.iter_mut().for_each(|v| *v = 0.0);
        *acc_off = off;
    } else if off > *acc_off + 300.0 {
        let f = (*acc_off - off).exp();
        acc.iter_mut().for_each(|v| *v *= f);
        *acc_off = off;
    }
    let f = (off - *acc_off).exp();
    for (&i, &v) in idx.iter().zip(vals) {
        acc[i as usize] += v * f;
    }
}

/// Rescales a cell so its largest value is one.
pub(crate) fn rescale(vals: &mut [f64], off: &mut f64) {
    let mut top = vals.iter().copied().fold(0.0, f64::max);
    if top > 0.0 && top.is_finite() {
        if top < f64::MIN_POSITIVE {
            // subnormal maximum: lift by an exact power of two so 1/top stays finite
            let lift = 2f64.powi(600);
            vals.iter_mut().for_each(|v| *v *= lift);
            top *= lift;
            *off -= 600.0 * std::f64::consts::LN_2;
        }
        let inv = 1.0 / top;
        vals.iter_mut().for_each(|v| *v *= inv);
        *off += top.ln();
    } else {
        vals.iter_mut().for_each(|v| *v = 0.0);
        *off = f64::NEG_INFINITY;
    }
}

/// Inside values: `β(i, j, A) = vals[A] · e^off(i, j)`.
pub(crate) struct InsideChart {
    pub n: usize,
    ns: usize,
    vals: Vec<f64>,
    offs: Vec<f64>,
    np: usize,
    pair_vals: Vec<f64>,
    pair_offs: Vec<f64>,
    left_syms: Vec<u32>,
    left_ranges: Vec<(u32, u32)>,
}

impl InsideChart {
    pub(crate) fn new(n: usize, ns: usize) -> Self {
        Self {
            n,
            ns,
            vals: vec![0.0; (n + 1) * (n + 1) * ns],
            offs: vec![f64::NEG_INFINITY; (n + 1) * (n + 1)],
            np: 0,
            pair_vals: Vec::new(),
            pair_offs: Vec::new(),
            left_syms: Vec::new(),
            left_ranges: vec![(0, 0); (n + 1) * (n + 1)],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.n + 1) + j
    }

    #[inline]
    pub(crate) fn cell(&self, i: usize, j: usize) -> &[f64] {
        let c = self.idx(i, j) * self.ns;
        &self.vals[c..c + self.ns]
    }

    #[inline]
    pub(crate) fn off(&self, i: usize, j: usize) -> f64 {
        self.offs[self.idx(i, j)]
    }

    pub(crate) fn cell_mut(&mut self, i: usize, j: usize) -> (&mut [f64], &mut f64) {
        let k = self.idx(i, j);
        let c = k * self.ns;
        (&mut self.vals[c..c + self.ns], &mut self.offs[k])
    }

    /// Records the nonzero symbols of a cell that are left children of some pair.
    fn index_lefts(&mut self, i: usize, j: usize, left_start: &[u32]) {
        let k = self.idx(i, j);
        let start = self.left_syms.len() as u32;
        let c = k * self.ns;
        for (b, &v) in self.vals[c..c + self.ns].iter().enumerate() {
            if v != 0.0 && left_start[b] != left_start[b + 1] {
                self.left_syms.push(b as u32);
            }
        }
        self.left_ranges[k] = (start, self.left_syms.len() as u32);
    }

    /// Nonzero left-child symbols of a cell.
    #[inline]
    pub(crate) fn lefts(&self, i: usize, j: usize) -> &[u32] {
        let (a, b) = self.left_ranges[self.idx(i, j)];
        &self.left_syms[a as usize..b as usize]
    }

    /// Split sums of a cell kept by `inside_chart_with`.
    pub(crate) fn pair_cell(&self, i: usize, j: usize) -> (&[f64], f64) {
        let k = self.idx(i, j);
        (
            &self.pair_vals[k * self.np..(k + 1) * self.np],
            self.pair_offs[k],
        )
    }

    /// Natural log of `β(i, j, sym)`.
    pub(crate) fn log_value(&self, i: usize, j: usize, sym: SymbolId) -> f64 {
        let v = self.cell(i, j)[sym.index()];
        if v == 0.0 {
            f64::NEG_INFINITY
        } else {
            v.ln() + self.off(i, j)
        }
    }

    pub(crate) fn sentence_logprob(&self, start: SymbolId) -> Result<f64> {
        let lp = self.log_value(0, self.n, start);
        if lp == f64::NEG_INFINITY {
            Err(Error::NoParse { sentence: None })
        } else {
            Ok(lp)
        }
    }
}

/// Viterbi parse of `sentence` under `g`.
pub fn viterbi_parse(g: &Pcfg, sentence: &[SymbolId]) -> Result<(ParseTree, f64)> {
    Parser::new(g).viterbi(sentence)
}

/// Log probability of `sentence` under `g`, summed over derivations.
pub fn inside_logprob(g: &Pcfg, sentence: &[SymbolId]) -> Result<f64> {
    Parser::new(g).inside_logprob(sentence)
}
