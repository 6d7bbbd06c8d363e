//! Greedy Bayesian grammar induction.
//!
//! The hypothesis grammar always has the shape
//!
//! ```text
//! S -> S X (1-ε) | X (ε)
//! X -> A          for every other nonterminal A
//! A_a -> 'a'      for every terminal a
//! ```
//!
//! plus the rules introduced by moves. A sentence's Viterbi parse is thus a
//! sequence of top-level items, the subtrees below each `X`. Sentences are
//! parsed once, in order; after each one the search applies the best
//! triggered move while the estimated objective `log p(O|G) + log p(G)`
//! improves. Moves rewrite the stored parses of the whole corpus according to
//! a predicted Viterbi change, and rule probabilities are a deterministic
//! function of the resulting Viterbi counts.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{description_length_bits, Pcfg, Rhs, SymbolId, SymbolTable};
use crate::logspace::weighted;
use crate::parser::{encode_sentence, ParseTree, Parser};

pub const SENTENCE_SYMBOL: &str = "S";
pub const SEQUENCE_SYMBOL: &str = "X";
pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_MAX_SENTENCE_LEN: usize = 40;
const MAX_MOVES_PER_SENTENCE: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InductionConfig {
    pub epsilon: f64,
    pub max_sentence_len: usize,
    /// Re-parse the stored corpus exactly every this many sentences.
    pub checkpoint_every: Option<usize>,
}

impl Default for InductionConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
            checkpoint_every: None,
        }
    }
}

impl InductionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Config(
                "epsilon must lie strictly between 0 and 1".into(),
            ));
        }
        if self.max_sentence_len == 0 {
            return Err(Error::Config("max_sentence_len must be positive".into()));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint interval must be positive".into()));
        }
        Ok(())
    }
}

/// A grammar modification. Each introduces a fresh symbol `A` and `X -> A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Move {
    /// `A -> B C`
    Concat(SymbolId, SymbolId),
    /// `A -> B | C`, with `B < C`
    Disjoin(SymbolId, SymbolId),
    /// `A -> A B | B`
    Iterate(SymbolId),
}

impl Move {
    pub fn describe(&self, g: &Pcfg) -> String {
        let n = |s: SymbolId| g.symbols().name(s);
        match *self {
            Move::Concat(b, c) => format!("concat {} {}", n(b), n(c)),
            Move::Disjoin(b, c) => format!("disjoin {} {}", n(b), n(c)),
            Move::Iterate(b) => format!("iterate {}", n(b)),
        }
    }

    /// Symbol slots added to the grammar, `X -> A` included.
    fn size_units(&self) -> usize {
        match self {
            Move::Concat(..) => 3 + 2,
            Move::Disjoin(..) => 2 + 2 + 2,
            Move::Iterate(_) => 3 + 2 + 2,
        }
    }
}

/// Predicted effect of a move on the stored Viterbi parses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    /// Items rewritten: merged pairs, rerouted items, or collapsed runs.
    pub edits: u64,
    pub delta_log_likelihood: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AcceptedMove {
    pub sentence: usize,
    pub description: String,
    pub new_symbol: String,
    pub delta: f64,
}

/// One line of progress output per processed sentence.
#[derive(Clone, Debug, Serialize)]
pub struct ProgressRecord {
    pub sentence: usize,
    pub rules: usize,
    pub symbols: usize,
    pub moves: usize,
    pub objective: f64,
}

/// Gap between predicted and exact Viterbi likelihood at a checkpoint.
#[derive(Clone, Debug, Serialize)]
pub struct Checkpoint {
    pub sentence: usize,
    pub predicted_log_likelihood: f64,
    pub exact_log_likelihood: f64,
}

fn preterminal_name(t: &str) -> String {
    let clean: String = t
        .chars()
        .map(|c| if c == '\'' || c == '#' { '?' } else { c })
        .collect();
    format!("A_{clean}")
}

/// The initial hypothesis grammar over `vocab`.
pub fn initial_grammar<S: AsRef<str>>(vocab: &[S], epsilon: f64) -> Result<Pcfg> {
    if vocab.is_empty() {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Config(
            "epsilon must lie strictly between 0 and 1".into(),
        ));
    }
    let mut table = SymbolTable::new();
    let s = table.intern_nonterminal(SENTENCE_SYMBOL);
    let x = table.intern_nonterminal(SEQUENCE_SYMBOL);
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::new();
    for t in vocab {
        let t = t.as_ref();
        if seen.insert(t) {
            let a = table.fresh_nonterminal(&preterminal_name(t));
            pairs.push((a, table.intern_terminal(t)));
        }
    }
    let mut g = Pcfg::new(table, s)?;
    g.add_rule(s, Rhs::Binary(s, x), (1.0 - epsilon).ln())?;
    g.add_rule(s, Rhs::Unary(x), epsilon.ln())?;
    let uniform = -(pairs.len() as f64).ln();
    for &(a, _) in &pairs {
        g.add_rule(x, Rhs::Unary(a), uniform)?;
    }
    for &(a, t) in &pairs {
        g.add_rule(a, Rhs::Unary(t), 0.0)?;
    }
    Ok(g)
}

fn sentence_symbols(g: &Pcfg) -> Result<(SymbolId, SymbolId)> {
    let s = g.start();
    let x = g.symbols().nonterminal(SEQUENCE_SYMBOL).ok_or_else(|| {
        Error::InvalidGrammar(format!("grammar has no `{SEQUENCE_SYMBOL}` symbol"))
    })?;
    Ok((s, x))
}

/// Sets every probability from Viterbi counts: `S` gets `1-ε`/`ε`, `X -> A`
/// gets add-one smoothed relative frequencies, and every other symbol expands
/// uniformly.
pub fn set_parameters(g: &mut Pcfg, counts: &[u64], epsilon: f64) -> Result<()> {
    let (s, x) = sentence_symbols(g)?;
    let count = |r: usize| counts.get(r).copied().unwrap_or(0);
    let lhss: Vec<SymbolId> = g.lhs_symbols().collect();
    for a in lhss {
        let rules = g.rules_for(a).to_vec();
        if a == s {
            for r in rules {
                let lp = match g.rule(r).rhs {
                    Rhs::Binary(..) => (1.0 - epsilon).ln(),
                    Rhs::Unary(_) => epsilon.ln(),
                };
                g.set_log_prob(r, lp);
            }
        } else if a == x {
            let total: u64 = rules.iter().map(|&r| count(r)).sum();
            let denom = ((total + rules.len() as u64) as f64).ln();
            for r in rules {
                g.set_log_prob(r, ((count(r) + 1) as f64).ln() - denom);
            }
        } else {
            let lp = -(rules.len() as f64).ln();
            for r in rules {
                g.set_log_prob(r, lp);
            }
        }
    }
    Ok(())
}

/// `Σ_r count(r) · log p(r)`.
pub fn count_log_likelihood(g: &Pcfg, counts: &[u64]) -> f64 {
    counts
        .iter()
        .enumerate()
        .map(|(r, &c)| weighted(c as f64, g.rule(r).log_prob))
        .sum()
}

/// Sum of exact Viterbi log-probabilities plus the log prior.
pub fn exact_objective(g: &Pcfg, sentences: &[Vec<SymbolId>]) -> Result<f64> {
    let parser = Parser::new(g);
    let mut ll = 0.0;
    for (i, s) in sentences.iter().enumerate() {
        ll += parser.viterbi(s).map_err(|e| e.with_sentence(i))?.1;
    }
    Ok(ll + g.log_prior())
}

#[derive(Clone, Copy, Debug, Default)]
struct RunStat {
    /// Maximal runs of length ≥ 2.
    runs: u64,
    /// Items inside those runs.
    items: u64,
    /// Greedy left-to-right pairs, `Σ ⌊len/2⌋` over all maximal runs.
    pairs: u64,
}

/// `c · ln(c + 1)`, the per-symbol part of the `X` log-likelihood.
fn x_term(c: u64) -> f64 {
    if c == 0 {
        0.0
    } else {
        c as f64 * ((c + 1) as f64).ln()
    }
}

/// `K · ln(K + k)`, the normalizer part for `K` items over `k` rules.
fn x_norm(items: u64, rules: usize) -> f64 {
    if items == 0 {
        0.0
    } else {
        items as f64 * ((items + rules as u64) as f64).ln()
    }
}

/// The induction loop's working state.
#[derive(Clone, Debug)]
pub struct HypothesisState {
    grammar: Pcfg,
    epsilon: f64,
    max_sentence_len: usize,
    s_sx: usize,
    s_x: usize,
    x_rule: Vec<Option<usize>>,
    counts: Vec<u64>,
    sentences: Vec<Vec<SymbolId>>,
    store: Vec<Vec<ParseTree>>,
    /// Sentences having a top-level item of each symbol.
    occurrences: Vec<BTreeSet<usize>>,
    /// Adjacent top-level pairs of distinct symbols.
    pair_counts: HashMap<(SymbolId, SymbolId), u64>,
    run_stats: HashMap<SymbolId, RunStat>,
    size_units: usize,
    next_name: usize,
    accepted: Vec<AcceptedMove>,
}

impl HypothesisState {
    pub fn new<S: AsRef<str>>(vocab: &[S], cfg: &InductionConfig) -> Result<Self> {
        cfg.validate()?;
        let grammar = initial_grammar(vocab, cfg.epsilon)?;
        let (s, x) = sentence_symbols(&grammar)?;
        let mut x_rule = vec![None; grammar.symbols().len()];
        for &r in grammar.rules_for(x) {
            if let Rhs::Unary(a) = grammar.rule(r).rhs {
                x_rule[a.index()] = Some(r);
            }
        }
        let find = |rhs| grammar.find_rule(s, rhs).expect("initial S rules");
        let s_sx = find(Rhs::Binary(s, x));
        let s_x = find(Rhs::Unary(x));
        let size_units = grammar.rules().iter().map(|r| r.rhs.len() + 1).sum();
        let nsym = grammar.symbols().len();
        let num_rules = grammar.num_rules();
        Ok(Self {
            grammar,
            epsilon: cfg.epsilon,
            max_sentence_len: cfg.max_sentence_len,
            s_sx,
            s_x,
            x_rule,
            counts: vec![0; num_rules],
            sentences: Vec::new(),
            store: Vec::new(),
            occurrences: vec![BTreeSet::new(); nsym],
            pair_counts: HashMap::new(),
            run_stats: HashMap::new(),
            size_units,
            next_name: 1,
            accepted: Vec::new(),
        })
    }

    pub fn grammar(&self) -> &Pcfg {
        &self.grammar
    }

    pub fn viterbi_counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn num_processed(&self) -> usize {
        self.store.len()
    }

    pub fn sentences(&self) -> &[Vec<SymbolId>] {
        &self.sentences
    }

    pub fn accepted_moves(&self) -> &[AcceptedMove] {
        &self.accepted
    }

    /// Top-level items of a stored parse.
    pub fn items(&self, sentence: usize) -> &[ParseTree] {
        &self.store[sentence]
    }

    /// The stored parse of a sentence as a full tree rooted at `S`.
    pub fn tree(&self, sentence: usize) -> ParseTree {
        let (s, x) = (self.grammar.start(), self.x());
        let wrap = |item: &ParseTree| {
            let r = self.x_rule[item.symbol.index()].expect("item symbol has an X rule");
            ParseTree::node(x, r, vec![item.clone()])
        };
        let items = &self.store[sentence];
        let mut t = ParseTree::node(s, self.s_x, vec![wrap(&items[0])]);
        for item in &items[1..] {
            t = ParseTree::node(s, self.s_sx, vec![t, wrap(item)]);
        }
        t
    }

    fn x(&self) -> SymbolId {
        match self.grammar.rule(self.s_x).rhs {
            Rhs::Unary(x) => x,
            Rhs::Binary(..) => unreachable!("S -> X is unary"),
        }
    }

    /// Rule counts recomputed from the stored parses.
    pub fn recount(&self) -> Vec<u64> {
        let mut counts = vec![0; self.grammar.num_rules()];
        for i in 0..self.store.len() {
            self.tree(i).add_counts(&mut counts);
        }
        counts
    }

    /// Estimated `log p(O|G)`: count-weighted rule log-probabilities.
    pub fn log_likelihood(&self) -> f64 {
        count_log_likelihood(&self.grammar, &self.counts)
    }

    /// Estimated objective `log p(O|G) + log p(G)`.
    pub fn objective(&self) -> f64 {
        self.log_likelihood() + self.grammar.log_prior()
    }

    fn x_count(&self, a: SymbolId) -> u64 {
        self.x_rule
            .get(a.index())
            .copied()
            .flatten()
            .map_or(0, |r| self.counts[r])
    }

    fn num_items(&self) -> u64 {
        self.counts[self.s_sx] + self.counts[self.s_x]
    }

    fn items_from_tree(&self, tree: &ParseTree) -> Result<Vec<ParseTree>> {
        let s = self.grammar.start();
        let x = self.x();
        let mut items = Vec::new();
        let mut node = tree;
        loop {
            if node.symbol != s {
                return Err(Error::State(
                    "parse is not rooted in the sentence symbol".into(),
                ));
            }
            let xnode = node
                .children
                .last()
                .filter(|c| c.symbol == x && c.children.len() == 1);
            let Some(xnode) = xnode else {
                return Err(Error::State(
                    "sentence-level node without an X child".into(),
                ));
            };
            items.push(xnode.children[0].clone());
            match node.children.len() {
                1 => break,
                _ => node = &node.children[0],
            }
        }
        items.reverse();
        Ok(items)
    }

    fn update_stats(&mut self, sentence: usize, add: bool) {
        let syms: Vec<SymbolId> = self.store[sentence].iter().map(|t| t.symbol).collect();
        for w in syms.windows(2) {
            if w[0] != w[1] {
                let e = self.pair_counts.entry((w[0], w[1])).or_insert(0);
                if add {
                    *e += 1;
                } else {
                    *e -= 1;
                    if *e == 0 {
                        self.pair_counts.remove(&(w[0], w[1]));
                    }
                }
            }
        }
        let mut i = 0;
        while i < syms.len() {
            let mut j = i + 1;
            while j < syms.len() && syms[j] == syms[i] {
                j += 1;
            }
            let len = (j - i) as u64;
            let st = self.run_stats.entry(syms[i]).or_default();
            let (runs, items) = if len >= 2 { (1, len) } else { (0, 0) };
            if add {
                st.runs += runs;
                st.items += items;
                st.pairs += len / 2;
            } else {
                st.runs -= runs;
                st.items -= items;
                st.pairs -= len / 2;
            }
            i = j;
        }
        for &a in &syms {
            let occ = &mut self.occurrences[a.index()];
            if add {
                occ.insert(sentence);
            } else {
                occ.remove(&sentence);
            }
        }
    }

    fn add_tree_counts(&mut self, sentence: usize) {
        let t = self.tree(sentence);
        t.add_counts(&mut self.counts);
    }

    fn refresh_parameters(&mut self) {
        set_parameters(&mut self.grammar, &self.counts, self.epsilon)
            .expect("hypothesis grammar has S and X");
    }

    /// Parses the next sentence with the current grammar and stores its
    /// Viterbi parse. Returns `None` for sentences over the length cap.
    pub fn observe<S: AsRef<str>>(&mut self, tokens: &[S]) -> Result<Option<usize>> {
        let sentence = encode_sentence(&self.grammar, tokens)?;
        if sentence.is_empty() {
            return Ok(None);
        }
        if sentence.len() > self.max_sentence_len {
            log::warn!(
                "skipping a sentence of {} tokens (cap {})",
                sentence.len(),
                self.max_sentence_len
            );
            return Ok(None);
        }
        let (tree, _) = Parser::new(&self.grammar).viterbi(&sentence)?;
        let items = self.items_from_tree(&tree)?;
        let id = self.store.len();
        self.sentences.push(sentence);
        self.store.push(items);
        self.add_tree_counts(id);
        self.update_stats(id, true);
        self.refresh_parameters();
        Ok(Some(id))
    }

    /// Moves triggered by a parse of the sentence-level shape.
    pub fn enumerate_triggers(&self, tree: &ParseTree) -> Result<Vec<Move>> {
        Ok(self.triggers_for_items(&self.items_from_tree(tree)?))
    }

    /// Moves triggered by the stored parse of `sentence`.
    pub fn triggers(&self, sentence: usize) -> Vec<Move> {
        self.triggers_for_items(&self.store[sentence])
    }

    fn triggers_for_items(&self, items: &[ParseTree]) -> Vec<Move> {
        let syms: Vec<SymbolId> = items.iter().map(|t| t.symbol).collect();
        let mut moves = BTreeSet::new();
        for w in syms.windows(2) {
            moves.insert(Move::Concat(w[0], w[1]));
        }
        let mut i = 0;
        while i < syms.len() {
            let mut j = i + 1;
            while j < syms.len() && syms[j] == syms[i] {
                j += 1;
            }
            if j - i >= 2 {
                moves.insert(Move::Iterate(syms[i]));
            }
            i = j;
        }
        // symbols sharing a neighbor on the same side
        let mut contexts: BTreeSet<(bool, SymbolId, SymbolId)> = BTreeSet::new();
        for w in syms.windows(2) {
            contexts.insert((false, w[1], w[0]));
            contexts.insert((true, w[0], w[1]));
        }
        let ctx: Vec<_> = contexts.into_iter().collect();
        for (a, e1) in ctx.iter().enumerate() {
            for e2 in &ctx[a + 1..] {
                if (e1.0, e1.1) != (e2.0, e2.1) {
                    break;
                }
                let (b, c) = (e1.2.min(e2.2), e1.2.max(e2.2));
                moves.insert(Move::Disjoin(b, c));
            }
        }
        moves
            .into_iter()
            .filter(|m| !self.already_present(*m))
            .collect()
    }

    fn already_present(&self, m: Move) -> bool {
        let g = &self.grammar;
        let x = self.x();
        let induced = |a: SymbolId| a != g.start() && a != x;
        match m {
            Move::Concat(b, c) => g
                .rules_with_rhs(&Rhs::Binary(b, c))
                .iter()
                .any(|&r| induced(g.rule(r).lhs)),
            Move::Disjoin(b, c) => g.rules_with_rhs(&Rhs::Unary(b)).iter().any(|&r| {
                let a = g.rule(r).lhs;
                induced(a) && g.rules_for(a).len() == 2 && g.find_rule(a, Rhs::Unary(c)).is_some()
            }),
            Move::Iterate(b) => g.rules_with_rhs(&Rhs::Unary(b)).iter().any(|&r| {
                let a = g.rule(r).lhs;
                induced(a) && g.find_rule(a, Rhs::Binary(a, b)).is_some()
            }),
        }
    }

    /// Predicted parse edits over all stored parses and the resulting change
    /// in count-weighted log-likelihood, in closed form.
    pub fn predict_viterbi_delta(&self, m: Move) -> Prediction {
        let k = self.grammar.rules_for(self.x()).len();
        let big_k = self.num_items();
        let ln_keep = (1.0 - self.epsilon).ln();
        let run = |b: SymbolId| self.run_stats.get(&b).copied().unwrap_or_default();
        match m {
            Move::Concat(b, c) => {
                let p = if b == c {
                    run(b).pairs
                } else {
                    self.pair_counts.get(&(b, c)).copied().unwrap_or(0)
                };
                let (cb, cc) = (self.x_count(b), self.x_count(c));
                let dx = if b == c {
                    x_term(cb - 2 * p) - x_term(cb)
                } else {
                    x_term(cb - p) - x_term(cb) + x_term(cc - p) - x_term(cc)
                };
                let d = dx + x_term(p) - x_norm(big_k - p, k + 1) + x_norm(big_k, k)
                    - p as f64 * ln_keep;
                Prediction {
                    edits: p,
                    delta_log_likelihood: d,
                }
            }
            Move::Disjoin(b, c) => {
                let (cb, cc) = (self.x_count(b), self.x_count(c));
                let moved = cb + cc;
                let d = x_term(moved) - x_term(cb) - x_term(cc) - x_norm(big_k, k + 1)
                    + x_norm(big_k, k)
                    - moved as f64 * std::f64::consts::LN_2;
                Prediction {
                    edits: moved,
                    delta_log_likelihood: d,
                }
            }
            Move::Iterate(b) => {
                let st = run(b);
                let cb = self.x_count(b);
                let new_k = big_k - st.items + st.runs;
                let d = x_term(cb - st.items) - x_term(cb) + x_term(st.runs) - x_norm(new_k, k + 1)
                    + x_norm(big_k, k)
                    - (st.items - st.runs) as f64 * ln_keep
                    - st.items as f64 * std::f64::consts::LN_2;
                Prediction {
                    edits: st.runs,
                    delta_log_likelihood: d,
                }
            }
        }
    }

    /// Change in the log prior from adding the move's rules and symbol.
    pub fn prior_delta(&self, m: Move) -> f64 {
        let v = self.grammar.symbols().len();
        let before = description_length_bits(self.size_units, v);
        let after = description_length_bits(self.size_units + m.size_units(), v + 1);
        -(after - before) * std::f64::consts::LN_2
    }

    /// Estimated change of `log p(O|G) + log p(G)`.
    pub fn objective_delta(&self, m: Move) -> f64 {
        self.predict_viterbi_delta(m).delta_log_likelihood + self.prior_delta(m)
    }

    fn add_rule(&mut self, lhs: SymbolId, rhs: Rhs, log_prob: f64) -> usize {
        let r = self
            .grammar
            .add_rule(lhs, rhs, log_prob)
            .expect("move rules are well formed");
        self.size_units += rhs.len() + 1;
        self.counts.push(0);
        r
    }

    /// Applies a move: new symbol and rules, corpus-wide parse edits, and
    /// parameters reset from the new counts. Returns the new symbol.
    pub fn apply(&mut self, m: Move) -> SymbolId {
        let (s, x) = (self.grammar.start(), self.x());
        let name = format!("N{}", self.next_name);
        self.next_name += 1;
        let a = self.grammar.fresh_nonterminal(&name);
        self.x_rule.push(None);
        self.occurrences.push(BTreeSet::new());
        debug_assert_eq!(self.x_rule.len(), self.grammar.symbols().len());
        let half = -std::f64::consts::LN_2;
        let (affected, rules): (BTreeSet<usize>, Vec<usize>) = match m {
            Move::Concat(b, c) => {
                let ob = &self.occurrences[b.index()];
                let oc = &self.occurrences[c.index()];
                let aff = ob.intersection(oc).copied().collect();
                (aff, vec![self.add_rule(a, Rhs::Binary(b, c), 0.0)])
            }
            Move::Disjoin(b, c) => {
                let ob = &self.occurrences[b.index()];
                let oc = &self.occurrences[c.index()];
                let aff = ob.union(oc).copied().collect();
                let rb = self.add_rule(a, Rhs::Unary(b), half);
                let rc = self.add_rule(a, Rhs::Unary(c), half);
                (aff, vec![rb, rc])
            }
            Move::Iterate(b) => {
                let aff = self.occurrences[b.index()].clone();
                let rab = self.add_rule(a, Rhs::Binary(a, b), half);
                let rb = self.add_rule(a, Rhs::Unary(b), half);
                (aff, vec![rab, rb])
            }
        };
        let xa = self.add_rule(x, Rhs::Unary(a), 0.0);
        self.x_rule[a.index()] = Some(xa);
        debug_assert!(s != a);

        for sid in affected {
            self.update_stats(sid, false);
            let items = std::mem::take(&mut self.store[sid]);
            let new_items = self.rewrite(m, a, &rules, items);
            self.store[sid] = new_items;
            self.update_stats(sid, true);
        }
        self.refresh_parameters();
        a
    }

    fn bump(&mut self, rule: usize, delta: i64) {
        let c = &mut self.counts[rule];
        *c = c
            .checked_add_signed(delta)
            .expect("rule count stays non-negative");
    }

    fn rewrite(
        &mut self,
        m: Move,
        a: SymbolId,
        rules: &[usize],
        items: Vec<ParseTree>,
    ) -> Vec<ParseTree> {
        let xa = self.x_rule[a.index()].unwrap();
        let xr = |st: &Self, t: &ParseTree| st.x_rule[t.symbol.index()].unwrap();
        let mut out = Vec::with_capacity(items.len());
        match m {
            Move::Concat(b, c) => {
                let mut it = items.into_iter().peekable();
                while let Some(t) = it.next() {
                    if t.symbol == b && it.peek().is_some_and(|n| n.symbol == c) {
                        let u = it.next().unwrap();
                        let (rt, ru) = (xr(self, &t), xr(self, &u));
                        self.bump(rt, -1);
                        self.bump(ru, -1);
                        self.bump(self.s_sx, -1);
                        self.bump(xa, 1);
                        self.bump(rules[0], 1);
                        out.push(ParseTree::node(a, rules[0], vec![t, u]));
                    } else {
                        out.push(t);
                    }
                }
            }
            Move::Disjoin(b, c) => {
                for t in items {
                    let r = if t.symbol == b {
                        rules[0]
                    } else if t.symbol == c {
                        rules[1]
                    } else {
                        out.push(t);
                        continue;
                    };
                    self.bump(xr(self, &t), -1);
                    self.bump(xa, 1);
                    self.bump(r, 1);
                    out.push(ParseTree::node(a, r, vec![t]));
                }
            }
            Move::Iterate(b) => {
                let (rab, rb) = (rules[0], rules[1]);
                let xb = self.x_rule[b.index()].unwrap();
                let mut it = items.into_iter().peekable();
                while let Some(t) = it.next() {
                    if t.symbol != b || !it.peek().is_some_and(|n| n.symbol == b) {
                        out.push(t);
                        continue;
                    }
                    let mut node = ParseTree::node(a, rb, vec![t]);
                    let mut len = 1i64;
                    while it.peek().is_some_and(|n| n.symbol == b) {
                        node = ParseTree::node(a, rab, vec![node, it.next().unwrap()]);
                        len += 1;
                    }
                    self.bump(xb, -len);
                    self.bump(xa, 1);
                    self.bump(rb, 1);
                    self.bump(rab, len - 1);
                    self.bump(self.s_sx, -(len - 1));
                    out.push(node);
                }
            }
        }
        out
    }

    /// Best-first search on the newest sentence: applies the triggered move
    /// with the largest estimated gain while that gain is positive. Returns
    /// the number of accepted moves.
    pub fn search(&mut self) -> usize {
        let Some(sid) = self.store.len().checked_sub(1) else {
            return 0;
        };
        let mut accepted = 0;
        for _ in 0..MAX_MOVES_PER_SENTENCE {
            let mut best: Option<(f64, Move)> = None;
            for m in self.triggers(sid) {
                let d = self.objective_delta(m);
                if best.is_none_or(|(bd, _)| d > bd) {
                    best = Some((d, m));
                }
            }
            let Some((delta, m)) = best.filter(|(d, _)| *d > 0.0) else {
                break;
            };
            let description = m.describe(&self.grammar);
            let a = self.apply(m);
            log::debug!("sentence {sid}: {description} (Δ = {delta:.3})");
            self.accepted.push(AcceptedMove {
                sentence: sid,
                description,
                new_symbol: self.grammar.symbols().name(a).to_owned(),
                delta,
            });
            accepted += 1;
        }
        accepted
    }

    /// Re-derives every stored parse by exact Viterbi parsing under the
    /// current grammar, then recounts and resets parameters.
    pub fn checkpoint(&mut self) -> Result<Checkpoint> {
        let predicted = self.log_likelihood();
        let parser = Parser::new(&self.grammar);
        let mut exact = 0.0;
        let mut parses = Vec::with_capacity(self.sentences.len());
        for (i, s) in self.sentences.iter().enumerate() {
            let (t, lp) = parser.viterbi(s).map_err(|e| e.with_sentence(i))?;
            exact += lp;
            parses.push(t);
        }
        let mut store = Vec::with_capacity(parses.len());
        for t in &parses {
            store.push(self.items_from_tree(t)?);
        }
        self.store = store;
        self.counts = self.recount();
        self.pair_counts.clear();
        self.run_stats.clear();
        self.occurrences.iter_mut().for_each(BTreeSet::clear);
        for i in 0..self.store.len() {
            self.update_stats(i, true);
        }
        self.refresh_parameters();
        Ok(Checkpoint {
            sentence: self.store.len(),
            predicted_log_likelihood: predicted,
            exact_log_likelihood: exact,
        })
    }

    /// Exact objective of the current grammar on the stored sentences.
    pub fn exact_objective(&self) -> Result<f64> {
        exact_objective(&self.grammar, &self.sentences)
    }
}

/// Outcome of an induction run.
#[derive(Clone, Debug)]
pub struct Induction {
    pub state: HypothesisState,
    pub skipped: usize,
    pub checkpoints: Vec<Checkpoint>,
}

impl Induction {
    pub fn grammar(&self) -> &Pcfg {
        self.state.grammar()
    }
}

/// Induces a grammar from `corpus`, reporting after every sentence.
pub fn induce_with_progress<S, F>(
    corpus: &[Vec<S>],
    cfg: &InductionConfig,
    mut progress: F,
) -> Result<Induction>
where
    S: AsRef<str>,
    F: FnMut(&ProgressRecord),
{
    if corpus.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let vocab = crate::corpus::vocabulary(corpus);
    let mut state = HypothesisState::new(&vocab, cfg)?;
    let mut skipped = 0;
    let mut checkpoints = Vec::new();
    for (i, s) in corpus.iter().enumerate() {
        if state.observe(s)?.is_none() {
            skipped += 1;
            continue;
        }
        state.search();
        if let Some(every) = cfg.checkpoint_every {
            if state.num_processed() % every == 0 {
                checkpoints.push(state.checkpoint()?);
            }
        }
        progress(&ProgressRecord {
            sentence: i,
            rules: state.grammar().num_rules(),
            symbols: state.grammar().symbols().len(),
            moves: state.accepted_moves().len(),
            objective: state.objective(),
        });
    }
    if state.num_processed() == 0 {
        return Err(Error::Config(
            "every training sentence exceeded the length cap".into(),
        ));
    }
    Ok(Induction {
        state,
        skipped,
        checkpoints,
    })
}

pub fn induce<S: AsRef<str>>(corpus: &[Vec<S>], cfg: &InductionConfig) -> Result<Induction> {
    induce_with_progress(corpus, cfg, |_| {})
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

    fn sym(st: &HypothesisState, name: &str) -> SymbolId {
        st.grammar().symbols().nonterminal(name).unwrap()
    }

    #[test]
    fn initial_grammar_schema() {
        let g = initial_grammar(&["Bob", "Mary", "talks", "slowly"], 0.01).unwrap();
        assert_eq!(g.num_rules(), 10);
        let x = g.symbols().nonterminal("X").unwrap();
        assert_eq!(g.rules_for(x).len(), 4);
        for &r in g.rules_for(x) {
            assert!((g.rule(r).prob() - 0.25).abs() < 1e-15);
        }
        assert!(g.max_normalization_error() < 1e-12);
        assert_eq!(g.symbols().name(g.start()), "S");

        let g = initial_grammar(&["a"], 0.01).unwrap();
        let shown: Vec<String> = (0..g.num_rules())
            .map(|r| {
                format!(
                    "{} {:.6}",
                    g.rule_display(r).to_string().rsplit_once(' ').unwrap().0,
                    g.rule(r).prob()
                )
            })
            .collect();
        assert_eq!(
            shown,
            [
                "S -> S X 0.990000",
                "S -> X 0.010000",
                "X -> A_a 1.000000",
                "A_a -> 'a' 1.000000"
            ]
        );

        assert!(matches!(
            initial_grammar::<&str>(&[], 0.01),
            Err(Error::Config(_))
        ));
        assert!(initial_grammar(&["a"], 0.0).is_err());
    }

    #[test]
    fn initial_description_length() {
        let g = initial_grammar(&["a", "b"], 0.01).unwrap();
        assert!((g.description_length() - 13.0 * 7f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn awkward_terminal_names_survive_the_file_format() {
        let g = initial_grammar(&["don't", "#", "A_x"], 0.1).unwrap();
        let mut buf = Vec::new();
        crate::grammar::write_grammar(&g, &mut buf).unwrap();
        let back = crate::grammar::read_grammar(buf.as_slice()).unwrap();
        assert_eq!(back.num_rules(), g.num_rules());
    }

    #[test]
    fn add_one_parameters() {
        let mut g = initial_grammar(&["a", "b"], 0.01).unwrap();
        let x = g.symbols().nonterminal("X").unwrap();
        let xr = g.rules_for(x).to_vec();
        let mut counts = vec![0; g.num_rules()];
        counts[xr[0]] = 3;
        counts[xr[1]] = 1;
        set_parameters(&mut g, &counts, 0.01).unwrap();
        assert!((g.rule(xr[0]).prob() - 4.0 / 6.0).abs() < 1e-15);
        assert!((g.rule(xr[1]).prob() - 2.0 / 6.0).abs() < 1e-15);
        set_parameters(&mut g, &[], 0.01).unwrap();
        assert!((g.rule(xr[0]).prob() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn other_symbols_expand_uniformly() {
        let mut st = HypothesisState::new(&["a", "b"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "b"]).unwrap();
        let (aa, ab) = (sym(&st, "A_a"), sym(&st, "A_b"));
        let n = st.apply(Move::Disjoin(aa, ab));
        let g = st.grammar();
        for &r in g.rules_for(n) {
            assert!((g.rule(r).prob() - 0.5).abs() < 1e-15);
        }
        assert!(g.max_normalization_error() < 1e-12);
    }

    #[test]
    fn figure_one_triggers() {
        let mut st = HypothesisState::new(
            &["Bob", "Mary", "slowly", "talks"],
            &InductionConfig::default(),
        )
        .unwrap();
        st.observe(&["Bob", "talks", "slowly"]).unwrap();
        let (bob, talks, slowly) = (sym(&st, "A_Bob"), sym(&st, "A_talks"), sym(&st, "A_slowly"));
        let moves = st.triggers(0);
        let concats: Vec<Move> = moves
            .iter()
            .copied()
            .filter(|m| matches!(m, Move::Concat(..)))
            .collect();
        assert_eq!(
            concats,
            [Move::Concat(bob, talks), Move::Concat(talks, slowly)]
        );
        assert!(!moves.iter().any(|m| matches!(m, Move::Iterate(_))));
        assert_eq!(st.enumerate_triggers(&st.tree(0)).unwrap(), moves);
    }

    #[test]
    fn run_triggers_iteration() {
        let mut st = HypothesisState::new(&["a"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "a", "a"]).unwrap();
        let a = sym(&st, "A_a");
        assert!(st.triggers(0).contains(&Move::Iterate(a)));
    }

    #[test]
    fn single_token_sentence_fires_no_structural_triggers() {
        let mut st = HypothesisState::new(&["a", "b"], &InductionConfig::default()).unwrap();
        st.observe(&["a"]).unwrap();
        assert!(st.triggers(0).is_empty());
        assert_eq!(st.search(), 0);
    }

    #[test]
    fn shared_context_triggers_disjunction() {
        let mut st = HypothesisState::new(&["a", "b", "c"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "c", "b", "c"]).unwrap();
        let (a, b) = (sym(&st, "A_a"), sym(&st, "A_b"));
        assert!(st.triggers(0).contains(&Move::Disjoin(a, b)));
    }

    #[test]
    fn figure_two_transformation() {
        let mut st = HypothesisState::new(
            &["Bob", "Mary", "slowly", "talks"],
            &InductionConfig::default(),
        )
        .unwrap();
        st.observe(&["Bob", "talks", "slowly"]).unwrap();
        st.observe(&["Mary", "talks", "slowly"]).unwrap();
        let (talks, slowly) = (sym(&st, "A_talks"), sym(&st, "A_slowly"));
        let s_sx_before = st.viterbi_counts()[0];
        let p = st.predict_viterbi_delta(Move::Concat(talks, slowly));
        assert_eq!(p.edits, 2);
        let b = st.apply(Move::Concat(talks, slowly));
        let g = st.grammar();
        assert_eq!(st.viterbi_counts()[0], s_sx_before - 2);
        for i in 0..2 {
            assert_eq!(st.items(i).len(), 2);
            assert_eq!(st.items(i)[1].symbol, b);
        }
        assert_eq!(
            st.tree(0).to_bracketed(g),
            format!(
                "(S (S (X (A_Bob Bob))) (X ({} (A_talks talks) (A_slowly slowly))))",
                g.symbols().name(b)
            )
        );
        assert_eq!(st.recount(), st.viterbi_counts());
    }

    #[test]
    fn absent_symbols_make_no_edits() {
        let mut st = HypothesisState::new(&["a", "b", "c"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "b"]).unwrap();
        let (b, c) = (sym(&st, "A_b"), sym(&st, "A_c"));
        let p = st.predict_viterbi_delta(Move::Concat(b, c));
        assert_eq!(p.edits, 0);
        assert!(st.objective_delta(Move::Concat(b, c)) < 0.0);
    }

    #[test]
    fn iteration_collapses_runs() {
        let mut st = HypothesisState::new(&["a", "b"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "a", "a", "b", "a", "a"]).unwrap();
        let a = sym(&st, "A_a");
        let p = st.predict_viterbi_delta(Move::Iterate(a));
        assert_eq!(p.edits, 2);
        let before = st.log_likelihood();
        let n = st.apply(Move::Iterate(a));
        let syms: Vec<SymbolId> = st.items(0).iter().map(|t| t.symbol).collect();
        assert_eq!(syms, [n, sym(&st, "A_b"), n]);
        assert_eq!(st.items(0)[0].children[0].symbol, n);
        assert_eq!(st.recount(), st.viterbi_counts());
        assert!((st.log_likelihood() - before - p.delta_log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn self_concatenation_pairs_greedily() {
        let mut st = HypothesisState::new(&["a"], &InductionConfig::default()).unwrap();
        st.observe(&["a", "a", "a", "a", "a"]).unwrap();
        let a = sym(&st, "A_a");
        let p = st.predict_viterbi_delta(Move::Concat(a, a));
        assert_eq!(p.edits, 2);
        let before = st.log_likelihood();
        st.apply(Move::Concat(a, a));
        assert_eq!(st.items(0).len(), 3);
        assert_eq!(st.recount(), st.viterbi_counts());
        assert!((st.log_likelihood() - before - p.delta_log_likelihood).abs() < 1e-9);
    }

    #[test]
    fn predicted_deltas_match_recounted_likelihood() {
        let mut st = HypothesisState::new(&["a", "b", "c"], &InductionConfig::default()).unwrap();
        for s in ["a b c", "a b", "c c c a b", "b a c", "a b a b"] {
            st.observe(&s.split(' ').collect::<Vec<_>>()).unwrap();
        }
        let (a, b, c) = (sym(&st, "A_a"), sym(&st, "A_b"), sym(&st, "A_c"));
        for m in [
            Move::Concat(a, b),
            Move::Disjoin(a, c),
            Move::Iterate(c),
            Move::Concat(b, a),
        ] {
            let before = st.log_likelihood();
            let p = st.predict_viterbi_delta(m);
            st.apply(m);
            assert_eq!(st.recount(), st.viterbi_counts());
            assert!(
                (st.log_likelihood() - before - p.delta_log_likelihood).abs() < 1e-9,
                "{m:?}"
            );
        }
    }

    #[test]
    fn over_long_sentences_are_skipped() {
        let cfg = InductionConfig {
            max_sentence_len: 2,
            ..Default::default()
        };
        let r = induce(&corpus(&["a b c", "a b"]), &cfg).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.state.num_processed(), 1);
        let cfg = InductionConfig {
            max_sentence_len: 1,
            ..Default::default()
        };
        assert!(induce(&corpus(&["a b"]), &cfg).is_err());
    }

    #[test]
    fn unknown_tokens_are_rejected() {
        let mut st = HypothesisState::new(&["a"], &InductionConfig::default()).unwrap();
        assert!(matches!(st.observe(&["zz"]), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn single_sentence_of_length_one() {
        let r = induce(&corpus(&["a"]), &InductionConfig::default()).unwrap();
        let g = r.grammar();
        assert_eq!(g.num_rules(), 4);
        assert!(r.state.accepted_moves().is_empty());
        assert_eq!(r.state.viterbi_counts(), [0, 1, 1, 1]);
    }

    #[test]
    fn checkpoint_reports_drift() {
        let cfg = InductionConfig {
            checkpoint_every: Some(2),
            ..Default::default()
        };
        let text = corpus(&["a b c", "a b", "b c", "a b c"]);
        let r = induce(&text, &cfg).unwrap();
        assert_eq!(r.checkpoints.len(), 2);
        for c in &r.checkpoints {
            assert!(c.exact_log_likelihood >= c.predicted_log_likelihood - 1e-9);
        }
        assert_eq!(r.state.recount(), r.state.viterbi_counts());
    }
}
