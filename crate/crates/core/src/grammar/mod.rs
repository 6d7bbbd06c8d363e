//! Symbols, rules and probabilistic context-free grammars.
//!
//! Rules are either unary (`A -> B`, `A -> 'a'`) or binary over nonterminals
//! (`A -> B C`). Probabilities are stored as natural logs.

mod format;
mod symbols;

pub use format::{read_grammar, write_grammar};
pub use symbols::{SymbolId, SymbolKind, SymbolTable};

use std::collections::HashMap;
use std::f64::consts::LN_2;
use std::fmt;

use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;

/// Tolerance within which each nonterminal's rule probabilities must sum to one.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rhs {
    Unary(SymbolId),
    Binary(SymbolId, SymbolId),
}

impl Rhs {
    pub fn len(&self) -> usize {
        match self {
            Rhs::Unary(_) => 1,
            Rhs::Binary(..) => 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> impl Iterator<Item = SymbolId> {
        let (a, b) = match *self {
            Rhs::Unary(a) => (a, None),
            Rhs::Binary(a, b) => (a, Some(b)),
        };
        std::iter::once(a).chain(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub lhs: SymbolId,
    pub rhs: Rhs,
    pub log_prob: f64,
}

impl Rule {
    pub fn prob(&self) -> f64 {
        self.log_prob.exp()
    }
}

#[derive(Clone, Debug)]
pub struct Pcfg {
    symbols: SymbolTable,
    rules: Vec<Rule>,
    start: SymbolId,
    by_lhs: Vec<Vec<usize>>,
    by_rhs: HashMap<Rhs, Vec<usize>>,
}

impl Pcfg {
    /// Creates a grammar with no rules.
    pub fn new(symbols: SymbolTable, start: SymbolId) -> Result<Self> {
        if start.index() >= symbols.len() || !symbols.is_nonterminal(start) {
            return Err(Error::InvalidGrammar(
                "start symbol must be a nonterminal".into(),
            ));
        }
        let by_lhs = vec![Vec::new(); symbols.len()];
        Ok(Self {
            symbols,
            rules: Vec::new(),
            start,
            by_lhs,
            by_rhs: HashMap::new(),
        })
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn start(&self) -> SymbolId {
        self.start
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, index: usize) -> &Rule {
        &self.rules[index]
    }

    pub fn num_rules(&self) -> usize {
        self.rules.len()
    }

    /// Indices of the rules rewriting `lhs`, in rule order.
    pub fn rules_for(&self, lhs: SymbolId) -> &[usize] {
        self.by_lhs.get(lhs.index()).map_or(&[], Vec::as_slice)
    }

    /// Indices of the rules whose right-hand side is `rhs`, in rule order.
    pub fn rules_with_rhs(&self, rhs: &Rhs) -> &[usize] {
        self.by_rhs.get(rhs).map_or(&[], Vec::as_slice)
    }

    pub fn find_rule(&self, lhs: SymbolId, rhs: Rhs) -> Option<usize> {
        self.rules_with_rhs(&rhs)
            .iter()
            .copied()
            .find(|&r| self.rules[r].lhs == lhs)
    }

    pub fn add_terminal(&mut self, name: &str) -> SymbolId {
        let id = self.symbols.intern_terminal(name);
        self.grow_index();
        id
    }

    pub fn add_nonterminal(&mut self, name: &str) -> SymbolId {
        let id = self.symbols.intern_nonterminal(name);
        self.grow_index();
        id
    }

    pub fn fresh_nonterminal(&mut self, base: &str) -> SymbolId {
        let id = self.symbols.fresh_nonterminal(base);
        self.grow_index();
        id
    }

    fn grow_index(&mut self) {
        if self.by_lhs.len() < self.symbols.len() {
            self.by_lhs.resize(self.symbols.len(), Vec::new());
        }
    }

    /// Appends a rule with the given (possibly unnormalized) log weight and
    /// returns its index.
    pub fn add_rule(&mut self, lhs: SymbolId, rhs: Rhs, log_weight: f64) -> Result<usize> {
        let known = |s: SymbolId| s.index() < self.symbols.len();
        if !known(lhs) || !rhs.symbols().all(known) {
            return Err(Error::InvalidGrammar(
                "rule mentions an unknown symbol".into(),
            ));
        }
        if !self.symbols.is_nonterminal(lhs) {
            return Err(Error::InvalidGrammar(format!(
                "left-hand side `{}` is a terminal",
                self.symbols.name(lhs)
            )));
        }
        if let Rhs::Binary(b, c) = rhs {
            if !self.symbols.is_nonterminal(b) || !self.symbols.is_nonterminal(c) {
                return Err(Error::InvalidGrammar(format!(
                    "binary rule for `{}` has a terminal on its right-hand side",
                    self.symbols.name(lhs)
                )));
            }
        }
        if log_weight.is_nan() || log_weight == f64::INFINITY {
            return Err(Error::InvalidGrammar("rule weight must be finite".into()));
        }
        let index = self.rules.len();
        self.rules.push(Rule {
            lhs,
            rhs,
            log_prob: log_weight,
        });
        self.by_lhs[lhs.index()].push(index);
        self.by_rhs.entry(rhs).or_default().push(index);
        Ok(index)
    }

    /// Adds a rule with a linear weight.
    pub fn add_weighted_rule(&mut self, lhs: SymbolId, rhs: Rhs, weight: f64) -> Result<usize> {
        if weight.is_nan() || weight < 0.0 {
            return Err(Error::InvalidGrammar(format!(
                "negative rule weight {weight}"
            )));
        }
        self.add_rule(lhs, rhs, weight.ln())
    }

    pub fn set_log_prob(&mut self, rule: usize, log_prob: f64) {
        self.rules[rule].log_prob = log_prob;
    }

    /// Rescales the rules of `lhs` so that their probabilities sum to one.
    pub fn normalize(&mut self, lhs: SymbolId) -> Result<()> {
        let idx = self.rules_for(lhs).to_vec();
        let total = log_sum_exp(idx.iter().map(|&r| self.rules[r].log_prob));
        if idx.is_empty() || total == f64::NEG_INFINITY || !total.is_finite() {
            return Err(Error::Normalization(self.symbols.name(lhs).to_owned()));
        }
        for r in idx {
            self.rules[r].log_prob -= total;
        }
        Ok(())
    }

    /// Normalizes every nonterminal that has rules.
    pub fn normalize_all(&mut self) -> Result<()> {
        let lhss: Vec<SymbolId> = self.lhs_symbols().collect();
        for lhs in lhss {
            self.normalize(lhs)?;
        }
        Ok(())
    }

    /// Nonterminals with at least one rule, in id order.
    pub fn lhs_symbols(&self) -> impl Iterator<Item = SymbolId> + '_ {
        self.symbols
            .ids()
            .filter(|id| !self.rules_for(*id).is_empty())
    }

    /// Largest deviation of any nonterminal's total rule probability from one.
    pub fn max_normalization_error(&self) -> f64 {
        self.lhs_symbols()
            .map(|lhs| {
                let total: f64 = self
                    .rules_for(lhs)
                    .iter()
                    .map(|&r| self.rules[r].prob())
                    .sum();
                (total - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn check_normalized(&self) -> Result<()> {
        let err = self.max_normalization_error();
        if err > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidGrammar(format!(
                "rule probabilities deviate from one by {err:e}"
            )));
        }
        Ok(())
    }

    /// Keeps only the rules for which `keep` returns true, preserving order.
    pub fn retain_rules<F: FnMut(&Rule) -> bool>(&mut self, mut keep: F) {
        self.rules.retain(|r| keep(r));
        self.reindex();
    }

    fn reindex(&mut self) {
        self.by_lhs = vec![Vec::new(); self.symbols.len()];
        self.by_rhs.clear();
        for (i, r) in self.rules.iter().enumerate() {
            self.by_lhs[r.lhs.index()].push(i);
            self.by_rhs.entry(r.rhs).or_default().push(i);
        }
    }

    /// Number of free probabilities: rules minus one per rewritten nonterminal.
    pub fn free_parameters(&self) -> usize {
        self.lhs_symbols()
            .map(|lhs| self.rules_for(lhs).len() - 1)
            .sum()
    }

    /// Grammar description length in bits.
    pub fn description_length(&self) -> f64 {
        let size: usize = self.rules.iter().map(|r| r.rhs.len() + 1).sum();
        description_length_bits(size, self.symbols.len())
    }

    /// Natural log of the prior `2^-l(G)`.
    pub fn log_prior(&self) -> f64 {
        -self.description_length() * LN_2
    }

    pub fn rule_display(&self, index: usize) -> RuleDisplay<'_> {
        RuleDisplay {
            grammar: self,
            rule: &self.rules[index],
        }
    }

    pub fn symbol_display(&self, id: SymbolId) -> String {
        if self.symbols.is_terminal(id) {
            format::quote_terminal(self.symbols.name(id))
        } else {
            self.symbols.name(id).to_owned()
        }
    }
}

/// Description length of a grammar whose rules have `size` symbol slots in
/// total (one for each left-hand side plus one per right-hand-side symbol),
/// over `num_symbols` symbols. Each slot costs `log2(num_symbols + 1)` bits,
/// the extra code marking rule boundaries.
pub fn description_length_bits(size: usize, num_symbols: usize) -> f64 {
    if size == 0 {
        return 0.0;
    }
    size as f64 * ((num_symbols + 1) as f64).log2()
}

pub struct RuleDisplay<'a> {
    grammar: &'a Pcfg,
    rule: &'a Rule,
}

impl fmt::Display for RuleDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g = self.grammar;
        write!(f, "{} ->", g.symbol_display(self.rule.lhs))?;
        for s in self.rule.rhs.symbols() {
            write!(f, " {}", g.symbol_display(s))?;
        }
        write!(f, " {}", self.rule.prob())
    }
}
