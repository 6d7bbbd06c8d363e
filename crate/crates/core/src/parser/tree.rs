use std::collections::BTreeMap;
use std::fmt::Write;

use crate::grammar::{Pcfg, SymbolId};

/// A derivation. Leaves are preterminal nodes whose rule rewrites to a terminal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseTree {
    pub symbol: SymbolId,
    pub rule: usize,
    pub children: Vec<ParseTree>,
    pub span: (usize, usize),
}

impl ParseTree {
    pub fn leaf(symbol: SymbolId, rule: usize, position: usize) -> Self {
        Self {
            symbol,
            rule,
            children: Vec::new(),
            span: (position, position + 1),
        }
    }

    pub fn node(symbol: SymbolId, rule: usize, children: Vec<ParseTree>) -> Self {
        let start = children.first().map_or(0, |c| c.span.0);
        let end = children.last().map_or(0, |c| c.span.1);
        Self {
            symbol,
            rule,
            children,
            span: (start, end),
        }
    }

    /// Sum of the log-probabilities of every applied rule.
    pub fn log_prob(&self, g: &Pcfg) -> f64 {
        let mut total = 0.0;
        self.visit(&mut |t| total += g.rule(t.rule).log_prob);
        total
    }

    /// Multiset of the rules applied in this tree.
    pub fn rule_counts(&self) -> BTreeMap<usize, u64> {
        let mut counts = BTreeMap::new();
        self.visit(&mut |t| *counts.entry(t.rule).or_insert(0) += 1);
        counts
    }

    /// Adds this tree's rule counts into a dense per-rule vector.
    pub fn add_counts(&self, counts: &mut [u64]) {
        self.visit(&mut |t| counts[t.rule] += 1);
    }

    pub fn subtract_counts(&self, counts: &mut [u64]) {
        self.visit(&mut |t| counts[t.rule] -= 1);
    }

    pub fn visit<F: FnMut(&ParseTree)>(&self, f: &mut F) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    pub fn num_nodes(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(ParseTree::num_nodes)
            .sum::<usize>()
    }

    /// Terminal yield of the tree.
    pub fn yield_symbols(&self, g: &Pcfg) -> Vec<SymbolId> {
        let mut out = Vec::new();
        self.visit(&mut |t| {
            if t.children.is_empty() {
                out.extend(g.rule(t.rule).rhs.symbols());
            }
        });
        out
    }

    /// Bracketed notation, e.g. `(S (X (A_Bob Bob)))`.
    pub fn to_bracketed(&self, g: &Pcfg) -> String {
        let mut out = String::new();
        self.write_bracketed(g, &mut out);
        out
    }

    fn write_bracketed(&self, g: &Pcfg, out: &mut String) {
        let names = g.symbols();
        write!(out, "({}", names.name(self.symbol)).unwrap();
        if self.children.is_empty() {
            for s in g.rule(self.rule).rhs.symbols() {
                write!(out, " {}", names.name(s)).unwrap();
            }
        } else {
            for c in &self.children {
                out.push(' ');
                c.write_bracketed(g, out);
            }
        }
        out.push(')');
    }
}

/// Exact multiset of rule applications in `tree`.
pub fn tree_rule_counts(tree: &ParseTree) -> BTreeMap<usize, u64> {
    tree.rule_counts()
}
