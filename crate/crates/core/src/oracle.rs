//! Brute-force reference computations for tests.
//!
//! Everything here enumerates derivations explicitly and shares no code with
//! the chart parsers or the Inside-Outside engine.

use std::collections::BTreeMap;

use rand::Rng;

use crate::grammar::{Pcfg, Rhs, SymbolId, SymbolTable};

/// One complete derivation of a substring.
#[derive(Clone, Debug)]
pub struct Derivation {
    pub log_prob: f64,
    pub prob: f64,
    pub rules: BTreeMap<usize, u64>,
}

/// All derivations of `tokens` from `sym`. Unary chains are followed to a
/// depth of `max_unary` per span, which is exhaustive for acyclic unary rules.
pub fn enumerate(
    g: &Pcfg,
    sym: SymbolId,
    tokens: &[SymbolId],
    max_unary: usize,
) -> Vec<Derivation> {
    let mut out = Vec::new();
    for &r in g.rules_for(sym) {
        let rule = g.rule(r);
        match rule.rhs {
            Rhs::Unary(c) if g.symbols().is_terminal(c) => {
                if tokens.len() == 1 && tokens[0] == c {
                    out.push(Derivation {
                        log_prob: rule.log_prob,
                        prob: rule.log_prob.exp(),
                        rules: BTreeMap::from([(r, 1)]),
                    });
                }
            }
            Rhs::Unary(c) => {
                if max_unary == 0 {
                    continue;
                }
                for d in enumerate(g, c, tokens, max_unary - 1) {
                    out.push(extend(d, r, rule.log_prob));
                }
            }
            Rhs::Binary(b, c) => {
                for k in 1..tokens.len() {
                    let left = enumerate(g, b, &tokens[..k], g.symbols().num_nonterminals());
                    if left.is_empty() {
                        continue;
                    }
                    let right = enumerate(g, c, &tokens[k..], g.symbols().num_nonterminals());
                    for l in &left {
                        for rt in &right {
                            let mut rules = l.rules.clone();
                            for (&k2, &v) in &rt.rules {
                                *rules.entry(k2).or_insert(0) += v;
                            }
                            *rules.entry(r).or_insert(0) += 1;
                            out.push(Derivation {
                                log_prob: rule.log_prob + l.log_prob + rt.log_prob,
                                prob: rule.log_prob.exp() * l.prob * rt.prob,
                                rules,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

fn extend(mut d: Derivation, rule: usize, log_prob: f64) -> Derivation {
    d.log_prob += log_prob;
    d.prob *= log_prob.exp();
    *d.rules.entry(rule).or_insert(0) += 1;
    d
}

/// All derivations of a whole sentence from the start symbol.
pub fn sentence_derivations(g: &Pcfg, tokens: &[SymbolId]) -> Vec<Derivation> {
    enumerate(g, g.start(), tokens, g.symbols().num_nonterminals())
}

/// Highest derivation log-probability, if any.
pub fn max_log_prob(derivs: &[Derivation]) -> Option<f64> {
    derivs.iter().map(|d| d.log_prob).reduce(f64::max)
}

pub fn total_prob(derivs: &[Derivation]) -> f64 {
    derivs.iter().map(|d| d.prob).sum()
}

/// Posterior expected rule counts `E[c(r) | sentence]`.
pub fn expected_counts(g: &Pcfg, derivs: &[Derivation]) -> Vec<f64> {
    let z = total_prob(derivs);
    let mut out = vec![0.0; g.num_rules()];
    for d in derivs {
        for (&r, &c) in &d.rules {
            out[r] += d.prob / z * c as f64;
        }
    }
    out
}

/// Every sentence over `terminals` with length in `1..=max_len`.
pub fn all_sentences(terminals: &[SymbolId], max_len: usize) -> Vec<Vec<SymbolId>> {
    let mut out = Vec::new();
    let mut frontier: Vec<Vec<SymbolId>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &t in terminals {
                let mut s2 = s.clone();
                s2.push(t);
                next.push(s2);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// A random normalized grammar with at most `max_nt` nonterminals,
/// `max_t` terminals and `max_rules` rules. Unary rules between
/// nonterminals only point to higher-numbered symbols, so the unary
/// structure is acyclic and derivations are finitely enumerable.
pub fn random_grammar<R: Rng>(rng: &mut R, max_nt: usize, max_t: usize, max_rules: usize) -> Pcfg {
    let n_nt = rng.gen_range(1..=max_nt);
    let n_t = rng.gen_range(1..=max_t);
    let mut table = SymbolTable::new();
    let nts: Vec<SymbolId> = (0..n_nt)
        .map(|i| table.intern_nonterminal(&format!("N{i}")))
        .collect();
    let ts: Vec<SymbolId> = (0..n_t)
        .map(|i| table.intern_terminal(&format!("t{i}")))
        .collect();
    let mut g = Pcfg::new(table, nts[0]).unwrap();
    let n_rules = rng.gen_range(1..=max_rules);
    let mut added = 0;
    // lexical rule for the start symbol keeps most grammars productive
    if rng.gen_bool(0.8) {
        let t = ts[rng.gen_range(0..n_t)];
        g.add_weighted_rule(nts[0], Rhs::Unary(t), rng.gen_range(0.05..1.0))
            .unwrap();
        added += 1;
    }
    while added < n_rules {
        let lhs = rng.gen_range(0..n_nt);
        let rhs = match rng.gen_range(0..3) {
            0 => Rhs::Unary(ts[rng.gen_range(0..n_t)]),
            1 => Rhs::Binary(nts[rng.gen_range(0..n_nt)], nts[rng.gen_range(0..n_nt)]),
            _ => {
                if lhs + 1 >= n_nt {
                    continue;
                }
                Rhs::Unary(nts[rng.gen_range(lhs + 1..n_nt)])
            }
        };
        if g.find_rule(nts[lhs], rhs).is_some() {
            added += 1;
            continue;
        }
        g.add_weighted_rule(nts[lhs], rhs, rng.gen_range(0.05..1.0))
            .unwrap();
        added += 1;
    }
    g.normalize_all().unwrap();
    g
}
