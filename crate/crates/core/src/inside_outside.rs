//! Inside-Outside (EM) training of PCFGs.
//!
//! Covers the Lari-Young baseline grammar over `n` nonterminals, the
//! post-pass grammar that replaces the flat sentence rules of an induced
//! grammar, EM re-estimation, and uniform-mixture smoothing with a single
//! held-out weight λ.
//!
//! The E-step runs sentences in fixed-size chunks on the rayon pool and sums
//! the chunk counts in chunk order, so results do not depend on the number of
//! threads.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grammar::{Pcfg, Rhs, SymbolId, SymbolTable};
use crate::parser::{merge_scaled_at, rescale, ClosureScratch, InsideChart, Parser};
use crate::sampler::seeded_rng;

pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
const CHUNK: usize = 32;
const LAMBDA_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmConfig {
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            rel_tol: DEFAULT_REL_TOL,
            seed: 0,
            lambda: 0.0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rel_tol.is_nan() || self.rel_tol <= 0.0 {
            return Err(Error::Config("rel_tol must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One E-step: corpus log-likelihood of the grammar entering the iteration,
/// and the largest probability change made by the preceding M-step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmIteration {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub max_param_change: f64,
}

#[derive(Clone, Debug)]
pub struct EmResult {
    pub grammar: Pcfg,
    pub trace: Vec<EmIteration>,
    pub converged: bool,
}

impl EmResult {
    pub fn log_likelihoods(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.log_likelihood).collect()
    }
}

fn lari_young_name(i: usize) -> String {
    format!("X_{i}")
}

fn random_weight<R: Rng>(rng: &mut R) -> f64 {
    // (0, 1]: never exactly zero
    1.0 - rng.gen::<f64>()
}

/// All CNF rules over `X_1..X_n` and `terminals`, randomly initialized.
pub fn lari_young_grammar<S: AsRef<str>>(n: usize, terminals: &[S], seed: u64) -> Result<Pcfg> {
    if n == 0 {
        return Err(Error::Config("need at least one nonterminal".into()));
    }
    if terminals.is_empty() {
        return Err(Error::Config("need at least one terminal".into()));
    }
    let mut table = SymbolTable::new();
    let xs: Vec<SymbolId> = (1..=n)
        .map(|i| table.intern_nonterminal(&lari_young_name(i)))
        .collect();
    let ts: Vec<SymbolId> = terminals
        .iter()
        .map(|t| table.intern_terminal(t.as_ref()))
        .collect();
    let mut g = Pcfg::new(table, xs[0])?;
    let mut rng = seeded_rng(seed);
    for &a in &xs {
        for &b in &xs {
            for &c in &xs {
                g.add_weighted_rule(a, Rhs::Binary(b, c), random_weight(&mut rng))?;
            }
        }
        for &t in &ts {
            g.add_weighted_rule(a, Rhs::Unary(t), random_weight(&mut rng))?;
        }
    }
    g.normalize_all()?;
    Ok(g)
}

/// Lari-Young grammar and the symbols whose expansions are smoothed.
pub fn lari_young_with_targets<S: AsRef<str>>(
    n: usize,
    terminals: &[S],
    seed: u64,
) -> Result<(Pcfg, Vec<SymbolId>)> {
    let g = lari_young_grammar(n, terminals, seed)?;
    let targets = g.symbols().nonterminals().collect();
    Ok((g, targets))
}

/// Replaces the flat `S`/`X` rules of an induced grammar with all rules
/// `X_i -> X_j X_k` and `X_i -> A` over the remaining nonterminals `A`.
pub fn postpass_grammar(n: usize, old: &Pcfg, seed: u64) -> Result<Pcfg> {
    postpass_with_targets(n, old, seed).map(|(g, _)| g)
}

/// Post-pass grammar and its new symbols `X_1..X_n`.
pub fn postpass_with_targets(n: usize, old: &Pcfg, seed: u64) -> Result<(Pcfg, Vec<SymbolId>)> {
    use crate::induction::{SENTENCE_SYMBOL, SEQUENCE_SYMBOL};
    if n == 0 {
        return Err(Error::Config("need at least one nonterminal".into()));
    }
    let os = old.symbols();
    let s_old = os.nonterminal(SENTENCE_SYMBOL);
    let x_old = os.nonterminal(SEQUENCE_SYMBOL);
    let (Some(s_old), Some(x_old)) = (s_old, x_old) else {
        return Err(Error::Config(format!(
            "post-pass needs an induced grammar with `{SENTENCE_SYMBOL}` and `{SEQUENCE_SYMBOL}`"
        )));
    };
    let kept: Vec<SymbolId> = os
        .nonterminals()
        .filter(|&a| a != s_old && a != x_old)
        .collect();
    if kept.is_empty() {
        return Err(Error::Config(
            "induced grammar has no symbols besides S and X".into(),
        ));
    }

    let mut table = SymbolTable::new();
    let mut map = vec![None; os.len()];
    for t in os.terminals() {
        map[t.index()] = Some(table.intern_terminal(os.name(t)));
    }
    for &a in &kept {
        map[a.index()] = Some(table.intern_nonterminal(os.name(a)));
    }
    let xs: Vec<SymbolId> = (1..=n)
        .map(|i| table.fresh_nonterminal(&lari_young_name(i)))
        .collect();
    let new_of = |s: SymbolId| map[s.index()];
    let mut g = Pcfg::new(table, xs[0])?;
    let mut rng = seeded_rng(seed);
    for &a in &xs {
        for &b in &xs {
            for &c in &xs {
                g.add_weighted_rule(a, Rhs::Binary(b, c), random_weight(&mut rng))?;
            }
        }
        for &k in &kept {
            g.add_weighted_rule(a, Rhs::Unary(new_of(k).unwrap()), random_weight(&mut rng))?;
        }
        g.normalize(a)?;
    }
    for r in old.rules() {
        if r.lhs == s_old || r.lhs == x_old {
            continue;
        }
        let rhs = match r.rhs {
            Rhs::Unary(b) => new_of(b).map(Rhs::Unary),
            Rhs::Binary(b, c) => new_of(b).zip(new_of(c)).map(|(b, c)| Rhs::Binary(b, c)),
        };
        let Some(rhs) = rhs else {
            return Err(Error::InvalidGrammar(
                "an induced rule refers to the sentence-level symbols".into(),
            ));
        };
        g.add_rule(new_of(r.lhs).unwrap(), rhs, r.log_prob)?;
    }
    Ok((g, xs))
}

/// Per-sentence inside-outside pass: adds posterior rule counts into
/// `counts` and returns the sentence log-probability.
fn sentence_counts(
    p: &Parser<'_>,
    sentence: &[SymbolId],
    counts: &mut [f64],
    scratch: &mut ClosureScratch,
) -> Result<f64> {
    let inside = p.inside_chart_with(sentence, true)?;
    let start = p.grammar().start();
    let log_z = inside.sentence_logprob(start)?;
    let n = sentence.len();
    let ns = p.num_symbols;
    let mut outside = InsideChart::new(n, ns);
    {
        let (v, off) = outside.cell_mut(0, n);
        v[start.index()] = 1.0;
        *off = 0.0;
    }
    let mut avals = vec![0.0; ns];
    let mut lbuf = vec![0.0; p.lefts.len()];
    let mut rbuf = vec![0.0; p.rights.len()];
    let mut weights = vec![0.0; p.pairs.len()];

    for width in (1..=n).rev() {
        for i in 0..=n - width {
            let j = i + width;
            if outside.off(i, j) == f64::NEG_INFINITY || inside.off(i, j) == f64::NEG_INFINITY {
                continue;
            }
            {
                let (v, off) = outside.cell_mut(i, j);
                rescale(v, off);
                p.chain_closure_outside(v, scratch);
                rescale(v, off);
            }
            let aoff = outside.off(i, j);
            avals.copy_from_slice(outside.cell(i, j));

            let bvals = inside.cell(i, j);
            let f = (aoff + inside.off(i, j) - log_z).exp();
            let unary = if width == 1 { &p.lexical[..] } else { &[][..] };
            for u in p.chain.iter().chain(unary) {
                let a = avals[u.lhs as usize];
                let b = bvals[u.child as usize];
                if a != 0.0 && b != 0.0 {
                    counts[u.rule as usize] += f * a * u.prob * b;
                }
            }

            if width < 2 {
                continue;
            }
            let (tsum, toff) = inside.pair_cell(i, j);
            if toff == f64::NEG_INFINITY {
                continue;
            }
            weights.iter_mut().for_each(|v| *v = 0.0);
            let fc = (aoff + toff - log_z).exp();
            for e in &p.pair_rules {
                let ap = avals[e.lhs as usize] * e.prob;
                if ap != 0.0 {
                    weights[e.pair as usize] += ap;
                    counts[e.rule as usize] += fc * ap * tsum[e.pair as usize];
                }
            }
            for k in i + 1..j {
                let lo = inside.off(i, k);
                let ro = inside.off(k, j);
                if lo == f64::NEG_INFINITY || ro == f64::NEG_INFINITY {
                    continue;
                }
                let left = inside.cell(i, k);
                let right = inside.cell(k, j);
                lbuf.iter_mut().for_each(|v| *v = 0.0);
                rbuf.iter_mut().for_each(|v| *v = 0.0);
                let mut any = false;
                for &b in inside.lefts(i, k) {
                    let lv = left[b as usize];
                    let range =
                        p.left_start[b as usize] as usize..p.left_start[b as usize + 1] as usize;
                    for &(q, c) in &p.left_pairs[range] {
                        let w = weights[q as usize];
                        if w == 0.0 {
                            continue;
                        }
                        let rv = right[c as usize];
                        if rv == 0.0 {
                            continue;
                        }
                        let (sl, sr) = p.pair_slots[q as usize];
                        lbuf[sl as usize] += w * rv;
                        rbuf[sr as usize] += w * lv;
                        any = true;
                    }
                }
                if any {
                    let (v, off) = outside.cell_mut(i, k);
                    merge_scaled_at(v, off, &p.lefts, &lbuf, aoff + ro);
                    let (v, off) = outside.cell_mut(k, j);
                    merge_scaled_at(v, off, &p.rights, &rbuf, aoff + lo);
                }
            }
        }
    }
    Ok(log_z)
}

/// Posterior expected rule counts summed over the corpus, with the corpus
/// log-likelihood.
pub fn expected_counts(g: &Pcfg, corpus: &[Vec<SymbolId>]) -> Result<(Vec<f64>, f64)> {
    let parser = Parser::new(g);
    let nr = g.num_rules();
    let parts: Vec<Result<(Vec<f64>, f64)>> = corpus
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut counts = vec![0.0; nr];
            let mut ll = 0.0;
            let mut scratch = ClosureScratch::new(parser.num_symbols);
            for (k, s) in chunk.iter().enumerate() {
                ll += sentence_counts(&parser, s, &mut counts, &mut scratch)
                    .map_err(|e| e.with_sentence(c * CHUNK + k))?;
            }
            Ok((counts, ll))
        })
        .collect();
    let mut total = vec![0.0; nr];
    let mut ll = 0.0;
    for part in parts {
        let (counts, l) = part?;
        for (t, c) in total.iter_mut().zip(&counts) {
            *t += c;
        }
        ll += l;
    }
    Ok((total, ll))
}

/// Corpus log-likelihood, treating unparseable sentences as errors.
pub fn corpus_log_likelihood(g: &Pcfg, corpus: &[Vec<SymbolId>]) -> Result<f64> {
    let parser = Parser::new(g);
    let parts: Vec<Result<f64>> = corpus
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut ll = 0.0;
            for (k, s) in chunk.iter().enumerate() {
                ll += parser
                    .inside_logprob(s)
                    .map_err(|e| e.with_sentence(c * CHUNK + k))?;
            }
            Ok(ll)
        })
        .collect();
    parts.into_iter().try_fold(0.0, |acc, p| Ok(acc + p?))
}

/// Re-estimates rule probabilities from expected counts. Nonterminals with
/// no expected uses keep their current distribution. Returns the largest
/// probability change.
fn m_step(g: &mut Pcfg, counts: &[f64]) -> f64 {
    let mut max_change = 0.0f64;
    let lhs: Vec<SymbolId> = g.lhs_symbols().collect();
    for a in lhs {
        let rules = g.rules_for(a).to_vec();
        let total: f64 = rules.iter().map(|&r| counts[r]).sum();
        if total.is_nan() || total <= 0.0 {
            continue;
        }
        for r in rules {
            let p = counts[r] / total;
            max_change = max_change.max((p - g.rule(r).prob()).abs());
            g.set_log_prob(r, p.ln());
        }
    }
    max_change
}

/// Runs EM until the relative log-likelihood gain drops below `rel_tol` or
/// `max_iterations` M-steps have been made. The returned grammar is the one
/// scored by the last trace entry.
pub fn em_train(mut g: Pcfg, corpus: &[Vec<SymbolId>], cfg: &EmConfig) -> Result<EmResult> {
    cfg.validate()?;
    let mut trace: Vec<EmIteration> = Vec::new();
    let mut change = 0.0;
    let mut converged = false;
    for it in 0..=cfg.max_iterations {
        let (counts, ll) = expected_counts(&g, corpus)?;
        log::debug!("EM iteration {it}: log-likelihood {ll}");
        let prev = trace.last().map(|t| t.log_likelihood);
        trace.push(EmIteration {
            iteration: it,
            log_likelihood: ll,
            max_param_change: change,
        });
        if let Some(prev) = prev {
            if ll - prev <= cfg.rel_tol * prev.abs() {
                converged = true;
                break;
            }
        }
        if it == cfg.max_iterations {
            break;
        }
        change = m_step(&mut g, &counts);
    }
    Ok(EmResult {
        grammar: g,
        trace,
        converged,
    })
}

/// `(1-λ)·p + λ/d`.
pub fn smoothed_prob(p: f64, lambda: f64, expansions: usize) -> f64 {
    (1.0 - lambda) * p + lambda / expansions as f64
}

/// Mixes each target symbol's rule distribution with the uniform one over
/// its expansions; other symbols are untouched.
pub fn smooth(g: &Pcfg, lambda: f64, targets: &[SymbolId]) -> Pcfg {
    let mut out = g.clone();
    for &a in targets {
        let rules = g.rules_for(a);
        let d = rules.len();
        for &r in rules {
            let p = smoothed_prob(g.rule(r).prob(), lambda, d);
            out.set_log_prob(r, p.ln());
        }
    }
    out
}

fn heldout_score(g: &Pcfg, lambda: f64, targets: &[SymbolId], heldout: &[Vec<SymbolId>]) -> f64 {
    corpus_log_likelihood(&smooth(g, lambda, targets), heldout).unwrap_or(f64::NEG_INFINITY)
}

/// The λ maximizing held-out log-likelihood of `smooth(g, λ, targets)`,
/// by golden-section search on `[0, 1]` checked against both endpoints.
pub fn tune_lambda(
    g: &Pcfg,
    targets: &[SymbolId],
    heldout: &[Vec<SymbolId>],
) -> Result<(f64, f64)> {
    if heldout.is_empty() {
        return Err(Error::Config("held-out corpus is empty".into()));
    }
    let f = |l: f64| heldout_score(g, l, targets, heldout);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > LAMBDA_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = (a + b) / 2.0;
    let mut best = (mid, f(mid));
    for cand in [0.0, 1.0] {
        let v = f(cand);
        if v > best.1 {
            best = (cand, v);
        }
    }
    if best.1 == f64::NEG_INFINITY {
        return Err(Error::NoParse { sentence: None });
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::read_grammar;
    use crate::parser::encode_sentence;

    fn encode(g: &Pcfg, lines: &[&str]) -> Vec<Vec<SymbolId>> {
        lines
            .iter()
            .map(|l| encode_sentence(g, &l.split_whitespace().collect::<Vec<_>>()).unwrap())
            .collect()
    }

    #[test]
    fn lari_young_rule_counts() {
        let g = lari_young_grammar(3, &["a", "b", "c", "d"], 1).unwrap();
        assert_eq!(g.num_rules(), 39);
        assert!(g.max_normalization_error() < 1e-12);
        assert_eq!(g.symbols().name(g.start()), "X_1");
        let g = lari_young_grammar(1, &["a"], 1).unwrap();
        assert_eq!(g.num_rules(), 2);
        assert!(lari_young_grammar(0, &["a"], 1).is_err());
        assert!(lari_young_grammar::<&str>(2, &[], 1).is_err());
    }

    #[test]
    fn lari_young_is_seed_deterministic() {
        let a = lari_young_grammar(2, &["a", "b"], 9).unwrap();
        let b = lari_young_grammar(2, &["a", "b"], 9).unwrap();
        let c = lari_young_grammar(2, &["a", "b"], 10).unwrap();
        assert_eq!(a.rules(), b.rules());
        assert_ne!(a.rules(), c.rules());
    }

    #[test]
    fn smoothing_formula() {
        let p = smoothed_prob(0.5, 0.1, 39);
        assert!((p - (0.45 + 0.1 / 39.0)).abs() < 1e-15);
        assert!((p - 0.45256).abs() < 1e-5);
        assert_eq!(smoothed_prob(0.3, 0.0, 7), 0.3);
        assert!((smoothed_prob(0.3, 1.0, 4) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smoothed_grammar_stays_normalized() {
        let (g, targets) = lari_young_with_targets(3, &["a", "b"], 4).unwrap();
        for lambda in [0.0, 0.3, 1.0] {
            let s = smooth(&g, lambda, &targets);
            assert!(s.max_normalization_error() < 1e-9);
        }
        let uniform = smooth(&g, 1.0, &targets);
        for r in uniform.rules() {
            assert!((r.prob() - 1.0 / 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic_grammar_is_a_fixpoint() {
        let g = read_grammar("start: S\nS -> A B 1\nA -> 'a' 1\nB -> 'b' 1\n".as_bytes()).unwrap();
        let corpus = encode(&g, &["a b", "a b"]);
        let r = em_train(g.clone(), &corpus, &EmConfig::default()).unwrap();
        assert_eq!(r.grammar.rules(), g.rules());
        assert!(r.converged);
        assert!(r.log_likelihoods().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn one_step_counts_by_hand() {
        // "a a" has the single derivation S -> S S, S -> 'a' twice
        let g = read_grammar("start: S\nS -> S S 0.4\nS -> 'a' 0.6\n".as_bytes()).unwrap();
        let corpus = encode(&g, &["a", "a a"]);
        let (counts, ll) = expected_counts(&g, &corpus).unwrap();
        assert!((counts[0] - 1.0).abs() < 1e-12);
        assert!((counts[1] - 3.0).abs() < 1e-12);
        assert!((ll - (0.6f64.ln() + 0.144f64.ln())).abs() < 1e-12);
        let r = em_train(
            g,
            &corpus,
            &EmConfig {
                max_iterations: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((r.grammar.rule(0).prob() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn three_token_counts_sum_bracketings() {
        let g = read_grammar("start: S\nS -> S S 0.4\nS -> 'a' 0.6\n".as_bytes()).unwrap();
        let (counts, _) = expected_counts(&g, &encode(&g, &["a a a"])).unwrap();
        assert!((counts[0] - 2.0).abs() < 1e-12);
        assert!((counts[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn unparseable_sentence_is_identified() {
        let g = read_grammar("start: S\nS -> A A 1\nA -> 'a' 1\n".as_bytes()).unwrap();
        let corpus = encode(&g, &["a a", "a"]);
        let err = em_train(g, &corpus, &EmConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoParse { sentence: Some(1) }));
    }

    #[test]
    fn invalid_config() {
        let cfg = EmConfig {
            rel_tol: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = EmConfig {
            lambda: 1.5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn em_is_monotone_on_a_small_corpus() {
        let (g, _) = lari_young_with_targets(3, &["a", "b"], 2).unwrap();
        let corpus = encode(&g, &["a b", "a a b b", "a b a b", "a a a b b b", "b a"]);
        let cfg = EmConfig {
            max_iterations: 40,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let r = em_train(g, &corpus, &cfg).unwrap();
        for w in r.log_likelihoods().windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs());
        }
        assert!(r.grammar.max_normalization_error() < 1e-12);
    }

    #[test]
    fn tuned_lambda_beats_both_endpoints() {
        let (g, targets) = lari_young_with_targets(2, &["a", "b"], 5).unwrap();
        let train = encode(&g, &["a b", "a a b", "a b b", "a b"]);
        let trained = em_train(g, &train, &EmConfig::default()).unwrap().grammar;
        let held = encode(&trained, &["b a", "a b", "b b a"]);
        let (lambda, ll) = tune_lambda(&trained, &targets, &held).unwrap();
        assert!((0.0..=1.0).contains(&lambda));
        assert!(ll >= heldout_score(&trained, 0.0, &targets, &held));
        assert!(ll >= heldout_score(&trained, 1.0, &targets, &held));
    }
}
