//! Top-down sampling of sentences from a PCFG.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), whose output stream is
//! fixed by the seed on every platform. Corpora are generated from a single
//! sequential stream.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grammar::{Pcfg, SymbolId};

pub const DEFAULT_MAX_LEN: usize = 30;
/// Consecutive over-length samples tolerated before giving up.
pub const MAX_REJECTIONS: usize = 1000;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

enum Attempt {
    Done(Vec<SymbolId>),
    TooLong,
}

fn choose_rule<R: Rng>(g: &Pcfg, lhs: SymbolId, rng: &mut R) -> Result<usize> {
    let rules = g.rules_for(lhs);
    let Some(&last) = rules.last() else {
        return Err(Error::Sampling(format!(
            "nonterminal `{}` has no rules",
            g.symbols().name(lhs)
        )));
    };
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for &r in rules {
        cum += g.rule(r).prob();
        if u < cum {
            return Ok(r);
        }
    }
    Ok(last)
}

fn attempt<R: Rng>(g: &Pcfg, rng: &mut R, max_len: usize) -> Result<Attempt> {
    let mut out = Vec::new();
    let mut stack = vec![g.start()];
    // guards against unary cycles that never emit
    let mut steps_left = 1000 * (max_len + 1);
    while let Some(sym) = stack.pop() {
        if g.symbols().is_terminal(sym) {
            out.push(sym);
            continue;
        }
        if steps_left == 0 {
            return Ok(Attempt::TooLong);
        }
        steps_left -= 1;
        let r = choose_rule(g, sym, rng)?;
        let rhs: Vec<SymbolId> = g.rule(r).rhs.symbols().collect();
        stack.extend(rhs.into_iter().rev());
        // every pending symbol yields at least one terminal
        if out.len() + stack.len() > max_len {
            return Ok(Attempt::TooLong);
        }
    }
    Ok(Attempt::Done(out))
}

/// Samples one sentence by leftmost expansion, resampling any derivation
/// whose yield would exceed `max_len`.
pub fn sample_sentence<R: Rng>(g: &Pcfg, rng: &mut R, max_len: usize) -> Result<Vec<SymbolId>> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    for _ in 0..MAX_REJECTIONS {
        if let Attempt::Done(s) = attempt(g, rng, max_len)? {
            return Ok(s);
        }
    }
    Err(Error::Sampling(format!(
        "{MAX_REJECTIONS} consecutive samples exceeded {max_len} tokens"
    )))
}

pub fn sample_corpus<R: Rng>(
    g: &Pcfg,
    rng: &mut R,
    n_sentences: usize,
    max_len: usize,
) -> Result<Vec<Vec<SymbolId>>> {
    (0..n_sentences)
        .map(|_| sample_sentence(g, rng, max_len))
        .collect()
}

/// Terminal names of a sampled sentence.
pub fn sentence_tokens(g: &Pcfg, s: &[SymbolId]) -> Vec<String> {
    s.iter().map(|&t| g.symbols().name(t).to_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::read_grammar;

    #[test]
    fn deterministic_grammar_always_yields_the_same() {
        let g = read_grammar("start: S\nS -> 'a' 1.0\n".as_bytes()).unwrap();
        let mut rng = seeded_rng(1);
        for _ in 0..10 {
            let s = sample_sentence(&g, &mut rng, 5).unwrap();
            assert_eq!(sentence_tokens(&g, &s), vec!["a"]);
        }
    }

    #[test]
    fn empty_corpus_and_seed_determinism() {
        let g = read_grammar("start: S\nS -> S S 0.3\nS -> 'a' 0.4\nS -> 'b' 0.3\n".as_bytes())
            .unwrap();
        assert!(sample_corpus(&g, &mut seeded_rng(3), 0, 10)
            .unwrap()
            .is_empty());
        let a = sample_corpus(&g, &mut seeded_rng(3), 50, 10).unwrap();
        let b = sample_corpus(&g, &mut seeded_rng(3), 50, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|s| !s.is_empty() && s.len() <= 10));
    }

    #[test]
    fn incompatible_length_bound_fails() {
        // every sentence has exactly three tokens
        let g = read_grammar("start: S\nS -> A B 1\nB -> A A 1\nA -> 'a' 1\n".as_bytes()).unwrap();
        let err = sample_sentence(&g, &mut seeded_rng(0), 2).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }
}
