//! Test-set entropy of grammars in bits per token.
//!
//! Each sentence is charged for its tokens plus one end-of-sentence event, so
//! grammar and n-gram entropies are measured over the same token count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grammar::Pcfg;
use crate::parser::{encode_sentence, Parser};

const CHUNK: usize = 32;

/// Scored events in a sentence of `len` tokens.
pub fn sentence_events(len: usize) -> usize {
    len + 1
}

/// `-(1/T) Σ log2 P(s)` over the test corpus, where `T` counts tokens plus one
/// end marker per sentence. Sentences with unknown tokens or no derivation
/// make the entropy infinite.
pub fn grammar_entropy<S: AsRef<str> + Sync>(g: &Pcfg, test: &[Vec<S>]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::Config("test corpus is empty".into()));
    }
    let parser = Parser::new(g);
    let parts: Vec<(f64, usize)> = test
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut ll = 0.0;
            let mut failed = 0;
            for (k, s) in chunk.iter().enumerate() {
                let lp = encode_sentence(g, s).and_then(|enc| parser.inside_logprob(&enc));
                match lp {
                    Ok(lp) => ll += lp,
                    Err(e) => {
                        log::warn!("test sentence {}: {e}", c * CHUNK + k);
                        failed += 1;
                    }
                }
            }
            (ll, failed)
        })
        .collect();
    let events: usize = test.iter().map(|s| sentence_events(s.len())).sum();
    let mut ll = 0.0;
    let mut failed = 0;
    for (l, f) in parts {
        ll += l;
        failed += f;
    }
    if failed > 0 {
        log::warn!("{failed} test sentences have zero probability");
        return Ok(f64::INFINITY);
    }
    Ok(-ll / std::f64::consts::LN_2 / events as f64)
}
