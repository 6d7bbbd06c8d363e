//! Corpus files: one sentence per line, whitespace-separated tokens.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use crate::error::Result;

pub type Sentence = Vec<String>;

/// Reads a corpus, skipping blank lines.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let toks: Sentence = line.split_whitespace().map(str::to_owned).collect();
        if !toks.is_empty() {
            out.push(toks);
        }
    }
    Ok(out)
}

pub fn write_corpus<W: Write, S: AsRef<str>>(sentences: &[Vec<S>], mut out: W) -> Result<()> {
    for s in sentences {
        let mut first = true;
        for t in s {
            if !first {
                out.write_all(b" ")?;
            }
            out.write_all(t.as_ref().as_bytes())?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Distinct tokens in sorted order.
pub fn vocabulary<S: AsRef<str>>(sentences: &[Vec<S>]) -> Vec<String> {
    let set: BTreeSet<&str> = sentences.iter().flatten().map(AsRef::as_ref).collect();
    set.into_iter().map(str::to_owned).collect()
}

pub fn token_count<S>(sentences: &[Vec<S>]) -> usize {
    sentences.iter().map(Vec::len).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_and_writes() {
        let c = read_corpus("a b\n\n  c  \n".as_bytes()).unwrap();
        assert_eq!(c, vec![vec!["a", "b"], vec!["c"]]);
        let mut buf = Vec::new();
        write_corpus(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a b\nc\n");
        assert_eq!(vocabulary(&c), vec!["a", "b", "c"]);
        assert_eq!(token_count(&c), 3);
    }
}
