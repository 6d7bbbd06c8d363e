//! Line-oriented grammar files.
//!
//! ```text
//! # comment
//! start: S
//! S -> NP VP 1.0
//! Det -> 'the' 0.6
//! ```
//!
//! Terminals are single-quoted; `\'` and `\\` escape inside quotes. Each
//! nonterminal's probabilities are renormalized on load.

use std::io::{BufRead, Write};

use super::{Pcfg, Rhs, SymbolId, SymbolTable};
use crate::error::{Error, Result};

const LOAD_WARN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, PartialEq)]
enum Token {
    Terminal(String),
    Word(String),
}

pub(crate) fn quote_terminal(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 2);
    out.push('\'');
    for c in name.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Token>> {
    let mut tokens = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '\'' {
            chars.next();
            let mut s = String::new();
            loop {
                match chars.next() {
                    Some('\\') => match chars.next() {
                        Some(e) => s.push(e),
                        None => return Err(Error::format(lineno, "dangling escape")),
                    },
                    Some('\'') => break,
                    Some(ch) => s.push(ch),
                    None => return Err(Error::format(lineno, "unterminated terminal quote")),
                }
            }
            if s.is_empty() {
                return Err(Error::format(lineno, "empty terminal"));
            }
            tokens.push(Token::Terminal(s));
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '#' {
                    break;
                }
                if ch == '\'' {
                    return Err(Error::format(lineno, "quote inside a nonterminal name"));
                }
                s.push(ch);
                chars.next();
            }
            tokens.push(Token::Word(s));
        }
    }
    Ok(tokens)
}

struct ParsedRule {
    line: usize,
    lhs: String,
    rhs: Vec<Token>,
    prob: f64,
}

/// Reads a grammar file.
pub fn read_grammar<R: BufRead>(reader: R) -> Result<Pcfg> {
    let mut start: Option<(String, usize)> = None;
    let mut parsed = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("start:") {
            if start.is_some() {
                return Err(Error::format(lineno, "duplicate start declaration"));
            }
            match tokenize(rest, lineno)?.as_slice() {
                [Token::Word(s)] => start = Some((s.clone(), lineno)),
                _ => return Err(Error::format(lineno, "expected `start: <nonterminal>`")),
            }
            continue;
        }
        let mut tokens = tokenize(&line, lineno)?;
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 4 || tokens.len() > 5 {
            return Err(Error::format(
                lineno,
                "expected `LHS -> RHS1 [RHS2] <prob>`",
            ));
        }
        let prob = match tokens.pop() {
            Some(Token::Word(p)) => p
                .parse::<f64>()
                .ok()
                .filter(|p| p.is_finite() && *p >= 0.0)
                .ok_or_else(|| Error::format(lineno, format!("invalid probability `{p}`")))?,
            _ => return Err(Error::format(lineno, "missing probability")),
        };
        let mut it = tokens.into_iter();
        let lhs = match it.next() {
            Some(Token::Word(w)) if w != "->" => w,
            _ => {
                return Err(Error::format(
                    lineno,
                    "left-hand side must be a nonterminal",
                ))
            }
        };
        if it.next() != Some(Token::Word("->".into())) {
            return Err(Error::format(lineno, "expected `->`"));
        }
        let rhs: Vec<Token> = it.collect();
        if rhs.iter().any(|t| *t == Token::Word("->".into())) {
            return Err(Error::format(lineno, "unexpected `->`"));
        }
        parsed.push(ParsedRule {
            line: lineno,
            lhs,
            rhs,
            prob,
        });
    }

    let (start, _) = start.ok_or_else(|| Error::format(0, "missing `start:` declaration"))?;
    let mut symbols = SymbolTable::new();
    let start_id = symbols.intern_nonterminal(&start);
    let mut g = Pcfg::new(symbols, start_id)?;
    for rule in parsed {
        let lhs = g.add_nonterminal(&rule.lhs);
        let mut ids: Vec<SymbolId> = Vec::with_capacity(2);
        for t in &rule.rhs {
            ids.push(match t {
                Token::Terminal(s) => g.add_terminal(s),
                Token::Word(s) => g.add_nonterminal(s),
            });
        }
        let rhs = match ids.as_slice() {
            [a] => Rhs::Unary(*a),
            [a, b] => Rhs::Binary(*a, *b),
            _ => unreachable!(),
        };
        g.add_weighted_rule(lhs, rhs, rule.prob)
            .map_err(|e| Error::format(rule.line, e.to_string()))?;
    }

    let lhss: Vec<SymbolId> = g.lhs_symbols().collect();
    for lhs in lhss {
        let total: f64 = g.rules_for(lhs).iter().map(|&r| g.rule(r).prob()).sum();
        if (total - 1.0).abs() > LOAD_WARN_TOLERANCE {
            log::warn!(
                "probabilities of `{}` sum to {total}; renormalizing",
                g.symbols().name(lhs)
            );
        }
        g.normalize(lhs)?;
    }
    if g.rules_for(g.start()).is_empty() {
        return Err(Error::InvalidGrammar(format!(
            "start symbol `{start}` has no rules"
        )));
    }
    Ok(g)
}

/// Writes `g` in the format read by [`read_grammar`]. Probabilities are
/// printed with enough digits to round-trip.
pub fn write_grammar<W: Write>(g: &Pcfg, mut out: W) -> Result<()> {
    writeln!(out, "start: {}", g.symbols().name(g.start()))?;
    for i in 0..g.num_rules() {
        writeln!(out, "{}", g.rule_display(i))?;
    }
    out.flush()?;
    Ok(())
}
