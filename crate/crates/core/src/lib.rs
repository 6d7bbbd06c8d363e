//! Probabilistic context-free grammar induction by greedy Bayesian search,
//! Inside-Outside training, and interpolated n-gram baselines.

pub mod corpus;
pub mod error;
pub mod evaluate;
pub mod grammar;
pub mod induction;
pub mod inside_outside;
pub mod logspace;
pub mod ngram;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod parser;
pub mod sampler;

pub use error::{Error, Result};
pub use grammar::{Pcfg, Rhs, Rule, SymbolId, SymbolKind, SymbolTable};
pub use parser::{ParseTree, Parser};
