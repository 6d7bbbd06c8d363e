//! Experiment configuration, read from TOML.
//!
//! ```toml
//! output_dir = "runs/english_like"
//!
//! [domain]
//! grammar = "data/english_like.pcfg"   # or: corpus = "pos.txt"
//!
//! [split]
//! train = 4000
//! heldout = 500
//! test = 500
//!
//! [roster]
//! ngram_orders = [1, 2, 3]
//! io_nonterminals = [3, 4, 5]
//! induction = true
//! postpass_nonterminals = [3, 4, 5]
//! seeds = [1, 2, 3]
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pcfg_core::induction::{DEFAULT_EPSILON, DEFAULT_MAX_SENTENCE_LEN};
use pcfg_core::inside_outside::{DEFAULT_MAX_ITERATIONS, DEFAULT_REL_TOL};
use pcfg_core::sampler::DEFAULT_MAX_LEN;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    /// Reference grammar sampled to build the corpora.
    pub grammar: Option<PathBuf>,
    /// Raw corpus split in file order into train, held-out and test.
    pub corpus: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Split {
    pub train: usize,
    pub heldout: usize,
    pub test: usize,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 4000,
            heldout: 500,
            test: 500,
        }
    }
}

impl Split {
    pub fn total(&self) -> usize {
        self.train + self.heldout + self.test
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Roster {
    pub ngram_orders: Vec<usize>,
    pub io_nonterminals: Vec<usize>,
    pub induction: bool,
    pub postpass_nonterminals: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for Roster {
    fn default() -> Self {
        Self {
            ngram_orders: (1..=10).collect(),
            io_nonterminals: (3..=10).collect(),
            induction: true,
            postpass_nonterminals: (3..=10).collect(),
            seeds: vec![1, 2, 3],
        }
    }
}

impl Roster {
    pub fn is_empty(&self) -> bool {
        self.ngram_orders.is_empty() && self.io_nonterminals.is_empty() && !self.induction
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generate {
    pub seed: u64,
    pub max_len: usize,
}

impl Default for Generate {
    fn default() -> Self {
        Self {
            seed: 42,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Induction {
    pub epsilon: f64,
    pub max_sentence_len: usize,
}

impl Default for Induction {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_sentence_len: DEFAULT_MAX_SENTENCE_LEN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Em {
    pub max_iterations: usize,
    pub rel_tol: f64,
}

impl Default for Em {
    fn default() -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            rel_tol: DEFAULT_REL_TOL,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub split: Split,
    pub roster: Roster,
    pub generate: Generate,
    pub induction: Induction,
    pub em: Em,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::default(),
            split: Split::default(),
            roster: Roster::default(),
            generate: Generate::default(),
            induction: Induction::default(),
            em: Em::default(),
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg =
            Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.domain.grammar.as_mut() {
            fix(p);
        }
        if let Some(p) = self.domain.corpus.as_mut() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.domain.grammar, &self.domain.corpus) {
            (Some(_), Some(_)) => bail!("domain must name either a grammar or a corpus, not both"),
            (None, None) => bail!("domain must name a grammar or a corpus"),
            _ => {}
        }
        let s = &self.split;
        if s.train == 0 || s.heldout == 0 || s.test == 0 {
            bail!("split sizes must be positive");
        }
        if self.roster.is_empty() {
            bail!("roster is empty");
        }
        let needs_seeds = !self.roster.io_nonterminals.is_empty()
            || (self.roster.induction && !self.roster.postpass_nonterminals.is_empty());
        if needs_seeds && self.roster.seeds.is_empty() {
            bail!("roster needs at least one seed");
        }
        if self.generate.max_len == 0 {
            bail!("max_len must be positive");
        }
        Ok(())
    }

    /// True when the corpora are sampled from a reference grammar.
    pub fn is_synthetic(&self) -> bool {
        self.domain.grammar.is_some()
    }
}
