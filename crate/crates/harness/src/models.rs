//! Training, saving, loading and scoring of every model family.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use pcfg_core::corpus::{read_corpus, vocabulary, write_corpus, Sentence};
use pcfg_core::evaluate::grammar_entropy;
use pcfg_core::grammar::{read_grammar, write_grammar};
use pcfg_core::induction::{induce_with_progress, Induction, InductionConfig, ProgressRecord};
use pcfg_core::inside_outside::{
    em_train, lari_young_with_targets, postpass_with_targets, smooth, tune_lambda, EmConfig,
    EmIteration,
};
use pcfg_core::ngram::{self, NgramModel};
use pcfg_core::parser::encode_sentence;
use pcfg_core::sampler::{sample_sentence, seeded_rng, sentence_tokens};
use pcfg_core::{Pcfg, SymbolId};

use crate::config::{self, Split};

const NGRAM_HEADER: &str = "ngram-model";

/// Train, held-out and test corpora.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpora {
    pub train: Vec<Sentence>,
    pub heldout: Vec<Sentence>,
    pub test: Vec<Sentence>,
}

pub const CORPUS_FILES: [&str; 3] = ["train.txt", "heldout.txt", "test.txt"];

impl Corpora {
    /// Samples `split.total()` sentences from `g` with one seeded stream and
    /// splits them in order.
    pub fn sample(g: &Pcfg, split: Split, seed: u64, max_len: usize) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut all = Vec::with_capacity(split.total());
        for _ in 0..split.total() {
            all.push(sentence_tokens(g, &sample_sentence(g, &mut rng, max_len)?));
        }
        Self::split(all, split)
    }

    /// Splits a corpus in file order.
    pub fn split(mut all: Vec<Sentence>, split: Split) -> Result<Self> {
        if all.len() < split.total() {
            bail!(
                "corpus has {} sentences but the split needs {}",
                all.len(),
                split.total()
            );
        }
        all.truncate(split.total());
        let test = all.split_off(split.train + split.heldout);
        let heldout = all.split_off(split.train);
        Ok(Self {
            train: all,
            heldout,
            test,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, part) in CORPUS_FILES
            .iter()
            .zip([&self.train, &self.heldout, &self.test])
        {
            let path = dir.join(name);
            let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            write_corpus(part, BufWriter::new(f))?;
        }
        Ok(())
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<Sentence>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_corpus(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn load_grammar(path: &Path) -> Result<Pcfg> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_grammar(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

/// Writes a grammar preceded by `#` comment lines.
pub fn save_grammar(g: &Pcfg, comments: &[String], path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for c in comments {
        writeln!(w, "# {c}")?;
    }
    write_grammar(g, &mut w)?;
    Ok(())
}

pub fn save_ngram(m: &NgramModel, path: &Path) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    m.write(BufWriter::new(f))?;
    Ok(())
}

/// A model artifact of either kind.
#[derive(Clone, Debug)]
pub enum Model {
    Grammar(Pcfg),
    Ngram(NgramModel),
}

impl Model {
    /// Loads an artifact, telling n-gram dumps from grammars by their header.
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let mut reader = BufReader::new(f);
        let mut first = String::new();
        while first.trim().is_empty() {
            first.clear();
            if reader.read_line(&mut first)? == 0 {
                break;
            }
        }
        let f = File::open(path)?;
        let model = if first.trim_start().starts_with(NGRAM_HEADER) {
            Model::Ngram(NgramModel::read(BufReader::new(f))?)
        } else {
            Model::Grammar(read_grammar(BufReader::new(f))?)
        };
        Ok(model)
    }

    /// Test entropy in bits per token.
    pub fn entropy(&self, test: &[Sentence]) -> Result<f64> {
        Ok(match self {
            Model::Grammar(g) => grammar_entropy(g, test)?,
            Model::Ngram(m) => m.entropy(test)?,
        })
    }

    /// Free rule probabilities for grammars; stored counts plus trained
    /// weights for n-gram models.
    pub fn num_parameters(&self) -> usize {
        match self {
            Model::Grammar(g) => g.free_parameters(),
            Model::Ngram(m) => m.num_parameters(),
        }
    }
}

pub fn train_ngram(order: usize, train: &[Sentence], heldout: &[Sentence]) -> Result<NgramModel> {
    let mut m = NgramModel::untrained(ngram::count(train, order)?);
    let trace = m.train_lambdas(heldout)?;
    if !trace.untouched.is_empty() {
        log::info!(
            "order {order}: {} weight buckets unseen in held-out data keep their initial value",
            trace.untouched.len()
        );
    }
    Ok(m)
}

pub fn induce_grammar<F: FnMut(&ProgressRecord)>(
    train: &[Sentence],
    cfg: &config::Induction,
    progress: F,
) -> Result<Induction> {
    let cfg = InductionConfig {
        epsilon: cfg.epsilon,
        max_sentence_len: cfg.max_sentence_len,
        checkpoint_every: None,
    };
    Ok(induce_with_progress(train, &cfg, progress)?)
}

/// An EM-trained grammar, smoothed with the λ tuned on held-out data.
#[derive(Clone, Debug)]
pub struct TrainedGrammar {
    pub grammar: Pcfg,
    pub initial_rules: usize,
    pub lambda: f64,
    pub trace: Vec<EmIteration>,
    pub converged: bool,
}

/// Which initial grammar EM starts from.
pub enum Init<'a> {
    LariYoung,
    PostPass(&'a Pcfg),
}

pub fn train_grammar(
    init: Init<'_>,
    n: usize,
    seed: u64,
    train: &[Sentence],
    heldout: &[Sentence],
    em: &config::Em,
) -> Result<TrainedGrammar> {
    let (g, targets) = match init {
        Init::LariYoung => lari_young_with_targets(n, &vocabulary(train), seed)?,
        Init::PostPass(induced) => postpass_with_targets(n, induced, seed)?,
    };
    let initial_rules = g.num_rules();
    log::info!("initial grammar: {initial_rules} rules");
    let enc_train = encode_all(&g, train).context("encoding training corpus")?;
    let enc_heldout = encode_known(&g, heldout);
    if enc_heldout.is_empty() {
        bail!("no held-out sentence uses only training vocabulary");
    }
    let cfg = EmConfig {
        max_iterations: em.max_iterations,
        rel_tol: em.rel_tol,
        seed,
        lambda: 0.0,
    };
    let run = em_train(g, &enc_train, &cfg)?;
    let (lambda, _) = tune_lambda(&run.grammar, &targets, &enc_heldout)?;
    Ok(TrainedGrammar {
        grammar: smooth(&run.grammar, lambda, &targets),
        initial_rules,
        lambda,
        trace: run.trace,
        converged: run.converged,
    })
}

fn encode_all(g: &Pcfg, corpus: &[Sentence]) -> Result<Vec<Vec<SymbolId>>> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, s)| encode_sentence(g, s).with_context(|| format!("sentence {i}")))
        .collect()
}

/// Encodes the sentences whose tokens the grammar knows, dropping the rest.
fn encode_known(g: &Pcfg, corpus: &[Sentence]) -> Vec<Vec<SymbolId>> {
    let out: Vec<Vec<SymbolId>> = corpus
        .iter()
        .filter_map(|s| encode_sentence(g, s).ok())
        .collect();
    if out.len() < corpus.len() {
        log::warn!(
            "{} held-out sentences contain unseen tokens and are not used for λ",
            corpus.len() - out.len()
        );
    }
    out
}

pub fn write_trace(trace: &[EmIteration], path: &Path) -> Result<()> {
    let mut w =
        BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for t in trace {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(lines: &[&str]) -> Vec<Sentence> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn split_in_file_order() {
        let all = toks(&["a", "b", "c", "d", "e"]);
        let c = Corpora::split(
            all.clone(),
            Split {
                train: 2,
                heldout: 1,
                test: 1,
            },
        )
        .unwrap();
        assert_eq!(c.train, toks(&["a", "b"]));
        assert_eq!(c.heldout, toks(&["c"]));
        assert_eq!(c.test, toks(&["d"]));
        assert!(Corpora::split(
            all,
            Split {
                train: 4,
                heldout: 1,
                test: 1
            }
        )
        .is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        let g = read_grammar("start: S\nS -> S S 0.3\nS -> 'a' 0.4\nS -> 'b' 0.3\n".as_bytes())
            .unwrap();
        let split = Split {
            train: 5,
            heldout: 2,
            test: 2,
        };
        let a = Corpora::sample(&g, split, 7, 10).unwrap();
        let b = Corpora::sample(&g, split, 7, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 5);
        assert!(a.train.iter().chain(&a.test).all(|s| s.len() <= 10));
    }

    #[test]
    fn io_grammar_keeps_rule_count_and_unknown_heldout_is_skipped() {
        let train = toks(&["a b", "b c d", "a d", "c"]);
        let heldout = toks(&["a b", "zzz"]);
        let t = train_grammar(
            Init::LariYoung,
            3,
            1,
            &train,
            &heldout,
            &config::Em::default(),
        )
        .unwrap();
        assert_eq!(t.initial_rules, 39);
        assert_eq!(t.grammar.num_rules(), 39);
        assert!((0.0..=1.0).contains(&t.lambda));
        assert!(t.grammar.max_normalization_error() < 1e-9);
        assert!(train_grammar(
            Init::LariYoung,
            3,
            1,
            &train,
            &toks(&["zzz"]),
            &config::Em::default()
        )
        .is_err());
    }
}
