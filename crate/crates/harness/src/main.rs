use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pcfg_harness::config::{self, ExperimentConfig};
use pcfg_harness::experiment::{prepare_corpora, run_experiment};
use pcfg_harness::models::{self, Init, Model};

#[derive(Parser)]
#[command(
    name = "pcfg-bench",
    version,
    about = "Grammar induction and language model comparison"
)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample train, held-out and test corpora from a reference grammar.
    Generate(GenerateCmd),
    /// Induce a grammar from a training corpus.
    Induce(InduceCmd),
    /// Train a grammar with Inside-Outside and tune its smoothing weight.
    TrainIo(TrainIoCmd),
    /// Train an interpolated n-gram model.
    TrainNgram(TrainNgramCmd),
    /// Print the test entropy of a model in bits per token.
    Eval(EvalCmd),
    /// Train and score every roster model and write the report.
    Experiment(ExperimentCmd),
}

#[derive(Args, Default)]
struct SplitArgs {
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    heldout: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
}

#[derive(Args)]
struct GenerateCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reference grammar; overrides the config domain.
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[command(flatten)]
    split: SplitArgs,
    /// Directory for train.txt, heldout.txt and test.txt.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct InduceCmd {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = config::Induction::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = config::Induction::default().max_sentence_len)]
    max_sentence_len: usize,
    /// JSON-lines file receiving one record per processed sentence.
    #[arg(long)]
    progress: Option<PathBuf>,
}

#[derive(Args)]
struct EmArgs {
    #[arg(long, default_value_t = config::Em::default().max_iterations)]
    max_iterations: usize,
    #[arg(long, default_value_t = config::Em::default().rel_tol)]
    rel_tol: f64,
}

#[derive(Args)]
struct TrainIoCmd {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    heldout: PathBuf,
    /// Number of nonterminals X_1..X_n.
    #[arg(long, short)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Induced grammar to post-process instead of the Lari-Young start.
    #[arg(long)]
    induced: Option<PathBuf>,
    #[command(flatten)]
    em: EmArgs,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines file receiving the EM trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct TrainNgramCmd {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    heldout: PathBuf,
    #[arg(long)]
    order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct ExperimentCmd {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grammar: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long, value_delimiter = ',')]
    ngram_orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    io_nonterminals: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    postpass_nonterminals: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    no_induction: bool,
    #[arg(long)]
    generate_seed: Option<u64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

fn apply_split(cfg: &mut ExperimentConfig, s: &SplitArgs) {
    if let Some(v) = s.train {
        cfg.split.train = v;
    }
    if let Some(v) = s.heldout {
        cfg.split.heldout = v;
    }
    if let Some(v) = s.test {
        cfg.split.test = v;
    }
}

fn generate(cmd: GenerateCmd) -> Result<()> {
    let mut cfg = load_config(cmd.config.as_deref())?;
    if let Some(g) = cmd.grammar {
        cfg.domain.grammar = Some(g);
        cfg.domain.corpus = None;
    }
    if cfg.domain.grammar.is_none() {
        bail!("generate needs a reference grammar (--grammar or [domain] grammar)");
    }
    if let Some(s) = cmd.seed {
        cfg.generate.seed = s;
    }
    if let Some(m) = cmd.max_len {
        cfg.generate.max_len = m;
    }
    apply_split(&mut cfg, &cmd.split);
    cfg.validate()?;
    let dir = cmd
        .out_dir
        .unwrap_or_else(|| cfg.output_dir.join("corpora"));
    let (c, _) = prepare_corpora(&cfg, &dir)?;
    println!(
        "wrote {} / {} / {} sentences to {}",
        c.train.len(),
        c.heldout.len(),
        c.test.len(),
        dir.display()
    );
    Ok(())
}

fn induce(cmd: InduceCmd) -> Result<()> {
    let train = models::load_corpus(&cmd.train)?;
    let mut progress = match &cmd.progress {
        Some(p) => Some(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => None,
    };
    let icfg = config::Induction {
        epsilon: cmd.epsilon,
        max_sentence_len: cmd.max_sentence_len,
    };
    let run = models::induce_grammar(&train, &icfg, |rec| {
        if let Some(w) = progress.as_mut() {
            use std::io::Write;
            let _ = serde_json::to_writer(&mut *w, rec).map(|_| w.write_all(b"\n"));
        }
    })?;
    let g = run.grammar();
    let comment = format!(
        "induced from {} sentences, {} moves",
        train.len(),
        run.state.accepted_moves().len()
    );
    models::save_grammar(g, &[comment], &cmd.out)?;
    println!(
        "{} rules, {} symbols, {} moves, {} sentences skipped",
        g.num_rules(),
        g.symbols().len(),
        run.state.accepted_moves().len(),
        run.skipped
    );
    Ok(())
}

fn train_io(cmd: TrainIoCmd) -> Result<()> {
    let train = models::load_corpus(&cmd.train)?;
    let heldout = models::load_corpus(&cmd.heldout)?;
    let induced = cmd
        .induced
        .as_deref()
        .map(models::load_grammar)
        .transpose()?;
    let init = match &induced {
        Some(g) => Init::PostPass(g),
        None => Init::LariYoung,
    };
    let em = config::Em {
        max_iterations: cmd.em.max_iterations,
        rel_tol: cmd.em.rel_tol,
    };
    let t = models::train_grammar(init, cmd.n, cmd.seed, &train, &heldout, &em)?;
    if let Some(p) = &cmd.trace {
        models::write_trace(&t.trace, p)?;
    }
    let comment = format!(
        "n={} seed={} lambda={} em_iterations={} converged={}",
        cmd.n,
        cmd.seed,
        t.lambda,
        t.trace.len().saturating_sub(1),
        t.converged
    );
    models::save_grammar(&t.grammar, &[comment], &cmd.out)?;
    println!("initial grammar: {} rules", t.initial_rules);
    println!(
        "em iterations: {} (converged: {})",
        t.trace.len().saturating_sub(1),
        t.converged
    );
    if let Some(last) = t.trace.last() {
        println!("training log-likelihood: {}", last.log_likelihood);
    }
    println!("lambda: {}", t.lambda);
    Ok(())
}

fn train_ngram(cmd: TrainNgramCmd) -> Result<()> {
    let train = models::load_corpus(&cmd.train)?;
    let heldout = models::load_corpus(&cmd.heldout)?;
    let m = models::train_ngram(cmd.order, &train, &heldout)?;
    models::save_ngram(&m, &cmd.out)?;
    println!("{} parameters", m.num_parameters());
    Ok(())
}

fn eval(cmd: EvalCmd) -> Result<()> {
    let model = Model::load(&cmd.model)?;
    let test = models::load_corpus(&cmd.test)?;
    println!("{:.4}", model.entropy(&test)?);
    Ok(())
}

fn experiment(cmd: ExperimentCmd) -> Result<bool> {
    let mut cfg = load_config(cmd.config.as_deref())?;
    if let Some(g) = cmd.grammar {
        cfg.domain = config::Domain {
            grammar: Some(g),
            corpus: None,
        };
    }
    if let Some(c) = cmd.corpus {
        cfg.domain = config::Domain {
            grammar: None,
            corpus: Some(c),
        };
    }
    if let Some(d) = cmd.output_dir {
        cfg.output_dir = d;
    }
    apply_split(&mut cfg, &cmd.split);
    let r = &mut cfg.roster;
    if let Some(v) = cmd.ngram_orders {
        r.ngram_orders = v;
    }
    if let Some(v) = cmd.io_nonterminals {
        r.io_nonterminals = v;
    }
    if let Some(v) = cmd.postpass_nonterminals {
        r.postpass_nonterminals = v;
    }
    if let Some(v) = cmd.seeds {
        r.seeds = v;
    }
    if cmd.no_induction {
        r.induction = false;
    }
    if let Some(v) = cmd.generate_seed {
        cfg.generate.seed = v;
    }
    if let Some(v) = cmd.max_len {
        cfg.generate.max_len = v;
    }
    if let Some(v) = cmd.epsilon {
        cfg.induction.epsilon = v;
    }
    if let Some(v) = cmd.max_iterations {
        cfg.em.max_iterations = v;
    }
    if let Some(v) = cmd.rel_tol {
        cfg.em.rel_tol = v;
    }
    let report = run_experiment(&cfg)?;
    print!("{}", report.table());
    let ok = report.failures().next().is_none();
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match cli.command {
        Command::Generate(c) => generate(c).map(|_| true),
        Command::Induce(c) => induce(c).map(|_| true),
        Command::TrainIo(c) => train_io(c).map(|_| true),
        Command::TrainNgram(c) => train_ngram(c).map(|_| true),
        Command::Eval(c) => eval(c).map(|_| true),
        Command::Experiment(c) => experiment(c),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
