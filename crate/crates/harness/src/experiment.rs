//! The full comparison: corpora, every roster model, and the entropy report.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use pcfg_core::induction::ProgressRecord;
use pcfg_core::Pcfg;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::models::{self, Corpora, Init, Model};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Ngram,
    InsideOutside,
    Induced,
    PostPass,
    Ideal,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Ngram,
        Family::InsideOutside,
        Family::Induced,
        Family::PostPass,
        Family::Ideal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Family::Ngram => "n-gram",
            Family::InsideOutside => "Inside-Outside",
            Family::Induced => "induced",
            Family::PostPass => "induced + post-pass",
            Family::Ideal => "ideal grammar",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Job {
    pub family: Family,
    /// n-gram order or number of nonterminals.
    pub n: Option<usize>,
    pub seed: Option<u64>,
}

impl Job {
    pub fn name(&self) -> String {
        match (self.family, self.n, self.seed) {
            (Family::Ngram, Some(n), _) => format!("ngram-{n}"),
            (Family::InsideOutside, Some(n), Some(s)) => format!("io-n{n}-s{s}"),
            (Family::PostPass, Some(n), Some(s)) => format!("postpass-n{n}-s{s}"),
            (Family::Induced, ..) => "induced".into(),
            (Family::Ideal, ..) => "ideal".into(),
            (f, n, s) => format!("{f:?}-{n:?}-{s:?}").to_lowercase(),
        }
    }

    fn artifact(&self, dir: &Path) -> PathBuf {
        let ext = if self.family == Family::Ngram {
            "lm"
        } else {
            "pcfg"
        };
        dir.join(format!("{}.{ext}", self.name()))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct JobResult {
    #[serde(flatten)]
    pub job: Job,
    pub artifact: PathBuf,
    pub entropy: Option<f64>,
    pub params: Option<usize>,
    pub lambda: Option<f64>,
    pub em_iterations: Option<usize>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl JobResult {
    fn new(job: Job, artifact: PathBuf) -> Self {
        Self {
            job,
            artifact,
            entropy: None,
            params: None,
            lambda: None,
            em_iterations: None,
            seconds: 0.0,
            error: None,
        }
    }

    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.entropy.is_some()
    }
}

/// The best configuration of one model family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub family: Family,
    pub best_n: Option<usize>,
    pub seed: Option<u64>,
    pub entropy: f64,
    /// `(entropy - ngram) / ngram` in percent; absent on the n-gram row.
    pub relative_pct: Option<f64>,
    pub params: usize,
    pub seconds: f64,
}

/// `(family, best n, seed, entropy bits, relative bits, params)`.
pub type ReproducibleRow = (Family, Option<usize>, Option<u64>, u64, Option<u64>, usize);

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub jobs: Vec<JobResult>,
}

pub const PARAMS_FOOTER: &str =
    "params: grammars count free rule probabilities (rules minus one per left-hand side); \
n-gram models count stored n-gram counts plus trained interpolation weights.";
pub const TIME_FOOTER: &str =
    "time: wall-clock training seconds of the reported configuration (post-pass includes induction).";

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &JobResult> {
        self.jobs.iter().filter(|j| !j.succeeded())
    }

    pub fn row(&self, family: Family) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.family == family)
    }

    /// Best job of a family, if any.
    pub fn best_job(&self, family: Family) -> Option<&JobResult> {
        let row = self.row(family)?;
        self.jobs
            .iter()
            .find(|j| j.job.family == family && j.job.n == row.best_n && j.job.seed == row.seed)
    }

    /// Rows with the wall-clock column removed, for run-to-run comparison.
    pub fn reproducible_numbers(&self) -> Vec<ReproducibleRow> {
        self.rows
            .iter()
            .map(|r| {
                (
                    r.family,
                    r.best_n,
                    r.seed,
                    r.entropy.to_bits(),
                    r.relative_pct.map(f64::to_bits),
                    r.params,
                )
            })
            .collect()
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>9} {:>9} {:>9} {:>9}",
            "model", "best n", "entropy", "relative", "params", "time"
        );
        for r in &self.rows {
            let n = r.best_n.map_or_else(|| "-".to_owned(), |n| n.to_string());
            let rel = r
                .relative_pct
                .map_or_else(String::new, |p| format!("{p:+.1}%"));
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>9.4} {:>9} {:>9} {:>8.1}s",
                r.family.label(),
                n,
                r.entropy,
                rel,
                r.params,
                r.seconds
            );
        }
        for f in self.failures() {
            let _ = writeln!(
                out,
                "FAILED {}: {}",
                f.job.name(),
                f.error.as_deref().unwrap_or("no entropy")
            );
        }
        let _ = writeln!(out, "{PARAMS_FOOTER}");
        let _ = writeln!(out, "{TIME_FOOTER}");
        out
    }

    pub fn tsv(&self) -> String {
        let mut out = String::from("model\tbest_n\tseed\tentropy\trelative_pct\tparams\tseconds\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.family.label(),
                opt(r.best_n),
                opt(r.seed),
                r.entropy,
                opt(r.relative_pct),
                r.params,
                r.seconds
            );
        }
        out
    }

    pub fn jobs_tsv(&self) -> String {
        let mut out =
            String::from("job\tfamily\tn\tseed\tentropy\tparams\tlambda\tem_iterations\tseconds\tartifact\terror\n");
        for j in &self.jobs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                j.job.name(),
                j.job.family.label(),
                opt(j.job.n),
                opt(j.job.seed),
                opt(j.entropy),
                opt(j.params),
                opt(j.lambda),
                opt(j.em_iterations),
                j.seconds,
                j.artifact.display(),
                j.error.as_deref().unwrap_or("")
            );
        }
        out
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes corpora for the configured domain into `dir`.
pub fn prepare_corpora(cfg: &ExperimentConfig, dir: &Path) -> Result<(Corpora, Option<Pcfg>)> {
    let (corpora, reference) = match (&cfg.domain.grammar, &cfg.domain.corpus) {
        (Some(g), _) => {
            let g = models::load_grammar(g)?;
            let c = Corpora::sample(&g, cfg.split, cfg.generate.seed, cfg.generate.max_len)?;
            (c, Some(g))
        }
        (None, Some(path)) => (Corpora::split(models::load_corpus(path)?, cfg.split)?, None),
        (None, None) => return Err(anyhow!("domain must name a grammar or a corpus")),
    };
    corpora.write(dir)?;
    Ok((corpora, reference))
}

struct Progress(Mutex<BufWriter<File>>);

impl Progress {
    fn record<T: Serialize>(&self, event: &str, value: &T) {
        #[derive(Serialize)]
        struct Line<'a, T> {
            event: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let mut w = self.0.lock().unwrap_or_else(|e| e.into_inner());
        if serde_json::to_writer(&mut *w, &Line { event, value }).is_ok() {
            let _ = w.write_all(b"\n");
        }
    }
}

/// Scores a written artifact from file.
fn evaluate_artifact(result: &mut JobResult, test: &[Vec<String>]) -> Result<()> {
    let model = Model::load(&result.artifact)?;
    result.entropy = Some(model.entropy(test)?);
    result.params = Some(model.num_parameters());
    Ok(())
}

fn finish(mut result: JobResult, outcome: Result<()>, progress: &Progress) -> JobResult {
    if let Err(e) = outcome {
        log::error!("{} failed: {e:#}", result.job.name());
        result.error = Some(format!("{e:#}"));
    } else {
        log::info!(
            "{}: {:.4} bits/token, {} params, {:.1}s",
            result.job.name(),
            result.entropy.unwrap_or(f64::NAN),
            result.params.unwrap_or(0),
            result.seconds
        );
    }
    progress.record("job", &result);
    result
}

/// Runs every roster model and writes corpora, artifacts, traces and the
/// report under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    let model_dir = out.join("models");
    let trace_dir = out.join("traces");
    for d in [out, &model_dir, &trace_dir] {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    std::fs::write(out.join("config.toml"), toml::to_string(cfg)?)?;
    let (corpora, reference) = prepare_corpora(cfg, &out.join("corpora"))?;
    let progress = Progress(Mutex::new(BufWriter::new(File::create(
        out.join("progress.jsonl"),
    )?)));
    let Corpora {
        train,
        heldout,
        test,
    } = &corpora;

    let mut induced: Option<(Pcfg, f64)> = None;
    let mut induced_result = None;
    if cfg.roster.induction {
        let job = Job {
            family: Family::Induced,
            n: None,
            seed: None,
        };
        let mut result = JobResult::new(job, job.artifact(&model_dir));
        let outcome = (|| {
            let start = Instant::now();
            let run = models::induce_grammar(train, &cfg.induction, |p: &ProgressRecord| {
                progress.record("induction", p)
            })?;
            result.seconds = start.elapsed().as_secs_f64();
            let comment = format!(
                "induced from {} sentences, {} moves",
                train.len(),
                run.state.accepted_moves().len()
            );
            models::save_grammar(run.grammar(), &[comment], &result.artifact)?;
            evaluate_artifact(&mut result, test)?;
            induced = Some((run.grammar().clone(), result.seconds));
            Ok(())
        })();
        induced_result = Some(finish(result, outcome, &progress));
    }

    let r = &cfg.roster;
    let mut jobs: Vec<Job> = r
        .ngram_orders
        .iter()
        .map(|&n| Job {
            family: Family::Ngram,
            n: Some(n),
            seed: None,
        })
        .collect();
    for &n in &r.io_nonterminals {
        for &s in &r.seeds {
            jobs.push(Job {
                family: Family::InsideOutside,
                n: Some(n),
                seed: Some(s),
            });
        }
    }
    if r.induction {
        for &n in &r.postpass_nonterminals {
            for &s in &r.seeds {
                jobs.push(Job {
                    family: Family::PostPass,
                    n: Some(n),
                    seed: Some(s),
                });
            }
        }
    }

    let run_job = |job: &Job| -> JobResult {
        let mut result = JobResult::new(*job, job.artifact(&model_dir));
        log::info!("starting {}", job.name());
        let outcome = (|| -> Result<()> {
            let n = job.n.expect("roster jobs have n");
            let start = Instant::now();
            match job.family {
                Family::Ngram => {
                    let m = models::train_ngram(n, train, heldout)?;
                    result.seconds = start.elapsed().as_secs_f64();
                    models::save_ngram(&m, &result.artifact)?;
                }
                Family::InsideOutside | Family::PostPass => {
                    let seed = job.seed.expect("grammar jobs have a seed");
                    let (init, extra) = match job.family {
                        Family::PostPass => {
                            let (g, secs) = induced
                                .as_ref()
                                .ok_or_else(|| anyhow!("induction failed"))?;
                            (Init::PostPass(g), *secs)
                        }
                        _ => (Init::LariYoung, 0.0),
                    };
                    let t = models::train_grammar(init, n, seed, train, heldout, &cfg.em)?;
                    result.seconds = start.elapsed().as_secs_f64() + extra;
                    result.lambda = Some(t.lambda);
                    result.em_iterations = Some(t.trace.len().saturating_sub(1));
                    models::write_trace(
                        &t.trace,
                        &trace_dir.join(format!("{}.jsonl", job.name())),
                    )?;
                    let comment = format!(
                        "{} n={n} seed={seed} lambda={} em_iterations={} converged={}",
                        job.family.label(),
                        t.lambda,
                        t.trace.len().saturating_sub(1),
                        t.converged
                    );
                    models::save_grammar(&t.grammar, &[comment], &result.artifact)?;
                }
                Family::Induced | Family::Ideal => unreachable!("not a roster job"),
            }
            evaluate_artifact(&mut result, test)
        })();
        finish(result, outcome, &progress)
    };
    let mut results: Vec<JobResult> = jobs.par_iter().map(run_job).collect();

    if let Some(ind) = induced_result {
        let at = results
            .iter()
            .position(|j| j.job.family == Family::PostPass)
            .unwrap_or(results.len());
        results.insert(at, ind);
    }
    if let Some(g) = reference {
        let job = Job {
            family: Family::Ideal,
            n: None,
            seed: None,
        };
        let mut result = JobResult::new(job, job.artifact(&model_dir));
        let outcome = models::save_grammar(&g, &["reference grammar".into()], &result.artifact)
            .and_then(|_| evaluate_artifact(&mut result, test));
        results.push(finish(result, outcome, &progress));
    }
    progress
        .0
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .flush()?;

    let report = ExperimentReport {
        rows: best_rows(&results),
        jobs: results,
    };
    std::fs::write(out.join("report.txt"), report.table())?;
    std::fs::write(out.join("report.tsv"), report.tsv())?;
    std::fs::write(out.join("jobs.tsv"), report.jobs_tsv())?;
    Ok(report)
}

/// Lowest test entropy per family, first job winning ties.
pub fn best_rows(results: &[JobResult]) -> Vec<ReportRow> {
    let mut rows: Vec<ReportRow> = Vec::new();
    for family in Family::ALL {
        let best = results
            .iter()
            .filter(|j| j.job.family == family && j.succeeded())
            .fold(None::<&JobResult>, |acc, j| match acc {
                Some(a) if a.entropy <= j.entropy => Some(a),
                _ => Some(j),
            });
        if let Some(j) = best {
            rows.push(ReportRow {
                family,
                best_n: j.job.n,
                seed: j.job.seed,
                entropy: j.entropy.unwrap_or(f64::INFINITY),
                relative_pct: None,
                params: j.params.unwrap_or(0),
                seconds: j.seconds,
            });
        }
    }
    if let Some(base) = rows
        .iter()
        .find(|r| r.family == Family::Ngram)
        .map(|r| r.entropy)
    {
        for r in rows.iter_mut().filter(|r| r.family != Family::Ngram) {
            r.relative_pct = Some(relative_pct(r.entropy, base));
        }
    }
    rows
}

/// Signed percentage difference of `entropy` from `baseline`.
pub fn relative_pct(entropy: f64, baseline: f64) -> f64 {
    (entropy - baseline) / baseline * 100.0
}
