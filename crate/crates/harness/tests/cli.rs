use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pcfg_core::evaluate::grammar_entropy;
use pcfg_core::induction::{induce, InductionConfig};
use pcfg_core::ngram::{count, LambdaBuckets, NgramModel};
use pcfg_harness::models::{load_corpus, Model};

fn bench() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcfg-bench"))
}

fn reference_grammar() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/english_like.pcfg")
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn write_lines(path: &Path, lines: &[&str]) {
    std::fs::write(path, lines.join("\n") + "\n").unwrap();
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let gen = |sub: &str| {
        run(bench()
            .args(["generate", "--grammar"])
            .arg(reference_grammar())
            .args([
                "--seed",
                "42",
                "--train",
                "200",
                "--heldout",
                "30",
                "--test",
                "30",
                "--out-dir",
            ])
            .arg(dir.path().join(sub)));
    };
    gen("a");
    gen("b");
    for f in ["train.txt", "heldout.txt", "test.txt"] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{f} differs");
    }
    assert_eq!(
        load_corpus(&dir.path().join("a/train.txt")).unwrap().len(),
        200
    );
    assert_eq!(
        load_corpus(&dir.path().join("a/test.txt")).unwrap().len(),
        30
    );
}

#[test]
fn generate_one_sentence_per_file() {
    let dir = tempfile::tempdir().unwrap();
    run(bench()
        .args(["generate", "--grammar"])
        .arg(reference_grammar())
        .args(["--train", "1", "--heldout", "1", "--test", "1", "--out-dir"])
        .arg(dir.path()));
    for f in ["train.txt", "heldout.txt", "test.txt"] {
        assert_eq!(load_corpus(&dir.path().join(f)).unwrap().len(), 1, "{f}");
    }
}

#[test]
fn eval_of_uniform_four_word_model_prints_two_bits() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = vec![vec!["a".to_owned(), "b".to_owned()]];
    let m = NgramModel::with_lambdas(count(&corpus, 1).unwrap(), LambdaBuckets::uniform(1, 0.0));
    let model = dir.path().join("uniform.lm");
    m.write(std::fs::File::create(&model).unwrap()).unwrap();
    let test = dir.path().join("test.txt");
    write_lines(&test, &["a b", "b a a", "zzz"]);
    let out = run(bench()
        .args(["eval", "--model"])
        .arg(&model)
        .arg("--test")
        .arg(&test));
    assert_eq!(stdout(&out).trim(), "2.0000");
}

#[test]
fn induce_then_eval_round_trips_through_the_grammar_file() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.txt");
    let test = dir.path().join("test.txt");
    let lines = [
        "Bob talks slowly",
        "Mary talks slowly",
        "Bob runs",
        "Mary talks",
        "Bob talks slowly",
    ];
    write_lines(&train, &lines.repeat(8));
    write_lines(
        &test,
        &["Mary talks slowly", "Bob runs", "Mary runs slowly"],
    );
    let grammar = dir.path().join("induced.pcfg");
    run(bench()
        .args(["induce", "--train"])
        .arg(&train)
        .arg("--out")
        .arg(&grammar));

    let train_c = load_corpus(&train).unwrap();
    let test_c = load_corpus(&test).unwrap();
    let in_memory = grammar_entropy(
        induce(&train_c, &InductionConfig::default())
            .unwrap()
            .grammar(),
        &test_c,
    )
    .unwrap();
    let from_file = Model::load(&grammar).unwrap().entropy(&test_c).unwrap();
    assert!(in_memory.is_finite());
    assert!(
        (in_memory - from_file).abs() <= 1e-9,
        "{in_memory} vs {from_file}"
    );

    let out = run(bench()
        .args(["eval", "--model"])
        .arg(&grammar)
        .arg("--test")
        .arg(&test));
    assert_eq!(stdout(&out).trim(), format!("{from_file:.4}"));
}

#[test]
fn train_io_builds_the_39_rule_grammar() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.txt");
    let heldout = dir.path().join("heldout.txt");
    write_lines(&train, &["a b", "c d", "a b c d", "d c b a", "a a b"]);
    write_lines(&heldout, &["a b c", "d d"]);
    let grammar = dir.path().join("io.pcfg");
    let trace = dir.path().join("trace.jsonl");
    let out = run(bench()
        .args(["train-io", "-n", "3", "--seed", "4", "--train"])
        .arg(&train)
        .arg("--heldout")
        .arg(&heldout)
        .arg("--out")
        .arg(&grammar)
        .arg("--trace")
        .arg(&trace));
    assert!(
        stdout(&out).contains("initial grammar: 39 rules"),
        "{}",
        stdout(&out)
    );
    let Model::Grammar(g) = Model::load(&grammar).unwrap() else {
        panic!("expected a grammar");
    };
    assert_eq!(g.num_rules(), 39);
    let trace = std::fs::read_to_string(trace).unwrap();
    let lls: Vec<f64> = trace
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["log_likelihood"]
                .as_f64()
                .unwrap()
        })
        .collect();
    assert!(lls.len() >= 2);
    assert!(lls.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
}

#[test]
fn train_ngram_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.txt");
    let heldout = dir.path().join("heldout.txt");
    write_lines(&train, &["a b", "a b c", "b c"]);
    write_lines(&heldout, &["a b c", "a c"]);
    let model = dir.path().join("m.lm");
    run(bench()
        .args(["train-ngram", "--order", "2", "--train"])
        .arg(&train)
        .arg("--heldout")
        .arg(&heldout)
        .arg("--out")
        .arg(&model));
    let out = run(bench()
        .args(["eval", "--model"])
        .arg(&model)
        .arg("--test")
        .arg(&heldout));
    let h: f64 = stdout(&out).trim().parse().unwrap();
    assert!(h > 0.0 && h < 3.0, "{h}");
}

#[test]
fn malformed_model_reports_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.pcfg");
    std::fs::write(&model, "start: S\nS -> 'a' 1\nS -> -> 1\n").unwrap();
    let test = dir.path().join("t.txt");
    write_lines(&test, &["a"]);
    let out = bench()
        .args(["eval", "--model"])
        .arg(&model)
        .arg("--test")
        .arg(&test)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

fn tiny_experiment(dir: &Path, extra: &[&str]) -> Output {
    bench()
        .args(["experiment", "--grammar"])
        .arg(reference_grammar())
        .arg("--output-dir")
        .arg(dir)
        .args([
            "--train",
            "80",
            "--heldout",
            "20",
            "--test",
            "20",
            "--ngram-orders",
            "1,2",
            "--postpass-nonterminals",
            "2",
            "--seeds",
            "1",
            "--max-iterations",
            "4",
        ])
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn experiment_writes_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_experiment(dir.path(), &["--io-nonterminals", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = stdout(&out);
    for label in [
        "n-gram",
        "Inside-Outside",
        "induced",
        "induced + post-pass",
        "ideal grammar",
        "params:",
    ] {
        assert!(table.contains(label), "missing {label}:\n{table}");
    }
    let tsv = std::fs::read_to_string(dir.path().join("report.tsv")).unwrap();
    let rows: Vec<Vec<&str>> = tsv
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][0], "n-gram");
    assert_eq!(rows[0][4], "");
    assert!(rows[1..].iter().all(|r| !r[4].is_empty()));

    let test = load_corpus(&dir.path().join("corpora/test.txt")).unwrap();
    let jobs = std::fs::read_to_string(dir.path().join("jobs.tsv")).unwrap();
    for line in jobs.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        let reported: f64 = f[4].parse().unwrap();
        let recomputed = Model::load(Path::new(f[9]))
            .unwrap()
            .entropy(&test)
            .unwrap();
        assert!(
            (reported - recomputed).abs() <= 1e-9,
            "{}: {reported} vs {recomputed}",
            f[0]
        );
    }
    for f in [
        "report.txt",
        "progress.jsonl",
        "traces/io-n2-s1.jsonl",
        "config.toml",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn experiment_on_raw_corpus_has_no_ideal_row() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    let lines = [
        "the dog runs",
        "a cat sleeps",
        "the cat runs fast",
        "a dog sleeps",
        "the dog sees a cat",
    ];
    write_lines(&corpus, &lines.repeat(6));
    let out = bench()
        .args(["experiment", "--corpus"])
        .arg(&corpus)
        .arg("--output-dir")
        .arg(dir.path().join("out"))
        .args([
            "--train",
            "20",
            "--heldout",
            "5",
            "--test",
            "5",
            "--ngram-orders",
            "1,2",
        ])
        .args([
            "--io-nonterminals",
            "2",
            "--postpass-nonterminals",
            "2",
            "--seeds",
            "1",
        ])
        .args(["--max-iterations", "3"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(!stdout(&out).contains("ideal grammar"));
}

#[test]
fn failed_job_is_recorded_and_sets_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = tiny_experiment(dir.path(), &["--io-nonterminals", "0"]);
    assert!(!out.status.success());
    let table = stdout(&out);
    assert!(table.contains("FAILED io-n0-s1"), "{table}");
    assert!(
        table.contains("induced + post-pass"),
        "other models still reported:\n{table}"
    );
}
