use pcfg_core::inside_outside::{em_train, expected_counts, EmConfig};
use pcfg_core::oracle;
use pcfg_core::SymbolId;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) + 1e-14
}

#[test]
fn expected_counts_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..150 {
        let g = oracle::random_grammar(&mut rng, 5, 3, 8);
        let terminals: Vec<SymbolId> = g.symbols().terminals().collect();
        let mut sentences = oracle::all_sentences(&terminals, 6);
        sentences.shuffle(&mut rng);
        let mut parseable = Vec::new();
        for s in sentences {
            let d = oracle::sentence_derivations(&g, &s);
            if oracle::total_prob(&d) > 0.0 {
                parseable.push((s, d));
            }
            if parseable.len() == 4 {
                break;
            }
        }
        for (s, d) in &parseable {
            let want = oracle::expected_counts(&g, d);
            let (got, ll) = expected_counts(&g, std::slice::from_ref(s)).unwrap();
            for (r, (a, b)) in got.iter().zip(&want).enumerate() {
                assert!(close(*a, *b), "rule {r}: {a} vs {b}");
            }
            let z = oracle::total_prob(d).ln();
            assert!((ll - z).abs() <= 1e-10 * z.abs().max(1.0));
            checked += 1;
        }
        if parseable.len() > 1 {
            let corpus: Vec<Vec<SymbolId>> = parseable.iter().map(|(s, _)| s.clone()).collect();
            let (got, _) = expected_counts(&g, &corpus).unwrap();
            let mut want = vec![0.0; g.num_rules()];
            for (_, d) in &parseable {
                for (w, c) in want.iter_mut().zip(oracle::expected_counts(&g, d)) {
                    *w += c;
                }
            }
            for (a, b) in got.iter().zip(&want) {
                assert!(close(*a, *b), "{a} vs {b}");
            }
        }
    }
    assert!(checked > 150, "only {checked} sentences checked");
}

#[test]
fn em_is_monotone_and_normalized_on_random_grammars() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let g = oracle::random_grammar(&mut rng, 4, 3, 8);
        let terminals: Vec<SymbolId> = g.symbols().terminals().collect();
        let corpus: Vec<Vec<SymbolId>> = oracle::all_sentences(&terminals, 4)
            .into_iter()
            .filter(|s| oracle::total_prob(&oracle::sentence_derivations(&g, s)) > 0.0)
            .take(12)
            .collect();
        if corpus.is_empty() {
            continue;
        }
        let cfg = EmConfig {
            max_iterations: 25,
            rel_tol: 1e-12,
            ..Default::default()
        };
        let r = em_train(g, &corpus, &cfg).unwrap();
        for w in r.log_likelihoods().windows(2) {
            assert!(
                w[1] >= w[0] - 1e-9 * w[0].abs(),
                "{:?}",
                r.log_likelihoods()
            );
        }
        assert!(r.grammar.max_normalization_error() <= 1e-12);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g = oracle::random_grammar(&mut rng, 4, 2, 8);
    let terminals: Vec<SymbolId> = g.symbols().terminals().collect();
    let corpus: Vec<Vec<SymbolId>> = oracle::all_sentences(&terminals, 6)
        .into_iter()
        .filter(|s| oracle::total_prob(&oracle::sentence_derivations(&g, s)) > 0.0)
        .collect();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| expected_counts(&g, &corpus).unwrap())
    };
    let (a, la) = run(1);
    let (b, lb) = run(3);
    assert_eq!(la.to_bits(), lb.to_bits());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}
