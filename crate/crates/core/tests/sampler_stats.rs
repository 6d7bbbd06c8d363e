use pcfg_core::grammar::read_grammar;
use pcfg_core::induction::initial_grammar;
use pcfg_core::sampler::{sample_sentence, seeded_rng, sentence_tokens};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SAMPLES: usize = 100_000;

#[test]
fn initial_grammar_lengths_are_geometric() {
    let eps = 0.01;
    let g = initial_grammar(&["a", "b", "c"], eps).unwrap();
    let mut rng = seeded_rng(11);
    let mut total = 0usize;
    for _ in 0..SAMPLES {
        total += sample_sentence(&g, &mut rng, 1_000_000).unwrap().len();
    }
    let mean = total as f64 / SAMPLES as f64;
    assert!((mean - 1.0 / eps).abs() <= 0.02 / eps, "mean length {mean}");
}

#[test]
fn binary_choice_frequency() {
    let g = read_grammar("start: S\nS -> 'a' 0.3\nS -> 'b' 0.7\n".as_bytes()).unwrap();
    let b = g.symbols().terminal("b").unwrap();
    let mut rng = seeded_rng(5);
    let hits = (0..SAMPLES)
        .filter(|_| sample_sentence(&g, &mut rng, 5).unwrap() == [b])
        .count();
    let freq = hits as f64 / SAMPLES as f64;
    assert!((freq - 0.7).abs() <= 0.01, "{freq}");
}

fn chi_square_accepts(observed: &[u64], probs: &[f64]) -> bool {
    let n: u64 = observed.iter().sum();
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = n as f64 * p;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((probs.len() - 1) as f64)
        .unwrap()
        .inverse_cdf(0.999);
    stat <= critical
}

#[test]
fn rule_choice_frequencies_pass_chi_square() {
    let g = read_grammar(
        "start: S
S -> A B 0.6
S -> 'c' 0.4
A -> 'a1' 0.2
A -> 'a2' 0.3
A -> 'a3' 0.5
B -> 'b1' 0.7
B -> 'b2' 0.1
B -> 'b3' 0.1
B -> 'b4' 0.05
B -> 'b5' 0.05
"
        .as_bytes(),
    )
    .unwrap();
    let mut rng = seeded_rng(2024);
    let mut s_counts = [0u64; 2];
    let mut a_counts = [0u64; 3];
    let mut b_counts = [0u64; 5];
    for _ in 0..SAMPLES {
        let toks = sentence_tokens(&g, &sample_sentence(&g, &mut rng, 10).unwrap());
        if toks == ["c"] {
            s_counts[1] += 1;
            continue;
        }
        s_counts[0] += 1;
        a_counts[toks[0][1..].parse::<usize>().unwrap() - 1] += 1;
        b_counts[toks[1][1..].parse::<usize>().unwrap() - 1] += 1;
    }
    assert!(chi_square_accepts(&s_counts, &[0.6, 0.4]));
    assert!(chi_square_accepts(&a_counts, &[0.2, 0.3, 0.5]));
    assert!(chi_square_accepts(&b_counts, &[0.7, 0.1, 0.1, 0.05, 0.05]));
}
