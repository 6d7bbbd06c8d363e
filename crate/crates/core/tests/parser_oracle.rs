use pcfg_core::oracle::{self, max_log_prob, total_prob};
use pcfg_core::parser::{tree_rule_counts, Parser};
use pcfg_core::{Error, SymbolId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn chart_matches_enumeration_on_random_grammars() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut parsed = 0;
    for _ in 0..60 {
        let g = oracle::random_grammar(&mut rng, 6, 3, 8);
        let parser = Parser::new(&g);
        let terminals: Vec<SymbolId> = g.symbols().terminals().collect();
        for s in oracle::all_sentences(&terminals, 5) {
            let derivs = oracle::sentence_derivations(&g, &s);
            let vit = parser.viterbi(&s);
            let inside = parser.inside_logprob(&s);
            match max_log_prob(&derivs).filter(|v| v.is_finite()) {
                None => {
                    assert!(matches!(vit, Err(Error::NoParse { .. })));
                    assert!(matches!(inside, Err(Error::NoParse { .. })));
                }
                Some(best) => {
                    parsed += 1;
                    let (tree, lp) = vit.unwrap();
                    assert!(close(lp, best, 1e-12), "{lp} vs {best}");
                    assert!(close(tree.log_prob(&g), lp, 1e-12));
                    assert_eq!(tree.yield_symbols(&g), s);
                    let z = total_prob(&derivs);
                    let ip = inside.unwrap().exp();
                    assert!(close(ip, z, 1e-12), "{ip} vs {z}");
                }
            }
        }
    }
    assert!(parsed > 100, "too few parseable cases: {parsed}");
}

#[test]
fn rule_counts_of_a_tree_sum_to_node_count() {
    let g = pcfg_core::grammar::read_grammar("start: S\nS -> S S 0.4\nS -> 'a' 0.6\n".as_bytes())
        .unwrap();
    let a = g.symbols().terminal("a").unwrap();
    let (t, _) = Parser::new(&g).viterbi(&[a, a, a, a]).unwrap();
    let counts = tree_rule_counts(&t);
    assert_eq!(counts[&0], 3);
    assert_eq!(counts[&1], 4);
    assert_eq!(counts.values().sum::<u64>() as usize, t.num_nodes());
}
