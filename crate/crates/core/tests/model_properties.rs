mod common;

use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synlm::corpus::vocab::WordId;
use synlm::decoder::{best_parse, BeamConfig};
use synlm::model::slm::DEFAULT_EOS_EPSILON;
use synlm::model::{Hypothesis, Phase, Slm};
use synlm::reestimation::seed_l2r;

fn model(seed: u64) -> Slm {
    let v = vocab(&["a", "b", "c"], &["X", "Y"], &["P", "Q"]);
    let words = predictable_words(&v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    seed_l2r(&irregular_model(&v, &all_sentences(&words, 2), &mut rng, DEFAULT_EOS_EPSILON))
}

/// Every state visited along a sampled derivation.
fn visited_states(m: &Slm, seed: u64) -> Vec<Hypothesis> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = loop {
        if let Some(d) = sample_derivation(m, &mut rng, 8) {
            break d;
        }
    };
    let mut out = Vec::new();
    synlm::model::walk_derivation(&d, &m.vocab, m.parser_mode, |h, _| out.push(h.clone())).unwrap();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn components_normalize(mseed in 0u64..4, seed in any::<u64>()) {
        let m = model(mseed);
        for h in visited_states(&m, seed) {
            match h.phase() {
                Phase::AwaitingWord => {
                    let dist = m.word_distribution(&h);
                    prop_assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert_eq!(dist[0], 0.0);
                    // Smoothing keeps every word reachable.
                    prop_assert!(dist[1..].iter().all(|&p| p > 0.0));
                    let l2r: f64 = (1..m.vocab.num_words() as WordId).map(|w| m.l2r_word_prob(&h, w)).sum();
                    prop_assert!((l2r - 1.0).abs() < 1e-9);
                    for w in 2..m.vocab.num_words() as WordId {
                        let tags = m.tag_distribution(&h, w);
                        prop_assert!((tags.iter().map(|t| t.1).sum::<f64>() - 1.0).abs() < 1e-9);
                        prop_assert!(tags.iter().all(|t| t.1 > 0.0));
                    }
                }
                Phase::AwaitingAction => {
                    let acts = m.action_distribution(&h);
                    prop_assert!((acts.iter().map(|a| a.1).sum::<f64>() - 1.0).abs() < 1e-9);
                    prop_assert!(acts.iter().all(|a| a.1 > 0.0));
                }
                Phase::Complete => {}
            }
        }
    }

    #[test]
    fn argmax_ignores_log_transform(mseed in 0u64..4, words in prop::collection::vec(3u32..6, 0..4)) {
        let m = model(mseed);
        let parses = scored_parses(&m, &words);
        let by_prob = parses.iter().map(|(_, lp)| lp.exp()).fold(0.0, f64::max);
        let (best, lp) = best_parse(&m, &frame(&words), &BeamConfig::unbounded()).unwrap();
        let score = parses.iter().find(|(d, _)| *d == best).unwrap().1;
        prop_assert!((score.exp() - by_prob).abs() <= 1e-12 * by_prob);
        prop_assert!((lp - score).abs() < 1e-9);
    }
}
