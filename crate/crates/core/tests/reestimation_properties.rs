mod common;

use common::*;
use proptest::prelude::*;
use synlm::corpus::{binarize, build_vocab, Vocab};
use synlm::decoder::{nbest_parses, BeamConfig};
use synlm::model::{Derivation, Slm};
use synlm::reestimation::{count_derivations, init_from_treebank, l2r_pass_iteration, seed_l2r, MixtureCache, TrainConfig};

struct Setup {
    vocab: Vocab,
    dev: Vec<Derivation>,
    check: Vec<Derivation>,
    model: Slm,
}

fn setup() -> Setup {
    let dev = fixture_trees("dev.mrg");
    let binarized: Vec<_> = dev.iter().map(binarize).collect();
    let vocab = build_vocab(&binarized, 10_000).unwrap();
    let dev = derivations(&dev, &vocab);
    let check = derivations(&fixture_trees("check.mrg"), &vocab);
    let (model, _) = init_from_treebank(&dev, &check, vocab.clone(), &TrainConfig::default()).unwrap();
    Setup { vocab, dev, check, model }
}

#[test]
fn init_is_unit_weight_accumulation() {
    let s = setup();
    let cfg = TrainConfig::default();
    let counts = count_derivations(s.dev.iter().map(|d| (d, 1.0)), &s.vocab, cfg.parser_mode).unwrap();
    assert_eq!(s.model.predictor.table, counts.predictor);
    assert_eq!(s.model.tagger.table, counts.tagger);
    assert_eq!(s.model.parser.table, counts.parser);
    assert!(!s.check.is_empty());
}

fn structure_bytes(m: &Slm) -> Vec<u8> {
    let mut m = m.clone();
    m.l2r = None;
    let mut buf = Vec::new();
    m.write(&mut buf).unwrap();
    buf
}

#[test]
fn l2r_pass_leaves_structure_untouched() {
    let s = setup();
    let seeded = seed_l2r(&s.model);
    let corpus = encode(&fixture_trees("dev.mrg"), &s.vocab);
    let check = encode(&fixture_trees("check.mrg"), &s.vocab);
    let cfg = TrainConfig::default();
    let dev_cache = MixtureCache::build(&seeded, &corpus, &cfg.beam);
    let check_cache = MixtureCache::build(&seeded, &check, &cfg.beam);
    let (next, _) = l2r_pass_iteration(&seeded, &dev_cache, &check_cache, &cfg).unwrap();
    assert_eq!(structure_bytes(&next), structure_bytes(&s.model));
    assert_ne!(next.l2r, seeded.l2r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn nbest_weights_and_move_counts(picks in prop::collection::vec(0usize..1000, 1..4), depth in 1usize..30) {
        let s = setup();
        let vocab = &s.vocab;
        let words: Vec<u32> = picks.iter().map(|p| 2 + (*p % (vocab.num_words() - 2)) as u32).collect();
        let parses = nbest_parses(&s.model, &frame(&words), &BeamConfig::new(depth, 6.9).unwrap()).unwrap();
        let total: f64 = parses.iter().map(|p| p.1).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let counts = parses[0].0.move_counts();
        prop_assert!(parses.iter().all(|(d, _)| d.move_counts() == counts));
        prop_assert!(parses.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
