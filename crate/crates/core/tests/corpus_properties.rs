use proptest::prelude::*;
use synlm::corpus::{binarize, build_vocab, derivation_of, prepare_tree, replay, HeadRules, HeadedTree, Side, Tree};
use synlm::model::Move;

fn tree_strategy() -> impl Strategy<Value = Tree> {
    let leaf = (prop::sample::select(vec!["N", "V", "D"]), prop::sample::select(vec!["a", "b", "c", "d"]))
        .prop_map(|(p, w)| Tree::leaf(p, w));
    leaf.prop_recursive(4, 24, 4, |inner| {
        (prop::sample::select(vec!["S", "NP", "VP"]), prop::collection::vec(inner, 1..5))
            .prop_map(|(l, kids)| Tree::node(l, kids))
    })
}

fn check_heads(t: &HeadedTree) {
    if let HeadedTree::Node { head, left, right, .. } = t {
        let words: Vec<_> = t.words();
        assert!(words.contains(&head.word), "head not among dominated leaves");
        check_heads(left);
        check_heads(right);
    }
}

proptest! {
    #[test]
    fn binarization_keeps_yield(t in tree_strategy()) {
        let b = binarize(&t);
        prop_assert_eq!(b.words(), t.words());
    }

    #[test]
    fn derivation_round_trips(t in tree_strategy(), left in any::<bool>()) {
        let vocab = build_vocab(&[binarize(&t)], 100).unwrap();
        let rules = if left { HeadRules::new(Side::Left) } else { HeadRules::default() };
        let headed = prepare_tree(&t, &rules, &vocab).unwrap();
        check_heads(&headed);
        let d = derivation_of(&headed, &vocab).unwrap();
        let predicts = d.moves.iter().filter(|m| matches!(m, Move::Predict(_))).count();
        prop_assert_eq!(predicts, t.words().len() + 1);
        prop_assert_eq!(replay(&d, &vocab).unwrap(), headed);
    }
}
