mod common;

use common::set;
use proptest::prelude::*;
use rsma_core::model::*;
use rsma_core::schemes::{build_scheme, SchemeKind};

#[test]
fn two_user_streams() {
    assert_eq!(
        enumerate_streams(2, |_| true).unwrap(),
        vec![set(&[1, 2]), set(&[1]), set(&[2])]
    );
}

#[test]
fn three_user_streams() {
    let s = enumerate_streams(3, |_| true).unwrap();
    assert_eq!(s.len(), 7);
    assert_eq!(s[0], set(&[1, 2, 3]));
    assert_eq!(s[6], set(&[3]));
    assert_eq!(&s[1..4], &[set(&[1, 2]), set(&[1, 3]), set(&[2, 3])]);
}

#[test]
fn one_layer_filter() {
    let s = enumerate_streams(3, |a| a.order() == 1 || a.order() == 3).unwrap();
    assert_eq!(s, vec![set(&[1, 2, 3]), set(&[1]), set(&[2]), set(&[3])]);
}

#[test]
fn zero_users_rejected() {
    assert!(enumerate_streams(0, |_| true).is_err());
    assert!(StreamLayout::full(0).is_err());
}

#[test]
fn streams_for_user_examples() {
    let full2 = StreamLayout::full(2).unwrap();
    assert_eq!(streams_for_user(1, &full2).unwrap(), vec![set(&[1, 2]), set(&[1])]);

    let full3 = StreamLayout::full(3).unwrap()
        .with_decoding_order(2, &[set(&[1, 2]), set(&[1, 3]), set(&[2, 3])])
        .unwrap();
    assert_eq!(
        streams_for_user(1, &full3).unwrap(),
        vec![set(&[1, 2, 3]), set(&[1, 2]), set(&[1, 3]), set(&[1])]
    );

    let group = build_scheme(&SchemeKind::ScsicPerGroup(vec![vec![1], vec![2, 3]]), 3).unwrap();
    assert_eq!(streams_for_user(2, &group).unwrap(), vec![set(&[2, 3])]);
    assert!(streams_for_user(4, &full3).is_err());
    assert!(streams_for_user(0, &full3).is_err());
}

#[test]
fn decoding_order_counts() {
    let full3 = StreamLayout::full(3).unwrap();
    let two = enumerate_decoding_orders(&full3, 2).unwrap();
    assert_eq!(two.len(), 6);
    for p in &two {
        let mut sorted = p.clone();
        sorted.sort();
        assert_eq!(sorted, vec![set(&[1, 2]), set(&[1, 3]), set(&[2, 3])]);
    }
    assert_eq!(enumerate_decoding_orders(&full3, 3).unwrap().len(), 1);
    let full2 = StreamLayout::full(2).unwrap();
    assert_eq!(enumerate_decoding_orders(&full2, 1).unwrap().len(), 2);
    let mulp = build_scheme(&SchemeKind::Mulp, 3).unwrap();
    assert!(enumerate_decoding_orders(&mulp, 2).unwrap().is_empty());
    assert!(enumerate_decoding_orders(&full3, 4).is_err());
    assert!(enumerate_decoding_orders(&StreamLayout::full(5).unwrap(), 2).is_err());
}

#[test]
fn variants_cover_middle_orders() {
    assert_eq!(decoding_order_variants(&StreamLayout::full(2).unwrap()).unwrap().len(), 1);
    let v3 = decoding_order_variants(&StreamLayout::full(3).unwrap()).unwrap();
    assert_eq!(v3.len(), 6);
    let labels: std::collections::BTreeSet<String> = v3.iter().map(|l| l.order_label()).collect();
    assert_eq!(labels.len(), 6);
    assert_eq!(decoding_order_variants(&StreamLayout::full(4).unwrap()).unwrap().len(), 720 * 24);
}

#[test]
fn instance_invariants() {
    assert!(ProblemInstance::new(vec![1.0], vec![0.0], vec![1.0]).is_ok());
    assert!(ProblemInstance::new(vec![], vec![0.0], vec![1.0]).is_err());
    assert!(ProblemInstance::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
    assert!(ProblemInstance::new(vec![1.0], vec![-0.1], vec![1.0]).is_err());
    assert!(ProblemInstance::new(vec![1.0], vec![0.0], vec![0.0]).is_err());
    assert!(ProblemInstance::new(vec![1.0], vec![0.0, 0.0], vec![1.0]).is_err());
    let i = ProblemInstance::equal_split(100.0, 2, vec![0.0; 2], vec![1.0; 2]).unwrap();
    assert_eq!(i.per_bs_power(), &[50.0, 50.0]);
    assert_eq!(i.total_power(), 100.0);
    assert_eq!(i.noise_variance(), &[1.0, 1.0]);
}

#[test]
fn user_set_rules() {
    assert!(UserSet::from_members(&[]).is_err());
    assert!(UserSet::from_members(&[0]).is_err());
    assert_eq!(set(&[3, 1]), set(&[1, 3]));
    assert_eq!(set(&[1, 3]).order(), 2);
    assert_eq!(set(&[1, 3]).to_string(), "{1,3}");
    assert!(set(&[2]).is_subset_of(set(&[1, 2])));
}

#[test]
fn layout_rejects_duplicates_and_bad_orders() {
    assert!(StreamLayout::new(2, vec![set(&[1]), set(&[1])]).is_err());
    assert!(StreamLayout::new(2, vec![set(&[1, 3])]).is_err());
    let full = StreamLayout::full(3).unwrap();
    assert!(full.clone().with_decoding_order(2, &[set(&[1, 2]), set(&[1, 3])]).is_err());
    assert!(full.with_decoding_order(2, &[set(&[1, 2]), set(&[1, 2]), set(&[2, 3])]).is_err());
}

#[test]
fn precoder_power() {
    let p = PrecoderSet::new(
        2,
        vec![vec![common::c(1.0, 1.0), common::c(0.0, 0.0)], vec![common::c(0.5, 0.0), common::c(0.0, 2.0)]],
    )
    .unwrap();
    assert_eq!(p.per_bs_power(), vec![2.25, 4.0]);
    assert_eq!(p.max_power_residual(&[3.0, 3.0]), 1.0);
    let mut q = p.clone();
    q.clip_to_budgets(&[3.0, 3.0]);
    assert!(q.max_power_residual(&[3.0, 3.0]) <= 1e-12);
    assert!(PrecoderSet::new(2, vec![vec![common::c(1.0, 0.0)]]).is_err());
}

proptest! {
    #[test]
    fn full_layout_counts(k in 1usize..=6) {
        let full = StreamLayout::full(k).unwrap();
        prop_assert_eq!(full.num_streams(), (1 << k) - 1);
        for user in 1..=k {
            prop_assert_eq!(streams_for_user(user, &full).unwrap().len(), 1 << (k - 1));
        }
    }

    #[test]
    fn enumeration_sorted_and_deterministic(k in 1usize..=6, mask in any::<u64>()) {
        let filter = |a: &UserSet| (mask >> (a.bits() % 64)) & 1 == 1 || a.order() == 1;
        let a = enumerate_streams(k, filter).unwrap();
        let b = enumerate_streams(k, filter).unwrap();
        prop_assert_eq!(&a, &b);
        for w in a.windows(2) {
            let key = |s: UserSet| (std::cmp::Reverse(s.order()), s.member_vec());
            prop_assert!(key(w[0]) < key(w[1]));
        }
    }

    #[test]
    fn streams_for_user_follow_pi(perm in Just(vec![set(&[1, 2]), set(&[1, 3]), set(&[2, 3])]).prop_shuffle(), user in 1usize..=3) {
        let layout = StreamLayout::full(3).unwrap().with_decoding_order(2, &perm).unwrap();
        let got = streams_for_user(user, &layout).unwrap();
        prop_assert!(got.iter().all(|s| s.contains(user)));
        prop_assert_eq!(got.len(), 4);
        let pairs: Vec<UserSet> = got.iter().copied().filter(|s| s.order() == 2).collect();
        let pos = |s: UserSet| perm.iter().position(|x| *x == s).unwrap();
        prop_assert!(pos(pairs[0]) < pos(pairs[1]));
        for w in got.windows(2) {
            prop_assert!(w[0].order() >= w[1].order());
        }
    }

    #[test]
    fn embedding_preserves_columns(k in 1usize..=3, seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mulp = build_scheme(&SchemeKind::Mulp, k).unwrap();
        let full = StreamLayout::full(k).unwrap();
        let cols = (0..k).map(|_| vec![common::c(rng.random(), rng.random()); 2]).collect();
        let p = PrecoderSet::new(2, cols).unwrap();
        let e = p.embed(&mulp, &full).unwrap();
        prop_assert_eq!(e.num_streams(), full.num_streams());
        prop_assert_eq!(e.per_bs_power(), p.per_bs_power());
        for (i, s) in mulp.streams().iter().enumerate() {
            prop_assert_eq!(e.column(full.index_of(*s).unwrap()), p.column(i));
        }
        prop_assert!(e.embed(&full, &mulp).is_err() || k == 1);
    }
}
