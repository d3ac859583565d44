use std::collections::BTreeMap;

use pet_router::embed::{cosine_distance, triplet_loss};
use pet_router::eval::{kfold, ndcg};
use pet_router::nn::softmax;
use pet_router::pets::PetId;
use pet_router::rank::{label, r_score};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Vec<(u64, bool)>> {
    prop::collection::vec((2u64..5000, any::<bool>()), 9)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert_eq!(p.len(), logits.len());
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_ignores_shifts(logits in prop::collection::vec(-50.0f64..50.0, 1..12), shift in -100.0f64..100.0) {
        let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
        for (a, b) in softmax(&logits).iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn label_does_not_depend_on_log_base(inst in instance(), base in 1.5f64..20.0) {
        let max = inst.iter().map(|(t, _)| *t).max().unwrap();
        let natural: BTreeMap<PetId, f64> =
            PetId::ALL.iter().zip(&inst).map(|(p, (t, ok))| (*p, r_score(*t, max, *ok).unwrap())).collect();
        let other: BTreeMap<PetId, f64> = PetId::ALL
            .iter()
            .zip(&inst)
            .map(|(p, (t, ok))| (*p, f64::from(u8::from(*ok)) * (max as f64).log(base) - (*t as f64).log(base)))
            .collect();
        prop_assert_eq!(label(&natural), label(&other));
    }

    #[test]
    fn cosine_distance_is_bounded_and_symmetric(
        u in prop::collection::vec(-10.0f64..10.0, 4),
        v in prop::collection::vec(-10.0f64..10.0, 4),
    ) {
        prop_assume!(u.iter().any(|x| x.abs() > 1e-3) && v.iter().any(|x| x.abs() > 1e-3));
        let d = cosine_distance(&u, &v).unwrap();
        prop_assert!((0.0..=2.0).contains(&d));
        prop_assert!((d - cosine_distance(&v, &u).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = u.iter().map(|x| 3.5 * x).collect();
        prop_assert!(cosine_distance(&u, &scaled).unwrap().abs() < 1e-12);
    }

    #[test]
    fn triplet_loss_never_negative(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        p in prop::collection::vec(-5.0f64..5.0, 3),
        n in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        prop_assume!([&a, &p, &n].iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)));
        prop_assert!(triplet_loss(&a, &p, &n, 1.0).unwrap() >= 0.0);
    }

    #[test]
    fn ndcg_in_unit_interval(rel in prop::collection::vec(0.0f64..3.0, 1..9), seed in any::<u64>()) {
        let ids: Vec<String> = (0..rel.len()).map(|i| i.to_string()).collect();
        let order: Vec<usize> = kfold(&ids, 1, seed).unwrap().folds[0].test.iter().map(|s| s.parse().unwrap()).collect();
        let v = ndcg(&order, &rel).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
    }
}

#[test]
fn r_score_domain() {
    assert!(r_score(1, 10, true).is_err());
    assert!(r_score(11, 10, true).is_err());
    assert_eq!(r_score(10, 10, true).unwrap(), 0.0);
    assert!((r_score(10, 100, false).unwrap() + 10f64.ln()).abs() < 1e-12);
}
