use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{class_distribution, compute_metrics, PartLabel};

/// Independent count: for every class, scan all points and classify each
/// (pred, gt) pair against that class.
fn brute_force(pred: &[PartLabel], gt: &[PartLabel]) -> ([f64; 3], [f64; 3], [f64; 3], f64) {
    let (mut re, mut pr, mut iou) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for (c, class) in PartLabel::ALL.into_iter().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
        for i in 0..pred.len() {
            match (pred[i] == class, gt[i] == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let div = |a: u64, b: u64| if b == 0 { 1.0 } else { a as f64 / b as f64 };
        re[c] = div(tp, tp + fn_);
        pr[c] = div(tp, tp + fp);
        iou[c] = div(tp, tp + fp + fn_);
    }
    let correct = pred.iter().zip(gt).filter(|(a, b)| a == b).count();
    (re, pr, iou, correct as f64 / pred.len() as f64)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<PartLabel> {
    (0..n).map(|_| PartLabel::ALL[rng.random_range(0..3)]).collect()
}

#[test]
fn matches_brute_force_on_seeded_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let pred = random_labels(&mut rng, 1000);
    let gt = random_labels(&mut rng, 1000);
    let report = compute_metrics(&pred, &gt).unwrap();
    let (re, pr, iou, acc) = brute_force(&pred, &gt);
    for c in 0..3 {
        assert_eq!(report.per_class[c].recall, re[c]);
        assert_eq!(report.per_class[c].precision, pr[c]);
        assert_eq!(report.per_class[c].iou, iou[c]);
    }
    assert_eq!(report.acc, acc);
    assert_eq!(report.miou, (iou[0] + iou[1] + iou[2]) / 3.0);
}

fn labels_strategy() -> impl Strategy<Value = (Vec<PartLabel>, Vec<PartLabel>)> {
    (1usize..200).prop_flat_map(|n| {
        let label = prop::sample::select(PartLabel::ALL.to_vec());
        (prop::collection::vec(label.clone(), n), prop::collection::vec(label, n))
    })
}

proptest! {
    #[test]
    fn iou_bounded_by_recall_and_precision((pred, gt) in labels_strategy()) {
        let r = compute_metrics(&pred, &gt).unwrap();
        for m in r.per_class {
            prop_assert!(m.iou <= m.recall.min(m.precision));
            prop_assert!((0.0..=1.0).contains(&m.iou));
        }
        prop_assert!((0.0..=1.0).contains(&r.acc));
    }

    #[test]
    fn accuracy_is_frequency_weighted_recall((pred, gt) in labels_strategy()) {
        let r = compute_metrics(&pred, &gt).unwrap();
        let freq = class_distribution(&gt).unwrap();
        let weighted: f64 = (0..3).map(|c| freq[c] * r.per_class[c].recall).sum();
        prop_assert!((weighted - r.acc).abs() < 1e-12);
    }

    #[test]
    fn brute_force_agrees((pred, gt) in labels_strategy()) {
        let r = compute_metrics(&pred, &gt).unwrap();
        let (re, pr, iou, acc) = brute_force(&pred, &gt);
        for c in 0..3 {
            prop_assert_eq!(r.per_class[c].recall, re[c]);
            prop_assert_eq!(r.per_class[c].precision, pr[c]);
            prop_assert_eq!(r.per_class[c].iou, iou[c]);
        }
        prop_assert_eq!(r.acc, acc);
    }

    #[test]
    fn distribution_sums_to_one(labels in prop::collection::vec(prop::sample::select(PartLabel::ALL.to_vec()), 1..300)) {
        let d = class_distribution(&labels).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
