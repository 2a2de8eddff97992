use nalgebra::DMatrix;
use proptest::prelude::*;

use contre::augment::{sample_view, AugmentPolicy};
use contre::data_io::{decode_feature, encode_feature};
use contre::stats::{self, WithinWeighting};

fn distinct(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::hash_set(-1_000_000i64..1_000_000, len).prop_map(|s| s.into_iter().map(|v| v as f64 / 7.0).collect())
}

proptest! {
    #[test]
    fn spearman_is_symmetric_and_bounded(
        (x, y) in (3usize..40).prop_flat_map(|n| (distinct(n), distinct(n)))
    ) {
        let a = stats::spearman(&x, &y).unwrap();
        let b = stats::spearman(&y, &x).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn spearman_ignores_monotone_maps(
        (x, y) in (3usize..40).prop_flat_map(|n| (distinct(n), distinct(n)))
    ) {
        let squashed: Vec<f64> = x.iter().map(|v| (v / 1e5).atan() * 3.0 + 1.0).collect();
        prop_assert_eq!(stats::spearman(&x, &y).unwrap(), stats::spearman(&squashed, &y).unwrap());
        let flipped: Vec<f64> = x.iter().map(|v| -v).collect();
        let r = stats::spearman(&x, &y).unwrap();
        prop_assert!((stats::spearman(&flipped, &y).unwrap() + r).abs() < 1e-12);
    }

    #[test]
    fn spearman_ignores_joint_permutation(
        (x, y, seed) in (3usize..30).prop_flat_map(|n| (distinct(n), distinct(n), any::<u64>()))
    ) {
        let mut order: Vec<usize> = (0..x.len()).collect();
        let mut s = seed;
        for i in (1..order.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let px: Vec<f64> = order.iter().map(|&i| x[i]).collect();
        let py: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(stats::spearman(&x, &y).unwrap(), stats::spearman(&px, &py).unwrap());
    }

    #[test]
    fn scatter_parts_sum_to_total(
        rows in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 3), 6..30)
    ) {
        let n = rows.len();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let x = DMatrix::from_fn(n, 3, |i, k| rows[i][k]);
        let pair = stats::scatter_matrices(&x, &labels, WithinWeighting::Standard).unwrap();
        let total = stats::total_scatter(&x);
        let err = (&pair.s_b + &pair.s_w - &total).norm();
        prop_assert!(err <= 1e-10 * total.norm().max(1.0));
    }

    #[test]
    fn fisher_ratio_survives_scaling_and_shift(
        rows in proptest::collection::vec(proptest::collection::vec(-5.0f64..5.0, 2), 12..40),
        scale in 0.1f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let n = rows.len();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 2, |i, k| rows[i][k] + labels[i] as f64);
        let y = x.map(|v| v * scale + shift);
        let ratio = |m: &DMatrix<f64>| {
            stats::fisher_ratio(&stats::scatter_matrices(m, &labels, WithinWeighting::Standard).unwrap(), 0.0)
        };
        if let (Ok(a), Ok(b)) = (ratio(&x), ratio(&y)) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
        }
    }

    #[test]
    fn view_sampling_ignores_call_order(ids in proptest::collection::vec("[a-z0-9]{1,8}", 1..20), seed in any::<u64>()) {
        let policy = AugmentPolicy { master_seed: seed, ..AugmentPolicy::default() };
        let forward: Vec<_> = ids.iter().map(|id| sample_view(&policy, id, 1).unwrap()).collect();
        let backward: Vec<_> = ids.iter().rev().map(|id| sample_view(&policy, id, 1).unwrap()).collect();
        prop_assert!(forward.iter().eq(backward.iter().rev()));
    }

    #[test]
    fn feature_encoding_is_lossless(values in proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..64)) {
        let back = decode_feature(&encode_feature(&values)).unwrap();
        prop_assert_eq!(back.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
