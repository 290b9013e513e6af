use proptest::prelude::*;
use shortfuse::layers::{covariate_dropout_mask, interleave_covariates, softmax_output, CovariateVector};
use shortfuse::numeric::Tensor;
use shortfuse::pipeline::{nested_split, resample_linear};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..8), shift in -1e3f64..1e3) {
        let p = softmax_output(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        for (a, b) in p.iter().zip(softmax_output(&shifted)) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn resampling_stays_within_range(values in prop::collection::vec(-10.0f64..10.0, 2..60), t in 2usize..120) {
        let out = resample_linear(&values, t);
        prop_assert_eq!(out.len(), t);
        prop_assert_eq!(out[0], values[0]);
        prop_assert_eq!(out[t - 1], values[values.len() - 1]);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    }

    #[test]
    fn splits_partition_the_data(size in 20usize..400, m in 1usize..4, n in 1usize..4, seed in any::<u64>()) {
        let plan = nested_split(size, m, n, seed).unwrap();
        prop_assert_eq!(plan.outer.len(), m);
        for o in &plan.outer {
            prop_assert!(!o.test.is_empty());
            let mut all: Vec<usize> = o.test.iter().chain(&o.train).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..size).collect::<Vec<_>>());
            for i in &o.inner {
                prop_assert!(!i.validation.is_empty());
                let mut pool: Vec<usize> = i.validation.iter().chain(&i.train).copied().collect();
                pool.sort_unstable();
                prop_assert_eq!(&pool, &o.train);
            }
        }
        prop_assert_eq!(plan, nested_split(size, m, n, seed).unwrap());
    }

    #[test]
    fn dropout_masks_are_binary_and_seeded(d in 1usize..10, out in 1usize..10, rate in 0.0f64..=0.5, seed in any::<u64>()) {
        let a = covariate_dropout_mask(d, out, rate, seed).unwrap();
        prop_assert_eq!(a.shape(), &[out, d]);
        prop_assert!(a.data().iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert_eq!(a, covariate_dropout_mask(d, out, rate, seed).unwrap());
    }

    #[test]
    fn replication_appends_constant_rows(n in 1usize..4, t in 1usize..10, s in prop::collection::vec(-5.0f64..5.0, 0..4)) {
        let x = Tensor::new(vec![n, t], (0..n * t).map(|i| i as f64).collect()).unwrap();
        let out = interleave_covariates(&x, &CovariateVector::new(s.clone()));
        prop_assert_eq!(out.shape(), &[n + s.len(), t]);
        prop_assert_eq!(&out.data()[..n * t], x.data());
        for (k, v) in s.iter().enumerate() {
            prop_assert!(out.row_slice(n + k).iter().all(|e| e == v));
        }
    }
}
