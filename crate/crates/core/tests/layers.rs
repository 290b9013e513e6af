mod common;

use rand::Rng;
use shortfuse::layers::{
    hybrid_conv1d, hybrid_lstm_step, interleave_covariates, max_pool, Activation, CovariateVector, HybridConvFilter,
    HybridLSTMCellParams,
};
use shortfuse::numeric::Tensor;
use shortfuse::rng::derived_rng;

#[test]
fn zero_covariates_reduce_to_plain_layers() {
    assert_eq!(common::zero_covariate_matches(3, 100), [100; 3]);
}

#[test]
fn plain_conv_oracle_matches_hand_values() {
    let x = Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
    let kernel = Tensor::new(vec![1, 1, 2], vec![1.0, -1.0]).unwrap();
    assert_eq!(common::plain_conv1d(&x, &kernel, &[0.5], 1, false), vec![vec![-0.5; 3]]);
}

#[test]
fn nonzero_covariates_shift_every_position_equally() {
    let mut rng = derived_rng(8, &[]);
    let x = common::uniform(&mut rng, vec![2, 9]);
    let f = HybridConvFilter::new(
        common::uniform(&mut rng, vec![3, 2, 3]),
        common::uniform(&mut rng, vec![3, 4]),
        common::uniform(&mut rng, vec![3]),
    )
    .unwrap();
    let s = CovariateVector::new(vec![0.3, -1.2, 0.7, 2.0]);
    let base = hybrid_conv1d(&x, &CovariateVector::zeros(4), &f, 1, Activation::Identity).unwrap();
    let shifted = hybrid_conv1d(&x, &s, &f, 1, Activation::Identity).unwrap();
    for j in 0..3 {
        let vs: f64 = (0..4).map(|k| f.covariate_weights.at(j, k) * s.as_slice()[k]).sum();
        for tau in 0..7 {
            assert!((shifted.at(j, tau) - base.at(j, tau) - vs).abs() < 1e-12);
        }
    }
}

#[test]
fn lstm_state_stays_bounded() {
    let mut rng = derived_rng(12, &[]);
    let p = HybridLSTMCellParams {
        w: std::array::from_fn(|_| common::uniform(&mut rng, vec![4, 6]).map(|v| 5.0 * v)),
        ws: std::array::from_fn(|_| common::uniform(&mut rng, vec![4, 3])),
        b: std::array::from_fn(|_| common::uniform(&mut rng, vec![4, 1])),
    };
    let (mut h, mut c) = (Tensor::zeros(vec![4, 1]), Tensor::zeros(vec![4, 1]));
    let s = CovariateVector::new(vec![1.0, -2.0, 0.5]);
    for step in 0..50 {
        let x = common::uniform(&mut rng, vec![2, 1]);
        (h, c) = hybrid_lstm_step(&x, &h, &c, &s, &p).unwrap();
        assert!(h.data().iter().all(|v| v.abs() < 1.0), "step {step}");
        assert!(c.data().iter().all(|v| v.abs() <= (step + 1) as f64));
    }
}

#[test]
fn replicated_covariates_are_constant_rows() {
    let mut rng = derived_rng(2, &[]);
    let x = common::uniform(&mut rng, vec![2, 5]);
    let s = CovariateVector::new(vec![rng.random(), rng.random()]);
    let out = interleave_covariates(&x, &s);
    assert_eq!(out.shape(), &[4, 5]);
    for r in 2..4 {
        assert!(out.row_slice(r).iter().all(|&v| v == s.as_slice()[r - 2]));
    }
}

#[test]
fn pooling_drops_the_remainder() {
    let x = Tensor::from_rows(&[vec![1.0, 3.0, 2.0, 5.0, 9.0]]).unwrap();
    assert_eq!(max_pool(&x, 2).unwrap().data(), &[3.0, 5.0]);
    assert!(max_pool(&x, 6).is_err());
}
