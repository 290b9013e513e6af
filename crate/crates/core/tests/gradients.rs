mod common;

use shortfuse::layers::{gradient_audit, lstm_params_to_tape, lstm_sequence, HybridLSTMCellParams};
use shortfuse::numeric::{grad_check, Axis, Tape, Tensor, DEFAULT_STEP, PASS_TOLERANCE};
use shortfuse::rng::derived_rng;

#[test]
fn every_layer_type_passes_across_seeds() {
    for seed in 0..3 {
        for (kind, reports) in gradient_audit(seed, 10).unwrap() {
            for (r, report) in reports.iter().enumerate() {
                assert!(
                    report.passed,
                    "{} seed {seed} run {r}: {:.3e}",
                    kind.name(),
                    report.max_relative_error
                );
            }
        }
    }
}

#[test]
fn lstm_mean_output_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = derived_rng(seed, &[]);
        let (hidden, n, t, d) = (3, 2, 5, 3);
        let p = HybridLSTMCellParams {
            w: std::array::from_fn(|_| common::uniform(&mut rng, vec![hidden, hidden + n])),
            ws: std::array::from_fn(|_| common::uniform(&mut rng, vec![hidden, d])),
            b: std::array::from_fn(|_| common::uniform(&mut rng, vec![hidden, 1])),
        };
        let mut tape = Tape::new();
        let x = tape.input(common::uniform(&mut rng, vec![n, t]));
        let s = tape.input(common::uniform(&mut rng, vec![d, 1]));
        let nodes = lstm_params_to_tape(&mut tape, &p, Some(s));
        let hs = lstm_sequence(&mut tape, &nodes, x, hidden).unwrap();
        let all = tape.concat(&hs, Axis::Cols).unwrap();
        let total = tape.sum(all).unwrap();
        let loss = tape.scale(total, 1.0 / (hidden * t) as f64).unwrap();
        let report = grad_check(&tape, loss, &tape.leaves(), DEFAULT_STEP).unwrap();
        assert!(report.passed, "seed {seed}: {:.3e}", report.max_relative_error);
        assert!(report.max_relative_error < PASS_TOLERANCE);
    }
}

#[test]
fn reverse_accumulation_is_linear_in_the_seed() {
    let mut rng = derived_rng(4, &[]);
    let mut tape = Tape::new();
    let w = tape.param(common::uniform(&mut rng, vec![3, 4]));
    let x = tape.input(common::uniform(&mut rng, vec![4, 2]));
    let z = tape.matmul(w, x).unwrap();
    let y = tape.tanh(z).unwrap();
    let u = common::uniform(&mut rng, vec![3, 2]);
    let v = common::uniform(&mut rng, vec![3, 2]);
    let (a, b) = (0.7, -1.9);
    let combined = Tensor::new(
        vec![3, 2],
        u.data().iter().zip(v.data()).map(|(p, q)| a * p + b * q).collect(),
    )
    .unwrap();
    let gu = tape.backward_with_seed(y, u).unwrap();
    let gv = tape.backward_with_seed(y, v).unwrap();
    let gc = tape.backward_with_seed(y, combined).unwrap();
    for ((p, q), c) in gu.leaf(w).data().iter().zip(gv.leaf(w).data()).zip(gc.leaf(w).data()) {
        assert!((a * p + b * q - c).abs() < 1e-12);
    }
}
