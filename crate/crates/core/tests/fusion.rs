#![allow(clippy::needless_range_loop)]

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use shortfuse::fusion::{cmi_estimate, cmi_value, fusion_recommended};
use shortfuse::numeric::Tensor;
use shortfuse::pipeline::{synth_dataset, LabelRule, SynthSpec};
use shortfuse::rng::derived_rng;

fn column(v: Vec<f64>) -> Tensor {
    let n = v.len();
    Tensor::new(vec![n, 1], v).unwrap()
}

/// `A = C + e1`, `B = C + ρ·e1 + sqrt(1-ρ²)·e2`: partial correlation ρ given C.
fn gaussian_triple(n: usize, rho: f64, seed: u64) -> (Tensor, Tensor, Tensor) {
    let mut rng = derived_rng(seed, &[]);
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let [z, e1, e2]: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        c.push(z);
        a.push(z + e1);
        b.push(z + rho * e1 + (1.0 - rho * rho).sqrt() * e2);
    }
    (column(a), column(b), column(c))
}

#[test]
fn gaussian_cmi_matches_closed_form() {
    let target = -0.5 * (1.0f64 - 0.36).ln();
    let (a, b, c) = gaussian_triple(5000, 0.6, 1);
    let v = cmi_value(&a, &b, &c, 5, 0).unwrap();
    assert!((v - target).abs() < 0.05, "{v} vs {target}");
}

#[test]
fn independent_uniforms_give_no_dependence() {
    let mut rng = derived_rng(2, &[]);
    let mut draw = || column((0..2000).map(|_| rng.random::<f64>()).collect());
    let (a, b, c) = (draw(), draw(), draw());
    let e = cmi_estimate(&a, &b, &c, 5).unwrap();
    assert!(e.value.abs() < 0.05, "{}", e.value);
    assert!(e.permutation_pvalue > 0.05, "{}", e.permutation_pvalue);
}

/// Plug-in CMI of `Y = X xor S` on the empirical joint of the bits.
fn discrete_cmi(y: &[bool], s: &[bool], x: &[bool]) -> f64 {
    let n = y.len() as f64;
    let mut joint = [[[0.0; 2]; 2]; 2];
    for i in 0..y.len() {
        joint[y[i] as usize][s[i] as usize][x[i] as usize] += 1.0 / n;
    }
    let mut total = 0.0;
    for yi in 0..2 {
        for si in 0..2 {
            for xi in 0..2 {
                let p = joint[yi][si][xi];
                if p == 0.0 {
                    continue;
                }
                let px: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| joint[a][b][xi])
                    .sum();
                let pyx: f64 = (0..2).map(|b| joint[yi][b][xi]).sum();
                let psx: f64 = (0..2).map(|a| joint[a][si][xi]).sum();
                total += p * (p * px / (pyx * psx)).ln();
            }
        }
    }
    total
}

#[test]
fn xor_dependence_is_ln_two() {
    let mut rng = derived_rng(5, &[]);
    let n = 1000;
    let (mut yb, mut sb, mut xb) = (Vec::new(), Vec::new(), Vec::new());
    let (mut y, mut s, mut x) = (Vec::new(), Vec::new(), Vec::new());
    let enc = |b: bool, rng: &mut shortfuse::rng::Rng| if b { 1.0 } else { -1.0 } + 0.01 * rng.random::<f64>();
    for _ in 0..n {
        let (xi, si) = (rng.random_bool(0.5), rng.random_bool(0.5));
        xb.push(xi);
        sb.push(si);
        yb.push(xi ^ si);
        x.push(enc(xi, &mut rng));
        s.push(enc(si, &mut rng));
        y.push(enc(xi ^ si, &mut rng));
    }
    let oracle = discrete_cmi(&yb, &sb, &xb);
    assert!((oracle - 2f64.ln()).abs() < 0.01);
    let e = cmi_estimate(&column(y), &column(s), &column(x), 5).unwrap();
    assert!((e.value - 2f64.ln()).abs() < 0.1, "{}", e.value);
    assert!(e.permutation_pvalue < 0.01);
}

fn decision(rule: LabelRule) -> bool {
    let syn = synth_dataset(&SynthSpec {
        num_samples: 1000,
        noise: 0.0,
        rule,
        ..Default::default()
    })
    .unwrap();
    fusion_recommended(&syn.dataset, 5, 0.05).unwrap().fuse
}

#[test]
fn interaction_labels_recommend_fusion() {
    assert!(decision(LabelRule::Fusion));
}

#[test]
fn covariate_only_labels_do_not() {
    assert!(!decision(LabelRule::CovariateOnly));
}

#[test]
fn series_only_labels_do_not() {
    assert!(!decision(LabelRule::SeriesOnly));
}

#[test]
fn independent_labels_do_not() {
    assert!(!decision(LabelRule::Independent));
}
