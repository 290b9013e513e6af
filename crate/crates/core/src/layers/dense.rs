use super::covariates::CovariateVector;
use super::Activation;
use crate::error::{Error, Result};
use crate::numeric::{softmax, NodeId, Tape, Tensor};

/// Column-convention dense layer: `act((W·input + V·s) + b)`.
pub fn dense_graph(
    tape: &mut Tape,
    w: NodeId,
    input: NodeId,
    covariate: Option<(NodeId, NodeId)>,
    b: NodeId,
    activation: Activation,
) -> Result<NodeId> {
    let mut z = tape.matmul(w, input)?;
    if let Some((v, s)) = covariate {
        let vs = tape.matmul(v, s)?;
        z = tape.add(z, vs)?;
    }
    let z = tape.add(z, b)?;
    activation.apply(tape, z)
}

/// Hybrid fully-connected layer on plain tensors.
pub fn hybrid_fc(
    input: &Tensor,
    s: &CovariateVector,
    w: &Tensor,
    v: &Tensor,
    b: &Tensor,
    activation: Activation,
) -> Result<Tensor> {
    let (out, m) = w.dims2().ok_or_else(|| Error::shape(0, "W must be a matrix"))?;
    if input.len() != m || v.dims2() != Some((out, s.len())) || b.len() != out {
        return Err(Error::shape(
            0,
            format!(
                "W {:?}, V {:?}, b {:?} inconsistent with input {} and {} covariates",
                w.shape(),
                v.shape(),
                b.shape(),
                input.len(),
                s.len()
            ),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.input(input.reshaped(vec![m, 1])?);
    let sn = tape.input(s.column());
    let wn = tape.param(w.clone());
    let vn = tape.param(v.clone());
    let bn = tape.param(b.reshaped(vec![out, 1])?);
    let y = dense_graph(&mut tape, wn, x, Some((vn, sn)), bn, activation)?;
    Ok(tape.value(y).clone())
}

/// Class probabilities from logits, stabilised by max subtraction.
pub fn softmax_output(logits: &[f64]) -> Vec<f64> {
    softmax(logits)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_fc() {
        let y = hybrid_fc(
            &Tensor::column(&[1.0, 2.0]),
            &CovariateVector::new(vec![3.0]),
            &Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            &Tensor::from_rows(&[vec![2.0]]).unwrap(),
            &Tensor::column(&[0.0]),
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn covariate_only_fc() {
        let v = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]]).unwrap();
        let y = hybrid_fc(
            &Tensor::column(&[4.0, -1.0, 2.0]),
            &CovariateVector::new(vec![2.0, 1.0]),
            &Tensor::zeros(vec![2, 3]),
            &v,
            &Tensor::zeros(vec![2]),
            Activation::Identity,
        )
        .unwrap();
        assert_eq!(y.data(), &[0.0, 1.25]);
    }

    #[test]
    fn fc_dimension_mismatch() {
        assert!(hybrid_fc(
            &Tensor::column(&[1.0]),
            &CovariateVector::new(vec![3.0]),
            &Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap(),
            &Tensor::from_rows(&[vec![2.0]]).unwrap(),
            &Tensor::column(&[0.0]),
            Activation::Identity,
        )
        .is_err());
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_output(&[2.0, 2.0, 2.0, 2.0]), vec![0.25; 4]);
        let p = softmax_output(&[0.0, 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
        assert_eq!(softmax_output(&[1000.0, 1000.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn argmax_ties_to_lowest() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
