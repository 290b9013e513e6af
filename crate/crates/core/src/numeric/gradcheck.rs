use super::tape::{NodeId, Tape};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor in the relative error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-8;
/// A check passes when every relative error is below this.
pub const PASS_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_STEP: f64 = 1e-5;

/// Analytic vs. finite-difference comparison for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub node: NodeId,
    pub analytic: Tensor,
    pub numeric: Tensor,
    pub relative_error: Vec<f64>,
}

impl ParamCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.relative_error.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct GradientReport {
    pub params: Vec<ParamCheck>,
    pub max_relative_error: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

impl GradientReport {
    /// Compare analytic gradients against numeric ones, parameter by parameter.
    pub fn compare(nodes: &[NodeId], analytic: Vec<Tensor>, numeric: Vec<Tensor>) -> Self {
        let params: Vec<ParamCheck> = nodes
            .iter()
            .zip(analytic.into_iter().zip(numeric))
            .map(|(&node, (a, n))| {
                let relative_error = a
                    .data()
                    .iter()
                    .zip(n.data())
                    .map(|(&x, &y)| relative_error(x, y))
                    .collect();
                ParamCheck {
                    node,
                    analytic: a,
                    numeric: n,
                    relative_error,
                }
            })
            .collect();
        let max_relative_error = params.iter().map(ParamCheck::max_relative_error).fold(0.0, f64::max);
        let passed = params
            .iter()
            .flat_map(|p| &p.relative_error)
            .all(|e| *e < PASS_TOLERANCE);
        GradientReport {
            params,
            max_relative_error,
            passed,
        }
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.relative_error.len()).sum()
    }
}

fn check_step(step: f64) -> Result<()> {
    if !(1e-7..=1e-3).contains(&step) {
        return Err(Error::config("step", format!("{step} outside [1e-7, 1e-3]")));
    }
    Ok(())
}

/// Central finite differences of the scalar `loss` with respect to each leaf in `params`.
pub fn finite_difference(tape: &Tape, loss: NodeId, params: &[NodeId], step: f64) -> Result<Vec<Tensor>> {
    check_step(step)?;
    let leaves = tape.leaves();
    let base: Vec<Tensor> = leaves.iter().map(|&id| tape.value(id).clone()).collect();
    let mut out = Vec::with_capacity(params.len());
    for &p in params {
        let slot = leaves
            .iter()
            .position(|&id| id == p)
            .ok_or_else(|| Error::shape(p.index(), "gradient check target is not a leaf"))?;
        let mut grad = Tensor::zeros(base[slot].shape().to_vec());
        let mut work = base.clone();
        for e in 0..base[slot].len() {
            let x0 = base[slot].data()[e];
            work[slot].data_mut()[e] = x0 + step;
            let plus = tape.replay(&work)?.value(loss).data()[0];
            work[slot].data_mut()[e] = x0 - step;
            let minus = tape.replay(&work)?.value(loss).data()[0];
            work[slot].data_mut()[e] = x0;
            grad.data_mut()[e] = (plus - minus) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Check reverse-mode gradients of `loss` against central finite differences.
pub fn grad_check(tape: &Tape, loss: NodeId, params: &[NodeId], step: f64) -> Result<GradientReport> {
    let analytic = tape.backward(loss)?.into_leaves(params);
    let numeric = finite_difference(tape, loss, params, step)?;
    Ok(GradientReport::compare(params, analytic, numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bowl(point: &[f64]) -> (Tape, NodeId, NodeId) {
        let mut t = Tape::new();
        let w = t.param(Tensor::column(point));
        let sq = t.mul(w, w).unwrap();
        let loss = t.sum(sq).unwrap();
        (t, w, loss)
    }

    #[test]
    fn quadratic_bowl_is_exact() {
        let (t, w, loss) = bowl(&[0.3, -1.7, 2.2, 0.05]);
        let r = grad_check(&t, loss, &[w], DEFAULT_STEP).unwrap();
        assert!(r.passed);
        assert!(r.max_relative_error < 1e-8, "{}", r.max_relative_error);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (t, w, loss) = bowl(&[0.3, -1.7, 2.2]);
        let analytic = t.backward(loss).unwrap().into_leaves(&[w]);
        let corrupted = analytic.into_iter().map(|g| g.map(|v| v * 1.01)).collect();
        let numeric = finite_difference(&t, loss, &[w], DEFAULT_STEP).unwrap();
        let r = GradientReport::compare(&[w], corrupted, numeric);
        assert!(!r.passed);
        assert!(r.max_relative_error > 5e-3);
    }

    #[test]
    fn step_range_enforced() {
        let (t, w, loss) = bowl(&[1.0]);
        assert!(grad_check(&t, loss, &[w], 1e-2).is_err());
        assert!(grad_check(&t, loss, &[w], 1e-8).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-12, 0.0) - 1e-4).abs() < 1e-18);
    }
}
