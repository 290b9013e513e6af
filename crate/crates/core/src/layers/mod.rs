//! Standard and hybrid layers. Hybrid variants take the covariate vector in
//! addition to the temporal input, with covariate weights shared across the
//! temporal domain.
//!
//! Each layer exists twice: as a builder that appends nodes to a
//! [`Tape`](crate::numeric::Tape) (used by the models and gradient checks)
//! and as a plain function on tensors.

mod audit;
mod conv;
mod covariates;
mod dense;
mod init;
mod lstm;

pub use audit::{audit_layer, gradient_audit, LayerKind, KINK_MARGIN};
pub use conv::{
    conv1d, conv_output_len, hybrid_conv1d, max_pool, max_pool_graph, ConvNodes, CovariateTerm, HybridConvFilter,
};
pub use covariates::{covariate_dropout_mask, interleave_covariates, CovariateStats, CovariateVector};
pub use dense::{argmax, dense_graph, hybrid_fc, softmax_output};
pub use init::{covariate_scale, glorot};
pub use lstm::{
    gate_offsets, hybrid_lstm_step, lstm_params_to_tape, lstm_sequence, lstm_step_graph, HybridLSTMCellParams,
    LstmNodes, GATES,
};

use crate::error::Result;
use crate::numeric::{NodeId, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}
