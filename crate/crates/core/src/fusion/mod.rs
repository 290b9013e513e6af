//! Conditional-mutual-information test for whether fusion is warranted.

mod cmi;
mod recommend;

pub use cmi::{
    cmi_estimate, cmi_estimate_with, cmi_value, CmiEstimate, CmiOptions, DEFAULT_K, JITTER, MAX_K, MIN_K,
    MIN_PERMUTATIONS,
};
pub use recommend::{
    fusion_inputs, fusion_recommended, fusion_recommended_with, principal_scores, FusionDecision, FusionTestOptions,
    DEFAULT_ALPHA, DEFAULT_COMPONENTS,
};
