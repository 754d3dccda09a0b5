//! Carleman weight construction/verification and the empirical weighted estimate.

mod estimate;
mod psi;
mod weight;

pub use estimate::{
    calibrate_c1, carleman_m, carleman_ratio, decompose_p123, epsilon_for_gamma, evaluate_suite,
    ln_weight_at, ratio_sample_suite, CarlemanParams, CarlemanRatio, OperatorEvaluation, P123,
    RatioSample, RatioSuiteConfig,
};
pub use psi::{construct_psi, construct_psi_with, PsiFunction, PsiShape};
pub use weight::{
    calibrate_weight, calibration_registry, closed_form_lambda, signed_log_cmp, verify_weight_inequalities,
    weight_margins, CarlemanWeight, ClosedFormCalibration, SearchCalibration, SignedLog, WeightCalibration,
    WeightMargins,
};
