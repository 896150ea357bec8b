//! QUBO models of the packing problem and the two formulations that build them.

mod build;
mod model;

pub use build::{
    battery_slack_bits, bits_to_cover, build_qubo, build_qubo1, build_qubo2, complete_slacks,
    evaluate_h0, max_h0, predict_var_count_q1, predict_var_count_q2, usage_slack_bits,
    BuildOptions, ConflictSlackMode, Formulation, ModelMetadata, PenaltyWeights, SlackBitRule,
    SlackCompletion, DEFAULT_K,
};
pub use model::{QuboBuilder, QuboFile, QuboModel, VarKey};

/// Energy of `bits` under `model`.
pub fn evaluate_energy(model: &QuboModel, bits: &[bool]) -> crate::Result<f64> {
    model.energy(bits)
}
