//! Drone delivery packing: QUBO encodings, a simulated annealer, an exact
//! set-partition oracle and a benchmark harness.

pub mod anneal;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod instance;
pub mod qubo;

pub use anneal::{anneal, best_sample, default_beta_range, AnnealSchedule, Sample, SampleSet};
pub use error::{Error, Result};
pub use evaluation::{
    decode, feasibility, run_benchmark, scaling_experiment, Assignment, AssignmentSource,
    FeasibilityTriplet, RunReport, ScalingRow, SolverConfig,
};
pub use exact::{
    brute_force_qubo, enumerate_feasible_subsets, solve_exact, ExactSolution, FeasibleSubsetTable,
};
pub use instance::{
    conflict_pairs, generate_instance, load_instance, save_instance, ConflictSet,
    CostDistribution, OverlapConvention, ProblemInstance, TimeInterval,
};
pub use qubo::{
    build_qubo, build_qubo1, build_qubo2, evaluate_energy, evaluate_h0, predict_var_count_q1,
    predict_var_count_q2, BuildOptions, ConflictSlackMode, Formulation, PenaltyWeights, QuboModel,
    SlackBitRule, VarKey,
};
