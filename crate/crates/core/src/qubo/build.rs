//! Penalty encodings of the packing problem.
//!
//! The standard formulation minimises the number of used drones `sum_i y_i`
//! and needs link (`r`) and usage (`p`) slacks to tie `y` to `x`. The proxy
//! formulation replaces the objective by `H0 = sum_i (N - s_i) s_i`, where
//! `s_i` is the number of deliveries given to drone `i`, and keeps only the
//! battery, all-once and time-conflict penalties.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::{QuboBuilder, QuboModel, VarKey};
use crate::error::{Error, Result};
use crate::evaluation::Assignment;
use crate::instance::{conflict_pairs, ConflictSet, OverlapConvention, ProblemInstance};

/// Default multiplier of the all-deliveries-once weight.
pub const DEFAULT_K: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// `sum_i y_i + sum_{c=1..5} alpha_c H_c`.
    Standard,
    /// `H0 + sum_{c=1..3} alpha_c H_c`.
    Proxy,
}

impl Formulation {
    pub fn number(&self) -> u8 {
        match self {
            Formulation::Standard => 1,
            Formulation::Proxy => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Formulation::Standard),
            2 => Ok(Formulation::Proxy),
            other => Err(Error::InvalidArgument(format!(
                "formulation must be 1 or 2, got {other}"
            ))),
        }
    }

    fn num_penalties(&self) -> usize {
        match self {
            Formulation::Standard => 5,
            Formulation::Proxy => 3,
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// How many slack variables encode the time-conflict constraints.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictSlackMode {
    /// One slack per (drone, conflicting pair); every pair inequality can be
    /// satisfied independently.
    #[default]
    PerPair,
    /// One slack per drone shared by all of its pair terms. Fewer variables,
    /// but the penalty cannot be zeroed in general.
    PerDrone,
}

impl fmt::Display for ConflictSlackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictSlackMode::PerPair => "per-pair",
            ConflictSlackMode::PerDrone => "per-drone",
        })
    }
}

impl FromStr for ConflictSlackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-pair" | "pair" => Ok(ConflictSlackMode::PerPair),
            "per-drone" | "drone" => Ok(ConflictSlackMode::PerDrone),
            other => Err(Error::InvalidArgument(format!(
                "unknown slack mode `{other}` (expected per-pair|per-drone)"
            ))),
        }
    }
}

/// Width of the battery slack expansion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlackBitRule {
    /// `ceil(log2 B)` bits. Cannot represent a slack of exactly `B` when `B`
    /// is a power of two, so idle drones then pay a residual penalty.
    #[default]
    Log2,
    /// `ceil(log2 (B + 1))` bits, enough for every slack in `0..=B`.
    Exact,
}

impl fmt::Display for SlackBitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlackBitRule::Log2 => "log2",
            SlackBitRule::Exact => "exact",
        })
    }
}

impl FromStr for SlackBitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log2" => Ok(SlackBitRule::Log2),
            "exact" => Ok(SlackBitRule::Exact),
            other => Err(Error::InvalidArgument(format!(
                "unknown slack bit rule `{other}` (expected log2|exact)"
            ))),
        }
    }
}

/// Smallest `b` with `2^b >= value` (zero for `value <= 1`).
pub fn bits_to_cover(value: f64) -> usize {
    let mut bits = 0;
    while ((1u64 << bits) as f64) < value {
        bits += 1;
    }
    bits
}

pub fn battery_slack_bits(budget: f64, rule: SlackBitRule) -> usize {
    match rule {
        SlackBitRule::Log2 => bits_to_cover(budget),
        SlackBitRule::Exact => bits_to_cover(budget + 1.0),
    }
}

pub fn usage_slack_bits(num_deliveries: usize) -> usize {
    bits_to_cover(num_deliveries as f64)
}

fn conflict_slots(kappa: usize, mode: ConflictSlackMode) -> usize {
    match mode {
        ConflictSlackMode::PerPair => kappa,
        ConflictSlackMode::PerDrone => 1,
    }
}

/// Variable count of the standard formulation:
/// `m + mN + m*bits(B) + m*kappa + mN + m*bits(N)`, with `m` in place of
/// `m*kappa` in per-drone mode.
pub fn predict_var_count_q1(
    m: usize,
    n: usize,
    budget: f64,
    kappa: usize,
    mode: ConflictSlackMode,
    rule: SlackBitRule,
) -> usize {
    m + m * n
        + m * battery_slack_bits(budget, rule)
        + m * conflict_slots(kappa, mode)
        + m * n
        + m * usage_slack_bits(n)
}

/// Variable count of the proxy formulation: `mN + m*bits(B) + m*kappa`.
pub fn predict_var_count_q2(
    m: usize,
    n: usize,
    budget: f64,
    kappa: usize,
    mode: ConflictSlackMode,
    rule: SlackBitRule,
) -> usize {
    m * n + m * battery_slack_bits(budget, rule) + m * conflict_slots(kappa, mode)
}

/// Penalty multipliers `alpha_1..alpha_c` of a formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    alphas: Vec<f64>,
    /// Multiplier used for the all-once weight when built from defaults.
    k: f64,
}

impl PenaltyWeights {
    /// `alpha_c = m N^2 / 4` except `alpha_2 = k m N^2 / 4`. The base value
    /// bounds the proxy objective over every binary matrix.
    pub fn defaults(formulation: Formulation, m: usize, n: usize, k: f64) -> Self {
        let base = (m * n * n) as f64 / 4.0;
        let mut alphas = vec![base; formulation.num_penalties()];
        alphas[1] = k * base;
        Self { alphas, k }
    }

    pub fn for_instance(formulation: Formulation, instance: &ProblemInstance, k: f64) -> Self {
        Self::defaults(
            formulation,
            instance.num_drones(),
            instance.num_deliveries(),
            k,
        )
    }

    pub fn custom(alphas: Vec<f64>, k: f64) -> Result<Self> {
        if alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument("penalty weights must be positive".into()));
        }
        Ok(Self { alphas, k })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// `alpha_c` with one-based `c`.
    pub fn alpha(&self, c: usize) -> f64 {
        self.alphas[c - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub convention: OverlapConvention,
    pub conflict_slack: ConflictSlackMode,
    pub slack_bits: SlackBitRule,
    /// Costs and budget are multiplied by this factor before encoding.
    pub cost_scale: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            convention: OverlapConvention::Open,
            conflict_slack: ConflictSlackMode::PerPair,
            slack_bits: SlackBitRule::Log2,
            cost_scale: 1.0,
        }
    }
}

impl BuildOptions {
    /// Scaled costs and budget; values within `1e-6` of an integer snap to it
    /// so that scaled one-decimal costs are exact.
    pub fn scaled_costs(&self, instance: &ProblemInstance) -> (Vec<f64>, f64) {
        let snap = |x: f64| {
            let r = x.round();
            if (x - r).abs() < 1e-6 {
                r
            } else {
                x
            }
        };
        let s = self.cost_scale;
        if s == 1.0 {
            return (instance.costs().to_vec(), instance.battery_budget());
        }
        (
            instance.costs().iter().map(|&c| snap(c * s)).collect(),
            snap(instance.battery_budget() * s),
        )
    }
}

/// Provenance carried by built models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub formulation: Formulation,
    pub num_drones: usize,
    pub num_deliveries: usize,
    pub kappa: usize,
    pub weights: PenaltyWeights,
    pub options: BuildOptions,
}

fn check_inputs(
    instance: &ProblemInstance,
    formulation: Formulation,
    weights: &PenaltyWeights,
    options: &BuildOptions,
) -> Result<()> {
    instance.validate()?;
    if weights.alphas().len() != formulation.num_penalties() {
        return Err(Error::InvalidArgument(format!(
            "formulation {formulation} needs {} penalty weights, got {}",
            formulation.num_penalties(),
            weights.alphas().len()
        )));
    }
    if weights.alphas().iter().any(|a| !(a.is_finite() && *a > 0.0)) {
        return Err(Error::InvalidArgument("penalty weights must be positive".into()));
    }
    if !(options.cost_scale.is_finite() && options.cost_scale > 0.0) {
        return Err(Error::InvalidArgument("cost scale must be positive".into()));
    }
    Ok(())
}

/// Registry indices shared by both formulations.
struct CoreVars {
    x: Vec<Vec<usize>>,
    battery: Vec<Vec<usize>>,
    conflict: Vec<Vec<usize>>,
}

fn register_x(b: &mut QuboBuilder, m: usize, n: usize) -> Vec<Vec<usize>> {
    (0..m)
        .map(|drone| {
            (0..n)
                .map(|delivery| b.add_var(VarKey::Assign { drone, delivery }))
                .collect()
        })
        .collect()
}

fn register_slacks(
    b: &mut QuboBuilder,
    m: usize,
    battery_bits: usize,
    conflicts: &ConflictSet,
    mode: ConflictSlackMode,
) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let battery = (0..m)
        .map(|drone| {
            (0..battery_bits)
                .map(|bit| b.add_var(VarKey::BatterySlack { drone, bit }))
                .collect()
        })
        .collect();
    let conflict = (0..m)
        .map(|drone| match mode {
            ConflictSlackMode::PerPair => (0..conflicts.kappa())
                .map(|p| b.add_var(VarKey::ConflictSlack { drone, pair: Some(p) }))
                .collect(),
            ConflictSlackMode::PerDrone => {
                vec![b.add_var(VarKey::ConflictSlack { drone, pair: None })]
            }
        })
        .collect();
    (battery, conflict)
}

/// Adds `alpha_1 H_C1 + alpha_2 H_C2 + alpha_3 H_C3`.
fn add_shared_penalties(
    b: &mut QuboBuilder,
    vars: &CoreVars,
    costs: &[f64],
    budget: f64,
    conflicts: &ConflictSet,
    mode: ConflictSlackMode,
    weights: &PenaltyWeights,
) {
    let m = vars.x.len();
    let n = costs.len();

    // Battery: sum_j c_j x_ij + sum_l 2^l s_il - B = 0.
    for i in 0..m {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (vars.x[i][j], costs[j])).collect();
        terms.extend(
            vars.battery[i]
                .iter()
                .enumerate()
                .map(|(l, &s)| (s, (1u64 << l) as f64)),
        );
        b.add_squared(weights.alpha(1), &terms, -budget);
    }

    // Every delivery exactly once.
    for j in 0..n {
        let terms: Vec<(usize, f64)> = (0..m).map(|i| (vars.x[i][j], 1.0)).collect();
        b.add_squared(weights.alpha(2), &terms, -1.0);
    }

    // Conflicting pairs: x_ij + x_ik + t - 1 = 0.
    for i in 0..m {
        for (p, &(j, k)) in conflicts.pairs().iter().enumerate() {
            let t = match mode {
                ConflictSlackMode::PerPair => vars.conflict[i][p],
                ConflictSlackMode::PerDrone => vars.conflict[i][0],
            };
            b.add_squared(
                weights.alpha(3),
                &[(vars.x[i][j], 1.0), (vars.x[i][k], 1.0), (t, 1.0)],
                -1.0,
            );
        }
    }
}

fn metadata(
    formulation: Formulation,
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
    weights: &PenaltyWeights,
    options: &BuildOptions,
) -> ModelMetadata {
    ModelMetadata {
        formulation,
        num_drones: instance.num_drones(),
        num_deliveries: instance.num_deliveries(),
        kappa: conflicts.kappa(),
        weights: weights.clone(),
        options: *options,
    }
}

/// Standard formulation: `sum_i y_i + sum_{c=1..5} alpha_c H_c`.
///
/// Registry order is the `x` block, then `y`, then battery, conflict, link
/// and usage slacks.
pub fn build_qubo1(
    instance: &ProblemInstance,
    weights: &PenaltyWeights,
    options: &BuildOptions,
) -> Result<QuboModel> {
    check_inputs(instance, Formulation::Standard, weights, options)?;
    let m = instance.num_drones();
    let n = instance.num_deliveries();
    let conflicts = conflict_pairs(instance, options.convention);
    let (costs, budget) = options.scaled_costs(instance);

    let mut b = QuboBuilder::new();
    let x = register_x(&mut b, m, n);
    let y: Vec<usize> = (0..m).map(|drone| b.add_var(VarKey::Used { drone })).collect();
    let (battery, conflict) = register_slacks(
        &mut b,
        m,
        battery_slack_bits(budget, options.slack_bits),
        &conflicts,
        options.conflict_slack,
    );
    let link: Vec<Vec<usize>> = (0..m)
        .map(|drone| {
            (0..n)
                .map(|delivery| b.add_var(VarKey::LinkSlack { drone, delivery }))
                .collect()
        })
        .collect();
    let usage: Vec<Vec<usize>> = (0..m)
        .map(|drone| {
            (0..usage_slack_bits(n))
                .map(|bit| b.add_var(VarKey::UsageSlack { drone, bit }))
                .collect()
        })
        .collect();

    for &yi in &y {
        b.add_linear(yi, 1.0);
    }
    let vars = CoreVars { x, battery, conflict };
    add_shared_penalties(
        &mut b,
        &vars,
        &costs,
        budget,
        &conflicts,
        options.conflict_slack,
        weights,
    );

    // x_ij - y_i + r_ij = 0.
    for i in 0..m {
        for (j, &r) in link[i].iter().enumerate() {
            b.add_squared(
                weights.alpha(4),
                &[(vars.x[i][j], 1.0), (y[i], -1.0), (r, 1.0)],
                0.0,
            );
        }
    }

    // -sum_j x_ij + y_i + sum_l 2^l p_il = 0.
    for i in 0..m {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (vars.x[i][j], -1.0)).collect();
        terms.push((y[i], 1.0));
        terms.extend(
            usage[i]
                .iter()
                .enumerate()
                .map(|(l, &p)| (p, (1u64 << l) as f64)),
        );
        b.add_squared(weights.alpha(5), &terms, 0.0);
    }

    let mut model = b.finish()?;
    model.set_metadata(metadata(
        Formulation::Standard,
        instance,
        &conflicts,
        weights,
        options,
    ));
    Ok(model)
}

/// Proxy formulation: `H0 + alpha_1 H_C1 + alpha_2 H_C2 + alpha_3 H_C3`.
pub fn build_qubo2(
    instance: &ProblemInstance,
    weights: &PenaltyWeights,
    options: &BuildOptions,
) -> Result<QuboModel> {
    check_inputs(instance, Formulation::Proxy, weights, options)?;
    let m = instance.num_drones();
    let n = instance.num_deliveries();
    let conflicts = conflict_pairs(instance, options.convention);
    let (costs, budget) = options.scaled_costs(instance);

    let mut b = QuboBuilder::new();
    let x = register_x(&mut b, m, n);
    let (battery, conflict) = register_slacks(
        &mut b,
        m,
        battery_slack_bits(budget, options.slack_bits),
        &conflicts,
        options.conflict_slack,
    );

    // (N - s) s = (N - 1) sum_j x_j - 2 sum_{j<k} x_j x_k.
    for row in &x {
        for (a, &u) in row.iter().enumerate() {
            b.add_linear(u, n as f64 - 1.0);
            for &v in &row[a + 1..] {
                b.add_quadratic(u, v, -2.0);
            }
        }
    }
    let vars = CoreVars { x, battery, conflict };
    add_shared_penalties(
        &mut b,
        &vars,
        &costs,
        budget,
        &conflicts,
        options.conflict_slack,
        weights,
    );

    let mut model = b.finish()?;
    model.set_metadata(metadata(
        Formulation::Proxy,
        instance,
        &conflicts,
        weights,
        options,
    ));
    Ok(model)
}

pub fn build_qubo(
    formulation: Formulation,
    instance: &ProblemInstance,
    weights: &PenaltyWeights,
    options: &BuildOptions,
) -> Result<QuboModel> {
    match formulation {
        Formulation::Standard => build_qubo1(instance, weights, options),
        Formulation::Proxy => build_qubo2(instance, weights, options),
    }
}

/// Proxy objective `sum_i (N - s_i) s_i` of an assignment matrix.
pub fn evaluate_h0(instance: &ProblemInstance, assignment: &Assignment) -> f64 {
    let n = instance.num_deliveries();
    debug_assert_eq!(assignment.num_deliveries(), n);
    (0..assignment.num_drones())
        .map(|i| {
            let s = assignment.row_sum(i);
            ((n - s.min(n)) * s) as f64
        })
        .sum()
}

/// The largest value of the proxy objective over all `m x N` binary
/// matrices: `m * floor(N/2) * ceil(N/2)`.
pub fn max_h0(m: usize, n: usize) -> usize {
    m * (n / 2) * n.div_ceil(2)
}

/// Bits of a full model assignment built from a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackCompletion {
    pub bits: Vec<bool>,
    /// True when every slack equation could be met exactly, in which case
    /// all penalty terms vanish.
    pub exact: bool,
}

fn encode_binary(value: f64, width: usize) -> (u64, bool) {
    let max = if width >= 64 { u64::MAX } else { (1u64 << width) - 1 };
    let nearest = value.round().clamp(0.0, max as f64);
    let exact = (value - nearest).abs() < 1e-9;
    (nearest as u64, exact)
}

/// Completes a schedule to a full assignment of `model`'s variables: `x` from
/// the schedule, `y` from drone usage and every slack set to the value its
/// equation demands, rounded to the nearest representable value.
pub fn complete_slacks(
    model: &QuboModel,
    instance: &ProblemInstance,
    assignment: &Assignment,
) -> Result<SlackCompletion> {
    let meta = model
        .metadata()
        .ok_or_else(|| Error::InvalidArgument("model carries no build metadata".into()))?;
    let m = meta.num_drones;
    let n = meta.num_deliveries;
    if assignment.num_drones() != m || assignment.num_deliveries() != n {
        return Err(Error::InvalidArgument(format!(
            "assignment is {}x{} but the model expects {m}x{n}",
            assignment.num_drones(),
            assignment.num_deliveries()
        )));
    }
    let conflicts = conflict_pairs(instance, meta.options.convention);
    let (costs, budget) = meta.options.scaled_costs(instance);
    let battery_bits = battery_slack_bits(budget, meta.options.slack_bits);
    let mut bits = vec![false; model.num_variables()];
    let mut exact = true;
    let set = |key: VarKey, value: bool, bits: &mut [bool]| -> Result<()> {
        let v = model
            .index_of(&key)
            .ok_or_else(|| Error::Internal(format!("model lacks variable {key}")))?;
        bits[v] = value;
        Ok(())
    };

    for i in 0..m {
        let used = assignment.row_sum(i) > 0;
        for j in 0..n {
            set(VarKey::Assign { drone: i, delivery: j }, assignment.get(i, j), &mut bits)?;
        }

        let load: f64 = (0..n).filter(|&j| assignment.get(i, j)).map(|j| costs[j]).sum();
        let (slack, ok) = encode_binary(budget - load, battery_bits);
        exact &= ok;
        for l in 0..battery_bits {
            set(VarKey::BatterySlack { drone: i, bit: l }, slack >> l & 1 == 1, &mut bits)?;
        }

        match meta.options.conflict_slack {
            ConflictSlackMode::PerPair => {
                for (p, &(j, k)) in conflicts.pairs().iter().enumerate() {
                    let taken = assignment.get(i, j) as i32 + assignment.get(i, k) as i32;
                    exact &= taken <= 1;
                    set(
                        VarKey::ConflictSlack { drone: i, pair: Some(p) },
                        taken == 0,
                        &mut bits,
                    )?;
                }
            }
            ConflictSlackMode::PerDrone => {
                // One shared slack must satisfy every pair term at once.
                let residual = |t: i32| -> i32 {
                    conflicts
                        .pairs()
                        .iter()
                        .map(|&(j, k)| {
                            let r = assignment.get(i, j) as i32 + assignment.get(i, k) as i32 + t - 1;
                            r * r
                        })
                        .sum()
                };
                let t = residual(1) <= residual(0);
                exact &= residual(t as i32) == 0;
                set(VarKey::ConflictSlack { drone: i, pair: None }, t, &mut bits)?;
            }
        }

        if meta.formulation == Formulation::Standard {
            set(VarKey::Used { drone: i }, used, &mut bits)?;
            for j in 0..n {
                let r = used && !assignment.get(i, j);
                set(VarKey::LinkSlack { drone: i, delivery: j }, r, &mut bits)?;
            }
            let usage_bits = usage_slack_bits(n);
            let target = assignment.row_sum(i) as f64 - used as u8 as f64;
            let (p, ok) = encode_binary(target, usage_bits);
            exact &= ok;
            for l in 0..usage_bits {
                set(VarKey::UsageSlack { drone: i, bit: l }, p >> l & 1 == 1, &mut bits)?;
            }
        }
    }
    Ok(SlackCompletion { bits, exact })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{decode, AssignmentSource};

    fn toy(costs: Vec<f64>, budget: f64, intervals: &[[u32; 2]], m: usize) -> ProblemInstance {
        ProblemInstance::from_raw("toy", m, budget, costs, intervals).unwrap()
    }

    /// Exhaustive minimum over all assignments, independent of the model
    /// internals beyond `energy`.
    fn enumerate_min(model: &QuboModel) -> (f64, Vec<Vec<bool>>) {
        let n = model.num_variables();
        let mut best = f64::INFINITY;
        let mut argmins = Vec::new();
        for s in 0..1u64 << n {
            let bits: Vec<bool> = (0..n).map(|v| s >> v & 1 == 1).collect();
            let e = model.energy(&bits).unwrap();
            if e < best - 1e-9 {
                best = e;
                argmins.clear();
            }
            if (e - best).abs() <= 1e-9 {
                argmins.push(bits);
            }
        }
        (best, argmins)
    }

    #[test]
    fn bit_widths() {
        assert_eq!(bits_to_cover(1.0), 0);
        assert_eq!(bits_to_cover(2.0), 1);
        assert_eq!(bits_to_cover(3.0), 2);
        assert_eq!(bits_to_cover(50.0), 6);
        assert_eq!(bits_to_cover(64.0), 6);
        assert_eq!(bits_to_cover(70.0), 7);
        assert_eq!(bits_to_cover(100.0), 7);
        assert_eq!(battery_slack_bits(64.0, SlackBitRule::Exact), 7);
        assert_eq!(battery_slack_bits(3.0, SlackBitRule::Exact), 2);
    }

    #[test]
    fn variable_count_formulas() {
        use ConflictSlackMode::*;
        use SlackBitRule::Log2;
        assert_eq!(predict_var_count_q2(10, 10, 70.0, 17, PerDrone, Log2), 180);
        assert_eq!(predict_var_count_q1(5, 4, 5.0, 3, PerPair, Log2), 85);
        assert_eq!(predict_var_count_q2(1, 1, 1.0, 0, PerPair, Log2), 1);
        assert_eq!(predict_var_count_q1(2, 2, 3.0, 0, PerPair, Log2), 16);
    }

    #[test]
    fn standard_toy_ground_state_uses_one_drone() {
        let inst = toy(vec![1.0, 1.0], 3.0, &[[8, 9], [10, 11]], 2);
        let w = PenaltyWeights::for_instance(Formulation::Standard, &inst, DEFAULT_K);
        let model = build_qubo1(&inst, &w, &BuildOptions::default()).unwrap();
        assert_eq!(model.num_variables(), 16);
        let (best, argmins) = enumerate_min(&model);
        assert_eq!(best, 1.0);
        for bits in &argmins {
            let a = decode(&model, bits, AssignmentSource::Brute).unwrap();
            assert_eq!(a.used_drones(), 1);
            assert!(a.row_sum(0) == 2 || a.row_sum(1) == 2);
        }
    }

    #[test]
    fn proxy_toy_ground_state_energy_is_zero() {
        let inst = toy(vec![1.0, 1.0], 3.0, &[[8, 9], [10, 11]], 2);
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &inst, DEFAULT_K);
        let model = build_qubo2(&inst, &w, &BuildOptions::default()).unwrap();
        assert_eq!(model.num_variables(), 8);
        let (best, argmins) = enumerate_min(&model);
        assert_eq!(best, 0.0);
        // Both deliveries on one drone; slacks encode 1 (busy) and 3 (idle).
        for bits in &argmins {
            let a = decode(&model, bits, AssignmentSource::Brute).unwrap();
            let busy = if a.row_sum(0) == 2 { 0 } else { 1 };
            let slack = |i: usize| {
                (0..2)
                    .map(|l| {
                        let v = model.index_of(&VarKey::BatterySlack { drone: i, bit: l }).unwrap();
                        (bits[v] as u32) << l
                    })
                    .sum::<u32>()
            };
            assert_eq!(slack(busy), 1);
            assert_eq!(slack(1 - busy), 3);
        }
        assert!(model
            .variables()
            .iter()
            .all(|k| !matches!(k, VarKey::Used { .. } | VarKey::LinkSlack { .. } | VarKey::UsageSlack { .. })));
    }

    #[test]
    fn all_zero_standard_energy() {
        let inst = toy(vec![1.0], 2.0, &[[8, 9]], 1);
        let w = PenaltyWeights::for_instance(Formulation::Standard, &inst, DEFAULT_K);
        let model = build_qubo1(&inst, &w, &BuildOptions::default()).unwrap();
        let e = model.energy(&vec![false; model.num_variables()]).unwrap();
        assert_eq!(e, w.alpha(1) * 4.0 + w.alpha(2));
    }

    #[test]
    fn default_weights() {
        let w = PenaltyWeights::defaults(Formulation::Proxy, 10, 10, 120.0);
        assert_eq!(w.alphas(), &[250.0, 30_000.0, 250.0]);
        let w = PenaltyWeights::defaults(Formulation::Standard, 5, 4, 120.0);
        assert_eq!(w.alphas(), &[20.0, 2400.0, 20.0, 20.0, 20.0]);
    }

    #[test]
    fn feasible_schedule_energy_equals_objective() {
        // Integer costs, B = 10 (not a power of two).
        let inst = toy(
            vec![3.0, 4.0, 5.0, 2.0],
            10.0,
            &[[8, 10], [9, 11], [12, 13], [12, 14]],
            3,
        );
        let a = Assignment::from_rows(
            vec![vec![true, false, true, false], vec![false, true, false, true], vec![false; 4]],
            AssignmentSource::Exact,
        )
        .unwrap();
        for formulation in [Formulation::Standard, Formulation::Proxy] {
            let w = PenaltyWeights::for_instance(formulation, &inst, DEFAULT_K);
            let model = build_qubo(formulation, &inst, &w, &BuildOptions::default()).unwrap();
            let done = complete_slacks(&model, &inst, &a).unwrap();
            assert!(done.exact);
            let e = model.energy(&done.bits).unwrap();
            let want = match formulation {
                Formulation::Standard => 2.0,
                Formulation::Proxy => evaluate_h0(&inst, &a),
            };
            assert_eq!(e, want);
        }
    }

    #[test]
    fn scaled_costs_are_snapped_to_integers() {
        let inst = toy(vec![59.8, 4.1], 70.0, &[[8, 9], [10, 11]], 1);
        let opts = BuildOptions { cost_scale: 10.0, ..Default::default() };
        let (costs, budget) = opts.scaled_costs(&inst);
        assert_eq!(costs, vec![598.0, 41.0]);
        assert_eq!(budget, 700.0);
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &inst, DEFAULT_K);
        let model = build_qubo2(&inst, &w, &opts).unwrap();
        assert_eq!(model.num_variables(), 2 + 10);
        let a = Assignment::from_rows(vec![vec![true, true]], AssignmentSource::Exact).unwrap();
        let done = complete_slacks(&model, &inst, &a).unwrap();
        assert!(done.exact);
        assert_eq!(model.energy(&done.bits).unwrap(), 0.0);
    }

    #[test]
    fn power_of_two_budget_leaves_idle_residual() {
        let inst = toy(vec![1.0], 4.0, &[[8, 9]], 2);
        let a = Assignment::from_rows(vec![vec![true], vec![false]], AssignmentSource::Exact).unwrap();
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &inst, DEFAULT_K);
        let log2 = build_qubo2(&inst, &w, &BuildOptions::default()).unwrap();
        assert!(!complete_slacks(&log2, &inst, &a).unwrap().exact);
        let opts = BuildOptions { slack_bits: SlackBitRule::Exact, ..Default::default() };
        let exact = build_qubo2(&inst, &w, &opts).unwrap();
        let done = complete_slacks(&exact, &inst, &a).unwrap();
        assert!(done.exact);
        assert_eq!(exact.energy(&done.bits).unwrap(), 0.0);
    }

    #[test]
    fn h0_examples() {
        let inst = toy(vec![1.0; 4], 10.0, &[[8, 9]; 4], 4);
        let one_drone = Assignment::from_rows(
            vec![vec![true; 4], vec![false; 4], vec![false; 4], vec![false; 4]],
            AssignmentSource::Exact,
        )
        .unwrap();
        assert_eq!(evaluate_h0(&inst, &one_drone), 0.0);
        let perm = Assignment::from_rows(
            (0..4).map(|i| (0..4).map(|j| i == j).collect()).collect(),
            AssignmentSource::Exact,
        )
        .unwrap();
        assert_eq!(evaluate_h0(&inst, &perm), 12.0);

        let inst6 = toy(vec![1.0; 6], 10.0, &[[8, 9]; 6], 4);
        let rows = [3usize, 2, 1, 0];
        let mut next = 0;
        let matrix = rows
            .iter()
            .map(|&r| {
                let row: Vec<bool> = (0..6).map(|j| j >= next && j < next + r).collect();
                next += r;
                row
            })
            .collect();
        let a = Assignment::from_rows(matrix, AssignmentSource::Exact).unwrap();
        assert_eq!(evaluate_h0(&inst6, &a), 22.0);
    }

    #[test]
    fn max_h0_matches_enumeration_for_small_shapes() {
        for m in 1..=3 {
            for n in 1..=3 {
                let inst = toy(vec![1.0; n], 10.0, &vec![[8, 9]; n], m);
                let mut best = 0.0f64;
                for s in 0..1u32 << (m * n) {
                    let rows = (0..m)
                        .map(|i| (0..n).map(|j| s >> (i * n + j) & 1 == 1).collect())
                        .collect();
                    let a = Assignment::from_rows(rows, AssignmentSource::Brute).unwrap();
                    best = best.max(evaluate_h0(&inst, &a));
                }
                assert_eq!(best, max_h0(m, n) as f64, "m={m} n={n}");
                assert!(best <= (m * n * n) as f64 / 4.0);
            }
        }
    }

    #[test]
    fn per_drone_mode_counts_one_conflict_slack_per_drone() {
        let inst = toy(
            vec![1.0; 3],
            5.0,
            &[[8, 10], [9, 11], [9, 10]],
            2,
        );
        let opts = BuildOptions { conflict_slack: ConflictSlackMode::PerDrone, ..Default::default() };
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &inst, DEFAULT_K);
        let model = build_qubo2(&inst, &w, &opts).unwrap();
        assert_eq!(
            model.num_variables(),
            predict_var_count_q2(2, 3, 5.0, 3, ConflictSlackMode::PerDrone, SlackBitRule::Log2)
        );
        assert_eq!(model.metadata().unwrap().kappa, 3);
    }

    #[test]
    fn wrong_weight_count_is_rejected() {
        let inst = toy(vec![1.0], 3.0, &[[8, 9]], 1);
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &inst, DEFAULT_K);
        assert!(build_qubo1(&inst, &w, &BuildOptions::default()).is_err());
    }
}
