//! Problem instances: drones, battery budget, per-delivery costs and time
//! windows, plus the interval-conflict relation and a seeded generator.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// First and last hour of the delivery day used by the generator.
pub const DAY_START: u32 = 8;
pub const DAY_END: u32 = 20;

/// Relative slack used when comparing a summed load against the budget, so
/// that one-decimal costs summing exactly to `B` are not rejected by rounding.
const BUDGET_EPS: f64 = 1e-9;

/// Returns true when `load` fits in `budget`.
pub fn within_budget(load: f64, budget: f64) -> bool {
    load <= budget + BUDGET_EPS * budget.abs().max(1.0)
}

/// A delivery time window `[start, end]` in whole hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u32; 2]")]
pub struct TimeInterval {
    start: u32,
    end: u32,
}

impl TimeInterval {
    pub fn new(start: u32, end: u32) -> Result<Self> {
        if start >= end {
            return Err(Error::Validation(format!(
                "interval [{start}, {end}] must satisfy start < end"
            )));
        }
        Ok(Self { start, end })
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn end(&self) -> u32 {
        self.end
    }

    pub fn duration(&self) -> u32 {
        self.end - self.start
    }

    pub fn conflicts_with(&self, other: &TimeInterval, convention: OverlapConvention) -> bool {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        match convention {
            OverlapConvention::Open => lo < hi,
            OverlapConvention::Closed => lo <= hi,
        }
    }
}

impl TryFrom<[u32; 2]> for TimeInterval {
    type Error = Error;

    fn try_from(value: [u32; 2]) -> Result<Self> {
        TimeInterval::new(value[0], value[1])
    }
}

impl From<TimeInterval> for [u32; 2] {
    fn from(value: TimeInterval) -> Self {
        [value.start, value.end]
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// When do two time windows conflict?
///
/// `Open` requires an overlap of positive length, so windows that only touch
/// at an endpoint (`[13, 14]` and `[14, 15]`) are compatible. `Closed` treats
/// the windows as closed sets and also rejects touching windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverlapConvention {
    #[default]
    Open,
    Closed,
}

impl fmt::Display for OverlapConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapConvention::Open => "open",
            OverlapConvention::Closed => "closed",
        })
    }
}

impl FromStr for OverlapConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "open" | "positive" | "positive-overlap" => Ok(OverlapConvention::Open),
            "closed" => Ok(OverlapConvention::Closed),
            other => Err(Error::InvalidArgument(format!(
                "unknown overlap convention `{other}` (expected open|closed)"
            ))),
        }
    }
}

/// A drone delivery packing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    #[serde(default)]
    pub label: String,
    #[serde(rename = "m")]
    num_drones: usize,
    #[serde(rename = "B")]
    battery_budget: f64,
    costs: Vec<f64>,
    intervals: Vec<TimeInterval>,
    /// Accept `c = B`; set by data files that contain such a cost.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    allow_full_cost: bool,
}

impl ProblemInstance {
    pub fn new(
        label: impl Into<String>,
        num_drones: usize,
        battery_budget: f64,
        costs: Vec<f64>,
        intervals: Vec<TimeInterval>,
    ) -> Result<Self> {
        let instance = Self {
            label: label.into(),
            num_drones,
            battery_budget,
            costs,
            intervals,
            allow_full_cost: false,
        };
        instance.validate()?;
        Ok(instance)
    }

    /// Convenience constructor taking raw `[start, end]` pairs.
    pub fn from_raw(
        label: impl Into<String>,
        num_drones: usize,
        battery_budget: f64,
        costs: Vec<f64>,
        intervals: &[[u32; 2]],
    ) -> Result<Self> {
        let intervals = intervals
            .iter()
            .map(|&iv| TimeInterval::try_from(iv))
            .collect::<Result<Vec<_>>>()?;
        Self::new(label, num_drones, battery_budget, costs, intervals)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_drones == 0 {
            return Err(Error::Validation("m must be at least 1".into()));
        }
        if !(self.battery_budget.is_finite() && self.battery_budget > 0.0) {
            return Err(Error::Validation(format!(
                "battery budget B = {} must be a positive finite number",
                self.battery_budget
            )));
        }
        if self.costs.is_empty() {
            return Err(Error::Validation("instance has no deliveries".into()));
        }
        if self.costs.len() != self.intervals.len() {
            return Err(Error::Validation(format!(
                "{} costs but {} intervals",
                self.costs.len(),
                self.intervals.len()
            )));
        }
        for (j, &c) in self.costs.iter().enumerate() {
            let below = c < self.battery_budget || (self.allow_full_cost && c == self.battery_budget);
            if !(c.is_finite() && c > 0.0 && below) {
                return Err(Error::Validation(format!(
                    "cost c[{j}] = {c} must satisfy 0 < c < B = {}",
                    self.battery_budget
                )));
            }
        }
        for (j, iv) in self.intervals.iter().enumerate() {
            if iv.start >= iv.end {
                return Err(Error::Validation(format!(
                    "interval {j} {iv} must satisfy start < end"
                )));
            }
        }
        Ok(())
    }

    pub fn num_drones(&self) -> usize {
        self.num_drones
    }

    pub fn num_deliveries(&self) -> usize {
        self.costs.len()
    }

    pub fn battery_budget(&self) -> f64 {
        self.battery_budget
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    pub fn intervals(&self) -> &[TimeInterval] {
        &self.intervals
    }

    /// Same deliveries with a different fleet size.
    pub fn with_drones(&self, num_drones: usize) -> Result<Self> {
        let mut copy = self.clone();
        copy.num_drones = num_drones;
        copy.validate()?;
        Ok(copy)
    }

    /// Same fleet with a different battery budget.
    pub fn with_budget(&self, battery_budget: f64) -> Result<Self> {
        let mut copy = self.clone();
        copy.battery_budget = battery_budget;
        copy.validate()?;
        Ok(copy)
    }

    /// Reorders deliveries so that new delivery `j` is old delivery `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_deliveries();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation of the deliveries".into()));
        }
        Self::new(
            self.label.clone(),
            self.num_drones,
            self.battery_budget,
            perm.iter().map(|&p| self.costs[p]).collect(),
            perm.iter().map(|&p| self.intervals[p]).collect(),
        )
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn conflicts(&self, convention: OverlapConvention) -> ConflictSet {
        conflict_pairs(self, convention)
    }
}

/// Unordered conflicting delivery pairs `(j, k)` with `j < k`, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictSet {
    pairs: Vec<(usize, usize)>,
    convention: OverlapConvention,
    num_deliveries: usize,
}

impl ConflictSet {
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of conflicting pairs.
    pub fn kappa(&self) -> usize {
        self.pairs.len()
    }

    pub fn convention(&self) -> OverlapConvention {
        self.convention
    }

    pub fn num_deliveries(&self) -> usize {
        self.num_deliveries
    }

    pub fn contains(&self, j: usize, k: usize) -> bool {
        let key = if j < k { (j, k) } else { (k, j) };
        self.pairs.binary_search(&key).is_ok()
    }

    /// Position of a pair in the sorted list, used to index per-pair slacks.
    pub fn index_of(&self, j: usize, k: usize) -> Option<usize> {
        let key = if j < k { (j, k) } else { (k, j) };
        self.pairs.binary_search(&key).ok()
    }

    /// Bitmask of deliveries conflicting with each delivery.
    pub fn adjacency_masks(&self) -> Vec<u64> {
        let mut adj = vec![0u64; self.num_deliveries];
        for &(j, k) in &self.pairs {
            if j < 64 && k < 64 {
                adj[j] |= 1 << k;
                adj[k] |= 1 << j;
            }
        }
        adj
    }
}

/// All pairs of deliveries whose time windows conflict under `convention`.
pub fn conflict_pairs(instance: &ProblemInstance, convention: OverlapConvention) -> ConflictSet {
    let iv = instance.intervals();
    let mut pairs = Vec::new();
    for j in 0..iv.len() {
        for k in j + 1..iv.len() {
            if iv[j].conflicts_with(&iv[k], convention) {
                pairs.push((j, k));
            }
        }
    }
    ConflictSet {
        pairs,
        convention,
        num_deliveries: iv.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostDistribution {
    Gaussian,
    Uniform,
}

impl fmt::Display for CostDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostDistribution::Gaussian => "gaussian",
            CostDistribution::Uniform => "uniform",
        })
    }
}

impl FromStr for CostDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" | "normal" => Ok(CostDistribution::Gaussian),
            "uniform" => Ok(CostDistribution::Uniform),
            other => Err(Error::InvalidArgument(format!(
                "unknown cost distribution `{other}` (expected gaussian|uniform)"
            ))),
        }
    }
}

/// Gaussian costs are centred at `B/2` with this fraction of `B` as the
/// standard deviation.
pub const GAUSSIAN_SIGMA_FRACTION: f64 = 1.0 / 6.0;

fn round_one_decimal(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Draws a random instance. The output is a pure function of the arguments.
///
/// Costs are rounded to one decimal and redrawn until `0 < c < B`; windows
/// start on a whole hour in `[8, 20 - L]` with length `L` in `{1, 2}`.
pub fn generate_instance(
    seed: u64,
    num_drones: usize,
    num_deliveries: usize,
    battery_budget: f64,
    distribution: CostDistribution,
) -> Result<ProblemInstance> {
    if num_drones == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if num_deliveries == 0 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    if !(battery_budget.is_finite() && battery_budget > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "battery budget must be positive, got {battery_budget}"
        )));
    }
    if round_one_decimal(battery_budget) <= 0.1 {
        return Err(Error::InvalidArgument(format!(
            "battery budget {battery_budget} leaves no one-decimal cost in (0, B)"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(battery_budget / 2.0, battery_budget * GAUSSIAN_SIGMA_FRACTION)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;

    let mut costs = Vec::with_capacity(num_deliveries);
    while costs.len() < num_deliveries {
        let raw = match distribution {
            CostDistribution::Gaussian => normal.sample(&mut rng),
            CostDistribution::Uniform => rng.random::<f64>() * battery_budget,
        };
        let c = round_one_decimal(raw);
        if c > 0.0 && c < battery_budget {
            costs.push(c);
        }
    }

    let intervals = (0..num_deliveries)
        .map(|_| {
            let len = rng.random_range(1..=2u32);
            let start = rng.random_range(DAY_START..=DAY_END - len);
            TimeInterval {
                start,
                end: start + len,
            }
        })
        .collect();

    let label = format!(
        "generated seed={seed} m={num_drones} N={num_deliveries} B={battery_budget} dist={distribution}"
    );
    ProblemInstance::new(label, num_drones, battery_budget, costs, intervals)
}

/// Parses an instance from its JSON text form.
pub fn parse_instance(text: &str, origin: &Path) -> Result<ProblemInstance> {
    let instance: ProblemInstance = serde_json::from_str(text).map_err(|e| {
        // serde reports its own validation failures as data errors.
        let message = e.to_string();
        if e.is_data() && message.contains("start < end") {
            Error::Validation(message)
        } else {
            Error::Parse {
                path: origin.to_path_buf(),
                message,
            }
        }
    })?;
    instance.validate()?;
    Ok(instance)
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_instance(&text, path)
}

pub fn instance_to_json(instance: &ProblemInstance) -> String {
    // Serialization of plain data cannot fail.
    serde_json::to_string_pretty(instance).expect("instance serializes")
}

pub fn save_instance(instance: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = instance_to_json(instance);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
