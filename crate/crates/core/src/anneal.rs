//! Multi-read single-flip Metropolis simulated annealing over a [`QuboModel`].
//!
//! Every read starts from an independent uniform random assignment and runs
//! `sweeps` passes with a linearly increasing inverse temperature. Read `r`
//! draws from its own ChaCha stream `(seed, r)`, so the sample set does not
//! depend on how reads are scheduled across threads.

use std::io::Write;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand::rngs::SmallRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qubo::QuboModel;

pub const DEFAULT_NUM_READS: usize = 1000;
pub const DEFAULT_SWEEPS: usize = 1000;

/// Smallest energy scale used when deriving temperatures.
const ENERGY_FLOOR: f64 = 1e-10;

/// Moves with `beta * dE` above this are accepted with probability below
/// 2^-53, so they are rejected without drawing.
const REJECT_ABOVE: f64 = 37.5;

/// Linear inverse-temperature schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealSchedule {
    pub beta_start: f64,
    pub beta_end: f64,
    pub sweeps: usize,
}

impl AnnealSchedule {
    pub fn linear(beta_start: f64, beta_end: f64, sweeps: usize) -> Result<Self> {
        if !(beta_start.is_finite() && beta_start > 0.0 && beta_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta range ({beta_start}, {beta_end}) must be positive and finite"
            )));
        }
        if beta_end < beta_start {
            return Err(Error::InvalidArgument(format!(
                "beta_end {beta_end} is below beta_start {beta_start}"
            )));
        }
        if sweeps == 0 {
            return Err(Error::InvalidArgument("at least one sweep is required".into()));
        }
        Ok(Self {
            beta_start,
            beta_end,
            sweeps,
        })
    }

    /// Schedule spanning [`default_beta_range`] of `model`.
    pub fn for_model(model: &QuboModel, sweeps: usize) -> Result<Self> {
        let (start, end) = default_beta_range(model)?;
        Self::linear(start, end, sweeps)
    }

    /// Inverse temperature of sweep `t` (zero based).
    pub fn beta_at(&self, t: usize) -> f64 {
        if self.sweeps <= 1 {
            return self.beta_start;
        }
        let frac = t as f64 / (self.sweeps - 1) as f64;
        self.beta_start + (self.beta_end - self.beta_start) * frac
    }
}

/// `(ln 2 / dE_max, ln 1000 / dE_min)` where `dE_max` bounds the energy
/// change of any single flip and `dE_min` is the smallest per-variable
/// scale `max(|h_v|, min_u |J_uv|)`.
///
/// At `beta_start` the worst uphill flip is accepted with probability 1/2.
pub fn default_beta_range(model: &QuboModel) -> Result<(f64, f64)> {
    let n = model.num_variables();
    let mut abs_sum: Vec<f64> = model.linear().iter().map(|c| c.abs()).collect();
    let mut min_coupling = vec![f64::INFINITY; n];
    for (&(u, v), &c) in model.quadratic() {
        let a = c.abs();
        abs_sum[u] += a;
        abs_sum[v] += a;
        if a > 0.0 {
            min_coupling[u] = min_coupling[u].min(a);
            min_coupling[v] = min_coupling[v].min(a);
        }
    }

    let max_delta = abs_sum.iter().copied().fold(0.0f64, f64::max);
    if max_delta == 0.0 {
        return Err(Error::InvalidArgument(
            "model has no nonzero coefficients to anneal".into(),
        ));
    }
    let min_delta = (0..n)
        .filter(|&v| abs_sum[v] > 0.0)
        .map(|v| {
            let coupling = if min_coupling[v].is_finite() { min_coupling[v] } else { 0.0 };
            model.linear()[v].abs().max(coupling)
        })
        .fold(f64::INFINITY, f64::min);

    let hot = 2f64.ln() / max_delta.max(ENERGY_FLOOR);
    let cold = 1000f64.ln() / min_delta.max(ENERGY_FLOOR);
    Ok((hot, cold))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub bits: Vec<bool>,
    pub energy: f64,
    pub read: usize,
}

/// Outcome of one [`anneal`] call, sorted by energy then read index.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    samples: Vec<Sample>,
    seed: u64,
}

impl SampleSet {
    /// Re-evaluates every sample against `model` and sorts them.
    pub fn from_samples(model: &QuboModel, mut samples: Vec<Sample>, seed: u64) -> Result<Self> {
        let tol = energy_tolerance(model);
        for s in &samples {
            let e = model.energy(&s.bits)?;
            if (e - s.energy).abs() > tol {
                return Err(Error::Internal(format!(
                    "read {} reports energy {} but evaluates to {e}",
                    s.read, s.energy
                )));
            }
        }
        samples.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.read.cmp(&b.read)));
        Ok(Self { samples, seed })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn num_reads(&self) -> usize {
        self.samples.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Writes `read,energy,<one column per variable>`.
    pub fn write_csv<W: Write>(&self, model: &QuboModel, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["read".to_string(), "energy".to_string()];
        header.extend(model.variables().iter().map(ToString::to_string));
        let io = |e: csv::Error| Error::Internal(format!("csv write failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for s in &self.samples {
            let mut row = vec![s.read.to_string(), s.energy.to_string()];
            row.extend(s.bits.iter().map(|&b| (b as u8).to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Internal(format!("csv flush failed: {e}")))?;
        Ok(())
    }
}

/// Lowest-energy sample; ties go to the lowest read index.
pub fn best_sample(set: &SampleSet) -> Result<&Sample> {
    set.samples
        .iter()
        .min_by(|a, b| a.energy.total_cmp(&b.energy).then(a.read.cmp(&b.read)))
        .ok_or_else(|| Error::InvalidArgument("sample set is empty".into()))
}

fn energy_tolerance(model: &QuboModel) -> f64 {
    let scale: f64 = model.offset().abs()
        + model.linear().iter().map(|c| c.abs()).sum::<f64>()
        + model.quadratic().values().map(|c| c.abs()).sum::<f64>();
    1e-9 * scale.max(1.0)
}

/// Compressed adjacency of the coupling graph.
struct Couplings {
    start: Vec<usize>,
    neighbour: Vec<u32>,
    weight: Vec<f64>,
}

impl Couplings {
    fn new(model: &QuboModel) -> Self {
        let n = model.num_variables();
        let mut degree = vec![0usize; n];
        for &(u, v) in model.quadratic().keys() {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut start = vec![0usize; n + 1];
        for v in 0..n {
            start[v + 1] = start[v] + degree[v];
        }
        let mut fill = start.clone();
        let mut neighbour = vec![0u32; start[n]];
        let mut weight = vec![0.0; start[n]];
        for (&(u, v), &c) in model.quadratic() {
            neighbour[fill[u]] = v as u32;
            weight[fill[u]] = c;
            fill[u] += 1;
            neighbour[fill[v]] = u as u32;
            weight[fill[v]] = c;
            fill[v] += 1;
        }
        Self {
            start,
            neighbour,
            weight,
        }
    }
}

/// `exp(-x)` for `x` in `[0, REJECT_ABOVE]`, relative error below 1e-6.
#[inline]
fn exp_neg(x: f64) -> f64 {
    // exp(-x) = 2^-(k+1) * 2^(1-f) with k + f = x log2(e), 0 <= f < 1.
    let z = x * std::f64::consts::LOG2_E;
    let k = z as i64;
    let y = (1.0 - (z - k as f64)) * std::f64::consts::LN_2;
    let p = 1.0
        + y * (1.0
            + y * (0.5
                + y * (1.0 / 6.0
                    + y * (1.0 / 24.0
                        + y * (1.0 / 120.0 + y * (1.0 / 720.0 + y * (1.0 / 5040.0)))))));
    p * f64::from_bits(((1022 - k) as u64) << 52)
}

/// Fisher-Yates with multiply-shift index draws; the bias is below
/// `n / 2^32`.
fn shuffle(order: &mut [u32], rng: &mut SmallRng) {
    for i in (1..order.len()).rev() {
        let j = ((u64::from(rng.next_u32()) * (i as u64 + 1)) >> 32) as usize;
        order.swap(i, j);
    }
}

pub(crate) fn read_rng(seed: u64, read: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(read as u64);
    rng
}

fn run_read(
    model: &QuboModel,
    couplings: &Couplings,
    betas: &[f64],
    seed: u64,
    read: usize,
) -> (Vec<bool>, f64) {
    let n = model.num_variables();
    let linear = model.linear();
    let mut rng = SmallRng::from_rng(&mut read_rng(seed, read));
    let mut state: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();

    let mut field = linear.to_vec();
    for (v, _) in state.iter().enumerate().filter(|(_, &on)| on) {
        for e in couplings.start[v]..couplings.start[v + 1] {
            field[couplings.neighbour[e] as usize] += couplings.weight[e];
        }
    }
    let mut energy = model.energy_unchecked(&state);

    let mut order: Vec<u32> = (0..n as u32).collect();
    for &beta in betas {
        shuffle(&mut order, &mut rng);
        for &v in &order {
            let v = v as usize;
            let delta = field[v] * (1.0 - 2.0 * f64::from(state[v] as u8));
            let u: f64 = rng.random();
            let accept = u < exp_neg((beta * delta).clamp(0.0, REJECT_ABOVE));
            if accept {
                state[v] = !state[v];
                let sign = if state[v] { 1.0 } else { -1.0 };
                for e in couplings.start[v]..couplings.start[v + 1] {
                    field[couplings.neighbour[e] as usize] += sign * couplings.weight[e];
                }
                energy += delta;
            }
        }
    }
    (state, energy)
}

/// Runs `num_reads` independent annealing trajectories.
pub fn anneal(
    model: &QuboModel,
    schedule: &AnnealSchedule,
    num_reads: usize,
    seed: u64,
) -> Result<SampleSet> {
    if num_reads == 0 {
        return Err(Error::InvalidArgument("num_reads must be at least 1".into()));
    }
    let couplings = Couplings::new(model);
    let betas: Vec<f64> = (0..schedule.sweeps).map(|t| schedule.beta_at(t)).collect();
    let tol = energy_tolerance(model);

    let samples = (0..num_reads)
        .into_par_iter()
        .map(|read| {
            let (bits, tracked) = run_read(model, &couplings, &betas, seed, read);
            let energy = model.energy_unchecked(&bits);
            if (energy - tracked).abs() > tol {
                return Err(Error::Internal(format!(
                    "read {read}: incremental energy {tracked} drifted from {energy}"
                )));
            }
            Ok(Sample { bits, energy, read })
        })
        .collect::<Result<Vec<_>>>()?;
    SampleSet::from_samples(model, samples, seed)
}
