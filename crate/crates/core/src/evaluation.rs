//! Decoding samples into schedules, feasibility checks and benchmark reports.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::anneal::{anneal, best_sample, AnnealSchedule, DEFAULT_NUM_READS, DEFAULT_SWEEPS};
use crate::error::{Error, Result};
use crate::exact::{solve_exact, ExactSolution, MAX_EXACT_DELIVERIES};
use crate::instance::{within_budget, ConflictSet, ProblemInstance};
use crate::qubo::{
    build_qubo, evaluate_h0, BuildOptions, Formulation, PenaltyWeights, QuboModel, VarKey,
    DEFAULT_K,
};

/// Where an assignment came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentSource {
    Sa,
    Exact,
    Brute,
}

impl fmt::Display for AssignmentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignmentSource::Sa => "sa",
            AssignmentSource::Exact => "exact",
            AssignmentSource::Brute => "brute",
        })
    }
}

/// An `m x N` drone-by-delivery matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    drones: usize,
    deliveries: usize,
    cells: Vec<bool>,
    source: AssignmentSource,
}

impl Assignment {
    pub fn zeros(drones: usize, deliveries: usize, source: AssignmentSource) -> Self {
        Self {
            drones,
            deliveries,
            cells: vec![false; drones * deliveries],
            source,
        }
    }

    pub fn from_rows(rows: Vec<Vec<bool>>, source: AssignmentSource) -> Result<Self> {
        let deliveries = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != deliveries) {
            return Err(Error::InvalidArgument(
                "assignment rows must all have the same length".into(),
            ));
        }
        Ok(Self {
            drones: rows.len(),
            deliveries,
            cells: rows.into_iter().flatten().collect(),
            source,
        })
    }

    /// Route `r` of `parts` (delivery bitmasks) goes to drone `r`.
    pub fn from_partition(
        drones: usize,
        deliveries: usize,
        parts: &[u32],
        source: AssignmentSource,
    ) -> Result<Self> {
        if parts.len() > drones {
            return Err(Error::InvalidArgument(format!(
                "{} routes do not fit on {drones} drones",
                parts.len()
            )));
        }
        let mut a = Self::zeros(drones, deliveries, source);
        for (i, &mask) in parts.iter().enumerate() {
            for j in 0..32 {
                if mask >> j & 1 == 1 {
                    if j >= deliveries {
                        return Err(Error::InvalidArgument(format!(
                            "route mask {mask:#b} names delivery {j} of {deliveries}"
                        )));
                    }
                    a.set(i, j, true);
                }
            }
        }
        Ok(a)
    }

    pub fn num_drones(&self) -> usize {
        self.drones
    }

    pub fn num_deliveries(&self) -> usize {
        self.deliveries
    }

    pub fn source(&self) -> AssignmentSource {
        self.source
    }

    pub fn get(&self, drone: usize, delivery: usize) -> bool {
        self.cells[drone * self.deliveries + delivery]
    }

    pub fn set(&mut self, drone: usize, delivery: usize, value: bool) {
        self.cells[drone * self.deliveries + delivery] = value;
    }

    pub fn row(&self, drone: usize) -> &[bool] {
        &self.cells[drone * self.deliveries..(drone + 1) * self.deliveries]
    }

    pub fn rows(&self) -> Vec<Vec<bool>> {
        (0..self.drones).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn row_sum(&self, drone: usize) -> usize {
        self.row(drone).iter().filter(|&&b| b).count()
    }

    pub fn column_sum(&self, delivery: usize) -> usize {
        (0..self.drones).filter(|&i| self.get(i, delivery)).count()
    }

    /// Drones with at least one delivery.
    pub fn used_drones(&self) -> usize {
        (0..self.drones).filter(|&i| self.row_sum(i) > 0).count()
    }

    /// Writes the matrix into the `x` variables of `model`; every other
    /// variable is left at zero.
    pub fn to_bits(&self, model: &QuboModel) -> Result<Vec<bool>> {
        let mut bits = vec![false; model.num_variables()];
        for i in 0..self.drones {
            for j in 0..self.deliveries {
                let key = VarKey::Assign { drone: i, delivery: j };
                let v = model
                    .index_of(&key)
                    .ok_or_else(|| Error::InvalidArgument(format!("model lacks variable {key}")))?;
                bits[v] = self.get(i, j);
            }
        }
        Ok(bits)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.drones {
            let row: String = self.row(i).iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Reads the `x[i][j]` block of `bits`. The shape comes from the model's
/// build metadata, or from the largest indices present when it has none.
pub fn decode(model: &QuboModel, bits: &[bool], source: AssignmentSource) -> Result<Assignment> {
    if bits.len() < model.num_variables() {
        return Err(Error::MissingVariable(
            model.variables()[bits.len()].to_string(),
        ));
    }
    let mut cells = Vec::new();
    for (v, key) in model.variables().iter().enumerate() {
        if let VarKey::Assign { drone, delivery } = *key {
            cells.push((drone, delivery, bits[v]));
        }
    }
    if cells.is_empty() {
        return Err(Error::NoAssignmentBlock);
    }
    let (m, n) = match model.metadata() {
        Some(meta) => (meta.num_drones, meta.num_deliveries),
        None => (
            cells.iter().map(|c| c.0).max().unwrap_or(0) + 1,
            cells.iter().map(|c| c.1).max().unwrap_or(0) + 1,
        ),
    };
    let mut a = Assignment::zeros(m, n, source);
    for (i, j, b) in cells {
        if i < m && j < n {
            a.set(i, j, b);
        }
    }
    Ok(a)
}

/// `[battery, time, all deliveries once]` satisfaction of a schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FeasibilityTriplet {
    pub battery: bool,
    pub time: bool,
    pub all_once: bool,
}

impl FeasibilityTriplet {
    pub fn is_feasible(&self) -> bool {
        self.battery && self.time && self.all_once
    }

    pub fn as_array(&self) -> [u8; 3] {
        [self.battery as u8, self.time as u8, self.all_once as u8]
    }
}

impl fmt::Display for FeasibilityTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c] = self.as_array();
        write!(f, "[{a} {b} {c}]")
    }
}

/// Checks the three constraint families independently.
///
/// Panics if the assignment does not have `N` delivery columns.
pub fn feasibility(
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
    a: &Assignment,
) -> FeasibilityTriplet {
    let n = instance.num_deliveries();
    assert_eq!(
        a.num_deliveries(),
        n,
        "assignment has {} columns for {n} deliveries",
        a.num_deliveries()
    );
    let costs = instance.costs();
    let budget = instance.battery_budget();
    let battery = (0..a.num_drones()).all(|i| {
        let load: f64 = (0..n).filter(|&j| a.get(i, j)).map(|j| costs[j]).sum();
        within_budget(load, budget)
    });
    let time = (0..a.num_drones()).all(|i| {
        conflicts
            .pairs()
            .iter()
            .all(|&(j, k)| !(a.get(i, j) && a.get(i, k)))
    });
    let all_once = (0..n).all(|j| a.column_sum(j) == 1);
    FeasibilityTriplet {
        battery,
        time,
        all_once,
    }
}

/// Settings shared by every benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig {
    pub formulation: Formulation,
    pub k: f64,
    pub options: BuildOptions,
    pub reads: usize,
    pub sweeps: usize,
    pub runs: usize,
    pub seed: u64,
    /// Replaces each instance's drone count when set.
    pub num_drones: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            formulation: Formulation::Proxy,
            k: DEFAULT_K,
            options: BuildOptions::default(),
            reads: DEFAULT_NUM_READS,
            sweeps: DEFAULT_SWEEPS,
            runs: 10,
            seed: 0,
            num_drones: None,
        }
    }
}

impl SolverConfig {
    /// Seed of run `run`.
    pub fn run_seed(&self, run: usize) -> u64 {
        self.seed.wrapping_add(run as u64)
    }

    pub fn prepare(&self, instance: &ProblemInstance) -> Result<ProblemInstance> {
        match self.num_drones {
            Some(m) => instance.with_drones(m),
            None => Ok(instance.clone()),
        }
    }

    pub fn build(&self, instance: &ProblemInstance) -> Result<QuboModel> {
        let weights = PenaltyWeights::for_instance(self.formulation, instance, self.k);
        build_qubo(self.formulation, instance, &weights, &self.options)
    }
}

/// Outcome of one anneal call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub time_s: f64,
    pub energy: f64,
    pub h0: f64,
    pub drones: usize,
    pub triplet: FeasibilityTriplet,
}

/// Anneals `model` once and decodes its best sample.
pub fn single_run(
    instance: &ProblemInstance,
    conflicts: &ConflictSet,
    model: &QuboModel,
    schedule: &AnnealSchedule,
    reads: usize,
    seed: u64,
) -> Result<(RunResult, Assignment)> {
    let start = Instant::now();
    let set = anneal(model, schedule, reads, seed)?;
    let best = best_sample(&set)?.clone();
    let time_s = start.elapsed().as_secs_f64();
    let a = decode(model, &best.bits, AssignmentSource::Sa)?;
    let result = RunResult {
        seed,
        time_s,
        energy: best.energy,
        h0: evaluate_h0(instance, &a),
        drones: a.used_drones(),
        triplet: feasibility(instance, conflicts, &a),
    };
    Ok((result, a))
}

/// Aggregate of `R` anneal calls on one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub label: String,
    pub formulation: Formulation,
    pub num_drones: usize,
    pub num_deliveries: usize,
    pub variables: usize,
    pub avg_time_s: f64,
    pub solution_avg: f64,
    pub solution_best: f64,
    pub drones_avg: f64,
    pub drones_best: usize,
    pub triplet_avg: [f64; 3],
    pub triplet_best: FeasibilityTriplet,
    /// Index into `runs` of the best run.
    pub best_run: usize,
    pub exact_min_h0: Option<f64>,
    pub exact_min_drones: Option<usize>,
    /// Why the exact columns are empty, when they are.
    pub exact_note: Option<String>,
    pub runs: Vec<RunResult>,
}

impl RunReport {
    /// Fraction of runs whose best sample is fully feasible.
    pub fn feasible_fraction(&self) -> f64 {
        let ok = self.runs.iter().filter(|r| r.triplet.is_feasible()).count();
        ok as f64 / self.runs.len() as f64
    }

    /// Mean H0 over fully feasible runs, if any.
    pub fn avg_feasible_h0(&self) -> Option<f64> {
        let feasible: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.triplet.is_feasible())
            .map(|r| r.h0)
            .collect();
        if feasible.is_empty() {
            None
        } else {
            Some(feasible.iter().sum::<f64>() / feasible.len() as f64)
        }
    }

    pub fn any_feasible(&self) -> bool {
        self.runs.iter().any(|r| r.triplet.is_feasible())
    }
}

fn exact_reference(instance: &ProblemInstance, conflicts: &ConflictSet) -> (Option<ExactSolution>, Option<String>) {
    if instance.num_deliveries() > MAX_EXACT_DELIVERIES {
        return (None, Some("too many deliveries for the exact solver".into()));
    }
    match solve_exact(instance, conflicts, instance.num_drones()) {
        Ok(sol) => (Some(sol), None),
        Err(e @ Error::Infeasible { .. }) => (None, Some(e.to_string())),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn aggregate(
    instance: &ProblemInstance,
    formulation: Formulation,
    variables: usize,
    runs: Vec<RunResult>,
    exact: Option<&ExactSolution>,
    exact_note: Option<String>,
) -> Result<RunReport> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("at least one run is required".into()));
    }
    let r = runs.len() as f64;
    let best_run = (0..runs.len())
        .min_by(|&a, &b| runs[a].h0.total_cmp(&runs[b].h0).then(a.cmp(&b)))
        .unwrap_or(0);
    let best = &runs[best_run];
    let mut triplet_avg = [0.0; 3];
    for run in &runs {
        for (acc, bit) in triplet_avg.iter_mut().zip(run.triplet.as_array()) {
            *acc += bit as f64 / r;
        }
    }
    if let Some(sol) = exact {
        for run in runs.iter().filter(|run| run.triplet.is_feasible()) {
            if run.h0 < sol.min_h0 {
                return Err(Error::Internal(format!(
                    "{}: feasible run with seed {} has H0 {} below the exact minimum {}",
                    instance.label, run.seed, run.h0, sol.min_h0
                )));
            }
        }
    }
    Ok(RunReport {
        label: instance.label.clone(),
        formulation,
        num_drones: instance.num_drones(),
        num_deliveries: instance.num_deliveries(),
        variables,
        avg_time_s: runs.iter().map(|x| x.time_s).sum::<f64>() / r,
        solution_avg: runs.iter().map(|x| x.h0).sum::<f64>() / r,
        solution_best: best.h0,
        drones_avg: runs.iter().map(|x| x.drones as f64).sum::<f64>() / r,
        drones_best: best.drones,
        triplet_avg,
        triplet_best: best.triplet,
        best_run,
        exact_min_h0: exact.map(|s| s.min_h0),
        exact_min_drones: exact.map(|s| s.min_drones),
        exact_note,
        runs,
    })
}

/// `config.runs` anneal calls on one instance, with the exact reference.
pub fn benchmark_instance(instance: &ProblemInstance, config: &SolverConfig) -> Result<RunReport> {
    if config.runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    let instance = config.prepare(instance)?;
    let conflicts = instance.conflicts(config.options.convention);
    let model = config.build(&instance)?;
    let schedule = AnnealSchedule::for_model(&model, config.sweeps)?;
    log::info!(
        "{}: {} variables, beta {:.4e}..{:.4e}",
        instance.label,
        model.num_variables(),
        schedule.beta_start,
        schedule.beta_end
    );
    let (exact, note) = exact_reference(&instance, &conflicts);
    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let (result, _) = single_run(
            &instance,
            &conflicts,
            &model,
            &schedule,
            config.reads,
            config.run_seed(run),
        )?;
        log::debug!("{} run {run}: H0 {} {}", instance.label, result.h0, result.triplet);
        runs.push(result);
    }
    aggregate(
        &instance,
        config.formulation,
        model.num_variables(),
        runs,
        exact.as_ref(),
        note,
    )
}

/// Benchmarks every instance; one failure does not stop the others.
/// Instances run on up to `jobs` threads and come back in input order.
pub fn run_benchmark(
    instances: &[ProblemInstance],
    config: &SolverConfig,
    jobs: usize,
) -> Vec<Result<RunReport>> {
    if jobs <= 1 {
        return instances.iter().map(|i| benchmark_instance(i, config)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| {
            instances
                .par_iter()
                .map(|i| benchmark_instance(i, config))
                .collect()
        }),
        Err(e) => {
            log::warn!("could not start {jobs} workers ({e}); running serially");
            instances.iter().map(|i| benchmark_instance(i, config)).collect()
        }
    }
}

/// One point of the size-scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub label: String,
    pub num_deliveries: usize,
    pub variables: usize,
    pub feasibility_pct: f64,
    /// Mean H0 of the fully feasible runs; absent when none was feasible.
    pub avg_feasible_energy: Option<f64>,
    pub exact_energy: Option<f64>,
    pub avg_time_s: f64,
}

impl From<&RunReport> for ScalingRow {
    fn from(r: &RunReport) -> Self {
        Self {
            label: r.label.clone(),
            num_deliveries: r.num_deliveries,
            variables: r.variables,
            feasibility_pct: 100.0 * r.feasible_fraction(),
            avg_feasible_energy: r.avg_feasible_h0(),
            exact_energy: r.exact_min_h0,
            avg_time_s: r.avg_time_s,
        }
    }
}

/// Benchmarks one instance per size and reduces each report to a row.
pub fn scaling_experiment(
    instances: &[ProblemInstance],
    config: &SolverConfig,
) -> Result<Vec<ScalingRow>> {
    instances
        .iter()
        .map(|i| benchmark_instance(i, config).map(|r| ScalingRow::from(&r)))
        .collect()
}

/// Generated instances for sizes `sizes`, one per size, seed offset by size.
pub fn scaling_instances(
    sizes: &[usize],
    m: usize,
    budget: f64,
    seed: u64,
    distribution: crate::instance::CostDistribution,
) -> Result<Vec<ProblemInstance>> {
    sizes
        .iter()
        .map(|&n| crate::instance::generate_instance(seed.wrapping_add(n as u64), m, n, budget, distribution))
        .collect()
}

fn one_decimal(x: f64) -> String {
    format!("{x:.1}")
}

fn triplet_avg_cell(t: &[f64; 3]) -> String {
    format!("[{:.1} {:.1} {:.1}]", t[0], t[1], t[2])
}

pub const REPORT_COLUMNS: [&str; 12] = [
    "instance",
    "avg_time_s",
    "solution_avg",
    "solution_best",
    "solution_exact",
    "drones_avg",
    "drones_best",
    "drones_exact",
    "triplet_avg",
    "triplet_best",
    "variables",
    "feasible_runs",
];

fn report_record(r: &RunReport) -> Vec<String> {
    vec![
        r.label.clone(),
        format!("{:.2}", r.avg_time_s),
        one_decimal(r.solution_avg),
        format!("{}", r.solution_best),
        r.exact_min_h0.map(|v| v.to_string()).unwrap_or_default(),
        one_decimal(r.drones_avg),
        r.drones_best.to_string(),
        r.exact_min_drones.map(|v| v.to_string()).unwrap_or_default(),
        triplet_avg_cell(&r.triplet_avg),
        r.triplet_best.to_string(),
        r.variables.to_string(),
        format!("{}/{}", r.runs.iter().filter(|x| x.triplet.is_feasible()).count(), r.runs.len()),
    ]
}

fn csv_error(e: csv::Error) -> Error {
    Error::Internal(format!("csv write failed: {e}"))
}

/// Writes reports as CSV, preceded by `# key: value` header lines.
pub fn write_reports_csv<W: Write>(
    reports: &[RunReport],
    header: &[(String, String)],
    mut out: W,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(format!("report write failed: {e}"));
    for (k, v) in header {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS).map_err(csv_error)?;
    for r in reports {
        w.write_record(report_record(r)).map_err(csv_error)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Writes the per-run rows of one report.
pub fn write_runs_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["run", "seed", "time_s", "energy", "h0", "drones", "battery", "time", "all_once"])
        .map_err(csv_error)?;
    for (i, r) in report.runs.iter().enumerate() {
        let [a, b, c] = r.triplet.as_array();
        w.write_record([
            i.to_string(),
            r.seed.to_string(),
            format!("{:.4}", r.time_s),
            r.energy.to_string(),
            r.h0.to_string(),
            r.drones.to_string(),
            a.to_string(),
            b.to_string(),
            c.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()
        .map_err(|e| Error::Internal(format!("report write failed: {e}")))?;
    Ok(())
}

pub fn write_scaling_csv<W: Write>(
    rows: &[ScalingRow],
    header: &[(String, String)],
    mut out: W,
) -> Result<()> {
    let io = |e: std::io::Error| Error::Internal(format!("report write failed: {e}"));
    for (k, v) in header {
        writeln!(out, "# {k}: {v}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "instance",
        "n",
        "variables",
        "feasibility_pct",
        "avg_feasible_energy",
        "exact_energy",
        "avg_time_s",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.num_deliveries.to_string(),
            r.variables.to_string(),
            one_decimal(r.feasibility_pct),
            r.avg_feasible_energy.map(one_decimal).unwrap_or_default(),
            r.exact_energy.map(|v| v.to_string()).unwrap_or_default(),
            format!("{:.2}", r.avg_time_s),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Saves `text` at `path`, mapping failures to [`Error::Io`].
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::brute_force_qubo;
    use crate::instance::{conflict_pairs, OverlapConvention};
    use crate::qubo::build_qubo2;

    fn inst(costs: Vec<f64>, budget: f64, intervals: &[[u32; 2]], m: usize) -> ProblemInstance {
        ProblemInstance::from_raw("t", m, budget, costs, intervals).unwrap()
    }

    fn toy() -> ProblemInstance {
        inst(vec![1.0, 1.0], 3.0, &[[8, 9], [10, 11]], 2)
    }

    #[test]
    fn decode_toy_ground_state() {
        let i = toy();
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &i, DEFAULT_K);
        let model = build_qubo2(&i, &w, &BuildOptions::default()).unwrap();
        let (bits, _) = brute_force_qubo(&model).unwrap();
        let a = decode(&model, &bits, AssignmentSource::Brute).unwrap();
        let mut sums = vec![a.row_sum(0), a.row_sum(1)];
        sums.sort();
        assert_eq!(sums, vec![0, 2]);
        assert_eq!(a.source(), AssignmentSource::Brute);
    }

    #[test]
    fn decode_zero_bits_and_round_trip() {
        let i = toy();
        let w = PenaltyWeights::for_instance(Formulation::Standard, &i, DEFAULT_K);
        let model = crate::qubo::build_qubo1(&i, &w, &BuildOptions::default()).unwrap();
        let zero = decode(&model, &vec![false; model.num_variables()], AssignmentSource::Sa).unwrap();
        assert_eq!(zero, Assignment::zeros(2, 2, AssignmentSource::Sa));
        let a = Assignment::from_rows(vec![vec![true, false], vec![false, true]], AssignmentSource::Sa)
            .unwrap();
        assert_eq!(decode(&model, &a.to_bits(&model).unwrap(), AssignmentSource::Sa).unwrap(), a);
    }

    #[test]
    fn decode_errors() {
        let mut b = crate::qubo::QuboBuilder::new();
        b.add_var(VarKey::Used { drone: 0 });
        let model = b.finish().unwrap();
        assert!(matches!(decode(&model, &[true], AssignmentSource::Sa), Err(Error::NoAssignmentBlock)));
        let i = toy();
        let w = PenaltyWeights::for_instance(Formulation::Proxy, &i, DEFAULT_K);
        let model = build_qubo2(&i, &w, &BuildOptions::default()).unwrap();
        let err = decode(&model, &[false; 3], AssignmentSource::Sa).unwrap_err();
        assert_eq!(err.to_string(), "assignment does not cover variable x[1][1]");
    }

    #[test]
    fn decode_without_metadata_infers_shape() {
        let mut b = crate::qubo::QuboBuilder::new();
        b.add_var(VarKey::Assign { drone: 1, delivery: 2 });
        b.add_var(VarKey::Used { drone: 0 });
        let model = b.finish().unwrap();
        let a = decode(&model, &[true, false], AssignmentSource::Sa).unwrap();
        assert_eq!((a.num_drones(), a.num_deliveries()), (2, 3));
        assert!(a.get(1, 2));
    }

    #[test]
    fn triplet_examples() {
        let i = inst(vec![2.0, 2.0], 3.0, &[[8, 9], [10, 11]], 2);
        let c = conflict_pairs(&i, OverlapConvention::Open);
        let both = Assignment::from_rows(vec![vec![true, true], vec![false, false]], AssignmentSource::Sa)
            .unwrap();
        assert_eq!(feasibility(&i, &c, &both).as_array(), [0, 1, 1]);
        let zero = Assignment::zeros(2, 2, AssignmentSource::Sa);
        assert_eq!(feasibility(&i, &c, &zero).as_array(), [1, 1, 0]);

        let clash = inst(vec![1.0, 1.0], 3.0, &[[8, 10], [9, 11]], 2);
        let cc = conflict_pairs(&clash, OverlapConvention::Open);
        let doubled = Assignment::from_rows(vec![vec![true, true], vec![true, false]], AssignmentSource::Sa)
            .unwrap();
        // All three checks run even when the first ones fail.
        assert_eq!(feasibility(&clash, &cc, &doubled).as_array(), [1, 0, 0]);
    }

    #[test]
    fn exact_partition_is_feasible() {
        let i = inst(
            vec![13.3, 41.9, 43.7, 19.0],
            50.0,
            &[[16, 18], [13, 14], [10, 11], [13, 16]],
            10,
        );
        let c = conflict_pairs(&i, OverlapConvention::Open);
        let sol = solve_exact(&i, &c, 10).unwrap();
        let a = sol.min_h0_assignment(10, 4).unwrap();
        assert_eq!(feasibility(&i, &c, &a).as_array(), [1, 1, 1]);
        assert_eq!(evaluate_h0(&i, &a), sol.min_h0);
    }

    #[test]
    fn feasibility_ignores_row_order() {
        let i = inst(vec![1.0, 2.0, 2.5], 3.0, &[[8, 9], [8, 10], [12, 13]], 3);
        let c = conflict_pairs(&i, OverlapConvention::Open);
        let rows = vec![vec![true, false, true], vec![false, true, false], vec![false, false, false]];
        let a = Assignment::from_rows(rows.clone(), AssignmentSource::Sa).unwrap();
        let mut rev = rows;
        rev.reverse();
        let b = Assignment::from_rows(rev, AssignmentSource::Sa).unwrap();
        assert_eq!(feasibility(&i, &c, &a), feasibility(&i, &c, &b));
    }

    fn run(h0: f64, drones: usize, t: [bool; 3]) -> RunResult {
        RunResult {
            seed: 0,
            time_s: 1.0,
            energy: h0,
            h0,
            drones,
            triplet: FeasibilityTriplet { battery: t[0], time: t[1], all_once: t[2] },
        }
    }

    #[test]
    fn single_run_report_has_avg_equal_best() {
        let i = toy();
        let r = aggregate(&i, Formulation::Proxy, 8, vec![run(2.0, 2, [true, true, true])], None, None)
            .unwrap();
        assert_eq!(r.solution_avg, r.solution_best);
        assert_eq!(r.drones_avg, r.drones_best as f64);
        assert_eq!(r.triplet_avg, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn best_run_is_lowest_h0_first() {
        let i = toy();
        let runs = vec![
            run(4.0, 2, [true, true, true]),
            run(2.0, 1, [false, true, true]),
            run(2.0, 2, [true, true, true]),
        ];
        let r = aggregate(&i, Formulation::Proxy, 8, runs, None, None).unwrap();
        assert_eq!(r.best_run, 1);
        assert_eq!(r.triplet_best.as_array(), [0, 1, 1]);
        assert!((r.triplet_avg[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!(r.triplet_avg.iter().all(|&x| (0.0..=1.0).contains(&x)));
        assert_eq!(r.avg_feasible_h0(), Some(3.0));
    }

    #[test]
    fn feasible_run_below_exact_is_rejected() {
        let i = toy();
        let c = conflict_pairs(&i, OverlapConvention::Open);
        let sol = solve_exact(&i, &c, 2).unwrap();
        let runs = vec![run(sol.min_h0 - 1.0, 1, [true, true, true])];
        assert!(matches!(
            aggregate(&i, Formulation::Proxy, 8, runs, Some(&sol), None),
            Err(Error::Internal(_))
        ));
    }

    #[test]
    fn no_feasible_runs_leave_average_absent() {
        let i = toy();
        let r = aggregate(&i, Formulation::Proxy, 8, vec![run(0.0, 1, [true, true, false])], None, None)
            .unwrap();
        let row = ScalingRow::from(&r);
        assert_eq!(row.feasibility_pct, 0.0);
        assert_eq!(row.avg_feasible_energy, None);
    }

    #[test]
    fn small_benchmark_is_deterministic_apart_from_timing() {
        let config = SolverConfig {
            reads: 20,
            sweeps: 50,
            runs: 3,
            seed: 5,
            ..SolverConfig::default()
        };
        let strip = |mut r: RunReport| {
            r.avg_time_s = 0.0;
            for x in &mut r.runs {
                x.time_s = 0.0;
            }
            r
        };
        let a = strip(benchmark_instance(&toy(), &config).unwrap());
        let b = strip(benchmark_instance(&toy(), &config).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 3);
        assert_eq!(a.exact_min_h0, Some(0.0));
    }

    #[test]
    fn batch_keeps_going_after_a_failure() {
        let bad = inst(vec![60.0, 60.0], 70.0, &[[8, 9], [8, 9]], 1);
        let config = SolverConfig {
            reads: 5,
            sweeps: 10,
            runs: 1,
            num_drones: Some(0),
            ..SolverConfig::default()
        };
        let out = run_benchmark(&[bad, toy()], &config, 1);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|r| r.is_err()));
        let config = SolverConfig { num_drones: None, ..config };
        let out = run_benchmark(&[inst(vec![60.0, 60.0], 70.0, &[[8, 9], [8, 9]], 1), toy()], &config, 2);
        assert!(out[0].as_ref().unwrap().exact_note.is_some());
        assert!(out[1].is_ok());
    }

    #[test]
    fn report_csv_has_table_columns() {
        let i = toy();
        let r = aggregate(&i, Formulation::Proxy, 8, vec![run(2.0, 2, [true, true, true])], None, None)
            .unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[r], &[("seed".into(), "1".into())], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# seed: 1"));
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert_eq!(lines.next(), Some("t,1.00,2.0,2,,2.0,2,,[1.0 1.0 1.0],[1 1 1],8,1/1"));
    }
}
