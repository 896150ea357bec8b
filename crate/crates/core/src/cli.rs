//! The `ddpp` command line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::anneal::{anneal, best_sample, AnnealSchedule, DEFAULT_NUM_READS, DEFAULT_SWEEPS};
use crate::error::{Error, Result};
use crate::evaluation::{
    decode, feasibility, run_benchmark, scaling_experiment, write_reports_csv, write_runs_csv,
    write_scaling_csv, AssignmentSource, RunReport, SolverConfig,
};
use crate::exact::{
    brute_force_qubo, clique_lower_bound, partition_lists, solve_exact, volume_lower_bound,
};
use crate::instance::{
    generate_instance, instance_to_json, load_instance, save_instance, CostDistribution,
    OverlapConvention, ProblemInstance,
};
use crate::qubo::{
    complete_slacks, evaluate_h0, predict_var_count_q1, predict_var_count_q2, BuildOptions,
    ConflictSlackMode, Formulation, QuboModel, SlackBitRule, DEFAULT_K,
};

#[derive(Debug, Parser)]
#[command(name = "ddpp", version, about = "Drone delivery packing with QUBO models")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Base random seed
    #[arg(long, global = true, env = "DDPP_SEED", default_value_t = 0)]
    pub seed: u64,

    /// Interval overlap rule: open (positive-length overlap) or closed
    #[arg(long, global = true, default_value_t = OverlapConvention::Open)]
    pub convention: OverlapConvention,

    /// Conflict slack granularity: per-pair or per-drone
    #[arg(long, global = true, default_value_t = ConflictSlackMode::PerPair)]
    pub slack_mode: ConflictSlackMode,

    /// Battery slack width rule: log2 (ceil log2 B) or exact (ceil log2 (B+1))
    #[arg(long, global = true, default_value_t = SlackBitRule::Log2)]
    pub slack_bits: SlackBitRule,

    /// Multiply costs and budget by this factor before encoding
    #[arg(long, global = true, default_value_t = 1.0)]
    pub scale_costs: f64,

    /// Multiplier of the all-deliveries-once penalty weight
    #[arg(long, global = true, default_value_t = DEFAULT_K)]
    pub k: f64,

    /// Annealing reads per call
    #[arg(long, global = true, default_value_t = DEFAULT_NUM_READS)]
    pub reads: usize,

    /// Sweeps per read
    #[arg(long, global = true, default_value_t = DEFAULT_SWEEPS)]
    pub sweeps: usize,

    /// Annealing calls per instance in bench and scale
    #[arg(long, global = true, default_value_t = 10)]
    pub runs: usize,
}

impl GlobalArgs {
    fn build_options(&self) -> BuildOptions {
        BuildOptions {
            convention: self.convention,
            conflict_slack: self.slack_mode,
            slack_bits: self.slack_bits,
            cost_scale: self.scale_costs,
        }
    }

    fn solver_config(&self, formulation: Formulation, num_drones: Option<usize>) -> SolverConfig {
        SolverConfig {
            formulation,
            k: self.k,
            options: self.build_options(),
            reads: self.reads,
            sweeps: self.sweeps,
            runs: self.runs,
            seed: self.seed,
            num_drones,
        }
    }

    fn header(&self, command: &str) -> Vec<(String, String)> {
        vec![
            ("ddpp".into(), env!("CARGO_PKG_VERSION").into()),
            ("command".into(), command.into()),
            ("seed".into(), self.seed.to_string()),
            ("convention".into(), self.convention.to_string()),
            ("slack-mode".into(), self.slack_mode.to_string()),
            ("slack-bits".into(), self.slack_bits.to_string()),
            ("scale-costs".into(), self.scale_costs.to_string()),
            ("k".into(), self.k.to_string()),
            ("reads".into(), self.reads.to_string()),
            ("sweeps".into(), self.sweeps.to_string()),
            ("runs".into(), self.runs.to_string()),
            (
                "schedule".into(),
                "linear beta from ln(2)/dE_max to ln(1000)/dE_min".into(),
            ),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolverKind {
    Sa,
    Exact,
    Brute,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random instance
    Gen {
        #[arg(long)]
        m: usize,
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "B")]
        b: f64,
        #[arg(long, default_value_t = CostDistribution::Gaussian)]
        dist: CostDistribution,
        /// Output file; the instance goes to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a QUBO model from an instance
    Build {
        instance: PathBuf,
        /// 1 = standard encoding, 2 = proxy objective
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        formulation: u8,
        /// Output file; the model goes to stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve one instance
    Solve {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = SolverKind::Sa)]
        solver: SolverKind,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        formulation: u8,
        /// Override the instance's drone count
        #[arg(long)]
        m: Option<usize>,
        /// Write the exact solution (exact) or all samples (sa) here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark every instance file in a directory
    Bench {
        dir: PathBuf,
        #[arg(long, default_value = "reports")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        formulation: u8,
        #[arg(long)]
        m: Option<usize>,
    },
    /// Check encoding invariants on one instance
    Verify { instance: PathBuf },
    /// Feasibility and energy of annealing across instance sizes
    Scale {
        #[arg(required = true)]
        instances: Vec<PathBuf>,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
        formulation: u8,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_header(out: &mut dyn Write, header: &[(String, String)]) -> Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}: {v}").map_err(stdout_error)?;
    }
    Ok(())
}

fn stdout_error(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn formulation(n: u8) -> Result<Formulation> {
    Formulation::from_number(n)
}

fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "inst") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen { m, n, b, dist, out: path } => {
            let instance = generate_instance(g.seed, *m, *n, *b, *dist)?;
            match path {
                Some(p) => {
                    save_instance(&instance, p)?;
                    write_header(out, &g.header("gen"))?;
                    writeln!(out, "wrote {} ({})", p.display(), instance.label).map_err(stdout_error)?;
                }
                None => {
                    write_header(&mut std::io::stderr(), &g.header("gen"))?;
                    writeln!(out, "{}", instance_to_json(&instance)).map_err(stdout_error)?;
                }
            }
        }
        Command::Build { instance, formulation: f, out: path } => {
            let inst = load_instance(instance)?;
            let config = g.solver_config(formulation(*f)?, None);
            let model = config.build(&inst)?;
            match path {
                Some(p) => {
                    model.save(p)?;
                    write_header(out, &g.header("build"))?;
                    writeln!(
                        out,
                        "formulation {}: {} variables, {} couplings -> {}",
                        f,
                        model.num_variables(),
                        model.quadratic().len(),
                        p.display()
                    )
                    .map_err(stdout_error)?;
                }
                None => {
                    write_header(&mut std::io::stderr(), &g.header("build"))?;
                    writeln!(out, "{}", model.to_json()).map_err(stdout_error)?;
                }
            }
        }
        Command::Solve { instance, solver, formulation: f, m, out: path } => {
            let mut inst = load_instance(instance)?;
            if let Some(m) = m {
                inst = inst.with_drones(*m)?;
            }
            let mut header = g.header("solve");
            header.push(("solver".into(), format!("{solver:?}").to_lowercase()));
            header.push(("instance".into(), inst.label.clone()));
            write_header(out, &header)?;
            match solver {
                SolverKind::Exact => solve_exact_cmd(g, &inst, path.as_deref(), out)?,
                SolverKind::Sa => solve_sa_cmd(g, &inst, formulation(*f)?, path.as_deref(), out)?,
                SolverKind::Brute => solve_brute_cmd(g, &inst, formulation(*f)?, out)?,
            }
        }
        Command::Bench { dir, out_dir, jobs, formulation: f, m } => {
            bench_cmd(g, dir, out_dir, *jobs, formulation(*f)?, *m, out)?
        }
        Command::Verify { instance } => verify_cmd(g, &load_instance(instance)?, out)?,
        Command::Scale { instances, formulation: f, m, out: path } => {
            let loaded = instances
                .iter()
                .map(load_instance)
                .collect::<Result<Vec<_>>>()?;
            let config = g.solver_config(formulation(*f)?, *m);
            let rows = scaling_experiment(&loaded, &config)?;
            let header = g.header("scale");
            match path {
                Some(p) => {
                    write_scaling_csv(&rows, &header, create(p)?)?;
                    write_header(out, &header)?;
                    writeln!(out, "wrote {}", p.display()).map_err(stdout_error)?;
                }
                None => write_scaling_csv(&rows, &header, out)?,
            }
        }
    }
    Ok(())
}

fn solve_exact_cmd(
    g: &GlobalArgs,
    inst: &ProblemInstance,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let conflicts = inst.conflicts(g.convention);
    let sol = solve_exact(inst, &conflicts, inst.num_drones())?;
    let o = &mut *out;
    let w = |o: &mut dyn Write, line: String| writeln!(o, "{line}").map_err(stdout_error);
    w(o, format!("min_drones: {}", sol.min_drones))?;
    w(o, format!("min_h0: {}", sol.min_h0))?;
    w(o, format!("min_h0_drones: {}", sol.min_h0_drones))?;
    w(o, format!("partition: {:?}", partition_lists(&sol.min_h0_partition)))?;
    w(o, format!("clique_bound: {}", clique_lower_bound(&conflicts)))?;
    w(o, format!("volume_bound: {}", volume_lower_bound(inst)))?;
    if let Some(p) = path {
        let export = serde_json::json!({
            "min_drones": sol.min_drones,
            "min_h0": sol.min_h0,
            "partition": partition_lists(&sol.min_h0_partition),
            "convention": sol.convention,
        });
        let text = serde_json::to_string_pretty(&export)
            .map_err(|e| Error::Internal(format!("json export failed: {e}")))?;
        write_file(p, &text)?;
    }
    Ok(())
}

fn print_assignment_summary(
    inst: &ProblemInstance,
    g: &GlobalArgs,
    model: &QuboModel,
    bits: &[bool],
    energy: f64,
    source: AssignmentSource,
    out: &mut dyn Write,
) -> Result<()> {
    let a = decode(model, bits, source)?;
    let t = feasibility(inst, &inst.conflicts(g.convention), &a);
    let text = format!(
        "variables: {}\nenergy: {}\nh0: {}\ndrones: {}\ntriplet: {}\nassignment:\n{}",
        model.num_variables(),
        energy,
        evaluate_h0(inst, &a),
        a.used_drones(),
        t,
        a
    );
    write!(out, "{text}").map_err(stdout_error)
}

fn solve_sa_cmd(
    g: &GlobalArgs,
    inst: &ProblemInstance,
    f: Formulation,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let config = g.solver_config(f, None);
    let model = config.build(inst)?;
    let schedule = AnnealSchedule::for_model(&model, g.sweeps)?;
    writeln!(out, "beta: {:.6e} .. {:.6e}", schedule.beta_start, schedule.beta_end)
        .map_err(stdout_error)?;
    let set = anneal(&model, &schedule, g.reads, g.seed)?;
    let best = best_sample(&set)?;
    writeln!(out, "best_read: {}", best.read).map_err(stdout_error)?;
    print_assignment_summary(inst, g, &model, &best.bits, best.energy, AssignmentSource::Sa, out)?;
    if let Some(p) = path {
        set.write_csv(&model, create(p)?)?;
    }
    Ok(())
}

fn solve_brute_cmd(
    g: &GlobalArgs,
    inst: &ProblemInstance,
    f: Formulation,
    out: &mut dyn Write,
) -> Result<()> {
    let model = g.solver_config(f, None).build(inst)?;
    let (bits, energy) = brute_force_qubo(&model)?;
    print_assignment_summary(inst, g, &model, &bits, energy, AssignmentSource::Brute, out)
}

fn bench_cmd(
    g: &GlobalArgs,
    dir: &Path,
    out_dir: &Path,
    jobs: usize,
    f: Formulation,
    m: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let files = instance_files(dir)?;
    let mut header = g.header("bench");
    header.push(("formulation".into(), f.number().to_string()));
    header.push(("instances".into(), dir.display().to_string()));
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if files.is_empty() {
        eprintln!("warning: no .inst files in {}", dir.display());
    }
    let instances = files
        .iter()
        .map(load_instance)
        .collect::<Result<Vec<_>>>()?;
    let config = g.solver_config(f, m);
    let results = run_benchmark(&instances, &config, jobs.max(1));

    let mut reports: Vec<RunReport> = Vec::new();
    let mut failures = Vec::new();
    for (file, result) in files.iter().zip(results) {
        match result {
            Ok(r) => {
                let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                write_runs_csv(&r, create(&out_dir.join(format!("{stem}.csv")))?)?;
                reports.push(r);
            }
            Err(e) => {
                eprintln!("error: {}: {e}", file.display());
                failures.push((file.display().to_string(), e));
            }
        }
    }
    for (file, e) in &failures {
        header.push(("failed".into(), format!("{file}: {e}")));
    }
    let summary = out_dir.join("summary.csv");
    write_reports_csv(&reports, &header, create(&summary)?)?;
    write_reports_csv(&reports, &header, &mut *out)?;
    match failures.into_iter().next() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

fn verify_cmd(g: &GlobalArgs, inst: &ProblemInstance, out: &mut dyn Write) -> Result<()> {
    let mut header = g.header("verify");
    header.push(("instance".into(), inst.label.clone()));
    write_header(out, &header)?;
    let mut failed = Vec::new();
    let mut report = |o: &mut dyn Write, name: &str, ok: bool, detail: String| -> Result<()> {
        if !ok {
            failed.push(name.to_string());
        }
        let tag = if ok { "ok" } else { "FAILED" };
        writeln!(o, "{tag:6} {name}: {detail}").map_err(stdout_error)
    };

    let conflicts = inst.conflicts(g.convention);
    let (m, n) = (inst.num_drones(), inst.num_deliveries());
    for mode in [ConflictSlackMode::PerPair, ConflictSlackMode::PerDrone] {
        let opts = GlobalArgs { slack_mode: mode, ..g.clone() };
        let (_, budget) = opts.build_options().scaled_costs(inst);
        for f in [Formulation::Standard, Formulation::Proxy] {
            let model = opts.solver_config(f, None).build(inst)?;
            let predicted = match f {
                Formulation::Standard => {
                    predict_var_count_q1(m, n, budget, conflicts.kappa(), mode, g.slack_bits)
                }
                Formulation::Proxy => {
                    predict_var_count_q2(m, n, budget, conflicts.kappa(), mode, g.slack_bits)
                }
            };
            report(
                out,
                &format!("variable count, formulation {}, {mode}", f.number()),
                predicted == model.num_variables(),
                format!("registry {} predicted {predicted}", model.num_variables()),
            )?;
        }
    }

    match solve_exact(inst, &conflicts, m) {
        Err(Error::Infeasible { drones }) => {
            writeln!(out, "skip   exact checks: no feasible schedule on {drones} drones")
                .map_err(stdout_error)?;
        }
        Err(e) => return Err(e),
        Ok(sol) => {
            let a = sol.min_h0_assignment(m, n)?;
            let t = feasibility(inst, &conflicts, &a);
            report(out, "exact partition feasible", t.is_feasible(), t.to_string())?;
            report(
                out,
                "exact H0 identity",
                evaluate_h0(inst, &a) == sol.min_h0,
                format!("min_h0 {}", sol.min_h0),
            )?;
            let lower = clique_lower_bound(&conflicts).max(volume_lower_bound(inst));
            report(
                out,
                "drone lower bounds",
                sol.min_drones >= lower,
                format!("min_drones {} >= {lower}", sol.min_drones),
            )?;
            for f in [Formulation::Standard, Formulation::Proxy] {
                let model = g.solver_config(f, None).build(inst)?;
                for (what, parts) in [
                    ("min-H0", &sol.min_h0_partition),
                    ("min-drones", &sol.min_drones_partition),
                ] {
                    let schedule = crate::evaluation::Assignment::from_partition(
                        m,
                        n,
                        parts,
                        AssignmentSource::Exact,
                    )?;
                    let completion = complete_slacks(&model, inst, &schedule)?;
                    let energy = model.energy(&completion.bits)?;
                    let objective = match f {
                        Formulation::Standard => schedule.used_drones() as f64,
                        Formulation::Proxy => evaluate_h0(inst, &schedule),
                    };
                    let name = format!("penalty-zero, formulation {}, {what} schedule", f.number());
                    if completion.exact {
                        let tol = 1e-9 * model.max_abs_coefficient().max(1.0);
                        report(
                            out,
                            &name,
                            (energy - objective).abs() <= tol,
                            format!("energy {energy} objective {objective}"),
                        )?;
                    } else {
                        writeln!(
                            out,
                            "note   {name}: slacks cannot meet the budget exactly \
                             (fractional costs or power-of-two budget); residual {}",
                            energy - objective
                        )
                        .map_err(stdout_error)?;
                    }
                }
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Internal(format!("verify failed: {}", failed.join(", "))))
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
