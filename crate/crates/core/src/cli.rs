//! Command-line front end.
//!
//! Settings are merged as defaults < config file < flags. A config file is
//! a flat list of `key = value` lines; `#` starts a comment. Keys:
//! `problem`, `degree`, `theta`, `lambda_lin`, `lambda_alg`, `delta`,
//! `i_min`, `tol`, `max_levels`, `max_cost`, `max_dofs`, `max_seconds`,
//! `norm_cap`, `energy_relax_tol`, `solver`, `pre_sweeps`, `post_sweeps`,
//! `relaxation`, `preconditioner`, `out_dir`, `plot`, `seed`. Keys of the
//! form `custom.<name>` configure `problem = custom` (see
//! [`crate::problems::custom_problem`]).
//!
//! The `AILFEM_THREADS` environment variable sets the number of worker
//! threads of `sweep`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::adaptive::{run_adaptive_observed, AdaptiveParams, IterateRecord, LevelInfo, RunLedger, RunObserver, TerminationReason};
use crate::error::{Error, Result};
use crate::forms::ProblemSpec;
use crate::linsolve::{Preconditioner, SolverKind};
use crate::mesh::Mesh;
use crate::problems::{custom_problem, initial_mesh, make_problem};
use crate::report::{read_ledger_csv, summary_json, svg_plot, write_ledger_csv};
use crate::verify::{run_all, VerifyOptions};

#[derive(Debug, Parser)]
#[command(name = "ailfem", version, about = "Adaptive iteratively linearized finite elements for semilinear PDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the adaptive solver and write ledger, summary and plot.
    Run(RunArgs),
    /// Weighted cost `η · cost^{p/2}` over a parameter grid.
    Sweep(SweepArgs),
    /// Run the randomized invariant checks.
    Verify(VerifyArgs),
    /// Print statistics of a built-in or file mesh.
    MeshInfo(MeshInfoArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Flat key-value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problem: Option<String>,
    /// Polynomial degree (1 to 3).
    #[arg(long = "p")]
    pub degree: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub lambda_lin: Option<f64>,
    #[arg(long)]
    pub lambda_alg: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub imin: Option<usize>,
    /// Stop once the estimator drops below this value.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_levels: Option<usize>,
    #[arg(long)]
    pub max_cost: Option<u64>,
    #[arg(long)]
    pub max_dofs: Option<usize>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long)]
    pub norm_cap: Option<f64>,
    /// multigrid, pcg or direct.
    #[arg(long)]
    pub solver: Option<String>,
    /// Output directory for ledger.csv, summary.json and plot.svg.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Also write an SVG plot.
    #[arg(long)]
    pub plot: bool,
    /// Suppress per-level progress output.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated values of θ.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.7")]
    pub thetas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.7")]
    pub lambda_lins: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.7")]
    pub lambda_algs: Vec<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Negative test: corrupt the estimator's jump terms.
    #[arg(long)]
    pub inject_fault: bool,
    #[arg(long)]
    pub quick: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MeshInfoArgs {
    /// Built-in mesh name or path of a mesh text file.
    #[arg(long, default_value = "unit-square")]
    pub mesh: String,
    /// Number of uniform refinements.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// Write the refined mesh in text format.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Fully merged settings of a run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub custom: BTreeMap<String, String>,
    pub params: AdaptiveParams,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "sine-gordon".into(),
            custom: BTreeMap::new(),
            params: AdaptiveParams::default(),
            out_dir: PathBuf::from("ailfem-out"),
            plot: false,
            seed: 42,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "problem" => self.problem = value.to_string(),
            "degree" | "p" => p.degree = parse(key, value)?,
            "theta" => p.theta = parse(key, value)?,
            "lambda_lin" => p.lambda_lin = parse(key, value)?,
            "lambda_alg" => p.lambda_alg = parse(key, value)?,
            "delta" => p.delta = parse(key, value)?,
            "i_min" | "imin" => p.i_min = parse(key, value)?,
            "tol" => p.stop_estimator_tol = parse(key, value)?,
            "max_levels" => p.max_levels = Some(parse(key, value)?),
            "max_cost" => p.max_cost = Some(parse(key, value)?),
            "max_dofs" => p.max_dofs = Some(parse(key, value)?),
            "max_seconds" => p.max_seconds = Some(parse(key, value)?),
            "norm_cap" => p.norm_cap = parse(key, value)?,
            "energy_relax_tol" => p.energy_relax_tol = parse(key, value)?,
            "solver" => p.solver.kind = SolverKind::parse(value.trim())?,
            "pre_sweeps" => p.solver.pre_sweeps = parse(key, value)?,
            "post_sweeps" => p.solver.post_sweeps = parse(key, value)?,
            "relaxation" => p.solver.relaxation = parse(key, value)?,
            "preconditioner" => {
                p.solver.preconditioner = match value.trim() {
                    "jacobi" => Preconditioner::Jacobi,
                    "none" => Preconditioner::None,
                    v => return Err(Error::Config(format!("preconditioner: unknown value '{v}'"))),
                }
            }
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "plot" => self.plot = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => match key.strip_prefix("custom.") {
                Some(k) => {
                    self.custom.insert(k.to_string(), value.trim().to_string());
                }
                None => return Err(Error::Config(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    /// Problem defaults for the built-in experiments: the singularly
    /// perturbed problem uses `δ = 0.1`, `λ_alg = 0.7`.
    fn problem_defaults(&mut self) {
        if self.problem == "singular-sine-gordon" {
            self.params.delta = 0.1;
            self.params.lambda_alg = 0.7;
        }
    }

    /// Defaults of `problem`, before any file or flag.
    pub fn for_problem(problem: &str) -> Self {
        let mut cfg = RunConfig { problem: problem.to_string(), ..Default::default() };
        cfg.problem_defaults();
        cfg
    }

    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let text = match &args.config {
            Some(path) => Some(fs::read_to_string(path)?),
            None => None,
        };
        // The problem decides its defaults before file and flags apply.
        let problem = args.problem.clone().or_else(|| {
            text.as_deref().and_then(|t| {
                t.lines().filter_map(|l| l.split('#').next()?.split_once('=')).find_map(|(k, v)| {
                    (k.trim() == "problem").then(|| v.trim().to_string())
                })
            })
        });
        if let Some(p) = &problem {
            cfg.problem = p.clone();
        }
        cfg.problem_defaults();
        if let Some(t) = &text {
            cfg.apply_text(t)?;
        }
        let p = &mut cfg.params;
        if let Some(v) = &args.problem {
            cfg.problem = v.clone();
        }
        macro_rules! flag {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value {
                    $field = v;
                }
            };
        }
        flag!(p.degree, args.degree);
        flag!(p.theta, args.theta);
        flag!(p.lambda_lin, args.lambda_lin);
        flag!(p.lambda_alg, args.lambda_alg);
        flag!(p.delta, args.delta);
        flag!(p.i_min, args.imin);
        flag!(p.stop_estimator_tol, args.tol);
        flag!(p.norm_cap, args.norm_cap);
        if args.max_levels.is_some() {
            p.max_levels = args.max_levels;
        }
        if args.max_cost.is_some() {
            p.max_cost = args.max_cost;
        }
        if args.max_dofs.is_some() {
            p.max_dofs = args.max_dofs;
        }
        if args.max_seconds.is_some() {
            p.max_seconds = args.max_seconds;
        }
        if let Some(s) = &args.solver {
            p.solver.kind = SolverKind::parse(s)?;
        }
        if let Some(d) = &args.out_dir {
            cfg.out_dir = d.clone();
        }
        cfg.plot |= args.plot;
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec> {
        if self.problem == "custom" {
            custom_problem(&self.custom)
        } else {
            make_problem(&self.problem)
        }
    }
}

struct Progress {
    quiet: bool,
}

impl RunObserver for Progress {
    fn level_done(&mut self, info: &LevelInfo) {
        if !self.quiet {
            eprintln!(
                "level {:3}  triangles {:8}  dofs {:8}  k {:2}  eta {:.3e}  marked {}",
                info.level, info.n_triangles, info.dofs, info.k_final, info.eta, info.marked
            );
        }
    }
}

/// Runs one configuration and writes its artifacts to `cfg.out_dir`.
pub fn execute_run(cfg: &RunConfig, quiet: bool) -> Result<RunLedger> {
    let prob = cfg.problem_spec()?;
    let mesh = initial_mesh(&prob)?;
    let ledger = run_adaptive_observed(&prob, &cfg.params, mesh, &mut Progress { quiet })?;
    fs::create_dir_all(&cfg.out_dir)?;
    let ledger_path = cfg.out_dir.join("ledger.csv");
    write_ledger_csv(fs::File::create(&ledger_path)?, &ledger.records)?;
    // Every written row must read back identically.
    let back = read_ledger_csv(fs::File::open(&ledger_path)?)?;
    if back.len() != ledger.records.len() {
        return Err(Error::Config("ledger CSV did not round-trip".into()));
    }
    let summary = summary_json(&ledger);
    fs::write(cfg.out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    if cfg.plot {
        fs::write(cfg.out_dir.join("plot.svg"), svg_plot(&ledger.records))?;
    }
    Ok(ledger)
}

/// Weighted cost `η · cost^{p/2}` of a finished run; `None` unless the run
/// reached the estimator tolerance.
pub fn weighted_cost(ledger: &RunLedger) -> Option<f64> {
    let last: &IterateRecord = ledger.final_record()?;
    (ledger.termination == TerminationReason::Converged)
        .then(|| last.eta * (last.cost as f64).powf(ledger.params.degree as f64 / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub theta: f64,
    pub lambda_lin: f64,
    pub lambda_alg: f64,
    pub eta: f64,
    pub cost: u64,
    pub weighted_cost: f64,
    pub status: String,
    pub block_min: bool,
    pub overall_min: bool,
}

pub fn thread_count() -> usize {
    std::env::var("AILFEM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn run_sweep(cfg: &RunConfig, thetas: &[f64], lambda_lins: &[f64], lambda_algs: &[f64]) -> Result<Vec<SweepCell>> {
    if thetas.is_empty() || lambda_lins.is_empty() || lambda_algs.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let prob = cfg.problem_spec()?;
    let mesh = initial_mesh(&prob)?;
    let mut grid = Vec::new();
    for &t in thetas {
        for &ll in lambda_lins {
            for &la in lambda_algs {
                grid.push((t, ll, la));
            }
        }
    }
    let results: Mutex<Vec<Option<SweepCell>>> = Mutex::new(vec![None; grid.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..thread_count().min(grid.len()) {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::SeqCst);
                let Some(&(theta, lambda_lin, lambda_alg)) = grid.get(n) else { break };
                let params = AdaptiveParams { theta, lambda_lin, lambda_alg, ..cfg.params.clone() };
                let cell = match run_adaptive_observed(&prob, &params, mesh.clone(), &mut ()) {
                    Ok(ledger) => {
                        let last = ledger.final_record().cloned();
                        SweepCell {
                            theta,
                            lambda_lin,
                            lambda_alg,
                            eta: last.as_ref().map_or(f64::NAN, |r| r.eta),
                            cost: last.as_ref().map_or(0, |r| r.cost),
                            weighted_cost: weighted_cost(&ledger).unwrap_or(f64::NAN),
                            status: ledger.termination.label(),
                            block_min: false,
                            overall_min: false,
                        }
                    }
                    Err(e) => SweepCell {
                        theta,
                        lambda_lin,
                        lambda_alg,
                        eta: f64::NAN,
                        cost: 0,
                        weighted_cost: f64::NAN,
                        status: format!("error: {e}"),
                        block_min: false,
                        overall_min: false,
                    },
                };
                results.lock().unwrap()[n] = Some(cell);
            });
        }
    });
    let mut cells: Vec<SweepCell> = results.into_inner().unwrap().into_iter().map(Option::unwrap).collect();
    mark_minima(&mut cells);
    Ok(cells)
}

/// Flags the minimal finite weighted cost within each θ block and overall.
pub fn mark_minima(cells: &mut [SweepCell]) {
    let argmin = |idx: &mut dyn Iterator<Item = usize>, cells: &[SweepCell]| {
        idx.filter(|&i| cells[i].weighted_cost.is_finite())
            .min_by(|&a, &b| cells[a].weighted_cost.total_cmp(&cells[b].weighted_cost))
    };
    let mut thetas: Vec<f64> = cells.iter().map(|c| c.theta).collect();
    thetas.dedup();
    for t in thetas {
        if let Some(i) = argmin(&mut (0..cells.len()).filter(|&i| cells[i].theta == t), cells) {
            cells[i].block_min = true;
        }
    }
    if let Some(i) = argmin(&mut (0..cells.len()), cells) {
        cells[i].overall_min = true;
    }
}

pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "lambda_lin", "lambda_alg", "eta", "cost", "weighted_cost", "status", "block_min", "overall_min"])?;
    for c in cells {
        w.write_record([
            c.theta.to_string(),
            c.lambda_lin.to_string(),
            c.lambda_alg.to_string(),
            c.eta.to_string(),
            c.cost.to_string(),
            c.weighted_cost.to_string(),
            c.status.clone(),
            c.block_min.to_string(),
            c.overall_min.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn mesh_info(args: &MeshInfoArgs) -> Result<()> {
    let mesh = match Mesh::builtin(&args.mesh) {
        Ok(m) => m,
        Err(_) => Mesh::from_text(&fs::read_to_string(&args.mesh)?)?,
    };
    let mesh = mesh.uniform_refine(args.refine)?;
    mesh.check_conformity()?;
    let boundary = (0..mesh.n_edges()).filter(|&e| mesh.is_boundary_edge(e)).count();
    let hmax = (0..mesh.n_triangles()).map(|t| mesh.mesh_size(t)).fold(0.0, f64::max);
    println!("vertices      {}", mesh.n_vertices());
    println!("triangles     {}", mesh.n_triangles());
    println!("edges         {} ({boundary} on the boundary)", mesh.n_edges());
    println!("area          {:.12}", mesh.total_area());
    println!("max h_T       {hmax:.6e}");
    println!("min angle     {:.4} deg", mesh.min_angle().to_degrees());
    if let Some(path) = &args.output {
        fs::write(path, mesh.to_text())?;
    }
    Ok(())
}

/// Entry point of the `ailfem` binary; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run(args) => {
            let cfg = RunConfig::from_args(&args)?;
            let ledger = execute_run(&cfg, args.quiet)?;
            let summary = summary_json(&ledger);
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(if ledger.termination.is_regular() { 0 } else { 3 })
        }
        Command::Sweep(args) => {
            let cfg = RunConfig::from_args(&args.run)?;
            let cells = run_sweep(&cfg, &args.thetas, &args.lambda_lins, &args.lambda_algs)?;
            fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("sweep.csv");
            write_sweep_csv(&path, &cells)?;
            println!("{:>6} {:>10} {:>10} {:>12} {:>12} {:>14}  status", "theta", "lambda_lin", "lambda_alg", "eta", "cost", "weighted");
            for c in &cells {
                let mark = if c.overall_min { " **" } else if c.block_min { " *" } else { "" };
                println!(
                    "{:>6} {:>10} {:>10} {:>12.4e} {:>12} {:>14.4e}  {}{mark}",
                    c.theta, c.lambda_lin, c.lambda_alg, c.eta, c.cost, c.weighted_cost, c.status
                );
            }
            println!("wrote {}", path.display());
            Ok(0)
        }
        Command::Verify(args) => {
            let opts = VerifyOptions { seed: args.seed, inject_jump_fault: args.inject_fault, quick: args.quick };
            let outcomes = run_all(&opts)?;
            let mut ok = true;
            for o in &outcomes {
                println!("{} {:<24} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
                ok &= o.passed;
            }
            Ok(if ok { 0 } else { 1 })
        }
        Command::MeshInfo(args) => {
            mesh_info(&args)?;
            Ok(0)
        }
    }
}
