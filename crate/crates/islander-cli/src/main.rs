//! Command-line front end: import MATPOWER cases, build initial partitions,
//! run the migration protocol, and print imbalance bounds and brute-force
//! optima.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 input or parse error.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grid_islander::analysis::{self, ORACLE_DEFAULT_CAP};
use grid_islander::estimator::{EstimatorMode, EstimatorOptions, IntegratorKind};
use grid_islander::initpart;
use grid_islander::migration::{self, MigrationOptions};
use grid_islander::report::{self, OptionsSummary};
use grid_islander::{Grid, GridFormat, Partition};

#[derive(Parser)]
#[command(
    name = "grid-islander",
    version,
    about = "Self-organizing power-grid islanding",
    after_help = "Set GRID_ISLANDER_LOG (error|warn|info|debug|trace) to control logging."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a MATPOWER case file to the native grid JSON format.
    Import {
        /// MATPOWER .m case file.
        matpower: PathBuf,
        /// Output path for the native grid JSON.
        out: PathBuf,
    },
    /// Run the migration protocol and write report and trajectory files.
    Run(RunArgs),
    /// Print the a-priori bound on the final average absolute imbalance.
    Bound {
        /// Grid file (.m is parsed as MATPOWER, anything else as native JSON).
        grid: PathBuf,
        /// Island count the bound is evaluated for.
        #[arg(long)]
        n_mu: usize,
    },
    /// Enumerate every connected partition of a small grid and print the optimum.
    Oracle {
        /// Grid file (.m is parsed as MATPOWER, anything else as native JSON).
        grid: PathBuf,
        /// Island count.
        #[arg(long)]
        n_mu: usize,
        /// Refuse grids with more nodes than this.
        #[arg(long, default_value_t = ORACLE_DEFAULT_CAP)]
        cap: usize,
    },
    /// Build an initial partition and write it as a partition JSON file.
    Seed(SeedArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Grid file (.m is parsed as MATPOWER, anything else as native JSON).
    grid: PathBuf,
    #[command(flatten)]
    init: InitSource,
    /// Island count; required with --random-seed, cross-checked otherwise.
    #[arg(long)]
    n_mu: Option<usize>,
    /// How boundary nodes estimate island imbalances.
    #[arg(long, value_enum, default_value_t = Mode::Simulate)]
    mode: Mode,
    /// Integrator for simulate mode.
    #[arg(long, value_enum, default_value_t = Integrator::Euler)]
    integrator: Integrator,
    /// Imbalance-equality tolerance in decisions, MW.
    #[arg(long, default_value_t = 1e-6)]
    eq_tol: f64,
    /// Relative steady-state tolerance on the consensus rate spread.
    #[arg(long, default_value_t = 1e-9)]
    eps_ss: f64,
    /// Absolute disagreement threshold between component rates, MW.
    #[arg(long, default_value_t = 1e-6)]
    eps_dis: f64,
    /// Relative singularity threshold on the rate difference.
    #[arg(long, default_value_t = 1e-8)]
    eps_sing: f64,
    /// Hard cap on integrator steps per consensus run.
    #[arg(long, default_value_t = 5_000_000)]
    max_steps: usize,
    /// Integrator step-size override; default is 1/(d_max + 1).
    #[arg(long)]
    dt: Option<f64>,
    /// Cap on migration events; default is 50 * n.
    #[arg(long)]
    step_cap: Option<u64>,
    /// Directory for first-decision consensus trace CSVs (simulate mode only).
    #[arg(long)]
    trace_dir: Option<PathBuf>,
    /// Report JSON output path.
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Trajectory CSV output path (columns k, P_1..P_n, J, J_star).
    #[arg(long, default_value = "trajectory.csv")]
    trajectory: PathBuf,
}

#[derive(Args)]
struct SeedArgs {
    /// Grid file (.m is parsed as MATPOWER, anything else as native JSON).
    grid: PathBuf,
    #[command(flatten)]
    init: InitSource,
    /// Island count; required with --random-seed, cross-checked otherwise.
    #[arg(long)]
    n_mu: Option<usize>,
    /// Output path for the partition JSON.
    #[arg(long)]
    out: PathBuf,
}

/// Exactly one way to obtain the initial partition.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct InitSource {
    /// Partition JSON file.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Cut-set file (one `a-b` edge per line); islands are the components
    /// left after removing those edges.
    #[arg(long)]
    cut_set: Option<PathBuf>,
    /// Seed-groups JSON file (`[[ids...], ...]`, one group per island) for
    /// seeded-region growth.
    #[arg(long)]
    seeds: Option<PathBuf>,
    /// Grow islands from this many random singleton seeds (requires --n-mu).
    #[arg(long)]
    random_seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Mode {
    /// Integrate the consensus dynamics to steady state.
    Simulate,
    /// Use the closed-form steady-state rates.
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum Integrator {
    Euler,
    Rk4,
}

/// Failure carrying its exit code: input/parse problems exit 2, runtime
/// failures exit 1.
enum Failure {
    Input(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Runtime(m) => m,
        }
    }
}

fn input_err(e: impl Display) -> Failure {
    Failure::Input(e.to_string())
}

fn runtime_err(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(
        env_logger::Env::default().filter_or("GRID_ISLANDER_LOG", "warn"),
    )
    .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Import { matpower, out } => cmd_import(&matpower, &out),
        Command::Run(args) => cmd_run(args),
        Command::Bound { grid, n_mu } => cmd_bound(&grid, n_mu),
        Command::Oracle { grid, n_mu, cap } => cmd_oracle(&grid, n_mu, cap),
        Command::Seed(args) => cmd_seed(args),
    }
}

/// Loads a grid, picking the parser from the file extension.
fn load_grid(path: &Path) -> Result<Grid, Failure> {
    let format = if path.extension().is_some_and(|e| e == "m") {
        GridFormat::Matpower
    } else {
        GridFormat::Native
    };
    Grid::load(path, format).map_err(input_err)
}

fn cmd_import(matpower: &Path, out: &Path) -> Result<(), Failure> {
    let grid = Grid::load(matpower, GridFormat::Matpower).map_err(input_err)?;
    grid.save_native(out).map_err(runtime_err)?;
    println!(
        "imported {} nodes, {} edges, P_tot {:.3} MW -> {}",
        grid.n(),
        grid.edges().len(),
        grid.p_total(),
        out.display()
    );
    Ok(())
}

/// Resolves the initial partition and a label describing where it came from.
fn build_initial(
    grid: &Grid,
    init: &InitSource,
    n_mu: Option<usize>,
) -> Result<(Partition, String), Failure> {
    let (part, label) = if let Some(path) = &init.partition {
        let part = Partition::load(path, grid).map_err(input_err)?;
        (part, format!("file:{}", path.display()))
    } else if let Some(path) = &init.cut_set {
        let cut = initpart::load_cut_set(path).map_err(input_err)?;
        let part = initpart::from_cut_set(grid, &cut).map_err(input_err)?;
        (part, format!("cut-set:{}", path.display()))
    } else if let Some(path) = &init.seeds {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("failed to read {}: {e}", path.display())))?;
        let groups: Vec<Vec<i64>> = serde_json::from_str(&text)
            .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
        let part = initpart::sspr_bfs(grid, &groups).map_err(input_err)?;
        (part, format!("sspr:{}", path.display()))
    } else {
        let seed = init.random_seed.expect("clap enforces one init source");
        let k = n_mu.ok_or_else(|| {
            Failure::Input("--random-seed needs --n-mu to fix the island count".into())
        })?;
        let part = initpart::random_partition(grid, k, seed).map_err(input_err)?;
        (part, format!("random:{seed}"))
    };
    if let Some(k) = n_mu {
        if k != part.n_mu() {
            return Err(Failure::Input(format!(
                "--n-mu {k} does not match the initial partition's {} islands",
                part.n_mu()
            )));
        }
    }
    if part.n_mu() < 2 {
        return Err(Failure::Input(format!(
            "initial partition has {} island(s); need at least 2",
            part.n_mu()
        )));
    }
    Ok((part, label))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let grid = load_grid(&args.grid)?;
    let (init, init_source) = build_initial(&grid, &args.init, args.n_mu)?;
    let n_mu = init.n_mu();
    if args.trace_dir.is_some() && args.mode == Mode::Exact {
        return Err(Failure::Input(
            "--trace-dir records consensus integrations; use --mode simulate".into(),
        ));
    }

    let estimator = EstimatorOptions {
        mode: match args.mode {
            Mode::Simulate => EstimatorMode::Simulate,
            Mode::Exact => EstimatorMode::Exact,
        },
        integrator: match args.integrator {
            Integrator::Euler => IntegratorKind::Euler,
            Integrator::Rk4 => IntegratorKind::Rk4,
        },
        eps_ss: args.eps_ss,
        eps_dis: args.eps_dis,
        eps_sing: args.eps_sing,
        max_steps: args.max_steps,
        dt: args.dt,
        ..EstimatorOptions::default()
    };
    let opts = MigrationOptions {
        estimator,
        eq_tol: args.eq_tol,
        step_cap: args.step_cap,
        record_history: true,
        trace_first_decision: args.trace_dir.is_some(),
    };

    let out = migration::run(&grid, init, &opts).map_err(runtime_err)?;
    let r = &out.report;
    let bound = analysis::bound_report(&grid, n_mu, Some(r.final_j));
    let certificate = analysis::neighbor_gap_certificate(&grid, &r.final_partition);

    let options = OptionsSummary {
        n_mu,
        estimator_mode: match args.mode {
            Mode::Simulate => "simulate".into(),
            Mode::Exact => "exact".into(),
        },
        integrator: match args.integrator {
            Integrator::Euler => "euler".into(),
            Integrator::Rk4 => "rk4".into(),
        },
        eq_tol: args.eq_tol,
        step_cap: args.step_cap.unwrap_or(50 * grid.n() as u64),
        init_source,
    };
    let doc = report::run_document(&grid, options, &out, &bound, &certificate);
    write_file(&args.report, &doc.to_json())?;
    write_file(&args.trajectory, &report::trajectory_csv(&r.history, r.j_star))?;
    if let Some(dir) = &args.trace_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Runtime(format!("failed to create {}: {e}", dir.display())))?;
        for trace in &out.traces {
            let path = dir.join(format!("{}.csv", trace.label));
            write_file(&path, &report::trace_csv(&grid, &trace.run))?;
        }
    }

    let satisfied = bound
        .satisfied
        .expect("bound was scored against the final cost");
    println!("termination:  {}", report::termination_label(r.termination));
    println!("events (K):   {}", r.events.len());
    println!("J(0):         {:.6} MW", r.initial_j);
    println!("J(K):         {:.6} MW", r.final_j);
    println!("J*:           {:.6} MW", r.j_star);
    println!("bound:        {:.6} MW", bound.bound);
    println!(
        "gap <= bound: {}",
        if satisfied { "yes" } else { "NO" }
    );
    println!(
        "certificate:  {} (max tie-line gap {:.6} MW, p_bar {:.6} MW)",
        if certificate.holds { "holds" } else { "violated" },
        certificate.max_gap,
        certificate.p_bar
    );
    println!("report:       {}", args.report.display());
    println!("trajectory:   {}", args.trajectory.display());
    Ok(())
}

fn cmd_bound(grid_path: &Path, n_mu: usize) -> Result<(), Failure> {
    if n_mu == 0 {
        return Err(Failure::Input("--n-mu must be at least 1".into()));
    }
    let grid = load_grid(grid_path)?;
    let b = analysis::bound_report(&grid, n_mu, None);
    println!("n_mu:    {}", b.n_mu);
    println!("p_bar:   {:.6} MW", b.p_bar);
    println!("p_star:  {:.6} MW", b.p_star);
    println!("l_star:  {}", b.l_star);
    println!("bound:   {:.6} MW", b.bound);
    Ok(())
}

fn cmd_oracle(grid_path: &Path, n_mu: usize, cap: usize) -> Result<(), Failure> {
    let grid = load_grid(grid_path)?;
    let r = analysis::brute_force_optimum(&grid, n_mu, cap).map_err(input_err)?;
    println!("enumerated: {} partitions", r.enumerated_count);
    println!("optimal J:  {:.6} MW", r.optimal_j);
    println!("optima:     {}", r.optimal_partitions.len());
    if let Some(best) = r.optimal_partitions.first() {
        for l in 0..n_mu {
            let members: Vec<String> = (0..grid.n())
                .filter(|&v| best[v] == l)
                .map(|v| grid.ext_id(v).to_string())
                .collect();
            println!("island {l}:   {{{}}}", members.join(", "));
        }
    }
    Ok(())
}

fn cmd_seed(args: SeedArgs) -> Result<(), Failure> {
    let grid = load_grid(&args.grid)?;
    let (part, label) = build_initial(&grid, &args.init, args.n_mu)?;
    part.save(&grid, &args.out).map_err(runtime_err)?;
    let imb = grid_islander::partition::ImbalanceVector::compute(&grid, &part);
    println!(
        "{} islands from {label}, J(0) {:.6} MW -> {}",
        part.n_mu(),
        imb.cost_j(),
        args.out.display()
    );
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Runtime(format!("failed to write {}: {e}", path.display())))
}
