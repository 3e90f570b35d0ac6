use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hieralm::io::{load_instance, save_instance};
use hieralm::random::{random_instance, rng, RandomSpec};
use hieralm::report::{
    exit_code, render_comparison, render_sweep_table, render_table, sci3, write_sweep_csv,
    write_trace_csv, RunSummary,
};
use hieralm::{
    build_instance, hierarchical_shift, run, GridSpec, Mode, ProblemData, SolveReport, SolverConfig,
};

/// Augmented Lagrangian solver for QPs with prioritized equality constraints.
#[derive(Debug, Parser)]
#[command(name = "hieralm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a grid network-flow instance.
    GenGrid {
        #[arg(long, value_parser = parse_grid, value_name = "RxC")]
        grid: (usize, usize),
        #[arg(long, default_value_t = 0.0)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a small random instance.
    GenRandom {
        #[arg(long)]
        seed: u64,
        /// Make both constraint blocks consistent.
        #[arg(long)]
        feasible: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the solver and print the iteration table.
    Solve {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverArgs,
        /// Trace CSV path.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// JSON report with the final point and shift.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the hierarchically optimal shift.
    Oracle {
        #[command(flatten)]
        source: Source,
        /// JSON file receiving the shift vectors.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the weighted shift approximations against the exact shift.
    ShiftSweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value_t = 20)]
        count: usize,
        /// JSON solver configuration; only its sigma schedule is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run both modes with the same configuration and compare them.
    Compare {
        #[command(flatten)]
        source: Source,
        #[command(flatten)]
        solver: SolverArgs,
        /// JSON file receiving both summaries.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Source {
    /// Instance file.
    #[arg(long, conflicts_with = "grid")]
    problem: Option<PathBuf>,
    /// Generate a grid network-flow instance instead of reading one.
    #[arg(long, value_parser = parse_grid, value_name = "RxC")]
    grid: Option<(usize, usize)>,
    #[arg(long, requires = "grid")]
    kappa: Option<f64>,
}

impl Source {
    fn load(&self) -> Result<ProblemData> {
        match (&self.problem, self.grid) {
            (Some(path), None) => Ok(load_instance(path)
                .with_context(|| format!("cannot load {}", path.display()))?
                .problem),
            (None, Some((rows, cols))) => {
                let spec = GridSpec::new(rows, cols, self.kappa.unwrap_or(0.0))?;
                Ok(build_instance(&spec)?.0)
            }
            _ => bail!("give exactly one of --problem or --grid"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    InfeasibilityControl,
    StandardAl,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::InfeasibilityControl => Mode::InfeasibilityControl,
            ModeArg::StandardAl => Mode::StandardAl,
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// JSON solver configuration. Flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    rho0: Option<f64>,
    #[arg(long)]
    u0: Option<f64>,
    #[arg(long)]
    kkt_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn config(&self, p: &ProblemData) -> Result<SolverConfig> {
        let mut cfg = read_config(self.config.as_deref())?;
        if let Some(m) = self.mode {
            cfg.mode = m.into();
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { cfg.$f = v; })* };
        }
        set!(tau, gamma, rho0, u0, kkt_tol, max_iter);
        cfg.validate(p.m1(), p.m2())?;
        Ok(cfg)
    }
}

fn read_config(path: Option<&Path>) -> Result<SolverConfig> {
    let Some(path) = path else {
        return Ok(SolverConfig::default());
    };
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn parse_grid(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected RxC, got {s:?}"))?;
    let num = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|e| format!("bad grid size {t:?}: {e}"))
    };
    Ok((num(r)?, num(c)?))
}

#[derive(Serialize)]
struct SolveDocument<'a> {
    mode: Mode,
    summary: RunSummary,
    x: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    lambda1: Vec<f64>,
    lambda2: Vec<f64>,
    config: &'a SolverConfig,
}

#[derive(Serialize)]
struct OracleDocument {
    rank1: usize,
    norm_s1: f64,
    norm_s2: f64,
    stage1_value: f64,
    stage2_value: f64,
    s1: Vec<f64>,
    s2: Vec<f64>,
    x: Vec<f64>,
}

#[derive(Serialize)]
struct CompareDocument {
    infeasibility_control: RunSummary,
    standard_al: RunSummary,
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

fn print_status(report: &SolveReport) {
    let last = report.last();
    println!(
        "status: {:?} after {} iterations, E = {}, rho = {}",
        report.status,
        report.iterations(),
        sci3(last.e),
        sci3(last.rho)
    );
}

fn cmd_solve(
    source: &Source,
    solver: &SolverArgs,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8> {
    let p = source.load()?;
    let cfg = solver.config(&p)?;
    let report = run(&p, &cfg)?;
    print!("{}", render_table(&report.trace));
    print_status(&report);
    if let Some(path) = trace {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_trace_csv(&report.trace, BufWriter::new(file))?;
    }
    if let Some(path) = out {
        let doc = SolveDocument {
            mode: cfg.mode,
            summary: RunSummary::from(&report),
            x: report.x_final.as_slice().to_vec(),
            s1: report.shift_final.s1.as_slice().to_vec(),
            s2: report.shift_final.s2.as_slice().to_vec(),
            lambda1: report.lambda1.as_slice().to_vec(),
            lambda2: report.lambda2.as_slice().to_vec(),
            config: &cfg,
        };
        write_json(&doc, path)?;
    }
    Ok(exit_code(report.status) as u8)
}

fn cmd_oracle(source: &Source, out: Option<&Path>) -> Result<u8> {
    let p = source.load()?;
    let o = hierarchical_shift(&p)?;
    let doc = OracleDocument {
        rank1: o.rank1,
        norm_s1: o.shift.s1.norm(),
        norm_s2: o.shift.s2.norm(),
        stage1_value: o.stage1_value,
        stage2_value: o.stage2_value,
        s1: o.shift.s1.as_slice().to_vec(),
        s2: o.shift.s2.as_slice().to_vec(),
        x: o.x_ddag.as_slice().to_vec(),
    };
    println!("rank(A1)      {}", doc.rank1);
    println!("|s1*|         {}", doc.norm_s1);
    println!("|s2*|         {}", doc.norm_s2);
    println!("stage 1 value {}", doc.stage1_value);
    println!("stage 2 value {}", doc.stage2_value);
    if let Some(path) = out {
        write_json(&doc, path)?;
    }
    Ok(0)
}

fn cmd_shift_sweep(
    source: &Source,
    count: usize,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8> {
    let p = source.load()?;
    let schedule = read_config(config)?.sigma_schedule;
    let oracle = hierarchical_shift(&p)?;
    let rows = hieralm::control::shift_sweep(&p, &schedule, count, &oracle)?;
    print!("{}", render_sweep_table(&rows));
    if let Some(path) = out {
        let file =
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        write_sweep_csv(&rows, BufWriter::new(file))?;
    }
    Ok(0)
}

fn cmd_compare(source: &Source, solver: &SolverArgs, out: Option<&Path>) -> Result<u8> {
    let p = source.load()?;
    let cfg = solver.config(&p)?;
    let ic_cfg = cfg.clone().with_mode(Mode::InfeasibilityControl);
    let al_cfg = cfg.with_mode(Mode::StandardAl);
    let (ic, al) = std::thread::scope(|s| {
        let ic = s.spawn(|| run(&p, &ic_cfg));
        let al = run(&p, &al_cfg);
        (ic.join().expect("solver thread panicked"), al)
    });
    let doc = CompareDocument {
        infeasibility_control: RunSummary::from(&ic?),
        standard_al: RunSummary::from(&al?),
    };
    print!(
        "{}",
        render_comparison(
            ("infeas-control", &doc.infeasibility_control),
            ("standard-al", &doc.standard_al),
        )
    );
    if let Some(path) = out {
        write_json(&doc, path)?;
    }
    Ok(0)
}

fn execute(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenGrid { grid, kappa, out } => {
            let (p, meta) = build_instance(&GridSpec::new(grid.0, grid.1, kappa)?)?;
            save_instance(&p, Some(&serde_json::to_value(&meta)?), &out)?;
            log::info!("wrote {}x{} grid to {}", grid.0, grid.1, out.display());
            Ok(0)
        }
        Command::GenRandom {
            seed,
            feasible,
            out,
        } => {
            let spec = RandomSpec {
                feasible,
                ..RandomSpec::default()
            };
            let p = random_instance(&mut rng(seed), &spec);
            let meta = serde_json::json!({"generator": "random", "seed": seed, "spec": spec});
            save_instance(&p, Some(&meta), &out)?;
            Ok(0)
        }
        Command::Solve {
            source,
            solver,
            trace,
            out,
        } => cmd_solve(&source, &solver, trace.as_deref(), out.as_deref()),
        Command::Oracle { source, out } => cmd_oracle(&source, out.as_deref()),
        Command::ShiftSweep {
            source,
            count,
            config,
            out,
        } => cmd_shift_sweep(&source, count, config.as_deref(), out.as_deref()),
        Command::Compare {
            source,
            solver,
            out,
        } => cmd_compare(&source, &solver, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HIERALM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
