use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfwd::harness::{
    emit, emit_violation, parse_plan, run_builtin_checks, run_plan, ExperimentPlan, HarnessError,
};

/// Simulator and verification harness for coalescing-fragmentating
/// Wasserstein dynamics.
#[derive(Parser)]
#[command(name = "cfwd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every sweep point of a plan and write CSV and JSON results.
    Run {
        plan: PathBuf,
        /// Output directory (overrides the plan and CFWD_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replica count per sweep point.
        #[arg(long)]
        replicas: Option<usize>,
        /// Base seed for every sweep point.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run the built-in invariant suite on small grids.
    Check,
    /// Print the expanded sweep points of a plan.
    Sweep { plan: PathBuf },
}

fn load(path: &PathBuf) -> Result<ExperimentPlan, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_plan(&text)?)
}

fn run(
    path: PathBuf,
    out: Option<PathBuf>,
    replicas: Option<usize>,
    seed: Option<u64>,
    quiet: bool,
) -> Result<(), HarnessError> {
    let mut plan = load(&path)?;
    if let Some(r) = replicas {
        if r == 0 {
            return Err(HarnessError::Config(cfwd::CfwdError::InvalidConfig(
                "--replicas must be at least 1".into(),
            )));
        }
        plan.replicas = r;
    }
    if let Some(s) = seed {
        plan.base.seed = s;
        plan.sweep.iter_mut().for_each(|p| p.config.seed = s);
    }
    let dir = out.unwrap_or_else(|| PathBuf::from(&plan.output.dir));

    let bundle = match run_plan(&plan) {
        Ok(b) => b,
        Err(HarnessError::Invariant { point, violation }) => {
            if let Ok(dump) = emit_violation(&dir, &point, &violation) {
                eprintln!("state dump written to {}", dump.display());
            }
            return Err(HarnessError::Invariant { point, violation });
        }
        Err(e) => return Err(e),
    };
    let files = emit(&bundle, &plan, &dir, &plan.output.formats)?;
    if !quiet {
        for p in &bundle.points {
            let c = &p.counts;
            println!(
                "{:<16} levels={:<4} sup_count={:.3}±{:.3} time_avg={:.3}±{:.3}",
                p.name,
                c.potential_levels,
                c.sup_count.mean,
                c.sup_count.std_err,
                c.time_average.mean,
                c.time_average.std_err
            );
            for v in &p.supermartingale {
                match (&v.report, &v.refused) {
                    (Some(r), _) => println!("  probe {:<12} {:?}", v.probe, r.verdict),
                    (None, Some(why)) => println!("  probe {:<12} refused: {why}", v.probe),
                    _ => {}
                }
            }
        }
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn check() -> ExitCode {
    let outcomes = run_builtin_checks();
    let mut ok = true;
    for c in &outcomes {
        println!(
            "{} {:<32} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn sweep(path: PathBuf) -> Result<(), HarnessError> {
    let plan = load(&path)?;
    println!("config_hash {}", plan.config_hash());
    for p in plan.points() {
        let c = &p.config;
        println!(
            "{:<16} n={} dt={} t_end={} seed={} noise={} initial={} potential_levels={} stride={}",
            p.name,
            c.n,
            c.dt,
            c.t_end,
            c.seed,
            c.noise_enabled,
            c.initial,
            c.potential.distinct_level_count(c.n),
            c.snapshot_stride
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            plan,
            out,
            replicas,
            seed,
            quiet,
        } => run(plan, out, replicas, seed, quiet),
        Command::Check => return check(),
        Command::Sweep { plan } => sweep(plan),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
