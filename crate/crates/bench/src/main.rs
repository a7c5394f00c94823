use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grabp::linalg;
use grabp_bench::config::{BenchConfig, BlockCount, InstanceSpec, RunArgs};
use grabp_bench::report::{self, default_output_path, dump_solutions, emit_report, write_report};
use grabp_bench::runner::{block_sweep, norm2_blocks, run_benchmark, BenchReport, PreparedInstance};
use grabp_bench::{BenchError, EXIT_FORCED};

#[derive(Parser)]
#[command(name = "grabp-bench", version, about = "Benchmark linear feasibility solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run several trials of one solver on one instance.
    Run(RunArgs),
    /// Repeat a run over a list of block counts.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated block counts; `norm2` allowed.
        #[arg(long, value_delimiter = ',', required = true)]
        t_list: Vec<BlockCount>,
    },
    /// Print the size and norms of an instance.
    Inspect {
        #[arg(long)]
        instance: InstanceSpec,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<ExitCode, BenchError> {
    match command {
        Command::Run(args) => {
            let config = BenchConfig::from_args(args)?;
            let report = run_benchmark(&config)?;
            if let Some(dir) = &config.dump_solution {
                dump_solutions(&report, dir)?;
            }
            finish(&config, vec![report])
        }
        Command::Sweep { args, t_list } => {
            let config = BenchConfig::from_args(args)?;
            let reports = block_sweep(&config, &t_list)?;
            finish(&config, reports)
        }
        Command::Inspect { instance, seed } => {
            inspect(&instance, seed)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn finish(config: &BenchConfig, reports: Vec<BenchReport>) -> Result<ExitCode, BenchError> {
    let target = config.output.clone().or_else(|| {
        let first = reports.first()?;
        default_output_path(&first.solver, &first.instance, config.format)
    });
    match target {
        Some(path) => {
            for p in emit_report(&reports, config.format, &path)? {
                eprintln!("wrote {}", p.display());
            }
        }
        None => {
            write_report(&reports, config.format, report::stdout())?;
            if config.history {
                report::write_history(&reports, std::io::stderr().lock())?;
            }
        }
    }
    for r in &reports {
        eprintln!(
            "{} {} t={}: mean IT {:.1}, mean CPU {:.3e} s over {} trials",
            r.solver,
            r.instance,
            r.config.blocks,
            r.aggregates.mean_iterations,
            r.aggregates.mean_seconds,
            r.aggregates.trials
        );
    }
    if reports.iter().any(BenchReport::any_forced) {
        Ok(ExitCode::from(EXIT_FORCED))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

fn inspect(spec: &InstanceSpec, seed: u64) -> Result<(), BenchError> {
    let problem = PreparedInstance::load(spec)?.problem(seed)?;
    let a = problem.a();
    let norms = a.row_norms_sq();
    let (lo, hi) = norms
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let spectral = a.spectral_norm_sq(linalg::DEFAULT_SPECTRAL_REL_TOL);
    println!("instance        {spec}");
    println!("rows            {}", a.nrows());
    println!("cols            {}", a.ncols());
    println!("nonzeros        {}", a.nnz());
    println!("density         {:.4}%", 100.0 * a.density());
    println!("frobenius^2     {:.6e}", a.frob_sq());
    println!("spectral^2      {:.6e}", spectral.value);
    println!("norm2 blocks    {}", norm2_blocks(a));
    println!("row norm^2      [{lo:.3e}, {hi:.3e}]");
    println!("||b||           {:.6e}", problem.b_norm());
    Ok(())
}
