use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use secure_game::harness::{
    self, bench, config::AlgorithmChoice, output, HarnessError, HarnessResult, Scenario, ScenarioConfig,
};
use secure_game::{linalg, matrix_game};

#[derive(Parser)]
#[command(
    name = "secure-game",
    version,
    about = "Switching-controller security games under sensor attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the scenario's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Node budget for the suboptimal algorithm.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run both algorithms and the baselines, write CSVs and a JSON report.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        alg: Option<AlgorithmChoice>,
    },
    /// Time both algorithms over a range of horizons.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "20,50,100,500")]
        alg2_k: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5")]
        alg1_k: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Estimate the transition kernel and write it as CSV.
    Kernel {
        #[command(flatten)]
        common: Common,
    },
    /// Solve one zero-sum matrix game given as CSV rows.
    Solve {
        /// Payoff matrix, one row per line, attacker rows.
        matrix: PathBuf,
    },
}

fn load(common: &Common) -> HarnessResult<ScenarioConfig> {
    let mut cfg = harness::load_scenario(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(budget) = common.budget {
        cfg.budget = budget;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn read_matrix(path: &Path) -> HarnessResult<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Parse {
                line: lineno + 1,
                column: 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    linalg::from_rows(&rows).map_err(|e| HarnessError::Validation(vec![e.to_string()]))
}

fn run(cli: Cli) -> HarnessResult<()> {
    match cli.command {
        Command::Compare { common, alg } => {
            let mut cfg = load(&common)?;
            if let Some(alg) = alg {
                cfg.algorithm = alg;
            }
            let scn = Scenario::build(&cfg)?;
            let report = harness::run_comparison(&scn, cfg.algorithm, cfg.budget)?;
            for p in &report.policies {
                println!(
                    "{:<15} total {:>12.4} ± {:.4}  model {:>12.4}  p(safe,K) {:.4}",
                    p.name,
                    p.mc_total,
                    p.mc_total_se,
                    p.model_total,
                    p.mode_prob.last().map_or(0.0, |d| d[0])
                );
            }
            for path in harness::emit_plot_data(&report, &cfg.output_dir)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Bench {
            common,
            alg2_k,
            alg1_k,
            repeats,
        } => {
            let cfg = load(&common)?;
            let scn = Scenario::build(&cfg)?;
            let rows = bench::run_scaling_benchmark(&scn, &alg2_k, &alg1_k, repeats, cfg.budget)?;
            let path = cfg.output_dir.join("scaling.csv");
            output::write_scaling_csv(&rows, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Kernel { common } => {
            let mut cfg = load(&common)?;
            let path = cfg.output_dir.join("kernel.csv");
            cfg.kernel.cache = None;
            let scn = Scenario::build(&cfg)?;
            harness::write_kernel(&scn.model.kernel, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Solve { matrix } => {
            let q = read_matrix(&matrix)?;
            let sol = matrix_game::solve_zero_sum(&q)?;
            let fmt = |v: &nalgebra::DVector<f64>| v.iter().map(|x| format!("{x:.10}")).collect::<Vec<_>>().join(",");
            println!("value {:.12}", sol.value);
            println!("attacker {}", fmt(&sol.f_star));
            println!("system {}", fmt(&sol.g_star));
            println!("gap {:e}", sol.duality_gap);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("SECURE_GAME_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
