use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use rbsde_core::bsde::{solve_bsde, solve_reflected, BsdeSolution};
use rbsde_core::error::{Error, Result};
use rbsde_core::harness::{
    convergence_table, cross_validate, load_experiment_config, run_scenario, solve_config_pde,
    ConvergenceAxis, ExperimentConfig,
};
use rbsde_core::pricing::{
    binomial_price, exercise_boundary_samples, price_american, ExerciseStyle, OptionSide,
    PriceClaim,
};
use rbsde_core::sde::{simulate_with_options, PathBundle, TimeGrid};

/// Rank-based diffusion toolkit: simulation, backward solvers, obstacle
/// grids and American claim pricing driven by one experiment document.
#[derive(Parser)]
#[command(name = "rbsde", version, disable_help_subcommand = true)]
struct Cli {
    /// Experiment document (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Overrides the seed declared in the document.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Artifact directory; overrides the document's out_dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for path simulation (default: rayon's heuristic).
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Also write the simulated paths as CSV (large).
    #[arg(long, global = true)]
    dump_paths: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulates the path bundle and prints its summary.
    Simulate,
    /// Backward solve without an obstacle.
    SolveBsde,
    /// Backward solve with projection onto the obstacle; without an
    /// obstacle it coincides with solve-bsde.
    SolveReflected,
    /// Finite-difference solve on the configured grid.
    SolvePde,
    /// Prices the configured American claim; needs a market document.
    PriceAmerican,
    /// Compares simulation and grid values at the probe points; exits 2
    /// when a probe misses its tolerance.
    CrossValidate,
    /// Refinement ladder along one axis; exits 2 when the trend fails.
    Convergence {
        /// dt, paths, mesh or penalty.
        #[arg(long)]
        axis: String,
    },
    /// Runs the whole scenario and writes its artifact directory.
    RunScenario,
}

fn main() {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        // A second pool build in one process is fine to ignore; the pool is
        // only a performance knob and never changes results.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global();
    }
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::validation("--config <PATH> is required"))?;
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut config = load_experiment_config(&text)?;
    if let Some(seed) = cli.seed {
        config.numerics.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.display().to_string());
    }
    Ok(config)
}

fn out_dir(config: &ExperimentConfig) -> Option<PathBuf> {
    config.out_dir.as_ref().map(PathBuf::from)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    ensure_dir(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::file(&path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn dump_bundle(config: &ExperimentConfig, bundle: &PathBundle, dump: bool) -> Result<()> {
    if !dump {
        return Ok(());
    }
    let dir = out_dir(config).unwrap_or_else(|| PathBuf::from("."));
    let mut csv = Vec::new();
    bundle.write_paths_csv(&mut csv)?;
    write_file(&dir, "paths.csv", &csv)
}

fn simulate_bundle(config: &ExperimentConfig) -> Result<PathBundle> {
    let resolved = config.resolve()?;
    let cfg = config.numerics.estimate_config()?;
    let grid = TimeGrid::new(0.0, resolved.horizon, cfg.steps)?;
    simulate_with_options(
        &resolved.profile,
        resolved.start()?,
        &grid,
        cfg.paths,
        cfg.seed,
        cfg.allow_nonconcave,
    )
}

#[derive(Serialize)]
struct SolveSummary {
    u0: f64,
    stderr: f64,
    z0: Vec<f64>,
    k_mean: f64,
    skorokhod_sum: f64,
    max_violation: f64,
    paths: usize,
    steps: usize,
}

fn solve_outputs(config: &ExperimentConfig, sol: &BsdeSolution) -> Result<()> {
    if let Some(dir) = out_dir(config) {
        write_file(&dir, "solution.json", &serde_json::to_vec_pretty(sol)?)?;
        let mut csv = Vec::new();
        sol.write_step_csv(&mut csv)?;
        write_file(&dir, "steps.csv", &csv)?;
    }
    print_json(&SolveSummary {
        u0: sol.u0,
        stderr: sol.stderr,
        z0: sol.z0.clone(),
        k_mean: sol.k_mean,
        skorokhod_sum: sol.skorokhod_sum,
        max_violation: sol.max_violation,
        paths: sol.paths,
        steps: sol.steps,
    })
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::Simulate => {
            let bundle = simulate_bundle(&config)?;
            dump_bundle(&config, &bundle, cli.dump_paths)?;
            #[derive(Serialize)]
            struct SimulateSummary {
                n: usize,
                paths: usize,
                steps: usize,
                seed: u64,
                tie_fraction: f64,
                mean_terminal: Vec<f64>,
            }
            let steps = bundle.grid.steps();
            let mut mean_terminal = vec![0.0f64; bundle.n];
            for i in 0..bundle.paths {
                for (j, v) in bundle.ranked_state(i, steps).iter().enumerate() {
                    mean_terminal[j] += v / bundle.paths as f64;
                }
            }
            print_json(&SimulateSummary {
                n: bundle.n,
                paths: bundle.paths,
                steps,
                seed: bundle.seed,
                tie_fraction: bundle.tie_fraction(),
                mean_terminal,
            })
        }
        Command::SolveBsde => {
            let resolved = config.resolve()?;
            let bundle = simulate_bundle(&config)?;
            dump_bundle(&config, &bundle, cli.dump_paths)?;
            let cfg = config.numerics.estimate_config()?;
            let sol = solve_bsde(&bundle, &resolved.profile, &resolved.spec, &cfg.options)?;
            solve_outputs(&config, &sol)
        }
        Command::SolveReflected => {
            let resolved = config.resolve()?;
            let bundle = simulate_bundle(&config)?;
            dump_bundle(&config, &bundle, cli.dump_paths)?;
            let cfg = config.numerics.estimate_config()?;
            let sol = solve_reflected(&bundle, &resolved.profile, &resolved.spec, &cfg.options)?;
            solve_outputs(&config, &sol)
        }
        Command::SolvePde => {
            let resolved = config.resolve()?;
            let keep_history = !config.probes.is_empty();
            let surface = solve_config_pde(&config, keep_history)?;
            let mut probe_values = Vec::new();
            for p in &config.probes {
                let state = resolved.state_point(&p.x)?;
                probe_values.push(surface.probe(p.t, state.coords())?);
            }
            if let Some(dir) = out_dir(&config) {
                let mut csv = Vec::new();
                surface.write_csv(&mut csv)?;
                write_file(&dir, "pde_values.csv", &csv)?;
            }
            #[derive(Serialize)]
            struct PdeSummary {
                nodes: usize,
                complementarity_max: f64,
                boundary_residual_max: f64,
                total_sweeps: usize,
                probe_values: Vec<f64>,
            }
            print_json(&PdeSummary {
                nodes: surface.grid.nodes(),
                complementarity_max: surface.complementarity_max(),
                boundary_residual_max: rbsde_core::pde::boundary_residual(&surface).max,
                total_sweeps: surface.total_sweeps,
                probe_values,
            })
        }
        Command::PriceAmerican => {
            let market = config
                .market
                .as_ref()
                .ok_or_else(|| Error::validation("price-american needs a market document"))?
                .build()?;
            let cfg = config.numerics.estimate_config()?;
            let result = price_american(&market, config.horizon, &cfg)?;
            let boundary = exercise_boundary_samples(&market, config.horizon, &cfg)?;
            let oracle_price = oracle_for(&market, config.horizon)?;
            if let Some(dir) = out_dir(&config) {
                write_file(&dir, "price.json", &serde_json::to_vec_pretty(&result)?)?;
            }
            #[derive(Serialize)]
            struct PriceSummary {
                price: f64,
                stderr: f64,
                exercise_boundary_samples: Vec<(f64, f64)>,
                #[serde(skip_serializing_if = "Option::is_none")]
                oracle_price: Option<f64>,
            }
            print_json(&PriceSummary {
                price: result.price,
                stderr: result.stderr,
                exercise_boundary_samples: boundary,
                oracle_price,
            })
        }
        Command::CrossValidate => {
            let report = cross_validate(&config)?;
            if let Some(dir) = out_dir(&config) {
                write_file(&dir, "cross.json", &serde_json::to_vec_pretty(&report)?)?;
                let mut csv = Vec::new();
                report.write_csv(&mut csv)?;
                write_file(&dir, "cross.csv", &csv)?;
            }
            print_json(&report)?;
            if report.passed {
                Ok(())
            } else {
                let failed = report.outcomes.iter().filter(|o| !o.passed).count();
                Err(Error::Tolerance(format!(
                    "{failed} of {} probes outside tolerance",
                    report.outcomes.len()
                )))
            }
        }
        Command::Convergence { axis } => {
            let axis: ConvergenceAxis = axis.parse()?;
            let table = convergence_table(&config, axis)?;
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            if let Some(dir) = out_dir(&config) {
                let stem = format!("convergence_{}", axis.as_str());
                write_file(&dir, &format!("{stem}.json"), &serde_json::to_vec_pretty(&table)?)?;
                write_file(&dir, &format!("{stem}.csv"), &csv)?;
            }
            print!("{}", String::from_utf8_lossy(&csv));
            if table.passed {
                Ok(())
            } else {
                Err(Error::Tolerance(format!(
                    "{} ladder trend failed: {}",
                    axis.as_str(),
                    table.note
                )))
            }
        }
        Command::RunScenario => {
            let dir = run_scenario(&config)?;
            #[derive(Serialize)]
            struct Done {
                artifact_dir: String,
            }
            print_json(&Done {
                artifact_dir: dir.display().to_string(),
            })
        }
    }
}

/// Independent tree price for single-asset vanilla claims; `None` whenever
/// the oracle does not cover the configured claim.
fn oracle_for(
    market: &rbsde_core::pricing::MarketSpec,
    horizon: f64,
) -> Result<Option<f64>> {
    if market.profile.n != 1 {
        return Ok(None);
    }
    let style = match market.exercise {
        rbsde_core::pricing::EarlyExercise::None => ExerciseStyle::European,
        rbsde_core::pricing::EarlyExercise::Intrinsic => ExerciseStyle::American,
        // The tree only knows intrinsic early exercise.
        rbsde_core::pricing::EarlyExercise::Floor { .. } => return Ok(None),
    };
    let (side, strike) = match &market.claim {
        PriceClaim::Put { strike, .. } => (OptionSide::Put, *strike),
        PriceClaim::Call { strike, .. } => (OptionSide::Call, *strike),
        _ => return Ok(None),
    };
    let price = binomial_price(
        market.prices[0],
        strike,
        market.profile.rate.value(0.0),
        market.profile.sigma[0],
        horizon,
        2000,
        side,
        style,
    )?;
    Ok(Some(price))
}
