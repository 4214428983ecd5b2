//! `mena`: drive the crossbar simulator, program weights and run experiments.

use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use mena_core::backend::{Backend, BackendSpec, ProtocolBackend};
use mena_core::device::{read_grid_csv, write_grid_csv, CrossbarModel};
use mena_core::pipelines::{
    generate_trajectory_dataset, open_backend, run_digits_experiment, run_robot_experiment, ExperimentConfig,
    CROSSBAR,
};
use mena_core::programming::{program_array, read_weight, Method, TargetGrid};
use mena_core::protocol::{serve, serve_tcp, Firmware};
use mena_core::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Vipi,
    Pi,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Vipi => Method::Vipi,
            MethodArg::Pi => Method::Pi,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mena", version, about = "Memristor crossbar simulator, programmer and experiment runner")]
struct Cli {
    /// Flat `key = value` config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then MENA_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    method: Option<MethodArg>,
    /// `direct`, `protocol` (in-process firmware) or `tcp:<host:port>`.
    #[arg(long, global = true)]
    backend: Option<BackendSpec>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Serve the line protocol for a seeded crossbar (stdin/stdout unless --listen).
    SimulateServe {
        /// TCP address to listen on, e.g. 127.0.0.1:7878 (port 0 picks a free port).
        #[arg(long)]
        listen: Option<String>,
        /// Exit after this many TCP sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Program a target grid (headerless CSV) and write the array report.
    Program {
        #[arg(long)]
        targets: PathBuf,
    },
    /// Read every cell through the backend and print the conductance map as CSV.
    ReadMap {
        /// Reads averaged per cell.
        #[arg(long, default_value_t = 4)]
        n_avg: usize,
    },
    /// Binary digit classification experiment.
    Digits {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Pose-to-command regression experiment.
    Robot {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Generate a synthetic trajectory CSV.
    GenData {
        #[arg(long, default_value_t = 1200)]
        samples: usize,
    },
}

enum Failure {
    Usage(Error),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::default();
    let mut file_seed = false;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv(&text)?;
        file_seed = text
            .lines()
            .any(|l| l.split_once('=').is_some_and(|(k, _)| k.trim() == "seed"));
    }
    match cli.seed {
        Some(s) => cfg.seed = s,
        None if !file_seed => {
            if let Some(s) = ExperimentConfig::env_seed()? {
                cfg.seed = s;
            }
        }
        None => {}
    }
    if let Some(m) = cli.method {
        cfg.method = m.into();
    }
    if let Some(b) = &cli.backend {
        cfg.backend = b.clone();
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    Ok(cfg)
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn read_map(cfg: &ExperimentConfig, n_avg: usize) -> Result<Vec<Vec<f64>>, Error> {
    // A remote endpoint is read as-is; local backends start from the seeded device.
    let mut h: Box<dyn Backend> = match &cfg.backend {
        BackendSpec::Tcp(addr) => Box::new(ProtocolBackend::connect_tcp(addr.as_str(), CROSSBAR.0, CROSSBAR.1)?),
        _ => open_backend(cfg)?,
    };
    let (rows, cols) = h.dims();
    (0..rows)
        .map(|x| (0..cols).map(|y| read_weight(h.as_mut(), x, y, n_avg)).collect())
        .collect()
}

fn write_partial(out: &Path, err: &Error) {
    if let Error::Aborted { partial, .. } = err {
        if std::fs::create_dir_all(out).is_ok() {
            let path = out.join("partial_report.json");
            if std::fs::write(&path, format!("{partial:#}\n")).is_ok() {
                eprintln!("partial report written to {}", path.display());
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = resolve_config(&cli).map_err(Failure::Usage)?;
    match cli.command {
        Cmd::SimulateServe { listen, sessions } => {
            cfg.validate().map_err(Failure::Usage)?;
            let model = CrossbarModel::new(CROSSBAR.0, CROSSBAR.1, cfg.variability, cfg.seed)?;
            let mut fw = Firmware::new(model);
            match listen {
                Some(addr) => {
                    let listener = TcpListener::bind(&addr)?;
                    println!("listening on {}", listener.local_addr()?);
                    io::stdout().flush()?;
                    serve_tcp(&mut fw, &listener, sessions)?;
                }
                None => serve(&mut fw, BufReader::new(io::stdin().lock()), io::stdout().lock())?,
            }
        }
        Cmd::Program { targets } => {
            cfg.validate().map_err(Failure::Usage)?;
            let grid = read_grid_csv(std::fs::File::open(&targets)?)?;
            let mut h = open_backend(&cfg)?;
            let report = program_array(h.as_mut(), &TargetGrid::full(&grid), &cfg.vipi, cfg.method).inspect_err(|e| write_partial(&cfg.out, e))?;
            std::fs::create_dir_all(&cfg.out)?;
            std::fs::write(cfg.out.join("program_report.json"), report.to_json()? + "\n")?;
            report.write_traces_csv(std::fs::File::create(cfg.out.join("program_traces.csv"))?)?;
            let measured: Vec<Vec<f64>> = report
                .measured_grid(grid.len(), grid.first().map_or(0, Vec::len))
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect())
                .collect();
            write_grid_csv(std::fs::File::create(cfg.out.join("measured.csv"))?, &measured)?;
            print_json(serde_json::json!({
                "method": report.method,
                "e_tot": report.e_tot,
                "convergence_fraction": report.convergence_fraction,
                "within_epsilon_fraction": report.within_epsilon_fraction,
                "out": cfg.out,
            }));
        }
        Cmd::ReadMap { n_avg } => {
            cfg.validate().map_err(Failure::Usage)?;
            let grid = read_map(&cfg, n_avg)?;
            match &cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    write_grid_csv(std::fs::File::create(dir.join("conductance.csv"))?, &grid)?;
                }
                None => write_grid_csv(io::stdout().lock(), &grid)?,
            }
        }
        Cmd::Digits { dataset } => {
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.validate().map_err(Failure::Usage)?;
            let report = run_digits_experiment(&cfg).inspect_err(|e| write_partial(&cfg.out, e))?;
            report.write_outputs(&cfg.out)?;
            print_json(serde_json::json!({
                "method": report.config.method,
                "seed": report.config.seed,
                "best_accuracy": report.best_accuracy,
                "best_threshold": report.best_threshold,
                "software_accuracy": report.software_accuracy,
                "e_tot": report.e_tot(),
                "convergence_fraction": report.convergence_fraction(),
                "out": cfg.out,
            }));
        }
        Cmd::Robot { dataset } => {
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.validate().map_err(Failure::Usage)?;
            let report = run_robot_experiment(&cfg).inspect_err(|e| write_partial(&cfg.out, e))?;
            report.write_outputs(&cfg.out)?;
            print_json(serde_json::json!({
                "seed": report.config.seed,
                "rmse_software": report.rmse_software.overall,
                "rmse_chip": report.rmse_chip.overall,
                "rmse_chip_finetuned": report.rmse_chip_finetuned.overall,
                "out": cfg.out,
            }));
        }
        Cmd::GenData { samples } => {
            let (_, traj) = generate_trajectory_dataset(cfg.seed, samples).map_err(Failure::Usage)?;
            std::fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("trajectory.csv");
            traj.write_csv(std::fs::File::create(&path)?)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
