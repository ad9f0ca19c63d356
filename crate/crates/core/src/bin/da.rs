use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use da_core::harness::{exit, preflight, report, run_twin_experiment, sweep, verify_identities, ExperimentConfig, RunStatus, SeedConfig};

#[derive(Parser)]
#[command(name = "da", version, about = "Twin experiments for continuous-time data-assimilation filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every noise role, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of replicas, overriding the config.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one twin experiment.
    Run,
    /// Run the experiment once per value of a parameter.
    Sweep {
        /// Config field: sigma, beta, gain, mu, nu, grashof, ... or a dotted path.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Check the exact operator identities on random inputs.
    VerifyIdentities {
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Calibrate the inequality constants and evaluate the bound conditions.
    Calibrate,
    /// Aggregate every summary.json below --out into report.csv.
    Report,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let path = cli.config.as_ref().ok_or("--config is required for this command")?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| e.to_string())?;
    if let Some(s) = cli.seed {
        cfg.seeds = SeedConfig::from_base(s);
    }
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<i32, String> {
    match &cli.command {
        Command::Run => {
            let cfg = load(cli)?;
            let result = run_twin_experiment(&cfg).map_err(|e| e.to_string())?;
            if let Some(r) = &result.report {
                print!("{}", r.table());
            }
            let s = &result.summary;
            println!(
                "limsup E|e|^2 = {}  bound = {}  completed {}/{}  -> {}",
                s.limsup.map_or("n/a".into(), |l| format!("{:.4e}", l.limsup)),
                s.bound.map_or("n/a".into(), |b| format!("{b:.4e}")),
                s.completed,
                s.replicas,
                cfg.output.display()
            );
            for f in &s.failures {
                eprintln!("replica {}: {}", f.replica, f.message);
            }
            Ok(s.status.exit_code())
        }
        Command::Sweep { param, values } => {
            let cfg = load(cli)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.output.clone());
            let cells = sweep(&cfg, param, values, &out).map_err(|e| e.to_string())?;
            let mut code = exit::SUCCESS;
            for c in &cells {
                match &c.outcome {
                    Ok(s) => println!(
                        "{param} = {:<10} limsup {:>12} bound {:>12} {:?}",
                        c.value,
                        s.limsup.map_or("n/a".into(), |l| format!("{:.4e}", l.limsup)),
                        s.bound.map_or("n/a".into(), |b| format!("{b:.4e}")),
                        s.status
                    ),
                    Err(e) => println!("{param} = {:<10} error: {e}", c.value),
                }
                code = code.max(c.status().exit_code());
            }
            println!("report: {}", out.join("report.csv").display());
            Ok(code)
        }
        Command::VerifyIdentities { samples } => {
            let rep = verify_identities(cli.seed.unwrap_or(0), *samples).map_err(|e| e.to_string())?;
            print!("{}", rep.table());
            Ok(if rep.pass() { exit::SUCCESS } else { exit::IDENTITY_FAILURE })
        }
        Command::Calibrate => {
            let cfg = load(cli)?;
            let pre = preflight(&cfg).map_err(|e| e.to_string())?;
            let c = &pre.constants;
            println!("c1 = {:.6}  c2 = {:.6}  c_L = {:.6}  h = {:.6}  M_u = {:.6}", c.c1, c.c2, c.c_l, c.h, pre.m_u);
            if let Some(r) = &pre.report {
                print!("{}", r.table());
            }
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
                let json = serde_json::to_string_pretty(&pre).map_err(|e| e.to_string())?;
                std::fs::write(dir.join("calibration.json"), json).map_err(|e| e.to_string())?;
            }
            Ok(match pre.report.map(|r| r.guaranteed) {
                Some(false) => RunStatus::ConditionsFalse.exit_code(),
                _ => exit::SUCCESS,
            })
        }
        Command::Report => {
            let dir = cli.out.clone().ok_or("--out is required for report")?;
            let rows = report(&dir).map_err(|e| e.to_string())?;
            println!("{} runs -> {}", rows.len(), dir.join("report.csv").display());
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(exit::RUN_ERROR as u8);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(exit::RUN_ERROR as u8);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::RUN_ERROR as u8)
        }
    }
}
