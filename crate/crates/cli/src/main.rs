use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use log::info;

use fsi_split::config::{parse_config, ParsedConfig};
use fsi_split::driver::{poiseuille_check, self_convergence_study, Simulation};
use fsi_split::export::{export_fields, ExportOptions, Geometry};
use fsi_split::{EnergyLedger, ExitStatus, Tolerances, Verdict};

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFY_FAILED: u8 = 4;

#[derive(Parser)]
#[command(name = "fsi-split", version, about = "Kinematically coupled FSI solver with an energy-ledger verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation and write the ledger, verdict and field output
    Run {
        config: PathBuf,
        /// output directory (overrides `[output] directory`)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a ledger file (.jsonl or .csv) against the energy identities
    Verify {
        ledger: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Temporal self-convergence study on k halvings of the configured step
    Converge {
        config: PathBuf,
        #[arg(long, default_value_t = 4)]
        ladder: usize,
        /// reference step count as a multiple of the finest rung
        #[arg(long, default_value_t = 8)]
        reference_factor: usize,
    },
    /// Rigid-wall steady flow compared against the parabolic profile
    Poiseuille {
        config: PathBuf,
        /// allowed L² relative error
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let workers = fsi_split::init_workers_from_env();
    info!("{workers} assembly workers");
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn load(path: &Path) -> anyhow::Result<ParsedConfig> {
    parse_config(path).with_context(|| format!("configuration {}", path.display()))
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Run { config, out } => run(&config, out),
        Command::Verify { ledger, json } => {
            let ledger = EnergyLedger::read_path(&ledger).with_context(|| format!("ledger {}", ledger.display()))?;
            let verdict = ledger.verify(&Tolerances::default());
            if json {
                println!("{}", serde_json::to_string_pretty(&verdict)?);
            } else {
                print_verdict(&verdict);
            }
            Ok(if verdict.passed() { 0 } else { EXIT_VERIFY_FAILED })
        }
        Command::Converge {
            config,
            ladder,
            reference_factor,
        } => {
            let cfg = load(&config)?.run;
            anyhow::ensure!(ladder >= 2, "--ladder needs at least two rungs");
            anyhow::ensure!(reference_factor >= 2, "--reference-factor must be at least 2");
            let rungs: Vec<usize> = (0..ladder).map(|i| cfg.steps << i).collect();
            let reference = rungs[ladder - 1] * reference_factor;
            info!("ladder {rungs:?}, reference {reference} steps");
            let report = self_convergence_study(&cfg, &rungs, reference)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.failures.is_empty() { 0 } else { 3 })
        }
        Command::Poiseuille { config, tolerance } => {
            let cfg = load(&config)?.run;
            let (report, out) = poiseuille_check(cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if out.status != ExitStatus::Completed {
                return Ok(out.status.exit_code() as u8);
            }
            let ok = report.l2_relative_error <= tolerance;
            println!(
                "{}: L2 relative error {:.3e} (tolerance {tolerance})",
                if ok { "PASS" } else { "FAIL" },
                report.l2_relative_error
            );
            Ok(if ok { 0 } else { EXIT_VERIFY_FAILED })
        }
    }
}

fn run(config: &Path, out: Option<PathBuf>) -> anyhow::Result<u8> {
    let parsed = load(config)?;
    let dir = out
        .or_else(|| parsed.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    info!(
        "{} steps of {:.3e} s on a {}x{} mesh, mode {:?}",
        parsed.run.steps,
        parsed.run.dt(),
        parsed.run.mesh.nz,
        parsed.run.mesh.nr,
        parsed.run.mode
    );
    let mut sim = Simulation::new(parsed.run.clone())?;
    let output = fsi_split::driver::run_simulation(&mut sim);

    let jsonl = dir.join("ledger.jsonl");
    output
        .ledger
        .write_jsonl(BufWriter::new(fs::File::create(&jsonl)?))
        .with_context(|| format!("writing {}", jsonl.display()))?;
    let csv = dir.join("ledger.csv");
    output
        .ledger
        .write_csv(BufWriter::new(fs::File::create(&csv)?))
        .with_context(|| format!("writing {}", csv.display()))?;

    let verdict = output.ledger.verify(&Tolerances::default());
    fs::write(dir.join("verdict.json"), serde_json::to_string_pretty(&verdict)?)?;
    fs::write(dir.join("status.json"), serde_json::to_string_pretty(&output.status)?)?;

    let geo = Geometry {
        fluid: &sim.problem.fluid_mesh,
        shell: &sim.problem.shell_mesh,
        radius: parsed.run.radius(),
    };
    let opts = ExportOptions {
        vtk: parsed.output.vtk,
        csv: parsed.output.csv,
    };
    let files = export_fields(&dir.join("fields"), &geo, &output.record.frames, opts)?;
    info!("wrote {} field files under {}", files.len(), dir.display());

    print_verdict(&verdict);
    match &output.status {
        ExitStatus::Completed => println!("completed {} steps", output.ledger.rows.len()),
        ExitStatus::WallContact { time, z, min_radius } => {
            println!("wall contact at t = {time:e}, z = {z:e} (min R + eta = {min_radius:e})")
        }
        ExitStatus::SolverFailure { step, message } => println!("solver failure at step {step}: {message}"),
    }
    Ok(output.status.exit_code() as u8)
}

fn print_verdict(v: &Verdict) {
    println!("energy scale {:.6e}, C_impl {:.6e}", v.scale, v.c_impl);
    for c in &v.checks {
        let at = c.worst_step.map(|s| format!(" at step {s}")).unwrap_or_default();
        println!(
            "{} {:<24} worst {:.3e}{at} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.worst,
            c.detail
        );
    }
}
