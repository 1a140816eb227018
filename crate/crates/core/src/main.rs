use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hhdyn::scenarios::{self, Overrides, ScenarioConfig};
use hhdyn::{units, Error, Result};

#[derive(Parser)]
#[command(name = "hhdyn", version, about = "Laser-driven dynamics of two distant 1D hydrogen atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Produce and store the relaxed initial state.
    Relax(Common),
    /// Run a full scenario.
    Run(Common),
    /// List the available presets.
    Presets,
    /// Parse and validate a configuration, then print its expansion.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset to start from (overrides a `preset` key in the file).
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Clamp R at its frozen value and propagate (z1, z2) only.
    #[arg(long)]
    frozen_r: bool,
    /// Total propagation time in femtoseconds.
    #[arg(long)]
    duration_fs: Option<f64>,
}

fn build_config(c: &Common) -> Result<ScenarioConfig> {
    let duration = match c.duration_fs {
        Some(fs) if !(fs >= 0.0 && fs.is_finite()) => {
            return Err(Error::config(format!("--duration-fs must be non-negative, got {fs}")))
        }
        Some(fs) => Some(units::fs_to_au(fs)),
        None => None,
    };
    let ov = Overrides {
        directory: c.out.as_ref().map(|p| p.to_string_lossy().into_owned()),
        frozen_r: c.frozen_r,
        duration,
    };
    match &c.config {
        Some(path) => scenarios::load_config_with(path, c.preset.as_deref(), &ov),
        None => scenarios::parse_config_with("", c.preset.as_deref(), &ov),
    }
}

fn init_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Presets => {
            for (name, about) in scenarios::presets() {
                println!("{name:<28} {about}");
            }
        }
        Command::Validate(c) => {
            let cfg = build_config(&c)?;
            print!("{}", cfg.to_toml());
            for (k, v) in scenarios::describe(&cfg) {
                eprintln!("{k} = {v}");
            }
        }
        Command::Relax(c) => {
            init_threads(c.threads)?;
            let cfg = build_config(&c)?;
            let dir = cfg.output_dir();
            let init = scenarios::run_relax(&cfg).inspect_err(|e| scenarios::write_error_record(&dir, e))?;
            println!(
                "relaxed in {} steps: E_relax = {:.9} a.u., E_full = {:.9} a.u. -> {}",
                init.relax_steps,
                init.relax_energy.unwrap_or(f64::NAN),
                init.full_energy,
                dir.join(scenarios::INITIAL_STATE).display()
            );
        }
        Command::Run(c) => {
            init_threads(c.threads)?;
            let cfg = build_config(&c)?;
            let dir = cfg.output_dir();
            let s = scenarios::run_scenario(&cfg).inspect_err(|e| scenarios::write_error_record(&dir, e))?;
            let (ia, ib) = s.flux.total_ionization();
            println!(
                "{} steps to t = {:.3} a.u.: norm^2 = {:.6}, I_A = {:.4e}, I_B = {:.4e} -> {}",
                s.steps,
                s.final_time,
                s.final_norm_sqr,
                ia,
                ib,
                dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
