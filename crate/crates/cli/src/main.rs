use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgscatter_cli::{parse_config, run_experiment, CliError, Command, ExperimentSpec};

#[derive(Parser)]
#[command(name = "kgscatter", version, about = "Klein-Gordon field + extended particle experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run whatever command the config file names.
    Run(Common),
    /// Evolve a (perturbed) soliton and record energy and trajectory.
    Simulate(Common),
    /// Stationary residuals and the symplectic Gram matrix at v.
    Soliton(Common),
    /// Scan H(iω+0), det M and F(ω) along the imaginary axis.
    Spectral(Common),
    /// Scan |ρ̂| for Fourier zeros.
    WienerCheck(Common),
    /// Frozen linear flow from projected random data.
    Frozen(Common),
    /// Nonlinear scattering of a perturbed soliton.
    Scatter(Common),
    /// Weighted decay of the free moving-frame flow.
    DecayProbe(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

fn resolve(sub: Sub) -> Result<(ExperimentSpec, Option<usize>), CliError> {
    let (command, args) = match sub {
        Sub::Run(a) => (None, a),
        Sub::Simulate(a) => (Some(Command::Simulate), a),
        Sub::Soliton(a) => (Some(Command::Soliton), a),
        Sub::Spectral(a) => (Some(Command::Spectral), a),
        Sub::WienerCheck(a) => (Some(Command::WienerCheck), a),
        Sub::Frozen(a) => (Some(Command::Frozen), a),
        Sub::Scatter(a) => (Some(Command::Scatter), a),
        Sub::DecayProbe(a) => (Some(Command::DecayProbe), a),
    };
    let mut spec = match (&args.config, command) {
        (Some(path), _) => parse_config(path)?,
        (None, Some(c)) => ExperimentSpec::new(c),
        (None, None) => {
            return Err(CliError::Validation {
                field: "--config".into(),
                reason: "`run` needs a config file".into(),
            })
        }
    };
    if let Some(c) = command {
        if c != spec.command {
            return Err(CliError::Validation {
                field: "command".into(),
                reason: format!("config is for `{}`, not `{c}`", spec.command),
            });
        }
    }
    if let Some(out) = args.out {
        spec.out = out;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    Ok((spec, args.threads))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = resolve(cli.command).and_then(|(spec, threads)| {
        if let Some(n) = threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Validation {
                    field: "--threads".into(),
                    reason: e.to_string(),
                })?;
        }
        run_experiment(&spec)
    });
    match result {
        Ok(m) => {
            println!("{}: {} files written in {:.2}s", m.command, m.files.len(), m.wall_time_s);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
