//! Command-line entry point: maps subcommands onto the library and failures
//! onto exit codes 2 (config), 3 (regime), 4 (numerical).

mod commands;
mod config;
mod report;

use clap::{Parser, Subcommand};
use commands::SweepAxis;
use config::{CommonArgs, Needs, NEEDS_ALL};
use shearspec::ErrorKind;

#[derive(Parser)]
#[command(
    name = "shearspec",
    version,
    about = "Spectral analysis of shear-flow linearizations on the torus",
    after_help = "Every parameter flag falls back to the environment variable named after it \
with the SHEARSPEC_ prefix (SHEARSPEC_NU, SHEARSPEC_EPS, ...), then to the --config TOML file, \
then to built-in defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dense spectrum of one assembled operator
    Spectrum {
        #[command(flatten)]
        common: CommonArgs,
        /// Operator label, e.g. linearized, dominant, reduced, taylor
        #[arg(long, default_value = "linearized")]
        operator: String,
    },
    /// Unstable eigenpair by three routes plus the dispersion prediction
    Unstable {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Contour projections and exchange diagnostics per spectral block
    Kato {
        #[command(flatten)]
        common: CommonArgs,
        /// Highest stable block index to project
        #[arg(long, default_value_t = 4)]
        blocks: usize,
    },
    /// Normal-form reduction: generators, decoupled eigenvalue, block spectra
    Normalform {
        #[command(flatten)]
        common: CommonArgs,
        /// Highest block index to report
        #[arg(long, default_value_t = 6)]
        blocks: usize,
    },
    /// Dispersion comparison eigenvalue against its closed form
    Taylor {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one parameter over a grid and fit the scaling
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Wavenumber parameter values to sweep, comma separated
        #[arg(long, value_delimiter = ',')]
        eps_list: Vec<f64>,
        /// Viscosity values to sweep, comma separated
        #[arg(long, value_delimiter = ',')]
        nu_list: Vec<f64>,
        /// Worker pool size; defaults to the machine parallelism
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Truncation and quadrature refinement tables
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        /// Truncation sizes to compare, comma separated
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        /// Quadrature node counts to compare, comma separated
        #[arg(long, value_delimiter = ',')]
        nodes_list: Vec<usize>,
    },
    /// Sample the reconstructed unstable eigenfunction on an x-y grid
    Field {
        #[command(flatten)]
        common: CommonArgs,
        /// Grid size as <nx>x<ny>
        #[arg(long, default_value = "64x64")]
        grid: String,
    },
}

fn dispatch(cli: Cli) -> shearspec::Result<()> {
    match cli.command {
        Command::Spectrum { common, operator } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_spectrum(&cfg, &operator)
        }
        Command::Unstable { common } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_unstable(&cfg)
        }
        Command::Kato { common, blocks } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_kato(&cfg, blocks)
        }
        Command::Normalform { common, blocks } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_normalform(&cfg, blocks)
        }
        Command::Taylor { common } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_taylor(&cfg)
        }
        Command::Sweep {
            common,
            eps_list,
            nu_list,
            jobs,
        } => {
            let axis = commands::sweep_axis(&eps_list, &nu_list)?;
            let needs = match axis {
                SweepAxis::Eps => Needs { nu: true, eps: false },
                SweepAxis::Nu => Needs { nu: false, eps: true },
            };
            let cfg = config::merge(&common, needs)?;
            commands::run_sweep(&cfg, axis, &eps_list, &nu_list, jobs)
        }
        Command::Convergence {
            common,
            n_list,
            nodes_list,
        } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_convergence(&cfg, &n_list, &nodes_list)
        }
        Command::Field { common, grid } => {
            let cfg = config::merge(&common, NEEDS_ALL)?;
            commands::run_field(&cfg, &grid)
        }
    }
}

fn kind_label(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Config => "config",
        ErrorKind::Regime => "regime",
        ErrorKind::Numerical => "numerical",
    }
}

fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Regime => 3,
        ErrorKind::Numerical => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = dispatch(cli) {
        let kind = err.kind();
        let payload = serde_json::json!({
            "error": err.to_string(),
            "kind": kind_label(kind),
        });
        eprintln!("{}", payload);
        std::process::exit(exit_code(kind));
    }
}
