use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ellinc_cli::commands::{self, Common, ConjugateArgs};

#[derive(Parser)]
#[command(
    name = "ellinc",
    about = "Regularized solver and calculus for monotone elliptic inclusions with integrable data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Problem configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory (stdout / derived name when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key: BLOCK.key=value (repeatable)
    #[arg(long = "set")]
    set: Vec<String>,
    /// Seed for every sampling check
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite completed runs / accept failing validation
    #[arg(long)]
    force: bool,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

impl CommonOpts {
    fn into_common(self) -> Common {
        Common {
            config: self.config,
            out: self.out,
            set: self.set,
            seed: self.seed,
            force: self.force,
            quiet: self.quiet,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the continuation scheme and every diagnostic
    Solve {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Tabulate the Fenchel transform of the first N-function block
    Conjugate {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0.1)]
        eta_min: f64,
        #[arg(long, default_value_t = 10.0)]
        eta_max: f64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 150.0)]
        radius: f64,
        #[arg(long, default_value_t = 81)]
        density: usize,
    },
    /// Tabulate the graph rotation (nu, xi, eta, mu) of the first graph block
    Minty {
        #[command(flatten)]
        common: CommonOpts,
        /// Transform arguments, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        nu: Vec<f64>,
    },
    /// Evaluate the rearrangement-based supremum bound for a problem block
    Bound {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit distribution/rearrangement/symmetral tables for a problem block
    Rearrange {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Fan out solve runs over a parameter list
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// BLOCK.key=v1,v2,... to sweep over
        #[arg(long)]
        param: String,
    },
    /// Run the acceptance suite and print one line per criterion
    Selftest,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage problems are config-class errors; keep exit 2 for
            // failed diagnostics only
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if is_help { ExitCode::SUCCESS } else { ExitCode::from(64) };
        }
    };
    let code = match cli.command {
        Cmd::Solve { common } => commands::cmd_solve(&common.into_common()),
        Cmd::Conjugate { common, eta_min, eta_max, count, radius, density } => {
            let args = ConjugateArgs { eta_min, eta_max, count, radius, density };
            commands::cmd_conjugate(&common.into_common(), &args)
        }
        Cmd::Minty { common, nu } => commands::cmd_minty(&common.into_common(), &nu),
        Cmd::Bound { common } => commands::cmd_bound(&common.into_common()),
        Cmd::Rearrange { common } => commands::cmd_rearrange(&common.into_common()),
        Cmd::Sweep { common, param } => commands::cmd_sweep(&common.into_common(), &param),
        Cmd::Selftest => {
            let results = ellinc_cli::acceptance::run_all();
            let mut all = true;
            for r in &results {
                println!("{}", r.line());
                all &= r.pass;
            }
            if all {
                commands::EXIT_OK
            } else {
                commands::EXIT_DIAGNOSTICS
            }
        }
    };
    ExitCode::from(code.clamp(0, 255) as u8)
}
