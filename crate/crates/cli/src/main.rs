use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swift_bsde::Variant;
use swift_bsde_cli::{
    deliver, run_converge, run_profile, run_solve, AntireflectiveSpec, CliError, CliResult, Format,
    ProblemSpec, RunConfig, SchemeSpec,
};

/// Shannon-wavelet solver for one-dimensional FBSDEs.
#[derive(Parser)]
#[command(name = "swift-bsde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once and report (y0, z0) with errors against the reference.
    Solve(RunArgs),
    /// Solve for every P in a list and fit convergence orders.
    Converge(RunArgs),
    /// Solve once and report wall time per phase.
    Profile(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Builtin problem (ex1, ex2_call, ex3_spread, ex4) or a problem JSON file.
    #[arg(long)]
    problem: Option<String>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// A, B, C, D or "theta1,theta2".
    #[arg(long)]
    scheme: Option<String>,
    /// quick or mixed.
    #[arg(long)]
    variant: Option<String>,
    /// Number of time steps.
    #[arg(long = "P", allow_negative_numbers = true)]
    p: Option<i64>,
    /// Comma-separated list of step counts.
    #[arg(long = "P-list", value_delimiter = ',', allow_negative_numbers = true)]
    p_list: Option<Vec<i64>>,
    /// Wavelet order.
    #[arg(long = "J", allow_negative_numbers = true)]
    j: Option<i64>,
    /// Domain width multiplier.
    #[arg(long = "L", allow_negative_numbers = true)]
    l: Option<f64>,
    /// Picard iterations per implicit step.
    #[arg(long)]
    picard: Option<usize>,
    /// Boundary fraction, or "off".
    #[arg(long)]
    antireflective: Option<String>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

impl RunArgs {
    fn config(self) -> CliResult<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.problem {
            c.problem = Some(ProblemSpec::Name(p));
        }
        if let Some(s) = self.scheme {
            c.scheme = SchemeSpec::Label(s);
        }
        if let Some(v) = self.variant {
            c.variant = v.parse::<Variant>()?;
        }
        if let Some(p) = self.p {
            c.p = p;
        }
        if let Some(list) = self.p_list {
            c.p_list = Some(list);
        }
        if let Some(j) = self.j {
            c.j = j;
        }
        if let Some(l) = self.l {
            c.l = l;
        }
        if let Some(i) = self.picard {
            c.picard_iters = i;
        }
        if let Some(a) = self.antireflective {
            c.antireflective = a.parse::<AntireflectiveSpec>()?;
        }
        if let Some(out) = self.out {
            c.output.path = Some(out);
        }
        if let Some(f) = self.format {
            c.output.format = Some(f.parse::<Format>()?);
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> CliResult<Option<String>> {
    let (args, runner): (RunArgs, fn(&RunConfig) -> CliResult<String>) = match cli.command {
        Command::Solve(a) => (a, run_solve),
        Command::Converge(a) => (a, run_converge),
        Command::Profile(a) => (a, run_profile),
    };
    let config = args.config()?;
    let text = runner(&config)?;
    deliver(&config, text)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(text)) => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                CliError::Config(_) => "config error",
                CliError::Runtime(_) => "error",
            };
            eprintln!("{kind}: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
