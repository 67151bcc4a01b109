mod commands;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{CiOptions, DimredOptions, Settings, SimulateOptions};
use output::{error_json, render_text, success_json, CliError, CliResult, Report, EXIT_INPUT, EXIT_OK};

/// Chernoff information between Gaussian graphical models.
#[derive(Parser, Debug)]
#[command(name = "chernoff", version)]
struct Cli {
    /// Overrides the unit-eigenvalue and ordering slack tolerances.
    #[arg(long, global = true)]
    tolerance: Option<f64>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Covariance, precision and determinant of a tree.
    Tree {
        #[command(subcommand)]
        action: TreeAction,
    },
    /// Chernoff information of a pair of models.
    Ci(CiArgs),
    /// Adding, division and grafting operations.
    Ops {
        #[command(subcommand)]
        action: OpsAction,
    },
    /// Pairwise CI over a grafting chain.
    Chain(ChainArgs),
    /// Classification-oriented dimension reduction.
    Dimred(DimredArgs),
    /// Monte-Carlo error exponent of MAP classification.
    Simulate(SimulateArgs),
}

#[derive(Subcommand, Debug)]
enum TreeAction {
    Build { input: PathBuf },
    Invert { input: PathBuf },
    Det { input: PathBuf },
}

#[derive(Args, Debug)]
struct CiArgs {
    /// A pair file, or two model files.
    #[arg(num_args = 0..=2)]
    inputs: Vec<PathBuf>,
    /// Generalized eigenvalues of Σ1Σ2⁻¹, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_negative_numbers = true)]
    from_eigenvalues: Option<Vec<f64>>,
    /// Swap the two models (reciprocal spectrum).
    #[arg(long)]
    reverse: bool,
    /// Include the spectrum and both KL divergences.
    #[arg(long)]
    spectrum: bool,
    /// Include solver details for λ*.
    #[arg(long)]
    lambda_star: bool,
}

#[derive(Subcommand, Debug)]
enum OpsAction {
    /// Attach a new leaf to both trees of a pair.
    Add {
        #[arg(num_args = 1..=2, required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        node: usize,
        #[arg(long, allow_negative_numbers = true)]
        weight: f64,
    },
    /// Split a shared edge of both trees through a new node.
    Divide {
        #[arg(num_args = 1..=2, required = true)]
        inputs: Vec<PathBuf>,
        /// Shared edge as `a,b`.
        #[arg(long, value_delimiter = ',', required = true)]
        edge: Vec<usize>,
        #[arg(long, allow_negative_numbers = true)]
        w1: f64,
        #[arg(long, allow_negative_numbers = true)]
        w2: f64,
    },
    /// Move the subtree at `--root` from `--from` to `--to`.
    Graft {
        input: PathBuf,
        #[arg(long)]
        root: usize,
        #[arg(long)]
        from: usize,
        #[arg(long)]
        to: usize,
        /// Defaults to the weight of the cut edge.
        #[arg(long, allow_negative_numbers = true)]
        weight: Option<f64>,
    },
}

#[derive(Args, Debug)]
struct ChainArgs {
    input: PathBuf,
    #[arg(long)]
    verify_ordering: bool,
    #[arg(long)]
    check_independence: bool,
}

#[derive(Args, Debug)]
struct DimredArgs {
    #[arg(num_args = 1..=2, required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    n_out: usize,
    /// Compare against PCA of the pooled covariance.
    #[arg(long)]
    compare_pca: bool,
    /// Compare against this many random projections.
    #[arg(long)]
    compare_random: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    config: PathBuf,
    /// Also write the JSON result here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-length table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Repeat the run on data reduced to this many dimensions.
    #[arg(long)]
    reduce: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn dispatch(cli: &Cli) -> CliResult<Report> {
    if let Some(t) = cli.tolerance {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::Usage(format!("--tolerance must be a non-negative number, got {t}")));
        }
    }
    let settings = Settings { tolerance: cli.tolerance };
    match &cli.command {
        Command::Tree { action } => match action {
            TreeAction::Build { input } => commands::tree_build(input),
            TreeAction::Invert { input } => commands::tree_invert(input),
            TreeAction::Det { input } => commands::tree_det(input),
        },
        Command::Ci(a) => commands::ci(
            &CiOptions {
                inputs: a.inputs.clone(),
                from_eigenvalues: a.from_eigenvalues.clone(),
                reverse: a.reverse,
                spectrum: a.spectrum,
                lambda_star: a.lambda_star,
            },
            &settings,
        ),
        Command::Ops { action } => match action {
            OpsAction::Add { inputs, node, weight } => commands::ops_add(inputs, *node, *weight, &settings),
            OpsAction::Divide { inputs, edge, w1, w2 } => match edge[..] {
                [a, b] => commands::ops_divide(inputs, (a, b), *w1, *w2, &settings),
                _ => Err(CliError::Usage("--edge takes exactly two node ids, as `a,b`".into())),
            },
            OpsAction::Graft { input, root, from, to, weight } => commands::ops_graft(input, *root, *from, *to, *weight),
        },
        Command::Chain(a) => commands::chain(&a.input, a.verify_ordering, a.check_independence, &settings),
        Command::Dimred(a) => commands::dimred(
            &DimredOptions {
                inputs: a.inputs.clone(),
                n_out: a.n_out,
                compare_pca: a.compare_pca,
                compare_random: a.compare_random,
                seed: a.seed,
            },
            &settings,
        ),
        Command::Simulate(a) => commands::simulate(&SimulateOptions {
            config: a.config.clone(),
            csv: a.csv.clone(),
            reduce: a.reduce,
            seed: a.seed,
        }),
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json renders")
}

fn run(cli: &Cli) -> CliResult<String> {
    let report = dispatch(cli)?;
    let json = pretty(&success_json(&report));
    if let Command::Simulate(SimulateArgs { out: Some(path), .. }) = &cli.command {
        std::fs::write(path, format!("{json}\n"))
            .map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })?;
    }
    Ok(match cli.format {
        Format::Json => format!("{json}\n"),
        Format::Text => render_text(&report),
    })
}

fn fail(err: &CliError, format: Format) -> ExitCode {
    match format {
        Format::Json => println!("{}", pretty(&error_json(err))),
        Format::Text => eprintln!("error [{}]: {}", err.code(), err.message()),
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_OK as u8);
        }
        Err(e) => {
            let _ = e.print();
            let err = CliError::Usage(e.kind().to_string());
            println!("{}", pretty(&error_json(&err)));
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(text)) => {
            print!("{text}");
            ExitCode::from(EXIT_OK as u8)
        }
        Ok(Err(err)) => fail(&err, cli.format),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal error".into());
            fail(&CliError::Internal(msg), cli.format)
        }
    }
}
