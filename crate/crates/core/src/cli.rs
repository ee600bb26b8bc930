//! Command-line front end.
//!
//! Exit codes: 0 success, 1 user error (bad flags or configuration),
//! 2 runtime failure (I/O, malformed weights, optimizer hard failure).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::colorpipe::{
    compare_optimizers, default_lr_grid, load_vgg19, run_header, run_with_network, write_compare_outputs,
    InitMode, LayerPlan, RunConfig, TraceRow,
};
use crate::convnet::{layer_checksum, load_weights, NetworkTopology, PoolMode};
use crate::error::Error;
use crate::optim::{Method, Status};

pub const WEIGHTS_ENV: &str = "CHROMABRUSH_WEIGHTS";
pub const PROGRESS_EVERY: usize = 25;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "chromabrush", version, about = "Colorize grayscale images with the style of a color image")]
pub struct CliInvocation {
    #[command(subcommand)]
    pub command: Command,

    /// More output (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    /// Suppress the run header and progress lines
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Subcommand)]
pub enum Command {
    /// Colorize the content image using the style image
    Colorize(RunArgs),
    /// Run the SGD / L-BFGS × fixed / decaying style weight comparison
    Compare(RunArgs),
    /// Validate a VGGW weight file and print its layer inventory
    CheckWeights {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct RunArgs {
    /// Grayscale image whose structure is kept
    #[arg(long)]
    pub content: PathBuf,
    /// Color image whose style is transferred
    #[arg(long)]
    pub style: PathBuf,
    /// Output PNG; the trace CSV is written next to it
    #[arg(long)]
    pub out: PathBuf,
    /// VGGW weight file (falls back to $CHROMABRUSH_WEIGHTS)
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Content weight
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Initial style weight [default: 1000 × alpha]
    #[arg(long)]
    pub beta: Option<f64>,
    /// Fractional style-weight decrease per iteration
    #[arg(long, default_value_t = 0.0025)]
    pub decay: f64,
    #[arg(long, default_value = "lbfgs", value_parser = parse_method)]
    pub optimizer: Method,
    #[arg(long, default_value = "avg", value_parser = parse_pool)]
    pub pooling: PoolMode,
    #[arg(long, default_value = "noise", value_parser = parse_init)]
    pub init: InitMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Longer image side is shrunk to at most this many pixels
    #[arg(long, default_value_t = 512)]
    pub max_side: u32,
    #[arg(long, default_value_t = 1.0)]
    pub sgd_lr: f64,
    /// Print the run header and exit
    #[arg(long)]
    pub dry_run: bool,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_pool(s: &str) -> Result<PoolMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl RunArgs {
    /// Assembles the run configuration; `env_weights` stands in for
    /// `--weights` when that flag is absent.
    pub fn to_config(&self, env_weights: Option<PathBuf>) -> RunConfig {
        RunConfig {
            content_path: self.content.clone(),
            style_path: self.style.clone(),
            output_path: self.out.clone(),
            weights_path: self.weights.clone().or(env_weights),
            iterations: self.iters,
            alpha: self.alpha,
            beta0: self.beta.unwrap_or(1e3 * self.alpha),
            decay_per_iter: self.decay,
            optimizer: self.optimizer,
            pooling: self.pooling,
            init: self.init,
            seed: self.seed,
            max_side: self.max_side,
            sgd_lr: self.sgd_lr,
        }
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<CliInvocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    CliInvocation::try_parse_from(argv)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ImageSize { .. } | Error::Capture(_) => EXIT_USER,
        _ => EXIT_RUNTIME,
    }
}

fn env_weights() -> Option<PathBuf> {
    std::env::var_os(WEIGHTS_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn progress_line(row: &TraceRow) -> String {
    format!(
        "iter {:>5}  beta {:.4e}  total {:.6e}  content {:.6e}  style {:.6e}  |g| {:.3e}",
        row.iter, row.beta, row.total, row.content, row.style, row.grad_norm
    )
}

/// Layer inventory of a VGGW file checked against the VGG-19 trunk.
pub fn check_weights(path: &std::path::Path) -> Result<Vec<String>, Error> {
    let topology = NetworkTopology::vgg19(PoolMode::Avg);
    let store = load_weights(path, &topology)?;
    Ok(topology
        .conv_layers()
        .map(|(name, _, _)| {
            let p = store.get(name).expect("validated");
            format!(
                "{name:<8} weight {:<18} bias {:<6} sha256:{}",
                format!("{:?}", p.weights.shape()),
                format!("{:?}", p.bias.shape()),
                layer_checksum(p)
            )
        })
        .collect())
}

/// Executes a parsed invocation, writing diagnostics to `err` and reports
/// to `out`. Returns the process exit code.
pub fn run(inv: &CliInvocation, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let chatty = !inv.quiet;
    match &inv.command {
        Command::CheckWeights { weights } => {
            let Some(path) = weights.clone().or_else(env_weights) else {
                let _ = writeln!(err, "error: no weight file: pass --weights or set {WEIGHTS_ENV}");
                return EXIT_USER;
            };
            match check_weights(&path) {
                Ok(lines) => {
                    for l in &lines {
                        let _ = writeln!(out, "{l}");
                    }
                    let _ = writeln!(out, "{}: {} layers ok", path.display(), lines.len());
                    EXIT_OK
                }
                Err(e) => {
                    let _ = writeln!(err, "error: {}: {e}", path.display());
                    EXIT_RUNTIME
                }
            }
        }
        Command::Colorize(args) | Command::Compare(args) => {
            let compare = matches!(inv.command, Command::Compare(_));
            let config = args.to_config(env_weights());
            let plan = LayerPlan::default();
            if chatty || args.dry_run {
                let _ = write!(err, "{}", run_header(&config, &plan));
            }
            if let Err(e) = config.validate() {
                let _ = writeln!(err, "error: {e}");
                return EXIT_USER;
            }
            if args.dry_run {
                return EXIT_OK;
            }
            if config.weights_path.is_none() {
                let _ = writeln!(err, "error: no weight file: pass --weights or set {WEIGHTS_ENV}");
                return EXIT_USER;
            }
            let network = match load_vgg19(&config) {
                Ok(n) => n,
                Err(e) => {
                    let path = config.weights_path.as_deref().unwrap_or_else(|| "".as_ref());
                    let _ = writeln!(err, "error: cannot load weights {}: {e}", path.display());
                    return exit_code(&e).max(EXIT_RUNTIME);
                }
            };
            if compare {
                run_compare(&config, &network, &plan, inv, out, err)
            } else {
                run_single(&config, &network, &plan, inv, err)
            }
        }
    }
}

fn run_single(
    config: &RunConfig,
    network: &crate::convnet::Network,
    plan: &LayerPlan,
    inv: &CliInvocation,
    err: &mut dyn Write,
) -> i32 {
    let every = if inv.verbose > 0 { 1 } else { PROGRESS_EVERY };
    let mut log = |row: &TraceRow| {
        if !inv.quiet && (row.iter.is_multiple_of(every) || row.iter + 1 == config.iterations) {
            let _ = writeln!(err, "{}", progress_line(row));
        }
    };
    match run_with_network(config, network, plan, &mut log) {
        Ok(outcome) => match outcome.status {
            Status::Completed => {
                if !inv.quiet {
                    let _ = writeln!(
                        err,
                        "wrote {} and {}",
                        config.output_path.display(),
                        config.trace_path().display()
                    );
                }
                EXIT_OK
            }
            Status::LineSearchFailed { iteration, reason } => {
                let _ = writeln!(
                    err,
                    "error: line search failed at iteration {iteration}: {reason}; best image so far written to {}",
                    config.output_path.display()
                );
                EXIT_RUNTIME
            }
            Status::Diverged { iteration } => {
                let _ = writeln!(err, "error: loss diverged at iteration {iteration}");
                EXIT_RUNTIME
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn run_compare(
    config: &RunConfig,
    network: &crate::convnet::Network,
    plan: &LayerPlan,
    inv: &CliInvocation,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let grid = default_lr_grid(config.sgd_lr);
    let outcome = match compare_optimizers(config, network, plan, &grid) {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    if let Err(e) = write_compare_outputs(config, &outcome) {
        let _ = writeln!(err, "error: {e}");
        return EXIT_RUNTIME;
    }
    let mut code = EXIT_OK;
    for p in &outcome.panels {
        let label = format!(
            "({}) {}, {} style weight",
            p.panel.label,
            p.panel.method,
            if p.panel.decaying { "decreasing" } else { "fixed" }
        );
        match &p.outcome {
            Ok(o) => {
                let lr = p.sgd_lr.map(|lr| format!("  lr {lr}")).unwrap_or_default();
                let _ = writeln!(out, "{label}: final loss {:.6e}{lr}  {:?}", o.final_loss, o.status);
                if !o.succeeded() {
                    code = EXIT_RUNTIME;
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{label}: failed: {e}");
                code = EXIT_RUNTIME;
            }
        }
        if inv.verbose > 0 {
            for (lr, loss) in &p.sweep {
                let _ = writeln!(out, "    lr {lr:e}: final loss {loss:.6e}");
            }
        }
    }
    code
}

/// Parses `argv` and runs it against the process's stdout and stderr.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match parse_args(argv) {
        Ok(inv) => run(&inv, &mut std::io::stdout(), &mut std::io::stderr()),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USER
            } else {
                EXIT_OK
            }
        }
    }
}
