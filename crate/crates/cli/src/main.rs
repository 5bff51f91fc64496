use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use svsnltv_cli::{
    cmd_degrade, cmd_evaluate, cmd_restore, cmd_sweep, with_threads, CliError, RunConfig,
    SweepRange,
};

/// Color image restoration with saturation-value similarity nonlocal TV.
#[derive(Parser)]
#[command(name = "svsnltv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key = value config file; flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Extra key=value override (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    threads: Option<String>,
    /// Blur kernel: none, gaussian:SIGMA[:RADIUS] or motion:LENGTH:ANGLE
    #[arg(long)]
    blur: Option<String>,
}

#[derive(Args)]
struct NoiseArgs {
    /// none, gaussian or poisson
    #[arg(long)]
    noise: Option<String>,
    /// Gaussian standard deviation, fractions allowed (30/255)
    #[arg(long)]
    sigma: Option<String>,
    /// Poisson scale d
    #[arg(long)]
    d: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    alpha: Option<String>,
    /// svs or nltv
    #[arg(long)]
    method: Option<String>,
    /// l2 or l1
    #[arg(long)]
    fidelity: Option<String>,
    /// Graph filtering parameter, or auto
    #[arg(long)]
    h0: Option<String>,
    #[arg(long)]
    outer_max: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    /// NLG1 graph cache: read if present, otherwise written
    #[arg(long, value_name = "FILE")]
    graph_cache: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Blur and/or add noise to a clean image
    Degrade {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        seed: Option<String>,
    },
    /// Restore a degraded image
    Restore {
        input: PathBuf,
        output: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// Per-iteration CSV (iter, objective, rel_err)
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Compare a restored image against a reference
    Evaluate {
        restored: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        common: Common,
        /// S-CIELAB threshold in Delta E units
        #[arg(long)]
        threshold: Option<String>,
        /// Write CSV here instead of stdout
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
    },
    /// Restore over a range of alpha and report metrics per value
    Sweep {
        input: PathBuf,
        reference: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        noise: NoiseArgs,
        #[command(flatten)]
        solve: SolveArgs,
        /// lo:hi:step
        #[arg(
            long,
            conflicts_with = "paper_range",
            required_unless_present = "paper_range"
        )]
        range: Option<String>,
        /// [sqrt(N)/1000, sqrt(N)/10] with N the pixel count
        #[arg(long)]
        paper_range: bool,
        /// Step for --paper-range
        #[arg(long, default_value = "0.01", requires = "paper_range")]
        step: String,
        #[arg(long, short, value_name = "FILE")]
        output: Option<PathBuf>,
        /// Save the best-PSNR restoration here
        #[arg(long, value_name = "FILE")]
        best_output: Option<PathBuf>,
    },
}

fn resolve(common: &Common, flags: Vec<(&str, &Option<String>)>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    let named = [("threads", &common.threads), ("blur", &common.blur)]
        .into_iter()
        .chain(flags);
    for (key, value) in named {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.apply_overrides(common.set.iter().map(String::as_str))?;
    Ok(cfg)
}

fn noise_flags(n: &NoiseArgs) -> Vec<(&str, &Option<String>)> {
    vec![("noise", &n.noise), ("sigma", &n.sigma), ("d", &n.d)]
}

fn solve_flags(s: &SolveArgs) -> Vec<(&str, &Option<String>)> {
    vec![
        ("alpha", &s.alpha),
        ("method", &s.method),
        ("fidelity", &s.fidelity),
        ("h0", &s.h0),
        ("outer_max", &s.outer_max),
        ("tol", &s.tol),
    ]
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write + Send>, CliError> {
    Ok(match path {
        Some(p) => Box::new(
            std::fs::File::create(p)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?,
        ),
        None => Box::new(std::io::stdout()),
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Degrade {
            input,
            output,
            common,
            noise,
            seed,
        } => {
            let mut flags = noise_flags(&noise);
            flags.push(("seed", &seed));
            let cfg = resolve(&common, flags)?;
            with_threads(cfg.threads, || cmd_degrade(&input, &output, &cfg))
        }
        Command::Restore {
            input,
            output,
            common,
            noise,
            solve,
            trace,
        } => {
            let mut flags = noise_flags(&noise);
            flags.extend(solve_flags(&solve));
            let cfg = resolve(&common, flags)?;
            let result = with_threads(cfg.threads, || {
                cmd_restore(
                    &input,
                    &output,
                    trace.as_deref(),
                    solve.graph_cache.as_deref(),
                    &cfg,
                )
            })?;
            eprintln!(
                "{} iterations, final relative change {:e}",
                result.iterations, result.final_rel_err
            );
            Ok(())
        }
        Command::Evaluate {
            restored,
            reference,
            common,
            threshold,
            output,
        } => {
            let cfg = resolve(&common, vec![("scielab_threshold", &threshold)])?;
            let mut out = open_output(&output)?;
            with_threads(cfg.threads, || {
                cmd_evaluate(&restored, &reference, &cfg, &mut out)
            })?;
            out.flush()?;
            Ok(())
        }
        Command::Sweep {
            input,
            reference,
            common,
            noise,
            solve,
            range,
            paper_range,
            step,
            output,
            best_output,
        } => {
            let mut flags = noise_flags(&noise);
            flags.extend(solve_flags(&solve));
            let cfg = resolve(&common, flags)?;
            let range = match (range, paper_range) {
                (Some(spec), _) => SweepRange::parse(&spec)?,
                (None, _) => SweepRange::Paper {
                    step: svsnltv_cli::config::parse_real(&step)?,
                },
            };
            let mut out = open_output(&output)?;
            with_threads(cfg.threads, || {
                cmd_sweep(
                    &input,
                    &reference,
                    range,
                    solve.graph_cache.as_deref(),
                    best_output.as_deref(),
                    &cfg,
                    &mut out,
                )
            })?;
            out.flush()?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
