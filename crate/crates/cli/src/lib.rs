//! Library half of the `svsnltv` command-line tool.
//!
//! The binary is a thin clap front end over [`commands`]; keeping the logic
//! here lets tests drive the same code paths in memory.

pub mod commands;
pub mod config;

pub use commands::{
    alpha_range, best_row, build_graphs, cmd_degrade, cmd_evaluate, cmd_restore, cmd_sweep,
    degrade, evaluate_pair, paper_range, restore, sweep, Graphs, SweepRange, SweepRow,
};
pub use config::{Blur, Method, Noise, RunConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] svsnltv::Error),
}

impl CliError {
    /// 2 usage, 3 I/O, 4 numeric guard or divergence.
    pub fn exit_code(&self) -> i32 {
        use svsnltv::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Unreadable { .. }
                | E::Unwritable { .. }
                | E::UnsupportedFormat(_)
                | E::CorruptHeader { .. }
                | E::CorruptGraph(_) => 3,
                E::SpectralGuard { .. } | E::Diverged { .. } => 4,
                _ => 2,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Runs `f` on a pool of `threads` workers, or the global pool when 0.
pub fn with_threads<R: Send>(
    threads: usize,
    f: impl FnOnce() -> Result<R, CliError> + Send,
) -> Result<R, CliError> {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    pool.install(f)
}
