//! Command-line driver: configuration handling and the four commands.

pub mod commands;
pub mod config;

pub use commands::{exit_code, resolve_config, run, Cli, Command, GlobalArgs};
pub use config::{parse_config, ModelId, RunConfig};

/// Caps the worker pool from `WALKCAST_THREADS`; `0` runs sequentially.
pub fn init_threads() {
    let Ok(v) = std::env::var("WALKCAST_THREADS") else { return };
    let n = match v.trim().parse::<usize>() {
        Ok(0) => 1,
        Ok(n) => n,
        Err(_) => {
            eprintln!("walkcast: ignoring WALKCAST_THREADS={v}");
            return;
        }
    };
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}
