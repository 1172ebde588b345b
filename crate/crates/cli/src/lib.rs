//! Experiment runner for `hardrank`: config handling, seeded runs and sweeps.

pub mod config;
pub mod run;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, Settings};
pub use run::{run_experiment, RunSummary};
pub use sweep::{run_sweep, Grid};

/// Worker threads from `HARDRANK_THREADS`; absent or invalid means one.
pub fn thread_count() -> usize {
    std::env::var("HARDRANK_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Rewrites `--section.key value` and `--section.key=value` into
/// `--set section.key=value`.
pub fn expand_dotted_flags<I: IntoIterator<Item = String>>(args: I) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = args.into_iter().peekable();
    while let Some(arg) = it.next() {
        let dotted = arg
            .strip_prefix("--")
            .filter(|rest| rest.split('=').next().is_some_and(|k| k.contains('.')));
        match dotted {
            Some(rest) if rest.contains('=') => {
                out.push("--set".into());
                out.push(rest.to_string());
            }
            Some(rest) => {
                let key = rest.to_string();
                out.push("--set".into());
                match it.next() {
                    Some(v) => out.push(format!("{key}={v}")),
                    None => out.push(key),
                }
            }
            None => out.push(arg),
        }
    }
    out
}
