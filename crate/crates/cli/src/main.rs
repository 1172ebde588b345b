use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hardrank_cli::config::Settings;
use hardrank_cli::run::{load_checkpoint, load_data, run_experiment, write_analysis};
use hardrank_cli::sweep::{run_sweep, Grid};
use hardrank_cli::{expand_dotted_flags, thread_count};
use hardrank_core::data::DatasetSummary;
use hardrank_core::prefcurve::curve_sweep;
use hardrank_core::PreferenceCurve;

/// Pairwise ranking experiments with BPR / Hard-BPR and RNS / DNS sampling.
///
/// Any config key can also be given as `--section.key value`.
#[derive(Parser)]
#[command(name = "hardrank", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its artifacts to the output directory.
    Run(ConfigArgs),
    /// Run a grid of configurations; resumes from an existing results.csv.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Grid axis `section.key=v1,v2,...`; repeat for a Cartesian product.
        #[arg(long = "grid", value_name = "KEY=V1,V2")]
        grid: Vec<String>,
        /// Built-in curve study: b-sweep, c-sweep or a-sweep.
        #[arg(long)]
        preset: Option<String>,
    },
    /// False-negative analysis of a finished run's checkpoint.
    Analyze {
        /// Run directory holding config.toml and checkpoint.bin.
        #[arg(long)]
        run_dir: PathBuf,
        /// Checkpoint to analyze instead of <run-dir>/checkpoint.bin.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print a preference curve as CSV: x,delta_g,delta_g_over_c,g,neg_log_g.
    Curve(CurveArgs),
    /// Print dataset statistics: #User,#Item,#Train,#Val,#Test,Density.
    Datastats(ConfigArgs),
}

#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Interaction file (temporal split) or directory with train/val/test files.
    #[arg(long)]
    dataset: Option<String>,
    /// Use the synthetic planted-false-negative generator.
    #[arg(long)]
    synthetic: bool,
    /// mf or lightgcn.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    /// rns or dns.
    #[arg(long)]
    sampler: Option<String>,
    /// DNS candidate pool size H.
    #[arg(long)]
    pool_size: Option<String>,
    /// bpr or hardbpr.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    b: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<String>,
    #[arg(long)]
    l2: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Any config key, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", allow_hyphen_values = true)]
    set: Vec<String>,
}

impl ConfigArgs {
    fn apply(&self, settings: &mut Settings) -> Result<()> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("config error: reading {}", path.display()))?;
            settings.merge_toml(&text).context("config error")?;
        }
        if let Some(path) = &self.dataset {
            settings.set_str("data.path", path)?;
            settings.set_str("data.synthetic", "false")?;
        }
        if self.synthetic {
            settings.set_str("data.synthetic", "true")?;
        }
        let flags = [
            ("model.kind", &self.model),
            ("model.dim", &self.dim),
            ("sampler.kind", &self.sampler),
            ("sampler.pool_size", &self.pool_size),
            ("loss.kind", &self.loss),
            ("loss.a", &self.a),
            ("loss.b", &self.b),
            ("loss.c", &self.c),
            ("loss.l2", &self.l2),
            ("train.lr", &self.lr),
            ("train.epochs", &self.epochs),
            ("train.k", &self.k),
            ("run.seed", &self.seed),
            ("run.out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                settings.set_str(key, v).context("config error")?;
            }
        }
        for s in &self.set {
            settings.apply_override(s).context("config error")?;
        }
        Ok(())
    }

    fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        self.apply(&mut s)?;
        Ok(s)
    }
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    a: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    b: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    c: f64,
    #[arg(long, default_value_t = -10.0, allow_hyphen_values = true)]
    lo: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    hi: f64,
    #[arg(long, default_value_t = 2001)]
    steps: usize,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn curve_command(args: &CurveArgs) -> Result<()> {
    let curve = PreferenceCurve::new(args.a, args.b, args.c).context("curve")?;
    anyhow::ensure!(args.steps >= 2, "curve: --steps must be at least 2");
    anyhow::ensure!(args.lo < args.hi, "curve: --lo must be below --hi");
    let mut out = String::from("x,delta_g,delta_g_over_c,g,neg_log_g\n");
    for p in curve_sweep(&curve, args.lo, args.hi, args.steps) {
        out.push_str(&format!(
            "{:.6},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            p.x, p.delta_g, p.delta_g_over_c, p.g, p.neg_log_g
        ));
    }
    match &args.out {
        Some(path) => fs::write(path, out).with_context(|| format!("io: writing {}", path.display())),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.settings()?.resolve().context("config error")?;
            let summary = run_experiment(&cfg)?;
            println!("{}", summary.line());
        }
        Command::Sweep { config, grid, preset } => {
            let settings = config.settings()?;
            let mut g = match &preset {
                Some(name) => Grid::preset(name)?,
                None => Grid::cartesian(&grid)?,
            };
            if preset.is_some() && !grid.is_empty() {
                g = g.product(Grid::cartesian(&grid)?)?;
            }
            let root = PathBuf::from(settings.str("run.out")?);
            let results = run_sweep(&settings, &g, &root)?;
            let failed = results.iter().filter(|r| r.outcome.is_err()).count();
            for r in results.iter().filter(|r| r.outcome.is_err()) {
                if let Err(e) = &r.outcome {
                    eprintln!("cell {}: {e}", r.index);
                }
            }
            println!(
                "sweep: {} cells run, {} failed, results in {}",
                results.len(),
                failed,
                root.join("results.csv").display()
            );
        }
        Command::Analyze {
            run_dir,
            checkpoint,
            config,
        } => {
            let mut settings = Settings::default();
            let snapshot = run_dir.join("config.toml");
            let text = fs::read_to_string(&snapshot)
                .with_context(|| format!("config error: reading {}", snapshot.display()))?;
            settings.merge_toml(&text).context("config error")?;
            config.apply(&mut settings)?;
            let cfg = settings.resolve().context("config error")?;
            let data = load_data(&cfg.data)?;
            let path = checkpoint.unwrap_or_else(|| run_dir.join("checkpoint.bin"));
            let model = load_checkpoint(&path, &data.dataset)?;
            let mut written = Vec::new();
            let kl = write_analysis(&run_dir, &model, &data, &cfg.analysis, cfg.seed, &mut written)?;
            println!("kl_divergence={kl:.6}");
        }
        Command::Curve(args) => curve_command(&args)?,
        Command::Datastats(args) => {
            let cfg = args.settings()?.resolve().context("config error")?;
            let data = load_data(&cfg.data)?;
            println!("{}", DatasetSummary::CSV_HEADER);
            println!("{}", data.dataset.summary().csv_row());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse_from(expand_dotted_flags(std::env::args()));
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build_global()
    {
        eprintln!("error: thread pool: {e}");
        return ExitCode::FAILURE;
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
