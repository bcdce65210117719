//! Command-line driver: `preprocess`, `train`, `evaluate`, `sweep` and
//! `theory-check`. Exit code 0 on success, 1 on validation errors, 2 on
//! runtime failures.

pub mod config;
pub mod pipeline;
pub mod theory_check;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::eval::fmt_metric;
use config::{parse_kv, RunConfig};
use pipeline::SweepAxis;

#[derive(Debug, Parser)]
#[command(name = "hetrofair", version, about = "Popularity-bias-aware graph collaborative filtering")]
pub struct Cli {
    /// Worker threads for ranking and propagation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Suppress per-epoch progress on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, deduplicate, k-core filter, reindex and split a dataset; write the
    /// processed files and a stats sidecar.
    Preprocess {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train a model; writes config.resolved, train.log, checkpoint.hfr and
    /// run_record.txt into the output directory.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a trained run directory and write metrics.csv and report.txt.
    Evaluate {
        /// Directory produced by `train`.
        #[arg(long)]
        run_dir: PathBuf,
        /// Also report long-tail and short-head item strata.
        #[arg(long)]
        stratified: bool,
    },
    /// Train and evaluate once per value of one axis; writes summary.csv.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// delta, K or d.
        #[arg(long)]
        axis: String,
        /// Comma list (`1,2,3`) or inclusive range (`0.05:0.95:0.05`).
        #[arg(long)]
        values: String,
        /// Sweep root directory; each child run goes to `<out>/<axis>=<value>`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the over-smoothing limit and degree-ordering results on a
    /// built-in graph battery; writes one `<graph>.csv` per graph.
    TheoryCheck {
        /// Iteration counts to record.
        #[arg(long = "k", value_delimiter = ',', default_values_t = theory_check::DEFAULT_KS.to_vec())]
        ks: Vec<usize>,
        /// Propagation depth for the ordering checks.
        #[arg(long, default_value_t = 200)]
        prop_k: usize,
        /// Sup-norm tolerance for the limit check.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Random graphs per family.
        #[arg(long, default_value_t = 5)]
        graphs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "theory")]
        out: PathBuf,
    },
}

/// Run configuration sources. Flags override `--set`, which overrides the
/// config file, which overrides defaults.
#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat key=value config file (`#` starts a comment).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Any config key as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Interaction file, or `synthetic:beauty[:seed]`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// lightgcn, fair_attention or hetrofair.
    #[arg(long)]
    pub mode: Option<String>,
    /// Propagation layers K.
    #[arg(long)]
    pub layers: Option<String>,
    /// Embedding dimension d.
    #[arg(long)]
    pub dim: Option<String>,
    /// Attention scale in (0, 1].
    #[arg(long)]
    pub delta: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<String>,
    #[arg(long)]
    pub reg_beta: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub max_epochs: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long)]
    pub k_core: Option<String>,
    /// Feature-weight initialisation: xavier, normal or zeros.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub cutoff: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<String>,
}

impl RunArgs {
    fn flags(&self) -> Result<BTreeMap<String, String>> {
        let mut flags = BTreeMap::new();
        for entry in &self.set {
            let parsed = parse_kv(entry)?;
            if parsed.is_empty() {
                return Err(Error::InvalidArgument(format!("--set expects key=value, got '{entry}'")));
            }
            flags.extend(parsed);
        }
        let named = [
            ("dataset", &self.dataset),
            ("mode", &self.mode),
            ("layers", &self.layers),
            ("dim", &self.dim),
            ("delta", &self.delta),
            ("seed", &self.seed),
            ("learning_rate", &self.learning_rate),
            ("reg_beta", &self.reg_beta),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("patience", &self.patience),
            ("k_core", &self.k_core),
            ("init", &self.init),
            ("cutoff", &self.cutoff),
            ("output", &self.output),
        ];
        for (key, value) in named {
            if let Some(v) = value {
                flags.insert(key.to_string(), v.clone());
            }
        }
        Ok(flags)
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        RunConfig::load(self.config.as_deref(), &self.flags()?)
    }

    /// Like [`RunArgs::resolve`], but model keys are irrelevant, so a missing
    /// `delta` is filled with a placeholder instead of rejected.
    pub fn resolve_data(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => config::read_kv_file(p)?,
            None => BTreeMap::new(),
        };
        let mut flags = self.flags()?;
        if !file.contains_key("delta") {
            flags.entry("delta".to_string()).or_insert_with(|| "1".to_string());
        }
        RunConfig::resolve(&file, &flags)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let echo = !cli.quiet;
    match cli.command {
        Command::Preprocess { run } => {
            let cfg = run.resolve_data()?;
            let stats = pipeline::cmd_preprocess(&cfg, &cfg.output)?;
            print!("{}", stats.to_kv());
        }
        Command::Train { run } => {
            let cfg = run.resolve()?;
            let s = pipeline::cmd_train(&cfg, echo)?;
            println!(
                "run_id={} epochs={} best_epoch={} best_val_ndcg@{}={}",
                s.run_id,
                s.log.epochs.len(),
                s.log.best_epoch.map_or("NA".into(), |e| e.to_string()),
                cfg.train.cutoff,
                fmt_metric(s.log.best_val_ndcg)
            );
        }
        Command::Evaluate { run_dir, stratified } => {
            let s = pipeline::cmd_evaluate(&run_dir, stratified)?;
            print!("{}", s.report_text());
        }
        Command::Sweep { run, axis, values, out } => {
            let axis: SweepAxis = axis.parse()?;
            let values = pipeline::parse_values(&values)?;
            let cfg = run.resolve()?;
            let rows = pipeline::cmd_sweep(&cfg, axis, &values, &out, echo)?;
            let failed = rows.iter().filter(|r| r.result.is_err()).count();
            println!("{} runs, {failed} failed; summary in {}", rows.len(), out.join("summary.csv").display());
        }
        Command::TheoryCheck { ks, prop_k, tol, graphs, seed, out } => {
            let opts = theory_check::TheoryOptions {
                ks,
                prop_k,
                tol,
                random_graphs: graphs,
                seed,
            };
            let rows = theory_check::run(&opts, &out)?;
            print!("{}", theory_check::table(&rows));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start thread pool: {e}");
            return 2;
        }
    };
    match pool.install(|| execute(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
