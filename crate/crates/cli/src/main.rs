//! `optpick`: run reduction and classification experiments from a config
//! file, sweep option positions for bias, sample hard subsets and rebuild
//! reports from saved transcripts.

mod ingest;

use std::io::IsTerminal;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use optpick::eval::{EvalReport, SampleSize};
use optpick::experiment::{self, BackendKind, Command, Experiment, ExperimentConfig};
use optpick::{load_dataset, LabelCatalog, Method, Strategy};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "optpick", version, about = "Many-option text classification with chat models")]
struct Cli {
    /// Log level filter, e.g. `info` or `optpick=debug`. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,

    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Normalize a CSV or JSON-Lines file into a catalog and dataset
    Ingest(ingest::IngestArgs),
    /// Run the configured reduction and report HIT@K
    Reduce(RunArgs),
    /// Run reduction plus comparison and report accuracy
    Classify(RunArgs),
    /// Pin the gold option to each position and measure accuracy change
    BiasSweep(RunArgs),
    /// Write the lowest-margin instances as a dataset
    SampleChallenge(SampleArgs),
    /// Re-aggregate a run directory without model calls
    Report {
        /// Run directory holding config.json and transcripts.jsonl
        #[arg(long)]
        run_dir: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Base seed; per-repeat seeds are derived from it
    #[arg(long)]
    seed: Option<u64>,
    /// Gold positions for the bias sweep, comma separated
    #[arg(long, value_delimiter = ',')]
    positions: Option<Vec<usize>>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Render first-stage prompts into OUT_DIR/prompts without calling a model
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args)]
struct SampleArgs {
    /// JSON-Lines `{text, probs, label?}` aligned to the catalog
    #[arg(long)]
    margins: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    /// Dataset supplying labels for margin records that lack one
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, conflicts_with = "fraction", required_unless_present = "fraction")]
    count: Option<usize>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(b) = self.backend {
            c.backend.kind = b;
        }
        if let Some(s) = self.strategy {
            c.reduction.strategy = s;
        }
        if let Some(m) = self.method {
            c.comparison.method = m;
        }
        if let Some(r) = self.repeats {
            c.repeats = r;
            if !c.seeds.is_empty() && c.seeds.len() != r {
                tracing::info!("--repeats overrides the explicit seed list");
                c.seeds.clear();
            }
        }
        if let Some(s) = self.seed {
            c.seed = s;
            c.seeds.clear();
        }
        if let Some(p) = &self.positions {
            c.positions = p.clone();
        }
        if let Some(d) = &self.cache_dir {
            c.cache_dir = Some(d.clone());
        }
        if let Some(d) = &self.out_dir {
            c.out_dir = d.clone();
        }
        Ok(c)
    }
}

fn print_report(r: &EvalReport, out: &std::path::Path) {
    if let Some(a) = &r.accuracy {
        println!("accuracy  {:.4} ± {:.4}  over {} repeat(s)", a.mean, a.std, a.per_repeat.len());
    }
    if let Some(h) = &r.hit_at_k {
        println!("HIT@{}     {:.4} ± {:.4}", r.k, h.mean, h.std);
    }
    println!(
        "calls     {} reduction + {} comparison = {}",
        r.reduction_calls, r.comparison_calls, r.total_calls
    );
    for a in &r.call_accounting {
        println!(
            "  {:<28} {:>8.2} calls/item  {:>10.1} ms/1000 items",
            a.method, a.mean_calls, a.time_per_1000_items_ms
        );
    }
    println!("report    {}", out.join(experiment::REPORT_FILE).display());
}

fn run(args: &RunArgs, command: Command) -> Result<()> {
    let config = args.load()?;
    let out = config.out_dir.clone();
    let mut exp = Experiment::prepare(config)?;
    if args.dry_run {
        let n = exp.dry_run(command)?;
        println!("wrote {n} prompt(s) to {}", out.join("prompts").display());
        return Ok(());
    }
    let report = exp.run(command)?;
    print_report(&report, &out);
    let stats = exp.stats();
    tracing::info!(
        backend_calls = stats.backend_calls,
        cache_hits = stats.cache_hits,
        "run complete"
    );
    Ok(())
}

fn bias_sweep(args: &RunArgs) -> Result<()> {
    if args.dry_run {
        bail!("--dry-run is not supported for bias-sweep");
    }
    let config = args.load()?;
    let out = config.out_dir.clone();
    let report = Experiment::prepare(config)?.bias_sweep()?;
    println!("baseline  {:.4}", report.baseline_accuracy);
    for row in &report.positions {
        let change = row.change_rate.map_or("n/a".to_string(), |c| format!("{:+.2}%", c * 100.0));
        println!("pos {:>4}  {:.4} ± {:.4}  {change}", row.position, row.accuracy, row.std_error);
    }
    if let Some(p) = report.max_change_position() {
        println!("largest change at position {p}");
    }
    if let Some(t) = report.token_bias.first() {
        match t.ratio {
            Some(r) => println!("most over-predicted label: {} (ratio {r:.2})", t.label),
            None => println!("most over-predicted label: {} (never gold)", t.label),
        }
    }
    println!("report    {}", out.join("bias_report.json").display());
    Ok(())
}

fn sample(args: &SampleArgs) -> Result<()> {
    let catalog = LabelCatalog::load(&args.catalog)?;
    let dataset = args.dataset.as_ref().map(|p| load_dataset(p, &catalog)).transpose()?;
    let size = match (args.count, args.fraction) {
        (Some(n), _) => SampleSize::Count(n),
        (None, Some(f)) => SampleSize::Fraction(f),
        (None, None) => unreachable!("clap requires one of --count and --fraction"),
    };
    let subset = experiment::sample_challenge(&args.margins, &catalog, dataset.as_deref(), size, &args.out)?;
    println!("wrote {} instance(s) to {}", subset.len(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let filter = match &cli.log {
        Some(f) => EnvFilter::try_new(f)?,
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
    };
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    match &cli.command {
        Commands::Ingest(args) => ingest::run(args),
        Commands::Reduce(args) => run(args, Command::Reduce),
        Commands::Classify(args) => run(args, Command::Classify),
        Commands::BiasSweep(args) => bias_sweep(args),
        Commands::SampleChallenge(args) => sample(args),
        Commands::Report { run_dir } => {
            let report = experiment::report(run_dir)?;
            print_report(&report, run_dir);
            Ok(())
        }
    }
}
