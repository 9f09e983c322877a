use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gaptrace::commands::{self, sidecar, Method, RunOptions};
use gaptrace::config::RunConfig;
use gaptrace::overpass::OverpassClient;
use gaptrace_core::roadnet::Representation;

#[derive(Parser)]
#[command(name = "gaptrace", version, about = "Recover masked GPS trajectory segments and score them")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter a directory of GPX files into a dataset.
    Ingest(IngestArgs),
    /// Mask a small and a large gap in every trajectory.
    Mask {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/dev/test split of a task file.
    Split {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Download road networks for every task into the cache.
    FetchNet {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
        /// Status file; defaults to `<tasks>.network.jsonl`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct every task's gap with one method.
    Run(RunArgs),
    /// Score reconstructions against ground truth.
    Eval {
        #[arg(long)]
        tasks: PathBuf,
        /// Reconstruction files (repeatable).
        #[arg(long = "reconstructions", required = true, num_args = 1..)]
        reconstructions: Vec<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate CSVs and GeoJSON overlays from evaluation records.
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long = "reconstructions", num_args = 1..)]
        reconstructions: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    gpx_dir: PathBuf,
    /// CSV with `trace_id,region[,upload_date]`.
    #[arg(long)]
    region_map: Option<PathBuf>,
    /// Dataset file to write.
    #[arg(long = "dataset", alias = "out")]
    dataset: PathBuf,
    /// Rejection log; defaults to `<dataset>.rejections.jsonl`.
    #[arg(long)]
    rejections: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    tasks: PathBuf,
    /// linear, linear-hmm, llm:<provider>, polyline-file:<path>, or plain
    /// `llm` / `polyline-file` together with --provider / --polyline-file.
    #[arg(long)]
    method: String,
    #[arg(long)]
    provider: Option<String>,
    #[arg(long)]
    polyline_file: Option<PathBuf>,
    #[arg(long)]
    representation: Option<Representation>,
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    out: PathBuf,
}

fn resolve_method(a: &RunArgs) -> Result<Method> {
    match (a.method.as_str(), &a.provider, &a.polyline_file) {
        ("llm", Some(p), _) => Ok(Method::Llm(p.clone())),
        ("llm", None, _) => bail!("--method llm needs --provider"),
        ("polyline-file", _, Some(p)) => Ok(Method::PolylineFile(p.clone())),
        ("polyline-file", _, None) => bail!("--method polyline-file needs --polyline-file"),
        (m, _, _) => m.parse::<Method>().map_err(anyhow::Error::msg),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.cache_dir {
        cfg.cache_dir = d.clone();
    }
    if let Some(p) = cli.parallelism {
        cfg.parallelism = p;
    }
    Ok(cfg)
}

fn validated(mut cfg: RunConfig, tau: Option<f64>) -> Result<RunConfig> {
    if let Some(t) = tau {
        cfg.metrics.tau = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string(v)?);
    Ok(())
}

fn dataset_path(arg: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    arg.or_else(|| cfg.dataset.clone())
        .context("no dataset given (use --dataset or set `dataset` in the config)")
}

fn real_main(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest(a) => {
            let cfg = validated(cfg, None)?;
            let rejections = a.rejections.unwrap_or_else(|| sidecar(&a.dataset, "rejections.jsonl"));
            let s = commands::ingest(&a.gpx_dir, a.region_map.as_deref(), &cfg, &a.dataset, &rejections)?;
            print_json(&s)
        }
        Command::Mask { dataset, out } => {
            let cfg = validated(cfg, None)?;
            let dataset = dataset_path(dataset, &cfg)?;
            print_json(&commands::mask(&dataset, &cfg, &out)?)
        }
        Command::Split { tasks, out } => {
            let cfg = validated(cfg, None)?;
            let path = commands::split(&tasks, &cfg, &out)?;
            println!("{}", path.display());
            Ok(())
        }
        Command::FetchNet { tasks, endpoint, out } => {
            let cfg = validated(cfg, None)?;
            let endpoint = endpoint.unwrap_or_else(|| cfg.overpass_endpoint.clone());
            let client = OverpassClient::new(endpoint, cfg.cache_dir.clone());
            let out = out.unwrap_or_else(|| sidecar(&tasks, "network.jsonl"));
            let status = commands::fetch_net(&tasks, &client, &out)?;
            let ok = status.iter().filter(|s| s.status == "ok").count();
            print_json(&serde_json::json!({"tasks": status.len(), "ok": ok, "missing": status.len() - ok}))
        }
        Command::Run(a) => {
            let mut cfg = validated(cfg, None)?;
            if let Some(r) = a.representation {
                cfg.pipeline.representation = r;
            }
            let opts = RunOptions {
                method: resolve_method(&a)?,
                parallelism: cfg.parallelism,
                resume: a.resume,
            };
            print_json(&commands::run(&a.tasks, &cfg, &opts, &a.out)?)
        }
        Command::Eval {
            tasks,
            reconstructions,
            tau,
            out,
        } => {
            let cfg = validated(cfg, tau)?;
            let records = commands::eval(&tasks, &reconstructions, &cfg, &out)?;
            let missing = records.iter().filter(|r| r.missing_reconstruction).count();
            print_json(&serde_json::json!({"records": records.len(), "missing_reconstructions": missing}))
        }
        Command::Report {
            records,
            tasks,
            reconstructions,
            out,
        } => {
            let b = commands::report(&records, &tasks, &reconstructions, &out)?;
            println!("{}", b.gap_table.display());
            println!("{}", b.records.display());
            println!("{} GeoJSON file(s) under {}", b.geojson.len(), Path::new(&out).join("geojson").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
