use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vastvar_core::config::{load_config, parse_section, LoadedConfig};
use vastvar_core::io::{read_checkpoint, write_checkpoint, write_girf, SummaryConfig};
use vastvar_core::pipeline::{self, compute_girf, estimate_linear, estimate_vast, load_dataset, with_threads};
use vastvar_core::{build_design, generate_synthetic, Error, GirfRequest, SyntheticSpec};

#[derive(Parser)]
#[command(name = "vastvar", version, about = "VAST models, Minnesota BVARs and generalized impulse responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (0 = all cores). VASTVAR_THREADS takes precedence.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print what would be done and exit without touching anything.
    #[arg(long, global = true)]
    dry_run: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Load and transform the data; `--check` prints T, M and K.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        check: bool,
        /// Write the transformed, standardized panel as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the VAST sampler and write a chain checkpoint.
    Estimate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the Minnesota BVAR and write its draws as a checkpoint.
    EstimateLinear {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generalized impulse responses from a checkpoint.
    Girf {
        #[arg(long)]
        chain: PathBuf,
        /// GIRF request JSON; defaults to the `girf` section of `--config`.
        #[arg(long)]
        req: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Peak, band and activeness tables from a GIRF file.
    Summarize {
        #[arg(long)]
        girf: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a synthetic dataset (data.csv, schema.json, spec.json).
    Synth {
        /// Synthetic process JSON; defaults to the built-in asymmetric demo.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Sample length for the built-in demo process.
        #[arg(long, default_value_t = 300)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Execute every configured stage into the output directory.
    Run {
        /// A run configuration, or the metadata.json of an earlier run.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn threads(flag: usize) -> Result<usize, Error> {
    match std::env::var("VASTVAR_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config {
                path: "VASTVAR_THREADS".into(),
                message: format!("'{v}' is not a thread count"),
            }),
        Err(_) => Ok(flag),
    }
}

fn config(path: &Path, seed: Option<u64>) -> Result<LoadedConfig, Error> {
    let mut loaded = load_config(path)?;
    if let Some(s) = seed {
        loaded.config.set_seed(s);
    }
    Ok(loaded)
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(cli: Cli) -> Result<(), Error> {
    let n_threads = threads(cli.threads)?;
    let dry = cli.dry_run;
    match cli.command {
        Command::Ingest { config: path, check, out } => {
            let cfg = config(&path, cli.seed)?.config;
            if dry {
                println!("would load {:?} with P = {}", cfg.data, cfg.lags());
                return Ok(());
            }
            let data = load_dataset(&cfg.data)?;
            let design = build_design(&data, cfg.lags())?;
            if check {
                println!("T={} M={} K={}", design.n_rows(), design.n_vars(), design.n_regressors());
            } else {
                println!(
                    "{} months ({} to {}), {} variables, {} regressors at P = {}",
                    data.n_obs(),
                    data.dates[0],
                    data.dates[data.n_obs() - 1],
                    data.n_vars(),
                    design.n_regressors(),
                    cfg.lags()
                );
            }
            if let Some(out) = out {
                let mut text = String::from("date");
                for n in data.names() {
                    text.push(',');
                    text.push_str(&n);
                }
                text.push('\n');
                for t in 0..data.n_obs() {
                    text.push_str(&data.dates[t].to_string());
                    for v in data.row(t) {
                        text.push_str(&format!(",{v}"));
                    }
                    text.push('\n');
                }
                write_text(&out, &text)?;
            }
        }
        Command::Estimate { config: path, out } => {
            let cfg = config(&path, cli.seed)?.config;
            if dry {
                println!("would estimate the VAST model ({:?}) into {}", cfg.sampler, out.display());
                return Ok(());
            }
            let data = load_dataset(&cfg.data)?;
            let ck = with_threads(n_threads, || estimate_vast(&data, &cfg.sampler))??;
            write_checkpoint(&out, &ck)?;
            println!("{} draws written to {}", ck.estimate.n_draws(), out.display());
        }
        Command::EstimateLinear { config: path, out } => {
            let cfg = config(&path, cli.seed)?.config;
            if dry {
                println!("would estimate the Minnesota BVAR ({:?}) into {}", cfg.minnesota, out.display());
                return Ok(());
            }
            let data = load_dataset(&cfg.data)?;
            let ck = estimate_linear(&data, &cfg.minnesota, cfg.sampler.seed)?;
            write_checkpoint(&out, &ck)?;
            println!("{} draws written to {}", ck.estimate.n_draws(), out.display());
        }
        Command::Girf { chain, req, config: cfg_path, out } => {
            let mut request: GirfRequest = match (&req, &cfg_path) {
                (Some(r), _) => parse_section(&read_text(r)?, "girf")?,
                (None, Some(c)) => config(c, None)?.config.girf,
                (None, None) => GirfRequest::default(),
            };
            request.validate()?;
            if let Some(s) = cli.seed {
                request.seed = s;
            }
            if dry {
                println!("would compute GIRFs from {} ({request:?}) into {}", chain.display(), out.display());
                return Ok(());
            }
            let ck = read_checkpoint(&chain)?;
            let g = with_threads(n_threads, || compute_girf(&ck, &request))??;
            let manifest = write_girf(&out, &g)?;
            println!(
                "{} draws x {} origins x {} shock sizes written to {} (manifest {})",
                g.n_draws(),
                g.n_origins(),
                g.n_sigmas(),
                out.display(),
                manifest.display()
            );
        }
        Command::Summarize { girf, config: cfg_path, out } => {
            let summary = match &cfg_path {
                Some(c) => config(c, None)?.config.summary,
                None => SummaryConfig::default(),
            };
            if dry {
                println!("would summarize {} into {}", girf.display(), out.display());
                return Ok(());
            }
            for f in pipeline::summarize(&girf, &out, &summary)? {
                println!("{}", f.display());
            }
        }
        Command::Synth { config: spec_path, length, out } => {
            let spec: SyntheticSpec = match &spec_path {
                Some(p) => parse_section(&read_text(p)?, "synth")?,
                None => SyntheticSpec::asymmetric_demo(length),
            };
            spec.validate()?;
            let seed = cli.seed.unwrap_or(1);
            if dry {
                println!("would simulate M={} T={} (seed {seed}) into {}", spec.n_vars(), spec.n_obs, out.display());
                return Ok(());
            }
            let (data, _) = generate_synthetic(&spec, seed)?;
            std::fs::create_dir_all(&out).map_err(|source| Error::File {
                path: out.clone(),
                source,
            })?;
            data.write_csv(&out.join("data.csv"))?;
            write_text(&out.join("schema.json"), &(serde_json::to_string_pretty(&data.schema())? + "\n"))?;
            write_text(&out.join("spec.json"), &(serde_json::to_string_pretty(&spec)? + "\n"))?;
            println!("{} months of {} variables written to {}", data.n_obs(), data.n_vars(), out.display());
        }
        Command::Run { config: path, out } => {
            let mut loaded = config(&path, cli.seed)?;
            if let Some(o) = out {
                loaded.config.output_dir = o;
            }
            if dry {
                for line in pipeline::plan(&loaded.config) {
                    println!("{line}");
                }
                return Ok(());
            }
            let outcome = pipeline::run(&loaded, n_threads)?;
            for f in &outcome.files {
                println!("{}", f.display());
            }
            eprintln!("finished in {:.1}s", outcome.wall_time_secs);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match e {
                Error::Config { .. } => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
