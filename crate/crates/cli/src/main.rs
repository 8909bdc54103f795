use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wost_guide::harness::{
    compare_images, format_ablation, generate_reference, load_reference, read_csv, run_ablation,
    run_solve, write_csv, write_log, write_outputs, write_pfm, write_png, RunConfig,
};
use wost_guide::wost::SamplerMode;

/// Walk on Stars Poisson solver with learned directional guiding.
#[derive(Parser)]
#[command(name = "wost", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the configured evaluation grid.
    Solve {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Write a reference image (analytic where available, else a long uniform run).
    Reference {
        config: PathBuf,
        #[arg(long, default_value_t = 65536)]
        wpp_ref: usize,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the relMSE of an estimate CSV against a reference CSV.
    Compare {
        estimate: PathBuf,
        reference: PathBuf,
    },
    /// Run several sampler modes with identical seeds and budget.
    Ablate {
        config: PathBuf,
        /// Comma-separated modes, e.g. `uniform,fixed_mis:0.5,guiding_only,learnable_mis`.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "uniform,fixed_mis:0.5,guiding_only,learnable_mis"
        )]
        modes: Vec<SamplerMode>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    wpp: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sampler: Option<SamplerMode>,
    #[arg(long)]
    train_until: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    /// Output directory; files get standard names inside it.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        if let Some(v) = self.wpp {
            cfg.wpp = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.sampler {
            cfg.sampler = v;
        }
        if let Some(v) = self.train_until {
            cfg.train_until = v;
        }
        if let Some(v) = self.k {
            cfg.field.k = v;
        }
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            cfg.output.csv = Some(dir.join("solution.csv"));
            cfg.output.pfm = Some(dir.join("solution.pfm"));
            cfg.output.png = Some(dir.join("solution.png"));
            cfg.output.log = Some(dir.join("convergence.csv"));
        }
        cfg.validate()?;
        Ok(())
    }
}

fn load_config(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    o.apply(&mut cfg)?;
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("WOST_THREADS") {
        let n: usize = v.parse().with_context(|| format!("WOST_THREADS={v}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Solve { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            let reference = load_reference(&cfg)?;
            let out = run_solve(&cfg, reference.as_deref())?;
            write_outputs(&cfg, &out)?;
            let c = &out.counters;
            eprintln!(
                "{} walks, {} steps, {} escaped, {} truncated, {:.2}s ({:.2}s training)",
                c.walks, c.steps, c.escaped, c.truncated, out.seconds, out.train.seconds
            );
            if let Some(last) = out.log.last() {
                if let Some(r) = last.relmse {
                    println!("relmse {r:e}");
                }
            }
        }
        Command::Reference {
            config,
            wpp_ref,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let img = generate_reference(&cfg, wpp_ref)?;
            let Some(dir) = &overrides.out else {
                bail!("--out is required for reference");
            };
            write_csv(&img, &dir.join("reference.csv"))?;
            write_pfm(&img, &dir.join("reference.pfm"))?;
            write_png(&img, &dir.join("reference.png"))?;
        }
        Command::Compare {
            estimate,
            reference,
        } => {
            let est = read_csv(&estimate)?;
            let r = read_csv(&reference)?;
            println!("{:e}", compare_images(&est, &r)?);
        }
        Command::Ablate {
            config,
            modes,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            let Some(reference) = load_reference(&cfg)? else {
                bail!("ablation needs a reference (set `reference` in the config)");
            };
            let rows = run_ablation(&cfg, &modes, &reference)?;
            let table = format_ablation(&rows);
            print!("{table}");
            if let Some(dir) = &overrides.out {
                fs::write(dir.join("ablation.csv"), &table)?;
                for r in &rows {
                    let name = r.mode.to_string().replace(':', "_");
                    write_log(&r.curve, &dir.join(format!("convergence_{name}.csv")))?;
                }
            }
        }
    }
    Ok(())
}
