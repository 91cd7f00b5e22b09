use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use sam_core::{generate_mulcross_like, save_csv, write_csv, GeneratorConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Mulcross,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Kind::Mulcross)]
    kind: Kind,
    #[arg(long, default_value_t = 262_144)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    d: usize,
    /// Fraction of rows drawn from the anomaly clusters.
    #[arg(long, default_value_t = 0.10)]
    contamination: f64,
    /// Anomaly clusters sit at ±shift on every coordinate.
    #[arg(long, default_value_t = 2.0)]
    shift: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; `-` writes to standard output.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: GenArgs) -> Result<()> {
    let Kind::Mulcross = args.kind;
    let cfg = GeneratorConfig {
        n: args.n,
        d: args.d,
        contamination: args.contamination,
        cluster_shift: args.shift,
        seed: args.seed,
    };
    cfg.validate()?;
    let ds = generate_mulcross_like(&cfg)?;
    if args.out.as_os_str() == "-" {
        write_csv(&ds, std::io::stdout().lock(), Some("label"))?;
    } else {
        save_csv(&ds, &args.out, Some("label")).with_context(|| format!("writing {}", args.out.display()))?;
    }
    eprintln!(
        "generated {} rows ({} anomalies) x {} features",
        ds.n(),
        ds.anomaly_count(),
        ds.d()
    );
    Ok(())
}
