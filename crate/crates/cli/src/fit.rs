use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use clap::Args;
use sam_core::sam::save_model;
use sam_core::{load_csv, sam_fit, SamFitOptions, SamVariant};

use crate::{resolve_label_column, Usage};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the model (JSON).
    #[arg(long)]
    output_model: PathBuf,
    /// Fit each feature with RANSAC instead of plain least squares.
    #[arg(long)]
    ransac: bool,
    /// Record normalized scoring as the model's default.
    #[arg(long)]
    normalize_default: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Label column to drop from the features [default: `label` if present].
    #[arg(long)]
    label_col: Option<String>,
    /// Label cell value that marks an anomaly.
    #[arg(long, default_value = "1")]
    anomaly_value: String,
    /// Standardize features before fitting.
    #[arg(long)]
    zscore: bool,
}

/// `SOURCE_DATE_EPOCH` when set, so that builds of the same inputs are byte-identical.
fn creation_time() -> Result<u64> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Usage(format!("SOURCE_DATE_EPOCH `{v}` is not a unix timestamp")).into()),
        Err(_) => Ok(SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)),
    }
}

pub fn run(args: FitArgs) -> Result<()> {
    let created = creation_time()?;
    let label = resolve_label_column(&args.input, args.label_col.as_deref())
        .with_context(|| format!("reading {}", args.input.display()))?;
    let train = load_csv(&args.input, label.as_deref(), Some(&args.anomaly_value))
        .with_context(|| format!("reading {}", args.input.display()))?;

    let variant = SamVariant {
        use_ransac: args.ransac,
        normalize: args.normalize_default,
    };
    let mut opts = SamFitOptions::new(variant).with_seed(args.seed);
    opts.standardize = args.zscore;
    let mut model = sam_fit(&train, &opts)?;
    model.created_unix_seconds = created;

    eprintln!(
        "fitted {} on {} rows x {} features{}",
        variant.name(),
        train.n(),
        train.d(),
        if args.zscore { " (z-scored)" } else { "" }
    );
    for (name, f) in model.feature_names().iter().zip(&model.fit_meta().features) {
        eprintln!(
            "  {name}: {} converged={} degenerate={}",
            if f.used_ransac { "ransac" } else { "ols" },
            f.converged,
            f.degenerate
        );
    }
    save_model(&model, &args.output_model).with_context(|| format!("writing {}", args.output_model.display()))?;
    Ok(())
}
