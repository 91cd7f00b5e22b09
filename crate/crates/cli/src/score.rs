use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use sam_core::sam::load_model;
use sam_core::{attribute, load_csv, sam_label, Denominator, ScoreOptions};

use crate::{resolve_label_column, Usage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DenominatorArg {
    /// |x| + epsilon
    Observed,
    /// |counterfactual| + epsilon
    Counterfactual,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Normalize deviations (default: whatever the model was fitted with).
    #[arg(long, conflicts_with = "raw")]
    normalize: bool,
    /// Use raw deviations regardless of the model default.
    #[arg(long)]
    raw: bool,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = DenominatorArg::Observed)]
    denominator: DenominatorArg,
    /// Emit a label column: -1 above this percentile of the scores, 1 otherwise.
    #[arg(long)]
    threshold_percentile: Option<f64>,
    /// Emit the K features with the largest deviation for each row.
    #[arg(long, value_name = "K")]
    attribute_top: Option<usize>,
    /// Label column to ignore [default: `label` if present].
    #[arg(long)]
    label_col: Option<String>,
}

pub fn run(args: ScoreArgs) -> Result<()> {
    let model = load_model(&args.model).with_context(|| format!("loading model {}", args.model.display()))?;
    let label = resolve_label_column(&args.input, args.label_col.as_deref())
        .with_context(|| format!("reading {}", args.input.display()))?;
    let data = load_csv(&args.input, label.as_deref(), None)
        .with_context(|| format!("reading {}", args.input.display()))?
        .align_features(model.feature_names())?;

    let k = args.attribute_top.unwrap_or(0);
    if k > model.d() {
        return Err(Usage(format!(
            "--attribute-top {k} exceeds the model's {} features",
            model.d()
        ))
        .into());
    }
    let opts = ScoreOptions {
        normalize: if args.normalize {
            true
        } else if args.raw {
            false
        } else {
            model.fit_meta().normalize_default
        },
        epsilon: args.epsilon,
        denominator: match args.denominator {
            DenominatorArg::Observed => Denominator::Observed,
            DenominatorArg::Counterfactual => Denominator::Counterfactual,
        },
    };
    let report = model.score(data.values(), &opts)?;
    let labels = args.threshold_percentile.map(|p| sam_label(&report, p)).transpose()?;

    let stdout = std::io::stdout();
    let mut out = csv::Writer::from_writer(stdout.lock());
    let mut header = vec!["score".to_string()];
    if labels.is_some() {
        header.push("label".into());
    }
    for r in 1..=k {
        header.push(format!("top{r}"));
        header.push(format!("top{r}_share"));
    }
    out.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![report.scores[i].to_string()];
        if let Some(l) = &labels {
            rec.push(l[i].to_string());
        }
        if k > 0 {
            for a in attribute(&report, model.feature_names(), i)?.into_iter().take(k) {
                rec.push(a.feature);
                rec.push(a.share.to_string());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    std::io::stdout().flush()?;
    Ok(())
}
