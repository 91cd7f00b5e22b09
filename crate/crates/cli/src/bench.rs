//! `sam bench`: datasets and models come from a TOML file, from flags, or
//! both (flags win).
//!
//! ```toml
//! seed = 7
//! repeats = 10
//! train_fraction = 0.7
//! metrics = ["roc_auc", "pr_auc"]
//! models = ["sam++", "sam--", "iforest", "lof", "knn"]
//!
//! [[dataset]]
//! name = "mc"
//! kind = "mulcross"
//! n = 20000
//! seed = 1
//!
//! [[dataset]]
//! name = "cc"
//! path = "creditcard.csv"
//! label_col = "Class"
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use sam_core::{
    emit_table, generate_mulcross_like, load_csv, run_bench, BenchConfig, Dataset, DetectorSpec, GeneratorConfig,
    Metric, TableFormat,
};
use serde::Deserialize;

use crate::{resolve_label_column, Usage};

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset: a CSV path, or `mulcross[:n=N,d=D,contamination=C,shift=S,seed=K,name=NAME]`. Repeatable.
    #[arg(long = "dataset", value_name = "SPEC")]
    datasets: Vec<String>,
    /// Comma-separated model specs, e.g. `sam++,sam--,iforest,lof:k=10,external:ocsvm=scores.csv`.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Comma-separated subset of roc_auc, pr_auc.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// Long-form results CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the Markdown table here (it is always printed).
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    repeats: Option<usize>,
    train_fraction: Option<f64>,
    #[serde(default)]
    metrics: Vec<String>,
    #[serde(default)]
    models: Vec<String>,
    #[serde(default, rename = "dataset")]
    datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    name: Option<String>,
    path: Option<PathBuf>,
    kind: Option<String>,
    label_col: Option<String>,
    anomaly_value: Option<String>,
    n: Option<usize>,
    d: Option<usize>,
    contamination: Option<f64>,
    shift: Option<f64>,
    seed: Option<u64>,
}

impl DatasetEntry {
    /// Parses a `--dataset` flag value.
    fn from_flag(spec: &str) -> Result<DatasetEntry> {
        let (head, params) = spec.split_once(':').unwrap_or((spec, ""));
        if head != "mulcross" {
            return Ok(DatasetEntry {
                path: Some(PathBuf::from(spec)),
                ..Default::default()
            });
        }
        let mut e = DatasetEntry {
            kind: Some("mulcross".into()),
            ..Default::default()
        };
        let bad = |msg: &str| Usage(format!("dataset spec `{spec}`: {msg}"));
        for item in params.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            let num = |what: &str| bad(&format!("`{v}` is not a valid {what}"));
            match k.trim() {
                "n" => e.n = Some(v.parse().map_err(|_| num("row count"))?),
                "d" => e.d = Some(v.parse().map_err(|_| num("dimension"))?),
                "contamination" => e.contamination = Some(v.parse().map_err(|_| num("fraction"))?),
                "shift" => e.shift = Some(v.parse().map_err(|_| num("shift"))?),
                "seed" => e.seed = Some(v.parse().map_err(|_| num("seed"))?),
                "name" => e.name = Some(v.to_string()),
                other => return Err(bad(&format!("unknown key `{other}`")).into()),
            }
        }
        Ok(e)
    }

    /// Relative CSV paths resolve against `base` (the config file's directory).
    fn load(&self, base: &Path) -> Result<Dataset> {
        match (&self.path, self.kind.as_deref()) {
            (Some(p), None) => {
                let path = if p.is_relative() { base.join(p) } else { p.clone() };
                let label = resolve_label_column(&path, self.label_col.as_deref())
                    .with_context(|| format!("reading {}", path.display()))?;
                let ds = load_csv(&path, label.as_deref(), self.anomaly_value.as_deref())
                    .with_context(|| format!("reading {}", path.display()))?;
                Ok(match &self.name {
                    Some(n) => ds.with_name(n),
                    None => ds,
                })
            }
            (None, Some("mulcross")) => {
                let defaults = GeneratorConfig::default();
                let cfg = GeneratorConfig {
                    n: self.n.unwrap_or(defaults.n),
                    d: self.d.unwrap_or(defaults.d),
                    contamination: self.contamination.unwrap_or(defaults.contamination),
                    cluster_shift: self.shift.unwrap_or(defaults.cluster_shift),
                    seed: self.seed.unwrap_or(defaults.seed),
                };
                let ds = generate_mulcross_like(&cfg)?;
                Ok(ds.with_name(self.name.clone().unwrap_or_else(|| "mulcross".into())))
            }
            (None, Some(k)) => Err(Usage(format!("unknown dataset kind `{k}`")).into()),
            (Some(_), Some(_)) => Err(Usage("a dataset takes either `path` or `kind`, not both".into()).into()),
            (None, None) => Err(Usage("a dataset needs `path` or `kind`".into()).into()),
        }
    }
}

fn read_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

pub fn run(args: BenchArgs) -> Result<()> {
    let (file, base) = match &args.config {
        Some(p) => (read_config(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (FileConfig::default(), PathBuf::new()),
    };

    let entries: Vec<DatasetEntry> = if args.datasets.is_empty() {
        file.datasets
    } else {
        args.datasets
            .iter()
            .map(|s| DatasetEntry::from_flag(s))
            .collect::<Result<_>>()?
    };
    if entries.is_empty() {
        return Err(Usage("no datasets: pass --dataset or a config with [[dataset]] tables".into()).into());
    }
    let model_specs = if args.models.is_empty() {
        file.models
    } else {
        args.models
    };
    if model_specs.is_empty() {
        return Err(Usage("no models: pass --models or list `models` in the config".into()).into());
    }
    let models = model_specs
        .iter()
        .map(|s| DetectorSpec::parse(s))
        .collect::<sam_core::Result<Vec<_>>>()?;
    let metric_names = if args.metrics.is_empty() {
        file.metrics
    } else {
        args.metrics
    };
    let metrics = if metric_names.is_empty() {
        Metric::ALL.to_vec()
    } else {
        metric_names
            .iter()
            .map(|m| Metric::parse(m).ok_or_else(|| Usage(format!("unknown metric `{m}`"))))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };

    let datasets = entries.iter().map(|e| e.load(&base)).collect::<Result<Vec<_>>>()?;
    let mut cfg = BenchConfig::new(datasets, models);
    cfg.metrics = metrics;
    if let Some(s) = args.seed.or(file.seed) {
        cfg.seed = s;
    }
    if let Some(r) = args.repeats.or(file.repeats) {
        cfg.repeats = r;
    }
    if let Some(f) = args.train_fraction.or(file.train_fraction) {
        cfg.train_fraction = f;
    }

    eprintln!(
        "benchmarking {} model(s) on {} dataset(s), {} repeats",
        cfg.models.len(),
        cfg.datasets.len(),
        cfg.repeats
    );
    let table = run_bench(&cfg)?;
    let markdown = emit_table(&table, TableFormat::Markdown);
    if let Some(path) = &args.out {
        std::fs::write(path, emit_table(&table, TableFormat::Csv))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.markdown {
        std::fs::write(path, &markdown).with_context(|| format!("writing {}", path.display()))?;
    }
    print!("{markdown}");
    Ok(())
}
