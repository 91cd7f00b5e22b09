//! Repeated bootstrap → split → fit → score → evaluate protocol, aggregated
//! as mean ± 2·sample-std per (dataset, model, metric).

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::dataset::{bootstrap, split, Dataset};
use crate::detector::{Detector, DetectorSpec};
use crate::error::{Error, Result};
use crate::metrics::{friedman, pr_auc, roc_auc, RankTable};
use crate::rng::{derive_seed, stream_id};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    RocAuc,
    PrAuc,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::RocAuc, Metric::PrAuc];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::PrAuc => "pr_auc",
        }
    }

    pub fn title(&self) -> &'static str {
        match self {
            Metric::RocAuc => "ROC AUC",
            Metric::PrAuc => "PR AUC",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s.trim().to_ascii_lowercase().replace(['-', ' '], "_").as_str() {
            "roc_auc" | "roc" => Some(Metric::RocAuc),
            "pr_auc" | "pr" => Some(Metric::PrAuc),
            _ => None,
        }
    }

    fn evaluate(&self, scores: &[f64], labels: &[bool]) -> Result<f64> {
        match self {
            Metric::RocAuc => roc_auc(scores, labels),
            Metric::PrAuc => pr_auc(scores, labels),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub datasets: Vec<Dataset>,
    pub models: Vec<DetectorSpec>,
    pub repeats: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub metrics: Vec<Metric>,
}

impl BenchConfig {
    pub fn new(datasets: Vec<Dataset>, models: Vec<DetectorSpec>) -> Self {
        BenchConfig {
            datasets,
            models,
            repeats: 10,
            train_fraction: 0.7,
            seed: 0,
            metrics: Metric::ALL.to_vec(),
        }
    }

    fn validate(&self, model_names: &[String]) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "train fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.datasets.is_empty() {
            return Err(Error::InvalidConfig("no datasets given".into()));
        }
        if model_names.is_empty() {
            return Err(Error::InvalidConfig("no models given".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::InvalidConfig("no metrics given".into()));
        }
        if let Some(dup) = first_duplicate(model_names) {
            return Err(Error::InvalidConfig(format!("model `{dup}` listed twice")));
        }
        let ds_names: Vec<String> = self.datasets.iter().map(|d| d.name().to_string()).collect();
        if let Some(dup) = first_duplicate(&ds_names) {
            return Err(Error::InvalidConfig(format!("dataset name `{dup}` used twice")));
        }
        for ds in &self.datasets {
            if ds.labels().is_none() {
                return Err(Error::InvalidDataset(format!(
                    "dataset `{}` has no labels; benchmarking needs ground truth",
                    ds.name()
                )));
            }
        }
        Ok(())
    }

    /// `key = value` pairs describing the run, without timestamps.
    fn echo(&self, model_names: &[String]) -> Vec<(String, String)> {
        let mut out = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("repeats".to_string(), self.repeats.to_string()),
            ("train_fraction".to_string(), self.train_fraction.to_string()),
            (
                "metrics".to_string(),
                self.metrics.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            ),
            ("models".to_string(), model_names.join(",")),
        ];
        for ds in &self.datasets {
            out.push((
                format!("dataset.{}", ds.name()),
                format!(
                    "n={} d={} anomalies={} fingerprint={:016x}",
                    ds.n(),
                    ds.d(),
                    ds.anomaly_count(),
                    ds.fingerprint()
                ),
            ));
        }
        out
    }
}

fn first_duplicate(names: &[String]) -> Option<&String> {
    names
        .iter()
        .enumerate()
        .find(|(i, n)| names[..*i].contains(n))
        .map(|(_, n)| n)
}

/// Result of one repeat for one cell: a metric value or why there is none.
pub type RepeatOutcome = std::result::Result<f64, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub dataset: String,
    pub model: String,
    pub metric: Metric,
    /// One entry per repeat, in repeat order.
    pub outcomes: Vec<RepeatOutcome>,
    /// Over the successful repeats; `None` when every repeat failed.
    pub mean: Option<f64>,
    /// Twice the sample standard deviation (0 for a single value).
    pub two_sigma: Option<f64>,
}

impl BenchCell {
    fn new(dataset: String, model: String, metric: Metric, outcomes: Vec<RepeatOutcome>) -> Self {
        let ok: Vec<f64> = outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect();
        let (mean, two_sigma) = if ok.is_empty() {
            (None, None)
        } else {
            let k = ok.len() as f64;
            let mean = ok.iter().sum::<f64>() / k;
            let var = if ok.len() > 1 {
                ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            (Some(mean), Some(2.0 * var.sqrt()))
        };
        BenchCell {
            dataset,
            model,
            metric,
            outcomes,
            mean,
            two_sigma,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.as_ref().ok().copied()).collect()
    }

    pub fn failures(&self) -> Vec<&str> {
        self.outcomes
            .iter()
            .filter_map(|o| o.as_ref().err().map(String::as_str))
            .collect()
    }
}

/// What one repeat on one dataset fed to the detectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatRecord {
    pub dataset: String,
    /// 1-based.
    pub repeat: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub train_fingerprint: u64,
    pub test_fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    pub metrics: Vec<Metric>,
    pub repeats: usize,
    /// Ordered dataset × model × metric.
    pub cells: Vec<BenchCell>,
    pub records: Vec<RepeatRecord>,
    pub config: Vec<(String, String)>,
}

impl BenchTable {
    pub fn cell(&self, dataset: &str, model: &str, metric: Metric) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.model == model && c.metric == metric)
    }

    /// Friedman ranks of the models across datasets on `metric`.
    pub fn ranks(&self, metric: Metric) -> Result<RankTable> {
        let values: Vec<Vec<Option<f64>>> = self
            .datasets
            .iter()
            .map(|d| {
                self.models
                    .iter()
                    .map(|m| self.cell(d, m, metric).and_then(|c| c.mean))
                    .collect()
            })
            .collect();
        friedman(&self.models, &self.datasets, &values)
    }
}

/// Runs the protocol for the detectors named in `cfg.models`.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchTable> {
    let detectors = cfg.models.iter().map(DetectorSpec::build).collect::<Result<Vec<_>>>()?;
    run_bench_with(cfg, &detectors)
}

/// Runs the protocol with caller-supplied detectors; `cfg.models` is only
/// used for the config echo when it is non-empty.
///
/// Repeat `r` (1-based) on dataset `D` uses `s = derive_seed(derive_seed(seed, r), id(D))`:
/// the bootstrap draws from `derive_seed(s, 1)`, the split from
/// `derive_seed(s, 2)`, and each detector fits with `derive_seed(s, id(model))`,
/// so no cell depends on the order of models or on thread scheduling.
pub fn run_bench_with(cfg: &BenchConfig, detectors: &[Box<dyn Detector>]) -> Result<BenchTable> {
    let model_names: Vec<String> = detectors.iter().map(|d| d.name()).collect();
    cfg.validate(&model_names)?;

    let units: Vec<(usize, usize)> = (0..cfg.datasets.len())
        .flat_map(|d| (1..=cfg.repeats).map(move |r| (d, r)))
        .collect();
    let results: Vec<(RepeatRecord, Vec<Vec<RepeatOutcome>>)> = units
        .par_iter()
        .map(|&(d, r)| run_repeat(cfg, &cfg.datasets[d], r, detectors))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (d, ds) in cfg.datasets.iter().enumerate() {
        let per_repeat = &results[d * cfg.repeats..(d + 1) * cfg.repeats];
        for (m, name) in model_names.iter().enumerate() {
            for (k, metric) in cfg.metrics.iter().enumerate() {
                let outcomes = per_repeat.iter().map(|(_, o)| o[m][k].clone()).collect();
                cells.push(BenchCell::new(ds.name().to_string(), name.clone(), *metric, outcomes));
            }
        }
    }
    let echo_names: Vec<String> = if cfg.models.is_empty() {
        model_names.clone()
    } else {
        cfg.models.iter().map(|m| m.to_string()).collect()
    };
    Ok(BenchTable {
        datasets: cfg.datasets.iter().map(|d| d.name().to_string()).collect(),
        models: model_names,
        metrics: cfg.metrics.clone(),
        repeats: cfg.repeats,
        cells,
        records: results.into_iter().map(|(rec, _)| rec).collect(),
        config: cfg.echo(&echo_names),
    })
}

/// One bootstrap/split of one dataset, evaluated for every detector.
/// Returns outcomes indexed `[model][metric]`.
fn run_repeat(
    cfg: &BenchConfig,
    ds: &Dataset,
    repeat: usize,
    detectors: &[Box<dyn Detector>],
) -> Result<(RepeatRecord, Vec<Vec<RepeatOutcome>>)> {
    let seed = derive_seed(derive_seed(cfg.seed, repeat as u64), stream_id(ds.name()));
    let resampled = bootstrap(ds, derive_seed(seed, 1))?;
    let parts = split(&resampled, cfg.train_fraction, derive_seed(seed, 2))?;
    let labels = parts.test.labels().expect("validated: labeled").to_vec();
    let record = RepeatRecord {
        dataset: ds.name().to_string(),
        repeat,
        seed,
        n_train: parts.train.n(),
        n_test: parts.test.n(),
        train_fingerprint: parts.train.fingerprint(),
        test_fingerprint: parts.test.fingerprint(),
    };
    let outcomes = detectors
        .iter()
        .map(|det| {
            let scored = det
                .fit(&parts.train, derive_seed(seed, stream_id(&det.name())))
                .and_then(|fitted| fitted.score(&parts.test));
            cfg.metrics
                .iter()
                .map(|metric| match &scored {
                    Ok(scores) => metric.evaluate(scores, &labels).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                })
                .collect()
        })
        .collect();
    Ok((record, outcomes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

pub fn emit_table(table: &BenchTable, format: TableFormat) -> String {
    match format {
        TableFormat::Csv => emit_csv(table),
        TableFormat::Markdown => emit_markdown(table),
    }
}

/// `mean ± two_sigma` at two decimals.
pub fn format_cell(mean: f64, two_sigma: f64) -> String {
    format!("{mean:.2} ± {two_sigma:.2}")
}

fn emit_csv(table: &BenchTable) -> String {
    let mut out = String::new();
    for (k, v) in &table.config {
        let _ = writeln!(out, "# {k} = {v}");
    }
    out.push_str("dataset,model,metric,mean,two_sigma\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in &table.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&c.dataset),
            csv_field(&c.model),
            c.metric.name(),
            opt(c.mean),
            opt(c.two_sigma)
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn emit_markdown(table: &BenchTable) -> String {
    let mut out = String::new();
    let mut notes: Vec<String> = Vec::new();
    for (mi, metric) in table.metrics.iter().enumerate() {
        if mi > 0 {
            out.push('\n');
        }
        let ranks = table.ranks(*metric).ok();
        let _ = writeln!(out, "### {}\n", metric.title());
        let mut header = format!("| model | {} |", table.datasets.join(" | "));
        let mut rule = format!("|---|{}", "---|".repeat(table.datasets.len()));
        if ranks.is_some() {
            header.push_str(" avg. rank |");
            rule.push_str("---|");
        }
        let _ = writeln!(out, "{header}\n{rule}");

        // best and second-best per dataset, on the values as displayed
        let podium: Vec<(Option<i64>, Option<i64>)> = table
            .datasets
            .iter()
            .map(|d| {
                let mut shown: Vec<i64> = table
                    .models
                    .iter()
                    .filter_map(|m| table.cell(d, m, *metric).and_then(|c| c.mean))
                    .map(|v| (v * 100.0).round() as i64)
                    .collect();
                if shown.len() < 2 {
                    return (None, None);
                }
                shown.sort_unstable_by(|a, b| b.cmp(a));
                shown.dedup();
                (shown.first().copied(), shown.get(1).copied())
            })
            .collect();

        for (j, model) in table.models.iter().enumerate() {
            let _ = write!(out, "| {model} |");
            for (di, d) in table.datasets.iter().enumerate() {
                let cell = table.cell(d, model, *metric);
                let text = match cell.and_then(|c| c.mean.zip(c.two_sigma)) {
                    Some((mean, sigma)) => {
                        let shown = (mean * 100.0).round() as i64;
                        let body = format_cell(mean, sigma);
                        let failed = cell.map_or(0, |c| c.failures().len());
                        let body = if failed > 0 {
                            notes.push(format!(
                                "{model} on {d} ({}): {failed} of {} repeats failed: {}",
                                metric.name(),
                                table.repeats,
                                cell.unwrap().failures()[0]
                            ));
                            format!("{body}[^{}]", notes.len())
                        } else {
                            body
                        };
                        match podium[di] {
                            (Some(b), _) if b == shown => format!("**{body}**"),
                            (_, Some(s)) if s == shown => format!("<u>{body}</u>"),
                            _ => body,
                        }
                    }
                    None => {
                        let reason = cell
                            .and_then(|c| c.failures().first().map(|s| s.to_string()))
                            .unwrap_or_else(|| "not evaluated".into());
                        notes.push(format!("{model} on {d} ({}): {reason}", metric.name()));
                        format!("—[^{}]", notes.len())
                    }
                };
                let _ = write!(out, " {text} |");
            }
            if let Some(r) = &ranks {
                let _ = write!(out, " {:.2} |", r.average_ranks[j]);
            }
            out.push('\n');
        }
        if let Some(r) = &ranks {
            let _ = writeln!(
                out,
                "\nFriedman χ² = {:.2} (p = {:.2}, {} models, {} datasets)",
                r.friedman_statistic, r.p_value, r.n_models, r.n_datasets
            );
        }
    }
    let _ = writeln!(
        out,
        "\nCells: mean ± 2σ over {} repeats. **Bold**: best, <u>underlined</u>: second best.",
        table.repeats
    );
    if !notes.is_empty() {
        out.push('\n');
        for (i, n) in notes.iter().enumerate() {
            let _ = writeln!(out, "[^{}]: {}", i + 1, n.replace('\n', " "));
        }
    }
    out
}
