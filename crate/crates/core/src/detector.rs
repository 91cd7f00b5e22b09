//! Uniform fit/score interface over SAM and the baselines, plus textual
//! detector specs as used by benchmark configs.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::baselines::{default_k, iforest_fit, IsolationForestConfig, NeighborIndex};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::sam::{sam_fit, SamFitOptions, SamVariant, ScoreOptions};

/// Something that can be trained on one dataset and then score another.
/// Higher scores mean more anomalous.
pub trait Detector: Send + Sync {
    fn name(&self) -> String;
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedDetector>>;
}

pub trait FittedDetector: Send + Sync {
    fn score(&self, x: &Dataset) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    Sam(SamVariant),
    IsolationForest {
        n_trees: usize,
        subsample_size: usize,
    },
    /// `k = None` picks [`default_k`] of the training size.
    Lof {
        k: Option<usize>,
    },
    Knn {
        k: Option<usize>,
    },
    /// Precomputed scores keyed by row fingerprint.
    External {
        name: String,
        path: PathBuf,
    },
}

impl DetectorSpec {
    /// Parses `sam++ | sam+- | sam-+ | sam-- | iforest[:trees=T,psi=P] |
    /// lof[:k=K] | knn[:k=K] | external:NAME=PATH`.
    pub fn parse(text: &str) -> Result<DetectorSpec> {
        let text = text.trim();
        if let Some(v) = SamVariant::parse(text) {
            return Ok(DetectorSpec::Sam(v));
        }
        let (head, params) = match text.split_once(':') {
            Some((h, p)) => (h, Some(p)),
            None => (text, None),
        };
        let bad = |msg: String| Error::InvalidConfig(format!("model spec `{text}`: {msg}"));
        if head == "external" {
            let (name, path) = params
                .and_then(|p| p.split_once('='))
                .ok_or_else(|| bad("expected external:NAME=PATH".into()))?;
            if name.is_empty() || path.is_empty() {
                return Err(bad("empty name or path".into()));
            }
            return Ok(DetectorSpec::External {
                name: name.to_string(),
                path: PathBuf::from(path),
            });
        }
        let mut kv = HashMap::new();
        for item in params.into_iter().flat_map(|p| p.split(',')).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("parameter `{item}` is not key=value")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| bad(format!("`{v}` is not a positive integer")))?;
            kv.insert(k.trim().to_string(), v);
        }
        let mut take = |key: &str| kv.remove(key);
        let spec = match head {
            "iforest" => DetectorSpec::IsolationForest {
                n_trees: take("trees").unwrap_or(100),
                subsample_size: take("psi").unwrap_or(256),
            },
            "lof" => DetectorSpec::Lof { k: take("k") },
            "knn" => DetectorSpec::Knn { k: take("k") },
            _ => return Err(bad("unknown detector".into())),
        };
        if let Some(key) = kv.keys().next() {
            return Err(bad(format!("unknown parameter `{key}`")));
        }
        Ok(spec)
    }

    /// Display name; also the key of the model's benchmark cells.
    pub fn name(&self) -> String {
        match self {
            DetectorSpec::Sam(v) => v.name().to_string(),
            DetectorSpec::IsolationForest {
                n_trees: 100,
                subsample_size: 256,
            } => "iforest".into(),
            DetectorSpec::IsolationForest {
                n_trees,
                subsample_size,
            } => {
                format!("iforest(trees={n_trees},psi={subsample_size})")
            }
            DetectorSpec::Lof { k: None } => "lof".into(),
            DetectorSpec::Lof { k: Some(k) } => format!("lof(k={k})"),
            DetectorSpec::Knn { k: None } => "knn".into(),
            DetectorSpec::Knn { k: Some(k) } => format!("knn(k={k})"),
            DetectorSpec::External { name, .. } => name.clone(),
        }
    }

    /// Instantiates the detector. External score files are read here.
    pub fn build(&self) -> Result<Box<dyn Detector>> {
        Ok(match self {
            DetectorSpec::Sam(v) => Box::new(SamDetector(*v)),
            DetectorSpec::IsolationForest {
                n_trees,
                subsample_size,
            } => Box::new(IsolationForestDetector {
                n_trees: *n_trees,
                subsample_size: *subsample_size,
            }),
            DetectorSpec::Lof { k } => Box::new(NeighborDetector { k: *k, lof: true }),
            DetectorSpec::Knn { k } => Box::new(NeighborDetector { k: *k, lof: false }),
            DetectorSpec::External { name, path } => Box::new(ExternalScores::load(name, path)?),
        })
    }
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorSpec::External { name, path } => write!(f, "external:{name}={}", path.display()),
            other => f.write_str(&other.name()),
        }
    }
}

struct SamDetector(SamVariant);

impl Detector for SamDetector {
    fn name(&self) -> String {
        self.0.name().into()
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedDetector>> {
        let model = sam_fit(train, &SamFitOptions::new(self.0).with_seed(seed))?;
        let opts = ScoreOptions::normalized(self.0.normalize);
        Ok(Box::new(Fitted(move |x: &Dataset| model.score_rows(x.values(), &opts))))
    }
}

struct IsolationForestDetector {
    n_trees: usize,
    subsample_size: usize,
}

impl Detector for IsolationForestDetector {
    fn name(&self) -> String {
        DetectorSpec::IsolationForest {
            n_trees: self.n_trees,
            subsample_size: self.subsample_size,
        }
        .name()
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedDetector>> {
        let cfg = IsolationForestConfig {
            n_trees: self.n_trees,
            subsample_size: self.subsample_size,
            seed,
        };
        let model = iforest_fit(train.values(), &cfg)?;
        Ok(Box::new(Fitted(move |x: &Dataset| model.score(x.values()))))
    }
}

struct NeighborDetector {
    k: Option<usize>,
    lof: bool,
}

impl Detector for NeighborDetector {
    fn name(&self) -> String {
        if self.lof {
            DetectorSpec::Lof { k: self.k }.name()
        } else {
            DetectorSpec::Knn { k: self.k }.name()
        }
    }

    fn fit(&self, train: &Dataset, _seed: u64) -> Result<Box<dyn FittedDetector>> {
        let n = train.n();
        let k = self.k.unwrap_or_else(|| default_k(n).min(n.saturating_sub(1)));
        let index = NeighborIndex::new(train.values(), k)?;
        if self.lof {
            let model = index.lof();
            Ok(Box::new(Fitted(move |x: &Dataset| model.score(x.values()))))
        } else {
            Ok(Box::new(Fitted(move |x: &Dataset| index.knn_score(x.values()))))
        }
    }
}

struct Fitted<F>(F);

impl<F> FittedDetector for Fitted<F>
where
    F: Fn(&Dataset) -> Result<Vec<f64>> + Send + Sync,
{
    fn score(&self, x: &Dataset) -> Result<Vec<f64>> {
        (self.0)(x)
    }
}

/// Scores computed outside this crate, looked up by [`Dataset::row_fingerprint`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScores {
    name: String,
    scores: HashMap<u64, f64>,
}

impl ExternalScores {
    pub fn new(name: impl Into<String>, scores: HashMap<u64, f64>) -> Self {
        ExternalScores {
            name: name.into(),
            scores,
        }
    }

    pub fn load(name: &str, path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(name, file)
    }

    /// Reads `fingerprint,score` rows, fingerprints as hex.
    pub fn read<R: Read>(name: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut scores = HashMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let cell = |c: usize, what: &str| -> Result<&str> {
                rec.get(c).ok_or_else(|| Error::Cell {
                    row: i + 1,
                    column: what.into(),
                    message: "missing".into(),
                })
            };
            let fp_text = cell(0, "fingerprint")?;
            let fp = u64::from_str_radix(fp_text.trim_start_matches("0x"), 16).map_err(|e| Error::Cell {
                row: i + 1,
                column: "fingerprint".into(),
                message: format!("`{fp_text}`: {e}"),
            })?;
            let score_text = cell(1, "score")?;
            let score: f64 = score_text.parse().map_err(|_| Error::Cell {
                row: i + 1,
                column: "score".into(),
                message: format!("`{score_text}` is not a number"),
            })?;
            if !score.is_finite() {
                return Err(Error::Cell {
                    row: i + 1,
                    column: "score".into(),
                    message: "non-finite score".into(),
                });
            }
            scores.insert(fp, score);
        }
        Ok(ExternalScores::new(name, scores))
    }

    /// Writes one `fingerprint,score` row per dataset row.
    pub fn write<W: Write>(ds: &Dataset, scores: &[f64], writer: W) -> Result<()> {
        if scores.len() != ds.n() {
            return Err(Error::DimensionMismatch {
                expected: ds.n(),
                found: scores.len(),
            });
        }
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["fingerprint", "score"])?;
        for (i, s) in scores.iter().enumerate() {
            w.write_record([format!("{:016x}", ds.row_fingerprint(i)), s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<external scores>", e))?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl Detector for ExternalScores {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn fit(&self, _train: &Dataset, _seed: u64) -> Result<Box<dyn FittedDetector>> {
        Ok(Box::new(self.clone()))
    }
}

impl FittedDetector for ExternalScores {
    fn score(&self, x: &Dataset) -> Result<Vec<f64>> {
        (0..x.n())
            .map(|i| {
                let fp = x.row_fingerprint(i);
                self.scores.get(&fp).copied().ok_or_else(|| {
                    Error::InvalidDataset(format!(
                        "{}: no precomputed score for row fingerprint {fp:016x}",
                        self.name
                    ))
                })
            })
            .collect()
    }
}
