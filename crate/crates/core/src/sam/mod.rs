//! Synthetic anomaly monitoring.
//!
//! Every feature is treated as a control unit: its counterfactual is an
//! affine combination of all *other* features, fitted by least squares (or
//! RANSAC). An event's anomaly score is the sum over features of the absolute
//! deviation between the observed value and its counterfactual. Deviations
//! are signed and kept per feature so a score can be attributed.
//!
//! Scoring a fitted model costs `O(d²)` per event and does not depend on the
//! size of the training set.

mod persist;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::regression::{ols_fit, ransac_fit, RansacConfig};
use crate::rng::derive_seed;

pub use persist::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};

/// Choice of fitting and scoring mode; the four combinations are the
/// `sam++`, `sam+-`, `sam-+` and `sam--` variants (RANSAC, then normalization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SamVariant {
    pub use_ransac: bool,
    pub normalize: bool,
}

impl SamVariant {
    pub const PLUS_PLUS: SamVariant = SamVariant {
        use_ransac: true,
        normalize: true,
    };
    pub const PLUS_MINUS: SamVariant = SamVariant {
        use_ransac: true,
        normalize: false,
    };
    pub const MINUS_PLUS: SamVariant = SamVariant {
        use_ransac: false,
        normalize: true,
    };
    pub const MINUS_MINUS: SamVariant = SamVariant {
        use_ransac: false,
        normalize: false,
    };

    pub const ALL: [SamVariant; 4] = [
        SamVariant::PLUS_PLUS,
        SamVariant::PLUS_MINUS,
        SamVariant::MINUS_PLUS,
        SamVariant::MINUS_MINUS,
    ];

    pub fn name(&self) -> &'static str {
        match (self.use_ransac, self.normalize) {
            (true, true) => "sam++",
            (true, false) => "sam+-",
            (false, true) => "sam-+",
            (false, false) => "sam--",
        }
    }

    pub fn parse(s: &str) -> Option<SamVariant> {
        SamVariant::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// How one feature's counterfactual model was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureFit {
    pub used_ransac: bool,
    pub converged: bool,
    pub degenerate: bool,
}

/// Per-feature location and scale applied before scoring when the model was
/// fitted with z-scoring enabled.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitMeta {
    pub features: Vec<FeatureFit>,
    pub standardization: Option<Standardization>,
    /// Normalization preference recorded at fit time, used when a caller
    /// does not choose explicitly.
    pub normalize_default: bool,
}

/// A fitted counterfactual model. Row `i` of `coefficients` holds the weights
/// of every feature in the counterfactual of feature `i`; the diagonal is
/// exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SamModel {
    coefficients: DMatrix<f64>,
    intercepts: Vec<f64>,
    feature_names: Vec<String>,
    fit_meta: FitMeta,
    pub format_version: u32,
    pub created_unix_seconds: u64,
}

impl SamModel {
    /// Assembles a model, enforcing the zero diagonal and finite entries.
    pub fn new(
        coefficients: DMatrix<f64>,
        intercepts: Vec<f64>,
        feature_names: Vec<String>,
        fit_meta: FitMeta,
    ) -> Result<Self> {
        let d = feature_names.len();
        if coefficients.shape() != (d, d) {
            return Err(Error::InvalidModel(format!(
                "coefficient matrix is {}x{}, expected {d}x{d}",
                coefficients.nrows(),
                coefficients.ncols()
            )));
        }
        if intercepts.len() != d {
            return Err(Error::InvalidModel(format!(
                "{} intercepts for {d} features",
                intercepts.len()
            )));
        }
        if let Some(i) = (0..d).find(|&i| coefficients[(i, i)] != 0.0) {
            return Err(Error::InvalidModel(format!(
                "nonzero diagonal: coefficient[{i}][{i}] = {}",
                coefficients[(i, i)]
            )));
        }
        if coefficients.iter().chain(&intercepts).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite coefficient or intercept".into()));
        }
        if !fit_meta.features.is_empty() && fit_meta.features.len() != d {
            return Err(Error::InvalidModel(format!(
                "fit_meta describes {} features, expected {d}",
                fit_meta.features.len()
            )));
        }
        if let Some(s) = &fit_meta.standardization {
            if s.means.len() != d || s.stds.len() != d {
                return Err(Error::InvalidModel("standardization length mismatch".into()));
            }
            if s.means.iter().any(|m| !m.is_finite()) || s.stds.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidModel(
                    "standardization must be finite with positive scales".into(),
                ));
            }
        }
        Ok(SamModel {
            coefficients,
            intercepts,
            feature_names,
            fit_meta,
            format_version: FORMAT_VERSION,
            created_unix_seconds: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn fit_meta(&self) -> &FitMeta {
        &self.fit_meta
    }

    /// Counterfactual `S = X·Bᵀ + α` for each row of `x`.
    pub fn counterfactual(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x.ncols())?;
        let mut s = x * self.coefficients.transpose();
        for (j, mut col) in s.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.intercepts[j]);
        }
        Ok(s)
    }

    /// Residuals, counterfactuals and scores for every row of `x`.
    pub fn score(&self, x: &DMatrix<f64>, opts: &ScoreOptions) -> Result<ScoreReport> {
        opts.validate()?;
        let cf = self.counterfactual(x)?;
        let (n, d) = x.shape();
        let mut residuals = DMatrix::zeros(n, d);
        for j in 0..d {
            for i in 0..n {
                residuals[(i, j)] = self.deviation(j, x[(i, j)], cf[(i, j)], opts);
            }
        }
        let scores = residuals.row_iter().map(|r| r.iter().map(|v| v.abs()).sum()).collect();
        Ok(ScoreReport {
            scores,
            residuals,
            counterfactuals: cf,
            normalized: opts.normalize,
        })
    }

    /// Score of a single event: one dot product per feature against the
    /// remaining features.
    pub fn score_point(&self, row: &[f64], opts: &ScoreOptions) -> Result<f64> {
        self.check_dim(row.len())?;
        let d = self.d();
        let mut total = 0.0;
        for i in 0..d {
            let mut s = self.intercepts[i];
            for (j, xj) in row.iter().enumerate() {
                s += self.coefficients[(i, j)] * xj;
            }
            total += self.deviation(i, row[i], s, opts).abs();
        }
        Ok(total)
    }

    /// Scores only.
    pub fn score_rows(&self, x: &DMatrix<f64>, opts: &ScoreOptions) -> Result<Vec<f64>> {
        Ok(self.score(x, opts)?.scores)
    }

    fn deviation(&self, j: usize, observed: f64, counterfactual: f64, opts: &ScoreOptions) -> f64 {
        let (obs, cf) = match &self.fit_meta.standardization {
            Some(s) => (
                (observed - s.means[j]) / s.stds[j],
                (counterfactual - s.means[j]) / s.stds[j],
            ),
            None => (observed, counterfactual),
        };
        let delta = obs - cf;
        if !opts.normalize {
            return delta;
        }
        let base = match opts.denominator {
            Denominator::Observed => obs,
            Denominator::Counterfactual => cf,
        };
        delta / (base.abs() + opts.epsilon)
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.d() {
            return Err(Error::DimensionMismatch {
                expected: self.d(),
                found,
            });
        }
        Ok(())
    }
}

/// Value the normalized deviation is divided by (plus `epsilon`, in absolute value).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `|X_i| + ε`.
    #[default]
    Observed,
    /// `|S_i| + ε`, dividing by the counterfactual instead.
    Counterfactual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub normalize: bool,
    pub epsilon: f64,
    pub denominator: Denominator,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            normalize: false,
            epsilon: 1e-9,
            denominator: Denominator::Observed,
        }
    }
}

impl ScoreOptions {
    pub fn normalized(normalize: bool) -> Self {
        ScoreOptions {
            normalize,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-event scores with the per-feature deviations that make them up.
/// `scores[r]` is the sum of `|residuals[r, ·]|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub residuals: DMatrix<f64>,
    pub counterfactuals: DMatrix<f64>,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamFitOptions {
    pub variant: SamVariant,
    pub ransac: RansacConfig,
    /// Z-score features before fitting and score in standardized units.
    pub standardize: bool,
    pub seed: u64,
}

impl SamFitOptions {
    pub fn new(variant: SamVariant) -> Self {
        SamFitOptions {
            variant,
            ransac: RansacConfig::default(),
            standardize: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Fits one counterfactual model per feature, each on all other features.
/// With RANSAC enabled, a feature whose consensus search fails falls back to
/// OLS on all rows. Feature `i` uses RANSAC seed `derive_seed(seed, i)`.
pub fn sam_fit(train: &Dataset, opts: &SamFitOptions) -> Result<SamModel> {
    let (n, d) = (train.n(), train.d());
    if d < 2 {
        return Err(Error::InvalidDataset(format!(
            "counterfactual models need at least 2 features, found {d}"
        )));
    }
    if n < d + 1 {
        return Err(Error::InsufficientRows {
            needed: d + 1,
            found: n,
        });
    }

    let standardization = opts.standardize.then(|| standardization_of(train.values()));
    let x = match &standardization {
        Some(s) => DMatrix::from_fn(n, d, |i, j| (train.values()[(i, j)] - s.means[j]) / s.stds[j]),
        None => train.values().clone(),
    };

    let fits: Vec<(usize, Result<FeatureSolution>)> =
        (0..d).into_par_iter().map(|i| (i, fit_feature(&x, i, opts))).collect();

    let mut coefficients = DMatrix::zeros(d, d);
    let mut intercepts = vec![0.0; d];
    let mut features = vec![FeatureFit::default(); d];
    for (i, fit) in fits {
        let (row, intercept, meta) = fit?;
        let mut k = 0;
        for j in 0..d {
            if j != i {
                coefficients[(i, j)] = row[k];
                k += 1;
            }
        }
        intercepts[i] = intercept;
        features[i] = meta;
    }

    // fold the z-scoring back so coefficients act on raw feature values
    if let Some(s) = &standardization {
        for i in 0..d {
            let mut shift = 0.0;
            for j in 0..d {
                if j != i {
                    let b = coefficients[(i, j)] * s.stds[i] / s.stds[j];
                    coefficients[(i, j)] = b;
                    shift += b * s.means[j];
                }
            }
            intercepts[i] = s.means[i] + s.stds[i] * intercepts[i] - shift;
        }
    }

    SamModel::new(
        coefficients,
        intercepts,
        train.feature_names().to_vec(),
        FitMeta {
            features,
            standardization,
            normalize_default: opts.variant.normalize,
        },
    )
}

/// Coefficients on the other features, intercept, and fit metadata.
type FeatureSolution = (Vec<f64>, f64, FeatureFit);

fn fit_feature(x: &DMatrix<f64>, i: usize, opts: &SamFitOptions) -> Result<FeatureSolution> {
    let predictors = x.clone().remove_column(i);
    let target: Vec<f64> = x.column(i).iter().copied().collect();
    let fit = if opts.variant.use_ransac {
        let cfg = opts.ransac.clone().with_seed(derive_seed(opts.seed, i as u64));
        let robust = ransac_fit(&predictors, &target, &cfg)?;
        if robust.converged {
            robust
        } else {
            ols_fit(&predictors, &target)?
        }
    } else {
        ols_fit(&predictors, &target)?
    };
    let meta = FeatureFit {
        used_ransac: opts.variant.use_ransac,
        converged: fit.converged,
        degenerate: fit.degenerate,
    };
    Ok((fit.coefficients, fit.intercept, meta))
}

fn standardization_of(x: &DMatrix<f64>) -> Standardization {
    let n = x.nrows() as f64;
    let (means, stds) = x
        .column_iter()
        .map(|c| {
            let m = c.sum() / n;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            (m, if sd > 0.0 { sd } else { 1.0 })
        })
        .unzip();
    Standardization { means, stds }
}

/// Linear-interpolation quantile (`p` in percent) of `values`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// `-1` for scores strictly above the `percentile`-th quantile, `1` otherwise.
pub fn label_scores(scores: &[f64], percentile_pct: f64) -> Result<Vec<i8>> {
    if !(percentile_pct > 0.0 && percentile_pct < 100.0) {
        return Err(Error::InvalidConfig(format!(
            "percentile {percentile_pct} outside (0, 100)"
        )));
    }
    if scores.is_empty() {
        return Err(Error::InsufficientRows { needed: 1, found: 0 });
    }
    let tau = percentile(scores, percentile_pct);
    Ok(scores.iter().map(|&s| if s > tau { -1 } else { 1 }).collect())
}

pub fn sam_label(report: &ScoreReport, percentile_pct: f64) -> Result<Vec<i8>> {
    label_scores(&report.scores, percentile_pct)
}

/// One feature's contribution to an event's score.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub feature: String,
    pub index: usize,
    pub abs_residual: f64,
    pub share: f64,
}

/// Features of one event ranked by absolute deviation; shares sum to one
/// unless the score is zero, in which case every share is zero.
pub fn attribute(report: &ScoreReport, feature_names: &[String], point: usize) -> Result<Vec<Attribution>> {
    let n = report.scores.len();
    if point >= n {
        return Err(Error::IndexOutOfRange { index: point, len: n });
    }
    if feature_names.len() != report.residuals.ncols() {
        return Err(Error::DimensionMismatch {
            expected: report.residuals.ncols(),
            found: feature_names.len(),
        });
    }
    let score = report.scores[point];
    let mut out: Vec<Attribution> = report
        .residuals
        .row(point)
        .iter()
        .enumerate()
        .map(|(j, r)| Attribution {
            feature: feature_names[j].clone(),
            index: j,
            abs_residual: r.abs(),
            share: if score > 0.0 { r.abs() / score } else { 0.0 },
        })
        .collect();
    out.sort_by(|a, b| b.abs_residual.total_cmp(&a.abs_residual).then(a.index.cmp(&b.index)));
    Ok(out)
}
