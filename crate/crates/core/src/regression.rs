//! Ordinary least squares and RANSAC-robust linear regression.
//!
//! OLS is solved on the mean-centred design: a Householder QR reduces the
//! `n × p` problem to the triangular factor, whose SVD yields the
//! minimum-norm solution when the design is rank deficient. The intercept is
//! recovered from the column means.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A fitted affine model `y ≈ predictors · coefficients + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Consensus set of the winning RANSAC candidate.
    pub inlier_mask: Option<Vec<bool>>,
    pub converged: bool,
    /// The centred design was rank deficient; the minimum-norm solution was returned.
    pub degenerate: bool,
}

impl LinearFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
    }

    pub fn predict(&self, predictors: &DMatrix<f64>) -> DVector<f64> {
        let beta = DVector::from_column_slice(&self.coefficients);
        let mut out = predictors * beta;
        out.add_scalar_mut(self.intercept);
        out
    }

    pub fn inlier_count(&self) -> Option<usize> {
        self.inlier_mask.as_ref().map(|m| m.iter().filter(|&&b| b).count())
    }
}

/// A regressor usable as the base estimator for RANSAC and the per-feature
/// counterfactual models.
pub trait Regressor: Sync {
    fn fit(&self, predictors: &DMatrix<f64>, target: &[f64]) -> Result<LinearFit>;
}

/// Plain least squares.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ols;

impl Regressor for Ols {
    fn fit(&self, predictors: &DMatrix<f64>, target: &[f64]) -> Result<LinearFit> {
        ols_fit(predictors, target)
    }
}

pub fn ols_fit(predictors: &DMatrix<f64>, target: &[f64]) -> Result<LinearFit> {
    let (n, p) = predictors.shape();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: target.len(),
        });
    }
    if n < p + 1 {
        return Err(Error::InsufficientRows {
            needed: p + 1,
            found: n,
        });
    }

    let nf = n as f64;
    let y_mean = target.iter().sum::<f64>() / nf;
    let x_means: Vec<f64> = predictors.column_iter().map(|c| c.sum() / nf).collect();
    if p == 0 {
        return Ok(LinearFit {
            coefficients: Vec::new(),
            intercept: y_mean,
            inlier_mask: None,
            converged: true,
            degenerate: false,
        });
    }

    let xc = DMatrix::from_fn(n, p, |i, j| predictors[(i, j)] - x_means[j]);
    let mut yc = DVector::from_iterator(n, target.iter().map(|y| y - y_mean));

    let qr = xc.qr();
    let r = qr.r();
    qr.q_tr_mul(&mut yc);
    let qty = yc.rows(0, p).into_owned();

    let svd = r.svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * (n.max(p) as f64) * f64::EPSILON;
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");

    let mut rank = 0;
    let mut beta = DVector::zeros(p);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > tol && s > 0.0 {
            rank += 1;
            let coef = u.column(k).dot(&qty) / s;
            beta.axpy(coef, &v_t.row(k).transpose(), 1.0);
        }
    }

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coefficients.iter().zip(&x_means).map(|(b, m)| b * m).sum::<f64>();
    Ok(LinearFit {
        coefficients,
        intercept,
        inlier_mask: None,
        converged: true,
        degenerate: rank < p,
    })
}

/// Inlier residual threshold for RANSAC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// `1.4826 · MAD(target)`, the consistent normal-σ estimate.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Defaults to `p + 1` when `None`.
    pub min_samples: Option<usize>,
    pub residual_threshold: Threshold,
    /// Stop early once this fraction of rows are inliers.
    pub stop_inlier_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            max_iterations: 100,
            min_samples: None,
            residual_threshold: Threshold::Auto,
            stop_inlier_fraction: 0.99,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn resolve_min_samples(&self, p: usize) -> Result<usize> {
        let m = self.min_samples.unwrap_or(p + 1);
        if m < p + 1 {
            return Err(Error::InvalidConfig(format!("min_samples {m} below p + 1 = {}", p + 1)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.stop_inlier_fraction > 0.0 && self.stop_inlier_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_inlier_fraction {} outside (0, 1]",
                self.stop_inlier_fraction
            )));
        }
        if let Threshold::Fixed(t) = self.residual_threshold {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidConfig(format!("residual threshold {t} must be positive")));
            }
        }
        Ok(m)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn median_absolute_deviation(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

fn resolve_threshold(cfg: &RansacConfig, target: &[f64]) -> f64 {
    match cfg.residual_threshold {
        Threshold::Fixed(t) => t,
        Threshold::Auto => {
            // a zero MAD (constant target) would reject exact fits on rounding alone
            let scale = target.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (1.4826 * median_absolute_deviation(target)).max(1e-12 * (1.0 + scale))
        }
    }
}

pub fn ransac_fit(predictors: &DMatrix<f64>, target: &[f64], cfg: &RansacConfig) -> Result<LinearFit> {
    ransac_fit_with(&Ols, predictors, target, cfg)
}

/// Random-sample consensus around `regressor`. Candidates are fitted on
/// `min_samples` random rows; the one with the most inliers (ties broken by
/// the smaller inlier squared error) wins and is refitted on its consensus
/// set. `converged` is false when no candidate reached `min_samples` inliers,
/// in which case the returned fit is plain OLS on all rows.
pub fn ransac_fit_with<R: Regressor + ?Sized>(
    regressor: &R,
    predictors: &DMatrix<f64>,
    target: &[f64],
    cfg: &RansacConfig,
) -> Result<LinearFit> {
    let (n, p) = predictors.shape();
    if target.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: target.len(),
        });
    }
    let min_samples = cfg.resolve_min_samples(p)?;
    if n < min_samples {
        return Err(Error::InsufficientRows {
            needed: min_samples,
            found: n,
        });
    }
    let threshold = resolve_threshold(cfg, target);
    let stop_count = (cfg.stop_inlier_fraction * n as f64).ceil() as usize;
    let mut rng = rng_from_seed(cfg.seed);

    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    let mut sub_y = vec![0.0; min_samples];
    for _ in 0..cfg.max_iterations {
        let rows = index::sample(&mut rng, n, min_samples).into_vec();
        let sub_x = predictors.select_rows(rows.iter());
        for (k, &i) in rows.iter().enumerate() {
            sub_y[k] = target[i];
        }
        let Ok(candidate) = regressor.fit(&sub_x, &sub_y) else {
            continue;
        };
        if candidate.coefficients.iter().any(|c| !c.is_finite()) || !candidate.intercept.is_finite() {
            continue;
        }
        let pred = candidate.predict(predictors);
        let mut mask = vec![false; n];
        let mut count = 0;
        let mut sse = 0.0;
        for i in 0..n {
            let r = target[i] - pred[i];
            if r.abs() <= threshold {
                mask[i] = true;
                count += 1;
                sse += r * r;
            }
        }
        if count < min_samples {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bc, bs, _)) => count > *bc || (count == *bc && sse < *bs),
        };
        if better {
            best = Some((count, sse, mask));
        }
        if count >= stop_count {
            break;
        }
    }

    match best {
        Some((_, _, mask)) => {
            let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
            let x = predictors.select_rows(rows.iter());
            let y: Vec<f64> = rows.iter().map(|&i| target[i]).collect();
            let mut fit = regressor.fit(&x, &y)?;
            fit.inlier_mask = Some(mask);
            fit.converged = true;
            Ok(fit)
        }
        None => {
            let mut fit = regressor.fit(predictors, target)?;
            fit.converged = false;
            Ok(fit)
        }
    }
}
