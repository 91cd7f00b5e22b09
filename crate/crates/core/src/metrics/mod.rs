//! Threshold-free evaluation: ROC and precision–recall curves, their areas,
//! and rank-based comparison of models across datasets.
//!
//! Scores are "higher = more anomalous"; labels are `true` for anomalies.
//! ROC AUC is the Mann–Whitney probability with ties counted one half. PR AUC
//! is average precision: step integration over recall increments, with tied
//! scores processed as one block.

mod friedman;

use std::fmt::Write as _;

pub use friedman::{chi_square_sf, friedman, RankTable};

use crate::error::{Error, Result};

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            found: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::InvalidConfig(format!("score {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Cumulative `(threshold, tp, fp)` after each block of tied scores, from
/// the highest score down.
fn sweep(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let t = scores[order[k]];
        while k < order.len() && scores[order[k]] == t {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push((t, tp, fp));
    }
    out
}

pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    // rank-sum form of the Mann–Whitney U statistic, average ranks on ties
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[k]] {
            end += 1;
        }
        let avg_rank = (k + end) as f64 / 2.0 + 1.0;
        let block_pos = order[k..=end].iter().filter(|&&i| labels[i]).count();
        rank_sum += avg_rank * block_pos as f64;
        k = end + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::NoPositives);
    }
    // Σ Δtp·precision, divided once so a perfect ranking gives exactly 1
    let mut weighted = 0.0;
    let mut prev_tp = 0;
    for (_, tp, fp) in sweep(scores, labels) {
        if tp > prev_tp {
            weighted += (tp - prev_tp) as f64 * (tp as f64 / (tp + fp) as f64);
        }
        prev_tp = tp;
    }
    Ok(weighted / pos as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurveKind {
    Roc,
    Pr,
}

impl CurveKind {
    pub fn name(&self) -> &'static str {
        match self {
            CurveKind::Roc => "roc",
            CurveKind::Pr => "pr",
        }
    }
}

/// A curve vertex: `(FPR, TPR)` for ROC, `(recall, precision)` for PR.
/// `threshold` is the lowest score flagged at this vertex (`+∞` for the start).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoints {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
    pub auc: f64,
}

impl CurvePoints {
    /// Area from the vertices: trapezoids for ROC, right-hand steps for PR.
    pub fn integrate(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| {
                let dx = w[1].x - w[0].x;
                match self.kind {
                    CurveKind::Roc => dx * (w[0].y + w[1].y) / 2.0,
                    CurveKind::Pr => dx * w[1].y,
                }
            })
            .sum()
    }

    /// `threshold,x,y` rows with a header, for external plotting.
    pub fn to_csv(&self) -> String {
        let (xn, yn) = match self.kind {
            CurveKind::Roc => ("fpr", "tpr"),
            CurveKind::Pr => ("recall", "precision"),
        };
        let mut out = format!("threshold,{xn},{yn}\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.threshold, p.x, p.y);
        }
        out
    }
}

/// One vertex per distinct score plus the starting endpoint.
pub fn curve_points(scores: &[f64], labels: &[bool], kind: CurveKind) -> Result<CurvePoints> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let (p, n) = (pos as f64, neg as f64);
    let blocks = sweep(scores, labels);
    let mut points = Vec::with_capacity(blocks.len() + 1);
    match kind {
        CurveKind::Roc => {
            points.push(CurvePoint {
                threshold: f64::INFINITY,
                x: 0.0,
                y: 0.0,
            });
            points.extend(blocks.iter().map(|&(t, tp, fp)| CurvePoint {
                threshold: t,
                x: fp as f64 / n,
                y: tp as f64 / p,
            }));
        }
        CurveKind::Pr => {
            points.push(CurvePoint {
                threshold: f64::INFINITY,
                x: 0.0,
                y: 1.0,
            });
            points.extend(blocks.iter().map(|&(t, tp, fp)| CurvePoint {
                threshold: t,
                x: tp as f64 / p,
                y: tp as f64 / (tp + fp) as f64,
            }));
        }
    }
    let mut curve = CurvePoints { kind, points, auc: 0.0 };
    curve.auc = curve.integrate();
    Ok(curve)
}
