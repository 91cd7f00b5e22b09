//! Friedman rank test across datasets.

use crate::error::{Error, Result};

/// Average ranks of `m` models over `D` datasets (rank 1 = highest metric).
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[dataset][model]`, ties sharing their average rank.
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    pub friedman_statistic: f64,
    /// Upper tail of χ² with `m − 1` degrees of freedom.
    pub p_value: f64,
    pub n_models: usize,
    pub n_datasets: usize,
}

impl RankTable {
    /// `model,average_rank` rows sorted best first.
    pub fn to_csv(&self) -> String {
        let mut order: Vec<usize> = (0..self.n_models).collect();
        order.sort_by(|&a, &b| self.average_ranks[a].total_cmp(&self.average_ranks[b]));
        let mut out = String::from("model,average_rank\n");
        for j in order {
            out.push_str(&format!("{},{}\n", self.models[j], self.average_ranks[j]));
        }
        out
    }
}

/// Ranks of `values` where the largest value gets rank 1; ties share the mean rank.
fn rank_descending(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + end) as f64 / 2.0 + 1.0;
        for &i in &order[k..=end] {
            ranks[i] = avg;
        }
        k = end + 1;
    }
    ranks
}

/// Friedman statistic `χ² = 12D / (m(m+1)) · Σ_j (R̄_j − (m+1)/2)²` from a
/// `values[dataset][model]` table of higher-is-better metrics.
pub fn friedman(models: &[String], datasets: &[String], values: &[Vec<Option<f64>>]) -> Result<RankTable> {
    let (m, big_d) = (models.len(), datasets.len());
    if m < 2 || big_d < 2 {
        return Err(Error::InvalidConfig(format!(
            "Friedman test needs at least 2 models and 2 datasets, got {m} and {big_d}"
        )));
    }
    if values.len() != big_d {
        return Err(Error::DimensionMismatch {
            expected: big_d,
            found: values.len(),
        });
    }
    let mut ranks = Vec::with_capacity(big_d);
    for (di, row) in values.iter().enumerate() {
        if row.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: row.len(),
            });
        }
        let mut dense = Vec::with_capacity(m);
        for (mi, v) in row.iter().enumerate() {
            match v {
                Some(x) if x.is_finite() => dense.push(*x),
                _ => {
                    return Err(Error::MissingCell {
                        model: models[mi].clone(),
                        dataset: datasets[di].clone(),
                    })
                }
            }
        }
        ranks.push(rank_descending(&dense));
    }
    let mf = m as f64;
    let df = big_d as f64;
    let average_ranks: Vec<f64> = (0..m).map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / df).collect();
    let center = (mf + 1.0) / 2.0;
    let spread: f64 = average_ranks.iter().map(|r| (r - center).powi(2)).sum();
    let statistic = 12.0 * df / (mf * (mf + 1.0)) * spread;
    Ok(RankTable {
        models: models.to_vec(),
        datasets: datasets.to_vec(),
        ranks,
        average_ranks,
        friedman_statistic: statistic,
        p_value: chi_square_sf(statistic, mf - 1.0),
        n_models: m,
        n_datasets: big_d,
    })
}

/// `P(χ²_k > x)`, via the regularized upper incomplete gamma `Q(k/2, x/2)`.
pub fn chi_square_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_q(dof / 2.0, x / 2.0)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let sum = COEF[1..]
        .iter()
        .enumerate()
        .fold(COEF[0], |acc, (i, c)| acc + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized upper incomplete gamma: power series below `a + 1`,
/// Lentz continued fraction above.
fn gamma_q(a: f64, x: f64) -> f64 {
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 1000;
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * EPS {
                break;
            }
        }
        (1.0 - sum * log_prefactor.exp()).clamp(0.0, 1.0)
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < EPS {
                break;
            }
        }
        (h * log_prefactor.exp()).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, k: usize) -> Vec<String> {
        (0..k).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn all_ties_give_zero() {
        let v = vec![vec![Some(0.8); 4]; 3];
        let t = friedman(&names("m", 4), &names("d", 3), &v).unwrap();
        assert!(t.average_ranks.iter().all(|&r| r == 2.5));
        assert_eq!(t.friedman_statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn dominant_model_ranks_first() {
        let v = vec![
            vec![Some(0.9), Some(0.5), Some(0.7)],
            vec![Some(0.99), Some(0.98), Some(0.1)],
        ];
        let t = friedman(&names("m", 3), &names("d", 2), &v).unwrap();
        assert_eq!(t.average_ranks[0], 1.0);
        for r in &t.ranks {
            assert_eq!(r.iter().sum::<f64>(), 6.0);
        }
        assert!(t.to_csv().starts_with("model,average_rank\nm0,1\n"));
    }

    #[test]
    fn hand_built_statistic() {
        // ranks d0: (1, 2.5, 2.5), d1: (2, 1, 3) -> averages (1.5, 1.75, 2.75)
        let v = vec![
            vec![Some(0.9), Some(0.4), Some(0.4)],
            vec![Some(0.7), Some(0.8), Some(0.1)],
        ];
        let t = friedman(&names("m", 3), &names("d", 2), &v).unwrap();
        assert_eq!(t.average_ranks, vec![1.5, 1.75, 2.75]);
        // 12·2/(3·4) · (0.25 + 0.0625 + 0.5625) = 2 · 0.875
        assert!((t.friedman_statistic - 1.75).abs() < 1e-12);
        assert!((t.p_value - (-1.75f64 / 2.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn missing_cell_is_an_error() {
        let v = vec![vec![Some(0.9), None], vec![Some(0.7), Some(0.8)]];
        assert!(matches!(
            friedman(&names("m", 2), &names("d", 2), &v),
            Err(Error::MissingCell { .. })
        ));
        assert!(friedman(&names("m", 1), &names("d", 2), &[vec![Some(1.0)], vec![Some(1.0)]]).is_err());
    }

    #[test]
    fn chi_square_tail_reference_values() {
        // two degrees of freedom: exp(−x/2)
        for x in [0.1, 1.0, 4.0, 30.0] {
            assert!((chi_square_sf(x, 2.0) - (-x / 2.0).exp()).abs() < 1e-13);
        }
        // classical 5% critical values
        assert!((chi_square_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-10);
        assert!((chi_square_sf(11.070_497_693_516_35, 5.0) - 0.05).abs() < 1e-10);
        assert!((chi_square_sf(14.067_140_449_340_17, 7.0) - 0.05).abs() < 1e-10);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
    }
}
