//! Data model, CSV ingestion, synthetic generation and resampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::{fingerprint_row, rng_from_seed};

/// An `n × d` matrix of finite feature values with optional anomaly labels
/// (`true` = anomaly).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    values: DMatrix<f64>,
    feature_names: Vec<String>,
    labels: Option<Vec<bool>>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        values: DMatrix<f64>,
        feature_names: Vec<String>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let (n, d) = values.shape();
        if feature_names.len() != d {
            return Err(Error::InvalidDataset(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                d
            )));
        }
        let mut seen = HashSet::new();
        for f in &feature_names {
            if !seen.insert(f.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate feature name '{f}'")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::InvalidDataset(format!("{} labels for {} rows", labels.len(), n)));
            }
        }
        for (j, col) in values.column_iter().enumerate() {
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::Cell {
                    row: i,
                    column: feature_names[j].clone(),
                    message: format!("non-finite value {}", col[i]),
                });
            }
        }
        Ok(Dataset {
            name: name.into(),
            values,
            feature_names,
            labels,
        })
    }

    /// Builds a dataset from row vectors, naming features `x1..xd`.
    pub fn from_rows(name: impl Into<String>, rows: &[Vec<f64>], labels: Option<Vec<bool>>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::RaggedRow {
                row: i,
                found: r.len(),
                expected: d,
            });
        }
        let values = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Dataset::new(name, values, default_feature_names(d), labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.as_ref().map_or(0, |l| l.iter().filter(|&&a| a).count())
    }

    /// New dataset made of the given rows (repeats allowed), labels carried along.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let values = self.values.select_rows(indices.iter());
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect());
        Dataset {
            name: self.name.clone(),
            values,
            feature_names: self.feature_names.clone(),
            labels,
        }
    }

    /// Columns reordered to `names`. Any name present on one side only is an
    /// error listing both halves of the symmetric difference.
    pub fn align_features(&self, names: &[String]) -> Result<Dataset> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| !self.feature_names.contains(n))
            .cloned()
            .collect();
        let unexpected: Vec<String> = self
            .feature_names
            .iter()
            .filter(|n| !names.contains(n))
            .cloned()
            .collect();
        if !missing.is_empty() || !unexpected.is_empty() {
            return Err(Error::FeatureMismatch { missing, unexpected });
        }
        let order: Vec<usize> = names
            .iter()
            .map(|n| self.feature_names.iter().position(|f| f == n).expect("checked above"))
            .collect();
        Ok(Dataset {
            name: self.name.clone(),
            values: self.values.select_columns(order.iter()),
            feature_names: names.to_vec(),
            labels: self.labels.clone(),
        })
    }

    pub fn row_fingerprint(&self, i: usize) -> u64 {
        fingerprint_row(&self.row(i))
    }

    /// Order-sensitive fingerprint of the whole matrix.
    pub fn fingerprint(&self) -> u64 {
        (0..self.n()).fold(self.d() as u64, |h, i| {
            crate::rng::splitmix64(h ^ self.row_fingerprint(i))
        })
    }
}

pub fn default_feature_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

/// Column names from the header row of a CSV file.
pub fn csv_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    Ok(rdr.headers()?.iter().map(str::to_owned).collect())
}

/// Reads a headered numeric CSV. When `label_column` is given, that column
/// becomes the label vector (`cell == anomaly_value` ⇒ anomaly, default `"1"`)
/// and is excluded from the features.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>, anomaly_value: Option<&str>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, name, label_column, anomaly_value)
}

pub fn read_csv<R: Read>(
    reader: R,
    name: impl Into<String>,
    label_column: Option<&str>,
    anomaly_value: Option<&str>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_idx = match label_column {
        Some(col) => Some(
            header
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| Error::UnknownColumn(col.to_owned()))?,
        ),
        None => None,
    };
    let anomaly_value = anomaly_value.unwrap_or("1");
    let feature_idx: Vec<usize> = (0..header.len()).filter(|&j| Some(j) != label_idx).collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&j| header[j].clone()).collect();

    let mut flat = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, the header being row 0
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                found: record.len(),
                expected: header.len(),
            });
        }
        for &j in &feature_idx {
            let cell = &record[j];
            let v: f64 = cell.parse().map_err(|_| Error::Cell {
                row,
                column: header[j].clone(),
                message: format!("not a number: '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: header[j].clone(),
                    message: format!("non-finite value '{cell}'"),
                });
            }
            flat.push(v);
        }
        if let Some(li) = label_idx {
            labels.push(&record[li] == anomaly_value);
        }
    }
    let d = feature_idx.len();
    let n = flat.len().checked_div(d).unwrap_or(labels.len());
    let values = DMatrix::from_row_slice(n, d, &flat);
    Dataset::new(name, values, feature_names, label_idx.map(|_| labels))
}

/// Writes the dataset as CSV. Labels, when present and `label_column` is
/// given, are appended as a `1`/`0` column. Values use the shortest decimal
/// form that round-trips exactly.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W, label_column: Option<&str>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let with_labels = label_column.is_some() && ds.labels.is_some();
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    if let (true, Some(col)) = (with_labels, label_column) {
        header.push(col);
    }
    wtr.write_record(&header)?;
    let mut cells = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        cells.clear();
        cells.extend(ds.values.row(i).iter().map(|v| v.to_string()));
        if with_labels {
            let a = ds.labels.as_ref().is_some_and(|l| l[i]);
            cells.push(if a { "1".into() } else { "0".into() });
        }
        wtr.write_record(&cells)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: Option<&str>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(ds, std::io::BufWriter::new(file), label_column)
}

/// Parameters of the Mulcross-style generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    /// Fraction of anomalies, in `[0, 1)`.
    pub contamination: f64,
    /// Anomaly-cluster displacement along `(1, …, 1)`, in standard deviations.
    pub cluster_shift: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 262_144,
            d: 4,
            contamination: 0.10,
            cluster_shift: 2.0,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn anomaly_count(&self) -> usize {
        (self.contamination * self.n as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidConfig("n and d must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.contamination) {
            return Err(Error::InvalidConfig(format!(
                "contamination {} outside [0, 1)",
                self.contamination
            )));
        }
        if !(self.cluster_shift > 0.0 && self.cluster_shift.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "cluster_shift {} must be positive",
                self.cluster_shift
            )));
        }
        if self.contamination > 0.0 && self.anomaly_count() < 1 {
            return Err(Error::InvalidConfig(format!(
                "contamination {} yields no anomaly at n = {}",
                self.contamination, self.n
            )));
        }
        Ok(())
    }
}

/// Standard-normal inliers plus `⌊contamination·n⌋` anomalies split between
/// two clusters centred at `±shift·(1, …, 1)` with covariance `0.25·I`.
/// Inliers come first, then the `+shift` cluster, then the `−shift` cluster.
pub fn generate_mulcross_like(cfg: &GeneratorConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let n_anom = cfg.anomaly_count();
    let n_in = cfg.n - n_anom;
    let n_pos = n_anom / 2;
    let mut flat = Vec::with_capacity(cfg.n * cfg.d);
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (center, scale, anomaly) = if i < n_in {
            (0.0, 1.0, false)
        } else if i < n_in + n_pos {
            (cfg.cluster_shift, 0.5, true)
        } else {
            (-cfg.cluster_shift, 0.5, true)
        };
        for _ in 0..cfg.d {
            let z: f64 = rng.sample(StandardNormal);
            flat.push(center + scale * z);
        }
        labels.push(anomaly);
    }
    let values = DMatrix::from_row_slice(cfg.n, cfg.d, &flat);
    Dataset::new("mulcross", values, default_feature_names(cfg.d), Some(labels))
}

/// Indices of an `n`-row bootstrap resample.
pub fn bootstrap_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Resamples `n` rows uniformly with replacement.
pub fn bootstrap(ds: &Dataset, seed: u64) -> Result<Dataset> {
    if ds.n() == 0 {
        return Err(Error::InsufficientRows { needed: 1, found: 0 });
    }
    Ok(ds.select_rows(&bootstrap_indices(ds.n(), seed)))
}

/// A random train/test partition. Indices refer to rows of the source dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub seed: u64,
}

/// Shuffles the rows, then cuts at `⌊train_fraction·n⌋` (clamped so both
/// halves are non-empty).
pub fn split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<SplitPair> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::InsufficientRows { needed: 2, found: n });
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_from_seed(seed));
    let cut = ((train_fraction * n as f64).floor() as usize).clamp(1, n - 1);
    let test_indices = perm.split_off(cut);
    let train_indices = perm;
    Ok(SplitPair {
        train: ds.select_rows(&train_indices),
        test: ds.select_rows(&test_indices),
        train_indices,
        test_indices,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> Dataset {
        Dataset::from_rows(
            "t",
            &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]],
            Some(vec![false, true, false]),
        )
        .unwrap()
    }

    #[test]
    fn align_by_name() {
        let ds = Dataset::new(
            "t",
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            vec!["a".into(), "b".into(), "c".into()],
            None,
        )
        .unwrap();
        let names: Vec<String> = ["c", "a", "b"].iter().map(|s| s.to_string()).collect();
        let al = ds.align_features(&names).unwrap();
        assert_eq!(al.row(1), vec![6.0, 4.0, 5.0]);
        let names: Vec<String> = ["a", "b", "z"].iter().map(|s| s.to_string()).collect();
        match ds.align_features(&names) {
            Err(Error::FeatureMismatch { missing, unexpected }) => {
                assert_eq!(missing, vec!["z"]);
                assert_eq!(unexpected, vec!["c"]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_labelled_csv() {
        let text = "a,b,y\n1,2,0\n3,4,1\n5.5,-6,0\n";
        let ds = read_csv(text.as_bytes(), "t", Some("y"), Some("1")).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.feature_names(), ["a", "b"]);
        assert_eq!(ds.labels().unwrap(), [false, true, false]);
        assert_eq!(ds.values()[(2, 1)], -6.0);
    }

    #[test]
    fn labels_absent_without_label_column() {
        let ds = read_csv("a,b\n1,2\n".as_bytes(), "t", None, None).unwrap();
        assert!(ds.labels().is_none());
    }

    #[test]
    fn nan_cell_reports_row_and_column() {
        let err = read_csv("a,b\n1,2\n3,NaN\n".as_bytes(), "t", None, None).unwrap_err();
        match err {
            Error::Cell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(
            read_csv("a,b\n1,x\n".as_bytes(), "t", None, None),
            Err(Error::Cell { row: 1, .. })
        ));
        assert!(matches!(
            read_csv("a,b\n1,2\n".as_bytes(), "t", Some("y"), None),
            Err(Error::UnknownColumn(_))
        ));
        assert!(matches!(
            read_csv("a,b\n1,2\n3\n".as_bytes(), "t", None, None),
            Err(Error::RaggedRow { row: 2, .. })
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", None, None),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn duplicate_feature_names_rejected() {
        assert!(read_csv("a,a\n1,2\n".as_bytes(), "t", None, None).is_err());
    }

    #[test]
    fn generator_counts_and_determinism() {
        let cfg = GeneratorConfig {
            n: 1000,
            seed: 3,
            ..Default::default()
        };
        let a = generate_mulcross_like(&cfg).unwrap();
        let b = generate_mulcross_like(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.anomaly_count(), 100);
        assert_eq!(GeneratorConfig::default().anomaly_count(), 26214);

        let clean = generate_mulcross_like(&GeneratorConfig {
            n: 50,
            contamination: 0.0,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(clean.anomaly_count(), 0);
    }

    #[test]
    fn generator_rejects_bad_config() {
        let bad = |c: GeneratorConfig| generate_mulcross_like(&c).is_err();
        assert!(bad(GeneratorConfig {
            n: 5,
            contamination: 0.1,
            ..Default::default()
        }));
        assert!(bad(GeneratorConfig {
            contamination: 1.0,
            ..Default::default()
        }));
        assert!(bad(GeneratorConfig {
            cluster_shift: 0.0,
            ..Default::default()
        }));
    }

    #[test]
    fn generator_inlier_mean_near_zero() {
        let cfg = GeneratorConfig {
            n: 20_000,
            seed: 11,
            ..Default::default()
        };
        let ds = generate_mulcross_like(&cfg).unwrap();
        let labels = ds.labels().unwrap();
        let inliers: Vec<usize> = (0..ds.n()).filter(|&i| !labels[i]).collect();
        let bound = 5.0 / (inliers.len() as f64).sqrt();
        for j in 0..ds.d() {
            let mean = inliers.iter().map(|&i| ds.values()[(i, j)]).sum::<f64>() / inliers.len() as f64;
            assert!(mean.abs() < bound, "feature {j} mean {mean}");
        }
    }

    #[test]
    fn bootstrap_single_row_is_identity() {
        let ds = Dataset::from_rows("t", &[vec![1.5, 2.5]], Some(vec![true])).unwrap();
        assert_eq!(bootstrap(&ds, 9).unwrap(), ds);
    }

    #[test]
    fn bootstrap_rows_come_from_input() {
        let rows: Vec<Vec<f64>> = (0..1000).map(|i| vec![i as f64, -(i as f64)]).collect();
        let ds = Dataset::from_rows("t", &rows, None).unwrap();
        let bs = bootstrap(&ds, 1).unwrap();
        assert_eq!(bs.n(), 1000);
        assert_eq!(bs.feature_names(), ds.feature_names());
        for i in 0..bs.n() {
            let r = bs.row(i);
            assert_eq!(r[1], -r[0]);
            assert!(r[0] >= 0.0 && r[0] < 1000.0 && r[0].fract() == 0.0);
        }
    }

    #[test]
    fn bootstrap_distinct_fraction_matches_coverage() {
        // P(row drawn at least once) = 1 - (1 - 1/n)^n -> 1 - 1/e
        let n = 10_000;
        let expected = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        for seed in 0..5 {
            let idx = bootstrap_indices(n, seed);
            let distinct = idx.iter().collect::<HashSet<_>>().len() as f64 / n as f64;
            assert!((distinct - expected).abs() < 0.02, "seed {seed}: {distinct}");
        }
        assert!((expected - (1.0 - (-1.0f64).exp())).abs() < 1e-4);
    }

    #[test]
    fn bootstrap_empty_errors() {
        let ds = Dataset::new("e", DMatrix::zeros(0, 2), default_feature_names(2), None).unwrap();
        assert!(bootstrap(&ds, 0).is_err());
    }

    #[test]
    fn split_sizes() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_rows("t", &rows, None).unwrap();
        let sp = split(&ds, 0.7, 5).unwrap();
        assert_eq!((sp.train.n(), sp.test.n()), (7, 3));

        let two = Dataset::from_rows("t", &rows[..2], None).unwrap();
        let sp = split(&two, 0.5, 5).unwrap();
        assert_eq!((sp.train.n(), sp.test.n()), (1, 1));

        assert!(split(&two, 1.0, 0).is_err());
        assert!(split(&two, 0.0, 0).is_err());
        assert!(split(&Dataset::from_rows("t", &rows[..1], None).unwrap(), 0.5, 0).is_err());
    }

    #[test]
    fn write_then_read_round_trips() {
        let ds = small();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, Some("label")).unwrap();
        let back = read_csv(buf.as_slice(), "t", Some("label"), Some("1")).unwrap();
        assert_eq!(back, ds);
    }

    proptest! {
        #[test]
        fn csv_round_trip_exact(rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..20)) {
            let ds = Dataset::from_rows("t", &rows, None).unwrap();
            let mut buf = Vec::new();
            write_csv(&ds, &mut buf, None).unwrap();
            let back = read_csv(buf.as_slice(), "t", None, None).unwrap();
            prop_assert_eq!(back.values(), ds.values());
        }

        #[test]
        fn split_is_partition(n in 2usize..200, frac in 0.05f64..0.95, seed in any::<u64>()) {
            let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
            let ds = Dataset::from_rows("t", &rows, None).unwrap();
            let sp = split(&ds, frac, seed).unwrap();
            prop_assert_eq!(sp.train.n() + sp.test.n(), n);
            let mut all: Vec<usize> = sp.train_indices.iter().chain(&sp.test_indices).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let target = frac * n as f64;
            prop_assert!((sp.train.n() as f64 - target).abs() <= 1.0);
            let again = split(&ds, frac, seed).unwrap();
            prop_assert_eq!(again.train_indices, sp.train_indices);
        }
    }
}
