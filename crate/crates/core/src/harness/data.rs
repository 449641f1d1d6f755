use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};
use crate::numerics::Mat;

use super::config::{DatasetKind, DatasetSpec};

const STD_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Mat,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Result<(Mat, Vec<usize>)> {
        let cols = self.features.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(self.features.row(i));
        }
        Ok((
            Mat::from_vec(idx.len(), cols, data)?,
            idx.iter().map(|&i| self.labels[i]).collect(),
        ))
    }
}

/// Synthetic two-class data. Class 0 gets the extra sample when `n` is odd.
///
/// Blobs are unit-variance Gaussians whose centres sit `separation` apart
/// along the diagonal of `dims`-space; `noise` is the probability of a
/// flipped label. Spirals are two interleaved 2-D arms with Gaussian angular
/// noise of std `noise` radians.
pub fn generate_synthetic(spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    if spec.n < 10 {
        return Err(MsthError::Config(format!(
            "synthetic data needs n >= 10, got {}",
            spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n;
    let sizes = [n - n / 2, n / 2];
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    match spec.kind {
        DatasetKind::Blobs => {
            let d = spec.dims;
            let offset = spec.separation / 2.0 / (d as f64).sqrt();
            for (class, &size) in sizes.iter().enumerate() {
                let sign = if class == 0 { -1.0 } else { 1.0 };
                for _ in 0..size {
                    rows.push(
                        (0..d)
                            .map(|_| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                sign * offset + z
                            })
                            .collect::<Vec<f64>>(),
                    );
                    let flip = spec.noise > 0.0 && rng.random::<f64>() < spec.noise;
                    labels.push(if flip { 1 - class } else { class });
                }
            }
        }
        DatasetKind::Spirals => {
            let angular = if spec.noise > 0.0 {
                Some(
                    Normal::new(0.0, spec.noise)
                        .map_err(|e| MsthError::Config(format!("spiral noise: {e}")))?,
                )
            } else {
                None
            };
            let turns = 2.0 * PI;
            for (class, &size) in sizes.iter().enumerate() {
                for i in 0..size {
                    let t = 0.25 + (turns - 0.25) * i as f64 / (size.max(2) - 1) as f64;
                    let jitter = angular.map(|d| d.sample(&mut rng)).unwrap_or(0.0);
                    let theta = t + class as f64 * PI + jitter;
                    let r = t / turns;
                    rows.push(vec![r * theta.cos(), r * theta.sin()]);
                    labels.push(class);
                }
            }
        }
        DatasetKind::Tabular => {
            return Err(MsthError::Config(
                "tabular data is loaded, not generated".into(),
            ));
        }
    }
    Ok(Dataset {
        features: Mat::from_rows(&rows)?,
        labels,
        classes: 2,
    })
}

/// Read a delimited file with a header row. Features stay raw; labels are
/// mapped to class indices in sorted label order.
pub fn load_tabular(path: &Path, label_column: &str) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => MsthError::Dataset(format!("{}: {e}", path.display())),
            _ => MsthError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| MsthError::Dataset(format!("missing label column {label_column:?}")))?;
    let names: Vec<String> = headers.iter().map(str::to_string).collect();

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(names.len() - 1);
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| MsthError::NonNumeric {
                    row: r + 1,
                    column: names[c].clone(),
                    value: cell.to_string(),
                })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(MsthError::EmptyDataset(path.to_path_buf()));
    }
    if rows[0].is_empty() {
        return Err(MsthError::Dataset("no feature columns".into()));
    }
    let classes: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    let classes: Vec<&str> = classes.into_iter().collect();
    let labels = raw_labels
        .iter()
        .map(|l| {
            classes
                .binary_search(&l.as_str())
                .expect("label collected above")
        })
        .collect();
    Ok(Dataset {
        features: Mat::from_rows(&rows)?,
        labels,
        classes: classes.len(),
    })
}

/// Per-column z-scoring with statistics taken from the training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Mat, train: &[usize]) -> Result<Self> {
        if train.is_empty() {
            return Err(MsthError::EmptyInput);
        }
        let n = train.len() as f64;
        let cols = x.cols();
        let mut mean = vec![0.0; cols];
        for &i in train {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; cols];
        for &i in train {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Ok(Standardizer { mean, std })
    }

    pub fn apply(&self, x: &Mat) -> Mat {
        let mut out = x.clone();
        for r in 0..x.rows() {
            for ((v, m), s) in out.row_mut(r).iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s.max(STD_GUARD);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn blobs(n: usize, noise: f64, separation: f64) -> DatasetSpec {
        DatasetSpec {
            kind: DatasetKind::Blobs,
            n,
            noise,
            separation,
            ..Default::default()
        }
    }

    #[test]
    fn synthetic_is_seeded_and_balanced() {
        let a = generate_synthetic(&blobs(101, 0.0, 4.0), 5).unwrap();
        assert_eq!(a, generate_synthetic(&blobs(101, 0.0, 4.0), 5).unwrap());
        let ones = a.labels.iter().filter(|&&l| l == 1).count();
        assert_eq!((a.len() - ones, ones), (51, 50));
        let spec = DatasetSpec {
            kind: DatasetKind::Spirals,
            n: 50,
            noise: 0.1,
            ..Default::default()
        };
        let s = generate_synthetic(&spec, 9).unwrap();
        assert_eq!(s.features.cols(), 2);
        assert_eq!(s, generate_synthetic(&spec, 9).unwrap());
    }

    #[test]
    fn well_separated_blobs_are_linearly_separable() {
        // the midpoint hyperplane is the Bayes boundary
        let d = generate_synthetic(&blobs(400, 0.0, 10.0), 1).unwrap();
        for (i, &y) in d.labels.iter().enumerate() {
            let s: f64 = d.features.row(i).iter().sum();
            assert_eq!(usize::from(s > 0.0), y);
        }
    }

    #[test]
    fn small_n_rejected() {
        assert!(generate_synthetic(&blobs(9, 0.0, 4.0), 1).is_err());
    }

    fn write_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn constant_column_standardizes_to_zero() {
        let f = write_file("a,b,label\n1,5,x\n2,5,y\n3,5,x\n");
        let d = load_tabular(f.path(), "label").unwrap();
        assert_eq!(d.labels, vec![0, 1, 0]);
        let st = Standardizer::fit(&d.features, &[0, 1, 2]).unwrap();
        let z = st.apply(&d.features);
        assert!((0..3).all(|r| z.get(r, 1) == 0.0));
        let mean0: f64 = (0..3).map(|r| z.get(r, 0)).sum::<f64>() / 3.0;
        assert!(mean0.abs() < 1e-10);
    }

    #[test]
    fn tabular_errors() {
        let f = write_file("a,b,label\n");
        assert!(matches!(
            load_tabular(f.path(), "label"),
            Err(MsthError::EmptyDataset(_))
        ));
        let f = write_file("a,label\n1,x\noops,y\n");
        match load_tabular(f.path(), "label") {
            Err(MsthError::NonNumeric { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "a", "oops"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_file("a,b\n1,2\n");
        assert!(matches!(
            load_tabular(f.path(), "label"),
            Err(MsthError::Dataset(_))
        ));
        assert!(load_tabular(Path::new("/definitely/not/here.csv"), "label").is_err());
    }

    #[test]
    fn standardizer_uses_train_rows_only() {
        let x = Mat::from_rows(&[vec![0.0], vec![2.0], vec![100.0]]).unwrap();
        let st = Standardizer::fit(&x, &[0, 1]).unwrap();
        assert_eq!(st.mean, vec![1.0]);
        assert_eq!(st.std, vec![1.0]);
        assert_eq!(st.apply(&x).get(2, 0), 99.0);
    }
}
