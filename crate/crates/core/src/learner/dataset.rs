use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::usage("dataset must hold at least one sample"));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::usage(format!(
                "{} features do not form {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::usage(format!(
                "label {y} outside [0, {num_classes})"
            )));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copies the given rows into a new dataset.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Result<Dataset> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset::new(name, features, labels, self.dim, self.num_classes)
    }

    /// Splits off the first `n_first` rows.
    pub fn split_at(&self, n_first: usize) -> Result<(Dataset, Dataset)> {
        let first: Vec<usize> = (0..n_first.min(self.len())).collect();
        let rest: Vec<usize> = (n_first.min(self.len())..self.len()).collect();
        Ok((
            self.subset(&first, format!("{}-train", self.name))?,
            self.subset(&rest, format!("{}-test", self.name))?,
        ))
    }
}

/// Gaussian class clusters: class `c` is centred at `separation * u_c` for a
/// random unit vector `u_c`, with identity covariance. Labels are balanced
/// and rows are shuffled.
pub fn make_synthetic(
    num_classes: usize,
    n: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes == 0 || n == 0 || d == 0 {
        return Err(Error::usage("num_classes, n and d must all be at least 1"));
    }
    if !separation.is_finite() || separation < 0.0 {
        return Err(Error::usage("separation must be finite and non-negative"));
    }
    let mut rng = RandomStream::new(seed);
    let mut centres = Vec::with_capacity(num_classes * d);
    for _ in 0..num_classes {
        let dir: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        centres.extend(dir.iter().map(|x| separation * x / norm));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    rng.shuffle(&mut labels);
    let mut features = Vec::with_capacity(n * d);
    for &y in &labels {
        let c = &centres[y * d..(y + 1) * d];
        features.extend(c.iter().map(|m| m + rng.standard_normal()));
    }
    Dataset::new(
        format!("synthetic-c{num_classes}-d{d}-s{separation}"),
        features,
        labels,
        d,
        num_classes,
    )
}
