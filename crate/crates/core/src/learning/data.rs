use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};

/// Row-major feature matrix with one integer label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, feature_dim: usize, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if feature_dim == 0 || num_classes == 0 {
            return Err(invalid("dataset", "feature_dim and num_classes must be positive"));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::LengthMismatch {
                what: "features",
                expected: labels.len() * feature_dim,
                got: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        if let Some(index) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            num_classes,
        })
    }

    pub fn empty(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            features: Vec::new(),
            feature_dim,
            labels: Vec::new(),
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            feature_dim: self.feature_dim,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// First `n` rows and the remainder.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Same rows with every label mapped through `f`.
    pub fn map_labels(&self, f: impl Fn(usize) -> usize) -> Dataset {
        Dataset {
            labels: self.labels.iter().map(|&l| f(l)).collect(),
            ..self.clone()
        }
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }
}

/// Gaussian-mixture classification task: class `c` is centred at a random
/// unit direction scaled by `class_separation`, with unit isotropic noise.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    centers: Vec<Vec<f64>>,
    feature_dim: usize,
}

impl GaussianMixture {
    pub fn new<R: Rng + ?Sized>(
        num_classes: usize,
        feature_dim: usize,
        class_separation: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if num_classes == 0 || feature_dim == 0 {
            return Err(invalid(
                "synthetic task",
                "num_classes and feature_dim must be positive",
            ));
        }
        if !(class_separation.is_finite() && class_separation >= 0.0) {
            return Err(invalid("class_separation", "must be finite and non-negative"));
        }
        let centers = (0..num_classes)
            .map(|_| {
                let mut dir: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = crate::vector::norm(&dir).max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v *= class_separation / n);
                dir
            })
            .collect();
        Ok(Self { centers, feature_dim })
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }

    /// Class-balanced sample (labels cycle through the classes, then the rows
    /// are shuffled).
    pub fn sample<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Dataset {
        let k = self.num_classes();
        let mut labels: Vec<usize> = (0..samples).map(|i| i % k).collect();
        labels.shuffle(rng);
        let mut features = Vec::with_capacity(samples * self.feature_dim);
        for &label in &labels {
            for &c in &self.centers[label] {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(c + noise);
            }
        }
        Dataset {
            features,
            feature_dim: self.feature_dim,
            labels,
            num_classes: k,
        }
    }
}

pub fn synth_dataset<R: Rng + ?Sized>(
    num_classes: usize,
    samples: usize,
    feature_dim: usize,
    class_separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    if samples == 0 {
        return Err(invalid("samples", "must be positive"));
    }
    let task = GaussianMixture::new(num_classes, feature_dim, class_separation, rng)?;
    Ok(task.sample(samples, rng))
}

/// Client shards plus the row indices each one took from the source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub shards: Vec<Dataset>,
    pub indices: Vec<Vec<usize>>,
}

impl Partition {
    /// Clients that received no samples.
    pub fn empty_shards(&self) -> Vec<usize> {
        (0..self.shards.len()).filter(|&i| self.shards[i].is_empty()).collect()
    }
}

/// Label-skewed split: for every class, client proportions are drawn from a
/// symmetric Dirichlet(`concentration`) and the class's rows are dealt out
/// accordingly.
pub fn dirichlet_partition<R: Rng + ?Sized>(
    dataset: &Dataset,
    n_clients: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<Partition> {
    if n_clients == 0 {
        return Err(invalid("n_clients", "must be >= 1"));
    }
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(invalid(
            "concentration",
            format!("must be positive, got {concentration}"),
        ));
    }
    let gamma = Gamma::new(concentration, 1.0).map_err(|e| invalid("concentration", e.to_string()))?;
    let mut indices = vec![Vec::new(); n_clients];
    for class in 0..dataset.num_classes() {
        let mut rows: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.label(i) == class).collect();
        rows.shuffle(rng);
        let mut weights: Vec<f64> = (0..n_clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            // all draws underflowed; put the whole class on one client
            weights = vec![0.0; n_clients];
            weights[rng.random_range(0..n_clients)] = 1.0;
        }
        let total: f64 = weights.iter().sum();
        let n = rows.len();
        let mut start = 0;
        let mut cumulative = 0.0;
        for (client, w) in weights.iter().enumerate() {
            cumulative += w / total;
            let end = if client + 1 == n_clients {
                n
            } else {
                ((cumulative * n as f64).floor() as usize).clamp(start, n)
            };
            indices[client].extend_from_slice(&rows[start..end]);
            start = end;
        }
    }
    for shard in &mut indices {
        shard.sort_unstable();
    }
    let shards: Vec<Dataset> = indices.iter().map(|ix| dataset.subset(ix)).collect();
    let partition = Partition { shards, indices };
    let empty = partition.empty_shards();
    if !empty.is_empty() {
        log::warn!("{} of {n_clients} client shards are empty", empty.len());
    }
    Ok(partition)
}

/// Reads a comma-separated dataset. The first line holds
/// `feature_dim,num_classes`; each following line holds the features then
/// the label.
pub fn read_dataset_text(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    parse_dataset_text(&text)
}

pub fn parse_dataset_text(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| invalid("dataset file", "missing header"))?;
    let dims: Vec<usize> = header
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid("dataset header", e.to_string()))?;
    let [feature_dim, num_classes] = dims[..] else {
        return Err(invalid("dataset header", "expected `feature_dim,num_classes`"));
    };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != feature_dim + 1 {
            return Err(invalid(
                "dataset row",
                format!(
                    "row {} has {} fields, expected {}",
                    n + 1,
                    fields.len(),
                    feature_dim + 1
                ),
            ));
        }
        for f in &fields[..feature_dim] {
            features.push(
                f.parse::<f64>()
                    .map_err(|e| invalid("dataset row", format!("row {}: {e}", n + 1)))?,
            );
        }
        labels.push(
            fields[feature_dim]
                .parse::<usize>()
                .map_err(|e| invalid("dataset row", format!("row {}: {e}", n + 1)))?,
        );
    }
    Dataset::new(features, feature_dim, labels, num_classes)
}

pub fn write_dataset_text(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{},{}", dataset.feature_dim(), dataset.num_classes())?;
    for i in 0..dataset.len() {
        for v in dataset.row(i) {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", dataset.label(i))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn synth_is_deterministic_and_balanced() {
        let a = synth_dataset(4, 400, 6, 3.0, &mut stream(3, "d", 0, 0)).unwrap();
        let b = synth_dataset(4, 400, 6, 3.0, &mut stream(3, "d", 0, 0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_histogram(), vec![100; 4]);
    }

    #[test]
    fn partition_single_client_is_whole_dataset() {
        let d = synth_dataset(3, 90, 2, 1.0, &mut stream(1, "d", 0, 0)).unwrap();
        let p = dirichlet_partition(&d, 1, 0.5, &mut stream(1, "p", 0, 0)).unwrap();
        assert_eq!(p.shards, vec![d]);
    }

    #[test]
    fn partition_covers_every_row_once() {
        let d = synth_dataset(5, 1000, 3, 1.0, &mut stream(2, "d", 0, 0)).unwrap();
        let p = dirichlet_partition(&d, 37, 0.3, &mut stream(2, "p", 0, 0)).unwrap();
        let mut all: Vec<usize> = p.indices.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn text_round_trip() {
        let d = synth_dataset(3, 12, 2, 1.0, &mut stream(5, "d", 0, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset_text(&d, &path).unwrap();
        assert_eq!(read_dataset_text(&path).unwrap(), d);
        assert!(parse_dataset_text("2,3\n1.0,2.0,5\n").is_err());
        assert!(parse_dataset_text("2,3\n1.0,1\n").is_err());
        assert!(parse_dataset_text("").is_err());
    }
}
