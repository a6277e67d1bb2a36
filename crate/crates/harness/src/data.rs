//! Datasets: synthetic Gaussian blobs, IDX files and label-first CSV.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, HarnessError, Result};

/// Row-major feature matrix with integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, n_features: usize, classes: usize) -> Result<Self> {
        if n_features == 0 || features.len() != labels.len() * n_features {
            return Err(HarnessError::Dataset(format!(
                "{} feature values do not fit {} samples of width {n_features}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
            return Err(HarnessError::Dataset(format!("label {y} outside 0..{classes}")));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// Synthetic classification task: class centres drawn once, samples are
/// centre plus isotropic Gaussian noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_features")]
    pub features: usize,
    #[serde(default = "default_train")]
    pub train: usize,
    #[serde(default = "default_test")]
    pub test: usize,
    /// Standard deviation of the class centres.
    #[serde(default = "default_separation")]
    pub separation: f64,
    /// Per-sample noise standard deviation.
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    10
}
fn default_features() -> usize {
    20
}
fn default_train() -> usize {
    5000
}
fn default_test() -> usize {
    1000
}
fn default_separation() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    1.0
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            classes: default_classes(),
            features: default_features(),
            train: default_train(),
            test: default_test(),
            separation: default_separation(),
            noise: default_noise(),
            seed: 0,
        }
    }
}

/// Draws a train and a test split from the same blobs. Labels cycle through
/// the classes so both splits are balanced.
pub fn synthetic_blobs<R: Rng + ?Sized>(spec: &BlobSpec, rng: &mut R) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 || spec.features == 0 {
        return Err(HarnessError::Dataset("need at least 2 classes and 1 feature".into()));
    }
    let centre = Normal::new(0.0, spec.separation).map_err(|e| HarnessError::Dataset(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise).map_err(|e| HarnessError::Dataset(e.to_string()))?;
    let centres: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.features).map(|_| centre.sample(rng)).collect())
        .collect();
    let mut split = |count: usize| {
        let mut features = Vec::with_capacity(count * spec.features);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let y = i % spec.classes;
            features.extend(centres[y].iter().map(|c| c + noise.sample(rng)));
            labels.push(y);
        }
        Dataset::new(features, labels, spec.features, spec.classes)
    };
    let train = split(spec.train)?;
    let test = split(spec.test)?;
    Ok((train, test))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(io_err(path))?;
    Ok(buf)
}

fn be_u32(bytes: &[u8], at: usize) -> Result<usize> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .ok_or_else(|| HarnessError::Dataset("truncated IDX header".into()))
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Parses an IDX image file (unsigned bytes, three dimensions) into rows of
/// pixel values scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(Vec<f64>, usize, usize)> {
    if be_u32(bytes, 0)? as u32 != IDX_IMAGES {
        return Err(HarnessError::Dataset("not an IDX image file".into()));
    }
    let (count, rows, cols) = (be_u32(bytes, 4)?, be_u32(bytes, 8)?, be_u32(bytes, 12)?);
    let width = rows * cols;
    let body = &bytes[16..];
    if body.len() != count * width {
        return Err(HarnessError::Dataset(format!(
            "IDX image body has {} bytes, expected {}",
            body.len(),
            count * width
        )));
    }
    Ok((body.iter().map(|&p| p as f64 / 255.0).collect(), count, width))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    if be_u32(bytes, 0)? as u32 != IDX_LABELS {
        return Err(HarnessError::Dataset("not an IDX label file".into()));
    }
    let count = be_u32(bytes, 4)?;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(HarnessError::Dataset(format!("IDX label body has {} bytes, expected {count}", body.len())));
    }
    Ok(body.iter().map(|&y| y as usize).collect())
}

pub fn load_idx(images: &Path, labels: &Path, classes: usize) -> Result<Dataset> {
    let (features, count, width) = parse_idx_images(&read_all(images)?)?;
    let labels = parse_idx_labels(&read_all(labels)?)?;
    if labels.len() != count {
        return Err(HarnessError::Dataset(format!("{count} images but {} labels", labels.len())));
    }
    Dataset::new(features, labels, width, classes)
}

/// Reads `label,feature,...` rows without a header.
pub fn load_csv(path: &Path, classes: usize) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| HarnessError::Dataset(format!("{}: {e}", path.display())))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parse_err = |what: &str| HarnessError::Dataset(format!("{}:{}: bad {what}", path.display(), line + 1));
        let mut fields = record.iter();
        let y: usize = fields.next().and_then(|s| s.trim().parse().ok()).ok_or_else(|| parse_err("label"))?;
        let row: Vec<f64> = fields
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err("feature"))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(parse_err("row width"));
        }
        labels.push(y);
        features.extend(row);
    }
    Dataset::new(features, labels, width.unwrap_or(0), classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn blobs_are_balanced_and_sized() {
        let spec = BlobSpec {
            train: 100,
            test: 30,
            ..Default::default()
        };
        let (train, test) = synthetic_blobs(&spec, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!((train.len(), test.len()), (100, 30));
        assert_eq!(train.features.len(), 100 * 20);
        assert_eq!(train.labels.iter().filter(|&&y| y == 3).count(), 10);
    }

    #[test]
    fn idx_round_trip() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        img.extend([0, 255, 51, 102]);
        let (px, count, width) = parse_idx_images(&img).unwrap();
        assert_eq!((count, width), (2, 2));
        assert_eq!(px, vec![0.0, 1.0, 0.2, 0.4]);
        let lab = [0, 0, 8, 1, 0, 0, 0, 2, 7, 1];
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![7, 1]);
        assert!(parse_idx_labels(&img).is_err());
        assert!(parse_idx_images(&img[..18]).is_err());
    }

    #[test]
    fn csv_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "1,0.5,2\n0,-1,3.5\n").unwrap();
        let d = load_csv(&path, 2).unwrap();
        assert_eq!(d.labels, vec![1, 0]);
        assert_eq!(d.row(1), &[-1.0, 3.5]);
        std::fs::write(&path, "1,0.5\n0,1,2\n").unwrap();
        assert!(load_csv(&path, 2).is_err());
        std::fs::write(&path, "4,0.5\n").unwrap();
        assert!(load_csv(&path, 2).is_err());
    }
}
