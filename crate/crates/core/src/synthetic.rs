//! Seeded toy classification data on the unit sphere.
//!
//! Class directions are uniform on `S^{d-1}`. Each sample is its class
//! direction rotated by a half-normal angle `|N(0, σ)|` toward a uniformly
//! random tangent direction. Class sizes decay geometrically from
//! `samples_per_class` (class 0) down to `samples_per_class / ratio` (last
//! class).

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, domain_err, Result};
use crate::geometry::{dot, norm, Matrix};
use crate::loss::EmbeddingBatch;

fn default_classes() -> usize {
    8
}
fn default_per_class() -> usize {
    120
}
fn default_dim() -> usize {
    2
}
fn default_noise() -> f64 {
    0.1
}
fn default_ratio() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    #[serde(default = "default_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "default_dim")]
    pub input_dim: usize,
    /// Radians.
    #[serde(default = "default_noise")]
    pub angular_noise_std: f64,
    /// Largest over smallest class size.
    #[serde(default = "default_ratio")]
    pub class_imbalance_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 8 classes × 120 samples in 2-D, σ = 0.1 rad, balanced.
    fn default() -> Self {
        Self {
            num_classes: default_classes(),
            samples_per_class: default_per_class(),
            input_dim: default_dim(),
            angular_noise_std: default_noise(),
            class_imbalance_ratio: default_ratio(),
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 || self.samples_per_class == 0 {
            return config_err!("num_classes and samples_per_class must be positive");
        }
        if self.input_dim < 2 {
            return config_err!("input_dim must be >= 2, got {}", self.input_dim);
        }
        if !(self.angular_noise_std > 0.0 && self.angular_noise_std.is_finite()) {
            return config_err!("angular_noise_std must be > 0, got {}", self.angular_noise_std);
        }
        if !(self.class_imbalance_ratio >= 1.0 && self.class_imbalance_ratio.is_finite()) {
            return config_err!(
                "class_imbalance_ratio must be >= 1, got {}",
                self.class_imbalance_ratio
            );
        }
        Ok(())
    }

    /// Per-class sample counts.
    pub fn class_sizes(&self) -> Vec<usize> {
        let c = self.num_classes;
        let top = self.samples_per_class as f64;
        (0..c)
            .map(|i| {
                if c == 1 || self.class_imbalance_ratio == 1.0 {
                    self.samples_per_class
                } else {
                    let frac = i as f64 / (c - 1) as f64;
                    ((top * self.class_imbalance_ratio.powf(-frac)).round() as usize).max(1)
                }
            })
            .collect()
    }
}

/// Labeled unit-norm samples plus the true class directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_directions: Option<Matrix>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn batch(&self) -> Result<EmbeddingBatch> {
        EmbeddingBatch::new(self.features.clone(), self.labels.clone())
    }

    /// CSV with header `label,x0,x1,...`, one sample per row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("label".to_string())
            .chain((0..self.dim()).map(|k| format!("x{k}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for (row, label) in self.features.iter_rows().zip(&self.labels) {
            write!(w, "{label}")?;
            for x in row {
                // shortest representation that round-trips
                write!(w, ",{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads the format of [`Dataset::write_csv`]. Rows need not be unit
    /// norm here; [`Dataset::batch`] checks that.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("label") || headers.len() < 2 {
            return domain_err!("dataset csv must start with 'label,x0,...', got {headers:?}");
        }
        for (k, h) in headers.iter().skip(1).enumerate() {
            if h != format!("x{k}") {
                return domain_err!("unexpected dataset column '{h}', expected 'x{k}'");
            }
        }
        let d = headers.len() - 1;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let parse_err = |what: &str| {
                crate::Error::Domain(format!("dataset row {}: bad {what}", line + 1))
            };
            labels.push(rec[0].trim().parse::<usize>().map_err(|_| parse_err("label"))?);
            for k in 1..=d {
                data.push(rec[k].trim().parse::<f64>().map_err(|_| parse_err("value"))?);
            }
        }
        Ok(Self {
            features: Matrix::from_vec(labels.len(), d, data)?,
            labels,
            class_directions: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::report::write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// A uniform random point on `S^{d-1}`.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// A uniform random unit vector orthogonal to the unit vector `dir`.
pub fn random_tangent<R: Rng + ?Sized>(rng: &mut R, dir: &[f64]) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dir.len()).map(|_| StandardNormal.sample(rng)).collect();
        let along = dot(&v, dir);
        v.iter_mut().zip(dir).for_each(|(x, d)| *x -= along * d);
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Rotates the unit vector `dir` by `angle` radians toward a random tangent
/// direction; the result is renormalized.
pub fn perturb_by_angle<R: Rng + ?Sized>(rng: &mut R, dir: &[f64], angle: f64) -> Vec<f64> {
    let t = random_tangent(rng, dir);
    let (s, c) = angle.sin_cos();
    let v: Vec<f64> = dir.iter().zip(&t).map(|(d, t)| c * d + s * t).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Generates a dataset. Identical specs give bit-identical output.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.input_dim;
    let directions: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| random_unit_vector(&mut rng, d))
        .collect();
    let noise = Normal::new(0.0, spec.angular_noise_std)
        .map_err(|e| crate::Error::Config(format!("noise distribution: {e}")))?;

    let sizes = spec.class_sizes();
    let total: usize = sizes.iter().sum();
    let mut data = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for (class, (&size, dir)) in sizes.iter().zip(&directions).enumerate() {
        for _ in 0..size {
            let angle: f64 = noise.sample(&mut rng);
            data.extend(perturb_by_angle(&mut rng, dir, angle.abs()));
            labels.push(class);
        }
    }
    Ok(Dataset {
        features: Matrix::from_vec(total, d, data)?,
        labels,
        class_directions: Some(Matrix::from_rows(&directions)?),
    })
}
