//! Grid-partitioned majority-voting classifier.
//!
//! Every image is resized to `W x H`, cut into `x_n * y_n` patches, and each
//! patch is classified independently by OMP + SRC against a dictionary built
//! from the same patch position of every training image. The image label is
//! the majority vote over patches.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{build_class_masks, classify_patch, ClassMask};
use crate::error::{Error, Result};
use crate::linalg::{normalize_l2, Mat};
use crate::omp::{omp_solve, StoppingRule};
use crate::raster::Raster;

/// Resize target and grid counts.
///
/// Patch size is `(W / x_n) x (H / y_n)` with integer division; leftover
/// pixels on the right and bottom edges are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub x_n: usize,
    pub y_n: usize,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, x_n: usize, y_n: usize) -> Result<Self> {
        let g = GridSpec {
            width,
            height,
            x_n,
            y_n,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_n == 0 || self.y_n == 0 {
            return Err(Error::InvalidArgument(format!(
                "grid counts must be >= 1, got {}x{}",
                self.x_n, self.y_n
            )));
        }
        if self.width < self.x_n || self.height < self.y_n {
            return Err(Error::InvalidArgument(format!(
                "a {}x{} grid does not fit a {}x{} image",
                self.x_n, self.y_n, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn grid_w(&self) -> usize {
        self.width / self.x_n
    }

    pub fn grid_h(&self) -> usize {
        self.height / self.y_n
    }

    pub fn n_patches(&self) -> usize {
        self.x_n * self.y_n
    }

    pub fn patch_len(&self) -> usize {
        self.grid_w() * self.grid_h()
    }
}

/// Bilinear resize using pixel-center alignment: destination pixel `d` samples
/// source coordinate `(d + 0.5) * src / dst - 0.5`, clamped to the image.
pub fn downsample(image: &Raster, width: usize, height: usize) -> Result<Raster> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let (sw, sh) = (image.width(), image.height());
    if sw == width && sh == height {
        return Ok(image.clone());
    }
    let taps = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let s0 = s.floor() as usize;
                let s1 = (s0 + 1).min(src - 1);
                (s0, s1, s - s0 as f64)
            })
            .collect()
    };
    let xs = taps(width, sw);
    let ys = taps(height, sh);
    let mut data = Vec::with_capacity(width * height);
    for &(y0, y1, fy) in &ys {
        let (r0, r1) = (image.row(y0), image.row(y1));
        for &(x0, x1, fx) in &xs {
            let top = r0[x0] * (1.0 - fx) + r0[x1] * fx;
            let bottom = r1[x0] * (1.0 - fx) + r1[x1] * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Raster::new(width, height, data)
}

/// Cuts an image of exactly `grid.width x grid.height` into patch vectors.
///
/// Patch `i * y_n + j` covers columns `[i * grid_w, (i + 1) * grid_w)` and rows
/// `[j * grid_h, (j + 1) * grid_h)`; pixels are flattened row-major within the patch.
pub fn partition_grid(image: &Raster, grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    if image.width() != grid.width || image.height() != grid.height {
        return Err(Error::DimensionMismatch {
            op: "partition_grid",
            expected: grid.width * grid.height,
            found: image.width() * image.height(),
        });
    }
    let (gw, gh) = (grid.grid_w(), grid.grid_h());
    let mut patches = Vec::with_capacity(grid.n_patches());
    for i in 0..grid.x_n {
        for j in 0..grid.y_n {
            let mut patch = Vec::with_capacity(gw * gh);
            for y in j * gh..(j + 1) * gh {
                patch.extend_from_slice(&image.row(y)[i * gw..(i + 1) * gw]);
            }
            patches.push(patch);
        }
    }
    Ok(patches)
}

/// Resize, partition and l2-normalise every patch.
pub fn patch_vectors(image: &Raster, grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    let resized = downsample(image, grid.width, grid.height)?;
    Ok(partition_grid(&resized, grid)?
        .iter()
        .map(|p| normalize_l2(p))
        .collect())
}

/// An image with its class label and an identifier used in reports.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub label: String,
    pub image: Raster,
}

/// One matrix of normalised training patches per grid position.
///
/// Column `j` of every patch matrix comes from training image `j`, whose
/// class is `column_labels[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    grid: GridSpec,
    per_patch: Vec<Mat>,
    column_labels: Vec<String>,
    masks: Vec<ClassMask>,
}

impl Dictionary {
    pub fn from_parts(grid: GridSpec, per_patch: Vec<Mat>, column_labels: Vec<String>) -> Result<Self> {
        grid.validate()?;
        if column_labels.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if per_patch.len() != grid.n_patches() {
            return Err(Error::DimensionMismatch {
                op: "Dictionary::from_parts",
                expected: grid.n_patches(),
                found: per_patch.len(),
            });
        }
        for m in &per_patch {
            if m.rows() != grid.patch_len() || m.cols() != column_labels.len() {
                return Err(Error::DimensionMismatch {
                    op: "Dictionary::from_parts",
                    expected: grid.patch_len() * column_labels.len(),
                    found: m.rows() * m.cols(),
                });
            }
        }
        let masks = build_class_masks(&column_labels, column_labels.len())?;
        Ok(Dictionary {
            grid,
            per_patch,
            column_labels,
            masks,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn per_patch(&self) -> &[Mat] {
        &self.per_patch
    }

    pub fn column_labels(&self) -> &[String] {
        &self.column_labels
    }

    pub fn masks(&self) -> &[ClassMask] {
        &self.masks
    }

    pub fn n_train(&self) -> usize {
        self.column_labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.masks.len()
    }

    /// Class labels in sorted order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.masks.iter().map(|m| m.label.as_str())
    }

    /// Runs OMP for the full patch dimension.
    pub fn default_rule(&self) -> StoppingRule {
        StoppingRule::ExactSparsity(self.grid.patch_len())
    }
}

pub fn build_dictionary(training: &[LabeledImage], grid: &GridSpec) -> Result<Dictionary> {
    grid.validate()?;
    if training.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let patches: Vec<Vec<Vec<f64>>> = training
        .par_iter()
        .map(|s| patch_vectors(&s.image, grid))
        .collect::<Result<_>>()?;

    let n = training.len();
    let len = grid.patch_len();
    let per_patch = (0..grid.n_patches())
        .map(|p| {
            let mut data = Vec::with_capacity(len * n);
            for img in &patches {
                data.extend_from_slice(&img[p]);
            }
            Mat::from_col_major(len, n, data)
        })
        .collect::<Result<Vec<_>>>()?;
    let column_labels = training.iter().map(|s| s.label.clone()).collect();
    Dictionary::from_parts(*grid, per_patch, column_labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub image_id: Option<String>,
    pub true_label: Option<String>,
    pub predicted: String,
    /// Vote count per label; labels without votes are absent.
    pub votes: BTreeMap<String, usize>,
    /// `(patch index, predicted label)` in patch order.
    pub per_patch: Vec<(usize, String)>,
    /// Class residual summed over all patches, for every class.
    pub residual_totals: BTreeMap<String, f64>,
    /// Wall-clock seconds spent on this image. Not part of any report.
    pub elapsed_secs: f64,
}

impl ImagePrediction {
    pub fn is_correct(&self) -> Option<bool> {
        self.true_label.as_ref().map(|t| *t == self.predicted)
    }

    /// Top vote count minus the runner-up's (0 when no runner-up exists).
    pub fn vote_margin(&self) -> usize {
        let mut counts: Vec<usize> = self.votes.values().copied().collect();
        counts.sort_unstable_by(|a, b| b.cmp(a));
        counts.first().copied().unwrap_or(0) - counts.get(1).copied().unwrap_or(0)
    }
}

/// Classifies every patch and takes the majority vote. Vote ties go to the
/// tied label with the smallest summed class residual, then to the smallest label.
pub fn classify_image(dict: &Dictionary, image: &Raster, rule: StoppingRule) -> Result<ImagePrediction> {
    let start = Instant::now();
    let patches = patch_vectors(image, &dict.grid)?;
    let tables = patches
        .par_iter()
        .zip(dict.per_patch.par_iter())
        .map(|(y, a)| {
            let code = omp_solve(a, y, rule)?;
            classify_patch(a, &code, y, &dict.masks)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut votes: BTreeMap<String, usize> = BTreeMap::new();
    let mut residual_totals: BTreeMap<String, f64> =
        dict.labels().map(|l| (l.to_string(), 0.0)).collect();
    let mut per_patch = Vec::with_capacity(tables.len());
    for (idx, table) in tables.into_iter().enumerate() {
        *votes.entry(table.predicted.clone()).or_default() += 1;
        for (label, r) in &table.entries {
            *residual_totals.get_mut(label).expect("label from masks") += r;
        }
        per_patch.push((idx, table.predicted));
    }

    let top = votes.values().copied().max().unwrap_or(0);
    let predicted = votes
        .iter()
        .filter(|(_, &v)| v == top)
        .map(|(l, _)| (l, residual_totals[l]))
        // BTreeMap order makes the first minimum the smallest label
        .fold(None::<(&String, f64)>, |best, cand| match best {
            Some(b) if b.1 <= cand.1 => Some(b),
            _ => Some(cand),
        })
        .map(|(l, _)| l.clone())
        .expect("at least one patch");

    Ok(ImagePrediction {
        image_id: None,
        true_label: None,
        predicted,
        votes,
        per_patch,
        residual_totals,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub grid: GridSpec,
    pub per_class: BTreeMap<String, ClassAccuracy>,
    pub global_accuracy: f64,
    pub n_images: usize,
    pub n_correct: usize,
    pub predictions: Vec<ImagePrediction>,
}

impl EvaluationReport {
    pub fn per_class_accuracy(&self) -> BTreeMap<&str, f64> {
        self.per_class
            .iter()
            .map(|(l, c)| (l.as_str(), c.accuracy))
            .collect()
    }

    pub fn mean_seconds_per_image(&self) -> f64 {
        self.predictions.iter().map(|p| p.elapsed_secs).sum::<f64>() / self.n_images as f64
    }
}

/// Classifies every test image and aggregates per-class and global accuracy.
/// Predictions keep the order of `test`.
pub fn evaluate(dict: &Dictionary, test: &[LabeledImage], rule: StoppingRule) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let predictions = test
        .par_iter()
        .map(|s| {
            let mut p = classify_image(dict, &s.image, rule)?;
            p.image_id = Some(s.id.clone());
            p.true_label = Some(s.label.clone());
            Ok(p)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut per_class: BTreeMap<String, ClassAccuracy> = BTreeMap::new();
    for (s, p) in test.iter().zip(&predictions) {
        let entry = per_class.entry(s.label.clone()).or_insert(ClassAccuracy {
            correct: 0,
            total: 0,
            accuracy: 0.0,
        });
        entry.total += 1;
        if p.predicted == s.label {
            entry.correct += 1;
        }
    }
    for c in per_class.values_mut() {
        c.accuracy = c.correct as f64 / c.total as f64;
    }
    let n_correct = per_class.values().map(|c| c.correct).sum();
    Ok(EvaluationReport {
        grid: dict.grid,
        per_class,
        global_accuracy: n_correct as f64 / test.len() as f64,
        n_images: test.len(),
        n_correct,
        predictions,
    })
}
